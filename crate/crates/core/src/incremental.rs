//! One minimizing-movements step.
//!
//! The set problem `min_E P_φ(E) + ∫_E g`, `g = sd^ψ_F / h − F_h`, is solved through its
//! convex relaxation in the form `min_u Σ φ(x, ∇⁺u) + (1/2h) Σ (u − h g)²`: every
//! sublevel set `{u < s}` minimizes `P_φ(E) + ∫_E (g − s/h)`, so thresholding `u` near
//! zero yields the minimal and maximal solutions. The saddle point
//! `min_u max_{φ°(ξ) ≤ 1} ⟨∇⁺u, ξ⟩ + (1/2h)‖u − hg‖²` is computed with the accelerated
//! primal-dual iteration; the dual field `ξ` calibrates the minimizers.

use alloc::vec;
use alloc::vec::Vec;

use crate::anisotropy::{AnisotropyModel, FrozenModel};
use crate::distance::{signed_distance, EikonalSettings};
use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::geom::{norm, Vec2};
use crate::grid::{Grid, ScalarField};
use crate::interface::{anisotropic_curvature, Interface, VertexIndex};
use crate::set::{Extent, SetState};
use crate::stats::Summary;
#[allow(unused_imports)]
use num_traits::Float;

/// Tolerances of one incremental solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    /// Relative primal-dual gap at which the iteration stops.
    pub gap_tolerance: f64,
    pub max_iterations: usize,
    /// Threshold `τ` on the relaxed variable `w`.
    pub threshold: f64,
    /// Midpoint samples of the forcing over one time step.
    pub forcing_samples: usize,
    pub eikonal: EikonalSettings,
}

impl Default for SolverSettings {
    fn default() -> Self {
        SolverSettings {
            gap_tolerance: 1e-6,
            max_iterations: 5000,
            threshold: 1e-3,
            forcing_samples: 4,
            eikonal: EikonalSettings::default(),
        }
    }
}

/// `min_E P_φ(E) + ∫_E g` on a grid.
#[derive(Clone, Debug)]
pub struct IncrementalProblem<'a> {
    pub phi: &'a FrozenModel<'a>,
    /// Affinity `g`, units of 1/length.
    pub g: ScalarField,
    pub h: f64,
    pub settings: SolverSettings,
}

impl IncrementalProblem<'_> {
    /// True when `g > 0` on every frame cell.
    pub fn is_coercive(&self) -> bool {
        let grid = *self.g.grid();
        (0..grid.len()).all(|k| {
            let (i, j) = grid.coords(k);
            grid.frame_distance(i, j) > 0 || self.g.data()[k] > 0.0
        })
    }
}

/// Output of [`solve_relaxed`].
#[derive(Clone, Debug, PartialEq)]
pub struct RelaxedSolution {
    /// Minimizer of the quadratic relaxation; its zero sublevel set is the step.
    pub u: ScalarField,
    /// Relaxed indicator in `[0, 1]`.
    pub w: ScalarField,
    /// Dual (calibration) field, `φ°(x, ξ) ≤ 1` on every cell.
    pub xi: Vec<Vec2>,
    pub gap: f64,
    pub iterations: usize,
    /// Half-width of the ramp that maps `u` to `w`.
    pub ramp: f64,
}

fn forward_gradient(u: &[f64], grid: &Grid, out: &mut [Vec2]) {
    let (nx, ny) = (grid.nx, grid.ny);
    let inv = 1.0 / grid.spacing;
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let gx = if i + 1 < nx { (u[k + 1] - u[k]) * inv } else { 0.0 };
            let gy = if j + 1 < ny { (u[k + nx] - u[k]) * inv } else { 0.0 };
            out[k] = [gx, gy];
        }
    }
}

/// Adjoint of [`forward_gradient`] (minus the discrete divergence).
fn gradient_adjoint(xi: &[Vec2], grid: &Grid, out: &mut [f64]) {
    let (nx, ny) = (grid.nx, grid.ny);
    let inv = 1.0 / grid.spacing;
    for j in 0..ny {
        for i in 0..nx {
            let k = j * nx + i;
            let mut div = 0.0;
            if i + 1 < nx {
                div += xi[k][0];
            }
            if i > 0 {
                div -= xi[k - 1][0];
            }
            if j + 1 < ny {
                div += xi[k][1];
            }
            if j > 0 {
                div -= xi[k - nx][1];
            }
            out[k] = -div * inv;
        }
    }
}

fn primal_energy(u: &[f64], data: &[f64], grad: &[Vec2], phi: &FrozenModel<'_>, h: f64) -> f64 {
    let mut acc = 0.0;
    for k in 0..u.len() {
        let p = grad[k];
        if p[0] != 0.0 || p[1] != 0.0 {
            acc += phi.at(k).value(p);
        }
        let r = u[k] - data[k];
        acc += 0.5 * r * r / h;
    }
    acc
}

fn dual_energy(data: &[f64], kt_xi: &[f64], h: f64) -> f64 {
    data.iter()
        .zip(kt_xi)
        .map(|(d, q)| d * q - 0.5 * h * q * q)
        .sum()
}

/// Solves the relaxed problem. The dual iterate starts from `∇_pφ(x, ∇⁺(hg))`, the exact
/// calibration of a distance-like datum.
pub fn solve_relaxed(prob: &IncrementalProblem<'_>) -> Result<RelaxedSolution> {
    let grid = *prob.g.grid();
    let n = grid.len();
    let h = prob.h;
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Input(alloc::format!("time step must be positive, got {h}")));
    }
    if prob.g.data().iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("affinity is not finite".into()));
    }
    let data: Vec<f64> = prob.g.data().iter().map(|v| h * v).collect();
    let phi = prob.phi;

    let mut grad = vec![[0.0; 2]; n];
    let mut xi = vec![[0.0; 2]; n];
    let mut warm = vec![f64::NAN; n];
    forward_gradient(&data, &grid, &mut grad);
    for k in 0..n {
        let p = grad[k];
        if norm(p) > 0.0 {
            xi[k] = phi.at(k).project_dual(phi.at(k).grad(p), &mut warm[k]);
        }
    }
    clear_unused_dual(&mut xi, &grid);

    let l = (8.0f64).sqrt() / grid.spacing;
    let gamma = 1.0 / h;
    let mut tau = 1.0 / l;
    let mut sigma = 1.0 / l;
    let mut u = data.clone();
    let mut u_prev = u.clone();
    let mut u_bar = u.clone();
    let mut kt = vec![0.0; n];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;
    let check_every = 10;

    while iterations < prob.settings.max_iterations {
        forward_gradient(&u_bar, &grid, &mut grad);
        for k in 0..n {
            let z = [xi[k][0] + sigma * grad[k][0], xi[k][1] + sigma * grad[k][1]];
            xi[k] = phi.at(k).project_dual(z, &mut warm[k]);
        }
        clear_unused_dual(&mut xi, &grid);
        gradient_adjoint(&xi, &grid, &mut kt);
        let a = tau / h;
        for k in 0..n {
            u_prev[k] = u[k];
            u[k] = (u[k] - tau * kt[k] + a * data[k]) / (1.0 + a);
        }
        let theta = 1.0 / (1.0 + 2.0 * gamma * tau).sqrt();
        tau *= theta;
        sigma /= theta;
        for k in 0..n {
            u_bar[k] = u[k] + theta * (u[k] - u_prev[k]);
        }
        iterations += 1;
        if iterations % check_every == 0 || iterations == prob.settings.max_iterations {
            forward_gradient(&u, &grid, &mut grad);
            let p = primal_energy(&u, &data, &grad, phi, h);
            let d = dual_energy(&data, &kt, h);
            gap = (p - d).max(0.0) / p.abs().max(d.abs()).max(f64::MIN_POSITIVE);
            if gap < prob.settings.gap_tolerance {
                break;
            }
        }
    }
    if !(gap < prob.settings.gap_tolerance) {
        return Err(Error::NotConverged {
            solver: "primal-dual",
            iterations,
            residual: gap,
        });
    }
    let ramp = 1e-3 * grid.spacing;
    let w: Vec<f64> = u
        .iter()
        .map(|v| ((ramp - v) / (2.0 * ramp)).clamp(0.0, 1.0))
        .collect();
    Ok(RelaxedSolution {
        u: ScalarField::from_vec(grid, u)?,
        w: ScalarField::from_vec(grid, w)?,
        xi,
        gap,
        iterations,
        ramp,
    })
}

/// Dual components paired with the zero Neumann differences carry no information.
fn clear_unused_dual(xi: &mut [Vec2], grid: &Grid) {
    for j in 0..grid.ny {
        xi[j * grid.nx + grid.nx - 1][0] = 0.0;
    }
    for i in 0..grid.nx {
        xi[(grid.ny - 1) * grid.nx + i][1] = 0.0;
    }
}

/// `(E_min, E_max) = ({w ≥ 1 − τ}, {w > τ})`, as level fields offset from `u`.
pub fn threshold(sol: &RelaxedSolution, tau: f64) -> (SetState, SetState) {
    // w ≥ 1 − τ ⇔ u ≤ −(1 − 2τ)·ramp and w > τ ⇔ u < (1 − 2τ)·ramp.
    let c = (1.0 - 2.0 * tau) * sol.ramp;
    let e_min = SetState::from_level(sol.u.map(|v| if v + c == 0.0 { -f64::MIN_POSITIVE } else { v + c }));
    let e_max = SetState::from_level(sol.u.map(|v| v - c));
    (e_min, e_max)
}

/// `F_h(x, t) = (1/h) ∫_t^{t+h} f(x, s) ds` by midpoint quadrature.
pub fn forcing_average(forcing: &Expr, grid: &Grid, t: f64, h: f64, samples: usize) -> ScalarField {
    let m = samples.max(1);
    if let Some(c) = forcing.as_const() {
        return ScalarField::constant(*grid, c);
    }
    if !forcing.depends_on(Var::T) {
        return ScalarField::from_fn(*grid, |x| forcing.eval(x[0], x[1], t));
    }
    ScalarField::from_fn(*grid, |x| {
        let mut acc = 0.0;
        for s in 0..m {
            let ts = t + (s as f64 + 0.5) * h / m as f64;
            acc += forcing.eval(x[0], x[1], ts);
        }
        acc / m as f64
    })
}

/// Per-step solver statistics.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepDiagnostics {
    pub iterations: usize,
    pub gap: f64,
    /// `|E_max \ E_min|` in cells.
    pub fattening_cells: usize,
    pub complement_scheme: bool,
    pub coercive: bool,
    pub eikonal_sweeps: usize,
}

#[derive(Clone, Debug)]
pub struct StepResult {
    pub e_min: SetState,
    pub e_max: SetState,
    pub relaxed: RelaxedSolution,
    /// `sd^ψ_F`.
    pub sd: ScalarField,
    /// `F_h(·, t)`.
    pub forcing: ScalarField,
    pub diagnostics: StepDiagnostics,
}

impl StepResult {
    pub fn is_extinct(&self) -> bool {
        self.e_min.cell_count() == 0
    }
}

/// Frozen models and forcing for repeated steps on one grid.
pub struct StepOperator<'a> {
    phi_model: &'a AnisotropyModel,
    phi: FrozenModel<'a>,
    phi_rev: FrozenModel<'a>,
    psi: FrozenModel<'a>,
    psi_rev: FrozenModel<'a>,
    forcing: &'a Expr,
    pub settings: SolverSettings,
}

impl<'a> StepOperator<'a> {
    pub fn new(
        grid: &Grid,
        phi: &'a AnisotropyModel,
        psi: &'a AnisotropyModel,
        forcing: &'a Expr,
        settings: SolverSettings,
    ) -> Result<StepOperator<'a>> {
        let phi_f = FrozenModel::new(phi, grid)?;
        let psi_f = FrozenModel::new(psi, grid)?;
        Ok(StepOperator {
            phi_model: phi,
            phi_rev: phi_f.reversed(),
            phi: phi_f,
            psi_rev: psi_f.reversed(),
            psi: psi_f,
            forcing,
            settings,
        })
    }

    pub fn phi(&self) -> &AnisotropyModel {
        self.phi_model
    }

    pub fn frozen_phi(&self) -> &FrozenModel<'a> {
        &self.phi
    }

    pub fn frozen_psi(&self) -> &FrozenModel<'a> {
        &self.psi
    }

    pub fn signed_distance(&self, set: &SetState) -> Result<(ScalarField, usize)> {
        let sd = signed_distance(set, &self.psi, &self.psi_rev, self.settings.eikonal)?;
        Ok((sd.values, sd.sweeps_outside + sd.sweeps_inside))
    }

    pub fn forcing_average(&self, grid: &Grid, t: f64, h: f64) -> ScalarField {
        forcing_average(self.forcing, grid, t, h, self.settings.forcing_samples)
    }

    /// `T^±_{h,t} F`. Sets whose complement is bounded go through
    /// `T^± F = (T̃^∓ F^c)^c` with the reversed anisotropies.
    pub fn step(&self, set: &SetState, h: f64, t: f64) -> Result<StepResult> {
        let grid = *set.grid();
        let (sd, sweeps) = self.signed_distance(set)?;
        let fh = self.forcing_average(&grid, t, h);
        let g = ScalarField::from_vec(
            grid,
            sd.data().iter().zip(fh.data()).map(|(d, f)| d / h - f).collect(),
        )?;
        let complement = set.extent() == Extent::CoBounded;
        let (e_min, e_max, relaxed, coercive) = if complement {
            // sd^ψ̃_{F^c} = −sd^ψ_F; the forcing acts on the complement with opposite sign.
            let prob = IncrementalProblem {
                phi: &self.phi_rev,
                g: g.map(|v| -v),
                h,
                settings: self.settings,
            };
            let sol = solve_relaxed(&prob)?;
            let (c_min, c_max) = threshold(&sol, self.settings.threshold);
            (c_max.complement(), c_min.complement(), sol, prob.is_coercive())
        } else {
            let prob = IncrementalProblem {
                phi: &self.phi,
                g,
                h,
                settings: self.settings,
            };
            let sol = solve_relaxed(&prob)?;
            let (a, b) = threshold(&sol, self.settings.threshold);
            (a, b, sol, prob.is_coercive())
        };
        let diagnostics = StepDiagnostics {
            iterations: relaxed.iterations,
            gap: relaxed.gap,
            fattening_cells: e_max.cells_not_in(&e_min),
            complement_scheme: complement,
            coercive,
            eikonal_sweeps: sweeps,
        };
        Ok(StepResult {
            e_min,
            e_max,
            relaxed,
            sd,
            forcing: fh,
            diagnostics,
        })
    }

    /// `P_φ(E) + ∫_E (sd/h − F_h)` with boundary quadrature and subcell coverage.
    pub fn energy(&self, set: &SetState, sd: &ScalarField, forcing: &ScalarField, h: f64) -> Result<f64> {
        let per = perimeter(set, self.phi_model)?;
        let cov = set.coverage();
        let vol: f64 = cov
            .iter()
            .zip(sd.data().iter().zip(forcing.data()))
            .map(|(c, (d, f))| c * (d / h - f))
            .sum();
        Ok(per + vol * set.grid().cell_area())
    }

    /// Checks `P_φ(E) + (1/h)∫_{E△F}|sd_F| ≤ P_φ(F) + ∫_{E\F}F_h − ∫_{F\E}F_h`.
    pub fn dissipation_check(&self, from: &SetState, step: &StepResult, h: f64) -> Result<DissipationReport> {
        let e = &step.e_min;
        let cf = from.coverage();
        let ce = e.coverage();
        let da = from.grid().cell_area();
        let mut dissipation = 0.0;
        let mut forcing_gain = 0.0;
        for k in 0..cf.len() {
            let diff = ce[k] - cf[k];
            dissipation += diff.abs() * step.sd.data()[k].abs();
            forcing_gain += diff * step.forcing.data()[k];
        }
        let p_new = perimeter(e, self.phi_model)?;
        let p_old = perimeter(from, self.phi_model)?;
        let lhs = p_new + dissipation * da / h;
        let rhs = p_old + forcing_gain * da;
        Ok(DissipationReport {
            perimeter_before: p_old,
            perimeter_after: p_new,
            dissipation: dissipation * da / h,
            forcing_work: forcing_gain * da,
            slack: lhs - rhs,
        })
    }

    /// `r = H^φ_E + sd^ψ_F / h − F_h` on the interface of `E_min`.
    pub fn euler_lagrange_residual(&self, step: &StepResult, h: f64) -> Result<Option<Summary>> {
        let e = &step.e_min;
        let grid = *e.grid();
        let iface = Interface::extract(e);
        let segs = iface.segments();
        if segs.len() < 8 {
            return Ok(None);
        }
        let index = VertexIndex::new(&iface, 5.0 * grid.spacing);
        let mut res = Vec::with_capacity(segs.len());
        for s in &segs {
            let Some(fit) = index.fit(s.mid, s.normal, grid.spacing) else { continue };
            let x = [s.mid[0] + fit.offset * fit.normal[0], s.mid[1] + fit.offset * fit.normal[1]];
            let hphi = anisotropic_curvature(self.phi_model, x, fit.normal, fit.curvature)?;
            res.push(hphi + step.sd.sample(x) / h - step.forcing.sample(x));
        }
        if res.len() < 8 {
            return Ok(None);
        }
        Ok(Some(Summary::of_abs(&res)))
    }
}

/// Quantities of the discrete dissipation inequality; `slack > 0` means it is violated.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DissipationReport {
    pub perimeter_before: f64,
    pub perimeter_after: f64,
    pub dissipation: f64,
    pub forcing_work: f64,
    pub slack: f64,
}

/// `P_φ(E)` by midpoint quadrature over the marching-squares interface.
pub fn perimeter(set: &SetState, phi: &AnisotropyModel) -> Result<f64> {
    Interface::extract(set).perimeter(phi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anisotropy::Family;
    use crate::set::Shape;
    use core::f64::consts::PI;

    fn euclid() -> AnisotropyModel {
        AnisotropyModel::euclidean()
    }

    fn zero() -> Expr {
        Expr::Const(0.0)
    }

    fn radial_root(r0: f64, h: f64) -> f64 {
        (r0 + (r0 * r0 - 4.0 * h).sqrt()) / 2.0
    }

    #[test]
    fn positive_affinity_gives_empty_set() {
        let g = Grid::unit(32);
        let m = euclid();
        let f = FrozenModel::new(&m, &g).unwrap();
        let prob = IncrementalProblem {
            phi: &f,
            g: ScalarField::constant(g, 1.0),
            h: 1e-3,
            settings: SolverSettings::default(),
        };
        let sol = solve_relaxed(&prob).unwrap();
        assert!(sol.w.data().iter().all(|&w| w == 0.0));
        let (a, b) = threshold(&sol, 1e-3);
        assert_eq!(a.cell_count(), 0);
        assert_eq!(b.cell_count(), 0);
    }

    /// Radial oracle: minimize `2πr + ∫_{B_r} g` over concentric disks.
    fn radial_minimizer(rb: f64, a: f64) -> f64 {
        let mut best = (0.0, 0.0);
        for s in 1..=4000 {
            let r = 0.5 * s as f64 / 4000.0;
            let inner = PI * r.min(rb).powi(2);
            let outer = PI * r * r - inner;
            let e = 2.0 * PI * r - a * inner + a * outer;
            if e < best.1 {
                best = (r, e);
            }
        }
        best.0
    }

    #[test]
    fn blob_against_radial_search() {
        // Flat data leaves the dual undetermined inside the blob, so the gap closes slowly.
        let g = Grid::unit(80);
        let m = euclid();
        let f = FrozenModel::new(&m, &g).unwrap();
        for (rb, a) in [(0.25, 12.0), (0.25, 6.0)] {
            let aff = ScalarField::from_fn(g, |x| {
                if norm([x[0] - 0.5, x[1] - 0.5]) < rb { -a } else { a }
            });
            let prob = IncrementalProblem { phi: &f, g: aff, h: 1e-3, settings: SolverSettings { max_iterations: 100000, ..SolverSettings::default() } };
            let sol = solve_relaxed(&prob).unwrap();
            let (e_min, _) = threshold(&sol, 1e-3);
            let expected = radial_minimizer(rb, a);
            let got = if e_min.cell_count() == 0 { 0.0 } else { e_min.equivalent_radius() };
            assert!((got - expected).abs() < 2.0 * g.spacing, "{rb} {a}: {got} vs {expected}");
        }
    }

    #[test]
    fn solution_is_feasible() {
        let g = Grid::unit(64);
        let m = AnisotropyModel::new(Family::SmoothedLp { exponent: 4.0, epsilon: 0.1 }).unwrap();
        let forcing = zero();
        let op = StepOperator::new(&g, &m, &m, &forcing, SolverSettings::default()).unwrap();
        let s = SetState::from_shape(g, &Shape::disk([0.5, 0.5], 0.25));
        let r = op.step(&s, 1e-3, 0.0).unwrap();
        for (k, xi) in r.relaxed.xi.iter().enumerate() {
            assert!(op.frozen_phi().at(k).polar(*xi) <= 1.0 + 1e-9);
        }
        assert!(r.relaxed.w.data().iter().all(|w| (0.0..=1.0).contains(w)));
        assert!(r.relaxed.gap < 1e-6);
        assert!(r.e_min.cells_not_in(&r.e_max) == 0);
    }

    #[test]
    fn half_plane_is_stationary() {
        let g = Grid::unit(64);
        let m = euclid();
        let forcing = zero();
        let op = StepOperator::new(&g, &m, &m, &forcing, SolverSettings::default()).unwrap();
        let s = SetState::from_shape(g, &Shape::HalfPlane { normal: [1.0, 0.0], offset: 0.5 });
        let r = op.step(&s, 1e-3, 0.0).unwrap();
        assert_eq!(r.e_min.cell_symmetric_difference(&s), 0);
        // Only the thresholding ramp offsets the interface from the datum's zero level.
        assert!(op.euler_lagrange_residual(&r, 1e-3).unwrap().unwrap().max < 0.1);
    }

    #[test]
    fn disk_step_and_diagnostics() {
        let g = Grid::unit(256);
        let m = euclid();
        let forcing = zero();
        let op = StepOperator::new(&g, &m, &m, &forcing, SolverSettings::default()).unwrap();
        let (r0, h) = (0.3, 2.5e-4);
        let s = SetState::from_shape(g, &Shape::disk([0.5, 0.5], r0));
        let p = perimeter(&s, &m).unwrap();
        assert!((p / (2.0 * PI * r0) - 1.0).abs() < 0.01, "{p}");
        let r = op.step(&s, h, 0.0).unwrap();
        let rho = r.e_min.equivalent_radius();
        assert!((rho - radial_root(r0, h)).abs() < 2.0 * g.spacing, "{rho}");
        let el = op.euler_lagrange_residual(&r, h).unwrap().unwrap();
        assert!(el.median <= 0.15 / r0, "{el:?}");
        let e_new = op.energy(&r.e_min, &r.sd, &r.forcing, h).unwrap();
        let e_old = op.energy(&s, &r.sd, &r.forcing, h).unwrap();
        assert!(e_new <= e_old, "{e_new} {e_old}");
        let d = op.dissipation_check(&s, &r, h).unwrap();
        assert!(d.slack <= 0.02 * p, "{d:?}");
    }

    #[test]
    fn small_disk_goes_extinct() {
        let g = Grid::unit(128);
        let m = euclid();
        let forcing = zero();
        let op = StepOperator::new(&g, &m, &m, &forcing, SolverSettings::default()).unwrap();
        let h = 4e-3;
        let r0 = 0.1; // r0² = 0.01 < 4h
        let mut s = SetState::from_shape(g, &Shape::disk([0.5, 0.5], r0));
        let mut steps = 0;
        while steps < 3 {
            let r = op.step(&s, h, 0.0).unwrap();
            steps += 1;
            if r.is_extinct() {
                break;
            }
            s = r.e_min;
        }
        assert!(steps < 3, "not extinct after {steps} steps");
    }

    #[test]
    fn translation_commutes_with_step() {
        let g = Grid::unit(96);
        let m = AnisotropyModel::new(Family::riemannian_const([[2.0, 0.3], [0.3, 1.0]])).unwrap();
        let forcing = Expr::Const(1.0);
        let op = StepOperator::new(&g, &m, &m, &forcing, SolverSettings::default()).unwrap();
        let shape = |c: Vec2| Shape::Ellipse { center: c, semi_axes: [0.2, 0.12], angle: 0.4 };
        let a = op.step(&SetState::from_shape(g, &shape([0.45, 0.5])), 1e-3, 0.0).unwrap();
        let b = op.step(&SetState::from_shape(g, &shape([0.45 + 10.0 * g.spacing, 0.5])), 1e-3, 0.0).unwrap();
        let mut mismatched = 0;
        for j in 0..g.ny {
            for i in 0..g.nx - 10 {
                if a.e_min.contains(i, j) != b.e_min.contains(i + 10, j) {
                    mismatched += 1;
                }
            }
        }
        // Bounded by one cell of boundary displacement.
        let boundary_cells = Interface::extract(&a.e_min).length() / g.spacing;
        assert!((mismatched as f64) < boundary_cells, "{mismatched}");
    }

    #[test]
    fn complement_scheme_matches_direct_solve() {
        let g = Grid::unit(64);
        let m = AnisotropyModel::new(Family::Drifted { drift: [0.3, 0.1] }).unwrap();
        let forcing = Expr::Const(2.0);
        let op = StepOperator::new(&g, &m, &m, &forcing, SolverSettings::default()).unwrap();
        let hole = SetState::from_shape(g, &Shape::Complement(alloc::boxed::Box::new(Shape::disk([0.5, 0.5], 0.2))));
        assert_eq!(hole.extent(), Extent::CoBounded);
        let via = op.step(&hole, 1e-3, 0.0).unwrap();
        assert!(via.diagnostics.complement_scheme);
        // Direct relaxed solve of the same problem.
        let g_aff = ScalarField::from_vec(
            g,
            via.sd.data().iter().zip(via.forcing.data()).map(|(d, f)| d / 1e-3 - f).collect(),
        )
        .unwrap();
        let prob = IncrementalProblem { phi: op.frozen_phi(), g: g_aff, h: 1e-3, settings: SolverSettings::default() };
        let direct = solve_relaxed(&prob).unwrap();
        let (d_min, d_max) = threshold(&direct, 1e-3);
        assert!(via.e_min.cell_symmetric_difference(&d_min) <= 2);
        assert!(via.e_max.cell_symmetric_difference(&d_max) <= 2);
    }

    #[test]
    fn nested_inputs_give_nested_outputs() {
        let g = Grid::unit(96);
        let m = AnisotropyModel::new(Family::SmoothedLp { exponent: 3.0, epsilon: 0.05 }).unwrap();
        let forcing = Expr::parse("2*sin(6*x)").unwrap();
        let op = StepOperator::new(&g, &m, &m, &forcing, SolverSettings::default()).unwrap();
        let small = SetState::from_shape(g, &Shape::disk([0.48, 0.5], 0.15));
        let big = SetState::from_shape(g, &Shape::disk([0.5, 0.5], 0.25));
        assert_eq!(small.cells_not_in(&big), 0);
        let a = op.step(&small, 1e-3, 0.0).unwrap();
        let b = op.step(&big, 1e-3, 0.0).unwrap();
        assert_eq!(a.e_min.cells_not_in(&b.e_min), 0);
        assert_eq!(a.e_max.cells_not_in(&b.e_max), 0);
    }

    #[test]
    fn forcing_average_is_exact_for_linear_time() {
        let g = Grid::unit(8);
        let f = Expr::parse("x + 2*t").unwrap();
        let fh = forcing_average(&f, &g, 0.5, 0.1, 4);
        for k in 0..g.len() {
            let x = g.center_of(k);
            assert!((fh.data()[k] - (x[0] + 2.0 * 0.55)).abs() < 1e-12);
        }
    }
}
