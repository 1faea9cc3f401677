//! Executable forms of the weak curvature identity, the distributional flow laws and
//! the geometric comparison lemmas.
//!
//! Weak curvature is fitted by least squares: with test fields `X = b e_d` built from
//! tensor-product cubic B-splines `b` on two lattices, the identity
//! `∫_{∂E} div_φ X = ∫_{∂E} H^φ ν·X` with the full first variation
//! `div_φ X = ∇ₓφ·X + φ div_τ X − (∇_pφ·τ)(ν·DX τ)`
//! is assembled by midpoint quadrature on the marching-squares interface, and `H^φ` is
//! expanded in cubic B-splines of arc length along each interface curve.

use alloc::vec;
use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::anisotropy::AnisotropyModel;
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::flow::FlowTrace;
use crate::geom::{dot, perp, sub, Mat2, Vec2};
use crate::interface::{anisotropic_curvature, Interface, Segment, VertexIndex};
use crate::set::{SetState, Shape};
#[allow(unused_imports)]
use num_traits::Float;

/// Minimum number of interface segments for a weak fit.
pub const MIN_SEGMENTS: usize = 32;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeakSettings {
    /// Knot and fine test-lattice spacing in grid cells; the coarse lattice doubles it.
    pub spacing_cells: f64,
    /// Test fields with interface mass below `min_mass · spacing` are dropped.
    pub min_mass: f64,
}

impl Default for WeakSettings {
    fn default() -> Self {
        WeakSettings {
            spacing_cells: 4.0,
            min_mass: 0.05,
        }
    }
}

/// `β(t)`, the cubic B-spline supported on `[−2, 2]`, and `β'(t)`.
fn bspline(t: f64) -> (f64, f64) {
    let a = t.abs();
    let s = t.signum();
    if a < 1.0 {
        ((4.0 - 6.0 * a * a + 3.0 * a * a * a) / 6.0, s * (-12.0 * a + 9.0 * a * a) / 6.0)
    } else if a < 2.0 {
        let r = 2.0 - a;
        (r * r * r / 6.0, -s * r * r / 2.0)
    } else {
        (0.0, 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Lattice {
    origin: Vec2,
    spacing: f64,
    nx: i64,
    ny: i64,
}

impl Lattice {
    fn covering(lo: Vec2, hi: Vec2, spacing: f64) -> Lattice {
        let nx = ((hi[0] - lo[0]) / spacing).ceil() as i64 + 1;
        let ny = ((hi[1] - lo[1]) / spacing).ceil() as i64 + 1;
        Lattice { origin: lo, spacing, nx, ny }
    }

    fn len(&self) -> usize {
        (self.nx * self.ny) as usize
    }

    /// Nonzero basis functions at `x`: `(node, b, ∇b)`.
    fn eval(&self, x: Vec2, out: &mut Vec<(usize, f64, Vec2)>) {
        out.clear();
        let s = self.spacing;
        let fx = (x[0] - self.origin[0]) / s;
        let fy = (x[1] - self.origin[1]) / s;
        let (ix, iy) = (fx.floor() as i64, fy.floor() as i64);
        for j in iy - 1..=iy + 2 {
            if j < 0 || j >= self.ny {
                continue;
            }
            let (by, dby) = bspline(fy - j as f64);
            if by == 0.0 {
                continue;
            }
            for i in ix - 1..=ix + 2 {
                if i < 0 || i >= self.nx {
                    continue;
                }
                let (bx, dbx) = bspline(fx - i as f64);
                if bx == 0.0 {
                    continue;
                }
                out.push(((j * self.nx + i) as usize, bx * by, [dbx * by / s, bx * dby / s]));
            }
        }
    }
}

/// One interface quadrature point of a fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvatureSample {
    pub x: Vec2,
    /// Outward unit normal.
    pub normal: Vec2,
    pub length: f64,
    pub h_phi: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WeakCurvatureFit {
    /// One per interface segment, in extraction order.
    pub samples: Vec<CurvatureSample>,
    pub knot_spacing: f64,
    pub unknowns: usize,
    pub test_fields: usize,
    /// `‖Ac − r‖ / ‖r‖` of the weak identity.
    pub residual: f64,
}

impl WeakCurvatureFit {
    /// Fitted `H^φ` at the sample nearest to `x`.
    pub fn eval(&self, x: Vec2) -> Option<f64> {
        self.samples
            .iter()
            .map(|s| (dot(sub(s.x, x), sub(s.x, x)), s.h_phi))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, h)| h)
    }

    /// Length-weighted `(∫ (H^φ)²)^{1/2}`.
    pub fn l2(&self) -> f64 {
        self.samples.iter().map(|s| s.length * s.h_phi * s.h_phi).sum::<f64>().sqrt()
    }
}

/// Arc-length B-spline expansion of `H^φ` along one polyline.
#[derive(Clone, Copy, Debug)]
struct CurveBasis {
    offset: usize,
    knots: usize,
    spacing: f64,
    closed: bool,
}

impl CurveBasis {
    fn len(&self) -> usize {
        if self.closed {
            self.knots
        } else {
            self.knots + 3
        }
    }

    /// Normalised basis values at arc length `sigma`: `(unknown, value)`.
    fn eval(&self, sigma: f64, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let t = sigma / self.spacing;
        let base = t.floor() as i64;
        for j in base - 1..=base + 2 {
            let b = bspline(t - j as f64).0;
            if b == 0.0 {
                continue;
            }
            let local = if self.closed {
                j.rem_euclid(self.knots as i64) as usize
            } else {
                // Knot j ∈ [−1, knots + 1] maps to 0..knots + 3.
                (j + 1) as usize
            };
            out.push((self.offset + local, b));
        }
        let sum: f64 = out.iter().map(|e| e.1).sum();
        for e in out.iter_mut() {
            e.1 /= sum;
        }
    }
}

struct Quadrature {
    seg: Segment,
    phi: f64,
    grad_x: Vec2,
    /// `∇_pφ(x, ν)·τ`.
    grad_p_tau: f64,
}

fn quadrature(segments: Vec<Segment>, phi: &AnisotropyModel) -> Result<Vec<Quadrature>> {
    segments
        .into_iter()
        .filter(|s| s.length > 0.0)
        .map(|seg| {
            Ok(Quadrature {
                phi: phi.eval(seg.mid, seg.normal)?,
                grad_x: phi.grad_x(seg.mid, seg.normal)?,
                grad_p_tau: dot(phi.grad_p(seg.mid, seg.normal)?, perp(seg.normal)),
                seg,
            })
        })
        .collect()
}

/// Least-squares weak φ-curvature of `set`.
pub fn weak_curvature(set: &SetState, phi: &AnisotropyModel, settings: &WeakSettings) -> Result<WeakCurvatureFit> {
    let interface = Interface::extract(set);
    let segments = interface.segments();
    if segments.len() < MIN_SEGMENTS {
        return Err(Error::Numeric(alloc::format!(
            "weak curvature needs at least {MIN_SEGMENTS} interface segments, found {}",
            segments.len()
        )));
    }
    let quad = quadrature(segments, phi)?;
    let grid = set.grid();
    let s = settings.spacing_cells * grid.spacing;

    let mut lengths = vec![0.0; interface.polylines.len()];
    for q in &quad {
        lengths[q.seg.polyline] += q.seg.length;
    }
    let mut curves = Vec::with_capacity(lengths.len());
    let mut unknowns = 0;
    for (pl, &len) in interface.polylines.iter().zip(&lengths) {
        let knots = ((len / s).round() as usize).max(4);
        let c = CurveBasis {
            offset: unknowns,
            knots,
            spacing: len / knots as f64,
            closed: pl.closed,
        };
        unknowns += c.len();
        curves.push(c);
    }

    let lo = [grid.origin[0] - 2.0 * s, grid.origin[1] - 2.0 * s];
    let ext = grid.extents();
    let hi = [grid.origin[0] + ext[0] + 2.0 * s, grid.origin[1] + ext[1] + 2.0 * s];
    let lattices = [Lattice::covering(lo, hi, s), Lattice::covering(lo, hi, 2.0 * s)];
    let mut buf = Vec::with_capacity(16);
    let mut tests: Vec<Vec<Option<usize>>> = Vec::with_capacity(2);
    let mut n_tests = 0;
    for lat in &lattices {
        let mut mass = vec![0.0; lat.len()];
        for q in &quad {
            lat.eval(q.seg.mid, &mut buf);
            for &(n, b, _) in &buf {
                mass[n] += b * q.seg.length;
            }
        }
        let idx = mass
            .iter()
            .map(|&m| {
                (m >= settings.min_mass * lat.spacing).then(|| {
                    n_tests += 2;
                    n_tests - 2
                })
            })
            .collect();
        tests.push(idx);
    }
    if n_tests < unknowns {
        return Err(Error::Numeric("weak curvature test space is too small".into()));
    }

    let mut a = DMatrix::<f64>::zeros(n_tests, unknowns);
    let mut r = DVector::<f64>::zeros(n_tests);
    let mut hb = Vec::with_capacity(4);
    for q in &quad {
        let (x, nu, len) = (q.seg.mid, q.seg.normal, q.seg.length);
        curves[q.seg.polyline].eval(q.seg.arclength, &mut hb);
        for (lat, idx) in lattices.iter().zip(&tests) {
            lat.eval(x, &mut buf);
            for &(n, b, g) in &buf {
                let Some(row0) = idx[n] else { continue };
                let ng = dot(nu, g);
                let tg = dot(perp(nu), g);
                for d in 0..2 {
                    let div_tau = g[d] - nu[d] * ng;
                    let turn = q.grad_p_tau * nu[d] * tg;
                    r[row0 + d] += len * (q.grad_x[d] * b + q.phi * div_tau - turn);
                    let w = len * b * nu[d];
                    for &(m, bm) in &hb {
                        a[(row0 + d, m)] += w * bm;
                    }
                }
            }
        }
    }

    let mut ata = a.transpose() * &a;
    let atr = a.transpose() * &r;
    let ridge = 1e-10 * (0..unknowns).map(|i| ata[(i, i)]).sum::<f64>() / unknowns as f64;
    for i in 0..unknowns {
        ata[(i, i)] += ridge;
    }
    let c = ata
        .cholesky()
        .ok_or_else(|| Error::Numeric("weak curvature normal equations are singular".into()))?
        .solve(&atr);
    let rn = r.norm();
    let residual = if rn > 0.0 { (&a * &c - &r).norm() / rn } else { 0.0 };

    let samples = quad
        .iter()
        .map(|q| {
            curves[q.seg.polyline].eval(q.seg.arclength, &mut hb);
            CurvatureSample {
                x: q.seg.mid,
                normal: q.seg.normal,
                length: q.seg.length,
                h_phi: hb.iter().map(|&(m, b)| c[m] * b).sum(),
            }
        })
        .collect();
    Ok(WeakCurvatureFit {
        samples,
        knot_spacing: s,
        unknowns,
        test_fields: n_tests,
        residual,
    })
}

/// Pointwise `H^φ = tr ∇ₓ∇_pφ + κ τ·∇²_pφ τ` from a local quadratic fit of the interface
/// at each weak-fit sample.
pub fn pointwise_curvature(set: &SetState, phi: &AnisotropyModel, fit: &WeakCurvatureFit) -> Result<Vec<Option<f64>>> {
    let spacing = set.grid().spacing;
    let index = VertexIndex::new(&Interface::extract(set), 5.0 * spacing);
    fit.samples
        .iter()
        .map(|s| match index.fit(s.x, s.normal, spacing) {
            Some(local) => anisotropic_curvature(phi, s.x, local.normal, local.curvature).map(Some),
            None => Ok(None),
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CurvatureAgreement {
    /// `‖H_weak − H_ref‖₂ / ‖H_ref‖₂`, length weighted.
    pub relative_l2: f64,
    /// `max |H_weak − H_ref| / ‖H_ref‖_∞`.
    pub relative_max: f64,
    pub compared: usize,
}

/// Compares the weak fit with reference values (one per sample, `None` skipped).
pub fn curvature_agreement(fit: &WeakCurvatureFit, reference: &[Option<f64>]) -> CurvatureAgreement {
    let (mut num, mut den, mut worst, mut top, mut compared) = (0.0, 0.0, 0.0f64, 0.0f64, 0);
    for (s, r) in fit.samples.iter().zip(reference) {
        let Some(r) = r else { continue };
        let d = s.h_phi - r;
        num += s.length * d * d;
        den += s.length * r * r;
        worst = worst.max(d.abs());
        top = top.max(r.abs());
        compared += 1;
    }
    CurvatureAgreement {
        relative_l2: if den > 0.0 { (num / den).sqrt() } else { 0.0 },
        relative_max: if top > 0.0 { worst / top } else { 0.0 },
        compared,
    }
}

/// Weak fit and its pointwise cross-check on one set.
pub fn curvature_cross_check(
    set: &SetState,
    phi: &AnisotropyModel,
    settings: &WeakSettings,
) -> Result<(WeakCurvatureFit, CurvatureAgreement)> {
    let fit = weak_curvature(set, phi, settings)?;
    let pointwise = pointwise_curvature(set, phi, &fit)?;
    let agreement = curvature_agreement(&fit, &pointwise);
    Ok((fit, agreement))
}

/// Space-time test function `η(x, t) = ρ(x) τ(t)`.
#[derive(Clone, Debug, PartialEq)]
pub enum TestFunction {
    Zero,
    /// `ρ = (1 − |x − c|²/a²)³₊`.
    Bump { center: Vec2, radius: f64, time: TimeProfile },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TimeProfile {
    Constant,
    /// `1 − t/T`.
    Linear { horizon: f64 },
    /// `cos(πt/(2T))`.
    Cosine { horizon: f64 },
}

impl TestFunction {
    /// `(η, ∂ₜη)`.
    pub fn eval(&self, x: Vec2, t: f64) -> (f64, f64) {
        match self {
            TestFunction::Zero => (0.0, 0.0),
            TestFunction::Bump { center, radius, time } => {
                let d = sub(x, *center);
                let q = 1.0 - dot(d, d) / (radius * radius);
                let rho = if q > 0.0 { q * q * q } else { 0.0 };
                let (tau, _) = time.eval(t);
                (rho * tau, rho * time.eval(t).1)
            }
        }
    }

    pub fn value(&self, x: Vec2, t: f64) -> f64 {
        self.eval(x, t).0
    }
}

impl TimeProfile {
    fn eval(&self, t: f64) -> (f64, f64) {
        match *self {
            TimeProfile::Constant => (1.0, 0.0),
            TimeProfile::Linear { horizon } => (1.0 - t / horizon, -1.0 / horizon),
            TimeProfile::Cosine { horizon } => {
                let w = core::f64::consts::FRAC_PI_2 / horizon;
                ((w * t).cos(), -w * (w * t).sin())
            }
        }
    }
}

/// A default battery: radial bumps about `center` plus two off-centre bumps.
pub fn default_battery(center: Vec2, radius: f64, horizon: f64) -> Vec<TestFunction> {
    let mut out = Vec::new();
    for time in [
        TimeProfile::Constant,
        TimeProfile::Linear { horizon },
        TimeProfile::Cosine { horizon },
    ] {
        out.push(TestFunction::Bump { center, radius: 1.5 * radius, time });
    }
    for off in [[0.6, 0.0], [0.0, -0.6]] {
        out.push(TestFunction::Bump {
            center: [center[0] + off[0] * radius, center[1] + off[1] * radius],
            radius: 0.8 * radius,
            time: TimeProfile::Linear { horizon },
        });
    }
    out
}

/// Both sides of one law and their relative defect.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LawBalance {
    pub lhs: f64,
    pub rhs: f64,
    /// `|lhs − rhs| / max(|lhs|, |rhs|)`, 0 when both vanish.
    pub defect: f64,
}

impl LawBalance {
    fn new(lhs: f64, rhs: f64) -> LawBalance {
        let scale = lhs.abs().max(rhs.abs());
        LawBalance {
            lhs,
            rhs,
            defect: if scale > 0.0 { (lhs - rhs).abs() / scale } else { 0.0 },
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct DistributionalReport {
    /// `−∫∫ v η = ∫∫ (H^φ − f) η`, one entry per test function.
    pub curvature_law: Vec<LawBalance>,
    /// `∫∫_{E_t} ∂ₜη + ∫_{E₀} η(0) − ∫_{E_T} η(T) = −∫∫ ψ(x, ν) v η`.
    pub velocity_law: Vec<LawBalance>,
    /// `∫∫ v_h²` over the boundaries.
    pub velocity_l2: f64,
    /// `∫∫ (H^φ)²` over the boundaries.
    pub curvature_l2: f64,
}

impl DistributionalReport {
    pub fn max_curvature_defect(&self) -> f64 {
        self.curvature_law.iter().map(|b| b.defect).fold(0.0, f64::max)
    }

    pub fn max_velocity_defect(&self) -> f64 {
        self.velocity_law.iter().map(|b| b.defect).fold(0.0, f64::max)
    }
}

/// Evaluates both distributional laws on a trace recorded at every step with boundary
/// samples. `E_t` is taken piecewise constant, `E_t = E_{(k−1)h}` on `[(k−1)h, kh)`;
/// `f` is sampled at mid-step.
pub fn distributional_laws_check(
    trace: &FlowTrace,
    phi: &AnisotropyModel,
    psi: &AnisotropyModel,
    forcing: &Expr,
    tests: &[TestFunction],
    settings: &WeakSettings,
) -> Result<DistributionalReport> {
    let n = trace.records.len();
    if n < 3 {
        return Err(Error::Input("distributional laws need at least 3 steps".into()));
    }
    if trace.states.len() != n + 1 || trace.records.iter().any(|r| r.boundary.is_empty()) {
        return Err(Error::Input(
            "distributional laws need every step recorded with boundary samples".into(),
        ));
    }
    let h = trace.h;
    let grid = *trace.states[0].grid();
    let da = grid.cell_area();
    let mut curv = vec![(0.0, 0.0); tests.len()];
    let mut vel = vec![(0.0, 0.0); tests.len()];
    let (mut v2, mut h2) = (0.0, 0.0);

    let cov: Vec<Vec<f64>> = trace.states.iter().map(|s| s.coverage()).collect();
    for (ti, eta) in tests.iter().enumerate() {
        let mut lhs = 0.0;
        for k in 1..=n {
            let t = trace.times[k];
            for (idx, (a, b)) in cov[k - 1].iter().zip(&cov[k]).enumerate() {
                if a != b {
                    lhs += (a - b) * eta.value(grid.center_of(idx), t) * da;
                }
            }
        }
        vel[ti].0 = lhs;
    }

    for (k, rec) in trace.records.iter().enumerate() {
        let t = trace.times[k + 1];
        let fit = weak_curvature(&trace.states[k + 1], phi, settings)?;
        let f_mid = t - 0.5 * h;
        for s in &rec.boundary {
            let hv = fit.eval(s.x).unwrap_or(f64::NAN);
            if !hv.is_finite() {
                return Err(Error::Numeric(alloc::format!(
                    "no weak curvature at a boundary sample of step {}",
                    rec.step
                )));
            }
            let f = forcing.eval(s.x[0], s.x[1], f_mid);
            let mob = psi.eval(s.x, s.normal)?;
            v2 += h * s.length * s.v * s.v;
            h2 += h * s.length * hv * hv;
            for (ti, eta) in tests.iter().enumerate() {
                let e = eta.value(s.x, t);
                if e == 0.0 {
                    continue;
                }
                curv[ti].0 -= h * s.length * s.v * e;
                curv[ti].1 += h * s.length * (hv - f) * e;
                vel[ti].1 -= h * s.length * mob * s.v * e;
            }
        }
    }
    Ok(DistributionalReport {
        curvature_law: curv.into_iter().map(|(a, b)| LawBalance::new(a, b)).collect(),
        velocity_law: vel.into_iter().map(|(a, b)| LawBalance::new(a, b)).collect(),
        velocity_l2: v2,
        curvature_l2: h2,
    })
}

/// Gradient and Hessian of a smooth function by central differences with step `eps`.
fn derivatives(f: impl Fn(Vec2) -> f64, x: Vec2, eps: f64) -> (Vec2, Mat2) {
    let e = |dx: f64, dy: f64| f([x[0] + dx, x[1] + dy]);
    let c = e(0.0, 0.0);
    let g = [(e(eps, 0.0) - e(-eps, 0.0)) / (2.0 * eps), (e(0.0, eps) - e(0.0, -eps)) / (2.0 * eps)];
    let hxx = (e(eps, 0.0) - 2.0 * c + e(-eps, 0.0)) / (eps * eps);
    let hyy = (e(0.0, eps) - 2.0 * c + e(0.0, -eps)) / (eps * eps);
    let hxy = (e(eps, eps) - e(eps, -eps) - e(-eps, eps) + e(-eps, -eps)) / (4.0 * eps * eps);
    (g, [[hxx, hxy], [hxy, hyy]])
}

/// φ-curvature of the shape boundary through `x` from its level function.
pub fn shape_curvature(phi: &AnisotropyModel, shape: &Shape, x: Vec2) -> Result<f64> {
    // The shape is {level < 0}, the superlevel set of −level.
    let (g, hs) = derivatives(|y| -shape.level(y), x, 1e-4);
    phi.curvature(x, g, hs)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonotonicityReport {
    pub h_inner: f64,
    pub h_outer: f64,
    /// Distance of the touching point from both boundaries.
    pub contact_gap: f64,
    /// `H_outer ≤ H_inner + tolerance`.
    pub holds: bool,
}

/// Compares the curvatures of `inner ⊆ outer` at a common boundary point.
pub fn monotonicity_check(phi: &AnisotropyModel, inner: &Shape, outer: &Shape, x: Vec2) -> Result<MonotonicityReport> {
    let h_inner = shape_curvature(phi, inner, x)?;
    let h_outer = shape_curvature(phi, outer, x)?;
    let contact_gap = inner.level(x).abs().max(outer.level(x).abs());
    let tol = 1e-5 * h_inner.abs().max(h_outer.abs()).max(1.0);
    Ok(MonotonicityReport {
        h_inner,
        h_outer,
        contact_gap,
        holds: h_outer <= h_inner + tol,
    })
}

/// `P_φ(E∪F) + P_φ(E∩F) − P_φ(E) − P_φ(F)`; nonpositive up to quadrature error.
pub fn submodularity_defect(e: &SetState, f: &SetState, phi: &AnisotropyModel) -> Result<f64> {
    let p = |s: &SetState| crate::incremental::perimeter(s, phi);
    Ok(p(&e.union(f))? + p(&e.intersection(f))? - p(e)? - p(f)?)
}

/// Length-weighted mean of the fitted curvature.
pub fn mean_curvature(fit: &WeakCurvatureFit) -> f64 {
    let (mut num, mut den) = (0.0, 0.0);
    for s in &fit.samples {
        num += s.length * s.h_phi;
        den += s.length;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::anisotropy::Family;
    use crate::grid::Grid;

    #[test]
    fn bspline_is_a_partition_of_unity() {
        for k in 0..20 {
            let t = k as f64 / 20.0;
            let s: f64 = (-2..=2).map(|i| bspline(t - i as f64).0).sum();
            let d: f64 = (-2..=2).map(|i| bspline(t - i as f64).1).sum();
            assert!((s - 1.0).abs() < 1e-14 && d.abs() < 1e-13);
        }
        let e = 1e-6;
        for t in [-1.7, -0.4, 0.3, 1.2] {
            let fd = (bspline(t + e).0 - bspline(t - e).0) / (2.0 * e);
            assert!((fd - bspline(t).1).abs() < 1e-8);
        }
    }

    #[test]
    fn disk_weak_curvature_is_inverse_radius() {
        let g = Grid::unit(256);
        let r = 0.3;
        let set = SetState::from_shape(g, &Shape::disk([0.5, 0.5], r));
        let fit = weak_curvature(&set, &AnisotropyModel::euclidean(), &WeakSettings::default()).unwrap();
        let worst = fit.samples.iter().map(|s| (s.h_phi * r - 1.0).abs()).fold(0.0, f64::max);
        assert!(worst < 0.05, "{worst} residual {}", fit.residual);
    }

    #[test]
    fn flat_interface_has_zero_curvature() {
        let g = Grid::unit(128);
        let set = SetState::from_shape(g, &Shape::HalfPlane { normal: [0.3, 1.0], offset: 0.5 });
        let fit = weak_curvature(&set, &AnisotropyModel::euclidean(), &WeakSettings::default()).unwrap();
        let worst = fit.samples.iter().map(|s| s.h_phi.abs()).fold(0.0, f64::max);
        assert!(worst < 0.05, "{worst}");
    }

    #[test]
    fn too_small_interfaces_are_rejected() {
        let g = Grid::unit(64);
        let set = SetState::from_shape(g, &Shape::disk([0.5, 0.5], 0.03));
        assert!(weak_curvature(&set, &AnisotropyModel::euclidean(), &WeakSettings::default()).is_err());
    }

    #[test]
    fn ellipse_weak_and_pointwise_curvatures_agree() {
        let g = Grid::unit(256);
        let phi = AnisotropyModel::new(Family::riemannian_const([[2.0, 0.3], [0.3, 1.0]])).unwrap();
        let shape = Shape::Ellipse { center: [0.5, 0.5], semi_axes: [0.3, 0.18], angle: 0.4 };
        let set = SetState::from_shape(g, &shape);
        let (fit, agree) = curvature_cross_check(&set, &phi, &WeakSettings::default()).unwrap();
        assert!(agree.relative_l2 < 0.08, "{agree:?}");
        // Against the analytic boundary as well.
        let exact: Vec<Option<f64>> = fit
            .samples
            .iter()
            .map(|s| shape_curvature(&phi, &shape, s.x).ok())
            .collect();
        let a = curvature_agreement(&fit, &exact);
        assert!(a.relative_l2 < 0.08, "{a:?}");
    }

    #[test]
    fn monotonicity_of_tangent_shapes() {
        let m = AnisotropyModel::euclidean();
        let r = 0.1;
        let inner = Shape::disk([0.5, 0.5], r);
        let outer = Shape::disk([0.5 + r, 0.5], 2.0 * r);
        let rep = monotonicity_check(&m, &inner, &outer, [0.5 - r, 0.5]).unwrap();
        assert!(rep.holds && rep.contact_gap < 1e-12);
        assert!((rep.h_inner - 10.0).abs() < 1e-4 && (rep.h_outer - 5.0).abs() < 1e-4);

        let phi = AnisotropyModel::new(Family::riemannian_const([[3.0, 0.5], [0.5, 1.0]])).unwrap();
        let ell = Shape::Ellipse { center: [0.5, 0.5], semi_axes: [0.2, 0.1], angle: 0.0 };
        let disk = Shape::disk([0.5, 0.5], 0.2);
        let rep = monotonicity_check(&phi, &ell, &disk, [0.7, 0.5]).unwrap();
        assert!(rep.holds, "{rep:?}");
        let same = monotonicity_check(&phi, &ell, &ell, [0.7, 0.5]).unwrap();
        assert_eq!(same.h_inner, same.h_outer);
    }

    #[test]
    fn zero_test_function_balances_trivially() {
        let b = LawBalance::new(0.0, 0.0);
        assert_eq!(b.defect, 0.0);
        assert_eq!(TestFunction::Zero.eval([0.3, 0.2], 0.1), (0.0, 0.0));
    }

    #[test]
    fn shrinking_disk_satisfies_both_laws() {
        use crate::flow::{run, FlowConfig};
        use crate::incremental::{SolverSettings, StepOperator};
        let g = Grid::unit(128);
        let m = AnisotropyModel::euclidean();
        let f = Expr::Const(0.0);
        let op = StepOperator::new(&g, &m, &m, &f, SolverSettings::default()).unwrap();
        let h = 1e-3;
        let horizon = 8.0 * h;
        let trace = run(SetState::from_shape(g, &Shape::disk([0.5, 0.5], 0.3)), &op, &FlowConfig::new(h, horizon)).unwrap();
        let tests = default_battery([0.5, 0.5], 0.3, horizon);
        let rep = distributional_laws_check(&trace, &m, &m, &f, &tests, &WeakSettings::default()).unwrap();
        assert!(rep.max_curvature_defect() < 0.1, "{rep:?}");
        assert!(rep.max_velocity_defect() < 0.1, "{rep:?}");
        let zero = distributional_laws_check(&trace, &m, &m, &f, &[TestFunction::Zero], &WeakSettings::default()).unwrap();
        assert_eq!(zero.max_curvature_defect() + zero.max_velocity_defect(), 0.0);
    }
}
