//! Level-set evolution: a ladder of superlevel sets stepped by `T^±_{h,t}` and
//! reassembled into functions.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::Mat2;
use crate::grid::{Grid, ScalarField};
use crate::incremental::StepOperator;
use crate::set::{Extent, SetState};
use crate::stats::Summary;
use crate::anisotropy::AnisotropyModel;
use crate::expr::Expr;
#[allow(unused_imports)]
use num_traits::Float;

/// Which transformation the ladder follows.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Variant {
    /// `T^+` on `{u ≥ s}`.
    Plus,
    /// `T^−` on `{u > s}`.
    Minus,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelLadder {
    /// Strictly increasing.
    pub levels: Vec<f64>,
    /// `sets[i] ≈ {u ≥ levels[i]}` (or `>` for [`Variant::Minus`]); nested decreasingly.
    pub sets: Vec<SetState>,
    pub variant: Variant,
}

impl LevelLadder {
    /// `m` uniform levels `min u + iΔs`, `Δs = (max u − min u)/m`.
    pub fn from_function(u: &ScalarField, m: usize, variant: Variant) -> Result<LevelLadder> {
        if m == 0 {
            return Err(Error::Input("a ladder needs at least one level".into()));
        }
        let (lo, hi) = u.min_max();
        if !(hi > lo) {
            return Err(Error::Input("level-set function is constant".into()));
        }
        let ds = (hi - lo) / m as f64;
        // Anchored at 0 when 0 is in range, so the zero superlevel set is always a rung.
        let first = if lo < 0.0 && hi > 0.0 { -(-lo / ds).floor() * ds } else { lo };
        let levels: Vec<f64> = (0..m).map(|i| first + i as f64 * ds).collect();
        LevelLadder::with_levels(u, levels, variant)
    }

    pub fn with_levels(u: &ScalarField, levels: Vec<f64>, variant: Variant) -> Result<LevelLadder> {
        if levels.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Input("levels must be strictly increasing".into()));
        }
        let sets = levels.iter().map(|&s| superlevel(u, s, variant)).collect();
        Ok(LevelLadder { levels, sets, variant })
    }

    pub fn spacing(&self) -> f64 {
        if self.levels.len() < 2 {
            return 0.0;
        }
        (self.levels[self.levels.len() - 1] - self.levels[0]) / (self.levels.len() - 1) as f64
    }

    pub fn grid(&self) -> &Grid {
        self.sets[0].grid()
    }

    /// Cells violating `E_{i+1} ⊆ E_i`.
    pub fn nesting_defect(&self) -> usize {
        self.sets.windows(2).map(|w| w[1].cells_not_in(&w[0])).sum()
    }
}

/// `{u ≥ s}` (Plus) or `{u > s}` (Minus), with level function `s − u`.
pub fn superlevel(u: &ScalarField, s: f64, variant: Variant) -> SetState {
    SetState::from_level(u.map(|v| {
        let l = s - v;
        if l == 0.0 && variant == Variant::Plus {
            -f64::MIN_POSITIVE
        } else {
            l
        }
    }))
}

/// Steps one set of the ladder; empty and full sets are fixed points.
pub fn step_level(op: &StepOperator<'_>, set: &SetState, variant: Variant, h: f64, t: f64) -> Result<SetState> {
    if matches!(set.extent(), Extent::Empty | Extent::Full) {
        return Ok(set.clone());
    }
    let r = op.step(set, h, t)?;
    Ok(match variant {
        Variant::Plus => r.e_max,
        Variant::Minus => r.e_min,
    })
}

/// Replaces `E_{i+1}` by `E_{i+1} ∩ E_i` from the bottom up; returns the corrected cells.
pub fn enforce_nesting(sets: &mut [SetState]) -> usize {
    let mut corrections = 0;
    for i in 1..sets.len() {
        let bad = sets[i].cells_not_in(&sets[i - 1]);
        if bad > 0 {
            corrections += bad;
            sets[i] = sets[i].intersection(&sets[i - 1]);
        }
    }
    corrections
}

/// Steps every level, then restores nesting. Returns the ladder at `t + h` and the
/// number of corrected cells (zero whenever the comparison principle holds).
pub fn levelset_step(ladder: &LevelLadder, op: &StepOperator<'_>, h: f64, t: f64) -> Result<(LevelLadder, usize)> {
    let mut sets = Vec::with_capacity(ladder.sets.len());
    for (i, s) in ladder.sets.iter().enumerate() {
        sets.push(step_level(op, s, ladder.variant, h, t).map_err(|e| level_error(i, e))?);
    }
    let corrections = enforce_nesting(&mut sets);
    Ok((
        LevelLadder {
            levels: ladder.levels.clone(),
            sets,
            variant: ladder.variant,
        },
        corrections,
    ))
}

fn level_error(level: usize, e: Error) -> Error {
    Error::Numeric(alloc::format!("level {level}: {e}"))
}

/// Reassembly rule of [`reconstruct`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reconstruction {
    /// `sup{sᵢ : x ∈ Eᵢ}`; `s₀ − Δs` outside every set.
    Lower,
    /// `inf{sᵢ : x ∉ Eᵢ}`; `s_last + Δs` inside every set.
    Upper,
    /// Lower staircase plus linear interpolation of the level functions between
    /// consecutive sets; used where derivatives are needed.
    Interpolated,
}

pub fn reconstruct(ladder: &LevelLadder, mode: Reconstruction) -> ScalarField {
    let grid = *ladder.grid();
    let ds = if ladder.levels.len() > 1 { ladder.spacing() } else { 1.0 };
    let m = ladder.levels.len();
    let data = (0..grid.len())
        .map(|k| {
            // Nesting makes membership monotone in i.
            let count = ladder.sets.iter().take_while(|s| s.inside()[k]).count();
            match mode {
                Reconstruction::Lower => {
                    if count == 0 {
                        ladder.levels[0] - ds
                    } else {
                        ladder.levels[count - 1]
                    }
                }
                Reconstruction::Upper => {
                    if count == m {
                        ladder.levels[m - 1] + ds
                    } else {
                        ladder.levels[count]
                    }
                }
                Reconstruction::Interpolated => {
                    if count == 0 || count == m {
                        let idx = if count == 0 { 0 } else { m - 1 };
                        let base = ladder.levels[idx];
                        let l = ladder.sets[idx].level().data()[k];
                        // Outside the ladder range the nearest level function is extended.
                        return base - l;
                    }
                    let a = ladder.sets[count - 1].level().data()[k];
                    let b = ladder.sets[count].level().data()[k];
                    let theta = if b - a > 0.0 { (-a / (b - a)).clamp(0.0, 1.0) } else { 0.0 };
                    ladder.levels[count - 1] + theta * (ladder.levels[count] - ladder.levels[count - 1])
                }
            }
        })
        .collect();
    ScalarField::from_vec(grid, data).expect("grid-sized data")
}

/// Cells where `lower > upper`.
pub fn ordering_violations(lower: &ScalarField, upper: &ScalarField) -> usize {
    lower
        .data()
        .iter()
        .zip(upper.data())
        .filter(|(a, b)| a > b)
        .count()
}

/// `H(x, p, X) = tr ∂ₓ∇_pφ(x, −p) − ∇²_pφ(x, −p) : X`.
pub fn hamiltonian(phi: &AnisotropyModel, x: crate::geom::Vec2, p: crate::geom::Vec2, hess: Mat2) -> Result<f64> {
    let q = [-p[0], -p[1]];
    let m = phi.grad_x_grad_p(x, q)?;
    let hp = phi.hess_p(x, q)?;
    Ok(m[0][0] + m[1][1] - crate::geom::frobenius(hp, hess))
}

/// Statistics of `∂ₜu + ψ(x, −∇u)(H(x, ∇u, ∇²u) − f)` over a probe region.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PdeResidualReport {
    pub residual: Summary,
    /// Probe cells skipped for a small gradient.
    pub degenerate: usize,
}

/// Evaluates the residual between consecutive frames of `series` (`(t, u)` pairs) at the
/// cells selected by `probe`, with `|∇u| ≥ min_gradient`.
pub fn pde_residual(
    series: &[(f64, ScalarField)],
    phi: &AnisotropyModel,
    psi: &AnisotropyModel,
    forcing: &Expr,
    probe: impl Fn(crate::geom::Vec2) -> bool,
    min_gradient: f64,
) -> Result<PdeResidualReport> {
    let mut res = Vec::new();
    let mut degenerate = 0;
    for w in series.windows(2) {
        let (t0, u0) = (&w[0].0, &w[0].1);
        let (t1, u1) = (&w[1].0, &w[1].1);
        let dt = t1 - t0;
        let grid = *u0.grid();
        for j in 1..grid.ny - 1 {
            for i in 1..grid.nx - 1 {
                let x = grid.center(i, j);
                if !probe(x) {
                    continue;
                }
                let p = u0.gradient(i, j);
                let Some(hess) = u0.hessian(i, j) else { continue };
                if crate::geom::norm(p) < min_gradient {
                    degenerate += 1;
                    continue;
                }
                let ut = (u1.get(i, j) - u0.get(i, j)) / dt;
                let hm = hamiltonian(phi, x, p, hess)?;
                let mob = psi.eval(x, [-p[0], -p[1]])?;
                res.push(ut + mob * (hm - forcing.eval(x[0], x[1], *t0)));
            }
        }
    }
    Ok(PdeResidualReport {
        residual: Summary::of_abs(&res),
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::{norm, sub};
    use crate::incremental::SolverSettings;

    fn cone(g: Grid, r0: f64) -> ScalarField {
        ScalarField::from_fn(g, |x| r0 - norm(sub(x, [0.5, 0.5])))
    }

    #[test]
    fn staircase_is_within_one_level() {
        let g = Grid::unit(48);
        let u = cone(g, 0.3);
        for variant in [Variant::Plus, Variant::Minus] {
            let lad = LevelLadder::from_function(&u, 64, variant).unwrap();
            assert_eq!(lad.nesting_defect(), 0);
            let ds = lad.spacing();
            for mode in [Reconstruction::Lower, Reconstruction::Upper] {
                let r = reconstruct(&lad, mode);
                let err = r.max_abs_diff(&u);
                assert!(err <= ds * (1.0 + 1e-9), "{mode:?} {err} {ds}");
            }
            let lo = reconstruct(&lad, Reconstruction::Lower);
            let up = reconstruct(&lad, Reconstruction::Upper);
            assert_eq!(ordering_violations(&lo, &up), 0);
        }
    }

    #[test]
    fn interpolated_reconstruction_is_exact_for_affine_data() {
        let g = Grid::unit(32);
        let u = ScalarField::from_fn(g, |x| 0.7 * x[0] - 0.2 * x[1]);
        let lad = LevelLadder::from_function(&u, 16, Variant::Plus).unwrap();
        let r = reconstruct(&lad, Reconstruction::Interpolated);
        assert!(r.max_abs_diff(&u) < 1e-12);
    }

    #[test]
    fn cone_levels_shrink_and_stay_nested() {
        let g = Grid::unit(64);
        let m = AnisotropyModel::euclidean();
        let forcing = Expr::Const(0.0);
        let op = StepOperator::new(&g, &m, &m, &forcing, SolverSettings::default()).unwrap();
        let u0 = cone(g, 0.35);
        // Keeps every radius above the extinction threshold `R² ≈ 6h`.
        let levels: Vec<f64> = (0..4).map(|i| 0.05 + 0.04 * i as f64).collect();
        let h = 2e-3;
        let mut plus = LevelLadder::with_levels(&u0, levels.clone(), Variant::Plus).unwrap();
        let mut minus = LevelLadder::with_levels(&u0, levels, Variant::Minus).unwrap();
        for k in 0..3 {
            let (p, cp) = levelset_step(&plus, &op, h, k as f64 * h).unwrap();
            let (q, cq) = levelset_step(&minus, &op, h, k as f64 * h).unwrap();
            assert_eq!(cp + cq, 0);
            plus = p;
            minus = q;
            let lo = reconstruct(&minus, Reconstruction::Lower);
            let up = reconstruct(&plus, Reconstruction::Lower);
            assert_eq!(ordering_violations(&lo, &up), 0);
        }
        let t = 3.0 * h;
        for (s, set) in plus.levels.iter().zip(&plus.sets) {
            let r0 = 0.35 - s;
            let exact = (r0 * r0 - 2.0 * t).sqrt();
            assert!((set.equivalent_radius() - exact).abs() < 1.5 * g.spacing, "{s}");
        }
    }

    #[test]
    fn relabeling_levels_leaves_sets_unchanged() {
        let g = Grid::unit(48);
        let m = AnisotropyModel::euclidean();
        let forcing = Expr::Const(0.0);
        let op = StepOperator::new(&g, &m, &m, &forcing, SolverSettings::default()).unwrap();
        let u0 = cone(g, 0.35);
        let levels: Vec<f64> = (0..4).map(|i| 0.05 + 0.06 * i as f64).collect();
        let a = LevelLadder::with_levels(&u0, levels.clone(), Variant::Minus).unwrap();
        // u ↦ exp(3u) is strictly increasing: same sets, new labels.
        let v0 = u0.map(|v| (3.0 * v).exp());
        let b = LevelLadder::with_levels(&v0, levels.iter().map(|s| (3.0 * s).exp()).collect(), Variant::Minus).unwrap();
        let (a1, _) = levelset_step(&a, &op, 2e-3, 0.0).unwrap();
        let (b1, _) = levelset_step(&b, &op, 2e-3, 0.0).unwrap();
        for (x, y) in a1.sets.iter().zip(&b1.sets) {
            assert_eq!(x.inside(), y.inside());
        }
    }

    #[test]
    fn hamiltonian_of_cone_is_curvature() {
        let m = AnisotropyModel::euclidean();
        // u = R − |x|: ∇u = −x/r, ∇²u = −(I − x̂x̂)/r, H = div(x̂) = 1/r.
        let x = [0.3, 0.4];
        let r = norm(x);
        let xh = [x[0] / r, x[1] / r];
        let p = [-xh[0], -xh[1]];
        let hess = [
            [-(1.0 - xh[0] * xh[0]) / r, xh[0] * xh[1] / r],
            [xh[0] * xh[1] / r, -(1.0 - xh[1] * xh[1]) / r],
        ];
        let hv = hamiltonian(&m, x, p, hess).unwrap();
        assert!((hv - 1.0 / r).abs() < 1e-12);
    }

    #[test]
    fn exact_cone_solution_has_small_residual() {
        let g = Grid::unit(128);
        let m = AnisotropyModel::euclidean();
        let f = Expr::Const(0.0);
        let u = |t: f64| ScalarField::from_fn(g, move |x| 0.35 - (norm(sub(x, [0.5, 0.5])).powi(2) + 2.0 * t).sqrt());
        let series = [(0.0, u(0.0)), (1e-3, u(1e-3))];
        let probe = |x: crate::geom::Vec2| {
            let r = norm(sub(x, [0.5, 0.5]));
            r > 0.15 && r < 0.3
        };
        let rep = pde_residual(&series, &m, &m, &f, probe, 0.1).unwrap();
        assert!(rep.residual.median < 0.05, "{rep:?}");
    }

    #[test]
    fn single_level_ladder_reproduces_the_set_flow() {
        let g = Grid::unit(48);
        let m = AnisotropyModel::euclidean();
        let forcing = Expr::Const(1.0);
        let op = StepOperator::new(&g, &m, &m, &forcing, SolverSettings::default()).unwrap();
        let e0 = SetState::from_shape(g, &crate::set::Shape::disk([0.5, 0.5], 0.3));
        let h = 2e-3;
        let trace = crate::flow::run(e0.clone(), &op, &crate::flow::FlowConfig::new(h, 3.0 * h)).unwrap();
        let u0 = e0.level().map(|v| -v);
        let mut lad = LevelLadder::with_levels(&u0, alloc::vec![0.0], Variant::Minus).unwrap();
        assert_eq!(lad.sets[0], e0);
        for k in 0..3 {
            lad = levelset_step(&lad, &op, h, k as f64 * h).unwrap().0;
            assert_eq!(lad.sets[0], trace.states[k + 1]);
        }
    }
}
