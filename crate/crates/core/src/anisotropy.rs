//! Anisotropies φ(x, p): evaluation, p-derivatives, mixed derivatives, polars, exact
//! projections onto the dual unit ball and the pointwise φ-curvature.
//!
//! A model is `m(x) · core(x, p)` with an optional reversal `p ↦ −p`. Hot loops freeze a
//! model at a point with [`AnisotropyModel::local`] and work with the returned
//! [`LocalAnisotropy`].

#[allow(unused_imports)]
use num_traits::Float;
use alloc::boxed::Box;
use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;
use core::f64::consts::{PI, TAU};

use crate::error::{Error, Result};
use crate::expr::{Expr, Var};
use crate::grid::Grid;
use crate::geom::{
    self, add, cross, dot, mat_vec, norm, outer, perp, quad, scale, sub, unit, Mat2, Vec2,
};

/// Number of directions used by angular tables and sampled constants.
pub const ANGULAR_RESOLUTION: usize = 4096;

/// User-facing description of an anisotropy.
#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    /// `|p|`.
    Euclidean,
    /// `√(p·A(x)p)` with `A = [[a11, a12], [a12, a22]]`.
    Riemannian { a11: Expr, a12: Expr, a22: Expr },
    /// `(Σ|pᵢ|^q + ε|p|^q)^{1/q}`, `q ≥ 2`, `ε > 0`.
    SmoothedLp { exponent: f64, epsilon: f64 },
    /// `|p| + b·p` with `|b| < 1`; not symmetric under `p ↦ −p`.
    Drifted { drift: Vec2 },
    /// `m(x) · base(x, p)` with `m > 0`.
    SpaceModulated { base: Box<Family>, modulation: Expr },
}

impl Family {
    pub fn riemannian_const(a: Mat2) -> Family {
        Family::Riemannian {
            a11: Expr::Const(a[0][0]),
            a12: Expr::Const(a[0][1]),
            a22: Expr::Const(a[1][1]),
        }
    }

    pub fn modulated(self, modulation: Expr) -> Family {
        Family::SpaceModulated {
            base: Box::new(self),
            modulation,
        }
    }
}

/// Sampled constants of a model over its sampling box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    /// `1/λ ≤ φ(x, ν) ≤ λ` and tangential Hessian eigenvalues `≥ 1/λ`.
    pub lambda: f64,
    /// Sup of `|∇ₓφ(x, ν)|` over samples.
    pub lipschitz: f64,
    /// Smallest `c` with `|v|/c ≤ φ°(x, v) ≤ c|v|`.
    pub c_psi: f64,
    pub min_unit_value: f64,
    pub max_unit_value: f64,
    pub min_ellipticity: f64,
}

#[derive(Clone, Debug)]
enum Core {
    Euclid,
    Riemannian { a: [Expr; 3], da: [[Expr; 3]; 2] },
    Lp(Arc<LpTable>),
    Drift(Vec2),
}

/// An anisotropy with sampled constants. Immutable; cheap to clone.
#[derive(Clone, Debug)]
pub struct AnisotropyModel {
    family: Family,
    scale: Expr,
    dscale: [Expr; 2],
    core: Core,
    reversed: bool,
    constants: Constants,
    sample_origin: Vec2,
    sample_extents: Vec2,
}

impl AnisotropyModel {
    /// Builds a model with constants sampled over the unit box.
    pub fn new(family: Family) -> Result<AnisotropyModel> {
        Self::on_box(family, [0.0, 0.0], [1.0, 1.0])
    }

    pub fn euclidean() -> AnisotropyModel {
        Self::new(Family::Euclidean).expect("euclidean model is valid")
    }

    /// Builds a model whose constants and validity checks are sampled over a box.
    pub fn on_box(family: Family, origin: Vec2, extents: Vec2) -> Result<AnisotropyModel> {
        let (scale, core) = flatten(&family)?;
        let dscale = [scale.diff(Var::X), scale.diff(Var::Y)];
        let mut model = AnisotropyModel {
            family,
            scale,
            dscale,
            core,
            reversed: false,
            constants: Constants {
                lambda: 1.0,
                lipschitz: 0.0,
                c_psi: 1.0,
                min_unit_value: 1.0,
                max_unit_value: 1.0,
                min_ellipticity: 1.0,
            },
            sample_origin: origin,
            sample_extents: extents,
        };
        model.constants = model.sample_constants()?;
        Ok(model)
    }

    pub fn family(&self) -> &Family {
        &self.family
    }

    pub fn constants(&self) -> Constants {
        self.constants
    }

    pub fn is_reversed(&self) -> bool {
        self.reversed
    }

    /// `φ̃(x, p) = φ(x, −p)`. Reversing twice gives back the original model.
    pub fn reversed(&self) -> AnisotropyModel {
        let mut m = self.clone();
        m.reversed = !m.reversed;
        m
    }

    /// True when φ does not depend on x.
    pub fn is_x_independent(&self) -> bool {
        self.scale.as_const().is_some()
            && match &self.core {
                Core::Riemannian { a, .. } => a.iter().all(|e| e.as_const().is_some()),
                _ => true,
            }
    }

    /// True when `φ(x, −p) = φ(x, p)`.
    pub fn is_symmetric(&self) -> bool {
        match &self.core {
            Core::Drift(b) => b[0] == 0.0 && b[1] == 0.0,
            _ => true,
        }
    }

    /// Freezes the model at `x`.
    pub fn local(&self, x: Vec2) -> Result<LocalAnisotropy<'_>> {
        let s = self.scale.eval(x[0], x[1], 0.0);
        if !(s > 0.0 && s.is_finite()) {
            return Err(Error::Model(format!(
                "modulation must be positive, got {s} at ({}, {})",
                x[0], x[1]
            )));
        }
        let core = match &self.core {
            Core::Euclid => LocalCore::Euclid,
            Core::Riemannian { a, .. } => {
                let m = eval_matrix(a, x);
                LocalCore::Quadratic(QuadLocal::new(m).ok_or_else(|| {
                    Error::Model(format!(
                        "matrix field is not symmetric positive definite at ({}, {})",
                        x[0], x[1]
                    ))
                })?)
            }
            Core::Lp(t) => LocalCore::Lp(t),
            Core::Drift(b) => LocalCore::Drift(*b),
        };
        Ok(LocalAnisotropy {
            scale: s,
            core,
            reversed: self.reversed,
        })
    }

    pub fn eval(&self, x: Vec2, p: Vec2) -> Result<f64> {
        Ok(self.local(x)?.value(p))
    }

    pub fn grad_p(&self, x: Vec2, p: Vec2) -> Result<Vec2> {
        nonzero(p)?;
        Ok(self.local(x)?.grad(p))
    }

    pub fn hess_p(&self, x: Vec2, p: Vec2) -> Result<Mat2> {
        nonzero(p)?;
        Ok(self.local(x)?.hess(p))
    }

    pub fn polar(&self, x: Vec2, xi: Vec2) -> Result<f64> {
        Ok(self.local(x)?.polar(xi))
    }

    /// `∇ₓφ(x, p)`.
    pub fn grad_x(&self, x: Vec2, p: Vec2) -> Result<Vec2> {
        let loc = self.local(x)?;
        let q = loc.oriented(p);
        let c = loc.core_value(q);
        let ds = self.dscale_at(x);
        let mut g = scale(ds, c);
        if let Core::Riemannian { da, .. } = &self.core {
            if c > 0.0 {
                for (k, dak) in da.iter().enumerate() {
                    let ak = eval_matrix(dak, x);
                    g[k] += loc.scale * quad(ak, q) / (2.0 * c);
                }
            }
        }
        Ok(g)
    }

    /// Mixed derivative `M[i][j] = ∂_{xᵢ}(∇_pφ)ⱼ(x, p)`.
    pub fn grad_x_grad_p(&self, x: Vec2, p: Vec2) -> Result<Mat2> {
        nonzero(p)?;
        let loc = self.local(x)?;
        let sigma = if self.reversed { -1.0 } else { 1.0 };
        let q = loc.oriented(p);
        let gc = loc.core_grad(q);
        let ds = self.dscale_at(x);
        let mut m = [[0.0; 2]; 2];
        for i in 0..2 {
            let mut row = scale(gc, ds[i]);
            if let (Core::Riemannian { da, .. }, LocalCore::Quadratic(ql)) = (&self.core, &loc.core) {
                let ai = eval_matrix(&da[i], x);
                let c = quad(ql.a, q).sqrt();
                let aq = mat_vec(ql.a, q);
                let aiq = mat_vec(ai, q);
                let d = sub(scale(aiq, 1.0 / c), scale(aq, dot(q, aiq) / (2.0 * c * c * c)));
                row = add(row, scale(d, loc.scale));
            }
            m[i] = scale(row, sigma);
        }
        Ok(m)
    }

    /// φ-curvature of the superlevel set `{u ≥ u(x)}` of a function with `∇u = g`,
    /// `∇²u = hess_u`: `Σᵢ ∂_{xᵢ}∂_{pᵢ}φ(x, −g) − ∇²_pφ(x, −g) : hess_u`.
    /// Positive for convex sets.
    pub fn curvature(&self, x: Vec2, g: Vec2, hess_u: Mat2) -> Result<f64> {
        if !(norm(g) > 0.0) {
            return Err(Error::DegenerateGradient);
        }
        let q = geom::neg(g);
        let mixed = self.grad_x_grad_p(x, q)?;
        let hp = self.hess_p(x, q)?;
        Ok(mixed[0][0] + mixed[1][1] - geom::frobenius(hp, hess_u))
    }

    /// Multiplies by `π / |{p : φ(x, p) ≤ 1}|`, so that the unit ball has the Euclidean
    /// unit ball's area at every point.
    pub fn finsler_reweight(&self) -> Result<AnisotropyModel> {
        let area_core = match &self.core {
            Core::Euclid => PI,
            Core::Riemannian { .. } => PI,
            Core::Lp(t) => unit_ball_area(|p| t.value(p))?,
            Core::Drift(b) => {
                let b = *b;
                unit_ball_area(|p| norm(p) + dot(b, p))?
            }
        };
        let base = Expr::Const(PI / area_core);
        let mut m = Expr::Mul(
            Box::new(base),
            Box::new(Expr::Mul(
                Box::new(self.scale.clone()),
                Box::new(self.scale.clone()),
            )),
        );
        if let Core::Riemannian { a, .. } = &self.core {
            let det = Expr::Sub(
                Box::new(Expr::Mul(Box::new(a[0].clone()), Box::new(a[2].clone()))),
                Box::new(Expr::Mul(Box::new(a[1].clone()), Box::new(a[1].clone()))),
            );
            m = Expr::Mul(Box::new(m), Box::new(Expr::Sqrt(Box::new(det))));
        }
        let family = self.family.clone().modulated(m.simplify());
        let mut out = Self::on_box(family, self.sample_origin, self.sample_extents)?;
        out.reversed = self.reversed;
        Ok(out)
    }

    fn dscale_at(&self, x: Vec2) -> Vec2 {
        [
            self.dscale[0].eval(x[0], x[1], 0.0),
            self.dscale[1].eval(x[0], x[1], 0.0),
        ]
    }

    fn sample_constants(&self) -> Result<Constants> {
        const NX: usize = 17;
        const NDIR: usize = 256;
        let mut min_v = f64::INFINITY;
        let mut max_v: f64 = 0.0;
        let mut min_ell = f64::INFINITY;
        let mut lip: f64 = 0.0;
        for jy in 0..NX {
            for ix in 0..NX {
                let x = [
                    self.sample_origin[0] + self.sample_extents[0] * ix as f64 / (NX - 1) as f64,
                    self.sample_origin[1] + self.sample_extents[1] * jy as f64 / (NX - 1) as f64,
                ];
                let loc = self.local(x)?;
                for k in 0..NDIR {
                    let nu = unit(TAU * k as f64 / NDIR as f64);
                    let v = loc.value(nu);
                    min_v = min_v.min(v);
                    max_v = max_v.max(v);
                    let tau = perp(nu);
                    min_ell = min_ell.min(quad(loc.hess(nu), tau));
                    if !self.is_x_independent() {
                        lip = lip.max(norm(self.grad_x(x, nu)?));
                    }
                }
            }
        }
        if !(min_v > 0.0) || !(min_ell > 0.0) {
            return Err(Error::Model(
                "anisotropy is not elliptic on the sampling box".into(),
            ));
        }
        let c_psi = max_v.max(1.0 / min_v);
        let lambda = c_psi.max(1.0 / min_ell);
        // Sampling can miss extremes between samples; pad unless the bound is trivially exact.
        let lambda = if (lambda - 1.0).abs() < 1e-12 { lambda } else { lambda * 1.01 };
        Ok(Constants {
            lambda,
            lipschitz: lip,
            c_psi,
            min_unit_value: min_v,
            max_unit_value: max_v,
            min_ellipticity: min_ell,
        })
    }
}

fn wrap(a: f64) -> f64 {
    a - TAU * (a / TAU).floor()
}

fn nonzero(p: Vec2) -> Result<()> {
    if p[0] == 0.0 && p[1] == 0.0 {
        Err(Error::Domain("derivative in p is undefined at p = 0"))
    } else {
        Ok(())
    }
}

fn eval_matrix(a: &[Expr; 3], x: Vec2) -> Mat2 {
    let a11 = a[0].eval(x[0], x[1], 0.0);
    let a12 = a[1].eval(x[0], x[1], 0.0);
    let a22 = a[2].eval(x[0], x[1], 0.0);
    [[a11, a12], [a12, a22]]
}

fn flatten(f: &Family) -> Result<(Expr, Core)> {
    Ok(match f {
        Family::Euclidean => (Expr::Const(1.0), Core::Euclid),
        Family::Riemannian { a11, a12, a22 } => {
            let a = [a11.clone(), a12.clone(), a22.clone()];
            let da = [
                [a11.diff(Var::X), a12.diff(Var::X), a22.diff(Var::X)],
                [a11.diff(Var::Y), a12.diff(Var::Y), a22.diff(Var::Y)],
            ];
            for e in &a {
                if e.depends_on(Var::T) {
                    return Err(Error::Model("matrix entries may not depend on t".into()));
                }
            }
            (Expr::Const(1.0), Core::Riemannian { a, da })
        }
        Family::SmoothedLp { exponent, epsilon } => {
            if !(*exponent >= 2.0 && exponent.is_finite()) {
                return Err(Error::Model(format!(
                    "smoothed_lp exponent must be >= 2, got {exponent}"
                )));
            }
            if !(*epsilon > 0.0 && epsilon.is_finite()) {
                return Err(Error::Model(format!(
                    "smoothed_lp epsilon must be > 0, got {epsilon}"
                )));
            }
            (
                Expr::Const(1.0),
                Core::Lp(Arc::new(LpTable::new(*exponent, *epsilon))),
            )
        }
        Family::Drifted { drift } => {
            if !(norm(*drift) < 1.0) {
                return Err(Error::Model(format!(
                    "drift must have length < 1, got {}",
                    norm(*drift)
                )));
            }
            (Expr::Const(1.0), Core::Drift(*drift))
        }
        Family::SpaceModulated { base, modulation } => {
            if modulation.depends_on(Var::T) {
                return Err(Error::Model("modulation may not depend on t".into()));
            }
            let (s, core) = flatten(base)?;
            let s = Expr::Mul(Box::new(modulation.clone()), Box::new(s)).simplify();
            (s, core)
        }
    })
}

/// Area of `{p : f(p) ≤ 1}` for a 1-homogeneous `f`, by the periodic trapezoid rule.
pub fn unit_ball_area(f: impl Fn(Vec2) -> f64) -> Result<f64> {
    let n = ANGULAR_RESOLUTION;
    let mut acc = 0.0;
    for k in 0..n {
        let v = f(unit(TAU * k as f64 / n as f64));
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Numeric("unit-ball quadrature hit a degenerate direction".into()));
        }
        acc += 1.0 / (v * v);
    }
    Ok(0.5 * acc * TAU / n as f64)
}

/// Polar by maximizing `ξ·p / f(p)` over a uniform angular grid, refined by one Newton
/// step on a parabola through the best sample and its neighbours.
pub fn numeric_polar(f: impl Fn(Vec2) -> f64, xi: Vec2) -> f64 {
    if xi[0] == 0.0 && xi[1] == 0.0 {
        return 0.0;
    }
    let n = ANGULAR_RESOLUTION;
    let da = TAU / n as f64;
    let g = |a: f64| {
        let p = unit(a);
        dot(xi, p) / f(p)
    };
    let (mut best_k, mut best) = (0, f64::NEG_INFINITY);
    for k in 0..n {
        let v = g(k as f64 * da);
        if v > best {
            best = v;
            best_k = k;
        }
    }
    let a0 = best_k as f64 * da;
    let (gm, g0, gp) = (g(a0 - da), best, g(a0 + da));
    let curv = gm - 2.0 * g0 + gp;
    if curv < 0.0 {
        let shift = 0.5 * (gm - gp) / curv * da;
        let refined = g(a0 + shift.clamp(-da, da));
        best = best.max(refined);
    }
    best.max(0.0)
}

/// Tabulated gradient map of the smoothed ℓ^q core on the unit circle.
#[derive(Clone, Debug)]
pub struct LpTable {
    q: f64,
    eps: f64,
    /// Unwrapped angle of `∇φ(unit(αₖ))`, `αₖ = 2πk/N`, strictly increasing, `beta[0] = 0`.
    beta: Vec<f64>,
    /// `(∇φ(unit(αₖ)), d/dα ∇φ(unit(α)))` at the table angles.
    nodes: Vec<(Vec2, Vec2)>,
    /// `φ°(unit(βₖ))`, `βₖ = 2πk/N`.
    radial: Vec<f64>,
}

impl LpTable {
    fn new(q: f64, eps: f64) -> LpTable {
        let mut t = LpTable {
            q,
            eps,
            beta: Vec::with_capacity(ANGULAR_RESOLUTION + 1),
            nodes: Vec::with_capacity(ANGULAR_RESOLUTION),
            radial: Vec::new(),
        };
        let mut prev = 0.0;
        for k in 0..=ANGULAR_RESOLUTION {
            let g = t.grad(unit(TAU * k as f64 / ANGULAR_RESOLUTION as f64));
            let mut b = g[1].atan2(g[0]);
            while b < prev - PI {
                b += TAU;
            }
            if k == 0 {
                b = 0.0;
            }
            t.beta.push(b);
            prev = b;
        }
        for k in 0..ANGULAR_RESOLUTION {
            let u = unit(TAU * k as f64 / ANGULAR_RESOLUTION as f64);
            t.nodes.push((t.grad(u), mat_vec(t.hess(u), perp(u))));
        }
        t.radial = (0..ANGULAR_RESOLUTION)
            .map(|k| t.polar_with(unit(TAU * k as f64 / ANGULAR_RESOLUTION as f64), 3))
            .collect();
        t
    }

    fn sum(&self, p: Vec2) -> f64 {
        let r = norm(p);
        p[0].abs().powf(self.q) + p[1].abs().powf(self.q) + self.eps * r.powf(self.q)
    }

    fn value(&self, p: Vec2) -> f64 {
        let r = norm(p);
        if r == 0.0 {
            return 0.0;
        }
        r * self.sum(scale(p, 1.0 / r)).powf(1.0 / self.q)
    }

    /// `G = ∇(S/q)`, evaluated at a unit vector.
    fn g_unit(&self, u: Vec2) -> Vec2 {
        let q = self.q;
        let e = |c: f64| c.abs().powf(q - 2.0) * c;
        [e(u[0]) + self.eps * u[0], e(u[1]) + self.eps * u[1]]
    }

    fn grad(&self, p: Vec2) -> Vec2 {
        let r = norm(p);
        let u = scale(p, 1.0 / r);
        let s = self.sum(u);
        scale(self.g_unit(u), s.powf(1.0 / self.q - 1.0))
    }

    fn hess(&self, p: Vec2) -> Mat2 {
        let q = self.q;
        let r = norm(p);
        let u = scale(p, 1.0 / r);
        let s = self.sum(u);
        let g = self.g_unit(u);
        let d = |c: f64| (q - 1.0) * c.abs().powf(q - 2.0);
        let e = self.eps;
        let dg = [
            [d(u[0]) + e * (1.0 + (q - 2.0) * u[0] * u[0]), e * (q - 2.0) * u[0] * u[1]],
            [e * (q - 2.0) * u[0] * u[1], d(u[1]) + e * (1.0 + (q - 2.0) * u[1] * u[1])],
        ];
        let gg = outer(g, g);
        let f = s.powf(1.0 / q - 1.0) / r;
        let mut h = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                h[i][j] = f * (dg[i][j] - (q - 1.0) * gg[i][j] / s);
            }
        }
        h
    }

    /// Angle α whose gradient direction is `beta` (interpolated from the table).
    fn invert(&self, beta: f64) -> f64 {
        let b = wrap(beta);
        let n = ANGULAR_RESOLUTION;
        let k = self.beta.partition_point(|&v| v <= b).clamp(1, n) - 1;
        let (b0, b1) = (self.beta[k], self.beta[k + 1]);
        let frac = if b1 > b0 { ((b - b0) / (b1 - b0)).clamp(0.0, 1.0) } else { 0.0 };
        (k as f64 + frac) * TAU / n as f64
    }

    /// Newton on `cross(∇φ(unit(α)), ξ) = 0`.
    fn refine(&self, xi: Vec2, mut a: f64, iters: usize) -> f64 {
        for _ in 0..iters {
            let u = unit(a);
            let f = cross(self.grad(u), xi);
            let df = cross(mat_vec(self.hess(u), perp(u)), xi);
            if df.abs() < 1e-300 {
                break;
            }
            let step = (f / df).clamp(-0.05, 0.05);
            a -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        a
    }

    fn polar_with(&self, xi: Vec2, newton: usize) -> f64 {
        if xi[0] == 0.0 && xi[1] == 0.0 {
            return 0.0;
        }
        if newton == 0 && !self.radial.is_empty() {
            return norm(xi) * self.radial_polar(xi[1].atan2(xi[0]));
        }
        let a0 = self.invert(xi[1].atan2(xi[0]));
        let ratio = |a: f64| {
            let u = unit(a);
            dot(xi, u) / self.value(u)
        };
        let mut best = ratio(a0);
        if newton > 0 {
            best = best.max(ratio(self.refine(xi, a0, newton)));
        }
        best.max(0.0)
    }

    /// `φ°(unit(β))` by Catmull–Rom interpolation of the tabulated values.
    fn radial_polar(&self, beta: f64) -> f64 {
        let n = ANGULAR_RESOLUTION;
        let x = wrap(beta) * n as f64 / TAU;
        let k = (x.floor() as usize).min(n - 1);
        let s = x - k as f64;
        let r = &self.radial;
        let (p0, p1, p2, p3) = (r[(k + n - 1) % n], r[k], r[(k + 1) % n], r[(k + 2) % n]);
        p1 + 0.5 * s * (p2 - p0 + s * (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3 + s * (3.0 * (p1 - p2) + p3 - p0)))
    }

    /// Point of the dual unit sphere `∇φ(unit(α))` and its α-derivative, by cubic Hermite
    /// interpolation of the tabulated curve.
    fn curve(&self, a: f64) -> (Vec2, Vec2, Vec2) {
        let n = ANGULAR_RESOLUTION;
        let d = TAU / n as f64;
        let x = wrap(a) / d;
        let k = (x.floor() as usize).min(n - 1);
        let s = x - k as f64;
        let (p0, m0) = self.nodes[k];
        let (p1, m1) = self.nodes[(k + 1) % n];
        let (s2, s3) = (s * s, s * s * s);
        let h = [2.0 * s3 - 3.0 * s2 + 1.0, s3 - 2.0 * s2 + s, -2.0 * s3 + 3.0 * s2, s3 - s2];
        let dh = [6.0 * s2 - 6.0 * s, 3.0 * s2 - 4.0 * s + 1.0, -6.0 * s2 + 6.0 * s, 3.0 * s2 - 2.0 * s];
        let ddh = [12.0 * s - 6.0, 6.0 * s - 4.0, -12.0 * s + 6.0, 6.0 * s - 2.0];
        let comb = |w: [f64; 4], sc: f64| {
            let mut out = [0.0; 2];
            for c in 0..2 {
                out[c] = (w[0] * p0[c] + w[1] * d * m0[c] + w[2] * p1[c] + w[3] * d * m1[c]) * sc;
            }
            out
        };
        (comb(h, 1.0), comb(dh, 1.0 / d), comb(ddh, 1.0 / (d * d)))
    }

    /// Newton on `(C(α) − z)·C'(α) = 0` for the nearest boundary point.
    fn nearest(&self, z: Vec2, start: f64, max_step: f64) -> Option<f64> {
        let mut a = start;
        for it in 0..40 {
            let (c, dc, ddc) = self.curve(a);
            let r = sub(c, z);
            let f = dot(r, dc);
            let mut df = dot(dc, dc) + dot(r, ddc);
            if !(df > 0.0) {
                df = dot(dc, dc);
            }
            if !(df > 0.0) {
                return None;
            }
            let step = (f / df).clamp(-max_step, max_step);
            // Curvature jumps at table knots can make plain Newton cycle; damp late steps.
            a -= if it < 8 { step } else { 0.5 * step };
            if step.abs() < 1e-11 {
                return Some(wrap(a));
            }
        }
        None
    }

    /// Euclidean projection onto `{ξ : φ°(ξ) ≤ 1}`; `warm` carries the boundary angle.
    fn project(&self, z: Vec2, warm: &mut f64) -> Vec2 {
        let start = if warm.is_finite() {
            *warm
        } else {
            self.invert(z[1].atan2(z[0]))
        };
        let a = match self.nearest(z, start, 0.3) {
            Some(a) => a,
            None => {
                let mut best = (f64::INFINITY, 0.0);
                for (k, (p, _)) in self.nodes.iter().enumerate() {
                    let d = norm(sub(z, *p));
                    if d < best.0 {
                        best = (d, TAU * k as f64 / ANGULAR_RESOLUTION as f64);
                    }
                }
                self.nearest(z, best.1, TAU / ANGULAR_RESOLUTION as f64)
                    .unwrap_or(best.1)
            }
        };
        *warm = a;
        let (c, _, _) = self.curve(a);
        // The outward normal of the dual ball at ∇φ(u) is u.
        if dot(sub(z, c), unit(a)) <= 0.0 {
            z
        } else {
            c
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct QuadLocal {
    a: Mat2,
    a_inv: Mat2,
    /// Eigenpairs of `A⁻¹`.
    b_vals: [f64; 2],
    b_vecs: [Vec2; 2],
}

impl QuadLocal {
    fn new(a: Mat2) -> Option<QuadLocal> {
        if !(a[0][0] > 0.0 && geom::det(a) > 0.0) || a[0][1] != a[1][0] {
            return None;
        }
        let a_inv = geom::inverse(a)?;
        let (vals, vecs) = geom::sym_eigen(a_inv);
        Some(QuadLocal {
            a,
            a_inv,
            b_vals: vals,
            b_vecs: vecs,
        })
    }

    /// Euclidean projection onto the ellipse `ξ·A⁻¹ξ ≤ 1`.
    /// `warm` carries the multiplier of the previous call.
    fn project(&self, z: Vec2, warm: &mut f64) -> Vec2 {
        if quad(self.a_inv, z) <= 1.0 {
            return z;
        }
        let zk = [dot(z, self.b_vecs[0]), dot(z, self.b_vecs[1])];
        let b = self.b_vals;
        // The constraint is convex and decreasing in μ, so Newton from μ ≥ 0 stays bracketed
        // after one step once clamped at zero.
        let mut mu: f64 = if warm.is_finite() { warm.max(0.0) } else { 0.0 };
        for _ in 0..100 {
            let mut g = -1.0;
            let mut dg = 0.0;
            for k in 0..2 {
                let den = 1.0 + mu * b[k];
                g += b[k] * zk[k] * zk[k] / (den * den);
                dg -= 2.0 * b[k] * b[k] * zk[k] * zk[k] / (den * den * den);
            }
            if dg == 0.0 {
                break;
            }
            let step = g / dg;
            mu = (mu - step).max(0.0);
            if step.abs() <= 1e-15 * (1.0 + mu) {
                break;
            }
        }
        *warm = mu;
        let xi = add(
            scale(self.b_vecs[0], zk[0] / (1.0 + mu * b[0])),
            scale(self.b_vecs[1], zk[1] / (1.0 + mu * b[1])),
        );
        let r = quad(self.a_inv, xi).sqrt();
        if r > 1.0 {
            scale(xi, 1.0 / r)
        } else {
            xi
        }
    }
}

#[derive(Clone, Copy, Debug)]
enum LocalCore<'a> {
    Euclid,
    Quadratic(QuadLocal),
    Lp(&'a LpTable),
    Drift(Vec2),
}

/// A model frozen at one point.
#[derive(Clone, Copy, Debug)]
pub struct LocalAnisotropy<'a> {
    scale: f64,
    core: LocalCore<'a>,
    reversed: bool,
}

impl LocalAnisotropy<'_> {
    #[inline]
    fn oriented(&self, p: Vec2) -> Vec2 {
        if self.reversed {
            geom::neg(p)
        } else {
            p
        }
    }

    #[inline]
    fn core_value(&self, p: Vec2) -> f64 {
        match self.core {
            LocalCore::Euclid => norm(p),
            LocalCore::Quadratic(q) => quad(q.a, p).max(0.0).sqrt(),
            LocalCore::Lp(t) => t.value(p),
            LocalCore::Drift(b) => norm(p) + dot(b, p),
        }
    }

    fn core_grad(&self, p: Vec2) -> Vec2 {
        match self.core {
            LocalCore::Euclid => scale(p, 1.0 / norm(p)),
            LocalCore::Quadratic(q) => scale(mat_vec(q.a, p), 1.0 / quad(q.a, p).sqrt()),
            LocalCore::Lp(t) => t.grad(p),
            LocalCore::Drift(b) => add(scale(p, 1.0 / norm(p)), b),
        }
    }

    fn core_hess(&self, p: Vec2) -> Mat2 {
        match self.core {
            LocalCore::Euclid | LocalCore::Drift(_) => {
                let r = norm(p);
                let u = scale(p, 1.0 / r);
                geom::mat_scale(geom::mat_add(geom::IDENTITY, geom::mat_scale(outer(u, u), -1.0)), 1.0 / r)
            }
            LocalCore::Quadratic(q) => {
                let c = quad(q.a, p).sqrt();
                let ap = mat_vec(q.a, p);
                geom::mat_scale(
                    geom::mat_add(q.a, geom::mat_scale(outer(ap, ap), -1.0 / (c * c))),
                    1.0 / c,
                )
            }
            LocalCore::Lp(t) => t.hess(p),
        }
    }

    fn core_polar(&self, xi: Vec2, exact: bool) -> f64 {
        match self.core {
            LocalCore::Euclid => norm(xi),
            LocalCore::Quadratic(q) => quad(q.a_inv, xi).max(0.0).sqrt(),
            LocalCore::Lp(t) => t.polar_with(xi, if exact { 3 } else { 0 }),
            LocalCore::Drift(b) => {
                let bb = dot(b, b);
                let bx = dot(b, xi);
                let disc = bx * bx + (1.0 - bb) * dot(xi, xi);
                (-bx + disc.max(0.0).sqrt()) / (1.0 - bb)
            }
        }
    }

    fn core_project(&self, z: Vec2, warm: &mut f64) -> Vec2 {
        match self.core {
            LocalCore::Euclid => {
                let r = norm(z);
                if r > 1.0 {
                    scale(z, 1.0 / r)
                } else {
                    z
                }
            }
            LocalCore::Quadratic(q) => q.project(z, warm),
            LocalCore::Lp(t) => t.project(z, warm),
            LocalCore::Drift(b) => {
                let d = sub(z, b);
                let r = norm(d);
                if r > 1.0 {
                    add(b, scale(d, 1.0 / r))
                } else {
                    z
                }
            }
        }
    }

    /// The same point evaluation for `φ̃(x, p) = φ(x, −p)`.
    pub fn reversed(&self) -> Self {
        LocalAnisotropy {
            reversed: !self.reversed,
            ..*self
        }
    }

    #[inline]
    pub fn scale_factor(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn value(&self, p: Vec2) -> f64 {
        self.scale * self.core_value(self.oriented(p))
    }

    /// Requires `p ≠ 0`.
    pub fn grad(&self, p: Vec2) -> Vec2 {
        let g = scale(self.core_grad(self.oriented(p)), self.scale);
        if self.reversed {
            geom::neg(g)
        } else {
            g
        }
    }

    /// Requires `p ≠ 0`.
    pub fn hess(&self, p: Vec2) -> Mat2 {
        geom::mat_scale(self.core_hess(self.oriented(p)), self.scale)
    }

    /// Exact polar (Newton-refined for tabulated cores).
    pub fn polar(&self, xi: Vec2) -> f64 {
        self.core_polar(self.oriented(xi), true) / self.scale
    }

    /// Polar from table interpolation only; exact for closed-form cores.
    pub fn polar_fast(&self, xi: Vec2) -> f64 {
        self.core_polar(self.oriented(xi), false) / self.scale
    }

    /// Matrix `M` with `φ°(ξ) = √(ξ·Mξ)` when the polar is quadratic.
    pub fn polar_metric(&self) -> Option<Mat2> {
        let s2 = self.scale * self.scale;
        match self.core {
            LocalCore::Euclid => Some(geom::mat_scale(geom::IDENTITY, 1.0 / s2)),
            LocalCore::Quadratic(q) => Some(geom::mat_scale(q.a_inv, 1.0 / s2)),
            _ => None,
        }
    }

    /// Euclidean projection onto the dual unit ball `{ξ : φ°(ξ) ≤ 1}`. `warm` is a
    /// per-cell warm start used by iterative cores; initialise it with `f64::NAN`.
    pub fn project_dual(&self, z: Vec2, warm: &mut f64) -> Vec2 {
        let s = self.scale;
        let zz = scale(self.oriented(z), 1.0 / s);
        let pz = self.core_project(zz, warm);
        if pz == zz {
            return z;
        }
        scale(self.oriented(pz), s)
    }
}

/// A model frozen at every cell centre of a grid.
#[derive(Clone, Debug)]
pub struct FrozenModel<'a> {
    grid: Grid,
    cells: Vec<LocalAnisotropy<'a>>,
}

impl<'a> FrozenModel<'a> {
    pub fn new(model: &'a AnisotropyModel, grid: &Grid) -> Result<FrozenModel<'a>> {
        let mut cells = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            cells.push(model.local(grid.center_of(k))?);
        }
        Ok(FrozenModel { grid: *grid, cells })
    }

    pub fn reversed(&self) -> FrozenModel<'a> {
        FrozenModel {
            grid: self.grid,
            cells: self.cells.iter().map(|c| c.reversed()).collect(),
        }
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn at(&self, idx: usize) -> &LocalAnisotropy<'a> {
        &self.cells[idx]
    }
}
