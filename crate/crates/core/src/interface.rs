//! Marching-squares interface extraction on the lattice of cell centres, boundary
//! quadrature and local quadratic curvature fits.
//!
//! Segments are oriented with the set on their left, so the outward normal of a segment
//! `a → b` is the clockwise quarter turn of `b − a`.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::anisotropy::AnisotropyModel;
use crate::error::Result;
use crate::geom::{add, dot, norm, perp, scale, sub, Vec2};
use crate::set::SetState;

#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    pub points: Vec<Vec2>,
    pub closed: bool,
}

/// One boundary segment with its quadrature data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: Vec2,
    pub b: Vec2,
    pub mid: Vec2,
    /// Outward unit normal.
    pub normal: Vec2,
    pub length: f64,
    pub polyline: usize,
    /// Arc length from the polyline start to the midpoint.
    pub arclength: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Interface {
    pub polylines: Vec<Polyline>,
}

impl Interface {
    pub fn extract(set: &SetState) -> Interface {
        let g = *set.grid();
        let lv = set.level().data();
        let nx = g.nx;
        let crossing = |edge: usize| -> Vec2 {
            let cell = edge / 2;
            let (i, j) = (cell % nx, cell / nx);
            let (i2, j2) = if edge % 2 == 0 { (i + 1, j) } else { (i, j + 1) };
            let la = lv[g.index(i, j)];
            let lb = lv[g.index(i2, j2)];
            let t = if la == lb { 0.5 } else { (la / (la - lb)).clamp(0.0, 1.0) };
            let pa = g.center(i, j);
            let pb = g.center(i2, j2);
            add(pa, scale(sub(pb, pa), t))
        };
        let inside = set.inside();
        // (start edge, end edge) per segment.
        let mut segs: Vec<(usize, usize)> = Vec::new();
        for j in 0..g.ny.saturating_sub(1) {
            for i in 0..nx.saturating_sub(1) {
                let c = [g.index(i, j), g.index(i + 1, j), g.index(i + 1, j + 1), g.index(i, j + 1)];
                let s = [inside[c[0]], inside[c[1]], inside[c[2]], inside[c[3]]];
                if s.iter().all(|&v| v == s[0]) {
                    continue;
                }
                let edges = [
                    2 * g.index(i, j),
                    2 * g.index(i + 1, j) + 1,
                    2 * g.index(i, j + 1),
                    2 * g.index(i, j) + 1,
                ];
                let mut exits = [0usize; 2];
                let mut entries = [0usize; 2];
                let (mut ne, mut nn) = (0, 0);
                for k in 0..4 {
                    let (from, to) = (s[k], s[(k + 1) % 4]);
                    if from && !to {
                        exits[ne] = k;
                        ne += 1;
                    } else if !from && to {
                        entries[nn] = k;
                        nn += 1;
                    }
                }
                if ne == 1 {
                    segs.push((edges[exits[0]], edges[entries[0]]));
                } else {
                    let center: f64 = c.iter().map(|&k| lv[k]).sum::<f64>() * 0.25;
                    let connected = center < 0.0;
                    for &ex in &exits[..2] {
                        // Entries sit at odd offsets from exits on a saddle.
                        let next = (ex + 1) % 4;
                        let prev = (ex + 3) % 4;
                        let en = if connected { next } else { prev };
                        debug_assert!(entries.contains(&en));
                        segs.push((edges[ex], edges[en]));
                    }
                }
            }
        }
        let mut by_start: BTreeMap<usize, usize> = BTreeMap::new();
        let mut ends: BTreeMap<usize, usize> = BTreeMap::new();
        for (k, &(s, e)) in segs.iter().enumerate() {
            by_start.insert(s, k);
            ends.insert(e, k);
        }
        let mut used = alloc::vec![false; segs.len()];
        let mut polylines = Vec::new();
        let chain = |start: usize, used: &mut Vec<bool>| {
            let mut pts = alloc::vec![crossing(segs[start].0)];
            let mut k = start;
            let mut closed = false;
            loop {
                used[k] = true;
                let end = segs[k].1;
                pts.push(crossing(end));
                match by_start.get(&end) {
                    Some(&n) if n == start => {
                        closed = true;
                        pts.pop();
                        break;
                    }
                    Some(&n) if !used[n] => k = n,
                    _ => break,
                }
            }
            Polyline { points: pts, closed }
        };
        // Open chains start where no segment ends.
        for k in 0..segs.len() {
            if !used[k] && !ends.contains_key(&segs[k].0) {
                polylines.push(chain(k, &mut used));
            }
        }
        for k in 0..segs.len() {
            if !used[k] {
                polylines.push(chain(k, &mut used));
            }
        }
        Interface { polylines }
    }

    pub fn segments(&self) -> Vec<Segment> {
        let mut out = Vec::new();
        for (pi, pl) in self.polylines.iter().enumerate() {
            let n = pl.points.len();
            let count = if pl.closed { n } else { n.saturating_sub(1) };
            let mut arc = 0.0;
            for k in 0..count {
                let a = pl.points[k];
                let b = pl.points[(k + 1) % n];
                let d = sub(b, a);
                let len = norm(d);
                if len <= 0.0 {
                    continue;
                }
                out.push(Segment {
                    a,
                    b,
                    mid: scale(add(a, b), 0.5),
                    normal: [d[1] / len, -d[0] / len],
                    length: len,
                    polyline: pi,
                    arclength: arc + 0.5 * len,
                });
                arc += len;
            }
        }
        out
    }

    pub fn vertex_count(&self) -> usize {
        self.polylines.iter().map(|p| p.points.len()).sum()
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vec2> + '_ {
        self.polylines.iter().flat_map(|p| p.points.iter().copied())
    }

    pub fn length(&self) -> f64 {
        self.segments().iter().map(|s| s.length).sum()
    }

    /// `P_φ = Σ |seg| φ(mid, ν)`.
    pub fn perimeter(&self, phi: &AnisotropyModel) -> Result<f64> {
        let mut acc = 0.0;
        for s in self.segments() {
            acc += s.length * phi.eval(s.mid, s.normal)?;
        }
        Ok(acc)
    }

    /// Hausdorff distance between vertex sets (brute force over buckets).
    pub fn hausdorff(&self, other: &Interface) -> f64 {
        let a: Vec<Vec2> = self.vertices().collect();
        let b: Vec<Vec2> = other.vertices().collect();
        if a.is_empty() || b.is_empty() {
            return if a.is_empty() && b.is_empty() { 0.0 } else { f64::INFINITY };
        }
        directed_hausdorff(&a, &b).max(directed_hausdorff(&b, &a))
    }
}

fn directed_hausdorff(a: &[Vec2], b: &[Vec2]) -> f64 {
    let mut sorted: Vec<Vec2> = b.to_vec();
    sorted.sort_by(|p, q| p[0].total_cmp(&q[0]));
    let mut worst: f64 = 0.0;
    for p in a {
        let start = sorted.partition_point(|q| q[0] < p[0]);
        let mut best = f64::INFINITY;
        for q in sorted[start..].iter() {
            if q[0] - p[0] >= best {
                break;
            }
            best = best.min(norm(sub(*p, *q)));
        }
        for q in sorted[..start].iter().rev() {
            if p[0] - q[0] >= best {
                break;
            }
            best = best.min(norm(sub(*p, *q)));
        }
        worst = worst.max(best);
    }
    worst
}

/// Result of a local quadratic fit `n = a + b s + c s²` in the frame `(τ, ν)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalFit {
    /// Euclidean curvature, positive for convex sets.
    pub curvature: f64,
    /// Offset of the fitted curve from the query point along ν.
    pub offset: f64,
    /// Unit normal of the fitted curve at its closest point.
    pub normal: Vec2,
    pub points: usize,
}

/// Fits the interface near `x` (outward normal estimate `nu`) using vertices within
/// `radius`. Returns `None` with fewer than 5 points or an ill-conditioned system.
pub fn quadratic_fit(points: &[Vec2], x: Vec2, nu: Vec2, radius: f64) -> Option<LocalFit> {
    let tau = perp(nu);
    let mut m = [[0.0f64; 3]; 3];
    let mut r = [0.0f64; 3];
    let mut count = 0;
    for p in points {
        let d = sub(*p, x);
        if dot(d, d) > radius * radius {
            continue;
        }
        let s = dot(d, tau) / radius;
        let n = dot(d, nu);
        let basis = [1.0, s, s * s];
        for i in 0..3 {
            for j in 0..3 {
                m[i][j] += basis[i] * basis[j];
            }
            r[i] += basis[i] * n;
        }
        count += 1;
    }
    if count < 5 {
        return None;
    }
    let sol = solve3(m, r)?;
    let (a, b, c) = (sol[0], sol[1] / radius, sol[2] / (radius * radius));
    let slope = 1.0 + b * b;
    let curvature = -2.0 * c / (slope * slope.sqrt());
    let nrm = scale(add(scale(nu, 1.0), scale(tau, -b)), 1.0 / slope.sqrt());
    Some(LocalFit {
        curvature,
        offset: a,
        normal: nrm,
        points: count,
    })
}

fn solve3(m: [[f64; 3]; 3], r: [f64; 3]) -> Option<[f64; 3]> {
    let det = |a: [[f64; 3]; 3]| {
        a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1])
            - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
            + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
    };
    let d = det(m);
    let scale_m = m.iter().flatten().map(|v| v.abs()).fold(0.0, f64::max);
    if !(d.abs() > 1e-12 * scale_m * scale_m * scale_m) {
        return None;
    }
    let mut out = [0.0; 3];
    for (k, o) in out.iter_mut().enumerate() {
        let mut mk = m;
        for i in 0..3 {
            mk[i][k] = r[i];
        }
        *o = det(mk) / d;
    }
    Some(out)
}

/// Bucketed vertex lookup for repeated local fits.
pub struct VertexIndex {
    cell: f64,
    buckets: BTreeMap<(i64, i64), Vec<Vec2>>,
}

impl VertexIndex {
    pub fn new(interface: &Interface, cell: f64) -> VertexIndex {
        let mut buckets: BTreeMap<(i64, i64), Vec<Vec2>> = BTreeMap::new();
        for v in interface.vertices() {
            let key = ((v[0] / cell).floor() as i64, (v[1] / cell).floor() as i64);
            buckets.entry(key).or_default().push(v);
        }
        VertexIndex { cell, buckets }
    }

    /// Vertices within `radius ≤ cell` of `x`.
    pub fn near(&self, x: Vec2, radius: f64) -> Vec<Vec2> {
        let kx = (x[0] / self.cell).floor() as i64;
        let ky = (x[1] / self.cell).floor() as i64;
        let mut out = Vec::new();
        for dy in -1..=1 {
            for dx in -1..=1 {
                if let Some(b) = self.buckets.get(&(kx + dx, ky + dy)) {
                    out.extend(b.iter().copied().filter(|p| norm(sub(*p, x)) <= radius));
                }
            }
        }
        out
    }

    /// Quadratic fit at `x` widening the radius from 3 to 5 grid spacings as needed.
    pub fn fit(&self, x: Vec2, nu: Vec2, spacing: f64) -> Option<LocalFit> {
        for r in [3.0, 4.0, 5.0] {
            let pts = self.near(x, r * spacing);
            if let Some(f) = quadratic_fit(&pts, x, nu, r * spacing) {
                return Some(f);
            }
        }
        None
    }
}

/// φ-curvature of a curve with outward normal `nu` and Euclidean curvature `kappa` at `x`:
/// `tr ∇ₓ∇_pφ(x, ν) + κ τ·∇²_pφ(x, ν)τ`.
pub fn anisotropic_curvature(phi: &AnisotropyModel, x: Vec2, nu: Vec2, kappa: f64) -> Result<f64> {
    let mixed = phi.grad_x_grad_p(x, nu)?;
    let h = phi.hess_p(x, nu)?;
    let tau = perp(nu);
    Ok(mixed[0][0] + mixed[1][1] + kappa * crate::geom::quad(h, tau))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::set::Shape;
    use core::f64::consts::PI;

    #[test]
    fn disk_perimeter_and_orientation() {
        let g = Grid::unit(256);
        let s = SetState::from_shape(g, &Shape::disk([0.5, 0.5], 0.3));
        let itf = Interface::extract(&s);
        assert_eq!(itf.polylines.len(), 1);
        assert!(itf.polylines[0].closed);
        let p = itf.perimeter(&AnisotropyModel::euclidean()).unwrap();
        assert!((p - 2.0 * PI * 0.3).abs() / (2.0 * PI * 0.3) < 1e-3, "{p}");
        for seg in itf.segments() {
            let radial = sub(seg.mid, [0.5, 0.5]);
            assert!(dot(radial, seg.normal) > 0.0);
        }
        // Complement: same curve, reversed orientation.
        let c = Interface::extract(&s.complement());
        for seg in c.segments() {
            assert!(dot(sub(seg.mid, [0.5, 0.5]), seg.normal) < 0.0);
        }
    }

    #[test]
    fn crossing_set_gives_open_polyline() {
        let g = Grid::unit(32);
        let s = SetState::from_shape(g, &Shape::HalfPlane { normal: [1.0, 0.2], offset: 0.5 });
        let itf = Interface::extract(&s);
        assert_eq!(itf.polylines.len(), 1);
        assert!(!itf.polylines[0].closed);
        for seg in itf.segments() {
            assert!(dot(seg.normal, [1.0, 0.2]) > 0.0);
        }
    }

    #[test]
    fn saddles_and_multiple_components() {
        let g = Grid::unit(8);
        let mut inside = alloc::vec![false; 64];
        inside[g.index(3, 3)] = true;
        inside[g.index(4, 4)] = true;
        let s = SetState::from_indicator(g, &inside).unwrap();
        let itf = Interface::extract(&s);
        // Disconnected centre: two closed loops.
        assert_eq!(itf.polylines.len(), 2);
        assert!(itf.polylines.iter().all(|p| p.closed));
        let two = SetState::from_shape(
            Grid::unit(64),
            &Shape::Union(alloc::vec![Shape::disk([0.3, 0.3], 0.1), Shape::disk([0.7, 0.7], 0.1)]),
        );
        assert_eq!(Interface::extract(&two).polylines.len(), 2);
    }

    #[test]
    fn quadratic_fit_recovers_circle_curvature() {
        let g = Grid::unit(256);
        let r = 0.3;
        let s = SetState::from_shape(g, &Shape::disk([0.5, 0.5], r));
        let itf = Interface::extract(&s);
        let idx = VertexIndex::new(&itf, 5.0 * g.spacing);
        for seg in itf.segments().iter().step_by(37) {
            let f = idx.fit(seg.mid, seg.normal, g.spacing).unwrap();
            assert!((f.curvature - 1.0 / r).abs() < 0.05 / r, "{}", f.curvature);
        }
        let h = anisotropic_curvature(&AnisotropyModel::euclidean(), [0.8, 0.5], [1.0, 0.0], 1.0 / r).unwrap();
        assert!((h - 1.0 / r).abs() < 1e-12);
    }

    #[test]
    fn hausdorff_of_concentric_circles() {
        let g = Grid::unit(128);
        let a = Interface::extract(&SetState::from_shape(g, &Shape::disk([0.5, 0.5], 0.3)));
        let b = Interface::extract(&SetState::from_shape(g, &Shape::disk([0.5, 0.5], 0.25)));
        assert!((a.hausdorff(&b) - 0.05).abs() < g.spacing);
        assert_eq!(a.hausdorff(&a), 0.0);
    }
}
