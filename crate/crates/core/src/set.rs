//! Discrete sets: a level function whose negative cells form the set.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::boxed::Box;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::{dot, norm, rotate_inv, sub, Vec2};
use crate::grid::{Grid, ScalarField};

/// Position of a set relative to the frame of the grid.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Extent {
    Empty,
    Full,
    /// No frame cell is inside.
    Bounded,
    /// Every frame cell is inside (the complement is bounded).
    CoBounded,
    /// The boundary reaches the frame.
    Crossing,
}

/// Analytic initial shapes. Level functions are negative inside.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    Disk { center: Vec2, radius: f64 },
    /// Semi-axes `(a, b)` along the frame rotated by `angle`.
    Ellipse { center: Vec2, semi_axes: Vec2, angle: f64 },
    /// `{x : n·x ≤ offset}` with `n` normalised on evaluation.
    HalfPlane { normal: Vec2, offset: f64 },
    Union(Vec<Shape>),
    Intersection(Vec<Shape>),
    Difference(Box<Shape>, Box<Shape>),
    Complement(Box<Shape>),
}

impl Shape {
    pub fn disk(center: Vec2, radius: f64) -> Shape {
        Shape::Disk { center, radius }
    }

    /// A level function with the shape as its negative set; a signed distance for disks
    /// and half-planes, and Lipschitz with nonvanishing gradient near the boundary otherwise.
    pub fn level(&self, x: Vec2) -> f64 {
        match self {
            Shape::Disk { center, radius } => norm(sub(x, *center)) - radius,
            Shape::Ellipse {
                center,
                semi_axes,
                angle,
            } => {
                let local = rotate_inv(sub(x, *center), *angle);
                let q = ((local[0] / semi_axes[0]).powi(2) + (local[1] / semi_axes[1]).powi(2)).sqrt();
                (q - 1.0) * semi_axes[0].min(semi_axes[1])
            }
            Shape::HalfPlane { normal, offset } => {
                let n = norm(*normal);
                (dot(*normal, x) - offset) / n
            }
            Shape::Union(parts) => parts.iter().map(|s| s.level(x)).fold(f64::INFINITY, f64::min),
            Shape::Intersection(parts) => {
                parts.iter().map(|s| s.level(x)).fold(f64::NEG_INFINITY, f64::max)
            }
            Shape::Difference(a, b) => a.level(x).max(-b.level(x)),
            Shape::Complement(a) => -a.level(x),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Input(m.into()));
        match self {
            Shape::Disk { radius, .. } if !(*radius > 0.0) => bad("disk radius must be positive"),
            Shape::Ellipse { semi_axes, .. } if !(semi_axes[0] > 0.0 && semi_axes[1] > 0.0) => {
                bad("ellipse semi-axes must be positive")
            }
            Shape::HalfPlane { normal, .. } if !(norm(*normal) > 0.0) => {
                bad("half-plane normal must be nonzero")
            }
            Shape::Union(p) | Shape::Intersection(p) if p.is_empty() => {
                bad("union/intersection needs at least one part")
            }
            Shape::Union(p) | Shape::Intersection(p) => p.iter().try_for_each(Shape::validate),
            Shape::Difference(a, b) => {
                a.validate()?;
                b.validate()
            }
            Shape::Complement(a) => a.validate(),
            _ => Ok(()),
        }
    }
}

/// A set on a grid. Cell `k` belongs to the set iff `level[k] < 0`; `level` carries the
/// subcell position of the boundary.
#[derive(Clone, Debug, PartialEq)]
pub struct SetState {
    level: ScalarField,
    inside: Vec<bool>,
}

impl SetState {
    pub fn from_level(level: ScalarField) -> SetState {
        let inside = level.data().iter().map(|&v| v < 0.0).collect();
        SetState { level, inside }
    }

    pub fn from_shape(grid: Grid, shape: &Shape) -> SetState {
        SetState::from_level(ScalarField::from_fn(grid, |x| shape.level(x)))
    }

    /// Boundary placed halfway between cells of different state.
    pub fn from_indicator(grid: Grid, inside: &[bool]) -> Result<SetState> {
        let h = 0.5 * grid.spacing;
        let data = inside.iter().map(|&b| if b { -h } else { h }).collect();
        Ok(SetState::from_level(ScalarField::from_vec(grid, data)?))
    }

    pub fn empty(grid: Grid) -> SetState {
        SetState::from_level(ScalarField::constant(grid, grid.spacing))
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        self.level.grid()
    }

    #[inline]
    pub fn level(&self) -> &ScalarField {
        &self.level
    }

    #[inline]
    pub fn inside(&self) -> &[bool] {
        &self.inside
    }

    #[inline]
    pub fn contains(&self, i: usize, j: usize) -> bool {
        self.inside[self.grid().index(i, j)]
    }

    pub fn cell_count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn extent(&self) -> Extent {
        let g = *self.grid();
        let n = self.cell_count();
        if n == 0 {
            return Extent::Empty;
        }
        if n == g.len() {
            return Extent::Full;
        }
        let (mut any_in, mut any_out) = (false, false);
        for j in 0..g.ny {
            for i in 0..g.nx {
                if g.frame_distance(i, j) == 0 {
                    if self.contains(i, j) {
                        any_in = true;
                    } else {
                        any_out = true;
                    }
                }
            }
        }
        match (any_in, any_out) {
            (false, _) => Extent::Bounded,
            (true, false) => Extent::CoBounded,
            (true, true) => Extent::Crossing,
        }
    }

    /// Complement; cells with a zero level value stay outside both sets' boundary rule by
    /// mapping `0` to a negative value.
    pub fn complement(&self) -> SetState {
        let level = self.level.map(|v| if v == 0.0 { -f64::MIN_POSITIVE } else { -v });
        SetState::from_level(level)
    }

    /// Cell-level intersection: the level function is the pointwise maximum.
    pub fn intersection(&self, other: &SetState) -> SetState {
        let data = self
            .level
            .data()
            .iter()
            .zip(other.level.data())
            .map(|(a, b)| a.max(*b))
            .collect();
        SetState::from_level(ScalarField::from_vec(*self.grid(), data).expect("same grid"))
    }

    pub fn union(&self, other: &SetState) -> SetState {
        let data = self
            .level
            .data()
            .iter()
            .zip(other.level.data())
            .map(|(a, b)| a.min(*b))
            .collect();
        SetState::from_level(ScalarField::from_vec(*self.grid(), data).expect("same grid"))
    }

    /// Cells of `self` that are not in `other`.
    pub fn cells_not_in(&self, other: &SetState) -> usize {
        self.inside
            .iter()
            .zip(&other.inside)
            .filter(|(a, b)| **a && !**b)
            .count()
    }

    /// Number of cells whose state differs.
    pub fn cell_symmetric_difference(&self, other: &SetState) -> usize {
        self.inside
            .iter()
            .zip(&other.inside)
            .filter(|(a, b)| a != b)
            .count()
    }

    /// True if some 4-neighbour has the opposite state.
    pub fn is_band(&self, i: usize, j: usize) -> bool {
        let s = self.contains(i, j);
        self.grid().neighbors4(i, j).any(|(a, b)| self.contains(a, b) != s)
    }

    /// Euclidean signed offset of a band cell centre to the boundary, from the level
    /// function and its central-difference gradient.
    pub fn boundary_offset(&self, i: usize, j: usize) -> Option<(f64, Vec2)> {
        let g = self.level.gradient(i, j);
        let n = norm(g);
        if !(n > 1e-12) {
            return None;
        }
        let v = self.level.get(i, j);
        Some((v / n, [g[0] / n, g[1] / n]))
    }

    /// Area fraction of each cell, from the subcell offset on band cells.
    pub fn coverage(&self) -> Vec<f64> {
        let g = *self.grid();
        let mut out = Vec::with_capacity(g.len());
        for j in 0..g.ny {
            for i in 0..g.nx {
                let inside = self.contains(i, j);
                let frac = if self.is_band(i, j) {
                    match self.boundary_offset(i, j) {
                        Some((d, _)) => (0.5 - d / g.spacing).clamp(0.0, 1.0),
                        None => 0.5,
                    }
                } else if inside {
                    1.0
                } else {
                    0.0
                };
                // Keep the fraction on the correct side of ½.
                let frac = if inside { frac.max(0.5) } else { frac.min(0.5) };
                out.push(frac);
            }
        }
        out
    }

    pub fn area(&self) -> f64 {
        self.coverage().iter().sum::<f64>() * self.grid().cell_area()
    }

    pub fn equivalent_radius(&self) -> f64 {
        (self.area() / core::f64::consts::PI).sqrt()
    }

    /// `∫|χ_E − χ_F|` with subcell coverage.
    pub fn symmetric_difference_area(&self, other: &SetState) -> f64 {
        let a = self.coverage();
        let b = other.coverage();
        a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() * self.grid().cell_area()
    }

    /// Smallest frame distance (in cells) of any cell whose state differs from a neighbour.
    pub fn boundary_frame_distance(&self) -> Option<usize> {
        let g = *self.grid();
        let mut best: Option<usize> = None;
        for j in 0..g.ny {
            for i in 0..g.nx {
                if self.is_band(i, j) {
                    let d = g.frame_distance(i, j);
                    best = Some(best.map_or(d, |b| b.min(d)));
                }
            }
        }
        best
    }
}
