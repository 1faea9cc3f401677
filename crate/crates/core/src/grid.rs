//! Uniform cell-centred grids on a rectangular box and real fields on them.

#[allow(unused_imports)]
use num_traits::Float;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::geom::{Mat2, Vec2};

/// A uniform grid of `nx × ny` square cells. Values live at cell centres; cell `(i, j)`
/// has centre `origin + ((i + ½)·dx, (j + ½)·dx)`. Storage is row-major with `i` fastest.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    pub origin: Vec2,
    pub spacing: f64,
}

impl Grid {
    /// Builds a grid covering `origin .. origin + extents`. Cells must be square to 1e-9.
    pub fn new(nx: usize, ny: usize, origin: Vec2, extents: Vec2) -> Result<Grid> {
        if nx < 4 || ny < 4 {
            return Err(Error::Input(alloc::format!(
                "grid must have at least 4 cells per axis, got {nx}x{ny}"
            )));
        }
        if !(extents[0] > 0.0 && extents[1] > 0.0) {
            return Err(Error::Input("box extents must be positive".into()));
        }
        let dx = extents[0] / nx as f64;
        let dy = extents[1] / ny as f64;
        if ((dx - dy) / dx).abs() > 1e-9 {
            return Err(Error::Input(alloc::format!(
                "cells must be square: spacing {dx} vs {dy}"
            )));
        }
        Ok(Grid {
            nx,
            ny,
            origin,
            spacing: dx,
        })
    }

    /// Unit box `[0,1]²` with `n × n` cells.
    pub fn unit(n: usize) -> Grid {
        Grid {
            nx: n,
            ny: n,
            origin: [0.0, 0.0],
            spacing: 1.0 / n as f64,
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.ny
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    #[inline]
    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.nx, idx / self.nx)
    }

    #[inline]
    pub fn center(&self, i: usize, j: usize) -> Vec2 {
        [
            self.origin[0] + (i as f64 + 0.5) * self.spacing,
            self.origin[1] + (j as f64 + 0.5) * self.spacing,
        ]
    }

    #[inline]
    pub fn center_of(&self, idx: usize) -> Vec2 {
        let (i, j) = self.coords(idx);
        self.center(i, j)
    }

    #[inline]
    pub fn cell_area(&self) -> f64 {
        self.spacing * self.spacing
    }

    pub fn extents(&self) -> Vec2 {
        [
            self.nx as f64 * self.spacing,
            self.ny as f64 * self.spacing,
        ]
    }

    /// Distance (in cells) from cell `(i, j)` to the nearest frame cell row/column.
    #[inline]
    pub fn frame_distance(&self, i: usize, j: usize) -> usize {
        i.min(j).min(self.nx - 1 - i).min(self.ny - 1 - j)
    }

    /// Continuous index coordinates of a point (cell centres sit at integers).
    #[inline]
    pub fn to_index_space(&self, x: Vec2) -> Vec2 {
        [
            (x[0] - self.origin[0]) / self.spacing - 0.5,
            (x[1] - self.origin[1]) / self.spacing - 0.5,
        ]
    }

    /// Four-neighbours of a cell that exist in the grid.
    pub fn neighbors4(&self, i: usize, j: usize) -> impl Iterator<Item = (usize, usize)> {
        let (nx, ny) = (self.nx as isize, self.ny as isize);
        [(-1isize, 0isize), (1, 0), (0, -1), (0, 1)]
            .into_iter()
            .filter_map(move |(di, dj)| {
                let a = i as isize + di;
                let b = j as isize + dj;
                (a >= 0 && b >= 0 && a < nx && b < ny).then_some((a as usize, b as usize))
            })
    }
}

/// A real value per grid cell.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    data: Vec<f64>,
}

impl ScalarField {
    pub fn constant(grid: Grid, value: f64) -> ScalarField {
        ScalarField {
            grid,
            data: vec![value; grid.len()],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(Vec2) -> f64) -> ScalarField {
        let mut data = Vec::with_capacity(grid.len());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                data.push(f(grid.center(i, j)));
            }
        }
        ScalarField { grid, data }
    }

    pub fn from_vec(grid: Grid, data: Vec<f64>) -> Result<ScalarField> {
        if data.len() != grid.len() {
            return Err(Error::Input(alloc::format!(
                "field has {} values, grid needs {}",
                data.len(),
                grid.len()
            )));
        }
        Ok(ScalarField { grid, data })
    }

    #[inline]
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[self.grid.index(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let idx = self.grid.index(i, j);
        self.data[idx] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ScalarField {
        ScalarField {
            grid: self.grid,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_abs_diff(&self, other: &ScalarField) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.data
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// Bilinear interpolation, clamped to the lattice of cell centres.
    pub fn sample(&self, x: Vec2) -> f64 {
        let g = &self.grid;
        let p = g.to_index_space(x);
        let fx = p[0].clamp(0.0, (g.nx - 1) as f64);
        let fy = p[1].clamp(0.0, (g.ny - 1) as f64);
        let i0 = (fx.floor() as usize).min(g.nx - 2);
        let j0 = (fy.floor() as usize).min(g.ny - 2);
        let tx = fx - i0 as f64;
        let ty = fy - j0 as f64;
        let v00 = self.get(i0, j0);
        let v10 = self.get(i0 + 1, j0);
        let v01 = self.get(i0, j0 + 1);
        let v11 = self.get(i0 + 1, j0 + 1);
        (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11)
    }

    /// Central-difference gradient (one-sided on the frame).
    pub fn gradient(&self, i: usize, j: usize) -> Vec2 {
        let g = &self.grid;
        let h = g.spacing;
        let dx = if i == 0 {
            (self.get(1, j) - self.get(0, j)) / h
        } else if i == g.nx - 1 {
            (self.get(i, j) - self.get(i - 1, j)) / h
        } else {
            (self.get(i + 1, j) - self.get(i - 1, j)) / (2.0 * h)
        };
        let dy = if j == 0 {
            (self.get(i, 1) - self.get(i, 0)) / h
        } else if j == g.ny - 1 {
            (self.get(i, j) - self.get(i, j - 1)) / h
        } else {
            (self.get(i, j + 1) - self.get(i, j - 1)) / (2.0 * h)
        };
        [dx, dy]
    }

    /// Central-difference Hessian; `None` on the frame.
    pub fn hessian(&self, i: usize, j: usize) -> Option<Mat2> {
        let g = &self.grid;
        if i == 0 || j == 0 || i + 1 >= g.nx || j + 1 >= g.ny {
            return None;
        }
        let h2 = g.spacing * g.spacing;
        let c = self.get(i, j);
        let dxx = (self.get(i + 1, j) - 2.0 * c + self.get(i - 1, j)) / h2;
        let dyy = (self.get(i, j + 1) - 2.0 * c + self.get(i, j - 1)) / h2;
        let dxy = (self.get(i + 1, j + 1) - self.get(i + 1, j - 1) - self.get(i - 1, j + 1)
            + self.get(i - 1, j - 1))
            / (4.0 * h2);
        Some([[dxx, dxy], [dxy, dyy]])
    }
}
