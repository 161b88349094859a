//! Uniform truncation grids on the box `[-L, L]^n` and fields on them.
//!
//! Points are enumerated lexicographically with axis 0 slowest. Unknowns
//! ("dofs") live on interior points only; a 1-form at interior point `q`
//! (in interior order) owns dofs `q*n .. q*n + n`.

use serde::{Deserialize, Serialize};

use crate::error::{input, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dimension: usize,
    pub half_width: f64,
    pub points_per_axis: usize,
}

impl GridSpec {
    pub fn new(dimension: usize, half_width: f64, points_per_axis: usize) -> Self {
        GridSpec {
            dimension,
            half_width,
            points_per_axis,
        }
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.points_per_axis - 1) as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return input("grid dimension must be at least 1");
        }
        if self.points_per_axis < 3 {
            return input(format!("need at least 3 points per axis, got {}", self.points_per_axis));
        }
        if !(self.half_width.is_finite() && self.half_width > 0.0) {
            return input(format!("half width must be positive, got {}", self.half_width));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Grid {
    spec: GridSpec,
    h: f64,
    total: usize,
    strides: Vec<usize>,
    interior: Vec<usize>,
    /// Interior rank of each point, `usize::MAX` on the boundary.
    rank: Vec<usize>,
}

impl Grid {
    pub fn spec(&self) -> GridSpec {
        self.spec
    }
    pub fn dim(&self) -> usize {
        self.spec.dimension
    }
    pub fn points_per_axis(&self) -> usize {
        self.spec.points_per_axis
    }
    pub fn spacing(&self) -> f64 {
        self.h
    }
    pub fn half_width(&self) -> f64 {
        self.spec.half_width
    }
    /// Quadrature weight `h^n` of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.h.powi(self.dim() as i32)
    }
    pub fn num_points(&self) -> usize {
        self.total
    }
    pub fn num_interior(&self) -> usize {
        self.interior.len()
    }
    /// Number of unknowns: `n` components per interior point.
    pub fn num_dofs(&self) -> usize {
        self.interior.len() * self.dim()
    }

    pub fn multi_index(&self, p: usize) -> Vec<usize> {
        let nn = self.points_per_axis();
        let mut out = vec![0; self.dim()];
        let mut rem = p;
        for d in (0..self.dim()).rev() {
            out[d] = rem % nn;
            rem /= nn;
        }
        out
    }

    pub fn linear_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn coords(&self, p: usize) -> Vec<f64> {
        self.multi_index(p)
            .into_iter()
            .map(|i| -self.spec.half_width + i as f64 * self.h)
            .collect()
    }

    /// Coordinates of the midpoint between `p` and its `+axis` neighbor.
    pub fn edge_midpoint(&self, p: usize, axis: usize) -> Vec<f64> {
        let mut x = self.coords(p);
        x[axis] += 0.5 * self.h;
        x
    }

    pub fn is_interior(&self, p: usize) -> bool {
        self.rank[p] != usize::MAX
    }

    pub fn interior_points(&self) -> impl Iterator<Item = usize> + '_ {
        self.interior.iter().copied()
    }

    /// Interior rank of `p`, if interior.
    pub fn interior_rank(&self, p: usize) -> Option<usize> {
        let r = self.rank[p];
        (r != usize::MAX).then_some(r)
    }

    /// Point index of the `q`-th interior point.
    pub fn interior_point(&self, q: usize) -> usize {
        self.interior[q]
    }

    /// Neighbor of `p` one step along `axis` in direction `step` (±1).
    pub fn neighbor(&self, p: usize, axis: usize, step: i64) -> Option<usize> {
        let i = self.multi_index(p)[axis] as i64 + step;
        if i < 0 || i >= self.points_per_axis() as i64 {
            return None;
        }
        Some((p as i64 + step * self.strides[axis] as i64) as usize)
    }

    /// Smallest distance from `p` to the box faces, in cells.
    pub fn cells_to_boundary(&self, p: usize) -> usize {
        let nn = self.points_per_axis();
        self.multi_index(p)
            .into_iter()
            .map(|i| i.min(nn - 1 - i))
            .min()
            .unwrap_or(0)
    }
}

/// Builds the point enumeration and interior classification.
pub fn build_grid(spec: GridSpec) -> Result<Grid> {
    spec.validate()?;
    let n = spec.dimension;
    let nn = spec.points_per_axis;
    let total = nn
        .checked_pow(n as u32)
        .filter(|t| *t <= 200_000_000)
        .ok_or_else(|| crate::error::Error::Input("grid too large".into()))?;
    let mut strides = vec![1; n];
    for d in (0..n.saturating_sub(1)).rev() {
        strides[d] = strides[d + 1] * nn;
    }
    let mut rank = vec![usize::MAX; total];
    let mut interior = Vec::new();
    let mut idx = vec![0usize; n];
    for (p, r) in rank.iter_mut().enumerate() {
        let mut rem = p;
        for d in (0..n).rev() {
            idx[d] = rem % nn;
            rem /= nn;
        }
        if idx.iter().all(|&i| i > 0 && i < nn - 1) {
            *r = interior.len();
            interior.push(p);
        }
    }
    Ok(Grid {
        spec,
        h: spec.spacing(),
        total,
        strides,
        interior,
        rank,
    })
}

/// An `n`-component field on every grid point, zero on the boundary layer.
#[derive(Clone, Debug, PartialEq)]
pub struct OneFormGrid {
    n: usize,
    values: Vec<f64>,
}

impl OneFormGrid {
    pub fn zeros(grid: &Grid) -> Self {
        OneFormGrid {
            n: grid.dim(),
            values: vec![0.0; grid.num_points() * grid.dim()],
        }
    }

    /// Samples `f` at interior points; boundary values are forced to zero.
    pub fn from_fn(grid: &Grid, mut f: impl FnMut(&[f64]) -> Vec<f64>) -> Result<Self> {
        let mut out = Self::zeros(grid);
        for p in grid.interior_points() {
            let v = f(&grid.coords(p));
            if v.len() != out.n {
                return input("field sample has the wrong number of components");
            }
            if v.iter().any(|a| !a.is_finite()) {
                return input("field sample is not finite");
            }
            out.values[p * out.n..(p + 1) * out.n].copy_from_slice(&v);
        }
        Ok(out)
    }

    pub fn from_dofs(grid: &Grid, dofs: &[f64]) -> Self {
        assert_eq!(dofs.len(), grid.num_dofs());
        let n = grid.dim();
        let mut out = Self::zeros(grid);
        for (q, p) in grid.interior_points().enumerate() {
            out.values[p * n..(p + 1) * n].copy_from_slice(&dofs[q * n..(q + 1) * n]);
        }
        out
    }

    pub fn to_dofs(&self, grid: &Grid) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; grid.num_dofs()];
        for (q, p) in grid.interior_points().enumerate() {
            out[q * n..(q + 1) * n].copy_from_slice(&self.values[p * n..(p + 1) * n]);
        }
        out
    }

    pub fn components(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, k: usize, p: usize) -> f64 {
        self.values[p * self.n + k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// A rank-2 tensor field `eta_ik` on grid points.
#[derive(Clone, Debug, PartialEq)]
pub struct RankTwoField {
    n: usize,
    values: Vec<f64>,
}

impl RankTwoField {
    pub fn zeros(grid: &Grid) -> Self {
        let n = grid.dim();
        RankTwoField {
            n,
            values: vec![0.0; grid.num_points() * n * n],
        }
    }

    #[inline]
    pub fn get(&self, p: usize, i: usize, k: usize) -> f64 {
        self.values[(p * self.n + i) * self.n + k]
    }

    #[inline]
    pub fn set(&mut self, p: usize, i: usize, k: usize, v: f64) {
        self.values[(p * self.n + i) * self.n + k] = v;
    }
}
