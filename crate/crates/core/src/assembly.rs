//! Discretizations on the truncated grid: the flat operator `H0`, the mass
//! matrix `M`, the weak-form stiffness `S` of the curved quadratic form,
//! the strong-form Weitzenböck operator `W`, the perturbation `V`, and the
//! identification maps `J`, `J*`.
//!
//! Units: `H0`, `W`, `V` carry `1/length^2`; `S` and `M` carry an extra
//! cell volume `h^n`, so generalized eigenvalues of `(S, M)` compare
//! directly with eigenvalues of `H0`.

use std::path::Path;

use nalgebra::DMatrix;

use crate::blocks::BlockDiagonal;
use crate::error::{Error, Result};
use crate::geometry::{
    christoffel_from, curvature_weight, perturbation_coefficients_from, point_geometry, weitzenbock_jet_from,
};
use crate::grid::{build_grid, Grid, GridSpec};
use crate::metric::{eval_metric, metric_derivatives, MetricSpec};
use crate::sparse::{Csr, TripletBuilder};

/// Relative tolerance for the identity `W = H0 + V`.
pub const WEITZENBOCK_IDENTITY_TOL: f64 = 1e-12;

fn dof(grid: &Grid, p: usize, k: usize) -> Option<usize> {
    grid.interior_rank(p).map(|q| q * grid.dim() + k)
}

/// Flat componentwise Laplacian with Dirichlet boundary, scaled by `1/h^2`.
pub fn assemble_h0(grid: &Grid) -> Csr {
    let n = grid.dim();
    let inv_h2 = 1.0 / (grid.spacing() * grid.spacing());
    stencil_laplacian(grid, n).scaled(inv_h2)
}

/// Integer second-difference stencil (`2n` on the diagonal, `-1` per
/// interior neighbor).
fn stencil_laplacian(grid: &Grid, n: usize) -> Csr {
    let mut b = TripletBuilder::new(grid.num_dofs(), grid.num_dofs());
    for p in grid.interior_points() {
        for k in 0..n {
            let r = dof(grid, p, k).unwrap();
            b.push(r, r, (2 * n) as f64);
            for axis in 0..n {
                for step in [-1, 1] {
                    if let Some(c) = grid.neighbor(p, axis, step).and_then(|q| dof(grid, q, k)) {
                        b.push(r, c, -1.0);
                    }
                }
            }
        }
    }
    b.build()
}

/// Mass blocks `sqrt(g) g^ij h^n` at every interior point.
pub fn assemble_mass(spec: &MetricSpec, grid: &Grid) -> Result<BlockDiagonal> {
    let hn = grid.cell_volume();
    let mut blocks = Vec::with_capacity(grid.num_interior());
    for p in grid.interior_points() {
        let x = grid.coords(p);
        let pt = eval_metric(spec, &x)?;
        let block = &pt.g_upper * (pt.sqrt_det * hn);
        let e = nalgebra::SymmetricEigen::new(block.clone()).eigenvalues;
        if !(e.min() > 0.0) {
            return Err(Error::Assembly(format!(
                "mass block at {x:?} is not positive definite (min eigenvalue {})",
                e.min()
            )));
        }
        blocks.push(block);
    }
    Ok(BlockDiagonal::new(grid.dim(), blocks))
}

/// One covariant-derivative sample `eta_k = (1/h) d_k + e_k` expressed on
/// dofs: `d_k` carries integer-ish difference weights, `e_k` the
/// Christoffel coupling.
struct Sample {
    d: Vec<Vec<(usize, f64)>>,
    e: Vec<Vec<(usize, f64)>>,
}

fn push_quadratic(
    weight: &DMatrix<f64>,
    left: &[Vec<(usize, f64)>],
    right: &[Vec<(usize, f64)>],
    out: &mut TripletBuilder,
) {
    let n = weight.nrows();
    for k in 0..n {
        for l in 0..n {
            let w = weight[(k, l)];
            if w == 0.0 {
                continue;
            }
            for &(r, a) in &left[k] {
                for &(c, b) in &right[l] {
                    out.push(r, c, w * a * b);
                }
            }
        }
    }
}

/// Weak-form stiffness `S` realizing the quadratic form
/// `int |nabla w|_g^2 sqrt(g) dx + int <R w, w>_g sqrt(g) dx`.
///
/// Diagonal-direction terms (`i = j` in `g^ij g^kl nabla_i w_k nabla_j w_l`)
/// are sampled on grid edges with forward differences and edge-averaged
/// values; mixed-direction terms (`i != j`) at interior nodes with central
/// differences; the curvature weight at interior nodes.
pub fn assemble_h1_form(spec: &MetricSpec, grid: &Grid) -> Result<Csr> {
    let n = grid.dim();
    let h = grid.spacing();
    let hn = grid.cell_volume();
    let dim = grid.num_dofs();
    let mut a2 = TripletBuilder::new(dim, dim);
    let mut a1 = TripletBuilder::new(dim, dim);
    let mut a0 = TripletBuilder::new(dim, dim);

    for p in 0..grid.num_points() {
        for i in 0..n {
            let Some(pp) = grid.neighbor(p, i, 1) else { continue };
            if !grid.is_interior(p) && !grid.is_interior(pp) {
                continue;
            }
            let mid = grid.edge_midpoint(p, i);
            let pt = eval_metric(spec, &mid)?;
            let der = metric_derivatives(spec, &mid, 1)?;
            let gamma = christoffel_from(&pt, &der);
            let mut s = Sample {
                d: vec![Vec::new(); n],
                e: vec![Vec::new(); n],
            };
            for k in 0..n {
                if let Some(c) = dof(grid, pp, k) {
                    s.d[k].push((c, 1.0));
                }
                if let Some(c) = dof(grid, p, k) {
                    s.d[k].push((c, -1.0));
                }
                for a in 0..n {
                    let gm = gamma[(a, i, k)];
                    if gm == 0.0 {
                        continue;
                    }
                    for q in [p, pp] {
                        if let Some(c) = dof(grid, q, a) {
                            s.e[k].push((c, -0.5 * gm));
                        }
                    }
                }
            }
            let weight = &pt.g_upper * (pt.g_upper[(i, i)] * pt.sqrt_det);
            push_quadratic(&weight, &s.d, &s.d, &mut a2);
            push_quadratic(&weight, &s.d, &s.e, &mut a1);
            push_quadratic(&weight, &s.e, &s.d, &mut a1);
            push_quadratic(&weight, &s.e, &s.e, &mut a0);
        }
    }

    for p in grid.interior_points() {
        let x = grid.coords(p);
        let pg = point_geometry(spec, &x)?;
        let gu = &pg.metric.g_upper;
        let mixed = (0..n).any(|i| (0..n).any(|j| i != j && gu[(i, j)] != 0.0));
        if mixed {
            // central-difference samples for every direction
            let samples: Vec<Sample> = (0..n)
                .map(|i| {
                    let mut s = Sample {
                        d: vec![Vec::new(); n],
                        e: vec![Vec::new(); n],
                    };
                    for k in 0..n {
                        for (step, wgt) in [(1, 0.5), (-1, -0.5)] {
                            if let Some(c) = grid.neighbor(p, i, step).and_then(|q| dof(grid, q, k)) {
                                s.d[k].push((c, wgt));
                            }
                        }
                        for a in 0..n {
                            let gm = pg.geometry.christoffel[(a, i, k)];
                            if gm != 0.0 {
                                s.e[k].push((dof(grid, p, a).unwrap(), -gm));
                            }
                        }
                    }
                    s
                })
                .collect();
            for i in 0..n {
                for j in 0..n {
                    if i == j || gu[(i, j)] == 0.0 {
                        continue;
                    }
                    let weight = gu * (gu[(i, j)] * pg.metric.sqrt_det);
                    let (si, sj) = (&samples[i], &samples[j]);
                    push_quadratic(&weight, &si.d, &sj.d, &mut a2);
                    push_quadratic(&weight, &si.d, &sj.e, &mut a1);
                    push_quadratic(&weight, &si.e, &sj.d, &mut a1);
                    push_quadratic(&weight, &si.e, &sj.e, &mut a0);
                }
            }
        }
        let rw = curvature_weight(&pg);
        for a in 0..n {
            for b in 0..n {
                if rw[(a, b)] != 0.0 {
                    a0.push(dof(grid, p, a).unwrap(), dof(grid, p, b).unwrap(), rw[(a, b)]);
                }
            }
        }
    }

    let (a2, a1, a0) = (a2.build(), a1.build(), a0.build());
    let s = Csr::linear_combination(&[(&a2, 1.0 / (h * h)), (&a1, 1.0 / h), (&a0, 1.0)]);
    Ok(s.scaled(hn).symmetrized())
}

/// Strong-form stencil row contributions for one coefficient of the 2-jet.
struct StencilWriter<'a> {
    grid: &'a Grid,
    p: usize,
    row: usize,
    inv_h: f64,
    inv_h2: f64,
}

impl StencilWriter<'_> {
    fn at(&self, offsets: &[(usize, i64)]) -> Option<usize> {
        let mut q = self.p;
        for &(axis, step) in offsets {
            q = self.grid.neighbor(q, axis, step)?;
        }
        Some(q)
    }

    /// `coef * d_i d_j w_a`
    fn second(&self, b: &mut TripletBuilder, a: usize, i: usize, j: usize, coef: f64) {
        if coef == 0.0 {
            return;
        }
        if i == j {
            for (offs, w) in [(vec![(i, 1)], 1.0), (vec![], -2.0), (vec![(i, -1)], 1.0)] {
                if let Some(c) = self.at(&offs).and_then(|q| dof(self.grid, q, a)) {
                    b.push(self.row, c, coef * w * self.inv_h2);
                }
            }
        } else {
            for (si, sj, w) in [(1, 1, 0.25), (1, -1, -0.25), (-1, 1, -0.25), (-1, -1, 0.25)] {
                if let Some(c) = self.at(&[(i, si), (j, sj)]).and_then(|q| dof(self.grid, q, a)) {
                    b.push(self.row, c, coef * w * self.inv_h2);
                }
            }
        }
    }

    /// `coef * d_m w_a`
    fn first(&self, b: &mut TripletBuilder, a: usize, m: usize, coef: f64) {
        if coef == 0.0 {
            return;
        }
        for (step, w) in [(1, 0.5), (-1, -0.5)] {
            if let Some(c) = self.at(&[(m, step)]).and_then(|q| dof(self.grid, q, a)) {
                b.push(self.row, c, coef * w * self.inv_h);
            }
        }
    }

    /// `coef * w_a`
    fn zeroth(&self, b: &mut TripletBuilder, a: usize, coef: f64) {
        if coef != 0.0 {
            b.push(self.row, dof(self.grid, self.p, a).unwrap(), coef);
        }
    }
}

/// Strong-form Weitzenböck operator `W` (from the nested covariant form)
/// and the perturbation `V` (from the expanded coefficient groups),
/// assembled independently with the same stencils.
pub fn assemble_h1_weitzenbock(spec: &MetricSpec, grid: &Grid) -> Result<(Csr, Csr)> {
    let n = grid.dim();
    let dim = grid.num_dofs();
    let h = grid.spacing();
    let mut wb = TripletBuilder::new(dim, dim);
    let mut vb = TripletBuilder::new(dim, dim);
    for p in grid.interior_points() {
        let x = grid.coords(p);
        let pg = point_geometry(spec, &x)?;
        let jet = weitzenbock_jet_from(&pg);
        let pc = perturbation_coefficients_from(&pg);
        for k in 0..n {
            let sw = StencilWriter {
                grid,
                p,
                row: dof(grid, p, k).unwrap(),
                inv_h: 1.0 / h,
                inv_h2: 1.0 / (h * h),
            };
            for a in 0..n {
                for i in 0..n {
                    for j in i..n {
                        sw.second(&mut wb, a, i, j, jet.second[(k, a, i, j)]);
                    }
                    sw.first(&mut wb, a, i, jet.first[(k, a, i)]);
                }
                sw.zeroth(&mut wb, a, jet.zeroth[(k, a)]);
            }

            // (delta^ij - g^ij) d_i d_j w_k
            for i in 0..n {
                sw.second(&mut vb, k, i, i, pc.second_order[(i, i)]);
                for j in i + 1..n {
                    sw.second(&mut vb, k, i, j, pc.second_order[(i, j)] + pc.second_order[(j, i)]);
                }
            }
            for a in 0..n {
                for d in 0..n {
                    // g^ij Gamma^a_jk d_i w_a
                    sw.first(&mut vb, a, d, pc.first_contracted_jk[(k, a, d)]);
                    // g^ij Gamma^a_ik d_j w_a
                    sw.first(&mut vb, a, d, pc.first_contracted_ik[(k, a, d)]);
                }
                // g^ij Gamma^a_ij d_a w_k
                sw.first(&mut vb, k, a, pc.first_trace[a]);
                sw.zeroth(&mut vb, a, pc.zeroth_dgamma[(k, a)]);
                sw.zeroth(&mut vb, a, -pc.zeroth_trace_gamma[(k, a)]);
                sw.zeroth(&mut vb, a, -pc.zeroth_gamma_gamma[(k, a)]);
                sw.zeroth(&mut vb, a, pc.ricci[(k, a)]);
            }
        }
    }
    Ok((wb.build(), vb.build()))
}

/// `||W - H0 - V||_max / ||W||_max`.
pub fn weitzenbock_defect(w: &Csr, h0: &Csr, v: &Csr) -> f64 {
    let d = Csr::linear_combination(&[(w, 1.0), (h0, -1.0), (v, -1.0)]);
    let scale = w.max_abs();
    if scale == 0.0 {
        d.max_abs()
    } else {
        d.max_abs() / scale
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum JDirection {
    /// `J`: the identity on coefficients.
    Forward,
    /// `J*`: pointwise multiplication by `sqrt(g) g^ij`.
    Adjoint,
}

/// Applies `J` or `J*` to a dof vector.
pub fn apply_j_and_adjoint(spec: &MetricSpec, grid: &Grid, direction: JDirection, field: &[f64]) -> Result<Vec<f64>> {
    if field.len() != grid.num_dofs() {
        return crate::error::input("field length does not match the grid");
    }
    match direction {
        JDirection::Forward => Ok(field.to_vec()),
        JDirection::Adjoint => Ok(jstar_blocks(spec, grid)?.apply(field)),
    }
}

/// Blocks `sqrt(g) g^jk` of `J*`.
pub fn jstar_blocks(spec: &MetricSpec, grid: &Grid) -> Result<BlockDiagonal> {
    let mut blocks = Vec::with_capacity(grid.num_interior());
    for p in grid.interior_points() {
        let pt = eval_metric(spec, &grid.coords(p))?;
        blocks.push(&pt.g_upper * pt.sqrt_det);
    }
    Ok(BlockDiagonal::new(grid.dim(), blocks))
}

/// Blocks `sqrt(g) g^jk - delta^jk` of `J*J - I`.
pub fn jstar_j_minus_identity(spec: &MetricSpec, grid: &Grid) -> Result<BlockDiagonal> {
    let n = grid.dim();
    let js = jstar_blocks(spec, grid)?;
    let blocks = js
        .blocks()
        .iter()
        .map(|b| b - DMatrix::<f64>::identity(n, n))
        .collect();
    Ok(BlockDiagonal::new(n, blocks))
}

/// All discrete operators for one `(metric, grid)` pair.
#[derive(Clone, Debug)]
pub struct AssembledOperators {
    pub metric: MetricSpec,
    pub grid: Grid,
    pub h0: Csr,
    pub mass: BlockDiagonal,
    pub stiffness: Csr,
    pub weitzenbock: Csr,
    pub perturbation: Csr,
    /// `M^(1/2)` and `M^(-1/2)`, computed blockwise.
    pub mass_sqrt: BlockDiagonal,
    pub mass_inv_sqrt: BlockDiagonal,
    /// `M^(-1/2) S M^(-1/2)`, exactly symmetric.
    pub reduced: Csr,
    /// Curvature weight blocks `sqrt(g) R^ib h^n` (the curvature part of `S`).
    pub curvature_blocks: BlockDiagonal,
    /// Measured `||W - H0 - V||_max / ||W||_max`.
    pub weitzenbock_defect: f64,
    /// Set when a test-only potential well has been added to `S`.
    pub doctored: bool,
}

impl AssembledOperators {
    pub fn assemble(spec: &MetricSpec, grid_spec: GridSpec) -> Result<Self> {
        spec.validate()?;
        if spec.dimension != grid_spec.dimension {
            return crate::error::input(format!(
                "metric dimension {} does not match grid dimension {}",
                spec.dimension, grid_spec.dimension
            ));
        }
        let grid = build_grid(grid_spec)?;
        let h0 = assemble_h0(&grid);
        let mass = assemble_mass(spec, &grid)?;
        let stiffness = assemble_h1_form(spec, &grid)?;
        let (weitzenbock, perturbation) = assemble_h1_weitzenbock(spec, &grid)?;
        let defect = weitzenbock_defect(&weitzenbock, &h0, &perturbation);
        if defect > WEITZENBOCK_IDENTITY_TOL {
            return Err(Error::Consistency(format!(
                "W - H0 - V relative defect {defect:e} exceeds {WEITZENBOCK_IDENTITY_TOL:e}"
            )));
        }
        let hn = grid.cell_volume();
        let mut curv = Vec::with_capacity(grid.num_interior());
        for p in grid.interior_points() {
            let pg = point_geometry(spec, &grid.coords(p))?;
            curv.push(curvature_weight(&pg) * hn);
        }
        let curvature_blocks = BlockDiagonal::new(grid.dim(), curv);
        let mass_sqrt = mass.map_spectrum(f64::sqrt);
        let mass_inv_sqrt = mass.map_spectrum(|v| 1.0 / v.sqrt());
        let reduced = mass_inv_sqrt.congruence(&stiffness);
        Ok(AssembledOperators {
            metric: spec.clone(),
            grid,
            h0,
            mass,
            stiffness,
            weitzenbock,
            perturbation,
            mass_sqrt,
            mass_inv_sqrt,
            reduced,
            curvature_blocks,
            weitzenbock_defect: defect,
            doctored: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.grid.num_dofs()
    }

    /// `M^-1 S w` on dofs.
    pub fn weak_operator_apply(&self, w: &[f64]) -> Vec<f64> {
        let s = self.stiffness.mul_vec(w);
        let inv = self.mass.map_spectrum(|v| 1.0 / v);
        inv.apply(&s)
    }

    /// Test hook: adds `depth * M` on the interior points within `radius`
    /// of `center` to `S` (a potential well of height `depth`).
    pub fn with_potential_well(&self, center: &[f64], radius: f64, depth: f64) -> Self {
        let n = self.grid.dim();
        let mut b = TripletBuilder::new(self.dim(), self.dim());
        for (q, p) in self.grid.interior_points().enumerate() {
            let x = self.grid.coords(p);
            let d2: f64 = x.iter().zip(center).map(|(a, c)| (a - c).powi(2)).sum();
            if d2 <= radius * radius {
                let m = self.mass.block(q);
                for a in 0..n {
                    for c in 0..n {
                        b.push(q * n + a, q * n + c, depth * m[(a, c)]);
                    }
                }
            }
        }
        let well = b.build();
        let mut out = self.clone();
        out.stiffness = Csr::linear_combination(&[(&self.stiffness, 1.0), (&well, 1.0)]).symmetrized();
        out.reduced = out.mass_inv_sqrt.congruence(&out.stiffness);
        out.doctored = true;
        out
    }

    /// Writes `h0.txt`, `mass.txt`, `stiffness.txt`, `weitzenbock.txt` and
    /// `perturbation.txt` sparse-triplet dumps into `dir`.
    pub fn dump_triplets(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, m) in [
            ("h0", &self.h0),
            ("mass", &self.mass.to_csr()),
            ("stiffness", &self.stiffness),
            ("weitzenbock", &self.weitzenbock),
            ("perturbation", &self.perturbation),
        ] {
            let f = std::fs::File::create(dir.join(format!("{name}.txt")))?;
            m.write_triplets(std::io::BufWriter::new(f))?;
        }
        Ok(())
    }
}
