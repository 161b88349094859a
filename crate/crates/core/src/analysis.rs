//! Numerical audits of the analytic lemmas: quadratic forms and their
//! mutual bounds, weighted `L^2` membership of decaying coefficients, and
//! singular values of the filtered commutator.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::assembly::AssembledOperators;
use crate::blocks::BlockDiagonal;
use crate::error::{input, Error, Result};
use crate::geometry::{christoffel_from, curvature_weight, perturbation_coefficients_from, point_geometry, scan_curvature_bound, PerturbationCoefficients};
use crate::grid::{Grid, GridSpec, OneFormGrid};
use crate::metric::{eval_metric, metric_derivatives, sample_directions, validate_decay_inputs, DecayReport, MetricSpec};
use crate::spectral::chebyshev::LinearOperator;
use crate::spectral::filter::SpectralFilter;
use crate::spectral::krylov::{eigs, KrylovOptions, Which};
use crate::spectral::enclosure;

/// `a` bound for the form-domain verdict.
pub const FORM_CONSTANT_CAP: f64 = 10.0;
/// Tail increment, relative to the running total, below which the
/// weighted norm counts as convergent.
pub const L2_CONVERGENCE_FRACTION: f64 = 0.01;
/// Threshold on the relative change of the commutator partial sum.
pub const COMMUTATOR_STABILITY_CAP: f64 = 0.10;
pub const MAX_COMMUTATOR_RANK: usize = 64;

/// Relative amplitude allowed on the outermost interior layer before a form
/// counts as boundary supported.
const BOUNDARY_LEAK: f64 = 1e-6;
const SIMPSON_PANELS: usize = 128;
const CURVATURE_SCAN_POINTS: usize = 2000;
const CURVATURE_SCAN_SEED: u64 = 0xc0e7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormsReport {
    pub form_id: String,
    pub h0: f64,
    pub h1: f64,
    pub h1_gradient: f64,
    pub h1_curvature: f64,
    /// `||w||_e^2 = h^n sum |w|^2`.
    pub norm_sq: f64,
}

fn check_compact(grid: &Grid, w: &OneFormGrid) -> Result<()> {
    if w.components() != grid.dim() || w.values().len() != grid.num_points() * grid.dim() {
        return input("form does not match the grid");
    }
    let peak = w.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut edge = 0.0f64;
    for p in 0..grid.num_points() {
        if grid.cells_to_boundary(p) <= 1 {
            for k in 0..grid.dim() {
                edge = edge.max(w.get(k, p).abs());
            }
        }
    }
    if edge > BOUNDARY_LEAK * peak {
        return input(format!(
            "form is supported on the boundary layer (relative amplitude {:e})",
            edge / peak
        ));
    }
    Ok(())
}

/// `h0`, the gradient and curvature parts of `h1`, and `||w||^2` by direct
/// quadrature on the grid (edges for same-direction terms, nodes for mixed
/// directions and curvature).
pub fn evaluate_quadratic_forms(spec: &MetricSpec, grid: &Grid, w: &OneFormGrid, form_id: &str) -> Result<FormsReport> {
    spec.validate()?;
    if spec.dimension != grid.dim() {
        return input("metric and grid dimensions differ");
    }
    check_compact(grid, w)?;
    let n = grid.dim();
    let h = grid.spacing();
    let hn = grid.cell_volume();
    let mut h0 = 0.0;
    let mut grad = 0.0;
    let mut eta = vec![0.0; n];
    for p in 0..grid.num_points() {
        for i in 0..n {
            let Some(pp) = grid.neighbor(p, i, 1) else { continue };
            if !grid.is_interior(p) && !grid.is_interior(pp) {
                continue;
            }
            let mid = grid.edge_midpoint(p, i);
            let pt = eval_metric(spec, &mid)?;
            let gamma = christoffel_from(&pt, &metric_derivatives(spec, &mid, 1)?);
            for k in 0..n {
                let d = (w.get(k, pp) - w.get(k, p)) / h;
                h0 += d * d;
                let mut c = 0.0;
                for a in 0..n {
                    c += gamma[(a, i, k)] * 0.5 * (w.get(a, p) + w.get(a, pp));
                }
                eta[k] = d - c;
            }
            let s = pt.g_upper[(i, i)] * pt.sqrt_det;
            grad += s * quad(&pt.g_upper, &eta, &eta);
        }
    }
    let mut curv = 0.0;
    let mut norm_sq = 0.0;
    for p in grid.interior_points() {
        let x = grid.coords(p);
        let pg = point_geometry(spec, &x)?;
        let gu = &pg.metric.g_upper;
        let wp: Vec<f64> = (0..n).map(|k| w.get(k, p)).collect();
        norm_sq += wp.iter().map(|v| v * v).sum::<f64>();
        curv += quad(&curvature_weight(&pg), &wp, &wp);
        for i in 0..n {
            for j in 0..n {
                if i == j || gu[(i, j)] == 0.0 {
                    continue;
                }
                let central = |dir: usize| -> Vec<f64> {
                    let f = grid.neighbor(p, dir, 1).unwrap();
                    let b = grid.neighbor(p, dir, -1).unwrap();
                    (0..n)
                        .map(|k| {
                            let mut v = (w.get(k, f) - w.get(k, b)) / (2.0 * h);
                            for a in 0..n {
                                v -= pg.geometry.christoffel[(a, dir, k)] * wp[a];
                            }
                            v
                        })
                        .collect()
                };
                grad += gu[(i, j)] * pg.metric.sqrt_det * quad(gu, &central(i), &central(j));
            }
        }
    }
    let (h0, grad, curv) = (hn * h0, hn * grad, hn * curv);
    Ok(FormsReport {
        form_id: form_id.to_string(),
        h0,
        h1: grad + curv,
        h1_gradient: grad,
        h1_curvature: curv,
        norm_sq: hn * norm_sq,
    })
}

fn quad(m: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for k in 0..a.len() {
        for l in 0..b.len() {
            s += m[(k, l)] * a[k] * b[l];
        }
    }
    s
}

/// Test form with its identifier.
#[derive(Clone, Debug)]
pub struct TestForm {
    pub id: String,
    pub form: OneFormGrid,
}

/// Gaussian bumps at 5 seeded centers and 2 widths, plus bumps modulated
/// at 2 frequencies on the same centers, each in every polarization.
pub fn standard_test_family(grid: &Grid, seed: u64) -> Result<Vec<TestForm>> {
    let n = grid.dim();
    let l = grid.half_width();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<Vec<f64>> = (0..5)
        .map(|c| {
            if c == 0 {
                vec![0.0; n]
            } else {
                (0..n).map(|_| rng.gen_range(-0.3 * l..0.3 * l)).collect()
            }
        })
        .collect();
    let widths = [l / 12.0, l / 20.0];
    let freqs = [1.0, 2.5];
    let mut out = Vec::new();
    for (ci, c) in centers.iter().enumerate() {
        let mut shapes: Vec<(String, f64, f64)> = widths
            .iter()
            .enumerate()
            .map(|(wi, w)| (format!("bump-c{ci}-w{wi}"), *w, 0.0))
            .collect();
        shapes.extend(freqs.iter().enumerate().map(|(fi, f)| (format!("wave-c{ci}-f{fi}"), widths[0], *f)));
        for (name, w, f) in shapes {
            for k in 0..n {
                let form = OneFormGrid::from_fn(grid, |x| {
                    let r2: f64 = x.iter().zip(c).map(|(a, b)| (a - b).powi(2)).sum();
                    let amp = (-r2 / (2.0 * w * w)).exp() * (f * (x[0] - c[0])).cos();
                    let mut v = vec![0.0; n];
                    v[k] = amp;
                    v
                })?;
                out.push(TestForm {
                    id: format!("{name}-e{k}"),
                    form,
                });
            }
        }
    }
    Ok(out)
}

/// Constants of `upper <= a lower + b ||w||^2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormBound {
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormEquivalence {
    /// `h1 <= a h0 + b ||w||^2`.
    pub forward: FormBound,
    /// `h0 <= a h1 + b ||w||^2`.
    pub reverse: FormBound,
    /// Curvature bound used as `b` in both directions.
    pub curvature_bound: f64,
    pub forms: Vec<FormsReport>,
    pub pass: bool,
}

/// Curvature constant for `spec` on `grid`: the larger of the scan bound
/// and the spectral radius of the curvature weight at grid nodes.
pub fn curvature_constant(spec: &MetricSpec, grid: &Grid) -> Result<f64> {
    let mut c = scan_curvature_bound(spec, grid.half_width(), CURVATURE_SCAN_POINTS, CURVATURE_SCAN_SEED)?;
    for p in grid.interior_points() {
        let w = curvature_weight(&point_geometry(spec, &grid.coords(p))?);
        if w.amax() > 0.0 {
            c = c.max(nalgebra::SymmetricEigen::new(w).eigenvalues.amax());
        }
    }
    Ok(c)
}

fn fit(pairs: impl Iterator<Item = (f64, f64, f64)>, b: f64) -> f64 {
    // (upper, lower, norm^2) -> smallest a with upper <= a lower + b norm^2
    let mut a = 0.0f64;
    for (upper, lower, nsq) in pairs {
        let excess = upper - b * nsq;
        if excess <= 0.0 {
            continue;
        }
        a = if lower > 0.0 { a.max(excess / lower) } else { f64::INFINITY };
    }
    a
}

/// Two-sided constants between `h0` and `h1` over a family of forms. The
/// zero form is skipped.
pub fn form_domain_equivalence(spec: &MetricSpec, grid: &Grid, family: &[TestForm]) -> Result<FormEquivalence> {
    let cr = curvature_constant(spec, grid)?;
    let mut forms = Vec::with_capacity(family.len());
    for t in family {
        if t.form.values().iter().all(|v| *v == 0.0) {
            continue;
        }
        forms.push(evaluate_quadratic_forms(spec, grid, &t.form, &t.id)?);
    }
    let forward = FormBound {
        a: fit(forms.iter().map(|f| (f.h1, f.h0, f.norm_sq)), cr),
        b: cr,
    };
    let reverse = FormBound {
        a: fit(forms.iter().map(|f| (f.h0, f.h1, f.norm_sq)), cr),
        b: cr,
    };
    let pass = forward.a <= FORM_CONSTANT_CAP && reverse.a <= FORM_CONSTANT_CAP;
    Ok(FormEquivalence {
        forward,
        reverse,
        curvature_bound: cr,
        forms,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct L2DeltaReport {
    pub delta: f64,
    pub dimension: usize,
    pub radii: Vec<f64>,
    /// Running integral up to each radius.
    pub partial: Vec<f64>,
    pub value: f64,
    pub last_increment_fraction: f64,
    pub converged: bool,
}

fn sphere_area(n: usize) -> f64 {
    let h = 0.5 * n as f64;
    2.0 * std::f64::consts::PI.powf(h) / gamma(h)
}

fn simpson(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64, panels: usize) -> f64 {
    let m = panels + panels % 2;
    let h = (b - a) / m as f64;
    let mut s = f(a) + f(b);
    for k in 1..m {
        s += if k % 2 == 1 { 4.0 } else { 2.0 } * f(a + k as f64 * h);
    }
    s * h / 3.0
}

/// `int |f(|x|)|^2 (1+|x|^2)^delta dx` over balls of increasing radius in
/// polar coordinates. Requires `delta > n/2`.
pub fn l2_delta_norm(mut f: impl FnMut(f64) -> f64, delta: f64, n: usize, radii: &[f64]) -> Result<L2DeltaReport> {
    if n == 0 {
        return input("dimension must be at least 1");
    }
    if !(delta > 0.5 * n as f64) {
        return Err(Error::Hypothesis {
            condition: "lemma-f delta > n/2",
            detail: format!("delta = {delta} does not exceed n/2 = {}", 0.5 * n as f64),
        });
    }
    if radii.len() < 2 || radii[0] <= 0.0 || radii.windows(2).any(|w| w[1] <= w[0]) {
        return input("radius schedule must be positive, increasing, with at least 2 entries");
    }
    let area = sphere_area(n);
    let mut integrand = |r: f64| {
        let v = f(r);
        v * v * (1.0 + r * r).powf(delta) * r.powi(n as i32 - 1)
    };
    let mut partial = Vec::with_capacity(radii.len());
    let mut total = 0.0;
    let mut lo = 0.0;
    for &r in radii {
        total += area * simpson(&mut integrand, lo, r, SIMPSON_PANELS);
        partial.push(total);
        lo = r;
    }
    let k = partial.len();
    let inc = partial[k - 1] - partial[k - 2];
    let frac = if total == 0.0 { 0.0 } else { inc / total };
    Ok(L2DeltaReport {
        delta,
        dimension: n,
        radii: radii.to_vec(),
        partial,
        value: total,
        last_increment_fraction: frac,
        converged: frac < L2_CONVERGENCE_FRACTION,
    })
}

pub const AUDIT_QUANTITY_MASS: &str = "sqrt(g) g^jk - delta^jk";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientAudit {
    pub delta: f64,
    pub reports: Vec<DecayReport>,
    pub l2: Vec<L2DeltaReport>,
}

impl CoefficientAudit {
    pub fn pass(&self) -> bool {
        self.reports.iter().all(|r| r.pass) && self.l2.iter().all(|r| r.converged)
    }
}

fn audit_values(spec: &MetricSpec, x: &[f64]) -> Result<[f64; 9]> {
    let n = spec.dimension;
    let pg = point_geometry(spec, x)?;
    let pc: PerturbationCoefficients = perturbation_coefficients_from(&pg);
    let g = pc.group_maxima();
    let mass = (&pg.metric.g_upper * pg.metric.sqrt_det - DMatrix::identity(n, n)).amax();
    Ok([g[0], g[1], g[2], g[3], g[4], g[5], g[6], g[7], mass])
}

fn angular_profile(spec: &MetricSpec, r: f64) -> Result<[f64; 9]> {
    let mut m = [0.0f64; 9];
    for d in sample_directions(spec.dimension) {
        let x: Vec<f64> = d.iter().map(|v| v * r).collect();
        for (a, b) in m.iter_mut().zip(audit_values(spec, &x)?) {
            *a = a.max(b);
        }
    }
    Ok(m)
}

/// Decay profiles of the eight perturbation groups and of
/// `sqrt(g) g^jk - delta^jk`, each also checked for membership in
/// `L^2_delta` with `delta = n/2 + (k - n)/2`.
pub fn coefficient_decay_audit(spec: &MetricSpec, k_decay: f64, radii: &[f64]) -> Result<CoefficientAudit> {
    spec.validate()?;
    let n = spec.dimension;
    validate_decay_inputs(n, k_decay, radii)?;
    let delta = 0.5 * n as f64 + 0.5 * (k_decay - n as f64);
    let mut profiles = vec![Vec::new(); 9];
    for &r in radii {
        let m = angular_profile(spec, r)?;
        for (p, v) in profiles.iter_mut().zip(m) {
            p.push(v);
        }
    }
    let names: Vec<String> = PerturbationCoefficients::GROUP_NAMES
        .iter()
        .map(|s| s.to_string())
        .chain(std::iter::once(AUDIT_QUANTITY_MASS.to_string()))
        .collect();
    let mut reports = Vec::with_capacity(9);
    let mut l2 = Vec::with_capacity(9);
    for (q, (name, prof)) in names.iter().zip(profiles).enumerate() {
        reports.push(DecayReport::from_profile(name.clone(), radii, prof, k_decay));
        let mut err = None;
        let rep = l2_delta_norm(
            |r| match angular_profile(spec, r) {
                Ok(v) => v[q],
                Err(e) => {
                    err = Some(e);
                    0.0
                }
            },
            delta,
            n,
            radii,
        )?;
        if let Some(e) = err {
            return Err(e);
        }
        l2.push(rep);
    }
    Ok(CoefficientAudit { delta, reports, l2 })
}

/// `C = f(A) (A J - J H0) f(H0)` in orthonormal coordinates of both spaces,
/// with `J = M^(1/2) h^(-n/2)`.
struct FilteredCommutator<'a> {
    ops: &'a AssembledOperators,
    j: BlockDiagonal,
    f0: SpectralFilter,
    f1: SpectralFilter,
}

impl FilteredCommutator<'_> {
    fn apply_c(&self, u: &[f64]) -> Vec<f64> {
        let a = &self.ops.reduced;
        let h0 = &self.ops.h0;
        let x = self.f0.apply(h0, u);
        let ajx = a.mul_vec(&self.j.apply(&x));
        let jh0x = self.j.apply(&h0.mul_vec(&x));
        let d: Vec<f64> = ajx.iter().zip(&jh0x).map(|(p, q)| p - q).collect();
        self.f1.apply(a, &d)
    }

    fn apply_ct(&self, v: &[f64]) -> Vec<f64> {
        let a = &self.ops.reduced;
        let h0 = &self.ops.h0;
        let y = self.f1.apply(a, v);
        let jay = self.j.apply(&a.mul_vec(&y));
        let h0jy = h0.mul_vec(&self.j.apply(&y));
        let d: Vec<f64> = jay.iter().zip(&h0jy).map(|(p, q)| p - q).collect();
        self.f0.apply(h0, &d)
    }
}

struct Gram<'a>(&'a FilteredCommutator<'a>);

impl LinearOperator for Gram<'_> {
    fn dim(&self) -> usize {
        self.0.ops.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        y.copy_from_slice(&self.0.apply_ct(&self.0.apply_c(x)));
    }
}

/// `f(H0) D^2 f(H0)` with `D = J*J - I`.
struct DefectGram<'a> {
    ops: &'a AssembledOperators,
    d: BlockDiagonal,
    f0: &'a SpectralFilter,
}

impl LinearOperator for DefectGram<'_> {
    fn dim(&self) -> usize {
        self.ops.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let u = self.f0.apply(&self.ops.h0, x);
        let v = self.d.apply(&self.d.apply(&u));
        y.copy_from_slice(&self.f0.apply(&self.ops.h0, &v));
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CommutatorReport {
    pub interval: (f64, f64),
    pub rank: usize,
    pub singular_values: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// Singular values of `(J*J - I) E_I(H0)`.
    pub identification_defect_values: Vec<f64>,
    pub filter_tolerance: f64,
    pub filter_degrees: (usize, usize),
    pub grid_points: Vec<usize>,
    pub stability_ratio: Option<f64>,
    pub converged: bool,
}

impl CommutatorReport {
    pub fn partial_sum(&self) -> f64 {
        self.partial_sums.last().copied().unwrap_or(0.0)
    }
}

fn top_singular_values<Op: LinearOperator>(gram: &Op, rank: usize, seed: u64) -> (Vec<f64>, bool) {
    let mut opts = KrylovOptions::new(rank, Which::Largest, 1e-6, seed);
    opts.relative = true;
    opts.abs_floor = 1e-14;
    opts.max_basis = rank + 3 * opts.block_size;
    opts.max_restarts = 50;
    let r = eigs(gram, &opts);
    let mut s: Vec<f64> = r.values.iter().map(|v| v.max(0.0).sqrt()).collect();
    s.sort_by(|a, b| b.total_cmp(a));
    (s, r.converged)
}

/// Top-`rank` singular values of `E_I(H1)(H1 J - J H0)E_I(H0)` and of
/// `(J*J - I)E_I(H0)`, matrix-free.
pub fn commutator_singular_values(ops: &AssembledOperators, interval: (f64, f64), rank: usize, filter_tol: f64) -> Result<CommutatorReport> {
    if rank == 0 || rank > MAX_COMMUTATOR_RANK {
        return input(format!("commutator rank must be in 1..={MAX_COMMUTATOR_RANK}, got {rank}"));
    }
    let (lo, hi) = interval;
    if !(lo.is_finite() && hi.is_finite()) {
        return input("commutator interval must be bounded");
    }
    let f0 = SpectralFilter::new(enclosure(&ops.h0), interval, filter_tol)?;
    let f1 = SpectralFilter::new(enclosure(&ops.reduced), interval, filter_tol)?;
    let scale = 1.0 / ops.grid.cell_volume().sqrt();
    let j = ops.mass_sqrt.map_spectrum(|v| v * scale);
    let c = FilteredCommutator { ops, j, f0, f1 };
    let (singular_values, ok1) = top_singular_values(&Gram(&c), rank, 11);
    let n = ops.grid.dim();
    let hn = ops.grid.cell_volume();
    let d = BlockDiagonal::new(
        n,
        ops.mass.blocks().iter().map(|b| b / hn - DMatrix::identity(n, n)).collect(),
    );
    let dg = DefectGram { ops, d, f0: &c.f0 };
    let (identification_defect_values, ok2) = top_singular_values(&dg, rank, 12);
    let mut acc = 0.0;
    let partial_sums = singular_values
        .iter()
        .map(|s| {
            acc += s;
            acc
        })
        .collect();
    Ok(CommutatorReport {
        interval,
        rank,
        singular_values,
        partial_sums,
        identification_defect_values,
        filter_tolerance: filter_tol,
        filter_degrees: (c.f0.degree(), c.f1.degree()),
        grid_points: vec![ops.grid.points_per_axis()],
        stability_ratio: None,
        converged: ok1 && ok2,
    })
}

/// Commutator singular values on two grids over the same box; the report
/// of the finer grid carries the relative change of the partial sum.
pub fn commutator_stability(
    spec: &MetricSpec,
    coarse: GridSpec,
    fine: GridSpec,
    interval: (f64, f64),
    rank: usize,
    filter_tol: f64,
) -> Result<(CommutatorReport, CommutatorReport)> {
    if coarse.half_width != fine.half_width || coarse.dimension != fine.dimension {
        return input("stability grids must share the physical box");
    }
    let a = commutator_singular_values(&AssembledOperators::assemble(spec, coarse)?, interval, rank, filter_tol)?;
    let mut b = commutator_singular_values(&AssembledOperators::assemble(spec, fine)?, interval, rank, filter_tol)?;
    let pa = a.partial_sum();
    let ratio = if pa == 0.0 { 0.0 } else { (b.partial_sum() - pa).abs() / pa };
    b.grid_points = vec![coarse.points_per_axis, fine.points_per_axis];
    b.stability_ratio = Some(ratio);
    Ok((a, b))
}
