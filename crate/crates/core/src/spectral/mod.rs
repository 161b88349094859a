//! Eigenvalues, density of states and spectral projectors of the pencil
//! `(S, M)` and of `H0`.
//!
//! Everything runs on the symmetric reduction `A = M^(-1/2) S M^(-1/2)`,
//! whose spectrum is that of the pencil.

pub mod chebyshev;
pub mod dos;
pub mod filter;
pub mod krylov;

use serde::{Deserialize, Serialize};

use crate::assembly::AssembledOperators;
use crate::error::{input, Result};
use crate::grid::GridSpec;
use crate::metric::MetricSpec;
use crate::sparse::Csr;
use chebyshev::ChebyshevScaling;
use dos::{stochastic_moments, CountingFunction};
use filter::SpectralFilter;
pub use krylov::Which;

pub const DEFAULT_EIG_TOL: f64 = 1e-8;
pub const DEFAULT_MOMENTS: usize = 200;
pub const DEFAULT_PROBES: usize = 32;
/// Padding of the Gershgorin enclosure, as a fraction of its width.
pub const ENCLOSURE_PAD: f64 = 0.01;
/// Allowed relative deviation of the lowest Ritz value from the flat gap.
pub const GAP_TOLERANCE: f64 = 0.2;

const EIG_SEED: u64 = 0x5eed_e165;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub metric: MetricSpec,
    pub grid: GridSpec,
}

impl Provenance {
    pub fn of(ops: &AssembledOperators) -> Self {
        Provenance {
            metric: ops.metric.clone(),
            grid: ops.grid.spec(),
        }
    }
}

/// Ritz pairs of the pencil `(S, M)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub count: usize,
    pub which: Which,
    pub values: Vec<f64>,
    /// `||S v - lambda M v|| / ||M v||` per pair.
    pub residuals: Vec<f64>,
    pub tolerance: f64,
    pub restarts: usize,
    pub matvecs: usize,
    pub converged: bool,
    pub provenance: Provenance,
    #[serde(skip)]
    pub vectors: Vec<Vec<f64>>,
}

/// Gershgorin enclosure of a symmetric matrix as a Chebyshev scaling.
pub fn enclosure(a: &Csr) -> ChebyshevScaling {
    let (lo, hi) = a.gershgorin();
    ChebyshevScaling::from_bounds(lo, hi, ENCLOSURE_PAD)
}

/// Extremal generalized eigenpairs of `(S, M)`; eigenvectors are returned
/// in the original (non-orthonormal) coordinates.
pub fn extremal_eigs(ops: &AssembledOperators, which: Which, count: usize, tol: f64, seed: u64) -> Result<SpectralReport> {
    if count == 0 {
        return input("eigenvalue count must be at least 1");
    }
    if !(tol > 0.0) {
        return input("eigenvalue tolerance must be positive");
    }
    let (mlo, mhi) = ops.mass.eigen_range();
    let kappa = mhi / mlo;
    let mut opts = krylov::KrylovOptions::new(count, which, tol / kappa.sqrt(), seed ^ EIG_SEED);
    opts.max_restarts = 500;
    let r = krylov::eigs(&ops.reduced, &opts);
    let mut residuals = Vec::with_capacity(r.values.len());
    let mut vectors = Vec::with_capacity(r.values.len());
    for (y, lam) in r.vectors.iter().zip(&r.values) {
        let v = ops.mass_inv_sqrt.apply(y);
        let sv = ops.stiffness.mul_vec(&v);
        let mv = ops.mass.apply(&v);
        let num: f64 = sv.iter().zip(&mv).map(|(a, b)| (a - lam * b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = mv.iter().map(|b| b * b).sum::<f64>().sqrt();
        residuals.push(num / den);
        vectors.push(v);
    }
    let converged = r.converged && residuals.iter().all(|x| *x <= tol);
    Ok(SpectralReport {
        count,
        which,
        values: r.values,
        residuals,
        tolerance: tol,
        restarts: r.restarts,
        matvecs: r.matvecs,
        converged,
        provenance: Provenance::of(ops),
        vectors,
    })
}

/// Binned integrated density of states, normalized per unknown.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DosHistogram {
    pub interval: (f64, f64),
    pub edges: Vec<f64>,
    pub bins: Vec<f64>,
    /// Counting function at each edge.
    pub cumulative: Vec<f64>,
    pub probes: usize,
    pub moments: usize,
    pub seed: u64,
    pub dimension: usize,
}

impl DosHistogram {
    pub fn total(&self) -> f64 {
        self.bins.iter().sum()
    }

    /// Relative L1 distance of the cumulative curves; both histograms must
    /// share their edges.
    pub fn cumulative_l1(&self, reference: &DosHistogram) -> Result<f64> {
        if self.edges != reference.edges {
            return input("histograms have different bin edges");
        }
        Ok(dos::relative_l1(&self.cumulative, &reference.cumulative))
    }
}

/// Kernel-polynomial DOS of any symmetric matrix on `interval`.
pub fn kpm_dos(
    a: &Csr,
    upper_limit: f64,
    interval: (f64, f64),
    bins: usize,
    probes: usize,
    moments: usize,
    seed: u64,
) -> Result<DosHistogram> {
    let (lo, hi) = interval;
    if probes < 8 {
        return input(format!("need at least 8 probes, got {probes}"));
    }
    if bins == 0 || moments < 2 {
        return input("need at least one bin and two moments");
    }
    if !(lo < hi) || lo < 0.0 || hi > upper_limit {
        return input(format!("DOS interval [{lo}, {hi}] outside the spectral bounds [0, {upper_limit}]"));
    }
    let scaling = enclosure(a);
    let mu = stochastic_moments(a, &scaling, moments, probes, seed);
    let count = CountingFunction::new(scaling, &mu);
    let edges: Vec<f64> = (0..=bins).map(|k| lo + (hi - lo) * k as f64 / bins as f64).collect();
    let cumulative: Vec<f64> = edges.iter().map(|&e| count.eval(e)).collect();
    let b = cumulative.windows(2).map(|w| (w[1] - w[0]).max(0.0)).collect();
    Ok(DosHistogram {
        interval,
        edges,
        bins: b,
        cumulative,
        probes,
        moments,
        seed,
        dimension: a.rows(),
    })
}

/// Integrated DOS of the pencil on `interval`, which must lie inside
/// `[0, max(4n/h^2, Gershgorin bound)]`.
pub fn density_of_states(ops: &AssembledOperators, interval: (f64, f64), bins: usize, probes: usize, seed: u64) -> Result<DosHistogram> {
    density_of_states_with_moments(ops, interval, bins, probes, DEFAULT_MOMENTS, seed)
}

pub fn density_of_states_with_moments(
    ops: &AssembledOperators,
    interval: (f64, f64),
    bins: usize,
    probes: usize,
    moments: usize,
    seed: u64,
) -> Result<DosHistogram> {
    let h = ops.grid.spacing();
    let limit = (4.0 * ops.grid.dim() as f64 / (h * h)).max(ops.reduced.gershgorin().1);
    kpm_dos(&ops.reduced, limit, interval, bins, probes, moments, seed)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterTarget {
    H0,
    H1,
}

/// Filter for `E_I` of `target` built on its Gershgorin enclosure.
pub fn build_filter(ops: &AssembledOperators, target: FilterTarget, interval: (f64, f64), tol: f64) -> Result<SpectralFilter> {
    let a = match target {
        FilterTarget::H0 => &ops.h0,
        FilterTarget::H1 => &ops.reduced,
    };
    SpectralFilter::new(enclosure(a), interval, tol)
}

/// `E_I v` for `H0` (Euclidean coordinates) or for the pencil (original
/// coordinates, orthogonal in the `M` inner product).
pub fn spectral_filter_apply(
    ops: &AssembledOperators,
    target: FilterTarget,
    interval: (f64, f64),
    v: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let f = build_filter(ops, target, interval, tol)?;
    Ok(apply_built_filter(ops, target, &f, v))
}

pub fn apply_built_filter(ops: &AssembledOperators, target: FilterTarget, f: &SpectralFilter, v: &[f64]) -> Vec<f64> {
    match target {
        FilterTarget::H0 => f.apply(&ops.h0, v),
        FilterTarget::H1 => {
            let y = ops.mass_sqrt.apply(v);
            let fy = f.apply(&ops.reduced, &y);
            ops.mass_inv_sqrt.apply(&fy)
        }
    }
}

/// `||E(E v) - E v|| / ||v||` in the target's own norm.
pub fn idempotence_defect(ops: &AssembledOperators, target: FilterTarget, f: &SpectralFilter, v: &[f64]) -> f64 {
    let e1 = apply_built_filter(ops, target, f, v);
    let e2 = apply_built_filter(ops, target, f, &e1);
    let d: Vec<f64> = e2.iter().zip(&e1).map(|(a, b)| a - b).collect();
    let nrm = |x: &[f64]| match target {
        FilterTarget::H0 => x.iter().map(|a| a * a).sum::<f64>().sqrt(),
        FilterTarget::H1 => ops.mass_sqrt.apply(x).iter().map(|a| a * a).sum::<f64>().sqrt(),
    };
    nrm(&d) / nrm(v)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteSpectrumVerdict {
    pub pass: bool,
    pub lowest: f64,
    pub flat_reference_gap: f64,
    pub relative_deviation: f64,
    /// Ritz values below `-tol`.
    pub negative_values: Vec<f64>,
    pub tolerance: f64,
    pub converged: bool,
    pub note: String,
}

/// Lowest pencil eigenvalue with the flat metric on the same grid.
pub fn flat_reference_gap(grid: GridSpec, tol: f64) -> Result<f64> {
    let ops = AssembledOperators::assemble(&MetricSpec::flat(grid.dimension), grid)?;
    let r = extremal_eigs(&ops, Which::Smallest, 1, tol, 0)?;
    Ok(r.values[0])
}

/// No Ritz value below `-tol` and the lowest within 20% of the flat box gap.
pub fn detect_discrete_spectrum(ops: &AssembledOperators, flat_reference_gap: f64, tol: f64) -> Result<DiscreteSpectrumVerdict> {
    let r = extremal_eigs(ops, Which::Smallest, 4, tol, 0)?;
    discrete_spectrum_verdict(&r, flat_reference_gap)
}

/// The same verdict applied to an existing report of smallest Ritz values.
pub fn discrete_spectrum_verdict(r: &SpectralReport, flat_reference_gap: f64) -> Result<DiscreteSpectrumVerdict> {
    if r.which != Which::Smallest || r.values.is_empty() {
        return input("discrete-spectrum verdict needs the smallest Ritz values");
    }
    if !(flat_reference_gap > 0.0) {
        return input("flat reference gap must be positive");
    }
    let tol = r.tolerance;
    let lowest = r.values[0];
    let negative_values: Vec<f64> = r.values.iter().copied().filter(|v| *v < -tol).collect();
    let relative_deviation = (lowest - flat_reference_gap).abs() / flat_reference_gap;
    let pass = r.converged && negative_values.is_empty() && relative_deviation <= GAP_TOLERANCE;
    Ok(DiscreteSpectrumVerdict {
        pass,
        lowest,
        flat_reference_gap,
        relative_deviation,
        negative_values,
        tolerance: tol,
        converged: r.converged,
        note: "a finite box always has discrete spectrum; the verdict compares against the flat Dirichlet gap".into(),
    })
}
