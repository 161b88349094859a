//! Wave packets, unitary evolution and finite-time wave-operator diagnostics.
//!
//! States are complex dof vectors (interior points only, `n` components per
//! point). `H0` evolves in the Euclidean inner product `h^n sum |x|^2`; the
//! pencil evolves in the `M` inner product.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::assembly::AssembledOperators;
use crate::error::{input, Error, Result};
use crate::grid::Grid;
use crate::sparse::Csr;
use crate::spectral::chebyshev::{apply_series_complex, bessel_j_sequence, bessel_tail_bound, ChebyshevScaling};
use crate::spectral::enclosure;

/// Packets must clear every face by this many widths.
pub const SUPPORT_MARGIN_WIDTHS: f64 = 6.0;
/// Boundary layer: outer fraction of the half width on each face.
pub const BOUNDARY_LAYER_FRACTION: f64 = 0.05;
pub const BOUNDARY_MASS_CAP: f64 = 1e-6;
pub const DEFAULT_PROPAGATION_TOL: f64 = 1e-8;
pub const DEFAULT_STEP_BUDGET: usize = 5_000_000;
pub const CAUCHY_DECAY_RATIO: f64 = 0.5;
pub const ISOMETRY_DEFECT_CAP: f64 = 0.05;

/// Largest `r * dt` per Chebyshev-Bessel step.
const MAX_STEP_ARGUMENT: f64 = 200.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WavePacketSpec {
    pub center: Vec<f64>,
    pub momentum: Vec<f64>,
    pub width: f64,
    pub polarization: Vec<f64>,
}

impl WavePacketSpec {
    /// Same packet reflected through the origin: `x0 -> -x0`, `xi -> -xi`.
    pub fn mirrored(&self) -> Self {
        WavePacketSpec {
            center: self.center.iter().map(|v| -v).collect(),
            momentum: self.momentum.iter().map(|v| -v).collect(),
            ..self.clone()
        }
    }
}

/// Modulated Gaussian `exp(-|x-x0|^2 / (2 s^2)) exp(i xi.x) e` normalized
/// to unit Euclidean norm.
pub fn make_wave_packet(wp: &WavePacketSpec, grid: &Grid) -> Result<Vec<Complex64>> {
    let n = grid.dim();
    if wp.center.len() != n || wp.momentum.len() != n || wp.polarization.len() != n {
        return input(format!("wave packet vectors must have {n} components"));
    }
    if !(wp.width > 0.0 && wp.width.is_finite()) {
        return input(format!("wave packet width must be positive, got {}", wp.width));
    }
    let pn = wp.polarization.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(pn > 0.0 && pn.is_finite()) {
        return input("wave packet polarization must be a non-zero vector");
    }
    let l = grid.half_width();
    for (i, c) in wp.center.iter().enumerate() {
        let clearance = l - c.abs();
        if clearance < SUPPORT_MARGIN_WIDTHS * wp.width {
            return input(format!(
                "wave packet violates the six-width support margin on axis {i}: clearance {clearance} < {}",
                SUPPORT_MARGIN_WIDTHS * wp.width
            ));
        }
    }
    let pol: Vec<f64> = wp.polarization.iter().map(|v| v / pn).collect();
    let mut psi = vec![Complex64::new(0.0, 0.0); grid.num_dofs()];
    let s2 = 2.0 * wp.width * wp.width;
    for (q, p) in grid.interior_points().enumerate() {
        let x = grid.coords(p);
        let r2: f64 = x.iter().zip(&wp.center).map(|(a, c)| (a - c).powi(2)).sum();
        let phase: f64 = x.iter().zip(&wp.momentum).map(|(a, k)| a * k).sum();
        let amp = Complex64::from_polar((-r2 / s2).exp(), phase);
        for k in 0..n {
            psi[q * n + k] = amp * pol[k];
        }
    }
    let nrm = euclidean_norm(grid, &psi);
    if nrm == 0.0 {
        return input("wave packet vanishes on the grid");
    }
    psi.iter_mut().for_each(|v| *v /= nrm);
    Ok(psi)
}

pub fn euclidean_norm(grid: &Grid, x: &[Complex64]) -> f64 {
    (grid.cell_volume() * x.iter().map(|v| v.norm_sqr()).sum::<f64>()).sqrt()
}

/// `||x||_g = ||M^(1/2) x||`.
pub fn g_norm(ops: &AssembledOperators, x: &[Complex64]) -> f64 {
    ops.mass_sqrt.apply_complex(x).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Fraction of `sum |x|^2` carried by points in the boundary layer.
pub fn boundary_mass_fraction(grid: &Grid, x: &[Complex64]) -> f64 {
    let n = grid.dim();
    let cut = (1.0 - BOUNDARY_LAYER_FRACTION) * grid.half_width();
    let mut layer = 0.0;
    let mut total = 0.0;
    for (q, p) in grid.interior_points().enumerate() {
        let m: f64 = x[q * n..(q + 1) * n].iter().map(|v| v.norm_sqr()).sum();
        total += m;
        if grid.coords(p).iter().any(|c| c.abs() >= cut) {
            layer += m;
        }
    }
    if total == 0.0 {
        0.0
    } else {
        layer / total
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Evolution {
    H0,
    H1,
}

#[derive(Clone, Debug)]
pub struct Propagated {
    pub state: Vec<Complex64>,
    pub matvecs: usize,
    /// A-priori bound on the expansion error relative to the input norm.
    pub error_bound: f64,
}

/// `exp(-i A t) y` for symmetric `A` by a stepped Chebyshev-Bessel series.
pub fn chebyshev_evolve(a: &Csr, y: &[Complex64], t: f64, tol: f64, budget: usize) -> Result<Propagated> {
    if !t.is_finite() {
        return input("evolution time must be finite");
    }
    if !(tol > 0.0) {
        return input("propagation tolerance must be positive");
    }
    if t == 0.0 {
        return Ok(Propagated {
            state: y.to_vec(),
            matvecs: 0,
            error_bound: 0.0,
        });
    }
    let s: ChebyshevScaling = enclosure(a);
    let total = s.half_width * t.abs();
    let steps = (total / MAX_STEP_ARGUMENT).ceil().max(1.0) as usize;
    let z = total / steps as f64;
    let step_tol = tol / steps as f64;
    let mut k = z.ceil() as usize;
    while bessel_tail_bound(z, k) > step_tol {
        k += 1;
    }
    let needed = steps * k;
    if needed > budget {
        let kb = budget / steps;
        let bound = steps as f64 * bessel_tail_bound(z, kb);
        return Err(Error::StepBudget { needed, budget, bound });
    }
    let j = bessel_j_sequence(z, k);
    // exp(-i z x) = sum eps_m (-i)^m J_m(z) T_m(x); (+i)^m for negative t
    let unit = if t > 0.0 { Complex64::new(0.0, -1.0) } else { Complex64::new(0.0, 1.0) };
    let mut coeffs = Vec::with_capacity(k + 1);
    let mut pow = Complex64::new(1.0, 0.0);
    for (m, jm) in j.iter().enumerate() {
        let eps = if m == 0 { 1.0 } else { 2.0 };
        coeffs.push(pow * (eps * jm));
        pow *= unit;
    }
    let dt = t / steps as f64;
    let shift = Complex64::from_polar(1.0, -s.center * dt);
    let mut state = y.to_vec();
    for _ in 0..steps {
        state = apply_series_complex(a, &s, &coeffs, &state);
        state.iter_mut().for_each(|v| *v *= shift);
    }
    Ok(Propagated {
        state,
        matvecs: needed,
        error_bound: steps as f64 * bessel_tail_bound(z, k),
    })
}

/// `exp(-i H t) psi` for `H0` or for the pencil (`M^(-1/2) exp(-i A t) M^(1/2)`).
pub fn propagate(ops: &AssembledOperators, which: Evolution, psi: &[Complex64], t: f64, tol: f64) -> Result<Propagated> {
    propagate_with_budget(ops, which, psi, t, tol, DEFAULT_STEP_BUDGET)
}

pub fn propagate_with_budget(
    ops: &AssembledOperators,
    which: Evolution,
    psi: &[Complex64],
    t: f64,
    tol: f64,
    budget: usize,
) -> Result<Propagated> {
    if psi.len() != ops.dim() {
        return input("state has the wrong dimension");
    }
    if t == 0.0 {
        return chebyshev_evolve(&ops.h0, psi, 0.0, tol, budget);
    }
    match which {
        Evolution::H0 => chebyshev_evolve(&ops.h0, psi, t, tol, budget),
        Evolution::H1 => {
            let y = ops.mass_sqrt.apply_complex(psi);
            let mut r = chebyshev_evolve(&ops.reduced, &y, t, tol, budget)?;
            r.state = ops.mass_inv_sqrt.apply_complex(&r.state);
            Ok(r)
        }
    }
}

#[derive(Clone, Debug)]
pub struct WaveOperatorState {
    /// `W(T) psi`.
    pub state: Vec<Complex64>,
    /// `exp(-i H0 T) psi`, before identification.
    pub free: Vec<Complex64>,
    pub boundary_mass: f64,
    pub matvecs: usize,
}

/// `W(T) psi = exp(i H1 T) J exp(-i H0 T) psi`, with `J` the identity on
/// coefficients. Boundary mass is the larger of the free and final states.
pub fn wave_operator_approx(ops: &AssembledOperators, psi: &[Complex64], t: f64, tol: f64) -> Result<WaveOperatorState> {
    let free = propagate(ops, Evolution::H0, psi, t, tol)?;
    wave_operator_from_free(ops, free.state, free.matvecs, t, tol)
}

fn wave_operator_from_free(ops: &AssembledOperators, free: Vec<Complex64>, matvecs: usize, t: f64, tol: f64) -> Result<WaveOperatorState> {
    let back = propagate(ops, Evolution::H1, &free, -t, tol)?;
    let bm = boundary_mass_fraction(&ops.grid, &free).max(boundary_mass_fraction(&ops.grid, &back.state));
    Ok(WaveOperatorState {
        state: back.state,
        free,
        boundary_mass: bm,
        matvecs: matvecs + back.matvecs,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScatteringVerdict {
    Pass,
    Fail,
    /// Boundary mass above the cap; the box, not the physics, limits the run.
    BoxLimited,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScatteringDiagnostics {
    pub times: Vec<f64>,
    /// `||W(T_{j+1}) psi - W(T_j) psi||_g`, one fewer than `times`.
    pub cauchy_norms: Vec<f64>,
    /// `| ||W(T_j) psi||_g - 1 |`.
    pub isometry_defects: Vec<f64>,
    pub boundary_mass: Vec<f64>,
    pub boundary_mass_cap: f64,
    pub tolerance: f64,
    /// Range of `||J phi||_g / ||phi||_e` allowed by the metric on this grid.
    pub norm_band: (f64, f64),
    pub matvecs: usize,
    pub verdict: ScatteringVerdict,
}

/// Runs `W(T_j) psi` for increasing `times` and applies the trend verdict.
pub fn scattering_diagnostics(ops: &AssembledOperators, psi: &[Complex64], times: &[f64], tol: f64) -> Result<ScatteringDiagnostics> {
    if times.len() < 3 {
        return input("need at least three diagnostic times");
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) || times[0] < 0.0 {
        return input("diagnostic times must be non-negative and strictly increasing");
    }
    let mut states = Vec::with_capacity(times.len());
    let mut boundary_mass = Vec::with_capacity(times.len());
    let mut matvecs = 0;
    let mut free = psi.to_vec();
    let mut t_prev = 0.0;
    for &t in times {
        let step = propagate(ops, Evolution::H0, &free, t - t_prev, tol)?;
        matvecs += step.matvecs;
        free = step.state;
        t_prev = t;
        let w = wave_operator_from_free(ops, free.clone(), 0, t, tol)?;
        matvecs += w.matvecs;
        boundary_mass.push(w.boundary_mass);
        states.push(w.state);
    }
    let cauchy_norms: Vec<f64> = states
        .windows(2)
        .map(|w| {
            let d: Vec<Complex64> = w[1].iter().zip(&w[0]).map(|(a, b)| a - b).collect();
            g_norm(ops, &d)
        })
        .collect();
    let isometry_defects: Vec<f64> = states.iter().map(|s| (g_norm(ops, s) - 1.0).abs()).collect();
    let hn = ops.grid.cell_volume();
    let (mlo, mhi) = ops.mass.eigen_range();
    let norm_band = ((mlo / hn).sqrt(), (mhi / hn).sqrt());
    let first = cauchy_norms[0];
    let last = *cauchy_norms.last().unwrap();
    let final_defect = *isometry_defects.last().unwrap();
    let verdict = if boundary_mass.iter().any(|m| *m > BOUNDARY_MASS_CAP) {
        ScatteringVerdict::BoxLimited
    } else if (last <= CAUCHY_DECAY_RATIO * first || cauchy_norms.iter().all(|c| *c <= tol))
        && final_defect <= ISOMETRY_DEFECT_CAP
    {
        ScatteringVerdict::Pass
    } else {
        ScatteringVerdict::Fail
    };
    Ok(ScatteringDiagnostics {
        times: times.to_vec(),
        cauchy_norms,
        isometry_defects,
        boundary_mass,
        boundary_mass_cap: BOUNDARY_MASS_CAP,
        tolerance: tol,
        norm_band,
        matvecs,
        verdict,
    })
}
