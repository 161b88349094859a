//! Analytic asymptotically Euclidean metric families on R^n.
//!
//! Every shipped family is diagonal, `g_ii(x) = c_i(x)`, with closed-form
//! first and second derivatives of each `c_i`. The rest of the toolkit only
//! relies on the general tensors returned here, never on diagonality.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::tensor::{Tensor3, Tensor4};

/// Fit tolerance applied to log-log decay slopes.
pub const SLOPE_FIT_TOLERANCE: f64 = 0.2;

/// Number of seeded random directions used by angular maxima.
pub const RANDOM_DIRECTIONS: usize = 64;

const DIRECTION_SEED: u64 = 0x00d1_ec71_0a5e_ed00;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricFamily {
    Flat,
    /// `g_ij = exp(2a exp(-|x|^2)) delta_ij`
    ConformalGaussian,
    /// `g_ij = (1 + a (1+|x|^2)^(-p/2)) delta_ij`
    ConformalRational,
    /// `g_ii = 1 + a_i (1+|x|^2)^(-p/2)`, one amplitude per axis.
    DiagonalRational,
}

impl MetricFamily {
    pub fn name(self) -> &'static str {
        match self {
            MetricFamily::Flat => "flat",
            MetricFamily::ConformalGaussian => "conformal-gaussian",
            MetricFamily::ConformalRational => "conformal-rational",
            MetricFamily::DiagonalRational => "diagonal-rational",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        match name {
            "flat" => Some(MetricFamily::Flat),
            "conformal-gaussian" => Some(MetricFamily::ConformalGaussian),
            "conformal-rational" => Some(MetricFamily::ConformalRational),
            "diagonal-rational" => Some(MetricFamily::DiagonalRational),
            _ => None,
        }
    }
}

/// A metric family together with its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub family: MetricFamily,
    pub amplitude: f64,
    /// Exponent `p` of the `(1+|x|^2)^(-p/2)` envelope (rational families).
    pub decay: f64,
    pub dimension: usize,
    /// Per-axis amplitudes for the diagonal family. Defaults to
    /// `a (i+1)/n` on axis `i`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis_amplitudes: Option<Vec<f64>>,
}

impl MetricSpec {
    pub fn flat(dimension: usize) -> Self {
        MetricSpec {
            family: MetricFamily::Flat,
            amplitude: 0.0,
            decay: 0.0,
            dimension,
            axis_amplitudes: None,
        }
    }

    pub fn conformal_gaussian(dimension: usize, amplitude: f64) -> Self {
        MetricSpec {
            family: MetricFamily::ConformalGaussian,
            amplitude,
            decay: 0.0,
            dimension,
            axis_amplitudes: None,
        }
    }

    pub fn conformal_rational(dimension: usize, amplitude: f64, decay: f64) -> Self {
        MetricSpec {
            family: MetricFamily::ConformalRational,
            amplitude,
            decay,
            dimension,
            axis_amplitudes: None,
        }
    }

    pub fn diagonal_rational(dimension: usize, amplitude: f64, decay: f64) -> Self {
        MetricSpec {
            family: MetricFamily::DiagonalRational,
            amplitude,
            decay,
            dimension,
            axis_amplitudes: None,
        }
    }

    /// The same family and parameters in another dimension.
    pub fn with_dimension(&self, dimension: usize) -> Self {
        let mut out = self.clone();
        out.dimension = dimension;
        if let Some(a) = &self.axis_amplitudes {
            if a.len() != dimension {
                out.axis_amplitudes = None;
            }
        }
        out
    }

    pub fn is_flat(&self) -> bool {
        self.family == MetricFamily::Flat
    }

    /// Amplitude applied on each axis (only meaningful for the rational families).
    pub fn amplitudes(&self) -> Vec<f64> {
        let n = self.dimension;
        match self.family {
            MetricFamily::DiagonalRational => match &self.axis_amplitudes {
                Some(a) => a.clone(),
                None => (0..n)
                    .map(|i| self.amplitude * (i + 1) as f64 / n as f64)
                    .collect(),
            },
            _ => vec![self.amplitude; n],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dimension == 0 {
            return input("metric dimension must be at least 1");
        }
        if !self.amplitude.is_finite() || !self.decay.is_finite() {
            return input("metric parameters must be finite");
        }
        match self.family {
            MetricFamily::Flat | MetricFamily::ConformalGaussian => Ok(()),
            MetricFamily::ConformalRational | MetricFamily::DiagonalRational => {
                if self.decay <= 0.0 {
                    return input(format!(
                        "{}: decay exponent p must be positive, got {}",
                        self.family.name(),
                        self.decay
                    ));
                }
                if let Some(a) = &self.axis_amplitudes {
                    if a.len() != self.dimension {
                        return input(format!(
                            "diagonal-rational: {} axis amplitudes for dimension {}",
                            a.len(),
                            self.dimension
                        ));
                    }
                }
                // 1 + a psi with psi in (0, 1] stays positive iff a > -1.
                if let Some(bad) = self.amplitudes().iter().find(|a| **a <= -1.0 || !a.is_finite()) {
                    return input(format!(
                        "{}: amplitude {bad} makes the metric degenerate (need a > -1)",
                        self.family.name()
                    ));
                }
                Ok(())
            }
        }
    }
}

/// Metric, inverse metric and volume density at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricPointData {
    pub g_lower: DMatrix<f64>,
    pub g_upper: DMatrix<f64>,
    pub sqrt_det: f64,
}

/// Value, gradient and Hessian of one scalar coefficient `c_i(x)`.
struct ScalarJet {
    value: f64,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

fn check_point(spec: &MetricSpec, x: &[f64]) -> Result<()> {
    if x.len() != spec.dimension {
        return input(format!(
            "point has {} coordinates, metric dimension is {}",
            x.len(),
            spec.dimension
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return input(format!("non-finite coordinate in {x:?}"));
    }
    Ok(())
}

/// The diagonal coefficients `c_i` with their derivatives at `x`.
fn diagonal_jets(spec: &MetricSpec, x: &[f64]) -> Vec<ScalarJet> {
    let n = spec.dimension;
    let r2: f64 = x.iter().map(|v| v * v).sum();
    match spec.family {
        MetricFamily::Flat => (0..n)
            .map(|_| ScalarJet {
                value: 1.0,
                grad: vec![0.0; n],
                hess: vec![0.0; n * n],
            })
            .collect(),
        MetricFamily::ConformalGaussian => {
            // c = exp(phi), phi = 2a exp(-r^2)
            let phi = 2.0 * spec.amplitude * (-r2).exp();
            let c = phi.exp();
            let dphi: Vec<f64> = x.iter().map(|xi| -2.0 * xi * phi).collect();
            let mut hess = vec![0.0; n * n];
            for k in 0..n {
                for l in 0..n {
                    let delta = if k == l { 1.0 } else { 0.0 };
                    let d2phi = (4.0 * x[k] * x[l] - 2.0 * delta) * phi;
                    hess[k * n + l] = c * (dphi[k] * dphi[l] + d2phi);
                }
            }
            let jet = ScalarJet {
                value: c,
                grad: dphi.iter().map(|d| c * d).collect(),
                hess,
            };
            (0..n)
                .map(|_| ScalarJet {
                    value: jet.value,
                    grad: jet.grad.clone(),
                    hess: jet.hess.clone(),
                })
                .collect()
        }
        MetricFamily::ConformalRational | MetricFamily::DiagonalRational => {
            let p = spec.decay;
            let base = 1.0 + r2;
            let psi = base.powf(-p / 2.0);
            let psi1 = base.powf(-p / 2.0 - 1.0);
            let psi2 = base.powf(-p / 2.0 - 2.0);
            spec.amplitudes()
                .into_iter()
                .map(|a| {
                    let grad = x.iter().map(|xk| -a * p * xk * psi1).collect();
                    let mut hess = vec![0.0; n * n];
                    for k in 0..n {
                        for l in 0..n {
                            let delta = if k == l { 1.0 } else { 0.0 };
                            hess[k * n + l] =
                                a * (-p * delta * psi1 + p * (p + 2.0) * x[k] * x[l] * psi2);
                        }
                    }
                    ScalarJet {
                        value: 1.0 + a * psi,
                        grad,
                        hess,
                    }
                })
                .collect()
        }
    }
}

/// Evaluates `g_ij`, `g^ij` and `sqrt(det g)` at `x`.
pub fn eval_metric(spec: &MetricSpec, x: &[f64]) -> Result<MetricPointData> {
    check_point(spec, x)?;
    let n = spec.dimension;
    let jets = diagonal_jets(spec, x);
    let mut g_lower = DMatrix::zeros(n, n);
    let mut g_upper = DMatrix::zeros(n, n);
    let mut det = 1.0;
    for (i, jet) in jets.iter().enumerate() {
        if !(jet.value > 0.0) {
            return Err(Error::Input(format!(
                "metric is not positive definite at {x:?} (g_{i}{i} = {})",
                jet.value
            )));
        }
        g_lower[(i, i)] = jet.value;
        g_upper[(i, i)] = 1.0 / jet.value;
        det *= jet.value;
    }
    Ok(MetricPointData {
        g_lower,
        g_upper,
        sqrt_det: det.sqrt(),
    })
}

/// Analytic derivatives of the covariant metric.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricDerivatives {
    /// `first[(i, l, j)] = d g_il / d x_j`
    pub first: Tensor3,
    /// `second[(i, l, j, k)] = d^2 g_il / d x_j d x_k`, present for order 2.
    pub second: Option<Tensor4>,
}

pub fn metric_derivatives(spec: &MetricSpec, x: &[f64], order: u32) -> Result<MetricDerivatives> {
    if !(order == 1 || order == 2) {
        return input(format!("derivative order must be 1 or 2, got {order}"));
    }
    check_point(spec, x)?;
    let n = spec.dimension;
    let jets = diagonal_jets(spec, x);
    let mut first = Tensor3::zeros(n);
    for (i, jet) in jets.iter().enumerate() {
        for j in 0..n {
            first[(i, i, j)] = jet.grad[j];
        }
    }
    let second = (order == 2).then(|| {
        let mut t = Tensor4::zeros(n);
        for (i, jet) in jets.iter().enumerate() {
            for j in 0..n {
                for k in 0..n {
                    t[(i, i, j, k)] = jet.hess[j * n + k];
                }
            }
        }
        t
    });
    Ok(MetricDerivatives { first, second })
}

/// `d g^il / d x_j` stored as `[(i, l, j)]`, from `d(g^-1) = -g^-1 (dg) g^-1`.
pub fn inverse_metric_derivatives(
    point: &MetricPointData,
    derivs: &MetricDerivatives,
) -> Tensor3 {
    let n = point.g_upper.nrows();
    let gu = &point.g_upper;
    let mut out = Tensor3::zeros(n);
    for j in 0..n {
        for i in 0..n {
            for l in 0..n {
                let mut s = 0.0;
                for a in 0..n {
                    for b in 0..n {
                        s += gu[(i, a)] * derivs.first[(a, b, j)] * gu[(b, l)];
                    }
                }
                out[(i, l, j)] = -s;
            }
        }
    }
    out
}

/// Unit directions used for angular maxima: the 2n signed axes followed by
/// the seeded pseudo-random directions.
pub fn sample_directions(n: usize) -> Vec<Vec<f64>> {
    let mut dirs = Vec::with_capacity(2 * n + RANDOM_DIRECTIONS);
    for i in 0..n {
        for sign in [1.0, -1.0] {
            let mut d = vec![0.0; n];
            d[i] = sign;
            dirs.push(d);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(DIRECTION_SEED);
    while dirs.len() < 2 * n + RANDOM_DIRECTIONS {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-3 && norm <= 1.0 {
            dirs.push(v.iter().map(|a| a / norm).collect());
        }
    }
    dirs
}

/// Dyadic radii `r0, 2 r0, ..., 2^(levels-1) r0`.
pub fn dyadic_radii(r0: f64, levels: usize) -> Vec<f64> {
    (0..levels).map(|k| r0 * 2f64.powi(k as i32)).collect()
}

/// Decay profile of one quantity over dyadic radii.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    pub quantity: String,
    pub radii: Vec<f64>,
    pub max_values: Vec<f64>,
    /// Least-squares slope of log(max) against log(r); `None` means the
    /// values vanish (super-polynomial decay, slope treated as -inf).
    pub fitted_slope: Option<f64>,
    pub k_decay: f64,
    pub pass: bool,
}

impl DecayReport {
    /// Builds a report from sampled maxima, fitting the slope and applying
    /// `slope <= -k_decay + SLOPE_FIT_TOLERANCE`.
    pub fn from_profile(quantity: impl Into<String>, radii: &[f64], max_values: Vec<f64>, k_decay: f64) -> Self {
        let fitted_slope = log_log_slope(radii, &max_values);
        let pass = match fitted_slope {
            None => true,
            Some(s) => s <= -k_decay + SLOPE_FIT_TOLERANCE,
        };
        DecayReport {
            quantity: quantity.into(),
            radii: radii.to_vec(),
            max_values,
            fitted_slope,
            k_decay,
            pass,
        }
    }
}

/// Least-squares slope on (log r, log v). Returns `None` when the profile
/// is identically zero or reaches exactly zero at the outermost radius.
pub fn log_log_slope(radii: &[f64], values: &[f64]) -> Option<f64> {
    if values.last().is_none_or(|v| *v == 0.0) {
        return None;
    }
    let pts: Vec<(f64, f64)> = radii
        .iter()
        .zip(values)
        .filter(|(_, v)| **v > 0.0)
        .map(|(r, v)| (r.ln(), v.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

pub(crate) fn validate_decay_inputs(n: usize, k_decay: f64, radii: &[f64]) -> Result<()> {
    if !(k_decay > n as f64) {
        return Err(Error::Hypothesis {
            condition: "theorem-1 decay exponent k > n",
            detail: format!("claimed k_decay = {k_decay} does not exceed the dimension n = {n}"),
        });
    }
    if radii.len() < 3 {
        return input(format!("need at least 3 dyadic radii, got {}", radii.len()));
    }
    if radii.iter().any(|r| !(r.is_finite() && *r > 0.0)) || radii.windows(2).any(|w| w[1] <= w[0]) {
        return input("radii must be positive and strictly increasing");
    }
    if radii[radii.len() - 1] / radii[0] < 4.0 - 1e-12 {
        return input("radii must span at least 3 dyadic levels (max/min >= 4)");
    }
    Ok(())
}

/// Maximum of `f` over the angular sample at radius `r`.
#[cfg(test)]
pub(crate) fn angular_max(n: usize, r: f64, mut f: impl FnMut(&[f64]) -> f64) -> f64 {
    sample_directions(n)
        .iter()
        .map(|d| {
            let x: Vec<f64> = d.iter().map(|v| v * r).collect();
            f(&x)
        })
        .fold(0.0, f64::max)
}

/// Audits the decay hypotheses on `g^ij - delta^ij`, `d g_il` and
/// `d^2 g_il`, plus boundedness of `d g^il`.
pub fn check_decay_conditions(spec: &MetricSpec, k_decay: f64, radii: &[f64]) -> Result<Vec<DecayReport>> {
    spec.validate()?;
    let n = spec.dimension;
    validate_decay_inputs(n, k_decay, radii)?;

    let mut upper_dev = Vec::new();
    let mut first = Vec::new();
    let mut second = Vec::new();
    let mut inv_first = Vec::new();
    for &r in radii {
        let mut m = [0.0f64; 4];
        for d in sample_directions(n) {
            let x: Vec<f64> = d.iter().map(|v| v * r).collect();
            let pt = eval_metric(spec, &x)?;
            let der = metric_derivatives(spec, &x, 2)?;
            let dev = (&pt.g_upper - DMatrix::identity(n, n)).amax();
            m[0] = m[0].max(dev);
            m[1] = m[1].max(der.first.max_abs());
            m[2] = m[2].max(der.second.as_ref().map_or(0.0, |t| t.max_abs()));
            m[3] = m[3].max(inverse_metric_derivatives(&pt, &der).max_abs());
        }
        upper_dev.push(m[0]);
        first.push(m[1]);
        second.push(m[2]);
        inv_first.push(m[3]);
    }

    let mut reports = vec![
        DecayReport::from_profile("decay-1 |g^ij - delta^ij|", radii, upper_dev, k_decay),
        DecayReport::from_profile("decay-2 |dg_il/dx_j|", radii, first, k_decay),
        DecayReport::from_profile("decay-3 |d2g_il/dx_j dx_k|", radii, second, k_decay),
    ];
    // Boundedness only: no rate is claimed for the contravariant derivatives.
    let bounded = inv_first.iter().all(|v| v.is_finite());
    let mut r = DecayReport::from_profile("bounded |dg^il/dx_j|", radii, inv_first, k_decay);
    r.pass = bounded;
    reports.push(r);
    Ok(reports)
}

/// Empirical constants of the two-sided metric estimates, scanned over
/// sample points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricBands {
    /// Eigenvalue band `[D, D1]` of `g^ij`.
    pub upper_eig: (f64, f64),
    /// Band `[C, C1]` of `sqrt(det g)`.
    pub sqrt_det: (f64, f64),
    /// Eigenvalue band of `sqrt(g) g^ij` (the mass-matrix blocks per unit volume).
    pub mass_block: (f64, f64),
    /// Eigenvalue band of `sqrt(g) g^ij g^kl` acting on rank-2 tensors.
    pub rank2: (f64, f64),
    pub samples: usize,
}

impl MetricBands {
    /// Product bound `[C D, C1 D1]`.
    pub fn product_band(&self) -> (f64, f64) {
        (self.sqrt_det.0 * self.upper_eig.0, self.sqrt_det.1 * self.upper_eig.1)
    }
}

/// Sample points for band scans: the origin, dense radial lines along the
/// sampled directions, and uniform points in a ball of radius `radius`.
pub fn scan_points(n: usize, radius: f64, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; n]];
    for d in sample_directions(n) {
        for s in 1..=40 {
            let r = radius * s as f64 / 40.0;
            pts.push(d.iter().map(|v| v * r).collect());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    while pts.len() < count {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        if v.iter().map(|a| a * a).sum::<f64>() <= 1.0 {
            pts.push(v.iter().map(|a| a * radius).collect());
        }
    }
    pts
}

fn sym_eig_range(m: DMatrix<f64>) -> (f64, f64) {
    let e = SymmetricEigen::new(m).eigenvalues;
    (e.min(), e.max())
}

/// Scans the metric over `count` sample points within `radius` and records
/// the empirical bands. The far-field limit (identity) is always included.
pub fn scan_bands(spec: &MetricSpec, radius: f64, count: usize, seed: u64) -> Result<MetricBands> {
    spec.validate()?;
    let n = spec.dimension;
    let mut upper = (1.0f64, 1.0f64);
    let mut sq = (1.0f64, 1.0f64);
    let mut mass = (1.0f64, 1.0f64);
    let mut rank2 = (1.0f64, 1.0f64);
    let pts = scan_points(n, radius, count, seed);
    for x in &pts {
        let pt = eval_metric(spec, x)?;
        let (lo, hi) = sym_eig_range(pt.g_upper.clone());
        upper = (upper.0.min(lo), upper.1.max(hi));
        sq = (sq.0.min(pt.sqrt_det), sq.1.max(pt.sqrt_det));
        let (lo, hi) = sym_eig_range(&pt.g_upper * pt.sqrt_det);
        mass = (mass.0.min(lo), mass.1.max(hi));
        let k = pt.g_upper.kronecker(&pt.g_upper) * pt.sqrt_det;
        let (lo, hi) = sym_eig_range(k);
        rank2 = (rank2.0.min(lo), rank2.1.max(hi));
    }
    Ok(MetricBands {
        upper_eig: upper,
        sqrt_det: sq,
        mass_block: mass,
        rank2,
        samples: pts.len(),
    })
}
