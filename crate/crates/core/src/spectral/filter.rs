//! Polynomial approximation of spectral projectors `E_I`.

use num_complex::Complex64;
use statrs::function::erf::erf;

use super::chebyshev::{adaptive_coefficients, apply_series, apply_series_complex, ChebyshevScaling, LinearOperator};
use crate::error::{input, Result};

/// Default bound on the filter error away from the transition bands.
pub const FILTER_TOLERANCE: f64 = 1e-4;

/// Fraction of the spectral width used as the transition margin.
pub const MARGIN_FRACTION: f64 = 0.02;

/// Transition bands never take more than this fraction of the interval.
pub const MARGIN_INTERVAL_CAP: f64 = 0.25;

/// Erf width is `margin / (2 * ERF_STEEPNESS)`; at 3 the plateau error is
/// `erfc(3) / 2 ~ 1.1e-5`.
const ERF_STEEPNESS: f64 = 3.0;

const MAX_NODES: usize = 1 << 18;

/// Smoothed indicator of `[lo, hi]` as a Chebyshev series on an enclosure.
///
/// The filter is within `tolerance` of 1 on `[lo, hi]` and of 0 outside
/// `[lo - margin, hi + margin]`.
#[derive(Clone, Debug)]
pub struct SpectralFilter {
    pub interval: (f64, f64),
    pub margin: f64,
    pub scaling: ChebyshevScaling,
    pub coeffs: Vec<f64>,
    pub tolerance: f64,
    /// Sum of discarded coefficient magnitudes.
    pub truncation_error: f64,
}

impl SpectralFilter {
    pub fn new(scaling: ChebyshevScaling, interval: (f64, f64), tolerance: f64) -> Result<Self> {
        let (lo, hi) = interval;
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return input(format!("degenerate filter interval [{lo}, {hi}]"));
        }
        if !(tolerance > 0.0) {
            return input("filter tolerance must be positive");
        }
        let width = 2.0 * scaling.half_width;
        let margin = (MARGIN_FRACTION * width).min(MARGIN_INTERVAL_CAP * (hi - lo));
        if hi + margin < scaling.lower() || lo - margin > scaling.upper() {
            return input(format!(
                "filter interval [{lo}, {hi}] lies outside the spectral enclosure [{}, {}]",
                scaling.lower(),
                scaling.upper()
            ));
        }
        let a = lo - 0.5 * margin;
        let b = hi + 0.5 * margin;
        let s = margin / (2.0 * ERF_STEEPNESS);
        let f = |x: f64| {
            let lam = scaling.center + scaling.half_width * x;
            0.5 * (erf((lam - a) / s) - erf((lam - b) / s))
        };
        let (coeffs, truncation_error) = adaptive_coefficients(f, tolerance, MAX_NODES);
        Ok(SpectralFilter {
            interval,
            margin,
            scaling,
            coeffs,
            tolerance,
            truncation_error,
        })
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    /// Scalar value of the polynomial filter at `lambda`.
    pub fn eval(&self, lambda: f64) -> f64 {
        let x = self.scaling.to_unit(lambda).clamp(-1.0, 1.0);
        let (mut t0, mut t1) = (1.0, x);
        let mut s = self.coeffs[0];
        if self.coeffs.len() > 1 {
            s += self.coeffs[1] * x;
        }
        for c in &self.coeffs[2..] {
            let t2 = 2.0 * x * t1 - t0;
            s += c * t2;
            t0 = t1;
            t1 = t2;
        }
        s
    }

    pub fn apply<Op: LinearOperator + ?Sized>(&self, op: &Op, v: &[f64]) -> Vec<f64> {
        apply_series(op, &self.scaling, &self.coeffs, v)
    }

    pub fn apply_complex<Op: LinearOperator + ?Sized>(&self, op: &Op, v: &[Complex64]) -> Vec<Complex64> {
        let c: Vec<Complex64> = self.coeffs.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        apply_series_complex(op, &self.scaling, &c, v)
    }
}
