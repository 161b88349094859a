//! Chebyshev expansions of functions of a symmetric operator.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::sparse::Csr;

/// A symmetric linear operator applied matrix-free.
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn apply_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        let re: Vec<f64> = x.iter().map(|z| z.re).collect();
        let im: Vec<f64> = x.iter().map(|z| z.im).collect();
        let mut yr = vec![0.0; self.dim()];
        let mut yi = vec![0.0; self.dim()];
        self.apply(&re, &mut yr);
        self.apply(&im, &mut yi);
        for (out, (a, b)) in y.iter_mut().zip(yr.into_iter().zip(yi)) {
            *out = Complex64::new(a, b);
        }
    }
}

impl LinearOperator for Csr {
    fn dim(&self) -> usize {
        self.rows()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.matvec(x, y);
    }
    fn apply_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.matvec_complex(x, y);
    }
}

/// Affine map of a spectral enclosure onto `[-1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChebyshevScaling {
    pub center: f64,
    pub half_width: f64,
}

impl ChebyshevScaling {
    /// Enclosure `[lo, hi]` widened by `pad` of its width on each side.
    pub fn from_bounds(lo: f64, hi: f64, pad: f64) -> Self {
        let w = (hi - lo).max(f64::EPSILON * hi.abs().max(1.0));
        ChebyshevScaling {
            center: 0.5 * (lo + hi),
            half_width: 0.5 * w * (1.0 + 2.0 * pad),
        }
    }

    pub fn to_unit(&self, lambda: f64) -> f64 {
        (lambda - self.center) / self.half_width
    }

    pub fn lower(&self) -> f64 {
        self.center - self.half_width
    }

    pub fn upper(&self) -> f64 {
        self.center + self.half_width
    }
}

/// `y = (A - c) x / r`
fn scaled_apply<Op: LinearOperator + ?Sized>(op: &Op, s: &ChebyshevScaling, x: &[f64], y: &mut [f64]) {
    op.apply(x, y);
    let inv = 1.0 / s.half_width;
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = (*yi - s.center * xi) * inv;
    }
}

fn scaled_apply_complex<Op: LinearOperator + ?Sized>(
    op: &Op,
    s: &ChebyshevScaling,
    x: &[Complex64],
    y: &mut [Complex64],
) {
    op.apply_complex(x, y);
    let inv = 1.0 / s.half_width;
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = (*yi - xi * s.center) * inv;
    }
}

/// `sum_m c_m T_m(A~) v` (no halving of `c_0`).
pub fn apply_series<Op: LinearOperator + ?Sized>(op: &Op, s: &ChebyshevScaling, coeffs: &[f64], v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut out: Vec<f64> = v.iter().map(|x| coeffs.first().copied().unwrap_or(0.0) * x).collect();
    if coeffs.len() < 2 {
        return out;
    }
    let mut prev = v.to_vec();
    let mut cur = vec![0.0; n];
    scaled_apply(op, s, v, &mut cur);
    for (o, c) in out.iter_mut().zip(&cur) {
        *o += coeffs[1] * c;
    }
    let mut next = vec![0.0; n];
    for &cm in &coeffs[2..] {
        scaled_apply(op, s, &cur, &mut next);
        for i in 0..n {
            next[i] = 2.0 * next[i] - prev[i];
            out[i] += cm * next[i];
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    out
}

pub fn apply_series_complex<Op: LinearOperator + ?Sized>(
    op: &Op,
    s: &ChebyshevScaling,
    coeffs: &[Complex64],
    v: &[Complex64],
) -> Vec<Complex64> {
    let n = v.len();
    let zero = Complex64::new(0.0, 0.0);
    let c0 = coeffs.first().copied().unwrap_or(zero);
    let mut out: Vec<Complex64> = v.iter().map(|x| c0 * x).collect();
    if coeffs.len() < 2 {
        return out;
    }
    let mut prev = v.to_vec();
    let mut cur = vec![zero; n];
    scaled_apply_complex(op, s, v, &mut cur);
    for (o, c) in out.iter_mut().zip(&cur) {
        *o += coeffs[1] * c;
    }
    let mut next = vec![zero; n];
    for &cm in &coeffs[2..] {
        scaled_apply_complex(op, s, &cur, &mut next);
        for i in 0..n {
            next[i] = next[i] * 2.0 - prev[i];
            out[i] += cm * next[i];
        }
        std::mem::swap(&mut prev, &mut cur);
        std::mem::swap(&mut cur, &mut next);
    }
    out
}

/// Chebyshev interpolation coefficients of `f` on `[-1, 1]` at `k`
/// Chebyshev-Gauss nodes, with `c_0` already halved so that
/// `f(x) ~ sum_m c_m T_m(x)`.
pub fn interpolation_coefficients(f: impl Fn(f64) -> f64, k: usize) -> Vec<f64> {
    // DCT-II through a complex FFT of length 4k:
    // y[2j+1] = y[4k-2j-1] = f_j  =>  Y[m] = 2 sum_j f_j cos(pi m (j+1/2)/k)
    let len = 4 * k;
    let mut buf = vec![Complex64::new(0.0, 0.0); len];
    for j in 0..k {
        let theta = std::f64::consts::PI * (j as f64 + 0.5) / k as f64;
        let fj = f(theta.cos());
        buf[2 * j + 1] = Complex64::new(fj, 0.0);
        buf[len - 2 * j - 1] = Complex64::new(fj, 0.0);
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let mut c: Vec<f64> = buf[..k].iter().map(|z| z.re / k as f64).collect();
    c[0] *= 0.5;
    c
}

/// Adaptive Chebyshev approximation: doubles the node count until the
/// upper half of the coefficients is negligible, then truncates trailing
/// coefficients below `tol * 1e-2`. Returns the coefficients and the sum of
/// the discarded magnitudes (an error estimate).
pub fn adaptive_coefficients(f: impl Fn(f64) -> f64, tol: f64, max_nodes: usize) -> (Vec<f64>, f64) {
    let mut k = 256;
    let mut c = interpolation_coefficients(&f, k);
    while k < max_nodes {
        let tail = c[k / 2..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if tail < tol * 1e-3 {
            break;
        }
        k *= 2;
        c = interpolation_coefficients(&f, k);
    }
    let cut = tol * 1e-2;
    let mut keep = c.len();
    while keep > 1 && c[keep - 1].abs() < cut {
        keep -= 1;
    }
    let dropped: f64 = c[keep..].iter().map(|v| v.abs()).sum();
    c.truncate(keep);
    (c, dropped)
}

/// Jackson damping factors `g_0 .. g_{m-1}` for an `m`-term expansion.
pub fn jackson_kernel(m: usize) -> Vec<f64> {
    let mp1 = (m + 1) as f64;
    let a = std::f64::consts::PI / mp1;
    (0..m)
        .map(|k| {
            let kf = k as f64;
            ((mp1 - kf) * (a * kf).cos() + (a * kf).sin() / a.tan()) / mp1
        })
        .collect()
}

/// Bessel functions `J_0(z) .. J_{m}(z)` for `z >= 0` by Miller's backward
/// recurrence normalized with `J_0 + 2 sum J_2k = 1`.
pub fn bessel_j_sequence(z: f64, m: usize) -> Vec<f64> {
    assert!(z >= 0.0);
    if z == 0.0 {
        let mut out = vec![0.0; m + 1];
        out[0] = 1.0;
        return out;
    }
    let start = m.max(z.ceil() as usize) + 32 + (z.sqrt() * 10.0) as usize;
    let mut out = vec![0.0; m + 1];
    let mut jp1 = 0.0f64;
    let mut j = 1e-300f64;
    let mut norm = 0.0f64;
    for k in (0..=start).rev() {
        if k <= m {
            out[k] = j;
        }
        if k % 2 == 0 {
            norm += if k == 0 { j } else { 2.0 * j };
        }
        if k == 0 {
            break;
        }
        let jm1 = 2.0 * k as f64 / z * j - jp1;
        jp1 = j;
        j = jm1;
        if j.abs() > 1e250 {
            let s = 1e-250;
            j *= s;
            jp1 *= s;
            norm *= s;
            for v in out.iter_mut() {
                *v *= s;
            }
        }
    }
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// Upper bound on `2 sum_{m > k} |J_m(z)|` from `|J_m(z)| <= (z/2)^m / m!`,
/// valid once `k + 1 >= z`.
pub fn bessel_tail_bound(z: f64, k: usize) -> f64 {
    let m0 = k + 1;
    if (m0 as f64) < z {
        return f64::INFINITY;
    }
    // log of (z/2)^m0 / m0!
    let mut log_term = m0 as f64 * (0.5 * z).ln() - statrs::function::gamma::ln_gamma(m0 as f64 + 1.0);
    if z == 0.0 {
        return 0.0;
    }
    let mut sum = 0.0;
    let mut m = m0;
    loop {
        let t = log_term.exp();
        sum += t;
        if t < 1e-300 || t < sum * 1e-17 {
            break;
        }
        m += 1;
        log_term += (0.5 * z).ln() - (m as f64).ln();
    }
    2.0 * sum
}
