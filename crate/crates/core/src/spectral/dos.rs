//! Kernel polynomial estimate of the integrated density of states.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::chebyshev::{jackson_kernel, ChebyshevScaling, LinearOperator};

/// Stochastic Chebyshev moments `mu_m = E[r^T T_m(A~) r] / d` over
/// Rademacher probes.
pub fn stochastic_moments<Op: LinearOperator + ?Sized>(
    op: &Op,
    scaling: &ChebyshevScaling,
    moments: usize,
    probes: usize,
    seed: u64,
) -> Vec<f64> {
    let d = op.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mu = vec![0.0; moments];
    let inv = 1.0 / scaling.half_width;
    for _ in 0..probes {
        let r: Vec<f64> = (0..d).map(|_| if rng.gen::<bool>() { 1.0 } else { -1.0 }).collect();
        let mut prev = r.clone();
        let mut cur = vec![0.0; d];
        let mut next = vec![0.0; d];
        mu[0] += d as f64;
        if moments < 2 {
            continue;
        }
        op.apply(&r, &mut cur);
        for (c, x) in cur.iter_mut().zip(&r) {
            *c = (*c - scaling.center * x) * inv;
        }
        mu[1] += dot(&r, &cur);
        for m in mu.iter_mut().skip(2) {
            op.apply(&cur, &mut next);
            for i in 0..d {
                next[i] = 2.0 * (next[i] - scaling.center * cur[i]) * inv - prev[i];
            }
            *m += dot(&r, &next);
            std::mem::swap(&mut prev, &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
    }
    let norm = 1.0 / (d as f64 * probes as f64);
    mu.iter_mut().for_each(|m| *m *= norm);
    mu
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Jackson-damped cumulative counting function built from moments.
#[derive(Clone, Debug)]
pub struct CountingFunction {
    pub scaling: ChebyshevScaling,
    damped: Vec<f64>,
}

impl CountingFunction {
    pub fn new(scaling: ChebyshevScaling, moments: &[f64]) -> Self {
        let g = jackson_kernel(moments.len());
        CountingFunction {
            scaling,
            damped: moments.iter().zip(g).map(|(m, g)| m * g).collect(),
        }
    }

    /// Fraction of eigenvalues `<= lambda`.
    pub fn eval(&self, lambda: f64) -> f64 {
        let x = self.scaling.to_unit(lambda);
        if x <= -1.0 {
            return 0.0;
        }
        if x >= 1.0 {
            return self.damped[0];
        }
        let theta = x.acos();
        let pi = std::f64::consts::PI;
        let mut s = self.damped[0] * (1.0 - theta / pi);
        for (m, gm) in self.damped.iter().enumerate().skip(1) {
            s -= 2.0 / pi * gm * (m as f64 * theta).sin() / m as f64;
        }
        s
    }
}

/// Relative L1 distance `int |a - b| / int |b|` between two sampled
/// cumulative curves on a common uniform grid.
pub fn relative_l1(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
    let den: f64 = b.iter().map(|y| y.abs()).sum();
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sparse::TripletBuilder;

    #[test]
    fn diagonal_operator_counts() {
        // eigenvalues 0..99 / 99; with many moments the count is sharp
        let d = 100;
        let mut b = TripletBuilder::new(d, d);
        for i in 0..d {
            b.push(i, i, i as f64 / (d - 1) as f64);
        }
        let a = b.build();
        let s = ChebyshevScaling::from_bounds(0.0, 1.0, 0.01);
        // Rademacher probes are exact on diagonal matrices
        let mu = stochastic_moments(&a, &s, 400, 1, 5);
        let c = CountingFunction::new(s, &mu);
        assert!((c.eval(0.5) - 0.5).abs() < 0.02);
        assert!((c.eval(1.2) - 1.0).abs() < 1e-12);
        assert!(c.eval(-0.5).abs() < 1e-12);
    }

    #[test]
    fn l1_distance() {
        assert_eq!(relative_l1(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert!((relative_l1(&[1.1, 2.2], &[1.0, 2.0]) - 0.1).abs() < 1e-12);
    }
}
