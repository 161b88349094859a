//! Thick-restart block Krylov eigensolver for symmetric operators.
//!
//! The basis is kept explicitly orthonormal (classical Gram-Schmidt applied
//! twice), so degenerate eigenvalues are resolved as long as the block size
//! is at least the multiplicity.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::chebyshev::LinearOperator;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Which {
    Smallest,
    Largest,
}

#[derive(Clone, Debug)]
pub struct KrylovOptions {
    pub count: usize,
    pub which: Which,
    /// Absolute bound on `||A y - theta y||` for unit `y`.
    pub tol: f64,
    pub max_restarts: usize,
    pub block_size: usize,
    /// Largest basis dimension between restarts (clamped to the operator dimension).
    pub max_basis: usize,
    pub seed: u64,
    /// Scale `tol` by the magnitude of the leading Ritz value.
    pub relative: bool,
    /// Lower bound on the effective threshold when `relative` is set.
    pub abs_floor: f64,
}

impl KrylovOptions {
    pub fn new(count: usize, which: Which, tol: f64, seed: u64) -> Self {
        let block_size = count.clamp(4, 16);
        KrylovOptions {
            count,
            which,
            tol,
            max_restarts: 500,
            block_size,
            max_basis: (count + block_size).max(20) + 6 * block_size,
            seed,
            relative: false,
            abs_floor: 0.0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct KrylovResult {
    pub values: Vec<f64>,
    pub vectors: Vec<Vec<f64>>,
    /// `||A y - theta y||` recomputed with fresh products.
    pub residuals: Vec<f64>,
    pub restarts: usize,
    pub matvecs: usize,
    pub converged: bool,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

struct Basis {
    v: Vec<Vec<f64>>,
    av: Vec<Vec<f64>>,
}

impl Basis {
    /// Orthogonalizes `x` against the basis twice. Returns `None` when `x`
    /// lies (numerically) in the span.
    fn orthogonalize(&self, mut x: Vec<f64>) -> Option<Vec<f64>> {
        let start = norm(&x);
        if start == 0.0 {
            return None;
        }
        for _ in 0..2 {
            let coeffs: Vec<f64> = self.v.iter().map(|q| dot(q, &x)).collect();
            for (q, c) in self.v.iter().zip(coeffs) {
                for (xi, qi) in x.iter_mut().zip(q) {
                    *xi -= c * qi;
                }
            }
        }
        let nx = norm(&x);
        if nx <= 1e-10 * start {
            return None;
        }
        x.iter_mut().for_each(|v| *v /= nx);
        Some(x)
    }
}

/// Computes `count` extremal eigenpairs of the symmetric operator `op`.
pub fn eigs<Op: LinearOperator + ?Sized>(op: &Op, opts: &KrylovOptions) -> KrylovResult {
    let d = op.dim();
    let count = opts.count.min(d);
    let b = opts.block_size.max(1).min(d);
    let keep = (count + b).min(d);
    let max_basis = opts.max_basis.max(keep + b).min(d);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let random_vec = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect() };

    let mut basis = Basis { v: Vec::new(), av: Vec::new() };
    let mut matvecs = 0usize;
    let apply = |x: &[f64], matvecs: &mut usize| -> Vec<f64> {
        let mut y = vec![0.0; d];
        op.apply(x, &mut y);
        *matvecs += 1;
        y
    };

    let mut block: Vec<Vec<f64>> = (0..b).map(|_| random_vec(&mut rng)).collect();
    let mut restarts = 0usize;
    loop {
        // expand
        while basis.v.len() < max_basis {
            let mut added = Vec::new();
            for x in block.drain(..) {
                if basis.v.len() >= max_basis {
                    break;
                }
                let mut cand = basis.orthogonalize(x);
                let mut tries = 0;
                while cand.is_none() && tries < 3 && basis.v.len() < d {
                    cand = basis.orthogonalize(random_vec(&mut rng));
                    tries += 1;
                }
                if let Some(q) = cand {
                    let aq = apply(&q, &mut matvecs);
                    basis.v.push(q);
                    basis.av.push(aq.clone());
                    added.push(aq);
                }
            }
            if added.is_empty() {
                break;
            }
            block = added;
        }

        // Rayleigh-Ritz
        let m = basis.v.len();
        let h = DMatrix::from_fn(m, m, |i, j| 0.5 * (dot(&basis.v[i], &basis.av[j]) + dot(&basis.v[j], &basis.av[i])));
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&i, &j| {
            let (a, c) = (eig.eigenvalues[i], eig.eigenvalues[j]);
            match opts.which {
                Which::Smallest => a.total_cmp(&c),
                Which::Largest => c.total_cmp(&a),
            }
        });
        let kk = keep.min(m);
        let mut ritz_v = Vec::with_capacity(kk);
        let mut ritz_av = Vec::with_capacity(kk);
        let mut thetas = Vec::with_capacity(kk);
        for &c in &order[..kk] {
            let y = eig.eigenvectors.column(c);
            let mut v = vec![0.0; d];
            let mut av = vec![0.0; d];
            for (k, yk) in y.iter().enumerate() {
                for i in 0..d {
                    v[i] += yk * basis.v[k][i];
                    av[i] += yk * basis.av[k][i];
                }
            }
            thetas.push(eig.eigenvalues[c]);
            ritz_v.push(v);
            ritz_av.push(av);
        }
        let residual_vecs: Vec<Vec<f64>> = ritz_v
            .iter()
            .zip(&ritz_av)
            .zip(&thetas)
            .map(|((v, av), t)| av.iter().zip(v).map(|(a, x)| a - t * x).collect())
            .collect();
        let res: Vec<f64> = residual_vecs.iter().map(|r| norm(r)).collect();
        let full = m == d;
        let want = count.min(kk);
        let tol = if opts.relative {
            (opts.tol * thetas.first().map_or(0.0, |t| t.abs())).max(opts.abs_floor)
        } else {
            opts.tol
        };
        let claimed = full || res[..want].iter().all(|r| *r <= tol);
        if claimed || restarts >= opts.max_restarts {
            // verify with fresh products
            let mut fresh = Vec::with_capacity(want);
            for i in 0..want {
                let av = apply(&ritz_v[i], &mut matvecs);
                let nv = norm(&ritz_v[i]);
                let r: Vec<f64> = av.iter().zip(&ritz_v[i]).map(|(a, x)| a - thetas[i] * x).collect();
                fresh.push(norm(&r) / nv);
                ritz_av[i] = av;
            }
            let ok = fresh.iter().all(|r| *r <= tol) || (full && fresh.iter().all(|r| r.is_finite()));
            if ok || restarts >= opts.max_restarts {
                return KrylovResult {
                    values: thetas[..want].to_vec(),
                    vectors: ritz_v.into_iter().take(want).collect(),
                    residuals: fresh,
                    restarts,
                    matvecs,
                    converged: ok,
                };
            }
        }

        // thick restart: keep Ritz vectors, continue from their residuals
        restarts += 1;
        basis.v = ritz_v;
        basis.av = ritz_av;
        let mut next: Vec<(f64, Vec<f64>)> = residual_vecs.into_iter().zip(res).map(|(r, n)| (n, r)).collect();
        next.truncate(b.max(want));
        block = next
            .into_iter()
            .take(b)
            .map(|(n, r)| if n > 0.0 { r } else { random_vec(&mut rng) })
            .collect();
    }
}
