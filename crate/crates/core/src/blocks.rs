//! Block-diagonal symmetric matrices with small `n x n` blocks.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::sparse::{Csr, TripletBuilder};

#[derive(Clone, Debug, PartialEq)]
pub struct BlockDiagonal {
    n: usize,
    blocks: Vec<DMatrix<f64>>,
}

fn is_diagonal(m: &DMatrix<f64>) -> bool {
    let n = m.nrows();
    (0..n).all(|i| (0..n).all(|j| i == j || m[(i, j)] == 0.0))
}

impl BlockDiagonal {
    pub fn new(n: usize, blocks: Vec<DMatrix<f64>>) -> Self {
        debug_assert!(blocks.iter().all(|b| b.nrows() == n && b.ncols() == n));
        BlockDiagonal { n, blocks }
    }

    pub fn block_size(&self) -> usize {
        self.n
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn dim(&self) -> usize {
        self.n * self.blocks.len()
    }

    pub fn block(&self, q: usize) -> &DMatrix<f64> {
        &self.blocks[q]
    }

    pub fn blocks(&self) -> &[DMatrix<f64>] {
        &self.blocks
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut y = vec![0.0; x.len()];
        for (q, b) in self.blocks.iter().enumerate() {
            for a in 0..n {
                let mut s = 0.0;
                for c in 0..n {
                    s += b[(a, c)] * x[q * n + c];
                }
                y[q * n + a] = s;
            }
        }
        y
    }

    pub fn apply_complex(&self, x: &[num_complex::Complex64]) -> Vec<num_complex::Complex64> {
        let n = self.n;
        let mut y = vec![num_complex::Complex64::new(0.0, 0.0); x.len()];
        for (q, b) in self.blocks.iter().enumerate() {
            for a in 0..n {
                let mut s = num_complex::Complex64::new(0.0, 0.0);
                for c in 0..n {
                    s += x[q * n + c] * b[(a, c)];
                }
                y[q * n + a] = s;
            }
        }
        y
    }

    /// Applies `f` to the eigenvalues of every block. Diagonal blocks are
    /// handled entrywise so that e.g. the square root of `h^n I` is exact.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> f64) -> BlockDiagonal {
        let blocks = self
            .blocks
            .iter()
            .map(|b| {
                if is_diagonal(b) {
                    let mut out = b.clone();
                    for i in 0..self.n {
                        out[(i, i)] = f(b[(i, i)]);
                    }
                    out
                } else {
                    let e = SymmetricEigen::new(b.clone());
                    let d = DMatrix::from_diagonal(&e.eigenvalues.map(&f));
                    let m = &e.eigenvectors * d * e.eigenvectors.transpose();
                    (&m + m.transpose()) * 0.5
                }
            })
            .collect();
        BlockDiagonal::new(self.n, blocks)
    }

    /// Smallest and largest block eigenvalue.
    pub fn eigen_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for b in &self.blocks {
            let (l, h) = if is_diagonal(b) {
                let d = b.diagonal();
                (d.min(), d.max())
            } else {
                let e = SymmetricEigen::new(b.clone()).eigenvalues;
                (e.min(), e.max())
            };
            lo = lo.min(l);
            hi = hi.max(h);
        }
        (lo, hi)
    }

    pub fn to_csr(&self) -> Csr {
        let n = self.n;
        let mut t = TripletBuilder::new(self.dim(), self.dim());
        for (q, b) in self.blocks.iter().enumerate() {
            for a in 0..n {
                for c in 0..n {
                    t.push(q * n + a, q * n + c, b[(a, c)]);
                }
            }
        }
        t.build()
    }

    /// `B S B` for symmetric block-diagonal `B`, returned exactly symmetric.
    pub fn congruence(&self, s: &Csr) -> Csr {
        let n = self.n;
        let dim = self.dim();
        assert_eq!(s.rows(), dim);
        // T = S B
        let mut tb = TripletBuilder::new(dim, dim);
        for r in 0..dim {
            for (c, v) in s.row(r) {
                let (qc, d) = (c / n, c % n);
                let bq = &self.blocks[qc];
                for b in 0..n {
                    let w = bq[(d, b)];
                    if w != 0.0 {
                        tb.push(r, qc * n + b, v * w);
                    }
                }
            }
        }
        let t = tb.build();
        // A = B T
        let mut ab = TripletBuilder::new(dim, dim);
        for (q, bq) in self.blocks.iter().enumerate() {
            for c in 0..n {
                for (col, v) in t.row(q * n + c) {
                    for a in 0..n {
                        let w = bq[(a, c)];
                        if w != 0.0 {
                            ab.push(q * n + a, col, w * v);
                        }
                    }
                }
            }
        }
        ab.build().symmetrized()
    }
}
