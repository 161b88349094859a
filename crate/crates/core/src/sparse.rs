//! Compressed-row sparse matrices with deterministic column ordering.

use std::collections::BTreeMap;
use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;

/// Accumulates `(row, col, value)` contributions; duplicates are summed in
/// insertion order.
#[derive(Clone, Debug, Default)]
pub struct TripletBuilder {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl TripletBuilder {
    pub fn new(rows: usize, cols: usize) -> Self {
        TripletBuilder {
            rows,
            cols,
            entries: Vec::new(),
        }
    }

    #[inline]
    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.rows && c < self.cols);
        self.entries.push((r, c, v));
    }

    pub fn build(mut self) -> Csr {
        // stable sort keeps the summation order of duplicates deterministic
        self.entries.sort_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0usize; self.rows + 1];
        let mut indices = Vec::with_capacity(self.entries.len());
        let mut data = Vec::with_capacity(self.entries.len());
        let mut it = self.entries.into_iter().peekable();
        while let Some((r, c, mut v)) = it.next() {
            while let Some(&(r2, c2, v2)) = it.peek() {
                if (r2, c2) != (r, c) {
                    break;
                }
                v += v2;
                it.next();
            }
            if v != 0.0 {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
            }
        }
        for r in 0..self.rows {
            indptr[r + 1] += indptr[r];
        }
        Csr {
            rows: self.rows,
            cols: self.cols,
            indptr,
            indices,
            data,
        }
    }
}

/// Compressed sparse row matrix. Columns within a row are strictly
/// increasing and explicit zeros are never stored.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    data: Vec<f64>,
}

impl Csr {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Csr {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut b = TripletBuilder::new(n, n);
        for i in 0..n {
            b.push(i, i, 1.0);
        }
        b.build()
    }

    pub fn rows(&self) -> usize {
        self.rows
    }
    pub fn cols(&self) -> usize {
        self.cols
    }
    pub fn nnz(&self) -> usize {
        self.data.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        self.indices[a..b].iter().copied().zip(self.data[a..b].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (a, b) = (self.indptr[r], self.indptr[r + 1]);
        match self.indices[a..b].binary_search(&c) {
            Ok(k) => self.data[a + k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += self.data[k] * x[self.indices[k]];
            }
            *yr = s;
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows];
        self.matvec(x, &mut y);
        y
    }

    pub fn matvec_complex(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(y.len(), self.rows);
        for (r, yr) in y.iter_mut().enumerate() {
            let mut s = Complex64::new(0.0, 0.0);
            for k in self.indptr[r]..self.indptr[r + 1] {
                s += x[self.indices[k]] * self.data[k];
            }
            *yr = s;
        }
    }

    pub fn scaled(&self, s: f64) -> Csr {
        let mut out = self.clone();
        for v in &mut out.data {
            *v *= s;
        }
        out.prune();
        out
    }

    fn prune(&mut self) {
        if self.data.iter().all(|v| *v != 0.0) {
            return;
        }
        let mut b = TripletBuilder::new(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                b.push(r, c, v);
            }
        }
        *self = b.build();
    }

    /// `sum_i s_i A_i`, evaluated entrywise in the order given.
    pub fn linear_combination(terms: &[(&Csr, f64)]) -> Csr {
        let (rows, cols) = (terms[0].0.rows, terms[0].0.cols);
        let mut b = TripletBuilder::new(rows, cols);
        for r in 0..rows {
            let mut acc: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
            for (t, (m, s)) in terms.iter().enumerate() {
                assert_eq!((m.rows, m.cols), (rows, cols));
                for (c, v) in m.row(r) {
                    let e = acc.entry(c).or_insert_with(|| vec![0.0; terms.len()]);
                    e[t] = v * s;
                }
            }
            for (c, parts) in acc {
                let mut v = parts[0];
                for p in &parts[1..] {
                    v += p;
                }
                b.push(r, c, v);
            }
        }
        b.build()
    }

    pub fn transpose(&self) -> Csr {
        let mut b = TripletBuilder::new(self.cols, self.rows);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                b.push(c, r, v);
            }
        }
        b.build()
    }

    /// Bit-level equality with the transpose.
    pub fn is_symmetric_exact(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }

    /// `(A + A^T) / 2`, exactly symmetric.
    pub fn symmetrized(&self) -> Csr {
        let t = self.transpose();
        let mut b = TripletBuilder::new(self.rows, self.cols);
        for r in 0..self.rows {
            let mut acc: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
            for (c, v) in self.row(r) {
                acc.entry(c).or_default().0 = v;
            }
            for (c, v) in t.row(r) {
                acc.entry(c).or_default().1 = v;
            }
            for (c, (a, bt)) in acc {
                // a + b is commutative in floating point, so entry (r,c)
                // and (c,r) are computed from the same pair.
                b.push(r, c, 0.5 * (a + bt));
            }
        }
        b.build()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).collect()
    }

    /// Gershgorin enclosure `[lo, hi]` of the spectrum of a symmetric matrix.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..self.rows {
            let mut d = 0.0;
            let mut off = 0.0;
            for (c, v) in self.row(r) {
                if c == r {
                    d = v;
                } else {
                    off += v.abs();
                }
            }
            lo = lo.min(d - off);
            hi = hi.max(d + off);
        }
        if self.rows == 0 {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    /// Writes one `row col value` line per stored entry, sorted by
    /// `(row, col)`, values in round-trip exponent notation.
    pub fn write_triplets(&self, mut out: impl Write) -> std::io::Result<()> {
        writeln!(out, "# rows {} cols {} nnz {}", self.rows, self.cols, self.nnz())?;
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                writeln!(out, "{r} {c} {v:e}")?;
            }
        }
        Ok(())
    }

    /// Parses the output of [`Csr::write_triplets`].
    pub fn read_triplets(text: &str) -> Option<Csr> {
        let mut lines = text.lines();
        let header: Vec<&str> = lines.next()?.split_whitespace().collect();
        if header.len() != 7 || header[0] != "#" {
            return None;
        }
        let rows = header[2].parse().ok()?;
        let cols = header[4].parse().ok()?;
        let mut b = TripletBuilder::new(rows, cols);
        for line in lines {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 3 {
                return None;
            }
            b.push(f[0].parse().ok()?, f[1].parse().ok()?, f[2].parse().ok()?);
        }
        Some(b.build())
    }
}
