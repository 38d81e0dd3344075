//! Minimal sparse matrix support: coordinate triplets compressed to CSR.
//!
//! The solvers only need matrix-vector products, quadratic forms, and a dense
//! conversion for small direct solves, so we keep this deliberately small
//! rather than pulling in a full sparse linear algebra stack.

use ndarray::{Array1, Array2, ArrayView1};

/// Compressed sparse row matrix over `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Build from coordinate triplets. Duplicate entries are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Self {
        let mut entries: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        entries.sort_by_key(|e| (e.0, e.1));

        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len());
        for (r, c, v) in entries {
            assert!(r < nrows && c < ncols, "triplet out of bounds");
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }

        let mut indptr = vec![0usize; nrows + 1];
        for &(r, _, _) in &merged {
            indptr[r + 1] += 1;
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices: merged.iter().map(|e| e.1).collect(),
            values: merged.iter().map(|e| e.2).collect(),
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Iterate the nonzeros of row `r` as `(col, value)`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.indptr[r];
        let hi = self.indptr[r + 1];
        self.indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    /// y = A x
    pub fn matvec(&self, x: ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(x.len(), self.ncols, "matvec dimension mismatch");
        let mut y = Array1::zeros(self.nrows);
        for r in 0..self.nrows {
            let mut acc = 0.0;
            for (c, v) in self.row(r) {
                acc += v * x[c];
            }
            y[r] = acc;
        }
        y
    }

    /// y = Aᵀ x
    pub fn matvec_transpose(&self, x: ArrayView1<f64>) -> Array1<f64> {
        assert_eq!(x.len(), self.nrows, "matvec_transpose dimension mismatch");
        let mut y = Array1::zeros(self.ncols);
        for r in 0..self.nrows {
            let xr = x[r];
            if xr != 0.0 {
                for (c, v) in self.row(r) {
                    y[c] += v * xr;
                }
            }
        }
        y
    }

    /// xᵀ A x for square A.
    pub fn quadratic_form(&self, x: ArrayView1<f64>) -> f64 {
        self.matvec(x).dot(&x)
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::zeros((self.nrows, self.ncols));
        for r in 0..self.nrows {
            for (c, v) in self.row(r) {
                d[[r, c]] += v;
            }
        }
        d
    }
}

/// Deterministic generic start vector for power iteration. A structured
/// start like the all-ones vector can sit exactly in the null space of
/// Laplacian-type matrices; a hashed sequence avoids that.
pub fn power_start(len: usize) -> Array1<f64> {
    let mut v = Array1::zeros(len);
    for i in 0..len {
        let h = (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15).rotate_left(31);
        v[i] = (h % 2_000_003) as f64 / 2_000_003.0 - 0.5;
    }
    let norm = v.dot(&v).sqrt();
    if norm > 0.0 {
        v /= norm;
    } else {
        v.fill(1.0 / (len as f64).sqrt());
    }
    v
}

impl CsrMatrix {
    /// Largest-magnitude eigenvalue estimate of AᵀA via power iteration,
    /// i.e. an estimate of ‖A‖₂². Deterministic start vector.
    pub fn spectral_norm_sq(&self, steps: usize) -> f64 {
        if self.ncols == 0 || self.nnz() == 0 {
            return 0.0;
        }
        let mut v = power_start(self.ncols);
        let mut lambda = 0.0;
        for _ in 0..steps {
            let w = self.matvec_transpose(self.matvec(v.view()).view());
            let norm = w.dot(&w).sqrt();
            if norm == 0.0 {
                return 0.0;
            }
            lambda = v.dot(&w);
            v = w / norm;
        }
        lambda.max(0.0)
    }
}
