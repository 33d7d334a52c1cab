//! Compressed sparse row matrices.
//!
//! Invariants maintained by construction: column indices within a row are
//! strictly increasing (so no duplicates survive), and `row_ptr` has length
//! `n_rows + 1` with `row_ptr[0] == 0`. Entries whose accumulated value is
//! exactly zero are kept; callers that assemble by triplets get duplicate
//! coordinates summed.

use super::dense::DenseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

/// Coordinate-format accumulator used by all assembly code.
#[derive(Debug, Clone, Default)]
pub struct Triplets {
    n_rows: usize,
    n_cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, entries: Vec::new() }
    }

    #[inline]
    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        debug_assert!(r < self.n_rows && c < self.n_cols, "triplet out of bounds");
        self.entries.push((r, c, v));
    }

    pub fn to_csr(&self) -> SparseMatrix {
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, &self.entries)
    }
}

impl SparseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from coordinate entries; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, entries: &[(usize, usize, f64)]) -> Self {
        let mut count = vec![0usize; n_rows + 1];
        for &(r, c, _) in entries {
            assert!(r < n_rows && c < n_cols, "triplet out of bounds");
            count[r + 1] += 1;
        }
        for i in 0..n_rows {
            count[i + 1] += count[i];
        }
        let mut cols = vec![0usize; entries.len()];
        let mut vals = vec![0.0; entries.len()];
        let mut next = count.clone();
        for &(r, c, v) in entries {
            let slot = next[r];
            cols[slot] = c;
            vals[slot] = v;
            next[r] += 1;
        }
        // Sort each row by column and merge duplicates in place.
        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut out_cols = Vec::with_capacity(entries.len());
        let mut out_vals = Vec::with_capacity(entries.len());
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for r in 0..n_rows {
            scratch.clear();
            scratch.extend(
                cols[count[r]..count[r + 1]].iter().copied().zip(vals[count[r]..count[r + 1]].iter().copied()),
            );
            scratch.sort_unstable_by_key(|&(c, _)| c);
            let mut i = 0;
            while i < scratch.len() {
                let c = scratch[i].0;
                let mut v = scratch[i].1;
                i += 1;
                while i < scratch.len() && scratch[i].0 == c {
                    v += scratch[i].1;
                    i += 1;
                }
                out_cols.push(c);
                out_vals.push(v);
            }
            row_ptr[r + 1] = out_cols.len();
        }
        Self { n_rows, n_cols, row_ptr, col_idx: out_cols, values: out_vals }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// (column indices, values) of one row.
    pub fn row(&self, r: usize) -> (&[usize], &[f64]) {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        (&self.col_idx[span.clone()], &self.values[span])
    }

    /// Stored value at (r, c), zero if the position is not stored.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (cols, vals) = self.row(r);
        match cols.binary_search(&c) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols, "matvec dimension mismatch");
        let mut y = vec![0.0; self.n_rows];
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let mut s = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                s += v * x[*c];
            }
            y[r] = s;
        }
        y
    }

    /// y += alpha * A x, without allocating.
    pub fn matvec_acc(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let mut s = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                s += v * x[*c];
            }
            y[r] += alpha * s;
        }
    }

    /// y += alpha * Aᵀ x, without materializing the transpose.
    pub fn matvec_transpose_acc(&self, x: &[f64], alpha: f64, y: &mut [f64]) {
        assert_eq!(x.len(), self.n_rows);
        assert_eq!(y.len(), self.n_cols);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let xr = alpha * x[r];
            if xr != 0.0 {
                for (c, v) in cols.iter().zip(vals) {
                    y[*c] += v * xr;
                }
            }
        }
    }

    pub fn transpose(&self) -> SparseMatrix {
        let mut count = vec![0usize; self.n_cols + 1];
        for &c in &self.col_idx {
            count[c + 1] += 1;
        }
        for i in 0..self.n_cols {
            count[i + 1] += count[i];
        }
        let row_ptr = count.clone();
        let mut col_idx = vec![0usize; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        let mut next = count;
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                let slot = next[*c];
                col_idx[slot] = r;
                values[slot] = *v;
                next[*c] += 1;
            }
        }
        // Rows of the result inherit sorted order because source rows are
        // visited in increasing index.
        SparseMatrix { n_rows: self.n_cols, n_cols: self.n_rows, row_ptr, col_idx, values }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            for (c, v) in cols.iter().zip(vals) {
                d.set(r, *c, *v);
            }
        }
        d
    }

    /// Maximum over rows of |a_rr| plus off-diagonal row sums; a cheap upper
    /// bound on the spectral radius used to seed eigen iterations.
    pub fn gershgorin_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..self.n_rows {
            let (cols, vals) = self.row(r);
            let mut diag = 0.0;
            let mut off = 0.0;
            for (c, v) in cols.iter().zip(vals) {
                if *c == r {
                    diag = *v;
                } else {
                    off += v.abs();
                }
            }
            lo = lo.min(diag - off);
            hi = hi.max(diag + off);
        }
        if self.n_rows == 0 {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn triplets_sum_duplicates_and_sort() {
        let a = SparseMatrix::from_triplets(
            2,
            3,
            &[(0, 2, 1.0), (0, 0, 2.0), (0, 2, 0.5), (1, 1, -1.0)],
        );
        assert_eq!(a.nnz(), 3);
        let (cols, vals) = a.row(0);
        assert_eq!(cols, &[0, 2]);
        assert_eq!(vals, &[2.0, 1.5]);
        assert_eq!(a.get(1, 1), -1.0);
        assert_eq!(a.get(1, 2), 0.0);
    }

    #[test]
    fn matvec_and_transpose_agree_with_dense() {
        let a = SparseMatrix::from_triplets(
            3,
            2,
            &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, -3.0), (2, 1, 4.0)],
        );
        let x = vec![1.0, 1.0];
        assert_eq!(a.matvec(&x), vec![3.0, -3.0, 4.0]);
        let at = a.transpose();
        assert_eq!(at.n_rows(), 2);
        let y = vec![1.0, 1.0, 1.0];
        let mut z = vec![0.0; 2];
        a.matvec_transpose_acc(&y, 1.0, &mut z);
        assert_eq!(z, at.matvec(&y));
    }
}
