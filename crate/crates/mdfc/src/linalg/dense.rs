//! Dense row-major matrices and LU factorization with partial pivoting.

use super::LinalgError;

/// Dense matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Builds from rows; all rows must have equal length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        assert!(rows.iter().all(|r| r.len() == n_cols), "ragged rows");
        Self { n_rows, n_cols, data: rows.concat() }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.n_cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n_cols + c] = v;
    }

    #[inline]
    pub fn add_to(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.n_cols + c] += v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_cols..(r + 1) * self.n_cols]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n_cols, "matvec dimension mismatch");
        (0..self.n_rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.n_cols, self.n_rows);
        for r in 0..self.n_rows {
            for c in 0..self.n_cols {
                t.set(c, r, self.get(r, c));
            }
        }
        t
    }

    /// Largest absolute entry; zero for empty matrices.
    pub fn norm_max(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }
}

/// LU factors of a square dense matrix, PA = LU with row pivoting.
#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    /// Packed L (unit diagonal, below) and U (on and above the diagonal).
    lu: Vec<f64>,
    /// Row permutation: pivot row chosen at each elimination step.
    perm: Vec<usize>,
}

impl DenseLu {
    pub fn factor(a: &DenseMatrix) -> Result<Self, LinalgError> {
        if !a.is_square() {
            return Err(LinalgError::DimensionMismatch(format!(
                "LU needs a square matrix, got {}x{}",
                a.n_rows, a.n_cols
            )));
        }
        let n = a.n_rows;
        let mut lu = a.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut pmax = lu[k * n + k].abs();
            for r in k + 1..n {
                let v = lu[r * n + k].abs();
                if v > pmax {
                    pmax = v;
                    p = r;
                }
            }
            if pmax == 0.0 {
                return Err(LinalgError::SingularMatrix(k));
            }
            if p != k {
                for c in 0..n {
                    lu.swap(k * n + c, p * n + c);
                }
                perm.swap(k, p);
            }
            let pivot = lu[k * n + k];
            for r in k + 1..n {
                let m = lu[r * n + k] / pivot;
                lu[r * n + k] = m;
                if m != 0.0 {
                    for c in k + 1..n {
                        lu[r * n + c] -= m * lu[k * n + c];
                    }
                }
            }
        }
        Ok(Self { n, lu, perm })
    }

    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        assert_eq!(rhs.len(), self.n, "rhs length mismatch");
        let n = self.n;
        let mut x: Vec<f64> = self.perm.iter().map(|&p| rhs[p]).collect();
        for k in 0..n {
            let xk = x[k];
            if xk != 0.0 {
                for r in k + 1..n {
                    x[r] -= self.lu[r * n + k] * xk;
                }
            }
        }
        for k in (0..n).rev() {
            let mut s = x[k];
            for c in k + 1..n {
                s -= self.lu[k * n + c] * x[c];
            }
            x[k] = s / self.lu[k * n + k];
        }
        x
    }
}

/// Factors and solves in one call.
pub fn factor_solve_dense(a: &DenseMatrix, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    Ok(DenseLu::factor(a)?.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_solve_returns_rhs() {
        let a = DenseMatrix::identity(4);
        let b = vec![1.0, 0.0, 0.0, 0.0];
        let x = factor_solve_dense(&a, &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn two_by_two_exact() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let x = factor_solve_dense(&a, &[3.0, 3.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn singular_reports_pivot_step() {
        // Second row is a multiple of the first: elimination dies at step 1.
        let a = DenseMatrix::from_rows(&[vec![1.0, 2.0], vec![2.0, 4.0]]);
        match DenseLu::factor(&a) {
            Err(LinalgError::SingularMatrix(k)) => assert_eq!(k, 1),
            other => panic!("expected SingularMatrix, got {other:?}"),
        }
    }

    #[test]
    fn pivoting_handles_zero_leading_entry() {
        let a = DenseMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let x = factor_solve_dense(&a, &[2.0, 3.0]).unwrap();
        assert!((x[0] - 3.0).abs() < 1e-15 && (x[1] - 2.0).abs() < 1e-15);
    }
}
