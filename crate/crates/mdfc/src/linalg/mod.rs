//! Matrix types and direct solvers used by every other module.
//!
//! The kernels are implemented in-crate: dense LU with partial pivoting,
//! left-looking sparse LU with threshold pivoting, and a tred2/tql2
//! symmetric eigensolver. The one exception is large sparse factorizations,
//! which `SparseLu` hands to a fill-reducing external engine past a size
//! threshold (see `sparse_lu`); everything stays single-threaded and
//! deterministic either way.

mod dense;
mod eigen;
mod sparse;
mod sparse_lu;

pub use dense::{factor_solve_dense, DenseLu, DenseMatrix};
pub use eigen::{min_eigenvalue_sym, sym_eigen, SymEigen};
pub use sparse::{SparseMatrix, Triplets};
pub use sparse_lu::SparseLu;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    /// Elimination found no usable pivot at the given step.
    #[error("singular matrix: no usable pivot at elimination step {0}")]
    SingularMatrix(usize),
    /// Iterative stage exceeded its sweep budget.
    #[error("eigensolver failed to converge within {0} iterations")]
    NoConvergence(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
}

/// Factors a sparse system and solves a single right-hand side.
pub fn factor_solve(a: &SparseMatrix, rhs: &[f64]) -> Result<Vec<f64>, LinalgError> {
    if rhs.len() != a.n_rows() {
        return Err(LinalgError::DimensionMismatch(format!(
            "matrix is {}x{} but rhs has length {}",
            a.n_rows(),
            a.n_cols(),
            rhs.len()
        )));
    }
    Ok(SparseLu::factor(a)?.solve(rhs))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_identity_returns_first_basis_vector() {
        let n = 6;
        let entries: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        let a = SparseMatrix::from_triplets(n, n, &entries);
        let mut b = vec![0.0; n];
        b[0] = 1.0;
        let x = factor_solve(&a, &b).unwrap();
        assert_eq!(x, b);
    }

    #[test]
    fn seeded_spd_system_small_residual() {
        // SPD by construction: A = B Bᵀ + n I with deterministic B.
        let n = 50;
        let mut state = 7u64;
        let mut next = move || {
            state = state.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let b_rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..n).map(|_| next()).collect()).collect();
        let mut entries = Vec::new();
        for r in 0..n {
            for c in 0..n {
                let mut v = 0.0;
                for k in 0..n {
                    v += b_rows[r][k] * b_rows[c][k];
                }
                if r == c {
                    v += n as f64;
                }
                entries.push((r, c, v));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &entries);
        let rhs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).cos()).collect();
        let x = factor_solve(&a, &rhs).unwrap();
        let res = a
            .matvec(&x)
            .iter()
            .zip(&rhs)
            .map(|(ax, b)| (ax - b).abs())
            .fold(0.0, f64::max);
        assert!(res <= 1e-10, "residual {res} above tolerance");
    }
}
