//! Dense symmetric eigensolver: Householder tridiagonalization followed by
//! implicit-shift QL, the classic EISPACK tred2/tql2 pair. Full
//! decompositions are used up to `FULL_DECOMP_LIMIT` unknowns; beyond that
//! the smallest eigenpair is found by shifted inverse iteration with
//! Rayleigh-quotient refinement.

use super::LinalgError;
use super::dense::{DenseLu, DenseMatrix};

const FULL_DECOMP_LIMIT: usize = 2000;
const QL_MAX_SWEEPS: usize = 60;
const INVERSE_ITER_LIMIT: usize = 500;

/// Eigenvalues ascending, eigenvectors as matching columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: DenseMatrix,
}

impl SymEigen {
    /// Column `k` of the eigenvector matrix.
    pub fn vector(&self, k: usize) -> Vec<f64> {
        (0..self.vectors.n_rows()).map(|r| self.vectors.get(r, k)).collect()
    }
}

/// Full decomposition of a symmetric matrix. Only the lower triangle is
/// read; symmetry is the caller's contract.
pub fn sym_eigen(a: &DenseMatrix) -> Result<SymEigen, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::DimensionMismatch(format!(
            "eigensolver needs a square matrix, got {}x{}",
            a.n_rows(),
            a.n_cols()
        )));
    }
    let n = a.n_rows();
    if n == 0 {
        return Ok(SymEigen { values: Vec::new(), vectors: DenseMatrix::zeros(0, 0) });
    }
    let mut v = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    tql2(&mut v, &mut d, &mut e)?;
    sort_pairs(&mut v, &mut d);
    Ok(SymEigen { values: d, vectors: v })
}

/// Smallest eigenvalue and a unit eigenvector of a symmetric matrix.
pub fn min_eigenvalue_sym(a: &DenseMatrix) -> Result<(f64, Vec<f64>), LinalgError> {
    if !a.is_square() || a.n_rows() == 0 {
        return Err(LinalgError::DimensionMismatch(format!(
            "min eigenvalue needs a nonempty square matrix, got {}x{}",
            a.n_rows(),
            a.n_cols()
        )));
    }
    if a.n_rows() <= FULL_DECOMP_LIMIT {
        let eig = sym_eigen(a)?;
        Ok((eig.values[0], eig.vector(0)))
    } else {
        inverse_iteration_min(a)
    }
}

/// Householder reduction to tridiagonal form; `v` holds the accumulated
/// orthogonal transform on exit, `d` the diagonal, `e` the subdiagonal.
fn tred2(v: &mut DenseMatrix, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v.get(n - 1, j);
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for item in d.iter().take(i) {
            scale += item.abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v.get(i - 1, j);
                v.set(i, j, 0.0);
                v.set(j, i, 0.0);
            }
        } else {
            for item in d.iter_mut().take(i) {
                *item /= scale;
                h += *item * *item;
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for item in e.iter_mut().take(i) {
                *item = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v.set(j, i, f);
                g = e[j] + v.get(j, j) * f;
                for k in j + 1..i {
                    g += v.get(k, j) * d[k];
                    e[k] += v.get(k, j) * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    let val = v.get(k, j) - (f * e[k] + g * d[k]);
                    v.set(k, j, val);
                }
                d[j] = v.get(i - 1, j);
                v.set(i, j, 0.0);
            }
        }
        d[i] = h;
    }
    for i in 0..n - 1 {
        let last = v.get(i, i);
        v.set(n - 1, i, last);
        v.set(i, i, 1.0);
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v.get(k, i + 1) / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v.get(k, i + 1) * v.get(k, j);
                }
                for k in 0..=i {
                    let val = v.get(k, j) - g * d[k];
                    v.set(k, j, val);
                }
            }
        }
        for k in 0..=i {
            v.set(k, i + 1, 0.0);
        }
    }
    for j in 0..n {
        d[j] = v.get(n - 1, j);
        v.set(n - 1, j, 0.0);
    }
    v.set(n - 1, n - 1, 1.0);
    e[0] = 0.0;
}

/// Implicit-shift QL on the tridiagonal (d, e), rotations accumulated into
/// the columns of `v`.
fn tql2(v: &mut DenseMatrix, d: &mut [f64], e: &mut [f64]) -> Result<(), LinalgError> {
    let n = d.len();
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;

    let mut f = 0.0f64;
    let mut tst1 = 0.0f64;
    let eps = f64::EPSILON;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut sweeps = 0;
            loop {
                sweeps += 1;
                if sweeps > QL_MAX_SWEEPS {
                    return Err(LinalgError::NoConvergence(QL_MAX_SWEEPS));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for item in d.iter_mut().take(n).skip(l + 2) {
                    *item -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0f64;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0f64;
                let mut s2 = 0.0f64;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g2 = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g2;
                    d[i + 1] = h + s * (c * g2 + s * d[i]);
                    for k in 0..n {
                        h = v.get(k, i + 1);
                        v.set(k, i + 1, s * v.get(k, i) + c * h);
                        v.set(k, i, c * v.get(k, i) - s * h);
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

fn sort_pairs(v: &mut DenseMatrix, d: &mut [f64]) {
    let n = d.len();
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        for j in i + 1..n {
            if d[j] < d[k] {
                k = j;
            }
        }
        if k != i {
            d.swap(i, k);
            for r in 0..n {
                let t = v.get(r, i);
                v.set(r, i, v.get(r, k));
                v.set(r, k, t);
            }
        }
    }
}

/// Shifted inverse iteration toward the smallest eigenvalue, for matrices
/// too large for a full decomposition. The shift starts below the spectrum
/// (Gershgorin) and is refined with Rayleigh quotients.
fn inverse_iteration_min(a: &DenseMatrix) -> Result<(f64, Vec<f64>), LinalgError> {
    let n = a.n_rows();
    let mut lo = f64::INFINITY;
    let mut span: f64 = 0.0;
    for r in 0..n {
        let mut diag = 0.0;
        let mut off = 0.0;
        for c in 0..n {
            let v = a.get(r, c);
            if r == c {
                diag = v;
            } else {
                off += v.abs();
            }
        }
        lo = lo.min(diag - off);
        span = span.max(diag.abs() + off);
    }
    let scale = span.max(1.0);
    let mut shift = lo - 1e-8 * scale;
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + (i as f64 * 0.7391).sin() * 0.01)
        .collect();
    normalize(&mut x);
    let mut lambda = rayleigh(a, &x);
    let mut refactors = 0;
    let mut iterations = 0;
    loop {
        let mut shifted = a.clone();
        for i in 0..n {
            shifted.add_to(i, i, -shift);
        }
        let lu = match DenseLu::factor(&shifted) {
            Ok(lu) => lu,
            Err(LinalgError::SingularMatrix(_)) => {
                // The shift landed on an eigenvalue; nudge and retry.
                shift -= 1e-10 * scale;
                refactors += 1;
                if refactors > 8 {
                    return Err(LinalgError::NoConvergence(iterations));
                }
                continue;
            }
            Err(e) => return Err(e),
        };
        for _ in 0..INVERSE_ITER_LIMIT {
            iterations += 1;
            let mut y = lu.solve(&x);
            normalize(&mut y);
            let lam = rayleigh(a, &y);
            let res = residual_norm(a, &y, lam);
            x = y;
            if res <= 1e-12 * scale {
                return Ok((lam, x));
            }
            lambda = lam;
        }
        refactors += 1;
        if refactors > 8 {
            return Err(LinalgError::NoConvergence(iterations));
        }
        shift = lambda - 1e-6 * scale;
    }
}

fn normalize(x: &mut [f64]) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        for v in x.iter_mut() {
            *v /= norm;
        }
    }
}

fn rayleigh(a: &DenseMatrix, x: &[f64]) -> f64 {
    let ax = a.matvec(x);
    x.iter().zip(&ax).map(|(u, v)| u * v).sum()
}

fn residual_norm(a: &DenseMatrix, x: &[f64], lambda: f64) -> f64 {
    a.matvec(x)
        .iter()
        .zip(x)
        .map(|(ax, xi)| (ax - lambda * xi).powi(2))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_has_unit_spectrum() {
        let eig = sym_eigen(&DenseMatrix::identity(5)).unwrap();
        for v in &eig.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn diagonal_min_eigenpair() {
        let mut a = DenseMatrix::zeros(3, 3);
        a.set(0, 0, 2.0);
        a.set(1, 1, 5.0);
        a.set(2, 2, 7.0);
        let (lam, vec) = min_eigenvalue_sym(&a).unwrap();
        assert!((lam - 2.0).abs() < 1e-13);
        assert!(vec[0].abs() > 0.999 && vec[1].abs() < 1e-10 && vec[2].abs() < 1e-10);
    }

    #[test]
    fn two_by_two_known_spectrum() {
        let a = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]);
        let eig = sym_eigen(&a).unwrap();
        assert!((eig.values[0] - 1.0).abs() < 1e-14);
        assert!((eig.values[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn eigenpairs_reconstruct_matrix_action() {
        // Seeded symmetric fill; A v_k must equal lambda_k v_k.
        let n = 24;
        let mut state = 42u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        let mut a = DenseMatrix::zeros(n, n);
        for r in 0..n {
            for c in 0..=r {
                let v = next();
                a.set(r, c, v);
                a.set(c, r, v);
            }
        }
        let eig = sym_eigen(&a).unwrap();
        for k in [0, n / 2, n - 1] {
            let v = eig.vector(k);
            let av = a.matvec(&v);
            for i in 0..n {
                assert!(
                    (av[i] - eig.values[k] * v[i]).abs() < 1e-10,
                    "eigenpair {k} residual too large at row {i}"
                );
            }
        }
    }
}
