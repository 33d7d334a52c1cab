//! Elimination of the subdomain pressures onto the interface fluxes.
//!
//! Each flowing subdomain is factored once and its pressure block is
//! condensed out, leaving a dense system over the flux densities plus
//! one constraint per undetermined pressure: the constant of each
//! unanchored flowing subdomain and every cell of an impermeable one.
//! The condensed matrix is the exchange mass plus the sum of
//! `G_i^T A_i^{-1} G_i`, built one column per flux unknown (one
//! back-substitution per adjacent subdomain) and symmetrized afterwards
//! to shed factorization round-off.

use std::collections::BTreeMap;

use crate::disc::LocalSolver;
use crate::linalg::{DenseLu, DenseMatrix};

use super::{AssemblyError, Coupled, Role, Solution};

/// Dense interface complement with its pressure-constant constraints.
pub struct SchurSystem {
    /// Condensed matrix over the flux unknowns (positive definite side),
    /// symmetrized.
    pub matrix: DenseMatrix,
    /// One column per constrained pressure: the integrated coupling of
    /// that pressure into each flux row.
    pub constraints: DenseMatrix,
    pub rhs: Vec<f64>,
    pub constraint_rhs: Vec<f64>,
    /// (subdomain, cell) per constraint column; `None` marks the free
    /// constant of an unanchored flowing subdomain.
    pub owners: Vec<(usize, Option<usize>)>,
}

impl SchurSystem {
    pub fn dim(&self) -> usize {
        self.matrix.n_rows()
    }

    pub fn n_constraints(&self) -> usize {
        self.owners.len()
    }
}

struct Prepared {
    /// Factored flowing subdomains; `None` for impermeable ones.
    factors: Vec<Option<LocalSolver>>,
    /// Coupling triples per subdomain: (flux index, local dof, value).
    by_sub: Vec<Vec<(usize, usize, f64)>>,
    /// First constraint column per constrained subdomain.
    starts: BTreeMap<usize, usize>,
    sys: SchurSystem,
}

fn prepare(cp: &Coupled<'_>) -> Result<Prepared, AssemblyError> {
    let n_m = cp.n_m;
    let n_subs = cp.operators.len();

    let mut factors: Vec<Option<LocalSolver>> = Vec::with_capacity(n_subs);
    for (i, op) in cp.operators.iter().enumerate() {
        if cp.roles[i].is_flowing() {
            let f = op
                .factor()
                .map_err(|source| AssemblyError::Disc { subdomain: i, source })?;
            factors.push(Some(f));
        } else {
            factors.push(None);
        }
    }

    let mut by_sub: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n_subs];
    for (k, itf) in cp.interfaces.iter().enumerate() {
        let m_rel = cp.m_offset[k] - cp.n_u;
        for (d, m, v) in cp.g_lower_entries(k) {
            by_sub[itf.key.lower].push((m_rel + m, d, v));
        }
        for (d, m, v) in cp.g_higher_entries(k) {
            by_sub[itf.key.higher].push((m_rel + m, d, v));
        }
    }
    let mut by_m: Vec<Vec<(usize, usize, f64)>> = vec![Vec::new(); n_m];
    for (i, triples) in by_sub.iter().enumerate() {
        for &(m, d, v) in triples {
            by_m[m].push((i, d, v));
        }
    }

    let mut s = DenseMatrix::zeros(n_m, n_m);
    for (r, c, v) in cp.mass_entries() {
        let (r, c) = (r - cp.n_u, c - cp.n_u);
        s.set(r, c, s.get(r, c) + v);
    }
    for m in 0..n_m {
        let mut per_sub: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
        for &(i, d, v) in &by_m[m] {
            per_sub.entry(i).or_default().push((d, v));
        }
        for (&i, entries) in &per_sub {
            let Some(f) = &factors[i] else { continue };
            let mut g = vec![0.0; cp.operators[i].n_dofs];
            for &(d, v) in entries {
                g[d] += v;
            }
            let w = f.solve(&g);
            for &(m2, d2, v2) in &by_sub[i] {
                s.set(m2, m, s.get(m2, m) + v2 * w[d2]);
            }
        }
    }
    for r in 0..n_m {
        for c in r + 1..n_m {
            let avg = 0.5 * (s.get(r, c) + s.get(c, r));
            s.set(r, c, avg);
            s.set(c, r, avg);
        }
    }

    let mut rhs = vec![0.0; n_m];
    for (i, f) in factors.iter().enumerate() {
        let Some(f) = f else { continue };
        let w = f.solve(&cp.operators[i].rhs_fixed);
        for &(m2, d2, v2) in &by_sub[i] {
            rhs[m2] += v2 * w[d2];
        }
    }
    for k in 0..cp.interfaces.len() {
        let m_rel = cp.m_offset[k] - cp.n_u;
        for (m, h) in cp.mortar_rhs(k).into_iter().enumerate() {
            rhs[m_rel + m] -= h;
        }
    }

    let mut cols: Vec<Vec<f64>> = Vec::new();
    let mut constraint_rhs = Vec::new();
    let mut owners = Vec::new();
    let mut starts = BTreeMap::new();
    for (i, op) in cp.operators.iter().enumerate() {
        match cp.roles[i] {
            Role::Flowing => {}
            Role::FlowingUnanchored => {
                starts.insert(i, owners.len());
                let mut col = vec![0.0; n_m];
                for &(m, _, v) in &by_sub[i] {
                    col[m] += v;
                }
                cols.push(col);
                constraint_rhs.push(op.rhs_fixed.iter().sum());
                owners.push((i, None));
            }
            Role::Blocking => {
                starts.insert(i, owners.len());
                for cell in 0..op.n_dofs {
                    let mut col = vec![0.0; n_m];
                    for &(m, d, v) in &by_sub[i] {
                        if d == cell {
                            col[m] += v;
                        }
                    }
                    cols.push(col);
                    constraint_rhs.push(op.rhs_fixed[cell]);
                    owners.push((i, Some(cell)));
                }
            }
        }
    }
    let mut constraints = DenseMatrix::zeros(n_m, cols.len());
    for (c, col) in cols.iter().enumerate() {
        for (r, &v) in col.iter().enumerate() {
            constraints.set(r, c, v);
        }
    }

    Ok(Prepared {
        factors,
        by_sub,
        starts,
        sys: SchurSystem { matrix: s, constraints, rhs, constraint_rhs, owners },
    })
}

pub(super) fn build(cp: &Coupled<'_>) -> Result<SchurSystem, AssemblyError> {
    prepare(cp).map(|p| p.sys)
}

pub(super) fn solve(cp: &Coupled<'_>) -> Result<Solution, AssemblyError> {
    let p = prepare(cp)?;
    let sys = &p.sys;
    let (n_m, n_c) = (sys.dim(), sys.n_constraints());
    let nt = n_m + n_c;

    // Bordered saddle system: constraints enter antisymmetrically so the
    // matrix stays symmetric overall.
    let mut full = DenseMatrix::zeros(nt, nt);
    for r in 0..n_m {
        for c in 0..n_m {
            full.set(r, c, sys.matrix.get(r, c));
        }
    }
    for r in 0..n_m {
        for c in 0..n_c {
            let v = sys.constraints.get(r, c);
            full.set(r, n_m + c, -v);
            full.set(n_m + c, r, -v);
        }
    }
    let mut frhs = Vec::with_capacity(nt);
    frhs.extend_from_slice(&sys.rhs);
    frhs.extend(sys.constraint_rhs.iter().map(|v| -v));

    let lu = DenseLu::factor(&full).map_err(AssemblyError::Singular)?;
    let x = lu.solve(&frhs);
    let lambda_flat = &x[..n_m];
    let p_plus = &x[n_m..];

    let mut u = Vec::with_capacity(cp.operators.len());
    for (i, op) in cp.operators.iter().enumerate() {
        match (&p.factors[i], cp.roles[i]) {
            (Some(f), role) => {
                let mut local = op.rhs_fixed.clone();
                for &(m, d, v) in &p.by_sub[i] {
                    local[d] -= v * lambda_flat[m];
                }
                let mut ui = f.solve(&local);
                if role == Role::FlowingUnanchored {
                    let shift = p_plus[p.starts[&i]];
                    for v in &mut ui {
                        *v += shift;
                    }
                }
                u.push(ui);
            }
            (None, _) => {
                let start = p.starts[&i];
                u.push((0..op.n_dofs).map(|c| p_plus[start + c]).collect());
            }
        }
    }
    let lambda = cp
        .interfaces
        .iter()
        .enumerate()
        .map(|(k, itf)| {
            let m_rel = cp.m_offset[k] - cp.n_u;
            lambda_flat[m_rel..m_rel + itf.n_mortar()].to_vec()
        })
        .collect();
    Ok(cp.package_solution(u, lambda))
}
