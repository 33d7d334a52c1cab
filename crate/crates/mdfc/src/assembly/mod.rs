//! Coupling of subdomain operators through the interface flux grids.
//!
//! The coupled unknowns are the subdomain pressure vectors `u_i` followed
//! by one flux density per interface flux cell. Each subdomain
//! contributes `A_i u_i + G_i lambda = f_i`, where `G_i` spreads
//! integrated fluxes into the equations: with a minus through the volume
//! scatter on the receiving (lower) side, with a plus through the trace
//! rows on the giving (higher) side. The exchange law closes the system
//! as `G^T u - M lambda = h`, with `M` the measure-over-permeability
//! diagonal plus whatever trace or injection compliance the operators
//! declare. The result is symmetric by construction: every coefficient
//! is written once and mirrored.
//!
//! Subdomains with tangential flow are eliminated interface-by-interface
//! when the dense interface complement is wanted; subdomains without
//! (point subdomains and impermeable branches) keep their pressures as
//! explicit constraint unknowns alongside the per-subdomain constants of
//! unanchored flowing blocks.

mod schur;
#[cfg(test)]
mod tests;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::disc::{
    build_operator, flux_audit, DiscError, FluxAudit, LocalOperator, Method, SubdomainData,
};
use crate::linalg::{LinalgError, SparseLu, SparseMatrix, Triplets};
use crate::mesh::{BoundaryValues, MixedDimMesh, SubdomainGrid};
use crate::mortar::{build_interface, InterfaceBasis, MortarInterface};

pub use schur::SchurSystem;

/// Flow role of a subdomain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Tangentially permeable and anchored by Dirichlet data.
    Flowing,
    /// Tangentially permeable, pressure defined up to a constant.
    FlowingUnanchored,
    /// No tangential flow; pressures live only in the exchange laws.
    Blocking,
}

impl Role {
    pub fn is_flowing(self) -> bool {
        !matches!(self, Role::Blocking)
    }
}

#[derive(Debug, Error)]
pub enum AssemblyError {
    #[error("subdomain {lower} is impermeable along with its upward neighbor {upper}; nested impermeable subdomains leave the inner pressures undetermined")]
    NestedBlockingDomains { lower: usize, upper: usize },
    #[error("subdomain {subdomain}: {source}")]
    Disc {
        subdomain: usize,
        #[source]
        source: DiscError,
    },
    #[error("coupled system is singular; every connected component needs a pressure anchor ({0})")]
    Singular(LinalgError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Assigns roles from the tangential conductivities (indexed per
/// subdomain; point subdomains always flow, they just have no interior)
/// and rejects impermeable subdomains stacked on impermeable neighbors.
pub fn classify(mesh: &MixedDimMesh, tangential: &[f64]) -> Result<Vec<Role>, AssemblyError> {
    let roles: Vec<Role> = mesh
        .subdomains
        .iter()
        .map(|sub| {
            if sub.dim > 0 && tangential[sub.id] == 0.0 {
                Role::Blocking
            } else if sub.has_dirichlet() {
                Role::Flowing
            } else {
                Role::FlowingUnanchored
            }
        })
        .collect();
    for sub in &mesh.subdomains {
        if roles[sub.id] != Role::Blocking {
            continue;
        }
        for &up in &mesh.up_neighbors[sub.id] {
            if roles[up] == Role::Blocking {
                return Err(AssemblyError::NestedBlockingDomains { lower: sub.id, upper: up });
            }
        }
    }
    Ok(roles)
}

/// Everything needed to discretize and couple one case.
pub struct ProblemSpec<'a> {
    pub mesh: &'a MixedDimMesh,
    pub values: &'a BoundaryValues,
    /// Discretization for flowing subdomains; blocking subdomains and
    /// point subdomains always use the void operator.
    pub method: Method,
    /// Tangential conductivity per subdomain (matrix permeability for 2D,
    /// along-fracture permeability for 1D; unused for points).
    pub tangential: Vec<f64>,
    /// Normal permeability per pairing, aligned with `mesh.pairings`.
    pub kappa_perp: Vec<f64>,
    /// Flux cells per lower cell on each interface.
    pub mortar_ratio: f64,
    /// Source density per subdomain per cell; empty means none.
    pub sources: Vec<Vec<f64>>,
}

/// The coupled problem: operators, interfaces and the block layout.
pub struct Coupled<'a> {
    pub mesh: &'a MixedDimMesh,
    pub roles: Vec<Role>,
    pub operators: Vec<LocalOperator>,
    pub interfaces: Vec<MortarInterface>,
    /// Start of each subdomain's pressure block.
    pub u_offset: Vec<usize>,
    pub n_u: usize,
    /// Start of each interface's flux block, after all pressure blocks.
    pub m_offset: Vec<usize>,
    pub n_m: usize,
    /// Volume scatters transposed: row = volume column, entries = DOFs.
    scatter_t: Vec<SparseMatrix>,
}

impl<'a> ProblemSpec<'a> {
    fn subdomain_data<'s>(&'s self, sub: &'s SubdomainGrid) -> SubdomainData<'s> {
        SubdomainData {
            grid: sub,
            kappa: self.tangential[sub.id],
            dirichlet_faces: &self.values.dirichlet[sub.id],
            dirichlet_nodes: &self.values.dirichlet_nodes[sub.id],
            neumann_faces: &self.values.neumann[sub.id],
            source: self.sources.get(sub.id).filter(|s| !s.is_empty()).map(Vec::as_slice),
        }
    }
}

pub fn couple<'a>(spec: &ProblemSpec<'a>) -> Result<Coupled<'a>, AssemblyError> {
    let mesh = spec.mesh;
    let roles = classify(mesh, &spec.tangential)?;

    let mut operators = Vec::with_capacity(mesh.subdomains.len());
    for sub in &mesh.subdomains {
        let method = if sub.dim == 0 || roles[sub.id] == Role::Blocking {
            Method::Point
        } else {
            spec.method
        };
        let op = build_operator(&spec.subdomain_data(sub), method)
            .map_err(|source| AssemblyError::Disc { subdomain: sub.id, source })?;
        operators.push(op);
    }

    let interfaces: Vec<MortarInterface> = mesh
        .pairings
        .iter()
        .zip(&spec.kappa_perp)
        .map(|(pairing, &kp)| {
            build_interface(
                mesh,
                pairing,
                operators[pairing.key.lower].volume_kind,
                operators[pairing.key.higher].trace_kind,
                spec.mortar_ratio,
                kp,
            )
        })
        .collect();

    let mut u_offset = Vec::with_capacity(operators.len());
    let mut n_u = 0;
    for op in &operators {
        u_offset.push(n_u);
        n_u += op.n_dofs;
    }
    let mut m_offset = Vec::with_capacity(interfaces.len());
    let mut n_m = 0;
    for itf in &interfaces {
        m_offset.push(n_u + n_m);
        n_m += itf.n_mortar();
    }
    let scatter_t = operators.iter().map(|op| op.volume_scatter.transpose()).collect();

    Ok(Coupled {
        mesh,
        roles,
        operators,
        interfaces,
        u_offset,
        n_u,
        m_offset,
        n_m,
        scatter_t,
    })
}

/// Pressures and interface fluxes of a solved case.
#[derive(Debug, Clone)]
pub struct Solution {
    /// Raw unknowns per subdomain.
    pub u: Vec<Vec<f64>>,
    /// Flux densities per interface.
    pub lambda: Vec<Vec<f64>>,
    /// Recovered cell pressures per subdomain.
    pub pressures: Vec<Vec<f64>>,
}

/// Residual summary of a solution against the assembled equations.
#[derive(Debug, Clone, Copy)]
pub struct Diagnostics {
    /// Largest equation residual over all rows.
    pub residual_max: f64,
    /// Largest residual over the exchange-law rows alone.
    pub interface_residual_max: f64,
    /// Largest flux density magnitude.
    pub lambda_abs_max: f64,
}

impl<'a> Coupled<'a> {
    pub fn n_total(&self) -> usize {
        self.n_u + self.n_m
    }

    /// `G` entries of interface `k` into its lower subdomain:
    /// (local dof, local flux cell, signed value).
    fn g_lower_entries(&self, k: usize) -> Vec<(usize, usize, f64)> {
        let itf = &self.interfaces[k];
        let st = &self.scatter_t[itf.key.lower];
        let mut out = Vec::new();
        for (j, &col) in itf.lower_cols.iter().enumerate() {
            let (dofs, weights) = st.row(col);
            for m in 0..itf.n_mortar() {
                let b = itf.b_lower.get(m, j);
                if b == 0.0 {
                    continue;
                }
                for (&d, &w) in dofs.iter().zip(weights) {
                    out.push((d, m, -w * b));
                }
            }
        }
        out
    }

    /// `G` entries of interface `k` into its higher subdomain; fixed
    /// trace slots contribute nothing here (their data lands in the
    /// exchange-law right-hand side).
    fn g_higher_entries(&self, k: usize) -> Vec<(usize, usize, f64)> {
        let itf = &self.interfaces[k];
        let op = &self.operators[itf.key.higher];
        let mut out = Vec::new();
        for (j, &col) in itf.higher_cols.iter().enumerate() {
            let slot = op.traces[&col];
            let Some(d) = slot.dof else { continue };
            for m in 0..itf.n_mortar() {
                let b = itf.b_higher.get(m, j);
                if b != 0.0 {
                    out.push((d, m, b));
                }
            }
        }
        out
    }

    /// Right-hand side of interface `k`'s exchange-law rows: fixed trace
    /// data on the higher side against fixed volume coefficients on the
    /// lower side.
    fn mortar_rhs(&self, k: usize) -> Vec<f64> {
        let itf = &self.interfaces[k];
        let op_h = &self.operators[itf.key.higher];
        let op_l = &self.operators[itf.key.lower];
        let mut h = vec![0.0; itf.n_mortar()];
        for (j, &col) in itf.higher_cols.iter().enumerate() {
            let slot = op_h.traces[&col];
            if slot.dof.is_none() && slot.offset != 0.0 {
                for (m, hv) in h.iter_mut().enumerate() {
                    *hv -= itf.b_higher.get(m, j) * slot.offset;
                }
            }
        }
        for (j, &col) in itf.lower_cols.iter().enumerate() {
            let off = op_l.volume_offsets[col];
            if off != 0.0 {
                for (m, hv) in h.iter_mut().enumerate() {
                    *hv += itf.b_lower.get(m, j) * off;
                }
            }
        }
        h
    }

    /// Entries of the exchange mass matrix `M` (positive definite side),
    /// in global flux indices: the measure-over-permeability diagonal,
    /// the trace resistances of the higher sides, and the injection
    /// compliances of the lower sides, the latter coupling all interfaces
    /// that share a lower subdomain.
    fn mass_entries(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (k, itf) in self.interfaces.iter().enumerate() {
            let moff = self.m_offset[k];
            for (m, mp) in itf.mass_perp().into_iter().enumerate() {
                out.push((moff + m, moff + m, mp));
            }
            // Higher-side trace resistance: B_h diag(res) B_h^T.
            let op_h = &self.operators[itf.key.higher];
            for (j, &col) in itf.higher_cols.iter().enumerate() {
                let res = op_h.traces[&col].resistance;
                if res == 0.0 {
                    continue;
                }
                for m in 0..itf.n_mortar() {
                    let bm = itf.b_higher.get(m, j);
                    if bm == 0.0 {
                        continue;
                    }
                    for mp in m..itf.n_mortar() {
                        let v = bm * res * itf.b_higher.get(mp, j);
                        if v != 0.0 {
                            out.push((moff + m, moff + mp, v));
                            if mp != m {
                                out.push((moff + mp, moff + m, v));
                            }
                        }
                    }
                }
            }
        }
        // Lower-side injection compliance, stacked over all interfaces of
        // each lower subdomain so opposing fluxes through one cell cancel.
        let mut by_lower: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, itf) in self.interfaces.iter().enumerate() {
            by_lower.entry(itf.key.lower).or_default().push(k);
        }
        for (&low, ks) in &by_lower {
            let op = &self.operators[low];
            if op.lower_compliance.iter().all(|&v| v == 0.0) {
                continue;
            }
            // Per volume column: every (global flux index, overlap) pair.
            let mut touch: BTreeMap<usize, Vec<(usize, f64)>> = BTreeMap::new();
            for &k in ks {
                let itf = &self.interfaces[k];
                for (j, &col) in itf.lower_cols.iter().enumerate() {
                    for m in 0..itf.n_mortar() {
                        let b = itf.b_lower.get(m, j);
                        if b != 0.0 {
                            touch.entry(col).or_default().push((self.m_offset[k] + m, b));
                        }
                    }
                }
            }
            for (&col, pairs) in &touch {
                let c = op.lower_compliance[col];
                if c == 0.0 {
                    continue;
                }
                for (a, &(ma, va)) in pairs.iter().enumerate() {
                    for &(mb, vb) in &pairs[a..] {
                        let v = va * c * vb;
                        out.push((ma, mb, v));
                        if mb != ma {
                            out.push((mb, ma, v));
                        }
                    }
                }
            }
        }
        out
    }

    /// Assembles the full symmetric saddle system and its right-hand side.
    pub fn assemble_global(&self) -> (SparseMatrix, Vec<f64>) {
        let n = self.n_total();
        let mut t = Triplets::new(n, n);
        let mut rhs = vec![0.0; n];

        for (i, op) in self.operators.iter().enumerate() {
            let off = self.u_offset[i];
            for r in 0..op.n_dofs {
                let (cols, vals) = op.a.row(r);
                for (&c, &v) in cols.iter().zip(vals) {
                    t.push(off + r, off + c, v);
                }
                rhs[off + r] = op.rhs_fixed[r];
            }
        }
        for k in 0..self.interfaces.len() {
            let itf = &self.interfaces[k];
            let moff = self.m_offset[k];
            let (lo, hi) = (self.u_offset[itf.key.lower], self.u_offset[itf.key.higher]);
            for (d, m, v) in self.g_lower_entries(k) {
                t.push(lo + d, moff + m, v);
                t.push(moff + m, lo + d, v);
            }
            for (d, m, v) in self.g_higher_entries(k) {
                t.push(hi + d, moff + m, v);
                t.push(moff + m, hi + d, v);
            }
            for (m, hv) in self.mortar_rhs(k).into_iter().enumerate() {
                rhs[moff + m] = hv;
            }
        }
        for (r, c, v) in self.mass_entries() {
            t.push(r, c, -v);
        }
        (t.to_csr(), rhs)
    }

    /// Solves the monolithic system with a sparse factorization.
    pub fn solve_global(&self) -> Result<Solution, AssemblyError> {
        let (mat, rhs) = self.assemble_global();
        let lu = SparseLu::factor(&mat).map_err(AssemblyError::Singular)?;
        let mut x = rhs;
        lu.solve_in_place(&mut x);
        Ok(self.split_solution(&x))
    }

    /// Interface elimination onto the flux unknowns.
    pub fn schur(&self) -> Result<SchurSystem, AssemblyError> {
        schur::build(self)
    }

    /// Solves through the interface complement and reconstructs the
    /// subdomain pressures.
    pub fn solve_schur(&self) -> Result<Solution, AssemblyError> {
        schur::solve(self)
    }

    /// Splits a flat unknown vector and recovers cell pressures.
    pub(crate) fn split_solution(&self, x: &[f64]) -> Solution {
        let u: Vec<Vec<f64>> = self
            .operators
            .iter()
            .enumerate()
            .map(|(i, op)| x[self.u_offset[i]..self.u_offset[i] + op.n_dofs].to_vec())
            .collect();
        let lambda: Vec<Vec<f64>> = self
            .interfaces
            .iter()
            .enumerate()
            .map(|(k, itf)| x[self.m_offset[k]..self.m_offset[k] + itf.n_mortar()].to_vec())
            .collect();
        self.package_solution(u, lambda)
    }

    pub(crate) fn package_solution(&self, u: Vec<Vec<f64>>, lambda: Vec<Vec<f64>>) -> Solution {
        let (injected, _) = self.exchange_loads(&lambda);
        let pressures = self
            .operators
            .iter()
            .enumerate()
            .map(|(i, op)| op.cell_pressures(&self.mesh.subdomains[i], &u[i], &injected[i]))
            .collect();
        Solution { u, lambda, pressures }
    }

    /// Integrated interface loads of a flux vector: inflow into each
    /// volume column of the lower sides, outflow through each trace face
    /// of the higher sides (only for sides with per-face traces).
    pub fn exchange_loads(&self, lambda: &[Vec<f64>]) -> (Vec<Vec<f64>>, Vec<BTreeMap<usize, f64>>) {
        let mut injected: Vec<Vec<f64>> =
            self.operators.iter().map(|op| vec![0.0; op.n_volume_cols()]).collect();
        let mut theta: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); self.operators.len()];
        for (k, itf) in self.interfaces.iter().enumerate() {
            let inj = &mut injected[itf.key.lower];
            for (j, &col) in itf.lower_cols.iter().enumerate() {
                for m in 0..itf.n_mortar() {
                    inj[col] += itf.b_lower.get(m, j) * lambda[k][m];
                }
            }
            if self.operators[itf.key.higher].trace_kind == InterfaceBasis::P0 {
                let th = &mut theta[itf.key.higher];
                for (j, &col) in itf.higher_cols.iter().enumerate() {
                    for m in 0..itf.n_mortar() {
                        let b = itf.b_higher.get(m, j);
                        if b != 0.0 {
                            *th.entry(col).or_insert(0.0) += b * lambda[k][m];
                        }
                    }
                }
            }
        }
        (injected, theta)
    }

    /// Net integrated interface inflow per subdomain: what the exchanges
    /// push into each lower side minus what they draw from each higher
    /// side. For a solved case this matches each subdomain's sink total
    /// minus its exterior outflow.
    pub fn net_exchange(&self, lambda: &[Vec<f64>]) -> Vec<f64> {
        let mut net = vec![0.0; self.operators.len()];
        for (k, itf) in self.interfaces.iter().enumerate() {
            for m in 0..itf.n_mortar() {
                let lam = lambda[k][m];
                if lam == 0.0 {
                    continue;
                }
                let bl: f64 = (0..itf.lower_cols.len()).map(|j| itf.b_lower.get(m, j)).sum();
                let bh: f64 = (0..itf.higher_cols.len()).map(|j| itf.b_higher.get(m, j)).sum();
                net[itf.key.lower] += lam * bl;
                net[itf.key.higher] -= lam * bh;
            }
        }
        net
    }

    /// Recomputed conservation audits per subdomain; nodal methods yield
    /// None. `spec` must be the problem this coupling was built from.
    pub fn flux_audits(
        &self,
        spec: &ProblemSpec<'_>,
        sol: &Solution,
    ) -> Result<Vec<Option<FluxAudit>>, AssemblyError> {
        let (injected, theta) = self.exchange_loads(&sol.lambda);
        self.mesh
            .subdomains
            .iter()
            .map(|sub| {
                let i = sub.id;
                flux_audit(
                    &spec.subdomain_data(sub),
                    &self.operators[i],
                    &sol.u[i],
                    &injected[i],
                    &theta[i],
                )
                .map_err(|source| AssemblyError::Disc { subdomain: i, source })
            })
            .collect()
    }

    /// Equation residuals of a solution, for reporting and as the cheap
    /// agreement check between the two solve paths.
    pub fn diagnostics(&self, sol: &Solution) -> Diagnostics {
        let (mat, rhs) = self.assemble_global();
        let mut x = vec![0.0; self.n_total()];
        for (i, ui) in sol.u.iter().enumerate() {
            x[self.u_offset[i]..self.u_offset[i] + ui.len()].copy_from_slice(ui);
        }
        for (k, lk) in sol.lambda.iter().enumerate() {
            x[self.m_offset[k]..self.m_offset[k] + lk.len()].copy_from_slice(lk);
        }
        let ax = mat.matvec(&x);
        let mut residual_max = 0.0f64;
        let mut interface_residual_max = 0.0f64;
        for (r, (a, b)) in ax.iter().zip(&rhs).enumerate() {
            let res = (a - b).abs();
            residual_max = residual_max.max(res);
            if r >= self.n_u {
                interface_residual_max = interface_residual_max.max(res);
            }
        }
        let lambda_abs_max = sol
            .lambda
            .iter()
            .flat_map(|l| l.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()));
        Diagnostics { residual_max, interface_residual_max, lambda_abs_max }
    }
}
