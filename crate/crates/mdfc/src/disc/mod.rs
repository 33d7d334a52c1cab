//! Subdomain discretizations.
//!
//! Every subdomain contributes a symmetric local system `A u = rhs_fixed +
//! injections` plus three views the coupling layer composes against the
//! interface flux grids:
//!
//! - a volume scatter that spreads an integrated sink per volume basis
//!   function (cell or node) onto the unknowns,
//! - trace slots describing the subdomain's pressure on interface faces or
//!   nodes as an affine function of the unknowns, with an optional flux
//!   resistance per slot (two-point operators recover the face pressure
//!   from the cell value and the flux through the half cell),
//! - cell-pressure recovery for output.
//!
//! All four operators share one convention: unknown coefficient 1 on every
//! slot represents unit pressure, so the constant vector spans the kernel
//! of an unanchored operator regardless of the method.

mod p1;
mod point;
mod rt0h;
mod tpfa;

use std::collections::BTreeMap;

use thiserror::Error;

use crate::linalg::{LinalgError, SparseLu, SparseMatrix, Triplets};
use crate::mesh::SubdomainGrid;
use crate::mortar::InterfaceBasis;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    /// Two-point flux finite volumes, one pressure per cell.
    Tpfa,
    /// Continuous piecewise-linear elements on simplices.
    P1,
    /// Hybridized lowest-order Raviart-Thomas, condensed to one pressure
    /// multiplier per face.
    Rt0h,
    /// One pressure per cell with no internal flow; used for point
    /// subdomains and for branches with zero tangential permeability.
    Point,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Tpfa => "tpfa",
            Method::P1 => "p1",
            Method::Rt0h => "rt0h",
            Method::Point => "point",
        }
    }

    pub fn parse_name(s: &str) -> Option<Method> {
        match s {
            "tpfa" => Some(Method::Tpfa),
            "p1" => Some(Method::P1),
            "rt0h" => Some(Method::Rt0h),
            "point" => Some(Method::Point),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum DiscError {
    #[error("{method} does not support {shape}-node cells in {dim}d")]
    UnsupportedCellShape { method: &'static str, shape: usize, dim: u8 },
    #[error("boundary and source data on an unanchored subdomain are out of balance by {imbalance:.3e}")]
    IncompatibleData { imbalance: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Everything a discretization needs to know about one subdomain.
pub struct SubdomainData<'a> {
    pub grid: &'a SubdomainGrid,
    /// Tangential conductivity; ignored by `Point`.
    pub kappa: f64,
    /// Prescribed pressure per Dirichlet face.
    pub dirichlet_faces: &'a BTreeMap<usize, f64>,
    /// Prescribed pressure per node of Dirichlet faces (nodal methods).
    pub dirichlet_nodes: &'a BTreeMap<usize, f64>,
    /// Prescribed outward flux density per Neumann face.
    pub neumann_faces: &'a BTreeMap<usize, f64>,
    /// Source density per cell, if any.
    pub source: Option<&'a [f64]>,
}

/// Pressure on one interface slot as an affine function of the unknowns:
/// `trace = u[dof] + offset - resistance * flux_into_slot`. Eliminated
/// slots carry their fixed value in `offset` with no unknown.
#[derive(Debug, Clone, Copy)]
pub struct TraceSlot {
    pub dof: Option<usize>,
    pub offset: f64,
    pub resistance: f64,
}

/// How per-cell pressures are recovered from the unknowns.
#[derive(Debug, Clone)]
enum Recovery {
    /// Unknowns are the cell pressures.
    Cells,
    /// Average the nodal values (with offsets for eliminated nodes).
    Nodes { dof: Vec<Option<usize>> },
    /// Condensed elements: p = (gather(u) + injected - source) / s.
    Elements {
        /// Per cell: (dof, weight) terms of the multiplier gather.
        gather: Vec<Vec<(usize, f64)>>,
        /// Per cell: constant part (eliminated multipliers, source).
        offset: Vec<f64>,
        inv_s: Vec<f64>,
    },
}

/// One subdomain's discrete operator in reduced (post-elimination) form.
pub struct LocalOperator {
    pub method: Method,
    pub n_dofs: usize,
    /// Symmetric positive semi-definite stiffness.
    pub a: SparseMatrix,
    /// Loads from Dirichlet lifts, Neumann data and sources.
    pub rhs_fixed: Vec<f64>,
    /// Whether any Dirichlet data anchors the operator.
    pub anchored: bool,
    /// What trace slot keys refer to: faces (P0) or nodes (P1).
    pub trace_kind: InterfaceBasis,
    /// What volume columns refer to: cells (P0) or nodes (P1).
    pub volume_kind: InterfaceBasis,
    /// Slot key (face or node id) to affine trace description, for every
    /// interface-tagged face of the grid.
    pub traces: BTreeMap<usize, TraceSlot>,
    /// n_dofs x n_volume_columns: column k spreads an integrated sink in
    /// volume basis k onto the unknowns.
    pub volume_scatter: SparseMatrix,
    /// Constant part of the volume-basis pressure coefficients
    /// (eliminated nodes, condensed source terms).
    pub volume_offsets: Vec<f64>,
    /// Per volume column: pressure rise per unit injected flux that stays
    /// local to the column (condensed elements only, else zero).
    pub lower_compliance: Vec<f64>,
    /// Volume weights making `w . u` the pressure integral; used to fix
    /// the mean on unanchored solves.
    pub null_weights: Vec<f64>,
    recovery: Recovery,
}

impl LocalOperator {
    pub fn n_volume_cols(&self) -> usize {
        self.volume_scatter.n_cols()
    }

    /// Per-cell pressures given the solution and the integrated flux
    /// injected into each volume column (condensed elements fold the
    /// injection into their cell pressure).
    pub fn cell_pressures(&self, grid: &SubdomainGrid, u: &[f64], injected: &[f64]) -> Vec<f64> {
        match &self.recovery {
            Recovery::Cells => u.to_vec(),
            Recovery::Nodes { .. } => {
                let nodal = self.nodal_values(grid, u);
                grid.cells
                    .iter()
                    .map(|cell| cell.iter().map(|&n| nodal[n]).sum::<f64>() / cell.len() as f64)
                    .collect()
            }
            Recovery::Elements { gather, offset, inv_s } => (0..grid.cells.len())
                .map(|e| {
                    let g: f64 = gather[e].iter().map(|&(d, w)| w * u[d]).sum();
                    (g + injected[e]) * inv_s[e] + offset[e]
                })
                .collect(),
        }
    }

    /// Nodal pressure values for nodal methods (offsets restored).
    pub fn nodal_values(&self, grid: &SubdomainGrid, u: &[f64]) -> Vec<f64> {
        let Recovery::Nodes { dof } = &self.recovery else {
            panic!("nodal values requested from a non-nodal operator");
        };
        (0..grid.nodes.len())
            .map(|n| match dof[n] {
                Some(d) => u[d],
                None => self.volume_offsets[n],
            })
            .collect()
    }

    /// Factors the local system; unanchored operators are bordered with
    /// the volume weights so the solve picks the zero-weighted-mean
    /// representative.
    pub fn factor(&self) -> Result<LocalSolver, DiscError> {
        let n = self.n_dofs;
        if self.anchored {
            let lu = SparseLu::factor(&self.a)?;
            return Ok(LocalSolver { lu, n, augmented: false });
        }
        let mut t = Triplets::new(n + 1, n + 1);
        for r in 0..n {
            let (cols, vals) = self.a.row(r);
            for (&c, &v) in cols.iter().zip(vals) {
                t.push(r, c, v);
            }
            t.push(r, n, self.null_weights[r]);
            t.push(n, r, self.null_weights[r]);
        }
        let lu = SparseLu::factor(&t.to_csr())?;
        Ok(LocalSolver { lu, n, augmented: true })
    }
}

/// Factored local operator. The relaxed solve projects incompatible data
/// onto the solvable part, which is what interface elimination needs; the
/// strict solve reports the incompatibility instead.
pub struct LocalSolver {
    lu: SparseLu,
    n: usize,
    augmented: bool,
}

impl LocalSolver {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        if !self.augmented {
            let mut x = rhs.to_vec();
            self.lu.solve_in_place(&mut x);
            return x;
        }
        let mut x = Vec::with_capacity(self.n + 1);
        x.extend_from_slice(rhs);
        x.push(0.0);
        self.lu.solve_in_place(&mut x);
        x.truncate(self.n);
        x
    }

    /// Like `solve`, but fails when the data violates the compatibility
    /// condition of an unanchored subdomain instead of absorbing it.
    pub fn solve_strict(&self, rhs: &[f64], tol: f64) -> Result<Vec<f64>, DiscError> {
        if !self.augmented {
            return Ok(self.solve(rhs));
        }
        let mut x = Vec::with_capacity(self.n + 1);
        x.extend_from_slice(rhs);
        x.push(0.0);
        self.lu.solve_in_place(&mut x);
        let multiplier = x[self.n];
        let scale = rhs.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
        if multiplier.abs() > tol * scale {
            return Err(DiscError::IncompatibleData { imbalance: multiplier });
        }
        x.truncate(self.n);
        Ok(x)
    }
}

/// Builds the discrete operator for one subdomain.
pub fn build_operator(data: &SubdomainData<'_>, method: Method) -> Result<LocalOperator, DiscError> {
    match method {
        Method::Tpfa => tpfa::build(data),
        Method::P1 => p1::build(data),
        Method::Rt0h => rt0h::build(data),
        Method::Point => Ok(point::build(data)),
    }
}

/// Conservation data recomputed from a solved subdomain, independent of
/// the assembled system.
#[derive(Debug, Clone)]
pub struct FluxAudit {
    /// Per-cell balance residual: outward fluxes plus the integrated
    /// sink minus the transversal injection.
    pub cell_balance: Vec<f64>,
    /// Outward integrated flux through each exterior face, by face index.
    pub exterior: BTreeMap<usize, f64>,
    /// Largest flux mismatch across a face. Methods with a single flux
    /// per face report zero; the hybridized method reconstructs one flux
    /// per side and checks the sides against each other and against the
    /// interface loads.
    pub continuity_max: f64,
}

/// Recomputes fluxes from a solved subdomain and audits conservation.
/// `injected` is the integrated transversal inflow per volume column and
/// `theta` the integrated outflow per interface face. Nodal
/// discretizations have no locally conservative flux and return None.
pub fn flux_audit(
    data: &SubdomainData<'_>,
    op: &LocalOperator,
    u: &[f64],
    injected: &[f64],
    theta: &BTreeMap<usize, f64>,
) -> Result<Option<FluxAudit>, DiscError> {
    match op.method {
        Method::Tpfa => Ok(Some(tpfa::audit(data, u, injected, theta))),
        Method::P1 => Ok(None),
        Method::Rt0h => rt0h::audit(data, u, injected, theta).map(Some),
        Method::Point => Ok(Some(point::audit(data, injected, theta))),
    }
}

/// Map from candidate unknown slots to reduced DOF numbers, with fixed
/// slots carrying their prescribed value.
pub(super) struct DofMap {
    dof: Vec<Option<usize>>,
    fixed: Vec<f64>,
    n_dofs: usize,
}

impl DofMap {
    fn new(n_slots: usize, fixed_slots: &BTreeMap<usize, f64>) -> Self {
        let mut dof = vec![None; n_slots];
        let mut fixed = vec![0.0; n_slots];
        let mut n_dofs = 0;
        for (k, d) in dof.iter_mut().enumerate() {
            if let Some(&v) = fixed_slots.get(&k) {
                fixed[k] = v;
            } else {
                *d = Some(n_dofs);
                n_dofs += 1;
            }
        }
        Self { dof, fixed, n_dofs }
    }

    fn dof(&self, slot: usize) -> Option<usize> {
        self.dof[slot]
    }

    fn fixed_value(&self, slot: usize) -> f64 {
        self.fixed[slot]
    }
}

/// Symmetric accumulator that folds couplings to fixed slots into the
/// right-hand side (standard symmetric Dirichlet elimination).
pub(super) struct ReducedSystem {
    map: DofMap,
    triplets: Triplets,
    rhs: Vec<f64>,
}

impl ReducedSystem {
    fn new(n_slots: usize, fixed_slots: &BTreeMap<usize, f64>) -> Self {
        let map = DofMap::new(n_slots, fixed_slots);
        let n = map.n_dofs;
        Self { map, triplets: Triplets::new(n, n), rhs: vec![0.0; n] }
    }

    fn add(&mut self, slot_i: usize, slot_j: usize, v: f64) {
        match (self.map.dof(slot_i), self.map.dof(slot_j)) {
            (Some(i), Some(j)) => self.triplets.push(i, j, v),
            (Some(i), None) => self.rhs[i] -= v * self.map.fixed_value(slot_j),
            _ => {}
        }
    }

    fn add_rhs(&mut self, slot: usize, v: f64) {
        if let Some(i) = self.map.dof(slot) {
            self.rhs[i] += v;
        }
    }

    fn finish(self) -> (DofMap, SparseMatrix, Vec<f64>) {
        (self.map, self.triplets.to_csr(), self.rhs)
    }
}
