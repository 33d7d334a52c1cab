//! Pressure-only cells without internal flow.
//!
//! Point subdomains and branches with zero tangential permeability keep
//! one pressure unknown per cell and no stiffness; each pressure is
//! determined entirely by the transversal exchange laws it appears in.
//! Exterior data on such a subdomain is unreachable by any flux path and
//! is ignored.

use std::collections::BTreeMap;

use crate::linalg::{SparseMatrix, Triplets};
use crate::mesh::FaceTag;
use crate::mortar::InterfaceBasis;

use super::{FluxAudit, LocalOperator, Method, Recovery, SubdomainData, TraceSlot};

pub(super) fn build(data: &SubdomainData<'_>) -> LocalOperator {
    let grid = data.grid;
    let n = grid.n_cells();
    let mut rhs_fixed = vec![0.0; n];
    if let Some(src) = data.source {
        for (c, &psi) in src.iter().enumerate() {
            rhs_fixed[c] -= psi * grid.cell_volumes[c];
        }
    }
    let mut traces = BTreeMap::new();
    for (fi, face) in grid.faces.iter().enumerate() {
        if matches!(face.tag, FaceTag::Interface { .. }) {
            traces.insert(
                fi,
                TraceSlot { dof: Some(face.cells.0), offset: 0.0, resistance: 0.0 },
            );
        }
    }
    let mut scatter = Triplets::new(n, n);
    for c in 0..n {
        scatter.push(c, c, 1.0);
    }
    LocalOperator {
        method: Method::Point,
        n_dofs: n,
        a: SparseMatrix::zeros(n, n),
        rhs_fixed,
        anchored: false,
        trace_kind: InterfaceBasis::P0,
        volume_kind: InterfaceBasis::P0,
        traces,
        volume_scatter: scatter.to_csr(),
        volume_offsets: vec![0.0; n],
        lower_compliance: vec![0.0; n],
        null_weights: grid.cell_volumes.clone(),
        recovery: Recovery::Cells,
    }
}

/// Conservation audit for cells without internal flow: only the
/// transversal exchanges and the sink balance each cell, and nothing
/// crosses an exterior face.
pub(super) fn audit(
    data: &SubdomainData<'_>,
    injected: &[f64],
    theta: &BTreeMap<usize, f64>,
) -> FluxAudit {
    let grid = data.grid;
    let mut cell_balance = vec![0.0; grid.n_cells()];
    let mut exterior = BTreeMap::new();
    for (fi, face) in grid.faces.iter().enumerate() {
        match face.tag {
            FaceTag::Interface { .. } => {
                cell_balance[face.cells.0] += theta.get(&fi).copied().unwrap_or(0.0);
            }
            FaceTag::Dirichlet | FaceTag::NeumannExterior => {
                exterior.insert(fi, 0.0);
            }
            FaceTag::Interior => {}
        }
    }
    if let Some(src) = data.source {
        for (c, &psi) in src.iter().enumerate() {
            cell_balance[c] += psi * grid.cell_volumes[c];
        }
    }
    for (b, &inj) in cell_balance.iter_mut().zip(injected) {
        *b -= inj;
    }
    FluxAudit { cell_balance, exterior, continuity_max: 0.0 }
}
