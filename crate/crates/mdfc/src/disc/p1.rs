//! Continuous piecewise-linear elements on simplices.
//!
//! Unknowns are nodal pressures; Dirichlet nodes are eliminated
//! symmetrically with their couplings folded into the load vector. The
//! trace on an interface is the nodal restriction itself, so no flux
//! correction is needed, and transversal sinks enter as nodal loads
//! weighted by the hat functions.

use std::collections::BTreeMap;

use crate::linalg::Triplets;
use crate::mesh::FaceTag;
use crate::mortar::InterfaceBasis;

use super::{DiscError, LocalOperator, Method, Recovery, ReducedSystem, SubdomainData, TraceSlot};

pub(super) fn build(data: &SubdomainData<'_>) -> Result<LocalOperator, DiscError> {
    let grid = data.grid;
    let simplex = if grid.dim == 2 { 3 } else { 2 };
    if grid.dim == 0 {
        return Err(DiscError::UnsupportedCellShape { method: "p1", shape: 1, dim: 0 });
    }
    for cell in &grid.cells {
        if cell.len() != simplex {
            return Err(DiscError::UnsupportedCellShape {
                method: "p1",
                shape: cell.len(),
                dim: grid.dim,
            });
        }
    }

    let n_nodes = grid.nodes.len();
    let mut sys = ReducedSystem::new(n_nodes, data.dirichlet_nodes);

    for (ci, cell) in grid.cells.iter().enumerate() {
        let vol = grid.cell_volumes[ci];
        if grid.dim == 2 {
            // Gradient of the hat at vertex i on a counter-clockwise
            // triangle: perp of the opposite edge over twice the area.
            let p: Vec<[f64; 2]> = cell.iter().map(|&n| grid.nodes[n]).collect();
            let mut g = [[0.0f64; 2]; 3];
            for i in 0..3 {
                let (j, k) = ((i + 1) % 3, (i + 2) % 3);
                g[i] = [(p[j][1] - p[k][1]) / (2.0 * vol), (p[k][0] - p[j][0]) / (2.0 * vol)];
            }
            for i in 0..3 {
                for j in 0..3 {
                    let k = data.kappa * vol * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
                    sys.add(cell[i], cell[j], k);
                }
            }
        } else {
            let k = data.kappa / vol;
            sys.add(cell[0], cell[0], k);
            sys.add(cell[1], cell[1], k);
            sys.add(cell[0], cell[1], -k);
            sys.add(cell[1], cell[0], -k);
        }
        if let Some(src) = data.source {
            let load = -src[ci] * vol / simplex as f64;
            for &node in cell {
                sys.add_rhs(node, load);
            }
        }
    }

    let mut traces = BTreeMap::new();
    for (fi, face) in grid.faces.iter().enumerate() {
        match face.tag {
            FaceTag::NeumannExterior => {
                if let Some(&g) = data.neumann_faces.get(&fi) {
                    let load = -g * face.area / face.nodes.len() as f64;
                    for &node in &face.nodes {
                        sys.add_rhs(node, load);
                    }
                }
            }
            FaceTag::Interface { .. } => {
                for &node in &face.nodes {
                    traces.entry(node).or_insert(TraceSlot { dof: None, offset: 0.0, resistance: 0.0 });
                }
            }
            _ => {}
        }
    }

    let (map, a, rhs_fixed) = sys.finish();
    let n_dofs = a.n_rows();
    for (node, slot) in traces.iter_mut() {
        match map.dof(*node) {
            Some(d) => slot.dof = Some(d),
            None => slot.offset = map.fixed_value(*node),
        }
    }

    let mut scatter = Triplets::new(n_dofs, n_nodes);
    let mut volume_offsets = vec![0.0; n_nodes];
    let mut dof_of_node = vec![None; n_nodes];
    for node in 0..n_nodes {
        match map.dof(node) {
            Some(d) => {
                scatter.push(d, node, 1.0);
                dof_of_node[node] = Some(d);
            }
            None => volume_offsets[node] = map.fixed_value(node),
        }
    }
    // Lumped hat masses of the free nodes fix the mean on unanchored grids.
    let mut null_weights = vec![0.0; n_dofs];
    for (ci, cell) in grid.cells.iter().enumerate() {
        let w = grid.cell_volumes[ci] / simplex as f64;
        for &node in cell {
            if let Some(d) = map.dof(node) {
                null_weights[d] += w;
            }
        }
    }

    Ok(LocalOperator {
        method: Method::P1,
        n_dofs,
        a,
        rhs_fixed,
        anchored: n_dofs < n_nodes,
        trace_kind: InterfaceBasis::P1,
        volume_kind: InterfaceBasis::P1,
        traces,
        volume_scatter: scatter.to_csr(),
        volume_offsets,
        lower_compliance: vec![0.0; n_nodes],
        null_weights,
        recovery: Recovery::Nodes { dof: dof_of_node },
    })
}
