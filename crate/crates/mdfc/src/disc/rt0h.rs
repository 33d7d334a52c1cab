//! Hybridized lowest-order Raviart-Thomas elements, condensed onto the
//! face pressure multipliers.
//!
//! Per element, fluxes and the element pressure are eliminated exactly:
//! with `M` the element flux mass matrix, `w = M^-1 1 / s` and
//! `s = 1^T M^-1 1`, the element contributes `H = M^-1 - M^-1 1 1^T M^-1 / s`
//! to the multiplier system, spreads an integrated source through `w`,
//! and recovers its pressure as `p = (1^T M^-1 t + Q) / s`. The multiplier
//! itself is the interface trace, so couplings need no flux correction on
//! this side; instead a sink injected into an element raises its recovered
//! pressure by `1/s`, which the coupling layer adds to the exchange law.

use std::collections::BTreeMap;

use crate::linalg::{DenseLu, DenseMatrix, Triplets};
use crate::mesh::{FaceTag, SubdomainGrid};
use crate::mortar::InterfaceBasis;

use super::{
    DiscError, DofMap, FluxAudit, LocalOperator, Method, Recovery, ReducedSystem, SubdomainData,
    TraceSlot,
};

/// Flux mass matrix of one element in the face ordering given by `faces`.
fn element_mass(
    grid_nodes: &[[f64; 2]],
    cell: &[usize],
    vol: f64,
    kappa: f64,
    dim: u8,
) -> DenseMatrix {
    if dim == 1 {
        let l = vol;
        DenseMatrix::from_rows(&[
            vec![l / (3.0 * kappa), -l / (6.0 * kappa)],
            vec![-l / (6.0 * kappa), l / (3.0 * kappa)],
        ])
    } else {
        // Basis for face i (edge opposite vertex P_i): (x - P_i) / (2|K|).
        // Edge midpoint quadrature integrates the quadratic products
        // exactly.
        let p: Vec<[f64; 2]> = cell.iter().map(|&n| grid_nodes[n]).collect();
        let mids = [
            [(p[0][0] + p[1][0]) / 2.0, (p[0][1] + p[1][1]) / 2.0],
            [(p[1][0] + p[2][0]) / 2.0, (p[1][1] + p[2][1]) / 2.0],
            [(p[2][0] + p[0][0]) / 2.0, (p[2][1] + p[0][1]) / 2.0],
        ];
        // Face k = edge (k, k+1), opposite vertex k+2.
        let opp = |k: usize| p[(k + 2) % 3];
        let mut m = DenseMatrix::zeros(3, 3);
        for i in 0..3 {
            for j in 0..3 {
                let mut acc = 0.0;
                for mid in &mids {
                    let si = [(mid[0] - opp(i)[0]) / (2.0 * vol), (mid[1] - opp(i)[1]) / (2.0 * vol)];
                    let sj = [(mid[0] - opp(j)[0]) / (2.0 * vol), (mid[1] - opp(j)[1]) / (2.0 * vol)];
                    acc += si[0] * sj[0] + si[1] * sj[1];
                }
                m.set(i, j, acc * vol / (3.0 * kappa));
            }
        }
        m
    }
}

/// Face slot of each cell side, in the side order the element matrices
/// use. Split interface faces can share a node pair, so the adjacent
/// cell is part of the lookup key.
fn side_faces(grid: &SubdomainGrid) -> Vec<Vec<usize>> {
    let simplex = if grid.dim == 2 { 3 } else { 2 };
    let mut face_of: BTreeMap<(usize, (usize, usize)), usize> = BTreeMap::new();
    for (fi, face) in grid.faces.iter().enumerate() {
        let key = if grid.dim == 2 {
            let (a, b) = (face.nodes[0], face.nodes[1]);
            (a.min(b), a.max(b))
        } else {
            (face.nodes[0], face.nodes[0])
        };
        face_of.insert((face.cells.0, key), fi);
        if let Some(c1) = face.cells.1 {
            face_of.insert((c1, key), fi);
        }
    }
    grid.cells
        .iter()
        .enumerate()
        .map(|(ci, cell)| {
            (0..simplex)
                .map(|k| {
                    let key = if grid.dim == 2 {
                        let (a, b) = (cell[k], cell[(k + 1) % 3]);
                        (a.min(b), a.max(b))
                    } else {
                        (cell[k], cell[k])
                    };
                    *face_of.get(&(ci, key)).expect("every cell side is a face")
                })
                .collect()
        })
        .collect()
}

/// Symmetrized inverse of the element mass matrix along with its row
/// sums and their total. Column solves of a symmetric matrix round
/// asymmetrically; averaging restores exact symmetry before anything
/// derives from the inverse.
fn element_inverse(
    grid_nodes: &[[f64; 2]],
    cell: &[usize],
    vol: f64,
    kappa: f64,
    dim: u8,
) -> Result<(DenseMatrix, Vec<f64>, f64), DiscError> {
    let simplex = cell.len();
    let m = element_mass(grid_nodes, cell, vol, kappa, dim);
    let lu = DenseLu::factor(&m).map_err(DiscError::Linalg)?;
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(simplex);
    for j in 0..simplex {
        let mut e = vec![0.0; simplex];
        e[j] = 1.0;
        cols.push(lu.solve(&e));
    }
    let mut minv = DenseMatrix::zeros(simplex, simplex);
    for i in 0..simplex {
        for j in 0..simplex {
            minv.set(i, j, 0.5 * (cols[j][i] + cols[i][j]));
        }
    }
    let minv_one: Vec<f64> =
        (0..simplex).map(|i| (0..simplex).map(|j| minv.get(i, j)).sum()).collect();
    let s = minv_one.iter().sum();
    Ok((minv, minv_one, s))
}

pub(super) fn build(data: &SubdomainData<'_>) -> Result<LocalOperator, DiscError> {
    let grid = data.grid;
    let simplex = if grid.dim == 2 { 3 } else { 2 };
    if grid.dim == 0 {
        return Err(DiscError::UnsupportedCellShape { method: "rt0h", shape: 1, dim: 0 });
    }
    for cell in &grid.cells {
        if cell.len() != simplex {
            return Err(DiscError::UnsupportedCellShape {
                method: "rt0h",
                shape: cell.len(),
                dim: grid.dim,
            });
        }
    }

    let n_faces = grid.faces.len();
    let n_cells = grid.n_cells();
    let side = side_faces(grid);

    let fixed: BTreeMap<usize, f64> = grid
        .faces
        .iter()
        .enumerate()
        .filter(|(_, f)| f.tag == FaceTag::Dirichlet)
        .map(|(fi, _)| (fi, data.dirichlet_faces.get(&fi).copied().unwrap_or(0.0)))
        .collect();
    let mut sys = ReducedSystem::new(n_faces, &fixed);

    let mut gather: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_cells];
    let mut offsets = vec![0.0; n_cells];
    let mut inv_s = vec![0.0; n_cells];
    let mut scatter_raw: Vec<(usize, usize, f64)> = Vec::new();
    let mut null_raw: Vec<(usize, f64)> = Vec::new();

    for (ci, cell) in grid.cells.iter().enumerate() {
        let vol = grid.cell_volumes[ci];
        let faces = &side[ci];
        let (minv, minv_one, s) = element_inverse(&grid.nodes, cell, vol, data.kappa, grid.dim)?;
        inv_s[ci] = 1.0 / s;

        for i in 0..simplex {
            for j in 0..simplex {
                let h = minv.get(i, j) - minv_one[i] * minv_one[j] / s;
                sys.add(faces[i], faces[j], h);
            }
        }
        let psi = data.source.map_or(0.0, |src| src[ci] * vol);
        for (k, &fslot) in faces.iter().enumerate() {
            let w = minv_one[k] / s;
            // Source spreads through w; sys.add_rhs drops fixed slots.
            sys.add_rhs(fslot, -w * psi);
            scatter_raw.push((fslot, ci, w));
            null_raw.push((fslot, vol * w));
        }
        // Pressure recovery: free multipliers gather, fixed ones and the
        // source fold into the constant part.
        for (k, &fslot) in faces.iter().enumerate() {
            if fixed.contains_key(&fslot) {
                offsets[ci] += minv_one[k] * fixed[&fslot] / s;
            } else {
                gather[ci].push((fslot, minv_one[k]));
            }
        }
        offsets[ci] -= psi / s;
    }

    let (map, a, rhs_fixed) = sys.finish();
    let n_dofs = a.n_rows();
    let mut rhs_fixed = rhs_fixed;

    for (fi, face) in grid.faces.iter().enumerate() {
        if face.tag == FaceTag::NeumannExterior {
            if let Some(&g) = data.neumann_faces.get(&fi) {
                if let Some(d) = map.dof(fi) {
                    rhs_fixed[d] -= g * face.area;
                }
            }
        }
    }

    let mut traces = BTreeMap::new();
    for (fi, face) in grid.faces.iter().enumerate() {
        if matches!(face.tag, FaceTag::Interface { .. }) {
            let d = map.dof(fi).expect("interface faces are never eliminated");
            traces.insert(fi, TraceSlot { dof: Some(d), offset: 0.0, resistance: 0.0 });
        }
    }

    let mut scatter = Triplets::new(n_dofs, n_cells);
    for &(fslot, ci, w) in &scatter_raw {
        if let Some(d) = map.dof(fslot) {
            scatter.push(d, ci, w);
        }
    }
    let mut null_weights = vec![0.0; n_dofs];
    for &(fslot, w) in &null_raw {
        if let Some(d) = map.dof(fslot) {
            null_weights[d] += w;
        }
    }
    // Rewrite the recovery gather in reduced numbering.
    let gather = gather
        .into_iter()
        .map(|terms| {
            terms
                .into_iter()
                .map(|(fslot, w)| (map.dof(fslot).expect("fixed slots were filtered"), w))
                .collect()
        })
        .collect();

    Ok(LocalOperator {
        method: Method::Rt0h,
        n_dofs,
        a,
        rhs_fixed,
        anchored: n_dofs < n_faces,
        trace_kind: InterfaceBasis::P0,
        volume_kind: InterfaceBasis::P0,
        traces,
        volume_scatter: scatter.to_csr(),
        volume_offsets: offsets.clone(),
        lower_compliance: inv_s.clone(),
        null_weights,
        recovery: Recovery::Elements { gather, offset: offsets, inv_s },
    })
}

/// Reconstructs the element fluxes `q = M^-1 (p 1 - t)` from a solved
/// multiplier vector and audits them: per-element balance, flux
/// continuity across shared and interface faces, and the outward flux
/// through every exterior face.
pub(super) fn audit(
    data: &SubdomainData<'_>,
    u: &[f64],
    injected: &[f64],
    theta: &BTreeMap<usize, f64>,
) -> Result<FluxAudit, DiscError> {
    let grid = data.grid;
    let fixed: BTreeMap<usize, f64> = grid
        .faces
        .iter()
        .enumerate()
        .filter(|(_, f)| f.tag == FaceTag::Dirichlet)
        .map(|(fi, _)| (fi, data.dirichlet_faces.get(&fi).copied().unwrap_or(0.0)))
        .collect();
    let map = DofMap::new(grid.faces.len(), &fixed);
    let side = side_faces(grid);

    let mut cell_balance = vec![0.0; grid.n_cells()];
    // Outward flux per face from each adjacent cell: [from cells.0, from cells.1].
    let mut face_flux: Vec<[f64; 2]> = vec![[0.0; 2]; grid.faces.len()];
    for (ci, cell) in grid.cells.iter().enumerate() {
        let vol = grid.cell_volumes[ci];
        let (minv, minv_one, s) = element_inverse(&grid.nodes, cell, vol, data.kappa, grid.dim)?;
        let t: Vec<f64> = side[ci]
            .iter()
            .map(|&fi| match map.dof(fi) {
                Some(d) => u[d],
                None => map.fixed_value(fi),
            })
            .collect();
        let psi = data.source.map_or(0.0, |src| src[ci] * vol);
        let weighted: f64 = minv_one.iter().zip(&t).map(|(w, tv)| w * tv).sum();
        let p = (weighted + injected[ci] - psi) / s;
        let mut total = 0.0;
        for (k, &fi) in side[ci].iter().enumerate() {
            let q: f64 = (0..t.len()).map(|j| minv.get(k, j) * (p - t[j])).sum();
            total += q;
            let slot = usize::from(grid.faces[fi].cells.0 != ci);
            face_flux[fi][slot] = q;
        }
        cell_balance[ci] = total + psi - injected[ci];
    }

    let mut exterior = BTreeMap::new();
    let mut continuity_max = 0.0f64;
    for (fi, face) in grid.faces.iter().enumerate() {
        match face.tag {
            FaceTag::Interior => {
                continuity_max = continuity_max.max((face_flux[fi][0] + face_flux[fi][1]).abs());
            }
            FaceTag::Interface { .. } => {
                if let Some(&th) = theta.get(&fi) {
                    continuity_max = continuity_max.max((face_flux[fi][0] - th).abs());
                }
            }
            FaceTag::Dirichlet | FaceTag::NeumannExterior => {
                exterior.insert(fi, face_flux[fi][0]);
            }
        }
    }
    Ok(FluxAudit { cell_balance, exterior, continuity_max })
}
