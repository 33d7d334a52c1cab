//! Legacy-ASCII VTK output: one unstructured-grid file per subdomain plus
//! a plain-text index describing the pieces and their couplings.

use std::io::Write;
use std::path::{Path, PathBuf};

use super::*;

/// One scalar value per cell, per subdomain (outer index = subdomain id).
pub struct CellField<'a> {
    pub name: &'a str,
    pub per_subdomain: &'a [Vec<f64>],
}

fn cell_type(dim: u8, n_nodes: usize) -> u8 {
    match (dim, n_nodes) {
        (2, 4) => 9, // VTK_QUAD
        (2, 3) => 5, // VTK_TRIANGLE
        (1, 2) => 3, // VTK_LINE
        (0, 1) => 1, // VTK_VERTEX
        _ => unreachable!("cell shape {dim}d/{n_nodes} nodes"),
    }
}

fn fnum(v: f64) -> String {
    format!("{:.12e}", v)
}

/// Writes `<prefix>_sub<id>.vtk` per subdomain and `<prefix>_index.txt`.
/// Returns the written paths, index file first.
pub fn write_vtk_series(
    mesh: &MixedDimMesh,
    fields: &[CellField<'_>],
    dir: impl AsRef<Path>,
    prefix: &str,
) -> Result<Vec<PathBuf>, std::io::Error> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();

    let mut index = String::new();
    for sub in &mesh.subdomains {
        let fname = format!("{prefix}_sub{:03}.vtk", sub.id);
        index.push_str(&format!(
            "subdomain {} dim {} cells {} group {} file {}\n",
            sub.id,
            sub.dim,
            sub.n_cells(),
            sub.group.as_deref().unwrap_or("-"),
            fname
        ));

        let mut out = String::new();
        out.push_str("# vtk DataFile Version 3.0\n");
        out.push_str(&format!("subdomain {} dim {}\n", sub.id, sub.dim));
        out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
        out.push_str(&format!("POINTS {} double\n", sub.nodes.len()));
        for p in &sub.nodes {
            out.push_str(&format!("{} {} 0.0\n", fnum(p[0]), fnum(p[1])));
        }
        let list_len: usize = sub.cells.iter().map(|c| c.len() + 1).sum();
        out.push_str(&format!("CELLS {} {}\n", sub.n_cells(), list_len));
        for cell in &sub.cells {
            out.push_str(&format!("{}", cell.len()));
            for &n in cell {
                out.push_str(&format!(" {n}"));
            }
            out.push('\n');
        }
        out.push_str(&format!("CELL_TYPES {}\n", sub.n_cells()));
        for cell in &sub.cells {
            out.push_str(&format!("{}\n", cell_type(sub.dim, cell.len())));
        }
        if !fields.is_empty() {
            out.push_str(&format!("CELL_DATA {}\n", sub.n_cells()));
            for field in fields {
                let values = &field.per_subdomain[sub.id];
                assert_eq!(values.len(), sub.n_cells(), "field sized per cell");
                out.push_str(&format!("SCALARS {} double 1\nLOOKUP_TABLE default\n", field.name));
                for &v in values {
                    out.push_str(&fnum(v));
                    out.push('\n');
                }
            }
        }
        let path = dir.join(&fname);
        let mut f = std::fs::File::create(&path)?;
        f.write_all(out.as_bytes())?;
        written.push(path);
    }
    for p in &mesh.pairings {
        index.push_str(&format!(
            "interface lower {} higher {} side {} pairs {}\n",
            p.key.lower,
            p.key.higher,
            p.key.side.label(),
            p.pairs.len()
        ));
    }
    let index_path = dir.join(format!("{prefix}_index.txt"));
    std::fs::write(&index_path, index)?;
    written.insert(0, index_path);
    Ok(written)
}

/// Writes a standalone polyline VTK file: one line (or vertex, when the
/// endpoints coincide) cell per segment, with optional scalar cell data.
/// Used for interface flux output where geometry lives between grids.
pub fn write_vtk_segments(
    segments: &[([f64; 2], [f64; 2])],
    data: &[(&str, &[f64])],
    path: impl AsRef<Path>,
) -> Result<(), std::io::Error> {
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\ninterface data\nASCII\n");
    out.push_str("DATASET UNSTRUCTURED_GRID\n");
    out.push_str(&format!("POINTS {} double\n", 2 * segments.len()));
    for (a, b) in segments {
        out.push_str(&format!("{} {} 0.0\n", fnum(a[0]), fnum(a[1])));
        out.push_str(&format!("{} {} 0.0\n", fnum(b[0]), fnum(b[1])));
    }
    let is_point = |k: usize| segments[k].0 == segments[k].1;
    let list_len: usize =
        (0..segments.len()).map(|k| if is_point(k) { 2 } else { 3 }).sum();
    out.push_str(&format!("CELLS {} {}\n", segments.len(), list_len));
    for k in 0..segments.len() {
        if is_point(k) {
            out.push_str(&format!("1 {}\n", 2 * k));
        } else {
            out.push_str(&format!("2 {} {}\n", 2 * k, 2 * k + 1));
        }
    }
    out.push_str(&format!("CELL_TYPES {}\n", segments.len()));
    for k in 0..segments.len() {
        out.push_str(if is_point(k) { "1\n" } else { "3\n" });
    }
    if !data.is_empty() {
        out.push_str(&format!("CELL_DATA {}\n", segments.len()));
        for (name, values) in data {
            assert_eq!(values.len(), segments.len());
            out.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
            for &v in *values {
                out.push_str(&fnum(v));
                out.push('\n');
            }
        }
    }
    std::fs::write(path, out)
}
