//! Plain-text mesh exchange format.
//!
//! Four sections, each opened by its bare name on a line; `#` starts a
//! comment, blank lines are skipped:
//!
//! ```text
//! NODES            # index x y        (indices consecutive from 0)
//! CELLS            # index n0 n1 n2 [n3]
//! FRACTURE_FACES   # node-a node-b fracture-id
//! BOUNDARY         # node-a node-b dirichlet|neumann value
//! ```
//!
//! Node pairs refer to the conforming grid before fracture splitting.
//! Edges sharing a fracture id chain into branches; edges of different ids
//! meeting at a point create an intersection subdomain there. Exterior
//! edges absent from BOUNDARY are sealed. Fracture tips ending on a
//! Dirichlet exterior edge inherit its value.

use std::collections::BTreeMap;
use std::path::Path;

use super::build::{coord_key, split_and_extract, BaseGrid};
use super::*;

#[derive(Clone, Copy)]
struct RawBoundary {
    a: usize,
    b: usize,
    kind: BoundaryKind,
    value: f64,
}

pub fn read_mesh_file(path: impl AsRef<Path>) -> Result<(MixedDimMesh, BoundaryValues), MeshError> {
    let path = path.as_ref();
    let pname = path.display().to_string();
    let text = std::fs::read_to_string(path)?;
    parse_mesh_text(&text, &pname)
}

fn parse_mesh_text(text: &str, pname: &str) -> Result<(MixedDimMesh, BoundaryValues), MeshError> {
    #[derive(PartialEq, Clone, Copy)]
    enum Section {
        None,
        Nodes,
        Cells,
        FractureFaces,
        Boundary,
    }
    let perr = |line: usize, reason: String| MeshError::ParseError {
        path: pname.to_string(),
        line,
        reason,
    };

    let mut section = Section::None;
    let mut nodes: Vec<[f64; 2]> = Vec::new();
    let mut cells: Vec<Vec<usize>> = Vec::new();
    let mut raw_fractures: Vec<(usize, usize, usize)> = Vec::new();
    let mut raw_boundary: Vec<RawBoundary> = Vec::new();

    for (idx, raw) in text.lines().enumerate() {
        let lineno = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        match line {
            "NODES" => {
                section = Section::Nodes;
                continue;
            }
            "CELLS" => {
                section = Section::Cells;
                continue;
            }
            "FRACTURE_FACES" => {
                section = Section::FractureFaces;
                continue;
            }
            "BOUNDARY" => {
                section = Section::Boundary;
                continue;
            }
            _ => {}
        }
        let tok: Vec<&str> = line.split_whitespace().collect();
        let parse_usize = |s: &str| {
            s.parse::<usize>().map_err(|_| perr(lineno, format!("expected an index, got '{s}'")))
        };
        let parse_f64 = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| perr(lineno, format!("expected a number, got '{s}'")))
        };
        match section {
            Section::None => {
                return Err(perr(lineno, format!("'{line}' before any section header")));
            }
            Section::Nodes => {
                if tok.len() != 3 {
                    return Err(perr(lineno, "node lines are 'index x y'".into()));
                }
                let id = parse_usize(tok[0])?;
                if id != nodes.len() {
                    return Err(perr(
                        lineno,
                        format!("node indices must be consecutive, expected {}", nodes.len()),
                    ));
                }
                nodes.push([parse_f64(tok[1])?, parse_f64(tok[2])?]);
            }
            Section::Cells => {
                if !(4..=5).contains(&tok.len()) {
                    return Err(perr(lineno, "cell lines are 'index n0 n1 n2 [n3]'".into()));
                }
                let id = parse_usize(tok[0])?;
                if id != cells.len() {
                    return Err(perr(
                        lineno,
                        format!("cell indices must be consecutive, expected {}", cells.len()),
                    ));
                }
                let mut cell = Vec::with_capacity(tok.len() - 1);
                for t in &tok[1..] {
                    let n = parse_usize(t)?;
                    if n >= nodes.len() {
                        return Err(perr(lineno, format!("node {n} out of range")));
                    }
                    cell.push(n);
                }
                let area2: f64 = (0..cell.len())
                    .map(|k| {
                        let [x0, y0] = nodes[cell[k]];
                        let [x1, y1] = nodes[cell[(k + 1) % cell.len()]];
                        x0 * y1 - x1 * y0
                    })
                    .sum();
                if area2.abs() < 1e-14 {
                    return Err(perr(lineno, "degenerate cell".into()));
                }
                if area2 < 0.0 {
                    cell.reverse();
                }
                cells.push(cell);
            }
            Section::FractureFaces => {
                if tok.len() != 3 {
                    return Err(perr(lineno, "fracture lines are 'node-a node-b id'".into()));
                }
                let a = parse_usize(tok[0])?;
                let b = parse_usize(tok[1])?;
                let f = parse_usize(tok[2])?;
                if a >= nodes.len() || b >= nodes.len() || a == b {
                    return Err(perr(lineno, "invalid fracture edge".into()));
                }
                raw_fractures.push((a, b, f));
            }
            Section::Boundary => {
                if tok.len() != 4 {
                    return Err(perr(
                        lineno,
                        "boundary lines are 'node-a node-b dirichlet|neumann value'".into(),
                    ));
                }
                let a = parse_usize(tok[0])?;
                let b = parse_usize(tok[1])?;
                let kind = match tok[2] {
                    "dirichlet" => BoundaryKind::Dirichlet,
                    "neumann" => BoundaryKind::Neumann,
                    other => {
                        return Err(perr(
                            lineno,
                            format!("unknown boundary kind '{other}'"),
                        ))
                    }
                };
                if a >= nodes.len() || b >= nodes.len() || a == b {
                    return Err(perr(lineno, "invalid boundary edge".into()));
                }
                raw_boundary.push(RawBoundary { a, b, kind, value: parse_f64(tok[3])? });
            }
        }
    }
    if nodes.is_empty() || cells.is_empty() {
        return Err(MeshError::ParseError {
            path: pname.to_string(),
            line: text.lines().count(),
            reason: "mesh needs NODES and CELLS sections".into(),
        });
    }

    // Compress fracture ids and keep one group per original id.
    let mut id_map: BTreeMap<usize, usize> = BTreeMap::new();
    for &(_, _, f) in &raw_fractures {
        let next = id_map.len();
        id_map.entry(f).or_insert(next);
    }
    let mut groups = vec![String::new(); id_map.len()];
    for (&orig, &dense) in &id_map {
        groups[dense] = format!("f{orig}");
    }
    let mut fracture_edges = BTreeMap::new();
    for &(a, b, f) in &raw_fractures {
        let key = if a < b { (a, b) } else { (b, a) };
        if fracture_edges.insert(key, id_map[&f]).is_some() {
            return Err(MeshError::TopologyError(format!(
                "fracture edge {a}-{b} listed twice"
            )));
        }
    }

    let (mut minx, mut miny, mut maxx, mut maxy) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for p in &nodes {
        minx = minx.min(p[0]);
        miny = miny.min(p[1]);
        maxx = maxx.max(p[0]);
        maxy = maxy.max(p[1]);
    }
    let domain = Rect { x0: minx, y0: miny, x1: maxx, y1: maxy };

    let coords = nodes.clone();
    let mut mesh = split_and_extract(
        BaseGrid { nodes, cells, fracture_edges, groups, domain },
        1,
    )?;

    // Splitting clones coordinates bit-exactly, so exterior faces can be
    // matched back to the base grid by endpoint coordinates.
    let ckey = |p: [f64; 2]| coord_key(p);
    let pair_key = |pa: [f64; 2], pb: [f64; 2]| {
        let (ka, kb) = (ckey(pa), ckey(pb));
        if ka <= kb {
            (ka, kb)
        } else {
            (kb, ka)
        }
    };
    let mut wanted: BTreeMap<((u64, u64), (u64, u64)), RawBoundary> = BTreeMap::new();
    for rb in &raw_boundary {
        if wanted.insert(pair_key(coords[rb.a], coords[rb.b]), *rb).is_some() {
            return Err(MeshError::TopologyError(format!(
                "boundary edge {}-{} listed twice",
                rb.a, rb.b
            )));
        }
    }
    // Dirichlet edge endpoints, for fracture tips that end on the boundary.
    let mut dirichlet_corners: BTreeMap<(u64, u64), Vec<f64>> = BTreeMap::new();
    for rb in &raw_boundary {
        if rb.kind == BoundaryKind::Dirichlet {
            dirichlet_corners.entry(ckey(coords[rb.a])).or_default().push(rb.value);
            dirichlet_corners.entry(ckey(coords[rb.b])).or_default().push(rb.value);
        }
    }

    let mut values = BoundaryValues::empty(mesh.subdomains.len());
    let mut matched = 0usize;
    for sub in &mut mesh.subdomains {
        let mut node_acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
        if sub.dim == 2 {
            for (fi, face) in sub.faces.iter_mut().enumerate() {
                if face.tag != FaceTag::NeumannExterior {
                    continue;
                }
                let key = pair_key(sub.nodes[face.nodes[0]], sub.nodes[face.nodes[1]]);
                if let Some(rb) = wanted.get(&key) {
                    matched += 1;
                    match rb.kind {
                        BoundaryKind::Dirichlet => {
                            face.tag = FaceTag::Dirichlet;
                            values.dirichlet[sub.id].insert(fi, rb.value);
                            for &n in &face.nodes {
                                let e = node_acc.entry(n).or_insert((0.0, 0));
                                e.0 += rb.value;
                                e.1 += 1;
                            }
                        }
                        BoundaryKind::Neumann => {
                            values.neumann[sub.id].insert(fi, rb.value);
                        }
                    }
                }
            }
        } else if sub.dim == 1 {
            for (fi, face) in sub.faces.iter_mut().enumerate() {
                if face.tag != FaceTag::NeumannExterior {
                    continue;
                }
                if let Some(vs) = dirichlet_corners.get(&ckey(face.center)) {
                    face.tag = FaceTag::Dirichlet;
                    let mean = vs.iter().sum::<f64>() / vs.len() as f64;
                    values.dirichlet[sub.id].insert(fi, mean);
                    node_acc.insert(face.nodes[0], (mean, 1));
                }
            }
        }
        values.set_nodal_means(sub.id, &node_acc);
    }
    if matched != wanted.len() {
        return Err(MeshError::TopologyError(
            "a BOUNDARY edge is not an exterior face of the mesh".into(),
        ));
    }

    Ok((mesh, values))
}

/// Writes a mesh back to the exchange format. Fracture group names are not
/// part of the format; branches are exported under their branch index.
/// Fails for meshes whose fracture grids were refined relative to the
/// matrix, since the format describes fractures as matrix edges.
pub fn write_mesh_file(
    mesh: &MixedDimMesh,
    values: &BoundaryValues,
    path: impl AsRef<Path>,
) -> Result<(), MeshError> {
    // Merge duplicated matrix nodes back together by coordinates.
    let mut base_ids: BTreeMap<(u64, u64), usize> = BTreeMap::new();
    let mut base_coords: Vec<[f64; 2]> = Vec::new();
    for sub in mesh.subdomains.iter().filter(|s| s.dim == 2) {
        for &p in &sub.nodes {
            base_ids.entry(coord_key(p)).or_insert_with(|| {
                base_coords.push(p);
                base_coords.len() - 1
            });
        }
    }
    // Re-sort for a stable file independent of subdomain order.
    let mut order: Vec<usize> = (0..base_coords.len()).collect();
    order.sort_by_key(|&i| coord_key(base_coords[i]));
    let mut rank = vec![0usize; base_coords.len()];
    for (r, &i) in order.iter().enumerate() {
        rank[i] = r;
    }
    let lookup = |p: [f64; 2]| base_ids.get(&coord_key(p)).map(|&i| rank[i]);

    let mut out = String::new();
    out.push_str("# mixed-dimensional mesh\nNODES\n");
    for (r, &i) in order.iter().enumerate() {
        let [x, y] = base_coords[i];
        out.push_str(&format!("{r} {x} {y}\n"));
    }
    out.push_str("CELLS\n");
    let mut cell_count = 0usize;
    for sub in mesh.subdomains.iter().filter(|s| s.dim == 2) {
        for cell in &sub.cells {
            out.push_str(&format!("{cell_count}"));
            for &n in cell {
                let id = lookup(sub.nodes[n]).expect("matrix nodes are registered");
                out.push_str(&format!(" {id}"));
            }
            out.push('\n');
            cell_count += 1;
        }
    }
    out.push_str("FRACTURE_FACES\n");
    for (b, sub) in mesh.subdomains.iter().filter(|s| s.dim == 1).enumerate() {
        for cell in &sub.cells {
            let a = lookup(sub.nodes[cell[0]]);
            let c = lookup(sub.nodes[cell[1]]);
            match (a, c) {
                (Some(a), Some(c)) => out.push_str(&format!("{a} {c} {b}\n")),
                _ => {
                    return Err(MeshError::UnsupportedGeometry(
                        "refined fracture grids cannot be exported as matrix edges".into(),
                    ))
                }
            }
        }
    }
    out.push_str("BOUNDARY\n");
    for sub in mesh.subdomains.iter().filter(|s| s.dim == 2) {
        for (fi, face) in sub.faces.iter().enumerate() {
            let entry = match face.tag {
                FaceTag::Dirichlet => {
                    Some(("dirichlet", values.dirichlet[sub.id].get(&fi).copied().unwrap_or(0.0)))
                }
                FaceTag::NeumannExterior => values.neumann[sub.id]
                    .get(&fi)
                    .map(|&v| ("neumann", v)),
                _ => None,
            };
            if let Some((kind, v)) = entry {
                let a = lookup(sub.nodes[face.nodes[0]]).expect("registered");
                let b = lookup(sub.nodes[face.nodes[1]]).expect("registered");
                out.push_str(&format!("{a} {b} {kind} {v}\n"));
            }
        }
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
pub(super) fn read_mesh_str(text: &str) -> Result<(MixedDimMesh, BoundaryValues), MeshError> {
    parse_mesh_text(text, "<inline>")
}
