//! Structured mesh generation and the splitting pipeline shared with the
//! file importer.
//!
//! Input is a conforming "base" grid plus a set of fracture edges keyed by
//! sorted node pairs. The pipeline duplicates matrix nodes per angular
//! sector around the fracture paths, rebuilds faces from the split
//! connectivity, flood-fills matrix components, walks fracture chains into
//! 1D subdomains, creates 0D subdomains at junctions and assembles the
//! face pairings that later carry the mortar couplings.

use std::collections::BTreeMap;

use super::*;

/// Conforming grid before fracture splitting.
pub(super) struct BaseGrid {
    pub nodes: Vec<[f64; 2]>,
    /// Counter-clockwise node lists, 3 or 4 nodes.
    pub cells: Vec<Vec<usize>>,
    /// Sorted node pair to fracture index.
    pub fracture_edges: BTreeMap<(usize, usize), usize>,
    /// Fracture index to group name.
    pub groups: Vec<String>,
    pub domain: Rect,
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Smaller root wins so representatives are deterministic.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

fn skey(a: usize, b: usize) -> (usize, usize) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn cell_edges(cell: &[usize]) -> Vec<(usize, usize)> {
    (0..cell.len()).map(|k| (cell[k], cell[(k + 1) % cell.len()])).collect()
}

fn sub2(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn polygon_area_centroid(pts: &[[f64; 2]]) -> (f64, [f64; 2]) {
    let n = pts.len();
    let mut a2 = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for k in 0..n {
        let [x0, y0] = pts[k];
        let [x1, y1] = pts[(k + 1) % n];
        let cross = x0 * y1 - x1 * y0;
        a2 += cross;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    let area = 0.5 * a2;
    (area, [cx / (3.0 * a2), cy / (3.0 * a2)])
}

/// Builds a rectangular grid with embedded fractures. Fracture polylines
/// must be axis-aligned and run along grid lines; `fracture_refine`
/// subdivides every covered lattice edge into that many 1D cells.
pub fn build_structured_mesh(
    domain: Rect,
    nx: usize,
    ny: usize,
    kind: GridKind,
    fractures: &[Fracture],
    fracture_refine: usize,
) -> Result<MixedDimMesh, MeshError> {
    if nx == 0 || ny == 0 {
        return Err(MeshError::EmptyDomain { nx, ny });
    }
    let hx = (domain.x1 - domain.x0) / nx as f64;
    let hy = (domain.y1 - domain.y0) / ny as f64;
    let node_id = |i: usize, j: usize| j * (nx + 1) + i;

    let mut nodes = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            nodes.push([domain.x0 + i as f64 * hx, domain.y0 + j as f64 * hy]);
        }
    }

    let mut cells = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            let (n00, n10) = (node_id(i, j), node_id(i + 1, j));
            let (n11, n01) = (node_id(i + 1, j + 1), node_id(i, j + 1));
            match kind {
                GridKind::CartesianQuads => cells.push(vec![n00, n10, n11, n01]),
                GridKind::StructuredTriangles => {
                    cells.push(vec![n00, n10, n11]);
                    cells.push(vec![n00, n11, n01]);
                }
            }
        }
    }

    // Snap a coordinate to its lattice index.
    let snap = |v: f64, v0: f64, h: f64, n: usize, name: &str| -> Result<usize, String> {
        let s = (v - v0) / h;
        let i = s.round();
        if (s - i).abs() > 1e-6 {
            return Err(format!("{name}-coordinate {v} is not on the grid lattice"));
        }
        if i < 0.0 || i > n as f64 {
            return Err(format!("{name}-coordinate {v} is outside the domain"));
        }
        Ok(i as usize)
    };

    let mut fracture_edges = BTreeMap::new();
    let mut groups = Vec::new();
    for (fid, fr) in fractures.iter().enumerate() {
        let err = |reason: String| MeshError::NonConformingFracture {
            name: fr.group.clone(),
            reason,
        };
        if fr.points.len() < 2 {
            return Err(err("polyline needs at least two points".into()));
        }
        let mut lattice = Vec::new();
        for p in &fr.points {
            let i = snap(p[0], domain.x0, hx, nx, "x").map_err(|r| err(r))?;
            let j = snap(p[1], domain.y0, hy, ny, "y").map_err(|r| err(r))?;
            lattice.push((i, j));
        }
        for w in lattice.windows(2) {
            let ((i0, j0), (i1, j1)) = (w[0], w[1]);
            if i0 == i1 && j0 == j1 {
                return Err(err("zero-length segment".into()));
            }
            if i0 != i1 && j0 != j1 {
                return Err(err(format!(
                    "segment ({},{})-({},{}) is not axis-aligned",
                    i0, j0, i1, j1
                )));
            }
            let edges: Vec<(usize, usize)> = if i0 == i1 {
                if i0 == 0 || i0 == nx {
                    return Err(err("segment lies on the domain boundary".into()));
                }
                let (ja, jb) = (j0.min(j1), j0.max(j1));
                (ja..jb).map(|j| skey(node_id(i0, j), node_id(i0, j + 1))).collect()
            } else {
                if j0 == 0 || j0 == ny {
                    return Err(err("segment lies on the domain boundary".into()));
                }
                let (ia, ib) = (i0.min(i1), i0.max(i1));
                (ia..ib).map(|i| skey(node_id(i, j0), node_id(i + 1, j0))).collect()
            };
            for e in edges {
                if fracture_edges.insert(e, fid).is_some() {
                    return Err(err("overlapping fracture segments".into()));
                }
            }
        }
        groups.push(fr.group.clone());
    }

    split_and_extract(
        BaseGrid { nodes, cells, fracture_edges, groups, domain },
        fracture_refine,
    )
}

pub(super) fn split_and_extract(
    base: BaseGrid,
    fracture_refine: usize,
) -> Result<MixedDimMesh, MeshError> {
    let refine = fracture_refine.max(1);
    let BaseGrid { nodes: base_nodes, mut cells, fracture_edges, groups, domain } = base;

    // Base-grid incidence.
    let mut edge_cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    let mut node_cells: Vec<Vec<usize>> = vec![Vec::new(); base_nodes.len()];
    for (c, cell) in cells.iter().enumerate() {
        for &(a, b) in &cell_edges(cell) {
            edge_cells.entry(skey(a, b)).or_default().push(c);
        }
        for &n in cell {
            node_cells[n].push(c);
        }
    }
    for (&(a, b), fid) in &fracture_edges {
        let n_adj = edge_cells.get(&(a, b)).map_or(0, Vec::len);
        if n_adj != 2 {
            return Err(MeshError::NonConformingFracture {
                name: groups[*fid].clone(),
                reason: format!(
                    "edge between nodes {a} and {b} borders {n_adj} cell(s), expected 2"
                ),
            });
        }
    }

    // Fracture graph on base nodes.
    let mut frac_adj: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
    for (&(a, b), &fid) in &fracture_edges {
        frac_adj.entry(a).or_default().push((b, fid));
        frac_adj.entry(b).or_default().push((a, fid));
    }

    // Duplicate fracture-path nodes once per angular sector: cells around
    // the node stay merged across shared non-fracture edges. Sectors are
    // computed on the pristine base connectivity for every node first;
    // renumbering one node must not disturb the edge keys of the next.
    let mut pending: Vec<(usize, Vec<Vec<usize>>)> = Vec::new();
    for (&n, _) in &frac_adj {
        let incident = &node_cells[n];
        if incident.len() < 2 {
            continue;
        }
        let mut uf = UnionFind::new(incident.len());
        let pos: BTreeMap<usize, usize> =
            incident.iter().enumerate().map(|(k, &c)| (c, k)).collect();
        for (k, &c) in incident.iter().enumerate() {
            for &(a, b) in &cell_edges(&cells[c]) {
                if a != n && b != n {
                    continue;
                }
                let key = skey(a, b);
                if fracture_edges.contains_key(&key) {
                    continue;
                }
                for &other in &edge_cells[&key] {
                    if let Some(&ko) = pos.get(&other) {
                        uf.union(k, ko);
                    }
                }
            }
        }
        let mut sectors: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, &c) in incident.iter().enumerate() {
            sectors.entry(uf.find(k)).or_default().push(c);
        }
        if sectors.len() > 1 {
            pending.push((n, sectors.into_values().collect()));
        }
    }
    let mut nodes = base_nodes.clone();
    let mut node_origin: Vec<usize> = (0..base_nodes.len()).collect();
    for (n, sectors) in pending {
        // The first sector keeps the original node id.
        for members in &sectors[1..] {
            let new_id = nodes.len();
            nodes.push(base_nodes[n]);
            node_origin.push(n);
            for &c in members {
                for nd in cells[c].iter_mut() {
                    if *nd == n {
                        *nd = new_id;
                    }
                }
            }
        }
    }

    // Post-split incidence; fracture edges now appear once per side.
    let mut split_edge_cells: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
    for (c, cell) in cells.iter().enumerate() {
        for &(a, b) in &cell_edges(cell) {
            split_edge_cells.entry(skey(a, b)).or_default().push(c);
        }
    }
    let orig_pair =
        |a: usize, b: usize| -> (usize, usize) { skey(node_origin[a], node_origin[b]) };

    // Matrix components: flood fill across interior non-fracture edges.
    let mut comp = UnionFind::new(cells.len());
    for (&(a, b), adj) in &split_edge_cells {
        if adj.len() == 2 && !fracture_edges.contains_key(&orig_pair(a, b)) {
            comp.union(adj[0], adj[1]);
        }
    }
    let mut comp_cells: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for c in 0..cells.len() {
        comp_cells.entry(comp.find(c)).or_default().push(c);
    }
    // Order components by their lexicographically smallest node coordinate,
    // which is a corner of the region and therefore refinement-stable.
    let mut comp_list: Vec<((u64, u64), Vec<usize>)> = comp_cells
        .into_values()
        .map(|cs| {
            let mut min_key = (u64::MAX, u64::MAX);
            for &c in &cs {
                for &nd in &cells[c] {
                    let key = coord_key(nodes[nd]);
                    if key < min_key {
                        min_key = key;
                    }
                }
            }
            (min_key, cs)
        })
        .collect();
    comp_list.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1[0].cmp(&b.1[0])));
    let n2 = comp_list.len();

    // Fracture chains: maximal paths through degree-2 same-fracture nodes.
    let is_junction = |n: usize| -> bool {
        let adj = &frac_adj[&n];
        adj.len() >= 3 || (adj.len() == 2 && adj[0].1 != adj[1].1)
    };
    let mut visited: BTreeMap<(usize, usize), bool> =
        fracture_edges.keys().map(|&k| (k, false)).collect();
    let mut chains: Vec<(Vec<usize>, usize)> = Vec::new();
    for (&start, adj) in &frac_adj {
        if adj.len() != 1 && !is_junction(start) {
            continue;
        }
        for &(first, fid) in adj {
            if visited[&skey(start, first)] {
                continue;
            }
            let mut path = vec![start, first];
            *visited.get_mut(&skey(start, first)).unwrap() = true;
            loop {
                let cur = *path.last().unwrap();
                let prev = path[path.len() - 2];
                let cur_adj = &frac_adj[&cur];
                if cur_adj.len() != 2 || is_junction(cur) {
                    break;
                }
                let (next, _) = cur_adj.iter().copied().find(|&(m, _)| m != prev).unwrap();
                if visited[&skey(cur, next)] {
                    break;
                }
                *visited.get_mut(&skey(cur, next)).unwrap() = true;
                path.push(next);
            }
            chains.push((path, fid));
        }
    }
    if visited.values().any(|&v| !v) {
        return Err(MeshError::UnsupportedGeometry(
            "fracture edges form a closed loop without intersections".into(),
        ));
    }
    for (path, _) in &chains {
        if path.first() == path.last() {
            return Err(MeshError::UnsupportedGeometry(
                "fracture branch forms a loop at a single junction".into(),
            ));
        }
    }
    // Canonical traversal from the lexicographically smaller endpoint.
    for (path, _) in &mut chains {
        let a = coord_key(base_nodes[path[0]]);
        let b = coord_key(base_nodes[*path.last().unwrap()]);
        if b < a {
            path.reverse();
        }
    }
    chains.sort_by_key(|(path, _)| {
        (coord_key(base_nodes[path[0]]), coord_key(base_nodes[*path.last().unwrap()]))
    });
    let n1 = chains.len();

    // Junction points become 0D subdomains.
    let junctions: Vec<usize> = frac_adj
        .keys()
        .copied()
        .filter(|&n| frac_adj[&n].len() >= 2 && is_junction(n))
        .collect();
    let mut junction_list = junctions;
    junction_list.sort_by_key(|&n| coord_key(base_nodes[n]));
    let junction_id: BTreeMap<usize, usize> =
        junction_list.iter().enumerate().map(|(k, &n)| (n, n2 + n1 + k)).collect();

    // Per fracture edge: owning branch, edge position and traversal
    // direction, for tagging matrix faces.
    struct EdgeInfo {
        branch: usize,
        pos: usize,
        dir: [f64; 2],
    }
    let mut edge_info: BTreeMap<(usize, usize), EdgeInfo> = BTreeMap::new();
    for (b, (path, _)) in chains.iter().enumerate() {
        for (pos, w) in path.windows(2).enumerate() {
            let d = sub2(base_nodes[w[1]], base_nodes[w[0]]);
            let len = norm2(d);
            edge_info.insert(
                skey(w[0], w[1]),
                EdgeInfo { branch: b, pos, dir: [d[0] / len, d[1] / len] },
            );
        }
    }

    let mut subdomains: Vec<SubdomainGrid> = Vec::new();
    // (branch, edge pos, side) -> (matrix subdomain, face index)
    let mut side_faces: BTreeMap<(usize, usize, Side), (usize, usize)> = BTreeMap::new();

    for (sub_id, (_, comp_cell_ids)) in comp_list.iter().enumerate() {
        let mut local_of: BTreeMap<usize, usize> = BTreeMap::new();
        for &c in comp_cell_ids {
            for &nd in &cells[c] {
                local_of.entry(nd).or_insert(0);
            }
        }
        for (k, (_, v)) in local_of.iter_mut().enumerate() {
            *v = k;
        }
        let local_nodes: Vec<[f64; 2]> = local_of.keys().map(|&g| nodes[g]).collect();
        let global_of: Vec<usize> = local_of.keys().copied().collect();

        let mut local_cells = Vec::with_capacity(comp_cell_ids.len());
        let mut volumes = Vec::new();
        let mut centers = Vec::new();
        for &c in comp_cell_ids {
            let lc: Vec<usize> = cells[c].iter().map(|n| local_of[n]).collect();
            let pts: Vec<[f64; 2]> = lc.iter().map(|&n| local_nodes[n]).collect();
            let (area, centroid) = polygon_area_centroid(&pts);
            debug_assert!(area > 0.0, "cells are counter-clockwise");
            local_cells.push(lc);
            volumes.push(area);
            centers.push(centroid);
        }

        let mut local_edges: BTreeMap<(usize, usize), Vec<usize>> = BTreeMap::new();
        for (lc, cell) in local_cells.iter().enumerate() {
            for &(a, b) in &cell_edges(cell) {
                local_edges.entry(skey(a, b)).or_default().push(lc);
            }
        }
        let mut faces = Vec::new();
        for (&(a, b), adj) in &local_edges {
            let pa = local_nodes[a];
            let pb = local_nodes[b];
            let d = sub2(pb, pa);
            let len = norm2(d);
            let center = [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])];
            let op = orig_pair(global_of[a], global_of[b]);
            let info = edge_info.get(&op);

            // A short immersed fracture may keep both endpoint nodes
            // unsplit, leaving one shared edge key; it still carries two
            // one-sided faces.
            let one_sided: Vec<(usize, Option<usize>)> = if info.is_some() {
                adj.iter().map(|&c| (c, None)).collect()
            } else {
                vec![(adj[0], adj.get(1).copied())]
            };
            for (cell0, cell1) in one_sided {
                let c0 = centers[cell0];
                let mut normal = [d[1] / len, -d[0] / len];
                if normal[0] * (center[0] - c0[0]) + normal[1] * (center[1] - c0[1]) < 0.0 {
                    normal = [-normal[0], -normal[1]];
                }
                let tag = if cell1.is_some() {
                    FaceTag::Interior
                } else if let Some(info) = info {
                    let left = [-info.dir[1], info.dir[0]];
                    let to_cell = sub2(c0, center);
                    let side = if to_cell[0] * left[0] + to_cell[1] * left[1] > 0.0 {
                        Side::Plus
                    } else {
                        Side::Minus
                    };
                    side_faces.insert((info.branch, info.pos, side), (sub_id, faces.len()));
                    FaceTag::Interface { lower: n2 + info.branch, side }
                } else {
                    FaceTag::NeumannExterior
                };
                faces.push(Face {
                    nodes: vec![a, b],
                    cells: (cell0, cell1),
                    center,
                    area: len,
                    normal,
                    tag,
                });
            }
        }

        subdomains.push(SubdomainGrid {
            id: sub_id,
            dim: 2,
            nodes: local_nodes,
            cells: local_cells,
            faces,
            cell_volumes: volumes,
            cell_centers: centers,
            group: None,
        });
    }

    // 1D branch grids, refined along each lattice edge.
    for (b, (path, fid)) in chains.iter().enumerate() {
        let mut bnodes: Vec<[f64; 2]> = vec![base_nodes[path[0]]];
        for w in path.windows(2) {
            let (p0, p1) = (base_nodes[w[0]], base_nodes[w[1]]);
            for k in 1..refine {
                let t = k as f64 / refine as f64;
                bnodes.push([p0[0] + t * (p1[0] - p0[0]), p0[1] + t * (p1[1] - p0[1])]);
            }
            // Lattice nodes are copied bit-exactly so coordinate keys match
            // across subdomains.
            bnodes.push(p1);
        }
        let n_cells = bnodes.len() - 1;
        let bcells: Vec<Vec<usize>> = (0..n_cells).map(|k| vec![k, k + 1]).collect();
        let volumes: Vec<f64> =
            (0..n_cells).map(|k| norm2(sub2(bnodes[k + 1], bnodes[k]))).collect();
        let centers: Vec<[f64; 2]> = (0..n_cells)
            .map(|k| {
                [0.5 * (bnodes[k][0] + bnodes[k + 1][0]), 0.5 * (bnodes[k][1] + bnodes[k + 1][1])]
            })
            .collect();

        let tip_tag = |node: usize| -> FaceTag {
            match junction_id.get(&node) {
                Some(&j) => FaceTag::Interface { lower: j, side: Side::Plus },
                None => FaceTag::NeumannExterior,
            }
        };
        let mut faces = Vec::with_capacity(bnodes.len());
        for k in 0..bnodes.len() {
            let (cells_pair, dir_from, tag) = if k == 0 {
                (
                    (0usize, None),
                    sub2(bnodes[0], centers[0]),
                    tip_tag(path[0]),
                )
            } else if k == n_cells {
                (
                    (n_cells - 1, None),
                    sub2(bnodes[k], centers[n_cells - 1]),
                    tip_tag(*path.last().unwrap()),
                )
            } else {
                ((k - 1, Some(k)), sub2(bnodes[k], centers[k - 1]), FaceTag::Interior)
            };
            let len = norm2(dir_from);
            faces.push(Face {
                nodes: vec![k],
                cells: cells_pair,
                center: bnodes[k],
                area: 1.0,
                normal: [dir_from[0] / len, dir_from[1] / len],
                tag,
            });
        }

        subdomains.push(SubdomainGrid {
            id: n2 + b,
            dim: 1,
            nodes: bnodes,
            cells: bcells,
            faces,
            cell_volumes: volumes,
            cell_centers: centers,
            group: Some(groups[*fid].clone()),
        });
    }

    for (k, &n) in junction_list.iter().enumerate() {
        subdomains.push(SubdomainGrid {
            id: n2 + n1 + k,
            dim: 0,
            nodes: vec![base_nodes[n]],
            cells: vec![vec![0]],
            faces: Vec::new(),
            cell_volumes: vec![1.0],
            cell_centers: vec![base_nodes[n]],
            group: None,
        });
    }

    // Matrix-fracture pairings, grouped by the matrix subdomain a side
    // lands in (almost always a single one per side).
    let mut pairings: Vec<FacePairing> = Vec::new();
    for (b, (path, _)) in chains.iter().enumerate() {
        let n_edges = path.len() - 1;
        for side in [Side::Plus, Side::Minus] {
            let mut by_higher: BTreeMap<usize, Vec<(usize, usize)>> = BTreeMap::new();
            for cell in 0..n_edges * refine {
                let pos = cell / refine;
                let &(sub, face) = side_faces
                    .get(&(b, pos, side))
                    .expect("every fracture edge has faces on both sides");
                by_higher.entry(sub).or_default().push((cell, face));
            }
            for (higher, pairs) in by_higher {
                pairings.push(FacePairing {
                    key: InterfaceRef { lower: n2 + b, higher, side },
                    pairs,
                });
            }
        }
    }
    // Branch-end pairings onto junction points.
    for (b, (path, _)) in chains.iter().enumerate() {
        let branch_id = n2 + b;
        let end_face = subdomains[branch_id].faces.len() - 1;
        for (node, face) in [(path[0], 0), (*path.last().unwrap(), end_face)] {
            if let Some(&j) = junction_id.get(&node) {
                pairings.push(FacePairing {
                    key: InterfaceRef { lower: j, higher: branch_id, side: Side::Plus },
                    pairs: vec![(0, face)],
                });
            }
        }
    }
    pairings.sort_by(|a, b| a.key.cmp(&b.key));

    let n_sub = subdomains.len();
    let mut up_neighbors = vec![Vec::new(); n_sub];
    let mut down_neighbors = vec![Vec::new(); n_sub];
    for p in &pairings {
        up_neighbors[p.key.lower].push(p.key.higher);
        down_neighbors[p.key.higher].push(p.key.lower);
    }
    for list in up_neighbors.iter_mut().chain(down_neighbors.iter_mut()) {
        list.sort_unstable();
        list.dedup();
    }

    Ok(MixedDimMesh { subdomains, up_neighbors, down_neighbors, pairings, domain })
}

pub(super) use super::coord_key;
