//! Mixed-dimensional meshes.
//!
//! A mesh is a bag of subdomain grids of dimensions 2, 1 and 0 plus the
//! adjacency between them. Fractures are one-dimensional grids living on
//! (duplicated) faces of the surrounding two-dimensional grid; fracture
//! intersections are zero-dimensional points. Geometry is always planar and
//! coordinates are absolute, so grids of different subdomains coincide
//! geometrically along interfaces while keeping independent numbering.
//!
//! Splitting rules used by both the structured generator and the file
//! importer:
//! - matrix faces covered by a fracture are duplicated into a plus/minus
//!   pair, and matrix nodes along the fracture path are duplicated once per
//!   angular sector, so the matrix pressure space is discontinuous across
//!   fractures but continuous around immersed tips;
//! - each maximal fracture chain becomes one 1D subdomain; chains pass
//!   straight through polyline corners of the same fracture;
//! - a point where three or more fracture edges meet (a crossing or a
//!   T-junction), or where chains of two different fractures touch
//!   end-to-end, becomes a 0D subdomain whose neighbors are the incident
//!   branches.

mod build;
mod file;
#[cfg(test)]
mod tests;
mod validate;
mod vtk;

pub use build::build_structured_mesh;
pub use file::{read_mesh_file, write_mesh_file};
pub use validate::{validate_mesh, ValidationIssue, ValidationReport};
pub use vtk::{write_vtk_segments, write_vtk_series, CellField};

use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MeshError {
    #[error("mesh has no cells (resolution {nx}x{ny})")]
    EmptyDomain { nx: usize, ny: usize },
    #[error("fracture {name}: {reason}")]
    NonConformingFracture { name: String, reason: String },
    #[error("{path}:{line}: {reason}")]
    ParseError { path: String, line: usize, reason: String },
    #[error("fracture topology: {0}")]
    TopologyError(String),
    #[error("unsupported geometry: {0}")]
    UnsupportedGeometry(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Which side of a lower-dimensional subdomain an interface lives on. For
/// 2D/1D couplings `Plus` is the left side of the branch traversal
/// direction; 1D/0D couplings always use `Plus` (a branch end touches a
/// point once).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn label(self) -> &'static str {
        match self {
            Side::Plus => "plus",
            Side::Minus => "minus",
        }
    }
}

/// Boundary role of a face.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FaceTag {
    Interior,
    /// Exterior face with prescribed pressure.
    Dirichlet,
    /// Exterior face with prescribed outward flux (defaults to sealed).
    NeumannExterior,
    /// Face geometrically coincident with a lower-dimensional subdomain.
    Interface { lower: usize, side: Side },
}

#[derive(Debug, Clone)]
pub struct Face {
    /// Node indices into the owning subdomain; two for an edge, one for a
    /// point face of a 1D grid.
    pub nodes: Vec<usize>,
    /// Adjacent cells; the normal points out of `cells.0`.
    pub cells: (usize, Option<usize>),
    pub center: [f64; 2],
    /// Edge length in 2D; defined as 1 for the point faces of 1D grids.
    pub area: f64,
    /// Unit normal out of `cells.0`; for 1D grids the tangent direction
    /// from the adjacent cell center toward the face.
    pub normal: [f64; 2],
    pub tag: FaceTag,
}

#[derive(Debug, Clone)]
pub struct SubdomainGrid {
    pub id: usize,
    pub dim: u8,
    pub nodes: Vec<[f64; 2]>,
    /// Node lists per cell: 3/4 counter-clockwise nodes in 2D, 2 nodes in
    /// traversal order in 1D, a single node in 0D.
    pub cells: Vec<Vec<usize>>,
    pub faces: Vec<Face>,
    pub cell_volumes: Vec<f64>,
    pub cell_centers: Vec<[f64; 2]>,
    /// Fracture group name for 1D subdomains (used for per-group
    /// permeabilities); `None` for matrix and point subdomains.
    pub group: Option<String>,
}

impl SubdomainGrid {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    /// Total measure: area, length, or cell count for points.
    pub fn measure(&self) -> f64 {
        self.cell_volumes.iter().sum()
    }

    pub fn has_dirichlet(&self) -> bool {
        self.faces.iter().any(|f| f.tag == FaceTag::Dirichlet)
    }

    pub fn interface_faces(&self) -> impl Iterator<Item = (usize, usize, Side)> + '_ {
        self.faces.iter().enumerate().filter_map(|(i, f)| match f.tag {
            FaceTag::Interface { lower, side } => Some((i, lower, side)),
            _ => None,
        })
    }
}

/// One coupling between a lower-dimensional subdomain and a side of its
/// (d+1)-dimensional neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct InterfaceRef {
    pub lower: usize,
    pub higher: usize,
    pub side: Side,
}

/// Geometric covering of a lower subdomain's cells by faces of the higher
/// one, ordered along the lower manifold. Consecutive lower cells may share
/// a higher face when the lower grid is refined.
#[derive(Debug, Clone)]
pub struct FacePairing {
    pub key: InterfaceRef,
    /// (lower cell, higher face) in lower-cell order.
    pub pairs: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    pub const UNIT: Rect = Rect { x0: 0.0, y0: 0.0, x1: 1.0, y1: 1.0 };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridKind {
    CartesianQuads,
    StructuredTriangles,
}

/// An axis-aligned fracture polyline with lattice-conforming vertices.
#[derive(Debug, Clone)]
pub struct Fracture {
    pub points: Vec<[f64; 2]>,
    pub group: String,
}

#[derive(Debug, Clone)]
pub struct MixedDimMesh {
    pub subdomains: Vec<SubdomainGrid>,
    /// Neighbors of dimension d+1 per subdomain, sorted.
    pub up_neighbors: Vec<Vec<usize>>,
    /// Neighbors of dimension d-1 per subdomain, sorted.
    pub down_neighbors: Vec<Vec<usize>>,
    /// Sorted by key.
    pub pairings: Vec<FacePairing>,
    /// Bounding rectangle for generated meshes; file meshes compute it.
    pub domain: Rect,
}

impl MixedDimMesh {
    pub fn n_subdomains(&self) -> usize {
        self.subdomains.len()
    }

    pub fn pairing(&self, key: InterfaceRef) -> Option<&FacePairing> {
        self.pairings
            .binary_search_by(|p| p.key.cmp(&key))
            .ok()
            .map(|i| &self.pairings[i])
    }

    pub fn interfaces(&self) -> impl Iterator<Item = InterfaceRef> + '_ {
        self.pairings.iter().map(|p| p.key)
    }

    /// Sum of cell volumes over subdomains of one dimension.
    pub fn total_volume(&self, dim: u8) -> f64 {
        self.subdomains
            .iter()
            .filter(|s| s.dim == dim)
            .map(SubdomainGrid::measure)
            .sum()
    }

    /// Applies exterior boundary conditions by rectangle side, retagging
    /// faces and returning the evaluated per-face values. Fracture tips on a
    /// Dirichlet side inherit the Dirichlet value; everything else exterior
    /// stays Neumann.
    pub fn apply_boundary(&mut self, spec: &BoundarySpec) -> BoundaryValues {
        let rect = self.domain;
        let tol = 1e-9 * side_scale(&rect);
        let mut values = BoundaryValues::empty(self.subdomains.len());
        for sub in &mut self.subdomains {
            let mut node_acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
            for (fi, face) in sub.faces.iter_mut().enumerate() {
                if !matches!(face.tag, FaceTag::NeumannExterior | FaceTag::Dirichlet) {
                    continue;
                }
                let Some(side) = rect_side(&rect, face, sub.dim, tol) else {
                    continue;
                };
                let func = spec.side(side);
                match func.kind {
                    BoundaryKind::Dirichlet => {
                        face.tag = FaceTag::Dirichlet;
                        values.dirichlet[sub.id].insert(fi, func.eval(face.center));
                        for &n in &face.nodes {
                            let e = node_acc.entry(n).or_insert((0.0, 0));
                            e.0 += func.eval(sub.nodes[n]);
                            e.1 += 1;
                        }
                    }
                    BoundaryKind::Neumann => {
                        face.tag = FaceTag::NeumannExterior;
                        values.neumann[sub.id].insert(fi, func.eval(face.center));
                    }
                }
            }
            values.set_nodal_means(sub.id, &node_acc);
        }
        values
    }
}

fn side_scale(r: &Rect) -> f64 {
    (r.x1 - r.x0).abs().max((r.y1 - r.y0).abs()).max(1.0)
}

/// Which rectangle side a boundary face lies on. 2D faces are axis-aligned
/// edges so membership is unambiguous; 1D tips at a corner prefer Dirichlet
/// handling by being matched in the fixed order bottom, top, left, right at
/// the call site.
fn rect_side(rect: &Rect, face: &Face, dim: u8, tol: f64) -> Option<RectSide> {
    let [x, y] = face.center;
    let on = |a: f64, b: f64| (a - b).abs() <= tol;
    if dim == 2 {
        // An exterior edge has both endpoints on the same side.
        if on(y, rect.y0) && face.normal[1].abs() > 0.5 {
            return Some(RectSide::Bottom);
        }
        if on(y, rect.y1) && face.normal[1].abs() > 0.5 {
            return Some(RectSide::Top);
        }
        if on(x, rect.x0) && face.normal[0].abs() > 0.5 {
            return Some(RectSide::Left);
        }
        if on(x, rect.x1) && face.normal[0].abs() > 0.5 {
            return Some(RectSide::Right);
        }
        None
    } else {
        if on(y, rect.y0) {
            return Some(RectSide::Bottom);
        }
        if on(y, rect.y1) {
            return Some(RectSide::Top);
        }
        if on(x, rect.x0) {
            return Some(RectSide::Left);
        }
        if on(x, rect.x1) {
            return Some(RectSide::Right);
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RectSide {
    Bottom,
    Right,
    Top,
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryKind {
    Dirichlet,
    Neumann,
}

/// Affine boundary value `a + bx·x + cy·y`; covers constants and the linear
/// side profiles used by the stability studies.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryFunc {
    pub kind: BoundaryKind,
    pub a: f64,
    pub bx: f64,
    pub cy: f64,
}

impl BoundaryFunc {
    pub fn dirichlet(v: f64) -> Self {
        Self { kind: BoundaryKind::Dirichlet, a: v, bx: 0.0, cy: 0.0 }
    }

    pub fn dirichlet_linear(a: f64, bx: f64, cy: f64) -> Self {
        Self { kind: BoundaryKind::Dirichlet, a, bx, cy }
    }

    pub fn neumann(v: f64) -> Self {
        Self { kind: BoundaryKind::Neumann, a: v, bx: 0.0, cy: 0.0 }
    }

    pub fn eval(&self, p: [f64; 2]) -> f64 {
        self.a + self.bx * p[0] + self.cy * p[1]
    }
}

/// Exterior conditions for the four sides of a rectangular domain.
#[derive(Debug, Clone, Copy)]
pub struct BoundarySpec {
    pub bottom: BoundaryFunc,
    pub right: BoundaryFunc,
    pub top: BoundaryFunc,
    pub left: BoundaryFunc,
}

impl BoundarySpec {
    pub fn side(&self, s: RectSide) -> BoundaryFunc {
        match s {
            RectSide::Bottom => self.bottom,
            RectSide::Right => self.right,
            RectSide::Top => self.top,
            RectSide::Left => self.left,
        }
    }

    /// All sides sealed.
    pub fn sealed() -> Self {
        let n = BoundaryFunc::neumann(0.0);
        Self { bottom: n, right: n, top: n, left: n }
    }
}

/// Per-subdomain, per-face boundary data produced when tagging a mesh.
#[derive(Debug, Clone)]
pub struct BoundaryValues {
    pub dirichlet: Vec<BTreeMap<usize, f64>>,
    pub neumann: Vec<BTreeMap<usize, f64>>,
    /// Nodal companion to `dirichlet` for discretizations whose boundary
    /// unknowns live on nodes. A node shared by several Dirichlet faces
    /// carries the mean of their data, which agrees with pointwise
    /// evaluation for the affine profiles the builders emit.
    pub dirichlet_nodes: Vec<BTreeMap<usize, f64>>,
}

impl BoundaryValues {
    pub fn empty(n_subdomains: usize) -> Self {
        Self {
            dirichlet: vec![BTreeMap::new(); n_subdomains],
            neumann: vec![BTreeMap::new(); n_subdomains],
            dirichlet_nodes: vec![BTreeMap::new(); n_subdomains],
        }
    }

    /// Folds accumulated per-node sums into mean nodal values.
    pub(crate) fn set_nodal_means(&mut self, sub: usize, acc: &BTreeMap<usize, (f64, usize)>) {
        for (&n, &(sum, cnt)) in acc {
            self.dirichlet_nodes[sub].insert(n, sum / cnt as f64);
        }
    }
}

/// Total order on coordinates for deterministic sorting and for matching
/// geometrically coincident nodes across subdomains, which the splitting
/// pipeline copies bit-exactly. Monotone per coordinate for finite values.
pub(crate) fn coord_key(p: [f64; 2]) -> (u64, u64) {
    (f64_key(p[0]), f64_key(p[1]))
}

fn f64_key(v: f64) -> u64 {
    let bits = v.to_bits();
    if v >= 0.0 {
        bits ^ (1 << 63)
    } else {
        !bits
    }
}
