//! Structural and geometric mesh checks.
//!
//! `validate_mesh` collects problems instead of failing fast so a broken
//! import can be diagnosed in one pass. An empty report means the mesh
//! satisfies every invariant the discretizations rely on.

use std::collections::BTreeMap;
use std::fmt;

use super::*;

#[derive(Debug)]
pub enum ValidationIssue {
    NonPositiveVolume { subdomain: usize, cell: usize, volume: f64 },
    BrokenFace { subdomain: usize, face: usize, reason: String },
    /// Divergence-theorem area of the subdomain boundary disagrees with the
    /// summed cell volumes, indicating bad normals or volumes.
    MeasureMismatch { subdomain: usize, boundary: f64, cells: f64 },
    PairingMismatch { reason: String },
    /// Interface-tagged face not referenced by any pairing.
    DetachedInterfaceFace { subdomain: usize, face: usize },
    /// Lower and higher grids do not coincide geometrically.
    GeometryMismatch { interface: InterfaceRef, reason: String },
    /// A connected block of coupled subdomains has no Dirichlet face; its
    /// pressure is only determined up to a constant.
    NoDirichletAnchor { subdomain: usize },
}

impl fmt::Display for ValidationIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        use ValidationIssue::*;
        match self {
            NonPositiveVolume { subdomain, cell, volume } => {
                write!(f, "subdomain {subdomain} cell {cell}: volume {volume} not positive")
            }
            BrokenFace { subdomain, face, reason } => {
                write!(f, "subdomain {subdomain} face {face}: {reason}")
            }
            MeasureMismatch { subdomain, boundary, cells } => write!(
                f,
                "subdomain {subdomain}: boundary integral {boundary} vs cell volumes {cells}"
            ),
            PairingMismatch { reason } => write!(f, "pairing: {reason}"),
            DetachedInterfaceFace { subdomain, face } => {
                write!(f, "subdomain {subdomain} face {face}: interface face not paired")
            }
            GeometryMismatch { interface, reason } => write!(
                f,
                "interface {}-{} ({}): {reason}",
                interface.lower,
                interface.higher,
                interface.side.label()
            ),
            NoDirichletAnchor { subdomain } => write!(
                f,
                "coupled block containing subdomain {subdomain} has no Dirichlet boundary"
            ),
        }
    }
}

#[derive(Debug, Default)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.issues.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return writeln!(f, "mesh ok");
        }
        for issue in &self.issues {
            writeln!(f, "{issue}")?;
        }
        Ok(())
    }
}

pub fn validate_mesh(mesh: &MixedDimMesh) -> ValidationReport {
    let mut report = ValidationReport::default();
    let geom_tol = 1e-9;

    for (sid, sub) in mesh.subdomains.iter().enumerate() {
        if sub.id != sid {
            report.issues.push(ValidationIssue::PairingMismatch {
                reason: format!("subdomain at position {sid} has id {}", sub.id),
            });
        }
        for (c, &v) in sub.cell_volumes.iter().enumerate() {
            if !(v > 0.0) {
                report
                    .issues
                    .push(ValidationIssue::NonPositiveVolume { subdomain: sid, cell: c, volume: v });
            }
        }
        let mut boundary_integral = 0.0;
        for (fi, face) in sub.faces.iter().enumerate() {
            let mut broken = |reason: String| {
                report.issues.push(ValidationIssue::BrokenFace {
                    subdomain: sid,
                    face: fi,
                    reason,
                });
            };
            let nrm = face.normal[0].hypot(face.normal[1]);
            if (nrm - 1.0).abs() > 1e-12 {
                broken(format!("normal has length {nrm}"));
            }
            if !(face.area > 0.0) {
                broken(format!("area {} not positive", face.area));
            }
            if face.cells.0 >= sub.cells.len()
                || face.cells.1.is_some_and(|c| c >= sub.cells.len())
            {
                broken("adjacent cell out of range".into());
            }
            if face.cells.1 == Some(face.cells.0) {
                broken("face adjacent to one cell twice".into());
            }
            if face.nodes.iter().any(|&n| n >= sub.nodes.len()) {
                broken("node out of range".into());
            }
            let interior = face.cells.1.is_some();
            if interior != (face.tag == FaceTag::Interior) {
                broken("interior tag disagrees with adjacency".into());
            }
            if sub.dim == 2 && !interior {
                boundary_integral += 0.5
                    * face.area
                    * (face.center[0] * face.normal[0] + face.center[1] * face.normal[1]);
            }
        }
        if sub.dim == 2 {
            let cells: f64 = sub.measure();
            if (boundary_integral - cells).abs() > geom_tol * cells.max(1.0) {
                report.issues.push(ValidationIssue::MeasureMismatch {
                    subdomain: sid,
                    boundary: boundary_integral,
                    cells,
                });
            }
        }
    }

    // Every interface face must be claimed by pairings; every pairing must
    // reference interface faces of matching key and cover the lower cells
    // exactly once per side.
    let mut face_claims: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut lower_cover: BTreeMap<(usize, Side), Vec<usize>> = BTreeMap::new();
    for p in &mesh.pairings {
        let err = |reason: String| ValidationIssue::PairingMismatch { reason };
        let (lo, hi) = (p.key.lower, p.key.higher);
        if lo >= mesh.subdomains.len() || hi >= mesh.subdomains.len() {
            report.issues.push(err(format!("pairing {lo}-{hi}: subdomain out of range")));
            continue;
        }
        let (lsub, hsub) = (&mesh.subdomains[lo], &mesh.subdomains[hi]);
        if lsub.dim + 1 != hsub.dim {
            report.issues.push(err(format!(
                "pairing {lo}-{hi}: dimensions {} and {}",
                lsub.dim, hsub.dim
            )));
        }
        if p.pairs.is_empty() {
            report.issues.push(err(format!("pairing {lo}-{hi}: empty")));
        }
        for &(cell, face) in &p.pairs {
            if cell >= lsub.cells.len() {
                report.issues.push(err(format!("pairing {lo}-{hi}: lower cell {cell} invalid")));
                continue;
            }
            if face >= hsub.faces.len() {
                report.issues.push(err(format!("pairing {lo}-{hi}: higher face {face} invalid")));
                continue;
            }
            match hsub.faces[face].tag {
                FaceTag::Interface { lower, side } if lower == lo && side == p.key.side => {}
                ref t => report.issues.push(err(format!(
                    "pairing {lo}-{hi}: face {face} tagged {t:?}"
                ))),
            }
            *face_claims.entry((hi, face)).or_insert(0) += 1;
            lower_cover.entry((lo, p.key.side)).or_default().push(cell);

            // Geometric coincidence.
            let fc = &hsub.faces[face];
            let cc = lsub.cell_centers[cell];
            let off = if lsub.dim == 0 {
                ((cc[0] - fc.center[0]).powi(2) + (cc[1] - fc.center[1]).powi(2)).sqrt()
            } else {
                let a = hsub.nodes[fc.nodes[0]];
                let b = hsub.nodes[fc.nodes[1]];
                point_segment_distance(cc, a, b)
            };
            if off > geom_tol {
                report.issues.push(ValidationIssue::GeometryMismatch {
                    interface: p.key,
                    reason: format!("lower cell {cell} lies {off:.3e} away from higher face"),
                });
            }
        }
    }
    for (sid, sub) in mesh.subdomains.iter().enumerate() {
        for (fi, face) in sub.faces.iter().enumerate() {
            if matches!(face.tag, FaceTag::Interface { .. })
                && !face_claims.contains_key(&(sid, fi))
            {
                report.issues.push(ValidationIssue::DetachedInterfaceFace {
                    subdomain: sid,
                    face: fi,
                });
            }
        }
    }
    for ((lo, side), mut cells) in lower_cover {
        let n = mesh.subdomains[lo].cells.len();
        cells.sort_unstable();
        let expected: Vec<usize> = if mesh.subdomains[lo].dim == 0 {
            vec![0; cells.len()] // one claim per incident branch end
        } else {
            (0..n).collect()
        };
        if cells != expected {
            report.issues.push(ValidationIssue::PairingMismatch {
                reason: format!(
                    "subdomain {lo} side {}: cells covered {:?}, expected {:?}",
                    side.label(),
                    cells,
                    expected
                ),
            });
        }
    }

    // Up/down neighbor lists must mirror the pairings.
    let mut up = vec![Vec::new(); mesh.subdomains.len()];
    let mut down = vec![Vec::new(); mesh.subdomains.len()];
    for p in &mesh.pairings {
        up[p.key.lower].push(p.key.higher);
        down[p.key.higher].push(p.key.lower);
    }
    for list in up.iter_mut().chain(down.iter_mut()) {
        list.sort_unstable();
        list.dedup();
    }
    if up != mesh.up_neighbors || down != mesh.down_neighbors {
        report.issues.push(ValidationIssue::PairingMismatch {
            reason: "neighbor lists disagree with pairings".into(),
        });
    }

    // Pressure is determined only where each coupled block sees a
    // Dirichlet face somewhere.
    let n = mesh.subdomains.len();
    let mut comp: Vec<usize> = (0..n).collect();
    fn find(comp: &mut [usize], mut i: usize) -> usize {
        while comp[i] != i {
            comp[i] = comp[comp[i]];
            i = comp[i];
        }
        i
    }
    for p in &mesh.pairings {
        let (a, b) = (find(&mut comp, p.key.lower), find(&mut comp, p.key.higher));
        if a != b {
            comp[a.max(b)] = a.min(b);
        }
    }
    let mut anchored: BTreeMap<usize, bool> = BTreeMap::new();
    for (sid, sub) in mesh.subdomains.iter().enumerate() {
        let root = find(&mut comp, sid);
        *anchored.entry(root).or_insert(false) |= sub.has_dirichlet();
    }
    for (&root, &ok) in &anchored {
        if !ok {
            report.issues.push(ValidationIssue::NoDirichletAnchor { subdomain: root });
        }
    }

    report
}

fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 { ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0) } else { 0.0 };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1]];
    ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt()
}
