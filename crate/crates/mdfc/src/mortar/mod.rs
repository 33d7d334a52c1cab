//! Interface flux spaces.
//!
//! Every coupling between a subdomain and a side of its (d+1)-dimensional
//! neighbor carries an independent piecewise-constant flux grid on the
//! shared manifold. The unknowns are flux densities; positive values mean
//! flow leaving the higher-dimensional side and entering the lower one.
//!
//! All coupling operators derive from one stored overlap matrix B per side,
//! whose entry (m, k) is the integral of basis function k over mortar cell
//! m. Scaling rows by inverse mortar measures gives the averaging
//! projection onto the flux grid; the negated transpose injects integrated
//! fluxes back into the neighbor's space. Using a single B for both
//! directions makes the pair adjoint by construction, which keeps the
//! coupled system symmetric.

use crate::linalg::DenseMatrix;
use crate::mesh::{coord_key, FacePairing, InterfaceRef, MixedDimMesh, SubdomainGrid};

#[cfg(test)]
mod tests;

/// How a subdomain's unknowns look from an interface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterfaceBasis {
    /// One column per lower cell or higher face, piecewise constant.
    P0,
    /// One column per node along the interface chain, piecewise linear.
    P1,
    /// Single column pairing a point value with unit measure.
    Point,
}

/// A flux grid on one interface plus its couplings to both neighbors.
#[derive(Debug, Clone)]
pub struct MortarInterface {
    pub key: InterfaceRef,
    pub kappa_perp: f64,
    /// Arclength partition of the interface into flux cells; `[0, 1]`
    /// with unit measure for point interfaces.
    pub breaks: Vec<f64>,
    pub lower_basis: InterfaceBasis,
    pub higher_basis: InterfaceBasis,
    /// Overlap with the lower subdomain's volume basis.
    pub b_lower: DenseMatrix,
    /// Lower degree-of-freedom index per `b_lower` column: cell for P0,
    /// node for P1.
    pub lower_cols: Vec<usize>,
    /// Overlap with the higher subdomain's trace on this interface.
    pub b_higher: DenseMatrix,
    /// Higher trace slot per `b_higher` column: face for P0, node for P1,
    /// tip face (or tip node under P1) for point interfaces.
    pub higher_cols: Vec<usize>,
    /// Physical endpoints per flux cell, for output.
    pub segments: Vec<([f64; 2], [f64; 2])>,
}

impl MortarInterface {
    pub fn n_mortar(&self) -> usize {
        self.breaks.len() - 1
    }

    pub fn measures(&self) -> Vec<f64> {
        self.breaks.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Diagonal of the interface law: cell measure over the normal
    /// permeability.
    pub fn mass_perp(&self) -> Vec<f64> {
        self.measures().iter().map(|m| m / self.kappa_perp).collect()
    }

    /// Averaging projection from the lower volume basis onto the flux
    /// grid: B with rows scaled by inverse mortar measures.
    pub fn proj_to_mortar_lower(&self) -> DenseMatrix {
        scale_rows(&self.b_lower, &self.measures())
    }

    pub fn proj_to_mortar_higher(&self) -> DenseMatrix {
        scale_rows(&self.b_higher, &self.measures())
    }

    /// Injection of flux densities into the lower basis as integrated
    /// quantities; the sign encodes that positive flux enters the sink
    /// balance with a minus.
    pub fn inject_lower(&self) -> DenseMatrix {
        neg_transpose(&self.b_lower)
    }

    pub fn inject_higher(&self) -> DenseMatrix {
        neg_transpose(&self.b_higher)
    }
}

fn scale_rows(b: &DenseMatrix, measures: &[f64]) -> DenseMatrix {
    let mut out = b.clone();
    for m in 0..out.n_rows() {
        let meas = measures[m];
        for k in 0..out.n_cols() {
            out.set(m, k, out.get(m, k) / meas);
        }
    }
    out
}

fn neg_transpose(b: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(b.n_cols(), b.n_rows());
    for r in 0..b.n_rows() {
        for c in 0..b.n_cols() {
            out.set(c, r, -b.get(r, c));
        }
    }
    out
}

/// Number of flux cells for an interface covering `n_lower` cells.
pub fn mortar_count(ratio: f64, n_lower: usize) -> usize {
    ((ratio * n_lower as f64).round() as usize).max(1)
}

/// Builds the flux grid and both overlap matrices for one face pairing.
pub fn build_interface(
    mesh: &MixedDimMesh,
    pairing: &FacePairing,
    lower_basis: InterfaceBasis,
    higher_basis: InterfaceBasis,
    ratio: f64,
    kappa_perp: f64,
) -> MortarInterface {
    let key = pairing.key;
    let lower = &mesh.subdomains[key.lower];
    let higher = &mesh.subdomains[key.higher];

    if lower.dim == 0 {
        // A point interface: one flux value of unit measure against the
        // point pressure below and the branch-tip trace above.
        let (_, tip_face) = pairing.pairs[0];
        let higher_col = match higher_basis {
            InterfaceBasis::P1 => higher.faces[tip_face].nodes[0],
            _ => tip_face,
        };
        let pt = lower.cell_centers[0];
        return MortarInterface {
            key,
            kappa_perp,
            breaks: vec![0.0, 1.0],
            lower_basis: InterfaceBasis::Point,
            higher_basis,
            b_lower: DenseMatrix::from_rows(&[vec![1.0]]),
            lower_cols: vec![0],
            b_higher: DenseMatrix::from_rows(&[vec![1.0]]),
            higher_cols: vec![higher_col],
            segments: vec![(pt, pt)],
        };
    }

    // Arclength parametrization along the covered lower cells.
    let cells: Vec<usize> = pairing.pairs.iter().map(|&(c, _)| c).collect();
    let mut lower_breaks = vec![0.0];
    for &c in &cells {
        lower_breaks.push(lower_breaks.last().unwrap() + lower.cell_volumes[c]);
    }
    let total = *lower_breaks.last().unwrap();

    // Lower chain nodes at their arclength positions.
    let mut chain_nodes: Vec<usize> = vec![lower.cells[cells[0]][0]];
    for &c in &cells {
        chain_nodes.push(lower.cells[c][1]);
    }
    let node_s: std::collections::BTreeMap<(u64, u64), f64> = chain_nodes
        .iter()
        .zip(&lower_breaks)
        .map(|(&n, &s)| (coord_key(lower.nodes[n]), s))
        .collect();

    // Higher faces in chain order with their spans read off the lower
    // parametrization; endpoints are lattice nodes copied bit-exactly.
    let mut faces: Vec<usize> = Vec::new();
    for &(_, f) in &pairing.pairs {
        if faces.last() != Some(&f) {
            faces.push(f);
        }
    }
    let face_span = |f: usize| -> (f64, f64) {
        let fc = &higher.faces[f];
        let sa = node_s[&coord_key(higher.nodes[fc.nodes[0]])];
        let sb = node_s[&coord_key(higher.nodes[fc.nodes[1]])];
        if sa <= sb {
            (sa, sb)
        } else {
            (sb, sa)
        }
    };
    let mut face_breaks = vec![face_span(faces[0]).0];
    for &f in &faces {
        let (lo, hi) = face_span(f);
        assert_eq!(lo, *face_breaks.last().unwrap(), "higher faces tile the interface");
        face_breaks.push(hi);
    }
    assert_eq!(*face_breaks.last().unwrap(), total);

    // Uniform flux cells, endpoints pinned exactly.
    let n_m = mortar_count(ratio, cells.len());
    let mut breaks: Vec<f64> = (0..=n_m).map(|k| total * k as f64 / n_m as f64).collect();
    breaks[0] = 0.0;
    breaks[n_m] = total;

    let (b_lower, lower_cols) = match lower_basis {
        InterfaceBasis::P0 => (p0_overlap(&breaks, &lower_breaks), cells.clone()),
        InterfaceBasis::P1 => (p1_overlap(&breaks, &lower_breaks), chain_nodes.clone()),
        InterfaceBasis::Point => unreachable!("point basis on a 1d interface"),
    };
    let (b_higher, higher_cols) = match higher_basis {
        InterfaceBasis::P0 => (p0_overlap(&breaks, &face_breaks), faces.clone()),
        InterfaceBasis::P1 => {
            // Nodes along the chain of higher faces, ordered by arclength.
            let mut hnodes: Vec<(u64, usize)> = Vec::new();
            for &f in &faces {
                for &n in &higher.faces[f].nodes {
                    let s = node_s[&coord_key(higher.nodes[n])];
                    if !hnodes.iter().any(|&(_, seen)| seen == n) {
                        hnodes.push((s.to_bits(), n));
                    }
                }
            }
            hnodes.sort_unstable_by_key(|&(s, _)| s);
            let positions: Vec<f64> = hnodes.iter().map(|&(s, _)| f64::from_bits(s)).collect();
            let cols: Vec<usize> = hnodes.iter().map(|&(_, n)| n).collect();
            assert_eq!(positions.len(), faces.len() + 1, "chain nodes are shared");
            (p1_overlap(&breaks, &positions), cols)
        }
        InterfaceBasis::Point => unreachable!("point trace on a 1d interface"),
    };

    let segments = breaks
        .windows(2)
        .map(|w| (point_at(lower, &cells, &lower_breaks, w[0]), point_at(lower, &cells, &lower_breaks, w[1])))
        .collect();

    MortarInterface {
        key,
        kappa_perp,
        breaks,
        lower_basis,
        higher_basis,
        b_lower,
        lower_cols,
        b_higher,
        higher_cols,
        segments,
    }
}

/// Exact overlap of the flux cells with a piecewise-constant partition:
/// entry (m, k) is the length of flux cell m inside partition cell k.
pub fn p0_overlap(mortar: &[f64], cells: &[f64]) -> DenseMatrix {
    let mut b = DenseMatrix::zeros(mortar.len() - 1, cells.len() - 1);
    for m in 0..mortar.len() - 1 {
        for k in 0..cells.len() - 1 {
            let lo = mortar[m].max(cells[k]);
            let hi = mortar[m + 1].min(cells[k + 1]);
            if hi > lo {
                b.set(m, k, hi - lo);
            }
        }
    }
    b
}

/// Exact overlap of the flux cells with hat functions at `nodes`: entry
/// (m, j) is the integral of hat j over flux cell m. The integrand is
/// linear between merged breakpoints, so the midpoint rule is exact there;
/// midpoints also avoid evaluating hats at their kinks.
pub fn p1_overlap(mortar: &[f64], nodes: &[f64]) -> DenseMatrix {
    let total = *nodes.last().unwrap() - nodes[0];
    let tol = 1e-12 * total.max(1.0);
    let mut pts: Vec<f64> = mortar.iter().chain(nodes.iter()).copied().collect();
    pts.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup_by(|a, b| (*a - *b).abs() <= tol);

    let hat = |j: usize, x: f64| -> f64 {
        let xj = nodes[j];
        if j > 0 && x <= xj {
            let xl = nodes[j - 1];
            if x <= xl {
                0.0
            } else {
                (x - xl) / (xj - xl)
            }
        } else if j + 1 < nodes.len() && x >= xj {
            let xr = nodes[j + 1];
            if x >= xr {
                0.0
            } else {
                (xr - x) / (xr - xj)
            }
        } else if x == xj {
            1.0
        } else {
            0.0
        }
    };

    let mut b = DenseMatrix::zeros(mortar.len() - 1, nodes.len());
    for w in pts.windows(2) {
        let (x0, x1) = (w[0], w[1]);
        if x1 - x0 <= tol {
            continue;
        }
        let mid = 0.5 * (x0 + x1);
        let Some(m) = find_cell(mortar, mid) else { continue };
        for j in 0..nodes.len() {
            let v = hat(j, mid) * (x1 - x0);
            if v != 0.0 {
                b.add_to(m, j, v);
            }
        }
    }
    b
}

fn find_cell(breaks: &[f64], x: f64) -> Option<usize> {
    if x < breaks[0] || x > *breaks.last().unwrap() {
        return None;
    }
    let mut k = match breaks.binary_search_by(|b| b.partial_cmp(&x).unwrap()) {
        Ok(i) => i,
        Err(i) => i.saturating_sub(1),
    };
    k = k.min(breaks.len() - 2);
    Some(k)
}

fn point_at(lower: &SubdomainGrid, cells: &[usize], breaks: &[f64], s: f64) -> [f64; 2] {
    let k = find_cell(breaks, s).unwrap_or(0);
    let cell = &lower.cells[cells[k]];
    let (a, b) = (lower.nodes[cell[0]], lower.nodes[cell[1]]);
    let len = breaks[k + 1] - breaks[k];
    let t = if len > 0.0 { ((s - breaks[k]) / len).clamp(0.0, 1.0) } else { 0.0 };
    [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
}

/// L2 error of a piecewise-constant profile against a reference profile
/// given on its own partition of the same interval.
///
/// The reference is first averaged (measure-weighted P0 projection) onto the
/// profile's cells, then the squared mismatch is integrated over those
/// cells. Averaging first means sub-cell redistribution inside the reference
/// is invisible: the profile is judged on how well it captures the
/// reference's cell means, which is everything a piecewise-constant profile
/// at that resolution can represent. The roles are not symmetric; the
/// reference goes second.
pub fn p0_l2_error(breaks: &[f64], vals: &[f64], breaks_ref: &[f64], vals_ref: &[f64]) -> f64 {
    let la = *breaks.last().unwrap() - breaks[0];
    let lb = *breaks_ref.last().unwrap() - breaks_ref[0];
    assert!(
        (la - lb).abs() <= 1e-9 * la.abs().max(1.0),
        "profiles cover different lengths: {la} vs {lb}"
    );
    let mut acc = 0.0;
    let mut k = 0usize;
    for (c, &v) in vals.iter().enumerate() {
        let (lo, hi) = (breaks[c], breaks[c + 1]);
        if hi <= lo {
            continue;
        }
        while k + 1 < vals_ref.len() && breaks_ref[k + 1] <= lo {
            k += 1;
        }
        // One reference cell covering the whole span averages to itself;
        // taking it directly keeps comparisons on identical grids exact.
        let avg = if breaks_ref[k] <= lo && hi <= breaks_ref[k + 1] {
            vals_ref[k]
        } else {
            let mut integral = 0.0;
            let mut kk = k;
            loop {
                let a = breaks_ref[kk].max(lo);
                let b = breaks_ref[kk + 1].min(hi);
                if b > a {
                    integral += (b - a) * vals_ref[kk];
                }
                if kk + 1 >= vals_ref.len() || breaks_ref[kk + 1] >= hi {
                    break;
                }
                kk += 1;
            }
            integral / (hi - lo)
        };
        let d = v - avg;
        acc += (hi - lo) * d * d;
    }
    acc.sqrt()
}
