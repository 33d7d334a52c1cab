use proptest::prelude::*;

use super::*;
use crate::mesh::{build_structured_mesh, Fracture, GridKind, Rect, Side};

fn cut_mesh(nx: usize, kind: GridKind, refine: usize) -> MixedDimMesh {
    build_structured_mesh(
        Rect::UNIT,
        nx,
        nx,
        kind,
        &[Fracture { points: vec![[0.5, 0.0], [0.5, 1.0]], group: "f".into() }],
        refine,
    )
    .unwrap()
}

fn ulps_apart(a: f64, b: f64) -> u64 {
    if a == b {
        return 0;
    }
    if a.signum() != b.signum() {
        return u64::MAX;
    }
    a.to_bits().abs_diff(b.to_bits())
}

#[test]
fn one_mortar_cell_over_full_cut() {
    let mesh = cut_mesh(2, GridKind::CartesianQuads, 1);
    let pairing = mesh.pairing(InterfaceRef { lower: 2, higher: 0, side: Side::Plus }).unwrap();
    let mi = build_interface(&mesh, pairing, InterfaceBasis::P0, InterfaceBasis::P0, 0.5, 1e4);

    assert_eq!(mi.n_mortar(), 1);
    assert_eq!(mi.measures(), vec![1.0]);
    assert_eq!(mi.mass_perp(), vec![1e-4]);
    assert_eq!(mi.b_lower.row(0), &[0.5, 0.5]);
    assert_eq!(mi.b_higher.row(0), &[0.5, 0.5]);
    assert_eq!(mi.lower_cols, vec![0, 1]);

    // The flux cell spans the whole fracture.
    let (a, b) = mi.segments[0];
    assert_eq!(a, [0.5, 0.0]);
    assert_eq!(b, [0.5, 1.0]);

    // Averaging projection preserves constants.
    let proj = mi.proj_to_mortar_lower();
    assert_eq!(proj.row(0).iter().sum::<f64>(), 1.0);
}

#[test]
fn quarter_cell_interface_mass() {
    let mesh = build_structured_mesh(
        Rect::UNIT,
        4,
        4,
        GridKind::CartesianQuads,
        &[Fracture { points: vec![[0.25, 0.5], [0.75, 0.5]], group: "f".into() }],
        1,
    )
    .unwrap();
    let pairing = mesh.pairing(InterfaceRef { lower: 1, higher: 0, side: Side::Plus }).unwrap();
    let mi = build_interface(&mesh, pairing, InterfaceBasis::P0, InterfaceBasis::P0, 1.0, 1e4);

    assert_eq!(mi.n_mortar(), 2);
    assert_eq!(mi.mass_perp(), vec![2.5e-5, 2.5e-5]);
    assert_eq!(mi.b_lower.get(0, 0), 0.25);
    assert_eq!(mi.b_lower.get(0, 1), 0.0);
    assert_eq!(mi.b_lower.get(1, 1), 0.25);
}

#[test]
fn injection_is_negated_transpose_bitwise() {
    let mesh = cut_mesh(4, GridKind::CartesianQuads, 1);
    let pairing = mesh.pairing(InterfaceRef { lower: 2, higher: 1, side: Side::Minus }).unwrap();
    let mi = build_interface(&mesh, pairing, InterfaceBasis::P0, InterfaceBasis::P0, 0.5, 2.0);

    for (b, inj) in [(&mi.b_lower, mi.inject_lower()), (&mi.b_higher, mi.inject_higher())] {
        assert_eq!(inj.n_rows(), b.n_cols());
        for r in 0..b.n_rows() {
            for c in 0..b.n_cols() {
                assert_eq!(inj.get(c, r).to_bits(), (-b.get(r, c)).to_bits());
            }
        }
    }
}

#[test]
fn projection_pair_is_adjoint_within_two_ulp() {
    let mesh = cut_mesh(8, GridKind::CartesianQuads, 2);
    let pairing = mesh.pairing(InterfaceRef { lower: 2, higher: 0, side: Side::Plus }).unwrap();
    let mi = build_interface(&mesh, pairing, InterfaceBasis::P0, InterfaceBasis::P0, 0.4, 3.0);

    // Scaling the averaging projection back by the cell measures recovers
    // the stored overlaps up to rounding of (x / m) * m.
    let measures = mi.measures();
    for (b, proj) in [
        (&mi.b_lower, mi.proj_to_mortar_lower()),
        (&mi.b_higher, mi.proj_to_mortar_higher()),
    ] {
        for m in 0..b.n_rows() {
            for k in 0..b.n_cols() {
                let round_trip = proj.get(m, k) * measures[m];
                assert!(
                    ulps_apart(round_trip, b.get(m, k)) <= 2,
                    "entry ({m},{k}): {round_trip} vs {}",
                    b.get(m, k)
                );
            }
        }
    }
}

#[test]
fn hat_overlap_frozen_values() {
    // A hat of support 0.5 inside a single flux cell integrates to 0.25;
    // the half hats at the ends give 0.125.
    let b = p1_overlap(&[0.0, 1.0], &[0.0, 0.25, 0.5]);
    assert!((b.get(0, 0) - 0.125).abs() < 1e-15);
    assert!((b.get(0, 1) - 0.25).abs() < 1e-15);
    assert!((b.get(0, 2) - 0.125).abs() < 1e-15);

    // Hats partition unity, so row sums equal the flux cell measures.
    let b = p1_overlap(&[0.0, 0.25, 0.5], &[0.0, 0.25, 0.5]);
    for m in 0..2 {
        let sum: f64 = (0..3).map(|j| b.get(m, j)).sum();
        assert!((sum - 0.25).abs() < 1e-15);
    }
}

#[test]
fn half_cell_mortar_against_two_faces() {
    let b = p0_overlap(&[0.0, 0.5], &[0.0, 0.25, 0.5]);
    assert_eq!(b.row(0), &[0.25, 0.25]);
    let inj = neg_transpose(&b);
    assert_eq!(inj.get(0, 0), -0.25);
    assert_eq!(inj.get(1, 0), -0.25);
}

#[test]
fn point_interface_has_unit_measure() {
    let mesh = build_structured_mesh(
        Rect::UNIT,
        4,
        4,
        GridKind::CartesianQuads,
        &[
            Fracture { points: vec![[0.5, 0.25], [0.5, 0.75]], group: "a".into() },
            Fracture { points: vec![[0.25, 0.5], [0.75, 0.5]], group: "b".into() },
        ],
        1,
    )
    .unwrap();
    let pairing = mesh.pairing(InterfaceRef { lower: 5, higher: 1, side: Side::Plus }).unwrap();
    let mi = build_interface(&mesh, pairing, InterfaceBasis::Point, InterfaceBasis::P0, 0.5, 2.0);

    assert_eq!(mi.n_mortar(), 1);
    assert_eq!(mi.measures(), vec![1.0]);
    assert_eq!(mi.mass_perp(), vec![0.5]);
    assert_eq!(mi.b_lower.row(0), &[1.0]);
    assert_eq!(mi.b_higher.row(0), &[1.0]);
    assert_eq!(mi.lower_cols, vec![0]);
    let (_, face) = pairing.pairs[0];
    assert_eq!(mi.higher_cols, vec![face]);
    let (a, b) = mi.segments[0];
    assert_eq!(a, b);
}

#[test]
fn refined_branch_spreads_over_coarse_faces() {
    let mesh = cut_mesh(2, GridKind::CartesianQuads, 3);
    let pairing = mesh.pairing(InterfaceRef { lower: 2, higher: 0, side: Side::Plus }).unwrap();
    let mi = build_interface(&mesh, pairing, InterfaceBasis::P0, InterfaceBasis::P0, 0.5, 1.0);

    // Six lower cells, ratio one half: three flux cells against two faces.
    assert_eq!(mi.n_mortar(), 3);
    assert_eq!(mi.b_higher.n_cols(), 2);
    let expect = [[1.0 / 3.0, 0.0], [1.0 / 6.0, 1.0 / 6.0], [0.0, 1.0 / 3.0]];
    for m in 0..3 {
        for f in 0..2 {
            assert!((mi.b_higher.get(m, f) - expect[m][f]).abs() < 1e-12);
        }
    }
    // Both overlaps resolve each flux cell completely.
    let measures = mi.measures();
    for (m, &meas) in measures.iter().enumerate() {
        let low: f64 = (0..mi.b_lower.n_cols()).map(|k| mi.b_lower.get(m, k)).sum();
        let high: f64 = (0..2).map(|f| mi.b_higher.get(m, f)).sum();
        assert!((low - meas).abs() < 1e-12);
        assert!((high - meas).abs() < 1e-12);
    }
}

#[test]
fn nodal_trace_along_triangle_side() {
    let mesh = cut_mesh(4, GridKind::StructuredTriangles, 1);
    let pairing = mesh.pairing(InterfaceRef { lower: 2, higher: 0, side: Side::Plus }).unwrap();
    let mi = build_interface(&mesh, pairing, InterfaceBasis::P0, InterfaceBasis::P1, 1.0, 1.0);

    assert_eq!(mi.b_higher.n_cols(), 5);
    let higher = &mesh.subdomains[0];
    let mut ys = Vec::new();
    for &n in &mi.higher_cols {
        assert_eq!(higher.nodes[n][0], 0.5);
        ys.push(higher.nodes[n][1]);
    }
    assert!(ys.windows(2).all(|w| w[0] < w[1]));

    // Interior hats integrate to the grid spacing, end hats to half.
    let col_sum = |j: usize| -> f64 { (0..mi.n_mortar()).map(|m| mi.b_higher.get(m, j)).sum() };
    assert!((col_sum(0) - 0.125).abs() < 1e-12);
    assert!((col_sum(2) - 0.25).abs() < 1e-12);
    assert!((col_sum(4) - 0.125).abs() < 1e-12);
}

#[test]
fn l2_error_matches_hand_integrals() {
    // Constant reference averaged onto halves stays constant.
    let d = p0_l2_error(&[0.0, 0.5, 1.0], &[1.0, 0.0], &[0.0, 1.0], &[0.5]);
    assert!((d - 0.5).abs() < 1e-14);

    // Identical grids and values compare bitwise to zero.
    let d = p0_l2_error(&[0.0, 0.25, 1.0], &[2.0, -1.0], &[0.0, 0.25, 1.0], &[2.0, -1.0]);
    assert_eq!(d, 0.0);

    let c = 0.75;
    let d = p0_l2_error(&[0.0, 2.0], &[c], &[0.0, 1.0, 2.0], &[0.0, 0.0]);
    assert!((d - c * 2.0_f64.sqrt()).abs() < 1e-14);

    // The roles are asymmetric: a coarse profile holding the reference's
    // mean is exact, while the swapped comparison integrates the wiggle.
    let d = p0_l2_error(&[0.0, 2.0], &[0.5], &[0.0, 1.0, 2.0], &[1.0, 0.0]);
    assert_eq!(d, 0.0);
    let d = p0_l2_error(&[0.0, 1.0, 2.0], &[1.0, 0.0], &[0.0, 2.0], &[0.5]);
    assert!((d - 0.5_f64.sqrt()).abs() < 1e-14);

    // Misaligned partitions: profile thirds against reference halves on
    // [0, 3]; the middle reference break falls inside the middle cell.
    // Reference cell means over the thirds: 6, (0.5*6 + 0.5*(-3)) = 1.5, -3.
    let d = p0_l2_error(&[0.0, 1.0, 2.0, 3.0], &[6.0, 1.0, -3.0], &[0.0, 1.5, 3.0], &[6.0, -3.0]);
    let expect = (1.0 * (1.0 - 1.5_f64).powi(2)).sqrt();
    assert!((d - expect).abs() < 1e-14);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Overlap rows resolve every flux cell and columns resolve every basis
    /// function, for arbitrary partitions of the same interval.
    #[test]
    fn overlaps_conserve_measure(
        lens in proptest::collection::vec(0.05f64..1.0, 1..8),
        n_mortar in 1usize..6,
    ) {
        let mut cells = vec![0.0];
        for l in &lens {
            cells.push(cells.last().unwrap() + l);
        }
        let total = *cells.last().unwrap();
        let mortar: Vec<f64> =
            (0..=n_mortar).map(|k| total * k as f64 / n_mortar as f64).collect();

        let b0 = p0_overlap(&mortar, &cells);
        let b1 = p1_overlap(&mortar, &cells);
        for m in 0..n_mortar {
            let meas = mortar[m + 1] - mortar[m];
            let s0: f64 = (0..lens.len()).map(|k| b0.get(m, k)).sum();
            let s1: f64 = (0..cells.len()).map(|j| b1.get(m, j)).sum();
            prop_assert!((s0 - meas).abs() < 1e-12 * total);
            prop_assert!((s1 - meas).abs() < 1e-12 * total);
        }
        for (k, l) in lens.iter().enumerate() {
            let c0: f64 = (0..n_mortar).map(|m| b0.get(m, k)).sum();
            prop_assert!((c0 - l).abs() < 1e-12 * total);
        }
        // Hat integrals: half the support length.
        for j in 0..cells.len() {
            let support = cells[(j + 1).min(lens.len())] - cells[j.saturating_sub(1)];
            let c1: f64 = (0..n_mortar).map(|m| b1.get(m, j)).sum();
            prop_assert!((c1 - 0.5 * support).abs() < 1e-12 * total);
        }
    }
}
