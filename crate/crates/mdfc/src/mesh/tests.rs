use proptest::prelude::*;

use super::*;

fn frac(points: &[[f64; 2]], group: &str) -> Fracture {
    Fracture { points: points.to_vec(), group: group.into() }
}

fn squares(nx: usize, fractures: &[Fracture]) -> MixedDimMesh {
    build_structured_mesh(Rect::UNIT, nx, nx, GridKind::CartesianQuads, fractures, 1).unwrap()
}

fn counts(mesh: &MixedDimMesh) -> (usize, usize, usize) {
    let c = |d: u8| mesh.subdomains.iter().filter(|s| s.dim == d).count();
    (c(2), c(1), c(0))
}

/// The two conductive fractures crossing at (0.5, 0.75), the corner pair
/// isolating the lower-right block, and the two half-immersed blockers.
/// All vertices sit on the 1/8 lattice so any resolution divisible by 8
/// resolves them.
pub(super) fn benchmark_fractures() -> Vec<Fracture> {
    vec![
        frac(&[[0.5, 0.5], [0.5, 0.875]], "conductive"),
        frac(&[[0.25, 0.75], [0.75, 0.75]], "conductive"),
        frac(&[[0.75, 0.0], [0.75, 0.25], [1.0, 0.25]], "conductive"),
        frac(&[[0.0, 0.5], [0.375, 0.5]], "blocking"),
        frac(&[[0.625, 0.5], [1.0, 0.5]], "blocking"),
    ]
}

pub(super) fn flow_boundary() -> BoundarySpec {
    BoundarySpec {
        bottom: BoundaryFunc::dirichlet(0.0),
        top: BoundaryFunc::dirichlet(1.0),
        left: BoundaryFunc::neumann(0.0),
        right: BoundaryFunc::neumann(0.0),
    }
}

#[test]
fn vertical_cut_splits_square() {
    let mesh = squares(2, &[frac(&[[0.5, 0.0], [0.5, 1.0]], "f")]);
    assert_eq!(counts(&mesh), (2, 1, 0));
    for sub in &mesh.subdomains {
        match sub.dim {
            2 => assert_eq!(sub.n_cells(), 2),
            1 => {
                assert_eq!(sub.n_cells(), 2);
                assert!((sub.measure() - 1.0).abs() < 1e-12);
            }
            _ => unreachable!(),
        }
    }
    assert!((mesh.total_volume(2) - 1.0).abs() < 1e-12);

    // Traversal runs upward from (0.5, 0), so the plus side (left of the
    // direction of travel) is the x < 0.5 component, which sorts first.
    assert_eq!(mesh.pairings.len(), 2);
    let plus = mesh.pairing(InterfaceRef { lower: 2, higher: 0, side: Side::Plus });
    let minus = mesh.pairing(InterfaceRef { lower: 2, higher: 1, side: Side::Minus });
    assert_eq!(plus.unwrap().pairs.len(), 2);
    assert_eq!(minus.unwrap().pairs.len(), 2);
    let left = &mesh.subdomains[0];
    assert!(left.cell_centers.iter().all(|c| c[0] < 0.5));

    assert_eq!(mesh.up_neighbors[2], vec![0, 1]);
    assert_eq!(mesh.down_neighbors[0], vec![2]);
}

#[test]
fn immersed_tip_keeps_matrix_connected() {
    let mesh = squares(4, &[frac(&[[0.25, 0.5], [0.75, 0.5]], "f")]);
    assert_eq!(counts(&mesh), (1, 1, 0));
    let matrix = &mesh.subdomains[0];
    assert_eq!(matrix.n_cells(), 16);
    // 25 lattice nodes plus one duplicate at the interior path node.
    assert_eq!(matrix.nodes.len(), 26);
    for side in [Side::Plus, Side::Minus] {
        let p = mesh.pairing(InterfaceRef { lower: 1, higher: 0, side }).unwrap();
        assert_eq!(p.pairs.len(), 2);
    }
}

#[test]
fn crossing_creates_junction() {
    let mesh = squares(
        4,
        &[
            frac(&[[0.5, 0.25], [0.5, 0.75]], "a"),
            frac(&[[0.25, 0.5], [0.75, 0.5]], "b"),
        ],
    );
    assert_eq!(counts(&mesh), (1, 4, 1));
    let junction = &mesh.subdomains[5];
    assert_eq!(junction.dim, 0);
    assert_eq!(junction.cell_centers[0], [0.5, 0.5]);
    assert_eq!(mesh.up_neighbors[5], vec![1, 2, 3, 4]);
    // Each arm is one lattice edge and couples down to the junction.
    for b in 1..=4 {
        assert_eq!(mesh.subdomains[b].n_cells(), 1);
        assert_eq!(mesh.down_neighbors[b], vec![5]);
        let p = mesh.pairing(InterfaceRef { lower: 5, higher: b, side: Side::Plus }).unwrap();
        assert_eq!(p.pairs.len(), 1);
        let (cell, face) = p.pairs[0];
        assert_eq!(cell, 0);
        let tip = &mesh.subdomains[b].faces[face];
        assert_eq!(tip.center, [0.5, 0.5]);
        assert_eq!(tip.tag, FaceTag::Interface { lower: 5, side: Side::Plus });
    }
}

#[test]
fn polyline_corner_stays_one_branch() {
    let mesh = squares(4, &[frac(&[[0.25, 0.25], [0.5, 0.25], [0.5, 0.5]], "f")]);
    assert_eq!(counts(&mesh), (1, 1, 0));
    let branch = &mesh.subdomains[1];
    assert_eq!(branch.n_cells(), 2);
    assert!((branch.measure() - 0.5).abs() < 1e-12);
}

#[test]
fn touching_fractures_create_point() {
    let mesh = squares(
        4,
        &[
            frac(&[[0.5, 0.25], [0.5, 0.5]], "a"),
            frac(&[[0.5, 0.5], [0.75, 0.5]], "b"),
        ],
    );
    assert_eq!(counts(&mesh), (1, 2, 1));
    assert_eq!(mesh.up_neighbors[3], vec![1, 2]);
}

#[test]
fn triangles_cover_unit_square() {
    let mesh =
        build_structured_mesh(Rect::UNIT, 3, 3, GridKind::StructuredTriangles, &[], 1).unwrap();
    assert_eq!(counts(&mesh), (1, 0, 0));
    assert_eq!(mesh.subdomains[0].n_cells(), 18);
    assert!((mesh.total_volume(2) - 1.0).abs() < 1e-12);
    assert!(validate_mesh(&mesh).issues.iter().all(|i| matches!(
        i,
        ValidationIssue::NoDirichletAnchor { .. }
    )));
}

#[test]
fn triangles_split_along_fracture() {
    let mut mesh = build_structured_mesh(
        Rect::UNIT,
        4,
        4,
        GridKind::StructuredTriangles,
        &[frac(&[[0.5, 0.0], [0.5, 1.0]], "f")],
        1,
    )
    .unwrap();
    assert_eq!(counts(&mesh), (2, 1, 0));
    assert_eq!(mesh.subdomains[2].n_cells(), 4);
    mesh.apply_boundary(&flow_boundary());
    assert!(validate_mesh(&mesh).is_ok());
}

#[test]
fn boundary_tagging_and_tip_inheritance() {
    let mut mesh = squares(2, &[frac(&[[0.5, 0.0], [0.5, 1.0]], "f")]);
    let values = mesh.apply_boundary(&flow_boundary());
    for sub_id in 0..2 {
        let sub = &mesh.subdomains[sub_id];
        let dir: Vec<usize> = (0..sub.faces.len())
            .filter(|&f| sub.faces[f].tag == FaceTag::Dirichlet)
            .collect();
        assert_eq!(dir.len(), 2);
        for f in dir {
            let expect = if sub.faces[f].center[1] > 0.5 { 1.0 } else { 0.0 };
            assert_eq!(values.dirichlet[sub_id][&f], expect);
        }
    }
    // Fracture tips touch the Dirichlet sides and inherit their values.
    let branch = &mesh.subdomains[2];
    let tips: Vec<usize> = (0..branch.faces.len())
        .filter(|&f| branch.faces[f].tag == FaceTag::Dirichlet)
        .collect();
    assert_eq!(tips.len(), 2);
    for f in tips {
        let expect = if branch.faces[f].center[1] > 0.5 { 1.0 } else { 0.0 };
        assert_eq!(values.dirichlet[2][&f], expect);
    }
    assert!(validate_mesh(&mesh).is_ok());
}

#[test]
fn fracture_refine_subdivides_branch_cells() {
    let mesh = build_structured_mesh(
        Rect::UNIT,
        2,
        2,
        GridKind::CartesianQuads,
        &[frac(&[[0.5, 0.0], [0.5, 1.0]], "f")],
        3,
    )
    .unwrap();
    let branch = &mesh.subdomains[2];
    assert_eq!(branch.n_cells(), 6);
    assert!((branch.measure() - 1.0).abs() < 1e-12);
    let p = mesh.pairing(InterfaceRef { lower: 2, higher: 0, side: Side::Plus }).unwrap();
    assert_eq!(p.pairs.len(), 6);
    // Three consecutive fine cells share each matrix face.
    assert_eq!(p.pairs[0].1, p.pairs[2].1);
    assert_ne!(p.pairs[2].1, p.pairs[3].1);
    assert!(validate_mesh(&mesh).issues.iter().all(|i| matches!(
        i,
        ValidationIssue::NoDirichletAnchor { .. }
    )));
}

#[test]
fn benchmark_geometry_counts() {
    for nx in [8usize, 16, 32] {
        let mut mesh = build_structured_mesh(
            Rect::UNIT,
            nx,
            nx,
            GridKind::CartesianQuads,
            &benchmark_fractures(),
            1,
        )
        .unwrap();
        assert_eq!(counts(&mesh), (2, 7, 1), "nx={nx}");
        assert!((mesh.total_volume(2) - 1.0).abs() < 1e-12);
        // The corner block cut off by the elbow fracture.
        let corner = &mesh.subdomains[1];
        assert_eq!(corner.n_cells(), nx * nx / 16);
        assert!(corner.cell_centers.iter().all(|c| c[0] > 0.75 && c[1] < 0.25));
        mesh.apply_boundary(&flow_boundary());
        let report = validate_mesh(&mesh);
        assert!(report.is_ok(), "nx={nx}: {report}");
    }
}

#[test]
fn rejects_bad_fracture_input() {
    let r = build_structured_mesh(
        Rect::UNIT,
        4,
        4,
        GridKind::CartesianQuads,
        &[frac(&[[0.3, 0.25], [0.5, 0.25]], "f")],
        1,
    );
    assert!(matches!(r, Err(MeshError::NonConformingFracture { .. })));

    let r = build_structured_mesh(
        Rect::UNIT,
        4,
        4,
        GridKind::CartesianQuads,
        &[frac(&[[0.0, 0.0], [0.0, 0.5]], "f")],
        1,
    );
    assert!(matches!(r, Err(MeshError::NonConformingFracture { .. })));

    let seg = frac(&[[0.25, 0.5], [0.75, 0.5]], "f");
    let r = build_structured_mesh(
        Rect::UNIT,
        4,
        4,
        GridKind::CartesianQuads,
        &[seg.clone(), seg],
        1,
    );
    assert!(matches!(r, Err(MeshError::NonConformingFracture { .. })));

    let r = build_structured_mesh(Rect::UNIT, 0, 4, GridKind::CartesianQuads, &[], 1);
    assert!(matches!(r, Err(MeshError::EmptyDomain { .. })));

    let r = build_structured_mesh(
        Rect::UNIT,
        4,
        4,
        GridKind::CartesianQuads,
        &[frac(&[[0.25, 0.25], [0.75, 0.75]], "f")],
        1,
    );
    assert!(matches!(r, Err(MeshError::NonConformingFracture { .. })));
}

#[test]
fn mesh_file_round_trip_preserves_topology() {
    let mut mesh = build_structured_mesh(
        Rect::UNIT,
        8,
        8,
        GridKind::CartesianQuads,
        &benchmark_fractures(),
        1,
    )
    .unwrap();
    let values = mesh.apply_boundary(&flow_boundary());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bench.mesh");
    write_mesh_file(&mesh, &values, &path).unwrap();
    let (back, back_values) = read_mesh_file(&path).unwrap();

    assert_eq!(back.subdomains.len(), mesh.subdomains.len());
    for (a, b) in mesh.subdomains.iter().zip(&back.subdomains) {
        assert_eq!(a.dim, b.dim);
        assert_eq!(a.n_cells(), b.n_cells());
    }
    assert_eq!(back.up_neighbors, mesh.up_neighbors);
    assert_eq!(back.down_neighbors, mesh.down_neighbors);
    let keys: Vec<InterfaceRef> = mesh.interfaces().collect();
    let back_keys: Vec<InterfaceRef> = back.interfaces().collect();
    assert_eq!(keys, back_keys);
    for (p, q) in mesh.pairings.iter().zip(&back.pairings) {
        assert_eq!(p.pairs.len(), q.pairs.len());
    }
    // Dirichlet data survives, including the inherited fracture tips.
    // Face numbering may legitimately differ, so compare by face center.
    let by_center = |m: &MixedDimMesh, vals: &BoundaryValues, sid: usize| -> Vec<(u64, u64, u64)> {
        let mut v: Vec<(u64, u64, u64)> = vals.dirichlet[sid]
            .iter()
            .map(|(&f, &val)| {
                let c = m.subdomains[sid].faces[f].center;
                (c[0].to_bits(), c[1].to_bits(), val.to_bits())
            })
            .collect();
        v.sort_unstable();
        v
    };
    for sid in 0..mesh.subdomains.len() {
        assert_eq!(
            by_center(&mesh, &values, sid),
            by_center(&back, &back_values, sid),
            "subdomain {sid}"
        );
    }
    assert!(validate_mesh(&back).is_ok());
}

#[test]
fn mesh_file_reports_errors_with_lines() {
    let text = "NODES\n0 0 0\n1 1 0\n2 1 1\n3 0 1\nCELLS\n0 0 1 2 x\n";
    match super::file::read_mesh_str(text) {
        Err(MeshError::ParseError { line, .. }) => assert_eq!(line, 7),
        other => panic!("expected parse error, got {other:?}"),
    }

    let text = "CELLS\n0 0 1 2\n";
    assert!(matches!(
        super::file::read_mesh_str(text),
        Err(MeshError::ParseError { .. })
    ));

    // Interior edge in the BOUNDARY section.
    let text = "NODES\n0 0 0\n1 1 0\n2 1 1\n3 0 1\n4 2 0\n5 2 1\n\
                CELLS\n0 0 1 2 3\n1 1 4 5 2\n\
                BOUNDARY\n1 2 dirichlet 1.0\n";
    assert!(matches!(
        super::file::read_mesh_str(text),
        Err(MeshError::TopologyError(_))
    ));
}

#[test]
fn vtk_series_writes_every_piece() {
    let mut mesh = squares(2, &[frac(&[[0.5, 0.0], [0.5, 1.0]], "f")]);
    mesh.apply_boundary(&flow_boundary());
    let fields: Vec<Vec<f64>> =
        mesh.subdomains.iter().map(|s| vec![1.5; s.n_cells()]).collect();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_vtk_series(
        &mesh,
        &[CellField { name: "pressure", per_subdomain: &fields }],
        dir.path(),
        "case",
    )
    .unwrap();
    assert_eq!(paths.len(), 1 + mesh.subdomains.len());
    let index = std::fs::read_to_string(&paths[0]).unwrap();
    assert!(index.contains("subdomain 0 dim 2"));
    assert!(index.contains("interface lower 2"));
    let piece = std::fs::read_to_string(&paths[1]).unwrap();
    assert!(piece.contains("DATASET UNSTRUCTURED_GRID"));
    assert!(piece.contains("SCALARS pressure double 1"));

    write_vtk_segments(
        &[([0.0, 0.0], [1.0, 0.0]), ([0.5, 0.5], [0.5, 0.5])],
        &[("flux", &[2.0, 3.0][..])],
        dir.path().join("mortar.vtk"),
    )
    .unwrap();
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    /// Random axis-aligned fracture sets never lose or duplicate area, and
    /// the extracted branches cover exactly the prescribed segments.
    #[test]
    fn random_fractures_conserve_measure(
        segs in proptest::collection::vec((0usize..2, 1usize..6, 0usize..5, 1usize..6), 0..4)
    ) {
        let n = 6usize;
        let h = 1.0 / n as f64;
        let mut fractures = Vec::new();
        let mut expected_len = 0.0;
        for (k, &(orient, line, start, len)) in segs.iter().enumerate() {
            let line = line.min(n - 1);
            let end = (start + len).min(n);
            if end <= start {
                continue;
            }
            let (a, b) = if orient == 0 {
                ([start as f64 * h, line as f64 * h], [end as f64 * h, line as f64 * h])
            } else {
                ([line as f64 * h, start as f64 * h], [line as f64 * h, end as f64 * h])
            };
            expected_len += (end - start) as f64 * h;
            fractures.push(Fracture { points: vec![a, b], group: format!("g{k}") });
        }
        let built = build_structured_mesh(
            Rect::UNIT, n, n, GridKind::CartesianQuads, &fractures, 1,
        );
        // Overlapping random segments are rejected, which is fine.
        prop_assume!(built.is_ok());
        let mesh = built.unwrap();
        prop_assert!((mesh.total_volume(2) - 1.0).abs() < 1e-12);
        prop_assert!((mesh.total_volume(1) - expected_len).abs() < 1e-12);
        let report = validate_mesh(&mesh);
        prop_assert!(
            report.issues.iter().all(|i| matches!(i, ValidationIssue::NoDirichletAnchor { .. })),
            "{report}"
        );
    }
}
