use super::*;
use crate::linalg::{DenseLu, DenseMatrix};
use crate::mesh::{
    build_structured_mesh, BoundaryFunc, BoundarySpec, Fracture, GridKind, Rect,
};

fn frac(points: &[[f64; 2]]) -> Fracture {
    Fracture { points: points.to_vec(), group: "f".into() }
}

/// Unit square with a vertical fracture at x = 1/2, pressure 1 on the
/// left, 0 on the right, sealed top and bottom. The exact flux density
/// through either interface is 1/(1 + 2/kp): two matrix half-widths of
/// unit conductivity in series with two exchange resistances.
fn quasi1d(kind: GridKind, nx: usize) -> (crate::mesh::MixedDimMesh, crate::mesh::BoundaryValues) {
    let mut mesh = build_structured_mesh(
        Rect::UNIT,
        nx,
        nx,
        kind,
        &[frac(&[[0.5, 0.0], [0.5, 1.0]])],
        1,
    )
    .unwrap();
    let values = mesh.apply_boundary(&BoundarySpec {
        bottom: BoundaryFunc::neumann(0.0),
        right: BoundaryFunc::dirichlet(0.0),
        top: BoundaryFunc::neumann(0.0),
        left: BoundaryFunc::dirichlet(1.0),
    });
    (mesh, values)
}

fn crossing(kind: GridKind, nx: usize, spec: &BoundarySpec) -> (crate::mesh::MixedDimMesh, crate::mesh::BoundaryValues) {
    let mut mesh = build_structured_mesh(
        Rect::UNIT,
        nx,
        nx,
        kind,
        &[frac(&[[0.5, 0.0], [0.5, 1.0]]), frac(&[[0.0, 0.5], [1.0, 0.5]])],
        1,
    )
    .unwrap();
    let values = mesh.apply_boundary(spec);
    (mesh, values)
}

fn by_dim(mesh: &crate::mesh::MixedDimMesh, k2: f64, k1: f64) -> Vec<f64> {
    mesh.subdomains
        .iter()
        .map(|s| match s.dim {
            2 => k2,
            1 => k1,
            _ => 1.0,
        })
        .collect()
}

fn problem<'a>(
    mesh: &'a crate::mesh::MixedDimMesh,
    values: &'a crate::mesh::BoundaryValues,
    method: Method,
    k1: f64,
    kp: f64,
) -> ProblemSpec<'a> {
    ProblemSpec {
        mesh,
        values,
        method,
        tangential: by_dim(mesh, 1.0, k1),
        kappa_perp: vec![kp; mesh.pairings.len()],
        mortar_ratio: 1.0,
        sources: Vec::new(),
    }
}

/// Checks a solved quasi-1d case against the series-resistance values:
/// uniform flux of magnitude q with opposite orientation on the two
/// interfaces, fracture pressure 1/2, and the piecewise-linear matrix
/// profile evaluated at cell centers.
fn check_quasi1d(mesh: &crate::mesh::MixedDimMesh, sol: &Solution, cp: &Coupled<'_>, kp: f64) {
    let q = 1.0 / (1.0 + 2.0 / kp);
    assert_eq!(cp.interfaces.len(), 2);
    for lam in &sol.lambda {
        for &l in lam {
            assert!((l.abs() - q).abs() < 1e-9, "flux {l} vs magnitude {q}");
        }
    }
    assert!(
        (sol.lambda[0][0] + sol.lambda[1][0]).abs() < 1e-9,
        "the two sides carry opposite orientations"
    );
    for sub in &mesh.subdomains {
        match sub.dim {
            1 => {
                for &p in &sol.pressures[sub.id] {
                    assert!((p - 0.5).abs() < 1e-9, "fracture pressure {p}");
                }
            }
            2 => {
                for (c, &p) in sol.pressures[sub.id].iter().enumerate() {
                    let x = sub.cell_centers[c][0];
                    let expect = if x < 0.5 { 1.0 - q * x } else { q * (1.0 - x) };
                    assert!((p - expect).abs() < 1e-9, "matrix pressure {p} vs {expect} at x={x}");
                }
            }
            _ => {}
        }
    }
}

#[test]
fn series_resistance_flux_tpfa() {
    let (mesh, values) = quasi1d(GridKind::CartesianQuads, 4);
    for kp in [1.0, 1e4, 1e-3] {
        let spec = problem(&mesh, &values, Method::Tpfa, 1.0, kp);
        let cp = couple(&spec).unwrap();
        let sol = cp.solve_global().unwrap();
        check_quasi1d(&mesh, &sol, &cp, kp);
    }
}

#[test]
fn series_resistance_flux_p1() {
    let (mesh, values) = quasi1d(GridKind::StructuredTriangles, 4);
    for kp in [1.0, 1e4] {
        let spec = problem(&mesh, &values, Method::P1, 1.0, kp);
        let cp = couple(&spec).unwrap();
        let sol = cp.solve_global().unwrap();
        check_quasi1d(&mesh, &sol, &cp, kp);
    }
}

#[test]
fn series_resistance_flux_rt0h() {
    let (mesh, values) = quasi1d(GridKind::StructuredTriangles, 4);
    for kp in [1.0, 1e4] {
        let spec = problem(&mesh, &values, Method::Rt0h, 1.0, kp);
        let cp = couple(&spec).unwrap();
        let sol = cp.solve_global().unwrap();
        check_quasi1d(&mesh, &sol, &cp, kp);
    }
}

/// An impermeable fracture still carries the transversal exchange: its
/// cell pressures are pure coupling unknowns and the series flux is
/// unchanged.
#[test]
fn impermeable_branch_series_flux() {
    let (mesh, values) = quasi1d(GridKind::CartesianQuads, 4);
    let kp = 2.0;
    let spec = problem(&mesh, &values, Method::Tpfa, 0.0, kp);
    let cp = couple(&spec).unwrap();
    let frac_id = mesh.subdomains.iter().find(|s| s.dim == 1).unwrap().id;
    assert_eq!(cp.roles[frac_id], Role::Blocking);

    let sol = cp.solve_global().unwrap();
    check_quasi1d(&mesh, &sol, &cp, kp);

    let alt = cp.solve_schur().unwrap();
    check_quasi1d(&mesh, &alt, &cp, kp);
    for (a, b) in sol.pressures.iter().flatten().zip(alt.pressures.iter().flatten()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn interface_elimination_matches_full_solve() {
    let spec2 = BoundarySpec {
        bottom: BoundaryFunc::dirichlet_linear(0.0, 1.0, 0.0),
        right: BoundaryFunc::dirichlet(1.0),
        top: BoundaryFunc::neumann(0.0),
        left: BoundaryFunc::dirichlet(0.0),
    };
    let (mesh, values) = crossing(GridKind::StructuredTriangles, 4, &spec2);
    for method in [Method::Tpfa, Method::P1, Method::Rt0h] {
        let spec = problem(&mesh, &values, method, 0.5, 3.0);
        let cp = couple(&spec).unwrap();
        let full = cp.solve_global().unwrap();
        let cond = cp.solve_schur().unwrap();
        for (a, b) in full.lambda.iter().flatten().zip(cond.lambda.iter().flatten()) {
            assert!((a - b).abs() < 1e-8, "{method:?}: flux {a} vs {b}");
        }
        for (a, b) in full.pressures.iter().flatten().zip(cond.pressures.iter().flatten()) {
            assert!((a - b).abs() < 1e-8, "{method:?}: pressure {a} vs {b}");
        }
        for sol in [&full, &cond] {
            let d = cp.diagnostics(sol);
            assert!(d.residual_max < 1e-9, "{method:?}: residual {}", d.residual_max);
            assert!(d.interface_residual_max <= d.residual_max);
            assert!(d.lambda_abs_max > 0.0);
        }
    }
}

/// With every subdomain anchored the condensed system has no constraint
/// columns and must equal the dense elimination of the pressure block.
#[test]
fn condensed_matrix_matches_dense_elimination() {
    let all_dirichlet = BoundarySpec {
        bottom: BoundaryFunc::dirichlet_linear(1.0, 0.3, 0.2),
        right: BoundaryFunc::dirichlet_linear(1.0, 0.3, 0.2),
        top: BoundaryFunc::dirichlet_linear(1.0, 0.3, 0.2),
        left: BoundaryFunc::dirichlet_linear(1.0, 0.3, 0.2),
    };
    for (method, kind) in [
        (Method::Tpfa, GridKind::CartesianQuads),
        (Method::P1, GridKind::StructuredTriangles),
        (Method::Rt0h, GridKind::StructuredTriangles),
    ] {
        let mut mesh = build_structured_mesh(
            Rect::UNIT,
            4,
            4,
            kind,
            &[frac(&[[0.5, 0.0], [0.5, 1.0]])],
            1,
        )
        .unwrap();
        let values = mesh.apply_boundary(&all_dirichlet);
        let spec = problem(&mesh, &values, method, 2.0, 0.7);
        let cp = couple(&spec).unwrap();
        let sys = cp.schur().unwrap();
        assert_eq!(sys.n_constraints(), 0, "{method:?}: everything is anchored");

        let (mat, rhs) = cp.assemble_global();
        let dense = mat.to_dense();
        let (n_u, n_m) = (cp.n_u, cp.n_m);
        let mut a = DenseMatrix::zeros(n_u, n_u);
        for r in 0..n_u {
            for c in 0..n_u {
                a.set(r, c, dense.get(r, c));
            }
        }
        let lu = DenseLu::factor(&a).unwrap();
        // S = M + G^T A^{-1} G, column per flux unknown.
        let mut brute = DenseMatrix::zeros(n_m, n_m);
        for m in 0..n_m {
            let g: Vec<f64> = (0..n_u).map(|r| dense.get(r, n_u + m)).collect();
            let w = lu.solve(&g);
            for m2 in 0..n_m {
                let gt: f64 = (0..n_u).map(|r| dense.get(n_u + m2, r) * w[r]).sum();
                // The flux block stores -M.
                brute.set(m2, m, gt - dense.get(n_u + m2, n_u + m));
            }
        }
        let f = lu.solve(&rhs[..n_u].to_vec());
        for m in 0..n_m {
            let gtf: f64 = (0..n_u).map(|r| dense.get(n_u + m, r) * f[r]).sum();
            let expect = gtf - rhs[n_u + m];
            assert!(
                (sys.rhs[m] - expect).abs() < 1e-10 * (1.0 + expect.abs()),
                "{method:?}: rhs row {m}: {} vs {expect}",
                sys.rhs[m]
            );
            for m2 in 0..n_m {
                let (got, want) = (sys.matrix.get(m, m2), brute.get(m, m2));
                assert!(
                    (got - want).abs() < 1e-10 * (1.0 + want.abs()),
                    "{method:?}: entry ({m},{m2}): {got} vs {want}"
                );
            }
        }
    }
}

#[test]
fn stacked_impermeable_subdomains_rejected() {
    let (mesh, _values) = quasi1d(GridKind::CartesianQuads, 2);
    let err = classify(&mesh, &by_dim(&mesh, 0.0, 0.0)).unwrap_err();
    let AssemblyError::NestedBlockingDomains { lower, upper } = err else {
        panic!("wrong error: {err}");
    };
    assert_eq!(mesh.subdomains[lower].dim, 1);
    assert_eq!(mesh.subdomains[upper].dim, 2);

    // An impermeable branch under a permeable matrix is fine.
    let roles = classify(&mesh, &by_dim(&mesh, 1.0, 0.0)).unwrap();
    assert!(roles.iter().any(|&r| r == Role::Blocking));
}

#[test]
fn junction_fluxes_balance() {
    let spec2 = BoundarySpec {
        bottom: BoundaryFunc::dirichlet_linear(0.0, 1.0, 0.0),
        right: BoundaryFunc::dirichlet(1.0),
        top: BoundaryFunc::dirichlet_linear(0.0, 1.0, 0.0),
        left: BoundaryFunc::dirichlet(0.0),
    };
    let (mesh, values) = crossing(GridKind::CartesianQuads, 4, &spec2);
    let junction = mesh.subdomains.iter().find(|s| s.dim == 0).unwrap().id;

    let spec = problem(&mesh, &values, Method::Tpfa, 2.0, 5.0);
    let cp = couple(&spec).unwrap();
    assert_eq!(cp.roles[junction], Role::FlowingUnanchored);

    for sol in [cp.solve_global().unwrap(), cp.solve_schur().unwrap()] {
        let mut net = 0.0;
        for (k, itf) in cp.interfaces.iter().enumerate() {
            if itf.key.lower != junction {
                continue;
            }
            for (j, &col) in itf.lower_cols.iter().enumerate() {
                assert_eq!(col, 0);
                for m in 0..itf.n_mortar() {
                    net += itf.b_lower.get(m, j) * sol.lambda[k][m];
                }
            }
        }
        assert!(net.abs() < 1e-10, "net junction inflow {net}");
    }
}

#[test]
fn coupled_layout_counts() {
    let spec2 = BoundarySpec {
        bottom: BoundaryFunc::dirichlet(0.0),
        right: BoundaryFunc::dirichlet(1.0),
        top: BoundaryFunc::dirichlet(0.0),
        left: BoundaryFunc::dirichlet(1.0),
    };
    let (mesh, values) = crossing(GridKind::CartesianQuads, 4, &spec2);
    let dims: Vec<usize> = (0..=2)
        .map(|d| mesh.subdomains.iter().filter(|s| s.dim == d).count())
        .collect();
    assert_eq!(dims, vec![1, 4, 4]);
    assert_eq!(mesh.pairings.len(), 12);

    let spec = problem(&mesh, &values, Method::Tpfa, 1.0, 1.0);
    let cp = couple(&spec).unwrap();
    // One pressure per cell: 4 quads per quadrant, 2 cells per branch,
    // one point. Two flux cells per branch side, one per junction leg.
    assert_eq!(cp.n_u, 16 + 8 + 1);
    assert_eq!(cp.n_m, 8 * 2 + 4);
    assert_eq!(cp.n_total(), cp.n_u + cp.n_m);
}

#[test]
fn coupled_system_is_bitwise_symmetric() {
    let spec2 = BoundarySpec {
        bottom: BoundaryFunc::neumann(0.3),
        right: BoundaryFunc::dirichlet(0.0),
        top: BoundaryFunc::neumann(0.0),
        left: BoundaryFunc::dirichlet(1.0),
    };
    let (mesh, values) = crossing(GridKind::StructuredTriangles, 4, &spec2);
    for method in [Method::Tpfa, Method::P1, Method::Rt0h] {
        let mut spec = problem(&mesh, &values, method, 0.8, 2.5);
        // One impermeable branch exercises the mixed flowing/blocking
        // couplings.
        let first_branch = mesh.subdomains.iter().find(|s| s.dim == 1).unwrap().id;
        spec.tangential[first_branch] = 0.0;
        let cp = couple(&spec).unwrap();
        let (mat, _) = cp.assemble_global();
        let d = mat.to_dense();
        for r in 0..cp.n_total() {
            for c in r + 1..cp.n_total() {
                assert!(
                    d.get(r, c) == d.get(c, r),
                    "{method:?}: asymmetry at ({r},{c}): {} vs {}",
                    d.get(r, c),
                    d.get(c, r)
                );
            }
        }
    }
}

#[test]
fn recomputed_fluxes_balance_every_cell() {
    let spec_b = BoundarySpec {
        bottom: BoundaryFunc::dirichlet(0.0),
        right: BoundaryFunc::neumann(0.0),
        top: BoundaryFunc::dirichlet(1.0),
        left: BoundaryFunc::neumann(0.0),
    };
    for (method, kind) in
        [(Method::Tpfa, GridKind::CartesianQuads), (Method::Rt0h, GridKind::StructuredTriangles)]
    {
        let (mesh, values) = crossing(kind, 4, &spec_b);
        let spec = problem(&mesh, &values, method, 2.0, 1e3);
        let cp = couple(&spec).unwrap();
        let sol = cp.solve_global().unwrap();
        let scale = cp.diagnostics(&sol).lambda_abs_max.max(1.0);
        let audits = cp.flux_audits(&spec, &sol).unwrap();
        let mut ext_total = 0.0;
        for audit in &audits {
            let audit = audit.as_ref().expect("conservative methods audit every subdomain");
            for &b in &audit.cell_balance {
                assert!(b.abs() <= 1e-10 * scale, "{method:?}: cell balance {b}");
            }
            assert!(
                audit.continuity_max <= 1e-10 * scale,
                "{method:?}: face continuity {}",
                audit.continuity_max
            );
            ext_total += audit.exterior.values().sum::<f64>();
        }
        assert!(ext_total.abs() <= 1e-10 * scale, "{method:?}: boundary imbalance {ext_total}");
        let net = cp.net_exchange(&sol.lambda);
        let junction = mesh.subdomains.iter().find(|s| s.dim == 0).unwrap().id;
        assert!(net[junction].abs() <= 1e-10 * scale, "{method:?}: junction net {}", net[junction]);
    }
}

#[test]
fn nodal_method_reports_no_flux_audit() {
    let spec_b = BoundarySpec {
        bottom: BoundaryFunc::dirichlet(0.0),
        right: BoundaryFunc::neumann(0.0),
        top: BoundaryFunc::dirichlet(1.0),
        left: BoundaryFunc::neumann(0.0),
    };
    let (mesh, values) = crossing(GridKind::StructuredTriangles, 4, &spec_b);
    let spec = problem(&mesh, &values, Method::P1, 2.0, 1e3);
    let cp = couple(&spec).unwrap();
    let sol = cp.solve_global().unwrap();
    let audits = cp.flux_audits(&spec, &sol).unwrap();
    for sub in &mesh.subdomains {
        assert_eq!(
            audits[sub.id].is_none(),
            sub.dim > 0,
            "nodal subdomains carry no flux audit; point subdomains do"
        );
    }
}

#[test]
fn sink_in_branch_draws_matching_inflow() {
    let all_zero = BoundarySpec {
        bottom: BoundaryFunc::dirichlet(0.0),
        right: BoundaryFunc::dirichlet(0.0),
        top: BoundaryFunc::dirichlet(0.0),
        left: BoundaryFunc::dirichlet(0.0),
    };
    for (method, kind) in
        [(Method::Tpfa, GridKind::CartesianQuads), (Method::Rt0h, GridKind::StructuredTriangles)]
    {
        let (mesh, values) = crossing(kind, 4, &all_zero);
        let mut spec = problem(&mesh, &values, method, 2.0, 1e2);
        let branch = mesh.subdomains.iter().find(|s| s.dim == 1).unwrap().id;
        let density = 3.0;
        let sink_total: f64 =
            density * mesh.subdomains[branch].cell_volumes.iter().sum::<f64>();
        spec.sources = mesh
            .subdomains
            .iter()
            .map(|s| if s.id == branch { vec![density; s.n_cells()] } else { Vec::new() })
            .collect();
        let cp = couple(&spec).unwrap();
        let sol = cp.solve_global().unwrap();
        let audits = cp.flux_audits(&spec, &sol).unwrap();
        // Per subdomain: interface inflow = sink total + exterior outflow.
        let net = cp.net_exchange(&sol.lambda);
        let ext_branch: f64 = audits[branch].as_ref().unwrap().exterior.values().sum();
        assert!(
            (net[branch] - ext_branch - sink_total).abs() < 1e-9,
            "{method:?}: branch draws {} against sink {sink_total} and tips {ext_branch}",
            net[branch]
        );
        // Globally the boundary supplies exactly the sink.
        let ext_total: f64 = audits
            .iter()
            .map(|a| a.as_ref().unwrap().exterior.values().sum::<f64>())
            .sum();
        assert!(
            (ext_total + sink_total).abs() < 1e-9,
            "{method:?}: boundary supplies {ext_total} for sink {sink_total}"
        );
    }
}
