//! Case driver: configured single runs, grid-refinement studies, and
//! interface-stiffness sweeps, with CSV and VTK output.
//!
//! A [`CaseConfig`] names a geometry (a builtin or a mesh file), picks the
//! subdomain discretization, and carries the material and interface
//! parameters. [`run_case`] solves one configuration and reports residuals
//! and mass-balance aggregates; the study entry points in this module
//! refine the same configuration across grid levels or sweep its
//! permeabilities, comparing interface flux fields in a measure-weighted
//! piecewise-constant norm.
//!
//! Everything here is deterministic: map-ordered iteration, index-ordered
//! merges of parallel work, and shortest-roundtrip float formatting make
//! repeated runs byte-identical.

mod config;
mod study;

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::assembly::{couple, AssemblyError, Diagnostics, ProblemSpec, Solution};
use crate::disc::Method;
use crate::linalg::LinalgError;
use crate::mesh::{
    build_structured_mesh, read_mesh_file, write_vtk_segments, write_vtk_series, BoundaryFunc,
    BoundarySpec, BoundaryValues, CellField, Fracture, GridKind, MeshError, MixedDimMesh, Rect,
};

pub use config::{load_config, parse_config};
pub use study::{
    convergence_against, convergence_study, mortar_l2_error, reference_field, solve_mortar_field,
    stability_sweep, write_convergence_csv, write_stability_csv, ConvergenceRow, ConvergenceTable,
    MortarField, StabilityRow, StabilityTable,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Malformed configuration text; the location is 1-based, with line 0
    /// standing for the file as a whole.
    #[error("{file}:{line}: {msg}")]
    Config { file: String, line: usize, msg: String },
    /// A structurally valid configuration that cannot be run.
    #[error("{0}")]
    Setup(String),
    #[error("interface sets differ between solutions")]
    InterfaceMismatch,
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Assembly(#[from] AssemblyError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

/// Where the mesh comes from.
#[derive(Debug, Clone)]
pub enum Geometry {
    Builtin(BuiltinGeometry),
    File(PathBuf),
}

impl Geometry {
    pub fn label(&self) -> String {
        match self {
            Geometry::Builtin(b) => b.name().to_string(),
            Geometry::File(p) => p.display().to_string(),
        }
    }
}

/// Ready-made unit-square test geometries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinGeometry {
    /// Plain matrix, no fractures; pressure drop from top to bottom.
    NoFracture,
    /// One vertical fracture cutting the square in two; pressure drop from
    /// left to right, so all flow crosses the fracture.
    Quasi1d,
    /// Six-branch network with one crossing: a conductive T-junction pair
    /// in the upper half, a conductive corner branch reaching the bottom
    /// and right sides, and a blocking pair along the horizontal midline.
    /// Pressure drop from top to bottom, sealed sides.
    Benchmark2d,
    /// The three boundary-touching branches of [`Benchmark2d`] alone, with
    /// the linear profile `p = y` on all four sides. No intersections, so
    /// the interface complement carries no constraint columns.
    Stability3f,
}

impl BuiltinGeometry {
    pub fn name(self) -> &'static str {
        match self {
            BuiltinGeometry::NoFracture => "nofracture",
            BuiltinGeometry::Quasi1d => "quasi1d",
            BuiltinGeometry::Benchmark2d => "benchmark2d",
            BuiltinGeometry::Stability3f => "stability3f",
        }
    }

    pub fn parse_name(s: &str) -> Option<BuiltinGeometry> {
        match s {
            "nofracture" => Some(BuiltinGeometry::NoFracture),
            "quasi1d" => Some(BuiltinGeometry::Quasi1d),
            "benchmark2d" => Some(BuiltinGeometry::Benchmark2d),
            "stability3f" => Some(BuiltinGeometry::Stability3f),
            _ => None,
        }
    }

    fn def(self) -> BuiltinDef {
        let frac = |points: &[[f64; 2]], group: &str| Fracture {
            points: points.to_vec(),
            group: group.to_string(),
        };
        let drop_top_to_bottom = BoundarySpec {
            bottom: BoundaryFunc::dirichlet(0.0),
            right: BoundaryFunc::neumann(0.0),
            top: BoundaryFunc::dirichlet(1.0),
            left: BoundaryFunc::neumann(0.0),
        };
        let unit = FractureParams { kappa_perp: 1.0, kappa_par: 1.0 };
        match self {
            BuiltinGeometry::NoFracture => BuiltinDef {
                fractures: Vec::new(),
                boundary: drop_top_to_bottom,
                default_params: unit,
                groups: Vec::new(),
                lattice: 1,
            },
            BuiltinGeometry::Quasi1d => BuiltinDef {
                fractures: vec![frac(&[[0.5, 0.0], [0.5, 1.0]], "fracture")],
                boundary: BoundarySpec {
                    bottom: BoundaryFunc::neumann(0.0),
                    right: BoundaryFunc::dirichlet(0.0),
                    top: BoundaryFunc::neumann(0.0),
                    left: BoundaryFunc::dirichlet(1.0),
                },
                default_params: unit,
                groups: vec![("fracture", unit)],
                lattice: 2,
            },
            BuiltinGeometry::Benchmark2d => {
                let conductive = FractureParams { kappa_perp: 1e4, kappa_par: 1.0 };
                let blocking = FractureParams { kappa_perp: 1.0, kappa_par: 1e-4 };
                BuiltinDef {
                    fractures: vec![
                        frac(&[[0.5, 0.625], [0.5, 0.875]], "conductive"),
                        frac(&[[0.375, 0.75], [0.625, 0.75]], "conductive"),
                        frac(&[[0.625, 0.0], [0.625, 0.25], [1.0, 0.25]], "conductive"),
                        frac(&[[0.0, 0.5], [0.375, 0.5]], "blocking"),
                        frac(&[[0.625, 0.5], [1.0, 0.5]], "blocking"),
                    ],
                    boundary: drop_top_to_bottom,
                    default_params: conductive,
                    groups: vec![("conductive", conductive), ("blocking", blocking)],
                    lattice: 8,
                }
            }
            BuiltinGeometry::Stability3f => BuiltinDef {
                fractures: vec![
                    frac(&[[0.0, 0.5], [0.375, 0.5]], "fracture"),
                    frac(&[[0.625, 0.5], [1.0, 0.5]], "fracture"),
                    frac(&[[0.625, 0.0], [0.625, 0.25], [1.0, 0.25]], "fracture"),
                ],
                boundary: BoundarySpec {
                    bottom: BoundaryFunc::dirichlet(0.0),
                    right: BoundaryFunc::dirichlet_linear(0.0, 0.0, 1.0),
                    top: BoundaryFunc::dirichlet(1.0),
                    left: BoundaryFunc::dirichlet_linear(0.0, 0.0, 1.0),
                },
                default_params: unit,
                groups: vec![("fracture", unit)],
                lattice: 8,
            },
        }
    }
}

struct BuiltinDef {
    fractures: Vec<Fracture>,
    boundary: BoundarySpec,
    default_params: FractureParams,
    groups: Vec<(&'static str, FractureParams)>,
    /// Coarsest grid the fracture endpoints conform to; valid resolutions
    /// are positive multiples.
    lattice: usize,
}

/// Normal and tangential permeability of a fracture group.
#[derive(Debug, Clone, Copy)]
pub struct FractureParams {
    pub kappa_perp: f64,
    pub kappa_par: f64,
}

/// Normal permeability governing branch/intersection couplings, which no
/// fracture group owns outright.
#[derive(Debug, Clone, Copy)]
pub enum JunctionKperp {
    /// Use the `kappa_perp` of the branch on the other side of each
    /// coupling.
    Inherit,
    Fixed(f64),
}

/// Everything needed to reproduce one solve.
#[derive(Debug, Clone)]
pub struct CaseConfig {
    pub geometry: Geometry,
    pub method: Method,
    /// Ignored for file geometries, which fix their own cells.
    pub grid: GridKind,
    /// Grid resolution per direction; 0 for file geometries.
    pub nx: usize,
    /// Interface flux cells per lower-dimensional cell.
    pub mortar_ratio: f64,
    /// Default refinement-level count for convergence studies.
    pub levels: usize,
    /// Recorded in outputs so reruns are attributable; no current code
    /// path draws random numbers.
    pub seed: u64,
    /// Output directory; `None` keeps everything in memory.
    pub output: Option<PathBuf>,
    pub matrix_kappa: f64,
    /// Parameters for fractures whose group has no explicit entry.
    pub fracture_default: FractureParams,
    pub groups: BTreeMap<String, FractureParams>,
    pub junction_kperp: JunctionKperp,
    /// Ignored for file geometries, which carry their own boundary tags.
    pub boundary: BoundarySpec,
}

impl CaseConfig {
    /// A runnable configuration for a builtin geometry with its canonical
    /// parameters, resolution 16, and a 0.75 mortar ratio.
    pub fn builtin(geometry: BuiltinGeometry, method: Method) -> CaseConfig {
        let def = geometry.def();
        CaseConfig {
            geometry: Geometry::Builtin(geometry),
            method,
            grid: default_grid(method),
            nx: 16,
            mortar_ratio: 0.75,
            levels: 3,
            seed: 0,
            output: None,
            matrix_kappa: 1.0,
            fracture_default: def.default_params,
            groups: def.groups.iter().map(|&(n, p)| (n.to_string(), p)).collect(),
            junction_kperp: JunctionKperp::Inherit,
            boundary: def.boundary,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |msg: String| Err(HarnessError::Setup(msg));
        if !(self.mortar_ratio > 0.0 && self.mortar_ratio.is_finite()) {
            return bad(format!("mortar_ratio must be positive, got {}", self.mortar_ratio));
        }
        if self.method == Method::Point {
            return bad("the point operator is internal; pick tpfa, p1, or rt0h".into());
        }
        if self.method != Method::Tpfa && self.grid == GridKind::CartesianQuads {
            return bad(format!("{} needs a simplicial grid, not quads", self.method.name()));
        }
        if !(self.matrix_kappa > 0.0 && self.matrix_kappa.is_finite()) {
            return bad(format!("matrix kappa must be positive, got {}", self.matrix_kappa));
        }
        let check = |label: &str, p: FractureParams| {
            if !(p.kappa_perp > 0.0 && p.kappa_perp.is_finite()) {
                return bad(format!("{label}: kappa_perp must be positive, got {}", p.kappa_perp));
            }
            if !(p.kappa_par >= 0.0 && p.kappa_par.is_finite()) {
                return bad(format!(
                    "{label}: kappa_par must be nonnegative, got {}",
                    p.kappa_par
                ));
            }
            Ok(())
        };
        check("fracture default", self.fracture_default)?;
        for (name, &p) in &self.groups {
            check(&format!("fracture group {name}"), p)?;
        }
        if let JunctionKperp::Fixed(v) = self.junction_kperp {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("junction kappa_perp must be positive, got {v}"));
            }
        }
        if let Geometry::Builtin(b) = self.geometry {
            let lattice = b.def().lattice;
            if self.nx == 0 || self.nx % lattice != 0 {
                return bad(format!(
                    "{} needs nx a positive multiple of {lattice}, got {}",
                    b.name(),
                    self.nx
                ));
            }
        }
        if self.levels == 0 {
            return bad("levels must be at least 1".into());
        }
        Ok(())
    }
}

fn default_grid(method: Method) -> GridKind {
    match method {
        Method::Tpfa => GridKind::CartesianQuads,
        _ => GridKind::StructuredTriangles,
    }
}

/// A meshed, parameterized case ready to couple.
#[derive(Debug)]
pub struct BuiltCase {
    pub mesh: MixedDimMesh,
    pub values: BoundaryValues,
    pub tangential: Vec<f64>,
    pub kappa_perp: Vec<f64>,
    pub method: Method,
    pub mortar_ratio: f64,
}

impl BuiltCase {
    pub fn spec(&self) -> ProblemSpec<'_> {
        ProblemSpec {
            mesh: &self.mesh,
            values: &self.values,
            method: self.method,
            tangential: self.tangential.clone(),
            kappa_perp: self.kappa_perp.clone(),
            mortar_ratio: self.mortar_ratio,
            sources: Vec::new(),
        }
    }
}

/// Meshes the configured geometry and spreads the group parameters onto
/// subdomains and pairings.
pub fn build_case(cfg: &CaseConfig) -> Result<BuiltCase, HarnessError> {
    cfg.validate()?;
    let (mesh, values) = match &cfg.geometry {
        Geometry::Builtin(b) => {
            let def = b.def();
            let mut mesh =
                build_structured_mesh(Rect::UNIT, cfg.nx, cfg.nx, cfg.grid, &def.fractures, 1)?;
            let values = mesh.apply_boundary(&cfg.boundary);
            (mesh, values)
        }
        Geometry::File(path) => read_mesh_file(path)?,
    };
    let params_of = |group: &Option<String>| match group {
        Some(g) => cfg.groups.get(g).copied().unwrap_or(cfg.fracture_default),
        None => cfg.fracture_default,
    };
    let tangential = mesh
        .subdomains
        .iter()
        .map(|s| match s.dim {
            2 => cfg.matrix_kappa,
            1 => params_of(&s.group).kappa_par,
            _ => 1.0,
        })
        .collect();
    let kappa_perp = mesh
        .pairings
        .iter()
        .map(|p| {
            if mesh.subdomains[p.key.lower].dim == 0 {
                match cfg.junction_kperp {
                    JunctionKperp::Fixed(v) => v,
                    JunctionKperp::Inherit => {
                        params_of(&mesh.subdomains[p.key.higher].group).kappa_perp
                    }
                }
            } else {
                params_of(&mesh.subdomains[p.key.lower].group).kappa_perp
            }
        })
        .collect();
    Ok(BuiltCase {
        mesh,
        values,
        tangential,
        kappa_perp,
        method: cfg.method,
        mortar_ratio: cfg.mortar_ratio,
    })
}

/// Outcome of one solve: size counts, residuals, mass-balance aggregates,
/// the solution itself, and any files written.
#[derive(Debug)]
pub struct CaseReport {
    pub config: CaseConfig,
    /// Subdomain counts by dimension.
    pub counts: [usize; 3],
    pub n_cells: usize,
    pub n_u: usize,
    pub n_m: usize,
    pub diagnostics: Diagnostics,
    /// Largest per-cell mass defect from recomputed fluxes; `None` when
    /// the method does not expose per-cell fluxes (nodal elements).
    pub cell_balance_max: Option<f64>,
    /// Largest interior flux jump / interface flux mismatch.
    pub continuity_max: Option<f64>,
    /// Total flow entering through exterior boundaries.
    pub inflow: Option<f64>,
    /// Total flow leaving through exterior boundaries.
    pub outflow: Option<f64>,
    /// Signed exterior total; near zero for source-free cases.
    pub imbalance: Option<f64>,
    pub solution: Solution,
    pub files: Vec<PathBuf>,
}

/// Solves one configuration, summarizes it, and writes the configured
/// outputs (per-subdomain VTK fields, an interface flux overlay, and a
/// one-row summary CSV).
pub fn run_case(cfg: &CaseConfig) -> Result<CaseReport, HarnessError> {
    let case = build_case(cfg)?;
    let spec = case.spec();
    let coupled = couple(&spec)?;
    let solution = coupled.solve_global()?;
    let diagnostics = coupled.diagnostics(&solution);
    let audits = coupled.flux_audits(&spec, &solution)?;

    let mut counts = [0usize; 3];
    let mut n_cells = 0;
    for sub in &case.mesh.subdomains {
        counts[sub.dim as usize] += 1;
        n_cells += sub.n_cells();
    }

    // Aggregates are reported only when every subdomain was audited;
    // a partial sum over the auditable subset would not balance.
    let complete = audits.iter().all(Option::is_some);
    let (mut bal, mut cont) = (0.0f64, 0.0f64);
    let (mut inflow, mut outflow, mut net) = (0.0f64, 0.0f64, 0.0f64);
    for audit in audits.iter().flatten() {
        for b in &audit.cell_balance {
            bal = bal.max(b.abs());
        }
        cont = cont.max(audit.continuity_max);
        for q in audit.exterior.values() {
            inflow += (-q).max(0.0);
            outflow += q.max(0.0);
            net += q;
        }
    }

    let mut report = CaseReport {
        config: cfg.clone(),
        counts,
        n_cells,
        n_u: coupled.n_u,
        n_m: coupled.n_m,
        diagnostics,
        cell_balance_max: complete.then_some(bal),
        continuity_max: complete.then_some(cont),
        inflow: complete.then_some(inflow),
        outflow: complete.then_some(outflow),
        imbalance: complete.then_some(net),
        solution,
        files: Vec::new(),
    };

    if let Some(dir) = &cfg.output {
        std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
            path: dir.clone(),
            source,
        })?;
        let fields =
            [CellField { name: "pressure", per_subdomain: &report.solution.pressures }];
        report.files.extend(
            write_vtk_series(&case.mesh, &fields, dir, "fields")
                .map_err(|source| HarnessError::Io { path: dir.clone(), source })?,
        );

        let mut segments = Vec::new();
        let mut flux = Vec::new();
        let mut which = Vec::new();
        for (k, itf) in coupled.interfaces.iter().enumerate() {
            segments.extend_from_slice(&itf.segments);
            flux.extend_from_slice(&report.solution.lambda[k]);
            which.extend(std::iter::repeat(k as f64).take(itf.n_mortar()));
        }
        if !segments.is_empty() {
            let path = dir.join("interface_flux.vtk");
            write_vtk_segments(
                &segments,
                &[("mortar_flux", &flux), ("interface", &which)],
                &path,
            )
            .map_err(|source| HarnessError::Io { path: path.clone(), source })?;
            report.files.push(path);
        }

        let path = dir.join("summary.csv");
        write_summary_csv(&report, &path)?;
        report.files.push(path);
    }
    Ok(report)
}

pub(crate) fn grid_name(grid: GridKind) -> &'static str {
    match grid {
        GridKind::CartesianQuads => "quads",
        GridKind::StructuredTriangles => "triangles",
    }
}

/// Quotes a CSV field only when it needs it (separators or quotes inside).
pub(crate) fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') || s.contains('\n') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub(crate) fn csv_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_summary_csv(report: &CaseReport, path: impl AsRef<Path>) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let cfg = &report.config;
    let d = report.diagnostics;
    let mut text = String::from(
        "geometry,method,grid,nx,mortar_ratio,seed,matrix_kappa,n_0d,n_1d,n_2d,n_cells,n_u,n_m,\
         residual_max,interface_residual_max,lambda_abs_max,cell_balance_max,continuity_max,\
         inflow,outflow,imbalance\n",
    );
    text.push_str(&format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        csv_field(&cfg.geometry.label()),
        cfg.method.name(),
        grid_name(cfg.grid),
        cfg.nx,
        cfg.mortar_ratio,
        cfg.seed,
        cfg.matrix_kappa,
        report.counts[0],
        report.counts[1],
        report.counts[2],
        report.n_cells,
        report.n_u,
        report.n_m,
        d.residual_max,
        d.interface_residual_max,
        d.lambda_abs_max,
        csv_opt(report.cell_balance_max),
        csv_opt(report.continuity_max),
        csv_opt(report.inflow),
        csv_opt(report.outflow),
        csv_opt(report.imbalance),
    ));
    std::fs::write(path, text)
        .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}
