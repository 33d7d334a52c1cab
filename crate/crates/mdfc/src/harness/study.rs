//! Refinement studies and interface-stiffness sweeps over a base
//! configuration.
//!
//! Both studies compare or probe solutions through the interface flux
//! fields alone: fluxes live on one-dimensional (or point) grids whose
//! arclength coordinates are directly comparable across resolutions and
//! across subdomain grid kinds, so no volumetric interpolation is needed.

use std::path::Path;

use super::{
    build_case, csv_field, csv_opt, grid_name, CaseConfig, FractureParams, HarnessError,
    JunctionKperp,
};
use crate::assembly::couple;
use crate::disc::Method;
use crate::linalg::min_eigenvalue_sym;
use crate::mesh::{GridKind, InterfaceRef};
use crate::mortar::p0_l2_error;

/// The interface flux part of a solution, with enough geometry to compare
/// against another resolution of the same problem.
#[derive(Debug, Clone)]
pub struct MortarField {
    pub keys: Vec<InterfaceRef>,
    /// Dimension of each interface's lower subdomain.
    pub dims: Vec<u8>,
    /// Arclength partition of each interface into flux cells.
    pub breaks: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
}

/// Solves the configuration and keeps only the interface fluxes.
pub fn solve_mortar_field(cfg: &CaseConfig) -> Result<MortarField, HarnessError> {
    let case = build_case(cfg)?;
    let spec = case.spec();
    let coupled = couple(&spec)?;
    let solution = coupled.solve_global()?;
    Ok(MortarField {
        keys: coupled.interfaces.iter().map(|itf| itf.key).collect(),
        dims: coupled
            .interfaces
            .iter()
            .map(|itf| case.mesh.subdomains[itf.key.lower].dim)
            .collect(),
        breaks: coupled.interfaces.iter().map(|itf| itf.breaks.clone()).collect(),
        lambda: solution.lambda,
    })
}

/// Measure-weighted L2 error of a flux field against a reference field on
/// the same interface set, summed over interfaces and split by lower
/// dimension: `[branch interfaces, point interfaces]`.
///
/// The fields may use different flux grids: on each interface the reference
/// is averaged (measure-weighted P0 projection) onto the solution's flux
/// cells before the squared mismatch is integrated, so the solution is
/// judged against the best piecewise-constant representation its own grid
/// admits. Fine-scale redistribution inside a single solution cell, such as
/// the sharpening flux peak where a conductive branch ends, therefore stops
/// polluting the error once the cell means are right. The arguments are not
/// interchangeable; the reference goes second.
pub fn mortar_l2_error(a: &MortarField, b: &MortarField) -> Result<[f64; 2], HarnessError> {
    if a.keys != b.keys || a.dims != b.dims {
        return Err(HarnessError::InterfaceMismatch);
    }
    let mut acc = [0.0f64; 2];
    for k in 0..a.keys.len() {
        let d = p0_l2_error(&a.breaks[k], &a.lambda[k], &b.breaks[k], &b.lambda[k]);
        let bucket = usize::from(a.dims[k] == 0);
        acc[bucket] += d * d;
    }
    Ok([acc[0].sqrt(), acc[1].sqrt()])
}

/// Solves the same geometry and parameters at resolution `nx` with the
/// face-flux element on triangles, the most accurate combination this
/// crate offers, for use as a study reference.
pub fn reference_field(cfg: &CaseConfig, nx: usize) -> Result<MortarField, HarnessError> {
    let mut rc = cfg.clone();
    rc.method = Method::Rt0h;
    rc.grid = GridKind::StructuredTriangles;
    rc.nx = nx;
    rc.output = None;
    solve_mortar_field(&rc)
}

#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub level: usize,
    pub nx: usize,
    /// Cell width `1/nx`; strictly decreasing across rows.
    pub h: f64,
    pub err_1d: f64,
    /// `log2(previous error / this error)`, defined from the second row
    /// on when both errors are nonzero.
    pub rate_1d: Option<f64>,
    pub err_0d: f64,
    pub rate_0d: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub geometry: String,
    pub method: Method,
    pub grid: GridKind,
    pub mortar_ratio: f64,
    pub reference_nx: usize,
    pub rows: Vec<ConvergenceRow>,
}

/// Runs `levels` doublings of the configured resolution and reports
/// interface flux errors against a reference four times finer than the
/// finest level.
pub fn convergence_study(cfg: &CaseConfig, levels: usize) -> Result<ConvergenceTable, HarnessError> {
    if levels < 3 {
        return Err(HarnessError::Setup(format!(
            "a convergence study needs at least 3 levels, got {levels}"
        )));
    }
    let finest = cfg.nx << (levels - 1);
    let reference_nx = finest * 4;
    let reference = reference_field(cfg, reference_nx)?;
    convergence_against(cfg, levels, reference_nx, &reference)
}

/// The study loop against a caller-supplied reference, so the same levels
/// can be re-evaluated against references of different quality.
pub fn convergence_against(
    cfg: &CaseConfig,
    levels: usize,
    reference_nx: usize,
    reference: &MortarField,
) -> Result<ConvergenceTable, HarnessError> {
    if levels == 0 {
        return Err(HarnessError::Setup("a study needs at least 1 level".into()));
    }
    let rate = |prev: f64, cur: f64| (prev > 0.0 && cur > 0.0).then(|| (prev / cur).log2());
    let mut rows: Vec<ConvergenceRow> = Vec::with_capacity(levels);
    for level in 0..levels {
        let mut lc = cfg.clone();
        lc.nx = cfg.nx << level;
        lc.output = None;
        let field = solve_mortar_field(&lc)?;
        let [err_1d, err_0d] = mortar_l2_error(&field, reference)?;
        let (rate_1d, rate_0d) = match rows.last() {
            Some(prev) => (rate(prev.err_1d, err_1d), rate(prev.err_0d, err_0d)),
            None => (None, None),
        };
        rows.push(ConvergenceRow {
            level,
            nx: lc.nx,
            h: 1.0 / lc.nx as f64,
            err_1d,
            rate_1d,
            err_0d,
            rate_0d,
        });
    }
    Ok(ConvergenceTable {
        geometry: cfg.geometry.label(),
        method: cfg.method,
        grid: cfg.grid,
        mortar_ratio: cfg.mortar_ratio,
        reference_nx,
        rows,
    })
}

#[derive(Debug, Clone)]
pub struct StabilityRow {
    pub method: Method,
    pub nx: usize,
    pub mortar_ratio: f64,
    pub kappa_perp: f64,
    pub kappa_par: f64,
    /// Flux cells per higher-side trace column, aggregated over branch
    /// interfaces; below 1 when the flux grid is coarser than the traces.
    pub per_higher: f64,
    /// Flux cells per lower-side cell, aggregated over branch interfaces.
    pub per_lower: f64,
    /// Smallest eigenvalue of the interface complement.
    pub n_min: f64,
}

#[derive(Debug, Clone)]
pub struct StabilityTable {
    pub geometry: String,
    pub grid: GridKind,
    pub rows: Vec<StabilityRow>,
}

/// Assembles the interface complement for every (ratio, kappa_perp,
/// kappa_par) tuple and records its smallest eigenvalue. The sweep values
/// replace all fracture groups uniformly, junctions included. Points run
/// in a worker pool sized by `MDFC_THREADS` (default: available cores);
/// rows come back in tuple order regardless of worker count.
pub fn stability_sweep(
    cfg: &CaseConfig,
    kperp_grid: &[f64],
    kpar_grid: &[f64],
    ratio_grid: &[f64],
) -> Result<StabilityTable, HarnessError> {
    if kperp_grid.is_empty() || kpar_grid.is_empty() || ratio_grid.is_empty() {
        return Err(HarnessError::Setup(
            "a stability sweep needs at least one value per parameter".into(),
        ));
    }
    for &k in kperp_grid {
        if !(k > 0.0 && k.is_finite()) {
            return Err(HarnessError::Setup(format!(
                "a stability sweep needs kappa_perp > 0, got {k}"
            )));
        }
    }
    let mut points = Vec::new();
    for &ratio in ratio_grid {
        for &kperp in kperp_grid {
            for &kpar in kpar_grid {
                points.push((ratio, kperp, kpar));
            }
        }
    }

    let workers = worker_count(points.len());
    let mut slots: Vec<Option<Result<StabilityRow, HarnessError>>> = Vec::new();
    slots.resize_with(points.len(), || None);
    if workers <= 1 {
        for (slot, &point) in slots.iter_mut().zip(&points) {
            *slot = Some(sweep_point(cfg, point));
        }
    } else {
        // Round-robin hand-out: each worker owns disjoint slots, and the
        // result order is the slot order, so worker count cannot change
        // the table.
        let mut bins: Vec<Vec<(usize, &mut Option<Result<StabilityRow, HarnessError>>)>> =
            (0..workers).map(|_| Vec::new()).collect();
        for (i, slot) in slots.iter_mut().enumerate() {
            bins[i % workers].push((i, slot));
        }
        let points = &points;
        std::thread::scope(|scope| {
            for bin in bins {
                scope.spawn(move || {
                    for (i, slot) in bin {
                        *slot = Some(sweep_point(cfg, points[i]));
                    }
                });
            }
        });
    }

    let mut rows = Vec::with_capacity(points.len());
    for slot in slots {
        rows.push(slot.expect("every sweep slot is filled")?);
    }
    Ok(StabilityTable { geometry: cfg.geometry.label(), grid: cfg.grid, rows })
}

fn sweep_point(
    cfg: &CaseConfig,
    (ratio, kperp, kpar): (f64, f64, f64),
) -> Result<StabilityRow, HarnessError> {
    let mut pc = cfg.clone();
    pc.mortar_ratio = ratio;
    pc.fracture_default = FractureParams { kappa_perp: kperp, kappa_par: kpar };
    pc.groups.clear();
    pc.junction_kperp = JunctionKperp::Fixed(kperp);
    pc.output = None;

    let case = build_case(&pc)?;
    let spec = case.spec();
    let coupled = couple(&spec)?;
    let system = coupled.schur()?;
    let (n_min, _) = min_eigenvalue_sym(&system.matrix)?;

    let (mut n_mortar, mut n_lower, mut n_higher) = (0usize, 0usize, 0usize);
    for itf in &coupled.interfaces {
        if case.mesh.subdomains[itf.key.lower].dim != 1 {
            continue;
        }
        n_mortar += itf.n_mortar();
        n_lower += itf.lower_cols.len();
        n_higher += itf.higher_cols.len();
    }
    let per = |n: usize| if n == 0 { 0.0 } else { n_mortar as f64 / n as f64 };
    Ok(StabilityRow {
        method: pc.method,
        nx: pc.nx,
        mortar_ratio: ratio,
        kappa_perp: kperp,
        kappa_par: kpar,
        per_higher: per(n_higher),
        per_lower: per(n_lower),
        n_min,
    })
}

/// Worker pool size: `MDFC_THREADS` when set to a positive integer, else
/// the machine's available parallelism, never more than `tasks`.
fn worker_count(tasks: usize) -> usize {
    let configured = std::env::var("MDFC_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    configured.min(tasks).max(1)
}

pub fn write_convergence_csv(
    table: &ConvergenceTable,
    path: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let mut text = String::from(
        "geometry,method,grid,mortar_ratio,reference_nx,level,nx,h,err_1d,rate_1d,err_0d,rate_0d\n",
    );
    for row in &table.rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}\n",
            csv_field(&table.geometry),
            table.method.name(),
            grid_name(table.grid),
            table.mortar_ratio,
            table.reference_nx,
            row.level,
            row.nx,
            row.h,
            row.err_1d,
            csv_opt(row.rate_1d),
            row.err_0d,
            csv_opt(row.rate_0d),
        ));
    }
    std::fs::write(path, text)
        .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

pub fn write_stability_csv(
    table: &StabilityTable,
    path: impl AsRef<Path>,
) -> Result<(), HarnessError> {
    let path = path.as_ref();
    let mut text = String::from(
        "geometry,method,grid,nx,mortar_ratio,kappa_perp,kappa_par,\
         mortar_per_higher,mortar_per_lower,n_min\n",
    );
    for row in &table.rows {
        text.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            csv_field(&table.geometry),
            row.method.name(),
            grid_name(table.grid),
            row.nx,
            row.mortar_ratio,
            row.kappa_perp,
            row.kappa_par,
            row.per_higher,
            row.per_lower,
            row.n_min,
        ));
    }
    std::fs::write(path, text)
        .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}
