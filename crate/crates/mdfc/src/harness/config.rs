//! Sectioned `key = value` configuration text.
//!
//! Sections: `[case]` (geometry, method, grid, nx, mortar_ratio, levels,
//! seed, output), `[matrix]` (kappa), `[fracture]` and `[fracture.GROUP]`
//! (kappa_perp, kappa_par), `[junction]` (kappa_perp), `[boundary]`
//! (bottom/right/top/left). `#` starts a comment anywhere on a line.
//! Unknown sections, unknown keys, and duplicate keys are hard errors, so
//! a config that parses is a config that ran as written.
//!
//! Fracture parameters resolve per field: an explicit `[fracture.GROUP]`
//! entry wins over `[fracture]`, which wins over the geometry's own group
//! table, which wins over its default. File geometries carry their own
//! cells and boundary tags, so `nx`, `grid`, and `[boundary]` are
//! rejected for them.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use super::{
    default_grid, BoundarySpec, BuiltinGeometry, CaseConfig, FractureParams, Geometry,
    HarnessError, JunctionKperp,
};
use crate::disc::Method;
use crate::mesh::{BoundaryFunc, GridKind};

pub fn load_config(path: impl AsRef<Path>) -> Result<CaseConfig, HarnessError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
    parse_config(&text, &path.display().to_string())
}

struct Item<'a> {
    section: String,
    key: &'a str,
    value: &'a str,
    line: usize,
}

fn cerr(file: &str, line: usize, msg: String) -> HarnessError {
    HarnessError::Config { file: file.to_string(), line, msg }
}

fn known_section(name: &str) -> bool {
    matches!(name, "case" | "matrix" | "fracture" | "junction" | "boundary")
        || name.strip_prefix("fracture.").is_some_and(|g| !g.is_empty())
}

fn known_key(section: &str, key: &str) -> bool {
    match section {
        "case" => matches!(
            key,
            "geometry" | "method" | "grid" | "nx" | "mortar_ratio" | "levels" | "seed" | "output"
        ),
        "matrix" => key == "kappa",
        "junction" => key == "kappa_perp",
        "boundary" => matches!(key, "bottom" | "right" | "top" | "left"),
        _ => matches!(key, "kappa_perp" | "kappa_par"),
    }
}

/// Parses configuration text; `origin` names it in error messages.
pub fn parse_config(text: &str, origin: &str) -> Result<CaseConfig, HarnessError> {
    let mut items: Vec<Item<'_>> = Vec::new();
    let mut section: Option<String> = None;
    let mut case_line = 0usize;
    let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(inner) = content.strip_prefix('[') {
            let Some(name) = inner.strip_suffix(']') else {
                return Err(cerr(origin, line, format!("unterminated section header '{content}'")));
            };
            let name = name.trim();
            if !known_section(name) {
                return Err(cerr(origin, line, format!("unknown section [{name}]")));
            }
            if name == "case" && case_line == 0 {
                case_line = line;
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((key, value)) = content.split_once('=') else {
            return Err(cerr(origin, line, format!("expected 'key = value', got '{content}'")));
        };
        let (key, value) = (key.trim(), value.trim());
        let Some(sec) = &section else {
            return Err(cerr(origin, line, format!("key '{key}' appears before any [section]")));
        };
        if !known_key(sec, key) {
            return Err(cerr(origin, line, format!("unknown key '{key}' in [{sec}]")));
        }
        if let Some(prev) = seen.insert((sec.clone(), key.to_string()), line) {
            return Err(cerr(
                origin,
                line,
                format!("duplicate key '{key}' in [{sec}] (first set on line {prev})"),
            ));
        }
        items.push(Item { section: sec.clone(), key, value, line });
    }

    let find = |sec: &str, key: &str| items.iter().find(|it| it.section == sec && it.key == key);
    let num = |it: &Item<'_>| {
        it.value.parse::<f64>().map_err(|_| {
            cerr(origin, it.line, format!("expected a number for '{}', got '{}'", it.key, it.value))
        })
    };
    let int = |it: &Item<'_>| {
        it.value.parse::<usize>().map_err(|_| {
            cerr(
                origin,
                it.line,
                format!("expected a nonnegative integer for '{}', got '{}'", it.key, it.value),
            )
        })
    };

    let geo_item = find("case", "geometry")
        .ok_or_else(|| cerr(origin, case_line, "missing required key 'geometry' in [case]".into()))?;
    let geometry = if let Some(p) = geo_item.value.strip_prefix("file:") {
        Geometry::File(PathBuf::from(p.trim()))
    } else if let Some(b) = BuiltinGeometry::parse_name(geo_item.value) {
        Geometry::Builtin(b)
    } else {
        return Err(cerr(
            origin,
            geo_item.line,
            format!(
                "unknown geometry '{}'; expected nofracture, quasi1d, benchmark2d, \
                 stability3f, or file:PATH",
                geo_item.value
            ),
        ));
    };
    let method_item = find("case", "method")
        .ok_or_else(|| cerr(origin, case_line, "missing required key 'method' in [case]".into()))?;
    let method = match Method::parse_name(method_item.value) {
        Some(m) if m != Method::Point => m,
        _ => {
            return Err(cerr(
                origin,
                method_item.line,
                format!("unknown method '{}'; expected tpfa, p1, or rt0h", method_item.value),
            ))
        }
    };

    let is_file = matches!(geometry, Geometry::File(_));
    let mut cfg = match geometry {
        Geometry::Builtin(b) => CaseConfig::builtin(b, method),
        Geometry::File(_) => CaseConfig {
            geometry,
            method,
            grid: default_grid(method),
            nx: 0,
            mortar_ratio: 0.75,
            levels: 3,
            seed: 0,
            output: None,
            matrix_kappa: 1.0,
            fracture_default: FractureParams { kappa_perp: 1.0, kappa_par: 1.0 },
            groups: BTreeMap::new(),
            junction_kperp: JunctionKperp::Inherit,
            boundary: BoundarySpec::sealed(),
        },
    };

    let mut global: (Option<f64>, Option<f64>) = (None, None);
    let mut per_group: BTreeMap<String, (Option<f64>, Option<f64>)> = BTreeMap::new();
    for it in &items {
        match (it.section.as_str(), it.key) {
            ("case", "geometry") | ("case", "method") => {}
            ("case", "grid") => {
                if is_file {
                    return Err(cerr(origin, it.line, "grid is fixed by the mesh file".into()));
                }
                cfg.grid = match it.value {
                    "quads" => GridKind::CartesianQuads,
                    "triangles" => GridKind::StructuredTriangles,
                    v => {
                        return Err(cerr(
                            origin,
                            it.line,
                            format!("unknown grid '{v}'; expected quads or triangles"),
                        ))
                    }
                };
            }
            ("case", "nx") => {
                if is_file {
                    return Err(cerr(origin, it.line, "nx is fixed by the mesh file".into()));
                }
                cfg.nx = int(it)?;
            }
            ("case", "mortar_ratio") => cfg.mortar_ratio = num(it)?,
            ("case", "levels") => cfg.levels = int(it)?,
            ("case", "seed") => {
                cfg.seed = it.value.parse::<u64>().map_err(|_| {
                    cerr(origin, it.line, format!("expected an integer seed, got '{}'", it.value))
                })?;
            }
            ("case", "output") => cfg.output = Some(PathBuf::from(it.value)),
            ("matrix", "kappa") => cfg.matrix_kappa = num(it)?,
            ("junction", "kappa_perp") => {
                cfg.junction_kperp = if it.value == "inherit" {
                    JunctionKperp::Inherit
                } else {
                    JunctionKperp::Fixed(num(it)?)
                };
            }
            ("boundary", side) => {
                if is_file {
                    return Err(cerr(
                        origin,
                        it.line,
                        "boundary conditions are fixed by the mesh file".into(),
                    ));
                }
                let func = parse_boundary(origin, it)?;
                match side {
                    "bottom" => cfg.boundary.bottom = func,
                    "right" => cfg.boundary.right = func,
                    "top" => cfg.boundary.top = func,
                    _ => cfg.boundary.left = func,
                }
            }
            ("fracture", "kappa_perp") => global.0 = Some(num(it)?),
            ("fracture", "kappa_par") => global.1 = Some(num(it)?),
            (sec, key) => {
                let group = sec["fracture.".len()..].to_string();
                let entry = per_group.entry(group).or_default();
                match key {
                    "kappa_perp" => entry.0 = Some(num(it)?),
                    _ => entry.1 = Some(num(it)?),
                }
            }
        }
    }

    if let Some(v) = global.0 {
        cfg.fracture_default.kappa_perp = v;
        for p in cfg.groups.values_mut() {
            p.kappa_perp = v;
        }
    }
    if let Some(v) = global.1 {
        cfg.fracture_default.kappa_par = v;
        for p in cfg.groups.values_mut() {
            p.kappa_par = v;
        }
    }
    for (group, (perp, par)) in per_group {
        let entry = cfg.groups.entry(group).or_insert(cfg.fracture_default);
        if let Some(v) = perp {
            entry.kappa_perp = v;
        }
        if let Some(v) = par {
            entry.kappa_par = v;
        }
    }

    cfg.validate()?;
    Ok(cfg)
}

fn parse_boundary(origin: &str, it: &Item<'_>) -> Result<BoundaryFunc, HarnessError> {
    let num = |s: &str| {
        s.parse::<f64>()
            .map_err(|_| cerr(origin, it.line, format!("expected a number, got '{s}'")))
    };
    let parts: Vec<&str> = it.value.split_whitespace().collect();
    match parts.as_slice() {
        ["dirichlet", v] => Ok(BoundaryFunc::dirichlet(num(v)?)),
        ["dirichlet_linear", a, bx, cy] => {
            Ok(BoundaryFunc::dirichlet_linear(num(a)?, num(bx)?, num(cy)?))
        }
        ["neumann", v] => Ok(BoundaryFunc::neumann(num(v)?)),
        _ => Err(cerr(
            origin,
            it.line,
            format!(
                "boundary '{}' must be 'dirichlet V', 'dirichlet_linear A BX CY', \
                 or 'neumann V'",
                it.key
            ),
        )),
    }
}
