//! Command-line driver: solve one case, run a refinement study, or sweep
//! interface stability. Results land as CSV (plus VTK fields for `run`) in
//! the configured output directory and as a short table on stdout.
//!
//! Exit codes: 0 on success, 2 for configuration and usage problems
//! (malformed config text, unknown method, bad study parameters), 1 for
//! everything that goes wrong after setup (singular systems, I/O).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};
use mdfc::harness::{
    convergence_study, load_config, run_case, stability_sweep, write_convergence_csv,
    write_stability_csv, CaseConfig, HarnessError,
};

#[derive(Parser)]
#[command(name = "mdfc", version, about = "Darcy flow on fractured domains, mortar-coupled across dimensions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve one case; write per-subdomain fields and a one-row summary.
    Run {
        /// Case description (sectioned key = value text).
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Output directory; overrides the config's `output`, defaults to
        /// the current directory if neither is set.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Refine the grid and report mortar-flux errors against a finer
    /// reference solve.
    Converge {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Refinement levels; overrides the config's `levels`.
        #[arg(long, value_name = "N")]
        levels: Option<usize>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Sweep fracture permeabilities and mortar ratios, recording the
    /// smallest eigenvalue of the interface system at each point.
    Stability {
        #[arg(long, value_name = "FILE")]
        config: PathBuf,
        /// Normal permeabilities, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1e-4,1e-3,1e-2,1e-1")]
        kperp: Vec<f64>,
        /// Tangential permeabilities, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        kpar: Vec<f64>,
        /// Mortar coarsening ratios, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "0.75,1")]
        ratios: Vec<f64>,
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            match err {
                HarnessError::Config { .. } | HarnessError::Setup(_) => {
                    eprintln!("{}", Cli::command().render_usage());
                    ExitCode::from(2)
                }
                _ => ExitCode::FAILURE,
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, out } => {
            let mut cfg = load_config(config)?;
            cfg.output = out.or(cfg.output).or_else(|| Some(PathBuf::from(".")));
            let report = run_case(&cfg)?;
            let c = &report.config;
            println!(
                "{} / {} on {} nx={} (cells {}, unknowns {}, mortar {})",
                c.geometry.label(),
                c.method.name(),
                grid_label(c),
                c.nx,
                report.n_cells,
                report.n_u,
                report.n_m,
            );
            let d = report.diagnostics;
            println!(
                "residual {:.3e}  interface {:.3e}  max|flux| {:.6}",
                d.residual_max, d.interface_residual_max, d.lambda_abs_max
            );
            if let (Some(i), Some(o), Some(net)) = (report.inflow, report.outflow, report.imbalance)
            {
                println!("inflow {i:.9}  outflow {o:.9}  imbalance {net:.3e}");
            }
            for file in &report.files {
                println!("wrote {}", file.display());
            }
            Ok(())
        }
        Command::Converge { config, levels, out } => {
            let mut cfg = load_config(config)?;
            if let Some(n) = levels {
                cfg.levels = n;
            }
            if out.is_some() {
                cfg.output = out;
            }
            let table = convergence_study(&cfg, cfg.levels)?;
            println!(
                "{} / {} on {}, reference nx={}",
                table.geometry,
                table.method.name(),
                grid_label(&cfg),
                table.reference_nx
            );
            println!("{:>6} {:>12} {:>7} {:>12} {:>7}", "nx", "err_1d", "rate", "err_0d", "rate");
            for row in &table.rows {
                println!(
                    "{:>6} {:>12.4e} {:>7} {:>12.4e} {:>7}",
                    row.nx,
                    row.err_1d,
                    rate_label(row.rate_1d),
                    row.err_0d,
                    rate_label(row.rate_0d),
                );
            }
            let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("."));
            ensure_dir(&dir)?;
            let path = dir.join("convergence.csv");
            write_convergence_csv(&table, &path)?;
            println!("wrote {}", path.display());
            Ok(())
        }
        Command::Stability { config, kperp, kpar, ratios, out } => {
            let mut cfg = load_config(config)?;
            if out.is_some() {
                cfg.output = out;
            }
            let table = stability_sweep(&cfg, &kperp, &kpar, &ratios)?;
            println!("{} ({} rows)", table.geometry, table.rows.len());
            println!(
                "{:>6} {:>9} {:>9} {:>9} {:>12}",
                "ratio", "kperp", "kpar", "n_min", "n_min*kperp"
            );
            for row in &table.rows {
                println!(
                    "{:>6} {:>9.1e} {:>9.1e} {:>9.3e} {:>12.4e}",
                    row.mortar_ratio,
                    row.kappa_perp,
                    row.kappa_par,
                    row.n_min,
                    row.n_min * row.kappa_perp,
                );
            }
            let dir = cfg.output.clone().unwrap_or_else(|| PathBuf::from("."));
            ensure_dir(&dir)?;
            let path = dir.join("stability.csv");
            write_stability_csv(&table, &path)?;
            println!("wrote {}", path.display());
            Ok(())
        }
    }
}

fn grid_label(cfg: &CaseConfig) -> &'static str {
    match cfg.grid {
        mdfc::mesh::GridKind::CartesianQuads => "quads",
        mdfc::mesh::GridKind::StructuredTriangles => "triangles",
    }
}

fn rate_label(rate: Option<f64>) -> String {
    rate.map(|r| format!("{r:.2}")).unwrap_or_else(|| "-".into())
}

fn ensure_dir(dir: &PathBuf) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir)
        .map_err(|source| HarnessError::Io { path: dir.clone(), source })
}
