//! Command-line front end for the nonlocal finite-volume solver.

mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::{info, warn};
use nonlocal_fv::diagnostics::TOL_ENTROPY;
use nonlocal_fv::experiments::{convergence_study, stability_experiment, Perturbation, Target};
use nonlocal_fv::solver::EntropySchedule;
use nonlocal_fv::{parse_config, solve, BoundMode, Error, RunConfig};
use serde_json::json;

#[derive(Debug, Parser)]
#[command(name = "nonlocal-fv", version, about = "Lax-Friedrichs solver for nonlocal conservation laws on a bounded interval")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the scheme and write solution, interface and diagnostics CSVs.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Stop with exit code 2 at the first violated a-priori bound.
        #[arg(long)]
        strict_bounds: bool,
        /// Output directory; defaults to the config's `out`, then `.`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the a-priori constants over the time grid as JSON.
    Bounds {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "constants.json")]
        out: PathBuf,
    },
    /// Grid self-convergence over doubling cell counts at fixed lambda.
    Convergence {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        levels: Vec<usize>,
        #[arg(long, default_value = "conv.json")]
        out: PathBuf,
    },
    /// Compare two runs with shifted data against the stability bound.
    Stability {
        #[arg(long)]
        config: PathBuf,
        /// `eps=<float>,target=initial|left|right|all`.
        #[arg(long, default_value = "eps=1e-3,target=initial")]
        perturb: String,
        /// Cell count; defaults to the config's `N`.
        #[arg(long)]
        cells: Option<usize>,
        #[arg(long, default_value = "stab.json")]
        out: PathBuf,
    },
    /// Check the discrete entropy inequalities at every step.
    EntropyCheck {
        #[arg(long)]
        config: PathBuf,
        /// Optional JSON report.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Maps a library error to the process exit code.
fn exit_code(err: &Error) -> u8 {
    match err.root() {
        Error::BoundViolation { .. } => 2,
        Error::ConfigSyntax(_)
        | Error::ConfigSemantic(_)
        | Error::InvalidArgument(_)
        | Error::InvalidDomain { .. }
        | Error::InvalidMesh(_)
        | Error::InvalidCellCount(_)
        | Error::NegativeDatum { .. }
        | Error::EmptyBox(_) => 3,
        Error::CflViolation { .. } | Error::NonPositiveWindow { .. } | Error::DegenerateSupport => 4,
        _ => 5,
    }
}

fn parse_perturbation(text: &str) -> Result<Perturbation, Error> {
    let mut eps = None;
    let mut target = Target::Initial;
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let (key, value) = part
            .split_once('=')
            .ok_or_else(|| Error::InvalidArgument(format!("expected key=value in --perturb, got {part:?}")))?;
        match key.trim() {
            "eps" => {
                let v: f64 = value
                    .trim()
                    .parse()
                    .map_err(|_| Error::InvalidArgument(format!("eps must be a number, got {value:?}")))?;
                eps = Some(v);
            }
            "target" => target = value.trim().parse()?,
            other => return Err(Error::InvalidArgument(format!("unknown --perturb key {other:?}"))),
        }
    }
    let eps = eps.ok_or_else(|| Error::InvalidArgument("--perturb needs eps=<value>".into()))?;
    Ok(Perturbation { eps, target })
}

fn configure_threads() -> Result<(), Error> {
    let Ok(raw) = std::env::var("SOLVER_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| Error::InvalidArgument(format!("SOLVER_THREADS must be an integer >= 1, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Error::InvalidArgument(format!("cannot configure {n} threads: {e}")))
}

fn write_report(path: &Path, value: &serde_json::Value) -> Result<(), Error> {
    output::write_json(path, value)?;
    info!("wrote {}", path.display());
    Ok(())
}

fn to_value<T: serde::Serialize>(v: &T) -> Result<serde_json::Value, Error> {
    serde_json::to_value(v).map_err(|e| Error::Io(e.to_string()))
}

fn run_solve(config: &Path, strict: bool, out: Option<PathBuf>) -> Result<(), Error> {
    let cfg = parse_config(config)?;
    let problem = cfg.problem()?;
    let mut options = cfg.solve_options();
    if strict {
        options.mode = BoundMode::Strict;
    }
    let tr = solve(&problem, &options)?;
    for v in tr.violations.iter().take(10) {
        warn!("{v}");
    }
    if tr.violations.len() > 10 {
        warn!("{} further bound violations not shown", tr.violations.len() - 10);
    }
    if tr.out_of_box_steps > 0 {
        warn!("{} time levels left the flux validity box", tr.out_of_box_steps);
    }
    let dir = out.or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("."));
    let mesh = &problem.mesh;
    output::write_solution(&dir.join("solution.csv"), &tr, mesh)?;
    output::write_interfaces(&dir.join("interfaces.csv"), &tr, mesh)?;
    output::write_diagnostics(&dir.join("diagnostics.csv"), &tr.records)?;
    info!(
        "N = {}, {} steps, lambda = {}, alpha = {}; outputs in {}",
        mesh.n_cells,
        mesh.n_steps,
        mesh.lambda,
        mesh.alpha,
        dir.display()
    );
    Ok(())
}

fn run_bounds(config: &Path, out: &Path) -> Result<(), Error> {
    let cfg = parse_config(config)?;
    let constants = cfg.problem()?.constants()?;
    write_report(out, &constants.to_json())
}

fn run_convergence(config: &Path, levels: &[usize], out: &Path) -> Result<(), Error> {
    let cfg = parse_config(config)?;
    let result = convergence_study(&cfg, levels)?;
    if !result.strictly_decreasing {
        warn!("L1 differences do not decrease strictly: {:?}", result.differences);
    }
    write_report(out, &to_value(&result)?)
}

fn run_stability(config: &Path, perturb: &str, cells: Option<usize>, out: &Path) -> Result<(), Error> {
    let perturbation = parse_perturbation(perturb)?;
    let cfg = parse_config(config)?;
    let result = stability_experiment(&cfg, perturbation, cells)?;
    if result.final_bound.is_infinite() {
        warn!(
            "stability bound overflows f64 (log = {:e}); see log_final_bound",
            result.log_final_bound
        );
    }
    write_report(out, &to_value(&result)?)
}

/// Returns whether every residual stayed within tolerance.
fn run_entropy_check(config: &Path, out: Option<&Path>) -> Result<bool, Error> {
    let cfg: RunConfig = parse_config(config)?;
    let problem = cfg.problem()?;
    let mut options = cfg.solve_options();
    options.entropy = EntropySchedule::Every(1);
    options.check_bounds = false;
    options.mode = BoundMode::Monitor;
    options.stride = usize::MAX;
    let tr = solve(&problem, &options)?;
    let worst = |f: fn(&nonlocal_fv::DiagnosticsRecord) -> Option<f64>| {
        tr.records
            .iter()
            .filter_map(|r| f(r).map(|v| (r.step, v)))
            .fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a })
    };
    let plus = worst(|r| r.entropy_plus_max);
    let minus = worst(|r| r.entropy_minus_max);
    let failing: Vec<usize> = tr
        .records
        .iter()
        .filter(|r| {
            [r.entropy_plus_max, r.entropy_minus_max]
                .iter()
                .flatten()
                .any(|&v| v > TOL_ENTROPY || v.is_nan())
        })
        .map(|r| r.step)
        .collect();
    let passed = failing.is_empty();
    eprintln!(
        "entropy check: max residual+ {:e} (step {}), max residual- {:e} (step {}), tolerance {:e}: {}",
        plus.1,
        plus.0,
        minus.1,
        minus.0,
        TOL_ENTROPY,
        if passed { "ok" } else { "FAILED" }
    );
    if let Some(path) = out {
        let report = json!({
            "n_cells": problem.mesh.n_cells,
            "n_steps": problem.mesh.n_steps,
            "k_grid": cfg.k_grid,
            "tolerance": TOL_ENTROPY,
            "max_residual_plus": plus.1,
            "max_residual_plus_step": plus.0,
            "max_residual_minus": minus.1,
            "max_residual_minus_step": minus.0,
            "failing_steps": failing,
            "passed": passed,
        });
        write_report(path, &report)?;
    }
    Ok(passed)
}

fn run(cli: Cli) -> Result<u8, Error> {
    configure_threads()?;
    match cli.command {
        Command::Solve { config, strict_bounds, out } => run_solve(&config, strict_bounds, out)?,
        Command::Bounds { config, out } => run_bounds(&config, &out)?,
        Command::Convergence { config, levels, out } => run_convergence(&config, &levels, &out)?,
        Command::Stability { config, perturb, cells, out } => run_stability(&config, &perturb, cells, &out)?,
        Command::EntropyCheck { config, out } => {
            if !run_entropy_check(&config, out.as_deref())? {
                return Ok(2);
            }
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(3),
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
