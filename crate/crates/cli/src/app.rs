//! Command dispatch for the `nfs` binary.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use nfs_core::inverse::mu_for_region;
use nfs_core::parallel::configure_threads;
use nfs_core::scenario::{builtin, builtin_scenarios, run_scenario, CaseId, ScenarioConfig};
use nfs_core::NfsError;
use serde_json::json;

use crate::output::{write_run_atomic, GridFormat};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "nfs", version, about = "Synthesize acoustic fields from a small spherical source")]
pub struct Cli {
    /// Worker threads for the parallel kernels.
    #[arg(long, global = true, env = "NFS_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve a scenario and write its outputs.
    Run(RunArgs),
    /// Check a scenario and print the effective config.
    Validate(Source),
    /// Print the built-in scenarios.
    ListBuiltins,
}

#[derive(Debug, Args)]
pub struct Source {
    /// Scenario config (JSON).
    #[arg(conflicts_with = "builtin", required_unless_present = "builtin")]
    pub config: Option<PathBuf>,

    /// Use a built-in scenario instead of a file.
    #[arg(long, value_parser = parse_case)]
    pub builtin: Option<CaseId>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: Source,

    /// Output directory, replaced on success.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,

    #[arg(long, value_enum, default_value_t = GridFormat::Bin)]
    pub format: GridFormat,

    /// Discrepancy target on the match region.
    #[arg(long)]
    pub delta: Option<f64>,

    /// Bracket for the regularization parameter search.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    pub alpha_range: Option<Vec<f64>>,
}

fn parse_case(s: &str) -> Result<CaseId, String> {
    s.parse::<CaseId>().map_err(|e| e.to_string())
}

/// Failure carrying its exit code and a JSON payload for stderr.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub body: serde_json::Value,
}

impl Failure {
    fn invalid(kind: &str, message: impl Into<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            body: json!({ "error": kind, "message": message.into() }),
        }
    }

    fn violations(v: Vec<String>) -> Self {
        Self {
            code: EXIT_INVALID,
            body: json!({ "error": "validation", "message": "config is invalid", "violations": v }),
        }
    }
}

impl From<NfsError> for Failure {
    fn from(e: NfsError) -> Self {
        let code = match e {
            NfsError::Config(_) | NfsError::Geometry(_) | NfsError::Unsupported(_) | NfsError::Json(_) => {
                EXIT_INVALID
            }
            _ => EXIT_NUMERICAL,
        };
        Self {
            code,
            body: json!({ "error": e.kind(), "message": e.to_string() }),
        }
    }
}

fn load_config(path: &Path) -> Result<ScenarioConfig, Failure> {
    let text = fs::read_to_string(path)
        .map_err(|e| Failure::invalid("io", format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Failure::invalid("parse", format!("{}: {e}", path.display())))
}

fn load(source: &Source) -> Result<ScenarioConfig, Failure> {
    match (&source.config, source.builtin) {
        (_, Some(case)) => Ok(builtin(case)),
        (Some(path), None) => load_config(path),
        (None, None) => Err(Failure::invalid("usage", "a config path or --builtin is required")),
    }
}

fn checked(cfg: ScenarioConfig) -> Result<ScenarioConfig, Failure> {
    let v = cfg.violations();
    if !v.is_empty() {
        return Err(Failure::violations(v));
    }
    Ok(cfg.resolved()?)
}

fn apply_overrides(cfg: &mut ScenarioConfig, args: &RunArgs) {
    if let Some(d) = args.delta {
        cfg.morozov.delta = d;
    }
    if let Some(r) = &args.alpha_range {
        cfg.morozov.alpha_range = [r[0], r[1]];
    }
}

/// Execute `cli`, printing results to stdout. Returns the exit code on success.
pub fn execute(cli: Cli) -> Result<i32, Failure> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::invalid("usage", "--threads must be positive"));
        }
        configure_threads(n);
    }
    match cli.command {
        Command::ListBuiltins => {
            let list: Vec<_> = builtin_scenarios()
                .iter()
                .map(|c| json!({ "case": c.case, "name": c.name, "null_region": c.d2.is_some() }))
                .collect();
            println!("{}", serde_json::to_string_pretty(&list).expect("serializable"));
            Ok(EXIT_OK)
        }
        Command::Validate(source) => {
            let cfg = checked(load(&source)?)?;
            let mu = mu_for_region(cfg.d2.as_ref())?;
            let out = json!({
                "valid": true,
                "mu": mu,
                "config_hash": cfg.hash()?,
                "config": cfg,
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
            Ok(EXIT_OK)
        }
        Command::Run(args) => {
            let mut cfg = load(&args.source)?;
            apply_overrides(&mut cfg, &args);
            let cfg = checked(cfg)?;
            let run = run_scenario(&cfg)?;
            for w in &run.metrics.warnings {
                eprintln!("{}", json!({ "warning": w }));
            }
            write_run_atomic(&args.out, &run, args.format).map_err(|e| Failure {
                code: EXIT_NUMERICAL,
                body: json!({ "error": e.kind(), "message": e.to_string() }),
            })?;
            let s = &run.metrics.summary;
            let out = json!({
                "scenario": run.metrics.scenario,
                "out": args.out,
                "alpha": run.metrics.solve.alpha,
                "morozov_converged": run.metrics.solve.morozov_converged,
                "summary": s,
            });
            println!("{}", serde_json::to_string_pretty(&out).expect("serializable"));
            Ok(EXIT_OK)
        }
    }
}
