//! Batch experiment runner: `stochflow <experiment> --config <file>`.
//!
//! Exit codes: 0 when every hard verdict passes, 2 when one fails, 1 on
//! usage, configuration or I/O errors.

pub mod config;
pub mod experiments;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

pub use config::ExperimentConfig;
pub use experiments::{run_experiment, Outcome, EXPERIMENTS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VERDICT: i32 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error("{0}")]
    Usage(String),
    #[error("run failed: {0}")]
    Run(String),
    #[error("output: {0}")]
    Io(String),
}

#[derive(Debug, Parser)]
#[command(name = "stochflow", version, about = "Monte Carlo experiments on regularized stochastic flows")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Moment inequalities: Monte Carlo left-hand sides against closed-form bounds.
    Moments(RunArgs),
    /// Two-point ratios over dyadic near pairs.
    TwoPoint(RunArgs),
    /// Pathwise convergence of the regularized flow across levels.
    Convergence(RunArgs),
    /// Injectivity, order, continuity and explosion diagnostics of the flow map.
    FlowCheck(RunArgs),
    /// Logarithmic growth check of the coefficient family.
    HypothesisCheck(RunArgs),
    /// Closed-form bounds for the configured constants.
    Bounds(RunArgs),
    /// Check a configuration file without running anything.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (default: `output_dir` from the config, else `stochflow-out`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; does not change any numerical result.
    #[arg(long, env = "STOCHFLOW_WORKERS")]
    pub workers: Option<usize>,
}

impl Command {
    fn experiment(&self) -> Option<(&'static str, &RunArgs)> {
        Some(match self {
            Command::Moments(a) => ("moments", a),
            Command::TwoPoint(a) => ("two-point", a),
            Command::Convergence(a) => ("convergence", a),
            Command::FlowCheck(a) => ("flow-check", a),
            Command::HypothesisCheck(a) => ("hypothesis-check", a),
            Command::Bounds(a) => ("bounds", a),
            Command::Validate { .. } => return None,
        })
    }
}

/// Parse and validate a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    let cfg = ExperimentConfig::load(path)?;
    let diags = cfg.diagnostics();
    if diags.is_empty() {
        Ok(cfg)
    } else {
        Err(CliError::Config(diags))
    }
}

/// Result of a completed run.
#[derive(Debug)]
pub struct RunSummary {
    pub report_path: PathBuf,
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
}

/// Run `experiment` and write its report, CSV files and manifest into `out`.
pub fn execute(
    experiment: &str,
    cfg: &ExperimentConfig,
    out: &Path,
    workers: Option<usize>,
) -> Result<RunSummary, CliError> {
    let workers = workers.or(cfg.workers);
    let outcome = match workers {
        Some(0) => return Err(CliError::Usage("workers must be >= 1".into())),
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build()
            .map_err(|e| CliError::Run(e.to_string()))?
            .install(|| run_experiment(experiment, cfg))?,
        None => run_experiment(experiment, cfg)?,
    };
    write_outputs(experiment, cfg, outcome, out)
}

fn write_outputs(experiment: &str, cfg: &ExperimentConfig, outcome: Outcome, out: &Path) -> Result<RunSummary, CliError> {
    let io = |p: &Path, e: std::io::Error| CliError::Io(format!("{}: {e}", p.display()));
    fs::create_dir_all(out).map_err(|e| io(out, e))?;
    let stem = experiment.replace('-', "_");
    let report_name = format!("{stem}.json");
    let mut names = vec![report_name.clone()];
    names.extend(outcome.files.iter().map(|(n, _)| n.clone()));
    let report = json!({
        "experiment": experiment,
        "config": cfg,
        "verdict": outcome.failures.is_empty(),
        "failures": outcome.failures,
        "files": names,
        "result": outcome.result,
    });
    let mut files = Vec::new();
    let mut write = |name: &str, body: &str| -> Result<(), CliError> {
        let p = out.join(name);
        fs::write(&p, body).map_err(|e| io(&p, e))?;
        files.push(p);
        Ok(())
    };
    write(&report_name, &serde_json::to_string_pretty(&report).expect("json"))?;
    for (name, body) in &outcome.files {
        write(name, body)?;
    }
    let manifest = json!({ "experiment": experiment, "files": names });
    write("manifest.json", &serde_json::to_string_pretty(&manifest).expect("json"))?;
    Ok(RunSummary {
        report_path: out.join(report_name),
        files,
        failures: outcome.failures,
    })
}

/// Entry point shared by the binary and the tests; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Command::Validate { config } = &cli.command {
        return match load_config(config) {
            Ok(_) => EXIT_OK,
            Err(e) => {
                eprintln!("{e}");
                EXIT_ERROR
            }
        };
    }
    let (experiment, args) = cli.command.experiment().expect("run command");
    let cfg = match load_config(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return EXIT_ERROR;
        }
    };
    let out = args
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("stochflow-out"));
    match execute(experiment, &cfg, &out, args.workers) {
        Ok(summary) => {
            println!("report: {}", summary.report_path.display());
            if summary.failures.is_empty() {
                println!("all hard verdicts pass");
                EXIT_OK
            } else {
                for f in &summary.failures {
                    println!("FAIL {f}");
                }
                EXIT_VERDICT
            }
        }
        Err(e) => {
            eprintln!("{e}");
            EXIT_ERROR
        }
    }
}
