//! `balnet`: seeded experiments on constrained excitatory/inhibitory networks.
//!
//! Exit codes: 0 pass, 1 tolerance failure, 2 usage or config error,
//! 3 numerical failure.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use balnet_core::{Error, Harness};
use clap::{Args, Parser, Subcommand};

use crate::commands::{Outcome, Outputs};
use crate::config::{resolve, ExperimentConfig, OUTPUT_DIR_ENV};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numerical(Error),
    Io(std::io::Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter { .. }
            | Error::DegenerateBlock { .. }
            | Error::InsufficientSamples { .. }
            | Error::NonMonotoneGrid
            | Error::DimensionTooLarge { .. }
            | Error::BranchMismatch(_) => CliError::Usage(e.to_string()),
            other => CliError::Numerical(other),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Numerical(e) => write!(f, "numerical failure: {e}"),
            CliError::Io(e) => write!(f, "io: {e}"),
        }
    }
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
        }
    }
}

#[derive(Parser)]
#[command(name = "balnet", version, about = "Seeded experiments on constrained E/I random networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// `key = value` config file.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides as `--key=value`.
    #[arg(allow_hyphen_values = true, trailing_var_arg = true, value_name = "--KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Row covariance, sampler route equivalence and rotated-basis variances.
    VerifyLemma1(RunArgs),
    /// Single-realization CDF and ensemble block variances against the limit law.
    Theorem1(RunArgs),
    /// Distribution of w_n(t) at t = t_max.
    Theorem2(RunArgs),
    /// Decay of the trial variance of the Stieltjes transform with n.
    Selfavg(RunArgs),
    /// Eigenvalues of J, J + aM and of an unconstrained draw.
    Spectrum(RunArgs),
    /// Growth of the full solution across leak rates.
    Stability(RunArgs),
    /// Writes one sampled W as CSV.
    DumpMatrix(RunArgs),
    /// Re-runs a manifest and checks that its output checksums reproduce.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(allow_hyphen_values = true, trailing_var_arg = true, value_name = "--KEY=VALUE")]
        overrides: Vec<String>,
    },
}

type Runner = fn(&ExperimentConfig, &Harness, &mut Outputs) -> Result<Outcome, CliError>;

fn runner(name: &str) -> Option<Runner> {
    Some(match name {
        "verify-lemma1" => commands::verify_lemma1,
        "theorem1" => commands::theorem1,
        "theorem2" => commands::theorem2,
        "selfavg" => commands::selfavg,
        "spectrum" => commands::spectrum,
        "stability" => commands::stability,
        "dump-matrix" => commands::dump_matrix,
        _ => return None,
    })
}

fn load(args: &RunArgs) -> Result<ExperimentConfig, CliError> {
    let text = match &args.config {
        Some(path) => Some(
            std::fs::read_to_string(path)
                .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?,
        ),
        None => None,
    };
    resolve(text.as_deref(), std::env::var(OUTPUT_DIR_ENV).ok(), &args.overrides)
}

/// Runs a command and writes `manifest.json` next to its outputs.
fn execute(name: &str, cfg: &ExperimentConfig) -> Result<(Outcome, manifest::Manifest), CliError> {
    let run = runner(name).ok_or_else(|| CliError::Usage(format!("unknown command `{name}`")))?;
    let harness = Harness::new(cfg.threads()?)?;
    let mut out = Outputs::new(&cfg.output_dir())?;
    let start = Instant::now();
    let outcome = run(cfg, &harness, &mut out)?;
    let m = manifest::Manifest::build(name, cfg, start.elapsed().as_secs_f64(), &outcome, &out)?;
    m.write(out.dir())?;
    Ok((outcome, m))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Replay { manifest, overrides } => replay(&manifest, &overrides),
        other => {
            let (name, args) = match &other {
                Command::VerifyLemma1(a) => ("verify-lemma1", a),
                Command::Theorem1(a) => ("theorem1", a),
                Command::Theorem2(a) => ("theorem2", a),
                Command::Selfavg(a) => ("selfavg", a),
                Command::Spectrum(a) => ("spectrum", a),
                Command::Stability(a) => ("stability", a),
                Command::DumpMatrix(a) => ("dump-matrix", a),
                Command::Replay { .. } => unreachable!(),
            };
            load(args).and_then(|cfg| execute(name, &cfg)).map(|(o, _)| {
                println!("{name}: {}", o.summary);
                o.passed
            })
        }
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("balnet: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn replay(path: &std::path::Path, overrides: &[String]) -> Result<bool, CliError> {
    let recorded = manifest::Manifest::read(path)?;
    let mut cfg = ExperimentConfig::default();
    for (k, v) in &recorded.config {
        cfg.set(k, v)?;
    }
    if let Ok(dir) = std::env::var(OUTPUT_DIR_ENV) {
        cfg.set("output_dir", &dir)?;
    }
    cfg.apply_overrides(overrides)?;
    let (_, fresh) = execute(&recorded.command, &cfg)?;
    let mismatched = recorded.mismatches(&fresh);
    if mismatched.is_empty() {
        println!("replay: {} checksums reproduced", recorded.outputs.len());
        Ok(true)
    } else {
        println!("replay: checksum mismatch in {}", mismatched.join(", "));
        Ok(false)
    }
}
