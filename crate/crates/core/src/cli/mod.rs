//! `rdbalance` command line: train, sweep, ablate, BD-Rate and config
//! validation. Every run writes its own directory of plot-ready artifacts.

pub mod ablate;
pub mod config;
pub mod run;
pub mod sweep;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use ablate::{run_ablation, AblationSummary, Preset, GAMMA_SWEEP};
pub use config::{
    ExperimentConfig, OutputConfig, ProblemConfig, SweepConfig, LAMBDA_GRID, OUTPUT_ROOT_ENV,
};
pub use run::{execute, RunManifest, RunResult, RunSpec, RunStatus, TRACE_HEADER, TRACE_SCHEMA};
pub use sweep::{run_sweep, SweepSummary};

use crate::error::Error;
use crate::metrics::{bd_rate_report, read_curve_csv};
use crate::trainer::Mode;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "rdbalance",
    version,
    about = "Balanced rate-distortion optimization experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model and write checkpoint, trace and manifest.
    Train(RunArgs),
    /// Run the λ × seed × mode cross-product and assemble R-D curves.
    Sweep(RunArgs),
    /// BD-Rate of a test curve against an anchor curve (CSV: rate,quality).
    Bdrate { anchor: PathBuf, test: PathBuf },
    /// Run an ablation preset.
    Ablate {
        #[arg(value_enum)]
        preset: Preset,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Parse and validate a config, printing its fingerprint.
    ValidateConfig(RunArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output root; overrides the config and the environment.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Shorthand for `--set train.seed=N`.
    #[arg(long)]
    pub seed: Option<u64>,
    /// standard, solution1 or solution2.
    #[arg(long)]
    pub mode: Option<Mode>,
    /// `dotted.key=value` override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

impl RunArgs {
    pub fn load(&self) -> Result<ExperimentConfig, Error> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("train.seed={seed}"));
        }
        if let Some(mode) = self.mode {
            overrides.push(format!("train.mode=\"{}\"", mode.as_str()));
        }
        ExperimentConfig::load(&self.config, &overrides)
    }

    pub fn output_root(&self, config: &ExperimentConfig) -> PathBuf {
        if let Some(out) = &self.out {
            return out.clone();
        }
        match std::env::var_os(OUTPUT_ROOT_ENV) {
            Some(root) if !root.is_empty() => PathBuf::from(root),
            _ => config.output.dir.clone(),
        }
    }
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } => EXIT_IO,
        Error::Diverged { .. }
        | Error::NonFinite(_)
        | Error::NonPositiveLoss { .. }
        | Error::SingularGram { .. } => EXIT_DIVERGED,
        Error::Config(_)
        | Error::InvalidInput(_)
        | Error::InvalidCurve(_)
        | Error::DimensionMismatch { .. }
        | Error::FingerprintMismatch { .. }
        | Error::Serde(_) => EXIT_CONFIG,
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Serde(e.to_string()))?;
    let mut out = std::io::stdout().lock();
    writeln!(out, "{text}").map_err(|e| Error::io("<stdout>", e))
}

/// Dispatch a parsed command and return the process exit code.
pub fn dispatch(cli: Cli) -> Result<i32, Error> {
    match cli.command {
        Command::Train(args) => {
            let config = args.load()?;
            let root = args.output_root(&config);
            let result = execute(&RunSpec::new("train", config), &root)?;
            print_json(&serde_json::json!({
                "dir": result.dir,
                "status": result.manifest.status,
                "reason": result.manifest.reason,
                "final_eval": result.manifest.final_eval,
            }))?;
            Ok(if result.diverged() {
                EXIT_DIVERGED
            } else {
                EXIT_OK
            })
        }
        Command::Sweep(args) => {
            let config = args.load()?;
            let root = args.output_root(&config);
            let summary = run_sweep(&config, &root)?;
            print_json(&serde_json::json!({
                "dir": summary.dir,
                "runs": summary.runs.len(),
                "failed": summary.failed,
                "bd_rate": summary.bd_rate,
            }))?;
            Ok(if summary.failed > 0 {
                EXIT_DIVERGED
            } else {
                EXIT_OK
            })
        }
        Command::Bdrate { anchor, test } => {
            let report = bd_rate_report(&read_curve_csv(&anchor)?, &read_curve_csv(&test)?)?;
            print_json(&report)?;
            Ok(EXIT_OK)
        }
        Command::Ablate { preset, args } => {
            let config = args.load()?;
            let root = args.output_root(&config);
            let summary = run_ablation(preset, &config, &root)?;
            print_json(&summary)?;
            Ok(if summary.unexpected_failures > 0 {
                EXIT_DIVERGED
            } else {
                EXIT_OK
            })
        }
        Command::ValidateConfig(args) => {
            let config = args.load()?;
            print_json(&serde_json::json!({
                "valid": true,
                "config_fingerprint": config.fingerprint(),
                "config": config,
            }))?;
            Ok(EXIT_OK)
        }
    }
}

/// Parse `args` (including the program name) and run.
pub fn run_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn main() -> i32 {
    run_with_args(std::env::args_os())
}
