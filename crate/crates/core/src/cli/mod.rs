//! Command-line front end. [`run`] parses arguments, executes one subcommand
//! and returns the process exit code: 0 success, 1 validation error, 2
//! runtime or numeric failure.

pub mod commands;
pub mod config;
pub mod verify;

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use serde_json::json;

pub use commands::Output;
pub use config::{ConfigFile, Format, Profile, RunConfig};

use crate::data::Split;
use crate::pipeline::store::CheckpointKind;
use crate::{Error, Result};

#[derive(Debug, Parser)]
#[command(name = "twostage", version, about = "Gender-routed two-stage disease classification")]
pub struct Cli {
    /// Run seed. Required by synth, train and train-baseline.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// JSON run config (profile, seed, cohort and train overrides).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Training profile; overrides the config file's.
    #[arg(long, global = true, value_enum)]
    pub profile: Option<Profile>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct EvalTarget {
    /// JSON Lines manifest to evaluate on.
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value = "val", value_parser = parse_split)]
    pub split: Split,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic cohort: volumes, manifest and cell-count table.
    Synth {
        /// Complete cohort spec file; otherwise the config's cohort section.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Write trimmed, resized and normalized volumes with a new manifest.
    Preprocess {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train the gender head and both gender-specific disease heads.
    Train {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Train the single pooled disease classifier.
    TrainBaseline {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Score a checkpoint and write report.json and report.txt.
    Eval {
        checkpoint: PathBuf,
        #[command(flatten)]
        target: EvalTarget,
        /// Route by the true gender label instead of the gender head.
        #[arg(long)]
        oracle_routing: bool,
    },
    /// Score two checkpoints side by side.
    Compare {
        first: PathBuf,
        second: PathBuf,
        #[command(flatten)]
        target: EvalTarget,
    },
    /// Gradient, loss, metric, routing and schedule self-checks.
    Verify {
        #[arg(long, default_value_t = 20)]
        grad_models: usize,
        #[arg(long, default_value_t = 200)]
        metric_instances: usize,
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn parse_split(s: &str) -> std::result::Result<Split, String> {
    s.parse()
}

fn verify_output(checks: &[verify::Check]) -> Output {
    let mut text = String::new();
    for c in checks {
        let status = if c.passed { "PASS" } else { "FAIL" };
        let _ = writeln!(text, "{status} {} seed={} {}", c.name, c.seed, c.detail);
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    let _ = writeln!(text, "{} checks, {failed} failed", checks.len());
    Output {
        text,
        json: json!({ "checks": checks, "failed": failed }),
    }
}

/// Executes a parsed command. Verification failures still return the report
/// alongside the error so it can be printed.
pub fn execute(cli: &Cli) -> (Option<Output>, Result<()>) {
    let rc = match cli.config.as_deref().map(ConfigFile::load).transpose() {
        Ok(file) => RunConfig::resolve(file, cli.seed, cli.profile, cli.out.clone(), cli.format),
        Err(e) => return (None, Err(e)),
    };
    let result = match &cli.command {
        Command::Synth { spec } => commands::synth(&rc, spec.as_deref()),
        Command::Preprocess { manifest } => commands::preprocess(&rc, manifest),
        Command::Train { manifest } => commands::train(&rc, manifest, CheckpointKind::TwoStage),
        Command::TrainBaseline { manifest } => commands::train(&rc, manifest, CheckpointKind::Baseline),
        Command::Eval {
            checkpoint,
            target,
            oracle_routing,
        } => commands::eval(&rc, checkpoint, &target.manifest, target.split, *oracle_routing),
        Command::Compare { first, second, target } => {
            commands::compare(&rc, first, second, &target.manifest, target.split)
        }
        Command::Verify {
            grad_models,
            metric_instances,
            inject_fault,
        } => {
            let opts = verify::VerifyOptions {
                base_seed: rc.seed.unwrap_or(0),
                grad_models: *grad_models,
                metric_instances: *metric_instances,
                inject_fault: *inject_fault,
            };
            return match verify::run_checks(&opts) {
                Ok(checks) => {
                    let failed = checks.iter().filter(|c| !c.passed).count();
                    let status = if failed == 0 { Ok(()) } else { Err(Error::VerificationFailed(failed)) };
                    (Some(verify_output(&checks)), status)
                }
                Err(e) => (None, Err(e)),
            };
        }
    };
    match result {
        Ok(out) => (Some(out), Ok(())),
        Err(e) => (None, Err(e)),
    }
}

fn print(out: &Output, format: Format) {
    let mut stdout = std::io::stdout().lock();
    let _ = match format {
        Format::Text => stdout.write_all(out.text.as_bytes()),
        Format::Json => writeln!(stdout, "{}", serde_json::to_string_pretty(&out.json).unwrap_or_default()),
    };
}

/// Parses `args` (including the program name), runs the command and returns
/// the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    let (output, status) = execute(&cli);
    if let Some(out) = &output {
        print(out, cli.format);
    }
    match status {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
