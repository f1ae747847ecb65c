//! Command-line front end. Five subcommands cover the full workflow:
//! `gen-data` synthesizes a review corpus, `train` fits one model,
//! `eval` scores a checkpoint, `compare` sweeps variants and seeds into
//! a comparison table, and `gradcheck` runs the finite-difference suite.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 runtime failure.

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use daml_core::Error;

pub mod commands;
pub mod logs;
pub mod manifest;

/// Output-root override: relative `--out` paths land under this directory
/// when the variable is set and nonempty.
pub const OUT_ROOT_ENV: &str = "DAML_OUT_ROOT";

#[derive(Parser, Debug)]
#[command(name = "daml", version, about = "Domain-adapted sentiment classification via adversarial mutual learning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic two-domain review corpus from a spec file.
    GenData {
        /// Synthesis spec, key=value lines.
        #[arg(long)]
        config: PathBuf,
        /// Directory that receives the corpus files.
        #[arg(long)]
        out: PathBuf,
        /// Override the spec's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one model on a data directory and write a checkpoint.
    Train {
        /// Training config, key=value lines.
        #[arg(long)]
        config: PathBuf,
        /// Directory holding source_train/source_dev/target_train/target_dev files.
        #[arg(long)]
        data: PathBuf,
        /// Directory for checkpoint, training log, and manifest.
        #[arg(long)]
        out: PathBuf,
        /// Override the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the config's variant (group count adjusts to fit).
        #[arg(long)]
        variant: Option<String>,
    },
    /// Evaluate a checkpoint on one labeled corpus file.
    Eval {
        /// Checkpoint written by train or compare.
        checkpoint: PathBuf,
        /// Corpus file; a name starting with "source" is scored as source domain.
        corpus: PathBuf,
        /// Average all groups' classifier distributions instead of using
        /// the dev-selected best group.
        #[arg(long)]
        ensemble: bool,
        /// Write every group's document feature vectors to this file.
        #[arg(long)]
        export_features: Option<PathBuf>,
        /// Also write report.csv and a manifest to this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a grid of variants and seeds, then tabulate target-test results.
    Compare {
        /// Training config, key=value lines.
        #[arg(long)]
        config: PathBuf,
        /// Directory holding the five corpus files (incl. target_test).
        #[arg(long)]
        data: PathBuf,
        /// Directory for per-job subdirectories and the comparison tables.
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated variants, e.g. naive,dann,daml.
        #[arg(long, value_delimiter = ',', required = true)]
        variant: Vec<String>,
        /// Comma-separated seeds.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seed: Vec<u64>,
        /// Worker threads; each (variant, seed) job runs single-threaded.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Comma-separated prober scopes (target,source,both); sweeps the
        /// prober's training domain and adds an ablation table.
        #[arg(long, value_delimiter = ',')]
        prober_domains: Vec<String>,
    },
    /// Finite-difference gradient checks for every op and the full objective.
    Gradcheck {
        /// Maximum accepted relative error.
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
        /// Seed for the random check points.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Fault switch for exercising the failure path: flips the sign of
        /// the reversal layer's backward rule so its check must fail.
        #[arg(long, hide = true)]
        inject_grl_sign_bug: bool,
    },
}

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation, config, or input file; exits 1.
    Usage(String),
    /// Failure while executing a valid request; exits 2.
    Runtime(String),
    Core(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) | CliError::Runtime(msg) => f.write_str(msg),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    /// 1 for anything the user can fix by editing the invocation or an
    /// input file, 2 for failures during execution.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::Core(e) => match e {
                Error::Config { .. }
                | Error::Parse { .. }
                | Error::LabelOutOfRange { .. }
                | Error::UnlabeledDocument { .. }
                | Error::EmptySplit { .. }
                | Error::EmptyEvaluation
                | Error::Checkpoint { .. }
                | Error::TokenOutOfRange { .. } => 1,
                _ => 2,
            },
        }
    }
}

/// Resolve an output directory against `DAML_OUT_ROOT`.
pub fn resolve_out(path: &Path) -> PathBuf {
    if path.is_absolute() {
        return path.to_path_buf();
    }
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(path),
        _ => path.to_path_buf(),
    }
}

pub(crate) fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage(format!("missing input file: {}", path.display())))
    }
}

pub(crate) fn read_input(path: &Path) -> Result<String, CliError> {
    require_file(path)?;
    std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { config, out, seed } => commands::gen_data(&config, &out, seed),
        Command::Train { config, data, out, seed, variant } => {
            commands::train(&config, &data, &out, seed, variant.as_deref())
        }
        Command::Eval { checkpoint, corpus, ensemble, export_features, out } => {
            commands::eval(&checkpoint, &corpus, ensemble, export_features.as_deref(), out.as_deref())
        }
        Command::Compare { config, data, out, variant, seed, jobs, prober_domains } => {
            commands::compare(&commands::CompareArgs {
                config,
                data,
                out,
                variants: variant,
                seeds: seed,
                jobs,
                prober_domains,
            })
        }
        Command::Gradcheck { tolerance, seed, inject_grl_sign_bug } => {
            commands::gradcheck(tolerance, seed, inject_grl_sign_bug)
        }
    }
}
