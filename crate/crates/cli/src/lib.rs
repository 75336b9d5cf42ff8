//! Command-line pipeline: build the app graph from a corpus, report its
//! statistics, train and evaluate shallow and deep models, run relation-group
//! ablations and time inference. Every command is driven by one TOML config
//! and writes TSV reports under the work directory.
//!
//! Exit codes: 0 success, 2 usage / config / missing inputs, 3 IO or runtime
//! failures.

pub mod commands;
pub mod config;
pub mod error;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use commands::Workspace;
pub use config::{AblationPlan, Overrides, RunConfig};
pub use error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(name = "sappkg", version, about = "App knowledge graph construction, embedding and recommendation")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, global = true, default_value = "sappkg.toml")]
    pub config: PathBuf,
    /// Override the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Override the config work directory.
    #[arg(long, global = true)]
    pub workdir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse the corpus, bin attributes, sample triples and split them.
    Build,
    /// Relatedness matrix and graph statistics.
    Stats,
    /// Train a shallow model (TransE, ..., NTN) or `deep`.
    Train { model: String },
    /// Evaluate a trained shallow model or `deep`.
    Eval { model: String },
    /// Retrain without one relation group (exp1..exp4) and compare.
    Ablate { group: String },
    /// Top apps for one app id.
    Recommend { app_id: String },
    /// Most plausible relations between two apps.
    Relations { head: String, tail: String },
    /// Time per-query inference of the configured models.
    Bench,
}

/// Run one parsed invocation and return its stdout text.
pub fn execute(cli: &Cli) -> Result<String> {
    let overrides = Overrides {
        seed: cli.seed,
        workdir: cli.workdir.clone(),
    };
    let config = RunConfig::load(&cli.config, &overrides)?;
    let ws = Workspace::new(&config.workdir);
    match &cli.command {
        Command::Build => commands::build(&config, &ws),
        Command::Stats => commands::stats(&ws),
        Command::Train { model } => commands::train(&config, &ws, model),
        Command::Eval { model } => commands::eval(&config, &ws, model),
        Command::Ablate { group } => commands::ablate(&config, &ws, group),
        Command::Recommend { app_id } => commands::recommend(&config, &ws, app_id),
        Command::Relations { head, tail } => commands::relations(&config, &ws, head, tail),
        Command::Bench => commands::bench(&config, &ws),
    }
}

/// Parse `args` (program name first), execute, print, and return the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            print!("{out}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            e.exit_code()
        }
    }
}
