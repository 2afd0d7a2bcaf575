mod commands;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use repocomplete_core::pipeline::Mode;
use tracing::Level;

use settings::Overrides;

#[derive(Debug, Parser)]
#[command(
    name = "repocomplete",
    version,
    about = "Repository-aware line completion and benchmark harness"
)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    /// error, warn, info, debug or trace.
    #[arg(long, global = true, default_value = "warn")]
    log_level: Level,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract internal APIs and write the knowledge base.
    BuildKb {
        #[arg(long)]
        out: PathBuf,
    },
    /// Mine import-masked completion tasks from the repository.
    MineTasks {
        #[arg(long)]
        out: PathBuf,
        /// Tasks to sample.
        #[arg(long, default_value_t = 200)]
        n: usize,
    },
    /// Complete every task of a task file in one mode.
    Run {
        #[arg(long)]
        tasks: PathBuf,
        /// Knowledge base from `build-kb`; needed by modes that retrieve APIs.
        #[arg(long)]
        kb: Option<PathBuf>,
        #[arg(long)]
        mode: Option<Mode>,
        /// Predictions used as drafts by `aim_over_external_draft`.
        #[arg(long)]
        drafts: Option<PathBuf>,
        /// Output directory for predictions, traces and timing.
        #[arg(long)]
        out: PathBuf,
    },
    /// Score predictions against task ground truths.
    Score {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long)]
        predictions: PathBuf,
        /// Name of the run in the report; defaults to the predictions directory name.
        #[arg(long)]
        name: Option<String>,
        /// Report JSON path; a text table is written next to it.
        #[arg(long)]
        out: PathBuf,
    },
    /// Tabulate several reports side by side.
    Compare {
        #[arg(long = "report", required = true)]
        reports: Vec<PathBuf>,
        /// Text table path; the JSON comparison is written next to it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the 40-task mock suite: repository, tasks, oracle and config.
    MakeSuite {
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_max_level(cli.log_level)
        .with_writer(std::io::stderr)
        .init();
    match commands::dispatch(cli.command, &cli.overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
