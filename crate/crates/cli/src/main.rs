mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::GlobalArgs;

#[derive(Debug, Parser)]
#[command(
    name = "leash",
    version,
    about = "Staged, checkpointed LLM pipelines with audit trails"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a pipeline file without running it.
    Validate { spec: PathBuf },
    /// Start a new run.
    Run {
        spec: PathBuf,
        /// `name=value`, or `name=@file` to read the value from a file.
        #[arg(long = "input", short = 'i', value_name = "NAME=VALUE")]
        inputs: Vec<String>,
        #[arg(long)]
        run_id: Option<String>,
        /// Earlier run this one iterates on.
        #[arg(long)]
        parent: Option<String>,
    },
    /// Continue a run from its audit trail.
    Resume {
        run_id: String,
        /// Refuse to resume unless the run started from this exact spec.
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// List or resolve checkpoints.
    Checkpoints {
        #[command(subcommand)]
        action: CheckpointAction,
    },
    /// Evidence-count grid over enumerative bound and abstention.
    Exp1 {
        /// Grid definition (claim, prompt, conditions).
        #[arg(long)]
        grid: PathBuf,
        #[arg(long)]
        letter: PathBuf,
        #[arg(long, default_value = "exp1")]
        run_prefix: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// One prompting regime over a letter, optionally compared with another.
    Exp2 {
        /// baseline | two-stage | multi-stage
        #[arg(long)]
        regime: String,
        #[arg(long)]
        letter: PathBuf,
        /// Reference text the schema is built from.
        #[arg(long, conflicts_with = "schema")]
        seed: Option<PathBuf>,
        /// An already approved schema (JSON); skips the schema stage.
        #[arg(long)]
        schema: Option<PathBuf>,
        /// Approve schema and synthesis checkpoints without review.
        #[arg(long)]
        auto_approve: bool,
        /// Second regime; prints the per-element concordance instead of scores.
        #[arg(long)]
        compare: Option<String>,
        /// Runs are named `<prefix>-<regime>`.
        #[arg(long, default_value = "exp2")]
        run_prefix: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Code every paper in a manifest with repeated runs.
    CodeCorpus {
        manifest: PathBuf,
        #[arg(long, default_value_t = 5)]
        runs: u32,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        instrument: Option<PathBuf>,
    },
    /// Construct indices and their correlations for coded records.
    Indices {
        coded_dir: PathBuf,
        #[arg(long)]
        scaling: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Depth/autonomy plane export (CSV).
    Plane {
        coded_dir: PathBuf,
        #[arg(long)]
        scaling: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the control API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

#[derive(Debug, Subcommand)]
enum CheckpointAction {
    /// Pending checkpoints across all runs.
    List,
    Approve {
        run_id: String,
        #[command(flatten)]
        d: DecisionArgs,
    },
    Reject {
        run_id: String,
        #[command(flatten)]
        d: DecisionArgs,
    },
    /// Replace an artifact; the file must satisfy the stage's output contract.
    Edit {
        run_id: String,
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        slot: Option<u32>,
        #[command(flatten)]
        d: DecisionArgs,
    },
}

#[derive(Debug, clap::Args)]
struct DecisionArgs {
    /// Defaults to the stage the run is waiting on.
    #[arg(long)]
    stage: Option<String>,
    #[arg(long, env = "USER", default_value = "cli")]
    author: String,
    #[arg(long, default_value = "")]
    note: String,
    /// Record the decision without continuing the run.
    #[arg(long)]
    no_resume: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_max_level(tracing_subscriber::filter::LevelFilter::WARN)
        .init();
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.line());
            ExitCode::from(e.exit)
        }
    }
}
