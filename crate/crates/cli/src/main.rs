//! `dggat` command-line interface: data preparation, graph inspection,
//! training, evaluation, and the benchmark/ablation runners.
//!
//! Exit codes: 0 success, 2 input or config error, 3 runtime numeric
//! failure. Machine-readable results go to stdout, diagnostics to stderr.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "dggat", version, about = "Distance-geometric graph attention for molecular property regression")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Jsonl,
    Sdf,
}

#[derive(Subcommand)]
enum Command {
    /// Parse and validate molecules, writing normalized JSONL.
    Prepare {
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_enum)]
        format: FormatArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Dump the distance-geometric edges of one molecule as JSONL plus a
    /// pair-count summary.
    Inspect {
        /// Normalized JSONL dataset.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long, default_value_t = 3)]
        max_order: u8,
        #[arg(long, default_value_t = 10.0)]
        cutoff: f64,
    },
    /// Train per a JSON run config; writes checkpoint.json and report.json.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "run_out")]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on the test split of the configured dataset.
    Eval {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the synthetic benchmark suite: the four-model comparison table
    /// on generated geometry-sensitive data.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the four-model comparison table on a real dataset.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Failure with the documented exit code already decided.
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError { code: 2, message: message.into() }
    }

    fn numeric(message: impl Into<String>) -> Self {
        CliError { code: 3, message: message.into() }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Prepare { input, format, out } => commands::prepare(&input, format, &out),
        Command::Inspect { input, id, max_order, cutoff } => {
            commands::inspect(&input, &id, max_order, cutoff)
        }
        Command::Train { config, out } => commands::train(&config, &out),
        Command::Eval { config } => commands::eval(&config),
        Command::Bench { config, out } => commands::bench(&config, out.as_deref()),
        Command::Ablate { config, out } => commands::ablate(&config, out.as_deref()),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
