//! `ordmil` command-line interface.
//!
//! Exit codes: 0 on success, 2 on usage errors, 1 on validation or
//! runtime failures. Every failure prints a single line to stderr
//! prefixed with `error:`.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Run(String),
}

impl From<ordmil::Error> for CliError {
    fn from(e: ordmil::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

#[derive(Parser)]
#[command(
    name = "ordmil",
    version,
    about = "Weakly supervised domain adaptation for ordinal multi-instance bags"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic source/target dataset pair.
    GenData {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Run seed (overrides the config seeds).
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Print the default configuration as JSON and exit.
        #[arg(long)]
        print_defaults: bool,
    },
    /// Stage 1: source pre-training (reads paths.source from the config).
    Pretrain {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage 2: target adaptation (reads paths.checkpoint/source/target).
    Adapt {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a dataset (instance and bag level).
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the ablation grid (seed ranges like `1..5` are expanded).
    Ablate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<String>,
        /// Comma-separated subset of full,no_triplet,adv_only,source_only.
        #[arg(long)]
        variants: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Verify analytic gradients against central differences.
    GradCheck {
        #[arg(long)]
        seed: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export a joint 2-D PCA of source and target embeddings as CSV.
    ExportPca {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::GenData { config, seed, out, print_defaults } => {
            commands::gen_data(config, seed, out, print_defaults)
        }
        Command::Pretrain { config, seed, out } => commands::pretrain(config, seed, out),
        Command::Adapt { config, seed, out } => commands::adapt(config, seed, out),
        Command::Eval { config, checkpoint, dataset, out } => {
            commands::eval(config, checkpoint, dataset, out)
        }
        Command::Ablate { config, seed, variants, out } => {
            commands::ablate(config, seed, variants, out)
        }
        Command::GradCheck { seed, out } => commands::grad_check(seed, out),
        Command::ExportPca { checkpoint, source, target, out } => {
            commands::export_pca(checkpoint, source, target, out)
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    std::process::exit(0);
                }
                _ => {
                    let msg = e
                        .to_string()
                        .lines()
                        .find(|l| !l.trim().is_empty())
                        .unwrap_or("invalid usage")
                        .trim_start_matches("error: ")
                        .to_string();
                    eprintln!("error: {msg}");
                    std::process::exit(2);
                }
            }
        }
    };
    match dispatch(cli) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
        Err(CliError::Run(msg)) => {
            let one_line = msg.replace('\n', " ");
            eprintln!("error: {one_line}");
            std::process::exit(1);
        }
    }
}
