mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

/// Supervised beta-TC-VAE pipeline for fetal heart rate segments.
#[derive(Parser)]
#[command(name = "ctgvae", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Debug)]
pub struct Common {
    /// `key = value` configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Overrides the `seed` key.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads. Computation is single-threaded; values above 1 are
    /// accepted and have no effect.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: u32,
    /// Extra `key=value` overrides applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus (NDJSON).
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Segment a corpus, assign splits and fit normalisation statistics.
    Preprocess {
        #[arg(long)]
        corpus: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Clinical features of every segment (CSV).
    Features {
        #[arg(long)]
        segments: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on the training split.
    Train {
        #[arg(long)]
        segments: PathBuf,
        /// Defaults to `manifest.json` beside the segment file.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint on the test split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train one model per TC target and seed and tabulate test metrics.
    TcSweep {
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Latent-space analyses on the test split.
    Interpret {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        segments: PathBuf,
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Synth { common } => commands::synth(&common),
        Command::Preprocess { corpus, common } => commands::preprocess(&common, &corpus),
        Command::Features { segments, common } => commands::features(&common, &segments),
        Command::Train {
            segments,
            manifest,
            common,
        } => commands::train(&common, &segments, manifest.as_deref()),
        Command::Eval {
            checkpoint,
            segments,
            manifest,
            common,
        } => commands::eval(&common, &checkpoint, &segments, manifest.as_deref()),
        Command::TcSweep {
            segments,
            manifest,
            common,
        } => commands::tc_sweep(&common, &segments, manifest.as_deref()),
        Command::Interpret {
            checkpoint,
            segments,
            manifest,
            common,
        } => commands::interpret(&common, &checkpoint, &segments, manifest.as_deref()),
    }
}
