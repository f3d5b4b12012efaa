mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Self-supervised video representation learning from clip-pair relations.
#[derive(Debug, Parser)]
#[command(name = "vidrel", version, about)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Base configuration file (TOML); flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed, mixed into every stage seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving the resolved configuration (defaults to the output's directory).
    #[arg(long, global = true)]
    pub run_dir: Option<PathBuf>,
    /// Accept inputs produced under a different configuration.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic multi-shot corpus, or a labeled action set with --actions.
    Synth(commands::SynthArgs),
    /// Detect shots and cut them into segments, writing a manifest.
    EditShots(commands::EditShotsArgs),
    /// Draw a fixed index of relation-labeled clip pairs from a manifest.
    BuildSamples(commands::BuildSamplesArgs),
    /// Train the two-stack relation classifier.
    Pretrain(commands::PretrainArgs),
    /// Fine-tune a backbone for action classification.
    Finetune(commands::FinetuneArgs),
    /// Nearest-neighbour video retrieval with top-k accuracy.
    Retrieve(commands::RetrieveArgs),
    /// Two-dimensional PCA embedding of video features.
    Embed(commands::EmbedArgs),
    /// Attention-map overlays for one clip.
    Attn(commands::AttnArgs),
}

fn main() -> ExitCode {
    // clap exits with status 2 on usage errors.
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
