mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use cadseq::cad::DatasetError;
use cadseq::config::ConfigError;
use cadseq::eval::EvalError;
use cadseq::gan::GanError;
use cadseq::metrics::MetricsError;
use cadseq::nn::CheckpointError;

#[derive(Parser, Debug)]
#[command(name = "cadseq", version, about = "CAD construction-sequence modelling pipeline")]
pub struct Cli {
    /// JSON run configuration; missing sections take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the configured run seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset of valid sequences.
    Synth {
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long)]
        max_pairs: Option<usize>,
    },
    /// Validate a dataset and report its statistics and split.
    Ingest { dataset: PathBuf },
    /// Apply RRE augmentation to every record of a dataset.
    Augment { dataset: PathBuf },
    /// Train the autoencoder on the train split.
    TrainAe(TrainAeArgs),
    /// Train the latent GAN on encoded train-split latents.
    TrainGan {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Encode a dataset into latent vectors.
    Encode {
        #[arg(long)]
        checkpoint: PathBuf,
        dataset: PathBuf,
    },
    /// Decode latent vectors into sequences.
    Decode {
        #[arg(long)]
        checkpoint: PathBuf,
        latents: PathBuf,
    },
    /// Sample sequences from the latent GAN.
    Generate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        gan: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// Reconstruction report and per-length table.
    EvalRecon(EvalArgs),
    /// Generation quality against a reference split.
    EvalGen {
        #[command(flatten)]
        eval: EvalArgs,
        #[arg(long)]
        gan: PathBuf,
        #[arg(long, default_value_t = 100)]
        count: usize,
    },
    /// Silhouette and SSE over a sweep of cluster counts.
    Cluster(EvalArgs),
    /// Latent similarity between sequences and their permuted twins.
    PermTest(EvalArgs),
}

#[derive(Args, Debug)]
pub struct TrainAeArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Enable RRE augmentation.
    #[arg(long)]
    pub rre: bool,
    /// Augment once before training instead of per batch.
    #[arg(long, conflicts_with = "rre_online")]
    pub rre_offline: bool,
    /// Augment every batch (the default with --rre).
    #[arg(long)]
    pub rre_online: bool,
    /// Train without the contrastive loss.
    #[arg(long)]
    pub no_contrastive: bool,
    /// Continue from an autoencoder checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    pub dataset: PathBuf,
    /// train, validation, test or all.
    #[arg(long, default_value = "test")]
    pub split: String,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
}

/// Errors caused by the inputs rather than by the run itself.
fn is_validation(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.is::<CliError>()
            || c.is::<ConfigError>()
            || c.is::<DatasetError>()
            || matches!(c.downcast_ref::<CheckpointError>(), Some(CheckpointError::Kind { .. } | CheckpointError::Json(_)))
            || matches!(
                c.downcast_ref::<GanError>(),
                Some(GanError::IncompatibleCheckpoints { .. } | GanError::Config(_))
            )
            || matches!(c.downcast_ref::<EvalError>(), Some(EvalError::NoPatterns))
            || matches!(c.downcast_ref::<MetricsError>(), Some(MetricsError::PatternNotFound(_)))
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(if is_validation(&e) { 2 } else { 1 })
        }
    }
}
