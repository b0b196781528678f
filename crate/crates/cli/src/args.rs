use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use vip_core::model::TokenGroup;

#[derive(Debug, Parser)]
#[command(name = "vip", version, about = "Attention attribution diagnostics for vision transformers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Share of CLS attention on patch, register and CLS tokens, per image.
    Partition(CommonArgs),
    /// Split the CLS attention output into token-group contributions.
    Decompose(CommonArgs),
    /// CKA between the full CLS output and outputs restricted to one source.
    Cka(CommonArgs),
    /// One-shot nearest-prototype probe on full and restricted outputs.
    Probe(ProbeArgs),
    /// Cosine of each layer's CLS token to the last layer's, and per-layer norms.
    Layers(CommonArgs),
    /// Contribution norms and high-norm token statistics.
    Norms(NormsArgs),
    /// Render head-averaged CLS attention maps as SVG.
    Render(CommonArgs),
    /// Write a randomly initialized model container.
    SynthModel(SynthArgs),
    /// List the checkpoint manifest.
    Checkpoints,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Keep {
    Patches,
    Registers,
}

impl Keep {
    pub fn group(self) -> TokenGroup {
        match self {
            Keep::Patches => TokenGroup::Patches,
            Keep::Registers => TokenGroup::Registers,
        }
    }
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct CommonArgs {
    /// Weight container, or a manifest name with --with-checkpoints.
    #[arg(long)]
    pub model: String,
    /// Model config JSON file or preset (`dinov2-small`, `dinov2-giant-reg4`, ...).
    /// Defaults to the config stored in the container.
    #[arg(long)]
    pub config: Option<String>,
    /// Image directory (PNG/JPEG, optional `labels.csv`).
    #[arg(long)]
    pub data: PathBuf,
    /// Use at most this many images.
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory.
    #[arg(long, default_value = "vip-out")]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Layer to analyse; defaults to the last.
    #[arg(long)]
    pub layer: Option<usize>,
    /// Ablate the CLS attention row at --layer, keeping only this group.
    /// Ignored by `cka` and `probe`, which run every variant.
    #[arg(long, value_enum)]
    pub keep: Option<Keep>,
    /// Rescale masked attention rows to sum to one.
    #[arg(long)]
    pub mask_renormalize: bool,
    /// Resolve --model through the checkpoint manifest under VIP_CHECKPOINT_DIR.
    #[arg(long)]
    pub with_checkpoints: bool,
    /// Shuffle the sorted image list with --seed before applying --limit.
    #[arg(long)]
    pub shuffle: bool,
    /// Shorter-side resize target in pixels.
    #[arg(long, default_value_t = 256)]
    pub resize: usize,
    /// Center-crop size in pixels.
    #[arg(long, default_value_t = 224)]
    pub crop: usize,
    /// Skip the feature cache (VIP_CACHE_DIR).
    #[arg(long)]
    pub no_cache: bool,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct ProbeArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 20)]
    pub repetitions: usize,
    #[arg(long, default_value_t = 5)]
    pub top_k: usize,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct NormsArgs {
    #[command(flatten)]
    #[serde(flatten)]
    pub common: CommonArgs,
    /// Dimensions kept in the activation profile.
    #[arg(long, default_value_t = 100)]
    pub top_dims: usize,
}

#[derive(Clone, Debug, Args)]
pub struct SynthArgs {
    /// Output container path.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub depth: usize,
    #[arg(long, default_value_t = 16)]
    pub dim: usize,
    #[arg(long, default_value_t = 2)]
    pub heads: usize,
    #[arg(long, default_value_t = 0)]
    pub registers: usize,
    #[arg(long, default_value_t = 4)]
    pub patch_size: usize,
    /// Positional-embedding grid side.
    #[arg(long, default_value_t = 4)]
    pub grid: usize,
    /// Hidden width of the MLP; defaults to 2 * dim.
    #[arg(long)]
    pub mlp_hidden: Option<usize>,
    #[arg(long)]
    pub swiglu: bool,
    #[arg(long)]
    pub layerscale: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}
