use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tricluster::similarity::{Norm, SimilarityConfig};

#[derive(Debug, Parser)]
#[command(name = "tricluster", version, about = "Clustering of time-series panels")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic panel and its true clustering timeline.
    Generate(GenerateArgs),
    /// Fit the pairwise exponential model, and optionally the clustering HMM.
    Train(TrainArgs),
    /// Cluster every step of a panel.
    Cluster(ClusterArgs),
    /// Compare predicted timelines with the truth.
    Evaluate(EvaluateArgs),
    /// Inverse-volatility weights over a clustering.
    Weights(WeightsArgs),
    /// Decide k-clique through the MAP reduction.
    CliqueDemo(CliqueArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 3)]
    pub n: usize,
    #[arg(long, default_value_t = 5000, value_parser = clap::value_parser!(u64).range(1..))]
    pub steps: u64,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0.002)]
    pub regime_change_prob: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "panel.csv")]
    pub out_panel: PathBuf,
    #[arg(long, default_value = "truth.csv")]
    pub out_truth: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    L1,
    L2,
}

#[derive(Debug, Clone, Args)]
pub struct SimilarityArgs {
    #[arg(long, default_value_t = 20)]
    pub window: usize,
    #[arg(long, value_enum, default_value_t = NormArg::L2)]
    pub norm: NormArg,
    #[arg(long, default_value_t = 1.0)]
    pub scale_c: f64,
    #[arg(long, default_value_t = 0.0)]
    pub threshold_lambda: f64,
    #[arg(long, default_value_t = 1.0)]
    pub decay: f64,
}

impl SimilarityArgs {
    pub fn config(&self) -> SimilarityConfig {
        SimilarityConfig {
            norm: match self.norm {
                NormArg::L1 => Norm::L1,
                NormArg::L2 => Norm::L2,
            },
            scale: self.scale_c,
            threshold: self.threshold_lambda,
            window: self.window,
            decay: self.decay,
        }
    }
}

/// Inclusive 1-based range of time steps, written `lo:hi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepRange {
    pub lo: usize,
    pub hi: usize,
}

pub fn parse_range(s: &str) -> Result<StepRange, String> {
    let (lo, hi) = s
        .split_once(':')
        .ok_or_else(|| format!("expected LO:HI, got {s:?}"))?;
    let lo: usize = lo.trim().parse().map_err(|e| format!("bad range start: {e}"))?;
    let hi: usize = hi.trim().parse().map_err(|e| format!("bad range end: {e}"))?;
    if lo == 0 || lo > hi {
        return Err(format!("range must satisfy 1 <= LO <= HI, got {s:?}"));
    }
    Ok(StepRange { lo, hi })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LabelSource {
    Truth,
    Spectral,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RatesArg {
    Conditional,
    Pooled,
}

#[derive(Debug, Clone, Args)]
pub struct SpectralArgs {
    /// Smallest cluster count tried (default 2).
    #[arg(long)]
    pub c_min: Option<usize>,
    /// Largest cluster count tried (default n).
    #[arg(long)]
    pub c_max: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub panel: PathBuf,
    /// Timeline of labels; required unless `--labels spectral`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = LabelSource::Truth)]
    pub labels: LabelSource,
    #[arg(long, value_enum, default_value_t = RatesArg::Conditional)]
    pub rates: RatesArg,
    /// Keep raw co-clustering frequencies as priors.
    #[arg(long)]
    pub raw_priors: bool,
    /// Steps used for training; defaults to the first half of the panel.
    #[arg(long, value_parser = parse_range)]
    pub train_range: Option<StepRange>,
    /// Laplace smoothing of HMM counts.
    #[arg(long, default_value_t = 1.0)]
    pub alpha: f64,
    /// Also fit the HMM and write its transitions here.
    #[arg(long)]
    pub hmm: Option<PathBuf>,
    #[arg(long, default_value = "params.csv")]
    pub out_params: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub similarity: SimilarityArgs,
    #[command(flatten)]
    pub spectral: SpectralArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    ShiMalik,
    Spectral,
    Exponential,
    TriangularExact,
    TriangularMcmc,
    Hmm,
}

#[derive(Debug, Clone, Args)]
pub struct ChainArgs {
    /// Chain length (default 20000).
    #[arg(long)]
    pub steps: Option<u64>,
    /// Discarded leading steps (default 2000).
    #[arg(long)]
    pub burn_in: Option<u64>,
    #[arg(long)]
    pub thin: Option<u64>,
    /// Independent chains per step (default 1).
    #[arg(long)]
    pub chains: Option<u64>,
    /// Probability of proposing a split (default 0.5).
    #[arg(long)]
    pub frag_prob: Option<f64>,
    /// Per-step chain trace CSV; single chain only.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

impl ChainArgs {
    pub fn any_set(&self) -> bool {
        self.steps.is_some()
            || self.burn_in.is_some()
            || self.thin.is_some()
            || self.chains.is_some()
            || self.frag_prob.is_some()
            || self.trace.is_some()
    }
}

#[derive(Debug, Args)]
pub struct ClusterArgs {
    #[arg(long)]
    pub panel: PathBuf,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Pairwise model parameters from `train`.
    #[arg(long)]
    pub params: Option<PathBuf>,
    /// HMM transitions from `train --hmm`.
    #[arg(long)]
    pub transitions: Option<PathBuf>,
    /// Steps to cluster; defaults to the second half of the panel.
    #[arg(long, value_parser = parse_range)]
    pub test_range: Option<StepRange>,
    #[arg(long, default_value = "pred.csv")]
    pub out: PathBuf,
    /// Write each step's similarity matrix into this directory.
    #[arg(long)]
    pub dump_similarity: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub similarity: SimilarityArgs,
    #[command(flatten)]
    pub spectral: SpectralArgs,
    #[command(flatten)]
    pub chain: ChainArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long, required = true)]
    pub pred: Vec<PathBuf>,
    #[arg(long)]
    pub truth: PathBuf,
    /// Skip this many steps from each regime change.
    #[arg(long, default_value_t = 0)]
    pub mask_after: usize,
    /// Per-step CSV report.
    #[arg(long)]
    pub out_report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct WeightsArgs {
    #[arg(long)]
    pub panel: PathBuf,
    /// Partition string such as `1,2|3`.
    #[arg(long, conflicts_with = "timeline")]
    pub partition: Option<String>,
    /// Timeline CSV; the partition at `--at` is used.
    #[arg(long)]
    pub timeline: Option<PathBuf>,
    /// Step at which to weight; defaults to the last panel step.
    #[arg(long)]
    pub at: Option<usize>,
    #[arg(long, default_value_t = 20)]
    pub window: usize,
    #[arg(long, default_value = "weights.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CliqueArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0.75)]
    pub q: f64,
    #[arg(long, default_value_t = 0)]
    pub slack: usize,
    /// Vertex count, when isolated vertices are not listed.
    #[arg(long)]
    pub vertices: Option<usize>,
}
