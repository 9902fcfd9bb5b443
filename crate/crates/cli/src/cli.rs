use std::net::IpAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use ringtower_core::metrics::Timing;

#[derive(Debug, Parser)]
#[command(
    name = "ringtower",
    version,
    about = "Ring-tower collision detection and review"
)]
pub struct Cli {
    /// Run single-threaded.
    #[arg(long, global = true)]
    pub sequential: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect collision intervals and write an auto labels file.
    Detect(DetectArgs),
    /// Tint detected tower pixels red in copies of the frames.
    Overlay(OverlayArgs),
    /// Compute completion time, error count and error percentage.
    Metrics(MetricsArgs),
    /// Frame-level confusion of predicted against reference labels.
    Evaluate(EvaluateArgs),
    /// Render synthetic scenes with ground truth.
    Synth(SynthArgs),
    /// Long-format table with per-cell means and 95% intervals.
    Aggregate(AggregateArgs),
    /// HTTP service for reviewing and correcting labels.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Inputs {
    /// Directory of frame_NNNNNN.png files.
    #[arg(long)]
    pub frames: PathBuf,
    /// CSV with frame_index,timestamp_s; defaults to timestamps.csv in the frames directory.
    #[arg(long)]
    pub timestamps: Option<PathBuf>,
    #[arg(long)]
    pub segmentation: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

impl Inputs {
    pub fn timestamps_path(&self) -> PathBuf {
        self.timestamps
            .clone()
            .unwrap_or_else(|| self.frames.join("timestamps.csv"))
    }
}

#[derive(Debug, Clone, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub out: PathBuf,
    /// Write per-frame signal traces (one CSV per tower) here.
    #[arg(long)]
    pub trace_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct OverlayArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long)]
    pub segmentation: PathBuf,
    #[arg(long)]
    pub timestamps: PathBuf,
    #[arg(long)]
    pub resident: String,
    /// 1 to 6.
    #[arg(long)]
    pub shift: u8,
    #[arg(long)]
    pub timing: Timing,
    /// Defaults to the labels file's parent directory name.
    #[arg(long)]
    pub source_id: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    /// Add the row to an existing metrics file instead of replacing it.
    #[arg(long)]
    pub append: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub truth: PathBuf,
    #[arg(long)]
    pub segmentation: PathBuf,
    #[arg(long)]
    pub source_id: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SynthArgs {
    /// Scene script (JSON).
    #[arg(
        long,
        conflicts_with = "default_corpus",
        required_unless_present = "default_corpus"
    )]
    pub script: Option<PathBuf>,
    /// The built-in 20-case corpus.
    #[arg(long)]
    pub default_corpus: bool,
    /// Gaussian pixel noise sigma, overriding the scripts.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct AggregateArgs {
    /// metrics.csv files to combine.
    #[arg(long = "metrics", required = true, num_args = 1..)]
    pub metrics: Vec<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    /// Auto labels produced by `detect`.
    #[arg(long)]
    pub labels: PathBuf,
    /// Where corrected labels are saved; loaded at startup when present.
    #[arg(long)]
    pub corrected: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: IpAddr,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
}
