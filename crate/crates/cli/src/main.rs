//! Command-line pipeline: synthetic data generation, DSI building and fusion,
//! pixel selection, training, inference, evaluation, benchmarking, and depth
//! rendering. Commands communicate through files only; every run writes a
//! metadata JSON capturing the full configuration.
//!
//! Exit codes: 0 success, 2 configuration error, 3 data/format error,
//! 4 numeric failure.

mod commands;

use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;

use evdepth::error::Result;
use evdepth::RunConfig;

#[derive(Parser)]
#[command(
    name = "evdepth",
    version,
    about = "Event-based multi-view stereo depth estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic event sequence with poses and ground-truth depth.
    Synth(SynthArgs),
    /// Build one DSI per ground-truth frame from events and poses.
    BuildDsi(BuildDsiArgs),
    /// Fuse two DSI files or directories voxel-wise.
    Fuse(FuseArgs),
    /// Select pixels from a DSI with the adaptive Gaussian threshold filter.
    Select(SelectArgs),
    /// Train the depth network on (DSI, ground-truth) frame pairs.
    Train(TrainArgs),
    /// Estimate a depth map from a DSI with the network or the argmax baseline.
    Infer(InferArgs),
    /// Compare estimated depth maps against ground truth.
    Eval(EvalArgs),
    /// Time DSI building (events/s) or network inference (sub-DSIs/s).
    Bench(BenchArgs),
    /// Render a depth map to a pseudo-colored image.
    Render(RenderArgs),
}

/// Pipeline tunables; unspecified flags fall back to `--preset` (or built-in
/// defaults). Presets: `mvsec-indoor`, `dsec-zurich04a`.
#[derive(Args, Clone, Default)]
pub(crate) struct ConfigArgs {
    #[arg(long)]
    preset: Option<String>,
    /// Event window per reference view, seconds (centered on the GT time).
    #[arg(long)]
    span: Option<f64>,
    #[arg(long)]
    z_min: Option<f64>,
    #[arg(long)]
    z_max: Option<f64>,
    /// Depth planes.
    #[arg(long)]
    d: Option<usize>,
    /// Sub-DSI horizontal radius.
    #[arg(long)]
    r_w: Option<usize>,
    /// Sub-DSI vertical radius.
    #[arg(long)]
    r_h: Option<usize>,
    /// AGT window size (odd).
    #[arg(long)]
    window: Option<usize>,
    /// AGT subtractive constant (negative = stricter).
    #[arg(long, allow_hyphen_values = true)]
    agt_c: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output head: single | multi3x3.
    #[arg(long)]
    head: Option<String>,
    /// Voting: nearest | bilinear.
    #[arg(long)]
    vote_mode: Option<String>,
    /// Events per shared-pose packet.
    #[arg(long)]
    packet_size: Option<usize>,
    /// Stereo fusion: harmonic | arithmetic | geometric | min.
    #[arg(long)]
    fusion: Option<String>,
    /// Normalized-depth mapping: linear | inverse.
    #[arg(long)]
    depth_mode: Option<String>,
    #[arg(long)]
    weight_decay: Option<f64>,
    /// Two-member ensemble on/off.
    #[arg(long)]
    ensemble: Option<bool>,
    /// Ensemble split: sample | frame.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    bad_pix_threshold: Option<f64>,
}

impl ConfigArgs {
    pub(crate) fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.preset {
            Some(name) => RunConfig::preset(name)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($field:ident) => {
                if let Some(v) = self.$field {
                    cfg.$field = v;
                }
            };
        }
        set!(span);
        set!(z_min);
        set!(z_max);
        set!(d);
        set!(r_w);
        set!(r_h);
        set!(window);
        set!(agt_c);
        set!(batch_size);
        set!(lr);
        set!(epochs);
        set!(seed);
        set!(packet_size);
        set!(weight_decay);
        set!(ensemble);
        set!(bad_pix_threshold);
        if let Some(s) = &self.head {
            cfg.head = s.parse()?;
        }
        if let Some(s) = &self.vote_mode {
            cfg.vote_mode = s.parse()?;
        }
        if let Some(s) = &self.fusion {
            cfg.fusion = s.parse()?;
        }
        if let Some(s) = &self.depth_mode {
            cfg.depth_mode = s.parse()?;
        }
        if let Some(s) = &self.split {
            cfg.split = s.parse()?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
pub(crate) struct SynthArgs {
    /// Scene specification JSON; omitted = built-in demo wireframe.
    #[arg(long)]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Event file format: csv | bin.
    #[arg(long, default_value = "csv")]
    pub events_format: String,
}

#[derive(Args)]
pub(crate) struct BuildDsiArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Which camera's events to back-project: left | right.
    #[arg(long, default_value = "left")]
    pub camera: String,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Args)]
pub(crate) struct FuseArgs {
    /// First DSI file or directory of frame_*.dsi files.
    #[arg(long)]
    pub a: PathBuf,
    /// Second DSI file or directory.
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Args)]
pub(crate) struct SelectArgs {
    #[arg(long)]
    pub dsi: PathBuf,
    /// Output pixel list CSV.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Args)]
pub(crate) struct TrainArgs {
    /// Scene inputs as <dsi_dir>:<manifest.json>, repeatable.
    #[arg(long = "frames", required = true)]
    pub frames: Vec<String>,
    /// Output model file.
    #[arg(long)]
    pub out: PathBuf,
    /// Training-log CSV basename (epoch,step,loss per member).
    #[arg(long)]
    pub log: Option<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Args)]
pub(crate) struct InferArgs {
    #[arg(long)]
    pub dsi: PathBuf,
    /// net (model required) | argmax.
    #[arg(long, default_value = "net")]
    pub method: String,
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Pixel list CSV; omitted = run AGT selection.
    #[arg(long)]
    pub pixels: Option<PathBuf>,
    /// Apply the 4-neighbor morphological dilation to the result.
    #[arg(long, default_value_t = false)]
    pub dilate: bool,
    /// Output PFM depth map.
    #[arg(long)]
    pub out: PathBuf,
    /// Optional pseudo-color render (png/ppm).
    #[arg(long)]
    pub render: Option<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Args)]
pub(crate) struct EvalArgs {
    /// Estimated depth: PFM file or directory of PFM files.
    #[arg(long)]
    pub est: PathBuf,
    /// Ground truth: PFM file or directory (matched by file name).
    #[arg(long)]
    pub gt: PathBuf,
    /// Pool per-pixel errors across frames instead of weighting per-frame reports.
    #[arg(long, default_value_t = false)]
    pub pooled: bool,
    /// Output report JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Output report CSV (one row per frame plus the summary).
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[command(flatten)]
    pub cfg: ConfigArgs,
}

#[derive(Args)]
pub(crate) struct BenchArgs {
    #[command(subcommand)]
    pub what: BenchCommand,
}

#[derive(Subcommand)]
pub(crate) enum BenchCommand {
    /// Time DSI construction over an event file.
    Dsi {
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        calib: PathBuf,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Time network inference over random sub-DSIs.
    Infer {
        /// Model file; omitted = randomly initialized default network.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, default_value_t = 2000)]
        count: usize,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

#[derive(Args)]
pub(crate) struct RenderArgs {
    /// Depth map PFM.
    #[arg(long)]
    pub depth: PathBuf,
    #[arg(long)]
    pub z_min: f64,
    #[arg(long)]
    pub z_max: f64,
    /// Output image (png/ppm).
    #[arg(long)]
    pub out: PathBuf,
}

fn main() {
    if let Ok(n) = std::env::var("EVDEPTH_WORKERS") {
        match n.parse::<usize>() {
            Ok(workers) if workers >= 1 => {
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(workers)
                    .build_global();
            }
            _ => {
                eprintln!("error: EVDEPTH_WORKERS must be a positive integer, got '{n}'");
                std::process::exit(2);
            }
        }
    }
    let cli = Cli::parse();
    let result: Result<()> = match cli.command {
        Command::Synth(args) => commands::synth(args),
        Command::BuildDsi(args) => commands::build_dsi(args),
        Command::Fuse(args) => commands::fuse(args),
        Command::Select(args) => commands::select(args),
        Command::Train(args) => commands::train(args),
        Command::Infer(args) => commands::infer(args),
        Command::Eval(args) => commands::eval(args),
        Command::Bench(args) => commands::bench(args),
        Command::Render(args) => commands::render(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_class());
    }
}
