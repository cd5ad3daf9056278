//! Command-line front end: data preparation, training, short-term
//! evaluation, the loss comparison, generation, corpus statistics and the
//! streaming service.

pub mod commands;
pub mod config;
pub mod report;

use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use qmotion::dataset::Protocol;
use qmotion::gait::PaceMode;
use qmotion::Error;

pub use report::{BenchReport, ReportRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::NonFiniteLoss(_) | Error::NonFiniteGradient { .. } | Error::DegenerateQuaternion { .. } => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

#[derive(Debug, Parser)]
#[command(name = "qmotion", version, about = "Quaternion motion prediction and locomotion generation")]
pub struct Cli {
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a manifest and a dataset cache.
    Prepare(PrepareArgs),
    /// Train a pose network.
    TrainPose(TrainPoseArgs),
    /// Train a pace network.
    TrainPace(TrainPaceArgs),
    /// Short-term angle error per action at 80/160/320/400 ms.
    EvalShortterm(EvalArgs),
    /// Train twin models under the angle and positional losses.
    LossCompare(LossCompareArgs),
    /// Generate locomotion along a trajectory.
    Generate(GenerateArgs),
    /// Euler-angle and gait distributions of a corpus.
    Stats(StatsArgs),
    /// Run the websocket generation service.
    Serve(ServeArgs),
}

/// Where the corpus comes from: a prepared manifest or a raw data root.
#[derive(Clone, Debug, Args)]
pub struct DataArgs {
    #[arg(long, conflicts_with = "data")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "h36m")]
    pub protocol: Protocol,
}

#[derive(Debug, Args)]
pub struct PrepareArgs {
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    #[arg(long, default_value = "h36m")]
    pub protocol: Protocol,
    /// `biped` or `chain[:joints]`.
    #[arg(long)]
    pub synthetic: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub clips: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Clips held out for testing; a quarter by default.
    #[arg(long)]
    pub test_clips: Option<usize>,
    /// Output directory; defaults to the data root.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainPoseArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value = "pose.ckpt")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total epochs, counting those of a resumed run.
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Per-epoch metrics; defaults to `<out>.metrics.csv`.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainPaceArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "pace.ckpt")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value = "delayed:4")]
    pub mode: PaceMode,
    #[arg(long, default_value_t = 0.25)]
    pub segment_length: f64,
    #[arg(long, default_value_t = 30)]
    pub hidden: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub learning_rate: f64,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: Vec<PathBuf>,
    /// `zero-velocity`, `run-avg2`, `run-avg4` or `all`.
    #[arg(long)]
    pub baseline: Vec<String>,
    /// Test windows per action.
    #[arg(long)]
    pub sequences: Option<usize>,
    /// Defaults to the manifest seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct LossCompareArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Evaluation windows drawn from the test split.
    #[arg(long, default_value_t = 16)]
    pub windows: usize,
    #[arg(long, default_value = "loss-compare")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub trajectory: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub speed: f64,
    #[arg(long)]
    pub pose: PathBuf,
    #[arg(long)]
    pub pace: Option<PathBuf>,
    #[arg(long, default_value = "delayed:4")]
    pub mode: PaceMode,
    /// Defaults to the pose checkpoint's rate.
    #[arg(long)]
    pub frame_rate: Option<f64>,
    /// Defaults to the pace checkpoint's value or 0.25.
    #[arg(long)]
    pub segment_length: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    pub max_frames: usize,
    #[arg(long, default_value = "generated.bvh")]
    pub out: PathBuf,
    #[arg(long)]
    pub positions: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, default_value = "stats")]
    pub out: PathBuf,
    #[arg(long, default_value_t = 72)]
    pub bins: usize,
    #[arg(long, default_value_t = 20)]
    pub gait_bins: usize,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1:8080")]
    pub listen: SocketAddr,
    #[arg(long, default_value = "checkpoints")]
    pub checkpoint_dir: PathBuf,
    #[arg(long, default_value_t = 16)]
    pub max_sessions: usize,
    #[arg(long, default_value_t = 30.0)]
    pub frame_rate: f64,
}

pub fn run(cli: Cli) -> qmotion::Result<()> {
    use commands::*;
    match cli.command {
        Command::Prepare(a) => prepare::run(&a),
        Command::TrainPose(a) => train::run_pose(&a),
        Command::TrainPace(a) => train::run_pace(&a),
        Command::EvalShortterm(a) => eval::run(&a).map(|_| ()),
        Command::LossCompare(a) => loss_compare::run(&a),
        Command::Generate(a) => generate::run(&a).map(|_| ()),
        Command::Stats(a) => stats::run(&a),
        Command::Serve(a) => qmotion_service::run_blocking(qmotion_service::ServiceConfig {
            listen: a.listen,
            checkpoint_dir: a.checkpoint_dir,
            max_sessions: a.max_sessions,
            frame_rate: a.frame_rate,
        }),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
