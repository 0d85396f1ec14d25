//! `planeseg` command-line front end.
//!
//! Exit codes: 0 success, 2 unreadable or malformed input, 64 invalid
//! configuration or usage, 70 internal invariant violation.

mod commands;
mod config;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 2;
pub const EXIT_CONFIG: i32 = 64;
pub const EXIT_INTERNAL: i32 = 70;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub msg: String,
}

impl CliError {
    pub fn io(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_IO,
            msg: msg.into(),
        }
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            msg: msg.into(),
        }
    }
    pub fn internal(msg: impl Into<String>) -> Self {
        Self {
            code: EXIT_INTERNAL,
            msg: msg.into(),
        }
    }
}

impl From<planeseg::Error> for CliError {
    fn from(e: planeseg::Error) -> Self {
        use planeseg::Error as E;
        let code = match &e {
            E::Io { .. } | E::Format { .. } | E::Integrity { .. } | E::Capacity(_) => EXIT_IO,
            E::Config(_) | E::Shape(_) => EXIT_CONFIG,
            E::Degenerate(_) | E::Normalization(_) => EXIT_INTERNAL,
        };
        Self {
            code,
            msg: e.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.msg)
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "planeseg",
    version,
    about = "Plane instance segmentation toolkit"
)]
pub struct Cli {
    /// Base configuration file (TOML); flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for every random choice.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// More log output; repeat for more.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract plane instances from a directory of depth PNGs.
    Annotate(AnnotateArgs),
    /// Overlap and size statistics of an annotation directory.
    Stats(StatsArgs),
    /// Filter a detection file with Fast Feature NMS.
    NmsFilter(NmsFilterArgs),
    /// Compare predicted annotations against ground truth.
    Eval(EvalArgs),
    /// Assemble instance masks from prototypes and detection coefficients.
    Assemble(AssembleArgs),
    /// Write a depth frame as a PLY point cloud coloured by instance.
    ExportPly(ExportPlyArgs),
    /// Time Fast NMS against Fast Feature NMS on random detections.
    BenchNms(BenchArgs),
}

#[derive(Debug, Args, Default)]
pub struct NdtFlags {
    #[arg(long)]
    pub cell_size: Option<f64>,
    #[arg(long)]
    pub min_points_per_cell: Option<usize>,
    #[arg(long)]
    pub planarity_ratio: Option<f64>,
    #[arg(long)]
    pub ransac_iters: Option<usize>,
    #[arg(long)]
    pub dist_thresh: Option<f64>,
    /// Degrees.
    #[arg(long)]
    pub angle_thresh: Option<f64>,
    #[arg(long)]
    pub min_inlier_cells: Option<usize>,
    /// Fraction of the frame.
    #[arg(long)]
    pub min_mask_area: Option<f64>,
}

#[derive(Debug, Args, Default)]
pub struct NmsFlags {
    #[arg(long)]
    pub n1: Option<f64>,
    #[arg(long)]
    pub n2: Option<f64>,
    /// Cosine-similarity threshold.
    #[arg(long, allow_hyphen_values = true)]
    pub t: Option<f64>,
    #[arg(long)]
    pub top_n: Option<usize>,
    #[arg(long)]
    pub score_thresh: Option<f64>,
}

#[derive(Debug, Args)]
pub struct AnnotateArgs {
    /// Directory of 16-bit depth PNGs.
    #[arg(long)]
    pub depth_dir: PathBuf,
    #[arg(long)]
    pub intrinsics: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[command(flatten)]
    pub ndt: NdtFlags,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Directory of label PNGs with JSON sidecars.
    #[arg(long)]
    pub ann_dir: PathBuf,
    /// Also write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct NmsFilterArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Plain Fast NMS at this IoU threshold instead of Fast Feature NMS.
    #[arg(long)]
    pub fast: Option<f64>,
    #[command(flatten)]
    pub nms: NmsFlags,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred_dir: PathBuf,
    #[arg(long)]
    pub gt_dir: PathBuf,
    /// `all-point` or a number of sampled recall points.
    #[arg(long)]
    pub interpolation: Option<String>,
    /// Also write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AssembleArgs {
    /// Raw tensor file whose first tensor is the `h × w × k` prototype stack.
    #[arg(long)]
    pub prototypes: PathBuf,
    #[arg(long)]
    pub detections: PathBuf,
    /// Raw tensor file receiving the `n × h × w` masks.
    #[arg(long)]
    pub output: PathBuf,
    /// Zero each mask outside its detection box (prototype pixel units).
    #[arg(long)]
    pub crop: bool,
}

#[derive(Debug, Args)]
pub struct ExportPlyArgs {
    #[arg(long)]
    pub depth: PathBuf,
    #[arg(long)]
    pub intrinsics: PathBuf,
    /// Label PNG (with sidecar) used to colour the points.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 32)]
    pub k: usize,
    #[arg(long, default_value_t = 1000)]
    pub trials: usize,
    #[command(flatten)]
    pub nms: NmsFlags,
    /// Also write the JSON report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .target(env_logger::Target::Stderr)
        .try_init();
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, A>(args: I) -> i32
where
    I: IntoIterator<Item = A>,
    A: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    EXIT_OK
                }
                _ => EXIT_CONFIG,
            };
        }
    };
    init_logging(cli.verbose);
    match commands::dispatch(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    }
}
