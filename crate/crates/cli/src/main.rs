//! `cspn`: depth refinement by convolutional spatial propagation.
//!
//! Exit codes:
//!
//! | code | meaning |
//! |------|---------|
//! | 0 | success |
//! | 2 | bad command line |
//! | 3 | file could not be read or written |
//! | 4 | malformed input file |
//! | 5 | invalid parameters or mismatched inputs |
//! | 6 | oracle check found a deviation above tolerance |

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use cspn_core::scene::Layout;
use cspn_core::BoundaryPolicy;

mod commands;
mod error;

#[derive(Parser, Debug)]
#[command(
    name = "cspn",
    version,
    about = "Depth refinement by convolutional spatial propagation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Refine a depth map with image-guided propagation.
    Refine(RefineArgs),
    /// Write a synthetic ground truth, guidance image and degraded depth.
    GenScene(GenSceneArgs),
    /// Draw sparse depth samples from a depth map.
    SampleSparse(SampleSparseArgs),
    /// Compare the engine against the dense transform on random problems.
    OracleCheck(OracleCheckArgs),
    /// Time the propagation engines.
    Bench(BenchArgs),
    /// Evaluate a prediction against ground truth.
    Metrics(MetricsArgs),
    /// Refine a depth map with the scan-line baseline.
    SpnRefine(SpnRefineArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum AffinityKind {
    Designed,
    Signed,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Boundary {
    Zero,
    Clamp,
}

impl From<Boundary> for BoundaryPolicy {
    fn from(b: Boundary) -> Self {
        match b {
            Boundary::Zero => BoundaryPolicy::ZeroPad,
            Boundary::Clamp => BoundaryPolicy::ClampToEdge,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum LayoutArg {
    TwoPlane,
    Staircase,
    Slanted,
}

impl From<LayoutArg> for Layout {
    fn from(l: LayoutArg) -> Self {
        match l {
            LayoutArg::TwoPlane => Layout::TwoPlane,
            LayoutArg::Staircase => Layout::Staircase,
            LayoutArg::Slanted => Layout::Slanted,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum ReportFormat {
    Text,
    Kv,
}

#[derive(Args, Debug)]
struct RefineArgs {
    /// Guidance image (PGM or PPM).
    #[arg(long)]
    image: PathBuf,
    /// Input depth (PFM, or CSV with a .csv/.txt extension).
    #[arg(long)]
    depth: PathBuf,
    /// Sparse samples as `row,col,depth` lines; they are kept fixed.
    #[arg(long)]
    sparse: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    kernel: usize,
    #[arg(long, default_value_t = 24)]
    iters: usize,
    #[arg(long, value_enum, default_value_t = AffinityKind::Designed)]
    affinity: AffinityKind,
    /// Color bandwidth of the designed affinity.
    #[arg(long, default_value_t = cspn_core::affinity::DEFAULT_SIGMA_COLOR)]
    sigma_color: f64,
    /// Strength of the negative weights of the signed affinity.
    #[arg(long, default_value_t = 0.5)]
    edge_gain: f64,
    #[arg(long, value_enum, default_value_t = Boundary::Zero)]
    boundary: Boundary,
    /// Print the largest per-pixel change of every iteration.
    #[arg(long)]
    trace: bool,
    /// Ground truth depth; prints metrics of the output when given.
    #[arg(long)]
    gt: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct GenSceneArgs {
    #[arg(long, default_value_t = 96)]
    height: usize,
    #[arg(long, default_value_t = 128)]
    width: usize,
    #[arg(long, value_enum, default_value_t = LayoutArg::TwoPlane)]
    layout: LayoutArg,
    #[arg(long, default_value_t = 1.0)]
    depth_min: f64,
    #[arg(long, default_value_t = 5.0)]
    depth_max: f64,
    /// Shift image edges away from the depth discontinuities.
    #[arg(long)]
    no_edge_align: bool,
    /// Noise standard deviation of the degraded depth, meters.
    #[arg(long, default_value_t = 0.1)]
    noise: f64,
    /// Blur of the degraded depth, pixels.
    #[arg(long, default_value_t = 2.0)]
    blur: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives `gt.pfm`, `image.pgm` and `degraded.pfm`.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SampleSparseArgs {
    #[arg(long)]
    depth: PathBuf,
    #[arg(long, default_value_t = cspn_core::scene::DEFAULT_SAMPLE_COUNT)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct OracleCheckArgs {
    /// Largest grid side; grids are drawn up to this size in each direction.
    #[arg(long, alias = "grids", default_value_t = 6)]
    max_side: usize,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 5])]
    kernels: Vec<usize>,
    /// Length of the multi-step comparison.
    #[arg(long, default_value_t = 10)]
    run_steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Offsets every single-step result, for testing the checker.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Grid sizes as WIDTHxHEIGHT.
    #[arg(long, value_delimiter = ',', default_value = "128x96,256x192,512x384,1024x768")]
    sizes: Vec<String>,
    #[arg(long, value_delimiter = ',', default_values_t = [3usize])]
    kernels: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [4usize, 8])]
    iters: Vec<usize>,
    #[arg(long, default_value_t = 3)]
    reps: usize,
    #[arg(long, value_delimiter = ',', default_value = "cspn,spn")]
    engines: Vec<String>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// CSV destination; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Writes the output depth of every configuration here.
    #[arg(long)]
    outputs_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[arg(long)]
    pred: PathBuf,
    /// Pixels with nonpositive ground truth are ignored.
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    format: ReportFormat,
    #[arg(long)]
    sparse: Option<PathBuf>,
    /// Histogram CSV of the horizontal gradient error at the anchors.
    #[arg(long, requires = "sparse")]
    grad_hist: Option<PathBuf>,
    /// Histogram CSV of the prediction's distance from the anchor depths.
    #[arg(long, requires = "sparse")]
    displacement_hist: Option<PathBuf>,
    #[arg(long, default_value_t = cspn_core::metrics::DEFAULT_BINS)]
    bins: usize,
}

#[derive(Args, Debug)]
struct SpnRefineArgs {
    #[arg(long)]
    image: PathBuf,
    #[arg(long)]
    depth: PathBuf,
    #[arg(long)]
    sparse: Option<PathBuf>,
    #[arg(long, default_value_t = cspn_core::affinity::DEFAULT_SIGMA_COLOR)]
    sigma_color: f64,
    /// Number of four-direction refines.
    #[arg(long, default_value_t = 1)]
    refines: usize,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Refine(a) => commands::refine(a),
        Command::GenScene(a) => commands::gen_scene(a),
        Command::SampleSparse(a) => commands::sample_sparse(a),
        Command::OracleCheck(a) => commands::oracle_check(a),
        Command::Bench(a) => commands::bench(a),
        Command::Metrics(a) => commands::metrics(a),
        Command::SpnRefine(a) => commands::spn_refine(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
