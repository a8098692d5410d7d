use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gsnet_core::io::PointFormat;
use gsnet_core::synth::Layout;
use gsnet_core::train::OptimizerKind;

mod commands;

#[derive(Parser, Debug)]
#[command(name = "gsnet", version, about = "Densify sparse point clouds into 3D Gaussian arrays")]
struct Cli {
    /// Seed for scene generation and network initialization.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads; 1 gives fully reproducible runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Repeat for more log output.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic scene directory.
    Gen(GenArgs),
    /// Convert an external point cloud into a sparse.ply.
    Ingest(IngestArgs),
    /// Pair sparse anchors with their nearest ground-truth primitives.
    Pair(PairArgs),
    /// Train network weights on one or more scene directories.
    Train(TrainArgs),
    /// Predict a dense Gaussian array from a sparse cloud.
    Predict(PredictArgs),
    /// Render a Gaussian array from every camera in a cameras file.
    Render(RenderArgs),
    /// Compare initialization strategies on held-out views.
    Eval(EvalArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, default_value = "box-room", value_parser = parse_layout)]
    layout: Layout,
    #[arg(long, default_value_t = 50_000)]
    dense_count: usize,
    #[arg(long, default_value_t = 0.05)]
    sparse_fraction: f64,
    #[arg(long, default_value_t = 12)]
    cameras: usize,
    #[arg(long, default_value_t = 0.5)]
    ring_radius: f64,
    /// Procedural texture id (0 checker, 1 stripes, 2 blotches).
    #[arg(long, default_value_t = 0)]
    texture: u32,
    #[arg(long, default_value_t = 160)]
    width: usize,
    #[arg(long, default_value_t = 120)]
    height: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct IngestArgs {
    #[arg(long)]
    input: PathBuf,
    /// `ply` or `colmap-text` (points3D.txt).
    #[arg(long, default_value = "ply", value_parser = parse_point_format)]
    format: PointFormat,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PairArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Scene directories to train on.
    #[arg(long = "scene", required = true, num_args = 1..)]
    scenes: Vec<PathBuf>,
    /// key = value file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from this checkpoint instead of a seeded initialization.
    #[arg(long)]
    init: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, value_parser = parse_optimizer)]
    optimizer: Option<OptimizerKind>,
    #[arg(long)]
    validation_fraction: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    /// Sparse cloud (PLY); defaults to `<scene>/sparse.ply`.
    #[arg(long, required_unless_present = "scene")]
    input: Option<PathBuf>,
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    gaussians: PathBuf,
    #[arg(long)]
    cameras: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    weights: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn parse_layout(s: &str) -> Result<Layout, String> {
    s.parse().map_err(|e: gsnet_core::Error| e.to_string())
}

fn parse_point_format(s: &str) -> Result<PointFormat, String> {
    s.parse().map_err(|e: gsnet_core::Error| e.to_string())
}

fn parse_optimizer(s: &str) -> Result<OptimizerKind, String> {
    s.parse().map_err(|e: gsnet_core::Error| e.to_string())
}

/// Module tag of the first library error in the chain.
fn module_of(err: &anyhow::Error) -> &'static str {
    err.chain()
        .find_map(|e| e.downcast_ref::<gsnet_core::Error>())
        .map_or("cli", gsnet_core::Error::module)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();

    let result = match cli.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(anyhow::Error::from)
            .and_then(|_| commands::run(&cli)),
        None => commands::run(&cli),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error [{}]: {err:#}", module_of(&err));
            ExitCode::from(1)
        }
    }
}
