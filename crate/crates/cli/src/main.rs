//! `mvped` command line.

mod commands;
mod stages;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mvped_core::eval::Convention;
use mvped_core::generators::Backend;
use mvped_core::pipeline::CONFIG_ENV;
use mvped_core::scene::ViewId;
use mvped_core::TileSize;

/// Failure with the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    /// Bad input: arguments, config, or files.
    pub fn invalid(e: impl std::fmt::Display) -> Self {
        CliError { code: 2, message: e.to_string() }
    }

    /// A stage ran and failed.
    pub fn stage(e: impl std::fmt::Display) -> Self {
        CliError { code: 3, message: e.to_string() }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

#[derive(Parser)]
#[command(name = "mvped", version, about = "Multi-view pedestrian video editing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic six-camera scene with exact ground truth.
    Fixture(FixtureArgs),
    /// Print every track's projected 2D boxes as JSON lines.
    Project(ProjectArgs),
    /// Cut per-view tile videos around one track.
    Crop(StageArgs),
    /// Stitch the tile videos of one track into the canvas.
    Compose(StageArgs),
    /// Split a composed canvas back into per-view tiles.
    Decompose(DecomposeArgs),
    /// Build the editable-region mask of one track's canvas.
    Mask(StageArgs),
    /// Rasterize one track's skeleton onto the canvas.
    PoseRaster(StageArgs),
    /// Train the toy denoiser on synthetic sprite samples.
    Train(TrainArgs),
    /// Inpaint a synthetic sample with a trained denoiser.
    Sample(SampleArgs),
    /// Run a generator backend on one track's conditioning canvas.
    Generate(GenerateArgs),
    /// Edit a scene end to end and write a reproducible run directory.
    Edit(EditArgs),
    /// Score detections against ground truth with BEV distance gates.
    Eval(EvalArgs),
    /// Replay a run manifest and compare stage checksums.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct FixtureArgs {
    /// Output scene directory.
    #[arg(long)]
    out: PathBuf,
    /// Fixture spec (JSON or TOML); defaults to one walker crossing FRONT.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long)]
    frames: Option<usize>,
    /// Replace the walkers with this many random ones.
    #[arg(long)]
    pedestrians: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Also write the pedestrian-free twin here.
    #[arg(long)]
    empty_out: Option<PathBuf>,
}

#[derive(Args)]
struct ProjectArgs {
    #[arg(long)]
    scene: PathBuf,
    /// Only this track.
    #[arg(long)]
    track: Option<u32>,
}

/// Scene, track and the knobs shared by the per-stage commands.
#[derive(Args, Clone)]
pub struct StageArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub track: u32,
    #[arg(long)]
    pub out: PathBuf,
    /// Pipeline config (TOML); falls back to the file named by the config
    /// environment variable.
    #[arg(long, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,
    /// Tile size as HEIGHTxWIDTH.
    #[arg(long, value_parser = parse_tile)]
    pub tile_size: Option<TileSize>,
    #[arg(long)]
    pub expand_factor: Option<f64>,
    /// Six comma-separated view names, row-major.
    #[arg(long, value_delimiter = ',')]
    pub layout: Option<Vec<ViewId>>,
    #[arg(long)]
    pub mask_factor: Option<f64>,
    #[arg(long)]
    pub dilate_radius: Option<u32>,
}

#[derive(Args)]
struct DecomposeArgs {
    /// Directory written by `compose`.
    #[arg(long)]
    canvas: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    /// Checkpoint file to write.
    #[arg(long)]
    out: PathBuf,
    /// Training config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 4)]
    samples: usize,
    #[arg(long, value_parser = parse_tile, default_value = "64x32")]
    tile_size: TileSize,
    /// Write the per-step loss, one value per line.
    #[arg(long)]
    loss_out: Option<PathBuf>,
}

#[derive(Args)]
struct SampleArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_tile, default_value = "64x32")]
    tile_size: TileSize,
}

#[derive(Args)]
struct GenerateArgs {
    #[command(flatten)]
    stage: StageArgs,
    #[arg(long)]
    backend: Option<Backend>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    top: Option<String>,
    #[arg(long)]
    pants: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Op {
    Replace,
    Insert,
    Remove,
}

#[derive(Args)]
struct EditArgs {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long, value_enum)]
    op: Op,
    #[arg(long)]
    track: Option<u32>,
    /// Per-frame 3D skeleton file (JSON).
    #[arg(long)]
    motion: Option<PathBuf>,
    #[arg(long)]
    top: Option<String>,
    #[arg(long)]
    pants: Option<String>,
    #[arg(long)]
    backend: Option<Backend>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(long)]
    out: PathBuf,
    /// Write only the edited scene and the manifest.
    #[arg(long)]
    no_intermediates: bool,
    /// Check per-stage invariants on the live data; failures exit with 3.
    #[arg(long)]
    verify: bool,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dets: PathBuf,
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value = "nuscenes")]
    convention: Convention,
    /// Print JSON instead of the table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    manifest: PathBuf,
}

fn parse_tile(s: &str) -> Result<TileSize, String> {
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(|| format!("`{s}` is not HEIGHTxWIDTH"))?;
    let h: u32 = h.trim().parse().map_err(|_| format!("bad height in `{s}`"))?;
    let w: u32 = w.trim().parse().map_err(|_| format!("bad width in `{s}`"))?;
    if h == 0 || w == 0 {
        return Err("tile sides must be positive".into());
    }
    Ok(TileSize::new(h, w))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Fixture(a) => commands::fixture(a),
        Command::Project(a) => commands::project(a),
        Command::Crop(a) => stages::crop(&a),
        Command::Compose(a) => stages::compose(&a),
        Command::Decompose(a) => stages::decompose(&a.canvas, &a.out),
        Command::Mask(a) => stages::mask(&a),
        Command::PoseRaster(a) => stages::pose_raster(&a),
        Command::Train(a) => commands::train(a),
        Command::Sample(a) => commands::sample(a),
        Command::Generate(a) => commands::generate(a),
        Command::Edit(a) => commands::edit(a),
        Command::Eval(a) => commands::eval(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}
