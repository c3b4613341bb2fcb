mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Depth-based viewpoint warping of image tokens and view-pair benchmark tools.
#[derive(Debug, Parser)]
#[command(name = "tokenwarp", version)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Meters per unit of 16-bit depth PNGs.
    #[arg(long, global = true, default_value_t = 0.001)]
    pub depth_scale: f64,
    /// Convention of the 4x4 pose files. Required by every command that reads or writes poses.
    #[arg(long, global = true, value_enum)]
    pub pose_convention: Option<Convention>,
    /// Depth-test slack in meters for visibility.
    #[arg(long, global = true, default_value_t = 0.02)]
    pub occlusion_tol: f64,
    /// Output file or directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write a JSON sidecar next to the main output.
    #[arg(long, global = true)]
    pub emit_json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Convention {
    C2w,
    W2c,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Fetch {
    Nearest,
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Task {
    Text,
    Shape,
    Object,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Scene {
    Plane,
    TwoPlane,
}

/// A source/target frame pair inside a scan directory.
#[derive(Debug, Args)]
pub struct FramePair {
    /// Scan directory with color/, depth/, pose/ and intrinsic.txt.
    #[arg(long)]
    pub scan: PathBuf,
    #[arg(long)]
    pub source: String,
    #[arg(long)]
    pub target: String,
}

/// Where scene points for visibility come from.
#[derive(Debug, Args)]
pub struct PointsArgs {
    /// World points file (`x y z` per line). Defaults to depth-unprojected points of the frames.
    #[arg(long)]
    pub points: Option<PathBuf>,
    /// Pixel stride when unprojecting depth into scene points.
    #[arg(long, default_value_t = 4, value_parser = clap::value_parser!(u32).range(1..))]
    pub stride: u32,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Warp the source image into the target view at pixel resolution.
    WarpPixels {
        #[command(flatten)]
        frames: FramePair,
        #[arg(long, value_enum)]
        mode: Direction,
        /// Color for holes, as `r,g,b`.
        #[arg(long, default_value = "0,0,0", value_parser = commands::parse_rgb)]
        fill: [u8; 3],
        /// Also write the validity mask as a PNG.
        #[arg(long)]
        mask: Option<PathBuf>,
    },
    /// Warp the source token grid into the target view and write a fetch map.
    WarpTokens {
        #[command(flatten)]
        frames: FramePair,
        #[arg(long, value_enum, default_value_t = Direction::Backward)]
        direction: Direction,
        #[arg(long, value_enum, default_value_t = Fetch::Nearest)]
        fetch: Fetch,
        #[arg(long, default_value_t = 16)]
        patch_size: u32,
        /// Drop mesh triangles whose corner depths differ by more than this ratio.
        #[arg(long)]
        max_depth_ratio: Option<f64>,
        /// Write the fetched patches tiled on the target grid as a PNG.
        #[arg(long)]
        render: Option<PathBuf>,
    },
    /// Overlap ratio of two frames.
    Overlap {
        #[command(flatten)]
        frames: FramePair,
        #[command(flatten)]
        points: PointsArgs,
    },
    /// Bin all frame pairs of a scan by overlap and sample per bin.
    Pairs {
        #[arg(long)]
        scan: PathBuf,
        #[arg(long)]
        per_bin: usize,
        #[arg(long)]
        seed: u64,
        /// Comma-separated frame ids; defaults to every frame in color/.
        #[arg(long, value_delimiter = ',')]
        frames: Option<Vec<String>>,
        #[command(flatten)]
        points: PointsArgs,
    },
    /// Generate left/right or description questions for a frame pair.
    Annotate {
        #[command(flatten)]
        frames: FramePair,
        #[arg(long, value_enum)]
        task: Task,
        /// Minimum horizontal separation of the pair in the target view, in pixels.
        #[arg(long, default_value_t = 50.0)]
        tau: f64,
        #[arg(long)]
        seed: u64,
        /// Number of instances to attempt.
        #[arg(long, default_value_t = 1)]
        count: usize,
        #[command(flatten)]
        points: PointsArgs,
    },
    /// Answer left/right questions from source depth and relative pose.
    Oracle {
        #[arg(long)]
        scan: PathBuf,
        /// JSON-lines file written by `annotate`.
        #[arg(long)]
        instances: PathBuf,
    },
    /// Re-crop every patch from a jittered center.
    Jitter {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value_t = 16)]
        patch_size: u32,
        #[arg(long)]
        max_disp: f64,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 9)]
        neighborhood: u32,
        /// Additionally perturb each pixel inside its patch.
        #[arg(long)]
        pixel_baseline: bool,
    },
    /// Write a synthetic planar scan with a source (0) and target (1) frame.
    Synth {
        #[arg(long, value_enum)]
        scene: Scene,
        #[arg(long, default_value_t = 128)]
        width: u32,
        #[arg(long, default_value_t = 128)]
        height: u32,
        #[arg(long, default_value_t = 100.0)]
        fx: f64,
        #[arg(long, default_value_t = 100.0)]
        fy: f64,
        /// Defaults to width / 2.
        #[arg(long)]
        cx: Option<f64>,
        /// Defaults to height / 2.
        #[arg(long)]
        cy: Option<f64>,
        /// Plane depth for `--scene plane`.
        #[arg(long, default_value_t = 2.0)]
        depth: f64,
        #[arg(long, default_value_t = 1.0)]
        z_near: f64,
        #[arg(long, default_value_t = 4.0)]
        z_far: f64,
        /// First column of the near plane; defaults to width / 2.
        #[arg(long)]
        split: Option<u32>,
        /// Target camera center displacement in meters.
        #[arg(long, default_value_t = 0.2, allow_hyphen_values = true)]
        tx: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        ty: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        tz: f64,
        /// Target camera rotation about its x, y and z axes, in degrees.
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        rx: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        ry: f64,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        rz: f64,
        /// Checkerboard square size in pixels.
        #[arg(long, default_value_t = 16)]
        period: u32,
        /// Write depth as PFM instead of 16-bit PNG.
        #[arg(long)]
        pfm: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
