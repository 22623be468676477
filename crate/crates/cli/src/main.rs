//! `patchgrow`: planar patch extraction from stereo point clouds.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use patchgrow_cli::commands;
use patchgrow_cli::sweep::{self, parse_range, SweepSpec};

#[derive(Parser)]
#[command(
    name = "patchgrow",
    version,
    about = "Planar patch extraction from stereo point clouds"
)]
struct Cli {
    /// Log progress (repeat for debug output).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract planar patches from a point cloud.
    Extract(ExtractArgs),
    /// Generate a synthetic scene with ground truth.
    Synth(SynthArgs),
    /// Score extracted patches against ground truth.
    Eval(EvalArgs),
    /// Run the pipeline over a range of noise levels, sizes or thresholds.
    Sweep(SweepArgs),
    /// Fit the reconstruction-noise model and store it with the cameras.
    Calibrate(CalibrateArgs),
}

#[derive(Args)]
struct ExtractArgs {
    /// Point cloud (PLY).
    cloud: PathBuf,
    /// Cameras document.
    cameras: PathBuf,
    /// Segments document.
    segments: PathBuf,
    /// Threshold configuration; built-in defaults otherwise.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override block to apply; taken from the cloud's scene id if omitted.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Write the labelled cloud as binary PLY.
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct SynthArgs {
    /// Built-in scene.
    #[arg(long, conflicts_with = "spec")]
    preset: Option<String>,
    /// Scene description (JSON) instead of a preset.
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    points_per_face: usize,
    /// Pixel noise standard deviation.
    #[arg(long, default_value_t = 0.001)]
    sigma: f64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    #[arg(long)]
    binary: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Ground-truth document.
    gt: PathBuf,
    /// Patches document.
    patches: PathBuf,
    /// Directory for `metrics.csv`; printed only if omitted.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Axis {
    Noise,
    Points,
    Patches,
    Thresholds,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_enum)]
    axis: Axis,
    /// Scene for every sample (the patches axis uses strip scenes).
    #[arg(long, default_value = "two-plane")]
    preset: String,
    /// `lo:hi` of the swept value. Defaults: noise 0.001:0.5, points
    /// 1000:4000, patches 2:8, thresholds -60:30 (ln τ).
    #[arg(long)]
    range: Option<String>,
    /// `lo:hi` of log10 w for the thresholds axis.
    #[arg(long, default_value = "-14:-2", allow_hyphen_values = true)]
    w_range: String,
    /// Samples along the axis (per axis for thresholds). Defaults: 20 for
    /// noise, 3 for points and patches, 7 for thresholds.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, default_value_t = 1000)]
    points_per_face: usize,
    #[arg(long, default_value_t = 0.001)]
    sigma: f64,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Add a wall-clock column; the output is then no longer reproducible.
    #[arg(long)]
    timing: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CalibrateArgs {
    /// Training point cloud (PLY).
    cloud: PathBuf,
    /// Cameras document to extend.
    cameras: PathBuf,
    #[arg(long, default_value_t = 20)]
    trials: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    let result = match cli.command {
        Command::Extract(a) => commands::extract(
            &a.cloud,
            &a.cameras,
            &a.segments,
            a.config.as_deref(),
            a.preset.as_deref(),
            a.seed,
            &a.out_dir,
            a.binary,
        ),
        Command::Synth(a) => commands::synth(
            a.preset.as_deref(),
            a.spec.as_deref(),
            a.seed,
            a.points_per_face,
            a.sigma,
            &a.out_dir,
            a.binary,
        ),
        Command::Eval(a) => commands::eval(&a.gt, &a.patches, a.out_dir.as_deref()),
        Command::Sweep(a) => sweep_spec(a).and_then(|spec| sweep::run(&spec)),
        Command::Calibrate(a) => commands::calibrate(&a.cloud, &a.cameras, a.trials, a.seed, &a.out_dir),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn sweep_spec(a: SweepArgs) -> commands::CliResult<SweepSpec> {
    let bad = commands::CliError::Input;
    let range = a.range.as_deref().map(parse_range).transpose().map_err(bad)?;
    let w_range = parse_range(&a.w_range).map_err(bad)?;
    if a.samples == Some(0) {
        return Err(bad("--samples must be at least 1".into()));
    }
    Ok(SweepSpec {
        axis: match a.axis {
            Axis::Noise => sweep::Axis::Noise,
            Axis::Points => sweep::Axis::Points,
            Axis::Patches => sweep::Axis::Patches,
            Axis::Thresholds => sweep::Axis::Thresholds,
        },
        preset: a.preset,
        range,
        w_range,
        samples: a.samples,
        points_per_face: a.points_per_face,
        sigma: a.sigma,
        config: a.config,
        seed: a.seed,
        timing: a.timing,
        out_dir: a.out_dir,
    })
}
