//! The `darkflash` command line: synth, augment, solve, fuse, relight, eval.
//! Commands communicate through a capture manifest and JSON sidecars; see
//! [`manifest`] for the layout and [`config`] for the experiment schema and
//! seed scheme.

mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::augment::ConditionKind;
use crate::brdf::HalfVector;
use crate::imaging::Falloff;
use crate::relight::ReflectanceModel;
use crate::solver::SolverMode;

#[derive(Debug, Parser)]
#[command(
    name = "darkflash",
    version,
    about = "Synthetic dark-flash captures, inverse rendering, depth fusion and relighting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a synthetic capture from a JSON config.
    Synth(SynthArgs),
    /// Simulate a lighting condition from the visible OLATs.
    Augment(AugmentArgs),
    /// Estimate normals, albedo and specular intensity.
    Solve(SolveArgs),
    /// Refine the stereo depth with estimated normals.
    Fuse(FuseArgs),
    /// Add a virtual fill light to an input image.
    Relight(RelightArgs),
    /// Compare an estimate or depth map against the ground truth.
    Eval(EvalArgs),
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum FalloffArg {
    InverseSquare,
    Constant,
}

impl From<FalloffArg> for Falloff {
    fn from(f: FalloffArg) -> Self {
        match f {
            FalloffArg::InverseSquare => Falloff::InverseSquare,
            FalloffArg::Constant => Falloff::Constant,
        }
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum HalfVectorArg {
    Blinn,
    PaperLiteral,
}

impl From<HalfVectorArg> for HalfVector {
    fn from(h: HalfVectorArg) -> Self {
        match h {
            HalfVectorArg::Blinn => HalfVector::Blinn,
            HalfVectorArg::PaperLiteral => HalfVector::PaperLiteral,
        }
    }
}

/// Rendering overrides shared by the commands that render.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub falloff: Option<FalloffArg>,
    #[arg(long = "halfvector")]
    pub half_vector: Option<HalfVectorArg>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, value_parser = parse_kind)]
    pub kind: ConditionKind,
    /// Defaults to the manifest's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Condition sidecar from `augment`; its image becomes an extra
    /// observation and the initialization image.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long = "lambda-p", default_value_t = 10.0)]
    pub lambda_p: f64,
    #[arg(long = "lambda-c", default_value_t = 50.0)]
    pub lambda_c: f64,
    /// Specular exponent.
    #[arg(long = "m", default_value_t = crate::brdf::DEFAULT_EXPONENT)]
    pub exponent: f64,
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub step: f64,
    #[arg(long, default_value = "adaptive", value_parser = parse_mode)]
    pub mode: SolverMode,
    /// Defaults to the manifest's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Estimate sidecar whose normals drive the refinement.
    #[arg(long)]
    pub estimate: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub wz: f64,
    #[arg(long, default_value_t = 10.0)]
    pub wn: f64,
    #[arg(long, default_value_t = crate::fusion::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long = "max-iters", default_value_t = crate::fusion::DEFAULT_MAX_ITERATIONS)]
    pub max_iters: usize,
    /// Spatial sigma of the bilateral baseline, pixels.
    #[arg(long = "spatial-sigma", default_value_t = 3.0)]
    pub spatial_sigma: f64,
    /// Range sigma of the bilateral baseline, in guide intensity units.
    #[arg(long = "range-sigma", default_value_t = 0.1)]
    pub range_sigma: f64,
}

#[derive(Debug, Args)]
pub struct RelightArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub estimate: PathBuf,
    /// Condition sidecar from `augment`; defaults to the well-lit average.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Depth PFM to render at (e.g. a fused depth); defaults to stereo depth.
    #[arg(long)]
    pub depth: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Virtual light position `x,y,z` in camera coordinates (meters).
    #[arg(long = "light-pos", value_parser = parse_vec3, allow_hyphen_values = true)]
    pub light_pos: [f64; 3],
    /// Virtual light RGB intensity `r,g,b`.
    #[arg(long = "light-intensity", value_parser = parse_vec3, default_value = "1,1,1")]
    pub light_intensity: [f64; 3],
    #[arg(long, default_value = "full", value_parser = parse_model)]
    pub model: ReflectanceModel,
    #[arg(long, default_value_t = 1.0)]
    pub blend: f64,
    #[arg(long = "m", default_value_t = crate::brdf::DEFAULT_EXPONENT)]
    pub exponent: f64,
    #[command(flatten)]
    pub model_overrides: ModelArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Manifest of the capture holding the ground truth.
    #[arg(long = "truth")]
    pub manifest: PathBuf,
    #[arg(long)]
    pub estimate: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<PathBuf>,
    /// Metrics JSON to write.
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_kind(s: &str) -> Result<ConditionKind, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_mode(s: &str) -> Result<SolverMode, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_model(s: &str) -> Result<ReflectanceModel, String> {
    s.parse().map_err(|e: crate::Error| e.to_string())
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(v)
        .map_err(|v| format!("expected 3 comma-separated numbers, got {}", v.len()))
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Synth(a) => commands::synth(&a),
        Command::Augment(a) => commands::augment(&a),
        Command::Solve(a) => commands::solve(&a),
        Command::Fuse(a) => commands::fuse(&a),
        Command::Relight(a) => commands::relight(&a),
        Command::Eval(a) => commands::eval(&a),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> anyhow::Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    run(Cli::try_parse_from(args)?)
}

pub fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
