use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "dualgap", version, about = "Duality-gap minimization experiments on zero-sum games")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct GlobalArgs {
    /// Root seed for every random stream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Output path prefix; files get an extension per artifact.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads for grid and repeat workloads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Skip SVG output.
    #[arg(long, global = true)]
    pub no_plot: bool,

    /// key=value file mirroring the flags; flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one optimizer on one game and record the trajectory.
    Traj(TrajArgs),
    /// Linearize an update map at a fixed point.
    Stability(StabilityArgs),
    /// Evaluate a measure on a 2-D grid.
    Landscape(LandscapeArgs),
    /// Average-iterate error of AdaGrad and SGD on a realizable problem.
    Rate(RateArgs),
    /// Train the mixture-of-Gaussians GAN.
    Mog(MogArgs),
    /// Re-render an SVG from a CSV written by another subcommand.
    Plot(PlotArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Traj(_) => "traj",
            Command::Stability(_) => "stability",
            Command::Landscape(_) => "landscape",
            Command::Rate(_) => "rate",
            Command::Mog(_) => "mog",
            Command::Plot(_) => "plot",
        }
    }
}

pub const SUBCOMMANDS: [&str; 6] = ["traj", "stability", "landscape", "rate", "mog", "plot"];

/// Algorithm selection shared by `traj` and `stability`.
#[derive(Debug, Clone, Args)]
pub struct AlgArgs {
    /// Game spec, e.g. `f1` or `bilinear:c=3`.
    #[arg(long)]
    pub game: String,

    /// Algorithm token, e.g. `gda`, `sga:lambda=0.5` or `dg:k=10,mode=unrolled`.
    #[arg(long)]
    pub alg: String,

    /// Outer step size.
    #[arg(long, default_value_t = 0.05)]
    pub eta: f64,

    /// Inner steps (dg, unrolled).
    #[arg(long)]
    pub k: Option<usize>,

    /// Inner step size (dg, unrolled); defaults to eta.
    #[arg(long)]
    pub gamma: Option<f64>,

    /// Gap gradient for dg.
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Envelope,
    Unrolled,
}

#[derive(Debug, Clone, Args)]
pub struct TrajArgs {
    #[command(flatten)]
    pub alg: AlgArgs,

    /// Initial point, comma separated `u...,v...`.
    #[arg(long, default_value = "0.5,0.5", allow_hyphen_values = true)]
    pub init: String,

    #[arg(long, default_value_t = 2000)]
    pub steps: usize,

    /// Convergence tolerance on the distance to the target.
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,

    /// Target equilibrium, comma separated; defaults to the origin.
    #[arg(long, allow_hyphen_values = true)]
    pub target: Option<String>,

    /// Log the approximate gap with this many inner steps.
    #[arg(long)]
    pub log_dg: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct StabilityArgs {
    #[command(flatten)]
    pub alg: AlgArgs,

    /// Fixed point, comma separated `u...,v...`.
    #[arg(long, default_value = "0,0", allow_hyphen_values = true)]
    pub point: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeasureArg {
    #[value(alias = "minimax_value")]
    MinimaxValue,
    #[value(alias = "dg_exact")]
    DgExact,
    #[value(alias = "dg_approx")]
    DgApprox,
}

#[derive(Debug, Clone, Args)]
pub struct LandscapeArgs {
    #[arg(long)]
    pub game: String,

    /// `lo,hi` for both axes or `ulo,uhi,vlo,vhi`.
    #[arg(long = "box", default_value = "-1,1", allow_hyphen_values = true)]
    pub bounds: String,

    /// Grid nodes per axis.
    #[arg(long, default_value_t = 101)]
    pub res: usize,

    #[arg(long, value_enum, default_value = "dg-exact")]
    pub measure: MeasureArg,

    /// Inner steps for dg-approx.
    #[arg(long, default_value_t = 10)]
    pub k: usize,

    /// Inner step size for dg-approx.
    #[arg(long, default_value_t = 0.05)]
    pub gamma: f64,

    #[arg(long, value_enum, default_value = "envelope")]
    pub mode: ModeArg,
}

#[derive(Debug, Clone, Args)]
pub struct RateArgs {
    #[arg(long, default_value_t = 10)]
    pub dim: usize,

    #[arg(long, default_value_t = 20)]
    pub family: usize,

    /// Largest horizon; horizons are 10^2, 10^2.5, ... up to this value.
    #[arg(long = "Tmax", default_value_t = 100_000)]
    pub t_max: usize,

    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
}

#[derive(Debug, Clone, Args)]
pub struct MogArgs {
    /// gda, eg, co or dg.
    #[arg(long, default_value = "dg")]
    pub alg: String,

    #[arg(long, default_value_t = 20_000)]
    pub iterations: usize,

    #[arg(long, default_value_t = 2e-4)]
    pub lr_g: f64,

    #[arg(long, default_value_t = 2e-4)]
    pub lr_d: f64,

    #[arg(long, default_value_t = 0.1)]
    pub co_gamma: f64,

    /// Inner steps for dg and the logged gap.
    #[arg(long, default_value_t = 10)]
    pub k: usize,

    #[arg(long, default_value_t = 100)]
    pub log_interval: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PlotArgs {
    /// CSV produced by traj, landscape, rate or mog.
    #[arg(long)]
    pub input: PathBuf,
}
