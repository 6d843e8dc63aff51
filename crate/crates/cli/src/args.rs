use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser, Serialize)]
#[command(name = "spinstein", version, about = "Potts and Curie–Weiss–Potts Glauber dynamics toolkit")]
pub struct Cli {
    /// Flat `key = value` file overriding defaults; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum Command {
    /// Macrostates and contraction constants at (q, β).
    Macrostates(MacrostatesArgs),
    /// Run one Glauber or CWP chain.
    Simulate(SimulateArgs),
    /// Two-phase coalescence of coupled restricted chains.
    Couple(CoupleArgs),
    /// Exact lumped-chain computations.
    #[command(subcommand)]
    Exact(ExactCommand),
    /// Bounds and scaling experiments.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Re-run a manifest and compare output digests.
    Replay(ReplayArgs),
}

impl Command {
    pub fn name(&self) -> String {
        match self {
            Command::Macrostates(_) => "macrostates".into(),
            Command::Simulate(_) => "simulate".into(),
            Command::Couple(_) => "couple".into(),
            Command::Exact(e) => format!("exact {}", e.name()),
            Command::Bench(b) => format!("bench {}", b.name()),
            Command::Replay(_) => "replay".into(),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Command::Simulate(a) => Some(a.graph.seed),
            Command::Couple(a) => Some(a.seed),
            Command::Bench(BenchCommand::Tnorm(a)) => Some(a.graph.seed),
            Command::Bench(BenchCommand::BoundedDegree(a)) => Some(a.graph.seed),
            _ => None,
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct Model {
    #[arg(long, default_value_t = 3)]
    pub q: usize,
    #[arg(long)]
    pub beta: f64,
}

#[derive(Debug, Args, Serialize)]
pub struct Output {
    /// CSV output path. Without it the table goes to stdout, or into the
    /// directory named by `SPINSTEIN_OUTPUT_DIR` when that is set.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct MacrostatesArgs {
    #[command(flatten)]
    pub model: Model,
    #[arg(long)]
    pub json: bool,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
pub enum ModelKind {
    Graph,
    Cwp,
}

#[derive(Debug, Args, Serialize)]
pub struct GraphArgs {
    /// Graph file: `N M` then `M` lines `u v`, 1-based.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// complete, cycle, path, empty, er:P or regular:D.
    #[arg(long, default_value = "complete")]
    pub topology: String,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = ModelKind::Cwp)]
    pub model: ModelKind,
    #[command(flatten)]
    pub params: Model,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long)]
    pub steps: u64,
    /// Restriction `X:R`, with `X` either `e` or `ordered:K`.
    #[arg(long)]
    pub restrict: Option<String>,
    /// Initial configuration file (one line of 1-based colours).
    #[arg(long)]
    pub init: Option<PathBuf>,
    /// Record every `stride` steps; 0 picks a stride automatically.
    #[arg(long, default_value_t = 0)]
    pub stride: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct CoupleArgs {
    #[command(flatten)]
    pub model: Model,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value = "ordered:1")]
    pub x: String,
    #[arg(long, default_value_t = 0.05)]
    pub r: f64,
    #[arg(long, default_value_t = 100)]
    pub replicas: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10.0)]
    pub gamma: f64,
    #[arg(long, default_value_t = 10_000_000)]
    pub max_steps: u64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct ExactCommon {
    #[command(flatten)]
    pub model: Model,
    #[arg(long)]
    pub n: usize,
    /// Restriction `X:R`, with `X` either `e` or `ordered:K`.
    #[arg(long)]
    pub restrict: Option<String>,
    /// Write the transition matrix as `row col value` lines.
    #[arg(long)]
    pub matrix: Option<PathBuf>,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum ExactCommand {
    /// TV-distance curve and t_mix(ε).
    Tmix {
        #[command(flatten)]
        common: ExactCommon,
        #[arg(long, default_value_t = 0.25)]
        epsilon: f64,
    },
    /// Stationary vector of the lumped chain.
    Stationary {
        #[command(flatten)]
        common: ExactCommon,
    },
    /// Wasserstein distance between the Gibbs and product measures.
    Wasserstein {
        #[command(flatten)]
        common: ExactCommon,
        /// Product marginal, `e` or `ordered:K`; the restriction centre
        /// takes precedence.
        #[arg(long, default_value = "e")]
        x: String,
    },
    /// Solution of the Stein equation for the count of one colour.
    Stein {
        #[command(flatten)]
        common: ExactCommon,
        /// 1-based colour whose count is the test function.
        #[arg(long, default_value_t = 1)]
        color: usize,
    },
}

impl ExactCommand {
    pub fn name(&self) -> &'static str {
        match self {
            ExactCommand::Tmix { .. } => "tmix",
            ExactCommand::Stationary { .. } => "stationary",
            ExactCommand::Wasserstein { .. } => "wasserstein",
            ExactCommand::Stein { .. } => "stein",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct Plot {
    /// Also draw the table as an SVG line plot.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct BoundedDegreeArgs {
    #[command(flatten)]
    pub model: Model,
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Uniform per-vertex Lipschitz constant of the test function.
    #[arg(long, default_value_t = 1.0)]
    pub lipschitz: f64,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct TnormArgs {
    #[command(flatten)]
    pub model: Model,
    #[command(flatten)]
    pub graph: GraphArgs,
    #[arg(long, default_value = "e")]
    pub x: String,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct CltArgs {
    #[command(flatten)]
    pub model: Model,
    #[arg(long)]
    pub n: usize,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct WscalingArgs {
    #[command(flatten)]
    pub model: Model,
    #[arg(long, default_value = "e")]
    pub x: String,
    /// Condition both measures on the ball of this radius around x.
    #[arg(long)]
    pub r: Option<f64>,
    #[arg(long, value_delimiter = ',', default_value = "40,80,160")]
    pub ns: Vec<usize>,
    #[command(flatten)]
    pub plot: Plot,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Args, Serialize)]
pub struct ThetaTrendArgs {
    #[arg(long, default_value_t = 3)]
    pub q: usize,
    #[arg(long, default_value = "ordered:1")]
    pub x: String,
    #[arg(long, value_delimiter = ',')]
    pub betas: Vec<f64>,
    #[command(flatten)]
    pub plot: Plot,
    #[command(flatten)]
    pub output: Output,
}

#[derive(Debug, Subcommand, Serialize)]
pub enum BenchCommand {
    BoundedDegree(BoundedDegreeArgs),
    Tnorm(TnormArgs),
    Clt(CltArgs),
    Wscaling(WscalingArgs),
    ThetaTrend(ThetaTrendArgs),
}

impl BenchCommand {
    pub fn name(&self) -> &'static str {
        match self {
            BenchCommand::BoundedDegree(_) => "bounded-degree",
            BenchCommand::Tnorm(_) => "tnorm",
            BenchCommand::Clt(_) => "clt",
            BenchCommand::Wscaling(_) => "wscaling",
            BenchCommand::ThetaTrend(_) => "theta-trend",
        }
    }
}

#[derive(Debug, Args, Serialize)]
pub struct ReplayArgs {
    pub manifest: PathBuf,
}
