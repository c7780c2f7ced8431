use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(name = "flowcap", version, about = "Normalizing-flow expressivity numerics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// RNG seed for sampling-based steps.
    #[arg(long, default_value_t = 0, global = true)]
    pub seed: u64,
    /// Output file or directory (stdout when omitted, where applicable).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate or invert a flow stack at points.
    Flow {
        #[command(subcommand)]
        op: FlowOp,
    },
    /// Approximate a 1D target with a ReLU planar stack on a Gaussian.
    #[command(name = "synth-1d")]
    Synth1d(Synth1dArgs),
    /// Compile an affine map into planar and Householder layers.
    #[command(name = "compile-linear")]
    CompileLinear(CompileArgs),
    /// Topology-condition residuals at sample points.
    #[command(name = "topo-check")]
    TopoCheck(TopoArgs),
    /// Gaussian-to-Gaussian feasibility verdict for a flow family.
    Feasibility(FeasibilityArgs),
    /// Depth lower bounds: scaling tables or a Monte Carlo L̂ report.
    Capacity(CapacityArgs),
    /// ℓ1 distance between two densities, or between f#q and p.
    L1(L1Args),
    /// Run reproduction experiments.
    Repro(ReproArgs),
    /// Validate distribution and flow JSON files.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct PointsArg {
    /// JSON file holding an array of points.
    #[arg(long, conflicts_with = "z")]
    pub points: Option<PathBuf>,
    /// Inline points, e.g. "0.1,0.2;1,2".
    #[arg(long)]
    pub z: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum FlowOp {
    Eval {
        #[arg(long)]
        flow: PathBuf,
        #[command(flatten)]
        pts: PointsArg,
        #[command(flatten)]
        common: Common,
    },
    Invert {
        #[arg(long)]
        flow: PathBuf,
        #[command(flatten)]
        pts: PointsArg,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, Args)]
pub struct Synth1dArgs {
    /// Target distribution JSON (1D).
    #[arg(long, conflicts_with = "named")]
    pub target: Option<PathBuf>,
    /// Built-in target: fig1 or bimodal.
    #[arg(long)]
    pub named: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    #[arg(long, default_value_t = 300)]
    pub pieces: usize,
    /// Points in the emitted (x, p, approx) curve.
    #[arg(long, default_value_t = 1001)]
    pub grid: usize,
    /// Output directory for report.json, curve.csv and flow.json.
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct CompileArgs {
    /// JSON matrix (array of rows, or {"matrix": [...], "shift": [...]}).
    #[arg(long)]
    pub matrix: PathBuf,
    /// Inline shift vector, e.g. "1,0,-2".
    #[arg(long)]
    pub shift: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TopoKind {
    Relu,
    Span,
    Radial,
}

#[derive(Debug, Clone, Args)]
pub struct TopoArgs {
    #[arg(long, value_enum)]
    pub kind: TopoKind,
    #[arg(long)]
    pub flow: PathBuf,
    /// Base distribution q JSON.
    #[arg(long)]
    pub base: PathBuf,
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct FeasibilityArgs {
    /// Base covariance Σ_q (JSON rows).
    #[arg(long)]
    pub cov_q: PathBuf,
    /// Target covariance Σ_p (JSON rows).
    #[arg(long)]
    pub cov_p: PathBuf,
    /// planar-smooth, sylvester-smooth, radial or relu-sylvester.
    #[arg(long)]
    pub family: String,
    /// Sylvester width.
    #[arg(long)]
    pub m: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CapacityFamily {
    Householder,
    LocalPlanar,
}

#[derive(Debug, Clone, Args)]
pub struct CapacityArgs {
    /// Closed-form scaling study family.
    #[arg(long, value_enum, required_unless_present = "flow")]
    pub family: Option<CapacityFamily>,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 0.5)]
    pub tau: f64,
    #[arg(long, default_value_t = 2.0)]
    pub c_h: f64,
    /// Comma-separated ascending dimensions.
    #[arg(long)]
    pub dims: Option<String>,
    /// ‖p − q‖₁ used for the depth bound.
    #[arg(long, default_value_t = 2.0)]
    pub l1: f64,
    /// Target accuracy ε (default ½‖p − q‖₁).
    #[arg(long)]
    pub eps: Option<f64>,
    /// Monte Carlo mode: flow stack JSON.
    #[arg(long, requires = "target")]
    pub flow: Option<PathBuf>,
    /// Monte Carlo mode: target distribution p JSON.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum L1Method {
    Grid,
    Mc,
}

#[derive(Debug, Clone, Args)]
pub struct L1Args {
    #[arg(long)]
    pub p: PathBuf,
    #[arg(long)]
    pub q: PathBuf,
    /// Flow applied to q (Monte Carlo method).
    #[arg(long)]
    pub flow: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = L1Method::Grid)]
    pub method: L1Method,
    #[arg(long, default_value_t = 100_000)]
    pub n: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Debug, Clone, Args)]
pub struct ReproArgs {
    /// Experiment names (fig1, fig3, topo_relu_2d, topo_tanh_2d,
    /// scaling_householder, scaling_local_planar); all when omitted.
    pub names: Vec<String>,
    /// ExperimentConfig JSON; overrides names and seed.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub common: Common,
}
