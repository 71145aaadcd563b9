use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "hshrink", version, about = "Selection-adjusted effect estimates with Bayesian shrinkage")]
pub struct Cli {
    /// Increase log verbosity (-v info, -vv debug). RUST_LOG overrides.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Posterior estimates and intervals for every experiment in a corpus.
    Estimate(EstimateArgs),
    /// Fit the prior hyperparameters (m0, tau) to a corpus.
    Calibrate(CalibrateArgs),
    /// Posterior predictive tail-area checks per experiment.
    Check(CheckArgs),
    /// MAE and coverage against paired replication estimates.
    Evaluate(EvaluateArgs),
    /// Misspecification sweeps comparing the three estimators under selection.
    Simulate(SimulateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    FaceValue,
    GlobalShrinkage,
    HybridShrinkage,
}

impl From<MethodArg> for hybrid_shrinkage::Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::FaceValue => Self::FaceValue,
            MethodArg::GlobalShrinkage => Self::GlobalShrinkage,
            MethodArg::HybridShrinkage => Self::HybridShrinkage,
        }
    }
}

/// Prior hyperparameters given inline or through a calibration artifact.
#[derive(Debug, Clone, Args)]
pub struct PriorArgs {
    /// Calibration artifact written by `hshrink calibrate`.
    #[arg(long, conflicts_with_all = ["m0", "tau"])]
    pub calibration: Option<PathBuf>,
    /// Prior mean of the effects.
    #[arg(long, requires = "tau", allow_hyphen_values = true)]
    pub m0: Option<f64>,
    /// Global prior variance scale.
    #[arg(long, requires = "m0")]
    pub tau: Option<f64>,
    /// Inverse-Gamma hyperprior a (lambda ~ IG(a/2, b/2)).
    #[arg(long, default_value_t = 3.0, conflicts_with = "calibration")]
    pub a: f64,
    /// Inverse-Gamma hyperprior b.
    #[arg(long, default_value_t = 3.0, conflicts_with = "calibration")]
    pub b: f64,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Experiment corpus CSV (id, theta_hat, sigma_hat, ...).
    #[arg(short, long)]
    pub input: PathBuf,
    /// Treat the input as unit-level long format (experiment_id, unit_id, z, y).
    #[arg(long)]
    pub unit_level: bool,
    /// Output CSV; `-` for stdout.
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::HybridShrinkage)]
    pub method: MethodArg,
    /// Interval level in (0, 1).
    #[arg(long, default_value_t = 0.90)]
    pub level: f64,
    #[command(flatten)]
    pub prior: PriorArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FitArg {
    Moments,
    Mle,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    /// Artifact path; `-` for stdout.
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = FitArg::Mle)]
    pub fit: FitArg,
    #[arg(long, default_value_t = 3.0)]
    pub a: f64,
    #[arg(long, default_value_t = 3.0)]
    pub b: f64,
    /// Convergence tolerance of the likelihood maximization.
    #[arg(long, default_value_t = 1e-8)]
    pub tol: f64,
    /// Allow fitting on a corpus that contains only selected experiments.
    #[arg(long)]
    pub selected_only_ack: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StatisticArg {
    Identity,
    AbsDeviation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TargetArg {
    Observed,
    Replication,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[arg(short, long)]
    pub input: PathBuf,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
    #[arg(long, value_enum, default_value_t = MethodArg::HybridShrinkage)]
    pub method: MethodArg,
    #[arg(long, value_enum, default_value_t = StatisticArg::AbsDeviation)]
    pub statistic: StatisticArg,
    /// Compare replicated draws with the fitted estimate or its replication.
    #[arg(long, value_enum, default_value_t = TargetArg::Observed)]
    pub target: TargetArg,
    /// Predictive draws per experiment (at least 100).
    #[arg(long, default_value_t = 1000)]
    pub draws: usize,
    #[arg(long, default_value_t = 0.90)]
    pub level: f64,
    #[arg(long, env = "HSHRINK_SEED", default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub prior: PriorArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CoverageArg {
    Point,
    Overlap,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Corpus with replication_theta_hat (and optionally replication_sigma_hat).
    #[arg(short, long)]
    pub input: PathBuf,
    /// Precomputed estimates CSV; otherwise estimates are computed here.
    #[arg(long, conflicts_with_all = ["methods", "calibration", "m0"])]
    pub estimates: Option<PathBuf>,
    #[arg(short, long, default_value = "-")]
    pub output: PathBuf,
    /// Methods to evaluate when computing estimates.
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::FaceValue, MethodArg::GlobalShrinkage, MethodArg::HybridShrinkage])]
    pub methods: Vec<MethodArg>,
    #[arg(long, default_value_t = 0.90)]
    pub level: f64,
    #[arg(long, value_enum, default_value_t = CoverageArg::Point)]
    pub coverage: CoverageArg,
    #[command(flatten)]
    pub prior: PriorArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    MisspecifiedMean,
    HeavyTails,
    HiddenSelection,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Sweep values of the true-effect mean (misspecified-mean).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub mu: Option<Vec<f64>>,
    /// Sweep values of the t degrees of freedom (heavy-tails).
    #[arg(long, value_delimiter = ',')]
    pub nu: Option<Vec<f64>>,
    /// Sweep values of the hidden correlation (hidden-selection).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub rho: Option<Vec<f64>>,
    /// Selected experiments per sweep point.
    #[arg(long, default_value_t = hybrid_shrinkage::sim::DEFAULT_N_SELECTED)]
    pub n_selected: usize,
    /// Standard deviation of the true-effect distribution.
    #[arg(long, default_value_t = hybrid_shrinkage::sim::DEFAULT_EPSILON)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_hat: f64,
    /// One-sided z threshold of the selection rule (against 0).
    #[arg(long, default_value_t = hybrid_shrinkage::sim::DEFAULT_Z_THRESHOLD)]
    pub threshold: f64,
    /// Analysis prior mean.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    pub m0: f64,
    /// Analysis prior tau; defaults to epsilon squared.
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long, default_value_t = 3.0)]
    pub a: f64,
    #[arg(long, default_value_t = 3.0)]
    pub b: f64,
    #[arg(long, value_enum, value_delimiter = ',', default_values_t = [MethodArg::FaceValue, MethodArg::GlobalShrinkage, MethodArg::HybridShrinkage])]
    pub methods: Vec<MethodArg>,
    #[arg(long, env = "HSHRINK_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Metric table CSV.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Summary text; `-` for stdout.
    #[arg(long, default_value = "-")]
    pub summary: PathBuf,
}
