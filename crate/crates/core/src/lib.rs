//! Selection-adjusted treatment-effect estimation with Bayesian shrinkage.

// `!(x > 0.0)` is used on purpose so NaN fails validation; quantile
// coefficients are kept exactly as published.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::excessive_precision)]

pub mod calibration;
pub mod checks;
pub mod error;
pub mod io;
pub mod ks;
pub mod model;
pub mod normal;
pub mod optimize;
pub mod quadrature;
pub mod rng;
pub mod sampling;
pub mod selection;
pub mod shrinkage;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use model::{
    conditional_posterior, face_value_estimate, face_value_summary, global_shrinkage_estimate,
    ExperimentSummary, HyperParams, Method, PosteriorSummary, RatioEstimate, UnitLevelData,
};
pub use shrinkage::{
    estimate, gibbs_sample, hybrid_shrinkage_estimate, lambda_log_posterior, lambda_posterior_mode,
    GibbsConfig, GibbsTrace, LambdaPosterior,
};
pub use calibration::{fit, CalibrationMethod, CalibrationReport};
pub use checks::{
    posterior_predictive_draws, replication_evaluation, tail_area_check, CheckTarget, CoverageMode,
    PredictiveCheckResult, ReplicationEvaluation, Statistic, TestStatistic,
};
pub use selection::{SelectionRule, SigmaModel};
pub use sim::{generate_scenario, run_sweep, MetricsRow, ScenarioConfig, ScenarioKind, SweepVariable};
