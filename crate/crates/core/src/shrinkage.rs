//! Local shrinkage factor inference and the Hybrid Shrinkage estimator.
//!
//! Integrating the true effect out of the hierarchy leaves a one-dimensional
//! posterior for the local factor,
//!
//! ```text
//! log p(λ | θ̂) = -½ log(s² + λτ) - (θ̂ - m0)² / (2(s² + λτ))
//!                - (a/2 + 1) log λ - b/(2λ) + const.
//! ```
//!
//! The analytic route plugs the mode of this density into the conditional
//! posterior. The simulation route alternates the two full conditionals
//! (normal for θ, inverse-gamma for λ).

use crate::error::{Error, Result};
use crate::model::{
    check_level, conditional_moments, conditional_posterior, face_value_summary,
    global_shrinkage_estimate, ExperimentSummary, HyperParams, Method, PosteriorSummary,
};
use crate::optimize::{maximize_scalar, ScalarSearch};
use crate::rng::{stream_rng, StreamRng};
use crate::sampling::{inverse_gamma, normal};
use crate::stats;

/// Default bracket for the mode search, in λ.
pub const LAMBDA_BRACKET: (f64, f64) = (1e-8, 1e8);
/// Default mode-search tolerance, in log λ.
pub const MODE_TOL: f64 = 1e-8;
pub const MODE_MAX_ITER: usize = 200;
const MODE_GRID_POINTS: usize = 149;
const MODE_MAX_EXPANSIONS: usize = 6;

pub const DEFAULT_BURN_IN: usize = 1_000;
pub const DEFAULT_KEEP: usize = 4_000;

/// Unnormalized log posterior of λ with θ integrated out.
pub fn lambda_log_posterior(lambda: f64, exp: &ExperimentSummary, hp: &HyperParams) -> Result<f64> {
    exp.validate()?;
    hp.validate()?;
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("lambda must be positive, got {lambda}")));
    }
    Ok(log_posterior_kernel(lambda, exp.theta_hat, exp.variance(), hp))
}

fn log_posterior_kernel(lambda: f64, theta_hat: f64, s2: f64, hp: &HyperParams) -> f64 {
    let v = s2 + lambda * hp.tau;
    let d = theta_hat - hp.m0;
    -0.5 * v.ln() - d * d / (2.0 * v) - (0.5 * hp.a + 1.0) * lambda.ln() - hp.b / (2.0 * lambda)
}

/// Mode of the local-factor posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaPosterior {
    pub mode: f64,
    pub log_density_at_mode: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Maximize [`lambda_log_posterior`] over λ > 0.
///
/// The search runs on log λ: a grid scan over the bracket `[1e-8, 1e8]`
/// (widened geometrically if the best point lies on an edge) picks the
/// highest cell, then golden-section search narrows it to `tol` in log λ.
/// Hitting the iteration cap returns the best iterate with
/// `converged = false`.
pub fn lambda_posterior_mode(exp: &ExperimentSummary, hp: &HyperParams, tol: f64) -> Result<LambdaPosterior> {
    exp.validate()?;
    hp.validate()?;
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let (theta_hat, s2) = (exp.theta_hat, exp.variance());
    let search = ScalarSearch {
        lo: LAMBDA_BRACKET.0.ln(),
        hi: LAMBDA_BRACKET.1.ln(),
        grid_points: MODE_GRID_POINTS,
        tol,
        max_iter: MODE_MAX_ITER,
        max_expansions: MODE_MAX_EXPANSIONS,
    };
    let best = maximize_scalar(|u| log_posterior_kernel(u.exp(), theta_hat, s2, hp), &search);
    Ok(LambdaPosterior {
        mode: best.argmax.exp(),
        log_density_at_mode: best.value,
        iterations: best.iterations,
        converged: best.converged,
    })
}

/// Hybrid Shrinkage: the conditional posterior evaluated at the λ mode.
pub fn hybrid_shrinkage_estimate(exp: &ExperimentSummary, hp: &HyperParams, level: f64) -> Result<PosteriorSummary> {
    check_level(level)?;
    let lp = lambda_posterior_mode(exp, hp, MODE_TOL)?;
    if !lp.converged {
        log::warn!("experiment {}: local-factor mode search did not converge", exp.id);
    }
    let mut post = conditional_posterior(exp, hp, lp.mode, level)?;
    post.method = Method::HybridShrinkage;
    post.converged = lp.converged;
    Ok(post)
}

/// Dispatch to one of the three estimators.
pub fn estimate(exp: &ExperimentSummary, hp: &HyperParams, method: Method, level: f64) -> Result<PosteriorSummary> {
    match method {
        Method::FaceValue => face_value_summary(exp, level),
        Method::GlobalShrinkage => global_shrinkage_estimate(exp, hp, level),
        Method::HybridShrinkage => hybrid_shrinkage_estimate(exp, hp, level),
    }
}

/// Shape and scale of the inverse-gamma full conditional of λ given θ:
/// `((a + 1)/2, (b + (θ - m0)²/τ)/2)`.
pub fn lambda_conditional(theta: f64, hp: &HyperParams) -> (f64, f64) {
    let d = theta - hp.m0;
    (0.5 * (hp.a + 1.0), 0.5 * (hp.b + d * d / hp.tau))
}

/// One Gibbs sweep: θ | λ, then λ | θ.
pub fn gibbs_sweep(lambda: f64, exp: &ExperimentSummary, hp: &HyperParams, rng: &mut StreamRng) -> (f64, f64) {
    let (mean, var) = conditional_moments(exp.theta_hat, exp.variance(), hp.m0, lambda * hp.tau);
    let theta = normal(rng, mean, var.sqrt());
    let (shape, scale) = lambda_conditional(theta, hp);
    (theta, inverse_gamma(rng, shape, scale))
}

/// Gibbs sampler settings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GibbsConfig {
    pub n_burn: usize,
    pub n_keep: usize,
    pub thin: usize,
    pub seed: u64,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            n_burn: DEFAULT_BURN_IN,
            n_keep: DEFAULT_KEEP,
            thin: 1,
            seed: 0,
        }
    }
}

/// Retained draws of (θ, λ).
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsTrace {
    pub theta_draws: Vec<f64>,
    pub lambda_draws: Vec<f64>,
    pub n_burn: usize,
    pub n_keep: usize,
    pub thin: usize,
    pub seed: u64,
}

impl GibbsTrace {
    pub fn theta_mean(&self) -> f64 {
        stats::mean(&self.theta_draws)
    }

    pub fn theta_variance(&self) -> f64 {
        stats::sample_variance(&self.theta_draws)
    }

    /// Equal-tailed credible interval for θ from the empirical quantiles of
    /// the retained draws.
    pub fn theta_interval(&self, level: f64) -> (f64, f64) {
        let mut sorted = self.theta_draws.clone();
        sorted.sort_by(f64::total_cmp);
        let tail = 0.5 * (1.0 - level);
        (
            stats::quantile_sorted(&sorted, tail),
            stats::quantile_sorted(&sorted, 1.0 - tail),
        )
    }

    /// Batch-means Monte-Carlo standard error of [`Self::theta_mean`].
    pub fn theta_mean_se(&self) -> f64 {
        stats::batch_means_se(&self.theta_draws)
    }

    /// Batch-means Monte-Carlo standard error of [`Self::theta_variance`].
    pub fn theta_variance_se(&self) -> f64 {
        let m = self.theta_mean();
        let sq: Vec<f64> = self.theta_draws.iter().map(|t| (t - m) * (t - m)).collect();
        stats::batch_means_se(&sq)
    }
}

pub fn gibbs_sample(
    exp: &ExperimentSummary,
    hp: &HyperParams,
    n_burn: usize,
    n_keep: usize,
    seed: u64,
) -> Result<GibbsTrace> {
    gibbs_sample_with(
        exp,
        hp,
        &GibbsConfig {
            n_burn,
            n_keep,
            thin: 1,
            seed,
        },
    )
}

/// Two-block Gibbs sampler over (θ, λ), started at λ = 1.
pub fn gibbs_sample_with(exp: &ExperimentSummary, hp: &HyperParams, cfg: &GibbsConfig) -> Result<GibbsTrace> {
    exp.validate()?;
    hp.validate()?;
    if cfg.n_keep == 0 || cfg.thin == 0 {
        return Err(Error::invalid("n_keep and thin must be at least 1"));
    }
    let mut rng = stream_rng(cfg.seed, 0);
    let mut lambda = 1.0;
    for _ in 0..cfg.n_burn {
        lambda = gibbs_sweep(lambda, exp, hp, &mut rng).1;
    }
    let mut theta_draws = Vec::with_capacity(cfg.n_keep);
    let mut lambda_draws = Vec::with_capacity(cfg.n_keep);
    while theta_draws.len() < cfg.n_keep {
        let mut theta = 0.0;
        for _ in 0..cfg.thin {
            (theta, lambda) = gibbs_sweep(lambda, exp, hp, &mut rng);
        }
        theta_draws.push(theta);
        lambda_draws.push(lambda);
    }
    Ok(GibbsTrace {
        theta_draws,
        lambda_draws,
        n_burn: cfg.n_burn,
        n_keep: cfg.n_keep,
        thin: cfg.thin,
        seed: cfg.seed,
    })
}
