//! Posterior predictive checks and evaluation against replication studies.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{check_level, ExperimentSummary, HyperParams, Method, PosteriorSummary};
use crate::normal;
use crate::rng::{job_stream, stream_rng};
use crate::sampling;
use crate::selection::{sample_selected_joint, JointPrior, SelectionRule, SigmaModel};
use crate::shrinkage::estimate;

pub const MIN_CHECK_DRAWS: usize = 100;

/// A scalar summary T(·) of one (observed or replicated) estimate.
pub trait TestStatistic: Sync {
    fn name(&self) -> String;
    fn eval(&self, x: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Statistic {
    /// T(x) = x.
    Identity,
    /// T(x) = |x − m0|.
    AbsDeviationFromPriorMean { prior_mean: f64 },
}

impl TestStatistic for Statistic {
    fn name(&self) -> String {
        match self {
            Statistic::Identity => "identity".into(),
            Statistic::AbsDeviationFromPriorMean { .. } => "abs-deviation-from-prior-mean".into(),
        }
    }

    fn eval(&self, x: f64) -> f64 {
        match self {
            Statistic::Identity => x,
            Statistic::AbsDeviationFromPriorMean { prior_mean } => (x - prior_mean).abs(),
        }
    }
}

/// What the replicated draws are compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CheckTarget {
    /// The estimate the posterior was fitted on.
    #[default]
    Observed,
    /// The held-out replication estimate, drawn with the replication
    /// standard error (falling back to `sigma_hat`).
    Replication,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveCheckResult {
    pub statistic_name: String,
    pub observed: f64,
    pub replicated: Vec<f64>,
    /// Fraction of replicated values ≥ observed.
    pub tail_area: f64,
}

fn check_posterior(posterior: &PosteriorSummary) -> Result<()> {
    if !posterior.mean.is_finite() || !(posterior.variance >= 0.0 && posterior.variance.is_finite()) {
        return Err(Error::invalid("posterior mean and variance must be finite, variance non-negative"));
    }
    Ok(())
}

fn predictive_draws(posterior: &PosteriorSummary, noise_sd: f64, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream_rng(seed, job_stream(3, 0));
    let post_sd = posterior.sd();
    (0..n)
        .map(|_| {
            let theta = sampling::normal(&mut rng, posterior.mean, post_sd);
            sampling::normal(&mut rng, theta, noise_sd)
        })
        .collect()
}

/// θ̂_rep draws: θ from the (normal) posterior, then θ̂_rep ~ N(θ, σ̂²).
pub fn posterior_predictive_draws(
    exp: &ExperimentSummary,
    posterior: &PosteriorSummary,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    exp.validate()?;
    check_posterior(posterior)?;
    if n == 0 {
        return Err(Error::invalid("number of predictive draws must be at least 1"));
    }
    Ok(predictive_draws(posterior, exp.sigma_hat, n, seed))
}

pub fn tail_area_check(
    exp: &ExperimentSummary,
    posterior: &PosteriorSummary,
    statistic: &dyn TestStatistic,
    n: usize,
    seed: u64,
    target: CheckTarget,
) -> Result<PredictiveCheckResult> {
    exp.validate()?;
    check_posterior(posterior)?;
    if n < MIN_CHECK_DRAWS {
        return Err(Error::invalid(format!("tail-area check needs at least {MIN_CHECK_DRAWS} draws, got {n}")));
    }
    let (observed_x, noise_sd) = match target {
        CheckTarget::Observed => (exp.theta_hat, exp.sigma_hat),
        CheckTarget::Replication => {
            let x = exp.replication_theta_hat.ok_or_else(|| {
                Error::invalid(format!("experiment '{}' has no replication estimate", exp.id))
            })?;
            (x, exp.replication_sigma_hat.unwrap_or(exp.sigma_hat))
        }
    };
    let observed = statistic.eval(observed_x);
    let replicated: Vec<f64> = predictive_draws(posterior, noise_sd, n, seed)
        .into_iter()
        .map(|x| statistic.eval(x))
        .collect();
    let hits = replicated.iter().filter(|&&r| r >= observed).count();
    Ok(PredictiveCheckResult {
        statistic_name: statistic.name(),
        observed,
        tail_area: hits as f64 / n as f64,
        replicated,
    })
}

/// What counts as an interval "covering" the replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoverageMode {
    /// The interval contains the replication point estimate.
    #[default]
    PointEstimate,
    /// The interval overlaps the replication's own interval at the same level.
    /// Pairs without a replication standard error are skipped.
    IntervalOverlap,
}

impl std::str::FromStr for CoverageMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "point" | "point-estimate" => Ok(CoverageMode::PointEstimate),
            "overlap" | "interval-overlap" => Ok(CoverageMode::IntervalOverlap),
            other => Err(Error::invalid(format!("unknown coverage mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationEvaluation {
    pub mae: f64,
    pub coverage: f64,
    pub n_pairs: usize,
    pub method: Method,
}

pub fn replication_evaluation(
    corpus: &[ExperimentSummary],
    estimates: &[(String, PosteriorSummary)],
) -> Result<ReplicationEvaluation> {
    replication_evaluation_with(corpus, estimates, CoverageMode::PointEstimate)
}

/// MAE and interval coverage of `estimates` against the replication
/// estimates in `corpus`, matched by id.
pub fn replication_evaluation_with(
    corpus: &[ExperimentSummary],
    estimates: &[(String, PosteriorSummary)],
    mode: CoverageMode,
) -> Result<ReplicationEvaluation> {
    let method = match estimates.first() {
        Some((_, p)) => p.method,
        None => return Err(Error::invalid("no estimates to evaluate")),
    };
    let mut by_id: HashMap<&str, &PosteriorSummary> = HashMap::with_capacity(estimates.len());
    for (id, p) in estimates {
        if p.method != method {
            return Err(Error::invalid("estimates mix several methods"));
        }
        if by_id.insert(id.as_str(), p).is_some() {
            return Err(Error::invalid(format!("duplicate estimate for id '{id}'")));
        }
    }

    let (mut abs_err, mut hits, mut n) = (0.0, 0usize, 0usize);
    for exp in corpus {
        let Some(rep) = exp.replication_theta_hat else { continue };
        let rep_sd = match (mode, exp.replication_sigma_hat) {
            (CoverageMode::IntervalOverlap, None) => continue,
            (_, sd) => sd,
        };
        let p = by_id
            .get(exp.id.as_str())
            .ok_or_else(|| Error::invalid(format!("no estimate for experiment '{}'", exp.id)))?;
        abs_err += (p.mean - rep).abs();
        let covered = match (mode, rep_sd) {
            (CoverageMode::IntervalOverlap, Some(sd)) => {
                let half = normal::two_sided_critical(p.level) * sd;
                p.interval_low <= rep + half && rep - half <= p.interval_high
            }
            _ => p.contains(rep),
        };
        hits += covered as usize;
        n += 1;
    }
    if n == 0 {
        return Err(Error::invalid("no experiment has a usable replication pair"));
    }
    Ok(ReplicationEvaluation {
        mae: abs_err / n as f64,
        coverage: hits as f64 / n as f64,
        n_pairs: n,
        method,
    })
}

/// Estimate every experiment with `method` (in parallel, order preserved).
pub fn estimate_corpus(
    corpus: &[ExperimentSummary],
    hp: &HyperParams,
    method: Method,
    level: f64,
) -> Result<Vec<(String, PosteriorSummary)>> {
    check_level(level)?;
    corpus
        .par_iter()
        .map(|e| Ok((e.id.clone(), estimate(e, hp, method, level)?)))
        .collect()
}

/// Random half-split by seed; each half keeps the original order.
pub fn split_corpus(corpus: &[ExperimentSummary], seed: u64) -> (Vec<ExperimentSummary>, Vec<ExperimentSummary>) {
    let mut idx: Vec<usize> = (0..corpus.len()).collect();
    idx.shuffle(&mut stream_rng(seed, job_stream(4, 0)));
    let (first, second) = idx.split_at(corpus.len() / 2);
    let pick = |part: &[usize]| {
        let mut part = part.to_vec();
        part.sort_unstable();
        part.into_iter().map(|i| corpus[i].clone()).collect()
    };
    (pick(first), pick(second))
}

/// Settings of a synthetic corpus of selected experiments with independent
/// replications. Defaults: 167 pairs, hierarchy m0 = 0, τ = 0.25, a = b = 3,
/// σ̂ uniform on {0.5, 1, 2}, one-sided z > 1.96 selection against 0.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationCorpusConfig {
    pub n_pairs: usize,
    pub prior: JointPrior,
    pub sigma: SigmaModel,
    pub rule: SelectionRule,
    pub seed: u64,
}

impl Default for ReplicationCorpusConfig {
    fn default() -> Self {
        Self {
            n_pairs: 167,
            prior: JointPrior::hierarchical(HyperParams {
                m0: 0.0,
                tau: 0.25,
                a: 3.0,
                b: 3.0,
            }),
            sigma: SigmaModel::Discrete(vec![0.5, 1.0, 2.0]),
            rule: SelectionRule::z_greater(1.96, 0.0),
            seed: 0,
        }
    }
}

/// Draw selected experiments from the joint regime and attach a replication
/// estimate θ̂_rep ~ N(θ, σ̂²) drawn independently of the selection.
pub fn synthetic_replication_corpus(cfg: &ReplicationCorpusConfig) -> Result<Vec<ExperimentSummary>> {
    let sample = sample_selected_joint(cfg.n_pairs, &cfg.prior, &cfg.sigma, &cfg.rule, cfg.seed)?;
    let mut rng = stream_rng(cfg.seed, job_stream(2, 0));
    sample
        .draws
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let rep = sampling::normal(&mut rng, d.theta, d.sigma_hat);
            ExperimentSummary::new(format!("exp-{i}"), d.theta_hat, d.sigma_hat)?.with_replication(rep, Some(d.sigma_hat))
        })
        .collect()
}
