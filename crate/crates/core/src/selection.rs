//! Selection rules and the two sampling regimes.
//!
//! Under *joint sampling* each candidate draws a fresh true effect from the
//! prior and then an estimate around it; only candidates passing the rule are
//! kept. Posteriors computed with the generating prior stay calibrated on the
//! kept draws without any selection adjustment. Under *fixed-parameter*
//! sampling the true effect is held constant and only the estimate is
//! redrawn; there, unadjusted intervals are not calibrated.
//!
//! Candidates are generated in fixed-size chunks, chunk `k` drawing from
//! stream `(job, k)`, and merged in chunk order, so the kept sequence is
//! independent of the thread count.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::HyperParams;
use crate::rng::{job_stream, stream_rng, StreamRng};
use crate::sampling::{inverse_gamma, normal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SelectionKind {
    ZThreshold,
    RawThreshold,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Greater,
    TwoSided,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionRule {
    pub kind: SelectionKind,
    /// z cutoff for `ZThreshold`, estimate cutoff for `RawThreshold`.
    pub threshold: f64,
    /// No-effect reference; 1.0 for ratio estimands.
    pub null_value: f64,
    pub direction: Direction,
}

impl Default for SelectionRule {
    /// One-sided z > 1.645 against the no-effect ratio 1.0.
    fn default() -> Self {
        Self::z_greater(1.645, 1.0)
    }
}

impl SelectionRule {
    pub fn z_greater(threshold: f64, null_value: f64) -> Self {
        Self {
            kind: SelectionKind::ZThreshold,
            threshold,
            null_value,
            direction: Direction::Greater,
        }
    }

    pub fn none() -> Self {
        Self {
            kind: SelectionKind::None,
            threshold: 0.0,
            null_value: 1.0,
            direction: Direction::Greater,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            SelectionKind::None => Ok(()),
            _ if !self.threshold.is_finite() || !self.null_value.is_finite() => {
                Err(Error::invalid("selection threshold and null value must be finite"))
            }
            SelectionKind::ZThreshold if self.direction == Direction::Greater && self.threshold <= 0.0 => Err(
                Error::invalid(format!("one-sided z threshold must be positive, got {}", self.threshold)),
            ),
            _ => Ok(()),
        }
    }
}

pub fn is_selected(theta_hat: f64, sigma_hat: f64, rule: &SelectionRule) -> bool {
    debug_assert!(sigma_hat > 0.0);
    match (rule.kind, rule.direction) {
        (SelectionKind::None, _) => true,
        (SelectionKind::ZThreshold, Direction::Greater) => (theta_hat - rule.null_value) / sigma_hat > rule.threshold,
        (SelectionKind::ZThreshold, Direction::TwoSided) => {
            ((theta_hat - rule.null_value) / sigma_hat).abs() > rule.threshold
        }
        (SelectionKind::RawThreshold, Direction::Greater) => theta_hat > rule.threshold,
        (SelectionKind::RawThreshold, Direction::TwoSided) => (theta_hat - rule.null_value).abs() > rule.threshold,
    }
}

/// How each candidate's standard error is produced.
#[derive(Debug, Clone, PartialEq)]
pub enum SigmaModel {
    Constant(f64),
    /// Uniform over a finite set.
    Discrete(Vec<f64>),
}

impl Default for SigmaModel {
    fn default() -> Self {
        SigmaModel::Constant(1.0)
    }
}

impl SigmaModel {
    pub fn validate(&self) -> Result<()> {
        let ok = |s: &f64| *s > 0.0 && s.is_finite();
        match self {
            SigmaModel::Constant(s) if ok(s) => Ok(()),
            SigmaModel::Discrete(v) if !v.is_empty() && v.iter().all(ok) => Ok(()),
            _ => Err(Error::invalid("sigma model needs positive finite standard errors")),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SigmaModel::Constant(s) => *s,
            SigmaModel::Discrete(v) => v[rng.random_range(0..v.len())],
        }
    }
}

/// Distribution of the local factor when drawing true effects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LambdaPrior {
    /// λ ≡ 1: normal prior N(m0, τ), the Global Shrinkage model.
    Unit,
    /// λ ~ InverseGamma(a/2, b/2): the full hierarchy.
    InverseGamma,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointPrior {
    pub hp: HyperParams,
    pub lambda: LambdaPrior,
}

impl JointPrior {
    pub fn hierarchical(hp: HyperParams) -> Self {
        Self { hp, lambda: LambdaPrior::InverseGamma }
    }

    pub fn normal(hp: HyperParams) -> Self {
        Self { hp, lambda: LambdaPrior::Unit }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let lambda = match self.lambda {
            LambdaPrior::Unit => 1.0,
            LambdaPrior::InverseGamma => inverse_gamma(rng, self.hp.lambda_shape(), self.hp.lambda_scale()),
        };
        normal(rng, self.hp.m0, (lambda * self.hp.tau).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    JointSampling,
    FixedParameter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeDraw {
    pub theta: f64,
    pub theta_hat: f64,
    pub sigma_hat: f64,
    pub regime: Regime,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelectedSample {
    pub draws: Vec<RegimeDraw>,
    /// Candidates consumed up to and including the last kept draw.
    pub candidates: u64,
    /// Kept / candidates, the estimate of the marginal selection probability.
    pub acceptance_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingLimits {
    pub max_candidates: u64,
}

impl Default for SamplingLimits {
    fn default() -> Self {
        Self { max_candidates: 1_000_000_000 }
    }
}

const CHUNK: u32 = 4096;
const CHUNKS_PER_BATCH: u32 = 64;

/// Run `gen` on successive candidates until `n` are kept.
///
/// Returns the kept items in candidate order and the number of candidates
/// consumed. Fails with [`Error::InfeasibleSelection`] once
/// `limits.max_candidates` is exhausted.
pub fn collect_selected<T, F>(n: usize, seed: u64, job: u32, limits: SamplingLimits, gen: F) -> Result<(Vec<T>, u64)>
where
    T: Send,
    F: Fn(&mut StreamRng) -> Option<T> + Sync,
{
    if n == 0 {
        return Err(Error::invalid("number of kept draws must be at least 1"));
    }
    let mut kept = Vec::with_capacity(n);
    let mut next_chunk: u32 = 0;
    loop {
        let consumed = next_chunk as u64 * CHUNK as u64;
        if consumed >= limits.max_candidates {
            return Err(Error::InfeasibleSelection {
                acceptance_rate: kept.len() as f64 / consumed.max(1) as f64,
                candidates: consumed,
            });
        }
        let remaining_chunks = (limits.max_candidates - consumed).div_ceil(CHUNK as u64);
        let batch = (CHUNKS_PER_BATCH as u64).min(remaining_chunks) as u32;
        let results: Vec<Vec<(u32, T)>> = (next_chunk..next_chunk + batch)
            .into_par_iter()
            .map(|chunk| {
                let mut rng = stream_rng(seed, job_stream(job, chunk));
                (0..CHUNK).filter_map(|i| gen(&mut rng).map(|t| (i, t))).collect()
            })
            .collect();
        for (offset, chunk_items) in results.into_iter().enumerate() {
            let chunk = next_chunk + offset as u32;
            for (i, item) in chunk_items {
                kept.push(item);
                if kept.len() == n {
                    let candidates = chunk as u64 * CHUNK as u64 + i as u64 + 1;
                    return Ok((kept, candidates));
                }
            }
        }
        next_chunk += batch;
    }
}

fn finish(draws: Vec<RegimeDraw>, candidates: u64) -> SelectedSample {
    SelectedSample {
        acceptance_rate: draws.len() as f64 / candidates as f64,
        draws,
        candidates,
    }
}

pub fn sample_selected_joint(
    n: usize,
    prior: &JointPrior,
    sigma_gen: &SigmaModel,
    rule: &SelectionRule,
    seed: u64,
) -> Result<SelectedSample> {
    sample_selected_joint_with(n, prior, sigma_gen, rule, seed, SamplingLimits::default())
}

/// Joint regime: θ from the prior, θ̂ ~ N(θ, σ̂²), keep if selected.
pub fn sample_selected_joint_with(
    n: usize,
    prior: &JointPrior,
    sigma_gen: &SigmaModel,
    rule: &SelectionRule,
    seed: u64,
    limits: SamplingLimits,
) -> Result<SelectedSample> {
    prior.hp.validate()?;
    sigma_gen.validate()?;
    rule.validate()?;
    let (draws, candidates) = collect_selected(n, seed, 0, limits, |rng| {
        let theta = prior.sample(rng);
        let sigma_hat = sigma_gen.sample(rng);
        let theta_hat = normal(rng, theta, sigma_hat);
        is_selected(theta_hat, sigma_hat, rule).then_some(RegimeDraw {
            theta,
            theta_hat,
            sigma_hat,
            regime: Regime::JointSampling,
        })
    })?;
    Ok(finish(draws, candidates))
}

pub fn sample_selected_fixed(
    theta: f64,
    n: usize,
    sigma_gen: &SigmaModel,
    rule: &SelectionRule,
    seed: u64,
) -> Result<SelectedSample> {
    sample_selected_fixed_with(theta, n, sigma_gen, rule, seed, SamplingLimits::default())
}

/// Fixed-parameter regime: θ constant, θ̂ ~ N(θ, σ̂²), keep if selected.
pub fn sample_selected_fixed_with(
    theta: f64,
    n: usize,
    sigma_gen: &SigmaModel,
    rule: &SelectionRule,
    seed: u64,
    limits: SamplingLimits,
) -> Result<SelectedSample> {
    if !theta.is_finite() {
        return Err(Error::invalid("theta must be finite"));
    }
    sigma_gen.validate()?;
    rule.validate()?;
    let (draws, candidates) = collect_selected(n, seed, 1, limits, |rng| {
        let sigma_hat = sigma_gen.sample(rng);
        let theta_hat = normal(rng, theta, sigma_hat);
        is_selected(theta_hat, sigma_hat, rule).then_some(RegimeDraw {
            theta,
            theta_hat,
            sigma_hat,
            regime: Regime::FixedParameter,
        })
    })?;
    Ok(finish(draws, candidates))
}
