//! Empirical-Bayes fitting of the prior location `m0` and global scale `tau`
//! from a corpus of experiments, with the hyperprior inputs `(a, b)` fixed.
//!
//! Fit on the pre-selection population whenever it is available: a prior
//! estimated from selected experiments alone inherits the selection bias it
//! is meant to correct.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::model::{ExperimentSummary, HyperParams};
use crate::normal;
use crate::optimize::{maximize_scalar, ScalarSearch};
use crate::quadrature::log_integrate_exp;

/// Floor applied to fitted `tau`; the conditional posterior is singular at 0.
pub const TAU_MIN: f64 = 1e-12;
pub const DEFAULT_A: f64 = 3.0;
pub const DEFAULT_B: f64 = 3.0;

const LOG_LAMBDA_MIN: f64 = -18.420_680_743_952_367; // ln 1e-8
const LOG_LAMBDA_MAX: f64 = 18.420_680_743_952_367; // ln 1e8
/// Integration window edges sit where the integrand has fallen this far
/// below its peak (in log units).
const WINDOW_DROP: f64 = 40.0;
const MAX_ROUNDS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CalibrationMethod {
    MethodOfMoments,
    MarginalMle,
}

impl CalibrationMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            CalibrationMethod::MethodOfMoments => "method-of-moments",
            CalibrationMethod::MarginalMle => "marginal-mle",
        }
    }
}

impl fmt::Display for CalibrationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CalibrationMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "method-of-moments" | "moments" => Ok(CalibrationMethod::MethodOfMoments),
            "marginal-mle" | "mle" => Ok(CalibrationMethod::MarginalMle),
            other => Err(Error::invalid(format!("unknown calibration method '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationReport {
    pub hyperparams: HyperParams,
    pub n_experiments_used: usize,
    pub log_marginal_likelihood: f64,
    pub method: CalibrationMethod,
    /// Set when the moment estimate of `tau` was non-positive and floored.
    pub tau_floored: bool,
}

fn check_corpus(corpus: &[ExperimentSummary], a: f64, b: f64) -> Result<()> {
    if corpus.len() < 2 {
        return Err(Error::invalid(format!(
            "calibration needs at least 2 experiments, got {}",
            corpus.len()
        )));
    }
    for exp in corpus {
        exp.validate()?;
    }
    if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
        return Err(Error::invalid(format!("a and b must be positive, got a={a}, b={b}")));
    }
    Ok(())
}

fn precision_weighted_mean(corpus: &[ExperimentSummary]) -> f64 {
    let (num, den) = corpus.iter().fold((0.0, 0.0), |(n, d), e| {
        let w = 1.0 / e.variance();
        (n + w * e.theta_hat, d + w)
    });
    num / den
}

/// Moment estimate of `tau` given a prior mean of the local factor.
fn moment_tau(corpus: &[ExperimentSummary], mean_lambda: f64) -> (f64, bool) {
    let n = corpus.len() as f64;
    let mean = corpus.iter().map(|e| e.theta_hat).sum::<f64>() / n;
    let var = corpus.iter().map(|e| (e.theta_hat - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let mean_s2 = corpus.iter().map(|e| e.variance()).sum::<f64>() / n;
    let tau = (var - mean_s2) / mean_lambda;
    if tau > TAU_MIN {
        (tau, false)
    } else {
        (TAU_MIN, true)
    }
}

/// Method of moments: `m0` is the precision-weighted mean and `tau` solves
/// `Var(θ̂) = mean(σ̂²) + tau · b/(a − 2)`, floored at [`TAU_MIN`].
pub fn fit_method_of_moments(corpus: &[ExperimentSummary], a: f64, b: f64) -> Result<CalibrationReport> {
    check_corpus(corpus, a, b)?;
    if a <= 2.0 {
        return Err(Error::invalid(format!(
            "method of moments needs a > 2 for a finite prior mean of lambda, got a={a}"
        )));
    }
    let m0 = precision_weighted_mean(corpus);
    let (tau, tau_floored) = moment_tau(corpus, b / (a - 2.0));
    if tau_floored {
        log::warn!("moment estimate of tau is non-positive; floored at {TAU_MIN:e}");
    }
    let hyperparams = HyperParams::new(m0, tau, a, b)?;
    Ok(CalibrationReport {
        log_marginal_likelihood: log_marginal_likelihood(corpus, &hyperparams)?,
        hyperparams,
        n_experiments_used: corpus.len(),
        method: CalibrationMethod::MethodOfMoments,
        tau_floored,
    })
}

/// `log ∫ N(θ̂; m0, σ̂² + λτ) · InvGamma(λ; a/2, b/2) dλ` for one experiment.
///
/// The integral runs over u = log λ with 64-node Gauss-Legendre panels. The
/// window is placed around the integrand's peak and extends until the
/// integrand falls [`WINDOW_DROP`] log units below it, clipped to
/// λ ∈ [1e-8, 1e8]; panel width follows the prior's spread in u so sharp
/// hyperpriors (large a) are still resolved.
pub fn log_marginal_term(exp: &ExperimentSummary, hp: &HyperParams) -> f64 {
    let (alpha, beta) = (hp.lambda_shape(), hp.lambda_scale());
    let s2 = exp.variance();
    let d = exp.theta_hat - hp.m0;
    let norm_const = alpha * beta.ln() - ln_gamma(alpha);
    let h = |u: f64| {
        let lambda = u.exp();
        normal::log_density(exp.theta_hat, hp.m0, s2 + lambda * hp.tau) + norm_const - alpha * u - beta / lambda
    };

    let spread = 1.0 / alpha.sqrt();
    let prior_peak = (beta / alpha).ln();
    let data_peak = ((d * d).max(s2) / hp.tau).ln();
    let lo = (prior_peak.min(data_peak) - 10.0 * spread).max(LOG_LAMBDA_MIN);
    let hi = (prior_peak.max(data_peak) + 10.0 * spread).min(LOG_LAMBDA_MAX).max(lo + spread);
    let peak = maximize_scalar(
        h,
        &ScalarSearch {
            lo,
            hi,
            grid_points: 33,
            tol: 1e-3 * spread,
            max_iter: 100,
            max_expansions: 0,
        },
    );

    let target = peak.value - WINDOW_DROP;
    let walk = |dir: f64, limit: f64| {
        let mut u = peak.argmax;
        for _ in 0..400 {
            let next = u + dir * spread;
            if (dir < 0.0 && next <= limit) || (dir > 0.0 && next >= limit) {
                return limit;
            }
            u = next;
            if h(u) < target {
                break;
            }
        }
        u
    };
    let lo = walk(-1.0, LOG_LAMBDA_MIN);
    let hi = walk(1.0, LOG_LAMBDA_MAX);
    let panels = ((hi - lo) / (8.0 * spread)).ceil().clamp(1.0, 64.0) as usize;
    log_integrate_exp(h, lo, hi, panels)
}

/// Sum of per-experiment log marginal likelihoods, reduced in index order.
pub fn log_marginal_likelihood(corpus: &[ExperimentSummary], hp: &HyperParams) -> Result<f64> {
    let terms: Vec<f64> = corpus.par_iter().map(|e| log_marginal_term(e, hp)).collect();
    if let Some(i) = terms.iter().position(|t| !t.is_finite()) {
        return Err(Error::invalid(format!(
            "marginal likelihood of experiment {} is not finite at {hp:?}",
            corpus[i].id
        )));
    }
    Ok(terms.iter().sum())
}

/// Marginal maximum likelihood for `(m0, tau)` by coordinate ascent, each
/// coordinate maximized by grid scan plus golden section. Starts from the
/// moment estimate and only accepts improving moves.
pub fn fit_marginal_mle(corpus: &[ExperimentSummary], a: f64, b: f64, tol: f64) -> Result<CalibrationReport> {
    check_corpus(corpus, a, b)?;
    if !(tol > 0.0) {
        return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
    }
    let mean_lambda = if a > 2.0 { b / (a - 2.0) } else { b / (a + 2.0) };
    let mut m0 = precision_weighted_mean(corpus);
    let mut log_tau = moment_tau(corpus, mean_lambda).0.ln();

    let objective = |m0: f64, log_tau: f64| -> f64 {
        let hp = HyperParams { m0, tau: log_tau.exp(), a, b };
        let terms: Vec<f64> = corpus.par_iter().map(|e| log_marginal_term(e, &hp)).collect();
        terms.iter().sum()
    };
    let mut best = objective(m0, log_tau);
    if !best.is_finite() {
        return Err(Error::invalid("marginal likelihood is not finite at the starting point"));
    }

    let (theta_lo, theta_hi) = corpus.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| {
        (lo.min(e.theta_hat), hi.max(e.theta_hat))
    });
    let max_s2 = corpus.iter().map(|e| e.variance()).fold(0.0, f64::max);
    let tau_hi = 100.0 * ((theta_hi - theta_lo).powi(2) + max_s2) / (b / (a + 2.0));
    let inner_tol = 0.1 * tol;

    for _ in 0..MAX_ROUNDS {
        let (m0_prev, log_tau_prev) = (m0, log_tau);
        if theta_hi > theta_lo {
            let cand = maximize_scalar(
                |m| objective(m, log_tau),
                &ScalarSearch {
                    lo: theta_lo,
                    hi: theta_hi,
                    grid_points: 17,
                    tol: inner_tol,
                    max_iter: 200,
                    max_expansions: 0,
                },
            );
            if cand.value > best {
                m0 = cand.argmax;
                best = cand.value;
            }
        }
        let cand = maximize_scalar(
            |lt| objective(m0, lt),
            &ScalarSearch {
                lo: TAU_MIN.ln(),
                hi: tau_hi.ln().max(TAU_MIN.ln() + 1.0),
                grid_points: 33,
                tol: inner_tol,
                max_iter: 200,
                max_expansions: 0,
            },
        );
        if cand.value > best {
            log_tau = cand.argmax;
            best = cand.value;
        }
        if (m0 - m0_prev).abs() < tol && (log_tau - log_tau_prev).abs() < tol {
            break;
        }
    }

    let hyperparams = HyperParams::new(m0, log_tau.exp().max(TAU_MIN), a, b)?;
    Ok(CalibrationReport {
        log_marginal_likelihood: log_marginal_likelihood(corpus, &hyperparams)?,
        hyperparams,
        n_experiments_used: corpus.len(),
        method: CalibrationMethod::MarginalMle,
        tau_floored: false,
    })
}

pub fn fit(corpus: &[ExperimentSummary], method: CalibrationMethod, a: f64, b: f64, tol: f64) -> Result<CalibrationReport> {
    match method {
        CalibrationMethod::MethodOfMoments => fit_method_of_moments(corpus, a, b),
        CalibrationMethod::MarginalMle => fit_marginal_mle(corpus, a, b, tol),
    }
}
