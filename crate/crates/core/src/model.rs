//! Domain types and the closed-form estimators.
//!
//! The hierarchy behind every estimator in this crate is
//!
//! ```text
//! theta_hat_i | theta_i        ~ N(theta_i, sigma_hat_i^2)
//! theta_i     | m0, lambda_i, tau ~ N(m0, lambda_i * tau)
//! lambda_i    | a, b           ~ InverseGamma(a/2, b/2)
//! ```
//!
//! Conditional on `lambda_i` the posterior of `theta_i` is normal with a
//! precision-weighted mean; [`conditional_posterior`] evaluates it. Global
//! shrinkage fixes `lambda_i = 1`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::normal;

/// One experiment's observed summary statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSummary {
    pub id: String,
    /// Observed effect estimate (a ratio; 1.0 is no effect).
    pub theta_hat: f64,
    /// Standard error of `theta_hat`. Must be positive.
    pub sigma_hat: f64,
    pub selected: bool,
    pub replication_theta_hat: Option<f64>,
    pub replication_sigma_hat: Option<f64>,
}

impl ExperimentSummary {
    pub fn new(id: impl Into<String>, theta_hat: f64, sigma_hat: f64) -> Result<Self> {
        let exp = Self {
            id: id.into(),
            theta_hat,
            sigma_hat,
            selected: true,
            replication_theta_hat: None,
            replication_sigma_hat: None,
        };
        exp.validate()?;
        Ok(exp)
    }

    pub fn with_selected(mut self, selected: bool) -> Self {
        self.selected = selected;
        self
    }

    pub fn with_replication(mut self, theta_hat: f64, sigma_hat: Option<f64>) -> Result<Self> {
        self.replication_theta_hat = Some(theta_hat);
        self.replication_sigma_hat = sigma_hat;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta_hat.is_finite() {
            return Err(Error::invalid(format!("experiment {}: theta_hat must be finite", self.id)));
        }
        if !(self.sigma_hat > 0.0 && self.sigma_hat.is_finite()) {
            return Err(Error::invalid(format!(
                "experiment {}: sigma_hat must be positive and finite, got {}",
                self.id, self.sigma_hat
            )));
        }
        if let Some(r) = self.replication_theta_hat {
            if !r.is_finite() {
                return Err(Error::invalid(format!(
                    "experiment {}: replication_theta_hat must be finite",
                    self.id
                )));
            }
        }
        if let Some(s) = self.replication_sigma_hat {
            if !(s > 0.0 && s.is_finite()) {
                return Err(Error::invalid(format!(
                    "experiment {}: replication_sigma_hat must be positive, got {s}",
                    self.id
                )));
            }
        }
        Ok(())
    }

    pub fn variance(&self) -> f64 {
        self.sigma_hat * self.sigma_hat
    }
}

/// Prior parameters shared across a corpus.
///
/// `tau` scales the prior variance of each effect (`lambda_i * tau`). The
/// local factor follows InverseGamma with shape `a/2` and scale `b/2`, i.e.
/// density proportional to `x^(-a/2-1) exp(-b/(2x))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HyperParams {
    pub m0: f64,
    pub tau: f64,
    pub a: f64,
    pub b: f64,
}

impl HyperParams {
    pub fn new(m0: f64, tau: f64, a: f64, b: f64) -> Result<Self> {
        let hp = Self { m0, tau, a, b };
        hp.validate()?;
        Ok(hp)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.m0.is_finite() {
            return Err(Error::invalid("m0 must be finite"));
        }
        for (name, v) in [("tau", self.tau), ("a", self.a), ("b", self.b)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::invalid(format!("{name} must be positive and finite, got {v}")));
            }
        }
        Ok(())
    }

    /// Shape of the InverseGamma hyperprior on the local factor.
    pub fn lambda_shape(&self) -> f64 {
        0.5 * self.a
    }

    /// Scale of the InverseGamma hyperprior on the local factor.
    pub fn lambda_scale(&self) -> f64 {
        0.5 * self.b
    }
}

/// Which estimator produced a [`PosteriorSummary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    FaceValue,
    GlobalShrinkage,
    HybridShrinkage,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::FaceValue, Method::GlobalShrinkage, Method::HybridShrinkage];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::FaceValue => "face-value",
            Method::GlobalShrinkage => "global-shrinkage",
            Method::HybridShrinkage => "hybrid-shrinkage",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "face-value" | "fv" => Ok(Method::FaceValue),
            "global-shrinkage" | "global" => Ok(Method::GlobalShrinkage),
            "hybrid-shrinkage" | "hybrid" => Ok(Method::HybridShrinkage),
            other => Err(Error::invalid(format!("unknown method '{other}'"))),
        }
    }
}

/// Normal posterior (or sampling distribution, for Face Value) of one effect.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSummary {
    pub mean: f64,
    pub variance: f64,
    pub interval_low: f64,
    pub interval_high: f64,
    pub level: f64,
    pub method: Method,
    /// Local factor at which the posterior was evaluated; `None` for Face Value.
    pub lambda_used: Option<f64>,
    /// False only when the local-factor mode search hit its iteration cap.
    pub converged: bool,
}

impl PosteriorSummary {
    fn normal(mean: f64, variance: f64, level: f64, method: Method, lambda_used: Option<f64>) -> Self {
        let half = normal::two_sided_critical(level) * variance.sqrt();
        Self {
            mean,
            variance,
            interval_low: mean - half,
            interval_high: mean + half,
            level,
            method,
            lambda_used,
            converged: true,
        }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.interval_low <= x && x <= self.interval_high
    }

    pub fn sd(&self) -> f64 {
        self.variance.sqrt()
    }
}

pub(crate) fn check_level(level: f64) -> Result<()> {
    if level > 0.0 && level < 1.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("interval level must lie in (0, 1), got {level}")))
    }
}

/// Unit-level outcomes of a two-arm experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitLevelData {
    pub outcomes: Vec<f64>,
    /// `true` for treatment, `false` for control.
    pub assignments: Vec<bool>,
}

/// Ratio-of-means point estimate with its delta-method standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioEstimate {
    pub theta_hat: f64,
    pub sigma_hat: f64,
    pub n_treated: usize,
    pub n_control: usize,
}

impl RatioEstimate {
    /// Wrap as an [`ExperimentSummary`]; fails when the standard error is zero
    /// (e.g. constant outcomes within both arms).
    pub fn into_summary(self, id: impl Into<String>) -> Result<ExperimentSummary> {
        ExperimentSummary::new(id, self.theta_hat, self.sigma_hat)
    }
}

fn mean_and_var_of_mean(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let ss = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, ss / (n - 1.0) / n)
}

/// Face Value estimator: treated mean over control mean.
///
/// The standard error is the delta-method approximation for a ratio of two
/// independent means, `Var(X/Y) ≈ Var(X)/Y² + X² Var(Y)/Y⁴`, with each
/// arm's variance of the mean taken from its unbiased sample variance. Each
/// arm therefore needs at least two units.
pub fn face_value_estimate(data: &UnitLevelData) -> Result<RatioEstimate> {
    if data.outcomes.is_empty() || data.outcomes.len() != data.assignments.len() {
        return Err(Error::invalid(format!(
            "outcomes ({}) and assignments ({}) must be nonempty and of equal length",
            data.outcomes.len(),
            data.assignments.len()
        )));
    }
    if let Some(i) = data.outcomes.iter().position(|y| !y.is_finite()) {
        return Err(Error::invalid(format!("outcome {i} is not finite")));
    }
    type Arm = Vec<(f64, bool)>;
    let (treated, control): (Arm, Arm) = data
        .outcomes
        .iter()
        .copied()
        .zip(data.assignments.iter().copied())
        .partition(|&(_, z)| z);
    if treated.is_empty() || control.is_empty() {
        return Err(Error::invalid("both arms need at least one unit"));
    }
    if treated.len() < 2 || control.len() < 2 {
        return Err(Error::invalid(
            "each arm needs at least two units for a within-arm variance",
        ));
    }
    let treated: Vec<f64> = treated.into_iter().map(|(y, _)| y).collect();
    let control: Vec<f64> = control.into_iter().map(|(y, _)| y).collect();

    let (mean_t, var_t) = mean_and_var_of_mean(&treated);
    let (mean_c, var_c) = mean_and_var_of_mean(&control);
    if mean_c == 0.0 {
        return Err(Error::SingularDenominator("control-arm mean is zero".into()));
    }
    let theta_hat = mean_t / mean_c;
    let c2 = mean_c * mean_c;
    let sigma_hat = (var_t / c2 + mean_t * mean_t * var_c / (c2 * c2)).sqrt();
    Ok(RatioEstimate {
        theta_hat,
        sigma_hat,
        n_treated: treated.len(),
        n_control: control.len(),
    })
}

/// Unadjusted normal interval `theta_hat ± z * sigma_hat`.
pub fn face_value_summary(exp: &ExperimentSummary, level: f64) -> Result<PosteriorSummary> {
    exp.validate()?;
    check_level(level)?;
    Ok(PosteriorSummary::normal(
        exp.theta_hat,
        exp.variance(),
        level,
        Method::FaceValue,
        None,
    ))
}

/// Posterior of the true effect given the observed estimate and a fixed
/// local factor `lambda`.
///
/// mean = s²/(s² + λτ)·m0 + λτ/(s² + λτ)·θ̂, variance = (1/s² + 1/(λτ))⁻¹.
pub fn conditional_posterior(
    exp: &ExperimentSummary,
    hp: &HyperParams,
    lambda: f64,
    level: f64,
) -> Result<PosteriorSummary> {
    exp.validate()?;
    hp.validate()?;
    check_level(level)?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(Error::invalid(format!("lambda must be positive and finite, got {lambda}")));
    }
    let (mean, variance) = conditional_moments(exp.theta_hat, exp.variance(), hp.m0, lambda * hp.tau);
    Ok(PosteriorSummary::normal(
        mean,
        variance,
        level,
        Method::HybridShrinkage,
        Some(lambda),
    ))
}

/// Mean and variance of the normal-normal posterior with likelihood
/// variance `s2` and prior variance `v`.
pub(crate) fn conditional_moments(theta_hat: f64, s2: f64, m0: f64, v: f64) -> (f64, f64) {
    let total = s2 + v;
    // Same weights as s2/total·m0 + v/total·θ̂, written so θ̂ = m0 is an exact
    // fixed point.
    let mean = m0 + (v / total) * (theta_hat - m0);
    let variance = s2 * v / total;
    (mean, variance)
}

/// Global Shrinkage: [`conditional_posterior`] with `lambda = 1`.
pub fn global_shrinkage_estimate(
    exp: &ExperimentSummary,
    hp: &HyperParams,
    level: f64,
) -> Result<PosteriorSummary> {
    let mut post = conditional_posterior(exp, hp, 1.0, level)?;
    post.method = Method::GlobalShrinkage;
    Ok(post)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp(theta_hat: f64, sigma_hat: f64) -> ExperimentSummary {
        ExperimentSummary::new("e", theta_hat, sigma_hat).unwrap()
    }

    fn units(outcomes: &[f64], z: &[u8]) -> UnitLevelData {
        UnitLevelData {
            outcomes: outcomes.to_vec(),
            assignments: z.iter().map(|&v| v == 1).collect(),
        }
    }

    #[test]
    fn face_value_constant_arms() {
        let est = face_value_estimate(&units(&[3., 3., 3., 1., 1., 1.], &[1, 1, 1, 0, 0, 0])).unwrap();
        assert_eq!(est.theta_hat, 3.0);
        assert_eq!(est.sigma_hat, 0.0);
        // zero standard error cannot feed the posterior
        assert!(est.into_summary("x").is_err());
    }

    #[test]
    fn face_value_ratio_and_delta_se() {
        let est = face_value_estimate(&units(&[2., 4., 1., 3.], &[1, 1, 0, 0])).unwrap();
        assert_eq!(est.theta_hat, 1.5);
        // Treated: mean 3, s² = 2, Var(mean) = 1. Control: mean 2, s² = 2, Var(mean) = 1.
        // Var ≈ 1/2² + 3²·1/2⁴ = 1/4 + 9/16 = 13/16.
        let oracle = 13f64.sqrt() / 4.0;
        assert!((est.sigma_hat - oracle).abs() < 1e-12);
    }

    #[test]
    fn face_value_errors() {
        assert!(matches!(
            face_value_estimate(&units(&[1., 2.], &[1, 1])),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            face_value_estimate(&units(&[1., 2., -1., 1.], &[1, 1, 0, 0])),
            Err(Error::SingularDenominator(_))
        ));
        assert!(face_value_estimate(&units(&[1.], &[1, 0])).is_err());
        assert!(face_value_estimate(&units(&[], &[])).is_err());
    }

    #[test]
    fn conditional_posterior_examples() {
        let hp = HyperParams::new(0.0, 1.0, 3.0, 3.0).unwrap();
        let p = conditional_posterior(&exp(2.0, 1.0), &hp, 1.0, 0.9).unwrap();
        assert!((p.mean - 1.0).abs() < 1e-15);
        assert!((p.variance - 0.5).abs() < 1e-15);

        let p = conditional_posterior(&exp(2.0, 1.0), &hp, 1e12, 0.9).unwrap();
        assert!((p.mean - 2.0).abs() < 1e-11);
        assert!((p.variance - 1.0).abs() < 1e-11);

        let hp2 = HyperParams::new(0.0, 2.0, 3.0, 3.0).unwrap();
        let p = conditional_posterior(&exp(1.0, 2f64.sqrt()), &hp2, 0.5, 0.9).unwrap();
        assert!((p.mean - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.variance - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn conditional_posterior_rejects_bad_inputs() {
        let hp = HyperParams { m0: 0.0, tau: 1.0, a: 3.0, b: 3.0 };
        assert!(conditional_posterior(&exp(1.0, 1.0), &hp, 0.0, 0.9).is_err());
        assert!(conditional_posterior(&exp(1.0, 1.0), &hp, -1.0, 0.9).is_err());
        assert!(conditional_posterior(&exp(1.0, 1.0), &hp, 1.0, 1.0).is_err());
        let bad = HyperParams { tau: 0.0, ..hp };
        assert!(conditional_posterior(&exp(1.0, 1.0), &bad, 1.0, 0.9).is_err());
        assert!(ExperimentSummary::new("z", 1.0, 0.0).is_err());
        assert!(ExperimentSummary::new("z", f64::NAN, 1.0).is_err());
    }

    #[test]
    fn global_shrinkage_examples() {
        let hp = HyperParams::new(0.0, 3.0, 3.0, 3.0).unwrap();
        let g = global_shrinkage_estimate(&exp(3.0, 1.0), &hp, 0.9).unwrap();
        assert!((g.mean - 2.25).abs() < 1e-15);
        assert!((g.variance - 0.75).abs() < 1e-15);
        assert_eq!(g.method, Method::GlobalShrinkage);

        let c = conditional_posterior(&exp(3.0, 1.0), &hp, 1.0, 0.9).unwrap();
        assert_eq!((g.mean, g.variance, g.interval_low, g.interval_high), (c.mean, c.variance, c.interval_low, c.interval_high));

        let hp1 = HyperParams::new(1.0, 0.7, 3.0, 3.0).unwrap();
        for s in [0.01, 1.0, 30.0] {
            let g = global_shrinkage_estimate(&exp(1.0, s), &hp1, 0.9).unwrap();
            assert!((g.mean - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn interval_uses_normal_quantile() {
        let hp = HyperParams::new(0.0, 1.0, 3.0, 3.0).unwrap();
        let p = global_shrinkage_estimate(&exp(2.0, 1.0), &hp, 0.9).unwrap();
        let half = 1.644_853_626_951_472_2 * 0.5f64.sqrt();
        assert!((p.interval_high - (1.0 + half)).abs() < 1e-9);
        assert!((p.interval_low - (1.0 - half)).abs() < 1e-9);
    }

    #[test]
    fn face_value_interval_is_naive() {
        let p = face_value_summary(&exp(1.2, 0.1), 0.9).unwrap();
        assert_eq!(p.mean, 1.2);
        assert_eq!(p.variance, 0.1 * 0.1);
        assert!(p.lambda_used.is_none());
    }

    #[test]
    fn method_round_trips_through_str() {
        for m in Method::ALL {
            assert_eq!(m.as_str().parse::<Method>().unwrap(), m);
        }
    }
}
