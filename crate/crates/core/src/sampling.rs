//! Random variate generators.
//!
//! Normals come from `rand_distr::StandardNormal` (ziggurat). Gamma variates
//! use `rand_distr::Gamma` (Marsaglia-Tsang). Inverse-Gamma is the reciprocal
//! of a Gamma draw and Student-t is `Z / sqrt(chi2_nu / nu)`.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

pub fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    mean + sd * standard_normal(rng)
}

/// Draw from InverseGamma(shape, scale) with density proportional to
/// `x^(-shape-1) exp(-scale/x)`.
pub fn inverse_gamma<R: Rng + ?Sized>(rng: &mut R, shape: f64, scale: f64) -> f64 {
    // Gamma(shape, rate = scale) has scale parameter 1/scale.
    let g: f64 = Gamma::new(shape, 1.0 / scale)
        .expect("inverse-gamma parameters must be positive")
        .sample(rng);
    1.0 / g
}

pub fn chi_squared<R: Rng + ?Sized>(rng: &mut R, dof: f64) -> f64 {
    Gamma::new(0.5 * dof, 2.0)
        .expect("degrees of freedom must be positive")
        .sample(rng)
}

/// Standard Student-t with `dof` degrees of freedom.
pub fn student_t<R: Rng + ?Sized>(rng: &mut R, dof: f64) -> f64 {
    let z = standard_normal(rng);
    z / (chi_squared(rng, dof) / dof).sqrt()
}

/// Bivariate normal with equal means/scales and correlation `rho`,
/// via the 2x2 Cholesky factor.
pub fn bivariate_normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64, rho: f64) -> (f64, f64) {
    let z1 = standard_normal(rng);
    let z2 = standard_normal(rng);
    let x1 = z1;
    let x2 = rho * z1 + (1.0 - rho * rho).max(0.0).sqrt() * z2;
    (mean + sd * x1, mean + sd * x2)
}
