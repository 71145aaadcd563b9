#![allow(dead_code)]

use statrs::function::gamma::ln_gamma;

/// Log density of the location-scale Student-t.
pub fn t_log_density(x: f64, dof: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    ln_gamma((dof + 1.0) / 2.0) - ln_gamma(dof / 2.0) - 0.5 * (dof * std::f64::consts::PI).ln() - scale.ln()
        - (dof + 1.0) / 2.0 * (1.0 + z * z / dof).ln()
}

/// Posterior mean and variance of θ given θ̂ when θ ~ m0 + √(τ b / a)·t_a
/// (the hierarchy with λ integrated out), by trapezoid rule over θ.
pub fn hierarchy_posterior_moments(theta_hat: f64, sigma: f64, m0: f64, tau: f64, a: f64, b: f64) -> (f64, f64) {
    let scale = (tau * b / a).sqrt();
    let lo = theta_hat.min(m0) - 12.0 * sigma - 60.0 * scale;
    let hi = theta_hat.max(m0) + 12.0 * sigma + 60.0 * scale;
    let n = 400_000;
    let h = (hi - lo) / n as f64;
    let log_w = |t: f64| -0.5 * ((theta_hat - t) / sigma).powi(2) + t_log_density(t, a, m0, scale);
    let peak = (0..=n).map(|i| log_w(lo + i as f64 * h)).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for i in 0..=n {
        let t = lo + i as f64 * h;
        let w = (log_w(t) - peak).exp() * if i == 0 || i == n { 0.5 } else { 1.0 };
        z += w;
        m1 += w * t;
        m2 += w * t * t;
    }
    let mean = m1 / z;
    (mean, m2 / z - mean * mean)
}
