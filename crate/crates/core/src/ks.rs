//! Kolmogorov-Smirnov statistics.

/// Two-sample KS statistic `sup |F_x - F_y|`.
pub fn two_sample_statistic(x: &[f64], y: &[f64]) -> f64 {
    let mut xs = x.to_vec();
    let mut ys = y.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (n, m) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < xs.len() && j < ys.len() {
        let t = xs[i].min(ys[j]);
        while i < xs.len() && xs[i] <= t {
            i += 1;
        }
        while j < ys.len() && ys[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// One-sample KS statistic against a continuous CDF.
pub fn one_sample_statistic<F: Fn(f64) -> f64>(x: &[f64], cdf: F) -> f64 {
    let mut xs = x.to_vec();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    xs.iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic Kolmogorov survival function `Q(t) = 2 Σ (-1)^(k-1) exp(-2 k² t²)`.
fn kolmogorov_sf(t: f64) -> f64 {
    if t < 0.2 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let kf = k as f64;
        let term = (-2.0 * kf * kf * t * t).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Approximate p-value for a KS statistic with effective sample size
/// `n_eff` (`n` for one sample, `nm/(n+m)` for two), using the
/// small-sample correction of Stephens.
pub fn p_value(d: f64, n_eff: f64) -> f64 {
    let s = n_eff.sqrt();
    kolmogorov_sf((s + 0.12 + 0.11 / s) * d)
}

/// Result of a two-sample KS test.
#[derive(Debug, Clone, Copy)]
pub struct KsTest {
    pub statistic: f64,
    pub p_value: f64,
}

impl KsTest {
    pub fn passes(&self, alpha: f64) -> bool {
        self.p_value >= alpha
    }
}

pub fn two_sample_test(x: &[f64], y: &[f64]) -> KsTest {
    let d = two_sample_statistic(x, y);
    let (n, m) = (x.len() as f64, y.len() as f64);
    KsTest {
        statistic: d,
        p_value: p_value(d, n * m / (n + m)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // Brute force: evaluate both ECDFs at every pooled point.
    fn brute_two_sample(x: &[f64], y: &[f64]) -> f64 {
        let ecdf = |s: &[f64], t: f64| s.iter().filter(|&&v| v <= t).count() as f64 / s.len() as f64;
        x.iter()
            .chain(y)
            .map(|&t| (ecdf(x, t) - ecdf(y, t)).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn two_sample_matches_brute_force() {
        let x = [0.1, 0.5, 0.5, 0.9, 1.3, 2.0];
        let y = [0.2, 0.5, 1.1, 1.2, 3.0];
        assert!((two_sample_statistic(&x, &y) - brute_two_sample(&x, &y)).abs() < 1e-15);
        assert_eq!(two_sample_statistic(&x, &x), 0.0);
    }

    #[test]
    fn one_sample_uniform_grid() {
        let xs: Vec<f64> = (0..10).map(|i| (i as f64 + 0.5) / 10.0).collect();
        let d = one_sample_statistic(&xs, |t| t.clamp(0.0, 1.0));
        assert!((d - 0.05).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_critical_value() {
        // Q(1.6276) ≈ 0.01, Q(1.3581) ≈ 0.05
        assert!((kolmogorov_sf(1.627_6) - 0.01).abs() < 1e-4);
        assert!((kolmogorov_sf(1.358_1) - 0.05).abs() < 1e-4);
    }
}
