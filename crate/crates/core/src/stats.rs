//! Small descriptive-statistics helpers shared by the samplers and harnesses.

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased (n - 1) sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Linear-interpolation quantile (type 7) of an ascending slice.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Monte-Carlo standard error of the mean of a possibly autocorrelated
/// series, by non-overlapping batch means with `floor(sqrt(n))` batches.
pub fn batch_means_se(xs: &[f64]) -> f64 {
    let n = xs.len();
    let n_batches = ((n as f64).sqrt().floor() as usize).max(2);
    let batch = n / n_batches;
    if batch == 0 {
        return f64::NAN;
    }
    let means: Vec<f64> = (0..n_batches)
        .map(|k| mean(&xs[k * batch..(k + 1) * batch]))
        .collect();
    (sample_variance(&means) / n_batches as f64).sqrt()
}
