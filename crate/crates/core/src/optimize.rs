//! Bounded one-dimensional maximization.
//!
//! A uniform grid scan locates the best cell, then golden-section search
//! refines inside the two neighbouring cells. The scan guards against
//! multimodal objectives; the bracket is widened geometrically when the best
//! grid point sits on a boundary.

/// Outcome of [`maximize_scalar`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Maximum {
    pub argmax: f64,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct ScalarSearch {
    pub lo: f64,
    pub hi: f64,
    pub grid_points: usize,
    /// Final bracket width.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of times the bracket may be doubled outward when the best grid
    /// point lies on its edge. Zero keeps the bracket fixed.
    pub max_expansions: usize,
}

const INV_PHI: f64 = 0.618_033_988_749_894_8;

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::NEG_INFINITY
    } else {
        v
    }
}

pub fn maximize_scalar<F: Fn(f64) -> f64>(f: F, search: &ScalarSearch) -> Maximum {
    let f = |x: f64| sanitize(f(x));
    let n = search.grid_points.max(3);
    let (mut lo, mut hi) = (search.lo, search.hi);
    let mut expansions = 0;

    let (best_k, step, grid_values) = loop {
        let step = (hi - lo) / (n - 1) as f64;
        let values: Vec<f64> = (0..n).map(|k| f(lo + step * k as f64)).collect();
        let best_k = values
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc })
            .0;
        let at_edge = best_k == 0 || best_k == n - 1;
        if !at_edge || expansions >= search.max_expansions {
            break (best_k, step, values);
        }
        let width = hi - lo;
        if best_k == 0 {
            lo -= width;
        } else {
            hi += width;
        }
        expansions += 1;
    };

    let x_best = lo + step * best_k as f64;
    let mut a = if best_k == 0 { x_best } else { x_best - step };
    let mut b = if best_k == n - 1 { x_best } else { x_best + step };
    let on_edge = best_k == 0 || best_k == n - 1;

    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    let mut iterations = 0;
    while (b - a) > search.tol && iterations < search.max_iter {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
        iterations += 1;
    }

    let mid = 0.5 * (a + b);
    let mut candidates = [(mid, f(mid)), (c, fc), (d, fd), (x_best, grid_values[best_k])];
    candidates.sort_by(|p, q| q.1.total_cmp(&p.1));
    let (argmax, value) = candidates[0];
    Maximum {
        argmax,
        value,
        iterations,
        converged: (b - a) <= search.tol && !on_edge,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn search(lo: f64, hi: f64) -> ScalarSearch {
        ScalarSearch {
            lo,
            hi,
            grid_points: 33,
            tol: 1e-10,
            max_iter: 200,
            max_expansions: 8,
        }
    }

    #[test]
    fn quadratic() {
        let m = maximize_scalar(|x| -(x - 1.234).powi(2), &search(-10.0, 10.0));
        assert!(m.converged);
        assert!((m.argmax - 1.234).abs() < 1e-9);
    }

    #[test]
    fn picks_global_of_two_modes() {
        let f = |x: f64| (-(x + 3.0).powi(2)).exp() + 2.0 * (-(x - 4.0).powi(2) * 4.0).exp();
        let m = maximize_scalar(f, &search(-10.0, 10.0));
        assert!((m.argmax - 4.0).abs() < 1e-6);
    }

    #[test]
    fn expands_past_boundary() {
        let m = maximize_scalar(|x| -(x - 25.0).powi(2), &search(-1.0, 1.0));
        assert!(m.converged);
        assert!((m.argmax - 25.0).abs() < 1e-8);
    }

    #[test]
    fn boundary_maximum_without_expansion_is_flagged() {
        let mut s = search(0.0, 1.0);
        s.max_expansions = 0;
        let m = maximize_scalar(|x| x, &s);
        assert!(!m.converged);
        assert!((m.argmax - 1.0).abs() < 1e-9);
    }

    #[test]
    fn iteration_cap_flags_nonconvergence() {
        let mut s = search(-10.0, 10.0);
        s.max_iter = 3;
        let m = maximize_scalar(|x| -(x * x), &s);
        assert!(!m.converged);
        assert_eq!(m.iterations, 3);
    }
}
