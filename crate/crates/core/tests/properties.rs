use hybrid_shrinkage::calibration::{fit_marginal_mle, fit_method_of_moments, log_marginal_likelihood};
use hybrid_shrinkage::checks::{estimate_corpus, replication_evaluation};
use hybrid_shrinkage::io::{read_corpus_from, read_metric_table_from, write_corpus, write_metric_table_to};
use hybrid_shrinkage::*;
use proptest::prelude::*;

const Z95: f64 = 1.6448536269514722;

fn exp(theta_hat: f64, sigma: f64) -> ExperimentSummary {
    ExperimentSummary::new("p", theta_hat, sigma).unwrap()
}

fn hp(m0: f64, tau: f64) -> HyperParams {
    HyperParams::new(m0, tau, 3.0, 3.0).unwrap()
}

fn positive() -> impl Strategy<Value = f64> {
    (-6.0f64..4.0).prop_map(|e| 10f64.powf(e))
}

proptest! {
    #[test]
    fn posterior_mean_is_convex_combination(
        m0 in -5.0f64..5.0, theta_hat in -5.0f64..5.0, s in 0.01f64..10.0, lambda in positive(), tau in positive()
    ) {
        let p = conditional_posterior(&exp(theta_hat, s), &hp(m0, tau), lambda, 0.9).unwrap();
        let (lo, hi) = (m0.min(theta_hat), m0.max(theta_hat));
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        prop_assert!(lo - slack <= p.mean && p.mean <= hi + slack);
    }

    #[test]
    fn posterior_variance_below_both_components(
        theta_hat in -5.0f64..5.0, s in 0.01f64..10.0, lambda in positive(), tau in positive()
    ) {
        let p = conditional_posterior(&exp(theta_hat, s), &hp(0.0, tau), lambda, 0.9).unwrap();
        prop_assert!(p.variance < (s * s).min(lambda * tau) * (1.0 + 1e-15));
        prop_assert!(p.variance > 0.0);
    }

    #[test]
    fn posterior_mean_moves_toward_estimate_as_prior_widens(
        m0 in -3.0f64..3.0, d in -5.0f64..5.0, s in 0.05f64..5.0, l1 in positive(), factor in 1.0f64..100.0
    ) {
        let e = exp(m0 + d, s);
        let h = hp(m0, 1.0);
        let a = conditional_posterior(&e, &h, l1, 0.9).unwrap().mean;
        let b = conditional_posterior(&e, &h, l1 * factor, 0.9).unwrap().mean;
        let tol = 1e-12 * (1.0 + m0.abs() + d.abs());
        if d > 0.0 { prop_assert!(b >= a - tol); } else { prop_assert!(b <= a + tol); }
    }

    #[test]
    fn interval_at_ninety_uses_normal_quantile(
        theta_hat in -5.0f64..5.0, s in 0.01f64..10.0, tau in positive(), method_ix in 0usize..3
    ) {
        let p = estimate(&exp(theta_hat, s), &hp(0.5, tau), Method::ALL[method_ix], 0.9).unwrap();
        let half = Z95 * p.variance.sqrt();
        prop_assert!((p.interval_low - (p.mean - half)).abs() < 1e-9);
        prop_assert!((p.interval_high - (p.mean + half)).abs() < 1e-9);
    }

    #[test]
    fn face_value_ratio_is_scale_invariant(
        treated in prop::collection::vec(0.1f64..10.0, 2..20),
        control in prop::collection::vec(0.1f64..10.0, 2..20),
        c in 1e-3f64..1e3,
    ) {
        let build = |k: f64| UnitLevelData {
            outcomes: treated.iter().chain(&control).map(|y| y * k).collect(),
            assignments: treated.iter().map(|_| true).chain(control.iter().map(|_| false)).collect(),
        };
        let a = face_value_estimate(&build(1.0)).unwrap();
        let b = face_value_estimate(&build(c)).unwrap();
        prop_assert!((a.theta_hat - b.theta_hat).abs() <= 1e-12 * a.theta_hat.abs());
        prop_assert!((a.sigma_hat - b.sigma_hat).abs() <= 1e-10 * a.sigma_hat);
    }

    #[test]
    fn hybrid_keeps_prior_mean_fixed(m0 in -5.0f64..5.0, s in 0.01f64..10.0, tau in positive()) {
        let p = hybrid_shrinkage_estimate(&exp(m0, s), &hp(m0, tau), 0.9).unwrap();
        prop_assert_eq!(p.mean, m0);
    }

    #[test]
    fn lambda_mode_nondecreasing_in_distance(d1 in 0.0f64..8.0, extra in 0.0f64..8.0, s in 0.2f64..3.0) {
        let h = hp(0.0, 1.0);
        let a = lambda_posterior_mode(&exp(d1, s), &h, 1e-10).unwrap();
        let b = lambda_posterior_mode(&exp(-(d1 + extra), s), &h, 1e-10).unwrap();
        prop_assert!(b.mode >= a.mode * (1.0 - 1e-6), "{} < {}", b.mode, a.mode);
    }
}

fn corpus_strategy() -> impl Strategy<Value = Vec<ExperimentSummary>> {
    prop::collection::vec((-3.0f64..3.0, 0.05f64..2.0), 4..30).prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (t, s))| ExperimentSummary::new(format!("e{i}"), t, s).unwrap())
            .collect()
    })
}

fn shifted(corpus: &[ExperimentSummary], f: impl Fn(&ExperimentSummary) -> (f64, f64)) -> Vec<ExperimentSummary> {
    corpus
        .iter()
        .map(|e| {
            let (t, s) = f(e);
            ExperimentSummary::new(e.id.clone(), t, s).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn calibration_translation_equivariant(corpus in corpus_strategy(), c in -10.0f64..10.0) {
        let moved = shifted(&corpus, |e| (e.theta_hat + c, e.sigma_hat));
        let a = fit_method_of_moments(&corpus, 3.0, 3.0).unwrap().hyperparams;
        let b = fit_method_of_moments(&moved, 3.0, 3.0).unwrap().hyperparams;
        prop_assert!((b.m0 - a.m0 - c).abs() < 1e-9);
        prop_assert!((b.tau - a.tau).abs() <= 1e-9 * a.tau.max(1e-3));

        let a = fit_marginal_mle(&corpus, 3.0, 3.0, 1e-9).unwrap().hyperparams;
        let b = fit_marginal_mle(&moved, 3.0, 3.0, 1e-9).unwrap().hyperparams;
        prop_assert!((b.m0 - a.m0 - c).abs() < 1e-5, "m0 {} vs {}", b.m0 - c, a.m0);
        prop_assert!((b.tau - a.tau).abs() <= 1e-4 * a.tau.max(1e-2), "tau {} vs {}", b.tau, a.tau);
    }

    #[test]
    fn calibration_scale_equivariant(corpus in corpus_strategy(), c in 0.1f64..10.0) {
        let m = fit_method_of_moments(&corpus, 3.0, 3.0).unwrap().hyperparams;
        let scaled = shifted(&corpus, |e| (m.m0 + c * (e.theta_hat - m.m0), c * e.sigma_hat));
        let s = fit_method_of_moments(&scaled, 3.0, 3.0).unwrap().hyperparams;
        if m.tau > 1e-9 {
            prop_assert!((s.tau / (c * c * m.tau) - 1.0).abs() < 1e-8);
        }
        prop_assert!((s.m0 - m.m0).abs() < 1e-9 * (1.0 + m.m0.abs()));
    }

    #[test]
    fn mle_dominates_moments(corpus in corpus_strategy()) {
        let mom = fit_method_of_moments(&corpus, 3.0, 3.0).unwrap();
        let mle = fit_marginal_mle(&corpus, 3.0, 3.0, 1e-8).unwrap();
        prop_assert!(mle.log_marginal_likelihood >= mom.log_marginal_likelihood);
        let recomputed = log_marginal_likelihood(&corpus, &mle.hyperparams).unwrap();
        prop_assert_eq!(recomputed, mle.log_marginal_likelihood);
    }
}

/// A user-defined statistic: cube of the deviation, strictly increasing.
struct Cubed;

impl TestStatistic for Cubed {
    fn name(&self) -> String {
        "cubed".into()
    }

    fn eval(&self, x: f64) -> f64 {
        x.powi(3)
    }
}

/// exp(x): strictly increasing.
struct Exponential;

impl TestStatistic for Exponential {
    fn name(&self) -> String {
        "exp".into()
    }

    fn eval(&self, x: f64) -> f64 {
        x.exp()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tail_area_invariant_to_increasing_transforms(
        theta_hat in -3.0f64..3.0, s in 0.1f64..2.0, tau in 0.01f64..4.0, seed in 0u64..1000
    ) {
        let e = exp(theta_hat, s);
        let post = global_shrinkage_estimate(&e, &hp(0.0, tau), 0.9).unwrap();
        let base = tail_area_check(&e, &post, &Statistic::Identity, 500, seed, CheckTarget::Observed).unwrap();
        for stat in [&Cubed as &dyn TestStatistic, &Exponential] {
            let r = tail_area_check(&e, &post, stat, 500, seed, CheckTarget::Observed).unwrap();
            prop_assert_eq!(r.tail_area, base.tail_area);
        }
        let hits = base.replicated.iter().filter(|&&x| x >= base.observed).count();
        prop_assert_eq!(base.tail_area, hits as f64 / 500.0);
    }

    #[test]
    fn replication_metrics_translation_invariant(
        rows in prop::collection::vec((-2.0f64..2.0, 0.1f64..1.0, -2.0f64..2.0), 1..40),
        c in -50.0f64..50.0,
    ) {
        let build = |shift: f64| -> Vec<ExperimentSummary> {
            rows.iter().enumerate().map(|(i, &(t, s, r))| {
                ExperimentSummary::new(format!("e{i}"), t + shift, s).unwrap().with_replication(r + shift, Some(s)).unwrap()
            }).collect()
        };
        let (a, b) = (build(0.0), build(c));
        let ea = estimate_corpus(&a, &hp(0.0, 1.0), Method::FaceValue, 0.9).unwrap();
        let eb = estimate_corpus(&b, &hp(c, 1.0), Method::FaceValue, 0.9).unwrap();
        let ra = replication_evaluation(&a, &ea).unwrap();
        let rb = replication_evaluation(&b, &eb).unwrap();
        prop_assert!((ra.mae - rb.mae).abs() < 1e-9 * (1.0 + c.abs()));
        prop_assert_eq!(ra.n_pairs, rows.len());
        // Interval endpoints move by c exactly up to rounding; only pairs on
        // an endpoint could flip.
        prop_assert!((ra.coverage - rb.coverage).abs() <= 1.0 / rows.len() as f64 + 1e-12 || rows.len() == 1);
    }

    #[test]
    fn replication_coverage_monotone_in_level(
        rows in prop::collection::vec((-2.0f64..2.0, 0.1f64..1.0, -2.0f64..2.0), 1..40),
        method_ix in 0usize..3,
    ) {
        let corpus: Vec<ExperimentSummary> = rows.iter().enumerate().map(|(i, &(t, s, r))| {
            ExperimentSummary::new(format!("e{i}"), t, s).unwrap().with_replication(r, None).unwrap()
        }).collect();
        let mut prev = 0.0;
        for level in [0.5, 0.8, 0.9, 0.95, 0.99] {
            let est = estimate_corpus(&corpus, &hp(0.0, 0.5), Method::ALL[method_ix], level).unwrap();
            let cov = replication_evaluation(&corpus, &est).unwrap().coverage;
            prop_assert!(cov >= prev);
            prev = cov;
        }
    }

    #[test]
    fn corpus_csv_round_trips(rows in prop::collection::vec((any::<f64>(), 1e-300f64..1e300, any::<bool>(), prop::option::of(-1e6f64..1e6)), 1..20)) {
        let corpus: Vec<ExperimentSummary> = rows.iter().enumerate().filter(|(_, r)| r.0.is_finite()).map(|(i, &(t, s, sel, rep))| {
            let e = ExperimentSummary::new(format!("id-{i}"), t, s).unwrap().with_selected(sel);
            match rep { Some(r) => e.with_replication(r, Some(s)).unwrap(), None => e }
        }).collect();
        prop_assume!(!corpus.is_empty());
        let mut buf = Vec::new();
        write_corpus(&mut buf, &corpus).unwrap();
        let back = read_corpus_from(buf.as_slice(), "mem").unwrap();
        prop_assert!(back.has_selected_column);
        prop_assert_eq!(back.experiments, corpus);
    }

    #[test]
    fn metric_table_round_trips(values in prop::collection::vec((0.0f64..10.0, -3.0f64..3.0, 0.0f64..1.0), 1..6)) {
        let rows: Vec<MetricsRow> = values.iter().enumerate().flat_map(|(k, &(mse, bias, cov))| {
            Method::ALL.iter().map(move |&m| MetricsRow {
                method: m, sweep_variable: SweepVariable::Nu, sweep_value: 3.0 + k as f64 / 3.0,
                mse, bias, coverage: cov, n_selected: 20_000, seed: 42,
            })
        }).collect();
        let mut buf = Vec::new();
        write_metric_table_to(&mut buf, &rows).unwrap();
        prop_assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 1 + rows.len() * 3);
        prop_assert_eq!(read_metric_table_from(buf.as_slice(), "mem").unwrap(), rows);
    }
}
