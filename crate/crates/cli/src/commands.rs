use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use hybrid_shrinkage::calibration::{self, CalibrationMethod};
use hybrid_shrinkage::checks::{estimate_corpus, replication_evaluation_with, tail_area_check, CheckTarget, CoverageMode, Statistic};
use hybrid_shrinkage::io::{self as hio, CalibrationArtifact, CheckRow};
use hybrid_shrinkage::rng::item_seed;
use hybrid_shrinkage::sim::{self, ScenarioConfig, ScenarioKind};
use hybrid_shrinkage::{
    estimate, face_value_estimate, face_value_summary, Error, ExperimentSummary, HyperParams, Method, PosteriorSummary,
    Result, SelectionRule,
};
use log::{info, warn};

use crate::args::*;

pub fn run(command: Command) -> Result<()> {
    match command {
        Command::Estimate(a) => cmd_estimate(&a),
        Command::Calibrate(a) => cmd_calibrate(&a),
        Command::Check(a) => cmd_check(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Simulate(a) => cmd_simulate(&a),
    }
}

fn is_stdout(path: &Path) -> bool {
    path.as_os_str() == "-"
}

/// Write through a buffered sink, mapping I/O failures to the path.
fn with_output(path: &Path, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let attach = |e: Error| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    };
    if is_stdout(path) {
        let stdout = io::stdout();
        let mut lock = stdout.lock();
        f(&mut lock).map_err(attach)?;
        lock.flush().map_err(|e| Error::io(path, e))
    } else {
        let mut w = BufWriter::new(File::create(path).map_err(|e| Error::io(path, e))?);
        f(&mut w).map_err(attach)?;
        w.flush().map_err(|e| Error::io(path, e))
    }
}

fn read_corpus_file(path: &Path) -> Result<(hio::Corpus, Vec<u8>)> {
    let bytes = hio::read_bytes(path)?;
    let corpus = hio::read_corpus_from(bytes.as_slice(), &path.display().to_string())?;
    if !corpus.has_selected_column {
        warn!("{}: no `selected` column, treating every experiment as selected", path.display());
    }
    Ok((corpus, bytes))
}

fn load_experiments(path: &Path, unit_level: bool) -> Result<Vec<ExperimentSummary>> {
    if !unit_level {
        return Ok(read_corpus_file(path)?.0.experiments);
    }
    hio::read_unit_level(path)?
        .into_iter()
        .map(|(id, data)| {
            let ratio = face_value_estimate(&data).map_err(|e| match e {
                Error::InvalidInput(m) => Error::InvalidInput(format!("experiment '{id}': {m}")),
                Error::SingularDenominator(m) => Error::SingularDenominator(format!("experiment '{id}': {m}")),
                other => other,
            })?;
            ratio.into_summary(id)
        })
        .collect()
}

fn resolve_prior(p: &PriorArgs) -> Result<Option<HyperParams>> {
    if let Some(path) = &p.calibration {
        let art = CalibrationArtifact::read(path)?;
        info!("loaded {} prior from {}", art.report.method, path.display());
        return Ok(Some(art.report.hyperparams));
    }
    match (p.m0, p.tau) {
        (Some(m0), Some(tau)) => HyperParams::new(m0, tau, p.a, p.b).map(Some),
        _ => Ok(None),
    }
}

fn posterior(exp: &ExperimentSummary, hp: Option<&HyperParams>, method: Method, level: f64) -> Result<PosteriorSummary> {
    match (method, hp) {
        (Method::FaceValue, _) => face_value_summary(exp, level),
        (_, Some(hp)) => estimate(exp, hp, method, level),
        (_, None) => Err(Error::invalid(format!("{method} requires --m0/--tau or --calibration"))),
    }
}

fn cmd_estimate(args: &EstimateArgs) -> Result<()> {
    let method = Method::from(args.method);
    let hp = resolve_prior(&args.prior)?;
    let corpus = load_experiments(&args.input, args.unit_level)?;
    let rows: Vec<(String, PosteriorSummary)> = match &hp {
        Some(hp) => estimate_corpus(&corpus, hp, method, args.level)?,
        None => corpus
            .iter()
            .map(|e| Ok((e.id.clone(), posterior(e, None, method, args.level)?)))
            .collect::<Result<_>>()?,
    };
    let stalled = rows.iter().filter(|(_, p)| !p.converged).count();
    if stalled > 0 {
        warn!("{stalled} experiment(s) flagged: local-factor mode search did not converge");
    }
    with_output(&args.output, |w| hio::write_estimates(w, &rows))
}

fn cmd_calibrate(args: &CalibrateArgs) -> Result<()> {
    let (corpus, bytes) = read_corpus_file(&args.input)?;
    let selected_only = corpus.experiments.iter().all(|e| e.selected);
    if selected_only && !args.selected_only_ack {
        return Err(Error::invalid(
            "every experiment in the corpus is marked selected (or no `selected` column is present); \
             a prior fitted to selected experiments alone is inflated by the same selection it is meant \
             to correct. Supply the pre-selection population, or pass --selected-only-ack to fit anyway",
        ));
    }
    if selected_only {
        warn!("fitting on selected experiments only (acknowledged)");
    }
    let method = match args.fit {
        FitArg::Moments => CalibrationMethod::MethodOfMoments,
        FitArg::Mle => CalibrationMethod::MarginalMle,
    };
    let report = calibration::fit(&corpus.experiments, method, args.a, args.b, args.tol)?;
    if method == CalibrationMethod::MarginalMle {
        let moments = calibration::fit_method_of_moments(&corpus.experiments, args.a, args.b)?;
        if report.log_marginal_likelihood < moments.log_marginal_likelihood {
            return Err(Error::Numerical(format!(
                "likelihood fit ({}) below the moment fit ({})",
                report.log_marginal_likelihood, moments.log_marginal_likelihood
            )));
        }
    }
    if report.tau_floored {
        warn!("no excess between-experiment variance; tau floored at {}", calibration::TAU_MIN);
    }
    info!(
        "m0 = {}, tau = {}, log marginal likelihood = {}",
        report.hyperparams.m0, report.hyperparams.tau, report.log_marginal_likelihood
    );
    let artifact = CalibrationArtifact {
        report,
        corpus_sha256: hio::fingerprint(&bytes),
    };
    with_output(&args.output, |w| {
        w.write_all(artifact.to_text().as_bytes()).map_err(|e| Error::io(&args.output, e))
    })
}

fn cmd_check(args: &CheckArgs) -> Result<()> {
    let method = Method::from(args.method);
    let hp = resolve_prior(&args.prior)?;
    let statistic = match args.statistic {
        StatisticArg::Identity => Statistic::Identity,
        StatisticArg::AbsDeviation => Statistic::AbsDeviationFromPriorMean {
            prior_mean: hp
                .ok_or_else(|| Error::invalid("abs-deviation needs the prior mean: pass --m0/--tau or --calibration"))?
                .m0,
        },
    };
    let target = match args.target {
        TargetArg::Observed => CheckTarget::Observed,
        TargetArg::Replication => CheckTarget::Replication,
    };
    let corpus = read_corpus_file(&args.input)?.0.experiments;
    let mut rows = Vec::with_capacity(corpus.len());
    let mut skipped = 0usize;
    for (i, exp) in corpus.iter().enumerate() {
        if target == CheckTarget::Replication && exp.replication_theta_hat.is_none() {
            skipped += 1;
            continue;
        }
        let post = posterior(exp, hp.as_ref(), method, args.level)?;
        let result = tail_area_check(exp, &post, &statistic, args.draws, item_seed(args.seed, i as u64), target)?;
        rows.push(CheckRow {
            id: exp.id.clone(),
            method,
            target,
            result,
        });
    }
    if skipped > 0 {
        warn!("skipped {skipped} experiment(s) without a replication estimate");
    }
    with_output(&args.output, |w| hio::write_check_results(w, &rows))
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<()> {
    let mode = match args.coverage {
        CoverageArg::Point => CoverageMode::PointEstimate,
        CoverageArg::Overlap => CoverageMode::IntervalOverlap,
    };
    let corpus = read_corpus_file(&args.input)?.0.experiments;
    let mut out = Vec::new();
    if let Some(path) = &args.estimates {
        let est = hio::read_estimates_from(hio::read_bytes(path)?.as_slice(), &path.display().to_string())?;
        let level = est.first().map(|(_, p)| p.level).unwrap_or(args.level);
        out.push((replication_evaluation_with(&corpus, &est, mode)?, level, mode));
    } else {
        let hp = resolve_prior(&args.prior)?;
        for &m in &args.methods {
            let method = Method::from(m);
            let est: Vec<(String, PosteriorSummary)> = corpus
                .iter()
                .map(|e| Ok((e.id.clone(), posterior(e, hp.as_ref(), method, args.level)?)))
                .collect::<Result<_>>()?;
            out.push((replication_evaluation_with(&corpus, &est, mode)?, args.level, mode));
        }
    }
    with_output(&args.output, |w| hio::write_evaluations(w, &out))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let kind = match args.kind {
        KindArg::MisspecifiedMean => ScenarioKind::MisspecifiedMean,
        KindArg::HeavyTails => ScenarioKind::HeavyTails,
        KindArg::HiddenSelection => ScenarioKind::HiddenSelection,
    };
    let (own, others) = match kind {
        ScenarioKind::MisspecifiedMean => (&args.mu, [("--nu", &args.nu), ("--rho", &args.rho)]),
        ScenarioKind::HeavyTails => (&args.nu, [("--mu", &args.mu), ("--rho", &args.rho)]),
        ScenarioKind::HiddenSelection => (&args.rho, [("--mu", &args.mu), ("--nu", &args.nu)]),
    };
    if let Some((flag, _)) = others.iter().find(|(_, v)| v.is_some()) {
        return Err(Error::invalid(format!("{flag} does not apply to --kind {}", kind.as_str())));
    }
    let tau = args.tau.unwrap_or(args.epsilon * args.epsilon);
    let base = ScenarioConfig {
        n_experiments: args.n_selected,
        epsilon: args.epsilon,
        sigma_hat: args.sigma_hat,
        rule: SelectionRule::z_greater(args.threshold, 0.0),
        seed: args.seed,
        analysis_hp: HyperParams::new(args.m0, tau, args.a, args.b)?,
        ..ScenarioConfig::new(kind)
    };
    base.validate()?;
    let sweep = own.clone().unwrap_or_else(|| base.default_sweep());
    let methods: Vec<Method> = args.methods.iter().map(|&m| m.into()).collect();
    info!("{}: sweeping {} over {:?}", kind.as_str(), kind.sweep_variable(), sweep);

    let rows = sim::run_sweep(&base, &sweep, &methods)?;
    let mut summary = sim::figure1_report(&rows, &args.output)?;
    let mut checks = sim::ordering_checks(&rows, &base);
    if kind == ScenarioKind::HiddenSelection && sweep.contains(&0.0) {
        checks.push(sim::independence_check(&base, 0.01)?);
    }
    summary.push('\n');
    for c in &checks {
        summary.push_str(&format!("{} {}: {}\n", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    with_output(&args.summary, |w| {
        w.write_all(summary.as_bytes()).map_err(|e| Error::io(&args.summary, e))
    })
}
