//! File formats.
//!
//! All tables are UTF-8 CSV with a header row. Floats are written in Rust's
//! shortest round-trip form, so reading a table back reproduces the values
//! bit for bit.
//!
//! Experiment corpus (`id, theta_hat, sigma_hat` required; `selected`,
//! `replication_theta_hat`, `replication_sigma_hat` optional, empty cells
//! mean absent):
//!
//! ```text
//! id,theta_hat,sigma_hat,selected,replication_theta_hat,replication_sigma_hat
//! exp-1,1.031,0.012,true,1.018,0.012
//! ```
//!
//! Unit-level long format: `experiment_id, unit_id, z, y` with `z` in {0, 1}.
//!
//! Calibration artifact: `key = value` lines, `#` comments, see
//! [`CalibrationArtifact`].

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::calibration::{CalibrationMethod, CalibrationReport};
use crate::checks::{CheckTarget, CoverageMode, PredictiveCheckResult, ReplicationEvaluation};
use crate::error::{Error, Result};
use crate::model::{ExperimentSummary, HyperParams, Method, PosteriorSummary, UnitLevelData};
use crate::sim::{MetricsRow, SweepVariable};

pub const ARTIFACT_FORMAT: &str = "hybrid-shrinkage-calibration";
pub const ARTIFACT_VERSION: u32 = 1;

pub const ESTIMATE_COLUMNS: [&str; 9] = [
    "id",
    "method",
    "mean",
    "variance",
    "interval_low",
    "interval_high",
    "level",
    "lambda_used",
    "converged",
];
pub const METRIC_COLUMNS: [&str; 7] = ["method", "sweep_variable", "sweep_value", "metric", "value", "n_selected", "seed"];

fn parse_err(context: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        context: context.to_string(),
        line,
        message: message.into(),
    }
}

fn csv_err(context: &str, path: Option<&Path>, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path.map(Path::to_path_buf).unwrap_or_default(), e),
        other => parse_err(context, line, format!("{other:?}")),
    }
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| Error::io(path, e))?;
    Ok(buf)
}

fn create(path: &Path) -> Result<File> {
    File::create(path).map_err(|e| Error::io(path, e))
}

/// SHA-256 of `bytes`, lowercase hex.
pub fn fingerprint(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// A parsed experiment corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub experiments: Vec<ExperimentSummary>,
    /// False when the input had no `selected` column (every row then
    /// defaults to selected).
    pub has_selected_column: bool,
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Some(true),
        "false" | "0" | "no" => Some(false),
        _ => None,
    }
}

fn parse_f64(context: &str, line: u64, column: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| parse_err(context, line, format!("column {column}: cannot parse '{s}' as a number")))
}

fn parse_opt_f64(context: &str, line: u64, column: &str, s: Option<&str>) -> Result<Option<f64>> {
    match s.map(str::trim) {
        None | Some("") => Ok(None),
        Some(v) => parse_f64(context, line, column, v).map(Some),
    }
}

pub fn read_corpus_from<R: Read>(reader: R, context: &str) -> Result<Corpus> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(context, None, e))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (id_c, theta_c, sigma_c) = match (col("id"), col("theta_hat"), col("sigma_hat")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => {
            return Err(parse_err(context, 1, "header must contain id, theta_hat and sigma_hat"));
        }
    };
    let sel_c = col("selected");
    let rep_t = col("replication_theta_hat");
    let rep_s = col("replication_sigma_hat");

    let mut experiments = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(context, None, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let get = |c: usize| record.get(c).unwrap_or("");
        let id = get(id_c).to_string();
        if id.is_empty() {
            return Err(parse_err(context, line, "empty id"));
        }
        let theta_hat = parse_f64(context, line, "theta_hat", get(theta_c))?;
        let sigma_hat = parse_f64(context, line, "sigma_hat", get(sigma_c))?;
        let selected = match sel_c.map(get) {
            None => true,
            Some(v) => parse_bool(v).ok_or_else(|| parse_err(context, line, format!("column selected: '{v}' is not a boolean")))?,
        };
        let exp = ExperimentSummary {
            id,
            theta_hat,
            sigma_hat,
            selected,
            replication_theta_hat: parse_opt_f64(context, line, "replication_theta_hat", rep_t.map(get))?,
            replication_sigma_hat: parse_opt_f64(context, line, "replication_sigma_hat", rep_s.map(get))?,
        };
        exp.validate().map_err(|e| parse_err(context, line, e.to_string()))?;
        experiments.push(exp);
    }
    Ok(Corpus {
        experiments,
        has_selected_column: sel_c.is_some(),
    })
}

pub fn read_corpus(path: &Path) -> Result<Corpus> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus_from(file, &path.display().to_string())
}

pub fn write_corpus<W: Write>(writer: W, experiments: &[ExperimentSummary]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let ctx = "corpus output";
    w.write_record([
        "id",
        "theta_hat",
        "sigma_hat",
        "selected",
        "replication_theta_hat",
        "replication_sigma_hat",
    ])
    .map_err(|e| csv_err(ctx, None, e))?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for e in experiments {
        w.write_record([
            e.id.clone(),
            e.theta_hat.to_string(),
            e.sigma_hat.to_string(),
            e.selected.to_string(),
            opt(e.replication_theta_hat),
            opt(e.replication_sigma_hat),
        ])
        .map_err(|e| csv_err(ctx, None, e))?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))
}

/// Read the unit-level long format, grouping rows by experiment in order of
/// first appearance.
pub fn read_unit_level(path: &Path) -> Result<Vec<(String, UnitLevelData)>> {
    let context = path.display().to_string();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let headers = rdr.headers().map_err(|e| csv_err(&context, Some(path), e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| parse_err(&context, 1, format!("missing column {name}")))
    };
    let (id_c, z_c, y_c) = (col("experiment_id")?, col("z")?, col("y")?);
    col("unit_id")?;

    let mut order: Vec<(String, UnitLevelData)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| csv_err(&context, Some(path), e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let id = record.get(id_c).unwrap_or("").to_string();
        let z = match record.get(z_c).unwrap_or("").trim() {
            "1" => true,
            "0" => false,
            other => return Err(parse_err(&context, line, format!("column z: '{other}' is not 0 or 1"))),
        };
        let y = parse_f64(&context, line, "y", record.get(y_c).unwrap_or(""))?;
        let k = *index.entry(id.clone()).or_insert_with(|| {
            order.push((
                id,
                UnitLevelData {
                    outcomes: Vec::new(),
                    assignments: Vec::new(),
                },
            ));
            order.len() - 1
        });
        order[k].1.outcomes.push(y);
        order[k].1.assignments.push(z);
    }
    Ok(order)
}

pub fn write_estimates<W: Write>(writer: W, rows: &[(String, PosteriorSummary)]) -> Result<()> {
    let ctx = "estimate output";
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ESTIMATE_COLUMNS).map_err(|e| csv_err(ctx, None, e))?;
    for (id, p) in rows {
        w.write_record([
            id.clone(),
            p.method.to_string(),
            p.mean.to_string(),
            p.variance.to_string(),
            p.interval_low.to_string(),
            p.interval_high.to_string(),
            p.level.to_string(),
            p.lambda_used.map(|l| l.to_string()).unwrap_or_default(),
            p.converged.to_string(),
        ])
        .map_err(|e| csv_err(ctx, None, e))?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))
}

pub fn read_estimates_from<R: Read>(reader: R, context: &str) -> Result<Vec<(String, PosteriorSummary)>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(context, None, e))?.clone();
    if headers.iter().ne(ESTIMATE_COLUMNS.iter().copied()) {
        return Err(parse_err(context, 1, format!("expected columns {}", ESTIMATE_COLUMNS.join(","))));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let r = record.map_err(|e| csv_err(context, None, e))?;
        let line = r.position().map(|p| p.line()).unwrap_or(0);
        let f = |i: usize| parse_f64(context, line, ESTIMATE_COLUMNS[i], &r[i]);
        out.push((
            r[0].to_string(),
            PosteriorSummary {
                method: r[1].parse::<Method>().map_err(|e| parse_err(context, line, e.to_string()))?,
                mean: f(2)?,
                variance: f(3)?,
                interval_low: f(4)?,
                interval_high: f(5)?,
                level: f(6)?,
                lambda_used: parse_opt_f64(context, line, "lambda_used", Some(&r[7]))?,
                converged: parse_bool(&r[8]).ok_or_else(|| parse_err(context, line, "column converged: not a boolean"))?,
            },
        ));
    }
    Ok(out)
}

/// Persisted result of a prior calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationArtifact {
    pub report: CalibrationReport,
    /// SHA-256 of the corpus file the fit was computed from.
    pub corpus_sha256: String,
}

impl CalibrationArtifact {
    pub fn to_text(&self) -> String {
        let r = &self.report;
        let hp = &r.hyperparams;
        format!(
            "# prior calibration artifact\n\
             format = {ARTIFACT_FORMAT}\n\
             version = {ARTIFACT_VERSION}\n\
             method = {}\n\
             m0 = {}\n\
             tau = {}\n\
             a = {}\n\
             b = {}\n\
             n_experiments_used = {}\n\
             log_marginal_likelihood = {}\n\
             tau_floored = {}\n\
             corpus_sha256 = {}\n",
            r.method, hp.m0, hp.tau, hp.a, hp.b, r.n_experiments_used, r.log_marginal_likelihood, r.tau_floored, self.corpus_sha256
        )
    }

    pub fn parse(text: &str, context: &str) -> Result<Self> {
        let mut map: HashMap<&str, (u64, &str)> = HashMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err(context, i as u64 + 1, "expected 'key = value'"))?;
            map.insert(k.trim(), (i as u64 + 1, v.trim()));
        }
        let get = |k: &str| map.get(k).copied().ok_or_else(|| parse_err(context, 0, format!("missing key {k}")));
        let num = |k: &str| -> Result<f64> {
            let (line, v) = get(k)?;
            parse_f64(context, line, k, v)
        };
        let (line, format) = get("format")?;
        if format != ARTIFACT_FORMAT {
            return Err(parse_err(context, line, format!("unexpected format '{format}'")));
        }
        let (line, version) = get("version")?;
        if version != ARTIFACT_VERSION.to_string() {
            return Err(parse_err(context, line, format!("unsupported version {version}")));
        }
        let (line, method) = get("method")?;
        let method: CalibrationMethod = method.parse().map_err(|e: Error| parse_err(context, line, e.to_string()))?;
        let (line, n) = get("n_experiments_used")?;
        let n_experiments_used = n
            .parse::<usize>()
            .map_err(|_| parse_err(context, line, "n_experiments_used must be an integer"))?;
        let (line, floored) = get("tau_floored")?;
        let hyperparams = HyperParams::new(num("m0")?, num("tau")?, num("a")?, num("b")?)
            .map_err(|e| parse_err(context, 0, e.to_string()))?;
        Ok(Self {
            report: CalibrationReport {
                hyperparams,
                n_experiments_used,
                log_marginal_likelihood: num("log_marginal_likelihood")?,
                method,
                tau_floored: parse_bool(floored).ok_or_else(|| parse_err(context, line, "tau_floored must be a boolean"))?,
            },
            corpus_sha256: get("corpus_sha256")?.1.to_string(),
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        create(path)?.write_all(self.to_text().as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut text = String::new();
        for line in BufReader::new(file).lines() {
            text.push_str(&line.map_err(|e| Error::io(path, e))?);
            text.push('\n');
        }
        Self::parse(&text, &path.display().to_string())
    }
}

pub fn write_metric_table_to<W: Write>(writer: W, rows: &[MetricsRow]) -> Result<()> {
    let ctx = "metric table";
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(METRIC_COLUMNS).map_err(|e| csv_err(ctx, None, e))?;
    for r in rows {
        for (metric, value) in [("mse", r.mse), ("bias", r.bias), ("coverage", r.coverage)] {
            w.write_record([
                r.method.to_string(),
                r.sweep_variable.to_string(),
                r.sweep_value.to_string(),
                metric.to_string(),
                value.to_string(),
                r.n_selected.to_string(),
                r.seed.to_string(),
            ])
            .map_err(|e| csv_err(ctx, None, e))?;
        }
    }
    w.flush().map_err(|e| Error::io(ctx, e))
}

pub fn write_metric_table(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_metric_table_to(create(path)?, rows).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Inverse of [`write_metric_table_to`]: regroups the long table into rows.
pub fn read_metric_table_from<R: Read>(reader: R, context: &str) -> Result<Vec<MetricsRow>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers().map_err(|e| csv_err(context, None, e))?.clone();
    if headers.iter().ne(METRIC_COLUMNS.iter().copied()) {
        return Err(parse_err(context, 1, format!("expected columns {}", METRIC_COLUMNS.join(","))));
    }
    let mut rows: Vec<MetricsRow> = Vec::new();
    for record in rdr.records() {
        let r = record.map_err(|e| csv_err(context, None, e))?;
        let line = r.position().map(|p| p.line()).unwrap_or(0);
        let method: Method = r[0].parse().map_err(|e: Error| parse_err(context, line, e.to_string()))?;
        let sweep_variable: SweepVariable = r[1].parse().map_err(|e: Error| parse_err(context, line, e.to_string()))?;
        let sweep_value = parse_f64(context, line, "sweep_value", &r[2])?;
        let value = parse_f64(context, line, "value", &r[4])?;
        let n_selected = r[5].parse().map_err(|_| parse_err(context, line, "n_selected must be an integer"))?;
        let seed = r[6].parse().map_err(|_| parse_err(context, line, "seed must be an integer"))?;
        let pos = rows.iter().position(|x| {
            x.method == method && x.sweep_variable == sweep_variable && x.sweep_value.to_bits() == sweep_value.to_bits()
        });
        let idx = match pos {
            Some(i) => i,
            None => {
                rows.push(MetricsRow {
                    method,
                    sweep_variable,
                    sweep_value,
                    mse: f64::NAN,
                    bias: f64::NAN,
                    coverage: f64::NAN,
                    n_selected,
                    seed,
                });
                rows.len() - 1
            }
        };
        match &r[3] {
            "mse" => rows[idx].mse = value,
            "bias" => rows[idx].bias = value,
            "coverage" => rows[idx].coverage = value,
            other => return Err(parse_err(context, line, format!("unknown metric '{other}'"))),
        }
    }
    Ok(rows)
}

pub fn read_metric_table(path: &Path) -> Result<Vec<MetricsRow>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_metric_table_from(file, &path.display().to_string())
}

pub const CHECK_COLUMNS: [&str; 7] = ["id", "method", "statistic", "target", "observed", "tail_area", "n_draws"];
pub const EVALUATION_COLUMNS: [&str; 6] = ["method", "mae", "coverage", "n_pairs", "level", "coverage_mode"];

/// One row of the predictive-check table.
#[derive(Debug, Clone, PartialEq)]
pub struct CheckRow {
    pub id: String,
    pub method: Method,
    pub target: CheckTarget,
    pub result: PredictiveCheckResult,
}

pub fn write_check_results<W: Write>(writer: W, rows: &[CheckRow]) -> Result<()> {
    let ctx = "check output";
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CHECK_COLUMNS).map_err(|e| csv_err(ctx, None, e))?;
    for r in rows {
        let target = match r.target {
            CheckTarget::Observed => "observed",
            CheckTarget::Replication => "replication",
        };
        w.write_record([
            r.id.clone(),
            r.method.to_string(),
            r.result.statistic_name.clone(),
            target.to_string(),
            r.result.observed.to_string(),
            r.result.tail_area.to_string(),
            r.result.replicated.len().to_string(),
        ])
        .map_err(|e| csv_err(ctx, None, e))?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))
}

pub fn write_evaluations<W: Write>(writer: W, rows: &[(ReplicationEvaluation, f64, CoverageMode)]) -> Result<()> {
    let ctx = "evaluation output";
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(EVALUATION_COLUMNS).map_err(|e| csv_err(ctx, None, e))?;
    for (r, level, mode) in rows {
        let mode = match mode {
            CoverageMode::PointEstimate => "point-estimate",
            CoverageMode::IntervalOverlap => "interval-overlap",
        };
        w.write_record([
            r.method.to_string(),
            r.mae.to_string(),
            r.coverage.to_string(),
            r.n_pairs.to_string(),
            level.to_string(),
            mode.to_string(),
        ])
        .map_err(|e| csv_err(ctx, None, e))?;
    }
    w.flush().map_err(|e| Error::io(ctx, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_parses_optional_columns() {
        let text = "id,theta_hat,sigma_hat,selected,replication_theta_hat,replication_sigma_hat\n\
                    a,1.1,0.1,true,1.05,0.1\n\
                    b,0.9,0.2,0,,\n";
        let c = read_corpus_from(text.as_bytes(), "t").unwrap();
        assert!(c.has_selected_column);
        assert_eq!(c.experiments.len(), 2);
        assert_eq!(c.experiments[0].replication_theta_hat, Some(1.05));
        assert!(!c.experiments[1].selected);
        assert_eq!(c.experiments[1].replication_theta_hat, None);
    }

    #[test]
    fn corpus_defaults_selected() {
        let c = read_corpus_from("id,theta_hat,sigma_hat\nx,1,0.5\n".as_bytes(), "t").unwrap();
        assert!(!c.has_selected_column);
        assert!(c.experiments[0].selected);
    }

    #[test]
    fn corpus_errors_name_the_line() {
        let err = read_corpus_from("id,theta_hat,sigma_hat\nx,1,0.5\ny,1,-0.5\n".as_bytes(), "t").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = read_corpus_from("id,theta_hat,sigma_hat\nx,abc,0.5\n".as_bytes(), "t").unwrap_err();
        assert!(err.to_string().contains("line 2"));
        assert!(read_corpus_from("id,theta\nx,1\n".as_bytes(), "t").is_err());
    }

    #[test]
    fn artifact_round_trip() {
        let art = CalibrationArtifact {
            report: CalibrationReport {
                hyperparams: HyperParams::new(1.0 / 3.0, 1e-12, 3.0, 3.5).unwrap(),
                n_experiments_used: 12,
                log_marginal_likelihood: -17.123_456_789_012_345,
                method: CalibrationMethod::MarginalMle,
                tau_floored: true,
            },
            corpus_sha256: fingerprint(b"abc"),
        };
        assert_eq!(CalibrationArtifact::parse(&art.to_text(), "t").unwrap(), art);
        assert_eq!(
            art.corpus_sha256,
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let bad = art.to_text().replace("version = 1", "version = 9");
        assert!(CalibrationArtifact::parse(&bad, "t").is_err());
    }

    #[test]
    fn metric_table_round_trip() {
        let rows: Vec<MetricsRow> = Method::ALL
            .iter()
            .flat_map(|&m| {
                [0.0, 0.1, 2.5].into_iter().map(move |v| MetricsRow {
                    method: m,
                    sweep_variable: SweepVariable::Rho,
                    sweep_value: v,
                    mse: 0.1 + v / 7.0,
                    bias: -v / 3.0,
                    coverage: 0.9,
                    n_selected: 100,
                    seed: 7,
                })
            })
            .collect();
        let mut buf = Vec::new();
        write_metric_table_to(&mut buf, &rows).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().count(), 1 + 9 * 3);
        assert_eq!(read_metric_table_from(buf.as_slice(), "t").unwrap(), rows);
    }

    #[test]
    fn estimates_round_trip() {
        let p = PosteriorSummary {
            mean: 0.123,
            variance: 0.5,
            interval_low: -1.0,
            interval_high: 1.2,
            level: 0.9,
            method: Method::HybridShrinkage,
            lambda_used: Some(1.75),
            converged: true,
        };
        let fv = PosteriorSummary { lambda_used: None, method: Method::FaceValue, ..p.clone() };
        let rows = vec![("a".to_string(), p), ("b".to_string(), fv)];
        let mut buf = Vec::new();
        write_estimates(&mut buf, &rows).unwrap();
        assert_eq!(read_estimates_from(buf.as_slice(), "t").unwrap(), rows);
    }
}
