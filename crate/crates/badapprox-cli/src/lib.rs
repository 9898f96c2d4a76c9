//! Batch experiment runner: JSON configuration in, seeded runs of the
//! `badapprox` library, [`RunRecord`]s and CSV tables out.

pub mod config;
pub mod experiments;
pub mod record;

use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde_json::{Map, Value};

pub use config::{Experiment, ExperimentConfig, FSpec, PsiSpec, TreeChoice};
pub use record::RunRecord;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),
    #[error(transparent)]
    Library(#[from] badapprox::Error),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// 2 for validation errors, 3 for exceeded budgets, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use badapprox::Error as E;
        match self {
            CliError::Validation(_) => 2,
            CliError::Library(e) if e.is_budget() => 3,
            CliError::Library(E::InvalidArgument(_) | E::Precondition(_) | E::Domain(_) | E::DivergenceViolated(_)) => 2,
            CliError::Library(E::ExactMeasureRequiresSup | E::NormVolumeUnavailable(_) | E::Unsupported(_)) => 2,
            _ => 1,
        }
    }

    /// A hint for budget errors.
    pub fn hint(&self) -> Option<String> {
        match self {
            CliError::Library(badapprox::Error::BudgetExceeded { required, limit }) => Some(format!(
                "the run needs a budget of about {required} against a limit of {limit}; shrink the window, depth or Q"
            )),
            _ => None,
        }
    }
}

/// Parses a config document, rejecting unknown fields.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::Validation(vec![e.to_string()]))
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig, CliError> {
    parse_config(&std::fs::read_to_string(path)?)
}

/// Validates and runs one experiment.
pub fn run(exp: Experiment, cfg: &ExperimentConfig) -> Result<RunRecord, CliError> {
    let issues = cfg.issues(exp);
    if !issues.is_empty() {
        return Err(CliError::Validation(issues));
    }
    let out = experiments::run_experiment(exp, cfg)?;
    let mut config = cfg.clone();
    config.experiment = Some(exp);
    Ok(RunRecord {
        config,
        timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        version: env!("CARGO_PKG_VERSION").to_string(),
        results: out.results,
        rows: out.rows,
        regime: out.regime,
        comparisons: out.comparisons,
    })
}

/// Runs and, when an output directory is given, persists the record.
pub fn run_to(exp: Experiment, cfg: &ExperimentConfig, out: Option<&Path>) -> Result<RunRecord, CliError> {
    let rec = run(exp, cfg)?;
    if let Some(dir) = out {
        record::persist(&rec, dir, exp.name())?;
    }
    Ok(rec)
}

/// One row of a sweep.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub value: Value,
    pub outcome: Result<RunRecord, String>,
}

/// Column order of the combined sweep table.
pub fn sweep_header(param: &str, rows: &[SweepRow]) -> Vec<String> {
    let mut header = vec![param.to_string(), "status".to_string(), "error".to_string()];
    for r in rows {
        if let Ok(rec) = &r.outcome {
            for k in rec.results.keys() {
                if !header.contains(k) {
                    header.push(k.clone());
                }
            }
        }
    }
    header
}

fn parse_value(s: &str) -> Result<Value, String> {
    let s = s.trim();
    if let Ok(u) = s.parse::<u64>() {
        return Ok(Value::from(u));
    }
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() => Ok(Value::from(x)),
        _ => Err(format!("'{s}' is not a number")),
    }
}

fn sort_key(v: &Value) -> f64 {
    v.as_f64().unwrap_or(f64::NAN)
}

/// Reruns `template` once per value of `param`. Rows may run concurrently;
/// the result is sorted by the parameter. A failing row is kept with its
/// error and does not stop the sweep.
pub fn sweep(exp: Experiment, template: &ExperimentConfig, param: &str, values: &[String]) -> Result<Vec<SweepRow>, CliError> {
    let base = serde_json::to_value(template).map_err(|e| CliError::Validation(vec![e.to_string()]))?;
    let Value::Object(base) = base else { unreachable!("configs serialize to objects") };
    if !base.get(param).is_some_and(|v| !v.is_null()) {
        return Err(CliError::Validation(vec![format!("parameter '{param}' is not set in the template")]));
    }
    let parsed: Vec<Value> = values.iter().map(|v| parse_value(v)).collect::<Result<_, _>>().map_err(|e| CliError::Validation(vec![e]))?;
    let mut rows: Vec<SweepRow> = parsed
        .into_par_iter()
        .map(|value| {
            let mut obj: Map<String, Value> = base.clone();
            obj.insert(param.to_string(), value.clone());
            let outcome = serde_json::from_value::<ExperimentConfig>(Value::Object(obj))
                .map_err(|e| e.to_string())
                .and_then(|cfg| run(exp, &cfg).map_err(|e| e.to_string()));
            SweepRow { value, outcome }
        })
        .collect();
    rows.sort_by(|a, b| sort_key(&a.value).total_cmp(&sort_key(&b.value)));
    Ok(rows)
}

/// The combined sweep table as CSV bytes.
pub fn sweep_csv(param: &str, rows: &[SweepRow]) -> std::io::Result<Vec<u8>> {
    let header = sweep_header(param, rows);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            header
                .iter()
                .enumerate()
                .map(|(i, h)| match (i, &r.outcome) {
                    (0, _) => record::cell(Some(&r.value)),
                    (1, Ok(_)) => "ok".to_string(),
                    (1, Err(_)) => "error".to_string(),
                    (2, Ok(_)) => String::new(),
                    (2, Err(e)) => e.replace('\n', " "),
                    (_, Ok(rec)) => record::cell(rec.results.get(h)),
                    (_, Err(_)) => String::new(),
                })
                .collect()
        })
        .collect();
    record::table_csv(&header, &body)
}

/// Writes each row's record and the combined table into `dir`.
pub fn persist_sweep(exp: Experiment, param: &str, rows: &[SweepRow], dir: &Path) -> std::io::Result<()> {
    let sub = dir.join(format!("sweep_{param}"));
    for r in rows {
        if let Ok(rec) = &r.outcome {
            record::persist(rec, &sub, &format!("{}_{}", exp.name(), record::cell(Some(&r.value))))?;
        }
    }
    record::write_atomic(&dir.join(format!("sweep_{param}.csv")), &sweep_csv(param, rows)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn values_keep_integers_integral() {
        assert_eq!(parse_value("3").unwrap(), Value::from(3u64));
        assert_eq!(parse_value(" 0.25").unwrap(), Value::from(0.25));
        assert!(parse_value("nan").is_err());
        assert!(parse_value("abc").is_err());
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Validation(vec![]).exit_code(), 2);
        let budget = CliError::Library(badapprox::Error::BudgetExceeded { required: 10, limit: 1 });
        assert_eq!(budget.exit_code(), 3);
        assert!(budget.hint().unwrap().contains("10"));
        assert_eq!(CliError::Library(badapprox::Error::Precision("x".into())).exit_code(), 1);
    }
}
