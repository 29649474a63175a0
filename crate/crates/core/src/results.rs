//! Results files, written in a canonical JSON form: sorted keys, floats with
//! six decimals, `null` for undefined values. Saving what was loaded
//! reproduces the file byte for byte.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::metrics::{aggregate, MetricsError, MetricsReport, ScenarioOutcome};
use crate::predictor::PredictorKind;

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ResultsError {
    #[error("cannot write {path}: {source}")]
    Write { path: String, source: std::io::Error },
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: malformed results JSON: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("unsupported results schema_version {0}")]
    SchemaVersion(u32),
    #[error("results must contain at least one scenario outcome")]
    Empty,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// Everything needed to re-run the experiment that produced a results file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub predictor: PredictorKind,
    pub seed: u64,
    pub relation_threshold: f64,
    pub relation_model: String,
    pub horizon_steps: usize,
    pub reactive: bool,
    pub samples_k: usize,
    pub prediction_horizon_seconds: f64,
    pub observation_seconds: f64,
    pub scenario_source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsFile {
    pub schema_version: u32,
    pub config: ConfigEcho,
    /// Sorted by scenario id.
    pub outcomes: Vec<ScenarioOutcome>,
    pub report: MetricsReport,
}

impl ResultsFile {
    /// Sorts the outcomes and computes the report.
    pub fn new(config: ConfigEcho, mut outcomes: Vec<ScenarioOutcome>) -> Result<ResultsFile, ResultsError> {
        if outcomes.is_empty() {
            return Err(ResultsError::Empty);
        }
        outcomes.sort_by(|a, b| a.scenario_id.cmp(&b.scenario_id));
        let report = aggregate(&outcomes)?;
        Ok(ResultsFile { schema_version: RESULTS_SCHEMA_VERSION, config, outcomes, report })
    }

    pub fn scenario_ids(&self) -> Vec<&str> {
        self.outcomes.iter().map(|o| o.scenario_id.as_str()).collect()
    }

    pub fn to_canonical_json(&self) -> Result<String, ResultsError> {
        if self.outcomes.is_empty() {
            return Err(ResultsError::Empty);
        }
        let value = serde_json::to_value(self).expect("results serialize to a JSON value");
        Ok(canonical_json(&value))
    }
}

/// Renders `value` with two-space indentation, keys sorted, every
/// non-integer number at six decimals and negative zero printed as zero.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_value(&mut out, value, 0);
    out.push('\n');
    out
}

fn write_value(out: &mut String, v: &Value, depth: usize) {
    let pad = |out: &mut String, d: usize| out.extend(std::iter::repeat_n("  ", d));
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if n.is_f64() {
                let f = n.as_f64().expect("f64 number");
                let s = format!("{f:.6}");
                out.push_str(if s == "-0.000000" { "0.000000" } else { &s });
            } else {
                write!(out, "{n}").expect("write to string");
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).expect("string serializes")),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                pad(out, depth + 1);
                write_value(out, item, depth + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                pad(out, depth + 1);
                out.push_str(&serde_json::to_string(k).expect("key serializes"));
                out.push_str(": ");
                write_value(out, &map[*k], depth + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            pad(out, depth);
            out.push('}');
        }
    }
}

/// Writes atomically: the file appears complete or not at all.
pub fn save_results(results: &ResultsFile, path: &FsPath) -> Result<(), ResultsError> {
    let text = results.to_canonical_json()?;
    write_atomically(path, text.as_bytes())
}

pub(crate) fn write_atomically(path: &FsPath, bytes: &[u8]) -> Result<(), ResultsError> {
    let err = |source| ResultsError::Write { path: path.display().to_string(), source };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => FsPath::new("."),
    };
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = dir.join(format!(".{name}.partial"));
    let mut f = fs::File::create(&tmp).map_err(err)?;
    f.write_all(bytes).and_then(|()| f.sync_all()).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        err(e)
    })?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        err(e)
    })
}

pub fn load_results(path: &FsPath) -> Result<ResultsFile, ResultsError> {
    let text =
        fs::read_to_string(path).map_err(|source| ResultsError::Read { path: path.display().to_string(), source })?;
    let file: ResultsFile = serde_json::from_str(&text)
        .map_err(|source| ResultsError::Json { path: path.display().to_string(), source })?;
    if file.schema_version != RESULTS_SCHEMA_VERSION {
        return Err(ResultsError::SchemaVersion(file.schema_version));
    }
    if file.outcomes.is_empty() {
        return Err(ResultsError::Empty);
    }
    Ok(file)
}
