//! Experiment runs: every scenario rolled out under each predictor with a
//! per-scenario seed shared across predictors, plus the comparison table.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path as FsPath, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::metrics::{outcome_from_rollout, MetricsReport, ScenarioOutcome};
use crate::planner::PlannerConfig;
use crate::predictor::{PredictorConfig, PredictorKind};
use crate::relation::RelationModel;
use crate::results::{ConfigEcho, ResultsError, ResultsFile};
use crate::scenario::{load_scenario, Scenario, ScenarioError, ScenarioFile};
use crate::simulator::{run_closed_loop, RolloutConfig, SimConfig, SimError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("cannot list scenario directory {path}: {source}")]
    ListDir { path: String, source: std::io::Error },
    #[error("no scenario files (*.json) in {0}")]
    NoScenarios(String),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("scenario {scenario}: {source}")]
    Rollout { scenario: String, source: SimError },
    #[error("duplicate scenario id {0}")]
    DuplicateId(String),
    #[error("worker count must be at least 1")]
    Workers,
    #[error("cannot start worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Results(#[from] ResultsError),
}

/// Loads every `*.json` file of `dir` in file-name order. The first failure
/// aborts the whole load.
pub fn load_scenario_dir(dir: &FsPath) -> Result<Vec<Scenario>, ExperimentError> {
    let list_err = |source| ExperimentError::ListDir { path: dir.display().to_string(), source };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(list_err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(list_err)?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "json"))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(ExperimentError::NoScenarios(dir.display().to_string()));
    }
    let scenarios = paths.iter().map(|p| load_scenario(p).map(|(_, s)| s)).collect::<Result<Vec<_>, _>>()?;
    check_unique(&scenarios)?;
    Ok(scenarios)
}

/// Validates generated or in-memory scenario files.
pub fn scenarios_from_files(files: &[ScenarioFile]) -> Result<Vec<Scenario>, ExperimentError> {
    let scenarios = files.iter().map(ScenarioFile::validate).collect::<Result<Vec<_>, _>>()?;
    check_unique(&scenarios)?;
    Ok(scenarios)
}

fn check_unique(scenarios: &[Scenario]) -> Result<(), ExperimentError> {
    let mut seen = BTreeSet::new();
    for s in scenarios {
        if !seen.insert(s.id.as_str()) {
            return Err(ExperimentError::DuplicateId(s.id.clone()));
        }
    }
    Ok(())
}

/// Seed of one scenario: the master seed mixed with a hash of its id, so it
/// does not depend on the predictor or on the order of the batch.
pub fn scenario_seed(master: u64, scenario_id: &str) -> u64 {
    // FNV-1a over the id, then a splitmix64 finalizer.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in scenario_id.bytes() {
        h = (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = master.wrapping_add(h).wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Settings shared by all predictors of one experiment.
#[derive(Debug, Clone)]
pub struct ExperimentSettings {
    pub seed: u64,
    pub horizon_steps: usize,
    pub reactive: bool,
    pub planner: PlannerConfig,
    pub predictor: PredictorConfig,
    pub scenario_source: String,
    pub workers: usize,
}

impl Default for ExperimentSettings {
    fn default() -> Self {
        ExperimentSettings {
            seed: 0,
            horizon_steps: SimConfig::default().horizon_steps,
            reactive: true,
            planner: PlannerConfig::default(),
            predictor: PredictorConfig::default(),
            scenario_source: String::new(),
            workers: 1,
        }
    }
}

/// One outcome per scenario, in input order.
pub fn run_outcomes(
    scenarios: &[Scenario],
    kind: PredictorKind,
    model: &dyn RelationModel,
    settings: &ExperimentSettings,
) -> Result<Vec<ScenarioOutcome>, ExperimentError> {
    if settings.workers == 0 {
        return Err(ExperimentError::Workers);
    }
    let one = |s: &Scenario| {
        let sim = SimConfig {
            horizon_steps: settings.horizon_steps,
            seed: scenario_seed(settings.seed, &s.id),
            reactive: settings.reactive,
            ..SimConfig::default()
        };
        let cfg = RolloutConfig {
            predictor: kind,
            model,
            planner: &settings.planner,
            predictor_config: &settings.predictor,
            sim: &sim,
        };
        run_closed_loop(s, cfg)
            .map(|r| outcome_from_rollout(&r))
            .map_err(|source| ExperimentError::Rollout { scenario: s.id.clone(), source })
    };
    if settings.workers == 1 {
        return scenarios.iter().map(one).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(settings.workers)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    pool.install(|| scenarios.par_iter().map(one).collect())
}

/// Runs one predictor over all scenarios and assembles its results file.
pub fn run_predictor(
    scenarios: &[Scenario],
    kind: PredictorKind,
    model: &dyn RelationModel,
    settings: &ExperimentSettings,
) -> Result<ResultsFile, ExperimentError> {
    let outcomes = run_outcomes(scenarios, kind, model, settings)?;
    let echo = ConfigEcho {
        predictor: kind,
        seed: settings.seed,
        relation_threshold: settings.predictor.relation_threshold,
        relation_model: model.name().to_string(),
        horizon_steps: settings.horizon_steps,
        reactive: settings.reactive,
        samples_k: settings.predictor.samples_k,
        prediction_horizon_seconds: settings.predictor.horizon_seconds,
        observation_seconds: settings.predictor.observation_seconds,
        scenario_source: settings.scenario_source.clone(),
    };
    Ok(ResultsFile::new(echo, outcomes)?)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CompareError {
    #[error("nothing to compare")]
    Empty,
    #[error("results for {first} and {other} cover different scenario sets")]
    MismatchedScenarios { first: String, other: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Better {
    Lower,
    Higher,
}

struct Column {
    title: &'static str,
    better: Better,
    percent: bool,
    get: fn(&MetricsReport) -> Option<f64>,
}

const COLUMNS: [Column; 8] = [
    Column { title: "minADE[m]", better: Better::Lower, percent: false, get: |r| r.min_ade_mean },
    Column { title: "minFDE[m]", better: Better::Lower, percent: false, get: |r| r.min_fde_mean },
    Column { title: "Recall@1", better: Better::Higher, percent: true, get: |r| r.conflict_recall_top1 },
    Column { title: "Recall@K", better: Better::Higher, percent: true, get: |r| r.conflict_recall_topk },
    Column { title: "RelationAcc", better: Better::Higher, percent: true, get: |r| r.relation_accuracy },
    Column { title: "Collision", better: Better::Lower, percent: true, get: |r| Some(r.collision_rate) },
    Column { title: "Progress[m]", better: Better::Higher, percent: false, get: |r| Some(r.progress_mean) },
    Column { title: "Stuck", better: Better::Lower, percent: true, get: |r| Some(r.stuck_rate) },
];

fn cell(v: Option<f64>, percent: bool) -> String {
    match v {
        None => "n/a".into(),
        Some(x) if percent => format!("{:.2}%", 100.0 * x),
        Some(x) => format!("{x:.2}"),
    }
}

/// Table with one row per results file. The best value of each column,
/// compared at display precision, is marked with `*`.
pub fn compare(results: &[ResultsFile]) -> Result<String, CompareError> {
    let first = results.first().ok_or(CompareError::Empty)?;
    let ids = first.scenario_ids();
    for r in &results[1..] {
        if r.scenario_ids() != ids {
            return Err(CompareError::MismatchedScenarios {
                first: first.config.predictor.label().into(),
                other: r.config.predictor.label().into(),
            });
        }
    }
    let mut rows: Vec<Vec<String>> = results.iter().map(|r| vec![r.config.predictor.label().to_string()]).collect();
    for col in &COLUMNS {
        let texts: Vec<String> = results.iter().map(|r| cell((col.get)(&r.report), col.percent)).collect();
        let shown: Vec<Option<f64>> = results
            .iter()
            .map(|r| {
                (col.get)(&r.report).map(|x| if col.percent { (x * 10000.0).round() } else { (x * 100.0).round() })
            })
            .collect();
        let best = shown.iter().flatten().copied().reduce(|a, b| match col.better {
            Better::Lower => a.min(b),
            Better::Higher => a.max(b),
        });
        let mark = results.len() > 1;
        for (i, t) in texts.into_iter().enumerate() {
            let star = mark && best.is_some() && shown[i] == best;
            rows[i].push(if star { format!("{t}*") } else { t });
        }
    }
    let mut header = vec!["Predictor".to_string()];
    header.extend(COLUMNS.iter().map(|c| c.title.to_string()));
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: &[String]| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(c, s)| if c == 0 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(&header);
    out.push('\n');
    out.push_str(&"-".repeat(out.len() - 1));
    out.push('\n');
    for r in &rows {
        out.push_str(&line(r));
        out.push('\n');
    }
    out.push_str(&format!("scenarios: {}; * marks the best value per column\n", ids.len()));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tests::fixture;

    fn results(kind: PredictorKind, outcomes: Vec<ScenarioOutcome>) -> ResultsFile {
        let echo = ConfigEcho {
            predictor: kind,
            seed: 0,
            relation_threshold: 0.5,
            relation_model: "heuristic".into(),
            horizon_steps: 80,
            reactive: true,
            samples_k: 6,
            prediction_horizon_seconds: 8.0,
            observation_seconds: 1.1,
            scenario_source: "fixture".into(),
        };
        ResultsFile::new(echo, outcomes).unwrap()
    }

    #[test]
    fn seeds_are_paired_and_spread() {
        assert_eq!(scenario_seed(3, "a"), scenario_seed(3, "a"));
        assert_ne!(scenario_seed(3, "a"), scenario_seed(3, "b"));
        assert_ne!(scenario_seed(3, "a"), scenario_seed(4, "a"));
    }

    #[test]
    fn identical_rows_for_identical_results() {
        let a = results(PredictorKind::P4P, fixture());
        let table = compare(&[a.clone(), a]).unwrap();
        let rows: Vec<&str> = table.lines().skip(2).take(2).collect();
        assert_eq!(rows[0], rows[1]);
        assert!(rows[0].contains("75.00%*"));
    }

    #[test]
    fn best_values_marked() {
        let a = results(PredictorKind::ConstantVelocity, fixture());
        let mut better = fixture();
        better[3].collision = false;
        better[2].conflict_events[0].identified_topk = true;
        let b = results(PredictorKind::P4P, better);
        let table = compare(&[a, b]).unwrap();
        let cells = |label: &str| -> Vec<String> {
            let line = table.lines().find(|l| l.starts_with(label)).unwrap();
            let t: Vec<&str> = line.split_whitespace().collect();
            t[t.len() - 8..].iter().map(|s| s.to_string()).collect()
        };
        let cv = cells("Constant Velocity");
        let p4p = cells("P4P");
        // Recall@K, collision: P4P better. Recall@1, stuck: tied, both marked.
        assert_eq!((cv[3].as_str(), p4p[3].as_str()), ("75.00%", "100.00%*"));
        assert_eq!((cv[5].as_str(), p4p[5].as_str()), ("10.00%", "0.00%*"));
        assert_eq!((cv[2].as_str(), p4p[2].as_str()), ("50.00%*", "50.00%*"));
        assert_eq!((cv[7].as_str(), p4p[7].as_str()), ("10.00%*", "10.00%*"));
        assert_eq!(cv[0], "n/a");
    }

    #[test]
    fn undefined_shows_na() {
        let mut f = fixture();
        f.iter_mut().for_each(|o| o.conflict_events.clear());
        let table = compare(&[results(PredictorKind::ConstantVelocity, f)]).unwrap();
        assert!(table.contains("n/a"));
        assert!(!table.contains('*') || table.contains("* marks"));
    }

    #[test]
    fn mismatched_sets_rejected() {
        let a = results(PredictorKind::ConstantVelocity, fixture());
        let mut f = fixture();
        f.pop();
        let b = results(PredictorKind::P4P, f);
        assert!(matches!(compare(&[a, b]), Err(CompareError::MismatchedScenarios { .. })));
    }
}
