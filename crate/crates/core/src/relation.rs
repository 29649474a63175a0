//! Yield/pass relation of a conflicting agent relative to the ego.
//!
//! A [`RelationModel`] maps conflict features to a yield probability. The
//! default [`HeuristicModel`] is a logistic over time-to-cross difference,
//! deceleration trend and signal state. [`TableModel`] replays
//! probabilities computed offline by an external model.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{Conflict, Relation};
use crate::geometry::{Agent, AgentId, AgentKind, Trajectory};
use crate::lane_map::LaneGraph;
use crate::planner::EgoPlan;

/// Time-to-cross cap, also used when a speed is close to zero.
pub const TIME_TO_CROSS_CAP: f64 = 8.0;

/// Speeds below this are treated as this value in time-to-cross.
pub const MIN_CROSS_SPEED: f64 = 0.1;

/// Average speed change over the history window (m/s²) below which the agent
/// counts as decelerating.
pub const DECELERATING_TREND: f64 = -0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationFeatures {
    pub agent_speed: f64,
    pub ego_speed: f64,
    pub agent_cross_distance: f64,
    pub ego_cross_distance: f64,
    pub agent_time_to_cross: f64,
    pub ego_time_to_cross: f64,
    pub agent_kind: AgentKind,
    pub agent_decelerating: bool,
    pub signal_state: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelationEstimate {
    pub p_yield: f64,
}

/// Identifies one relation query: which scenario, which agent, which step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RelationKey<'a> {
    pub scenario_id: &'a str,
    pub agent_id: AgentId,
    pub time_index: i64,
}

pub trait RelationModel: Send + Sync + fmt::Debug {
    fn name(&self) -> &str;
    fn estimate(&self, key: &RelationKey<'_>, features: &RelationFeatures) -> RelationEstimate;
}

pub fn time_to_cross(distance: f64, speed: f64) -> f64 {
    (distance / speed.max(MIN_CROSS_SPEED)).min(TIME_TO_CROSS_CAP)
}

fn is_decelerating(history: &Trajectory) -> bool {
    let n = history.len();
    if n < 2 {
        return false;
    }
    let dv = history.last().speed - history.first().speed;
    dv / ((n - 1) as f64 * crate::geometry::STEP_SECONDS) < DECELERATING_TREND
}

/// Features of the conflict between `sample` (a prediction of `agent`) and
/// the ego plan; `conflict` has the plan as side `a` and the sample as `b`.
/// The agent's cross distance includes the step from its current position
/// to the first predicted state.
pub fn extract_features(
    agent: &Agent,
    sample: &Trajectory,
    ego_plan: &EgoPlan,
    conflict: &Conflict,
    graph: &LaneGraph,
) -> RelationFeatures {
    let cur = agent.current();
    let agent_speed = cur.speed;
    let ego_speed = ego_plan.trajectory.first().speed;
    let agent_cross_distance = cur.position.distance(sample.first().position) + conflict.distance_b;
    let ego_cross_distance = conflict.distance_a;
    let signal_state = graph
        .aligned_lanes(cur.position, cur.heading, 0.5)
        .ok()
        .and_then(|l| l.first().copied())
        .is_some_and(|(id, d)| d <= 10.0 && graph.lane(id).is_ok_and(|l| l.signal_red));
    RelationFeatures {
        agent_speed,
        ego_speed,
        agent_cross_distance,
        ego_cross_distance,
        agent_time_to_cross: time_to_cross(agent_cross_distance, agent_speed),
        ego_time_to_cross: time_to_cross(ego_cross_distance, ego_speed),
        agent_kind: agent.kind,
        agent_decelerating: is_decelerating(&agent.history),
        signal_state,
    }
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeuristicModel {
    /// Weight on the time-to-cross difference, per second.
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for HeuristicModel {
    fn default() -> Self {
        HeuristicModel { alpha: 1.0, beta: 2.0, gamma: 4.0 }
    }
}

impl HeuristicModel {
    pub fn estimate_features(&self, f: &RelationFeatures) -> RelationEstimate {
        let x = self.alpha * (f.agent_time_to_cross - f.ego_time_to_cross)
            + self.beta * f64::from(u8::from(f.agent_decelerating))
            + self.gamma * f64::from(u8::from(f.signal_state));
        RelationEstimate { p_yield: logistic(x) }
    }
}

/// Default-weight heuristic estimate.
pub fn heuristic_estimate(features: &RelationFeatures) -> RelationEstimate {
    HeuristicModel::default().estimate_features(features)
}

impl RelationModel for HeuristicModel {
    fn name(&self) -> &str {
        "heuristic"
    }

    fn estimate(&self, _key: &RelationKey<'_>, features: &RelationFeatures) -> RelationEstimate {
        self.estimate_features(features)
    }
}

/// Yield iff `p_yield >= threshold`.
pub fn decide_relation(estimate: RelationEstimate, threshold: f64) -> Relation {
    if estimate.p_yield >= threshold {
        Relation::Yield
    } else {
        Relation::Pass
    }
}

#[derive(Debug, Error)]
pub enum TableError {
    #[error("cannot read relation table {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("relation table line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Probabilities keyed by `(scenario id, agent id, time index)`, falling back
/// to a heuristic for missing keys.
///
/// Text format, one record per line, fields separated by whitespace:
///
/// ```text
/// # scenario_id agent_id time_index p_yield
/// left_turn_0003 2 10 0.82
/// ```
#[derive(Debug, Clone, Default)]
pub struct TableModel {
    table: BTreeMap<(String, u64, i64), f64>,
    fallback: HeuristicModel,
}

impl TableModel {
    pub fn parse(text: &str) -> Result<TableModel, TableError> {
        let mut table = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |reason: String| TableError::Parse { line: n + 1, reason };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(err(format!("expected 4 fields, found {}", fields.len())));
            }
            let agent: u64 = fields[1].parse().map_err(|e| err(format!("agent_id: {e}")))?;
            let time: i64 = fields[2].parse().map_err(|e| err(format!("time_index: {e}")))?;
            let p: f64 = fields[3].parse().map_err(|e| err(format!("p_yield: {e}")))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(err(format!("p_yield {p} outside [0, 1]")));
            }
            table.insert((fields[0].to_string(), agent, time), p);
        }
        Ok(TableModel { table, fallback: HeuristicModel::default() })
    }

    pub fn load(path: &FsPath) -> Result<TableModel, TableError> {
        let text =
            fs::read_to_string(path).map_err(|source| TableError::Io { path: path.display().to_string(), source })?;
        TableModel::parse(&text)
    }

    pub fn with_fallback(mut self, fallback: HeuristicModel) -> Self {
        self.fallback = fallback;
        self
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }
}

impl RelationModel for TableModel {
    fn name(&self) -> &str {
        "table"
    }

    fn estimate(&self, key: &RelationKey<'_>, features: &RelationFeatures) -> RelationEstimate {
        match self.table.get(&(key.scenario_id.to_string(), key.agent_id.0, key.time_index)) {
            Some(&p_yield) => RelationEstimate { p_yield },
            None => self.fallback.estimate_features(features),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn features(agent_ttc: f64, ego_ttc: f64) -> RelationFeatures {
        RelationFeatures {
            agent_speed: 5.0,
            ego_speed: 5.0,
            agent_cross_distance: agent_ttc * 5.0,
            ego_cross_distance: ego_ttc * 5.0,
            agent_time_to_cross: agent_ttc,
            ego_time_to_cross: ego_ttc,
            agent_kind: AgentKind::Vehicle,
            agent_decelerating: false,
            signal_state: false,
        }
    }

    #[test]
    fn time_to_cross_rules() {
        assert_eq!(time_to_cross(10.0, 0.0), 8.0);
        assert!((time_to_cross(10.0, 5.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn heuristic_values() {
        assert_eq!(heuristic_estimate(&features(3.0, 3.0)).p_yield, 0.5);
        let late = heuristic_estimate(&features(7.0, 1.0)).p_yield;
        assert!((late - 0.997_527_376).abs() < 1e-8, "{late}");
        let early = heuristic_estimate(&features(1.0, 7.0)).p_yield;
        assert!((early - 0.002_472_623).abs() < 1e-8, "{early}");
        assert!((late + early - 1.0).abs() < 1e-12);
    }

    #[test]
    fn heuristic_stays_below_one() {
        let mut f = features(TIME_TO_CROSS_CAP, 0.0);
        f.agent_decelerating = true;
        f.signal_state = true;
        assert!(heuristic_estimate(&f).p_yield < 1.0);
    }

    #[test]
    fn decision_boundary() {
        let e = |p_yield| RelationEstimate { p_yield };
        assert_eq!(decide_relation(e(0.9), 0.5), Relation::Yield);
        assert_eq!(decide_relation(e(0.2), 0.5), Relation::Pass);
        assert_eq!(decide_relation(e(0.5), 0.5), Relation::Yield);
    }

    #[test]
    fn table_lookup_and_fallback() {
        let t = TableModel::parse("# comment\nscn_a 2 10 0.8\n\nscn_a 3 10 0.1 # trailing\n").unwrap();
        assert_eq!(t.len(), 2);
        let key = RelationKey { scenario_id: "scn_a", agent_id: AgentId(2), time_index: 10 };
        assert_eq!(t.estimate(&key, &features(0.0, 0.0)).p_yield, 0.8);
        let missing = RelationKey { time_index: 11, ..key };
        assert_eq!(t.estimate(&missing, &features(2.0, 2.0)).p_yield, 0.5);
    }

    #[test]
    fn table_rejects_bad_lines() {
        assert!(TableModel::parse("a 1 2").is_err());
        assert!(TableModel::parse("a 1 2 1.5").is_err());
        assert!(TableModel::parse("a x 2 0.5").is_err());
    }
}
