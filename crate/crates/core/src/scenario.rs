//! Scenario files: the versioned JSON format scenarios are loaded from, and
//! the validated in-memory [`Scenario`].
//!
//! Histories hold exactly 12 states (1.1 s at 10 Hz); the last one is the
//! current state, at time index 11. Ground-truth futures, when present,
//! start at time index 12.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path as FsPath;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{ConflictClass, Relation};
use crate::geometry::{Agent, AgentId, AgentKind, AgentState, Dimensions, Point2, Trajectory};
use crate::lane_map::{Lane, LaneGraph, LaneId};

pub const SCHEMA_VERSION: u32 = 1;

/// Number of observed states per agent.
pub const HISTORY_STATES: usize = 12;

/// Time index of the current (last observed) state.
pub const CURRENT_TIME_INDEX: i64 = HISTORY_STATES as i64 - 1;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: malformed scenario JSON: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("unsupported schema_version {found} (expected {SCHEMA_VERSION})")]
    SchemaVersion { found: u32 },
    #[error("{field}: {reason}")]
    Invalid { field: String, reason: String },
}

fn invalid(field: impl Into<String>, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { field: field.into(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaneRecord {
    pub id: u64,
    pub centerline: Vec<Point2>,
    pub speed_limit: f64,
    #[serde(default)]
    pub successors: Vec<u64>,
    #[serde(default)]
    pub signal_red: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateRecord {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
    pub speed: f64,
}

impl StateRecord {
    pub fn from_state(s: &AgentState) -> Self {
        StateRecord { x: s.position.x, y: s.position.y, heading: s.heading, speed: s.speed }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: u64,
    pub kind: AgentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub length: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<f64>,
    pub history: Vec<StateRecord>,
}

/// Interaction a synthetic scenario was built around.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyInteraction {
    pub agent_id: u64,
    /// Relation of the agent to the ego under constant behavior.
    pub relation: Relation,
    pub class: ConflictClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioFile {
    pub schema_version: u32,
    pub scenario_id: String,
    pub lanes: Vec<LaneRecord>,
    pub agents: Vec<AgentRecord>,
    pub ego_agent_id: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ego_goal: Option<Point2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_futures: Option<BTreeMap<u64, Vec<StateRecord>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub key_interaction: Option<KeyInteraction>,
}

/// Validated scenario ready for simulation.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub id: String,
    pub graph: LaneGraph,
    /// All agents including the ego, in file order.
    pub agents: Vec<Agent>,
    pub ego_id: AgentId,
    pub ego_goal: Option<Point2>,
    pub futures: BTreeMap<AgentId, Trajectory>,
    pub key_interaction: Option<KeyInteraction>,
}

impl Scenario {
    pub fn ego(&self) -> &Agent {
        self.agents.iter().find(|a| a.id == self.ego_id).expect("validated ego")
    }

    /// Every agent except the ego.
    pub fn traffic(&self) -> impl Iterator<Item = &Agent> {
        self.agents.iter().filter(move |a| a.id != self.ego_id)
    }
}

fn trajectory(records: &[StateRecord], t0: i64, field: &str) -> Result<Trajectory, ScenarioError> {
    let states = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            AgentState::new(Point2::new(r.x, r.y), r.heading, r.speed, t0 + i as i64)
                .map_err(|e| invalid(format!("{field}[{i}]"), e.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Trajectory::new(states).map_err(|e| invalid(field, e.to_string()))
}

impl ScenarioFile {
    /// Checks every invariant and builds the in-memory scenario.
    pub fn validate(&self) -> Result<Scenario, ScenarioError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ScenarioError::SchemaVersion { found: self.schema_version });
        }
        if self.scenario_id.trim().is_empty() {
            return Err(invalid("scenario_id", "must not be empty"));
        }
        if self.scenario_id.chars().any(char::is_whitespace) {
            return Err(invalid("scenario_id", "must not contain whitespace"));
        }
        if self.lanes.is_empty() {
            return Err(invalid("lanes", "at least one lane is required"));
        }
        let lanes = self
            .lanes
            .iter()
            .enumerate()
            .map(|(i, l)| {
                Lane::new(
                    LaneId(l.id),
                    l.centerline.clone(),
                    l.speed_limit,
                    l.successors.iter().map(|&s| LaneId(s)).collect(),
                    l.signal_red,
                )
                .map_err(|e| invalid(format!("lanes[{i}]"), e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let graph = LaneGraph::new(lanes).map_err(|e| invalid("lanes", e.to_string()))?;

        let mut agents = Vec::with_capacity(self.agents.len());
        let mut seen = std::collections::BTreeSet::new();
        for (i, a) in self.agents.iter().enumerate() {
            let field = format!("agents[{i}]");
            if !seen.insert(a.id) {
                return Err(invalid(format!("{field}.id"), format!("duplicate agent id {}", a.id)));
            }
            if a.history.len() != HISTORY_STATES {
                return Err(invalid(
                    format!("{field}.history"),
                    format!("expected {HISTORY_STATES} states, found {}", a.history.len()),
                ));
            }
            let defaults = Dimensions::default_for(a.kind);
            let dims = Dimensions::new(a.length.unwrap_or(defaults.length), a.width.unwrap_or(defaults.width))
                .map_err(|e| invalid(format!("{field}.length/width"), e.to_string()))?;
            let history = trajectory(&a.history, 0, &format!("{field}.history"))?;
            agents.push(Agent { id: AgentId(a.id), kind: a.kind, dims, history });
        }
        if !seen.contains(&self.ego_agent_id) {
            return Err(invalid("ego_agent_id", format!("agent {} is not defined", self.ego_agent_id)));
        }
        if let Some(g) = self.ego_goal {
            if !g.is_finite() {
                return Err(invalid("ego_goal", "must be finite"));
            }
        }
        let mut futures = BTreeMap::new();
        if let Some(f) = &self.ground_truth_futures {
            for (id, states) in f {
                let field = format!("ground_truth_futures.{id}");
                if !seen.contains(id) {
                    return Err(invalid(field, "refers to an unknown agent"));
                }
                if states.is_empty() {
                    return Err(invalid(field, "must contain at least one state"));
                }
                futures.insert(AgentId(*id), trajectory(states, CURRENT_TIME_INDEX + 1, &field)?);
            }
        }
        if let Some(k) = self.key_interaction {
            if !seen.contains(&k.agent_id) || k.agent_id == self.ego_agent_id {
                return Err(invalid("key_interaction.agent_id", "must name a non-ego agent"));
            }
        }
        Ok(Scenario {
            id: self.scenario_id.clone(),
            graph,
            agents,
            ego_id: AgentId(self.ego_agent_id),
            ego_goal: self.ego_goal,
            futures,
            key_interaction: self.key_interaction,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("scenario serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &str) -> Result<ScenarioFile, ScenarioError> {
        serde_json::from_str(text).map_err(|source| ScenarioError::Json { path: origin.to_string(), source })
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: &FsPath) -> Result<(ScenarioFile, Scenario), ScenarioError> {
    let text =
        fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    let file = ScenarioFile::from_json(&text, &path.display().to_string())?;
    let scenario = file.validate().map_err(|e| match e {
        ScenarioError::Invalid { field, reason } => {
            ScenarioError::Invalid { field: format!("{}: {field}", path.display()), reason }
        }
        other => other,
    })?;
    Ok((file, scenario))
}

pub fn save_scenario(file: &ScenarioFile, path: &FsPath) -> Result<(), ScenarioError> {
    fs::write(path, file.to_json()).map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })
}
