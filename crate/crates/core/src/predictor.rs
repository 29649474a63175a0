//! Prediction sets: constant-velocity extrapolation, route-following
//! physics samples, pedestrian heading fans, and yield refinement.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{spatial_conflict_prepared, Footprints, Relation};
use crate::geometry::{heading_difference, Agent, AgentId, AgentKind, AgentState, Point2, Trajectory, STEP_SECONDS};
use crate::kinematics::advance;
use crate::lane_map::{enumerate_routes, LaneGraph, Route, DEFAULT_MAX_DEPTH};
use crate::path::{onboard, route_centerline, Path};
use crate::planner::EgoPlan;
use crate::relation::{decide_relation, extract_features, RelationKey, RelationModel};

/// Agents farther than this from every lane are predicted with constant
/// velocity.
pub const LANE_SEARCH_RADIUS: f64 = 10.0;

/// Lanes within this distance of the best heading-aligned lane are all
/// used as route starts.
pub const LANE_TIE_SLACK: f64 = 0.5;

/// Sample index used to pick the top-1 route sample (1 s ahead).
const TOP_PICK_INDEX: usize = 9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PredictorError {
    #[error("predictor config field {field} is invalid: {reason}")]
    InvalidConfig { field: &'static str, reason: &'static str },
    #[error("unknown predictor {0:?}; valid names: cv, p4p, p4p-norelation, nopredict, replay")]
    UnknownKind(String),
}

/// Speed held along predicted routes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpeedEstimate {
    /// Speed of the most recent observed state.
    #[default]
    LastStep,
    /// Mean speed over the observation window.
    WindowAverage,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictorConfig {
    pub samples_k: usize,
    pub horizon_seconds: f64,
    pub observation_seconds: f64,
    pub step_seconds: f64,
    /// Half-width of the pedestrian heading fan, radians.
    pub pedestrian_perturb: f64,
    pub relation_threshold: f64,
    /// Distance kept before the cross point by refined samples.
    pub stop_buffer: f64,
    /// Strongest deceleration a refined sample may use.
    pub max_refine_decel: f64,
    pub speed_estimate: SpeedEstimate,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        PredictorConfig {
            samples_k: 6,
            horizon_seconds: 8.0,
            observation_seconds: 1.1,
            step_seconds: STEP_SECONDS,
            pedestrian_perturb: 15f64.to_radians(),
            relation_threshold: 0.7,
            stop_buffer: 2.0,
            max_refine_decel: 1.5,
            speed_estimate: SpeedEstimate::LastStep,
        }
    }
}

impl PredictorConfig {
    pub fn validate(&self) -> Result<(), PredictorError> {
        let bad = |field, reason| Err(PredictorError::InvalidConfig { field, reason });
        if self.samples_k < 1 {
            return bad("samples_k", "must be at least 1");
        }
        if self.step_seconds != STEP_SECONDS {
            return bad("step_seconds", "the grid step is fixed at 0.1 s");
        }
        let steps = self.horizon_seconds / self.step_seconds;
        if !(self.horizon_seconds > 0.0) || (steps - steps.round()).abs() > 1e-9 {
            return bad("horizon_seconds", "must be a positive multiple of the step");
        }
        if !(self.observation_seconds > 0.0) {
            return bad("observation_seconds", "must be positive");
        }
        if !(self.pedestrian_perturb >= 0.0) {
            return bad("pedestrian_perturb", "must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.relation_threshold) {
            return bad("relation_threshold", "must lie in [0, 1]");
        }
        if !(self.stop_buffer >= 0.0) {
            return bad("stop_buffer", "must be non-negative");
        }
        if !(self.max_refine_decel > 0.0) {
            return bad("max_refine_decel", "must be positive");
        }
        Ok(())
    }

    pub fn horizon_steps(&self) -> usize {
        (self.horizon_seconds / self.step_seconds).round() as usize
    }

    /// Number of observed states: the current one plus one per step.
    pub fn history_states(&self) -> usize {
        (self.observation_seconds / self.step_seconds).round() as usize + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PredictorKind {
    #[serde(rename = "cv")]
    ConstantVelocity,
    #[serde(rename = "p4p-norelation")]
    P4PNoRelation,
    #[serde(rename = "p4p")]
    P4P,
    #[serde(rename = "nopredict")]
    NoPredict,
    #[serde(rename = "replay")]
    Replay,
}

impl PredictorKind {
    pub const ALL: [PredictorKind; 5] = [
        PredictorKind::ConstantVelocity,
        PredictorKind::P4PNoRelation,
        PredictorKind::P4P,
        PredictorKind::NoPredict,
        PredictorKind::Replay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::ConstantVelocity => "cv",
            PredictorKind::P4PNoRelation => "p4p-norelation",
            PredictorKind::P4P => "p4p",
            PredictorKind::NoPredict => "nopredict",
            PredictorKind::Replay => "replay",
        }
    }

    /// Display label used in comparison tables.
    pub fn label(self) -> &'static str {
        match self {
            PredictorKind::ConstantVelocity => "Constant Velocity",
            PredictorKind::P4PNoRelation => "P4P-NoRelation",
            PredictorKind::P4P => "P4P",
            PredictorKind::NoPredict => "No Prediction",
            PredictorKind::Replay => "Replay",
        }
    }
}

impl std::str::FromStr for PredictorKind {
    type Err = PredictorError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PredictorKind::ALL.into_iter().find(|k| k.name() == s).ok_or_else(|| PredictorError::UnknownKind(s.to_string()))
    }
}

impl std::fmt::Display for PredictorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Record of a sample replaced by its yield refinement.
#[derive(Debug, Clone, PartialEq)]
pub struct Refinement {
    pub original: Trajectory,
    pub cross_distance: f64,
    pub p_yield: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub agent_id: AgentId,
    pub samples: Vec<Trajectory>,
    pub weights: Option<Vec<f64>>,
    pub top_index: usize,
    /// Per sample: the refinement that replaced it, if any.
    pub refinements: Vec<Option<Refinement>>,
}

impl PredictionSet {
    /// Set with equal weights and no refinements.
    pub fn uniform(agent_id: AgentId, samples: Vec<Trajectory>, top_index: usize) -> Self {
        let n = samples.len();
        PredictionSet {
            agent_id,
            weights: Some(vec![1.0 / n as f64; n]),
            refinements: vec![None; n],
            samples,
            top_index,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn top(&self) -> &Trajectory {
        &self.samples[self.top_index]
    }

    /// Samples as generated, before any refinement.
    pub fn candidates(&self) -> impl Iterator<Item = &Trajectory> {
        self.samples.iter().zip(&self.refinements).map(|(s, r)| r.as_ref().map_or(s, |r| &r.original))
    }

    pub fn is_refined(&self, k: usize) -> bool {
        self.refinements[k].is_some()
    }
}

fn straight_sample(start: Point2, heading: f64, speed: f64, t0: i64, steps: usize) -> Trajectory {
    let dir = Point2::from_heading(heading);
    let states = (1..=steps)
        .map(|k| {
            let p = start + dir * (speed * STEP_SECONDS * k as f64);
            AgentState::new(p, heading, speed, t0 + k as i64).expect("finite extrapolation")
        })
        .collect();
    Trajectory::new(states).expect("consecutive sample states")
}

/// Last observed velocity: finite difference of the last two states, or the
/// state's own speed and heading for a single-state history.
pub fn observed_velocity(agent: &Agent) -> Point2 {
    let h = agent.history.states();
    match h {
        [.., prev, cur] => (cur.position - prev.position) * (1.0 / STEP_SECONDS),
        [cur] => cur.velocity(),
        [] => unreachable!("trajectories are non-empty"),
    }
}

fn constant_velocity_sample(agent: &Agent, config: &PredictorConfig) -> Trajectory {
    let cur = agent.current();
    let vel = observed_velocity(agent);
    let speed = vel.norm();
    let heading = if speed > 1e-9 { vel.angle() } else { cur.heading };
    straight_sample(cur.position, heading, speed, cur.time_index, config.horizon_steps())
}

pub fn predict_constant_velocity(agent: &Agent, config: &PredictorConfig) -> PredictionSet {
    let s = constant_velocity_sample(agent, config);
    PredictionSet::uniform(agent.id, vec![s; config.samples_k], 0)
}

fn route_speed(agent: &Agent, config: &PredictorConfig) -> f64 {
    match config.speed_estimate {
        SpeedEstimate::LastStep => agent.current().speed,
        SpeedEstimate::WindowAverage => {
            let h = agent.history.states();
            h.iter().map(|s| s.speed).sum::<f64>() / h.len() as f64
        }
    }
}

/// Constant-speed sample along `path`, starting one step after `t0`.
pub fn sample_along(path: &Path, speed: f64, t0: i64, steps: usize) -> Trajectory {
    let states = (1..=steps)
        .map(|k| {
            let (p, h) = path.pose_at(speed * STEP_SECONDS * k as f64);
            AgentState::new(p, h, speed, t0 + k as i64).expect("finite route state")
        })
        .collect();
    Trajectory::new(states).expect("consecutive sample states")
}

/// Routes an agent at this pose could be following: the union of the routes
/// from every heading-aligned lane near it. Empty when no lane is within
/// [`LANE_SEARCH_RADIUS`].
pub fn candidate_routes(graph: &LaneGraph, state: &AgentState, horizon_seconds: f64) -> Vec<Route> {
    let Ok(lanes) = graph.aligned_lanes(state.position, state.heading, LANE_TIE_SLACK) else {
        return Vec::new();
    };
    let mut out = BTreeSet::new();
    for (id, d) in lanes {
        if d > LANE_SEARCH_RADIUS {
            continue;
        }
        let lane = graph.lane(id).expect("aligned lane exists");
        let (s, _) = lane.path().project(state.position, f64::INFINITY);
        let reach = horizon_seconds * state.speed.max(lane.speed_limit);
        if let Ok(routes) = enumerate_routes(graph, id, s + reach, DEFAULT_MAX_DEPTH) {
            out.extend(routes);
        }
    }
    out.into_iter().collect()
}

pub fn predict_physics_routes(agent: &Agent, graph: &LaneGraph, config: &PredictorConfig) -> PredictionSet {
    let cur = *agent.current();
    let routes = candidate_routes(graph, &cur, config.horizon_seconds);
    if routes.is_empty() {
        return predict_constant_velocity(agent, config);
    }
    let speed = route_speed(agent, config);
    let steps = config.horizon_steps();
    let mut samples: Vec<Trajectory> = routes
        .iter()
        .take(config.samples_k)
        .map(|r| {
            let path = onboard(&route_centerline(graph, r), cur.position, cur.heading, speed);
            sample_along(&path, speed, cur.time_index, steps)
        })
        .collect();
    let n_routes = samples.len();
    let top_index = (0..n_routes)
        .min_by(|&a, &b| {
            let da = top_pick_error(&samples[a], &cur);
            let db = top_pick_error(&samples[b], &cur);
            da.total_cmp(&db).then(a.cmp(&b))
        })
        .unwrap_or(0);
    if n_routes < config.samples_k {
        let cv = constant_velocity_sample(agent, config);
        samples.resize(config.samples_k, cv);
    }
    PredictionSet::uniform(agent.id, samples, top_index)
}

fn top_pick_error(sample: &Trajectory, cur: &AgentState) -> f64 {
    let i = TOP_PICK_INDEX.min(sample.len() - 1);
    let d = sample.states()[i].position - cur.position;
    if d.norm() < 1e-9 {
        return 0.0;
    }
    heading_difference(d.angle(), cur.heading)
}

/// Heading offsets of the pedestrian fan, evenly spaced over
/// `[-perturb, perturb]` with both ends included.
pub fn pedestrian_offsets(k: usize, perturb: f64) -> Vec<f64> {
    if k == 1 {
        return vec![0.0];
    }
    let m = (k - 1) as f64;
    (0..k).map(|i| perturb * (2.0 * i as f64 - m) / m).collect()
}

pub fn predict_pedestrian(agent: &Agent, config: &PredictorConfig) -> PredictionSet {
    let cur = agent.current();
    let offsets = pedestrian_offsets(config.samples_k, config.pedestrian_perturb);
    let samples = offsets
        .iter()
        .map(|off| {
            // A standing pedestrian has no direction to perturb.
            let heading = if cur.speed > 0.0 { cur.heading + off } else { cur.heading };
            straight_sample(cur.position, heading, cur.speed, cur.time_index, config.horizon_steps())
        })
        .collect();
    let top_index = (0..offsets.len())
        .min_by(|&a, &b| offsets[a].abs().total_cmp(&offsets[b].abs()).then(a.cmp(&b)))
        .expect("at least one sample");
    PredictionSet::uniform(agent.id, samples, top_index)
}

/// Physics prediction dispatched on agent kind.
pub fn predict_physics(agent: &Agent, graph: &LaneGraph, config: &PredictorConfig) -> PredictionSet {
    match agent.kind {
        AgentKind::Pedestrian => predict_pedestrian(agent, config),
        AgentKind::Vehicle | AgentKind::Cyclist => predict_physics_routes(agent, graph, config),
    }
}

/// Same path, decelerating at the smallest constant rate that stops
/// `stop_buffer` before `cross_distance` (capped at `max_refine_decel`).
/// Distances are measured along the sample from its first state. Samples
/// that are stationary or never reach the cross point are returned as is.
pub fn refine_yielding_prediction(sample: &Trajectory, cross_distance: f64, config: &PredictorConfig) -> Trajectory {
    let states = sample.states();
    let v0 = states[0].speed;
    let total = sample.path_length();
    if v0 <= 0.0 || cross_distance > total {
        return sample.clone();
    }
    let pts: Vec<Point2> = states.iter().map(|s| s.position).collect();
    let Some(path) = Path::new(pts.clone(), vec![0.0; pts.len()]) else {
        return sample.clone();
    };
    let target = (cross_distance - config.stop_buffer).max(0.0);
    let decel =
        if target > 0.0 { (v0 * v0 / (2.0 * target)).min(config.max_refine_decel) } else { config.max_refine_decel };
    let mut out = Vec::with_capacity(states.len());
    out.push(states[0]);
    let (mut s, mut v) = (0.0, v0);
    let mut heading = states[0].heading;
    for st in &states[1..] {
        let (vn, ds) = advance(v, 0.0, 1.0, decel, STEP_SECONDS);
        s += ds;
        v = vn;
        if ds > 0.0 {
            heading = path.pose_at(s.min(path.length())).1;
        }
        let p = path.pose_at(s.min(path.length())).0;
        out.push(AgentState::new(p, heading, v, st.time_index).expect("finite refined state"));
    }
    Trajectory::new(out).expect("consecutive refined states")
}

/// Context of one P4P query.
#[derive(Debug, Clone, Copy)]
pub struct P4pContext<'a> {
    pub scenario_id: &'a str,
    pub ego_id: AgentId,
    pub use_relation: bool,
}

/// Physics candidates, with every candidate that conflicts with the ego
/// plan and is judged to yield replaced by its refinement.
pub fn predict_p4p(
    agent: &Agent,
    ego_plan: &EgoPlan,
    graph: &LaneGraph,
    model: &dyn RelationModel,
    config: &PredictorConfig,
    ctx: P4pContext<'_>,
) -> PredictionSet {
    let mut set = predict_physics(agent, graph, config);
    if !ctx.use_relation {
        return set;
    }
    let plan_fp = Footprints::new(&ego_plan.trajectory, ego_plan.dims);
    let key = RelationKey { scenario_id: ctx.scenario_id, agent_id: agent.id, time_index: agent.current().time_index };
    for k in 0..set.samples.len() {
        let sample = &set.samples[k];
        let fs = Footprints::new(sample, agent.dims);
        let Some(conflict) = spatial_conflict_prepared(ctx.ego_id, &plan_fp, agent.id, &fs) else {
            continue;
        };
        let features = extract_features(agent, sample, ego_plan, &conflict, graph);
        let estimate = model.estimate(&key, &features);
        if decide_relation(estimate, config.relation_threshold) == Relation::Yield {
            let refined = refine_yielding_prediction(sample, conflict.distance_b, config);
            let original = std::mem::replace(&mut set.samples[k], refined);
            set.refinements[k] =
                Some(Refinement { original, cross_distance: conflict.distance_b, p_yield: estimate.p_yield });
        }
    }
    set
}
