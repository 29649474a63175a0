//! Route-following ego planner: builds the reference plan along a route and
//! revises its speed profile when a prediction collides with it.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{colliding_samples, Footprints};
use crate::geometry::{AgentId, AgentState, Dimensions, GeometryError, Trajectory, STEP_SECONDS};
use crate::kinematics::{speed_profile, Profile, Rates, StopConstraint};
use crate::lane_map::{LaneGraph, MapError, Route};
use crate::path::{onboard, route_path, Junctions, Path};
use crate::predictor::PredictionSet;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlannerError {
    #[error("planner config field {field} is invalid: {reason}")]
    InvalidConfig { field: &'static str, reason: &'static str },
    #[error(transparent)]
    Map(#[from] MapError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    pub accel: f64,
    pub comfort_decel: f64,
    pub emergency_decel: f64,
    pub emergency_distance: f64,
    pub horizon_seconds: f64,
    pub stop_buffer: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            accel: 0.3,
            comfort_decel: 0.75,
            emergency_decel: 1.5,
            emergency_distance: 2.0,
            horizon_seconds: 8.0,
            stop_buffer: 2.0,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let fields = [
            ("accel", self.accel),
            ("comfort_decel", self.comfort_decel),
            ("emergency_decel", self.emergency_decel),
            ("emergency_distance", self.emergency_distance),
            ("horizon_seconds", self.horizon_seconds),
            ("stop_buffer", self.stop_buffer),
        ];
        for (field, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(PlannerError::InvalidConfig { field, reason: "must be positive and finite" });
            }
        }
        if self.emergency_decel <= self.comfort_decel {
            return Err(PlannerError::InvalidConfig { field: "emergency_decel", reason: "must exceed comfort_decel" });
        }
        Ok(())
    }

    pub fn horizon_steps(&self) -> usize {
        (self.horizon_seconds / STEP_SECONDS).round() as usize
    }

    fn rates(&self) -> Rates {
        Rates { accel: self.accel, comfort_decel: self.comfort_decel }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanAction {
    Proceed,
    SlowDown,
}

/// Planned path with a speed profile. `trajectory` holds the current state
/// followed by one state per step over the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct EgoPlan {
    pub path: Arc<Path>,
    pub profile: Profile,
    pub trajectory: Trajectory,
    pub dims: Dimensions,
}

impl EgoPlan {
    /// Plan along `path` from arc `s0` at speed `v0`, honouring `stops` and
    /// a stop at the end of the path.
    pub fn along(
        path: Arc<Path>,
        s0: f64,
        v0: f64,
        time_index: i64,
        config: &PlannerConfig,
        dims: Dimensions,
        stops: &[StopConstraint],
    ) -> EgoPlan {
        let mut all = Vec::with_capacity(stops.len() + 1);
        all.push(StopConstraint { at: path.length(), decel: config.comfort_decel });
        all.extend_from_slice(stops);
        let profile = speed_profile(&path, s0, v0, config.horizon_steps(), config.rates(), &all);
        let trajectory = trajectory_from(&path, &profile, time_index);
        EgoPlan { path, profile, trajectory, dims }
    }

    pub fn speed_profile(&self) -> &[f64] {
        &self.profile.speed
    }

    pub fn start_arc(&self) -> f64 {
        self.profile.arc[0]
    }

    /// Path heading at every path point.
    pub fn path_headings(&self) -> Vec<f64> {
        let arc = self.path.arc_lengths();
        arc.iter().map(|&s| self.path.heading_at(s)).collect()
    }
}

fn trajectory_from(path: &Path, profile: &Profile, time_index: i64) -> Trajectory {
    let states = profile
        .arc
        .iter()
        .zip(&profile.speed)
        .enumerate()
        .map(|(k, (&s, &v))| {
            let (p, h) = path.pose_at(s);
            AgentState::new(p, h, v, time_index + k as i64).expect("finite plan state")
        })
        .collect();
    Trajectory::new(states).expect("consecutive plan states")
}

/// Ego path for `route` starting at `start`: a Bézier connector onto the
/// route, then the route centerlines joined by randomized connectors.
pub fn build_route_path<R: Rng + ?Sized>(
    route: &Route,
    start: &AgentState,
    graph: &LaneGraph,
    connector_rng: &mut R,
) -> Path {
    let rp = route_path(graph, route, Junctions::Randomized(connector_rng));
    onboard(&rp, start.position, start.heading, start.speed)
}

/// Reference plan: follow the route at the speed limits, ramping at the
/// configured rates, stopping at the route end if it comes within reach.
pub fn build_reference_plan<R: Rng + ?Sized>(
    route: &Route,
    start: &AgentState,
    graph: &LaneGraph,
    config: &PlannerConfig,
    connector_rng: &mut R,
    dims: Dimensions,
) -> Result<EgoPlan, PlannerError> {
    config.validate()?;
    Route::new(graph, route.lane_ids().to_vec())?;
    let path = Arc::new(build_route_path(route, start, graph, connector_rng));
    Ok(EgoPlan::along(path, 0.0, start.speed, start.time_index, config, dims, &[]))
}

/// Slows the plan down to stop `stop_buffer` before the earliest point where
/// a predicted sample collides with it.
///
/// Samples whose first colliding state is behind the ego (rear approaches)
/// are ignored: braking cannot avoid them.
pub fn revise_plan(
    ego_id: AgentId,
    plan: &EgoPlan,
    predictions: &BTreeMap<AgentId, PredictionSet>,
    dims: &BTreeMap<AgentId, Dimensions>,
    config: &PlannerConfig,
) -> (EgoPlan, PlanAction) {
    let Some(d) = trigger_distance(ego_id, plan, predictions, dims) else {
        return (plan.clone(), PlanAction::Proceed);
    };
    let v0 = plan.profile.speed[0];
    let s0 = plan.start_arc();
    let target = (d - config.stop_buffer).max(0.0);
    let decel = if d < config.emergency_distance || v0 * v0 / (2.0 * config.comfort_decel) > target + 1e-9 {
        config.emergency_decel
    } else {
        config.comfort_decel
    };
    let stop = StopConstraint { at: s0 + target, decel };
    let revised = EgoPlan::along(plan.path.clone(), s0, v0, plan.trajectory.start_index(), config, plan.dims, &[stop]);
    (revised, PlanAction::SlowDown)
}

/// Distance along the plan to the earliest conflict of any sample that
/// collides with it, ignoring rear approaches.
pub fn trigger_distance(
    ego_id: AgentId,
    plan: &EgoPlan,
    predictions: &BTreeMap<AgentId, PredictionSet>,
    dims: &BTreeMap<AgentId, Dimensions>,
) -> Option<f64> {
    let fp = Footprints::new(&plan.trajectory, plan.dims);
    colliding_samples(ego_id, &fp, predictions, dims, |id, k, t| {
        let ego = plan.trajectory.at_time(t).expect("collision time is on the plan");
        let agent = predictions[&id].samples[k].at_time(t).expect("collision time is on the sample");
        let ahead = (agent.position - ego.position).dot(crate::geometry::Point2::from_heading(ego.heading));
        ahead >= 0.0
    })
    .iter()
    .map(|c| c.conflict.distance_a)
    .min_by(f64::total_cmp)
}
