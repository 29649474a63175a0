//! Closed-loop rollouts: the ego replans every step against the predictions
//! of the predictor under test while rule-based agents follow randomized
//! routes and yield by arrival order.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{collision_prepared, label_relation, spatial_conflict_prepared, Conflict, Footprints, Relation};
use crate::geometry::{Agent, AgentId, AgentKind, AgentState, Dimensions, Trajectory, STEP_SECONDS};
use crate::kinematics::advance;
use crate::lane_map::{select_route, LaneGraph, Route};
use crate::metrics::{min_ade_fde, score_conflict_identification};
use crate::path::{onboard, route_path, Junctions, Path};
use crate::planner::{build_route_path, revise_plan, EgoPlan, PlanAction, PlannerConfig, PlannerError};
use crate::predictor::{
    candidate_routes, predict_constant_velocity, predict_p4p, P4pContext, PredictionSet, PredictorConfig,
    PredictorError, PredictorKind,
};
use crate::relation::RelationModel;
use crate::scenario::Scenario;

/// Seconds of constant-speed lookahead in the reactive rule.
pub const REACTIVE_LOOKAHEAD_SECONDS: f64 = 3.0;

/// Minimum speed assumed by the lookahead, so that a standing agent still
/// notices traffic on the path it is about to enter.
const LOOKAHEAD_MIN_SPEED: f64 = 2.0;
const PEDESTRIAN_LOOKAHEAD_MIN_SPEED: f64 = 1.0;

/// Offsets added to the master seed for the three random streams.
pub const ROUTE_STREAM: u64 = 1;
pub const CONNECTOR_STREAM: u64 = 2;
pub const TIE_BREAK_STREAM: u64 = 3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("simulation config field {field} is invalid: {reason}")]
    InvalidConfig { field: &'static str, reason: &'static str },
    #[error("replay predictor needs ground-truth futures for agent {0}")]
    MissingFutures(AgentId),
    #[error(transparent)]
    Planner(#[from] PlannerError),
    #[error(transparent)]
    Predictor(#[from] PredictorError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon_steps: usize,
    pub step_seconds: f64,
    pub seed: u64,
    pub reactive: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig { horizon_steps: 80, step_seconds: STEP_SECONDS, seed: 0, reactive: true }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.horizon_steps < 1 {
            return Err(SimError::InvalidConfig { field: "horizon_steps", reason: "must be at least 1" });
        }
        if self.step_seconds != STEP_SECONDS {
            return Err(SimError::InvalidConfig { field: "step_seconds", reason: "the grid step is fixed at 0.1 s" });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "reason", content = "agent")]
pub enum Termination {
    Collision(AgentId),
    HorizonReached,
}

/// Route assigned to a traffic agent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AssignedRoute {
    Lanes(Route),
    /// Straight line along the current heading: pedestrians and agents
    /// away from every lane.
    Straight,
}

/// Picks a route per traffic agent: uniform over the routes from its
/// heading-aligned lanes, or a straight line.
pub fn assign_agent_routes<'a, R: Rng + ?Sized>(
    agents: impl IntoIterator<Item = &'a Agent>,
    graph: &LaneGraph,
    horizon_seconds: f64,
    rng: &mut R,
) -> BTreeMap<AgentId, AssignedRoute> {
    let mut out = BTreeMap::new();
    for a in agents {
        let route = if a.kind == AgentKind::Pedestrian {
            AssignedRoute::Straight
        } else {
            let routes = candidate_routes(graph, a.current(), horizon_seconds);
            match select_route(&routes, graph, None, rng) {
                Ok(r) => AssignedRoute::Lanes(r),
                Err(_) => AssignedRoute::Straight,
            }
        };
        out.insert(a.id, route);
    }
    out
}

/// Agent driving along a fixed path.
#[derive(Debug, Clone)]
pub struct RoutedAgent {
    pub id: AgentId,
    pub kind: AgentKind,
    pub dims: Dimensions,
    pub path: Path,
    pub s: f64,
    pub state: AgentState,
    /// Target speed for straight-line agents; lane agents use the limits.
    pub cruise: Option<f64>,
}

/// Something to keep clear of: a current state extrapolated at constant
/// velocity.
#[derive(Debug, Clone, Copy)]
pub struct Obstacle {
    pub id: AgentId,
    pub state: AgentState,
    pub dims: Dimensions,
}

impl RoutedAgent {
    pub fn new<R: Rng + ?Sized>(
        agent: &Agent,
        route: &AssignedRoute,
        graph: &LaneGraph,
        reach: f64,
        connectors: &mut R,
    ) -> Self {
        let cur = *agent.current();
        let (path, cruise) = match route {
            AssignedRoute::Lanes(r) => {
                let rp = route_path(graph, r, Junctions::Randomized(connectors));
                (onboard(&rp, cur.position, cur.heading, cur.speed), None)
            }
            AssignedRoute::Straight => {
                (Path::ray(cur.position, cur.heading, cur.speed * reach + 50.0, cur.speed), Some(cur.speed))
            }
        };
        RoutedAgent { id: agent.id, kind: agent.kind, dims: agent.dims, path, s: 0.0, state: cur, cruise }
    }

    fn target_speed(&self) -> f64 {
        self.cruise.unwrap_or_else(|| self.path.limit_at(self.s))
    }

    fn lookahead(&self) -> Trajectory {
        let min = if self.kind == AgentKind::Pedestrian { PEDESTRIAN_LOOKAHEAD_MIN_SPEED } else { LOOKAHEAD_MIN_SPEED };
        let v = self.state.speed.max(min.min(self.target_speed()));
        let steps = lookahead_steps(v);
        let states = (0..=steps)
            .map(|k| {
                let (p, h) = self.path.pose_at(self.s + v * STEP_SECONDS * k as f64);
                AgentState::new(p, h, v, self.state.time_index + k as i64).expect("finite lookahead")
            })
            .collect();
        Trajectory::new(states).expect("consecutive lookahead")
    }

    /// Braking rate this agent should apply to give way, if any.
    pub fn yield_decel<R: Rng + ?Sized>(
        &self,
        obstacles: &[Obstacle],
        config: &PlannerConfig,
        tie_break: &mut R,
    ) -> Option<f64> {
        let mine = self.lookahead();
        let fm = Footprints::new(&mine, self.dims);
        let mut decel: Option<f64> = None;
        for o in obstacles {
            let now = AgentState { time_index: self.state.time_index, ..o.state };
            let theirs = extrapolate(&now, mine.len() - 1);
            let ft = Footprints::new(&theirs, o.dims);
            if collision_prepared(&fm, &ft).is_none() {
                continue;
            }
            let c = spatial_conflict_prepared(self.id, &fm, o.id, &ft).expect("collision implies conflict");
            let gives_way = match c.index_a.cmp(&c.index_b) {
                std::cmp::Ordering::Greater => true,
                std::cmp::Ordering::Equal => tie_break.gen_bool(0.5),
                std::cmp::Ordering::Less => false,
            };
            if !gives_way {
                continue;
            }
            let v = self.state.speed;
            let room = c.distance_a - config.stop_buffer;
            let a = if c.distance_a < config.emergency_distance
                || v * v > 2.0 * config.comfort_decel * room.max(0.0) + 1e-9
            {
                config.emergency_decel
            } else {
                config.comfort_decel
            };
            decel = Some(decel.map_or(a, |d| d.max(a)));
        }
        decel
    }

    /// Advances one step, braking at `decel` if given and otherwise
    /// tracking the target speed. Stops at the end of the path.
    pub fn advance(&mut self, decel: Option<f64>, config: &PlannerConfig) {
        let v = self.state.speed;
        let remaining = self.path.length() - self.s;
        let end_decel = config.emergency_decel;
        let (vn, ds) = if v * v >= 2.0 * end_decel * remaining.max(0.0) && v > 0.0 {
            advance(v, 0.0, config.accel, end_decel, STEP_SECONDS)
        } else if let Some(d) = decel {
            advance(v, 0.0, config.accel, d, STEP_SECONDS)
        } else {
            advance(v, self.target_speed(), config.accel, config.comfort_decel, STEP_SECONDS)
        };
        self.s += ds;
        let (p, h) = self.path.pose_at(self.s);
        let heading = if ds > 0.0 { h } else { self.state.heading };
        self.state = AgentState::new(p, heading, vn, self.state.time_index + 1).expect("finite agent state");
    }
}

/// Lookahead length in steps at speed `v`: the fixed window, stretched to
/// cover a comfortable stop.
fn lookahead_steps(v: f64) -> usize {
    let base = (REACTIVE_LOOKAHEAD_SECONDS / STEP_SECONDS).round() as usize;
    let stretch = ((v / 1.5 + 1.5) / STEP_SECONDS).ceil() as usize;
    base.max(stretch)
}

/// States `0..=steps` from `state` at its current velocity.
pub fn extrapolate(state: &AgentState, steps: usize) -> Trajectory {
    let vel = state.velocity();
    let states = (0..=steps)
        .map(|k| {
            let p = state.position + vel * (STEP_SECONDS * k as f64);
            AgentState::new(p, state.heading, state.speed, state.time_index + k as i64).expect("finite extrapolation")
        })
        .collect();
    Trajectory::new(states).expect("consecutive extrapolation")
}

/// One agent's next state under the reactive rule.
#[allow(clippy::too_many_arguments)]
pub fn step_agent<R: Rng + ?Sized>(
    agent: &RoutedAgent,
    others: &[Obstacle],
    ego: &Obstacle,
    config: &PlannerConfig,
    tie_break: &mut R,
) -> RoutedAgent {
    let mut obstacles = Vec::with_capacity(others.len() + 1);
    obstacles.extend(others.iter().filter(|o| o.id != agent.id).copied());
    obstacles.push(*ego);
    let decel = agent.yield_decel(&obstacles, config, tie_break);
    let mut next = agent.clone();
    next.advance(decel, config);
    next
}

/// One entry per step and traffic agent with a ground-truth conflict or a
/// predicted one.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictLogEntry {
    pub time_index: i64,
    pub agent_id: AgentId,
    /// Conflict between the reference plan and the agent's actual future.
    pub ground_truth: Option<Conflict>,
    pub ground_truth_relation: Option<Relation>,
    /// Earlier of the ego and agent arrival times at the ground-truth conflict.
    pub cross_time: Option<i64>,
    pub identified_top1: bool,
    pub identified_topk: bool,
    /// Pass when some conflicting candidate was kept unrefined, Yield when
    /// every conflicting candidate was refined.
    pub predicted_relation: Option<Relation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLog {
    pub time_index: i64,
    /// Unrevised plan the predictions were made against.
    pub reference_plan: Trajectory,
    pub action: PlanAction,
    pub predictions: BTreeMap<AgentId, PredictionSet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    pub scenario_id: String,
    pub predictor: PredictorKind,
    pub ego_id: AgentId,
    pub ego_dims: Dimensions,
    pub agent_dims: BTreeMap<AgentId, Dimensions>,
    pub ego_trajectory: Trajectory,
    pub agent_trajectories: BTreeMap<AgentId, Trajectory>,
    pub collisions: Vec<(i64, AgentId)>,
    pub termination: Termination,
    pub steps: Vec<StepLog>,
    pub conflict_log: Vec<ConflictLogEntry>,
    /// Per step and agent: min ADE and min FDE against the actual future.
    pub prediction_errors: Vec<(f64, f64)>,
}

/// Everything a rollout needs besides the scenario.
#[derive(Debug, Clone, Copy)]
pub struct RolloutConfig<'a> {
    pub predictor: PredictorKind,
    pub model: &'a dyn RelationModel,
    pub planner: &'a PlannerConfig,
    pub predictor_config: &'a PredictorConfig,
    pub sim: &'a SimConfig,
}

fn stream(seed: u64, offset: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed.wrapping_add(offset))
}

/// Last `n` states of `trajectory`.
fn recent(trajectory: &[AgentState], n: usize) -> Trajectory {
    let start = trajectory.len().saturating_sub(n);
    Trajectory::new(trajectory[start..].to_vec()).expect("history slice is consecutive")
}

/// Replay prediction from a logged future, extended at constant velocity
/// where the log ends.
fn replay_sample(future: &Trajectory, current: &AgentState, steps: usize) -> Trajectory {
    let t0 = current.time_index;
    let mut states: Vec<AgentState> =
        future.states().iter().filter(|s| s.time_index > t0 && s.time_index <= t0 + steps as i64).copied().collect();
    let mut last = states.last().copied().unwrap_or(*current);
    while states.len() < steps {
        let next = AgentState::new(
            last.position + last.velocity() * STEP_SECONDS,
            last.heading,
            last.speed,
            last.time_index + 1,
        )
        .expect("finite replay extension");
        states.push(next);
        last = next;
    }
    Trajectory::new(states).expect("consecutive replay sample")
}

fn replay_future_state(future: &Trajectory, prev: &AgentState) -> AgentState {
    match future.at_time(prev.time_index + 1) {
        Some(s) => *s,
        None => AgentState::new(
            prev.position + prev.velocity() * STEP_SECONDS,
            prev.heading,
            prev.speed,
            prev.time_index + 1,
        )
        .expect("finite replay extension"),
    }
}

/// Runs one closed-loop rollout.
pub fn run_closed_loop(scenario: &Scenario, cfg: RolloutConfig<'_>) -> Result<RolloutResult, SimError> {
    cfg.sim.validate()?;
    cfg.planner.validate()?;
    cfg.predictor_config.validate()?;
    if cfg.predictor == PredictorKind::Replay {
        if let Some(a) = scenario.traffic().find(|a| !scenario.futures.contains_key(&a.id)) {
            return Err(SimError::MissingFutures(a.id));
        }
    }
    let mut routes_rng = stream(cfg.sim.seed, ROUTE_STREAM);
    let mut connector_rng = stream(cfg.sim.seed, CONNECTOR_STREAM);
    let mut tie_rng = stream(cfg.sim.seed, TIE_BREAK_STREAM);

    let graph = &scenario.graph;
    let ego_agent = scenario.ego();
    let ego_start = *ego_agent.current();
    let reach = cfg.sim.horizon_steps as f64 * STEP_SECONDS + cfg.planner.horizon_seconds;
    let ego_routes = candidate_routes(graph, &ego_start, reach);
    let ego_path = match select_route(&ego_routes, graph, scenario.ego_goal, &mut routes_rng) {
        Ok(route) => build_route_path(&route, &ego_start, graph, &mut connector_rng),
        Err(_) => Path::ray(
            ego_start.position,
            ego_start.heading,
            ego_start.speed.max(1.0) * reach + 50.0,
            ego_start.speed.max(1.0),
        ),
    };
    let ego_path = Arc::new(ego_path);

    let traffic: Vec<&Agent> = scenario.traffic().collect();
    let assigned = assign_agent_routes(traffic.iter().copied(), graph, reach, &mut routes_rng);
    let mut routed: Vec<RoutedAgent> =
        traffic.iter().map(|a| RoutedAgent::new(a, &assigned[&a.id], graph, reach, &mut connector_rng)).collect();
    let dims: BTreeMap<AgentId, Dimensions> = traffic.iter().map(|a| (a.id, a.dims)).collect();
    let mut histories: BTreeMap<AgentId, Vec<AgentState>> =
        traffic.iter().map(|a| (a.id, a.history.states().to_vec())).collect();
    let follows_log: BTreeMap<AgentId, bool> =
        traffic.iter().map(|a| (a.id, !cfg.sim.reactive && scenario.futures.contains_key(&a.id))).collect();

    let history_len = cfg.predictor_config.history_states();
    let pred_steps = cfg.predictor_config.horizon_steps();
    let mut ego_states = vec![ego_start];
    let (mut s, mut v) = (0.0, ego_start.speed);
    let mut steps = Vec::with_capacity(cfg.sim.horizon_steps);
    let mut collisions = Vec::new();
    let mut termination = Termination::HorizonReached;

    for _ in 0..cfg.sim.horizon_steps {
        let ego_now = *ego_states.last().expect("ego has a state");
        let t = ego_now.time_index;
        let reference = EgoPlan::along(ego_path.clone(), s, v, t, cfg.planner, ego_agent.dims, &[]);

        let mut predictions = BTreeMap::new();
        for a in &traffic {
            let view = Agent { id: a.id, kind: a.kind, dims: a.dims, history: recent(&histories[&a.id], history_len) };
            let set = match cfg.predictor {
                PredictorKind::NoPredict => continue,
                PredictorKind::ConstantVelocity => predict_constant_velocity(&view, cfg.predictor_config),
                PredictorKind::P4P | PredictorKind::P4PNoRelation => predict_p4p(
                    &view,
                    &reference,
                    graph,
                    cfg.model,
                    cfg.predictor_config,
                    P4pContext {
                        scenario_id: &scenario.id,
                        ego_id: scenario.ego_id,
                        use_relation: cfg.predictor == PredictorKind::P4P,
                    },
                ),
                PredictorKind::Replay => {
                    let sample = replay_sample(&scenario.futures[&a.id], view.current(), pred_steps);
                    PredictionSet::uniform(a.id, vec![sample; cfg.predictor_config.samples_k], 0)
                }
            };
            predictions.insert(a.id, set);
        }

        let (revised, action) = revise_plan(scenario.ego_id, &reference, &predictions, &dims, cfg.planner);
        s = revised.profile.arc[1];
        v = revised.profile.speed[1];
        let ego_next = revised.trajectory.states()[1];

        let obstacles: Vec<Obstacle> =
            routed.iter().map(|r| Obstacle { id: r.id, state: r.state, dims: r.dims }).collect();
        let ego_obstacle = Obstacle { id: scenario.ego_id, state: ego_now, dims: ego_agent.dims };
        let mut next_routed = Vec::with_capacity(routed.len());
        for r in &routed {
            let next = if follows_log[&r.id] {
                let mut n = r.clone();
                n.state = replay_future_state(&scenario.futures[&r.id], &r.state);
                n
            } else if cfg.sim.reactive {
                step_agent(r, &obstacles, &ego_obstacle, cfg.planner, &mut tie_rng)
            } else {
                let mut n = r.clone();
                n.advance(None, cfg.planner);
                n
            };
            next_routed.push(next);
        }
        routed = next_routed;
        for r in &routed {
            histories.get_mut(&r.id).expect("known agent").push(r.state);
        }
        ego_states.push(ego_next);
        steps.push(StepLog { time_index: t, reference_plan: reference.trajectory, action, predictions });

        let ego_box = crate::geometry::PreparedBox::new(&ego_agent.dims.footprint(&ego_next));
        for r in &routed {
            let b = crate::geometry::PreparedBox::new(&r.dims.footprint(&r.state));
            if ego_box.overlaps(&b) {
                collisions.push((ego_next.time_index, r.id));
            }
        }
        if let Some(&(_, id)) = collisions.first() {
            termination = Termination::Collision(id);
            break;
        }
    }

    let ego_trajectory = Trajectory::new(ego_states).expect("consecutive ego states");
    let start_index = ego_start.time_index;
    let agent_trajectories: BTreeMap<AgentId, Trajectory> = histories
        .into_iter()
        .map(|(id, states)| {
            let t = Trajectory::new(states).expect("consecutive agent states");
            (id, t.starting_at(start_index).expect("agents share the ego start time"))
        })
        .collect();
    let (conflict_log, prediction_errors) =
        conflict_log(&steps, &agent_trajectories, &dims, scenario.ego_id, ego_agent.dims);
    Ok(RolloutResult {
        scenario_id: scenario.id.clone(),
        predictor: cfg.predictor,
        ego_id: scenario.ego_id,
        ego_dims: ego_agent.dims,
        agent_dims: dims,
        ego_trajectory,
        agent_trajectories,
        collisions,
        termination,
        steps,
        conflict_log,
        prediction_errors,
    })
}

/// Compares every step's reference plan with each agent's actual future.
fn conflict_log(
    steps: &[StepLog],
    agents: &BTreeMap<AgentId, Trajectory>,
    dims: &BTreeMap<AgentId, Dimensions>,
    ego_id: AgentId,
    ego_dims: Dimensions,
) -> (Vec<ConflictLogEntry>, Vec<(f64, f64)>) {
    let mut log = Vec::new();
    let mut errors = Vec::new();
    for step in steps {
        let plan_fp = Footprints::new(&step.reference_plan, ego_dims);
        let horizon = (step.reference_plan.len() - 1) as i64;
        for (id, traj) in agents {
            let t = step.time_index;
            let Some(future) = traj.starting_at(t + 1).and_then(|f| f.truncated_to(t + horizon)) else {
                continue;
            };
            let fut_fp = Footprints::new(&future, dims[id]);
            let gt = spatial_conflict_prepared(ego_id, &plan_fp, *id, &fut_fp);
            let gt_relation = gt.map(|c| label_relation(&c, &step.reference_plan, &future));
            let cross_time = gt
                .map(|c| step.reference_plan.states()[c.index_a].time_index.min(future.states()[c.index_b].time_index));
            let (top1, topk, predicted) = match step.predictions.get(id) {
                Some(set) => {
                    let score = score_conflict_identification(set, &plan_fp, ego_id, dims[id]);
                    if let Ok(e) = min_ade_fde(&set.samples, &future) {
                        errors.push(e);
                    }
                    (score.top1, score.topk, score.predicted_relation)
                }
                None => (false, false, None),
            };
            if gt.is_some() || topk {
                log.push(ConflictLogEntry {
                    time_index: t,
                    agent_id: *id,
                    ground_truth: gt,
                    ground_truth_relation: gt_relation,
                    cross_time,
                    identified_top1: top1,
                    identified_topk: topk,
                    predicted_relation: predicted,
                });
            }
        }
    }
    (log, errors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point2;
    use crate::lane_map::{Lane, LaneId};
    use crate::relation::HeuristicModel;

    fn lane_graph() -> LaneGraph {
        LaneGraph::new(vec![Lane::new(
            LaneId(1),
            vec![Point2::new(-100.0, 0.0), Point2::new(200.0, 0.0)],
            10.0,
            vec![],
            false,
        )
        .unwrap()])
        .unwrap()
    }

    fn routed(x: f64, speed: f64) -> RoutedAgent {
        let graph = lane_graph();
        let st = AgentState::new(Point2::new(x, 0.0), 0.0, speed, 11).unwrap();
        let a = Agent {
            id: AgentId(1),
            kind: AgentKind::Vehicle,
            dims: Dimensions::default_for(AgentKind::Vehicle),
            history: Trajectory::new(vec![st]).unwrap(),
        };
        let route = Route::new(&graph, vec![LaneId(1)]).unwrap();
        let mut rng = stream(1, CONNECTOR_STREAM);
        RoutedAgent::new(&a, &AssignedRoute::Lanes(route), &graph, 16.0, &mut rng)
    }

    #[test]
    fn empty_road_accelerates() {
        let a = routed(0.0, 5.0);
        let ego = Obstacle {
            id: AgentId(0),
            state: AgentState::new(Point2::new(0.0, 50.0), 0.0, 0.0, 11).unwrap(),
            dims: Dimensions::default_for(AgentKind::Vehicle),
        };
        let mut rng = stream(1, TIE_BREAK_STREAM);
        let next = step_agent(&a, &[], &ego, &PlannerConfig::default(), &mut rng);
        assert!((next.state.speed - 5.03).abs() < 1e-12);
    }

    #[test]
    fn follower_stops_behind_stopped_leader() {
        let cfg = PlannerConfig::default();
        let leader = Obstacle {
            id: AgentId(9),
            state: AgentState::new(Point2::new(60.0, 0.0), 0.0, 0.0, 11).unwrap(),
            dims: Dimensions::default_for(AgentKind::Vehicle),
        };
        let far_ego = Obstacle {
            id: AgentId(0),
            state: AgentState::new(Point2::new(0.0, 80.0), 0.0, 0.0, 11).unwrap(),
            dims: Dimensions::default_for(AgentKind::Vehicle),
        };
        let mut a = routed(0.0, 10.0);
        let mut rng = stream(1, TIE_BREAK_STREAM);
        for _ in 0..300 {
            let prev = a.state.speed;
            a = step_agent(&a, &[leader], &far_ego, &cfg, &mut rng);
            assert!((a.state.speed - prev).abs() <= 0.15 + 1e-9);
            let gap = leader.state.position.x - a.state.position.x;
            assert!(gap > 4.7, "overlapped leader, gap {gap}");
        }
        assert!(a.state.speed < 1e-9);
    }

    #[test]
    fn earlier_agent_does_not_brake() {
        // Agent reaches the crossing at x = 20 in 2 s; ego needs 6 s.
        let a = routed(0.0, 10.0);
        let ego = Obstacle {
            id: AgentId(0),
            state: AgentState::new(Point2::new(20.0, -30.0), std::f64::consts::FRAC_PI_2, 5.0, 11).unwrap(),
            dims: Dimensions::default_for(AgentKind::Vehicle),
        };
        let mut rng = stream(1, TIE_BREAK_STREAM);
        assert_eq!(a.yield_decel(&[ego], &PlannerConfig::default(), &mut rng), None);
        // A slow ego already at the crossing makes the agent give way.
        let ego_close = Obstacle {
            state: AgentState::new(Point2::new(20.0, -4.5), std::f64::consts::FRAC_PI_2, 1.0, 11).unwrap(),
            ..ego
        };
        assert!(a.yield_decel(&[ego_close], &PlannerConfig::default(), &mut rng).is_some());
    }

    #[test]
    fn rollout_without_traffic_follows_plan() {
        let mut f = crate::scenario::tests::minimal();
        f.agents[0].history.iter_mut().for_each(|s| s.speed = 5.0);
        let scenario = f.validate().unwrap();
        let model = HeuristicModel::default();
        let cfg = RolloutConfig {
            predictor: PredictorKind::P4P,
            model: &model,
            planner: &PlannerConfig::default(),
            predictor_config: &PredictorConfig::default(),
            sim: &SimConfig::default(),
        };
        let r = run_closed_loop(&scenario, cfg).unwrap();
        assert_eq!(r.termination, Termination::HorizonReached);
        assert_eq!(r.ego_trajectory.len(), 81);
        assert!(r.collisions.is_empty());
        assert!(r.ego_trajectory.is_speed_consistent());
        assert!((r.ego_trajectory.path_length() - 40.0 - 0.5 * 0.3 * 64.0).abs() < 0.5);
    }
}
