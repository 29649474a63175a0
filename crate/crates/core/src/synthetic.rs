//! Parametric interactive scenarios.
//!
//! Every template places the ego and one key agent so that their paths cross
//! with a chosen arrival-time offset, then checks with the conflict engine
//! that the ego's reference plan and the agent's constant-speed trajectory
//! really have a non-trivial conflict. Key agents drive on lanes with a
//! single successor chain, so the route they follow is known.

use std::f64::consts::FRAC_PI_2;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{classify_conflict, detect_spatial_conflict, label_relation, ConflictClass, Track};
use crate::geometry::{sample_bezier, AgentId, AgentKind, AgentState, Dimensions, Point2, Trajectory, STEP_SECONDS};
use crate::lane_map::{LaneGraph, LaneId, Route};
use crate::path::{route_centerline, Path};
use crate::planner::{EgoPlan, PlannerConfig};
use crate::scenario::{
    AgentRecord, KeyInteraction, LaneRecord, ScenarioFile, StateRecord, HISTORY_STATES, SCHEMA_VERSION,
};

const LANE_WIDTH: f64 = 3.5;
/// Distance from the intersection center to each stop line.
const BOX: f64 = 14.0;
const APPROACH: f64 = 100.0;
const EXIT: f64 = 150.0;
const LIMIT: f64 = 10.0;
/// Cubic handle length for a quarter circle, per unit radius.
const ARC_HANDLE: f64 = 0.5523;
/// Least distance between a lane agent's start and the end of its first lane.
const START_MARGIN: f64 = 2.0;
/// Steps of logged future written when futures are requested.
pub const FUTURE_STEPS: usize = 120;
/// Attempts per scenario before batch generation gives up.
pub const MAX_ATTEMPTS: u32 = 64;

const EGO: u64 = 0;
const KEY: u64 = 1;

#[derive(Debug, Error)]
pub enum SyntheticError {
    #[error("{template}: {reason}")]
    NoConflict { template: Template, reason: String },
    #[error("{template}: invalid parameter {field}: {reason}")]
    InvalidParams { template: Template, field: &'static str, reason: String },
    #[error("unknown template {0:?} (expected one of: unprotected-left-turn, pedestrian-crossing, two-way-merge, four-way-cross)")]
    UnknownTemplate(String),
    #[error("{template}: no valid scenario after {MAX_ATTEMPTS} attempts for index {index}")]
    Exhausted { template: Template, index: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Template {
    UnprotectedLeftTurn,
    PedestrianCrossing,
    TwoWayMerge,
    FourWayCross,
}

impl Template {
    pub const ALL: [Template; 4] =
        [Template::UnprotectedLeftTurn, Template::PedestrianCrossing, Template::TwoWayMerge, Template::FourWayCross];

    pub fn name(self) -> &'static str {
        match self {
            Template::UnprotectedLeftTurn => "unprotected-left-turn",
            Template::PedestrianCrossing => "pedestrian-crossing",
            Template::TwoWayMerge => "two-way-merge",
            Template::FourWayCross => "four-way-cross",
        }
    }

    fn slug(self) -> &'static str {
        match self {
            Template::UnprotectedLeftTurn => "left_turn",
            Template::PedestrianCrossing => "ped_cross",
            Template::TwoWayMerge => "merge",
            Template::FourWayCross => "cross",
        }
    }
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Template {
    type Err = SyntheticError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Template::ALL.into_iter().find(|t| t.name() == s).ok_or_else(|| SyntheticError::UnknownTemplate(s.into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticParams {
    pub ego_speed: f64,
    /// Ego distance to the crossing of the two centerlines.
    pub ego_distance: f64,
    pub agent_speed: f64,
    /// Agent arrival at the crossing minus ego arrival, at constant speeds.
    pub arrival_offset: f64,
    /// Template-specific layout choice, taken modulo the number of layouts.
    pub variant: u32,
    /// Cyclist instead of a car where the layout allows it.
    pub cyclist: bool,
    pub background: usize,
    pub seed: u64,
    pub with_futures: bool,
}

impl SyntheticParams {
    /// Draws parameters that usually produce a valid scenario.
    pub fn sample<R: Rng + ?Sized>(template: Template, rng: &mut R) -> SyntheticParams {
        let cyclist = template == Template::UnprotectedLeftTurn && rng.gen_bool(0.3);
        let agent_speed = match template {
            Template::PedestrianCrossing => rng.gen_range(1.0..1.8),
            _ if cyclist => rng.gen_range(3.0..5.5),
            _ => rng.gen_range(4.0..9.0),
        };
        SyntheticParams {
            ego_speed: rng.gen_range(4.0..8.0),
            ego_distance: rng.gen_range(12.0..35.0),
            agent_speed,
            arrival_offset: rng.gen_range(-3.0..3.0),
            variant: rng.gen_range(0..12),
            cyclist,
            background: rng.gen_range(0..=2),
            seed: rng.gen(),
            with_futures: false,
        }
    }

    fn check(&self, template: Template) -> Result<(), SyntheticError> {
        let bad = |field, reason: &str| Err(SyntheticError::InvalidParams { template, field, reason: reason.into() });
        if !(self.ego_speed > 0.0 && self.ego_speed <= LIMIT) {
            return bad("ego_speed", "must be in (0, 10] m/s");
        }
        if !(self.agent_speed > 0.0 && self.agent_speed <= LIMIT) {
            return bad("agent_speed", "must be in (0, 10] m/s");
        }
        if !(self.ego_distance > 0.0 && self.ego_distance <= 80.0) {
            return bad("ego_distance", "must be in (0, 80] m");
        }
        if !self.arrival_offset.is_finite() {
            return bad("arrival_offset", "must be finite");
        }
        Ok(())
    }
}

/// Rotates `p` by `quarter` quarter turns counter-clockwise.
fn rot(p: Point2, quarter: u8) -> Point2 {
    match quarter % 4 {
        0 => p,
        1 => Point2::new(-p.y, p.x),
        2 => Point2::new(-p.x, -p.y),
        _ => Point2::new(p.y, -p.x),
    }
}

fn lane(id: u64, centerline: Vec<Point2>, successors: Vec<u64>) -> LaneRecord {
    LaneRecord { id, centerline, speed_limit: LIMIT, successors, signal_red: false }
}

/// Four-arm intersection, right-hand traffic. Arm `a` is the south arm
/// rotated by `a` quarter turns (0 south, 1 east, 2 north, 3 west). Each
/// approach has one lane per movement: 0 left, 1 straight, 2 right.
mod junction {
    use super::*;

    pub fn offset(m: u8) -> f64 {
        0.5 * LANE_WIDTH + LANE_WIDTH * f64::from(m)
    }

    pub fn approach(a: u8, m: u8) -> u64 {
        100 * (u64::from(a) + 1) + u64::from(m)
    }

    pub fn connector(a: u8, m: u8) -> u64 {
        approach(a, m) + 10
    }

    /// Exit lanes of arm `b`; lane `m` is fed by movement `m`.
    pub fn exit(b: u8, m: u8) -> u64 {
        approach(b, m) + 20
    }

    pub fn destination(a: u8, m: u8) -> u8 {
        match m {
            0 => (a + 3) % 4,
            1 => (a + 2) % 4,
            _ => (a + 1) % 4,
        }
    }

    pub fn route(a: u8, m: u8) -> Vec<u64> {
        vec![approach(a, m), connector(a, m), exit(destination(a, m), m)]
    }

    pub fn lanes() -> Vec<LaneRecord> {
        let mut out = Vec::new();
        for a in 0..4u8 {
            for m in 0..3u8 {
                let x = offset(m);
                out.push(lane(
                    approach(a, m),
                    vec![rot(Point2::new(x, -BOX - APPROACH), a), rot(Point2::new(x, -BOX), a)],
                    vec![connector(a, m)],
                ));
                out.push(lane(
                    exit(a, m),
                    vec![rot(Point2::new(-x, -BOX), a), rot(Point2::new(-x, -BOX - EXIT), a)],
                    vec![],
                ));
                let b = destination(a, m);
                let start = rot(Point2::new(x, -BOX), a);
                let end = rot(Point2::new(-x, -BOX), b);
                let h_in = rot(Point2::new(0.0, 1.0), a);
                let h_out = -rot(Point2::new(0.0, 1.0), b);
                let chord = start.distance(end);
                let handle = if m == 1 { chord / 3.0 } else { ARC_HANDLE * chord / std::f64::consts::SQRT_2 };
                let ctrl = [start, start + h_in * handle, end - h_out * handle, end];
                let pts = sample_bezier(&ctrl, 1.0).expect("positive spacing");
                out.push(lane(connector(a, m), pts, vec![exit(b, m)]));
            }
        }
        out
    }

    /// A point 30 m past the stop line on the exit reached by `(a, m)`.
    pub fn goal(a: u8, m: u8) -> Point2 {
        rot(Point2::new(-offset(m), -BOX - 30.0), destination(a, m))
    }
}

/// How an agent moves in a layout.
#[derive(Debug, Clone)]
enum Course {
    Lanes(Vec<u64>),
    /// Straight walk from an anchor point on the ego path.
    Walk {
        cross: Point2,
        heading: f64,
    },
}

struct Layout {
    lanes: Vec<LaneRecord>,
    ego_route: Vec<u64>,
    ego_goal: Point2,
    key_kind: AgentKind,
    key: Course,
    /// Lanes background traffic may start on, away from the ego lane.
    background_routes: Vec<Vec<u64>>,
}

fn layout(template: Template, p: &SyntheticParams) -> Layout {
    use junction::*;
    let vehicle = |cyclist: bool| if cyclist { AgentKind::Cyclist } else { AgentKind::Vehicle };
    match template {
        Template::UnprotectedLeftTurn => {
            // Ego turns left across an oncoming car, or goes straight while
            // an oncoming car or cyclist turns left across it.
            let (ego_m, key_m, kind) =
                if p.variant.is_multiple_of(2) { (0, 1, AgentKind::Vehicle) } else { (1, 0, vehicle(p.cyclist)) };
            Layout {
                lanes: lanes(),
                ego_route: route(0, ego_m),
                ego_goal: goal(0, ego_m),
                key_kind: kind,
                key: Course::Lanes(route(2, key_m)),
                background_routes: vec![route(1, 1), route(3, 1), route(2, 2), route(1, 2)],
            }
        }
        Template::FourWayCross => {
            // Crossing traffic from either side, or a left turner from the
            // east or from the opposite approach.
            let (a, m) = [(1, 1), (3, 1), (1, 0), (2, 0)][(p.variant % 4) as usize];
            let background = [(2, 1), (2, 2), (3, 2), (1, 2), (0, 2)]
                .into_iter()
                .filter(|&x| x != (a, m))
                .map(|(a, m)| route(a, m))
                .collect();
            Layout {
                lanes: lanes(),
                ego_route: route(0, 1),
                ego_goal: goal(0, 1),
                key_kind: AgentKind::Vehicle,
                key: Course::Lanes(route(a, m)),
                background_routes: background,
            }
        }
        Template::TwoWayMerge => {
            let angle = 40f64.to_radians();
            let ramp_start = Point2::new(-APPROACH * angle.cos(), -APPROACH * angle.sin());
            let lanes = vec![
                lane(1, vec![Point2::new(-150.0, 0.0), Point2::ORIGIN], vec![3]),
                lane(2, vec![ramp_start, Point2::ORIGIN], vec![3]),
                lane(3, vec![Point2::ORIGIN, Point2::new(250.0, 0.0)], vec![]),
            ];
            let (ego, key) = if p.variant.is_multiple_of(2) { (1, 2) } else { (2, 1) };
            Layout {
                lanes,
                ego_route: vec![ego, 3],
                ego_goal: Point2::new(40.0, 0.0),
                key_kind: AgentKind::Vehicle,
                key: Course::Lanes(vec![key, 3]),
                background_routes: vec![vec![key, 3]],
            }
        }
        Template::PedestrianCrossing => {
            let half = 0.5 * LANE_WIDTH;
            let lanes = vec![
                lane(1, vec![Point2::new(-200.0, -half), Point2::new(200.0, -half)], vec![]),
                lane(2, vec![Point2::new(200.0, half), Point2::new(-200.0, half)], vec![]),
            ];
            let heading = if p.variant.is_multiple_of(2) { -FRAC_PI_2 } else { FRAC_PI_2 };
            Layout {
                lanes,
                ego_route: vec![1],
                ego_goal: Point2::new(60.0, -half),
                key_kind: AgentKind::Pedestrian,
                key: Course::Walk { cross: Point2::new(0.0, -half), heading },
                background_routes: vec![vec![2]],
            }
        }
    }
}

fn centerline_path(graph: &LaneGraph, ids: &[u64]) -> Path {
    let route = Route::new(graph, ids.iter().map(|&i| LaneId(i)).collect()).expect("layout routes are connected");
    route_centerline(graph, &route).path
}

/// Arc lengths on `a` and `b` where the centerlines first meet.
fn crossing(a: &Path, b: &Path) -> Option<(f64, f64)> {
    a.points().iter().zip(a.arc_lengths()).find_map(|(p, &s)| {
        let (sb, d) = b.project(*p, f64::INFINITY);
        (d < 0.5).then_some((s, sb))
    })
}

fn history_along(path: &Path, s_now: f64, speed: f64) -> Vec<AgentState> {
    (0..HISTORY_STATES)
        .map(|k| {
            let back = speed * STEP_SECONDS * (HISTORY_STATES - 1 - k) as f64;
            let (p, h) = path.pose_at(s_now - back);
            AgentState::new(p, h, speed, k as i64).expect("finite history")
        })
        .collect()
}

struct Placed {
    kind: AgentKind,
    path: Path,
    s: f64,
    speed: f64,
}

impl Placed {
    fn record(&self, id: u64) -> AgentRecord {
        AgentRecord {
            id,
            kind: self.kind,
            length: None,
            width: None,
            history: history_along(&self.path, self.s, self.speed).iter().map(StateRecord::from_state).collect(),
        }
    }

    /// States `1..=steps` ahead of the current one at constant speed.
    fn constant(&self, steps: usize) -> Trajectory {
        let t0 = (HISTORY_STATES - 1) as i64;
        let states = (1..=steps)
            .map(|k| {
                let (p, h) = self.path.pose_at(self.s + self.speed * STEP_SECONDS * k as f64);
                AgentState::new(p, h, self.speed, t0 + k as i64).expect("finite future")
            })
            .collect();
        Trajectory::new(states).expect("consecutive future")
    }
}

/// Builds one scenario from explicit parameters.
pub fn generate_synthetic(
    template: Template,
    params: &SyntheticParams,
    scenario_id: &str,
) -> Result<ScenarioFile, SyntheticError> {
    params.check(template)?;
    let fail = |reason: String| SyntheticError::NoConflict { template, reason };
    let lay = layout(template, params);
    let mut file = ScenarioFile {
        schema_version: SCHEMA_VERSION,
        scenario_id: scenario_id.to_string(),
        lanes: lay.lanes.clone(),
        agents: vec![],
        ego_agent_id: EGO,
        ego_goal: Some(lay.ego_goal),
        ground_truth_futures: None,
        key_interaction: None,
    };
    let bare = file_graph(&file)?;
    let ego_path = centerline_path(&bare, &lay.ego_route);
    // Lane agents start on their first lane, short of the junction.
    let mut key_min_s = 0.0;
    let (key_path, ego_cross, key_cross) = match &lay.key {
        Course::Lanes(ids) => {
            let path = centerline_path(&bare, ids);
            let (se, sk) = crossing(&ego_path, &path).ok_or_else(|| fail("centerlines never meet".into()))?;
            let first = bare.lane(LaneId(ids[0])).expect("layout lane").length();
            key_min_s = sk - first + START_MARGIN;
            (path, se, sk)
        }
        Course::Walk { cross, heading } => {
            let reach = params.agent_speed * (params.ego_distance / params.ego_speed + params.arrival_offset).max(0.0);
            let start = *cross - Point2::from_heading(*heading) * reach;
            let path = Path::ray(start, *heading, reach + 50.0, params.agent_speed);
            let (se, _) = ego_path.project(*cross, f64::INFINITY);
            (path, se, reach)
        }
    };
    let ego_s = ego_cross - params.ego_distance;
    let agent_arrival = params.ego_distance / params.ego_speed + params.arrival_offset;
    let key_s = key_cross - params.agent_speed * agent_arrival;
    if ego_s < 0.0 || agent_arrival <= 0.0 || key_s < -1e-9 || key_cross - key_s < key_min_s {
        return Err(fail(format!("start positions fall off the layout (ego {ego_s:.1} m, agent {key_s:.1} m)")));
    }
    let ego = Placed { kind: AgentKind::Vehicle, path: ego_path, s: ego_s, speed: params.ego_speed };
    let key = Placed { kind: lay.key_kind, path: key_path, s: key_s.max(0.0), speed: params.agent_speed };

    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut placed = vec![(EGO, ego), (KEY, key)];
    let mut routes = lay.background_routes.clone();
    for n in 0..params.background {
        if routes.is_empty() {
            break;
        }
        let ids = routes.remove(rng.gen_range(0..routes.len()));
        let path = centerline_path(&bare, &ids);
        let first_len = bare.lane(LaneId(ids[0])).expect("layout lane").length();
        let s = first_len - rng.gen_range(25.0..80.0);
        let speed = rng.gen_range(3.0..9.0);
        let cand = Placed { kind: AgentKind::Vehicle, path, s: s.max(0.0), speed };
        let cand_state = history_along(&cand.path, cand.s, speed)[HISTORY_STATES - 1];
        let clear = placed.iter().all(|(_, o)| {
            let os = history_along(&o.path, o.s, o.speed)[HISTORY_STATES - 1];
            os.position.distance(cand_state.position) > 8.0
        });
        if clear {
            placed.push((KEY + 1 + n as u64, cand));
        }
    }
    file.agents = placed.iter().map(|(id, p)| p.record(*id)).collect();

    // Verify the key interaction with the conflict engine.
    let scenario = file.validate().map_err(|e| fail(format!("generated file is invalid: {e}")))?;
    let ego_state = *scenario.ego().current();
    let plan = EgoPlan::along(
        Arc::new(placed[0].1.path.clone()),
        placed[0].1.s,
        ego_state.speed,
        ego_state.time_index,
        &PlannerConfig::default(),
        Dimensions::default_for(AgentKind::Vehicle),
        &[],
    );
    let key_traj = placed[1].1.constant(plan.trajectory.len() - 1);
    let key_dims = Dimensions::default_for(lay.key_kind);
    let ego_track = Track::new(AgentId(EGO), &plan.trajectory, plan.dims);
    let key_track = Track::new(AgentId(KEY), &key_traj, key_dims);
    let conflict = detect_spatial_conflict(ego_track, key_track)
        .ok_or_else(|| fail("the agent does not reach the ego plan within the horizon".into()))?;
    let class = classify_conflict(&scenario.graph, ego_track, key_track, Some(&conflict));
    if class != ConflictClass::NonTrivial {
        return Err(fail(format!("key conflict is {class:?}, not non-trivial")));
    }
    file.key_interaction =
        Some(KeyInteraction { agent_id: KEY, relation: label_relation(&conflict, &plan.trajectory, &key_traj), class });
    if params.with_futures {
        file.ground_truth_futures = Some(
            placed[1..]
                .iter()
                .map(|(id, p)| (*id, p.constant(FUTURE_STEPS).states().iter().map(StateRecord::from_state).collect()))
                .collect(),
        );
    }
    Ok(file)
}

fn file_graph(file: &ScenarioFile) -> Result<LaneGraph, SyntheticError> {
    let lanes = file
        .lanes
        .iter()
        .map(|l| {
            crate::lane_map::Lane::new(
                LaneId(l.id),
                l.centerline.clone(),
                l.speed_limit,
                l.successors.iter().map(|&s| LaneId(s)).collect(),
                l.signal_red,
            )
        })
        .collect::<Result<Vec<_>, _>>()
        .expect("layout lanes are valid");
    Ok(LaneGraph::new(lanes).expect("layout graph is valid"))
}

/// Seed for scenario `index`, attempt `attempt`, of a batch.
pub fn batch_seed(master: u64, index: usize, attempt: u32) -> u64 {
    let mut z = master ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (u64::from(attempt) << 48);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `count` scenarios cycling through `templates`, each from its own seed;
/// parameter draws that fail verification are redrawn.
pub fn generate_batch(
    templates: &[Template],
    count: usize,
    master_seed: u64,
    with_futures: bool,
) -> Result<Vec<ScenarioFile>, SyntheticError> {
    let templates = if templates.is_empty() { &Template::ALL[..] } else { templates };
    (0..count)
        .map(|i| {
            let template = templates[i % templates.len()];
            let id = format!("{}_{i:04}", template.slug());
            (0..MAX_ATTEMPTS)
                .find_map(|attempt| {
                    let mut rng = ChaCha8Rng::seed_from_u64(batch_seed(master_seed, i, attempt));
                    let params = SyntheticParams { with_futures, ..SyntheticParams::sample(template, &mut rng) };
                    generate_synthetic(template, &params, &id).ok()
                })
                .ok_or(SyntheticError::Exhausted { template, index: i })
        })
        .collect()
}
