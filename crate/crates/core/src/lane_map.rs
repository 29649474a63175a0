//! Lane graph, closest-lane queries and route search.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{heading_difference, Point2};
use crate::path::{route_centerline, Path};

/// A route passes the goal when its centerline comes within this distance.
pub const GOAL_RADIUS: f64 = 3.0;

pub const DEFAULT_MAX_DEPTH: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MapError {
    #[error("lane graph is empty")]
    EmptyGraph,
    #[error("lane {0} does not exist")]
    UnknownLane(LaneId),
    #[error("lane {0} is defined twice")]
    DuplicateLane(LaneId),
    #[error("lane {lane} lists unknown successor {successor}")]
    DanglingSuccessor { lane: LaneId, successor: LaneId },
    #[error("lane {0} lists itself as a successor")]
    SelfLoop(LaneId),
    #[error("lane {0} centerline needs at least two points")]
    TooFewPoints(LaneId),
    #[error("lane {lane} centerline repeats point {index}")]
    RepeatedPoint { lane: LaneId, index: usize },
    #[error("lane {lane} has non-finite centerline point {index}")]
    NonFinitePoint { lane: LaneId, index: usize },
    #[error("lane {lane} speed limit must be positive, got {limit}")]
    InvalidSpeedLimit { lane: LaneId, limit: f64 },
    #[error("route is empty")]
    EmptyRoute,
    #[error("route step {from} -> {to} is not a successor link")]
    Disconnected { from: LaneId, to: LaneId },
    #[error("no routes to choose from")]
    NoRoutes,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LaneId(pub u64);

impl fmt::Display for LaneId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone)]
pub struct Lane {
    pub id: LaneId,
    pub centerline: Vec<Point2>,
    pub speed_limit: f64,
    pub successors: Vec<LaneId>,
    /// Static red-signal flag for the lane's stop line.
    pub signal_red: bool,
    path: Path,
}

impl Lane {
    pub fn new(
        id: LaneId,
        centerline: Vec<Point2>,
        speed_limit: f64,
        successors: Vec<LaneId>,
        signal_red: bool,
    ) -> Result<Lane, MapError> {
        if centerline.len() < 2 {
            return Err(MapError::TooFewPoints(id));
        }
        for (i, p) in centerline.iter().enumerate() {
            if !p.is_finite() {
                return Err(MapError::NonFinitePoint { lane: id, index: i });
            }
            if i > 0 && centerline[i - 1].distance(*p) < 1e-9 {
                return Err(MapError::RepeatedPoint { lane: id, index: i });
            }
        }
        if !(speed_limit > 0.0) || !speed_limit.is_finite() {
            return Err(MapError::InvalidSpeedLimit { lane: id, limit: speed_limit });
        }
        let path =
            Path::new(centerline.clone(), vec![speed_limit; centerline.len()]).ok_or(MapError::TooFewPoints(id))?;
        Ok(Lane { id, centerline, speed_limit, successors, signal_red, path })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn length(&self) -> f64 {
        self.path.length()
    }

    /// Distance from `p` to the closest centerline segment.
    pub fn distance_to(&self, p: Point2) -> f64 {
        self.path.project(p, f64::INFINITY).1
    }
}

/// Immutable lane graph keyed by lane id.
#[derive(Debug, Clone)]
pub struct LaneGraph {
    lanes: BTreeMap<LaneId, Lane>,
}

impl LaneGraph {
    pub fn new(lanes: Vec<Lane>) -> Result<LaneGraph, MapError> {
        let mut map = BTreeMap::new();
        for mut lane in lanes {
            let mut seen = BTreeSet::new();
            lane.successors.retain(|s| seen.insert(*s));
            let id = lane.id;
            if map.insert(id, lane).is_some() {
                return Err(MapError::DuplicateLane(id));
            }
        }
        for lane in map.values() {
            for s in &lane.successors {
                if *s == lane.id {
                    return Err(MapError::SelfLoop(lane.id));
                }
                if !map.contains_key(s) {
                    return Err(MapError::DanglingSuccessor { lane: lane.id, successor: *s });
                }
            }
        }
        Ok(LaneGraph { lanes: map })
    }

    pub fn lane(&self, id: LaneId) -> Result<&Lane, MapError> {
        self.lanes.get(&id).ok_or(MapError::UnknownLane(id))
    }

    pub fn lanes(&self) -> impl Iterator<Item = &Lane> {
        self.lanes.values()
    }

    pub fn len(&self) -> usize {
        self.lanes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lanes.is_empty()
    }

    /// Lane with the smallest point-to-centerline distance, ties to the
    /// smallest id.
    pub fn closest_lane(&self, p: Point2) -> Result<LaneId, MapError> {
        self.closest_lane_with_distance(p).map(|(id, _)| id)
    }

    pub fn closest_lane_with_distance(&self, p: Point2) -> Result<(LaneId, f64), MapError> {
        let mut best: Option<(LaneId, f64)> = None;
        for lane in self.lanes.values() {
            let d = lane.distance_to(p);
            if best.is_none_or(|(_, bd)| d < bd) {
                best = Some((lane.id, d));
            }
        }
        best.ok_or(MapError::EmptyGraph)
    }

    /// Lanes whose local direction is within 90° of `heading`, closest first.
    ///
    /// Returns every aligned lane within `slack` meters of the best aligned
    /// distance (lanes that diverge from a shared start point tie at the
    /// fork), or the plain closest lane when none is aligned.
    pub fn aligned_lanes(&self, p: Point2, heading: f64, slack: f64) -> Result<Vec<(LaneId, f64)>, MapError> {
        if self.lanes.is_empty() {
            return Err(MapError::EmptyGraph);
        }
        let mut aligned: Vec<(LaneId, f64)> = self
            .lanes
            .values()
            .filter_map(|lane| {
                let (s, d) = lane.path.project(p, f64::INFINITY);
                let dir = lane.path.heading_at(s.min(lane.length() - 1e-9));
                (heading_difference(dir, heading) <= std::f64::consts::FRAC_PI_2).then_some((lane.id, d))
            })
            .collect();
        if aligned.is_empty() {
            return Ok(vec![self.closest_lane_with_distance(p)?]);
        }
        aligned.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        let best = aligned[0].1;
        aligned.retain(|(_, d)| *d <= best + slack);
        Ok(aligned)
    }
}

/// Ordered, successor-connected lane sequence.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Route {
    lane_ids: Vec<LaneId>,
}

impl Route {
    pub fn new(graph: &LaneGraph, lane_ids: Vec<LaneId>) -> Result<Route, MapError> {
        if lane_ids.is_empty() {
            return Err(MapError::EmptyRoute);
        }
        for id in &lane_ids {
            graph.lane(*id)?;
        }
        for w in lane_ids.windows(2) {
            if !graph.lane(w[0])?.successors.contains(&w[1]) {
                return Err(MapError::Disconnected { from: w[0], to: w[1] });
            }
        }
        Ok(Route { lane_ids })
    }

    pub fn lane_ids(&self) -> &[LaneId] {
        &self.lane_ids
    }

    pub fn length(&self, graph: &LaneGraph) -> f64 {
        self.lane_ids.iter().filter_map(|id| graph.lane(*id).ok()).map(Lane::length).sum()
    }
}

/// All successor chains from `start`, each expanded until its cumulative
/// centerline length reaches `min_length`, it holds `max_depth` lanes, or
/// the last lane has no successors. Sorted lexicographically by lane ids.
pub fn enumerate_routes(
    graph: &LaneGraph,
    start: LaneId,
    min_length: f64,
    max_depth: usize,
) -> Result<Vec<Route>, MapError> {
    let first = graph.lane(start)?;
    let max_depth = max_depth.max(1);
    let mut out = Vec::new();
    let mut chain = vec![start];
    expand(graph, &mut chain, first.length(), min_length, max_depth, &mut out);
    out.sort();
    out.dedup();
    Ok(out.into_iter().map(|lane_ids| Route { lane_ids }).collect())
}

fn expand(
    graph: &LaneGraph,
    chain: &mut Vec<LaneId>,
    length: f64,
    min_length: f64,
    max_depth: usize,
    out: &mut Vec<Vec<LaneId>>,
) {
    let last = graph.lanes[chain.last().expect("non-empty chain")].clone_successors();
    if length >= min_length || chain.len() >= max_depth || last.is_empty() {
        out.push(chain.clone());
        return;
    }
    for next in last {
        let len = graph.lanes[&next].length();
        chain.push(next);
        expand(graph, chain, length + len, min_length, max_depth, out);
        chain.pop();
    }
}

impl Lane {
    fn clone_successors(&self) -> Vec<LaneId> {
        let mut s = self.successors.clone();
        s.sort();
        s
    }
}

/// Picks the route that passes `goal` soonest along the route; routes that
/// never come within [`GOAL_RADIUS`] of the goal are not eligible. Without a
/// goal, or when no route is eligible, picks uniformly with `rng`.
pub fn select_route<R: Rng + ?Sized>(
    routes: &[Route],
    graph: &LaneGraph,
    goal: Option<Point2>,
    rng: &mut R,
) -> Result<Route, MapError> {
    if routes.is_empty() {
        return Err(MapError::NoRoutes);
    }
    if let Some(goal) = goal {
        let mut best: Option<(usize, f64)> = None;
        for (i, route) in routes.iter().enumerate() {
            let center = route_centerline(graph, route);
            let (s, d) = center.path.project(goal, f64::INFINITY);
            if d <= GOAL_RADIUS && best.is_none_or(|(_, bs)| s < bs) {
                best = Some((i, s));
            }
        }
        if let Some((i, _)) = best {
            return Ok(routes[i].clone());
        }
    }
    Ok(routes[rng.gen_range(0..routes.len())].clone())
}
