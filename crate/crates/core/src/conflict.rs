//! Spatial conflicts, collisions, arrival-order relations and conflict
//! classification.
//!
//! A conflict is any pair of indices at which two footprint sequences
//! overlap, regardless of timing. A collision additionally requires the two
//! states to share a time index.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::geometry::{heading_difference, AgentId, Dimensions, Point2, PreparedBox, Trajectory};
use crate::lane_map::LaneGraph;
use crate::predictor::PredictionSet;

/// Headings closer than this count as the same travel direction when
/// classifying blocking conflicts.
pub const BLOCKING_HEADING: f64 = std::f64::consts::PI / 6.0;

/// A trajectory together with the footprint size of the agent following it.
#[derive(Debug, Clone, Copy)]
pub struct Track<'a> {
    pub id: AgentId,
    pub trajectory: &'a Trajectory,
    pub dims: Dimensions,
}

impl<'a> Track<'a> {
    pub fn new(id: AgentId, trajectory: &'a Trajectory, dims: Dimensions) -> Self {
        Track { id, trajectory, dims }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conflict {
    pub agent_a: AgentId,
    pub agent_b: AgentId,
    pub index_a: usize,
    pub index_b: usize,
    pub cross_point: Point2,
    pub distance_a: f64,
    pub distance_b: f64,
}

impl Conflict {
    /// The same conflict seen from the other trajectory.
    pub fn swapped(&self) -> Conflict {
        Conflict {
            agent_a: self.agent_b,
            agent_b: self.agent_a,
            index_a: self.index_b,
            index_b: self.index_a,
            cross_point: self.cross_point,
            distance_a: self.distance_b,
            distance_b: self.distance_a,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    Pass,
    Yield,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConflictClass {
    NoConflict,
    TrivialBlocking,
    TrivialTrafficLight,
    NonTrivial,
}

/// Precomputed footprints of one trajectory.
#[derive(Debug, Clone)]
pub struct Footprints {
    boxes: Vec<PreparedBox>,
    distances: Vec<f64>,
    times: Vec<i64>,
    radius: f64,
    lo: Point2,
    hi: Point2,
}

impl Footprints {
    pub fn new(trajectory: &Trajectory, dims: Dimensions) -> Self {
        let boxes: Vec<PreparedBox> =
            trajectory.states().iter().map(|s| PreparedBox::new(&dims.footprint(s))).collect();
        let radius = dims.circumradius();
        let mut lo = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for b in &boxes {
            lo = Point2::new(lo.x.min(b.center.x), lo.y.min(b.center.y));
            hi = Point2::new(hi.x.max(b.center.x), hi.y.max(b.center.y));
        }
        Footprints {
            boxes,
            distances: trajectory.cumulative_distances(),
            times: trajectory.states().iter().map(|s| s.time_index).collect(),
            radius,
            lo,
            hi,
        }
    }

    pub fn len(&self) -> usize {
        self.boxes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.boxes.is_empty()
    }

    fn far_apart(&self, other: &Footprints) -> bool {
        let r = self.radius + other.radius + 1e-9;
        self.lo.x - r > other.hi.x
            || other.lo.x - r > self.hi.x
            || self.lo.y - r > other.hi.y
            || other.lo.y - r > self.hi.y
    }

    fn overlap_at(&self, i: usize, other: &Footprints, j: usize) -> bool {
        let (a, b) = (&self.boxes[i], &other.boxes[j]);
        // Disjoint circumcircles cannot hold overlapping boxes.
        if a.center.distance(b.center) > self.radius + other.radius + 1e-9 {
            return false;
        }
        a.overlaps(b)
    }
}

/// Earliest spatial conflict: the overlapping index pair with the smallest
/// distance along `a`, then the smallest distance along `b`.
pub fn detect_spatial_conflict(a: Track<'_>, b: Track<'_>) -> Option<Conflict> {
    let fa = Footprints::new(a.trajectory, a.dims);
    let fb = Footprints::new(b.trajectory, b.dims);
    spatial_conflict_prepared(a.id, &fa, b.id, &fb)
}

/// [`detect_spatial_conflict`] over precomputed footprints.
pub fn spatial_conflict_prepared(id_a: AgentId, fa: &Footprints, id_b: AgentId, fb: &Footprints) -> Option<Conflict> {
    if fa.is_empty() || fb.is_empty() || fa.far_apart(fb) {
        return None;
    }
    let mut best: Option<(usize, usize)> = None;
    for i in 0..fa.len() {
        if let Some((bi, _)) = best {
            if fa.distances[i] > fa.distances[bi] {
                break;
            }
        }
        for j in 0..fb.len() {
            if let Some((bi, bj)) = best {
                if fa.distances[i] == fa.distances[bi] && fb.distances[j] >= fb.distances[bj] {
                    break;
                }
            }
            if fa.overlap_at(i, fb, j) {
                // Distances along b are non-decreasing, so this j is the best for i.
                best = Some((i, j));
                break;
            }
        }
    }
    best.map(|(i, j)| Conflict {
        agent_a: id_a,
        agent_b: id_b,
        index_a: i,
        index_b: j,
        cross_point: fa.boxes[i].center.lerp(fb.boxes[j].center, 0.5),
        distance_a: fa.distances[i],
        distance_b: fb.distances[j],
    })
}

/// Smallest shared time index at which the footprints overlap.
pub fn detect_collision(a: Track<'_>, b: Track<'_>) -> Option<i64> {
    let fa = Footprints::new(a.trajectory, a.dims);
    let fb = Footprints::new(b.trajectory, b.dims);
    collision_prepared(&fa, &fb)
}

/// [`detect_collision`] over precomputed footprints.
pub fn collision_prepared(fa: &Footprints, fb: &Footprints) -> Option<i64> {
    if fa.is_empty() || fb.is_empty() || fa.far_apart(fb) {
        return None;
    }
    let start = fa.times[0].max(fb.times[0]);
    let end = fa.times[fa.len() - 1].min(fb.times[fb.len() - 1]);
    (start..=end).find(|&t| {
        let i = (t - fa.times[0]) as usize;
        let j = (t - fb.times[0]) as usize;
        fa.overlap_at(i, fb, j)
    })
}

/// Relation of the agent (`agent_b` side of `conflict`) to the ego: Pass if
/// it reaches its conflict index strictly before the ego reaches its own.
pub fn label_relation(conflict: &Conflict, ego: &Trajectory, agent: &Trajectory) -> Relation {
    let ego_t = ego.states()[conflict.index_a].time_index;
    let agent_t = agent.states()[conflict.index_b].time_index;
    if agent_t < ego_t {
        Relation::Pass
    } else {
        Relation::Yield
    }
}

/// Classifies a conflict between tracks `a` and `b` (in that order).
///
/// The yielding side is the one labelled Yield by [`label_relation`] with
/// `a` as the reference. Blocking: the yielder's conflict position lies on
/// the passer's path ahead of the passer's conflict index, laterally within
/// half the summed widths, with headings within 30°. Traffic light: the
/// yielder starts on a lane flagged red.
pub fn classify_conflict(graph: &LaneGraph, a: Track<'_>, b: Track<'_>, conflict: Option<&Conflict>) -> ConflictClass {
    let Some(c) = conflict else {
        return ConflictClass::NoConflict;
    };
    let (yielder, yi, passer, pi) = match label_relation(c, a.trajectory, b.trajectory) {
        Relation::Pass => (a, c.index_a, b, c.index_b),
        Relation::Yield => (b, c.index_b, a, c.index_a),
    };
    let ys = yielder.trajectory.states()[yi];
    let ps = passer.trajectory.states()[pi];
    let lateral = lateral_offset(&passer.trajectory.states()[pi..], ys.position);
    if heading_difference(ys.heading, ps.heading) <= BLOCKING_HEADING && lateral <= 0.5 * (a.dims.width + b.dims.width)
    {
        return ConflictClass::TrivialBlocking;
    }
    let start = yielder.trajectory.first();
    if let Ok(lanes) = graph.aligned_lanes(start.position, start.heading, 0.5) {
        if lanes.first().is_some_and(|(id, _)| graph.lane(*id).is_ok_and(|l| l.signal_red)) {
            return ConflictClass::TrivialTrafficLight;
        }
    }
    ConflictClass::NonTrivial
}

fn lateral_offset(states: &[crate::geometry::AgentState], p: Point2) -> f64 {
    if states.len() == 1 {
        return states[0].position.distance(p);
    }
    states.windows(2).map(|w| point_segment_distance(p, w[0].position, w[1].position)).fold(f64::INFINITY, f64::min)
}

fn point_segment_distance(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// A colliding predicted sample and its conflict with the plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CollidingSample {
    pub agent: AgentId,
    pub sample: usize,
    pub collision_time: i64,
    pub conflict: Conflict,
}

/// Every predicted sample that collides (same time index) with the plan,
/// with its earliest spatial conflict. `keep` filters samples by agent,
/// sample index and the time of the first colliding state.
pub fn colliding_samples<F>(
    ego_id: AgentId,
    plan: &Footprints,
    predictions: &BTreeMap<AgentId, PredictionSet>,
    dims: &BTreeMap<AgentId, Dimensions>,
    mut keep: F,
) -> Vec<CollidingSample>
where
    F: FnMut(AgentId, usize, i64) -> bool,
{
    let mut out = Vec::new();
    for (id, set) in predictions {
        let Some(d) = dims.get(id) else { continue };
        for (k, sample) in set.samples.iter().enumerate() {
            let fs = Footprints::new(sample, *d);
            let Some(t) = collision_prepared(plan, &fs) else { continue };
            if !keep(*id, k, t) {
                continue;
            }
            let conflict =
                spatial_conflict_prepared(ego_id, plan, *id, &fs).expect("a collision is also a spatial conflict");
            out.push(CollidingSample { agent: *id, sample: k, collision_time: t, conflict });
        }
    }
    out
}

/// Smallest plan-side conflict distance over all predicted samples that
/// collide with the plan.
pub fn earliest_cross_distance(
    ego_id: AgentId,
    plan: &Trajectory,
    plan_dims: Dimensions,
    predictions: &BTreeMap<AgentId, PredictionSet>,
    dims: &BTreeMap<AgentId, Dimensions>,
) -> Option<f64> {
    let fp = Footprints::new(plan, plan_dims);
    colliding_samples(ego_id, &fp, predictions, dims, |_, _, _| true)
        .iter()
        .map(|c| c.conflict.distance_a)
        .min_by(f64::total_cmp)
}
