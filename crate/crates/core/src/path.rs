//! Arc-length parameterized polylines and route path construction.

use rand::Rng;

use crate::geometry::{sample_bezier, Point2};
use crate::lane_map::{LaneGraph, Route};

/// Maximum distance between consecutive path points.
pub const PATH_SPACING: f64 = 0.5;

/// Fraction of a lane's length inside which a randomized junction point falls.
pub const JUNCTION_WINDOW: f64 = 0.25;

/// Polyline with cumulative arc length and a speed limit per segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    points: Vec<Point2>,
    arc: Vec<f64>,
    /// `limits[i]` applies to the segment `points[i] -> points[i + 1]`.
    limits: Vec<f64>,
}

impl Path {
    /// Builds a path, dropping consecutive duplicate points. Needs at least
    /// two distinct points.
    pub fn new(points: Vec<Point2>, limits: Vec<f64>) -> Option<Path> {
        assert_eq!(points.len(), limits.len(), "one limit per point");
        let mut pts: Vec<Point2> = Vec::with_capacity(points.len());
        let mut lim: Vec<f64> = Vec::with_capacity(points.len());
        for (p, l) in points.into_iter().zip(limits) {
            if let Some(last) = pts.last() {
                if last.distance(p) < 1e-9 {
                    continue;
                }
            }
            pts.push(p);
            lim.push(l);
        }
        if pts.len() < 2 {
            return None;
        }
        let mut arc = Vec::with_capacity(pts.len());
        let mut acc = 0.0;
        arc.push(0.0);
        for w in pts.windows(2) {
            acc += w[0].distance(w[1]);
            arc.push(acc);
        }
        Some(Path { points: pts, arc, limits: lim })
    }

    /// Straight path of the given length starting at `origin`.
    pub fn ray(origin: Point2, heading: f64, length: f64, limit: f64) -> Path {
        let end = origin + Point2::from_heading(heading) * length.max(1e-3);
        let mut b = PathBuilder::default();
        b.push(origin, limit);
        b.extend_densified(&[end], limit);
        b.build().expect("ray has two distinct points")
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn arc_lengths(&self) -> &[f64] {
        &self.arc
    }

    pub fn length(&self) -> f64 {
        self.arc[self.arc.len() - 1]
    }

    fn segment_index(&self, s: f64) -> usize {
        let n = self.points.len();
        let i = self.arc.partition_point(|&a| a <= s);
        i.saturating_sub(1).min(n - 2)
    }

    /// Position and heading at arc length `s`; extrapolates along the end
    /// segments outside `[0, length]`.
    pub fn pose_at(&self, s: f64) -> (Point2, f64) {
        let i = self.segment_index(s);
        let (a, b) = (self.points[i], self.points[i + 1]);
        let seg = self.arc[i + 1] - self.arc[i];
        let t = (s - self.arc[i]) / seg;
        let heading = (b - a).angle();
        (a.lerp(b, t), heading)
    }

    pub fn heading_at(&self, s: f64) -> f64 {
        self.pose_at(s).1
    }

    pub fn limit_at(&self, s: f64) -> f64 {
        self.limits[self.segment_index(s)]
    }

    /// Arc positions where the speed limit decreases, with the new limit.
    pub fn limit_drops(&self) -> Vec<(f64, f64)> {
        let n = self.points.len();
        let mut out = Vec::new();
        for i in 1..n - 1 {
            if self.limits[i] < self.limits[i - 1] {
                out.push((self.arc[i], self.limits[i]));
            }
        }
        out
    }

    /// Closest point on the path with arc length at most `s_max`.
    /// Returns `(s, distance)`; ties keep the smaller `s`.
    pub fn project(&self, p: Point2, s_max: f64) -> (f64, f64) {
        let mut best = (0.0, f64::INFINITY);
        for i in 0..self.points.len() - 1 {
            if self.arc[i] > s_max {
                break;
            }
            let (a, b) = (self.points[i], self.points[i + 1]);
            let ab = b - a;
            let len2 = ab.dot(ab);
            let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
            let s = (self.arc[i] + t * (self.arc[i + 1] - self.arc[i])).min(s_max);
            let q = self.pose_at(s).0;
            let d = q.distance(p);
            if d < best.1 {
                best = (s, d);
            }
        }
        best
    }

    /// Sub-path over `[s0, s1]` (clamped to the path). Each point carries the
    /// limit of the segment that ends at it; the first carries the limit at `s0`.
    pub fn slice(&self, s0: f64, s1: f64) -> Vec<(Point2, f64)> {
        let s0 = s0.clamp(0.0, self.length());
        let s1 = s1.clamp(s0, self.length());
        let mut out = vec![(self.pose_at(s0).0, self.limit_at(s0))];
        let mut prev = s0;
        for i in 0..self.points.len() {
            if self.arc[i] > s0 && self.arc[i] < s1 {
                out.push((self.points[i], self.limit_at(0.5 * (prev + self.arc[i]))));
                prev = self.arc[i];
            }
        }
        out.push((self.pose_at(s1).0, self.limit_at(0.5 * (prev + s1))));
        out
    }
}

/// Accumulates points and limits, densifying long segments.
#[derive(Debug, Default)]
pub struct PathBuilder {
    points: Vec<Point2>,
    limits: Vec<f64>,
}

impl PathBuilder {
    pub fn last(&self) -> Option<Point2> {
        self.points.last().copied()
    }

    /// Sets the limit of the segment starting at the current last point.
    pub fn set_outgoing_limit(&mut self, limit: f64) {
        if let Some(l) = self.limits.last_mut() {
            *l = limit;
        }
    }

    pub fn push(&mut self, p: Point2, limit: f64) {
        if let Some(last) = self.points.last() {
            if last.distance(p) < 1e-9 {
                return;
            }
        }
        self.points.push(p);
        self.limits.push(limit);
    }

    /// Appends points, inserting intermediate points so that no segment is
    /// longer than [`PATH_SPACING`].
    pub fn extend_densified(&mut self, pts: &[Point2], limit: f64) {
        for &p in pts {
            if let Some(last) = self.last() {
                let d = last.distance(p);
                if d < 1e-9 {
                    continue;
                }
                self.set_outgoing_limit(limit);
                let n = (d / PATH_SPACING).ceil() as usize;
                for k in 1..n {
                    self.push(last.lerp(p, k as f64 / n as f64), limit);
                }
            }
            self.push(p, limit);
        }
    }

    pub fn build(self) -> Option<Path> {
        Path::new(self.points, self.limits)
    }
}

/// How junction points between consecutive lanes are chosen.
pub enum Junctions<'a, R: Rng + ?Sized> {
    /// Leave each lane at its end and join the next at its start.
    Endpoints,
    /// Exit point uniform in the last 25% of a lane, entry uniform in the
    /// first 25% of the next.
    Randomized(&'a mut R),
}

/// Route centerline with Bézier connectors between consecutive lanes.
#[derive(Debug, Clone)]
pub struct RoutePath {
    pub path: Path,
    /// Arc length at which the first lane is left.
    pub first_lane_end: f64,
}

fn connector(from: (Point2, f64), to: (Point2, f64)) -> Vec<Point2> {
    let d = from.0.distance(to.0);
    if d < 1e-9 {
        return vec![to.0];
    }
    let h = d / 3.0;
    let ctrl = [from.0, from.0 + Point2::from_heading(from.1) * h, to.0 - Point2::from_heading(to.1) * h, to.0];
    sample_bezier(&ctrl, PATH_SPACING).expect("positive spacing")
}

/// Concatenates the route's centerlines, joining lanes with cubic Bézier
/// connectors at the chosen junction points.
pub fn route_path<R: Rng + ?Sized>(graph: &LaneGraph, route: &Route, mut junctions: Junctions<'_, R>) -> RoutePath {
    let lanes: Vec<_> = route.lane_ids().iter().map(|id| graph.lane(*id).expect("route lanes exist")).collect();
    let mut b = PathBuilder::default();
    let mut entry = 0.0;
    let mut first_lane_end = 0.0;
    for (k, lane) in lanes.iter().enumerate() {
        let center = lane.path();
        let len = center.length();
        let exit = if k + 1 == lanes.len() {
            len
        } else {
            match &mut junctions {
                Junctions::Endpoints => len,
                Junctions::Randomized(rng) => len * (1.0 - JUNCTION_WINDOW * rng.gen::<f64>()),
            }
        };
        let exit = exit.max(entry);
        for (p, l) in center.slice(entry, exit) {
            b.extend_densified(&[p], l);
        }
        if k == 0 {
            first_lane_end = b.build_len();
        }
        if let Some(next) = lanes.get(k + 1) {
            let next_path = next.path();
            entry = match &mut junctions {
                Junctions::Endpoints => 0.0,
                Junctions::Randomized(rng) => next_path.length() * JUNCTION_WINDOW * rng.gen::<f64>(),
            };
            let from = center.pose_at(exit);
            let to = next_path.pose_at(entry);
            let limit = lane.speed_limit.min(next.speed_limit);
            let pts = connector(from, to);
            b.extend_densified(&pts, limit);
        }
    }
    let path = b.build().expect("lanes have distinct points");
    RoutePath { path, first_lane_end }
}

/// Route centerline joined at lane endpoints (no randomization).
pub fn route_centerline(graph: &LaneGraph, route: &Route) -> RoutePath {
    route_path::<rand_chacha::ChaCha8Rng>(graph, route, Junctions::Endpoints)
}

impl PathBuilder {
    fn build_len(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].distance(w[1])).sum()
    }
}

/// Joins a pose onto a route path with a Bézier connector and continues
/// along the route.
pub fn onboard(route: &RoutePath, position: Point2, heading: f64, speed: f64) -> Path {
    let path = &route.path;
    let (s_proj, dist) = path.project(position, route.first_lane_end);
    let lookahead = (speed * 1.0).clamp(2.0, 10.0).max(2.0 * dist);
    let s_join = (s_proj + lookahead).min(path.length());
    let (join, join_heading) = path.pose_at(s_join);
    let limit = path.limit_at(s_proj);
    let mut b = PathBuilder::default();
    b.push(position, limit);
    let d = position.distance(join);
    if d > 1e-9 {
        let h = d / 3.0;
        let ctrl = [
            position,
            position + Point2::from_heading(heading) * h,
            join - Point2::from_heading(join_heading) * h,
            join,
        ];
        let pts = sample_bezier(&ctrl, PATH_SPACING).expect("positive spacing");
        b.extend_densified(&pts, limit);
    }
    for (p, l) in path.slice(s_join, path.length()).into_iter().skip(1) {
        b.extend_densified(&[p], l);
    }
    match b.build() {
        Some(p) => p,
        // Pose already at the route end: keep moving along the final heading.
        None => Path::ray(position, heading, 1.0, limit),
    }
}
