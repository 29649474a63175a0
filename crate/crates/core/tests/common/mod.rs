//! Brute-force references shared by the property and acceptance suites.
//! Nothing here calls the library's own overlap or scan code.

#![allow(dead_code)]

use conflict_testbed::geometry::{AgentState, Dimensions, OrientedBox, Point2, Trajectory};
use rand::Rng;

fn orient(a: Point2, b: Point2, c: Point2) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn on_segment(a: Point2, b: Point2, p: Point2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

/// Closed segment intersection by orientation signs.
pub fn segments_intersect(p1: Point2, p2: Point2, q1: Point2, q2: Point2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Point inside (or on) a counter-clockwise convex polygon.
pub fn inside_convex(poly: &[Point2], p: Point2) -> bool {
    (0..poly.len()).all(|i| orient(poly[i], poly[(i + 1) % poly.len()], p) >= 0.0)
}

/// Two rectangles overlap iff an edge of one crosses an edge of the other or
/// one contains a corner of the other.
pub fn boxes_overlap_oracle(a: &OrientedBox, b: &OrientedBox) -> bool {
    let ca = a.corners();
    let cb = b.corners();
    for i in 0..4 {
        for j in 0..4 {
            if segments_intersect(ca[i], ca[(i + 1) % 4], cb[j], cb[(j + 1) % 4]) {
                return true;
            }
        }
    }
    inside_convex(&ca, cb[0]) || inside_convex(&cb, ca[0])
}

fn boxes(t: &Trajectory, d: Dimensions) -> Vec<OrientedBox> {
    t.states().iter().map(|s| d.footprint(s)).collect()
}

fn distances(t: &Trajectory) -> Vec<f64> {
    let mut out = vec![0.0];
    for w in t.states().windows(2) {
        out.push(out.last().unwrap() + w[0].position.distance(w[1].position));
    }
    out
}

/// All index pairs; the overlapping pair with the least distance along `a`,
/// then the least along `b`. Returns `(distance_a, distance_b)`.
pub fn spatial_conflict_oracle(a: &Trajectory, da: Dimensions, b: &Trajectory, db: Dimensions) -> Option<(f64, f64)> {
    let (ba, bb) = (boxes(a, da), boxes(b, db));
    let (sa, sb) = (distances(a), distances(b));
    let mut best: Option<(f64, f64)> = None;
    for i in 0..ba.len() {
        for j in 0..bb.len() {
            if boxes_overlap_oracle(&ba[i], &bb[j]) {
                let cand = (sa[i], sb[j]);
                if best.is_none_or(|b| cand.0 < b.0 || (cand.0 == b.0 && cand.1 < b.1)) {
                    best = Some(cand);
                }
            }
        }
    }
    best
}

/// Smallest shared time index with overlapping footprints.
pub fn collision_oracle(a: &Trajectory, da: Dimensions, b: &Trajectory, db: Dimensions) -> Option<i64> {
    let mut first = None;
    for sa in a.states() {
        for sb in b.states() {
            if sa.time_index == sb.time_index && boxes_overlap_oracle(&da.footprint(sa), &db.footprint(sb)) {
                first = Some(first.map_or(sa.time_index, |f: i64| f.min(sa.time_index)));
            }
        }
    }
    first
}

/// A wandering trajectory near the origin: random start, heading, turn rate
/// and acceleration, with occasional stops.
pub fn random_trajectory<R: Rng>(rng: &mut R) -> Trajectory {
    let n = rng.gen_range(1..=60);
    let t0 = rng.gen_range(-5..=5);
    let mut p = Point2::new(rng.gen_range(-25.0..25.0), rng.gen_range(-25.0..25.0));
    let mut h: f64 = rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI);
    let mut v: f64 = rng.gen_range(0.0..8.0);
    let turn = rng.gen_range(-0.05..0.05);
    let acc = rng.gen_range(-0.2..0.2);
    let mut states = Vec::with_capacity(n);
    for k in 0..n {
        states.push(AgentState::new(p, h, v, t0 + k as i64).unwrap());
        p = p + Point2::from_heading(h) * (v * 0.1);
        h += turn;
        v = (v + acc).max(0.0);
    }
    Trajectory::new(states).unwrap()
}

pub fn random_dims<R: Rng>(rng: &mut R) -> Dimensions {
    Dimensions::new(rng.gen_range(0.5..5.0), rng.gen_range(0.5..2.5)).unwrap()
}

pub fn random_box<R: Rng>(rng: &mut R) -> OrientedBox {
    OrientedBox::new(
        Point2::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)),
        rng.gen_range(-4.0..4.0),
        rng.gen_range(0.2..6.0),
        rng.gen_range(0.2..3.0),
    )
    .unwrap()
}
