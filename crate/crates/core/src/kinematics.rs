//! Exact constant-acceleration stepping and constrained speed profiles.

use crate::geometry::STEP_SECONDS;
use crate::path::Path;

const FEASIBILITY_SLACK: f64 = 1e-9;

/// Moves from speed `v` toward `target` for `dt` seconds, accelerating at
/// `accel` or decelerating at `decel` and holding once `target` is reached.
/// Returns the new speed and the exact distance covered.
pub fn advance(v: f64, target: f64, accel: f64, decel: f64, dt: f64) -> (f64, f64) {
    let target = target.max(0.0);
    if v < target {
        let tau = (target - v) / accel;
        if tau >= dt {
            (v + accel * dt, v * dt + 0.5 * accel * dt * dt)
        } else {
            (target, v * tau + 0.5 * accel * tau * tau + target * (dt - tau))
        }
    } else if v > target {
        let tau = (v - target) / decel;
        if tau >= dt {
            (v - decel * dt, v * dt - 0.5 * decel * dt * dt)
        } else {
            (target, v * tau - 0.5 * decel * tau * tau + target * (dt - tau))
        }
    } else {
        (v, v * dt)
    }
}

/// Must come to rest at or before `at` (arc length) braking at `decel`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StopConstraint {
    pub at: f64,
    pub decel: f64,
}

impl StopConstraint {
    pub fn satisfied(&self, s: f64, v: f64) -> bool {
        s + v * v / (2.0 * self.decel) <= self.at + FEASIBILITY_SLACK
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub accel: f64,
    pub comfort_decel: f64,
}

/// Arc positions and speeds of a profile, one entry per grid state.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub arc: Vec<f64>,
    pub speed: Vec<f64>,
}

/// Whether a step from arc `from` landing at `(s, v)` can still honour every
/// limit drop ahead of `from`. Drops passed during the step bound `v` itself.
fn limit_ok(drops: &[(f64, f64)], decel: f64, from: f64, s: f64, v: f64) -> bool {
    drops.iter().filter(|(at, _)| *at > from).all(|&(at, lim)| {
        if at <= s {
            v <= lim + FEASIBILITY_SLACK
        } else {
            v * v <= lim * lim + 2.0 * decel * (at - s) + FEASIBILITY_SLACK
        }
    })
}

/// Speed profile along `path` from `(s0, v0)` over `steps` grid steps.
///
/// Each step tracks the local speed limit (accelerating at `rates.accel`,
/// decelerating at `rates.comfort_decel`). A step that would make an
/// upcoming limit drop or a stop constraint unreachable at its braking rate
/// is replaced by holding speed, and failing that by braking.
pub fn speed_profile(path: &Path, s0: f64, v0: f64, steps: usize, rates: Rates, stops: &[StopConstraint]) -> Profile {
    let drops = path.limit_drops();
    let mut arc = Vec::with_capacity(steps + 1);
    let mut speed = Vec::with_capacity(steps + 1);
    let (mut s, mut v) = (s0, v0.max(0.0));
    arc.push(s);
    speed.push(v);
    for _ in 0..steps {
        let feasible = |s1: f64, v1: f64| {
            limit_ok(&drops, rates.comfort_decel, s, s1, v1) && stops.iter().all(|c| c.satisfied(s1, v1))
        };
        let target = path.limit_at(s);
        let (vc, dc) = advance(v, target, rates.accel, rates.comfort_decel, STEP_SECONDS);
        let (vn, dn) = if feasible(s + dc, vc) {
            (vc, dc)
        } else if vc > v && feasible(s + v * STEP_SECONDS, v) {
            (v, v * STEP_SECONDS)
        } else {
            brake(&drops, rates.comfort_decel, stops, s, v)
        };
        s += dn;
        v = vn;
        arc.push(s);
        speed.push(v);
    }
    Profile { arc, speed }
}

fn brake(drops: &[(f64, f64)], comfort: f64, stops: &[StopConstraint], s: f64, v: f64) -> (f64, f64) {
    let mut decel = 0.0_f64;
    let mut floor = f64::INFINITY;
    for c in stops {
        if !c.satisfied(s + v * STEP_SECONDS, v) {
            decel = decel.max(c.decel);
            floor = 0.0;
        }
    }
    for &(at, lim) in drops.iter().filter(|(at, _)| *at > s) {
        let s1 = s + v * STEP_SECONDS;
        if v * v > lim * lim + 2.0 * comfort * (at - s1).max(0.0) {
            decel = decel.max(comfort);
            floor = floor.min(lim);
        }
    }
    if decel == 0.0 {
        // Holding was infeasible only marginally: brake at the mildest rate.
        decel = stops.iter().map(|c| c.decel).fold(comfort, f64::min);
        floor = 0.0;
    }
    advance(v, floor.min(v), 1.0, decel, STEP_SECONDS)
}
