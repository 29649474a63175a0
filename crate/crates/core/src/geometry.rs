//! Geometric and kinematic primitives shared by every other module.
//!
//! All trajectories in the crate live on a fixed 0.1 s grid: a state carries
//! an integer `time_index` and consecutive states differ by exactly one step.

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Simulation, prediction and planning step.
pub const STEP_SECONDS: f64 = 0.1;

/// Tolerance used by [`Trajectory::is_speed_consistent`].
pub const SPEED_CONSISTENCY_TOLERANCE: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("bezier parameter t = {0} is outside [0, 1]")]
    ParameterOutOfRange(f64),
    #[error("box dimensions must be positive, got {length} x {width}")]
    InvalidDimensions { length: f64, width: f64 },
    #[error("sample spacing must be positive, got {0}")]
    InvalidSpacing(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("negative speed {0}")]
    NegativeSpeed(f64),
    #[error("trajectory must contain at least one state")]
    EmptyTrajectory,
    #[error("time index jumps from {prev} to {next} at state {at}")]
    TimeGap { at: usize, prev: i64, next: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl From<[f64; 2]> for Point2 {
    fn from(v: [f64; 2]) -> Self {
        Point2::new(v[0], v[1])
    }
}

impl From<Point2> for [f64; 2] {
    fn from(p: Point2) -> Self {
        [p.x, p.y]
    }
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    /// Unit vector pointing along `heading`.
    pub fn from_heading(heading: f64) -> Self {
        Point2::new(heading.cos(), heading.sin())
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn dot(self, o: Point2) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point2) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn distance(self, o: Point2) -> f64 {
        (self - o).norm()
    }

    pub fn lerp(self, o: Point2, t: f64) -> Point2 {
        self + (o - self) * t
    }

    /// Heading of this vector, `atan2(y, x)`.
    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn rotate(self, angle: f64) -> Point2 {
        let (s, c) = angle.sin_cos();
        Point2::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl Add for Point2 {
    type Output = Point2;
    fn add(self, o: Point2) -> Point2 {
        Point2::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Point2;
    fn sub(self, o: Point2) -> Point2 {
        Point2::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Point2;
    fn mul(self, k: f64) -> Point2 {
        Point2::new(self.x * k, self.y * k)
    }
}

impl Neg for Point2 {
    type Output = Point2;
    fn neg(self) -> Point2 {
        Point2::new(-self.x, -self.y)
    }
}

impl fmt::Display for Point2 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.3}, {:.3})", self.x, self.y)
    }
}

/// Wraps an angle into (-π, π].
pub fn normalize_angle(angle: f64) -> f64 {
    let mut a = angle % (2.0 * PI);
    if a <= -PI {
        a += 2.0 * PI;
    } else if a > PI {
        a -= 2.0 * PI;
    }
    a
}

/// Smallest absolute difference between two headings, in [0, π].
pub fn heading_difference(a: f64, b: f64) -> f64 {
    normalize_angle(a - b).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AgentId(pub u64);

impl fmt::Display for AgentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Vehicle,
    Pedestrian,
    Cyclist,
}

/// Kinematic state at one grid step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Point2,
    pub heading: f64,
    pub speed: f64,
    pub time_index: i64,
}

impl AgentState {
    pub fn new(position: Point2, heading: f64, speed: f64, time_index: i64) -> Result<Self, GeometryError> {
        if !position.is_finite() {
            return Err(GeometryError::NonFinite("position"));
        }
        if !heading.is_finite() {
            return Err(GeometryError::NonFinite("heading"));
        }
        if !speed.is_finite() {
            return Err(GeometryError::NonFinite("speed"));
        }
        if speed < 0.0 {
            return Err(GeometryError::NegativeSpeed(speed));
        }
        Ok(AgentState { position, heading: normalize_angle(heading), speed, time_index })
    }

    /// Velocity vector implied by heading and speed.
    pub fn velocity(&self) -> Point2 {
        Point2::from_heading(self.heading) * self.speed
    }
}

/// Ordered states on the 0.1 s grid with consecutive time indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<AgentState>", into = "Vec<AgentState>")]
pub struct Trajectory {
    states: Vec<AgentState>,
}

impl TryFrom<Vec<AgentState>> for Trajectory {
    type Error = GeometryError;
    fn try_from(states: Vec<AgentState>) -> Result<Self, Self::Error> {
        Trajectory::new(states)
    }
}

impl From<Trajectory> for Vec<AgentState> {
    fn from(t: Trajectory) -> Self {
        t.states
    }
}

impl Trajectory {
    pub fn new(states: Vec<AgentState>) -> Result<Self, GeometryError> {
        if states.is_empty() {
            return Err(GeometryError::EmptyTrajectory);
        }
        for (i, s) in states.iter().enumerate() {
            if !s.position.is_finite() {
                return Err(GeometryError::NonFinite("position"));
            }
            if !s.heading.is_finite() || !s.speed.is_finite() {
                return Err(GeometryError::NonFinite("state"));
            }
            if s.speed < 0.0 {
                return Err(GeometryError::NegativeSpeed(s.speed));
            }
            if i > 0 && s.time_index != states[i - 1].time_index + 1 {
                return Err(GeometryError::TimeGap { at: i, prev: states[i - 1].time_index, next: s.time_index });
            }
        }
        Ok(Trajectory { states })
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn first(&self) -> &AgentState {
        &self.states[0]
    }

    pub fn last(&self) -> &AgentState {
        &self.states[self.states.len() - 1]
    }

    pub fn start_index(&self) -> i64 {
        self.first().time_index
    }

    pub fn end_index(&self) -> i64 {
        self.last().time_index
    }

    pub fn at_time(&self, time_index: i64) -> Option<&AgentState> {
        let offset = time_index - self.start_index();
        if offset < 0 {
            return None;
        }
        self.states.get(offset as usize)
    }

    pub fn positions(&self) -> impl Iterator<Item = Point2> + '_ {
        self.states.iter().map(|s| s.position)
    }

    /// Cumulative polyline length at every state, starting at 0.
    pub fn cumulative_distances(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.states.len());
        let mut acc = 0.0;
        out.push(0.0);
        for w in self.states.windows(2) {
            acc += w[0].position.distance(w[1].position);
            out.push(acc);
        }
        out
    }

    pub fn path_length(&self) -> f64 {
        self.states.windows(2).map(|w| w[0].position.distance(w[1].position)).sum()
    }

    /// Keeps states with `time_index <= last`; `None` if nothing remains.
    pub fn truncated_to(&self, last: i64) -> Option<Trajectory> {
        let keep: Vec<AgentState> = self.states.iter().copied().filter(|s| s.time_index <= last).collect();
        if keep.is_empty() {
            None
        } else {
            Some(Trajectory { states: keep })
        }
    }

    /// Keeps states with `time_index >= first`; `None` if nothing remains.
    pub fn starting_at(&self, first: i64) -> Option<Trajectory> {
        let keep: Vec<AgentState> = self.states.iter().copied().filter(|s| s.time_index >= first).collect();
        if keep.is_empty() {
            None
        } else {
            Some(Trajectory { states: keep })
        }
    }

    /// Checks that every step displacement matches the mean of the two state
    /// speeds times the step, within [`SPEED_CONSISTENCY_TOLERANCE`].
    pub fn is_speed_consistent(&self) -> bool {
        self.states.windows(2).all(|w| {
            let moved = w[0].position.distance(w[1].position);
            let expected = 0.5 * (w[0].speed + w[1].speed) * STEP_SECONDS;
            (moved - expected).abs() <= SPEED_CONSISTENCY_TOLERANCE
        })
    }
}

/// Physical footprint size of an agent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dimensions {
    pub length: f64,
    pub width: f64,
}

impl Dimensions {
    pub fn new(length: f64, width: f64) -> Result<Self, GeometryError> {
        if !(length > 0.0 && width > 0.0) || !length.is_finite() || !width.is_finite() {
            return Err(GeometryError::InvalidDimensions { length, width });
        }
        Ok(Dimensions { length, width })
    }

    /// Typical physical size used when a scenario omits dimensions.
    pub fn default_for(kind: AgentKind) -> Self {
        match kind {
            AgentKind::Vehicle => Dimensions { length: 4.7, width: 2.1 },
            AgentKind::Cyclist => Dimensions { length: 1.8, width: 0.6 },
            AgentKind::Pedestrian => Dimensions { length: 0.7, width: 0.7 },
        }
    }

    pub fn footprint(&self, state: &AgentState) -> OrientedBox {
        OrientedBox { center: state.position, heading: state.heading, length: self.length, width: self.width }
    }

    /// Radius of the circle circumscribing the footprint.
    pub fn circumradius(&self) -> f64 {
        0.5 * self.length.hypot(self.width)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub id: AgentId,
    pub kind: AgentKind,
    pub dims: Dimensions,
    /// Observed states, most recent last.
    pub history: Trajectory,
}

impl Agent {
    pub fn current(&self) -> &AgentState {
        self.history.last()
    }
}

/// Rectangle centered at `center`, with its length along `heading`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedBox {
    pub center: Point2,
    pub heading: f64,
    pub length: f64,
    pub width: f64,
}

impl OrientedBox {
    pub fn new(center: Point2, heading: f64, length: f64, width: f64) -> Result<Self, GeometryError> {
        Dimensions::new(length, width)?;
        if !center.is_finite() || !heading.is_finite() {
            return Err(GeometryError::NonFinite("box"));
        }
        Ok(OrientedBox { center, heading, length, width })
    }

    /// Unit vectors along the length and width directions.
    pub fn axes(&self) -> (Point2, Point2) {
        let u = Point2::from_heading(self.heading);
        (u, Point2::new(-u.y, u.x))
    }

    /// Corners in counter-clockwise order, starting front-left.
    pub fn corners(&self) -> [Point2; 4] {
        let (u, v) = self.axes();
        let hl = u * (0.5 * self.length);
        let hw = v * (0.5 * self.width);
        [self.center + hl + hw, self.center - hl + hw, self.center - hl - hw, self.center + hl - hw]
    }
}

/// Box of the given size centered on the state, aligned with its heading.
pub fn footprint(state: &AgentState, length: f64, width: f64) -> Result<OrientedBox, GeometryError> {
    OrientedBox::new(state.position, state.heading, length, width)
}

/// Box with its axes precomputed, for repeated overlap tests.
#[derive(Debug, Clone, Copy)]
pub struct PreparedBox {
    pub center: Point2,
    u: Point2,
    v: Point2,
    half_length: f64,
    half_width: f64,
}

impl PreparedBox {
    pub fn new(b: &OrientedBox) -> Self {
        let (u, v) = b.axes();
        PreparedBox { center: b.center, u, v, half_length: 0.5 * b.length, half_width: 0.5 * b.width }
    }

    /// Separating-axis test on closed rectangles: touching boxes overlap.
    pub fn overlaps(&self, other: &PreparedBox) -> bool {
        let d = other.center - self.center;
        for axis in [self.u, self.v, other.u, other.v] {
            let ra = self.half_length * self.u.dot(axis).abs() + self.half_width * self.v.dot(axis).abs();
            let rb = other.half_length * other.u.dot(axis).abs() + other.half_width * other.v.dot(axis).abs();
            if d.dot(axis).abs() > ra + rb {
                return false;
            }
        }
        true
    }
}

/// Separating-axis test on closed rectangles: touching boxes overlap.
pub fn boxes_overlap(a: &OrientedBox, b: &OrientedBox) -> bool {
    PreparedBox::new(a).overlaps(&PreparedBox::new(b))
}

/// Cubic Bernstein evaluation of a Bézier curve.
pub fn bezier_point(control: &[Point2; 4], t: f64) -> Result<Point2, GeometryError> {
    if !(0.0..=1.0).contains(&t) {
        return Err(GeometryError::ParameterOutOfRange(t));
    }
    Ok(bezier_eval(control, t))
}

fn bezier_eval(c: &[Point2; 4], t: f64) -> Point2 {
    // Endpoints are returned verbatim so that connectors join exactly.
    if t == 0.0 {
        return c[0];
    }
    if t == 1.0 {
        return c[3];
    }
    let s = 1.0 - t;
    let b0 = s * s * s;
    let b1 = 3.0 * s * s * t;
    let b2 = 3.0 * s * t * t;
    let b3 = t * t * t;
    Point2::new(
        b0 * c[0].x + b1 * c[1].x + b2 * c[2].x + b3 * c[3].x,
        b0 * c[0].y + b1 * c[1].y + b2 * c[2].y + b3 * c[3].y,
    )
}

/// Resamples a cubic Bézier at approximately uniform arc length.
///
/// The first point is `control[0]` and the last is `control[3]`. A curve whose
/// control points all coincide collapses to a single point.
pub fn sample_bezier(control: &[Point2; 4], spacing: f64) -> Result<Vec<Point2>, GeometryError> {
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(GeometryError::InvalidSpacing(spacing));
    }
    let hull: f64 = control.windows(2).map(|w| w[0].distance(w[1])).sum();
    if hull <= 1e-12 {
        return Ok(vec![control[0]]);
    }
    let table_len = ((hull / spacing) * 32.0).ceil().clamp(64.0, 200_000.0) as usize;
    let mut arc = Vec::with_capacity(table_len + 1);
    let mut prev = control[0];
    let mut acc = 0.0;
    arc.push(0.0);
    for k in 1..=table_len {
        let p = bezier_eval(control, k as f64 / table_len as f64);
        acc += prev.distance(p);
        arc.push(acc);
        prev = p;
    }
    let total = acc;
    if total <= 1e-12 {
        return Ok(vec![control[0]]);
    }
    let segments = (total / spacing).round().max(1.0) as usize;
    let mut out = Vec::with_capacity(segments + 1);
    out.push(control[0]);
    for i in 1..segments {
        let target = total * i as f64 / segments as f64;
        let k = arc.partition_point(|&s| s < target).clamp(1, table_len);
        let (s0, s1) = (arc[k - 1], arc[k]);
        let frac = if s1 > s0 { (target - s0) / (s1 - s0) } else { 0.0 };
        let t = ((k - 1) as f64 + frac) / table_len as f64;
        out.push(bezier_eval(control, t));
    }
    out.push(control[3]);
    Ok(out)
}
