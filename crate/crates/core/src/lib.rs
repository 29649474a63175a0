//! Closed-loop test bed for motion predictors.
//!
//! A route-following ego planner reacts to the predictions of the predictor
//! under test while rule-based agents drive around it. The metrics measure
//! how well each predictor lets the planner find conflicts, and what that
//! costs in collisions and progress.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod conflict;
pub mod experiment;
pub mod geometry;
pub mod kinematics;
pub mod lane_map;
pub mod metrics;
pub mod path;
pub mod planner;
pub mod predictor;
pub mod relation;
pub mod results;
pub mod scenario;
pub mod simulator;
pub mod synthetic;
