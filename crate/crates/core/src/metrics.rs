//! System metrics over rollouts: conflict recall, relation accuracy,
//! collision rate, progress, stuck rate, and minADE/minFDE.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conflict::{label_relation, spatial_conflict_prepared, Footprints, Relation};
use crate::geometry::{AgentId, Dimensions, Point2, Trajectory};
use crate::predictor::PredictionSet;
use crate::simulator::{RolloutResult, Termination};

/// Total ego travel below which a rollout counts as stuck.
pub const STUCK_DISTANCE: f64 = 0.5;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("ground truth trajectory is empty")]
    EmptyGroundTruth,
    #[error("no prediction samples")]
    NoSamples,
    #[error("cannot aggregate an empty outcome list")]
    NoOutcomes,
}

/// Whether a prediction set foresees a conflict with the ego plan, and the
/// relation it implies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IdentificationScore {
    pub top1: bool,
    pub topk: bool,
    pub predicted_relation: Option<Relation>,
}

/// Scores the candidates of `set` (before refinement) against the plan.
/// The relation is Pass if some conflicting candidate was left unrefined
/// and Yield if all of them were refined.
pub fn score_conflict_identification(
    set: &PredictionSet,
    plan: &Footprints,
    ego_id: AgentId,
    agent_dims: Dimensions,
) -> IdentificationScore {
    let mut top1 = false;
    let mut topk = false;
    let mut any_unrefined = false;
    for (k, cand) in set.candidates().enumerate() {
        let fc = Footprints::new(cand, agent_dims);
        if spatial_conflict_prepared(ego_id, plan, set.agent_id, &fc).is_some() {
            topk = true;
            top1 |= k == set.top_index;
            any_unrefined |= !set.is_refined(k);
        }
    }
    let predicted_relation = topk.then_some(if any_unrefined { Relation::Pass } else { Relation::Yield });
    IdentificationScore { top1, topk, predicted_relation }
}

/// `true` iff the predicted relation matches the truth.
pub fn score_relation(predicted: Relation, truth: Relation) -> bool {
    predicted == truth
}

/// Minimum over samples of the mean and of the final pointwise error,
/// taken independently. Each sample is compared with the ground truth over
/// their common length.
pub fn min_ade_fde(samples: &[Trajectory], truth: &Trajectory) -> Result<(f64, f64), MetricsError> {
    if truth.is_empty() {
        return Err(MetricsError::EmptyGroundTruth);
    }
    if samples.is_empty() {
        return Err(MetricsError::NoSamples);
    }
    let mut min_ade = f64::INFINITY;
    let mut min_fde = f64::INFINITY;
    for s in samples {
        let n = s.len().min(truth.len());
        let errs: Vec<f64> =
            s.states()[..n].iter().zip(&truth.states()[..n]).map(|(a, b)| a.position.distance(b.position)).collect();
        min_ade = min_ade.min(errs.iter().sum::<f64>() / n as f64);
        min_fde = min_fde.min(errs[n - 1]);
    }
    Ok((min_ade, min_fde))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConflictEvent {
    pub agent_id: u64,
    /// First step whose reference plan conflicts with the agent's future.
    pub first_step: i64,
    /// Earlier arrival at that conflict; identification must come no later.
    pub event_time: i64,
    pub cross_point: Point2,
    pub identified_top1: bool,
    pub identified_topk: bool,
    pub relation_truth: Relation,
    pub relation_predicted: Option<Relation>,
    /// Steps with a ground-truth conflict, and how many of them were
    /// identified by the top sample and by any sample.
    pub gt_steps: u32,
    pub identified_steps_top1: u32,
    pub identified_steps_topk: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionError {
    pub min_ade: f64,
    pub min_fde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub scenario_id: String,
    pub collision: bool,
    pub progress_meters: f64,
    pub stuck: bool,
    pub conflict_events: Vec<ConflictEvent>,
    pub prediction_errors: Vec<PredictionError>,
}

/// Builds the outcome record of one rollout.
///
/// One event per agent whose actual future conflicted with some reference
/// plan. The true relation comes from the actual ego and agent trajectories
/// when they conflict, else from the first conflicting step.
pub fn outcome_from_rollout(result: &RolloutResult) -> ScenarioOutcome {
    let progress = result.ego_trajectory.path_length();
    let collision = matches!(result.termination, Termination::Collision(_));
    let mut events = Vec::new();
    for (id, traj) in &result.agent_trajectories {
        let entries: Vec<_> =
            result.conflict_log.iter().filter(|e| e.agent_id == *id && e.ground_truth.is_some()).collect();
        let Some(first) = entries.first() else { continue };
        let gt = first.ground_truth.expect("filtered");
        let event_time = first.cross_time.expect("set with the conflict");
        let identifying = entries.iter().filter(|e| e.time_index <= event_time);
        let mut identified_top1 = false;
        let mut relation_predicted = None;
        for e in identifying {
            identified_top1 |= e.identified_top1;
            if e.identified_topk && relation_predicted.is_none() {
                relation_predicted = e.predicted_relation;
            }
        }
        let dims = result.ego_dims;
        let agent_dims = result.agent_dims[id];
        let ego_fp = Footprints::new(&result.ego_trajectory, dims);
        let agent_fp = Footprints::new(traj, agent_dims);
        let relation_truth = match spatial_conflict_prepared(result.ego_id, &ego_fp, *id, &agent_fp) {
            Some(c) => label_relation(&c, &result.ego_trajectory, traj),
            None => first.ground_truth_relation.expect("set with the conflict"),
        };
        events.push(ConflictEvent {
            agent_id: id.0,
            first_step: first.time_index,
            event_time,
            cross_point: gt.cross_point,
            identified_top1,
            identified_topk: relation_predicted.is_some(),
            relation_truth,
            relation_predicted,
            gt_steps: entries.len() as u32,
            identified_steps_top1: entries.iter().filter(|e| e.identified_top1).count() as u32,
            identified_steps_topk: entries.iter().filter(|e| e.identified_topk).count() as u32,
        });
    }
    ScenarioOutcome {
        scenario_id: result.scenario_id.clone(),
        collision,
        progress_meters: progress,
        stuck: !collision && progress < STUCK_DISTANCE,
        conflict_events: events,
        prediction_errors: result
            .prediction_errors
            .iter()
            .map(|&(min_ade, min_fde)| PredictionError { min_ade, min_fde })
            .collect(),
    }
}

/// Aggregate metrics; `None` marks a value with an empty denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenarios: usize,
    pub conflict_events: usize,
    pub conflict_recall_top1: Option<f64>,
    pub conflict_recall_topk: Option<f64>,
    /// Same recalls over (step, agent) pairs with a ground-truth conflict.
    pub step_recall_top1: Option<f64>,
    pub step_recall_topk: Option<f64>,
    pub relation_accuracy: Option<f64>,
    pub collision_rate: f64,
    pub progress_mean: f64,
    pub stuck_rate: f64,
    pub min_ade_mean: Option<f64>,
    pub min_fde_mean: Option<f64>,
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn aggregate(outcomes: &[ScenarioOutcome]) -> Result<MetricsReport, MetricsError> {
    if outcomes.is_empty() {
        return Err(MetricsError::NoOutcomes);
    }
    let events: Vec<&ConflictEvent> = outcomes.iter().flat_map(|o| &o.conflict_events).collect();
    let count = |f: &dyn Fn(&ConflictEvent) -> bool| events.iter().filter(|e| f(e)).count();
    let identified = count(&|e| e.identified_topk);
    let relation_scored = count(&|e| e.identified_topk && e.relation_predicted.is_some());
    let relation_correct =
        count(&|e| e.identified_topk && e.relation_predicted.is_some_and(|p| score_relation(p, e.relation_truth)));
    let steps: usize = events.iter().map(|e| e.gt_steps as usize).sum();
    let steps_top1: usize = events.iter().map(|e| e.identified_steps_top1 as usize).sum();
    let steps_topk: usize = events.iter().map(|e| e.identified_steps_topk as usize).sum();
    let errors: Vec<&PredictionError> = outcomes.iter().flat_map(|o| &o.prediction_errors).collect();
    let n = outcomes.len();
    Ok(MetricsReport {
        scenarios: n,
        conflict_events: events.len(),
        conflict_recall_top1: ratio(count(&|e| e.identified_top1), events.len()),
        conflict_recall_topk: ratio(identified, events.len()),
        step_recall_top1: ratio(steps_top1, steps),
        step_recall_topk: ratio(steps_topk, steps),
        relation_accuracy: ratio(relation_correct, relation_scored),
        collision_rate: outcomes.iter().filter(|o| o.collision).count() as f64 / n as f64,
        progress_mean: outcomes.iter().map(|o| o.progress_meters).sum::<f64>() / n as f64,
        stuck_rate: outcomes.iter().filter(|o| o.stuck).count() as f64 / n as f64,
        min_ade_mean: (!errors.is_empty()).then(|| errors.iter().map(|e| e.min_ade).sum::<f64>() / errors.len() as f64),
        min_fde_mean: (!errors.is_empty()).then(|| errors.iter().map(|e| e.min_fde).sum::<f64>() / errors.len() as f64),
    })
}
