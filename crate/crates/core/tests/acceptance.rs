//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails. Runs without the libtest harness so the lines always
//! print.

mod common;

use std::collections::BTreeMap;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::{Duration, Instant};

use conflict_testbed::conflict::{detect_collision, detect_spatial_conflict, Relation, Track};
use conflict_testbed::experiment::{run_predictor, scenario_seed, scenarios_from_files, ExperimentSettings};
use conflict_testbed::geometry::{bezier_point, AgentId, AgentKind, AgentState, Dimensions, Point2, Trajectory};
use conflict_testbed::metrics::{aggregate, min_ade_fde, ConflictEvent, MetricsError, ScenarioOutcome};
use conflict_testbed::path::Path;
use conflict_testbed::planner::{revise_plan, trigger_distance, EgoPlan, PlannerConfig};
use conflict_testbed::predictor::{PredictionSet, PredictorKind};
use conflict_testbed::relation::HeuristicModel;
use conflict_testbed::results::ResultsFile;
use conflict_testbed::scenario::{Scenario, ScenarioFile};
use conflict_testbed::simulator::{run_closed_loop, RolloutConfig, SimConfig};
use conflict_testbed::synthetic::{generate_batch, Template};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::*;

const SUITE_SIZE: usize = 200;
const SUITE_SEED: u64 = 7;
const TIME_BUDGET: Duration = Duration::from_secs(300);

struct Gate {
    failed: usize,
}

impl Gate {
    fn check(&mut self, n: u32, ok: bool, detail: String) {
        println!("{} criterion {n}: {detail}", if ok { "PASS" } else { "FAIL" });
        if !ok {
            self.failed += 1;
        }
    }
}

struct Suite {
    files: Vec<ScenarioFile>,
    scenarios: Vec<Scenario>,
    settings: ExperimentSettings,
    results: BTreeMap<PredictorKind, ResultsFile>,
    elapsed: Duration,
}

fn suite() -> Suite {
    let start = Instant::now();
    let files = generate_batch(&Template::ALL, SUITE_SIZE, SUITE_SEED, false).expect("suite generates");
    let scenarios = scenarios_from_files(&files).expect("suite validates");
    let settings = ExperimentSettings {
        seed: SUITE_SEED,
        scenario_source: format!("synthetic:all:{SUITE_SIZE}"),
        workers: 1,
        ..ExperimentSettings::default()
    };
    let model = HeuristicModel::default();
    let mut results = BTreeMap::new();
    for kind in
        [PredictorKind::ConstantVelocity, PredictorKind::P4PNoRelation, PredictorKind::P4P, PredictorKind::NoPredict]
    {
        results.insert(kind, run_predictor(&scenarios, kind, &model, &settings).expect("suite runs"));
    }
    Suite { files, scenarios, settings, results, elapsed: start.elapsed() }
}

fn pct(x: f64) -> String {
    format!("{:.2}%", 100.0 * x)
}

fn recall_ordering(g: &mut Gate, s: &Suite) {
    let r = |k| s.results[&k].report.conflict_recall_topk.unwrap_or(f64::NAN);
    let (cv, nr, p4p) = (r(PredictorKind::ConstantVelocity), r(PredictorKind::P4PNoRelation), r(PredictorKind::P4P));
    let ok = p4p >= nr && nr >= cv && p4p - cv >= 0.05 && s.scenarios.len() >= 200 && s.elapsed < TIME_BUDGET;
    g.check(
        1,
        ok,
        format!(
            "recall@K CV {} <= NoRelation {} <= P4P {} (gap {:.2} pp) on {} scenarios in {:.1} s",
            pct(cv),
            pct(nr),
            pct(p4p),
            100.0 * (p4p - cv),
            s.scenarios.len(),
            s.elapsed.as_secs_f64()
        ),
    );
}

fn safety_ordering(g: &mut Gate, s: &Suite) {
    let c = |k| s.results[&k].report.collision_rate;
    let (none, p4p, cv) = (c(PredictorKind::NoPredict), c(PredictorKind::P4P), c(PredictorKind::ConstantVelocity));
    let ok = none >= 5.0 * p4p && p4p <= cv + 0.02;
    g.check(2, ok, format!("collision NoPredict {} >= 5 x P4P {}; P4P <= CV {} + 2 pp", pct(none), pct(p4p), pct(cv)));
}

fn yield_progress(g: &mut Gate, s: &Suite) {
    let ids: Vec<&str> = s
        .files
        .iter()
        .filter(|f| f.key_interaction.is_some_and(|k| k.relation == Relation::Yield))
        .map(|f| f.scenario_id.as_str())
        .collect();
    let mean = |k: PredictorKind| {
        let outcomes = &s.results[&k].outcomes;
        let total: f64 =
            outcomes.iter().filter(|o| ids.contains(&o.scenario_id.as_str())).map(|o| o.progress_meters).sum();
        total / ids.len() as f64
    };
    let (p4p, nr) = (mean(PredictorKind::P4P), mean(PredictorKind::P4PNoRelation));
    g.check(
        3,
        !ids.is_empty() && p4p >= nr,
        format!("progress on {} agent-yield scenarios: P4P {p4p:.3} m >= NoRelation {nr:.3} m", ids.len()),
    );
}

fn oracle_equivalence(g: &mut Gate) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut agree, mut conflicts, mut collisions, mut implication) = (0, 0, 0, true);
    for _ in 0..1000 {
        let (a, b) = (random_trajectory(&mut rng), random_trajectory(&mut rng));
        let (da, db) = (random_dims(&mut rng), random_dims(&mut rng));
        let ta = Track::new(AgentId(1), &a, da);
        let tb = Track::new(AgentId(2), &b, db);
        let c = detect_spatial_conflict(ta, tb);
        let hit = detect_collision(ta, tb);
        let same_conflict = c.map(|c| (c.distance_a, c.distance_b)) == spatial_conflict_oracle(&a, da, &b, db);
        let same_collision = hit == collision_oracle(&a, da, &b, db);
        agree += usize::from(same_conflict && same_collision);
        conflicts += usize::from(c.is_some());
        collisions += usize::from(hit.is_some());
        implication &= hit.is_none() || c.is_some();
    }
    g.check(
        4,
        agree == 1000 && implication,
        format!("{agree}/1000 pairs agree with brute force ({conflicts} conflicts, {collisions} collisions); collision implies conflict: {implication}"),
    );
}

fn speed_steps_ok(v: &[f64], cfg: &PlannerConfig) -> bool {
    v.iter().all(|&x| x >= 0.0)
        && v.windows(2).all(|w| {
            let dv = w[1] - w[0];
            dv <= cfg.accel * 0.1 + 1e-6 && -dv <= cfg.emergency_decel * 0.1 + 1e-6
        })
}

fn kinematics(g: &mut Gate, s: &Suite) {
    let cfg = PlannerConfig::default();
    let model = HeuristicModel::default();
    let mut violations = Vec::new();
    let (mut plans, mut refined) = (0usize, 0usize);

    // Plans and refined predictions from closed-loop P4P rollouts.
    for sc in s.scenarios.iter().step_by(5) {
        let sim = SimConfig { seed: scenario_seed(s.settings.seed, &sc.id), ..SimConfig::default() };
        let rc = RolloutConfig {
            predictor: PredictorKind::P4P,
            model: &model,
            planner: &s.settings.planner,
            predictor_config: &s.settings.predictor,
            sim: &sim,
        };
        let r = run_closed_loop(sc, rc).expect("rollout");
        let ego: Vec<f64> = r.ego_trajectory.states().iter().map(|x| x.speed).collect();
        if !speed_steps_ok(&ego, &cfg) {
            violations.push(format!("{} executed ego speeds", sc.id));
        }
        for step in &r.steps {
            plans += 1;
            let v: Vec<f64> = step.reference_plan.states().iter().map(|x| x.speed).collect();
            if !speed_steps_ok(&v, &cfg) {
                violations.push(format!("{} plan at t{}", sc.id, step.time_index));
            }
            for set in step.predictions.values() {
                for (k, rf) in set.refinements.iter().enumerate() {
                    let Some(rf) = rf else { continue };
                    refined += 1;
                    let sample = &set.samples[k];
                    let mut v = vec![rf.original.first().speed];
                    v.extend(sample.states().iter().map(|x| x.speed));
                    if !speed_steps_ok(&v, &cfg) {
                        violations.push(format!(
                            "{} refined sample of agent {} at t{}",
                            sc.id, set.agent_id.0, step.time_index
                        ));
                    }
                    let v0 = sample.first().speed;
                    if v0 * v0 / (2.0 * cfg.emergency_decel) <= rf.cross_distance - cfg.stop_buffer - 1.0 {
                        let gap = rf.cross_distance - sample.path_length();
                        if gap < cfg.stop_buffer - 0.1 {
                            violations.push(format!("{} refined stop {gap:.3} m before the cross point", sc.id));
                        }
                    }
                }
            }
        }
    }

    // Revised plans against synchronized crossings.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dims = Dimensions::default_for(AgentKind::Vehicle);
    let mut stops = 0usize;
    for _ in 0..500 {
        let v0 = rng.gen_range(0.5..10.0);
        let ahead = rng.gen_range(4.0..60.0);
        let agent_speed = rng.gen_range(1.0..8.0);
        let path = Arc::new(Path::ray(Point2::ORIGIN, 0.0, 400.0, 10.0));
        let plan = EgoPlan::along(path, 0.0, v0, 0, &cfg, dims, &[]);
        let Some(k) = plan.profile.arc.iter().position(|&x| x >= ahead) else { continue };
        let states = (1..=80)
            .map(|t| {
                let y = agent_speed * 0.1 * (t - k as i64) as f64;
                AgentState::new(Point2::new(ahead, y), std::f64::consts::FRAC_PI_2, agent_speed, t).unwrap()
            })
            .collect();
        let preds = BTreeMap::from([(
            AgentId(1),
            PredictionSet::uniform(AgentId(1), vec![Trajectory::new(states).unwrap()], 0),
        )]);
        let all_dims = BTreeMap::from([(AgentId(1), dims)]);
        let Some(d) = trigger_distance(AgentId(0), &plan, &preds, &all_dims) else { continue };
        let (revised, _) = revise_plan(AgentId(0), &plan, &preds, &all_dims, &cfg);
        plans += 1;
        if !speed_steps_ok(&revised.profile.speed, &cfg) {
            violations.push(format!("revised plan v0 {v0:.2} ahead {ahead:.2}"));
        }
        if v0 * v0 / (2.0 * cfg.emergency_decel) <= d - cfg.stop_buffer {
            stops += 1;
            let gap = d - revised.profile.arc.last().unwrap();
            if gap < cfg.stop_buffer - 0.1 {
                violations.push(format!("revised stop {gap:.3} m before the cross point"));
            }
        }
    }

    // Bezier endpoints.
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let c: [Point2; 4] = std::array::from_fn(|_| Point2::new(rng.gen_range(-1e3..1e3), rng.gen_range(-1e3..1e3)));
        worst = worst.max(bezier_point(&c, 0.0).unwrap().distance(c[0]));
        worst = worst.max(bezier_point(&c, 1.0).unwrap().distance(c[3]));
    }
    if worst > 1e-9 {
        violations.push(format!("bezier endpoint error {worst:e}"));
    }

    let ok = violations.is_empty() && refined > 0 && stops > 0;
    let detail = format!(
        "{plans} plans, {refined} refined samples, {stops} achievable stops, bezier endpoint error {worst:e}; violations: {}",
        if violations.is_empty() { "none".to_string() } else { violations[..violations.len().min(3)].join("; ") }
    );
    g.check(5, ok, detail);
}

fn threshold_degeneracy(g: &mut Gate, s: &Suite) {
    let model = HeuristicModel::default();
    let mut settings = s.settings.clone();
    settings.predictor.relation_threshold = 1.0;
    let p4p = run_predictor(&s.scenarios, PredictorKind::P4P, &model, &settings).expect("p4p runs");
    let nr = run_predictor(&s.scenarios, PredictorKind::P4PNoRelation, &model, &settings).expect("norelation runs");
    let same = p4p.outcomes == nr.outcomes && p4p.report == nr.report;
    g.check(
        6,
        same,
        format!("threshold 1.0: P4P outcomes and report equal NoRelation on {} scenarios: {same}", s.scenarios.len()),
    );
}

fn determinism(g: &mut Gate, s: &Suite) {
    let model = HeuristicModel::default();
    let one = s.results[&PredictorKind::P4P].to_canonical_json().expect("serializes");
    let again = run_predictor(&s.scenarios, PredictorKind::P4P, &model, &s.settings).expect("rerun");
    let eight = run_predictor(
        &s.scenarios,
        PredictorKind::P4P,
        &model,
        &ExperimentSettings { workers: 8, ..s.settings.clone() },
    )
    .expect("parallel run");
    let same_rerun = again.to_canonical_json().unwrap() == one;
    let same_parallel = eight.to_canonical_json().unwrap() == one;
    g.check(
        7,
        same_rerun && same_parallel,
        format!("{} byte results file: rerun identical {same_rerun}, 8 workers identical {same_parallel}", one.len()),
    );
}

fn metric_fixture(g: &mut Gate) {
    let event = |top1: bool, topk: bool, truth: Relation, predicted: Option<Relation>| ConflictEvent {
        agent_id: 1,
        first_step: 11,
        event_time: 30,
        cross_point: Point2::ORIGIN,
        identified_top1: top1,
        identified_topk: topk,
        relation_truth: truth,
        relation_predicted: predicted,
        gt_steps: 1,
        identified_steps_top1: u32::from(top1),
        identified_steps_topk: u32::from(topk),
    };
    let mut outcomes: Vec<ScenarioOutcome> = (0..10)
        .map(|i| ScenarioOutcome {
            scenario_id: format!("s{i}"),
            collision: false,
            progress_meters: 20.0,
            stuck: false,
            conflict_events: vec![],
            prediction_errors: vec![],
        })
        .collect();
    // Four events: three found by some sample, two by the top sample; of the
    // three found, two relations are right.
    outcomes[1].conflict_events = vec![event(true, true, Relation::Pass, Some(Relation::Pass))];
    outcomes[4].conflict_events = vec![
        event(true, true, Relation::Yield, Some(Relation::Yield)),
        event(false, true, Relation::Yield, Some(Relation::Pass)),
    ];
    outcomes[7].conflict_events = vec![event(false, false, Relation::Pass, None)];
    outcomes[2].collision = true;
    outcomes[9].stuck = true;
    outcomes[9].progress_meters = 0.2;
    let r = aggregate(&outcomes).expect("non-empty");
    let ok = r.conflict_recall_topk == Some(0.75)
        && r.conflict_recall_top1 == Some(0.5)
        && r.relation_accuracy.is_some_and(|a| (a - 2.0 / 3.0).abs() < 1e-12)
        && r.collision_rate == 0.1
        && r.stuck_rate == 0.1;
    g.check(
        8,
        ok,
        format!(
            "recall@K {:?}, recall@1 {:?}, relation {:?}, collision {}, stuck {}",
            r.conflict_recall_topk, r.conflict_recall_top1, r.relation_accuracy, r.collision_rate, r.stuck_rate
        ),
    );
}

fn ade_contract(g: &mut Gate) {
    let line = |dy: f64, errs: &[f64]| {
        Trajectory::new(
            errs.iter()
                .enumerate()
                .map(|(k, e)| AgentState::new(Point2::new(k as f64, dy + e), 0.0, 10.0, 12 + k as i64).unwrap())
                .collect(),
        )
        .unwrap()
    };
    let truth = line(0.0, &[0.0; 10]);
    let exact = min_ade_fde(std::slice::from_ref(&truth), &truth);
    let offset = min_ade_fde(&[line(1.0, &[0.0; 10])], &truth);
    // Sample A: errors 2, 2, 2, 6 (ADE 3, FDE 6); sample B: 5, 5, 9, 1 (ADE 5, FDE 1).
    let four = line(0.0, &[0.0; 4]);
    let independent = min_ade_fde(&[line(0.0, &[2.0, 2.0, 2.0, 6.0]), line(0.0, &[5.0, 5.0, 9.0, 1.0])], &four);
    let no_samples = min_ade_fde(&[], &truth);
    let close = |r: &Result<(f64, f64), MetricsError>, e: (f64, f64)| {
        r.as_ref().is_ok_and(|&(a, f)| (a - e.0).abs() < 1e-12 && (f - e.1).abs() < 1e-12)
    };
    let ok = close(&exact, (0.0, 0.0))
        && close(&offset, (1.0, 1.0))
        && close(&independent, (3.0, 1.0))
        && no_samples == Err(MetricsError::NoSamples);
    g.check(
        9,
        ok,
        format!(
            "replay {exact:?}, unit offset {offset:?}, independent minima {independent:?}, no samples {no_samples:?}"
        ),
    );
}

fn main() -> ExitCode {
    let mut g = Gate { failed: 0 };
    let s = suite();
    recall_ordering(&mut g, &s);
    safety_ordering(&mut g, &s);
    yield_progress(&mut g, &s);
    oracle_equivalence(&mut g);
    kinematics(&mut g, &s);
    threshold_degeneracy(&mut g, &s);
    determinism(&mut g, &s);
    metric_fixture(&mut g);
    ade_contract(&mut g);
    if g.failed == 0 {
        println!("acceptance: all 9 criteria pass");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {} of 9 criteria fail", g.failed);
        ExitCode::FAILURE
    }
}
