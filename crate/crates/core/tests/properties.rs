mod common;

use std::collections::BTreeMap;
use std::sync::Arc;

use conflict_testbed::conflict::{detect_collision, detect_spatial_conflict, Track};
use conflict_testbed::experiment::{scenario_seed, scenarios_from_files};
use conflict_testbed::geometry::{
    bezier_point, boxes_overlap, sample_bezier, AgentId, AgentKind, AgentState, Dimensions, Point2, Trajectory,
};
use conflict_testbed::lane_map::{enumerate_routes, LaneId};
use conflict_testbed::path::{route_path, Junctions, Path};
use conflict_testbed::planner::{revise_plan, trigger_distance, EgoPlan, PlanAction, PlannerConfig};
use conflict_testbed::predictor::{PredictionSet, PredictorConfig, PredictorKind};
use conflict_testbed::relation::HeuristicModel;
use conflict_testbed::simulator::{run_closed_loop, RolloutConfig, RolloutResult, SimConfig, Termination};
use conflict_testbed::synthetic::{generate_batch, Template};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn box_overlap_matches_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..5 {
            let (a, b) = (random_box(&mut rng), random_box(&mut rng));
            prop_assert_eq!(boxes_overlap(&a, &b), boxes_overlap_oracle(&a, &b));
            prop_assert_eq!(boxes_overlap(&a, &b), boxes_overlap(&b, &a));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn conflict_and_collision_match_oracles(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b) = (random_trajectory(&mut rng), random_trajectory(&mut rng));
        let (da, db) = (random_dims(&mut rng), random_dims(&mut rng));
        let ta = Track::new(AgentId(1), &a, da);
        let tb = Track::new(AgentId(2), &b, db);

        let c = detect_spatial_conflict(ta, tb);
        let oracle = spatial_conflict_oracle(&a, da, &b, db);
        prop_assert_eq!(c.map(|c| (c.distance_a, c.distance_b)), oracle);

        let hit = detect_collision(ta, tb);
        prop_assert_eq!(hit, collision_oracle(&a, da, &b, db));
        prop_assert_eq!(hit, detect_collision(tb, ta));
        if hit.is_some() {
            prop_assert!(c.is_some());
        }
        // Swapping sides finds a conflict iff the original did.
        prop_assert_eq!(c.is_some(), detect_spatial_conflict(tb, ta).is_some());
    }

    #[test]
    fn bezier_endpoints_exact(c in prop::array::uniform8(-1e3f64..1e3)) {
        let ctrl = [
            Point2::new(c[0], c[1]),
            Point2::new(c[2], c[3]),
            Point2::new(c[4], c[5]),
            Point2::new(c[6], c[7]),
        ];
        prop_assert!(bezier_point(&ctrl, 0.0).unwrap().distance(ctrl[0]) <= 1e-9);
        prop_assert!(bezier_point(&ctrl, 1.0).unwrap().distance(ctrl[3]) <= 1e-9);
        let pts = sample_bezier(&ctrl, 1.0).unwrap();
        prop_assert!(pts[0].distance(ctrl[0]) <= 1e-9);
        prop_assert!(pts.last().unwrap().distance(ctrl[3]) <= 1e-9);
    }

    #[test]
    fn route_paths_are_dense(seed in any::<u64>(), start in 0u8..4, movement in 0u8..3) {
        let files = generate_batch(&[Template::FourWayCross], 1, 3, false).unwrap();
        let graph = &scenarios_from_files(&files).unwrap()[0].graph;
        let lane = LaneId(100 * (u64::from(start) + 1) + u64::from(movement));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for route in enumerate_routes(graph, lane, 200.0, 4).unwrap() {
            let p = route_path(graph, &route, Junctions::Randomized(&mut rng)).path;
            for w in p.points().windows(2) {
                prop_assert!(w[0].distance(w[1]) <= 1.0 + 1e-9);
            }
        }
    }

    #[test]
    fn revised_plan_keeps_bounds_and_buffer(
        v0 in 0.5f64..10.0,
        ahead in 4.0f64..60.0,
        agent_speed in 1.0f64..8.0,
    ) {
        let cfg = PlannerConfig::default();
        let path = Arc::new(Path::ray(Point2::ORIGIN, 0.0, 400.0, 10.0));
        let dims = Dimensions::default_for(AgentKind::Vehicle);
        let plan = EgoPlan::along(path, 0.0, v0, 0, &cfg, dims, &[]);
        // A crossing agent timed to reach the plan when the ego does.
        let arrive = plan.profile.arc.iter().position(|&s| s >= ahead);
        prop_assume!(arrive.is_some());
        let k = arrive.unwrap() as f64;
        let states: Vec<AgentState> = (1..=80)
            .map(|t| {
                let y = agent_speed * 0.1 * (t as f64 - k);
                AgentState::new(Point2::new(ahead, y), std::f64::consts::FRAC_PI_2, agent_speed, t).unwrap()
            })
            .collect();
        let sample = Trajectory::new(states).unwrap();
        let preds = BTreeMap::from([(AgentId(1), PredictionSet::uniform(AgentId(1), vec![sample], 0))]);
        let all_dims = BTreeMap::from([(AgentId(1), dims)]);
        let Some(d) = trigger_distance(AgentId(0), &plan, &preds, &all_dims) else {
            return Ok(());
        };
        let (revised, action) = revise_plan(AgentId(0), &plan, &preds, &all_dims, &cfg);
        prop_assert_eq!(action, PlanAction::SlowDown);
        assert_speed_steps(&revised.profile.speed, &cfg)?;
        if v0 * v0 / (2.0 * cfg.emergency_decel) <= d - cfg.stop_buffer {
            let furthest = revised.profile.arc.last().unwrap();
            prop_assert!(d - furthest >= cfg.stop_buffer - 0.1, "stopped {} m short of the cross point", d - furthest);
        }
        // Idempotent for identical inputs.
        prop_assert_eq!(revise_plan(AgentId(0), &plan, &preds, &all_dims, &cfg), (revised, action));
    }
}

fn assert_speed_steps(v: &[f64], cfg: &PlannerConfig) -> Result<(), TestCaseError> {
    for w in v.windows(2) {
        prop_assert!(w[1] >= 0.0);
        prop_assert!(w[1] - w[0] <= cfg.accel * 0.1 + 1e-6, "accel step {}", w[1] - w[0]);
        prop_assert!(w[0] - w[1] <= cfg.emergency_decel * 0.1 + 1e-6, "decel step {}", w[0] - w[1]);
    }
    Ok(())
}

fn rollout(files_seed: u64, kind: PredictorKind, reactive: bool, with_futures: bool) -> Vec<RolloutResult> {
    let files = generate_batch(&Template::ALL, 4, files_seed, with_futures).unwrap();
    let scenarios = scenarios_from_files(&files).unwrap();
    let model = HeuristicModel::default();
    let planner = PlannerConfig::default();
    let predictor = PredictorConfig::default();
    scenarios
        .iter()
        .map(|s| {
            let sim = SimConfig { seed: scenario_seed(files_seed, &s.id), reactive, ..SimConfig::default() };
            let cfg = RolloutConfig {
                predictor: kind,
                model: &model,
                planner: &planner,
                predictor_config: &predictor,
                sim: &sim,
            };
            run_closed_loop(s, cfg).unwrap()
        })
        .collect()
}

fn kind_strategy() -> impl Strategy<Value = PredictorKind> {
    prop_oneof![
        Just(PredictorKind::ConstantVelocity),
        Just(PredictorKind::P4PNoRelation),
        Just(PredictorKind::P4P),
        Just(PredictorKind::NoPredict),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn rollouts_respect_kinematics(seed in any::<u64>(), kind in kind_strategy()) {
        let cfg = PlannerConfig::default();
        for r in rollout(seed, kind, true, false) {
            for t in r.agent_trajectories.values() {
                for w in t.states().windows(2) {
                    prop_assert!(w[1].speed >= 0.0);
                    prop_assert!((w[1].speed - w[0].speed).abs() <= 0.15 + 1e-9);
                }
            }
            let ego: Vec<f64> = r.ego_trajectory.states().iter().map(|s| s.speed).collect();
            assert_speed_steps(&ego, &cfg)?;
            if let Termination::Collision(id) = r.termination {
                let e = r.ego_trajectory.last();
                let a = r.agent_trajectories[&id].at_time(e.time_index).unwrap();
                prop_assert!(boxes_overlap(&r.ego_dims.footprint(e), &r.agent_dims[&id].footprint(a)));
            }
        }
    }

    #[test]
    fn rollouts_are_deterministic(seed in any::<u64>(), kind in kind_strategy()) {
        let a = rollout(seed, kind, true, false);
        let b = rollout(seed, kind, true, false);
        for (x, y) in a.iter().zip(&b) {
            prop_assert_eq!(&x.ego_trajectory, &y.ego_trajectory);
            prop_assert_eq!(&x.agent_trajectories, &y.agent_trajectories);
            prop_assert_eq!(&x.conflict_log, &y.conflict_log);
        }
    }

    #[test]
    fn log_replay_reproduces_futures(seed in any::<u64>()) {
        let files = generate_batch(&Template::ALL, 4, seed, true).unwrap();
        let scenarios = scenarios_from_files(&files).unwrap();
        for (s, r) in scenarios.iter().zip(rollout(seed, PredictorKind::Replay, false, true)) {
            for (id, t) in &r.agent_trajectories {
                let future = &s.futures[id];
                for st in t.states().iter().skip(1) {
                    prop_assert_eq!(Some(st), future.at_time(st.time_index));
                }
            }
        }
    }
}
