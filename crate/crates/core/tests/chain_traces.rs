mod common;

use common::{close, is_valid_plan, scores_of};
use flipdist::chain::{model_preset, run_chain, ChainState, Model, RejectReason, StepOutcome};
use flipdist::constraints::{Constraint, EpsilonSense};
use flipdist::graph::{make_partial_grid_instance, ContiguityGraph};
use flipdist::init::init_distance;
use flipdist::partition::Partition;

fn instance() -> (ContiguityGraph, Partition) {
    let g = make_partial_grid_instance(12, 12, 140, 10, 5).unwrap();
    let p = init_distance(&g, 0).unwrap();
    (g, p)
}

struct Trajectory {
    /// Scores of the initial plan followed by every accepted plan.
    accepted: Vec<common::Scores>,
    accepted_plans: Vec<Vec<u32>>,
    rejections: Vec<RejectReason>,
}

fn drive(model: Model, seed: u64, steps: u64, check_each: bool) -> (ContiguityGraph, Trajectory) {
    let (g, init) = instance();
    let centers: Vec<(usize, u32)> = g.centers().iter().map(|&c| (c, init.district_of(c))).collect();
    let config = model_preset(model).with_seed(seed).with_steps(steps);
    let mut state = ChainState::new(&g, init.clone(), config).unwrap();
    let mut traj = Trajectory {
        accepted: vec![scores_of(&g, &init, 0.5)],
        accepted_plans: vec![init.assignment().to_vec()],
        rejections: Vec::new(),
    };
    for _ in 0..steps {
        let before = state.partition().fingerprint();
        match state.step() {
            Ok(StepOutcome::Accepted(_)) => {
                let p = state.partition();
                traj.accepted.push(scores_of(&g, p, 0.5));
                traj.accepted_plans.push(p.assignment().to_vec());
                for &(c, d) in &centers {
                    assert_eq!(p.district_of(c), d, "center {c} moved");
                }
                if check_each {
                    assert!(is_valid_plan(&g, p.assignment(), p.num_districts()));
                }
            }
            Ok(StepOutcome::Rejected { reason, .. }) => {
                assert_eq!(state.partition().fingerprint(), before);
                traj.rejections.push(reason);
            }
            Err(flipdist::ChainError::Stalled { .. }) => break,
            Err(e) => panic!("{e}"),
        }
    }
    (g, traj)
}

#[test]
fn baa_never_exceeds_initial_imbalance() {
    let (_, t) = drive(Model::Baa, 1, 20_000, true);
    let imb0 = t.accepted[0].imbalance;
    assert!(t.accepted.len() > 100);
    for s in &t.accepted {
        assert!(s.imbalance <= imb0 + 1e-12, "{} > {imb0}", s.imbalance);
    }
}

#[test]
fn bcaa_never_exceeds_initial_dispersion() {
    let (_, t) = drive(Model::Bcaa, 2, 20_000, true);
    let j0 = t.accepted[0].dispersion;
    assert!(t.accepted.len() > 100);
    for s in &t.accepted {
        assert!(s.dispersion <= j0 + 1e-12);
    }
}

#[test]
fn aio_strictly_decreases_dispersion() {
    let (_, t) = drive(Model::Aio, 3, 20_000, true);
    assert!(t.accepted.len() > 10);
    for w in t.accepted.windows(2) {
        assert!(w[1].dispersion < w[0].dispersion);
    }
    assert!(t.rejections.contains(&RejectReason::NotImproving));
}

#[test]
fn accepted_plans_respect_the_slack_compactness_bound() {
    for model in [Model::Baa, Model::Bcaa, Model::Aio] {
        let (_, t) = drive(model, 4, 5_000, false);
        for w in t.accepted.windows(2) {
            assert!(w[1].harmonic_pp >= w[0].harmonic_pp - 0.05 - 1e-12);
        }
    }
}

#[test]
fn as_printed_compactness_sense_requires_a_gain_of_epsilon() {
    let (g, init) = instance();
    let mut config = model_preset(Model::Custom).with_seed(8).with_diagnostics(None);
    config.constraints = config.constraints.with(Constraint::Compactness);
    config.epsilon_sense = EpsilonSense::AsPrinted;
    config.epsilon = 0.001;
    let mut state = ChainState::new(&g, init.clone(), config).unwrap();
    let mut prev = scores_of(&g, &init, 0.5).harmonic_pp;
    for _ in 0..5_000 {
        match state.step() {
            Ok(StepOutcome::Accepted(_)) => {
                let h = scores_of(&g, state.partition(), 0.5).harmonic_pp;
                assert!(h >= prev + 0.001 - 1e-12);
                prev = h;
            }
            Ok(_) => {}
            Err(_) => break,
        }
    }
}

#[test]
fn run_chain_replays_the_step_loop_and_bookkeeps_the_minimum() {
    for (model, seed) in [(Model::Baa, 11), (Model::Bcaa, 12), (Model::Aio, 13)] {
        let steps = 8_000;
        let (g, t) = drive(model, seed, steps, false);
        let (_, init) = instance();
        let result = run_chain(&g, init, &model_preset(model).with_seed(seed).with_steps(steps)).unwrap();
        assert_eq!(result.seed, seed);
        assert_eq!(result.accepted_count as usize, t.accepted.len() - 1);
        assert_eq!(
            result.final_plan.assignment(),
            t.accepted_plans.last().unwrap().as_slice()
        );

        // Last plan attaining the minimum J, since ties replace the best.
        let min = t.accepted.iter().map(|s| s.dispersion).fold(f64::INFINITY, f64::min);
        let idx = t.accepted.iter().rposition(|s| s.dispersion <= min + 1e-12).unwrap();
        let best = result.best_scores.unwrap();
        assert!(close(best.dispersion, min, 1e-9));
        assert_eq!(result.best_plan.assignment(), t.accepted_plans[idx].as_slice());
        assert!(best.dispersion <= result.initial_scores.unwrap().dispersion);
    }
}

#[test]
fn rejections_count_as_steps() {
    let (g, init) = instance();
    let result = run_chain(&g, init, &model_preset(Model::Baa).with_seed(5).with_steps(3_000)).unwrap();
    assert_eq!(result.proposed_count, 3_000);
    assert_eq!(result.accepted_count + result.rejections.total(), 3_000);
    assert!(result.rejections.total() > 0);
}

#[test]
fn aio_stops_at_a_local_optimum() {
    let g = make_partial_grid_instance(5, 5, 25, 3, 2).unwrap();
    let init = init_distance(&g, 0).unwrap();
    let mut config = model_preset(Model::Aio).with_seed(1).with_steps(1_000_000);
    config.max_consecutive_rejections = 20_000;
    let result = run_chain(&g, init, &config).unwrap();
    let stalled = result.stalled_at.expect("a 25-node instance reaches a local optimum");
    assert_eq!(result.proposed_count, stalled);
    assert_eq!(result.final_plan, result.best_plan);
}
