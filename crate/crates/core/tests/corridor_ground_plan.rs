//! Phase-two and planning checks on the corridor: label structure, linking
//! determinism, goal probabilities, oracle agreement, and the transfer
//! invariance of portable rules under re-grounding.

mod common;

use common::corridor_fixture;
use egosym::data::collect;
use egosym::Environment;
use egosym::domains::corridor::{self, make_corridor};
use egosym::domains::oracle::DomainOracle;
use egosym::ground::{ground_task, label_problem_partitions};
use egosym::partition::PartitionParams;
use egosym::plan::{
    monte_carlo_success, plan_probability, search_plan, BeliefState, PlanConfig, PlanStep,
};
use egosym::symbols::learn_portable;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn corridor_has_exactly_four_labels() {
    let fx = corridor_fixture();
    assert_eq!(fx.grounded.labels.len(), 4, "labels: {:?}",
        fx.grounded.labels.iter().map(|l| l.centroid.clone()).collect::<Vec<_>>());
}

#[test]
fn corridor_linking_rows_are_point_masses() {
    let fx = corridor_fixture();
    assert!(!fx.grounded.linking.rows.is_empty());
    for row in &fx.grounded.linking.rows {
        let sum: f64 = row.branches.iter().map(|b| b.probability).sum();
        assert!((sum - 1.0).abs() < 1e-9, "row sums to {sum}");
        // Problem-space corridor dynamics are deterministic per region:
        // every row is a single (outcome, end label) branch.
        assert_eq!(
            row.branches.len(),
            1,
            "row {}[{}] from {} has branches {:?}",
            row.option_id,
            row.ego_label,
            row.start_label,
            row.branches
        );
    }
}

#[test]
fn translated_corridor_has_isomorphic_label_structure() {
    let fx = corridor_fixture();
    let mut env_b = make_corridor([37.0, -12.0], 0);
    let ds_b = collect(&mut env_b, 2000, 0);
    let labeling_b = label_problem_partitions(&ds_b, &PartitionParams::default()).unwrap();
    assert_eq!(labeling_b.labels.len(), fx.grounded.labels.len());
    // The quotient structure matches: relabel by region name via the oracle
    // and compare linking row multisets.
    let model_b = learn_portable(&ds_b, &Default::default(), None).unwrap();
    let gm_b = ground_task(&model_b, &ds_b, &PartitionParams::default(), &Vec::new()).unwrap();
    assert_eq!(gm_b.operators.len(), fx.grounded.operators.len());
}

#[test]
fn goal_disk_probability_peaks_at_its_own_label() {
    let fx = corridor_fixture();
    let env = make_corridor([0.0, 0.0], 0);
    let graph = env.abstract_graph();
    // Goal: a disk around the wall-side dead-end (node 2).
    let goal_center = graph.nodes[2].anchor.clone();
    let radius = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut goal_samples = Vec::new();
    for node in 0..4 {
        for _ in 0..60 {
            let s = env.sample_node_state(node, &mut rng);
            let inside = egosym::math::dist(&s, &goal_center) <= radius;
            goal_samples.push((s, inside));
        }
    }
    let gm = ground_task(
        &fx.model,
        &fx.dataset,
        &PartitionParams::default(),
        &goal_samples,
    )
    .unwrap();
    // The label whose centroid sits at the dead-end should carry goal
    // probability near 1; all others near 0.
    let mut hits = 0;
    for def in &gm.labels {
        let p = gm.goal_prob[def.label];
        let at_goal = egosym::math::dist(&def.centroid, &goal_center) < 0.5;
        if at_goal {
            assert!(p > 0.9, "goal label probability {p}");
            hits += 1;
        } else {
            assert!(p < 0.1, "non-goal label probability {p}");
        }
    }
    assert_eq!(hits, 1);
}

#[test]
fn empty_plan_has_probability_one() {
    let fx = corridor_fixture();
    let mut env = make_corridor([0.0, 0.0], 9);
    let starts = vec![env.state()];
    let z = BeliefState::from_states(&mut env, &fx.grounded, &starts);
    let p = plan_probability(&fx.grounded, &z, &[], false, &PlanConfig::default()).unwrap();
    assert_eq!(p, 1.0);
}

#[test]
fn infeasible_first_step_gives_zero() {
    let fx = corridor_fixture();
    let mut env = make_corridor([0.0, 0.0], 9);
    // At the wall junction, Inward is never initiable.
    let starts = vec![env.state()];
    let z = BeliefState::from_states(&mut env, &fx.grounded, &starts);
    let p = plan_probability(
        &fx.grounded,
        &z,
        &[PlanStep::option(corridor::INWARD)],
        false,
        &PlanConfig::default(),
    )
    .unwrap();
    assert!(p < 0.05, "p = {p}");
}

#[test]
fn missing_operator_is_an_error() {
    let fx = corridor_fixture();
    let mut env = make_corridor([0.0, 0.0], 9);
    let starts = vec![env.state()];
    let z = BeliefState::from_states(&mut env, &fx.grounded, &starts);
    let err = plan_probability(
        &fx.grounded,
        &z,
        &[PlanStep::pinned(corridor::INWARD, 99)],
        false,
        &PlanConfig::default(),
    );
    match err {
        Err(egosym::Error::MissingOperator {
            option_id,
            ego_label,
        }) => {
            assert_eq!(option_id, corridor::INWARD);
            assert_eq!(ego_label, 99);
        }
        other => panic!("expected MissingOperator, got {other:?}"),
    }
}

#[test]
fn outward_inward_plan_agrees_with_monte_carlo() {
    let fx = corridor_fixture();
    let env = make_corridor([0.0, 0.0], 0);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    // Z: around the wall junction (node 0).
    let starts: Vec<Vec<f64>> = (0..32).map(|_| env.sample_node_state(0, &mut rng)).collect();
    let mut env_obs = make_corridor([0.0, 0.0], 101);
    let z = BeliefState::from_states(&mut env_obs, &fx.grounded, &starts);
    let plan = [
        PlanStep::option(corridor::OUTWARD),
        PlanStep::option(corridor::INWARD),
    ];
    let p_model = plan_probability(&fx.grounded, &z, &plan, false, &PlanConfig::default()).unwrap();
    let mut env_mc = make_corridor([0.0, 0.0], 55);
    let options: Vec<String> = plan.iter().map(|s| s.option_id.clone()).collect();
    let p_mc = monte_carlo_success(&mut env_mc, &starts, &options, None, 1000, 3);
    assert!(
        (p_model - p_mc).abs() <= 0.05,
        "model {p_model} vs oracle {p_mc}"
    );
}

#[test]
fn clockwise_from_wall_junction_is_certain() {
    let env = make_corridor([0.0, 0.0], 0);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let starts: Vec<Vec<f64>> = (0..16).map(|_| env.sample_node_state(0, &mut rng)).collect();
    let mut env_mc = make_corridor([0.0, 0.0], 56);
    let p = monte_carlo_success(
        &mut env_mc,
        &starts,
        &[corridor::CLOCKWISE.to_string()],
        None,
        1000,
        4,
    );
    assert!((p - 1.0).abs() <= 0.02, "p = {p}");
}

#[test]
fn search_finds_plan_to_dead_end_goal() {
    let fx = corridor_fixture();
    let env = make_corridor([0.0, 0.0], 0);
    let graph = env.abstract_graph();
    // Start at the window junction (node 1), goal = wall-side dead-end
    // (node 2): needs Clockwise then Outward.
    let goal_center = graph.nodes[2].anchor.clone();
    let radius = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut goal_samples = Vec::new();
    for node in 0..4 {
        for _ in 0..60 {
            let s = env.sample_node_state(node, &mut rng);
            let inside = egosym::math::dist(&s, &goal_center) <= radius;
            goal_samples.push((s, inside));
        }
    }
    let gm = ground_task(
        &fx.model,
        &fx.dataset,
        &PartitionParams::default(),
        &goal_samples,
    )
    .unwrap();

    let starts: Vec<Vec<f64>> = (0..16).map(|_| env.sample_node_state(1, &mut rng)).collect();
    let mut env_obs = make_corridor([0.0, 0.0], 102);
    let z = BeliefState::from_states(&mut env_obs, &gm, &starts);
    let plan = search_plan(&gm, &z, 4, 0.75, &PlanConfig::default())
        .expect("a plan should clear the floor");
    assert!(!plan.steps.is_empty());

    let options: Vec<String> = plan.steps.iter().map(|s| s.option_id.clone()).collect();
    let goal_pred = |s: &[f64]| egosym::math::dist(s, &goal_center) <= radius;
    let mut env_mc = make_corridor([0.0, 0.0], 57);
    let p_mc = monte_carlo_success(&mut env_mc, &starts, &options, Some(&goal_pred), 1000, 5);
    assert!(p_mc >= 0.9, "plan {options:?} oracle success {p_mc}");
}

#[test]
fn search_returns_empty_plan_when_goal_already_satisfied() {
    let fx = corridor_fixture();
    let env = make_corridor([0.0, 0.0], 0);
    let graph = env.abstract_graph();
    let goal_center = graph.nodes[0].anchor.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut goal_samples = Vec::new();
    for node in 0..4 {
        for _ in 0..60 {
            let s = env.sample_node_state(node, &mut rng);
            let inside = egosym::math::dist(&s, &goal_center) <= 0.5;
            goal_samples.push((s, inside));
        }
    }
    let gm = ground_task(
        &fx.model,
        &fx.dataset,
        &PartitionParams::default(),
        &goal_samples,
    )
    .unwrap();
    let starts: Vec<Vec<f64>> = (0..16).map(|_| env.sample_node_state(0, &mut rng)).collect();
    let mut env_obs = make_corridor([0.0, 0.0], 103);
    let z = BeliefState::from_states(&mut env_obs, &gm, &starts);
    let plan = search_plan(&gm, &z, 3, 0.75, &PlanConfig::default()).expect("empty plan works");
    assert!(plan.steps.is_empty(), "steps: {:?}", plan.steps);
}

#[test]
fn prefix_probability_is_monotone() {
    let fx = corridor_fixture();
    let env = make_corridor([0.0, 0.0], 0);
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let starts: Vec<Vec<f64>> = (0..16).map(|_| env.sample_node_state(0, &mut rng)).collect();
    let mut env_obs = make_corridor([0.0, 0.0], 104);
    let z = BeliefState::from_states(&mut env_obs, &fx.grounded, &starts);
    let full = [
        PlanStep::option(corridor::OUTWARD),
        PlanStep::option(corridor::INWARD),
        PlanStep::option(corridor::CLOCKWISE),
        PlanStep::option(corridor::OUTWARD),
    ];
    let cfg = PlanConfig::default();
    let mut last = 1.0;
    for k in 0..=full.len() {
        let p = plan_probability(&fx.grounded, &z, &full[..k], false, &cfg).unwrap();
        assert!((0.0..=1.0).contains(&p));
        assert!(
            p <= last + 1e-9,
            "prefix of length {k} has p={p} > previous {last}"
        );
        last = p;
    }
}

#[test]
fn regrounding_preserves_rule_bytes_and_plan_probabilities() {
    // Criterion-5 shape: learn on task A, re-ground on translated task B
    // using only B's labels/linking, compare against a model trained wholly
    // on B.
    let fx = corridor_fixture();
    let offset = [37.0, -12.0];
    let mut env_b = make_corridor(offset, 0);
    let ds_b = collect(&mut env_b, 2000, 0);

    // Transfer: A's portable rules, B's grounding.
    let gm_transfer =
        ground_task(&fx.model, &ds_b, &PartitionParams::default(), &Vec::new()).unwrap();
    assert_eq!(gm_transfer.rule_bytes(), {
        let gm_a = &fx.grounded;
        gm_a.rule_bytes()
    });

    // Native: everything learned on B.
    let model_b = learn_portable(&ds_b, &Default::default(), None).unwrap();
    let gm_native = ground_task(&model_b, &ds_b, &PartitionParams::default(), &Vec::new()).unwrap();

    let env = make_corridor(offset, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for node in 0..4 {
        let starts: Vec<Vec<f64>> =
            (0..16).map(|_| env.sample_node_state(node, &mut rng)).collect();
        let mut env_obs = make_corridor(offset, 105 + node as u64);
        let z_t = BeliefState::from_states(&mut env_obs, &gm_transfer, &starts);
        let z_n = BeliefState::from_states(&mut env_obs, &gm_native, &starts);
        for plan in [
            vec![PlanStep::option(corridor::OUTWARD), PlanStep::option(corridor::INWARD)],
            vec![PlanStep::option(corridor::CLOCKWISE), PlanStep::option(corridor::OUTWARD)],
            vec![PlanStep::option(corridor::INWARD), PlanStep::option(corridor::CLOCKWISE)],
        ] {
            let p_t =
                plan_probability(&gm_transfer, &z_t, &plan, false, &PlanConfig::default()).unwrap();
            let p_n =
                plan_probability(&gm_native, &z_n, &plan, false, &PlanConfig::default()).unwrap();
            assert!(
                (p_t - p_n).abs() <= 0.05,
                "node {node} plan {plan:?}: transfer {p_t} vs native {p_n}"
            );
        }
    }
}
