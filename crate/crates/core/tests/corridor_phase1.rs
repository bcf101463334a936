//! End-to-end checks of the phase-one learner on the ring-corridor domain:
//! partition counts, vocabulary size, and the recovered rule table.

use egosym::data::collect;
use egosym::domains::corridor::{self, make_corridor, CorridorEnv};
use egosym::math;
use egosym::partition::{
    check_subgoal, cluster_effects, default_eps, merge_overlapping, partition_dataset,
    PartitionParams, Space,
};
use egosym::symbols::{learn_portable, SymbolParams};
use egosym::Dataset;

fn corridor_dataset(budget: usize, seed: u64) -> Dataset {
    let mut env = make_corridor([0.0, 0.0], seed);
    collect(&mut env, budget, seed)
}

/// Decode an observation to its nearest prototype name.
fn decode(obs: &[f64]) -> &'static str {
    ["wall-junction", "window-junction", "dead-end"]
        .into_iter()
        .min_by(|a, b| {
            let da = math::sq_dist(obs, CorridorEnv::prototype_of(a).as_slice());
            let db = math::sq_dist(obs, CorridorEnv::prototype_of(b).as_slice());
            da.partial_cmp(&db).unwrap()
        })
        .unwrap()
}

#[test]
fn inward_effect_prototypes_are_separated_beyond_eps() {
    let ds = corridor_dataset(2000, 0);
    let idxs = ds.successes_of(corridor::INWARD);
    assert!(idxs.len() >= 200, "only {} Inward successes", idxs.len());
    let effects: Vec<&[f64]> = idxs.iter().map(|&i| ds.transitions[i].next_obs.as_slice()).collect();
    let st = math::RangeScaler::fit(&effects);
    let z: Vec<Vec<f64>> = effects.iter().map(|e| st.apply(e)).collect();
    let eps = default_eps(&z);
    let wall = st.apply(CorridorEnv::prototype_of("wall-junction"));
    let window = st.apply(CorridorEnv::prototype_of("window-junction"));
    let sep = math::dist(&wall, &window);
    assert!(
        sep > 2.0 * eps,
        "prototype separation {sep} vs eps {eps} leaves no margin"
    );
}

#[test]
fn inward_partitions_merge_in_ego_space_but_not_in_problem_space() {
    let ds = corridor_dataset(2000, 0);
    let params = PartitionParams::default();

    // Egocentric: two effect clusters whose aliased starts force a merge.
    let ego = cluster_effects(&ds, corridor::INWARD, Space::Ego, &params).unwrap();
    assert_eq!(ego.len(), 2, "expected 2 egocentric effect clusters");
    let merged = merge_overlapping(ego, &ds, &params);
    assert_eq!(merged.len(), 1, "aliased dead-ends must merge");
    assert_eq!(merged[0].outcomes.len(), 2, "both outcomes retained");

    // Problem space: the dead-ends are far apart, so no merge happens.
    let prob = cluster_effects(&ds, corridor::INWARD, Space::Problem, &params).unwrap();
    assert_eq!(prob.len(), 2, "expected 2 problem-space clusters");
    let merged_prob = merge_overlapping(prob, &ds, &params);
    assert_eq!(merged_prob.len(), 2, "problem-space partitions stay apart");

    // And those clusters sit at the two junction coordinates.
    let env = make_corridor([0.0, 0.0], 0);
    use egosym::domains::oracle::DomainOracle;
    let graph = env.abstract_graph();
    for part in &merged_prob {
        let pts: Vec<&[f64]> =
            part.members.iter().map(|&i| ds.transitions[i].next_state.as_slice()).collect();
        let c = math::centroid(&pts);
        let nearest = graph
            .nodes
            .iter()
            .map(|n| math::dist(&c, &n.anchor))
            .fold(f64::INFINITY, f64::min);
        assert!(nearest < 0.2, "cluster centroid {c:?} off-anchor by {nearest}");
    }
}

#[test]
fn corridor_partitioning_yields_exactly_six_partitioned_options() {
    let ds = corridor_dataset(2000, 0);
    let parts = partition_dataset(&ds, Space::Ego, &PartitionParams::default()).unwrap();
    assert_eq!(parts.len(), 6, "partitioned options: {:?}",
        parts.iter().map(|p| (&p.option_id, p.partition_index)).collect::<Vec<_>>());
}

#[test]
fn clockwise_partitions_pass_the_subgoal_check() {
    let ds = corridor_dataset(2000, 0);
    let parts = cluster_effects(
        &ds,
        corridor::CLOCKWISE,
        Space::Ego,
        &PartitionParams::default(),
    )
    .unwrap();
    for part in &parts {
        let p = check_subgoal(&part, &ds, 5).unwrap();
        assert!(p > 0.05, "partition {} p-value {p}", part.partition_index);
    }
}

#[test]
fn corridor_model_recovers_three_symbols_and_six_rules() {
    let ds = corridor_dataset(2000, 0);
    let model = learn_portable(&ds, &SymbolParams::default(), None).unwrap();
    assert_eq!(model.vocabulary.len(), 3, "vocabulary: {:?}",
        model.vocabulary.symbols.iter().map(|s| (&s.name, &s.mask)).collect::<Vec<_>>());
    assert_eq!(model.rules.len(), 6);

    // Identify symbols by decoding their density means.
    let name_of = |id: usize| -> &'static str {
        decode(&model.vocabulary.get(id).density.mean())
    };

    // Rebuild the rule table: option -> (precondition names, outcome names).
    let mut table: Vec<(String, Vec<&str>, Vec<(&str, f64)>)> = Vec::new();
    for rule in &model.rules {
        let pre: Vec<&str> = rule
            .precondition
            .conjunction
            .iter()
            .flat_map(|group| group.iter().map(|&id| name_of(id)))
            .collect();
        let outs: Vec<(&str, f64)> = rule
            .outcomes
            .iter()
            .map(|o| (name_of(o.symbols[0]), o.probability))
            .collect();
        table.push((rule.option_id.clone(), pre, outs));
    }

    let find = |option: &str, pre: &str| -> Vec<(&str, f64)> {
        table
            .iter()
            .find(|(o, p, _)| o == option && p.contains(&pre))
            .unwrap_or_else(|| panic!("no rule {option} with precondition {pre}: {table:?}"))
            .2
            .clone()
    };

    // Clockwise/Anticlockwise: junction -> opposite junction.
    for option in ["Clockwise", "Anticlockwise"] {
        let outs = find(option, "wall-junction");
        assert_eq!(outs.len(), 1);
        assert_eq!(outs[0].0, "window-junction");
        let outs = find(option, "window-junction");
        assert_eq!(outs.len(), 1);
        assert_eq!(outs[0].0, "wall-junction");
    }

    // Outward: either junction -> dead-end; precondition is the OR of both
    // junction symbols.
    let outward = table
        .iter()
        .find(|(o, _, _)| o == "Outward")
        .expect("an Outward rule");
    assert!(outward.1.contains(&"wall-junction") && outward.1.contains(&"window-junction"));
    assert_eq!(outward.2.len(), 1);
    assert_eq!(outward.2[0].0, "dead-end");

    // Inward: dead-end -> junction with probabilities 0.5 +- 0.1 each.
    let inward = find("Inward", "dead-end");
    assert_eq!(inward.len(), 2, "Inward outcomes: {inward:?}");
    let mut names: Vec<&str> = inward.iter().map(|(n, _)| *n).collect();
    names.sort();
    assert_eq!(names, vec!["wall-junction", "window-junction"]);
    for (_, p) in &inward {
        assert!((p - 0.5).abs() <= 0.1, "Inward outcome probability {p}");
    }
}
