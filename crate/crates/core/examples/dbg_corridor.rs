use egosym::data::collect;
use egosym::domains::corridor::{self, make_corridor, CorridorEnv};
use egosym::math;
use egosym::partition::{cluster_effects, default_eps, PartitionParams, Space};
use egosym::symbols::{learn_portable, SymbolParams};
use egosym::kde::l2_normalized_distance;

fn main() {
    let mut env = make_corridor([0.0, 0.0], 0);
    let ds = collect(&mut env, 2000, 0);
    let idxs = ds.successes_of(corridor::INWARD);
    let effects: Vec<&[f64]> = idxs.iter().map(|&i| ds.transitions[i].next_obs.as_slice()).collect();
    let st = math::Standardizer::fit(&effects);
    let z: Vec<Vec<f64>> = effects.iter().map(|e| st.apply(e)).collect();
    let eps = default_eps(&z);
    let wall = st.apply(CorridorEnv::prototype_of("wall-junction"));
    let window = st.apply(CorridorEnv::prototype_of("window-junction"));
    println!("eps={} sep={}", eps, math::dist(&wall, &window));
    println!("stds={:?}", st.stds);

    let model = learn_portable(&ds, &SymbolParams::default(), None).unwrap();
    println!("symbols: {}", model.vocabulary.len());
    for s in &model.vocabulary.symbols {
        println!("  id={} mask={:?} mean={:?} n={} bw={:?}", s.id, s.mask, s.density.mean(), s.density.points.len(), s.density.bandwidth);
    }
    for a in 0..model.vocabulary.len() {
        for b in (a+1)..model.vocabulary.len() {
            let d = l2_normalized_distance(&model.vocabulary.get(a).density, &model.vocabulary.get(b).density, 2048, 1);
            println!("  d({a},{b}) = {d:.4}");
        }
    }
    for r in &model.rules {
        println!("rule {} [{}]: pre={:?} outcomes={:?}", r.option_id, r.ego_label, r.precondition.conjunction, r.outcomes.iter().map(|o| (o.probability, o.symbols.clone())).collect::<Vec<_>>());
    }
}
