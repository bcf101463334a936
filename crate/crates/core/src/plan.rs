//! Plan evaluation and search over the grounded abstract space.
//!
//! Beliefs are particle sets over (egocentric observation, partition label).
//! Evaluating a step multiplies in the weighted mean precondition score over
//! particles, then resamples particles through the step's outcome densities
//! with labels advanced via the linking function; outcome and end label are
//! drawn jointly from the empirical branch distribution, which keeps
//! aliased options calibrated at label granularity. A Monte-Carlo simulation
//! oracle validates the whole computation against the real environment.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::env::Environment;
use crate::error::{Error, Result};
use crate::ground::GroundedModel;
use crate::math;
use crate::symbols::PortableRule;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub obs: Vec<f64>,
    pub label: Option<usize>,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct BeliefState {
    pub particles: Vec<Particle>,
}

impl BeliefState {
    pub fn normalized(mut self) -> Self {
        let total: f64 = self.particles.iter().map(|p| p.weight).sum();
        if total > 0.0 {
            for p in &mut self.particles {
                p.weight /= total;
            }
        }
        self
    }

    /// Build a start belief from problem-space states: each state is
    /// observed through the environment's sensors and labeled by the
    /// grounded model's partition labels.
    pub fn from_states(
        env: &mut dyn Environment,
        gm: &GroundedModel,
        states: &[Vec<f64>],
    ) -> BeliefState {
        let particles = states
            .iter()
            .map(|s| {
                env.set_state(s);
                Particle {
                    obs: env.observe(),
                    label: gm.assign_label(s),
                    weight: 1.0 / states.len() as f64,
                }
            })
            .collect();
        BeliefState { particles }
    }
}

/// One plan step: an option, optionally pinned to a specific egocentric
/// partition. With `ego_label: None` the step is evaluated as the mixture
/// over the option's partitions (the planner pins labels; the experiment
/// protocol evaluates bare option sequences).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanStep {
    pub option_id: String,
    pub ego_label: Option<usize>,
}

impl PlanStep {
    pub fn option(option_id: impl Into<String>) -> Self {
        PlanStep {
            option_id: option_id.into(),
            ego_label: None,
        }
    }

    pub fn pinned(option_id: impl Into<String>, ego_label: usize) -> Self {
        PlanStep {
            option_id: option_id.into(),
            ego_label: Some(ego_label),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub steps: Vec<PlanStep>,
    pub probability: f64,
}

#[derive(Debug, Clone)]
pub struct PlanConfig {
    pub particles: usize,
    pub seed: u64,
}

impl Default for PlanConfig {
    fn default() -> Self {
        PlanConfig {
            particles: 256,
            seed: 0,
        }
    }
}

/// Probability that the plan executes to completion from belief `z`,
/// times (when `goal` is set) the probability that the final state satisfies
/// the goal. Pure given (gm, z, steps, cfg).
pub fn plan_probability(
    gm: &GroundedModel,
    z: &BeliefState,
    steps: &[PlanStep],
    goal: bool,
    cfg: &PlanConfig,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut belief = z.clone().normalized();
    let mut prob = 1.0f64;
    for step in steps {
        let (step_prob, next) = advance(gm, &belief, step, cfg.particles, &mut rng)?;
        prob *= step_prob;
        if prob <= 0.0 {
            return Ok(0.0);
        }
        belief = next;
    }
    if goal {
        prob *= goal_probability(gm, &belief);
    }
    Ok(prob.clamp(0.0, 1.0))
}

/// Weighted mean goal probability of a belief under the per-label goal
/// integrals.
pub fn goal_probability(gm: &GroundedModel, belief: &BeliefState) -> f64 {
    belief
        .particles
        .iter()
        .map(|p| {
            p.label
                .and_then(|l| gm.goal_prob.get(l))
                .copied()
                .unwrap_or(0.0)
                * p.weight
        })
        .sum()
}

/// One step of belief propagation. Returns the step success probability and
/// the resampled successor belief.
fn advance(
    gm: &GroundedModel,
    belief: &BeliefState,
    step: &PlanStep,
    n_particles: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, BeliefState)> {
    let rules: Vec<&PortableRule> = match step.ego_label {
        Some(l) => {
            let rule = gm.rule(&step.option_id, l).ok_or(Error::MissingOperator {
                option_id: step.option_id.clone(),
                ego_label: l,
            })?;
            if !gm.has_rule_operator(&step.option_id, l) {
                return Err(Error::MissingOperator {
                    option_id: step.option_id.clone(),
                    ego_label: l,
                });
            }
            vec![rule]
        }
        None => {
            let rules = gm.rules_of(&step.option_id);
            if rules.is_empty() {
                return Err(Error::MissingOperator {
                    option_id: step.option_id.clone(),
                    ego_label: 0,
                });
            }
            rules
        }
    };

    // Per particle, per rule: classifier score gated on a linking row being
    // available for the particle's label.
    let mut weights: Vec<(usize, usize, f64)> = Vec::new(); // (particle, rule idx, mass)
    let mut step_prob = 0.0;
    for (pi, particle) in belief.particles.iter().enumerate() {
        let mut app = 0.0;
        for (ri, rule) in rules.iter().enumerate() {
            let Some(label) = particle.label else { continue };
            if gm.operator(&step.option_id, rule.ego_label, label).is_none() {
                continue;
            }
            let score = rule.precondition.classifier.predict(&particle.obs);
            app += score;
            weights.push((pi, ri, particle.weight * score));
        }
        step_prob += particle.weight * app.min(1.0);
    }
    if step_prob <= 1e-12 || weights.is_empty() {
        return Ok((0.0, BeliefState::default()));
    }

    // Resample through outcomes with labels advanced via the linking rows.
    let total_mass: f64 = weights.iter().map(|(_, _, m)| m).sum();
    let mut particles = Vec::with_capacity(n_particles);
    for _ in 0..n_particles {
        let mut pick = rng.gen_range(0.0..total_mass);
        let mut chosen = &weights[0];
        for w in &weights {
            pick -= w.2;
            if pick <= 0.0 {
                chosen = w;
                break;
            }
        }
        let (pi, ri, _) = *chosen;
        let source = &belief.particles[pi];
        let rule = rules[ri];
        let op = gm
            .operator(&step.option_id, rule.ego_label, source.label.expect("gated"))
            .expect("gated on operator presence");
        // Draw (outcome, end label) jointly from the empirical branches.
        let mut pick = rng.gen_range(0.0..1.0);
        let mut branch = &op.branches[0];
        for b in &op.branches {
            pick -= b.probability;
            if pick <= 0.0 {
                branch = b;
                break;
            }
        }
        let outcome = &rule.outcomes[branch.outcome_index.min(rule.outcomes.len() - 1)];
        let mut obs = source.obs.clone();
        for &sid in &outcome.symbols {
            let sym = gm.vocabulary.get(sid);
            let draw = sym.density.sample(rng);
            for (slot, &dim) in sym.mask.iter().enumerate() {
                obs[dim] = draw[slot];
            }
        }
        particles.push(Particle {
            obs,
            label: Some(branch.end_label),
            weight: 1.0 / n_particles as f64,
        });
    }
    Ok((step_prob, BeliefState { particles }))
}

/// Fraction of rollouts in which every option in the sequence executes
/// successfully and (when a goal predicate is supplied) the final state
/// satisfies it. Starts are drawn uniformly from `starts`.
pub fn monte_carlo_success(
    env: &mut dyn Environment,
    starts: &[Vec<f64>],
    options: &[String],
    goal: Option<&dyn Fn(&[f64]) -> bool>,
    rollouts: usize,
    seed: u64,
) -> f64 {
    assert!(rollouts >= 1, "rollouts must be positive");
    assert!(!starts.is_empty(), "need at least one start state");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut successes = 0usize;
    for _ in 0..rollouts {
        let start = &starts[rng.gen_range(0..starts.len())];
        env.set_state(start);
        let mut ok = true;
        for option in options {
            if !env.execute(option).success {
                ok = false;
                break;
            }
        }
        if ok {
            if let Some(g) = goal {
                if !g(&env.state()) {
                    ok = false;
                }
            }
        }
        if ok {
            successes += 1;
        }
    }
    successes as f64 / rollouts as f64
}

/// Best-first search over (symbol set, label) abstract states: expands
/// operators whose stepwise probability clears `prob_floor`, scores partial
/// plans by running probability, and returns the highest-probability plan
/// whose goal probability clears the floor within `max_depth` steps.
/// Deterministic given (gm, z, cfg); ties break lexicographically by
/// (option_id, label).
pub fn search_plan(
    gm: &GroundedModel,
    z: &BeliefState,
    max_depth: usize,
    prob_floor: f64,
    cfg: &PlanConfig,
) -> Option<Plan> {
    const MAX_EXPANSIONS: usize = 20_000;

    // Deterministic operator menu: distinct (option, ego) pairs, lex order.
    let mut menu: Vec<(String, usize)> = gm
        .operators
        .iter()
        .map(|o| (o.option_id.clone(), o.ego_label))
        .collect();
    menu.sort();
    menu.dedup();

    #[derive(Clone)]
    struct Node {
        prob: f64,
        steps: Vec<PlanStep>,
        belief: BeliefState,
        seed: u64,
    }
    struct Entry(f64, Reverse<usize>, usize); // (prob, insertion order, node idx)
    impl PartialEq for Entry {
        fn eq(&self, other: &Self) -> bool {
            self.0 == other.0 && self.1 == other.1
        }
    }
    impl Eq for Entry {}
    impl PartialOrd for Entry {
        fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(other))
        }
    }
    impl Ord for Entry {
        fn cmp(&self, other: &Self) -> std::cmp::Ordering {
            self.0
                .partial_cmp(&other.0)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then_with(|| self.1.cmp(&other.1))
        }
    }

    let root = Node {
        prob: 1.0,
        steps: Vec::new(),
        belief: z.clone().normalized(),
        seed: cfg.seed,
    };
    let mut nodes = vec![root];
    let mut heap = BinaryHeap::new();
    heap.push(Entry(1.0, Reverse(0), 0));
    let mut best: Option<Plan> = None;
    let mut expansions = 0usize;
    let mut seq = 1usize;

    while let Some(Entry(prob, _, idx)) = heap.pop() {
        if let Some(b) = &best {
            if prob <= b.probability {
                break; // no remaining node can beat the incumbent
            }
        }
        let node = nodes[idx].clone();
        let goal_p = prob * goal_probability(gm, &node.belief);
        if goal_p >= prob_floor && best.as_ref().map_or(true, |b| goal_p > b.probability) {
            best = Some(Plan {
                steps: node.steps.clone(),
                probability: goal_p,
            });
        }
        if node.steps.len() >= max_depth {
            continue;
        }
        expansions += 1;
        if expansions > MAX_EXPANSIONS {
            break;
        }
        for (option_id, ego_label) in &menu {
            let step = PlanStep::pinned(option_id.clone(), *ego_label);
            let child_seed = math::derive_seed(
                node.seed,
                math::derive_seed(
                    *ego_label as u64 ^ 0x5eed,
                    option_id.bytes().fold(0u64, |h, b| h.wrapping_mul(31).wrapping_add(b as u64)),
                ),
            );
            let mut rng = ChaCha8Rng::seed_from_u64(child_seed);
            let Ok((step_prob, next_belief)) =
                advance(gm, &node.belief, &step, cfg.particles, &mut rng)
            else {
                continue;
            };
            if step_prob < prob_floor {
                continue;
            }
            let child_prob = node.prob * step_prob;
            if let Some(b) = &best {
                if child_prob <= b.probability {
                    continue;
                }
            }
            let mut steps = node.steps.clone();
            steps.push(step);
            nodes.push(Node {
                prob: child_prob,
                steps,
                belief: next_belief,
                seed: child_seed,
            });
            heap.push(Entry(child_prob, Reverse(seq), nodes.len() - 1));
            seq += 1;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domains::corridor::{self, make_corridor};

    #[test]
    fn monte_carlo_trivial_cases() {
        let mut env = make_corridor([0.0, 0.0], 0);
        // Start at the wall junction.
        let starts = vec![env.state()];
        // A 1-step always-valid plan.
        let p = monte_carlo_success(
            &mut env,
            &starts,
            &[corridor::CLOCKWISE.to_string()],
            None,
            200,
            1,
        );
        assert_eq!(p, 1.0);
        // A plan whose first option is never initiable from the start region.
        let p = monte_carlo_success(
            &mut env,
            &starts,
            &[corridor::INWARD.to_string()],
            None,
            200,
            1,
        );
        assert_eq!(p, 0.0);
    }
}
