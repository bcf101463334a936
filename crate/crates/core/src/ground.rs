//! Phase two: partition options in problem space, label the partitions,
//! learn count-based linking functions from the current task's transitions,
//! and instantiate the portable rules into grounded operators.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kde::Kde;
use crate::math::{self, RangeScaler};
use crate::partition::{partition_dataset, PartitionParams, Space};
use crate::symbols::{PortableModel, PortableRule, Vocabulary};

/// One problem-space partition label: a region of the task's state space
/// with a fitted start-state density for goal evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDef {
    pub label: usize,
    /// Dataset indices of the member start states.
    pub members: Vec<usize>,
    /// Representative member start states (range-scaled), for assignment.
    reps: Vec<Vec<f64>>,
    pub density: Kde,
    pub centroid: Vec<f64>,
}

/// Per-transition label assignment for one task's dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Labeling {
    pub labels: Vec<LabelDef>,
    pub start_label: Vec<Option<usize>>,
    pub end_label: Vec<Option<usize>>,
    scaler: RangeScaler,
    eps: f64,
}

impl Labeling {
    /// Label containing a problem-space state, if it lies within the
    /// assignment radius of any label's members.
    pub fn assign(&self, state: &[f64]) -> Option<usize> {
        let z = self.scaler.apply(state);
        let mut best: Option<(f64, usize)> = None;
        for def in &self.labels {
            for rep in &def.reps {
                let d = math::sq_dist(&z, rep);
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, def.label));
                }
            }
        }
        best.and_then(|(d, l)| (d.sqrt() <= self.eps).then_some(l))
    }
}

/// Compute problem-space partitions for every option, merge partitions of
/// different options whose start sets mutually overlap into shared labels,
/// and assign every transition a start and end label. Labels are dense
/// integers from 0 in centroid order.
pub fn label_problem_partitions(ds: &Dataset, params: &PartitionParams) -> Result<Labeling> {
    let parts = partition_dataset(ds, Space::Problem, params)?;
    if parts.is_empty() {
        return Err(Error::InsufficientData(
            "no successful transitions to label".into(),
        ));
    }

    // Shared standardization over all start states.
    let starts: Vec<&[f64]> = ds
        .transitions
        .iter()
        .map(|t| t.state.as_slice())
        .collect();
    let scaler = RangeScaler::fit(&starts);
    let z_start: Vec<Vec<f64>> = ds
        .transitions
        .iter()
        .map(|t| scaler.apply(&t.state))
        .collect();
    let z_end: Vec<Vec<f64>> = ds
        .transitions
        .iter()
        .map(|t| scaler.apply(&t.next_state))
        .collect();
    let eps = params
        .eps
        .unwrap_or_else(|| crate::partition::default_eps(&z_start));

    // Union partitions across options by mutual start overlap.
    let mut parent: Vec<usize> = (0..parts.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    let zs_of = |p: &crate::partition::Partition| -> Vec<&Vec<f64>> {
        p.members.iter().map(|&i| &z_start[i]).collect()
    };
    for a in 0..parts.len() {
        for b in (a + 1)..parts.len() {
            let za = zs_of(&parts[a]);
            let zb = zs_of(&parts[b]);
            if overlap(&za, &zb, eps) > params.overlap_threshold {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[rb] = ra;
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..parts.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }

    // Build labels, canonicalized by start centroid.
    let mut defs: Vec<LabelDef> = groups
        .values()
        .map(|group| {
            let mut members: Vec<usize> = group
                .iter()
                .flat_map(|&i| parts[i].members.iter().copied())
                .collect();
            members.sort_unstable();
            members.dedup();
            let pts: Vec<Vec<f64>> = members
                .iter()
                .map(|&i| ds.transitions[i].state.clone())
                .collect();
            let refs: Vec<&[f64]> = pts.iter().map(|p| p.as_slice()).collect();
            let centroid = math::centroid(&refs);
            let rep_idx = math::stride_indices(members.len(), 64);
            let reps: Vec<Vec<f64>> = rep_idx.iter().map(|&k| z_start[members[k]].clone()).collect();
            LabelDef {
                label: 0,
                members,
                reps,
                density: Kde::fit(pts),
                centroid,
            }
        })
        .collect();
    defs.sort_by(|a, b| math::lex_cmp(&a.centroid, &b.centroid));
    for (i, d) in defs.iter_mut().enumerate() {
        d.label = i;
    }

    // Assignments: membership for starts, nearest-rep-within-eps for ends.
    let mut start_label = vec![None; ds.transitions.len()];
    for def in &defs {
        for &i in &def.members {
            start_label[i] = Some(def.label);
        }
    }
    let assign = |z: &[f64]| -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for def in &defs {
            for rep in &def.reps {
                let d = math::sq_dist(z, rep);
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, def.label));
                }
            }
        }
        best.and_then(|(d, l)| (d.sqrt() <= eps).then_some(l))
    };
    let mut end_label = vec![None; ds.transitions.len()];
    for (i, t) in ds.transitions.iter().enumerate() {
        if t.success {
            end_label[i] = assign(&z_end[i]);
        }
        if start_label[i].is_none() {
            start_label[i] = assign(&z_start[i]);
        }
    }

    Ok(Labeling {
        labels: defs,
        start_label,
        end_label,
        scaler,
        eps,
    })
}

fn overlap(a: &[&Vec<f64>], b: &[&Vec<f64>], eps: f64) -> f64 {
    let eps2 = eps * eps;
    let frac = |xs: &[&Vec<f64>], ys: &[&Vec<f64>]| -> f64 {
        if xs.is_empty() {
            return 0.0;
        }
        let hits = xs
            .iter()
            .filter(|x| ys.iter().any(|y| math::sq_dist(x, y) <= eps2))
            .count();
        hits as f64 / xs.len() as f64
    };
    frac(a, b).max(frac(b, a))
}

/// One (outcome, end-label) branch of a linking row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkBranch {
    pub outcome_index: usize,
    pub end_label: usize,
    pub probability: f64,
}

/// Count-based linking: for each (option, egocentric partition, start
/// label), the empirical joint distribution over (outcome, end label).
/// Marginalizing over outcomes gives the end-label distribution; rows with
/// zero counts are absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkingFunction {
    pub rows: Vec<LinkRowEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkRowEntry {
    pub option_id: String,
    pub ego_label: usize,
    pub start_label: usize,
    pub total: usize,
    pub branches: Vec<LinkBranch>,
}

impl LinkingFunction {
    pub fn row(&self, option_id: &str, ego_label: usize, start_label: usize) -> Option<&LinkRowEntry> {
        self.rows.iter().find(|r| {
            r.option_id == option_id && r.ego_label == ego_label && r.start_label == start_label
        })
    }

    /// Marginal end-label distribution of one row.
    pub fn end_label_dist(
        &self,
        option_id: &str,
        ego_label: usize,
        start_label: usize,
    ) -> Option<BTreeMap<usize, f64>> {
        self.row(option_id, ego_label, start_label).map(|row| {
            let mut dist = BTreeMap::new();
            for b in &row.branches {
                *dist.entry(b.end_label).or_insert(0.0) += b.probability;
            }
            dist
        })
    }
}

/// Assign each successful transition to the portable rule (and outcome) that
/// best explains it, then count label-to-label transitions.
pub fn learn_linking(ds: &Dataset, labeling: &Labeling, model: &PortableModel) -> LinkingFunction {
    let mut counts: BTreeMap<(String, usize, usize), BTreeMap<(usize, usize), usize>> =
        BTreeMap::new();
    for (i, t) in ds.transitions.iter().enumerate() {
        if !t.success {
            continue;
        }
        let (Some(ls), Some(le)) = (labeling.start_label[i], labeling.end_label[i]) else {
            continue;
        };
        let rules = model.rules_of(&t.option_id);
        if rules.is_empty() {
            continue;
        }
        let rule = rules
            .iter()
            .max_by(|a, b| {
                let sa = a.precondition.classifier.predict(&t.obs);
                let sb = b.precondition.classifier.predict(&t.obs);
                sa.partial_cmp(&sb)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(b.ego_label.cmp(&a.ego_label))
            })
            .expect("non-empty rules");
        let outcome = best_outcome(rule, &model.vocabulary, &t.next_obs);
        *counts
            .entry((t.option_id.clone(), rule.ego_label, ls))
            .or_default()
            .entry((outcome, le))
            .or_default() += 1;
    }
    let rows = counts
        .into_iter()
        .map(|((option_id, ego_label, start_label), branch_counts)| {
            let total: usize = branch_counts.values().sum();
            let branches = branch_counts
                .into_iter()
                .map(|((outcome_index, end_label), c)| LinkBranch {
                    outcome_index,
                    end_label,
                    probability: c as f64 / total as f64,
                })
                .collect();
            LinkRowEntry {
                option_id,
                ego_label,
                start_label,
                total,
                branches,
            }
        })
        .collect();
    LinkingFunction { rows }
}

/// Which of a rule's outcomes best explains an observed effect: highest
/// per-dimension average log-density over the outcome's mask plus the
/// outcome's log prior.
pub fn best_outcome(rule: &PortableRule, vocabulary: &Vocabulary, next_obs: &[f64]) -> usize {
    let mut best = (f64::NEG_INFINITY, 0usize);
    for (k, outcome) in rule.outcomes.iter().enumerate() {
        let mut score = outcome.probability.max(1e-12).ln();
        let mut dims = 0usize;
        let mut logp = 0.0;
        for &sid in &outcome.symbols {
            let sym = vocabulary.get(sid);
            let masked: Vec<f64> = sym.mask.iter().map(|&j| next_obs[j]).collect();
            logp += sym.density.log_density(&masked);
            dims += sym.mask.len();
        }
        if dims > 0 {
            score += logp / dims as f64;
        }
        if score > best.0 {
            best = (score, k);
        }
    }
    best.1
}

/// A portable rule instantiated at one start label, with its empirical
/// (outcome, end-label) branches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedOperator {
    pub option_id: String,
    pub ego_label: usize,
    pub start_label: usize,
    pub branches: Vec<LinkBranch>,
}

/// Portable rules plus everything task-specific needed to plan: labels,
/// linking, grounded operators, and the goal classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundedModel {
    pub domain_family: String,
    pub obs_dim: usize,
    pub vocabulary: Vocabulary,
    pub rules: Vec<PortableRule>,
    pub linking: LinkingFunction,
    pub labels: Vec<LabelDef>,
    label_scaler: RangeScaler,
    label_eps: f64,
    pub goal: Option<Classifier>,
    /// Per-label Monte-Carlo integral of the label's start-state density
    /// against the goal classifier.
    pub goal_prob: Vec<f64>,
    pub operators: Vec<GroundedOperator>,
    pub warnings: Vec<String>,
}

impl GroundedModel {
    pub fn operator(
        &self,
        option_id: &str,
        ego_label: usize,
        start_label: usize,
    ) -> Option<&GroundedOperator> {
        self.operators.iter().find(|o| {
            o.option_id == option_id && o.ego_label == ego_label && o.start_label == start_label
        })
    }

    pub fn has_rule_operator(&self, option_id: &str, ego_label: usize) -> bool {
        self.operators
            .iter()
            .any(|o| o.option_id == option_id && o.ego_label == ego_label)
    }

    pub fn rule(&self, option_id: &str, ego_label: usize) -> Option<&PortableRule> {
        self.rules
            .iter()
            .find(|r| r.option_id == option_id && r.ego_label == ego_label)
    }

    pub fn rules_of(&self, option_id: &str) -> Vec<&PortableRule> {
        self.rules
            .iter()
            .filter(|r| r.option_id == option_id)
            .collect()
    }

    /// Label containing a problem-space state, if any.
    pub fn assign_label(&self, state: &[f64]) -> Option<usize> {
        let z = self.label_scaler.apply(state);
        let mut best: Option<(f64, usize)> = None;
        for def in &self.labels {
            for rep in &def.reps {
                let d = math::sq_dist(&z, rep);
                if best.map_or(true, |(bd, _)| d < bd) {
                    best = Some((d, def.label));
                }
            }
        }
        best.and_then(|(d, l)| (d.sqrt() <= self.label_eps).then_some(l))
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<GroundedModel> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Serialized portable-rule section; byte-identical across groundings of
    /// the same portable model.
    pub fn rule_bytes(&self) -> Vec<u8> {
        serde_json::to_vec(&self.rules).expect("rules serialize")
    }
}

/// Goal specification: problem-space states labeled in/out of the goal set.
pub type GoalSamples = Vec<(Vec<f64>, bool)>;

/// Instantiate every portable rule at every start label that has a linking
/// row. Rules or labels without linking data yield no operator (planning
/// with invented probabilities is out); each omission is recorded.
pub fn ground_rules(
    model: &PortableModel,
    linking: LinkingFunction,
    labeling: &Labeling,
    goal_samples: &GoalSamples,
) -> Result<GroundedModel> {
    let mut warnings = Vec::new();
    let mut operators = Vec::new();
    for rule in &model.rules {
        let mut any = false;
        for def in &labeling.labels {
            if let Some(row) = linking.row(&rule.option_id, rule.ego_label, def.label) {
                operators.push(GroundedOperator {
                    option_id: rule.option_id.clone(),
                    ego_label: rule.ego_label,
                    start_label: def.label,
                    branches: row.branches.clone(),
                });
                any = true;
            }
        }
        if !any {
            warnings.push(format!(
                "no linking rows for rule {}[{}]; operator omitted",
                rule.option_id, rule.ego_label
            ));
        }
    }

    let goal = if goal_samples.is_empty() {
        None
    } else {
        let pos: Vec<Vec<f64>> = goal_samples
            .iter()
            .filter(|(_, g)| *g)
            .map(|(s, _)| s.clone())
            .collect();
        let neg: Vec<Vec<f64>> = goal_samples
            .iter()
            .filter(|(_, g)| !*g)
            .map(|(s, _)| s.clone())
            .collect();
        match Classifier::fit(&pos, &neg) {
            Ok(c) => Some(c),
            Err(e) => {
                warnings.push(format!("goal classifier not fitted: {e}"));
                None
            }
        }
    };

    let goal_prob: Vec<f64> = labeling
        .labels
        .iter()
        .map(|def| match &goal {
            Some(clf) => {
                use rand::SeedableRng;
                let mut rng =
                    rand_chacha::ChaCha8Rng::seed_from_u64(math::derive_seed(0x60a1, def.label as u64));
                let n = 2048;
                let mut acc = 0.0;
                for _ in 0..n {
                    let s = def.density.sample(&mut rng);
                    acc += clf.predict(&s);
                }
                acc / n as f64
            }
            None => 0.0,
        })
        .collect();

    Ok(GroundedModel {
        domain_family: model.domain_family.clone(),
        obs_dim: model.obs_dim,
        vocabulary: model.vocabulary.clone(),
        rules: model.rules.clone(),
        linking,
        labels: labeling.labels.clone(),
        label_scaler: labeling.scaler.clone(),
        label_eps: labeling.eps,
        goal,
        goal_prob,
        operators,
        warnings,
    })
}

/// Ground a whole task in one call: labels, linking, operators, goal.
pub fn ground_task(
    model: &PortableModel,
    ds: &Dataset,
    params: &PartitionParams,
    goal_samples: &GoalSamples,
) -> Result<GroundedModel> {
    let labeling = label_problem_partitions(ds, params)?;
    let linking = learn_linking(ds, &labeling, model);
    ground_rules(model, linking, &labeling, goal_samples)
}
