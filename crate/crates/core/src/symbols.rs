//! Phase one of the pipeline: estimate preconditions (calibrated classifiers
//! plus symbolic conjunctions) and masked effect densities per egocentric
//! partition, deduplicate densities into a portable vocabulary, and assemble
//! the portable probabilistic rules.

use serde::{Deserialize, Serialize};

use crate::classifier::Classifier;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::kde::{l2_normalized_distance, Kde};
use crate::math;
use crate::partition::{partition_dataset, Partition, PartitionParams, Space};

/// A named distribution over a masked subset of egocentric variables; the
/// unit of the portable vocabulary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Symbol {
    pub id: usize,
    /// Indices of the observation variables the distribution covers, sorted.
    pub mask: Vec<usize>,
    /// Density over the masked variables, in mask order.
    pub density: Kde,
    pub name: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub symbols: Vec<Symbol>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn get(&self, id: usize) -> &Symbol {
        &self.symbols[id]
    }
}

/// Precondition of one partitioned option: the calibrated classifier is what
/// planning uses; the symbolic form (a conjunction of OR-groups over
/// vocabulary symbols with pairwise-disjoint masks) is advisory, for PPDDL
/// emission and readability.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreconditionModel {
    pub classifier: Classifier,
    /// AND of OR-groups of symbol ids; symbols within a group share a mask.
    pub conjunction: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub probability: f64,
    /// Effect symbols with pairwise-disjoint masks.
    pub symbols: Vec<usize>,
}

/// One lifted probabilistic operator: precondition and outcome distribution
/// for one egocentric partition of one option.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortableRule {
    pub option_id: String,
    pub ego_label: usize,
    pub precondition: PreconditionModel,
    pub outcomes: Vec<Outcome>,
}

/// One egocentric transition kept in the model file so later tasks can
/// extend the model with their own data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgoSample {
    pub option_id: String,
    pub success: bool,
    pub obs: Vec<f64>,
    pub next_obs: Vec<f64>,
}

/// The portable artifact: vocabulary, rules, and the egocentric sample pool
/// they were fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PortableModel {
    pub domain_family: String,
    pub obs_dim: usize,
    pub obs_noise: Vec<f64>,
    pub vocabulary: Vocabulary,
    pub rules: Vec<PortableRule>,
    pub pool: Vec<EgoSample>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl PortableModel {
    pub fn rules_of(&self, option_id: &str) -> Vec<&PortableRule> {
        self.rules
            .iter()
            .filter(|r| r.option_id == option_id)
            .collect()
    }

    pub fn rule(&self, option_id: &str, ego_label: usize) -> Option<&PortableRule> {
        self.rules
            .iter()
            .find(|r| r.option_id == option_id && r.ego_label == ego_label)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path.as_ref(), text).map_err(|e| Error::io(path.as_ref(), e))
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<PortableModel> {
        let text =
            std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum NegativeSource {
    /// Failed initiation attempts of the same option (the default), plus the
    /// start states of the option's other partitions.
    #[default]
    FailedInitiations,
    /// Start states of other options' successful executions, plus the start
    /// states of the option's other partitions.
    OtherOptionSuccesses,
}

#[derive(Debug, Clone)]
pub struct SymbolParams {
    pub partition: PartitionParams,
    pub discard_threshold: f64,
    pub similarity_threshold: f64,
    pub negatives: NegativeSource,
    /// Sample count for Monte-Carlo density comparisons.
    pub mc_samples: usize,
}

impl Default for SymbolParams {
    fn default() -> Self {
        SymbolParams {
            partition: PartitionParams::default(),
            discard_threshold: 0.05,
            similarity_threshold: 0.1,
            negatives: NegativeSource::FailedInitiations,
            mc_samples: 2048,
        }
    }
}

/// Fit a calibrated precondition classifier; the symbolic form is attached
/// later, once the vocabulary is final.
pub fn fit_precondition(
    positives: &[Vec<f64>],
    negatives: &[Vec<f64>],
) -> Result<PreconditionModel> {
    let classifier = Classifier::fit(positives, negatives)?;
    Ok(PreconditionModel {
        classifier,
        conjunction: Vec::new(),
    })
}

/// Fit one effect symbol from paired (start, effect) vectors: the mask keeps
/// the variables whose mean absolute change exceeds three times the sensor
/// noise; the density is a Gaussian KDE over the masked variables.
pub fn fit_effect(
    starts: &[Vec<f64>],
    effects: &[Vec<f64>],
    noise: &[f64],
    min_samples: usize,
) -> Result<Symbol> {
    if effects.len() < min_samples || starts.len() != effects.len() {
        return Err(Error::InsufficientData(format!(
            "effect density needs >= {min_samples} paired samples, got {}",
            effects.len()
        )));
    }
    let d = effects[0].len();
    let n = effects.len() as f64;
    let mut mean_change = vec![0.0; d];
    for (s, e) in starts.iter().zip(effects) {
        for j in 0..d {
            mean_change[j] += (e[j] - s[j]).abs();
        }
    }
    let mask: Vec<usize> = (0..d)
        .filter(|&j| {
            let sigma = noise.get(j).copied().unwrap_or(0.0);
            mean_change[j] / n > 3.0 * sigma
        })
        .collect();
    let mask = if mask.is_empty() {
        // An effect that moves nothing beyond noise still needs a density to
        // be a symbol; fall back to the full space.
        (0..d).collect()
    } else {
        mask
    };
    let masked: Vec<Vec<f64>> = effects
        .iter()
        .map(|e| mask.iter().map(|&j| e[j]).collect())
        .collect();
    Ok(Symbol {
        id: 0,
        mask,
        density: Kde::fit(masked),
        name: None,
    })
}

/// Unify symbols with equal masks whose densities are closer than the
/// similarity threshold (normalized L2, Monte-Carlo estimated); rewrite all
/// rule references to the canonical representative and renumber canonically.
pub fn dedupe(
    vocabulary: Vocabulary,
    rules: &mut [PortableRule],
    similarity_threshold: f64,
    mc_samples: usize,
) -> Vocabulary {
    let n = vocabulary.symbols.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for a in 0..n {
        for b in (a + 1)..n {
            if vocabulary.symbols[a].mask != vocabulary.symbols[b].mask {
                continue;
            }
            if find(&mut parent, a) == find(&mut parent, b) {
                continue;
            }
            let d = l2_normalized_distance(
                &vocabulary.symbols[a].density,
                &vocabulary.symbols[b].density,
                mc_samples,
                math::derive_seed(0xD15, (a * n + b) as u64),
            );
            if d < similarity_threshold {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                parent[rb] = ra;
            }
        }
    }

    // Representative = the member with the most kernel points (the best
    // estimate of the shared density).
    let mut rep: std::collections::BTreeMap<usize, usize> = Default::default();
    for i in 0..n {
        let root = find(&mut parent, i);
        let e = rep.entry(root).or_insert(i);
        if vocabulary.symbols[i].density.points.len()
            > vocabulary.symbols[*e].density.points.len()
        {
            *e = i;
        }
    }

    // Canonical order of the surviving symbols: by (mask, density centroid).
    let mut survivors: Vec<usize> = rep.values().copied().collect();
    survivors.sort_by(|&a, &b| {
        let sa = &vocabulary.symbols[a];
        let sb = &vocabulary.symbols[b];
        sa.mask
            .cmp(&sb.mask)
            .then_with(|| math::lex_cmp(&sa.density.mean(), &sb.density.mean()))
    });
    let mut new_id_of_old = vec![usize::MAX; n];
    let mut symbols = Vec::with_capacity(survivors.len());
    for (new_id, &old) in survivors.iter().enumerate() {
        let mut s = vocabulary.symbols[old].clone();
        s.id = new_id;
        s.name = Some(format!("symbol_{new_id}"));
        symbols.push(s);
    }
    for i in 0..n {
        let root = find(&mut parent, i);
        let representative = rep[&root];
        let new_id = survivors.iter().position(|&s| s == representative).unwrap();
        new_id_of_old[i] = new_id;
    }
    for rule in rules.iter_mut() {
        for outcome in &mut rule.outcomes {
            for s in &mut outcome.symbols {
                *s = new_id_of_old[*s];
            }
            outcome.symbols.sort_unstable();
            outcome.symbols.dedup();
        }
        for group in &mut rule.precondition.conjunction {
            for s in group.iter_mut() {
                *s = new_id_of_old[*s];
            }
            group.sort_unstable();
            group.dedup();
        }
    }
    Vocabulary { symbols }
}

/// Build one rule per merged egocentric partition: outcomes are the effect
/// clusters with empirical frequencies (outcomes rarer than the discard
/// threshold are dropped and the rest renormalized), preconditions are
/// classifiers over start observations, and the symbolic conjunction is
/// derived by probing the classifier with vocabulary symbols.
pub fn build_portable_rules(
    ds: &Dataset,
    partitions: &[Partition],
    params: &SymbolParams,
) -> (Vocabulary, Vec<PortableRule>, Vec<String>) {
    let mut warnings = Vec::new();
    let mut vocabulary = Vocabulary::default();
    let mut rules = Vec::new();
    let mut rule_parts: Vec<&Partition> = Vec::new();
    let noise = effective_noise(ds);

    let space = partitions.first().map_or(Space::Ego, |p| p.space);
    for part in partitions {
        let positives: Vec<Vec<f64>> = part
            .members
            .iter()
            .map(|&i| space.start(ds, i).to_vec())
            .collect();
        let mut negatives: Vec<Vec<f64>> = match params.negatives {
            NegativeSource::FailedInitiations => ds
                .failures_of(&part.option_id)
                .iter()
                .map(|&i| space.start(ds, i).to_vec())
                .collect(),
            NegativeSource::OtherOptionSuccesses => ds
                .transitions
                .iter()
                .filter(|t| t.success && t.option_id != part.option_id)
                .map(|t| match space {
                    Space::Ego => t.obs.clone(),
                    Space::Problem => t.state.clone(),
                })
                .collect(),
        };
        // Starts of the option's other partitions are negatives either way:
        // partitioned options are distinct operators.
        for other in partitions {
            if other.option_id == part.option_id && other.partition_index != part.partition_index
            {
                negatives.extend(
                    other
                        .members
                        .iter()
                        .map(|&i| space.start(ds, i).to_vec()),
                );
            }
        }

        let precondition = match fit_precondition(&positives, &negatives) {
            Ok(p) => p,
            Err(e) => {
                warnings.push(format!(
                    "skipping rule for {}[{}]: {e}",
                    part.option_id, part.partition_index
                ));
                continue;
            }
        };

        // Outcome frequencies with the discard rule.
        let total: usize = part.outcomes.iter().map(|o| o.len()).sum();
        let kept: Vec<&Vec<usize>> = part
            .outcomes
            .iter()
            .filter(|o| o.len() as f64 / total as f64 >= params.discard_threshold)
            .collect();
        if kept.is_empty() {
            warnings.push(format!(
                "rule for {}[{}] lost all outcomes to the discard threshold",
                part.option_id, part.partition_index
            ));
            continue;
        }
        let kept_total: usize = kept.iter().map(|o| o.len()).sum();
        let mut outcomes = Vec::new();
        let mut ok = true;
        for cluster in kept {
            let starts: Vec<Vec<f64>> = cluster
                .iter()
                .map(|&i| space.start(ds, i).to_vec())
                .collect();
            let effects: Vec<Vec<f64>> = cluster
                .iter()
                .map(|&i| space.effect(ds, i).to_vec())
                .collect();
            match fit_effect(&starts, &effects, &noise, params.partition.min_samples) {
                Ok(mut symbol) => {
                    symbol.id = vocabulary.symbols.len();
                    let id = symbol.id;
                    vocabulary.symbols.push(symbol);
                    outcomes.push(Outcome {
                        probability: cluster.len() as f64 / kept_total as f64,
                        symbols: vec![id],
                    });
                }
                Err(e) => {
                    warnings.push(format!(
                        "skipping rule for {}[{}]: {e}",
                        part.option_id, part.partition_index
                    ));
                    ok = false;
                    break;
                }
            }
        }
        if !ok {
            continue;
        }
        rules.push(PortableRule {
            option_id: part.option_id.clone(),
            ego_label: part.partition_index,
            precondition,
            outcomes,
        });
        rule_parts.push(part);
    }

    let vocabulary = dedupe(
        vocabulary,
        &mut rules,
        params.similarity_threshold,
        params.mc_samples,
    );

    // Attach symbolic conjunctions now that symbol ids are final.
    let all_obs: Vec<&[f64]> = ds
        .transitions
        .iter()
        .map(|t| match space {
            Space::Ego => t.obs.as_slice(),
            Space::Problem => t.state.as_slice(),
        })
        .collect();
    for (rule, part) in rules.iter_mut().zip(&rule_parts) {
        let positives: Vec<&[f64]> = part.members.iter().map(|&i| space.start(ds, i)).collect();
        rule.precondition.conjunction = symbolic_conjunction(
            &rule.precondition.classifier,
            &vocabulary,
            &positives,
            &all_obs,
        );
    }

    (vocabulary, rules, warnings)
}

fn effective_noise(ds: &Dataset) -> Vec<f64> {
    let d = ds.obs_dim();
    if ds.obs_noise.len() == d {
        return ds.obs_noise.clone();
    }
    // No declaration: assume 1% of the per-dimension range.
    let obs: Vec<&[f64]> = ds.transitions.iter().map(|t| t.obs.as_slice()).collect();
    math::ranges(&obs)
        .iter()
        .map(|r| (0.01 * r).max(1e-9))
        .collect()
}

/// Which symbols, substituted into the positives over their own mask, keep
/// the classifier satisfied. Returns AND of OR-groups over disjoint masks;
/// a mask group is included only when the classifier actually discriminates
/// between symbols on that mask.
fn symbolic_conjunction(
    classifier: &Classifier,
    vocabulary: &Vocabulary,
    positives: &[&[f64]],
    broad_pool: &[&[f64]],
) -> Vec<Vec<usize>> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0xC027);
    let probes = math::stride_indices(positives.len(), 32);
    let score_with = |masked_source: &mut dyn FnMut(&mut rand_chacha::ChaCha8Rng) -> Vec<f64>,
                      mask: &[usize],
                      rng: &mut rand_chacha::ChaCha8Rng|
     -> f64 {
        let mut total = 0.0;
        for &pi in &probes {
            let mut v = positives[pi].to_vec();
            let fill = masked_source(rng);
            for (slot, &dim) in mask.iter().enumerate() {
                v[dim] = fill[slot];
            }
            total += classifier.predict(&v);
        }
        total / probes.len() as f64
    };

    // Group symbols by mask.
    let mut masks: Vec<Vec<usize>> = Vec::new();
    for s in &vocabulary.symbols {
        if !masks.contains(&s.mask) {
            masks.push(s.mask.clone());
        }
    }
    masks.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));

    let mut groups: Vec<(Vec<usize>, Vec<usize>)> = Vec::new(); // (mask, symbol ids)
    for mask in masks {
        let mut compatible = Vec::new();
        let mut discriminates = false;
        for s in vocabulary.symbols.iter().filter(|s| s.mask == mask) {
            let mut source = |rng: &mut rand_chacha::ChaCha8Rng| s.density.sample(rng);
            let score = score_with(&mut source, &mask, &mut rng);
            if score >= 0.5 {
                compatible.push(s.id);
            } else {
                discriminates = true;
            }
        }
        if !compatible.is_empty() && discriminates {
            groups.push((mask, compatible));
        } else if !compatible.is_empty() && !broad_pool.is_empty() {
            // All symbols on this mask pass; check whether arbitrary values
            // also pass, in which case the mask is unconstrained.
            let pool = math::stride_indices(broad_pool.len(), 64);
            let mut k = 0usize;
            let mut source = |_: &mut rand_chacha::ChaCha8Rng| {
                let row = broad_pool[pool[k % pool.len()]];
                k += 7;
                mask.iter().map(|&j| row[j]).collect::<Vec<f64>>()
            };
            let broad = score_with(&mut source, &mask, &mut rng);
            if broad < 0.5 {
                groups.push((mask, compatible));
            }
        }
    }

    // Keep groups with pairwise-disjoint masks (largest masks first).
    let mut used: Vec<usize> = Vec::new();
    let mut conjunction = Vec::new();
    for (mask, ids) in groups {
        if mask.iter().any(|d| used.contains(d)) {
            continue;
        }
        used.extend(mask.iter().copied());
        let mut ids = ids;
        ids.sort_unstable();
        conjunction.push(ids);
    }
    conjunction.sort();
    conjunction
}

/// The full phase-one learner: partition the dataset in egocentric space,
/// build rules, and unify the vocabulary. With `prior`, the new data is
/// pooled with the prior model's samples and everything is refitted, so
/// symbols learned in earlier tasks carry over and sharpen.
pub fn learn_portable(
    ds: &Dataset,
    params: &SymbolParams,
    prior: Option<&PortableModel>,
) -> Result<PortableModel> {
    let mut pool: Vec<EgoSample> = prior.map(|m| m.pool.clone()).unwrap_or_default();
    pool.extend(ds.transitions.iter().map(|t| EgoSample {
        option_id: t.option_id.clone(),
        success: t.success,
        obs: t.obs.clone(),
        next_obs: t.next_obs.clone(),
    }));
    let merged = pool_dataset(&ds.domain_family, &effective_noise(ds), &pool);
    let partitions = partition_dataset(&merged, Space::Ego, &params.partition)?;
    let (vocabulary, rules, warnings) = build_portable_rules(&merged, &partitions, params);
    Ok(PortableModel {
        domain_family: ds.domain_family.clone(),
        obs_dim: merged.obs_dim(),
        obs_noise: merged.obs_noise.clone(),
        vocabulary,
        rules,
        pool,
        warnings,
    })
}

/// Materialize a pool of egocentric samples as a Dataset (the observation
/// stands in for the state; problem-space fields are unused in phase one).
fn pool_dataset(family: &str, noise: &[f64], pool: &[EgoSample]) -> Dataset {
    let mut ds = Dataset::new(family, 0, noise.to_vec());
    for s in pool {
        ds.transitions.push(crate::data::Transition {
            task_id: String::new(),
            option_id: s.option_id.clone(),
            success: s.success,
            duration: 1,
            reward: 0.0,
            state: s.obs.clone(),
            obs: s.obs.clone(),
            next_state: s.next_obs.clone(),
            next_obs: s.next_obs.clone(),
        });
    }
    ds
}
