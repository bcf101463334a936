//! Split each option's successful transitions into approximately-subgoal
//! partitions by density-clustering effect states, then merge partitions
//! whose start states overlap (which is what gives merged options their
//! probabilistic outcomes).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Space {
    Ego,
    Problem,
}

impl Space {
    pub fn start<'a>(&self, ds: &'a Dataset, idx: usize) -> &'a [f64] {
        let t = &ds.transitions[idx];
        match self {
            Space::Ego => &t.obs,
            Space::Problem => &t.state,
        }
    }

    pub fn effect<'a>(&self, ds: &'a Dataset, idx: usize) -> &'a [f64] {
        let t = &ds.transitions[idx];
        match self {
            Space::Ego => &t.next_obs,
            Space::Problem => &t.next_state,
        }
    }
}

/// One start-state class of one option. `outcomes` retains the effect
/// clusters that went into the partition, which merging preserves so that a
/// merged partition keeps its distinct probabilistic outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub option_id: String,
    pub partition_index: usize,
    pub space: Space,
    /// Indices into the dataset, sorted ascending.
    pub members: Vec<usize>,
    /// Disjoint effect clusters, each a sorted index list into the dataset.
    pub outcomes: Vec<Vec<usize>>,
}

impl Partition {
    fn from_outcomes(option_id: &str, space: Space, outcomes: Vec<Vec<usize>>) -> Self {
        let mut members: Vec<usize> = outcomes.iter().flatten().copied().collect();
        members.sort_unstable();
        Partition {
            option_id: option_id.to_string(),
            partition_index: 0,
            space,
            members,
            outcomes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoisePolicy {
    /// Attach each DBSCAN noise point to the partition of its nearest
    /// clustered effect vector (keeps effect densities unbiased).
    #[default]
    Attach,
    /// Drop noise points from the partitioning.
    Discard,
}

#[derive(Debug, Clone)]
pub struct PartitionParams {
    /// DBSCAN radius in standardized effect space; `None` derives it as
    /// 0.1 x the norm of the per-dimension standardized data range.
    pub eps: Option<f64>,
    pub min_samples: usize,
    pub overlap_threshold: f64,
    pub noise_policy: NoisePolicy,
}

impl Default for PartitionParams {
    fn default() -> Self {
        PartitionParams {
            eps: None,
            min_samples: 5,
            overlap_threshold: 0.1,
            noise_policy: NoisePolicy::Attach,
        }
    }
}

/// The default eps rule: 0.1 x the per-dimension data range, averaged over
/// dimensions of the standardized vectors.
pub fn default_eps(z: &[Vec<f64>]) -> f64 {
    let refs: Vec<&[f64]> = z.iter().map(|v| v.as_slice()).collect();
    let ranges = math::ranges(&refs);
    if ranges.is_empty() {
        return 1e-9;
    }
    let mean = ranges.iter().sum::<f64>() / ranges.len() as f64;
    (0.1 * mean).max(1e-9)
}

/// Density-based clustering of one option's effect vectors. Every successful
/// transition ends up in exactly one partition.
pub fn cluster_effects(
    ds: &Dataset,
    option_id: &str,
    space: Space,
    params: &PartitionParams,
) -> Result<Vec<Partition>> {
    let idxs = ds.successes_of(option_id);
    if idxs.is_empty() {
        return Err(Error::NoSuccessfulTransitions(option_id.to_string()));
    }
    let effects: Vec<&[f64]> = idxs.iter().map(|&i| space.effect(ds, i)).collect();
    let st = math::RangeScaler::fit(&effects);
    let z: Vec<Vec<f64>> = effects.iter().map(|e| st.apply(e)).collect();
    let eps = params.eps.unwrap_or_else(|| default_eps(&z));

    let labels = dbscan(&z, eps, params.min_samples);

    // Group by cluster; handle noise per policy.
    let n_clusters = labels.iter().filter_map(|l| *l).max().map_or(0, |m| m + 1);
    let mut clusters: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    let mut noise: Vec<usize> = Vec::new();
    for (row, label) in labels.iter().enumerate() {
        match label {
            Some(c) => clusters[*c].push(row),
            None => noise.push(row),
        }
    }
    if n_clusters == 0 {
        // Everything was noise (tiny datasets): fall back to one cluster.
        clusters.push(noise.drain(..).collect());
    }
    if params.noise_policy == NoisePolicy::Attach {
        for row in noise.drain(..) {
            let mut best = (f64::INFINITY, 0usize);
            for (c, members) in clusters.iter().enumerate() {
                for &m in members {
                    let d = math::sq_dist(&z[row], &z[m]);
                    if d < best.0 {
                        best = (d, c);
                    }
                }
            }
            clusters[best.1].push(row);
        }
    }

    let mut parts: Vec<Partition> = clusters
        .into_iter()
        .filter(|c| !c.is_empty())
        .map(|rows| {
            let mut ds_idx: Vec<usize> = rows.iter().map(|&r| idxs[r]).collect();
            ds_idx.sort_unstable();
            Partition::from_outcomes(option_id, space, vec![ds_idx])
        })
        .collect();
    canonicalize(&mut parts, ds, space);
    Ok(parts)
}

/// Classic DBSCAN; `None` labels are noise. Neighborhoods include the point
/// itself.
fn dbscan(z: &[Vec<f64>], eps: f64, min_samples: usize) -> Vec<Option<usize>> {
    let n = z.len();
    let eps2 = eps * eps;
    let neighbors = |i: usize| -> Vec<usize> {
        (0..n)
            .filter(|&j| math::sq_dist(&z[i], &z[j]) <= eps2)
            .collect()
    };
    let mut labels: Vec<Option<usize>> = vec![None; n];
    let mut visited = vec![false; n];
    let mut cluster = 0usize;
    for i in 0..n {
        if visited[i] {
            continue;
        }
        visited[i] = true;
        let seeds = neighbors(i);
        if seeds.len() < min_samples {
            continue; // stays noise unless later absorbed as a border point
        }
        labels[i] = Some(cluster);
        let mut frontier = seeds;
        let mut k = 0;
        while k < frontier.len() {
            let j = frontier[k];
            k += 1;
            if labels[j].is_none() {
                labels[j] = Some(cluster); // border or core point
            }
            if !visited[j] {
                visited[j] = true;
                let more = neighbors(j);
                if more.len() >= min_samples {
                    for m in more {
                        if !frontier.contains(&m) {
                            frontier.push(m);
                        }
                    }
                }
            }
        }
        cluster += 1;
    }
    labels
}

/// Union partitions of one option whose start states overlap significantly.
/// The pairwise overlap score is the symmetrized fraction of one partition's
/// start vectors lying within eps of the other's; merging is transitive.
/// Idempotent: merged partitions stay merged.
pub fn merge_overlapping(
    parts: Vec<Partition>,
    ds: &Dataset,
    params: &PartitionParams,
) -> Vec<Partition> {
    if parts.len() <= 1 {
        let mut parts = parts;
        if let Some(space) = parts.first().map(|p| p.space) {
            canonicalize(&mut parts, ds, space);
        }
        return parts;
    }
    let space = parts[0].space;
    let all_starts: Vec<&[f64]> = parts
        .iter()
        .flat_map(|p| p.members.iter().map(|&i| space.start(ds, i)))
        .collect();
    let st = math::RangeScaler::fit(&all_starts);
    let z_of = |p: &Partition| -> Vec<Vec<f64>> {
        p.members
            .iter()
            .map(|&i| st.apply(space.start(ds, i)))
            .collect()
    };
    let zs: Vec<Vec<Vec<f64>>> = parts.iter().map(z_of).collect();
    let all_z: Vec<Vec<f64>> = zs.iter().flatten().cloned().collect();
    let eps = params.eps.unwrap_or_else(|| default_eps(&all_z));

    // Union-find over partitions.
    let mut parent: Vec<usize> = (0..parts.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let root = find(parent, parent[i]);
            parent[i] = root;
        }
        parent[i]
    }
    for a in 0..parts.len() {
        for b in (a + 1)..parts.len() {
            let score = overlap_score(&zs[a], &zs[b], eps);
            if score > params.overlap_threshold {
                let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
                if ra != rb {
                    parent[rb] = ra;
                }
            }
        }
    }

    let mut groups: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for i in 0..parts.len() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(i);
    }
    let mut merged: Vec<Partition> = groups
        .values()
        .map(|group| {
            let outcomes: Vec<Vec<usize>> = group
                .iter()
                .flat_map(|&i| parts[i].outcomes.clone())
                .collect();
            Partition::from_outcomes(&parts[group[0]].option_id, space, outcomes)
        })
        .collect();
    canonicalize(&mut merged, ds, space);
    merged
}

fn overlap_score(a: &[Vec<f64>], b: &[Vec<f64>], eps: f64) -> f64 {
    let eps2 = eps * eps;
    let frac = |xs: &[Vec<f64>], ys: &[Vec<f64>]| -> f64 {
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

/// Canonical ordering: outcomes within a partition sorted by effect-cluster
/// centroid, partitions sorted by their first outcome's centroid, indices
/// renumbered from 0. Makes partitioning invariant to transition order.
fn canonicalize(parts: &mut [Partition], ds: &Dataset, space: Space) {
    let centroid_of = |idxs: &[usize]| -> Vec<f64> {
        let pts: Vec<&[f64]> = idxs.iter().map(|&i| space.effect(ds, i)).collect();
        math::centroid(&pts)
    };
    for p in parts.iter_mut() {
        p.outcomes
            .sort_by(|a, b| math::lex_cmp(&centroid_of(a), &centroid_of(b)));
    }
    parts.sort_by(|a, b| {
        math::lex_cmp(&centroid_of(&a.outcomes[0]), &centroid_of(&b.outcomes[0]))
    });
    for (i, p) in parts.iter_mut().enumerate() {
        p.partition_index = i;
    }
}

/// Partition every option of the dataset and merge overlaps: the full
/// phase-one partitioning step.
pub fn partition_dataset(
    ds: &Dataset,
    space: Space,
    params: &PartitionParams,
) -> Result<Vec<Partition>> {
    let mut all = Vec::new();
    for option_id in ds.option_ids() {
        if ds.successes_of(&option_id).is_empty() {
            continue; // options never seen to succeed contribute nothing
        }
        let parts = cluster_effects(ds, &option_id, space, params)?;
        let merged = merge_overlapping(parts, ds, params);
        all.extend(merged);
    }
    Ok(all)
}

/// Start/effect dependence score for the subgoal property: split the members
/// in half along the first principal start direction and compare the two
/// halves' effect distributions with an energy-distance permutation test.
/// High p-values are consistent with effects independent of starts.
pub fn check_subgoal(part: &Partition, ds: &Dataset, min_samples: usize) -> Result<f64> {
    if part.members.len() < 2 * min_samples {
        return Err(Error::InsufficientData(format!(
            "subgoal check needs at least {} members, partition has {}",
            2 * min_samples,
            part.members.len()
        )));
    }
    let space = part.space;
    let starts: Vec<&[f64]> = part.members.iter().map(|&i| space.start(ds, i)).collect();
    let dir = math::principal_direction(&starts);
    let mut scored: Vec<(f64, usize)> = part
        .members
        .iter()
        .map(|&i| {
            let s = space.start(ds, i);
            let proj: f64 = s.iter().zip(&dir).map(|(x, v)| x * v).sum();
            (proj, i)
        })
        .collect();
    scored.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap_or(std::cmp::Ordering::Equal));
    let half = scored.len() / 2;
    // Cap the test size; the energy statistic is quadratic in sample count.
    let cap = 100usize;
    let lo: Vec<&[f64]> = scored[..half]
        .iter()
        .map(|(_, i)| space.effect(ds, *i))
        .take(cap)
        .collect();
    let hi: Vec<&[f64]> = scored[half..]
        .iter()
        .map(|(_, i)| space.effect(ds, *i))
        .take(cap)
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(0xE9E);
    Ok(math::energy_permutation_pvalue(&lo, &hi, 199, &mut rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, Transition};

    fn synth_dataset(rows: Vec<(&str, bool, Vec<f64>, Vec<f64>)>) -> Dataset {
        let mut ds = Dataset::new("synth", 0, vec![0.01; 2]);
        for (option, success, obs, next_obs) in rows {
            ds.transitions.push(Transition {
                task_id: "t".into(),
                option_id: option.into(),
                success,
                duration: 1,
                reward: 0.0,
                state: obs.clone(),
                obs,
                next_state: next_obs.clone(),
                next_obs,
            });
        }
        ds
    }

    #[test]
    fn single_point_mass_gives_one_partition() {
        let rows = (0..100)
            .map(|_| ("o", true, vec![0.0, 0.0], vec![1.0, 1.0]))
            .collect();
        let ds = synth_dataset(rows);
        let parts =
            cluster_effects(&ds, "o", Space::Ego, &PartitionParams::default()).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].members.len(), 100);
    }

    #[test]
    fn no_successes_is_an_error() {
        let ds = synth_dataset(vec![("o", false, vec![0.0, 0.0], vec![0.0, 0.0])]);
        let err = cluster_effects(&ds, "o", Space::Ego, &PartitionParams::default());
        assert!(matches!(err, Err(Error::NoSuccessfulTransitions(_))));
    }

    #[test]
    fn two_separated_effect_blobs_give_two_partitions() {
        let mut rows = Vec::new();
        for i in 0..60 {
            let wiggle = (i % 7) as f64 * 0.001;
            rows.push(("o", true, vec![0.0, 0.0], vec![wiggle, 0.0]));
            rows.push(("o", true, vec![5.0, 5.0], vec![10.0 + wiggle, 10.0]));
        }
        let ds = synth_dataset(rows);
        let parts =
            cluster_effects(&ds, "o", Space::Ego, &PartitionParams::default()).unwrap();
        assert_eq!(parts.len(), 2);
        // Disjoint and exhaustive over the option's successes.
        let mut all: Vec<usize> = parts.iter().flat_map(|p| p.members.clone()).collect();
        all.sort_unstable();
        let mut expected = ds.successes_of("o");
        expected.sort_unstable();
        assert_eq!(all, expected);
    }

    #[test]
    fn identical_start_sets_merge_and_keep_outcomes() {
        // Same starts, two far-apart effect clusters: an aliased option.
        let mut rows = Vec::new();
        for i in 0..40 {
            let wiggle = (i % 5) as f64 * 0.001;
            let effect = if i % 2 == 0 {
                vec![10.0 + wiggle, 0.0]
            } else {
                vec![-10.0 + wiggle, 0.0]
            };
            rows.push(("o", true, vec![wiggle, wiggle], effect));
        }
        let ds = synth_dataset(rows);
        let params = PartitionParams::default();
        let parts = cluster_effects(&ds, "o", Space::Ego, &params).unwrap();
        assert_eq!(parts.len(), 2);
        let merged = merge_overlapping(parts, &ds, &params);
        assert_eq!(merged.len(), 1);
        assert_eq!(merged[0].outcomes.len(), 2);
        assert_eq!(merged[0].members.len(), 40);
    }

    #[test]
    fn merge_is_idempotent() {
        let mut rows = Vec::new();
        for i in 0..40 {
            let wiggle = (i % 5) as f64 * 0.001;
            let effect = if i % 2 == 0 {
                vec![10.0 + wiggle, 0.0]
            } else {
                vec![-10.0 + wiggle, 0.0]
            };
            rows.push(("o", true, vec![wiggle, wiggle], effect));
        }
        let ds = synth_dataset(rows);
        let params = PartitionParams::default();
        let parts = cluster_effects(&ds, "o", Space::Ego, &params).unwrap();
        let once = merge_overlapping(parts, &ds, &params);
        let twice = merge_overlapping(once.clone(), &ds, &params);
        assert_eq!(once, twice);
    }

    #[test]
    fn disjoint_start_sets_do_not_merge() {
        let mut rows = Vec::new();
        for i in 0..40 {
            let wiggle = (i % 5) as f64 * 0.001;
            if i % 2 == 0 {
                rows.push(("o", true, vec![wiggle, 0.0], vec![10.0 + wiggle, 0.0]));
            } else {
                rows.push(("o", true, vec![100.0 + wiggle, 0.0], vec![-10.0 + wiggle, 0.0]));
            }
        }
        let ds = synth_dataset(rows);
        let params = PartitionParams::default();
        let parts = cluster_effects(&ds, "o", Space::Ego, &params).unwrap();
        let merged = merge_overlapping(parts, &ds, &params);
        assert_eq!(merged.len(), 2);
    }

    #[test]
    fn partition_order_invariant_to_shuffling() {
        let mut rows = Vec::new();
        for i in 0..30 {
            let wiggle = (i % 5) as f64 * 0.001;
            rows.push(("o", true, vec![0.0, 0.0], vec![wiggle, 0.0]));
            rows.push(("o", true, vec![5.0, 5.0], vec![10.0 + wiggle, 10.0]));
        }
        let ds = synth_dataset(rows.clone());
        rows.reverse();
        let ds_rev = synth_dataset(rows);
        let params = PartitionParams::default();
        let a = partition_dataset(&ds, Space::Ego, &params).unwrap();
        let b = partition_dataset(&ds_rev, Space::Ego, &params).unwrap();
        // Member indices differ (rows moved), but the canonical structure
        // must match: same sizes in the same partition order.
        let shape = |ps: &[Partition]| -> Vec<(usize, usize)> {
            ps.iter().map(|p| (p.members.len(), p.outcomes.len())).collect()
        };
        assert_eq!(shape(&a), shape(&b));
    }

    #[test]
    fn constant_effects_pass_subgoal_check() {
        let rows = (0..60)
            .map(|i| {
                let spread = i as f64 * 0.1;
                ("o", true, vec![spread, -spread], vec![1.0, 1.0])
            })
            .collect();
        let ds = synth_dataset(rows);
        let parts =
            cluster_effects(&ds, "o", Space::Ego, &PartitionParams::default()).unwrap();
        let p = check_subgoal(&parts[0], &ds, 5).unwrap();
        assert!(p > 0.5, "p = {p}");
    }

    #[test]
    fn identity_option_fails_subgoal_check() {
        // Effects equal starts over a wide spread: maximal dependence.
        let rows = (0..60)
            .map(|i| {
                let x = i as f64 * 0.5;
                ("o", true, vec![x, 0.0], vec![x, 0.0])
            })
            .collect();
        let ds = synth_dataset(rows);
        let part = Partition::from_outcomes("o", Space::Ego, vec![ds.successes_of("o")]);
        let p = check_subgoal(&part, &ds, 5).unwrap();
        assert!(p < 0.05, "p = {p}");
    }

    #[test]
    fn subgoal_check_requires_enough_members() {
        let rows = (0..6)
            .map(|_| ("o", true, vec![0.0, 0.0], vec![1.0, 1.0]))
            .collect();
        let ds = synth_dataset(rows);
        let part = Partition::from_outcomes("o", Space::Ego, vec![ds.successes_of("o")]);
        assert!(check_subgoal(&part, &ds, 5).is_err());
    }
}
