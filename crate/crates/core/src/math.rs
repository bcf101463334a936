//! Small numeric helpers shared by the learning stack: distances,
//! standardization, a one-component PCA, and the energy statistic used by the
//! subgoal check.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return 0.0;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Per-dimension mean of a set of equal-length vectors.
pub fn centroid(points: &[&[f64]]) -> Vec<f64> {
    let d = points.first().map_or(0, |p| p.len());
    let mut c = vec![0.0; d];
    for p in points {
        for (ci, pi) in c.iter_mut().zip(p.iter()) {
            *ci += pi;
        }
    }
    let n = points.len().max(1) as f64;
    c.iter_mut().for_each(|ci| *ci /= n);
    c
}

/// Lexicographic comparison for canonical orderings of float vectors.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b.iter()) {
        match x.partial_cmp(y) {
            Some(std::cmp::Ordering::Equal) | None => continue,
            Some(ord) => return ord,
        }
    }
    a.len().cmp(&b.len())
}

/// Per-dimension affine map to zero mean and unit variance, with a variance
/// floor so constant dimensions stay finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Standardizer {
    pub fn fit(points: &[&[f64]]) -> Self {
        let d = points.first().map_or(0, |p| p.len());
        let n = points.len().max(1) as f64;
        let mut means = vec![0.0; d];
        for p in points {
            for (m, x) in means.iter_mut().zip(p.iter()) {
                *m += x;
            }
        }
        means.iter_mut().for_each(|m| *m /= n);
        let mut vars = vec![0.0; d];
        for p in points {
            for ((v, m), x) in vars.iter_mut().zip(&means).zip(p.iter()) {
                *v += (x - m) * (x - m);
            }
        }
        let stds = vars
            .iter()
            .map(|v| (v / n).sqrt().max(1e-12))
            .collect();
        Standardizer { means, stds }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.means)
            .zip(&self.stds)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.means.len()
    }
}

/// Per-dimension affine map onto [0, 1] by data range. Constant dimensions
/// map to 0. Distances in this space make an eps of `0.1` mean "a tenth of
/// the per-dimension data range", which is robust to dimensions that carry
/// nothing but sensor noise (z-scoring would blow those up to unit scale).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RangeScaler {
    pub mins: Vec<f64>,
    pub scales: Vec<f64>,
}

impl RangeScaler {
    pub fn fit(points: &[&[f64]]) -> Self {
        let d = points.first().map_or(0, |p| p.len());
        let mut mins = vec![f64::INFINITY; d];
        let mut maxs = vec![f64::NEG_INFINITY; d];
        for p in points {
            for j in 0..d {
                mins[j] = mins[j].min(p[j]);
                maxs[j] = maxs[j].max(p[j]);
            }
        }
        let scales = (0..d)
            .map(|j| {
                let r = maxs[j] - mins[j];
                if r > 1e-12 {
                    r
                } else {
                    1.0
                }
            })
            .collect();
        if d == 0 || points.is_empty() {
            return RangeScaler {
                mins: vec![0.0; d],
                scales: vec![1.0; d],
            };
        }
        RangeScaler { mins, scales }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(&self.mins)
            .zip(&self.scales)
            .map(|((x, m), s)| (x - m) / s)
            .collect()
    }

    pub fn dim(&self) -> usize {
        self.mins.len()
    }
}

/// Per-dimension range (max - min).
pub fn ranges(points: &[&[f64]]) -> Vec<f64> {
    let d = points.first().map_or(0, |p| p.len());
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for p in points {
        for j in 0..d {
            lo[j] = lo[j].min(p[j]);
            hi[j] = hi[j].max(p[j]);
        }
    }
    (0..d).map(|j| (hi[j] - lo[j]).max(0.0)).collect()
}

/// First principal direction via power iteration on the covariance matrix.
pub fn principal_direction(points: &[&[f64]]) -> Vec<f64> {
    let d = points.first().map_or(0, |p| p.len());
    if d == 0 || points.len() < 2 {
        return vec![1.0; d.max(1)];
    }
    let c = centroid(points);
    let mut v: Vec<f64> = (0..d).map(|j| 1.0 + j as f64 * 0.01).collect();
    normalize(&mut v);
    for _ in 0..50 {
        // w = Cov * v computed as sum_i <p_i - c, v> (p_i - c)
        let mut w = vec![0.0; d];
        for p in points {
            let proj: f64 = p.iter().zip(&c).zip(&v).map(|((x, m), vi)| (x - m) * vi).sum();
            for j in 0..d {
                w[j] += proj * (p[j] - c[j]);
            }
        }
        if w.iter().all(|x| x.abs() < 1e-15) {
            return v;
        }
        normalize(&mut w);
        v = w;
    }
    v
}

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 1e-15 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Energy distance between two samples (Szekely & Rizzo).
pub fn energy_distance(xs: &[&[f64]], ys: &[&[f64]]) -> f64 {
    let cross = pair_mean(xs, ys);
    let within_x = self_pair_mean(xs);
    let within_y = self_pair_mean(ys);
    (2.0 * cross - within_x - within_y).max(0.0)
}

fn pair_mean(xs: &[&[f64]], ys: &[&[f64]]) -> f64 {
    if xs.is_empty() || ys.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    for x in xs {
        for y in ys {
            s += dist(x, y);
        }
    }
    s / (xs.len() * ys.len()) as f64
}

fn self_pair_mean(xs: &[&[f64]]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let mut s = 0.0;
    for i in 0..xs.len() {
        for j in (i + 1)..xs.len() {
            s += dist(xs[i], xs[j]);
        }
    }
    s * 2.0 / (xs.len() * (xs.len() - 1)) as f64
}

/// Permutation p-value for the hypothesis that `xs` and `ys` come from the
/// same distribution, using the energy distance as the test statistic.
pub fn energy_permutation_pvalue(
    xs: &[&[f64]],
    ys: &[&[f64]],
    permutations: usize,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let observed = energy_distance(xs, ys);
    let mut pool: Vec<&[f64]> = xs.iter().chain(ys.iter()).copied().collect();
    let nx = xs.len();
    let mut at_least = 1usize;
    for _ in 0..permutations {
        // Fisher-Yates shuffle
        for i in (1..pool.len()).rev() {
            let j = rng.gen_range(0..=i);
            pool.swap(i, j);
        }
        let stat = energy_distance(&pool[..nx], &pool[nx..]);
        if stat >= observed - 1e-15 {
            at_least += 1;
        }
    }
    at_least as f64 / (permutations + 1) as f64
}

/// Splitmix-style seed derivation so independent RNG streams can be derived
/// from one experiment seed without overlap.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base ^ salt.wrapping_mul(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Deterministic stride subsample of at most `max` indices out of `n`.
pub fn stride_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    (0..max).map(|i| i * n / max).collect()
}
