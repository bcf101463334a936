//! Gaussian-product kernel density estimation with per-dimension Silverman
//! bandwidths, plus the Monte-Carlo machinery the symbol layer needs:
//! normalization checks by importance sampling and a normalized L2 distance
//! between densities.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::math;

const LOG_2PI: f64 = 1.8378770664093453;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Kde {
    /// Kernel centers, n x d.
    pub points: Vec<Vec<f64>>,
    /// Per-dimension bandwidth.
    pub bandwidth: Vec<f64>,
}

impl Kde {
    /// Fit with Silverman's rule per dimension:
    /// h_j = sigma_j * (4 / ((d + 2) n))^(1 / (d + 4)), floored so point
    /// masses stay evaluable.
    pub fn fit(points: Vec<Vec<f64>>) -> Kde {
        assert!(!points.is_empty(), "kde needs at least one point");
        let d = points[0].len();
        let n = points.len() as f64;
        let refs: Vec<&[f64]> = points.iter().map(|p| p.as_slice()).collect();
        let st = math::Standardizer::fit(&refs);
        let factor = (4.0 / ((d as f64 + 2.0) * n)).powf(1.0 / (d as f64 + 4.0));
        let bandwidth = st
            .stds
            .iter()
            .map(|s| {
                let sigma = if *s <= 1e-11 { 0.0 } else { *s };
                (sigma * factor).max(1e-6)
            })
            .collect();
        Kde { points, bandwidth }
    }

    pub fn dim(&self) -> usize {
        self.bandwidth.len()
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let log_norm: f64 = -0.5 * d as f64 * LOG_2PI
            - self.bandwidth.iter().map(|h| h.ln()).sum::<f64>();
        let mut acc = f64::NEG_INFINITY;
        for p in &self.points {
            let mut e = 0.0;
            for j in 0..d {
                let z = (x[j] - p[j]) / self.bandwidth[j];
                e -= 0.5 * z * z;
            }
            acc = logaddexp(acc, e);
        }
        acc + log_norm - (self.points.len() as f64).ln()
    }

    pub fn density(&self, x: &[f64]) -> f64 {
        self.log_density(x).exp()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.sample_indexed(rng).0
    }

    /// Sample plus the index of the kernel it came from, so estimators can
    /// exclude the generating kernel.
    pub fn sample_indexed(&self, rng: &mut ChaCha8Rng) -> (Vec<f64>, usize) {
        let i = rng.gen_range(0..self.points.len());
        let x = self.points[i]
            .iter()
            .zip(&self.bandwidth)
            .map(|(c, h)| {
                let n: f64 = rng.sample(StandardNormal);
                c + n * h
            })
            .collect();
        (x, i)
    }

    /// Density with one kernel left out; the unbiased way to estimate
    /// integral f^2 from the KDE's own samples.
    fn density_excluding(&self, x: &[f64], skip: usize) -> f64 {
        if self.points.len() < 2 {
            return self.density(x);
        }
        let d = self.dim();
        let log_norm: f64 = -0.5 * d as f64 * LOG_2PI
            - self.bandwidth.iter().map(|h| h.ln()).sum::<f64>();
        let mut acc = f64::NEG_INFINITY;
        for (i, p) in self.points.iter().enumerate() {
            if i == skip {
                continue;
            }
            let mut e = 0.0;
            for j in 0..d {
                let z = (x[j] - p[j]) / self.bandwidth[j];
                e -= 0.5 * z * z;
            }
            acc = logaddexp(acc, e);
        }
        (acc + log_norm - ((self.points.len() - 1) as f64).ln()).exp()
    }

    pub fn mean(&self) -> Vec<f64> {
        let refs: Vec<&[f64]> = self.points.iter().map(|p| p.as_slice()).collect();
        math::centroid(&refs)
    }

    /// Importance-sampled integral of the density over all space; should be
    /// 1 within Monte-Carlo error. The proposal is a broad diagonal Gaussian
    /// covering the kernel centers.
    pub fn mc_integral(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let proposal = self.proposal();
        let mut acc = 0.0;
        for _ in 0..samples {
            let x = proposal.sample(&mut rng);
            acc += (self.log_density(&x) - proposal.log_density(&x)).exp();
        }
        acc / samples as f64
    }

    fn proposal(&self) -> DiagGaussian {
        let refs: Vec<&[f64]> = self.points.iter().map(|p| p.as_slice()).collect();
        let st = math::Standardizer::fit(&refs);
        let mean = st.means.clone();
        let sd = st
            .stds
            .iter()
            .zip(&self.bandwidth)
            .map(|(s, h)| 2.0 * s.max(1e-11) + 3.0 * h)
            .collect();
        DiagGaussian { mean, sd }
    }
}

fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

struct DiagGaussian {
    mean: Vec<f64>,
    sd: Vec<f64>,
}

impl DiagGaussian {
    fn sample(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        self.mean
            .iter()
            .zip(&self.sd)
            .map(|(m, s)| {
                let n: f64 = rng.sample(StandardNormal);
                m + n * s
            })
            .collect()
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let d = self.mean.len() as f64;
        let mut e = -0.5 * d * LOG_2PI;
        for j in 0..self.mean.len() {
            let z = (x[j] - self.mean[j]) / self.sd[j];
            e -= 0.5 * z * z + self.sd[j].ln();
        }
        e
    }
}

/// Normalized L2 distance between two densities over the same space:
/// int (f-g)^2 / (int f^2 + int g^2), estimated by sampling from each
/// density. The squared-norm terms use leave-one-out evaluation, which
/// removes the kernel self-energy bias that would otherwise make two fits of
/// the same distribution look different. 0 for identical densities, 1 for
/// disjoint supports.
pub fn l2_normalized_distance(f: &Kde, g: &Kde, samples: usize, seed: u64) -> f64 {
    assert_eq!(f.dim(), g.dim(), "density dimensions differ");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ff = 0.0;
    let mut fg = 0.0;
    let mut gg = 0.0;
    let mut gf = 0.0;
    let each = samples.max(2) / 2;
    for _ in 0..each {
        let (x, i) = f.sample_indexed(&mut rng);
        ff += f.density_excluding(&x, i);
        fg += g.density(&x);
        let (y, j) = g.sample_indexed(&mut rng);
        gg += g.density_excluding(&y, j);
        gf += f.density(&y);
    }
    let ff = ff / each as f64; // E_f[f] = int f^2
    let gg = gg / each as f64;
    let cross = 0.5 * (fg + gf) / each as f64; // int f g, averaged both ways
    let denom = ff + gg;
    if denom <= 0.0 {
        return 0.0;
    }
    ((ff + gg - 2.0 * cross) / denom).clamp(0.0, 1.0)
}
