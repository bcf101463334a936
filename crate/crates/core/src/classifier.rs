//! Calibrated probabilistic binary classifier for precondition models.
//!
//! Logistic regression over linear + Gaussian-RBF features, fitted by
//! iteratively reweighted least squares with a ridge penalty. Log-loss
//! training makes the outputs probabilities directly; the linear part keeps
//! scores monotone away from the data, and the RBF part captures the
//! non-convex precondition regions that show up in the maze domain.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{self, Standardizer};

pub const MIN_CLASS_SAMPLES: usize = 10;
const MAX_CENTERS: usize = 48;
const MAX_PER_CLASS: usize = 400;
const RIDGE: f64 = 1e-3;
const IRLS_ITERS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classifier {
    standardizer: Standardizer,
    centers: Vec<Vec<f64>>,
    gamma: f64,
    /// Weights over [bias, linear features, rbf features].
    weights: Vec<f64>,
}

impl Classifier {
    /// Fit on positive and negative example vectors. Requires at least
    /// `MIN_CLASS_SAMPLES` of each.
    pub fn fit(positives: &[Vec<f64>], negatives: &[Vec<f64>]) -> Result<Classifier> {
        if positives.len() < MIN_CLASS_SAMPLES || negatives.len() < MIN_CLASS_SAMPLES {
            return Err(Error::InsufficientData(format!(
                "precondition classifier needs >= {MIN_CLASS_SAMPLES} samples per class, \
                 got {} positive / {} negative",
                positives.len(),
                negatives.len()
            )));
        }
        let pos_idx = math::stride_indices(positives.len(), MAX_PER_CLASS);
        let neg_idx = math::stride_indices(negatives.len(), MAX_PER_CLASS);
        let mut xs: Vec<&[f64]> = Vec::with_capacity(pos_idx.len() + neg_idx.len());
        let mut ys: Vec<f64> = Vec::with_capacity(pos_idx.len() + neg_idx.len());
        for &i in &pos_idx {
            xs.push(&positives[i]);
            ys.push(1.0);
        }
        for &i in &neg_idx {
            xs.push(&negatives[i]);
            ys.push(0.0);
        }
        let standardizer = Standardizer::fit(&xs);
        let z: Vec<Vec<f64>> = xs.iter().map(|x| standardizer.apply(x)).collect();

        let center_idx = math::stride_indices(z.len(), MAX_CENTERS);
        let centers: Vec<Vec<f64>> = center_idx.iter().map(|&i| z[i].clone()).collect();
        let gamma = rbf_gamma(&centers);

        let phi: Vec<Vec<f64>> = z.iter().map(|x| features(x, &centers, gamma)).collect();
        let weights = irls(&phi, &ys);
        Ok(Classifier {
            standardizer,
            centers,
            gamma,
            weights,
        })
    }

    /// Probability that the precondition holds at `x`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        let z = self.standardizer.apply(x);
        let phi = features(&z, &self.centers, self.gamma);
        sigmoid(dot(&self.weights, &phi))
    }

    pub fn dim(&self) -> usize {
        self.standardizer.dim()
    }
}

fn rbf_gamma(centers: &[Vec<f64>]) -> f64 {
    let mut dists: Vec<f64> = Vec::new();
    for i in 0..centers.len() {
        for j in (i + 1)..centers.len() {
            let d = math::sq_dist(&centers[i], &centers[j]);
            if d > 1e-12 {
                dists.push(d);
            }
        }
    }
    if dists.is_empty() {
        return 1.0;
    }
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = dists[dists.len() / 2];
    1.0 / (2.0 * median).max(1e-9)
}

fn features(z: &[f64], centers: &[Vec<f64>], gamma: f64) -> Vec<f64> {
    let mut phi = Vec::with_capacity(1 + z.len() + centers.len());
    phi.push(1.0);
    phi.extend_from_slice(z);
    for c in centers {
        phi.push((-gamma * math::sq_dist(z, c)).exp());
    }
    phi
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Newton/IRLS for ridge-penalized logistic regression. Deterministic: zero
/// start, fixed iteration cap, convergence on the gradient norm.
fn irls(phi: &[Vec<f64>], ys: &[f64]) -> Vec<f64> {
    let f = phi[0].len();
    let mut w = vec![0.0; f];
    for _ in 0..IRLS_ITERS {
        let mut grad = vec![0.0; f];
        let mut hess = vec![0.0; f * f];
        for (row, y) in phi.iter().zip(ys) {
            let p = sigmoid(dot(&w, row));
            let r = y - p;
            let wgt = (p * (1.0 - p)).max(1e-6);
            for a in 0..f {
                grad[a] += r * row[a];
                let wa = wgt * row[a];
                for b in a..f {
                    hess[a * f + b] += wa * row[b];
                }
            }
        }
        for a in 0..f {
            grad[a] -= RIDGE * w[a];
            hess[a * f + a] += RIDGE;
            for b in 0..a {
                hess[a * f + b] = hess[b * f + a];
            }
        }
        let max_grad = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if max_grad < 1e-8 {
            break;
        }
        let Some(step) = cholesky_solve(&hess, &grad, f) else {
            break;
        };
        for a in 0..f {
            w[a] += step[a];
        }
    }
    w
}

/// Solve H x = g for symmetric positive-definite H (row-major f x f).
fn cholesky_solve(h: &[f64], g: &[f64], f: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; f * f];
    for i in 0..f {
        for j in 0..=i {
            let mut s = h[i * f + j];
            for k in 0..j {
                s -= l[i * f + k] * l[j * f + k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i * f + i] = s.sqrt();
            } else {
                l[i * f + j] = s / l[j * f + j];
            }
        }
    }
    // Forward then back substitution.
    let mut y = vec![0.0; f];
    for i in 0..f {
        let mut s = g[i];
        for k in 0..i {
            s -= l[i * f + k] * y[k];
        }
        y[i] = s / l[i * f + i];
    }
    let mut x = vec![0.0; f];
    for i in (0..f).rev() {
        let mut s = y[i];
        for k in (i + 1)..f {
            s -= l[k * f + i] * x[k];
        }
        x[i] = s / l[i * f + i];
    }
    Some(x)
}
