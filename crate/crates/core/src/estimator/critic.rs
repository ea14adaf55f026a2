use super::{affine, label_from_logits};
use crate::linalg::{softmax, Matrix};
use crate::synth::Label;
use serde::{Deserialize, Serialize};

/// Softmax regression from a pooled embedding to two class logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriticModel {
    /// `(d+1) × 2`, last row is the bias.
    pub weights: Matrix,
}

impl CriticModel {
    pub fn zeros(embed_dim: usize) -> Self {
        Self { weights: Matrix::zeros(embed_dim + 1, 2) }
    }

    pub fn logits(&self, h: &[f64]) -> [f64; 2] {
        affine(&self.weights, h)
    }

    pub fn probabilities(&self, h: &[f64]) -> [f64; 2] {
        let p = softmax(&self.logits(h));
        [p[0], p[1]]
    }

    pub fn predict(&self, h: &[f64]) -> Label {
        label_from_logits(self.logits(h))
    }
}

/// Column means and standard deviations of a batch of embeddings. A constant
/// column gets scale 1.
pub(crate) fn column_scaling(embeddings: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = embeddings.rows() as f64;
    let mu = embeddings.column_means();
    let mut var = vec![0.0; embeddings.cols()];
    for i in 0..embeddings.rows() {
        for ((v, &h), m) in var.iter_mut().zip(embeddings.row(i)).zip(&mu) {
            *v += (h - m) * (h - m);
        }
    }
    let sd = var.into_iter().map(|v| (v / n).sqrt()).map(|s| if s > 1e-12 { s } else { 1.0 }).collect();
    (mu, sd)
}

/// Maps an affine layer fitted on standardised inputs back to raw inputs.
pub(crate) fn unstandardize(w: &Matrix, mu: &[f64], sd: &[f64]) -> Matrix {
    let d = mu.len();
    let mut out = w.clone();
    for c in 0..w.cols() {
        let mut shift = 0.0;
        for j in 0..d {
            out[(j, c)] = w[(j, c)] / sd[j];
            shift += mu[j] * out[(j, c)];
        }
        out[(d, c)] = w[(d, c)] - shift;
    }
    out
}

/// Full-batch gradient descent on `Σ_i β_i CE(s_i, softmax(cᵀ[h_i;1]))` from
/// zero weights.
///
/// The descent runs in coordinates where every embedding column has zero
/// mean and unit variance; the returned weights act on the raw embedding.
pub fn train_critic(
    embeddings: &Matrix,
    labels: &[Label],
    sample_weights: &[f64],
    iters: usize,
    lr: f64,
) -> CriticModel {
    let (n, d) = embeddings.shape();
    assert_eq!(labels.len(), n, "one label per embedding");
    assert_eq!(sample_weights.len(), n, "one weight per embedding");
    let (mu, sd) = column_scaling(embeddings);
    let z = Matrix::from_fn(n, d, |i, j| (embeddings[(i, j)] - mu[j]) / sd[j]);
    let mut w = Matrix::zeros(d + 1, 2);
    let mut grad = Matrix::zeros(d + 1, 2);
    for _ in 0..iters {
        grad.as_mut_slice().fill(0.0);
        for i in 0..n {
            let beta = sample_weights[i];
            if beta == 0.0 {
                continue;
            }
            let h = z.row(i);
            let q = softmax(&affine(&w, h));
            let y = labels[i].class_index();
            for c in 0..2 {
                let r = beta * (q[c] - if c == y { 1.0 } else { 0.0 });
                for (j, &hj) in h.iter().enumerate() {
                    grad[(j, c)] += r * hj;
                }
                grad[(d, c)] += r;
            }
        }
        w.add_scaled(&grad, -lr);
    }
    CriticModel { weights: unstandardize(&w, &mu, &sd) }
}

pub fn misclassified(critic: &CriticModel, embeddings: &Matrix, labels: &[Label]) -> Vec<bool> {
    (0..embeddings.rows()).map(|i| critic.predict(embeddings.row(i)) != labels[i]).collect()
}

/// Weighted misclassification rate, clamped to `[ε_min, 1 - ε_min]`.
pub fn weighted_error(
    critic: &CriticModel,
    embeddings: &Matrix,
    labels: &[Label],
    sample_weights: &[f64],
    epsilon_min: f64,
) -> f64 {
    let wrong = misclassified(critic, embeddings, labels);
    let total: f64 = sample_weights.iter().sum();
    let bad: f64 = sample_weights.iter().zip(&wrong).filter(|(_, &w)| w).map(|(b, _)| b).sum();
    (bad / total).clamp(epsilon_min, 1.0 - epsilon_min)
}

/// `max(0, ½ ln((1-ε)/ε))`
pub fn fusion_weight(epsilon: f64) -> f64 {
    (0.5 * ((1.0 - epsilon) / epsilon).ln()).max(0.0)
}

/// Multiplies misclassified weights by `e^α` and renormalises.
pub fn update_sample_weights(weights: &[f64], alpha: f64, misclassified: &[bool]) -> Vec<f64> {
    assert_eq!(weights.len(), misclassified.len());
    let boost = alpha.exp();
    let raw: Vec<f64> = weights.iter().zip(misclassified).map(|(&w, &m)| if m { w * boost } else { w }).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}
