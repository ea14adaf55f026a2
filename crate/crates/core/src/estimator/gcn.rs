//! Two-layer graph convolutional baseline with mean pooling.
//!
//! `H = L̃ ReLU(L̃ X W0) W1` with the self-loop augmented operator
//! `L̃ = D̃^{-1/2}(A+I)D̃^{-1/2}`, followed by mean pooling and a softmax head.
//!
//! Because the adjacency is shared by every instance, the second propagation
//! and the pooling collapse to a single row vector `c = (1/N) 1ᵀ L̃`, so the
//! whole batch is evaluated with a handful of dense products.

use super::{check_training_set, cross_entropy_on_tape, label_from_logits, EstimatorError, Prediction, Result};
use crate::autodiff::{AutodiffError, Tape, Var};
use crate::graph::{augmented_laplacian_dense, AdjacencyMatrix, FeatureMatrix};
use crate::linalg::{softmax, Matrix};
use crate::synth::{GraphDataset, Label};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GcnInit {
    Zero,
    SmallUniform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GcnConfig {
    pub hidden_dim: usize,
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub init: GcnInit,
}

impl Default for GcnConfig {
    fn default() -> Self {
        Self { hidden_dim: 16, epochs: 300, lr: 0.1, seed: 0, init: GcnInit::SmallUniform }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnBaseline {
    /// `p × h`
    pub w0: Matrix,
    /// `h × h`
    pub w1: Matrix,
    /// `(h+1) × 2`, last row is the bias.
    pub head: Matrix,
}

/// Inputs that stay fixed during training.
pub struct GcnBatch {
    /// `L̃ X_i` stacked vertically, `(n·N) × p`.
    pub propagated: Matrix,
    /// Pooling-through-`L̃` operator, `(N·h) × h` with `C[v·h + j, j] = c_v`.
    pub pool: Matrix,
    pub n_instances: usize,
    pub n_nodes: usize,
}

impl GcnBatch {
    pub fn new(adjacency: &AdjacencyMatrix, features: &[&FeatureMatrix], hidden: usize) -> Self {
        let lt = augmented_laplacian_dense(adjacency);
        let n_nodes = adjacency.n_nodes();
        let p = features.first().map_or(0, |x| x.cols());
        let mut data = Vec::with_capacity(features.len() * n_nodes * p);
        for x in features {
            data.extend_from_slice(lt.matmul(x).as_slice());
        }
        let propagated = Matrix::from_vec(features.len() * n_nodes, p, data);
        let c: Vec<f64> = lt.column_sums().into_iter().map(|v| v / n_nodes as f64).collect();
        let pool = Matrix::from_fn(n_nodes * hidden, hidden, |r, j| if r % hidden == j { c[r / hidden] } else { 0.0 });
        Self { propagated, pool, n_instances: features.len(), n_nodes }
    }
}

/// Batch logits `n × 2` on a tape. `params` are `[w0, w1, head_w (h×2), head_b (1×2)]`.
pub fn gcn_logits<'t>(
    tape: &'t Tape,
    batch: &GcnBatch,
    params: &[Var<'t>],
) -> std::result::Result<Var<'t>, AutodiffError> {
    let [w0, w1, hw, hb] = params else {
        panic!("gcn_logits expects four parameter tensors");
    };
    let h = w0.shape().1;
    let hidden = tape.constant(batch.propagated.clone()).matmul(*w0)?.relu();
    let per_instance = hidden.reshape(batch.n_instances, batch.n_nodes * h)?;
    let pooled = per_instance.matmul(tape.constant(batch.pool.clone()))?.matmul(*w1)?;
    pooled.matmul(*hw)?.add_row(*hb)
}

/// Mean cross-entropy of the baseline over a batch.
pub fn gcn_loss<'t>(
    tape: &'t Tape,
    batch: &GcnBatch,
    labels: &[Label],
    params: &[Var<'t>],
) -> std::result::Result<Var<'t>, AutodiffError> {
    let logits = gcn_logits(tape, batch, params)?;
    let targets = super::target_matrix(labels, None).scale(1.0 / labels.len() as f64);
    cross_entropy_on_tape(tape, logits, &targets)
}

pub fn train_gcn_baseline(train: &GraphDataset, cfg: &GcnConfig) -> Result<GcnBaseline> {
    check_training_set(train)?;
    if cfg.hidden_dim == 0 {
        return Err(EstimatorError::InvalidConfig("hidden_dim must be >= 1".into()));
    }
    let p = train.feat_dim();
    let h = cfg.hidden_dim;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut init = |r: usize, c: usize| match cfg.init {
        GcnInit::Zero => Matrix::zeros(r, c),
        GcnInit::SmallUniform => {
            let b = 1.0 / (r as f64).sqrt();
            Matrix::from_fn(r, c, |_, _| rng.random_range(-b..b))
        }
    };
    let mut params = vec![init(p, h), init(h, h), init(h, 2), Matrix::zeros(1, 2)];

    let features: Vec<&FeatureMatrix> = train.instances().iter().map(|i| &i.features).collect();
    let batch = GcnBatch::new(train.adjacency(), &features, h);
    let labels = train.labels();
    for _ in 0..cfg.epochs {
        let tape = Tape::new();
        let vars: Vec<Var<'_>> = params.iter().map(|m| tape.var(m.clone())).collect();
        let loss = gcn_loss(&tape, &batch, &labels, &vars)?;
        let g = tape.backward(loss)?;
        for (m, v) in params.iter_mut().zip(&vars) {
            m.add_scaled(&g.wrt(*v), -cfg.lr);
        }
    }
    let mut it = params.into_iter();
    let (w0, w1, hw, hb) = (it.next().unwrap(), it.next().unwrap(), it.next().unwrap(), it.next().unwrap());
    let mut head = hw.into_vec();
    head.extend(hb.into_vec());
    Ok(GcnBaseline { w0, w1, head: Matrix::from_vec(h + 1, 2, head) })
}

impl GcnBaseline {
    pub fn hidden_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn predict(&self, adjacency: &AdjacencyMatrix, x: &FeatureMatrix) -> Result<Prediction> {
        Ok(self.predict_batch(adjacency, &[x])?.remove(0))
    }

    pub fn predict_batch(&self, adjacency: &AdjacencyMatrix, xs: &[&FeatureMatrix]) -> Result<Vec<Prediction>> {
        for x in xs {
            if x.cols() != self.w0.rows() || x.rows() != adjacency.n_nodes() {
                return Err(EstimatorError::DimensionMismatch(format!(
                    "baseline expects {}×{} features, got {}×{}",
                    adjacency.n_nodes(),
                    self.w0.rows(),
                    x.rows(),
                    x.cols()
                )));
            }
        }
        let h = self.hidden_dim();
        let batch = GcnBatch::new(adjacency, xs, h);
        let hidden = batch.propagated.matmul(&self.w0).map(|v| v.max(0.0));
        let per = Matrix::from_vec(xs.len(), batch.n_nodes * h, hidden.into_vec());
        let pooled = per.matmul(&batch.pool).matmul(&self.w1);
        Ok((0..xs.len())
            .map(|i| {
                let logits = super::affine(&self.head, pooled.row(i));
                let p = softmax(&logits);
                Prediction { label: label_from_logits(logits), probabilities: [p[0], p[1]] }
            })
            .collect())
    }

    pub fn accuracy(&self, dataset: &GraphDataset) -> Result<f64> {
        if dataset.is_empty() {
            return Err(EstimatorError::EmptyDataset);
        }
        let xs: Vec<&FeatureMatrix> = dataset.instances().iter().map(|i| &i.features).collect();
        let preds = self.predict_batch(dataset.adjacency(), &xs)?;
        let correct = preds.iter().zip(dataset.instances()).filter(|(p, i)| p.label == i.label).count();
        Ok(correct as f64 / dataset.len() as f64)
    }
}
