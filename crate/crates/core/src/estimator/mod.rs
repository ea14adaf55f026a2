//! Multi-order actor-critic estimator.
//!
//! For every order `k = 1..K` the actor produces a pooled embedding
//! `pool(L^k X W)`. A weighted softmax-regression critic is fitted to that
//! order; its weighted error `ε` gives the order a fusion weight
//! `α = max(0, ½ ln((1-ε)/ε))` and re-weights the training graphs towards
//! the ones it got wrong, exactly like discrete AdaBoost. The final head is
//! trained on the fused embedding `Σ_k α_k · pool(L^k X W)`.

mod critic;
pub mod gcn;

pub use critic::{fusion_weight, misclassified, train_critic, update_sample_weights, weighted_error, CriticModel};

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::graph::{normalized_laplacian, AdjacencyMatrix, FeatureMatrix, GraphError, NormalizedLaplacian};
use crate::linalg::{softmax, Matrix};
use crate::synth::{GraphDataset, Label};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimatorError {
    #[error("training set needs both labels and at least 2 instances")]
    SingleClassTrainingSet,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Autodiff(#[from] AutodiffError),
}

type Result<T> = std::result::Result<T, EstimatorError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    Identity,
    Trained,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Mean,
    Sum,
}

impl Pooling {
    /// Row weights of the pooling operator for `n` nodes.
    pub fn node_weight(self, n: usize) -> f64 {
        match self {
            Pooling::Mean => 1.0 / n as f64,
            Pooling::Sum => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum HeadKind {
    Linear,
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActorConfig {
    pub k_orders: usize,
    pub w_mode: WeightMode,
    pub pooling: Pooling,
    pub critic_iters: usize,
    pub critic_lr: f64,
    pub epsilon_min: f64,
    pub head: HeadKind,
    pub head_epochs: usize,
    pub head_lr: f64,
    /// Only used to initialise the hidden layer of an MLP head.
    pub seed: u64,
}

impl Default for ActorConfig {
    fn default() -> Self {
        Self {
            k_orders: 3,
            w_mode: WeightMode::Identity,
            pooling: Pooling::Mean,
            critic_iters: 500,
            critic_lr: 0.1,
            epsilon_min: 1e-4,
            head: HeadKind::Linear,
            head_epochs: 300,
            head_lr: 0.05,
            seed: 0,
        }
    }
}

impl ActorConfig {
    pub fn with_orders(k_orders: usize) -> Self {
        Self { k_orders, ..Self::default() }
    }

    fn validate(&self) -> Result<()> {
        if self.k_orders == 0 {
            return Err(EstimatorError::InvalidConfig("K must be >= 1".into()));
        }
        if !(self.epsilon_min > 0.0 && self.epsilon_min < 0.5) {
            return Err(EstimatorError::InvalidConfig("epsilon_min must lie in (0, 0.5)".into()));
        }
        if !(self.critic_lr > 0.0) || !(self.head_lr > 0.0) {
            return Err(EstimatorError::InvalidConfig("learning rates must be positive".into()));
        }
        if let HeadKind::Mlp { hidden: 0 } = self.head {
            return Err(EstimatorError::InvalidConfig("MLP head needs hidden >= 1".into()));
        }
        Ok(())
    }
}

/// The map `g` from the fused embedding to two class logits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Head {
    /// `(d+1) × 2`, last row is the bias.
    Linear { weights: Matrix },
    /// `relu([h;1]ᵀ hidden)` then `[z;1]ᵀ output`.
    Mlp { hidden: Matrix, output: Matrix },
}

impl Head {
    pub fn logits(&self, h: &[f64]) -> [f64; 2] {
        match self {
            Head::Linear { weights } => affine(weights, h),
            Head::Mlp { hidden, output } => {
                let z: Vec<f64> = affine_n(hidden, h).into_iter().map(|v| v.max(0.0)).collect();
                affine(output, &z)
            }
        }
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Head::Linear { weights } => weights.rows() - 1,
            Head::Mlp { hidden, .. } => hidden.rows() - 1,
        }
    }

    /// Logits of a batch of embeddings (`n × d` → `n × 2`) on a tape.
    pub fn logits_on_tape<'t>(&self, tape: &'t Tape, h: Var<'t>) -> std::result::Result<Var<'t>, AutodiffError> {
        let layer = |m: &Matrix, x: Var<'t>| -> std::result::Result<Var<'t>, AutodiffError> {
            let (w, b) = split_bias(m);
            x.matmul(tape.constant(w))?.add_row(tape.constant(b))
        };
        match self {
            Head::Linear { weights } => layer(weights, h),
            Head::Mlp { hidden, output } => layer(output, layer(hidden, h)?.relu()),
        }
    }
}

/// Splits an `(d+1) × c` affine map into its `d × c` weight and `1 × c` bias.
pub(crate) fn split_bias(m: &Matrix) -> (Matrix, Matrix) {
    let d = m.rows() - 1;
    let w = Matrix::from_vec(d, m.cols(), m.as_slice()[..d * m.cols()].to_vec());
    let b = Matrix::row_vector(m.row(d));
    (w, b)
}

pub(crate) fn affine_n(m: &Matrix, h: &[f64]) -> Vec<f64> {
    let d = m.rows() - 1;
    debug_assert_eq!(h.len(), d);
    (0..m.cols()).map(|c| m[(d, c)] + (0..d).map(|r| h[r] * m[(r, c)]).sum::<f64>()).collect()
}

pub(crate) fn affine(m: &Matrix, h: &[f64]) -> [f64; 2] {
    let v = affine_n(m, h);
    [v[0], v[1]]
}

/// Argmax over two logits; equal logits resolve to `+1`.
pub fn label_from_logits(logits: [f64; 2]) -> Label {
    if logits[1] >= logits[0] {
        Label::Pos
    } else {
        Label::Neg
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// Clamped weighted critic error per order.
    pub epsilons: Vec<f64>,
    /// Sample weights after the last boosting round.
    pub betas: Vec<f64>,
    /// Orders whose raw `½ ln((1-ε)/ε)` was negative and got floored to 0.
    #[serde(default)]
    pub floored_orders: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaGNetModel {
    pub w_mode: WeightMode,
    pub pooling: Pooling,
    /// `feat_dim × embed_dim`.
    pub actor_w: Matrix,
    pub critics: Vec<CriticModel>,
    pub alphas: Vec<f64>,
    pub head: Head,
    pub epsilon_min: f64,
    pub diagnostics: Diagnostics,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Prediction {
    pub label: Label,
    pub probabilities: [f64; 2],
}

impl Prediction {
    fn from_logits(logits: [f64; 2]) -> Self {
        let p = softmax(&logits);
        Self { label: label_from_logits(logits), probabilities: [p[0], p[1]] }
    }
}

/// One boosting round as seen during training.
#[derive(Debug, Clone, PartialEq)]
pub struct BoostRound {
    pub order: usize,
    pub weights_before: Vec<f64>,
    pub misclassified: Vec<bool>,
    pub epsilon: f64,
    pub alpha: f64,
    pub weights_after: Vec<f64>,
}

/// `pool(L^k X W)`, mean pooling being `(1/N) 1ᵀ(·)`.
pub fn actor_embed(
    l: &NormalizedLaplacian,
    x: &FeatureMatrix,
    w: &Matrix,
    k: usize,
    pooling: Pooling,
) -> Result<Vec<f64>> {
    if x.cols() != w.rows() {
        return Err(EstimatorError::DimensionMismatch(format!(
            "features have {} columns, actor weight has {} rows",
            x.cols(),
            w.rows()
        )));
    }
    let p = crate::graph::laplacian_power_apply(l, k, x)?;
    Ok(pool_and_project(&p, w, pooling))
}

fn pool_and_project(p: &Matrix, w: &Matrix, pooling: Pooling) -> Vec<f64> {
    let scale = pooling.node_weight(p.rows());
    let pooled: Vec<f64> = p.column_sums().into_iter().map(|v| v * scale).collect();
    Matrix::row_vector(&pooled).matmul(w).into_vec()
}

/// `Σ_k α_k h_k`.
pub fn fuse_embeddings(per_order: &[Vec<f64>], alphas: &[f64]) -> Result<Vec<f64>> {
    if per_order.len() != alphas.len() {
        return Err(EstimatorError::DimensionMismatch(format!(
            "{} embeddings but {} fusion weights",
            per_order.len(),
            alphas.len()
        )));
    }
    let d = per_order.first().map_or(0, Vec::len);
    let mut out = vec![0.0; d];
    for (h, &a) in per_order.iter().zip(alphas) {
        if h.len() != d {
            return Err(EstimatorError::DimensionMismatch("embeddings differ in length".into()));
        }
        for (o, v) in out.iter_mut().zip(h) {
            *o += a * v;
        }
    }
    Ok(out)
}

/// Per-order embeddings `[pool(L X W), …, pool(L^K X W)]` by repeated sparse
/// products.
pub fn order_embeddings(
    l: &NormalizedLaplacian,
    x: &FeatureMatrix,
    w: &Matrix,
    k_orders: usize,
    pooling: Pooling,
) -> Result<Vec<Vec<f64>>> {
    if x.cols() != w.rows() {
        return Err(EstimatorError::DimensionMismatch(format!(
            "features have {} columns, actor weight has {} rows",
            x.cols(),
            w.rows()
        )));
    }
    let mut p = x.clone();
    let mut out = Vec::with_capacity(k_orders);
    for _ in 0..k_orders {
        p = l.apply(&p)?;
        out.push(pool_and_project(&p, w, pooling));
    }
    Ok(out)
}

impl MaGNetModel {
    pub fn k_orders(&self) -> usize {
        self.alphas.len()
    }

    pub fn feat_dim(&self) -> usize {
        self.actor_w.rows()
    }

    pub fn embed_dim(&self) -> usize {
        self.actor_w.cols()
    }

    pub fn fused_embedding(&self, l: &NormalizedLaplacian, x: &FeatureMatrix) -> Result<Vec<f64>> {
        let per = order_embeddings(l, x, &self.actor_w, self.k_orders(), self.pooling)?;
        fuse_embeddings(&per, &self.alphas)
    }

    pub fn predict_with_laplacian(&self, l: &NormalizedLaplacian, x: &FeatureMatrix) -> Result<Prediction> {
        if x.cols() != self.feat_dim() {
            return Err(EstimatorError::DimensionMismatch(format!(
                "model expects {} features, got {}",
                self.feat_dim(),
                x.cols()
            )));
        }
        let h = self.fused_embedding(l, x)?;
        Ok(Prediction::from_logits(self.head.logits(&h)))
    }
}

/// Class probabilities `softmax(g([H̃;1]))` and the argmax label.
pub fn predict(model: &MaGNetModel, adjacency: &AdjacencyMatrix, x: &FeatureMatrix) -> Result<Prediction> {
    let l = normalized_laplacian(adjacency)?;
    model.predict_with_laplacian(&l, x)
}

/// Fraction of instances whose predicted label matches.
pub fn evaluate_accuracy(model: &MaGNetModel, dataset: &GraphDataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(EstimatorError::EmptyDataset);
    }
    let l = normalized_laplacian(dataset.adjacency())?;
    let mut correct = 0usize;
    for inst in dataset.instances() {
        if model.predict_with_laplacian(&l, &inst.features)?.label == inst.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

pub(crate) fn check_training_set(train: &GraphDataset) -> Result<()> {
    let labels = train.labels();
    let pos = labels.iter().filter(|&&l| l == Label::Pos).count();
    if labels.len() < 2 || pos == 0 || pos == labels.len() {
        return Err(EstimatorError::SingleClassTrainingSet);
    }
    Ok(())
}

/// One-hot targets, optionally scaled row-wise by sample weights.
pub(crate) fn target_matrix(labels: &[Label], weights: Option<&[f64]>) -> Matrix {
    Matrix::from_fn(labels.len(), 2, |i, c| {
        let y = if labels[i].class_index() == c { 1.0 } else { 0.0 };
        weights.map_or(y, |w| y * w[i])
    })
}

/// `-Σ_i Σ_s T_is · log softmax(logits)_is`, where `T` already carries any
/// per-sample weighting.
pub(crate) fn cross_entropy_on_tape<'t>(
    tape: &'t Tape,
    logits: Var<'t>,
    targets: &Matrix,
) -> std::result::Result<Var<'t>, AutodiffError> {
    Ok(logits.log_softmax().mul(tape.constant(targets.clone()))?.sum().neg())
}

pub fn train_magnet(train: &GraphDataset, cfg: &ActorConfig) -> Result<MaGNetModel> {
    train_magnet_traced(train, cfg).map(|(m, _)| m)
}

/// Trains the estimator and returns every boosting round alongside the model.
pub fn train_magnet_traced(train: &GraphDataset, cfg: &ActorConfig) -> Result<(MaGNetModel, Vec<BoostRound>)> {
    cfg.validate()?;
    check_training_set(train)?;
    let l = normalized_laplacian(train.adjacency())?;
    let labels = train.labels();
    let n = train.len();
    let p = train.feat_dim();
    let pool_w = cfg.pooling.node_weight(train.n_nodes());

    // pooled[k][i] = pool(L^{k+1} X_i), computed with P^(k) = L P^(k-1).
    let mut pooled: Vec<Matrix> = vec![Matrix::zeros(n, p); cfg.k_orders];
    for (i, inst) in train.instances().iter().enumerate() {
        let mut pk = inst.features.clone();
        for slot in pooled.iter_mut() {
            pk = l.apply(&pk)?;
            for (dst, s) in slot.row_mut(i).iter_mut().zip(pk.column_sums()) {
                *dst = s * pool_w;
            }
        }
    }

    let mut betas = vec![1.0 / n as f64; n];
    let (actor_w, first_critic) = match cfg.w_mode {
        WeightMode::Identity => (Matrix::identity(p), None),
        WeightMode::Trained => {
            let (w, c) = train_actor_and_critic(&pooled[0], &labels, &betas, cfg)?;
            (w, Some(c))
        }
    };

    let mut critics = Vec::with_capacity(cfg.k_orders);
    let mut alphas = Vec::with_capacity(cfg.k_orders);
    let mut diagnostics = Diagnostics::default();
    let mut rounds = Vec::with_capacity(cfg.k_orders);
    let mut embeddings = Vec::with_capacity(cfg.k_orders);
    let mut first_critic = first_critic;

    for (k, pooled_k) in pooled.iter().enumerate() {
        let emb = pooled_k.matmul(&actor_w);
        let critic = match first_critic.take() {
            Some(c) => c,
            None => train_critic(&emb, &labels, &betas, cfg.critic_iters, cfg.critic_lr),
        };
        let wrong = misclassified(&critic, &emb, &labels);
        let eps = weighted_error(&critic, &emb, &labels, &betas, cfg.epsilon_min);
        let raw = 0.5 * ((1.0 - eps) / eps).ln();
        let alpha = fusion_weight(eps);
        if raw < 0.0 {
            diagnostics.floored_orders.push(k + 1);
        }
        let next = update_sample_weights(&betas, alpha, &wrong);
        rounds.push(BoostRound {
            order: k + 1,
            weights_before: betas.clone(),
            misclassified: wrong,
            epsilon: eps,
            alpha,
            weights_after: next.clone(),
        });
        diagnostics.epsilons.push(eps);
        critics.push(critic);
        alphas.push(alpha);
        embeddings.push(emb);
        betas = next;
    }
    diagnostics.betas = betas;

    let d = actor_w.cols();
    let mut fused = Matrix::zeros(n, d);
    for (emb, &a) in embeddings.iter().zip(&alphas) {
        fused.add_scaled(emb, a);
    }
    let head = train_head(&fused, &labels, cfg)?;

    let model = MaGNetModel {
        w_mode: cfg.w_mode,
        pooling: cfg.pooling,
        actor_w,
        critics,
        alphas,
        head,
        epsilon_min: cfg.epsilon_min,
        diagnostics,
    };
    Ok((model, rounds))
}

/// Joint gradient descent on the actor weight (from identity) and the first
/// critic (from zero), on the first-order pooled features.
fn train_actor_and_critic(
    pooled: &Matrix,
    labels: &[Label],
    betas: &[f64],
    cfg: &ActorConfig,
) -> Result<(Matrix, CriticModel)> {
    let p = pooled.cols();
    let targets = target_matrix(labels, Some(betas));
    let mut w = Matrix::identity(p);
    let mut c = Matrix::zeros(p + 1, 2);
    for _ in 0..cfg.critic_iters {
        let tape = Tape::new();
        let wv = tape.var(w.clone());
        let cv = tape.var(c.clone());
        let (cw, cb) = split_bias_on_tape(&tape, cv, p)?;
        let emb = tape.constant(pooled.clone()).matmul(wv)?;
        let logits = emb.matmul(cw)?.add_row(cb)?;
        let loss = cross_entropy_on_tape(&tape, logits, &targets)?;
        let g = tape.backward(loss)?;
        w.add_scaled(&g.wrt(wv), -cfg.critic_lr);
        c.add_scaled(&g.wrt(cv), -cfg.critic_lr);
    }
    Ok((w, CriticModel { weights: c }))
}

/// Views a `(d+1) × c` parameter on a tape as weight and bias.
pub(crate) fn split_bias_on_tape<'t>(
    tape: &'t Tape,
    m: Var<'t>,
    d: usize,
) -> std::result::Result<(Var<'t>, Var<'t>), AutodiffError> {
    let rows = m.shape().0;
    let top = tape.constant(Matrix::from_fn(d, rows, |i, j| if i == j { 1.0 } else { 0.0 }));
    let bottom = tape.constant(Matrix::from_fn(1, rows, |_, j| if j == d { 1.0 } else { 0.0 }));
    Ok((top.matmul(m)?, bottom.matmul(m)?))
}

fn train_head(fused: &Matrix, labels: &[Label], cfg: &ActorConfig) -> Result<Head> {
    let n = labels.len() as f64;
    let d = fused.cols();
    match cfg.head {
        HeadKind::Linear => {
            let uniform = vec![1.0 / n; labels.len()];
            let critic = train_critic(fused, labels, &uniform, cfg.head_epochs, cfg.head_lr);
            Ok(Head::Linear { weights: critic.weights })
        }
        HeadKind::Mlp { hidden } => {
            let (mu, sd) = critic::column_scaling(fused);
            let z = Matrix::from_fn(fused.rows(), d, |i, j| (fused[(i, j)] - mu[j]) / sd[j]);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let bound = 1.0 / (d as f64).sqrt();
            let mut hid =
                Matrix::from_fn(d + 1, hidden, |i, _| if i == d { 0.0 } else { rng.random_range(-bound..bound) });
            let mut out = Matrix::zeros(hidden + 1, 2);
            let targets = target_matrix(labels, None).scale(1.0 / n);
            for _ in 0..cfg.head_epochs {
                let tape = Tape::new();
                let hv = tape.var(hid.clone());
                let ov = tape.var(out.clone());
                let (hw, hb) = split_bias_on_tape(&tape, hv, d)?;
                let (ow, ob) = split_bias_on_tape(&tape, ov, hidden)?;
                let a = tape.constant(z.clone()).matmul(hw)?.add_row(hb)?.relu();
                let logits = a.matmul(ow)?.add_row(ob)?;
                let loss = cross_entropy_on_tape(&tape, logits, &targets)?;
                let g = tape.backward(loss)?;
                hid.add_scaled(&g.wrt(hv), -cfg.head_lr);
                out.add_scaled(&g.wrt(ov), -cfg.head_lr);
            }
            Ok(Head::Mlp { hidden: critic::unstandardize(&hid, &mu, &sd), output: out })
        }
    }
}
