//! Mask-based explanations of a trained estimator.
//!
//! Every edge gets a logit `ψ_e` and every feature a logit `B̃_t`. During
//! optimisation an edge is replaced by a concrete (relaxed Bernoulli) sample
//! `ẽ = σ((log u - log(1-u) + ψ)/ω)`, the graph operator is rebuilt from the
//! masked weights, and the estimator's prediction on `X ⊙ σ(B̃)` is compared
//! with a fixed target by cross-entropy. Sparsity penalties on `σ(ψ)` and
//! `σ(B̃)` keep the explanation small.
//!
//! The estimator is linear in the pooled features, so the forward pass over a
//! whole batch reduces to one row vector `c = Σ_k α_k v 1ᵀ L_w^k` (with `v` the
//! pooling weight) applied to the horizontally stacked feature matrices.

use crate::autodiff::{AutodiffError, Tape, Var};
use crate::estimator::{cross_entropy_on_tape, EstimatorError, MaGNetModel};
use crate::graph::{normalized_laplacian, AdjacencyMatrix, FeatureMatrix, DEFAULT_DEGREE_FLOOR};
use crate::linalg::{sigmoid, softmax, Matrix};
use crate::synth::GraphDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::rc::Rc;

const U_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Target is the model's prediction on the unmasked graph and features.
    FixedFull,
    /// Target is the prediction on `X ⊙ σ(B̃)` with the full graph,
    /// recomputed each step and held constant for the gradient.
    MaskedFeatures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationConfig {
    pub lambda_edge: f64,
    pub lambda_feature: f64,
    pub omega_start: f64,
    pub omega_end: f64,
    pub iters: usize,
    pub mc_samples: usize,
    pub lr: f64,
    pub seed: u64,
    pub target_mode: TargetMode,
    pub degree_floor: f64,
}

impl Default for ExplanationConfig {
    fn default() -> Self {
        Self {
            lambda_edge: 0.005,
            lambda_feature: 0.1,
            omega_start: 1.0,
            omega_end: 0.1,
            iters: 300,
            mc_samples: 4,
            lr: 0.05,
            seed: 0,
            target_mode: TargetMode::FixedFull,
            degree_floor: DEFAULT_DEGREE_FLOOR,
        }
    }
}

impl ExplanationConfig {
    pub fn validate(&self) -> Result<(), EstimatorError> {
        let bad = |m: &str| Err(EstimatorError::InvalidConfig(m.into()));
        if !(self.omega_start > 0.0 && self.omega_end > 0.0) {
            return bad("temperatures must be positive");
        }
        if self.mc_samples == 0 {
            return bad("mc_samples must be >= 1");
        }
        if !(self.lr > 0.0) {
            return bad("lr must be positive");
        }
        if !(self.lambda_edge >= 0.0 && self.lambda_feature >= 0.0) {
            return bad("sparsity coefficients must be nonnegative");
        }
        if !(self.degree_floor >= 0.0) {
            return bad("degree floor must be nonnegative");
        }
        Ok(())
    }

    /// Geometric interpolation from `omega_start` at step 0 to `omega_end` at
    /// the last step.
    pub fn omega_at(&self, t: usize) -> f64 {
        if self.iters <= 1 {
            return self.omega_start;
        }
        let frac = t as f64 / (self.iters - 1) as f64;
        self.omega_start * (self.omega_end / self.omega_start).powf(frac)
    }
}

/// Mask logits. `psi[e]` belongs to `adjacency.edges()[e]`, so symmetry is
/// structural.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationParams {
    pub psi: Vec<f64>,
    pub b_tilde: Vec<f64>,
}

impl ExplanationParams {
    pub fn zeros(n_edges: usize, feat_dim: usize) -> Self {
        Self { psi: vec![0.0; n_edges], b_tilde: vec![0.0; feat_dim] }
    }

    pub fn edge_probabilities(&self) -> Vec<f64> {
        self.psi.iter().map(|&p| sigmoid(p)).collect()
    }

    pub fn feature_probabilities(&self) -> Vec<f64> {
        self.b_tilde.iter().map(|&b| sigmoid(b)).collect()
    }

    /// Symmetric `N × N` matrix of `σ(ψ)` on the edge pattern.
    pub fn edge_mask(&self, adjacency: &AdjacencyMatrix) -> Matrix {
        let mut m = Matrix::zeros(adjacency.n_nodes(), adjacency.n_nodes());
        for (&(i, j), &p) in adjacency.edges().iter().zip(&self.psi) {
            let s = sigmoid(p);
            m[(i, j)] = s;
            m[(j, i)] = s;
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeScore {
    pub i: usize,
    pub j: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explanation {
    pub edge_scores: Vec<EdgeScore>,
    pub feature_scores: Vec<f64>,
    pub node_scores: Vec<f64>,
    pub kept_edges: Vec<(usize, usize)>,
    pub kept_nodes: Vec<usize>,
    pub kept_features: Vec<usize>,
    pub loss_trajectory: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub edge: f64,
    pub feature: f64,
    pub top_m_nodes: Option<usize>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self { edge: 0.5, feature: 0.5, top_m_nodes: None }
    }
}

/// `σ((log u - log(1-u) + ψ)/ω)` with `u` clamped away from 0 and 1.
pub fn concrete_edge_sample(psi: f64, omega: f64, u: f64) -> f64 {
    sigmoid((logit_noise(u) + psi) / omega)
}

fn logit_noise(u: f64) -> f64 {
    let u = u.clamp(U_CLAMP, 1.0 - U_CLAMP);
    u.ln() - (1.0 - u).ln()
}

/// Differentiable estimator forward pass with masked edges and features,
/// batched over instances that share one adjacency.
pub struct MaskedForward<'m> {
    model: &'m MaGNetModel,
    n_nodes: usize,
    pairs: Rc<[(usize, usize)]>,
    /// `[X_1 | X_2 | … ]`, `N × (n·p)`.
    stacked: Matrix,
    n_instances: usize,
    degree_floor: f64,
}

impl<'m> MaskedForward<'m> {
    pub fn new(
        model: &'m MaGNetModel,
        adjacency: &AdjacencyMatrix,
        xs: &[&FeatureMatrix],
        degree_floor: f64,
    ) -> Result<Self, EstimatorError> {
        let n = adjacency.n_nodes();
        let p = model.feat_dim();
        for x in xs {
            if x.shape() != (n, p) {
                return Err(EstimatorError::DimensionMismatch(format!(
                    "expected {n}×{p} features, got {}×{}",
                    x.rows(),
                    x.cols()
                )));
            }
        }
        let stacked = Matrix::from_fn(n, xs.len() * p, |r, c| xs[c / p][(r, c % p)]);
        Ok(Self { model, n_nodes: n, pairs: adjacency.edges().into(), stacked, n_instances: xs.len(), degree_floor })
    }

    pub fn n_edges(&self) -> usize {
        self.pairs.len()
    }

    pub fn n_instances(&self) -> usize {
        self.n_instances
    }

    /// Logits `n × 2` given edge weights (`m × 1`) and a feature mask (`1 × p`).
    pub fn logits<'t>(
        &self,
        tape: &'t Tape,
        edge_weights: Var<'t>,
        feature_mask: Var<'t>,
    ) -> Result<Var<'t>, AutodiffError> {
        let n = self.n_nodes;
        let w = edge_weights.scatter_symmetric(n, self.pairs.clone())?;
        let inv_sqrt_deg = w.sum_rows().add_scalar(self.degree_floor).powf(-0.5)?;
        let l = w.mul_col(inv_sqrt_deg)?.mul_row(inv_sqrt_deg.transpose())?;

        let pool = self.model.pooling.node_weight(n);
        let mut v = tape.constant(Matrix::filled(1, n, pool));
        let mut c: Option<Var<'t>> = None;
        for &alpha in &self.model.alphas {
            v = v.matmul(l)?;
            let term = v.scale(alpha);
            c = Some(match c {
                Some(acc) => acc.add(term)?,
                None => term,
            });
        }
        let c = c.expect("model has at least one order");
        let p = self.model.feat_dim();
        let pooled = c.matmul(tape.constant(self.stacked.clone()))?.reshape(self.n_instances, p)?;
        let emb = pooled.mul_row(feature_mask)?.matmul(tape.constant(self.model.actor_w.clone()))?;
        self.model.head.logits_on_tape(tape, emb)
    }
}

/// Class probabilities of one instance under explicit masks.
pub fn masked_prediction(
    model: &MaGNetModel,
    adjacency: &AdjacencyMatrix,
    x: &FeatureMatrix,
    edge_mask: &Matrix,
    feature_mask: &[f64],
    degree_floor: f64,
) -> Result<[f64; 2], EstimatorError> {
    let n = adjacency.n_nodes();
    if edge_mask.shape() != (n, n) {
        return Err(EstimatorError::DimensionMismatch(format!(
            "edge mask is {:?}, graph has {n} nodes",
            edge_mask.shape()
        )));
    }
    if feature_mask.len() != model.feat_dim() {
        return Err(EstimatorError::DimensionMismatch(format!(
            "feature mask has {} entries, model expects {}",
            feature_mask.len(),
            model.feat_dim()
        )));
    }
    let fwd = MaskedForward::new(model, adjacency, &[x], degree_floor)?;
    let tape = Tape::new();
    let edges: Vec<f64> = adjacency.edges().iter().map(|&(i, j)| edge_mask[(i, j)]).collect();
    let e = tape.constant(Matrix::column_vector(&edges));
    let f = tape.constant(Matrix::row_vector(feature_mask));
    let logits = fwd.logits(&tape, e, f)?.value();
    let p = softmax(logits.row(0));
    Ok([p[0], p[1]])
}

/// Objective for one dataset subset, reused across optimisation steps.
pub struct ExplanationProblem<'m> {
    model: &'m MaGNetModel,
    forward: MaskedForward<'m>,
    instances: Vec<&'m FeatureMatrix>,
    laplacian: crate::graph::NormalizedLaplacian,
    full_targets: Matrix,
    cfg: ExplanationConfig,
}

impl<'m> ExplanationProblem<'m> {
    pub fn new(
        model: &'m MaGNetModel,
        data: &'m GraphDataset,
        cfg: &ExplanationConfig,
    ) -> Result<Self, EstimatorError> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(EstimatorError::EmptyDataset);
        }
        let instances: Vec<&FeatureMatrix> = data.instances().iter().map(|i| &i.features).collect();
        let forward = MaskedForward::new(model, data.adjacency(), &instances, cfg.degree_floor)?;
        let laplacian = normalized_laplacian(data.adjacency())?;
        let mut problem =
            Self { model, forward, instances, laplacian, full_targets: Matrix::zeros(0, 0), cfg: cfg.clone() };
        problem.full_targets = problem.targets_for(None)?;
        Ok(problem)
    }

    pub fn config(&self) -> &ExplanationConfig {
        &self.cfg
    }

    pub fn n_edges(&self) -> usize {
        self.forward.n_edges()
    }

    pub fn feat_dim(&self) -> usize {
        self.model.feat_dim()
    }

    /// Model probabilities on the full graph, optionally with masked features.
    fn targets_for(&self, feature_mask: Option<&[f64]>) -> Result<Matrix, EstimatorError> {
        let mut out = Matrix::zeros(self.instances.len(), 2);
        for (i, x) in self.instances.iter().enumerate() {
            let pred = match feature_mask {
                None => self.model.predict_with_laplacian(&self.laplacian, x)?,
                Some(m) => {
                    let masked = Matrix::from_fn(x.rows(), x.cols(), |r, c| x[(r, c)] * m[c]);
                    self.model.predict_with_laplacian(&self.laplacian, &masked)?
                }
            };
            out.row_mut(i).copy_from_slice(&pred.probabilities);
        }
        Ok(out)
    }

    fn targets(&self, b_tilde: &[f64]) -> Result<Matrix, EstimatorError> {
        match self.cfg.target_mode {
            TargetMode::FixedFull => Ok(self.full_targets.clone()),
            TargetMode::MaskedFeatures => {
                let m: Vec<f64> = b_tilde.iter().map(|&b| sigmoid(b)).collect();
                self.targets_for(Some(&m))
            }
        }
    }

    /// Logit noise `log u - log(1-u)` for every sample and edge of step `t`.
    pub fn noise_for_step(&self, t: usize) -> Vec<Matrix> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(t as u64);
        (0..self.cfg.mc_samples)
            .map(|_| {
                let v: Vec<f64> = (0..self.n_edges()).map(|_| logit_noise(rng.random::<f64>())).collect();
                Matrix::column_vector(&v)
            })
            .collect()
    }

    /// Objective on a tape. `psi` is `m × 1`, `b_tilde` is `1 × p`. With
    /// `noise = None` the edges use the deterministic soft mask `σ(ψ)`;
    /// otherwise each noise matrix gives one concrete sample at temperature
    /// `omega` and the cross-entropy is averaged over them.
    pub fn objective_on_tape<'t>(
        &self,
        tape: &'t Tape,
        psi: Var<'t>,
        b_tilde: Var<'t>,
        omega: f64,
        noise: Option<&[Matrix]>,
        targets: &Matrix,
    ) -> Result<Var<'t>, AutodiffError> {
        let fm = b_tilde.sigmoid();
        let n = self.instances.len() as f64;
        let samples: Vec<Var<'t>> = match noise {
            None => vec![psi.sigmoid()],
            Some(draws) => draws
                .iter()
                .map(|g| Ok(psi.add(tape.constant(g.clone()))?.scale(1.0 / omega).sigmoid()))
                .collect::<Result<_, AutodiffError>>()?,
        };
        let weight = 1.0 / (n * samples.len() as f64);
        let scaled_targets = targets.scale(weight);
        let mut loss: Option<Var<'t>> = None;
        for e in samples {
            let logits = self.forward.logits(tape, e, fm)?;
            let ce = cross_entropy_on_tape(tape, logits, &scaled_targets)?;
            loss = Some(match loss {
                Some(acc) => acc.add(ce)?,
                None => ce,
            });
        }
        let loss = loss.expect("at least one sample");
        let edge_pen = psi.sigmoid().sum().scale(self.cfg.lambda_edge);
        let feat_pen = fm.sum().scale(self.cfg.lambda_feature);
        loss.add(edge_pen)?.add(feat_pen)
    }

    /// Objective value for the given parameters.
    pub fn objective(
        &self,
        params: &ExplanationParams,
        omega: f64,
        noise: Option<&[Matrix]>,
    ) -> Result<f64, EstimatorError> {
        self.check_params(params)?;
        let tape = Tape::new();
        let psi = tape.constant(Matrix::column_vector(&params.psi));
        let b = tape.constant(Matrix::row_vector(&params.b_tilde));
        let targets = self.targets(&params.b_tilde)?;
        Ok(self.objective_on_tape(&tape, psi, b, omega, noise, &targets)?.scalar())
    }

    /// Objective value and its gradients with respect to `ψ` and `B̃`.
    pub fn objective_and_gradient(
        &self,
        params: &ExplanationParams,
        omega: f64,
        noise: Option<&[Matrix]>,
    ) -> Result<(f64, Vec<f64>, Vec<f64>), EstimatorError> {
        self.check_params(params)?;
        let tape = Tape::new();
        let psi = tape.var(Matrix::column_vector(&params.psi));
        let b = tape.var(Matrix::row_vector(&params.b_tilde));
        let targets = self.targets(&params.b_tilde)?;
        let loss = self.objective_on_tape(&tape, psi, b, omega, noise, &targets)?;
        let g = tape.backward(loss)?;
        Ok((loss.scalar(), g.wrt(psi).into_vec(), g.wrt(b).into_vec()))
    }

    fn check_params(&self, params: &ExplanationParams) -> Result<(), EstimatorError> {
        if params.psi.len() != self.n_edges() || params.b_tilde.len() != self.feat_dim() {
            return Err(EstimatorError::DimensionMismatch(format!(
                "params have {} edge and {} feature logits, problem needs {} and {}",
                params.psi.len(),
                params.b_tilde.len(),
                self.n_edges(),
                self.feat_dim()
            )));
        }
        Ok(())
    }

    /// Adam from `ψ = 0`, `B̃ = 0` over the annealed temperature schedule.
    pub fn optimize(&self) -> Result<(ExplanationParams, Vec<f64>), EstimatorError> {
        let mut params = ExplanationParams::zeros(self.n_edges(), self.feat_dim());
        let mut adam_psi = Adam::new(self.n_edges(), self.cfg.lr);
        let mut adam_b = Adam::new(self.feat_dim(), self.cfg.lr);
        let mut trajectory = Vec::with_capacity(self.cfg.iters);
        for t in 0..self.cfg.iters {
            let noise = self.noise_for_step(t);
            let (loss, g_psi, g_b) = self.objective_and_gradient(&params, self.cfg.omega_at(t), Some(&noise))?;
            trajectory.push(loss);
            adam_psi.step(&mut params.psi, &g_psi);
            adam_b.step(&mut params.b_tilde, &g_b);
        }
        Ok((params, trajectory))
    }
}

/// Cross-entropy objective of the given parameters on a dataset subset.
pub fn interpretation_objective(
    model: &MaGNetModel,
    data: &GraphDataset,
    params: &ExplanationParams,
    cfg: &ExplanationConfig,
    omega: f64,
    noise: Option<&[Matrix]>,
) -> Result<f64, EstimatorError> {
    ExplanationProblem::new(model, data, cfg)?.objective(params, omega, noise)
}

pub fn optimize_explanation(
    model: &MaGNetModel,
    data: &GraphDataset,
    cfg: &ExplanationConfig,
) -> Result<(ExplanationParams, Vec<f64>), EstimatorError> {
    ExplanationProblem::new(model, data, cfg)?.optimize()
}

/// Optimises and thresholds in one go.
pub fn explain(
    model: &MaGNetModel,
    data: &GraphDataset,
    cfg: &ExplanationConfig,
    thresholds: &Thresholds,
) -> Result<Explanation, EstimatorError> {
    let (params, trajectory) = optimize_explanation(model, data, cfg)?;
    let mut e = threshold_explanation(data.adjacency(), &params, thresholds);
    e.loss_trajectory = trajectory;
    Ok(e)
}

/// Hard explanation from soft scores. A node scores the largest `μ` among
/// its edges; with `top_m_nodes` the `m` best nodes are kept (ties to the
/// smaller index), otherwise every endpoint of a kept edge.
pub fn threshold_explanation(adjacency: &AdjacencyMatrix, params: &ExplanationParams, t: &Thresholds) -> Explanation {
    let mu = params.edge_probabilities();
    let feature_scores = params.feature_probabilities();
    let n = adjacency.n_nodes();

    let mut node_scores = vec![0.0f64; n];
    let mut edge_scores = Vec::with_capacity(mu.len());
    let mut kept_edges = Vec::new();
    for (&(i, j), &m) in adjacency.edges().iter().zip(&mu) {
        node_scores[i] = node_scores[i].max(m);
        node_scores[j] = node_scores[j].max(m);
        edge_scores.push(EdgeScore { i, j, score: m });
        if m >= t.edge {
            kept_edges.push((i, j));
        }
    }

    let kept_nodes = match t.top_m_nodes {
        Some(m) => {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| node_scores[b].total_cmp(&node_scores[a]).then(a.cmp(&b)));
            let mut keep: Vec<usize> = order.into_iter().take(m).collect();
            keep.sort_unstable();
            keep
        }
        None => {
            let mut on = vec![false; n];
            for &(i, j) in &kept_edges {
                on[i] = true;
                on[j] = true;
            }
            (0..n).filter(|&v| on[v]).collect()
        }
    };

    let kept_features = (0..feature_scores.len()).filter(|&k| feature_scores[k] >= t.feature).collect();
    Explanation {
        edge_scores,
        feature_scores,
        node_scores,
        kept_edges,
        kept_nodes,
        kept_features,
        loss_trajectory: Vec::new(),
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
    lr: f64,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize, lr: f64) -> Self {
        Self { m: vec![0.0; n], v: vec![0.0; n], t: 0, lr }
    }

    fn step(&mut self, x: &mut [f64], g: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for k in 0..x.len() {
            self.m[k] = Self::B1 * self.m[k] + (1.0 - Self::B1) * g[k];
            self.v[k] = Self::B2 * self.v[k] + (1.0 - Self::B2) * g[k] * g[k];
            let mh = self.m[k] / c1;
            let vh = self.v[k] / c2;
            x[k] -= self.lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

#[cfg(test)]
mod tests;
