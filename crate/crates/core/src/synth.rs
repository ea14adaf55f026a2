//! Synthetic benchmarks with planted important nodes.
//!
//! Two generators are provided. In the first, important nodes carry
//! `N(0, 0.1)` features and everything else is `Unif(0, 1)`; the label is a
//! noisy linear statistic of the important block. In the second, every node
//! row is a Gaussian-process path over a shared sorted grid (amplitude 1 for
//! important nodes, 2.5 otherwise) and the label is a trigonometric/cubic rule
//! over the important block's column means. In both, the graph comes from
//! thresholding pooled node-node Pearson correlations.

use crate::graph::{AdjacencyMatrix, FeatureMatrix, GraphError};
use crate::linalg::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("kernel matrix is not positive definite (increase jitter)")]
    CholeskyFailure,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Binary class label. Class index 0 is `-1`, class index 1 is `+1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    pub fn from_sign(s: i64) -> Option<Self> {
        match s {
            -1 => Some(Label::Neg),
            1 => Some(Label::Pos),
            _ => None,
        }
    }

    pub fn from_class(idx: usize) -> Self {
        if idx == 1 {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    /// `+1` iff `statistic > 0`; exact zeros map to `-1`.
    pub fn from_statistic(statistic: f64) -> Self {
        if statistic > 0.0 {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    pub fn sign(self) -> i64 {
        match self {
            Label::Neg => -1,
            Label::Pos => 1,
        }
    }

    pub fn class_index(self) -> usize {
        match self {
            Label::Neg => 0,
            Label::Pos => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    pub features: FeatureMatrix,
    pub label: Label,
}

/// Provenance of a dataset: which generator, which seed, which knobs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub setting: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    #[serde(default)]
    pub notes: BTreeMap<String, String>,
}

/// A fixed graph observed with many feature matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    adjacency: AdjacencyMatrix,
    instances: Vec<Instance>,
    important_nodes: Option<Vec<usize>>,
    pub meta: DatasetMeta,
}

impl GraphDataset {
    pub fn new(
        adjacency: AdjacencyMatrix,
        instances: Vec<Instance>,
        important_nodes: Option<Vec<usize>>,
        meta: DatasetMeta,
    ) -> Result<Self, SynthError> {
        let n = adjacency.n_nodes();
        let feat_dim = instances.first().map_or(0, |i| i.features.cols());
        for (idx, inst) in instances.iter().enumerate() {
            if inst.features.shape() != (n, feat_dim) {
                return Err(SynthError::InvalidParams(format!(
                    "instance {idx} has shape {:?}, expected ({n}, {feat_dim})",
                    inst.features.shape()
                )));
            }
            if !inst.features.is_finite() {
                return Err(SynthError::InvalidParams(format!("instance {idx} has non-finite features")));
            }
        }
        if let Some(v0) = &important_nodes {
            if let Some(&bad) = v0.iter().find(|&&v| v >= n) {
                return Err(SynthError::InvalidParams(format!("important node {bad} out of range")));
            }
        }
        Ok(Self { adjacency, instances, important_nodes, meta })
    }

    pub fn adjacency(&self) -> &AdjacencyMatrix {
        &self.adjacency
    }

    pub fn instances(&self) -> &[Instance] {
        &self.instances
    }

    pub fn important_nodes(&self) -> Option<&[usize]> {
        self.important_nodes.as_deref()
    }

    pub fn n_nodes(&self) -> usize {
        self.adjacency.n_nodes()
    }

    pub fn feat_dim(&self) -> usize {
        self.instances.first().map_or(0, |i| i.features.cols())
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn labels(&self) -> Vec<Label> {
        self.instances.iter().map(|i| i.label).collect()
    }

    /// Dataset restricted to the given instance indices, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            adjacency: self.adjacency.clone(),
            instances: indices.iter().map(|&i| self.instances[i].clone()).collect(),
            important_nodes: self.important_nodes.clone(),
            meta: self.meta.clone(),
        }
    }

    /// Seeded shuffle, then the first `round(fraction · n)` instances train.
    pub fn split(&self, fraction: f64, seed: u64) -> (Self, Self) {
        use rand::seq::SliceRandom;
        let mut idx: Vec<usize> = (0..self.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(SPLIT_STREAM);
        idx.shuffle(&mut rng);
        let n_train = ((fraction * self.len() as f64).round() as usize).min(self.len());
        (self.subset(&idx[..n_train]), self.subset(&idx[n_train..]))
    }
}

const SPLIT_STREAM: u64 = u64::MAX - 1;

/// Squared-exponential kernel `σ² exp(-|x - x'|² / l²)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GPKernelConfig {
    pub sigma: f64,
    pub lengthscale: f64,
    pub jitter: f64,
}

impl GPKernelConfig {
    pub const DEFAULT_JITTER: f64 = 1e-6;

    pub fn new(sigma: f64, lengthscale: f64) -> Self {
        Self { sigma, lengthscale, jitter: Self::DEFAULT_JITTER }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.sigma > 0.0) || !(self.lengthscale > 0.0) || !(self.jitter >= 0.0) {
            return Err(SynthError::InvalidParams(format!(
                "kernel needs sigma > 0, lengthscale > 0, jitter >= 0 (got {self:?})"
            )));
        }
        Ok(())
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let d = x - y;
        self.sigma * self.sigma * (-(d * d) / (self.lengthscale * self.lengthscale)).exp()
    }
}

/// Lower Cholesky factor of `K + jitter·I` for a fixed grid; draws are `L z`.
#[derive(Debug, Clone)]
pub struct GpSampler {
    chol: nalgebra::DMatrix<f64>,
}

impl GpSampler {
    pub fn new(grid: &[f64], cfg: &GPKernelConfig) -> Result<Self, SynthError> {
        if grid.is_empty() {
            return Err(SynthError::InvalidParams("empty GP grid".into()));
        }
        let p = grid.len();
        let k =
            nalgebra::DMatrix::from_fn(p, p, |i, j| cfg.eval(grid[i], grid[j]) + if i == j { cfg.jitter } else { 0.0 });
        let chol = nalgebra::Cholesky::new(k).ok_or(SynthError::CholeskyFailure)?;
        let l = chol.unpack();
        if l.diagonal().iter().any(|d| !(*d > 0.0) || !d.is_finite()) {
            return Err(SynthError::CholeskyFailure);
        }
        Ok(Self { chol: l })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let p = self.chol.nrows();
        let z: Vec<f64> = (0..p).map(|_| StandardNormal.sample(rng)).collect();
        (0..p).map(|i| (0..=i).map(|j| self.chol[(i, j)] * z[j]).sum()).collect()
    }
}

/// One draw from `MVN(0, K + jitter·I)` over `grid`.
pub fn sample_gp(grid: &[f64], cfg: &GPKernelConfig, seed: u64) -> Result<Vec<f64>, SynthError> {
    cfg.validate()?;
    let sampler = GpSampler::new(grid, cfg)?;
    Ok(sampler.draw(&mut ChaCha8Rng::seed_from_u64(seed)))
}

/// `+1` iff `(eᵀ X_{V₀} e)/|V₀| + noise > 0`.
pub fn label_rule_linear(x: &FeatureMatrix, v0: &[usize], noise: f64) -> Label {
    assert!(!v0.is_empty(), "important node set must be nonempty");
    let total: f64 = v0.iter().map(|&v| x.row(v).iter().sum::<f64>()).sum();
    Label::from_statistic(total / v0.len() as f64 + noise)
}

/// Index ranges of the three selector blocks for feature dimension `p`.
///
/// With `b = ⌊p/3⌋`: first block `[0, b)`, middle block `[b, 2b)`, last block
/// `[p-b, p)`. When `p` is not a multiple of 3 the leftover coordinates sit
/// between the middle and last blocks and are unused.
pub fn selector_blocks(p: usize) -> [std::ops::Range<usize>; 3] {
    let b = p / 3;
    [0..b, b..2 * b, p - b..p]
}

/// `+1` iff `sin(𝐱e₁)·cos(𝐱e₂) + 𝐱^∘3 e₃ + noise > 0`, with `𝐱` the column
/// means of the important rows.
pub fn label_rule_nonlinear(x: &FeatureMatrix, v0: &[usize], noise: f64) -> Label {
    assert!(!v0.is_empty(), "important node set must be nonempty");
    let p = x.cols();
    assert!(p >= 3, "nonlinear rule needs at least 3 features");
    let mut means = vec![0.0; p];
    for &v in v0 {
        for (m, &f) in means.iter_mut().zip(x.row(v)) {
            *m += f;
        }
    }
    for m in &mut means {
        *m /= v0.len() as f64;
    }
    let [e1, e2, e3] = selector_blocks(p);
    let s1: f64 = means[e1].iter().sum();
    let s2: f64 = means[e2].iter().sum();
    let s3: f64 = means[e3].iter().map(|m| m * m * m).sum();
    Label::from_statistic(s1.sin() * s2.cos() + s3 + noise)
}

/// Correlation graph plus the nodes whose features were constant.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationGraph {
    pub adjacency: AdjacencyMatrix,
    pub degenerate_nodes: Vec<usize>,
}

/// Pearson correlation between nodes over their features concatenated across
/// all instances. Constant nodes get correlation 0 with everybody.
pub fn node_correlations(features: &[FeatureMatrix]) -> (Matrix, Vec<usize>) {
    let n_nodes = features[0].rows();
    let mut centered: Vec<Vec<f64>> = Vec::with_capacity(n_nodes);
    let mut norms = Vec::with_capacity(n_nodes);
    let mut degenerate = Vec::new();
    for u in 0..n_nodes {
        let flat: Vec<f64> = features.iter().flat_map(|x| x.row(u).iter().copied()).collect();
        let mean = flat.iter().sum::<f64>() / flat.len() as f64;
        let c: Vec<f64> = flat.iter().map(|v| v - mean).collect();
        let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 || flat.iter().all(|&v| v == flat[0]) {
            degenerate.push(u);
        }
        centered.push(c);
        norms.push(norm);
    }
    let mut rho = Matrix::zeros(n_nodes, n_nodes);
    for u in 0..n_nodes {
        for v in u + 1..n_nodes {
            let r = if degenerate.contains(&u) || degenerate.contains(&v) {
                0.0
            } else {
                let dot: f64 = centered[u].iter().zip(&centered[v]).map(|(a, b)| a * b).sum();
                (dot / (norms[u] * norms[v])).clamp(-1.0, 1.0)
            };
            rho[(u, v)] = r;
            rho[(v, u)] = r;
        }
    }
    (rho, degenerate)
}

/// Keeps the `round(target_density · C(N,2))` pairs of largest `|ρ|` (ties by
/// lexicographic pair order), then links every still-isolated node to its
/// highest-`|ρ|` partner.
pub fn correlation_adjacency(features: &[FeatureMatrix], target_density: f64) -> Result<CorrelationGraph, SynthError> {
    let Some(first) = features.first() else {
        return Err(SynthError::InvalidParams("no feature matrices".into()));
    };
    if features.len() < 2 && first.cols() < 2 {
        return Err(SynthError::InvalidParams("need at least 2 instances or feat_dim >= 2 for correlations".into()));
    }
    if !(target_density > 0.0 && target_density <= 1.0) {
        return Err(SynthError::InvalidParams(format!("target_density {target_density} not in (0, 1]")));
    }
    let n = first.rows();
    if n < 2 {
        return Err(GraphError::TooFewNodes(n).into());
    }
    let (rho, degenerate_nodes) = node_correlations(features);

    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    pairs.sort_by(|&(a, b), &(c, d)| rho[(c, d)].abs().total_cmp(&rho[(a, b)].abs()).then((a, b).cmp(&(c, d))));
    let n_keep = ((target_density * pairs.len() as f64).round() as usize).min(pairs.len());
    let mut chosen: Vec<(usize, usize)> = pairs[..n_keep].to_vec();

    let mut degree = vec![0usize; n];
    for &(i, j) in &chosen {
        degree[i] += 1;
        degree[j] += 1;
    }
    for u in 0..n {
        if degree[u] > 0 {
            continue;
        }
        let partner = (0..n)
            .filter(|&v| v != u)
            .max_by(|&a, &b| rho[(u, a)].abs().total_cmp(&rho[(u, b)].abs()).then(b.cmp(&a)))
            .expect("n >= 2");
        chosen.push((u.min(partner), u.max(partner)));
        degree[u] += 1;
        degree[partner] += 1;
    }
    Ok(CorrelationGraph { adjacency: AdjacencyMatrix::new(n, &chosen)?, degenerate_nodes })
}

/// Shared knobs of both generators.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n: usize,
    pub n_nodes: usize,
    pub n_important: usize,
    pub feat_dim: usize,
    pub noise_sd: f64,
    pub target_density: f64,
    pub seed: u64,
}

impl SynthParams {
    pub const DEFAULT_NOISE_SD: f64 = 0.1;
    pub const DEFAULT_DENSITY: f64 = 0.2;

    pub fn new(n: usize, n_nodes: usize, n_important: usize, feat_dim: usize, seed: u64) -> Self {
        Self {
            n,
            n_nodes,
            n_important,
            feat_dim,
            noise_sd: Self::DEFAULT_NOISE_SD,
            target_density: Self::DEFAULT_DENSITY,
            seed,
        }
    }

    fn validate(&self, min_feat_dim: usize) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidParams(m));
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.n_nodes < 2 {
            return bad(format!("n_nodes must be >= 2, got {}", self.n_nodes));
        }
        if self.n_important == 0 || self.n_important >= self.n_nodes {
            return bad(format!("need 0 < n_important < n_nodes, got {} of {}", self.n_important, self.n_nodes));
        }
        if self.feat_dim < min_feat_dim {
            return bad(format!("feat_dim must be >= {min_feat_dim}, got {}", self.feat_dim));
        }
        if !(self.noise_sd >= 0.0) {
            return bad("noise_sd must be >= 0".into());
        }
        Ok(())
    }

    fn important(&self) -> Vec<usize> {
        (0..self.n_important).collect()
    }

    fn meta(&self, setting: u8) -> DatasetMeta {
        let mut params = BTreeMap::new();
        params.insert("n".into(), self.n as f64);
        params.insert("n_nodes".into(), self.n_nodes as f64);
        params.insert("n_important".into(), self.n_important as f64);
        params.insert("feat_dim".into(), self.feat_dim as f64);
        params.insert("noise_sd".into(), self.noise_sd);
        params.insert("target_density".into(), self.target_density);
        let mut notes = BTreeMap::new();
        notes.insert("correlation".into(), "pooled over instances".into());
        DatasetMeta { setting: Some(setting), seed: Some(self.seed), params, notes }
    }

    /// Independent generator for instance `i`.
    fn instance_rng(&self, i: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(i as u64);
        rng
    }
}

fn assemble(params: &SynthParams, instances: Vec<Instance>, mut meta: DatasetMeta) -> Result<GraphDataset, SynthError> {
    let feats: Vec<FeatureMatrix> = instances.iter().map(|i| i.features.clone()).collect();
    let graph = correlation_adjacency(&feats, params.target_density)?;
    if !graph.degenerate_nodes.is_empty() {
        meta.notes.insert("degenerate_nodes".into(), format!("{:?}", graph.degenerate_nodes));
    }
    GraphDataset::new(graph.adjacency, instances, Some(params.important()), meta)
}

/// Gaussian important block, uniform background, linear label rule.
pub fn generate_setting1(params: &SynthParams) -> Result<GraphDataset, SynthError> {
    params.validate(1)?;
    let important = params.important();
    let important_dist = Normal::new(0.0, 0.1_f64.sqrt()).expect("valid sd");
    let noise_dist = Normal::new(0.0, params.noise_sd).expect("valid sd");
    let instances = (0..params.n)
        .map(|i| {
            let mut rng = params.instance_rng(i);
            let features = Matrix::from_fn(params.n_nodes, params.feat_dim, |node, _| {
                if node < params.n_important {
                    important_dist.sample(&mut rng)
                } else {
                    rng.random::<f64>()
                }
            });
            let noise = noise_dist.sample(&mut rng);
            let label = label_rule_linear(&features, &important, noise);
            Instance { features, label }
        })
        .collect();
    assemble(params, instances, params.meta(1))
}

/// Gaussian-process rows over a per-instance sorted grid, nonlinear label.
pub fn generate_setting2(
    params: &SynthParams,
    kernel_important: &GPKernelConfig,
    kernel_other: &GPKernelConfig,
) -> Result<GraphDataset, SynthError> {
    params.validate(3)?;
    kernel_important.validate()?;
    kernel_other.validate()?;
    let important = params.important();
    let noise_dist = Normal::new(0.0, params.noise_sd).expect("valid sd");
    let mut instances = Vec::with_capacity(params.n);
    for i in 0..params.n {
        let mut rng = params.instance_rng(i);
        let mut grid: Vec<f64> = (0..params.feat_dim).map(|_| rng.random::<f64>()).collect();
        grid.sort_by(f64::total_cmp);
        let imp = GpSampler::new(&grid, kernel_important)?;
        let other = GpSampler::new(&grid, kernel_other)?;
        let mut features = Matrix::zeros(params.n_nodes, params.feat_dim);
        for node in 0..params.n_nodes {
            let sampler = if node < params.n_important { &imp } else { &other };
            features.row_mut(node).copy_from_slice(&sampler.draw(&mut rng));
        }
        let noise = noise_dist.sample(&mut rng);
        let label = label_rule_nonlinear(&features, &important, noise);
        instances.push(Instance { features, label });
    }
    let mut meta = params.meta(2);
    meta.params.insert("sigma_important".into(), kernel_important.sigma);
    meta.params.insert("sigma_other".into(), kernel_other.sigma);
    meta.params.insert("lengthscale".into(), kernel_important.lengthscale);
    meta.params.insert("jitter".into(), kernel_important.jitter);
    meta.notes.insert("gp_mean".into(), "zero".into());
    meta.notes.insert("selector_blocks".into(), "b = floor(p/3); e1 = [0,b), e2 = [b,2b), e3 = [p-b,p)".into());
    assemble(params, instances, meta)
}

/// Setting 2 with the default kernels (σ = 1 and σ = 2.5, l = 1).
pub fn generate_setting2_default(params: &SynthParams) -> Result<GraphDataset, SynthError> {
    generate_setting2(params, &GPKernelConfig::new(1.0, 1.0), &GPKernelConfig::new(2.5, 1.0))
}
