//! Plain-Rust state and results behind the browser bindings.

use magnet::estimator::{evaluate_accuracy, train_magnet, ActorConfig, MaGNetModel};
use magnet::interpreter::{concrete_edge_sample, explain, ExplanationConfig, Thresholds};
use magnet::metrics::interpretation_metrics;
use magnet::synth::{generate_setting1, generate_setting2_default, SynthParams};
use magnet::GraphDataset;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Histogram {
    /// Counts over `bins` equal-width buckets of `[0, 1]`.
    pub counts: Vec<u32>,
    pub draws: u32,
    pub fraction_above_half: f64,
    pub sigmoid_psi: f64,
}

/// Distribution of relaxed edge samples at one logit and temperature.
pub fn concrete_histogram(psi: f64, omega: f64, draws: u32, bins: usize, seed: u64) -> Result<Histogram, String> {
    if omega.is_nan() || omega <= 0.0 {
        return Err("temperature must be positive".into());
    }
    if draws == 0 || bins == 0 {
        return Err("need at least one draw and one bin".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counts = vec![0u32; bins];
    let mut above = 0u32;
    for _ in 0..draws {
        let e = concrete_edge_sample(psi, omega, rng.random::<f64>());
        counts[((e * bins as f64) as usize).min(bins - 1)] += 1;
        if e > 0.5 {
            above += 1;
        }
    }
    Ok(Histogram {
        counts,
        draws,
        fraction_above_half: f64::from(above) / f64::from(draws),
        sigmoid_psi: 1.0 / (1.0 + (-psi).exp()),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GraphView {
    pub n_nodes: usize,
    pub edges: Vec<(usize, usize)>,
    pub important: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub train_size: usize,
    pub test_size: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub alphas: Vec<f64>,
    pub epsilons: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExplainSummary {
    pub edge_scores: Vec<f64>,
    pub node_scores: Vec<f64>,
    pub feature_scores: Vec<f64>,
    pub kept_nodes: Vec<usize>,
    pub kept_edges: usize,
    pub recovery_rate: f64,
    pub am: f64,
    pub rm: f64,
    pub loss_trajectory: Vec<f64>,
}

/// A generated dataset, its split and (after `train`) a fitted model.
pub struct Session {
    data: GraphDataset,
    train: GraphDataset,
    test: GraphDataset,
    seed: u64,
    model: Option<MaGNetModel>,
}

impl Session {
    pub fn new(
        setting: u8,
        n: usize,
        nodes: usize,
        important: usize,
        feat_dim: usize,
        seed: u64,
    ) -> Result<Self, String> {
        let params = SynthParams::new(n, nodes, important, feat_dim, seed);
        let data = match setting {
            1 => generate_setting1(&params),
            2 => generate_setting2_default(&params),
            s => return Err(format!("setting must be 1 or 2, got {s}")),
        }
        .map_err(|e| e.to_string())?;
        let (train, test) = data.split(0.7, seed);
        if test.is_empty() {
            return Err("too few instances for a held-out split".into());
        }
        Ok(Self { data, train, test, seed, model: None })
    }

    pub fn graph(&self) -> GraphView {
        GraphView {
            n_nodes: self.data.n_nodes(),
            edges: self.data.adjacency().edges().to_vec(),
            important: self.data.important_nodes().map(<[usize]>::to_vec).unwrap_or_default(),
        }
    }

    pub fn train(&mut self, k: usize) -> Result<TrainSummary, String> {
        let cfg = ActorConfig { seed: self.seed, ..ActorConfig::with_orders(k) };
        let model = train_magnet(&self.train, &cfg).map_err(|e| e.to_string())?;
        let summary = TrainSummary {
            train_size: self.train.len(),
            test_size: self.test.len(),
            train_accuracy: evaluate_accuracy(&model, &self.train).map_err(|e| e.to_string())?,
            test_accuracy: evaluate_accuracy(&model, &self.test).map_err(|e| e.to_string())?,
            alphas: model.alphas.clone(),
            epsilons: model.diagnostics.epsilons.clone(),
        };
        self.model = Some(model);
        Ok(summary)
    }

    pub fn explain(&self, lambda_edge: f64, iters: usize, top_m: usize) -> Result<ExplainSummary, String> {
        let model = self.model.as_ref().ok_or("train a model first")?;
        let cfg = ExplanationConfig { lambda_edge, iters, seed: self.seed, ..ExplanationConfig::default() };
        let top = (top_m > 0).then_some(top_m.min(self.data.n_nodes()));
        let t = Thresholds { top_m_nodes: top, ..Thresholds::default() };
        let e = explain(model, &self.test, &cfg, &t).map_err(|e| e.to_string())?;
        let important = self.data.important_nodes().unwrap_or_default();
        let m = interpretation_metrics(self.data.adjacency(), &e.kept_edges, &e.kept_nodes, important)
            .map_err(|e| e.to_string())?;
        Ok(ExplainSummary {
            edge_scores: e.edge_scores.iter().map(|s| s.score).collect(),
            node_scores: e.node_scores,
            feature_scores: e.feature_scores,
            kept_nodes: e.kept_nodes,
            kept_edges: e.kept_edges.len(),
            recovery_rate: m.recovery_rate,
            am: m.am,
            rm: m.rm,
            loss_trajectory: e.loss_trajectory,
        })
    }
}
