use super::*;
use crate::autodiff::grad_check;
use crate::estimator::{predict, train_magnet, ActorConfig, Head};
use crate::testutil::{planted_dataset, random_connected, random_matrix, single_edge_dataset};
use proptest::prelude::*;
use rand::Rng;

fn trained(seed: u64) -> (GraphDataset, MaGNetModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let adj = random_connected(8, 0.3, &mut rng);
    let ds = planted_dataset(&adj, 24, 3, 0.6, 0.6, &mut rng);
    let model = train_magnet(&ds, &ActorConfig::default()).unwrap();
    (ds, model)
}

fn no_floor(cfg: ExplanationConfig) -> ExplanationConfig {
    ExplanationConfig { degree_floor: 0.0, ..cfg }
}

#[test]
fn concrete_sample_examples() {
    for &(psi, omega) in &[(0.3, 1.0), (-2.0, 0.5), (4.0, 0.1)] {
        assert_eq!(concrete_edge_sample(psi, omega, 0.5), sigmoid(psi / omega));
    }
    assert_eq!(concrete_edge_sample(0.0, 0.7, 0.5), 0.5);
    assert!(concrete_edge_sample(2.0, 0.01, 0.5) > 1.0 - 1e-10);
    let lo = concrete_edge_sample(0.0, 1.0, 0.0);
    let hi = concrete_edge_sample(0.0, 1.0, 1.0);
    assert!(lo > 0.0 && lo < 1e-11 && hi < 1.0 && hi > 1.0 - 1e-11);
}

#[test]
fn low_temperature_matches_bernoulli() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for &psi in &[-1.5, 0.0, 0.7, 2.2] {
        let hits = (0..100_000).filter(|_| concrete_edge_sample(psi, 0.01, rng.random::<f64>()) > 0.5).count();
        let freq = hits as f64 / 100_000.0;
        assert!((freq - sigmoid(psi)).abs() <= 0.02, "psi {psi}: {freq}");
    }
}

#[test]
fn identity_masks_reproduce_predict() {
    let (ds, model) = trained(2);
    let adj = ds.adjacency();
    let ones = adj.to_dense();
    for inst in ds.instances().iter().take(6) {
        let a = masked_prediction(&model, adj, &inst.features, &ones, &[1.0; 3], 0.0).unwrap();
        let b = predict(&model, adj, &inst.features).unwrap().probabilities;
        assert!((a[0] - b[0]).abs() < 1e-12 && (a[1] - b[1]).abs() < 1e-12);
    }
}

#[test]
fn zero_edge_mask_gives_head_bias() {
    let (ds, model) = trained(3);
    let Head::Linear { weights } = &model.head else { unreachable!() };
    let bias = softmax(weights.row(3));
    let zero = Matrix::zeros(8, 8);
    let p = masked_prediction(&model, ds.adjacency(), &ds.instances()[0].features, &zero, &[1.0; 3], 1e-8).unwrap();
    assert!((p[0] - bias[0]).abs() < 1e-12 && (p[1] - bias[1]).abs() < 1e-12);
}

#[test]
fn masked_prediction_rejects_bad_shapes() {
    let (ds, model) = trained(3);
    let x = &ds.instances()[0].features;
    let adj = ds.adjacency();
    assert!(masked_prediction(&model, adj, x, &Matrix::zeros(3, 3), &[1.0; 3], 1e-8).is_err());
    assert!(masked_prediction(&model, adj, x, &adj.to_dense(), &[1.0; 2], 1e-8).is_err());
    assert!(masked_prediction(&model, adj, &Matrix::zeros(8, 2), &adj.to_dense(), &[1.0; 3], 1e-8).is_err());
}

#[test]
fn random_masks_match_dense_oracle() {
    let (ds, model) = trained(4);
    let adj = ds.adjacency();
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    let Head::Linear { weights } = &model.head else { unreachable!() };
    for inst in ds.instances().iter().take(5) {
        let mut mask = Matrix::zeros(8, 8);
        for &(i, j) in adj.edges() {
            let v = rng.random::<f64>();
            mask[(i, j)] = v;
            mask[(j, i)] = v;
        }
        let fm: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
        let delta = 1e-8;

        let deg: Vec<f64> = (0..8).map(|i| (0..8).map(|j| mask[(i, j)]).sum::<f64>() + delta).collect();
        let l = Matrix::from_fn(8, 8, |i, j| mask[(i, j)] / (deg[i] * deg[j]).sqrt());
        let x = Matrix::from_fn(8, 3, |r, c| inst.features[(r, c)] * fm[c]);
        let mut fused = [0.0; 3];
        let mut lk = Matrix::identity(8);
        for k in 0..3 {
            lk = lk.matmul(&l);
            let pooled = lk.matmul(&x).column_means();
            for c in 0..3 {
                fused[c] += model.alphas[k] * pooled[c];
            }
        }
        let logits: Vec<f64> =
            (0..2).map(|s| weights[(3, s)] + (0..3).map(|c| fused[c] * weights[(c, s)]).sum::<f64>()).collect();
        let oracle = softmax(&logits);
        let got = masked_prediction(&model, adj, &inst.features, &mask, &fm, delta).unwrap();
        assert!((got[1] - oracle[1]).abs() < 1e-10);
    }
}

#[test]
fn graph_masked_laplacian_agrees_with_forward() {
    let (ds, model) = trained(5);
    let adj = ds.adjacency();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut mask = Matrix::zeros(8, 8);
    for &(i, j) in adj.edges() {
        let v = rng.random::<f64>();
        mask[(i, j)] = v;
        mask[(j, i)] = v;
    }
    let lm = crate::graph::masked_laplacian(adj, &mask, 1e-8).unwrap();
    let x = &ds.instances()[0].features;
    let p = model.predict_with_laplacian(&lm, x).unwrap().probabilities;
    let q = masked_prediction(&model, adj, x, &mask, &[1.0; 3], 1e-8).unwrap();
    assert!((p[1] - q[1]).abs() < 1e-12);
}

#[test]
fn saturated_masks_give_prediction_entropy() {
    let (ds, model) = trained(6);
    let cfg = no_floor(ExplanationConfig { lambda_edge: 0.0, lambda_feature: 0.0, ..Default::default() });
    let params = ExplanationParams { psi: vec![50.0; ds.adjacency().n_edges()], b_tilde: vec![50.0; 3] };
    let loss = interpretation_objective(&model, &ds, &params, &cfg, 1.0, None).unwrap();
    let entropy: f64 = ds
        .instances()
        .iter()
        .map(|i| {
            let p = predict(&model, ds.adjacency(), &i.features).unwrap().probabilities;
            -p.iter().map(|q| q * q.ln()).sum::<f64>()
        })
        .sum::<f64>()
        / ds.len() as f64;
    assert!((loss - entropy).abs() < 1e-12, "{loss} vs {entropy}");
}

#[test]
fn full_mask_is_gibbs_lower_bound() {
    let (ds, model) = trained(7);
    let cfg = no_floor(ExplanationConfig { lambda_edge: 0.0, lambda_feature: 0.0, ..Default::default() });
    let problem = ExplanationProblem::new(&model, &ds, &cfg).unwrap();
    let m = ds.adjacency().n_edges();
    let full = problem.objective(&ExplanationParams { psi: vec![50.0; m], b_tilde: vec![50.0; 3] }, 1.0, None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(70);
    for _ in 0..100 {
        let params = ExplanationParams {
            psi: (0..m).map(|_| rng.random_range(-4.0..4.0)).collect(),
            b_tilde: (0..3).map(|_| rng.random_range(-4.0..4.0)).collect(),
        };
        let v = problem.objective(&params, 1.0, None).unwrap();
        assert!(v >= full - 1e-12, "{v} < {full}");
    }
}

#[test]
fn objective_gradient_matches_finite_differences() {
    let (ds, model) = trained(8);
    let sub = ds.subset(&(0..6).collect::<Vec<_>>());
    let mut rng = ChaCha8Rng::seed_from_u64(80);
    for round in 0..5 {
        let cfg = ExplanationConfig {
            lambda_edge: rng.random_range(0.01..0.2),
            lambda_feature: rng.random_range(0.01..0.2),
            mc_samples: 2,
            seed: round,
            ..Default::default()
        };
        let problem = ExplanationProblem::new(&model, &sub, &cfg).unwrap();
        let m = problem.n_edges();
        let omega = rng.random_range(0.3..1.0);
        let noise = problem.noise_for_step(round as usize);
        let targets = problem.full_targets.clone();
        let params = [random_matrix(m, 1, &mut rng), random_matrix(1, 3, &mut rng)];
        let err =
            grad_check(|t, v| problem.objective_on_tape(t, v[0], v[1], omega, Some(&noise), &targets), &params, 1e-6)
                .unwrap();
        assert!(err <= 1e-4, "round {round}: relative error {err}");
    }
}

#[test]
fn graph_blind_head_leaves_only_penalty() {
    let (ds, mut model) = trained(9);
    model.head =
        Head::Linear { weights: Matrix::from_rows(&[vec![0.0; 2], vec![0.0; 2], vec![0.0; 2], vec![0.3, -0.2]]) };
    let cfg = ExplanationConfig { iters: 12, ..Default::default() };
    let problem = ExplanationProblem::new(&model, &ds, &cfg).unwrap();

    let noise = problem.noise_for_step(0);
    let zero_pen = ExplanationConfig { lambda_edge: 0.0, lambda_feature: 0.0, ..cfg.clone() };
    let bare = ExplanationProblem::new(&model, &ds, &zero_pen).unwrap();
    let (_, g_psi, _) =
        bare.objective_and_gradient(&ExplanationParams::zeros(problem.n_edges(), 3), 0.7, Some(&noise)).unwrap();
    assert!(g_psi.iter().all(|&g| g == 0.0));

    let mut prev = vec![0.0; problem.n_edges()];
    for iters in 1..=12 {
        let c = ExplanationConfig { iters, ..cfg.clone() };
        let (params, _) = optimize_explanation(&model, &ds, &c).unwrap();
        for (now, before) in params.psi.iter().zip(&prev) {
            assert!(now < before);
        }
        prev = params.psi;
    }
}

#[test]
fn single_signal_edge_ranks_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let ds = single_edge_dataset(10, 40, &mut rng);
    let model = train_magnet(&ds, &ActorConfig::default()).unwrap();
    let (params, _) = optimize_explanation(&model, &ds, &ExplanationConfig::default()).unwrap();
    let best = (0..params.psi.len()).max_by(|&a, &b| params.psi[a].total_cmp(&params.psi[b])).unwrap();
    assert_eq!(ds.adjacency().edges()[best], (0, 1), "psi = {:?}", params.psi);
}

/// Block means of 25 iterations. Once the loss has levelled off, the sampled
/// objective only fluctuates, so each block may exceed its predecessor by at
/// most three standard errors of its own mean.
#[test]
fn loss_trend_is_non_increasing() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let ds = single_edge_dataset(10, 40, &mut rng);
    let model = train_magnet(&ds, &ActorConfig::default()).unwrap();
    let cfg = ExplanationConfig { mc_samples: 8, ..Default::default() };
    let (_, traj) = optimize_explanation(&model, &ds, &cfg).unwrap();
    let stats: Vec<(f64, f64)> = traj
        .chunks(25)
        .map(|c| {
            let n = c.len() as f64;
            let mean = c.iter().sum::<f64>() / n;
            let var = c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
            (mean, (var / n).sqrt())
        })
        .collect();
    for w in stats.windows(2) {
        assert!(w[1].0 <= w[0].0 + 3.0 * w[1].1, "block stats {stats:?}");
    }
    assert!(stats.last().unwrap().0 < stats[0].0 - 0.05);
}

#[test]
fn optimisation_is_deterministic() {
    let (ds, model) = trained(11);
    let cfg = ExplanationConfig { iters: 40, seed: 5, ..Default::default() };
    let (a, ta) = optimize_explanation(&model, &ds, &cfg).unwrap();
    let (b, tb) = optimize_explanation(&model, &ds, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(ta.iter().map(|v| v.to_bits()).collect::<Vec<_>>(), tb.iter().map(|v| v.to_bits()).collect::<Vec<_>>());
    let other = optimize_explanation(&model, &ds, &ExplanationConfig { seed: 6, ..cfg }).unwrap();
    assert_ne!(other.1, ta);
}

#[test]
fn masked_feature_targets_follow_the_mask() {
    let (ds, model) = trained(12);
    let cfg = ExplanationConfig { iters: 20, target_mode: TargetMode::MaskedFeatures, ..Default::default() };
    let (params, traj) = optimize_explanation(&model, &ds, &cfg).unwrap();
    assert_eq!(traj.len(), 20);
    assert!(traj.iter().all(|v| v.is_finite()));
    let fixed =
        optimize_explanation(&model, &ds, &ExplanationConfig { target_mode: TargetMode::FixedFull, ..cfg }).unwrap();
    assert_ne!(params, fixed.0);
}

#[test]
fn config_validation() {
    let (ds, model) = trained(13);
    for cfg in [
        ExplanationConfig { omega_end: 0.0, ..Default::default() },
        ExplanationConfig { mc_samples: 0, ..Default::default() },
        ExplanationConfig { lambda_edge: -1.0, ..Default::default() },
    ] {
        assert!(matches!(optimize_explanation(&model, &ds, &cfg), Err(EstimatorError::InvalidConfig(_))));
    }
    let empty = ds.subset(&[]);
    assert!(matches!(
        optimize_explanation(&model, &empty, &ExplanationConfig::default()),
        Err(EstimatorError::EmptyDataset)
    ));
}

#[test]
fn omega_schedule_endpoints() {
    let cfg = ExplanationConfig::default();
    assert_eq!(cfg.omega_at(0), 1.0);
    assert!((cfg.omega_at(299) - 0.1).abs() < 1e-15);
    for t in 1..300 {
        assert!(cfg.omega_at(t) < cfg.omega_at(t - 1));
    }
}

fn path4() -> AdjacencyMatrix {
    AdjacencyMatrix::new(4, &[(0, 1), (1, 2), (2, 3)]).unwrap()
}

#[test]
fn threshold_all_high_and_all_low() {
    let adj = path4();
    let hi = ExplanationParams { psi: vec![10.0; 3], b_tilde: vec![10.0, -10.0] };
    let e = threshold_explanation(&adj, &hi, &Thresholds::default());
    assert_eq!(e.kept_edges, adj.edges().to_vec());
    assert_eq!(e.kept_nodes, vec![0, 1, 2, 3]);
    assert_eq!(e.kept_features, vec![0]);

    let lo = ExplanationParams { psi: vec![-10.0; 3], b_tilde: vec![-10.0; 2] };
    let e = threshold_explanation(&adj, &lo, &Thresholds::default());
    assert!(e.kept_edges.is_empty() && e.kept_nodes.is_empty() && e.kept_features.is_empty());
}

#[test]
fn threshold_top_m_ties_prefer_small_index() {
    let adj = path4();
    // node scores: 0 -> σ(1), 1 -> σ(1), 2 -> σ(1), 3 -> σ(-2)
    let params = ExplanationParams { psi: vec![1.0, 1.0, -2.0], b_tilde: vec![] };
    let t = Thresholds { top_m_nodes: Some(2), ..Thresholds::default() };
    assert_eq!(threshold_explanation(&adj, &params, &t).kept_nodes, vec![0, 1]);

    let params = ExplanationParams { psi: vec![-1.0, 0.5, 3.0], b_tilde: vec![] };
    assert_eq!(threshold_explanation(&adj, &params, &t).kept_nodes, vec![2, 3]);
    let e = threshold_explanation(&adj, &params, &Thresholds::default());
    assert_eq!(e.kept_edges, vec![(1, 2), (2, 3)]);
    assert_eq!(e.node_scores[0], sigmoid(-1.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn masks_stay_symmetric(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let adj = random_connected(7, 0.4, &mut rng);
        let params = ExplanationParams {
            psi: (0..adj.n_edges()).map(|_| rng.random_range(-3.0..3.0)).collect(),
            b_tilde: vec![],
        };
        let m = params.edge_mask(&adj);
        prop_assert_eq!(m.clone(), m.transpose());
        let tape = Tape::new();
        let e = tape.constant(Matrix::column_vector(&params.psi)).sigmoid();
        let s = e.scatter_symmetric(7, adj.edges().into()).unwrap().value();
        prop_assert_eq!(s.clone(), s.transpose());
        for i in 0..7 {
            for j in 0..7 {
                prop_assert_eq!(s[(i, j)] != 0.0, adj.has_edge(i, j));
            }
        }
    }

    #[test]
    fn kept_edges_are_graph_edges(seed in any::<u64>(), thr in 0.05f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let adj = random_connected(9, 0.3, &mut rng);
        let params = ExplanationParams {
            psi: (0..adj.n_edges()).map(|_| rng.random_range(-3.0..3.0)).collect(),
            b_tilde: (0..4).map(|_| rng.random_range(-3.0..3.0)).collect(),
        };
        let e = threshold_explanation(&adj, &params, &Thresholds { edge: thr, feature: thr, top_m_nodes: None });
        for &(i, j) in &e.kept_edges {
            prop_assert!(adj.has_edge(i, j));
        }
        for &v in &e.kept_nodes {
            prop_assert!(e.kept_edges.iter().any(|&(i, j)| i == v || j == v));
        }
        for (k, &s) in e.feature_scores.iter().enumerate() {
            prop_assert_eq!(e.kept_features.contains(&k), s >= thr);
        }
    }
}
