//! Shared fixtures for unit tests.

use crate::graph::AdjacencyMatrix;
use crate::linalg::Matrix;
use rand::Rng;

/// Random connected graph: a random spanning tree plus extra edges.
pub fn random_connected(n: usize, extra: f64, rng: &mut impl Rng) -> AdjacencyMatrix {
    let mut pairs = Vec::new();
    for i in 1..n {
        pairs.push((rng.random_range(0..i), i));
    }
    for i in 0..n {
        for j in i + 1..n {
            if rng.random::<f64>() < extra && !pairs.contains(&(i, j)) {
                pairs.push((i, j));
            }
        }
    }
    AdjacencyMatrix::new(n, &pairs).unwrap()
}

pub fn random_matrix(r: usize, c: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

/// Labels alternate; column 0 of every node is shifted by ±`shift` on top of
/// uniform noise in `[-noise, noise)`, so any positive pooling separates them.
pub fn planted_dataset(
    adj: &AdjacencyMatrix,
    n: usize,
    p: usize,
    shift: f64,
    noise: f64,
    rng: &mut impl Rng,
) -> crate::synth::GraphDataset {
    use crate::synth::{DatasetMeta, GraphDataset, Instance, Label};
    let instances = (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Pos } else { Label::Neg };
            let s = label.sign() as f64 * shift;
            let features = Matrix::from_fn(adj.n_nodes(), p, |_, c| {
                rng.random_range(-noise..noise) + if c == 0 { s } else { 0.0 }
            });
            Instance { features, label }
        })
        .collect();
    GraphDataset::new(adj.clone(), instances, None, DatasetMeta::default()).unwrap()
}

/// Node 0 hangs off node 1 and alone carries the label in its single feature;
/// the other nodes hold small label-free noise. Only edge (0,1) transports
/// the signal.
pub fn single_edge_dataset(n_nodes: usize, n: usize, rng: &mut impl Rng) -> crate::synth::GraphDataset {
    use crate::synth::{DatasetMeta, GraphDataset, Instance, Label};
    let rest = random_connected(n_nodes - 1, 0.35, rng);
    let mut pairs = vec![(0, 1)];
    pairs.extend(rest.edges().iter().map(|&(i, j)| (i + 1, j + 1)));
    let adj = AdjacencyMatrix::new(n_nodes, &pairs).unwrap();
    let instances = (0..n)
        .map(|i| {
            let label = if i % 2 == 0 { Label::Pos } else { Label::Neg };
            let s = label.sign() as f64;
            let features = Matrix::from_fn(n_nodes, 1, |r, _| {
                if r == 0 {
                    s * rng.random_range(0.5..1.5)
                } else {
                    rng.random_range(-0.05..0.05)
                }
            });
            Instance { features, label }
        })
        .collect();
    GraphDataset::new(adj, instances, None, DatasetMeta::default()).unwrap()
}
