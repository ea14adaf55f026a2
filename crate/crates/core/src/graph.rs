//! Graph structure, symmetric normalization and sparse Laplacian powers.

use crate::linalg::Matrix;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("node {0} has no incident edges")]
    IsolatedNode(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },
    #[error("invalid edge ({0}, {1}): {2}")]
    InvalidEdge(usize, usize, &'static str),
    #[error("a graph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("power must be at least 1")]
    ZeroPower,
}

/// Feature matrices are plain dense matrices with one row per node.
pub type FeatureMatrix = Matrix;

/// Undirected, loop-free, unweighted graph.
///
/// Edges are kept as `(i, j)` with `i < j`, sorted lexicographically.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyMatrix {
    n_nodes: usize,
    edges: Vec<(usize, usize)>,
    neighbors: Vec<Vec<usize>>,
}

impl AdjacencyMatrix {
    /// Builds a graph from unordered pairs. Each pair may appear once in
    /// either orientation; loops, out-of-range indices and duplicates are
    /// rejected.
    pub fn new(n_nodes: usize, pairs: &[(usize, usize)]) -> Result<Self, GraphError> {
        if n_nodes < 2 {
            return Err(GraphError::TooFewNodes(n_nodes));
        }
        let mut edges = Vec::with_capacity(pairs.len());
        for &(i, j) in pairs {
            if i == j {
                return Err(GraphError::InvalidEdge(i, j, "self-loop"));
            }
            if i >= n_nodes || j >= n_nodes {
                return Err(GraphError::InvalidEdge(i, j, "node index out of range"));
            }
            edges.push((i.min(j), i.max(j)));
        }
        edges.sort_unstable();
        if let Some(w) = edges.windows(2).find(|w| w[0] == w[1]) {
            return Err(GraphError::InvalidEdge(w[0].0, w[0].1, "duplicate edge"));
        }
        let mut neighbors = vec![Vec::new(); n_nodes];
        for &(i, j) in &edges {
            neighbors[i].push(j);
            neighbors[j].push(i);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Ok(Self { n_nodes, edges, neighbors })
    }

    pub fn complete(n_nodes: usize) -> Result<Self, GraphError> {
        let pairs: Vec<_> = (0..n_nodes).flat_map(|i| (i + 1..n_nodes).map(move |j| (i, j))).collect();
        Self::new(n_nodes, &pairs)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Upper-triangle edge list, lexicographically sorted.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.neighbors[i].len()
    }

    pub fn has_edge(&self, i: usize, j: usize) -> bool {
        self.neighbors[i].binary_search(&j).is_ok()
    }

    /// Position of `(min(i,j), max(i,j))` in [`Self::edges`].
    pub fn edge_index(&self, i: usize, j: usize) -> Option<usize> {
        self.edges.binary_search(&(i.min(j), i.max(j))).ok()
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n_nodes, self.n_nodes);
        for &(i, j) in &self.edges {
            m[(i, j)] = 1.0;
            m[(j, i)] = 1.0;
        }
        m
    }

    /// Relabels nodes so that node `i` becomes `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Self {
        assert_eq!(perm.len(), self.n_nodes);
        let pairs: Vec<_> = self.edges.iter().map(|&(i, j)| (perm[i], perm[j])).collect();
        Self::new(self.n_nodes, &pairs).expect("permutation of a valid graph is valid")
    }
}

/// Sparse symmetric operator `D^{-1/2} A D^{-1/2}` in compressed-row form.
///
/// The same type holds the weighted variant produced by [`masked_laplacian`];
/// there the stored values may be zero on part of the pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedLaplacian {
    n_nodes: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedLaplacian {
    fn from_pattern(a: &AdjacencyMatrix, mut value: impl FnMut(usize, usize) -> f64) -> Self {
        let n = a.n_nodes();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(2 * a.n_edges());
        let mut values = Vec::with_capacity(2 * a.n_edges());
        row_ptr.push(0);
        for i in 0..n {
            for &j in a.neighbors(i) {
                col_idx.push(j);
                values.push(value(i, j));
            }
            row_ptr.push(col_idx.len());
        }
        Self { n_nodes: n, row_ptr, col_idx, values }
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let row = &self.col_idx[self.row_ptr[i]..self.row_ptr[i + 1]];
        match row.binary_search(&j) {
            Ok(pos) => self.values[self.row_ptr[i] + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.n_nodes, self.n_nodes);
        for i in 0..self.n_nodes {
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                m[(i, self.col_idx[p])] = self.values[p];
            }
        }
        m
    }

    /// One sparse product `L · X`.
    pub fn apply(&self, x: &Matrix) -> Result<Matrix, GraphError> {
        if x.rows() != self.n_nodes {
            return Err(GraphError::DimensionMismatch {
                expected: format!("{} rows", self.n_nodes),
                got: format!("{} rows", x.rows()),
            });
        }
        let cols = x.cols();
        let mut out = Matrix::zeros(self.n_nodes, cols);
        for i in 0..self.n_nodes {
            let out_row = out.row_mut(i);
            for p in self.row_ptr[i]..self.row_ptr[i + 1] {
                let w = self.values[p];
                for (o, &v) in out_row.iter_mut().zip(x.row(self.col_idx[p])) {
                    *o += w * v;
                }
            }
        }
        Ok(out)
    }

    /// Row vector product `vᵀ L`, used for pooled embeddings.
    pub fn apply_left(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(v.len(), self.n_nodes);
        // L is symmetric, so vᵀL = (L v)ᵀ.
        (0..self.n_nodes)
            .map(|i| (self.row_ptr[i]..self.row_ptr[i + 1]).map(|p| self.values[p] * v[self.col_idx[p]]).sum())
            .collect()
    }
}

/// `L_ij = a_ij / sqrt(d_i d_j)`. Errors on isolated nodes.
pub fn normalized_laplacian(a: &AdjacencyMatrix) -> Result<NormalizedLaplacian, GraphError> {
    if let Some(i) = (0..a.n_nodes()).find(|&i| a.degree(i) == 0) {
        return Err(GraphError::IsolatedNode(i));
    }
    let deg: Vec<f64> = (0..a.n_nodes()).map(|i| a.degree(i) as f64).collect();
    // d_i * d_j commutes, so (i,j) and (j,i) are bit-identical.
    Ok(NormalizedLaplacian::from_pattern(a, |i, j| 1.0 / (deg[i] * deg[j]).sqrt()))
}

/// `L^k X` by `k` successive sparse products.
pub fn laplacian_power_apply(
    l: &NormalizedLaplacian,
    k: usize,
    x: &FeatureMatrix,
) -> Result<FeatureMatrix, GraphError> {
    if k == 0 {
        return Err(GraphError::ZeroPower);
    }
    let mut p = l.apply(x)?;
    for _ in 1..k {
        p = l.apply(&p)?;
    }
    Ok(p)
}

pub const DEFAULT_DEGREE_FLOOR: f64 = 1e-8;

/// Weighted normalization `w_ij / sqrt((d_i+δ)(d_j+δ))` with `d_i = Σ_j w_ij`.
///
/// Only entries on `a`'s pattern are read from `edge_weights`.
pub fn masked_laplacian(
    a: &AdjacencyMatrix,
    edge_weights: &Matrix,
    degree_floor: f64,
) -> Result<NormalizedLaplacian, GraphError> {
    let n = a.n_nodes();
    if edge_weights.shape() != (n, n) {
        return Err(GraphError::DimensionMismatch {
            expected: format!("{n}x{n}"),
            got: format!("{}x{}", edge_weights.rows(), edge_weights.cols()),
        });
    }
    let deg: Vec<f64> =
        (0..n).map(|i| a.neighbors(i).iter().map(|&j| edge_weights[(i, j)]).sum::<f64>() + degree_floor).collect();
    Ok(NormalizedLaplacian::from_pattern(a, |i, j| {
        let w = edge_weights[(i, j)];
        if w == 0.0 {
            0.0
        } else {
            w / (deg[i] * deg[j]).sqrt()
        }
    }))
}

/// Dense `D̃^{-1/2}(A+I)D̃^{-1/2}`, the self-loop augmented operator.
pub fn augmented_laplacian_dense(a: &AdjacencyMatrix) -> Matrix {
    let n = a.n_nodes();
    let deg: Vec<f64> = (0..n).map(|i| a.degree(i) as f64 + 1.0).collect();
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = 1.0 / deg[i];
        for &j in a.neighbors(i) {
            m[(i, j)] = 1.0 / (deg[i] * deg[j]).sqrt();
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::{random_connected, random_matrix};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn path2() -> AdjacencyMatrix {
        AdjacencyMatrix::new(2, &[(0, 1)]).unwrap()
    }

    fn triangle() -> AdjacencyMatrix {
        AdjacencyMatrix::new(3, &[(0, 1), (1, 2), (0, 2)]).unwrap()
    }

    fn dense_power(m: &Matrix, k: usize) -> Matrix {
        let mut p = m.clone();
        for _ in 1..k {
            p = p.matmul(m);
        }
        p
    }

    #[test]
    fn path2_laplacian_is_adjacency() {
        let l = normalized_laplacian(&path2()).unwrap();
        assert_eq!(l.to_dense(), path2().to_dense());
    }

    #[test]
    fn triangle_laplacian_is_half_adjacency() {
        let l = normalized_laplacian(&triangle()).unwrap();
        assert_eq!(l.to_dense(), triangle().to_dense().scale(0.5));
    }

    #[test]
    fn star_laplacian() {
        let star = AdjacencyMatrix::new(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let l = normalized_laplacian(&star).unwrap();
        for j in 1..4 {
            assert_abs_diff_eq!(l.get(0, j), 0.577_350_3, epsilon = 1e-7);
            assert_eq!(l.get(0, j), l.get(j, 0));
        }
    }

    #[test]
    fn isolated_node_is_rejected() {
        let a = AdjacencyMatrix::new(3, &[(0, 1)]).unwrap();
        assert_eq!(normalized_laplacian(&a), Err(GraphError::IsolatedNode(2)));
    }

    #[test]
    fn invalid_edges() {
        assert!(matches!(AdjacencyMatrix::new(3, &[(1, 1)]), Err(GraphError::InvalidEdge(..))));
        assert!(matches!(AdjacencyMatrix::new(3, &[(0, 1), (1, 0)]), Err(GraphError::InvalidEdge(0, 1, _))));
        assert!(matches!(AdjacencyMatrix::new(3, &[(0, 5)]), Err(GraphError::InvalidEdge(..))));
        assert_eq!(AdjacencyMatrix::new(1, &[]), Err(GraphError::TooFewNodes(1)));
    }

    #[test]
    fn path2_square_is_identity() {
        let l = normalized_laplacian(&path2()).unwrap();
        let x = Matrix::from_rows(&[vec![1.5, -2.0, 3.0], vec![0.25, 4.0, -1.0]]);
        assert_eq!(laplacian_power_apply(&l, 2, &x).unwrap(), x);
    }

    #[test]
    fn triangle_square_by_hand() {
        let l = normalized_laplacian(&triangle()).unwrap();
        let got = laplacian_power_apply(&l, 2, &Matrix::identity(3)).unwrap();
        let want = Matrix::from_rows(&[vec![2.0, 1.0, 1.0], vec![1.0, 2.0, 1.0], vec![1.0, 1.0, 2.0]]).scale(0.25);
        assert!(got.max_abs_diff(&want) < 1e-15);
    }

    #[test]
    fn power_matches_dense_oracle_on_8_nodes() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_connected(8, 0.3, &mut rng);
        let l = normalized_laplacian(&a).unwrap();
        let x = random_matrix(8, 4, &mut rng);
        let got = laplacian_power_apply(&l, 3, &x).unwrap();
        let want = dense_power(&l.to_dense(), 3).matmul(&x);
        assert!(got.max_abs_diff(&want) < 1e-10);
    }

    #[test]
    fn power_errors() {
        let l = normalized_laplacian(&triangle()).unwrap();
        assert_eq!(laplacian_power_apply(&l, 0, &Matrix::zeros(3, 1)), Err(GraphError::ZeroPower));
        assert!(matches!(
            laplacian_power_apply(&l, 1, &Matrix::zeros(4, 1)),
            Err(GraphError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn masked_identity_and_zero() {
        let a = triangle();
        let ones = a.to_dense();
        let masked = masked_laplacian(&a, &ones, 0.0).unwrap();
        assert_eq!(masked, normalized_laplacian(&a).unwrap());
        let zero = masked_laplacian(&a, &Matrix::zeros(3, 3), 0.0).unwrap();
        assert_eq!(zero.to_dense(), Matrix::zeros(3, 3));
    }

    #[test]
    fn masked_triangle_half_edge() {
        let a = triangle();
        let mut w = a.to_dense();
        w[(0, 1)] = 0.5;
        w[(1, 0)] = 0.5;
        let l = masked_laplacian(&a, &w, 0.0).unwrap();
        // scalar oracle: d = [1.5, 1.5, 2]
        let d = [1.5_f64, 1.5, 2.0];
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { w[(i, j)] / (d[i] * d[j]).sqrt() };
                assert_abs_diff_eq!(l.get(i, j), want, epsilon = 1e-15);
            }
        }
        assert_abs_diff_eq!(l.get(0, 1), 0.5 / 1.5, epsilon = 1e-15);
    }

    #[test]
    fn augmented_rows() {
        let l = augmented_laplacian_dense(&path2());
        assert_eq!(l, Matrix::filled(2, 2, 0.5));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn laplacian_symmetric_bitwise_and_spectrum_bounded(seed in any::<u64>(), n in 2usize..=12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_connected(n, 0.35, &mut rng);
            let l = normalized_laplacian(&a).unwrap();
            let dense = l.to_dense();
            for i in 0..n {
                for j in 0..n {
                    prop_assert_eq!(dense[(i, j)].to_bits(), dense[(j, i)].to_bits());
                    prop_assert_eq!(dense[(i, j)] != 0.0, a.has_edge(i, j));
                }
            }
            let eig = dense.to_nalgebra().symmetric_eigenvalues();
            let radius = eig.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            prop_assert!(radius <= 1.0 + 1e-9, "spectral radius {}", radius);
        }

        #[test]
        fn power_apply_matches_dense(seed in any::<u64>(), n in 2usize..=12, k in 1usize..=5) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_connected(n, 0.3, &mut rng);
            let l = normalized_laplacian(&a).unwrap();
            let x = random_matrix(n, 3, &mut rng);
            let got = laplacian_power_apply(&l, k, &x).unwrap();
            let want = dense_power(&l.to_dense(), k).matmul(&x);
            prop_assert!(got.max_abs_diff(&want) <= 1e-10);
        }

        #[test]
        fn permutation_equivariance(seed in any::<u64>(), n in 2usize..=12) {
            use rand::seq::SliceRandom;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = random_connected(n, 0.3, &mut rng);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let l = normalized_laplacian(&a).unwrap().to_dense();
            let lp = normalized_laplacian(&a.permute(&perm)).unwrap().to_dense();
            for i in 0..n {
                for j in 0..n {
                    prop_assert!((lp[(perm[i], perm[j])] - l[(i, j)]).abs() <= 1e-12);
                }
            }
        }
    }
}
