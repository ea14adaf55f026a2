//! Interpretation metrics against a known set of important nodes.
//!
//! An edge is redundant when at least one endpoint is unimportant. AM divides
//! the redundant edges kept by an explanation by every redundant node pair the
//! graph could hold, `C(N,2) - C(|V0|,2)`; RM is the fraction of the graph's
//! redundant edges the explanation removed.

use crate::graph::AdjacencyMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("metric undefined: {0}")]
    UndefinedMetric(&'static str),
    #[error("node {0} is outside the graph")]
    NodeOutOfRange(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedundantCounts {
    pub before: usize,
    pub after: usize,
    pub possible: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretationMetrics {
    pub recovery_rate: f64,
    pub am: f64,
    pub rm: f64,
    pub counts: RedundantCounts,
}

fn choose2(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

/// `|kept ∩ important| / |important|`.
pub fn node_recovery_rate(kept: &[usize], important: &[usize]) -> Result<f64, MetricsError> {
    if important.is_empty() {
        return Err(MetricsError::UndefinedMetric("no important nodes"));
    }
    let mut truth = important.to_vec();
    truth.sort_unstable();
    truth.dedup();
    let mut hit = kept.to_vec();
    hit.sort_unstable();
    hit.dedup();
    let found = hit.iter().filter(|v| truth.binary_search(v).is_ok()).count();
    Ok(found as f64 / truth.len() as f64)
}

pub fn redundant_edge_counts(
    adjacency: &AdjacencyMatrix,
    kept_edges: &[(usize, usize)],
    important: &[usize],
) -> Result<RedundantCounts, MetricsError> {
    let n = adjacency.n_nodes();
    let mut is_imp = vec![false; n];
    for &v in important {
        *is_imp.get_mut(v).ok_or(MetricsError::NodeOutOfRange(v))? = true;
    }
    let n_imp = is_imp.iter().filter(|&&b| b).count();
    let redundant = |&(i, j): &(usize, usize)| !(is_imp[i] && is_imp[j]);
    for &(i, j) in kept_edges {
        if i >= n || j >= n {
            return Err(MetricsError::NodeOutOfRange(i.max(j)));
        }
    }
    Ok(RedundantCounts {
        before: adjacency.edges().iter().filter(|e| redundant(e)).count(),
        after: kept_edges.iter().filter(|e| redundant(e)).count(),
        possible: choose2(n) - choose2(n_imp),
    })
}

pub fn am_metric(after: usize, possible: usize) -> Result<f64, MetricsError> {
    if possible == 0 {
        return Err(MetricsError::UndefinedMetric("AM with no possible redundant pairs"));
    }
    Ok(after as f64 / possible as f64)
}

pub fn rm_metric(before: usize, after: usize) -> Result<f64, MetricsError> {
    if before == 0 {
        return Err(MetricsError::UndefinedMetric("RM with no redundant edges in the graph"));
    }
    Ok((before as f64 - after as f64) / before as f64)
}

/// All three metrics for one explanation.
pub fn interpretation_metrics(
    adjacency: &AdjacencyMatrix,
    kept_edges: &[(usize, usize)],
    kept_nodes: &[usize],
    important: &[usize],
) -> Result<InterpretationMetrics, MetricsError> {
    let counts = redundant_edge_counts(adjacency, kept_edges, important)?;
    Ok(InterpretationMetrics {
        recovery_rate: node_recovery_rate(kept_nodes, important)?,
        am: am_metric(counts.after, counts.possible)?,
        rm: rm_metric(counts.before, counts.after)?,
        counts,
    })
}
