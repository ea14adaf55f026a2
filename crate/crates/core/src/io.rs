//! JSON persistence for datasets, trained models and explanations.
//!
//! Every document carries `schema_version` and a free-form `provenance`
//! object holding the configuration that produced it. Floats are written with
//! shortest round-trip formatting, so `load(save(x))` is bit-identical.

use crate::estimator::gcn::GcnBaseline;
use crate::estimator::{CriticModel, Diagnostics, Head, MaGNetModel, Pooling, WeightMode};
use crate::graph::AdjacencyMatrix;
use crate::interpreter::Explanation;
use crate::linalg::Matrix;
use crate::synth::{DatasetMeta, GraphDataset, Instance, Label};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

pub const LABEL_CONVENTION: &str = "class 0 is -1, class 1 is +1";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("schema error at `{path}`: {message}")]
    SchemaError { path: String, message: String },
    #[error("schema version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u64, expected: u32 },
}

type Result<T> = std::result::Result<T, IoError>;

fn schema(path: impl Into<String>, message: impl Into<String>) -> IoError {
    IoError::SchemaError { path: path.into(), message: message.into() }
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| IoError::Io { path: path.display().to_string(), source })
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|source| IoError::Io { path: path.display().to_string(), source })
}

fn to_json<T: Serialize>(doc: &T) -> String {
    let mut s = serde_json::to_string_pretty(doc).expect("documents serialise");
    s.push('\n');
    s
}

/// Parses text, checks the version, then deserialises with a field path on
/// failure.
fn parse_versioned<T: DeserializeOwned>(text: &str) -> Result<T> {
    let value: Value = serde_json::from_str(text).map_err(|e| schema("", format!("not a JSON document: {e}")))?;
    let version = value
        .get("schema_version")
        .ok_or_else(|| schema("schema_version", "missing"))?
        .as_u64()
        .ok_or_else(|| schema("schema_version", "expected an unsigned integer"))?;
    if version != u64::from(SCHEMA_VERSION) {
        return Err(IoError::VersionMismatch { found: version, expected: SCHEMA_VERSION });
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        schema(path, e.into_inner().to_string())
    })
}

fn check_matrix(path: &str, m: &Matrix, rows: usize, cols: usize) -> Result<()> {
    if m.as_slice().len() != m.rows() * m.cols() {
        return Err(schema(path, format!("{}×{} matrix holds {} values", m.rows(), m.cols(), m.as_slice().len())));
    }
    if m.shape() != (rows, cols) {
        return Err(schema(path, format!("expected {rows}×{cols}, got {}×{}", m.rows(), m.cols())));
    }
    if !m.is_finite() {
        return Err(schema(path, "non-finite entry"));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetDoc {
    schema_version: u32,
    n_nodes: usize,
    feat_dim: usize,
    adjacency: Vec<[usize; 2]>,
    important_nodes: Option<Vec<usize>>,
    #[serde(default)]
    meta: DatasetMeta,
    #[serde(default)]
    provenance: Value,
    instances: Vec<InstanceDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    features: Vec<f64>,
    label: i64,
}

pub fn dataset_to_json(data: &GraphDataset, provenance: &Value) -> String {
    let doc = DatasetDoc {
        schema_version: SCHEMA_VERSION,
        n_nodes: data.n_nodes(),
        feat_dim: data.feat_dim(),
        adjacency: data.adjacency().edges().iter().map(|&(i, j)| [i, j]).collect(),
        important_nodes: data.important_nodes().map(<[usize]>::to_vec),
        meta: data.meta.clone(),
        provenance: provenance.clone(),
        instances: data
            .instances()
            .iter()
            .map(|i| InstanceDoc { features: i.features.as_slice().to_vec(), label: i.label.sign() })
            .collect(),
    };
    to_json(&doc)
}

pub fn dataset_from_json(text: &str) -> Result<GraphDataset> {
    let doc: DatasetDoc = parse_versioned(text)?;
    let n = doc.n_nodes;
    let mut seen = std::collections::BTreeSet::new();
    for (k, &[i, j]) in doc.adjacency.iter().enumerate() {
        let at = format!("adjacency[{k}]");
        if i >= n || j >= n {
            return Err(schema(at, format!("node index out of range for {n} nodes")));
        }
        if i >= j {
            return Err(schema(at, format!("edges are listed as [i, j] with i < j, got [{i}, {j}]")));
        }
        if !seen.insert((i, j)) {
            return Err(schema(at, format!("duplicate edge [{i}, {j}]")));
        }
    }
    let pairs: Vec<(usize, usize)> = doc.adjacency.iter().map(|&[i, j]| (i, j)).collect();
    let adjacency = AdjacencyMatrix::new(n, &pairs).map_err(|e| schema("adjacency", e.to_string()))?;
    if let Some(v0) = &doc.important_nodes {
        if let Some(k) = v0.iter().position(|&v| v >= n) {
            return Err(schema(format!("important_nodes[{k}]"), "node index out of range"));
        }
    }
    let mut instances = Vec::with_capacity(doc.instances.len());
    for (k, inst) in doc.instances.into_iter().enumerate() {
        if inst.features.len() != n * doc.feat_dim {
            return Err(schema(
                format!("instances[{k}].features"),
                format!("expected {} values, got {}", n * doc.feat_dim, inst.features.len()),
            ));
        }
        let label = Label::from_sign(inst.label).ok_or_else(|| {
            schema(format!("instances[{k}].label"), format!("labels must be -1 or 1, got {}", inst.label))
        })?;
        instances.push(Instance { features: Matrix::from_vec(n, doc.feat_dim, inst.features), label });
    }
    GraphDataset::new(adjacency, instances, doc.important_nodes, doc.meta)
        .map_err(|e| schema("instances", e.to_string()))
}

pub fn save_dataset(path: &Path, data: &GraphDataset, provenance: &Value) -> Result<()> {
    write_file(path, &dataset_to_json(data, provenance))
}

pub fn load_dataset(path: &Path) -> Result<GraphDataset> {
    dataset_from_json(&read_file(path)?)
}

/// A model file holds either the estimator or the GCN baseline.
#[derive(Debug, Clone, PartialEq)]
pub enum SavedModel {
    Magnet(MaGNetModel),
    Gcn(GcnBaseline),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MagnetDoc {
    schema_version: u32,
    kind: String,
    #[serde(rename = "K")]
    k: usize,
    w_mode: WeightMode,
    pooling: Pooling,
    #[serde(rename = "W")]
    w: Matrix,
    critics: Vec<Matrix>,
    alphas: Vec<f64>,
    head: Head,
    epsilon_min: f64,
    diagnostics: Diagnostics,
    label_convention: String,
    #[serde(default)]
    provenance: Value,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GcnDoc {
    schema_version: u32,
    kind: String,
    w0: Matrix,
    w1: Matrix,
    head: Matrix,
    label_convention: String,
    #[serde(default)]
    provenance: Value,
}

#[derive(Deserialize)]
struct KindProbe {
    kind: Option<String>,
}

pub fn model_to_json(model: &SavedModel, provenance: &Value) -> String {
    match model {
        SavedModel::Magnet(m) => to_json(&MagnetDoc {
            schema_version: SCHEMA_VERSION,
            kind: "magnet".into(),
            k: m.k_orders(),
            w_mode: m.w_mode,
            pooling: m.pooling,
            w: m.actor_w.clone(),
            critics: m.critics.iter().map(|c| c.weights.clone()).collect(),
            alphas: m.alphas.clone(),
            head: m.head.clone(),
            epsilon_min: m.epsilon_min,
            diagnostics: m.diagnostics.clone(),
            label_convention: LABEL_CONVENTION.into(),
            provenance: provenance.clone(),
        }),
        SavedModel::Gcn(g) => to_json(&GcnDoc {
            schema_version: SCHEMA_VERSION,
            kind: "gcn".into(),
            w0: g.w0.clone(),
            w1: g.w1.clone(),
            head: g.head.clone(),
            label_convention: LABEL_CONVENTION.into(),
            provenance: provenance.clone(),
        }),
    }
}

pub fn model_from_json(text: &str) -> Result<SavedModel> {
    let probe: KindProbe = serde_json::from_str(text).map_err(|e| schema("", format!("not a JSON document: {e}")))?;
    match probe.kind.as_deref() {
        Some("magnet") => magnet_from_doc(parse_versioned(text)?).map(SavedModel::Magnet),
        Some("gcn") => gcn_from_doc(parse_versioned(text)?).map(SavedModel::Gcn),
        Some(other) => Err(schema("kind", format!("unknown model kind `{other}`"))),
        None => Err(schema("kind", "missing")),
    }
}

fn check_convention(s: &str) -> Result<()> {
    if s != LABEL_CONVENTION {
        return Err(schema("label_convention", format!("expected `{LABEL_CONVENTION}`, got `{s}`")));
    }
    Ok(())
}

fn magnet_from_doc(doc: MagnetDoc) -> Result<MaGNetModel> {
    check_convention(&doc.label_convention)?;
    let k = doc.k;
    if k == 0 {
        return Err(schema("K", "must be >= 1"));
    }
    if doc.alphas.len() != k {
        return Err(schema("alphas", format!("expected {k} fusion weights, got {}", doc.alphas.len())));
    }
    if let Some(i) = doc.alphas.iter().position(|a| !(a.is_finite() && *a >= 0.0)) {
        return Err(schema(format!("alphas[{i}]"), "fusion weights are finite and non-negative"));
    }
    if doc.critics.len() != k {
        return Err(schema("critics", format!("expected {k} critics, got {}", doc.critics.len())));
    }
    let (p, d) = doc.w.shape();
    check_matrix("W", &doc.w, p, d)?;
    if p == 0 || d == 0 {
        return Err(schema("W", "empty actor weight"));
    }
    for (i, c) in doc.critics.iter().enumerate() {
        check_matrix(&format!("critics[{i}]"), c, d + 1, 2)?;
    }
    match &doc.head {
        Head::Linear { weights } => check_matrix("head.weights", weights, d + 1, 2)?,
        Head::Mlp { hidden, output } => {
            let h = hidden.cols();
            if h == 0 {
                return Err(schema("head.hidden", "hidden layer has no units"));
            }
            check_matrix("head.hidden", hidden, d + 1, h)?;
            check_matrix("head.output", output, h + 1, 2)?;
        }
    }
    if !(doc.epsilon_min > 0.0 && doc.epsilon_min < 0.5) {
        return Err(schema("epsilon_min", "must lie in (0, 0.5)"));
    }
    Ok(MaGNetModel {
        w_mode: doc.w_mode,
        pooling: doc.pooling,
        actor_w: doc.w,
        critics: doc.critics.into_iter().map(|weights| CriticModel { weights }).collect(),
        alphas: doc.alphas,
        head: doc.head,
        epsilon_min: doc.epsilon_min,
        diagnostics: doc.diagnostics,
    })
}

fn gcn_from_doc(doc: GcnDoc) -> Result<GcnBaseline> {
    check_convention(&doc.label_convention)?;
    let (p, h) = doc.w0.shape();
    check_matrix("w0", &doc.w0, p, h)?;
    check_matrix("w1", &doc.w1, h, h)?;
    check_matrix("head", &doc.head, h + 1, 2)?;
    Ok(GcnBaseline { w0: doc.w0, w1: doc.w1, head: doc.head })
}

pub fn save_model(path: &Path, model: &SavedModel, provenance: &Value) -> Result<()> {
    write_file(path, &model_to_json(model, provenance))
}

pub fn load_model(path: &Path) -> Result<SavedModel> {
    model_from_json(&read_file(path)?)
}

#[derive(Serialize, Deserialize)]
struct ExplanationDoc {
    schema_version: u32,
    #[serde(flatten)]
    explanation: Explanation,
    #[serde(default)]
    provenance: Value,
}

pub fn explanation_to_json(e: &Explanation, provenance: &Value) -> String {
    to_json(&ExplanationDoc { schema_version: SCHEMA_VERSION, explanation: e.clone(), provenance: provenance.clone() })
}

pub fn explanation_from_json(text: &str) -> Result<Explanation> {
    parse_versioned::<ExplanationDoc>(text).map(|d| d.explanation)
}

pub fn save_explanation(path: &Path, e: &Explanation, provenance: &Value) -> Result<()> {
    write_file(path, &explanation_to_json(e, provenance))
}

pub fn load_explanation(path: &Path) -> Result<Explanation> {
    explanation_from_json(&read_file(path)?)
}
