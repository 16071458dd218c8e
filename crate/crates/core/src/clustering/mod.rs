//! Bottom-up discovery of discussion-move clusters from utterance embeddings.
//!
//! The chain is: [`load_embeddings`] → [`pca_reduce`] → [`hdbscan_fit`] →
//! [`merge_clusters`], with [`ctfidf_keywords`] as an interpretability aid.
//! Every step is deterministic; ties are broken by ascending utterance id.

mod embeddings;
mod hdbscan;
mod keywords;
mod merge;
mod pca;

use std::collections::{BTreeMap, HashMap};
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use embeddings::{load_embeddings, write_embeddings, EmbeddingSet};
pub use hdbscan::hdbscan_fit;
pub use keywords::{ctfidf_keywords, KeywordTable};
pub use merge::merge_clusters;
pub use pca::{pca_reduce, PcaProjection};

/// Label of points that belong to no cluster.
pub const NOISE: i32 = -1;

pub const DEFAULT_MIN_CLUSTER_SIZE: usize = 15;
pub const DEFAULT_MERGE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_PCA_DIMS: usize = 10;

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("vector for {utt_id:?} has dimension {found}, expected {expected}")]
    DimensionMismatch {
        utt_id: String,
        expected: usize,
        found: usize,
    },
    #[error("no embedding for coded utterance {0:?}")]
    MissingUtterance(String),
    #[error("embedding for unknown utterance {0:?}")]
    UnknownUtterance(String),
    #[error("non-finite value in vector for {0:?}")]
    NonFiniteValue(String),
    #[error("duplicate embedding for {0:?}")]
    DuplicateId(String),
    #[error("schema violation at row {row}: {reason}")]
    SchemaViolation { row: usize, reason: String },
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("target dimension {target} not in 1..={dim}")]
    InvalidTargetDim { target: usize, dim: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no clustered utterance carries text")]
    NoTextAvailable,
}

impl ClusterError {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            ClusterError::MissingFile(path.to_path_buf())
        } else {
            ClusterError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterParams {
    pub min_cluster_size: usize,
    pub min_samples: usize,
    pub merge_threshold: Option<f64>,
    pub reduced_dim: usize,
    pub normalized: bool,
}

/// Conditions worth surfacing that are not failures.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ClusterDiagnostic {
    /// Fewer points than `min_cluster_size`; everything is noise.
    TooFewPoints { n: usize },
    /// Coincident points were present; distances were floored.
    DegenerateMetric { duplicate_pairs: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeStep {
    pub merged: [i32; 2],
    pub into: i32,
    pub similarity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    /// Utterance ids, ascending.
    pub ids: Vec<String>,
    /// Cluster id per utterance, [`NOISE`] for unclustered points.
    pub labels: Vec<i32>,
    pub centroids: BTreeMap<i32, Vec<f64>>,
    pub sizes: BTreeMap<i32, usize>,
    pub merge_log: Vec<MergeStep>,
    pub params: ClusterParams,
    #[serde(default)]
    pub diagnostics: Vec<ClusterDiagnostic>,
}

impl ClusterModel {
    pub fn n_clusters(&self) -> usize {
        self.centroids.len()
    }

    pub fn cluster_ids(&self) -> impl Iterator<Item = i32> + '_ {
        self.centroids.keys().copied()
    }

    pub fn assignment(&self, utt_id: &str) -> Option<i32> {
        self.ids
            .binary_search_by(|id| id.as_str().cmp(utt_id))
            .ok()
            .map(|i| self.labels[i])
    }

    pub fn assignments(&self) -> impl Iterator<Item = (&str, i32)> {
        self.ids.iter().map(String::as_str).zip(self.labels.iter().copied())
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Writes `utt_id,cluster_id` rows; noise is written as -1.
    pub fn write_assignments_csv(&self, path: &std::path::Path) -> Result<(), ClusterError> {
        let mut w = csv::Writer::from_path(path)
            .map_err(|e| ClusterError::io(path, std::io::Error::other(e)))?;
        let to_io = |e: csv::Error| ClusterError::io(path, std::io::Error::other(e));
        w.write_record(["utt_id", "cluster_id"]).map_err(to_io)?;
        for (id, label) in self.assignments() {
            w.write_record([id, &label.to_string()]).map_err(to_io)?;
        }
        w.flush().map_err(|e| ClusterError::io(path, e))
    }
}

/// Adjusted Rand index between two labelings of the same items.
pub fn adjusted_rand_index<A, B>(a: &[A], b: &[B]) -> f64
where
    A: Eq + std::hash::Hash,
    B: Eq + std::hash::Hash,
{
    assert_eq!(a.len(), b.len(), "labelings differ in length");
    let n = a.len() as f64;
    let mut table: HashMap<(&A, &B), f64> = HashMap::new();
    let mut rows: HashMap<&A, f64> = HashMap::new();
    let mut cols: HashMap<&B, f64> = HashMap::new();
    for (x, y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1.0;
        *rows.entry(x).or_default() += 1.0;
        *cols.entry(y).or_default() += 1.0;
    }
    let pairs = |v: f64| v * (v - 1.0) / 2.0;
    let index: f64 = table.values().copied().map(pairs).sum();
    let sum_a: f64 = rows.values().copied().map(pairs).sum();
    let sum_b: f64 = cols.values().copied().map(pairs).sum();
    let expected = sum_a * sum_b / pairs(n);
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < f64::EPSILON {
        // Both partitions trivial (all-one-cluster or all-singletons).
        return 1.0;
    }
    (index - expected) / (max - expected)
}

pub(crate) fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}
