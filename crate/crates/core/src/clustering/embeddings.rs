use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ClusterError;
use crate::corpus::Corpus;

/// Dense per-utterance vectors of one fixed dimension, ordered by utterance id.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    normalized: bool,
}

#[derive(Serialize, Deserialize)]
struct Row {
    utt_id: String,
    vector: Vec<f64>,
}

impl EmbeddingSet {
    pub fn new(
        entries: impl IntoIterator<Item = (String, Vec<f64>)>,
    ) -> Result<Self, ClusterError> {
        let mut entries: Vec<(String, Vec<f64>)> = entries.into_iter().collect();
        entries.sort_by(|a, b| a.0.cmp(&b.0));
        let dim = entries.first().map_or(0, |e| e.1.len());
        for (i, (id, v)) in entries.iter().enumerate() {
            if i > 0 && entries[i - 1].0 == *id {
                return Err(ClusterError::DuplicateId(id.clone()));
            }
            if v.len() != dim {
                return Err(ClusterError::DimensionMismatch {
                    utt_id: id.clone(),
                    expected: dim,
                    found: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(ClusterError::NonFiniteValue(id.clone()));
            }
        }
        if dim == 0 && !entries.is_empty() {
            return Err(ClusterError::DimensionMismatch {
                utt_id: entries[0].0.clone(),
                expected: 1,
                found: 0,
            });
        }
        let (ids, vectors) = entries.into_iter().unzip();
        Ok(Self {
            dim,
            ids,
            vectors,
            normalized: false,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn get(&self, utt_id: &str) -> Option<&[f64]> {
        self.ids
            .binary_search_by(|id| id.as_str().cmp(utt_id))
            .ok()
            .map(|i| self.vectors[i].as_slice())
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Scales every non-zero vector to unit L2 norm.
    pub fn l2_normalized(mut self) -> Self {
        for v in &mut self.vectors {
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.iter_mut().for_each(|x| *x /= norm);
            }
        }
        self.normalized = true;
        self
    }

    pub(crate) fn from_parts(ids: Vec<String>, vectors: Vec<Vec<f64>>, dim: usize, normalized: bool) -> Self {
        Self {
            dim,
            ids,
            vectors,
            normalized,
        }
    }
}

/// Reads `{"utt_id", "vector"}` JSON lines and checks them against the corpus:
/// every coded utterance needs a vector, and no vector may name an unknown utterance.
pub fn load_embeddings(
    path: impl AsRef<Path>,
    corpus: &Corpus,
    normalize: bool,
) -> Result<EmbeddingSet, ClusterError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| ClusterError::io(path, e))?;
    let mut entries = Vec::new();
    let mut dim: Option<usize> = None;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| ClusterError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Row = serde_json::from_str(&line).map_err(|e| ClusterError::SchemaViolation {
            row: i + 1,
            reason: e.to_string(),
        })?;
        match dim {
            None => dim = Some(row.vector.len()),
            Some(d) if d != row.vector.len() => {
                return Err(ClusterError::DimensionMismatch {
                    utt_id: row.utt_id,
                    expected: d,
                    found: row.vector.len(),
                })
            }
            _ => {}
        }
        entries.push((row.utt_id, row.vector));
    }

    let known: HashSet<&str> = corpus.utterances().map(|u| u.utt_id.as_str()).collect();
    if let Some((id, _)) = entries.iter().find(|(id, _)| !known.contains(id.as_str())) {
        return Err(ClusterError::UnknownUtterance(id.clone()));
    }
    let set = EmbeddingSet::new(entries)?;
    for u in corpus.utterances().filter(|u| u.code.is_some()) {
        if set.get(&u.utt_id).is_none() {
            return Err(ClusterError::MissingUtterance(u.utt_id.clone()));
        }
    }
    Ok(if normalize { set.l2_normalized() } else { set })
}

pub fn write_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<(), ClusterError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| ClusterError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for (id, v) in set.ids.iter().zip(&set.vectors) {
        let line = serde_json::to_string(&Row {
            utt_id: id.clone(),
            vector: v.clone(),
        })
        .expect("row serializes");
        writeln!(w, "{line}").map_err(|e| ClusterError::io(path, e))?;
    }
    w.flush().map_err(|e| ClusterError::io(path, e))
}
