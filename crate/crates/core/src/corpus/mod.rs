//! Coded discussion corpora: groups, sessions and ordered coded utterances.

mod io;
mod scheme;
mod validate;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{load_corpus, write_corpus};
pub use scheme::{load_scheme, Category, MoveScheme, BUILTIN_MOVES14, BUILTIN_SEDA8};
pub use validate::{validate_corpus, Finding, Severity, ValidationReport};

/// Lowest and highest Integrative Complexity rating.
pub const IC_MIN: f64 = 1.0;
pub const IC_MAX: f64 = 7.0;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("missing file: {0}")]
    MissingFile(PathBuf),
    #[error("schema violation at row {row}: {reason}")]
    SchemaViolation { row: usize, reason: String },
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("duplicate id {0:?}")]
    DuplicateId(String),
    #[error("unknown builtin scheme {0:?} (expected moves14 or seda8)")]
    UnknownBuiltin(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CorpusError {
    pub(crate) fn schema(row: usize, reason: impl Into<String>) -> Self {
        CorpusError::SchemaViolation {
            row,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        if source.kind() == std::io::ErrorKind::NotFound {
            CorpusError::MissingFile(path.to_path_buf())
        } else {
            CorpusError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Utterance {
    pub utt_id: String,
    pub session_id: String,
    pub speaker_id: String,
    pub turn_index: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default)]
    pub code: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub group_id: String,
    pub scenario_id: u8,
    pub utterances: Vec<Utterance>,
    pub ic_score: Option<f64>,
}

impl Session {
    /// Codes of the coded utterances, in turn order.
    pub fn codes(&self) -> impl Iterator<Item = &str> {
        self.utterances.iter().filter_map(|u| u.code.as_deref())
    }

    pub fn coded_len(&self) -> usize {
        self.codes().count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub scheme: MoveScheme,
    pub groups: BTreeSet<String>,
    pub sessions: Vec<Session>,
}

impl Corpus {
    pub fn utterances(&self) -> impl Iterator<Item = &Utterance> {
        self.sessions.iter().flat_map(|s| s.utterances.iter())
    }

    pub fn session(&self, id: &str) -> Option<&Session> {
        self.sessions.iter().find(|s| s.session_id == id)
    }

    pub fn scored_sessions(&self) -> impl Iterator<Item = &Session> {
        self.sessions.iter().filter(|s| s.ic_score.is_some())
    }
}

/// Per-label counts for one session, in scheme label order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrequencyVector {
    pub counts: Vec<u64>,
}

impl FrequencyVector {
    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Counts each label's occurrences among the session's coded utterances.
pub fn move_frequencies(
    session: &Session,
    scheme: &MoveScheme,
) -> Result<FrequencyVector, CorpusError> {
    let mut counts = vec![0u64; scheme.len()];
    for code in session.codes() {
        let idx = scheme
            .index_of(code)
            .ok_or_else(|| CorpusError::UnknownLabel(code.to_string()))?;
        counts[idx] += 1;
    }
    Ok(FrequencyVector { counts })
}
