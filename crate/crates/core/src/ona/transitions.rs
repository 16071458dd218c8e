use serde::{Deserialize, Serialize};

use super::OnaError;
use crate::corpus::{MoveScheme, Session};

/// Directed transition counts of one unit, flattened row-major as
/// `counts[source * k + target]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionVector {
    pub unit_id: String,
    pub k: usize,
    pub counts: Vec<u64>,
    pub normalized: Option<Vec<f64>>,
    /// Set by [`sphere_normalize`] when every count is zero.
    pub zero: bool,
}

impl TransitionVector {
    pub fn new(unit_id: String, k: usize, counts: Vec<u64>) -> Self {
        assert_eq!(counts.len(), k * k, "counts must be k × k");
        Self {
            unit_id,
            k,
            counts,
            normalized: None,
            zero: false,
        }
    }

    pub fn get(&self, source: usize, target: usize) -> u64 {
        self.counts[source * self.k + target]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn self_transitions(&self) -> Vec<u64> {
        (0..self.k).map(|i| self.get(i, i)).collect()
    }
}

/// Number of ordered pairs a window of `window` emits over `len` utterances:
/// Σ_t min(window − 1, t).
pub fn window_pair_count(len: usize, window: usize) -> u64 {
    (0..len).map(|t| t.min(window - 1) as u64).sum()
}

/// Accumulates pairs `(codes[s] → codes[t])` for every `s` in the preceding
/// `window − 1` positions, using a running histogram of the window.
pub fn accumulate_codes(codes: &[usize], k: usize, window: usize) -> Vec<u64> {
    let mut counts = vec![0u64; k * k];
    let mut hist = vec![0u64; k];
    for (t, &target) in codes.iter().enumerate() {
        for (source, &h) in hist.iter().enumerate() {
            counts[source * k + target] += h;
        }
        hist[target] += 1;
        if t + 1 >= window {
            hist[codes[t + 1 - window]] -= 1;
        }
    }
    counts
}

pub fn accumulate_transitions(session: &Session, scheme: &MoveScheme, window: usize) -> Result<TransitionVector, OnaError> {
    if window < 2 {
        return Err(OnaError::InvalidWindow(window));
    }
    let codes = session
        .utterances
        .iter()
        .map(|u| {
            let code = u.code.as_deref().ok_or_else(|| OnaError::UncodedUtterance(u.utt_id.clone()))?;
            scheme.index_of(code).ok_or_else(|| OnaError::UnknownLabel(code.to_string()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let k = scheme.len();
    Ok(TransitionVector::new(session.session_id.clone(), k, accumulate_codes(&codes, k, window)))
}

/// Divides by the L2 norm; an all-zero vector is flagged and left unnormalized.
pub fn sphere_normalize(mut v: TransitionVector) -> TransitionVector {
    let norm = v.counts.iter().map(|&c| (c as f64) * (c as f64)).sum::<f64>().sqrt();
    if norm == 0.0 {
        v.zero = true;
        v.normalized = None;
    } else {
        v.zero = false;
        v.normalized = Some(v.counts.iter().map(|&c| c as f64 / norm).collect());
    }
    v
}
