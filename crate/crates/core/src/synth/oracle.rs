use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::Session;

/// Brute-force reference counts keyed by label text.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounts {
    pub pairs: BTreeMap<(String, String), u64>,
    pub tallies: BTreeMap<String, u64>,
}

/// Enumerates every ordered pair `(s, t)` with `s < t` and `t − s < window`
/// over the session's coded utterances.
pub fn oracle_counts(session: &Session, window: usize) -> OracleCounts {
    let codes: Vec<&str> = session.utterances.iter().filter_map(|u| u.code.as_deref()).collect();
    let mut out = OracleCounts::default();
    for t in 0..codes.len() {
        *out.tallies.entry(codes[t].to_string()).or_insert(0) += 1;
        for s in 0..t {
            if t - s < window {
                *out.pairs.entry((codes[s].to_string(), codes[t].to_string())).or_insert(0) += 1;
            }
        }
    }
    out
}
