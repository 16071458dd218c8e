use std::collections::{BTreeMap, HashMap};

use super::{ClusterError, ClusterModel, NOISE};
use crate::corpus::Corpus;

/// Ranked `(term, weight)` lists per cluster id.
pub type KeywordTable = BTreeMap<i32, Vec<(String, f64)>>;

fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split_whitespace().map(str::to_lowercase)
}

/// Class-based TF-IDF: each cluster's utterances form one document and
/// `weight(t, c) = tf(t, c) · ln(1 + A / f(t))`, where `A` is the mean token
/// count per cluster and `f(t)` the frequency of `t` over all clusters.
/// Ties are broken lexicographically.
pub fn ctfidf_keywords(
    corpus: &Corpus,
    model: &ClusterModel,
    top_k: usize,
) -> Result<KeywordTable, ClusterError> {
    let mut tf: BTreeMap<i32, HashMap<String, u64>> =
        model.cluster_ids().map(|c| (c, HashMap::new())).collect();
    let mut any_text = false;
    for u in corpus.utterances() {
        let Some(text) = &u.text else { continue };
        let Some(c) = model.assignment(&u.utt_id) else { continue };
        if c == NOISE {
            continue;
        }
        any_text = true;
        let counts = tf.entry(c).or_default();
        for tok in tokenize(text) {
            *counts.entry(tok).or_default() += 1;
        }
    }
    if !any_text {
        return Err(ClusterError::NoTextAvailable);
    }

    let mut corpus_freq: HashMap<&str, u64> = HashMap::new();
    let mut total_tokens = 0u64;
    for counts in tf.values() {
        for (t, &n) in counts {
            *corpus_freq.entry(t.as_str()).or_default() += n;
            total_tokens += n;
        }
    }
    let avg = total_tokens as f64 / tf.len() as f64;

    Ok(tf
        .iter()
        .map(|(&c, counts)| {
            let mut scored: Vec<(String, f64)> = counts
                .iter()
                .map(|(t, &n)| {
                    let f = corpus_freq[t.as_str()] as f64;
                    (t.clone(), n as f64 * (1.0 + avg / f).ln())
                })
                .collect();
            scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            scored.truncate(top_k);
            (c, scored)
        })
        .collect())
}
