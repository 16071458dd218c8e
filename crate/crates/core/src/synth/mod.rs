//! Synthetic corpora with planted structure.
//!
//! Each session follows one of several Markov regimes over the scheme's
//! labels; its IC score is a known linear function of its move counts plus a
//! group intercept and noise; each utterance embedding is drawn from its
//! label's Gaussian blob.
//!
//! One ChaCha8 generator is seeded from `seed` and split into streams, used
//! as follows:
//!
//! | stream | purpose |
//! |---|---|
//! | 0 | group random intercepts, one draw per group in order |
//! | 1 | regime assignment, session lengths and label chains |
//! | 2 | embedding noise |
//! | 3 | residual IC noise |
//! | 4 | blob centers |
//! | 5 | speakers and filler text |

mod oracle;

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use oracle::{oracle_counts, OracleCounts};

use crate::clustering::{write_embeddings, EmbeddingSet};
use crate::corpus::{write_corpus, Corpus, MoveScheme, Session, Utterance, IC_MAX, IC_MIN};

const STREAM_GROUPS: u64 = 0;
const STREAM_CHAINS: u64 = 1;
const STREAM_EMBEDDINGS: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_CENTERS: u64 = 4;
const STREAM_TEXT: u64 = 5;

/// Default planted coefficients, in `moves14` label order.
pub const REFERENCE_BETA: [f64; 14] = [
    0.064, -0.283, 0.164, -0.076, 0.156, 0.124, 0.012, 0.171, -0.012, 0.081, 0.436, 0.034, -0.138, -0.038,
];
pub const REFERENCE_INTERCEPT: f64 = 2.342;
pub const REFERENCE_SIGMA_GROUP: f64 = 0.28;
pub const REFERENCE_SIGMA_RESID: f64 = 0.93;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic config: {0}")]
    InvalidConfig(String),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidConfig(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct Regime {
    pub tag: String,
    /// Row-stochastic `k × k` matrix, row = current label.
    pub transition: Vec<Vec<f64>>,
    pub initial: Vec<f64>,
    /// Added to the IC of every session in this regime.
    #[serde(default)]
    pub ic_offset: f64,
}

impl Regime {
    pub fn validate(&self, k: usize) -> Result<(), SynthError> {
        let check = |row: &[f64], what: &str| -> Result<(), SynthError> {
            if row.len() != k {
                return Err(invalid(format!("regime {}: {what} has length {}, expected {k}", self.tag, row.len())));
            }
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(invalid(format!("regime {}: {what} has a negative or non-finite entry", self.tag)));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-12 {
                return Err(invalid(format!("regime {}: {what} sums to {sum}", self.tag)));
            }
            Ok(())
        };
        if self.transition.len() != k {
            return Err(invalid(format!("regime {}: transition has {} rows, expected {k}", self.tag, self.transition.len())));
        }
        for (i, row) in self.transition.iter().enumerate() {
            check(row, &format!("transition row {i}"))?;
        }
        check(&self.initial, "initial distribution")
    }

    /// Stationary distribution by power iteration.
    pub fn stationary(&self) -> Vec<f64> {
        let k = self.initial.len();
        let mut pi = vec![1.0 / k as f64; k];
        for _ in 0..100_000 {
            let mut next = vec![0.0; k];
            for (i, row) in self.transition.iter().enumerate() {
                for (j, p) in row.iter().enumerate() {
                    next[j] += pi[i] * p;
                }
            }
            // Averaging with the previous iterate damps periodic chains.
            let next: Vec<f64> = next.iter().zip(&pi).map(|(a, b)| 0.5 * (a + b)).collect();
            let delta: f64 = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
            pi = next;
            if delta < 1e-15 {
                break;
            }
        }
        pi
    }
}

fn sample_index(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap_or(0)
}

/// Draws a label chain of the given length from a regime.
pub fn sample_chain(regime: &Regime, len: usize, rng: &mut impl Rng) -> Vec<usize> {
    let mut chain = Vec::with_capacity(len);
    if len == 0 {
        return chain;
    }
    let mut cur = sample_index(rng, &regime.initial);
    chain.push(cur);
    for _ in 1..len {
        cur = sample_index(rng, &regime.transition[cur]);
        chain.push(cur);
    }
    chain
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RegimeSampling {
    /// A shuffled assignment with (near-)equal regime counts.
    #[default]
    Balanced,
    /// Each session draws its regime uniformly and independently.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct EmbeddingConfig {
    pub dim: usize,
    pub sd: f64,
    /// Minimum pairwise distance between generated centers.
    pub min_separation: f64,
    /// Explicit centers, one per label; generated on the unit sphere when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centers: Option<Vec<Vec<f64>>>,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        Self {
            dim: 32,
            sd: 0.05,
            min_separation: 1.0,
            centers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_groups: usize,
    pub sessions_per_group: usize,
    pub min_utterances: usize,
    pub max_utterances: usize,
    pub scheme: MoveScheme,
    pub regimes: Vec<Regime>,
    pub regime_sampling: RegimeSampling,
    pub intercept: f64,
    /// One coefficient per scheme label.
    pub beta: Vec<f64>,
    pub sigma_group: f64,
    pub sigma_resid: f64,
    /// Clamp stored IC scores to the rating scale.
    pub clamp_ic: bool,
    pub with_text: bool,
    pub embedding: EmbeddingConfig,
}

impl Default for SynthConfig {
    fn default() -> Self {
        let scheme = MoveScheme::moves14();
        let regimes = default_regimes(&scheme);
        Self {
            seed: 0,
            n_groups: 17,
            sessions_per_group: 5,
            min_utterances: 15,
            max_utterances: 40,
            beta: REFERENCE_BETA.to_vec(),
            scheme,
            regimes,
            regime_sampling: RegimeSampling::Balanced,
            intercept: REFERENCE_INTERCEPT,
            sigma_group: REFERENCE_SIGMA_GROUP,
            sigma_resid: REFERENCE_SIGMA_RESID,
            clamp_ic: true,
            with_text: true,
            embedding: EmbeddingConfig::default(),
        }
    }
}

/// Builds a regime that prefers the given labels: each row mixes a
/// self-transition, a step to the next preferred label and the preference
/// distribution.
pub fn preference_regime(tag: &str, k: usize, preferred: &[usize], ic_offset: f64) -> Regime {
    let mut pref = vec![1.0; k];
    for &i in preferred {
        pref[i] = 6.0;
    }
    let total: f64 = pref.iter().sum();
    pref.iter_mut().for_each(|p| *p /= total);
    let transition = (0..k)
        .map(|i| {
            let mut row: Vec<f64> = pref.iter().map(|p| 0.6 * p).collect();
            row[i] += 0.25;
            let next = preferred
                .iter()
                .position(|&p| p == i)
                .map(|pos| preferred[(pos + 1) % preferred.len()])
                .unwrap_or(preferred[0]);
            row[next] += 0.15;
            let s: f64 = row.iter().sum();
            row.iter_mut().for_each(|p| *p /= s);
            row
        })
        .collect();
    Regime {
        tag: tag.to_string(),
        transition,
        initial: pref,
        ic_offset,
    }
}

/// HIGH favours elaboration, reasoning and emotional moves; LOW favours
/// position taking and discussion management.
pub fn default_regimes(scheme: &MoveScheme) -> Vec<Regime> {
    let k = scheme.len();
    let by_category = |names: &[&str]| -> Vec<usize> {
        scheme
            .labels()
            .iter()
            .enumerate()
            .filter(|(_, l)| scheme.category_of(l).is_some_and(|c| names.contains(&c)))
            .map(|(i, _)| i)
            .collect()
    };
    let mut high = by_category(&["Elaborating Ideas", "Reasoning & Justifications", "Emotional Expression"]);
    let mut low = by_category(&["Position Taking", "Discussion Management"]);
    if high.is_empty() || low.is_empty() {
        high = (0..k).filter(|i| i % 2 == 0).collect();
        low = (0..k).filter(|i| i % 2 == 1).collect();
        if low.is_empty() {
            low = high.clone();
        }
    }
    vec![preference_regime("HIGH", k, &high, 1.0), preference_regime("LOW", k, &low, 0.0)]
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), SynthError> {
        let k = self.scheme.len();
        if self.n_groups == 0 || self.sessions_per_group == 0 {
            return Err(invalid("need at least one group and one session per group"));
        }
        if self.min_utterances > self.max_utterances {
            return Err(invalid("min-utterances exceeds max-utterances"));
        }
        if self.regimes.is_empty() {
            return Err(invalid("no regimes"));
        }
        for r in &self.regimes {
            r.validate(k)?;
        }
        if self.beta.len() != k {
            return Err(invalid(format!("beta has {} entries, scheme has {k} labels", self.beta.len())));
        }
        if !(self.sigma_group >= 0.0 && self.sigma_resid >= 0.0) {
            return Err(invalid("standard deviations must be non-negative"));
        }
        let e = &self.embedding;
        if e.dim == 0 || !(e.sd >= 0.0) {
            return Err(invalid("embedding dim must be positive and sd non-negative"));
        }
        if let Some(centers) = &e.centers {
            if centers.len() != k || centers.iter().any(|c| c.len() != e.dim) {
                return Err(invalid("embedding centers must be k vectors of length dim"));
            }
            for i in 0..k {
                for j in 0..i {
                    if centers[i] == centers[j] {
                        return Err(invalid(format!("embedding centers {j} and {i} coincide")));
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct SynthTruth {
    pub seed: u64,
    pub scheme: String,
    pub intercept: f64,
    pub beta: Vec<f64>,
    pub sigma_group: f64,
    pub sigma_resid: f64,
    pub group_effects: BTreeMap<String, f64>,
    pub session_regime: BTreeMap<String, String>,
    /// Linear predictor without group effect or noise.
    pub linear_predictor: BTreeMap<String, f64>,
    /// IC before clamping to the rating scale.
    pub ic_unclamped: BTreeMap<String, f64>,
    pub n_clamped: usize,
    pub centers: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub corpus: Corpus,
    pub embeddings: EmbeddingSet,
    pub truth: SynthTruth,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

fn gaussian(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn generate_centers(cfg: &SynthConfig) -> Result<Vec<Vec<f64>>, SynthError> {
    if let Some(c) = &cfg.embedding.centers {
        return Ok(c.clone());
    }
    let k = cfg.scheme.len();
    let dim = cfg.embedding.dim;
    let mut rng = stream(cfg.seed, STREAM_CENTERS);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let mut attempts = 0;
    while centers.len() < k {
        attempts += 1;
        if attempts > 100_000 {
            return Err(invalid(format!(
                "cannot place {k} unit-sphere centers {} apart in {dim} dimensions",
                cfg.embedding.min_separation
            )));
        }
        let mut v: Vec<f64> = (0..dim).map(|_| gaussian(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            continue;
        }
        v.iter_mut().for_each(|x| *x /= norm);
        let ok = centers.iter().all(|c| {
            let d2: f64 = c.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum();
            d2.sqrt() >= cfg.embedding.min_separation
        });
        if ok {
            centers.push(v);
        }
    }
    Ok(centers)
}

fn slug_words(label: &str) -> Vec<String> {
    label
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| w.len() > 2)
        .map(|w| w.to_lowercase())
        .collect()
}

const FILLER: &[&str] = &["we", "think", "maybe", "right", "so", "yeah", "then", "that", "about", "really"];

fn utterance_text(rng: &mut impl Rng, words: &[String]) -> String {
    let n = rng.random_range(4..=9);
    (0..n)
        .map(|_| {
            if !words.is_empty() && rng.random_bool(0.5) {
                words[rng.random_range(0..words.len())].clone()
            } else {
                FILLER[rng.random_range(0..FILLER.len())].to_string()
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn generate_corpus(cfg: &SynthConfig) -> Result<SynthOutput, SynthError> {
    cfg.validate()?;
    let k = cfg.scheme.len();
    let labels = cfg.scheme.labels();
    let centers = generate_centers(cfg)?;

    let mut rng_groups = stream(cfg.seed, STREAM_GROUPS);
    let mut rng_chain = stream(cfg.seed, STREAM_CHAINS);
    let mut rng_emb = stream(cfg.seed, STREAM_EMBEDDINGS);
    let mut rng_noise = stream(cfg.seed, STREAM_NOISE);
    let mut rng_text = stream(cfg.seed, STREAM_TEXT);

    let n_sessions = cfg.n_groups * cfg.sessions_per_group;
    let assignment: Vec<usize> = match cfg.regime_sampling {
        RegimeSampling::Balanced => {
            let mut a: Vec<usize> = (0..n_sessions).map(|i| i % cfg.regimes.len()).collect();
            a.shuffle(&mut rng_chain);
            a
        }
        RegimeSampling::Independent => (0..n_sessions).map(|_| rng_chain.random_range(0..cfg.regimes.len())).collect(),
    };
    let vocab: Vec<Vec<String>> = labels.iter().map(|l| slug_words(l)).collect();
    let gw = cfg.n_groups.to_string().len().max(2);
    let sw = cfg.sessions_per_group.to_string().len();
    let uw = cfg.max_utterances.to_string().len().max(3);

    let mut truth = SynthTruth {
        seed: cfg.seed,
        scheme: cfg.scheme.name().to_string(),
        intercept: cfg.intercept,
        beta: cfg.beta.clone(),
        sigma_group: cfg.sigma_group,
        sigma_resid: cfg.sigma_resid,
        group_effects: BTreeMap::new(),
        session_regime: BTreeMap::new(),
        linear_predictor: BTreeMap::new(),
        ic_unclamped: BTreeMap::new(),
        n_clamped: 0,
        centers: centers.clone(),
    };
    let mut sessions = Vec::with_capacity(n_sessions);
    let mut embeddings = Vec::new();
    let mut groups = std::collections::BTreeSet::new();

    for g in 0..cfg.n_groups {
        let group_id = format!("g{:0gw$}", g + 1);
        let effect = cfg.sigma_group * gaussian(&mut rng_groups);
        truth.group_effects.insert(group_id.clone(), effect);
        groups.insert(group_id.clone());
        for s in 0..cfg.sessions_per_group {
            let session_id = format!("{group_id}-s{:0sw$}", s + 1);
            let r = assignment[g * cfg.sessions_per_group + s];
            let regime = &cfg.regimes[r];
            let len = rng_chain.random_range(cfg.min_utterances..=cfg.max_utterances);
            let chain = sample_chain(regime, len, &mut rng_chain);

            let mut counts = vec![0u64; k];
            let mut utterances = Vec::with_capacity(len);
            for (t, &label) in chain.iter().enumerate() {
                counts[label] += 1;
                let utt_id = format!("{session_id}-u{:0uw$}", t + 1);
                let vector: Vec<f64> = centers[label]
                    .iter()
                    .map(|c| c + cfg.embedding.sd * gaussian(&mut rng_emb))
                    .collect();
                embeddings.push((utt_id.clone(), vector));
                let speaker = format!("p{}", rng_text.random_range(1..=4));
                let text = cfg.with_text.then(|| utterance_text(&mut rng_text, &vocab[label]));
                utterances.push(Utterance {
                    utt_id,
                    session_id: session_id.clone(),
                    speaker_id: speaker,
                    turn_index: t,
                    text,
                    code: Some(labels[label].clone()),
                });
            }

            let linear = cfg.intercept + counts.iter().zip(&cfg.beta).map(|(&c, b)| c as f64 * b).sum::<f64>();
            let ic = linear + regime.ic_offset + effect + cfg.sigma_resid * gaussian(&mut rng_noise);
            let stored = if cfg.clamp_ic { ic.clamp(IC_MIN, IC_MAX) } else { ic };
            if stored != ic {
                truth.n_clamped += 1;
            }
            truth.session_regime.insert(session_id.clone(), regime.tag.clone());
            truth.linear_predictor.insert(session_id.clone(), linear);
            truth.ic_unclamped.insert(session_id.clone(), ic);
            sessions.push(Session {
                session_id,
                group_id: group_id.clone(),
                scenario_id: (s % 5) as u8 + 1,
                utterances,
                ic_score: Some(stored),
            });
        }
    }

    let embeddings = EmbeddingSet::new(embeddings).map_err(|e| invalid(e.to_string()))?;
    Ok(SynthOutput {
        corpus: Corpus {
            scheme: cfg.scheme.clone(),
            groups,
            sessions,
        },
        embeddings,
        truth,
    })
}

pub const UTTERANCES_FILE: &str = "utterances.jsonl";
pub const SESSIONS_FILE: &str = "sessions.csv";
pub const EMBEDDINGS_FILE: &str = "embeddings.jsonl";
pub const TRUTH_FILE: &str = "truth.json";

/// Writes the utterance, session and embedding files plus `truth.json`.
pub fn write_synth(out: &SynthOutput, dir: &Path) -> Result<(), SynthError> {
    let io = |path: &Path, e: &dyn std::fmt::Display| SynthError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    };
    std::fs::create_dir_all(dir).map_err(|e| io(dir, &e))?;
    let utt = dir.join(UTTERANCES_FILE);
    let sess = dir.join(SESSIONS_FILE);
    write_corpus(&out.corpus, &utt, &sess).map_err(|e| io(&utt, &e))?;
    let emb = dir.join(EMBEDDINGS_FILE);
    write_embeddings(&out.embeddings, &emb).map_err(|e| io(&emb, &e))?;
    let truth = dir.join(TRUTH_FILE);
    let json = serde_json::to_string_pretty(&out.truth).expect("truth serializes");
    std::fs::write(&truth, json + "\n").map_err(|e| io(&truth, &e))
}
