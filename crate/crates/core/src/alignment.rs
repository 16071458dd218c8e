//! Cluster–scheme correspondence via LIFT scores.
//!
//! `lift(c, l) = P(l | c) / P(l)`. Priors cover every coded utterance in the
//! corpus, noise included; conditionals cover coded members of each cluster.
//! Uncoded utterances are left out of both.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::clustering::{ClusterModel, NOISE};
use crate::corpus::Corpus;
use crate::svg::{blend, SvgDoc};

pub const DEFAULT_LIFT_THRESHOLD: f64 = 2.0;

#[derive(Debug, Error)]
pub enum AlignmentError {
    #[error("cluster {0} has no coded members")]
    EmptyCluster(i32),
    #[error("corpus has no coded utterances")]
    NoLabels,
    #[error("threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("lift matrix is empty")]
    EmptyMatrix,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftMatrix {
    pub clusters: Vec<i32>,
    pub labels: Vec<String>,
    /// `clusters × labels`.
    pub lift: Vec<Vec<f64>>,
    /// Coded members of each cluster carrying each label.
    pub support: Vec<Vec<u64>>,
    pub label_priors: Vec<f64>,
    pub label_counts: Vec<u64>,
    /// Coded members per cluster.
    pub cluster_sizes: Vec<u64>,
    pub n_coded: u64,
    pub noise_in_priors: bool,
}

impl LiftMatrix {
    pub fn get(&self, cluster: i32, label: &str) -> Option<f64> {
        let r = self.clusters.iter().position(|&c| c == cluster)?;
        let c = self.labels.iter().position(|l| l == label)?;
        Some(self.lift[r][c])
    }

    pub fn n_cells(&self) -> usize {
        self.clusters.len() * self.labels.len()
    }
}

/// Builds the LIFT matrix for every non-noise cluster over the corpus scheme.
///
/// Each cell is computed as `(support · N) / (n_c · count_l)` with integer
/// numerator and denominator, so the only rounding is the final division.
pub fn lift_matrix(model: &ClusterModel, corpus: &Corpus) -> Result<LiftMatrix, AlignmentError> {
    let scheme = &corpus.scheme;
    let k = scheme.len();
    let mut label_counts = vec![0u64; k];
    let mut support: BTreeMap<i32, Vec<u64>> =
        model.cluster_ids().map(|c| (c, vec![0u64; k])).collect();

    for u in corpus.utterances() {
        let Some(code) = &u.code else { continue };
        let Some(l) = scheme.index_of(code) else { continue };
        label_counts[l] += 1;
        if let Some(c) = model.assignment(&u.utt_id) {
            if c != NOISE {
                support.entry(c).or_insert_with(|| vec![0u64; k])[l] += 1;
            }
        }
    }
    let n_coded: u64 = label_counts.iter().sum();
    if n_coded == 0 {
        return Err(AlignmentError::NoLabels);
    }

    let clusters: Vec<i32> = support.keys().copied().collect();
    let mut cluster_sizes = Vec::with_capacity(clusters.len());
    let mut lift = Vec::with_capacity(clusters.len());
    for (&c, row) in &support {
        let size: u64 = row.iter().sum();
        if size == 0 {
            return Err(AlignmentError::EmptyCluster(c));
        }
        cluster_sizes.push(size);
        lift.push(
            row.iter()
                .zip(&label_counts)
                .map(|(&s, &count)| {
                    if s == 0 || count == 0 {
                        0.0
                    } else {
                        (s as u128 * n_coded as u128) as f64 / (size as u128 * count as u128) as f64
                    }
                })
                .collect(),
        );
    }

    Ok(LiftMatrix {
        clusters,
        labels: scheme.labels().to_vec(),
        lift,
        support: support.into_values().collect(),
        label_priors: label_counts
            .iter()
            .map(|&c| c as f64 / n_coded as f64)
            .collect(),
        label_counts,
        cluster_sizes,
        n_coded,
        noise_in_priors: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum VerdictKind {
    Aligned { label: String },
    NovelNoDominant,
    NovelMultiDominant { labels: Vec<String> },
}

impl VerdictKind {
    pub fn is_novel(&self) -> bool {
        !matches!(self, VerdictKind::Aligned { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterVerdict {
    pub cluster: i32,
    pub kind: VerdictKind,
    /// Labels at or above the threshold, in scheme order, with their lift.
    pub dominant_lifts: Vec<(String, f64)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerdictSummary {
    pub aligned: usize,
    pub novel_no_dominant: usize,
    pub novel_multi_dominant: usize,
}

impl VerdictSummary {
    pub fn novel(&self) -> usize {
        self.novel_no_dominant + self.novel_multi_dominant
    }
}

/// Several clusters aligned to one label: candidates for a human merge decision.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MergeCandidate {
    pub label: String,
    pub clusters: Vec<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub threshold: f64,
    pub verdicts: Vec<ClusterVerdict>,
    pub summary: VerdictSummary,
    pub merge_candidates: Vec<MergeCandidate>,
}

/// Sorts each cluster into aligned / novel by how many labels reach `threshold`.
pub fn classify_clusters(lift: &LiftMatrix, threshold: f64) -> Result<Classification, AlignmentError> {
    if !(threshold > 0.0) {
        return Err(AlignmentError::InvalidThreshold(threshold));
    }
    let mut summary = VerdictSummary::default();
    let mut by_label: BTreeMap<usize, Vec<i32>> = BTreeMap::new();
    let verdicts = lift
        .clusters
        .iter()
        .zip(&lift.lift)
        .map(|(&cluster, row)| {
            let dominant: Vec<(usize, f64)> = row
                .iter()
                .enumerate()
                .filter(|(_, &v)| v >= threshold)
                .map(|(i, &v)| (i, v))
                .collect();
            let kind = match dominant.as_slice() {
                [] => {
                    summary.novel_no_dominant += 1;
                    VerdictKind::NovelNoDominant
                }
                [(l, _)] => {
                    summary.aligned += 1;
                    by_label.entry(*l).or_default().push(cluster);
                    VerdictKind::Aligned {
                        label: lift.labels[*l].clone(),
                    }
                }
                many => {
                    summary.novel_multi_dominant += 1;
                    VerdictKind::NovelMultiDominant {
                        labels: many.iter().map(|(l, _)| lift.labels[*l].clone()).collect(),
                    }
                }
            };
            ClusterVerdict {
                cluster,
                kind,
                dominant_lifts: dominant
                    .into_iter()
                    .map(|(l, v)| (lift.labels[l].clone(), v))
                    .collect(),
            }
        })
        .collect();
    let merge_candidates = by_label
        .into_iter()
        .filter(|(_, cs)| cs.len() > 1)
        .map(|(l, clusters)| MergeCandidate {
            label: lift.labels[l].clone(),
            clusters,
        })
        .collect();
    Ok(Classification {
        threshold,
        verdicts,
        summary,
        merge_candidates,
    })
}

/// Machine-readable form of the heatmap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub matrix: LiftMatrix,
    pub classification: Classification,
    pub notes: BTreeMap<String, String>,
}

impl AlignmentReport {
    pub fn new(matrix: LiftMatrix, classification: Classification) -> Self {
        let mut notes = BTreeMap::new();
        notes.insert(
            "priors".to_string(),
            "computed over all coded utterances, noise-assigned included".to_string(),
        );
        notes.insert(
            "unlabeled".to_string(),
            "uncoded utterances excluded from priors and conditionals".to_string(),
        );
        notes.insert(
            "dominance".to_string(),
            "a label is dominant when lift >= threshold".to_string(),
        );
        Self {
            matrix,
            classification,
            notes,
        }
    }
}

fn io_err(path: &Path, source: std::io::Error) -> AlignmentError {
    AlignmentError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Renders the matrix as an SVG heatmap: clusters as rows, labels as columns,
/// fill proportional to lift, threshold-reaching cells outlined.
pub fn render_heatmap_svg(lift: &LiftMatrix, threshold: f64) -> Result<String, AlignmentError> {
    if lift.n_cells() == 0 {
        return Err(AlignmentError::EmptyMatrix);
    }
    let cell = 36.0;
    let left = 110.0;
    let top = 190.0;
    let width = left + cell * lift.labels.len() as f64 + 120.0;
    let height = top + cell * lift.clusters.len() as f64 + 40.0;
    let max = lift
        .lift
        .iter()
        .flatten()
        .copied()
        .fold(threshold, f64::max);
    let mut doc = SvgDoc::new(width, height);

    for (j, label) in lift.labels.iter().enumerate() {
        let x = left + cell * (j as f64 + 0.5);
        doc.text(
            x,
            top - 8.0,
            11.0,
            "start",
            &format!(r#" transform="rotate(-60 {x:.2} {:.2})""#, top - 8.0),
            label,
        );
    }
    for (i, (&c, row)) in lift.clusters.iter().zip(&lift.lift).enumerate() {
        let y = top + cell * i as f64;
        doc.text(left - 8.0, y + cell * 0.62, 11.0, "end", "", &format!("cluster {c}"));
        for (j, &v) in row.iter().enumerate() {
            let x = left + cell * j as f64;
            let fill = blend((255, 255, 255), (8, 48, 107), v / max);
            let mut frag = String::new();
            let _ = write!(
                frag,
                r##"<rect class="cell" x="{x:.2}" y="{y:.2}" width="{cell}" height="{cell}" fill="{fill}" stroke="#dddddd" stroke-width="0.5"><title>cluster {c} / {}: {v:.3}</title></rect>"##,
                crate::svg::escape(&lift.labels[j])
            );
            doc.raw(&frag);
            if v >= threshold {
                doc.raw(&format!(
                    r##"<rect class="outline" x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#d62728" stroke-width="2"/>"##,
                    x + 1.0,
                    y + 1.0,
                    cell - 2.0,
                    cell - 2.0
                ));
            }
            let ink = if v / max > 0.55 { "#ffffff" } else { "#222222" };
            doc.text(
                x + cell / 2.0,
                y + cell * 0.62,
                9.0,
                "middle",
                &format!(r#" fill="{ink}""#),
                &format!("{v:.1}"),
            );
        }
    }
    doc.text(
        left,
        height - 12.0,
        11.0,
        "start",
        "",
        &format!("LIFT = P(label|cluster) / P(label); outlined: LIFT >= {threshold}"),
    );
    Ok(doc.finish())
}

/// Writes the JSON report and the SVG heatmap.
pub fn export_heatmap(
    report: &AlignmentReport,
    json_path: impl AsRef<Path>,
    svg_path: impl AsRef<Path>,
) -> Result<(), AlignmentError> {
    let json_path = json_path.as_ref();
    let svg_path = svg_path.as_ref();
    let svg = render_heatmap_svg(&report.matrix, report.classification.threshold)?;
    let json = serde_json::to_string_pretty(report).expect("report serializes");
    std::fs::write(json_path, json + "\n").map_err(|e| io_err(json_path, e))?;
    std::fs::write(svg_path, svg).map_err(|e| io_err(svg_path, e))?;
    Ok(())
}

/// Label distribution per cluster, used by reports.
pub fn top_labels(lift: &LiftMatrix, n: usize) -> BTreeMap<i32, Vec<(String, f64)>> {
    lift.clusters
        .iter()
        .zip(&lift.lift)
        .map(|(&c, row)| {
            let mut ranked: Vec<(String, f64)> = lift
                .labels
                .iter()
                .cloned()
                .zip(row.iter().copied())
                .collect();
            ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
            ranked.truncate(n);
            (c, ranked)
        })
        .collect()
}
