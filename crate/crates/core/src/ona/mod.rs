//! Ordered network analysis of move sequences.
//!
//! Sessions become directed, windowed transition counts over ordered label
//! pairs; unit-normalized vectors are projected onto a means-rotation axis
//! separating high- from low-quality units, and nodes are placed by
//! co-registration with the projected points.

mod project;
mod render;
mod split;
mod transitions;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use project::{co_register, mean_and_subtraction_networks, project_points, project_units, CoRegistration, Networks, Projection};
pub use render::{export_ona, render_network_svg, NetworkKind};
pub use split::{quartile_split, quartile_split_scores, QuartileMethod, QuartileSplit};
pub use transitions::{accumulate_codes, accumulate_transitions, sphere_normalize, window_pair_count, TransitionVector};

use crate::corpus::{Corpus, MoveScheme};

pub const DEFAULT_WINDOW: usize = 2;

#[derive(Debug, Error)]
pub enum OnaError {
    #[error("need at least {needed} scored units, got {got}")]
    TooFewSessions { needed: usize, got: usize },
    #[error("quartile cut points coincide or cross (q25 = {q25}, q75 = {q75})")]
    DegenerateQuantiles { q25: f64, q75: f64 },
    #[error("window must be at least 2, got {0}")]
    InvalidWindow(usize),
    #[error("utterance {0:?} has no code")]
    UncodedUtterance(String),
    #[error("unknown label {0:?}")]
    UnknownLabel(String),
    #[error("group means coincide; the separating axis is undefined")]
    IdenticalGroupMeans,
    #[error("need at least {needed} non-zero units tagged {tag}, got {got}")]
    TooFewUnits { tag: GroupTag, needed: usize, got: usize },
    #[error("no units tagged {0}")]
    EmptyGroup(GroupTag),
    #[error("vectors have inconsistent lengths")]
    DimensionMismatch,
    #[error("co-registration normal equations are singular")]
    SingularNormalEquations,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum GroupTag {
    High,
    Low,
}

impl std::fmt::Display for GroupTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GroupTag::High => "HIGH",
            GroupTag::Low => "LOW",
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitLevel {
    #[default]
    Session,
    /// Counts summed over each group's sessions, scored by the group's mean IC.
    Group,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct OnaOptions {
    pub window: usize,
    pub quartile_method: QuartileMethod,
    pub unit_level: UnitLevel,
}

impl Default for OnaOptions {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            quartile_method: QuartileMethod::NearestRank,
            unit_level: UnitLevel::Session,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnaUnit {
    pub id: String,
    pub tag: GroupTag,
    pub ic_score: f64,
    pub point: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnaModel {
    pub labels: Vec<String>,
    pub options: OnaOptions,
    pub split: QuartileSplit,
    pub units: Vec<OnaUnit>,
    /// Units left out of the projection because their transition vector is zero.
    pub excluded_units: Vec<String>,
    pub grand_mean: Vec<f64>,
    pub axis_x: Vec<f64>,
    pub axis_y: Vec<f64>,
    pub networks: Networks,
    pub node_positions: Vec<[f64; 2]>,
    pub fit_correlation: [Option<f64>; 2],
    pub layout: String,
    pub warnings: Vec<String>,
}

/// Splits scored units into quartiles, accumulates and normalizes their
/// transitions, projects them and positions the nodes.
pub fn run_ona(corpus: &Corpus, scheme: &MoveScheme, options: OnaOptions) -> Result<OnaModel, OnaError> {
    if options.window < 2 {
        return Err(OnaError::InvalidWindow(options.window));
    }
    let k = scheme.len();
    let mut units: Vec<(String, f64, TransitionVector)> = Vec::new();
    match options.unit_level {
        UnitLevel::Session => {
            for s in corpus.scored_sessions() {
                let tv = accumulate_transitions(s, scheme, options.window)?;
                units.push((s.session_id.clone(), s.ic_score.expect("scored"), tv));
            }
        }
        UnitLevel::Group => {
            for g in &corpus.groups {
                let members: Vec<_> = corpus.scored_sessions().filter(|s| &s.group_id == g).collect();
                if members.is_empty() {
                    continue;
                }
                let mut counts = vec![0u64; k * k];
                for s in &members {
                    let tv = accumulate_transitions(s, scheme, options.window)?;
                    counts.iter_mut().zip(&tv.counts).for_each(|(a, b)| *a += b);
                }
                let ic = members.iter().map(|s| s.ic_score.expect("scored")).sum::<f64>() / members.len() as f64;
                units.push((g.clone(), ic, TransitionVector::new(g.clone(), k, counts)));
            }
        }
    }

    let scores: Vec<(String, f64)> = units.iter().map(|(id, ic, _)| (id.clone(), *ic)).collect();
    let split = quartile_split_scores(&scores, options.quartile_method)?;

    let mut warnings = Vec::new();
    let mut excluded = Vec::new();
    let mut kept: Vec<(String, f64, GroupTag, Vec<f64>)> = Vec::new();
    for (id, ic, tv) in units {
        let tag = match split.tag_of(&id) {
            Some(t) => t,
            None => continue,
        };
        let tv = sphere_normalize(tv);
        match tv.normalized {
            Some(v) => kept.push((id, ic, tag, v)),
            None => excluded.push(id),
        }
    }
    if !excluded.is_empty() {
        warnings.push(format!("{} unit(s) with no transitions excluded from the projection", excluded.len()));
    }

    let vectors: Vec<Vec<f64>> = kept.iter().map(|u| u.3.clone()).collect();
    let tags: Vec<GroupTag> = kept.iter().map(|u| u.2).collect();
    let projection = project_points(&vectors, &tags)?;
    let networks = mean_and_subtraction_networks(&vectors, &tags, k)?;

    let (node_positions, fit_correlation, layout) = match co_register(&vectors, &projection.points, k) {
        Ok(c) => (c.nodes, c.fit_correlation, "co-registration".to_string()),
        Err(OnaError::SingularNormalEquations) => {
            warnings.push("co-registration normal equations are singular; nodes placed on a circle".to_string());
            (project::circular_layout(k, &projection.points), [None, None], "circular".to_string())
        }
        Err(e) => return Err(e),
    };

    let units = kept
        .into_iter()
        .zip(&projection.points)
        .map(|((id, ic, tag, _), p)| OnaUnit {
            id,
            tag,
            ic_score: ic,
            point: *p,
        })
        .collect();

    Ok(OnaModel {
        labels: scheme.labels().to_vec(),
        options,
        split,
        units,
        excluded_units: excluded,
        grand_mean: projection.grand_mean,
        axis_x: projection.axis_x,
        axis_y: projection.axis_y,
        networks,
        node_positions,
        fit_correlation,
        layout,
        warnings,
    })
}
