use serde::{Deserialize, Serialize};

use super::QualityError;
use crate::corpus::{move_frequencies, Corpus, MoveScheme};

pub const INTERCEPT: &str = "(Intercept)";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PredictorScale {
    /// Raw per-session move counts.
    #[default]
    Counts,
    /// Counts divided by the session's number of coded utterances.
    Proportions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignData {
    pub y: Vec<f64>,
    /// Row-major `n × (1 + K)`; column 0 is the intercept.
    pub x: Vec<Vec<f64>>,
    /// Group index per row into `groups`.
    pub group_index: Vec<usize>,
    pub groups: Vec<String>,
    pub session_ids: Vec<String>,
    pub column_names: Vec<String>,
    /// Scheme category of each column; `None` for the intercept.
    pub column_categories: Vec<Option<String>>,
    pub scale: PredictorScale,
    pub warnings: Vec<String>,
}

impl DesignData {
    pub fn n_obs(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    /// Assembles a design from raw parts; `x` must already contain the
    /// intercept column.
    pub fn from_parts(
        y: Vec<f64>,
        x: Vec<Vec<f64>>,
        group_labels: &[String],
        column_names: Vec<String>,
    ) -> Self {
        let mut groups: Vec<String> = group_labels.to_vec();
        groups.sort();
        groups.dedup();
        let group_index = group_labels
            .iter()
            .map(|g| groups.binary_search(g).expect("group present"))
            .collect();
        let n = y.len();
        Self {
            y,
            x,
            group_index,
            groups,
            session_ids: (0..n).map(|i| format!("row{i}")).collect(),
            column_categories: vec![None; column_names.len()],
            column_names,
            scale: PredictorScale::Counts,
            warnings: Vec::new(),
        }
    }
}

/// One row per scored session: intercept followed by one predictor per
/// scheme label, in scheme order. Unscored sessions are skipped with a warning.
pub fn build_design(
    corpus: &Corpus,
    scheme: &MoveScheme,
    scale: PredictorScale,
) -> Result<DesignData, QualityError> {
    let mut warnings = Vec::new();
    let mut y = Vec::new();
    let mut x = Vec::new();
    let mut group_labels = Vec::new();
    let mut session_ids = Vec::new();
    for s in &corpus.sessions {
        let Some(ic) = s.ic_score else {
            let msg = format!("session {} has no ic_score; skipped", s.session_id);
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        };
        let freq = move_frequencies(s, scheme)?;
        let total = freq.total() as f64;
        let mut row = Vec::with_capacity(1 + scheme.len());
        row.push(1.0);
        row.extend(freq.counts.iter().map(|&c| match scale {
            PredictorScale::Counts => c as f64,
            PredictorScale::Proportions if total > 0.0 => c as f64 / total,
            PredictorScale::Proportions => 0.0,
        }));
        y.push(ic);
        x.push(row);
        group_labels.push(s.group_id.clone());
        session_ids.push(s.session_id.clone());
    }
    if y.is_empty() {
        return Err(QualityError::NoScoredSessions);
    }

    let mut column_names = vec![INTERCEPT.to_string()];
    column_names.extend(scheme.labels().iter().cloned());
    let mut design = DesignData::from_parts(y, x, &group_labels, column_names);
    design.session_ids = session_ids;
    design.column_categories = std::iter::once(None)
        .chain(
            scheme
                .labels()
                .iter()
                .map(|l| scheme.category_of(l).map(str::to_string)),
        )
        .collect();
    design.scale = scale;
    if design.n_groups() < 2 {
        warnings.push(
            "single group: the random-intercept variance is not identifiable and may sit at zero"
                .to_string(),
        );
    }
    design.warnings = warnings;
    Ok(design)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Category, Session, Utterance};
    use std::collections::BTreeSet;

    fn scheme() -> MoveScheme {
        MoveScheme::new(
            "t",
            vec![
                Category {
                    name: "first".into(),
                    labels: vec!["A".into(), "B".into()],
                },
                Category {
                    name: "second".into(),
                    labels: vec!["C".into()],
                },
            ],
        )
        .unwrap()
    }

    fn session(id: &str, group: &str, codes: &[&str], ic: Option<f64>) -> Session {
        Session {
            session_id: id.into(),
            group_id: group.into(),
            scenario_id: 1,
            utterances: codes
                .iter()
                .enumerate()
                .map(|(t, c)| Utterance {
                    utt_id: format!("{id}-{t}"),
                    session_id: id.into(),
                    speaker_id: "p".into(),
                    turn_index: t,
                    text: None,
                    code: Some(c.to_string()),
                })
                .collect(),
            ic_score: ic,
        }
    }

    fn corpus(sessions: Vec<Session>) -> Corpus {
        Corpus {
            scheme: scheme(),
            groups: sessions.iter().map(|s| s.group_id.clone()).collect::<BTreeSet<_>>(),
            sessions,
        }
    }

    #[test]
    fn rows_equal_tallies() {
        let c = corpus(vec![
            session("s1", "g1", &["A", "A", "C"], Some(3.0)),
            session("s2", "g2", &["B", "C", "C", "C"], Some(5.5)),
            session("s3", "g1", &[], Some(2.0)),
            session("s4", "g2", &["A"], None),
        ]);
        let d = build_design(&c, &scheme(), PredictorScale::Counts).unwrap();
        assert_eq!(d.n_obs(), 3);
        assert_eq!(
            d.x,
            vec![
                vec![1.0, 2.0, 0.0, 1.0],
                vec![1.0, 0.0, 1.0, 3.0],
                vec![1.0, 0.0, 0.0, 0.0],
            ]
        );
        assert_eq!(d.y, vec![3.0, 5.5, 2.0]);
        assert_eq!(d.group_index, vec![0, 1, 0]);
        assert_eq!(d.column_names, vec!["(Intercept)", "A", "B", "C"]);
        assert_eq!(d.column_categories[3].as_deref(), Some("second"));
        assert_eq!(d.warnings.len(), 1);
    }

    #[test]
    fn proportions_scale() {
        let c = corpus(vec![
            session("s1", "g1", &["A", "A", "C", "B"], Some(3.0)),
            session("s2", "g2", &[], Some(3.0)),
        ]);
        let d = build_design(&c, &scheme(), PredictorScale::Proportions).unwrap();
        assert_eq!(d.x[0], vec![1.0, 0.5, 0.25, 0.25]);
        assert_eq!(d.x[1], vec![1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn no_scores_is_an_error() {
        let c = corpus(vec![session("s1", "g1", &["A"], None)]);
        assert!(matches!(
            build_design(&c, &scheme(), PredictorScale::Counts),
            Err(QualityError::NoScoredSessions)
        ));
    }

    #[test]
    fn single_group_is_flagged() {
        let c = corpus(vec![
            session("s1", "g1", &["A"], Some(2.0)),
            session("s2", "g1", &["B"], Some(3.0)),
        ]);
        let d = build_design(&c, &scheme(), PredictorScale::Counts).unwrap();
        assert!(d.warnings.iter().any(|w| w.contains("single group")));
    }

    #[test]
    fn eighty_three_by_fifteen() {
        let scheme = MoveScheme::moves14();
        let mut sessions = Vec::new();
        for g in 0..17 {
            for k in 0..5 {
                if (g, k) == (2, 1) || (g, k) == (9, 4) {
                    continue;
                }
                let id = format!("g{g:02}-s{k}");
                let codes: Vec<&str> = (0..(g + k) % 14).map(|i| scheme.labels()[i].as_str()).collect();
                let mut s = session(&id, &format!("g{g:02}"), &codes, Some(4.0));
                s.scenario_id = k as u8 + 1;
                sessions.push(s);
            }
        }
        let c = Corpus {
            scheme: scheme.clone(),
            groups: sessions.iter().map(|s| s.group_id.clone()).collect(),
            sessions,
        };
        let d = build_design(&c, &scheme, PredictorScale::Counts).unwrap();
        assert_eq!((d.n_obs(), d.n_cols()), (83, 15));
        assert!(d.x.iter().all(|r| r[0] == 1.0));
    }
}
