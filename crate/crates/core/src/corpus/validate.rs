use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{Corpus, IC_MAX, IC_MIN};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    /// Session or utterance id the finding refers to.
    pub location: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings
            .iter()
            .filter(|f| f.severity == Severity::Warning)
    }

    fn push(&mut self, severity: Severity, location: &str, message: impl Into<String>) {
        self.findings.push(Finding {
            severity,
            location: location.to_string(),
            message: message.into(),
        });
    }
}

/// Checks every data-model invariant and reports findings in corpus order.
pub fn validate_corpus(corpus: &Corpus) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut session_ids = HashSet::new();
    let mut utt_ids = HashSet::new();

    for s in &corpus.sessions {
        let sid = s.session_id.as_str();
        if !session_ids.insert(sid) {
            report.push(Severity::Error, sid, "duplicate session_id");
        }
        if !corpus.groups.contains(&s.group_id) {
            report.push(
                Severity::Error,
                sid,
                format!("group_id {:?} not in corpus groups", s.group_id),
            );
        }
        if !(1..=5).contains(&s.scenario_id) {
            report.push(
                Severity::Error,
                sid,
                format!("scenario_id {} outside 1..=5", s.scenario_id),
            );
        }
        match s.ic_score {
            None => report.push(
                Severity::Warning,
                sid,
                "missing ic_score; session excluded from quality modeling",
            ),
            Some(ic) if !(IC_MIN..=IC_MAX).contains(&ic) => report.push(
                Severity::Error,
                sid,
                format!("ic_score {ic} outside [{IC_MIN}, {IC_MAX}]"),
            ),
            Some(_) => {}
        }

        let mut contiguous = true;
        for (expected, u) in s.utterances.iter().enumerate() {
            if u.turn_index != expected {
                contiguous = false;
            }
            if !utt_ids.insert(u.utt_id.as_str()) {
                report.push(Severity::Error, &u.utt_id, "duplicate utt_id");
            }
            if u.session_id != s.session_id {
                report.push(
                    Severity::Error,
                    &u.utt_id,
                    format!("utterance session_id {:?} does not match its session", u.session_id),
                );
            }
            match &u.code {
                Some(code) if !corpus.scheme.contains(code) => report.push(
                    Severity::Error,
                    &u.utt_id,
                    format!("code {code:?} not in scheme {:?}", corpus.scheme.name()),
                ),
                None => report.push(Severity::Warning, &u.utt_id, "uncoded utterance"),
                _ => {}
            }
        }
        if !contiguous {
            let turns: Vec<usize> = s.utterances.iter().map(|u| u.turn_index).collect();
            report.push(
                Severity::Error,
                sid,
                format!("non-contiguous turn_index {turns:?}"),
            );
        }
    }
    report
}
