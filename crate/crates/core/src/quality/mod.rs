//! Random-intercept linear mixed model of session quality on move frequencies.
//!
//! `y = Xβ + Zb + ε` with one intercept per group, `b ~ N(0, σ_b² I)` and
//! `ε ~ N(0, σ_e² I)`, estimated by profiled REML over `θ = σ_b² / σ_e²`.

mod design;
mod reml;
mod table;

use thiserror::Error;

pub use design::{build_design, DesignData, PredictorScale};
pub use reml::{fit_reml, reml_criterion, LmmFit, RemlOptions};
pub use table::{significance_marker, wald_table, CoefficientRow, DfMethod, ResultsTable, VarianceRow, SIGNIFICANCE_LEGEND};

use crate::corpus::CorpusError;

#[derive(Debug, Error)]
pub enum QualityError {
    #[error("no session carries an ic_score")]
    NoScoredSessions,
    #[error("design is rank deficient; aliased columns: {0:?}")]
    RankDeficientDesign(Vec<String>),
    #[error("optimizer did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("need more observations ({n}) than fixed effects ({p})")]
    TooFewObservations { n: usize, p: usize },
    #[error("unknown df method {0:?} (expected residual, n-minus-p or normal)")]
    UnknownDfMethod(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}
