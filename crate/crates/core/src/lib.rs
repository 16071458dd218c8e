//! Analytics for coded multi-party discussions.
//!
//! The crate covers the full chain from a coded transcript corpus to the
//! artifacts used to study discussion quality:
//!
//! * [`corpus`]: data model, file ingestion and validation, built-in move schemes.
//! * [`reliability`]: Cohen's kappa, r_wg and one-way ICC.
//! * [`clustering`]: PCA reduction, HDBSCAN, centroid merging and c-TF-IDF keywords.
//! * [`alignment`]: LIFT matrices and aligned/novel cluster verdicts.
//! * [`quality`]: random-intercept mixed model fitted by profiled REML.
//! * [`ona`]: ordered transition networks, projection and subtraction networks.
//! * [`synth`]: synthetic corpora with planted structure.
//! * [`pipeline`]: end-to-end orchestration and report rendering.

pub mod alignment;
pub mod clustering;
pub mod corpus;
pub mod ona;
pub mod pipeline;
pub mod quality;
pub mod reliability;
pub mod synth;

mod svg;

pub use corpus::{Corpus, MoveScheme, Session, Utterance};
