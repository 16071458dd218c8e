use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{PipelineError, Stage};
use crate::reliability::{cohen_kappa, icc_oneway, rwg, Icc, Kappa, RatingMatrix, RwgResult, ICC_FORM};

/// One row of a long-format ratings file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingRow {
    pub target_id: String,
    pub rater_id: String,
    pub rating: f64,
}

/// One item coded by two raters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelPair {
    pub item_id: String,
    pub label_a: String,
    pub label_b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReliabilityStats {
    pub n_targets: usize,
    pub n_ratings: usize,
    pub scale_min: f64,
    pub scale_max: f64,
    pub icc_form: String,
    pub icc: Icc,
    pub rwg: RwgResult,
    pub rwg_mean: f64,
    pub kappa: Option<Kappa>,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, PipelineError> {
    let err = |e: csv::Error| PipelineError::new(Stage::Reliability, format!("{}: {e}", path.display()));
    let mut r = csv::Reader::from_path(path).map_err(err)?;
    r.deserialize().collect::<Result<Vec<T>, _>>().map_err(err)
}

/// Reads a `target_id,rater_id,rating` CSV.
pub fn read_ratings(path: &Path) -> Result<Vec<RatingRow>, PipelineError> {
    read_csv(path)
}

/// Reads an `item_id,label_a,label_b` CSV.
pub fn read_label_pairs(path: &Path) -> Result<Vec<LabelPair>, PipelineError> {
    read_csv(path)
}

/// ICC(1)/ICC(2) and per-target r_wg over `rows`, plus Cohen's kappa when
/// coded label pairs are supplied.
pub fn reliability_stats(
    rows: &[RatingRow],
    scale_min: f64,
    scale_max: f64,
    clamp_rwg: bool,
    pairs: Option<&[LabelPair]>,
) -> Result<ReliabilityStats, PipelineError> {
    let err = |e: crate::reliability::ReliabilityError| PipelineError::new(Stage::Reliability, e.to_string());
    let m = RatingMatrix::from_long(
        rows.iter().map(|r| (r.target_id.as_str(), r.rater_id.as_str(), r.rating)),
        scale_min,
        scale_max,
    )
    .map_err(err)?;
    let icc = icc_oneway(&m).map_err(err)?;
    let rwg = rwg(&m.ratings, scale_min, scale_max, clamp_rwg).map_err(err)?;
    let kappa = pairs
        .map(|ps| {
            let a: Vec<&str> = ps.iter().map(|p| p.label_a.as_str()).collect();
            let b: Vec<&str> = ps.iter().map(|p| p.label_b.as_str()).collect();
            cohen_kappa(&a, &b)
        })
        .transpose()
        .map_err(err)?;
    Ok(ReliabilityStats {
        n_targets: m.targets.len(),
        n_ratings: rows.len(),
        scale_min,
        scale_max,
        icc_form: ICC_FORM.to_string(),
        icc,
        rwg_mean: rwg.mean(),
        rwg,
        kappa,
    })
}
