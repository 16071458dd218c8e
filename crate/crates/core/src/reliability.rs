//! Inter-rater agreement statistics: Cohen's kappa, r_wg and one-way ICC.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ReliabilityError {
    #[error("label sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate scale [{min}, {max}]")]
    DegenerateScale { min: f64, max: f64 },
    #[error("target {0} has fewer than 2 ratings")]
    TooFewRatings(usize),
    #[error("rating {value} for target {target} outside [{min}, {max}]")]
    OutOfScale {
        target: usize,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("unbalanced design: targets have differing rater counts")]
    UnbalancedDesign,
    #[error("at least 2 targets required, got {0}")]
    TooFewTargets(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub kappa: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub n: usize,
    /// Both raters used one identical constant label, so chance agreement is 1.
    pub degenerate: bool,
}

/// Cohen's kappa for two raters over the same items.
pub fn cohen_kappa<L: Ord>(labels_a: &[L], labels_b: &[L]) -> Result<Kappa, ReliabilityError> {
    if labels_a.len() != labels_b.len() {
        return Err(ReliabilityError::LengthMismatch(
            labels_a.len(),
            labels_b.len(),
        ));
    }
    let n = labels_a.len();
    if n == 0 {
        return Err(ReliabilityError::EmptyInput);
    }
    let mut marg_a: BTreeMap<&L, u64> = BTreeMap::new();
    let mut marg_b: BTreeMap<&L, u64> = BTreeMap::new();
    let mut agree = 0u64;
    for (a, b) in labels_a.iter().zip(labels_b) {
        *marg_a.entry(a).or_default() += 1;
        *marg_b.entry(b).or_default() += 1;
        if a == b {
            agree += 1;
        }
    }
    // Work in integer units of 1/n² so p_o and p_e share one exact denominator.
    let n2 = (n as i128) * (n as i128);
    let chance: i128 = marg_a
        .iter()
        .map(|(l, &ca)| ca as i128 * marg_b.get(l).copied().unwrap_or(0) as i128)
        .sum();
    let observed = agree as i128 * n as i128;
    let p_o = agree as f64 / n as f64;
    let p_e = chance as f64 / n2 as f64;
    if chance == n2 {
        return Ok(Kappa {
            kappa: 1.0,
            observed_agreement: p_o,
            expected_agreement: 1.0,
            n,
            degenerate: true,
        });
    }
    Ok(Kappa {
        kappa: (observed - chance) as f64 / (n2 - chance) as f64,
        observed_agreement: p_o,
        expected_agreement: p_e,
        n,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RwgResult {
    pub values: Vec<f64>,
    /// Variance of the null rating distribution (σ_E²).
    pub null_variance: f64,
    pub null_distribution: String,
    pub clamped: bool,
}

impl RwgResult {
    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

fn sample_variance(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
}

/// Within-group agreement r_wg = 1 − s²/σ_E² per target, against a uniform
/// null over the integer points of `[scale_min, scale_max]`.
///
/// Raw values may be negative; `clamp` maps them into `[0, 1]`.
pub fn rwg(
    ratings: &[Vec<f64>],
    scale_min: f64,
    scale_max: f64,
    clamp: bool,
) -> Result<RwgResult, ReliabilityError> {
    if !(scale_max > scale_min) || !scale_min.is_finite() || !scale_max.is_finite() {
        return Err(ReliabilityError::DegenerateScale {
            min: scale_min,
            max: scale_max,
        });
    }
    if ratings.is_empty() {
        return Err(ReliabilityError::EmptyInput);
    }
    let points = (scale_max - scale_min).round() + 1.0;
    let null_variance = (points * points - 1.0) / 12.0;
    let mut values = Vec::with_capacity(ratings.len());
    for (t, rs) in ratings.iter().enumerate() {
        if rs.len() < 2 {
            return Err(ReliabilityError::TooFewRatings(t));
        }
        check_scale(t, rs, scale_min, scale_max)?;
        let v = 1.0 - sample_variance(rs) / null_variance;
        values.push(if clamp { v.clamp(0.0, 1.0) } else { v });
    }
    Ok(RwgResult {
        values,
        null_variance,
        null_distribution: "uniform".to_string(),
        clamped: clamp,
    })
}

fn check_scale(target: usize, rs: &[f64], min: f64, max: f64) -> Result<(), ReliabilityError> {
    match rs.iter().find(|&&r| !(min..=max).contains(&r)) {
        Some(&value) => Err(ReliabilityError::OutOfScale {
            target,
            value,
            min,
            max,
        }),
        None => Ok(()),
    }
}

/// Ratings of targets (rows) by raters (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingMatrix {
    pub targets: Vec<String>,
    pub ratings: Vec<Vec<f64>>,
    pub scale_min: f64,
    pub scale_max: f64,
}

impl RatingMatrix {
    pub fn new(
        targets: Vec<String>,
        ratings: Vec<Vec<f64>>,
        scale_min: f64,
        scale_max: f64,
    ) -> Result<Self, ReliabilityError> {
        if !(scale_max > scale_min) {
            return Err(ReliabilityError::DegenerateScale {
                min: scale_min,
                max: scale_max,
            });
        }
        if targets.len() != ratings.len() {
            return Err(ReliabilityError::LengthMismatch(targets.len(), ratings.len()));
        }
        for (t, rs) in ratings.iter().enumerate() {
            if rs.len() < 2 {
                return Err(ReliabilityError::TooFewRatings(t));
            }
            check_scale(t, rs, scale_min, scale_max)?;
        }
        Ok(Self {
            targets,
            ratings,
            scale_min,
            scale_max,
        })
    }

    /// Builds the matrix from long-format `(target, rater, rating)` rows.
    /// Targets and raters are ordered by id; absent cells shorten a row,
    /// which ICC later rejects as unbalanced.
    pub fn from_long<'a>(
        rows: impl IntoIterator<Item = (&'a str, &'a str, f64)>,
        scale_min: f64,
        scale_max: f64,
    ) -> Result<Self, ReliabilityError> {
        let mut by_target: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
        for (t, r, v) in rows {
            by_target.entry(t).or_default().insert(r, v);
        }
        let targets = by_target.keys().map(|t| t.to_string()).collect();
        let ratings = by_target
            .values()
            .map(|m| m.values().copied().collect())
            .collect();
        Self::new(targets, ratings, scale_min, scale_max)
    }

    pub fn raters_per_target(&self) -> BTreeSet<usize> {
        self.ratings.iter().map(Vec::len).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Icc {
    /// Single-rater reliability, one-way random effects.
    pub icc1: f64,
    /// Reliability of the mean of `k` raters, one-way random effects.
    pub icc2: f64,
    pub msb: f64,
    pub msw: f64,
    pub k: usize,
    pub n_targets: usize,
    /// Within-target mean square was zero.
    pub degenerate: bool,
}

pub const ICC_FORM: &str = "one-way random effects; ICC(1) single rater, ICC(2) average of k raters";

/// One-way random-effects ANOVA intraclass correlations.
pub fn icc_oneway(m: &RatingMatrix) -> Result<Icc, ReliabilityError> {
    let n = m.ratings.len();
    if n < 2 {
        return Err(ReliabilityError::TooFewTargets(n));
    }
    let k = m.ratings[0].len();
    if m.ratings.iter().any(|r| r.len() != k) {
        return Err(ReliabilityError::UnbalancedDesign);
    }
    if k < 2 {
        return Err(ReliabilityError::TooFewRatings(0));
    }
    let means: Vec<f64> = m
        .ratings
        .iter()
        .map(|r| r.iter().sum::<f64>() / k as f64)
        .collect();
    let grand = means.iter().sum::<f64>() / n as f64;
    let ssb: f64 = means.iter().map(|mu| (mu - grand).powi(2)).sum::<f64>() * k as f64;
    let ssw: f64 = m
        .ratings
        .iter()
        .zip(&means)
        .map(|(r, mu)| r.iter().map(|x| (x - mu).powi(2)).sum::<f64>())
        .sum();
    let msb = ssb / (n - 1) as f64;
    let msw = ssw / (n * (k - 1)) as f64;
    let scale = grand.abs().max(1.0);
    if msw <= f64::EPSILON * scale * scale {
        return Ok(Icc {
            icc1: 1.0,
            icc2: 1.0,
            msb,
            msw,
            k,
            n_targets: n,
            degenerate: true,
        });
    }
    Ok(Icc {
        icc1: (msb - msw) / (msb + (k - 1) as f64 * msw),
        icc2: (msb - msw) / msb,
        msb,
        msw,
        k,
        n_targets: n,
        degenerate: false,
    })
}
