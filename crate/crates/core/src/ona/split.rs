use serde::{Deserialize, Serialize};

use super::{GroupTag, OnaError};
use crate::corpus::Corpus;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuartileMethod {
    /// Lower cut is the ⌈N/4⌉-th smallest score, upper cut the ⌈N/4⌉-th largest.
    #[default]
    NearestRank,
    /// Linear interpolation between order statistics at (N − 1)·p.
    Linear,
}

impl std::str::FromStr for QuartileMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nearest-rank" => Ok(QuartileMethod::NearestRank),
            "linear" => Ok(QuartileMethod::Linear),
            other => Err(format!("unknown quartile method {other:?} (expected nearest-rank or linear)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartileSplit {
    pub method: QuartileMethod,
    pub q25: f64,
    pub q75: f64,
    pub high: Vec<String>,
    pub low: Vec<String>,
    pub mean_ic_high: f64,
    pub mean_ic_low: f64,
    pub n_units: usize,
}

impl QuartileSplit {
    pub fn tag_of(&self, id: &str) -> Option<GroupTag> {
        if self.high.iter().any(|h| h == id) {
            Some(GroupTag::High)
        } else if self.low.iter().any(|l| l == id) {
            Some(GroupTag::Low)
        } else {
            None
        }
    }

    pub fn summary(&self) -> String {
        format!(
            "High-quality units (IC ≥ {:.2}, n = {}) had a mean score of {:.2}; low-quality units (IC ≤ {:.2}, n = {}) had a mean score of {:.2}.",
            self.q75,
            self.high.len(),
            self.mean_ic_high,
            self.q25,
            self.low.len(),
            self.mean_ic_low
        )
    }
}

fn linear_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Low = scores at or below the lower cut, high = scores at or above the
/// upper cut; ties at a cut stay on the extreme side.
pub fn quartile_split_scores(scores: &[(String, f64)], method: QuartileMethod) -> Result<QuartileSplit, OnaError> {
    let n = scores.len();
    if n < 4 {
        return Err(OnaError::TooFewSessions { needed: 4, got: n });
    }
    let mut sorted: Vec<f64> = scores.iter().map(|s| s.1).collect();
    sorted.sort_by(f64::total_cmp);
    let (q25, q75) = match method {
        QuartileMethod::NearestRank => {
            let k = n.div_ceil(4);
            (sorted[k - 1], sorted[n - k])
        }
        QuartileMethod::Linear => (linear_quantile(&sorted, 0.25), linear_quantile(&sorted, 0.75)),
    };
    if q25 >= q75 {
        return Err(OnaError::DegenerateQuantiles { q25, q75 });
    }
    let pick = |f: &dyn Fn(f64) -> bool| -> (Vec<String>, f64) {
        let members: Vec<&(String, f64)> = scores.iter().filter(|s| f(s.1)).collect();
        let mean = members.iter().map(|s| s.1).sum::<f64>() / members.len() as f64;
        (members.into_iter().map(|s| s.0.clone()).collect(), mean)
    };
    let (high, mean_ic_high) = pick(&|x| x >= q75);
    let (low, mean_ic_low) = pick(&|x| x <= q25);
    Ok(QuartileSplit {
        method,
        q25,
        q75,
        high,
        low,
        mean_ic_high,
        mean_ic_low,
        n_units: n,
    })
}

pub fn quartile_split(corpus: &Corpus, method: QuartileMethod) -> Result<QuartileSplit, OnaError> {
    let scores: Vec<(String, f64)> = corpus
        .scored_sessions()
        .map(|s| (s.session_id.clone(), s.ic_score.expect("scored")))
        .collect();
    quartile_split_scores(&scores, method)
}
