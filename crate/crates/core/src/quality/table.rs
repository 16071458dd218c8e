use std::fmt::{self, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use super::design::INTERCEPT;
use super::reml::LmmFit;
use super::QualityError;

pub const SIGNIFICANCE_LEGEND: &str = "· p < .1, * p < .05, ** p < .001";

/// Degrees of freedom for the Wald t tests.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DfMethod {
    /// n − p − (groups − 1).
    #[default]
    Residual,
    /// n − p.
    NMinusP,
    /// Standard normal reference.
    Normal,
}

impl DfMethod {
    pub fn name(self) -> &'static str {
        match self {
            DfMethod::Residual => "residual",
            DfMethod::NMinusP => "n-minus-p",
            DfMethod::Normal => "normal",
        }
    }

    /// Infinite for the normal reference; otherwise at least 1.
    pub fn df(self, n: usize, p: usize, groups: usize) -> f64 {
        let raw = match self {
            DfMethod::Residual => n as f64 - p as f64 - (groups as f64 - 1.0).max(0.0),
            DfMethod::NMinusP => n as f64 - p as f64,
            DfMethod::Normal => return f64::INFINITY,
        };
        raw.max(1.0)
    }
}

impl fmt::Display for DfMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DfMethod {
    type Err = QualityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "residual" => Ok(DfMethod::Residual),
            "n-minus-p" => Ok(DfMethod::NMinusP),
            "normal" => Ok(DfMethod::Normal),
            other => Err(QualityError::UnknownDfMethod(other.to_string())),
        }
    }
}

/// Two-sided p-value of a t statistic; `df = ∞` uses the normal.
pub(crate) fn p_value(t: f64, df: f64) -> f64 {
    if !t.is_finite() {
        return if t.is_nan() { f64::NAN } else { 0.0 };
    }
    let sf = if df.is_infinite() {
        Normal::new(0.0, 1.0).expect("standard normal").sf(t.abs())
    } else {
        StudentsT::new(0.0, 1.0, df).expect("positive df").sf(t.abs())
    };
    (2.0 * sf).min(1.0)
}

pub fn significance_marker(p: f64) -> &'static str {
    if p < 0.001 {
        "**"
    } else if p < 0.05 {
        "*"
    } else if p < 0.1 {
        "·"
    } else {
        ""
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientRow {
    pub category: Option<String>,
    pub term: String,
    pub estimate: f64,
    pub std_error: f64,
    pub t_value: f64,
    pub p_value: f64,
    pub marker: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceRow {
    pub name: String,
    pub sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    /// Predictors in design order, intercept last.
    pub rows: Vec<CoefficientRow>,
    pub random_effects: Vec<VarianceRow>,
    pub df_method: DfMethod,
    /// `None` for the normal reference.
    pub df: Option<f64>,
    pub legend: String,
    pub n_obs: usize,
    pub n_groups: usize,
    pub reml_criterion: f64,
    pub at_boundary: bool,
    pub identifiable: bool,
    pub dropped_columns: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn wald_table(fit: &LmmFit, df_method: DfMethod) -> ResultsTable {
    let df = df_method.df(fit.n_obs, fit.beta.len(), fit.n_groups);
    let row = |j: usize| {
        let p = p_value(fit.t_values[j], df);
        CoefficientRow {
            category: fit.categories[j].clone(),
            term: fit.terms[j].clone(),
            estimate: fit.beta[j],
            std_error: fit.se[j],
            t_value: fit.t_values[j],
            p_value: p,
            marker: significance_marker(p).to_string(),
        }
    };
    let (intercepts, predictors): (Vec<usize>, Vec<usize>) =
        (0..fit.terms.len()).partition(|&j| fit.terms[j] == INTERCEPT);
    let rows = predictors.into_iter().chain(intercepts).map(row).collect();
    ResultsTable {
        rows,
        random_effects: vec![
            VarianceRow {
                name: "Group (Intercept)".to_string(),
                sd: fit.sigma_group,
            },
            VarianceRow {
                name: "Residual".to_string(),
                sd: fit.sigma_resid,
            },
        ],
        df_method,
        df: df.is_finite().then_some(df),
        legend: SIGNIFICANCE_LEGEND.to_string(),
        n_obs: fit.n_obs,
        n_groups: fit.n_groups,
        reml_criterion: fit.reml_criterion,
        at_boundary: fit.at_boundary,
        identifiable: fit.identifiable,
        dropped_columns: fit.dropped_columns.clone(),
        warnings: fit.warnings.clone(),
    }
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        format!("{p:.1e}")
    } else {
        let s = format!("{p:.3}");
        s.strip_prefix('0').map(str::to_string).unwrap_or(s)
    }
}

impl ResultsTable {
    pub fn to_markdown(&self) -> String {
        let mut out = String::new();
        out.push_str("| Category | Term | Estimate (B) | Std. Error | t value | p value | |\n");
        out.push_str("|---|---|---:|---:|---:|---:|---|\n");
        let mut last: Option<&str> = None;
        for r in &self.rows {
            let cat = r.category.as_deref().unwrap_or("");
            let shown = if Some(cat) == last { "" } else { cat };
            last = Some(cat);
            let _ = writeln!(
                out,
                "| {shown} | {} | {:.3} | {:.3} | {:.3} | {} | {} |",
                r.term,
                r.estimate,
                r.std_error,
                r.t_value,
                fmt_p(r.p_value),
                r.marker
            );
        }
        for (i, v) in self.random_effects.iter().enumerate() {
            let head = if i == 0 { "Random Effects & SD" } else { "" };
            let _ = writeln!(out, "| {head} | {} | {:.3} | | | | |", v.name, v.sd);
        }
        let _ = writeln!(out, "\n{}", self.legend);
        let df = self.df.map_or_else(|| "∞".to_string(), |d| format!("{d}"));
        let _ = writeln!(
            out,
            "\nWald t tests, df method: {} (df = {df}); n = {}, groups = {}.",
            self.df_method, self.n_obs, self.n_groups
        );
        if !self.dropped_columns.is_empty() {
            let _ = writeln!(out, "Dropped all-zero columns: {}.", self.dropped_columns.join(", "));
        }
        for w in &self.warnings {
            let _ = writeln!(out, "Warning: {w}.");
        }
        out
    }
}
