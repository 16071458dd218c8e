use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::design::DesignData;
use super::table::{p_value, DfMethod};
use super::QualityError;

const GOLDEN: f64 = 0.618_033_988_749_894_9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct RemlOptions {
    pub theta_max: f64,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for RemlOptions {
    fn default() -> Self {
        Self {
            theta_max: 1e6,
            tolerance: 1e-8,
            max_iter: 10_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmFit {
    /// Names of the estimated columns, intercept first.
    pub terms: Vec<String>,
    pub categories: Vec<Option<String>>,
    pub beta: Vec<f64>,
    pub se: Vec<f64>,
    pub t_values: Vec<f64>,
    pub p_values: Vec<f64>,
    pub cov_beta: Vec<Vec<f64>>,
    pub sigma_group: f64,
    pub sigma_resid: f64,
    /// Variance ratio σ_b² / σ_e² at the optimum.
    pub theta: f64,
    /// −2 × restricted log-likelihood at the optimum.
    pub reml_criterion: f64,
    pub converged: bool,
    pub iterations: usize,
    pub at_boundary: bool,
    pub identifiable: bool,
    pub df_method: DfMethod,
    pub df: f64,
    pub n_obs: usize,
    pub n_groups: usize,
    /// All-zero predictor columns removed before fitting.
    pub dropped_columns: Vec<String>,
    pub warnings: Vec<String>,
}

/// Per-group sufficient statistics for evaluating the profiled criterion.
struct Problem {
    x: DMatrix<f64>,
    y: DVector<f64>,
    groups: Vec<Vec<usize>>,
}

struct Eval {
    criterion: f64,
    beta: DVector<f64>,
    sigma2: f64,
    xtvx_inv: DMatrix<f64>,
}

impl Problem {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn p(&self) -> usize {
        self.x.ncols()
    }

    fn evaluate(&self, theta: f64) -> Option<Eval> {
        let (n, p) = (self.n(), self.p());
        // V_g = I + θJ, so V_g⁻¹ = I − c_g J with c_g = θ / (1 + n_g θ).
        let mut a = self.x.transpose() * &self.x;
        let mut b = self.x.transpose() * &self.y;
        let mut log_det_v = 0.0;
        let mut shrink = Vec::with_capacity(self.groups.len());
        for rows in &self.groups {
            let ng = rows.len() as f64;
            let c = theta / (1.0 + ng * theta);
            log_det_v += (ng * theta).ln_1p();
            shrink.push(c);
            if c == 0.0 {
                continue;
            }
            let sx = DVector::from_fn(p, |j, _| rows.iter().map(|&i| self.x[(i, j)]).sum());
            let sy: f64 = rows.iter().map(|&i| self.y[i]).sum();
            a -= c * &sx * sx.transpose();
            b -= c * sy * &sx;
        }
        let chol = a.clone().cholesky()?;
        let beta = chol.solve(&b);
        let r = &self.y - &self.x * &beta;
        let mut q = r.norm_squared();
        for (rows, c) in self.groups.iter().zip(&shrink) {
            let s: f64 = rows.iter().map(|&i| r[i]).sum();
            q -= c * s * s;
        }
        let dof = (n - p) as f64;
        let sigma2 = (q / dof).max(0.0);
        let log_det_a: f64 = chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum();
        let criterion = dof * ((2.0 * std::f64::consts::PI * sigma2).ln() + 1.0) + log_det_v + log_det_a;
        Some(Eval {
            criterion,
            beta,
            sigma2,
            xtvx_inv: chol.inverse(),
        })
    }

    fn criterion(&self, theta: f64) -> f64 {
        self.evaluate(theta).map_or(f64::INFINITY, |e| e.criterion)
    }
}

fn prepare(data: &DesignData) -> Result<(Problem, Vec<usize>, Vec<String>), QualityError> {
    let n = data.n_obs();
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for j in 0..data.n_cols() {
        if j > 0 && data.x.iter().all(|row| row[j] == 0.0) {
            dropped.push(data.column_names[j].clone());
        } else {
            kept.push(j);
        }
    }
    let p = kept.len();
    if n <= p {
        return Err(QualityError::TooFewObservations { n, p });
    }
    // Canonical row order makes every floating-point sum independent of the
    // order sessions arrive in.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        data.groups[data.group_index[a]]
            .cmp(&data.groups[data.group_index[b]])
            .then_with(|| data.y[a].total_cmp(&data.y[b]))
            .then_with(|| {
                data.x[a]
                    .iter()
                    .zip(&data.x[b])
                    .map(|(u, v)| u.total_cmp(v))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            })
    });
    let x = DMatrix::from_fn(n, p, |i, j| data.x[order[i]][kept[j]]);

    // Sequential Gram–Schmidt: a column nearly inside the span of the earlier
    // accepted columns is aliased.
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut aliased = Vec::new();
    for (j, &col) in kept.iter().enumerate() {
        let orig = x.column(j).into_owned();
        let scale = orig.norm();
        let mut v = orig;
        for _ in 0..2 {
            for q in &basis {
                let proj = q.dot(&v);
                v -= proj * q;
            }
        }
        let norm = v.norm();
        if norm <= 1e-10 * scale.max(f64::MIN_POSITIVE) {
            aliased.push(data.column_names[col].clone());
        } else {
            basis.push(v / norm);
        }
    }
    if !aliased.is_empty() {
        return Err(QualityError::RankDeficientDesign(aliased));
    }

    let mut groups = vec![Vec::new(); data.n_groups()];
    for (i, &row) in order.iter().enumerate() {
        groups[data.group_index[row]].push(i);
    }
    groups.retain(|g| !g.is_empty());
    let y = DVector::from_iterator(n, order.iter().map(|&i| data.y[i]));
    Ok((Problem { x, y, groups }, kept, dropped))
}

/// Profiled −2 REML log-likelihood at a given variance ratio.
pub fn reml_criterion(data: &DesignData, theta: f64) -> Result<f64, QualityError> {
    let (problem, _, _) = prepare(data)?;
    Ok(problem.criterion(theta))
}

/// Minimizes the profiled criterion over `[0, theta_max]`: a log-spaced scan
/// locates the basin, golden-section search refines it.
fn optimize(problem: &Problem, opts: &RemlOptions) -> Result<(f64, usize), QualityError> {
    let mut grid = vec![0.0];
    let decades = 12.0;
    let lo = opts.theta_max.log10() - decades;
    let steps = 10 * decades as usize;
    grid.extend((0..=steps).map(|i| 10f64.powf(lo + decades * i as f64 / steps as f64)));
    *grid.last_mut().expect("non-empty grid") = opts.theta_max;

    let values: Vec<f64> = grid.iter().map(|&t| problem.criterion(t)).collect();
    let best = values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("non-empty grid");

    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(grid.len() - 1)];
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let mut fc = problem.criterion(c);
    let mut fd = problem.criterion(d);
    let mut iterations = 0;
    while b - a > opts.tolerance && b - a > 4.0 * f64::EPSILON * b.abs() {
        if iterations >= opts.max_iter {
            return Err(QualityError::NonConvergence(opts.max_iter));
        }
        iterations += 1;
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = problem.criterion(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = problem.criterion(d);
        }
    }

    // Compare the refined point against the bracket ends and the scan minimum.
    let mid = 0.5 * (a + b);
    let candidates = [(mid, problem.criterion(mid)), (a, problem.criterion(a)), (b, problem.criterion(b)), (grid[best], values[best])];
    let (theta, _) = candidates
        .iter()
        .copied()
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .expect("candidates");
    Ok((theta, iterations))
}

pub fn fit_reml(data: &DesignData, opts: &RemlOptions) -> Result<LmmFit, QualityError> {
    let (problem, kept, dropped) = prepare(data)?;
    let mut warnings = data.warnings.clone();
    for name in &dropped {
        warnings.push(format!("column {name:?} is all zero and was dropped"));
    }

    let identifiable = problem.groups.iter().any(|g| g.len() > 1);
    let (theta, iterations) = if identifiable {
        optimize(&problem, opts)?
    } else {
        warnings.push(
            "every group has a single session: group and residual variance are not separately identifiable; theta fixed at 0"
                .to_string(),
        );
        (0.0, 0)
    };
    let boundary_tol = opts.tolerance.max(1e-6);
    let at_boundary = !identifiable || theta <= boundary_tol || opts.theta_max - theta <= boundary_tol;
    if identifiable && theta <= boundary_tol {
        warnings.push("group variance converged to the zero boundary".to_string());
    } else if identifiable && at_boundary {
        warnings.push("variance ratio converged to its upper bound".to_string());
    }

    let eval = problem
        .evaluate(theta)
        .ok_or_else(|| QualityError::RankDeficientDesign(Vec::new()))?;
    let p = problem.p();
    let beta: Vec<f64> = eval.beta.iter().copied().collect();
    let cov = &eval.xtvx_inv * eval.sigma2;
    let se: Vec<f64> = (0..p).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    let t_values: Vec<f64> = beta.iter().zip(&se).map(|(b, s)| b / s).collect();

    let n_groups = problem.groups.len();
    let df_method = DfMethod::default();
    let df = df_method.df(problem.n(), p, n_groups);
    let p_values = t_values.iter().map(|&t| p_value(t, df)).collect();

    Ok(LmmFit {
        terms: kept.iter().map(|&j| data.column_names[j].clone()).collect(),
        categories: kept.iter().map(|&j| data.column_categories[j].clone()).collect(),
        beta,
        se,
        t_values,
        p_values,
        cov_beta: (0..p).map(|i| (0..p).map(|j| cov[(i, j)]).collect()).collect(),
        sigma_group: (theta * eval.sigma2).sqrt(),
        sigma_resid: eval.sigma2.sqrt(),
        theta,
        reml_criterion: eval.criterion,
        converged: true,
        iterations,
        at_boundary,
        identifiable,
        df_method,
        df,
        n_obs: problem.n(),
        n_groups,
        dropped_columns: dropped,
        warnings,
    })
}
