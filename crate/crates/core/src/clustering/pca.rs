use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{ClusterError, EmbeddingSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaProjection {
    #[serde(skip)]
    pub embeddings: Option<EmbeddingSet>,
    pub mean: Vec<f64>,
    /// Principal axes as unit row vectors in the input space.
    pub axes: Vec<Vec<f64>>,
    /// Variance along each axis (divisor n − 1).
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    pub requested_dim: usize,
    /// Numerical rank of the centered data.
    pub rank: usize,
    pub warnings: Vec<String>,
}

impl PcaProjection {
    pub fn reduced(&self) -> &EmbeddingSet {
        self.embeddings.as_ref().expect("projection carries its embeddings")
    }

    pub fn into_reduced(self) -> EmbeddingSet {
        self.embeddings.expect("projection carries its embeddings")
    }

    /// Maps reduced coordinates back into the input space.
    pub fn reconstruct(&self, coords: &[f64]) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, axis) in coords.iter().zip(&self.axes) {
            for (o, a) in out.iter_mut().zip(axis) {
                *o += c * a;
            }
        }
        out
    }
}

/// Projects mean-centered vectors onto their top principal axes, computed by
/// SVD of the centered data matrix.
///
/// Each axis is signed so that its largest-magnitude component is positive.
/// When the centered data has rank below `target_dim`, the output keeps only
/// the achievable rank and records a warning.
pub fn pca_reduce(emb: &EmbeddingSet, target_dim: usize) -> Result<PcaProjection, ClusterError> {
    let n = emb.len();
    let d = emb.dim();
    if target_dim == 0 || target_dim > d {
        return Err(ClusterError::InvalidTargetDim {
            target: target_dim,
            dim: d,
        });
    }
    if n < 2 {
        return Err(ClusterError::TooFewPoints { needed: 2, got: n });
    }

    let mut mean = vec![0.0; d];
    for v in emb.vectors() {
        for (m, x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered = DMatrix::from_fn(n, d, |i, j| emb.vectors()[i][j] - mean[j]);

    let svd = centered.clone().svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sv = &svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].total_cmp(&sv[a]).then(a.cmp(&b)));

    let total: f64 = sv.iter().map(|s| s * s).sum();
    let max_sv = order.first().map_or(0.0, |&i| sv[i]);
    let tol = max_sv * (n.max(d) as f64) * f64::EPSILON;
    let rank = order.iter().filter(|&&i| sv[i] > tol).count();

    let mut warnings = Vec::new();
    let out_dim = if rank < target_dim {
        let achievable = rank.max(1);
        warnings.push(format!(
            "rank deficient: centered data has rank {rank}, reducing to {achievable} instead of {target_dim} dimensions"
        ));
        achievable
    } else {
        target_dim
    };

    let mut axes = Vec::with_capacity(out_dim);
    let mut explained_variance = Vec::with_capacity(out_dim);
    let mut explained_variance_ratio = Vec::with_capacity(out_dim);
    for &i in order.iter().take(out_dim) {
        let mut axis: Vec<f64> = v_t.row(i).iter().copied().collect();
        let pivot = axis
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |best, (j, &x)| {
                if x.abs() > best.1.abs() {
                    (j, x)
                } else {
                    best
                }
            });
        if pivot.1 < 0.0 {
            axis.iter_mut().for_each(|x| *x = -*x);
        }
        axes.push(axis);
        let s2 = sv[i] * sv[i];
        explained_variance.push(s2 / (n - 1) as f64);
        explained_variance_ratio.push(if total > 0.0 { s2 / total } else { 0.0 });
    }

    let vectors: Vec<Vec<f64>> = (0..n)
        .map(|r| {
            axes.iter()
                .map(|axis| {
                    axis.iter()
                        .enumerate()
                        .map(|(j, a)| a * centered[(r, j)])
                        .sum()
                })
                .collect()
        })
        .collect();
    let reduced = EmbeddingSet::from_parts(emb.ids().to_vec(), vectors, out_dim, false);

    Ok(PcaProjection {
        embeddings: Some(reduced),
        mean,
        axes,
        explained_variance,
        explained_variance_ratio,
        requested_dim: target_dim,
        rank,
        warnings,
    })
}
