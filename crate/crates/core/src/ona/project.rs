use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{GroupTag, OnaError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub grand_mean: Vec<f64>,
    pub axis_x: Vec<f64>,
    pub axis_y: Vec<f64>,
    pub points: Vec<[f64; 2]>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn flip_to_positive_pivot(v: &mut [f64]) {
    let pivot = v.iter().copied().fold(0.0f64, |best, x| if x.abs() > best.abs() { x } else { best });
    if pivot < 0.0 {
        v.iter_mut().for_each(|x| *x = -*x);
    }
}

/// Means rotation on x, leading residual singular direction on y.
///
/// Vectors are centered at their grand mean; `axis_x` points from the LOW
/// mean to the HIGH mean; `axis_y` is the first right singular vector of the
/// centered data after its `axis_x` component is removed.
pub fn project_points(vectors: &[Vec<f64>], tags: &[GroupTag]) -> Result<Projection, OnaError> {
    if vectors.len() != tags.len() {
        return Err(OnaError::DimensionMismatch);
    }
    for tag in [GroupTag::High, GroupTag::Low] {
        let got = tags.iter().filter(|&&t| t == tag).count();
        if got < 2 {
            return Err(OnaError::TooFewUnits { tag, needed: 2, got });
        }
    }
    let d = vectors[0].len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(OnaError::DimensionMismatch);
    }
    let n = vectors.len();

    let mut grand_mean = vec![0.0; d];
    for v in vectors {
        grand_mean.iter_mut().zip(v).for_each(|(m, x)| *m += x);
    }
    grand_mean.iter_mut().for_each(|m| *m /= n as f64);
    let centered: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&grand_mean).map(|(x, m)| x - m).collect())
        .collect();

    let group_mean = |tag: GroupTag| {
        let mut m = vec![0.0; d];
        let mut c = 0.0;
        for (v, _) in centered.iter().zip(tags).filter(|(_, &t)| t == tag) {
            m.iter_mut().zip(v).for_each(|(a, x)| *a += x);
            c += 1.0;
        }
        m.iter_mut().for_each(|a| *a /= c);
        m
    };
    let diff: Vec<f64> = group_mean(GroupTag::High)
        .iter()
        .zip(group_mean(GroupTag::Low))
        .map(|(h, l)| h - l)
        .collect();
    let norm = dot(&diff, &diff).sqrt();
    if norm < 1e-12 {
        return Err(OnaError::IdenticalGroupMeans);
    }
    let axis_x: Vec<f64> = diff.iter().map(|x| x / norm).collect();

    let residual = DMatrix::from_fn(n, d, |i, j| {
        let along = dot(&centered[i], &axis_x);
        centered[i][j] - along * axis_x[j]
    });
    let svd = residual.svd(false, true);
    let v_t = svd.v_t.expect("right singular vectors requested");
    let (best, smax) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |b, (i, &s)| if s > b.1 { (i, s) } else { b });

    let mut axis_y: Vec<f64> = if smax > 1e-12 {
        v_t.row(best).iter().copied().collect()
    } else {
        // Rank-one configuration: any direction orthogonal to x will do.
        let j = (0..d)
            .min_by(|&a, &b| axis_x[a].abs().total_cmp(&axis_x[b].abs()))
            .expect("non-empty dimension");
        let mut e = vec![0.0; d];
        e[j] = 1.0;
        e
    };
    let along = dot(&axis_y, &axis_x);
    axis_y.iter_mut().zip(&axis_x).for_each(|(y, x)| *y -= along * x);
    let ny = dot(&axis_y, &axis_y).sqrt();
    axis_y.iter_mut().for_each(|y| *y /= ny);
    flip_to_positive_pivot(&mut axis_y);

    let points = centered.iter().map(|v| [dot(v, &axis_x), dot(v, &axis_y)]).collect();
    Ok(Projection {
        grand_mean,
        axis_x,
        axis_y,
        points,
    })
}

/// Projects normalized transition vectors; zero vectors must already be excluded.
pub fn project_units(vectors: &[super::TransitionVector], tags: &[GroupTag]) -> Result<Projection, OnaError> {
    let dense: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.normalized.clone().ok_or(OnaError::DimensionMismatch))
        .collect::<Result<_, _>>()?;
    project_points(&dense, tags)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Networks {
    pub k: usize,
    pub n_high: usize,
    pub n_low: usize,
    /// `k × k`, row = source, column = target.
    pub mean_high: Vec<Vec<f64>>,
    pub mean_low: Vec<Vec<f64>>,
    /// `mean_high − mean_low`.
    pub subtraction: Vec<Vec<f64>>,
    pub self_loops_high: Vec<f64>,
    pub self_loops_low: Vec<f64>,
    pub self_loops_subtraction: Vec<f64>,
}

pub fn mean_and_subtraction_networks(vectors: &[Vec<f64>], tags: &[GroupTag], k: usize) -> Result<Networks, OnaError> {
    if vectors.len() != tags.len() || vectors.iter().any(|v| v.len() != k * k) {
        return Err(OnaError::DimensionMismatch);
    }
    let mean = |tag: GroupTag| -> Result<(Vec<Vec<f64>>, usize), OnaError> {
        let mut sum = vec![0.0; k * k];
        let mut count = 0;
        for (v, _) in vectors.iter().zip(tags).filter(|(_, &t)| t == tag) {
            sum.iter_mut().zip(v).for_each(|(a, x)| *a += x);
            count += 1;
        }
        if count == 0 {
            return Err(OnaError::EmptyGroup(tag));
        }
        Ok((sum.chunks(k).map(|r| r.iter().map(|x| x / count as f64).collect()).collect(), count))
    };
    let (mean_high, n_high) = mean(GroupTag::High)?;
    let (mean_low, n_low) = mean(GroupTag::Low)?;
    let subtraction: Vec<Vec<f64>> = mean_high
        .iter()
        .zip(&mean_low)
        .map(|(h, l)| h.iter().zip(l).map(|(a, b)| a - b).collect())
        .collect();
    let diag = |m: &Vec<Vec<f64>>| (0..k).map(|i| m[i][i]).collect::<Vec<f64>>();
    Ok(Networks {
        k,
        n_high,
        n_low,
        self_loops_high: diag(&mean_high),
        self_loops_low: diag(&mean_low),
        self_loops_subtraction: diag(&subtraction),
        mean_high,
        mean_low,
        subtraction,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoRegistration {
    pub nodes: Vec<[f64; 2]>,
    /// Pearson correlation between points and network centroids per axis;
    /// `None` when either side has no variance.
    pub fit_correlation: [Option<f64>; 2],
}

/// Node weights of each unit's centroid: every edge contributes half its
/// weight to each endpoint.
fn centroid_weights(vectors: &[Vec<f64>], k: usize) -> DMatrix<f64> {
    DMatrix::from_fn(vectors.len(), k, |u, node| {
        let w = &vectors[u];
        let total: f64 = w.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        let out: f64 = (0..k).map(|j| w[node * k + j]).sum();
        let inc: f64 = (0..k).map(|i| w[i * k + node]).sum();
        0.5 * (out + inc) / total
    })
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    let scale = saa.sqrt() * sbb.sqrt();
    (scale > 1e-24).then(|| (sab / scale).clamp(-1.0, 1.0))
}

/// Least-squares node positions so that each unit's weighted edge-midpoint
/// centroid lands as close as possible to its projected point.
pub fn co_register(vectors: &[Vec<f64>], points: &[[f64; 2]], k: usize) -> Result<CoRegistration, OnaError> {
    if vectors.len() != points.len() || vectors.iter().any(|v| v.len() != k * k) {
        return Err(OnaError::DimensionMismatch);
    }
    if vectors.len() < k {
        return Err(OnaError::SingularNormalEquations);
    }
    let c = centroid_weights(vectors, k);
    let p = DMatrix::from_fn(points.len(), 2, |i, j| points[i][j]);
    let svd = c.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax == 0.0 || smin <= smax * 1e-10 {
        return Err(OnaError::SingularNormalEquations);
    }
    let nodes = svd.solve(&p, 0.0).map_err(|_| OnaError::SingularNormalEquations)?;
    let fitted = &c * &nodes;
    let col = |m: &DMatrix<f64>, j: usize| m.column(j).iter().copied().collect::<Vec<f64>>();
    Ok(CoRegistration {
        nodes: (0..k).map(|i| [nodes[(i, 0)], nodes[(i, 1)]]).collect(),
        fit_correlation: [pearson(&col(&p, 0), &col(&fitted, 0)), pearson(&col(&p, 1), &col(&fitted, 1))],
    })
}

/// Evenly spaced nodes on a circle scaled to the spread of the points.
pub(crate) fn circular_layout(k: usize, points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let r = points
        .iter()
        .flat_map(|p| [p[0].abs(), p[1].abs()])
        .fold(0.0f64, f64::max);
    let r = if r > 0.0 { r } else { 1.0 };
    (0..k)
        .map(|i| {
            let a = std::f64::consts::TAU * i as f64 / k as f64;
            [r * a.cos(), r * a.sin()]
        })
        .collect()
}
