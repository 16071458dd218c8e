//! HDBSCAN over Euclidean vectors.
//!
//! core distances → mutual reachability → Prim MST → single-linkage
//! dendrogram → condensed tree → excess-of-mass selection.

use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{
    euclidean, ClusterDiagnostic, ClusterError, ClusterModel, ClusterParams, EmbeddingSet, NOISE,
};

/// Distances below this are treated as this value, so coincident points get
/// a large but finite density level.
const MIN_DISTANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy)]
struct Merge {
    left: usize,
    right: usize,
    distance: f64,
    size: usize,
}

#[derive(Debug, Clone, Copy)]
struct CondensedEdge {
    parent: usize,
    child: usize,
    lambda: f64,
    size: usize,
}

struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }
}

fn distance_matrix(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    points
        .par_iter()
        .map(|a| points.iter().map(|b| euclidean(a, b)).collect())
        .collect()
}

/// Distance to the `k`-th nearest point, counting the point itself.
fn core_distances(dist: &[Vec<f64>], k: usize) -> Vec<f64> {
    dist.par_iter()
        .map(|row| {
            let mut sorted = row.clone();
            let idx = k.min(row.len()) - 1;
            let (_, kth, _) = sorted.select_nth_unstable_by(idx, |a, b| a.total_cmp(b));
            *kth
        })
        .collect()
}

/// Prim's algorithm on the dense mutual-reachability graph.
/// Returns `(a, b, weight)` edges in insertion order.
fn prim_mst(dist: &[Vec<f64>], core: &[f64]) -> Vec<(usize, usize, f64)> {
    let n = dist.len();
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        for j in 0..n {
            if in_tree[j] {
                continue;
            }
            let mr = dist[current][j].max(core[current]).max(core[j]);
            if mr < best[j] {
                best[j] = mr;
                from[j] = current;
            }
        }
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for j in 0..n {
            if !in_tree[j] && (next == usize::MAX || best[j] < next_w) {
                next = j;
                next_w = best[j];
            }
        }
        in_tree[next] = true;
        edges.push((from[next], next, next_w));
        current = next;
    }
    edges
}

fn single_linkage(n: usize, mut edges: Vec<(usize, usize, f64)>) -> Vec<Merge> {
    edges.sort_by(|a, b| {
        a.2.total_cmp(&b.2)
            .then(a.0.min(a.1).cmp(&b.0.min(b.1)))
            .then(a.0.max(a.1).cmp(&b.0.max(b.1)))
    });
    let mut uf = UnionFind::new(2 * n - 1);
    let mut merges = Vec::with_capacity(n - 1);
    for (a, b, w) in edges {
        let ra = uf.find(a);
        let rb = uf.find(b);
        let node = n + merges.len();
        let size = uf.size[ra] + uf.size[rb];
        merges.push(Merge {
            left: ra,
            right: rb,
            distance: w,
            size,
        });
        uf.parent[ra] = node;
        uf.parent[rb] = node;
        uf.size[node] = size;
    }
    merges
}

fn node_size(n: usize, merges: &[Merge], node: usize) -> usize {
    if node < n {
        1
    } else {
        merges[node - n].size
    }
}

fn leaves_under(n: usize, merges: &[Merge], node: usize, out: &mut Vec<usize>) {
    let mut stack = vec![node];
    while let Some(x) = stack.pop() {
        if x < n {
            out.push(x);
        } else {
            let m = merges[x - n];
            stack.push(m.right);
            stack.push(m.left);
        }
    }
}

/// Walks the dendrogram from the root, keeping only splits where both sides
/// reach `min_cluster_size`. Condensed cluster labels start at `n`.
fn condense(n: usize, merges: &[Merge], min_cluster_size: usize) -> Vec<CondensedEdge> {
    let root = 2 * n - 2;
    let mut relabel = vec![0usize; 2 * n - 1];
    relabel[root] = n;
    let mut next_label = n + 1;
    let mut out = Vec::new();
    let mut stack = vec![root];
    let mut leaves = Vec::new();

    while let Some(node) = stack.pop() {
        let m = merges[node - n];
        let lambda = 1.0 / m.distance.max(MIN_DISTANCE);
        let parent = relabel[node];
        let left_size = node_size(n, merges, m.left);
        let right_size = node_size(n, merges, m.right);
        let big_left = left_size >= min_cluster_size;
        let big_right = right_size >= min_cluster_size;

        let mut fall_out = |child: usize, out: &mut Vec<CondensedEdge>| {
            leaves.clear();
            leaves_under(n, merges, child, &mut leaves);
            for &p in &leaves {
                out.push(CondensedEdge {
                    parent,
                    child: p,
                    lambda,
                    size: 1,
                });
            }
        };

        match (big_left, big_right) {
            (true, true) => {
                for (child, size) in [(m.left, left_size), (m.right, right_size)] {
                    relabel[child] = next_label;
                    out.push(CondensedEdge {
                        parent,
                        child: next_label,
                        lambda,
                        size,
                    });
                    next_label += 1;
                    stack.push(child);
                }
            }
            (false, false) => {
                fall_out(m.left, &mut out);
                fall_out(m.right, &mut out);
            }
            (true, false) | (false, true) => {
                let (keep, drop) = if big_left {
                    (m.left, m.right)
                } else {
                    (m.right, m.left)
                };
                fall_out(drop, &mut out);
                if keep < n {
                    // min_cluster_size == 1 would make a lone point "big";
                    // parameters forbid it, but keep the point accounted for.
                    out.push(CondensedEdge {
                        parent,
                        child: keep,
                        lambda,
                        size: 1,
                    });
                } else {
                    relabel[keep] = parent;
                    stack.push(keep);
                }
            }
        }
    }
    out
}

/// Excess-of-mass cluster selection. Returns selected condensed labels.
fn select_clusters(n: usize, tree: &[CondensedEdge]) -> Vec<usize> {
    let max_label = tree.iter().map(|e| e.parent.max(e.child)).max().unwrap_or(n);
    let n_clusters = max_label + 1 - n;
    let mut birth = vec![0.0f64; n_clusters];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); n_clusters];
    for e in tree.iter().filter(|e| e.child >= n) {
        birth[e.child - n] = e.lambda;
        children[e.parent - n].push(e.child);
    }
    let mut stability = vec![0.0f64; n_clusters];
    for e in tree {
        stability[e.parent - n] += (e.lambda - birth[e.parent - n]) * e.size as f64;
    }

    let mut selected = vec![false; n_clusters];
    // Children always carry larger labels than their parents, so a reverse
    // label sweep visits every cluster after all of its descendants.
    for c in (1..n_clusters).rev() {
        let child_total: f64 = children[c].iter().map(|&ch| stability[ch - n]).sum();
        if child_total > stability[c] {
            stability[c] = child_total;
        } else {
            selected[c] = true;
            let mut stack: Vec<usize> = children[c].clone();
            while let Some(x) = stack.pop() {
                selected[x - n] = false;
                stack.extend(children[x - n].iter().copied());
            }
        }
    }
    (1..n_clusters)
        .filter(|&c| selected[c])
        .map(|c| c + n)
        .collect()
}

fn label_points(n: usize, tree: &[CondensedEdge], selected: &[usize]) -> Vec<Option<usize>> {
    let mut parent_of: BTreeMap<usize, usize> = BTreeMap::new();
    let mut point_parent = vec![n; n];
    for e in tree {
        if e.child < n {
            point_parent[e.child] = e.parent;
        } else {
            parent_of.insert(e.child, e.parent);
        }
    }
    (0..n)
        .map(|p| {
            let mut c = point_parent[p];
            loop {
                if selected.contains(&c) {
                    return Some(c);
                }
                match parent_of.get(&c) {
                    Some(&up) => c = up,
                    None => return None,
                }
            }
        })
        .collect()
}

/// Raw HDBSCAN labels for `points`: cluster index per point or `None` for noise.
/// Cluster indices are ordered by each cluster's lowest point index.
pub(crate) fn hdbscan_labels(
    points: &[Vec<f64>],
    min_cluster_size: usize,
    min_samples: usize,
) -> (Vec<Option<usize>>, Vec<ClusterDiagnostic>) {
    let n = points.len();
    let mut diagnostics = Vec::new();
    if n < min_cluster_size || n < 2 {
        diagnostics.push(ClusterDiagnostic::TooFewPoints { n });
        return (vec![None; n], diagnostics);
    }
    let dist = distance_matrix(points);
    let duplicate_pairs = dist
        .iter()
        .enumerate()
        .map(|(i, row)| row[i + 1..].iter().filter(|&&d| d < MIN_DISTANCE).count())
        .sum();
    if duplicate_pairs > 0 {
        diagnostics.push(ClusterDiagnostic::DegenerateMetric { duplicate_pairs });
    }
    let core = core_distances(&dist, min_samples);
    let mst = prim_mst(&dist, &core);
    let merges = single_linkage(n, mst);
    let tree = condense(n, &merges, min_cluster_size);
    let selected = select_clusters(n, &tree);
    let raw = label_points(n, &tree, &selected);

    let mut order: BTreeMap<usize, usize> = BTreeMap::new();
    for label in raw.iter().flatten() {
        let next = order.len();
        order.entry(*label).or_insert(next);
    }
    (
        raw.into_iter().map(|l| l.map(|c| order[&c])).collect(),
        diagnostics,
    )
}

/// Density-based clustering of `points` with Euclidean distance.
///
/// `min_samples` sets the neighbour rank used for core distances (the point
/// itself counts as its first neighbour). Points in no stable cluster are
/// labelled [`NOISE`]. Centroids are member means in the input space.
pub fn hdbscan_fit(
    points: &EmbeddingSet,
    min_cluster_size: usize,
    min_samples: usize,
) -> Result<ClusterModel, ClusterError> {
    if min_cluster_size < 2 {
        return Err(ClusterError::InvalidParameter(format!(
            "min_cluster_size must be at least 2, got {min_cluster_size}"
        )));
    }
    if min_samples < 1 {
        return Err(ClusterError::InvalidParameter(
            "min_samples must be at least 1".to_string(),
        ));
    }
    let (raw, diagnostics) = hdbscan_labels(points.vectors(), min_cluster_size, min_samples);
    let labels: Vec<i32> = raw
        .iter()
        .map(|l| l.map_or(NOISE, |c| c as i32))
        .collect();

    let mut sums: BTreeMap<i32, Vec<f64>> = BTreeMap::new();
    let mut sizes: BTreeMap<i32, usize> = BTreeMap::new();
    for (v, &l) in points.vectors().iter().zip(&labels) {
        if l == NOISE {
            continue;
        }
        let s = sums.entry(l).or_insert_with(|| vec![0.0; points.dim()]);
        for (a, x) in s.iter_mut().zip(v) {
            *a += x;
        }
        *sizes.entry(l).or_default() += 1;
    }
    let centroids = sums
        .into_iter()
        .map(|(l, s)| {
            let k = sizes[&l] as f64;
            (l, s.into_iter().map(|x| x / k).collect())
        })
        .collect();

    Ok(ClusterModel {
        ids: points.ids().to_vec(),
        labels,
        centroids,
        sizes,
        merge_log: Vec::new(),
        params: ClusterParams {
            min_cluster_size,
            min_samples,
            merge_threshold: None,
            reduced_dim: points.dim(),
            normalized: points.is_normalized(),
        },
        diagnostics,
    })
}
