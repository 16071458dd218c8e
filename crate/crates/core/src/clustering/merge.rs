use super::{cosine, ClusterModel, MergeStep, NOISE};

/// Agglomerative centroid merging.
///
/// While the most similar pair of centroids (cosine) reaches `threshold`,
/// the pair is replaced by a new cluster whose centroid is the member mean.
/// New clusters take ids above every id used so far. Noise is untouched.
pub fn merge_clusters(model: &ClusterModel, threshold: f64) -> ClusterModel {
    let mut out = model.clone();
    out.params.merge_threshold = Some(threshold);
    let mut next_id = out
        .centroids
        .keys()
        .chain(out.merge_log.iter().map(|m| &m.into))
        .max()
        .map_or(0, |m| m + 1);

    loop {
        let ids: Vec<i32> = out.centroids.keys().copied().collect();
        let mut best: Option<(f64, i32, i32)> = None;
        for (i, &a) in ids.iter().enumerate() {
            for &b in &ids[i + 1..] {
                let sim = cosine(&out.centroids[&a], &out.centroids[&b]);
                // Strictly greater keeps the lexicographically first pair on ties.
                if best.is_none_or(|(s, _, _)| sim > s) {
                    best = Some((sim, a, b));
                }
            }
        }
        let Some((similarity, a, b)) = best else { break };
        if similarity < threshold {
            break;
        }

        let ca = out.centroids.remove(&a).expect("centroid present");
        let cb = out.centroids.remove(&b).expect("centroid present");
        let na = out.sizes.remove(&a).expect("size present");
        let nb = out.sizes.remove(&b).expect("size present");
        let total = (na + nb) as f64;
        let merged: Vec<f64> = ca
            .iter()
            .zip(&cb)
            .map(|(x, y)| (x * na as f64 + y * nb as f64) / total)
            .collect();
        let id = next_id;
        next_id += 1;
        for l in out.labels.iter_mut() {
            if *l != NOISE && (*l == a || *l == b) {
                *l = id;
            }
        }
        out.centroids.insert(id, merged);
        out.sizes.insert(id, na + nb);
        out.merge_log.push(MergeStep {
            merged: [a, b],
            into: id,
            similarity,
        });
    }
    out
}
