//! Acceptance checks, one pass/fail line per criterion.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use movenet_core::alignment::{classify_clusters, export_heatmap, lift_matrix, AlignmentReport, VerdictKind};
use movenet_core::clustering::{adjusted_rand_index, hdbscan_fit, ClusterModel, ClusterParams, EmbeddingSet, NOISE};
use movenet_core::corpus::{Category, Corpus, MoveScheme, Session, Utterance};
use movenet_core::ona::{
    accumulate_transitions, mean_and_subtraction_networks, project_points, quartile_split_scores, sphere_normalize,
    window_pair_count, GroupTag, OnaError, QuartileMethod,
};
use movenet_core::quality::{build_design, fit_reml, DesignData, LmmFit, PredictorScale, RemlOptions};
use movenet_core::reliability::{cohen_kappa, icc_oneway, rwg, RatingMatrix};
use movenet_core::synth::{
    default_regimes, generate_corpus, oracle_counts, RegimeSampling, SynthConfig, SynthOutput, REFERENCE_BETA,
};
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use statrs::distribution::{ContinuousCDF, StudentsT};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn synth(cfg: &SynthConfig) -> Result<SynthOutput, String> {
    generate_corpus(cfg).map_err(err)
}

fn model_from(ids: Vec<String>, labels: Vec<i32>) -> ClusterModel {
    let mut sizes: BTreeMap<i32, usize> = BTreeMap::new();
    for &l in labels.iter().filter(|&&l| l != NOISE) {
        *sizes.entry(l).or_default() += 1;
    }
    ClusterModel {
        ids,
        labels,
        centroids: sizes.keys().map(|&c| (c, vec![0.0])).collect(),
        sizes,
        merge_log: Vec::new(),
        params: ClusterParams {
            min_cluster_size: 2,
            min_samples: 1,
            merge_threshold: None,
            reduced_dim: 1,
            normalized: false,
        },
        diagnostics: Vec::new(),
    }
}

fn corpus_of(scheme: MoveScheme, sessions: Vec<(String, Vec<(String, Option<String>)>)>) -> Corpus {
    let sessions: Vec<Session> = sessions
        .into_iter()
        .map(|(sid, utts)| Session {
            group_id: format!("g-{sid}"),
            scenario_id: 1,
            ic_score: None,
            utterances: utts
                .into_iter()
                .enumerate()
                .map(|(t, (id, code))| Utterance {
                    utt_id: id,
                    session_id: sid.clone(),
                    speaker_id: "p1".into(),
                    turn_index: t,
                    text: None,
                    code,
                })
                .collect(),
            session_id: sid,
        })
        .collect();
    Corpus {
        scheme,
        groups: sessions.iter().map(|s| s.group_id.clone()).collect(),
        sessions,
    }
}

// 1
fn lift_oracle() -> Outcome {
    let mut cells = 0usize;
    for seed in 0..100u64 {
        let mut corpus = synth(&SynthConfig {
            seed,
            n_groups: 2,
            with_text: false,
            ..SynthConfig::default()
        })?
        .corpus;
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + seed);
        for u in corpus.sessions.iter_mut().flat_map(|s| s.utterances.iter_mut()) {
            if rng.random::<f64>() < 0.05 {
                u.code = None;
            }
        }
        let k = rng.random_range(2..8);
        let mut ids: Vec<String> = corpus.utterances().map(|u| u.utt_id.clone()).collect();
        ids.sort();
        let labels = ids
            .iter()
            .map(|_| if rng.random::<f64>() < 0.2 { NOISE } else { rng.random_range(0..k) })
            .collect();
        let model = model_from(ids, labels);
        let lift = lift_matrix(&model, &corpus).map_err(err)?;
        ensure(lift.clusters == model.cluster_ids().collect::<Vec<_>>(), || format!("seed {seed}: cluster rows"))?;

        let coded: Vec<(&str, &str)> = corpus
            .utterances()
            .filter_map(|u| u.code.as_deref().map(|c| (u.utt_id.as_str(), c)))
            .collect();
        for (r, &c) in lift.clusters.iter().enumerate() {
            for (j, label) in lift.labels.iter().enumerate() {
                let (mut n_c, mut hit, mut n_l) = (0u64, 0u64, 0u64);
                for &(id, code) in &coded {
                    let inside = model.assignment(id) == Some(c);
                    n_l += u64::from(code == label);
                    n_c += u64::from(inside);
                    hit += u64::from(inside && code == label);
                }
                let expected = if hit == 0 {
                    0.0
                } else {
                    (hit as f64 / n_c as f64) / (n_l as f64 / coded.len() as f64)
                };
                let got = lift.lift[r][j];
                ensure((got - expected).abs() <= 1e-12, || {
                    format!("seed {seed} cluster {c} {label}: {got} vs oracle {expected}")
                })?;
                cells += 1;
            }
        }
    }

    let scheme = MoveScheme::new(
        "ab",
        vec![Category {
            name: "all".into(),
            labels: vec!["A".into(), "B".into()],
        }],
    )
    .map_err(err)?;
    let codes: Vec<&str> = (0..100).map(|i| if i < 8 || (10..22).contains(&i) { "A" } else { "B" }).collect();
    let utts = codes
        .iter()
        .enumerate()
        .map(|(i, c)| (format!("u{i:03}"), Some(c.to_string())))
        .collect();
    let corpus = corpus_of(scheme, vec![("s".into(), utts)]);
    let ids: Vec<String> = (0..100).map(|i| format!("u{i:03}")).collect();
    let labels = (0..100).map(|i| if i < 10 { 0 } else { NOISE }).collect();
    let lift = lift_matrix(&model_from(ids, labels), &corpus).map_err(err)?;
    let hand = lift.get(0, "A").unwrap_or(f64::NAN);
    ensure(hand == 4.0, || format!("100-20-8 example gave {hand}"))?;
    Ok(format!("{cells} cells over 100 corpora match the oracle; hand example = {hand}"))
}

fn blob_points(rng: &mut ChaCha8Rng, centers: &[Vec<f64>], per: usize, sd: f64) -> Vec<(Vec<f64>, usize)> {
    let noise = Normal::new(0.0, sd).expect("valid sd");
    let mut pts = Vec::new();
    for (b, c) in centers.iter().enumerate() {
        for _ in 0..per {
            pts.push((c.iter().map(|x| x + noise.sample(rng)).collect(), b));
        }
    }
    pts
}

/// Cluster labels per input point, with point `i` stored under id `names[i]`.
fn cluster_points(pts: &[(Vec<f64>, usize)], names: &[String], mcs: usize) -> Result<Vec<i32>, String> {
    let set = EmbeddingSet::new(names.iter().cloned().zip(pts.iter().map(|p| p.0.clone()))).map_err(err)?;
    let model = hdbscan_fit(&set, mcs, mcs).map_err(err)?;
    Ok(names.iter().map(|n| model.assignment(n).unwrap_or(NOISE)).collect())
}

// 2
fn cluster_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dim = 5;
    let mut centers = vec![vec![0.0; dim]; 3];
    centers[1][0] = 1.5;
    centers[2][1] = 1.5;
    for i in 0..3 {
        for j in 0..i {
            let d: f64 = centers[i].iter().zip(&centers[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            ensure(d >= 1.0, || "centers too close".into())?;
        }
    }
    let pts = blob_points(&mut rng, &centers, 20, 0.05);
    let names: Vec<String> = (0..pts.len()).map(|i| format!("p{i:03}")).collect();
    let labels = cluster_points(&pts, &names, 15)?;
    let planted: Vec<usize> = pts.iter().map(|p| p.1).collect();
    let ari = adjusted_rand_index(&labels, &planted);
    ensure(ari >= 0.95, || format!("ARI {ari}"))?;

    let few = &pts[..10];
    let few_labels = cluster_points(few, &names[..10], 15)?;
    ensure(few_labels.iter().all(|&l| l == NOISE), || "n < min_cluster_size produced a cluster".into())?;

    let mut min_perm_ari = f64::INFINITY;
    for _ in 0..5 {
        let mut perm: Vec<usize> = (0..pts.len()).collect();
        perm.shuffle(&mut rng);
        let shuffled: Vec<String> = perm.iter().map(|&i| format!("p{i:03}")).collect();
        let again = cluster_points(&pts, &shuffled, 15)?;
        min_perm_ari = min_perm_ari.min(adjusted_rand_index(&labels, &again));
    }
    ensure(min_perm_ari >= 1.0 - 1e-12, || format!("shuffled runs disagree, ARI {min_perm_ari}"))?;
    Ok(format!(
        "ARI {ari:.4} on {} points; 10 points all noise; shuffled-run ARI {min_perm_ari}",
        pts.len()
    ))
}

// 3
fn alignment_shape() -> Outcome {
    let scheme = MoveScheme::seda8();
    let labels = scheme.labels().to_vec();
    let k = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let centers: Vec<Vec<f64>> = (0..16)
        .map(|b| {
            let mut c = vec![0.0; k];
            c[b % k] = if b < k { 1.0 } else { -1.0 };
            c
        })
        .collect();
    let per = 40;
    let pts = blob_points(&mut rng, &centers, per, 0.05);
    // Blobs 0–9 lean on one label, 10–12 spread evenly, 13–15 split two labels.
    let code_of = |b: usize, i: usize| -> usize {
        match b {
            0..=9 => {
                if i < 36 {
                    b % k
                } else {
                    (b + 1) % k
                }
            }
            10..=12 => i % k,
            _ => {
                let first = 2 * (b - 12);
                if i < 20 {
                    first % k
                } else {
                    (first + 1) % k
                }
            }
        }
    };
    let expected_kind = |b: usize| match b {
        0..=9 => "aligned",
        10..=12 => "no-dominant",
        _ => "multi-dominant",
    };
    let mut sessions = Vec::new();
    let mut names = Vec::new();
    for b in 0..16 {
        let utts: Vec<(String, Option<String>)> = (0..per)
            .map(|i| (format!("u{b:02}-{i:02}"), Some(labels[code_of(b, i)].clone())))
            .collect();
        names.extend(utts.iter().map(|u| u.0.clone()));
        sessions.push((format!("s{b:02}"), utts));
    }
    let corpus = corpus_of(scheme, sessions);
    let set = EmbeddingSet::new(names.iter().cloned().zip(pts.iter().map(|p| p.0.clone()))).map_err(err)?;
    let model = hdbscan_fit(&set, 15, 15).map_err(err)?;
    ensure(model.n_clusters() == 16, || format!("{} clusters, expected 16", model.n_clusters()))?;
    let assigned: Vec<i32> = names.iter().map(|n| model.assignment(n).unwrap_or(NOISE)).collect();
    let planted: Vec<usize> = pts.iter().map(|p| p.1).collect();
    let ari = adjusted_rand_index(&assigned, &planted);
    ensure(ari >= 0.95, || format!("ARI {ari}"))?;

    let lift = lift_matrix(&model, &corpus).map_err(err)?;
    let classification = classify_clusters(&lift, 2.0).map_err(err)?;
    let report = AlignmentReport::new(lift, classification);
    let dir = tempfile::tempdir().map_err(err)?;
    let (json, svg) = (dir.path().join("lift.json"), dir.path().join("lift.svg"));
    export_heatmap(&report, &json, &svg).map_err(err)?;
    let svg_text = std::fs::read_to_string(&svg).map_err(err)?;
    let n_cells = svg_text.matches(r#"class="cell""#).count();
    ensure(report.matrix.n_cells() == 128 && n_cells == 128, || format!("{n_cells} heatmap cells"))?;
    let back: AlignmentReport = serde_json::from_str(&std::fs::read_to_string(&json).map_err(err)?).map_err(err)?;
    ensure(back == report, || "lift.json does not round-trip".into())?;

    let s = report.classification.summary;
    ensure(s.aligned + s.novel_no_dominant + s.novel_multi_dominant == 16, || "verdicts do not partition".into())?;
    for v in &report.classification.verdicts {
        let b = names
            .iter()
            .zip(&assigned)
            .find(|(_, &c)| c == v.cluster)
            .map(|(n, _)| n[1..3].parse::<usize>().unwrap_or(99))
            .unwrap_or(99);
        let kind = match v.kind {
            VerdictKind::Aligned { .. } => "aligned",
            VerdictKind::NovelNoDominant => "no-dominant",
            VerdictKind::NovelMultiDominant { .. } => "multi-dominant",
        };
        ensure(b < 16 && kind == expected_kind(b), || format!("cluster {} (blob {b}) is {kind}", v.cluster))?;
    }
    Ok(format!(
        "16 clusters × 8 labels = {n_cells} cells; aligned {}, novel-no-dominant {}, novel-multi-dominant {}",
        s.aligned, s.novel_no_dominant, s.novel_multi_dominant
    ))
}

fn planted_config(seed: u64, sigma_group: f64) -> SynthConfig {
    let scheme = MoveScheme::moves14();
    SynthConfig {
        seed,
        sigma_group,
        sigma_resid: 0.9,
        clamp_ic: false,
        with_text: false,
        regimes: default_regimes(&scheme)
            .into_iter()
            .map(|mut r| {
                r.ic_offset = 0.0;
                r
            })
            .collect(),
        ..SynthConfig::default()
    }
}

fn truth_vector(cfg: &SynthConfig) -> Vec<f64> {
    std::iter::once(cfg.intercept).chain(cfg.beta.iter().copied()).collect()
}

fn planted_design(cfg: &SynthConfig) -> Result<(DesignData, Vec<f64>), String> {
    let out = synth(cfg)?;
    let d = build_design(&out.corpus, &cfg.scheme, PredictorScale::Counts).map_err(err)?;
    let lp = d.session_ids.iter().map(|s| out.truth.linear_predictor[s]).collect();
    Ok((d, lp))
}

fn fit(d: &DesignData) -> Result<LmmFit, String> {
    fit_reml(d, &RemlOptions::default()).map_err(err)
}

fn ols(d: &DesignData) -> Vec<f64> {
    let x = DMatrix::from_fn(d.n_obs(), d.n_cols(), |i, j| d.x[i][j]);
    let y = DVector::from_column_slice(&d.y);
    let xtx = x.transpose() * &x;
    let xty = x.transpose() * y;
    xtx.cholesky().expect("full rank").solve(&xty).iter().copied().collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// 4
fn reml_correctness() -> Outcome {
    // (a) Response whose residual part is orthogonal to the fixed effects and
    // to every group indicator: no between-group signal at all.
    let cfg = planted_config(40, 0.0);
    let (mut d, _) = planted_design(&cfg)?;
    let n = d.n_obs();
    let mut m = DMatrix::zeros(n, d.n_cols() + d.n_groups());
    for i in 0..n {
        for j in 0..d.n_cols() {
            m[(i, j)] = d.x[i][j];
        }
        m[(i, d.n_cols() + d.group_index[i])] = 1.0;
    }
    let svd = m.clone().svd(true, false);
    let u = svd.u.ok_or("svd")?;
    let tol = 1e-10 * svd.singular_values.max();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let normal = Normal::new(0.0, 0.9).map_err(err)?;
    let r = DVector::from_fn(n, |_, _| normal.sample(&mut rng));
    let mut e = r.clone();
    for (c, &s) in svd.singular_values.iter().enumerate() {
        if s > tol {
            let col = u.column(c);
            e -= col * col.dot(&r);
        }
    }
    let beta = truth_vector(&cfg);
    d.y = (0..n).map(|i| d.x[i].iter().zip(&beta).map(|(a, b)| a * b).sum::<f64>() + e[i]).collect();
    let f = fit(&d)?;
    let gap_a = max_abs_diff(&f.beta, &ols(&d));
    ensure(gap_a <= 1e-6, || format!("(a) |β̂ − OLS| = {gap_a:e}"))?;
    ensure(f.sigma_group <= 1e-3, || format!("(a) σ̂_group = {}", f.sigma_group))?;

    // Plain σ_b = 0 simulations: whenever the optimum sits on the boundary the
    // estimate must coincide with OLS.
    let mut at_boundary = 0;
    let mut worst = 0.0f64;
    for seed in 0..20 {
        let (d, _) = planted_design(&planted_config(500 + seed, 0.0))?;
        let f = fit(&d)?;
        if f.theta == 0.0 {
            at_boundary += 1;
            worst = worst.max(max_abs_diff(&f.beta, &ols(&d)));
        }
    }
    ensure(worst <= 1e-6, || format!("(a) boundary fits differ from OLS by {worst:e}"))?;

    // (b) bias over 100 antithetic pairs (noise negated, design kept), and
    // coverage over 200 independent replications.
    let p = 15;
    let mut bias = vec![0.0; p];
    let mut se_mean = vec![0.0; p];
    for pair in 0..100 {
        let cfg = planted_config(1_000 + pair, 0.3);
        let beta = truth_vector(&cfg);
        let (d, lp) = planted_design(&cfg)?;
        let mut mirror = d.clone();
        mirror.y = d.y.iter().zip(&lp).map(|(y, l)| 2.0 * l - y).collect();
        for dd in [&d, &mirror] {
            let f = fit(dd)?;
            for j in 0..p {
                bias[j] += (f.beta[j] - beta[j]) / 200.0;
                se_mean[j] += f.se[j] / 200.0;
            }
        }
    }
    let worst_bias = (0..p).map(|j| bias[j].abs() / se_mean[j]).fold(0.0, f64::max);
    ensure(worst_bias <= 0.05, || format!("(b) max |bias|/SE = {worst_bias:.4}"))?;

    let mut covered = vec![0usize; p];
    let mut err_sum = vec![0.0; p];
    let mut err_sq = vec![0.0; p];
    for rep in 0..200 {
        let cfg = planted_config(5_000 + rep, 0.3);
        let beta = truth_vector(&cfg);
        let (d, _) = planted_design(&cfg)?;
        let f = fit(&d)?;
        let q = StudentsT::new(0.0, 1.0, f.df).map_err(err)?.inverse_cdf(0.975);
        for j in 0..p {
            let e = f.beta[j] - beta[j];
            covered[j] += usize::from(e.abs() <= q * f.se[j]);
            err_sum[j] += e;
            err_sq[j] += e * e;
        }
    }
    let coverage: Vec<f64> = covered.iter().map(|&c| c as f64 / 200.0).collect();
    let (lo, hi) = coverage.iter().fold((1.0f64, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
    ensure(lo >= 0.90 && hi <= 0.99, || format!("(b) coverage range [{lo:.3}, {hi:.3}]"))?;
    // The independent replications must agree with zero bias within their
    // own Monte-Carlo error.
    let worst_z = (0..p)
        .map(|j| {
            let mean = err_sum[j] / 200.0;
            let sd = ((err_sq[j] - 200.0 * mean * mean) / 199.0).sqrt();
            mean.abs() / (sd / 200f64.sqrt())
        })
        .fold(0.0, f64::max);
    ensure(worst_z <= 4.0, || format!("(b) independent-replication bias z = {worst_z:.2}"))?;

    // (c) power for a 0.4 effect on a frequent move; sessions run longer here
    // so that some move averages at least three occurrences.
    let long = |seed: u64| SynthConfig {
        min_utterances: 30,
        max_utterances: 60,
        ..planted_config(seed, 0.3)
    };
    let probe = planted_design(&long(9_000))?.0;
    let mean_counts: Vec<f64> = (1..p).map(|j| probe.x.iter().map(|r| r[j]).sum::<f64>() / probe.n_obs() as f64).collect();
    let (move_idx, &mean_count) = mean_counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .ok_or("no moves")?;
    ensure(mean_count >= 3.0, || format!("(c) most frequent move has mean count {mean_count:.2}"))?;
    let mut detected = 0;
    for rep in 0..50 {
        let mut cfg = long(9_000 + rep);
        cfg.beta = REFERENCE_BETA.to_vec();
        cfg.beta[move_idx] = 0.4;
        let (d, _) = planted_design(&cfg)?;
        let f = fit(&d)?;
        detected += usize::from(f.p_values[move_idx + 1] < 0.05);
    }
    ensure(detected >= 45, || format!("(c) detected in {detected}/50"))?;
    Ok(format!(
        "(a) |β̂−OLS| {gap_a:.1e}, {at_boundary}/20 random σ_b=0 fits on the boundary, worst {worst:.1e}; \
         (b) max |bias|/SE {worst_bias:.4}, coverage [{lo:.3}, {hi:.3}], independent bias z ≤ {worst_z:.2}; \
         (c) {} (mean count {mean_count:.2}) detected {detected}/50",
        MoveScheme::moves14().labels()[move_idx]
    ))
}

fn movenet(args: &[&str]) -> Result<std::process::Output, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_movenet"))
        .args(args)
        .env_remove("MOVENET_OUT_DIR")
        .output()
        .map_err(err)?;
    ensure(out.status.success(), || {
        format!("movenet {args:?} failed: {}", String::from_utf8_lossy(&out.stderr))
    })?;
    Ok(out)
}

// 5
fn output_fidelity() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let out_dir = dir.path().to_str().ok_or("path")?;
    movenet(&["fit-lmm", "--synthetic", "--out-dir", out_dir])?;
    let md = std::fs::read_to_string(dir.path().join("lmm.md")).map_err(err)?;
    let rows: Vec<Vec<String>> = md
        .lines()
        .filter(|l| l.starts_with('|'))
        .skip(2)
        .map(|l| l.trim_matches('|').split('|').map(|c| c.trim().to_string()).collect())
        .collect();
    let sd_rows: Vec<&Vec<String>> = rows.iter().filter(|r| r[1] == "Group (Intercept)" || r[1] == "Residual").collect();
    let coef_rows: Vec<&Vec<String>> = rows.iter().filter(|r| r[1] != "Group (Intercept)" && r[1] != "Residual").collect();
    ensure(coef_rows.len() == 15, || format!("{} coefficient rows", coef_rows.len()))?;
    ensure(coef_rows[14][1] == "(Intercept)", || "intercept is not last".into())?;
    ensure(coef_rows[0][0] == "Elaborating Ideas", || format!("first category {}", coef_rows[0][0]))?;
    let terms: Vec<&str> = coef_rows[..14].iter().map(|r| r[1].as_str()).collect();
    let scheme = MoveScheme::moves14();
    let labels: Vec<&str> = scheme.labels().iter().map(String::as_str).collect();
    ensure(terms == labels, || "rows are not in scheme order".into())?;
    ensure(
        coef_rows.iter().all(|r| ["", "·", "*", "**"].contains(&r[6].as_str())),
        || "unexpected marker".into(),
    )?;
    ensure(sd_rows.len() == 2 && sd_rows[0][0] == "Random Effects & SD", || "variance rows".into())?;
    ensure(md.contains("· p < .1, * p < .05, ** p < .001"), || "legend missing".into())?;
    Ok("15 coefficient rows (14 moves + intercept), Group (Intercept) and Residual SD rows, legend present".into())
}

// 6
fn ona_exactness() -> Outcome {
    let out = synth(&SynthConfig {
        seed: 6,
        n_groups: 200,
        sessions_per_group: 5,
        min_utterances: 0,
        max_utterances: 60,
        with_text: false,
        regime_sampling: RegimeSampling::Independent,
        ..SynthConfig::default()
    })?;
    let scheme = &out.corpus.scheme;
    let labels = scheme.labels();
    let k = labels.len();
    for window in [2, 3, 5] {
        for s in &out.corpus.sessions {
            let tv = accumulate_transitions(s, scheme, window).map_err(err)?;
            let oracle = oracle_counts(s, window);
            for (i, a) in labels.iter().enumerate() {
                for (j, b) in labels.iter().enumerate() {
                    let want = oracle.pairs.get(&(a.clone(), b.clone())).copied().unwrap_or(0);
                    ensure(tv.get(i, j) == want, || format!("{} {a}->{b} window {window}", s.session_id))?;
                }
            }
            let identity: u64 = (0..s.utterances.len() as u64).map(|t| t.min(window as u64 - 1)).sum();
            ensure(tv.total() == identity && window_pair_count(s.utterances.len(), window) == identity, || {
                format!("window identity fails on {}", s.session_id)
            })?;
        }
    }

    let planted = synth(&SynthConfig {
        seed: 21,
        n_groups: 24,
        with_text: false,
        ..SynthConfig::default()
    })?;
    let mut vectors = Vec::new();
    let mut tags = Vec::new();
    for s in &planted.corpus.sessions {
        let tv = sphere_normalize(accumulate_transitions(s, scheme, 2).map_err(err)?);
        vectors.push(tv.normalized.ok_or("empty session")?);
        tags.push(if planted.truth.session_regime[&s.session_id] == "HIGH" { GroupTag::High } else { GroupTag::Low });
    }
    let n_high = tags.iter().filter(|t| **t == GroupTag::High).count();
    ensure(n_high == 60 && tags.len() == 120, || format!("{n_high} HIGH of {}", tags.len()))?;

    let nets = mean_and_subtraction_networks(&vectors, &tags, k).map_err(err)?;
    let swapped: Vec<GroupTag> = tags
        .iter()
        .map(|t| if *t == GroupTag::High { GroupTag::Low } else { GroupTag::High })
        .collect();
    let neg = mean_and_subtraction_networks(&vectors, &swapped, k).map_err(err)?;
    for i in 0..k {
        for j in 0..k {
            ensure(neg.subtraction[i][j] == -nets.subtraction[i][j], || "subtraction not antisymmetric".into())?;
        }
    }

    let proj = project_points(&vectors, &tags).map_err(err)?;
    let mean_of = |tag: GroupTag| -> Vec<f64> {
        let members: Vec<&Vec<f64>> = vectors.iter().zip(&tags).filter(|(_, t)| **t == tag).map(|(v, _)| v).collect();
        (0..k * k).map(|c| members.iter().map(|v| v[c]).sum::<f64>() / members.len() as f64).collect()
    };
    let (mh, ml) = (mean_of(GroupTag::High), mean_of(GroupTag::Low));
    let dot: f64 = (0..k * k).map(|c| (mh[c] - ml[c]) * proj.axis_y[c]).sum();
    ensure(dot.abs() <= 1e-9, || format!("(mean_H − mean_L)·axis_y = {dot:e}"))?;

    let stats = |tag: GroupTag| {
        let xs: Vec<f64> = proj.points.iter().zip(&tags).filter(|(_, t)| **t == tag).map(|(q, _)| q[0]).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64;
        (m, v.sqrt())
    };
    let ((xh, sh), (xl, sl)) = (stats(GroupTag::High), stats(GroupTag::Low));
    let ratio = (xh - xl) / sh.max(sl);
    ensure(ratio > 4.0, || format!("x gap / within SD = {ratio:.2}"))?;
    Ok(format!(
        "oracle equality on {} sessions × windows 2,3,5; antisymmetry exact; |Δmean·axis_y| = {:.1e}; x-gap = {ratio:.1} SD",
        out.corpus.sessions.len(),
        dot.abs()
    ))
}

// 7
fn quartile_split() -> Outcome {
    let scores = |xs: &[f64]| -> Vec<(String, f64)> { xs.iter().enumerate().map(|(i, &x)| (format!("s{i}"), x)).collect() };
    let ids = |set: &[String]| set.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect::<Vec<_>>();
    for method in [QuartileMethod::NearestRank, QuartileMethod::Linear] {
        let q = quartile_split_scores(&scores(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0]), method).map_err(err)?;
        ensure(ids(&q.low) == ["s0", "s1"] && ids(&q.high) == ["s6", "s7"], || {
            format!("{method:?}: low {:?} high {:?}", q.low, q.high)
        })?;
    }
    let tied = quartile_split_scores(&scores(&[1.0, 2.0, 2.0, 4.0, 5.0, 7.0, 7.0, 8.0]), QuartileMethod::NearestRank)
        .map_err(err)?;
    ensure(ids(&tied.low) == ["s0", "s1", "s2"] && ids(&tied.high) == ["s5", "s6", "s7"], || {
        format!("ties: low {:?} high {:?}", tied.low, tied.high)
    })?;
    let equal = quartile_split_scores(&scores(&[3.0; 8]), QuartileMethod::NearestRank);
    ensure(matches!(equal, Err(OnaError::DegenerateQuantiles { .. })), || format!("all equal: {equal:?}"))?;
    let few = quartile_split_scores(&scores(&[1.0, 2.0, 3.0]), QuartileMethod::NearestRank);
    ensure(matches!(few, Err(OnaError::TooFewSessions { .. })), || format!("three sessions: {few:?}"))?;
    Ok("1..8 → low {1,2}, high {7,8}; boundary ties kept on the extreme side; all-equal → DegenerateQuantiles".into())
}

// 8
fn reliability() -> Outcome {
    let same = ["A", "B", "A", "C"];
    let k1 = cohen_kappa(&same, &same).map_err(err)?.kappa;
    ensure(k1 == 1.0, || format!("identical kappa {k1}"))?;
    let mut a = Vec::new();
    let mut b = Vec::new();
    for (x, y, n) in [("A", "A", 40), ("A", "B", 20), ("B", "A", 10), ("B", "B", 30)] {
        a.extend(std::iter::repeat_n(x, n));
        b.extend(std::iter::repeat_n(y, n));
    }
    let k = cohen_kappa(&a, &b).map_err(err)?;
    ensure((k.kappa - 0.4).abs() <= 1e-12, || format!("table kappa {}", k.kappa))?;

    let r = rwg(&[vec![4.0, 4.0, 4.0], vec![3.0, 4.0, 5.0], vec![1.0, 4.0, 7.0]], 1.0, 7.0, false).map_err(err)?;
    ensure(r.values == [1.0, 0.75, -1.25], || format!("r_wg {:?}", r.values))?;
    let clamped = rwg(&[vec![1.0, 4.0, 7.0]], 1.0, 7.0, true).map_err(err)?;
    ensure(clamped.values == [0.0], || "clamped r_wg".into())?;

    let m = RatingMatrix::new(vec!["t1".into(), "t2".into()], vec![vec![1.0, 1.0], vec![3.0, 3.0]], 1.0, 7.0).map_err(err)?;
    let icc = icc_oneway(&m).map_err(err)?;
    ensure(icc.icc1 == 1.0 && icc.icc2 == 1.0 && icc.degenerate, || format!("degenerate ICC {icc:?}"))?;

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let unit = Normal::new(0.0, 1.0).map_err(err)?;
    let mut total = 0.0;
    for _ in 0..500 {
        let ratings: Vec<Vec<f64>> = (0..20)
            .map(|_| {
                let t = unit.sample(&mut rng);
                (0..3).map(|_| t + unit.sample(&mut rng)).collect()
            })
            .collect();
        let targets = (0..20).map(|i| format!("t{i}")).collect();
        let m = RatingMatrix::new(targets, ratings, -1e6, 1e6).map_err(err)?;
        total += icc_oneway(&m).map_err(err)?.icc1;
    }
    let mean = total / 500.0;
    ensure((mean - 0.5).abs() <= 0.1, || format!("mean ICC(1) {mean:.3}"))?;
    Ok(format!("kappa 1.0 / {:.1}; r_wg 1.0, 0.75, −1.25 (clamped 0); degenerate ICC 1.0; simulated ICC(1) {mean:.3}", k.kappa))
}

fn files_under(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).into_iter().flatten().flatten() {
            let p = entry.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(dir).expect("inside dir").to_path_buf());
            }
        }
    }
    out.sort();
    out
}

// 9
fn end_to_end() -> Outcome {
    let a = tempfile::tempdir().map_err(err)?;
    let b = tempfile::tempdir().map_err(err)?;
    let mut slowest = Duration::ZERO;
    for d in [&a, &b] {
        let t = Instant::now();
        movenet(&["run", "--synthetic", "--out-dir", d.path().to_str().ok_or("path")?])?;
        slowest = slowest.max(t.elapsed());
    }
    ensure(slowest < Duration::from_secs(60), || format!("run took {slowest:?}"))?;
    let files = files_under(a.path());
    ensure(files == files_under(b.path()), || "runs wrote different file sets".into())?;
    let json: Vec<_> = files.iter().filter(|f| f.extension().is_some_and(|e| e == "json")).collect();
    for f in &json {
        let same = std::fs::read(a.path().join(f)).map_err(err)? == std::fs::read(b.path().join(f)).map_err(err)?;
        ensure(same, || format!("{} differs", f.display()))?;
    }
    let ingest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(a.path().join("ingest.json")).map_err(err)?).map_err(err)?;
    ensure(ingest["n-groups"] == 17 && ingest["n-sessions"] == 85, || "corpus is not 17 × 5".into())?;
    Ok(format!(
        "17 groups × 5 sessions; slowest run {:.1} s; {} JSON artifacts byte-identical",
        slowest.as_secs_f64(),
        json.len()
    ))
}

fn main() -> ExitCode {
    let criteria: [(u32, &str, Option<u64>, fn() -> Outcome); 9] = [
        (1, "LIFT oracle equivalence", Some(10), lift_oracle),
        (2, "cluster recovery", Some(30), cluster_recovery),
        (3, "alignment output shape", None, alignment_shape),
        (4, "REML correctness", Some(120), reml_correctness),
        (5, "fit-lmm output fidelity", None, output_fidelity),
        (6, "ONA exactness", Some(30), ona_exactness),
        (7, "quartile split", None, quartile_split),
        (8, "reliability statistics", Some(30), reliability),
        (9, "end-to-end determinism", None, end_to_end),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        let outcome = match (outcome, limit) {
            (Ok(_), Some(l)) if secs >= l as f64 => Err(format!("took {secs:.1} s, limit {l} s")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("PASS  {id}  {name} ({secs:.1} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {id}  {name} ({secs:.1} s): {why}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
