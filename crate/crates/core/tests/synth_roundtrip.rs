use movenet_core::clustering::{adjusted_rand_index, hdbscan_fit, load_embeddings};
use movenet_core::corpus::{load_corpus, MoveScheme};
use movenet_core::quality::{build_design, fit_reml, PredictorScale, RemlOptions};
use movenet_core::synth::{
    generate_corpus, write_synth, SynthConfig, SynthTruth, EMBEDDINGS_FILE, SESSIONS_FILE, TRUTH_FILE, UTTERANCES_FILE,
};

fn files(dir: &std::path::Path) -> Vec<Vec<u8>> {
    [UTTERANCES_FILE, SESSIONS_FILE, EMBEDDINGS_FILE, TRUTH_FILE]
        .iter()
        .map(|f| std::fs::read(dir.join(f)).unwrap())
        .collect()
}

#[test]
fn same_seed_gives_identical_files() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let cfg = SynthConfig::default();
    write_synth(&generate_corpus(&cfg).unwrap(), a.path()).unwrap();
    write_synth(&generate_corpus(&cfg).unwrap(), b.path()).unwrap();
    write_synth(&generate_corpus(&SynthConfig { seed: 1, ..cfg }).unwrap(), c.path()).unwrap();
    assert_eq!(files(a.path()), files(b.path()));
    assert_ne!(files(a.path()), files(c.path()));
}

#[test]
fn written_files_load_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = generate_corpus(&SynthConfig::default()).unwrap();
    write_synth(&out, dir.path()).unwrap();
    let corpus = load_corpus(dir.path().join(UTTERANCES_FILE), dir.path().join(SESSIONS_FILE), MoveScheme::moves14()).unwrap();
    assert_eq!(corpus, out.corpus);
    let emb = load_embeddings(dir.path().join(EMBEDDINGS_FILE), &corpus, false).unwrap();
    assert_eq!(emb.ids(), out.embeddings.ids());
    assert_eq!(emb.vectors(), out.embeddings.vectors());
    let truth: SynthTruth = serde_json::from_str(&std::fs::read_to_string(dir.path().join(TRUTH_FILE)).unwrap()).unwrap();
    assert_eq!(truth, out.truth);
}

#[test]
fn embeddings_recover_the_planted_labels() {
    let cfg = SynthConfig {
        n_groups: 6,
        ..SynthConfig::default()
    };
    let out = generate_corpus(&cfg).unwrap();
    let model = hdbscan_fit(&out.embeddings, 15, 15).unwrap();
    let labels = cfg.scheme.labels();
    let planted: Vec<usize> = out
        .embeddings
        .ids()
        .iter()
        .map(|id| {
            let u = out.corpus.utterances().find(|u| &u.utt_id == id).unwrap();
            labels.iter().position(|l| Some(l) == u.code.as_ref()).unwrap()
        })
        .collect();
    let ari = adjusted_rand_index(&model.labels, &planted);
    assert!(ari >= 0.95, "ARI {ari}");
}

#[test]
fn mixed_model_recovers_planted_coefficients_on_average() {
    let reps = 20;
    let mut mean_err = vec![0.0; 15];
    let mut mean_se = vec![0.0; 15];
    for seed in 0..reps {
        let cfg = SynthConfig {
            seed,
            clamp_ic: false,
            with_text: false,
            regimes: movenet_core::synth::default_regimes(&MoveScheme::moves14())
                .into_iter()
                .map(|mut r| {
                    r.ic_offset = 0.0;
                    r
                })
                .collect(),
            ..SynthConfig::default()
        };
        let out = generate_corpus(&cfg).unwrap();
        let design = build_design(&out.corpus, &cfg.scheme, PredictorScale::Counts).unwrap();
        let fit = fit_reml(&design, &RemlOptions::default()).unwrap();
        let truth: Vec<f64> = std::iter::once(cfg.intercept).chain(cfg.beta.iter().copied()).collect();
        for j in 0..15 {
            mean_err[j] += (fit.beta[j] - truth[j]) / reps as f64;
            mean_se[j] += fit.se[j] / reps as f64;
        }
    }
    // Twenty replications: the average error should sit well inside
    // three Monte-Carlo standard errors (SE / √20) of zero.
    for j in 0..15 {
        assert!(mean_err[j].abs() < 3.0 * mean_se[j] / (reps as f64).sqrt(), "coef {j}: {} vs se {}", mean_err[j], mean_se[j]);
    }
}
