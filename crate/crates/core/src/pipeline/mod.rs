//! End-to-end orchestration: ingest → cluster → align → fit-lmm → ona → report.
//!
//! Every stage writes plain-file artifacts into the output directory. JSON
//! artifacts never embed input paths, so two runs over the same inputs write
//! byte-identical files wherever the output directory lives.

mod ratings;
mod report;

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::alignment::{classify_clusters, export_heatmap, lift_matrix, AlignmentReport, DEFAULT_LIFT_THRESHOLD};
use crate::clustering::{
    ctfidf_keywords, hdbscan_fit, load_embeddings, merge_clusters, pca_reduce, ClusterError, ClusterModel,
    EmbeddingSet, KeywordTable, PcaProjection, DEFAULT_MERGE_THRESHOLD, DEFAULT_MIN_CLUSTER_SIZE, DEFAULT_PCA_DIMS,
};
use crate::corpus::{load_corpus, load_scheme, validate_corpus, Corpus, ValidationReport, BUILTIN_MOVES14};
use crate::ona::{export_ona, run_ona, OnaModel, OnaOptions, QuartileMethod, UnitLevel, DEFAULT_WINDOW};
use crate::quality::{build_design, fit_reml, wald_table, DfMethod, LmmFit, PredictorScale, RemlOptions, ResultsTable};
use crate::synth::{
    default_regimes, generate_corpus, write_synth, SynthConfig, EMBEDDINGS_FILE, SESSIONS_FILE, UTTERANCES_FILE,
};

pub use ratings::{
    read_label_pairs, read_ratings, reliability_stats, LabelPair, RatingRow, ReliabilityStats,
};
pub use report::{extract_report_tables, render_report, REPORT_TABLES};

/// Environment variable that, when set, replaces the configured output directory.
pub const OUT_DIR_ENV: &str = "MOVENET_OUT_DIR";

/// Subdirectory of the output directory that receives generated inputs.
pub const SYNTH_INPUT_DIR: &str = "input";

pub const INGEST_JSON: &str = "ingest.json";
pub const ASSIGNMENTS_CSV: &str = "assignments.csv";
pub const CLUSTERS_JSON: &str = "clusters.json";
pub const LIFT_JSON: &str = "lift.json";
pub const LIFT_SVG: &str = "lift.svg";
pub const LMM_JSON: &str = "lmm.json";
pub const LMM_MD: &str = "lmm.md";
pub const ONA_JSON: &str = "ona.json";
pub const REPORT_MD: &str = "report.md";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Ingest,
    Reliability,
    Cluster,
    Align,
    FitLmm,
    Ona,
    Synth,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Reliability => "reliability",
            Stage::Cluster => "cluster",
            Stage::Align => "align",
            Stage::FitLmm => "fit-lmm",
            Stage::Ona => "ona",
            Stage::Synth => "synth",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{stage} stage: {message}")]
pub struct PipelineError {
    pub stage: Stage,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: Stage, message: impl Into<String>) -> Self {
        Self {
            stage,
            message: message.into(),
        }
    }
}

fn at<E: fmt::Display>(stage: Stage) -> impl Fn(E) -> PipelineError {
    move |e| PipelineError::new(stage, e.to_string())
}

/// All pipeline settings. Keys mirror the command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub utterances: Option<PathBuf>,
    pub sessions: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    /// Builtin scheme name or path to a scheme file.
    pub scheme: String,
    pub out_dir: PathBuf,
    /// Generate the input corpus instead of reading files.
    pub synthetic: bool,
    pub seed: u64,
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size`.
    pub min_samples: Option<usize>,
    /// `None` disables merging.
    pub merge_threshold: Option<f64>,
    /// 0 skips the reduction.
    pub pca_dims: usize,
    pub no_normalize: bool,
    pub top_k: usize,
    pub threshold: f64,
    pub proportions: bool,
    pub df_method: DfMethod,
    pub window: usize,
    pub quartile_method: QuartileMethod,
    pub group_units: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            utterances: None,
            sessions: None,
            embeddings: None,
            scheme: BUILTIN_MOVES14.to_string(),
            out_dir: PathBuf::from("movenet-out"),
            synthetic: false,
            seed: 0,
            min_cluster_size: DEFAULT_MIN_CLUSTER_SIZE,
            min_samples: None,
            merge_threshold: Some(DEFAULT_MERGE_THRESHOLD),
            pca_dims: DEFAULT_PCA_DIMS,
            no_normalize: false,
            top_k: 10,
            threshold: DEFAULT_LIFT_THRESHOLD,
            proportions: false,
            df_method: DfMethod::Residual,
            window: DEFAULT_WINDOW,
            quartile_method: QuartileMethod::NearestRank,
            group_units: false,
        }
    }
}

impl PipelineConfig {
    pub fn from_json_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    /// Replaces `out_dir` with the value of [`OUT_DIR_ENV`] when it is set and non-empty.
    pub fn apply_out_dir_env(&mut self) {
        if let Some(dir) = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()) {
            self.out_dir = PathBuf::from(dir);
        }
    }

    pub fn paths(&self) -> ArtifactPaths {
        ArtifactPaths::in_dir(&self.out_dir)
    }

    pub fn ona_options(&self) -> OnaOptions {
        OnaOptions {
            window: self.window,
            quartile_method: self.quartile_method,
            unit_level: if self.group_units { UnitLevel::Group } else { UnitLevel::Session },
        }
    }

    pub fn predictor_scale(&self) -> PredictorScale {
        if self.proportions {
            PredictorScale::Proportions
        } else {
            PredictorScale::Counts
        }
    }
}

/// Default artifact locations inside one output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArtifactPaths {
    pub dir: PathBuf,
    pub ingest_json: PathBuf,
    pub assignments_csv: PathBuf,
    pub clusters_json: PathBuf,
    pub lift_json: PathBuf,
    pub lift_svg: PathBuf,
    pub lmm_json: PathBuf,
    pub lmm_md: PathBuf,
    pub ona_json: PathBuf,
    pub report_md: PathBuf,
}

impl ArtifactPaths {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            ingest_json: dir.join(INGEST_JSON),
            assignments_csv: dir.join(ASSIGNMENTS_CSV),
            clusters_json: dir.join(CLUSTERS_JSON),
            lift_json: dir.join(LIFT_JSON),
            lift_svg: dir.join(LIFT_SVG),
            lmm_json: dir.join(LMM_JSON),
            lmm_md: dir.join(LMM_MD),
            ona_json: dir.join(ONA_JSON),
            report_md: dir.join(REPORT_MD),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct IngestSummary {
    pub scheme: String,
    pub n_labels: usize,
    pub n_categories: usize,
    pub n_groups: usize,
    pub n_sessions: usize,
    pub n_scored_sessions: usize,
    pub n_utterances: usize,
    pub n_coded_utterances: usize,
    pub embedding_dim: Option<usize>,
    pub synthetic_seed: Option<u64>,
    pub validation: ValidationReport,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub corpus: Corpus,
    pub embeddings: Option<EmbeddingSet>,
    pub summary: IngestSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub struct ClusterArtifact {
    pub model: ClusterModel,
    pub pca: Option<PcaProjection>,
    pub keywords: Option<KeywordTable>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmmArtifact {
    pub fit: LmmFit,
    pub table: ResultsTable,
}

impl LmmArtifact {
    pub fn to_markdown(&self) -> String {
        format!(
            "# Predicting discussion quality from discussion moves\n\n{}",
            self.table.to_markdown()
        )
    }
}

/// In-memory results of a full run; also reconstructible from the artifacts.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub ingest: IngestSummary,
    pub clusters: ClusterArtifact,
    pub alignment: AlignmentReport,
    pub lmm: LmmArtifact,
    pub ona: OnaModel,
}

fn write_json<T: Serialize>(value: &T, path: &Path, stage: Stage) -> Result<(), PipelineError> {
    let json = serde_json::to_string_pretty(value).map_err(at(stage))?;
    std::fs::write(path, json + "\n").map_err(|e| PipelineError::new(stage, format!("{}: {e}", path.display())))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, stage: Stage) -> Result<T, PipelineError> {
    let text = std::fs::read_to_string(path).map_err(|e| PipelineError::new(stage, format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::new(stage, format!("{}: {e}", path.display())))
}

fn ensure_dir(dir: &Path, stage: Stage) -> Result<(), PipelineError> {
    std::fs::create_dir_all(dir).map_err(|e| PipelineError::new(stage, format!("{}: {e}", dir.display())))
}

/// Synthetic configuration used by `synthetic` runs: the generator defaults
/// over the configured scheme, with zero coefficients for non-default schemes.
pub fn synth_config_for(cfg: &PipelineConfig) -> Result<SynthConfig, PipelineError> {
    let scheme = load_scheme(&cfg.scheme).map_err(at(Stage::Synth))?;
    let defaults = SynthConfig::default();
    let beta = if scheme == defaults.scheme {
        defaults.beta.clone()
    } else {
        vec![0.0; scheme.len()]
    };
    Ok(SynthConfig {
        seed: cfg.seed,
        regimes: default_regimes(&scheme),
        beta,
        scheme,
        ..defaults
    })
}

/// Loads the corpus (and embeddings when available or required), validates it
/// and writes `ingest.json`. Synthetic runs first write generated inputs to
/// `out_dir/input/` and then read them back like any other input.
pub fn ingest(cfg: &PipelineConfig, require_embeddings: bool) -> Result<Ingested, PipelineError> {
    let stage = Stage::Ingest;
    ensure_dir(&cfg.out_dir, stage)?;
    let (utterances, sessions, embeddings) = if cfg.synthetic {
        let dir = cfg.out_dir.join(SYNTH_INPUT_DIR);
        let out = generate_corpus(&synth_config_for(cfg)?).map_err(at(Stage::Synth))?;
        write_synth(&out, &dir).map_err(at(Stage::Synth))?;
        (dir.join(UTTERANCES_FILE), dir.join(SESSIONS_FILE), Some(dir.join(EMBEDDINGS_FILE)))
    } else {
        let need = |p: &Option<PathBuf>, what: &str| {
            p.clone().ok_or_else(|| PipelineError::new(stage, format!("no {what} file configured")))
        };
        (need(&cfg.utterances, "utterances")?, need(&cfg.sessions, "sessions")?, cfg.embeddings.clone())
    };
    let scheme = load_scheme(&cfg.scheme).map_err(at(stage))?;
    let corpus = load_corpus(&utterances, &sessions, scheme).map_err(at(stage))?;
    let embeddings = match embeddings {
        Some(path) => Some(load_embeddings(&path, &corpus, !cfg.no_normalize).map_err(at(stage))?),
        None if require_embeddings => return Err(PipelineError::new(stage, "no embeddings file configured")),
        None => None,
    };
    let validation = validate_corpus(&corpus);
    for f in validation.warnings() {
        log::warn!("{}: {}", f.location, f.message);
    }
    let summary = IngestSummary {
        scheme: corpus.scheme.name().to_string(),
        n_labels: corpus.scheme.len(),
        n_categories: corpus.scheme.categories().len(),
        n_groups: corpus.groups.len(),
        n_sessions: corpus.sessions.len(),
        n_scored_sessions: corpus.scored_sessions().count(),
        n_utterances: corpus.utterances().count(),
        n_coded_utterances: corpus.utterances().filter(|u| u.code.is_some()).count(),
        embedding_dim: embeddings.as_ref().map(EmbeddingSet::dim),
        synthetic_seed: cfg.synthetic.then_some(cfg.seed),
        validation,
    };
    write_json(&summary, &cfg.paths().ingest_json, stage)?;
    Ok(Ingested {
        corpus,
        embeddings,
        summary,
    })
}

/// Reduces, clusters and merges the embeddings and extracts keywords.
pub fn cluster(cfg: &PipelineConfig, data: &Ingested) -> Result<ClusterArtifact, PipelineError> {
    let stage = Stage::Cluster;
    let emb = data
        .embeddings
        .as_ref()
        .ok_or_else(|| PipelineError::new(stage, "no embeddings loaded"))?;
    let mut notes = Vec::new();
    let target = cfg.pca_dims.min(emb.dim());
    if cfg.pca_dims > emb.dim() {
        notes.push(format!(
            "requested {} PCA dimensions but embeddings have {}; using {target}",
            cfg.pca_dims,
            emb.dim()
        ));
    }
    let (pca, reduced) = if target == 0 {
        (None, emb.clone())
    } else {
        let pca = pca_reduce(emb, target).map_err(at(stage))?;
        let reduced = pca.reduced().clone();
        (Some(pca), reduced)
    };
    let min_samples = cfg.min_samples.unwrap_or(cfg.min_cluster_size);
    let mut model = hdbscan_fit(&reduced, cfg.min_cluster_size, min_samples).map_err(at(stage))?;
    model.params.normalized = emb.is_normalized();
    if let Some(t) = cfg.merge_threshold {
        model = merge_clusters(&model, t);
    }
    let keywords = match ctfidf_keywords(&data.corpus, &model, cfg.top_k) {
        Ok(k) => Some(k),
        Err(ClusterError::NoTextAvailable) => {
            notes.push("no utterance text available; keywords omitted".to_string());
            None
        }
        Err(e) => return Err(at(stage)(e)),
    };
    Ok(ClusterArtifact {
        model,
        pca,
        keywords,
        notes,
    })
}

pub fn write_clusters(art: &ClusterArtifact, json: &Path, csv: &Path) -> Result<(), PipelineError> {
    art.model.write_assignments_csv(csv).map_err(at(Stage::Cluster))?;
    write_json(art, json, Stage::Cluster)
}

pub fn read_clusters(path: &Path) -> Result<ClusterArtifact, PipelineError> {
    read_json(path, Stage::Align)
}

pub fn align(cfg: &PipelineConfig, corpus: &Corpus, model: &ClusterModel) -> Result<AlignmentReport, PipelineError> {
    let stage = Stage::Align;
    let matrix = lift_matrix(model, corpus).map_err(at(stage))?;
    let classification = classify_clusters(&matrix, cfg.threshold).map_err(at(stage))?;
    Ok(AlignmentReport::new(matrix, classification))
}

pub fn write_alignment(report: &AlignmentReport, json: &Path, svg: &Path) -> Result<(), PipelineError> {
    export_heatmap(report, json, svg).map_err(at(Stage::Align))
}

pub fn fit_lmm(cfg: &PipelineConfig, corpus: &Corpus) -> Result<LmmArtifact, PipelineError> {
    let stage = Stage::FitLmm;
    let design = build_design(corpus, &corpus.scheme, cfg.predictor_scale()).map_err(at(stage))?;
    let fit = fit_reml(&design, &RemlOptions::default()).map_err(at(stage))?;
    let table = wald_table(&fit, cfg.df_method);
    Ok(LmmArtifact { fit, table })
}

pub fn write_lmm(art: &LmmArtifact, json: &Path, markdown: &Path) -> Result<(), PipelineError> {
    write_json(art, json, Stage::FitLmm)?;
    std::fs::write(markdown, art.to_markdown())
        .map_err(|e| PipelineError::new(Stage::FitLmm, format!("{}: {e}", markdown.display())))
}

pub fn ona(cfg: &PipelineConfig, corpus: &Corpus) -> Result<OnaModel, PipelineError> {
    run_ona(corpus, &corpus.scheme, cfg.ona_options()).map_err(at(Stage::Ona))
}

pub fn write_ona(model: &OnaModel, json: &Path, svg_dir: &Path) -> Result<Vec<PathBuf>, PipelineError> {
    ensure_dir(svg_dir, Stage::Ona)?;
    export_ona(model, json, svg_dir).map_err(at(Stage::Ona))
}

/// Runs every stage in order, writing all artifacts and `report.md`.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineResult, PipelineError> {
    let paths = cfg.paths();
    let data = ingest(cfg, true)?;
    log::info!(
        "ingested {} sessions, {} utterances",
        data.summary.n_sessions,
        data.summary.n_utterances
    );
    let clusters = cluster(cfg, &data)?;
    write_clusters(&clusters, &paths.clusters_json, &paths.assignments_csv)?;
    log::info!("{} clusters", clusters.model.n_clusters());
    let alignment = align(cfg, &data.corpus, &clusters.model)?;
    write_alignment(&alignment, &paths.lift_json, &paths.lift_svg)?;
    let lmm = fit_lmm(cfg, &data.corpus)?;
    write_lmm(&lmm, &paths.lmm_json, &paths.lmm_md)?;
    let ona = ona(cfg, &data.corpus)?;
    write_ona(&ona, &paths.ona_json, &paths.dir)?;
    let result = PipelineResult {
        ingest: data.summary,
        clusters,
        alignment,
        lmm,
        ona,
    };
    render_report(&result, &paths.report_md)?;
    Ok(result)
}

/// Rebuilds the results of a completed run from its artifacts.
pub fn load_results(dir: &Path) -> Result<PipelineResult, PipelineError> {
    let p = ArtifactPaths::in_dir(dir);
    let stage = Stage::Report;
    Ok(PipelineResult {
        ingest: read_json(&p.ingest_json, stage)?,
        clusters: read_json(&p.clusters_json, stage)?,
        alignment: read_json(&p.lift_json, stage)?,
        lmm: read_json(&p.lmm_json, stage)?,
        ona: read_json(&p.ona_json, stage)?,
    })
}
