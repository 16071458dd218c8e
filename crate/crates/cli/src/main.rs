use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use movenet_core::ona::QuartileMethod;
use movenet_core::pipeline::{
    align, cluster, fit_lmm, ingest, load_results, ona, read_clusters, read_label_pairs, read_ratings,
    reliability_stats, render_report, run_pipeline, write_alignment, write_clusters, write_lmm, write_ona,
    PipelineConfig, PipelineError, Stage,
};
use movenet_core::quality::DfMethod;
use movenet_core::synth::{generate_corpus, write_synth, SynthConfig};

/// Discussion-move discovery, alignment, quality modeling and ordered network analysis.
#[derive(Parser, Debug)]
#[command(name = "movenet", version)]
struct Cli {
    /// JSON config file with kebab-case keys mirroring the flags
    /// (a synthetic-corpus config for `synth`).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides the config file and MOVENET_OUT_DIR.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load and validate the corpus and embeddings.
    Ingest(InputArgs),
    /// Inter-rater statistics from a ratings CSV.
    Reliability(ReliabilityArgs),
    /// Cluster utterance embeddings.
    Cluster {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        params: ClusterArgs,
        #[arg(long)]
        out_json: Option<PathBuf>,
        #[arg(long)]
        out_csv: Option<PathBuf>,
    },
    /// LIFT alignment of clusters with the coding scheme.
    Align {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        params: AlignArgs,
        /// Cluster artifact from `cluster` (default: <out-dir>/clusters.json).
        #[arg(long)]
        clusters: Option<PathBuf>,
        #[arg(long)]
        out_json: Option<PathBuf>,
        #[arg(long)]
        out_svg: Option<PathBuf>,
    },
    /// Random-intercept mixed model of discussion quality.
    FitLmm {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        params: LmmArgs,
        #[arg(long)]
        out_json: Option<PathBuf>,
        #[arg(long)]
        out_markdown: Option<PathBuf>,
    },
    /// Ordered network analysis of high- and low-quality units.
    Ona {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        params: OnaArgs,
        #[arg(long)]
        out_json: Option<PathBuf>,
        #[arg(long)]
        out_svg_dir: Option<PathBuf>,
    },
    /// Generate a synthetic corpus with planted structure.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run every stage and write the report.
    Run {
        #[command(flatten)]
        input: InputArgs,
        #[command(flatten)]
        cluster: ClusterArgs,
        #[command(flatten)]
        align: AlignArgs,
        #[command(flatten)]
        lmm: LmmArgs,
        #[command(flatten)]
        ona: OnaArgs,
    },
    /// Render report.md from the artifacts of a completed run.
    Report {
        /// Output file (default: <out-dir>/report.md).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Utterances JSON-lines file.
    #[arg(long)]
    utterances: Option<PathBuf>,
    /// Sessions CSV file.
    #[arg(long)]
    sessions: Option<PathBuf>,
    /// Embeddings JSON-lines file.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Builtin scheme name (moves14, seda8) or scheme file.
    #[arg(long)]
    scheme: Option<String>,
    /// Generate the input corpus instead of reading files.
    #[arg(long)]
    synthetic: bool,
    /// Seed for the synthetic corpus.
    #[arg(long)]
    seed: Option<u64>,
}

impl InputArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        set(&mut c.utterances, self.utterances.clone().map(Some));
        set(&mut c.sessions, self.sessions.clone().map(Some));
        set(&mut c.embeddings, self.embeddings.clone().map(Some));
        set(&mut c.scheme, self.scheme.clone());
        c.synthetic |= self.synthetic;
        set(&mut c.seed, self.seed);
    }
}

#[derive(Args, Debug)]
struct ClusterArgs {
    #[arg(long)]
    min_cluster_size: Option<usize>,
    /// Defaults to the minimum cluster size.
    #[arg(long)]
    min_samples: Option<usize>,
    /// Cosine similarity at which cluster centroids merge.
    #[arg(long)]
    merge_threshold: Option<f64>,
    #[arg(long, conflicts_with = "merge_threshold")]
    no_merge: bool,
    /// Principal components kept before clustering; 0 keeps the full space.
    #[arg(long)]
    pca_dims: Option<usize>,
    /// Skip L2 normalization of embeddings.
    #[arg(long)]
    no_normalize: bool,
    /// Keywords per cluster.
    #[arg(long)]
    top_k: Option<usize>,
}

impl ClusterArgs {
    fn apply(&self, c: &mut PipelineConfig) {
        set(&mut c.min_cluster_size, self.min_cluster_size);
        set(&mut c.min_samples, self.min_samples.map(Some));
        set(&mut c.merge_threshold, self.merge_threshold.map(Some));
        if self.no_merge {
            c.merge_threshold = None;
        }
        set(&mut c.pca_dims, self.pca_dims);
        c.no_normalize |= self.no_normalize;
        set(&mut c.top_k, self.top_k);
    }
}

#[derive(Args, Debug)]
struct AlignArgs {
    /// LIFT at or above which a label dominates a cluster.
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Args, Debug)]
struct LmmArgs {
    /// Use per-session move proportions instead of counts.
    #[arg(long)]
    proportions: bool,
    /// residual, n-minus-p or normal.
    #[arg(long)]
    df_method: Option<DfMethod>,
}

#[derive(Args, Debug)]
struct OnaArgs {
    /// Transition window in utterances.
    #[arg(long)]
    window: Option<usize>,
    /// nearest-rank or linear.
    #[arg(long)]
    quartile_method: Option<QuartileMethod>,
    /// Aggregate sessions into group-level units.
    #[arg(long)]
    group_units: bool,
}

#[derive(Args, Debug)]
struct ReliabilityArgs {
    /// CSV with target_id, rater_id, rating columns.
    #[arg(long)]
    ratings: PathBuf,
    /// Optional CSV with item_id, label_a, label_b columns for Cohen's kappa.
    #[arg(long)]
    pairs: Option<PathBuf>,
    #[arg(long, default_value_t = 1.0)]
    scale_min: f64,
    #[arg(long, default_value_t = 7.0)]
    scale_max: f64,
    /// Clamp r_wg into [0, 1].
    #[arg(long)]
    clamp_rwg: bool,
    /// Output file (default: stdout).
    #[arg(long)]
    out_json: Option<PathBuf>,
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

fn pipeline_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) if !matches!(cli.command, Command::Synth { .. }) => {
            PipelineConfig::from_json_file(path).map_err(anyhow::Error::msg)?
        }
        _ => PipelineConfig::default(),
    };
    cfg.apply_out_dir_env();
    set(&mut cfg.out_dir, cli.out_dir.clone());
    Ok(cfg)
}

fn or_default(p: &Option<PathBuf>, default: &Path) -> PathBuf {
    p.clone().unwrap_or_else(|| default.to_path_buf())
}

fn write_output(text: &str, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = pipeline_config(&cli)?;
    let paths = |cfg: &PipelineConfig| cfg.paths();
    match &cli.command {
        Command::Ingest(input) => {
            input.apply(&mut cfg);
            let data = ingest(&cfg, false)?;
            println!("{}", serde_json::to_string_pretty(&data.summary)?);
        }
        Command::Reliability(args) => {
            let rows = read_ratings(&args.ratings)?;
            let pairs = args.pairs.as_deref().map(read_label_pairs).transpose()?;
            let stats = reliability_stats(&rows, args.scale_min, args.scale_max, args.clamp_rwg, pairs.as_deref())?;
            write_output(&serde_json::to_string_pretty(&stats)?, args.out_json.as_deref())
                .map_err(|e| PipelineError::new(Stage::Reliability, format!("{e:#}")))?;
        }
        Command::Cluster {
            input,
            params,
            out_json,
            out_csv,
        } => {
            input.apply(&mut cfg);
            params.apply(&mut cfg);
            let p = paths(&cfg);
            let data = ingest(&cfg, true)?;
            let art = cluster(&cfg, &data)?;
            write_clusters(&art, &or_default(out_json, &p.clusters_json), &or_default(out_csv, &p.assignments_csv))?;
            log::info!("{} clusters, {} noise", art.model.n_clusters(), art.model.noise_count());
        }
        Command::Align {
            input,
            params,
            clusters,
            out_json,
            out_svg,
        } => {
            input.apply(&mut cfg);
            set(&mut cfg.threshold, params.threshold);
            let p = paths(&cfg);
            let data = ingest(&cfg, false)?;
            let art = read_clusters(&or_default(clusters, &p.clusters_json))?;
            let report = align(&cfg, &data.corpus, &art.model)?;
            write_alignment(&report, &or_default(out_json, &p.lift_json), &or_default(out_svg, &p.lift_svg))?;
        }
        Command::FitLmm {
            input,
            params,
            out_json,
            out_markdown,
        } => {
            input.apply(&mut cfg);
            cfg.proportions |= params.proportions;
            set(&mut cfg.df_method, params.df_method);
            let p = paths(&cfg);
            let data = ingest(&cfg, false)?;
            let art = fit_lmm(&cfg, &data.corpus)?;
            write_lmm(&art, &or_default(out_json, &p.lmm_json), &or_default(out_markdown, &p.lmm_md))?;
        }
        Command::Ona {
            input,
            params,
            out_json,
            out_svg_dir,
        } => {
            input.apply(&mut cfg);
            apply_ona(params, &mut cfg);
            let p = paths(&cfg);
            let data = ingest(&cfg, false)?;
            let model = ona(&cfg, &data.corpus)?;
            write_ona(&model, &or_default(out_json, &p.ona_json), &or_default(out_svg_dir, &p.dir))?;
        }
        Command::Synth { seed } => {
            let mut sc = match &cli.config {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| PipelineError::new(Stage::Synth, format!("{}: {e}", path.display())))?;
                    serde_json::from_str::<SynthConfig>(&text)
                        .map_err(|e| PipelineError::new(Stage::Synth, format!("{}: {e}", path.display())))?
                }
                None => SynthConfig::default(),
            };
            set(&mut sc.seed, *seed);
            let out = generate_corpus(&sc).map_err(|e| PipelineError::new(Stage::Synth, e.to_string()))?;
            write_synth(&out, &cfg.out_dir).map_err(|e| PipelineError::new(Stage::Synth, e.to_string()))?;
            log::info!("wrote synthetic corpus to {}", cfg.out_dir.display());
        }
        Command::Run {
            input,
            cluster,
            align,
            lmm,
            ona,
        } => {
            input.apply(&mut cfg);
            cluster.apply(&mut cfg);
            set(&mut cfg.threshold, align.threshold);
            cfg.proportions |= lmm.proportions;
            set(&mut cfg.df_method, lmm.df_method);
            apply_ona(ona, &mut cfg);
            run_pipeline(&cfg)?;
            log::info!("artifacts written to {}", cfg.out_dir.display());
        }
        Command::Report { out } => {
            let results = load_results(&cfg.out_dir)?;
            render_report(&results, &or_default(out, &paths(&cfg).report_md))?;
        }
    }
    Ok(())
}

fn apply_ona(args: &OnaArgs, cfg: &mut PipelineConfig) {
    set(&mut cfg.window, args.window);
    set(&mut cfg.quartile_method, args.quartile_method);
    cfg.group_units |= args.group_units;
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
