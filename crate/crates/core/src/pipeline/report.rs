use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;

use super::{PipelineError, PipelineResult, Stage, CLUSTERS_JSON, LIFT_JSON, LIFT_SVG, LMM_JSON, ONA_JSON};
use crate::alignment::VerdictKind;
use crate::clustering::NOISE;

/// Tables embedded in the report: `(name, artifact file, JSON pointer)`.
/// Each embedded block parses to the value at that pointer in the artifact.
pub const REPORT_TABLES: &[(&str, &str, &str)] = &[
    ("cluster-sizes", CLUSTERS_JSON, "/model/sizes"),
    ("lift", LIFT_JSON, "/matrix"),
    ("verdicts", LIFT_JSON, "/classification/verdicts"),
    ("verdict-summary", LIFT_JSON, "/classification/summary"),
    ("coefficients", LMM_JSON, "/table/rows"),
    ("random-effects", LMM_JSON, "/table/random_effects"),
    ("quartile-split", ONA_JSON, "/split"),
    ("mean-high", ONA_JSON, "/networks/mean_high"),
    ("mean-low", ONA_JSON, "/networks/mean_low"),
    ("subtraction", ONA_JSON, "/networks/subtraction"),
    ("node-positions", ONA_JSON, "/node_positions"),
];

const MARK: &str = "<!-- table: ";

fn embed<T: Serialize>(out: &mut String, name: &str, value: &T) {
    let json = serde_json::to_string_pretty(value).expect("table serializes");
    let _ = write!(out, "\n{MARK}{name} -->\n```json\n{json}\n```\n");
}

/// Collects every embedded JSON table of a rendered report by name.
pub fn extract_report_tables(markdown: &str) -> Result<BTreeMap<String, Value>, String> {
    let mut tables = BTreeMap::new();
    let mut lines = markdown.lines();
    while let Some(line) = lines.next() {
        let Some(rest) = line.strip_prefix(MARK) else { continue };
        let name = rest.trim_end().strip_suffix("-->").ok_or("unterminated table marker")?.trim();
        if lines.next() != Some("```json") {
            return Err(format!("table {name}: missing json fence"));
        }
        let body: Vec<&str> = lines.by_ref().take_while(|l| *l != "```").collect();
        let value = serde_json::from_str(&body.join("\n")).map_err(|e| format!("table {name}: {e}"))?;
        tables.insert(name.to_string(), value);
    }
    Ok(tables)
}

fn verdict_text(kind: &VerdictKind) -> String {
    match kind {
        VerdictKind::Aligned { label } => format!("aligned: {label}"),
        VerdictKind::NovelNoDominant => "novel, no dominant label".to_string(),
        VerdictKind::NovelMultiDominant { labels } => format!("novel, several dominant: {}", labels.join("; ")),
    }
}

fn render(r: &PipelineResult) -> String {
    let mut out = String::from("# Discussion-move analysis report\n");

    let i = &r.ingest;
    let _ = writeln!(out, "\n## Data\n");
    let _ = writeln!(
        out,
        "- Scheme: {} ({} labels in {} categories)",
        i.scheme, i.n_labels, i.n_categories
    );
    let _ = writeln!(
        out,
        "- Groups: {}; sessions: {} ({} with IC scores); utterances: {} ({} coded)",
        i.n_groups, i.n_sessions, i.n_scored_sessions, i.n_utterances, i.n_coded_utterances
    );
    if let Some(d) = i.embedding_dim {
        let _ = writeln!(out, "- Embedding dimension: {d}");
    }
    if let Some(seed) = i.synthetic_seed {
        let _ = writeln!(out, "- Synthetic corpus, seed {seed}");
    }
    let _ = writeln!(
        out,
        "- Validation: {} errors, {} warnings",
        i.validation.errors().count(),
        i.validation.warnings().count()
    );

    let m = &r.clusters.model;
    let c = &r.alignment.classification;
    let _ = writeln!(out, "\n## Clusters and alignment\n");
    let reduction = r
        .clusters
        .pca
        .as_ref()
        .map_or("the full embedding space".to_string(), |p| format!("{} principal components", p.rank.min(p.requested_dim)));
    let _ = writeln!(
        out,
        "HDBSCAN (min cluster size {}, min samples {}) on {reduction} found {} clusters; {} utterances are noise.",
        m.params.min_cluster_size,
        m.params.min_samples,
        m.n_clusters(),
        m.noise_count()
    );
    match m.params.merge_threshold {
        Some(t) => {
            let _ = writeln!(out, "Centroid merging at cosine ≥ {t} performed {} merges.", m.merge_log.len());
        }
        None => {
            let _ = writeln!(out, "Centroid merging disabled.");
        }
    }
    let _ = writeln!(
        out,
        "\nAt LIFT threshold {}: {} aligned, {} novel with no dominant label, {} novel with several dominant labels.",
        c.threshold, c.summary.aligned, c.summary.novel_no_dominant, c.summary.novel_multi_dominant
    );
    if c.summary.novel() == 0 {
        let _ = writeln!(out, "Novel clusters: 0. Every cluster aligns with exactly one scheme label.");
    } else {
        let _ = writeln!(out, "Novel clusters: {}.", c.summary.novel());
    }
    let _ = writeln!(out, "\n| Cluster | Size | Verdict | Dominant labels (LIFT) | Keywords |");
    let _ = writeln!(out, "|---:|---:|---|---|---|");
    for v in &c.verdicts {
        let lifts = v
            .dominant_lifts
            .iter()
            .map(|(l, x)| format!("{l} ({x:.2})"))
            .collect::<Vec<_>>()
            .join(", ");
        let words = r
            .clusters
            .keywords
            .as_ref()
            .and_then(|k| k.get(&v.cluster))
            .map(|ws| ws.iter().take(3).map(|(w, _)| w.as_str()).collect::<Vec<_>>().join(", "))
            .unwrap_or_default();
        let _ = writeln!(
            out,
            "| {} | {} | {} | {lifts} | {words} |",
            v.cluster,
            m.sizes.get(&v.cluster).copied().unwrap_or(0),
            verdict_text(&v.kind)
        );
    }
    if m.labels.contains(&NOISE) {
        let _ = writeln!(out, "| noise | {} | | | |", m.noise_count());
    }
    for mc in &c.merge_candidates {
        let ids: Vec<String> = mc.clusters.iter().map(i32::to_string).collect();
        let _ = writeln!(out, "\nMerge candidate for {}: clusters {}.", mc.label, ids.join(", "));
    }
    for n in &r.clusters.notes {
        let _ = writeln!(out, "\nNote: {n}.");
    }
    let _ = writeln!(out, "\n![LIFT heatmap]({LIFT_SVG})");
    embed(&mut out, "cluster-sizes", &m.sizes);
    embed(&mut out, "lift", &r.alignment.matrix);
    embed(&mut out, "verdicts", &c.verdicts);
    embed(&mut out, "verdict-summary", &c.summary);

    let _ = writeln!(out, "\n## Discussion moves and discussion quality\n");
    out.push_str(&r.lmm.table.to_markdown());
    embed(&mut out, "coefficients", &r.lmm.table.rows);
    embed(&mut out, "random-effects", &r.lmm.table.random_effects);

    let o = &r.ona;
    let _ = writeln!(out, "\n## Ordered networks\n");
    let _ = writeln!(out, "{}", o.split.summary());
    let _ = writeln!(
        out,
        "\nWindow {}; {} units projected, {} excluded with no transitions. Node layout: {}.",
        o.options.window,
        o.units.len(),
        o.excluded_units.len(),
        o.layout
    );
    let fmt_corr = |c: Option<f64>| c.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    let _ = writeln!(
        out,
        "Co-registration fit correlation: x {}, y {}.",
        fmt_corr(o.fit_correlation[0]),
        fmt_corr(o.fit_correlation[1])
    );
    for w in &o.warnings {
        let _ = writeln!(out, "\nWarning: {w}.");
    }
    let _ = writeln!(out, "\n![HIGH network](ona_high.svg)\n\n![LOW network](ona_low.svg)\n\n![Subtraction network](ona_subtraction.svg)");
    embed(&mut out, "quartile-split", &o.split);
    embed(&mut out, "mean-high", &o.networks.mean_high);
    embed(&mut out, "mean-low", &o.networks.mean_low);
    embed(&mut out, "subtraction", &o.networks.subtraction);
    embed(&mut out, "node-positions", &o.node_positions);
    out
}

/// Writes the Markdown report to `path`.
pub fn render_report(results: &PipelineResult, path: &Path) -> Result<(), PipelineError> {
    std::fs::write(path, render(results))
        .map_err(|e| PipelineError::new(Stage::Report, format!("{}: {e}", path.display())))
}
