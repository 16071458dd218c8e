use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{OnaError, OnaModel};
use crate::svg::{escape, SvgDoc};

const HIGH_COLOR: &str = "#1f77b4";
const LOW_COLOR: &str = "#d62728";
const CANVAS: f64 = 760.0;
const MARGIN: f64 = 110.0;
const NODE_R: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NetworkKind {
    High,
    Low,
    Subtraction,
}

impl NetworkKind {
    fn color(self, weight: f64) -> &'static str {
        match self {
            NetworkKind::High => HIGH_COLOR,
            NetworkKind::Low => LOW_COLOR,
            NetworkKind::Subtraction if weight >= 0.0 => HIGH_COLOR,
            NetworkKind::Subtraction => LOW_COLOR,
        }
    }

    fn marker(color: &str) -> &'static str {
        if color == HIGH_COLOR {
            "arrow-high"
        } else {
            "arrow-low"
        }
    }

    fn title(self) -> &'static str {
        match self {
            NetworkKind::High => "Mean network: HIGH",
            NetworkKind::Low => "Mean network: LOW",
            NetworkKind::Subtraction => "Subtraction network: HIGH − LOW",
        }
    }
}

fn screen_positions(nodes: &[[f64; 2]]) -> Vec<(f64, f64)> {
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in nodes {
        x0 = x0.min(p[0]);
        x1 = x1.max(p[0]);
        y0 = y0.min(p[1]);
        y1 = y1.max(p[1]);
    }
    let span = (x1 - x0).max(y1 - y0);
    let usable = CANVAS - 2.0 * MARGIN;
    if !span.is_finite() || span <= 0.0 {
        let k = nodes.len().max(1) as f64;
        return (0..nodes.len())
            .map(|i| {
                let a = std::f64::consts::TAU * i as f64 / k;
                (CANVAS / 2.0 + usable / 2.0 * a.cos(), CANVAS / 2.0 + usable / 2.0 * a.sin())
            })
            .collect();
    }
    let cx = (x0 + x1) / 2.0;
    let cy = (y0 + y1) / 2.0;
    nodes
        .iter()
        .map(|p| {
            (
                CANVAS / 2.0 + (p[0] - cx) / span * usable,
                // Screen y grows downward.
                CANVAS / 2.0 - (p[1] - cy) / span * usable,
            )
        })
        .collect()
}

/// Directed network drawing: curved arrowed edges with width proportional to
/// |weight|, and an inner circle per node sized by its self-loop weight.
pub fn render_network_svg(labels: &[String], nodes: &[[f64; 2]], weights: &[Vec<f64>], kind: NetworkKind) -> String {
    let k = labels.len();
    let pos = screen_positions(nodes);
    let max_edge = (0..k)
        .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| weights[i][j].abs())
        .fold(0.0f64, f64::max);
    let max_loop = (0..k).map(|i| weights[i][i].abs()).fold(0.0f64, f64::max);

    let mut doc = SvgDoc::new(CANVAS, CANVAS + 40.0);
    let mut defs = String::from("<defs>");
    for (id, color) in [("arrow-high", HIGH_COLOR), ("arrow-low", LOW_COLOR)] {
        let _ = write!(
            defs,
            r#"<marker id="{id}" viewBox="0 0 10 10" refX="9" refY="5" markerWidth="5" markerHeight="5" orient="auto-start-reverse"><path d="M 0 0 L 10 5 L 0 10 z" fill="{color}"/></marker>"#
        );
    }
    defs.push_str("</defs>");
    doc.raw(&defs);
    doc.text(CANVAS / 2.0, 30.0, 18.0, "middle", r#" font-weight="bold""#, kind.title());

    for i in 0..k {
        for j in 0..k {
            let w = weights[i][j];
            if i == j || w.abs() <= 1e-12 || max_edge == 0.0 {
                continue;
            }
            let (x1, y1) = pos[i];
            let (x2, y2) = pos[j];
            let (dx, dy) = (x2 - x1, y2 - y1);
            let len = (dx * dx + dy * dy).sqrt();
            if len < 2.0 * NODE_R {
                continue;
            }
            let (ux, uy) = (dx / len, dy / len);
            // Opposite directions bend to opposite sides.
            let (nx, ny) = (-uy, ux);
            let bend = 0.12 * len;
            let (sx, sy) = (x1 + ux * NODE_R, y1 + uy * NODE_R);
            let (ex, ey) = (x2 - ux * (NODE_R + 2.0), y2 - uy * (NODE_R + 2.0));
            let (cx, cy) = ((x1 + x2) / 2.0 + nx * bend, (y1 + y2) / 2.0 + ny * bend);
            let rel = w.abs() / max_edge;
            let color = kind.color(w);
            doc.raw(&format!(
                r#"<path class="edge" d="M {sx:.2} {sy:.2} Q {cx:.2} {cy:.2} {ex:.2} {ey:.2}" fill="none" stroke="{color}" stroke-width="{:.2}" stroke-opacity="{:.2}" marker-end="url(#{})"><title>{} → {}: {w:.4}</title></path>"#,
                0.5 + 7.5 * rel,
                0.25 + 0.7 * rel,
                NetworkKind::marker(color),
                escape(&labels[i]),
                escape(&labels[j])
            ));
        }
    }

    for (i, label) in labels.iter().enumerate() {
        let (x, y) = pos[i];
        doc.raw(&format!(
            r##"<circle class="node" cx="{x:.2}" cy="{y:.2}" r="{NODE_R}" fill="#ffffff" stroke="#444444" stroke-width="1.2"/>"##
        ));
        let w = weights[i][i];
        if w.abs() > 1e-12 && max_loop > 0.0 {
            doc.raw(&format!(
                r#"<circle class="self-loop" cx="{x:.2}" cy="{y:.2}" r="{:.2}" fill="{}" fill-opacity="0.75"><title>{} self-transition: {w:.4}</title></circle>"#,
                (NODE_R - 3.0) * (w.abs() / max_loop).sqrt(),
                kind.color(w),
                escape(label)
            ));
        }
        doc.text(x, y + NODE_R + 13.0, 11.0, "middle", "", label);
    }

    let legend = match kind {
        NetworkKind::Subtraction => "blue: stronger in HIGH · red: stronger in LOW · inner circles: self-transitions",
        _ => "edge width ∝ mean weight · inner circles: self-transitions",
    };
    doc.text(CANVAS / 2.0, CANVAS + 20.0, 12.0, "middle", "", legend);
    doc.finish()
}

fn io_err(path: &Path, e: std::io::Error) -> OnaError {
    OnaError::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

/// Writes the model as JSON plus `ona_high.svg`, `ona_low.svg` and
/// `ona_subtraction.svg` under `svg_dir`; returns the SVG paths.
pub fn export_ona(model: &OnaModel, json_path: &Path, svg_dir: &Path) -> Result<Vec<PathBuf>, OnaError> {
    let json = serde_json::to_string_pretty(model).expect("model serializes");
    std::fs::write(json_path, json + "\n").map_err(|e| io_err(json_path, e))?;
    std::fs::create_dir_all(svg_dir).map_err(|e| io_err(svg_dir, e))?;
    let mut paths = Vec::new();
    for (name, kind, weights) in [
        ("ona_high.svg", NetworkKind::High, &model.networks.mean_high),
        ("ona_low.svg", NetworkKind::Low, &model.networks.mean_low),
        ("ona_subtraction.svg", NetworkKind::Subtraction, &model.networks.subtraction),
    ] {
        let path = svg_dir.join(name);
        let svg = render_network_svg(&model.labels, &model.node_positions, weights, kind);
        std::fs::write(&path, svg).map_err(|e| io_err(&path, e))?;
        paths.push(path);
    }
    Ok(paths)
}
