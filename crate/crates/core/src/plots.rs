//! Static SVG figures rendered from analysis artifacts.
//!
//! Elements carry class attributes (`curve`, `cell`, `profile`, `added`,
//! `removed`, `persisted`, ...) so outputs can be checked structurally.

use std::fmt::Write as _;

use serde::de::DeserializeOwned;
use serde_json::Value;

use crate::emotions::{Emotion, EmotionProfiles, DIMS};
use crate::error::{Error, Result};
use crate::evaluate::{RecallDiff, RecallReport, OVERALL};
use crate::finetune::{AttributeDiff, ShiftReport};
use crate::rsa::{DeltaRho, ModelGrid, Rsm};

pub const ADDED: &str = "#2e9e44";
pub const REMOVED: &str = "#d0342c";
pub const PERSISTED: &str = "#9a9a9a";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Svg {
    /// File name, e.g. `recall_age.svg`.
    pub name: String,
    pub body: String,
}

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

fn open(w: f64, h: f64) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\" font-family=\"sans-serif\" font-size=\"11\">\n<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n"
    )
}

fn text(out: &mut String, x: f64, y: f64, class: &str, extra: &str, s: &str) {
    let _ = writeln!(out, "<text class=\"{class}\" x=\"{x:.1}\" y=\"{y:.1}\"{extra}>{}</text>", esc(s));
}

/// White to dark blue.
fn shade(v: f64) -> String {
    let t = v.clamp(0.0, 1.0);
    let r = (255.0 - t * 215.0) as u8;
    let g = (255.0 - t * 175.0) as u8;
    let b = (255.0 - t * 95.0) as u8;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// One recall@k line chart per category.
pub fn recall_plots(report: &RecallReport) -> Vec<Svg> {
    let cats: Vec<&String> = report.curves.keys().filter(|c| c.as_str() != OVERALL).collect();
    if cats.is_empty() {
        log::warn!("recall report for {} has no category curves; nothing to plot", report.model_id);
        return Vec::new();
    }
    let (w, h, left, top, pw, ph) = (360.0, 260.0, 50.0, 30.0, 280.0, 180.0);
    let kmax = report.k_grid.iter().copied().max().unwrap_or(1) as f64;
    cats.into_iter()
        .map(|cat| {
            let ys = &report.curves[cat];
            let mut s = open(w, h);
            text(&mut s, left, 18.0, "title", "", &format!("{} recall@k: {cat}", report.model_id));
            let _ = writeln!(
                s,
                "<rect class=\"axes\" x=\"{left}\" y=\"{top}\" width=\"{pw}\" height=\"{ph}\" fill=\"none\" stroke=\"black\"/>"
            );
            for tick in [0.0, 0.5, 1.0] {
                text(&mut s, 20.0, top + ph * (1.0 - tick) + 4.0, "tick", "", &format!("{tick:.1}"));
            }
            let pts: Vec<(f64, f64)> = report
                .k_grid
                .iter()
                .zip(ys)
                .map(|(&k, &y)| (left + pw * k as f64 / kmax, top + ph * (1.0 - y)))
                .collect();
            let path: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.1},{y:.1}")).collect();
            let _ = writeln!(
                s,
                "<polyline class=\"curve\" points=\"{}\" fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"2\"/>",
                path.join(" ")
            );
            for ((x, y), k) in pts.iter().zip(&report.k_grid) {
                let _ = writeln!(s, "<circle class=\"point\" cx=\"{x:.1}\" cy=\"{y:.1}\" r=\"3\" fill=\"#1f5fa8\"/>");
                text(&mut s, *x - 6.0, top + ph + 16.0, "tick", "", &k.to_string());
            }
            s.push_str("</svg>\n");
            Svg {
                name: format!("recall_{}.svg", slug(cat)),
                body: s,
            }
        })
        .collect()
}

/// Radar chart per group, laid out in a grid.
pub fn emotion_radar(profiles: &EmotionProfiles) -> Option<Svg> {
    if profiles.groups.is_empty() {
        log::warn!("no emotion profiles for {}; nothing to plot", profiles.model_id);
        return None;
    }
    let cols = 4usize;
    let cell = 200.0;
    let rows = profiles.groups.len().div_ceil(cols);
    let mut s = open(cell * cols as f64, cell * rows as f64 + 24.0);
    text(&mut s, 10.0, 16.0, "title", "", &format!("emotion profiles: {}", profiles.model_id));
    for (i, (name, v)) in profiles.groups.iter().enumerate() {
        let cx = cell * (i % cols) as f64 + cell / 2.0;
        let cy = 24.0 + cell * (i / cols) as f64 + cell / 2.0 + 6.0;
        let r = 62.0;
        let angle = |d: usize| std::f64::consts::TAU * d as f64 / DIMS as f64 - std::f64::consts::FRAC_PI_2;
        let ring: Vec<String> = (0..DIMS)
            .map(|d| format!("{:.1},{:.1}", cx + r * angle(d).cos(), cy + r * angle(d).sin()))
            .collect();
        let _ = writeln!(
            s,
            "<polygon class=\"grid\" points=\"{}\" fill=\"none\" stroke=\"#cccccc\"/>",
            ring.join(" ")
        );
        for (d, e) in Emotion::ALL.iter().enumerate() {
            let (x, y) = (cx + (r + 14.0) * angle(d).cos(), cy + (r + 14.0) * angle(d).sin());
            text(&mut s, x, y, "axis-label", " text-anchor=\"middle\" font-size=\"8\"", e.as_str());
        }
        let pts: Vec<String> = v
            .scores
            .iter()
            .enumerate()
            .map(|(d, sc)| format!("{:.1},{:.1}", cx + r * sc * angle(d).cos(), cy + r * sc * angle(d).sin()))
            .collect();
        let _ = writeln!(
            s,
            "<polygon class=\"profile\" data-group=\"{}\" points=\"{}\" fill=\"#1f5fa8\" fill-opacity=\"0.35\" stroke=\"#1f5fa8\"/>",
            esc(name),
            pts.join(" ")
        );
        text(&mut s, cx, cy - r - 22.0, "group-label", " text-anchor=\"middle\"", name);
    }
    s.push_str("</svg>\n");
    Some(Svg {
        name: "emotion_profiles.svg".into(),
        body: s,
    })
}

/// Group-by-emotion heatmap of the same profiles.
pub fn emotion_heatmap(profiles: &EmotionProfiles) -> Option<Svg> {
    if profiles.groups.is_empty() {
        return None;
    }
    let (cw, ch, left, top) = (56.0, 16.0, 150.0, 40.0);
    let n = profiles.groups.len();
    let mut s = open(left + cw * DIMS as f64 + 10.0, top + ch * n as f64 + 10.0);
    for (d, e) in Emotion::ALL.iter().enumerate() {
        text(&mut s, left + cw * d as f64 + 2.0, top - 6.0, "col-label", " font-size=\"9\"", e.as_str());
    }
    for (i, (name, v)) in profiles.groups.iter().enumerate() {
        let y = top + ch * i as f64;
        text(&mut s, 4.0, y + 12.0, "row-label", "", name);
        for (d, sc) in v.scores.iter().enumerate() {
            let _ = writeln!(
                s,
                "<rect class=\"cell\" x=\"{:.1}\" y=\"{y:.1}\" width=\"{cw}\" height=\"{ch}\" fill=\"{}\"><title>{} {}: {sc:.3}</title></rect>",
                left + cw * d as f64,
                shade(*sc),
                esc(name),
                Emotion::ALL[d]
            );
        }
    }
    s.push_str("</svg>\n");
    Some(Svg {
        name: "emotion_heatmap.svg".into(),
        body: s,
    })
}

fn square_heatmap(name: &str, title: &str, labels: &[String], values: &[Vec<Option<f64>>]) -> Svg {
    let n = labels.len();
    let (c, left, top) = (18.0, 150.0, 150.0);
    let mut s = open(left + c * n as f64 + 10.0, top + c * n as f64 + 10.0);
    text(&mut s, 4.0, 16.0, "title", "", title);
    for (i, l) in labels.iter().enumerate() {
        text(&mut s, 4.0, top + c * i as f64 + 13.0, "row-label", "", l);
        let x = left + c * i as f64 + 12.0;
        text(
            &mut s,
            x,
            top - 4.0,
            "col-label",
            &format!(" transform=\"rotate(-60 {x:.1} {:.1})\"", top - 4.0),
            l,
        );
    }
    for (i, row) in values.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            let (fill, tip) = match v {
                Some(v) => (shade(*v), format!("{v:.3}")),
                None => ("#f4e4e4".to_string(), "undefined".to_string()),
            };
            let _ = writeln!(
                s,
                "<rect class=\"cell\" x=\"{:.1}\" y=\"{:.1}\" width=\"{c}\" height=\"{c}\" fill=\"{fill}\"><title>{} / {}: {tip}</title></rect>",
                left + c * j as f64,
                top + c * i as f64,
                esc(&labels[i]),
                esc(&labels[j])
            );
        }
    }
    s.push_str("</svg>\n");
    Svg {
        name: name.to_string(),
        body: s,
    }
}

pub fn rsm_heatmap(rsm: &Rsm, model_id: &str) -> Svg {
    let values: Vec<Vec<Option<f64>>> = rsm.values.iter().map(|r| r.iter().map(|&v| Some(v)).collect()).collect();
    square_heatmap(
        &format!("rsm_{}.svg", slug(model_id)),
        &format!("emotion RSM: {model_id}"),
        &rsm.groups,
        &values,
    )
}

pub fn model_grid_heatmap(grid: &ModelGrid) -> Svg {
    square_heatmap("rsa_models.svg", "mean Spearman correlation between models", &grid.models, &grid.values)
}

/// Horizontal bars of Δρ per category.
pub fn delta_rho_bars(d: &DeltaRho, title: &str) -> Svg {
    let rows: Vec<(&str, Option<f64>, bool)> = d
        .categories
        .iter()
        .map(|(c, s)| (c.as_str(), s.delta_rho, s.low_confidence))
        .chain(std::iter::once((OVERALL, d.overall.delta_rho, d.overall.low_confidence)))
        .collect();
    let (left, top, bw, bh) = (110.0, 30.0, 220.0, 18.0);
    let mut s = open(left + bw + 80.0, top + bh * rows.len() as f64 + 20.0);
    text(&mut s, 4.0, 16.0, "title", "", title);
    // zero on the right edge; Δρ ranges over [-2, 0]
    let _ = writeln!(
        s,
        "<line class=\"zero\" x1=\"{0:.1}\" y1=\"{top}\" x2=\"{0:.1}\" y2=\"{1:.1}\" stroke=\"black\"/>",
        left + bw,
        top + bh * rows.len() as f64
    );
    for (i, (cat, v, low)) in rows.iter().enumerate() {
        let y = top + bh * i as f64;
        text(&mut s, 4.0, y + 13.0, "row-label", "", cat);
        if let Some(v) = v {
            let len = bw * (-v / 2.0).clamp(0.0, 1.0);
            let class = if *low { "bar low-confidence" } else { "bar" };
            let _ = writeln!(
                s,
                "<rect class=\"{class}\" x=\"{:.1}\" y=\"{:.1}\" width=\"{len:.1}\" height=\"{:.1}\" fill=\"{REMOVED}\"/>",
                left + bw - len,
                y + 2.0,
                bh - 4.0
            );
            text(&mut s, left + bw + 6.0, y + 13.0, "value", "", &format!("{v:.3}"));
        } else {
            text(&mut s, left + bw + 6.0, y + 13.0, "value undefined", "", "n/a");
        }
    }
    s.push_str("</svg>\n");
    Svg {
        name: "delta_rho.svg".into(),
        body: s,
    }
}

/// Attribute diffs, one row per group: added green, persisted grey,
/// removed red.
pub fn diff_panel(diffs: &[AttributeDiff]) -> Option<Svg> {
    if diffs.is_empty() {
        log::warn!("no attribute diffs; nothing to plot");
        return None;
    }
    let line = 16.0;
    let width = 900.0;
    let mut body = String::new();
    let mut y = 40.0;
    for d in diffs {
        text(&mut body, 8.0, y, "group-label", " font-weight=\"bold\"", &d.group);
        y += line;
        let mut x = 16.0;
        let words = d
            .added
            .iter()
            .map(|w| ("added", ADDED, w))
            .chain(d.persisted.iter().map(|w| ("persisted", PERSISTED, w)))
            .chain(d.removed.iter().map(|w| ("removed", REMOVED, w)));
        for (class, color, w) in words {
            let adv = 7.0 * w.chars().count() as f64 + 10.0;
            if x + adv > width - 10.0 {
                x = 16.0;
                y += line;
            }
            text(&mut body, x, y, class, &format!(" fill=\"{color}\""), w);
            x += adv;
        }
        y += line * 1.5;
    }
    let mut s = open(width, y + 10.0);
    text(&mut s, 8.0, 16.0, "title", "", "attribute shifts after fine-tuning");
    let legend = [("added", ADDED), ("persisted", PERSISTED), ("removed", REMOVED)];
    for (i, (label, color)) in legend.iter().enumerate() {
        let _ = writeln!(
            s,
            "<rect class=\"legend\" x=\"{:.1}\" y=\"22\" width=\"10\" height=\"10\" fill=\"{color}\"/>",
            300.0 + 90.0 * i as f64
        );
        text(&mut s, 314.0 + 90.0 * i as f64, 31.0, "legend-label", "", label);
    }
    s.push_str(&body);
    s.push_str("</svg>\n");
    Some(Svg {
        name: "attribute_diff.svg".into(),
        body: s,
    })
}

/// Recall deltas as one polyline per category around a zero line.
pub fn recall_diff_plot(d: &RecallDiff) -> Option<Svg> {
    if d.deltas.is_empty() {
        return None;
    }
    let (left, top, pw, ph) = (50.0, 30.0, 300.0, 160.0);
    let kmax = d.k_grid.iter().copied().max().unwrap_or(1) as f64;
    let mut s = open(left + pw + 120.0, top + ph + 40.0);
    text(&mut s, 4.0, 16.0, "title", "", &format!("recall change: {} -> {}", d.model_a, d.model_b));
    let _ = writeln!(
        s,
        "<line class=\"zero\" x1=\"{left}\" y1=\"{0:.1}\" x2=\"{1:.1}\" y2=\"{0:.1}\" stroke=\"black\"/>",
        top + ph / 2.0,
        left + pw
    );
    for (i, (cat, ys)) in d.deltas.iter().enumerate() {
        let pts: Vec<String> = d
            .k_grid
            .iter()
            .zip(ys)
            .map(|(&k, &y)| format!("{:.1},{:.1}", left + pw * k as f64 / kmax, top + ph / 2.0 - ph / 2.0 * y.clamp(-1.0, 1.0)))
            .collect();
        let _ = writeln!(
            s,
            "<polyline class=\"curve\" data-category=\"{}\" points=\"{}\" fill=\"none\" stroke=\"#1f5fa8\"/>",
            esc(cat),
            pts.join(" ")
        );
        text(&mut s, left + pw + 8.0, top + 12.0 * (i + 1) as f64, "legend-label", "", cat);
    }
    s.push_str("</svg>\n");
    Some(Svg {
        name: "recall_diff.svg".into(),
        body: s,
    })
}

fn field_of(message: &str) -> String {
    message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| "<root>".to_string())
}

fn decode<T: DeserializeOwned>(value: &Value) -> Result<T> {
    serde_json::from_value(value.clone()).map_err(|e| {
        let message = e.to_string();
        Error::Render {
            field: field_of(&message),
            message,
        }
    })
}

/// Figures for one artifact, chosen by its `kind`. Kinds without a figure
/// yield nothing.
pub fn render_artifact(value: &Value) -> Result<Vec<Svg>> {
    let kind = value.get("kind").and_then(Value::as_str).ok_or_else(|| Error::Render {
        field: "kind".into(),
        message: "artifact has no kind".into(),
    })?;
    Ok(match kind {
        "recall" => recall_plots(&decode(value)?),
        "recall-diff" => recall_diff_plot(&decode(value)?).into_iter().collect(),
        "emotions" => {
            let p: EmotionProfiles = decode(value)?;
            emotion_radar(&p).into_iter().chain(emotion_heatmap(&p)).collect()
        }
        "rsm" => {
            let model = value
                .get("model_id")
                .and_then(Value::as_str)
                .ok_or_else(|| Error::Render {
                    field: "model_id".into(),
                    message: "rsm artifact has no model_id".into(),
                })?;
            let rsm: Rsm = decode(value.get("rsm").unwrap_or(&Value::Null)).map_err(|e| match e {
                Error::Render { field, message } => Error::Render {
                    field: format!("rsm.{field}"),
                    message,
                },
                other => other,
            })?;
            vec![rsm_heatmap(&rsm, model)]
        }
        "rsa-grid" => vec![model_grid_heatmap(&decode(value)?)],
        "shift" => {
            let r: ShiftReport = decode(value)?;
            let mut out: Vec<Svg> = diff_panel(&r.diffs).into_iter().collect();
            if let Some(d) = &r.delta_rho {
                out.push(delta_rho_bars(d, &format!("Δρ {} -> {}", r.model_before, r.model_after)));
            }
            out.extend(r.recall.as_ref().and_then(recall_diff_plot));
            out
        }
        _ => {
            log::info!("no figure for artifact kind {kind:?}");
            Vec::new()
        }
    })
}
