use std::fmt::Write as _;

use serde::Serialize;

use super::ReplicabilityReport;
use crate::error::{Error, Result};

/// One cell of a tolerance sweep. `r_value` is `None` for a learner that
/// draws its own tolerance on every run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub r_value: Option<f64>,
    pub report: ReplicabilityReport,
}

/// Comma-separated table with one line per row. `distinct_traces` is empty
/// for learners that do not record traces.
pub fn sweep_csv(rows: &[SweepRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "r_value",
        "runs",
        "distinct_policies",
        "distinct_traces",
        "k50",
        "k90",
        "top1",
    ])?;
    for row in rows {
        let rep = &row.report;
        w.write_record([
            row.r_value.map(|r| r.to_string()).unwrap_or_default(),
            rep.completed.to_string(),
            rep.distinct_policies.to_string(),
            rep.distinct_traces.map(|d| d.to_string()).unwrap_or_default(),
            rep.k(0.5).to_string(),
            rep.k(0.9).to_string(),
            format!("{:.4}", rep.top1_coverage),
        ])?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::Format(format!("csv flush: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::Format(e.to_string()))
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;

/// Line chart of distinct policies against `r`, with distinct traces as a
/// dashed second series when present.
pub fn render_svg(rows: &[SweepRow], title: &str) -> String {
    let xs: Vec<f64> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| r.r_value.unwrap_or(i as f64))
        .collect();
    let policies: Vec<f64> = rows.iter().map(|r| r.report.distinct_policies as f64).collect();
    let traces: Option<Vec<f64>> = rows
        .iter()
        .map(|r| r.report.distinct_traces.map(|d| d as f64))
        .collect();
    let (x_lo, x_hi) = bounds(&xs);
    let y_hi = policies
        .iter()
        .chain(traces.iter().flatten())
        .fold(1.0f64, |m, &v| m.max(v));
    let sx = |x: f64| MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - y / y_hi * (HEIGHT - 2.0 * MARGIN);

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, y0, x1, y1) = (MARGIN, HEIGHT - MARGIN, WIDTH - MARGIN, MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{x0} {y1} L{x0} {y0} L{x1} {y0}" stroke="black" fill="none"/>"#
    );
    for i in 0..=4 {
        let v = y_hi * i as f64 / 4.0;
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            sy(v) + 4.0,
            v.round()
        );
    }
    for &x in &xs {
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#,
            sx(x),
            y0 + 18.0,
            x
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">r</text>"#,
        WIDTH / 2.0,
        HEIGHT - 12.0
    );
    series(&mut out, &xs, &policies, "steelblue", None, &sx, &sy);
    if let Some(t) = &traces {
        series(&mut out, &xs, t, "darkorange", Some("6 4"), &sx, &sy);
    }
    legend(&mut out, "distinct policies", "steelblue", None, 0);
    if traces.is_some() {
        legend(&mut out, "distinct traces", "darkorange", Some("6 4"), 1);
    }
    out.push_str("</svg>\n");
    out
}

fn bounds(xs: &[f64]) -> (f64, f64) {
    let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || hi <= lo {
        (lo.min(0.0).min(hi), lo.max(hi) + 1.0)
    } else {
        (lo, hi)
    }
}

fn series(
    out: &mut String,
    xs: &[f64],
    ys: &[f64],
    color: &str,
    dash: Option<&str>,
    sx: &dyn Fn(f64) -> f64,
    sy: &dyn Fn(f64) -> f64,
) {
    let points: Vec<String> = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| format!("{:.1},{:.1}", sx(x), sy(y)))
        .collect();
    let dash = dash.map(|d| format!(r#" stroke-dasharray="{d}""#)).unwrap_or_default();
    let _ = writeln!(
        out,
        r#"<polyline points="{}" stroke="{color}" stroke-width="2" fill="none"{dash}/>"#,
        points.join(" ")
    );
    for (&x, &y) in xs.iter().zip(ys) {
        let _ = writeln!(
            out,
            r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{color}"/>"#,
            sx(x),
            sy(y)
        );
    }
}

fn legend(out: &mut String, label: &str, color: &str, dash: Option<&str>, slot: usize) {
    let y = MARGIN + 14.0 * slot as f64;
    let x = WIDTH - MARGIN - 150.0;
    let dash = dash.map(|d| format!(r#" stroke-dasharray="{d}""#)).unwrap_or_default();
    let _ = writeln!(
        out,
        r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"{dash}/><text x="{}" y="{}">{label}</text>"#,
        x + 24.0,
        x + 30.0,
        y + 4.0
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
