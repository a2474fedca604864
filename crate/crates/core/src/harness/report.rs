use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::planner::PolicyKind;

/// One evaluation episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub method: PolicyKind,
    pub pair_id: String,
    pub episode: usize,
    pub iterations: usize,
    pub travel_m: f64,
    pub final_rank: usize,
    pub terminated: bool,
}

pub const REPORT_COLUMNS: [&str; 7] = [
    "method",
    "pair_id",
    "episode",
    "iterations",
    "travel_m",
    "final_rank",
    "terminated",
];

pub fn write_report(rows: &[ReportRow]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(REPORT_COLUMNS).expect("in-memory csv");
    }
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    w.into_inner().expect("in-memory csv")
}

/// Parse a report; errors carry the 1-based line number.
pub fn parse_report(bytes: &[u8]) -> Result<Vec<ReportRow>> {
    let mut rd = csv::Reader::from_reader(bytes);
    let header_line = |e: &csv::Error| e.position().map_or(1, |p| p.line());
    let headers = rd.headers().map_err(|e| Error::Report {
        line: header_line(&e),
        reason: e.to_string(),
    })?;
    if headers.iter().ne(REPORT_COLUMNS) {
        return Err(Error::Report {
            line: 1,
            reason: format!("expected columns {}", REPORT_COLUMNS.join(",")),
        });
    }
    let mut rows = Vec::new();
    for rec in rd.deserialize::<ReportRow>() {
        let row = rec.map_err(|e| Error::Report {
            line: header_line(&e),
            reason: e.to_string(),
        })?;
        if !(row.travel_m.is_finite() && row.travel_m >= 0.0) || row.final_rank == 0 {
            return Err(Error::Report {
                line: rows.len() as u64 + 2,
                reason: "travel_m must be finite and >= 0, final_rank >= 1".into(),
            });
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Report {
            line: 2,
            reason: "report has no data rows".into(),
        });
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolicySummary {
    pub method: PolicyKind,
    pub episodes: usize,
    pub mean_iterations: f64,
    pub mean_travel_m: f64,
    pub mean_rank: f64,
    pub termination_rate: f64,
}

/// Per-method means over all rows, in `PolicyKind` order.
pub fn summarize(rows: &[ReportRow]) -> Vec<PolicySummary> {
    PolicyKind::ALL
        .iter()
        .filter_map(|&method| {
            let sel: Vec<&ReportRow> = rows.iter().filter(|r| r.method == method).collect();
            if sel.is_empty() {
                return None;
            }
            let n = sel.len() as f64;
            let mean = |f: &dyn Fn(&ReportRow) -> f64| sel.iter().map(|r| f(r)).sum::<f64>() / n;
            Some(PolicySummary {
                method,
                episodes: sel.len(),
                mean_iterations: mean(&|r| r.iterations as f64),
                mean_travel_m: mean(&|r| r.travel_m),
                mean_rank: mean(&|r| r.final_rank as f64),
                termination_rate: mean(&|r| if r.terminated { 1.0 } else { 0.0 }),
            })
        })
        .collect()
}

pub fn format_summary(summary: &[PolicySummary]) -> String {
    let mut out = format!(
        "{:<22} {:>8} {:>10} {:>10} {:>9} {:>10}\n",
        "method", "episodes", "iterations", "travel_m", "rank", "terminated"
    );
    for s in summary {
        let _ = writeln!(
            out,
            "{:<22} {:>8} {:>10.3} {:>10.3} {:>9.3} {:>10.3}",
            s.method.as_str(),
            s.episodes,
            s.mean_iterations,
            s.mean_travel_m,
            s.mean_rank,
            s.termination_rate
        );
    }
    out
}

const SVG_W: f64 = 640.0;
const SVG_H: f64 = 480.0;
const PAD_L: f64 = 80.0;
const PAD_R: f64 = 30.0;
const PAD_T: f64 = 30.0;
const PAD_B: f64 = 60.0;
const COLORS: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#ff7f0e"];

fn nice_max(v: f64) -> f64 {
    if v <= 0.0 {
        return 1.0;
    }
    let mag = 10f64.powf(v.log10().floor());
    for m in [1.0, 2.0, 2.5, 5.0, 10.0] {
        if m * mag >= v {
            return m * mag;
        }
    }
    10.0 * mag
}

/// Cost-versus-performance scatter: one point per method, mean travel on the
/// vertical axis and mean ground-truth rank on the horizontal one.
pub fn render_plot(summary: &[PolicySummary]) -> String {
    let x_max = nice_max(summary.iter().map(|s| s.mean_rank).fold(1.0, f64::max));
    let y_max = nice_max(summary.iter().map(|s| s.mean_travel_m).fold(0.0, f64::max));
    let plot_w = SVG_W - PAD_L - PAD_R;
    let plot_h = SVG_H - PAD_T - PAD_B;
    let sx = |x: f64| PAD_L + x / x_max * plot_w;
    let sy = |y: f64| PAD_T + plot_h - y / y_max * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SVG_W}" height="{SVG_H}" viewBox="0 0 {SVG_W} {SVG_H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{PAD_L}" y="{PAD_T}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let f = i as f64 / 5.0;
        let (xv, yv) = (f * x_max, f * y_max);
        let (x, y) = (sx(xv), sy(yv));
        let bottom = PAD_T + plot_h;
        let _ = writeln!(
            s,
            r#"<line x1="{x:.1}" y1="{bottom}" x2="{x:.1}" y2="{:.1}" stroke="black"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            bottom + 5.0,
            bottom + 20.0,
            trim_number(xv)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{PAD_L}" y2="{y:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            PAD_L - 5.0,
            PAD_L - 8.0,
            y + 4.0,
            trim_number(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">ground-truth rank</text>"#,
        PAD_L + plot_w / 2.0,
        SVG_H - 15.0
    );
    let (lx, ly) = (20.0, PAD_T + plot_h / 2.0);
    let _ = writeln!(
        s,
        r#"<text x="{lx}" y="{ly:.1}" text-anchor="middle" transform="rotate(-90 {lx} {ly:.1})">travel distance [m]</text>"#
    );
    for (i, p) in summary.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let (x, y) = (sx(p.mean_rank), sy(p.mean_travel_m));
        let _ = writeln!(
            s,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="5" fill="{color}"/><text x="{:.2}" y="{:.2}" fill="{color}">{}</text>"#,
            x + 8.0,
            y - 6.0,
            p.method.label()
        );
    }
    s.push_str("</svg>\n");
    s
}

fn trim_number(v: f64) -> String {
    let t = format!("{v:.2}");
    t.trim_end_matches('0').trim_end_matches('.').to_string()
}
