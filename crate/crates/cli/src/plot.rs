//! Static SVG line charts of result rows.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use freshsched_core::{Metric, PolicySpec, Threshold};
use thiserror::Error;

use crate::config::PlotAxis;
use crate::experiment::{ResultRow, Source};

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("no rows with a value for the requested axis and metrics")]
    NoData,
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

const WIDTH: f64 = 780.0;
const PANEL_HEIGHT: f64 = 300.0;
const LEFT: f64 = 70.0;
const PLOT_WIDTH: f64 = 470.0;
const TOP: f64 = 34.0;
const PLOT_HEIGHT: f64 = 220.0;
const LEGEND_X: f64 = LEFT + PLOT_WIDTH + 20.0;

const PALETTE: [&str; 10] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

fn unit(metric: Metric) -> &'static str {
    match metric {
        Metric::Nq | Metric::Nu => "jobs",
        _ => "time units",
    }
}

fn axis_label(axis: PlotAxis) -> String {
    match axis {
        PlotAxis::Rate(r) => format!("{} (1 / time unit)", r.name()),
        PlotAxis::RhoU => "rho_u = lambda_u / mu_u".into(),
        PlotAxis::K => "threshold k".into(),
        PlotAxis::M => "update threshold M".into(),
        PlotAxis::N => "query threshold N".into(),
    }
}

fn finite(t: Threshold) -> Option<f64> {
    t.as_finite().map(f64::from)
}

fn x_of(row: &ResultRow, axis: PlotAxis) -> Option<f64> {
    match (axis, row.policy) {
        (PlotAxis::Rate(r), _) => Some(r.of(&row.params)),
        (PlotAxis::RhoU, _) => Some(row.params.rho_u()),
        (PlotAxis::K, PolicySpec::QueryK(k) | PolicySpec::UpdateK(k)) => finite(k),
        (PlotAxis::M, PolicySpec::JointMN { update, .. }) => finite(update),
        (PlotAxis::N, PolicySpec::JointMN { query, .. }) => finite(query),
        _ => None,
    }
}

/// Series name with the plotted threshold left symbolic.
fn series_label(policy: &PolicySpec, axis: PlotAxis) -> String {
    match (axis, policy) {
        (PlotAxis::K, PolicySpec::QueryK(_)) => "Query-k".into(),
        (PlotAxis::K, PolicySpec::UpdateK(_)) => "Update-k".into(),
        (PlotAxis::M, PolicySpec::JointMN { query, .. }) => format!("Joint-(M,{query})"),
        (PlotAxis::N, PolicySpec::JointMN { update, .. }) => format!("Joint-({update},N)"),
        _ => policy.to_string(),
    }
}

struct Series {
    label: String,
    source: Source,
    /// `(x, mean, ci half-width)` sorted by x.
    points: Vec<(f64, f64, Option<f64>)>,
}

fn collect(rows: &[ResultRow], axis: PlotAxis, metric: Metric) -> Vec<Series> {
    let mut series: Vec<Series> = Vec::new();
    for row in rows.iter().filter(|r| r.metric == metric && r.status.is_ok()) {
        let (Some(x), Some(y)) = (x_of(row, axis), row.mean) else {
            continue;
        };
        let label = series_label(&row.policy, axis);
        let hw = if row.source == Source::Sim { row.ci_half_width } else { None };
        match series.iter_mut().find(|s| s.label == label && s.source == row.source) {
            Some(s) => s.points.push((x, y, hw)),
            None => series.push(Series {
                label,
                source: row.source,
                points: vec![(x, y, hw)],
            }),
        }
    }
    for s in &mut series {
        s.points.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    series
}

/// Round tick spacing giving about five intervals over `span`.
fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let f = raw / mag;
    let nice = if f < 1.5 {
        1.0
    } else if f < 3.0 {
        2.0
    } else if f < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn padded_range(lo: f64, hi: f64) -> (f64, f64) {
    if hi - lo > 1e-12 * hi.abs().max(1.0) {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = 0.5 * lo.abs().max(1.0);
        (lo - pad, hi + pad)
    }
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = tick_step(hi - lo);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(if t.abs() < 1e-12 * step { 0.0 } else { t });
        t += step;
    }
    out
}

fn tick_text(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" { "0".into() } else { s.into() }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn panel(svg: &mut String, top: f64, metric: Metric, axis: PlotAxis, series: &[Series], colors: &mut Vec<String>) {
    let all = series.iter().flat_map(|s| s.points.iter());
    let (mut x_lo, mut x_hi, mut y_lo, mut y_hi) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y, hw) in all {
        let h = hw.unwrap_or(0.0);
        x_lo = x_lo.min(x);
        x_hi = x_hi.max(x);
        y_lo = y_lo.min(y - h);
        y_hi = y_hi.max(y + h);
    }
    let (x_lo, x_hi) = padded_range(x_lo, x_hi);
    let (y_lo, y_hi) = padded_range(y_lo, y_hi);
    let sx = |x: f64| LEFT + (x - x_lo) / (x_hi - x_lo) * PLOT_WIDTH;
    let sy = |y: f64| top + PLOT_HEIGHT - (y - y_lo) / (y_hi - y_lo) * PLOT_HEIGHT;

    let _ = writeln!(
        svg,
        r##"<rect x="{LEFT}" y="{top}" width="{PLOT_WIDTH}" height="{PLOT_HEIGHT}" fill="none" stroke="#333"/>"##
    );
    for t in ticks(x_lo, x_hi) {
        let x = sx(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.2}" y1="{b:.2}" x2="{x:.2}" y2="{b2:.2}" stroke="#333"/><text x="{x:.2}" y="{ty:.2}" text-anchor="middle">{}</text>"##,
            tick_text(t),
            b = top + PLOT_HEIGHT,
            b2 = top + PLOT_HEIGHT + 5.0,
            ty = top + PLOT_HEIGHT + 18.0,
        );
    }
    for t in ticks(y_lo, y_hi) {
        let y = sy(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{l2:.2}" y1="{y:.2}" x2="{LEFT}" y2="{y:.2}" stroke="#333"/><line x1="{LEFT}" y1="{y:.2}" x2="{r:.2}" y2="{y:.2}" stroke="#eee"/><text x="{tx:.2}" y="{yt:.2}" text-anchor="end">{}</text>"##,
            tick_text(t),
            l2 = LEFT - 5.0,
            r = LEFT + PLOT_WIDTH,
            tx = LEFT - 8.0,
            yt = y + 4.0,
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{cx:.2}" y="{y:.2}" text-anchor="middle">{}</text>"#,
        escape(&axis_label(axis)),
        cx = LEFT + PLOT_WIDTH / 2.0,
        y = top + PLOT_HEIGHT + 38.0,
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate({x:.2},{y:.2}) rotate(-90)" text-anchor="middle">{} ({})</text>"#,
        metric.name(),
        unit(metric),
        x = 18.0,
        y = top + PLOT_HEIGHT / 2.0,
    );

    for (i, s) in series.iter().enumerate() {
        let color = match colors.iter().position(|c| *c == s.label) {
            Some(j) => PALETTE[j % PALETTE.len()],
            None => {
                colors.push(s.label.clone());
                PALETTE[(colors.len() - 1) % PALETTE.len()]
            }
        };
        let dash = match s.source {
            Source::Ctmc => r#" stroke-dasharray="6 3""#,
            Source::Analytic => r#" stroke-dasharray="2 2""#,
            Source::Sim => "",
        };
        let path: Vec<String> = s.points.iter().map(|&(x, y, _)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        if path.len() > 1 {
            let _ = writeln!(
                svg,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.6"{dash}/>"#,
                path.join(" ")
            );
        }
        for &(x, y, hw) in &s.points {
            let (px, py) = (sx(x), sy(y));
            if let Some(h) = hw.filter(|h| *h > 0.0) {
                let (y1, y2) = (sy(y + h), sy(y - h));
                let _ = writeln!(
                    svg,
                    r#"<path d="M{px:.2},{y1:.2}V{y2:.2}M{a:.2},{y1:.2}H{b:.2}M{a:.2},{y2:.2}H{b:.2}" stroke="{color}"/>"#,
                    a = px - 3.0,
                    b = px + 3.0,
                );
            }
            let _ = writeln!(svg, r#"<circle cx="{px:.2}" cy="{py:.2}" r="2.5" fill="{color}"/>"#);
        }
        let ly = top + 12.0 + 16.0 * i as f64;
        let _ = writeln!(
            svg,
            r#"<line x1="{LEGEND_X}" y1="{ly:.2}" x2="{x2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"{dash}/><text x="{tx}" y="{ty:.2}">{} [{}]</text>"#,
            escape(&s.label),
            s.source,
            x2 = LEGEND_X + 22.0,
            tx = LEGEND_X + 28.0,
            ty = ly + 4.0,
        );
    }
}

/// Renders one panel per metric that has data.
pub fn render_svg(rows: &[ResultRow], axis: PlotAxis, metrics: &[Metric]) -> Result<String, PlotError> {
    let panels: Vec<(Metric, Vec<Series>)> = metrics
        .iter()
        .map(|&m| (m, collect(rows, axis, m)))
        .filter(|(_, s)| !s.is_empty())
        .collect();
    if panels.is_empty() {
        return Err(PlotError::NoData);
    }
    let height = PANEL_HEIGHT * panels.len() as f64;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let mut colors = Vec::new();
    for (i, (metric, series)) in panels.iter().enumerate() {
        let top = TOP + PANEL_HEIGHT * i as f64;
        let _ = writeln!(
            svg,
            r#"<text x="{LEFT}" y="{y:.2}" font-size="13">{} vs {}</text>"#,
            metric.name(),
            axis.name(),
            y = top - 10.0,
        );
        panel(&mut svg, top, *metric, axis, series, &mut colors);
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

pub fn emit_plot(rows: &[ResultRow], axis: PlotAxis, metrics: &[Metric], path: &Path) -> Result<(), PlotError> {
    let svg = render_svg(rows, axis, metrics)?;
    let io = |source| PlotError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io)?;
    }
    std::fs::write(path, svg).map_err(io)
}
