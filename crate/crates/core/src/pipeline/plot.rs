use std::fmt::Write;
use std::path::{Path, PathBuf};

use super::evaluate::{p_clause, ClusterReport};
use crate::error::{Error, Result};
use crate::survival::HORIZON_MONTHS;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 24.0;
const BOTTOM: f64 = 56.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"];

fn fmt(v: f64) -> String {
    format!("{v:.2}")
}

/// Overlaid Kaplan–Meier step curves with a legend and the log-rank p.
pub fn km_svg(report: &ClusterReport) -> String {
    let t_max = report
        .km
        .iter()
        .flat_map(|c| c.curve.steps.iter().map(|s| s.time))
        .fold(HORIZON_MONTHS, f64::max);
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |t: f64| LEFT + t / t_max * plot_w;
    let y = |s: f64| TOP + (1.0 - s) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"  <rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"  <g stroke="black" fill="none"><line x1="{l}" y1="{b}" x2="{r}" y2="{b}"/><line x1="{l}" y1="{t}" x2="{l}" y2="{b}"/></g>"#,
        l = fmt(LEFT),
        r = fmt(LEFT + plot_w),
        t = fmt(TOP),
        b = fmt(TOP + plot_h)
    );
    for k in 0..=4 {
        let s = k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"  <text x="{}" y="{}" text-anchor="end">{s:.2}</text>"#,
            fmt(LEFT - 6.0),
            fmt(y(s) + 4.0)
        );
    }
    let ticks = (t_max / 6.0).floor() as usize;
    for k in 0..=ticks {
        let t = k as f64 * 6.0;
        let _ = writeln!(
            svg,
            r#"  <text x="{}" y="{}" text-anchor="middle">{t}</text>"#,
            fmt(x(t)),
            fmt(TOP + plot_h + 16.0)
        );
    }
    let _ = writeln!(
        svg,
        r#"  <text x="{}" y="{}" text-anchor="middle">Months</text>"#,
        fmt(LEFT + plot_w / 2.0),
        fmt(HEIGHT - 12.0)
    );
    let _ = writeln!(
        svg,
        r#"  <text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">Survival probability</text>"#,
        fmt(TOP + plot_h / 2.0),
        fmt(TOP + plot_h / 2.0)
    );

    for (i, c) in report.km.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = format!("M {} {}", fmt(x(0.0)), fmt(y(1.0)));
        for s in &c.curve.steps {
            let _ = write!(d, " H {} V {}", fmt(x(s.time)), fmt(y(s.survival)));
        }
        let end = c.curve.steps.last().map_or(0.0, |s| s.time).max(t_max);
        let _ = write!(d, " H {}", fmt(x(end)));
        let _ = writeln!(
            svg,
            r#"  <path d="{d}" fill="none" stroke="{color}" stroke-width="2" data-cluster="{}"/>"#,
            c.label
        );
        let ly = TOP + 16.0 + 20.0 * i as f64;
        let lx = LEFT + plot_w + 16.0;
        let _ = writeln!(
            svg,
            r#"  <line x1="{}" y1="{}" x2="{}" y2="{}" stroke="{color}" stroke-width="2"/>"#,
            fmt(lx),
            fmt(ly - 4.0),
            fmt(lx + 20.0),
            fmt(ly - 4.0)
        );
        let _ = writeln!(
            svg,
            r#"  <text x="{}" y="{}">Cluster {} (n={})</text>"#,
            fmt(lx + 26.0),
            fmt(ly),
            c.label,
            c.size
        );
    }
    let note = match &report.log_rank {
        Some(lr) => format!("log-rank {}", p_clause(lr.p)),
        None => "single cluster".to_string(),
    };
    let _ = writeln!(
        svg,
        r#"  <text x="{}" y="{}">{note}</text>"#,
        fmt(LEFT + plot_w + 16.0),
        fmt(TOP + 36.0 + 20.0 * report.km.len() as f64)
    );
    svg.push_str("</svg>\n");
    svg
}

/// Writes `km_cluster_<label>.csv` per cluster and `km.svg`.
pub fn emit_km_artifacts(report: &ClusterReport, out_dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    if report.km.is_empty() {
        return Err(Error::InvalidArgument("report has no Kaplan-Meier curves".into()));
    }
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for c in &report.km {
        let path = dir.join(format!("km_cluster_{}.csv", c.label));
        std::fs::write(&path, c.curve.to_csv_string())?;
        written.push(path);
    }
    let path = dir.join("km.svg");
    std::fs::write(&path, km_svg(report))?;
    written.push(path);
    Ok(written)
}
