//! Static metric curves from an event stream: one CSV plus one SVG per
//! task and metric, with a line per phase.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;

use super::events::MetricEvent;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 56.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

/// `phase,step,task,metric,value` rows in event order.
pub fn events_csv(events: &[MetricEvent]) -> String {
    let mut out = String::from("phase,step,task,metric,value\n");
    for e in events {
        let _ = writeln!(out, "{},{},{},{},{}", e.phase, e.step, e.task, e.metric, e.value);
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Line chart of `series` (name, points) as an SVG document.
pub fn line_chart(title: &str, series: &[(String, Vec<(f64, f64)>)]) -> String {
    let points = series.iter().flat_map(|(_, p)| p.iter());
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points.filter(|(_, y)| y.is_finite()) {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 - x0 < 1e-12 {
        x1 = x0 + 1.0;
    }
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let sy = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="24" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    let (left, right, top, bottom) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(svg, r#"<path d="M{left} {top} V{bottom} H{right}" fill="none" stroke="black"/>"#);
    for (v, y) in [(y0, bottom), (y1, top)] {
        let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="end">{v:.4}</text>"#, left - 6.0, y + 4.0);
    }
    for (v, x) in [(x0, left), (x1, right)] {
        let _ = writeln!(svg, r#"<text x="{x}" y="{}" text-anchor="middle">{v}</text>"#, bottom + 18.0);
    }
    let _ = writeln!(svg, r#"<text x="{}" y="{}" text-anchor="middle">step</text>"#, WIDTH / 2.0, HEIGHT - 12.0);
    for (i, (name, pts)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let coords: Vec<String> = pts.iter().filter(|(_, y)| y.is_finite()).map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, coords.join(" "));
        for c in &coords {
            let (cx, cy) = c.split_once(',').unwrap_or(("0", "0"));
            let _ = writeln!(svg, r#"<circle cx="{cx}" cy="{cy}" r="2.5" fill="{color}"/>"#);
        }
        let ly = top + 16.0 * i as f64;
        let _ = writeln!(svg, r#"<text x="{}" y="{ly}" fill="{color}" text-anchor="end">{}</text>"#, right, escape(name));
    }
    svg.push_str("</svg>\n");
    svg
}

fn file_stem(s: &str) -> String {
    s.chars().map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' }).collect()
}

/// Writes `metrics.csv` and `<task>__<metric>.svg` files into `out_dir`.
pub fn write_plots(events: &[MetricEvent], out_dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    let csv = out_dir.join("metrics.csv");
    std::fs::write(&csv, events_csv(events))?;
    written.push(csv);

    let mut charts: IndexMap<(String, String), IndexMap<String, Vec<(f64, f64)>>> = IndexMap::new();
    for e in events {
        charts
            .entry((e.task.clone(), e.metric.clone()))
            .or_default()
            .entry(e.phase.clone())
            .or_default()
            .push((e.step as f64, e.value));
    }
    for ((task, metric), phases) in charts {
        let series: Vec<(String, Vec<(f64, f64)>)> = phases.into_iter().collect();
        let path = out_dir.join(format!("{}__{}.svg", file_stem(&task), file_stem(&metric)));
        std::fs::write(&path, line_chart(&format!("{task}: {metric}"), &series))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_chart_per_task_metric() {
        let events = vec![
            MetricEvent::new("intermediate", 10, "a", "accuracy", 0.5),
            MetricEvent::new("intermediate", 20, "a", "accuracy", 0.7),
            MetricEvent::new("target:a", 10, "a", "accuracy", 0.6),
            MetricEvent::new("intermediate", 10, "aggregate", "primary_mean", 0.5),
        ];
        let dir = tempfile::tempdir().unwrap();
        let files = write_plots(&events, dir.path()).unwrap();
        assert_eq!(files.len(), 3);
        let csv = std::fs::read_to_string(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(csv.lines().count(), 5);
        let svg = std::fs::read_to_string(dir.path().join("a__accuracy.svg")).unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
    }
}
