//! Learning-curve figures as standalone SVG: mean line with a ±1 std band per run group.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::{aggregate, CurveMetric, CurvePoint, RunMetrics};
use crate::error::{Error, Result};

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 440.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 190.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<CurvePoint>,
}

/// Reads every metrics file and writes one figure per environment and metric into
/// `out_dir` (`<env>-return.svg`, plus `<env>-success.svg` for sparse envs). Runs that
/// share a group name are averaged. Returns the written paths.
pub fn emit_plots(metrics_files: &[PathBuf], out_dir: &Path) -> Result<Vec<PathBuf>> {
    if metrics_files.is_empty() {
        return Err(Error::Config("plot needs at least one metrics file".into()));
    }
    let mut runs = Vec::new();
    for path in metrics_files {
        let m = RunMetrics::read_csv(path)?;
        runs.push((m.config().group_name(), m));
    }
    fs::create_dir_all(out_dir)?;
    let mut envs: Vec<_> = runs.iter().map(|(_, m)| m.config().env).collect();
    envs.sort_by_key(|e| e.to_string());
    envs.dedup();

    let mut written = Vec::new();
    for env in envs {
        let members: Vec<(String, RunMetrics)> = runs.iter().filter(|(_, m)| m.config().env == env).cloned().collect();
        let groups = aggregate(&members);
        let metrics: &[CurveMetric] = if env.is_sparse() {
            &[CurveMetric::Return, CurveMetric::Success]
        } else {
            &[CurveMetric::Return]
        };
        for &metric in metrics {
            let series: Vec<Series> = groups
                .iter()
                .filter_map(|g| {
                    g.metric(metric).map(|s| Series {
                        label: format!("{} (n={})", g.group, g.seeds.len()),
                        points: s.curve.clone(),
                    })
                })
                .collect();
            let suffix = match metric {
                CurveMetric::Return => "return",
                CurveMetric::Success => "success",
            };
            let path = out_dir.join(format!("{env}-{suffix}.svg"));
            fs::write(&path, render_svg(&env.to_string(), "env steps", metric.label(), &series))?;
            written.push(path);
        }
    }
    Ok(written)
}

/// A line chart with one mean line and shaded ±1 std band per series.
pub fn render_svg(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let pts = || series.iter().flat_map(|s| s.points.iter());
    let x_hi = pts().map(|p| p.env_steps).fold(f64::NEG_INFINITY, f64::max);
    let y_lo = pts().map(|p| p.mean - p.std).fold(f64::INFINITY, f64::min);
    let y_hi = pts().map(|p| p.mean + p.std).fold(f64::NEG_INFINITY, f64::max);
    let (x_lo, x_hi) = if x_hi.is_finite() { (0.0, x_hi.max(1.0)) } else { (0.0, 1.0) };
    let (y_lo, y_hi) = match (y_lo.is_finite(), y_hi.is_finite()) {
        (true, true) if y_hi > y_lo => (y_lo, y_hi),
        (true, true) => (y_lo - 0.5, y_hi + 0.5),
        _ => (0.0, 1.0),
    };
    let x_ticks = nice_ticks(x_lo, x_hi, 6);
    let y_ticks = nice_ticks(y_lo, y_hi, 6);
    let (x_lo, x_hi) = (x_ticks[0].min(x_lo), x_ticks.last().unwrap().max(x_hi));
    let (y_lo, y_hi) = (y_ticks[0].min(y_lo), y_ticks.last().unwrap().max(y_hi));

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (1.0 - (y - y_lo) / (y_hi - y_lo)) * plot_h;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    );
    for &t in &x_ticks {
        let x = sx(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#e5e5e5"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            MARGIN_TOP,
            MARGIN_TOP + plot_h,
            MARGIN_TOP + plot_h + 16.0,
            fmt_tick(t)
        );
    }
    for &t in &y_ticks {
        let y = sy(t);
        let _ = writeln!(
            svg,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="#e5e5e5"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w,
            MARGIN_LEFT - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        svg,
        r#"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        svg,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        svg,
        r#"<text transform="translate(18 {:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !s.points.is_empty() {
            let upper = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.env_steps), sy(p.mean + p.std)));
            let lower = s.points.iter().rev().map(|p| format!("{:.2},{:.2}", sx(p.env_steps), sy(p.mean - p.std)));
            let band: Vec<String> = upper.chain(lower).collect();
            let _ = writeln!(svg, r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#, band.join(" "));
            let line: Vec<String> = s.points.iter().map(|p| format!("{:.2},{:.2}", sx(p.env_steps), sy(p.mean))).collect();
            let _ = writeln!(svg, r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#, line.join(" "));
        }
        let ly = MARGIN_TOP + 10.0 + 20.0 * i as f64;
        let lx = MARGIN_LEFT + plot_w + 12.0;
        let _ = writeln!(
            svg,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 18.0,
            lx + 24.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Round tick positions (1, 2 or 5 times a power of ten) covering `[lo, hi]`.
fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let raw = (hi - lo) / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0].iter().map(|m| m * mag).find(|s| *s >= raw).unwrap_or(10.0 * mag);
    let first = (lo / step).floor() as i64;
    let last = (hi / step).ceil() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    if v.abs() >= 10_000.0 {
        format!("{}k", v / 1000.0)
    } else if v.fract() == 0.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(x: f64, m: f64, s: f64) -> CurvePoint {
        CurvePoint {
            env_steps: x,
            mean: m,
            std: s,
        }
    }

    #[test]
    fn one_line_and_band_per_series() {
        let series = vec![
            Series {
                label: "a<b".into(),
                points: vec![pt(0.0, 0.0, 0.1), pt(1000.0, 0.5, 0.2)],
            },
            Series {
                label: "c".into(),
                points: vec![pt(0.0, 0.2, 0.0)],
            },
        ];
        let svg = render_svg("t", "env steps", "success rate", &series);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("<polygon").count(), 2);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn empty_series_still_renders() {
        let svg = render_svg("t", "x", "y", &[]);
        assert!(svg.starts_with("<svg"));
    }

    #[test]
    fn ticks_cover_range() {
        let t = nice_ticks(-0.3, 1.0, 6);
        assert!(t[0] <= -0.3 && *t.last().unwrap() >= 1.0);
        assert_eq!(nice_ticks(0.0, 150_000.0, 6), vec![0.0, 50_000.0, 100_000.0, 150_000.0]);
    }

    #[test]
    fn malformed_input_names_the_file() {
        let dir = std::env::temp_dir().join(format!("sipp-plot-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let bad = dir.join("broken-metrics.csv");
        fs::write(&bad, "# {not json}\n").unwrap();
        let err = emit_plots(&[bad], &dir).unwrap_err();
        assert_eq!(err.category(), "format");
        assert!(err.to_string().contains("broken-metrics.csv"), "{err}");
        fs::remove_dir_all(dir).unwrap();
    }
}
