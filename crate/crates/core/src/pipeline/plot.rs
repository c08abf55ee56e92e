//! Actual-versus-predicted overlays written as SVG.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::error::Result;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 55.0;

fn nice_step(range: f64, target_ticks: usize) -> f64 {
    let raw = range / target_ticks.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let m = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    m * mag
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn polyline(values: &[f64], x: impl Fn(usize) -> f64, y: impl Fn(f64) -> f64) -> String {
    let mut pts = String::new();
    for (i, &v) in values.iter().enumerate() {
        if !pts.is_empty() {
            pts.push(' ');
        }
        let _ = write!(pts, "{:.2},{:.2}", x(i), y(v));
    }
    pts
}

/// Renders one overlay of `actual` and `predicted` (equal lengths) against
/// the hour offset from the window start.
pub fn render_overlay(title: &str, model: &str, actual: &[f64], predicted: &[f64]) -> String {
    let n = actual.len().min(predicted.len());
    let (actual, predicted) = (&actual[..n], &predicted[..n]);
    let mut lo = actual.iter().chain(predicted).copied().fold(f64::INFINITY, f64::min);
    let mut hi = actual.iter().chain(predicted).copied().fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() || !hi.is_finite() {
        lo = 0.0;
        hi = 1.0;
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let step = nice_step(hi - lo, 5);
    lo = (lo / step).floor() * step;
    hi = (hi / step).ceil() * step;

    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let span = (n.max(2) - 1) as f64;
    let x = |i: usize| LEFT + plot_w * i as f64 / span;
    let y = |v: f64| TOP + plot_h * (1.0 - (v - lo) / (hi - lo));

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );

    // horizontal grid and y ticks
    let mut v = lo;
    while v <= hi + step * 1e-6 {
        let yy = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{LEFT}" y1="{yy:.2}" x2="{:.2}" y2="{yy:.2}" stroke="#e0e0e0"/>"##,
            WIDTH - RIGHT
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            yy + 4.0,
            format_tick(v, step)
        );
        v += step;
    }
    // x ticks every 24 hours, or every 3 hours for short windows
    let x_step = if n > 48 { 24 } else { 3 };
    for i in (0..n).step_by(x_step) {
        let xx = x(i);
        let _ = writeln!(
            s,
            r#"<line x1="{xx:.2}" y1="{:.2}" x2="{xx:.2}" y2="{:.2}" stroke="black"/>"#,
            TOP + plot_h,
            TOP + plot_h + 5.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{xx:.2}" y="{:.2}" text-anchor="middle">{i}</text>"#,
            TOP + plot_h + 18.0
        );
    }
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{plot_w}" height="{plot_h}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">Hours</text>"#,
        LEFT + plot_w / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">Load (kW)</text>"#,
        TOP + plot_h / 2.0,
        TOP + plot_h / 2.0
    );
    let _ = writeln!(
        s,
        r##"<polyline fill="none" stroke="#1f77b4" stroke-width="1.5" points="{}"/>"##,
        polyline(actual, x, y)
    );
    let _ = writeln!(
        s,
        r##"<polyline fill="none" stroke="#d62728" stroke-width="1.5" stroke-dasharray="5,3" points="{}"/>"##,
        polyline(predicted, x, y)
    );
    let lx = LEFT + 12.0;
    let _ = writeln!(
        s,
        r##"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="#1f77b4" stroke-width="2"/><text x="{}" y="{}">Actual</text>"##,
        TOP + 14.0,
        lx + 24.0,
        TOP + 14.0,
        lx + 30.0,
        TOP + 18.0
    );
    let _ = writeln!(
        s,
        r##"<line x1="{lx}" y1="{}" x2="{}" y2="{}" stroke="#d62728" stroke-width="2" stroke-dasharray="5,3"/><text x="{}" y="{}">{}</text>"##,
        TOP + 30.0,
        lx + 24.0,
        TOP + 30.0,
        lx + 30.0,
        TOP + 34.0,
        escape(model)
    );
    s.push_str("</svg>\n");
    s
}

fn format_tick(v: f64, step: f64) -> String {
    let decimals = if step >= 1.0 { 0 } else { (-step.log10().floor()) as usize };
    format!("{v:.decimals$}")
}

/// One named overlay window.
#[derive(Clone, Copy, Debug)]
pub struct PlotWindow<'a> {
    pub label: &'a str,
    pub hours: usize,
}

/// Writes one file per window comparing `predicted` with `actual` from the
/// start of the test period. Windows longer than the data are clipped with
/// a warning; nothing is written for an empty prediction.
pub fn export_plots(
    dir: &Path,
    scenario: &str,
    model: &str,
    actual: &[f64],
    predicted: &[f64],
    windows: &[PlotWindow<'_>],
) -> Result<Vec<PathBuf>> {
    if predicted.is_empty() || actual.is_empty() {
        log::warn!("{scenario}/{model}: no predictions, plot skipped");
        return Ok(Vec::new());
    }
    std::fs::create_dir_all(dir)?;
    let available = actual.len().min(predicted.len());
    let mut written = Vec::new();
    for w in windows {
        let hours = if w.hours > available {
            log::warn!(
                "{scenario}/{model}: {} window of {} hours clipped to {available}",
                w.label,
                w.hours
            );
            available
        } else {
            w.hours
        };
        let title = format!("24-h-ahead load, {scenario} ({} window)", w.label);
        let svg = render_overlay(&title, model, &actual[..hours], &predicted[..hours]);
        let path = dir.join(format!("{model}_{}.svg", w.label));
        std::fs::write(&path, svg)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn count_points(svg: &str) -> Vec<usize> {
        svg.lines()
            .filter(|l| l.starts_with("<polyline"))
            .map(|l| {
                let pts = l.split("points=\"").nth(1).unwrap().trim_end_matches("\"/>");
                pts.split(' ').count()
            })
            .collect()
    }

    #[test]
    fn windows_have_expected_point_counts() {
        let dir = tempfile::tempdir().unwrap();
        let actual: Vec<f64> = (0..500).map(|i| (i as f64 / 5.0).sin() + 1.0).collect();
        let windows = [
            PlotWindow {
                label: "two_week",
                hours: 336,
            },
            PlotWindow {
                label: "one_day",
                hours: 24,
            },
        ];
        let files = export_plots(dir.path(), "full", "gbt", &actual, &actual, &windows).unwrap();
        assert_eq!(files.len(), 2);
        let long = std::fs::read_to_string(&files[0]).unwrap();
        assert_eq!(count_points(&long), vec![336, 336]);
        assert!(long.contains("Hours") && long.contains("Load (kW)"));
        let short = std::fs::read_to_string(&files[1]).unwrap();
        assert_eq!(count_points(&short), vec![24, 24]);
    }

    #[test]
    fn short_data_is_clipped_and_empty_is_skipped() {
        let dir = tempfile::tempdir().unwrap();
        let data = vec![1.0; 100];
        let w = [PlotWindow {
            label: "two_week",
            hours: 336,
        }];
        let files = export_plots(dir.path(), "s", "m", &data, &data, &w).unwrap();
        assert_eq!(count_points(&std::fs::read_to_string(&files[0]).unwrap()), vec![100, 100]);
        assert!(export_plots(dir.path(), "s", "m", &data, &[], &w).unwrap().is_empty());
    }
}
