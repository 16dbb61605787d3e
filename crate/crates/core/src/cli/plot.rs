//! Self-contained SVG of `zeta_t` with its band: solid series, dashed band.

use std::fmt::Write as _;
use std::path::Path;

use super::output::write_file;
use crate::efficiency::ZetaSeries;
use crate::error::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 60.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Maximal runs of defined values as `(t, value)` pairs.
fn segments(values: &[Option<f64>]) -> Vec<Vec<(usize, f64)>> {
    let mut out = Vec::new();
    let mut cur = Vec::new();
    for (t, v) in values.iter().enumerate() {
        match v {
            Some(v) if v.is_finite() => cur.push((t, *v)),
            _ => {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
            }
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    out
}

fn points(seg: &[(usize, f64)], x: impl Fn(usize) -> f64, y: impl Fn(f64) -> f64) -> String {
    seg.iter()
        .map(|&(t, v)| format!("{:.2},{:.2}", x(t), y(v)))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Renders the series; band values beyond the plotted range are clipped to its top.
pub fn render_svg(series: &ZetaSeries, title: &str) -> Result<String> {
    let (lo, hi) = match (&series.band_lo, &series.band_hi) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => return Err(Error::invalid("plot needs a series with confidence bands")),
    };
    let n = series.len();
    let finite = series
        .zeta
        .iter()
        .flatten()
        .chain(lo.iter())
        .chain(hi.iter())
        .copied()
        .filter(|v| v.is_finite());
    let mut ymax = finite.fold(0.0f64, f64::max) * 1.05;
    if ymax <= 0.0 {
        ymax = 1.0;
    }
    let plot_w = WIDTH - LEFT - RIGHT;
    let plot_h = HEIGHT - TOP - BOTTOM;
    let x = |t: usize| LEFT + plot_w * t as f64 / (n.max(2) - 1) as f64;
    let y = |v: f64| TOP + plot_h * (1.0 - v.min(ymax) / ymax);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y1}" x2="{x1}" y2="{y1}" stroke="black"/>"#);
    let _ = writeln!(s, r#"<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>"#);

    for i in 0..=4 {
        let v = ymax * i as f64 / 4.0;
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            x0 - 6.0,
            y(v) + 4.0,
            super::output::fmt_sig((v * 1e4).round() / 1e4)
        );
    }
    if n > 0 {
        let ticks = 6.min(n);
        let mut last = usize::MAX;
        for i in 0..ticks {
            let t = if ticks == 1 { 0 } else { i * (n - 1) / (ticks - 1) };
            if t == last {
                continue;
            }
            last = t;
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
                x(t),
                y1 + 18.0,
                escape(&series.dates[t])
            );
        }
    }

    let clip = |v: &f64| Some(if v.is_finite() { *v } else { ymax });
    for band in [lo, hi] {
        let vals: Vec<Option<f64>> = band.iter().map(clip).collect();
        for seg in segments(&vals) {
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="red" stroke-width="1" stroke-dasharray="5,4" points="{}"/>"#,
                points(&seg, x, y)
            );
        }
    }
    for seg in segments(&series.zeta) {
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="black" stroke-width="1.5" points="{}"/>"#,
            points(&seg, x, y)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_plot(series: &ZetaSeries, path: &Path, title: &str) -> Result<()> {
    write_file(path, &render_svg(series, title)?)
}
