use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf"];

/// One curve: a mean line with a `±std` band.
#[derive(Clone, Debug, PartialEq)]
pub struct ChartSeries {
    pub label: String,
    pub x: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChartSpec {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    /// Plot `log10` of the values; non-positive values are clamped.
    pub log_scale: bool,
}

struct Axis {
    lo: f64,
    hi: f64,
    px_lo: f64,
    px_hi: f64,
}

impl Axis {
    fn map(&self, v: f64) -> f64 {
        self.px_lo + (v - self.lo) / (self.hi - self.lo) * (self.px_hi - self.px_lo)
    }

    fn ticks(&self) -> Vec<f64> {
        (0..=4).map(|i| self.lo + (self.hi - self.lo) * i as f64 / 4.0).collect()
    }
}

fn padded(lo: f64, hi: f64) -> (f64, f64) {
    if !(lo.is_finite() && hi.is_finite()) {
        return (0.0, 1.0);
    }
    if hi - lo <= f64::EPSILON * (1.0 + lo.abs()) {
        return (lo - 0.5, hi + 0.5);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn tick_label(v: f64, log_scale: bool) -> String {
    if log_scale {
        format!("1e{v:.1}")
    } else if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.2e}")
    } else {
        format!("{v:.3}")
    }
}

/// Render a static SVG line chart. Output depends only on the inputs.
pub fn render_svg(spec: &ChartSpec, series: &[ChartSeries]) -> Result<String> {
    if series.is_empty() || series.iter().all(|s| s.x.is_empty()) {
        return Err(Error::Empty("chart series"));
    }
    for s in series {
        if s.mean.len() != s.x.len() || s.std.len() != s.x.len() {
            return Err(Error::DimensionMismatch {
                what: "chart series",
                expected: s.x.len(),
                got: s.mean.len().min(s.std.len()),
            });
        }
    }
    let floor = 1e-300;
    let ty = |v: f64| if spec.log_scale { v.max(floor).log10() } else { v };
    let band = |s: &ChartSeries, i: usize| (ty(s.mean[i] - s.std[i]), ty(s.mean[i] + s.std[i]));

    let mut xlo = f64::INFINITY;
    let mut xhi = f64::NEG_INFINITY;
    let mut ylo = f64::INFINITY;
    let mut yhi = f64::NEG_INFINITY;
    for s in series {
        for i in 0..s.x.len() {
            xlo = xlo.min(s.x[i]);
            xhi = xhi.max(s.x[i]);
            let (lo, hi) = band(s, i);
            let m = ty(s.mean[i]);
            for v in [lo, hi, m] {
                if v.is_finite() {
                    ylo = ylo.min(v);
                    yhi = yhi.max(v);
                }
            }
        }
    }
    let (xlo, xhi) = padded(xlo, xhi);
    let (ylo, yhi) = padded(ylo, yhi);
    let xa = Axis { lo: xlo, hi: xhi, px_lo: LEFT, px_hi: WIDTH - RIGHT };
    let ya = Axis { lo: ylo, hi: yhi, px_lo: HEIGHT - BOTTOM, px_hi: TOP };

    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{:.1}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(&spec.title)
    );
    // Axes, grid and tick labels.
    let _ = writeln!(
        w,
        r#"<rect x="{LEFT}" y="{TOP}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        WIDTH - RIGHT - LEFT,
        HEIGHT - BOTTOM - TOP
    );
    for t in xa.ticks() {
        let px = xa.map(t);
        let _ = writeln!(
            w,
            r##"<line x1="{px:.1}" y1="{TOP}" x2="{px:.1}" y2="{:.1}" stroke="#dddddd"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            HEIGHT - BOTTOM,
            HEIGHT - BOTTOM + 16.0,
            tick_label(t, false)
        );
    }
    for t in ya.ticks() {
        let py = ya.map(t);
        let _ = writeln!(
            w,
            r##"<line x1="{LEFT}" y1="{py:.1}" x2="{:.1}" y2="{py:.1}" stroke="#dddddd"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            WIDTH - RIGHT,
            LEFT - 6.0,
            py + 4.0,
            tick_label(t, spec.log_scale)
        );
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        HEIGHT - 20.0,
        escape(&spec.x_label)
    );
    let y_label = if spec.log_scale {
        format!("{} (log10)", spec.y_label)
    } else {
        spec.y_label.clone()
    };
    let _ = writeln!(
        w,
        r#"<text x="18" y="{:.1}" text-anchor="middle" transform="rotate(-90 18 {:.1})">{}</text>"#,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        (TOP + HEIGHT - BOTTOM) / 2.0,
        escape(&y_label)
    );

    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let mut upper = Vec::new();
        let mut lower = Vec::new();
        let mut line = Vec::new();
        for i in 0..s.x.len() {
            let (lo, hi) = band(s, i);
            let m = ty(s.mean[i]);
            let px = xa.map(s.x[i]);
            if hi.is_finite() {
                upper.push(format!("{px:.2},{:.2}", ya.map(hi)));
            }
            if lo.is_finite() {
                lower.push(format!("{px:.2},{:.2}", ya.map(lo)));
            }
            if m.is_finite() {
                line.push(format!("{px:.2},{:.2}", ya.map(m)));
            }
        }
        lower.reverse();
        let band_pts: Vec<String> = upper.into_iter().chain(lower).collect();
        let _ = writeln!(
            w,
            r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
            band_pts.join(" ")
        );
        let _ = writeln!(
            w,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#,
            line.join(" ")
        );
        let ly = TOP + 10.0 + 20.0 * k as f64;
        let lx = WIDTH - RIGHT + 12.0;
        let _ = writeln!(
            w,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="3"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    let _ = writeln!(w, "</svg>");
    Ok(out)
}

pub fn export_svg(path: &Path, spec: &ChartSpec, series: &[ChartSeries]) -> Result<()> {
    super::write_file(path, render_svg(spec, series)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(label: &str, offset: f64) -> ChartSeries {
        ChartSeries {
            label: label.into(),
            x: (0..20).map(|i| i as f64 * 100.0).collect(),
            mean: (0..20).map(|i| offset + (i as f64).sqrt()).collect(),
            std: vec![0.3; 20],
        }
    }

    fn spec(log_scale: bool) -> ChartSpec {
        ChartSpec {
            title: "HJB <loss>".into(),
            x_label: "timestep".into(),
            y_label: "loss".into(),
            log_scale,
        }
    }

    #[test]
    fn overlay_has_one_band_and_line_per_series_with_labels() {
        let svg = render_svg(&spec(false), &[series("ppo", 0.0), series("hjbppo", 1.0)]).unwrap();
        assert_eq!(svg.matches("<polygon").count(), 2);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains(">ppo</text>") && svg.contains(">hjbppo</text>"));
        assert!(svg.contains("HJB &lt;loss&gt;"));
    }

    #[test]
    fn deterministic_and_log_scale_safe() {
        let a = render_svg(&spec(true), &[series("a", -1.0)]).unwrap();
        let b = render_svg(&spec(true), &[series("a", -1.0)]).unwrap();
        assert_eq!(a, b);
        assert!(!a.contains("NaN") && !a.contains("inf"));
    }

    #[test]
    fn rejects_empty_and_ragged() {
        assert!(render_svg(&spec(false), &[]).is_err());
        let mut s = series("x", 0.0);
        s.std.pop();
        assert!(render_svg(&spec(false), &[s]).is_err());
    }

    #[test]
    fn single_point_series() {
        let s = ChartSeries {
            label: "one".into(),
            x: vec![5.0],
            mean: vec![2.0],
            std: vec![0.0],
        };
        let svg = render_svg(&spec(false), &[s]).unwrap();
        assert!(!svg.contains("NaN"));
    }
}
