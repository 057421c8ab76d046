//! Minimal self-contained SVG charts.

use std::fmt::Write;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const MAX_POINTS: usize = 4000;
const COLORS: [&str; 4] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e"];

pub struct Series<'a> {
    pub name: &'a str,
    pub points: Vec<(f64, f64)>,
}

pub struct LineChart<'a> {
    pub title: &'a str,
    pub x_label: &'a str,
    pub y_label: &'a str,
    pub series: Vec<Series<'a>>,
    pub log_y: bool,
}

fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = (hi - lo).max(f64::EPSILON);
    let raw = span / target as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= target as f64)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn label(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.4}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = write!(out, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = write!(
        out,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

impl LineChart<'_> {
    pub fn render(&self) -> String {
        let transform = |y: f64| if self.log_y { y.log10() } else { y };
        let usable = |y: f64| y.is_finite() && (!self.log_y || y > 0.0);
        let mut xs = (f64::INFINITY, f64::NEG_INFINITY);
        let mut ys = (f64::INFINITY, f64::NEG_INFINITY);
        for s in &self.series {
            for &(x, y) in s.points.iter().filter(|p| usable(p.1)) {
                xs = (xs.0.min(x), xs.1.max(x));
                let ty = transform(y);
                ys = (ys.0.min(ty), ys.1.max(ty));
            }
        }
        if !xs.0.is_finite() {
            xs = (0.0, 1.0);
            ys = (0.0, 1.0);
        }
        if xs.1 == xs.0 {
            xs.1 = xs.0 + 1.0;
        }
        if ys.1 == ys.0 {
            ys = (ys.0 - 0.5, ys.1 + 0.5);
        }
        let pad = 0.05 * (ys.1 - ys.0);
        ys = (ys.0 - pad, ys.1 + pad);

        let pw = WIDTH - LEFT - RIGHT;
        let ph = HEIGHT - TOP - BOTTOM;
        let px = |x: f64| LEFT + (x - xs.0) / (xs.1 - xs.0) * pw;
        let py = |y: f64| TOP + ph - (y - ys.0) / (ys.1 - ys.0) * ph;

        let mut out = String::new();
        header(&mut out, self.title);
        let _ = write!(
            out,
            r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
        );
        for t in nice_ticks(xs.0, xs.1, 8) {
            let x = px(t);
            let _ = write!(
                out,
                r##"<line x1="{x:.2}" y1="{TOP}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                TOP + ph,
                TOP + ph + 16.0,
                label(t)
            );
        }
        let y_ticks = if self.log_y {
            (ys.0.ceil() as i64..=ys.1.floor() as i64).map(|e| e as f64).collect()
        } else {
            nice_ticks(ys.0, ys.1, 6)
        };
        for t in y_ticks {
            let y = py(t);
            let text = if self.log_y { format!("1e{t}") } else { label(t) };
            let _ = write!(
                out,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{text}</text>"##,
                LEFT + pw,
                LEFT - 6.0,
                y + 4.0
            );
        }
        let _ = write!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            LEFT + pw / 2.0,
            HEIGHT - 12.0,
            escape(self.x_label)
        );
        let _ = write!(
            out,
            r#"<text x="16" y="{:.2}" text-anchor="middle" transform="rotate(-90 16 {:.2})">{}</text>"#,
            TOP + ph / 2.0,
            TOP + ph / 2.0,
            escape(self.y_label)
        );

        for (k, s) in self.series.iter().enumerate() {
            let color = COLORS[k % COLORS.len()];
            let stride = s.points.len().div_ceil(MAX_POINTS).max(1);
            let mut path = String::new();
            let mut pen_down = false;
            for &(x, y) in s.points.iter().step_by(stride) {
                if !usable(y) {
                    pen_down = false;
                    continue;
                }
                let cmd = if pen_down { 'L' } else { 'M' };
                let _ = write!(path, "{cmd}{:.2},{:.2}", px(x), py(transform(y)));
                pen_down = true;
            }
            let _ = write!(
                out,
                r#"<path d="{path}" fill="none" stroke="{color}" stroke-width="1.2"/>"#
            );
            let ly = TOP + 14.0 + 16.0 * k as f64;
            let _ = write!(
                out,
                r#"<line x1="{:.2}" y1="{ly:.2}" x2="{:.2}" y2="{ly:.2}" stroke="{color}" stroke-width="2"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                LEFT + pw - 120.0,
                LEFT + pw - 100.0,
                LEFT + pw - 94.0,
                ly + 4.0,
                escape(s.name)
            );
        }
        out.push_str("</svg>\n");
        out
    }
}

/// Diverging blue-white-red colour for `v ∈ [-1, 1]`.
fn diverging(v: f64) -> String {
    let v = v.clamp(-1.0, 1.0);
    let (r, g, b) = if v >= 0.0 {
        (255.0, 255.0 * (1.0 - v), 255.0 * (1.0 - v))
    } else {
        (255.0 * (1.0 + v), 255.0 * (1.0 + v), 255.0)
    };
    format!("#{:02x}{:02x}{:02x}", r as u8, g as u8, b as u8)
}

/// Heat map of a field over `(t, x)`; rows are time slices.
pub fn heatmap(title: &str, times: &[f64], nodes: &[f64], rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let pw = WIDTH - LEFT - RIGHT - 60.0;
    let ph = HEIGHT - TOP - BOTTOM;
    let (Some(&t0), Some(&t1)) = (times.first(), times.last()) else {
        out.push_str("</svg>\n");
        return out;
    };
    let scale = rows
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let t_stride = times.len().div_ceil(300).max(1);
    let x_stride = nodes.len().div_ceil(100).max(1);
    let cols: Vec<usize> = (0..times.len()).step_by(t_stride).collect();
    let lines: Vec<usize> = (0..nodes.len()).step_by(x_stride).collect();
    let cw = pw / cols.len() as f64;
    let rh = ph / lines.len() as f64;
    for (ci, &ti) in cols.iter().enumerate() {
        for (ri, &xi) in lines.iter().enumerate() {
            let v = rows[ti].get(xi).copied().unwrap_or(0.0) / scale;
            let _ = write!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}"/>"#,
                LEFT + ci as f64 * cw,
                TOP + ph - (ri + 1) as f64 * rh,
                cw + 0.3,
                rh + 0.3,
                diverging(v)
            );
        }
    }
    let _ = write!(
        out,
        r##"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##
    );
    for t in nice_ticks(t0, t1.max(t0 + f64::EPSILON), 8) {
        let x = LEFT + (t - t0) / (t1 - t0).max(f64::EPSILON) * pw;
        let _ = write!(
            out,
            r#"<text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 16.0,
            label(t)
        );
    }
    let x_max = nodes.last().copied().unwrap_or(1.0);
    for x in nice_ticks(0.0, x_max, 5) {
        let y = TOP + ph - x / x_max * ph;
        let _ = write!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            y + 4.0,
            label(x)
        );
    }
    let _ = write!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">t</text><text x="16" y="{:.2}">x</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 12.0,
        TOP + ph / 2.0
    );
    let bar_x = LEFT + pw + 20.0;
    for i in 0..50 {
        let v = 1.0 - 2.0 * i as f64 / 49.0;
        let _ = write!(
            out,
            r#"<rect x="{bar_x:.2}" y="{:.2}" width="14" height="{:.2}" fill="{}"/>"#,
            TOP + i as f64 * ph / 50.0,
            ph / 50.0 + 0.3,
            diverging(v)
        );
    }
    let _ = write!(
        out,
        r#"<text x="{:.2}" y="{:.2}">{}</text><text x="{:.2}" y="{:.2}">{}</text>"#,
        bar_x - 4.0,
        TOP - 4.0,
        label(scale),
        bar_x - 4.0,
        TOP + ph + 14.0,
        label(-scale)
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_cover_range() {
        let t = nice_ticks(0.0, 100.0, 8);
        assert_eq!(t.first(), Some(&0.0));
        assert_eq!(t.last(), Some(&100.0));
        assert!(t.len() <= 9);
    }

    #[test]
    fn chart_is_deterministic_and_closed() {
        let chart = || LineChart {
            title: "y & <z>",
            x_label: "t",
            y_label: "y",
            series: vec![Series {
                name: "y",
                points: (0..50).map(|i| (i as f64, (i as f64).sin())).collect(),
            }],
            log_y: false,
        };
        let a = chart().render();
        assert_eq!(a, chart().render());
        assert!(a.starts_with("<svg") && a.ends_with("</svg>\n"));
        assert!(a.contains("y &amp; &lt;z&gt;"));
    }

    #[test]
    fn log_chart_skips_non_positive() {
        let svg = LineChart {
            title: "omega",
            x_label: "t",
            y_label: "Omega",
            series: vec![Series {
                name: "Omega",
                points: vec![(0.0, 1.0), (1.0, 0.0), (2.0, 1e-3)],
            }],
            log_y: true,
        }
        .render();
        assert!(svg.contains("1e-3") || svg.contains("1e0"));
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
    }

    #[test]
    fn heatmap_handles_empty_input() {
        let svg = heatmap("field", &[], &[], &[]);
        assert!(svg.ends_with("</svg>\n"));
    }
}
