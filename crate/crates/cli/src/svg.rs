//! Minimal SVG line/scatter/bar charts.

use std::fmt::Write as _;

pub const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#7f7f7f",
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Style {
    Line,
    Dots {
        radius: f64,
    },
    /// Histogram bars centred on each x with the given width.
    Bars {
        width: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub label: String,
    pub color: String,
    pub style: Style,
    pub points: Vec<(f64, f64)>,
    pub opacity: f64,
}

impl Series {
    pub fn new(
        label: impl Into<String>,
        color: &str,
        style: Style,
        points: Vec<(f64, f64)>,
    ) -> Self {
        Self {
            label: label.into(),
            color: color.into(),
            style,
            points,
            opacity: 1.0,
        }
    }

    pub fn opacity(mut self, o: f64) -> Self {
        self.opacity = o;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
    /// Same scale on both axes.
    pub equal_aspect: bool,
}

impl Panel {
    pub fn new(title: impl Into<String>, x_label: &str, y_label: &str) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            ..Self::default()
        }
    }

    pub fn push(&mut self, s: Series) {
        self.series.push(s);
    }

    fn bounds(&self) -> (f64, f64, f64, f64) {
        let mut b = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for s in &self.series {
            let half = match s.style {
                Style::Bars { width } => width / 2.0,
                _ => 0.0,
            };
            for &(x, y) in s
                .points
                .iter()
                .filter(|p| p.0.is_finite() && p.1.is_finite())
            {
                b.0 = b.0.min(x - half);
                b.1 = b.1.max(x + half);
                b.2 = b.2.min(y);
                b.3 = b.3.max(y);
                if matches!(s.style, Style::Bars { .. }) {
                    b.2 = b.2.min(0.0);
                }
            }
        }
        if !b.0.is_finite() {
            return (0.0, 1.0, 0.0, 1.0);
        }
        let widen = |lo: f64, hi: f64| {
            if hi - lo < 1e-12 {
                (lo - 0.5, hi + 0.5)
            } else {
                let pad = 0.05 * (hi - lo);
                (lo - pad, hi + pad)
            }
        };
        let (x0, x1) = widen(b.0, b.1);
        let (y0, y1) = widen(b.2, b.3);
        (x0, x1, y0, y1)
    }
}

const W: f64 = 640.0;
const H: f64 = 300.0;
const MARGIN: (f64, f64, f64, f64) = (60.0, 20.0, 30.0, 45.0); // left right top bottom

/// Renders panels stacked vertically into one SVG document.
pub fn render(panels: &[Panel]) -> String {
    let total_h = H * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{total_h}" viewBox="0 0 {W} {total_h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, p) in panels.iter().enumerate() {
        render_panel(&mut out, p, i as f64 * H);
    }
    out.push_str("</svg>\n");
    out
}

fn render_panel(out: &mut String, p: &Panel, top: f64) {
    let (l, r, t, b) = MARGIN;
    let (mut x0, mut x1, mut y0, mut y1) = p.bounds();
    let (pw, ph) = (W - l - r, H - t - b);
    if p.equal_aspect {
        let scale = ((x1 - x0) / pw).max((y1 - y0) / ph);
        let (cx, cy) = ((x0 + x1) / 2.0, (y0 + y1) / 2.0);
        (x0, x1) = (cx - scale * pw / 2.0, cx + scale * pw / 2.0);
        (y0, y1) = (cy - scale * ph / 2.0, cy + scale * ph / 2.0);
    }
    let sx = |x: f64| l + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| top + t + (y1 - y) / (y1 - y0) * ph;

    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
        W / 2.0,
        top + 18.0,
        escape(&p.title)
    );
    let _ = writeln!(
        out,
        r##"<rect x="{l}" y="{}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##,
        top + t
    );
    for v in ticks(x0, x1) {
        let x = sx(v);
        let _ = writeln!(
            out,
            r##"<line x1="{x:.1}" y1="{:.1}" x2="{x:.1}" y2="{:.1}" stroke="#333"/><text x="{x:.1}" y="{:.1}" text-anchor="middle">{}</text>"##,
            top + t + ph,
            top + t + ph + 4.0,
            top + t + ph + 16.0,
            fmt_tick(v)
        );
    }
    for v in ticks(y0, y1) {
        let y = sy(v);
        let _ = writeln!(
            out,
            r##"<line x1="{:.1}" y1="{y:.1}" x2="{l}" y2="{y:.1}" stroke="#333"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"##,
            l - 4.0,
            l - 6.0,
            y + 4.0,
            fmt_tick(v)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        l + pw / 2.0,
        top + H - 8.0,
        escape(&p.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text transform="translate(14 {}) rotate(-90)" text-anchor="middle">{}</text>"#,
        top + t + ph / 2.0,
        escape(&p.y_label)
    );

    let clip = format!("clip{}", top as u64);
    let _ = writeln!(
        out,
        r#"<clipPath id="{clip}"><rect x="{l}" y="{}" width="{pw}" height="{ph}"/></clipPath><g clip-path="url(#{clip})">"#,
        top + t
    );
    for s in &p.series {
        let pts = s
            .points
            .iter()
            .filter(|q| q.0.is_finite() && q.1.is_finite());
        match s.style {
            Style::Line => {
                let path: Vec<String> = pts
                    .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
                    .collect();
                if !path.is_empty() {
                    let _ = writeln!(
                        out,
                        r#"<polyline fill="none" stroke="{}" stroke-width="1.5" stroke-opacity="{}" points="{}"/>"#,
                        s.color,
                        s.opacity,
                        path.join(" ")
                    );
                }
            }
            Style::Dots { radius } => {
                for &(x, y) in pts {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="{radius}" fill="{}" fill-opacity="{}"/>"#,
                        sx(x),
                        sy(y),
                        s.color,
                        s.opacity
                    );
                }
            }
            Style::Bars { width } => {
                let base = sy(0.0f64.clamp(y0, y1));
                for &(x, y) in pts {
                    let (a, c) = (sx(x - width / 2.0), sx(x + width / 2.0));
                    let yt = sy(y);
                    let _ = writeln!(
                        out,
                        r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{}" fill-opacity="{}"/>"#,
                        a,
                        yt.min(base),
                        (c - a).max(0.5),
                        (base - yt).abs(),
                        s.color,
                        s.opacity
                    );
                }
            }
        }
    }
    out.push_str("</g>\n");
    let mut ly = top + t + 14.0;
    for s in p.series.iter().filter(|s| !s.label.is_empty()) {
        let _ = writeln!(
            out,
            r#"<rect x="{:.1}" y="{:.1}" width="10" height="10" fill="{}"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            l + pw - 150.0,
            ly - 9.0,
            s.color,
            l + pw - 136.0,
            ly,
            escape(&s.label)
        );
        ly += 14.0;
    }
}

/// About five round tick values spanning `[lo, hi]`.
pub fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![lo];
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".into()
    } else if v.abs() >= 1e4 || v.abs() < 1e-3 {
        format!("{v:.1e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Normalised histogram as `(bin centre, density)` pairs plus the bin width.
pub fn histogram(values: &[f64], bins: usize, range: Option<(f64, f64)>) -> (Vec<(f64, f64)>, f64) {
    let finite: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
    if finite.is_empty() || bins == 0 {
        return (Vec::new(), 1.0);
    }
    let (lo, hi) = range.unwrap_or_else(|| {
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo < 1e-12 {
            (lo - 0.5, hi + 0.5)
        } else {
            (lo, hi)
        }
    });
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in finite.iter().filter(|v| (lo..=hi).contains(*v)) {
        counts[(((v - lo) / width) as usize).min(bins - 1)] += 1;
    }
    let norm = finite.len() as f64 * width;
    let pts = counts
        .iter()
        .enumerate()
        .map(|(i, &c)| (lo + (i as f64 + 0.5) * width, c as f64 / norm))
        .collect();
    (pts, width)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ticks_are_round_and_inside() {
        let t = ticks(-0.13, 2.71);
        assert_eq!(t, vec![0.0, 0.5, 1.0, 1.5, 2.0, 2.5]);
        assert_eq!(ticks(3.0, 3.0), vec![3.0]);
    }

    #[test]
    fn histogram_integrates_to_one() {
        let v: Vec<f64> = (0..1000).map(|i| (i as f64 / 999.0).powi(2)).collect();
        let (h, w) = histogram(&v, 17, None);
        let area: f64 = h.iter().map(|p| p.1 * w).sum();
        assert!((area - 1.0).abs() < 1e-12);
        assert!(histogram(&[], 5, None).0.is_empty());
    }

    #[test]
    fn empty_panel_still_renders() {
        let svg = render(&[Panel::new("empty", "x", "y")]);
        assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    }
}
