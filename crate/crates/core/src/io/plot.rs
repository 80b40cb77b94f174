//! Minimal static SVG line charts.

use std::fmt::Write;

const W: f64 = 960.0;
const H: f64 = 360.0;
const PAD_L: f64 = 56.0;
const PAD_R: f64 = 16.0;
const PAD_T: f64 = 32.0;
const PAD_B: f64 = 36.0;

pub struct Line<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub values: &'a [Option<f64>],
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Lines over a shared tick axis, broken at missing values, with dashed
/// vertical markers at `cuts`.
pub fn line_chart(title: &str, config_hash: &str, lines: &[Line], cuts: &[usize]) -> String {
    let n = lines.iter().map(|l| l.values.len()).max().unwrap_or(0).max(2);
    let (mut lo, mut hi) = lines
        .iter()
        .flat_map(|l| l.values.iter().flatten())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        (lo, hi) = (0.0, 1.0);
    }
    if hi - lo < 1e-9 {
        lo -= 0.5;
        hi += 0.5;
    }
    let x = |i: usize| PAD_L + (W - PAD_L - PAD_R) * i as f64 / (n - 1) as f64;
    let y = |v: f64| PAD_T + (H - PAD_T - PAD_B) * (hi - v) / (hi - lo);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    );
    let _ = writeln!(s, "<!-- config_hash: {config_hash} -->");
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{PAD_L}" y="20" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    );
    for k in 0..=4 {
        let v = lo + (hi - lo) * k as f64 / 4.0;
        let yv = y(v);
        let _ = writeln!(
            s,
            r##"<line x1="{PAD_L}" x2="{:.1}" y1="{yv:.1}" y2="{yv:.1}" stroke="#ddd"/><text x="4" y="{:.1}" font-family="sans-serif" font-size="11">{v:.1}</text>"##,
            W - PAD_R,
            yv + 4.0,
        );
    }
    for &c in cuts {
        let _ = writeln!(
            s,
            r##"<line class="cut" x1="{0:.1}" x2="{0:.1}" y1="{PAD_T}" y2="{1:.1}" stroke="#000" stroke-dasharray="4 3"/>"##,
            x(c),
            H - PAD_B
        );
    }
    for (li, line) in lines.iter().enumerate() {
        let mut d = String::new();
        let mut pen_down = false;
        for (i, v) in line.values.iter().enumerate() {
            match v {
                Some(v) => {
                    let _ = write!(d, "{}{:.1},{:.1} ", if pen_down { "L" } else { "M" }, x(i), y(*v));
                    pen_down = true;
                }
                None => pen_down = false,
            }
        }
        let _ = writeln!(
            s,
            r#"<path d="{}" fill="none" stroke="{}" stroke-width="1.2"/>"#,
            d.trim_end(),
            line.color
        );
        let ly = H - 10.0;
        let lx = PAD_L + 150.0 * li as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{lx}" y="{:.1}" width="12" height="4" fill="{}"/><text x="{:.1}" y="{ly}" font-family="sans-serif" font-size="11">{}</text>"#,
            ly - 6.0,
            line.color,
            lx + 16.0,
            escape(line.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

/// Horizontal bars with whiskers, one per label.
pub fn bar_chart(title: &str, config_hash: &str, bars: &[(String, f64, f64)]) -> String {
    let max = bars.iter().map(|(_, m, sd)| m + sd).fold(0.0, f64::max).max(1e-9);
    let row = 28.0;
    let h = PAD_T + row * bars.len() as f64 + 16.0;
    let left = 170.0;
    let scale = |v: f64| (W - left - 40.0) * v / max;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{h}" viewBox="0 0 {W} {h}">"#
    );
    let _ = writeln!(s, "<!-- config_hash: {config_hash} -->");
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="8" y="20" font-family="sans-serif" font-size="14">{}</text>"#,
        escape(title)
    );
    for (i, (label, mean, sd)) in bars.iter().enumerate() {
        let y0 = PAD_T + row * i as f64;
        let _ = writeln!(
            s,
            r##"<text x="8" y="{:.1}" font-family="sans-serif" font-size="12">{}</text><rect x="{left}" y="{y0:.1}" width="{:.1}" height="18" fill="#4a7fb5"/><line x1="{:.1}" x2="{:.1}" y1="{:.1}" y2="{:.1}" stroke="#000"/><text x="{:.1}" y="{:.1}" font-family="sans-serif" font-size="11">{mean:.3}</text>"##,
            y0 + 13.0,
            escape(label),
            scale(*mean),
            left + scale((mean - sd).max(0.0)),
            left + scale(mean + sd),
            y0 + 9.0,
            y0 + 9.0,
            left + scale(*mean) + 6.0,
            y0 + 13.0
        );
    }
    s.push_str("</svg>\n");
    s
}
