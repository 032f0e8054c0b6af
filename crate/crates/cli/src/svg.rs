//! Minimal static SVG polyline plots. Pixel axes, y pointing down.

use std::fmt::Write;

use shapereg_core::Complex64;

pub struct Layer<'a> {
    pub label: &'a str,
    pub points: &'a [Complex64],
    pub stroke: &'a str,
    pub width: f64,
    pub dash: Option<&'a str>,
    pub opacity: f64,
}

const WIDTH: f64 = 800.0;

pub fn render(layers: &[Layer]) -> String {
    let all = layers.iter().flat_map(|l| l.points.iter());
    let (mut x0, mut y0, mut x1, mut y1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for z in all {
        x0 = x0.min(z.re);
        y0 = y0.min(z.im);
        x1 = x1.max(z.re);
        y1 = y1.max(z.im);
    }
    if x0 > x1 {
        (x0, y0, x1, y1) = (0.0, 0.0, 1.0, 1.0);
    }
    let span = (x1 - x0).max(y1 - y0).max(f64::MIN_POSITIVE);
    let pad = 0.05 * span;
    let (vx, vy) = (x0 - pad, y0 - pad);
    let (vw, vh) = (x1 - x0 + 2.0 * pad, y1 - y0 + 2.0 * pad);
    let height = (WIDTH * vh / vw).clamp(100.0, 4.0 * WIDTH);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height:.0}" viewBox="{vx} {vy} {vw} {vh}">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{vx}" y="{vy}" width="{vw}" height="{vh}" fill="white"/>"#
    );
    for l in layers {
        let mut pts = String::new();
        for z in l.points {
            let _ = write!(pts, "{},{} ", z.re, z.im);
        }
        let dash = l
            .dash
            .map(|d| format!(r#" stroke-dasharray="{d}""#))
            .unwrap_or_default();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{}" stroke-width="{}" stroke-opacity="{}" vector-effect="non-scaling-stroke"{dash} points="{}"><title>{}</title></polyline>"#,
            l.stroke,
            l.width,
            l.opacity,
            pts.trim_end(),
            l.label
        );
    }
    s.push_str("</svg>\n");
    s
}
