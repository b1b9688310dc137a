//! Top-down SVG view of a scene.

use std::fmt::Write;

use crate::scene::{Scene, SceneConfig};

/// Pixels per meter.
const SCALE: f64 = 100.0;
const PAD: f64 = 0.5;

/// Renders each object as its rotated footprint with a heading tick along
/// `(cos r, sin r)` and a category label. World `+y` points up in the image.
pub fn render_svg(scene: &Scene, config: &SceneConfig) -> String {
    let (mut x0, mut y0, mut x1, mut y1) = (f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for o in &scene.objects {
        let reach = o.size[0].hypot(o.size[1]) / 2.0;
        x0 = x0.min(o.location[0] - reach);
        x1 = x1.max(o.location[0] + reach);
        y0 = y0.min(o.location[1] - reach);
        y1 = y1.max(o.location[1] + reach);
    }
    if scene.objects.is_empty() {
        (x0, y0, x1, y1) = (0.0, 0.0, 1.0, 1.0);
    }
    let (x0, y0, x1, y1) = (x0 - PAD, y0 - PAD, x1 + PAD, y1 + PAD);
    let (w, h) = ((x1 - x0) * SCALE, (y1 - y0) * SCALE);
    let px = |x: f64| (x - x0) * SCALE;
    let py = |y: f64| (y1 - y) * SCALE;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.1}" height="{h:.1}" viewBox="0 0 {w:.1} {h:.1}">"#
    );
    let _ = writeln!(out, r#"<title>{}</title>"#, escape(&scene.id));
    for (i, o) in scene.objects.iter().enumerate() {
        let (cx, cy) = (px(o.location[0]), py(o.location[1]));
        let (bw, bh) = (o.size[0] * SCALE, o.size[1] * SCALE);
        // SVG rotation is clockwise in screen space, which is
        // counter-clockwise in the flipped world frame.
        let deg = -o.rotation.to_degrees();
        let (sin, cos) = o.rotation.sin_cos();
        let tick = 0.5 * o.size[0].max(o.size[1]) * SCALE;
        let name = config.category_names.get(o.category).map_or("?", String::as_str);
        let _ = writeln!(out, r#"<g class="object" data-index="{i}">"#);
        let _ = writeln!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{bw:.2}" height="{bh:.2}" transform="rotate({deg:.3} {cx:.2} {cy:.2})" fill="none" stroke="#333"/>"##,
            cx - bw / 2.0,
            cy - bh / 2.0
        );
        let _ = writeln!(
            out,
            r##"<line x1="{cx:.2}" y1="{cy:.2}" x2="{:.2}" y2="{:.2}" stroke="#c00"/>"##,
            cx + tick * cos,
            cy - tick * sin
        );
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{cy:.2}" font-size="12" text-anchor="middle">{}</text>"#,
            escape(name)
        );
        let _ = writeln!(out, "</g>");
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}
