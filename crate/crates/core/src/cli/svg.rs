use std::fmt::Write;

use crate::schema::{dequantize_box, ScreenSchema, MASK_TOKEN};

/// Stable per-class stroke color: FNV-1a of the name picks the hue.
pub fn class_color(name: &str) -> String {
    let mut h: u32 = 0x811c_9dc5;
    for b in name.bytes() {
        h ^= u32::from(b);
        h = h.wrapping_mul(0x0100_0193);
    }
    let (r, g, b) = hsl_to_rgb(f64::from(h % 360), 0.7, 0.45);
    format!("#{r:02x}{g:02x}{b:02x}")
}

fn hsl_to_rgb(h: f64, s: f64, l: f64) -> (u8, u8, u8) {
    let c = (1.0 - (2.0 * l - 1.0).abs()) * s;
    let hp = h / 60.0;
    let x = c * (1.0 - (hp % 2.0 - 1.0).abs());
    let (r, g, b) = match hp as u32 {
        0 => (c, x, 0.0),
        1 => (x, c, 0.0),
        2 => (0.0, c, x),
        3 => (0.0, x, c),
        4 => (x, 0.0, c),
        _ => (c, 0.0, x),
    };
    let m = l - c / 2.0;
    let to = |v: f64| ((v + m) * 255.0).round().clamp(0.0, 255.0) as u8;
    (to(r), to(g), to(b))
}

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

/// One outlined, labeled rectangle per element over a blank
/// `width`×`height` canvas. Parents are drawn before their children.
pub fn render_svg(schema: &ScreenSchema, width: u32, height: u32) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" style="background:#ffffff">"#
    );
    let font = (f64::from(width.min(height)) / 60.0).max(6.0);
    for el in schema.iter() {
        let Ok(px) = dequantize_box(&el.bbox, f64::from(width), f64::from(height)) else { continue };
        let color = class_color(el.class.as_str());
        let label = match (el.payload(), el.is_masked()) {
            (Some(p), _) => format!("{} {p}", el.class.as_str()),
            (None, true) => format!("{} {MASK_TOKEN}", el.class.as_str()),
            (None, false) => el.class.as_str().to_owned(),
        };
        let (x, y) = (px.xmin(), px.ymin());
        let _ = writeln!(
            out,
            r#"  <g class="{}"><rect x="{x:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="{color}" stroke-width="2"/><text x="{:.1}" y="{:.1}" font-size="{font:.1}" fill="{color}">{}</text></g>"#,
            escape(el.class.as_str()),
            px.xmax() - x,
            px.ymax() - y,
            x + 2.0,
            y + font,
            escape(&label),
        );
    }
    out.push_str("</svg>\n");
    out
}
