//! Flower glyphs: twelve petals and a center disc whose areas are
//! proportional to per-category ADE rates, with darker inner shapes for the
//! serious subset.
//!
//! Geometry. The unit petal is the closed path published in the style file
//! (apex at (0, -1), tip at the origin). A petal of rate `v` is that path
//! scaled by `R_max * sqrt(v / reference)` and rotated `30 * index` degrees
//! clockwise about the glyph center. The center disc of rate `v` has radius
//! `R_max * sqrt(A / pi * v / reference)`, `A` being the unit petal area, so
//! that petals and disc share one area-per-rate constant. Serious subsets use
//! the same shape scaled by `sqrt(serious / total)` about the petal tip (or
//! about the disc center).

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::normalization::AdeProfile;

pub const DEFAULT_STYLES: &str = include_str!("../data/styles.txt");

/// Glyph radius as a fraction of the canvas width.
pub const RADIUS_FRACTION: f64 = 0.47;
/// Height of the caption strip under the glyph.
pub const CAPTION_PX: u32 = 18;
const HAIRLINE: &str = "0.5";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GlyphError {
    #[error("style file line {line}: {reason}")]
    Style { line: usize, reason: String },
    #[error("reference rate {reference} is below the largest category rate {max}")]
    ReferenceBelowMax { reference: f64, max: f64 },
    #[error("reference rate must be positive and finite, got {0}")]
    BadReference(f64),
    #[error("overlay glyphs use different reference rates ({0} vs {1})")]
    MismatchedReference(f64, f64),
    #[error("category `{0}` has no style")]
    UnstyledCategory(String),
    #[error("rate must be a non-negative number, got {0}")]
    NegativeRate(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Slot {
    Petal(u8),
    Center,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryStyle {
    pub category_id: String,
    pub slot: Slot,
    pub fill_color: String,
    pub serious_fill_color: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Seg {
    Move(P),
    Line(P),
    Quad(P, P),
    Cubic(P, P, P),
    Close,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct P(f64, f64);

/// Parse an absolute-coordinate path (`M`, `L`, `Q`, `C`, `Z`).
fn parse_path(d: &str) -> Result<Vec<Seg>, String> {
    let mut tokens: Vec<String> = Vec::new();
    let mut num = String::new();
    let flush = |num: &mut String, tokens: &mut Vec<String>| {
        if !num.is_empty() {
            tokens.push(std::mem::take(num));
        }
    };
    for ch in d.chars() {
        match ch {
            'M' | 'L' | 'Q' | 'C' | 'Z' => {
                flush(&mut num, &mut tokens);
                tokens.push(ch.to_string());
            }
            ',' | ' ' | '\t' | '\n' => flush(&mut num, &mut tokens),
            '-' if !num.is_empty() && !num.ends_with('e') => {
                flush(&mut num, &mut tokens);
                num.push(ch);
            }
            c if c.is_ascii_digit() || c == '.' || c == '-' || c == 'e' => num.push(c),
            c => return Err(format!("unsupported path character `{c}`")),
        }
    }
    flush(&mut num, &mut tokens);

    let mut segs = Vec::new();
    let mut it = tokens.iter().peekable();
    let point = |it: &mut std::iter::Peekable<std::slice::Iter<'_, String>>| -> Result<P, String> {
        let mut coord = || -> Result<f64, String> {
            let t = it.next().ok_or("truncated path")?;
            t.parse().map_err(|_| format!("bad number `{t}`"))
        };
        Ok(P(coord()?, coord()?))
    };
    while let Some(cmd) = it.next() {
        segs.push(match cmd.as_str() {
            "M" => Seg::Move(point(&mut it)?),
            "L" => Seg::Line(point(&mut it)?),
            "Q" => Seg::Quad(point(&mut it)?, point(&mut it)?),
            "C" => Seg::Cubic(point(&mut it)?, point(&mut it)?, point(&mut it)?),
            "Z" => Seg::Close,
            other => return Err(format!("expected a path command, found `{other}`")),
        });
    }
    if !matches!(segs.first(), Some(Seg::Move(_))) {
        return Err("path must start with M".into());
    }
    Ok(segs)
}

/// Exact area of a closed path of lines and Bezier curves (Green's theorem).
fn path_area(segs: &[Seg]) -> f64 {
    let mut area2 = 0.0;
    let mut cur = P(0.0, 0.0);
    let mut start = cur;
    let cross = |a: P, b: P| a.0 * b.1 - a.1 * b.0;
    for seg in segs {
        match *seg {
            Seg::Move(p) => {
                cur = p;
                start = p;
            }
            Seg::Line(p) => {
                area2 += cross(cur, p);
                cur = p;
            }
            Seg::Quad(c, p) => {
                // Integral of x dy - y dx over a quadratic Bezier.
                area2 += (2.0 * cross(cur, c) + 2.0 * cross(c, p) + cross(cur, p)) / 3.0;
                cur = p;
            }
            Seg::Cubic(c1, c2, p) => {
                let p0 = cur;
                area2 += (6.0 * cross(p0, c1)
                    + 3.0 * cross(p0, c2)
                    + cross(p0, p)
                    + 3.0 * cross(c1, c2)
                    + 3.0 * cross(c1, p)
                    + 6.0 * cross(c2, p))
                    / 10.0;
                cur = p;
            }
            Seg::Close => {
                area2 += cross(cur, start);
                cur = start;
            }
        }
    }
    (area2 / 2.0).abs()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Styles {
    petal_path: String,
    petal: Vec<Seg>,
    petal_area: f64,
    categories: Vec<CategoryStyle>,
}

fn is_hex_color(s: &str) -> bool {
    s.len() == 7 && s.starts_with('#') && s[1..].chars().all(|c| c.is_ascii_hexdigit())
}

impl Styles {
    /// `@petal|<path>` plus `category_id|petal_index_or_center|fill_hex|serious_hex`.
    pub fn parse(text: &str) -> Result<Styles, GlyphError> {
        let mut petal_path = None;
        let mut categories: Vec<CategoryStyle> = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let err = |reason: String| GlyphError::Style { line: i + 1, reason };
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(path) = line.strip_prefix("@petal|") {
                petal_path = Some((i + 1, path.trim().to_string()));
                continue;
            }
            let f: Vec<&str> = line.split('|').map(str::trim).collect();
            if f.len() != 4 {
                return Err(err(format!("expected 4 fields, found {}", f.len())));
            }
            let slot = if f[1].eq_ignore_ascii_case("center") {
                Slot::Center
            } else {
                match f[1].parse::<u8>() {
                    Ok(k) if k < 12 => Slot::Petal(k),
                    _ => return Err(err(format!("petal index must be 0-11 or `center`, got `{}`", f[1]))),
                }
            };
            for color in [f[2], f[3]] {
                if !is_hex_color(color) {
                    return Err(err(format!("`{color}` is not a #RRGGBB color")));
                }
            }
            if categories.iter().any(|c| c.slot == slot) {
                return Err(err(format!("slot `{}` used twice", f[1])));
            }
            if categories.iter().any(|c| c.category_id == f[0]) {
                return Err(err(format!("category `{}` styled twice", f[0])));
            }
            categories.push(CategoryStyle {
                category_id: f[0].to_string(),
                slot,
                fill_color: f[2].to_uppercase(),
                serious_fill_color: f[3].to_uppercase(),
            });
        }
        let last = text.lines().count();
        let (path_line, petal_path) =
            petal_path.ok_or(GlyphError::Style { line: last, reason: "missing `@petal|<path>` line".into() })?;
        let petal = parse_path(&petal_path).map_err(|reason| GlyphError::Style { line: path_line, reason })?;
        let petal_area = path_area(&petal);
        if petal_area.is_nan() || petal_area <= 0.0 {
            return Err(GlyphError::Style { line: path_line, reason: "petal path encloses no area".into() });
        }
        if categories.len() != 13 || !categories.iter().any(|c| c.slot == Slot::Center) {
            return Err(GlyphError::Style {
                line: last,
                reason: "need 12 petal categories and one center category".into(),
            });
        }
        categories.sort_by_key(|c| c.slot);
        Ok(Styles { petal_path, petal, petal_area, categories })
    }

    pub fn builtin() -> Styles {
        Styles::parse(DEFAULT_STYLES).expect("bundled styles parse")
    }

    pub fn petal_path(&self) -> &str {
        &self.petal_path
    }

    /// Area of the unit petal.
    pub fn petal_area(&self) -> f64 {
        self.petal_area
    }

    /// Styles in slot order: petals 0..11, then the center.
    pub fn categories(&self) -> &[CategoryStyle] {
        &self.categories
    }

    pub fn get(&self, category_id: &str) -> Option<&CategoryStyle> {
        self.categories.iter().find(|c| c.category_id == category_id)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlyphSpec {
    pub profile: AdeProfile,
    pub reference_rate: f64,
    pub canvas_px: u32,
    pub caption: String,
}

/// Glyph width for a view of `n_glyphs` glyphs.
pub fn glyph_canvas_px(n_glyphs: usize) -> u32 {
    let per_row = (n_glyphs.max(1) as f64).sqrt().ceil() as u32;
    (520 / per_row).max(140)
}

/// Shared reference rate of a comparison view: the largest category rate
/// over all glyphs, or 1 when every rate is zero.
pub fn shared_reference_rate<'a>(profiles: impl IntoIterator<Item = &'a AdeProfile>) -> f64 {
    let max = profiles.into_iter().map(AdeProfile::max_rate).fold(0.0, f64::max);
    if max > 0.0 {
        max
    } else {
        1.0
    }
}

fn fmt3(v: f64) -> String {
    let s = format!("{v:.3}");
    if s == "-0.000" {
        "0.000".into()
    } else {
        s
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

struct Frame {
    cx: f64,
    cy: f64,
    r_max: f64,
}

impl Frame {
    fn new(canvas_px: u32) -> Frame {
        let c = f64::from(canvas_px);
        Frame { cx: c / 2.0, cy: c / 2.0, r_max: RADIUS_FRACTION * c }
    }
}

/// Petal path scaled by `s` and rotated clockwise by `index * 30` degrees.
fn petal_d(styles: &Styles, frame: &Frame, index: u8, s: f64) -> String {
    let theta = f64::from(index) * PI / 6.0;
    let (sin, cos) = theta.sin_cos();
    let map = |p: P| {
        let (x, y) = (p.0 * s, p.1 * s);
        format!("{},{}", fmt3(frame.cx + x * cos - y * sin), fmt3(frame.cy + x * sin + y * cos))
    };
    let mut d = String::new();
    for seg in &styles.petal {
        if !d.is_empty() {
            d.push(' ');
        }
        match *seg {
            Seg::Move(p) => d += &format!("M{}", map(p)),
            Seg::Line(p) => d += &format!("L{}", map(p)),
            Seg::Quad(c, p) => d += &format!("Q{} {}", map(c), map(p)),
            Seg::Cubic(c1, c2, p) => d += &format!("C{} {} {}", map(c1), map(c2), map(p)),
            Seg::Close => d.push('Z'),
        }
    }
    d
}

fn check_rate(v: f64) -> Result<f64, GlyphError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(GlyphError::NegativeRate(v))
    }
}

/// (total, serious) rate per style, in slot order.
fn rates(spec: &GlyphSpec, styles: &Styles) -> Result<Vec<(f64, f64)>, GlyphError> {
    if !(spec.reference_rate.is_finite() && spec.reference_rate > 0.0) {
        return Err(GlyphError::BadReference(spec.reference_rate));
    }
    for c in &spec.profile.categories {
        if styles.get(&c.category_id).is_none() {
            return Err(GlyphError::UnstyledCategory(c.category_id.clone()));
        }
    }
    let max = spec.profile.max_rate();
    if max > spec.reference_rate {
        return Err(GlyphError::ReferenceBelowMax { reference: spec.reference_rate, max });
    }
    styles
        .categories
        .iter()
        .map(|st| {
            let (t, s) = spec.profile.category(&st.category_id).map_or((0.0, 0.0), |c| (c.total_rate, c.serious_rate));
            Ok((check_rate(t)?, check_rate(s)?.min(t)))
        })
        .collect()
}

fn center_radius(styles: &Styles, frame: &Frame, rate_ratio: f64) -> f64 {
    frame.r_max * (styles.petal_area / PI * rate_ratio).sqrt()
}

fn open_svg(out: &mut String, spec: &GlyphSpec) {
    let w = spec.canvas_px;
    let h = spec.canvas_px + CAPTION_PX;
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w}" height="{h}" viewBox="0 0 {w} {h}">"#
    );
}

fn close_svg(out: &mut String, spec: &GlyphSpec) {
    let _ = writeln!(
        out,
        r##"<text x="{}" y="{}" text-anchor="middle" font-family="sans-serif" font-size="12" fill="#333333">{}</text>"##,
        fmt3(f64::from(spec.canvas_px) / 2.0),
        spec.canvas_px + CAPTION_PX - 5,
        escape(&spec.caption)
    );
    out.push_str("</svg>\n");
}

fn draw_glyph(out: &mut String, spec: &GlyphSpec, styles: &Styles) -> Result<(), GlyphError> {
    let frame = Frame::new(spec.canvas_px);
    let rates = rates(spec, styles)?;
    for (st, &(total, serious)) in styles.categories.iter().zip(&rates) {
        let cat = &st.category_id;
        let ratio = total / spec.reference_rate;
        match st.slot {
            Slot::Petal(k) => {
                if total == 0.0 {
                    let d = petal_d(styles, &frame, k, frame.r_max);
                    let _ = writeln!(
                        out,
                        r##"<path class="petal empty" data-category="{cat}" d="{d}" fill="none" stroke="#BDBDBD" stroke-width="{HAIRLINE}"/>"##
                    );
                    continue;
                }
                let s = frame.r_max * ratio.sqrt();
                let d = petal_d(styles, &frame, k, s);
                let _ = writeln!(
                    out,
                    r##"<path class="petal" data-category="{cat}" d="{d}" fill="{}" stroke="#555555" stroke-width="{HAIRLINE}"/>"##,
                    st.fill_color
                );
                if serious > 0.0 {
                    let d = petal_d(styles, &frame, k, s * (serious / total).sqrt());
                    let _ = writeln!(
                        out,
                        r#"<path class="petal serious" data-category="{cat}" d="{d}" fill="{}"/>"#,
                        st.serious_fill_color
                    );
                }
            }
            Slot::Center => {
                let (cx, cy) = (fmt3(frame.cx), fmt3(frame.cy));
                if total == 0.0 {
                    let r = fmt3(center_radius(styles, &frame, 1.0));
                    let _ = writeln!(
                        out,
                        r##"<circle class="center empty" data-category="{cat}" cx="{cx}" cy="{cy}" r="{r}" fill="none" stroke="#BDBDBD" stroke-width="{HAIRLINE}"/>"##
                    );
                    continue;
                }
                let r = center_radius(styles, &frame, ratio);
                let _ = writeln!(
                    out,
                    r##"<circle class="center" data-category="{cat}" cx="{cx}" cy="{cy}" r="{}" fill="{}" stroke="#555555" stroke-width="{HAIRLINE}"/>"##,
                    fmt3(r),
                    st.fill_color
                );
                if serious > 0.0 {
                    let _ = writeln!(
                        out,
                        r#"<circle class="center serious" data-category="{cat}" cx="{cx}" cy="{cy}" r="{}" fill="{}"/>"#,
                        fmt3(r * (serious / total).sqrt()),
                        st.serious_fill_color
                    );
                }
            }
        }
    }
    Ok(())
}

/// Render one glyph. Output is a pure function of its inputs.
pub fn render_flower_svg(spec: &GlyphSpec, styles: &Styles) -> Result<String, GlyphError> {
    let mut out = String::new();
    open_svg(&mut out, spec);
    draw_glyph(&mut out, spec, styles)?;
    close_svg(&mut out, spec);
    Ok(out)
}

/// Render `target` with the outline of `selected` drawn over it as a
/// wireframe. Both glyphs must share their reference rate.
pub fn render_overlay_svg(selected: &GlyphSpec, target: &GlyphSpec, styles: &Styles) -> Result<String, GlyphError> {
    if selected.reference_rate != target.reference_rate {
        return Err(GlyphError::MismatchedReference(selected.reference_rate, target.reference_rate));
    }
    let frame = Frame::new(target.canvas_px);
    let sel = rates(selected, styles)?;
    let mut out = String::new();
    open_svg(&mut out, target);
    draw_glyph(&mut out, target, styles)?;
    out.push_str("<g class=\"overlay\" fill=\"none\" stroke=\"#000000\">\n");
    for (st, &(total, _)) in styles.categories.iter().zip(&sel) {
        let cat = &st.category_id;
        let ratio = total / selected.reference_rate;
        let width = if total == 0.0 { HAIRLINE } else { "1.5" };
        match st.slot {
            Slot::Petal(k) => {
                let s = if total == 0.0 { frame.r_max } else { frame.r_max * ratio.sqrt() };
                let _ = writeln!(
                    out,
                    r#"<path class="wire" data-category="{cat}" d="{}" stroke-width="{width}"/>"#,
                    petal_d(styles, &frame, k, s)
                );
            }
            Slot::Center => {
                let r = center_radius(styles, &frame, if total == 0.0 { 1.0 } else { ratio });
                let _ = writeln!(
                    out,
                    r#"<circle class="wire" data-category="{cat}" cx="{}" cy="{}" r="{}" stroke-width="{width}"/>"#,
                    fmt3(frame.cx),
                    fmt3(frame.cy),
                    fmt3(r)
                );
            }
        }
    }
    out.push_str("</g>\n");
    close_svg(&mut out, target);
    Ok(out)
}

/// Table cell background: white at 0.05% or less, red at 5% or more, blended
/// on a log10 scale in between.
pub fn table_color(rate: f64) -> Result<String, GlyphError> {
    if rate.is_nan() || rate < 0.0 {
        return Err(GlyphError::NegativeRate(rate));
    }
    const LO: f64 = 0.0005;
    const HI: f64 = 0.05;
    let t = if rate <= LO {
        0.0
    } else if rate >= HI {
        1.0
    } else {
        (rate.log10() - LO.log10()) / (HI.log10() - LO.log10())
    };
    let gb = (255.0 * (1.0 - t)).round() as u8;
    Ok(format!("#FF{gb:02X}{gb:02X}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::normalization::CategoryRate;

    fn profile(rates: &[(&str, f64, f64)]) -> AdeProfile {
        let styles = Styles::builtin();
        let ids: Vec<String> = styles.categories().iter().map(|c| c.category_id.clone()).collect();
        let mut p = AdeProfile::zero(&ids);
        for &(id, t, s) in rates {
            *p.categories.iter_mut().find(|c| c.category_id == id).unwrap() =
                CategoryRate { category_id: id.into(), total_rate: t, serious_rate: s };
        }
        p
    }

    fn spec(p: AdeProfile, reference: f64) -> GlyphSpec {
        GlyphSpec { profile: p, reference_rate: reference, canvas_px: 200, caption: "A & B".into() }
    }

    #[test]
    fn builtin_styles() {
        let s = Styles::builtin();
        assert_eq!(s.petal_path(), "M0,0 Q0.42,-0.7 0,-1 Q-0.42,-0.7 0,0 Z");
        assert!((s.petal_area() - 0.28).abs() < 1e-12);
        assert_eq!(s.get("nervous").unwrap().slot, Slot::Petal(0));
        assert_eq!(s.get("urinary").unwrap().slot, Slot::Petal(6));
        assert_eq!(s.get("unclassified").unwrap().slot, Slot::Center);
    }

    #[test]
    fn style_errors() {
        let twice = DEFAULT_STYLES.replace("psychological|1|", "psychological|0|");
        assert!(matches!(Styles::parse(&twice), Err(GlyphError::Style { .. })));
        let no_path: String =
            DEFAULT_STYLES.lines().filter(|l| !l.starts_with("@petal")).collect::<Vec<_>>().join("\n");
        assert!(Styles::parse(&no_path).is_err());
    }

    #[test]
    fn zero_profile_is_all_hairlines() {
        let svg = render_flower_svg(&spec(profile(&[]), 1.0), &Styles::builtin()).unwrap();
        assert_eq!(svg.matches("class=\"petal empty\"").count(), 12);
        assert_eq!(svg.matches("class=\"center empty\"").count(), 1);
        assert!(!svg.contains("class=\"petal\""));
        assert!(svg.contains("A &amp; B"));
        assert!(svg.contains(r#"width="200" height="218""#));
    }

    #[test]
    fn orientation_and_scale() {
        let styles = Styles::builtin();
        let frame = Frame::new(200);
        assert_eq!(
            petal_d(&styles, &frame, 0, 10.0),
            "M100.000,100.000 Q104.200,93.000 100.000,90.000 Q95.800,93.000 100.000,100.000 Z"
        );
        // 90 degrees clockwise: the apex points right.
        assert!(petal_d(&styles, &frame, 3, 10.0).contains("110.000,100.000"));
        assert!(petal_d(&styles, &frame, 6, 10.0).contains("100.000,110.000"));
    }

    #[test]
    fn reference_rules() {
        let p = profile(&[("digestive", 0.5, 0.1)]);
        assert!(matches!(
            render_flower_svg(&spec(p.clone(), 0.4), &Styles::builtin()),
            Err(GlyphError::ReferenceBelowMax { .. })
        ));
        assert!(matches!(
            render_overlay_svg(&spec(p.clone(), 0.5), &spec(p, 0.6), &Styles::builtin()),
            Err(GlyphError::MismatchedReference(..))
        ));
    }

    #[test]
    fn table_colors() {
        assert_eq!(table_color(0.0).unwrap(), "#FFFFFF");
        assert_eq!(table_color(0.0005).unwrap(), "#FFFFFF");
        assert_eq!(table_color(0.05).unwrap(), "#FF0000");
        assert_eq!(table_color(2.0).unwrap(), "#FF0000");
        assert_eq!(table_color(0.005).unwrap(), "#FF8080");
        assert!(table_color(-0.1).is_err());
    }

    #[test]
    fn canvas_rule() {
        assert_eq!(glyph_canvas_px(1), 520);
        assert_eq!(glyph_canvas_px(2), 260);
        assert_eq!(glyph_canvas_px(4), 260);
        assert_eq!(glyph_canvas_px(5), 173);
        assert_eq!(glyph_canvas_px(16), 140);
    }

    #[test]
    fn path_area_matches_known_shapes() {
        let square = parse_path("M0,0 L2,0 L2,2 L0,2 Z").unwrap();
        assert!((path_area(&square) - 4.0).abs() < 1e-12);
        let cubic = parse_path("M0,0 C0,1 1,1 1,0 Z").unwrap();
        // Under x = 3t^2 - 2t^3, y = 3t(1 - t): 18 * B(3, 3) = 0.6.
        assert!((path_area(&cubic) - 0.6).abs() < 1e-12);
    }
}
