use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::font;
use crate::error::{Error, Result};
use crate::raster::{Image, Rgb};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MarkerKind {
    /// An uppercase letter drawn on a filled disc.
    Label(char),
    Triangle,
    Star,
    Circle,
}

impl From<MarkerKind> for String {
    fn from(k: MarkerKind) -> String {
        match k {
            MarkerKind::Label(c) => format!("label-{c}"),
            MarkerKind::Triangle => "triangle".into(),
            MarkerKind::Star => "star".into(),
            MarkerKind::Circle => "circle".into(),
        }
    }
}

impl TryFrom<String> for MarkerKind {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, String> {
        match s.as_str() {
            "triangle" => Ok(MarkerKind::Triangle),
            "star" => Ok(MarkerKind::Star),
            "circle" => Ok(MarkerKind::Circle),
            _ => {
                let mut chars = s.strip_prefix("label-").map(|r| r.chars()).ok_or_else(|| format!("unknown marker kind {s:?}"))?;
                match (chars.next(), chars.next()) {
                    (Some(c), None) if font::glyph(c).is_some() => Ok(MarkerKind::Label(c)),
                    _ => Err(format!("unsupported label in {s:?}")),
                }
            }
        }
    }
}

/// A marker centered at `(x, y)`; `size` is the outer radius in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub kind: MarkerKind,
    pub x: f64,
    pub y: f64,
    pub size: f64,
    pub color: Rgb,
}

impl Marker {
    pub fn new(kind: MarkerKind, x: f64, y: f64, size: f64, color: Rgb) -> Self {
        Self { kind, x, y, size, color }
    }

    fn glyph_scale(&self) -> u32 {
        ((self.size / 4.3).floor() as u32).max(1)
    }

    fn glyph_origin(&self) -> (i64, i64) {
        let s = self.glyph_scale() as f64;
        (
            (self.x - 2.5 * s + 0.5).floor() as i64,
            (self.y - 3.5 * s + 0.5).floor() as i64,
        )
    }

    /// Pixel box `[x0, x1) x [y0, y1)` containing every pixel the marker can touch.
    pub fn bounds(&self) -> (i64, i64, i64, i64) {
        let mut b = (
            (self.x - self.size).floor() as i64,
            (self.y - self.size).floor() as i64,
            (self.x + self.size).ceil() as i64 + 1,
            (self.y + self.size).ceil() as i64 + 1,
        );
        if let MarkerKind::Label(_) = self.kind {
            let s = self.glyph_scale() as i64;
            let (gx, gy) = self.glyph_origin();
            b = (b.0.min(gx), b.1.min(gy), b.2.max(gx + 5 * s), b.3.max(gy + 7 * s));
        }
        b
    }

    fn polygon(&self) -> Vec<(f64, f64)> {
        let vertex = |r: f64, a: f64| (self.x + r * a.cos(), self.y + r * a.sin());
        match self.kind {
            MarkerKind::Triangle => (0..3)
                .map(|i| vertex(self.size, -FRAC_PI_2 + i as f64 * 2.0 * PI / 3.0))
                .collect(),
            MarkerKind::Star => (0..10)
                .map(|i| {
                    let r = if i % 2 == 0 { self.size } else { 0.4 * self.size };
                    vertex(r, -FRAC_PI_2 + i as f64 * PI / 5.0)
                })
                .collect(),
            _ => Vec::new(),
        }
    }

    fn covers(&self, px: f64, py: f64, polygon: &[(f64, f64)]) -> bool {
        match self.kind {
            MarkerKind::Circle | MarkerKind::Label(_) => {
                (px - self.x).powi(2) + (py - self.y).powi(2) <= self.size * self.size
            }
            MarkerKind::Triangle | MarkerKind::Star => point_in_polygon(px, py, polygon),
        }
    }

    fn draw(&self, img: &mut Image) {
        let (x0, y0, x1, y1) = self.bounds();
        let (w, h) = (img.width() as i64, img.height() as i64);
        let polygon = self.polygon();
        for y in y0.max(0)..y1.min(h) {
            for x in x0.max(0)..x1.min(w) {
                if self.covers(x as f64 + 0.5, y as f64 + 0.5, &polygon) {
                    img.set(x as u32, y as u32, self.color);
                }
            }
        }
        if let MarkerKind::Label(c) = self.kind {
            let Some(rows) = font::glyph(c) else { return };
            let ink = if luma(self.color) > 160.0 { [0, 0, 0] } else { [255, 255, 255] };
            let s = self.glyph_scale();
            let (gx, gy) = self.glyph_origin();
            for row in 0..font::GLYPH_HEIGHT * s {
                for col in 0..font::GLYPH_WIDTH * s {
                    let (x, y) = (gx + col as i64, gy + row as i64);
                    if x >= 0 && y >= 0 && x < w && y < h && font::is_set(rows, col / s, row / s) {
                        img.set(x as u32, y as u32, ink);
                    }
                }
            }
        }
    }
}

fn luma(c: Rgb) -> f64 {
    0.299 * c[0] as f64 + 0.587 * c[1] as f64 + 0.114 * c[2] as f64
}

/// Even-odd rule.
fn point_in_polygon(px: f64, py: f64, poly: &[(f64, f64)]) -> bool {
    let mut inside = false;
    let mut j = poly.len() - 1;
    for i in 0..poly.len() {
        let (xi, yi) = poly[i];
        let (xj, yj) = poly[j];
        if (yi > py) != (yj > py) && px < (xj - xi) * (py - yi) / (yj - yi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// Draw markers, in order, onto a copy of `image`.
pub fn render_markers(image: &Image, markers: &[Marker]) -> Result<Image> {
    for m in markers {
        if !(m.x >= 0.0 && m.y >= 0.0 && m.x < image.width() as f64 && m.y < image.height() as f64) {
            return Err(Error::MarkerOutOfBounds {
                x: m.x,
                y: m.y,
                width: image.width(),
                height: image.height(),
            });
        }
    }
    let mut out = image.clone();
    for m in markers {
        m.draw(&mut out);
    }
    Ok(out)
}
