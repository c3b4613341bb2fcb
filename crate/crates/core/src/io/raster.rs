use std::io::Cursor;
use std::path::Path;

use image::{DynamicImage, ImageFormat};

use super::{read_file, write_atomic};
use crate::error::{Error, Result};
use crate::raster::{DepthMap, Image};

/// Meters per unit of a 16-bit depth PNG (millimeters).
pub const DEFAULT_DEPTH_SCALE: f64 = 0.001;

fn decode(path: &Path) -> Result<DynamicImage> {
    let bytes = read_file(path)?;
    image::load_from_memory(&bytes).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })
}

/// 8-bit RGB image; other channel layouts are converted.
pub fn read_image(path: &Path) -> Result<Image> {
    let rgb = decode(path)?.into_rgb8();
    let (w, h) = rgb.dimensions();
    Image::from_raw(w, h, rgb.into_raw())
}

fn encode_png(path: &Path, img: DynamicImage) -> Result<Vec<u8>> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png).map_err(|source| Error::Image {
        path: path.into(),
        source,
    })?;
    Ok(buf.into_inner())
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let rgb = image::RgbImage::from_raw(img.width(), img.height(), img.as_raw().to_vec()).expect("buffer sized by Image");
    let bytes = encode_png(path, DynamicImage::ImageRgb8(rgb))?;
    write_atomic(path, |w| w.write_all(&bytes))
}

/// Single-channel 16-bit PNG; each value times `scale` gives meters, 0 is invalid.
pub fn read_depth_png(path: &Path, scale: f64) -> Result<DepthMap> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::parse(path, format!("depth scale must be positive, got {scale}")));
    }
    let DynamicImage::ImageLuma16(raw) = decode(path)? else {
        return Err(Error::parse(path, "expected a single-channel 16-bit PNG"));
    };
    let (w, h) = raw.dimensions();
    let data = raw.into_raw().into_iter().map(|v| v as f64 * scale).collect();
    DepthMap::new(w, h, data)
}

/// Inverse of `read_depth_png`. Invalid pixels become 0; depths that do not
/// fit in 16 bits are rejected.
pub fn write_depth_png(path: &Path, depth: &DepthMap, scale: f64) -> Result<()> {
    let mut data = Vec::with_capacity(depth.values().len());
    for y in 0..depth.height() {
        for x in 0..depth.width() {
            let v = match depth.get(x, y) {
                Some(d) => {
                    let q = (d / scale).round();
                    if !(1.0..=65535.0).contains(&q) {
                        return Err(Error::InvalidDepth(d));
                    }
                    q as u16
                }
                None => 0,
            };
            data.push(v);
        }
    }
    let img = image::ImageBuffer::<image::Luma<u16>, _>::from_raw(depth.width(), depth.height(), data)
        .expect("buffer sized by DepthMap");
    let bytes = encode_png(path, DynamicImage::ImageLuma16(img))?;
    write_atomic(path, |w| w.write_all(&bytes))
}

/// Grayscale PFM in meters. Rows are stored bottom-to-top as the format
/// requires; a negative scale marks little-endian data.
pub fn read_pfm(path: &Path) -> Result<DepthMap> {
    let bytes = read_file(path)?;
    let mut pos = 0;
    let mut token = || -> Result<String> {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::parse(path, "truncated PFM header"));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    match token()?.as_str() {
        "Pf" => {}
        "PF" => return Err(Error::parse(path, "color PFM is not a depth map")),
        other => return Err(Error::parse(path, format!("bad PFM magic {other:?}"))),
    }
    let num = |s: String| -> Result<f64> { s.parse().map_err(|_| Error::parse(path, format!("bad PFM header field {s:?}"))) };
    let w = num(token()?)?;
    let h = num(token()?)?;
    let scale = num(token()?)?;
    if w.fract() != 0.0 || h.fract() != 0.0 || w < 1.0 || h < 1.0 || scale == 0.0 {
        return Err(Error::parse(path, "bad PFM header"));
    }
    let (w, h) = (w as u32, h as u32);
    // exactly one whitespace byte separates the header from the data
    let start = pos + 1;
    let n = w as usize * h as usize;
    if bytes.len() < start + 4 * n {
        return Err(Error::parse(path, format!("PFM data truncated: need {} bytes", 4 * n)));
    }
    let little = scale < 0.0;
    let mut data = vec![0.0; n];
    for (i, chunk) in bytes[start..start + 4 * n].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let v = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, col) = (i / w as usize, i % w as usize);
        data[(h as usize - 1 - row) * w as usize + col] = v as f64;
    }
    DepthMap::new(w, h, data)
}

/// Little-endian PFM; invalid pixels are written as 0.
pub fn write_pfm(path: &Path, depth: &DepthMap) -> Result<()> {
    let (w, h) = (depth.width(), depth.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    for y in (0..h).rev() {
        for x in 0..w {
            out.extend_from_slice(&(depth.get(x, y).unwrap_or(0.0) as f32).to_le_bytes());
        }
    }
    write_atomic(path, |wr| wr.write_all(&out))
}

/// Depth from `.pfm` (meters) or 16-bit PNG (`scale` meters per unit), by extension.
pub fn read_depth(path: &Path, scale: f64) -> Result<DepthMap> {
    match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase).as_deref() {
        Some("pfm") => read_pfm(path),
        _ => read_depth_png(path, scale),
    }
}
