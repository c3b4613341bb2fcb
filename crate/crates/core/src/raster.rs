//! RGB images and metric depth maps.

use nalgebra::Point2;

use crate::error::{Error, Result};

pub type Rgb = [u8; 3];

/// 8-bit RGB raster, row-major, tightly packed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl Image {
    pub fn new(width: u32, height: u32, fill: Rgb) -> Self {
        let data = fill
            .iter()
            .copied()
            .cycle()
            .take(width as usize * height as usize * 3)
            .collect();
        Self {
            width,
            height,
            data,
        }
    }

    pub fn from_raw(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(Error::mismatch(
                format!("{expected} bytes"),
                format!("{} bytes", data.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> Rgb) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn as_raw(&self) -> &[u8] {
        &self.data
    }

    pub fn into_raw(self) -> Vec<u8> {
        self.data
    }

    fn offset(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32) -> Rgb {
        let o = self.offset(x, y);
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, value: Rgb) {
        let o = self.offset(x, y);
        self.data[o..o + 3].copy_from_slice(&value);
    }

    /// Pixel read with border replication for out-of-range indices.
    pub fn get_clamped(&self, x: i64, y: i64) -> Rgb {
        let x = x.clamp(0, self.width as i64 - 1) as u32;
        let y = y.clamp(0, self.height as i64 - 1) as u32;
        self.get(x, y)
    }

    /// Bilinear sample at a continuous coordinate (pixel centers at `+0.5`),
    /// replicating the border.
    pub fn sample_bilinear(&self, p: &Point2<f64>) -> [f64; 3] {
        let fx = p.x - 0.5;
        let fy = p.y - 0.5;
        let x0 = fx.floor();
        let y0 = fy.floor();
        let ax = fx - x0;
        let ay = fy - y0;
        let (x0, y0) = (x0 as i64, y0 as i64);
        let mut out = [0.0; 3];
        let taps = [
            (x0, y0, (1.0 - ax) * (1.0 - ay)),
            (x0 + 1, y0, ax * (1.0 - ay)),
            (x0, y0 + 1, (1.0 - ax) * ay),
            (x0 + 1, y0 + 1, ax * ay),
        ];
        for (x, y, w) in taps {
            if w == 0.0 {
                continue;
            }
            let px = self.get_clamped(x, y);
            for c in 0..3 {
                out[c] += w * px[c] as f64;
            }
        }
        out
    }

    pub fn sample_bilinear_u8(&self, p: &Point2<f64>) -> Rgb {
        let v = self.sample_bilinear(p);
        [quantize(v[0]), quantize(v[1]), quantize(v[2])]
    }
}

pub(crate) fn quantize(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// Per-pixel metric depth in meters.
///
/// A pixel is invalid when its depth is non-finite, `<= 0`, or masked out.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: u32,
    height: u32,
    data: Vec<f64>,
    mask: Option<Vec<bool>>,
}

impl DepthMap {
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Result<Self> {
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(Error::mismatch(
                format!("{expected} depth values"),
                data.len(),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
            mask: None,
        })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> f64) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
            mask: None,
        }
    }

    pub fn constant(width: u32, height: u32, depth: f64) -> Self {
        Self::from_fn(width, height, |_, _| depth)
    }

    /// Attach a validity mask (`true` = usable).
    pub fn with_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.data.len() {
            return Err(Error::mismatch(format!("{} mask entries", self.data.len()), mask.len()));
        }
        self.mask = Some(mask);
        Ok(self)
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn values(&self) -> &[f64] {
        &self.data
    }

    /// Raw stored value, regardless of validity.
    pub fn raw(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    /// Valid depth at integer pixel `(x, y)`.
    pub fn get(&self, x: u32, y: u32) -> Option<f64> {
        if x >= self.width || y >= self.height {
            return None;
        }
        let i = y as usize * self.width as usize + x as usize;
        let d = self.data[i];
        let masked = self.mask.as_ref().is_some_and(|m| !m[i]);
        (d.is_finite() && d > 0.0 && !masked).then_some(d)
    }

    /// Depth of the pixel containing continuous coordinate `p`.
    pub fn nearest(&self, p: &Point2<f64>) -> Option<f64> {
        if !(p.x >= 0.0 && p.y >= 0.0) {
            return None;
        }
        let (x, y) = (p.x.floor(), p.y.floor());
        if x >= self.width as f64 || y >= self.height as f64 {
            return None;
        }
        self.get(x as u32, y as u32)
    }

    pub fn valid_count(&self) -> usize {
        (0..self.height)
            .flat_map(|y| (0..self.width).map(move |x| (x, y)))
            .filter(|&(x, y)| self.get(x, y).is_some())
            .count()
    }
}
