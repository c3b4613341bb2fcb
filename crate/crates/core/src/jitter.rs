//! Smooth random displacement fields over a patch grid, used to perturb the
//! positions patches are fetched from.

use nalgebra::{Point2, Vector2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::camera::PatchGrid;
use crate::error::{Error, Result};
use crate::fetch::{crop_origin, crop_patch, Patch};
use crate::raster::{quantize, Image};

pub const DEFAULT_NEIGHBORHOOD: u32 = 9;
/// Pixel-baseline noise magnitude, as a fraction of the maximum displacement.
pub const PIXEL_NOISE_FRACTION: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JitterConfig {
    pub max_displacement: f64,
    pub neighborhood: u32,
    /// `None` for fields built from a supplied raw field.
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JitterField {
    pub rows: u32,
    pub cols: u32,
    pub displacements: Vec<Vector2<f64>>,
    pub config: JitterConfig,
}

impl JitterField {
    pub fn max_magnitude(&self) -> f64 {
        self.displacements.iter().map(|d| d.norm()).fold(0.0, f64::max)
    }

    pub fn matches(&self, grid: &PatchGrid) -> bool {
        self.rows == grid.rows() && self.cols == grid.cols()
    }
}

fn cell_rng(seed: u64, cell: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(cell as u64);
    rng
}

fn window_radius(neighborhood: u32) -> Result<i64> {
    let side = (neighborhood as f64).sqrt().round() as u32;
    if neighborhood == 0 || side * side != neighborhood || side % 2 == 0 {
        return Err(Error::InvalidNeighborhood(neighborhood));
    }
    Ok((side / 2) as i64)
}

/// Gaussian per-cell displacements, mean-filtered over the neighborhood,
/// normalized by the global maximum magnitude and scaled to `max_displacement`.
pub fn gen_jitter_field(grid: &PatchGrid, max_displacement: f64, neighborhood: u32, seed: u64) -> Result<JitterField> {
    let raw: Vec<Vector2<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let mut rng = cell_rng(seed, i);
            Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
        })
        .collect();
    let mut field = jitter_from_raw(grid, &raw, max_displacement, neighborhood)?;
    field.config.seed = Some(seed);
    Ok(field)
}

/// Smoothing, normalization and scaling applied to a caller-supplied raw field.
pub fn jitter_from_raw(
    grid: &PatchGrid,
    raw: &[Vector2<f64>],
    max_displacement: f64,
    neighborhood: u32,
) -> Result<JitterField> {
    if !(max_displacement >= 0.0) || !max_displacement.is_finite() {
        return Err(Error::NegativeScale(max_displacement));
    }
    let radius = window_radius(neighborhood)?;
    if raw.len() != grid.len() {
        return Err(Error::mismatch(format!("{} raw displacements", grid.len()), raw.len()));
    }
    let (rows, cols) = (grid.rows() as i64, grid.cols() as i64);
    // border cells average over the in-grid part of the window only
    let smoothed: Vec<Vector2<f64>> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let (r, c) = (i as i64 / cols, i as i64 % cols);
            let mut sum = Vector2::zeros();
            let mut n = 0.0;
            for rr in (r - radius).max(0)..=(r + radius).min(rows - 1) {
                for cc in (c - radius).max(0)..=(c + radius).min(cols - 1) {
                    sum += raw[(rr * cols + cc) as usize];
                    n += 1.0;
                }
            }
            sum / n
        })
        .collect();
    let peak = smoothed.iter().map(|d| d.norm()).fold(0.0, f64::max);
    let displacements = if max_displacement == 0.0 || peak == 0.0 {
        vec![Vector2::zeros(); grid.len()]
    } else {
        smoothed.iter().map(|d| d / peak * max_displacement).collect()
    };
    Ok(JitterField {
        rows: grid.rows(),
        cols: grid.cols(),
        displacements,
        config: JitterConfig {
            max_displacement,
            neighborhood,
            seed: None,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JitterMode {
    Token,
    /// Token jitter plus independent per-pixel perturbation inside each patch.
    PixelBaseline { noise_seed: u64 },
}

/// Fetch every grid patch from its displaced center.
pub fn apply_jitter(grid: &PatchGrid, field: &JitterField, image: &Image, mode: JitterMode) -> Result<Vec<Patch>> {
    if !field.matches(grid) {
        return Err(Error::mismatch(
            format!("{}x{} jitter field", grid.rows(), grid.cols()),
            format!("{}x{}", field.rows, field.cols),
        ));
    }
    if !grid.matches(image.width(), image.height()) {
        return Err(Error::mismatch(
            format!("{}x{} image", grid.image_width(), grid.image_height()),
            format!("{}x{}", image.width(), image.height()),
        ));
    }
    let l = grid.patch_size();
    let patches = grid
        .centers()
        .par_iter()
        .zip(field.displacements.par_iter())
        .enumerate()
        .map(|(cell, (c, d))| {
            let center = c + d;
            match mode {
                JitterMode::Token => crop_patch(image, &center, l),
                JitterMode::PixelBaseline { noise_seed } => {
                    let bound = PIXEL_NOISE_FRACTION * field.config.max_displacement;
                    perturbed_patch(image, &center, l, bound, &mut cell_rng(noise_seed, cell))
                }
            }
        })
        .collect();
    Ok(patches)
}

/// Crop window as in `crop_patch`, but each pixel is resampled bilinearly at
/// its center plus an offset with uniform direction and magnitude in `[0, bound]`.
fn perturbed_patch(image: &Image, center: &Point2<f64>, l: u32, bound: f64, rng: &mut ChaCha8Rng) -> Patch {
    if bound == 0.0 {
        return crop_patch(image, center, l);
    }
    let x0 = crop_origin(center.x, l);
    let y0 = crop_origin(center.y, l);
    let mut data = Vec::with_capacity((l * l * 3) as usize);
    for dy in 0..l as i64 {
        for dx in 0..l as i64 {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let radius = rng.random_range(0.0..=bound);
            let p = Point2::new(
                (x0 + dx) as f64 + 0.5 + radius * angle.cos(),
                (y0 + dy) as f64 + 0.5 + radius * angle.sin(),
            );
            let v = image.sample_bilinear(&p);
            data.extend(v.iter().map(|&c| quantize(c)));
        }
    }
    Patch {
        size: l,
        center: [center.x, center.y],
        origin: [x0, y0],
        data,
    }
}
