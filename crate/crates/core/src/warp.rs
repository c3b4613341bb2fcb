//! Forward and backward warping on token grids, and the pixel-wise baselines.

use nalgebra::{Point2, Point3};
use rayon::prelude::*;

use crate::camera::{make_patch_grid, CameraIntrinsics, CameraPose, PatchGrid, RelativePose};
use crate::error::{Error, Result};
use crate::mesh::{transform_mesh_by, ProxyMesh};
use crate::raster::{DepthMap, Image, Rgb};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpDomain {
    TokenGrid,
    Pixel,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WarpDirection {
    Forward,
    Backward,
}

/// Per-cell mapped coordinates. Backward fields hold source coordinates for
/// target cells; forward fields hold target positions of source cells.
#[derive(Debug, Clone, PartialEq)]
pub struct WarpField {
    pub domain: WarpDomain,
    pub direction: WarpDirection,
    pub grid: PatchGrid,
    pub entries: Vec<Option<Point2<f64>>>,
}

impl WarpField {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_some()).count()
    }
}

/// Ray-cast arbitrary target-image coordinates against the source proxy mesh
/// and return the source-image coordinate of each hit.
///
/// `target_mesh` must already be expressed in the target camera frame.
pub(crate) fn backward_points(
    points: &[Point2<f64>],
    target_mesh: &ProxyMesh,
    target_to_source: &CameraPose,
    k: &CameraIntrinsics,
) -> Vec<Option<Point2<f64>>> {
    let origin = Point3::origin();
    points
        .par_iter()
        .map(|g| {
            let hit = target_mesh.cast_unchecked(&origin, &k.ray_direction(g))?;
            let in_source = target_to_source.transform_point(&hit.point);
            // π([u, v, w]) = (u / w, v / w)
            let h = k.matrix() * in_source.coords;
            if !(h.z > 0.0) {
                return None;
            }
            let p = Point2::new(h.x / h.z, h.y / h.z);
            (p.x.is_finite() && p.y.is_finite()).then_some(p)
        })
        .collect()
}

/// Backward warping for arbitrary target coordinates (not restricted to grid centers).
pub fn backward_warp_points(
    points: &[Point2<f64>],
    source_mesh: &ProxyMesh,
    relative: &RelativePose,
    k: &CameraIntrinsics,
) -> Vec<Option<Point2<f64>>> {
    let target_mesh = transform_mesh_by(source_mesh, &relative.source_to_target());
    backward_points(points, &target_mesh, &relative.target_to_source(), k)
}

fn check_grid(grid: &PatchGrid, width: u32, height: u32) -> Result<()> {
    if grid.matches(width, height) {
        Ok(())
    } else {
        Err(Error::mismatch(
            format!("{width}x{height}"),
            format!("{}x{} grid", grid.image_width(), grid.image_height()),
        ))
    }
}

/// For every target grid center, the source coordinate seen through it, or
/// `None` when the ray misses the proxy mesh.
pub fn backward_warp_grid(
    grid: &PatchGrid,
    source_mesh: &ProxyMesh,
    relative: &RelativePose,
    k: &CameraIntrinsics,
) -> Result<WarpField> {
    check_grid(grid, k.width, k.height)?;
    let entries = backward_warp_points(grid.centers(), source_mesh, relative, k);
    Ok(WarpField {
        domain: WarpDomain::TokenGrid,
        direction: WarpDirection::Backward,
        grid: grid.clone(),
        entries,
    })
}

/// Target-frame depth and image position of a source coordinate, reading
/// depth from the pixel containing it.
pub(crate) fn forward_point(
    p: &Point2<f64>,
    depth: &DepthMap,
    source_to_target: &CameraPose,
    k: &CameraIntrinsics,
) -> Option<(Point2<f64>, f64)> {
    let d = depth.nearest(p)?;
    if source_to_target.is_identity() {
        return Some((*p, d));
    }
    let x = source_to_target.transform_point(&k.unproject(p, d).ok()?);
    let q = k.project(&x).ok()?;
    Some((q, x.z))
}

/// Project each source grid center into the target view. Positions are
/// continuous and may fall outside the target image.
pub fn forward_warp_grid(
    grid: &PatchGrid,
    depth: &DepthMap,
    relative: &RelativePose,
    k: &CameraIntrinsics,
) -> Result<WarpField> {
    check_grid(grid, depth.width(), depth.height())?;
    let st = relative.source_to_target();
    let entries = grid
        .centers()
        .iter()
        .map(|c| forward_point(c, depth, &st, k).map(|(q, _)| q))
        .collect();
    Ok(WarpField {
        domain: WarpDomain::TokenGrid,
        direction: WarpDirection::Forward,
        grid: grid.clone(),
        entries,
    })
}

/// A warped image with its per-pixel validity (`false` = hole).
#[derive(Debug, Clone, PartialEq)]
pub struct WarpedImage {
    pub image: Image,
    pub valid: Vec<bool>,
}

impl WarpedImage {
    pub fn hole_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    /// Validity as a black/white image (white = valid).
    pub fn mask_image(&self) -> Image {
        let w = self.image.width();
        Image::from_fn(w, self.image.height(), |x, y| {
            if self.valid[(y * w + x) as usize] {
                [255; 3]
            } else {
                [0; 3]
            }
        })
    }
}

/// Backward warping at pixel resolution with bilinear color sampling.
pub fn pixel_backward_warp_image(
    source: &Image,
    source_mesh: &ProxyMesh,
    relative: &RelativePose,
    k: &CameraIntrinsics,
    fill: Rgb,
) -> Result<WarpedImage> {
    let grid = make_patch_grid(k.height, k.width, 1)?;
    check_grid(&grid, source.width(), source.height())?;
    let field = backward_warp_grid(&grid, source_mesh, relative, k)?;
    let mut image = Image::new(k.width, k.height, fill);
    let mut valid = vec![false; grid.len()];
    for (i, entry) in field.entries.iter().enumerate() {
        if let Some(g) = entry {
            let (row, col) = grid.cell(i);
            image.set(col, row, source.sample_bilinear_u8(g));
            valid[i] = true;
        }
    }
    Ok(WarpedImage { image, valid })
}

/// Forward splatting of every valid source pixel to its nearest target pixel,
/// resolving collisions with a z-buffer on target-frame depth. Equal depths
/// keep the lower source pixel index.
pub fn pixel_forward_warp_image(
    source: &Image,
    depth: &DepthMap,
    relative: &RelativePose,
    k: &CameraIntrinsics,
    fill: Rgb,
) -> Result<WarpedImage> {
    if source.width() != depth.width() || source.height() != depth.height() {
        return Err(Error::mismatch(
            format!("{}x{}", source.width(), source.height()),
            format!("{}x{} depth map", depth.width(), depth.height()),
        ));
    }
    let (w, h) = (source.width(), source.height());
    let st = relative.source_to_target();
    let splats: Vec<Option<(usize, f64)>> = (0..w as usize * h as usize)
        .into_par_iter()
        .map(|i| {
            let (x, y) = ((i % w as usize) as f64, (i / w as usize) as f64);
            let (q, z) = forward_point(&Point2::new(x + 0.5, y + 0.5), depth, &st, k)?;
            let (tx, ty) = (q.x.floor(), q.y.floor());
            if tx < 0.0 || ty < 0.0 || tx >= w as f64 || ty >= h as f64 {
                return None;
            }
            Some((ty as usize * w as usize + tx as usize, z))
        })
        .collect();

    let mut zbuf = vec![f64::INFINITY; splats.len()];
    let mut winner = vec![usize::MAX; splats.len()];
    for (src, splat) in splats.iter().enumerate() {
        if let Some((dst, z)) = *splat {
            if z < zbuf[dst] {
                zbuf[dst] = z;
                winner[dst] = src;
            }
        }
    }
    let mut image = Image::new(w, h, fill);
    let mut valid = vec![false; winner.len()];
    for (dst, &src) in winner.iter().enumerate() {
        if src != usize::MAX {
            let (sx, sy) = ((src % w as usize) as u32, (src / w as usize) as u32);
            image.set((dst % w as usize) as u32, (dst / w as usize) as u32, source.get(sx, sy));
            valid[dst] = true;
        }
    }
    Ok(WarpedImage { image, valid })
}
