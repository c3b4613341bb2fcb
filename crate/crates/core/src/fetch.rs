//! Token fetching: turning a backward warp field into the set of source
//! patches placed on the target grid.

use nalgebra::Point2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::PatchGrid;
use crate::error::{Error, Result};
use crate::raster::Image;
use crate::warp::{WarpDirection, WarpDomain, WarpField};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FetchMode {
    Nearest,
    Adaptive,
    /// Forward-warped token positions; no fetching involved.
    ForwardPositions,
}

impl FetchMode {
    pub fn code(self) -> u8 {
        match self {
            FetchMode::Nearest => 0,
            FetchMode::Adaptive => 1,
            FetchMode::ForwardPositions => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(FetchMode::Nearest),
            1 => Some(FetchMode::Adaptive),
            2 => Some(FetchMode::ForwardPositions),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FetchEntry {
    /// Mapped coordinate in pixels; `None` marks an invalid cell.
    pub source: Option<[f32; 2]>,
    /// Row-major index of the nearest source grid cell (nearest mode only).
    pub nearest: Option<u32>,
}

impl FetchEntry {
    pub fn is_valid(&self) -> bool {
        self.source.is_some()
    }
}

/// Per-target-cell fetch plan, the artifact handed to token consumers.
#[derive(Debug, Clone, PartialEq)]
pub struct FetchMap {
    pub grid: PatchGrid,
    pub mode: FetchMode,
    pub entries: Vec<FetchEntry>,
}

impl FetchMap {
    pub fn valid_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_valid()).count()
    }

    /// Wrap a forward warp field as a map of target positions.
    pub fn from_forward(field: &WarpField) -> Self {
        let entries = field
            .entries
            .iter()
            .map(|e| FetchEntry {
                source: e.map(to_f32),
                nearest: None,
            })
            .collect();
        Self {
            grid: field.grid.clone(),
            mode: FetchMode::ForwardPositions,
            entries,
        }
    }
}

fn to_f32(p: Point2<f64>) -> [f32; 2] {
    [p.x as f32, p.y as f32]
}

/// An `l x l x 3` block of source pixels and the coordinate it is centered on.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    pub size: u32,
    /// Requested center in pixels.
    pub center: [f64; 2],
    /// Top-left pixel of the cropped window (may be negative).
    pub origin: [i64; 2],
    pub data: Vec<u8>,
}

impl Patch {
    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let o = ((y * self.size + x) * 3) as usize;
        [self.data[o], self.data[o + 1], self.data[o + 2]]
    }
}

/// Top-left corner of the `l`-wide window centered at `c`: `round(c - l/2)`,
/// with halves rounded up.
pub fn crop_origin(c: f64, l: u32) -> i64 {
    (c - l as f64 / 2.0 + 0.5).floor() as i64
}

/// Crop an `l x l` patch centered at `center`, replicating the image border.
pub fn crop_patch(image: &Image, center: &Point2<f64>, l: u32) -> Patch {
    let x0 = crop_origin(center.x, l);
    let y0 = crop_origin(center.y, l);
    let mut data = Vec::with_capacity((l * l * 3) as usize);
    for dy in 0..l as i64 {
        for dx in 0..l as i64 {
            data.extend_from_slice(&image.get_clamped(x0 + dx, y0 + dy));
        }
    }
    Patch {
        size: l,
        center: [center.x, center.y],
        origin: [x0, y0],
        data,
    }
}

/// Fixed non-overlapping patchification, row-major.
pub fn extract_fixed_patches(image: &Image, grid: &PatchGrid) -> Result<Vec<Patch>> {
    if !grid.matches(image.width(), image.height()) {
        return Err(Error::mismatch(
            format!("{}x{} image", grid.image_width(), grid.image_height()),
            format!("{}x{}", image.width(), image.height()),
        ));
    }
    Ok(grid
        .centers()
        .iter()
        .map(|c| crop_patch(image, c, grid.patch_size()))
        .collect())
}

/// Reassemble row-major patches (one per grid cell) into an image. Missing
/// patches are painted with `fill`.
pub fn tile_patches(grid: &PatchGrid, patches: &[Option<Patch>], fill: [u8; 3]) -> Image {
    let l = grid.patch_size();
    Image::from_fn(grid.image_width(), grid.image_height(), |x, y| {
        let cell = grid.index(y / l, x / l);
        match patches.get(cell) {
            Some(Some(p)) => p.get(x % l, y % l),
            _ => fill,
        }
    })
}

fn check_backward_token(field: &WarpField) -> Result<()> {
    if field.domain != WarpDomain::TokenGrid || field.direction != WarpDirection::Backward {
        return Err(Error::mismatch(
            "token-grid backward warp field",
            format!("{:?} {:?} field", field.domain, field.direction),
        ));
    }
    Ok(())
}

/// Row-major index of the source grid center closest to `p`; exact ties go
/// to the smaller index.
pub fn nearest_cell(grid: &PatchGrid, p: &Point2<f64>) -> u32 {
    let l = grid.patch_size() as f64;
    // the true argmin is within one cell of the per-axis estimate
    let guess = |v: f64, n: u32| ((v / l).ceil() - 1.0).clamp(0.0, n as f64 - 1.0) as i64;
    let (gc, gr) = (guess(p.x, grid.cols()), guess(p.y, grid.rows()));
    let mut best = (f64::INFINITY, u32::MAX);
    for r in (gr - 1).max(0)..=(gr + 1).min(grid.rows() as i64 - 1) {
        for c in (gc - 1).max(0)..=(gc + 1).min(grid.cols() as i64 - 1) {
            let i = grid.index(r as u32, c as u32);
            let q = grid.center(i);
            let d = (p.x - q.x).powi(2) + (p.y - q.y).powi(2);
            if d < best.0 {
                best = (d, i as u32);
            }
        }
    }
    best.1
}

pub fn nearest_fetch(field: &WarpField, source_grid: &PatchGrid) -> Result<FetchMap> {
    check_backward_token(field)?;
    let entries = field
        .entries
        .iter()
        .map(|e| match e {
            Some(p) => FetchEntry {
                source: Some(to_f32(*p)),
                nearest: Some(nearest_cell(source_grid, p)),
            },
            None => FetchEntry::default(),
        })
        .collect();
    Ok(FetchMap {
        grid: field.grid.clone(),
        mode: FetchMode::Nearest,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptiveFetch {
    pub map: FetchMap,
    /// One patch per target cell, `None` for invalid cells.
    pub patches: Vec<Option<Patch>>,
}

/// Re-patchify the source image so each valid target cell gets a fresh patch
/// centered at its backward-warped coordinate.
pub fn adaptive_fetch(field: &WarpField, source: &Image, patch_size: u32) -> Result<AdaptiveFetch> {
    check_backward_token(field)?;
    if field.grid.patch_size() != patch_size {
        return Err(Error::mismatch(
            format!("patch size {}", field.grid.patch_size()),
            patch_size,
        ));
    }
    let patches = field
        .entries
        .par_iter()
        .map(|e| e.map(|p| crop_patch(source, &p, patch_size)))
        .collect();
    let entries = field
        .entries
        .iter()
        .map(|e| FetchEntry {
            source: e.map(to_f32),
            nearest: None,
        })
        .collect();
    Ok(AdaptiveFetch {
        map: FetchMap {
            grid: field.grid.clone(),
            mode: FetchMode::Adaptive,
            entries,
        },
        patches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::make_patch_grid;
    use proptest::prelude::*;

    fn gradient(w: u32, h: u32) -> Image {
        Image::from_fn(w, h, |x, y| [(x * 2) as u8, (y * 2) as u8, ((x + y) % 256) as u8])
    }

    fn backward_field(grid: &PatchGrid, entries: Vec<Option<Point2<f64>>>) -> WarpField {
        WarpField {
            domain: WarpDomain::TokenGrid,
            direction: WarpDirection::Backward,
            grid: grid.clone(),
            entries,
        }
    }

    fn exhaustive_argmin(grid: &PatchGrid, p: &Point2<f64>) -> u32 {
        let mut best = (f64::INFINITY, 0);
        for (i, c) in grid.centers().iter().enumerate() {
            let d = (p.x - c.x).powi(2) + (p.y - c.y).powi(2);
            if d < best.0 {
                best = (d, i as u32);
            }
        }
        best.1
    }

    #[test]
    fn nearest_examples() {
        let grid = make_patch_grid(128, 128, 16).unwrap();
        assert_eq!(nearest_cell(&grid, &Point2::new(56.0, 40.0)), 19);
        assert_eq!(nearest_cell(&grid, &Point2::new(50.0, 40.0)), 19);
        assert_eq!(nearest_cell(&grid, &Point2::new(48.0, 40.0)), 18);
        assert_eq!(nearest_cell(&grid, &Point2::new(48.0, 48.0)), 18);
        assert_eq!(nearest_cell(&grid, &Point2::new(-100.0, 500.0)), 56);

        let field = backward_field(&grid, vec![Some(Point2::new(50.0, 40.0)); 64]);
        let map = nearest_fetch(&field, &grid).unwrap();
        assert!(map.entries.iter().all(|e| e.nearest == Some(19)));
        assert_eq!(map.mode, FetchMode::Nearest);
    }

    #[test]
    fn invalid_cells_have_no_index() {
        let grid = make_patch_grid(32, 32, 16).unwrap();
        let field = backward_field(&grid, vec![None, Some(Point2::new(8.0, 8.0)), None, None]);
        let map = nearest_fetch(&field, &grid).unwrap();
        assert_eq!(map.entries[0], FetchEntry::default());
        assert_eq!(map.entries[1].nearest, Some(0));
        assert_eq!(map.valid_count(), 1);
    }

    #[test]
    fn rejects_forward_fields() {
        let grid = make_patch_grid(32, 32, 16).unwrap();
        let mut field = backward_field(&grid, vec![None; 4]);
        field.direction = WarpDirection::Forward;
        assert!(nearest_fetch(&field, &grid).is_err());
        assert!(adaptive_fetch(&field, &gradient(32, 32), 16).is_err());
    }

    #[test]
    fn fixed_patches_tile_the_image() {
        let img = gradient(128, 128);
        let grid = make_patch_grid(128, 128, 16).unwrap();
        let patches = extract_fixed_patches(&img, &grid).unwrap();
        assert_eq!(patches.len(), 64);
        for y in 0..16 {
            for x in 0..16 {
                assert_eq!(patches[0].get(x, y), img.get(x, y));
            }
        }
        let tiled = tile_patches(&grid, &patches.into_iter().map(Some).collect::<Vec<_>>(), [0; 3]);
        assert_eq!(tiled, img);

        let small = gradient(16, 16);
        let one = extract_fixed_patches(&small, &make_patch_grid(16, 16, 16).unwrap()).unwrap();
        assert_eq!(one[0].data, small.as_raw());

        assert!(matches!(extract_fixed_patches(&small, &grid), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn crop_window_arithmetic() {
        assert_eq!(crop_origin(50.0, 16), 42);
        assert_eq!(crop_origin(40.0, 16), 32);
        assert_eq!(crop_origin(4.0, 16), -4);
        // half-pixel ties round up
        assert_eq!(crop_origin(8.5, 16), 1);
        assert_eq!(crop_origin(-0.5, 16), -8);
        assert_eq!(crop_origin(7.49, 16), -1);
    }

    #[test]
    fn adaptive_at_grid_centers_equals_fixed() {
        let img = gradient(128, 128);
        let grid = make_patch_grid(128, 128, 16).unwrap();
        let field = backward_field(&grid, grid.centers().iter().map(|c| Some(*c)).collect());
        let fetched = adaptive_fetch(&field, &img, 16).unwrap();
        let fixed = extract_fixed_patches(&img, &grid).unwrap();
        for (a, b) in fetched.patches.iter().zip(&fixed) {
            assert_eq!(a.as_ref().unwrap(), b);
        }
        assert_eq!(fetched.map.mode, FetchMode::Adaptive);
        assert!(adaptive_fetch(&field, &img, 8).is_err());
    }

    #[test]
    fn adaptive_border_replication_matches_padded_oracle() {
        let img = gradient(128, 128);
        let l = 16u32;
        // oracle: pad the image by l replicated pixels on every side, then crop plainly
        let pw = 128 + 2 * l;
        let padded = Image::from_fn(pw, pw, |x, y| img.get_clamped(x as i64 - l as i64, y as i64 - l as i64));
        let patch = crop_patch(&img, &Point2::new(4.0, 4.0), l);
        for y in 0..l {
            for x in 0..l {
                // window [-4, 12) maps to padded [12, 28)
                assert_eq!(patch.get(x, y), padded.get(x + 12, y + 12));
            }
        }
        assert_eq!(patch.get(0, 0), img.get(0, 0));
        assert_eq!(patch.get(5, 0), img.get(1, 0));
        assert_eq!(patch.get(4, 4), img.get(0, 0));
        assert_eq!(patch.get(15, 15), img.get(11, 11));
    }

    #[test]
    fn window_for_warped_coordinate() {
        let img = gradient(128, 128);
        let patch = crop_patch(&img, &Point2::new(50.0, 40.0), 16);
        assert_eq!(patch.get(0, 0), img.get(42, 32));
        assert_eq!(patch.get(15, 15), img.get(57, 47));
    }

    proptest! {
        #[test]
        fn nearest_equals_exhaustive(x in -40.0..170.0f64, y in -40.0..170.0f64, l in prop::sample::select(vec![1u32, 4, 8, 14, 16])) {
            let grid = make_patch_grid(112, 112, l).unwrap();
            let p = Point2::new(x, y);
            prop_assert_eq!(nearest_cell(&grid, &p), exhaustive_argmin(&grid, &p));
        }

        #[test]
        fn nearest_ties_resolve_to_smaller_index(r in 0u32..7, c in 0u32..7, dx in 0u32..2, dy in 0u32..2) {
            // half-grid coordinates between neighboring centers
            let grid = make_patch_grid(128, 128, 16).unwrap();
            let p = Point2::new((c * 16 + 8 + dx * 8) as f64, (r * 16 + 8 + dy * 8) as f64);
            prop_assert_eq!(nearest_cell(&grid, &p), grid.index(r, c) as u32);
        }
    }
}
