use nalgebra::Point3;
use rayon::prelude::*;

use crate::camera::{CameraIntrinsics, CameraPose};
use crate::raster::DepthMap;

/// Default slack on the depth test, in meters.
pub const DEFAULT_OCCLUSION_TOLERANCE: f64 = 0.02;

/// World-frame scene points.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenePoints(pub Vec<Point3<f64>>);

impl ScenePoints {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, index: u32) -> &Point3<f64> {
        &self.0[index as usize]
    }
}

/// Sorted, duplicate-free indices into a `ScenePoints`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct VisibleSet(Vec<u32>);

impl VisibleSet {
    pub fn from_indices(mut indices: Vec<u32>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn indices(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, index: u32) -> bool {
        self.0.binary_search(&index).is_ok()
    }

    pub fn intersection(&self, other: &VisibleSet) -> VisibleSet {
        VisibleSet(self.0.iter().copied().filter(|i| other.contains(*i)).collect())
    }

    pub fn intersection_len(&self, other: &VisibleSet) -> usize {
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    }
}

/// Points in front of the camera, projecting inside the image, and not
/// behind the depth map: `0 < z < d(u, v) + tolerance`.
pub fn visible_set(
    points: &ScenePoints,
    pose: &CameraPose,
    k: &CameraIntrinsics,
    depth: &DepthMap,
    tolerance: f64,
) -> VisibleSet {
    let indices = points
        .0
        .par_iter()
        .enumerate()
        .filter_map(|(i, p)| {
            let x = pose.transform_point(p);
            let uv = k.project(&x).ok()?;
            if !k.contains(&uv) {
                return None;
            }
            let d = depth.nearest(&uv)?;
            (x.z < d + tolerance).then_some(i as u32)
        })
        .collect();
    VisibleSet(indices)
}

/// Intersection over union of two visible sets; 0 when both are empty.
pub fn overlap_ratio(a: &VisibleSet, b: &VisibleSet) -> f64 {
    let inter = a.intersection_len(b);
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}
