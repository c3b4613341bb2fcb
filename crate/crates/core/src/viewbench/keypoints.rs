use nalgebra::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::visibility::{ScenePoints, VisibleSet};
use crate::camera::{CameraIntrinsics, CameraPose, RelativePose};
use crate::error::{Error, Result};
use crate::raster::DepthMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Side of A relative to B given their horizontal image coordinates.
    pub fn of(u_a: f64, u_b: f64) -> Self {
        if u_a < u_b {
            Side::Left
        } else {
            Side::Right
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A co-visible scene point with its projections in both views.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Keypoint {
    pub index: u32,
    pub source: [f64; 2],
    pub target: [f64; 2],
    pub source_depth: f64,
    pub target_depth: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KeypointPair {
    pub a: Keypoint,
    pub b: Keypoint,
}

impl KeypointPair {
    /// Ground-truth side of A relative to B in the target view.
    pub fn target_side(&self) -> Side {
        Side::of(self.a.target[0], self.b.target[0])
    }

    pub fn source_side(&self) -> Side {
        Side::of(self.a.source[0], self.b.source[0])
    }
}

/// Projections of the co-visible points into both views. Points that fail to
/// project in front of either camera are skipped.
pub fn covisible_keypoints(
    points: &ScenePoints,
    covisible: &VisibleSet,
    source_pose: &CameraPose,
    target_pose: &CameraPose,
    k: &CameraIntrinsics,
) -> Vec<Keypoint> {
    covisible
        .indices()
        .iter()
        .filter_map(|&i| {
            let xs = source_pose.transform_point(points.get(i));
            let xt = target_pose.transform_point(points.get(i));
            let s = k.project(&xs).ok()?;
            let t = k.project(&xt).ok()?;
            Some(Keypoint {
                index: i,
                source: [s.x, s.y],
                target: [t.x, t.y],
                source_depth: xs.z,
                target_depth: xt.z,
            })
        })
        .collect()
}

/// Left-right order flips between the views and the target separation is at least `tau`.
pub fn is_flip_pair(a: &Keypoint, b: &Keypoint, tau: f64) -> bool {
    let ds = a.source[0] - b.source[0];
    let dt = a.target[0] - b.target[0];
    ds * dt < 0.0 && dt.abs() >= tau
}

/// Draw random candidate pairs until one satisfies `is_flip_pair`, giving up
/// after `10 * candidates.len()` draws.
pub fn select_keypoint_pair(candidates: &[Keypoint], tau: f64, seed: u64) -> Option<KeypointPair> {
    if candidates.len() < 2 {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = candidates.len();
    for _ in 0..10 * n {
        let i = rng.random_range(0..n);
        let mut j = rng.random_range(0..n - 1);
        if j >= i {
            j += 1;
        }
        let (a, b) = (&candidates[i], &candidates[j]);
        if is_flip_pair(a, b, tau) {
            return Some(KeypointPair { a: *a, b: *b });
        }
    }
    None
}

/// One uniformly drawn keypoint, for single-point questions.
pub fn pick_keypoint(candidates: &[Keypoint], seed: u64) -> Option<Keypoint> {
    if candidates.is_empty() {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Some(candidates[rng.random_range(0..candidates.len())])
}

/// Answer "is A left or right of B in the target view" from the source depth
/// map and relative pose alone.
pub fn geometry_oracle(
    pair: &KeypointPair,
    source_depth: &DepthMap,
    relative: &RelativePose,
    k: &CameraIntrinsics,
) -> Result<Side> {
    let st = relative.source_to_target();
    let warp = |kp: &Keypoint, name: char| -> Result<f64> {
        let p = Point2::new(kp.source[0], kp.source[1]);
        let d = source_depth.nearest(&p).ok_or(Error::InvalidDepthAtKeypoint(name))?;
        let x = st.transform_point(&k.unproject(&p, d)?);
        Ok(k.project(&x)?.x)
    };
    Ok(Side::of(warp(&pair.a, 'A')?, warp(&pair.b, 'B')?))
}
