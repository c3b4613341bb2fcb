//! Planar RGB-D scenes with closed-form correspondences.

use nalgebra::{Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::{relative_pose, CameraIntrinsics, CameraPose, PoseDirection, RelativePose};
use crate::error::{Error, Result};
use crate::raster::{DepthMap, Image, Rgb};
use crate::viewbench::ScenePoints;

/// Checkerboard squares of `period` pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Texture {
    pub period: u32,
    pub light: Rgb,
    pub dark: Rgb,
}

impl Default for Texture {
    fn default() -> Self {
        Self {
            period: 16,
            light: [220, 220, 220],
            dark: [40, 40, 40],
        }
    }
}

impl Texture {
    /// Color at a continuous source coordinate on plane `plane`. Planes after
    /// the first get their channels rotated so regions stay distinguishable.
    pub fn color(&self, p: &Point2<f64>, plane: usize) -> Rgb {
        let period = self.period.max(1) as f64;
        let cell = (p.x / period).floor() as i64 + (p.y / period).floor() as i64;
        let mut c = if cell.rem_euclid(2) == 0 { self.light } else { self.dark };
        c.rotate_left(plane % 3);
        c
    }
}

/// A fronto-parallel plane `z = depth` in the source camera frame, covering
/// source columns `u_min <= u < u_max` across the full image height.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneRegion {
    pub depth: f64,
    pub u_min: f64,
    pub u_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub image: Image,
    pub depth: DepthMap,
    pub intrinsics: CameraIntrinsics,
    pub source_pose: CameraPose,
    pub target_pose: CameraPose,
    pub texture: Texture,
    pub planes: Vec<PlaneRegion>,
}

impl SyntheticScene {
    fn from_planes(
        k: &CameraIntrinsics,
        planes: Vec<PlaneRegion>,
        texture: Texture,
        target_pose: CameraPose,
    ) -> Self {
        let region = |u: f64| planes.iter().position(|p| u >= p.u_min && u < p.u_max);
        let image = Image::from_fn(k.width, k.height, |x, y| {
            let c = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
            region(c.x).map_or([0, 0, 0], |i| texture.color(&c, i))
        });
        let depth = DepthMap::from_fn(k.width, k.height, |x, _| {
            region(x as f64 + 0.5).map_or(0.0, |i| planes[i].depth)
        });
        Self {
            image,
            depth,
            intrinsics: *k,
            source_pose: CameraPose::identity(),
            target_pose,
            texture,
            planes,
        }
    }

    pub fn relative(&self) -> RelativePose {
        relative_pose(&self.source_pose, &self.target_pose, PoseDirection::SourceToTarget)
    }

    /// World-frame points unprojected from every `stride`-th source pixel center.
    pub fn world_points(&self, stride: u32) -> ScenePoints {
        let stride = stride.max(1);
        let to_world = self.source_pose.inverse();
        let mut pts = Vec::new();
        for y in (0..self.depth.height()).step_by(stride as usize) {
            for x in (0..self.depth.width()).step_by(stride as usize) {
                if let Some(d) = self.depth.get(x, y) {
                    let p = Point2::new(x as f64 + 0.5, y as f64 + 0.5);
                    if let Ok(xs) = self.intrinsics.unproject(&p, d) {
                        pts.push(to_world.transform_point(&xs));
                    }
                }
            }
        }
        ScenePoints(pts)
    }

    /// Closest plane hit along the target-view ray through `g`: source
    /// coordinate, plane index and target-frame depth.
    fn trace(&self, g: &Point2<f64>) -> Option<(Point2<f64>, usize, f64)> {
        let k = &self.intrinsics;
        let target_to_source = self.source_pose.compose(&self.target_pose.inverse());
        let origin = target_to_source.transform_point(&Point3::origin());
        let local = Vector3::new((g.x - k.cx) / k.fx, (g.y - k.cy) / k.fy, 1.0);
        let dir = target_to_source.transform_vector(&local);
        let mut best: Option<(f64, Point2<f64>, usize)> = None;
        for (i, plane) in self.planes.iter().enumerate() {
            if dir.z == 0.0 {
                continue;
            }
            let t = (plane.depth - origin.z) / dir.z;
            if !(t > 0.0) || best.is_some_and(|(bt, _, _)| bt <= t) {
                continue;
            }
            let hit = origin + dir * t;
            let u = k.fx * hit.x / plane.depth + k.cx;
            let v = k.fy * hit.y / plane.depth + k.cy;
            if u >= plane.u_min && u < plane.u_max && v >= 0.0 && v < k.height as f64 {
                best = Some((t, Point2::new(u, v), i));
            }
        }
        // the ray direction has unit z in the target frame, so t is the target depth
        best.map(|(t, p, i)| (p, i, t))
    }

    /// Target image and depth rendered analytically; pixels whose ray misses
    /// every plane are black with depth 0.
    pub fn render_target(&self) -> (Image, DepthMap) {
        let k = &self.intrinsics;
        let mut depth = vec![0.0; (k.width * k.height) as usize];
        let image = Image::from_fn(k.width, k.height, |x, y| {
            match self.trace(&Point2::new(x as f64 + 0.5, y as f64 + 0.5)) {
                Some((p, plane, t)) => {
                    depth[(y * k.width + x) as usize] = t;
                    self.texture.color(&p, plane)
                }
                None => [0, 0, 0],
            }
        });
        let depth = DepthMap::new(k.width, k.height, depth).expect("sized to the intrinsics");
        (image, depth)
    }
}

fn check_depth(z: f64) -> Result<()> {
    if z > 0.0 && z.is_finite() {
        Ok(())
    } else {
        Err(Error::NonPositiveDepth(z))
    }
}

/// A single plane at depth `z` filling the source view.
pub fn gen_plane_scene(k: &CameraIntrinsics, z: f64, texture: Texture, target_pose: CameraPose) -> Result<SyntheticScene> {
    check_depth(z)?;
    let plane = PlaneRegion {
        depth: z,
        u_min: 0.0,
        u_max: k.width as f64,
    };
    Ok(SyntheticScene::from_planes(k, vec![plane], texture, target_pose))
}

/// Far plane on columns `< split`, near plane on columns `>= split`.
pub fn gen_two_plane_scene(
    k: &CameraIntrinsics,
    z_near: f64,
    z_far: f64,
    split: u32,
    texture: Texture,
    target_pose: CameraPose,
) -> Result<SyntheticScene> {
    check_depth(z_near)?;
    check_depth(z_far)?;
    if z_near >= z_far {
        return Err(Error::InvalidDepth(z_near));
    }
    let split = split.min(k.width) as f64;
    let planes = vec![
        PlaneRegion {
            depth: z_far,
            u_min: 0.0,
            u_max: split,
        },
        PlaneRegion {
            depth: z_near,
            u_min: split,
            u_max: k.width as f64,
        },
    ];
    Ok(SyntheticScene::from_planes(k, planes, texture, target_pose))
}

/// Exact source coordinate for target coordinate `g`, or `None` when the ray
/// misses every plane or lands outside the source image.
pub fn analytic_backward_oracle(scene: &SyntheticScene, g: &Point2<f64>) -> Result<Option<Point2<f64>>> {
    if scene.planes.is_empty() {
        return Err(Error::NonPlanarScene);
    }
    Ok(scene.trace(g).map(|(p, _, _)| p).filter(|p| scene.intrinsics.contains(p)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camera::make_patch_grid;
    use crate::camera::tests::k0;
    use crate::mesh::{build_mesh, MeshOptions};
    use crate::viewbench::{geometry_oracle, Keypoint, KeypointPair, Side};
    use crate::warp::backward_warp_grid;
    use nalgebra::{Rotation3, Vector3};

    fn shift(tx: f64) -> CameraPose {
        CameraPose::from_translation(Vector3::new(-tx, 0.0, 0.0))
    }

    #[test]
    fn plane_scene_examples() {
        let k = k0();
        let s = gen_plane_scene(&k, 2.0, Texture::default(), CameraPose::identity()).unwrap();
        assert!(s.depth.values().iter().all(|&d| d == 2.0));
        assert_ne!(s.image.get(0, 0), s.image.get(16, 0));
        assert_eq!(s.image.get(0, 0), s.image.get(15, 15));
        let mesh = build_mesh(&s.depth, &k, &MeshOptions::default()).unwrap();
        assert!(mesh.vertices().iter().all(|v| (v.z - 2.0).abs() < 1e-9));
        assert!(gen_plane_scene(&k, 0.0, Texture::default(), CameraPose::identity()).is_err());
    }

    #[test]
    fn two_plane_layout() {
        let k = k0();
        let s = gen_two_plane_scene(&k, 1.0, 4.0, 65, Texture::default(), shift(0.2)).unwrap();
        let mut values: Vec<f64> = s.depth.values().to_vec();
        values.sort_by(f64::total_cmp);
        values.dedup();
        assert_eq!(values, vec![1.0, 4.0]);
        assert_eq!(s.depth.raw(64, 10), 4.0);
        assert_eq!(s.depth.raw(65, 10), 1.0);
        assert!(gen_two_plane_scene(&k, 4.0, 1.0, 65, Texture::default(), shift(0.2)).is_err());
    }

    #[test]
    fn two_plane_flip() {
        let k = k0();
        let s = gen_two_plane_scene(&k, 1.0, 4.0, 65, Texture::default(), shift(0.2)).unwrap();
        let kp = |u: f64, d: f64| Keypoint { index: 0, source: [u, 64.0], target: [0.0; 2], source_depth: d, target_depth: 0.0 };
        let pair = KeypointPair { a: kp(70.0, 1.0), b: kp(60.0, 4.0) };
        assert_eq!(pair.source_side(), Side::Right);
        assert_eq!(geometry_oracle(&pair, &s.depth, &s.relative(), &k).unwrap(), Side::Left);
    }

    #[test]
    fn oracle_examples() {
        let k = k0();
        let s = gen_plane_scene(&k, 2.0, Texture::default(), shift(0.2)).unwrap();
        let p = analytic_backward_oracle(&s, &Point2::new(40.0, 40.0)).unwrap().unwrap();
        assert!((p - Point2::new(50.0, 40.0)).norm() < 1e-12);
        // pulled in from beyond the right edge
        assert_eq!(analytic_backward_oracle(&s, &Point2::new(120.0, 40.0)).unwrap(), None);

        let id = gen_plane_scene(&k, 2.0, Texture::default(), CameraPose::identity()).unwrap();
        for g in [Point2::new(0.5, 0.5), Point2::new(77.3, 12.9)] {
            let p = analytic_backward_oracle(&id, &g).unwrap().unwrap();
            assert!((p - g).norm() < 1e-12);
        }

        let mut empty = id.clone();
        empty.planes.clear();
        assert!(matches!(analytic_backward_oracle(&empty, &Point2::new(1.0, 1.0)), Err(Error::NonPlanarScene)));
    }

    #[test]
    fn oracle_agrees_with_engine() {
        let k = k0();
        let pose = CameraPose::new(
            *Rotation3::from_euler_angles(0.05, -0.08, 0.03).matrix(),
            Vector3::new(0.1, -0.05, 0.2),
        )
        .unwrap();
        let s = gen_plane_scene(&k, 2.0, Texture::default(), pose).unwrap();
        let mesh = build_mesh(&s.depth, &k, &MeshOptions::default()).unwrap();
        let grid = make_patch_grid(128, 128, 16).unwrap();
        let field = backward_warp_grid(&grid, &mesh, &s.relative(), &k).unwrap();
        let mut compared = 0;
        for (g, e) in grid.centers().iter().zip(&field.entries) {
            let o = analytic_backward_oracle(&s, g).unwrap();
            if let Some(e) = e {
                let o = o.expect("engine-valid cells are oracle-valid");
                assert!((e - o).norm() < 1e-2);
                compared += 1;
            }
        }
        assert!(compared > 32);
    }

    #[test]
    fn rendered_target_matches_shifted_texture() {
        let k = k0();
        let s = gen_plane_scene(&k, 2.0, Texture::default(), shift(0.2)).unwrap();
        let (img, depth) = s.render_target();
        // shift of fx * t / z = 10 px
        for y in 0..128 {
            for x in 0..118 {
                assert_eq!(img.get(x, y), s.image.get(x + 10, y));
                assert_eq!(depth.get(x, y), Some(2.0));
            }
            assert_eq!(depth.get(120, y), None);
        }
    }

    #[test]
    fn reproducible() {
        let k = k0();
        let a = gen_two_plane_scene(&k, 1.0, 3.0, 40, Texture::default(), shift(0.1)).unwrap();
        let b = gen_two_plane_scene(&k, 1.0, 3.0, 40, Texture::default(), shift(0.1)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.world_points(4).len(), 32 * 32);
    }
}
