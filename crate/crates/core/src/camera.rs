//! Pinhole cameras, rigid poses and patch grids.
//!
//! Pixel coordinates are continuous: the center of integer pixel `(u, v)` sits
//! at `(u + 0.5, v + 0.5)`. Poses are always stored world-to-camera.

use nalgebra::{Matrix3, Matrix4, Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance used when validating rotation matrices on construction.
pub const ROTATION_TOLERANCE: f64 = 1e-6;

/// Zero-skew pinhole intrinsics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        if ![fx, fy, cx, cy].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidIntrinsics("non-finite parameter".into()));
        }
        if fx <= 0.0 || fy <= 0.0 {
            return Err(Error::InvalidIntrinsics(format!(
                "focal lengths must be positive (fx={fx}, fy={fy})"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidIntrinsics(format!(
                "empty image size {width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    /// 3x3 calibration matrix.
    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.fx, 0.0, self.cx, //
            0.0, self.fy, self.cy, //
            0.0, 0.0, 1.0,
        )
    }

    pub fn project(&self, x: &Point3<f64>) -> Result<Point2<f64>> {
        if !(x.z > 0.0) {
            return Err(Error::NonPositiveDepth(x.z));
        }
        Ok(Point2::new(
            self.fx * x.x / x.z + self.cx,
            self.fy * x.y / x.z + self.cy,
        ))
    }

    pub fn unproject(&self, p: &Point2<f64>, depth: f64) -> Result<Point3<f64>> {
        if !(depth.is_finite() && depth > 0.0) {
            return Err(Error::InvalidDepth(depth));
        }
        Ok(Point3::new(
            (p.x - self.cx) / self.fx * depth,
            (p.y - self.cy) / self.fy * depth,
            depth,
        ))
    }

    /// Unit-length viewing ray through pixel coordinate `p`, in camera frame.
    pub fn ray_direction(&self, p: &Point2<f64>) -> Vector3<f64> {
        Vector3::new((p.x - self.cx) / self.fx, (p.y - self.cy) / self.fy, 1.0).normalize()
    }

    /// Whether `p` falls inside the continuous image rectangle `[0,W) x [0,H)`.
    pub fn contains(&self, p: &Point2<f64>) -> bool {
        p.x >= 0.0 && p.y >= 0.0 && p.x < self.width as f64 && p.y < self.height as f64
    }
}

/// `(fx * x / z + cx, fy * y / z + cy)`; no bounds clamping.
pub fn project_point(x: &Point3<f64>, k: &CameraIntrinsics) -> Result<Point2<f64>> {
    k.project(x)
}

pub fn unproject_pixel(p: &Point2<f64>, depth: f64, k: &CameraIntrinsics) -> Result<Point3<f64>> {
    k.unproject(p, depth)
}

/// Rigid world-to-camera transform `x_cam = R * x_world + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraPose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

impl CameraPose {
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let deviation = rotation_deviation(&rotation);
        if !(deviation <= ROTATION_TOLERANCE) || !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::NonRigidPose(deviation));
        }
        Ok(Self {
            rotation,
            translation,
        })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Pose from a homogeneous 4x4 world-to-camera matrix.
    pub fn from_matrix(m: &Matrix4<f64>) -> Result<Self> {
        let last = m.fixed_view::<1, 4>(3, 0);
        if (last[0].abs() + last[1].abs() + last[2].abs() + (last[3] - 1.0).abs()) > 1e-9 {
            return Err(Error::NonRigidPose(f64::NAN));
        }
        Self::new(
            m.fixed_view::<3, 3>(0, 0).into_owned(),
            m.fixed_view::<3, 1>(0, 3).into_owned(),
        )
    }

    /// Pose from a camera-to-world matrix (the common RGB-D dataset convention).
    pub fn from_camera_to_world(m: &Matrix4<f64>) -> Result<Self> {
        Ok(Self::from_matrix(m)?.inverse())
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotation);
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        Self {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// `self ∘ other`: apply `other` first, then `self`.
    pub fn compose(&self, other: &CameraPose) -> Self {
        Self {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }

    pub fn is_identity(&self) -> bool {
        self.rotation == Matrix3::identity() && self.translation == Vector3::zeros()
    }
}

/// Largest absolute entry of `RᵀR − I`, or the determinant error if larger.
pub(crate) fn rotation_deviation(r: &Matrix3<f64>) -> f64 {
    let ortho = (r.transpose() * r - Matrix3::identity()).amax();
    let det = (r.determinant() - 1.0).abs();
    ortho.max(det)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoseDirection {
    SourceToTarget,
    TargetToSource,
}

/// A rigid transform between two camera frames, tagged with its direction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativePose {
    transform: CameraPose,
    direction: PoseDirection,
}

impl RelativePose {
    pub fn new(transform: CameraPose, direction: PoseDirection) -> Self {
        Self {
            transform,
            direction,
        }
    }

    pub fn identity() -> Self {
        Self::new(CameraPose::identity(), PoseDirection::SourceToTarget)
    }

    pub fn direction(&self) -> PoseDirection {
        self.direction
    }

    pub fn transform(&self) -> &CameraPose {
        &self.transform
    }

    pub fn inverse(&self) -> Self {
        let direction = match self.direction {
            PoseDirection::SourceToTarget => PoseDirection::TargetToSource,
            PoseDirection::TargetToSource => PoseDirection::SourceToTarget,
        };
        Self::new(self.transform.inverse(), direction)
    }

    /// The transform mapping source-camera coordinates to target-camera coordinates.
    pub fn source_to_target(&self) -> CameraPose {
        match self.direction {
            PoseDirection::SourceToTarget => self.transform,
            PoseDirection::TargetToSource => self.transform.inverse(),
        }
    }

    pub fn target_to_source(&self) -> CameraPose {
        match self.direction {
            PoseDirection::SourceToTarget => self.transform.inverse(),
            PoseDirection::TargetToSource => self.transform,
        }
    }

    pub fn apply(&self, p: &Point3<f64>) -> Point3<f64> {
        self.transform.transform_point(p)
    }
}

/// `Π_{S→T} = Π_T Π_S⁻¹` or `Π_{T→S} = Π_S Π_T⁻¹` depending on `direction`.
pub fn relative_pose(
    source: &CameraPose,
    target: &CameraPose,
    direction: PoseDirection,
) -> RelativePose {
    let transform = match direction {
        PoseDirection::SourceToTarget => target.compose(&source.inverse()),
        PoseDirection::TargetToSource => source.compose(&target.inverse()),
    };
    RelativePose::new(transform, direction)
}

/// Regular non-overlapping grid of `l x l` patches, indexed row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    patch_size: u32,
    rows: u32,
    cols: u32,
    centers: Vec<Point2<f64>>,
}

impl PatchGrid {
    pub fn patch_size(&self) -> u32 {
        self.patch_size
    }

    pub fn rows(&self) -> u32 {
        self.rows
    }

    pub fn cols(&self) -> u32 {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn image_width(&self) -> u32 {
        self.cols * self.patch_size
    }

    pub fn image_height(&self) -> u32 {
        self.rows * self.patch_size
    }

    pub fn centers(&self) -> &[Point2<f64>] {
        &self.centers
    }

    pub fn center(&self, index: usize) -> Point2<f64> {
        self.centers[index]
    }

    pub fn index(&self, row: u32, col: u32) -> usize {
        (row * self.cols + col) as usize
    }

    /// `(row, col)` of a row-major cell index.
    pub fn cell(&self, index: usize) -> (u32, u32) {
        let index = index as u32;
        (index / self.cols, index % self.cols)
    }

    pub fn matches(&self, width: u32, height: u32) -> bool {
        self.image_width() == width && self.image_height() == height
    }
}

pub fn make_patch_grid(height: u32, width: u32, patch_size: u32) -> Result<PatchGrid> {
    let indivisible = Error::IndivisibleResolution {
        width,
        height,
        patch: patch_size,
    };
    if patch_size == 0 || height == 0 || width == 0 {
        return Err(indivisible);
    }
    if height % patch_size != 0 || width % patch_size != 0 {
        return Err(indivisible);
    }
    let rows = height / patch_size;
    let cols = width / patch_size;
    let l = patch_size as f64;
    let centers = (0..rows)
        .flat_map(|r| (0..cols).map(move |k| Point2::new(k as f64 * l + l / 2.0, r as f64 * l + l / 2.0)))
        .collect();
    Ok(PatchGrid {
        patch_size,
        rows,
        cols,
        centers,
    })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use nalgebra::Rotation3;
    use proptest::prelude::*;

    pub(crate) fn k0() -> CameraIntrinsics {
        CameraIntrinsics::new(100.0, 100.0, 64.0, 64.0, 128, 128).unwrap()
    }

    fn pose_from(axis_angle: [f64; 3], t: [f64; 3]) -> CameraPose {
        let r = Rotation3::new(Vector3::from(axis_angle));
        CameraPose::new(*r.matrix(), Vector3::from(t)).unwrap()
    }

    fn arb_pose() -> impl Strategy<Value = CameraPose> {
        (prop::array::uniform3(-3.0..3.0f64), prop::array::uniform3(-5.0..5.0f64))
            .prop_map(|(a, t)| pose_from(a, t))
    }

    #[test]
    fn projection_examples() {
        let k = k0();
        assert_eq!(project_point(&Point3::new(0.0, 0.0, 2.0), &k).unwrap(), Point2::new(64.0, 64.0));
        assert_eq!(project_point(&Point3::new(0.2, 0.0, 2.0), &k).unwrap(), Point2::new(74.0, 64.0));
        assert!(matches!(
            project_point(&Point3::new(0.0, 0.0, -1.0), &k),
            Err(Error::NonPositiveDepth(_))
        ));
        assert!(matches!(
            project_point(&Point3::new(0.0, 0.0, 0.0), &k),
            Err(Error::NonPositiveDepth(_))
        ));
    }

    #[test]
    fn unprojection_examples() {
        let k = k0();
        assert_eq!(unproject_pixel(&Point2::new(64.0, 64.0), 2.0, &k).unwrap(), Point3::new(0.0, 0.0, 2.0));
        assert_eq!(unproject_pixel(&Point2::new(164.0, 64.0), 2.0, &k).unwrap(), Point3::new(2.0, 0.0, 2.0));
        for d in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(unproject_pixel(&Point2::new(1.0, 1.0), d, &k), Err(Error::InvalidDepth(_))));
        }
    }

    #[test]
    fn intrinsics_validation() {
        assert!(CameraIntrinsics::new(0.0, 1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, -1.0, 0.0, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, f64::NAN, 0.0, 4, 4).is_err());
        assert!(CameraIntrinsics::new(1.0, 1.0, 0.0, 0.0, 0, 4).is_err());
    }

    #[test]
    fn rejects_reflections_and_shears() {
        let mut reflect = Matrix3::identity();
        reflect[(0, 0)] = -1.0;
        assert!(matches!(CameraPose::new(reflect, Vector3::zeros()), Err(Error::NonRigidPose(_))));
        let mut shear = Matrix3::identity();
        shear[(0, 1)] = 0.01;
        assert!(CameraPose::new(shear, Vector3::zeros()).is_err());
    }

    #[test]
    fn relative_pose_examples() {
        let a = pose_from([0.1, -0.4, 0.2], [0.3, 1.0, -2.0]);
        let rel = relative_pose(&a, &a, PoseDirection::SourceToTarget);
        let m = rel.transform().to_matrix();
        assert!((m - Matrix4::identity()).amax() < 1e-12);

        let target = CameraPose::from_translation(Vector3::new(-0.2, 0.0, 0.0));
        let rel = relative_pose(&CameraPose::identity(), &target, PoseDirection::SourceToTarget);
        assert_eq!(*rel.transform(), target);
    }

    #[test]
    fn patch_grid_examples() {
        let g = make_patch_grid(128, 128, 16).unwrap();
        assert_eq!(g.len(), 64);
        assert_eq!(g.center(0), Point2::new(8.0, 8.0));
        assert_eq!(g.center(63), Point2::new(120.0, 120.0));

        let g = make_patch_grid(16, 16, 16).unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.center(0), Point2::new(8.0, 8.0));

        let g = make_patch_grid(128, 96, 16).unwrap();
        assert_eq!((g.rows(), g.cols()), (8, 6));
        assert_eq!(g.index(2, 3), 15);
        assert_eq!(g.cell(15), (2, 3));
        assert_eq!(g.center(15), Point2::new(56.0, 40.0));
    }

    #[test]
    fn patch_grid_rejects_indivisible() {
        assert!(matches!(make_patch_grid(100, 128, 16), Err(Error::IndivisibleResolution { .. })));
        assert!(matches!(make_patch_grid(128, 100, 16), Err(Error::IndivisibleResolution { .. })));
        assert!(make_patch_grid(128, 128, 0).is_err());
    }

    #[test]
    fn grid_centers_are_spaced_by_patch_size() {
        let g = make_patch_grid(64, 96, 8).unwrap();
        for r in 0..g.rows() {
            for k in 0..g.cols() {
                let c = g.center(g.index(r, k));
                if k + 1 < g.cols() {
                    let n = g.center(g.index(r, k + 1));
                    assert_eq!(n.x - c.x, 8.0);
                    assert_eq!(n.y, c.y);
                }
                if r + 1 < g.rows() {
                    let n = g.center(g.index(r + 1, k));
                    assert_eq!(n.y - c.y, 8.0);
                    assert_eq!(n.x, c.x);
                }
            }
        }
        let mut seen = std::collections::HashSet::new();
        for c in g.centers() {
            assert!(seen.insert((c.x.to_bits(), c.y.to_bits())));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn project_unproject_round_trip(u in -50.0..300.0f64, v in -50.0..300.0f64, d in 0.01..100.0f64) {
            let k = CameraIntrinsics::new(525.0, 520.0, 319.5, 239.5, 640, 480).unwrap();
            let p = Point2::new(u, v);
            let back = k.project(&k.unproject(&p, d).unwrap()).unwrap();
            prop_assert!((back - p).norm() < 1e-9);
        }
    }

    proptest! {
        #[test]
        fn pose_inverse_round_trip(pose in arb_pose(), p in prop::array::uniform3(-10.0..10.0f64)) {
            let p = Point3::from(Vector3::from(p));
            let back = pose.inverse().transform_point(&pose.transform_point(&p));
            prop_assert!((back - p).norm() < 1e-9);
            let id = pose.compose(&pose.inverse()).to_matrix();
            prop_assert!((id - Matrix4::identity()).amax() < 1e-6);
        }

        #[test]
        fn relative_pose_directions_are_inverse(a in arb_pose(), b in arb_pose()) {
            let st = relative_pose(&a, &b, PoseDirection::SourceToTarget);
            let ts = relative_pose(&a, &b, PoseDirection::TargetToSource);
            let id = st.transform().compose(ts.transform()).to_matrix();
            prop_assert!((id - Matrix4::identity()).amax() < 1e-9);
            prop_assert!((st.source_to_target().to_matrix() - ts.source_to_target().to_matrix()).amax() < 1e-9);
        }

        #[test]
        fn relative_pose_chains(a in arb_pose(), b in arb_pose(), c in arb_pose()) {
            let ac = relative_pose(&a, &c, PoseDirection::SourceToTarget);
            let ab = relative_pose(&a, &b, PoseDirection::SourceToTarget);
            let bc = relative_pose(&b, &c, PoseDirection::SourceToTarget);
            let chained = bc.transform().compose(ab.transform());
            prop_assert!((chained.to_matrix() - ac.transform().to_matrix()).amax() < 1e-8);
        }

        #[test]
        fn relative_pose_maps_source_frame_to_target_frame(a in arb_pose(), b in arb_pose(), w in prop::array::uniform3(-5.0..5.0f64)) {
            let w = Point3::from(Vector3::from(w));
            let rel = relative_pose(&a, &b, PoseDirection::SourceToTarget);
            let via = rel.apply(&a.transform_point(&w));
            prop_assert!((via - b.transform_point(&w)).norm() < 1e-9);
        }
    }
}
