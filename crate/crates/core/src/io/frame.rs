use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{Matrix3, Matrix4};
use serde::{Deserialize, Serialize};

use super::raster::{read_depth, read_image};
use super::{read_text, write_atomic};
use crate::camera::{rotation_deviation, CameraIntrinsics, CameraPose};
use crate::error::{Error, Result};
use crate::raster::{DepthMap, Image};

/// Rotations further than this from orthonormal are rejected rather than repaired.
const POSE_REPAIR_TOLERANCE: f64 = 1e-3;

/// How a pose file's 4x4 matrix maps coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PoseConvention {
    /// Camera-to-world; inverted on load.
    C2w,
    /// World-to-camera; stored as is.
    W2c,
}

impl FromStr for PoseConvention {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "c2w" => Ok(PoseConvention::C2w),
            "w2c" => Ok(PoseConvention::W2c),
            _ => Err(format!("unknown pose convention {s:?} (expected c2w or w2c)")),
        }
    }
}

fn numbers(path: &Path, text: &str) -> Result<Vec<f64>> {
    text.split_whitespace()
        .map(|t| {
            let v: f64 = t.parse().map_err(|_| Error::parse(path, format!("not a number: {t:?}")))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::parse(path, format!("non-finite value {t}")))
            }
        })
        .collect()
}

/// Nearest proper rotation, via SVD.
fn orthonormalize(r: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = r.svd(true, true);
    let (u, vt) = (svd.u.expect("requested"), svd.v_t.expect("requested"));
    let mut q = u * vt;
    if q.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        q = u * vt;
    }
    q
}

/// World-to-camera pose from a row-major 4x4 matrix in text form. Rotations
/// within 1e-3 of orthonormal are snapped to the nearest rotation.
pub fn parse_pose(path: &Path, text: &str, convention: PoseConvention) -> Result<CameraPose> {
    let v = numbers(path, text)?;
    if v.len() != 16 {
        return Err(Error::parse(path, format!("expected 16 pose values, found {}", v.len())));
    }
    let mut m = Matrix4::from_row_slice(&v);
    let bottom = [m[(3, 0)], m[(3, 1)], m[(3, 2)], m[(3, 3)] - 1.0];
    if bottom.iter().any(|b| b.abs() > 1e-9) {
        return Err(Error::parse(path, "last pose row must be 0 0 0 1"));
    }
    let r = m.fixed_view::<3, 3>(0, 0).into_owned();
    let deviation = rotation_deviation(&r);
    if !(deviation <= POSE_REPAIR_TOLERANCE) {
        return Err(Error::NonRigidPose(deviation));
    }
    if deviation > 1e-12 {
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&orthonormalize(&r));
    }
    match convention {
        PoseConvention::W2c => CameraPose::from_matrix(&m),
        PoseConvention::C2w => CameraPose::from_camera_to_world(&m),
    }
}

/// Intrinsics from a 3x3 matrix, a 4x4 matrix (upper-left block used) or
/// the four values `fx fy cx cy`.
pub fn parse_intrinsics(path: &Path, text: &str, width: u32, height: u32) -> Result<CameraIntrinsics> {
    let v = numbers(path, text)?;
    let (fx, fy, cx, cy) = match v.len() {
        4 => (v[0], v[1], v[2], v[3]),
        9 | 16 => {
            let n = if v.len() == 9 { 3 } else { 4 };
            let at = |r: usize, c: usize| v[r * n + c];
            let zeros = [at(0, 1), at(1, 0), at(2, 0), at(2, 1)];
            if zeros.iter().any(|z| z.abs() > 1e-9) || (at(2, 2) - 1.0).abs() > 1e-9 {
                return Err(Error::parse(path, "intrinsic matrix must have the form [fx 0 cx; 0 fy cy; 0 0 1]"));
            }
            (at(0, 0), at(1, 1), at(0, 2), at(1, 2))
        }
        n => return Err(Error::parse(path, format!("expected 4, 9 or 16 intrinsic values, found {n}"))),
    };
    CameraIntrinsics::new(fx, fy, cx, cy, width, height)
}

fn format_rows(rows: impl Iterator<Item = Vec<f64>>) -> String {
    let mut s = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format!("{:?}", v + 0.0)).collect();
        let _ = writeln!(s, "{}", line.join(" "));
    }
    s
}

pub fn write_pose(path: &Path, pose: &CameraPose, convention: PoseConvention) -> Result<()> {
    let m = match convention {
        PoseConvention::W2c => pose.to_matrix(),
        PoseConvention::C2w => pose.inverse().to_matrix(),
    };
    let text = format_rows((0..4).map(|r| (0..4).map(|c| m[(r, c)]).collect()));
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}

/// Writes the 3x3 calibration matrix.
pub fn write_intrinsics(path: &Path, k: &CameraIntrinsics) -> Result<()> {
    let m = k.matrix();
    let text = format_rows((0..3).map(|r| (0..3).map(|c| m[(r, c)]).collect()));
    write_atomic(path, |w| w.write_all(text.as_bytes()))
}

/// File locations of one frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FramePaths {
    pub id: String,
    pub image: PathBuf,
    pub depth: PathBuf,
    pub pose: PathBuf,
    pub intrinsics: PathBuf,
}

impl FramePaths {
    /// Scan-directory layout: `color/ID.png`, `depth/ID.png` (or `depth/ID.pfm`),
    /// `pose/ID.txt` and a shared `intrinsic.txt`.
    pub fn in_scan(dir: &Path, id: &str) -> Self {
        let png = dir.join("depth").join(format!("{id}.png"));
        let depth = if png.exists() { png } else { dir.join("depth").join(format!("{id}.pfm")) };
        Self {
            id: id.to_string(),
            image: dir.join("color").join(format!("{id}.png")),
            depth,
            pose: dir.join("pose").join(format!("{id}.txt")),
            intrinsics: dir.join("intrinsic.txt"),
        }
    }
}

/// A loaded RGB-D frame with a world-to-camera pose.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameBundle {
    pub id: String,
    pub image_path: PathBuf,
    pub depth_path: PathBuf,
    pub image: Image,
    pub depth: DepthMap,
    pub pose: CameraPose,
    pub intrinsics: CameraIntrinsics,
}

pub fn load_frame(paths: &FramePaths, convention: PoseConvention, depth_scale: f64) -> Result<FrameBundle> {
    let image = read_image(&paths.image)?;
    let depth = read_depth(&paths.depth, depth_scale)?;
    if (depth.width(), depth.height()) != (image.width(), image.height()) {
        return Err(Error::mismatch(
            format!("{}x{} depth", image.width(), image.height()),
            format!("{}x{}", depth.width(), depth.height()),
        ));
    }
    let pose = parse_pose(&paths.pose, &read_text(&paths.pose)?, convention)?;
    let intrinsics = parse_intrinsics(&paths.intrinsics, &read_text(&paths.intrinsics)?, image.width(), image.height())?;
    Ok(FrameBundle {
        id: paths.id.clone(),
        image_path: paths.image.clone(),
        depth_path: paths.depth.clone(),
        image,
        depth,
        pose,
        intrinsics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::{write_depth_png, write_image};
    use nalgebra::{Rotation3, Vector3};

    const IDENTITY: &str = "1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n";

    fn p() -> &'static Path {
        Path::new("pose.txt")
    }

    #[test]
    fn identity_in_either_convention() {
        for c in [PoseConvention::C2w, PoseConvention::W2c] {
            assert!(parse_pose(p(), IDENTITY, c).unwrap().is_identity());
        }
    }

    #[test]
    fn c2w_translation_is_inverted() {
        let text = "1 0 0 0.2\n0 1 0 0\n0 0 1 0\n0 0 0 1";
        let pose = parse_pose(p(), text, PoseConvention::C2w).unwrap();
        assert_eq!(pose.translation(), &Vector3::new(-0.2, 0.0, 0.0));
        let pose = parse_pose(p(), text, PoseConvention::W2c).unwrap();
        assert_eq!(pose.translation(), &Vector3::new(0.2, 0.0, 0.0));
    }

    #[test]
    fn near_rigid_is_repaired_and_far_is_rejected() {
        let r = Rotation3::from_euler_angles(0.1, 0.2, 0.3).into_inner();
        let fmt = |r: Matrix3<f64>| {
            format!(
                "{} {} {} 1\n{} {} {} 2\n{} {} {} 3\n0 0 0 1",
                r[(0, 0)], r[(0, 1)], r[(0, 2)], r[(1, 0)], r[(1, 1)], r[(1, 2)], r[(2, 0)], r[(2, 1)], r[(2, 2)]
            )
        };
        let noisy = r + Matrix3::repeat(2e-4);
        let pose = parse_pose(p(), &fmt(noisy), PoseConvention::W2c).unwrap();
        assert!(rotation_deviation(pose.rotation()) < 1e-12);
        assert!((pose.rotation() - r).amax() < 1e-3);
        let bad = r + Matrix3::repeat(5e-3);
        assert!(matches!(parse_pose(p(), &fmt(bad), PoseConvention::W2c), Err(Error::NonRigidPose(_))));
        let reflect = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(matches!(parse_pose(p(), &fmt(reflect), PoseConvention::W2c), Err(Error::NonRigidPose(_))));
    }

    #[test]
    fn malformed_pose_files() {
        for text in ["1 0 0", "-inf 0 0 0 0 1 0 0 0 0 1 0 0 0 0 1", "1 0 0 0 0 1 0 0 0 0 1 0 0 0 1 1", "a b"] {
            assert!(matches!(parse_pose(p(), text, PoseConvention::W2c), Err(Error::Parse { .. })), "{text}");
        }
    }

    #[test]
    fn intrinsics_formats() {
        let q = Path::new("k.txt");
        let a = parse_intrinsics(q, "100 0 64\n0 100 64\n0 0 1", 128, 128).unwrap();
        let b = parse_intrinsics(q, "100 100 64 64", 128, 128).unwrap();
        let c = parse_intrinsics(q, "100 0 64 0\n0 100 64 0\n0 0 1 0\n0 0 0 1", 128, 128).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, c);
        assert!(parse_intrinsics(q, "100 1 64\n0 100 64\n0 0 1", 128, 128).is_err());
        assert!(parse_intrinsics(q, "100 100 64", 128, 128).is_err());
        assert!(matches!(parse_intrinsics(q, "-1 100 64 64", 128, 128), Err(Error::InvalidIntrinsics(_))));
    }

    fn scan(dir: &Path, depth_w: u32) -> FramePaths {
        for sub in ["color", "depth", "pose"] {
            std::fs::create_dir_all(dir.join(sub)).unwrap();
        }
        write_image(&dir.join("color/0.png"), &Image::new(8, 6, [1, 2, 3])).unwrap();
        write_depth_png(&dir.join("depth/0.png"), &DepthMap::constant(depth_w, 6, 2.0), 0.001).unwrap();
        write_pose(&dir.join("pose/0.txt"), &CameraPose::from_translation(Vector3::new(0.5, 0.0, 0.0)), PoseConvention::C2w).unwrap();
        write_intrinsics(&dir.join("intrinsic.txt"), &CameraIntrinsics::new(10.0, 10.0, 4.0, 3.0, 8, 6).unwrap()).unwrap();
        FramePaths::in_scan(dir, "0")
    }

    #[test]
    fn load_scan_frame_twice() {
        let dir = tempfile::tempdir().unwrap();
        let paths = scan(dir.path(), 8);
        let a = load_frame(&paths, PoseConvention::C2w, 0.001).unwrap();
        let b = load_frame(&paths, PoseConvention::C2w, 0.001).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.depth.get(3, 3), Some(2.0));
        assert_eq!(a.pose.translation(), &Vector3::new(0.5, 0.0, 0.0));
        assert_eq!(a.intrinsics.cx, 4.0);
    }

    #[test]
    fn mismatched_depth_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let paths = scan(dir.path(), 7);
        assert!(matches!(load_frame(&paths, PoseConvention::C2w, 0.001), Err(Error::DimensionMismatch { .. })));
    }
}
