use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;

use super::{read_text, write_atomic};
use crate::error::{Error, Result};
use crate::viewbench::ScenePoints;

/// World points, one `x y z` triple per line. Blank lines and lines starting
/// with `#` are skipped.
pub fn read_points(path: &Path) -> Result<ScenePoints> {
    let text = read_text(path)?;
    let mut pts = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::parse(path, format!("line {}: not a finite number", n + 1)))?;
        let [x, y, z] = v[..] else {
            return Err(Error::parse(path, format!("line {}: expected 3 values, found {}", n + 1, v.len())));
        };
        pts.push(Point3::new(x, y, z));
    }
    Ok(ScenePoints(pts))
}

pub fn write_points(path: &Path, points: &ScenePoints) -> Result<()> {
    let mut s = String::new();
    for p in &points.0 {
        let _ = writeln!(s, "{:?} {:?} {:?}", p.x, p.y, p.z);
    }
    write_atomic(path, |w| w.write_all(s.as_bytes()))
}
