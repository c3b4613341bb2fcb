//! File formats: frames, depth, poses, fetch maps and JSON records.

mod frame;
mod points;
mod raster;
mod twfm;

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};

pub use frame::{
    load_frame, parse_intrinsics, parse_pose, write_intrinsics, write_pose, FrameBundle, FramePaths, PoseConvention,
};
pub use points::{read_points, write_points};
pub use raster::{
    read_depth, read_depth_png, read_image, read_pfm, write_depth_png, write_image, write_pfm, DEFAULT_DEPTH_SCALE,
};
pub use twfm::{decode_fetch_map, encode_fetch_map, read_fetch_map, write_fetch_map, write_fetch_map_json, FetchMapJson};

/// Write `path` by filling a temporary file in the same directory and
/// renaming it into place.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> std::io::Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(path, e))?;
    {
        let mut w = std::io::BufWriter::new(tmp.as_file_mut());
        fill(&mut w).and_then(|_| w.flush()).map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Pretty-printed JSON followed by a newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")
    })
}

/// One JSON document per line.
pub fn write_json_lines<T: Serialize>(path: &Path, values: &[T]) -> Result<()> {
    write_atomic(path, |w| {
        for v in values {
            serde_json::to_writer(&mut *w, v)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    })
}

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_replaces_content() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.json");
        write_json(&p, &[1, 2]).unwrap();
        write_json(&p, &[3]).unwrap();
        assert_eq!(std::fs::read_to_string(&p).unwrap(), "[\n  3\n]\n");
        assert_eq!(std::fs::read_dir(dir.path()).unwrap().count(), 1);
        assert!(matches!(write_json(&dir.path().join("missing/x.json"), &1), Err(Error::Io { .. })));
    }
}
