//! Binary fetch-map format.
//!
//! Little-endian: magic `TWFM`, u32 version, u32 rows, u32 cols, u32 patch
//! size, u32 image height, u32 image width, u8 mode, then one 13-byte record
//! per cell: u8 valid, f32 x, f32 y, i32 nearest index (-1 when absent).

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_file, write_atomic, write_json};
use crate::camera::make_patch_grid;
use crate::error::{Error, Result};
use crate::fetch::{FetchEntry, FetchMap, FetchMode};

const MAGIC: [u8; 4] = *b"TWFM";
const VERSION: u32 = 1;
const HEADER_LEN: usize = 29;
const RECORD_LEN: usize = 13;

pub fn encode_fetch_map(map: &FetchMap) -> Vec<u8> {
    let g = &map.grid;
    let mut out = Vec::with_capacity(HEADER_LEN + RECORD_LEN * map.entries.len());
    out.extend_from_slice(&MAGIC);
    for v in [VERSION, g.rows(), g.cols(), g.patch_size(), g.image_height(), g.image_width()] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.push(map.mode.code());
    for e in &map.entries {
        let [x, y] = e.source.unwrap_or([0.0, 0.0]);
        out.push(e.source.is_some() as u8);
        out.extend_from_slice(&x.to_le_bytes());
        out.extend_from_slice(&y.to_le_bytes());
        out.extend_from_slice(&e.nearest.map_or(-1, |n| n as i32).to_le_bytes());
    }
    out
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(b[at..at + 4].try_into().expect("4 bytes"))
}

pub fn decode_fetch_map(bytes: &[u8]) -> Result<FetchMap> {
    let truncated = |needed| Error::TruncatedFile {
        needed,
        actual: bytes.len(),
    };
    if bytes.len() < 4 {
        return Err(truncated(HEADER_LEN));
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != MAGIC {
        return Err(Error::BadMagic(magic));
    }
    if bytes.len() < 8 {
        return Err(truncated(HEADER_LEN));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    if bytes.len() < HEADER_LEN {
        return Err(truncated(HEADER_LEN));
    }
    let [rows, cols, patch, h, w] = [8, 12, 16, 20, 24].map(|at| u32_at(bytes, at));
    let mode = FetchMode::from_code(bytes[28]).ok_or_else(|| Error::MalformedFetchMap(format!("unknown mode {}", bytes[28])))?;
    let cells = rows as usize * cols as usize;
    let needed = HEADER_LEN + RECORD_LEN * cells;
    if bytes.len() < needed {
        return Err(truncated(needed));
    }
    if bytes.len() > needed {
        return Err(Error::MalformedFetchMap(format!("{} trailing bytes", bytes.len() - needed)));
    }
    let grid = make_patch_grid(h, w, patch).map_err(|e| Error::MalformedFetchMap(e.to_string()))?;
    if (grid.rows(), grid.cols()) != (rows, cols) {
        return Err(Error::MalformedFetchMap(format!(
            "{rows}x{cols} grid does not match {w}x{h} image with patch size {patch}"
        )));
    }
    let mut entries = Vec::with_capacity(cells);
    for rec in bytes[HEADER_LEN..].chunks_exact(RECORD_LEN) {
        let f = |at: usize| f32::from_le_bytes(rec[at..at + 4].try_into().expect("4 bytes"));
        let source = match rec[0] {
            0 => None,
            1 => Some([f(1), f(5)]),
            v => return Err(Error::MalformedFetchMap(format!("validity flag {v}"))),
        };
        let nearest = match i32::from_le_bytes(rec[9..13].try_into().expect("4 bytes")) {
            -1 => None,
            n if n >= 0 && (n as usize) < cells => Some(n as u32),
            n => return Err(Error::MalformedFetchMap(format!("nearest index {n} out of range"))),
        };
        entries.push(FetchEntry { source, nearest });
    }
    Ok(FetchMap { grid, mode, entries })
}

pub fn write_fetch_map(map: &FetchMap, path: &Path) -> Result<()> {
    if map.entries.len() != map.grid.len() {
        return Err(Error::mismatch(format!("{} entries", map.grid.len()), map.entries.len()));
    }
    let bytes = encode_fetch_map(map);
    write_atomic(path, |w| w.write_all(&bytes))
}

pub fn read_fetch_map(path: &Path) -> Result<FetchMap> {
    decode_fetch_map(&read_file(path)?)
}

/// JSON mirror of the binary layout, for inspection.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FetchMapJson {
    pub version: u32,
    pub rows: u32,
    pub cols: u32,
    pub patch_size: u32,
    pub image_h: u32,
    pub image_w: u32,
    pub mode: FetchMode,
    pub entries: Vec<FetchEntry>,
}

impl From<&FetchMap> for FetchMapJson {
    fn from(m: &FetchMap) -> Self {
        Self {
            version: VERSION,
            rows: m.grid.rows(),
            cols: m.grid.cols(),
            patch_size: m.grid.patch_size(),
            image_h: m.grid.image_height(),
            image_w: m.grid.image_width(),
            mode: m.mode,
            entries: m.entries.clone(),
        }
    }
}

pub fn write_fetch_map_json(map: &FetchMap, path: &Path) -> Result<()> {
    write_json(path, &FetchMapJson::from(map))
}
