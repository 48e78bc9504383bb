//! `FMX1` feature dumps: magic, u32 LE rows, u32 LE cols, then rows × cols
//! little-endian f32 values in row-major order. Descriptor names live in a
//! UTF-8 sidecar, one per line.

use std::fs;
use std::path::Path;

use super::{FeatureError, FeatureMatrix, Result};

pub const FMX_MAGIC: &[u8; 4] = b"FMX1";

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FeatureError + '_ {
    move |source| FeatureError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn write_fmx(path: &Path, fm: &FeatureMatrix) -> Result<()> {
    let mut buf = Vec::with_capacity(12 + fm.values().len() * 4);
    buf.extend_from_slice(FMX_MAGIC);
    buf.extend_from_slice(&(fm.rows() as u32).to_le_bytes());
    buf.extend_from_slice(&(fm.cols() as u32).to_le_bytes());
    for v in fm.values() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    fs::write(path, buf).map_err(io_err(path))
}

/// Reads an `FMX1` file. `names` must match the column count.
pub fn read_fmx(path: &Path, clip_id: &str, names: Vec<String>) -> Result<FeatureMatrix> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let bad = |reason: &str| FeatureError::Format {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    };
    if bytes.len() < 12 || &bytes[..4] != FMX_MAGIC {
        return Err(bad("missing FMX1 header"));
    }
    let rows = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let cols = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes")) as usize;
    if bytes.len() != 12 + rows * cols * 4 {
        return Err(bad("payload length does not match dimensions"));
    }
    if cols != names.len() {
        return Err(FeatureError::DimensionMismatch {
            expected: names.len(),
            found: cols,
        });
    }
    let values = bytes[12..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    FeatureMatrix::new(clip_id, names, values)
}

pub fn write_names(path: &Path, names: &[String]) -> Result<()> {
    let mut text = names.join("\n");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn read_names(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    Ok(text
        .lines()
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}
