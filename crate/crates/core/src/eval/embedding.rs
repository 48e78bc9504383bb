//! Per-clip embedding sequences and the `EMB1` file format.
//!
//! ```text
//! magic   4 bytes  "EMB1"
//! count   u32      vectors
//! dim     u32
//! values  count × dim × f32, row-major
//! ```
//!
//! Little-endian throughout; one `<clip_id>.emb` file per clip.

use std::collections::BTreeMap;
use std::path::Path;

use super::{EvalError, Result};

pub const EMB_MAGIC: &[u8; 4] = b"EMB1";

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSequence {
    clip_id: String,
    dim: usize,
    vectors: Vec<Vec<f64>>,
}

impl EmbeddingSequence {
    pub fn new(clip_id: impl Into<String>, dim: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        let clip_id = clip_id.into();
        if let Some(v) = vectors.iter().find(|v| v.len() != dim) {
            return Err(EvalError::Invalid(format!(
                "clip {clip_id:?}: vector of length {} in a {dim}-dimensional sequence",
                v.len()
            )));
        }
        if vectors.iter().flatten().any(|v| !v.is_finite()) {
            return Err(EvalError::Invalid(format!(
                "clip {clip_id:?}: non-finite embedding value"
            )));
        }
        Ok(Self {
            clip_id,
            dim,
            vectors,
        })
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vectors(&self) -> &[Vec<f64>] {
        &self.vectors
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Drops the first and last vector.
    pub fn trim_ends(&self) -> Result<Self> {
        if self.vectors.len() <= 2 {
            return Err(EvalError::TrimTooShort {
                clip_id: self.clip_id.clone(),
                len: self.vectors.len(),
            });
        }
        Ok(Self {
            clip_id: self.clip_id.clone(),
            dim: self.dim,
            vectors: self.vectors[1..self.vectors.len() - 1].to_vec(),
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.dim * self.vectors.len());
        out.extend_from_slice(EMB_MAGIC);
        out.extend_from_slice(&(self.vectors.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for v in self.vectors.iter().flatten() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(clip_id: impl Into<String>, buf: &[u8]) -> std::result::Result<Self, String> {
        if buf.len() < 12 {
            return Err("truncated header".into());
        }
        if &buf[..4] != EMB_MAGIC {
            return Err("bad magic".into());
        }
        let count = u32::from_le_bytes(buf[4..8].try_into().expect("4 bytes")) as usize;
        let dim = u32::from_le_bytes(buf[8..12].try_into().expect("4 bytes")) as usize;
        let body = &buf[12..];
        if body.len() != 4 * count * dim {
            return Err(format!(
                "{count} vectors of dimension {dim} need {} bytes, found {}",
                4 * count * dim,
                body.len()
            ));
        }
        let values: Vec<f64> = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
            .collect();
        let vectors = if dim == 0 {
            vec![Vec::new(); count]
        } else {
            values.chunks_exact(dim).map(<[f64]>::to_vec).collect()
        };
        Self::new(clip_id, dim, vectors).map_err(|e| e.to_string())
    }
}

/// Reads `<clip_id>.emb`; the clip id is the file stem.
pub fn read_embeddings(path: &Path) -> Result<EmbeddingSequence> {
    let buf = std::fs::read(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    EmbeddingSequence::from_bytes(id, &buf).map_err(|reason| EvalError::Format {
        path: path.to_path_buf(),
        reason,
    })
}

pub fn write_embeddings(path: &Path, seq: &EmbeddingSequence) -> Result<()> {
    std::fs::write(path, seq.to_bytes()).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads `<dir>/<id>.emb` for every id.
pub fn load_embedding_dir(
    dir: &Path,
    ids: &[String],
) -> Result<BTreeMap<String, EmbeddingSequence>> {
    let loaded = crate::par::try_map(ids, |id| {
        let path = dir.join(format!("{id}.emb"));
        if !path.exists() {
            return Err(EvalError::MissingInput(id.clone()));
        }
        read_embeddings(&path)
    })?;
    Ok(ids.iter().cloned().zip(loaded).collect())
}
