//! `LSTM` model files.
//!
//! ```text
//! magic   4 bytes  "LSTM"
//! input   u32
//! hidden  u32
//! head    u32      0 = sigmoid, 1 = linear
//! params  f64 × (4H(D + H + 1) + H + 1), order W, U, b, v, c
//! ```
//!
//! Little-endian throughout.

use std::path::Path;

use super::{param_count, Head, LstmModel, Result, SeqNetError};

pub const LSTM_MAGIC: &[u8; 4] = b"LSTM";

pub fn model_to_bytes(model: &LstmModel) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 8 * model.params().len());
    out.extend_from_slice(LSTM_MAGIC);
    out.extend_from_slice(&(model.input_dim() as u32).to_le_bytes());
    out.extend_from_slice(&(model.hidden_dim() as u32).to_le_bytes());
    let head: u32 = match model.head() {
        Head::Sigmoid => 0,
        Head::Linear => 1,
    };
    out.extend_from_slice(&head.to_le_bytes());
    for p in model.params() {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

pub fn model_from_bytes(buf: &[u8]) -> std::result::Result<LstmModel, String> {
    if buf.len() < 16 {
        return Err("truncated header".into());
    }
    if &buf[..4] != LSTM_MAGIC {
        return Err("bad magic".into());
    }
    let word = |i: usize| {
        u32::from_le_bytes(buf[4 + 4 * i..8 + 4 * i].try_into().expect("4 bytes")) as usize
    };
    let (d, h) = (word(0), word(1));
    let head = match word(2) {
        0 => Head::Sigmoid,
        1 => Head::Linear,
        k => return Err(format!("unknown head {k}")),
    };
    let n = param_count(d, h);
    if buf.len() != 16 + 8 * n {
        return Err(format!(
            "expected {} bytes, found {}",
            16 + 8 * n,
            buf.len()
        ));
    }
    let params = buf[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    LstmModel::from_params(d, h, head, params).map_err(|e| e.to_string())
}

pub fn write_model(path: &Path, model: &LstmModel) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)).map_err(|source| SeqNetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_model(path: &Path) -> Result<LstmModel> {
    let buf = std::fs::read(path).map_err(|source| SeqNetError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    model_from_bytes(&buf).map_err(|reason| SeqNetError::Format {
        path: path.to_path_buf(),
        reason,
    })
}
