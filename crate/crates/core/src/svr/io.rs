//! `SVR1` model files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic     4 bytes  "SVR1"
//! kind      u32      0 = linear, 1 = rbf
//! gamma     f64      0 for linear
//! bias      f64
//! count     u32      support vectors
//! dim       u32
//! coefs     count × f64
//! vectors   count × dim × f64, row-major
//! ```

use std::path::Path;

use super::{Kernel, Result, SvrError, SvrModel};

pub const SVR_MAGIC: &[u8; 4] = b"SVR1";

pub fn model_to_bytes(model: &SvrModel) -> Vec<u8> {
    let n = model.support_vectors().len();
    let mut out = Vec::with_capacity(32 + 8 * n * (model.dim() + 1));
    out.extend_from_slice(SVR_MAGIC);
    let (kind, gamma) = match model.kernel() {
        Kernel::Linear => (0u32, 0.0),
        Kernel::Rbf { gamma } => (1, gamma),
    };
    out.extend_from_slice(&kind.to_le_bytes());
    out.extend_from_slice(&gamma.to_le_bytes());
    out.extend_from_slice(&model.bias().to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&(model.dim() as u32).to_le_bytes());
    for c in model.dual_coefs() {
        out.extend_from_slice(&c.to_le_bytes());
    }
    for v in model.support_vectors().iter().flatten() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Option<[u8; N]> {
        let bytes = self.buf.get(self.pos..self.pos + N)?;
        self.pos += N;
        bytes.try_into().ok()
    }

    fn u32(&mut self) -> Option<u32> {
        self.take().map(u32::from_le_bytes)
    }

    fn f64(&mut self) -> Option<f64> {
        self.take().map(f64::from_le_bytes)
    }
}

pub fn model_from_bytes(buf: &[u8]) -> std::result::Result<SvrModel, String> {
    let mut r = Reader { buf, pos: 0 };
    let truncated = || "truncated".to_string();
    if r.take::<4>().ok_or_else(truncated)? != *SVR_MAGIC {
        return Err("bad magic".into());
    }
    let kind = r.u32().ok_or_else(truncated)?;
    let gamma = r.f64().ok_or_else(truncated)?;
    let kernel = match kind {
        0 => Kernel::Linear,
        1 => Kernel::Rbf { gamma },
        k => return Err(format!("unknown kernel kind {k}")),
    };
    let bias = r.f64().ok_or_else(truncated)?;
    let n = r.u32().ok_or_else(truncated)? as usize;
    let dim = r.u32().ok_or_else(truncated)? as usize;
    let expected = r.pos + 8 * n * (dim + 1);
    if buf.len() != expected {
        return Err(format!("expected {expected} bytes, found {}", buf.len()));
    }
    let coefs: Vec<f64> = (0..n).map(|_| r.f64().expect("length checked")).collect();
    let svs: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..dim).map(|_| r.f64().expect("length checked")).collect())
        .collect();
    SvrModel::new(svs, coefs, bias, kernel, dim).map_err(|e| e.to_string())
}

pub fn write_model(path: &Path, model: &SvrModel) -> Result<()> {
    std::fs::write(path, model_to_bytes(model)).map_err(|source| SvrError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_model(path: &Path) -> Result<SvrModel> {
    let buf = std::fs::read(path).map_err(|source| SvrError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    model_from_bytes(&buf).map_err(|reason| SvrError::Format {
        path: path.to_path_buf(),
        reason,
    })
}
