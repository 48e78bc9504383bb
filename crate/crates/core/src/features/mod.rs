//! Frame-level audio descriptors, grouped clip summaries, windowing and
//! min-max normalization.

mod io;
mod spectral;
mod summary;
mod window;

use thiserror::Error;

pub use io::{read_fmx, read_names, write_fmx, write_names, FMX_MAGIC};
pub use spectral::{
    descriptor_names, frame_count, frame_descriptors, mel_filterbank, stft_log_mel, LOG_EPSILON,
    MFCC_BANDS, N_MFCC,
};
pub use summary::{summarize_feature_sets, FeatureSet, FeatureSetSummary, SUMMARY_DIMS};
pub use window::{make_windows, minmax_normalize, window_count, MinMax, WindowSpec};

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("signal of {len} samples is shorter than one {frame}-sample frame")]
    TooShort { len: usize, frame: usize },
    #[error("invalid frame parameters: {0}")]
    InvalidParams(String),
    #[error("feature matrix: {0}")]
    InvalidMatrix(String),
    #[error("clip {clip_id:?}: {available} frames after trimming, window needs {length}")]
    NoWindows {
        clip_id: String,
        available: usize,
        length: usize,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("inputs do not belong together: {0}")]
    Mismatch(String),
    #[error("normalization needs at least one training matrix")]
    EmptyTrainingSet,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed feature file: {reason}")]
    Format {
        path: std::path::PathBuf,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, FeatureError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Window {
    Hann,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            // periodic Hann
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameParams {
    pub frame_size: usize,
    pub hop: usize,
    pub window: Window,
    pub sample_rate: u32,
}

impl Default for FrameParams {
    fn default() -> Self {
        Self {
            frame_size: 2048,
            hop: 1024,
            window: Window::Hann,
            sample_rate: 44_100,
        }
    }
}

impl FrameParams {
    pub fn validate(&self) -> Result<()> {
        if !self.frame_size.is_power_of_two() || self.frame_size < 4 {
            return Err(FeatureError::InvalidParams(format!(
                "frame size {} is not a power of two >= 4",
                self.frame_size
            )));
        }
        if self.hop == 0 || self.hop > self.frame_size {
            return Err(FeatureError::InvalidParams(format!(
                "hop {} must be in 1..={}",
                self.hop, self.frame_size
            )));
        }
        if self.sample_rate == 0 {
            return Err(FeatureError::InvalidParams("sample rate is zero".into()));
        }
        Ok(())
    }

    pub fn frames_per_second(&self) -> f64 {
        self.sample_rate as f64 / self.hop as f64
    }
}

/// A frames × descriptors matrix for one clip, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    clip_id: String,
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(clip_id: impl Into<String>, names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let cols = names.len();
        if cols == 0 {
            return Err(FeatureError::InvalidMatrix("no columns".into()));
        }
        if values.is_empty() || !values.len().is_multiple_of(cols) {
            return Err(FeatureError::InvalidMatrix(format!(
                "{} values do not fill rows of {cols}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(FeatureError::InvalidMatrix("non-finite value".into()));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(FeatureError::InvalidMatrix(format!(
                "duplicate descriptor name {dup:?}"
            )));
        }
        Ok(Self {
            clip_id: clip_id.into(),
            rows: values.len() / cols,
            cols,
            values,
            names,
        })
    }

    pub fn from_rows(
        clip_id: impl Into<String>,
        names: Vec<String>,
        rows: &[Vec<f64>],
    ) -> Result<Self> {
        let cols = names.len();
        if let Some(r) = rows.iter().find(|r| r.len() != cols) {
            return Err(FeatureError::DimensionMismatch {
                expected: cols,
                found: r.len(),
            });
        }
        Self::new(clip_id, names, rows.concat())
    }

    pub fn clip_id(&self) -> &str {
        &self.clip_id
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        self.iter_rows().map(move |r| r[j])
    }

    pub fn column_by_name(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.names.iter().position(|n| n == name)?;
        Some(self.column(j).collect())
    }

    /// Copy of rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        Self {
            clip_id: self.clip_id.clone(),
            rows: end - start,
            cols: self.cols,
            values: self.values[start * self.cols..end * self.cols].to_vec(),
            names: self.names.clone(),
        }
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.iter_rows().map(<[f64]>::to_vec).collect()
    }
}

pub(crate) fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

/// Population standard deviation.
pub(crate) fn std_dev(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}
