//! Audio excerpt ingestion and corpus manifests.
//!
//! Every excerpt must be a mono 44.1 kHz WAV file. Integer PCM (16/24/32 bit)
//! and 32-bit float payloads are accepted and decoded to `f64` samples in
//! `[-1.0, 1.0]`. Nothing is resampled or down-mixed: a file that does not
//! already match is rejected with a dedicated error.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ranking::Dimension;

pub const REQUIRED_SAMPLE_RATE: u32 = 44_100;
pub const REQUIRED_CHANNELS: u16 = 1;

/// Header of the manifest CSV, in column order.
pub const MANIFEST_HEADER: [&str; 8] = [
    "id",
    "corpus",
    "path",
    "duration_s",
    "sample_rate",
    "channels",
    "valence",
    "arousal",
];

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not a readable WAV file: {reason}")]
    NotWav { path: PathBuf, reason: String },
    #[error("{path}: sample rate {found} Hz, expected {REQUIRED_SAMPLE_RATE} Hz")]
    SampleRate { path: PathBuf, found: u32 },
    #[error("{path}: {found} channels, expected mono")]
    Channels { path: PathBuf, found: u16 },
    #[error("{path}: duration {duration:.3} s outside [{min}, {max}] s")]
    Duration {
        path: PathBuf,
        duration: f64,
        min: f64,
        max: f64,
    },
    #[error("manifest line {line}: {reason}")]
    MalformedRow { line: u64, reason: String },
    #[error("duplicate clip id {0:?}")]
    DuplicateId(String),
    #[error("clip {id:?}: rating {value} outside [-1, 1]")]
    RatingOutOfRange { id: String, value: f64 },
    #[error("unknown clip id {0:?}")]
    UnknownId(String),
    #[error("invalid duration bounds [{min}, {max}]")]
    InvalidBounds { min: f64, max: f64 },
}

pub type Result<T> = std::result::Result<T, CorpusError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Corpus {
    #[serde(rename = "WCMED")]
    Wcmed,
    #[serde(rename = "CCMED")]
    Ccmed,
    #[serde(rename = "SOUNDSCAPE")]
    Soundscape,
    #[serde(rename = "CUSTOM")]
    Custom,
}

impl Corpus {
    pub fn as_str(self) -> &'static str {
        match self {
            Corpus::Wcmed => "WCMED",
            Corpus::Ccmed => "CCMED",
            Corpus::Soundscape => "SOUNDSCAPE",
            Corpus::Custom => "CUSTOM",
        }
    }

    /// Default excerpt duration bounds: 8–20 s for the music corpora, 5–7 s
    /// for 6-second soundscape clips, unbounded for custom corpora.
    pub fn default_bounds(self) -> DurationBounds {
        match self {
            Corpus::Wcmed | Corpus::Ccmed => DurationBounds {
                min_s: 8.0,
                max_s: 20.0,
            },
            Corpus::Soundscape => DurationBounds {
                min_s: 5.0,
                max_s: 7.0,
            },
            Corpus::Custom => DurationBounds {
                min_s: 0.0,
                max_s: f64::INFINITY,
            },
        }
    }
}

impl fmt::Display for Corpus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Corpus {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "WCMED" => Ok(Corpus::Wcmed),
            "CCMED" => Ok(Corpus::Ccmed),
            "SOUNDSCAPE" => Ok(Corpus::Soundscape),
            "CUSTOM" => Ok(Corpus::Custom),
            other => Err(format!("unknown corpus {other:?}")),
        }
    }
}

/// Inclusive duration range in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationBounds {
    pub min_s: f64,
    pub max_s: f64,
}

impl DurationBounds {
    pub fn new(min_s: f64, max_s: f64) -> Result<Self> {
        if !(min_s >= 0.0 && min_s <= max_s) {
            return Err(CorpusError::InvalidBounds {
                min: min_s,
                max: max_s,
            });
        }
        Ok(Self { min_s, max_s })
    }

    pub fn contains(&self, duration: f64) -> bool {
        duration >= self.min_s && duration <= self.max_s
    }
}

/// On-disk sample encoding of an ingested WAV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Int16,
    Int24,
    Int32,
    Float32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub id: String,
    pub corpus: Corpus,
    pub path: PathBuf,
    pub duration_s: f64,
    pub sample_rate: u32,
    pub channels: u16,
    pub valence: Option<f64>,
    pub arousal: Option<f64>,
}

impl ClipRecord {
    pub fn rating(&self, dimension: Dimension) -> Option<f64> {
        match dimension {
            Dimension::Arousal => self.arousal,
            Dimension::Valence => self.valence,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorpusManifest {
    pub corpus: Corpus,
    pub clips: Vec<ClipRecord>,
    pub duration_bounds: DurationBounds,
}

impl CorpusManifest {
    pub fn new(corpus: Corpus) -> Self {
        Self {
            corpus,
            clips: Vec::new(),
            duration_bounds: corpus.default_bounds(),
        }
    }

    /// Appends a clip, rejecting a repeated id.
    pub fn push(&mut self, clip: ClipRecord) -> Result<()> {
        if self.clips.iter().any(|c| c.id == clip.id) {
            return Err(CorpusError::DuplicateId(clip.id));
        }
        self.clips.push(clip);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&ClipRecord> {
        self.clips.iter().find(|c| c.id == id)
    }

    pub fn ids(&self) -> Vec<String> {
        self.clips.iter().map(|c| c.id.clone()).collect()
    }
}

/// Decoded mono audio.
#[derive(Debug, Clone)]
pub struct Audio {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
    pub format: SampleFormat,
}

fn not_wav(path: &Path, reason: impl fmt::Display) -> CorpusError {
    CorpusError::NotWav {
        path: path.to_path_buf(),
        reason: reason.to_string(),
    }
}

fn open_wav(path: &Path) -> Result<hound::WavReader<BufReader<File>>> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    hound::WavReader::new(BufReader::new(file)).map_err(|e| not_wav(path, e))
}

fn sample_format(path: &Path, spec: &hound::WavSpec) -> Result<SampleFormat> {
    match (spec.sample_format, spec.bits_per_sample) {
        (hound::SampleFormat::Int, 16) => Ok(SampleFormat::Int16),
        (hound::SampleFormat::Int, 24) => Ok(SampleFormat::Int24),
        (hound::SampleFormat::Int, 32) => Ok(SampleFormat::Int32),
        (hound::SampleFormat::Float, 32) => Ok(SampleFormat::Float32),
        (fmt, bits) => Err(not_wav(
            path,
            format!("unsupported encoding {fmt:?}/{bits}-bit"),
        )),
    }
}

fn check_layout(path: &Path, spec: &hound::WavSpec) -> Result<SampleFormat> {
    let format = sample_format(path, spec)?;
    if spec.sample_rate != REQUIRED_SAMPLE_RATE {
        return Err(CorpusError::SampleRate {
            path: path.to_path_buf(),
            found: spec.sample_rate,
        });
    }
    if spec.channels != REQUIRED_CHANNELS {
        return Err(CorpusError::Channels {
            path: path.to_path_buf(),
            found: spec.channels,
        });
    }
    Ok(format)
}

/// Validates a WAV file and returns its catalogue record.
///
/// The clip id is the file stem. Ratings start out absent.
pub fn ingest_clip(path: &Path, corpus: Corpus, bounds: DurationBounds) -> Result<ClipRecord> {
    let reader = open_wav(path)?;
    let spec = reader.spec();
    check_layout(path, &spec)?;
    let duration = reader.duration() as f64 / spec.sample_rate as f64;
    if !bounds.contains(duration) {
        return Err(CorpusError::Duration {
            path: path.to_path_buf(),
            duration,
            min: bounds.min_s,
            max: bounds.max_s,
        });
    }
    let id = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| not_wav(path, "file name is not valid UTF-8"))?
        .to_string();
    Ok(ClipRecord {
        id,
        corpus,
        path: path.to_path_buf(),
        duration_s: duration,
        sample_rate: spec.sample_rate,
        channels: spec.channels,
        valence: None,
        arousal: None,
    })
}

/// Decodes a mono 44.1 kHz WAV file to samples in `[-1, 1]`.
pub fn decode_audio(path: &Path) -> Result<Audio> {
    let mut reader = open_wav(path)?;
    let spec = reader.spec();
    let format = check_layout(path, &spec)?;
    let samples: std::result::Result<Vec<f64>, hound::Error> = match format {
        SampleFormat::Float32 => reader
            .samples::<f32>()
            .map(|s| s.map(|v| (v as f64).clamp(-1.0, 1.0)))
            .collect(),
        _ => {
            let scale = (1u64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| (v as f64 / scale).clamp(-1.0, 1.0)))
                .collect()
        }
    };
    let samples = samples.map_err(|e| not_wav(path, e))?;
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(not_wav(path, "non-finite sample"));
    }
    Ok(Audio {
        samples,
        sample_rate: spec.sample_rate,
        format,
    })
}

/// Writes samples in `[-1, 1]` as a WAV file.
pub fn write_wav(
    path: &Path,
    samples: &[f64],
    sample_rate: u32,
    channels: u16,
    format: SampleFormat,
) -> Result<()> {
    let (bits, sample_format) = match format {
        SampleFormat::Int16 => (16, hound::SampleFormat::Int),
        SampleFormat::Int24 => (24, hound::SampleFormat::Int),
        SampleFormat::Int32 => (32, hound::SampleFormat::Int),
        SampleFormat::Float32 => (32, hound::SampleFormat::Float),
    };
    let spec = hound::WavSpec {
        channels,
        sample_rate,
        bits_per_sample: bits,
        sample_format,
    };
    let io_err = |e: hound::Error| match e {
        hound::Error::IoError(source) => CorpusError::Io {
            path: path.to_path_buf(),
            source,
        },
        other => not_wav(path, other),
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(io_err)?;
    for &s in samples {
        let s = s.clamp(-1.0, 1.0);
        let res = match format {
            SampleFormat::Float32 => writer.write_sample(s as f32),
            _ => {
                let max = ((1u64 << (bits - 1)) - 1) as f64;
                writer.write_sample((s * max).round() as i32)
            }
        };
        res.map_err(io_err)?;
    }
    writer.finalize().map_err(io_err)
}

fn check_rating(id: &str, value: Option<f64>) -> Result<()> {
    match value {
        Some(v) if !(-1.0..=1.0).contains(&v) => Err(CorpusError::RatingOutOfRange {
            id: id.to_string(),
            value: v,
        }),
        _ => Ok(()),
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the manifest as CSV. Floats use the shortest round-tripping
/// representation so `read_manifest` restores them bit-exactly.
pub fn write_manifest(manifest: &CorpusManifest, path: &Path) -> Result<()> {
    let io = |source: std::io::Error| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut wtr = csv::Writer::from_path(path).map_err(|e| io(e.into()))?;
    wtr.write_record(MANIFEST_HEADER)
        .map_err(|e| io(e.into()))?;
    for c in &manifest.clips {
        wtr.write_record([
            c.id.clone(),
            c.corpus.to_string(),
            c.path.to_string_lossy().into_owned(),
            c.duration_s.to_string(),
            c.sample_rate.to_string(),
            c.channels.to_string(),
            fmt_opt(c.valence),
            fmt_opt(c.arousal),
        ])
        .map_err(|e| io(e.into()))?;
    }
    wtr.flush().map_err(io)
}

/// Reads a manifest CSV.
///
/// The manifest's corpus is taken from the first row (or `Custom` when the
/// file is empty) and its bounds are that corpus's defaults.
pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_manifest(file)
}

pub fn parse_manifest<R: std::io::Read>(input: R) -> Result<CorpusManifest> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let malformed = |line: u64, reason: String| CorpusError::MalformedRow { line, reason };
    let headers = rdr
        .headers()
        .map_err(|e| malformed(1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != MANIFEST_HEADER {
        return Err(malformed(1, format!("unexpected header {headers:?}")));
    }

    let mut clips: Vec<ClipRecord> = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let line = i as u64 + 2;
        let row = row.map_err(|e| malformed(line, e.to_string()))?;
        let field = |idx: usize| row.get(idx).unwrap_or("");
        let num = |idx: usize| -> Result<f64> {
            field(idx)
                .parse::<f64>()
                .map_err(|e| malformed(line, format!("column {}: {e}", MANIFEST_HEADER[idx])))
        };
        let opt = |idx: usize| -> Result<Option<f64>> {
            if field(idx).is_empty() {
                Ok(None)
            } else {
                num(idx).map(Some)
            }
        };
        let id = field(0).to_string();
        if id.is_empty() {
            return Err(malformed(line, "empty id".into()));
        }
        let corpus = field(1).parse::<Corpus>().map_err(|e| malformed(line, e))?;
        let sample_rate = field(4)
            .parse::<u32>()
            .map_err(|e| malformed(line, format!("sample_rate: {e}")))?;
        let channels = field(5)
            .parse::<u16>()
            .map_err(|e| malformed(line, format!("channels: {e}")))?;
        let clip = ClipRecord {
            corpus,
            path: PathBuf::from(field(2)),
            duration_s: num(3)?,
            sample_rate,
            channels,
            valence: opt(6)?,
            arousal: opt(7)?,
            id,
        };
        check_rating(&clip.id, clip.valence)?;
        check_rating(&clip.id, clip.arousal)?;
        if !seen.insert(clip.id.clone()) {
            return Err(CorpusError::DuplicateId(clip.id));
        }
        clips.push(clip);
    }
    let corpus = clips.first().map(|c| c.corpus).unwrap_or(Corpus::Custom);
    Ok(CorpusManifest {
        corpus,
        clips,
        duration_bounds: corpus.default_bounds(),
    })
}

/// Sets `(valence, arousal)` for the listed clips and leaves the rest alone.
pub fn attach_ratings(
    manifest: &CorpusManifest,
    ratings: &BTreeMap<String, (f64, f64)>,
) -> Result<CorpusManifest> {
    let mut out = manifest.clone();
    for (id, &(valence, arousal)) in ratings {
        check_rating(id, Some(valence))?;
        check_rating(id, Some(arousal))?;
        let clip = out
            .clips
            .iter_mut()
            .find(|c| &c.id == id)
            .ok_or_else(|| CorpusError::UnknownId(id.clone()))?;
        clip.valence = Some(valence);
        clip.arousal = Some(arousal);
    }
    Ok(out)
}

/// Sets one rating dimension, as produced by a single-dimension campaign.
pub fn attach_dimension_ratings(
    manifest: &CorpusManifest,
    dimension: Dimension,
    ratings: &BTreeMap<String, f64>,
) -> Result<CorpusManifest> {
    let mut out = manifest.clone();
    for (id, &value) in ratings {
        check_rating(id, Some(value))?;
        let clip = out
            .clips
            .iter_mut()
            .find(|c| &c.id == id)
            .ok_or_else(|| CorpusError::UnknownId(id.clone()))?;
        match dimension {
            Dimension::Arousal => clip.arousal = Some(value),
            Dimension::Valence => clip.valence = Some(value),
        }
    }
    Ok(out)
}
