//! Corpus ingestion, feature extraction, embedding import, and the loaders
//! the experiment commands share.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mer_core::corpus::{self, ClipRecord, Corpus, CorpusManifest, DurationBounds};
use mer_core::eval::{load_embedding_dir, write_embeddings};
use mer_core::features::{
    self, descriptor_names, make_windows, FeatureMatrix, FeatureSetSummary, FrameParams, WindowSpec,
};
use mer_core::par;
use mer_core::ranking::Dimension;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const NAMES_FILE: &str = "names.txt";
pub const SUMMARIES_FILE: &str = "summaries.csv";

pub fn fmx_path(dir: &Path, clip_id: &str) -> PathBuf {
    dir.join(format!("{clip_id}.fmx"))
}

pub fn read_manifest(path: &Path) -> Result<CorpusManifest> {
    corpus::read_manifest(path).with_context(|| format!("reading manifest {}", path.display()))
}

/// Audio paths in a manifest are relative to the manifest's directory.
pub fn audio_path(manifest_path: &Path, clip: &ClipRecord) -> PathBuf {
    match manifest_path.parent() {
        Some(dir) if clip.path.is_relative() => dir.join(&clip.path),
        _ => clip.path.clone(),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

/// Applies a ratings CSV keyed by `clip_id`. Both dimensions are read when
/// present; a file with a single `arousal` or `valence` column, such as a
/// campaign's ratings export, sets just that dimension.
pub fn apply_ratings(manifest: CorpusManifest, path: &Path) -> Result<CorpusManifest> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id_col = col("clip_id")
        .or_else(|| col("id"))
        .with_context(|| format!("{}: no clip_id column", path.display()))?;
    let dims: Vec<(Dimension, usize)> = [Dimension::Arousal, Dimension::Valence]
        .into_iter()
        .filter_map(|d| col(d.as_str()).map(|c| (d, c)))
        .collect();
    if dims.is_empty() {
        bail!("{}: no arousal or valence column", path.display());
    }
    let mut values: BTreeMap<Dimension, BTreeMap<String, f64>> = BTreeMap::new();
    for (line, row) in reader.records().enumerate() {
        let row = row.with_context(|| format!("{} record {}", path.display(), line + 1))?;
        for &(dim, c) in &dims {
            let v: f64 = row[c]
                .trim()
                .parse()
                .with_context(|| format!("{} record {}: {}", path.display(), line + 1, dim))?;
            values
                .entry(dim)
                .or_default()
                .insert(row[id_col].trim().to_string(), v);
        }
    }
    let mut out = manifest;
    for (dim, ratings) in values {
        out = corpus::attach_dimension_ratings(&out, dim, &ratings)
            .with_context(|| format!("applying {}", path.display()))?;
    }
    Ok(out)
}

/// Catalogues every `.wav` file in `audio_dir` and writes
/// `<out>/manifest.csv`. Clip ids are file stems.
pub fn ingest(
    audio_dir: &Path,
    corpus: Corpus,
    bounds: DurationBounds,
    ratings: &[PathBuf],
    out: &Path,
) -> Result<PathBuf> {
    let files = wav_files(audio_dir)?;
    if files.is_empty() {
        bail!("no .wav files in {}", audio_dir.display());
    }
    let records = par::try_map(&files, |p| {
        let abs = std::fs::canonicalize(p).with_context(|| format!("resolving {}", p.display()))?;
        corpus::ingest_clip(&abs, corpus, bounds)
            .with_context(|| format!("ingesting {}", p.display()))
    })?;
    let mut manifest = CorpusManifest::new(corpus);
    manifest.duration_bounds = bounds;
    for r in records {
        manifest.push(r)?;
    }
    for path in ratings {
        manifest = apply_ratings(manifest, path)?;
    }
    create_dir(out)?;
    let path = out.join(MANIFEST_FILE);
    corpus::write_manifest(&manifest, &path)?;
    log::info!(
        "{} clips from {} -> {}",
        manifest.clips.len(),
        audio_dir.display(),
        path.display()
    );
    Ok(path)
}

/// Writes one frame-descriptor dump per clip, the descriptor names, and the
/// 102 clip-level summaries. Summaries are merged into an existing
/// `summaries.csv`, so several corpora can share one directory.
pub fn extract_features(manifest_path: &Path, out: &Path) -> Result<usize> {
    let manifest = read_manifest(manifest_path)?;
    create_dir(out)?;
    let summaries = par::try_map(&manifest.clips, |clip| -> Result<Vec<f64>> {
        let path = audio_path(manifest_path, clip);
        let audio = corpus::decode_audio(&path)?;
        let params = FrameParams {
            sample_rate: audio.sample_rate,
            ..FrameParams::default()
        };
        let fm = features::frame_descriptors(&clip.id, &audio.samples, &params)
            .with_context(|| format!("clip {}", clip.id))?;
        let summary = features::summarize_feature_sets(&fm, &audio.samples, &params)
            .with_context(|| format!("clip {}", clip.id))?;
        features::write_fmx(&fmx_path(out, &clip.id), &fm)?;
        log::debug!("{}: {} frames", clip.id, fm.rows());
        Ok(summary.to_vector())
    })?;
    features::write_names(&out.join(NAMES_FILE), &descriptor_names())?;
    let path = out.join(SUMMARIES_FILE);
    let mut rows = if path.exists() {
        read_summary_rows(&path)?
    } else {
        BTreeMap::new()
    };
    rows.extend(manifest.ids().into_iter().zip(summaries));
    let mut w =
        csv::Writer::from_path(&path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(std::iter::once("clip_id".to_string()).chain(FeatureSetSummary::names()))?;
    for (id, values) in &rows {
        w.write_record(std::iter::once(id.clone()).chain(values.iter().map(f64::to_string)))?;
    }
    w.flush()?;
    log::info!(
        "features for {} clips -> {}",
        manifest.clips.len(),
        out.display()
    );
    Ok(manifest.clips.len())
}

/// Validates `<clip_id>.emb` files for every clip in the manifest and
/// copies them into `out`.
pub fn import_embeddings(manifest_path: &Path, source: &Path, out: &Path) -> Result<usize> {
    let manifest = read_manifest(manifest_path)?;
    let embeddings = load_embedding_dir(source, &manifest.ids())?;
    let mut dims = embeddings.values().map(|e| e.dim());
    if let Some(first) = dims.next() {
        if let Some(other) = dims.find(|&d| d != first) {
            bail!("embedding dimensions differ: {first} and {other}");
        }
    }
    for seq in embeddings.values() {
        seq.trim_ends()
            .with_context(|| format!("clip {}", seq.clip_id()))?;
    }
    create_dir(out)?;
    for (id, seq) in &embeddings {
        write_embeddings(&out.join(format!("{id}.emb")), seq)?;
    }
    log::info!("{} embedding files -> {}", embeddings.len(), out.display());
    Ok(embeddings.len())
}

/// Windows of every clip's frame-descriptor dump.
pub fn load_windows(
    manifest: &CorpusManifest,
    features_dir: &Path,
    spec: &WindowSpec,
) -> Result<BTreeMap<String, Vec<FeatureMatrix>>> {
    let names = features::read_names(&features_dir.join(NAMES_FILE))?;
    let ids = manifest.ids();
    let windows = par::try_map(&ids, |id| -> Result<Vec<FeatureMatrix>> {
        let fm = features::read_fmx(&fmx_path(features_dir, id), id, names.clone())?;
        Ok(make_windows(&fm, spec)?)
    })?;
    Ok(ids.into_iter().zip(windows).collect())
}

fn read_summary_rows(path: &Path) -> Result<BTreeMap<String, Vec<f64>>> {
    let mut reader =
        csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let expected = FeatureSetSummary::names();
    let headers = reader.headers()?.clone();
    if headers.len() != expected.len() + 1
        || headers
            .iter()
            .skip(1)
            .ne(expected.iter().map(String::as_str))
    {
        bail!(
            "{}: columns do not match the summary layout",
            path.display()
        );
    }
    let mut rows = BTreeMap::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let values = row
            .iter()
            .skip(1)
            .map(str::parse)
            .collect::<std::result::Result<Vec<f64>, _>>()
            .with_context(|| format!("{} record {}", path.display(), line + 1))?;
        rows.insert(row[0].to_string(), values);
    }
    Ok(rows)
}

/// Clip-level summaries for the manifest's clips.
pub fn load_summaries(
    manifest: &CorpusManifest,
    features_dir: &Path,
) -> Result<BTreeMap<String, FeatureSetSummary>> {
    let path = features_dir.join(SUMMARIES_FILE);
    let mut rows = read_summary_rows(&path)?;
    manifest
        .ids()
        .into_iter()
        .map(|id| {
            let v = rows
                .remove(&id)
                .with_context(|| format!("no summary for clip {id} in {}", path.display()))?;
            Ok((id, FeatureSetSummary::from_vector(&v)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratings_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = CorpusManifest::new(Corpus::Custom);
        for id in ["a", "b"] {
            m.push(ClipRecord {
                id: id.into(),
                corpus: Corpus::Custom,
                path: format!("{id}.wav").into(),
                duration_s: 1.0,
                sample_rate: 44_100,
                channels: 1,
                valence: None,
                arousal: None,
            })
            .unwrap();
        }
        let both = dir.path().join("both.csv");
        std::fs::write(&both, "clip_id,valence,arousal\na,0.5,-0.5\n").unwrap();
        let single = dir.path().join("single.csv");
        std::fs::write(&single, "clip_id,arousal\nb,1\na,0.25\n").unwrap();
        let m = apply_ratings(apply_ratings(m, &both).unwrap(), &single).unwrap();
        assert_eq!(
            (m.clips[0].valence, m.clips[0].arousal),
            (Some(0.5), Some(0.25))
        );
        assert_eq!((m.clips[1].valence, m.clips[1].arousal), (None, Some(1.0)));

        let unknown = dir.path().join("unknown.csv");
        std::fs::write(&unknown, "clip_id,arousal\nzzz,0\n").unwrap();
        assert!(apply_ratings(m.clone(), &unknown).is_err());
        let no_dim = dir.path().join("none.csv");
        std::fs::write(&no_dim, "clip_id,joy\na,0\n").unwrap();
        assert!(apply_ratings(m, &no_dim).is_err());
    }

    #[test]
    fn relative_audio_paths_follow_the_manifest() {
        let clip = ClipRecord {
            id: "a".into(),
            corpus: Corpus::Custom,
            path: "audio/a.wav".into(),
            duration_s: 1.0,
            sample_rate: 44_100,
            channels: 1,
            valence: None,
            arousal: None,
        };
        assert_eq!(
            audio_path(Path::new("/data/set/manifest.csv"), &clip),
            Path::new("/data/set/audio/a.wav")
        );
        let abs = ClipRecord {
            path: "/elsewhere/a.wav".into(),
            ..clip
        };
        assert_eq!(
            audio_path(Path::new("/data/manifest.csv"), &abs),
            Path::new("/elsewhere/a.wav")
        );
    }
}
