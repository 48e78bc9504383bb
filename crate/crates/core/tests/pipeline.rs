//! Audio on disk through descriptors, windows, an LSTM and both regression
//! experiments, using only the public API.

use std::collections::BTreeMap;
use std::path::Path;

use mer_core::corpus::{self, Corpus, CorpusManifest, DurationBounds, SampleFormat};
use mer_core::eval::{
    run_feature_analysis, run_transfer_experiment, ser_inputs, FeatureAnalysisConfig, NoProbe,
    TransferConfig, TransferSource,
};
use mer_core::features::{
    self, make_windows, FeatureMatrix, FeatureSet, FeatureSetSummary, FrameParams, MinMax,
    WindowSpec, SUMMARY_DIMS,
};
use mer_core::ranking::Dimension;
use mer_core::seqnet::{self, Head, LstmModel, Sample, TrainConfig};
use mer_core::svr::Grid;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const CLIPS: usize = 16;
const SPEC: WindowSpec = WindowSpec {
    length: 20,
    hop: 20,
    head_trim: 5,
    tail_trim: 5,
};

/// Clips whose arousal follows their amplitude, so loudness descriptors
/// carry the signal.
fn write_corpus(dir: &Path) -> CorpusManifest {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let bounds = DurationBounds::new(1.0, 5.0).unwrap();
    let mut manifest = CorpusManifest::new(Corpus::Custom);
    manifest.duration_bounds = bounds;
    let mut arousal = BTreeMap::new();
    for i in 0..CLIPS {
        let amp = 0.05 + 0.9 * i as f64 / CLIPS as f64;
        let freq = 180.0 + 40.0 * (i % 5) as f64;
        let samples: Vec<f64> = (0..3 * 44_100)
            .map(|n| {
                let t = n as f64 / 44_100.0;
                let pulse = if n % 11_025 < 64 { 0.3 } else { 0.0 };
                amp * ((std::f64::consts::TAU * freq * t).sin() + pulse)
                    + 0.01 * rng.random_range(-1.0..1.0)
            })
            .collect();
        let id = format!("clip{i:02}");
        let path = dir.join(format!("{id}.wav"));
        corpus::write_wav(&path, &samples, 44_100, 1, SampleFormat::Int16).unwrap();
        manifest
            .push(corpus::ingest_clip(&path, Corpus::Custom, bounds).unwrap())
            .unwrap();
        arousal.insert(id, -1.0 + 2.0 * i as f64 / (CLIPS - 1) as f64);
    }
    corpus::attach_dimension_ratings(&manifest, Dimension::Arousal, &arousal).unwrap()
}

#[test]
fn audio_to_regression_reports() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_corpus(dir.path());
    let manifest_path = dir.path().join("manifest.csv");
    corpus::write_manifest(&manifest, &manifest_path).unwrap();
    let manifest = corpus::read_manifest(&manifest_path).unwrap();
    assert_eq!(manifest.clips.len(), CLIPS);

    let params = FrameParams::default();
    let mut summaries = BTreeMap::new();
    let mut windows: BTreeMap<String, Vec<FeatureMatrix>> = BTreeMap::new();
    for clip in &manifest.clips {
        let audio = corpus::decode_audio(&clip.path).unwrap();
        let fm = features::frame_descriptors(&clip.id, &audio.samples, &params).unwrap();
        let summary = features::summarize_feature_sets(&fm, &audio.samples, &params).unwrap();
        let v = summary.to_vector();
        assert_eq!(v.len(), SUMMARY_DIMS);
        assert!(v.iter().all(|x| x.is_finite()), "{}", clip.id);
        summaries.insert(clip.id.clone(), FeatureSetSummary::from_vector(&v).unwrap());
        let ws = make_windows(&fm, &SPEC).unwrap();
        assert!(!ws.is_empty());
        windows.insert(clip.id.clone(), ws);
    }

    let fa = FeatureAnalysisConfig {
        n_repeats: 3,
        test_fraction: 0.25,
        seed: 4,
        c_grid: vec![1.0, 10.0],
        folds: 3,
        sets: vec![FeatureSet::Loudness, FeatureSet::Tonal],
        ..FeatureAnalysisConfig::default()
    };
    let report =
        run_feature_analysis(&summaries, &manifest, Dimension::Arousal, &fa, &NoProbe).unwrap();
    let loudness = report.set(FeatureSet::Loudness).unwrap();
    assert_eq!(loudness.repeats.len(), 3);
    assert!(loudness.mean_r2 > 0.5, "loudness R² {}", loudness.mean_r2);
    assert_eq!(
        report,
        run_feature_analysis(&summaries, &manifest, Dimension::Arousal, &fa, &NoProbe).unwrap()
    );

    let scaler = MinMax::fit_rows(
        windows
            .values()
            .flatten()
            .flat_map(FeatureMatrix::iter_rows),
    )
    .unwrap();
    let samples: Vec<Sample> = windows
        .iter()
        .flat_map(|(id, ws)| {
            let label = manifest.get(id).unwrap().arousal.unwrap();
            ws.iter().map(move |w| (w, label))
        })
        .map(|(w, label)| Sample {
            sequence: scaler.transform(w).unwrap().values().to_vec(),
            label,
        })
        .collect();
    let config = TrainConfig {
        epochs: 4,
        batch_size: 8,
        seed: 4,
        ..TrainConfig::default()
    };
    let (model, history) = seqnet::train(
        LstmModel::init(scaler.dims(), 6, Head::Linear, 4),
        &samples,
        &config,
    )
    .unwrap();
    assert!(history.best_val_loss.is_finite());

    let inputs = ser_inputs(&model, &scaler, &windows).unwrap();
    assert!(inputs.values().all(|seq| seq.iter().all(|e| e.len() == 6)));
    let transfer = TransferConfig {
        n_repeats: 3,
        test_fraction: 0.25,
        seed: 4,
        grid: Grid::rbf(vec![1.0, 8.0], vec![0.1]),
        folds: 3,
        ..TransferConfig::default()
    };
    let run = || {
        run_transfer_experiment(
            TransferSource::Ser,
            &inputs,
            &manifest,
            &[Dimension::Arousal],
            &transfer,
            &NoProbe,
        )
        .unwrap()
    };
    let report = run();
    assert_eq!(report.dimensions.len(), 1);
    assert_eq!(report.dimensions[0].repeats.len(), 3);
    assert!(report.dimensions[0]
        .repeats
        .iter()
        .all(|r| r.r2.is_finite() && r.mse >= 0.0));
    assert_eq!(report, run());
}
