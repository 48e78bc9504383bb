//! The transfer, corpus-classification and feature-set experiments.

use std::collections::BTreeMap;

use super::harness::{shuffle_split_eval, LinearRfeRegressor, SvrRegressor};
use super::report::{
    ClassificationReport, DimensionResult, FeatureAnalysisReport, FeatureSetResult, TransferReport,
    TransferSource,
};
use super::{ClipAccess, EmbeddingSequence, EvalError, Probe, Result, SplitPlan, Stage};
use crate::corpus::CorpusManifest;
use crate::features::{FeatureMatrix, FeatureSet, FeatureSetSummary, MinMax};
use crate::ranking::Dimension;
use crate::seqnet::{self, Head, LstmModel, Sample, TrainConfig};
use crate::svr::{Grid, SvrParams};

/// Trimmed embedding vectors per clip.
pub fn sed_inputs(
    embeddings: &BTreeMap<String, EmbeddingSequence>,
) -> Result<BTreeMap<String, Vec<Vec<f64>>>> {
    embeddings
        .iter()
        .map(|(id, seq)| Ok((id.clone(), seq.trim_ends()?.vectors().to_vec())))
        .collect()
}

/// Final hidden state of `model` for each window, after scaling the window
/// with the statistics the model was trained under.
pub fn embed_windows(
    model: &LstmModel,
    scaler: &MinMax,
    windows: &[FeatureMatrix],
) -> Result<Vec<Vec<f64>>> {
    crate::par::try_map(windows, |w| {
        let scaled = scaler.transform(w)?;
        Ok::<_, EvalError>(model.embed(scaled.values())?)
    })
}

pub fn ser_inputs(
    model: &LstmModel,
    scaler: &MinMax,
    windows: &BTreeMap<String, Vec<FeatureMatrix>>,
) -> Result<BTreeMap<String, Vec<Vec<f64>>>> {
    windows
        .iter()
        .map(|(id, w)| Ok((id.clone(), embed_windows(model, scaler, w)?)))
        .collect()
}

#[derive(Debug, Clone)]
pub struct TransferConfig {
    pub n_repeats: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub grid: Grid,
    pub base: SvrParams,
    pub folds: usize,
}

impl Default for TransferConfig {
    fn default() -> Self {
        Self {
            n_repeats: SplitPlan::DEFAULT_REPEATS,
            test_fraction: SplitPlan::DEFAULT_TEST_FRACTION,
            seed: 0,
            grid: Grid::default(),
            base: SvrParams::default(),
            folds: 5,
        }
    }
}

fn ratings(manifest: &CorpusManifest, dimension: Dimension) -> Result<BTreeMap<String, f64>> {
    manifest
        .clips
        .iter()
        .map(|c| {
            c.rating(dimension)
                .map(|r| (c.id.clone(), r))
                .ok_or_else(|| EvalError::MissingRating {
                    clip_id: c.id.clone(),
                    dimension: dimension.to_string(),
                })
        })
        .collect()
}

/// SVR on per-window embeddings, scored at clip level over repeated splits.
/// Every dimension uses the same split plan.
pub fn run_transfer_experiment(
    source: TransferSource,
    inputs: &BTreeMap<String, Vec<Vec<f64>>>,
    manifest: &CorpusManifest,
    dimensions: &[Dimension],
    config: &TransferConfig,
    probe: &dyn Probe,
) -> Result<TransferReport> {
    let ids = manifest.ids();
    if let Some(id) = ids.iter().find(|id| !inputs.contains_key(*id)) {
        return Err(EvalError::MissingInput(id.clone()));
    }
    let plan = SplitPlan::new(&ids, config.n_repeats, config.test_fraction, config.seed)?;
    let regressor = SvrRegressor {
        grid: config.grid.clone(),
        base: config.base,
        folds: config.folds,
    };
    let mut results = Vec::new();
    for &dim in dimensions {
        let targets = ratings(manifest, dim)?;
        let out = shuffle_split_eval(inputs, &targets, &plan, &regressor, true, probe)?;
        results.push(DimensionResult::from_repeats(
            dim,
            out.into_iter().map(|o| o.score).collect(),
        ));
    }
    Ok(TransferReport {
        source,
        corpus: manifest.corpus.to_string(),
        seed: config.seed,
        n_repeats: config.n_repeats,
        dimensions: results,
    })
}

#[derive(Debug, Clone)]
pub struct ClassificationConfig {
    pub hidden: usize,
    pub train: TrainConfig,
    /// Fraction of training clips held out to measure accuracy.
    pub heldout_fraction: f64,
    pub seed: u64,
}

impl Default for ClassificationConfig {
    fn default() -> Self {
        Self {
            hidden: seqnet::DEFAULT_HIDDEN,
            train: TrainConfig::default(),
            heldout_fraction: 0.1,
            seed: 0,
        }
    }
}

/// Windowed descriptor matrices per clip for the two training classes and
/// the corpus to classify.
pub struct ClassificationInputs<'a> {
    pub positive: (&'a str, &'a BTreeMap<String, Vec<FeatureMatrix>>),
    pub negative: (&'a str, &'a BTreeMap<String, Vec<FeatureMatrix>>),
    pub test: (&'a str, &'a BTreeMap<String, Vec<FeatureMatrix>>),
}

fn flat(scaler: &MinMax, w: &FeatureMatrix) -> Result<Vec<f64>> {
    Ok(scaler.transform(w)?.values().to_vec())
}

/// Trains a sigmoid LSTM to tell the two training corpora apart, measures
/// window accuracy on held-out clips, and counts how the test corpus is
/// classified. Clip keys in the probe are `<label>/<clip id>`.
pub fn run_classification_experiment(
    inputs: &ClassificationInputs<'_>,
    config: &ClassificationConfig,
    probe: &dyn Probe,
) -> Result<ClassificationReport> {
    let (pos_label, neg_label, test_label) = (inputs.positive.0, inputs.negative.0, inputs.test.0);
    if pos_label == neg_label {
        return Err(EvalError::Invalid("class labels must differ".into()));
    }
    let mut pooled: BTreeMap<String, (f64, &Vec<FeatureMatrix>)> = BTreeMap::new();
    for ((label, data), y) in [(inputs.positive, 1.0), (inputs.negative, 0.0)] {
        for (id, w) in data {
            if w.is_empty() {
                return Err(EvalError::NoWindows(id.clone()));
            }
            pooled.insert(format!("{label}/{id}"), (y, w));
        }
    }
    let has = |y: f64| pooled.values().any(|(l, _)| *l == y);
    if !has(1.0) || !has(0.0) {
        return Err(EvalError::SingleClass);
    }
    let keys: Vec<String> = pooled.keys().cloned().collect();
    let split = SplitPlan::new(&keys, 1, config.heldout_fraction, config.seed)?
        .splits
        .remove(0);
    let access = ClipAccess::new(&pooled, probe, 0);

    let fit = access.fetch(Stage::Normalization, &split.train)?;
    let scaler = MinMax::fit_rows(
        fit.iter()
            .flat_map(|(_, w)| w.iter().flat_map(|m| m.iter_rows())),
    )?;

    let mut samples = Vec::new();
    let mut train_windows = BTreeMap::new();
    for (y, windows) in access.fetch(Stage::Training, &split.train)? {
        let label = if *y == 1.0 { pos_label } else { neg_label };
        *train_windows.entry(label.to_string()).or_insert(0) += windows.len();
        for w in windows.iter() {
            samples.push(Sample {
                sequence: flat(&scaler, w)?,
                label: *y,
            });
        }
    }
    if !samples.iter().any(|s| s.label == 1.0) || !samples.iter().any(|s| s.label == 0.0) {
        return Err(EvalError::SingleClass);
    }
    let input_dim = scaler.dims();
    let init = LstmModel::init(input_dim, config.hidden, Head::Sigmoid, config.seed);
    let train_cfg = TrainConfig {
        seed: config.seed,
        ..config.train
    };
    let (model, history) = seqnet::train(init, &samples, &train_cfg)?;

    let (mut correct, mut heldout_windows) = (0, 0);
    for (y, windows) in access.fetch(Stage::Prediction, &split.test)? {
        for w in windows.iter() {
            let p = model.predict(&flat(&scaler, w)?)?;
            correct += usize::from((p >= 0.5) == (*y == 1.0));
            heldout_windows += 1;
        }
    }

    let test_seqs: Vec<Vec<f64>> = inputs
        .test
        .1
        .values()
        .flatten()
        .map(|w| flat(&scaler, w))
        .collect::<Result<_>>()?;
    let preds = crate::par::try_map(&test_seqs, |s| model.predict(s))?;
    let positive = preds.iter().filter(|&&p| p >= 0.5).count();
    let test_windows = preds.len();
    let test_counts = BTreeMap::from([
        (pos_label.to_string(), positive),
        (neg_label.to_string(), test_windows - positive),
    ]);
    Ok(ClassificationReport {
        positive_label: pos_label.to_string(),
        negative_label: neg_label.to_string(),
        test_label: test_label.to_string(),
        seed: config.seed,
        train_windows,
        heldout_clips: split.test,
        heldout_windows,
        heldout_accuracy: if heldout_windows > 0 {
            correct as f64 / heldout_windows as f64
        } else {
            0.0
        },
        test_windows,
        test_counts,
        test_fraction_positive: if test_windows > 0 {
            positive as f64 / test_windows as f64
        } else {
            0.0
        },
        epochs_run: history.epochs.len(),
        best_epoch: history.best_epoch,
    })
}

#[derive(Debug, Clone)]
pub struct FeatureAnalysisConfig {
    pub n_repeats: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub c_grid: Vec<f64>,
    pub base: SvrParams,
    pub folds: usize,
    pub sets: Vec<FeatureSet>,
}

impl Default for FeatureAnalysisConfig {
    fn default() -> Self {
        Self {
            n_repeats: SplitPlan::DEFAULT_REPEATS,
            test_fraction: SplitPlan::DEFAULT_TEST_FRACTION,
            seed: 0,
            c_grid: Grid::default_c(),
            base: SvrParams::default(),
            folds: 5,
            sets: FeatureSet::ALL.to_vec(),
        }
    }
}

/// Linear SVR with C search and feature elimination on each descriptor
/// group, scored over repeated clip splits.
pub fn run_feature_analysis(
    summaries: &BTreeMap<String, FeatureSetSummary>,
    manifest: &CorpusManifest,
    dimension: Dimension,
    config: &FeatureAnalysisConfig,
    probe: &dyn Probe,
) -> Result<FeatureAnalysisReport> {
    let ids = manifest.ids();
    if let Some(id) = ids.iter().find(|id| !summaries.contains_key(*id)) {
        return Err(EvalError::MissingInput(id.clone()));
    }
    let targets = ratings(manifest, dimension)?;
    let plan = SplitPlan::new(&ids, config.n_repeats, config.test_fraction, config.seed)?;
    let regressor = LinearRfeRegressor {
        c_grid: config.c_grid.clone(),
        base: config.base,
        folds: config.folds,
    };
    let names = FeatureSetSummary::names();
    let mut sets = Vec::new();
    for &set in &config.sets {
        let range = set.range();
        let inputs: BTreeMap<String, Vec<Vec<f64>>> = summaries
            .iter()
            .map(|(id, s)| (id.clone(), vec![s.to_vector()[range.clone()].to_vec()]))
            .collect();
        let out = shuffle_split_eval(&inputs, &targets, &plan, &regressor, true, probe)?;
        let selected = out
            .iter()
            .map(|o| {
                o.model
                    .selected
                    .iter()
                    .map(|&j| names[range.start + j].clone())
                    .collect()
            })
            .collect();
        let scores: Vec<_> = out.iter().map(|o| o.score).collect();
        let summary = DimensionResult::from_repeats(dimension, scores);
        sets.push(FeatureSetResult {
            set,
            dims: range.len(),
            repeats: summary.repeats,
            mean_r2: summary.mean_r2,
            mean_mse: summary.mean_mse,
            selected,
        });
    }
    Ok(FeatureAnalysisReport {
        corpus: manifest.corpus.to_string(),
        dimension,
        seed: config.seed,
        n_repeats: config.n_repeats,
        sets,
    })
}
