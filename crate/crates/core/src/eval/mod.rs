//! Experiment harness: clip-level shuffle splits, window-to-clip ensembling,
//! the transfer, classification and feature-set runners, and report output.
//!
//! Every runner reads per-clip data through a [`ClipAccess`], which reports
//! each read to a [`Probe`] together with the pipeline stage that consumed
//! it. Tests use [`RecordingProbe`] to prove that held-out clips never reach
//! normalization, model selection or feature selection.

mod embedding;
mod experiments;
mod harness;
mod report;

use std::collections::BTreeMap;
use std::sync::Mutex;

use rand::seq::SliceRandom;
use thiserror::Error;

pub use embedding::{
    load_embedding_dir, read_embeddings, write_embeddings, EmbeddingSequence, EMB_MAGIC,
};
pub use experiments::{
    embed_windows, run_classification_experiment, run_feature_analysis, run_transfer_experiment,
    sed_inputs, ser_inputs, ClassificationConfig, ClassificationInputs, FeatureAnalysisConfig,
    TransferConfig,
};
pub use harness::{
    shuffle_split_eval, ClipRegressor, LinearRfeRegressor, MeanRegressor, RepeatOutcome, RfeModel,
    SvrRegressor,
};
pub use report::{
    compare_corpora, read_reports, render_classification, render_feature_table,
    render_transfer_table, write_reports, ClassificationReport, ComparisonReport, DimensionResult,
    ExperimentReport, FeatureAnalysisReport, FeatureSetResult, RepeatScore, TransferReport,
    TransferSource,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("clip {clip_id:?}: cannot trim a sequence of {len} vectors")]
    TrimTooShort { clip_id: String, len: usize },
    #[error("no input data for clip {0:?}")]
    MissingInput(String),
    #[error("clip {0:?} has no windows")]
    NoWindows(String),
    #[error("clip {clip_id:?} has no {dimension} rating")]
    MissingRating { clip_id: String, dimension: String },
    #[error("clip {0:?} has no predictions to average")]
    EmptyPredictions(String),
    #[error("training data has a single class")]
    SingleClass,
    #[error(transparent)]
    Svr(#[from] crate::svr::SvrError),
    #[error(transparent)]
    SeqNet(#[from] crate::seqnet::SeqNetError),
    #[error(transparent)]
    Features(#[from] crate::features::FeatureError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format {
        path: std::path::PathBuf,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Pipeline stage that consumed a clip's data.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize, serde::Deserialize,
)]
pub enum Stage {
    Normalization,
    GridSearch,
    FeatureSelection,
    Training,
    Prediction,
}

impl Stage {
    /// Stages that must only ever see training clips.
    pub fn is_fitting(self) -> bool {
        !matches!(self, Stage::Prediction)
    }
}

pub trait Probe: Sync {
    fn touch(&self, repeat: usize, stage: Stage, clip_ids: &[String]);
}

pub struct NoProbe;

impl Probe for NoProbe {
    fn touch(&self, _: usize, _: Stage, _: &[String]) {}
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Access {
    pub repeat: usize,
    pub stage: Stage,
    pub clip_ids: Vec<String>,
}

/// Keeps every reported access.
#[derive(Debug, Default)]
pub struct RecordingProbe {
    events: Mutex<Vec<Access>>,
}

impl RecordingProbe {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn events(&self) -> Vec<Access> {
        let mut e = self.events.lock().expect("probe lock").clone();
        e.sort_by_key(|a| (a.repeat, a.stage));
        e
    }

    /// Clips in `held_out(repeat)` that reached a fitting stage of that repeat.
    pub fn leaks<'a>(
        &self,
        held_out: impl Fn(usize) -> &'a [String],
    ) -> Vec<(usize, Stage, String)> {
        let mut out = Vec::new();
        for a in self.events() {
            if !a.stage.is_fitting() {
                continue;
            }
            let test = held_out(a.repeat);
            out.extend(
                a.clip_ids
                    .iter()
                    .filter(|id| test.contains(id))
                    .map(|id| (a.repeat, a.stage, id.clone())),
            );
        }
        out
    }
}

impl Probe for RecordingProbe {
    fn touch(&self, repeat: usize, stage: Stage, clip_ids: &[String]) {
        self.events.lock().expect("probe lock").push(Access {
            repeat,
            stage,
            clip_ids: clip_ids.to_vec(),
        });
    }
}

/// Read access to per-clip data that reports every read to a probe.
pub struct ClipAccess<'a, T> {
    data: &'a BTreeMap<String, T>,
    probe: &'a dyn Probe,
    repeat: usize,
}

impl<'a, T> ClipAccess<'a, T> {
    pub fn new(data: &'a BTreeMap<String, T>, probe: &'a dyn Probe, repeat: usize) -> Self {
        Self {
            data,
            probe,
            repeat,
        }
    }

    pub fn fetch(&self, stage: Stage, ids: &[String]) -> Result<Vec<&'a T>> {
        self.probe.touch(self.repeat, stage, ids);
        ids.iter()
            .map(|id| {
                self.data
                    .get(id)
                    .ok_or_else(|| EvalError::MissingInput(id.clone()))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Repeated random clip-level train/test splits.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SplitPlan {
    pub n_repeats: usize,
    pub test_fraction: f64,
    pub seed: u64,
    pub splits: Vec<Split>,
}

impl SplitPlan {
    pub const DEFAULT_REPEATS: usize = 10;
    pub const DEFAULT_TEST_FRACTION: f64 = 0.1;

    /// `round(test_fraction · n)` test clips per repeat, at least one on each
    /// side. Repeat `r` shuffles with a stream derived from `(seed, r)`.
    pub fn new(ids: &[String], n_repeats: usize, test_fraction: f64, seed: u64) -> Result<Self> {
        if n_repeats == 0 {
            return Err(EvalError::Invalid("need at least one repeat".into()));
        }
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(EvalError::Invalid(format!(
                "test fraction {test_fraction} outside (0, 1)"
            )));
        }
        let mut sorted = ids.to_vec();
        sorted.sort();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(EvalError::Invalid(
                "duplicate clip id in split input".into(),
            ));
        }
        let n = sorted.len();
        if n < 2 {
            return Err(EvalError::Invalid(format!("{n} clips cannot be split")));
        }
        let n_test = ((test_fraction * n as f64).round() as usize).clamp(1, n - 1);
        let splits = (0..n_repeats)
            .map(|r| {
                let mut order = sorted.clone();
                order.shuffle(&mut crate::rng::stream(seed, &[0x5350_4c54, r as u64]));
                let mut test = order[..n_test].to_vec();
                let mut train = order[n_test..].to_vec();
                test.sort();
                train.sort();
                Split { train, test }
            })
            .collect();
        Ok(Self {
            n_repeats,
            test_fraction,
            seed,
            splits,
        })
    }

    pub fn default_for(ids: &[String], seed: u64) -> Result<Self> {
        Self::new(
            ids,
            Self::DEFAULT_REPEATS,
            Self::DEFAULT_TEST_FRACTION,
            seed,
        )
    }
}

/// Mean prediction per clip.
pub fn ensemble_average(
    window_preds: &BTreeMap<String, Vec<f64>>,
) -> Result<BTreeMap<String, f64>> {
    window_preds
        .iter()
        .map(|(id, p)| {
            if p.is_empty() {
                Err(EvalError::EmptyPredictions(id.clone()))
            } else {
                Ok((id.clone(), p.iter().sum::<f64>() / p.len() as f64))
            }
        })
        .collect()
}
