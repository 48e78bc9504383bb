//! The SER training step and the four experiment commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use mer_core::corpus::CorpusManifest;
use mer_core::eval::{
    self, compare_corpora, load_embedding_dir, render_classification, render_feature_table,
    render_transfer_table, run_classification_experiment, run_feature_analysis,
    run_transfer_experiment, sed_inputs, ser_inputs, ClassificationConfig, ClassificationInputs,
    ExperimentReport, FeatureAnalysisConfig, NoProbe, SplitPlan, TransferConfig, TransferReport,
    TransferSource,
};
use mer_core::features::{FeatureMatrix, FeatureSet, MinMax, WindowSpec};
use mer_core::ranking::Dimension;
use mer_core::seqnet::{self, AdamConfig, Head, LstmModel, Sample, TrainConfig};
use mer_core::svr::{Grid, SvrParams};
use serde::{Deserialize, Serialize};

use crate::config::Settings;
use crate::data;

pub fn window_spec(s: &Settings) -> Result<WindowSpec> {
    let d = WindowSpec::default();
    Ok(WindowSpec {
        length: s.get_or("window.length", d.length)?,
        hop: s.get_or("window.hop", d.hop)?,
        head_trim: s.get_or("window.head_trim", d.head_trim)?,
        tail_trim: s.get_or("window.tail_trim", d.tail_trim)?,
    })
}

fn svr_base(s: &Settings) -> Result<SvrParams> {
    let d = SvrParams::default();
    Ok(SvrParams {
        epsilon: s.get_or("svr.epsilon", d.epsilon)?,
        ..d
    })
}

pub fn transfer_config(s: &Settings, seed: u64) -> Result<TransferConfig> {
    let c = s.list("svr.c")?.unwrap_or_else(Grid::default_c);
    let gamma = s.list("svr.gamma")?.unwrap_or_else(Grid::default_gamma);
    Ok(TransferConfig {
        n_repeats: s.get_or("eval.repeats", SplitPlan::DEFAULT_REPEATS)?,
        test_fraction: s.get_or("eval.test_fraction", SplitPlan::DEFAULT_TEST_FRACTION)?,
        seed,
        grid: Grid::rbf(c, gamma),
        base: svr_base(s)?,
        folds: s.get_or("svr.folds", 5)?,
    })
}

pub fn feature_config(s: &Settings, seed: u64) -> Result<FeatureAnalysisConfig> {
    Ok(FeatureAnalysisConfig {
        n_repeats: s.get_or("eval.repeats", SplitPlan::DEFAULT_REPEATS)?,
        test_fraction: s.get_or("eval.test_fraction", SplitPlan::DEFAULT_TEST_FRACTION)?,
        seed,
        c_grid: s.list("svr.c")?.unwrap_or_else(Grid::default_c),
        base: svr_base(s)?,
        folds: s.get_or("svr.folds", 5)?,
        sets: FeatureSet::ALL.to_vec(),
    })
}

pub fn train_config(s: &Settings, seed: u64) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    Ok(TrainConfig {
        adam: AdamConfig {
            learning_rate: s.get_or("train.learning_rate", d.adam.learning_rate)?,
            ..d.adam
        },
        epochs: s.get_or("train.epochs", d.epochs)?,
        val_fraction: s.get_or("train.val_fraction", d.val_fraction)?,
        batch_size: s.get_or("train.batch_size", d.batch_size)?,
        seed,
    })
}

/// The `dimension` setting, or both dimensions when unset.
pub fn dimensions(s: &Settings) -> Result<Vec<Dimension>> {
    Ok(match s.get::<Dimension>("dimension")? {
        Some(d) => vec![d],
        None => vec![Dimension::Arousal, Dimension::Valence],
    })
}

fn manifests(s: &Settings) -> Result<Vec<CorpusManifest>> {
    let paths: Vec<PathBuf> = s.list("manifest")?.unwrap_or_default();
    if paths.is_empty() {
        bail!("missing --manifest (or `manifest = ...` in the config file)");
    }
    paths.iter().map(|p| data::read_manifest(p)).collect()
}

/// Writes `<out>/<stem>.jsonl` and `<out>/<stem>.txt` and prints the text.
fn emit(out: &Path, stem: &str, reports: &[ExperimentReport], text: &str) -> Result<()> {
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    eval::write_reports(&out.join(format!("{stem}.jsonl")), reports)?;
    let txt = out.join(format!("{stem}.txt"));
    std::fs::write(&txt, text).with_context(|| format!("writing {}", txt.display()))?;
    print!("{text}");
    Ok(())
}

fn transfer_text(title: &str, reports: &[TransferReport], extra: &[ExperimentReport]) -> String {
    let mut text = render_transfer_table(title, &reports.iter().collect::<Vec<_>>());
    for r in extra {
        if let ExperimentReport::Comparison(c) = r {
            text.push_str(&format!(
                "\npaired t-test {} {} vs {}: t = {:.4}, df = {}, p = {:.4}",
                c.dimension, c.corpus_a, c.corpus_b, c.t_test.t, c.t_test.df, c.t_test.p
            ));
        }
    }
    text.push('\n');
    text
}

/// Reports for each corpus, plus paired comparisons when there are two.
fn transfer_reports(reports: Vec<TransferReport>) -> Result<Vec<ExperimentReport>> {
    let mut out: Vec<ExperimentReport> = reports
        .iter()
        .cloned()
        .map(ExperimentReport::Transfer)
        .collect();
    if let [a, b] = reports.as_slice() {
        out.extend(
            compare_corpora(a, b)?
                .into_iter()
                .map(ExperimentReport::Comparison),
        );
    }
    Ok(out)
}

pub fn sed_experiment(s: &Settings) -> Result<()> {
    let seed: u64 = s.require("seed")?;
    let embeddings_dir = s.path("embeddings")?;
    let out = s.path("out")?;
    let config = transfer_config(s, seed)?;
    let dims = dimensions(s)?;
    let mut reports = Vec::new();
    for manifest in manifests(s)? {
        let embeddings = load_embedding_dir(&embeddings_dir, &manifest.ids())?;
        let inputs = sed_inputs(&embeddings)?;
        log::info!(
            "SED transfer on {} ({} clips)",
            manifest.corpus,
            manifest.clips.len()
        );
        reports.push(run_transfer_experiment(
            TransferSource::Sed,
            &inputs,
            &manifest,
            &dims,
            &config,
            &NoProbe,
        )?);
    }
    let all = transfer_reports(reports.clone())?;
    let text = transfer_text("Transfer Learning (SED + SVR) Performances", &reports, &all);
    emit(&out, "sed-experiment", &all, &text)
}

/// Min-max statistics stored beside a trained SER model.
#[derive(Debug, Serialize, Deserialize)]
struct ScalerFile {
    min: Vec<f64>,
    max: Vec<f64>,
}

fn model_paths(dir: &Path, dim: Dimension) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("ser-{dim}.lstm")),
        dir.join(format!("ser-{dim}.scaler.json")),
    )
}

fn rating(manifest: &CorpusManifest, id: &str, dim: Dimension) -> Result<f64> {
    manifest
        .get(id)
        .and_then(|c| c.rating(dim))
        .with_context(|| format!("clip {id} has no {dim} rating"))
}

/// Trains one LSTM regressor per dimension on rated clips' windows.
pub fn train_ser(s: &Settings) -> Result<()> {
    let seed: u64 = s.require("seed")?;
    let manifest = data::read_manifest(&s.path("manifest")?)?;
    let windows = data::load_windows(&manifest, &s.path("features")?, &window_spec(s)?)?;
    let models = s.path("models")?;
    let hidden = s.get_or("train.hidden", seqnet::DEFAULT_HIDDEN)?;
    let config = train_config(s, seed)?;
    std::fs::create_dir_all(&models).with_context(|| format!("creating {}", models.display()))?;

    let scaler = MinMax::fit_rows(
        windows
            .values()
            .flatten()
            .flat_map(FeatureMatrix::iter_rows),
    )?;
    for dim in dimensions(s)? {
        let mut samples = Vec::new();
        for (id, ws) in &windows {
            let label = rating(&manifest, id, dim)?;
            for w in ws {
                samples.push(Sample {
                    sequence: scaler.transform(w)?.values().to_vec(),
                    label,
                });
            }
        }
        log::info!("training {dim} model on {} windows", samples.len());
        let init = LstmModel::init(scaler.dims(), hidden, Head::Linear, seed);
        let (model, history) = seqnet::train(init, &samples, &config)?;
        let (model_path, scaler_path) = model_paths(&models, dim);
        seqnet::write_model(&model_path, &model)?;
        let stats = ScalerFile {
            min: scaler.min.clone(),
            max: scaler.max.clone(),
        };
        std::fs::write(&scaler_path, serde_json::to_string_pretty(&stats)? + "\n")?;
        let history_path = models.join(format!("ser-{dim}.history.json"));
        std::fs::write(
            &history_path,
            serde_json::to_string_pretty(&history)? + "\n",
        )?;
        println!(
            "{dim}: best epoch {} of {}, validation loss {:.6} -> {}",
            history.best_epoch,
            history.epochs.len(),
            history.best_val_loss,
            model_path.display()
        );
    }
    Ok(())
}

fn load_ser(dir: &Path, dim: Dimension) -> Result<(LstmModel, MinMax)> {
    let (model_path, scaler_path) = model_paths(dir, dim);
    if !model_path.exists() {
        bail!(
            "no trained {dim} model at {}; run `mer train-ser` on a rated corpus first",
            model_path.display()
        );
    }
    let model = seqnet::read_model(&model_path)?;
    let text = std::fs::read_to_string(&scaler_path)
        .with_context(|| format!("reading {}", scaler_path.display()))?;
    let stats: ScalerFile = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", scaler_path.display()))?;
    if stats.min.len() != model.input_dim() || stats.max.len() != model.input_dim() {
        bail!(
            "{} does not match the model's input width",
            scaler_path.display()
        );
    }
    Ok((
        model,
        MinMax {
            min: stats.min,
            max: stats.max,
        },
    ))
}

pub fn ser_experiment(s: &Settings) -> Result<()> {
    let seed: u64 = s.require("seed")?;
    let features = s.path("features")?;
    let models = s.path("models")?;
    let out = s.path("out")?;
    let config = transfer_config(s, seed)?;
    let spec = window_spec(s)?;
    let dims = dimensions(s)?;
    let trained = dims
        .iter()
        .map(|&d| Ok((d, load_ser(&models, d)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    let mut reports = Vec::new();
    for manifest in manifests(s)? {
        let windows = data::load_windows(&manifest, &features, &spec)?;
        let mut results = Vec::new();
        for &dim in &dims {
            let (model, scaler) = &trained[&dim];
            log::info!("SER transfer on {} {dim}", manifest.corpus);
            let inputs = ser_inputs(model, scaler, &windows)?;
            let r = run_transfer_experiment(
                TransferSource::Ser,
                &inputs,
                &manifest,
                &[dim],
                &config,
                &NoProbe,
            )?;
            results.extend(r.dimensions);
        }
        reports.push(TransferReport {
            source: TransferSource::Ser,
            corpus: manifest.corpus.to_string(),
            seed,
            n_repeats: config.n_repeats,
            dimensions: results,
        });
    }
    let all = transfer_reports(reports.clone())?;
    let text = transfer_text("Transfer Learning (SER + SVR) Performances", &reports, &all);
    emit(&out, "ser-experiment", &all, &text)
}

pub fn classify(s: &Settings) -> Result<()> {
    let seed: u64 = s.require("seed")?;
    let features = s.path("features")?;
    let out = s.path("out")?;
    let spec = window_spec(s)?;
    let load = |key: &str| -> Result<(String, BTreeMap<String, Vec<FeatureMatrix>>)> {
        let m = data::read_manifest(&s.path(key)?)?;
        Ok((
            m.corpus.to_string(),
            data::load_windows(&m, &features, &spec)?,
        ))
    };
    let (pos, neg, test) = (load("positive")?, load("negative")?, load("test")?);
    let defaults = ClassificationConfig::default();
    let config = ClassificationConfig {
        hidden: s.get_or("train.hidden", defaults.hidden)?,
        train: train_config(s, seed)?,
        heldout_fraction: s.get_or("classify.heldout_fraction", defaults.heldout_fraction)?,
        seed,
    };
    let inputs = ClassificationInputs {
        positive: (&pos.0, &pos.1),
        negative: (&neg.0, &neg.1),
        test: (&test.0, &test.1),
    };
    let report = run_classification_experiment(&inputs, &config, &NoProbe)?;
    let text = render_classification(&report);
    emit(
        &out,
        "classify",
        &[ExperimentReport::Classification(report)],
        &text,
    )
}

pub fn feature_analysis(s: &Settings) -> Result<()> {
    let seed: u64 = s.require("seed")?;
    let features = s.path("features")?;
    let out = s.path("out")?;
    let config = feature_config(s, seed)?;
    let dims = dimensions(s)?;
    let mut reports = Vec::new();
    for manifest in manifests(s)? {
        let summaries = data::load_summaries(&manifest, &features)?;
        for &dim in &dims {
            log::info!("feature analysis on {} {dim}", manifest.corpus);
            reports.push(run_feature_analysis(
                &summaries, &manifest, dim, &config, &NoProbe,
            )?);
        }
    }
    let mut text = String::new();
    for &dim in &dims {
        text.push_str(&render_feature_table(
            dim,
            &reports.iter().collect::<Vec<_>>(),
        ));
        text.push('\n');
    }
    let all: Vec<_> = reports
        .into_iter()
        .map(ExperimentReport::FeatureAnalysis)
        .collect();
    emit(&out, "feature-analysis", &all, &text)
}
