//! `mer`: one binary for corpus preparation, feature extraction, the
//! emotion-recognition experiments and the annotation service.
//!
//! Settings come from flags first, then the `--config` file, then built-in
//! defaults. Any setting can also be given as `--set key=value`.

mod annotate;
mod config;
mod data;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use mer_core::corpus::{Corpus, DurationBounds};
use mer_core::ranking::Dimension;
use mer_service::ExportKind;

use config::Settings;

#[derive(Debug, Parser)]
#[command(
    name = "mer",
    version,
    about = "Music emotion recognition pipelines and annotation service"
)]
struct Cli {
    /// Line-based `key = value` settings file
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Override any setting, e.g. `--set window.hop=40`
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Catalogue a directory of WAV files into a manifest
    Ingest(IngestArgs),
    /// Compute frame descriptors and clip summaries for a manifest
    ExtractFeatures(ExtractArgs),
    /// Validate and copy per-clip embedding files
    ImportEmbeddings(ImportArgs),
    /// Train LSTM emotion regressors on a rated corpus
    TrainSer(TrainSerArgs),
    /// Transfer experiment on imported sound-event embeddings
    SedExperiment(SedArgs),
    /// Transfer experiment on embeddings from the trained LSTM models
    SerExperiment(SerArgs),
    /// Corpus-of-origin classification and test-set attribution
    Classify(ClassifyArgs),
    /// Per-feature-set regression with recursive feature elimination
    FeatureAnalysis(FeatureArgs),
    /// Run a complete pairwise campaign with simulated annotators
    SimulateAnnotators(SimulateArgs),
    /// Serve the annotation HTTP API until interrupted
    Serve(ServeArgs),
    /// Write campaign exports from an event log
    Export(ExportArgs),
}

#[derive(Debug, Args)]
struct IngestArgs {
    /// Directory of mono 44.1 kHz WAV files
    #[arg(long)]
    audio: PathBuf,
    #[arg(long)]
    corpus: Option<Corpus>,
    /// Ratings CSV keyed by clip_id (repeatable)
    #[arg(long)]
    ratings: Vec<PathBuf>,
    /// Output directory for manifest.csv
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExtractArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Output directory for the feature files
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ImportArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Directory holding `<clip_id>.emb` files
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainSerArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    /// Output directory for the trained models
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    dimension: Option<Dimension>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Args)]
struct SedArgs {
    /// Corpus manifest; give two to add paired comparisons
    #[arg(long)]
    manifest: Vec<PathBuf>,
    #[arg(long)]
    embeddings: Option<PathBuf>,
    #[arg(long)]
    dimension: Option<Dimension>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SerArgs {
    /// Corpus manifest; give two to add paired comparisons
    #[arg(long)]
    manifest: Vec<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long)]
    dimension: Option<Dimension>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ClassifyArgs {
    /// Manifest of the class reported as positive
    #[arg(long)]
    positive: Option<PathBuf>,
    #[arg(long)]
    negative: Option<PathBuf>,
    /// Manifest of the clips to attribute
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FeatureArgs {
    #[arg(long)]
    manifest: Vec<PathBuf>,
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long)]
    dimension: Option<Dimension>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Number of clips to rank
    #[arg(long)]
    n: usize,
    /// Probability that an annotator reports the wrong winner
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 5)]
    annotators: usize,
    /// Gold pairs: the first five form the quiz, the rest are in-task checks
    #[arg(long, default_value_t = 6)]
    gold_pairs: usize,
    #[arg(long, default_value = "sim")]
    campaign: String,
    #[arg(long)]
    dimension: Option<Dimension>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Event log directory
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    addr: Option<String>,
}

#[derive(Debug, Args)]
struct ExportArgs {
    /// Event log directory
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long, default_value = "sim")]
    campaign: String,
    /// rankings, ratings, reliability or judgments (repeatable; default all)
    #[arg(long)]
    kind: Vec<ExportKind>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn path(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn run(cli: Cli) -> Result<()> {
    let mut s = Settings::load(cli.config.as_deref(), &cli.set)?;
    match cli.command {
        Command::Ingest(a) => {
            s.flag("corpus", a.corpus)?;
            s.flag("out", path(&a.out))?;
            let corpus: Corpus = s.require("corpus")?;
            let d = corpus.default_bounds();
            let bounds = DurationBounds::new(
                s.get_or("ingest.min_duration", d.min_s)?,
                s.get_or("ingest.max_duration", d.max_s)?,
            )?;
            data::ingest(&a.audio, corpus, bounds, &a.ratings, &s.path("out")?)?;
        }
        Command::ExtractFeatures(a) => {
            s.flag("manifest", path(&a.manifest))?;
            s.flag("out", path(&a.out))?;
            data::extract_features(&s.path("manifest")?, &s.path("out")?)?;
        }
        Command::ImportEmbeddings(a) => {
            s.flag("manifest", path(&a.manifest))?;
            s.flag("embeddings", path(&a.embeddings))?;
            s.flag("out", path(&a.out))?;
            data::import_embeddings(
                &s.path("manifest")?,
                &s.path("embeddings")?,
                &s.path("out")?,
            )?;
        }
        Command::TrainSer(a) => {
            s.flag("manifest", path(&a.manifest))?;
            s.flag("features", path(&a.features))?;
            s.flag("models", path(&a.models))?;
            s.flag("dimension", a.dimension)?;
            s.flag("seed", a.seed)?;
            experiments::train_ser(&s)?;
        }
        Command::SedExperiment(a) => {
            s.flag_list(
                "manifest",
                &a.manifest
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>(),
            )?;
            s.flag("embeddings", path(&a.embeddings))?;
            s.flag("dimension", a.dimension)?;
            s.flag("seed", a.seed)?;
            s.flag("out", path(&a.out))?;
            experiments::sed_experiment(&s)?;
        }
        Command::SerExperiment(a) => {
            s.flag_list(
                "manifest",
                &a.manifest
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>(),
            )?;
            s.flag("features", path(&a.features))?;
            s.flag("models", path(&a.models))?;
            s.flag("dimension", a.dimension)?;
            s.flag("seed", a.seed)?;
            s.flag("out", path(&a.out))?;
            experiments::ser_experiment(&s)?;
        }
        Command::Classify(a) => {
            s.flag("positive", path(&a.positive))?;
            s.flag("negative", path(&a.negative))?;
            s.flag("test", path(&a.test))?;
            s.flag("features", path(&a.features))?;
            s.flag("seed", a.seed)?;
            s.flag("out", path(&a.out))?;
            experiments::classify(&s)?;
        }
        Command::FeatureAnalysis(a) => {
            s.flag_list(
                "manifest",
                &a.manifest
                    .iter()
                    .map(|p| p.display().to_string())
                    .collect::<Vec<_>>(),
            )?;
            s.flag("features", path(&a.features))?;
            s.flag("dimension", a.dimension)?;
            s.flag("seed", a.seed)?;
            s.flag("out", path(&a.out))?;
            experiments::feature_analysis(&s)?;
        }
        Command::SimulateAnnotators(a) => {
            s.flag("dimension", a.dimension)?;
            s.flag("seed", a.seed)?;
            s.flag("out", path(&a.out))?;
            let args = annotate::SimulateArgs {
                items: a.n,
                noise: a.noise,
                annotators: a.annotators,
                gold_pairs: a.gold_pairs,
                campaign: a.campaign,
            };
            annotate::simulate(&s, &args)?;
        }
        Command::Serve(a) => {
            s.flag("log", path(&a.log))?;
            s.flag("service.addr", a.addr)?;
            annotate::serve(&s)?;
        }
        Command::Export(a) => {
            s.flag("log", path(&a.log))?;
            s.flag("out", path(&a.out))?;
            annotate::export_campaign(&s, &a.campaign, &a.kind)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
