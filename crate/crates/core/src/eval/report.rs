//! Report records, JSON-lines persistence and the plain-text tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EvalError, Result};
use crate::features::FeatureSet;
use crate::metrics::{paired_t_test, TTest};
use crate::ranking::Dimension;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepeatScore {
    pub r2: f64,
    pub mse: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransferSource {
    /// Imported sound-event-detection embeddings.
    Sed,
    /// Embeddings from a trained LSTM emotion model.
    Ser,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionResult {
    pub dimension: Dimension,
    pub repeats: Vec<RepeatScore>,
    pub mean_r2: f64,
    pub mean_mse: f64,
}

impl DimensionResult {
    pub fn from_repeats(dimension: Dimension, repeats: Vec<RepeatScore>) -> Self {
        let n = repeats.len().max(1) as f64;
        Self {
            dimension,
            mean_r2: repeats.iter().map(|r| r.r2).sum::<f64>() / n,
            mean_mse: repeats.iter().map(|r| r.mse).sum::<f64>() / n,
            repeats,
        }
    }

    pub fn r2_values(&self) -> Vec<f64> {
        self.repeats.iter().map(|r| r.r2).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub source: TransferSource,
    pub corpus: String,
    pub seed: u64,
    pub n_repeats: usize,
    pub dimensions: Vec<DimensionResult>,
}

impl TransferReport {
    pub fn dimension(&self, d: Dimension) -> Option<&DimensionResult> {
        self.dimensions.iter().find(|r| r.dimension == d)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub positive_label: String,
    pub negative_label: String,
    pub test_label: String,
    pub seed: u64,
    /// Training windows per class label.
    pub train_windows: BTreeMap<String, usize>,
    pub heldout_clips: Vec<String>,
    pub heldout_windows: usize,
    pub heldout_accuracy: f64,
    pub test_windows: usize,
    /// Test windows assigned to each class label.
    pub test_counts: BTreeMap<String, usize>,
    pub test_fraction_positive: f64,
    pub epochs_run: usize,
    pub best_epoch: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetResult {
    pub set: FeatureSet,
    pub dims: usize,
    pub repeats: Vec<RepeatScore>,
    pub mean_r2: f64,
    pub mean_mse: f64,
    /// Names of the selected descriptors in each repeat.
    pub selected: Vec<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureAnalysisReport {
    pub corpus: String,
    pub dimension: Dimension,
    pub seed: u64,
    pub n_repeats: usize,
    pub sets: Vec<FeatureSetResult>,
}

impl FeatureAnalysisReport {
    pub fn set(&self, s: FeatureSet) -> Option<&FeatureSetResult> {
        self.sets.iter().find(|r| r.set == s)
    }
}

/// Paired t-test on per-repeat R² of two corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub source: TransferSource,
    pub dimension: Dimension,
    pub corpus_a: String,
    pub corpus_b: String,
    pub t_test: TTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "experiment", rename_all = "snake_case")]
pub enum ExperimentReport {
    Transfer(TransferReport),
    Classification(ClassificationReport),
    FeatureAnalysis(FeatureAnalysisReport),
    Comparison(ComparisonReport),
}

/// Pairs repeat `i` of `a` with repeat `i` of `b` for every dimension both
/// reports contain.
pub fn compare_corpora(a: &TransferReport, b: &TransferReport) -> Result<Vec<ComparisonReport>> {
    if a.source != b.source {
        return Err(EvalError::Invalid(
            "cannot compare reports from different sources".into(),
        ));
    }
    if a.n_repeats != b.n_repeats {
        return Err(EvalError::Invalid(format!(
            "repeat counts differ: {} vs {}",
            a.n_repeats, b.n_repeats
        )));
    }
    a.dimensions
        .iter()
        .filter_map(|ra| b.dimension(ra.dimension).map(|rb| (ra, rb)))
        .map(|(ra, rb)| {
            Ok(ComparisonReport {
                source: a.source,
                dimension: ra.dimension,
                corpus_a: a.corpus.clone(),
                corpus_b: b.corpus.clone(),
                t_test: paired_t_test(&ra.r2_values(), &rb.r2_values())?,
            })
        })
        .collect()
}

pub fn write_reports(path: &Path, reports: &[ExperimentReport]) -> Result<()> {
    let mut out = String::new();
    for r in reports {
        out.push_str(&serde_json::to_string(r).expect("reports serialize"));
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn read_reports(path: &Path) -> Result<Vec<ExperimentReport>> {
    let text = std::fs::read_to_string(path).map_err(|source| EvalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| EvalError::Format {
                path: path.to_path_buf(),
                reason: format!("line {}: {e}", i + 1),
            })
        })
        .collect()
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

fn title_case(s: &str) -> String {
    let mut c = s.chars();
    c.next().map_or_else(String::new, |f| {
        f.to_uppercase().collect::<String>() + c.as_str()
    })
}

/// Corpus rows with arousal and valence R²/MSE columns.
pub fn render_transfer_table(title: &str, reports: &[&TransferReport]) -> String {
    let mut out = format!("{title}\n\nChinese/Western\tArousal\t\tValence\t\n\tR²\tMSE\tR²\tMSE\n");
    for r in reports {
        let a = r.dimension(Dimension::Arousal);
        let v = r.dimension(Dimension::Valence);
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            r.corpus,
            cell(a.map(|d| d.mean_r2)),
            cell(a.map(|d| d.mean_mse)),
            cell(v.map(|d| d.mean_r2)),
            cell(v.map(|d| d.mean_mse)),
        );
    }
    out
}

/// One row per corpus, one R² column per feature set.
pub fn render_feature_table(dimension: Dimension, reports: &[&FeatureAnalysisReport]) -> String {
    let mut out = format!(
        "Performance (in R²) of Feature Sets on {}\n\nDataset",
        title_case(&dimension.to_string())
    );
    for s in FeatureSet::ALL {
        let _ = write!(out, "\t{} ({})", title_case(s.as_str()), s.range().len());
    }
    out.push('\n');
    for r in reports.iter().filter(|r| r.dimension == dimension) {
        out.push_str(&r.corpus);
        for s in FeatureSet::ALL {
            let _ = write!(out, "\t{}", cell(r.set(s).map(|x| x.mean_r2)));
        }
        out.push('\n');
    }
    out
}

pub fn render_classification(r: &ClassificationReport) -> String {
    let mut out = format!(
        "Binary classification: {} vs {}\n\n",
        r.positive_label, r.negative_label
    );
    for (label, n) in &r.train_windows {
        let _ = writeln!(out, "training windows ({label})\t{n}");
    }
    let _ = writeln!(
        out,
        "held-out accuracy\t{:.2}% ({} windows)",
        100.0 * r.heldout_accuracy,
        r.heldout_windows
    );
    let _ = writeln!(out, "{} windows\t{}", r.test_label, r.test_windows);
    for (label, n) in &r.test_counts {
        let frac = if r.test_windows > 0 {
            *n as f64 / r.test_windows as f64
        } else {
            0.0
        };
        let _ = writeln!(out, "classified as {label}\t{n} ({:.2}%)", 100.0 * frac);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transfer(corpus: &str, r2: &[f64]) -> TransferReport {
        let repeats: Vec<RepeatScore> = r2.iter().map(|&r2| RepeatScore { r2, mse: 0.1 }).collect();
        TransferReport {
            source: TransferSource::Sed,
            corpus: corpus.into(),
            seed: 1,
            n_repeats: repeats.len(),
            dimensions: vec![
                DimensionResult::from_repeats(Dimension::Arousal, repeats.clone()),
                DimensionResult::from_repeats(Dimension::Valence, repeats),
            ],
        }
    }

    #[test]
    fn reports_round_trip_through_jsonl() {
        let mut fs = FeatureAnalysisReport {
            corpus: "CCMED".into(),
            dimension: Dimension::Valence,
            seed: 3,
            n_repeats: 1,
            sets: vec![],
        };
        fs.sets.push(FeatureSetResult {
            set: FeatureSet::Tonal,
            dims: 14,
            repeats: vec![RepeatScore {
                r2: 0.1234567890123,
                mse: 1.0 / 3.0,
            }],
            mean_r2: 0.1234567890123,
            mean_mse: 1.0 / 3.0,
            selected: vec![vec!["chroma_c_mean".into()]],
        });
        let a = transfer("WCMED", &[0.5, 0.6, 0.7]);
        let b = transfer("CCMED", &[0.6, 0.8, 0.75]);
        let cmp = compare_corpora(&a, &b).unwrap();
        let reports = vec![
            ExperimentReport::Transfer(a),
            ExperimentReport::FeatureAnalysis(fs),
            ExperimentReport::Comparison(cmp[0].clone()),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.jsonl");
        write_reports(&path, &reports).unwrap();
        assert_eq!(read_reports(&path).unwrap(), reports);
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.starts_with("{\"experiment\":\"transfer\""));
    }

    #[test]
    fn comparison_matches_direct_t_test() {
        let a = transfer("WCMED", &[0.5, 0.6, 0.7]);
        let b = transfer("CCMED", &[0.4, 0.4, 0.4]);
        let cmp = compare_corpora(&a, &b).unwrap();
        assert_eq!(cmp.len(), 2);
        assert!((cmp[0].t_test.t - 3.4641016).abs() < 1e-6);
        let short = transfer("X", &[0.1, 0.2]);
        assert!(compare_corpora(&a, &short).is_err());
    }

    #[test]
    fn transfer_table_layout() {
        let a = transfer("WCMED", &[0.687]);
        let t = render_transfer_table("Transfer Learning (SED + SVR) Performances", &[&a]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[2], "Chinese/Western\tArousal\t\tValence\t");
        assert_eq!(lines[3], "\tR²\tMSE\tR²\tMSE");
        assert_eq!(lines[4], "WCMED\t0.687\t0.100\t0.687\t0.100");
    }

    #[test]
    fn feature_table_columns() {
        let r = FeatureAnalysisReport {
            corpus: "SOUNDSCAPE".into(),
            dimension: Dimension::Arousal,
            seed: 0,
            n_repeats: 0,
            sets: vec![],
        };
        let t = render_feature_table(Dimension::Arousal, &[&r]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "Performance (in R²) of Feature Sets on Arousal");
        assert_eq!(
            lines[2],
            "Dataset\tLoudness (7)\tRhythm (22)\tTonal (14)\tTimbre (59)\tAll (102)"
        );
        assert_eq!(lines[3], "SOUNDSCAPE\t-\t-\t-\t-\t-");
    }
}
