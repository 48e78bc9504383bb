//! Repeated clip-level shuffle-split evaluation of window-level regressors.

use std::collections::BTreeMap;

use super::report::RepeatScore;
use super::{ensemble_average, ClipAccess, EvalError, Probe, Result, SplitPlan, Stage};
use crate::features::MinMax;
use crate::metrics;
use crate::svr::{self, Grid, Kernel, SvrModel, SvrParams};

/// A regressor trained on windows labelled with their clip's rating.
pub trait ClipRegressor: Sync {
    type Model: Send;

    /// Stages that consume the training windows; each is reported to the probe.
    fn fit_stages(&self) -> &'static [Stage];

    /// `groups[i]` identifies the clip that window `i` came from.
    fn fit(&self, x: &[Vec<f64>], y: &[f64], groups: &[usize], seed: u64) -> Result<Self::Model>;

    fn predict(&self, model: &Self::Model, x: &[Vec<f64>]) -> Result<Vec<f64>>;
}

/// Predicts the mean training target everywhere.
pub struct MeanRegressor;

impl ClipRegressor for MeanRegressor {
    type Model = f64;

    fn fit_stages(&self) -> &'static [Stage] {
        &[Stage::Training]
    }

    fn fit(&self, _: &[Vec<f64>], y: &[f64], _: &[usize], _: u64) -> Result<f64> {
        if y.is_empty() {
            return Err(EvalError::Invalid("no training targets".into()));
        }
        Ok(y.iter().sum::<f64>() / y.len() as f64)
    }

    fn predict(&self, model: &f64, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(vec![*model; x.len()])
    }
}

/// Grid-searched SVR; folds never split a clip.
#[derive(Debug, Clone)]
pub struct SvrRegressor {
    pub grid: Grid,
    pub base: SvrParams,
    pub folds: usize,
}

impl ClipRegressor for SvrRegressor {
    type Model = SvrModel;

    fn fit_stages(&self) -> &'static [Stage] {
        &[Stage::GridSearch, Stage::Training]
    }

    fn fit(&self, x: &[Vec<f64>], y: &[f64], groups: &[usize], seed: u64) -> Result<SvrModel> {
        let best = svr::grid_search(x, y, Some(groups), &self.grid, &self.base, self.folds, seed)?;
        Ok(svr::train_svr(x, y, &best.params, best.kernel)?)
    }

    fn predict(&self, model: &SvrModel, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(model.predict_many(x)?)
    }
}

/// Linear SVR whose C is grid-searched on all features, followed by
/// recursive feature elimination at that C.
#[derive(Debug, Clone)]
pub struct LinearRfeRegressor {
    pub c_grid: Vec<f64>,
    pub base: SvrParams,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RfeModel {
    pub c: f64,
    /// Selected column indices, ascending.
    pub selected: Vec<usize>,
    pub model: SvrModel,
}

fn project(x: &[Vec<f64>], cols: &[usize]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|r| cols.iter().map(|&j| r[j]).collect())
        .collect()
}

impl ClipRegressor for LinearRfeRegressor {
    type Model = RfeModel;

    fn fit_stages(&self) -> &'static [Stage] {
        &[Stage::GridSearch, Stage::FeatureSelection, Stage::Training]
    }

    fn fit(&self, x: &[Vec<f64>], y: &[f64], groups: &[usize], seed: u64) -> Result<RfeModel> {
        let grid = Grid::linear(self.c_grid.clone());
        let best = svr::grid_search(x, y, Some(groups), &grid, &self.base, self.folds, seed)?;
        let selection = svr::rfe(
            x,
            y,
            Some(groups),
            &best.params,
            Kernel::Linear,
            self.folds,
            seed,
        )?;
        let model = svr::train_svr(
            &project(x, &selection.selected),
            y,
            &best.params,
            Kernel::Linear,
        )?;
        Ok(RfeModel {
            c: best.params.c,
            selected: selection.selected,
            model,
        })
    }

    fn predict(&self, model: &RfeModel, x: &[Vec<f64>]) -> Result<Vec<f64>> {
        Ok(model.model.predict_many(&project(x, &model.selected))?)
    }
}

#[derive(Debug, Clone)]
pub struct RepeatOutcome<M> {
    pub repeat: usize,
    pub score: RepeatScore,
    pub test_ids: Vec<String>,
    pub model: M,
}

/// Runs every repeat of `plan`: optional min-max scaling fitted on the
/// training windows, model fitting, prediction of each test window, and
/// clip-level averaging. R² and MSE are computed over the pooled test clips
/// of the repeat.
pub fn shuffle_split_eval<R: ClipRegressor>(
    inputs: &BTreeMap<String, Vec<Vec<f64>>>,
    ratings: &BTreeMap<String, f64>,
    plan: &SplitPlan,
    regressor: &R,
    normalize: bool,
    probe: &dyn Probe,
) -> Result<Vec<RepeatOutcome<R::Model>>> {
    if let Some(split) = plan.splits.first() {
        for id in split.train.iter().chain(&split.test) {
            match inputs.get(id) {
                None => return Err(EvalError::MissingInput(id.clone())),
                Some(w) if w.is_empty() => return Err(EvalError::NoWindows(id.clone())),
                Some(_) => {}
            }
            if !ratings.contains_key(id) {
                return Err(EvalError::MissingRating {
                    clip_id: id.clone(),
                    dimension: "target".into(),
                });
            }
        }
    }

    crate::par::try_map_range(plan.splits.len(), |repeat| {
        let split = &plan.splits[repeat];
        let access = ClipAccess::new(inputs, probe, repeat);

        let scaler = if normalize {
            let train = access.fetch(Stage::Normalization, &split.train)?;
            Some(MinMax::fit_rows(
                train.iter().flat_map(|w| w.iter().map(Vec::as_slice)),
            )?)
        } else {
            None
        };
        let scale = |rows: &[Vec<f64>]| -> Result<Vec<Vec<f64>>> {
            match &scaler {
                Some(s) => rows
                    .iter()
                    .map(|r| s.transform_row(r).map_err(EvalError::from))
                    .collect(),
                None => Ok(rows.to_vec()),
            }
        };

        let mut train = Vec::new();
        for &stage in regressor.fit_stages() {
            train = access.fetch(stage, &split.train)?;
        }
        let (mut x, mut y, mut groups) = (Vec::new(), Vec::new(), Vec::new());
        for (g, (id, windows)) in split.train.iter().zip(&train).enumerate() {
            let rows = scale(windows)?;
            y.extend(std::iter::repeat_n(ratings[id], rows.len()));
            groups.extend(std::iter::repeat_n(g, rows.len()));
            x.extend(rows);
        }
        let model = regressor.fit(
            &x,
            &y,
            &groups,
            crate::rng::derive(plan.seed, &[repeat as u64]),
        )?;

        let test = access.fetch(Stage::Prediction, &split.test)?;
        let mut preds = BTreeMap::new();
        for (id, windows) in split.test.iter().zip(&test) {
            preds.insert(id.clone(), regressor.predict(&model, &scale(windows)?)?);
        }
        let clip_preds = ensemble_average(&preds)?;
        let truth: Vec<f64> = split.test.iter().map(|id| ratings[id]).collect();
        let pred: Vec<f64> = split.test.iter().map(|id| clip_preds[id]).collect();
        let m = metrics::regression_metrics(&truth, &pred)?;
        Ok(RepeatOutcome {
            repeat,
            score: RepeatScore {
                r2: m.r2,
                mse: m.mse,
            },
            test_ids: split.test.clone(),
            model,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{NoProbe, RecordingProbe};
    use rand::{Rng, SeedableRng};

    fn synthetic(n: usize, seed: u64) -> (BTreeMap<String, Vec<Vec<f64>>>, BTreeMap<String, f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = BTreeMap::new();
        let mut ratings = BTreeMap::new();
        for i in 0..n {
            let id = format!("c{i:03}");
            let rating: f64 = rng.random_range(-1.0..1.0);
            let windows = (0..rng.random_range(2..5))
                .map(|_| {
                    vec![
                        rating * 3.0 + rng.random_range(-0.05..0.05),
                        rng.random_range(0.0..1.0),
                    ]
                })
                .collect();
            inputs.insert(id.clone(), windows);
            ratings.insert(id, rating);
        }
        (inputs, ratings)
    }

    #[test]
    fn mean_baseline_does_not_beat_the_mean() {
        let (inputs, ratings) = synthetic(60, 1);
        let ids: Vec<String> = inputs.keys().cloned().collect();
        let mut total = 0.0;
        let mut n = 0;
        for seed in 0..10 {
            let plan = SplitPlan::default_for(&ids, seed).unwrap();
            let out = shuffle_split_eval(&inputs, &ratings, &plan, &MeanRegressor, false, &NoProbe)
                .unwrap();
            assert_eq!(out.len(), 10);
            total += out.iter().map(|o| o.score.r2).sum::<f64>();
            n += out.len();
        }
        assert!(total / n as f64 <= 0.0);
    }

    #[test]
    fn svr_fits_a_learnable_target_without_leakage() {
        let (inputs, ratings) = synthetic(40, 2);
        let ids: Vec<String> = inputs.keys().cloned().collect();
        let plan = SplitPlan::new(&ids, 3, 0.2, 5).unwrap();
        let reg = SvrRegressor {
            grid: Grid::linear(vec![1.0, 10.0]),
            base: SvrParams {
                epsilon: 0.01,
                ..SvrParams::default()
            },
            folds: 3,
        };
        let probe = RecordingProbe::new();
        let out = shuffle_split_eval(&inputs, &ratings, &plan, &reg, true, &probe).unwrap();
        assert!(out.iter().all(|o| o.score.r2 > 0.95));
        assert!(probe.leaks(|r| &plan.splits[r].test).is_empty());
        let stages: Vec<Stage> = probe
            .events()
            .iter()
            .filter(|e| e.repeat == 0)
            .map(|e| e.stage)
            .collect();
        assert_eq!(
            stages,
            vec![
                Stage::Normalization,
                Stage::GridSearch,
                Stage::Training,
                Stage::Prediction
            ]
        );
    }

    #[test]
    fn missing_inputs_are_reported() {
        let (mut inputs, mut ratings) = synthetic(10, 3);
        let ids: Vec<String> = inputs.keys().cloned().collect();
        let plan = SplitPlan::default_for(&ids, 0).unwrap();
        ratings.remove("c004");
        assert!(matches!(
            shuffle_split_eval(&inputs, &ratings, &plan, &MeanRegressor, false, &NoProbe),
            Err(EvalError::MissingRating { .. })
        ));
        inputs.insert("c004".into(), vec![]);
        ratings.insert("c004".into(), 0.0);
        assert!(matches!(
            shuffle_split_eval(&inputs, &ratings, &plan, &MeanRegressor, false, &NoProbe),
            Err(EvalError::NoWindows(id)) if id == "c004"
        ));
    }
}
