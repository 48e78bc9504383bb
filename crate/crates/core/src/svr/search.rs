//! Model selection: k-fold cross-validation, (C, gamma) grid search and
//! recursive feature elimination for linear models.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{train_svr, Kernel, Result, SvrError, SvrParams};
use crate::metrics;

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum KernelGrid {
    Rbf { gamma: Vec<f64> },
    Linear,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Grid {
    pub c: Vec<f64>,
    pub kernel: KernelGrid,
}

fn powers_of_two(lo: i32, hi: i32, step: usize) -> Vec<f64> {
    (lo..=hi).step_by(step).map(|e| 2f64.powi(e)).collect()
}

impl Grid {
    pub fn default_c() -> Vec<f64> {
        powers_of_two(-5, 15, 2)
    }

    pub fn default_gamma() -> Vec<f64> {
        powers_of_two(-15, 3, 2)
    }

    pub fn rbf(c: Vec<f64>, gamma: Vec<f64>) -> Self {
        Self {
            c,
            kernel: KernelGrid::Rbf { gamma },
        }
    }

    pub fn linear(c: Vec<f64>) -> Self {
        Self {
            c,
            kernel: KernelGrid::Linear,
        }
    }

    /// Cells in ascending (C, gamma) order.
    pub fn cells(&self) -> Vec<(f64, Kernel)> {
        let mut c = self.c.clone();
        c.sort_by(f64::total_cmp);
        let kernels = match &self.kernel {
            KernelGrid::Linear => vec![Kernel::Linear],
            KernelGrid::Rbf { gamma } => {
                let mut g = gamma.clone();
                g.sort_by(f64::total_cmp);
                g.into_iter().map(|gamma| Kernel::Rbf { gamma }).collect()
            }
        };
        c.iter()
            .flat_map(|&c| kernels.iter().map(move |&k| (c, k)))
            .collect()
    }
}

impl Default for Grid {
    fn default() -> Self {
        Self::rbf(Self::default_c(), Self::default_gamma())
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct CellScore {
    pub c: f64,
    pub kernel: Kernel,
    pub mean_r2: f64,
    pub fold_r2: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridResult {
    pub params: SvrParams,
    pub kernel: Kernel,
    pub cells: Vec<CellScore>,
}

impl GridResult {
    pub fn best(&self) -> &CellScore {
        self.cells
            .iter()
            .find(|c| c.c == self.params.c && c.kernel == self.kernel)
            .expect("best cell is among the scored cells")
    }
}

/// Fold index for each row. With `groups`, all rows of a group share a fold.
pub fn fold_assignment(
    n: usize,
    groups: Option<&[usize]>,
    k: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(SvrError::InvalidParams(format!(
            "need at least 2 folds, got {k}"
        )));
    }
    let groups: Vec<usize> = match groups {
        Some(g) if g.len() != n => {
            return Err(SvrError::DimensionMismatch {
                expected: n,
                found: g.len(),
            })
        }
        Some(g) => g.to_vec(),
        None => (0..n).collect(),
    };
    let mut distinct: Vec<usize> = groups.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < k {
        return Err(SvrError::TooFewSamples {
            samples: distinct.len(),
            folds: k,
        });
    }
    distinct.shuffle(&mut crate::rng::stream(seed, &[0x464f_4c44]));
    let fold_of: BTreeMap<usize, usize> = distinct
        .iter()
        .enumerate()
        .map(|(p, &g)| (g, p % k))
        .collect();
    Ok(groups.iter().map(|g| fold_of[g]).collect())
}

/// Per-fold test R² and their mean. Folds whose test targets are constant
/// have no defined R² and are left out of the mean.
pub fn cross_val_r2(
    x: &[Vec<f64>],
    y: &[f64],
    folds: &[usize],
    params: &SvrParams,
    kernel: Kernel,
) -> Result<(f64, Vec<f64>)> {
    if folds.len() != y.len() || x.len() != y.len() {
        return Err(SvrError::DimensionMismatch {
            expected: y.len(),
            found: folds.len().min(x.len()),
        });
    }
    let k = folds.iter().max().map_or(0, |m| m + 1);
    let scores = crate::par::try_map_range(k, |f| -> Result<Option<f64>> {
        let (mut xtr, mut ytr, mut xte, mut yte) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for ((row, &t), &fold) in x.iter().zip(y).zip(folds) {
            if fold == f {
                xte.push(row.clone());
                yte.push(t);
            } else {
                xtr.push(row.clone());
                ytr.push(t);
            }
        }
        if xte.is_empty() || xtr.is_empty() {
            return Ok(None);
        }
        let model = train_svr(&xtr, &ytr, params, kernel)?;
        let pred = model.predict_many(&xte)?;
        match metrics::r2(&yte, &pred) {
            Ok(r2) => Ok(Some(r2)),
            Err(metrics::MetricsError::ZeroVariance) => Ok(None),
            Err(_) => Err(SvrError::NonFinite),
        }
    })?;
    let scored: Vec<f64> = scores.into_iter().flatten().collect();
    if scored.is_empty() {
        return Err(SvrError::NoScore);
    }
    Ok((scored.iter().sum::<f64>() / scored.len() as f64, scored))
}

/// Exhaustive search over the grid by mean k-fold R².
///
/// Ties go to the smaller C, then the smaller gamma.
pub fn grid_search(
    x: &[Vec<f64>],
    y: &[f64],
    groups: Option<&[usize]>,
    grid: &Grid,
    base: &SvrParams,
    k: usize,
    seed: u64,
) -> Result<GridResult> {
    let cells = grid.cells();
    if cells.is_empty() {
        return Err(SvrError::EmptyGrid);
    }
    if x.len() != y.len() {
        return Err(SvrError::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let folds = fold_assignment(y.len(), groups, k, seed)?;
    let scored = crate::par::try_map(&cells, |&(c, kernel)| {
        let params = base.with_c(c);
        params.validate()?;
        kernel.validate()?;
        let (mean_r2, fold_r2) = cross_val_r2(x, y, &folds, &params, kernel)?;
        Ok::<_, SvrError>(CellScore {
            c,
            kernel,
            mean_r2,
            fold_r2,
        })
    })?;
    let mut best = 0;
    for (i, cell) in scored.iter().enumerate() {
        if cell.mean_r2 > scored[best].mean_r2 {
            best = i;
        }
    }
    Ok(GridResult {
        params: base.with_c(scored[best].c),
        kernel: scored[best].kernel,
        cells: scored,
    })
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RfeResult {
    /// Feature indices in the order they were removed; the survivor is last.
    pub elimination_order: Vec<usize>,
    /// Rank per feature, 1 for the last survivor.
    pub ranking: Vec<usize>,
    /// Mean CV R² of the surviving subset of each size, index `size − 1`.
    pub subset_scores: Vec<f64>,
    /// Best-scoring subset, ascending feature indices.
    pub selected: Vec<usize>,
}

fn project(x: &[Vec<f64>], cols: &[usize]) -> Vec<Vec<f64>> {
    x.iter()
        .map(|r| cols.iter().map(|&j| r[j]).collect())
        .collect()
}

/// Recursive feature elimination with a linear SVR.
///
/// Each round drops the surviving feature with the smallest weight
/// magnitude (lowest index on ties). Every subset size is then scored by
/// k-fold R², and the best size wins, the smaller subset on ties.
pub fn rfe(
    x: &[Vec<f64>],
    y: &[f64],
    groups: Option<&[usize]>,
    params: &SvrParams,
    kernel: Kernel,
    k: usize,
    seed: u64,
) -> Result<RfeResult> {
    if kernel != Kernel::Linear {
        return Err(SvrError::NonLinearKernel);
    }
    if x.is_empty() {
        return Err(SvrError::Empty);
    }
    let d = x[0].len();
    if d == 0 {
        return Err(SvrError::NoFeatures);
    }
    let folds = fold_assignment(y.len(), groups, k, seed)?;

    let mut surviving: Vec<usize> = (0..d).collect();
    let mut order = Vec::with_capacity(d);
    // subsets[s - 1] holds the survivors when s features remained
    let mut subsets = vec![Vec::new(); d];
    while surviving.len() > 1 {
        subsets[surviving.len() - 1] = surviving.clone();
        let model = train_svr(&project(x, &surviving), y, params, kernel)?;
        let w = model.linear_weights().expect("linear kernel");
        let mut drop = 0;
        for (p, wp) in w.iter().enumerate() {
            if wp.abs() < w[drop].abs() {
                drop = p;
            }
        }
        order.push(surviving.remove(drop));
    }
    subsets[0] = surviving.clone();
    order.push(surviving[0]);

    let subset_scores = crate::par::try_map(&subsets, |cols| {
        cross_val_r2(&project(x, cols), y, &folds, params, kernel).map(|(m, _)| m)
    })?;
    let mut best = 0;
    for (i, s) in subset_scores.iter().enumerate() {
        if *s > subset_scores[best] {
            best = i;
        }
    }
    let mut ranking = vec![0; d];
    for (pos, &j) in order.iter().enumerate() {
        ranking[j] = d - pos;
    }
    let mut selected = subsets[best].clone();
    selected.sort_unstable();
    Ok(RfeResult {
        elimination_order: order,
        ranking,
        subset_scores,
        selected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Normal};

    fn synthetic(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)])
            .collect();
        let y = x
            .iter()
            .map(|r| (2.0 * r[0]).sin() + 0.3 * r[1] + rng.random_range(-0.05..0.05))
            .collect();
        (x, y)
    }

    #[test]
    fn default_grid_shape() {
        let g = Grid::default();
        assert_eq!(g.c.len(), 11);
        assert_eq!((g.c[0], g.c[10]), (2f64.powi(-5), 2f64.powi(15)));
        assert_eq!(Grid::default_gamma().len(), 10);
        assert_eq!(Grid::default_gamma()[9], 8.0);
        assert_eq!(g.cells().len(), 110);
    }

    #[test]
    fn folds_are_balanced_and_seeded() {
        let f = fold_assignment(23, None, 5, 9).unwrap();
        let mut counts = [0; 5];
        f.iter().for_each(|&i| counts[i] += 1);
        assert!(counts.iter().all(|&c| c == 4 || c == 5));
        assert_eq!(f, fold_assignment(23, None, 5, 9).unwrap());
        assert_ne!(f, fold_assignment(23, None, 5, 10).unwrap());
        let groups: Vec<usize> = (0..30).map(|i| i / 3).collect();
        let g = fold_assignment(30, Some(&groups), 5, 1).unwrap();
        for chunk in g.chunks(3) {
            assert!(chunk.iter().all(|&v| v == chunk[0]));
        }
        assert!(matches!(
            fold_assignment(3, None, 5, 0),
            Err(SvrError::TooFewSamples {
                samples: 3,
                folds: 5
            })
        ));
        assert!(matches!(
            fold_assignment(10, None, 1, 0),
            Err(SvrError::InvalidParams(_))
        ));
    }

    #[test]
    fn single_cell_grid_returns_it() {
        let (x, y) = synthetic(1, 30);
        let grid = Grid::rbf(vec![4.0], vec![0.5]);
        let r = grid_search(&x, &y, None, &grid, &SvrParams::default(), 5, 3).unwrap();
        assert_eq!(r.params.c, 4.0);
        assert_eq!(r.kernel, Kernel::Rbf { gamma: 0.5 });
        assert_eq!(r.cells.len(), 1);
    }

    #[test]
    fn grid_errors() {
        let (x, y) = synthetic(1, 4);
        let p = SvrParams::default();
        assert!(matches!(
            grid_search(&x, &y, None, &Grid::linear(vec![]), &p, 2, 0),
            Err(SvrError::EmptyGrid)
        ));
        assert!(matches!(
            grid_search(&x, &y, None, &Grid::linear(vec![1.0]), &p, 5, 0),
            Err(SvrError::TooFewSamples { .. })
        ));
    }

    #[test]
    fn identical_scores_prefer_smaller_c() {
        // every C above the range of the targets yields the same model
        let x: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64 / 11.0]).collect();
        let y: Vec<f64> = x.iter().map(|r| 0.5 * r[0]).collect();
        let grid = Grid::linear(vec![64.0, 16.0, 32.0]);
        let r = grid_search(&x, &y, None, &grid, &SvrParams::default(), 3, 0).unwrap();
        assert_eq!(r.cells[0].mean_r2, r.cells[1].mean_r2);
        assert_eq!(r.cells[1].mean_r2, r.cells[2].mean_r2);
        assert_eq!(r.params.c, 16.0);
    }

    #[test]
    fn chosen_cell_dominates() {
        for seed in 0..3 {
            let (x, y) = synthetic(seed, 40);
            let grid = Grid::rbf(vec![0.25, 1.0, 4.0, 16.0], vec![0.1, 1.0, 4.0]);
            let r = grid_search(&x, &y, None, &grid, &SvrParams::default(), 4, seed).unwrap();
            // independent recomputation of every cell on the same folds
            let folds = fold_assignment(40, None, 4, seed).unwrap();
            let best = r.best().mean_r2;
            for (c, kernel) in grid.cells() {
                let (score, _) =
                    cross_val_r2(&x, &y, &folds, &SvrParams::default().with_c(c), kernel).unwrap();
                assert!(best >= score);
            }
        }
    }

    fn planted(seed: u64) -> (Vec<Vec<f64>>, Vec<f64>) {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let noise = Normal::new(0.0, 0.01).unwrap();
        let x: Vec<Vec<f64>> = (0..60)
            .map(|_| (0..10).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y = x
            .iter()
            .map(|r| 3.0 * r[0] + noise.sample(&mut rng))
            .collect();
        (x, y)
    }

    #[test]
    fn planted_feature_survives() {
        let params = SvrParams {
            c: 10.0,
            epsilon: 0.01,
            ..SvrParams::default()
        };
        for seed in 0..3 {
            let (x, y) = planted(seed);
            let r = rfe(&x, &y, None, &params, Kernel::Linear, 5, seed).unwrap();
            assert_eq!(*r.elimination_order.last().unwrap(), 0);
            assert_eq!(r.ranking[0], 1);
            assert!(r.selected.contains(&0));
            assert!(r.subset_scores[0] > 0.99);
        }
    }

    #[test]
    fn zero_column_goes_first() {
        let (mut x, y) = planted(4);
        for r in &mut x {
            r[5] = 0.0;
        }
        let r = rfe(&x, &y, None, &SvrParams::default(), Kernel::Linear, 3, 0).unwrap();
        assert_eq!(r.elimination_order[0], 5);
    }

    #[test]
    fn rfe_single_feature_and_errors() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let y: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let r = rfe(&x, &y, None, &SvrParams::default(), Kernel::Linear, 2, 0).unwrap();
        assert_eq!(r.selected, vec![0]);
        assert_eq!(r.ranking, vec![1]);
        assert!(matches!(
            rfe(
                &x,
                &y,
                None,
                &SvrParams::default(),
                Kernel::Rbf { gamma: 1.0 },
                2,
                0
            ),
            Err(SvrError::NonLinearKernel)
        ));
        let empty: Vec<Vec<f64>> = vec![vec![]; 4];
        assert!(matches!(
            rfe(
                &empty,
                &[0.0; 4],
                None,
                &SvrParams::default(),
                Kernel::Linear,
                2,
                0
            ),
            Err(SvrError::NoFeatures)
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn ranking_is_a_permutation(seed in 0u64..500, d in 1usize..6) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<Vec<f64>> = (0..15).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
            let y: Vec<f64> = x.iter().map(|r| r.iter().sum::<f64>() + rng.random_range(-0.2..0.2)).collect();
            let r = rfe(&x, &y, None, &SvrParams::default(), Kernel::Linear, 3, seed).unwrap();
            let mut ranks = r.ranking.clone();
            ranks.sort_unstable();
            prop_assert_eq!(ranks, (1..=d).collect::<Vec<_>>());
            prop_assert_eq!(r.subset_scores.len(), d);
            let best = r.subset_scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(r.subset_scores[r.selected.len() - 1], best);
            prop_assert!(r.subset_scores[..r.selected.len() - 1].iter().all(|&s| s < best));
        }
    }
}
