//! Epsilon-insensitive support vector regression.
//!
//! Training rows are put into a canonical order before optimization, so a
//! fitted model does not depend on how the caller ordered its data.

mod io;
mod search;
mod smo;

use std::cmp::Ordering;

use thiserror::Error;

pub use io::{model_from_bytes, model_to_bytes, read_model, write_model, SVR_MAGIC};
pub use search::{
    cross_val_r2, fold_assignment, grid_search, rfe, CellScore, Grid, GridResult, KernelGrid,
    RfeResult,
};

#[derive(Debug, Error)]
pub enum SvrError {
    #[error("no training rows")]
    Empty,
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("non-finite input")]
    NonFinite,
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("solver did not converge within {iterations} iterations")]
    NoConvergence { iterations: usize },
    #[error("empty parameter grid")]
    EmptyGrid,
    #[error("{samples} samples (or groups) cannot fill {folds} folds")]
    TooFewSamples { samples: usize, folds: usize },
    #[error("input has no feature columns")]
    NoFeatures,
    #[error("feature elimination requires a linear kernel")]
    NonLinearKernel,
    #[error("no fold produced a score: every test fold has constant targets")]
    NoScore,
    #[error("i/o error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed model file: {reason}")]
    Format {
        path: std::path::PathBuf,
        reason: String,
    },
}

pub type Result<T> = std::result::Result<T, SvrError>;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Kernel {
    Rbf { gamma: f64 },
    Linear,
}

impl Kernel {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match *self {
            Kernel::Linear => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            Kernel::Rbf { gamma } => {
                let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
                (-gamma * d2).exp()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Kernel::Rbf { gamma } if !(gamma.is_finite() && gamma > 0.0) => Err(
                SvrError::InvalidParams(format!("gamma {gamma} must be finite and positive")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SvrParams {
    pub c: f64,
    pub epsilon: f64,
    pub tolerance: f64,
    /// Upper bound on solver iterations.
    pub max_passes: usize,
}

impl Default for SvrParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            epsilon: 0.1,
            tolerance: 1e-3,
            max_passes: 10_000_000,
        }
    }
}

impl SvrParams {
    pub fn with_c(self, c: f64) -> Self {
        Self { c, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c.is_finite() && self.c > 0.0) {
            return Err(SvrError::InvalidParams(format!(
                "C = {} must be finite and positive",
                self.c
            )));
        }
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(SvrError::InvalidParams(format!(
                "epsilon = {} must be >= 0",
                self.epsilon
            )));
        }
        if !(self.tolerance.is_finite() && self.tolerance > 0.0) {
            return Err(SvrError::InvalidParams(format!(
                "tolerance = {} must be > 0",
                self.tolerance
            )));
        }
        if self.max_passes == 0 {
            return Err(SvrError::InvalidParams(
                "max_passes must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// A trained regressor in dual form: `f(x) = Σ β_i k(sv_i, x) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrModel {
    support_vectors: Vec<Vec<f64>>,
    dual_coefs: Vec<f64>,
    bias: f64,
    kernel: Kernel,
    dim: usize,
}

impl SvrModel {
    pub fn new(
        support_vectors: Vec<Vec<f64>>,
        dual_coefs: Vec<f64>,
        bias: f64,
        kernel: Kernel,
        dim: usize,
    ) -> Result<Self> {
        kernel.validate()?;
        if support_vectors.len() != dual_coefs.len() {
            return Err(SvrError::DimensionMismatch {
                expected: support_vectors.len(),
                found: dual_coefs.len(),
            });
        }
        if let Some(sv) = support_vectors.iter().find(|sv| sv.len() != dim) {
            return Err(SvrError::DimensionMismatch {
                expected: dim,
                found: sv.len(),
            });
        }
        let finite = bias.is_finite()
            && dual_coefs.iter().all(|v| v.is_finite())
            && support_vectors.iter().flatten().all(|v| v.is_finite());
        if !finite {
            return Err(SvrError::NonFinite);
        }
        Ok(Self {
            support_vectors,
            dual_coefs,
            bias,
            kernel,
            dim,
        })
    }

    pub fn support_vectors(&self) -> &[Vec<f64>] {
        &self.support_vectors
    }

    pub fn dual_coefs(&self) -> &[f64] {
        &self.dual_coefs
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim {
            return Err(SvrError::DimensionMismatch {
                expected: self.dim,
                found: x.len(),
            });
        }
        Ok(self.decision(x))
    }

    pub fn predict_many(&self, xs: &[Vec<f64>]) -> Result<Vec<f64>> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    fn decision(&self, x: &[f64]) -> f64 {
        self.support_vectors
            .iter()
            .zip(&self.dual_coefs)
            .map(|(sv, b)| b * self.kernel.eval(sv, x))
            .sum::<f64>()
            + self.bias
    }

    /// Primal weight vector `Σ β_i sv_i`; only defined for the linear kernel.
    pub fn linear_weights(&self) -> Option<Vec<f64>> {
        if self.kernel != Kernel::Linear {
            return None;
        }
        let mut w = vec![0.0; self.dim];
        for (sv, b) in self.support_vectors.iter().zip(&self.dual_coefs) {
            for (wj, xj) in w.iter_mut().zip(sv) {
                *wj += b * xj;
            }
        }
        Some(w)
    }
}

/// Full training output: the model plus the dual coefficient of every
/// training row in the caller's order.
#[derive(Debug, Clone)]
pub struct TrainedSvr {
    pub model: SvrModel,
    pub beta: Vec<f64>,
    pub iterations: usize,
}

fn check_inputs(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.is_empty() {
        return Err(SvrError::Empty);
    }
    if x.len() != y.len() {
        return Err(SvrError::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    let dim = x[0].len();
    if let Some(r) = x.iter().find(|r| r.len() != dim) {
        return Err(SvrError::DimensionMismatch {
            expected: dim,
            found: r.len(),
        });
    }
    if x.iter().flatten().chain(y).any(|v| !v.is_finite()) {
        return Err(SvrError::NonFinite);
    }
    Ok(dim)
}

fn cmp_rows(a: (&[f64], f64), b: (&[f64], f64)) -> Ordering {
    a.0.iter()
        .zip(b.0)
        .map(|(p, q)| p.total_cmp(q))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
        .then(a.1.total_cmp(&b.1))
}

pub fn train_svr_full(
    x: &[Vec<f64>],
    y: &[f64],
    params: &SvrParams,
    kernel: Kernel,
) -> Result<TrainedSvr> {
    let dim = check_inputs(x, y)?;
    params.validate()?;
    kernel.validate()?;

    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&i, &j| cmp_rows((&x[i], y[i]), (&x[j], y[j])));
    let xs: Vec<Vec<f64>> = order.iter().map(|&i| x[i].clone()).collect();
    let ys: Vec<f64> = order.iter().map(|&i| y[i]).collect();

    let sol = smo::solve(&xs, &ys, params, kernel)?;

    let mut beta = vec![0.0; x.len()];
    let (mut svs, mut coefs) = (Vec::new(), Vec::new());
    for (k, &i) in order.iter().enumerate() {
        beta[i] = sol.beta[k];
        if sol.beta[k] != 0.0 {
            svs.push(xs[k].clone());
            coefs.push(sol.beta[k]);
        }
    }
    let model = SvrModel::new(svs, coefs, sol.bias, kernel, dim)?;
    Ok(TrainedSvr {
        model,
        beta,
        iterations: sol.iterations,
    })
}

pub fn train_svr(
    x: &[Vec<f64>],
    y: &[f64],
    params: &SvrParams,
    kernel: Kernel,
) -> Result<SvrModel> {
    train_svr_full(x, y, params, kernel).map(|t| t.model)
}

pub fn gram_matrix(x: &[Vec<f64>], kernel: Kernel) -> Vec<Vec<f64>> {
    x.iter()
        .map(|a| x.iter().map(|b| kernel.eval(a, b)).collect())
        .collect()
}

/// Dual objective in coefficient form, `½ βᵀKβ − yᵀβ + ε Σ|β_i|` (minimized).
pub fn dual_objective(gram: &[Vec<f64>], y: &[f64], beta: &[f64], epsilon: f64) -> f64 {
    let quad: f64 = beta
        .iter()
        .zip(gram)
        .map(|(bi, row)| bi * row.iter().zip(beta).map(|(k, bj)| k * bj).sum::<f64>())
        .sum();
    0.5 * quad - y.iter().zip(beta).map(|(t, b)| t * b).sum::<f64>()
        + epsilon * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Largest violation of the optimality conditions over the training rows,
/// measured on the residual `r_i = y_i − f(x_i)`:
///
/// | β_i        | condition     |
/// |------------|---------------|
/// | 0          | `|r| ≤ ε`      |
/// | (0, C)     | `r = ε`        |
/// | C          | `r ≥ ε`        |
/// | (−C, 0)    | `r = −ε`       |
/// | −C         | `r ≤ −ε`       |
///
/// Box and equality violations of `β` itself are included.
pub fn kkt_violation(
    x: &[Vec<f64>],
    y: &[f64],
    beta: &[f64],
    bias: f64,
    kernel: Kernel,
    params: &SvrParams,
) -> f64 {
    let (c, eps) = (params.c, params.epsilon);
    let bound_slack = 1e-12 * c.max(1.0);
    let mut worst = beta.iter().sum::<f64>().abs();
    for (i, xi) in x.iter().enumerate() {
        let f: f64 = x
            .iter()
            .zip(beta)
            .map(|(xj, b)| b * kernel.eval(xj, xi))
            .sum::<f64>()
            + bias;
        let r = y[i] - f;
        let b = beta[i];
        let v = if b.abs() > c + bound_slack {
            b.abs() - c
        } else if b == 0.0 {
            (r.abs() - eps).max(0.0)
        } else if b >= c - bound_slack {
            (eps - r).max(0.0)
        } else if b <= -c + bound_slack {
            (r + eps).max(0.0)
        } else if b > 0.0 {
            (r - eps).abs()
        } else {
            (r + eps).abs()
        };
        worst = worst.max(v);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    /// Exact minimizer of the coefficient-form dual for tiny instances.
    ///
    /// Every β_i is placed in one of five regions {−C, (−C,0), 0, (0,C), C}.
    /// Fixing the regions makes the objective a smooth quadratic in the free
    /// coordinates, so each pattern reduces to one equality-constrained
    /// linear solve. The best feasible pattern is the global optimum of the
    /// convex problem.
    fn qp_oracle(gram: &[Vec<f64>], y: &[f64], c: f64, eps: f64) -> f64 {
        let n = y.len();
        let mut best = f64::INFINITY;
        let mut pattern = vec![0u8; n];
        loop {
            let free: Vec<usize> = (0..n)
                .filter(|&i| pattern[i] == 1 || pattern[i] == 3)
                .collect();
            let fixed = |i: usize| match pattern[i] {
                0 => -c,
                4 => c,
                _ => 0.0,
            };
            let fixed_sum: f64 = (0..n).filter(|i| !free.contains(i)).map(fixed).sum();
            let mut beta: Vec<f64> = (0..n).map(fixed).collect();
            let feasible = if free.is_empty() {
                fixed_sum.abs() < 1e-12
            } else {
                let m = free.len();
                let mut a = DMatrix::zeros(m + 1, m + 1);
                let mut rhs = DVector::zeros(m + 1);
                for (p, &i) in free.iter().enumerate() {
                    let sign = if pattern[i] == 3 { 1.0 } else { -1.0 };
                    for (q, &j) in free.iter().enumerate() {
                        a[(p, q)] = gram[i][j];
                    }
                    a[(p, m)] = 1.0;
                    a[(m, p)] = 1.0;
                    let fixed_term: f64 = (0..n)
                        .filter(|j| !free.contains(j))
                        .map(|j| gram[i][j] * fixed(j))
                        .sum();
                    rhs[p] = y[i] - eps * sign - fixed_term;
                }
                rhs[m] = -fixed_sum;
                match a.lu().solve(&rhs) {
                    Some(sol) => {
                        let residual = (&DMatrix::from_fn(m + 1, m + 1, |r, s| {
                            if r < m && s < m {
                                gram[free[r]][free[s]]
                            } else if r == m && s == m {
                                0.0
                            } else {
                                1.0
                            }
                        }) * &sol
                            - &rhs)
                            .amax();
                        let mut ok = sol.iter().all(|v| v.is_finite()) && residual < 1e-8;
                        for (p, &i) in free.iter().enumerate() {
                            let v = sol[p];
                            ok &= if pattern[i] == 3 {
                                (-1e-9..=c + 1e-9).contains(&v)
                            } else {
                                (-c - 1e-9..=1e-9).contains(&v)
                            };
                            beta[i] = v.clamp(-c, c);
                        }
                        ok
                    }
                    None => false,
                }
            };
            if feasible {
                best = best.min(dual_objective(gram, y, &beta, eps));
            }
            let mut k = 0;
            while k < n && pattern[k] == 4 {
                pattern[k] = 0;
                k += 1;
            }
            if k == n {
                break;
            }
            pattern[k] += 1;
        }
        best
    }

    fn random_instance(rng: &mut impl Rng, n: usize, d: usize) -> (Vec<Vec<f64>>, Vec<f64>) {
        let x: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        (x, y)
    }

    #[test]
    fn oracle_agrees_with_hand_solution() {
        // two points, linear kernel, x = 0 and 1: optimum puts β = ±b on the pair
        // with objective ½b² − b(y1 − y0) + 2εb, minimized at b = y1 − y0 − 2ε
        let gram = vec![vec![0.0, 0.0], vec![0.0, 1.0]];
        let (y, eps) = ([0.0, 1.0], 0.1);
        let b = 1.0 - 2.0 * eps;
        let expected = 0.5 * b * b - b + 2.0 * eps * b;
        assert!((qp_oracle(&gram, &y, 10.0, eps) - expected).abs() < 1e-12);
        // with C below the unconstrained optimum the box binds
        let expected = 0.5 * 0.25 - 0.5 + 2.0 * eps * 0.5;
        assert!((qp_oracle(&gram, &y, 0.5, eps) - expected).abs() < 1e-12);
    }

    #[test]
    fn matches_qp_oracle_on_small_instances() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let params = SvrParams {
            c: 1.0,
            ..SvrParams::default()
        };
        for trial in 0..40 {
            let n = 2 + trial % 5;
            let (x, y) = random_instance(&mut rng, n, 2);
            for kernel in [Kernel::Rbf { gamma: 1.0 }, Kernel::Linear] {
                let fit = train_svr_full(&x, &y, &params, kernel).unwrap();
                let gram = gram_matrix(&x, kernel);
                let got = dual_objective(&gram, &y, &fit.beta, params.epsilon);
                let want = qp_oracle(&gram, &y, params.c, params.epsilon);
                assert!(
                    (got - want).abs() < 1e-4,
                    "trial {trial} {kernel:?}: {got} vs {want}"
                );
                let kkt = kkt_violation(&x, &y, &fit.beta, fit.model.bias(), kernel, &params);
                assert!(
                    kkt <= params.tolerance,
                    "trial {trial} {kernel:?}: kkt {kkt}"
                );
            }
        }
    }

    #[test]
    fn constant_targets_give_flat_model() {
        let x: Vec<Vec<f64>> = (0..6)
            .map(|i| vec![i as f64, (i * i) as f64 * 0.1])
            .collect();
        let y = vec![0.3; 6];
        for kernel in [Kernel::Linear, Kernel::Rbf { gamma: 0.5 }] {
            let fit = train_svr_full(&x, &y, &SvrParams::default(), kernel).unwrap();
            assert!(fit.beta.iter().all(|&b| b == 0.0));
            assert!(fit.model.support_vectors().is_empty());
            assert_eq!(fit.model.bias(), 0.3);
            assert_eq!(fit.model.predict(&[9.0, -4.0]).unwrap(), 0.3);
        }
    }

    #[test]
    fn three_point_line() {
        let x = vec![vec![0.0], vec![1.0], vec![2.0]];
        let y = [0.0, 1.0, 2.0];
        let params = SvrParams {
            c: 10.0,
            epsilon: 0.01,
            ..SvrParams::default()
        };
        let m = train_svr(&x, &y, &params, Kernel::Linear).unwrap();
        let p = m.predict(&[1.5]).unwrap();
        assert!((1.48..=1.52).contains(&p), "{p}");
    }

    #[test]
    fn predict_fixtures() {
        let m = SvrModel::new(vec![], vec![], 0.3, Kernel::Rbf { gamma: 2.0 }, 3).unwrap();
        assert_eq!(m.predict(&[5.0, -1.0, 2.0]).unwrap(), 0.3);
        // w = Σβx = 2·1 = 2
        let m = SvrModel::new(vec![vec![1.0]], vec![2.0], 1.0, Kernel::Linear, 1).unwrap();
        assert_eq!(m.predict(&[3.0]).unwrap(), 7.0);
        assert_eq!(m.linear_weights().unwrap(), vec![2.0]);
        let m = SvrModel::new(
            vec![vec![0.4, -0.2]],
            vec![1.0],
            0.0,
            Kernel::Rbf { gamma: 3.0 },
            2,
        )
        .unwrap();
        assert_eq!(m.predict(&[0.4, -0.2]).unwrap(), 1.0);
        assert!(matches!(
            m.predict(&[1.0]),
            Err(SvrError::DimensionMismatch { .. })
        ));
        assert!(m.linear_weights().is_none());
    }

    #[test]
    fn rejects_bad_input() {
        let p = SvrParams::default();
        assert!(matches!(
            train_svr(&[], &[], &p, Kernel::Linear),
            Err(SvrError::Empty)
        ));
        assert!(matches!(
            train_svr(
                &[vec![1.0], vec![1.0, 2.0]],
                &[0.0, 1.0],
                &p,
                Kernel::Linear
            ),
            Err(SvrError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            train_svr(&[vec![f64::NAN]], &[0.0], &p, Kernel::Linear),
            Err(SvrError::NonFinite)
        ));
        assert!(matches!(
            train_svr(&[vec![1.0]], &[0.0], &p, Kernel::Rbf { gamma: 0.0 }),
            Err(SvrError::InvalidParams(_))
        ));
        assert!(matches!(
            train_svr(&[vec![1.0]], &[0.0], &p.with_c(-1.0), Kernel::Linear),
            Err(SvrError::InvalidParams(_))
        ));
    }

    #[test]
    fn iteration_cap_is_an_error() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (x, y) = random_instance(&mut rng, 30, 3);
        let params = SvrParams {
            max_passes: 1,
            epsilon: 0.0,
            ..SvrParams::default()
        };
        assert!(matches!(
            train_svr(&x, &y, &params, Kernel::Rbf { gamma: 1.0 }),
            Err(SvrError::NoConvergence { iterations: 1 })
        ));
    }

    #[test]
    fn noiseless_linear_data_is_recovered() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let w = [0.7, -1.3, 0.4];
        let gen = |rng: &mut rand_chacha::ChaCha8Rng, n: usize| {
            let x: Vec<Vec<f64>> = (0..n)
                .map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect())
                .collect();
            let y: Vec<f64> = x
                .iter()
                .map(|r| r.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + 0.25)
                .collect();
            (x, y)
        };
        let (xtr, ytr) = gen(&mut rng, 80);
        let (xte, yte) = gen(&mut rng, 40);
        let params = SvrParams {
            c: 100.0,
            epsilon: 0.01,
            ..SvrParams::default()
        };
        let m = train_svr(&xtr, &ytr, &params, Kernel::Linear).unwrap();
        let pred = m.predict_many(&xte).unwrap();
        assert!(crate::metrics::r2(&yte, &pred).unwrap() >= 0.99);
    }

    #[test]
    fn rbf_gram_is_symmetric_with_unit_diagonal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let (x, _) = random_instance(&mut rng, 7, 4);
        let g = gram_matrix(&x, Kernel::Rbf { gamma: 0.8 });
        for i in 0..7 {
            assert_eq!(g[i][i], 1.0);
            for j in 0..7 {
                assert_eq!(g[i][j], g[j][i]);
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn permutation_invariant(seed in 0u64..1000, n in 2usize..12, rot in 0usize..12) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = random_instance(&mut rng, n, 2);
            let mut idx: Vec<usize> = (0..n).collect();
            idx.rotate_left(rot % n);
            idx.swap(0, n - 1);
            let xp: Vec<Vec<f64>> = idx.iter().map(|&i| x[i].clone()).collect();
            let yp: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
            let params = SvrParams::default();
            let a = train_svr(&x, &y, &params, Kernel::Rbf { gamma: 1.0 }).unwrap();
            let b = train_svr(&xp, &yp, &params, Kernel::Rbf { gamma: 1.0 }).unwrap();
            prop_assert_eq!(&a, &b);
        }

        #[test]
        fn dual_feasible(seed in 0u64..1000, n in 1usize..15, c in 0.05f64..5.0) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (x, y) = random_instance(&mut rng, n, 3);
            let params = SvrParams { c, ..SvrParams::default() };
            for kernel in [Kernel::Linear, Kernel::Rbf { gamma: 0.5 }] {
                let fit = train_svr_full(&x, &y, &params, kernel).unwrap();
                prop_assert!(fit.beta.iter().all(|b| b.abs() <= c + 1e-12));
                prop_assert!(fit.beta.iter().sum::<f64>().abs() < 1e-9);
                let kkt = kkt_violation(&x, &y, &fit.beta, fit.model.bias(), kernel, &params);
                prop_assert!(kkt <= params.tolerance, "kkt {}", kkt);
            }
        }
    }
}
