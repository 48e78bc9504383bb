//! SMO solver for the epsilon-SVR dual.
//!
//! The dual is posed over `2n` variables `a = (α, α*)`:
//!
//! ```text
//! min ½ aᵀQa + pᵀa   s.t.  zᵀa = 0,  0 ≤ a ≤ C
//! z = (+1…, −1…),  p = (ε − y, ε + y),  Q_st = z_s z_t K(x_s mod n, x_t mod n)
//! ```
//!
//! Working pairs are chosen with second-order information (maximal violating
//! `i`, then the `j` with the largest guaranteed decrease). The loop stops
//! once the maximal KKT violation gap drops below the tolerance.

use std::collections::HashMap;
use std::sync::Arc;

use super::{Kernel, Result, SvrError, SvrParams};

const TAU: f64 = 1e-12;
/// Precompute the whole Gram matrix up to this many rows.
const FULL_GRAM_LIMIT: usize = 3000;
const ROW_CACHE_ROWS: usize = 1024;

enum Gram<'a> {
    Full(Vec<Arc<Vec<f64>>>),
    Cached {
        x: &'a [Vec<f64>],
        kernel: Kernel,
        rows: HashMap<usize, (Arc<Vec<f64>>, u64)>,
        clock: u64,
    },
}

impl<'a> Gram<'a> {
    fn new(x: &'a [Vec<f64>], kernel: Kernel) -> Self {
        if x.len() <= FULL_GRAM_LIMIT {
            let rows = crate::par::map_range(x.len(), |i| {
                Arc::new(x.iter().map(|xj| kernel.eval(&x[i], xj)).collect())
            });
            Gram::Full(rows)
        } else {
            Gram::Cached {
                x,
                kernel,
                rows: HashMap::new(),
                clock: 0,
            }
        }
    }

    fn row(&mut self, i: usize) -> Arc<Vec<f64>> {
        match self {
            Gram::Full(rows) => rows[i].clone(),
            Gram::Cached {
                x,
                kernel,
                rows,
                clock,
            } => {
                *clock += 1;
                if let Some((row, stamp)) = rows.get_mut(&i) {
                    *stamp = *clock;
                    return row.clone();
                }
                if rows.len() >= ROW_CACHE_ROWS {
                    let oldest = *rows
                        .iter()
                        .min_by_key(|(_, (_, s))| *s)
                        .expect("non-empty")
                        .0;
                    rows.remove(&oldest);
                }
                let row: Arc<Vec<f64>> =
                    Arc::new(x.iter().map(|xj| kernel.eval(&x[i], xj)).collect());
                rows.insert(i, (row.clone(), *clock));
                row
            }
        }
    }
}

pub(crate) struct Solution {
    /// `α_i − α_i*` per training row.
    pub beta: Vec<f64>,
    pub bias: f64,
    pub iterations: usize,
}

pub(crate) fn solve(
    x: &[Vec<f64>],
    y: &[f64],
    params: &SvrParams,
    kernel: Kernel,
) -> Result<Solution> {
    let n = y.len();
    let l = 2 * n;
    let c = params.c;
    let z = |t: usize| if t < n { 1.0 } else { -1.0 };
    let mut gram = Gram::new(x, kernel);
    let diag: Vec<f64> = (0..n).map(|i| kernel.eval(&x[i], &x[i])).collect();
    let qd = |t: usize| diag[t % n];

    let mut alpha = vec![0.0; l];
    let mut grad: Vec<f64> = (0..l)
        .map(|t| {
            if t < n {
                params.epsilon - y[t]
            } else {
                params.epsilon + y[t - n]
            }
        })
        .collect();
    let upper = |a: f64| a >= c;
    let lower = |a: f64| a <= 0.0;

    let mut iterations = 0;
    loop {
        // maximal violating index in I_up
        let mut gmax = f64::NEG_INFINITY;
        let mut i_sel = None;
        for t in 0..l {
            if z(t) > 0.0 {
                if !upper(alpha[t]) && -grad[t] >= gmax {
                    gmax = -grad[t];
                    i_sel = Some(t);
                }
            } else if !lower(alpha[t]) && grad[t] >= gmax {
                gmax = grad[t];
                i_sel = Some(t);
            }
        }
        let Some(i) = i_sel else { break };
        let ki = gram.row(i % n);
        let zi = z(i);

        let mut gmax2 = f64::NEG_INFINITY;
        let mut j_sel = None;
        let mut best_obj = f64::INFINITY;
        for t in 0..l {
            let q_it = zi * z(t) * ki[t % n];
            if z(t) > 0.0 {
                if !lower(alpha[t]) {
                    let diff = gmax + grad[t];
                    gmax2 = gmax2.max(grad[t]);
                    if diff > 0.0 {
                        let quad = qd(i) + qd(t) - 2.0 * zi * q_it;
                        let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                        if obj <= best_obj {
                            best_obj = obj;
                            j_sel = Some(t);
                        }
                    }
                }
            } else if !upper(alpha[t]) {
                let diff = gmax - grad[t];
                gmax2 = gmax2.max(-grad[t]);
                if diff > 0.0 {
                    let quad = qd(i) + qd(t) + 2.0 * zi * q_it;
                    let obj = -(diff * diff) / if quad > 0.0 { quad } else { TAU };
                    if obj <= best_obj {
                        best_obj = obj;
                        j_sel = Some(t);
                    }
                }
            }
        }
        let Some(j) = j_sel else { break };
        if gmax + gmax2 < params.tolerance {
            break;
        }
        if iterations >= params.max_passes {
            return Err(SvrError::NoConvergence { iterations });
        }
        iterations += 1;

        let kj = gram.row(j % n);
        let zj = z(j);
        let q_ij = zi * zj * ki[j % n];
        let (old_i, old_j) = (alpha[i], alpha[j]);
        if zi != zj {
            let quad = (qd(i) + qd(j) + 2.0 * q_ij).max(TAU);
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let quad = (qd(i) + qd(j) - 2.0 * q_ij).max(TAU);
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }

        let (di, dj) = (alpha[i] - old_i, alpha[j] - old_j);
        for (t, g) in grad.iter_mut().enumerate() {
            let zt = z(t);
            *g += zt * (zi * ki[t % n] * di + zj * kj[t % n] * dj);
        }
    }

    // offset from free variables, or the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut free_sum, mut free_count) = (0.0, 0usize);
    for t in 0..l {
        let yg = z(t) * grad[t];
        let at_upper = upper(alpha[t]);
        let at_lower = lower(alpha[t]);
        if at_upper {
            if z(t) < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if at_lower {
            if z(t) > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            free_sum += yg;
            free_count += 1;
        }
    }
    let bias = if free_count > 0 {
        -free_sum / free_count as f64
    } else if lb <= ub {
        // every offset in [−ub, −lb] is optimal; take the one nearest the target mean
        let mean = y.iter().sum::<f64>() / n as f64;
        mean.clamp(-ub, -lb)
    } else {
        -(ub + lb) / 2.0
    };

    Ok(Solution {
        beta: (0..n).map(|i| alpha[i] - alpha[i + n]).collect(),
        bias,
        iterations,
    })
}
