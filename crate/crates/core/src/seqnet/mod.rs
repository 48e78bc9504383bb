//! Single-layer LSTM with a one-unit head, trained by backpropagation
//! through time.
//!
//! All parameters live in one flat vector, in this order:
//!
//! ```text
//! W  4H × D   input weights, gate blocks (input, forget, cell, output)
//! U  4H × H   recurrent weights, same gate blocks
//! b  4H       gate biases
//! v  H        head weights
//! c  1        head bias
//! ```
//!
//! Sequences are passed as flat row-major `T × D` slices.

mod io;
mod train;

use rand::Rng;
use thiserror::Error;

pub use io::{model_from_bytes, model_to_bytes, read_model, write_model, LSTM_MAGIC};
pub use train::{
    adam_step, split_validation, train, train_with_validation, AdamConfig, AdamState, EpochRecord,
    Sample, TrainConfig, TrainHistory,
};

pub const DEFAULT_HIDDEN: usize = 128;

#[derive(Debug, Error)]
pub enum SeqNetError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("empty sequence")]
    EmptySequence,
    #[error("non-finite input")]
    NonFinite,
    #[error("{loss:?} loss does not match a {head:?} head")]
    HeadLossMismatch { head: Head, loss: Loss },
    #[error("empty dataset")]
    EmptyDataset,
    #[error("label {0} is not valid for this head")]
    InvalidLabel(f64),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Diverged { epoch: usize, loss: f64 },
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

pub type Result<T> = std::result::Result<T, SeqNetError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    Sigmoid,
    Linear,
}

impl Head {
    pub fn loss(self) -> Loss {
        match self {
            Head::Sigmoid => Loss::Bce,
            Head::Linear => Loss::Mse,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Loss {
    /// Binary cross-entropy on the sigmoid output.
    Bce,
    Mse,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Per-sample loss on the pre-activation `z` and its derivative.
fn loss_and_slope(loss: Loss, z: f64, label: f64) -> (f64, f64) {
    match loss {
        // softplus(z) − label·z, written to avoid overflow
        Loss::Bce => (
            z.max(0.0) - label * z + (-z.abs()).exp().ln_1p(),
            sigmoid(z) - label,
        ),
        Loss::Mse => ((z - label).powi(2), 2.0 * (z - label)),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LstmModel {
    input_dim: usize,
    hidden_dim: usize,
    head: Head,
    params: Vec<f64>,
}

/// Forward pass result.
#[derive(Debug, Clone, PartialEq)]
pub struct Forward {
    pub output: f64,
    /// Head pre-activation `v·h_T + c`.
    pub logit: f64,
    /// `h_1 … h_T`.
    pub hidden_states: Vec<Vec<f64>>,
}

struct Trace {
    /// Gate activations per step: input, forget, cell candidate, output.
    gates: Vec<Vec<f64>>,
    cells: Vec<Vec<f64>>,
    hidden: Vec<Vec<f64>>,
    logit: f64,
}

pub fn param_count(input_dim: usize, hidden_dim: usize) -> usize {
    4 * hidden_dim * (input_dim + hidden_dim + 1) + hidden_dim + 1
}

impl LstmModel {
    pub fn zeros(input_dim: usize, hidden_dim: usize, head: Head) -> Self {
        Self {
            input_dim,
            hidden_dim,
            head,
            params: vec![0.0; param_count(input_dim, hidden_dim)],
        }
    }

    /// Uniform weights in ±1/√H, zero biases except a forget-gate bias of 1.
    pub fn init(input_dim: usize, hidden_dim: usize, head: Head, seed: u64) -> Self {
        let mut model = Self::zeros(input_dim, hidden_dim, head);
        let bound = 1.0 / (hidden_dim as f64).sqrt();
        let mut rng = crate::rng::stream(seed, &[0x4c53_544d]);
        let (b_start, _) = model.bias_range();
        for (k, p) in model.params.iter_mut().enumerate() {
            if k < b_start || k >= b_start + 4 * hidden_dim {
                *p = rng.random_range(-bound..bound);
            }
        }
        for p in &mut model.params[b_start + hidden_dim..b_start + 2 * hidden_dim] {
            *p = 1.0;
        }
        model
    }

    pub fn from_params(
        input_dim: usize,
        hidden_dim: usize,
        head: Head,
        params: Vec<f64>,
    ) -> Result<Self> {
        let expected = param_count(input_dim, hidden_dim);
        if params.len() != expected {
            return Err(SeqNetError::DimensionMismatch {
                expected,
                found: params.len(),
            });
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(SeqNetError::NonFinite);
        }
        Ok(Self {
            input_dim,
            hidden_dim,
            head,
            params,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> usize {
        self.hidden_dim
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Same recurrent weights behind a different head.
    pub fn with_head(&self, head: Head) -> Self {
        Self {
            head,
            ..self.clone()
        }
    }

    fn bias_range(&self) -> (usize, usize) {
        let (d, h) = (self.input_dim, self.hidden_dim);
        let start = 4 * h * (d + h);
        (start, start + 4 * h)
    }

    fn steps(&self, sequence: &[f64]) -> Result<usize> {
        if sequence.is_empty() {
            return Err(SeqNetError::EmptySequence);
        }
        if self.input_dim == 0 || !sequence.len().is_multiple_of(self.input_dim) {
            return Err(SeqNetError::DimensionMismatch {
                expected: self.input_dim,
                found: sequence.len(),
            });
        }
        if sequence.iter().any(|v| !v.is_finite()) {
            return Err(SeqNetError::NonFinite);
        }
        Ok(sequence.len() / self.input_dim)
    }

    fn run(&self, sequence: &[f64]) -> Result<Trace> {
        let t_len = self.steps(sequence)?;
        let (d, h) = (self.input_dim, self.hidden_dim);
        let w = &self.params[..4 * h * d];
        let u = &self.params[4 * h * d..4 * h * (d + h)];
        let (b0, b1) = self.bias_range();
        let b = &self.params[b0..b1];
        let v = &self.params[b1..b1 + h];
        let c = self.params[b1 + h];

        let mut trace = Trace {
            gates: Vec::with_capacity(t_len),
            cells: Vec::with_capacity(t_len),
            hidden: Vec::with_capacity(t_len),
            logit: 0.0,
        };
        let mut h_prev = vec![0.0; h];
        let mut c_prev = vec![0.0; h];
        for x in sequence.chunks_exact(d) {
            let mut a = b.to_vec();
            for (r, ar) in a.iter_mut().enumerate() {
                *ar += w[r * d..(r + 1) * d]
                    .iter()
                    .zip(x)
                    .map(|(p, q)| p * q)
                    .sum::<f64>();
                *ar += u[r * h..(r + 1) * h]
                    .iter()
                    .zip(&h_prev)
                    .map(|(p, q)| p * q)
                    .sum::<f64>();
            }
            for (r, ar) in a.iter_mut().enumerate() {
                *ar = if (2 * h..3 * h).contains(&r) {
                    ar.tanh()
                } else {
                    sigmoid(*ar)
                };
            }
            let cell: Vec<f64> = (0..h)
                .map(|k| a[h + k] * c_prev[k] + a[k] * a[2 * h + k])
                .collect();
            let hid: Vec<f64> = (0..h).map(|k| a[3 * h + k] * cell[k].tanh()).collect();
            trace.gates.push(a);
            c_prev = cell.clone();
            h_prev = hid.clone();
            trace.cells.push(cell);
            trace.hidden.push(hid);
        }
        trace.logit = v.iter().zip(&h_prev).map(|(p, q)| p * q).sum::<f64>() + c;
        Ok(trace)
    }

    pub fn forward(&self, sequence: &[f64]) -> Result<Forward> {
        let trace = self.run(sequence)?;
        let output = match self.head {
            Head::Sigmoid => sigmoid(trace.logit),
            Head::Linear => trace.logit,
        };
        Ok(Forward {
            output,
            logit: trace.logit,
            hidden_states: trace.hidden,
        })
    }

    pub fn predict(&self, sequence: &[f64]) -> Result<f64> {
        self.forward(sequence).map(|f| f.output)
    }

    /// Final hidden state, the activation feeding the head.
    pub fn embed(&self, sequence: &[f64]) -> Result<Vec<f64>> {
        let mut trace = self.run(sequence)?;
        Ok(trace.hidden.pop().expect("at least one step"))
    }

    /// Loss of one sample and its gradient with respect to every parameter.
    fn sample_gradient(&self, sequence: &[f64], label: f64, loss: Loss) -> Result<(f64, Vec<f64>)> {
        let trace = self.run(sequence)?;
        let (d, h) = (self.input_dim, self.hidden_dim);
        let u_off = 4 * h * d;
        let (b_off, v_off) = self.bias_range();
        let mut grad = vec![0.0; self.params.len()];
        let (value, dz) = loss_and_slope(loss, trace.logit, label);

        let t_len = trace.hidden.len();
        grad[v_off + h] = dz;
        for k in 0..h {
            grad[v_off + k] = dz * trace.hidden[t_len - 1][k];
        }
        let mut dh: Vec<f64> = self.params[v_off..v_off + h]
            .iter()
            .map(|v| dz * v)
            .collect();
        let mut dc_next = vec![0.0; h];
        let zeros = vec![0.0; h];
        let mut da = vec![0.0; 4 * h];
        for t in (0..t_len).rev() {
            let g = &trace.gates[t];
            let c_prev = if t > 0 { &trace.cells[t - 1] } else { &zeros };
            let h_prev = if t > 0 { &trace.hidden[t - 1] } else { &zeros };
            for k in 0..h {
                let (gi, gf, gg, go) = (g[k], g[h + k], g[2 * h + k], g[3 * h + k]);
                let tc = trace.cells[t][k].tanh();
                let dc = dc_next[k] + dh[k] * go * (1.0 - tc * tc);
                da[k] = dc * gg * gi * (1.0 - gi);
                da[h + k] = dc * c_prev[k] * gf * (1.0 - gf);
                da[2 * h + k] = dc * gi * (1.0 - gg * gg);
                da[3 * h + k] = dh[k] * tc * go * (1.0 - go);
                dc_next[k] = dc * gf;
            }
            let x = &sequence[t * d..(t + 1) * d];
            for (r, &ar) in da.iter().enumerate() {
                grad[b_off + r] += ar;
                for (gw, xv) in grad[r * d..(r + 1) * d].iter_mut().zip(x) {
                    *gw += ar * xv;
                }
                for (gu, hv) in grad[u_off + r * h..u_off + (r + 1) * h]
                    .iter_mut()
                    .zip(h_prev)
                {
                    *gu += ar * hv;
                }
            }
            let u = &self.params[u_off..b_off];
            for (k, dhk) in dh.iter_mut().enumerate() {
                *dhk = da.iter().enumerate().map(|(r, ar)| ar * u[r * h + k]).sum();
            }
        }
        Ok((value, grad))
    }

    /// Mean loss over `batch` and its exact gradient.
    pub fn gradients(&self, batch: &[(&[f64], f64)], loss: Loss) -> Result<(f64, Vec<f64>)> {
        if self.head.loss() != loss {
            return Err(SeqNetError::HeadLossMismatch {
                head: self.head,
                loss,
            });
        }
        if batch.is_empty() {
            return Err(SeqNetError::EmptyDataset);
        }
        let per_sample = crate::par::try_map(batch, |(seq, label)| {
            self.sample_gradient(seq, *label, loss)
        })?;
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        let mut grad = vec![0.0; self.params.len()];
        for (value, g) in &per_sample {
            total += value;
            for (a, b) in grad.iter_mut().zip(g) {
                *a += b;
            }
        }
        grad.iter_mut().for_each(|g| *g *= scale);
        Ok((total * scale, grad))
    }

    /// Mean loss over `batch` without gradients.
    pub fn loss(&self, batch: &[(&[f64], f64)], loss: Loss) -> Result<f64> {
        if self.head.loss() != loss {
            return Err(SeqNetError::HeadLossMismatch {
                head: self.head,
                loss,
            });
        }
        if batch.is_empty() {
            return Err(SeqNetError::EmptyDataset);
        }
        let values = crate::par::try_map(batch, |(seq, label)| {
            self.run(seq)
                .map(|t| loss_and_slope(loss, t.logit, *label).0)
        })?;
        Ok(values.iter().sum::<f64>() / batch.len() as f64)
    }
}
