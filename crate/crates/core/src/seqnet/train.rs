use rand::seq::SliceRandom;

use super::{Head, LstmModel, Result, SeqNetError};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() || state.v.len() != params.len()
    {
        return Err(SeqNetError::DimensionMismatch {
            expected: params.len(),
            found: grads.len(),
        });
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for k in 0..params.len() {
        let g = grads[k];
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[k] / c1;
        let v_hat = state.v[k] / c2;
        params[k] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub adam: AdamConfig,
    pub epochs: usize,
    pub val_fraction: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            adam: AdamConfig::default(),
            epochs: 100,
            val_fraction: 0.1,
            batch_size: 32,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(SeqNetError::InvalidConfig(format!(
                "val_fraction {} must lie in (0, 1)",
                self.val_fraction
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(SeqNetError::InvalidConfig(
                "epochs and batch_size must be positive".into(),
            ));
        }
        let a = &self.adam;
        if !(a.learning_rate > 0.0
            && (0.0..1.0).contains(&a.beta1)
            && (0.0..1.0).contains(&a.beta2)
            && a.eps > 0.0)
        {
            return Err(SeqNetError::InvalidConfig(format!(
                "bad optimizer settings {a:?}"
            )));
        }
        Ok(())
    }
}

/// One labeled sequence, flat row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub sequence: Vec<f64>,
    pub label: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned.
    pub best_epoch: usize,
    pub best_val_loss: f64,
}

fn pairs(samples: &[Sample]) -> Vec<(&[f64], f64)> {
    samples
        .iter()
        .map(|s| (s.sequence.as_slice(), s.label))
        .collect()
}

fn check_labels(head: Head, samples: &[Sample]) -> Result<()> {
    for s in samples {
        let ok = match head {
            Head::Sigmoid => s.label == 0.0 || s.label == 1.0,
            Head::Linear => s.label.is_finite(),
        };
        if !ok {
            return Err(SeqNetError::InvalidLabel(s.label));
        }
    }
    Ok(())
}

const MAX_RESPLITS: u64 = 64;

/// Seeded train/validation split. For binary labels a validation set with
/// a single class is redrawn, with a warning if no draw has both.
pub fn split_validation(
    samples: &[Sample],
    head: Head,
    val_fraction: f64,
    seed: u64,
) -> Result<(Vec<Sample>, Vec<Sample>)> {
    if samples.len() < 2 {
        return Err(SeqNetError::InvalidConfig(format!(
            "need at least 2 samples to hold out validation data, got {}",
            samples.len()
        )));
    }
    let n = samples.len();
    let n_val = ((val_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let two_class = |val: &[usize]| {
        let pos = val.iter().filter(|&&i| samples[i].label == 1.0).count();
        pos > 0 && pos < val.len()
    };
    let mut order: Vec<usize> = (0..n).collect();
    for attempt in 0..MAX_RESPLITS {
        order = (0..n).collect();
        order.shuffle(&mut crate::rng::stream(seed, &[0x56_414c, attempt]));
        if head == Head::Linear || n_val < 2 || two_class(&order[..n_val]) {
            break;
        }
        if attempt == 0 {
            log::warn!("validation split has a single class; re-splitting");
        }
        if attempt + 1 == MAX_RESPLITS {
            log::warn!("no two-class validation split found; keeping the last draw");
        }
    }
    let val = order[..n_val].iter().map(|&i| samples[i].clone()).collect();
    let train = order[n_val..].iter().map(|&i| samples[i].clone()).collect();
    Ok((train, val))
}

/// Splits off a validation set and trains; see [`train_with_validation`].
pub fn train(
    initial: LstmModel,
    samples: &[Sample],
    config: &TrainConfig,
) -> Result<(LstmModel, TrainHistory)> {
    config.validate()?;
    if samples.is_empty() {
        return Err(SeqNetError::EmptyDataset);
    }
    check_labels(initial.head(), samples)?;
    let (tr, val) = split_validation(samples, initial.head(), config.val_fraction, config.seed)?;
    train_with_validation(initial, &tr, &val, config)
}

/// Mini-batch Adam for up to `epochs` passes. Returns the parameters with
/// the lowest validation loss seen after any epoch (earliest on ties).
pub fn train_with_validation(
    initial: LstmModel,
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
) -> Result<(LstmModel, TrainHistory)> {
    config.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(SeqNetError::EmptyDataset);
    }
    let head = initial.head();
    check_labels(head, train)?;
    check_labels(head, val)?;
    let loss_kind = head.loss();
    let train_pairs = pairs(train);
    let val_pairs = pairs(val);

    let mut model = initial;
    let mut state = AdamState::new(model.params().len());
    let mut best = model.clone();
    let mut history = TrainHistory {
        epochs: Vec::with_capacity(config.epochs),
        best_epoch: 0,
        best_val_loss: f64::INFINITY,
    };
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut crate::rng::stream(
            config.seed,
            &[0x4550_4f43, epoch as u64],
        ));
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&[f64], f64)> = chunk.iter().map(|&i| train_pairs[i]).collect();
            let (loss, grads) = model.gradients(&batch, loss_kind)?;
            if !loss.is_finite() || grads.iter().any(|g| !g.is_finite()) {
                return Err(SeqNetError::Diverged { epoch, loss });
            }
            adam_step(model.params_mut(), &grads, &mut state, &config.adam)?;
        }
        let train_loss = model.loss(&train_pairs, loss_kind)?;
        let val_loss = model.loss(&val_pairs, loss_kind)?;
        if !train_loss.is_finite()
            || !val_loss.is_finite()
            || model.params().iter().any(|p| !p.is_finite())
        {
            return Err(SeqNetError::Diverged {
                epoch,
                loss: if train_loss.is_finite() {
                    val_loss
                } else {
                    train_loss
                },
            });
        }
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best = model.clone();
        }
    }
    Ok((best, history))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adam_first_step_by_hand() {
        // m = 0.1·g, v = 0.001·g², bias-corrected to g and g², so the step is
        // lr · g / (|g| + eps)
        let mut p = [1.0];
        let mut st = AdamState::new(1);
        let cfg = AdamConfig::default();
        adam_step(&mut p, &[0.5], &mut st, &cfg).unwrap();
        let expected = 1.0 - 0.001 * 0.5 / (0.5 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
        assert_eq!(st.step, 1);
        assert!((st.m[0] - 0.05).abs() < 1e-15);
        assert!((st.v[0] - 0.00025).abs() < 1e-15);
    }

    #[test]
    fn adam_zero_gradient_and_threading() {
        let cfg = AdamConfig::default();
        let mut p = [0.3, -0.2];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, &cfg).unwrap();
        assert_eq!(p, [0.3, -0.2]);
        assert_eq!(st.step, 1);

        let g = [[0.4, -1.0], [0.1, 2.0]];
        let (mut a, mut sa) = ([1.0, 2.0], AdamState::new(2));
        adam_step(&mut a, &g[0], &mut sa, &cfg).unwrap();
        adam_step(&mut a, &g[1], &mut sa, &cfg).unwrap();
        let (mut b, mut sb) = ([1.0, 2.0], AdamState::new(2));
        for gi in &g {
            let mut tmp = b;
            adam_step(&mut tmp, gi, &mut sb, &cfg).unwrap();
            b = tmp;
        }
        assert_eq!(a, b);
        assert_eq!(sa, sb);
        assert!(adam_step(&mut a, &[1.0], &mut sa, &cfg).is_err());
    }

    fn toy_set() -> Vec<Sample> {
        // class 1 ramps up, class 0 ramps down; 5 steps of 2 features
        (0..10)
            .map(|i| {
                let up = i % 2 == 0;
                let scale = 0.5 + 0.1 * i as f64;
                let sequence = (0..5)
                    .flat_map(|t| {
                        let v = scale * (t as f64 / 4.0 - 0.5) * if up { 1.0 } else { -1.0 };
                        [v, 0.2 * v]
                    })
                    .collect();
                Sample {
                    sequence,
                    label: if up { 1.0 } else { 0.0 },
                }
            })
            .collect()
    }

    #[test]
    fn toy_set_is_fit() {
        let data = toy_set();
        let config = TrainConfig {
            batch_size: 1,
            seed: 5,
            ..TrainConfig::default()
        };
        let (m, hist) = train(LstmModel::init(2, 8, Head::Sigmoid, 1), &data, &config).unwrap();
        assert!(hist.epochs.len() <= 100);
        let correct = data
            .iter()
            .filter(|s| (m.predict(&s.sequence).unwrap() >= 0.5) == (s.label == 1.0))
            .count();
        assert_eq!(correct, 10);
    }

    #[test]
    fn snapshot_has_minimum_val_loss() {
        let data = toy_set();
        let config = TrainConfig {
            epochs: 30,
            batch_size: 4,
            ..TrainConfig::default()
        };
        let (m, hist) = train_with_validation(
            LstmModel::init(2, 4, Head::Sigmoid, 2),
            &data,
            &data,
            &config,
        )
        .unwrap();
        let min = hist
            .epochs
            .iter()
            .map(|e| e.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(hist.best_val_loss, min);
        let pairs = pairs(&data);
        assert_eq!(m.loss(&pairs, Head::Sigmoid.loss()).unwrap(), min);
    }

    #[test]
    fn single_epoch_and_determinism() {
        let data = toy_set();
        let config = TrainConfig {
            epochs: 1,
            ..TrainConfig::default()
        };
        let init = LstmModel::init(2, 4, Head::Sigmoid, 3);
        let (a, ha) = train(init.clone(), &data, &config).unwrap();
        assert_eq!(ha.epochs.len(), 1);
        let config = TrainConfig {
            epochs: 5,
            ..config
        };
        let (a5, h5) = train(init.clone(), &data, &config).unwrap();
        let (b5, g5) = train(init, &data, &config).unwrap();
        assert_eq!(h5, g5);
        assert_eq!(a5, b5);
        assert_ne!(a.params(), LstmModel::init(2, 4, Head::Sigmoid, 3).params());
    }

    #[test]
    fn regression_head_trains() {
        let data: Vec<Sample> = toy_set()
            .into_iter()
            .map(|s| Sample {
                label: s.sequence[8],
                ..s
            })
            .collect();
        let config = TrainConfig {
            epochs: 20,
            batch_size: 2,
            ..TrainConfig::default()
        };
        let (_, hist) = train(LstmModel::init(2, 4, Head::Linear, 0), &data, &config).unwrap();
        assert!(hist
            .epochs
            .iter()
            .all(|e| e.train_loss.is_finite() && e.train_loss >= 0.0));
        assert!(hist.epochs.last().unwrap().train_loss < hist.epochs[0].train_loss);
    }

    #[test]
    fn errors() {
        let m = LstmModel::zeros(2, 3, Head::Sigmoid);
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(m.clone(), &[], &cfg),
            Err(SeqNetError::EmptyDataset)
        ));
        let bad = vec![
            Sample {
                sequence: vec![0.0, 0.0],
                label: 0.5,
            };
            3
        ];
        assert!(matches!(
            train(m.clone(), &bad, &cfg),
            Err(SeqNetError::InvalidLabel(_))
        ));
        let cfg = TrainConfig {
            val_fraction: 1.0,
            ..cfg
        };
        assert!(matches!(
            train(m, &toy_set(), &cfg),
            Err(SeqNetError::InvalidConfig(_))
        ));
    }

    #[test]
    fn divergence_is_an_error() {
        let data: Vec<Sample> = toy_set()
            .into_iter()
            .map(|s| Sample { label: 1e200, ..s })
            .collect();
        let cfg = TrainConfig {
            epochs: 3,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(LstmModel::init(2, 3, Head::Linear, 0), &data, &cfg),
            Err(SeqNetError::Diverged { .. })
        ));
    }

    #[test]
    fn validation_split_has_both_classes() {
        let data = toy_set();
        for seed in 0..20 {
            let (tr, val) = split_validation(&data, Head::Sigmoid, 0.2, seed).unwrap();
            assert_eq!((tr.len(), val.len()), (8, 2));
            assert!(val.iter().any(|s| s.label == 1.0) && val.iter().any(|s| s.label == 0.0));
        }
    }
}
