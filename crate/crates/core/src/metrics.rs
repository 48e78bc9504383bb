//! Regression metrics and the paired t-test.

use statrs::function::beta::beta_reg;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("length mismatch: {0} targets vs {1} predictions")]
    LengthMismatch(usize, usize),
    #[error("no samples")]
    Empty,
    #[error("R² is undefined for constant targets")]
    ZeroVariance,
    #[error("paired t-test needs at least two pairs, got {0}")]
    TooFewPairs(usize),
    #[error("paired differences have zero variance")]
    DegenerateDifferences,
    #[error("non-finite value")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, MetricsError>;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RegressionScore {
    pub r2: f64,
    pub mse: f64,
}

pub fn mse(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p).powi(2))
        .sum::<f64>()
        / y_true.len() as f64)
}

/// `R² = 1 − SS_res / SS_tot` together with the mean squared error.
pub fn regression_metrics(y_true: &[f64], y_pred: &[f64]) -> Result<RegressionScore> {
    let mse = mse(y_true, y_pred)?;
    let mean = y_true.iter().sum::<f64>() / y_true.len() as f64;
    let ss_tot: f64 = y_true.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    let ss_res: f64 = y_true
        .iter()
        .zip(y_pred)
        .map(|(t, p)| (t - p).powi(2))
        .sum();
    let r2 = 1.0 - ss_res / ss_tot;
    if !r2.is_finite() || !mse.is_finite() {
        return Err(MetricsError::NonFinite);
    }
    Ok(RegressionScore { r2, mse })
}

pub fn r2(y_true: &[f64], y_pred: &[f64]) -> Result<f64> {
    regression_metrics(y_true, y_pred).map(|s| s.r2)
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TTest {
    pub t: f64,
    pub df: usize,
    /// Two-tailed p-value.
    pub p: f64,
}

/// Paired Student t-test on `a − b`.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch(a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(MetricsError::TooFewPairs(n));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    if d.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::NonFinite);
    }
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var <= 0.0 {
        return Err(MetricsError::DegenerateDifferences);
    }
    let t = mean / (var / n as f64).sqrt();
    let df = (n - 1) as f64;
    // P(|T| > |t|) = I_{df/(df+t²)}(df/2, 1/2)
    let p = beta_reg(df / 2.0, 0.5, df / (df + t * t));
    Ok(TTest { t, df: n - 1, p })
}
