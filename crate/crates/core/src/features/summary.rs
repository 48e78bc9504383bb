//! Clip-level summary grouped into loudness, rhythm, tonal and timbre blocks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::spectral::{col, descriptor_names, frame_count, Spectra, N_MFCC};
use super::{mean, std_dev, FeatureError, FeatureMatrix, FrameParams, Result};

pub const LOUDNESS_DIMS: usize = 7;
pub const RHYTHM_DIMS: usize = 22;
pub const TONAL_DIMS: usize = 14;
pub const TIMBRE_DIMS: usize = 59;
pub const SUMMARY_DIMS: usize = LOUDNESS_DIMS + RHYTHM_DIMS + TONAL_DIMS + TIMBRE_DIMS;

const MIN_BPM: f64 = 40.0;
const MAX_BPM: f64 = 240.0;
const TEMPO_PRIOR_BPM: f64 = 120.0;
/// Frame energies are expressed in dB above this floor, clipped at zero.
const ENERGY_FLOOR_DB: f64 = -100.0;
const CONTRAST_EDGES_HZ: [f64; 6] = [0.0, 200.0, 400.0, 800.0, 1600.0, 3200.0];
const CONTRAST_QUANTILE: f64 = 0.2;
const PEAK_RELATIVE_THRESHOLD: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSet {
    Loudness,
    Rhythm,
    Tonal,
    Timbre,
    All,
}

impl FeatureSet {
    /// Report column order.
    pub const ALL: [FeatureSet; 5] = [
        FeatureSet::Loudness,
        FeatureSet::Rhythm,
        FeatureSet::Tonal,
        FeatureSet::Timbre,
        FeatureSet::All,
    ];

    /// Column range of this set inside the 102-dimension summary vector.
    pub fn range(self) -> std::ops::Range<usize> {
        let r0 = LOUDNESS_DIMS;
        let r1 = r0 + RHYTHM_DIMS;
        let r2 = r1 + TONAL_DIMS;
        match self {
            FeatureSet::Loudness => 0..r0,
            FeatureSet::Rhythm => r0..r1,
            FeatureSet::Tonal => r1..r2,
            FeatureSet::Timbre => r2..SUMMARY_DIMS,
            FeatureSet::All => 0..SUMMARY_DIMS,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureSet::Loudness => "loudness",
            FeatureSet::Rhythm => "rhythm",
            FeatureSet::Tonal => "tonal",
            FeatureSet::Timbre => "timbre",
            FeatureSet::All => "all",
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureSet {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        FeatureSet::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| format!("unknown feature set {s:?}"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSetSummary {
    pub loudness: Vec<f64>,
    pub rhythm: Vec<f64>,
    pub tonal: Vec<f64>,
    pub timbre: Vec<f64>,
}

impl FeatureSetSummary {
    /// Concatenated 102-dimension vector in loudness, rhythm, tonal, timbre order.
    pub fn to_vector(&self) -> Vec<f64> {
        [&self.loudness[..], &self.rhythm, &self.tonal, &self.timbre].concat()
    }

    pub fn from_vector(v: &[f64]) -> Result<Self> {
        if v.len() != SUMMARY_DIMS {
            return Err(FeatureError::DimensionMismatch {
                expected: SUMMARY_DIMS,
                found: v.len(),
            });
        }
        let s = |set: FeatureSet| v[set.range()].to_vec();
        Ok(Self {
            loudness: s(FeatureSet::Loudness),
            rhythm: s(FeatureSet::Rhythm),
            tonal: s(FeatureSet::Tonal),
            timbre: s(FeatureSet::Timbre),
        })
    }

    pub fn set(&self, set: FeatureSet) -> Vec<f64> {
        self.to_vector()[set.range()].to_vec()
    }

    pub fn names() -> Vec<String> {
        let mut n: Vec<String> = [
            "rms_mean",
            "rms_std",
            "log_energy_mean",
            "log_energy_std",
            "dynamic_range_db",
            "crest_factor",
            "low_energy_rate",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        n.extend(
            [
                "onset_mean",
                "onset_std",
                "onset_skewness",
                "onset_kurtosis",
                "onset_max",
                "onset_rate",
                "tempo_bpm",
                "tempo_salience",
                "tempo_peak1_bpm",
                "tempo_peak1_weight",
                "tempo_peak2_bpm",
                "tempo_peak2_weight",
                "tempo_hist_centroid",
                "tempo_hist_spread",
                "ioi_mean",
                "ioi_std",
                "ioi_min",
                "ioi_max",
                "pulse_clarity",
                "acf_first_peak_lag",
                "acf_first_peak_height",
                "onset_above_median_rate",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        n.extend(
            [
                "c", "c#", "d", "d#", "e", "f", "f#", "g", "g#", "a", "a#", "b",
            ]
            .iter()
            .map(|p| format!("chroma_{p}_mean")),
        );
        n.push("key_clarity".into());
        n.push("chroma_flux_mean".into());
        for i in 1..=N_MFCC {
            n.push(format!("mfcc_{i}_mean"));
            n.push(format!("mfcc_{i}_std"));
        }
        for d in [
            "centroid",
            "spread",
            "skewness",
            "kurtosis",
            "rolloff_85",
            "rolloff_95",
            "flux",
            "flatness",
            "entropy",
            "crest",
            "zcr",
        ] {
            n.push(format!("{d}_mean"));
            n.push(format!("{d}_std"));
        }
        n.extend((1..=6).map(|b| format!("contrast_{b}_mean")));
        n.extend(
            [
                "hfc_mean",
                "hfc_std",
                "slope_mean",
                "slope_std",
                "peak_count_mean",
            ]
            .iter()
            .map(|s| s.to_string()),
        );
        debug_assert_eq!(n.len(), SUMMARY_DIMS);
        n
    }
}

fn skew_kurt(xs: &[f64]) -> (f64, f64) {
    let m = mean(xs);
    let sd = std_dev(xs);
    if sd <= 0.0 {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let s = xs.iter().map(|x| ((x - m) / sd).powi(3)).sum::<f64>() / n;
    let k = xs.iter().map(|x| ((x - m) / sd).powi(4)).sum::<f64>() / n - 3.0;
    (s, k)
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn loudness(rms: &[f64], samples: &[f64]) -> Vec<f64> {
    let db: Vec<f64> = rms
        .iter()
        .map(|r| (20.0 * r.log10() - ENERGY_FLOOR_DB).max(0.0))
        .collect();
    let mut sorted = db.clone();
    sorted.sort_by(f64::total_cmp);
    let total_rms = (samples.iter().map(|x| x * x).sum::<f64>() / samples.len() as f64).sqrt();
    let peak = samples.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let crest = if total_rms > 0.0 {
        peak / total_rms
    } else {
        0.0
    };
    let mean_rms = mean(rms);
    let low = rms.iter().filter(|&&r| r < mean_rms).count() as f64 / rms.len() as f64;
    vec![
        mean_rms,
        std_dev(rms),
        mean(&db),
        std_dev(&db),
        percentile(&sorted, 0.95) - percentile(&sorted, 0.05),
        crest,
        low,
    ]
}

fn local_peaks(xs: &[f64]) -> impl Iterator<Item = usize> + '_ {
    (1..xs.len().saturating_sub(1)).filter(move |&i| xs[i] > xs[i - 1] && xs[i] >= xs[i + 1])
}

fn rhythm(onset: &[f64], fps: f64, duration_s: f64) -> Vec<f64> {
    let n = onset.len();
    let m = mean(onset);
    let sd = std_dev(onset);
    let (skew, kurt) = skew_kurt(onset);
    let max = onset.iter().cloned().fold(0.0, f64::max);

    let threshold = m + sd;
    let peaks: Vec<usize> = local_peaks(onset)
        .filter(|&i| onset[i] > threshold)
        .collect();
    let onset_rate = if duration_s > 0.0 {
        peaks.len() as f64 / duration_s
    } else {
        0.0
    };

    let centered: Vec<f64> = onset.iter().map(|x| x - m).collect();
    let acf = |lag: usize| -> f64 {
        centered[..n - lag]
            .iter()
            .zip(&centered[lag..])
            .map(|(a, b)| a * b)
            .sum()
    };
    let ac0 = acf(0);

    let lag_min = (60.0 * fps / MAX_BPM).ceil() as usize;
    let lag_max = ((60.0 * fps / MIN_BPM).floor() as usize).min(n.saturating_sub(1));
    let mut tempo = [0.0f64; 8]; // bpm, salience, p1 bpm, p1 w, p2 bpm, p2 w, centroid, spread
    let mut pulse_clarity = 0.0;
    if ac0 > 0.0 && lag_min <= lag_max {
        let lags: Vec<usize> = (lag_min..=lag_max).collect();
        let ac: Vec<f64> = lags.iter().map(|&l| acf(l)).collect();
        let bpm = |l: usize| 60.0 * fps / l as f64;
        // log-normal prior around 120 bpm (one octave width) against octave errors
        // 3-tap lag smoothing: a period between two integer lags splits its energy
        let weighted: Vec<f64> = lags
            .iter()
            .map(|&l| {
                let smooth = acf(l - 1) + acf(l) + if l + 1 < n { acf(l + 1) } else { 0.0 };
                smooth * (-0.5 * (bpm(l) / TEMPO_PRIOR_BPM).log2().powi(2)).exp()
            })
            .collect();
        let best = (0..ac.len())
            .filter(|&i| ac[i] > 0.0 && weighted[i] > 0.0)
            .max_by(|&a, &b| weighted[a].total_cmp(&weighted[b]).then(b.cmp(&a)));
        if let Some(i) = best {
            tempo[0] = bpm(lags[i]);
            tempo[1] = ac[i] / ac0;
            pulse_clarity = (ac[i] - mean(&ac)) / ac0;
        }
        let mut hist_peaks: Vec<usize> = local_peaks(&ac).filter(|&i| ac[i] > 0.0).collect();
        hist_peaks.sort_by(|&a, &b| ac[b].total_cmp(&ac[a]).then(a.cmp(&b)));
        for (slot, &i) in hist_peaks.iter().take(2).enumerate() {
            tempo[2 + 2 * slot] = bpm(lags[i]);
            tempo[3 + 2 * slot] = ac[i] / ac0;
        }
        let w: Vec<f64> = ac.iter().map(|a| a.max(0.0)).collect();
        let wsum: f64 = w.iter().sum();
        if wsum > 0.0 {
            let c = lags.iter().zip(&w).map(|(&l, w)| bpm(l) * w).sum::<f64>() / wsum;
            let s = (lags
                .iter()
                .zip(&w)
                .map(|(&l, w)| (bpm(l) - c).powi(2) * w)
                .sum::<f64>()
                / wsum)
                .sqrt();
            tempo[6] = c;
            tempo[7] = s;
        }
    }

    let ioi: Vec<f64> = peaks
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 / fps)
        .collect();
    let ioi_stats = if ioi.is_empty() {
        [0.0; 4]
    } else {
        [
            mean(&ioi),
            std_dev(&ioi),
            ioi.iter().cloned().fold(f64::INFINITY, f64::min),
            ioi.iter().cloned().fold(0.0, f64::max),
        ]
    };

    let (mut first_lag, mut first_height) = (0.0, 0.0);
    if ac0 > 0.0 {
        let full: Vec<f64> = (0..=n / 2).map(acf).collect();
        let first = local_peaks(&full).find(|&l| full[l] > 0.0);
        if let Some(l) = first {
            first_lag = l as f64 / fps;
            first_height = full[l] / ac0;
        }
    }

    let mut sorted = onset.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = percentile(&sorted, 0.5);
    let above = onset.iter().filter(|&&x| x > median).count() as f64 / n as f64;

    let mut out = vec![m, sd, skew, kurt, max, onset_rate];
    out.extend_from_slice(&tempo[..2]);
    out.extend_from_slice(&tempo[2..6]);
    out.extend_from_slice(&tempo[6..8]);
    out.extend_from_slice(&ioi_stats);
    out.extend([pulse_clarity, first_lag, first_height, above]);
    out
}

fn tonal(fm: &FeatureMatrix) -> Vec<f64> {
    let chroma: Vec<&[f64]> = fm
        .iter_rows()
        .map(|r| &r[col::CHROMA..col::CHROMA + 12])
        .collect();
    let mut means: Vec<f64> = (0..12)
        .map(|pc| mean(&chroma.iter().map(|c| c[pc]).collect::<Vec<_>>()))
        .collect();
    let total: f64 = means.iter().sum();
    let clarity = if total > 0.0 {
        means.iter().cloned().fold(0.0, f64::max) / total
    } else {
        0.0
    };
    let flux: Vec<f64> = chroma
        .windows(2)
        .map(|w| {
            w[0].iter()
                .zip(w[1])
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    means.push(clarity);
    means.push(mean(&flux));
    means
}

fn contrast(mag: &[f64], bin_hz: f64) -> [f64; 6] {
    let mut out = [0.0; 6];
    for (b, slot) in out.iter_mut().enumerate() {
        let lo = CONTRAST_EDGES_HZ[b];
        let hi = CONTRAST_EDGES_HZ
            .get(b + 1)
            .copied()
            .unwrap_or(f64::INFINITY);
        let mut band: Vec<f64> = mag
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = *k as f64 * bin_hz;
                f >= lo && f < hi
            })
            .map(|(_, m)| *m)
            .collect();
        if band.is_empty() {
            continue;
        }
        band.sort_by(f64::total_cmp);
        let take = ((band.len() as f64 * CONTRAST_QUANTILE).round() as usize).max(1);
        let valley = mean(&band[..take]);
        let peak = mean(&band[band.len() - take..]);
        *slot = (peak + super::LOG_EPSILON).ln() - (valley + super::LOG_EPSILON).ln();
    }
    out
}

fn slope(mag: &[f64], bin_hz: f64) -> f64 {
    let n = mag.len() as f64;
    let fm = (mag.len() - 1) as f64 * bin_hz / 2.0;
    let mm = mag.iter().sum::<f64>() / n;
    let (mut cov, mut var) = (0.0, 0.0);
    for (k, m) in mag.iter().enumerate() {
        let df = k as f64 * bin_hz - fm;
        cov += df * (m - mm);
        var += df * df;
    }
    if var > 0.0 {
        cov / var
    } else {
        0.0
    }
}

fn peak_count(mag: &[f64]) -> f64 {
    let max = mag.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return 0.0;
    }
    local_peaks(mag)
        .filter(|&k| mag[k] > PEAK_RELATIVE_THRESHOLD * max)
        .count() as f64
}

fn timbre(fm: &FeatureMatrix, spectra: &Spectra) -> Vec<f64> {
    let mut out = Vec::with_capacity(TIMBRE_DIMS);
    let column = |j: usize| fm.column(j).collect::<Vec<f64>>();
    for j in col::MFCC..col::MFCC + N_MFCC {
        let c = column(j);
        out.push(mean(&c));
        out.push(std_dev(&c));
    }
    // centroid .. crest, then zcr
    for j in (col::CENTROID..=col::CREST).chain([col::ZCR]) {
        let c = column(j);
        out.push(mean(&c));
        out.push(std_dev(&c));
    }
    let per_frame_contrast: Vec<[f64; 6]> = spectra
        .magnitudes
        .iter()
        .map(|m| contrast(m, spectra.bin_hz))
        .collect();
    for b in 0..6 {
        out.push(mean(
            &per_frame_contrast.iter().map(|c| c[b]).collect::<Vec<_>>(),
        ));
    }
    let hfc: Vec<f64> = spectra
        .magnitudes
        .iter()
        .map(|m| m.iter().enumerate().map(|(k, x)| k as f64 * x * x).sum())
        .collect();
    out.push(mean(&hfc));
    out.push(std_dev(&hfc));
    let slopes: Vec<f64> = spectra
        .magnitudes
        .iter()
        .map(|m| slope(m, spectra.bin_hz))
        .collect();
    out.push(mean(&slopes));
    out.push(std_dev(&slopes));
    out.push(mean(
        &spectra
            .magnitudes
            .iter()
            .map(|m| peak_count(m))
            .collect::<Vec<_>>(),
    ));
    out
}

/// Summarizes a clip's descriptor matrix (from [`super::frame_descriptors`]
/// on the same `samples` with the same `params`) into the grouped
/// 7 + 22 + 14 + 59 vector.
pub fn summarize_feature_sets(
    fm: &FeatureMatrix,
    samples: &[f64],
    params: &FrameParams,
) -> Result<FeatureSetSummary> {
    let expected_rows = frame_count(samples.len(), params);
    if fm.rows() != expected_rows {
        return Err(FeatureError::Mismatch(format!(
            "matrix has {} frames, signal yields {expected_rows}",
            fm.rows()
        )));
    }
    if fm.names() != descriptor_names().as_slice() {
        return Err(FeatureError::Mismatch(
            "matrix columns are not frame descriptors".into(),
        ));
    }
    let spectra = Spectra::compute(samples, params)?;
    let rms: Vec<f64> = fm.column(col::RMS).collect();
    let onset: Vec<f64> = fm.column(col::ONSET).collect();
    let duration = samples.len() as f64 / params.sample_rate as f64;
    let summary = FeatureSetSummary {
        loudness: loudness(&rms, samples),
        rhythm: rhythm(&onset, params.frames_per_second(), duration),
        tonal: tonal(fm),
        timbre: timbre(fm, &spectra),
    };
    debug_assert_eq!(summary.loudness.len(), LOUDNESS_DIMS);
    debug_assert_eq!(summary.rhythm.len(), RHYTHM_DIMS);
    debug_assert_eq!(summary.tonal.len(), TONAL_DIMS);
    debug_assert_eq!(summary.timbre.len(), TIMBRE_DIMS);
    if summary.to_vector().iter().any(|v| !v.is_finite()) {
        return Err(FeatureError::InvalidMatrix(
            "non-finite summary value".into(),
        ));
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::frame_descriptors;

    fn clicks(bpm: f64, seconds: f64, gain: f64) -> Vec<f64> {
        let n = (seconds * 44_100.0) as usize;
        let period = (60.0 / bpm * 44_100.0) as usize;
        let mut out = vec![0.0; n];
        let mut rng = crate::rng::stream(3, &[]);
        use rand::Rng;
        for start in (0..n).step_by(period) {
            for i in start..(start + 400).min(n) {
                let decay = (-((i - start) as f64) / 80.0).exp();
                out[i] = gain * decay * (rng.random::<f64>() * 2.0 - 1.0);
            }
        }
        out
    }

    fn summarize(samples: &[f64]) -> FeatureSetSummary {
        let p = FrameParams::default();
        let fm = frame_descriptors("x", samples, &p).unwrap();
        summarize_feature_sets(&fm, samples, &p).unwrap()
    }

    #[test]
    fn block_sizes() {
        let s = summarize(&clicks(120.0, 6.0, 0.8));
        assert_eq!(
            (
                s.loudness.len(),
                s.rhythm.len(),
                s.tonal.len(),
                s.timbre.len()
            ),
            (7, 22, 14, 59)
        );
        assert_eq!(s.to_vector().len(), 102);
        assert_eq!(FeatureSetSummary::names().len(), 102);
        assert_eq!(FeatureSetSummary::from_vector(&s.to_vector()).unwrap(), s);
    }

    #[test]
    fn silence_conventions() {
        let s = summarize(&vec![0.0; 44_100 * 3]);
        assert!(s.loudness.iter().all(|&v| v == 0.0), "{:?}", s.loudness);
        assert_eq!(s.rhythm[6], 0.0, "tempo");
        assert!(s.to_vector().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn click_track_tempo_is_scale_invariant() {
        let loud = summarize(&clicks(120.0, 8.0, 0.8));
        let quiet = summarize(&clicks(120.0, 8.0, 0.4));
        assert_eq!(loud.rhythm[6], quiet.rhythm[6]);
        // 120 bpm lands within one autocorrelation lag of the click period
        assert!(
            (loud.rhythm[6] - 120.0).abs() < 6.0,
            "tempo {}",
            loud.rhythm[6]
        );
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let p = FrameParams::default();
        let a = clicks(100.0, 3.0, 0.5);
        let fm = frame_descriptors("x", &a, &p).unwrap();
        assert!(matches!(
            summarize_feature_sets(&fm, &a[..a.len() / 2], &p),
            Err(FeatureError::Mismatch(_))
        ));
    }
}
