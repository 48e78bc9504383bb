use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{FeatureError, FeatureMatrix, FrameParams, Result};

/// Floor added to mel energies before taking logs.
pub const LOG_EPSILON: f64 = 1e-10;
/// Mel bands feeding the cepstrum.
pub const MFCC_BANDS: usize = 40;
pub const N_MFCC: usize = 13;

const CHROMA_MIN_HZ: f64 = 27.5;
const CHROMA_MAX_HZ: f64 = 5000.0;
const FLATNESS_FLOOR: f64 = 1e-20;

const PITCH_CLASSES: [&str; 12] = [
    "c", "c#", "d", "d#", "e", "f", "f#", "g", "g#", "a", "a#", "b",
];

const SPECTRAL_NAMES: [&str; 12] = [
    "rms",
    "zcr",
    "spectral_centroid",
    "spectral_spread",
    "spectral_skewness",
    "spectral_kurtosis",
    "spectral_rolloff_85",
    "spectral_rolloff_95",
    "spectral_flux",
    "spectral_flatness",
    "spectral_entropy",
    "spectral_crest",
];

pub(crate) mod col {
    pub const RMS: usize = 0;
    pub const ZCR: usize = 1;
    pub const CENTROID: usize = 2;
    pub const CREST: usize = 11;
    pub const MFCC: usize = 12;
    pub const CHROMA: usize = MFCC + super::N_MFCC;
    pub const ONSET: usize = CHROMA + 12;
    pub const COUNT: usize = ONSET + 1;
}

/// Names of the per-frame descriptor columns, in output order.
pub fn descriptor_names() -> Vec<String> {
    let mut names: Vec<String> = SPECTRAL_NAMES.iter().map(|s| s.to_string()).collect();
    names.extend((1..=N_MFCC).map(|i| format!("mfcc_{i}")));
    names.extend(PITCH_CLASSES.iter().map(|p| format!("chroma_{p}")));
    names.push("onset_strength".into());
    debug_assert_eq!(names.len(), col::COUNT);
    names
}

/// Number of full frames in a signal of `len` samples (0 when shorter than a frame).
pub fn frame_count(len: usize, params: &FrameParams) -> usize {
    if len < params.frame_size {
        0
    } else {
        (len - params.frame_size) / params.hop + 1
    }
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters (HTK scale, 0 Hz to Nyquist) over the
/// `frame_size / 2 + 1` FFT bins. Each band lists `(bin, weight)` pairs.
pub fn mel_filterbank(n_mels: usize, params: &FrameParams) -> Vec<Vec<(usize, f64)>> {
    let n_bins = params.frame_size / 2 + 1;
    let sr = params.sample_rate as f64;
    let top = hz_to_mel(sr / 2.0);
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
        .collect();
    (0..n_mels)
        .map(|b| {
            let (lo, center, hi) = (edges[b], edges[b + 1], edges[b + 2]);
            (0..n_bins)
                .filter_map(|k| {
                    let f = k as f64 * sr / params.frame_size as f64;
                    let w = if f > lo && f <= center {
                        (f - lo) / (center - lo)
                    } else if f > center && f < hi {
                        (hi - f) / (hi - center)
                    } else {
                        0.0
                    };
                    (w > 0.0).then_some((k, w))
                })
                .collect()
        })
        .collect()
}

/// Windowed magnitude spectra of every frame.
pub(crate) struct Spectra {
    pub magnitudes: Vec<Vec<f64>>,
    pub frames: Vec<Range>,
    pub bin_hz: f64,
}

pub(crate) type Range = std::ops::Range<usize>;

impl Spectra {
    pub fn compute(samples: &[f64], params: &FrameParams) -> Result<Self> {
        params.validate()?;
        let n = frame_count(samples.len(), params);
        if n == 0 {
            return Err(FeatureError::TooShort {
                len: samples.len(),
                frame: params.frame_size,
            });
        }
        let window = params.window.coefficients(params.frame_size);
        let fft: Arc<dyn Fft<f64>> = FftPlanner::new().plan_fft_forward(params.frame_size);
        let mut buf = vec![Complex::new(0.0, 0.0); params.frame_size];
        let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
        let mut magnitudes = Vec::with_capacity(n);
        let mut frames = Vec::with_capacity(n);
        for t in 0..n {
            let start = t * params.hop;
            let range = start..start + params.frame_size;
            for (b, (x, w)) in buf
                .iter_mut()
                .zip(samples[range.clone()].iter().zip(&window))
            {
                *b = Complex::new(x * w, 0.0);
            }
            fft.process_with_scratch(&mut buf, &mut scratch);
            magnitudes.push(
                buf[..params.frame_size / 2 + 1]
                    .iter()
                    .map(|c| c.norm())
                    .collect(),
            );
            frames.push(range);
        }
        Ok(Self {
            magnitudes,
            frames,
            bin_hz: params.sample_rate as f64 / params.frame_size as f64,
        })
    }
}

fn mel_energies(power: &[f64], bank: &[Vec<(usize, f64)>]) -> Vec<f64> {
    bank.iter()
        .map(|band| band.iter().map(|&(k, w)| w * power[k]).sum())
        .collect()
}

/// Log mel spectrogram, frames × `n_mels`, with values `ln(energy + LOG_EPSILON)`.
pub fn stft_log_mel(samples: &[f64], params: &FrameParams, n_mels: usize) -> Result<Vec<Vec<f64>>> {
    if n_mels == 0 {
        return Err(FeatureError::InvalidParams(
            "n_mels must be at least 1".into(),
        ));
    }
    let spectra = Spectra::compute(samples, params)?;
    let bank = mel_filterbank(n_mels, params);
    Ok(spectra
        .magnitudes
        .iter()
        .map(|m| {
            let power: Vec<f64> = m.iter().map(|x| x * x).collect();
            mel_energies(&power, &bank)
                .into_iter()
                .map(|e| (e + LOG_EPSILON).ln())
                .collect()
        })
        .collect())
}

/// Orthonormal DCT-II, first `n_out` coefficients.
fn dct2(input: &[f64], n_out: usize) -> Vec<f64> {
    let n = input.len() as f64;
    (0..n_out)
        .map(|k| {
            let scale = if k == 0 {
                (1.0 / n).sqrt()
            } else {
                (2.0 / n).sqrt()
            };
            scale
                * input
                    .iter()
                    .enumerate()
                    .map(|(i, x)| {
                        x * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n).cos()
                    })
                    .sum::<f64>()
        })
        .collect()
}

/// Per-bin pitch class for the chroma range, with per-class bin counts so
/// each class reports mean power density rather than a bin-count-weighted sum.
struct ChromaMap {
    class_of_bin: Vec<Option<usize>>,
    bins_per_class: [usize; 12],
}

impl ChromaMap {
    fn new(n_bins: usize, bin_hz: f64) -> Self {
        let mut bins_per_class = [0usize; 12];
        let class_of_bin = (0..n_bins)
            .map(|k| {
                let f = k as f64 * bin_hz;
                if !(CHROMA_MIN_HZ..=CHROMA_MAX_HZ).contains(&f) {
                    return None;
                }
                let midi = 69.0 + 12.0 * (f / 440.0).log2();
                let pc = (midi.round() as i64).rem_euclid(12) as usize;
                bins_per_class[pc] += 1;
                Some(pc)
            })
            .collect();
        Self {
            class_of_bin,
            bins_per_class,
        }
    }

    fn chroma(&self, power: &[f64]) -> [f64; 12] {
        let mut c = [0.0; 12];
        for (k, p) in power.iter().enumerate() {
            if let Some(pc) = self.class_of_bin[k] {
                c[pc] += p;
            }
        }
        for (v, &n) in c.iter_mut().zip(&self.bins_per_class) {
            if n > 0 {
                *v /= n as f64;
            }
        }
        let total: f64 = c.iter().sum();
        if total > 0.0 {
            c.iter_mut().for_each(|v| *v /= total);
        }
        c
    }
}

struct Shape {
    centroid: f64,
    spread: f64,
    skewness: f64,
    kurtosis: f64,
}

fn spectral_shape(mag: &[f64], bin_hz: f64) -> Shape {
    let total: f64 = mag.iter().sum();
    if total <= 0.0 {
        return Shape {
            centroid: 0.0,
            spread: 0.0,
            skewness: 0.0,
            kurtosis: 0.0,
        };
    }
    let moment = |center: f64, p: i32| -> f64 {
        mag.iter()
            .enumerate()
            .map(|(k, m)| (k as f64 * bin_hz - center).powi(p) * m)
            .sum::<f64>()
            / total
    };
    let centroid = moment(0.0, 1);
    let var = moment(centroid, 2);
    let spread = var.sqrt();
    let (skewness, kurtosis) = if spread > 0.0 {
        (
            moment(centroid, 3) / spread.powi(3),
            moment(centroid, 4) / var.powi(2) - 3.0,
        )
    } else {
        (0.0, 0.0)
    };
    Shape {
        centroid,
        spread,
        skewness,
        kurtosis,
    }
}

fn rolloff(power: &[f64], fraction: f64, bin_hz: f64) -> f64 {
    let total: f64 = power.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let mut acc = 0.0;
    for (k, p) in power.iter().enumerate() {
        acc += p;
        if acc >= fraction * total {
            return k as f64 * bin_hz;
        }
    }
    (power.len() - 1) as f64 * bin_hz
}

fn flatness(power: &[f64]) -> f64 {
    let arith = power.iter().sum::<f64>() / power.len() as f64;
    if arith <= 0.0 {
        return 0.0;
    }
    let log_geo = power.iter().map(|p| (p + FLATNESS_FLOOR).ln()).sum::<f64>() / power.len() as f64;
    (log_geo.exp() / arith).min(1.0)
}

fn entropy(power: &[f64]) -> f64 {
    let total: f64 = power.iter().sum();
    if total <= 0.0 || power.len() < 2 {
        return 0.0;
    }
    let h: f64 = power
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|p| {
            let q = p / total;
            -q * q.ln()
        })
        .sum();
    h / (power.len() as f64).ln()
}

fn crest(mag: &[f64]) -> f64 {
    let mean = mag.iter().sum::<f64>() / mag.len() as f64;
    if mean <= 0.0 {
        return 0.0;
    }
    mag.iter().cloned().fold(0.0, f64::max) / mean
}

fn zero_crossing_rate(frame: &[f64]) -> f64 {
    let crossings = frame
        .windows(2)
        .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0) && (w[0] != 0.0 || w[1] != 0.0))
        .count();
    crossings as f64 / (frame.len() - 1) as f64
}

fn normalized(mag: &[f64]) -> Vec<f64> {
    let total: f64 = mag.iter().sum();
    if total > 0.0 {
        mag.iter().map(|m| m / total).collect()
    } else {
        vec![0.0; mag.len()]
    }
}

/// Per-frame descriptor matrix. Columns follow [`descriptor_names`]: RMS,
/// zero-crossing rate, ten spectral-shape descriptors, 13 MFCCs, 12 chroma
/// bins and onset strength.
///
/// Silent frames yield zeros for every shape descriptor, flatness and chroma.
/// MFCCs of silence are the (finite) cepstrum of the log floor.
pub fn frame_descriptors(
    clip_id: &str,
    samples: &[f64],
    params: &FrameParams,
) -> Result<FeatureMatrix> {
    let spectra = Spectra::compute(samples, params)?;
    let bank = mel_filterbank(MFCC_BANDS, params);
    let n_bins = params.frame_size / 2 + 1;
    let chroma_map = ChromaMap::new(n_bins, spectra.bin_hz);
    let mut values = Vec::with_capacity(spectra.magnitudes.len() * col::COUNT);
    let mut prev_norm: Option<Vec<f64>> = None;
    let mut prev_mag: Option<&Vec<f64>> = None;

    for (mag, range) in spectra.magnitudes.iter().zip(&spectra.frames) {
        let frame = &samples[range.clone()];
        let power: Vec<f64> = mag.iter().map(|m| m * m).collect();
        let rms = (frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64).sqrt();
        let shape = spectral_shape(mag, spectra.bin_hz);
        let norm = normalized(mag);
        let flux = prev_norm
            .as_ref()
            .map(|p| {
                p.iter()
                    .zip(&norm)
                    .map(|(a, b)| (b - a).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .unwrap_or(0.0);
        let onset = prev_mag
            .map(|p| {
                p.iter()
                    .zip(mag)
                    .map(|(a, b)| (b - a).max(0.0))
                    .sum::<f64>()
            })
            .unwrap_or(0.0);

        values.extend([
            rms,
            zero_crossing_rate(frame),
            shape.centroid,
            shape.spread,
            shape.skewness,
            shape.kurtosis,
            rolloff(&power, 0.85, spectra.bin_hz),
            rolloff(&power, 0.95, spectra.bin_hz),
            flux,
            flatness(&power),
            entropy(&power),
            crest(mag),
        ]);
        let log_mel: Vec<f64> = mel_energies(&power, &bank)
            .into_iter()
            .map(|e| (e + LOG_EPSILON).ln())
            .collect();
        values.extend(dct2(&log_mel, N_MFCC));
        values.extend(chroma_map.chroma(&power));
        values.push(onset);

        prev_norm = Some(norm);
        prev_mag = Some(mag);
    }
    FeatureMatrix::new(clip_id, descriptor_names(), values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::StandardNormal;

    fn sine(freq: f64, len: usize) -> Vec<f64> {
        (0..len)
            .map(|i| (2.0 * std::f64::consts::PI * freq * i as f64 / 44_100.0).sin())
            .collect()
    }

    #[test]
    fn frame_count_formula() {
        let p = FrameParams::default();
        assert_eq!(frame_count(2047, &p), 0);
        assert_eq!(frame_count(2048, &p), 1);
        assert_eq!(frame_count(2048 + 2 * 1024, &p), 3);
        assert_eq!(frame_count(2048 + 2 * 1024 + 1023, &p), 3);
        let mel = stft_log_mel(&vec![0.1; 2048 + 2 * 1024], &p, 16).unwrap();
        assert_eq!(mel.len(), 3);
        assert!(mel.iter().all(|r| r.len() == 16));
    }

    #[test]
    fn log_mel_of_silence_is_log_epsilon() {
        let mel = stft_log_mel(&vec![0.0; 8192], &FrameParams::default(), 32).unwrap();
        for row in mel {
            assert!(row.iter().all(|&v| v == LOG_EPSILON.ln()));
        }
    }

    #[test]
    fn log_mel_rejects_short_signal() {
        assert!(matches!(
            stft_log_mel(&[0.0; 100], &FrameParams::default(), 8),
            Err(FeatureError::TooShort { .. })
        ));
    }

    #[test]
    fn sine_energy_peaks_in_band_covering_its_frequency() {
        let p = FrameParams::default();
        let n_mels = 40;
        // Independent band table: centres equally spaced on the HTK mel scale.
        let top = 2595.0 * (1.0 + 22_050.0 / 700.0f64).log10();
        let hz = |m: f64| 700.0 * (10f64.powf(m / 2595.0) - 1.0);
        let weight_at = |b: usize, f: f64| {
            let step = top / (n_mels + 1) as f64;
            let (lo, c, hi) = (
                hz(step * b as f64),
                hz(step * (b + 1) as f64),
                hz(step * (b + 2) as f64),
            );
            if f > lo && f <= c {
                (f - lo) / (c - lo)
            } else if f > c && f < hi {
                (hi - f) / (hi - c)
            } else {
                0.0
            }
        };
        let expected = (0..n_mels)
            .max_by(|&a, &b| {
                weight_at(a, 440.0)
                    .partial_cmp(&weight_at(b, 440.0))
                    .unwrap()
            })
            .unwrap();
        let mel = stft_log_mel(&sine(440.0, 44_100), &p, n_mels).unwrap();
        for row in &mel {
            let arg = (0..n_mels)
                .max_by(|&a, &b| row[a].partial_cmp(&row[b]).unwrap())
                .unwrap();
            assert_eq!(arg, expected);
        }
    }

    #[test]
    fn silence_descriptors() {
        let fm = frame_descriptors("s", &vec![0.0; 44_100], &FrameParams::default()).unwrap();
        for r in fm.iter_rows() {
            assert_eq!(r[col::RMS], 0.0);
            assert_eq!(r[col::ZCR], 0.0);
            assert!(r[col::CENTROID..=col::CREST].iter().all(|&v| v == 0.0));
            assert!(r[col::CHROMA..col::CHROMA + 12].iter().all(|&v| v == 0.0));
            assert!(r.iter().all(|v| v.is_finite()));
        }
    }

    #[test]
    fn dc_signal_is_finite() {
        let fm = frame_descriptors("dc", &vec![0.25; 20_000], &FrameParams::default()).unwrap();
        assert!(fm.values().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn sine_centroid_near_its_frequency() {
        let fm = frame_descriptors("sine", &sine(440.0, 44_100), &FrameParams::default()).unwrap();
        for t in 1..fm.rows() - 1 {
            let c = fm.row(t)[col::CENTROID];
            assert!((c - 440.0).abs() < 15.0, "frame {t}: centroid {c}");
        }
    }

    #[test]
    fn white_noise_is_flat_with_even_chroma() {
        let mut rng = crate::rng::stream(42, &[]);
        let noise: Vec<f64> = (0..44_100 * 2)
            .map(|_| 0.3 * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let fm = frame_descriptors("noise", &noise, &FrameParams::default()).unwrap();
        let flat = fm.column(9).sum::<f64>() / fm.rows() as f64;
        assert!(flat > 0.5, "flatness {flat}");
        for pc in 0..12 {
            let m = fm.column(col::CHROMA + pc).sum::<f64>() / fm.rows() as f64;
            assert!((m - 1.0 / 12.0).abs() < 0.02, "class {pc}: {m}");
        }
    }

    #[test]
    fn names_are_unique_and_stable() {
        let names = descriptor_names();
        assert_eq!(names.len(), 38);
        assert_eq!(names[0], "rms");
        assert_eq!(names[col::MFCC], "mfcc_1");
        assert_eq!(names[col::CHROMA + 9], "chroma_a");
        assert_eq!(names[col::ONSET], "onset_strength");
    }
}
