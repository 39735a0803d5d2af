//! Per-frame spectral and temporal features and their per-recording means.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::{
    self, floored_ln, floored_log2, MagnitudeSpectrum, MelFilterbank, SpectrumAnalyzer, N_MFCC,
};

pub const N_CHROMA: usize = 12;
pub const DEFAULT_SUBFRAMES: usize = 10;
pub const DEFAULT_BANDS: usize = 10;
pub const DEFAULT_ROLLOFF: f64 = 0.90;
pub const A4_HZ: f64 = 440.0;
/// Bins below this frequency do not contribute to chroma.
pub const CHROMA_MIN_HZ: f64 = 30.0;
/// Number of values in [`ShortTermSummary::to_vec`].
pub const N_SHORTTERM: usize = 8 + N_MFCC + N_CHROMA;

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("spectra have different bin counts ({0} vs {1})")]
    BinMismatch(usize, usize),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no frames to aggregate")]
    EmptyInput,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFeatures {
    pub zcr: f64,
    pub energy: f64,
    pub energy_entropy: f64,
    pub centroid: f64,
    pub spread: f64,
    pub rolloff: f64,
    /// Change from the previous frame; 0 for the first frame.
    pub flux: f64,
    pub spectral_entropy: f64,
    pub mfcc: [f64; N_MFCC],
    pub chroma: [f64; N_CHROMA],
}

/// Sign changes between consecutive samples over `L - 1`. Zero counts as non-negative.
pub fn zero_crossing_rate(frame: &[f64]) -> f64 {
    if frame.len() < 2 {
        return 0.0;
    }
    let crossings = frame
        .windows(2)
        .filter(|w| (w[0] >= 0.0) != (w[1] >= 0.0))
        .count();
    crossings as f64 / (frame.len() - 1) as f64
}

pub fn short_energy(frame: &[f64]) -> f64 {
    if frame.is_empty() {
        return 0.0;
    }
    frame.iter().map(|x| x * x).sum::<f64>() / frame.len() as f64
}

fn shannon_bits(parts: &[f64]) -> f64 {
    let total: f64 = parts.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let h: f64 = parts
        .iter()
        .map(|p| {
            let q = p / total;
            -q * floored_log2(q)
        })
        .sum();
    h.max(0.0)
}

/// Splits `0..len` into `n` contiguous ranges with boundaries at `floor(j * len / n)`.
fn partition(len: usize, n: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..n).map(move |j| (j * len / n)..((j + 1) * len / n))
}

/// Entropy (bits) of the distribution of energy over `n_sub` sub-frames.
pub fn energy_entropy(frame: &[f64], n_sub: usize) -> f64 {
    let n_sub = n_sub.max(2);
    let parts: Vec<f64> = partition(frame.len(), n_sub)
        .map(|r| frame[r].iter().map(|x| x * x).sum())
        .collect();
    shannon_bits(&parts)
}

/// Magnitude-weighted mean frequency and standard deviation around it, in Hz.
pub fn spectral_centroid_spread(spec: &MagnitudeSpectrum) -> (f64, f64) {
    let total: f64 = spec.bins().iter().sum();
    if total <= 0.0 {
        return (0.0, 0.0);
    }
    let centroid = spec
        .bins()
        .iter()
        .enumerate()
        .map(|(k, m)| spec.freq_of(k) * m)
        .sum::<f64>()
        / total;
    let var = spec
        .bins()
        .iter()
        .enumerate()
        .map(|(k, m)| (spec.freq_of(k) - centroid).powi(2) * m)
        .sum::<f64>()
        / total;
    (centroid, var.sqrt())
}

/// Lowest bin frequency at which cumulative power reaches `fraction` of the total.
pub fn spectral_rolloff(spec: &MagnitudeSpectrum, fraction: f64) -> Result<f64, FeatureError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(FeatureError::InvalidParameter(format!(
            "rolloff fraction {fraction} outside (0, 1)"
        )));
    }
    let total: f64 = spec.power().sum();
    if total <= 0.0 {
        return Ok(0.0);
    }
    let target = fraction * total;
    let mut cumulative = 0.0;
    for (k, p) in spec.power().enumerate() {
        cumulative += p;
        if cumulative >= target {
            return Ok(spec.freq_of(k));
        }
    }
    Ok(spec.max_freq())
}

fn unit_sum(bins: &[f64]) -> Vec<f64> {
    let total: f64 = bins.iter().sum();
    if total > 0.0 {
        bins.iter().map(|b| b / total).collect()
    } else {
        vec![1.0 / bins.len() as f64; bins.len()]
    }
}

/// Squared distance between the two sum-normalized magnitude spectra.
pub fn spectral_flux(
    current: &MagnitudeSpectrum,
    previous: &MagnitudeSpectrum,
) -> Result<f64, FeatureError> {
    if current.len() != previous.len() {
        return Err(FeatureError::BinMismatch(current.len(), previous.len()));
    }
    let p = unit_sum(current.bins());
    let q = unit_sum(previous.bins());
    Ok(p.iter().zip(&q).map(|(a, b)| (a - b).powi(2)).sum())
}

/// Entropy (bits) of power distributed over `n_bands` contiguous bands.
pub fn spectral_entropy(spec: &MagnitudeSpectrum, n_bands: usize) -> f64 {
    let n_bands = n_bands.max(2);
    let power: Vec<f64> = spec.power().collect();
    let bands: Vec<f64> = partition(power.len(), n_bands)
        .map(|r| power[r].iter().sum())
        .collect();
    shannon_bits(&bands)
}

pub fn mfcc(spec: &MagnitudeSpectrum, filterbank: &MelFilterbank) -> [f64; N_MFCC] {
    let log_mel: Vec<f64> = filterbank.apply(spec).into_iter().map(floored_ln).collect();
    let cepstrum = dsp::dct2_orthonormal(&log_mel);
    let mut out = [0.0; N_MFCC];
    out.copy_from_slice(&cepstrum[..N_MFCC]);
    out
}

/// Pitch class (0 = C) of a frequency under equal temperament around `a4_hz`.
pub fn pitch_class(freq: f64, a4_hz: f64) -> usize {
    let midi = (12.0 * (freq / a4_hz).log2() + 69.0).round() as i64;
    midi.rem_euclid(12) as usize
}

/// Power per pitch class, normalized to sum 1; all zeros for a silent frame.
pub fn chroma(spec: &MagnitudeSpectrum, a4_hz: f64) -> [f64; N_CHROMA] {
    let mut classes = [0.0; N_CHROMA];
    for (k, p) in spec.power().enumerate() {
        let f = spec.freq_of(k);
        if f >= CHROMA_MIN_HZ {
            classes[pitch_class(f, a4_hz)] += p;
        }
    }
    let total: f64 = classes.iter().sum();
    if total > 0.0 {
        for c in &mut classes {
            *c /= total;
        }
    }
    classes
}

/// Computes [`FrameFeatures`] for consecutive frames of one recording.
///
/// Time-domain features read the raw frame; spectral features read the
/// frame after the analysis window is applied.
#[derive(Debug, Clone)]
pub struct FrameAnalyzer {
    spectrum: SpectrumAnalyzer,
    filterbank: MelFilterbank,
    window: Vec<f64>,
}

impl FrameAnalyzer {
    pub fn new(frame_len: usize, sample_rate: u32, window: Vec<f64>) -> Self {
        assert_eq!(window.len(), frame_len);
        Self {
            spectrum: SpectrumAnalyzer::new(frame_len, sample_rate),
            filterbank: dsp::build_mel_filterbank(sample_rate, frame_len, dsp::DEFAULT_MEL_FILTERS),
            window,
        }
    }

    pub fn spectrum_of(&self, frame: &[f64]) -> MagnitudeSpectrum {
        let windowed: Vec<f64> = frame.iter().zip(&self.window).map(|(x, w)| x * w).collect();
        self.spectrum.analyze(&windowed)
    }

    pub fn analyze<F: AsRef<[f64]>>(&self, frames: &[F]) -> Vec<FrameFeatures> {
        let mut out = Vec::with_capacity(frames.len());
        let mut previous: Option<MagnitudeSpectrum> = None;
        for frame in frames {
            let frame = frame.as_ref();
            let spec = self.spectrum_of(frame);
            let (centroid, spread) = spectral_centroid_spread(&spec);
            let flux = match &previous {
                Some(prev) => spectral_flux(&spec, prev).expect("same analyzer, same bin count"),
                None => 0.0,
            };
            out.push(FrameFeatures {
                zcr: zero_crossing_rate(frame),
                energy: short_energy(frame),
                energy_entropy: energy_entropy(frame, DEFAULT_SUBFRAMES),
                centroid,
                spread,
                rolloff: spectral_rolloff(&spec, DEFAULT_ROLLOFF).expect("valid fraction"),
                flux,
                spectral_entropy: spectral_entropy(&spec, DEFAULT_BANDS),
                mfcc: mfcc(&spec, &self.filterbank),
                chroma: chroma(&spec, A4_HZ),
            });
            previous = Some(spec);
        }
        out
    }
}

/// Mean of every short-term feature over one recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShortTermSummary {
    pub zcr: f64,
    pub energy: f64,
    pub energy_entropy: f64,
    pub centroid: f64,
    pub spread: f64,
    pub rolloff: f64,
    pub flux: f64,
    pub spectral_entropy: f64,
    pub mfcc: [f64; N_MFCC],
    pub chroma: [f64; N_CHROMA],
}

impl ShortTermSummary {
    /// Flattened as zcr, energy, energy_entropy, centroid, spread, rolloff,
    /// flux, spectral_entropy, mfcc[13], chroma[12].
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![
            self.zcr,
            self.energy,
            self.energy_entropy,
            self.centroid,
            self.spread,
            self.rolloff,
            self.flux,
            self.spectral_entropy,
        ];
        v.extend_from_slice(&self.mfcc);
        v.extend_from_slice(&self.chroma);
        v
    }
}

pub fn aggregate_frames(per_frame: &[FrameFeatures]) -> Result<ShortTermSummary, FeatureError> {
    let t = per_frame.len();
    if t == 0 {
        return Err(FeatureError::EmptyInput);
    }
    let mean = |f: &dyn Fn(&FrameFeatures) -> f64| per_frame.iter().map(f).sum::<f64>() / t as f64;
    let flux = if t > 1 {
        per_frame[1..].iter().map(|f| f.flux).sum::<f64>() / (t - 1) as f64
    } else {
        0.0
    };
    let mut mfcc = [0.0; N_MFCC];
    for (i, slot) in mfcc.iter_mut().enumerate() {
        *slot = mean(&|f| f.mfcc[i]);
    }
    let mut chroma = [0.0; N_CHROMA];
    for (i, slot) in chroma.iter_mut().enumerate() {
        *slot = mean(&|f| f.chroma[i]);
    }
    Ok(ShortTermSummary {
        zcr: mean(&|f| f.zcr),
        energy: mean(&|f| f.energy),
        energy_entropy: mean(&|f| f.energy_entropy),
        centroid: mean(&|f| f.centroid),
        spread: mean(&|f| f.spread),
        rolloff: mean(&|f| f.rolloff),
        flux,
        spectral_entropy: mean(&|f| f.spectral_entropy),
        mfcc,
        chroma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio_io::hamming;
    use crate::dsp::magnitude_spectrum;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn tone(freq: f64, amp: f64, sr: u32, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / f64::from(sr)).sin())
            .collect()
    }

    fn windowed_spectrum(x: &[f64], sr: u32) -> MagnitudeSpectrum {
        let w = hamming(x.len());
        let y: Vec<f64> = x.iter().zip(&w).map(|(a, b)| a * b).collect();
        magnitude_spectrum(&y, sr)
    }

    fn flat(n_bins: usize, bin_hz: f64) -> MagnitudeSpectrum {
        MagnitudeSpectrum::new(vec![1.0; n_bins], bin_hz)
    }

    #[test]
    fn zcr_cases() {
        // 100 Hz sine at 8 kHz over 50 ms: 2 * 100 * 0.05 = 10 crossings
        let z = zero_crossing_rate(&tone(100.0, 0.5, 8000, 400));
        assert!((z * 399.0 - 10.0).abs() <= 1.0, "{z}");
        assert_eq!(zero_crossing_rate(&[0.3; 50]), 0.0);
        let alt: Vec<f64> = (0..20).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert_eq!(zero_crossing_rate(&alt), 1.0);
    }

    #[test]
    fn energy_cases() {
        assert_eq!(short_energy(&[0.0; 10]), 0.0);
        assert_eq!(short_energy(&[1.0, -1.0, 1.0, -1.0]), 1.0);
        // 10 full periods of 100 Hz at 8 kHz
        let e = short_energy(&tone(100.0, 0.6, 8000, 800));
        assert!((e - 0.18).abs() <= 0.0018);
    }

    #[test]
    fn energy_entropy_cases() {
        let uniform = vec![0.5; 400];
        assert!((energy_entropy(&uniform, 10) - 10f64.log2()).abs() < 1e-9);
        let mut spike = vec![0.0; 400];
        spike[5] = 1.0;
        assert!(energy_entropy(&spike, 10).abs() < 1e-9);
        let x = tone(230.0, 0.4, 8000, 400);
        let scaled: Vec<f64> = x.iter().map(|v| v * 2.5).collect();
        assert!((energy_entropy(&x, 10) - energy_entropy(&scaled, 10)).abs() < 1e-9);
        assert_eq!(energy_entropy(&[0.0; 400], 10), 0.0);
    }

    #[test]
    fn centroid_and_spread_of_tone() {
        let spec = windowed_spectrum(&tone(1000.0, 0.5, 16000, 800), 16000);
        let (c, s) = spectral_centroid_spread(&spec);
        assert!((c - 1000.0).abs() <= 40.0, "centroid {c}");
        assert!(s < 100.0, "spread {s}");
    }

    #[test]
    fn centroid_of_flat_spectrum() {
        let spec = flat(401, 10.0);
        let (c, _) = spectral_centroid_spread(&spec);
        assert!((c - 2000.0).abs() < 1e-9);
        assert_eq!(
            spectral_centroid_spread(&MagnitudeSpectrum::new(vec![0.0; 5], 1.0)),
            (0.0, 0.0)
        );
    }

    #[test]
    fn rolloff_cases() {
        let spec = flat(401, 10.0);
        let nyq = 4000.0;
        assert!((spectral_rolloff(&spec, 0.9).unwrap() - 0.9 * nyq).abs() <= 10.0);
        assert!((spectral_rolloff(&spec, 0.5).unwrap() - 0.5 * nyq).abs() <= 10.0);
        assert!(spectral_rolloff(&spec, 1.0).is_err());
        assert!(spectral_rolloff(&spec, 0.0).is_err());
        let t = windowed_spectrum(&tone(1500.0, 0.5, 8000, 400), 8000);
        assert!((spectral_rolloff(&t, 0.9).unwrap() - 1500.0).abs() <= 20.0);
    }

    #[test]
    fn flux_cases() {
        let a = windowed_spectrum(&tone(500.0, 0.5, 8000, 400), 8000);
        assert_eq!(spectral_flux(&a, &a).unwrap(), 0.0);
        assert!(spectral_flux(&a.scaled(4.0), &a).unwrap() < 1e-20);
        let mut x = vec![0.0; 8];
        x[1] = 3.0;
        let mut y = vec![0.0; 8];
        y[5] = 0.2;
        let f = spectral_flux(
            &MagnitudeSpectrum::new(x, 1.0),
            &MagnitudeSpectrum::new(y, 1.0),
        )
        .unwrap();
        assert!((f - 2.0).abs() < 1e-12);
        assert_eq!(
            spectral_flux(&flat(4, 1.0), &flat(5, 1.0)),
            Err(FeatureError::BinMismatch(4, 5))
        );
    }

    #[test]
    fn spectral_entropy_cases() {
        let mut one = vec![0.0; 100];
        one[3] = 2.0;
        assert!(spectral_entropy(&MagnitudeSpectrum::new(one, 1.0), 10).abs() < 1e-9);
        assert!((spectral_entropy(&flat(100, 1.0), 10) - 10f64.log2()).abs() < 1e-9);

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let noise: Vec<f64> = (0..800).map(|_| rng.random_range(-0.5..0.5)).collect();
        let h_noise = spectral_entropy(&windowed_spectrum(&noise, 16000), 10);
        let h_tone = spectral_entropy(&windowed_spectrum(&tone(440.0, 0.5, 16000, 800), 16000), 10);
        assert!(h_noise > h_tone);
    }

    #[test]
    fn mfcc_gain_moves_only_c0() {
        let fb = dsp::build_mel_filterbank(16000, 800, dsp::DEFAULT_MEL_FILTERS);
        let x: Vec<f64> = tone(220.0, 0.2, 16000, 800)
            .iter()
            .zip(tone(1330.0, 0.1, 16000, 800))
            .map(|(a, b)| a + b)
            .collect();
        let spec = windowed_spectrum(&x, 16000);
        let a = mfcc(&spec, &fb);
        let b = mfcc(&spec.scaled(2.0), &fb);
        assert_eq!(a.len(), 13);
        for k in 1..13 {
            assert!((a[k] - b[k]).abs() < 1e-6);
        }
        assert!((b[0] - a[0] - 2f64.ln() * 26f64.sqrt()).abs() < 1e-6);

        let silent = mfcc(&MagnitudeSpectrum::new(vec![0.0; 401], 20.0), &fb);
        assert!(silent.iter().all(|c| c.is_finite()));
    }

    #[test]
    fn chroma_cases() {
        let argmax = |c: &[f64; 12]| {
            c.iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0
        };
        let a4 = chroma(&windowed_spectrum(&tone(440.0, 0.5, 16000, 800), 16000), A4_HZ);
        let a5 = chroma(&windowed_spectrum(&tone(880.0, 0.5, 16000, 800), 16000), A4_HZ);
        assert_eq!(argmax(&a4), 9);
        assert_eq!(argmax(&a5), 9);
        assert!((a4.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(chroma(&MagnitudeSpectrum::new(vec![0.0; 401], 20.0), A4_HZ), [0.0; 12]);
        assert_eq!(pitch_class(261.63, A4_HZ), 0);
    }

    #[test]
    fn aggregate_single_and_pairs() {
        let fa = FrameAnalyzer::new(400, 8000, hamming(400));
        let frame = tone(300.0, 0.4, 8000, 400);
        let one = fa.analyze(&[frame.clone()]);
        let s = aggregate_frames(&one).unwrap();
        assert_eq!(s.zcr, one[0].zcr);
        assert_eq!(s.mfcc, one[0].mfcc);
        assert_eq!(s.flux, 0.0);
        let two = fa.analyze(&[frame.clone(), frame]);
        let s2 = aggregate_frames(&two).unwrap();
        assert_eq!(s2.flux, 0.0);
        assert!((s2.centroid - s.centroid).abs() < 1e-9);
        assert_eq!(aggregate_frames(&[]), Err(FeatureError::EmptyInput));
        assert_eq!(s.to_vec().len(), N_SHORTTERM);
    }

    #[test]
    fn aggregate_matches_direct_means() {
        let fa = FrameAnalyzer::new(400, 8000, hamming(400));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let frames: Vec<Vec<f64>> = (0..7)
            .map(|_| (0..400).map(|_| rng.random_range(-0.3..0.3)).collect())
            .collect();
        let per = fa.analyze(&frames);
        let s = aggregate_frames(&per).unwrap();
        // Independent reduction over a column dump.
        let dump: Vec<Vec<f64>> = per
            .iter()
            .map(|f| {
                let mut row = vec![f.zcr, f.energy, f.energy_entropy, f.centroid, f.spread, f.rolloff];
                row.push(f.flux);
                row.push(f.spectral_entropy);
                row.extend(f.mfcc);
                row.extend(f.chroma);
                row
            })
            .collect();
        let got = s.to_vec();
        for col in 0..N_SHORTTERM {
            let rows: Vec<f64> = if col == 6 {
                dump[1..].iter().map(|r| r[col]).collect()
            } else {
                dump.iter().map(|r| r[col]).collect()
            };
            let want = rows.iter().sum::<f64>() / rows.len() as f64;
            assert!((got[col] - want).abs() < 1e-12, "column {col}");
        }
    }

    #[test]
    fn silence_stays_finite() {
        let fa = FrameAnalyzer::new(400, 8000, hamming(400));
        let per = fa.analyze(&[vec![0.0; 400], vec![0.0; 400]]);
        let s = aggregate_frames(&per).unwrap();
        assert!(s.to_vec().iter().all(|v| v.is_finite()));
        assert_eq!(s.chroma, [0.0; 12]);
    }
}
