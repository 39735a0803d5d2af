//! Numeric kernels shared by the feature extractors.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

/// Floor applied before every logarithm of an energy.
pub const LOG_FLOOR: f64 = 1e-10;

pub const DEFAULT_MEL_FILTERS: usize = 26;
pub const N_MFCC: usize = 13;

pub const PITCH_FLOOR_HZ: f64 = 75.0;
pub const PITCH_CEILING_HZ: f64 = 500.0;
pub const VOICING_THRESHOLD: f64 = 0.45;
/// Mean-square energy below which a frame is never voiced.
pub const SILENCE_FLOOR: f64 = 1e-4;

pub fn floored_ln(x: f64) -> f64 {
    x.max(LOG_FLOOR).ln()
}

pub fn floored_log2(x: f64) -> f64 {
    x.max(LOG_FLOOR).log2()
}

/// Magnitudes of the non-negative frequency DFT bins of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeSpectrum {
    bins: Vec<f64>,
    bin_hz: f64,
}

impl MagnitudeSpectrum {
    pub fn new(bins: Vec<f64>, bin_hz: f64) -> Self {
        debug_assert!(bins.iter().all(|b| *b >= 0.0));
        Self { bins, bin_hz }
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    pub fn bin_hz(&self) -> f64 {
        self.bin_hz
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn freq_of(&self, k: usize) -> f64 {
        k as f64 * self.bin_hz
    }

    /// Frequency of the last bin. Equals Nyquist for even frame lengths.
    pub fn max_freq(&self) -> f64 {
        self.freq_of(self.bins.len().saturating_sub(1))
    }

    pub fn power(&self) -> impl Iterator<Item = f64> + '_ {
        self.bins.iter().map(|m| m * m)
    }

    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            bins: self.bins.iter().map(|b| b * gain).collect(),
            bin_hz: self.bin_hz,
        }
    }
}

/// Reusable FFT plan for one frame length.
#[derive(Clone)]
pub struct SpectrumAnalyzer {
    fft: Arc<dyn Fft<f64>>,
    frame_len: usize,
    sample_rate: u32,
}

impl std::fmt::Debug for SpectrumAnalyzer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectrumAnalyzer")
            .field("frame_len", &self.frame_len)
            .field("sample_rate", &self.sample_rate)
            .finish()
    }
}

impl SpectrumAnalyzer {
    pub fn new(frame_len: usize, sample_rate: u32) -> Self {
        assert!(frame_len > 0, "frame length must be positive");
        let fft = FftPlanner::new().plan_fft_forward(frame_len);
        Self {
            fft,
            frame_len,
            sample_rate,
        }
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn n_bins(&self) -> usize {
        self.frame_len / 2 + 1
    }

    pub fn analyze(&self, frame: &[f64]) -> MagnitudeSpectrum {
        assert_eq!(frame.len(), self.frame_len, "frame length mismatch");
        let mut buf: Vec<Complex<f64>> = frame.iter().map(|&x| Complex::new(x, 0.0)).collect();
        self.fft.process(&mut buf);
        let bins = buf[..self.n_bins()].iter().map(|c| c.norm()).collect();
        MagnitudeSpectrum::new(bins, f64::from(self.sample_rate) / self.frame_len as f64)
    }
}

/// One-shot spectrum of a frame. Prefer [`SpectrumAnalyzer`] for repeated frames.
pub fn magnitude_spectrum(frame: &[f64], sample_rate: u32) -> MagnitudeSpectrum {
    SpectrumAnalyzer::new(frame.len(), sample_rate).analyze(frame)
}

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Triangular filters with centres equally spaced on the mel scale from 0 Hz to Nyquist.
#[derive(Debug, Clone, PartialEq)]
pub struct MelFilterbank {
    weights: Vec<Vec<f64>>,
    edges: Vec<(f64, f64, f64)>,
    n_bins: usize,
}

impl MelFilterbank {
    pub fn n_filters(&self) -> usize {
        self.weights.len()
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    /// `(left, center, right)` in Hz for each filter.
    pub fn edges(&self) -> &[(f64, f64, f64)] {
        &self.edges
    }

    /// Filter outputs `W * spectrum`.
    pub fn apply(&self, spec: &MagnitudeSpectrum) -> Vec<f64> {
        assert_eq!(spec.len(), self.n_bins, "filterbank built for another frame size");
        self.weights
            .iter()
            .map(|row| row.iter().zip(spec.bins()).map(|(w, m)| w * m).sum())
            .collect()
    }
}

pub fn build_mel_filterbank(sample_rate: u32, frame_len: usize, n_filters: usize) -> MelFilterbank {
    assert!(n_filters > N_MFCC, "need more than {N_MFCC} mel filters");
    let n_bins = frame_len / 2 + 1;
    let bin_hz = f64::from(sample_rate) / frame_len as f64;
    let mel_max = hz_to_mel(f64::from(sample_rate) / 2.0);
    let points: Vec<f64> = (0..n_filters + 2)
        .map(|i| mel_to_hz(mel_max * i as f64 / (n_filters + 1) as f64))
        .collect();

    let mut weights = Vec::with_capacity(n_filters);
    let mut edges = Vec::with_capacity(n_filters);
    for m in 0..n_filters {
        let (left, center, right) = (points[m], points[m + 1], points[m + 2]);
        let mut row: Vec<f64> = (0..n_bins)
            .map(|k| {
                let f = k as f64 * bin_hz;
                if f <= left || f >= right {
                    0.0
                } else if f <= center {
                    (f - left) / (center - left)
                } else {
                    (right - f) / (right - center)
                }
            })
            .collect();
        // A filter narrower than one bin would be empty; give it the bin nearest its centre.
        if row.iter().all(|w| *w == 0.0) {
            let k = ((center / bin_hz).round() as usize).min(n_bins - 1);
            row[k] = 1.0;
        }
        weights.push(row);
        edges.push((left, center, right));
    }
    MelFilterbank {
        weights,
        edges,
        n_bins,
    }
}

/// Orthonormal DCT-II.
pub fn dct2_orthonormal(v: &[f64]) -> Vec<f64> {
    assert!(!v.is_empty(), "DCT of an empty vector");
    let n = v.len() as f64;
    (0..v.len())
        .map(|k| {
            let scale = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            scale
                * v.iter()
                    .enumerate()
                    .map(|(i, x)| x * (PI * k as f64 * (2 * i + 1) as f64 / (2.0 * n)).cos())
                    .sum::<f64>()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchEstimate {
    pub f0_hz: Option<f64>,
    pub voiced: bool,
    /// Normalized autocorrelation peak, clamped to `[0, 1]`.
    pub confidence: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PitchParams {
    pub f_min: f64,
    pub f_max: f64,
    pub voicing_threshold: f64,
    pub silence_floor: f64,
}

impl Default for PitchParams {
    fn default() -> Self {
        Self {
            f_min: PITCH_FLOOR_HZ,
            f_max: PITCH_CEILING_HZ,
            voicing_threshold: VOICING_THRESHOLD,
            silence_floor: SILENCE_FLOOR,
        }
    }
}

/// Autocorrelation pitch estimate for one frame.
///
/// Searches lags `ceil(sr / f_max) ..= floor(sr / f_min)` for the maximum of
/// `r(lag) / r(0)`. The frame is voiced when that peak reaches the voicing
/// threshold and the frame's mean-square energy reaches the silence floor.
pub fn estimate_pitch(frame: &[f64], sample_rate: u32, params: &PitchParams) -> PitchEstimate {
    let unvoiced = |confidence: f64| PitchEstimate {
        f0_hz: None,
        voiced: false,
        confidence,
    };
    let n = frame.len();
    if n < 2 {
        return unvoiced(0.0);
    }
    let r0: f64 = frame.iter().map(|x| x * x).sum();
    if r0 <= 0.0 {
        return unvoiced(0.0);
    }
    let sr = f64::from(sample_rate);
    let lag_min = ((sr / params.f_max).ceil() as usize).max(1);
    let lag_max = ((sr / params.f_min).floor() as usize).min(n - 1);
    if lag_min > lag_max {
        return unvoiced(0.0);
    }

    let mut best_lag = lag_min;
    let mut best = f64::NEG_INFINITY;
    for lag in lag_min..=lag_max {
        let r: f64 = frame[..n - lag]
            .iter()
            .zip(&frame[lag..])
            .map(|(a, b)| a * b)
            .sum();
        let r = r / r0;
        if r > best {
            best = r;
            best_lag = lag;
        }
    }
    let confidence = best.clamp(0.0, 1.0);
    let energy = r0 / n as f64;
    if confidence >= params.voicing_threshold && energy >= params.silence_floor {
        PitchEstimate {
            f0_hz: Some(sr / best_lag as f64),
            voiced: true,
            confidence,
        }
    } else {
        unvoiced(confidence)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct-summation DFT magnitudes, the reference for the FFT path.
    fn direct_dft(x: &[f64]) -> Vec<f64> {
        let n = x.len();
        (0..=n / 2)
            .map(|k| {
                let (mut re, mut im) = (0.0, 0.0);
                for (i, v) in x.iter().enumerate() {
                    let ang = -2.0 * PI * (k * i % n) as f64 / n as f64;
                    re += v * ang.cos();
                    im += v * ang.sin();
                }
                (re * re + im * im).sqrt()
            })
            .collect()
    }

    #[test]
    fn constant_frame_has_only_dc() {
        let s = magnitude_spectrum(&[1.0; 4], 8000);
        assert_eq!(s.len(), 3);
        assert!((s.bins()[0] - 4.0).abs() < 1e-12);
        assert!(s.bins()[1].abs() < 1e-12 && s.bins()[2].abs() < 1e-12);
    }

    #[test]
    fn on_bin_cosine() {
        let x: Vec<f64> = (0..8).map(|n| (2.0 * PI * n as f64 / 8.0).cos()).collect();
        let s = magnitude_spectrum(&x, 8000);
        assert!((s.bins()[1] - 4.0).abs() < 1e-12);
        for (k, b) in s.bins().iter().enumerate() {
            if k != 1 {
                assert!(b.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn matches_direct_dft_and_parseval() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [7usize, 64, 400, 441] {
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let s = magnitude_spectrum(&x, 16000);
            let reference = direct_dft(&x);
            for (a, b) in s.bins().iter().zip(&reference) {
                assert!((a - b).abs() <= 1e-9 * b.abs().max(1.0), "{a} vs {b}");
            }
            let energy: f64 = x.iter().map(|v| v * v).sum();
            let p: Vec<f64> = s.power().collect();
            let mut total = p[0];
            for (k, v) in p.iter().enumerate().skip(1) {
                let nyquist = n % 2 == 0 && k == n / 2;
                total += if nyquist { *v } else { 2.0 * v };
            }
            assert!((energy - total / n as f64).abs() < 1e-9);
        }
    }

    #[test]
    fn mel_scale_values() {
        assert_eq!(hz_to_mel(0.0), 0.0);
        assert!((hz_to_mel(700.0) - 781.17).abs() < 0.01);
        assert!((mel_to_hz(hz_to_mel(1234.5)) - 1234.5).abs() < 1e-9);
    }

    #[test]
    fn filterbank_shape() {
        let fb = build_mel_filterbank(16000, 800, DEFAULT_MEL_FILTERS);
        assert_eq!(fb.n_filters(), 26);
        assert_eq!(fb.n_bins(), 401);
        for w in fb.edges().windows(2) {
            assert!((w[0].2 - w[1].1).abs() < 1e-9);
            assert!((w[0].1 - w[1].0).abs() < 1e-9);
        }
        for (row, &(left, _, right)) in fb.weights().iter().zip(fb.edges()) {
            assert!(row.iter().all(|w| *w >= 0.0));
            assert!(row.iter().cloned().fold(0.0, f64::max) > 0.0);
            for (k, w) in row.iter().enumerate() {
                let f = k as f64 * 20.0;
                if f <= left || f >= right {
                    assert_eq!(*w, 0.0);
                }
            }
            // unimodal: non-decreasing then non-increasing
            let peak = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .unwrap()
                .0;
            assert!(row[..=peak].windows(2).all(|p| p[0] <= p[1]));
            assert!(row[peak..].windows(2).all(|p| p[0] >= p[1]));
        }
    }

    #[test]
    fn dct_of_constant() {
        let out = dct2_orthonormal(&[2.5; 9]);
        assert!((out[0] - 2.5 * 3.0).abs() < 1e-12);
        assert!(out[1..].iter().all(|c| c.abs() < 1e-12));
    }

    #[test]
    fn dct_basis_is_orthonormal_and_invertible() {
        let n = 26;
        let basis: Vec<Vec<f64>> = (0..n)
            .map(|i| {
                let mut e = vec![0.0; n];
                e[i] = 1.0;
                dct2_orthonormal(&e)
            })
            .collect();
        // basis[i][k] is row k, column i of the transform matrix
        for a in 0..n {
            for b in 0..n {
                let dot: f64 = (0..n).map(|i| basis[i][a] * basis[i][b]).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-9);
            }
        }
        let v: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let c = dct2_orthonormal(&v);
        let back: Vec<f64> = (0..n)
            .map(|i| (0..n).map(|k| basis[i][k] * c[k]).sum())
            .collect();
        for (x, y) in v.iter().zip(&back) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    fn sawtooth(f0: f64, sr: u32, n: usize) -> Vec<f64> {
        (0..n)
            .map(|i| {
                let phase = (f0 * i as f64 / f64::from(sr)).fract();
                0.5 * (2.0 * phase - 1.0)
            })
            .collect()
    }

    #[test]
    fn sawtooth_pitch() {
        let frame = sawtooth(200.0, 16000, 800);
        let p = estimate_pitch(&frame, 16000, &PitchParams::default());
        assert!(p.voiced);
        assert!((p.f0_hz.unwrap() - 200.0).abs() <= 2.0);
    }

    #[test]
    fn silence_is_unvoiced() {
        let p = estimate_pitch(&[0.0; 800], 16000, &PitchParams::default());
        assert!(!p.voiced && p.f0_hz.is_none());
    }

    #[test]
    fn white_noise_is_unvoiced() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let frame: Vec<f64> = (0..800).map(|_| rng.random_range(-0.5..0.5)).collect();
        let p = estimate_pitch(&frame, 16000, &PitchParams::default());
        assert!(!p.voiced);
        assert!(p.confidence < 0.45, "confidence {}", p.confidence);
    }

    #[test]
    fn pitch_is_gain_invariant() {
        let frame = sawtooth(140.0, 16000, 800);
        let base = estimate_pitch(&frame, 16000, &PitchParams::default());
        for gain in [0.1, 0.5, 1.9] {
            let scaled: Vec<f64> = frame.iter().map(|x| x * gain).collect();
            let p = estimate_pitch(&scaled, 16000, &PitchParams::default());
            assert_eq!(p.f0_hz, base.f0_hz);
            assert!((p.confidence - base.confidence).abs() < 1e-12);
        }
    }

    #[test]
    fn spectrum_is_gain_equivariant() {
        let frame = sawtooth(300.0, 8000, 256);
        let a = magnitude_spectrum(&frame, 8000);
        let scaled: Vec<f64> = frame.iter().map(|x| x * 3.0).collect();
        let b = magnitude_spectrum(&scaled, 8000);
        for (x, y) in a.bins().iter().zip(b.bins()) {
            assert!((3.0 * x - y).abs() < 1e-9);
        }
    }
}
