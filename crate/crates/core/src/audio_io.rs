//! WAV decoding, signal validation and short-term framing.

use std::f64::consts::PI;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lowest sample rate accepted anywhere in the pipeline.
pub const MIN_SAMPLE_RATE: u32 = 8000;

#[derive(Debug, Error)]
pub enum AudioError {
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("signal too short: {samples} samples, need at least {needed}")]
    SignalTooShort { samples: usize, needed: usize },
    #[error("invalid signal: {0}")]
    InvalidSignal(String),
    #[error("invalid framing: {0}")]
    InvalidFraming(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// A mono recording with amplitudes in `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioSignal {
    samples: Vec<f64>,
    sample_rate: u32,
}

impl AudioSignal {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Result<Self, AudioError> {
        if samples.is_empty() {
            return Err(AudioError::InvalidSignal("no samples".into()));
        }
        if sample_rate < MIN_SAMPLE_RATE {
            return Err(AudioError::UnsupportedFormat(format!(
                "sample rate {sample_rate} Hz is below {MIN_SAMPLE_RATE} Hz"
            )));
        }
        if let Some(bad) = samples.iter().find(|a| !a.is_finite() || a.abs() > 1.0) {
            return Err(AudioError::InvalidSignal(format!(
                "amplitude {bad} outside [-1, 1]"
            )));
        }
        Ok(Self {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Duration in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / f64::from(self.sample_rate)
    }

    /// Returns a copy with every sample multiplied by `gain`, clamped to `[-1, 1]`.
    pub fn scaled(&self, gain: f64) -> Self {
        Self {
            samples: self
                .samples
                .iter()
                .map(|s| (s * gain).clamp(-1.0, 1.0))
                .collect(),
            sample_rate: self.sample_rate,
        }
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Rectangular,
    #[default]
    Hamming,
}

impl WindowKind {
    /// Window coefficients for a block of `len` samples.
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            WindowKind::Rectangular => vec![1.0; len],
            WindowKind::Hamming => hamming(len),
        }
    }
}

/// `w[n] = 0.54 - 0.46 cos(2 pi n / (L - 1))`.
pub fn hamming(len: usize) -> Vec<f64> {
    if len == 1 {
        return vec![1.0];
    }
    let denom = (len - 1) as f64;
    (0..len)
        .map(|n| 0.54 - 0.46 * (2.0 * PI * n as f64 / denom).cos())
        .collect()
}

/// Fixed-length analysis blocks cut from a signal at a constant hop.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<Vec<f64>>,
    frame_len: usize,
    hop_len: usize,
    sample_rate: u32,
    window_kind: WindowKind,
}

impl FrameSequence {
    pub fn frames(&self) -> &[Vec<f64>] {
        &self.frames
    }

    pub fn frame_len(&self) -> usize {
        self.frame_len
    }

    pub fn hop_len(&self) -> usize {
        self.hop_len
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn window_kind(&self) -> WindowKind {
        self.window_kind
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Sample offset at which frame `i` starts.
    pub fn start_of(&self, i: usize) -> usize {
        i * self.hop_len
    }
}

/// Converts a duration in milliseconds to a whole number of samples.
pub fn ms_to_samples(ms: f64, sample_rate: u32) -> usize {
    (ms * f64::from(sample_rate) / 1000.0).round() as usize
}

/// Number of frames produced for a signal of `n` samples.
pub fn frame_count(n: usize, frame_len: usize, hop_len: usize) -> usize {
    if n < frame_len || hop_len == 0 {
        0
    } else {
        (n - frame_len) / hop_len + 1
    }
}

pub fn frame_signal(
    signal: &AudioSignal,
    frame_ms: f64,
    hop_ms: f64,
    window_kind: WindowKind,
) -> Result<FrameSequence, AudioError> {
    if !(hop_ms > 0.0 && frame_ms >= hop_ms) {
        return Err(AudioError::InvalidFraming(format!(
            "need frame_ms >= hop_ms > 0, got frame {frame_ms} ms, hop {hop_ms} ms"
        )));
    }
    let sr = signal.sample_rate();
    let frame_len = ms_to_samples(frame_ms, sr);
    let hop_len = ms_to_samples(hop_ms, sr).max(1);
    if frame_len < 2 {
        return Err(AudioError::InvalidFraming(format!(
            "frame of {frame_ms} ms is under two samples at {sr} Hz"
        )));
    }
    let n = signal.len();
    if n < frame_len {
        return Err(AudioError::SignalTooShort {
            samples: n,
            needed: frame_len,
        });
    }
    let window = window_kind.coefficients(frame_len);
    let samples = signal.samples();
    let frames = (0..frame_count(n, frame_len, hop_len))
        .map(|i| {
            let start = i * hop_len;
            samples[start..start + frame_len]
                .iter()
                .zip(&window)
                .map(|(s, w)| s * w)
                .collect()
        })
        .collect();
    Ok(FrameSequence {
        frames,
        frame_len,
        hop_len,
        sample_rate: sr,
        window_kind,
    })
}

/// Validates the sample rate. No resampling is performed.
pub fn resample_check(signal: AudioSignal) -> Result<AudioSignal, AudioError> {
    if signal.sample_rate() < MIN_SAMPLE_RATE {
        return Err(AudioError::UnsupportedFormat(format!(
            "sample rate {} Hz is below {MIN_SAMPLE_RATE} Hz",
            signal.sample_rate()
        )));
    }
    Ok(signal)
}

/// Averages interleaved channels into one.
pub fn downmix(interleaved: &[f64], channels: usize) -> Vec<f64> {
    if channels <= 1 {
        return interleaved.to_vec();
    }
    interleaved
        .chunks_exact(channels)
        .map(|c| c.iter().sum::<f64>() / channels as f64)
        .collect()
}

fn map_hound(err: hound::Error) -> AudioError {
    match err {
        hound::Error::IoError(e) if e.kind() == io::ErrorKind::UnexpectedEof => {
            AudioError::MalformedWav("unexpected end of file".into())
        }
        hound::Error::IoError(e) => AudioError::Io(e),
        hound::Error::FormatError(msg) => AudioError::MalformedWav(msg.into()),
        hound::Error::TooWide => AudioError::UnsupportedFormat("sample too wide".into()),
        hound::Error::Unsupported => AudioError::UnsupportedFormat("not PCM".into()),
        hound::Error::InvalidSampleFormat => {
            AudioError::UnsupportedFormat("invalid sample format".into())
        }
        other => AudioError::MalformedWav(other.to_string()),
    }
}

/// Decodes a 16-bit PCM mono or stereo RIFF/WAVE file.
pub fn load_wav(path: impl AsRef<Path>) -> Result<AudioSignal, AudioError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    let reader = hound::WavReader::new(io::BufReader::new(file)).map_err(map_hound)?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int || spec.bits_per_sample != 16 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{:?} {}-bit samples, need PCM 16-bit",
            spec.sample_format, spec.bits_per_sample
        )));
    }
    let channels = usize::from(spec.channels);
    if channels == 0 || channels > 2 {
        return Err(AudioError::UnsupportedFormat(format!(
            "{channels} channels, need 1 or 2"
        )));
    }
    if spec.sample_rate < MIN_SAMPLE_RATE {
        return Err(AudioError::UnsupportedFormat(format!(
            "sample rate {} Hz is below {MIN_SAMPLE_RATE} Hz",
            spec.sample_rate
        )));
    }
    let expected = reader.len() as usize;
    let mut interleaved = Vec::with_capacity(expected);
    for s in reader.into_samples::<i16>() {
        let s = s.map_err(|e| match e {
            hound::Error::IoError(io) => {
                AudioError::MalformedWav(format!("truncated data chunk: {io}"))
            }
            other => map_hound(other),
        })?;
        interleaved.push(f64::from(s) / 32768.0);
    }
    if interleaved.len() != expected || interleaved.len() % channels != 0 {
        return Err(AudioError::MalformedWav(format!(
            "decoded {} samples, header declares {expected}",
            interleaved.len()
        )));
    }
    if interleaved.is_empty() {
        return Err(AudioError::MalformedWav("empty data chunk".into()));
    }
    AudioSignal::new(downmix(&interleaved, channels), spec.sample_rate)
}

/// Writes a mono 16-bit PCM WAV. Samples are rounded to the nearest code.
pub fn write_wav(path: impl AsRef<Path>, signal: &AudioSignal) -> Result<(), AudioError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: signal.sample_rate(),
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(map_hound)?;
    for &s in signal.samples() {
        writer
            .write_sample(quantize(s))
            .map_err(map_hound)?;
    }
    writer.finalize().map_err(map_hound)
}

pub fn quantize(sample: f64) -> i16 {
    (sample * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn wav_bytes(channels: u16, sample_rate: u32, bits: u16, data: &[u8], declared: u32) -> Vec<u8> {
        let block_align = channels * bits / 8;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + declared).to_le_bytes());
        out.extend_from_slice(b"WAVEfmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&sample_rate.to_le_bytes());
        out.extend_from_slice(&(sample_rate * u32::from(block_align)).to_le_bytes());
        out.extend_from_slice(&block_align.to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&declared.to_le_bytes());
        out.extend_from_slice(data);
        out
    }

    fn write_tmp(bytes: &[u8]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(bytes).unwrap();
        f.flush().unwrap();
        f
    }

    fn pcm(samples: &[i16]) -> Vec<u8> {
        samples.iter().flat_map(|s| s.to_le_bytes()).collect()
    }

    #[test]
    fn loads_mono_file() {
        let samples: Vec<i16> = (0..8000).map(|i| ((i % 100) * 100) as i16).collect();
        let data = pcm(&samples);
        let f = write_tmp(&wav_bytes(1, 8000, 16, &data, data.len() as u32));
        let sig = load_wav(f.path()).unwrap();
        assert_eq!(sig.len(), 8000);
        assert_eq!(sig.sample_rate(), 8000);
        assert_eq!(sig.samples()[1], 100.0 / 32768.0);
    }

    #[test]
    fn stereo_is_averaged() {
        let data = pcm(&[16384, -16384, 8192, 8192]);
        let f = write_tmp(&wav_bytes(2, 16000, 16, &data, data.len() as u32));
        let sig = load_wav(f.path()).unwrap();
        assert_eq!(sig.samples(), &[0.0, 0.25]);
    }

    #[test]
    fn truncated_data_chunk_is_malformed() {
        let data = pcm(&[1, 2, 3, 4]);
        let f = write_tmp(&wav_bytes(1, 8000, 16, &data, 400));
        let got = load_wav(f.path());
        assert!(matches!(got, Err(AudioError::MalformedWav(_))), "{got:?}");
    }

    #[test]
    fn garbage_header_is_malformed() {
        let f = write_tmp(b"RIFX not a wave file at all");
        assert!(matches!(load_wav(f.path()), Err(AudioError::MalformedWav(_))));
    }

    #[test]
    fn rejects_unsupported_formats() {
        let data = vec![0u8; 64];
        let f = write_tmp(&wav_bytes(1, 8000, 8, &data, 64));
        assert!(matches!(load_wav(f.path()), Err(AudioError::UnsupportedFormat(_))));
        let f = write_tmp(&wav_bytes(3, 8000, 16, &data[..60], 60));
        assert!(matches!(load_wav(f.path()), Err(AudioError::UnsupportedFormat(_))));
        let f = write_tmp(&wav_bytes(1, 4000, 16, &data, 64));
        assert!(matches!(load_wav(f.path()), Err(AudioError::UnsupportedFormat(_))));
    }

    #[test]
    fn write_then_load_preserves_codes() {
        let samples: Vec<f64> = (0..1000).map(|i| ((i as f64) * 0.01).sin() * 0.5).collect();
        let sig = AudioSignal::new(samples.clone(), 16000).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        write_wav(f.path(), &sig).unwrap();
        let back = load_wav(f.path()).unwrap();
        for (a, b) in samples.iter().zip(back.samples()) {
            assert!((a - b).abs() <= 0.5 / 32768.0 + 1e-15);
        }
    }

    #[test]
    fn frame_count_matches_formula() {
        let sig = AudioSignal::new(vec![0.1; 8000], 8000).unwrap();
        let frames = frame_signal(&sig, 50.0, 25.0, WindowKind::Hamming).unwrap();
        assert_eq!(frames.len(), 39);
        assert_eq!(frames.frame_len(), 400);
        assert_eq!(frames.hop_len(), 200);
        assert!(frames.frames().iter().all(|f| f.len() == 400));
    }

    #[test]
    fn hamming_first_coefficient() {
        let w = hamming(400);
        assert!((w[0] - 0.08).abs() < 1e-12);
        assert!((w[399] - 0.08).abs() < 1e-12);
    }

    #[test]
    fn short_signal_rejected() {
        let sig = AudioSignal::new(vec![0.0; 300], 8000).unwrap();
        assert!(matches!(
            frame_signal(&sig, 50.0, 25.0, WindowKind::Rectangular),
            Err(AudioError::SignalTooShort { samples: 300, needed: 400 })
        ));
    }

    #[test]
    fn resample_check_is_identity() {
        for sr in [16000, 44100] {
            let sig = AudioSignal::new(vec![0.25; 10], sr).unwrap();
            assert_eq!(resample_check(sig.clone()).unwrap(), sig);
        }
        let low = AudioSignal {
            samples: vec![0.0; 10],
            sample_rate: 4000,
        };
        assert!(matches!(resample_check(low), Err(AudioError::UnsupportedFormat(_))));
    }

    #[test]
    fn signal_invariants_enforced() {
        assert!(AudioSignal::new(vec![], 8000).is_err());
        assert!(AudioSignal::new(vec![1.5], 8000).is_err());
        assert!(AudioSignal::new(vec![0.0], 7999).is_err());
    }
}
