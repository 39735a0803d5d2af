//! The canonical per-recording feature vector.

use serde::{Deserialize, Serialize};

use crate::audio_io::{frame_signal, AudioError, AudioSignal, WindowKind};
use crate::prosody::{analyze_prosody, ProsodyConfig, ProsodyFeatures};
use crate::shortterm::{aggregate_frames, FrameAnalyzer, ShortTermSummary};

/// Bumped whenever [`FEATURE_NAMES`] changes order or content.
pub const SCHEMA_VERSION: u32 = 1;
pub const N_FEATURES: usize = 41;

pub const FEATURE_NAMES: [&str; N_FEATURES] = [
    "f0_mean",
    "mfcc_1",
    "mfcc_2",
    "mfcc_3",
    "mfcc_4",
    "mfcc_5",
    "mfcc_6",
    "mfcc_7",
    "mfcc_8",
    "mfcc_9",
    "mfcc_10",
    "mfcc_11",
    "mfcc_12",
    "mfcc_13",
    "energy",
    "energy_entropy",
    "zcr",
    "rate_of_speech",
    "n_syllables",
    "n_pauses",
    "balance",
    "spectral_centroid",
    "spectral_spread",
    "spectral_rolloff",
    "spectral_flux",
    "spectral_entropy",
    "chroma_1",
    "chroma_2",
    "chroma_3",
    "chroma_4",
    "chroma_5",
    "chroma_6",
    "chroma_7",
    "chroma_8",
    "chroma_9",
    "chroma_10",
    "chroma_11",
    "chroma_12",
    "speaking_duration",
    "original_duration",
    "articulation_rate",
];

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

pub fn feature_schema() -> Vec<String> {
    FEATURE_NAMES.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExtractionConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub window: WindowKind,
    pub prosody: ProsodyConfig,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            frame_ms: 50.0,
            hop_ms: 25.0,
            window: WindowKind::Hamming,
            prosody: ProsodyConfig::default(),
        }
    }
}

impl ExtractionConfig {
    /// Uses the same framing for prosody as for the short-term features.
    pub fn with_framing(mut self, frame_ms: f64, hop_ms: f64) -> Self {
        self.frame_ms = frame_ms;
        self.hop_ms = hop_ms;
        self.prosody.frame_ms = frame_ms;
        self.prosody.hop_ms = hop_ms;
        self
    }
}

/// One value per name in [`FEATURE_NAMES`], in that order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn from_values(values: Vec<f64>) -> Option<Self> {
        (values.len() == N_FEATURES).then_some(Self(values))
    }

    pub fn assemble(short: &ShortTermSummary, prosody: &ProsodyFeatures) -> Self {
        let mut v = Vec::with_capacity(N_FEATURES);
        v.push(prosody.f0_mean);
        v.extend_from_slice(&short.mfcc);
        v.extend([short.energy, short.energy_entropy, short.zcr]);
        v.extend([
            prosody.rate_of_speech,
            prosody.n_syllables as f64,
            prosody.n_pauses as f64,
            prosody.balance,
        ]);
        v.extend([
            short.centroid,
            short.spread,
            short.rolloff,
            short.flux,
            short.spectral_entropy,
        ]);
        v.extend_from_slice(&short.chroma);
        v.extend([
            prosody.speaking_duration,
            prosody.original_duration,
            prosody.articulation_rate,
        ]);
        debug_assert_eq!(v.len(), N_FEATURES);
        Self(v)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.0[i])
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

/// Everything computed for one recording.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub vector: FeatureVector,
    pub short_term: ShortTermSummary,
    pub prosody: ProsodyFeatures,
}

pub fn extract(signal: &AudioSignal, config: &ExtractionConfig) -> Result<Extraction, AudioError> {
    let frames = frame_signal(signal, config.frame_ms, config.hop_ms, WindowKind::Rectangular)?;
    let analyzer = FrameAnalyzer::new(
        frames.frame_len(),
        signal.sample_rate(),
        config.window.coefficients(frames.frame_len()),
    );
    let per_frame = analyzer.analyze(frames.frames());
    let short_term = aggregate_frames(&per_frame).expect("framing yields at least one frame");
    let (_, _, prosody) = analyze_prosody(signal, &config.prosody)?;
    Ok(Extraction {
        vector: FeatureVector::assemble(&short_term, &prosody),
        short_term,
        prosody,
    })
}

pub fn extract_features(
    signal: &AudioSignal,
    config: &ExtractionConfig,
) -> Result<FeatureVector, AudioError> {
    extract(signal, config).map(|e| e.vector)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::f64::consts::PI;

    #[test]
    fn schema_is_41_unique_names() {
        let set: HashSet<_> = FEATURE_NAMES.iter().collect();
        assert_eq!(set.len(), N_FEATURES);
        assert_eq!(FEATURE_NAMES[0], "f0_mean");
        assert_eq!(FEATURE_NAMES[40], "articulation_rate");
        assert_eq!(feature_index("chroma_1"), Some(26));
    }

    #[test]
    fn slots_line_up_with_sources() {
        let x: Vec<f64> = (0..16000)
            .map(|i| 0.3 * (2.0 * PI * 220.0 * i as f64 / 16000.0).sin())
            .collect();
        let sig = AudioSignal::new(x, 16000).unwrap();
        let e = extract(&sig, &ExtractionConfig::default()).unwrap();
        let v = &e.vector;
        assert_eq!(v.values().len(), N_FEATURES);
        assert_eq!(v.get("zcr"), Some(e.short_term.zcr));
        assert_eq!(v.get("mfcc_1"), Some(e.short_term.mfcc[0]));
        assert_eq!(v.get("mfcc_13"), Some(e.short_term.mfcc[12]));
        assert_eq!(v.get("chroma_12"), Some(e.short_term.chroma[11]));
        assert_eq!(v.get("spectral_flux"), Some(e.short_term.flux));
        assert_eq!(v.get("balance"), Some(e.prosody.balance));
        assert_eq!(v.get("original_duration"), Some(1.0));
        assert!((v.get("f0_mean").unwrap() - 220.0).abs() < 3.0);
        assert!(v.values().iter().all(|x| x.is_finite()));
    }

    #[test]
    fn too_short_signal_errors() {
        let sig = AudioSignal::new(vec![0.0; 100], 16000).unwrap();
        assert!(matches!(
            extract_features(&sig, &ExtractionConfig::default()),
            Err(AudioError::SignalTooShort { .. })
        ));
    }
}
