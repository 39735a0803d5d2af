//! Pauses, syllable nuclei, speaking rates and mean pitch for one recording.
//!
//! Everything is driven by a per-frame intensity contour in dB. Frames
//! quieter than the loudest frame by more than `silence_db_below_peak` are
//! silent; silent runs of at least `min_pause_s` are pauses. Syllables are
//! counted as voiced intensity peaks separated by a dip of at least
//! `min_dip_db`.

use serde::{Deserialize, Serialize};

use crate::audio_io::{frame_signal, AudioError, AudioSignal, WindowKind};
use crate::dsp::{estimate_pitch, PitchParams, LOG_FLOOR};
use crate::shortterm::short_energy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProsodyConfig {
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub silence_db_below_peak: f64,
    pub min_pause_s: f64,
    pub min_dip_db: f64,
    #[serde(skip)]
    pub pitch: PitchParams,
}

impl Default for ProsodyConfig {
    fn default() -> Self {
        Self {
            frame_ms: 50.0,
            hop_ms: 25.0,
            silence_db_below_peak: 25.0,
            min_pause_s: 0.3,
            min_dip_db: 2.0,
            pitch: PitchParams::default(),
        }
    }
}

/// A half-open time interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Span {
    pub start: f64,
    pub end: f64,
}

impl Span {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeechSegmentation {
    pub intensity_db: Vec<f64>,
    pub silent_mask: Vec<bool>,
    pub voiced_mask: Vec<bool>,
    pub f0_hz: Vec<Option<f64>>,
    /// Intensity below which a frame counts as silent.
    pub threshold_db: f64,
    /// `boundaries[i]..boundaries[i + 1]` is the stretch of time frame `i` stands for.
    pub boundaries: Vec<f64>,
    pub pause_spans: Vec<Span>,
    pub speech_spans: Vec<Span>,
    pub original_duration: f64,
}

impl SpeechSegmentation {
    pub fn n_frames(&self) -> usize {
        self.intensity_db.len()
    }

    /// Centre time of frame `i`'s cell.
    pub fn frame_time(&self, i: usize) -> f64 {
        0.5 * (self.boundaries[i] + self.boundaries[i + 1])
    }

    pub fn speaking_duration(&self) -> f64 {
        self.speech_spans.iter().map(Span::duration).sum()
    }
}

pub fn intensity_db(mean_square: f64) -> f64 {
    10.0 * (mean_square + LOG_FLOOR).log10()
}

/// Splits a recording into pause and speech spans.
///
/// A recording with no audible frame at all has neither pauses nor speech.
pub fn segment_speech(
    signal: &AudioSignal,
    config: &ProsodyConfig,
) -> Result<SpeechSegmentation, AudioError> {
    let frames = frame_signal(signal, config.frame_ms, config.hop_ms, WindowKind::Rectangular)?;
    let sr = f64::from(signal.sample_rate());
    let duration = signal.duration();

    let energies: Vec<f64> = frames.frames().iter().map(|f| short_energy(f)).collect();
    let intensity: Vec<f64> = energies.iter().map(|&e| intensity_db(e)).collect();
    let peak = intensity.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let threshold_db = peak - config.silence_db_below_peak;
    let silent_mask: Vec<bool> = energies
        .iter()
        .zip(&intensity)
        .map(|(&e, &db)| e <= 0.0 || db < threshold_db)
        .collect();

    let pitches: Vec<_> = frames
        .frames()
        .iter()
        .map(|f| estimate_pitch(f, signal.sample_rate(), &config.pitch))
        .collect();

    let t = frames.len();
    let hop = frames.hop_len() as f64;
    let half_excess = (frames.frame_len() as f64 - hop) / 2.0;
    let mut boundaries = Vec::with_capacity(t + 1);
    boundaries.push(0.0);
    boundaries.extend((1..t).map(|i| (i as f64 * hop + half_excess) / sr));
    boundaries.push(duration);

    let mut pause_spans = Vec::new();
    let mut speech_spans = Vec::new();
    if silent_mask.iter().any(|s| !s) {
        let mut i = 0;
        while i < t {
            if silent_mask[i] {
                let start = i;
                while i < t && silent_mask[i] {
                    i += 1;
                }
                let span = Span {
                    start: boundaries[start],
                    end: boundaries[i],
                };
                if span.duration() >= config.min_pause_s {
                    pause_spans.push(span);
                }
            } else {
                i += 1;
            }
        }
        let mut cursor = 0.0;
        for p in &pause_spans {
            if p.start > cursor {
                speech_spans.push(Span {
                    start: cursor,
                    end: p.start,
                });
            }
            cursor = p.end;
        }
        if cursor < duration {
            speech_spans.push(Span {
                start: cursor,
                end: duration,
            });
        }
    }

    Ok(SpeechSegmentation {
        intensity_db: intensity,
        silent_mask,
        voiced_mask: pitches.iter().map(|p| p.voiced).collect(),
        f0_hz: pitches.iter().map(|p| p.f0_hz).collect(),
        threshold_db,
        boundaries,
        pause_spans,
        speech_spans,
        original_duration: duration,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyllableNuclei {
    pub frames: Vec<usize>,
    pub times: Vec<f64>,
}

impl SyllableNuclei {
    pub fn count(&self) -> usize {
        self.frames.len()
    }
}

/// Voiced intensity peaks separated from the previous nucleus by a dip of at
/// least `min_dip_db` on both sides of the valley.
pub fn detect_syllable_nuclei(seg: &SpeechSegmentation, min_dip_db: f64) -> SyllableNuclei {
    let db = &seg.intensity_db;
    let t = db.len();
    let mut accepted: Vec<usize> = Vec::new();
    for i in 0..t {
        if seg.silent_mask[i] || !seg.voiced_mask[i] {
            continue;
        }
        let rises = i == 0 || db[i] > db[i - 1];
        let holds = i + 1 == t || db[i] >= db[i + 1];
        if !(rises && holds) {
            continue;
        }
        match accepted.last().copied() {
            None => accepted.push(i),
            Some(prev) => {
                let valley = db[prev..=i].iter().cloned().fold(f64::INFINITY, f64::min);
                if db[prev].min(db[i]) - valley >= min_dip_db {
                    accepted.push(i);
                } else if db[i] > db[prev] {
                    // Same syllable, louder peak: move the nucleus.
                    *accepted.last_mut().unwrap() = i;
                }
            }
        }
    }
    SyllableNuclei {
        times: accepted.iter().map(|&i| seg.frame_time(i)).collect(),
        frames: accepted,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProsodyFeatures {
    pub f0_mean: f64,
    pub n_syllables: usize,
    pub n_pauses: usize,
    pub rate_of_speech: f64,
    pub articulation_rate: f64,
    pub speaking_duration: f64,
    pub original_duration: f64,
    pub balance: f64,
}

pub fn compute_prosody(seg: &SpeechSegmentation, nuclei: &SyllableNuclei) -> ProsodyFeatures {
    let original = seg.original_duration;
    let speaking = seg.speaking_duration().clamp(0.0, original);
    let n = nuclei.count() as f64;
    let voiced_f0: Vec<f64> = seg.f0_hz.iter().flatten().copied().collect();
    let f0_mean = if voiced_f0.is_empty() {
        0.0
    } else {
        voiced_f0.iter().sum::<f64>() / voiced_f0.len() as f64
    };
    ProsodyFeatures {
        f0_mean,
        n_syllables: nuclei.count(),
        n_pauses: seg.pause_spans.len(),
        rate_of_speech: if original > 0.0 { n / original } else { 0.0 },
        articulation_rate: if speaking > 0.0 { n / speaking } else { 0.0 },
        speaking_duration: speaking,
        original_duration: original,
        balance: if original > 0.0 { speaking / original } else { 0.0 },
    }
}

/// Segmentation, nuclei and features in one call.
pub fn analyze_prosody(
    signal: &AudioSignal,
    config: &ProsodyConfig,
) -> Result<(SpeechSegmentation, SyllableNuclei, ProsodyFeatures), AudioError> {
    let seg = segment_speech(signal, config)?;
    let nuclei = detect_syllable_nuclei(&seg, config.min_dip_db);
    let features = compute_prosody(&seg, &nuclei);
    Ok((seg, nuclei, features))
}
