//! Deterministic synthetic speech clips and labeled corpora.
//!
//! A clip is a train of harmonic vowel-like bursts (fundamental plus three
//! harmonics at 1, 0.5, 0.25, 0.125) under a raised-cosine envelope. Bursts
//! are separated by short gaps; planted pause spans are digital silence. The
//! pitch follows a slow sinusoidal contour around `f0_base`.
//!
//! A corpus draws one clip per recording. Positive recordings shift three
//! prosodic dimensions in proportion to `separation`: a flatter pitch
//! contour, longer (slower) syllables, and longer pauses.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio_io::{write_wav, AudioError, AudioSignal};
use crate::dsp::{PITCH_CEILING_HZ, PITCH_FLOOR_HZ};
use crate::table::{Manifest, ManifestRow, TableError};

pub const HARMONIC_AMPLITUDES: [f64; 4] = [1.0, 0.5, 0.25, 0.125];
pub const DEFAULT_GAP_S: f64 = 0.06;
pub const DEFAULT_LEAD_S: f64 = 0.1;
pub const DEFAULT_TAIL_S: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Audio(#[from] AudioError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidSpec(msg.into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipSpec {
    pub n_syllables: usize,
    /// `(start_s, dur_s)` pairs.
    pub pause_spans: Vec<(f64, f64)>,
    pub f0_base: f64,
    pub f0_variation: f64,
    pub syllable_dur_s: f64,
    pub amplitude: f64,
    pub sample_rate: u32,
    pub seed: u64,
    pub gap_s: f64,
    pub lead_s: f64,
    pub tail_s: f64,
    /// Frequency of the sinusoidal pitch contour.
    pub contour_hz: f64,
}

impl ClipSpec {
    pub fn new(n_syllables: usize, f0_base: f64, sample_rate: u32, seed: u64) -> Self {
        ClipSpec {
            n_syllables,
            pause_spans: Vec::new(),
            f0_base,
            f0_variation: 0.0,
            syllable_dur_s: 0.2,
            amplitude: 0.5,
            sample_rate,
            seed,
            gap_s: DEFAULT_GAP_S,
            lead_s: DEFAULT_LEAD_S,
            tail_s: DEFAULT_TAIL_S,
            contour_hz: 0.5,
        }
    }

    /// Places a pause of the given length directly after each listed
    /// syllable (0-based), replacing the ordinary gap.
    pub fn with_pauses_after(mut self, pauses: &[(usize, f64)]) -> Self {
        let mut sorted = pauses.to_vec();
        sorted.sort_by_key(|p| p.0);
        let mut spans = Vec::with_capacity(sorted.len());
        let mut cursor = self.lead_s;
        let mut next = sorted.iter().peekable();
        for i in 0..self.n_syllables {
            let end = cursor + self.syllable_dur_s;
            cursor = end + self.gap_s;
            while let Some(&&(k, dur)) = next.peek() {
                if k > i {
                    break;
                }
                if k == i {
                    spans.push((end, dur));
                    cursor = end + dur.max(self.gap_s);
                }
                next.next();
            }
        }
        self.pause_spans = spans;
        self
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.sample_rate < 8000 {
            return Err(invalid(format!("sample rate {} below 8000 Hz", self.sample_rate)));
        }
        if !(0.0..=1.0).contains(&self.amplitude) {
            return Err(invalid(format!("amplitude {} outside [0, 1]", self.amplitude)));
        }
        if !(self.f0_variation >= 0.0)
            || self.f0_base - self.f0_variation < PITCH_FLOOR_HZ
            || self.f0_base + self.f0_variation > PITCH_CEILING_HZ
        {
            return Err(invalid(format!(
                "pitch range {} +/- {} leaves [{PITCH_FLOOR_HZ}, {PITCH_CEILING_HZ}] Hz",
                self.f0_base, self.f0_variation
            )));
        }
        if self.n_syllables > 0 && !(self.syllable_dur_s > 0.0) {
            return Err(invalid("syllable duration must be positive"));
        }
        for v in [self.gap_s, self.lead_s, self.tail_s, self.contour_hz] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid("gap, lead, tail and contour rate must be finite and non-negative"));
            }
        }
        let mut spans = self.pause_spans.clone();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        for &(start, dur) in &spans {
            if !(start >= 0.0 && dur > 0.0 && (start + dur).is_finite()) {
                return Err(invalid(format!("pause ({start}, {dur}) is not a positive span")));
            }
        }
        for w in spans.windows(2) {
            if w[0].0 + w[0].1 > w[1].0 {
                return Err(invalid("pause spans overlap"));
            }
        }
        Ok(())
    }

    /// Syllable onsets in seconds and the total clip duration.
    ///
    /// Syllables are laid out from `lead_s`; a syllable that would overlap a
    /// pause span is moved to the end of that pause.
    pub fn layout(&self) -> (Vec<f64>, f64) {
        let mut spans = self.pause_spans.clone();
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut onsets = Vec::with_capacity(self.n_syllables);
        let mut cursor = self.lead_s;
        for _ in 0..self.n_syllables {
            loop {
                let end = cursor + self.syllable_dur_s;
                match spans.iter().find(|(s, d)| *s < end && cursor < s + d) {
                    Some((s, d)) => cursor = s + d,
                    None => break,
                }
            }
            onsets.push(cursor);
            cursor += self.syllable_dur_s + self.gap_s;
        }
        let content_end = onsets
            .last()
            .map_or(self.lead_s, |o| o + self.syllable_dur_s);
        let pause_end = spans.iter().map(|(s, d)| s + d).fold(0.0, f64::max);
        (onsets, (content_end + self.tail_s).max(pause_end))
    }

    pub fn duration(&self) -> f64 {
        self.layout().1
    }

    pub fn n_pauses(&self) -> usize {
        self.pause_spans.len()
    }
}

/// Renders a clip. The output has exactly `round(duration * sample_rate)`
/// samples.
pub fn synth_clip(spec: &ClipSpec) -> Result<AudioSignal, SynthError> {
    spec.validate()?;
    let sr = f64::from(spec.sample_rate);
    let (onsets, duration) = spec.layout();
    let n = (duration * sr).round() as usize;
    let mut out = vec![0.0; n.max(1)];

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let contour_phase: f64 = rng.random_range(0.0..2.0 * PI);
    let norm: f64 = HARMONIC_AMPLITUDES.iter().sum();
    let f0_at = |t: f64| {
        spec.f0_base + spec.f0_variation * (2.0 * PI * spec.contour_hz * t + contour_phase).sin()
    };

    for onset in onsets {
        let gain: f64 = rng.random_range(0.8..=1.0);
        let start = (onset * sr).round() as usize;
        let len = (spec.syllable_dur_s * sr).round() as usize;
        let mut phase = 0.0;
        for i in 0..len {
            let idx = start + i;
            if idx >= out.len() {
                break;
            }
            let env = 0.5 - 0.5 * (2.0 * PI * i as f64 / len as f64).cos();
            let s: f64 = HARMONIC_AMPLITUDES
                .iter()
                .enumerate()
                .map(|(h, a)| a * ((h + 1) as f64 * phase).sin())
                .sum();
            out[idx] = spec.amplitude * gain * env * s / norm;
            phase += 2.0 * PI * f0_at(idx as f64 / sr) / sr;
        }
    }
    Ok(AudioSignal::new(out, spec.sample_rate)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSpec {
    pub n_clips: usize,
    pub class_balance: f64,
    pub separation: f64,
    pub seed: u64,
    pub sample_rate: u32,
    /// Each clip gets between 1 and `max_pauses` planted pauses; 0 disables
    /// pauses entirely.
    pub max_pauses: usize,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            n_clips: 60,
            class_balance: 0.5,
            separation: 1.0,
            seed: 7,
            sample_rate: 16000,
            max_pauses: 3,
        }
    }
}

impl CorpusSpec {
    pub fn n_positive(&self) -> usize {
        (self.n_clips as f64 * self.class_balance).round() as usize
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if !(self.class_balance > 0.0 && self.class_balance < 1.0) {
            return Err(invalid(format!("class balance {} outside (0, 1)", self.class_balance)));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(invalid(format!("separation {} must be finite and >= 0", self.separation)));
        }
        let pos = self.n_positive();
        if pos == 0 || pos == self.n_clips {
            return Err(invalid(format!(
                "{} clips at balance {} leaves a class empty",
                self.n_clips, self.class_balance
            )));
        }
        if self.sample_rate < 8000 {
            return Err(invalid(format!("sample rate {} below 8000 Hz", self.sample_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusClip {
    pub id: String,
    pub label: u8,
    pub score: f64,
    pub clip: ClipSpec,
}

fn clip_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Draws every clip's parameters. Pure; no files are touched.
pub fn plan_corpus(spec: &CorpusSpec) -> Result<Vec<CorpusClip>, SynthError> {
    spec.validate()?;
    let n_pos = spec.n_positive();
    let mut labels: Vec<u8> = (0..spec.n_clips).map(|i| u8::from(i < n_pos)).collect();
    labels.shuffle(&mut clip_rng(spec.seed, 0));

    let width = spec.n_clips.saturating_sub(1).to_string().len().max(3);
    let clips = labels
        .iter()
        .enumerate()
        .map(|(i, &label)| {
            let mut rng = clip_rng(spec.seed, i as u64 + 1);
            let score: f64 = if label == 1 {
                rng.random_range(0.5..=1.0)
            } else {
                rng.random_range(0.0..0.5)
            };
            let shift = spec.separation * (f64::from(label) + score) / 2.0;

            let f0_base = rng.random_range(130.0..200.0);
            let f0_variation =
                (40.0 * (1.0 - 0.75 * shift).max(0.0) + rng.random_range(-4.0..4.0)).max(0.0);
            let syllable_dur_s = 0.15 + 0.10 * shift + rng.random_range(-0.01..0.01);
            let n_syllables = rng.random_range(10..=16usize);
            let n_pauses = rng.random_range(spec.max_pauses.min(1)..=spec.max_pauses.min(n_syllables - 1));
            let mut after = sample(&mut rng, n_syllables - 1, n_pauses).into_vec();
            after.sort_unstable();
            let pauses: Vec<(usize, f64)> = after
                .into_iter()
                .map(|k| (k, 0.4 + 0.4 * shift + rng.random_range(0.0..0.05)))
                .collect();
            let amplitude = rng.random_range(0.3..0.7);
            let clip_seed: u64 = rng.random();

            let mut clip = ClipSpec::new(n_syllables, f0_base, spec.sample_rate, clip_seed);
            clip.f0_variation = f0_variation.min(f0_base - PITCH_FLOOR_HZ);
            clip.syllable_dur_s = syllable_dur_s;
            clip.amplitude = amplitude;
            let clip = clip.with_pauses_after(&pauses);
            CorpusClip {
                id: format!("clip_{i:0width$}"),
                label,
                score,
                clip,
            }
        })
        .collect();
    Ok(clips)
}

/// Paths written by [`synth_corpus`].
#[derive(Debug, Clone)]
pub struct CorpusFiles {
    pub manifest: PathBuf,
    pub truth: PathBuf,
    pub clips: Vec<CorpusClip>,
}

/// Writes one WAV per clip plus `manifest.csv` and `truth.csv` into `dir`.
pub fn synth_corpus(spec: &CorpusSpec, dir: &Path) -> Result<CorpusFiles, SynthError> {
    let clips = plan_corpus(spec)?;
    std::fs::create_dir_all(dir)?;
    clips.par_iter().try_for_each(|c| -> Result<(), SynthError> {
        let signal = synth_clip(&c.clip)?;
        write_wav(dir.join(format!("{}.wav", c.id)), &signal)?;
        Ok(())
    })?;

    let manifest = Manifest {
        rows: clips
            .iter()
            .map(|c| ManifestRow {
                id: c.id.clone(),
                path: PathBuf::from(format!("{}.wav", c.id)),
                label: c.label,
                score: c.score,
            })
            .collect(),
    };
    let manifest_path = dir.join("manifest.csv");
    manifest.write(&manifest_path)?;

    let truth_path = dir.join("truth.csv");
    let mut w = csv::Writer::from_path(&truth_path)?;
    w.write_record([
        "id",
        "n_syllables",
        "n_pauses",
        "f0_base",
        "f0_variation",
        "syllable_dur_s",
        "duration_s",
    ])?;
    for c in &clips {
        w.write_record([
            c.id.clone(),
            c.clip.n_syllables.to_string(),
            c.clip.n_pauses().to_string(),
            c.clip.f0_base.to_string(),
            c.clip.f0_variation.to_string(),
            c.clip.syllable_dur_s.to_string(),
            c.clip.duration().to_string(),
        ])?;
    }
    w.flush()?;

    Ok(CorpusFiles {
        manifest: manifest_path,
        truth: truth_path,
        clips,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prosody::{analyze_prosody, ProsodyConfig};

    fn six_syllables() -> ClipSpec {
        let mut spec = ClipSpec::new(6, 120.0, 16000, 3);
        spec.f0_variation = 20.0;
        spec.with_pauses_after(&[(1, 0.4), (3, 0.4)])
    }

    #[test]
    fn planted_structure_is_recovered() {
        let spec = six_syllables();
        let signal = synth_clip(&spec).unwrap();
        let (_, _, f) = analyze_prosody(&signal, &ProsodyConfig::default()).unwrap();
        assert_eq!(f.n_pauses, 2);
        assert!(f.n_syllables.abs_diff(6) <= 1, "{} syllables", f.n_syllables);
    }

    #[test]
    fn sample_count_matches_duration() {
        let spec = six_syllables();
        let signal = synth_clip(&spec).unwrap();
        assert_eq!(signal.len(), (spec.duration() * 16000.0).round() as usize);
        let expected = 0.1 + 6.0 * 0.2 + 3.0 * 0.06 + 2.0 * 0.4 + 0.1;
        assert!((spec.duration() - expected).abs() < 1e-12);
    }

    #[test]
    fn pauses_are_digital_silence() {
        let spec = six_syllables();
        let signal = synth_clip(&spec).unwrap();
        for &(start, dur) in &spec.pause_spans {
            let a = (start * 16000.0).round() as usize + 1;
            let b = ((start + dur) * 16000.0).round() as usize - 1;
            assert!(signal.samples()[a..b].iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn zero_syllables_is_silence() {
        let spec = ClipSpec::new(0, 150.0, 16000, 1);
        let signal = synth_clip(&spec).unwrap();
        assert!(signal.samples().iter().all(|&x| x == 0.0));
        let (_, _, f) = analyze_prosody(&signal, &ProsodyConfig::default()).unwrap();
        assert_eq!((f.n_syllables, f.n_pauses), (0, 0));
        assert_eq!(f.speaking_duration, 0.0);
    }

    #[test]
    fn rendering_is_deterministic() {
        let a = synth_clip(&six_syllables()).unwrap();
        let b = synth_clip(&six_syllables()).unwrap();
        assert_eq!(a.samples(), b.samples());
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut spec = ClipSpec::new(3, 90.0, 16000, 0);
        spec.f0_variation = 20.0;
        assert!(matches!(synth_clip(&spec), Err(SynthError::InvalidSpec(_))));
        let mut spec = ClipSpec::new(3, 150.0, 16000, 0);
        spec.pause_spans = vec![(0.5, 0.4), (0.7, 0.4)];
        assert!(spec.validate().is_err());
        spec.pause_spans = vec![(0.5, -1.0)];
        assert!(spec.validate().is_err());
        let mut spec = ClipSpec::new(3, 150.0, 16000, 0);
        spec.amplitude = 1.5;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn corpus_balance_is_exact() {
        let clips = plan_corpus(&CorpusSpec::default()).unwrap();
        assert_eq!(clips.len(), 60);
        assert_eq!(clips.iter().filter(|c| c.label == 1).count(), 30);
        for c in &clips {
            if c.label == 1 {
                assert!((0.5..=1.0).contains(&c.score));
            } else {
                assert!((0.0..0.5).contains(&c.score));
            }
            c.clip.validate().unwrap();
        }
    }

    #[test]
    fn zero_separation_ignores_labels() {
        let spec = CorpusSpec {
            separation: 0.0,
            ..CorpusSpec::default()
        };
        for c in plan_corpus(&spec).unwrap() {
            assert!((c.clip.f0_variation - 40.0).abs() <= 4.0);
            assert!((c.clip.syllable_dur_s - 0.15).abs() <= 0.01);
            assert!(c.clip.pause_spans.iter().all(|p| (0.4..0.45).contains(&p.1)));
        }
    }

    #[test]
    fn pauses_can_be_disabled() {
        let spec = CorpusSpec { max_pauses: 0, n_clips: 12, ..CorpusSpec::default() };
        assert!(plan_corpus(&spec).unwrap().iter().all(|c| c.clip.pause_spans.is_empty()));
    }

    #[test]
    fn bad_corpus_specs() {
        for spec in [
            CorpusSpec { class_balance: 0.0, ..CorpusSpec::default() },
            CorpusSpec { class_balance: 1.0, ..CorpusSpec::default() },
            CorpusSpec { separation: -1.0, ..CorpusSpec::default() },
            CorpusSpec { n_clips: 1, ..CorpusSpec::default() },
        ] {
            assert!(matches!(plan_corpus(&spec), Err(SynthError::InvalidSpec(_))));
        }
    }
}
