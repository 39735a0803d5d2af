//! Extraction and cross-validation over generated corpora.

use rayon::prelude::*;
use speech_screen::eval::{cross_validate, EvalReport, FoldMetrics, LabeledDataset, ModelSpec, Task};
use speech_screen::features::{extract, ExtractionConfig};
use speech_screen::models::{FeatureMatrix, GbmParams};
use speech_screen::synth::{plan_corpus, synth_clip, CorpusClip, CorpusSpec};

fn corpus(n_clips: usize, separation: f64, seed: u64) -> Vec<CorpusClip> {
    plan_corpus(&CorpusSpec {
        n_clips,
        separation,
        seed,
        ..CorpusSpec::default()
    })
    .unwrap()
}

fn dataset(clips: &[CorpusClip]) -> LabeledDataset {
    let cfg = ExtractionConfig::default();
    let rows: Vec<Vec<f64>> = clips
        .par_iter()
        .map(|c| {
            let signal = synth_clip(&c.clip).unwrap();
            extract(&signal, &cfg).unwrap().vector.into_values()
        })
        .collect();
    LabeledDataset::new(
        clips.iter().map(|c| c.id.clone()).collect(),
        FeatureMatrix::from_rows(&rows).unwrap(),
        clips.iter().map(|c| c.label).collect(),
        clips.iter().map(|c| c.score).collect(),
    )
    .unwrap()
}

fn accuracy(report: &EvalReport) -> f64 {
    match &report.aggregate {
        FoldMetrics::Classification(m) => m.accuracy,
        other => panic!("expected classification metrics, got {other:?}"),
    }
}

fn gbm() -> ModelSpec {
    ModelSpec::Gbm(GbmParams::default())
}

#[test]
fn planted_prosody_is_recovered() {
    let cfg = ExtractionConfig::default();
    for c in corpus(30, 1.0, 5) {
        let signal = synth_clip(&c.clip).unwrap();
        let p = extract(&signal, &cfg).unwrap().prosody;
        assert_eq!(p.n_pauses, c.clip.n_pauses(), "{}", c.id);
        assert!(
            p.n_syllables.abs_diff(c.clip.n_syllables) <= 1,
            "{}: {} extracted vs {} planted",
            c.id,
            p.n_syllables,
            c.clip.n_syllables
        );
        assert!((0.0..=1.0).contains(&p.balance));
    }
}

#[test]
fn accuracy_does_not_fall_with_separation() {
    let seeds = 1u64..=5;
    let mut previous = 0.0;
    for sep in [0.0, 0.5, 1.0] {
        let mean = seeds
            .clone()
            .map(|seed| {
                let data = dataset(&corpus(60, sep, seed));
                accuracy(&cross_validate(&data, Task::Classify, &gbm(), 5, seed).unwrap())
            })
            .sum::<f64>()
            / 5.0;
        assert!(mean >= previous, "separation {sep}: mean accuracy {mean} < {previous}");
        previous = mean;
    }
}

#[test]
fn null_corpus_is_near_chance() {
    let data = dataset(&corpus(60, 0.0, 7));
    let acc = accuracy(&cross_validate(&data, Task::Classify, &gbm(), 5, 7).unwrap());
    assert!((acc - 0.5).abs() <= 0.15, "accuracy {acc}");
}

#[test]
fn planted_scores_are_learnable() {
    let data = dataset(&corpus(60, 1.0, 7));
    let report = cross_validate(&data, Task::Regress, &gbm(), 5, 7).unwrap();
    match report.aggregate {
        FoldMetrics::Regression(m) => assert!(m.r2 >= 0.6, "r2 {}", m.r2),
        other => panic!("expected regression metrics, got {other:?}"),
    }
}
