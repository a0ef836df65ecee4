//! Deterministic synthetic attack scenario: an enrolled victim whose
//! centroid comes from the attacker's own voice pushed through a known
//! on-grid tube. Searching for that tube then has a verifiable answer,
//! which makes the scenario the recovery benchmark for the whole
//! pipeline.

use std::collections::BTreeMap;

use crate::acoustics::{resonance_profile_single, tube_from_resonance, Environment};
use crate::asi::{enroll, MfccConfig, SpeakerModel};
use crate::filterbank::BandPassFilterBank;
use crate::signal::AudioBuffer;
use crate::synth;

#[derive(Debug, Clone, Copy)]
pub struct PlantedConfig {
    pub sample_rate: u32,
    pub n_utts: usize,
    pub utt_seconds: f64,
    pub planted_f0_hz: f64,
    pub planted_q0: f64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            n_utts: 3,
            utt_seconds: 0.8,
            planted_f0_hz: 400.0,
            planted_q0: 70.0,
        }
    }
}

pub struct PlantedFixture {
    /// Unfiltered attacker recordings.
    pub attacker_utts: Vec<AudioBuffer>,
    /// The attacker's voice through the planted tube: the victim's
    /// enrollment audio, and the reference "clean" set for gap studies.
    pub victim_enrollment_utts: Vec<AudioBuffer>,
    pub model: SpeakerModel,
    pub victim_label: String,
    /// Enrolled from the attacker's voice through other tubes, so the
    /// victim only wins near the planted parameters.
    pub decoy_labels: Vec<String>,
    /// Enrolled from an unrelated voice no tube filter can imitate.
    pub orthogonal_label: String,
    pub planted_f0_hz: f64,
    pub planted_q0: f64,
    pub env: Environment,
    pub sample_rate: u32,
}

pub fn planted() -> PlantedFixture {
    planted_with(&PlantedConfig::default())
}

pub fn planted_with(cfg: &PlantedConfig) -> PlantedFixture {
    assert!(cfg.n_utts >= 3, "enrollment needs 3 utterances per speaker");
    let sr = cfg.sample_rate;
    let env = Environment::default();
    let attacker_utts: Vec<AudioBuffer> = (0..cfg.n_utts)
        .map(|i| synth::voice(130.0 + i as f64, 6.0, 12, cfg.utt_seconds, sr))
        .collect();

    let through_tube = |f0: f64, q0: f64| -> Vec<AudioBuffer> {
        let design = tube_from_resonance(f0, q0, &env).expect("fixture tube is realizable");
        let profile = resonance_profile_single(&design.tube, &env, sr as f64 / 2.0)
            .expect("fixture tube resonates below Nyquist");
        let bank =
            BandPassFilterBank::from_profile(&profile, sr).expect("fixture bank is non-empty");
        attacker_utts
            .iter()
            .map(|u| bank.apply(u).expect("fixture filtering"))
            .collect()
    };

    let victim_enrollment_utts = through_tube(cfg.planted_f0_hz, cfg.planted_q0);
    let mut corpus = BTreeMap::new();
    corpus.insert("victim".to_string(), victim_enrollment_utts.clone());
    corpus.insert("decoy_low".to_string(), through_tube(250.0, 60.0));
    corpus.insert("decoy_high".to_string(), through_tube(600.0, 50.0));
    corpus.insert(
        "orthogonal".to_string(),
        (0..cfg.n_utts)
            .map(|i| synth::voice(470.0 + 2.0 * i as f64, 14.0, 8, cfg.utt_seconds, sr))
            .collect(),
    );
    let enrollment = enroll(&corpus, &MfccConfig::new(sr).expect("classifier rate"))
        .expect("fixture enrollment");

    PlantedFixture {
        attacker_utts,
        victim_enrollment_utts,
        model: enrollment.model,
        victim_label: "victim".to_string(),
        decoy_labels: vec!["decoy_high".to_string(), "decoy_low".to_string()],
        orthogonal_label: "orthogonal".to_string(),
        planted_f0_hz: cfg.planted_f0_hz,
        planted_q0: cfg.planted_q0,
        env,
        sample_rate: sr,
    }
}
