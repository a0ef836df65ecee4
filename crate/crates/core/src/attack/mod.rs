//! Black-box impersonation search: evolve tube parameters until a
//! speaker-ID oracle assigns the filtered attacker voice to a chosen
//! target, plus the statistics used to judge such attacks.

pub mod de;

pub use de::{differential_evolution, DeConfig, DeOutcome, GridDim};

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::acoustics::{
    resonance_profile_single, resonances_two_tube, tube_from_resonance, Environment,
    ResonanceProfile, TubeSpec, TwoTubeSpec,
};
use crate::asi::{embed, Embedding, Oracle, SpeakerModel};
use crate::error::{Error, Result};
use crate::filterbank::BandPassFilterBank;
use crate::signal::AudioBuffer;

/// Gridded parameter box the search walks. Single-tube mode searches
/// resonance targets (f0, Q0) realized through tube_from_resonance;
/// two-tube mode searches lengths and an area ratio with the first
/// diameter held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", deny_unknown_fields)]
pub enum SearchSpace {
    #[serde(rename = "single-tube")]
    SingleTube { f0_hz: GridDim, q0: GridDim },
    #[serde(rename = "two-tube")]
    TwoTube {
        l1_m: GridDim,
        l2_m: GridDim,
        area_ratio: GridDim,
        d1_m: f64,
    },
}

impl SearchSpace {
    pub fn single_tube() -> Self {
        Self::SingleTube {
            f0_hz: GridDim::new(50.0, 1000.0, 10.0).expect("static grid"),
            q0: GridDim::new(5.0, 100.0, 5.0).expect("static grid"),
        }
    }

    pub fn two_tube() -> Self {
        Self::TwoTube {
            l1_m: GridDim::new(0.05, 1.20, 0.05).expect("static grid"),
            l2_m: GridDim::new(0.05, 1.20, 0.05).expect("static grid"),
            area_ratio: GridDim::new(1.0, 10.0, 1.0).expect("static grid"),
            d1_m: 0.021,
        }
    }

    pub fn dims(&self) -> Vec<GridDim> {
        match *self {
            Self::SingleTube { f0_hz, q0 } => vec![f0_hz, q0],
            Self::TwoTube {
                l1_m,
                l2_m,
                area_ratio,
                ..
            } => vec![l1_m, l2_m, area_ratio],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::TwoTube { d1_m, .. } = *self {
            if !(0.005..=0.15).contains(&d1_m) {
                return Err(Error::InvalidArgument(format!(
                    "fixed first diameter {d1_m} m outside [0.005, 0.15]"
                )));
            }
        }
        Ok(())
    }

    /// Turn one grid point into hardware and its resonance profile.
    /// Errors name parameter combinations with no physical realization.
    pub fn realize(
        &self,
        params: &[f64],
        env: &Environment,
        nyquist_hz: f64,
    ) -> Result<(RealizedTube, ResonanceProfile)> {
        let dims = self.dims();
        if params.len() != dims.len() {
            return Err(Error::InvalidArgument(format!(
                "{} parameters for a {}-dimensional space",
                params.len(),
                dims.len()
            )));
        }
        match *self {
            Self::SingleTube { .. } => {
                let design = tube_from_resonance(params[0], params[1], env)?;
                let profile = resonance_profile_single(&design.tube, env, nyquist_hz)?;
                Ok((RealizedTube::Single { tube: design.tube }, profile))
            }
            Self::TwoTube { d1_m, .. } => {
                let d2 = d1_m * params[2].sqrt();
                let spec = TwoTubeSpec::new(
                    TubeSpec::new(params[0], d1_m)?,
                    TubeSpec::new(params[1], d2)?,
                )?;
                let profile = resonances_two_tube(&spec, env, nyquist_hz)?;
                Ok((RealizedTube::Two { tubes: spec }, profile))
            }
        }
    }
}

/// Physical realization of a search point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum RealizedTube {
    #[serde(rename = "single")]
    Single { tube: TubeSpec },
    #[serde(rename = "two")]
    Two { tubes: TwoTubeSpec },
}

impl RealizedTube {
    /// Leading tube's length, for flat summaries.
    pub fn length_m(&self) -> f64 {
        match self {
            Self::Single { tube } => tube.length_m,
            Self::Two { tubes } => tubes.first.length_m,
        }
    }

    pub fn diameter_m(&self) -> f64 {
        match self {
            Self::Single { tube } => tube.diameter_m,
            Self::Two { tubes } => tubes.first.diameter_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackResult {
    pub target_label: String,
    /// Snapped winning grid point.
    pub best_params: Vec<f64>,
    /// None when the winning point has no physical realization.
    pub realized: Option<RealizedTube>,
    pub profile_f0_hz: Option<f64>,
    pub profile_q0: Option<f64>,
    /// Mean target score of the winning point; in [0, 1].
    pub best_score: f64,
    /// True when the oracle labels the majority of filtered utterances
    /// as the target.
    pub success: bool,
    /// Fitness evaluations spent by the search.
    pub invocations: usize,
    pub generations_run: usize,
    pub converged: bool,
    /// Best score after initialization and after each generation.
    pub score_trace: Vec<f64>,
}

fn is_unrealizable(e: &Error) -> bool {
    matches!(
        e,
        Error::TubeOutOfRange(_)
            | Error::EmptyProfile(_)
            | Error::DegenerateTwoTube(_)
            | Error::InvalidArgument(_)
    )
}

fn max_nyquist(utts: &[AudioBuffer]) -> f64 {
    utts.iter()
        .map(|u| u.sample_rate)
        .max()
        .unwrap_or(0) as f64
        / 2.0
}

/// Mean target score over the attacker's utterances after filtering each
/// through the tube at `params`. Unrealizable parameter combinations
/// score 0; oracle failures propagate.
pub fn attack_fitness(
    params: &[f64],
    attacker_utts: &[AudioBuffer],
    target: &str,
    oracle: &dyn Oracle,
    space: &SearchSpace,
    env: &Environment,
) -> Result<f64> {
    let profile = match space.realize(params, env, max_nyquist(attacker_utts)) {
        Ok((_, profile)) => profile,
        Err(e) if is_unrealizable(&e) => return Ok(0.0),
        Err(e) => return Err(e),
    };
    let mut total = 0.0;
    for utt in attacker_utts {
        let bank = match BandPassFilterBank::from_profile(&profile, utt.sample_rate) {
            Ok(bank) => bank,
            Err(Error::EmptyProfile(_)) => continue,
            Err(e) => return Err(e),
        };
        let filtered = bank.apply(utt)?;
        let (_, scores) = oracle.identify(&filtered)?;
        total += scores.get(target).unwrap_or(0.0);
    }
    Ok(total / attacker_utts.len() as f64)
}

fn check_attack_inputs(
    attacker_utts: &[AudioBuffer],
    target: &str,
    oracle: &dyn Oracle,
    space: &SearchSpace,
) -> Result<()> {
    if attacker_utts.is_empty() {
        return Err(Error::InvalidArgument("no attacker utterances".into()));
    }
    for utt in attacker_utts {
        utt.check_non_empty()?;
    }
    if !oracle.labels().iter().any(|l| l == target) {
        return Err(Error::UnknownLabel(target.to_string()));
    }
    space.validate()
}

/// Search the space for parameters that make the oracle call the
/// attacker's filtered voice `target`.
pub fn attack_target(
    attacker_utts: &[AudioBuffer],
    target: &str,
    oracle: &dyn Oracle,
    space: &SearchSpace,
    cfg: &DeConfig,
    env: &Environment,
) -> Result<AttackResult> {
    check_attack_inputs(attacker_utts, target, oracle, space)?;

    // Fitness runs inside the optimizer, which wants plain reals; the
    // first oracle failure is parked here and re-raised afterwards.
    let deferred: Mutex<Option<Error>> = Mutex::new(None);
    let outcome = differential_evolution(
        |params| match attack_fitness(params, attacker_utts, target, oracle, space, env) {
            Ok(score) => score,
            Err(e) => {
                deferred.lock().expect("error slot").get_or_insert(e);
                0.0
            }
        },
        &space.dims(),
        cfg,
    )?;
    if let Some(e) = deferred.into_inner().expect("error slot").take() {
        return Err(e);
    }

    let realization = space.realize(&outcome.best, env, max_nyquist(attacker_utts)).ok();
    let (realized, profile) = match realization {
        Some((realized, profile)) => (Some(realized), Some(profile)),
        None => (None, None),
    };

    let mut target_votes = 0;
    if let Some(profile) = &profile {
        for utt in attacker_utts {
            let Ok(bank) = BandPassFilterBank::from_profile(profile, utt.sample_rate) else {
                continue;
            };
            let filtered = bank.apply(utt)?;
            let (label, _) = oracle.identify(&filtered)?;
            if label == target {
                target_votes += 1;
            }
        }
    }

    Ok(AttackResult {
        target_label: target.to_string(),
        best_params: outcome.best,
        realized,
        profile_f0_hz: profile.as_ref().map(|p| p.harmonics[0].frequency_hz),
        profile_q0: profile.as_ref().map(|p| p.harmonics[0].q),
        best_score: outcome.best_fitness,
        success: 2 * target_votes > attacker_utts.len(),
        invocations: outcome.invocations,
        generations_run: outcome.generations_run,
        converged: outcome.converged,
        score_trace: outcome.trace,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReachableReport {
    pub results: BTreeMap<String, AttackResult>,
    pub successes: usize,
    pub per_target_budget: usize,
}

/// Attack every enrolled label under a fixed per-target evaluation
/// budget: one initial population plus as many generations as the budget
/// affords. Each target gets its own seed offset so runs stay
/// reproducible without sharing randomness.
pub fn reachable_set(
    attacker_utts: &[AudioBuffer],
    oracle: &dyn Oracle,
    space: &SearchSpace,
    cfg: &DeConfig,
    env: &Environment,
    per_target_budget: usize,
) -> Result<ReachableReport> {
    if per_target_budget < cfg.population {
        return Err(Error::InvalidArgument(format!(
            "budget {per_target_budget} cannot cover one population of {}",
            cfg.population
        )));
    }
    let generations = (per_target_budget - cfg.population) / cfg.population;
    let mut results = BTreeMap::new();
    for (index, label) in oracle.labels().iter().enumerate() {
        let per_target = DeConfig {
            max_iterations: generations,
            rng_seed: cfg.rng_seed.wrapping_add(index as u64),
            ..*cfg
        };
        let result = attack_target(attacker_utts, label, oracle, space, &per_target, env)?;
        results.insert(label.clone(), result);
    }
    let successes = results.values().filter(|r| r.success).count();
    Ok(ReachableReport {
        results,
        successes,
        per_target_budget,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapSummary {
    pub n: usize,
    pub mean_top1: f64,
    pub median_top1: f64,
    pub mean_top2: f64,
    pub median_top2: f64,
    pub mean_gap: f64,
    pub median_gap: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceGapReport {
    pub clean: GapSummary,
    pub adversarial: GapSummary,
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

fn gap_summary(oracle: &dyn Oracle, utts: &[AudioBuffer]) -> Result<GapSummary> {
    if utts.is_empty() {
        return Err(Error::InvalidArgument("empty utterance set".into()));
    }
    let mut top1s = Vec::with_capacity(utts.len());
    let mut top2s = Vec::with_capacity(utts.len());
    let mut gaps = Vec::with_capacity(utts.len());
    for utt in utts {
        let (_, scores) = oracle.identify(utt)?;
        let ranked = scores.ranked();
        let top1 = ranked[0].1;
        let top2 = ranked.get(1).map_or(0.0, |r| r.1);
        top1s.push(top1);
        top2s.push(top2);
        gaps.push(top1 - top2);
    }
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    let summary = GapSummary {
        n: utts.len(),
        mean_top1: mean(&top1s),
        mean_top2: mean(&top2s),
        mean_gap: mean(&gaps),
        median_top1: 0.0,
        median_top2: 0.0,
        median_gap: 0.0,
    };
    for xs in [&mut top1s, &mut top2s, &mut gaps] {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    }
    Ok(GapSummary {
        median_top1: median(&top1s),
        median_top2: median(&top2s),
        median_gap: median(&gaps),
        ..summary
    })
}

/// Top-two score distributions on a clean and an adversarial utterance
/// set. A confident model shows a wide top1 - top2 gap; coerced labels
/// narrow it.
pub fn confidence_gap_stats(
    oracle: &dyn Oracle,
    clean: &[AudioBuffer],
    adversarial: &[AudioBuffer],
) -> Result<ConfidenceGapReport> {
    Ok(ConfidenceGapReport {
        clean: gap_summary(oracle, clean)?,
        adversarial: gap_summary(oracle, adversarial)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub victim_label: String,
    pub attack_victim_mean: f64,
    pub attack_nonvictim_mean: f64,
    pub n_utterances: usize,
}

/// Mean cosine similarity between attack-utterance embeddings and the
/// victim centroid versus other enrolled centroids. Embeddings are
/// standardized against the enrolled centroids first (per-dimension mean
/// and spread): raw statistics vectors share a large speaker-independent
/// offset that pushes every cosine toward 1, and after centering alone a
/// single outlying speaker still leaves the rest of the constellation
/// pointing one way.
pub fn embedding_similarity_stats(
    model: &SpeakerModel,
    attack_utts: &[AudioBuffer],
    victim_label: &str,
    nonvictim_labels: &[String],
) -> Result<SimilarityReport> {
    if attack_utts.is_empty() {
        return Err(Error::InvalidArgument("no attack utterances".into()));
    }
    if nonvictim_labels.is_empty() {
        return Err(Error::InvalidArgument("no non-victim labels".into()));
    }
    let dim = model.centroids[0].dim();
    let k = model.centroids.len() as f64;
    let mut center = vec![0.0; dim];
    for c in &model.centroids {
        for (acc, v) in center.iter_mut().zip(&c.vector) {
            *acc += v / k;
        }
    }
    let mut spread = vec![0.0; dim];
    for c in &model.centroids {
        for ((acc, v), m) in spread.iter_mut().zip(&c.vector).zip(&center) {
            *acc += (v - m) * (v - m) / k;
        }
    }
    for s in &mut spread {
        *s = s.sqrt().max(1e-12);
    }
    let standardized = |e: &Embedding| Embedding {
        vector: e
            .vector
            .iter()
            .zip(&center)
            .zip(&spread)
            .map(|((v, m), s)| (v - m) / s)
            .collect(),
    };

    let victim = standardized(model.centroid_of(victim_label)?);
    let others = nonvictim_labels
        .iter()
        .map(|l| model.centroid_of(l).map(&standardized))
        .collect::<Result<Vec<_>>>()?;
    let mut victim_sum = 0.0;
    let mut other_sum = 0.0;
    for utt in attack_utts {
        let e = standardized(&embed(utt, &model.mfcc)?);
        victim_sum += e.cosine(&victim);
        other_sum += others.iter().map(|c| e.cosine(c)).sum::<f64>() / others.len() as f64;
    }
    let n = attack_utts.len() as f64;
    Ok(SimilarityReport {
        victim_label: victim_label.to_string(),
        attack_victim_mean: victim_sum / n,
        attack_nonvictim_mean: other_sum / n,
        n_utterances: attack_utts.len(),
    })
}

/// Percentage of positions where every prediction run emits the same
/// label.
pub fn consistency_rate(runs: &[Vec<String>]) -> Result<f64> {
    if runs.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "need at least 2 runs, got {}",
            runs.len()
        )));
    }
    let len = runs[0].len();
    if len == 0 {
        return Err(Error::InvalidArgument("empty prediction runs".into()));
    }
    if runs.iter().any(|r| r.len() != len) {
        return Err(Error::InvalidArgument("prediction runs differ in length".into()));
    }
    let consistent = (0..len)
        .filter(|&i| runs[1..].iter().all(|r| r[i] == runs[0][i]))
        .count();
    Ok(consistent as f64 / len as f64 * 100.0)
}

/// Of the attacks that succeeded under the first condition, the
/// percentage that reproduce the same target under the second. Values
/// are the successful target per utterance, None for failures. No
/// first-condition successes yields 0.
pub fn match_rate(
    simulated: &BTreeMap<String, Option<String>>,
    second: &BTreeMap<String, Option<String>>,
) -> Result<f64> {
    if simulated.len() != second.len()
        || simulated.keys().any(|k| !second.contains_key(k))
    {
        return Err(Error::InvalidArgument(
            "utterance key sets differ between conditions".into(),
        ));
    }
    let successes = simulated.values().filter(|v| v.is_some()).count();
    if successes == 0 {
        return Ok(0.0);
    }
    let matched = simulated
        .iter()
        .filter(|(key, sim)| {
            sim.is_some() && second.get(*key).expect("checked keys") == *sim
        })
        .count();
    Ok(matched as f64 / successes as f64 * 100.0)
}

#[derive(Serialize)]
struct AttackCsvRow<'a> {
    target: &'a str,
    success: bool,
    best_score: f64,
    invocations: usize,
    #[serde(rename = "f0_Hz")]
    f0_hz: Option<f64>,
    #[serde(rename = "Q0")]
    q0: Option<f64>,
    #[serde(rename = "L_m")]
    l_m: Option<f64>,
    #[serde(rename = "d_m")]
    d_m: Option<f64>,
}

/// Flat per-target table for plotting.
pub fn write_attack_csv<'a, W: std::io::Write>(
    results: impl IntoIterator<Item = &'a AttackResult>,
    writer: W,
) -> Result<()> {
    let mut out = csv::Writer::from_writer(writer);
    for r in results {
        out.serialize(AttackCsvRow {
            target: &r.target_label,
            success: r.success,
            best_score: r.best_score,
            invocations: r.invocations,
            f0_hz: r.profile_f0_hz,
            q0: r.profile_q0,
            l_m: r.realized.map(|t| t.length_m()),
            d_m: r.realized.map(|t| t.diameter_m()),
        })?;
    }
    out.flush().map_err(Error::from)?;
    Ok(())
}
