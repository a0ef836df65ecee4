//! Surrogate speaker identification: voice activity trimming, MFCC
//! features, statistics embeddings, and nearest-centroid softmax scoring.
//! External models plug in through the adapter submodule.

pub mod adapter;

pub use adapter::AdapterOracle;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{fft, AudioBuffer};

/// MFCC front-end parameters. Classifier paths accept 8 or 16 kHz audio
/// only; everything else in the crate is rate-agnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MfccConfig {
    pub sample_rate: u32,
    pub frame_ms: f64,
    pub hop_ms: f64,
    pub n_mels: usize,
    pub n_coeffs: usize,
    pub fmin_hz: f64,
    /// Upper mel edge; `None` means Nyquist.
    pub fmax_hz: Option<f64>,
}

impl Default for MfccConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            frame_ms: 25.0,
            hop_ms: 10.0,
            n_mels: 24,
            n_coeffs: 13,
            fmin_hz: 20.0,
            fmax_hz: None,
        }
    }
}

impl MfccConfig {
    pub fn new(sample_rate: u32) -> Result<Self> {
        let cfg = Self {
            sample_rate,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate != 8000 && self.sample_rate != 16000 {
            return Err(Error::InvalidArgument(format!(
                "classifier sample rate must be 8000 or 16000 Hz, got {}",
                self.sample_rate
            )));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        if self.n_coeffs > self.n_mels {
            return Err(Error::InvalidArgument(format!(
                "n_coeffs {} exceeds n_mels {}",
                self.n_coeffs, self.n_mels
            )));
        }
        let fmax = self.fmax();
        if !(self.fmin_hz > 0.0 && self.fmin_hz < fmax && fmax <= nyquist) {
            return Err(Error::InvalidArgument(format!(
                "mel range [{}, {fmax}] invalid for Nyquist {nyquist}",
                self.fmin_hz
            )));
        }
        if self.frame_ms <= 0.0 || self.hop_ms <= 0.0 || self.n_mels == 0 {
            return Err(Error::InvalidArgument("degenerate MFCC config".into()));
        }
        Ok(())
    }

    pub fn fmax(&self) -> f64 {
        self.fmax_hz.unwrap_or(self.sample_rate as f64 / 2.0)
    }

    fn frame_len(&self) -> usize {
        (self.frame_ms / 1000.0 * self.sample_rate as f64).round() as usize
    }

    fn hop_len(&self) -> usize {
        (self.hop_ms / 1000.0 * self.sample_rate as f64).round() as usize
    }
}

/// HTK mel scale.
pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Fixed-length utterance embedding: per-coefficient mean then standard
/// deviation over frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    pub vector: Vec<f64>,
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.vector.len()
    }

    pub fn euclidean(&self, other: &Self) -> f64 {
        self.vector
            .iter()
            .zip(&other.vector)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn cosine(&self, other: &Self) -> f64 {
        let dot: f64 = self.vector.iter().zip(&other.vector).map(|(a, b)| a * b).sum();
        let na: f64 = self.vector.iter().map(|a| a * a).sum::<f64>().sqrt();
        let nb: f64 = other.vector.iter().map(|b| b * b).sum::<f64>().sqrt();
        if na == 0.0 || nb == 0.0 {
            0.0
        } else {
            dot / (na * nb)
        }
    }
}

/// Per-label scores summing to 1, keyed in label order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreVector(pub BTreeMap<String, f64>);

impl ScoreVector {
    /// Labels with scores, best first; equal scores order lexicographically.
    pub fn ranked(&self) -> Vec<(&str, f64)> {
        let mut entries: Vec<(&str, f64)> =
            self.0.iter().map(|(label, &s)| (label.as_str(), s)).collect();
        entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(b.0)));
        entries
    }

    pub fn top(&self) -> (&str, f64) {
        self.ranked()[0]
    }

    pub fn get(&self, label: &str) -> Option<f64> {
        self.0.get(label).copied()
    }
}

/// Anything that can answer identification queries: the surrogate model
/// or an external adapter.
pub trait Oracle: Sync {
    fn labels(&self) -> Vec<String>;
    fn identify(&self, buf: &AudioBuffer) -> Result<(String, ScoreVector)>;
}

/// Nearest-centroid softmax classifier over statistics embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeakerModel {
    pub labels: Vec<String>,
    pub centroids: Vec<Embedding>,
    pub temperature: f64,
    pub mfcc: MfccConfig,
}

/// Enrollment result plus non-fatal diagnostics.
#[derive(Debug, Clone)]
pub struct Enrollment {
    pub model: SpeakerModel,
    pub warnings: Vec<String>,
}

/// Remove non-speech: frames (25 ms / 10 ms) whose RMS falls below 0.02x
/// the 95th-percentile frame RMS are dropped; each surviving frame
/// contributes its hop-sized slice (the final frame keeps the tail) so a
/// uniform signal passes through unchanged.
pub fn vad_trim(buf: &AudioBuffer) -> Result<AudioBuffer> {
    buf.check_non_empty()?;
    let frame_len = (0.025 * buf.sample_rate as f64).round() as usize;
    let hop = (0.010 * buf.sample_rate as f64).round() as usize;
    let n = buf.samples.len();

    let rms_of = |slice: &[f64]| {
        (slice.iter().map(|x| x * x).sum::<f64>() / slice.len() as f64).sqrt()
    };

    if n < frame_len {
        let rms = rms_of(&buf.samples);
        // A lone frame is its own reference; only true silence is dropped.
        if rms > 0.0 {
            return Ok(buf.clone());
        }
        return Err(Error::NoSpeech);
    }

    let starts: Vec<usize> = (0..)
        .map(|i| i * hop)
        .take_while(|s| s + frame_len <= n)
        .collect();
    let frame_rms: Vec<f64> = starts
        .iter()
        .map(|&s| rms_of(&buf.samples[s..s + frame_len]))
        .collect();
    let mut sorted = frame_rms.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let idx = ((sorted.len() as f64 * 0.95).ceil() as usize)
        .saturating_sub(1)
        .min(sorted.len() - 1);
    let threshold = 0.02 * sorted[idx];

    let mut kept = Vec::new();
    let last = starts.len() - 1;
    for (i, (&start, &rms)) in starts.iter().zip(&frame_rms).enumerate() {
        if rms >= threshold && rms > 0.0 {
            let end = if i == last { n } else { start + hop };
            kept.extend_from_slice(&buf.samples[start..end]);
        }
    }
    if kept.is_empty() {
        return Err(Error::NoSpeech);
    }
    Ok(AudioBuffer {
        samples: kept,
        sample_rate: buf.sample_rate,
    })
}

/// Mel-frequency cepstral coefficients, one row per frame: Hann window,
/// power spectrum, triangular HTK mel filterbank, log (floored at 1e-10),
/// DCT-II truncated to `n_coeffs`.
pub fn mfcc(buf: &AudioBuffer, cfg: &MfccConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    if buf.sample_rate != cfg.sample_rate {
        return Err(Error::SampleRateMismatch(buf.sample_rate, cfg.sample_rate));
    }
    let frame_len = cfg.frame_len();
    let hop = cfg.hop_len();
    if buf.samples.len() < frame_len {
        return Err(Error::InvalidArgument(format!(
            "input shorter than one {frame_len}-sample frame"
        )));
    }
    let window: Vec<f64> = (0..frame_len)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / frame_len as f64).cos()))
        .collect();
    let half = frame_len / 2;
    let filters = mel_filterbank(cfg, frame_len);

    let starts: Vec<usize> = (0..)
        .map(|i| i * hop)
        .take_while(|s| s + frame_len <= buf.samples.len())
        .collect();
    let mut rows = Vec::with_capacity(starts.len());
    for &start in &starts {
        let frame = AudioBuffer {
            samples: buf.samples[start..start + frame_len]
                .iter()
                .zip(&window)
                .map(|(x, w)| x * w)
                .collect(),
            sample_rate: buf.sample_rate,
        };
        let spectrum = fft(&frame)?;
        let power: Vec<f64> = (0..=half).map(|k| spectrum.bins[k].norm_sqr()).collect();
        let log_mel: Vec<f64> = filters
            .iter()
            .map(|filter| {
                let energy: f64 = filter.iter().map(|&(k, w)| w * power[k]).sum();
                energy.max(1e-10).ln()
            })
            .collect();
        let row: Vec<f64> = (0..cfg.n_coeffs)
            .map(|j| {
                log_mel
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| {
                        v * (std::f64::consts::PI * j as f64 * (i as f64 + 0.5)
                            / cfg.n_mels as f64)
                            .cos()
                    })
                    .sum()
            })
            .collect();
        rows.push(row);
    }
    Ok(rows)
}

/// Sparse triangular filters: per filter, the (bin, weight) pairs with
/// nonzero weight.
fn mel_filterbank(cfg: &MfccConfig, frame_len: usize) -> Vec<Vec<(usize, f64)>> {
    let half = frame_len / 2;
    let mel_lo = hz_to_mel(cfg.fmin_hz);
    let mel_hi = hz_to_mel(cfg.fmax());
    let edges: Vec<f64> = (0..cfg.n_mels + 2)
        .map(|i| {
            mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (cfg.n_mels + 1) as f64)
        })
        .collect();
    let bin_hz = cfg.sample_rate as f64 / frame_len as f64;
    (0..cfg.n_mels)
        .map(|m| {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            (0..=half)
                .filter_map(|k| {
                    let f = k as f64 * bin_hz;
                    let w = if f > lo && f < mid {
                        (f - lo) / (mid - lo)
                    } else if (f - mid).abs() < 1e-12 {
                        1.0
                    } else if f > mid && f < hi {
                        (hi - f) / (hi - mid)
                    } else {
                        return None;
                    };
                    Some((k, w))
                })
                .collect()
        })
        .collect()
}

/// Utterance embedding: VAD trim, MFCC, then per-coefficient mean and
/// (population) standard deviation concatenated.
pub fn embed(buf: &AudioBuffer, cfg: &MfccConfig) -> Result<Embedding> {
    let trimmed = vad_trim(buf)?;
    let rows = mfcc(&trimmed, cfg)?;
    if rows.is_empty() {
        return Err(Error::NoSpeech);
    }
    let n = rows.len() as f64;
    let dim = cfg.n_coeffs;
    let mut means = vec![0.0; dim];
    for row in &rows {
        for (m, &v) in means.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut means {
        *m /= n;
    }
    let mut stds = vec![0.0; dim];
    for row in &rows {
        for ((s, &v), &m) in stds.iter_mut().zip(row).zip(&means) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut stds {
        *s = (*s / n).sqrt();
    }
    means.extend(stds);
    Ok(Embedding { vector: means })
}

/// Build a speaker model from a corpus: centroids are embedding means,
/// temperature is fitted by bisection so the average top-1 score on the
/// enrollment data lands in [0.6, 0.95].
pub fn enroll(corpus: &BTreeMap<String, Vec<AudioBuffer>>, cfg: &MfccConfig) -> Result<Enrollment> {
    if corpus.len() < 2 {
        return Err(Error::Enrollment(format!(
            "need at least 2 speakers, got {}",
            corpus.len()
        )));
    }
    for (label, utts) in corpus {
        if utts.len() < 3 {
            return Err(Error::Enrollment(format!(
                "speaker {label} has {} utterances, need at least 3",
                utts.len()
            )));
        }
    }
    let mut labels = Vec::new();
    let mut centroids = Vec::new();
    let mut all_embeddings: Vec<(usize, Embedding)> = Vec::new();
    for (speaker_idx, (label, utts)) in corpus.iter().enumerate() {
        let mut centroid = vec![0.0; 2 * cfg.n_coeffs];
        for utt in utts {
            let e = embed(utt, cfg)?;
            for (c, v) in centroid.iter_mut().zip(&e.vector) {
                *c += v;
            }
            all_embeddings.push((speaker_idx, e));
        }
        for c in &mut centroid {
            *c /= utts.len() as f64;
        }
        labels.push(label.clone());
        centroids.push(Embedding { vector: centroid });
    }

    let mut warnings = Vec::new();
    for i in 0..centroids.len() {
        for j in i + 1..centroids.len() {
            if centroids[i].euclidean(&centroids[j]) < 1e-6 {
                warnings.push(format!(
                    "indistinguishable centroids: {} and {}",
                    labels[i], labels[j]
                ));
            }
        }
    }

    // Average top-1 score falls monotonically in temperature: bisect
    // until it lands inside the band.
    let avg_top1 = |temperature: f64| -> f64 {
        let total: f64 = all_embeddings
            .iter()
            .map(|(_, e)| {
                let scores = softmax_scores(&labels, &centroids, temperature, e);
                scores.top().1
            })
            .sum();
        total / all_embeddings.len() as f64
    };
    let mut lo = 1e-6;
    let mut hi = 1e6;
    let mut temperature = 1.0;
    let mut fitted = false;
    for _ in 0..200 {
        let avg = avg_top1(temperature);
        if (0.6..=0.95).contains(&avg) {
            fitted = true;
            break;
        }
        if avg > 0.95 {
            lo = temperature;
        } else {
            hi = temperature;
        }
        temperature = (lo * hi).sqrt();
    }
    if !fitted {
        warnings.push(format!(
            "temperature fit failed; average top-1 {:.3} at temperature {temperature:.3e}",
            avg_top1(temperature)
        ));
    }

    Ok(Enrollment {
        model: SpeakerModel {
            labels,
            centroids,
            temperature,
            mfcc: *cfg,
        },
        warnings,
    })
}

fn softmax_scores(
    labels: &[String],
    centroids: &[Embedding],
    temperature: f64,
    e: &Embedding,
) -> ScoreVector {
    let logits: Vec<f64> = centroids
        .iter()
        .map(|c| -e.euclidean(c) / temperature)
        .collect();
    let max_logit = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max_logit).exp()).collect();
    let sum: f64 = exps.iter().sum();
    ScoreVector(
        labels
            .iter()
            .zip(exps)
            .map(|(label, x)| (label.clone(), x / sum))
            .collect(),
    )
}

impl SpeakerModel {
    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.centroids.len() || self.labels.is_empty() {
            return Err(Error::Enrollment("labels/centroids arity mismatch".into()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for label in &self.labels {
            if !seen.insert(label) {
                return Err(Error::Enrollment(format!("duplicate label {label}")));
            }
        }
        let dim = self.centroids[0].dim();
        if self.centroids.iter().any(|c| c.dim() != dim) {
            return Err(Error::Enrollment("centroid dimensionality mismatch".into()));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Enrollment(format!(
                "temperature {} must be positive",
                self.temperature
            )));
        }
        self.mfcc.validate()
    }

    /// Classify one utterance: scores are a distance softmax, the label
    /// is the argmax (ties go to the lexicographically smaller label).
    pub fn identify(&self, buf: &AudioBuffer) -> Result<(String, ScoreVector)> {
        let e = embed(buf, &self.mfcc)?;
        let scores = softmax_scores(&self.labels, &self.centroids, self.temperature, &e);
        let label = scores.top().0.to_string();
        Ok((label, scores))
    }

    pub fn centroid_of(&self, label: &str) -> Result<&Embedding> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| &self.centroids[i])
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: Self = serde_json::from_str(&text)?;
        model.validate()?;
        Ok(model)
    }
}

impl Oracle for SpeakerModel {
    fn labels(&self) -> Vec<String> {
        self.labels.clone()
    }

    fn identify(&self, buf: &AudioBuffer) -> Result<(String, ScoreVector)> {
        SpeakerModel::identify(self, buf)
    }
}
