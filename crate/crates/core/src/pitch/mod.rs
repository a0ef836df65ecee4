//! Sinusoidal-model pitch estimation: STFT peak picking, harmonic-fit
//! pitch search, frame-level tracking, and the pitch-shift regression
//! study over tube filterbanks.

mod regression;

pub use regression::{ols_regression, student_t_sf, RegressionReport};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acoustics::{resonance_profile_single, Environment, TubeSpec};
use crate::error::{Error, Result};
use crate::filterbank::BandPassFilterBank;
use crate::signal::{fft, AudioBuffer};

/// Analysis frame length for pitch tracking.
pub const PITCH_FRAME_MS: f64 = 64.0;
/// Hop between pitch frames.
pub const PITCH_HOP_MS: f64 = 16.0;
/// Frames quieter than this RMS (full-scale relative) are unvoiced.
pub const VOICING_RMS: f64 = 0.01;
/// Peak-picking threshold as a multiple of the median bin magnitude.
const PEAK_MEDIAN_FACTOR: f64 = 4.0;
/// Bins below this fraction of the frame's strongest bin are never
/// peaks. On noise-free synthetic frames the median magnitude is pure
/// rounding error, so the median rule alone would admit junk maxima.
const PEAK_FLOOR_REL: f64 = 1e-6;
/// At most this many spectral peaks are kept per frame.
const MAX_PEAKS: usize = 60;

/// One spectral peak: amplitude, frequency in rad/sample, phase.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinePeak {
    pub amplitude: f64,
    pub frequency: f64,
    pub phase: f64,
}

/// Peaks of one analysis frame, with the context needed to interpret
/// their frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct SinePeaks {
    /// Sorted by frequency, strictly increasing.
    pub peaks: Vec<SinePeak>,
    pub sample_rate: u32,
    pub frame_len: usize,
}

/// Pitch search grid in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchSearch {
    pub min_hz: f64,
    pub max_hz: f64,
    pub step_hz: f64,
}

impl Default for PitchSearch {
    fn default() -> Self {
        Self {
            min_hz: 50.0,
            max_hz: 500.0,
            step_hz: 1.0,
        }
    }
}

/// One tracked frame: start time and pitch, or `None` when unvoiced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PitchFrame {
    pub time_s: f64,
    pub pitch_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchTrack {
    pub frames: Vec<PitchFrame>,
}

impl PitchTrack {
    pub fn voiced(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.frames
            .iter()
            .filter_map(|f| f.pitch_hz.map(|p| (f.time_s, p)))
    }
}

/// Pick sinusoidal peaks from one Hann-windowed frame: local maxima of
/// the magnitude spectrum above 4x the median bin magnitude, refined by
/// parabolic interpolation on log magnitude. A silent frame yields an
/// empty peak list, not an error.
pub fn stft_peaks(frame: &AudioBuffer) -> Result<SinePeaks> {
    let n = frame.samples.len();
    if n < 256 {
        return Err(Error::InvalidArgument(format!(
            "pitch frame needs at least 256 samples, got {n}"
        )));
    }
    // Periodic Hann: coherent gain is exactly n/2.
    let window: Vec<f64> = (0..n)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::TAU * i as f64 / n as f64).cos()))
        .collect();
    let window_sum: f64 = window.iter().sum();
    let windowed = AudioBuffer {
        samples: frame
            .samples
            .iter()
            .zip(&window)
            .map(|(x, w)| x * w)
            .collect(),
        sample_rate: frame.sample_rate,
    };
    let spectrum = fft(&windowed)?;
    let half = n / 2;
    let mags: Vec<f64> = (0..=half).map(|k| spectrum.bins[k].norm()).collect();

    let mut sorted: Vec<f64> = mags[1..half].to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    let strongest = mags[1..half].iter().cloned().fold(0.0, f64::max);
    let threshold = (PEAK_MEDIAN_FACTOR * median).max(PEAK_FLOOR_REL * strongest);

    let mut peaks: Vec<SinePeak> = Vec::new();
    for k in 2..half.saturating_sub(1) {
        if mags[k] <= threshold || mags[k] <= mags[k - 1] || mags[k] <= mags[k + 1] {
            continue;
        }
        let (l1, l2, l3) = (mags[k - 1].ln(), mags[k].ln(), mags[k + 1].ln());
        let denom = l1 - 2.0 * l2 + l3;
        let mut delta = if denom.abs() > 1e-12 {
            0.5 * (l1 - l3) / denom
        } else {
            0.0
        };
        if !delta.is_finite() {
            delta = 0.0;
        }
        delta = delta.clamp(-0.5, 0.5);
        let peak_log = l2 - 0.25 * (l1 - l3) * delta;
        peaks.push(SinePeak {
            amplitude: 2.0 * peak_log.exp() / window_sum,
            frequency: std::f64::consts::TAU * (k as f64 + delta) / n as f64,
            phase: spectrum.bins[k].arg(),
        });
    }
    peaks.sort_by(|a, b| b.amplitude.partial_cmp(&a.amplitude).unwrap());
    peaks.truncate(MAX_PEAKS);
    peaks.sort_by(|a, b| a.frequency.partial_cmp(&b.frequency).unwrap());
    Ok(SinePeaks {
        peaks,
        sample_rate: frame.sample_rate,
        frame_len: n,
    })
}

/// Normalized sinc: sin(pi x) / (pi x).
fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Piecewise-linear envelope through the peaks, flat beyond the ends.
fn envelope_at(peaks: &[SinePeak], omega: f64) -> f64 {
    match peaks.binary_search_by(|p| p.frequency.partial_cmp(&omega).unwrap()) {
        Ok(i) => peaks[i].amplitude,
        Err(0) => peaks[0].amplitude,
        Err(i) if i == peaks.len() => peaks[peaks.len() - 1].amplitude,
        Err(i) => {
            let (lo, hi) = (&peaks[i - 1], &peaks[i]);
            let t = (omega - lo.frequency) / (hi.frequency - lo.frequency);
            lo.amplitude + t * (hi.amplitude - lo.amplitude)
        }
    }
}

/// Harmonic-fit objective: how much of the peak energy a fundamental at
/// `omega0` explains. The sinc kernel width matches the analysis bin
/// width, and only multiples up to the highest detected peak count.
fn harmonic_fit(peaks: &SinePeaks, omega0: f64) -> f64 {
    let bin_width = std::f64::consts::TAU / peaks.frame_len as f64;
    let omega_top = peaks.peaks.last().map_or(0.0, |p| p.frequency);
    let k_max = ((omega_top / omega0 + 1e-9).floor() as usize).max(1);
    let mut rho = 0.0;
    for k in 1..=k_max {
        let omega_k = k as f64 * omega0;
        let env = envelope_at(&peaks.peaks, omega_k);
        let matched: f64 = peaks
            .peaks
            .iter()
            .map(|p| p.amplitude * sinc((p.frequency - omega_k) / bin_width).abs())
            .sum();
        rho += env * (matched - 0.5 * env);
    }
    rho
}

/// Grid-search the fundamental over `search`, maximizing the harmonic
/// fit. Returns rad/sample; ties break toward the lower candidate.
pub fn estimate_pitch(peaks: &SinePeaks, search: &PitchSearch) -> Result<f64> {
    if peaks.peaks.is_empty() {
        return Err(Error::InvalidArgument("no spectral peaks".into()));
    }
    let sr = peaks.sample_rate as f64;
    let nyquist = sr / 2.0;
    if !(search.min_hz > 0.0
        && search.min_hz < search.max_hz
        && search.max_hz < nyquist
        && search.step_hz > 0.0)
    {
        return Err(Error::InvalidArgument(format!(
            "bad pitch search grid [{}, {}] step {}",
            search.min_hz, search.max_hz, search.step_hz
        )));
    }
    let steps = ((search.max_hz - search.min_hz) / search.step_hz + 1e-9).floor() as usize;
    let mut best_omega = 0.0;
    let mut best_rho = f64::NEG_INFINITY;
    for i in 0..=steps {
        let hz = search.min_hz + i as f64 * search.step_hz;
        let omega = std::f64::consts::TAU * hz / sr;
        let rho = harmonic_fit(peaks, omega);
        if rho > best_rho {
            best_rho = rho;
            best_omega = omega;
        }
    }
    Ok(best_omega)
}

/// Frame-level pitch track: 64 ms frames every 16 ms, quiet frames
/// unvoiced. Frames are processed in parallel and reassembled in order.
pub fn pitch_track(buf: &AudioBuffer) -> Result<PitchTrack> {
    buf.check_non_empty()?;
    let sr = buf.sample_rate as f64;
    let frame_len = (PITCH_FRAME_MS / 1000.0 * sr).round() as usize;
    let hop = (PITCH_HOP_MS / 1000.0 * sr).round() as usize;
    let starts: Vec<usize> = (0..)
        .map(|i| i * hop)
        .take_while(|s| s + frame_len <= buf.samples.len())
        .collect();
    let pitches: Vec<Option<f64>> = starts
        .par_iter()
        .map(|&start| {
            let slice = &buf.samples[start..start + frame_len];
            let rms = (slice.iter().map(|x| x * x).sum::<f64>() / frame_len as f64).sqrt();
            if rms < VOICING_RMS {
                return None;
            }
            let frame = AudioBuffer {
                samples: slice.to_vec(),
                sample_rate: buf.sample_rate,
            };
            let peaks = stft_peaks(&frame).ok()?;
            if peaks.peaks.is_empty() {
                return None;
            }
            estimate_pitch(&peaks, &PitchSearch::default())
                .ok()
                .map(|omega| omega * sr / std::f64::consts::TAU)
        })
        .collect();
    Ok(PitchTrack {
        frames: starts
            .iter()
            .zip(pitches)
            .map(|(&s, pitch_hz)| PitchFrame {
                time_s: s as f64 / sr,
                pitch_hz,
            })
            .collect(),
    })
}

/// Mean pitch difference (filtered minus original) over frames voiced in
/// both tracks. Needs at least 5 such frames.
pub fn mean_pitch_shift(original: &AudioBuffer, filtered: &AudioBuffer) -> Result<f64> {
    if original.sample_rate != filtered.sample_rate {
        return Err(Error::SampleRateMismatch(
            filtered.sample_rate,
            original.sample_rate,
        ));
    }
    let frame_len =
        (PITCH_FRAME_MS / 1000.0 * original.sample_rate as f64).round() as usize;
    if original.samples.len().abs_diff(filtered.samples.len()) > frame_len {
        return Err(Error::InvalidArgument(
            "buffers differ by more than one frame".into(),
        ));
    }
    let track_a = pitch_track(original)?;
    let track_b = pitch_track(filtered)?;
    let diffs: Vec<f64> = track_a
        .frames
        .iter()
        .zip(&track_b.frames)
        .filter_map(|(a, b)| Some(b.pitch_hz? - a.pitch_hz?))
        .collect();
    if diffs.len() < 5 {
        return Err(Error::InsufficientVoicedOverlap(diffs.len()));
    }
    Ok(diffs.iter().sum::<f64>() / diffs.len() as f64)
}

/// One (signal, tube) measurement of the study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShiftObservation {
    #[serde(rename = "tube_L_m")]
    pub tube_l_m: f64,
    pub tube_d_m: f64,
    pub signal_id: usize,
    #[serde(rename = "mean_shift_Hz")]
    pub mean_shift_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PitchShiftStudy {
    pub report: RegressionReport,
    pub observations: Vec<ShiftObservation>,
}

/// Filter every signal through every tube's bank, measure the pitch
/// shift, and regress the shifts on [1, L, d].
///
/// Filtered audio is rescaled to the source RMS before tracking so the
/// fixed voicing threshold compares like with like.
pub fn pitch_shift_study(
    signals: &[AudioBuffer],
    tubes: &[TubeSpec],
    env: &Environment,
) -> Result<PitchShiftStudy> {
    if signals.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "study needs at least 10 signals, got {}",
            signals.len()
        )));
    }
    if tubes.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "study needs at least 3 tubes, got {}",
            tubes.len()
        )));
    }
    let pairs: Vec<(usize, usize)> = (0..tubes.len())
        .flat_map(|t| (0..signals.len()).map(move |s| (t, s)))
        .collect();
    let observations: Vec<ShiftObservation> = pairs
        .par_iter()
        .map(|&(t, s)| {
            let tube = &tubes[t];
            let signal = &signals[s];
            let profile =
                resonance_profile_single(tube, env, signal.sample_rate as f64 / 2.0)?;
            let bank = BandPassFilterBank::from_profile(&profile, signal.sample_rate)?;
            let mut filtered = bank.apply(signal)?;
            let out_rms = filtered.rms();
            if out_rms > 0.0 {
                let gain = signal.rms() / out_rms;
                for x in &mut filtered.samples {
                    *x *= gain;
                }
            }
            Ok(ShiftObservation {
                tube_l_m: tube.length_m,
                tube_d_m: tube.diameter_m,
                signal_id: s,
                mean_shift_hz: mean_pitch_shift(signal, &filtered)?,
            })
        })
        .collect::<Result<_>>()?;
    let design: Vec<Vec<f64>> = observations
        .iter()
        .map(|o| vec![1.0, o.tube_l_m, o.tube_d_m])
        .collect();
    let shifts: Vec<f64> = observations.iter().map(|o| o.mean_shift_hz).collect();
    let report = ols_regression(&design, &shifts)?;
    Ok(PitchShiftStudy {
        report,
        observations,
    })
}

/// Write study observations as CSV with a header row.
pub fn write_shift_csv<W: std::io::Write>(
    observations: &[ShiftObservation],
    writer: W,
) -> Result<()> {
    let mut csv_writer = csv::Writer::from_writer(writer);
    for obs in observations {
        csv_writer.serialize(obs)?;
    }
    csv_writer.flush().map_err(std::io::Error::from)?;
    Ok(())
}
