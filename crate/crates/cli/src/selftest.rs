//! Chirp self-test of a tube's filterbank: sweep the audible band,
//! take the FFT of the bank's output, and check that its local maxima
//! sit on the theoretical harmonic series. The output spectrum is
//! effectively the bank's transfer function, so a passing comb means
//! the filter realizes the tube it claims to model.

use serde::Serialize;
use voxtube::acoustics::{
    fundamental_frequency, quality_factor, resonance_profile_single, Environment, TubeSpec,
};
use voxtube::filterbank::BandPassFilterBank;
use voxtube::signal::{chirp, fft};
use voxtube::Result;

/// Band maxima must sit within this relative distance of theory.
const PEAK_TOLERANCE: f64 = 0.01;
/// Below this Q the band skirts overlap enough to drag comb maxima off
/// their centers; flagged directly rather than left to the comb check.
const MIN_SANE_Q: f64 = 5.0;
const CHIRP_SECONDS: f64 = 3.0;
const CHIRP_LO_HZ: f64 = 100.0;
const CHIRP_HI_HZ: f64 = 3700.0;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PeakCheck {
    pub harmonic: usize,
    pub expected_hz: f64,
    pub measured_hz: f64,
    pub rel_err: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub length_m: f64,
    pub diameter_m: f64,
    pub temperature_k: f64,
    pub sample_rate: u32,
    pub f0_hz: f64,
    pub q0: f64,
    pub chirp_lo_hz: f64,
    pub chirp_hi_hz: f64,
    pub checks: Vec<Check>,
    pub peaks: Vec<PeakCheck>,
    pub passed: bool,
}

pub fn run(tube: &TubeSpec, env: &Environment, sample_rate: u32) -> Result<ValidateReport> {
    let nyquist = sample_rate as f64 / 2.0;
    let chirp_hi = CHIRP_HI_HZ.min(0.9 * nyquist);
    let profile = resonance_profile_single(tube, env, nyquist)?;
    let bank = BandPassFilterBank::from_profile(&profile, sample_rate)?;
    let sweep = chirp(CHIRP_SECONDS, CHIRP_LO_HZ, chirp_hi, sample_rate)?;
    let out = bank.apply(&sweep)?;
    let spectrum = fft(&out)?;

    let f0 = fundamental_frequency(tube, env);
    let q0 = quality_factor(tube, env);

    // Only bands whose full bandwidth lies inside the sweep carry
    // enough energy for the maximum to be meaningful.
    let mut peaks = Vec::new();
    for (i, line) in profile.harmonics.iter().enumerate() {
        let f = line.frequency_hz;
        let half_width = f / line.q;
        if f - half_width < CHIRP_LO_HZ || f + half_width > chirp_hi {
            continue;
        }
        let lo = f - 0.5 * f0;
        let hi = f + 0.5 * f0;
        let k_lo = (lo / spectrum.bin_resolution).ceil().max(1.0) as usize;
        let k_hi = ((hi / spectrum.bin_resolution).floor() as usize)
            .min(spectrum.origin_length / 2);
        let best = (k_lo..=k_hi)
            .max_by(|&a, &b| {
                spectrum.bins[a]
                    .norm_sqr()
                    .partial_cmp(&spectrum.bins[b].norm_sqr())
                    .expect("finite spectrum")
            })
            .expect("non-empty search window");
        let measured = spectrum.bin_frequency(best);
        let rel_err = (measured - f).abs() / f;
        peaks.push(PeakCheck {
            harmonic: i + 1,
            expected_hz: f,
            measured_hz: measured,
            rel_err,
            passed: rel_err <= PEAK_TOLERANCE,
        });
    }

    let q_ok = q0 >= MIN_SANE_Q;
    let n_pass = peaks.iter().filter(|p| p.passed).count();
    let peaks_ok = !peaks.is_empty() && n_pass == peaks.len();
    let checks = vec![
        Check {
            name: "q0_sane",
            passed: q_ok,
            detail: format!("Q0 = {q0:.2}, floor {MIN_SANE_Q}"),
        },
        Check {
            name: "comb_peaks",
            passed: peaks_ok,
            detail: format!(
                "{n_pass} of {} measurable maxima within {:.0}%",
                peaks.len(),
                PEAK_TOLERANCE * 100.0
            ),
        },
    ];
    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidateReport {
        length_m: tube.length_m,
        diameter_m: tube.diameter_m,
        temperature_k: env.temperature_k,
        sample_rate,
        f0_hz: f0,
        q0,
        chirp_lo_hz: CHIRP_LO_HZ,
        chirp_hi_hz: chirp_hi,
        checks,
        peaks,
        passed,
    })
}
