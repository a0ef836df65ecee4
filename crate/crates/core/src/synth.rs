//! Deterministic synthetic test signals: harmonic series, tilted "voices"
//! for surrogate speakers, and seeded noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::signal::AudioBuffer;

/// Equal-amplitude harmonic series at `f0_hz`. Harmonics at or above
/// Nyquist are dropped. Peak amplitude stays below 1.
pub fn harmonic_series(
    f0_hz: f64,
    n_harmonics: usize,
    duration_s: f64,
    sample_rate: u32,
) -> AudioBuffer {
    let amps = vec![1.0; n_harmonics];
    partials(f0_hz, &amps, duration_s, sample_rate)
}

/// Harmonic "voice" with a spectral tilt in dB per octave: steeper tilt
/// concentrates energy in low harmonics, imitating different timbres.
pub fn voice(
    f0_hz: f64,
    tilt_db_per_octave: f64,
    n_harmonics: usize,
    duration_s: f64,
    sample_rate: u32,
) -> AudioBuffer {
    let amps: Vec<f64> = (1..=n_harmonics)
        .map(|k| {
            let octaves = (k as f64).log2();
            10f64.powf(-tilt_db_per_octave * octaves / 20.0)
        })
        .collect();
    partials(f0_hz, &amps, duration_s, sample_rate)
}

/// Sum of sines `k * f0` with the given relative amplitudes, golden-angle
/// phase offsets to tame the crest factor, normalized so the waveform
/// peak is at most 0.9.
pub fn partials(
    f0_hz: f64,
    amplitudes: &[f64],
    duration_s: f64,
    sample_rate: u32,
) -> AudioBuffer {
    let nyquist = sample_rate as f64 / 2.0;
    let kept: Vec<(f64, f64, f64)> = amplitudes
        .iter()
        .enumerate()
        .map(|(i, &a)| {
            let k = (i + 1) as f64;
            // 2 pi / golden ratio squared, an irrational phase step.
            (k * f0_hz, a, i as f64 * 2.399_963_229_728_653)
        })
        .filter(|&(f, _, _)| f < nyquist)
        .collect();
    let norm: f64 = kept.iter().map(|&(_, a, _)| a).sum::<f64>().max(1e-12) / 0.9;
    let n = (duration_s * sample_rate as f64).round() as usize;
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / sample_rate as f64;
            kept.iter()
                .map(|&(f, a, phase)| a * (std::f64::consts::TAU * f * t + phase).sin())
                .sum::<f64>()
                / norm
        })
        .collect();
    AudioBuffer {
        samples,
        sample_rate,
    }
}

/// Seeded uniform noise in [-amplitude, amplitude].
pub fn noise(duration_s: f64, sample_rate: u32, amplitude: f64, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (duration_s * sample_rate as f64).round() as usize;
    AudioBuffer {
        samples: (0..n).map(|_| rng.gen_range(-amplitude..amplitude)).collect(),
        sample_rate,
    }
}

/// Add seeded noise at the requested signal-to-noise ratio.
pub fn with_noise_snr(buf: &AudioBuffer, snr_db: f64, seed: u64) -> AudioBuffer {
    let signal_rms = buf.rms();
    let noise_rms_target = signal_rms / 10f64.powf(snr_db / 20.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..buf.samples.len())
        .map(|_| rng.gen_range(-1.0..1.0))
        .collect();
    let raw_rms =
        (raw.iter().map(|x| x * x).sum::<f64>() / raw.len().max(1) as f64).sqrt();
    let gain = if raw_rms > 0.0 {
        noise_rms_target / raw_rms
    } else {
        0.0
    };
    AudioBuffer {
        samples: buf
            .samples
            .iter()
            .zip(&raw)
            .map(|(x, n)| x + gain * n)
            .collect(),
        sample_rate: buf.sample_rate,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_series_is_deterministic_and_bounded() {
        let a = harmonic_series(200.0, 8, 0.5, 16000);
        let b = harmonic_series(200.0, 8, 0.5, 16000);
        assert_eq!(a.samples, b.samples);
        assert_eq!(a.samples.len(), 8000);
        assert!(a.samples.iter().all(|x| x.abs() <= 0.9 + 1e-12));
        assert!(a.rms() > 0.05);
    }

    #[test]
    fn partials_drop_aliased_harmonics() {
        // 3 kHz fundamental at 8 kHz rate: only the fundamental survives.
        let buf = partials(3000.0, &[1.0, 1.0, 1.0], 0.25, 8000);
        let spectrum = crate::signal::fft(&buf).unwrap();
        let half = buf.samples.len() / 2;
        let argmax = (1..half)
            .max_by(|&a, &b| {
                spectrum.bins[a]
                    .norm()
                    .partial_cmp(&spectrum.bins[b].norm())
                    .unwrap()
            })
            .unwrap();
        let peak_hz = argmax as f64 * 8000.0 / buf.samples.len() as f64;
        assert!((peak_hz - 3000.0).abs() < 10.0);
    }

    #[test]
    fn tilt_moves_energy_down_the_spectrum() {
        let flat = voice(150.0, 0.0, 10, 0.5, 16000);
        let tilted = voice(150.0, 12.0, 10, 0.5, 16000);
        let high_band_energy = |buf: &AudioBuffer| {
            let spec = crate::signal::fft(buf).unwrap();
            let n = buf.samples.len();
            let total: f64 = (1..n / 2).map(|k| spec.bins[k].norm_sqr()).sum();
            let cut = (600.0 * n as f64 / 16000.0) as usize;
            let high: f64 = (cut..n / 2).map(|k| spec.bins[k].norm_sqr()).sum();
            high / total
        };
        assert!(high_band_energy(&tilted) < high_band_energy(&flat));
    }

    #[test]
    fn snr_mixer_hits_requested_level() {
        let clean = harmonic_series(200.0, 6, 0.5, 16000);
        let noisy = with_noise_snr(&clean, 30.0, 9);
        let noise_part: Vec<f64> = noisy
            .samples
            .iter()
            .zip(&clean.samples)
            .map(|(a, b)| a - b)
            .collect();
        let noise_rms = (noise_part.iter().map(|x| x * x).sum::<f64>()
            / noise_part.len() as f64)
            .sqrt();
        let snr_db = 20.0 * (clean.rms() / noise_rms).log10();
        assert!((snr_db - 30.0).abs() < 0.5, "snr {snr_db}");
    }

    #[test]
    fn seeded_noise_reproducible() {
        let a = noise(0.1, 8000, 0.5, 3);
        let b = noise(0.1, 8000, 0.5, 3);
        assert_eq!(a.samples, b.samples);
        assert!(a.samples.iter().all(|x| x.abs() < 0.5));
    }
}
