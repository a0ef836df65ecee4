//! Sum-of-resonators transfer function for a tube's resonance profile and
//! frequency-domain application to audio.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::acoustics::{Resonance, ResonanceProfile};
use crate::error::{Error, Result};
use crate::signal::{fft, ifft_complex, AudioBuffer};

/// Band-pass filterbank: one two-pole resonator per resonance line, summed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandPassFilterBank {
    pub bands: Vec<Resonance>,
    pub sample_rate: u32,
}

impl BandPassFilterBank {
    /// One band per profile harmonic. Harmonics at or above the target
    /// Nyquist are dropped; a profile with nothing left errors.
    pub fn from_profile(profile: &ResonanceProfile, sample_rate: u32) -> Result<Self> {
        let nyquist = sample_rate as f64 / 2.0;
        let bands: Vec<Resonance> = profile
            .harmonics
            .iter()
            .copied()
            .filter(|h| h.frequency_hz < nyquist)
            .collect();
        if bands.is_empty() {
            return Err(Error::EmptyProfile(format!(
                "no resonance below Nyquist {nyquist} Hz"
            )));
        }
        Ok(Self { bands, sample_rate })
    }

    /// `H(f) = sum_i H_i(f)` with the unit-peak two-pole prototype
    /// `H_i(f) = (j f f_i / Q_i) / (f_i^2 - f^2 + j f f_i / Q_i)`.
    /// Each term is exactly 1 at its own center.
    pub fn response_at(&self, f_hz: f64) -> Complex64 {
        let mut sum = Complex64::new(0.0, 0.0);
        for band in &self.bands {
            let num = Complex64::new(0.0, f_hz * band.frequency_hz / band.q);
            let den = Complex64::new(
                band.frequency_hz * band.frequency_hz - f_hz * f_hz,
                0.0,
            ) + num;
            sum += num / den;
        }
        sum
    }

    pub fn transfer_function(&self, freqs: &[f64]) -> Vec<Complex64> {
        freqs.iter().map(|&f| self.response_at(f)).collect()
    }

    /// Filter by bin-wise multiplication in the frequency domain
    /// (complex response, phase included).
    pub fn apply(&self, input: &AudioBuffer) -> Result<AudioBuffer> {
        self.filter_with(input, |h| h)
    }

    /// Magnitude-only variant: multiplies by `|H(f)|`, discarding phase.
    pub fn apply_magnitude(&self, input: &AudioBuffer) -> Result<AudioBuffer> {
        self.filter_with(input, |h| Complex64::new(h.norm(), 0.0))
    }

    fn filter_with(
        &self,
        input: &AudioBuffer,
        shape: impl Fn(Complex64) -> Complex64,
    ) -> Result<AudioBuffer> {
        if input.sample_rate != self.sample_rate {
            return Err(Error::SampleRateMismatch(input.sample_rate, self.sample_rate));
        }
        let mut spectrum = fft(input)?;
        let n = spectrum.bins.len();
        let half = n / 2;
        // Multiply the non-negative-frequency half, then mirror conjugates
        // so the inverse transform is real by construction.
        for k in 0..=half {
            let f = k as f64 * input.sample_rate as f64 / n as f64;
            let mut y = spectrum.bins[k] * shape(self.response_at(f));
            if k == 0 || (n % 2 == 0 && k == half) {
                y.im = 0.0; // DC and Nyquist must stay real
            }
            spectrum.bins[k] = y;
            if k != 0 && k != n - k {
                spectrum.bins[n - k] = y.conj();
            }
        }
        let full = ifft_complex(&spectrum)?;
        let imag_rms = (full.iter().map(|c| c.im * c.im).sum::<f64>() / n as f64).sqrt();
        debug_assert!(imag_rms < 1e-9, "imaginary residue {imag_rms}");
        Ok(AudioBuffer {
            samples: full.iter().map(|c| c.re).collect(),
            sample_rate: input.sample_rate,
        })
    }

    /// Fraction of spectral energy inside the bands' half-power intervals
    /// `f_i (1 +- 1/(2 Q_i))`. Overlapping intervals count once.
    pub fn band_energy_ratio(&self, input: &AudioBuffer) -> Result<f64> {
        if input.sample_rate != self.sample_rate {
            return Err(Error::SampleRateMismatch(input.sample_rate, self.sample_rate));
        }
        let spectrum = fft(input)?;
        let n = spectrum.bins.len();
        let mut total = 0.0;
        let mut inside = 0.0;
        for (k, bin) in spectrum.bins.iter().enumerate() {
            // Fold to the magnitude frequency of the bin.
            let k_fold = k.min(n - k);
            let f = k_fold as f64 * input.sample_rate as f64 / n as f64;
            let e = bin.norm_sqr();
            total += e;
            let covered = self.bands.iter().any(|b| {
                let half_width = 1.0 / (2.0 * b.q);
                f >= b.frequency_hz * (1.0 - half_width)
                    && f <= b.frequency_hz * (1.0 + half_width)
            });
            if covered {
                inside += e;
            }
        }
        if total == 0.0 {
            return Ok(0.0);
        }
        Ok(inside / total)
    }
}
