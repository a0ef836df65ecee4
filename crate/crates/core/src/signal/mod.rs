//! Audio container, spectral utilities, and the similarity measures used
//! to validate the tube model.

mod dtw;
mod resample;
mod wav;

pub use dtw::dtw_distance;
pub use resample::resample;
pub use wav::{read_wav, write_wav};

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// Mono sample sequence plus its sample rate. The unit of all signal
/// processing in this crate.
///
/// Samples are dimensionless amplitudes, nominally in `[-1, 1]`.
/// Classifier paths require 8 kHz or 16 kHz; pure DSP accepts any
/// positive rate. Emptiness is checked by each consuming operation
/// rather than at construction so that error paths stay testable.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl AudioBuffer {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Self {
            samples,
            sample_rate,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let ss: f64 = self.samples.iter().map(|s| s * s).sum();
        (ss / self.samples.len() as f64).sqrt()
    }

    pub fn check_non_empty(&self) -> Result<()> {
        if self.samples.is_empty() {
            Err(Error::EmptyAudio)
        } else {
            Ok(())
        }
    }
}

/// Full-length complex spectrum of a signal: `bins.len() == origin_length`.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub bins: Vec<Complex64>,
    /// Hz per bin: `sample_rate / origin_length`.
    pub bin_resolution: f64,
    /// Sample count of the transformed signal.
    pub origin_length: usize,
}

impl Spectrum {
    /// Frequency of bin `k` in Hz (bins above Nyquist map to the negative
    /// frequencies of the transform, but callers that want physical
    /// frequencies should only look at `k <= origin_length / 2`).
    pub fn bin_frequency(&self, k: usize) -> f64 {
        k as f64 * self.bin_resolution
    }
}

/// Forward DFT over the whole buffer (no framing, unnormalized), so that
/// `sum |x|^2 == (1/N) sum |X|^2` (Parseval).
pub fn fft(buf: &AudioBuffer) -> Result<Spectrum> {
    buf.check_non_empty()?;
    let n = buf.samples.len();
    let mut bins: Vec<Complex64> = buf
        .samples
        .iter()
        .map(|&s| Complex64::new(s, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut bins);
    Ok(Spectrum {
        bins,
        bin_resolution: buf.sample_rate as f64 / n as f64,
        origin_length: n,
    })
}

/// Inverse DFT, scaled by `1/N` so that `ifft(fft(x)) == x`. Returns the
/// real part; the imaginary residue of a conjugate-symmetric spectrum is
/// at rounding-error level.
pub fn ifft(spec: &Spectrum, sample_rate: u32) -> Result<AudioBuffer> {
    if spec.bins.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let n = spec.bins.len();
    let mut data = spec.bins.clone();
    FftPlanner::new().plan_fft_inverse(n).process(&mut data);
    let scale = 1.0 / n as f64;
    let samples = data.iter().map(|c| c.re * scale).collect();
    Ok(AudioBuffer::new(samples, sample_rate))
}

/// Complex inverse DFT (scaled by `1/N`), for callers that must inspect
/// the imaginary residue.
pub fn ifft_complex(spec: &Spectrum) -> Result<Vec<Complex64>> {
    if spec.bins.is_empty() {
        return Err(Error::EmptyAudio);
    }
    let n = spec.bins.len();
    let mut data = spec.bins.clone();
    FftPlanner::new().plan_fft_inverse(n).process(&mut data);
    let scale = Complex64::new(1.0 / n as f64, 0.0);
    for c in data.iter_mut() {
        *c *= scale;
    }
    Ok(data)
}

/// Exponential sine sweep from `f_start` to `f_end`:
/// `x[n] = sin(2*pi*f_start*T/ln(r) * (r^(n/(N-1)) - 1))` with
/// `r = f_end/f_start`. Instantaneous frequency is `f_start` at the first
/// sample and `f_end` at the last.
pub fn chirp(duration_s: f64, f_start: f64, f_end: f64, sample_rate: u32) -> Result<AudioBuffer> {
    if duration_s <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "chirp duration must be positive, got {duration_s}"
        )));
    }
    let nyquist = sample_rate as f64 / 2.0;
    if !(0.0 < f_start && f_start < f_end && f_end < nyquist) {
        return Err(Error::InvalidArgument(format!(
            "chirp needs 0 < f_start < f_end < Nyquist, got ({f_start}, {f_end}) at {sample_rate} Hz"
        )));
    }
    let n = (duration_s * sample_rate as f64).round() as usize;
    if n < 2 {
        return Err(Error::InvalidArgument(
            "chirp too short for its sample rate".into(),
        ));
    }
    let r = f_end / f_start;
    let k = 2.0 * std::f64::consts::PI * f_start * duration_s / r.ln();
    let samples = (0..n)
        .map(|i| {
            let frac = i as f64 / (n - 1) as f64;
            (k * (r.powf(frac) - 1.0)).sin()
        })
        .collect();
    Ok(AudioBuffer::new(samples, sample_rate))
}

/// Normalized cross-correlation over all lags `-(len_b-1) ..= len_a-1`.
///
/// Coefficients are `sum_n a[n] b[n+lag] / sqrt(sum a^2 * sum b^2)`, so the
/// peak of `cross_correlation(x, x)` is exactly 1.0 at lag 0 and the
/// magnitude never exceeds 1 (Cauchy-Schwarz).
pub fn cross_correlation(a: &AudioBuffer, b: &AudioBuffer) -> Result<(Vec<i64>, Vec<f64>)> {
    a.check_non_empty()?;
    b.check_non_empty()?;
    if a.sample_rate != b.sample_rate {
        return Err(Error::SampleRateMismatch(a.sample_rate, b.sample_rate));
    }
    let (na, nb) = (a.samples.len(), b.samples.len());
    let full = na + nb - 1;

    // FFT-based correlation: corr(lag) = IFFT(FFT(a) * conj(FFT(b))).
    let mut fa: Vec<Complex64> = a
        .samples
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(full)
        .collect();
    let mut fb: Vec<Complex64> = b
        .samples
        .iter()
        .map(|&x| Complex64::new(x, 0.0))
        .chain(std::iter::repeat(Complex64::new(0.0, 0.0)))
        .take(full)
        .collect();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(full);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    for (x, y) in fa.iter_mut().zip(fb.iter()) {
        *x *= y.conj();
    }
    planner.plan_fft_inverse(full).process(&mut fa);

    let ea: f64 = a.samples.iter().map(|x| x * x).sum();
    let eb: f64 = b.samples.iter().map(|x| x * x).sum();
    let norm = (ea * eb).sqrt();
    let scale = if norm > 0.0 {
        1.0 / (norm * full as f64)
    } else {
        0.0
    };

    // Raw index i holds lag i for i < na and lag i - full for the tail.
    let mut lags = Vec::with_capacity(full);
    let mut coeffs = Vec::with_capacity(full);
    for lag in -(nb as i64 - 1)..=(na as i64 - 1) {
        let idx = if lag >= 0 { lag } else { lag + full as i64 } as usize;
        lags.push(lag);
        coeffs.push(fa[idx].re * scale);
    }
    Ok((lags, coeffs))
}

/// Frame-RMS amplitude envelope: 25 ms frames, 10 ms hop. Signals shorter
/// than one frame produce a single whole-signal frame.
pub(crate) fn rms_envelope(buf: &AudioBuffer, frame_ms: f64, hop_ms: f64) -> Vec<f64> {
    let frame = ((buf.sample_rate as f64 * frame_ms / 1000.0).round() as usize).max(1);
    let hop = ((buf.sample_rate as f64 * hop_ms / 1000.0).round() as usize).max(1);
    let n = buf.samples.len();
    if n <= frame {
        return vec![buf.rms()];
    }
    let mut env = Vec::new();
    let mut start = 0;
    while start + frame <= n {
        let ss: f64 = buf.samples[start..start + frame].iter().map(|s| s * s).sum();
        env.push((ss / frame as f64).sqrt());
        start += hop;
    }
    env
}
