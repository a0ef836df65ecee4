//! Band-limited sample-rate conversion via Kaiser-windowed sinc
//! interpolation.

use crate::error::{Error, Result};
use crate::signal::AudioBuffer;

// 201-tap kernel with a Kaiser window designed for ~80 dB stopband
// attenuation; passband edge at 0.9x the lower Nyquist leaves the
// transition band inside the guard region.
const HALF_TAPS: i64 = 100;
const KAISER_BETA: f64 = 7.857;

/// Resample to `target_rate` with a windowed-sinc low-pass kernel.
/// Output length is `round(len * target / source)`. Identical rates
/// return the input unchanged.
pub fn resample(buf: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(Error::InvalidArgument("target_rate must be positive".into()));
    }
    if buf.samples.is_empty() {
        return Err(Error::EmptyAudio);
    }
    if target_rate == buf.sample_rate {
        return Ok(buf.clone());
    }

    let src = buf.sample_rate as f64;
    let tgt = target_rate as f64;
    let ratio = tgt / src;
    let out_len = ((buf.samples.len() as f64 * ratio).round() as usize).max(1);

    // Cutoff in cycles per source sample: 0.45 of the lower Nyquist.
    let cutoff = 0.45 * ratio.min(1.0);
    let window_norm = bessel_i0(KAISER_BETA);

    let x = &buf.samples;
    let n = x.len() as i64;
    let mut out = Vec::with_capacity(out_len);
    for m in 0..out_len {
        let center = m as f64 / ratio;
        let base = center.floor() as i64;
        let mut acc = 0.0;
        for k in (base - HALF_TAPS)..=(base + HALF_TAPS + 1) {
            if k < 0 || k >= n {
                continue;
            }
            let t = center - k as f64;
            let u = t / (HALF_TAPS as f64 + 1.0);
            if u.abs() >= 1.0 {
                continue;
            }
            let window = bessel_i0(KAISER_BETA * (1.0 - u * u).sqrt()) / window_norm;
            acc += x[k as usize] * 2.0 * cutoff * sinc(2.0 * cutoff * t) * window;
        }
        out.push(acc);
    }
    Ok(AudioBuffer::new(out, target_rate))
}

fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Modified Bessel function of the first kind, order zero (series form).
fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let half_x = x / 2.0;
    for k in 1..40 {
        term *= (half_x / k as f64) * (half_x / k as f64);
        sum += term;
        if term < 1e-16 * sum {
            break;
        }
    }
    sum
}
