//! Dynamic-time-warping distance between amplitude envelopes.

use crate::error::{Error, Result};
use crate::signal::{rms_envelope, AudioBuffer};

/// Classic DTW with absolute-difference local cost on frame-RMS amplitude
/// envelopes (25 ms frames, 10 ms hop), normalized by the sum of the two
/// envelope lengths. Symmetric, and zero on identical inputs.
pub fn dtw_distance(a: &AudioBuffer, b: &AudioBuffer) -> Result<f64> {
    if a.samples.is_empty() || b.samples.is_empty() {
        return Err(Error::EmptyAudio);
    }
    if a.sample_rate != b.sample_rate {
        return Err(Error::SampleRateMismatch(a.sample_rate, b.sample_rate));
    }
    let ea = rms_envelope(a, 25.0, 10.0);
    let eb = rms_envelope(b, 25.0, 10.0);
    Ok(dtw_cost(&ea, &eb) / (ea.len() + eb.len()) as f64)
}

fn dtw_cost(a: &[f64], b: &[f64]) -> f64 {
    let (n, m) = (a.len(), b.len());
    let mut prev = vec![f64::INFINITY; m + 1];
    let mut cur = vec![f64::INFINITY; m + 1];
    prev[0] = 0.0;
    for i in 1..=n {
        cur[0] = f64::INFINITY;
        for j in 1..=m {
            let cost = (a[i - 1] - b[j - 1]).abs();
            cur[j] = cost + prev[j].min(cur[j - 1]).min(prev[j - 1]);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m]
}
