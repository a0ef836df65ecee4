//! Tube-resonance voice transformation toolkit.
//!
//! Models open-ended tubes as band-pass filterbanks, searches tube
//! dimensions with differential evolution to steer a black-box
//! speaker-identification model toward a chosen target label, and
//! provides the validation and detection-side analyses (pitch-shift
//! regression, confidence gap, embedding similarity).
//!
//! Module map:
//! - [`signal`]: audio container, WAV I/O, FFT, resampling, chirp,
//!   cross-correlation, DTW distance.
//! - [`acoustics`]: tube resonance physics (fundamental frequency,
//!   quality factor, two-tube root finding, inverse design).
//! - [`filterbank`]: sum-of-band-pass transfer functions and
//!   frequency-domain filtering.
//! - [`pitch`]: sinusoidal pitch estimation, pitch-shift measurement,
//!   OLS regression study.
//! - [`asi`]: surrogate speaker-identification model and the adapter
//!   protocol for querying external models.
//! - [`attack`]: differential-evolution search over tube parameters
//!   plus the attack analysis statistics.
//! - [`synth`]: deterministic synthetic test signals and voices.
//! - [`fixture`]: the planted-tube benchmark scenario shared by the
//!   validation suites.

pub mod acoustics;
pub mod asi;
pub mod attack;
pub mod error;
pub mod filterbank;
pub mod fixture;
pub mod pitch;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
