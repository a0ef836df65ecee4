//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("wav format error: {0}")]
    WavFormat(String),

    #[error("audio buffer is empty")]
    EmptyAudio,

    #[error("sample rate mismatch: {0} Hz vs {1} Hz")]
    SampleRateMismatch(u32, u32),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("tube spec out of range: {0}")]
    TubeOutOfRange(String),

    #[error("environment out of range: temperature {0} K not in [200, 350]")]
    TemperatureOutOfRange(f64),

    #[error(
        "degenerate two-tube spec (equal lengths and areas): model a single tube of length {0} m"
    )]
    DegenerateTwoTube(f64),

    #[error("resonance profile is empty: {0}")]
    EmptyProfile(String),

    #[error("no speech frames left after voice activity detection")]
    NoSpeech,

    #[error("too few voiced frames common to both signals: {0} < 5")]
    InsufficientVoicedOverlap(usize),

    #[error("design matrix is rank deficient (column {0})")]
    RankDeficient(usize),

    #[error("enrollment error: {0}")]
    Enrollment(String),

    #[error("unknown label: {0}")]
    UnknownLabel(String),

    #[error("adapter error: {0}")]
    Adapter(String),

    #[error("adapter timed out after {0:?}")]
    AdapterTimeout(std::time::Duration),

    #[error("adapter process closed its output stream")]
    AdapterClosed,

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
