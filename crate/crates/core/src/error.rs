use thiserror::Error;

/// Errors shared across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index out of range: {0}")]
    Index(String),

    /// Malformed container file. `offset` is the byte position at which
    /// parsing gave up.
    #[error("parse error at byte {offset}: {msg}")]
    Parse { offset: u64, msg: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Raised by the detector when no node survives the thresholds.
    #[error("no discriminators at these thresholds")]
    EmptyDiscriminator,

    /// Segment-walk bisection exceeded its interval budget; reports the
    /// deepest interval still under refinement.
    #[error("bisection budget exceeded near t in [{t_lo}, {t_hi}]")]
    Budget { t_lo: f64, t_hi: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
