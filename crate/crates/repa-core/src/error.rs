//! Crate error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An event is inconsistent with the graph state it is applied to.
    #[error("invalid event at step {index}: {reason}")]
    InvalidEvent { index: usize, reason: String },

    /// A parameter violates its domain (simplex, interval, positivity).
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    /// The score equation has the same sign at both bracket ends, so the
    /// maximizer sits on a boundary rather than at an interior root.
    #[error("no root in bracket: score is {f_lo:.3e} at the lower end and {f_hi:.3e} at the upper end")]
    NoRoot { f_lo: f64, f_hi: f64 },

    /// The score equation vanishes identically; the likelihood carries no
    /// information about the offset parameter.
    #[error("flat likelihood: score is identically zero over the bracket")]
    FlatScore,

    /// Input too degenerate for the requested computation.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    /// A numerical quantity became non-finite.
    #[error("non-finite {what} at iteration {at}")]
    NonFinite { what: &'static str, at: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
