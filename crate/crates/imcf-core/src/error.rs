//! Crate-wide error type. Variants map onto the CLI exit classes: config and
//! format problems exit 2, flow breakdown exits 3, certificate failures exit 1
//! (the latter are report entries, not errors).

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Height field is not strictly positive; the graph left the model domain.
    #[error("non-positive height y={value} at flat index {index}")]
    NonPositiveHeight { index: usize, value: f64 },

    /// The speed denominator vH dropped to or below zero; the flow is no
    /// longer parabolic there. `stage` is the integrator stage (1-based)
    /// that hit it, 0 when detected outside a step.
    #[error("lost mean convexity at flat index {index} (stage {stage})")]
    LostMeanConvexity { index: usize, stage: u8 },

    /// An integrator stage produced y <= 0.
    #[error("height became non-positive at flat index {index} (stage {stage})")]
    HeightNonPositive { index: usize, stage: u8 },

    #[error("invalid grid: {reason}")]
    InvalidGrid { reason: String },

    #[error("invalid flow configuration: {reason}")]
    InvalidConfig { reason: String },

    /// Constructed initial data violates admissibility (y > 0 and H > 0).
    #[error("inadmissible initial data: {condition} at flat index {index}")]
    InadmissibleInitialData { condition: String, index: usize },

    /// Residual or tracer checks need more stored states than the trajectory has.
    #[error("need at least {needed} snapshots, trajectory has {got}")]
    InsufficientSnapshots { needed: usize, got: usize },

    /// Snapshot times are not uniformly spaced (required by the residual checker).
    #[error("snapshots are not uniformly spaced: spacing {got} at interval {interval}, expected {expected}")]
    NonUniformSampling {
        interval: usize,
        expected: f64,
        got: f64,
    },

    #[error("comparison solution exceeded {bound} at t={t}")]
    OdeBlowup { t: f64, bound: f64 },

    #[error("invalid time grid for comparison: {reason}")]
    InvalidTimeGrid { reason: String },

    #[error("invalid initial statistics: {reason}")]
    InvalidStats { reason: String },

    #[error("unknown monitor {name:?}")]
    UnknownMonitor { name: String },

    /// Rate fitting needs at least `needed` usable points in the window.
    #[error("decay fit needs {needed} points in window, found {got}")]
    InsufficientPoints { needed: usize, got: usize },

    /// Line-level config syntax problem (bad key, bad literal, duplicate key).
    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    /// Structurally parsed config violates invariants; all violations listed.
    #[error("invalid configuration:\n{}", violations.join("\n"))]
    Validation { violations: Vec<String> },

    #[error("malformed {what}: {reason}")]
    Format { what: String, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
