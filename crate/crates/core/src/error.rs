//! Error type shared by the numeric core.

use thiserror::Error;

/// Errors produced by tensor algebra, quantization, and the optimizers.
#[derive(Debug, Error)]
pub enum CoreError {
    /// Two tensors (or a tensor and an expected shape) do not line up.
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },

    /// `backward` was called on a node that is not a scalar.
    #[error("backward requires a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: Vec<usize> },

    /// A non-finite value (NaN or ±∞) appeared where finiteness is required.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Bit width outside the supported 2..=32 range.
    #[error("bit width must be in 2..=32, got {bits}")]
    BadBits { bits: u8 },

    /// Quantization scale must be strictly positive and finite.
    #[error("quantization scale must be positive and finite, got {scale}")]
    BadScale { scale: f64 },

    /// The √d·Δ quantization-error bound does not apply because clamping
    /// was active (some input exceeded the representable range).
    #[error("clamp active at index {index} (|x| = {magnitude} exceeds the representable range {limit}): error bound not guaranteed")]
    ClampActive {
        index: usize,
        magnitude: f64,
        limit: f64,
    },

    /// Dimension mismatch between vectors that must agree.
    #[error("dimension mismatch in {op}: {detail}")]
    DimMismatch { op: &'static str, detail: String },

    /// A configuration or argument value is invalid.
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// An iterative solver hit its iteration cap before converging.
    #[error("{what} did not converge within {cap} iterations (residual {residual})")]
    NoConvergence {
        what: &'static str,
        cap: usize,
        residual: f64,
    },
}

/// Convenience alias used throughout the crate.
pub type Result<T, E = CoreError> = std::result::Result<T, E>;
