//! Zero-shot sharpness-aware quantization (ZSAQ) at desk scale.
//!
//! This crate implements a data-free quantization workflow as a two-player
//! game: a noise-to-embedding **generator** is trained by stochastic gradient
//! ascent to produce inputs on which a frozen full-precision **teacher** and a
//! low-bit **student** disagree the most, while the student is trained by
//! sharpness-aware minimization (SAM) to close that gap. The pieces:
//!
//! * [`tensor`] / [`tape`] — a minimal dense-tensor engine with reverse-mode
//!   automatic differentiation: just enough primitives for small MLPs, a
//!   softmax head, and an MSE divergence.
//! * [`quant`] — signed symmetric quantization on the integer grid
//!   {−2^(b−1), …, 2^(b−1)−1} with absmax scale fitting and the √d·Δ
//!   quantization-error bound check.
//! * [`models`] — the three networks: generator G_θ, teacher P, and the
//!   quantized student Q(ω̂), plus the divergence and weight interpolation.
//! * [`samsga`] — the SAM-SGA optimizer: a sharpness-aware descent step on
//!   the quantized student alternating with an ascent step on the generator,
//!   with quantize-after-update and ablation switches.
//! * [`theory`] — synthetic minimax problems with closed-form primal
//!   functions Φ(ω) = max_θ f(ω, θ), used to measure the optimizer's
//!   O(1/√T) convergence behaviour, the Polyak–Łojasiewicz condition, and
//!   the O(dΔ²) quantization floor of the convergence bounds.
//! * [`pretrain`] / [`distill`] — the desk-scale task: a Gaussian-blobs
//!   teacher and the distillation game wired up as a minimax problem.
//!
//! The numeric core is generic over the scalar type via [`Real`] (`f32` or
//! `f64`); every public type defaults its scalar parameter to `f64`, which is
//! what serialization and the experiment driver pin.
//!
//! Determinism is a contract, not an accident: every random draw derives from
//! a counter-based ChaCha stream keyed by `(seed, domain, iteration, index)`
//! (see [`rng`]), so a `(config, seed)` pair reproduces every artifact
//! byte-for-byte regardless of thread scheduling.

pub mod distill;
pub mod error;
pub mod models;
pub mod param;
pub mod pretrain;
pub mod quant;
pub mod real;
pub mod rng;
pub mod samsga;
pub mod tape;
pub mod tensor;
pub mod theory;

pub use error::{CoreError, Result};
pub use param::ParamVector;
pub use quant::{QuantScheme, QuantizedVector};
pub use real::Real;
pub use tape::Tape;
pub use tensor::Tensor;
