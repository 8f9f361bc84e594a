//! Signed symmetric quantization.
//!
//! A weight vector x ∈ ℝ^d is mapped to integer codes on the signed grid
//! {−2^(b−1), …, 2^(b−1)−1} by x̂ = s · clamp(round(x/s), qmin, qmax), with
//! round-half-to-even tie breaking. The positive scale s is the quantization
//! grain Δ: as long as no coordinate is clamped, |x_i − x̂_i| ≤ Δ/2 and so
//! ‖x − x̂‖₂ ≤ √d·Δ/2 ≤ √d·Δ — the quantity the optimizer's convergence
//! floor is built from. [`check_error_bound`] verifies exactly that, and
//! refuses to certify the bound when clamping was active.

use crate::error::{CoreError, Result};
use crate::real::{lit, norm, Real};

/// Bit width and scale of one symmetric quantizer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuantScheme<T: Real = f64> {
    bits: u8,
    scale: T,
}

impl<T: Real> QuantScheme<T> {
    /// Validates the width (2..=32 bits) and the scale (positive, finite).
    pub fn new(bits: u8, scale: T) -> Result<Self> {
        if !(2..=32).contains(&bits) {
            return Err(CoreError::BadBits { bits });
        }
        if !(scale.is_finite() && scale > T::zero()) {
            return Err(CoreError::BadScale {
                scale: scale.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self { bits, scale })
    }

    pub fn bits(&self) -> u8 {
        self.bits
    }

    pub fn scale(&self) -> T {
        self.scale
    }

    /// The quantization grain Δ (the gap between adjacent grid levels),
    /// which for this scheme is the scale itself.
    pub fn grain(&self) -> T {
        self.scale
    }

    /// Smallest representable code, −2^(b−1).
    pub fn qmin(&self) -> i64 {
        -(1i64 << (self.bits - 1))
    }

    /// Largest representable code, 2^(b−1)−1.
    pub fn qmax(&self) -> i64 {
        (1i64 << (self.bits - 1)) - 1
    }
}

/// Integer codes plus the scheme that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedVector<T: Real = f64> {
    pub codes: Vec<i32>,
    pub scheme: QuantScheme<T>,
}

impl<T: Real> QuantizedVector<T> {
    pub fn dim(&self) -> usize {
        self.codes.len()
    }
}

/// Rounds to the nearest integer, breaking exact halves toward the even
/// neighbor (banker's rounding, the IEEE default).
pub fn round_half_even<T: Real>(x: T) -> T {
    let f = x.floor();
    let diff = x - f;
    let half = lit::<T>(0.5);
    if diff > half {
        f + T::one()
    } else if diff < half {
        f
    } else {
        // Exactly halfway: keep f when it is even.
        let half_f = f / lit::<T>(2.0);
        if half_f.floor() == half_f {
            f
        } else {
            f + T::one()
        }
    }
}

/// Fits the absmax scale s = max|x| / (2^(b−1)−1), so the largest-magnitude
/// coordinate lands on the edge of the grid. An all-zero input gets the
/// neutral scale 1.
pub fn fit_scale<T: Real>(xs: &[T], bits: u8) -> Result<QuantScheme<T>> {
    if !(2..=32).contains(&bits) {
        return Err(CoreError::BadBits { bits });
    }
    let mut absmax = T::zero();
    for (i, &x) in xs.iter().enumerate() {
        if !x.is_finite() {
            return Err(CoreError::NonFinite {
                context: format!("fit_scale input[{i}]"),
            });
        }
        absmax = absmax.max(x.abs());
    }
    if absmax == T::zero() {
        return QuantScheme::new(bits, T::one());
    }
    let qmax = lit::<T>(((1i64 << (bits - 1)) - 1) as f64);
    QuantScheme::new(bits, absmax / qmax)
}

fn code_of<T: Real>(x: T, scheme: &QuantScheme<T>) -> i32 {
    let r = round_half_even(x / scheme.scale());
    // An overflowing ratio saturates toward the matching end of the grid.
    let raw = r.to_i64().unwrap_or(if r > T::zero() { i64::MAX } else { i64::MIN });
    raw.clamp(scheme.qmin(), scheme.qmax()) as i32
}

/// Quantizes a vector to integer codes under the given scheme.
///
/// Rejects non-finite inputs; clamping out-of-range values is silent here
/// (use [`check_error_bound`] to detect it).
pub fn quantize<T: Real>(xs: &[T], scheme: &QuantScheme<T>) -> Result<QuantizedVector<T>> {
    let mut codes = Vec::with_capacity(xs.len());
    for (i, &x) in xs.iter().enumerate() {
        if !x.is_finite() {
            return Err(CoreError::NonFinite {
                context: format!("quantize input[{i}]"),
            });
        }
        codes.push(code_of(x, scheme));
    }
    Ok(QuantizedVector {
        codes,
        scheme: *scheme,
    })
}

/// Maps codes back to real values, x̂_i = s · c_i.
pub fn dequantize<T: Real>(qv: &QuantizedVector<T>) -> Vec<T> {
    let s = qv.scheme.scale();
    qv.codes.iter().map(|&c| s * lit::<T>(c as f64)).collect()
}

/// One-shot quantize-then-dequantize.
pub fn quantize_dequantize<T: Real>(xs: &[T], scheme: &QuantScheme<T>) -> Result<Vec<T>> {
    Ok(dequantize(&quantize(xs, scheme)?))
}

/// Result of a quantization-error audit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheck<T: Real = f64> {
    /// ‖x − x̂‖₂.
    pub error: T,
    /// The loose certified bound √d·Δ.
    pub bound: T,
    /// The tight certified bound √d·Δ/2.
    pub bound_tight: T,
}

/// Measures ‖x − x̂‖₂ and certifies it against √d·Δ (and the tighter
/// √d·Δ/2). Fails with [`CoreError::ClampActive`] when some coordinate fell
/// outside the representable range, because then no per-coordinate Δ/2
/// guarantee exists.
pub fn check_error_bound<T: Real>(xs: &[T], scheme: &QuantScheme<T>) -> Result<BoundCheck<T>> {
    let qv = quantize(xs, scheme)?;
    let s = scheme.scale();
    for (i, &x) in xs.iter().enumerate() {
        let r = round_half_even(x / s);
        let in_range = r >= lit::<T>(scheme.qmin() as f64) && r <= lit::<T>(scheme.qmax() as f64);
        if !in_range {
            return Err(CoreError::ClampActive {
                index: i,
                magnitude: x.abs().to_f64().unwrap_or(f64::NAN),
                limit: (s * lit::<T>(scheme.qmax() as f64)).to_f64().unwrap_or(f64::NAN),
            });
        }
    }
    let xhat = dequantize(&qv);
    let diff: Vec<T> = xs.iter().zip(&xhat).map(|(&x, &y)| x - y).collect();
    let sqrt_d = lit::<T>(xs.len() as f64).sqrt();
    Ok(BoundCheck {
        error: norm(&diff),
        bound: sqrt_d * scheme.grain(),
        bound_tight: sqrt_d * scheme.grain() / lit::<T>(2.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn approx(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn round_half_even_breaks_ties_to_even() {
        assert_eq!(round_half_even(2.5f64), 2.0);
        assert_eq!(round_half_even(3.5f64), 4.0);
        assert_eq!(round_half_even(-2.5f64), -2.0);
        assert_eq!(round_half_even(-0.5f64), 0.0);
        assert_eq!(round_half_even(0.5f64), 0.0);
        assert_eq!(round_half_even(1.3f64), 1.0);
        assert_eq!(round_half_even(-1.7f64), -2.0);
    }

    #[test]
    fn four_bit_example_clamps_both_ends() {
        let scheme = QuantScheme::new(4, 0.1).unwrap();
        let qv = quantize(&[-1.0, 0.13, 0.9], &scheme).unwrap();
        assert_eq!(qv.codes, vec![-8, 1, 7]);
        let deq = dequantize(&qv);
        assert!(approx(deq[0], -0.8) && approx(deq[1], 0.1) && approx(deq[2], 0.7));
    }

    #[test]
    fn two_bit_example_uses_the_asymmetric_grid() {
        // 2-bit grid is {−2, −1, 0, 1}.
        let scheme = QuantScheme::new(2, 1.0).unwrap();
        let qv = quantize(&[-2.4, 0.6, 3.0], &scheme).unwrap();
        assert_eq!(qv.codes, vec![-2, 1, 1]);
        assert_eq!(dequantize(&qv), vec![-2.0, 1.0, 1.0]);
    }

    #[test]
    fn absmax_scale_fitting() {
        let s = fit_scale(&[-3.0, 1.5], 4).unwrap();
        assert_eq!(s.scale(), 3.0 / 7.0);
        // All-zero input falls back to the neutral scale.
        assert_eq!(fit_scale(&[0.0, 0.0], 8).unwrap().scale(), 1.0);
        // 2-bit absmax: qmax = 1, so the scale equals the absmax.
        assert_eq!(fit_scale(&[1.0], 2).unwrap().scale(), 1.0);
    }

    #[test]
    fn fit_scale_rejects_bad_inputs() {
        assert!(matches!(
            fit_scale(&[1.0], 1),
            Err(CoreError::BadBits { bits: 1 })
        ));
        assert!(matches!(
            fit_scale(&[1.0], 33),
            Err(CoreError::BadBits { bits: 33 })
        ));
        assert!(matches!(
            fit_scale(&[f64::NAN], 4),
            Err(CoreError::NonFinite { .. })
        ));
        assert!(QuantScheme::new(4, 0.0).is_err());
        assert!(QuantScheme::new(4, f64::INFINITY).is_err());
    }

    #[test]
    fn quantization_is_idempotent() {
        let scheme = fit_scale(&[-0.31, 0.7, 0.05, -0.66], 4).unwrap();
        let once = quantize_dequantize(&[-0.31, 0.7, 0.05, -0.66], &scheme).unwrap();
        let twice = quantize_dequantize(&once, &scheme).unwrap();
        assert_eq!(once, twice);
    }

    #[test]
    fn error_bound_certified_when_no_clamp() {
        let scheme = QuantScheme::new(2, 1.0).unwrap();
        let check = check_error_bound(&[0.5], &scheme).unwrap();
        assert_eq!(check.error, 0.5);
        assert_eq!(check.bound, 1.0);
        assert_eq!(check.bound_tight, 0.5);
        assert!(check.error <= check.bound_tight);
    }

    #[test]
    fn error_bound_refuses_clamped_inputs() {
        let scheme = QuantScheme::new(2, 1.0).unwrap();
        let err = check_error_bound(&[3.0], &scheme).unwrap_err();
        assert!(matches!(err, CoreError::ClampActive { index: 0, .. }));
        assert!(err.to_string().contains("bound not guaranteed"));
    }

    #[test]
    fn fitted_scale_never_clamps_its_own_input() {
        let xs = [-3.0, 1.5, 0.2, 2.9];
        let scheme = fit_scale(&xs, 4).unwrap();
        let check = check_error_bound(&xs, &scheme).unwrap();
        assert!(check.error <= check.bound_tight);
    }

    #[test]
    fn thirty_two_bit_grid_is_exact_i32() {
        let scheme = QuantScheme::new(32, 1.0).unwrap();
        assert_eq!(scheme.qmin(), i32::MIN as i64);
        assert_eq!(scheme.qmax(), i32::MAX as i64);
        let qv = quantize(&[1e12, -1e12], &scheme).unwrap();
        assert_eq!(qv.codes, vec![i32::MAX, i32::MIN]);
    }
}
