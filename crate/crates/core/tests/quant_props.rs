//! Property tests for the signed symmetric quantizer: grid membership,
//! ordering, symmetry, and the √d·Δ error bound under fitted scales.

use proptest::prelude::*;
use zsaq_core::quant::{
    check_error_bound, dequantize, fit_scale, quantize, quantize_dequantize, round_half_even,
    QuantScheme,
};
use zsaq_core::CoreError;

fn scheme() -> impl Strategy<Value = QuantScheme> {
    (2u8..=16, 1e-3f64..10.0).prop_map(|(bits, scale)| QuantScheme::new(bits, scale).unwrap())
}

fn finite_vec(max_len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0f64..100.0, 1..=max_len)
}

proptest! {
    #[test]
    fn codes_stay_inside_the_signed_range(sch in scheme(), xs in finite_vec(32)) {
        let q = quantize(&xs, &sch).unwrap();
        for &c in &q.codes {
            prop_assert!(i64::from(c) >= sch.qmin() && i64::from(c) <= sch.qmax());
        }
    }

    #[test]
    fn quantization_is_idempotent(sch in scheme(), xs in finite_vec(32)) {
        let q = quantize(&xs, &sch).unwrap();
        let again = quantize(&dequantize(&q), &sch).unwrap();
        prop_assert_eq!(q.codes, again.codes);
    }

    #[test]
    fn quantization_is_monotone(sch in scheme(), x in -100.0f64..100.0, y in -100.0f64..100.0) {
        let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
        let q = quantize(&[lo, hi], &sch).unwrap();
        prop_assert!(q.codes[0] <= q.codes[1]);
    }

    /// Negation flips the code exactly whenever neither sign clamps; the lone
    /// asymmetry of the signed grid is the unpaired endpoint −2^(b−1).
    #[test]
    fn symmetric_away_from_the_endpoint(sch in scheme(), x in -100.0f64..100.0) {
        let limit = sch.scale() * sch.qmax() as f64;
        prop_assume!(x.abs() <= limit);
        let q = quantize(&[x, -x], &sch).unwrap();
        prop_assert_eq!(q.codes[0], -q.codes[1]);
    }

    /// Fitted scales certify the lemma bound: ‖x̂ − x‖ ≤ √d·Δ/2 ≤ √d·Δ.
    #[test]
    fn fitted_scale_meets_the_grain_bound(xs in finite_vec(64), bits in 2u8..=16) {
        let sch = fit_scale(&xs, bits).unwrap();
        let back = quantize_dequantize(&xs, &sch).unwrap();
        let err: f64 = xs
            .iter()
            .zip(&back)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let check = check_error_bound(&xs, &sch).unwrap();
        let d = xs.len() as f64;
        let grain = sch.grain();
        prop_assert!((check.error - err).abs() <= 1e-12 * err.max(1.0));
        prop_assert!(err <= d.sqrt() * grain / 2.0 * (1.0 + 1e-12));
        prop_assert!((check.bound - d.sqrt() * grain).abs() <= 1e-12 * check.bound);
        prop_assert!((check.bound_tight - d.sqrt() * grain / 2.0).abs() <= 1e-12 * check.bound);
        // Per-coordinate half-grain bound behind the vector bound.
        for (a, b) in xs.iter().zip(&back) {
            prop_assert!((a - b).abs() <= grain / 2.0 * (1.0 + 1e-12));
        }
    }

    /// Inputs past the last grid cell saturate, so the certificate must refuse.
    #[test]
    fn bound_check_refuses_clamped_inputs(sch in scheme(), mag in 0.6f64..5.0) {
        let x = sch.scale() * (sch.qmax() as f64 + mag);
        let err = check_error_bound(&[x], &sch).unwrap_err();
        let is_clamp = matches!(err, CoreError::ClampActive { .. });
        prop_assert!(is_clamp, "expected a clamp refusal, got {err:?}");
        // quantize itself still succeeds — it saturates rather than refusing.
        let q = quantize(&[x], &sch).unwrap();
        prop_assert_eq!(i64::from(q.codes[0]), sch.qmax());
    }

    #[test]
    fn rounding_is_nearest_with_even_ties(x in -1e6f64..1e6) {
        let r = round_half_even(x);
        prop_assert_eq!(r.fract(), 0.0);
        prop_assert!((r - x).abs() <= 0.5);
    }

    #[test]
    fn exact_ties_round_to_even(n in -100_000i64..100_000) {
        let r = round_half_even(n as f64 + 0.5);
        prop_assert_eq!(r as i64 % 2, 0);
        prop_assert!((r - n as f64 - 0.5).abs() <= 0.5);
    }

    #[test]
    fn rounding_is_odd(x in -1e6f64..1e6) {
        prop_assert_eq!(round_half_even(-x), -round_half_even(x));
    }
}
