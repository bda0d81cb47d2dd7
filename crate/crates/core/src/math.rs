//! Pure pricing kernels shared by quotes, strategies and verifiers.
//!
//! A quote is the triple `(p, base, cap)`: a per-unit price for gain, a
//! guaranteed base payment, and a payment ceiling. All kernels are total
//! except [`breakeven_gain`], which is undefined when the buyer's unit value
//! does not exceed the unit price.

use crate::scalar::Real;

/// Settled payment for a realized gain: `min(max(base, base + p*gain), cap)`.
pub fn payment<S: Real>(p: S, base: S, cap: S, gain: S) -> S {
    (base + p * gain).max(base).min(cap)
}

/// Buyer's net profit before bargaining costs: `unit_value * gain - payment`.
pub fn task_net_profit<S: Real>(unit_value: S, gain: S, payment: S) -> S {
    unit_value * gain - payment
}

/// Seller's distance from the best obtainable payment: `cap - payment`.
/// Zero exactly when the gain reaches the quote's target.
pub fn data_objective_gap<S: Real>(p: S, base: S, cap: S, gain: S) -> S {
    (cap - payment(p, base, cap, gain)).abs()
}

/// Gain at which the payment rule saturates the cap: `(cap - base) / p`.
pub fn target_gain<S: Real>(p: S, base: S, cap: S) -> S {
    (cap - base) / p
}

/// Smallest gain with non-negative buyer profit in the linear payment region:
/// `base / (unit_value - p)`. `None` when `unit_value <= p`.
pub fn breakeven_gain<S: Real>(unit_value: S, p: S, base: S) -> Option<S> {
    if unit_value <= p {
        return None;
    }
    Some(base / (unit_value - p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn payment_clamps_to_both_ends() {
        // linear region
        assert!((payment(10.0f64, 1.2, 2.2, 0.05) - 1.7).abs() < 1e-12);
        // saturated at the cap
        assert_eq!(payment(10.0f64, 1.2, 2.2, 0.1), 2.2);
        assert_eq!(payment(10.0f64, 1.2, 2.2, 0.3), 2.2);
        // floored at the base for non-positive gain
        assert_eq!(payment(10.0f64, 1.2, 2.2, -0.1), 1.2);
        assert_eq!(payment(10.0f64, 1.2, 2.2, 0.0), 1.2);
    }

    #[test]
    fn payment_is_monotone_in_gain() {
        let mut last = f64::NEG_INFINITY;
        for i in -50..=50 {
            let g = i as f64 * 0.01;
            let v = payment(10.0f64, 1.2, 2.2, g);
            assert!(v >= last);
            assert!((1.2..=2.2).contains(&v));
            last = v;
        }
    }

    #[test]
    fn net_profit_conserves_value() {
        let (u, g) = (50.0, 0.1);
        let pay = payment(10.0f64, 1.2, 2.2, g);
        let np = task_net_profit(u, g, pay);
        assert_eq!(np + pay, u * g);
        assert!((np - 2.8).abs() < 1e-12);
    }

    #[test]
    fn gap_measures_distance_to_cap() {
        assert!((data_objective_gap(10.0f64, 1.2, 2.2, 0.05) - 0.5).abs() < 1e-12);
        assert!(data_objective_gap(10.0f64, 1.2, 2.2, 0.1).abs() < 1e-12);
        // overshooting the target leaves no gap: the max payment is attained
        assert_eq!(data_objective_gap(10.0f64, 1.2, 2.2, 0.3), 0.0);
        assert!((data_objective_gap(10.0f64, 1.2, 2.2, -1.0) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn target_gain_inverts_the_cap() {
        assert!((target_gain(10.0f64, 1.2, 2.2) - 0.1).abs() < 1e-12);
        assert!((target_gain(9.0f64, 1.0, 2.35) - 0.15).abs() < 1e-12);
    }

    #[test]
    fn breakeven_matches_profit_sign() {
        let be = breakeven_gain(50.0f64, 10.0, 1.2).unwrap();
        assert!((be - 0.03).abs() < 1e-12);
        // profit is non-negative exactly from the breakeven up, within the
        // linear region of the payment rule
        for i in 0..100 {
            let g = i as f64 * 0.001;
            let np = task_net_profit(50.0f64, g, payment(10.0f64, 1.2, 2.2, g));
            if g < be {
                assert!(np < 0.0, "g={g} np={np}");
            } else if g <= target_gain(10.0f64, 1.2, 2.2) {
                assert!(np >= 0.0, "g={g} np={np}");
            }
        }
        assert_eq!(breakeven_gain(10.0f64, 10.0, 1.2), None);
        assert_eq!(breakeven_gain(9.0f64, 10.0, 1.2), None);
    }

    #[test]
    fn kernels_hold_at_reduced_precision() {
        assert!((payment(10.0f32, 1.2, 2.2, 0.05) - 1.7).abs() < 1e-6);
        assert!((target_gain(10.0f32, 1.2, 2.2) - 0.1).abs() < 1e-6);
        assert!((breakeven_gain(50.0f32, 10.0, 1.2).unwrap() - 0.03).abs() < 1e-6);
        let np = task_net_profit(50.0f32, 0.1, payment(10.0f32, 1.2, 2.2, 0.1));
        assert!((np - 2.8).abs() < 1e-6);
    }
}
