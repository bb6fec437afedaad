/// Coefficients below this value are treated as exactly zero (lambda only).
pub const SNAP_TO_ZERO: f64 = 1e-6;

/// Multiplicative controller step:
/// `coeff * exp(gain * (observed - target) / max(target, 1))`, clamped to
/// `bounds`. A zero coefficient cannot grow multiplicatively, so it restarts
/// from the lower bound (or `SNAP_TO_ZERO` when that bound is zero) once the
/// signal exceeds its target.
pub fn coeff_update(coeff: f64, observed: f64, target: f64, gain: f64, bounds: (f64, f64)) -> f64 {
    let (lo, hi) = bounds;
    let step = (gain * (observed - target) / target.max(1.0)).exp();
    let base = if coeff == 0.0 && observed > target {
        if lo > 0.0 {
            lo
        } else {
            SNAP_TO_ZERO
        }
    } else {
        coeff
    };
    let next = (base * step).clamp(lo, hi);
    if next < SNAP_TO_ZERO && lo < SNAP_TO_ZERO {
        0.0
    } else {
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn on_target_is_fixed_point() {
        assert_eq!(coeff_update(0.7, 0.5, 0.5, 0.05, (1e-4, 10.0)), 0.7);
    }

    #[test]
    fn direction_follows_error() {
        assert!(coeff_update(1.0, 0.9, 0.5, 0.05, (1e-4, 10.0)) > 1.0);
        assert!(coeff_update(1.0, 0.1, 0.5, 0.05, (1e-4, 10.0)) < 1.0);
    }

    #[test]
    fn static_over_target_reaches_upper_bound() {
        // growth factor exp(0.05 * 1) per step; 1 -> 10 needs ln 10 / 0.05 < 47 steps
        let mut c = 1.0;
        let mut steps = 0;
        while c < 10.0 {
            c = coeff_update(c, 2.0, 1.0, 0.05, (1e-4, 10.0));
            steps += 1;
            assert!(steps <= 47);
        }
        assert_eq!(c, 10.0);
    }

    #[test]
    fn small_lambda_snaps_to_zero() {
        let c = coeff_update(1.02e-6, 0.0, 200.0, 0.05, (0.0, 10.0));
        assert_eq!(c, 0.0);
        assert_eq!(coeff_update(0.0, 10.0, 200.0, 0.05, (0.0, 10.0)), 0.0);
        assert!(coeff_update(0.0, 400.0, 200.0, 0.05, (0.0, 10.0)) > 0.0);
    }
}
