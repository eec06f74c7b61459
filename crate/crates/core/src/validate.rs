//! Numeric domain predicates used by parameter validation. All reject NaN
//! and infinities.

pub(crate) fn positive_finite(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

pub(crate) fn non_negative_finite(x: f64) -> bool {
    x.is_finite() && x >= 0.0
}

pub(crate) fn negative_finite(x: f64) -> bool {
    x.is_finite() && x < 0.0
}

pub(crate) fn in_unit_interval_half_open(x: f64) -> bool {
    // (0, 1]
    x.is_finite() && x > 0.0 && x <= 1.0
}
