//! Thin wrappers over the special functions the inference code leans on.

pub use statrs::function::gamma::{digamma, ln_gamma};

/// Natural log of the beta function.
pub fn ln_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `w * ln(x)` with the convention that zero weight contributes zero, even
/// against `ln(0)`. Positive weight against `x = 0` yields `-inf`.
pub fn weighted_ln(w: f64, x: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        w * x.ln()
    }
}
