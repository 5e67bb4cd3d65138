//! Standard Gaussian distribution function.

use libm::erfc;

/// Φ(x) = P[N(0,1) ≤ x], computed through `erfc` so both tails keep
/// full relative precision.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// φ(x) = (2π)^{-1/2} exp(-x²/2).
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}
