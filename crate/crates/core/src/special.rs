//! Special functions and constants.

use std::f64::consts::PI;

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Gamma function on the real line (poles return NaN/inf).
pub fn gamma(x: f64) -> f64 {
    statrs::function::gamma::gamma(x)
}

/// `cos(πα/2)` evaluated as `-sin(π(α-1)/2)` so that it keeps full relative
/// precision near α = 1.
pub fn cos_half_pi(alpha: f64) -> f64 {
    -(0.5 * PI * (alpha - 1.0)).sin()
}
