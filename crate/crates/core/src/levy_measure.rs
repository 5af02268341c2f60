//! The two-sided power-law Lévy measure
//!
//! ```text
//! ν(dz) = C₊ |z|^{-1-α} dz  (z > 0),    C₋ |z|^{-1-α} dz  (z < 0),
//! C₊ = K_α (1+β)/2,  C₋ = K_α (1-β)/2,  K_α = α(1-α) / (Γ(2-α) cos(πα/2)),
//! ```
//!
//! its closed-form moments, and a quadrature oracle that recomputes them
//! without using the closed forms.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::quadrature::{self, Estimate, Tolerance};
use crate::special::{cos_half_pi, gamma};

/// Smallest accepted stability index.
pub const ALPHA_MIN: f64 = 1.0 + 1e-6;
/// Largest accepted stability index.
pub const ALPHA_MAX: f64 = 2.0 - 1e-9;

const ALPHA_LEGAL: &str = "[1 + 1e-6, 2 - 1e-9] (open interval (1, 2))";

/// Analytic remainder below which the quadrature oracle truncates its range.
const QUAD_TRUNCATION: f64 = 1e-12;

/// Stability index α ∈ (1, 2).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct StabilityIndex(f64);

impl StabilityIndex {
    pub fn new(value: f64) -> Result<Self> {
        if !(ALPHA_MIN..=ALPHA_MAX).contains(&value) {
            return Err(Error::domain("alpha", value, ALPHA_LEGAL));
        }
        Ok(StabilityIndex(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Skewness β ∈ [-1, 1].
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Skewness(f64);

impl Skewness {
    pub fn new(value: f64) -> Result<Self> {
        if !(-1.0..=1.0).contains(&value) {
            return Err(Error::domain("beta", value, "[-1, 1]"));
        }
        Ok(Skewness(value))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Which part of the real line a moment integral covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    /// `0 < |z| <= delta`
    Inner,
    /// `|z| > delta`
    Outer,
}

/// `K_α / (2-α) = α(1-α) / (Γ(3-α) cos(πα/2))`.
///
/// Uses `Γ(3-α) = (2-α) Γ(2-α)` so that nothing cancels as α → 2.
fn kappa_over_gap(alpha: f64) -> f64 {
    alpha * (1.0 - alpha) / (gamma(3.0 - alpha) * cos_half_pi(alpha))
}

/// `-1 / (Γ(-α) cos(πα/2))`, the total Lévy density constant of a unit-scale
/// stable law. Equal to `K_α` through `Γ(2-α) = α(α-1) Γ(-α)`.
pub fn unit_scale_stable_normalization(alpha: f64) -> f64 {
    -1.0 / (gamma(-alpha) * cos_half_pi(alpha))
}

/// One-dimensional Lévy measure with its derived constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LevyMeasureSpec {
    alpha: StabilityIndex,
    beta: Skewness,
    kappa: f64,
    kappa_over_gap: f64,
    c_plus: f64,
    c_minus: f64,
}

impl LevyMeasureSpec {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let alpha = StabilityIndex::new(alpha)?;
        let beta = Skewness::new(beta)?;
        Ok(Self::from_parts(alpha, beta))
    }

    pub fn from_parts(alpha: StabilityIndex, beta: Skewness) -> Self {
        let a = alpha.value();
        let b = beta.value();
        let kog = kappa_over_gap(a);
        let kappa = kog * (2.0 - a);
        LevyMeasureSpec {
            alpha,
            beta,
            kappa,
            kappa_over_gap: kog,
            c_plus: 0.5 * kappa * (1.0 + b),
            c_minus: 0.5 * kappa * (1.0 - b),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.value()
    }

    pub fn beta(&self) -> f64 {
        self.beta.value()
    }

    /// `K_α = C₊ + C₋`.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn c_plus(&self) -> f64 {
        self.c_plus
    }

    pub fn c_minus(&self) -> f64 {
        self.c_minus
    }

    /// Lévy density at `z != 0`.
    pub fn density(&self, z: f64) -> f64 {
        let c = if z > 0.0 { self.c_plus } else { self.c_minus };
        c * z.abs().powf(-1.0 - self.alpha())
    }

    /// `∫_{|z|≤δ} z² ν(dz) = K_α δ^{2-α} / (2-α)`.
    pub fn truncated_second_moment(&self, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        Ok(self.kappa_over_gap * delta.powf(2.0 - self.alpha()))
    }

    /// `∫_{|z|>δ} |z|^ϑ ν(dz) = K_α δ^{ϑ-α} / (α-ϑ)`; ϑ = 0 is the tail mass.
    pub fn tail_moment(&self, delta: f64, vartheta: f64) -> Result<f64> {
        check_delta(delta)?;
        let a = self.alpha();
        if vartheta >= a {
            return Err(Error::DivergentIntegral { power: vartheta, alpha: a });
        }
        Ok(self.kappa * delta.powf(vartheta - a) / (a - vartheta))
    }

    /// Signed tail mean `∫_{|z|>δ} z ν(dz) = K_α β δ^{1-α} / (α-1)`.
    pub fn tail_mean(&self, delta: f64) -> Result<f64> {
        check_delta(delta)?;
        let a = self.alpha();
        Ok(self.kappa * self.beta() * delta.powf(1.0 - a) / (a - 1.0))
    }

    /// Quadrature of `|z|^power` (or `z |z|^{power-1}` when `signed`) against
    /// the density over the inner or outer region.
    ///
    /// Each half-line is integrated in `u = ln|z|`, where the integrand is
    /// `C e^{(power-α)u}`. The unbounded end is cut where the analytic
    /// remainder drops below 1e-12 and that remainder is added back.
    pub fn quadrature_moment(&self, delta: f64, power: f64, region: Region, signed: bool) -> Result<Estimate> {
        check_delta(delta)?;
        let a = self.alpha();
        let rate = power - a;
        match region {
            Region::Inner if rate <= 0.0 => return Err(Error::DivergentIntegral { power, alpha: a }),
            Region::Outer if rate >= 0.0 => return Err(Error::DivergentIntegral { power, alpha: a }),
            _ => {}
        }
        let log_delta = delta.ln();
        let half_line = |c: f64| -> Result<Estimate> {
            if c == 0.0 {
                return Ok(Estimate::ZERO);
            }
            // remainder beyond cut U: c e^{rate U} / |rate| = QUAD_TRUNCATION
            let cut = (QUAD_TRUNCATION * rate.abs() / c).ln() / rate;
            let (lo, hi) = match region {
                Region::Inner => (cut.min(log_delta - 1.0), log_delta),
                Region::Outer => (log_delta, cut.max(log_delta + 1.0)),
            };
            let tol = Tolerance {
                abs: 1e-300,
                rel: 1e-13,
                max_intervals: 4000,
            };
            let body = quadrature::integrate(|u| c * (rate * u).exp(), lo, hi, tol)?;
            let far_end = match region {
                Region::Inner => lo,
                Region::Outer => hi,
            };
            let remainder = c * (rate * far_end).exp() / rate.abs();
            Ok(Estimate {
                value: body.value + remainder,
                error: body.error,
            })
        };
        let plus = half_line(self.c_plus)?;
        let minus = half_line(self.c_minus)?;
        Ok(if signed { plus - minus } else { plus + minus })
    }

    /// Characteristic exponent of the process whose small jumps (|z| ≤ 1) are
    /// compensated: `E exp(iξL_t) = exp(t ψ(ξ))` with
    /// `ψ(ξ) = -|ξ|^α (1 - iβ sign(ξ) tan(πα/2)) + iξ m₁`, `m₁ = ∫_{|z|>1} z ν(dz)`.
    pub fn characteristic_exponent(&self, xi: f64) -> Complex64 {
        if xi == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let a = self.alpha();
        let tan = (0.5 * PI * a).tan();
        let mag = xi.abs().powf(a);
        let m1 = self.kappa * self.beta() / (a - 1.0);
        Complex64::new(-mag, mag * self.beta() * xi.signum() * tan + xi * m1)
    }
}

fn check_delta(delta: f64) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::domain("delta", delta, "(0, inf)"));
    }
    Ok(())
}

/// `d` independent one-dimensional measures sharing one α.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylindricalNoiseSpec {
    alpha: StabilityIndex,
    components: Vec<LevyMeasureSpec>,
}

impl CylindricalNoiseSpec {
    pub fn new(alpha: f64, betas: &[f64]) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Dimension("cylindrical noise needs d >= 1 components".into()));
        }
        let alpha = StabilityIndex::new(alpha)?;
        let components = betas
            .iter()
            .map(|&b| Skewness::new(b).map(|beta| LevyMeasureSpec::from_parts(alpha, beta)))
            .collect::<Result<Vec<_>>>()?;
        Ok(CylindricalNoiseSpec { alpha, components })
    }

    /// Same skewness on every component.
    pub fn uniform(alpha: f64, beta: f64, dimension: usize) -> Result<Self> {
        Self::new(alpha, &vec![beta; dimension])
    }

    pub fn alpha(&self) -> f64 {
        self.alpha.value()
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    pub fn betas(&self) -> Vec<f64> {
        self.components.iter().map(|c| c.beta()).collect()
    }

    pub fn components(&self) -> &[LevyMeasureSpec] {
        &self.components
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    // Reference values below were computed at 30 digits with mpmath.
    const KAPPA_1_5: f64 = 0.598_413_420_602_149;

    #[test]
    fn kappa_at_three_halves() {
        let m = LevyMeasureSpec::new(1.5, 0.0).unwrap();
        assert!(rel(m.kappa(), KAPPA_1_5) < 1e-13);
        assert!(rel(m.c_plus(), 0.299_206_710_301_074_5) < 1e-13);
        assert_eq!(m.c_plus(), m.c_minus());
    }

    #[test]
    fn kappa_matches_unit_scale_normalization() {
        for i in 0..=98 {
            let a = 1.01 + 0.01 * i as f64;
            let m = LevyMeasureSpec::new(a, 0.3).unwrap();
            let alt = unit_scale_stable_normalization(a);
            assert!(rel(m.kappa(), alt) < 1e-12, "alpha={a}: {} vs {alt}", m.kappa());
        }
    }

    #[test]
    fn kappa_over_gap_tends_to_two() {
        for (a, tol) in [(1.99, 0.02), (1.999, 2e-3), (2.0 - 1e-6, 2e-6), (ALPHA_MAX, 1e-8)] {
            let m = LevyMeasureSpec::new(a, 0.9).unwrap();
            let r = m.kappa() / (2.0 - a);
            assert!((r - 2.0).abs() < tol, "alpha={a}: {r}");
        }
    }

    #[test]
    fn one_sided_measure() {
        let m = LevyMeasureSpec::new(1.5, 1.0).unwrap();
        assert_eq!(m.c_minus(), 0.0);
        assert_eq!(m.c_plus(), m.kappa());
        let m = LevyMeasureSpec::new(1.5, -1.0).unwrap();
        assert_eq!(m.c_plus(), 0.0);
    }

    #[test]
    fn domain_errors_name_the_field() {
        for a in [1.0, 2.0, 0.5, 2.5, 1.0 + 1e-7, f64::NAN] {
            match LevyMeasureSpec::new(a, 0.0) {
                Err(Error::Domain { field: "alpha", .. }) => {}
                other => panic!("alpha={a}: {other:?}"),
            }
        }
        match LevyMeasureSpec::new(1.5, 1.01) {
            Err(Error::Domain { field: "beta", .. }) => {}
            other => panic!("{other:?}"),
        }
        let m = LevyMeasureSpec::new(1.5, 0.0).unwrap();
        assert!(matches!(m.truncated_second_moment(0.0), Err(Error::Domain { field: "delta", .. })));
        assert!(matches!(m.tail_mean(-1.0), Err(Error::Domain { field: "delta", .. })));
        assert!(matches!(m.tail_moment(1.0, 1.5), Err(Error::DivergentIntegral { .. })));
        assert!(matches!(m.tail_moment(1.0, 1.7), Err(Error::DivergentIntegral { .. })));
    }

    #[test]
    fn closed_form_examples() {
        let m = LevyMeasureSpec::new(1.5, 0.0).unwrap();
        assert!(rel(m.truncated_second_moment(1.0).unwrap(), 1.196_826_841_204_298) < 1e-13);
        assert!(rel(m.truncated_second_moment(0.5).unwrap(), 0.846_284_375_321_634_4) < 1e-13);
        assert!(rel(m.tail_moment(1.0, 1.0).unwrap(), 1.196_826_841_204_298) < 1e-13);
        assert!(rel(m.tail_moment(2.0, 0.0).unwrap(), 0.141_047_395_886_939_1) < 1e-13);
        assert_eq!(m.tail_mean(0.3).unwrap(), 0.0);

        let m = LevyMeasureSpec::new(1.5, 1.0).unwrap();
        assert!(rel(m.tail_mean(1.0).unwrap(), 1.196_826_841_204_298) < 1e-13);
        let m = LevyMeasureSpec::new(1.5, -0.5).unwrap();
        assert!(rel(m.tail_mean(1.0).unwrap(), -KAPPA_1_5) < 1e-13);
    }

    #[test]
    fn limits_in_alpha_and_delta() {
        let m = LevyMeasureSpec::new(1.99, 0.7).unwrap();
        assert!((m.truncated_second_moment(1.0).unwrap() - 2.0).abs() < 0.03);
        let m = LevyMeasureSpec::new(ALPHA_MAX, 0.0).unwrap();
        assert!(m.tail_moment(1.0, 1.0).unwrap() < 1e-8);
        let m = LevyMeasureSpec::new(1.5, 0.0).unwrap();
        assert!(m.truncated_second_moment(1e-12).unwrap() < 1e-5);
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        for &a in &[1.01, 1.3, 1.5, 1.75, 1.99, 1.999] {
            for &b in &[-1.0, -0.2, 0.0, 0.8] {
                let m = LevyMeasureSpec::new(a, b).unwrap();
                for &d in &[0.01, 0.5, 1.0, 3.0] {
                    let q = m.quadrature_moment(d, 2.0, Region::Inner, false).unwrap();
                    assert!(rel(q.value, m.truncated_second_moment(d).unwrap()) < 1e-10, "a={a} d={d}");
                    for &t in &[0.0, 1.0, a - 0.01] {
                        let q = m.quadrature_moment(d, t, Region::Outer, false).unwrap();
                        assert!(rel(q.value, m.tail_moment(d, t).unwrap()) < 1e-10, "a={a} d={d} t={t}");
                    }
                    let q = m.quadrature_moment(d, 1.0, Region::Outer, true).unwrap();
                    let want = m.tail_mean(d).unwrap();
                    assert!((q.value - want).abs() <= 1e-10 * want.abs().max(m.kappa()), "a={a} b={b}");
                }
            }
        }
    }

    #[test]
    fn quadrature_rejects_divergent_regions() {
        let m = LevyMeasureSpec::new(1.5, 0.0).unwrap();
        assert!(m.quadrature_moment(1.0, 1.0, Region::Inner, false).is_err());
        assert!(m.quadrature_moment(1.0, 1.6, Region::Outer, false).is_err());
    }

    #[test]
    fn uniform_bound_and_rate_on_alpha_grid() {
        // sup over α ≥ l stays finite; |m2 - 2| + tail(1, 1) ≤ C (2-α) with a
        // ratio that settles as α → 2.
        let l = 1.5;
        let mut sup = 0.0f64;
        let mut ratios = Vec::new();
        for i in 0..500 {
            let a = l + (2.0 - l) * i as f64 / 500.0;
            let m = LevyMeasureSpec::new(a, 0.4).unwrap();
            let s = m.truncated_second_moment(1.0).unwrap() + m.tail_moment(1.0, 1.0).unwrap();
            sup = sup.max(s);
            let r = ((m.truncated_second_moment(1.0).unwrap() - 2.0).abs() + m.tail_moment(1.0, 1.0).unwrap())
                / (2.0 - a);
            ratios.push(r);
        }
        assert!(sup.is_finite() && sup < 10.0);
        let c = ratios.iter().cloned().fold(0.0, f64::max);
        assert!(c < 10.0);
        let tail: Vec<f64> = ratios[480..].to_vec();
        let spread = tail.iter().cloned().fold(f64::MIN, f64::max) - tail.iter().cloned().fold(f64::MAX, f64::min);
        assert!(spread < 0.05, "ratio not settling: {spread}");
    }

    #[test]
    fn characteristic_exponent_basics() {
        let m = LevyMeasureSpec::new(1.5, 0.0).unwrap();
        let psi = m.characteristic_exponent(1.0);
        assert!((psi.re + 1.0).abs() < 1e-15 && psi.im == 0.0);
        assert_eq!(m.characteristic_exponent(0.0), Complex64::new(0.0, 0.0));
        let m = LevyMeasureSpec::new(2.0 - 1e-7, 0.5).unwrap();
        let psi = m.characteristic_exponent(1.0);
        assert!((psi.re + 1.0).abs() < 1e-6 && psi.im.abs() < 1e-5, "{psi}");
    }

    #[test]
    fn characteristic_exponent_matches_direct_quadrature() {
        // ψ(ξ) = ∫ (e^{iξz} - 1 - iξz 1{|z|≤1}) ν(dz), integrated directly.
        for &(a, b, xi) in &[(1.5, 0.0, 1.0), (1.5, 0.6, 1.0), (1.7, -0.9, 2.0), (1.3, 0.3, -0.7)] {
            let m = LevyMeasureSpec::new(a, b).unwrap();
            let got = m.characteristic_exponent(xi);
            let want = direct_exponent(&m, xi);
            assert!((got - want).norm() < 1e-6, "a={a} b={b} xi={xi}: {got} vs {want}");
        }
    }

    fn direct_exponent(m: &LevyMeasureSpec, xi: f64) -> Complex64 {
        let a = m.alpha();
        let tol = Tolerance::absolute(1e-11).with_max_intervals(200_000);
        let mut total = Complex64::new(0.0, 0.0);
        for (sign, c) in [(1.0, m.c_plus()), (-1.0, m.c_minus())] {
            if c == 0.0 {
                continue;
            }
            // |z| ≤ 1 in u = ln|z|; the remainder e^{iξz} - 1 - iξz divided by z²
            // behaves like -ξ²/2 for tiny z.
            let re_in = quadrature::integrate(
                |u| {
                    let z = sign * u.exp();
                    let v = xi * z;
                    let r = if v.abs() < 1e-4 { -0.5 * v * v } else { v.cos() - 1.0 };
                    c * r * (-a * u).exp()
                },
                -60.0,
                0.0,
                tol,
            )
            .unwrap();
            let im_in = quadrature::integrate(
                |u| {
                    let z = sign * u.exp();
                    let v = xi * z;
                    let r = if v.abs() < 1e-3 { -v * v * v / 6.0 } else { v.sin() - v };
                    c * r * (-a * u).exp()
                },
                -60.0,
                0.0,
                tol,
            )
            .unwrap();
            let cutoff = 1e4;
            let re_out = quadrature::integrate(|z| c * ((xi * sign * z).cos() - 1.0) * z.powf(-1.0 - a), 1.0, cutoff, tol)
                .unwrap();
            let im_out =
                quadrature::integrate(|z| c * (xi * sign * z).sin() * z.powf(-1.0 - a), 1.0, cutoff, tol).unwrap();
            // -1 part of the tail beyond the cutoff
            let far = -c * cutoff.powf(-a) / a;
            total += Complex64::new(re_in.value + re_out.value + far, im_in.value + im_out.value);
        }
        total
    }

    proptest! {
        #[test]
        fn moments_are_beta_free(a in 1.05f64..1.999, b in -1.0f64..=1.0, d in 0.01f64..5.0) {
            let m = LevyMeasureSpec::new(a, b).unwrap();
            let n = LevyMeasureSpec::new(a, -b).unwrap();
            prop_assert_eq!(m.truncated_second_moment(d).unwrap(), n.truncated_second_moment(d).unwrap());
            prop_assert_eq!(m.tail_moment(d, 1.0).unwrap(), n.tail_moment(d, 1.0).unwrap());
            prop_assert_eq!(m.tail_mean(d).unwrap(), -n.tail_mean(d).unwrap());
            prop_assert!((m.c_plus() + m.c_minus() - m.kappa()).abs() <= 1e-15 * m.kappa());
        }

        #[test]
        fn second_moment_scaling(a in 1.05f64..1.999, d in 1e-6f64..10.0) {
            let m = LevyMeasureSpec::new(a, 0.0).unwrap();
            let scaled = m.truncated_second_moment(d).unwrap() * d.powf(a - 2.0);
            let base = m.truncated_second_moment(1.0).unwrap();
            prop_assert!(rel(scaled, base) < 1e-12);
        }

        #[test]
        fn exponent_conjugate_symmetry(a in 1.05f64..1.999, b in -1.0f64..=1.0, xi in -10.0f64..10.0) {
            let m = LevyMeasureSpec::new(a, b).unwrap();
            let p = m.characteristic_exponent(xi);
            let q = m.characteristic_exponent(-xi);
            prop_assert!((p - q.conj()).norm() <= 1e-12 * (1.0 + p.norm()));
            let s = LevyMeasureSpec::new(a, 0.0).unwrap().characteristic_exponent(xi);
            prop_assert_eq!(s.im, 0.0);
        }
    }
}
