//! Weak error `E f(X^α_T) − E f(X_T)` between the jump SDE and its Brownian
//! limit, its rate in `2 − α`, and the closed-form `E|L_t|` witness showing the
//! rate cannot be better than linear.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generator_calculus::TestFunction;
use crate::levy_measure::{CylindricalNoiseSpec, StabilityIndex};
use crate::quadrature::{integrate, Estimate, Tolerance};
use crate::rng::RngStreamKey;
use crate::sde_solver::{CoefficientField, NoiseDriver, PathSimulator, TimeGrid};
use crate::special::{gamma, EULER_GAMMA};
use crate::stable_sampler::IncrementSamplerMode;
use crate::stats::{self, least_squares, sharded, MeanVar, ENSEMBLE_SHARDS};

/// Largest tolerated share of diverged paths in a valid point.
pub const MAX_DIVERGENCE_FRACTION: f64 = 1e-3;
pub const MIN_PATHS: u64 = 100;
const BOOTSTRAP_SAMPLES: usize = 2000;
const BOOTSTRAP_SEED: u64 = 0x5eed_b007;

/// How the two ensembles share randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pairing {
    /// Separate keys; the variances add.
    #[default]
    Independent,
    /// Path `p` of both ensembles uses the same key. With the decomposition
    /// sampler the Gaussian part of each stable increment and the Brownian
    /// increment share their normal draw.
    Coupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct WeakErrorOptions {
    pub pairing: Pairing,
    pub taming: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakErrorPoint {
    pub alpha_value: f64,
    pub estimate: f64,
    pub std_error: f64,
    pub n_paths: u64,
    pub h: f64,
    pub divergence_fraction: f64,
}

impl WeakErrorPoint {
    pub fn is_valid(&self) -> bool {
        self.divergence_fraction <= MAX_DIVERGENCE_FRACTION && self.std_error.is_finite()
    }

    /// Valid and clear of the noise floor (`|estimate| > 3 se`).
    pub fn is_resolved(&self) -> bool {
        self.is_valid() && self.estimate.abs() > 3.0 * self.std_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeakErrorReport {
    pub points: Vec<WeakErrorPoint>,
    /// Indices into `points` that entered the fit.
    pub used: Vec<usize>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_ci: (f64, f64),
}

pub const CSV_HEADER: &str = "alpha,estimate,std_error,n_paths,h,divergence_fraction";

impl WeakErrorReport {
    pub fn to_csv(&self) -> String {
        points_to_csv(&self.points)
    }
}

pub fn points_to_csv(points: &[WeakErrorPoint]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            p.alpha_value, p.estimate, p.std_error, p.n_paths, p.h, p.divergence_fraction
        );
    }
    out
}

/// Difference of `E f(X_T)` under two simulators, with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LawDifference {
    pub estimate: f64,
    pub std_error: f64,
    pub mean_a: f64,
    pub mean_b: f64,
    pub diverged: u64,
    pub n_paths: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct DiffShard {
    a: MeanVar,
    b: MeanVar,
    diff: MeanVar,
    diverged: u64,
}

/// Runs `n_paths` paths under each simulator from `x0` and compares `E f`.
/// Path `p` uses `key.derive(0).derive(p)` under `a`, and under `b` the same
/// key when coupled, `key.derive(1).derive(p)` otherwise. A path pair where
/// either side diverges is dropped and counted.
pub fn compare_laws(
    a: &PathSimulator,
    b: &PathSimulator,
    f: &TestFunction,
    x0: &[f64],
    n_paths: u64,
    key: RngStreamKey,
    pairing: Pairing,
) -> Result<LawDifference> {
    let key_a = key.derive(0);
    let key_b = match pairing {
        Pairing::Coupled => key_a,
        Pairing::Independent => key.derive(1),
    };
    let shards = sharded(n_paths, ENSEMBLE_SHARDS, |range| -> Result<DiffShard> {
        let mut acc = DiffShard::default();
        let mut ws_a = a.workspace();
        let mut ws_b = b.workspace();
        for p in range {
            let ra = a.terminal(x0, key_a.derive(p), &mut ws_a);
            let rb = b.terminal(x0, key_b.derive(p), &mut ws_b);
            match (ra, rb) {
                (Ok(()), Ok(())) => {
                    let (fa, fb) = (f.eval(ws_a.state()), f.eval(ws_b.state()));
                    acc.a.push(fa);
                    acc.b.push(fb);
                    acc.diff.push(fa - fb);
                }
                (Err(Error::Divergence { .. }), _) | (_, Err(Error::Divergence { .. })) => acc.diverged += 1,
                (Err(e), _) | (_, Err(e)) => return Err(e),
            }
        }
        Ok(acc)
    });
    let mut total = DiffShard::default();
    for s in shards {
        let s = s?;
        total.a.merge(&s.a);
        total.b.merge(&s.b);
        total.diff.merge(&s.diff);
        total.diverged += s.diverged;
    }
    let std_error = match pairing {
        Pairing::Coupled => total.diff.std_error(),
        Pairing::Independent => (total.a.std_error().powi(2) + total.b.std_error().powi(2)).sqrt(),
    };
    Ok(LawDifference {
        estimate: total.a.mean - total.b.mean,
        std_error,
        mean_a: total.a.mean,
        mean_b: total.b.mean,
        diverged: total.diverged,
        n_paths,
    })
}

/// Monte Carlo weak error at one α with independent ensembles.
#[allow(clippy::too_many_arguments)]
pub fn estimate_weak_error(
    coeffs: &CoefficientField,
    noise: &CylindricalNoiseSpec,
    f: &TestFunction,
    grid: TimeGrid,
    x0: &[f64],
    n_paths: u64,
    mode: IncrementSamplerMode,
    key: RngStreamKey,
) -> Result<WeakErrorPoint> {
    estimate_weak_error_with(coeffs, noise, f, grid, x0, n_paths, mode, key, WeakErrorOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn estimate_weak_error_with(
    coeffs: &CoefficientField,
    noise: &CylindricalNoiseSpec,
    f: &TestFunction,
    grid: TimeGrid,
    x0: &[f64],
    n_paths: u64,
    mode: IncrementSamplerMode,
    key: RngStreamKey,
    options: WeakErrorOptions,
) -> Result<WeakErrorPoint> {
    if n_paths < MIN_PATHS {
        return Err(Error::domain("n_paths", n_paths as f64, "[100, inf)"));
    }
    if !f.is_bounded() {
        return Err(Error::Precondition(format!(
            "{} is unbounded; heavy tails void the error bars",
            f.name
        )));
    }
    let jump = PathSimulator::new(
        coeffs,
        &NoiseDriver::Stable {
            noise: noise.clone(),
            mode,
        },
        grid,
        options.taming,
    )?;
    let limit = PathSimulator::new(coeffs, &NoiseDriver::Brownian, grid, options.taming)?;
    let d = compare_laws(&jump, &limit, f, x0, n_paths, key, options.pairing)?;
    Ok(WeakErrorPoint {
        alpha_value: noise.alpha(),
        estimate: d.estimate,
        std_error: d.std_error,
        n_paths,
        h: grid.h(),
        divergence_fraction: d.diverged as f64 / n_paths as f64,
    })
}

/// Terminal values of component `component` for `n_paths` paths; path `p`
/// uses `key.derive(p)`. Diverged paths are dropped.
pub fn terminal_component_samples(
    sim: &PathSimulator,
    x0: &[f64],
    component: usize,
    n_paths: u64,
    key: RngStreamKey,
) -> Result<Vec<f64>> {
    if component >= x0.len() {
        return Err(Error::Dimension(format!("component {component} of a {}-vector", x0.len())));
    }
    let shards = sharded(n_paths, ENSEMBLE_SHARDS, |range| -> Result<Vec<f64>> {
        let mut ws = sim.workspace();
        let mut out = Vec::with_capacity((range.end - range.start) as usize);
        for p in range {
            match sim.terminal(x0, key.derive(p), &mut ws) {
                Ok(()) => out.push(ws.state()[component]),
                Err(Error::Divergence { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    });
    let mut all = Vec::with_capacity(n_paths as usize);
    for s in shards {
        all.extend(s?);
    }
    Ok(all)
}

/// Least-squares fit of `log|estimate|` on `log(2 − α)` over the resolved
/// points, with a parametric bootstrap 95% interval for the slope.
pub fn rate_regression(points: &[WeakErrorPoint]) -> Result<WeakErrorReport> {
    let mut used: Vec<usize> = (0..points.len()).filter(|&i| points[i].is_resolved()).collect();
    used.sort_by(|&i, &j| points[i].alpha_value.total_cmp(&points[j].alpha_value));
    used.dedup_by(|i, j| points[*i].alpha_value == points[*j].alpha_value);
    if used.len() < 3 {
        return Err(Error::InsufficientData {
            usable: used.len(),
            required: 3,
        });
    }
    let xs: Vec<f64> = used.iter().map(|&i| (2.0 - points[i].alpha_value).ln()).collect();
    let ys: Vec<f64> = used.iter().map(|&i| points[i].estimate.abs().ln()).collect();
    let fit = least_squares(&xs, &ys);

    let mut rng = RngStreamKey::new(BOOTSTRAP_SEED, 0).stream();
    let mut slopes: Vec<f64> = (0..BOOTSTRAP_SAMPLES)
        .map(|_| {
            let yb: Vec<f64> = used
                .iter()
                .map(|&i| {
                    let p = &points[i];
                    let z: f64 = rand::Rng::sample(&mut rng, rand_distr::StandardNormal);
                    (p.estimate + p.std_error * z).abs().max(f64::MIN_POSITIVE).ln()
                })
                .collect();
            least_squares(&xs, &yb).slope
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    let q = |p: f64| slopes[((p * (slopes.len() - 1) as f64).round()) as usize];
    Ok(WeakErrorReport {
        points: points.to_vec(),
        used,
        slope: fit.slope,
        intercept: fit.intercept,
        slope_ci: (q(0.025), q(0.975)),
    })
}

/// `∫₀^∞ sin²u / u² du` by quadrature on `[0, Nπ]` plus the `1/(2Nπ)` tail.
pub fn sine_square_integral() -> Result<Estimate> {
    const PERIODS: usize = 1000;
    let integrand = |u: f64| {
        if u < 1e-4 {
            1.0 - u * u / 3.0
        } else {
            let s = u.sin() / u;
            s * s
        }
    };
    let tol = Tolerance {
        abs: 1e-15,
        rel: 1e-13,
        max_intervals: 200,
    };
    let mut total = Estimate::ZERO;
    for k in 0..PERIODS {
        total = total + integrate(integrand, k as f64 * PI, (k + 1) as f64 * PI, tol)?;
    }
    let end = PERIODS as f64 * PI;
    // the next term of the tail is O(end^-3)
    total.value += 0.5 / end;
    total.error += 1.0 / (end * end * end);
    Ok(total)
}

/// `E|L_t|` for the symmetric process with `E e^{iξL_t} = e^{-t|ξ|^α}`:
/// `(2/π) Γ(1 − 1/α) t^{1/α}`.
pub fn exact_abs_moment_stable(alpha: f64, t: f64) -> Result<f64> {
    let a = StabilityIndex::new(alpha)?.value();
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::domain("t", t, "(0, inf)"));
    }
    Ok(2.0 / PI * gamma(1.0 - 1.0 / a) * t.powf(1.0 / a))
}

/// `lim_{α→2} |E|L_1^α| − E|√2 B_1|| / (2 − α) = (γ + 2 ln 2) / (2√π)`.
pub fn example41_constant() -> f64 {
    (EULER_GAMMA + 2.0 * std::f64::consts::LN_2) / (2.0 * PI.sqrt())
}

/// `E|√2 B_1| = 2/√π`.
pub fn brownian_abs_moment() -> f64 {
    2.0 / PI.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbsMomentRow {
    pub alpha: f64,
    pub exact_error: f64,
    pub ratio_to_2_minus_alpha: f64,
}

/// Closed-form `|E|L_1^α| − 2/√π|` and its ratio to `2 − α` for each α.
pub fn abs_moment_rows(alphas: &[f64]) -> Result<Vec<AbsMomentRow>> {
    alphas
        .iter()
        .map(|&a| {
            let err = (exact_abs_moment_stable(a, 1.0)? - brownian_abs_moment()).abs();
            Ok(AbsMomentRow {
                alpha: a,
                exact_error: err,
                ratio_to_2_minus_alpha: err / (2.0 - a),
            })
        })
        .collect()
}

/// The closed-form rows as regression points (zero standard error).
pub fn abs_moment_points(alphas: &[f64]) -> Result<Vec<WeakErrorPoint>> {
    Ok(abs_moment_rows(alphas)?
        .into_iter()
        .map(|r| WeakErrorPoint {
            alpha_value: r.alpha,
            estimate: r.exact_error,
            std_error: 0.0,
            n_paths: 0,
            h: 0.0,
            divergence_fraction: 0.0,
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceMetric {
    Ks,
    Wasserstein1,
}

pub fn distributional_distance(a: &[f64], b: &[f64], metric: DistanceMetric) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Precondition("distributional_distance needs two nonempty samples".into()));
    }
    Ok(match metric {
        DistanceMetric::Ks => stats::ks_statistic(a, b),
        DistanceMetric::Wasserstein1 => stats::wasserstein1(a, b),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::levy_measure::LevyMeasureSpec;
    use crate::stats::ks_critical_value;
    use crate::stable_sampler::sample_standard_stable;
    use num_complex::Complex64;

    fn cos1() -> TestFunction {
        TestFunction::cosine(&[1.0], 0.0).unwrap()
    }

    /// `E cos(X_T)` for the stable OU process from `x0`, via its characteristic
    /// function `exp(i x0 e^{-T} + ∫₀^T ψ(e^{-s}) ds)`.
    fn ou_cos_oracle(alpha: f64, beta: f64, x0: f64, t: f64) -> f64 {
        let spec = LevyMeasureSpec::new(alpha, beta).unwrap();
        let tol = Tolerance::default();
        let re = integrate(|s| spec.characteristic_exponent((-s).exp()).re, 0.0, t, tol).unwrap().value;
        let im = integrate(|s| spec.characteristic_exponent((-s).exp()).im, 0.0, t, tol).unwrap().value;
        (Complex64::new(re, im + x0 * (-t).exp())).exp().re
    }

    #[test]
    fn self_difference_is_exactly_zero() {
        let coeffs = CoefficientField::ou_type(1).unwrap();
        let grid = TimeGrid::new(1.0, 32).unwrap();
        let brown = PathSimulator::new(&coeffs, &NoiseDriver::Brownian, grid, false).unwrap();
        let d = compare_laws(&brown, &brown, &cos1(), &[0.3], 1000, RngStreamKey::new(1, 0), Pairing::Coupled).unwrap();
        assert_eq!(d.estimate, 0.0);
        assert_eq!(d.std_error, 0.0);
        let noise = CylindricalNoiseSpec::new(1.8, &[0.4]).unwrap();
        let jump = PathSimulator::new(
            &coeffs,
            &NoiseDriver::Stable {
                noise,
                mode: IncrementSamplerMode::ExactTransform,
            },
            grid,
            false,
        )
        .unwrap();
        let d = compare_laws(&jump, &jump, &cos1(), &[0.3], 1000, RngStreamKey::new(1, 0), Pairing::Coupled).unwrap();
        assert!(d.estimate.abs() <= 1e-15);
    }

    #[test]
    fn weak_error_near_two_is_small_and_matches_oracle() {
        let coeffs = CoefficientField::ou_type(1).unwrap();
        let grid = TimeGrid::new(1.0, 256).unwrap();
        let noise = CylindricalNoiseSpec::new(1.99, &[0.0]).unwrap();
        let p = estimate_weak_error(
            &coeffs,
            &noise,
            &cos1(),
            grid,
            &[0.0],
            20_000,
            IncrementSamplerMode::ExactTransform,
            RngStreamKey::new(2, 0),
        )
        .unwrap();
        assert!(p.estimate.abs() <= 0.05, "{p:?}");
        assert!(p.is_valid());
        // variance-2 Gaussian OU: E cos X_1 = exp(−(1 − e^{−2})/2)
        let exact = ou_cos_oracle(1.99, 0.0, 0.0, 1.0) - (-(1.0 - (-2.0f64).exp()) / 2.0).exp();
        assert!((p.estimate - exact).abs() < 4.0 * p.std_error + 0.005, "{} vs {exact}", p.estimate);
    }

    #[test]
    fn skewness_changes_the_weak_value() {
        let coeffs = CoefficientField::ou_type(1).unwrap();
        let grid = TimeGrid::new(1.0, 128).unwrap();
        let mode = IncrementSamplerMode::ExactTransform;
        let sim = |beta: f64| {
            let noise = CylindricalNoiseSpec::new(1.95, &[beta]).unwrap();
            PathSimulator::new(&coeffs, &NoiseDriver::Stable { noise, mode }, grid, false).unwrap()
        };
        let d = compare_laws(&sim(0.9), &sim(0.0), &cos1(), &[0.5], 20_000, RngStreamKey::new(3, 0), Pairing::Coupled).unwrap();
        let want = ou_cos_oracle(1.95, 0.9, 0.5, 1.0) - ou_cos_oracle(1.95, 0.0, 0.5, 1.0);
        assert!(d.estimate.abs() > 3.0 * d.std_error, "{d:?}");
        assert!((d.estimate - want).abs() < 4.0 * d.std_error + 5e-4, "{d:?} vs {want}");
    }

    #[test]
    fn parameter_checks() {
        let coeffs = CoefficientField::ou_type(1).unwrap();
        let grid = TimeGrid::new(1.0, 8).unwrap();
        let noise = CylindricalNoiseSpec::new(1.8, &[0.0]).unwrap();
        let mode = IncrementSamplerMode::ExactTransform;
        let key = RngStreamKey::new(0, 0);
        assert!(estimate_weak_error(&coeffs, &noise, &cos1(), grid, &[0.0], 99, mode, key).is_err());
        let x = TestFunction::coordinate(1, 0).unwrap();
        assert!(matches!(
            estimate_weak_error(&coeffs, &noise, &x, grid, &[0.0], 100, mode, key),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn divergence_is_flagged_not_thrown() {
        let cubic = CoefficientField::new(
            1,
            std::sync::Arc::new(|x, out| out[0] = x[0].powi(5)),
            std::sync::Arc::new(|_, out| out[0] = 1.0),
        )
        .unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let noise = CylindricalNoiseSpec::new(1.5, &[0.0]).unwrap();
        let p = estimate_weak_error(&cubic, &noise, &cos1(), grid, &[40.0], 200, IncrementSamplerMode::ExactTransform, RngStreamKey::new(0, 0)).unwrap();
        assert!(p.divergence_fraction > MAX_DIVERGENCE_FRACTION);
        assert!(!p.is_valid());
    }

    fn synthetic(f: impl Fn(f64) -> f64) -> Vec<WeakErrorPoint> {
        [1.7, 1.8, 1.9, 1.95, 1.99]
            .iter()
            .map(|&a| WeakErrorPoint {
                alpha_value: a,
                estimate: f(a),
                std_error: 0.0,
                n_paths: 0,
                h: 0.0,
                divergence_fraction: 0.0,
            })
            .collect()
    }

    #[test]
    fn regression_on_exact_powers() {
        let r = rate_regression(&synthetic(|a| 0.7 * (2.0 - a))).unwrap();
        assert!((r.slope - 1.0).abs() < 1e-12);
        assert!((r.intercept - 0.7f64.ln()).abs() < 1e-12);
        assert_eq!(r.slope_ci, (r.slope, r.slope));
        let r = rate_regression(&synthetic(|a| (2.0 - a).powi(2))).unwrap();
        assert!((r.slope - 2.0).abs() < 1e-12);
        assert_eq!(r.points.len(), 5);
    }

    #[test]
    fn regression_excludes_noise_dominated_points() {
        let mut pts = synthetic(|a| 0.5 * (2.0 - a));
        pts[4].std_error = 1.0;
        pts[3].divergence_fraction = 0.5;
        let r = rate_regression(&pts).unwrap();
        assert_eq!(r.used, vec![0, 1, 2]);
        pts[2].std_error = 1.0;
        assert_eq!(rate_regression(&pts), Err(Error::InsufficientData { usable: 2, required: 3 }));
    }

    #[test]
    fn bootstrap_interval_brackets_the_slope() {
        let mut pts = synthetic(|a| 0.5 * (2.0 - a));
        for p in &mut pts {
            p.std_error = 0.05 * p.estimate;
        }
        let r = rate_regression(&pts).unwrap();
        assert!(r.slope_ci.0 < r.slope && r.slope < r.slope_ci.1, "{r:?}");
        assert!(r.slope_ci.1 - r.slope_ci.0 < 0.3);
        assert_eq!(r, rate_regression(&pts).unwrap());
    }

    #[test]
    fn csv_layout() {
        let csv = points_to_csv(&synthetic(|a| 2.0 - a)[..2]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], CSV_HEADER);
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[1].split(',').count(), 6);
        assert!(lines[1].starts_with("1.7,0.30000000000000004,"));
    }

    #[test]
    #[allow(clippy::approx_constant)] // decimals typed independently of std consts
    fn abs_moment_limit_and_constant() {
        // Γ(1/2) = √π, so the α → 2 value is 2/√π
        let v = exact_abs_moment_stable(2.0 - 1e-9, 1.0).unwrap();
        assert!((v - brownian_abs_moment()).abs() < 1e-8);
        let c = example41_constant();
        let by_hand = (0.5772156649 + 2.0 * 0.6931471806) / (2.0 * 1.7724538509);
        assert!((c - by_hand).abs() < 1e-9);
        assert!((c - 0.553896).abs() < 1e-6);
        let rows = abs_moment_rows(&[1.9, 1.999]).unwrap();
        assert!((rows[1].ratio_to_2_minus_alpha / c - 1.0).abs() < 0.01);
        assert!((rows[0].ratio_to_2_minus_alpha / c - 1.0).abs() < 0.15);
        assert!(exact_abs_moment_stable(2.0, 1.0).is_err());
        assert!(exact_abs_moment_stable(1.5, 0.0).is_err());
        // t^{1/α} scaling
        let r = exact_abs_moment_stable(1.6, 3.0).unwrap() / exact_abs_moment_stable(1.6, 1.0).unwrap();
        assert!((r - 3f64.powf(1.0 / 1.6)).abs() < 1e-13);
    }

    #[test]
    fn abs_moment_reference_values() {
        // |E|L| − 2/√π| / (2 − α) from an independent high-precision evaluation
        let want = [(1.9, 0.61933), (1.95, 0.58484), (1.99, 0.55983), (1.995, 0.55685), (1.999, 0.55448)];
        let rows = abs_moment_rows(&want.map(|w| w.0)).unwrap();
        for (r, (_, v)) in rows.iter().zip(want) {
            assert!((r.ratio_to_2_minus_alpha - v).abs() < 1e-5, "{r:?}");
        }
        let fit = rate_regression(&abs_moment_points(&want.map(|w| w.0)).unwrap()).unwrap();
        assert!((0.97..=1.03).contains(&fit.slope), "{}", fit.slope);
    }

    #[test]
    fn sine_square_integral_is_half_pi() {
        let e = sine_square_integral().unwrap();
        assert!((e.value - PI / 2.0).abs() < 1e-10, "{e:?}");
    }

    #[test]
    fn abs_moment_matches_sampler() {
        let n = 200_000u64;
        let base = RngStreamKey::new(4, 0);
        let m: MeanVar = (0..n).map(|p| sample_standard_stable(1.9, 0.0, base.derive(p)).unwrap().abs()).collect();
        let want = exact_abs_moment_stable(1.9, 1.0).unwrap();
        assert!((m.mean - want).abs() < 4.0 * m.std_error(), "{} vs {want} ± {}", m.mean, m.std_error());
    }

    #[test]
    fn distances() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(distributional_distance(&a, &a, DistanceMetric::Ks).unwrap(), 0.0);
        assert_eq!(distributional_distance(&a, &a, DistanceMetric::Wasserstein1).unwrap(), 0.0);
        assert!(distributional_distance(&a, &[], DistanceMetric::Ks).is_err());
        let shifted: Vec<f64> = a.iter().map(|x| x + 0.5).collect();
        assert!((distributional_distance(&a, &shifted, DistanceMetric::Wasserstein1).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ks_null_calibration() {
        let n = 10_000usize;
        let crit = ks_critical_value(n, n, 0.01);
        let mut passes = 0;
        for rep in 0..100u64 {
            let draw = |stream: u64| -> Vec<f64> {
                let base = RngStreamKey::new(500 + rep, stream);
                (0..n as u64).map(|p| sample_standard_stable(1.7, 0.3, base.derive(p)).unwrap()).collect()
            };
            if distributional_distance(&draw(0), &draw(1), DistanceMetric::Ks).unwrap() < crit {
                passes += 1;
            }
        }
        assert!(passes >= 95, "{passes}");
    }
}
