//! Increment samplers for the stable process `L^{α,β}`.
//!
//! Two interchangeable routes:
//! - exact transform: Chambers–Mallows–Stuck draw `S` of the zero-mean law with
//!   exponent `-|ξ|^α (1 - iβ sign ξ tan(πα/2))`, rescaled by `dt^{1/α}` and
//!   shifted by `dt m₁` (the drift created by compensating only |z| ≤ 1);
//! - decomposition: Gaussian with the variance of the compensated jumps below
//!   δ, compound Poisson jumps above δ, and the deterministic compensator of
//!   the band δ < |z| ≤ 1.
//!
//! `K_α = -1/(Γ(-α) cos(πα/2))` is exactly the unit-scale normalization, so no
//! scale factor enters the transform.

use std::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::levy_measure::{CylindricalNoiseSpec, LevyMeasureSpec, Skewness, StabilityIndex};
use crate::rng::{CounterRng, RngStreamKey};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IncrementSamplerMode {
    ExactTransform,
    /// Small-jump cutoff δ ∈ (0, 1]; `None` selects `min(1, dt^{1/α})`.
    Decomposition { delta: Option<f64> },
}

impl IncrementSamplerMode {
    pub fn decomposition(delta: f64) -> Self {
        IncrementSamplerMode::Decomposition { delta: Some(delta) }
    }

    pub fn default_decomposition() -> Self {
        IncrementSamplerMode::Decomposition { delta: None }
    }
}

/// Default small-jump cutoff `min(1, dt^{1/α})`.
pub fn default_cutoff(alpha: f64, dt: f64) -> f64 {
    dt.powf(1.0 / alpha).min(1.0)
}

/// Chambers–Mallows–Stuck sampler for the standard (unit scale, zero mean)
/// stable law.
#[derive(Debug, Clone, Copy)]
pub struct StandardStable {
    alpha: f64,
    /// Skew angle `arctan(β tan(πα/2)) / α`.
    skew_angle: f64,
    /// `(1 + β² tan²(πα/2))^{1/(2α)}`.
    scale: f64,
}

impl StandardStable {
    pub fn new(alpha: StabilityIndex, beta: Skewness) -> Self {
        let a = alpha.value();
        let bt = beta.value() * (0.5 * PI * a).tan();
        StandardStable {
            alpha: a,
            skew_angle: bt.atan() / a,
            scale: (1.0 + bt * bt).powf(0.5 / a),
        }
    }

    #[inline]
    pub fn sample(&self, rng: &mut CounterRng) -> f64 {
        let v = PI * (rng.open01() - 0.5);
        let w = -rng.open01().ln();
        let a = self.alpha;
        let shifted = a * (v + self.skew_angle);
        self.scale * shifted.sin() / v.cos().powf(1.0 / a) * ((v - shifted).cos() / w).powf((1.0 - a) / a)
    }
}

/// One draw from the standard stable law.
pub fn sample_standard_stable(alpha: f64, beta: f64, key: RngStreamKey) -> Result<f64> {
    let s = StandardStable::new(StabilityIndex::new(alpha)?, Skewness::new(beta)?);
    Ok(s.sample(&mut key.stream()))
}

/// Pieces of the decomposition sampler for a fixed `(spec, dt, δ)`.
#[derive(Debug, Clone)]
pub struct Decomposition {
    delta: f64,
    gauss_sd: f64,
    jump_rate: f64,
    jumps: Option<Poisson<f64>>,
    p_positive: f64,
    inv_alpha: f64,
    drift: f64,
}

impl Decomposition {
    pub fn new(spec: &LevyMeasureSpec, dt: f64, delta: f64) -> Result<Self> {
        check_dt(dt)?;
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(Error::domain("delta", delta, "(0, 1]"));
        }
        let small_var = spec.truncated_second_moment(delta)?;
        let rate = spec.tail_moment(delta, 0.0)?;
        let band = spec.tail_mean(delta)? - spec.tail_mean(1.0)?;
        let jump_rate = dt * rate;
        let jumps = if jump_rate > 0.0 {
            Some(Poisson::new(jump_rate).map_err(|_| Error::domain("jump intensity", jump_rate, "(0, 1e44)"))?)
        } else {
            None
        };
        Ok(Decomposition {
            delta,
            gauss_sd: (dt * small_var).sqrt(),
            jump_rate,
            jumps,
            p_positive: spec.c_plus() / spec.kappa(),
            inv_alpha: 1.0 / spec.alpha(),
            drift: -dt * band,
        })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Variance of the Gaussian part.
    pub fn small_jump_variance(&self) -> f64 {
        self.gauss_sd * self.gauss_sd
    }

    /// Expected number of jumps above δ.
    pub fn jump_rate(&self) -> f64 {
        self.jump_rate
    }

    pub fn band_compensator(&self) -> f64 {
        self.drift
    }

    /// The first value consumed from `rng` is the standard normal behind the
    /// Gaussian part; Brownian increments on the same stream share it.
    #[inline]
    pub fn sample(&self, rng: &mut CounterRng) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let mut x = self.gauss_sd * z + self.drift;
        if let Some(p) = &self.jumps {
            let n = p.sample(rng) as u64;
            for _ in 0..n {
                x += self.jump(rng);
            }
        }
        x
    }

    /// One jump of size |z| > δ.
    #[inline]
    pub fn jump(&self, rng: &mut CounterRng) -> f64 {
        let positive = rng.open01() < self.p_positive;
        let size = self.delta * rng.open01().powf(-self.inv_alpha);
        if positive {
            size
        } else {
            -size
        }
    }
}

/// Precomputed increment sampler for one component at a fixed step `dt`.
#[derive(Debug, Clone)]
pub enum IncrementSampler {
    Exact {
        stable: StandardStable,
        time_scale: f64,
        drift: f64,
    },
    Decomposed(Decomposition),
}

impl IncrementSampler {
    pub fn new(spec: &LevyMeasureSpec, dt: f64, mode: IncrementSamplerMode) -> Result<Self> {
        check_dt(dt)?;
        Ok(match mode {
            IncrementSamplerMode::ExactTransform => {
                let stable = StandardStable::new(
                    StabilityIndex::new(spec.alpha())?,
                    Skewness::new(spec.beta())?,
                );
                IncrementSampler::Exact {
                    stable,
                    time_scale: dt.powf(1.0 / spec.alpha()),
                    drift: dt * spec.tail_mean(1.0)?,
                }
            }
            IncrementSamplerMode::Decomposition { delta } => {
                let delta = delta.unwrap_or_else(|| default_cutoff(spec.alpha(), dt));
                IncrementSampler::Decomposed(Decomposition::new(spec, dt, delta)?)
            }
        })
    }

    #[inline]
    pub fn sample(&self, rng: &mut CounterRng) -> f64 {
        match self {
            IncrementSampler::Exact {
                stable,
                time_scale,
                drift,
            } => time_scale * stable.sample(rng) + drift,
            IncrementSampler::Decomposed(d) => d.sample(rng),
        }
    }
}

/// Increment of `L^{α,β}` over `dt` by the exact transform.
pub fn sample_increment(spec: &LevyMeasureSpec, dt: f64, key: RngStreamKey) -> Result<f64> {
    let s = IncrementSampler::new(spec, dt, IncrementSamplerMode::ExactTransform)?;
    Ok(s.sample(&mut key.stream()))
}

/// Increment of `L^{α,β}` over `dt` by the small/large jump decomposition.
pub fn sample_decomposed_increment(
    spec: &LevyMeasureSpec,
    dt: f64,
    mode: IncrementSamplerMode,
    key: RngStreamKey,
) -> Result<f64> {
    if mode == IncrementSamplerMode::ExactTransform {
        return Err(Error::Precondition("decomposition sampler called with exact_transform mode".into()));
    }
    let s = IncrementSampler::new(spec, dt, mode)?;
    Ok(s.sample(&mut key.stream()))
}

/// Samplers for every component of a cylindrical noise.
#[derive(Debug, Clone)]
pub struct CylindricalSampler {
    components: Vec<IncrementSampler>,
}

impl CylindricalSampler {
    pub fn new(noise: &CylindricalNoiseSpec, dt: f64, mode: IncrementSamplerMode) -> Result<Self> {
        let components = noise
            .components()
            .iter()
            .map(|c| IncrementSampler::new(c, dt, mode))
            .collect::<Result<Vec<_>>>()?;
        Ok(CylindricalSampler { components })
    }

    pub fn dimension(&self) -> usize {
        self.components.len()
    }

    /// Component `i` reads stream `key.derive(i)`.
    #[inline]
    pub fn sample_into(&self, key: RngStreamKey, out: &mut [f64]) {
        for (i, (s, o)) in self.components.iter().zip(out.iter_mut()).enumerate() {
            *o = s.sample(&mut key.derive(i as u64).stream());
        }
    }
}

/// Independent increments of all `d` components.
pub fn sample_cylindrical_increment(
    noise: &CylindricalNoiseSpec,
    dt: f64,
    mode: IncrementSamplerMode,
    key: RngStreamKey,
) -> Result<Vec<f64>> {
    let s = CylindricalSampler::new(noise, dt, mode)?;
    let mut out = vec![0.0; s.dimension()];
    s.sample_into(key, &mut out);
    Ok(out)
}

/// Brownian increments `√(2 dt) ξ` per component, with `ξ` the first normal of
/// stream `key.derive(i)`.
#[derive(Debug, Clone, Copy)]
pub struct BrownianSampler {
    sd: f64,
    dimension: usize,
}

impl BrownianSampler {
    /// Increments of `√2 B` over `dt`.
    pub fn new(dimension: usize, dt: f64) -> Result<Self> {
        check_dt(dt)?;
        Ok(BrownianSampler {
            sd: (2.0 * dt).sqrt(),
            dimension,
        })
    }

    #[inline]
    pub fn sample_into(&self, key: RngStreamKey, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.dimension) {
            let z: f64 = key.derive(i as u64).stream().sample(StandardNormal);
            *o = self.sd * z;
        }
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::domain("dt", dt, "(0, inf)"));
    }
    Ok(())
}
