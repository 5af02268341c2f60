//! Euler–Maruyama schemes for
//!
//! ```text
//! dX = b(X) dt + σ(X_{t-}) dL^{α,β}      (jump equation)
//! dX = b(X) dt + √2 σ(X) dB             (limit equation)
//! ```
//!
//! on a fixed uniform grid. Coefficients are always evaluated at the pre-jump
//! state `X_k`. Step `k` of a path keyed by `key` draws its noise from
//! `key.derive(k)`, and component `i` from `key.derive(k).derive(i)`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy_measure::CylindricalNoiseSpec;
use crate::rng::RngStreamKey;
use crate::stable_sampler::{BrownianSampler, CylindricalSampler, IncrementSamplerMode};

/// `x ↦ b(x)`, written into the output slice.
pub type VectorField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `x ↦ σ(x)`, written row-major into a `d*d` slice.
pub type MatrixField = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

#[derive(Clone)]
pub struct CoefficientField {
    dimension: usize,
    drift: VectorField,
    diffusion: MatrixField,
    pub growth_exponent: f64,
    pub lipschitz_sigma: Option<f64>,
    /// Declared bound on `|b|` and `‖σ‖_HS`, when the field is bounded.
    pub bound: Option<f64>,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("dimension", &self.dimension)
            .field("growth_exponent", &self.growth_exponent)
            .field("lipschitz_sigma", &self.lipschitz_sigma)
            .field("bound", &self.bound)
            .finish_non_exhaustive()
    }
}

impl CoefficientField {
    pub fn new(dimension: usize, drift: VectorField, diffusion: MatrixField) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Dimension("coefficient dimension must be >= 1".into()));
        }
        Ok(CoefficientField {
            dimension,
            drift,
            diffusion,
            growth_exponent: 1.0,
            lipschitz_sigma: None,
            bound: None,
        })
    }

    pub fn with_growth_exponent(mut self, r: f64) -> Self {
        self.growth_exponent = r;
        self
    }

    pub fn with_lipschitz_sigma(mut self, k: f64) -> Self {
        self.lipschitz_sigma = Some(k);
        self
    }

    pub fn with_bound(mut self, bound: f64) -> Self {
        self.bound = Some(bound);
        self
    }

    /// Constant drift `b` and diffusion `σ` (row-major).
    pub fn constant(drift: Vec<f64>, sigma: Vec<f64>) -> Result<Self> {
        let d = drift.len();
        if sigma.len() != d * d {
            return Err(Error::Dimension(format!("sigma has {} entries, expected {}", sigma.len(), d * d)));
        }
        let bound = drift.iter().map(|v| v * v).sum::<f64>().sqrt().max(sigma.iter().map(|v| v * v).sum::<f64>().sqrt());
        Ok(Self::new(
            d,
            Arc::new(move |_, out| out.copy_from_slice(&drift)),
            Arc::new(move |_, out| out.copy_from_slice(&sigma)),
        )?
        .with_growth_exponent(0.0)
        .with_lipschitz_sigma(f64::MIN_POSITIVE)
        .with_bound(bound))
    }

    /// `b = 0`, `σ = I`.
    pub fn pure_noise(dimension: usize) -> Result<Self> {
        Self::constant(vec![0.0; dimension], identity(dimension))
    }

    /// `b(x) = -x`, `σ = I`.
    pub fn ou_type(dimension: usize) -> Result<Self> {
        Ok(Self::new(
            dimension,
            Arc::new(|x, out| {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -v;
                }
            }),
            Arc::new(move |_, out| out.copy_from_slice(&identity(out.len().isqrt()))),
        )?
        .with_growth_exponent(1.0)
        .with_lipschitz_sigma(f64::MIN_POSITIVE))
    }

    /// `b_i(x) = -sin(x_i)`, `σ(x) = diag(1 + cos(x_i)/4)`.
    pub fn bounded_smooth(dimension: usize) -> Result<Self> {
        let d = dimension as f64;
        Ok(Self::new(
            dimension,
            Arc::new(|x, out| {
                for (o, v) in out.iter_mut().zip(x) {
                    *o = -v.sin();
                }
            }),
            Arc::new(move |x, out| {
                let d = x.len();
                out.fill(0.0);
                for i in 0..d {
                    out[i * d + i] = 1.0 + 0.25 * x[i].cos();
                }
            }),
        )?
        .with_growth_exponent(0.0)
        .with_lipschitz_sigma(0.25)
        .with_bound(1.25 * d.sqrt()))
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    #[inline]
    pub fn drift_into(&self, x: &[f64], out: &mut [f64]) {
        (self.drift)(x, out)
    }

    #[inline]
    pub fn diffusion_into(&self, x: &[f64], out: &mut [f64]) {
        (self.diffusion)(x, out)
    }

    pub fn drift(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        self.drift_into(x, &mut out);
        out
    }

    pub fn diffusion(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension * self.dimension];
        self.diffusion_into(x, &mut out);
        out
    }

    /// Checks the declared bound (if any) at the given probe points.
    pub fn check_bound(&self, probes: &[Vec<f64>]) -> Result<()> {
        let Some(bound) = self.bound else {
            return Ok(());
        };
        for x in probes {
            self.check_dimension(x)?;
            let b = norm(&self.drift(x));
            let s = norm(&self.diffusion(x));
            if b > bound * (1.0 + 1e-12) || s > bound * (1.0 + 1e-12) {
                return Err(Error::Precondition(format!(
                    "declared bound {bound} exceeded at {x:?}: |b| = {b}, |σ|_HS = {s}"
                )));
            }
        }
        Ok(())
    }

    pub(crate) fn check_dimension(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::Dimension(format!(
                "state has {} components, coefficients expect {}",
                x.len(),
                self.dimension
            )));
        }
        Ok(())
    }
}

fn identity(d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d * d];
    for i in 0..d {
        m[i * d + i] = 1.0;
    }
    m
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Uniform grid on `[0, n_steps h]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeGrid {
    n_steps: usize,
    h: f64,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(Error::domain("horizon", horizon, "(0, inf)"));
        }
        if n_steps == 0 {
            return Err(Error::domain("n_steps", 0.0, "[1, inf)"));
        }
        Ok(TimeGrid {
            n_steps,
            h: horizon / n_steps as f64,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn horizon(&self) -> f64 {
        self.h * self.n_steps as f64
    }

    pub fn time(&self, k: usize) -> f64 {
        self.h * k as f64
    }
}

/// One simulated trajectory, states stored flat (`n_steps + 1` blocks of `d`).
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub grid: TimeGrid,
    pub dimension: usize,
    pub states: Vec<f64>,
    pub key: RngStreamKey,
}

impl SamplePath {
    pub fn len(&self) -> usize {
        self.states.len() / self.dimension
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dimension..(k + 1) * self.dimension]
    }

    pub fn terminal(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn iter_states(&self) -> impl Iterator<Item = &[f64]> {
        self.states.chunks(self.dimension)
    }
}

/// Noise driving a simulation.
#[derive(Debug, Clone, PartialEq)]
pub enum NoiseDriver {
    Stable {
        noise: CylindricalNoiseSpec,
        mode: IncrementSamplerMode,
    },
    /// `√2 B`.
    Brownian,
}

#[derive(Debug, Clone)]
enum StepNoise {
    Stable(CylindricalSampler),
    Brownian(BrownianSampler),
}

/// Euler–Maruyama stepper with everything that does not depend on the path
/// precomputed.
#[derive(Debug, Clone)]
pub struct PathSimulator {
    coeffs: CoefficientField,
    grid: TimeGrid,
    noise: StepNoise,
    taming: bool,
}

/// Reusable per-thread buffers.
#[derive(Debug, Clone)]
pub struct Workspace {
    x: Vec<f64>,
    drift: Vec<f64>,
    sigma: Vec<f64>,
    dl: Vec<f64>,
}

impl Workspace {
    pub fn new(d: usize) -> Self {
        Workspace {
            x: vec![0.0; d],
            drift: vec![0.0; d],
            sigma: vec![0.0; d * d],
            dl: vec![0.0; d],
        }
    }

    pub fn state(&self) -> &[f64] {
        &self.x
    }
}

impl PathSimulator {
    pub fn new(coeffs: &CoefficientField, driver: &NoiseDriver, grid: TimeGrid, taming: bool) -> Result<Self> {
        let noise = match driver {
            NoiseDriver::Stable { noise, mode } => {
                if noise.dimension() != coeffs.dimension() {
                    return Err(Error::Dimension(format!(
                        "noise has {} components, coefficients have dimension {}",
                        noise.dimension(),
                        coeffs.dimension()
                    )));
                }
                StepNoise::Stable(CylindricalSampler::new(noise, grid.h(), *mode)?)
            }
            NoiseDriver::Brownian => StepNoise::Brownian(BrownianSampler::new(coeffs.dimension(), grid.h())?),
        };
        Ok(PathSimulator {
            coeffs: coeffs.clone(),
            grid,
            noise,
            taming,
        })
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn workspace(&self) -> Workspace {
        Workspace::new(self.coeffs.dimension())
    }

    /// Runs one path, calling `observe(k, X_k)` for every grid point.
    pub fn run<F: FnMut(usize, &[f64])>(
        &self,
        x0: &[f64],
        key: RngStreamKey,
        ws: &mut Workspace,
        mut observe: F,
    ) -> Result<()> {
        self.coeffs.check_dimension(x0)?;
        let d = self.coeffs.dimension();
        let h = self.grid.h();
        ws.x.copy_from_slice(x0);
        observe(0, &ws.x);
        for k in 0..self.grid.n_steps() {
            let step_key = key.derive(k as u64);
            match &self.noise {
                StepNoise::Stable(s) => s.sample_into(step_key, &mut ws.dl),
                StepNoise::Brownian(b) => b.sample_into(step_key, &mut ws.dl),
            }
            self.coeffs.drift_into(&ws.x, &mut ws.drift);
            self.coeffs.diffusion_into(&ws.x, &mut ws.sigma);
            let drift_scale = if self.taming {
                h / (1.0 + h * norm(&ws.drift))
            } else {
                h
            };
            for i in 0..d {
                let row = &ws.sigma[i * d..(i + 1) * d];
                let noise: f64 = row.iter().zip(&ws.dl).map(|(s, l)| s * l).sum();
                ws.x[i] += ws.drift[i] * drift_scale + noise;
            }
            if ws.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Divergence { step: k + 1 });
            }
            observe(k + 1, &ws.x);
        }
        Ok(())
    }

    /// Terminal state only; the result is left in `ws.state()`.
    pub fn terminal(&self, x0: &[f64], key: RngStreamKey, ws: &mut Workspace) -> Result<()> {
        self.run(x0, key, ws, |_, _| {})
    }

    pub fn path(&self, x0: &[f64], key: RngStreamKey) -> Result<SamplePath> {
        let d = self.coeffs.dimension();
        let mut states = Vec::with_capacity((self.grid.n_steps() + 1) * d);
        let mut ws = self.workspace();
        self.run(x0, key, &mut ws, |_, x| states.extend_from_slice(x))?;
        Ok(SamplePath {
            grid: self.grid,
            dimension: d,
            states,
            key,
        })
    }
}

/// Euler–Maruyama path of the jump equation. With `taming`, the drift
/// increment is `b h / (1 + h|b|)`.
pub fn euler_maruyama_jump(
    coeffs: &CoefficientField,
    noise: &CylindricalNoiseSpec,
    grid: TimeGrid,
    x0: &[f64],
    mode: IncrementSamplerMode,
    key: RngStreamKey,
    taming: bool,
) -> Result<SamplePath> {
    let driver = NoiseDriver::Stable {
        noise: noise.clone(),
        mode,
    };
    PathSimulator::new(coeffs, &driver, grid, taming)?.path(x0, key)
}

/// Euler–Maruyama path of the limit equation `dX = b dt + √2 σ dB`.
pub fn euler_maruyama_diffusion(
    coeffs: &CoefficientField,
    grid: TimeGrid,
    x0: &[f64],
    key: RngStreamKey,
) -> Result<SamplePath> {
    PathSimulator::new(coeffs, &NoiseDriver::Brownian, grid, false)?.path(x0, key)
}

/// Monte Carlo average of `(max_k |X_k|)^θ`.
pub fn sup_moment_statistic(paths: &[SamplePath], theta: f64) -> Result<f64> {
    if paths.is_empty() {
        return Err(Error::Precondition("sup_moment_statistic needs at least one path".into()));
    }
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::domain("theta", theta, "(0, 1)"));
    }
    let total: f64 = paths
        .iter()
        .map(|p| p.iter_states().map(norm).fold(0.0, f64::max).powf(theta))
        .sum();
    Ok(total / paths.len() as f64)
}
