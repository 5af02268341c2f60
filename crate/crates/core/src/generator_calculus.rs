//! Deterministic evaluation of the two generators
//!
//! ```text
//! L   f(x) = b·∇f + Tr(σσᵀ H f)
//! Lα  f(x) = b·∇f + Σ_i ∫ [f(x + σ_i z) − f(x) − 1{|z|≤1} σ_i z·∇f(x)] ν_i(dz)
//! ```
//!
//! and a Monte Carlo check of the backward Kolmogorov equation `(∂_t + L)u = 0`.
//!
//! The jump integral is split at `δ` and at 1. Below `δ` the remainder uses the
//! Taylor form `∫₀¹ (1−s) vᵀ H(x+sv) v ds` with the base-point Hessian term
//! integrated in closed form, so there is no cancellation near `z = 0`.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::levy_measure::{CylindricalNoiseSpec, LevyMeasureSpec};
use crate::quadrature::{gauss_legendre8_unit, integrate, Estimate, Tolerance};
use crate::rng::RngStreamKey;
use crate::sde_solver::{CoefficientField, NoiseDriver, PathSimulator, TimeGrid};
use crate::stats::{sharded, MeanVar, ENSEMBLE_SHARDS};

pub const DEFAULT_DELTA_SPLIT: f64 = 0.5;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Below this jump length the naive remainder `f(x+v) − f(x) − v·∇f` is never used.
pub const NAIVE_REMAINDER_FLOOR: f64 = 1e-3;

const INNER_LOG_FLOOR: f64 = -69.0; // ln 1e-30
const MAX_INTERVALS: usize = 4000;

pub type ScalarField = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type VectorOut = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// A `C^{2,γ}` test function with analytic gradient and Hessian.
#[derive(Clone)]
pub struct TestFunction {
    dimension: usize,
    eval: ScalarField,
    gradient: VectorOut,
    hessian: VectorOut,
    pub holder_gamma: f64,
    /// `sup |f|`, when finite.
    pub sup_norm: Option<f64>,
    pub name: String,
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("name", &self.name)
            .field("dimension", &self.dimension)
            .field("sup_norm", &self.sup_norm)
            .finish_non_exhaustive()
    }
}

impl TestFunction {
    pub fn new(
        name: impl Into<String>,
        dimension: usize,
        eval: ScalarField,
        gradient: VectorOut,
        hessian: VectorOut,
        sup_norm: Option<f64>,
    ) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::Dimension("test function dimension must be >= 1".into()));
        }
        Ok(TestFunction {
            dimension,
            eval,
            gradient,
            hessian,
            holder_gamma: 1.0,
            sup_norm,
            name: name.into(),
        })
    }

    /// `cos(ξ·x + φ)`.
    pub fn cosine(freq: &[f64], phase: f64) -> Result<Self> {
        let xi = freq.to_vec();
        let (a, b, c) = (xi.clone(), xi.clone(), xi.clone());
        Self::new(
            format!("cos({freq:?}·x + {phase})"),
            freq.len(),
            Arc::new(move |x| (dot(&a, x) + phase).cos()),
            Arc::new(move |x, out| {
                let s = -(dot(&b, x) + phase).sin();
                for (o, k) in out.iter_mut().zip(&b) {
                    *o = s * k;
                }
            }),
            Arc::new(move |x, out| {
                let d = c.len();
                let v = -(dot(&c, x) + phase).cos();
                for j in 0..d {
                    for k in 0..d {
                        out[j * d + k] = v * c[j] * c[k];
                    }
                }
            }),
            Some(1.0),
        )
    }

    /// `exp(−|x − c|² / (2w²))`.
    pub fn gaussian_bump(center: &[f64], width: f64) -> Result<Self> {
        if !(width > 0.0 && width.is_finite()) {
            return Err(Error::domain("width", width, "(0, inf)"));
        }
        let inv = 1.0 / (width * width);
        let (c0, c1, c2) = (center.to_vec(), center.to_vec(), center.to_vec());
        let bump = move |c: &[f64], x: &[f64]| (-0.5 * inv * dist2(c, x)).exp();
        Self::new(
            format!("bump({center:?}, {width})"),
            center.len(),
            Arc::new(move |x| bump(&c0, x)),
            Arc::new(move |x, out| {
                let f = bump(&c1, x);
                for ((o, xi), ci) in out.iter_mut().zip(x).zip(&c1) {
                    *o = -(xi - ci) * inv * f;
                }
            }),
            Arc::new(move |x, out| {
                let d = c2.len();
                let f = bump(&c2, x);
                for j in 0..d {
                    for k in 0..d {
                        let diag = if j == k { inv } else { 0.0 };
                        out[j * d + k] = f * ((x[j] - c2[j]) * (x[k] - c2[k]) * inv * inv - diag);
                    }
                }
            }),
            Some(1.0),
        )
    }

    pub fn constant(dimension: usize, value: f64) -> Result<Self> {
        Self::new(
            format!("const({value})"),
            dimension,
            Arc::new(move |_| value),
            Arc::new(|_, out| out.fill(0.0)),
            Arc::new(|_, out| out.fill(0.0)),
            Some(value.abs()),
        )
    }

    /// `x ↦ x_i`. Unbounded.
    pub fn coordinate(dimension: usize, i: usize) -> Result<Self> {
        if i >= dimension {
            return Err(Error::Dimension(format!("coordinate {i} of a {dimension}-vector")));
        }
        Self::new(
            format!("x_{i}"),
            dimension,
            Arc::new(move |x| x[i]),
            Arc::new(move |_, out| {
                out.fill(0.0);
                out[i] = 1.0;
            }),
            Arc::new(|_, out| out.fill(0.0)),
            None,
        )
    }

    /// Second-order polynomial `v + g·(y−a) + ½(y−a)ᵀH(y−a)`. Unbounded.
    pub fn quadratic(anchor: &[f64], value: f64, grad: &[f64], hess: &[f64]) -> Result<Self> {
        let d = anchor.len();
        if grad.len() != d || hess.len() != d * d {
            return Err(Error::Dimension("quadratic: gradient/Hessian size mismatch".into()));
        }
        let (a, g, h) = (anchor.to_vec(), grad.to_vec(), hess.to_vec());
        let (a1, g1, h1) = (a.clone(), g.clone(), h.clone());
        let h2 = h.clone();
        Self::new(
            "quadratic",
            d,
            Arc::new(move |y| {
                let dy: Vec<f64> = y.iter().zip(&a).map(|(p, q)| p - q).collect();
                value + dot(&g, &dy) + 0.5 * quad_form(&h, &dy)
            }),
            Arc::new(move |y, out| {
                let dy: Vec<f64> = y.iter().zip(&a1).map(|(p, q)| p - q).collect();
                for j in 0..d {
                    out[j] = g1[j] + (0..d).map(|k| 0.5 * (h1[j * d + k] + h1[k * d + j]) * dy[k]).sum::<f64>();
                }
            }),
            Arc::new(move |_, out| {
                for j in 0..d {
                    for k in 0..d {
                        out[j * d + k] = 0.5 * (h2[j * d + k] + h2[k * d + j]);
                    }
                }
            }),
            None,
        )
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn is_bounded(&self) -> bool {
        self.sup_norm.is_some()
    }

    #[inline]
    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension];
        (self.gradient)(x, &mut out);
        out
    }

    pub fn hessian(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dimension * self.dimension];
        (self.hessian)(x, &mut out);
        out
    }

    /// Compares gradient and Hessian with central differences of `eval` (and
    /// of the gradient) at each probe, step `1e-5·(1+|x|)`.
    pub fn check_derivatives(&self, probes: &[Vec<f64>], rel_tol: f64) -> Result<()> {
        let d = self.dimension;
        for x in probes {
            self.check_dimension(x)?;
            let step = 1e-5 * (1.0 + norm(x));
            let g = self.gradient(x);
            let h = self.hessian(x);
            let mut xp = x.clone();
            for j in 0..d {
                xp[j] = x[j] + step;
                let (fp, gp) = (self.eval(&xp), self.gradient(&xp));
                xp[j] = x[j] - step;
                let (fm, gm) = (self.eval(&xp), self.gradient(&xp));
                xp[j] = x[j];
                let fd = (fp - fm) / (2.0 * step);
                if !close(fd, g[j], rel_tol) {
                    return Err(Error::Precondition(format!("{}: d/dx_{j} at {x:?}: analytic {} vs {fd}", self.name, g[j])));
                }
                for k in 0..d {
                    let fd = (gp[k] - gm[k]) / (2.0 * step);
                    if !close(fd, h[k * d + j], rel_tol) {
                        return Err(Error::Precondition(format!(
                            "{}: d²/dx_{k}dx_{j} at {x:?}: analytic {} vs {fd}",
                            self.name,
                            h[k * d + j]
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn check_dimension(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dimension {
            return Err(Error::Dimension(format!(
                "point has {} components, test function expects {}",
                x.len(),
                self.dimension
            )));
        }
        Ok(())
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| p * q).sum()
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn quad_form(h: &[f64], v: &[f64]) -> f64 {
    let d = v.len();
    let mut s = 0.0;
    for j in 0..d {
        for k in 0..d {
            s += v[j] * h[j * d + k] * v[k];
        }
    }
    s
}

fn check_consistent(coeffs: &CoefficientField, f: &TestFunction, x: &[f64]) -> Result<()> {
    if coeffs.dimension() != f.dimension() {
        return Err(Error::Dimension(format!(
            "coefficients have dimension {}, test function {}",
            coeffs.dimension(),
            f.dimension()
        )));
    }
    f.check_dimension(x)
}

/// `b·g + Tr(σσᵀ H)` for given derivatives at `x`.
pub fn limit_generator_from_derivatives(coeffs: &CoefficientField, x: &[f64], grad: &[f64], hess: &[f64]) -> f64 {
    let d = coeffs.dimension();
    let b = coeffs.drift(x);
    let s = coeffs.diffusion(x);
    // Tr(σσᵀH) = Σ_i σ_iᵀ H σ_i over the columns σ_i
    let trace: f64 = (0..d).map(|i| quad_form(hess, &column(&s, d, i))).sum();
    dot(&b, grad) + trace
}

/// `L f(x) = b·∇f + Tr(σσᵀ H f)`; the trace carries coefficient 1 because the
/// limit equation is driven by `√2 B`.
pub fn apply_limit_generator(coeffs: &CoefficientField, f: &TestFunction, x: &[f64]) -> Result<f64> {
    check_consistent(coeffs, f, x)?;
    Ok(limit_generator_from_derivatives(coeffs, x, &f.gradient(x), &f.hessian(x)))
}

fn column(sigma: &[f64], d: usize, i: usize) -> Vec<f64> {
    (0..d).map(|j| sigma[j * d + i]).collect()
}

/// Pieces of `Lα f(x)`, summed over noise components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorTerms {
    pub drift: f64,
    /// `|z| ≤ δ`, compensated.
    pub inner: f64,
    /// `δ < |z| ≤ 1`, compensated.
    pub band: f64,
    /// `|z| > 1`, uncompensated.
    pub outer: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AlphaGeneratorValue {
    pub value: f64,
    pub error_bound: f64,
    pub terms: GeneratorTerms,
}

/// `f` restricted to the line `x + z v`.
struct Line<'a> {
    f: &'a TestFunction,
    x: &'a [f64],
    v: Vec<f64>,
    v_norm: f64,
    f0: f64,
    slope0: f64,
    curv0: f64,
    buf_point: Vec<f64>,
    buf_hess: Vec<f64>,
}

impl<'a> Line<'a> {
    fn new(f: &'a TestFunction, x: &'a [f64], v: Vec<f64>) -> Self {
        let f0 = f.eval(x);
        let slope0 = dot(&f.gradient(x), &v);
        let curv0 = quad_form(&f.hessian(x), &v);
        let d = x.len();
        Line {
            f,
            x,
            v_norm: norm(&v),
            v,
            f0,
            slope0,
            curv0,
            buf_point: vec![0.0; d],
            buf_hess: vec![0.0; d * d],
        }
    }

    fn point(&mut self, z: f64) {
        for ((p, xi), vi) in self.buf_point.iter_mut().zip(self.x).zip(&self.v) {
            *p = xi + z * vi;
        }
    }

    fn value(&mut self, z: f64) -> f64 {
        self.point(z);
        self.f.eval(&self.buf_point)
    }

    fn curvature(&mut self, z: f64) -> f64 {
        self.point(z);
        (self.f.hessian)(&self.buf_point, &mut self.buf_hess);
        quad_form(&self.buf_hess, &self.v)
    }

    /// `f(x+zv) − f(x) − z v·∇f(x) − ½z² vᵀH(x)v` via the Taylor form.
    fn taylor_excess(&mut self, z: f64) -> f64 {
        let c0 = self.curv0;
        z * z * gauss_legendre8_unit(|s| (1.0 - s) * (self.curvature(s * z) - c0))
    }

    /// `f(x+zv) − f(x) − z v·∇f(x)` via the Taylor form.
    fn taylor_remainder(&mut self, z: f64) -> f64 {
        z * z * gauss_legendre8_unit(|s| (1.0 - s) * self.curvature(s * z))
    }

    fn naive_remainder(&mut self, z: f64) -> f64 {
        self.value(z) - self.f0 - z * self.slope0
    }

    fn remainder(&mut self, z: f64) -> f64 {
        if (z * self.v_norm).abs() >= NAIVE_REMAINDER_FLOOR {
            self.naive_remainder(z)
        } else {
            self.taylor_remainder(z)
        }
    }
}

/// First-order remainder of `f` along `v` at `x`, in both forms. Exposed for
/// cross-checks; returns `(taylor, naive)`.
pub fn remainder_forms(f: &TestFunction, x: &[f64], v: &[f64]) -> Result<(f64, f64)> {
    f.check_dimension(x)?;
    f.check_dimension(v)?;
    let mut line = Line::new(f, x, v.to_vec());
    Ok((line.taylor_remainder(1.0), line.naive_remainder(1.0)))
}

fn component_terms(
    spec: &LevyMeasureSpec,
    line: &mut Line<'_>,
    delta: f64,
    sup: f64,
    gamma: f64,
    tol: f64,
) -> Result<(Estimate, Estimate, Estimate)> {
    let alpha = spec.alpha();
    let (cp, cm) = (spec.c_plus(), spec.c_minus());
    let qtol = Tolerance::absolute(tol).with_max_intervals(MAX_INTERVALS);

    // Inner: closed-form base-point Hessian term plus the excess, in u = ln z.
    let base = 0.5 * line.curv0 * spec.truncated_second_moment(delta)?;
    let excess = |line: &mut Line<'_>, u: f64| {
        let z = u.exp();
        (cp * line.taylor_excess(z) + cm * line.taylor_excess(-z)) * (-alpha * u).exp()
    };
    let mut inner = integrate(|u| excess(line, u), INNER_LOG_FLOOR, delta.ln(), qtol)?;
    // excess ~ z^{2+γ}: bound the dropped piece below the floor
    inner.error += excess(line, INNER_LOG_FLOOR).abs() / (2.0 + gamma - alpha);
    inner.value += base;

    let band = if delta < 1.0 {
        integrate(
            |z| (cp * line.remainder(z) + cm * line.remainder(-z)) * z.powf(-1.0 - alpha),
            delta,
            1.0,
            qtol,
        )?
    } else {
        Estimate::ZERO
    };

    // Outer: the −f(x) part is exact; the rest is integrated on panels up to a
    // cutoff whose tail is below tol/2.
    let mass = (cp + cm) / alpha;
    let cutoff = (2.0 * sup * (cp + cm) / (alpha * tol)).powf(1.0 / alpha).max(1.0);
    let width = 2.0 / line.v_norm;
    let mut outer = Estimate {
        value: -line.f0 * mass,
        error: sup * (cp + cm) * cutoff.powf(-alpha) / alpha,
    };
    let mut a = 1.0;
    while a < cutoff {
        let b = (2.0 * a).min(cutoff);
        let pieces = ((b - a) / width).ceil().max(1.0) as usize;
        let step = (b - a) / pieces as f64;
        for k in 0..pieces {
            let lo = a + k as f64 * step;
            let hi = if k + 1 == pieces { b } else { lo + step };
            // budget ∝ length, floored at rounding level of the integrand
            let budget = (0.5 * tol / cutoff).max(1e3 * f64::EPSILON * sup * (cp + cm) * lo.powf(-1.0 - alpha));
            let piece_tol = Tolerance::absolute(budget * (hi - lo)).with_max_intervals(MAX_INTERVALS);
            outer = outer
                + integrate(
                    |z| (cp * line.value(z) + cm * line.value(-z)) * z.powf(-1.0 - alpha),
                    lo,
                    hi,
                    piece_tol,
                )?;
        }
        a = b;
    }
    Ok((inner, band, outer))
}

/// `Lα f(x)` by adaptive quadrature. Requires a bounded `f`.
///
/// The outer integral runs to a cutoff of order `tol^{-1/α}`, so the cost
/// grows quickly for small α and tight tolerances.
pub fn apply_alpha_generator(
    coeffs: &CoefficientField,
    noise: &CylindricalNoiseSpec,
    f: &TestFunction,
    x: &[f64],
    delta_split: f64,
    tol: f64,
) -> Result<AlphaGeneratorValue> {
    check_consistent(coeffs, f, x)?;
    if noise.dimension() != coeffs.dimension() {
        return Err(Error::Dimension(format!(
            "noise has {} components, coefficients have dimension {}",
            noise.dimension(),
            coeffs.dimension()
        )));
    }
    if !(delta_split > 0.0 && delta_split <= 1.0) {
        return Err(Error::domain("delta_split", delta_split, "(0, 1]"));
    }
    if !(tol > 0.0) {
        return Err(Error::domain("tol", tol, "(0, inf)"));
    }
    let Some(sup) = f.sup_norm else {
        return Err(Error::Precondition(format!("{} is unbounded; the jump integrals need a bounded f", f.name)));
    };
    let d = coeffs.dimension();
    let sigma = coeffs.diffusion(x);
    let drift = dot(&coeffs.drift(x), &f.gradient(x));
    let mut inner = Estimate::ZERO;
    let mut band = Estimate::ZERO;
    let mut outer = Estimate::ZERO;
    for (i, spec) in noise.components().iter().enumerate() {
        let v = column(&sigma, d, i);
        if norm(&v) == 0.0 {
            continue;
        }
        let mut line = Line::new(f, x, v);
        let (a, b, c) = component_terms(spec, &mut line, delta_split, sup, f.holder_gamma, tol)?;
        inner = inner + a;
        band = band + b;
        outer = outer + c;
    }
    let total = inner + band + outer;
    Ok(AlphaGeneratorValue {
        value: drift + total.value,
        error_bound: total.error,
        terms: GeneratorTerms {
            drift,
            inner: inner.value,
            band: band.value,
            outer: outer.value,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GeneratorEvalReport {
    pub alpha: f64,
    pub alpha_value: f64,
    pub limit_value: f64,
    pub gap: f64,
    pub quadrature_error_bound: f64,
    pub delta_split: f64,
    pub terms: GeneratorTerms,
}

/// `Lα f(x) − L f(x)`.
pub fn generator_gap(
    coeffs: &CoefficientField,
    noise: &CylindricalNoiseSpec,
    f: &TestFunction,
    x: &[f64],
    delta_split: f64,
    tol: f64,
) -> Result<GeneratorEvalReport> {
    let a = apply_alpha_generator(coeffs, noise, f, x, delta_split, tol)?;
    let limit = apply_limit_generator(coeffs, f, x)?;
    Ok(GeneratorEvalReport {
        alpha: noise.alpha(),
        alpha_value: a.value,
        limit_value: limit,
        gap: a.value - limit,
        quadrature_error_bound: a.error_bound,
        delta_split,
        terms: a.terms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KolmogorovResidual {
    /// `∂_t u + L u` at `(t, x)`.
    pub residual: f64,
    pub std_error: f64,
    pub u_value: f64,
    pub u_std_error: f64,
    pub time_derivative: f64,
    pub generator_value: f64,
    pub n_paths: u64,
    /// Set when the standard error exceeds the size of the terms being balanced.
    pub inconclusive: bool,
}

#[derive(Clone, Default)]
struct ResidualShard {
    residual: MeanVar,
    u: MeanVar,
    dt: MeanVar,
    grad: Vec<MeanVar>,
    hess: Vec<MeanVar>,
}

/// Monte Carlo check of `(∂_t + L) u = 0` for `u(t,x) = E[f(X_T) | X_t = x]`,
/// `X` the Euler scheme of the limit equation on steps of about `grid.h()`.
/// Every finite-difference stencil point reuses the same path keys.
#[allow(clippy::too_many_arguments)]
pub fn kolmogorov_residual(
    coeffs: &CoefficientField,
    f: &TestFunction,
    t: f64,
    x: &[f64],
    grid: TimeGrid,
    n_paths: u64,
    key: RngStreamKey,
    fd_step: f64,
) -> Result<KolmogorovResidual> {
    check_consistent(coeffs, f, x)?;
    if !f.is_bounded() {
        return Err(Error::Precondition(format!("{} is unbounded", f.name)));
    }
    let horizon = grid.horizon();
    if !(t >= 0.0 && t < horizon) {
        return Err(Error::domain("t", t, "[0, T)"));
    }
    let tau = horizon - t;
    if !(fd_step > 0.0 && fd_step < tau) {
        return Err(Error::domain("fd_step", fd_step, "(0, T - t)"));
    }
    if n_paths < 2 {
        return Err(Error::domain("n_paths", n_paths as f64, "[2, inf)"));
    }
    let d = coeffs.dimension();
    let eps = fd_step;
    let m = ((tau / grid.h()).round() as usize).max(1);
    let sim = |h: f64| PathSimulator::new(coeffs, &NoiseDriver::Brownian, TimeGrid::new(h, m)?, false);
    let (center, later, earlier) = (sim(tau)?, sim(tau + eps)?, sim(tau - eps)?);

    let mut starts: Vec<Vec<f64>> = Vec::new();
    let shifted = |moves: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(j, s) in moves {
            y[j] += s * eps;
        }
        y
    };
    for j in 0..d {
        starts.push(shifted(&[(j, 1.0)]));
        starts.push(shifted(&[(j, -1.0)]));
    }
    for j in 0..d {
        for k in j + 1..d {
            for (sj, sk) in [(1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                starts.push(shifted(&[(j, sj), (k, sk)]));
            }
        }
    }

    let shards = sharded(n_paths, ENSEMBLE_SHARDS, |range| -> Result<ResidualShard> {
        let mut acc = ResidualShard {
            grad: vec![MeanVar::default(); d],
            hess: vec![MeanVar::default(); d * d],
            ..Default::default()
        };
        let mut ws = center.workspace();
        let mut run = |s: &PathSimulator, y: &[f64], k: RngStreamKey| -> Result<f64> {
            s.terminal(y, k, &mut ws)?;
            Ok(f.eval(ws.state()))
        };
        let mut vals = vec![0.0; starts.len()];
        let mut grad = vec![0.0; d];
        let mut hess = vec![0.0; d * d];
        for p in range {
            let k = key.derive(p);
            let u0 = run(&center, x, k)?;
            let dt = -(run(&later, x, k)? - run(&earlier, x, k)?) / (2.0 * eps);
            for (v, y) in vals.iter_mut().zip(&starts) {
                *v = run(&center, y, k)?;
            }
            for j in 0..d {
                let (up, dn) = (vals[2 * j], vals[2 * j + 1]);
                grad[j] = (up - dn) / (2.0 * eps);
                hess[j * d + j] = (up - 2.0 * u0 + dn) / (eps * eps);
            }
            let mut idx = 2 * d;
            for j in 0..d {
                for l in j + 1..d {
                    let mixed = (vals[idx] - vals[idx + 1] - vals[idx + 2] + vals[idx + 3]) / (4.0 * eps * eps);
                    hess[j * d + l] = mixed;
                    hess[l * d + j] = mixed;
                    idx += 4;
                }
            }
            acc.u.push(u0);
            acc.dt.push(dt);
            acc.residual.push(dt + limit_generator_from_derivatives(coeffs, x, &grad, &hess));
            for (m, g) in acc.grad.iter_mut().zip(&grad) {
                m.push(*g);
            }
            for (m, h) in acc.hess.iter_mut().zip(&hess) {
                m.push(*h);
            }
        }
        Ok(acc)
    });

    let mut total = ResidualShard {
        grad: vec![MeanVar::default(); d],
        hess: vec![MeanVar::default(); d * d],
        ..Default::default()
    };
    for shard in shards {
        let s = shard?;
        total.residual.merge(&s.residual);
        total.u.merge(&s.u);
        total.dt.merge(&s.dt);
        for (a, b) in total.grad.iter_mut().zip(&s.grad) {
            a.merge(b);
        }
        for (a, b) in total.hess.iter_mut().zip(&s.hess) {
            a.merge(b);
        }
    }
    let grad: Vec<f64> = total.grad.iter().map(|m| m.mean).collect();
    let hess: Vec<f64> = total.hess.iter().map(|m| m.mean).collect();
    let surrogate = TestFunction::quadratic(x, total.u.mean, &grad, &hess)?;
    let generator_value = apply_limit_generator(coeffs, &surrogate, x)?;
    let time_derivative = total.dt.mean;
    let std_error = total.residual.std_error();
    let scale = time_derivative.abs().max(generator_value.abs());
    Ok(KolmogorovResidual {
        residual: time_derivative + generator_value,
        std_error,
        u_value: total.u.mean,
        u_std_error: total.u.std_error(),
        time_derivative,
        generator_value,
        n_paths,
        inconclusive: std_error > scale,
    })
}
