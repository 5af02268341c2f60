//! Experiment configuration: a flat TOML file, parsed, defaulted and
//! range-checked into an [`ExperimentConfig`].

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Seed used when the config does not name one.
pub const DEFAULT_SEED: u64 = 20_240_611;
pub const DEFAULT_OUTPUT_DIR: &str = "results";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Lemma22Suite,
    SamplerValidation,
    GeneratorRate,
    SdeWeakRate,
    Example41,
    KolmogorovResidual,
}

impl Experiment {
    pub const ALL: [Experiment; 6] = [
        Experiment::Lemma22Suite,
        Experiment::SamplerValidation,
        Experiment::GeneratorRate,
        Experiment::SdeWeakRate,
        Experiment::Example41,
        Experiment::KolmogorovResidual,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::Lemma22Suite => "lemma22_suite",
            Experiment::SamplerValidation => "sampler_validation",
            Experiment::GeneratorRate => "generator_rate",
            Experiment::SdeWeakRate => "sde_weak_rate",
            Experiment::Example41 => "example41",
            Experiment::KolmogorovResidual => "kolmogorov_residual",
        }
    }

    pub fn summary(self) -> &'static str {
        match self {
            Experiment::Lemma22Suite => "closed-form Lévy-measure moments against quadrature",
            Experiment::SamplerValidation => "exact vs decomposition sampler (KS) and characteristic function check",
            Experiment::GeneratorRate => "generator gap Lα f − L f by quadrature and its rate in 2 − α",
            Experiment::SdeWeakRate => "Monte Carlo weak error of the SDE, rate fit and W1 distances",
            Experiment::Example41 => "closed-form |E|L_1| − 2/√π| witness of the linear rate",
            Experiment::KolmogorovResidual => "Monte Carlo residual of the backward Kolmogorov equation",
        }
    }

    fn default_alpha_grid(self) -> Vec<f64> {
        match self {
            Experiment::Lemma22Suite => vec![1.51, 1.6, 1.75, 1.9, 1.99],
            Experiment::SamplerValidation => vec![1.6, 1.9],
            Experiment::GeneratorRate => vec![1.9, 1.95, 1.99, 1.995],
            Experiment::SdeWeakRate => vec![1.7, 1.8, 1.9, 1.95],
            Experiment::Example41 => vec![1.9, 1.95, 1.99, 1.995, 1.999],
            Experiment::KolmogorovResidual => vec![],
        }
    }

    fn default_beta(self) -> Beta {
        match self {
            Experiment::SamplerValidation => Beta::List(vec![0.0, 0.5, -0.9]),
            _ => Beta::Single(0.0),
        }
    }

    fn default_coefficients(self) -> Preset {
        match self {
            Experiment::SdeWeakRate => Preset::OuType,
            _ => Preset::PureNoise,
        }
    }

    fn default_n_steps(self) -> usize {
        match self {
            Experiment::SamplerValidation => 100,
            Experiment::KolmogorovResidual => 64,
            _ => 1024,
        }
    }

    fn default_n_paths(self) -> u64 {
        match self {
            Experiment::SamplerValidation => 10_000,
            _ => 100_000,
        }
    }

    fn default_x0(self) -> f64 {
        match self {
            Experiment::GeneratorRate => 0.0,
            _ => 0.3,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, ConfigError> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| ConfigError::UnknownExperiment(s.to_string()))
    }
}

/// Named coefficient presets.
///
/// - `pure_noise`: `b = 0`, `σ = I`
/// - `ou_type`: `b(x) = −x`, `σ = I`
/// - `bounded_smooth`: `b_i(x) = −sin x_i`, `σ = diag(1 + cos(x_i)/4)`
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    PureNoise,
    OuType,
    BoundedSmooth,
}

impl Preset {
    fn parse(s: &str) -> Result<Self, ConfigError> {
        match s {
            "pure_noise" => Ok(Preset::PureNoise),
            "ou_type" => Ok(Preset::OuType),
            "bounded_smooth" => Ok(Preset::BoundedSmooth),
            other => Err(ConfigError::UnknownPreset(other.to_string())),
        }
    }

    pub fn build(self, dimension: usize) -> stablesde::Result<stablesde::CoefficientField> {
        use stablesde::CoefficientField as C;
        match self {
            Preset::PureNoise => C::pure_noise(dimension),
            Preset::OuType => C::ou_type(dimension),
            Preset::BoundedSmooth => C::bounded_smooth(dimension),
        }
    }
}

/// One skewness for every component, or a list (per component, or the sweep
/// of `sampler_validation`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Beta {
    Single(f64),
    List(Vec<f64>),
}

impl Beta {
    pub fn values(&self) -> Vec<f64> {
        match self {
            Beta::Single(b) => vec![*b],
            Beta::List(v) => v.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplerChoice {
    Exact,
    Decomposition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingChoice {
    Independent,
    Coupled,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    experiment: String,
    alpha_grid: Option<Vec<f64>>,
    beta: Option<Beta>,
    dimension: Option<usize>,
    coefficients: Option<String>,
    #[serde(rename = "T")]
    horizon: Option<f64>,
    n_steps: Option<usize>,
    n_paths: Option<u64>,
    seed: Option<u64>,
    workers: Option<usize>,
    output_dir: Option<PathBuf>,
    x0: Option<f64>,
    t: Option<f64>,
    frequency: Option<f64>,
    sampler: Option<SamplerChoice>,
    pairing: Option<PairingChoice>,
    w1_paths: Option<u64>,
    delta_split: Option<f64>,
    tol: Option<f64>,
    fd_step: Option<f64>,
}

/// Fully resolved configuration. Every default is filled in, so echoing this
/// struct is enough to reproduce a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub alpha_grid: Vec<f64>,
    pub beta: Beta,
    pub dimension: usize,
    pub coefficients: Preset,
    #[serde(rename = "T")]
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: u64,
    pub seed: u64,
    pub workers: usize,
    pub output_dir: PathBuf,
    /// Starting point, repeated in every coordinate.
    pub x0: f64,
    /// Evaluation time of the Kolmogorov residual.
    pub t: f64,
    /// Frequency of the cosine test function.
    pub frequency: f64,
    pub sampler: SamplerChoice,
    pub pairing: PairingChoice,
    /// Paths per law for the W1 distances of `sde_weak_rate`.
    pub w1_paths: u64,
    pub delta_split: f64,
    pub tol: f64,
    pub fd_step: f64,
}

impl ExperimentConfig {
    /// All defaults for `experiment`.
    pub fn defaults(experiment: Experiment) -> Self {
        ExperimentConfig {
            experiment,
            alpha_grid: experiment.default_alpha_grid(),
            beta: experiment.default_beta(),
            dimension: 1,
            coefficients: experiment.default_coefficients(),
            horizon: 1.0,
            n_steps: experiment.default_n_steps(),
            n_paths: experiment.default_n_paths(),
            seed: DEFAULT_SEED,
            workers: 1,
            output_dir: PathBuf::from(DEFAULT_OUTPUT_DIR),
            x0: experiment.default_x0(),
            t: 0.5,
            frequency: 1.0,
            sampler: SamplerChoice::Decomposition,
            pairing: PairingChoice::Coupled,
            w1_paths: 10_000,
            delta_split: 0.5,
            tol: 1e-9,
            fd_step: 0.01,
        }
    }

    /// Shrinks the Monte Carlo sizes to a preset that finishes in seconds.
    pub fn smoke(mut self) -> Self {
        self.n_paths = self.n_paths.min(2_000);
        self.w1_paths = self.w1_paths.min(2_000);
        self.n_steps = self.n_steps.min(64);
        self
    }

    /// Skewness of each noise component.
    pub fn component_betas(&self) -> Vec<f64> {
        match &self.beta {
            Beta::Single(b) => vec![*b; self.dimension],
            Beta::List(v) => v.clone(),
        }
    }
}

fn range_error(field: &'static str, value: impl fmt::Display, legal: &'static str) -> ConfigError {
    ConfigError::Range {
        field,
        value: value.to_string(),
        legal,
    }
}

fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, col)
}

/// Parses, defaults and range-checks a config file.
pub fn validate_config(raw: &str) -> Result<ExperimentConfig, ConfigError> {
    let parsed: RawConfig = toml::from_str(raw).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_col(raw, s.start));
        ConfigError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    let experiment: Experiment = parsed.experiment.parse()?;
    let mut c = ExperimentConfig::defaults(experiment);
    if let Some(v) = parsed.alpha_grid {
        c.alpha_grid = v;
    }
    if let Some(v) = parsed.beta {
        c.beta = v;
    }
    if let Some(v) = parsed.dimension {
        c.dimension = v;
    }
    if let Some(v) = parsed.coefficients {
        c.coefficients = Preset::parse(&v)?;
    }
    if let Some(v) = parsed.horizon {
        c.horizon = v;
    }
    if let Some(v) = parsed.n_steps {
        c.n_steps = v;
    }
    if let Some(v) = parsed.n_paths {
        c.n_paths = v;
    }
    if let Some(v) = parsed.seed {
        c.seed = v;
    }
    if let Some(v) = parsed.workers {
        c.workers = v;
    }
    if let Some(v) = parsed.output_dir {
        c.output_dir = v;
    }
    if let Some(v) = parsed.x0 {
        c.x0 = v;
    }
    if let Some(v) = parsed.t {
        c.t = v;
    }
    if let Some(v) = parsed.frequency {
        c.frequency = v;
    }
    if let Some(v) = parsed.sampler {
        c.sampler = v;
    }
    if let Some(v) = parsed.pairing {
        c.pairing = v;
    }
    if let Some(v) = parsed.w1_paths {
        c.w1_paths = v;
    }
    if let Some(v) = parsed.delta_split {
        c.delta_split = v;
    }
    if let Some(v) = parsed.tol {
        c.tol = v;
    }
    if let Some(v) = parsed.fd_step {
        c.fd_step = v;
    }
    check_ranges(&c)?;
    Ok(c)
}

/// Range checks shared by file configs and programmatic ones.
pub fn check_ranges(c: &ExperimentConfig) -> Result<(), ConfigError> {
    for &a in &c.alpha_grid {
        if !(a > 1.0 && a < 2.0) {
            return Err(range_error("alpha_grid", a, "(1, 2)"));
        }
    }
    if c.alpha_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(range_error("alpha_grid", format!("{:?}", c.alpha_grid), "strictly increasing"));
    }
    if c.experiment != Experiment::KolmogorovResidual && c.alpha_grid.is_empty() {
        return Err(range_error("alpha_grid", "[]", "nonempty"));
    }
    for b in c.beta.values() {
        if !(-1.0..=1.0).contains(&b) {
            return Err(range_error("beta", b, "[-1, 1]"));
        }
    }
    if c.dimension == 0 {
        return Err(range_error("dimension", 0, "[1, inf)"));
    }
    if let Beta::List(v) = &c.beta {
        if c.experiment != Experiment::SamplerValidation && v.len() != c.dimension {
            return Err(range_error("beta", format!("{v:?}"), "a single value or one per dimension"));
        }
        if v.is_empty() {
            return Err(range_error("beta", "[]", "nonempty"));
        }
    }
    if !(c.horizon > 0.0 && c.horizon.is_finite()) {
        return Err(range_error("T", c.horizon, "(0, inf)"));
    }
    if c.n_steps == 0 {
        return Err(range_error("n_steps", 0, "[1, inf)"));
    }
    if c.n_paths < 100 {
        return Err(range_error("n_paths", c.n_paths, "[100, inf)"));
    }
    if c.w1_paths < 1 {
        return Err(range_error("w1_paths", c.w1_paths, "[1, inf)"));
    }
    if c.workers == 0 {
        return Err(range_error("workers", 0, "[1, inf)"));
    }
    if !c.x0.is_finite() {
        return Err(range_error("x0", c.x0, "finite"));
    }
    if !(c.t >= 0.0 && c.t < c.horizon) {
        return Err(range_error("t", c.t, "[0, T)"));
    }
    if !(c.frequency.is_finite() && c.frequency != 0.0) {
        return Err(range_error("frequency", c.frequency, "finite and nonzero"));
    }
    if !(c.delta_split > 0.0 && c.delta_split <= 1.0) {
        return Err(range_error("delta_split", c.delta_split, "(0, 1]"));
    }
    if !(c.tol > 0.0) {
        return Err(range_error("tol", c.tol, "(0, inf)"));
    }
    if !(c.fd_step > 0.0 && c.fd_step < c.horizon - c.t) {
        return Err(range_error("fd_step", c.fd_step, "(0, T - t)"));
    }
    Ok(())
}
