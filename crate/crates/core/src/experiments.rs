//! Monte Carlo orchestration: configs, per-replicate seeding, log-log rate
//! fits, distribution summaries and the headline experiments.
//!
//! Almost-sure rates are checked as scaling laws of per-n medians. Every
//! replicate draws one path at the largest `n` and evaluates its prefixes, so
//! each grid point still sees `R` independent stationary paths.
//! Aggregation folds rows in `(n, replicate)` order, so reports do not depend
//! on completion order or thread count.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bahadur::{increment_statistic, resolved_grid, BahadurDecomposition, Branch, QuantileLevels};
use crate::empirical::{
    ks_two_sample, oscillation_modulus, trimmed_mean, winsorized_mean, EmpiricalSample, WinsorVariant,
};
use crate::error::{Error, Result};
use crate::innovations::InnovationModel;
use crate::linear_process::{
    build_marginal_oracle, lrd_exponent, CoefficientSchedule, PathSimulator, TruncationPolicy, DEFAULT_MAX_LAG,
};
use crate::nonlinear_process::{
    build_map_oracle, estimate_gmc, ols, simulate_chain, simulate_m_dependent, GmcReport, IteratedMapModel, MapKind,
};
use crate::oracle::MarginalOracle;
use crate::quad::gauss_legendre_integrate;
use crate::rng::{derive_seed, Stream};

pub const BOOTSTRAP_RESAMPLES: usize = 200;
pub const MIN_REPLICATES: usize = 30;
pub const MIN_GMC_REPLICATES: usize = 100;
pub const MIN_FIT_POINTS: usize = 4;
/// Prefix of warnings produced during aggregation (recomputed on reaggregation).
pub const AGGREGATE_TAG: &str = "[aggregate] ";
pub const SCALING_NOTE: &str = "almost-sure rates are checked as scaling laws of per-n medians";
const TRIM_NODES: usize = 64;

fn config_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("{field}: {msg}"))
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Rate,
    UniformRate,
    Oscillation,
    Dichotomy,
    TrimmedClt,
    Gmc,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [
        Self::Rate,
        Self::UniformRate,
        Self::Oscillation,
        Self::Dichotomy,
        Self::TrimmedClt,
        Self::Gmc,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Rate => "rate",
            Self::UniformRate => "uniform-rate",
            Self::Oscillation => "oscillation",
            Self::Dichotomy => "dichotomy",
            Self::TrimmedClt => "trimmed-clt",
            Self::Gmc => "gmc",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProcessKind {
    Iid,
    Geometric,
    PolynomialSrd,
    Lrd,
    Ar1,
    Arch1,
    Tar,
}

impl ProcessKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Iid => "iid",
            Self::Geometric => "geometric",
            Self::PolynomialSrd => "polynomial_srd",
            Self::Lrd => "lrd",
            Self::Ar1 => "ar1",
            Self::Arch1 => "arch1",
            Self::Tar => "tar",
        }
    }

    fn is_map(&self) -> bool {
        matches!(self, Self::Ar1 | Self::Arch1 | Self::Tar)
    }
}

/// `[process]`: a linear schedule or an iterated map, flat key-value form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessSection {
    pub kind: ProcessKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_const: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l_log_power: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_plus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phi_minus: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_tolerance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_lag: Option<usize>,
}

impl ProcessSection {
    pub fn new(kind: ProcessKind) -> Self {
        Self {
            kind,
            rho: None,
            r: None,
            beta: None,
            l_const: None,
            l_log_power: None,
            a: None,
            c0: None,
            c1: None,
            phi_plus: None,
            phi_minus: None,
            burn_in: None,
            truncation_tolerance: None,
            max_lag: None,
        }
    }

    fn present_keys(&self) -> Vec<&'static str> {
        let opt = [
            ("rho", self.rho.is_some()),
            ("r", self.r.is_some()),
            ("beta", self.beta.is_some()),
            ("l_const", self.l_const.is_some()),
            ("l_log_power", self.l_log_power.is_some()),
            ("a", self.a.is_some()),
            ("c0", self.c0.is_some()),
            ("c1", self.c1.is_some()),
            ("phi_plus", self.phi_plus.is_some()),
            ("phi_minus", self.phi_minus.is_some()),
            ("burn_in", self.burn_in.is_some()),
            ("truncation_tolerance", self.truncation_tolerance.is_some()),
            ("max_lag", self.max_lag.is_some()),
        ];
        opt.iter().filter(|(_, p)| *p).map(|(k, _)| *k).collect()
    }

    fn allowed_keys(&self) -> &'static [&'static str] {
        match self.kind {
            ProcessKind::Iid => &[],
            ProcessKind::Geometric => &["rho", "truncation_tolerance", "max_lag"],
            ProcessKind::PolynomialSrd => &["r", "truncation_tolerance", "max_lag"],
            ProcessKind::Lrd => &["beta", "l_const", "l_log_power", "truncation_tolerance", "max_lag"],
            ProcessKind::Ar1 => &["a", "burn_in"],
            ProcessKind::Arch1 => &["c0", "c1", "burn_in"],
            ProcessKind::Tar => &["phi_plus", "phi_minus", "burn_in"],
        }
    }

    /// Validates the section against its kind and builds the process.
    pub fn build(&self, innovation: &InnovationModel) -> Result<Process> {
        let allowed = self.allowed_keys();
        if let Some(k) = self.present_keys().into_iter().find(|k| !allowed.contains(k)) {
            return Err(config_err(&format!("process.{k}"), format!("not used by kind {}", self.kind.name())));
        }
        let need = |v: Option<f64>, key: &str| v.ok_or_else(|| config_err(&format!("process.{key}"), "required"));
        let policy = TruncationPolicy {
            tolerance: self.truncation_tolerance.unwrap_or(TruncationPolicy::default().tolerance),
            max_lag: self.max_lag.unwrap_or(DEFAULT_MAX_LAG),
        };
        if !(policy.tolerance > 0.0) {
            return Err(config_err("process.truncation_tolerance", "must be positive"));
        }
        if policy.max_lag == 0 {
            return Err(config_err("process.max_lag", "must be positive"));
        }
        let linear = |schedule: CoefficientSchedule, key: &str| -> Result<Process> {
            Ok(Process::Linear { schedule: schedule.validated().map_err(|e| config_err(&format!("process.{key}"), e))?, policy })
        };
        let burn_in = self.burn_in.unwrap_or(crate::nonlinear_process::DEFAULT_BURN_IN);
        let map = |m: MapKind, key: &str| -> Result<Process> {
            Ok(Process::Map(IteratedMapModel::new(m, *innovation, burn_in).map_err(|e| config_err(&format!("process.{key}"), e))?))
        };
        match self.kind {
            ProcessKind::Iid => linear(CoefficientSchedule::Iid, "kind"),
            ProcessKind::Geometric => linear(CoefficientSchedule::Geometric { rho: need(self.rho, "rho")? }, "rho"),
            ProcessKind::PolynomialSrd => linear(CoefficientSchedule::PolynomialSrd { r: need(self.r, "r")? }, "r"),
            ProcessKind::Lrd => linear(
                CoefficientSchedule::Lrd {
                    beta: need(self.beta, "beta")?,
                    l_const: self.l_const.unwrap_or(1.0),
                    l_log_power: self.l_log_power.unwrap_or(0.0),
                },
                "beta",
            ),
            ProcessKind::Ar1 => map(MapKind::Ar1 { a: need(self.a, "a")? }, "a"),
            ProcessKind::Arch1 => {
                map(MapKind::Arch1 { c0: need(self.c0, "c0")?, c1: need(self.c1, "c1")? }, "c1")
            }
            ProcessKind::Tar => map(
                MapKind::Tar { phi_plus: need(self.phi_plus, "phi_plus")?, phi_minus: need(self.phi_minus, "phi_minus")? },
                "phi_plus",
            ),
        }
    }
}

fn default_replicates() -> usize {
    200
}
fn default_grid_points() -> usize {
    200
}
fn default_oracle_replicates() -> usize {
    1_000_000
}
fn default_window_exponent() -> f64 {
    -0.5
}
fn default_one() -> f64 {
    1.0
}
fn default_alpha() -> f64 {
    2.0
}
fn default_lags() -> usize {
    20
}
fn is_false(b: &bool) -> bool {
    !*b
}

/// `[experiment]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    /// Defaults to the subcommand name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub n_grid: Vec<usize>,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
    /// Pointwise level; defaults to 0.75 for lrd and 0.5 otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// `[p0, p1]` for the uniform remainder and trimmed means.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_range: Option<[f64; 2]>,
    #[serde(default = "default_grid_points")]
    pub grid_points: usize,
    #[serde(default, skip_serializing_if = "is_false")]
    pub corrected: bool,
    #[serde(default = "default_oracle_replicates")]
    pub oracle_replicates: usize,
    /// `b_n = window_constant * n^window_exponent`.
    #[serde(default = "default_window_exponent")]
    pub window_exponent: f64,
    #[serde(default = "default_one")]
    pub window_constant: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x: Option<f64>,
    /// Evaluate at `x = xi_{x_level}` when `x` is unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_level: Option<f64>,
    /// `delta_n = n^gamma`; defaults to `1/2 - beta`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default)]
    pub branch: Branch,
    #[serde(default, skip_serializing_if = "is_false")]
    pub winsorized: bool,
    #[serde(default)]
    pub winsor_variant: WinsorVariant,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    #[serde(default = "default_lags")]
    pub lags: usize,
    /// Map processes only: KS gap between the chain and its m-dependent coupling.
    #[serde(default, skip_serializing_if = "is_false")]
    pub m_sweep: bool,
}

impl ExperimentSection {
    pub fn new(n_grid: Vec<usize>, replicates: usize) -> Self {
        Self {
            id: None,
            seed: 0,
            n_grid,
            replicates,
            p: None,
            p_range: None,
            grid_points: default_grid_points(),
            corrected: false,
            oracle_replicates: default_oracle_replicates(),
            window_exponent: default_window_exponent(),
            window_constant: 1.0,
            x: None,
            x_level: None,
            gamma: None,
            branch: Branch::Auto,
            winsorized: false,
            winsor_variant: WinsorVariant::Display,
            alpha: default_alpha(),
            lags: default_lags(),
            m_sweep: false,
        }
    }
}

/// `[output]`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<String>,
}

fn default_innovation() -> InnovationModel {
    InnovationModel::Gaussian { scale: 1.0 }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub process: ProcessSection,
    #[serde(default = "default_innovation")]
    pub innovation: InnovationModel,
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn new(process: ProcessSection, innovation: InnovationModel, experiment: ExperimentSection) -> Self {
        Self { process, innovation, experiment, output: OutputSection::default() }
    }

    pub fn experiment_id(&self, kind: ExperimentKind) -> String {
        self.experiment.id.clone().unwrap_or_else(|| kind.name().to_string())
    }

    /// Field-level validation; returns the built process.
    pub fn validate(&self, kind: ExperimentKind) -> Result<Process> {
        let innovation = self.innovation.validated().map_err(|e| config_err("innovation", e))?;
        let process = self.process.build(&innovation)?;
        let e = &self.experiment;
        if let Some(id) = &e.id {
            if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c)) {
                return Err(config_err("experiment.id", "must be non-empty [A-Za-z0-9._-]"));
            }
        }
        if e.n_grid.is_empty() {
            return Err(config_err("experiment.n_grid", "must not be empty"));
        }
        if e.n_grid[0] < 2 {
            return Err(config_err("experiment.n_grid", "every n must be at least 2"));
        }
        if let Some(w) = e.n_grid.windows(2).find(|w| w[1] <= w[0]) {
            return Err(config_err("experiment.n_grid", format!("must be strictly increasing ({} then {})", w[0], w[1])));
        }
        let min_r = if kind == ExperimentKind::Gmc { MIN_GMC_REPLICATES } else { MIN_REPLICATES };
        if e.replicates < min_r {
            return Err(config_err("experiment.replicates", format!("must be at least {min_r}, got {}", e.replicates)));
        }
        let unit = |v: f64| v > 0.0 && v < 1.0;
        if let Some(p) = e.p {
            if !unit(p) {
                return Err(config_err("experiment.p", format!("must lie in (0,1), got {p}")));
            }
        }
        if let Some([p0, p1]) = e.p_range {
            if !(unit(p0) && unit(p1) && p0 < p1) {
                return Err(config_err("experiment.p_range", format!("need 0 < p0 < p1 < 1, got [{p0}, {p1}]")));
            }
        }
        if let Some(l) = e.x_level {
            if !unit(l) {
                return Err(config_err("experiment.x_level", format!("must lie in (0,1), got {l}")));
            }
        }
        if let Some(x) = e.x {
            if !x.is_finite() {
                return Err(config_err("experiment.x", "must be finite"));
            }
        }
        if e.grid_points == 0 {
            return Err(config_err("experiment.grid_points", "must be positive"));
        }
        if e.oracle_replicates == 0 {
            return Err(config_err("experiment.oracle_replicates", "must be positive"));
        }
        if !(e.window_constant > 0.0 && e.window_constant.is_finite() && e.window_exponent.is_finite()) {
            return Err(config_err("experiment.window_constant", "window needs a positive constant and finite exponent"));
        }
        if let Some(g) = e.gamma {
            if !(g < 0.0) {
                return Err(config_err("experiment.gamma", format!("window must shrink, need gamma < 0, got {g}")));
            }
        }
        if !(e.alpha > 0.0) {
            return Err(config_err("experiment.alpha", "must be positive"));
        }
        if e.lags < 1 {
            return Err(config_err("experiment.lags", "must be positive"));
        }
        match kind {
            ExperimentKind::Gmc if !self.process.kind.is_map() => {
                return Err(config_err("process.kind", "gmc needs an iterated map (ar1, arch1, tar)"));
            }
            ExperimentKind::Dichotomy if e.gamma.is_none() && self.process.kind != ProcessKind::Lrd => {
                return Err(config_err("experiment.gamma", "required unless process.kind = lrd"));
            }
            _ => {}
        }
        Ok(process)
    }
}

// ---------------------------------------------------------------------------
// Processes
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Process {
    Linear { schedule: CoefficientSchedule, policy: TruncationPolicy },
    Map(IteratedMapModel),
}

impl Process {
    pub fn lrd_beta(&self) -> Option<f64> {
        match self {
            Process::Linear { schedule: CoefficientSchedule::Lrd { beta, .. }, .. } => Some(*beta),
            _ => None,
        }
    }

    pub fn schedule(&self) -> CoefficientSchedule {
        match self {
            Process::Linear { schedule, .. } => *schedule,
            Process::Map(_) => CoefficientSchedule::Iid,
        }
    }
}

/// One simulated path with optional one-step-ahead locations.
#[derive(Clone, Debug)]
pub struct Draw {
    pub values: Vec<f64>,
    pub lags: Option<Vec<f64>>,
}

impl Draw {
    pub fn sample(&self, n: usize, with_lags: bool) -> Result<EmpiricalSample> {
        let values = self.values[..n].to_vec();
        match (&self.lags, with_lags) {
            (Some(l), true) => EmpiricalSample::with_lags(values, l[..n].to_vec()),
            _ => EmpiricalSample::new(values),
        }
    }

    /// Columns `t,x` plus `lagged_location` when present.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
        match &self.lags {
            Some(l) => {
                w.write_record(["t", "x", "lagged_location"])?;
                for (t, (x, m)) in self.values.iter().zip(l).enumerate() {
                    w.write_record([(t + 1).to_string(), x.to_string(), m.to_string()])?;
                }
            }
            None => {
                w.write_record(["t", "x"])?;
                for (t, x) in self.values.iter().enumerate() {
                    w.write_record([(t + 1).to_string(), x.to_string()])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Path generator for a fixed maximal length.
pub enum Sampler {
    Linear(PathSimulator),
    Map(IteratedMapModel, usize),
}

impl Sampler {
    pub fn new(process: &Process, innovation: &InnovationModel, n: usize) -> Result<Self> {
        Ok(match process {
            Process::Linear { schedule, policy } => Sampler::Linear(PathSimulator::new(*schedule, *innovation, n, policy)?),
            Process::Map(model) => Sampler::Map(*model, n),
        })
    }

    pub fn draw(&self, seed: u64) -> Result<Draw> {
        match self {
            Sampler::Linear(sim) => {
                let p = sim.simulate(seed);
                Ok(Draw { values: p.values, lags: Some(p.lagged_locations) })
            }
            Sampler::Map(model, n) => Ok(Draw { values: simulate_chain(model, *n, seed)?, lags: None }),
        }
    }

    /// Truncation lag of a linear filter (0 for maps).
    pub fn truncation_lag(&self) -> usize {
        match self {
            Sampler::Linear(sim) => sim.truncation().lag,
            Sampler::Map(..) => 0,
        }
    }
}

/// Marginal oracle for the simulated law.
///
/// Gaussian innovations through a (truncated) linear filter, and the Gaussian
/// ar1 map, have an exactly Gaussian marginal, used in closed form. Everything
/// else goes through the Monte Carlo mixture oracles.
pub fn build_oracle(
    process: &Process,
    innovation: &InnovationModel,
    truncation_lag: usize,
    replicates: usize,
    seed: u64,
) -> Result<MarginalOracle> {
    let gaussian_scale = match innovation {
        InnovationModel::Gaussian { scale } => Some(*scale),
        _ => None,
    };
    match (process, gaussian_scale) {
        (Process::Linear { schedule, .. }, Some(s)) => {
            let ss: f64 = (0..=truncation_lag as u64).map(|i| schedule.coefficient(i).powi(2)).sum();
            Ok(MarginalOracle::exact(InnovationModel::gaussian(s * ss.sqrt())?))
        }
        (Process::Linear { schedule, .. }, None) => {
            build_marginal_oracle(schedule, innovation, replicates, truncation_lag, seed)
        }
        (Process::Map(IteratedMapModel { map: MapKind::Ar1 { a }, .. }), Some(s)) => {
            Ok(MarginalOracle::exact(InnovationModel::gaussian(s / (1.0 - a * a).sqrt())?))
        }
        (Process::Map(model), _) => build_map_oracle(model, replicates, seed),
    }
}

// ---------------------------------------------------------------------------
// Summaries and fits
// ---------------------------------------------------------------------------

/// Type-7 (linear interpolation) quantile of sorted data.
fn sorted_quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    sorted_quantile(&v, 0.5)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Least squares of `log value` on `log n`.
pub fn fit_loglog_slope(ns: &[f64], values: &[f64]) -> Result<LogLogFit> {
    if ns.len() != values.len() {
        return Err(crate::error::invalid("n-values and statistics differ in length"));
    }
    if ns.len() < MIN_FIT_POINTS {
        return Err(Error::TooFewPoints { got: ns.len(), need: MIN_FIT_POINTS });
    }
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !(**v > 0.0 && v.is_finite())) {
        return Err(Error::NonPositiveStatistic { index, value });
    }
    if let Some(&n) = ns.iter().find(|n| !(**n > 0.0)) {
        return Err(crate::error::invalid(format!("n must be positive, got {n}")));
    }
    let xs: Vec<f64> = ns.iter().map(|n| n.ln()).collect();
    let ys: Vec<f64> = values.iter().map(|v| v.ln()).collect();
    let (slope, intercept, r_squared) = ols(&xs, &ys);
    Ok(LogLogFit { slope, intercept, r_squared })
}

/// Median-based fit with a bootstrap standard error over replicates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// `replicates[k]` holds the replicate values at `ns[k]`, in replicate order.
pub fn fit_rate(ns: &[f64], replicates: &[Vec<f64>], resamples: usize, seed: u64) -> Result<RateFit> {
    if replicates.iter().any(|r| r.is_empty()) {
        return Err(Error::TooFewPoints { got: 0, need: 1 });
    }
    let medians: Vec<f64> = replicates.iter().map(|r| median(r)).collect();
    let fit = fit_loglog_slope(ns, &medians)?;
    let mut slopes = Vec::with_capacity(resamples);
    let mut buf = Vec::new();
    for b in 0..resamples as u64 {
        let mut stream = Stream::new(derive_seed(seed, "bootstrap", b));
        let boot: Vec<f64> = replicates
            .iter()
            .map(|r| {
                buf.clear();
                buf.extend((0..r.len()).map(|_| r[(stream.next_u64() % r.len() as u64) as usize]));
                median(&buf)
            })
            .collect();
        if let Ok(f) = fit_loglog_slope(ns, &boot) {
            slopes.push(f.slope);
        }
    }
    let slope_stderr = if slopes.len() >= 2 {
        let m = slopes.iter().sum::<f64>() / slopes.len() as f64;
        (slopes.iter().map(|s| (s - m).powi(2)).sum::<f64>() / (slopes.len() - 1) as f64).sqrt()
    } else {
        f64::NAN
    };
    Ok(RateFit { slope: fit.slope, intercept: fit.intercept, slope_stderr })
}

/// Moment summary of replicate values.
///
/// `variance` is the unbiased sample variance; skewness and excess kurtosis
/// use population central moments and are `None` when the variance is zero.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistSummary {
    pub count: usize,
    pub mean: f64,
    pub variance: f64,
    pub standard_error: f64,
    pub skewness: Option<f64>,
    pub excess_kurtosis: Option<f64>,
    /// Jarque–Bera `count/6 (skew^2 + exkurt^2/4)`.
    pub jarque_bera: Option<f64>,
}

pub fn summarize_distribution(values: &[f64]) -> Result<DistSummary> {
    if values.len() < 2 {
        return Err(Error::TooFewPoints { got: values.len(), need: 2 });
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    let (m2, m3, m4) = (m2 / n, m3 / n, m4 / n);
    let variance = m2 * n / (n - 1.0);
    // Relative threshold: a constant input leaves only rounding in m2.
    let degenerate = m2 <= (64.0 * f64::EPSILON * mean.abs()).powi(2);
    let (skewness, excess_kurtosis) =
        if degenerate { (None, None) } else { (Some(m3 / m2.powf(1.5)), Some(m4 / (m2 * m2) - 3.0)) };
    let jarque_bera = skewness.zip(excess_kurtosis).map(|(s, k)| n / 6.0 * (s * s + k * k / 4.0));
    Ok(DistSummary {
        count: values.len(),
        mean,
        variance: if degenerate { 0.0 } else { variance },
        standard_error: if degenerate { 0.0 } else { (variance / n).sqrt() },
        skewness,
        excess_kurtosis,
        jarque_bera,
    })
}

// ---------------------------------------------------------------------------
// Raw rows and reports
// ---------------------------------------------------------------------------

/// One CSV row; Bahadur fields are empty for statistics that have none.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawRow {
    pub experiment_id: String,
    pub process_kind: String,
    pub n: usize,
    pub replicate: usize,
    pub seed: u64,
    pub p: Option<f64>,
    pub xi_np: Option<f64>,
    pub linear_term: Option<f64>,
    pub correction_term: Option<f64>,
    pub remainder_srd: Option<f64>,
    pub remainder_lrd: Option<f64>,
    pub statistic_name: String,
    pub statistic_value: f64,
}

struct RowBase<'a> {
    id: &'a str,
    kind: &'a str,
    n: usize,
    replicate: usize,
    seed: u64,
}

impl RowBase<'_> {
    fn plain(&self, name: &str, value: f64) -> RawRow {
        RawRow {
            experiment_id: self.id.to_string(),
            process_kind: self.kind.to_string(),
            n: self.n,
            replicate: self.replicate,
            seed: self.seed,
            p: None,
            xi_np: None,
            linear_term: None,
            correction_term: None,
            remainder_srd: None,
            remainder_lrd: None,
            statistic_name: name.to_string(),
            statistic_value: value,
        }
    }

    fn bahadur(&self, name: &str, value: f64, d: &BahadurDecomposition) -> RawRow {
        RawRow {
            p: Some(d.p),
            xi_np: Some(d.xi_np),
            linear_term: Some(d.linear_term),
            correction_term: Some(d.correction_term),
            remainder_srd: Some(d.remainder_srd),
            remainder_lrd: Some(d.remainder_lrd),
            ..self.plain(name, value)
        }
    }
}

pub fn write_rows(path: &Path, rows: &[RawRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    if rows.is_empty() {
        w.write_record([
            "experiment_id",
            "process_kind",
            "n",
            "replicate",
            "seed",
            "p",
            "xi_np",
            "linear_term",
            "correction_term",
            "remainder_srd",
            "remainder_lrd",
            "statistic_name",
            "statistic_value",
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<RawRow>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<RawRow>, _>>()?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerN {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    pub q25: f64,
    pub q75: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub experiment_id: String,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub statistic_name: String,
    pub per_n: Vec<PerN>,
    pub slope: Option<f64>,
    pub intercept: Option<f64>,
    pub slope_stderr: Option<f64>,
    pub theoretical_exponent: Option<f64>,
    /// Oracle error on the statistic's scale (largest over the levels used).
    pub oracle_precision: f64,
    /// Replicates missing at the worst grid point.
    pub failures: usize,
    pub note: String,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistReport {
    pub experiment_id: String,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub statistic_name: String,
    pub n: usize,
    #[serde(flatten)]
    pub summary: DistSummary,
    /// Limit variance where known (`f(x)` for the gaussian branch).
    pub reference_variance: Option<f64>,
    /// Centring constant subtracted before scaling, where used.
    pub target: Option<f64>,
    pub branch: Option<Branch>,
    pub failures: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmcExperimentReport {
    pub experiment_id: String,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub statistic_name: String,
    #[serde(flatten)]
    pub gmc: GmcReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Report {
    Rate(RateReport),
    Dist(DistReport),
    Gmc(GmcExperimentReport),
}

impl Report {
    pub fn statistic_name(&self) -> &str {
        match self {
            Report::Rate(r) => &r.statistic_name,
            Report::Dist(r) => &r.statistic_name,
            Report::Gmc(r) => &r.statistic_name,
        }
    }

    pub fn warnings(&self) -> &[String] {
        match self {
            Report::Rate(r) => &r.warnings,
            Report::Dist(r) => &r.warnings,
            Report::Gmc(r) => &r.gmc.warnings,
        }
    }

    /// File name stem: `<id>.<statistic>` plus `.n<n>` for per-n distribution reports.
    pub fn file_stem(&self) -> String {
        match self {
            Report::Rate(r) => format!("{}.{}", r.experiment_id, r.statistic_name),
            Report::Dist(r) => format!("{}.{}.n{}", r.experiment_id, r.statistic_name, r.n),
            Report::Gmc(r) => format!("{}.{}", r.experiment_id, r.statistic_name),
        }
    }

    pub fn as_rate(&self) -> Option<&RateReport> {
        match self {
            Report::Rate(r) => Some(r),
            _ => None,
        }
    }

    pub fn as_dist(&self) -> Option<&DistReport> {
        match self {
            Report::Dist(r) => Some(r),
            _ => None,
        }
    }
}

/// Everything a rate report needs besides the raw rows.
#[derive(Clone, Debug, PartialEq)]
pub struct RateContext {
    pub experiment_id: String,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub statistic_name: String,
    pub theoretical_exponent: Option<f64>,
    pub oracle_precision: f64,
    pub setup_warnings: Vec<String>,
}

impl RateContext {
    /// Recovers the context from a finished report for reaggregation.
    pub fn from_report(r: &RateReport) -> Self {
        Self {
            experiment_id: r.experiment_id.clone(),
            experiment: r.experiment,
            config: r.config.clone(),
            statistic_name: r.statistic_name.clone(),
            theoretical_exponent: r.theoretical_exponent,
            oracle_precision: r.oracle_precision,
            setup_warnings: r.warnings.iter().filter(|w| !w.starts_with(AGGREGATE_TAG)).cloned().collect(),
        }
    }
}

/// Groups `statistic_name` rows by the configured grid, in replicate order.
fn grouped(rows: &[RawRow], grid: &[usize], name: &str) -> Vec<Vec<f64>> {
    let mut by_n: BTreeMap<usize, Vec<(usize, f64)>> = grid.iter().map(|&n| (n, Vec::new())).collect();
    for r in rows.iter().filter(|r| r.statistic_name == name) {
        if let Some(v) = by_n.get_mut(&r.n) {
            v.push((r.replicate, r.statistic_value));
        }
    }
    grid.iter()
        .map(|n| {
            let mut v = by_n.remove(n).unwrap_or_default();
            v.sort_unstable_by_key(|(rep, _)| *rep);
            v.into_iter().map(|(_, x)| x).collect()
        })
        .collect()
}

pub fn aggregate_rate(ctx: &RateContext, rows: &[RawRow]) -> Result<RateReport> {
    let grid = &ctx.config.experiment.n_grid;
    let groups = grouped(rows, grid, &ctx.statistic_name);
    let mut warnings = ctx.setup_warnings.clone();
    let per_n: Vec<PerN> = grid
        .iter()
        .zip(&groups)
        .map(|(&n, v)| {
            if v.is_empty() {
                return PerN { n, median: f64::NAN, mean: f64::NAN, q25: f64::NAN, q75: f64::NAN, count: 0 };
            }
            let mut s = v.clone();
            s.sort_unstable_by(f64::total_cmp);
            PerN {
                n,
                median: sorted_quantile(&s, 0.5),
                mean: v.iter().sum::<f64>() / v.len() as f64,
                q25: sorted_quantile(&s, 0.25),
                q75: sorted_quantile(&s, 0.75),
                count: v.len(),
            }
        })
        .collect();
    if per_n.iter().all(|p| p.count == 0) {
        return Err(Error::Domain(format!("no replicate produced statistic {}", ctx.statistic_name)));
    }
    let failures = per_n.iter().map(|p| ctx.config.experiment.replicates.saturating_sub(p.count)).max().unwrap_or(0);
    let ns: Vec<f64> = grid.iter().map(|&n| n as f64).collect();
    let seed = derive_seed(ctx.config.experiment.seed, &format!("{}/{}", ctx.experiment_id, ctx.statistic_name), 0);
    let (slope, intercept, slope_stderr) = if groups.iter().any(|g| g.is_empty()) {
        warnings.push(format!("{AGGREGATE_TAG}a grid point has no surviving replicates; no slope fitted"));
        (None, None, None)
    } else if grid.len() < MIN_FIT_POINTS {
        warnings.push(format!("{AGGREGATE_TAG}fewer than {MIN_FIT_POINTS} grid points; no slope fitted"));
        (None, None, None)
    } else {
        match fit_rate(&ns, &groups, BOOTSTRAP_RESAMPLES, seed) {
            Ok(f) => (Some(f.slope), Some(f.intercept), Some(f.slope_stderr).filter(|s| s.is_finite())),
            Err(e) => {
                warnings.push(format!("{AGGREGATE_TAG}slope fit failed: {e}"));
                (None, None, None)
            }
        }
    };
    if let Some(last) = per_n.iter().rev().find(|p| p.count > 0) {
        if ctx.oracle_precision > 0.1 * last.median {
            warnings.push(format!(
                "{AGGREGATE_TAG}oracle noise: precision {:e} exceeds 0.1 x median {:e} at n = {}",
                ctx.oracle_precision, last.median, last.n
            ));
        }
    }
    Ok(RateReport {
        experiment_id: ctx.experiment_id.clone(),
        experiment: ctx.experiment,
        config: ctx.config.clone(),
        statistic_name: ctx.statistic_name.clone(),
        per_n,
        slope,
        intercept,
        slope_stderr,
        theoretical_exponent: ctx.theoretical_exponent,
        oracle_precision: ctx.oracle_precision,
        failures,
        note: SCALING_NOTE.to_string(),
        warnings,
    })
}

/// Everything a distribution report needs besides the raw rows.
#[derive(Clone, Debug, PartialEq)]
pub struct DistContext {
    pub experiment_id: String,
    pub experiment: ExperimentKind,
    pub config: ExperimentConfig,
    pub statistic_name: String,
    pub n: usize,
    pub reference_variance: Option<f64>,
    pub target: Option<f64>,
    pub branch: Option<Branch>,
    pub setup_warnings: Vec<String>,
}

impl DistContext {
    pub fn from_report(r: &DistReport) -> Self {
        Self {
            experiment_id: r.experiment_id.clone(),
            experiment: r.experiment,
            config: r.config.clone(),
            statistic_name: r.statistic_name.clone(),
            n: r.n,
            reference_variance: r.reference_variance,
            target: r.target,
            branch: r.branch,
            setup_warnings: r.warnings.iter().filter(|w| !w.starts_with(AGGREGATE_TAG)).cloned().collect(),
        }
    }
}

pub fn aggregate_dist(ctx: &DistContext, rows: &[RawRow]) -> Result<DistReport> {
    let values = grouped(rows, &[ctx.n], &ctx.statistic_name).remove(0);
    let summary = summarize_distribution(&values)?;
    let mut warnings = ctx.setup_warnings.clone();
    if summary.count < 100 {
        warnings.push(format!("{AGGREGATE_TAG}only {} replicates; moment diagnostics need at least 100", summary.count));
    }
    Ok(DistReport {
        experiment_id: ctx.experiment_id.clone(),
        experiment: ctx.experiment,
        config: ctx.config.clone(),
        statistic_name: ctx.statistic_name.clone(),
        n: ctx.n,
        summary,
        reference_variance: ctx.reference_variance,
        target: ctx.target,
        branch: ctx.branch,
        failures: ctx.config.experiment.replicates.saturating_sub(summary.count),
        warnings,
    })
}

/// Recomputes a report from raw rows; equal to the original for rows it produced.
pub fn reaggregate(report: &Report, rows: &[RawRow]) -> Result<Report> {
    Ok(match report {
        Report::Rate(r) => Report::Rate(aggregate_rate(&RateContext::from_report(r), rows)?),
        Report::Dist(r) => Report::Dist(aggregate_dist(&DistContext::from_report(r), rows)?),
        Report::Gmc(r) => Report::Gmc(r.clone()),
    })
}

// ---------------------------------------------------------------------------
// Runners
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Worker threads; `None` uses the ambient rayon pool.
    pub jobs: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub experiment_id: String,
    pub rows: Vec<RawRow>,
    pub reports: Vec<Report>,
    /// Replicates that failed outright; their rows are absent.
    pub failures: usize,
    pub warnings: Vec<String>,
}

impl Outcome {
    pub fn report(&self, statistic: &str) -> Option<&Report> {
        self.reports.iter().find(|r| r.statistic_name() == statistic)
    }

    /// Writes `<id>.csv` and one `<stem>.json` per report; returns the paths.
    pub fn write(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{}.csv", self.experiment_id));
        write_rows(&csv_path, &self.rows)?;
        let mut written = vec![csv_path];
        for r in &self.reports {
            let p = dir.join(format!("{}.json", r.file_stem()));
            let mut text = serde_json::to_string_pretty(r)?;
            text.push('\n');
            std::fs::write(&p, text)?;
            written.push(p);
        }
        Ok(written)
    }
}

/// Rows of all surviving replicates, in `(n, replicate)` order.
struct Collected {
    rows: Vec<RawRow>,
    failures: usize,
    warnings: Vec<String>,
}

/// Per-n context of a distribution report.
struct DistPoint {
    n: usize,
    reference_variance: Option<f64>,
    target: Option<f64>,
    branch: Option<Branch>,
}

/// Shared state built once per run: process, sampler and oracle.
struct Setup {
    id: String,
    kind_name: &'static str,
    process: Process,
    innovation: InnovationModel,
    sampler: Sampler,
    oracle: MarginalOracle,
    base_seed: u64,
    warnings: Vec<String>,
}

impl Setup {
    fn new(kind: ExperimentKind, config: &ExperimentConfig) -> Result<Self> {
        let process = config.validate(kind)?;
        let innovation = config.innovation.validated()?;
        let n_max = *config.experiment.n_grid.last().expect("validated non-empty");
        let sampler = Sampler::new(&process, &innovation, n_max)?;
        let id = config.experiment_id(kind);
        let base_seed = config.experiment.seed;
        let mut warnings = Vec::new();
        if let Sampler::Linear(sim) = &sampler {
            let t = sim.truncation();
            if let Err(e) = t.check() {
                warnings.push(e.to_string());
            }
        }
        let oracle = build_oracle(
            &process,
            &innovation,
            sampler.truncation_lag(),
            config.experiment.oracle_replicates,
            derive_seed(base_seed, &format!("{id}/oracle"), 0),
        )?;
        Ok(Self { id, kind_name: config.process.kind.name(), process, innovation, sampler, oracle, base_seed, warnings })
    }

    fn replicate_seed(&self, r: usize) -> u64 {
        derive_seed(self.base_seed, &self.id, r as u64)
    }

    fn base(&self, n: usize, replicate: usize, seed: u64) -> RowBase<'_> {
        RowBase { id: &self.id, kind: self.kind_name, n, replicate, seed }
    }

    /// Runs `body` for every replicate; failed replicates are counted, not fatal.
    fn replicates<F>(&self, count: usize, body: F) -> Result<Collected>
    where
        F: Fn(usize, u64, &Draw) -> Result<Vec<RawRow>> + Sync,
    {
        let results: Vec<Result<Vec<RawRow>>> = (0..count)
            .into_par_iter()
            .map(|r| {
                let seed = self.replicate_seed(r);
                let draw = self.sampler.draw(seed)?;
                body(r, seed, &draw)
            })
            .collect();
        let mut rows = Vec::new();
        let mut failures = 0;
        let mut first_error = None;
        for res in results {
            match res {
                Ok(v) => rows.extend(v),
                Err(e) => {
                    failures += 1;
                    first_error.get_or_insert_with(|| e.to_string());
                }
            }
        }
        if failures == count {
            return Err(Error::Domain(format!("every replicate failed; first error: {}", first_error.unwrap_or_default())));
        }
        rows.sort_by_key(|r| (r.n, r.replicate));
        let warnings = first_error
            .map(|e| vec![format!("{failures} replicate(s) failed; first error: {e}")])
            .unwrap_or_default();
        Ok(Collected { rows, failures, warnings })
    }
}

fn in_pool<T: Send>(opts: RunOptions, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match opts.jobs {
        None => f(),
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j.max(1))
            .build()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?
            .install(f),
    }
}

/// Dispatches one experiment.
pub fn run_experiment(kind: ExperimentKind, config: &ExperimentConfig, opts: RunOptions) -> Result<Outcome> {
    in_pool(opts, || match kind {
        ExperimentKind::Rate => run_rate_experiment(config),
        ExperimentKind::UniformRate => run_uniform_rate_experiment(config),
        ExperimentKind::Oscillation => run_oscillation_experiment(config),
        ExperimentKind::Dichotomy => run_dichotomy_experiment(config),
        ExperimentKind::TrimmedClt => run_trimmed_clt_experiment(config),
        ExperimentKind::Gmc => run_gmc_experiment(config),
    })
}

/// Exponent of the remainder statistic: `-3/4` under short memory; under long
/// memory `max(-beta/2 - 1/4, 3/2 - 3 beta)` corrected and additionally
/// `1 - 2 beta` (the uncorrected `Xbar^2` term) otherwise.
pub fn remainder_exponent(process: &Process, corrected: bool) -> f64 {
    match process.lrd_beta() {
        None => -0.75,
        Some(beta) => {
            let e = lrd_exponent(beta).expect("validated beta");
            if corrected {
                e
            } else {
                e.max(1.0 - 2.0 * beta)
            }
        }
    }
}

fn default_p(process: &Process) -> f64 {
    if process.lrd_beta().is_some() {
        0.75
    } else {
        0.5
    }
}

fn rate_outcome(
    setup: Setup,
    kind: ExperimentKind,
    config: &ExperimentConfig,
    collected: Collected,
    stats: &[(&str, Option<f64>, f64)],
) -> Result<Outcome> {
    let Collected { rows, failures, mut warnings } = collected;
    warnings.splice(0..0, setup.warnings.iter().cloned());
    let reports = stats
        .iter()
        .map(|&(name, exponent, precision)| {
            let ctx = RateContext {
                experiment_id: setup.id.clone(),
                experiment: kind,
                config: config.clone(),
                statistic_name: name.to_string(),
                theoretical_exponent: exponent,
                oracle_precision: precision,
                setup_warnings: warnings.clone(),
            };
            aggregate_rate(&ctx, &rows).map(Report::Rate)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Outcome { experiment_id: setup.id, rows, reports, failures, warnings })
}

/// Pointwise remainder at level `p`; both `|remainder_srd|` and
/// `|remainder_lrd|` are recorded, the `corrected` flag orders the reports.
pub fn run_rate_experiment(config: &ExperimentConfig) -> Result<Outcome> {
    let kind = ExperimentKind::Rate;
    let setup = Setup::new(kind, config)?;
    let p = config.experiment.p.unwrap_or_else(|| default_p(&setup.process));
    let levels = QuantileLevels::new(&setup.oracle, &[p])?;
    let grid = &config.experiment.n_grid;
    let collected = setup.replicates(config.experiment.replicates, |r, seed, draw| {
        let mut out = Vec::with_capacity(2 * grid.len());
        for &n in grid {
            let d = levels.decompose_all(&draw.sample(n, false)?)[0];
            let b = setup.base(n, r, seed);
            out.push(b.bahadur("abs_remainder_srd", d.remainder_srd.abs(), &d));
            out.push(b.bahadur("abs_remainder_lrd", d.remainder_lrd.abs(), &d));
        }
        Ok(out)
    })?;
    let precision = levels.max_error_bar();
    let srd = ("abs_remainder_srd", Some(remainder_exponent(&setup.process, false)), precision);
    let lrd = ("abs_remainder_lrd", Some(remainder_exponent(&setup.process, true)), precision);
    let stats = if config.experiment.corrected { [lrd, srd] } else { [srd, lrd] };
    rate_outcome(setup, kind, config, collected, &stats)
}

/// `sup_p |remainder(p)|` over `[p0, p1]`.
pub fn run_uniform_rate_experiment(config: &ExperimentConfig) -> Result<Outcome> {
    let kind = ExperimentKind::UniformRate;
    let setup = Setup::new(kind, config)?;
    let [p0, p1] = config.experiment.p_range.unwrap_or([0.25, 0.75]);
    let grid = &config.experiment.n_grid;
    let levels = grid
        .iter()
        .map(|&n| QuantileLevels::new(&setup.oracle, &resolved_grid(p0, p1, config.experiment.grid_points, n)?))
        .collect::<Result<Vec<_>>>()?;
    let model = match setup.process {
        Process::Map(m) if config.experiment.m_sweep => Some(m),
        _ => None,
    };
    let mut extra_warnings = Vec::new();
    if config.experiment.m_sweep && model.is_none() {
        extra_warnings.push("m_sweep applies to iterated maps only; ignored".to_string());
    }
    let mut collected = setup.replicates(config.experiment.replicates, |r, seed, draw| {
        let mut out = Vec::new();
        for (&n, lv) in grid.iter().zip(&levels) {
            let all = lv.decompose_all(&draw.sample(n, false)?);
            let b = setup.base(n, r, seed);
            for (name, corrected) in [("sup_remainder_srd", false), ("sup_remainder_lrd", true)] {
                let best = all
                    .iter()
                    .fold(None::<&BahadurDecomposition>, |acc, d| match acc {
                        Some(a) if a.remainder(corrected).abs() >= d.remainder(corrected).abs() => Some(a),
                        _ => Some(d),
                    })
                    .expect("non-empty grid");
                out.push(b.bahadur(name, best.remainder(corrected).abs(), best));
            }
            if let Some(m) = &model {
                for c in [1u64, 2, 4] {
                    let mdep = (c as f64 * (n as f64).ln()).ceil() as usize;
                    if mdep >= n {
                        continue;
                    }
                    let paths = simulate_m_dependent(m, n, mdep, derive_seed(seed, "m-sweep", c))?;
                    let ks = ks_two_sample(&EmpiricalSample::new(paths.coupled)?, &EmpiricalSample::new(paths.original)?);
                    out.push(b.plain(&format!("coupling_ks_c{c}"), ks));
                }
            }
        }
        Ok(out)
    })?;
    collected.warnings.extend(extra_warnings);
    let precision = levels.iter().map(|l| l.max_error_bar()).fold(0.0, f64::max);
    let srd = ("sup_remainder_srd", Some(remainder_exponent(&setup.process, false)), precision);
    let lrd = ("sup_remainder_lrd", Some(remainder_exponent(&setup.process, true)), precision);
    let stats = if config.experiment.corrected { [lrd, srd] } else { [srd, lrd] };
    rate_outcome(setup, kind, config, collected, &stats)
}

fn evaluation_point(config: &ExperimentConfig, oracle: &MarginalOracle, default_level: f64) -> Result<f64> {
    match config.experiment.x {
        Some(x) => Ok(x),
        None => oracle.quantile(config.experiment.x_level.unwrap_or(default_level)),
    }
}

/// Moduli `sup_{|u|<=b_n} |D(x+u) - D(x)|` for `D = M_n` (linear processes)
/// and `D = F_n - F`, with `b_n = c n^e`.
pub fn run_oscillation_experiment(config: &ExperimentConfig) -> Result<Outcome> {
    let kind = ExperimentKind::Oscillation;
    let setup = Setup::new(kind, config)?;
    let x = evaluation_point(config, &setup.oracle, 0.5)?;
    let e = &config.experiment;
    let grid = &e.n_grid;
    let has_lags = matches!(setup.process, Process::Linear { .. });
    let mut warnings = Vec::new();
    if !has_lags {
        warnings.push("iterated maps carry no one-step-ahead locations; only the F_n - F modulus is reported".into());
    }
    let mut collected = setup.replicates(e.replicates, |r, seed, draw| {
        let mut out = Vec::new();
        for &n in grid {
            let b = e.window_constant * (n as f64).powf(e.window_exponent);
            let s = draw.sample(n, has_lags)?;
            let jumps = s.jumps_in(x - b, x + b);
            let row = setup.base(n, r, seed);
            if has_lags {
                let inn = &setup.innovation;
                let m = oscillation_modulus(
                    |t, side| s.ecdf_side(t, side) - s.conditional_cdf(inn, t).expect("sample carries lags"),
                    x,
                    b,
                    e.grid_points,
                    jumps,
                )?;
                out.push(row.plain("osc_martingale", m));
            }
            let d = oscillation_modulus(|t, side| s.ecdf_side(t, side) - setup.oracle.cdf(t), x, b, e.grid_points, jumps)?;
            out.push(row.plain("osc_difference", d));
        }
        Ok(out)
    })?;
    collected.warnings.splice(0..0, warnings);
    let exponent = Some((e.window_exponent - 1.0) / 2.0);
    let precision = setup.oracle.precision();
    let mut stats = vec![("osc_martingale", exponent, precision), ("osc_difference", exponent, precision)];
    if !has_lags {
        stats.remove(0);
    }
    rate_outcome(setup, kind, config, collected, &stats)
}

fn dist_outcome(
    setup: Setup,
    kind: ExperimentKind,
    config: &ExperimentConfig,
    collected: Collected,
    name: &str,
    per_n: &[DistPoint],
) -> Result<Outcome> {
    let Collected { rows, failures, mut warnings } = collected;
    warnings.splice(0..0, setup.warnings.iter().cloned());
    let reports = per_n
        .iter()
        .map(|&DistPoint { n, reference_variance, target, branch }| {
            let ctx = DistContext {
                experiment_id: setup.id.clone(),
                experiment: kind,
                config: config.clone(),
                statistic_name: name.to_string(),
                n,
                reference_variance,
                target,
                branch,
                setup_warnings: warnings.clone(),
            };
            aggregate_dist(&ctx, &rows).map(Report::Dist)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Outcome { experiment_id: setup.id, rows, reports, failures, warnings })
}

/// Normalised increments `S_n(x + delta_n;1) - S_n(x;1)` with `delta_n = n^gamma`.
pub fn run_dichotomy_experiment(config: &ExperimentConfig) -> Result<Outcome> {
    let kind = ExperimentKind::Dichotomy;
    let setup = Setup::new(kind, config)?;
    let e = &config.experiment;
    let gamma = match (e.gamma, setup.process.lrd_beta()) {
        (Some(g), _) => g,
        (None, Some(beta)) => 0.5 - beta,
        (None, None) => unreachable!("validated"),
    };
    let x = evaluation_point(config, &setup.oracle, 0.75)?;
    let schedule = setup.process.schedule();
    let mut warnings = Vec::new();
    let at_x = setup.oracle.eval(x);
    if at_x.pdf_deriv.abs() * setup.innovation.scale() <= 1e-6 * at_x.pdf {
        warnings.push(format!("f'(x) vanishes at x = {x}: the rosenblatt-branch limit is degenerate here"));
    }
    // Branch per n up front so a boundary refusal aborts before simulating.
    let branches = e
        .n_grid
        .iter()
        .map(|&n| crate::bahadur::resolve_branch(e.branch, &schedule, n, (n as f64).powf(gamma)))
        .collect::<Result<Vec<_>>>()?;
    let mut collected = setup.replicates(e.replicates, |r, seed, draw| {
        e.n_grid
            .iter()
            .zip(&branches)
            .map(|(&n, &branch)| {
                let s = draw.sample(n, false)?;
                let inc = increment_statistic(&s, &setup.oracle, &schedule, x, (n as f64).powf(gamma), branch)?;
                Ok(setup.base(n, r, seed).plain("increment", inc.normalized))
            })
            .collect()
    })?;
    collected.warnings.splice(0..0, warnings);
    let per_n: Vec<_> = e
        .n_grid
        .iter()
        .zip(&branches)
        .map(|(&n, &b)| DistPoint {
            n,
            reference_variance: (b == Branch::Gaussian).then_some(at_x.pdf),
            target: None,
            branch: Some(b),
        })
        .collect();
    dist_outcome(setup, kind, config, collected, "increment", &per_n)
}

/// `mu = (p1 - p0)^{-1} int_{p0}^{p1} xi_u du`, or the Winsorized centring
/// `p0 xi_{p0} + (1 - p1) xi_{p1} + int xi_u du`, by 64-node Gauss–Legendre.
pub fn trimmed_target(oracle: &MarginalOracle, p0: f64, p1: f64, winsorized: bool) -> Result<f64> {
    // Levels stay inside (p0, p1), where the oracle quantile is defined.
    let integral = gauss_legendre_integrate(|u| oracle.quantile(u).unwrap_or(f64::NAN), p0, p1, TRIM_NODES);
    if !integral.is_finite() {
        return Err(Error::Domain("trimmed-mean target is not finite".into()));
    }
    Ok(if winsorized {
        p0 * oracle.quantile(p0)? + (1.0 - p1) * oracle.quantile(p1)? + integral
    } else {
        integral / (p1 - p0)
    })
}

/// `sqrt(n) (T_n - mu)` for the trimmed (or Winsorized) mean.
pub fn run_trimmed_clt_experiment(config: &ExperimentConfig) -> Result<Outcome> {
    let kind = ExperimentKind::TrimmedClt;
    let setup = Setup::new(kind, config)?;
    let e = &config.experiment;
    let [p0, p1] = e.p_range.unwrap_or([0.1, 0.9]);
    let mu = trimmed_target(&setup.oracle, p0, p1, e.winsorized)?;
    let name = if e.winsorized { "winsorized_clt" } else { "trimmed_clt" };
    let collected = setup.replicates(e.replicates, |r, seed, draw| {
        e.n_grid
            .iter()
            .map(|&n| {
                let s = draw.sample(n, false)?;
                let t = if e.winsorized { winsorized_mean(&s, p0, p1, e.winsor_variant)? } else { trimmed_mean(&s, p0, p1)? };
                Ok(setup.base(n, r, seed).plain(name, (n as f64).sqrt() * (t - mu)))
            })
            .collect()
    })?;
    let per_n: Vec<_> =
        e.n_grid.iter().map(|&n| DistPoint { n, reference_variance: None, target: Some(mu), branch: None }).collect();
    dist_outcome(setup, kind, config, collected, name, &per_n)
}

/// Delegates to [`estimate_gmc`]; one row per lag with `n` = lag.
pub fn run_gmc_experiment(config: &ExperimentConfig) -> Result<Outcome> {
    let kind = ExperimentKind::Gmc;
    let process = config.validate(kind)?;
    let Process::Map(model) = process else { unreachable!("validated") };
    let id = config.experiment_id(kind);
    let e = &config.experiment;
    let seed = derive_seed(e.seed, &id, 0);
    let gmc = estimate_gmc(&model, e.alpha, e.lags, e.replicates, seed)?;
    let name = "mean_distance";
    let base = RowBase { id: &id, kind: config.process.kind.name(), n: 0, replicate: 0, seed };
    let rows = gmc
        .mean_distance
        .iter()
        .enumerate()
        .map(|(lag, &d)| RawRow { n: lag, ..base.plain(name, d) })
        .collect();
    let warnings = gmc.warnings.clone();
    let report = GmcExperimentReport {
        experiment_id: id.clone(),
        experiment: kind,
        config: config.clone(),
        statistic_name: name.to_string(),
        gmc,
    };
    Ok(Outcome { experiment_id: id, rows, reports: vec![Report::Gmc(report)], failures: 0, warnings })
}

/// One path at the largest configured `n`, replicate 0, for the `simulate` command.
pub fn simulate_process(config: &ExperimentConfig) -> Result<Draw> {
    let innovation = config.innovation.validated().map_err(|e| config_err("innovation", e))?;
    let process = config.process.build(&innovation)?;
    let n = *config.experiment.n_grid.last().ok_or_else(|| config_err("experiment.n_grid", "must not be empty"))?;
    let id = config.experiment.id.clone().unwrap_or_else(|| "simulate".into());
    Sampler::new(&process, &innovation, n)?.draw(derive_seed(config.experiment.seed, &id, 0))
}
