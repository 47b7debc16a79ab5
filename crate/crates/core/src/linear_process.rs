//! Causal linear processes `X_k = sum_{i>=0} a_i eps_{k-i}` with `a_0 = 1`.
//!
//! Covers the coefficient schedules (i.i.d., geometric, polynomially decaying
//! short memory, and long memory `a_i = i^{-beta} L(i)`), truncated path
//! simulation by direct or FFT convolution, the Monte Carlo marginal oracle,
//! and the closed-form and finite-sum rate functions used by the experiments.

use std::f64::consts::E;
use std::sync::Arc;

use realfft::num_complex::Complex;
use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::innovations::InnovationModel;
use crate::oracle::{MarginalOracle, Mixture};
use crate::quad::{adaptive_simpson, gauss_legendre};
use crate::rng::Stream;

/// Filters up to this many lags are convolved directly.
const DIRECT_CONVOLUTION_LAGS: usize = 64;
/// Lags summed explicitly per oracle draw for non-Gaussian innovations.
const ORACLE_EXPLICIT_LAGS: usize = 4096;
/// Default hard cap on the truncation lag.
pub const DEFAULT_MAX_LAG: usize = 1 << 24;

fn one() -> f64 {
    1.0
}

/// `L(x) = constant * (log(e + x))^log_power`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlowlyVarying {
    pub constant: f64,
    pub log_power: f64,
}

impl SlowlyVarying {
    pub fn constant(c: f64) -> Self {
        Self { constant: c, log_power: 0.0 }
    }

    pub fn eval(&self, x: f64) -> f64 {
        if self.log_power == 0.0 {
            self.constant
        } else {
            self.constant * (E + x).ln().powf(self.log_power)
        }
    }
}

impl Default for SlowlyVarying {
    fn default() -> Self {
        Self::constant(1.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSchedule {
    Iid,
    /// `a_i = rho^i`.
    Geometric { rho: f64 },
    /// `a_i = i^{-r}`, `r > 1`.
    PolynomialSrd { r: f64 },
    /// `a_i = i^{-beta} L(i)` with `L(x) = l_const * log(e + x)^l_log_power`.
    Lrd {
        beta: f64,
        #[serde(default = "one")]
        l_const: f64,
        #[serde(default)]
        l_log_power: f64,
    },
}

impl CoefficientSchedule {
    pub fn geometric(rho: f64) -> Result<Self> {
        Self::Geometric { rho }.validated()
    }

    pub fn polynomial_srd(r: f64) -> Result<Self> {
        Self::PolynomialSrd { r }.validated()
    }

    pub fn lrd(beta: f64, l: SlowlyVarying) -> Result<Self> {
        Self::Lrd { beta, l_const: l.constant, l_log_power: l.log_power }.validated()
    }

    pub fn validated(self) -> Result<Self> {
        match self {
            Self::Iid => {}
            Self::Geometric { rho } => {
                if !(rho.abs() < 1.0 && rho != 0.0) {
                    return Err(invalid(format!("geometric rho must lie in (-1,1) without 0, got {rho}")));
                }
            }
            Self::PolynomialSrd { r } => {
                if !(r > 1.0 && r.is_finite()) {
                    return Err(invalid(format!("polynomial_srd r must exceed 1, got {r}")));
                }
            }
            Self::Lrd { beta, l_const, l_log_power } => {
                if !(beta > 0.5 && beta < 1.0) {
                    return Err(invalid(format!("lrd beta must lie in (1/2,1), got {beta}")));
                }
                if !(l_const > 0.0 && l_const.is_finite() && l_log_power.is_finite()) {
                    return Err(invalid("lrd slowly varying factor needs l_const > 0 and finite l_log_power"));
                }
            }
        }
        Ok(self)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Iid => "iid",
            Self::Geometric { .. } => "geometric",
            Self::PolynomialSrd { .. } => "polynomial_srd",
            Self::Lrd { .. } => "lrd",
        }
    }

    pub fn is_lrd(&self) -> bool {
        matches!(self, Self::Lrd { .. })
    }

    pub fn slowly_varying(&self) -> SlowlyVarying {
        match *self {
            Self::Lrd { l_const, l_log_power, .. } => SlowlyVarying { constant: l_const, log_power: l_log_power },
            _ => SlowlyVarying::default(),
        }
    }

    /// `a_i`.
    pub fn coefficient(&self, i: u64) -> f64 {
        if i == 0 {
            return 1.0;
        }
        let x = i as f64;
        match *self {
            Self::Iid => 0.0,
            Self::Geometric { rho } => match i32::try_from(i) {
                Ok(k) => rho.powi(k),
                Err(_) => rho.abs().powf(x) * if i % 2 == 1 { rho.signum() } else { 1.0 },
            },
            Self::PolynomialSrd { r } => x.powf(-r),
            Self::Lrd { .. } => x.powf(-self.beta_or_nan()) * self.slowly_varying().eval(x),
        }
    }

    fn beta_or_nan(&self) -> f64 {
        match *self {
            Self::Lrd { beta, .. } => beta,
            _ => f64::NAN,
        }
    }

    /// `sum_{i>=n} |a_i|^exponent`, exponent in `(0, 1]`.
    ///
    /// Closed form for geometric filters. Power-law filters sum explicitly to a
    /// cut `K` and bracket the rest between `int_K^inf g + g(K)/2` and
    /// `int_{K-1/2}^inf g` (convex decreasing `g`), doubling `K` until the bracket
    /// is below `1e-8` relative; the bracket midpoint is returned.
    pub fn tail_abs_sum(&self, n: u64, exponent: f64) -> Result<f64> {
        if !(exponent > 0.0 && exponent <= 1.0) {
            return Err(invalid(format!("tail exponent must lie in (0,1], got {exponent}")));
        }
        let head = if n == 0 { 1.0 } else { 0.0 };
        let start = n.max(1);
        let tail = match *self {
            Self::Iid => 0.0,
            Self::Geometric { rho } => {
                let q = rho.abs().powf(exponent);
                q.powf(start as f64) / (1.0 - q)
            }
            Self::PolynomialSrd { r } => {
                let s = exponent * r;
                if s <= 1.0 {
                    return Err(Error::DivergentTail { exponent, decay: r });
                }
                bracketed_power_tail(start, s, &|_| 1.0)
            }
            Self::Lrd { beta, .. } => {
                let s = exponent * beta;
                if s <= 1.0 {
                    return Err(Error::DivergentTail { exponent, decay: beta });
                }
                let l = self.slowly_varying();
                bracketed_power_tail(start, s, &|x| l.eval(x).powf(exponent))
            }
        };
        Ok(head + tail)
    }
}

/// `int_a^inf x^{-s} h(x) dx` for `s > 1` and slowly varying `h`.
///
/// Substitutes `x = a u^{-1/(s-1)}`, `u = w^4`, leaving a bounded integrand on `[0, 1]`.
fn power_tail_integral(a: f64, s: f64, h: &dyn Fn(f64) -> f64) -> f64 {
    let lead = a.powf(1.0 - s) / (s - 1.0);
    let inner = |w: f64| {
        if w <= 0.0 {
            return 0.0;
        }
        let x = a * (w.powi(4)).powf(-1.0 / (s - 1.0));
        if !x.is_finite() {
            return 0.0;
        }
        4.0 * w * w * w * h(x)
    };
    let hint = h(a).abs().max(f64::MIN_POSITIVE);
    lead * adaptive_simpson(&inner, 0.0, 1.0, 1e-13 * hint)
}

fn bracketed_power_tail(start: u64, s: f64, h: &dyn Fn(f64) -> f64) -> f64 {
    let constant_h = h(2.0) == h(1e6);
    let integral = |a: f64| {
        if constant_h {
            h(a) * a.powf(1.0 - s) / (s - 1.0)
        } else {
            power_tail_integral(a, s, h)
        }
    };
    let g = |x: f64| x.powf(-s) * h(x);
    let mut k = start.max(8);
    let mut explicit: f64 = (start..k).map(|i| g(i as f64)).sum();
    loop {
        let kf = k as f64;
        let lower = explicit + integral(kf) + 0.5 * g(kf);
        let upper = explicit + integral(kf - 0.5);
        let mid = 0.5 * (lower + upper);
        if upper - lower <= 1e-8 * mid.abs() || k > (1 << 40) {
            return mid;
        }
        let next = k * 2;
        explicit += (k..next).map(|i| g(i as f64)).sum::<f64>();
        k = next;
    }
}

/// Truncation lag and the tolerance it achieves.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truncation {
    /// Largest lag kept: the filter is `a_0..a_lag`.
    pub lag: usize,
    /// SRD: dropped tail mass times innovation scale; LRD: `a_lag`.
    pub achieved: f64,
    pub requested: f64,
    /// The hard cap bound before the tolerance was met.
    pub capped: bool,
}

impl Truncation {
    /// `Err(TruncationUnachievable)` when the cap was hit.
    pub fn check(&self) -> Result<()> {
        if self.capped {
            Err(Error::TruncationUnachievable {
                lag: self.lag,
                achieved: self.achieved,
                requested: self.requested,
            })
        } else {
            Ok(())
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruncationPolicy {
    pub tolerance: f64,
    pub max_lag: usize,
}

impl Default for TruncationPolicy {
    fn default() -> Self {
        Self { tolerance: 1e-4, max_lag: DEFAULT_MAX_LAG }
    }
}

/// Picks the truncation lag for a path of length `n`.
///
/// SRD: smallest `M` with `tail_abs_sum(M, 1) * scale < tolerance`.
/// LRD: `M >= n` and `M` at least the first lag (in the eventually decreasing
/// range) where `a_i < tolerance`. Both are capped at `max_lag`; a capped
/// result is flagged rather than refused.
pub fn choose_truncation(
    schedule: &CoefficientSchedule,
    innovation_scale: f64,
    n: usize,
    policy: &TruncationPolicy,
) -> Result<Truncation> {
    let tol = policy.tolerance;
    if !(tol > 0.0) {
        return Err(invalid(format!("truncation tolerance must be positive, got {tol}")));
    }
    let cap = policy.max_lag;
    let srd_mass = |m: usize| -> Result<f64> { Ok(schedule.tail_abs_sum(m as u64, 1.0)? * innovation_scale) };
    let (required, achieved_at): (usize, Box<dyn Fn(usize) -> Result<f64>>) = match *schedule {
        CoefficientSchedule::Iid => (0, Box::new(|_| Ok(0.0))),
        CoefficientSchedule::Geometric { rho } => {
            let q = rho.abs();
            let guess = ((tol * (1.0 - q) / innovation_scale).ln() / q.ln()).ceil().max(0.0);
            let mut m = if guess.is_finite() && guess < 1e15 { guess as usize } else { usize::MAX / 2 };
            while m > 0 && srd_mass(m - 1)? < tol {
                m -= 1;
            }
            while m < usize::MAX / 2 && srd_mass(m)? >= tol {
                m += 1;
            }
            (m, Box::new(srd_mass))
        }
        CoefficientSchedule::PolynomialSrd { .. } => {
            let m = first_index(|m| Ok(srd_mass(m)? < tol), cap)?;
            (m, Box::new(srd_mass))
        }
        CoefficientSchedule::Lrd { .. } => {
            let c = |i: usize| schedule.coefficient(i as u64);
            // Move past the initial rise of a log-power L before searching.
            let mut peak = 1usize;
            while peak < (1 << 50) && c(2 * peak) >= c(peak) {
                peak *= 2;
            }
            let m = peak + first_index(|d| Ok(c(peak + d) < tol), cap)?;
            (m, Box::new(move |m: usize| Ok(c(m))))
        }
    };
    let capped = required > cap;
    let lag = if schedule.is_lrd() { n.max(required.min(cap)) } else { required.min(cap) };
    let capped = capped && lag < required;
    Ok(Truncation { lag, achieved: achieved_at(lag)?, requested: tol, capped })
}

/// Smallest `i >= 0` with `pred(i)` for a monotone predicate; `limit + 1` if
/// the predicate is still false at `limit`.
fn first_index(pred: impl Fn(usize) -> Result<bool>, limit: usize) -> Result<usize> {
    if pred(0)? {
        return Ok(0);
    }
    let mut hi = 1usize;
    while !pred(hi)? {
        if hi > limit {
            return Ok(limit + 1);
        }
        hi *= 2;
    }
    let mut lo = hi / 2;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if pred(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// A simulated path together with its one-step-ahead conditional locations.
#[derive(Clone, Debug)]
pub struct LinearProcessPath {
    /// `X_1..X_n`.
    pub values: Vec<f64>,
    /// `X_{i,i-1} = sum_{j=1}^{M} a_j eps_{i-j}`.
    pub lagged_locations: Vec<f64>,
    /// `eps_1..eps_n`; the `M` pre-sample innovations are regenerable from `seed`.
    pub innovations: Vec<f64>,
    pub truncation: Truncation,
    pub seed: u64,
}

impl LinearProcessPath {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// The first `n` observations, itself a valid stationary path.
    pub fn prefix(&self, n: usize) -> LinearProcessPath {
        let n = n.min(self.len());
        LinearProcessPath {
            values: self.values[..n].to_vec(),
            lagged_locations: self.lagged_locations[..n].to_vec(),
            innovations: self.innovations[..n].to_vec(),
            truncation: self.truncation,
            seed: self.seed,
        }
    }
}

struct FftKernel {
    size: usize,
    forward: Arc<dyn RealToComplex<f64>>,
    inverse: Arc<dyn ComplexToReal<f64>>,
    /// Spectrum of `(0, a_1, .., a_M)` divided by `size`.
    spectrum: Vec<Complex<f64>>,
}

/// Reusable simulator for paths of a fixed length; caches the filter spectrum.
pub struct PathSimulator {
    schedule: CoefficientSchedule,
    innovation: InnovationModel,
    n: usize,
    truncation: Truncation,
    coefficients: Vec<f64>,
    fft: Option<FftKernel>,
}

impl PathSimulator {
    pub fn new(
        schedule: CoefficientSchedule,
        innovation: InnovationModel,
        n: usize,
        policy: &TruncationPolicy,
    ) -> Result<Self> {
        if n == 0 {
            return Err(invalid("path length must be at least 1"));
        }
        let schedule = schedule.validated()?;
        let truncation = choose_truncation(&schedule, innovation.scale(), n, policy)?;
        Ok(Self::with_truncation(schedule, innovation, n, truncation))
    }

    fn with_truncation(
        schedule: CoefficientSchedule,
        innovation: InnovationModel,
        n: usize,
        truncation: Truncation,
    ) -> Self {
        let m = truncation.lag;
        let coefficients: Vec<f64> = (0..=m as u64).map(|i| schedule.coefficient(i)).collect();
        let fft = (m > DIRECT_CONVOLUTION_LAGS).then(|| {
            let size = (n + m).next_power_of_two();
            let mut planner = RealFftPlanner::<f64>::new();
            let forward = planner.plan_fft_forward(size);
            let inverse = planner.plan_fft_inverse(size);
            let mut filter = vec![0.0; size];
            filter[1..=m].copy_from_slice(&coefficients[1..]);
            let mut spectrum = forward.make_output_vec();
            forward.process(&mut filter, &mut spectrum).expect("fft buffer sizes match plan");
            let norm = 1.0 / size as f64;
            spectrum.iter_mut().for_each(|z| *z *= norm);
            FftKernel { size, forward, inverse, spectrum }
        });
        Self { schedule, innovation, n, truncation, coefficients, fft }
    }

    pub fn truncation(&self) -> Truncation {
        self.truncation
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn schedule(&self) -> &CoefficientSchedule {
        &self.schedule
    }

    pub fn innovation(&self) -> &InnovationModel {
        &self.innovation
    }

    /// One path from `seed`; the innovation record is `eps_{1-M}..eps_n`.
    pub fn simulate(&self, seed: u64) -> LinearProcessPath {
        let (n, m) = (self.n, self.truncation.lag);
        let mut stream = Stream::new(seed);
        let record = self.innovation.sample(&mut stream, n + m);
        let lagged = match &self.fft {
            None => {
                let a = &self.coefficients;
                (0..n)
                    .map(|i| {
                        let t = i + m;
                        (1..=m).map(|k| a[k] * record[t - k]).sum()
                    })
                    .collect::<Vec<f64>>()
            }
            Some(kernel) => {
                // Circular convolution of length >= n + M: outputs t >= M never wrap.
                let mut input = vec![0.0; kernel.size];
                input[..n + m].copy_from_slice(&record);
                let mut freq = kernel.forward.make_output_vec();
                kernel.forward.process(&mut input, &mut freq).expect("fft buffer sizes match plan");
                for (z, h) in freq.iter_mut().zip(&kernel.spectrum) {
                    *z *= h;
                }
                freq[0].im = 0.0;
                if let Some(last) = freq.last_mut() {
                    last.im = 0.0;
                }
                kernel.inverse.process(&mut freq, &mut input).expect("fft buffer sizes match plan");
                input[m..m + n].to_vec()
            }
        };
        let innovations = record[m..].to_vec();
        let values = lagged.iter().zip(&innovations).map(|(l, e)| l + e).collect();
        LinearProcessPath { values, lagged_locations: lagged, innovations, truncation: self.truncation, seed }
    }
}

/// Simulates `X_1..X_n`; see [`PathSimulator`] to amortise set-up over replicates.
pub fn simulate_path(
    schedule: &CoefficientSchedule,
    innovation: &InnovationModel,
    n: usize,
    policy: &TruncationPolicy,
    seed: u64,
) -> Result<LinearProcessPath> {
    Ok(PathSimulator::new(*schedule, *innovation, n, policy)?.simulate(seed))
}

/// Marginal oracle for the filter truncated at `truncation_lag`.
///
/// Draws `replicates` i.i.d. tails `T = sum_{i=1}^{M} a_i eps_i`. Gaussian
/// innovations draw `T` exactly in law; otherwise the first 4096 lags are
/// summed explicitly and, when the innovation variance is finite, the rest is
/// replaced by a Gaussian of matching variance.
pub fn build_marginal_oracle(
    schedule: &CoefficientSchedule,
    innovation: &InnovationModel,
    replicates: usize,
    truncation_lag: usize,
    seed: u64,
) -> Result<MarginalOracle> {
    if replicates == 0 {
        return Err(invalid("oracle needs at least one replicate"));
    }
    if matches!(schedule, CoefficientSchedule::Iid) || truncation_lag == 0 {
        return Ok(MarginalOracle::exact(*innovation));
    }
    let a: Vec<f64> = (1..=truncation_lag as u64).map(|i| schedule.coefficient(i)).collect();
    let mut stream = Stream::new(seed);
    let gauss = InnovationModel::gaussian(1.0)?;
    let draws: Vec<f64> = match (innovation, innovation.variance()) {
        (InnovationModel::Gaussian { scale }, _) => {
            let sd = scale * a.iter().map(|c| c * c).sum::<f64>().sqrt();
            gauss.sample(&mut stream, replicates).into_iter().map(|z| sd * z).collect()
        }
        (_, variance) => {
            let explicit = match variance {
                Some(_) => a.len().min(ORACLE_EXPLICIT_LAGS),
                None => a.len(),
            };
            let rest_sd = variance.map_or(0.0, |v| (v * a[explicit..].iter().map(|c| c * c).sum::<f64>()).sqrt());
            let mut eps = vec![0.0; explicit];
            let mut out = Vec::with_capacity(replicates);
            for _ in 0..replicates {
                innovation.sample_into(&mut stream, &mut eps);
                let mut t: f64 = a[..explicit].iter().zip(&eps).map(|(c, e)| c * e).sum();
                if rest_sd > 0.0 {
                    t += rest_sd * gauss.sample(&mut stream, 1)[0];
                }
                out.push(t);
            }
            out
        }
    };
    MarginalOracle::from_draws(
        *innovation,
        Mixture::Location,
        innovation.is_symmetric(),
        &draws,
        truncation_lag,
        seed,
    )
}

/// Second moment `E eps^2 * int_0^inf x^{-beta} (1 + x)^{-beta} dx` (covariance constant).
///
/// Adaptive Simpson on `[0,1]` and `[1,inf)` after substitutions that remove
/// both endpoint singularities.
pub fn c_beta(beta: f64, sigma2: f64) -> Result<f64> {
    check_beta(beta)?;
    let left = |u: f64| {
        let x = u.powf(1.0 / (1.0 - beta));
        (1.0 + x).powf(-beta) / (1.0 - beta)
    };
    let right = |v: f64| {
        let y = v.powf(1.0 / (2.0 * beta - 1.0));
        (1.0 + y).powf(-beta) / (2.0 * beta - 1.0)
    };
    Ok(sigma2 * (adaptive_simpson(&left, 0.0, 1.0, 1e-12) + adaptive_simpson(&right, 0.0, 1.0, 1e-12)))
}

fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.5 && beta < 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("beta must lie in (1/2,1), got {beta}")))
    }
}

/// `Var(sum_{i=1}^n X_i)` for `a_i = i^{-beta} L(i)`, optionally truncated at lag `M`.
///
/// Truncated: the exact finite sum `sigma2 sum_j (sum_{i=1}^n a_{i-j} 1{0<=i-j<=M})^2`.
/// Untruncated: the same sum explicitly over the first `max(16 n, 4096)` past
/// offsets and an integral for the remainder (relative error far below 1e-8).
pub fn sigma_n1_squared_exact(
    n: usize,
    beta: f64,
    l: SlowlyVarying,
    sigma2: f64,
    truncation: Option<usize>,
) -> Result<f64> {
    check_beta(beta)?;
    if n == 0 {
        return Err(invalid("n must be positive"));
    }
    let a = |t: usize| if t == 0 { 1.0 } else { (t as f64).powf(-beta) * l.eval(t as f64) };
    let prefix = |len: usize| {
        let mut s = Vec::with_capacity(len + 1);
        let mut acc = 0.0;
        for t in 0..=len {
            acc += a(t);
            s.push(acc);
        }
        s
    };
    match truncation {
        Some(m) => {
            let s = prefix(m);
            // j = 1..n, then past offsets k = -j = 0..M-1.
            let mut total: f64 = (1..=n).map(|j| s[(n - j).min(m)].powi(2)).sum();
            for k in 0..m {
                let hi = s[(n + k).min(m)];
                total += (hi - s[k]).powi(2);
            }
            Ok(sigma2 * total)
        }
        None => {
            let d0 = (16 * n).max(4096);
            let s = prefix(d0 + n);
            let mut total: f64 = (1..=n).map(|j| s[n - j].powi(2)).sum();
            total += (0..d0).map(|k| (s[k + n] - s[k]).powi(2)).sum::<f64>();
            let (nodes, weights) = gauss_legendre(16);
            let nf = n as f64;
            // G(k) = (sum_{t=k+1}^{k+n} a_t)^2 ~ k^{-2 beta} h(k), summed by the midpoint rule.
            let h = |kappa: f64| {
                let half = 0.5 * nf;
                let centre = kappa + 0.5 + half;
                let mut acc = 0.0;
                for (x, w) in nodes.iter().zip(&weights) {
                    let t = centre + half * x;
                    acc += w * half * (kappa / t).powf(beta) * l.eval(t);
                }
                acc * acc
            };
            total += power_tail_integral(d0 as f64 - 0.5, 2.0 * beta, &h);
            Ok(sigma2 * total)
        }
    }
}

/// Named rate functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum RateKind {
    #[serde(rename = "ell_q")]
    EllQ,
    #[serde(rename = "iota_q")]
    IotaQ,
    #[serde(rename = "psi")]
    Psi,
    #[serde(rename = "sigma_n1_asym")]
    SigmaN1Asym,
    #[serde(rename = "sigma_n1_exact")]
    SigmaN1Exact,
    #[serde(rename = "A_beta")]
    ABeta,
    #[serde(rename = "b_thm3")]
    BThm3,
    #[serde(rename = "c_beta")]
    CBeta,
    #[serde(rename = "lrd_exponent")]
    LrdExponent,
    #[serde(rename = "kiefer_scale")]
    KieferScale,
}

impl RateKind {
    pub const ALL: [RateKind; 10] = [
        Self::EllQ,
        Self::IotaQ,
        Self::Psi,
        Self::SigmaN1Asym,
        Self::SigmaN1Exact,
        Self::ABeta,
        Self::BThm3,
        Self::CBeta,
        Self::LrdExponent,
        Self::KieferScale,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Self::EllQ => "ell_q",
            Self::IotaQ => "iota_q",
            Self::Psi => "psi",
            Self::SigmaN1Asym => "sigma_n1_asym",
            Self::SigmaN1Exact => "sigma_n1_exact",
            Self::ABeta => "A_beta",
            Self::BThm3 => "b_thm3",
            Self::CBeta => "c_beta",
            Self::LrdExponent => "lrd_exponent",
            Self::KieferScale => "kiefer_scale",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }

    /// Kinds that depend on `n` (and so need `n >= 16`).
    pub fn needs_n(&self) -> bool {
        !matches!(self, Self::CBeta | Self::LrdExponent)
    }

    fn is_sigma(&self) -> bool {
        matches!(self, Self::SigmaN1Asym | Self::SigmaN1Exact | Self::BThm3 | Self::CBeta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RateParams {
    pub q: f64,
    pub beta: f64,
    pub slowly_varying: SlowlyVarying,
    pub sigma2: f64,
    /// Innovation moment order; sigma-type kinds need at least 2.
    pub alpha_moment: f64,
    /// Truncation lag for `sigma_n1_exact` and `b_thm3`; `None` is the infinite filter.
    pub truncation: Option<usize>,
}

impl Default for RateParams {
    fn default() -> Self {
        Self {
            q: 3.0,
            beta: 0.75,
            slowly_varying: SlowlyVarying::default(),
            sigma2: 1.0,
            alpha_moment: f64::INFINITY,
            truncation: None,
        }
    }
}

/// `max(-beta/2 - 1/4, 3/2 - 3 beta)`.
pub fn lrd_exponent(beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok((-0.5 * beta - 0.25).max(1.5 - 3.0 * beta))
}

pub fn rate_function(kind: RateKind, n: Option<u64>, params: &RateParams) -> Result<f64> {
    if kind.is_sigma() && params.alpha_moment < 2.0 {
        return Err(Error::Domain(format!(
            "{} needs a finite innovation variance (moment order {} < 2)",
            kind.name(),
            params.alpha_moment
        )));
    }
    let n = if kind.needs_n() {
        match n {
            Some(n) if n >= 16 => n,
            Some(n) => return Err(Error::Domain(format!("n = {n} < 16 leaves log log n undefined or negative"))),
            None => return Err(Error::Domain(format!("{} needs n", kind.name()))),
        }
    } else {
        0
    };
    let nf = n as f64;
    let (ln, lln) = (nf.ln(), nf.ln().ln());
    let q = params.q;
    let needs_q = matches!(kind, RateKind::EllQ | RateKind::IotaQ);
    if needs_q && !(q >= 2.0) {
        return Err(invalid(format!("q must be at least 2, got {q}")));
    }
    let beta = params.beta;
    let l = params.slowly_varying;
    let psi = || -> Result<f64> {
        check_beta(beta)?;
        let s: f64 = (1..=n).map(|k| (k as f64).powf(0.5 - 2.0 * beta) * l.eval(k as f64).powi(2)).sum();
        Ok(nf.sqrt() * s)
    };
    let sigma_exact = || -> Result<f64> {
        Ok(sigma_n1_squared_exact(n as usize, beta, l, params.sigma2, params.truncation)?.sqrt())
    };
    match kind {
        RateKind::EllQ => Ok(if q > 2.0 { lln.sqrt() } else { ln.powf(1.5) * lln }),
        RateKind::IotaQ => Ok(if q > 2.0 { ln.powf(1.0 / q) * lln.powf(2.0 / q) } else { ln.powf(1.5) * lln }),
        RateKind::Psi => psi(),
        RateKind::SigmaN1Asym => {
            let c = c_beta(beta, params.sigma2)?;
            Ok((c / ((1.0 - beta) * (3.0 - 2.0 * beta)) * nf.powf(3.0 - 2.0 * beta) * l.eval(nf).powi(2)).sqrt())
        }
        RateKind::SigmaN1Exact => sigma_exact(),
        RateKind::ABeta => {
            let p = psi()?;
            Ok(if beta < 0.75 { p * p * ln * lln * lln } else { p * p * ln.powi(3) * lln * lln })
        }
        RateKind::BThm3 => Ok(sigma_exact()? * ln.sqrt() * lln / nf),
        RateKind::CBeta => c_beta(beta, params.sigma2),
        RateKind::LrdExponent => lrd_exponent(beta),
        RateKind::KieferScale => Ok(nf.powf(-0.75) * lln.powf(0.75)),
    }
}
