//! Iterated random functions `X_n = G(X_{n-1}, eps_n)`.
//!
//! Three maps are provided (AR(1), ARCH(1), threshold AR), each checked for
//! contraction in log-Lipschitz mean at construction. On top of the chain
//! simulator sit the coupling-based geometric-moment-contraction estimator,
//! the m-dependent coupled process and its block empirical distribution
//! functions, and a marginal oracle built from independent chain states.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::innovations::InnovationModel;
use crate::oracle::{MarginalOracle, Mixture};
use crate::quad::adaptive_simpson;
use crate::rng::{derive_seed, Stream};

pub const DEFAULT_BURN_IN: usize = 256;

fn default_burn_in() -> usize {
    DEFAULT_BURN_IN
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MapKind {
    /// `G(x, e) = a x + e`.
    Ar1 { a: f64 },
    /// `G(x, e) = e sqrt(c0 + c1 x^2)`.
    Arch1 { c0: f64, c1: f64 },
    /// `G(x, e) = phi_plus max(x, 0) - phi_minus max(-x, 0) + e`.
    Tar { phi_plus: f64, phi_minus: f64 },
}

impl MapKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Ar1 { .. } => "ar1",
            Self::Arch1 { .. } => "arch1",
            Self::Tar { .. } => "tar",
        }
    }

    #[inline]
    pub fn apply(&self, x: f64, e: f64) -> f64 {
        match *self {
            Self::Ar1 { a } => a * x + e,
            Self::Arch1 { c0, c1 } => e * (c0 + c1 * x * x).sqrt(),
            Self::Tar { phi_plus, phi_minus } => phi_plus * x.max(0.0) - phi_minus * (-x).max(0.0) + e,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IteratedMapModel {
    pub map: MapKind,
    pub innovation: InnovationModel,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
}

/// `E log|eps|` by quadrature on `(0, 1]` and `[1, inf)` after substitutions
/// that remove the endpoint singularities.
fn mean_log_abs(innovation: &InnovationModel) -> f64 {
    let density = |x: f64| innovation.pdf(x) + innovation.pdf(-x);
    let near = |u: f64| {
        if u <= 0.0 {
            return 0.0;
        }
        let x = u * u;
        2.0 * u * x.ln() * density(x)
    };
    let far = |y: f64| {
        if y <= 0.0 {
            return 0.0;
        }
        let x = 1.0 / y;
        -y.ln() * density(x) / (y * y)
    };
    adaptive_simpson(&near, 0.0, 1.0, 1e-10) + adaptive_simpson(&far, 0.0, 1.0, 1e-10)
}

impl IteratedMapModel {
    /// Validates parameters and the contraction condition `E log L_eps < 0`.
    pub fn new(map: MapKind, innovation: InnovationModel, burn_in: usize) -> Result<Self> {
        let innovation = innovation.validated()?;
        match map {
            MapKind::Ar1 { a } => {
                if !(a.abs() < 1.0) {
                    return Err(invalid(format!("ar1 needs |a| < 1, got {a}")));
                }
            }
            MapKind::Arch1 { c0, c1 } => {
                if !(c0 > 0.0 && c1 >= 0.0 && c1.is_finite()) {
                    return Err(invalid(format!("arch1 needs c0 > 0 and c1 >= 0, got ({c0}, {c1})")));
                }
                if c1 > 0.0 {
                    let lyapunov = 0.5 * c1.ln() + mean_log_abs(&innovation);
                    if !(lyapunov < 0.0) {
                        return Err(invalid(format!(
                            "arch1 is not contractive: E log(sqrt(c1)|eps|) = {lyapunov:.4} >= 0"
                        )));
                    }
                }
            }
            MapKind::Tar { phi_plus, phi_minus } => {
                if !(phi_plus.abs().max(phi_minus.abs()) < 1.0) {
                    return Err(invalid(format!(
                        "tar needs max(|phi_plus|, |phi_minus|) < 1, got ({phi_plus}, {phi_minus})"
                    )));
                }
            }
        }
        Ok(Self { map, innovation, burn_in })
    }

    pub fn validated(self) -> Result<Self> {
        Self::new(self.map, self.innovation, self.burn_in)
    }

    /// Distributional symmetry of the stationary law about 0.
    pub fn is_symmetric(&self) -> bool {
        self.innovation.is_symmetric()
            && match self.map {
                MapKind::Ar1 { .. } | MapKind::Arch1 { .. } => true,
                MapKind::Tar { phi_plus, phi_minus } => phi_plus == phi_minus,
            }
    }

    /// Runs `burn_in` steps from 0 on a fresh stream.
    fn burned_in_state(&self, seed: u64) -> Result<f64> {
        let mut stream = Stream::new(seed);
        let eps = self.innovation.sample(&mut stream, self.burn_in);
        iterate(&self.map, 0.0, &eps, 0)
    }
}

/// Folds `eps` through the map; `step0` only labels errors.
fn iterate(map: &MapKind, mut x: f64, eps: &[f64], step0: usize) -> Result<f64> {
    for (k, &e) in eps.iter().enumerate() {
        x = map.apply(x, e);
        if !x.is_finite() {
            return Err(Error::NonFinite { step: step0 + k });
        }
    }
    Ok(x)
}

/// `X_1..X_n` after discarding `burn_in` steps from `X_0 = 0`.
pub fn simulate_chain(model: &IteratedMapModel, n: usize, seed: u64) -> Result<Vec<f64>> {
    simulate_with_presample(model, n, 0, seed).map(|(x, _)| x)
}

/// Chain values plus the innovation record `eps_{1-P}..eps_n`, `P = max(burn_in, extra)`.
fn simulate_with_presample(
    model: &IteratedMapModel,
    n: usize,
    extra: usize,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(invalid("chain length must be at least 1"));
    }
    let pre = model.burn_in.max(extra);
    let mut stream = Stream::new(seed);
    let eps = model.innovation.sample(&mut stream, pre + n);
    let mut x = 0.0;
    let mut out = Vec::with_capacity(n);
    for (k, &e) in eps.iter().enumerate() {
        x = model.map.apply(x, e);
        if !x.is_finite() {
            return Err(Error::NonFinite { step: k });
        }
        if k >= pre {
            out.push(x);
        }
    }
    Ok((out, eps))
}

/// Per-lag coupling distances and the fitted geometric rate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmcReport {
    pub alpha: f64,
    /// `mean |X_k - X'_k|^alpha` for `k = 0..=n_max`.
    pub mean_distance: Vec<f64>,
    pub usable_lags: usize,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub r_hat: f64,
    pub replicates: usize,
    pub warnings: Vec<String>,
}

/// Estimates the contraction rate `r` in `E|X_n - X'_n|^alpha <= C r^n`.
///
/// Each replicate starts two independently burned-in states and drives both
/// with the same innovations. The log-linear fit uses the leading lags whose
/// mean distance exceeds `10 * f64::EPSILON`.
pub fn estimate_gmc(
    model: &IteratedMapModel,
    alpha: f64,
    n_max: usize,
    replicates: usize,
    seed: u64,
) -> Result<GmcReport> {
    if !(alpha > 0.0) || alpha > model.innovation.alpha_moment() {
        return Err(invalid(format!(
            "alpha must lie in (0, {}], got {alpha}",
            model.innovation.alpha_moment()
        )));
    }
    if replicates < 100 {
        return Err(invalid(format!("estimate_gmc needs at least 100 replicates, got {replicates}")));
    }
    if n_max < 1 {
        return Err(invalid("n_max must be at least 1"));
    }
    let rows: Vec<Vec<f64>> = (0..replicates as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<f64>> {
            let mut x = model.burned_in_state(derive_seed(seed, "gmc-primary", r))?;
            let mut y = model.burned_in_state(derive_seed(seed, "gmc-shadow", r))?;
            let mut stream = Stream::new(derive_seed(seed, "gmc-shared", r));
            let eps = model.innovation.sample(&mut stream, n_max);
            let mut d = Vec::with_capacity(n_max + 1);
            d.push((x - y).abs().powf(alpha));
            for (k, &e) in eps.iter().enumerate() {
                x = model.map.apply(x, e);
                y = model.map.apply(y, e);
                if !(x.is_finite() && y.is_finite()) {
                    return Err(Error::NonFinite { step: k });
                }
                d.push((x - y).abs().powf(alpha));
            }
            Ok(d)
        })
        .collect::<Result<_>>()?;
    let mut mean = vec![0.0; n_max + 1];
    for row in &rows {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= replicates as f64);
    let usable = mean.iter().take_while(|&&m| m > 10.0 * f64::EPSILON).count();
    if usable < 2 {
        return Err(Error::DegenerateDecay { usable_lags: usable });
    }
    let mut warnings = Vec::new();
    if usable < 5 {
        warnings.push(Error::DegenerateDecay { usable_lags: usable }.to_string());
    }
    let xs: Vec<f64> = (0..usable).map(|k| k as f64).collect();
    let ys: Vec<f64> = mean[..usable].iter().map(|m| m.ln()).collect();
    let (slope, intercept, r_squared) = ols(&xs, &ys);
    Ok(GmcReport {
        alpha,
        mean_distance: mean,
        usable_lags: usable,
        slope,
        intercept,
        r_squared,
        r_hat: slope.exp(),
        replicates,
        warnings,
    })
}

/// Least squares `y = intercept + slope x`; returns `(slope, intercept, R^2)`.
pub(crate) fn ols(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    (slope, intercept, r2)
}

/// The original chain and its m-dependent coupled version.
#[derive(Clone, Debug, PartialEq)]
pub struct MDependentPaths {
    pub original: Vec<f64>,
    pub coupled: Vec<f64>,
    pub m: usize,
}

/// `X~_k`: `m` steps of the map from an independent burned-in state, driven by
/// the same `eps_{k-m+1..k}` as `X_k`.
pub fn simulate_m_dependent(model: &IteratedMapModel, n: usize, m: usize, seed: u64) -> Result<MDependentPaths> {
    if !(m >= 1 && m < n) {
        return Err(invalid(format!("need 1 <= m < n, got m = {m}, n = {n}")));
    }
    let (original, eps) = simulate_with_presample(model, n, m, derive_seed(seed, "m-dep-original", 0))?;
    let pre = eps.len() - n;
    let coupled = (0..n)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let start = model.burned_in_state(derive_seed(seed, "m-dep-shadow", k as u64))?;
            // eps_{k-m+2..k+1} in 1-based time is eps[pre + k + 1 - m ..= pre + k].
            let window = &eps[pre + k + 1 - m..=pre + k];
            iterate(&model.map, start, window, k)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(MDependentPaths { original, coupled, m })
}

/// `A_n(j)`: `floor(n/m)` for `j <= n - m floor(n/m)`, else `floor(n/m) - 1`.
pub fn block_upper(n: usize, m: usize, j: usize) -> Result<usize> {
    if !(1..=m).contains(&j) || m > n {
        return Err(Error::Index { j, m });
    }
    let q = n / m;
    Ok(if j <= n - m * q { q } else { q - 1 })
}

/// 1-based indices `j + i m`, `i = 0..=A_n(j)`.
pub fn block_indices(n: usize, m: usize, j: usize) -> Result<Vec<usize>> {
    let a = block_upper(n, m, j)?;
    Ok((0..=a).map(|i| j + i * m).collect())
}

/// Number of block members `X~_{j+im} <= x`.
pub fn block_count(coupled: &[f64], m: usize, j: usize, x: f64) -> Result<usize> {
    let idx = block_indices(coupled.len(), m, j)?;
    Ok(idx.iter().filter(|&&i| coupled[i - 1] <= x).count())
}

/// `F~_{n,j}(x)`, the empirical distribution function of block `j`.
pub fn block_ecdf(coupled: &[f64], m: usize, j: usize, x: f64) -> Result<f64> {
    let size = block_upper(coupled.len(), m, j)? + 1;
    Ok(block_count(coupled, m, j, x)? as f64 / size as f64)
}

/// Marginal oracle from `replicates` independent burned-in states `X_j`:
/// a location mixture in `G(X_j, 0)` for ar1 and tar, a scale mixture in
/// `sqrt(c0 + c1 X_j^2)` for arch1.
pub fn build_map_oracle(model: &IteratedMapModel, replicates: usize, seed: u64) -> Result<MarginalOracle> {
    if replicates == 0 {
        return Err(invalid("oracle needs at least one replicate"));
    }
    let states = (0..replicates as u64)
        .into_par_iter()
        .map(|j| model.burned_in_state(derive_seed(seed, "map-oracle", j)))
        .collect::<Result<Vec<f64>>>()?;
    let (mixture, draws): (Mixture, Vec<f64>) = match model.map {
        MapKind::Arch1 { c0, c1 } => (Mixture::Scale, states.iter().map(|x| (c0 + c1 * x * x).sqrt()).collect()),
        map => (Mixture::Location, states.iter().map(|&x| map.apply(x, 0.0)).collect()),
    };
    let mirrored = mixture == Mixture::Location && model.is_symmetric();
    MarginalOracle::from_draws(model.innovation, mixture, mirrored, &draws, model.burn_in, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gauss() -> InnovationModel {
        InnovationModel::gaussian(1.0).unwrap()
    }

    fn ar1(a: f64) -> IteratedMapModel {
        IteratedMapModel::new(MapKind::Ar1 { a }, gauss(), 200).unwrap()
    }

    #[test]
    fn contraction_checks() {
        assert!(IteratedMapModel::new(MapKind::Ar1 { a: 1.0 }, gauss(), 10).is_err());
        assert!(IteratedMapModel::new(MapKind::Tar { phi_plus: 0.5, phi_minus: -1.2 }, gauss(), 10).is_err());
        assert!(IteratedMapModel::new(MapKind::Arch1 { c0: 1.0, c1: 0.3 }, gauss(), 10).is_ok());
        // E log|Z| = -(gamma + ln 2)/2, so sqrt(c1)|Z| contracts iff c1 < 2 e^gamma = 3.562.
        assert!(IteratedMapModel::new(MapKind::Arch1 { c0: 1.0, c1: 3.5 }, gauss(), 10).is_ok());
        assert!(IteratedMapModel::new(MapKind::Arch1 { c0: 1.0, c1: 3.7 }, gauss(), 10).is_err());
        assert!(IteratedMapModel::new(MapKind::Arch1 { c0: 0.0, c1: 0.3 }, gauss(), 10).is_err());
    }

    #[test]
    fn mean_log_abs_of_gaussian() {
        let euler_gamma = 0.577_215_664_901_532_9;
        let want = -(euler_gamma + 2f64.ln()) / 2.0;
        assert!((mean_log_abs(&gauss()) - want).abs() < 1e-7);
    }

    #[test]
    fn zero_coefficient_chain_is_innovations() {
        let model = ar1(0.0);
        let x = simulate_chain(&model, 100, 5).unwrap();
        let eps = gauss().sample(&mut Stream::new(5), 300);
        assert_eq!(x, eps[200..].to_vec());
    }

    #[test]
    fn ar1_stationary_variance() {
        let x = simulate_chain(&ar1(0.5), 100_000, 6).unwrap();
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let v = x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((v / (1.0 / 0.75) - 1.0).abs() < 0.02, "variance {v}");
    }

    #[test]
    fn arch_marginal_is_centred() {
        let model = IteratedMapModel::new(MapKind::Arch1 { c0: 1.0, c1: 0.3 }, gauss(), 200).unwrap();
        let x = simulate_chain(&model, 100_000, 7).unwrap();
        let n = x.len() as f64;
        let m = x.iter().sum::<f64>() / n;
        let sd = (x.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(m.abs() < 4.0 * sd / n.sqrt());
    }

    #[test]
    fn chain_overflow_is_reported() {
        // Bypasses the constructor to emulate a parameterisation that slipped through.
        let model = IteratedMapModel { map: MapKind::Ar1 { a: 1e200 }, innovation: gauss(), burn_in: 10 };
        assert!(matches!(simulate_chain(&model, 10, 1), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn gmc_ar1_rate_and_initial_gap() {
        let rep = estimate_gmc(&ar1(0.5), 2.0, 20, 2000, 11).unwrap();
        assert!((rep.r_hat - 0.25).abs() < 0.03);
        assert!(rep.r_squared >= 0.99);
        let want = 0.25f64.powi(4) * 2.0 / 0.75;
        assert!((rep.mean_distance[4] / want - 1.0).abs() < 0.10, "{}", rep.mean_distance[4]);
    }

    #[test]
    fn gmc_one_step_forgetting() {
        let err = estimate_gmc(&ar1(0.0), 1.0, 10, 100, 3).unwrap_err();
        assert!(matches!(err, Error::DegenerateDecay { usable_lags: 1 }));
        let model = ar1(0.0);
        let mut x = model.burned_in_state(1).unwrap();
        let mut y = model.burned_in_state(2).unwrap();
        x = model.map.apply(x, 0.3);
        y = model.map.apply(y, 0.3);
        assert_eq!(x, y);
    }

    #[test]
    fn gmc_rejects_bad_inputs() {
        assert!(estimate_gmc(&ar1(0.5), 2.0, 10, 99, 0).is_err());
        let heavy =
            IteratedMapModel::new(MapKind::Ar1 { a: 0.5 }, InnovationModel::student_t(1.0, 1.5).unwrap(), 50).unwrap();
        assert!(estimate_gmc(&heavy, 2.0, 10, 100, 0).is_err());
    }

    #[test]
    fn coupled_gap_contracts_with_m() {
        let p = simulate_m_dependent(&ar1(0.5), 10_000, 40, 21).unwrap();
        let gap = p.original.iter().zip(&p.coupled).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        // |X~_k - X_k| = 0.5^40 |Y_k - X_{k-40}| and both states are O(10).
        assert!(gap <= 0.5f64.powi(40) * 20.0, "gap {gap}");
        let q = simulate_m_dependent(&ar1(0.5), 10_000, 10, 21).unwrap();
        let gap10 = q.original.iter().zip(&q.coupled).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(gap10 > gap);
    }

    #[test]
    fn block_index_examples() {
        assert_eq!(block_indices(10, 3, 1).unwrap(), vec![1, 4, 7, 10]);
        assert_eq!(block_upper(10, 3, 1).unwrap(), 3);
        assert_eq!(block_indices(10, 3, 2).unwrap(), vec![2, 5, 8]);
        assert_eq!(block_upper(10, 3, 2).unwrap(), 2);
        assert!(matches!(block_indices(10, 3, 0), Err(Error::Index { .. })));
        assert!(matches!(block_indices(10, 3, 4), Err(Error::Index { .. })));
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert_eq!(block_ecdf(&xs, 3, 1, f64::INFINITY).unwrap(), 1.0);
    }

    #[test]
    fn map_oracle_for_ar1_matches_gaussian_marginal() {
        let o = build_map_oracle(&ar1(0.5), 20_000, 2).unwrap();
        let target = InnovationModel::gaussian((1.0f64 / 0.75).sqrt()).unwrap();
        for k in -10..=10 {
            let x = 0.3 * k as f64;
            let e = o.eval(x);
            assert!((e.cdf - target.cdf(x)).abs() < 5.0 * e.cdf_se + 1e-6, "x={x}");
        }
    }

    #[test]
    fn arch_oracle_is_a_valid_distribution() {
        let model = IteratedMapModel::new(MapKind::Arch1 { c0: 1.0, c1: 0.3 }, gauss(), 100).unwrap();
        let o = build_map_oracle(&model, 5000, 2).unwrap();
        assert!((o.cdf(0.0) - 0.5).abs() < 1e-12);
        let mut prev = 0.0;
        for k in -100..=100 {
            let c = o.cdf(0.1 * k as f64);
            assert!(c >= prev);
            prev = c;
        }
    }
}
