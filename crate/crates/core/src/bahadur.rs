//! Bahadur remainders of sample quantiles and the first-order expansion
//! `S_n(y;1)` used for the long-memory analysis.
//!
//! `xi_p`, `f(xi_p)` and `f'(xi_p)` always come from a [`MarginalOracle`];
//! every remainder carries the error bar `se(F)/f(xi_p)` inherited from it.

use serde::{Deserialize, Serialize};

use crate::empirical::{robust_ceil, robust_floor, EmpiricalSample};
use crate::error::{invalid, Error, Result};
use crate::innovations::InnovationModel;
use crate::linear_process::CoefficientSchedule;
use crate::oracle::MarginalOracle;

/// Automatic branch selection refuses within this distance of `4 beta - 3 = gamma`.
pub const BOUNDARY_MARGIN: f64 = 0.02;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BahadurDecomposition {
    pub p: f64,
    pub xi_p: f64,
    pub xi_np: f64,
    pub density: f64,
    pub density_deriv: f64,
    pub sample_mean: f64,
    /// `(p - F_n(xi_p)) / f(xi_p)`.
    pub linear_term: f64,
    /// `Xbar_n^2 f'(xi_p) / (2 f(xi_p))`.
    pub correction_term: f64,
    /// `xi_np - xi_p - linear_term`.
    pub remainder_srd: f64,
    /// `remainder_srd - correction_term`.
    pub remainder_lrd: f64,
    /// Oracle error propagated to the remainder, `se(F(xi_p)) / f(xi_p)`.
    pub error_bar: f64,
}

impl BahadurDecomposition {
    pub fn remainder(&self, corrected: bool) -> f64 {
        if corrected {
            self.remainder_lrd
        } else {
            self.remainder_srd
        }
    }
}

/// Oracle quantities at a fixed set of levels, shared by every replicate.
#[derive(Clone, Debug)]
pub struct QuantileLevels {
    p: Vec<f64>,
    xi: Vec<f64>,
    density: Vec<f64>,
    density_deriv: Vec<f64>,
    error_bar: Vec<f64>,
}

impl QuantileLevels {
    /// Levels are sorted and deduplicated; each must lie in `(0,1)`.
    pub fn new(oracle: &MarginalOracle, levels: &[f64]) -> Result<Self> {
        if levels.is_empty() {
            return Err(invalid("quantile grid must not be empty"));
        }
        let mut p = levels.to_vec();
        p.sort_unstable_by(f64::total_cmp);
        p.dedup();
        let cap = p.len();
        let mut out = Self {
            p: Vec::with_capacity(cap),
            xi: Vec::with_capacity(cap),
            density: Vec::with_capacity(cap),
            density_deriv: Vec::with_capacity(cap),
            error_bar: Vec::with_capacity(cap),
        };
        for &level in &p {
            let xi = oracle.quantile(level)?;
            let e = oracle.eval(xi);
            if !(e.pdf > 0.0) || e.pdf < 10.0 * e.pdf_se {
                return Err(Error::DensityTooSmall { density: e.pdf, precision: e.pdf_se });
            }
            out.p.push(level);
            out.xi.push(xi);
            out.density.push(e.pdf);
            out.density_deriv.push(e.pdf_deriv);
            out.error_bar.push(e.cdf_se / e.pdf);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    pub fn levels(&self) -> &[f64] {
        &self.p
    }

    pub fn quantiles(&self) -> &[f64] {
        &self.xi
    }

    /// Largest propagated oracle error over the levels.
    pub fn max_error_bar(&self) -> f64 {
        self.error_bar.iter().copied().fold(0.0, f64::max)
    }

    fn decompose(&self, j: usize, sample: &EmpiricalSample, ecdf_at_xi: f64, mean: f64) -> BahadurDecomposition {
        let p = self.p[j];
        let n = sample.len();
        let k = robust_ceil(n as f64 * p).clamp(1, n);
        let xi_np = sample.order_statistic(k);
        let (xi_p, f, fp) = (self.xi[j], self.density[j], self.density_deriv[j]);
        let linear_term = (p - ecdf_at_xi) / f;
        let correction_term = mean * mean * fp / (2.0 * f);
        let remainder_srd = xi_np - xi_p - linear_term;
        BahadurDecomposition {
            p,
            xi_p,
            xi_np,
            density: f,
            density_deriv: fp,
            sample_mean: mean,
            linear_term,
            correction_term,
            remainder_srd,
            remainder_lrd: remainder_srd - correction_term,
            error_bar: self.error_bar[j],
        }
    }

    /// Decompositions at every level, in level order.
    pub fn decompose_all(&self, sample: &EmpiricalSample) -> Vec<BahadurDecomposition> {
        let mean = sample.mean();
        let sorted = sample.sorted();
        let n = sorted.len() as f64;
        let mut count = 0usize;
        (0..self.len())
            .map(|j| {
                // xi is nondecreasing in p, so the count only moves forward.
                while count < sorted.len() && sorted[count] <= self.xi[j] {
                    count += 1;
                }
                self.decompose(j, sample, count as f64 / n, mean)
            })
            .collect()
    }
}

/// The Bahadur decomposition of `xi_np` at level `p`.
pub fn remainder(sample: &EmpiricalSample, p: f64, oracle: &MarginalOracle) -> Result<BahadurDecomposition> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("quantile level must be in (0,1), got {p}")));
    }
    let levels = QuantileLevels::new(oracle, &[p])?;
    Ok(levels.decompose(0, sample, sample.ecdf(levels.xi[0]), sample.mean()))
}

/// `sup_p |remainder(p)|` over a level grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformRemainder {
    pub sup: f64,
    pub argmax_p: f64,
    pub error_bar: f64,
}

pub fn uniform_remainder(sample: &EmpiricalSample, levels: &QuantileLevels, corrected: bool) -> UniformRemainder {
    let mut best = UniformRemainder { sup: -1.0, argmax_p: f64::NAN, error_bar: levels.max_error_bar() };
    for d in levels.decompose_all(sample) {
        let r = d.remainder(corrected).abs();
        if r > best.sup {
            best.sup = r;
            best.argmax_p = d.p;
        }
    }
    best
}

/// Level grid on `[p0, p1]`: `max(points, ceil(sqrt n))` equispaced levels
/// plus every jump level `k/n` of the sample quantile inside the range.
pub fn resolved_grid(p0: f64, p1: f64, points: usize, n: usize) -> Result<Vec<f64>> {
    if !(p0 > 0.0 && p0 < p1 && p1 < 1.0) {
        return Err(invalid(format!("need 0 < p0 < p1 < 1, got [{p0}, {p1}]")));
    }
    let m = points.max((n as f64).sqrt().ceil() as usize).max(2);
    let mut grid: Vec<f64> = (0..m).map(|i| p0 + (p1 - p0) * i as f64 / (m - 1) as f64).collect();
    let (lo, hi) = (robust_ceil(n as f64 * p0), robust_floor(n as f64 * p1));
    grid.extend((lo.max(1)..=hi).map(|k| k as f64 / n as f64).filter(|&q| q >= p0 && q <= p1 && q < 1.0));
    grid.sort_unstable_by(f64::total_cmp);
    grid.dedup();
    Ok(grid)
}

/// `2^{5/4} 3^{-3/4} sqrt(p(1-p)) / f(xi_p)`, the limsup constant of the i.i.d. law
/// of the iterated logarithm for the remainder.
pub fn kiefer_limit(p: f64, density: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(invalid(format!("p must be in (0,1), got {p}")));
    }
    if !(density > 0.0 && density.is_finite()) {
        return Err(invalid(format!("density must be positive, got {density}")));
    }
    Ok(2f64.powf(1.25) * 3f64.powf(-0.75) * (p * (1.0 - p)).sqrt() / density)
}

/// `S_n(y;1) = n[F_n(y) - F(y) + f(y) Xbar_n]`, using `U_{i,1} = X_i`.
pub fn first_order_remainder(sample: &EmpiricalSample, oracle: &MarginalOracle, y: f64) -> f64 {
    let e = oracle.eval(y);
    let n = sample.len() as f64;
    n * (sample.ecdf(y) - e.cdf + e.pdf * sample.mean())
}

/// `S_n(y;1)`, `H_n(y)` and `n M_n(y)` at one point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Expansion {
    pub s_n: f64,
    pub h_n: f64,
    pub n_martingale: f64,
}

/// `H_n(y) = n[F_n*(y) - F(y) + f(y) Xbar_n]`; needs the lagged locations.
pub fn expansion_remainder(
    sample: &EmpiricalSample,
    innovation: &InnovationModel,
    oracle: &MarginalOracle,
    y: f64,
) -> Result<Expansion> {
    let n = sample.len() as f64;
    let e = oracle.eval(y);
    let fn_y = sample.ecdf(y);
    let fstar = sample.conditional_cdf(innovation, y)?;
    let drift = e.pdf * sample.mean();
    Ok(Expansion {
        s_n: n * (fn_y - e.cdf + drift),
        h_n: n * (fstar - e.cdf + drift),
        n_martingale: n * (fn_y - fstar),
    })
}

/// Normalisation of the increment `S_n(x + delta;1) - S_n(x;1)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// `sqrt(n delta)`; limit `N(0, f(x))` when `4 beta - 3 > gamma`.
    Gaussian,
    /// `sigma_{n,2} delta` with `sigma_{n,2} = n^{2-2 beta} L^2(n)`.
    Rosenblatt,
    /// Picked from `beta` and `gamma = log delta / log n`.
    #[default]
    Auto,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Increment {
    pub raw: f64,
    pub normalized: f64,
    pub normalizer: f64,
    /// Never `Auto`.
    pub branch: Branch,
}

/// Resolves `Auto`; explicit branches pass through unchecked.
pub fn resolve_branch(branch: Branch, schedule: &CoefficientSchedule, n: usize, delta: f64) -> Result<Branch> {
    if branch != Branch::Auto {
        return Ok(branch);
    }
    let CoefficientSchedule::Lrd { beta, .. } = *schedule else {
        return Ok(Branch::Gaussian);
    };
    let gamma = delta.ln() / (n as f64).ln();
    let gap = 4.0 * beta - 3.0 - gamma;
    if gap.abs() < BOUNDARY_MARGIN {
        return Err(Error::BoundaryRefusal { beta, gamma });
    }
    Ok(if gap > 0.0 { Branch::Gaussian } else { Branch::Rosenblatt })
}

/// Normalised `S_n(x + delta;1) - S_n(x;1)`.
pub fn increment_statistic(
    sample: &EmpiricalSample,
    oracle: &MarginalOracle,
    schedule: &CoefficientSchedule,
    x: f64,
    delta: f64,
    branch: Branch,
) -> Result<Increment> {
    if !(delta >= 0.0 && delta.is_finite()) {
        return Err(invalid(format!("window must be nonnegative, got {delta}")));
    }
    let n = sample.len();
    if delta == 0.0 {
        let branch = if branch == Branch::Auto { Branch::Gaussian } else { branch };
        return Ok(Increment { raw: 0.0, normalized: 0.0, normalizer: 0.0, branch });
    }
    let branch = resolve_branch(branch, schedule, n, delta)?;
    let raw = first_order_remainder(sample, oracle, x + delta) - first_order_remainder(sample, oracle, x);
    let nf = n as f64;
    let normalizer = match branch {
        Branch::Gaussian => (nf * delta).sqrt(),
        Branch::Rosenblatt => {
            let CoefficientSchedule::Lrd { beta, .. } = *schedule else {
                return Err(invalid("the rosenblatt normalisation needs a long-memory schedule"));
            };
            let l = schedule.slowly_varying().eval(nf);
            nf.powf(2.0 - 2.0 * beta) * l * l * delta
        }
        Branch::Auto => unreachable!("resolved above"),
    };
    Ok(Increment { raw, normalized: raw / normalizer, normalizer, branch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linear_process::{simulate_path, SlowlyVarying, TruncationPolicy};
    use crate::rng::{derive_seed, Stream};
    use proptest::prelude::*;

    fn gaussian_oracle() -> (InnovationModel, MarginalOracle) {
        let g = InnovationModel::gaussian(1.0).unwrap();
        (g, MarginalOracle::exact(g))
    }

    #[test]
    fn kiefer_constant() {
        let direct = 2f64.powf(5.0 / 4.0) * 3f64.powf(-3.0 / 4.0) / 2.0;
        let k = kiefer_limit(0.5, 1.0).unwrap();
        assert_eq!(k, direct);
        assert!((k - 0.5216948600244291).abs() < 1e-15);
        assert!((k - 0.52171).abs() < 5e-5);
        assert!((kiefer_limit(0.2, 1.3).unwrap() - kiefer_limit(0.8, 1.3).unwrap()).abs() < 1e-15);
        assert!((kiefer_limit(0.3, 2.0).unwrap() - 0.5 * kiefer_limit(0.3, 1.0).unwrap()).abs() < 1e-15);
        let near = kiefer_limit(0.3 + 1e-9, 1.0).unwrap();
        assert!((near - kiefer_limit(0.3, 1.0).unwrap()).abs() < 1e-8);
        assert!(kiefer_limit(0.0, 1.0).is_err() && kiefer_limit(0.5, 0.0).is_err());
    }

    #[test]
    fn stratified_sample_remainder_is_tiny() {
        let (_, o) = gaussian_oracle();
        for n in [100usize, 1000, 4000] {
            let v: Vec<f64> = (1..=n).map(|i| o.quantile((i as f64 - 0.5) / n as f64).unwrap()).collect();
            let s = EmpiricalSample::new(v).unwrap();
            for p in [0.3, 0.5, 0.77] {
                let d = remainder(&s, p, &o).unwrap();
                let bound = 1.0 / (2.0 * n as f64 * d.density) + 10.0 / (n * n) as f64;
                assert!(d.remainder_srd.abs() <= bound, "n={n} p={p}: {} > {bound}", d.remainder_srd);
            }
        }
    }

    #[test]
    fn iid_uniform_substitution() {
        let u = InnovationModel::uniform(1.0).unwrap();
        let o = MarginalOracle::exact(u);
        let s = EmpiricalSample::new(u.sample(&mut Stream::new(1), 333)).unwrap();
        for p in [0.1, 0.25, 0.5, 0.9] {
            let d = remainder(&s, p, &o).unwrap();
            assert!((d.xi_p - p).abs() <= f64::EPSILON);
            let expect = s.quantile(p).unwrap() - p - (p - s.ecdf(p));
            assert!((d.remainder_srd - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn correction_vanishes_at_symmetric_median() {
        let (_, o) = gaussian_oracle();
        let s = EmpiricalSample::new(vec![3.0, 4.0, 5.0]).unwrap();
        let d = remainder(&s, 0.5, &o).unwrap();
        assert!(d.density_deriv.abs() < 1e-12);
        assert!(d.correction_term.abs() < 1e-10);
    }

    #[test]
    fn density_too_small_is_reported() {
        let u = InnovationModel::uniform(1.0).unwrap();
        let o = MarginalOracle::exact(u);
        let s = EmpiricalSample::new(vec![0.2, 0.4]).unwrap();
        assert!(remainder(&s, 0.5, &o).is_ok());
        // A 200-atom oracle is pure noise far in the tail.
        let l = InnovationModel::logistic(1.0).unwrap();
        let sched = CoefficientSchedule::geometric(0.9).unwrap();
        let noisy = crate::linear_process::build_marginal_oracle(&sched, &l, 200, 100, 7).unwrap();
        assert!(matches!(remainder(&s, 1e-9, &noisy), Err(Error::DensityTooSmall { .. })));
    }

    #[test]
    fn single_level_grid_matches_pointwise() {
        let (g, o) = gaussian_oracle();
        let s = EmpiricalSample::new(g.sample(&mut Stream::new(2), 257)).unwrap();
        let levels = QuantileLevels::new(&o, &[0.62]).unwrap();
        for corrected in [false, true] {
            let u = uniform_remainder(&s, &levels, corrected);
            let d = remainder(&s, 0.62, &o).unwrap();
            assert_eq!(u.sup, d.remainder(corrected).abs());
            assert_eq!(u.argmax_p, 0.62);
        }
    }

    #[test]
    fn resolved_grid_contains_jump_levels() {
        let g = resolved_grid(0.25, 0.75, 10, 64).unwrap();
        for k in 16..=48 {
            assert!(g.contains(&(k as f64 / 64.0)));
        }
        assert!(g.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(g[0], 0.25);
        assert_eq!(*g.last().unwrap(), 0.75);
        assert!(resolved_grid(0.5, 0.5, 10, 64).is_err());
    }

    #[test]
    fn iid_uniform_sup_is_on_the_optimal_scale() {
        let u = InnovationModel::uniform(1.0).unwrap();
        let o = MarginalOracle::exact(u);
        let n = 1usize << 14;
        let levels = QuantileLevels::new(&o, &resolved_grid(0.25, 0.75, 200, n).unwrap()).unwrap();
        let mut sups: Vec<f64> = (0..60)
            .map(|r| {
                let mut st = Stream::new(derive_seed(9, "uniform-scale", r));
                uniform_remainder(&EmpiricalSample::new(u.sample(&mut st, n)).unwrap(), &levels, false).sup
            })
            .collect();
        sups.sort_unstable_by(f64::total_cmp);
        let median = sups[sups.len() / 2];
        let ln = (n as f64).ln();
        let scale = (n as f64).powf(-0.75) * ln.sqrt() * ln.ln().powf(0.25);
        assert!(median >= 0.2 * scale && median <= 5.0 * scale, "{median} vs {scale}");
    }

    #[test]
    fn expansion_identity_and_iid_case() {
        let (g, o) = gaussian_oracle();
        let sched = CoefficientSchedule::lrd(0.7, SlowlyVarying::constant(1.0)).unwrap();
        let path = simulate_path(&sched, &g, 2000, &TruncationPolicy::default(), 4).unwrap();
        let oracle = crate::linear_process::build_marginal_oracle(&sched, &g, 4000, path.truncation.lag, 5).unwrap();
        let s = EmpiricalSample::from_path(&path).unwrap();
        let mut st = Stream::new(6);
        for _ in 0..100 {
            let y = 8.0 * (st.open01() - 0.5);
            let e = expansion_remainder(&s, &g, &oracle, y).unwrap();
            assert!((e.s_n - e.n_martingale - e.h_n).abs() <= 1e-9 * s.len() as f64, "{e:?}");
            assert_eq!(e.s_n, first_order_remainder(&s, &oracle, y));
        }
        let iid = EmpiricalSample::with_lags(g.sample(&mut st, 500), vec![0.0; 500]).unwrap();
        for k in -10..=10 {
            let y = 0.3 * k as f64;
            let e = expansion_remainder(&iid, &g, &o, y).unwrap();
            let expect = 500.0 * (o.pdf(y) * iid.mean());
            assert!((e.h_n - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
        }
    }

    #[test]
    fn first_order_remainder_from_u_sums() {
        // U_{i,1} = sum_{j>=0} a_j eps_{i-j}, recomputed from the innovations where the window fits.
        let (g, o) = gaussian_oracle();
        let sched = CoefficientSchedule::geometric(0.5).unwrap();
        let path = simulate_path(&sched, &g, 50, &TruncationPolicy::default(), 11).unwrap();
        let m = path.truncation.lag;
        assert!(m < 40);
        let eps = &path.innovations;
        let u: Vec<f64> = (0..50)
            .map(|i| {
                if i >= m {
                    (0..=m).map(|j| sched.coefficient(j as u64) * eps[i - j]).sum()
                } else {
                    eps[i] + path.lagged_locations[i]
                }
            })
            .collect();
        for (ui, xi) in u.iter().zip(&path.values).skip(m) {
            assert!((ui - xi).abs() < 1e-12);
        }
        let s = EmpiricalSample::from_path(&path).unwrap();
        for y in [-1.0, 0.0, 0.4, 2.0] {
            let e = o.eval(y);
            let brute: f64 = path.values.iter().zip(&u).map(|(x, ui)| f64::from(*x <= y) - e.cdf + e.pdf * ui).sum();
            assert!((brute - first_order_remainder(&s, &o, y)).abs() < 1e-10);
        }
    }

    #[test]
    fn increment_zero_window_and_refusal() {
        let (g, o) = gaussian_oracle();
        let s = EmpiricalSample::new(g.sample(&mut Stream::new(3), 100)).unwrap();
        let sched = CoefficientSchedule::lrd(0.75, SlowlyVarying::constant(1.0)).unwrap();
        let z = increment_statistic(&s, &o, &sched, 0.2, 0.0, Branch::Auto).unwrap();
        assert_eq!((z.raw, z.normalized), (0.0, 0.0));
        // 4 beta - 3 = 0 = gamma when delta = 1.
        assert!(matches!(
            increment_statistic(&s, &o, &sched, 0.2, 1.0, Branch::Auto),
            Err(Error::BoundaryRefusal { .. })
        ));
        assert!(increment_statistic(&s, &o, &sched, 0.2, 1.0, Branch::Gaussian).is_ok());
        let far = CoefficientSchedule::lrd(0.9, SlowlyVarying::constant(1.0)).unwrap();
        let n = 100f64;
        let inc = increment_statistic(&s, &o, &far, 0.2, n.powf(-0.4), Branch::Auto).unwrap();
        assert_eq!(inc.branch, Branch::Gaussian);
        let strong = CoefficientSchedule::lrd(0.55, SlowlyVarying::constant(1.0)).unwrap();
        let inc = increment_statistic(&s, &o, &strong, 0.2, n.powf(-0.05), Branch::Auto).unwrap();
        assert_eq!(inc.branch, Branch::Rosenblatt);
        assert!((inc.normalizer - n.powf(0.9) * n.powf(-0.05)).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn remainder_fields_reconstruct(seed in 0u64..1_000, p in 0.05f64..0.95, n in 5usize..300) {
            let (g, o) = gaussian_oracle();
            let v: Vec<f64> = g.sample(&mut Stream::new(seed), n).iter().map(|x| x + 0.4).collect();
            let s = EmpiricalSample::new(v).unwrap();
            let d = remainder(&s, p, &o).unwrap();
            let tol = 4.0 * f64::EPSILON * (1.0 + d.remainder_srd.abs() + d.correction_term.abs());
            prop_assert!((d.remainder_srd - d.remainder_lrd - d.correction_term).abs() <= tol);
            prop_assert!((d.xi_p + d.linear_term + d.remainder_srd - d.xi_np).abs() <= 8.0 * f64::EPSILON * (1.0 + d.xi_np.abs() + d.linear_term.abs()));
            prop_assert_eq!(d.xi_np, s.quantile(p).unwrap());
            let c = d.sample_mean * d.sample_mean * d.density_deriv / (2.0 * d.density);
            prop_assert_eq!(d.correction_term, c);
        }

        #[test]
        fn refining_the_grid_never_lowers_the_sup(seed in 0u64..1_000, extra in proptest::collection::vec(0.2f64..0.8, 1..20)) {
            let (g, o) = gaussian_oracle();
            let s = EmpiricalSample::new(g.sample(&mut Stream::new(seed), 200)).unwrap();
            let coarse = [0.2, 0.5, 0.8];
            let mut fine = coarse.to_vec();
            fine.extend(extra);
            for corrected in [false, true] {
                let a = uniform_remainder(&s, &QuantileLevels::new(&o, &coarse).unwrap(), corrected);
                let b = uniform_remainder(&s, &QuantileLevels::new(&o, &fine).unwrap(), corrected);
                prop_assert!(b.sup >= a.sup);
            }
        }

        #[test]
        fn raw_increments_telescope(seed in 0u64..1_000, x in -1.5f64..1.5, d1 in 0.0f64..0.5, d2 in 0.0f64..0.5) {
            let (g, o) = gaussian_oracle();
            let s = EmpiricalSample::new(g.sample(&mut Stream::new(seed), 300)).unwrap();
            let sched = CoefficientSchedule::Iid;
            let whole = increment_statistic(&s, &o, &sched, x, d1 + d2, Branch::Gaussian).unwrap().raw;
            let a = increment_statistic(&s, &o, &sched, x, d1, Branch::Gaussian).unwrap().raw;
            let b = increment_statistic(&s, &o, &sched, x + d1, d2, Branch::Gaussian).unwrap().raw;
            // x + (d1 + d2) and (x + d1) + d2 may differ by an ulp; allow one jump only if a point sits there.
            prop_assert!((whole - a - b).abs() <= 1e-9 || s.sorted().iter().any(|&v| (v - x - d1 - d2).abs() < 1e-12));
        }
    }
}
