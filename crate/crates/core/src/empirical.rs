//! Empirical distribution functions, sample quantiles and the martingale /
//! smooth split `F_n - F = M_n + N_n`.
//!
//! Step-function suprema are taken over a grid together with every jump point
//! in range, evaluated from both sides, so they are exact up to oracle error.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::innovations::InnovationModel;
use crate::linear_process::LinearProcessPath;
use crate::oracle::MarginalOracle;

/// Which one-sided value of a step function to take at a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// The value itself (right-continuous convention).
    Right,
    /// The left limit.
    Left,
}

/// `ceil(t)` that ignores rounding noise of a few ulps above an integer.
pub(crate) fn robust_ceil(t: f64) -> usize {
    (t * (1.0 - 4.0 * f64::EPSILON)).ceil().max(0.0) as usize
}

/// `floor(t)` that ignores rounding noise of a few ulps below an integer.
pub(crate) fn robust_floor(t: f64) -> usize {
    (t * (1.0 + 4.0 * f64::EPSILON)).floor().max(0.0) as usize
}

#[derive(Clone, Debug)]
enum Lags {
    Absent,
    /// Every lag equals this value (i.i.d. data), so `F_n*` is a single cdf call.
    Constant(f64),
    Varying(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct EmpiricalSample {
    values: Vec<f64>,
    sorted: Vec<f64>,
    lags: Lags,
}

/// `F_n*`, `f_n*` and `f_n*'` at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ConditionalPoint {
    pub cdf: f64,
    pub density: f64,
    pub density_deriv: f64,
}

/// `F_n(x) - F(x) = M_n(x) + N_n(x)`.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Decomposition {
    pub ecdf: f64,
    pub conditional_cdf: f64,
    pub marginal_cdf: f64,
    /// `F_n - F_n*`.
    pub martingale: f64,
    /// `F_n* - F`.
    pub smooth: f64,
}

impl EmpiricalSample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        Self::build(values, Lags::Absent)
    }

    /// A sample carrying the one-step-ahead conditional locations `X_{i,i-1}`.
    pub fn with_lags(values: Vec<f64>, lags: Vec<f64>) -> Result<Self> {
        if lags.len() != values.len() {
            return Err(invalid(format!("{} lags for {} values", lags.len(), values.len())));
        }
        if lags.iter().any(|l| !l.is_finite()) {
            return Err(invalid("lagged locations must be finite"));
        }
        let lags = match lags.first() {
            Some(&c) if lags.iter().all(|&l| l == c) => Lags::Constant(c),
            _ => Lags::Varying(lags),
        };
        Self::build(values, lags)
    }

    pub fn from_path(path: &LinearProcessPath) -> Result<Self> {
        Self::with_lags(path.values.clone(), path.lagged_locations.clone())
    }

    fn build(values: Vec<f64>, lags: Lags) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("sample must not be empty"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("sample values must be finite"));
        }
        let mut sorted = values.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        Ok(Self { values, sorted, lags })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    pub fn has_lags(&self) -> bool {
        !matches!(self.lags, Lags::Absent)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    /// `#{i : X_i <= x}`.
    pub fn count_le(&self, x: f64) -> usize {
        self.sorted.partition_point(|&v| v <= x)
    }

    /// `#{i : X_i < x}`.
    pub fn count_lt(&self, x: f64) -> usize {
        self.sorted.partition_point(|&v| v < x)
    }

    /// `F_n(x)`.
    pub fn ecdf(&self, x: f64) -> f64 {
        self.count_le(x) as f64 / self.len() as f64
    }

    /// `F_n(x)` or `F_n(x-)`.
    pub fn ecdf_side(&self, x: f64, side: Side) -> f64 {
        let c = match side {
            Side::Right => self.count_le(x),
            Side::Left => self.count_lt(x),
        };
        c as f64 / self.len() as f64
    }

    /// `X_(k)`, 1-based.
    pub fn order_statistic(&self, k: usize) -> f64 {
        self.sorted[k - 1]
    }

    /// `inf{x : F_n(x) >= p} = X_(ceil(n p))`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid(format!("quantile level must be in (0,1), got {p}")));
        }
        let k = robust_ceil(self.len() as f64 * p).clamp(1, self.len());
        Ok(self.sorted[k - 1])
    }

    /// Sorted values in `[lo, hi]`.
    pub fn jumps_in(&self, lo: f64, hi: f64) -> &[f64] {
        let a = self.count_lt(lo);
        let b = self.count_le(hi);
        &self.sorted[a..b.max(a)]
    }

    /// `F_n*`, `f_n*`, `f_n*'` at `x`.
    pub fn conditional(&self, innovation: &InnovationModel, x: f64) -> Result<ConditionalPoint> {
        match &self.lags {
            Lags::Absent => Err(Error::MissingLags),
            Lags::Constant(c) => {
                let e = innovation.eval(x - c);
                Ok(ConditionalPoint { cdf: e.cdf, density: e.pdf, density_deriv: e.d1 })
            }
            Lags::Varying(lags) => {
                let mut acc = ConditionalPoint::default();
                for l in lags {
                    let e = innovation.eval(x - l);
                    acc.cdf += e.cdf;
                    acc.density += e.pdf;
                    acc.density_deriv += e.d1;
                }
                let n = lags.len() as f64;
                Ok(ConditionalPoint { cdf: acc.cdf / n, density: acc.density / n, density_deriv: acc.density_deriv / n })
            }
        }
    }

    /// `F_n*(x) = n^{-1} sum_i F_eps(x - X_{i,i-1})`.
    pub fn conditional_cdf(&self, innovation: &InnovationModel, x: f64) -> Result<f64> {
        match &self.lags {
            Lags::Absent => Err(Error::MissingLags),
            Lags::Constant(c) => Ok(innovation.cdf(x - c)),
            Lags::Varying(lags) => Ok(lags.iter().map(|l| innovation.cdf(x - l)).sum::<f64>() / lags.len() as f64),
        }
    }

    pub fn conditional_density(&self, innovation: &InnovationModel, x: f64) -> Result<f64> {
        Ok(self.conditional(innovation, x)?.density)
    }

    pub fn conditional_density_deriv(&self, innovation: &InnovationModel, x: f64) -> Result<f64> {
        Ok(self.conditional(innovation, x)?.density_deriv)
    }

    /// `M_n(x) = F_n(x) - F_n*(x)` and `N_n(x) = F_n*(x) - F(x)`.
    pub fn decompose(&self, innovation: &InnovationModel, oracle: &MarginalOracle, x: f64) -> Result<Decomposition> {
        let ecdf = self.ecdf(x);
        let conditional_cdf = self.conditional_cdf(innovation, x)?;
        let marginal_cdf = oracle.cdf(x);
        Ok(Decomposition {
            ecdf,
            conditional_cdf,
            marginal_cdf,
            martingale: ecdf - conditional_cdf,
            smooth: conditional_cdf - marginal_cdf,
        })
    }

    /// `sup_{x in [l,u]} |F_n(x) - F(x)|` over a grid plus every jump point (both sides).
    pub fn sup_deviation(&self, oracle: &MarginalOracle, l: f64, u: f64, grid_size: usize) -> Result<f64> {
        if !(l <= u) {
            return Err(invalid(format!("need l <= u, got [{l}, {u}]")));
        }
        if l == u {
            return Ok((self.ecdf(l) - oracle.cdf(l)).abs());
        }
        if grid_size < 2 {
            return Err(invalid("grid_size must be at least 2"));
        }
        let mut best: f64 = 0.0;
        for k in 0..grid_size {
            let x = l + (u - l) * k as f64 / (grid_size - 1) as f64;
            best = best.max((self.ecdf(x) - oracle.cdf(x)).abs());
        }
        for &x in self.jumps_in(l, u) {
            let f = oracle.cdf(x);
            best = best.max((self.ecdf(x) - f).abs());
            if x > l {
                best = best.max((self.ecdf_side(x, Side::Left) - f).abs());
            }
        }
        Ok(best)
    }

    /// `(1/n) sum_i 1{X_i <= x}` written to a single-column CSV.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "x")?;
        for v in &self.values {
            writeln!(out, "{v:e}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut values = Vec::new();
        for (i, line) in file.lines().enumerate() {
            let line = line?;
            let t = line.trim();
            if i == 0 && t == "x" || t.is_empty() {
                continue;
            }
            values.push(t.parse::<f64>().map_err(|e| invalid(format!("line {}: {e}", i + 1)))?);
        }
        Self::new(values)
    }
}

/// `sup_{|u|<=b} |D(x+u) - D(x)|` over a symmetric grid of `grid_size` points
/// plus the given jump points inside the window, from both sides.
pub fn oscillation_modulus(
    curve: impl Fn(f64, Side) -> f64,
    x: f64,
    b: f64,
    grid_size: usize,
    jumps: &[f64],
) -> Result<f64> {
    if !(b >= 0.0) {
        return Err(invalid(format!("window must be nonnegative, got {b}")));
    }
    let centre = curve(x, Side::Right);
    if b == 0.0 {
        return Ok(0.0);
    }
    if grid_size < 2 {
        return Err(invalid("grid_size must be at least 2"));
    }
    let mut best: f64 = 0.0;
    for k in 0..grid_size {
        let t = x - b + 2.0 * b * k as f64 / (grid_size - 1) as f64;
        best = best.max((curve(t, Side::Right) - centre).abs());
    }
    for &t in jumps.iter().filter(|&&t| t >= x - b && t <= x + b) {
        best = best.max((curve(t, Side::Right) - centre).abs());
        if t > x - b {
            best = best.max((curve(t, Side::Left) - centre).abs());
        }
    }
    Ok(best)
}

/// `alpha(n) = floor(n p0)`, `beta(n) = floor(n p1)`.
fn trim_bounds(n: usize, p0: f64, p1: f64) -> Result<(usize, usize)> {
    if !(p0 > 0.0 && p0 < p1 && p1 < 1.0) {
        return Err(invalid(format!("need 0 < p0 < p1 < 1, got ({p0}, {p1})")));
    }
    let lo = robust_floor(n as f64 * p0);
    let hi = robust_floor(n as f64 * p1).min(n);
    if hi <= lo {
        return Err(Error::DegenerateTrim { lower: lo, upper: hi });
    }
    Ok((lo, hi))
}

/// `sum_{i=alpha+1}^{beta} X_(i) / (beta - alpha)`.
pub fn trimmed_mean(sample: &EmpiricalSample, p0: f64, p1: f64) -> Result<f64> {
    let (lo, hi) = trim_bounds(sample.len(), p0, p1)?;
    Ok(sample.sorted[lo..hi].iter().sum::<f64>() / (hi - lo) as f64)
}

/// Which upper boundary order statistic re-weights the upper tail.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WinsorVariant {
    /// `X_(beta)`.
    #[default]
    Display,
    /// `X_(beta+1)`.
    Shifted,
}

/// `n^{-1}[alpha X_(alpha) + (n - beta) X_(beta or beta+1) + sum_{i=alpha+1}^{beta} X_(i)]`.
pub fn winsorized_mean(sample: &EmpiricalSample, p0: f64, p1: f64, variant: WinsorVariant) -> Result<f64> {
    let n = sample.len();
    let (lo, hi) = trim_bounds(n, p0, p1)?;
    let low = if lo == 0 { 0.0 } else { lo as f64 * sample.order_statistic(lo) };
    let upper_index = match variant {
        WinsorVariant::Display => hi,
        WinsorVariant::Shifted => (hi + 1).min(n),
    };
    let high = (n - hi) as f64 * sample.order_statistic(upper_index);
    let middle: f64 = sample.sorted[lo..hi].iter().sum();
    Ok((low + high + middle) / n as f64)
}

/// One-sample Kolmogorov–Smirnov distance of `sample` from `cdf`.
pub fn ks_distance(sample: &EmpiricalSample, cdf: impl Fn(f64) -> f64) -> f64 {
    let n = sample.len() as f64;
    sample
        .sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov distance.
pub fn ks_two_sample(a: &EmpiricalSample, b: &EmpiricalSample) -> f64 {
    let (x, y) = (a.sorted(), b.sorted());
    let (n, m) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n - j as f64 / m).abs());
    }
    d
}

/// Asymptotic Kolmogorov critical value `c(alpha)` (`1.63` at `alpha = 0.01`).
pub fn ks_critical(alpha: f64) -> f64 {
    (-0.5 * (alpha / 2.0).ln()).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::Stream;
    use proptest::prelude::*;

    fn sample(v: &[f64]) -> EmpiricalSample {
        EmpiricalSample::new(v.to_vec()).unwrap()
    }

    #[test]
    fn ecdf_examples() {
        let s = sample(&[1.0, 2.0, 3.0]);
        assert!((s.ecdf(2.0) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s.ecdf(0.5), 0.0);
        assert_eq!(s.ecdf(3.0), 1.0);
        let t = sample(&[1.0, 2.0, 2.0, 5.0]);
        assert_eq!(t.ecdf(2.0), 0.75);
        assert_eq!(t.ecdf_side(2.0, Side::Left), 0.25);
    }

    #[test]
    fn quantile_examples() {
        let s = sample(&[3.0, 1.0, 2.0]);
        assert_eq!(s.quantile(0.5).unwrap(), 2.0);
        assert_eq!(s.quantile(1.0 / 3.0).unwrap(), 1.0);
        assert!(s.quantile(0.0).is_err() && s.quantile(1.0).is_err());
    }

    #[test]
    fn quantile_is_the_generalised_inverse() {
        let u = InnovationModel::uniform(1.0).unwrap();
        let s = EmpiricalSample::new(u.sample(&mut Stream::new(3), 100)).unwrap();
        let mut st = Stream::new(4);
        for _ in 0..50 {
            let p = st.open01();
            let q = s.quantile(p).unwrap();
            assert!(s.ecdf(q) >= p);
            assert!(s.ecdf_side(q, Side::Left) < p);
            assert!((s.ecdf(q) - p).abs() <= 1.0 / 100.0);
        }
    }

    #[test]
    fn ecdf_matches_linear_scan() {
        let g = InnovationModel::gaussian(1.0).unwrap();
        let mut st = Stream::new(8);
        let v = g.sample(&mut st, 500);
        let s = EmpiricalSample::new(v.clone()).unwrap();
        for _ in 0..1000 {
            let x = 3.0 * (2.0 * st.open01() - 1.0);
            let scan = v.iter().filter(|&&a| a <= x).count() as f64 / 500.0;
            assert_eq!(s.ecdf(x), scan);
        }
        for k in 1..=500 {
            let x = s.order_statistic(k);
            assert_eq!(s.ecdf(x), k as f64 / 500.0);
        }
    }

    #[test]
    fn conditional_cdf_needs_lags() {
        let g = InnovationModel::gaussian(1.0).unwrap();
        assert!(matches!(sample(&[1.0]).conditional_cdf(&g, 0.0), Err(Error::MissingLags)));
    }

    #[test]
    fn conditional_of_iid_and_single_point() {
        let g = InnovationModel::logistic(1.0).unwrap();
        let s = EmpiricalSample::with_lags(vec![0.1, 0.2, 0.3], vec![0.0; 3]).unwrap();
        for k in -10..=10 {
            let x = 0.4 * k as f64;
            assert_eq!(s.conditional_cdf(&g, x).unwrap(), g.cdf(x));
        }
        let one = EmpiricalSample::with_lags(vec![0.0], vec![0.7]).unwrap();
        assert_eq!(one.conditional_cdf(&g, 1.5).unwrap(), g.cdf(1.5 - 0.7));
    }

    #[test]
    fn conditional_density_is_a_derivative() {
        let g = InnovationModel::gaussian(1.0).unwrap();
        let mut st = Stream::new(5);
        let lags = g.sample(&mut st, 300);
        let s = EmpiricalSample::with_lags(vec![0.0; 300], lags).unwrap();
        let h = 1e-5;
        let mut prev = 0.0;
        for k in 0..200 {
            let x = -4.0 + 8.0 * k as f64 / 199.0;
            let c = s.conditional(&g, x).unwrap();
            let fd = (s.conditional_cdf(&g, x + h).unwrap() - s.conditional_cdf(&g, x - h).unwrap()) / (2.0 * h);
            assert!((c.density - fd).abs() < 1e-5);
            assert!(c.density >= 0.0 && c.cdf >= prev);
            prev = c.cdf;
        }
        let mass = crate::quad::adaptive_simpson(&|x| s.conditional_density(&g, x).unwrap(), -12.0, 12.0, 1e-9);
        assert!((1.0 - 1e-3..=1.0 + 1e-9).contains(&mass));
    }

    #[test]
    fn decomposition_identities() {
        let g = InnovationModel::gaussian(1.0).unwrap();
        let oracle = MarginalOracle::exact(g);
        let mut st = Stream::new(6);
        let v = g.sample(&mut st, 200);
        let iid = EmpiricalSample::with_lags(v.clone(), vec![0.0; 200]).unwrap();
        let lags = g.sample(&mut st, 200);
        let dep = EmpiricalSample::with_lags(v, lags).unwrap();
        for k in -20..=20 {
            let x = 0.2 * k as f64;
            let d = iid.decompose(&g, &oracle, x).unwrap();
            assert_eq!(d.smooth, 0.0);
            let e = dep.decompose(&g, &oracle, x).unwrap();
            assert!((e.martingale + e.smooth - (e.ecdf - e.marginal_cdf)).abs() <= 4.0 * f64::EPSILON);
            assert!(e.martingale.abs() <= 1.0);
        }
        let far = dep.decompose(&g, &oracle, 1e3).unwrap();
        assert_eq!(far.martingale, 0.0);
        let far = dep.decompose(&g, &oracle, -1e3).unwrap();
        assert_eq!(far.martingale, 0.0);
    }

    #[test]
    fn sup_deviation_of_stratified_sample() {
        let g = InnovationModel::gaussian(1.0).unwrap();
        let o = MarginalOracle::exact(g);
        let n = 400;
        let v: Vec<f64> = (1..=n).map(|i| o.quantile((i as f64 - 0.5) / n as f64).unwrap()).collect();
        let s = EmpiricalSample::new(v).unwrap();
        let d = s.sup_deviation(&o, -1.0, 1.0, 50).unwrap();
        assert!(d <= 0.5 / n as f64 + 1e-9, "{d}");
        assert_eq!(s.sup_deviation(&o, 0.3, 0.3, 2).unwrap(), (s.ecdf(0.3) - o.cdf(0.3)).abs());
    }

    #[test]
    fn sup_deviation_includes_left_limits() {
        let u = InnovationModel::uniform(1.0).unwrap();
        let o = MarginalOracle::exact(u);
        let s = sample(&[0.5]);
        // F_n jumps 0 -> 1 at 0.5; F(0.5-) gap is 0.5 on both sides.
        let d = s.sup_deviation(&o, 0.0, 1.0, 2).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn oscillation_examples() {
        let s = sample(&[0.0, 1.0]);
        let m = oscillation_modulus(|t, side| s.ecdf_side(t, side), 0.5, 0.6, 11, s.sorted()).unwrap();
        assert_eq!(m, 0.5);
        assert_eq!(oscillation_modulus(|_, _| 3.0, 0.0, 1.0, 5, &[]).unwrap(), 0.0);
        assert_eq!(oscillation_modulus(|t, _| t, 0.0, 0.0, 5, &[]).unwrap(), 0.0);
        let mono = oscillation_modulus(|t, _| t.powi(3), 0.2, 0.5, 101, &[]).unwrap();
        // Monotone curve: the sup sits at the far end of the window, 0.7^3 - 0.2^3.
        assert!((mono - 0.335).abs() < 1e-12);
    }

    #[test]
    fn trimmed_and_winsorized_examples() {
        let s = sample(&(1..=10).map(f64::from).collect::<Vec<_>>());
        assert_eq!(trimmed_mean(&s, 0.2, 0.8).unwrap(), 5.5);
        assert!((winsorized_mean(&s, 0.2, 0.8, WinsorVariant::Display).unwrap() - 5.3).abs() < 1e-15);
        assert!((winsorized_mean(&s, 0.2, 0.8, WinsorVariant::Shifted).unwrap() - 5.5).abs() < 1e-15);
        let sym = sample(&[-3.0, -2.0, -0.5, 0.5, 2.0, 3.0]);
        assert_eq!(trimmed_mean(&sym, 1.0 / 6.0, 5.0 / 6.0).unwrap(), 0.0);
        assert!(matches!(trimmed_mean(&sample(&[1.0, 2.0]), 0.6, 0.7), Err(Error::DegenerateTrim { .. })));
        assert!(trimmed_mean(&s, 0.5, 0.4).is_err());
    }

    #[test]
    fn two_sample_ks_examples() {
        let a = sample(&[1.0, 2.0, 3.0]);
        assert_eq!(ks_two_sample(&a, &a), 0.0);
        let b = sample(&[10.0, 11.0]);
        assert_eq!(ks_two_sample(&a, &b), 1.0);
        assert!((ks_critical(0.01) - 1.6276).abs() < 1e-3);
    }

    #[test]
    fn csv_round_trip() {
        let s = sample(&[0.25, -1.5, 3.0e-7]);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        s.write_csv(&p).unwrap();
        assert_eq!(EmpiricalSample::read_csv(&p).unwrap().values(), s.values());
    }

    proptest! {
        #[test]
        fn quantile_and_trims_are_location_scale_equivariant(
            v in proptest::collection::vec(-100.0f64..100.0, 12..60),
            a in 0.1f64..10.0,
            b in -50.0f64..50.0,
            p in 0.01f64..0.99,
        ) {
            let s = EmpiricalSample::new(v.clone()).unwrap();
            let t = EmpiricalSample::new(v.iter().map(|x| a * x + b).collect()).unwrap();
            prop_assert_eq!(t.quantile(p).unwrap(), a * s.quantile(p).unwrap() + b);
            let tm = trimmed_mean(&t, 0.2, 0.8).unwrap();
            let sm = trimmed_mean(&s, 0.2, 0.8).unwrap();
            prop_assert!((tm - (a * sm + b)).abs() <= 1e-9 * (1.0 + tm.abs()));
            let tw = winsorized_mean(&t, 0.2, 0.8, WinsorVariant::Display).unwrap();
            let sw = winsorized_mean(&s, 0.2, 0.8, WinsorVariant::Display).unwrap();
            prop_assert!((tw - (a * sw + b)).abs() <= 1e-9 * (1.0 + tw.abs()));
        }

        #[test]
        fn decomposition_is_additive(
            v in proptest::collection::vec(-5.0f64..5.0, 1..40),
            shift in -2.0f64..2.0,
            x in -6.0f64..6.0,
        ) {
            let g = InnovationModel::gaussian(1.0).unwrap();
            let o = MarginalOracle::exact(g);
            let lags: Vec<f64> = v.iter().map(|a| 0.3 * a + shift).collect();
            let s = EmpiricalSample::with_lags(v, lags).unwrap();
            let d = s.decompose(&g, &o, x).unwrap();
            prop_assert!((d.martingale + d.smooth - (d.ecdf - d.marginal_cdf)).abs() <= 4.0 * f64::EPSILON);
            prop_assert!(d.martingale >= -1.0 && d.martingale <= 1.0);
        }
    }
}
