//! Rao–Blackwellised Monte Carlo oracle for a stationary marginal law.
//!
//! A marginal of the form `X = mu + eps` (location mixture) or `X = s * eps`
//! (scale mixture), with `eps` independent of the mixing variable, has
//!
//! ```text
//! F(x)  = E F_eps((x - mu) / s)
//! f(x)  = E f_eps((x - mu) / s) / s
//! f'(x) = E f_eps'((x - mu) / s) / s^2
//! ```
//!
//! The expectation is replaced by an average over `R` independent draws of
//! the mixing variable. Draws are merged into narrow bins (weighted centroids)
//! and the averages are tabulated on a dense grid with cubic Hermite
//! interpolation, so evaluation is O(1) inside the central range while the
//! reported standard error still refers to the raw `R`-draw average.

use std::io::Write;
use std::path::Path;

use crate::error::{invalid, Result};
use crate::innovations::InnovationModel;

/// How the mixing variable enters the marginal.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mixture {
    /// `X = mu + eps`.
    Location,
    /// `X = s * eps`, `s > 0`.
    Scale,
}

/// Oracle values at one point, with Monte Carlo standard errors.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct OraclePoint {
    pub cdf: f64,
    pub pdf: f64,
    pub pdf_deriv: f64,
    pub cdf_se: f64,
    pub pdf_se: f64,
}

/// Odd node counts put a node at the centre of a mirrored range.
const TABLE_NODES: usize = 1025;
const TABLE_NODES_FINE: usize = 2049;
/// Atom count at or below which evaluation is always direct.
const DIRECT_ATOMS: usize = 64;
/// Tail probability left outside the tabulated range on each side.
const TABLE_TAIL: f64 = 1e-7;

#[derive(Clone, Debug)]
struct Table {
    x0: f64,
    h: f64,
    /// Per node: F, f, f', f'', se(F), se(f).
    nodes: Vec<[f64; 6]>,
}

#[derive(Clone, Debug)]
pub struct MarginalOracle {
    innovation: InnovationModel,
    mixture: Mixture,
    /// Atoms stand for the pair `{+mu, -mu}`; each pair average counts as one draw.
    mirrored: bool,
    position: Vec<f64>,
    weight: Vec<f64>,
    replicates: usize,
    truncation_lag: usize,
    seed: u64,
    table: Option<Table>,
    precision: f64,
}

/// Weighted running mean and variance (West's update).
#[derive(Clone, Copy, Default)]
struct Welford {
    w: f64,
    mean: f64,
    m2: f64,
}

impl Welford {
    #[inline]
    fn push(&mut self, v: f64, w: f64) {
        self.w += w;
        let d = v - self.mean;
        self.mean += d * w / self.w;
        self.m2 += w * d * (v - self.mean);
    }

    fn variance(&self) -> f64 {
        (self.m2 / self.w).max(0.0)
    }
}

fn bin_width(innovation: &InnovationModel) -> f64 {
    let c = match innovation {
        InnovationModel::StudentT { .. } => 2.5e-3,
        InnovationModel::UniformSmoothwrap { .. } => 1e-4,
        _ => 1e-3,
    };
    c * innovation.scale()
}

impl MarginalOracle {
    /// Oracle for the innovation law itself (degenerate mixing variable).
    pub fn exact(innovation: InnovationModel) -> Self {
        Self::from_atoms(innovation, Mixture::Location, false, vec![0.0], vec![1.0], 1, 0, 0)
    }

    /// Builds the oracle from raw draws of the mixing variable.
    ///
    /// With `mirrored`, each draw `t` is used as the antithetic pair `{t, -t}`;
    /// only valid when the innovation law is symmetric and the mixing variable
    /// is symmetric in distribution.
    pub fn from_draws(
        innovation: InnovationModel,
        mixture: Mixture,
        mirrored: bool,
        draws: &[f64],
        truncation_lag: usize,
        seed: u64,
    ) -> Result<Self> {
        if draws.is_empty() {
            return Err(invalid("oracle needs at least one draw"));
        }
        if mirrored && !innovation.is_symmetric() {
            return Err(invalid("antithetic oracle requires a symmetric innovation"));
        }
        if draws.iter().any(|d| !d.is_finite()) {
            return Err(invalid("oracle draws must be finite"));
        }
        if mixture == Mixture::Scale && draws.iter().any(|&d| d <= 0.0) {
            return Err(invalid("scale mixture draws must be positive"));
        }
        let width = bin_width(&innovation);
        let scale = innovation.scale();
        let key = |t: f64| -> i64 {
            let t = if mirrored { t.abs() } else { t };
            let u = match mixture {
                Mixture::Location => (t / scale).asinh() * scale / width,
                Mixture::Scale => t.ln() * scale / width,
            };
            u.floor() as i64
        };
        let mut keyed: Vec<(i64, f64)> =
            draws.iter().map(|&t| (key(t), if mirrored { t.abs() } else { t })).collect();
        keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let r = draws.len() as f64;
        let mut position = Vec::new();
        let mut weight = Vec::new();
        let mut i = 0;
        while i < keyed.len() {
            let k = keyed[i].0;
            let (mut sum, mut count) = (0.0, 0usize);
            while i < keyed.len() && keyed[i].0 == k {
                sum += keyed[i].1;
                count += 1;
                i += 1;
            }
            position.push(sum / count as f64);
            weight.push(count as f64 / r);
        }
        Ok(Self::from_atoms(
            innovation,
            mixture,
            mirrored,
            position,
            weight,
            draws.len(),
            truncation_lag,
            seed,
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn from_atoms(
        innovation: InnovationModel,
        mixture: Mixture,
        mirrored: bool,
        position: Vec<f64>,
        weight: Vec<f64>,
        replicates: usize,
        truncation_lag: usize,
        seed: u64,
    ) -> Self {
        let mut oracle = Self {
            innovation,
            mixture,
            mirrored,
            position,
            weight,
            replicates,
            truncation_lag,
            seed,
            table: None,
            precision: 0.0,
        };
        let hi = oracle.quantile_direct(1.0 - TABLE_TAIL);
        let lo = if mirrored { -hi } else { oracle.quantile_direct(TABLE_TAIL) };
        let nodes = if matches!(innovation, InnovationModel::UniformSmoothwrap { .. }) {
            TABLE_NODES_FINE
        } else {
            TABLE_NODES
        };
        let h = (hi - lo) / (nodes - 1) as f64;
        let grid: Vec<[f64; 6]> = (0..nodes).map(|k| oracle.direct_full(lo + k as f64 * h)).collect();
        oracle.precision = grid.iter().map(|v| v[4]).fold(0.0, f64::max);
        if oracle.position.len() > DIRECT_ATOMS && innovation.is_smooth() && h > 0.0 {
            oracle.table = Some(Table { x0: lo, h, nodes: grid });
        }
        oracle
    }

    /// Direct evaluation: F, f, f', f'', se(F), se(f).
    fn direct_full(&self, x: f64) -> [f64; 6] {
        let mut acc_f = Welford::default();
        let mut acc_d = Welford::default();
        let (mut d1, mut d2) = (0.0, 0.0);
        for (&m, &w) in self.position.iter().zip(&self.weight) {
            let (c, p, a, b) = match self.mixture {
                Mixture::Location => {
                    let e = self.innovation.eval(x - m);
                    if self.mirrored {
                        let o = self.innovation.eval(x + m);
                        (
                            0.5 * (e.cdf + o.cdf),
                            0.5 * (e.pdf + o.pdf),
                            0.5 * (e.d1 + o.d1),
                            0.5 * (e.d2 + o.d2),
                        )
                    } else {
                        (e.cdf, e.pdf, e.d1, e.d2)
                    }
                }
                Mixture::Scale => {
                    let e = self.innovation.eval(x / m);
                    (e.cdf, e.pdf / m, e.d1 / (m * m), e.d2 / (m * m * m))
                }
            };
            acc_f.push(c, w);
            acc_d.push(p, w);
            d1 += w * a;
            d2 += w * b;
        }
        let r = self.replicates as f64;
        [
            acc_f.mean,
            acc_d.mean,
            d1 / acc_f.w,
            d2 / acc_f.w,
            (acc_f.variance() / r).sqrt(),
            (acc_d.variance() / r).sqrt(),
        ]
    }

    fn table_lookup(&self, x: f64) -> Option<[f64; 6]> {
        let t = self.table.as_ref()?;
        let u = (x - t.x0) / t.h;
        let last = t.nodes.len() - 1;
        if !(0.0..=last as f64).contains(&u) {
            return None;
        }
        let k = (u.floor() as usize).min(last - 1);
        let s = u - k as f64;
        let (a, b) = (&t.nodes[k], &t.nodes[k + 1]);
        let s2 = s * s;
        let s3 = s2 * s;
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        let herm = |i: usize| h00 * a[i] + h10 * t.h * a[i + 1] + h01 * b[i] + h11 * t.h * b[i + 1];
        let lin = |i: usize| a[i] + s * (b[i] - a[i]);
        Some([herm(0), herm(1).max(0.0), herm(2), lin(3), lin(4), lin(5)])
    }

    fn full(&self, x: f64) -> [f64; 6] {
        self.table_lookup(x).unwrap_or_else(|| self.direct_full(x))
    }

    pub fn eval(&self, x: f64) -> OraclePoint {
        let v = self.full(x);
        OraclePoint {
            cdf: v[0].clamp(0.0, 1.0),
            pdf: v[1].max(0.0),
            pdf_deriv: v[2],
            cdf_se: v[4],
            pdf_se: v[5],
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.eval(x).cdf
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.eval(x).pdf
    }

    pub fn pdf_deriv(&self, x: f64) -> f64 {
        self.eval(x).pdf_deriv
    }

    /// Standard error of the `F` average at `x`.
    pub fn precision_at(&self, x: f64) -> f64 {
        self.eval(x).cdf_se
    }

    /// Largest standard error of `F` over the central range.
    pub fn precision(&self) -> f64 {
        self.precision
    }

    /// `xi_p = inf{x : F(x) >= p}` by bisection on the oracle `F`.
    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid(format!("quantile level must be in (0,1), got {p}")));
        }
        Ok(self.bisect(p, |x| self.cdf(x)))
    }

    fn quantile_direct(&self, p: f64) -> f64 {
        self.bisect(p, |x| self.direct_full(x)[0])
    }

    fn bisect(&self, p: f64, cdf: impl Fn(f64) -> f64) -> f64 {
        let spread = self.spread();
        let (mut lo, mut hi) = (-spread, spread);
        if let InnovationModel::Uniform { scale } = self.innovation {
            hi = hi.max(scale);
        }
        while cdf(lo) >= p {
            lo -= 2.0 * (hi - lo);
        }
        while cdf(hi) < p {
            hi += 2.0 * (hi - lo);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if cdf(mid) >= p {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    }

    /// Rough length scale of the marginal, for bracketing.
    fn spread(&self) -> f64 {
        let s = self.innovation.scale();
        let m2: f64 = self.position.iter().zip(&self.weight).map(|(m, w)| w * m * m).sum();
        match self.mixture {
            Mixture::Location => s + m2.sqrt(),
            Mixture::Scale => s * m2.sqrt().max(1.0),
        }
    }

    pub fn innovation(&self) -> &InnovationModel {
        &self.innovation
    }

    pub fn replicates(&self) -> usize {
        self.replicates
    }

    pub fn truncation_lag(&self) -> usize {
        self.truncation_lag
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn atom_count(&self) -> usize {
        self.position.len()
    }

    pub fn is_tabulated(&self) -> bool {
        self.table.is_some()
    }

    /// Writes `x, F, f, f'` on `points` equispaced nodes of `[lo, hi]` as CSV.
    pub fn write_table_csv(&self, path: &Path, lo: f64, hi: f64, points: usize) -> Result<()> {
        if points < 2 || !(lo < hi) {
            return Err(invalid("table export needs lo < hi and at least two points"));
        }
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "x,F,f,f_prime")?;
        for k in 0..points {
            let x = lo + (hi - lo) * k as f64 / (points - 1) as f64;
            let e = self.eval(x);
            writeln!(out, "{x:e},{:e},{:e},{:e}", e.cdf, e.pdf, e.pdf_deriv)?;
        }
        out.flush()?;
        Ok(())
    }
}
