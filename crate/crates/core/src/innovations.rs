//! I.i.d. innovation laws with exact samplers and closed-form density machinery.
//!
//! All families are centred at zero (except the plain uniform, which lives on
//! `[0, scale]` and is only meant for i.i.d. experiments). The smooth families
//! have bounded `f`, `f'` and `f''`, which is what the quantile theory asks for.
//!
//! Samplers use inverse-CDF or fixed-count transforms only (Box–Muller,
//! Bailey's polar-free t transform), so a `(seed, count)` pair always consumes
//! the same number of stream values.

use serde::{Deserialize, Serialize};
use statrs::function::{beta::beta_reg, erf::erfc, gamma::ln_gamma};
use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

use crate::error::{invalid, Result};
use crate::rng::Stream;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Mollifier width of [`InnovationModel::UniformSmoothwrap`], relative to its scale.
pub const SMOOTHWRAP_MOLLIFIER: f64 = 1e-2;

/// Moment margin subtracted from `nu` when declaring the Student-t moment order.
const MOMENT_MARGIN: f64 = 1e-6;

fn default_scale() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InnovationModel {
    /// `N(0, scale^2)`.
    Gaussian {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// Plain uniform on `[0, scale]` (not smooth; i.i.d. experiments only).
    Uniform {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// Uniform on `[-scale, scale]` convolved with `N(0, (0.01 scale)^2)`.
    UniformSmoothwrap {
        #[serde(default = "default_scale")]
        scale: f64,
    },
    /// Scaled Student-t with `nu` degrees of freedom.
    StudentT {
        #[serde(default = "default_scale")]
        scale: f64,
        nu: f64,
    },
    /// Logistic with scale parameter `scale`.
    Logistic {
        #[serde(default = "default_scale")]
        scale: f64,
    },
}

/// cdf, pdf and the first two pdf derivatives at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DensityPoint {
    pub cdf: f64,
    pub pdf: f64,
    pub d1: f64,
    pub d2: f64,
}

#[inline]
fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z * FRAC_1_SQRT_2)
}

#[inline]
fn std_normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Antiderivative of the standard normal cdf, `z Phi(z) + phi(z)`.
///
/// On the negative axis this is `phi(t)(1 - t m(t))` with `t = -z` and `m` the
/// Mills ratio; the continued fraction for `m` avoids cancellation deep in the tail.
fn normal_cdf_integral(z: f64) -> f64 {
    if z > 0.0 {
        return z + normal_cdf_integral(-z);
    }
    let t = -z;
    if t < 2.0 {
        return std_normal_pdf(t) - t * 0.5 * erfc(t * FRAC_1_SQRT_2);
    }
    let mut cf = t;
    for k in (1..=120).rev() {
        cf = t + k as f64 / cf;
    }
    std_normal_pdf(t) * (1.0 - t / cf)
}

impl InnovationModel {
    pub fn gaussian(scale: f64) -> Result<Self> {
        Self::Gaussian { scale }.validated()
    }

    pub fn uniform(scale: f64) -> Result<Self> {
        Self::Uniform { scale }.validated()
    }

    pub fn uniform_smoothwrap(scale: f64) -> Result<Self> {
        Self::UniformSmoothwrap { scale }.validated()
    }

    pub fn student_t(scale: f64, nu: f64) -> Result<Self> {
        Self::StudentT { scale, nu }.validated()
    }

    pub fn logistic(scale: f64) -> Result<Self> {
        Self::Logistic { scale }.validated()
    }

    /// Checks parameters; used after deserialisation as well.
    pub fn validated(self) -> Result<Self> {
        let scale = self.scale();
        if !(scale.is_finite() && scale > 0.0) {
            return Err(invalid(format!("innovation scale must be positive, got {scale}")));
        }
        if let Self::StudentT { nu, .. } = self {
            if !(nu.is_finite() && nu > 0.0) {
                return Err(invalid(format!("student_t nu must be positive, got {nu}")));
            }
        }
        Ok(self)
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gaussian { .. } => "gaussian",
            Self::Uniform { .. } => "uniform",
            Self::UniformSmoothwrap { .. } => "uniform_smoothwrap",
            Self::StudentT { .. } => "student_t",
            Self::Logistic { .. } => "logistic",
        }
    }

    pub fn scale(&self) -> f64 {
        match *self {
            Self::Gaussian { scale }
            | Self::Uniform { scale }
            | Self::UniformSmoothwrap { scale }
            | Self::StudentT { scale, .. }
            | Self::Logistic { scale } => scale,
        }
    }

    /// Largest declared `a` with `E|eps|^a < inf` (`inf` for light tails).
    pub fn alpha_moment(&self) -> f64 {
        match *self {
            Self::StudentT { nu, .. } => nu - MOMENT_MARGIN,
            _ => f64::INFINITY,
        }
    }

    /// `true` when `pdf(x) = pdf(-x)` for all `x`.
    pub fn is_symmetric(&self) -> bool {
        !matches!(self, Self::Uniform { .. })
    }

    /// `false` only for the plain uniform, whose density jumps at the support edges.
    pub fn is_smooth(&self) -> bool {
        !matches!(self, Self::Uniform { .. })
    }

    pub fn mean(&self) -> Option<f64> {
        match *self {
            Self::Uniform { scale } => Some(0.5 * scale),
            Self::StudentT { nu, .. } if nu <= 1.0 => None,
            _ => Some(0.0),
        }
    }

    /// Variance, or `None` when infinite.
    pub fn variance(&self) -> Option<f64> {
        match *self {
            Self::Gaussian { scale } => Some(scale * scale),
            Self::Uniform { scale } => Some(scale * scale / 12.0),
            Self::UniformSmoothwrap { scale } => {
                let s = SMOOTHWRAP_MOLLIFIER * scale;
                Some(scale * scale / 3.0 + s * s)
            }
            Self::StudentT { scale, nu } => (nu > 2.0).then(|| scale * scale * nu / (nu - 2.0)),
            Self::Logistic { scale } => Some(scale * scale * PI * PI / 3.0),
        }
    }

    /// Length scale on which the density changes; used to size numerical grids.
    pub fn resolution(&self) -> f64 {
        match *self {
            Self::UniformSmoothwrap { scale } => SMOOTHWRAP_MOLLIFIER * scale,
            _ => self.scale(),
        }
    }

    /// Draws `count` i.i.d. variates.
    pub fn sample(&self, stream: &mut Stream, count: usize) -> Vec<f64> {
        let mut out = vec![0.0; count];
        self.sample_into(stream, &mut out);
        out
    }

    /// Fills `out` with i.i.d. variates.
    pub fn sample_into(&self, stream: &mut Stream, out: &mut [f64]) {
        match *self {
            Self::Gaussian { scale } => {
                fill_normal(stream, out);
                if scale != 1.0 {
                    out.iter_mut().for_each(|v| *v *= scale);
                }
            }
            Self::Uniform { scale } => out.iter_mut().for_each(|v| *v = scale * stream.open01()),
            Self::UniformSmoothwrap { scale } => {
                fill_normal(stream, out);
                let s = SMOOTHWRAP_MOLLIFIER * scale;
                for v in out.iter_mut() {
                    *v = scale * (2.0 * stream.open01() - 1.0) + s * *v;
                }
            }
            Self::StudentT { scale, nu } => {
                let e = -2.0 / nu;
                for v in out.iter_mut() {
                    let u = stream.open01();
                    let w = stream.open01();
                    *v = scale * (nu * (u.powf(e) - 1.0)).sqrt() * (TAU * w).cos();
                }
            }
            Self::Logistic { scale } => {
                for v in out.iter_mut() {
                    let u = stream.open01();
                    *v = scale * (u / (1.0 - u)).ln();
                }
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform { scale } => (x / scale).clamp(0.0, 1.0),
            _ => {
                let left = self.eval_left(-x.abs(), false).cdf;
                if x > 0.0 {
                    1.0 - left
                } else {
                    left
                }
            }
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Self::Uniform { scale } => {
                if (0.0..=scale).contains(&x) {
                    1.0 / scale
                } else {
                    0.0
                }
            }
            Self::Gaussian { scale } => std_normal_pdf(x / scale) / scale,
            Self::StudentT { scale, nu } => student_t_pdf(x / scale, nu) / scale,
            _ => self.eval_left(-x.abs(), false).pdf,
        }
    }

    /// Derivative of the density of the given order (1 or 2).
    ///
    /// Panics for any other order.
    pub fn pdf_deriv(&self, x: f64, order: u32) -> f64 {
        let p = self.eval(x);
        match order {
            1 => p.d1,
            2 => p.d2,
            _ => panic!("pdf_deriv supports orders 1 and 2, got {order}"),
        }
    }

    /// cdf, pdf, pdf' and pdf'' at `x` in one pass.
    pub fn eval(&self, x: f64) -> DensityPoint {
        if let Self::Uniform { .. } = self {
            return DensityPoint { cdf: self.cdf(x), pdf: self.pdf(x), d1: 0.0, d2: 0.0 };
        }
        let mut p = self.eval_left(-x.abs(), true);
        if x > 0.0 {
            p.cdf = 1.0 - p.cdf;
            p.d1 = -p.d1;
        }
        p
    }

    /// Symmetric families evaluated at `a <= 0`; `derivs` skips pdf' and pdf''.
    fn eval_left(&self, a: f64, derivs: bool) -> DensityPoint {
        match *self {
            Self::Gaussian { scale } => {
                let z = a / scale;
                let pdf = std_normal_pdf(z) / scale;
                DensityPoint {
                    cdf: std_normal_cdf(z),
                    pdf,
                    d1: -z * pdf / scale,
                    d2: (z * z - 1.0) * pdf / (scale * scale),
                }
            }
            Self::UniformSmoothwrap { scale } => {
                let s = SMOOTHWRAP_MOLLIFIER * scale;
                let zh = (a + scale) / s;
                let zl = (a - scale) / s;
                let w = 2.0 * scale;
                let mut p = DensityPoint {
                    cdf: s / w * (normal_cdf_integral(zh) - normal_cdf_integral(zl)),
                    pdf: (std_normal_cdf(zh) - std_normal_cdf(zl)) / w,
                    ..Default::default()
                };
                if derivs {
                    let (ph, pl) = (std_normal_pdf(zh), std_normal_pdf(zl));
                    p.d1 = (ph - pl) / (s * w);
                    p.d2 = (-zh * ph + zl * pl) / (s * s * w);
                }
                p
            }
            Self::StudentT { scale, nu } => {
                let t = a / scale;
                let pdf = student_t_pdf(t, nu) / scale;
                let den = nu + t * t;
                let g1 = -(nu + 1.0) * t / den;
                let g2 = -(nu + 1.0) * (nu - t * t) / (den * den);
                DensityPoint {
                    cdf: student_t_cdf(t, nu),
                    pdf,
                    d1: pdf * g1 / scale,
                    d2: pdf * (g1 * g1 + g2) / (scale * scale),
                }
            }
            Self::Logistic { scale } => {
                let e = (a / scale).exp();
                let f = e / (1.0 + e);
                let pdf = e / ((1.0 + e) * (1.0 + e)) / scale;
                let r = 1.0 - 2.0 * f;
                DensityPoint {
                    cdf: f,
                    pdf,
                    d1: pdf * r / scale,
                    d2: pdf * (r * r - 2.0 * f * (1.0 - f)) / (scale * scale),
                }
            }
            Self::Uniform { .. } => unreachable!("plain uniform is not symmetric"),
        }
    }
}

/// Box–Muller, both outputs used; a trailing odd slot takes the cosine branch.
fn fill_normal(stream: &mut Stream, out: &mut [f64]) {
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let r = (-2.0 * stream.open01().ln()).sqrt();
        let (s, c) = (TAU * stream.open01()).sin_cos();
        pair[0] = r * c;
        pair[1] = r * s;
    }
    if let [last] = chunks.into_remainder() {
        let r = (-2.0 * stream.open01().ln()).sqrt();
        *last = r * (TAU * stream.open01()).cos();
    }
}

fn student_t_pdf(t: f64, nu: f64) -> f64 {
    let ln_c = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
    (ln_c - 0.5 * (nu + 1.0) * (t * t / nu).ln_1p()).exp()
}

fn student_t_cdf(t: f64, nu: f64) -> f64 {
    if t == 0.0 {
        return 0.5;
    }
    let x = nu / (nu + t * t);
    let tail = 0.5 * beta_reg(0.5 * nu, 0.5, x);
    if t > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}
