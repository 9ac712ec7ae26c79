//! Matérn power spectra and the priors of their parameters.
//!
//! Spectrum convention: `P(k) = a² [1 + (k/k0)²]^(γ/2)`, so a negative spectral
//! index `γ` gives a decaying, smooth spectrum. Every hyper-parameter is a
//! deterministic transform of one standard-normal latent.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{invalid, Result};

/// Spectrum parameters of one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaternParams {
    pub a: f64,
    pub k0: f64,
    pub gamma: f64,
}

impl MaternParams {
    pub fn new(a: f64, k0: f64, gamma: f64) -> Result<Self> {
        if !(a > 0.0 && a.is_finite()) || !(k0 > 0.0 && k0.is_finite()) || !gamma.is_finite() {
            return Err(invalid(format!(
                "Matérn parameters need a > 0, k0 > 0, finite gamma (got {a}, {k0}, {gamma})"
            )));
        }
        Ok(Self { a, k0, gamma })
    }

    pub fn power(&self, k: f64) -> f64 {
        let r = k / self.k0;
        self.a * self.a * (1.0 + r * r).powf(self.gamma / 2.0)
    }
}

/// Square root of the Matérn power spectrum, `a [1 + (k/k0)²]^(γ/4)`.
pub fn amplitude(k: f64, p: &MaternParams) -> f64 {
    let r = k / p.k0;
    p.a * (1.0 + r * r).powf(p.gamma / 4.0)
}

/// Amplitude of a 2-D product spectrum with a shared zero mode.
///
/// Each axis' DC amplitude is replaced by 1 before the product is taken and
/// the joint DC entry is `zero_mode`; off the DC lines the result separates.
pub fn outer_amplitude(
    kx: f64,
    ky: f64,
    px: &MaternParams,
    py: &MaternParams,
    zero_mode: f64,
) -> f64 {
    if kx == 0.0 && ky == 0.0 {
        return zero_mode;
    }
    let ax = if kx == 0.0 { 1.0 } else { amplitude(kx, px) };
    let ay = if ky == 0.0 { 1.0 } else { amplitude(ky, py) };
    ax * ay
}

pub(crate) fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub(crate) fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// One-dimensional prior marginal of a hyper-parameter.
///
/// Log-normal marginals are specified by the mean and standard deviation of
/// the distribution itself, not of its logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Marginal {
    Normal { mean: f64, std: f64 },
    LogNormal { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl Marginal {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Marginal::Normal { mean, std } => mean.is_finite() && std > 0.0 && std.is_finite(),
            Marginal::LogNormal { mean, std } => mean > 0.0 && std > 0.0 && mean.is_finite() && std.is_finite(),
            Marginal::Uniform { lo, hi } => lo > 0.0 && lo < hi && hi.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid prior marginal {self:?}")))
        }
    }

    /// `(μ_log, σ_log)` of a log-normal, moment-matched to its mean and std.
    pub fn log_moments(mean: f64, std: f64) -> (f64, f64) {
        let var_log = (1.0 + (std / mean).powi(2)).ln();
        (mean.ln() - 0.5 * var_log, var_log.sqrt())
    }

    /// Maps a standard-normal latent to the parameter value.
    pub fn transform(&self, latent: f64) -> f64 {
        match *self {
            Marginal::Normal { mean, std } => mean + std * latent,
            Marginal::LogNormal { mean, std } => {
                let (mu, sigma) = Self::log_moments(mean, std);
                (mu + sigma * latent).exp()
            }
            Marginal::Uniform { lo, hi } => lo + (hi - lo) * std_normal_cdf(latent),
        }
    }

    /// Derivative of [`Marginal::transform`] with respect to the latent.
    pub fn derivative(&self, latent: f64) -> f64 {
        match *self {
            Marginal::Normal { std, .. } => std,
            Marginal::LogNormal { mean, std } => {
                let (mu, sigma) = Self::log_moments(mean, std);
                sigma * (mu + sigma * latent).exp()
            }
            Marginal::Uniform { lo, hi } => (hi - lo) * std_normal_pdf(latent),
        }
    }

    /// CDF of the prior itself, used to check the latent transform.
    pub fn cdf(&self, v: f64) -> f64 {
        match *self {
            Marginal::Normal { mean, std } => std_normal_cdf((v - mean) / std),
            Marginal::LogNormal { mean, std } => {
                if v <= 0.0 {
                    return 0.0;
                }
                let (mu, sigma) = Self::log_moments(mean, std);
                std_normal_cdf((v.ln() - mu) / sigma)
            }
            Marginal::Uniform { lo, hi } => ((v - lo) / (hi - lo)).clamp(0.0, 1.0),
        }
    }
}

/// Prior of a zero-mode coefficient `c = α ξ` with `α ~ U[lo, hi]` and
/// `ξ ~ N(0, 1)`, driven by a single standard-normal latent through its CDF.
///
/// Marginalizing α this way leaves the prior on every field unchanged while
/// removing the funnel between α and ξ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZeroModeOffset {
    lo: f64,
    hi: f64,
}

/// Exponential integral `E1(t)`: power series up to 1, continued fraction above.
fn exp_integral(t: f64) -> f64 {
    if t <= 0.0 {
        return f64::INFINITY;
    }
    if t > 700.0 {
        return 0.0;
    }
    if t <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -t / k as f64;
            let d = term / k as f64;
            sum += d;
            if d.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        return -0.577_215_664_901_532_9 - t.ln() - sum;
    }
    // Modified Lentz evaluation.
    let tiny = 1e-300;
    let mut b = t + 1.0;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..500 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (a * d + b);
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h * (-t).exp()
}

impl ZeroModeOffset {
    pub fn new(prior: &Marginal) -> Result<Self> {
        prior.validate()?;
        match *prior {
            Marginal::Uniform { lo, hi } => Ok(Self { lo, hi }),
            _ => Err(invalid("the zero-mode prior must be uniform")),
        }
    }

    fn norm(&self) -> f64 {
        2.0 * (2.0 * std::f64::consts::PI).sqrt() * (self.hi - self.lo)
    }

    /// Prior density of the coefficient.
    pub fn density(&self, c: f64) -> f64 {
        let c = c.abs();
        let t_hi = c * c / (2.0 * self.hi * self.hi);
        if t_hi < 1e-300 {
            return 2.0 * (self.hi / self.lo).ln() / self.norm();
        }
        let t_lo = c * c / (2.0 * self.lo * self.lo);
        (exp_integral(t_hi) - exp_integral(t_lo)) / self.norm()
    }

    /// `P(C > c)` for `c ≥ 0`.
    fn upper_tail(&self, c: f64) -> f64 {
        if c == 0.0 {
            return 0.5;
        }
        let q = |z: f64| 0.5 * erfc(z / std::f64::consts::SQRT_2);
        let (lo, hi) = (self.lo, self.hi);
        let e = exp_integral(c * c / (2.0 * hi * hi)) - exp_integral(c * c / (2.0 * lo * lo));
        let s = (hi * q(c / hi) - lo * q(c / lo)) / (hi - lo) - c * e / self.norm();
        s.max(0.0)
    }

    pub fn cdf(&self, c: f64) -> f64 {
        if c >= 0.0 {
            1.0 - self.upper_tail(c)
        } else {
            self.upper_tail(-c)
        }
    }

    /// Coefficient for a standard-normal latent.
    pub fn value(&self, latent: f64) -> f64 {
        let p = 0.5 * erfc(latent.abs() / std::f64::consts::SQRT_2);
        if p >= 0.5 {
            return 0.0;
        }
        let (mut a, mut b) = (0.0, self.hi * (latent.abs() + 1.0));
        while self.upper_tail(b) > p {
            a = b;
            b *= 2.0;
        }
        let target = p.ln();
        let mut c = 0.5 * (a + b);
        for _ in 0..200 {
            let s = self.upper_tail(c);
            if s > p {
                a = c;
            } else {
                b = c;
            }
            // Newton on ln S, falling back to bisection outside the bracket.
            let step = (s.ln() - target) * s / self.density(c);
            let mut next = c + step;
            if !(next > a && next < b) || s == 0.0 {
                next = 0.5 * (a + b);
            }
            if (next - c).abs() <= 1e-15 * c.max(1e-300) || b - a <= 1e-15 * b {
                c = next;
                break;
            }
            c = next;
        }
        c.copysign(latent)
    }

    /// Derivative of [`ZeroModeOffset::value`] with respect to the latent.
    pub fn derivative(&self, latent: f64) -> f64 {
        std_normal_pdf(latent) / self.density(self.value(latent))
    }
}

/// Transforms a standard-normal latent into a hyper-parameter value.
pub fn sample_hyper(latent: f64, prior: &Marginal) -> f64 {
    prior.transform(latent)
}

/// Priors of the three spectrum parameters of one axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AxisPrior {
    pub a: Marginal,
    pub k0: Marginal,
    pub gamma: Marginal,
}

impl AxisPrior {
    pub fn new(a: (f64, f64), k0: (f64, f64), gamma: (f64, f64)) -> Self {
        Self {
            a: Marginal::LogNormal { mean: a.0, std: a.1 },
            k0: Marginal::LogNormal { mean: k0.0, std: k0.1 },
            gamma: Marginal::Normal {
                mean: gamma.0,
                std: gamma.1,
            },
        }
    }

    /// Age-axis priors of the causal model: a = 0.3 ± 0.1, k0 = 5 ± 3, γ = −3 ± 2.12.
    pub fn causal_default() -> Self {
        Self::new((0.3, 0.1), (5.0, 3.0), (-3.0, 2.12))
    }

    /// Priors of the standalone density estimator: a = 0.3 ± 0.2, k0 = 4 ± 3, γ = −6 ± 3.
    pub fn mkde_default() -> Self {
        Self::new((0.3, 0.2), (4.0, 3.0), (-6.0, 3.0))
    }

    pub fn validate(&self) -> Result<()> {
        self.a.validate()?;
        self.k0.validate()?;
        self.gamma.validate()?;
        if matches!(self.gamma, Marginal::Uniform { .. }) {
            return Err(invalid("the spectral index prior cannot be uniform"));
        }
        Ok(())
    }

    /// Spectrum parameters for hyper-latents `[a, k0, γ]`.
    pub fn params(&self, latents: &[f64]) -> MaternParams {
        MaternParams {
            a: self.a.transform(latents[0]),
            k0: self.k0.transform(latents[1]),
            gamma: self.gamma.transform(latents[2]),
        }
    }
}

/// Zero-mode prior `α ∈ [1e-15, 5]`.
pub fn default_zero_mode() -> Marginal {
    Marginal::Uniform { lo: 1e-15, hi: 5.0 }
}

/// Hyper-priors of the causal model's three fields.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HyperPrior {
    pub f: AxisPrior,
    pub g: AxisPrior,
    pub h_x: AxisPrior,
    pub h_y: AxisPrior,
    pub zero_mode: Marginal,
}

impl Default for HyperPrior {
    fn default() -> Self {
        let p = AxisPrior::causal_default();
        Self {
            f: p,
            g: p,
            h_x: p,
            h_y: p,
            zero_mode: default_zero_mode(),
        }
    }
}

impl HyperPrior {
    pub fn validate(&self) -> Result<()> {
        for p in [&self.f, &self.g, &self.h_x, &self.h_y] {
            p.validate()?;
        }
        self.zero_mode.validate()?;
        if !matches!(self.zero_mode, Marginal::Uniform { .. }) {
            return Err(invalid("the zero-mode prior must be uniform"));
        }
        Ok(())
    }

    /// Priors for the model with the two axes exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            f: self.g,
            g: self.f,
            h_x: self.h_y,
            h_y: self.h_x,
            zero_mode: self.zero_mode,
        }
    }
}
