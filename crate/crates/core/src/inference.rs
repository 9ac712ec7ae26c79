//! Metric Gaussian variational inference.
//!
//! The posterior over the standardized latent `ξ` is approximated by a
//! Gaussian centered on `ξ̄` whose covariance is the inverse of the metric
//! `M = Jᵀ W J + 1` (likelihood Fisher information plus the identity of the
//! standard-normal prior). Each global iteration draws antithetic residuals
//! from that Gaussian and then moves `ξ̄` to lower the sampled KL objective
//! with the residuals held fixed.

use log::{info, warn};
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{conjugate_gradient, dot, norm};
use crate::rng;

/// A likelihood over standardized latent coordinates.
///
/// Implementations supply exact forward and adjoint linearizations; nothing
/// here differentiates numerically.
pub trait LikelihoodModel: Sync {
    /// State captured at one latent point.
    type Point: Send + Sync;

    /// Latent dimension.
    fn dim(&self) -> usize;

    /// Dimension of the data space the Fisher square root acts on.
    fn data_dim(&self) -> usize;

    /// Negative log-likelihood; `+inf` where the model cannot be evaluated.
    fn energy(&self, xi: &[f64]) -> f64;

    fn linearize(&self, xi: &[f64]) -> Self::Point;

    fn point_energy(&self, point: &Self::Point) -> f64;

    /// Gradient of the negative log-likelihood.
    fn gradient<'a>(&self, point: &'a Self::Point) -> &'a [f64];

    /// Likelihood Fisher metric `Jᵀ W J v`.
    fn fisher(&self, point: &Self::Point, v: &[f64]) -> Vec<f64>;

    /// `W^{1/2} J v`, mapping a latent tangent to the data space.
    fn fisher_sqrt(&self, point: &Self::Point, v: &[f64]) -> Vec<f64>;

    /// `Jᵀ W^{1/2} η` for a data-space vector `η`.
    fn fisher_sqrt_adjoint(&self, point: &Self::Point, eta: &[f64]) -> Vec<f64>;

    /// Latent indices of hyper-parameters, whose posterior is typically far
    /// from Gaussian. Empty by default.
    fn hyper_indices(&self) -> Vec<usize> {
        Vec::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InferenceConfig {
    /// Residual samples per iteration, drawn as antithetic pairs.
    pub n_samples: usize,
    pub n_global_iterations: usize,
    /// Relative residual of the sampling solves.
    pub cg_tolerance: f64,
    pub cg_max_iter: usize,
    /// Newton steps per global iteration.
    pub optimizer_steps: usize,
    /// Relative residual of the truncated Newton solves.
    pub newton_cg_tolerance: f64,
    pub newton_cg_max_iter: usize,
    /// Newton iterations stop once the sampled KL improves by less than this.
    pub kl_tolerance: f64,
    pub seed: u64,
}

impl Default for InferenceConfig {
    fn default() -> Self {
        Self {
            n_samples: 6,
            n_global_iterations: 15,
            cg_tolerance: 1e-6,
            cg_max_iter: 500,
            optimizer_steps: 25,
            newton_cg_tolerance: 1e-3,
            newton_cg_max_iter: 60,
            kl_tolerance: 1e-4,
            seed: 0,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samples == 0 || self.n_samples % 2 != 0 {
            return Err(invalid(format!(
                "n_samples must be positive and even, got {}",
                self.n_samples
            )));
        }
        if self.n_global_iterations == 0
            || self.cg_max_iter == 0
            || self.optimizer_steps == 0
            || self.newton_cg_max_iter == 0
        {
            return Err(invalid("iteration counts must be positive"));
        }
        if !(self.cg_tolerance > 0.0) || !(self.newton_cg_tolerance > 0.0) || !(self.kl_tolerance >= 0.0) {
            return Err(invalid("tolerances must be positive"));
        }
        Ok(())
    }
}

/// Diagnostics of one global iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Sampled KL objective after each accepted Newton step (first entry is
    /// the value at the start of the iteration).
    pub kl: Vec<f64>,
    pub sample_cg_iterations: usize,
    pub line_search_failed: bool,
}

/// Gaussian posterior approximation in latent coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorApprox {
    pub xi_bar: Vec<f64>,
    /// Residuals `r_s`; the samples are `ξ̄ + r_s`. Consecutive entries are
    /// antithetic pairs drawn with the metric at `ξ̄`.
    pub residuals: Vec<Vec<f64>>,
    pub history: Vec<IterationRecord>,
}

impl PosteriorApprox {
    pub fn n_samples(&self) -> usize {
        self.residuals.len()
    }

    pub fn samples(&self) -> Vec<Vec<f64>> {
        self.residuals
            .iter()
            .map(|r| self.xi_bar.iter().zip(r).map(|(a, b)| a + b).collect())
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MetricSamples {
    pub residuals: Vec<Vec<f64>>,
    /// Total CG iterations over all solves.
    pub cg_iterations: usize,
}

fn gaussian(n: usize, rng: &mut impl rand::Rng) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Draws `n` residuals `r ~ N(0, M⁻¹)` at `xi_bar`.
///
/// A draw `w ~ N(0, M)` is formed as a prior draw plus `Jᵀ W^{1/2} η`, then
/// `M r = w` is solved by conjugate gradients. Residuals come in `±` pairs and
/// pair `i` uses random stream `i` of `seed`.
pub fn draw_metric_samples<M: LikelihoodModel>(
    model: &M,
    xi_bar: &[f64],
    n: usize,
    seed: u64,
    cg_tolerance: f64,
    cg_max_iter: usize,
) -> Result<MetricSamples> {
    if n % 2 != 0 {
        return Err(invalid(format!("sample count must be even, got {n}")));
    }
    if xi_bar.len() != model.dim() {
        return Err(invalid("latent dimension mismatch"));
    }
    let point = model.linearize(xi_bar);
    let solved: Vec<Result<(Vec<f64>, usize)>> = (0..n / 2)
        .into_par_iter()
        .map(|pair| {
            let mut rng = rng::stream(seed, pair as u64);
            let mut w = gaussian(model.dim(), &mut rng);
            let eta = gaussian(model.data_dim(), &mut rng);
            let lik = model.fisher_sqrt_adjoint(&point, &eta);
            w.iter_mut().zip(&lik).for_each(|(a, b)| *a += b);
            let out = conjugate_gradient(|v| metric_apply(model, &point, v), &w, cg_tolerance, cg_max_iter);
            if !out.converged {
                return Err(Error::CgNotConverged {
                    iterations: out.iterations,
                    residual: out.residual,
                });
            }
            Ok((out.x, out.iterations))
        })
        .collect();
    let mut residuals = Vec::with_capacity(n);
    let mut cg_iterations = 0;
    for r in solved {
        let (r, it) = r?;
        cg_iterations += it;
        let neg = r.iter().map(|v| -v).collect();
        residuals.push(r);
        residuals.push(neg);
    }
    Ok(MetricSamples {
        residuals,
        cg_iterations,
    })
}

pub(crate) fn metric_apply<M: LikelihoodModel>(model: &M, point: &M::Point, v: &[f64]) -> Vec<f64> {
    let mut out = model.fisher(point, v);
    out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
    out
}

fn shifted(x: &[f64], r: &[f64]) -> Vec<f64> {
    x.iter().zip(r).map(|(a, b)| a + b).collect()
}

/// Sampled KL objective up to constants: mean of `H(ξ̄ + r_s)` where `H` is
/// the negative log-likelihood plus `½|ξ|²`.
pub fn sampled_kl<M: LikelihoodModel>(model: &M, xi_bar: &[f64], residuals: &[Vec<f64>]) -> f64 {
    let total: f64 = residuals
        .par_iter()
        .map(|r| {
            let x = shifted(xi_bar, r);
            model.energy(&x) + 0.5 * dot(&x, &x)
        })
        .collect::<Vec<f64>>()
        .iter()
        .sum();
    total / residuals.len() as f64
}

#[derive(Debug, Clone)]
pub struct KlOutcome {
    pub xi_bar: Vec<f64>,
    /// Objective at the start and after every accepted step.
    pub kl: Vec<f64>,
    pub line_search_failed: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    pub steps: usize,
    pub cg_tolerance: f64,
    pub cg_max_iter: usize,
    pub kl_tolerance: f64,
}

impl From<&InferenceConfig> for NewtonOptions {
    fn from(c: &InferenceConfig) -> Self {
        Self {
            steps: c.optimizer_steps,
            cg_tolerance: c.newton_cg_tolerance,
            cg_max_iter: c.newton_cg_max_iter,
            kl_tolerance: c.kl_tolerance,
        }
    }
}

/// Lowers the sampled KL objective over the mean with fixed residuals.
///
/// Steps solve the sample-averaged metric system for a Newton direction and
/// backtrack until the Armijo condition holds. If no step length is
/// accepted the best point so far is returned and `line_search_failed` is set.
pub fn minimize_kl<M: LikelihoodModel>(
    model: &M,
    xi_bar: &[f64],
    residuals: &[Vec<f64>],
    opts: NewtonOptions,
) -> KlOutcome {
    let ns = residuals.len() as f64;
    let mut x = xi_bar.to_vec();
    let mut history = Vec::new();
    let mut failed = false;
    for _ in 0..opts.steps {
        let points: Vec<(Vec<f64>, M::Point)> = residuals
            .par_iter()
            .map(|r| {
                let s = shifted(&x, r);
                let p = model.linearize(&s);
                (s, p)
            })
            .collect();
        let energy = points
            .iter()
            .map(|(s, p)| model.point_energy(p) + 0.5 * dot(s, s))
            .sum::<f64>()
            / ns;
        if history.is_empty() {
            history.push(energy);
        }
        let mut grad = vec![0.0; x.len()];
        for (s, p) in &points {
            for ((g, a), b) in grad.iter_mut().zip(model.gradient(p)).zip(s) {
                *g += (a + b) / ns;
            }
        }
        if norm(&grad) == 0.0 {
            break;
        }
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let apply = |v: &[f64]| {
            let parts: Vec<Vec<f64>> = points.par_iter().map(|(_, p)| model.fisher(p, v)).collect();
            let mut out = v.to_vec();
            for part in &parts {
                out.iter_mut().zip(part).for_each(|(o, a)| *o += a / ns);
            }
            out
        };
        let mut dir = conjugate_gradient(apply, &neg, opts.cg_tolerance, opts.cg_max_iter).x;
        let mut slope = dot(&grad, &dir);
        if !(slope < 0.0) {
            dir = neg;
            slope = dot(&grad, &dir);
        }
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(a, d)| a + t * d).collect();
            let e = sampled_kl(model, &trial, residuals);
            if e.is_finite() && e <= energy + 1e-4 * t * slope {
                accepted = Some((trial, e));
                break;
            }
            t *= 0.5;
        }
        match accepted {
            Some((trial, e)) => {
                x = trial;
                history.push(e);
                if energy - e < opts.kl_tolerance {
                    break;
                }
            }
            None => {
                warn!("kl_line_search status=failed kl={energy:.6}");
                failed = true;
                break;
            }
        }
    }
    KlOutcome {
        xi_bar: x,
        kl: history,
        line_search_failed: failed,
    }
}

/// Alternates metric sampling and KL minimization, starting from `ξ̄ = 0`,
/// and finishes with a fresh set of residuals drawn at the final mean.
pub fn run_mgvi<M: LikelihoodModel>(model: &M, config: &InferenceConfig) -> Result<PosteriorApprox> {
    config.validate()?;
    let mut xi = vec![0.0; model.dim()];
    let mut history = Vec::with_capacity(config.n_global_iterations);
    for it in 0..config.n_global_iterations {
        let seed = rng::derive_seed(config.seed, it as u64);
        let samples = draw_metric_samples(model, &xi, config.n_samples, seed, config.cg_tolerance, config.cg_max_iter)?;
        let out = minimize_kl(model, &xi, &samples.residuals, config.into());
        info!(
            "mgvi iteration={} kl={:.6} newton_steps={} cg_iterations={}",
            it,
            out.kl.last().copied().unwrap_or(f64::NAN),
            out.kl.len().saturating_sub(1),
            samples.cg_iterations
        );
        xi = out.xi_bar;
        history.push(IterationRecord {
            iteration: it,
            kl: out.kl,
            sample_cg_iterations: samples.cg_iterations,
            line_search_failed: out.line_search_failed,
        });
    }
    let seed = rng::derive_seed(config.seed, config.n_global_iterations as u64);
    let last = draw_metric_samples(model, &xi, config.n_samples, seed, config.cg_tolerance, config.cg_max_iter)?;
    Ok(PosteriorApprox {
        xi_bar: xi,
        residuals: last.residuals,
        history,
    })
}

/// Sample mean and unbiased standard deviation of `q` over the posterior
/// samples, element-wise.
pub fn posterior_moments<F>(posterior: &PosteriorApprox, q: F) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    let samples = posterior.samples();
    let values: Vec<Vec<f64>> = samples.par_iter().map(|s| q(s)).collect();
    moments(&values)
}

/// Element-wise mean and unbiased standard deviation of equally long vectors.
pub fn moments(values: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = values.len();
    if n < 2 {
        return Err(invalid("posterior moments need at least two samples"));
    }
    let len = values[0].len();
    if values.iter().any(|v| v.len() != len) {
        return Err(invalid("samples have different lengths"));
    }
    let mut mean = vec![0.0; len];
    for v in values {
        mean.iter_mut().zip(v).for_each(|(m, x)| *m += x / n as f64);
    }
    let mut var = vec![0.0; len];
    for v in values {
        var.iter_mut()
            .zip(v)
            .zip(&mean)
            .for_each(|((s, x), m)| *s += (x - m).powi(2) / (n - 1) as f64);
    }
    Ok((mean, var.into_iter().map(f64::sqrt).collect()))
}
