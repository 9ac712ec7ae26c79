//! Evidence lower bounds and log-evidence ratios.
//!
//! For a Gaussian `q = N(ξ̄, M⁻¹)` over standardized latents
//!
//! ```text
//! ELBO = ⟨ln L(ξ)⟩_q − ½|ξ̄|² − ½ tr M⁻¹ + D/2 − ½ ln det M.
//! ```
//!
//! The trace is not formed. With `M = 1 + F` the identity
//! `⟨½ rᵀ F r⟩_q = ½(D − tr M⁻¹)` is evaluated on the same residual samples
//! that average the log-likelihood, so the quadratic fluctuations of both
//! terms cancel and the estimate is exact for linear Gaussian likelihoods.
//!
//! Hyper-parameter posteriors are usually much narrower along some directions
//! than the metric suggests, and a full-width Gaussian puts mass where the
//! likelihood collapses. The bound is therefore also evaluated for
//! `q_s = N(ξ̄, S M⁻¹ S)`, where `S` scales the hyper-latent coordinates by
//! `s ≤ 1`; every `q_s` gives a valid lower bound and the best `s` is picked
//! on an independent set of samples. With `P` the hyper-coordinate projector
//! and `n_h = tr P`,
//!
//! ```text
//! ELBO_s = ⟨−E(ξ̄ + r) + ½ rᵀ F r⟩ − ½|ξ̄|² − (s − 1) n_h − ½ (s − 1)² tr(P M⁻¹ P M)
//!          − ½ ln det M + n_h ln s,     r ~ N(0, S M⁻¹ S).
//! ```

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::inference::{draw_metric_samples, metric_apply, LikelihoodModel, PosteriorApprox};
use crate::linalg::{axpy, conjugate_gradient, dot, lanczos, norm};
use crate::model::Direction;
use crate::rng;

/// How `ln det M` is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogDetMethod {
    /// Dense Cholesky factorization when the smaller of the latent and data
    /// dimensions is at most `exact_limit`, stochastic quadrature otherwise.
    Auto,
    Exact,
    /// Deflated stochastic Lanczos quadrature with Rademacher probes.
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvidenceConfig {
    pub probes: usize,
    pub lanczos_order: usize,
    pub exact_limit: usize,
    pub method: LogDetMethod,
    /// Residual samples for the expected log-likelihood. When larger than the
    /// number stored with the posterior, a fresh set is drawn at its mean.
    pub samples: usize,
    pub cg_tolerance: f64,
    pub cg_max_iter: usize,
    /// Smallest hyper-latent scale tried; the candidates are evenly spaced
    /// from 1 down to this value. 1 keeps the plain metric Gaussian.
    pub min_hyper_scale: f64,
    /// Number of candidate scales. With one step the scale is fixed at
    /// `min_hyper_scale`.
    pub hyper_scale_steps: usize,
}

impl Default for EvidenceConfig {
    fn default() -> Self {
        Self {
            probes: 8,
            lanczos_order: 50,
            exact_limit: 3000,
            method: LogDetMethod::Auto,
            samples: 24,
            cg_tolerance: 1e-6,
            cg_max_iter: 500,
            min_hyper_scale: 0.4,
            hyper_scale_steps: 7,
        }
    }
}

impl EvidenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.probes < 2 {
            return Err(invalid("at least two log-det probes are required"));
        }
        if self.lanczos_order == 0 {
            return Err(invalid("Lanczos order must be positive"));
        }
        if !(self.min_hyper_scale > 0.0 && self.min_hyper_scale <= 1.0) || self.hyper_scale_steps == 0 {
            return Err(invalid("hyper scales must lie in (0, 1] with at least one step"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogDet {
    pub value: f64,
    pub stderr: f64,
    /// Zero for the dense path.
    pub probes: usize,
    /// Eigenpairs removed before probing.
    pub deflated: usize,
    pub exact: bool,
}

/// Dense `ln det(1 + F)` via Sylvester's identity in whichever of the latent
/// and data spaces is smaller.
pub fn log_det_exact<M: LikelihoodModel>(model: &M, point: &M::Point) -> Result<f64> {
    let (n, latent) = if model.data_dim() < model.dim() {
        (model.data_dim(), false)
    } else {
        (model.dim(), true)
    };
    let cols: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut e = vec![0.0; n];
            e[i] = 1.0;
            let mut c = if latent {
                model.fisher(point, &e)
            } else {
                model.fisher_sqrt(point, &model.fisher_sqrt_adjoint(point, &e))
            };
            c[i] += 1.0;
            c
        })
        .collect();
    let mut k = DMatrix::from_fn(n, n, |r, c| cols[c][r]);
    k = (&k + k.transpose()) * 0.5;
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::Numerical("metric is not positive definite".into()))?;
    Ok(chol.l().diagonal().iter().map(|d| 2.0 * d.ln()).sum())
}

fn rademacher(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 }).collect()
}

/// Stochastic Lanczos estimate of `ln det(1 + F)`.
///
/// A first Lanczos run locates the well-separated top of the spectrum; its
/// converged Ritz pairs contribute exactly and are projected out of the
/// Rademacher probes, which only see the remaining spectrum.
pub fn log_det_stochastic<M: LikelihoodModel>(
    model: &M,
    point: &M::Point,
    probes: usize,
    order: usize,
    seed: u64,
) -> Result<LogDet> {
    if probes < 2 {
        return Err(invalid("at least two log-det probes are required"));
    }
    let n = model.dim();
    let apply = |v: &[f64]| {
        let mut out = model.fisher(point, v);
        axpy(1.0, v, &mut out);
        out
    };
    let start = rademacher(n, &mut rng::stream(seed, probes as u64));
    let lz = lanczos(apply, &start, order);
    let (theta, y) = lz.ritz();
    let mut defl: Vec<(f64, Vec<f64>)> = Vec::new();
    for (k, &t) in theta.iter().enumerate() {
        let mut v = vec![0.0; n];
        for (b, q) in lz.basis.iter().enumerate() {
            axpy(y[(b, k)], q, &mut v);
        }
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x /= nv);
        let mut r = apply(&v);
        axpy(-t, &v, &mut r);
        if norm(&r) <= 1e-3 * t {
            defl.push((t, v));
        }
    }
    let project = |x: &mut Vec<f64>| {
        for (_, v) in &defl {
            let c = dot(v, x);
            axpy(-c, v, x);
        }
    };
    let quads: Vec<f64> = (0..probes)
        .into_par_iter()
        .map(|i| {
            let mut z = rademacher(n, &mut rng::stream(seed, i as u64));
            project(&mut z);
            let zz = dot(&z, &z);
            if zz == 0.0 {
                return 0.0;
            }
            let op = |x: &[f64]| {
                let mut x = x.to_vec();
                project(&mut x);
                let mut y = apply(&x);
                project(&mut y);
                y
            };
            // The metric is bounded below by one; clamping removes the
            // spurious near-zero Ritz values of the deflated directions.
            lanczos(op, &z, order).quadrature(zz, |t| t.max(1.0).ln())
        })
        .collect();
    let mean = quads.iter().sum::<f64>() / probes as f64;
    let var = quads.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / (probes - 1) as f64;
    Ok(LogDet {
        value: defl.iter().map(|(t, _)| t.ln()).sum::<f64>() + mean,
        stderr: (var / probes as f64).sqrt(),
        probes,
        deflated: defl.len(),
        exact: false,
    })
}

pub fn log_det_metric<M: LikelihoodModel>(
    model: &M,
    point: &M::Point,
    config: &EvidenceConfig,
    seed: u64,
) -> Result<LogDet> {
    config.validate()?;
    let small = model.dim().min(model.data_dim()) <= config.exact_limit;
    let exact = match config.method {
        LogDetMethod::Exact => true,
        LogDetMethod::Stochastic => false,
        LogDetMethod::Auto => small,
    };
    if exact {
        Ok(LogDet {
            value: log_det_exact(model, point)?,
            stderr: 0.0,
            probes: 0,
            deflated: 0,
            exact: true,
        })
    } else {
        log_det_stochastic(model, point, config.probes, config.lanczos_order, seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElboEstimate {
    pub dataset_label: String,
    /// In nits.
    pub value: f64,
    /// Numerical one-sigma uncertainty.
    pub stderr: f64,
    pub expected_log_joint: f64,
    /// `D/2 ln(2πe) − ½ ln det M + n_h ln s`.
    pub entropy: f64,
    pub log_det: LogDet,
    pub dim: usize,
    pub n_samples: usize,
    /// Scale `s` of the hyper-latent coordinates of the variational Gaussian.
    pub hyper_scale: f64,
}

/// `tr(P M⁻¹ P M)` for the projector `P` onto `hyper`.
fn hyper_trace<M: LikelihoodModel>(model: &M, point: &M::Point, hyper: &[usize], config: &EvidenceConfig) -> Result<f64> {
    let cols: Vec<Result<(Vec<f64>, Vec<f64>)>> = hyper
        .par_iter()
        .map(|&i| {
            let mut e = vec![0.0; model.dim()];
            e[i] = 1.0;
            let m = metric_apply(model, point, &e);
            let out = conjugate_gradient(|v| metric_apply(model, point, v), &e, config.cg_tolerance, config.cg_max_iter);
            if !out.converged {
                return Err(Error::CgNotConverged {
                    iterations: out.iterations,
                    residual: out.residual,
                });
            }
            Ok((hyper.iter().map(|&j| m[j]).collect(), hyper.iter().map(|&j| out.x[j]).collect()))
        })
        .collect();
    let cols = cols.into_iter().collect::<Result<Vec<_>>>()?;
    let mut tr = 0.0;
    for (a, (m_col, _)) in cols.iter().enumerate() {
        for (b, (_, inv_col)) in cols.iter().enumerate() {
            tr += inv_col[a] * m_col[b];
        }
    }
    Ok(tr)
}

/// Per-sample `−E(ξ̄ + r') + ½ r'ᵀ F r'` with `r'` the residual scaled by `s`
/// along the hyper coordinates.
fn sample_terms<M: LikelihoodModel>(
    model: &M,
    point: &M::Point,
    xi_bar: &[f64],
    residuals: &[Vec<f64>],
    hyper: &[usize],
    scale: f64,
) -> Result<Vec<f64>> {
    let terms: Vec<f64> = residuals
        .par_iter()
        .map(|r| {
            let mut r = r.clone();
            hyper.iter().for_each(|&i| r[i] *= scale);
            let x: Vec<f64> = xi_bar.iter().zip(&r).map(|(a, b)| a + b).collect();
            -model.energy(&x) + 0.5 * dot(&r, &model.fisher(point, &r))
        })
        .collect();
    if terms.iter().any(|t| !t.is_finite()) {
        return Err(Error::Numerical("non-finite log-likelihood at a posterior sample".into()));
    }
    Ok(terms)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Candidate hyper scales from 1 down to the configured minimum.
fn hyper_scales(config: &EvidenceConfig) -> Vec<f64> {
    let n = config.hyper_scale_steps;
    if n <= 1 {
        return vec![config.min_hyper_scale];
    }
    (0..n)
        .map(|i| 1.0 - (1.0 - config.min_hyper_scale) * i as f64 / (n - 1) as f64)
        .collect()
}

/// ELBO of a fitted posterior, evaluated with the metric at its mean.
pub fn estimate_elbo<M: LikelihoodModel>(
    posterior: &PosteriorApprox,
    model: &M,
    config: &EvidenceConfig,
    seed: u64,
    dataset_label: &str,
) -> Result<ElboEstimate> {
    config.validate()?;
    let d = model.dim();
    if posterior.xi_bar.len() != d {
        return Err(invalid("posterior does not belong to this model"));
    }
    let xi_bar = &posterior.xi_bar;
    let draw = |n: usize, stream: u64| {
        let n = n + n % 2;
        draw_metric_samples(model, xi_bar, n, rng::derive_seed(seed, stream), config.cg_tolerance, config.cg_max_iter)
    };
    let fresh;
    let residuals = if config.samples > posterior.residuals.len() {
        fresh = draw(config.samples, u64::MAX)?;
        &fresh.residuals
    } else {
        &posterior.residuals
    };
    let ns = residuals.len();
    if ns < 2 {
        return Err(invalid("the ELBO needs at least two posterior samples"));
    }
    let point = model.linearize(xi_bar);
    let log_det = log_det_metric(model, &point, config, seed)?;
    let hyper = model.hyper_indices();
    let nh = hyper.len() as f64;
    let scales = hyper_scales(config);
    let trace = if hyper.is_empty() || scales == [1.0] {
        0.0
    } else {
        hyper_trace(model, &point, &hyper, config)?
    };
    let offset = |s: f64| -(s - 1.0) * nh - 0.5 * (s - 1.0).powi(2) * trace + nh * s.ln();
    let base = -0.5 * dot(xi_bar, xi_bar) - 0.5 * log_det.value;
    let mut scale = if hyper.is_empty() { 1.0 } else { scales[0] };
    if !hyper.is_empty() && scales.len() > 1 {
        let selection = draw(ns.max(8), u64::MAX - 1)?;
        let mut best = f64::NEG_INFINITY;
        for &s in &scales {
            let v = mean(&sample_terms(model, &point, xi_bar, &selection.residuals, &hyper, s)?) + offset(s);
            if v > best {
                best = v;
                scale = s;
            }
        }
    }
    let terms = sample_terms(model, &point, xi_bar, residuals, &hyper, scale)?;
    // Antithetic pairs are the independent units.
    let units: Vec<f64> = if ns % 2 == 0 && ns >= 4 {
        terms.chunks(2).map(|p| 0.5 * (p[0] + p[1])).collect()
    } else {
        terms.clone()
    };
    let nu = units.len() as f64;
    let um = mean(&units);
    let sample_var = units.iter().map(|u| (u - um).powi(2)).sum::<f64>() / (nu - 1.0) / nu;
    let value = mean(&terms) + base + offset(scale);
    let entropy = 0.5 * d as f64 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln() - 0.5 * log_det.value
        + nh * scale.ln();
    Ok(ElboEstimate {
        dataset_label: dataset_label.to_string(),
        value,
        stderr: (sample_var + 0.25 * log_det.stderr.powi(2)).sqrt(),
        expected_log_joint: value - entropy,
        entropy,
        log_det,
        dim: d,
        n_samples: ns,
        hyper_scale: scale,
    })
}

/// Log-evidence ratio of a causal model against the independent model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaEvidence {
    pub dataset_label: String,
    pub direction: Direction,
    pub delta: f64,
    pub stderr: f64,
    pub elbo_causal: f64,
    pub elbo_indep: f64,
}

impl DeltaEvidence {
    /// Posterior odds of the causal model at equal prior odds, `e^ΔE`.
    pub fn odds(&self) -> f64 {
        self.delta.exp()
    }

    pub fn note(&self) -> &'static str {
        "one nit of evidence is a factor e ≈ 2.7 in posterior odds"
    }
}

pub fn delta_evidence(
    elbo_causal: &ElboEstimate,
    elbo_indep: &ElboEstimate,
    direction: Direction,
) -> Result<DeltaEvidence> {
    if elbo_causal.dataset_label != elbo_indep.dataset_label {
        return Err(invalid(format!(
            "cannot compare fits of '{}' and '{}'",
            elbo_causal.dataset_label, elbo_indep.dataset_label
        )));
    }
    if direction == Direction::Independent {
        return Err(invalid("ΔE compares a causal direction against independence"));
    }
    Ok(DeltaEvidence {
        dataset_label: elbo_causal.dataset_label.clone(),
        direction,
        delta: elbo_causal.value - elbo_indep.value,
        stderr: elbo_causal.stderr.hypot(elbo_indep.stderr),
        elbo_causal: elbo_causal.value,
        elbo_indep: elbo_indep.value,
    })
}

/// Mean and sample standard deviation of a batch of ΔE values.
pub fn summarize(deltas: &[DeltaEvidence]) -> Option<(f64, f64)> {
    if deltas.is_empty() {
        return None;
    }
    let n = deltas.len() as f64;
    let mean = deltas.iter().map(|d| d.delta).sum::<f64>() / n;
    let spread = if deltas.len() > 1 {
        (deltas.iter().map(|d| (d.delta - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    Some((mean, spread))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::toy::{no_data, random, LinearGaussian};
    use crate::inference::{run_mgvi, InferenceConfig};
    use nalgebra::SymmetricEigen;

    fn dense_logdet<M: LikelihoodModel>(model: &M, xi: &[f64]) -> f64 {
        let p = model.linearize(xi);
        let n = model.dim();
        let m = DMatrix::from_fn(n, n, |r, c| {
            let mut e = vec![0.0; n];
            e[c] = 1.0;
            model.fisher(&p, &e)[r] + if r == c { 1.0 } else { 0.0 }
        });
        SymmetricEigen::new(m).eigenvalues.iter().map(|v| v.ln()).sum()
    }

    #[test]
    fn exact_log_det_in_both_spaces() {
        for (nl, nd) in [(6, 15), (15, 6)] {
            let model = random(nl, nd, 0.5, 21);
            let xi = vec![0.0; nl];
            let p = model.linearize(&xi);
            let a = log_det_exact(&model, &p).unwrap();
            let b = dense_logdet(&model, &xi);
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn stochastic_log_det_is_consistent() {
        let model = random(120, 80, 1.0, 22);
        let xi = vec![0.0; 120];
        let p = model.linearize(&xi);
        let exact = dense_logdet(&model, &xi);
        let est = log_det_stochastic(&model, &p, 32, 40, 5).unwrap();
        assert!(est.deflated > 0);
        assert!(
            (est.value - exact).abs() < 3.0 * est.stderr + 1e-6 * exact.abs(),
            "{} ± {} vs {exact}",
            est.value,
            est.stderr
        );
    }

    #[test]
    fn more_probes_shrink_stderr() {
        let model = random(200, 150, 3.0, 23);
        let xi = vec![0.0; 200];
        let p = model.linearize(&xi);
        // Average over seeds to tame the scatter of the stderr itself.
        let mut r = 0.0;
        for s in 0..6 {
            let a = log_det_stochastic(&model, &p, 16, 10, 100 + s).unwrap();
            let b = log_det_stochastic(&model, &p, 32, 10, 100 + s).unwrap();
            assert_eq!(a.deflated, b.deflated);
            r += b.stderr / a.stderr / 6.0;
        }
        assert!((r - std::f64::consts::FRAC_1_SQRT_2).abs() < 0.15, "ratio {r}");
    }

    #[test]
    fn identity_metric_entropy() {
        let model = no_data(5);
        let post = PosteriorApprox {
            xi_bar: vec![0.0; 5],
            residuals: vec![vec![0.3; 5], vec![-0.3; 5], vec![0.1; 5], vec![-0.1; 5]],
            history: vec![],
        };
        let expect = 2.5 * (2.0 * std::f64::consts::PI * std::f64::consts::E).ln();
        for method in [LogDetMethod::Exact, LogDetMethod::Stochastic] {
            let cfg = EvidenceConfig {
                method,
                ..EvidenceConfig::default()
            };
            let e = estimate_elbo(&post, &model, &cfg, 1, "t").unwrap();
            assert_eq!(e.entropy, expect);
        }
    }

    #[test]
    fn elbo_matches_conjugate_evidence() {
        let model = random(1, 1, 0.5, 24);
        let cfg = InferenceConfig {
            n_global_iterations: 3,
            newton_cg_tolerance: 1e-12,
            ..InferenceConfig::default()
        };
        let post = run_mgvi(&model, &cfg).unwrap();
        let e = estimate_elbo(&post, &model, &EvidenceConfig::default(), 2, "toy").unwrap();
        let l = model.log_evidence();
        assert!(e.value <= l + 2.0 * e.stderr + 1e-9, "{} vs {l}", e.value);
        assert!(e.value >= l - 0.1 - 2.0 * e.stderr);
        assert!((e.value - l).abs() < 1e-8);

        let big = random(12, 30, 0.7, 25);
        let post = run_mgvi(&big, &cfg).unwrap();
        let e = estimate_elbo(&post, &big, &EvidenceConfig::default(), 2, "toy").unwrap();
        assert!((e.value - big.log_evidence()).abs() < 1e-7);
    }

    /// A linear Gaussian model with some coordinates declared as hyper-latents.
    struct Tagged(LinearGaussian, Vec<usize>);

    impl LikelihoodModel for Tagged {
        type Point = <LinearGaussian as LikelihoodModel>::Point;
        fn dim(&self) -> usize {
            self.0.dim()
        }
        fn data_dim(&self) -> usize {
            self.0.data_dim()
        }
        fn energy(&self, xi: &[f64]) -> f64 {
            self.0.energy(xi)
        }
        fn linearize(&self, xi: &[f64]) -> Self::Point {
            self.0.linearize(xi)
        }
        fn point_energy(&self, p: &Self::Point) -> f64 {
            self.0.point_energy(p)
        }
        fn gradient<'a>(&self, p: &'a Self::Point) -> &'a [f64] {
            self.0.gradient(p)
        }
        fn fisher(&self, p: &Self::Point, v: &[f64]) -> Vec<f64> {
            self.0.fisher(p, v)
        }
        fn fisher_sqrt(&self, p: &Self::Point, v: &[f64]) -> Vec<f64> {
            self.0.fisher_sqrt(p, v)
        }
        fn fisher_sqrt_adjoint(&self, p: &Self::Point, eta: &[f64]) -> Vec<f64> {
            self.0.fisher_sqrt_adjoint(p, eta)
        }
        fn hyper_indices(&self) -> Vec<usize> {
            self.1.clone()
        }
    }

    /// Closed-form ELBO of `N(μ, Σ)` under the linear Gaussian model.
    fn gaussian_elbo(m: &LinearGaussian, mu: &[f64], cov: &DMatrix<f64>) -> f64 {
        let two_pi = 2.0 * std::f64::consts::PI;
        let n = mu.len() as f64;
        let k = m.r.nrows() as f64;
        let mu = nalgebra::DVector::from_column_slice(mu);
        let res = &m.d - &m.r * &mu;
        let s2 = m.sigma.powi(2);
        let lik = -0.5 * res.norm_squared() / s2 - 0.5 * (m.r.transpose() * &m.r * cov).trace() / s2
            - 0.5 * k * (two_pi * s2).ln();
        let prior = -0.5 * (mu.norm_squared() + cov.trace()) - 0.5 * n * two_pi.ln();
        let chol = cov.clone().cholesky().unwrap();
        let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
        lik + prior + 0.5 * n * (two_pi * std::f64::consts::E).ln() + 0.5 * logdet
    }

    #[test]
    fn scaled_hyper_elbo_matches_closed_form() {
        let base = random(8, 20, 0.6, 26);
        let cfg = InferenceConfig {
            n_global_iterations: 3,
            newton_cg_tolerance: 1e-12,
            ..InferenceConfig::default()
        };
        let post = run_mgvi(&base, &cfg).unwrap();
        let hyper = vec![1, 4, 6];
        let model = Tagged(base, hyper.clone());
        let cov_m = model.0.posterior_precision().try_inverse().unwrap();
        let evidence = model.0.log_evidence();
        for s in [1.0, 0.7, 0.3] {
            let ec = EvidenceConfig {
                min_hyper_scale: s,
                hyper_scale_steps: 1,
                method: LogDetMethod::Exact,
                ..EvidenceConfig::default()
            };
            let e = estimate_elbo(&post, &model, &ec, 3, "toy").unwrap();
            assert_eq!(e.hyper_scale, s);
            let scale = DMatrix::from_fn(8, 8, |i, j| if i != j { 0.0 } else if hyper.contains(&i) { s } else { 1.0 });
            let expect = gaussian_elbo(&model.0, &post.xi_bar, &(&scale * &cov_m * &scale));
            assert!((e.value - expect).abs() < 1e-6, "s={s}: {} vs {expect}", e.value);
            assert!(e.value <= evidence + 1e-8);
        }
        // Selection keeps the exact posterior for a Gaussian model.
        let e = estimate_elbo(&post, &model, &EvidenceConfig::default(), 3, "toy").unwrap();
        assert_eq!(e.hyper_scale, 1.0);
        assert!((e.value - evidence).abs() < 1e-7);
    }

    fn est(label: &str, value: f64, stderr: f64) -> ElboEstimate {
        ElboEstimate {
            dataset_label: label.into(),
            value,
            stderr,
            expected_log_joint: 0.0,
            entropy: 0.0,
            log_det: LogDet {
                value: 0.0,
                stderr: 0.0,
                probes: 0,
                deflated: 0,
                exact: true,
            },
            dim: 1,
            n_samples: 2,
            hyper_scale: 1.0,
        }
    }

    #[test]
    fn delta_examples() {
        let a = est("d", -100.0, 0.3);
        let d = delta_evidence(&a, &a, Direction::XtoY).unwrap();
        assert_eq!(d.delta, 0.0);
        assert!((d.stderr - 0.3 * 2f64.sqrt()).abs() < 1e-15);

        let d = delta_evidence(&est("d", -95.4, 0.6), &est("d", -100.0, 0.8), Direction::XtoY).unwrap();
        assert!((d.delta - 4.6).abs() < 1e-12);
        assert!((d.stderr - 1.0).abs() < 1e-12);
        assert!((d.odds() - 99.48).abs() < 0.01);
        let neg = delta_evidence(&est("d", -100.0, 0.6), &est("d", -95.4, 0.8), Direction::YtoX).unwrap();
        assert!((neg.delta + 4.6).abs() < 1e-12);

        assert!(delta_evidence(&est("a", 0.0, 0.0), &est("b", 0.0, 0.0), Direction::XtoY).is_err());
        assert!(delta_evidence(&a, &a, Direction::Independent).is_err());
    }

    #[test]
    fn summary_statistics() {
        let ds: Vec<DeltaEvidence> = [-5.0, -7.0, -6.0]
            .iter()
            .map(|&v| delta_evidence(&est("d", v, 0.1), &est("d", 0.0, 0.1), Direction::XtoY).unwrap())
            .collect();
        let (m, s) = summarize(&ds).unwrap();
        assert!((m + 6.0).abs() < 1e-12);
        assert!((s - 1.0).abs() < 1e-12);
        assert!(summarize(&[]).is_none());
    }
}
