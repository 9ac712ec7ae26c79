//! Matérn-kernel density estimation on n-dimensional grids.
//!
//! The density is `ϱ(x) = ϱ₀ e^{s(x)}` with `s` a correlated field whose
//! spectrum is the product of per-axis Matérn spectra and a shared zero mode.
//! Counts are Poisson with mean `ϱ` times the pixel volume.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::field::{CorrelatedField, FieldLinearization};
use crate::grid::Grid1D;
use crate::inference::{moments, run_mgvi, InferenceConfig, LikelihoodModel, PosteriorApprox};
use crate::likelihood::{ln_factorial, CountGrid};
use crate::matern::{default_zero_mode, AxisPrior, Marginal};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MkdeConfig {
    /// One prior per axis; empty means the default estimator priors on every axis.
    pub priors: Vec<AxisPrior>,
    pub zero_mode: Marginal,
    /// Reference density; defaults to the number of counts over the grid volume.
    pub rho0: Option<f64>,
}

impl Default for MkdeConfig {
    fn default() -> Self {
        Self {
            priors: Vec::new(),
            zero_mode: default_zero_mode(),
            rho0: None,
        }
    }
}

pub struct MkdeModel {
    field: CorrelatedField,
    rho0: f64,
    log_scale: f64,
    counts: Vec<f64>,
    log_fact: f64,
}

pub struct MkdePoint {
    lin: FieldLinearization,
    lambda: Vec<f64>,
    sqrt_lambda: Vec<f64>,
    energy: f64,
    grad: Vec<f64>,
}

impl MkdeModel {
    pub fn new(counts: &CountGrid, config: &MkdeConfig) -> Result<Self> {
        let axes = counts.axes().to_vec();
        let priors = if config.priors.is_empty() {
            vec![AxisPrior::mkde_default(); axes.len()]
        } else {
            config.priors.clone()
        };
        if priors.len() != axes.len() {
            return Err(invalid(format!("{} axis priors for a {}-D grid", priors.len(), axes.len())));
        }
        let volume: f64 = axes.iter().map(Grid1D::extent).product();
        let total = counts.total() as f64;
        let rho0 = config.rho0.unwrap_or(if total > 0.0 { total / volume } else { 1.0 / volume });
        if !(rho0 > 0.0 && rho0.is_finite()) {
            return Err(invalid(format!("reference density must be positive, got {rho0}")));
        }
        let pixel: f64 = axes.iter().map(Grid1D::step).product();
        let field = CorrelatedField::new(axes, priors, config.zero_mode)?;
        Ok(Self {
            field,
            rho0,
            log_scale: (rho0 * pixel).ln(),
            counts: counts.counts().iter().map(|&n| n as f64).collect(),
            log_fact: counts.counts().iter().map(|&n| ln_factorial(n)).sum(),
        })
    }

    pub fn field(&self) -> &CorrelatedField {
        &self.field
    }

    pub fn axes(&self) -> &[Grid1D] {
        self.field.axes()
    }

    pub fn rho0(&self) -> f64 {
        self.rho0
    }

    /// `ϱ` on the grid for one latent vector, row-major.
    pub fn density(&self, xi: &[f64]) -> Result<Vec<f64>> {
        let s = self.field.realize(xi)?;
        Ok(s.iter().map(|v| self.rho0 * v.exp()).collect())
    }

    fn poisson(&self, log_lambda: impl Iterator<Item = f64>) -> f64 {
        let mut e = self.log_fact;
        for (l, n) in log_lambda.zip(&self.counts) {
            e += l.exp() - n * l;
        }
        e
    }
}

impl LikelihoodModel for MkdeModel {
    type Point = MkdePoint;

    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn data_dim(&self) -> usize {
        self.counts.len()
    }

    fn energy(&self, xi: &[f64]) -> f64 {
        match self.field.realize(xi) {
            Ok(s) => {
                let e = self.poisson(s.iter().map(|v| v + self.log_scale));
                if e.is_finite() {
                    e
                } else {
                    f64::INFINITY
                }
            }
            Err(_) => f64::INFINITY,
        }
    }

    fn linearize(&self, xi: &[f64]) -> MkdePoint {
        let lin = self.field.linearize(xi);
        let lambda: Vec<f64> = lin.values.iter().map(|v| (v + self.log_scale).exp()).collect();
        let energy = self.poisson(lin.values.iter().map(|v| v + self.log_scale));
        let resid: Vec<f64> = lambda.iter().zip(&self.counts).map(|(l, n)| l - n).collect();
        let grad = self.field.adjoint(&lin, &resid);
        MkdePoint {
            sqrt_lambda: lambda.iter().map(|l| l.sqrt()).collect(),
            lin,
            lambda,
            energy,
            grad,
        }
    }

    fn point_energy(&self, p: &MkdePoint) -> f64 {
        p.energy
    }

    fn gradient<'a>(&self, p: &'a MkdePoint) -> &'a [f64] {
        &p.grad
    }

    fn fisher(&self, p: &MkdePoint, v: &[f64]) -> Vec<f64> {
        let jv = self.field.tangent(&p.lin, v);
        let w: Vec<f64> = jv.iter().zip(&p.lambda).map(|(a, l)| a * l).collect();
        self.field.adjoint(&p.lin, &w)
    }

    fn fisher_sqrt(&self, p: &MkdePoint, v: &[f64]) -> Vec<f64> {
        let jv = self.field.tangent(&p.lin, v);
        jv.iter().zip(&p.sqrt_lambda).map(|(a, l)| a * l).collect()
    }

    fn fisher_sqrt_adjoint(&self, p: &MkdePoint, eta: &[f64]) -> Vec<f64> {
        let u: Vec<f64> = eta.iter().zip(&p.sqrt_lambda).map(|(e, l)| e * l).collect();
        self.field.adjoint(&p.lin, &u)
    }

    fn hyper_indices(&self) -> Vec<usize> {
        (self.field.n_modes()..self.field.dim()).collect()
    }
}

pub struct MkdeFit {
    pub model: MkdeModel,
    pub posterior: PosteriorApprox,
}

pub fn mkde_fit(counts: &CountGrid, config: &MkdeConfig, inference: &InferenceConfig) -> Result<MkdeFit> {
    let model = MkdeModel::new(counts, config)?;
    let posterior = run_mgvi(&model, inference)?;
    Ok(MkdeFit { model, posterior })
}

/// Posterior mean and standard deviation of a derived quantity on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalDensity {
    /// Retained axes, in the order requested.
    pub axes: Vec<usize>,
    pub grids: Vec<Grid1D>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
}

/// Sums `values` (row-major on `shape`) over every axis not in `keep`,
/// weighting by the pixel size of the summed axes. The result is row-major
/// in the order of `keep`.
pub fn marginalize(values: &[f64], grids: &[Grid1D], keep: &[usize]) -> Result<Vec<f64>> {
    let n = grids.len();
    if keep.is_empty() {
        return Err(invalid("at least one axis must be kept"));
    }
    let mut seen = vec![false; n];
    for &a in keep {
        if a >= n || seen[a] {
            return Err(invalid(format!("invalid or repeated axis {a}")));
        }
        seen[a] = true;
    }
    let shape: Vec<usize> = grids.iter().map(Grid1D::n_pixels).collect();
    if values.len() != shape.iter().product::<usize>() {
        return Err(invalid("values do not match the grid"));
    }
    let weight: f64 = (0..n).filter(|a| !seen[*a]).map(|a| grids[a].step()).product();
    let out_shape: Vec<usize> = keep.iter().map(|&a| shape[a]).collect();
    let mut out = vec![0.0; out_shape.iter().product()];
    crate::field::for_each_mode(&shape, |m, idx| {
        let k = keep.iter().fold(0, |acc, &a| acc * shape[a] + idx[a]);
        out[k] += values[m];
    });
    out.iter_mut().for_each(|v| *v *= weight);
    Ok(out)
}

/// Density marginal over the axes in `keep`, per posterior sample.
pub fn mkde_marginal(model: &MkdeModel, posterior: &PosteriorApprox, keep: &[usize]) -> Result<MarginalDensity> {
    let grids = model.axes().to_vec();
    let samples = posterior
        .samples()
        .iter()
        .map(|s| marginalize(&model.density(s)?, &grids, keep))
        .collect::<Result<Vec<_>>>()?;
    let (mean, std) = moments(&samples)?;
    Ok(MarginalDensity {
        axes: keep.to_vec(),
        grids: keep.iter().map(|&a| grids[a]).collect(),
        mean,
        std,
        samples,
    })
}

/// Reads counts from a CSV with header `i0,…,i{n−1},count`.
pub fn load_index_counts(path: &Path, axes: &[Grid1D]) -> Result<CountGrid> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| io(std::io::Error::other(e)))?;
    let n = axes.len();
    let headers = reader.headers().map_err(|e| io(std::io::Error::other(e)))?.clone();
    let expected: Vec<String> = (0..n).map(|a| format!("i{a}")).chain(["count".to_string()]).collect();
    if headers.iter().ne(expected.iter().map(String::as_str)) {
        return Err(invalid(format!("{}: expected header '{}'", path.display(), expected.join(","))));
    }
    let shape: Vec<usize> = axes.iter().map(Grid1D::n_pixels).collect();
    let mut counts = vec![0u64; shape.iter().product()];
    let mut bad = Vec::new();
    for (line, row) in reader.records().enumerate() {
        let parsed = row.ok().and_then(|r| {
            if r.len() != n + 1 {
                return None;
            }
            let mut flat = 0;
            for a in 0..n {
                let i: usize = r.get(a)?.parse().ok()?;
                if i >= shape[a] {
                    return None;
                }
                flat = flat * shape[a] + i;
            }
            Some((flat, r.get(n)?.parse::<u64>().ok()?))
        });
        match parsed {
            Some((k, c)) => counts[k] += c,
            None => bad.push(line + 2),
        }
    }
    if !bad.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            lines: bad,
        });
    }
    CountGrid::new(axes.to_vec(), counts)
}

/// Writes the non-zero entries of a count grid as index tuples.
pub fn save_index_counts(counts: &CountGrid, path: &Path) -> Result<()> {
    let io = |source| Error::Io {
        path: path.to_path_buf(),
        source,
    };
    let shape = counts.shape();
    let mut out = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    let header: Vec<String> = (0..shape.len()).map(|a| format!("i{a}")).chain(["count".to_string()]).collect();
    writeln!(out, "{}", header.join(",")).map_err(io)?;
    let mut result = Ok(());
    crate::field::for_each_mode(&shape, |m, idx| {
        let c = counts.counts()[m];
        if c > 0 && result.is_ok() {
            let cols: Vec<String> = idx.iter().map(usize::to_string).collect();
            result = writeln!(out, "{},{c}", cols.join(","));
        }
    });
    result.map_err(io)?;
    out.flush().map_err(io)
}
