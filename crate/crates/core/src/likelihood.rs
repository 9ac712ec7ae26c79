//! Binning, expected counts and the Poisson likelihood.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::data::Dataset;
use crate::error::{invalid, Error, Result};
use crate::grid::{Field, Grid1D, Grid2D};
use crate::inference::LikelihoodModel;

/// Event counts per pixel of a product grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountGrid {
    axes: Vec<Grid1D>,
    counts: Vec<u64>,
    /// Points that fell outside the grid.
    pub discarded: usize,
}

impl CountGrid {
    pub fn new(axes: Vec<Grid1D>, counts: Vec<u64>) -> Result<Self> {
        let n: usize = axes.iter().map(Grid1D::n_pixels).product();
        if axes.is_empty() || counts.len() != n {
            return Err(invalid(format!("{} counts for {n} pixels", counts.len())));
        }
        Ok(Self {
            axes,
            counts,
            discarded: 0,
        })
    }

    pub fn axes(&self) -> &[Grid1D] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Grid1D::n_pixels).collect()
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn grid2d(&self) -> Result<Grid2D> {
        match self.axes.as_slice() {
            [gx, gy] => Ok(Grid2D::new(*gx, *gy)),
            _ => Err(invalid("expected a 2-D count grid")),
        }
    }

    /// Same counts with the two axes exchanged.
    pub fn transposed(&self) -> Result<Self> {
        let g = self.grid2d()?;
        let [nx, ny] = g.shape();
        let mut counts = vec![0; self.counts.len()];
        for i in 0..nx {
            for j in 0..ny {
                counts[j * nx + i] = self.counts[i * ny + j];
            }
        }
        Ok(Self {
            axes: vec![g.gy, g.gx],
            counts,
            discarded: self.discarded,
        })
    }

    /// Bins n-dimensional points; points outside the grid are tallied.
    pub fn from_points<'a>(axes: Vec<Grid1D>, points: impl IntoIterator<Item = &'a [f64]>) -> Result<Self> {
        let mut grid = Self::new(axes.clone(), vec![0; axes.iter().map(Grid1D::n_pixels).product()])?;
        for p in points {
            if p.len() != axes.len() {
                return Err(invalid("point dimension does not match the grid"));
            }
            let mut flat = 0;
            let mut inside = true;
            for (g, &v) in axes.iter().zip(p) {
                match g.pixel_of(v) {
                    Some(i) => flat = flat * g.n_pixels() + i,
                    None => {
                        inside = false;
                        break;
                    }
                }
            }
            if inside {
                grid.counts[flat] += 1;
            } else {
                grid.discarded += 1;
            }
        }
        Ok(grid)
    }
}

/// Counts the records falling in each pixel of `grid`.
pub fn bin_data(data: &Dataset, grid: &Grid2D) -> CountGrid {
    let points: Vec<[f64; 2]> = data.records.iter().map(|r| [r.x, r.y]).collect();
    CountGrid::from_points(grid.axes(), points.iter().map(|p| p.as_slice()))
        .expect("2-D points on a 2-D grid")
}

/// Expected counts `λ_ij` per pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedCounts {
    axes: Vec<Grid1D>,
    lambda: Vec<f64>,
}

impl ExpectedCounts {
    pub fn new(axes: Vec<Grid1D>, lambda: Vec<f64>) -> Self {
        Self { axes, lambda }
    }

    pub fn axes(&self) -> &[Grid1D] {
        &self.axes
    }

    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }
}

/// Midpoint rule: `λ = pixel volume × density at the pixel center`.
pub fn expected_counts(joint: &Field) -> ExpectedCounts {
    let vol = joint.pixel_volume();
    ExpectedCounts {
        axes: joint.axes().to_vec(),
        lambda: joint.values().iter().map(|r| vol * r).collect(),
    }
}

/// `ln(n!)` through the log-gamma function.
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        0.0
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// Poisson log-likelihood `Σ n ln λ − λ − ln n!`.
pub fn log_likelihood(lambda: &ExpectedCounts, counts: &CountGrid) -> Result<f64> {
    if lambda.lambda.len() != counts.counts.len() {
        return Err(invalid("expected counts and data have different shapes"));
    }
    let mut total = 0.0;
    for (&l, &n) in lambda.lambda.iter().zip(&counts.counts) {
        if !(l > 0.0) || !l.is_finite() {
            return Err(Error::InvalidState(format!("non-positive expected count {l}")));
        }
        total += n as f64 * l.ln() - l - ln_factorial(n);
    }
    Ok(total)
}

/// Applies the posterior metric `(Jᵀ diag(1/λ) J + 1) v` at `xi_bar`, where
/// `J` is the Jacobian of the expected counts.
pub fn apply_fisher_metric<M: LikelihoodModel>(model: &M, xi_bar: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    if xi_bar.len() != model.dim() || v.len() != model.dim() {
        return Err(invalid(format!(
            "metric needs vectors of dimension {}, got {} and {}",
            model.dim(),
            xi_bar.len(),
            v.len()
        )));
    }
    let point = model.linearize(xi_bar);
    let mut out = model.fisher(&point, v);
    out.iter_mut().zip(v).for_each(|(o, x)| *o += x);
    Ok(out)
}
