//! Synthetic ground truths and datasets drawn from them.
//!
//! A truth is a smooth `f`, `g` and (for the causal preset) `h`, combined
//! into a joint density with the same construction the models use. The
//! coupling amplitude is the standard deviation of the part of `h` that
//! actually changes the conditional, i.e. `h` minus its mean over x at every y.

use std::str::FromStr;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{synthesize_counts, Dataset};
use crate::error::{invalid, Result};
use crate::field::CorrelatedField;
use crate::grid::{Field, Grid1D, Grid2D};
use crate::matern::{default_zero_mode, AxisPrior, MaternParams};
use crate::model::{conditional_pdf, joint_density, transpose_field};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// x causes y through a non-zero `h`.
    Causal,
    /// `h = 0`.
    Independent,
}

impl FromStr for Preset {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "causal" | "x->y" => Ok(Preset::Causal),
            "independent" => Ok(Preset::Independent),
            _ => Err(invalid(format!("unknown preset '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthSpec {
    pub preset: Preset,
    /// Expected number of events.
    pub n_points: usize,
    pub f_std: f64,
    pub g_std: f64,
    pub coupling: f64,
    /// Correlation length of every truth field as a fraction of the axis extent.
    pub smoothness: f64,
    pub seed: u64,
}

impl TruthSpec {
    pub fn new(preset: Preset, n_points: usize, seed: u64) -> Self {
        Self {
            preset,
            n_points,
            f_std: 0.3,
            g_std: 0.8,
            coupling: match preset {
                Preset::Causal => 0.5,
                Preset::Independent => 0.0,
            },
            smoothness: 0.3,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub spec: TruthSpec,
    pub grid: Grid2D,
    pub rho0: f64,
    /// Log marginal of x.
    pub f: Vec<f64>,
    pub g: Vec<f64>,
    pub h: Vec<f64>,
    /// `ρ(x, y)`, x rows.
    pub joint: Field,
    pub cond: Field,
}

fn smooth_field(axes: Vec<Grid1D>, smoothness: f64, seed: u64, stream: u64) -> Result<Vec<f64>> {
    let params: Vec<MaternParams> = axes
        .iter()
        .map(|g| MaternParams::new(1.0, 1.0 / (smoothness * g.extent()), -4.0))
        .collect::<Result<_>>()?;
    let priors = vec![AxisPrior::causal_default(); axes.len()];
    let field = CorrelatedField::new(axes, priors, default_zero_mode())?;
    let mut r = rng::stream(seed, stream);
    let modes: Vec<f64> = (0..field.n_modes()).map(|_| StandardNormal.sample(&mut r)).collect();
    field.realize_with(&modes, &params, 0.0)
}

fn standardize(v: &mut [f64], target: f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    let scale = if std > 0.0 { target / std } else { 0.0 };
    v.iter_mut().for_each(|x| *x = (*x - mean) * scale);
}

pub fn make_truth(spec: TruthSpec, grid: Grid2D) -> Result<Truth> {
    if spec.n_points == 0 {
        return Err(invalid("the truth needs a positive number of points"));
    }
    if !(spec.smoothness > 0.0) || spec.f_std < 0.0 || spec.g_std < 0.0 || spec.coupling < 0.0 {
        return Err(invalid("truth scales must be non-negative and smoothness positive"));
    }
    let [nx, ny] = grid.shape();
    let mut f = smooth_field(vec![grid.gx], spec.smoothness, spec.seed, 0)?;
    standardize(&mut f, spec.f_std);
    let mut g = smooth_field(vec![grid.gy], spec.smoothness, spec.seed, 1)?;
    standardize(&mut g, spec.g_std);
    let mut h = vec![0.0; nx * ny];
    if spec.preset == Preset::Causal && spec.coupling > 0.0 {
        h = smooth_field(grid.axes(), spec.smoothness, spec.seed, 2)?;
        for j in 0..ny {
            let m = (0..nx).map(|i| h[i * ny + j]).sum::<f64>() / nx as f64;
            (0..nx).for_each(|i| h[i * ny + j] -= m);
        }
        standardize(&mut h, spec.coupling);
    }
    let fx = Field::new(vec![grid.gx], f.clone())?;
    let gy = Field::new(vec![grid.gy], g.clone())?;
    let cond = conditional_pdf(&gy, &Field::on_2d(&grid, h.clone())?)?;
    let mass: f64 = f.iter().map(|v| v.exp()).sum::<f64>() * grid.gx.step();
    let rho0 = spec.n_points as f64 / mass;
    let joint = joint_density(&fx, &cond, rho0)?;
    Ok(Truth {
        spec,
        grid,
        rho0,
        f,
        g,
        h,
        joint,
        cond,
    })
}

impl Truth {
    /// The truth with the roles of x and y exchanged (a `y → x` truth for
    /// the causal preset).
    pub fn swapped(&self) -> Truth {
        Truth {
            spec: self.spec,
            grid: self.grid.swapped(),
            rho0: self.rho0,
            f: self.f.clone(),
            g: self.g.clone(),
            h: self.h.clone(),
            joint: transpose_field(&self.joint),
            cond: transpose_field(&self.cond),
        }
    }
}

/// Poisson draw from the truth with every point at its pixel center.
pub fn simulate(truth: &Truth, seed: u64, label: &str) -> Result<Dataset> {
    synthesize_counts(&truth.joint, seed, false, label)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Record;

    fn grid() -> Grid2D {
        Grid2D::new(
            Grid1D::new(30, 0.0, 3.0, 2.0).unwrap(),
            Grid1D::new(32, 3.8, 0.16, 2.0).unwrap(),
        )
    }

    #[test]
    fn truth_scales() {
        let t = make_truth(TruthSpec::new(Preset::Causal, 2000, 1), grid()).unwrap();
        let total = crate::grid::integrate(&t.joint);
        assert!((total - 2000.0).abs() < 1e-8);
        let std = (t.h.iter().map(|v| v * v).sum::<f64>() / t.h.len() as f64).sqrt();
        assert!((std - 0.5).abs() < 1e-12);
        for j in 0..32 {
            let m: f64 = (0..30).map(|i| t.h[i * 32 + j]).sum();
            assert!(m.abs() < 1e-10);
        }
        let ind = make_truth(TruthSpec::new(Preset::Independent, 2000, 1), grid()).unwrap();
        assert!(ind.h.iter().all(|&v| v == 0.0));
        assert_eq!(ind.f, t.f);
    }

    #[test]
    fn simulated_size_is_poisson() {
        let t = make_truth(TruthSpec::new(Preset::Independent, 2000, 2), grid()).unwrap();
        let d = simulate(&t, 5, "sim").unwrap();
        assert!((d.len() as f64 - 2000.0).abs() < 5.0 * 2000f64.sqrt());
        let g = grid();
        assert!(d
            .records
            .iter()
            .all(|&Record { x, y }| g.gx.pixel_of(x).is_some() && g.gy.pixel_of(y).is_some()));
        assert_eq!(d, simulate(&t, 5, "sim").unwrap());
    }

    #[test]
    fn swapped_truth_transposes() {
        let t = make_truth(TruthSpec::new(Preset::Causal, 500, 3), grid()).unwrap();
        let s = t.swapped();
        assert_eq!(s.joint.at(4, 7), t.joint.at(7, 4));
        assert_eq!(s.grid, t.grid.swapped());
    }
}
