//! Causal and independent generative models of the joint density.
//!
//! In the oriented frame the first axis is the cause and the second the
//! effect. The joint density is
//!
//! ```text
//! ρ(x, y) = ρ₀ · e^{f(x)} · p(y|x),
//! p(y|x) ∝ e^{g(y) + h(x, y)} / ∫ e^{h(x̃, y)} dx̃,   ∫ p(y|x) dy = 1,
//! ```
//!
//! with `f`, `g` one-dimensional and `h` two-dimensional correlated fields. The
//! independent model drops `h`. The `y → x` model is the same construction on
//! the transposed grid, so it shares every line of code with `x → y`.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::field::{CorrelatedField, FieldLinearization};
use crate::grid::{Field, Grid2D};
use crate::inference::LikelihoodModel;
use crate::likelihood::{ln_factorial, CountGrid};
use crate::matern::HyperPrior;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Direction {
    XtoY,
    YtoX,
    Independent,
}

impl Direction {
    pub fn label(self) -> &'static str {
        match self {
            Direction::XtoY => "x->y",
            Direction::YtoX => "y->x",
            Direction::Independent => "independent",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Direction {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "x->y" | "xtoy" | "x2y" => Ok(Direction::XtoY),
            "y->x" | "ytox" | "y2x" => Ok(Direction::YtoX),
            "independent" | "indep" | "none" => Ok(Direction::Independent),
            _ => Err(invalid(format!("unknown direction '{s}'"))),
        }
    }
}

/// Static description of one model instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub direction: Direction,
    /// Grid in data coordinates (x rows, y columns).
    pub grid: Grid2D,
    /// Priors keyed by data axis: `f` belongs to x, `g` to y.
    pub priors: HyperPrior,
    /// Reference density ϱ₀.
    pub rho0: f64,
    /// Treat y as the first (marginal) axis. Set for `y → x`; for the
    /// independent model it selects which axis carries the normalized factor.
    pub transposed: bool,
    /// Keep an `h` block in the independent model with amplitudes scaled by
    /// this factor instead of removing it.
    pub tight_h_scale: Option<f64>,
}

impl ModelConfig {
    pub fn new(direction: Direction, grid: Grid2D, priors: HyperPrior, rho0: f64) -> Self {
        Self {
            direction,
            grid,
            priors,
            rho0,
            transposed: direction == Direction::YtoX,
            tight_h_scale: None,
        }
    }

    /// ϱ₀ = N / 100.
    pub fn default_rho0(n_points: usize) -> f64 {
        n_points as f64 / 100.0
    }

    /// The independent model in the same orientation.
    pub fn independent_partner(&self) -> Self {
        Self {
            direction: Direction::Independent,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.priors.validate()?;
        if !(self.rho0 > 0.0) || !self.rho0.is_finite() {
            return Err(invalid(format!("rho0 must be positive, got {}", self.rho0)));
        }
        match (self.direction, self.transposed) {
            (Direction::XtoY, true) | (Direction::YtoX, false) => {
                return Err(invalid("orientation does not match the causal direction"))
            }
            _ => {}
        }
        if let Some(s) = self.tight_h_scale {
            if !(s > 0.0) || !s.is_finite() {
                return Err(invalid("tight_h_scale must be positive"));
            }
        }
        Ok(())
    }

    /// Grid with the cause axis first.
    pub fn frame(&self) -> Grid2D {
        if self.transposed {
            self.grid.swapped()
        } else {
            self.grid
        }
    }
}

/// One realization of all fields, in the oriented frame.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityRealization {
    pub direction: Direction,
    pub transposed: bool,
    /// Log marginal of the cause axis.
    pub f: Field,
    pub g: Field,
    /// Zero everywhere for the independent model.
    pub h: Field,
    /// `p(effect | cause)`, rows indexed by the cause.
    pub cond: Field,
    pub joint: Field,
}

impl DensityRealization {
    /// The joint density with x rows and y columns.
    pub fn joint_xy(&self) -> Field {
        if self.transposed {
            transpose_field(&self.joint)
        } else {
            self.joint.clone()
        }
    }
}

pub(crate) fn transpose(values: &[f64], nx: usize, ny: usize) -> Vec<f64> {
    let mut out = vec![0.0; values.len()];
    for i in 0..nx {
        for j in 0..ny {
            out[j * nx + i] = values[i * ny + j];
        }
    }
    out
}

pub fn transpose_field(field: &Field) -> Field {
    let axes = field.axes();
    assert_eq!(axes.len(), 2, "transpose needs a 2-D field");
    let values = transpose(field.values(), axes[0].n_pixels(), axes[1].n_pixels());
    Field::new(vec![axes[1], axes[0]], values).expect("transposed field is valid")
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let m = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + values.map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Log-conditional and the two softmax weights needed for its derivative.
struct Conditional {
    log_cond: Vec<f64>,
    /// `e^{h_xj} Δx / Z_j`, summing to one over x for each y.
    w: Vec<f64>,
    /// `p(y_j|x_i) Δy`, summing to one over y for each x.
    p: Vec<f64>,
}

fn conditional(g: &[f64], h: Option<&[f64]>, frame: &Grid2D) -> Conditional {
    let [nx, ny] = frame.shape();
    let (dx, dy) = (frame.gx.step(), frame.gy.step());
    let mut q = vec![0.0; nx * ny];
    let mut w = vec![0.0; nx * ny];
    match h {
        Some(h) => {
            for j in 0..ny {
                let log_z = log_sum_exp((0..nx).map(|i| h[i * ny + j])) + dx.ln();
                for i in 0..nx {
                    let k = i * ny + j;
                    q[k] = g[j] + h[k] - log_z;
                    w[k] = (h[k] - log_z).exp() * dx;
                }
            }
        }
        None => {
            let log_z = (nx as f64 * dx).ln();
            for i in 0..nx {
                for j in 0..ny {
                    q[i * ny + j] = g[j] - log_z;
                }
            }
            w.iter_mut().for_each(|v| *v = 1.0 / nx as f64);
        }
    }
    let mut p = vec![0.0; nx * ny];
    for i in 0..nx {
        let row = &mut q[i * ny..(i + 1) * ny];
        let log_n = log_sum_exp(row.iter().copied()) + dy.ln();
        for (j, v) in row.iter_mut().enumerate() {
            *v -= log_n;
            p[i * ny + j] = v.exp() * dy;
        }
    }
    Conditional { log_cond: q, w, p }
}

/// Normalized conditional `p(y|x)` on the 2-D grid of `h`.
///
/// `g` must live on the second axis of `h`. Every row integrates to one over y.
pub fn conditional_pdf(g: &Field, h: &Field) -> Result<Field> {
    let axes = h.axes();
    if axes.len() != 2 || g.axes().len() != 1 || g.axes()[0] != axes[1] {
        return Err(invalid("conditional needs g on the second axis of a 2-D h"));
    }
    let frame = Grid2D::new(axes[0], axes[1]);
    let c = conditional(g.values(), Some(h.values()), &frame);
    Field::on_2d(&frame, c.log_cond.iter().map(|v| v.exp()).collect())
}

/// `ρ(x, y) = ϱ₀ e^{f(x)} p(y|x)`.
pub fn joint_density(f: &Field, cond: &Field, rho0: f64) -> Result<Field> {
    let axes = cond.axes();
    if axes.len() != 2 || f.axes().len() != 1 || f.axes()[0] != axes[0] {
        return Err(invalid("joint density needs f on the first axis of the conditional"));
    }
    let ny = axes[1].n_pixels();
    let values = cond
        .values()
        .iter()
        .enumerate()
        .map(|(k, c)| rho0 * f.values()[k / ny].exp() * c)
        .collect();
    Field::new(axes.to_vec(), values)
}

/// The prior side of a model: fields, latent layout and density construction.
#[derive(Debug, Clone)]
pub struct GenerativeModel {
    config: ModelConfig,
    frame: Grid2D,
    f: CorrelatedField,
    g: CorrelatedField,
    h: Option<CorrelatedField>,
}

impl GenerativeModel {
    pub fn new(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let frame = config.frame();
        let pri = if config.transposed {
            config.priors.swapped()
        } else {
            config.priors
        };
        let f = CorrelatedField::new(vec![frame.gx], vec![pri.f], pri.zero_mode)?;
        let g = CorrelatedField::new(vec![frame.gy], vec![pri.g], pri.zero_mode)?;
        let h_field = || CorrelatedField::new(frame.axes(), vec![pri.h_x, pri.h_y], pri.zero_mode);
        let h = match (config.direction, config.tight_h_scale) {
            (Direction::Independent, None) => None,
            (Direction::Independent, Some(s)) => Some(h_field()?.with_amplitude_scale(s)),
            _ => Some(h_field()?),
        };
        Ok(Self { config, frame, f, g, h })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Grid with the cause axis first.
    pub fn frame(&self) -> Grid2D {
        self.frame
    }

    pub fn dim(&self) -> usize {
        self.f.dim() + self.g.dim() + self.h.as_ref().map_or(0, CorrelatedField::dim)
    }

    pub fn f_block(&self) -> Range<usize> {
        0..self.f.dim()
    }

    pub fn g_block(&self) -> Range<usize> {
        let s = self.f.dim();
        s..s + self.g.dim()
    }

    /// Empty for the independent model.
    pub fn h_block(&self) -> Range<usize> {
        let s = self.f.dim() + self.g.dim();
        s..self.dim()
    }

    pub fn fields(&self) -> (&CorrelatedField, &CorrelatedField, Option<&CorrelatedField>) {
        (&self.f, &self.g, self.h.as_ref())
    }

    fn check(&self, xi: &[f64]) -> Result<()> {
        if xi.len() != self.dim() {
            return Err(invalid(format!(
                "{} model expects {} latents, got {}",
                self.config.direction,
                self.dim(),
                xi.len()
            )));
        }
        Ok(())
    }

    fn ln_c(&self) -> f64 {
        (self.frame.pixel_volume() * self.config.rho0).ln()
    }

    /// Log expected counts per oriented pixel.
    pub fn log_lambda(&self, xi: &[f64]) -> Result<Vec<f64>> {
        self.check(xi)?;
        let f = self.f.realize(&xi[self.f_block()])?;
        let g = self.g.realize(&xi[self.g_block()])?;
        let h = match &self.h {
            Some(h) => Some(h.realize(&xi[self.h_block()])?),
            None => None,
        };
        let c = conditional(&g, h.as_deref(), &self.frame);
        let ny = self.frame.gy.n_pixels();
        let ln_c = self.ln_c();
        Ok(c.log_cond
            .iter()
            .enumerate()
            .map(|(k, l)| ln_c + f[k / ny] + l)
            .collect())
    }

    pub fn build_density(&self, xi: &[f64]) -> Result<DensityRealization> {
        self.check(xi)?;
        let fr = self.frame;
        let fv = self.f.realize(&xi[self.f_block()])?;
        let gv = self.g.realize(&xi[self.g_block()])?;
        let hv = match &self.h {
            Some(h) => h.realize(&xi[self.h_block()])?,
            None => vec![0.0; fr.n_pixels()],
        };
        let c = conditional(&gv, self.h.as_ref().map(|_| hv.as_slice()), &fr);
        let f = Field::new(vec![fr.gx], fv)?;
        let g = Field::new(vec![fr.gy], gv)?;
        let h = Field::on_2d(&fr, hv)?;
        let cond = Field::on_2d(&fr, c.log_cond.iter().map(|v| v.exp()).collect())?;
        let joint = joint_density(&f, &cond, self.config.rho0)?;
        Ok(DensityRealization {
            direction: self.config.direction,
            transposed: self.config.transposed,
            f,
            g,
            h,
            cond,
            joint,
        })
    }
}

/// Generative model bound to binned data: the Poisson likelihood of the
/// counts given the latent vector.
#[derive(Debug, Clone)]
pub struct CausalModel {
    model: GenerativeModel,
    counts: Vec<f64>,
    ln_fact: f64,
}

/// Linearization of a [`CausalModel`] at one latent point.
pub struct ModelPoint {
    f: FieldLinearization,
    g: FieldLinearization,
    h: Option<FieldLinearization>,
    w: Vec<f64>,
    p: Vec<f64>,
    lambda: Vec<f64>,
    sqrt_lambda: Vec<f64>,
    energy: f64,
    grad: Vec<f64>,
}

impl ModelPoint {
    /// Expected counts in the oriented frame.
    pub fn lambda(&self) -> &[f64] {
        &self.lambda
    }
}

impl CausalModel {
    /// `counts` must be binned on `config.grid` (x rows, y columns).
    pub fn new(config: ModelConfig, counts: &CountGrid) -> Result<Self> {
        if counts.axes() != config.grid.axes().as_slice() {
            return Err(invalid("counts are not binned on the model grid"));
        }
        let oriented = if config.transposed {
            counts.transposed()?
        } else {
            counts.clone()
        };
        let model = GenerativeModel::new(config)?;
        let ln_fact = oriented.counts().iter().map(|&n| ln_factorial(n)).sum();
        Ok(Self {
            model,
            counts: oriented.counts().iter().map(|&n| n as f64).collect(),
            ln_fact,
        })
    }

    pub fn generative(&self) -> &GenerativeModel {
        &self.model
    }

    pub fn config(&self) -> &ModelConfig {
        self.model.config()
    }

    /// Counts in the oriented frame.
    pub fn oriented_counts(&self) -> &[f64] {
        &self.counts
    }

    /// `log P(d, ξ)` up to the constant of the standard-normal prior.
    pub fn log_joint(&self, xi: &[f64]) -> f64 {
        -self.energy(xi) - 0.5 * xi.iter().map(|v| v * v).sum::<f64>()
    }

    fn poisson_energy(&self, log_lambda: &[f64]) -> f64 {
        let mut e = self.ln_fact;
        for (l, n) in log_lambda.iter().zip(&self.counts) {
            e += l.exp() - n * l;
        }
        if e.is_finite() {
            e
        } else {
            f64::INFINITY
        }
    }

    fn tangent_log(&self, p: &ModelPoint, d: &[f64]) -> Vec<f64> {
        let m = &self.model;
        let [nx, ny] = m.frame.shape();
        let df = m.f.tangent(&p.f, &d[m.f_block()]);
        let dg = m.g.tangent(&p.g, &d[m.g_block()]);
        let mut dq = vec![0.0; nx * ny];
        match (&m.h, &p.h) {
            (Some(hf), Some(hl)) => {
                let dh = hf.tangent(hl, &d[m.h_block()]);
                for j in 0..ny {
                    let mean: f64 = (0..nx).map(|i| p.w[i * ny + j] * dh[i * ny + j]).sum();
                    for i in 0..nx {
                        dq[i * ny + j] = dg[j] + dh[i * ny + j] - mean;
                    }
                }
            }
            _ => {
                for i in 0..nx {
                    dq[i * ny..(i + 1) * ny].copy_from_slice(&dg);
                }
            }
        }
        for i in 0..nx {
            let row = i * ny..(i + 1) * ny;
            let mean: f64 = p.p[row.clone()].iter().zip(&dq[row.clone()]).map(|(a, b)| a * b).sum();
            dq[row].iter_mut().for_each(|v| *v += df[i] - mean);
        }
        dq
    }

    fn adjoint_log(&self, p: &ModelPoint, u: &[f64]) -> Vec<f64> {
        let m = &self.model;
        let [nx, ny] = m.frame.shape();
        let mut f_star = vec![0.0; nx];
        let mut v = vec![0.0; nx * ny];
        for i in 0..nx {
            let s: f64 = u[i * ny..(i + 1) * ny].iter().sum();
            f_star[i] = s;
            for j in 0..ny {
                let k = i * ny + j;
                v[k] = u[k] - p.p[k] * s;
            }
        }
        let mut g_star = vec![0.0; ny];
        for i in 0..nx {
            for j in 0..ny {
                g_star[j] += v[i * ny + j];
            }
        }
        let mut out = Vec::with_capacity(m.dim());
        out.extend(m.f.adjoint(&p.f, &f_star));
        out.extend(m.g.adjoint(&p.g, &g_star));
        if let (Some(hf), Some(hl)) = (&m.h, &p.h) {
            let h_star: Vec<f64> = v
                .iter()
                .enumerate()
                .map(|(k, vk)| vk - p.w[k] * g_star[k % ny])
                .collect();
            out.extend(hf.adjoint(hl, &h_star));
        }
        out
    }
}

impl LikelihoodModel for CausalModel {
    type Point = ModelPoint;

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn data_dim(&self) -> usize {
        self.counts.len()
    }

    fn energy(&self, xi: &[f64]) -> f64 {
        match self.model.log_lambda(xi) {
            Ok(l) => self.poisson_energy(&l),
            Err(_) => f64::INFINITY,
        }
    }

    fn linearize(&self, xi: &[f64]) -> ModelPoint {
        let m = &self.model;
        assert_eq!(xi.len(), m.dim(), "latent dimension");
        let f = m.f.linearize(&xi[m.f_block()]);
        let g = m.g.linearize(&xi[m.g_block()]);
        let h = m.h.as_ref().map(|h| h.linearize(&xi[m.h_block()]));
        let c = conditional(&g.values, h.as_ref().map(|h| h.values.as_slice()), &m.frame);
        let ny = m.frame.gy.n_pixels();
        let ln_c = m.ln_c();
        let log_lambda: Vec<f64> = c
            .log_cond
            .iter()
            .enumerate()
            .map(|(k, l)| ln_c + f.values[k / ny] + l)
            .collect();
        let energy = self.poisson_energy(&log_lambda);
        let lambda: Vec<f64> = log_lambda.iter().map(|l| l.exp()).collect();
        let sqrt_lambda = lambda.iter().map(|l| l.sqrt()).collect();
        let mut point = ModelPoint {
            f,
            g,
            h,
            w: c.w,
            p: c.p,
            lambda,
            sqrt_lambda,
            energy,
            grad: Vec::new(),
        };
        let residual: Vec<f64> = point.lambda.iter().zip(&self.counts).map(|(l, n)| l - n).collect();
        point.grad = self.adjoint_log(&point, &residual);
        point
    }

    fn point_energy(&self, p: &ModelPoint) -> f64 {
        p.energy
    }

    fn gradient<'a>(&self, p: &'a ModelPoint) -> &'a [f64] {
        &p.grad
    }

    fn fisher(&self, p: &ModelPoint, v: &[f64]) -> Vec<f64> {
        let mut t = self.tangent_log(p, v);
        t.iter_mut().zip(&p.lambda).for_each(|(a, l)| *a *= l);
        self.adjoint_log(p, &t)
    }

    fn fisher_sqrt(&self, p: &ModelPoint, v: &[f64]) -> Vec<f64> {
        let mut t = self.tangent_log(p, v);
        t.iter_mut().zip(&p.sqrt_lambda).for_each(|(a, l)| *a *= l);
        t
    }

    fn fisher_sqrt_adjoint(&self, p: &ModelPoint, eta: &[f64]) -> Vec<f64> {
        let u: Vec<f64> = eta.iter().zip(&p.sqrt_lambda).map(|(e, l)| e * l).collect();
        self.adjoint_log(p, &u)
    }

    fn hyper_indices(&self) -> Vec<usize> {
        let m = &self.model;
        let (f, g, h) = m.fields();
        let mut out = Vec::new();
        for (start, field) in [(m.f_block().start, Some(f)), (m.g_block().start, Some(g)), (m.h_block().start, h)] {
            if let Some(field) = field {
                out.extend(start + field.n_modes()..start + field.dim());
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid1D;
    use crate::linalg::dot;
    use crate::rng;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn grid(nx: usize, ny: usize) -> Grid2D {
        Grid2D::new(
            Grid1D::new(nx, 0.0, 90.0 / nx as f64, 2.0).unwrap(),
            Grid1D::new(ny, 3.8, 5.12 / ny as f64, 2.0).unwrap(),
        )
    }

    fn normal(n: usize, rng: &mut impl Rng) -> Vec<f64> {
        (0..n).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn model(direction: Direction, g: Grid2D) -> GenerativeModel {
        GenerativeModel::new(ModelConfig::new(direction, g, HyperPrior::default(), 20.0)).unwrap()
    }

    fn counts(g: &Grid2D, seed: u64) -> CountGrid {
        let mut rng = rng::stream(seed, 0);
        let c = (0..g.n_pixels()).map(|_| rng.random_range(0..6u64)).collect();
        CountGrid::new(g.axes(), c).unwrap()
    }

    #[test]
    fn zero_latent_gives_uniform_conditional() {
        let g = grid(90, 128);
        let m = model(Direction::XtoY, g);
        let d = m.build_density(&vec![0.0; m.dim()]).unwrap();
        let l_y = 128.0 * 0.04;
        for v in d.cond.values() {
            assert!((v - 1.0 / l_y).abs() < 1e-12);
        }
        let total = crate::grid::integrate(&d.joint);
        assert!((total - 20.0 * 90.0).abs() < 1e-9);
        for v in d.joint.values() {
            assert!((v - 20.0 / l_y).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_are_normalized_and_marginal_matches() {
        let g = grid(30, 40);
        let m = model(Direction::XtoY, g);
        let mut rng = rng::stream(3, 0);
        for _ in 0..10 {
            let xi: Vec<f64> = normal(m.dim(), &mut rng).iter().map(|v| 2.0 * v).collect();
            let d = m.build_density(&xi).unwrap();
            for i in 0..30 {
                let s: f64 = (0..40).map(|j| d.cond.at(i, j)).sum::<f64>() * g.gy.step();
                assert!((s - 1.0).abs() < 1e-10);
                let marg: f64 = (0..40).map(|j| d.joint.at(i, j)).sum::<f64>() * g.gy.step();
                let expect = 20.0 * d.f.values()[i].exp();
                assert!((marg - expect).abs() < 1e-10 * expect);
            }
            assert!(d.joint.values().iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn gauge_invariance() {
        let g = grid(12, 16);
        let mut rng = rng::stream(4, 0);
        for _ in 0..20 {
            let gv = Field::new(vec![g.gy], normal(16, &mut rng)).unwrap();
            let hv = normal(g.n_pixels(), &mut rng);
            let shift = normal(16, &mut rng);
            let h = Field::on_2d(&g, hv.clone()).unwrap();
            let h2 = Field::on_2d(&g, hv.iter().enumerate().map(|(k, v)| v + shift[k % 16]).collect()).unwrap();
            let a = conditional_pdf(&gv, &h).unwrap();
            let b = conditional_pdf(&gv, &h2).unwrap();
            for (x, y) in a.values().iter().zip(b.values()) {
                assert!((x - y).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn independent_rows_are_identical() {
        let g = grid(10, 12);
        let m = model(Direction::Independent, g);
        assert!(m.h_block().is_empty());
        let mut rng = rng::stream(5, 0);
        let d = m.build_density(&normal(m.dim(), &mut rng)).unwrap();
        for i in 1..10 {
            for j in 0..12 {
                assert_eq!(d.cond.at(i, j), d.cond.at(0, j));
            }
        }
        let gv = d.g.clone();
        let zero = Field::zeros(g.axes());
        let c = conditional_pdf(&gv, &zero).unwrap();
        for i in 1..10 {
            for j in 0..12 {
                assert_eq!(c.at(i, j), c.at(0, j));
            }
        }
    }

    #[test]
    fn tight_variant_keeps_h_block() {
        let g = grid(6, 8);
        let mut cfg = ModelConfig::new(Direction::Independent, g, HyperPrior::default(), 1.0);
        cfg.tight_h_scale = Some(1e-3);
        let m = GenerativeModel::new(cfg).unwrap();
        assert!(!m.h_block().is_empty());
        assert!(m.dim() > model(Direction::Independent, g).dim());
    }

    #[test]
    fn swap_equivalence() {
        let g = grid(8, 8);
        let c = counts(&g, 6);
        let yx = CausalModel::new(ModelConfig::new(Direction::YtoX, g, HyperPrior::default(), 3.0), &c).unwrap();
        let gs = g.swapped();
        let cs = c.transposed().unwrap();
        let xy = CausalModel::new(
            ModelConfig::new(Direction::XtoY, gs, HyperPrior::default().swapped(), 3.0),
            &cs,
        )
        .unwrap();
        let mut rng = rng::stream(7, 0);
        for _ in 0..5 {
            let xi = normal(yx.dim(), &mut rng);
            assert_eq!(yx.energy(&xi), xy.energy(&xi));
        }
    }

    #[test]
    fn energy_matches_poisson_likelihood() {
        let g = grid(7, 9);
        let c = counts(&g, 8);
        let m = CausalModel::new(ModelConfig::new(Direction::XtoY, g, HyperPrior::default(), 4.0), &c).unwrap();
        let mut rng = rng::stream(9, 0);
        let xi = normal(m.dim(), &mut rng);
        let d = m.generative().build_density(&xi).unwrap();
        let lam = crate::likelihood::expected_counts(&d.joint);
        let ll = crate::likelihood::log_likelihood(&lam, &c).unwrap();
        assert!((ll + m.energy(&xi)).abs() < 1e-9 * ll.abs());
        let p = m.linearize(&xi);
        assert!((m.point_energy(&p) - m.energy(&xi)).abs() < 1e-9 * ll.abs());
    }

    fn check_derivatives(direction: Direction, seed: u64) {
        let g = grid(12, 12);
        let c = counts(&g, seed);
        let m = CausalModel::new(ModelConfig::new(direction, g, HyperPrior::default(), 2.0), &c).unwrap();
        let mut rng = rng::stream(seed, 1);
        let xi: Vec<f64> = normal(m.dim(), &mut rng).iter().map(|v| 0.5 * v).collect();
        let p = m.linearize(&xi);
        for _ in 0..5 {
            let d = normal(m.dim(), &mut rng);
            let eps = 1e-5;
            let plus: Vec<f64> = xi.iter().zip(&d).map(|(a, b)| a + eps * b).collect();
            let minus: Vec<f64> = xi.iter().zip(&d).map(|(a, b)| a - eps * b).collect();
            let fd = (m.energy(&plus) - m.energy(&minus)) / (2.0 * eps);
            let an = dot(m.gradient(&p), &d);
            assert!((fd - an).abs() < 1e-5 * an.abs().max(1.0), "{direction}: {fd} vs {an}");

            // Tangent against finite differences of the log expected counts.
            let lp = m.generative().log_lambda(&plus).unwrap();
            let lm = m.generative().log_lambda(&minus).unwrap();
            let t = m.tangent_log(&p, &d);
            for k in 0..t.len() {
                let fd = (lp[k] - lm[k]) / (2.0 * eps);
                assert!((fd - t[k]).abs() < 1e-5 * t[k].abs().max(1.0));
            }
            // Adjoint consistency.
            let u = normal(m.data_dim(), &mut rng);
            let lhs = dot(&u, &t);
            let rhs = dot(&m.adjoint_log(&p, &u), &d);
            assert!((lhs - rhs).abs() < 1e-9 * lhs.abs().max(1.0));
            // Fisher pieces.
            let fv = m.fisher(&p, &d);
            let s = m.fisher_sqrt(&p, &d);
            assert!((dot(&fv, &d) - dot(&s, &s)).abs() < 1e-9 * dot(&s, &s).max(1.0));
            let back = m.fisher_sqrt_adjoint(&p, &s);
            for (a, b) in back.iter().zip(&fv) {
                assert!((a - b).abs() < 1e-9 * b.abs().max(1.0));
            }
        }
    }

    #[test]
    fn derivatives_causal() {
        check_derivatives(Direction::XtoY, 10);
        check_derivatives(Direction::YtoX, 11);
    }

    #[test]
    fn derivatives_independent() {
        check_derivatives(Direction::Independent, 12);
    }

    #[test]
    fn dimension_errors() {
        let m = model(Direction::XtoY, grid(4, 4));
        assert!(m.build_density(&[0.0; 3]).is_err());
        let mut cfg = ModelConfig::new(Direction::XtoY, grid(4, 4), HyperPrior::default(), 1.0);
        cfg.transposed = true;
        assert!(GenerativeModel::new(cfg).is_err());
        assert!("sideways".parse::<Direction>().is_err());
        assert_eq!("y->x".parse::<Direction>().unwrap(), Direction::YtoX);
        assert_eq!(ModelConfig::default_rho0(2200), 22.0);
    }
}
