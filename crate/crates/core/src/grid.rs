//! Regular grids, real harmonic (Hartley) transforms and midpoint quadrature.
//!
//! Fields live on regular pixel grids. The stationary priors are represented
//! on a periodic embedding of each axis that is `pad_factor` times longer than
//! the observed extent; synthesized fields are cropped back to the observed
//! pixels so the periodic wrap-around never couples opposite grid edges.
//!
//! The harmonic basis is the Hartley basis `cas(θ) = cos θ + sin θ`. It is real,
//! symmetric and self-inverse up to the number of modes, which keeps every
//! field latent a plain real vector and makes the adjoint of a synthesis the
//! synthesis itself.

use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// A regularly sampled axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    n_pixels: usize,
    start: f64,
    step: f64,
    pad_factor: f64,
    padded_len: usize,
}

impl Grid1D {
    /// Builds an axis of `n_pixels` cells of width `step` starting at `start`.
    ///
    /// The periodic embedding has `ceil(n_pixels * pad_factor)` cells.
    pub fn new(n_pixels: usize, start: f64, step: f64, pad_factor: f64) -> Result<Self> {
        if n_pixels < 2 {
            return Err(invalid(format!("grid needs at least 2 pixels, got {n_pixels}")));
        }
        if !(step > 0.0) || !step.is_finite() {
            return Err(invalid(format!("grid step must be positive, got {step}")));
        }
        if !(pad_factor >= 1.0) || !pad_factor.is_finite() {
            return Err(invalid(format!("pad factor must be >= 1, got {pad_factor}")));
        }
        if !start.is_finite() {
            return Err(invalid("grid start must be finite"));
        }
        // Guard against 90 * 2.0000000001 rounding up to 181.
        let raw = n_pixels as f64 * pad_factor;
        let padded_len = ((raw - 1e-9).ceil() as usize).max(n_pixels);
        Ok(Self {
            n_pixels,
            start,
            step,
            pad_factor,
            padded_len,
        })
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn pad_factor(&self) -> f64 {
        self.pad_factor
    }

    /// Number of cells of the periodic embedding.
    pub fn padded_len(&self) -> usize {
        self.padded_len
    }

    /// Length of the observed region, `n_pixels * step`.
    pub fn extent(&self) -> f64 {
        self.n_pixels as f64 * self.step
    }

    /// Length of the periodic box, `padded_len * step`.
    pub fn padded_extent(&self) -> f64 {
        self.padded_len as f64 * self.step
    }

    pub fn end(&self) -> f64 {
        self.start + self.extent()
    }

    pub fn center(&self, i: usize) -> f64 {
        self.start + (i as f64 + 0.5) * self.step
    }

    pub fn centers(&self) -> Vec<f64> {
        (0..self.n_pixels).map(|i| self.center(i)).collect()
    }

    /// Pixel containing `v`; pixel `i` covers `[start + i·step, start + (i+1)·step)`.
    pub fn pixel_of(&self, v: f64) -> Option<usize> {
        if !v.is_finite() || v < self.start {
            return None;
        }
        let i = ((v - self.start) / self.step).floor();
        if i < 0.0 || i >= self.n_pixels as f64 {
            return None;
        }
        let mut i = i as usize;
        // Rounding in the division can land one pixel off near an edge.
        if v < self.start + i as f64 * self.step && i > 0 {
            i -= 1;
        } else if i + 1 < self.n_pixels && v >= self.start + (i + 1) as f64 * self.step {
            i += 1;
        }
        Some(i)
    }

    /// Spatial frequency magnitude of Hartley index `j` of the padded axis.
    pub fn harmonic_k(&self, j: usize) -> f64 {
        let n = self.padded_len;
        let j = j % n;
        j.min(n - j) as f64 / self.padded_extent()
    }
}

/// Product of two independent axes; `gx` is the slow (row) index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid2D {
    pub gx: Grid1D,
    pub gy: Grid1D,
}

impl Grid2D {
    pub fn new(gx: Grid1D, gy: Grid1D) -> Self {
        Self { gx, gy }
    }

    pub fn n_pixels(&self) -> usize {
        self.gx.n_pixels() * self.gy.n_pixels()
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.gx.n_pixels(), self.gy.n_pixels()]
    }

    pub fn pixel_volume(&self) -> f64 {
        self.gx.step() * self.gy.step()
    }

    /// The same grid with the roles of the axes exchanged.
    pub fn swapped(&self) -> Self {
        Self {
            gx: self.gy,
            gy: self.gx,
        }
    }

    pub fn axes(&self) -> Vec<Grid1D> {
        vec![self.gx, self.gy]
    }
}

/// Distinct harmonic frequencies of a padded axis.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeSet {
    /// `k_j = j / L_padded` for `j = 0 ..= padded_len / 2`.
    pub k: Vec<f64>,
    /// Coefficient scale `1 / sqrt(L_padded)` that makes spectrum parameters
    /// independent of the box size.
    pub volume_factor: f64,
}

pub fn mode_set(grid: &Grid1D) -> ModeSet {
    let n = grid.padded_len();
    let l = grid.padded_extent();
    ModeSet {
        k: (0..=n / 2).map(|j| j as f64 / l).collect(),
        volume_factor: l.sqrt().recip(),
    }
}

/// Reusable n-dimensional Hartley transform.
///
/// `transform` computes `out[n] = Σ_j in[j] cas(2π Σ_a j_a n_a / N_a)`, which is
/// symmetric, so it is its own adjoint, and applying it twice multiplies by the
/// total number of cells.
#[derive(Clone)]
pub struct HartleyPlan {
    shape: Vec<usize>,
    ffts: Vec<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for HartleyPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HartleyPlan").field("shape", &self.shape).finish()
    }
}

impl HartleyPlan {
    pub fn new(shape: &[usize]) -> Self {
        let mut planner = FftPlanner::new();
        let ffts = shape.iter().map(|&n| planner.plan_fft_forward(n)).collect();
        Self {
            shape: shape.to_vec(),
            ffts,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn transform(&self, data: &mut [f64]) {
        assert_eq!(data.len(), self.len(), "Hartley input has the wrong size");
        let mut buf: Vec<Complex<f64>> = data.iter().map(|&v| Complex::new(v, 0.0)).collect();
        let total = buf.len();
        let mut stride = total;
        let mut lane = Vec::new();
        for (axis, &n) in self.shape.iter().enumerate() {
            stride /= n;
            let fft = &self.ffts[axis];
            if n == 1 {
                continue;
            }
            if stride == 1 {
                fft.process(&mut buf);
                continue;
            }
            lane.resize(n, Complex::new(0.0, 0.0));
            let block = n * stride;
            for outer in (0..total).step_by(block) {
                for inner in 0..stride {
                    let base = outer + inner;
                    for (t, slot) in lane.iter_mut().enumerate() {
                        *slot = buf[base + t * stride];
                    }
                    fft.process(&mut lane);
                    for (t, v) in lane.iter().enumerate() {
                        buf[base + t * stride] = *v;
                    }
                }
            }
        }
        for (d, c) in data.iter_mut().zip(&buf) {
            *d = c.re - c.im;
        }
    }
}

/// Copies the observed corner of a padded row-major array.
pub(crate) fn crop(padded: &[f64], padded_shape: &[usize], shape: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; shape.iter().product()];
    for_each_offset(shape, padded_shape, |dst, src| out[dst] = padded[src]);
    out
}

/// Adjoint of [`crop`]: embeds the observed array in zeros.
pub(crate) fn zero_pad(values: &[f64], shape: &[usize], padded_shape: &[usize]) -> Vec<f64> {
    let mut out = vec![0.0; padded_shape.iter().product()];
    for_each_offset(shape, padded_shape, |src, dst| out[dst] = values[src]);
    out
}

fn for_each_offset(shape: &[usize], padded_shape: &[usize], mut f: impl FnMut(usize, usize)) {
    let total: usize = shape.iter().product();
    let mut idx = vec![0usize; shape.len()];
    for flat in 0..total {
        let mut off = 0;
        for (a, &i) in idx.iter().enumerate() {
            off = off * padded_shape[a] + i;
        }
        f(flat, off);
        for a in (0..shape.len()).rev() {
            idx[a] += 1;
            if idx[a] < shape[a] {
                break;
            }
            idx[a] = 0;
        }
    }
}

/// Scalar values sampled on the pixel centers of a product grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Field {
    axes: Vec<Grid1D>,
    values: Vec<f64>,
}

impl Field {
    pub fn new(axes: Vec<Grid1D>, values: Vec<f64>) -> Result<Self> {
        let n: usize = axes.iter().map(Grid1D::n_pixels).product();
        if axes.is_empty() {
            return Err(invalid("a field needs at least one axis"));
        }
        if values.len() != n {
            return Err(invalid(format!(
                "field has {} values for {} pixels",
                values.len(),
                n
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("field values must be finite"));
        }
        Ok(Self { axes, values })
    }

    pub fn zeros(axes: Vec<Grid1D>) -> Self {
        let n = axes.iter().map(Grid1D::n_pixels).product();
        Self {
            axes,
            values: vec![0.0; n],
        }
    }

    pub fn on_2d(grid: &Grid2D, values: Vec<f64>) -> Result<Self> {
        Self::new(grid.axes(), values)
    }

    pub fn axes(&self) -> &[Grid1D] {
        &self.axes
    }

    pub fn shape(&self) -> Vec<usize> {
        self.axes.iter().map(Grid1D::n_pixels).collect()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn pixel_volume(&self) -> f64 {
        self.axes.iter().map(Grid1D::step).product()
    }

    /// Value at a 2-D pixel; panics on 1-D fields.
    pub fn at(&self, i: usize, j: usize) -> f64 {
        assert_eq!(self.axes.len(), 2);
        self.values[i * self.axes[1].n_pixels() + j]
    }
}

/// Midpoint-rule integral: sum of values times the pixel volume.
pub fn integrate(field: &Field) -> f64 {
    field.values.iter().sum::<f64>() * field.pixel_volume()
}

/// Synthesizes a real field from Hartley coefficients on the padded grid and
/// crops it to the observed pixels. A unit DC coefficient yields a field of ones.
pub fn harmonic_synthesize(coeffs: &[f64], axes: &[Grid1D]) -> Result<Field> {
    let padded: Vec<usize> = axes.iter().map(Grid1D::padded_len).collect();
    let shape: Vec<usize> = axes.iter().map(Grid1D::n_pixels).collect();
    let n_modes: usize = padded.iter().product();
    if coeffs.len() != n_modes {
        return Err(invalid(format!(
            "expected {n_modes} harmonic coefficients, got {}",
            coeffs.len()
        )));
    }
    let mut buf = coeffs.to_vec();
    HartleyPlan::new(&padded).transform(&mut buf);
    Field::new(axes.to_vec(), crop(&buf, &padded, &shape))
}

/// Inverse of the uncropped synthesis: recovers Hartley coefficients from
/// values on the full padded grid.
pub fn harmonic_analyze(padded_values: &[f64], padded_shape: &[usize]) -> Result<Vec<f64>> {
    let n: usize = padded_shape.iter().product();
    if padded_values.len() != n {
        return Err(invalid(format!(
            "expected {n} padded values, got {}",
            padded_values.len()
        )));
    }
    let mut buf = padded_values.to_vec();
    HartleyPlan::new(padded_shape).transform(&mut buf);
    let scale = 1.0 / n as f64;
    buf.iter_mut().for_each(|v| *v *= scale);
    Ok(buf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_hartley(input: &[f64], shape: &[usize]) -> Vec<f64> {
        let n: usize = shape.iter().product();
        let unravel = |mut f: usize| {
            let mut idx = vec![0; shape.len()];
            for a in (0..shape.len()).rev() {
                idx[a] = f % shape[a];
                f /= shape[a];
            }
            idx
        };
        (0..n)
            .map(|o| {
                let io = unravel(o);
                (0..n)
                    .map(|j| {
                        let ij = unravel(j);
                        let theta: f64 = (0..shape.len())
                            .map(|a| {
                                2.0 * std::f64::consts::PI * (ij[a] * io[a]) as f64
                                    / shape[a] as f64
                            })
                            .sum();
                        input[j] * (theta.cos() + theta.sin())
                    })
                    .sum()
            })
            .collect()
    }

    #[test]
    fn make_grid_examples() {
        let gx = Grid1D::new(90, 0.0, 1.0, 2.0).unwrap();
        assert_eq!(gx.padded_len(), 180);
        assert_eq!(gx.end(), 90.0);
        let gy = Grid1D::new(128, 3.8, 0.04, 2.0).unwrap();
        assert_eq!(gy.padded_len(), 256);
        assert!((gy.center(0) - 3.82).abs() < 1e-12);
        let g = Grid1D::new(2, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(g.padded_len(), 2);
    }

    #[test]
    fn make_grid_rejects_bad_input() {
        assert!(Grid1D::new(1, 0.0, 1.0, 1.0).is_err());
        assert!(Grid1D::new(4, 0.0, 0.0, 1.0).is_err());
        assert!(Grid1D::new(4, 0.0, -1.0, 1.0).is_err());
        assert!(Grid1D::new(4, 0.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn mode_set_examples() {
        let m = mode_set(&Grid1D::new(4, 0.0, 1.0, 1.0).unwrap());
        assert_eq!(m.k, vec![0.0, 0.25, 0.5]);
        let m = mode_set(&Grid1D::new(90, 0.0, 1.0, 2.0).unwrap());
        assert!((m.k[1] - 1.0 / 180.0).abs() < 1e-15);
        assert_eq!(m.k.iter().filter(|&&k| k == 0.0).count(), 1);
        assert!((m.volume_factor - 180f64.sqrt().recip()).abs() < 1e-15);
    }

    #[test]
    fn harmonic_k_is_symmetric() {
        let g = Grid1D::new(5, 0.0, 0.5, 2.0).unwrap();
        for j in 1..g.padded_len() {
            assert_eq!(g.harmonic_k(j), g.harmonic_k(g.padded_len() - j));
        }
    }

    #[test]
    fn pixel_of_is_half_open() {
        let g = Grid1D::new(128, 3.8, 0.04, 1.0).unwrap();
        assert_eq!(g.pixel_of(3.8), Some(0));
        assert_eq!(g.pixel_of(3.79), None);
        assert_eq!(g.pixel_of(3.82), Some(0));
        assert_eq!(g.pixel_of(g.end()), None);
        let g = Grid1D::new(10, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(g.pixel_of(1.0), Some(1));
        assert_eq!(g.pixel_of(9.999), Some(9));
    }

    #[test]
    fn hartley_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for shape in [vec![7], vec![8], vec![4, 6], vec![3, 2, 5]] {
            let n: usize = shape.iter().product();
            let input: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
            let mut fast = input.clone();
            HartleyPlan::new(&shape).transform(&mut fast);
            let slow = brute_hartley(&input, &shape);
            for (a, b) in fast.iter().zip(&slow) {
                assert!((a - b).abs() < 1e-11, "{shape:?}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn synthesize_zero_and_dc() {
        let g = Grid1D::new(6, 0.0, 1.0, 2.0).unwrap();
        let f = harmonic_synthesize(&vec![0.0; 12], &[g]).unwrap();
        assert!(f.values().iter().all(|&v| v == 0.0));
        let mut c = vec![0.0; 12];
        c[0] = 1.7;
        let f = harmonic_synthesize(&c, &[g]).unwrap();
        assert!(f.values().iter().all(|&v| (v - 1.7).abs() < 1e-14));
        assert!(harmonic_synthesize(&[0.0; 5], &[g]).is_err());
    }

    #[test]
    fn analyze_synthesize_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = Grid1D::new(9, 0.0, 1.0, 1.0).unwrap();
        let h = Grid1D::new(6, 0.0, 0.3, 1.0).unwrap();
        let c: Vec<f64> = (0..54).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let f = harmonic_synthesize(&c, &[g, h]).unwrap();
        let back = harmonic_analyze(f.values(), &[9, 6]).unwrap();
        for (a, b) in c.iter().zip(&back) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn integrate_examples() {
        let g = Grid1D::new(10, 0.0, 0.5, 1.0).unwrap();
        let f = Field::new(vec![g], vec![1.0; 10]).unwrap();
        assert!((integrate(&f) - 5.0).abs() < 1e-15);
        assert_eq!(integrate(&Field::zeros(vec![g])), 0.0);
        let g = Grid1D::new(1000, 0.0, 1e-3, 1.0).unwrap();
        let f = Field::new(vec![g], g.centers().iter().map(|x| x.exp()).collect()).unwrap();
        assert!((integrate(&f) - (1f64.exp() - 1.0)).abs() < 1e-3);
    }

    #[test]
    fn crop_and_pad_are_adjoint() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (shape, padded) = ([3usize, 4], [5usize, 8]);
        let a: Vec<f64> = (0..12).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..40).map(|_| rng.random()).collect();
        let lhs: f64 = zero_pad(&a, &shape, &padded).iter().zip(&b).map(|(x, y)| x * y).sum();
        let rhs: f64 = a.iter().zip(crop(&b, &padded, &shape)).map(|(x, y)| x * y).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]
            #[test]
            fn synthesis_is_linear(
                c1 in proptest::collection::vec(-1.0f64..1.0, 16),
                c2 in proptest::collection::vec(-1.0f64..1.0, 16),
                a in -3.0f64..3.0,
                b in -3.0f64..3.0,
            ) {
                let g = Grid1D::new(4, 0.0, 1.0, 1.0).unwrap();
                let h = Grid1D::new(2, 0.0, 1.0, 2.0).unwrap();
                let axes = [g, h];
                let mix: Vec<f64> = c1.iter().zip(&c2).map(|(x, y)| a * x + b * y).collect();
                let s = harmonic_synthesize(&mix, &axes).unwrap();
                let s1 = harmonic_synthesize(&c1, &axes).unwrap();
                let s2 = harmonic_synthesize(&c2, &axes).unwrap();
                for ((m, u), v) in s.values().iter().zip(s1.values()).zip(s2.values()) {
                    let expect = a * u + b * v;
                    prop_assert!((m - expect).abs() <= 1e-12 * (1.0 + expect.abs()));
                }
            }

            #[test]
            fn integrate_is_additive(
                u in proptest::collection::vec(-10.0f64..10.0, 12),
                v in proptest::collection::vec(-10.0f64..10.0, 12),
            ) {
                let g = Grid1D::new(12, 1.0, 0.25, 1.0).unwrap();
                let sum: Vec<f64> = u.iter().zip(&v).map(|(a, b)| a + b).collect();
                let lhs = integrate(&Field::new(vec![g], sum).unwrap());
                let rhs = integrate(&Field::new(vec![g], u).unwrap())
                    + integrate(&Field::new(vec![g], v).unwrap());
                prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
            }
        }
    }
}
