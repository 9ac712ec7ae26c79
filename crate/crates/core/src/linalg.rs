//! Matrix-free Krylov methods for symmetric positive-definite operators.

use nalgebra::{DMatrix, SymmetricEigen};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final `|b − A x| / |b|`.
    pub residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` by conjugate gradients, starting from zero and stopping
/// once the relative residual drops below `tol`.
pub fn conjugate_gradient<F>(apply: F, b: &[f64], tol: f64, max_iter: usize) -> CgOutcome
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return CgOutcome {
            x,
            iterations: 0,
            residual: 0.0,
            converged: true,
        };
    }
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    let mut iterations = 0;
    while iterations < max_iter {
        if rr.sqrt() <= tol * bnorm {
            break;
        }
        let ap = apply(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            // Not positive definite along p (or numerically zero): stop here.
            break;
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        p.iter_mut().zip(&r).for_each(|(pi, ri)| *pi = ri + beta * *pi);
        iterations += 1;
    }
    let residual = rr.sqrt() / bnorm;
    CgOutcome {
        x,
        iterations,
        residual,
        converged: residual <= tol,
    }
}

/// Tridiagonal projection produced by a Lanczos run.
#[derive(Debug, Clone)]
pub struct Lanczos {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// Orthonormal Krylov basis, one vector per step.
    pub basis: Vec<Vec<f64>>,
}

impl Lanczos {
    pub fn order(&self) -> usize {
        self.alpha.len()
    }

    /// Eigenvalues and eigenvectors of the tridiagonal matrix.
    pub fn ritz(&self) -> (Vec<f64>, DMatrix<f64>) {
        let m = self.order();
        let mut t = DMatrix::zeros(m, m);
        for i in 0..m {
            t[(i, i)] = self.alpha[i];
            if i + 1 < m {
                t[(i, i + 1)] = self.beta[i];
                t[(i + 1, i)] = self.beta[i];
            }
        }
        let eig = SymmetricEigen::new(t);
        (eig.eigenvalues.iter().copied().collect(), eig.eigenvectors)
    }

    /// Gauss quadrature estimate of `zᵀ f(A) z` for the start vector `z`.
    pub fn quadrature(&self, start_norm_sq: f64, f: impl Fn(f64) -> f64) -> f64 {
        let (theta, u) = self.ritz();
        theta
            .iter()
            .enumerate()
            .map(|(k, &t)| u[(0, k)].powi(2) * f(t))
            .sum::<f64>()
            * start_norm_sq
    }
}

/// Runs at most `order` Lanczos steps with full reorthogonalization.
///
/// Stops early when the Krylov space becomes invariant.
pub fn lanczos<F>(apply: F, start: &[f64], order: usize) -> Lanczos
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let n = start.len();
    let order = order.min(n).max(1);
    let s = norm(start);
    let mut q: Vec<f64> = start.iter().map(|v| v / s).collect();
    let mut alpha = Vec::with_capacity(order);
    let mut beta = Vec::with_capacity(order);
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(order);
    for step in 0..order {
        let mut w = apply(&q);
        let a = dot(&q, &w);
        alpha.push(a);
        basis.push(q);
        // Two passes of Gram-Schmidt against the whole basis.
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                axpy(-c, v, &mut w);
            }
        }
        let b = norm(&w);
        if step + 1 == order || b <= 1e-12 * a.abs().max(1.0) {
            break;
        }
        beta.push(b);
        q = w.iter().map(|v| v / b).collect();
    }
    beta.truncate(alpha.len().saturating_sub(1));
    Lanczos { alpha, beta, basis }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn spd(n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() - 0.5);
        &a * a.transpose() + DMatrix::identity(n, n)
    }

    fn apply(m: &DMatrix<f64>) -> impl Fn(&[f64]) -> Vec<f64> + '_ {
        move |v| (m * nalgebra::DVector::from_column_slice(v)).iter().copied().collect()
    }

    #[test]
    fn cg_solves_spd_system() {
        let m = spd(30, 1);
        let b: Vec<f64> = (0..30).map(|i| (i as f64).sin()).collect();
        let out = conjugate_gradient(apply(&m), &b, 1e-12, 200);
        assert!(out.converged);
        let r = apply(&m)(&out.x);
        for (a, c) in r.iter().zip(&b) {
            assert!((a - c).abs() < 1e-9);
        }
    }

    #[test]
    fn cg_reports_non_convergence() {
        let m = spd(30, 2);
        let b = vec![1.0; 30];
        let out = conjugate_gradient(apply(&m), &b, 1e-14, 3);
        assert!(!out.converged);
        assert_eq!(out.iterations, 3);
        assert!(out.residual > 1e-14);
    }

    #[test]
    fn lanczos_quadrature_recovers_log_det_contribution() {
        let m = spd(12, 3);
        let z: Vec<f64> = (0..12).map(|i| if i % 3 == 0 { 1.0 } else { -1.0 }).collect();
        let lz = lanczos(apply(&m), &z, 12);
        let est = lz.quadrature(dot(&z, &z), f64::ln);
        let eig = SymmetricEigen::new(m.clone());
        let zv = nalgebra::DVector::from_column_slice(&z);
        let exact: f64 = (0..12)
            .map(|k| eig.eigenvectors.column(k).dot(&zv).powi(2) * eig.eigenvalues[k].ln())
            .sum();
        assert!((est - exact).abs() < 1e-8, "{est} vs {exact}");
    }

    #[test]
    fn lanczos_stops_on_invariant_subspace() {
        let m = DMatrix::<f64>::identity(8, 8) * 2.0;
        let lz = lanczos(apply(&m), &[1.0; 8], 5);
        assert_eq!(lz.order(), 1);
        assert!((lz.quadrature(8.0, f64::ln) - 8.0 * 2f64.ln()).abs() < 1e-12);
    }
}
