use causal_density::inference::posterior_moments;
use causal_density::mkde::{mkde_fit, mkde_marginal, MkdeConfig};
use causal_density::{CountGrid, Grid1D, InferenceConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

/// Two overlapping Gaussian bumps with unit total mass on `[0, 1)²`.
fn ground_truth(axes: &[Grid1D], n_points: f64) -> Vec<f64> {
    let bump = |x: f64, y: f64, mx: f64, my: f64, s: f64| {
        (-((x - mx).powi(2) + (y - my).powi(2)) / (2.0 * s * s)).exp() / (2.0 * std::f64::consts::PI * s * s)
    };
    let mut rho = Vec::new();
    for x in axes[0].centers() {
        for y in axes[1].centers() {
            rho.push(0.6 * bump(x, y, 0.35, 0.4, 0.12) + 0.4 * bump(x, y, 0.65, 0.65, 0.1) + 0.05);
        }
    }
    let vol = axes[0].step() * axes[1].step();
    let total: f64 = rho.iter().sum::<f64>() * vol;
    rho.iter().map(|r| r * n_points / total).collect()
}

#[test]
fn smooth_ground_truth_is_recovered() {
    let axes = vec![Grid1D::new(32, 0.0, 1.0 / 32.0, 2.0).unwrap(), Grid1D::new(32, 0.0, 1.0 / 32.0, 2.0).unwrap()];
    let truth = ground_truth(&axes, 5000.0);
    let vol = axes[0].step() * axes[1].step();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let counts: Vec<u64> = truth.iter().map(|r| Poisson::new(r * vol).unwrap().sample(&mut rng) as u64).collect();
    let counts = CountGrid::new(axes.clone(), counts).unwrap();
    let t = std::time::Instant::now();
    let fit = mkde_fit(&counts, &MkdeConfig::default(), &InferenceConfig::default()).unwrap();
    let (mean, std) = posterior_moments(&fit.posterior, |s| fit.model.density(s).unwrap()).unwrap();
    let inside = truth.iter().zip(mean.iter().zip(&std)).filter(|(t, (m, s))| (*t - *m).abs() <= 2.0 * *s).count();
    let frac = inside as f64 / truth.len() as f64;
    let mx = mkde_marginal(&fit.model, &fit.posterior, &[0]).unwrap();
    let tx: Vec<f64> = (0..32).map(|i| (0..32).map(|j| truth[i * 32 + j]).sum::<f64>() * axes[1].step()).collect();
    let peak = tx.iter().copied().fold(0.0, f64::max);
    let rmse = (tx.iter().zip(&mx.mean).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 32.0).sqrt();
    eprintln!("inside {frac:.3} rmse/peak {:.4} time {:.1}s", rmse / peak, t.elapsed().as_secs_f64());
    assert!(frac >= 0.9);
    assert!(rmse <= 0.15 * peak);
}
