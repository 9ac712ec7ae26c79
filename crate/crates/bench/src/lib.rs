//! Fixtures shared by the benchmarks.

use causal_density::pipeline::{prepare, FitSettings, GridSpec, Prepared};
use causal_density::{make_truth, simulate, CausalModel, Direction, ModelConfig, Preset, TruthSpec};

/// Settings on an `nx × ny` grid spanning the usual age and load ranges.
pub fn settings(nx: usize, ny: usize) -> FitSettings {
    FitSettings {
        grid: GridSpec {
            nx,
            x_start: 0.0,
            x_step: 90.0 / nx as f64,
            ny,
            y_step: 5.12 / ny as f64,
            pad: 2.0,
        },
        ..FitSettings::default()
    }
}

/// Binned synthetic data drawn from a causal truth.
pub fn prepared(nx: usize, ny: usize, seed: u64) -> Prepared {
    let s = settings(nx, ny);
    let grid = s.grid.grid(s.threshold).expect("valid grid");
    let truth = make_truth(TruthSpec::new(Preset::Causal, 2000, seed), grid).expect("valid truth");
    let data = simulate(&truth, seed + 1, "bench").expect("simulation succeeds");
    prepare(&data, &s).expect("data above threshold")
}

pub fn model(prepared: &Prepared, direction: Direction) -> CausalModel {
    let s = FitSettings::default();
    let config = ModelConfig::new(direction, prepared.grid, s.priors, prepared.rho0);
    CausalModel::new(config, &prepared.counts).expect("valid model")
}

#[cfg(test)]
mod tests {
    use super::*;
    use causal_density::LikelihoodModel;

    #[test]
    fn fixtures_build() {
        let p = prepared(12, 16, 1);
        let m = model(&p, Direction::XtoY);
        assert!(m.energy(&vec![0.0; m.dim()]).is_finite());
    }
}
