//! Fitting and model comparison on a dataset.

use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::data::{apply_threshold, permute_y, Dataset};
use crate::error::{invalid, Result};
use crate::evidence::{delta_evidence, estimate_elbo, summarize, DeltaEvidence, ElboEstimate, EvidenceConfig};
use crate::grid::{Grid1D, Grid2D};
use crate::inference::{run_mgvi, InferenceConfig, PosteriorApprox};
use crate::likelihood::{bin_data, CountGrid};
use crate::matern::HyperPrior;
use crate::model::{CausalModel, Direction, ModelConfig};
use crate::rng;

/// Regular grid layout. The y axis starts at the threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub nx: usize,
    pub x_start: f64,
    pub x_step: f64,
    pub ny: usize,
    pub y_step: f64,
    pub pad: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            nx: 90,
            x_start: 0.0,
            x_step: 1.0,
            ny: 128,
            y_step: 0.04,
            pad: 2.0,
        }
    }
}

impl GridSpec {
    pub fn grid(&self, threshold: f64) -> Result<Grid2D> {
        Ok(Grid2D::new(
            Grid1D::new(self.nx, self.x_start, self.x_step, self.pad)?,
            Grid1D::new(self.ny, threshold, self.y_step, self.pad)?,
        ))
    }
}

/// Everything that determines a fit besides the data and the seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitSettings {
    pub threshold: f64,
    pub grid: GridSpec,
    pub priors: HyperPrior,
    pub inference: InferenceConfig,
    pub evidence: EvidenceConfig,
    /// Defaults to N/100 with N the number of points above the threshold.
    pub rho0: Option<f64>,
    /// Use the tight-prior variant of the independent model.
    pub tight_h_scale: Option<f64>,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self {
            threshold: 3.8,
            grid: GridSpec::default(),
            priors: HyperPrior::default(),
            inference: InferenceConfig::default(),
            evidence: EvidenceConfig::default(),
            rho0: None,
            tight_h_scale: None,
        }
    }
}

/// Filtered and binned data ready for fitting.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub grid: Grid2D,
    pub counts: CountGrid,
    pub rho0: f64,
}

pub fn prepare(data: &Dataset, settings: &FitSettings) -> Result<Prepared> {
    let dataset = apply_threshold(data, settings.threshold);
    if dataset.is_empty() {
        return Err(invalid(format!("no data above the threshold {}", settings.threshold)));
    }
    let grid = settings.grid.grid(settings.threshold)?;
    let counts = bin_data(&dataset, &grid);
    if counts.discarded > 0 {
        warn!("binning discarded={} points outside the grid", counts.discarded);
    }
    let rho0 = settings.rho0.unwrap_or_else(|| ModelConfig::default_rho0(dataset.len()));
    Ok(Prepared {
        dataset,
        grid,
        counts,
        rho0,
    })
}

/// A fitted model.
pub struct Fit {
    pub model: CausalModel,
    pub posterior: PosteriorApprox,
    pub elbo: ElboEstimate,
}

fn role_tag(direction: Direction) -> u64 {
    match direction {
        Direction::Independent => 2,
        _ => 1,
    }
}

/// Fits one model. `transposed` only matters for the independent model and
/// selects the orientation it is compared in.
pub fn fit(prepared: &Prepared, direction: Direction, transposed: bool, settings: &FitSettings, seed: u64) -> Result<Fit> {
    let mut config = ModelConfig::new(direction, prepared.grid, settings.priors, prepared.rho0);
    if direction == Direction::Independent {
        config.transposed = transposed;
        config.tight_h_scale = settings.tight_h_scale;
    }
    let model = CausalModel::new(config, &prepared.counts)?;
    // Seeds depend on the role of the model, not on the orientation, so a
    // y → x fit on D replays an x → y fit on the transposed D.
    let tag = role_tag(direction);
    let inference = InferenceConfig {
        seed: rng::derive_seed(seed, tag),
        ..settings.inference
    };
    let posterior = run_mgvi(&model, &inference)?;
    let elbo = estimate_elbo(
        &posterior,
        &model,
        &settings.evidence,
        rng::derive_seed(seed, 100 + tag),
        &prepared.dataset.label,
    )?;
    info!(
        "fit direction={} transposed={} elbo={:.4} stderr={:.4} dim={}",
        direction, transposed, elbo.value, elbo.stderr, elbo.dim
    );
    Ok(Fit { model, posterior, elbo })
}

/// One row of a comparison table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRecord {
    pub dataset_label: String,
    pub direction: Direction,
    pub delta: f64,
    pub stderr: f64,
    pub elbo_causal: f64,
    pub elbo_causal_stderr: f64,
    pub elbo_indep: f64,
    pub elbo_indep_stderr: f64,
    pub odds: f64,
    pub n_samples: usize,
    pub probes: usize,
    pub seed: u64,
}

impl ComparisonRecord {
    fn new(d: &DeltaEvidence, causal: &ElboEstimate, indep: &ElboEstimate, seed: u64) -> Self {
        Self {
            dataset_label: d.dataset_label.clone(),
            direction: d.direction,
            delta: d.delta,
            stderr: d.stderr,
            elbo_causal: causal.value,
            elbo_causal_stderr: causal.stderr,
            elbo_indep: indep.value,
            elbo_indep_stderr: indep.stderr,
            odds: d.odds(),
            n_samples: causal.n_samples,
            probes: causal.log_det.probes.max(indep.log_det.probes),
            seed,
        }
    }
}

/// ΔE of one causal direction against the independent model in the same
/// orientation.
pub fn compare_direction(prepared: &Prepared, direction: Direction, settings: &FitSettings, seed: u64) -> Result<ComparisonRecord> {
    let transposed = match direction {
        Direction::XtoY => false,
        Direction::YtoX => true,
        Direction::Independent => return Err(invalid("compare needs a causal direction")),
    };
    let causal = fit(prepared, direction, transposed, settings, seed)?;
    let indep = fit(prepared, Direction::Independent, transposed, settings, seed)?;
    let d = delta_evidence(&causal.elbo, &indep.elbo, direction)?;
    Ok(ComparisonRecord::new(&d, &causal.elbo, &indep.elbo, seed))
}

pub fn compare(data: &Dataset, directions: &[Direction], settings: &FitSettings, seed: u64) -> Result<Vec<ComparisonRecord>> {
    let prepared = prepare(data, settings)?;
    directions
        .iter()
        .map(|&d| compare_direction(&prepared, d, settings, seed))
        .collect()
}

/// Outcome of one permutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullRow {
    pub index: usize,
    pub permutation_seed: u64,
    pub record: Option<ComparisonRecord>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NullTest {
    pub rows: Vec<NullRow>,
    /// Over the successful permutations.
    pub mean: Option<f64>,
    pub spread: Option<f64>,
}

/// Refits `x → y` against independence on `n_permutations` copies of the data
/// with shuffled y values. Failures are recorded per permutation.
pub fn randomization_null_test(
    data: &Dataset,
    n_permutations: usize,
    settings: &FitSettings,
    seed: u64,
) -> Result<NullTest> {
    if n_permutations == 0 {
        return Err(invalid("at least one permutation is required"));
    }
    let mut rows = Vec::with_capacity(n_permutations);
    for index in 0..n_permutations {
        let permutation_seed = rng::derive_seed(seed, 1000 + index as u64);
        let result = permute_y(data, permutation_seed).and_then(|p| compare(&p, &[Direction::XtoY], settings, seed));
        let row = match result {
            Ok(mut r) => NullRow {
                index,
                permutation_seed,
                record: r.pop(),
                error: None,
            },
            Err(e) => {
                warn!("null_test permutation={index} error={e}");
                NullRow {
                    index,
                    permutation_seed,
                    record: None,
                    error: Some(e.to_string()),
                }
            }
        };
        rows.push(row);
    }
    let deltas: Vec<DeltaEvidence> = rows
        .iter()
        .filter_map(|r| r.record.as_ref())
        .map(|r| DeltaEvidence {
            dataset_label: r.dataset_label.clone(),
            direction: r.direction,
            delta: r.delta,
            stderr: r.stderr,
            elbo_causal: r.elbo_causal,
            elbo_indep: r.elbo_indep,
        })
        .collect();
    let summary = summarize(&deltas);
    Ok(NullTest {
        rows,
        mean: summary.map(|s| s.0),
        spread: summary.map(|s| s.1),
    })
}
