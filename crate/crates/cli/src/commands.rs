//! The subcommands. Each writes `results.json` plus its own files into the
//! output directory.

use std::path::{Path, PathBuf};

use causal_density::inference::moments;
use causal_density::pipeline::{self, compare_direction, Prepared};
use causal_density::{
    load_dataset, make_truth, project_infectivity, randomization_null_test, save_dataset, ComparisonRecord,
    Dataset, Direction, ElboEstimate, Field, GenerativeModel, InfectivityProfile, ModelConfig, NullTest,
    PosteriorApprox, Truth,
};
use log::{info, warn};
use serde::{Deserialize, Serialize};

use crate::output::{heatmap_svg, line_svg, OutputDir};
use crate::{CliError, Resolved};

fn load_datasets(resolved: &Resolved) -> Result<Vec<Dataset>, CliError> {
    let config = &resolved.config;
    if config.data.is_empty() {
        return Err(CliError::Usage("no dataset given (--data or `data` in the config)".into()));
    }
    config
        .data
        .iter()
        .enumerate()
        .map(|(k, path)| {
            let loaded = load_dataset(path, resolved.strict_parse).map_err(CliError::data)?;
            if !loaded.malformed_lines.is_empty() {
                warn!(
                    "data path={} skipped_lines={:?}",
                    path.display(),
                    loaded.malformed_lines
                );
            }
            let mut dataset = loaded.dataset;
            if let Some(label) = config.label(k) {
                dataset.label = label.to_owned();
            }
            Ok(dataset)
        })
        .collect()
}

fn prepare(data: &Dataset, resolved: &Resolved) -> Result<Prepared, CliError> {
    pipeline::prepare(data, &resolved.config.settings()).map_err(CliError::data)
}

fn parse_direction(s: Option<&str>, default: Direction) -> Result<Direction, CliError> {
    match s {
        Some(s) => s.parse().map_err(CliError::config),
        None => Ok(default),
    }
}

/// What `project` needs to rebuild a fitted model.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SavedFit {
    pub seed: u64,
    pub dataset_label: String,
    pub n_points: usize,
    pub model: ModelConfig,
    pub posterior: PosteriorApprox,
    pub elbo: ElboEstimate,
}

#[derive(Serialize)]
struct FitResults<'a> {
    command: &'static str,
    seed: u64,
    dataset_label: &'a str,
    n_points: usize,
    threshold: f64,
    direction: Direction,
    elbo: &'a ElboEstimate,
    iterations: usize,
    final_kl: Option<f64>,
}

fn field_moments(samples: &[Field]) -> Result<(Field, Field), CliError> {
    let values: Vec<Vec<f64>> = samples.iter().map(|f| f.values().to_vec()).collect();
    let (mean, std) = moments(&values).map_err(CliError::fitting)?;
    let axes = samples[0].axes().to_vec();
    Ok((
        Field::new(axes.clone(), mean).map_err(CliError::fitting)?,
        Field::new(axes, std).map_err(CliError::fitting)?,
    ))
}

pub fn fit(resolved: &Resolved, out: &mut OutputDir) -> Result<(), CliError> {
    let datasets = load_datasets(resolved)?;
    if datasets.len() != 1 {
        return Err(CliError::Usage("fit takes exactly one dataset".into()));
    }
    let data = &datasets[0];
    let direction = parse_direction(resolved.config.direction.as_deref(), Direction::XtoY)?;
    let settings = resolved.config.settings();
    let prepared = prepare(data, resolved)?;
    let fitted = pipeline::fit(&prepared, direction, false, &settings, resolved.seed).map_err(CliError::fitting)?;
    let generative = fitted.model.generative();
    let mut joints = Vec::new();
    let mut conds = Vec::new();
    for s in fitted.posterior.samples() {
        let d = generative.build_density(&s).map_err(CliError::fitting)?;
        joints.push(d.joint_xy());
        conds.push(d.cond);
    }
    let (joint_mean, joint_std) = field_moments(&joints)?;
    let (cond_mean, cond_std) = field_moments(&conds)?;
    let cond_axes = if direction == Direction::YtoX { ["y", "x"] } else { ["x", "y"] };
    let seed = resolved.seed;
    out.grid("joint_mean.csv", &format!("joint_density_mean seed={seed}"), ["x", "y"], &joint_mean)?;
    out.grid("joint_std.csv", &format!("joint_density_std seed={seed}"), ["x", "y"], &joint_std)?;
    out.grid("conditional_mean.csv", &format!("conditional_mean seed={seed}"), cond_axes, &cond_mean)?;
    out.grid("conditional_std.csv", &format!("conditional_std seed={seed}"), cond_axes, &cond_std)?;
    if resolved.plots {
        out.write("joint_mean.svg", &heatmap_svg("posterior mean density", ["x", "y"], &joint_mean))?;
        let title = format!("posterior mean p({}|{})", cond_axes[1], cond_axes[0]);
        out.write("conditional_mean.svg", &heatmap_svg(&title, cond_axes, &cond_mean))?;
    }
    let saved = SavedFit {
        seed,
        dataset_label: prepared.dataset.label.clone(),
        n_points: prepared.dataset.len(),
        model: fitted.model.config().clone(),
        posterior: fitted.posterior.clone(),
        elbo: fitted.elbo.clone(),
    };
    out.json("posterior.json", &saved)?;
    let results = FitResults {
        command: "fit",
        seed,
        dataset_label: &saved.dataset_label,
        n_points: saved.n_points,
        threshold: settings.threshold,
        direction,
        elbo: &fitted.elbo,
        iterations: fitted.posterior.history.len(),
        final_kl: fitted.posterior.history.last().and_then(|h| h.kl.last().copied()),
    };
    out.json("results.json", &results)?;
    Ok(())
}

#[derive(Serialize)]
struct DatasetComparison {
    dataset_label: String,
    n_points: usize,
    records: Vec<ComparisonRecord>,
}

#[derive(Serialize)]
struct CompareResults {
    command: &'static str,
    seed: u64,
    threshold: f64,
    datasets: Vec<DatasetComparison>,
}

pub fn compare(resolved: &Resolved, out: &mut OutputDir) -> Result<(), CliError> {
    let datasets = load_datasets(resolved)?;
    let directions = match resolved.config.direction.as_deref() {
        None => vec![Direction::XtoY, Direction::YtoX],
        Some(s) => match parse_direction(Some(s), Direction::XtoY)? {
            Direction::Independent => {
                return Err(CliError::Config("compare needs a causal direction".into()));
            }
            d => vec![d],
        },
    };
    let settings = resolved.config.settings();
    let mut rows = Vec::new();
    for data in &datasets {
        let prepared = prepare(data, resolved)?;
        let records = directions
            .iter()
            .map(|&d| compare_direction(&prepared, d, &settings, resolved.seed).map_err(CliError::fitting))
            .collect::<Result<Vec<_>, _>>()?;
        for r in &records {
            info!(
                "compare dataset={} direction={} delta={:.3} stderr={:.3}",
                r.dataset_label, r.direction, r.delta, r.stderr
            );
        }
        rows.push(DatasetComparison {
            dataset_label: prepared.dataset.label.clone(),
            n_points: prepared.dataset.len(),
            records,
        });
    }
    out.json(
        "results.json",
        &CompareResults {
            command: "compare",
            seed: resolved.seed,
            threshold: settings.threshold,
            datasets: rows,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct DatasetNullTest {
    dataset_label: String,
    n_points: usize,
    null_test: NullTest,
}

#[derive(Serialize)]
struct NullTestResults {
    command: &'static str,
    seed: u64,
    threshold: f64,
    permutations: usize,
    datasets: Vec<DatasetNullTest>,
}

pub fn nulltest(resolved: &Resolved, out: &mut OutputDir) -> Result<(), CliError> {
    let datasets = load_datasets(resolved)?;
    let settings = resolved.config.settings();
    let permutations = resolved.config.evidence.permutations;
    let mut rows = Vec::new();
    for data in &datasets {
        let prepared = prepare(data, resolved)?;
        let null_test = randomization_null_test(&prepared.dataset, permutations, &settings, resolved.seed)
            .map_err(CliError::fitting)?;
        if null_test.mean.is_none() {
            return Err(CliError::Numerical(format!(
                "every permutation of {} failed",
                prepared.dataset.label
            )));
        }
        rows.push(DatasetNullTest {
            dataset_label: prepared.dataset.label.clone(),
            n_points: prepared.dataset.len(),
            null_test,
        });
    }
    out.json(
        "results.json",
        &NullTestResults {
            command: "nulltest",
            seed: resolved.seed,
            threshold: settings.threshold,
            permutations,
            datasets: rows,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct SimulateResults<'a> {
    command: &'static str,
    seed: u64,
    truth: &'a TruthSummary,
    n_points: usize,
}

#[derive(Serialize)]
struct TruthSummary {
    preset: String,
    expected_points: usize,
    truth_seed: u64,
    draw_seed: u64,
    stored: bool,
}

pub fn simulate(resolved: &Resolved, out: &mut OutputDir) -> Result<(), CliError> {
    let config = &resolved.config;
    let seed = resolved.seed;
    let (truth, stored) = match &config.simulate.truth {
        Some(path) => (load_truth(path)?, true),
        None => {
            let spec = config.simulate.spec(seed)?;
            let grid = config.grid.grid(config.threshold).map_err(CliError::config)?;
            (make_truth(spec, grid).map_err(CliError::config)?, false)
        }
    };
    let draw_seed = causal_density::rng::derive_seed(seed, 1);
    let label = format!("simulated_{}", config.simulate.preset);
    let data = causal_density::simulate(&truth, draw_seed, &label).map_err(CliError::fitting)?;
    let path = out.root().join("data.csv");
    save_dataset(&data, &path).map_err(CliError::config)?;
    out.record("data.csv");
    out.json("truth.json", &truth)?;
    let names = ["x", "y"];
    out.grid("truth_joint.csv", &format!("truth_joint_density seed={seed}"), names, &truth.joint)?;
    out.grid("truth_conditional.csv", &format!("truth_conditional seed={seed}"), names, &truth.cond)?;
    if resolved.plots {
        out.write("truth_joint.svg", &heatmap_svg("true density", names, &truth.joint))?;
    }
    let summary = TruthSummary {
        preset: format!("{:?}", truth.spec.preset).to_lowercase(),
        expected_points: truth.spec.n_points,
        truth_seed: truth.spec.seed,
        draw_seed,
        stored,
    };
    out.json(
        "results.json",
        &SimulateResults {
            command: "simulate",
            seed,
            truth: &summary,
            n_points: data.len(),
        },
    )?;
    Ok(())
}

fn load_truth(path: &Path) -> Result<Truth, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_fit(path: &Path) -> Result<SavedFit, CliError> {
    let file: PathBuf = if path.is_dir() {
        path.join("posterior.json")
    } else {
        path.to_path_buf()
    };
    if !file.is_file() {
        return Err(CliError::Config(format!("{}: file not found", file.display())));
    }
    let text = std::fs::read_to_string(&file).map_err(|e| CliError::Data(format!("{}: {e}", file.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", file.display())))
}

#[derive(Serialize)]
struct ShiftedProfile {
    shift: f64,
    profile: InfectivityProfile,
}

#[derive(Serialize)]
struct ProjectResults {
    command: &'static str,
    seed: u64,
    fit_seed: u64,
    dataset_label: String,
    direction: Direction,
    profiles: Vec<ShiftedProfile>,
}

pub fn project(resolved: &Resolved, fit: &Path, out: &mut OutputDir) -> Result<(), CliError> {
    let saved = load_fit(fit)?;
    let model = GenerativeModel::new(saved.model.clone()).map_err(CliError::data)?;
    let curve = resolved.config.infectivity.curve()?;
    let shifts = &resolved.config.infectivity.shifts;
    if shifts.is_empty() {
        return Err(CliError::Config("at least one curve shift is required".into()));
    }
    let profiles = shifts
        .iter()
        .map(|&shift| {
            let c = curve.with_shift(shift);
            project_infectivity(&saved.posterior, &model, &c)
                .map(|profile| ShiftedProfile { shift, profile })
                .map_err(CliError::fitting)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut header = vec!["age".to_owned()];
    for p in &profiles {
        header.push(format!("mean_shift{}", p.shift));
        header.push(format!("std_shift{}", p.shift));
    }
    let mut table = format!("# infectivity by age, seed={}\n{}\n", resolved.seed, header.join(","));
    for (k, age) in profiles[0].profile.ages.iter().enumerate() {
        let mut row = vec![age.to_string()];
        for p in &profiles {
            row.push(p.profile.mean[k].to_string());
            row.push(p.profile.std[k].to_string());
        }
        table.push_str(&row.join(","));
        table.push('\n');
    }
    out.write("infectivity.csv", &table)?;
    if resolved.plots {
        let p = &profiles[0].profile;
        out.write(
            "infectivity.svg",
            &line_svg("infectivity by age", "x", "I(x)", &p.ages, &p.mean, &p.std),
        )?;
    }
    out.json(
        "results.json",
        &ProjectResults {
            command: "project",
            seed: resolved.seed,
            fit_seed: saved.seed,
            dataset_label: saved.dataset_label,
            direction: saved.model.direction,
            profiles,
        },
    )?;
    Ok(())
}
