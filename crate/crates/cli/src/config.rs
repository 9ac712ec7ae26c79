//! Run configuration read from a TOML file.
//!
//! Every section is optional; missing keys take the library defaults. Prior
//! hyper-parameters are given as `{ mean = .., std = .. }` tables under
//! `prior.f`, `prior.g`, `prior.h.x` and `prior.h.y`, and the zero-mode range
//! under `prior.zero_mode`.

use std::path::{Path, PathBuf};

use causal_density::evidence::EvidenceConfig;
use causal_density::infectivity::{ProbitCurve, ResponseCurve, TabulatedCurve};
use causal_density::simulate::{Preset, TruthSpec};
use causal_density::{AxisPrior, FitSettings, GridSpec, HyperPrior, InferenceConfig, Marginal};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AxisTable {
    pub a: MeanStd,
    pub k0: MeanStd,
    pub gamma: MeanStd,
}

impl Default for AxisTable {
    fn default() -> Self {
        AxisTable::from_prior(&AxisPrior::causal_default())
    }
}

fn mean_std(m: &Marginal) -> MeanStd {
    match *m {
        Marginal::Normal { mean, std } | Marginal::LogNormal { mean, std } => MeanStd { mean, std },
        Marginal::Uniform { lo, hi } => MeanStd {
            mean: 0.5 * (lo + hi),
            std: (hi - lo) / 12f64.sqrt(),
        },
    }
}

impl AxisTable {
    pub fn from_prior(p: &AxisPrior) -> Self {
        Self {
            a: mean_std(&p.a),
            k0: mean_std(&p.k0),
            gamma: mean_std(&p.gamma),
        }
    }

    pub fn to_prior(self) -> AxisPrior {
        AxisPrior::new(
            (self.a.mean, self.a.std),
            (self.k0.mean, self.k0.std),
            (self.gamma.mean, self.gamma.std),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HTable {
    pub x: AxisTable,
    pub y: AxisTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Range {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorTable {
    pub f: AxisTable,
    pub g: AxisTable,
    pub h: HTable,
    pub zero_mode: Range,
}

impl Default for PriorTable {
    fn default() -> Self {
        PriorTable::from_prior(&HyperPrior::default())
    }
}

impl PriorTable {
    pub fn from_prior(p: &HyperPrior) -> Self {
        let zero_mode = match p.zero_mode {
            Marginal::Uniform { lo, hi } => Range { lo, hi },
            _ => Range { lo: 1e-15, hi: 5.0 },
        };
        Self {
            f: AxisTable::from_prior(&p.f),
            g: AxisTable::from_prior(&p.g),
            h: HTable {
                x: AxisTable::from_prior(&p.h_x),
                y: AxisTable::from_prior(&p.h_y),
            },
            zero_mode,
        }
    }

    pub fn to_prior(self) -> HyperPrior {
        HyperPrior {
            f: self.f.to_prior(),
            g: self.g.to_prior(),
            h_x: self.h.x.to_prior(),
            h_y: self.h.y.to_prior(),
            zero_mode: Marginal::Uniform {
                lo: self.zero_mode.lo,
                hi: self.zero_mode.hi,
            },
        }
    }
}

/// Evidence settings plus the size of the permutation batch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "toml::Table")]
pub struct EvidenceSection {
    pub permutations: usize,
    #[serde(flatten)]
    pub config: EvidenceConfig,
}

impl Default for EvidenceSection {
    fn default() -> Self {
        Self {
            permutations: 10,
            config: EvidenceConfig::default(),
        }
    }
}

impl TryFrom<toml::Table> for EvidenceSection {
    type Error = toml::de::Error;

    fn try_from(mut table: toml::Table) -> Result<Self, Self::Error> {
        let permutations = match table.remove("permutations") {
            Some(v) => v.try_into()?,
            None => EvidenceSection::default().permutations,
        };
        let config = toml::Value::Table(table).try_into()?;
        Ok(Self { permutations, config })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfectivitySection {
    /// Load at which the probit reaches `anchor_level`.
    pub anchor_load: f64,
    pub anchor_level: f64,
    pub sigma: f64,
    /// Tabulated `log10_load,infectivity` curve used instead of the probit.
    pub curve: Option<PathBuf>,
    /// Load shifts (decades) the profile is projected for.
    pub shifts: Vec<f64>,
}

impl Default for InfectivitySection {
    fn default() -> Self {
        Self {
            anchor_load: 5.4,
            anchor_level: 0.05,
            sigma: 1.0,
            curve: None,
            shifts: vec![0.0, 1.0, -1.0],
        }
    }
}

impl InfectivitySection {
    pub fn curve(&self) -> Result<ResponseCurve, CliError> {
        match &self.curve {
            Some(path) => TabulatedCurve::load(path)
                .map(ResponseCurve::Tabulated)
                .map_err(CliError::data),
            None => ProbitCurve::anchored(self.anchor_load, self.anchor_level, self.sigma)
                .map(ResponseCurve::Probit)
                .map_err(CliError::config),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub preset: String,
    pub n: usize,
    pub f_std: f64,
    pub g_std: f64,
    pub coupling: Option<f64>,
    pub smoothness: f64,
    /// Stored truth to draw from instead of a random one.
    pub truth: Option<PathBuf>,
}

impl Default for SimulateSection {
    fn default() -> Self {
        let spec = TruthSpec::new(Preset::Causal, 2000, 0);
        Self {
            preset: "causal".to_owned(),
            n: spec.n_points,
            f_std: spec.f_std,
            g_std: spec.g_std,
            coupling: None,
            smoothness: spec.smoothness,
            truth: None,
        }
    }
}

impl SimulateSection {
    pub fn spec(&self, seed: u64) -> Result<TruthSpec, CliError> {
        let preset: Preset = self.preset.parse().map_err(CliError::config)?;
        let mut spec = TruthSpec::new(preset, self.n, seed);
        spec.f_std = self.f_std;
        spec.g_std = self.g_std;
        spec.smoothness = self.smoothness;
        if let Some(c) = self.coupling {
            spec.coupling = c;
        }
        Ok(spec)
    }
}

/// Everything a run needs besides the subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub data: Vec<PathBuf>,
    pub labels: Vec<String>,
    pub threshold: f64,
    pub direction: Option<String>,
    pub out: Option<PathBuf>,
    /// Expected-count scale; defaults to N/100.
    pub rho0: Option<f64>,
    pub tight_h_scale: Option<f64>,
    pub grid: GridSpec,
    pub prior: PriorTable,
    pub inference: InferenceConfig,
    pub evidence: EvidenceSection,
    pub infectivity: InfectivitySection,
    pub simulate: SimulateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let settings = FitSettings::default();
        Self {
            seed: None,
            data: Vec::new(),
            labels: Vec::new(),
            threshold: settings.threshold,
            direction: None,
            out: None,
            rho0: settings.rho0,
            tight_h_scale: settings.tight_h_scale,
            grid: settings.grid,
            prior: PriorTable::from_prior(&settings.priors),
            inference: settings.inference,
            evidence: EvidenceSection {
                config: settings.evidence,
                ..EvidenceSection::default()
            },
            infectivity: InfectivitySection::default(),
            simulate: SimulateSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn parse(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    pub fn settings(&self) -> FitSettings {
        FitSettings {
            threshold: self.threshold,
            grid: self.grid,
            priors: self.prior.to_prior(),
            inference: self.inference,
            evidence: self.evidence.config,
            rho0: self.rho0,
            tight_h_scale: self.tight_h_scale,
        }
    }

    /// Checks values and that every referenced input file exists.
    pub fn validate(&self) -> Result<(), CliError> {
        if !self.threshold.is_finite() {
            return Err(CliError::Config("threshold must be finite".into()));
        }
        if !self.labels.is_empty() && self.labels.len() != self.data.len() {
            return Err(CliError::Config(format!(
                "{} labels given for {} datasets",
                self.labels.len(),
                self.data.len()
            )));
        }
        if matches!(self.rho0, Some(r) if !(r > 0.0 && r.is_finite())) {
            return Err(CliError::Config("rho0 must be positive".into()));
        }
        self.grid.grid(self.threshold).map_err(CliError::config)?;
        self.prior.to_prior().validate().map_err(CliError::config)?;
        self.inference.validate().map_err(CliError::config)?;
        self.evidence.config.validate().map_err(CliError::config)?;
        if self.evidence.permutations == 0 {
            return Err(CliError::Config("at least one permutation is required".into()));
        }
        let files = self.data.iter().chain(&self.infectivity.curve).chain(&self.simulate.truth);
        for path in files {
            if !path.is_file() {
                return Err(CliError::Config(format!("{}: file not found", path.display())));
            }
        }
        Ok(())
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = RunConfig {
            seed: Some(4),
            data: vec!["a.csv".into()],
            ..RunConfig::default()
        };
        let back = RunConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.settings(), FitSettings::default());
    }

    #[test]
    fn prior_keys_are_read() {
        let text = r#"
            [prior.f]
            a = { mean = 0.3, std = 0.2 }
            k0 = { mean = 4.0, std = 3.0 }
            gamma = { mean = -6.0, std = 3.0 }
            [prior.h.y]
            k0 = { mean = 2.0, std = 1.0 }
            [prior.zero_mode]
            lo = 1e-15
            hi = 5.0
        "#;
        let p = RunConfig::parse(text).unwrap().settings().priors;
        assert_eq!(p.f, AxisPrior::mkde_default());
        assert_eq!(p.g, AxisPrior::causal_default());
        assert_eq!(p.h_y.k0, Marginal::LogNormal { mean: 2.0, std: 1.0 });
        assert_eq!(p.h_y.a, AxisPrior::causal_default().a);
        assert_eq!(p.zero_mode, Marginal::Uniform { lo: 1e-15, hi: 5.0 });
    }

    #[test]
    fn evidence_section_takes_permutations() {
        let c = RunConfig::parse("[evidence]\npermutations = 5\nprobes = 12\n").unwrap();
        assert_eq!(c.evidence.permutations, 5);
        assert_eq!(c.evidence.config.probes, 12);
        assert!(RunConfig::parse("[evidence]\nprobez = 12\n").is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(RunConfig::parse("sed = 3\n").is_err());
        assert!(RunConfig::parse("[grid]\nnz = 3\n").is_err());
        assert!(RunConfig::parse("[prior.f]\nb = { mean = 1.0, std = 1.0 }\n").is_err());
    }

    #[test]
    fn validation_catches_missing_files() {
        let c = RunConfig {
            data: vec!["/nonexistent/file.csv".into()],
            ..RunConfig::default()
        };
        assert!(matches!(c.validate(), Err(CliError::Config(_))));
        let bad = RunConfig {
            threshold: f64::NAN,
            ..RunConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
