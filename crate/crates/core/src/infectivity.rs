//! Response of infectivity to viral load and its projection onto age.
//!
//! For every posterior sample `s` the expected response at age `x` is
//! `I_s(x) = Σ_j I(y_j) p_s(y_j | x) Δy`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{invalid, Error, Result};
use crate::inference::{moments, PosteriorApprox};
use crate::matern::{std_normal_cdf, std_normal_pdf};
use crate::model::{Direction, GenerativeModel};

/// Probit curve `Φ((y − shift − μ)/σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbitCurve {
    pub mu: f64,
    pub sigma: f64,
    /// Translation along the load axis in decades.
    pub shift: f64,
}

/// Load at which the default curve reaches 5 %.
pub const DEFAULT_ANCHOR_LOAD: f64 = 5.4;
pub const DEFAULT_ANCHOR_LEVEL: f64 = 0.05;

impl Default for ProbitCurve {
    fn default() -> Self {
        Self::anchored(DEFAULT_ANCHOR_LOAD, DEFAULT_ANCHOR_LEVEL, 1.0).expect("default anchor is valid")
    }
}

impl ProbitCurve {
    pub fn new(mu: f64, sigma: f64, shift: f64) -> Result<Self> {
        let c = Self { mu, sigma, shift };
        c.validate()?;
        Ok(c)
    }

    /// Curve of width `sigma` passing through `level` at load `y`.
    pub fn anchored(y: f64, level: f64, sigma: f64) -> Result<Self> {
        if !(level > 0.0 && level < 1.0) {
            return Err(invalid(format!("anchor level must lie in (0, 1), got {level}")));
        }
        let mut z = Normal::standard().inverse_cdf(level);
        // Polish the quantile so the anchor is reproduced to rounding.
        for _ in 0..3 {
            z -= (std_normal_cdf(z) - level) / std_normal_pdf(z);
        }
        Self::new(y - sigma * z, sigma, 0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) || !self.mu.is_finite() || !self.shift.is_finite() {
            return Err(invalid(format!("invalid probit curve {self:?}")));
        }
        Ok(())
    }

    pub fn shifted(&self, shift: f64) -> Self {
        Self { shift, ..*self }
    }
}

pub fn infectivity_of_load(y: f64, curve: &ProbitCurve) -> f64 {
    std_normal_cdf((y - curve.shift - curve.mu) / curve.sigma)
}

/// Tabulated response, linearly interpolated and held constant outside the
/// table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabulatedCurve {
    pub loads: Vec<f64>,
    pub values: Vec<f64>,
    pub shift: f64,
}

impl TabulatedCurve {
    pub fn new(loads: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if loads.len() < 2 || loads.len() != values.len() {
            return Err(invalid("a tabulated curve needs at least two (load, value) rows"));
        }
        if loads.windows(2).any(|w| !(w[1] > w[0])) || loads.iter().any(|v| !v.is_finite()) {
            return Err(invalid("tabulated loads must be finite and strictly increasing"));
        }
        if values.iter().any(|v| !(*v > 0.0 && *v < 1.0)) {
            return Err(invalid("tabulated infectivities must lie in (0, 1)"));
        }
        Ok(Self {
            loads,
            values,
            shift: 0.0,
        })
    }

    /// Reads a CSV with header `log10_load,infectivity`.
    pub fn load(path: &Path) -> Result<Self> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut reader = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_path(path)
            .map_err(|e| io(std::io::Error::other(e)))?;
        let headers = reader.headers().map_err(|e| io(std::io::Error::other(e)))?.clone();
        if headers.len() != 2 || &headers[0] != "log10_load" || &headers[1] != "infectivity" {
            return Err(invalid(format!(
                "{}: expected header 'log10_load,infectivity'",
                path.display()
            )));
        }
        let mut loads = Vec::new();
        let mut values = Vec::new();
        let mut bad = Vec::new();
        for (i, row) in reader.records().enumerate() {
            let parsed = row.ok().and_then(|r| {
                let a = r.get(0)?.parse::<f64>().ok()?;
                let b = r.get(1)?.parse::<f64>().ok()?;
                (r.len() == 2).then_some((a, b))
            });
            match parsed {
                Some((a, b)) => {
                    loads.push(a);
                    values.push(b);
                }
                None => bad.push(i + 2),
            }
        }
        if !bad.is_empty() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                lines: bad,
            });
        }
        Self::new(loads, values)
    }

    pub fn value(&self, y: f64) -> f64 {
        let y = y - self.shift;
        let n = self.loads.len();
        if y <= self.loads[0] {
            return self.values[0];
        }
        if y >= self.loads[n - 1] {
            return self.values[n - 1];
        }
        let k = self.loads.partition_point(|&l| l <= y) - 1;
        let t = (y - self.loads[k]) / (self.loads[k + 1] - self.loads[k]);
        self.values[k] + t * (self.values[k + 1] - self.values[k])
    }
}

/// Either response representation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ResponseCurve {
    Probit(ProbitCurve),
    Tabulated(TabulatedCurve),
}

impl Default for ResponseCurve {
    fn default() -> Self {
        ResponseCurve::Probit(ProbitCurve::default())
    }
}

impl ResponseCurve {
    pub fn value(&self, y: f64) -> f64 {
        match self {
            ResponseCurve::Probit(c) => infectivity_of_load(y, c),
            ResponseCurve::Tabulated(t) => t.value(y),
        }
    }

    pub fn shift(&self) -> f64 {
        match self {
            ResponseCurve::Probit(c) => c.shift,
            ResponseCurve::Tabulated(t) => t.shift,
        }
    }

    pub fn with_shift(&self, shift: f64) -> Self {
        match self {
            ResponseCurve::Probit(c) => ResponseCurve::Probit(c.shifted(shift)),
            ResponseCurve::Tabulated(t) => ResponseCurve::Tabulated(TabulatedCurve { shift, ..t.clone() }),
        }
    }

    /// True for the built-in anchored probit, which is a calibration choice
    /// rather than a measured curve.
    pub fn is_default_calibration(&self) -> bool {
        matches!(self, ResponseCurve::Probit(c) if *c == ProbitCurve::default())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfectivityProfile {
    pub ages: Vec<f64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub lower_1sigma: Vec<f64>,
    pub upper_1sigma: Vec<f64>,
    pub lower_2sigma: Vec<f64>,
    pub upper_2sigma: Vec<f64>,
    /// `I_s(x)` for every posterior sample.
    pub samples: Vec<Vec<f64>>,
    /// `max_x I / min_x I − 1` of the mean profile.
    pub max_relative_difference: f64,
    /// The same quantity per sample.
    pub sample_relative_differences: Vec<f64>,
    pub curve: ResponseCurve,
    pub default_calibration: bool,
}

fn relative_difference(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    max / min - 1.0
}

/// `I(x)` for one latent vector.
pub fn infectivity_by_age(model: &GenerativeModel, xi: &[f64], curve: &ResponseCurve) -> Result<Vec<f64>> {
    let config = model.config();
    let (gx, gy) = (config.grid.gx, config.grid.gy);
    let response: Vec<f64> = gy.centers().iter().map(|&y| curve.value(y)).collect();
    let dy = gy.step();
    let weigh = |p: &[f64]| p.iter().zip(&response).map(|(p, r)| p * r).sum::<f64>() * dy;
    let d = model.build_density(xi)?;
    let ny = gy.n_pixels();
    match (config.direction, config.transposed) {
        (Direction::YtoX, _) => Err(invalid("infectivity is projected through p(y|x); y → x fits are not supported")),
        (Direction::XtoY, _) => Ok(d.cond.values().chunks(ny).map(weigh).collect()),
        (Direction::Independent, false) => Ok(vec![weigh(&d.cond.values()[..ny]); gx.n_pixels()]),
        (Direction::Independent, true) => {
            // The load axis carries the marginal factor e^f.
            let w: Vec<f64> = d.f.values().iter().map(|v| v.exp()).collect();
            let z = w.iter().sum::<f64>() * dy;
            let p: Vec<f64> = w.iter().map(|v| v / z).collect();
            Ok(vec![weigh(&p); gx.n_pixels()])
        }
    }
}

pub fn project_infectivity(
    posterior: &PosteriorApprox,
    model: &GenerativeModel,
    curve: &ResponseCurve,
) -> Result<InfectivityProfile> {
    if model.config().direction == Direction::YtoX {
        return Err(invalid("infectivity is projected through p(y|x); y → x fits are not supported"));
    }
    if posterior.xi_bar.len() != model.dim() {
        return Err(invalid("posterior does not belong to this model"));
    }
    let samples = posterior
        .samples()
        .iter()
        .map(|s| infectivity_by_age(model, s, curve))
        .collect::<Result<Vec<_>>>()?;
    let (mean, std) = moments(&samples)?;
    let band = |k: f64, sign: f64| -> Vec<f64> {
        mean.iter()
            .zip(&std)
            .map(|(m, s)| (m + sign * k * s).clamp(0.0, 1.0))
            .collect()
    };
    Ok(InfectivityProfile {
        ages: model.config().grid.gx.centers(),
        lower_1sigma: band(1.0, -1.0),
        upper_1sigma: band(1.0, 1.0),
        lower_2sigma: band(2.0, -1.0),
        upper_2sigma: band(2.0, 1.0),
        max_relative_difference: relative_difference(&mean),
        sample_relative_differences: samples.iter().map(|s| relative_difference(s)).collect(),
        mean,
        std,
        samples,
        curve: curve.clone(),
        default_calibration: curve.is_default_calibration(),
    })
}
