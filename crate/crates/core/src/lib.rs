//! Non-parametric reconstruction of two-dimensional event densities and
//! Bayesian comparison of causal directions between the two variables.
//!
//! The joint density of `(x, y)` is modeled either as a cause marginal times a
//! conditional of the effect, or as a product of independent marginals. All
//! log-densities carry Matérn-type Gaussian-process priors and are inferred
//! with metric Gaussian variational inference; the evidence lower bounds of
//! the two hypotheses give the causal-direction score.

pub mod data;
pub mod error;
pub mod evidence;
pub mod field;
pub mod grid;
pub mod inference;
pub mod infectivity;
pub mod likelihood;
pub mod linalg;
pub mod matern;
pub mod mkde;
pub mod model;
pub mod pipeline;
pub mod rng;
pub mod simulate;

pub use data::{apply_threshold, load_dataset, permute_y, save_dataset, Dataset, Record};
pub use error::{Error, Result};
pub use evidence::{delta_evidence, estimate_elbo, DeltaEvidence, ElboEstimate, EvidenceConfig};
pub use field::CorrelatedField;
pub use grid::{Field, Grid1D, Grid2D};
pub use infectivity::{project_infectivity, InfectivityProfile, ProbitCurve, ResponseCurve, TabulatedCurve};
pub use inference::{run_mgvi, InferenceConfig, LikelihoodModel, PosteriorApprox};
pub use likelihood::{bin_data, expected_counts, log_likelihood, CountGrid, ExpectedCounts};
pub use matern::{AxisPrior, HyperPrior, Marginal, MaternParams};
pub use mkde::{mkde_fit, mkde_marginal, MarginalDensity, MkdeConfig, MkdeModel};
pub use model::{CausalModel, DensityRealization, Direction, GenerativeModel, ModelConfig};
pub use pipeline::{compare, fit, prepare, randomization_null_test, ComparisonRecord, FitSettings, GridSpec, NullTest};
pub use simulate::{make_truth, simulate, Preset, Truth, TruthSpec};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
