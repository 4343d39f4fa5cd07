//! Monte Carlo simulation of threshold detection of classical Gaussian
//! signals, with the quantum reference values the click statistics are
//! compared against.
//!
//! * [`model`]: laws of single signals and bi-signals, presets, rotations.
//! * [`sampler`]: per-bin Gaussian sampling of the discretized signals.
//! * [`detector`]: single-signal threshold detection and click statistics.
//! * [`coincidence`]: joint detection of bi-signals with background calibration.
//! * [`oracle`]: density matrices, Born probabilities, partial traces, CHSH.
//! * [`quadratic`]: Gaussian quadratic-form identities, analytic and Monte Carlo.
//! * [`harness`]: configuration, experiment presets and report output.

pub mod coincidence;
pub mod detector;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod oracle;
pub mod parallel;
pub mod quadratic;
pub mod rng;
pub mod sampler;
pub mod stats;

pub use coincidence::{
    estimate_joint_probabilities, estimate_marginal_probabilities, mean_joint_time, run_pair_trial, CoincidenceMode,
    CoincidenceParams, JointClickRecord, JointTimeReport,
};
pub use detector::{
    calibrate_background, estimate_single_probabilities, mean_click_time, run_single_trial, smoothed_energy,
    ClickRecord, CountingMode, DetectorParams, MeanClickTime, ProbabilityReport,
};
pub use error::{Result, TsdError};
pub use model::{
    build_matrix_model, build_scalar_pair_model, singlet_model, validate_psd, CorrelationModel, MatchMode,
    PerBinCovariance, Side, SingleSignalSpec,
};
pub use oracle::{DensityMatrix, QuantumState};
pub use parallel::RunParams;
pub use quadratic::{GaussianLaw, QuadraticForm};
pub use sampler::{matrix_sqrt_psd, sample_bin, BinSample, DiscretizationParams, FactorCache};
