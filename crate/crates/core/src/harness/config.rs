//! Experiment configuration: a TOML file, CLI overrides, and per-experiment
//! defaults, resolved into a validated [`ExperimentConfig`].
//!
//! ```toml
//! [model]
//! kind = "singlet"          # scalar | matrix | singlet
//! sigma12 = [[0, 0], [0.7071, 0], [-0.7071, 0], [0, 0]]  # row-major [re, im]
//! e0 = 25.0
//! scale = 1.0
//!
//! [detector]
//! dt = 0.01
//! kappa = 0.04
//! threshold = 50.0
//! coincidence_window = 0.0
//! max_time = 400.0
//!
//! [run]
//! trials = 10000
//! seed = 1
//! workers = 0
//! mode = "per-pair"         # per-pair | race
//!
//! [chsh]
//! angles = [0.0, 0.7853981633974483, 0.39269908169724414, 1.1780972450961724]
//!
//! [output]
//! dir = "out"
//! format = "report"         # report | table
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coincidence::{CoincidenceMode, CoincidenceParams};
use crate::detector::{integer_ratio, DetectorParams};
use crate::error::{Result, TsdError};
use crate::linalg::{self, CMatrix};
use crate::model::{build_matrix_model, build_scalar_pair_model, singlet_model, CorrelationModel, SingleSignalSpec};
use crate::oracle::CHSH_ANGLES;
use crate::parallel::RunParams;

pub const DEFAULT_DT: f64 = 0.01;
pub const DEFAULT_KAPPA: f64 = 0.04;
pub const DEFAULT_THRESHOLD: f64 = 50.0;
pub const DEFAULT_BACKGROUND: f64 = 25.0;
/// Default horizon in units of the window: `max_time = 10⁴·κ`.
pub const DEFAULT_HORIZON_WINDOWS: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Experiment {
    BornSingle,
    BornJoint,
    Marginals,
    Chsh,
    MeanTimes,
    AppendixCheck,
    ValidateModel,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::BornSingle,
        Experiment::BornJoint,
        Experiment::Marginals,
        Experiment::Chsh,
        Experiment::MeanTimes,
        Experiment::AppendixCheck,
        Experiment::ValidateModel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::BornSingle => "born-single",
            Experiment::BornJoint => "born-joint",
            Experiment::Marginals => "marginals",
            Experiment::Chsh => "chsh",
            Experiment::MeanTimes => "mean-times",
            Experiment::AppendixCheck => "appendix-check",
            Experiment::ValidateModel => "validate-model",
        }
    }

    fn default_trials(self) -> u64 {
        match self {
            Experiment::BornSingle => 40_000,
            Experiment::BornJoint => 10_000,
            Experiment::Marginals => 30_000,
            Experiment::Chsh => 10_000,
            Experiment::MeanTimes => 4_000,
            Experiment::AppendixCheck => 100_000,
            Experiment::ValidateModel => 0,
        }
    }

    fn default_model(self) -> ModelKind {
        match self {
            Experiment::BornSingle => ModelKind::Matrix,
            Experiment::Marginals => ModelKind::Matrix,
            Experiment::MeanTimes => ModelKind::Scalar,
            _ => ModelKind::Singlet,
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = TsdError;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| TsdError::validation("experiment", format!("unknown experiment `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Scalar,
    Matrix,
    Singlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    #[default]
    PerPair,
    Race,
}

impl From<ModeName> for CoincidenceMode {
    fn from(m: ModeName) -> Self {
        match m {
            ModeName::PerPair => CoincidenceMode::PerPair,
            ModeName::Race => CoincidenceMode::Race,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Report,
    Table,
}

impl FromStr for OutputFormat {
    type Err = TsdError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "report" => Ok(OutputFormat::Report),
            "table" => Ok(OutputFormat::Table),
            _ => Err(TsdError::validation(
                "output.format",
                format!("expected report|table, got `{s}`"),
            )),
        }
    }
}

// Raw file layout. Every field is optional; defaults depend on the experiment.

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<String>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub detector: DetectorSection,
    #[serde(default)]
    pub run: RunSection,
    #[serde(default)]
    pub chsh: ChshSection,
    #[serde(default)]
    pub output: OutputSection,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub kind: Option<ModelKind>,
    pub sigma12: Option<Vec<[f64; 2]>>,
    /// Power matrix of a single signal (born-single), row-major `[re, im]`.
    pub power: Option<Vec<[f64; 2]>>,
    pub e0: Option<f64>,
    pub scale: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSection {
    pub dt: Option<f64>,
    pub kappa: Option<f64>,
    pub threshold: Option<f64>,
    pub coincidence_window: Option<f64>,
    pub max_time: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub trials: Option<u64>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
    pub mode: Option<ModeName>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChshSection {
    pub angles: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub format: Option<OutputFormat>,
}

/// Values given on the command line; they win over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub trials: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub dt: Option<f64>,
    pub kappa: Option<f64>,
    pub threshold: Option<f64>,
    pub background: Option<f64>,
    pub window: Option<f64>,
    pub angles: Option<Vec<f64>>,
}

// Resolved configuration.

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelConfig {
    pub kind: ModelKind,
    /// Row-major `[re, im]` pairs.
    pub sigma12: Vec<[f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power: Option<Vec<[f64; 2]>>,
    pub e0: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DetectorConfig {
    pub dt: f64,
    pub kappa: f64,
    pub threshold: f64,
    pub coincidence_window: f64,
    pub max_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RunConfig {
    pub trials: u64,
    pub seed: u64,
    /// Not part of the report: results do not depend on it.
    #[serde(skip)]
    pub workers: usize,
    pub mode: ModeName,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutputConfig {
    pub dir: PathBuf,
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    #[serde(serialize_with = "ser_experiment")]
    pub experiment: Experiment,
    pub model: ModelConfig,
    pub detector: DetectorConfig,
    pub run: RunConfig,
    pub chsh_angles: [f64; 4],
    #[serde(skip)]
    pub output: OutputConfig,
}

fn ser_experiment<S: serde::Serializer>(e: &Experiment, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(e.name())
}

/// 1-based line and column of a byte offset.
fn line_col(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col = before.rfind('\n').map_or(before.len(), |nl| before.len() - nl - 1) + 1;
    (line, col)
}

fn parse_error(text: &str, err: &toml::de::Error) -> TsdError {
    TsdError::Parse {
        message: err.message().to_string(),
        location: err.span().map(|s| line_col(text, s.start)),
    }
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("model", &["kind", "sigma12", "power", "e0", "scale"]),
    (
        "detector",
        &["dt", "kappa", "threshold", "coincidence_window", "max_time"],
    ),
    ("run", &["trials", "seed", "workers", "mode"]),
    ("chsh", &["angles"]),
    ("output", &["dir", "format"]),
];

/// Rejects keys outside the schema, naming the first offender.
fn check_keys(table: &toml::Table) -> Result<()> {
    for (key, value) in table {
        if key == "experiment" {
            continue;
        }
        let Some((_, allowed)) = SECTIONS.iter().find(|(name, _)| name == key) else {
            return Err(TsdError::validation(key.clone(), "unknown key"));
        };
        let Some(section) = value.as_table() else {
            return Err(TsdError::validation(key.clone(), "must be a table"));
        };
        for inner in section.keys() {
            if !allowed.contains(&inner.as_str()) {
                return Err(TsdError::validation(format!("{key}.{inner}"), "unknown key"));
            }
        }
    }
    Ok(())
}

/// Parses config text: syntax errors carry a location, unknown keys are
/// validation errors naming the key.
pub fn parse_config_str(text: &str) -> Result<ConfigFile> {
    let table: toml::Table = text.parse().map_err(|e| parse_error(text, &e))?;
    check_keys(&table)?;
    toml::from_str(text).map_err(|e| parse_error(text, &e))
}

pub fn parse_config_file(path: &Path) -> Result<ConfigFile> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}

fn complex_entries(key: &str, pairs: &[[f64; 2]]) -> Result<(usize, Vec<Complex64>)> {
    let n = (pairs.len() as f64).sqrt().round() as usize;
    if n == 0 || n * n != pairs.len() {
        return Err(TsdError::validation(
            key,
            format!("{} entries do not form a square matrix", pairs.len()),
        ));
    }
    if pairs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(TsdError::validation(key, "entries must be finite"));
    }
    Ok((n, pairs.iter().map(|[re, im]| Complex64::new(*re, *im)).collect()))
}

fn positive(key: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(TsdError::validation(key, format!("must be > 0, got {v}")))
    }
}

fn default_sigma12(experiment: Experiment, kind: ModelKind) -> Vec<[f64; 2]> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    match (experiment, kind) {
        (_, ModelKind::Scalar) => vec![[1.0, 0.0]],
        (_, ModelKind::Singlet) => vec![[0.0, 0.0], [h, 0.0], [-h, 0.0], [0.0, 0.0]],
        (Experiment::Marginals, _) => vec![[0.3f64.sqrt(), 0.0], [0.0, 0.0], [0.0, 0.0], [0.7f64.sqrt(), 0.0]],
        _ => vec![[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 0.0]],
    }
}

impl ExperimentConfig {
    /// Applies defaults and overrides, then validates everything downstream
    /// types would check.
    pub fn resolve(experiment: Experiment, file: ConfigFile, ov: &Overrides) -> Result<Self> {
        if let Some(name) = &file.experiment {
            let named: Experiment = name.parse()?;
            if named != experiment {
                return Err(TsdError::validation(
                    "experiment",
                    format!("config is for `{named}`, command is `{experiment}`"),
                ));
            }
        }
        let kind = file.model.kind.unwrap_or(experiment.default_model());
        if kind == ModelKind::Singlet && file.model.sigma12.is_some() {
            return Err(TsdError::validation("model.sigma12", "not used by the singlet preset"));
        }
        let sigma12 = file
            .model
            .sigma12
            .clone()
            .unwrap_or_else(|| default_sigma12(experiment, kind));
        let power = match (&file.model.power, experiment) {
            (Some(p), _) => Some(p.clone()),
            (None, Experiment::BornSingle) => Some(vec![[0.3, 0.0], [0.0, 0.0], [0.0, 0.0], [0.7, 0.0]]),
            _ => None,
        };
        let default_e0 = if experiment == Experiment::BornSingle {
            0.0
        } else {
            DEFAULT_BACKGROUND
        };
        let e0 = ov.background.or(file.model.e0).unwrap_or(default_e0);
        if !(e0.is_finite() && e0 >= 0.0) {
            return Err(TsdError::validation("model.e0", format!("must be ≥ 0, got {e0}")));
        }
        let scale = positive("model.scale", file.model.scale.unwrap_or(1.0))?;

        let dt = positive("detector.dt", ov.dt.or(file.detector.dt).unwrap_or(DEFAULT_DT))?;
        let kappa = positive(
            "detector.kappa",
            ov.kappa.or(file.detector.kappa).unwrap_or(DEFAULT_KAPPA),
        )?;
        if integer_ratio(kappa, dt).is_none() {
            return Err(TsdError::validation(
                "detector.kappa",
                format!("kappa/dt = {} must be a positive integer", kappa / dt),
            ));
        }
        let threshold = positive(
            "detector.threshold",
            ov.threshold.or(file.detector.threshold).unwrap_or(DEFAULT_THRESHOLD),
        )?;
        let window = ov.window.or(file.detector.coincidence_window).unwrap_or(0.0);
        if !(window.is_finite() && window >= 0.0) || (window > 0.0 && integer_ratio(window, dt).is_none()) {
            return Err(TsdError::validation(
                "detector.coincidence_window",
                format!("must be a nonnegative integer multiple of dt, got {window}"),
            ));
        }
        let max_time = file.detector.max_time.unwrap_or(DEFAULT_HORIZON_WINDOWS * kappa);
        if !(max_time.is_finite() && max_time >= 10.0 * kappa) {
            return Err(TsdError::validation(
                "detector.max_time",
                format!("must be ≥ 10·kappa = {}, got {max_time}", 10.0 * kappa),
            ));
        }

        let trials = ov.trials.or(file.run.trials).unwrap_or(experiment.default_trials());
        let seed = ov.seed.or(file.run.seed).unwrap_or(1);
        let workers = ov.workers.or(file.run.workers).unwrap_or(0);
        let mode = file.run.mode.unwrap_or_default();

        let angles = match ov.angles.clone().or(file.chsh.angles.clone()) {
            None => CHSH_ANGLES,
            Some(v) => {
                let arr: [f64; 4] = v.as_slice().try_into().map_err(|_| {
                    TsdError::validation("chsh.angles", format!("need exactly 4 angles, got {}", v.len()))
                })?;
                if arr.iter().any(|a| !a.is_finite()) {
                    return Err(TsdError::validation("chsh.angles", "angles must be finite"));
                }
                arr
            }
        };

        let cfg = Self {
            experiment,
            model: ModelConfig {
                kind,
                sigma12,
                power,
                e0,
                scale,
            },
            detector: DetectorConfig {
                dt,
                kappa,
                threshold,
                coincidence_window: window,
                max_time,
            },
            run: RunConfig {
                trials,
                seed,
                workers,
                mode,
            },
            chsh_angles: angles,
            output: OutputConfig {
                dir: ov.out.clone().or(file.output.dir).unwrap_or_else(|| PathBuf::from(".")),
                format: ov.format.or(file.output.format).unwrap_or_default(),
            },
        };
        cfg.validate_model()?;
        Ok(cfg)
    }

    fn validate_model(&self) -> Result<()> {
        let needs_bisignal = !matches!(self.experiment, Experiment::BornSingle | Experiment::AppendixCheck);
        if needs_bisignal {
            self.correlation_model()
                .map_err(|e| TsdError::validation("model", e.to_string()))?;
        }
        if self.experiment == Experiment::BornSingle {
            self.single_signal()
                .map_err(|e| TsdError::validation("model.power", e.to_string()))?;
        }
        if matches!(self.experiment, Experiment::Chsh) && self.model.kind == ModelKind::Scalar {
            return Err(TsdError::validation("model.kind", "chsh needs a 2×2 matrix model"));
        }
        Ok(())
    }

    /// The bi-signal model described by `[model]`.
    pub fn correlation_model(&self) -> Result<CorrelationModel> {
        match self.model.kind {
            ModelKind::Singlet => singlet_model(self.model.e0, self.model.scale),
            ModelKind::Matrix => {
                let (n, entries) = complex_entries("model.sigma12", &self.model.sigma12)?;
                let m = linalg::from_rows(n, &entries).scale(self.model.scale);
                build_matrix_model(m, self.model.e0)
            }
            ModelKind::Scalar => {
                let (n, entries) = complex_entries("model.sigma12", &self.model.sigma12)?;
                if n != 1 {
                    return Err(TsdError::validation("model.sigma12", "a scalar model takes one entry"));
                }
                build_scalar_pair_model(entries[0] * self.model.scale, self.model.e0)
            }
        }
    }

    /// The single-signal law (`power`, scaled) with background `e0`.
    pub fn single_signal(&self) -> Result<SingleSignalSpec> {
        let power = self
            .model
            .power
            .as_ref()
            .ok_or_else(|| TsdError::validation("model.power", "required for this experiment"))?;
        let (n, entries) = complex_entries("model.power", power)?;
        let b: CMatrix = linalg::from_rows(n, &entries).scale(self.model.scale);
        SingleSignalSpec::new(b, self.model.e0)
    }

    pub fn detector_params(&self) -> Result<DetectorParams> {
        let d = &self.detector;
        DetectorParams::new(d.kappa, d.threshold, self.model.e0, d.max_time)
    }

    pub fn coincidence_params(&self) -> Result<CoincidenceParams> {
        CoincidenceParams::new(
            self.detector_params()?,
            self.detector.coincidence_window,
            self.run.mode.into(),
        )
    }

    pub fn run_params(&self) -> RunParams {
        RunParams::new(self.run.trials, self.run.seed).with_workers(self.run.workers)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_chsh_config_gets_defaults() {
        let file = parse_config_str("[run]\nseed = 7\n").unwrap();
        let cfg = ExperimentConfig::resolve(Experiment::Chsh, file, &Overrides::default()).unwrap();
        assert_eq!(cfg.run.seed, 7);
        assert_eq!(cfg.model.kind, ModelKind::Singlet);
        assert_eq!(cfg.detector.kappa, DEFAULT_KAPPA);
        assert_eq!(cfg.detector.threshold, DEFAULT_THRESHOLD);
        assert_eq!(cfg.model.e0, DEFAULT_BACKGROUND);
        assert!((cfg.detector.max_time - 400.0).abs() < 1e-9);
        assert_eq!(cfg.chsh_angles, CHSH_ANGLES);
    }

    #[test]
    fn fractional_window_rejected() {
        let file = parse_config_str("[detector]\nkappa = 0.035\ndt = 0.01\n").unwrap();
        let err = ExperimentConfig::resolve(Experiment::Chsh, file, &Overrides::default()).unwrap_err();
        assert!(matches!(err, TsdError::Validation { ref key, .. } if key == "detector.kappa"));
    }

    #[test]
    fn unknown_key_named() {
        let err = parse_config_str("[model]\nsigma13 = 1.0\n").unwrap_err();
        assert!(matches!(err, TsdError::Validation { ref key, .. } if key == "model.sigma13"));
        let err = parse_config_str("sigma13 = 1.0\n").unwrap_err();
        assert!(matches!(err, TsdError::Validation { ref key, .. } if key == "sigma13"));
    }

    #[test]
    fn syntax_error_has_location() {
        let err = parse_config_str("[run]\nseed = = 3\n").unwrap_err();
        match err {
            TsdError::Parse {
                location: Some((line, _)),
                ..
            } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn overrides_win() {
        let file = parse_config_str("[run]\nseed = 7\ntrials = 5\n").unwrap();
        let ov = Overrides {
            seed: Some(9),
            threshold: Some(20.0),
            ..Overrides::default()
        };
        let cfg = ExperimentConfig::resolve(Experiment::BornJoint, file, &ov).unwrap();
        assert_eq!((cfg.run.seed, cfg.run.trials, cfg.detector.threshold), (9, 5, 20.0));
    }

    #[test]
    fn experiment_mismatch_rejected() {
        let file = parse_config_str("experiment = \"chsh\"\n").unwrap();
        assert!(ExperimentConfig::resolve(Experiment::BornJoint, file, &Overrides::default()).is_err());
    }

    #[test]
    fn line_col_counts_from_one() {
        assert_eq!(line_col("ab\ncd", 4), (2, 2));
        assert_eq!(line_col("ab", 0), (1, 1));
    }
}
