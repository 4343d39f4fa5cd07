//! Experiment presets: each turns a resolved configuration into a [`Report`].

use num_complex::Complex64;

use crate::coincidence::{
    estimate_joint_probabilities, estimate_marginal_probabilities, joint_regime, mean_joint_time, CoincidenceParams,
    JointTimeReport,
};
use crate::detector::{
    estimate_single_probabilities, mean_click_time, CountingMode, DetectorParams, ProbabilityReport, MAX_KAPPA_OVER_TAU,
};
use crate::error::{Result, TsdError};
use crate::harness::config::{Experiment, ExperimentConfig, ModelKind};
use crate::harness::report::{Cell, Report, Table};
use crate::linalg::{self, CMatrix};
use crate::model::{validate_psd, CorrelationModel, Side, PSD_TOL};
use crate::oracle::{self, chsh_combination, correlation_from_probabilities};
use crate::parallel::RunParams;
use crate::quadratic::{
    embed_block, mc_quadratic_correlation, mc_quadratic_mean, quadratic_correlation, quadratic_correlation_block,
    quadratic_mean, GaussianLaw, QuadraticForm,
};
use crate::rng::{complex_normal, derive_seed, StreamKey};

/// Thresholds and powers of the single-channel scaling grid.
pub const SINGLE_SCALING_THRESHOLDS: [f64; 2] = [20.0, 40.0];
pub const SINGLE_SCALING_POWERS: [f64; 3] = [0.5, 1.0, 2.0];
/// Number of randomized quadratic-form cases.
pub const APPENDIX_CASES: usize = 100;
/// Largest dimension used by the randomized quadratic-form cases.
pub const APPENDIX_MAX_DIM: usize = 8;

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Report> {
    match cfg.experiment {
        Experiment::BornSingle => born_single(cfg),
        Experiment::BornJoint => born_joint(cfg),
        Experiment::Marginals => marginals(cfg),
        Experiment::Chsh => chsh(cfg),
        Experiment::MeanTimes => mean_times(cfg),
        Experiment::AppendixCheck => appendix_check(cfg),
        Experiment::ValidateModel => validate_model(cfg),
    }
}

fn probability_table(name: &str, r: &ProbabilityReport) -> Table {
    let mut t = Table::new(name, &["label", "count", "probability", "se", "oracle", "discrepancy"]);
    for k in 0..r.labels.len() {
        t.push(vec![
            Cell::text(r.labels[k].clone()),
            Cell::Int(r.counts[k]),
            Cell::Prob(r.probabilities[k]),
            Cell::Num(r.std_errors[k]),
            Cell::Prob(r.oracle[k]),
            Cell::Num(r.probabilities[k] - r.oracle[k]),
        ]);
    }
    t
}

fn click_diagnostics(report: &mut Report, r: &ProbabilityReport, prefix: &str) {
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}_{k}")
        }
    };
    report.diag(&key("trials"), Cell::Int(r.trials));
    report.diag(&key("clicks"), Cell::Int(r.total_clicks()));
    report.diag(&key("no_click_rate"), Cell::Num(r.no_click_rate()));
    report.diag(&key("mean_tau"), Cell::Num(r.mean_tau));
    report.diag(&key("mean_tau_se"), Cell::Num(r.mean_tau_se));
    report.diag(&key("max_discrepancy"), Cell::Num(r.max_discrepancy()));
}

fn born_single(cfg: &ExperimentConfig) -> Result<Report> {
    let signal = cfg.single_signal()?;
    let m = signal.dim();
    let det = cfg.detector_params()?;
    let r = estimate_single_probabilities(
        &signal,
        &CMatrix::identity(m, m),
        det,
        cfg.detector.dt,
        &cfg.run_params(),
        CountingMode::Race,
    )?;
    let mut report = Report::new(cfg);
    click_diagnostics(&mut report, &r, "");
    let kappa_over_tau = det.kappa / r.mean_tau;
    report.diag("kappa_over_tau", Cell::Num(kappa_over_tau));
    report.regime_violation = kappa_over_tau.is_nan() || kappa_over_tau > MAX_KAPPA_OVER_TAU;
    report.diag("regime_violation", Cell::Bool(report.regime_violation));
    report.tables.push(probability_table("probabilities", &r));
    Ok(report)
}

fn joint_diagnostics(
    report: &mut Report,
    model: &CorrelationModel,
    params: &CoincidenceParams,
    r: &ProbabilityReport,
    prefix: &str,
) -> bool {
    click_diagnostics(report, r, prefix);
    let (kt, sb, flag) = joint_regime(model, params, r.mean_tau);
    let key = |k: &str| {
        if prefix.is_empty() {
            k.to_string()
        } else {
            format!("{prefix}_{k}")
        }
    };
    report.diag(&key("kappa_over_tau"), Cell::Num(kt));
    report.diag(&key("signal_over_background"), Cell::Num(sb));
    flag
}

fn born_joint(cfg: &ExperimentConfig) -> Result<Report> {
    let model = cfg.correlation_model()?;
    let params = cfg.coincidence_params()?;
    let r = estimate_joint_probabilities(&model, &params, cfg.detector.dt, &cfg.run_params())?;
    let mut report = Report::new(cfg);
    report.regime_violation = joint_diagnostics(&mut report, &model, &params, &r, "");
    report.diag("regime_violation", Cell::Bool(report.regime_violation));
    report.tables.push(probability_table("probabilities", &r));
    Ok(report)
}

fn marginals(cfg: &ExperimentConfig) -> Result<Report> {
    let model = cfg.correlation_model()?;
    let params = cfg.coincidence_params()?;
    let (s1, s2) = estimate_marginal_probabilities(&model, &params, cfg.detector.dt, &cfg.run_params())?;
    let mut report = Report::new(cfg);
    let mut flag = false;
    for (name, r) in [("side1", &s1), ("side2", &s2)] {
        click_diagnostics(&mut report, r, name);
        let kt = params.detector.kappa / r.mean_tau;
        report.diag(&format!("{name}_kappa_over_tau"), Cell::Num(kt));
        flag |= kt.is_nan() || kt > MAX_KAPPA_OVER_TAU;
    }
    report.regime_violation = flag;
    report.diag("regime_violation", Cell::Bool(flag));
    report.tables.push(probability_table("side1", &s1));
    report.tables.push(probability_table("side2", &s2));
    Ok(report)
}

/// Names and angle pairs of the four CHSH settings, in `(ab, ab′, a′b, a′b′)` order.
pub fn chsh_settings(angles: [f64; 4]) -> [(&'static str, f64, f64); 4] {
    let [a, a2, b, b2] = angles;
    [("ab", a, b), ("ab2", a, b2), ("a2b", a2, b), ("a2b2", a2, b2)]
}

/// Estimated correlation and its standard error from a four-outcome report.
pub fn correlation_estimate(r: &ProbabilityReport) -> (f64, f64) {
    let p: [f64; 4] = r.probabilities.as_slice().try_into().expect("four outcomes");
    let se = r.std_errors.iter().map(|s| s * s).sum::<f64>().sqrt();
    (correlation_from_probabilities(&p), se)
}

fn chsh(cfg: &ExperimentConfig) -> Result<Report> {
    let model = cfg.correlation_model()?;
    if model.dim() != 2 {
        return Err(TsdError::DimensionMismatch(format!(
            "chsh needs m = 2, model has m = {}",
            model.dim()
        )));
    }
    let psi = oracle::state_from_correlations(model.cross())?;
    let params = cfg.coincidence_params()?;
    let base = cfg.run_params();
    let mut report = Report::new(cfg);
    let mut table = Table::new(
        "chsh",
        &[
            "setting",
            "theta1",
            "theta2",
            "correlation",
            "se",
            "oracle",
            "discrepancy",
        ],
    );
    let mut estimates = [0.0; 4];
    let mut ses = [0.0; 4];
    let mut oracles = [0.0; 4];
    let mut flag = false;
    let mut setting_tables = Vec::new();
    for (k, (name, t1, t2)) in chsh_settings(cfg.chsh_angles).into_iter().enumerate() {
        let rotated = model.rotate_bases(t1, t2)?;
        let run = RunParams {
            master_seed: derive_seed(base.master_seed, k as u64),
            ..base
        };
        let r = estimate_joint_probabilities(&rotated, &params, cfg.detector.dt, &run)?;
        flag |= joint_diagnostics(&mut report, &rotated, &params, &r, name);
        let (e, se) = correlation_estimate(&r);
        let oracle_e = oracle::correlation(&psi, t1, t2)?;
        estimates[k] = e;
        ses[k] = se;
        oracles[k] = oracle_e;
        table.push(vec![
            Cell::text(name),
            Cell::Num(t1),
            Cell::Num(t2),
            Cell::Num(e),
            Cell::Num(se),
            Cell::Num(oracle_e),
            Cell::Num(e - oracle_e),
        ]);
        setting_tables.push(probability_table(&format!("probabilities_{name}"), &r));
    }
    let s = chsh_combination(&estimates);
    let s_se = ses.iter().map(|x| x * x).sum::<f64>().sqrt();
    let s_oracle = chsh_combination(&oracles);
    table.push(vec![
        Cell::text("S"),
        Cell::Num(f64::NAN),
        Cell::Num(f64::NAN),
        Cell::Num(s),
        Cell::Num(s_se),
        Cell::Num(s_oracle),
        Cell::Num(s - s_oracle),
    ]);
    report.diag("s_estimate", Cell::Num(s));
    report.diag("s_se", Cell::Num(s_se));
    report.diag("s_oracle", Cell::Num(s_oracle));
    report.diag("exceeds_classical_bound", Cell::Bool(s > 2.0));
    report.regime_violation = flag;
    report.diag("regime_violation", Cell::Bool(flag));
    report.tables.push(table);
    report.tables.extend(setting_tables);
    Ok(report)
}

fn scalar_cross(cfg: &ExperimentConfig) -> Result<Complex64> {
    if cfg.model.kind != ModelKind::Scalar {
        return Err(TsdError::validation("model.kind", "mean-times needs a scalar model"));
    }
    let model = cfg.correlation_model()?;
    Ok(model.cross()[(0, 0)])
}

fn mean_times(cfg: &ExperimentConfig) -> Result<Report> {
    let dt = cfg.detector.dt;
    let run = cfg.run_params();
    let mut report = Report::new(cfg);
    let mut flag = false;

    let mut single = Table::new(
        "single_scaling",
        &[
            "power",
            "threshold",
            "tau_mean",
            "tau_se",
            "ratio",
            "kappa_over_tau",
            "clicks",
            "regime_violation",
        ],
    );
    let mut ratios = Vec::new();
    for &e_d in &SINGLE_SCALING_THRESHOLDS {
        for &power in &SINGLE_SCALING_POWERS {
            let det = DetectorParams::new(cfg.detector.kappa, e_d, 0.0, cfg.detector.max_time)?;
            let r = mean_click_time(power, det, dt, &run)?;
            flag |= r.regime_violation;
            ratios.push(r.ratio);
            single.push(vec![
                Cell::Num(power),
                Cell::Num(e_d),
                Cell::Num(r.tau_mean),
                Cell::Num(r.tau_se),
                Cell::Num(r.ratio),
                Cell::Num(r.kappa_over_tau),
                Cell::Int(r.clicks),
                Cell::Bool(r.regime_violation),
            ]);
        }
    }
    let (lo, hi) = ratios
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &r| (a.min(r), b.max(r)));
    report.diag("single_ratio_min", Cell::Num(lo));
    report.diag("single_ratio_max", Cell::Num(hi));
    report.diag("single_ratio_spread", Cell::Num(hi / lo - 1.0));

    let cross = scalar_cross(cfg)?;
    let params = cfg.coincidence_params()?;
    let e0 = cfg.model.e0;
    let base = mean_joint_time(cross, e0, &params, dt, &run)?;
    let mut joint = Table::new(
        "joint_scaling",
        &[
            "case",
            "tau_mean",
            "tau_se",
            "ratio_to_baseline",
            "predicted_ratio",
            "threshold_product",
            "signal_over_background",
            "kappa_over_tau",
            "regime_violation",
        ],
    );
    let mut push = |name: &str, r: &JointTimeReport, predicted: f64| {
        joint.push(vec![
            Cell::text(name),
            Cell::Num(r.tau_mean),
            Cell::Num(r.tau_se),
            Cell::Num(r.tau_mean / base.tau_mean),
            Cell::Num(predicted),
            Cell::Num(r.threshold_product),
            Cell::Num(r.signal_over_background),
            Cell::Num(r.kappa_over_tau),
            Cell::Bool(r.regime_violation),
        ]);
        r.regime_violation
    };
    flag |= push("baseline", &base, 1.0);
    let mut doubled = params;
    doubled.detector.threshold *= 2.0;
    flag |= push(
        "double_threshold",
        &mean_joint_time(cross, e0, &doubled, dt, &run)?,
        4.0,
    );
    let mut more_bg = params;
    more_bg.detector.background *= 2.0;
    flag |= push(
        "double_background",
        &mean_joint_time(cross, 2.0 * e0, &more_bg, dt, &run)?,
        0.5,
    );
    flag |= push(
        "double_power",
        &mean_joint_time(cross * std::f64::consts::SQRT_2, e0, &params, dt, &run)?,
        0.5,
    );
    report.regime_violation = flag;
    report.diag("regime_violation", Cell::Bool(flag));
    report.tables.push(single);
    report.tables.push(joint);
    Ok(report)
}

/// Which identity a randomized case exercises.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Identity {
    Mean,
    Correlation,
    Block,
}

impl Identity {
    pub fn name(self) -> &'static str {
        match self {
            Identity::Mean => "mean",
            Identity::Correlation => "correlation",
            Identity::Block => "block",
        }
    }
}

/// One randomized quadratic-form check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AppendixCase {
    pub index: usize,
    pub identity: Identity,
    pub dim: usize,
    pub analytic: f64,
    pub mc: f64,
    pub se: f64,
}

impl AppendixCase {
    pub fn z(&self) -> f64 {
        (self.mc - self.analytic).abs() / self.se
    }

    pub fn passes(&self) -> bool {
        self.z() <= 3.0
    }
}

fn random_matrix(n: usize, rng: &mut crate::rng::TrialRng) -> CMatrix {
    CMatrix::from_fn(n, n, |_, _| complex_normal(rng))
}

/// Random covariance `G·G†/d`.
fn random_covariance(d: usize, rng: &mut crate::rng::TrialRng) -> CMatrix {
    let g = random_matrix(d, rng);
    (&g * g.adjoint()).unscale(d as f64)
}

fn random_hermitian(d: usize, rng: &mut crate::rng::TrialRng) -> CMatrix {
    linalg::hermitian_part(&random_matrix(d, rng))
}

/// Runs randomized case `index`: dimension `1 + index mod 8` (at least 2 for
/// the block identity), identity chosen by `index mod 3`.
pub fn appendix_case(index: usize, samples: u64, seed: u64, workers: usize) -> Result<AppendixCase> {
    let identity = [Identity::Mean, Identity::Correlation, Identity::Block][index % 3];
    let mut dim = 1 + index % APPENDIX_MAX_DIM;
    if identity == Identity::Block {
        dim = dim.max(2);
    }
    let mut rng = StreamKey::new(seed, 0xa0).trial(index as u64);
    let cov = random_covariance(dim, &mut rng);
    let run = RunParams::new(samples, derive_seed(seed, index as u64)).with_workers(workers);
    let (analytic, est) = match identity {
        Identity::Mean => {
            let law = GaussianLaw::new(cov)?;
            let a = QuadraticForm::new(random_hermitian(dim, &mut rng))?;
            (quadratic_mean(&law, &a)?, mc_quadratic_mean(&law, &a, &run)?)
        }
        Identity::Correlation => {
            let law = GaussianLaw::new(cov)?;
            let a1 = QuadraticForm::new(random_hermitian(dim, &mut rng))?;
            let a2 = QuadraticForm::new(random_hermitian(dim, &mut rng))?;
            (
                quadratic_correlation(&law, &a1, &a2)?,
                mc_quadratic_correlation(&law, &a1, &a2, &run)?,
            )
        }
        Identity::Block => {
            let d1 = dim / 2;
            let law = GaussianLaw::bipartite(cov, d1, dim - d1)?;
            let a1 = QuadraticForm::new(random_hermitian(d1, &mut rng))?;
            let a2 = QuadraticForm::new(random_hermitian(dim - d1, &mut rng))?;
            let full1 = embed_block(&law, &a1, false)?;
            let full2 = embed_block(&law, &a2, true)?;
            (
                quadratic_correlation_block(&law, &a1, &a2)?,
                mc_quadratic_correlation(&law, &full1, &full2, &run)?,
            )
        }
    };
    Ok(AppendixCase {
        index,
        identity,
        dim,
        analytic,
        mc: est.value,
        se: est.se,
    })
}

fn appendix_check(cfg: &ExperimentConfig) -> Result<Report> {
    let mut report = Report::new(cfg);
    let mut table = Table::new(
        "identities",
        &["case", "identity", "dim", "analytic", "mc", "se", "z", "pass"],
    );
    let mut passed = 0u64;
    for i in 0..APPENDIX_CASES {
        let c = appendix_case(i, cfg.run.trials, cfg.run.seed, cfg.run.workers)?;
        passed += u64::from(c.passes());
        table.push(vec![
            Cell::Int(i as u64),
            Cell::text(c.identity.name()),
            Cell::Int(c.dim as u64),
            Cell::Num(c.analytic),
            Cell::Num(c.mc),
            Cell::Num(c.se),
            Cell::Num(c.z()),
            Cell::Bool(c.passes()),
        ]);
    }
    report.diag("cases", Cell::Int(APPENDIX_CASES as u64));
    report.diag("passed", Cell::Int(passed));
    report.diag("samples_per_case", Cell::Int(cfg.run.trials));
    report.tables.push(table);
    Ok(report)
}

/// Smallest eigenvalue of the per-bin covariance relative to its largest
/// magnitude, and the number of bins failing the PSD check, over
/// `s = t·Δ` for `t = 0..=n_bins`.
pub fn scan_psd(model: &CorrelationModel, dt: f64, n_bins: u64) -> Result<(f64, u64)> {
    let mut worst = f64::INFINITY;
    let mut failures = 0;
    for t in 0..=n_bins {
        let cov = model.per_bin_covariance(t as f64 * dt).matrix;
        if !validate_psd(&cov, PSD_TOL)? {
            failures += 1;
        }
        let ev = linalg::hermitian_eigenvalues(&cov);
        let scale = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if scale > 0.0 {
            worst = worst.min(ev[0] / scale);
        }
    }
    Ok((worst, failures))
}

fn validate_model(cfg: &ExperimentConfig) -> Result<Report> {
    let model = cfg.correlation_model()?;
    let dt = cfg.detector.dt;
    let n_bins = (cfg.detector.max_time / dt).round() as u64;
    let (worst, failures) = scan_psd(&model, dt, n_bins)?;
    let mut report = Report::new(cfg);
    let mut table = Table::new("checks", &["check", "value", "expected", "pass"]);
    table.push(vec![
        Cell::text("psd_failures"),
        Cell::Num(failures as f64),
        Cell::Num(0.0),
        Cell::Bool(failures == 0),
    ]);
    table.push(vec![
        Cell::text("min_relative_eigenvalue"),
        Cell::Num(worst),
        Cell::Num(-PSD_TOL),
        Cell::Bool(worst >= -PSD_TOL),
    ]);
    let total = model.total_cross_power();
    for side in [Side::One, Side::Two] {
        let tr = model.side_power(side).trace().re;
        table.push(vec![
            Cell::text(format!("side{}_trace", side.index())),
            Cell::Num(tr),
            Cell::Num(total),
            Cell::Bool((tr - total).abs() <= 1e-12 * total.max(1.0)),
        ]);
    }
    if let Ok(psi) = oracle::state_from_correlations(model.cross()) {
        for side in [Side::One, Side::Two] {
            let rho = oracle::partial_trace(&psi, side);
            let power = model.side_power(side);
            let expected = power.unscale(power.trace().re);
            // Side 2 of the state is the transpose of the side-2 power.
            let expected = if side == Side::Two {
                expected.transpose()
            } else {
                expected
            };
            let defect = linalg::frobenius(&(rho.matrix() - expected));
            table.push(vec![
                Cell::text(format!("side{}_partial_trace_defect", side.index())),
                Cell::Num(defect),
                Cell::Num(0.0),
                Cell::Bool(defect <= 1e-10),
            ]);
        }
    }
    let ok = table.rows.iter().all(|r| r.last() == Some(&Cell::Bool(true)));
    report.diag("bins_checked", Cell::Int(n_bins + 1));
    report.diag("joint_detection_allowed", Cell::Bool(model.joint_detection_allowed()));
    report.diag("valid", Cell::Bool(ok));
    report.tables.push(table);
    if !ok {
        report.check_failed = true;
    }
    Ok(report)
}
