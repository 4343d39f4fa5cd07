//! Single-signal detection: click semantics, calibration and monotonicity.

use tsd_core::detector::{
    calibrate_background, estimate_single_probabilities, mean_click_time, run_single_trial, CountingMode,
    DetectorParams, SingleDetector,
};
use tsd_core::linalg::{c, diag, from_rows, rotation, CMatrix};
use tsd_core::model::SingleSignalSpec;
use tsd_core::parallel::RunParams;
use tsd_core::rng::StreamKey;
use tsd_core::stats::chi_square_two_sample;
use tsd_core::TsdError;

const DT: f64 = 0.01;
const KAPPA: f64 = 0.04;

fn params(threshold: f64, background: f64) -> DetectorParams {
    DetectorParams::new(KAPPA, threshold, background, 400.0).unwrap()
}

#[test]
fn only_the_powered_channel_clicks() {
    let signal = SingleSignalSpec::diagonal(&[1.0, 0.0], 0.0).unwrap();
    let det = params(20.0, 0.0);
    let key = StreamKey::new(5, 1);
    let detector = SingleDetector::new(&signal, &CMatrix::identity(2, 2), det, DT).unwrap();
    for i in 0..200 {
        let click = detector.run_trial(i, &mut key.trial(i)).expect("finite click time");
        assert_eq!(click.channel, 0);
        assert!(click.tau >= KAPPA && click.tau <= det.max_time);
    }
    let once = run_single_trial(&signal, &CMatrix::identity(2, 2), det, DT, 0, &mut key.trial(0)).unwrap();
    assert_eq!(once, detector.run_trial(0, &mut key.trial(0)));
}

#[test]
fn symmetric_channels_split_evenly() {
    let signal = SingleSignalSpec::diagonal(&[1.0, 1.0], 0.0).unwrap();
    let run = RunParams::new(10_000, 17);
    let report = estimate_single_probabilities(
        &signal,
        &CMatrix::identity(2, 2),
        params(50.0, 0.0),
        DT,
        &run,
        CountingMode::Race,
    )
    .unwrap();
    assert!(
        (report.probabilities[0] - 0.5).abs() <= 3.0 * report.std_errors[0],
        "{report:?}"
    );
    assert_eq!(report.counts.iter().sum::<u64>() + report.no_clicks, report.trials);
    assert!((report.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
}

#[test]
fn rank_one_power_clicks_only_along_its_vector() {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let v = [c(h, 0.0), c(0.0, h)];
    let power = from_rows(
        2,
        &[
            v[0] * v[0].conj(),
            v[0] * v[1].conj(),
            v[1] * v[0].conj(),
            v[1] * v[1].conj(),
        ],
    );
    let signal = SingleSignalSpec::new(power, 0.0).unwrap();
    // Second column orthogonal to v.
    let basis = from_rows(2, &[v[0], c(h, 0.0), v[1], c(0.0, -h)]);
    let run = RunParams::new(500, 3);
    let report =
        estimate_single_probabilities(&signal, &basis, params(20.0, 0.0), DT, &run, CountingMode::Race).unwrap();
    assert_eq!(report.probabilities[0], 1.0);
    assert!((report.oracle[0] - 1.0).abs() < 1e-12);
}

#[test]
fn zero_trials_is_an_error() {
    let signal = SingleSignalSpec::diagonal(&[1.0], 0.0).unwrap();
    let err = estimate_single_probabilities(
        &signal,
        &CMatrix::identity(1, 1),
        params(20.0, 0.0),
        DT,
        &RunParams::new(0, 1),
        CountingMode::Race,
    )
    .unwrap_err();
    assert!(matches!(err, TsdError::InsufficientClicks { .. }));
}

#[test]
fn background_calibration_recovers_e0() {
    let run = RunParams::new(20_000, 23);
    let mut estimates = Vec::new();
    for k in [4, 16, 64] {
        let det = DetectorParams::new(k as f64 * DT, 50.0, 4.0, 100.0).unwrap();
        let est = calibrate_background(4.0, det, DT, &run).unwrap();
        assert!((est.mean - 4.0).abs() <= 3.0 * est.se, "κ = {k}Δ: {est:?}");
        estimates.push(est);
    }
    for a in &estimates {
        for b in &estimates {
            let se = (a.se * a.se + b.se * b.se).sqrt();
            assert!((a.mean - b.mean).abs() <= 3.0 * se, "{a:?} vs {b:?}");
        }
    }
    let zero = calibrate_background(0.0, params(50.0, 0.0), DT, &run).unwrap();
    assert_eq!(zero.mean, 0.0);
}

#[test]
fn mean_click_time_grows_with_threshold() {
    let run = RunParams::new(3000, 29);
    let times: Vec<_> = [10.0, 20.0, 40.0]
        .iter()
        .map(|&e| mean_click_time(1.0, params(e, 0.0), DT, &run).unwrap())
        .collect();
    for w in times.windows(2) {
        let se = (w[0].tau_se.powi(2) + w[1].tau_se.powi(2)).sqrt();
        assert!(w[1].tau_mean + 3.0 * se >= w[0].tau_mean, "{:?}", times);
    }
}

#[test]
fn basis_change_equals_rotated_power() {
    let signal = SingleSignalSpec::diagonal(&[0.3, 0.7], 0.0).unwrap();
    let u = rotation(0.4);
    let rotated = SingleSignalSpec::new(u.adjoint() * signal.power() * &u, 0.0).unwrap();
    let run = RunParams::new(4000, 31);
    let det = params(20.0, 0.0);
    let a = estimate_single_probabilities(&signal, &u, det, DT, &run, CountingMode::Race).unwrap();
    let b =
        estimate_single_probabilities(&rotated, &CMatrix::identity(2, 2), det, DT, &run, CountingMode::Race).unwrap();
    let (stat, df) = chi_square_two_sample(&a.counts, &b.counts);
    assert_eq!(df, 1);
    assert!(stat < 6.635, "chi-square {stat}: {:?} vs {:?}", a.counts, b.counts);
    for k in 0..2 {
        assert!((a.oracle[k] - b.oracle[k]).abs() < 1e-12);
    }
}

#[test]
fn detector_reports_its_configuration() {
    let signal = SingleSignalSpec::diagonal(&[2.0, 1.0], 1.5).unwrap();
    let det = params(30.0, 1.5);
    let d = SingleDetector::new(&signal, &CMatrix::identity(2, 2), det, DT).unwrap();
    assert_eq!(d.params().calibrated_threshold(), 31.5);
    assert_eq!(d.discretization().max_bins(), 40_000);
    assert_eq!(d.channel(1).unwrap().signal().power(), &diag(&[1.0]));
}
