//! Predicted statistical behaviour of the detection model beyond the
//! acceptance suite: Born-rule ratios, click-time scaling laws, marginal and
//! coincidence consistency. Tolerances are the predicted ones; several of
//! these do not hold for the simulated model (see README).

use tsd_core::coincidence::{
    estimate_joint_probabilities, estimate_marginal_probabilities, CoincidenceMode, CoincidenceParams,
};
use tsd_core::detector::{estimate_single_probabilities, mean_click_time, CountingMode, DetectorParams};
use tsd_core::linalg::{diag, CMatrix};
use tsd_core::model::{build_matrix_model, singlet_model, SingleSignalSpec};
use tsd_core::parallel::RunParams;

const DT: f64 = 0.01;
const KAPPA: f64 = 0.04;
const E_D: f64 = 50.0;
const E0: f64 = 25.0;
const MAX_TIME: f64 = 400.0;

fn joint(window: f64, mode: CoincidenceMode) -> CoincidenceParams {
    CoincidenceParams::new(DetectorParams::new(KAPPA, E_D, E0, MAX_TIME).unwrap(), window, mode).unwrap()
}

fn single(threshold: f64) -> DetectorParams {
    DetectorParams::new(KAPPA, threshold, 0.0, MAX_TIME).unwrap()
}

#[test]
fn click_ratios_follow_channel_powers() {
    let mut failures = Vec::new();
    for (a, b) in [(1.0, 1.0), (3.0, 7.0), (1.0, 9.0)] {
        let total = a + b;
        let signal = SingleSignalSpec::diagonal(&[a / total, b / total], 0.0).unwrap();
        let report = estimate_single_probabilities(
            &signal,
            &CMatrix::identity(2, 2),
            single(E_D),
            DT,
            &RunParams::new(30_000, 101),
            CountingMode::Race,
        )
        .unwrap();
        let ratio = report.probabilities[0] / report.probabilities[1];
        let want = a / b;
        if (ratio / want - 1.0).abs() > 0.10 {
            failures.push(format!("{a}:{b} measured ratio {ratio:.4}"));
        }
    }
    assert!(failures.is_empty(), "{failures:?}");
}

#[test]
fn click_time_doubles_with_threshold() {
    let run = RunParams::new(4000, 103);
    let low = mean_click_time(1.0, single(20.0), DT, &run).unwrap();
    let high = mean_click_time(1.0, single(40.0), DT, &run).unwrap();
    let r = high.tau_mean / low.tau_mean;
    assert!((r / 2.0 - 1.0).abs() <= 0.05, "τ̄ ratio {r:.4} ({low:?}, {high:?})");
}

#[test]
fn click_time_halves_with_power() {
    let run = RunParams::new(4000, 107);
    let weak = mean_click_time(1.0, single(E_D), DT, &run).unwrap();
    let strong = mean_click_time(2.0, single(E_D), DT, &run).unwrap();
    let r = strong.tau_mean / weak.tau_mean;
    assert!((r / 0.5 - 1.0).abs() <= 0.05, "τ̄ ratio {r:.4} ({weak:?}, {strong:?})");
}

#[test]
fn singlet_marginals_are_even() {
    let (s1, s2) = estimate_marginal_probabilities(
        &singlet_model(E0, 1.0).unwrap(),
        &joint(0.0, CoincidenceMode::PerPair),
        DT,
        &RunParams::new(10_000, 109),
    )
    .unwrap();
    for r in [&s1, &s2] {
        assert!(r.max_discrepancy() <= 0.02, "{:?}", r.probabilities);
    }
}

#[test]
fn dark_channel_never_wins_a_marginal() {
    let model = build_matrix_model(diag(&[1.0, 0.0]), E0).unwrap();
    let (s1, _) = estimate_marginal_probabilities(
        &model,
        &joint(0.0, CoincidenceMode::PerPair),
        DT,
        &RunParams::new(4000, 113),
    )
    .unwrap();
    assert_eq!(s1.oracle, vec![1.0, 0.0]);
    assert!(s1.probabilities[1] <= 0.02, "{:?}", s1.probabilities);
}

#[test]
fn uncorrelated_pairs_are_suppressed() {
    let model = build_matrix_model(diag(&[1.0, 0.0]), E0).unwrap();
    let r = estimate_joint_probabilities(
        &model,
        &joint(0.0, CoincidenceMode::PerPair),
        DT,
        &RunParams::new(4000, 127),
    )
    .unwrap();
    assert!(r.max_discrepancy() <= 0.03, "{:?} vs {:?}", r.probabilities, r.oracle);
}

#[test]
fn coincidence_modes_agree() {
    let model = singlet_model(E0, 1.0).unwrap();
    let run = RunParams::new(10_000, 131);
    let a = estimate_joint_probabilities(&model, &joint(0.0, CoincidenceMode::PerPair), DT, &run).unwrap();
    let b = estimate_joint_probabilities(&model, &joint(0.0, CoincidenceMode::Race), DT, &run).unwrap();
    for k in 0..4 {
        assert!(
            (a.probabilities[k] - b.probabilities[k]).abs() <= 0.04,
            "{:?} vs {:?}",
            a.probabilities,
            b.probabilities
        );
    }
}

#[test]
fn race_marginals_match_joint_sums() {
    let model = singlet_model(E0, 1.0).unwrap();
    let run = RunParams::new(10_000, 137);
    let p = joint(0.0, CoincidenceMode::Race);
    let j = estimate_joint_probabilities(&model, &p, DT, &run).unwrap();
    let (s1, _) = estimate_marginal_probabilities(&model, &p, DT, &run).unwrap();
    for i in 0..2 {
        let summed = j.probabilities[2 * i] + j.probabilities[2 * i + 1];
        assert!(
            (summed - s1.probabilities[i]).abs() <= 0.04,
            "side 1 channel {i}: {summed} vs {}",
            s1.probabilities[i]
        );
    }
}

#[test]
fn window_width_is_inessential() {
    let model = singlet_model(E0, 1.0).unwrap();
    let run = RunParams::new(10_000, 139);
    let a = estimate_joint_probabilities(&model, &joint(0.0, CoincidenceMode::PerPair), DT, &run).unwrap();
    let b = estimate_joint_probabilities(&model, &joint(4.0 * DT, CoincidenceMode::PerPair), DT, &run).unwrap();
    for k in 0..4 {
        assert!(
            (a.probabilities[k] - b.probabilities[k]).abs() < 0.02,
            "{:?} vs {:?}",
            a.probabilities,
            b.probabilities
        );
    }
}
