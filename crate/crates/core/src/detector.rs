//! Threshold detection of a single multi-channel signal.
//!
//! A detector integrates its channel over a sliding window of width `κ`
//! (`K = κ/Δ` bins), forms the smoothed energy
//! `|(Δ/√κ)·Σ_window φ_t|²`, subtracts the calibrated background `E₀`, and
//! clicks at the first bin where the result reaches the threshold `E_d`.
//!
//! Each trial restarts the signal clock at `s = 0`: the kernel grows with
//! absolute time, so a detector reset is modelled as a fresh realization.
//! No crossing is tested until the window has filled.

use num_complex::Complex64;
use rand::Rng;

use crate::error::{Result, TsdError};
use crate::linalg::{self, CMatrix};
use crate::model::SingleSignalSpec;
use crate::oracle;
use crate::parallel::{map_trials, RunParams};
use crate::rng::{StreamKey, TrialRng};
use crate::sampler::{DiscretizationParams, FactorCache};
use crate::stats::{binomial_se, mean_and_se, normalize_rates, WaitingTime};

pub(crate) const LANE_SINGLE: u64 = 0x51;
pub(crate) const LANE_BACKGROUND: u64 = 0x52;
pub(crate) const LANE_MEAN_TIME: u64 = 0x53;

/// Minimum number of clicks for a probability estimate to be reported.
pub const MIN_CLICKS: u64 = 100;
/// Remark-1 regime: the window must be much shorter than the click time.
pub const MAX_KAPPA_OVER_TAU: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    pub kappa: f64,
    pub threshold: f64,
    /// Background energy subtracted by calibration.
    pub background: f64,
    pub max_time: f64,
}

impl DetectorParams {
    pub fn new(kappa: f64, threshold: f64, background: f64, max_time: f64) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(TsdError::invalid("kappa", format!("must be > 0, got {kappa}")));
        }
        if !(threshold.is_finite() && threshold > 0.0) {
            return Err(TsdError::invalid("threshold", format!("must be > 0, got {threshold}")));
        }
        if !(background.is_finite() && background >= 0.0) {
            return Err(TsdError::invalid(
                "background",
                format!("must be ≥ 0, got {background}"),
            ));
        }
        if !(max_time.is_finite() && max_time >= 10.0 * kappa) {
            return Err(TsdError::invalid(
                "max_time",
                format!("must be ≥ 10·kappa = {}, got {max_time}", 10.0 * kappa),
            ));
        }
        Ok(Self {
            kappa,
            threshold,
            background,
            max_time,
        })
    }

    /// `K = κ/Δ`, which must be a positive integer.
    pub fn window_bins(&self, dt: f64) -> Result<usize> {
        integer_ratio(self.kappa, dt)
            .ok_or_else(|| TsdError::invalid("kappa", format!("κ/Δ = {} is not a positive integer", self.kappa / dt)))
    }

    /// Effective threshold on the raw smoothed energy, `E_d + E₀`.
    pub fn calibrated_threshold(&self) -> f64 {
        self.threshold + self.background
    }

    /// Discretization covering this detector's horizon.
    pub fn discretization(&self, dt: f64) -> Result<DiscretizationParams> {
        DiscretizationParams::with_horizon(dt, self.max_time)
    }
}

/// `Some(n)` if `x/unit` is a positive integer `n` up to rounding noise.
pub(crate) fn integer_ratio(x: f64, unit: f64) -> Option<usize> {
    let r = x / unit;
    let n = r.round();
    if n >= 1.0 && (r - n).abs() <= 1e-9 * n.max(1.0) {
        Some(n as usize)
    } else {
        None
    }
}

/// `|(Δ/√κ)·Σ φ_t|²` over a full window of samples.
pub fn smoothed_energy(window: &[Complex64], dt: f64, kappa: f64) -> f64 {
    let sum: Complex64 = window.iter().sum();
    (sum * (dt / kappa.sqrt())).norm_sqr()
}

/// Sliding-window integrators for several channels, maintained as running
/// complex sums over a ring buffer.
#[derive(Debug, Clone)]
pub struct WindowBank {
    channels: usize,
    window: usize,
    ring: Vec<Complex64>,
    sums: Vec<Complex64>,
    filled: usize,
    cursor: usize,
}

impl WindowBank {
    pub fn new(channels: usize, window: usize) -> Self {
        Self {
            channels,
            window,
            ring: vec![Complex64::new(0.0, 0.0); channels * window],
            sums: vec![Complex64::new(0.0, 0.0); channels],
            filled: 0,
            cursor: 0,
        }
    }

    #[inline]
    pub fn push(&mut self, values: &[Complex64]) {
        let base = self.cursor * self.channels;
        for (i, &z) in values.iter().take(self.channels).enumerate() {
            let old = std::mem::replace(&mut self.ring[base + i], z);
            self.sums[i] += z - old;
        }
        self.cursor = (self.cursor + 1) % self.window;
        self.filled = (self.filled + 1).min(self.window);
    }

    pub fn is_full(&self) -> bool {
        self.filled == self.window
    }

    /// `|Σ_window φ|²` for channel `i` (multiply by `Δ²/κ` for the energy).
    #[inline]
    pub fn raw_energy(&self, i: usize) -> f64 {
        self.sums[i].norm_sqr()
    }
}

/// One detection event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClickRecord {
    pub channel: usize,
    pub tau: f64,
    pub trial_index: u64,
}

/// How clicks of several channels are turned into probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CountingMode {
    /// Each trial runs all channels together; the first channel to cross
    /// takes the click. Probabilities are click counts over total clicks.
    #[default]
    Race,
    /// Each channel is its own detector with its own trials; probabilities are
    /// the normalized click rates `1/τ̄_i`.
    PerChannel,
}

/// A single-signal detector ready to run trials: the signal law expressed in
/// the measurement basis, with its per-bin factors precomputed.
#[derive(Debug, Clone)]
pub struct SingleDetector {
    signal: SingleSignalSpec,
    det: DetectorParams,
    disc: DiscretizationParams,
    window: usize,
    cache: FactorCache,
}

impl SingleDetector {
    pub fn new(signal: &SingleSignalSpec, basis: &CMatrix, det: DetectorParams, dt: f64) -> Result<Self> {
        let signal = signal.in_basis(basis)?;
        Self::prepared(signal, det, dt)
    }

    fn prepared(signal: SingleSignalSpec, det: DetectorParams, dt: f64) -> Result<Self> {
        let window = det.window_bins(dt)?;
        let disc = det.discretization(dt)?;
        let cache = FactorCache::build(signal.dim(), &disc, disc.max_bins(), |s| signal.covariance_at(s))?;
        Ok(Self {
            signal,
            det,
            disc,
            window,
            cache,
        })
    }

    /// Detector watching only channel `i` of this signal.
    pub fn channel(&self, i: usize) -> Result<Self> {
        let p = self.signal.power()[(i, i)].re.max(0.0);
        let marginal = SingleSignalSpec::new(linalg::diag(&[p]), self.signal.background())
            .or_else(|_| SingleSignalSpec::new(linalg::diag(&[f64::MIN_POSITIVE]), self.signal.background()))?;
        Self::prepared(marginal, self.det, self.disc.dt())
    }

    pub fn signal(&self) -> &SingleSignalSpec {
        &self.signal
    }

    pub fn params(&self) -> &DetectorParams {
        &self.det
    }

    pub fn discretization(&self) -> &DiscretizationParams {
        &self.disc
    }

    /// Runs one trial; `None` if nothing crossed before `max_time`.
    pub fn run_trial(&self, trial_index: u64, rng: &mut TrialRng) -> Option<ClickRecord> {
        let m = self.signal.dim();
        let dt = self.disc.dt();
        let scale = dt * dt / self.det.kappa;
        let level = self.det.calibrated_threshold() / scale;
        let mut bank = WindowBank::new(m, self.window);
        let mut noise = vec![Complex64::new(0.0, 0.0); m];
        let mut z = vec![Complex64::new(0.0, 0.0); m];
        let mut crossed: Vec<usize> = Vec::with_capacity(m);
        for t in 0..self.cache.n_bins() {
            self.cache.sample_into(t, rng, &mut noise, &mut z);
            bank.push(&z);
            if !bank.is_full() {
                continue;
            }
            crossed.clear();
            crossed.extend((0..m).filter(|&i| bank.raw_energy(i) >= level));
            if !crossed.is_empty() {
                let channel = if crossed.len() == 1 {
                    crossed[0]
                } else {
                    crossed[rng.random_range(0..crossed.len())]
                };
                return Some(ClickRecord {
                    channel,
                    tau: (t + 1) as f64 * dt,
                    trial_index,
                });
            }
        }
        None
    }

    fn run_many(&self, key: StreamKey, run: &RunParams) -> Vec<Option<ClickRecord>> {
        map_trials(run.n_trials, run.workers, |i| self.run_trial(i, &mut key.trial(i)))
    }
}

/// Runs one trial of `signal` measured in `basis`.
pub fn run_single_trial(
    signal: &SingleSignalSpec,
    basis: &CMatrix,
    det: DetectorParams,
    dt: f64,
    trial_index: u64,
    rng: &mut TrialRng,
) -> Result<Option<ClickRecord>> {
    Ok(SingleDetector::new(signal, basis, det, dt)?.run_trial(trial_index, rng))
}

/// Click statistics for a set of channels (or channel pairs), each row paired
/// with its quantum reference value.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityReport {
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
    pub probabilities: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub oracle: Vec<f64>,
    /// Mean click time over all clicks.
    pub mean_tau: f64,
    pub mean_tau_se: f64,
    pub trials: u64,
    pub no_clicks: u64,
}

impl ProbabilityReport {
    pub fn total_clicks(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn discrepancies(&self) -> Vec<f64> {
        self.probabilities
            .iter()
            .zip(&self.oracle)
            .map(|(p, o)| p - o)
            .collect()
    }

    pub fn max_discrepancy(&self) -> f64 {
        self.discrepancies().iter().fold(0.0f64, |a, d| a.max(d.abs()))
    }

    pub fn no_click_rate(&self) -> f64 {
        if self.trials == 0 {
            0.0
        } else {
            self.no_clicks as f64 / self.trials as f64
        }
    }

    pub(crate) fn from_counts(
        labels: Vec<String>,
        counts: Vec<u64>,
        oracle: Vec<f64>,
        taus: &[f64],
        trials: u64,
    ) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total < MIN_CLICKS {
            return Err(TsdError::InsufficientClicks {
                got: total,
                need: MIN_CLICKS,
            });
        }
        let probabilities: Vec<f64> = counts.iter().map(|&k| k as f64 / total as f64).collect();
        let std_errors = probabilities.iter().map(|&p| binomial_se(p, total)).collect();
        let (mean_tau, mean_tau_se) = mean_and_se(taus);
        Ok(Self {
            labels,
            counts,
            probabilities,
            std_errors,
            oracle,
            mean_tau,
            mean_tau_se,
            trials,
            no_clicks: trials - total,
        })
    }

    pub(crate) fn from_waiting_times(
        labels: Vec<String>,
        waits: &[WaitingTime],
        oracle: Vec<f64>,
        all_taus: &[f64],
    ) -> Result<Self> {
        let total: u64 = waits.iter().map(|w| w.clicks).sum();
        if total < MIN_CLICKS {
            return Err(TsdError::InsufficientClicks {
                got: total,
                need: MIN_CLICKS,
            });
        }
        let rates: Vec<f64> = waits.iter().map(WaitingTime::rate).collect();
        let rate_se: Vec<f64> = waits.iter().map(WaitingTime::rate_se).collect();
        let (probabilities, std_errors) = normalize_rates(&rates, &rate_se);
        let (mean_tau, mean_tau_se) = mean_and_se(all_taus);
        Ok(Self {
            labels,
            counts: waits.iter().map(|w| w.clicks).collect(),
            probabilities,
            std_errors,
            oracle,
            mean_tau,
            mean_tau_se,
            trials: waits.iter().map(WaitingTime::trials).sum(),
            no_clicks: waits.iter().map(|w| w.censored).sum(),
        })
    }
}

/// Born-rule reference `⟨e_j|ρ|e_j⟩` with `ρ = B/Tr B` for every basis column.
pub fn single_oracle(signal: &SingleSignalSpec, basis: &CMatrix) -> Result<Vec<f64>> {
    let rho = oracle::density_from_covariance(signal.power())?;
    Ok((0..basis.ncols())
        .map(|j| oracle::born_probability(&rho, &basis.column(j).into_owned()))
        .collect())
}

/// Estimates per-channel detection probabilities over `run.n_trials` trials.
pub fn estimate_single_probabilities(
    signal: &SingleSignalSpec,
    basis: &CMatrix,
    det: DetectorParams,
    dt: f64,
    run: &RunParams,
    mode: CountingMode,
) -> Result<ProbabilityReport> {
    if run.n_trials == 0 {
        return Err(TsdError::InsufficientClicks {
            got: 0,
            need: MIN_CLICKS,
        });
    }
    let detector = SingleDetector::new(signal, basis, det, dt)?;
    let oracle = single_oracle(signal, basis)?;
    estimate_with(
        &detector,
        oracle,
        StreamKey::new(run.master_seed, LANE_SINGLE),
        run,
        mode,
    )
}

/// Runs a prepared detector and counts clicks per channel.
pub(crate) fn estimate_with(
    detector: &SingleDetector,
    oracle: Vec<f64>,
    key: StreamKey,
    run: &RunParams,
    mode: CountingMode,
) -> Result<ProbabilityReport> {
    if run.n_trials == 0 {
        return Err(TsdError::InsufficientClicks {
            got: 0,
            need: MIN_CLICKS,
        });
    }
    let m = detector.signal().dim();
    let labels = (0..m).map(|i| i.to_string()).collect();
    match mode {
        CountingMode::Race => {
            let outcomes = detector.run_many(key, run);
            let mut counts = vec![0u64; m];
            let mut taus = Vec::with_capacity(outcomes.len());
            for click in outcomes.iter().flatten() {
                counts[click.channel] += 1;
                taus.push(click.tau);
            }
            ProbabilityReport::from_counts(labels, counts, oracle, &taus, run.n_trials)
        }
        CountingMode::PerChannel => {
            let mut waits = Vec::with_capacity(m);
            let mut all_taus = Vec::new();
            for i in 0..m {
                let single = detector.channel(i)?;
                let outcomes = single.run_many(key.child(i as u64), run);
                let taus: Vec<f64> = outcomes.iter().flatten().map(|c| c.tau).collect();
                let censored = outcomes.len() as u64 - taus.len() as u64;
                waits.push(WaitingTime::from_trials(&taus, censored, detector.params().max_time));
                all_taus.extend(taus);
            }
            ProbabilityReport::from_waiting_times(labels, &waits, oracle, &all_taus)
        }
    }
}

/// Mean single-channel click time and its scaling diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanClickTime {
    pub tau_mean: f64,
    pub tau_se: f64,
    /// `τ̄·σ²/E_d`; the first-order prediction would make this 1.
    pub ratio: f64,
    pub kappa_over_tau: f64,
    pub clicks: u64,
    pub censored: u64,
    /// `κ/τ̄` exceeded [`MAX_KAPPA_OVER_TAU`].
    pub regime_violation: bool,
}

/// Mean click time of a single channel with power `σ²` and no background.
pub fn mean_click_time(power: f64, det: DetectorParams, dt: f64, run: &RunParams) -> Result<MeanClickTime> {
    if det.background != 0.0 {
        return Err(TsdError::invalid(
            "background",
            "mean click time is defined without background",
        ));
    }
    if !(power.is_finite() && power > 0.0) {
        return Err(TsdError::invalid("power", format!("must be > 0, got {power}")));
    }
    run.require_trials(2)?;
    let signal = SingleSignalSpec::diagonal(&[power], 0.0)?;
    let detector = SingleDetector::prepared(signal, det, dt)?;
    let outcomes = detector.run_many(StreamKey::new(run.master_seed, LANE_MEAN_TIME), run);
    let taus: Vec<f64> = outcomes.iter().flatten().map(|c| c.tau).collect();
    let censored = run.n_trials - taus.len() as u64;
    let wait = WaitingTime::from_trials(&taus, censored, det.max_time);
    let tau_mean = wait.mean();
    let kappa_over_tau = det.kappa / tau_mean;
    Ok(MeanClickTime {
        tau_mean,
        tau_se: wait.mean_se(),
        ratio: tau_mean * power / det.threshold,
        kappa_over_tau,
        clicks: wait.clicks,
        censored,
        regime_violation: kappa_over_tau.is_nan() || kappa_over_tau > MAX_KAPPA_OVER_TAU,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundEstimate {
    pub mean: f64,
    pub se: f64,
}

/// Mean smoothed energy of a pure background signal (covariance `E₀·I/Δ` per
/// bin), one full window per trial.
pub fn calibrate_background(
    background: f64,
    det: DetectorParams,
    dt: f64,
    run: &RunParams,
) -> Result<BackgroundEstimate> {
    run.require_trials(1000)?;
    if !(background.is_finite() && background >= 0.0) {
        return Err(TsdError::invalid(
            "background",
            format!("must be ≥ 0, got {background}"),
        ));
    }
    let k = det.window_bins(dt)?;
    let sd = (background / dt).sqrt();
    let key = StreamKey::new(run.master_seed, LANE_BACKGROUND);
    let energies = map_trials(run.n_trials, run.workers, |i| {
        let mut rng = key.trial(i);
        let window: Vec<Complex64> = (0..k).map(|_| crate::rng::complex_normal(&mut rng) * sd).collect();
        smoothed_energy(&window, dt, det.kappa)
    });
    let (mean, se) = mean_and_se(&energies);
    Ok(BackgroundEstimate { mean, se })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, diag};

    #[test]
    fn smoothed_energy_examples() {
        let dt = 0.01;
        let k = 8;
        let kappa = k as f64 * dt;
        let cst = c(3.0, -1.0);
        let e = smoothed_energy(&vec![cst; k], dt, kappa);
        assert!((e - kappa * cst.norm_sqr()).abs() < 1e-12);
        assert_eq!(smoothed_energy(&vec![c(0.0, 0.0); k], dt, kappa), 0.0);
        let alt: Vec<_> = (0..k).map(|i| if i % 2 == 0 { cst } else { -cst }).collect();
        assert_eq!(smoothed_energy(&alt, dt, kappa), 0.0);
    }

    #[test]
    fn window_bank_matches_direct_sum() {
        let mut bank = WindowBank::new(1, 3);
        let xs: Vec<Complex64> = (0..10).map(|i| c(i as f64, -(i as f64) / 2.0)).collect();
        for (t, x) in xs.iter().enumerate() {
            bank.push(&[*x]);
            if t >= 2 {
                let direct: Complex64 = xs[t - 2..=t].iter().sum();
                assert!((bank.raw_energy(0) - direct.norm_sqr()).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn detector_params_validation() {
        assert!(DetectorParams::new(0.04, 50.0, 0.0, 400.0).is_ok());
        assert!(DetectorParams::new(0.04, 0.0, 0.0, 400.0).is_err());
        assert!(DetectorParams::new(0.04, 1.0, 0.0, 0.3).is_err());
        let d = DetectorParams::new(0.035, 1.0, 0.0, 10.0).unwrap();
        assert!(d.window_bins(0.01).is_err());
        let d = DetectorParams::new(0.04, 1.0, 0.0, 10.0).unwrap();
        assert_eq!(d.window_bins(0.01).unwrap(), 4);
    }

    #[test]
    fn dead_channel_never_clicks() {
        let sig = SingleSignalSpec::diagonal(&[1.0, 0.0], 0.0).unwrap();
        let det = DetectorParams::new(0.04, 5.0, 0.0, 40.0).unwrap();
        let detector = SingleDetector::new(&sig, &CMatrix::identity(2, 2), det, 0.01).unwrap();
        let key = StreamKey::new(3, 0);
        let mut clicks = 0;
        for i in 0..200 {
            if let Some(click) = detector.run_trial(i, &mut key.trial(i)) {
                assert_eq!(click.channel, 0);
                assert!(click.tau >= det.kappa - 1e-12 && click.tau <= det.max_time + 1e-9);
                clicks += 1;
            }
        }
        assert_eq!(clicks, 200);
    }

    #[test]
    fn rank_one_power_all_clicks_in_its_channel() {
        let v = [c(0.6, 0.0), c(0.0, 0.8)];
        let b = CMatrix::from_fn(2, 2, |i, j| v[i] * v[j].conj());
        let sig = SingleSignalSpec::new(b, 0.0).unwrap();
        // Measurement basis containing v as its first vector.
        let basis = linalg::from_rows(2, &[v[0], c(0.0, 0.8), v[1], c(0.6, 0.0)]);
        assert!(linalg::is_unitary(&basis, 1e-12));
        let det = DetectorParams::new(0.04, 5.0, 0.0, 40.0).unwrap();
        let report =
            estimate_single_probabilities(&sig, &basis, det, 0.01, &RunParams::new(300, 9), CountingMode::Race)
                .unwrap();
        assert_eq!(report.probabilities[0], 1.0);
        assert!((report.oracle[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_trials_is_insufficient() {
        let sig = SingleSignalSpec::diagonal(&[0.3, 0.7], 0.0).unwrap();
        let det = DetectorParams::new(0.04, 5.0, 0.0, 40.0).unwrap();
        let r = estimate_single_probabilities(
            &sig,
            &diag(&[1.0, 1.0]),
            det,
            0.01,
            &RunParams::new(0, 1),
            CountingMode::Race,
        );
        assert!(matches!(r, Err(TsdError::InsufficientClicks { .. })));
    }

    #[test]
    fn zero_background_calibrates_to_zero() {
        let det = DetectorParams::new(0.04, 5.0, 0.0, 40.0).unwrap();
        let est = calibrate_background(0.0, det, 0.01, &RunParams::new(1000, 1)).unwrap();
        assert_eq!(est.mean, 0.0);
    }
}
