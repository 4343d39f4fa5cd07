//! Joint threshold detection of the two components of a bi-signal.
//!
//! Each side's channel is watched by a calibrated threshold detector (raw
//! smoothed energy compared with `E_d + E₀`). A channel that crosses is
//! latched at its most recent crossing bin. A joint click happens at the first
//! bin where one channel of each side is latched, the two crossing bins are at
//! most `V = v/Δ` apart, and at least one of them is the current bin. The
//! joint click time is the later of the two crossing times.
//!
//! Two counting modes are provided:
//!
//! * per-pair: every pair `(i, j)` runs its own trials on the 2-channel
//!   sub-signal `(φ₁(i), φ₂(j))`, and probabilities are the normalized joint
//!   click rates `1/τ̄_ij`;
//! * race: the full `2m`-channel bi-signal runs, and the first matched pair
//!   takes the click.

use num_complex::Complex64;
use rand::Rng;

use crate::detector::{
    integer_ratio, CountingMode, DetectorParams, ProbabilityReport, SingleDetector, MAX_KAPPA_OVER_TAU, MIN_CLICKS,
};
use crate::error::{Result, TsdError};
use crate::linalg::CMatrix;
use crate::model::{build_scalar_pair_model, CorrelationModel, MatchMode, Side, SingleSignalSpec};
use crate::oracle;
use crate::parallel::{map_trials, RunParams};
use crate::rng::{StreamKey, TrialRng};
use crate::sampler::{DiscretizationParams, FactorCache};
use crate::stats::WaitingTime;

pub(crate) const LANE_PER_PAIR: u64 = 0x61;
pub(crate) const LANE_RACE: u64 = 0x62;
pub(crate) const LANE_MARGINALS: u64 = 0x63;
pub(crate) const LANE_JOINT_TIME: u64 = 0x64;

/// Weak-signal regime: `σ²·τ̄` must stay below this fraction of `E₀`.
pub const MAX_SIGNAL_OVER_BACKGROUND: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CoincidenceMode {
    #[default]
    PerPair,
    Race,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceParams {
    pub detector: DetectorParams,
    /// Coincidence window `v` (time units).
    pub window: f64,
    pub mode: CoincidenceMode,
}

impl CoincidenceParams {
    pub fn new(detector: DetectorParams, window: f64, mode: CoincidenceMode) -> Result<Self> {
        if !(window.is_finite() && window >= 0.0) {
            return Err(TsdError::invalid(
                "coincidence_window",
                format!("must be ≥ 0, got {window}"),
            ));
        }
        Ok(Self { detector, window, mode })
    }

    /// `V = v/Δ`, which must be a nonnegative integer.
    pub fn window_bins(&self, dt: f64) -> Result<usize> {
        if self.window == 0.0 {
            return Ok(0);
        }
        integer_ratio(self.window, dt).ok_or_else(|| {
            TsdError::invalid(
                "coincidence_window",
                format!("v/Δ = {} is not a nonnegative integer", self.window / dt),
            )
        })
    }
}

/// One joint detection event for the pair `(i, j)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointClickRecord {
    pub pair: (usize, usize),
    pub tau1: f64,
    pub tau2: f64,
    pub trial_index: u64,
}

impl JointClickRecord {
    pub fn tau(&self) -> f64 {
        self.tau1.max(self.tau2)
    }
}

/// Latched crossing state for `n1` side-1 and `n2` side-2 channels.
#[derive(Debug, Clone)]
struct Latches {
    last: Vec<Option<u64>>,
    n1: usize,
}

impl Latches {
    fn new(n1: usize, n2: usize) -> Self {
        Self {
            last: vec![None; n1 + n2],
            n1,
        }
    }

    /// Matched pairs `(i, j, u1, u2)` at bin `u`: within `window` bins of
    /// each other and at least one crossing at `u`.
    fn matches(&self, u: u64, window: u64, out: &mut Vec<(usize, usize, u64, u64)>) {
        out.clear();
        for i in 0..self.n1 {
            let Some(u1) = self.last[i] else { continue };
            for j in 0..self.last.len() - self.n1 {
                let Some(u2) = self.last[self.n1 + j] else { continue };
                if (u1 == u || u2 == u) && u1.abs_diff(u2) <= window {
                    out.push((i, j, u1, u2));
                }
            }
        }
    }
}

/// A joint detector over a bi-signal (or a 2-channel sub-bi-signal), with its
/// per-bin factors precomputed.
#[derive(Debug, Clone)]
pub struct JointDetector {
    n1: usize,
    n2: usize,
    det: DetectorParams,
    dt: f64,
    window_bins: usize,
    coincidence_bins: u64,
    cache: FactorCache,
}

impl JointDetector {
    fn check(model: &CorrelationModel) -> Result<()> {
        if !model.joint_detection_allowed() {
            return Err(TsdError::ZeroBackground(model.background()));
        }
        Ok(())
    }

    /// Detector for the pair `(i, j)` alone.
    pub fn for_pair(
        model: &CorrelationModel,
        pair: (usize, usize),
        params: &CoincidenceParams,
        dt: f64,
    ) -> Result<Self> {
        Self::check(model)?;
        let m = model.dim();
        if pair.0 >= m || pair.1 >= m {
            return Err(TsdError::DimensionMismatch(format!(
                "pair {pair:?} out of range for m = {m}"
            )));
        }
        let disc = params.detector.discretization(dt)?;
        let cache = FactorCache::build(2, &disc, disc.max_bins(), |s| model.pair_covariance(pair.0, pair.1, s))?;
        Self::with_cache(1, 1, params, dt, cache)
    }

    /// Detector for the full `2m`-channel bi-signal.
    pub fn full(model: &CorrelationModel, params: &CoincidenceParams, dt: f64) -> Result<Self> {
        Self::check(model)?;
        let disc = params.detector.discretization(dt)?;
        let cache = FactorCache::for_model(model, &disc)?;
        Self::with_cache(model.dim(), model.dim(), params, dt, cache)
    }

    fn with_cache(n1: usize, n2: usize, params: &CoincidenceParams, dt: f64, cache: FactorCache) -> Result<Self> {
        Ok(Self {
            n1,
            n2,
            det: params.detector,
            dt,
            window_bins: params.detector.window_bins(dt)?,
            coincidence_bins: params.window_bins(dt)? as u64,
            cache,
        })
    }

    /// Runs one trial; ties between simultaneously matched pairs are broken
    /// uniformly at random. `None` if no joint click before `max_time`.
    pub fn run_trial(&self, trial_index: u64, rng: &mut TrialRng) -> Option<JointClickRecord> {
        let n = self.n1 + self.n2;
        let scale = self.dt * self.dt / self.det.kappa;
        let level = self.det.calibrated_threshold() / scale;
        let mut bank = crate::detector::WindowBank::new(n, self.window_bins);
        let mut latches = Latches::new(self.n1, self.n2);
        let zero = Complex64::new(0.0, 0.0);
        let mut noise = vec![zero; n];
        let mut z = vec![zero; n];
        let mut found = Vec::new();
        for t in 0..self.cache.n_bins() {
            self.cache.sample_into(t, rng, &mut noise, &mut z);
            bank.push(&z);
            if !bank.is_full() {
                continue;
            }
            let mut any = false;
            for k in 0..n {
                if bank.raw_energy(k) >= level {
                    latches.last[k] = Some(t);
                    any = true;
                }
            }
            if !any {
                continue;
            }
            latches.matches(t, self.coincidence_bins, &mut found);
            if found.is_empty() {
                continue;
            }
            let pick = if found.len() == 1 {
                0
            } else {
                rng.random_range(0..found.len())
            };
            let (i, j, u1, u2) = found[pick];
            return Some(JointClickRecord {
                pair: (i, j),
                tau1: (u1 + 1) as f64 * self.dt,
                tau2: (u2 + 1) as f64 * self.dt,
                trial_index,
            });
        }
        None
    }

    fn run_many(&self, key: StreamKey, run: &RunParams) -> Vec<Option<JointClickRecord>> {
        map_trials(run.n_trials, run.workers, |i| self.run_trial(i, &mut key.trial(i)))
    }
}

/// One per-pair trial for `(i, j)`; the reported pair is `(i, j)` itself.
pub fn run_pair_trial(
    model: &CorrelationModel,
    pair: (usize, usize),
    params: &CoincidenceParams,
    dt: f64,
    trial_index: u64,
    rng: &mut TrialRng,
) -> Result<Option<JointClickRecord>> {
    let detector = JointDetector::for_pair(model, pair, params, dt)?;
    Ok(detector
        .run_trial(trial_index, rng)
        .map(|r| JointClickRecord { pair, ..r }))
}

/// Pair labels in flattened order `(i, j) ↦ i·m + j`; for `m = 2` the
/// channels are named `+` and `−`.
pub fn pair_labels(m: usize) -> Vec<String> {
    let name = |k: usize| -> String {
        if m == 2 {
            ["+", "-"][k].to_string()
        } else {
            k.to_string()
        }
    };
    let mut out = Vec::with_capacity(m * m);
    for i in 0..m {
        for j in 0..m {
            out.push(format!("{}{}", name(i), name(j)));
        }
    }
    out
}

/// Joint detection probabilities for all `m²` pairs.
pub fn estimate_joint_probabilities(
    model: &CorrelationModel,
    params: &CoincidenceParams,
    dt: f64,
    run: &RunParams,
) -> Result<ProbabilityReport> {
    if !model.joint_detection_allowed() {
        return Err(TsdError::ZeroBackground(model.background()));
    }
    let m = model.dim();
    let psi = oracle::state_from_correlations(model.cross())?;
    let oracle_probs: Vec<f64> = psi.amplitudes().iter().map(|a| a.norm_sqr()).collect();
    let labels = pair_labels(m);
    match params.mode {
        CoincidenceMode::PerPair => {
            let key = StreamKey::new(run.master_seed, LANE_PER_PAIR);
            let mut waits = Vec::with_capacity(m * m);
            let mut all_taus = Vec::new();
            for i in 0..m {
                for j in 0..m {
                    let detector = JointDetector::for_pair(model, (i, j), params, dt)?;
                    let outcomes = detector.run_many(key.child((i * m + j) as u64), run);
                    let taus: Vec<f64> = outcomes.iter().flatten().map(JointClickRecord::tau).collect();
                    let censored = outcomes.len() as u64 - taus.len() as u64;
                    waits.push(WaitingTime::from_trials(&taus, censored, params.detector.max_time));
                    all_taus.extend(taus);
                }
            }
            ProbabilityReport::from_waiting_times(labels, &waits, oracle_probs, &all_taus)
        }
        CoincidenceMode::Race => {
            if run.n_trials == 0 {
                return Err(TsdError::InsufficientClicks {
                    got: 0,
                    need: MIN_CLICKS,
                });
            }
            let detector = JointDetector::full(model, params, dt)?;
            let outcomes = detector.run_many(StreamKey::new(run.master_seed, LANE_RACE), run);
            let mut counts = vec![0u64; m * m];
            let mut taus = Vec::new();
            for rec in outcomes.iter().flatten() {
                counts[rec.pair.0 * m + rec.pair.1] += 1;
                taus.push(rec.tau());
            }
            ProbabilityReport::from_counts(labels, counts, oracle_probs, &taus, run.n_trials)
        }
    }
}

/// Mean joint click time of a scalar pair and its weak-signal diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointTimeReport {
    pub tau_mean: f64,
    pub tau_se: f64,
    /// `4E₀σ²τ̄/E_d²`; the first-order prediction would make this 1.
    pub threshold_product: f64,
    /// `σ²τ̄/E₀`.
    pub signal_over_background: f64,
    pub kappa_over_tau: f64,
    pub clicks: u64,
    pub censored: u64,
    pub regime_violation: bool,
}

/// Mean joint click time for the scalar model `σ12 = cross` (so `σ² = |cross|²`).
pub fn mean_joint_time(
    cross: Complex64,
    background: f64,
    params: &CoincidenceParams,
    dt: f64,
    run: &RunParams,
) -> Result<JointTimeReport> {
    let model = build_scalar_pair_model(cross, background)?;
    run.require_trials(2)?;
    let detector = JointDetector::for_pair(&model, (0, 0), params, dt)?;
    let outcomes = detector.run_many(StreamKey::new(run.master_seed, LANE_JOINT_TIME), run);
    let taus: Vec<f64> = outcomes.iter().flatten().map(JointClickRecord::tau).collect();
    let censored = run.n_trials - taus.len() as u64;
    let wait = WaitingTime::from_trials(&taus, censored, params.detector.max_time);
    let tau = wait.mean();
    let sigma2 = cross.norm_sqr();
    let e_d = params.detector.threshold;
    let signal_over_background = sigma2 * tau / background;
    let kappa_over_tau = params.detector.kappa / tau;
    Ok(JointTimeReport {
        tau_mean: tau,
        tau_se: wait.mean_se(),
        threshold_product: 4.0 * background * sigma2 * tau / (e_d * e_d),
        signal_over_background,
        kappa_over_tau,
        clicks: wait.clicks,
        censored,
        regime_violation: !(signal_over_background <= MAX_SIGNAL_OVER_BACKGROUND
            && kappa_over_tau <= MAX_KAPPA_OVER_TAU),
    })
}

/// Single-side detection probabilities for both sides of a matrix-matched
/// model. Each side sees its own marginal law `σ̂_k²·s + E₀·I` through
/// calibrated detectors; per-pair mode counts by normalized rates, race mode
/// by first crossing.
pub fn estimate_marginal_probabilities(
    model: &CorrelationModel,
    params: &CoincidenceParams,
    dt: f64,
    run: &RunParams,
) -> Result<(ProbabilityReport, ProbabilityReport)> {
    if model.mode() != MatchMode::MatrixMatched {
        return Err(TsdError::invalid("model", "marginals need a matrix-matched model"));
    }
    let m = model.dim();
    let psi = oracle::state_from_correlations(model.cross())?;
    let counting = match params.mode {
        CoincidenceMode::PerPair => CountingMode::PerChannel,
        CoincidenceMode::Race => CountingMode::Race,
    };
    let mut reports = Vec::with_capacity(2);
    for side in [Side::One, Side::Two] {
        let rho = oracle::partial_trace(&psi, side);
        let oracle_probs: Vec<f64> = (0..m).map(|i| rho.matrix()[(i, i)].re).collect();
        let signal = SingleSignalSpec::new(model.side_power(side).clone(), model.background())?;
        let detector = SingleDetector::new(&signal, &CMatrix::identity(m, m), params.detector, dt)?;
        let key = StreamKey::new(run.master_seed, LANE_MARGINALS).child(side.index() as u64);
        reports.push(crate::detector::estimate_with(
            &detector,
            oracle_probs,
            key,
            run,
            counting,
        )?);
    }
    let side2 = reports.pop().expect("two sides");
    let side1 = reports.pop().expect("two sides");
    Ok((side1, side2))
}

/// Regime diagnostics attached to a joint run: `κ/τ̄` and `σ²τ̄/E₀` with
/// `σ²` the total cross power.
pub fn joint_regime(model: &CorrelationModel, params: &CoincidenceParams, mean_tau: f64) -> (f64, f64, bool) {
    let kappa_over_tau = params.detector.kappa / mean_tau;
    let sig = model.total_cross_power() * mean_tau / model.background();
    let flag = !(kappa_over_tau <= MAX_KAPPA_OVER_TAU && sig <= MAX_SIGNAL_OVER_BACKGROUND);
    (kappa_over_tau, sig, flag)
}

/// Discretization used by a joint detector (exposed for diagnostics).
pub fn joint_discretization(params: &CoincidenceParams, dt: f64) -> Result<DiscretizationParams> {
    params.detector.discretization(dt)
}
