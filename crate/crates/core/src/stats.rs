//! Estimators shared by the detectors and the harness.

/// Sample mean and standard error of the mean.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Binomial standard error of a proportion estimated from `n` events.
pub fn binomial_se(p: f64, n: u64) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Mean waiting time for a renewal-style click process, estimated from
/// independent trials that either click at `τ` or are censored at `max_time`.
///
/// `τ̄ = exposure / clicks` where exposure sums click times plus the full
/// duration of censored trials; this is the sample mean when nothing is
/// censored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaitingTime {
    pub clicks: u64,
    pub censored: u64,
    pub exposure: f64,
    /// Standard deviation of the observed click times.
    pub spread: f64,
}

impl WaitingTime {
    pub fn from_trials(click_times: &[f64], censored: u64, max_time: f64) -> Self {
        let (_, se) = mean_and_se(click_times);
        let spread = se * (click_times.len() as f64).sqrt();
        Self {
            clicks: click_times.len() as u64,
            censored,
            exposure: click_times.iter().sum::<f64>() + censored as f64 * max_time,
            spread,
        }
    }

    pub fn trials(&self) -> u64 {
        self.clicks + self.censored
    }

    pub fn mean(&self) -> f64 {
        if self.clicks == 0 {
            f64::INFINITY
        } else {
            self.exposure / self.clicks as f64
        }
    }

    pub fn mean_se(&self) -> f64 {
        if self.clicks < 2 {
            f64::NAN
        } else {
            self.spread / (self.clicks as f64).sqrt()
        }
    }

    /// Click rate `1/τ̄` (zero when nothing clicked).
    pub fn rate(&self) -> f64 {
        if self.exposure <= 0.0 {
            0.0
        } else {
            self.clicks as f64 / self.exposure
        }
    }

    pub fn rate_se(&self) -> f64 {
        let m = self.mean();
        if !m.is_finite() {
            return 0.0;
        }
        self.mean_se() / (m * m)
    }

    pub fn censored_fraction(&self) -> f64 {
        if self.trials() == 0 {
            0.0
        } else {
            self.censored as f64 / self.trials() as f64
        }
    }
}

/// Normalizes rates into probabilities, with delta-method standard errors.
pub fn normalize_rates(rates: &[f64], rate_se: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let total: f64 = rates.iter().sum();
    if total <= 0.0 {
        return (vec![f64::NAN; rates.len()], vec![f64::NAN; rates.len()]);
    }
    let probs: Vec<f64> = rates.iter().map(|r| r / total).collect();
    let ses = rates
        .iter()
        .enumerate()
        .map(|(i, &ri)| {
            let var: f64 = rate_se
                .iter()
                .enumerate()
                .map(|(k, &sk)| {
                    let d = if k == i {
                        (total - ri) / (total * total)
                    } else {
                        -ri / (total * total)
                    };
                    let sk = if sk.is_finite() { sk } else { 0.0 };
                    d * d * sk * sk
                })
                .sum();
            var.sqrt()
        })
        .collect();
    (probs, ses)
}

/// Pearson chi-square statistic for two count vectors against their pooled
/// proportions. Returns `(statistic, degrees of freedom)`.
pub fn chi_square_two_sample(a: &[u64], b: &[u64]) -> (f64, usize) {
    let na: f64 = a.iter().sum::<u64>() as f64;
    let nb: f64 = b.iter().sum::<u64>() as f64;
    let mut stat = 0.0;
    let mut cells: usize = 0;
    for (&x, &y) in a.iter().zip(b) {
        let pooled = (x + y) as f64 / (na + nb);
        if pooled == 0.0 {
            continue;
        }
        cells += 1;
        let ea = pooled * na;
        let eb = pooled * nb;
        stat += (x as f64 - ea).powi(2) / ea + (y as f64 - eb).powi(2) / eb;
    }
    (stat, cells.saturating_sub(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_se_basic() {
        let (m, se) = mean_and_se(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((se - (1.6666666666666667f64 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn waiting_time_without_censoring_is_sample_mean() {
        let w = WaitingTime::from_trials(&[1.0, 3.0], 0, 10.0);
        assert_eq!(w.mean(), 2.0);
        assert_eq!(w.rate(), 0.5);
        let w = WaitingTime::from_trials(&[1.0, 3.0], 1, 10.0);
        assert_eq!(w.mean(), 7.0);
    }

    #[test]
    fn normalized_rates_sum_to_one() {
        let (p, se) = normalize_rates(&[1.0, 3.0], &[0.1, 0.1]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!(se.iter().all(|s| *s > 0.0));
    }

    #[test]
    fn chi_square_identical_is_zero() {
        let (s, df) = chi_square_two_sample(&[10, 20, 0], &[10, 20, 0]);
        assert_eq!(s, 0.0);
        assert_eq!(df, 1);
    }
}
