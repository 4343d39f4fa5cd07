//! Means and correlations of quadratic forms `f_A(φ) = ⟨Aφ, φ⟩` under a
//! zero-mean circular complex Gaussian law with covariance `D = E φφ†`.
//!
//! ```text
//! E f_A         = Tr(D·A)
//! E f_A1·f_A2   = Tr(D·A1)·Tr(D·A2) + Tr(D·A2·D·A1)
//! ```
//!
//! and, for a bipartite law with forms acting on one block each,
//! `Tr(D₁₁A1)·Tr(D₂₂A2) + Tr(D₁₂·A2·D₂₁·A1)`.

use num_complex::Complex64;

use crate::error::{Result, TsdError};
use crate::linalg::{self, trace_product, CMatrix};
use crate::model::HERMITIAN_TOL;
use crate::parallel::{map_trials, RunParams};
use crate::rng::{complex_normal, StreamKey};
use crate::sampler::matrix_sqrt_psd;

pub(crate) const LANE_QUADRATIC: u64 = 0x71;

/// Default cap on the dimension of a Gaussian law.
pub const DEFAULT_MAX_DIM: usize = 64;

/// Zero-mean circular Gaussian law on `ℂ^d`, optionally split into two blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianLaw {
    covariance: CMatrix,
    partition: Option<(usize, usize)>,
}

impl GaussianLaw {
    pub fn new(covariance: CMatrix) -> Result<Self> {
        Self::with_cap(covariance, DEFAULT_MAX_DIM)
    }

    pub fn with_cap(covariance: CMatrix, max_dim: usize) -> Result<Self> {
        if !covariance.is_square() || covariance.nrows() == 0 {
            return Err(TsdError::DimensionMismatch(format!(
                "covariance is {}×{}",
                covariance.nrows(),
                covariance.ncols()
            )));
        }
        if covariance.nrows() > max_dim {
            return Err(TsdError::DimensionMismatch(format!(
                "dimension {} exceeds the cap {max_dim}",
                covariance.nrows()
            )));
        }
        if !linalg::is_finite(&covariance) {
            return Err(TsdError::NonFinite("covariance"));
        }
        // Checks Hermitian + PSD.
        matrix_sqrt_psd(&covariance)?;
        Ok(Self {
            covariance: linalg::hermitian_part(&covariance),
            partition: None,
        })
    }

    /// Bipartite law with blocks of sizes `d1` and `d2`.
    pub fn bipartite(covariance: CMatrix, d1: usize, d2: usize) -> Result<Self> {
        let d = covariance.nrows();
        let law = Self::new(covariance)?;
        if d1 + d2 != d || d1 == 0 || d2 == 0 {
            return Err(TsdError::BadPartition { d1, d2, d });
        }
        Ok(Self {
            partition: Some((d1, d2)),
            ..law
        })
    }

    pub fn covariance(&self) -> &CMatrix {
        &self.covariance
    }

    pub fn dim(&self) -> usize {
        self.covariance.nrows()
    }

    pub fn partition(&self) -> Option<(usize, usize)> {
        self.partition
    }

    /// Block `(a, b)` of the covariance, `a, b ∈ {0, 1}`.
    fn block(&self, a: usize, b: usize) -> Option<CMatrix> {
        let (d1, d2) = self.partition?;
        let start = |k| if k == 0 { 0 } else { d1 };
        let len = |k| if k == 0 { d1 } else { d2 };
        Some(
            self.covariance
                .view((start(a), start(b)), (len(a), len(b)))
                .into_owned(),
        )
    }
}

/// Hermitian form `φ ↦ ⟨Aφ, φ⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    a: CMatrix,
}

impl QuadraticForm {
    pub fn new(a: CMatrix) -> Result<Self> {
        if !a.is_square() {
            return Err(TsdError::DimensionMismatch(format!(
                "form is {}×{}",
                a.nrows(),
                a.ncols()
            )));
        }
        if !linalg::is_finite(&a) {
            return Err(TsdError::NonFinite("quadratic form"));
        }
        linalg::ensure_hermitian(&a, HERMITIAN_TOL)?;
        Ok(Self {
            a: linalg::hermitian_part(&a),
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.a
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// `⟨Aφ, φ⟩ = φ†·A·φ` (real for Hermitian `A`).
    pub fn evaluate(&self, phi: &[Complex64]) -> f64 {
        let n = self.dim();
        let mut acc = 0.0;
        for (i, x) in phi.iter().enumerate().take(n) {
            let row: Complex64 = phi.iter().take(n).enumerate().map(|(j, y)| self.a[(i, j)] * y).sum();
            acc += (x.conj() * row).re;
        }
        acc
    }
}

fn same_dim(law: &GaussianLaw, forms: &[&QuadraticForm]) -> Result<()> {
    for f in forms {
        if f.dim() != law.dim() {
            return Err(TsdError::DimensionMismatch(format!(
                "form has dimension {}, law has {}",
                f.dim(),
                law.dim()
            )));
        }
    }
    Ok(())
}

/// `Tr(D·A)`.
pub fn quadratic_mean(law: &GaussianLaw, a: &QuadraticForm) -> Result<f64> {
    same_dim(law, &[a])?;
    Ok(trace_product(law.covariance(), a.matrix()).re)
}

/// `Tr(D·A1)·Tr(D·A2) + Tr(D·A2·D·A1)`.
pub fn quadratic_correlation(law: &GaussianLaw, a1: &QuadraticForm, a2: &QuadraticForm) -> Result<f64> {
    same_dim(law, &[a1, a2])?;
    let d = law.covariance();
    let m1 = trace_product(d, a1.matrix()).re;
    let m2 = trace_product(d, a2.matrix()).re;
    let da2 = d * a2.matrix();
    let da1 = d * a1.matrix();
    Ok(m1 * m2 + trace_product(&da2, &da1).re)
}

/// `Tr(D₁₁A1)·Tr(D₂₂A2) + Tr(D₁₂·A2·D₂₁·A1)` for `A1` on block 1 and `A2` on
/// block 2.
pub fn quadratic_correlation_block(law: &GaussianLaw, a1: &QuadraticForm, a2: &QuadraticForm) -> Result<f64> {
    let (d1, d2) = law.partition().ok_or(TsdError::BadPartition {
        d1: 0,
        d2: 0,
        d: law.dim(),
    })?;
    if a1.dim() != d1 || a2.dim() != d2 {
        return Err(TsdError::BadPartition {
            d1: a1.dim(),
            d2: a2.dim(),
            d: law.dim(),
        });
    }
    let (b11, b12, b21, b22) = (
        law.block(0, 0).expect("partitioned"),
        law.block(0, 1).expect("partitioned"),
        law.block(1, 0).expect("partitioned"),
        law.block(1, 1).expect("partitioned"),
    );
    let first = trace_product(&b11, a1.matrix()).re * trace_product(&b22, a2.matrix()).re;
    let left = b12 * a2.matrix();
    let right = b21 * a1.matrix();
    Ok(first + trace_product(&left, &right).re)
}

/// `A ⊕ 0` (or `0 ⊕ A` when `second` is set) on the full space of `law`.
pub fn embed_block(law: &GaussianLaw, a: &QuadraticForm, second: bool) -> Result<QuadraticForm> {
    let (d1, d2) = law.partition().ok_or(TsdError::BadPartition {
        d1: 0,
        d2: 0,
        d: law.dim(),
    })?;
    let zero = |n| CMatrix::zeros(n, n);
    let full = if second {
        linalg::direct_sum(&zero(d1), a.matrix())
    } else {
        linalg::direct_sum(a.matrix(), &zero(d2))
    };
    QuadraticForm::new(full)
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub se: f64,
}

impl McEstimate {
    /// `|value − reference|` in units of the standard error.
    pub fn z_score(&self, reference: f64) -> f64 {
        (self.value - reference).abs() / self.se
    }
}

fn mc_average<F>(law: &GaussianLaw, run: &RunParams, lane: u64, f: F) -> Result<McEstimate>
where
    F: Fn(&[Complex64]) -> f64 + Sync + Send,
{
    run.require_trials(1000)?;
    let factor = matrix_sqrt_psd(law.covariance())?;
    let d = law.dim();
    let key = StreamKey::new(run.master_seed, LANE_QUADRATIC).child(lane);
    // Samples are drawn in fixed-size chunks so each worker reuses buffers.
    const CHUNK: u64 = 1024;
    let n = run.n_trials;
    let chunks = n.div_ceil(CHUNK);
    let partial: Vec<(f64, f64)> = map_trials(chunks, run.workers, |c| {
        let mut rng = key.trial(c);
        let mut w = vec![Complex64::new(0.0, 0.0); d];
        let mut phi = vec![Complex64::new(0.0, 0.0); d];
        let (mut s, mut s2) = (0.0, 0.0);
        for _ in (c * CHUNK)..((c + 1) * CHUNK).min(n) {
            for x in w.iter_mut() {
                *x = complex_normal(&mut rng);
            }
            for (r, p) in phi.iter_mut().enumerate() {
                *p = (0..d).map(|k| factor[(r, k)] * w[k]).sum();
            }
            let v = f(&phi);
            s += v;
            s2 += v * v;
        }
        (s, s2)
    });
    let (s, s2) = partial.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let nf = n as f64;
    let mean = s / nf;
    let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    Ok(McEstimate {
        value: mean,
        se: (var / nf).sqrt(),
    })
}

/// Monte Carlo estimate of `E f_A`.
pub fn mc_quadratic_mean(law: &GaussianLaw, a: &QuadraticForm, run: &RunParams) -> Result<McEstimate> {
    same_dim(law, &[a])?;
    mc_average(law, run, 1, |phi| a.evaluate(phi))
}

/// Monte Carlo estimate of `E f_A1·f_A2`.
pub fn mc_quadratic_correlation(
    law: &GaussianLaw,
    a1: &QuadraticForm,
    a2: &QuadraticForm,
    run: &RunParams,
) -> Result<McEstimate> {
    same_dim(law, &[a1, a2])?;
    mc_average(law, run, 2, |phi| a1.evaluate(phi) * a2.evaluate(phi))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::diag;

    #[test]
    fn mean_examples() {
        let law = GaussianLaw::new(CMatrix::identity(2, 2)).unwrap();
        let a = QuadraticForm::new(diag(&[1.0, 2.0])).unwrap();
        assert!((quadratic_mean(&law, &a).unwrap() - 3.0).abs() < 1e-15);
        let zero = QuadraticForm::new(CMatrix::zeros(2, 2)).unwrap();
        assert_eq!(quadratic_mean(&law, &zero).unwrap(), 0.0);
    }

    #[test]
    fn correlation_examples() {
        let law = GaussianLaw::new(CMatrix::identity(2, 2)).unwrap();
        let id = QuadraticForm::new(CMatrix::identity(2, 2)).unwrap();
        assert!((quadratic_correlation(&law, &id, &id).unwrap() - 6.0).abs() < 1e-14);
        let zero = QuadraticForm::new(CMatrix::zeros(2, 2)).unwrap();
        assert_eq!(quadratic_correlation(&law, &id, &zero).unwrap(), 0.0);
    }

    #[test]
    fn independent_blocks_factorize() {
        let law = GaussianLaw::bipartite(diag(&[1.0, 2.0, 3.0]), 1, 2).unwrap();
        let a1 = QuadraticForm::new(diag(&[2.0])).unwrap();
        let a2 = QuadraticForm::new(diag(&[1.0, 1.0])).unwrap();
        assert!((quadratic_correlation_block(&law, &a1, &a2).unwrap() - 2.0 * 5.0).abs() < 1e-14);
    }

    #[test]
    fn partition_checked() {
        assert!(matches!(
            GaussianLaw::bipartite(CMatrix::identity(3, 3), 1, 1),
            Err(TsdError::BadPartition { d1: 1, d2: 1, d: 3 })
        ));
        let law = GaussianLaw::new(CMatrix::identity(2, 2)).unwrap();
        let a = QuadraticForm::new(diag(&[1.0])).unwrap();
        assert!(quadratic_correlation_block(&law, &a, &a).is_err());
    }

    #[test]
    fn mc_needs_enough_samples() {
        let law = GaussianLaw::new(CMatrix::identity(2, 2)).unwrap();
        let a = QuadraticForm::new(diag(&[1.0, 2.0])).unwrap();
        assert!(mc_quadratic_mean(&law, &a, &RunParams::new(10, 1)).is_err());
        let est = mc_quadratic_mean(&law, &a, &RunParams::new(200_000, 1)).unwrap();
        assert!(est.z_score(3.0) < 4.0);
    }

    #[test]
    fn dimension_cap() {
        assert!(GaussianLaw::with_cap(CMatrix::identity(5, 5), 4).is_err());
    }
}
