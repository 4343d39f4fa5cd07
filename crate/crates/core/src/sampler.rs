//! Discretized delta-correlated Gaussian signals.
//!
//! The kernel `δ(s₁−s₂)·C(s)` is discretized on bins of width Δ: bin `t`
//! carries an independent circular complex Gaussian vector with covariance
//! `C(s_t)/Δ`, `s_t = (t + ½)·Δ`. With this scaling the window integral
//! `Σ φ_t·Δ` has the continuum variance `∫ C(s) ds`.

use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{Result, TsdError};
use crate::linalg::{self, CMatrix};
use crate::model::{validate_psd, CorrelationModel, PSD_TOL};
use crate::rng::complex_normal;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscretizationParams {
    dt: f64,
    max_bins: u64,
}

impl DiscretizationParams {
    pub fn new(dt: f64, max_bins: u64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(TsdError::invalid("dt", format!("must be > 0, got {dt}")));
        }
        if max_bins == 0 {
            return Err(TsdError::invalid("max_bins", "must be ≥ 1"));
        }
        Ok(Self { dt, max_bins })
    }

    /// Horizon given as a time rather than a bin count.
    pub fn with_horizon(dt: f64, max_time: f64) -> Result<Self> {
        if !(max_time.is_finite() && max_time > 0.0) {
            return Err(TsdError::invalid("max_time", format!("must be > 0, got {max_time}")));
        }
        Self::new(dt, (max_time / dt).round().max(1.0) as u64)
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn max_bins(&self) -> u64 {
        self.max_bins
    }

    /// Midpoint time of bin `t`.
    pub fn bin_time(&self, t: u64) -> f64 {
        (t as f64 + 0.5) * self.dt
    }
}

/// One bin's worth of signal values.
#[derive(Debug, Clone, PartialEq)]
pub struct BinSample {
    pub bin: u64,
    pub values: Vec<Complex64>,
}

/// A factor `F` with `F·F† = M` for Hermitian PSD `M`.
///
/// Positive definite input goes through Cholesky; semidefinite input through
/// an eigendecomposition with tiny negative eigenvalues clipped to zero.
pub fn matrix_sqrt_psd(matrix: &CMatrix) -> Result<CMatrix> {
    if !validate_psd(matrix, PSD_TOL)? {
        let ev = linalg::hermitian_eigenvalues(matrix);
        return Err(TsdError::NotPsd {
            min: ev[0],
            max: ev.iter().fold(0.0f64, |a, v| a.max(v.abs())),
        });
    }
    let herm = linalg::hermitian_part(matrix);
    if let Some(chol) = Cholesky::new(herm.clone()) {
        let l = chol.unpack();
        if l.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
            return Ok(l);
        }
    }
    let (values, vectors) = linalg::hermitian_eigen(&herm);
    let mut factor = vectors;
    for (k, lambda) in values.iter().enumerate() {
        let root = lambda.max(0.0).sqrt();
        factor.column_mut(k).scale_mut(root);
    }
    Ok(factor)
}

/// Per-bin square-root factors of a time-dependent covariance, computed once
/// and then shared read-only across trial workers.
#[derive(Debug, Clone)]
pub struct FactorCache {
    dim: usize,
    /// Row-major `dim×dim` factors, one per bin.
    factors: Vec<Complex64>,
}

impl FactorCache {
    /// Factors `covariance(s_t)/Δ` for bins `0..n_bins`.
    pub fn build<F>(dim: usize, disc: &DiscretizationParams, n_bins: u64, covariance: F) -> Result<Self>
    where
        F: Fn(f64) -> CMatrix,
    {
        let mut factors = Vec::with_capacity(n_bins as usize * dim * dim);
        for t in 0..n_bins {
            let cov = covariance(disc.bin_time(t)).unscale(disc.dt());
            if cov.nrows() != dim || cov.ncols() != dim {
                return Err(TsdError::DimensionMismatch(format!(
                    "covariance at bin {t} is {}×{}, expected {dim}×{dim}",
                    cov.nrows(),
                    cov.ncols()
                )));
            }
            let f = matrix_sqrt_psd(&cov)?;
            for r in 0..dim {
                for col in 0..dim {
                    factors.push(f[(r, col)]);
                }
            }
        }
        Ok(Self { dim, factors })
    }

    /// Cache for the full `2m`-dimensional bi-signal.
    pub fn for_model(model: &CorrelationModel, disc: &DiscretizationParams) -> Result<Self> {
        Self::build(2 * model.dim(), disc, disc.max_bins(), |s| {
            model.per_bin_covariance(s).matrix
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_bins(&self) -> u64 {
        (self.factors.len() / (self.dim * self.dim).max(1)) as u64
    }

    pub fn factor(&self, t: u64) -> CMatrix {
        let n = self.dim;
        let off = t as usize * n * n;
        CMatrix::from_row_slice(n, n, &self.factors[off..off + n * n])
    }

    /// Draws bin `t` into `out` using `noise` as scratch for the white vector.
    #[inline]
    pub fn sample_into<R: Rng + ?Sized>(&self, t: u64, rng: &mut R, noise: &mut [Complex64], out: &mut [Complex64]) {
        let n = self.dim;
        for w in noise.iter_mut().take(n) {
            *w = complex_normal(rng);
        }
        let f = &self.factors[t as usize * n * n..(t as usize + 1) * n * n];
        for (r, o) in out.iter_mut().take(n).enumerate() {
            let row = &f[r * n..(r + 1) * n];
            *o = row.iter().zip(noise.iter()).map(|(a, b)| a * b).sum();
        }
    }
}

/// Draws one bin of the bi-signal, `z = F·w` with `F·F† = C(s_t)/Δ`.
pub fn sample_bin<R: Rng + ?Sized>(
    model: &CorrelationModel,
    t: u64,
    disc: &DiscretizationParams,
    rng: &mut R,
) -> Result<BinSample> {
    let cov = model.per_bin_covariance(disc.bin_time(t)).matrix.unscale(disc.dt());
    let f = matrix_sqrt_psd(&cov)?;
    let w = linalg::CVector::from_fn(f.ncols(), |_, _| complex_normal(rng));
    Ok(BinSample {
        bin: t,
        values: (f * w).iter().copied().collect(),
    })
}
