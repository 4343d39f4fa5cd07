//! Statistical laws of single signals and bi-signals.
//!
//! A single signal with `m` internal channels has covariance kernel
//! `δ(s₁−s₂)·√|s₁s₂|·B + E₀·δ(s₁−s₂)·I`. A bi-signal `(φ₁, φ₂)` is described
//! by its cross-correlation matrix `σ12`, the side powers `σ̂₁²`, `σ̂₂²` and the
//! background energy `E₀`; at time `s` the instantaneous covariance is the
//! `2m×2m` block matrix
//!
//! ```text
//! ⎡ σ̂₁²·s + E₀·I        2√E₀·√s·σ12  ⎤
//! ⎣ 2√E₀·√s·σ12†        σ̂₂²·s + E₀·I ⎦
//! ```
//!
//! which is positive semidefinite for every `s ≥ 0` whenever the side powers
//! are matched to `σ12` (`σ̂₁² = σ12·σ12†`, `σ̂₂² = σ12†·σ12`).

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64;

use crate::error::{Result, TsdError};
use crate::linalg::{self, c, CMatrix};

/// Relative tolerance for Hermiticity of user-supplied matrices.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Relative tolerance for positive semidefiniteness.
pub const PSD_TOL: f64 = 1e-10;

/// Law of a single `m`-channel signal: power matrix `B` and background `E₀`.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleSignalSpec {
    power: CMatrix,
    background: f64,
}

impl SingleSignalSpec {
    pub fn new(power: CMatrix, background: f64) -> Result<Self> {
        if !power.is_square() || power.nrows() == 0 {
            return Err(TsdError::DimensionMismatch(format!(
                "power matrix must be square and non-empty, got {}×{}",
                power.nrows(),
                power.ncols()
            )));
        }
        if !linalg::is_finite(&power) {
            return Err(TsdError::NonFinite("power matrix"));
        }
        if !background.is_finite() || background < 0.0 {
            return Err(TsdError::invalid(
                "background",
                format!("must be finite and ≥ 0, got {background}"),
            ));
        }
        linalg::ensure_hermitian(&power, HERMITIAN_TOL)?;
        let power = linalg::hermitian_part(&power);
        if !validate_psd(&power, PSD_TOL)? {
            let ev = linalg::hermitian_eigenvalues(&power);
            return Err(TsdError::NotPsd {
                min: ev[0],
                max: ev.iter().fold(0.0f64, |a, v| a.max(v.abs())),
            });
        }
        if power.trace().re <= 0.0 {
            return Err(TsdError::ZeroTrace);
        }
        Ok(Self { power, background })
    }

    /// Diagonal power matrix `diag(powers)`.
    pub fn diagonal(powers: &[f64], background: f64) -> Result<Self> {
        Self::new(linalg::diag(powers), background)
    }

    pub fn power(&self) -> &CMatrix {
        &self.power
    }

    pub fn background(&self) -> f64 {
        self.background
    }

    pub fn dim(&self) -> usize {
        self.power.nrows()
    }

    /// The power matrix expressed in the measurement basis whose vectors are
    /// the columns of `basis`: `U†·B·U`.
    pub fn in_basis(&self, basis: &CMatrix) -> Result<Self> {
        if basis.nrows() != self.dim() || !basis.is_square() {
            return Err(TsdError::DimensionMismatch(format!(
                "basis is {}×{}, signal has {} channels",
                basis.nrows(),
                basis.ncols(),
                self.dim()
            )));
        }
        if !linalg::is_unitary(basis, 1e-9) {
            return Err(TsdError::invalid("basis", "not unitary"));
        }
        let rotated = basis.adjoint() * &self.power * basis;
        Ok(Self {
            power: linalg::hermitian_part(&rotated),
            background: self.background,
        })
    }

    /// Instantaneous covariance `B·s + E₀·I` (energy units, before division by Δ).
    pub fn covariance_at(&self, s: f64) -> CMatrix {
        let m = self.dim();
        self.power.scale(s) + CMatrix::identity(m, m).scale(self.background)
    }
}

/// Which consistency condition ties the side powers to the cross matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    /// One channel per side, `σ₁² = σ₂² = |σ12|²`.
    ScalarMatched,
    /// `σ̂₁² = σ12·σ12†`, `σ̂₂² = σ12†·σ12`.
    MatrixMatched,
}

/// Full statistical law of a bi-signal.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationModel {
    cross: CMatrix,
    side1_power: CMatrix,
    side2_power: CMatrix,
    background: f64,
    mode: MatchMode,
}

/// Instantaneous `2m×2m` covariance of a bi-signal at time `s`.
#[derive(Debug, Clone, PartialEq)]
pub struct PerBinCovariance {
    pub time: f64,
    pub matrix: CMatrix,
}

fn check_background(background: f64) -> Result<()> {
    if !background.is_finite() {
        return Err(TsdError::NonFinite("background"));
    }
    if background < 0.0 {
        return Err(TsdError::invalid(
            "background",
            format!("must be ≥ 0, got {background}"),
        ));
    }
    Ok(())
}

/// Matrix-matched model: side powers derived as `σ12·σ12†` and `σ12†·σ12`.
pub fn build_matrix_model(cross: CMatrix, background: f64) -> Result<CorrelationModel> {
    if !cross.is_square() || cross.nrows() == 0 {
        return Err(TsdError::DimensionMismatch(format!(
            "cross matrix must be square and non-empty, got {}×{}",
            cross.nrows(),
            cross.ncols()
        )));
    }
    if !linalg::is_finite(&cross) {
        return Err(TsdError::NonFinite("cross matrix"));
    }
    check_background(background)?;
    if cross.iter().all(|z| z.norm_sqr() == 0.0) {
        return Err(TsdError::AllZeroCrossMatrix);
    }
    let side1 = linalg::hermitian_part(&(&cross * cross.adjoint()));
    let side2 = linalg::hermitian_part(&(cross.adjoint() * &cross));
    for side in [&side1, &side2] {
        linalg::ensure_hermitian(side, HERMITIAN_TOL)?;
        if !validate_psd(side, PSD_TOL)? {
            let ev = linalg::hermitian_eigenvalues(side);
            return Err(TsdError::NotPsd {
                min: ev[0],
                max: ev[ev.len() - 1].abs(),
            });
        }
    }
    Ok(CorrelationModel {
        cross,
        side1_power: side1,
        side2_power: side2,
        background,
        mode: MatchMode::MatrixMatched,
    })
}

/// One channel per side with `σ² = |σ12|²` on both sides. Requires `E₀ > 0`.
pub fn build_scalar_pair_model(cross: Complex64, background: f64) -> Result<CorrelationModel> {
    if !(cross.re.is_finite() && cross.im.is_finite()) {
        return Err(TsdError::NonFinite("cross amplitude"));
    }
    check_background(background)?;
    if cross.norm_sqr() == 0.0 {
        return Err(TsdError::ZeroCross);
    }
    if background == 0.0 {
        return Err(TsdError::ZeroBackground(background));
    }
    let power = CMatrix::from_element(1, 1, c(cross.norm_sqr(), 0.0));
    Ok(CorrelationModel {
        cross: CMatrix::from_element(1, 1, cross),
        side1_power: power.clone(),
        side2_power: power,
        background,
        mode: MatchMode::ScalarMatched,
    })
}

/// Cross matrix `scale·[[0, 1/√2], [−1/√2, 0]]`, i.e. the singlet state.
pub fn singlet_cross(scale: f64) -> CMatrix {
    let a = scale * FRAC_1_SQRT_2;
    linalg::from_rows(2, &[c(0.0, 0.0), c(a, 0.0), c(-a, 0.0), c(0.0, 0.0)])
}

/// Matrix-matched singlet model in the z-basis.
pub fn singlet_model(background: f64, scale: f64) -> Result<CorrelationModel> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(TsdError::invalid("scale", format!("must be > 0, got {scale}")));
    }
    build_matrix_model(singlet_cross(scale), background)
}

/// Whether `M` is positive semidefinite: smallest eigenvalue
/// `≥ −rel_tol·max|λ|`. Fails with `NotHermitian` if `M` is not Hermitian
/// within `rel_tol`.
pub fn validate_psd(matrix: &CMatrix, rel_tol: f64) -> Result<bool> {
    linalg::ensure_hermitian(matrix, rel_tol)?;
    let ev = linalg::hermitian_eigenvalues(matrix);
    let scale = ev.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    Ok(ev.first().is_none_or(|&min| min >= -rel_tol * scale))
}

impl CorrelationModel {
    pub fn dim(&self) -> usize {
        self.cross.nrows()
    }

    pub fn cross(&self) -> &CMatrix {
        &self.cross
    }

    pub fn side_power(&self, side: Side) -> &CMatrix {
        match side {
            Side::One => &self.side1_power,
            Side::Two => &self.side2_power,
        }
    }

    pub fn background(&self) -> f64 {
        self.background
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    /// Joint detection needs the background field; models with `E₀ = 0` are
    /// valid laws but are refused by the coincidence engine.
    pub fn joint_detection_allowed(&self) -> bool {
        self.background > 0.0
    }

    /// `Σ_ij |σ12(ij)|²`.
    pub fn total_cross_power(&self) -> f64 {
        self.cross.iter().map(|z| z.norm_sqr()).sum()
    }

    /// The same model with a different background energy.
    pub fn with_background(&self, background: f64) -> Result<Self> {
        check_background(background)?;
        Ok(Self {
            background,
            ..self.clone()
        })
    }

    pub fn per_bin_covariance(&self, s: f64) -> PerBinCovariance {
        let m = self.dim();
        let e0 = self.background;
        let id = CMatrix::identity(m, m).scale(e0);
        let off = self.cross.scale(2.0 * (e0 * s.max(0.0)).sqrt());
        let mut out = CMatrix::zeros(2 * m, 2 * m);
        out.view_mut((0, 0), (m, m))
            .copy_from(&(self.side1_power.scale(s) + &id));
        out.view_mut((m, m), (m, m))
            .copy_from(&(self.side2_power.scale(s) + &id));
        out.view_mut((0, m), (m, m)).copy_from(&off);
        out.view_mut((m, 0), (m, m)).copy_from(&off.adjoint());
        PerBinCovariance { time: s, matrix: out }
    }

    /// Covariance of the two-channel sub-signal `(φ₁(i), φ₂(j))` at time `s`.
    pub fn pair_covariance(&self, i: usize, j: usize, s: f64) -> CMatrix {
        let e0 = self.background;
        let off = self.cross[(i, j)] * (2.0 * (e0 * s.max(0.0)).sqrt());
        linalg::from_rows(
            2,
            &[
                c(self.side1_power[(i, i)].re * s + e0, 0.0),
                off,
                off.conj(),
                c(self.side2_power[(j, j)].re * s + e0, 0.0),
            ],
        )
    }

    /// Re-expresses the model in the bases given by the columns of `u1` (side 1)
    /// and `u2` (side 2): cross matrix `U1†·σ12·U2`, side powers rebuilt.
    pub fn rotate_with(&self, u1: &CMatrix, u2: &CMatrix) -> Result<Self> {
        let m = self.dim();
        if self.mode != MatchMode::MatrixMatched {
            return Err(TsdError::DimensionMismatch(
                "basis rotation needs a matrix-matched model".into(),
            ));
        }
        for u in [u1, u2] {
            if u.nrows() != m || u.ncols() != m {
                return Err(TsdError::DimensionMismatch(format!(
                    "rotation is {}×{}, model has m = {m}",
                    u.nrows(),
                    u.ncols()
                )));
            }
            if !linalg::is_unitary(u, 1e-9) {
                return Err(TsdError::invalid("rotation", "not unitary"));
            }
        }
        build_matrix_model(u1.adjoint() * &self.cross * u2, self.background)
    }

    /// Polarization-basis rotation by `θ1` on side 1 and `θ2` on side 2
    /// (`m = 2` only). With this convention the singlet gives the correlation
    /// `−cos 2(θ1 − θ2)`.
    pub fn rotate_bases(&self, theta1: f64, theta2: f64) -> Result<Self> {
        if self.dim() != 2 {
            return Err(TsdError::DimensionMismatch(format!(
                "angle rotation needs m = 2, model has m = {}",
                self.dim()
            )));
        }
        let r1 = linalg::rotation(theta1);
        let r2 = linalg::rotation(theta2);
        self.rotate_with(&r1, &r2.map(|z| z.conj()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    One,
    Two,
}

impl Side {
    pub fn index(self) -> usize {
        match self {
            Side::One => 1,
            Side::Two => 2,
        }
    }
}
