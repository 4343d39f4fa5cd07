//! Quantum reference values: density matrices, Born probabilities, the
//! bipartite state built from a cross-correlation matrix, partial traces,
//! correlations and the CHSH combination.
//!
//! Bipartite amplitudes are flattened as `(i, j) ↦ i·m + j`.

use num_complex::Complex64;

use crate::error::{Result, TsdError};
use crate::linalg::{self, CMatrix, CVector};
use crate::model::{validate_psd, Side, PSD_TOL};

/// Angles `(a, a′, b, b′)` giving the maximal CHSH value for the singlet.
pub const CHSH_ANGLES: [f64; 4] = [
    0.0,
    std::f64::consts::FRAC_PI_4,
    std::f64::consts::FRAC_PI_8,
    3.0 * std::f64::consts::FRAC_PI_8,
];

const TRACE_TOL: f64 = 1e-12;

/// Hermitian, positive semidefinite, unit-trace matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    rho: CMatrix,
}

impl DensityMatrix {
    /// Checks the three density-matrix properties.
    pub fn new(rho: CMatrix) -> Result<Self> {
        if !validate_psd(&rho, PSD_TOL)? {
            let ev = linalg::hermitian_eigenvalues(&rho);
            return Err(TsdError::NotPsd {
                min: ev[0],
                max: ev[ev.len() - 1].abs(),
            });
        }
        let tr = rho.trace();
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(TsdError::invalid("density matrix", format!("trace {tr} is not 1")));
        }
        Ok(Self {
            rho: linalg::hermitian_part(&rho),
        })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.rho
    }

    pub fn dim(&self) -> usize {
        self.rho.nrows()
    }
}

/// Normalized bipartite state of dimension `m²`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    m: usize,
    psi: CVector,
}

impl QuantumState {
    pub fn from_amplitudes(m: usize, amplitudes: &[Complex64]) -> Result<Self> {
        if amplitudes.len() != m * m {
            return Err(TsdError::DimensionMismatch(format!(
                "{} amplitudes for side dimension {m}",
                amplitudes.len()
            )));
        }
        let norm = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(TsdError::AllZeroCrossMatrix);
        }
        if !norm.is_finite() {
            return Err(TsdError::NonFinite("state amplitudes"));
        }
        Ok(Self {
            m,
            psi: CVector::from_iterator(m * m, amplitudes.iter().map(|a| a / norm)),
        })
    }

    /// Side dimension `m`.
    pub fn side_dim(&self) -> usize {
        self.m
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.psi
    }

    pub fn amplitude(&self, i: usize, j: usize) -> Complex64 {
        self.psi[i * self.m + j]
    }

    /// Amplitudes as the `m×m` matrix `Ψ(i, j)`.
    pub fn as_matrix(&self) -> CMatrix {
        CMatrix::from_fn(self.m, self.m, |i, j| self.amplitude(i, j))
    }
}

/// `ρ = B / Tr B`.
pub fn density_from_covariance(b: &CMatrix) -> Result<DensityMatrix> {
    let tr = b.trace().re;
    if tr <= 0.0 || !tr.is_finite() {
        return Err(TsdError::ZeroTrace);
    }
    DensityMatrix::new(b.unscale(tr))
}

/// `⟨e|ρ|e⟩` for a unit vector `e`.
pub fn born_probability(rho: &DensityMatrix, e: &CVector) -> f64 {
    (e.adjoint() * rho.matrix() * e)[(0, 0)].re
}

/// `Ψ(i, j) = σ12(i, j) / ‖σ12‖`.
pub fn state_from_correlations(cross: &CMatrix) -> Result<QuantumState> {
    if !cross.is_square() {
        return Err(TsdError::DimensionMismatch(format!(
            "cross matrix is {}×{}",
            cross.nrows(),
            cross.ncols()
        )));
    }
    let m = cross.nrows();
    let flat: Vec<Complex64> = (0..m * m).map(|k| cross[(k / m, k % m)]).collect();
    QuantumState::from_amplitudes(m, &flat)
}

fn require_qubits(psi: &QuantumState) -> Result<()> {
    if psi.side_dim() != 2 {
        return Err(TsdError::DimensionMismatch(format!(
            "angle measurements need m = 2, state has m = {}",
            psi.side_dim()
        )));
    }
    Ok(())
}

/// Probabilities of the four outcomes `(++, +−, −+, −−)` when side 1 is
/// measured in the θ1-basis and side 2 in the θ2-basis.
pub fn joint_born_table(psi: &QuantumState, theta1: f64, theta2: f64) -> Result<[f64; 4]> {
    require_qubits(psi)?;
    let r1 = linalg::rotation(theta1);
    let r2 = linalg::rotation(theta2);
    // ⟨e_i ⊗ e_j, Ψ⟩ = (R1ᵀ·Ψ·R2)(i, j) for real rotations.
    let rotated = r1.transpose() * psi.as_matrix() * &r2;
    Ok([
        rotated[(0, 0)].norm_sqr(),
        rotated[(0, 1)].norm_sqr(),
        rotated[(1, 0)].norm_sqr(),
        rotated[(1, 1)].norm_sqr(),
    ])
}

/// `|⟨e_i^{θ1} ⊗ e_j^{θ2}, Ψ⟩|²`; `i`, `j` are `true` for `+`.
pub fn joint_born(psi: &QuantumState, theta1: f64, theta2: f64, plus1: bool, plus2: bool) -> Result<f64> {
    let table = joint_born_table(psi, theta1, theta2)?;
    Ok(table[usize::from(!plus1) * 2 + usize::from(!plus2)])
}

/// Reduced density matrix of one side.
pub fn partial_trace(psi: &QuantumState, side: Side) -> DensityMatrix {
    let a = psi.as_matrix();
    // ρ₁ = Ψ·Ψ†, ρ₂ = (Ψ†·Ψ)ᵀ.
    let rho = match side {
        Side::One => &a * a.adjoint(),
        Side::Two => (a.adjoint() * &a).transpose(),
    };
    DensityMatrix {
        rho: linalg::hermitian_part(&rho),
    }
}

/// `E = P(++) + P(−−) − P(+−) − P(−+)`.
pub fn correlation(psi: &QuantumState, theta1: f64, theta2: f64) -> Result<f64> {
    let p = joint_born_table(psi, theta1, theta2)?;
    Ok(correlation_from_probabilities(&p))
}

/// `E` from the four outcome probabilities in `(++, +−, −+, −−)` order.
pub fn correlation_from_probabilities(p: &[f64; 4]) -> f64 {
    p[0] + p[3] - p[1] - p[2]
}

/// `S = |E(a,b) − E(a,b′)| + |E(a′,b) + E(a′,b′)|` from the four correlations
/// in `(ab, ab′, a′b, a′b′)` order.
pub fn chsh_combination(e: &[f64; 4]) -> f64 {
    (e[0] - e[1]).abs() + (e[2] + e[3]).abs()
}

/// CHSH value for angles `(a, a′, b, b′)`.
pub fn chsh_value(psi: &QuantumState, angles: [f64; 4]) -> Result<f64> {
    let [a, a2, b, b2] = angles;
    Ok(chsh_combination(&[
        correlation(psi, a, b)?,
        correlation(psi, a, b2)?,
        correlation(psi, a2, b)?,
        correlation(psi, a2, b2)?,
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, diag};
    use crate::model::singlet_cross;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, SQRT_2};

    fn singlet() -> QuantumState {
        state_from_correlations(&singlet_cross(1.0)).unwrap()
    }

    #[test]
    fn density_examples() {
        let rho = density_from_covariance(&diag(&[3.0, 7.0])).unwrap();
        assert!((rho.matrix()[(0, 0)].re - 0.3).abs() < 1e-15);
        let rho = density_from_covariance(&CMatrix::identity(3, 3)).unwrap();
        assert!((rho.matrix()[(2, 2)].re - 1.0 / 3.0).abs() < 1e-15);
        assert!(matches!(
            density_from_covariance(&diag(&[0.0, 0.0])),
            Err(TsdError::ZeroTrace)
        ));
        let e = CVector::from_vec(vec![c(1.0, 0.0), c(0.0, 0.0)]);
        let rho = density_from_covariance(&diag(&[3.0, 7.0])).unwrap();
        assert!((born_probability(&rho, &e) - 0.3).abs() < 1e-15);
    }

    #[test]
    fn singlet_amplitudes() {
        let psi = singlet();
        assert!((psi.amplitude(0, 1).re - 1.0 / SQRT_2).abs() < 1e-15);
        assert!((psi.amplitude(1, 0).re + 1.0 / SQRT_2).abs() < 1e-15);
        assert_eq!(psi.amplitude(0, 0), c(0.0, 0.0));
    }

    #[test]
    fn singlet_joint_probabilities() {
        let psi = singlet();
        assert!(joint_born(&psi, 0.3, 0.3, true, true).unwrap() < 1e-15);
        let p = joint_born(&psi, 0.0, FRAC_PI_4, true, true).unwrap();
        assert!((p - 0.25).abs() < 1e-12);
        let table = joint_born_table(&psi, 0.1, 1.2).unwrap();
        assert!((table.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn singlet_correlations_and_chsh() {
        let psi = singlet();
        assert!((correlation(&psi, 0.4, 0.4).unwrap() + 1.0).abs() < 1e-12);
        assert!(correlation(&psi, 0.0, FRAC_PI_4).unwrap().abs() < 1e-12);
        assert!((correlation(&psi, 0.0, FRAC_PI_8).unwrap() + FRAC_PI_4.cos()).abs() < 1e-12);
        assert!((chsh_value(&psi, CHSH_ANGLES).unwrap() - 2.0 * SQRT_2).abs() < 1e-12);
        assert!((chsh_value(&psi, [0.0; 4]).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn partial_traces() {
        let half = partial_trace(&singlet(), Side::Two);
        assert!((half.matrix() - diag(&[0.5, 0.5])).norm() < 1e-15);
        let prod = state_from_correlations(&diag(&[1.0, 0.0])).unwrap();
        assert!((partial_trace(&prod, Side::One).matrix() - diag(&[1.0, 0.0])).norm() < 1e-15);
        let psi = state_from_correlations(&diag(&[0.3f64.sqrt(), 0.7f64.sqrt()])).unwrap();
        assert!((partial_trace(&psi, Side::One).matrix() - diag(&[0.3, 0.7])).norm() < 1e-12);
    }

    #[test]
    fn zero_cross_rejected() {
        assert!(state_from_correlations(&CMatrix::zeros(2, 2)).is_err());
    }
}
