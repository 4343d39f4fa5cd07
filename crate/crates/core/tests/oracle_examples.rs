//! Quantum reference values checked against explicit tensor-product
//! computations.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, PI};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tsd_core::linalg::{c, from_rows, rotation, CMatrix, CVector};
use tsd_core::model::{singlet_cross, singlet_model};
use tsd_core::oracle::{self, QuantumState, CHSH_ANGLES};

/// `e ⊗ f` in the flattened order `(i, j) ↦ 2i + j`.
fn kron(e: &CVector, f: &CVector) -> CVector {
    CVector::from_fn(4, |k, _| e[k / 2] * f[k % 2])
}

/// Probability of `(+, +)` by direct inner product in the 4-dimensional space.
fn direct_plus_plus(psi: &QuantumState, t1: f64, t2: f64) -> f64 {
    let e = rotation(t1).column(0).into_owned();
    let f = rotation(t2).column(0).into_owned();
    kron(&e, &f).dotc(psi.amplitudes()).norm_sqr()
}

fn singlet() -> QuantumState {
    oracle::state_from_correlations(&singlet_cross(1.0)).unwrap()
}

#[test]
fn rotated_singlet_probability() {
    let psi = singlet();
    let p = oracle::joint_born(&psi, 0.0, FRAC_PI_4, true, true).unwrap();
    assert!((p - direct_plus_plus(&psi, 0.0, FRAC_PI_4)).abs() < 1e-14);
    assert!((p - 0.5 * FRAC_PI_4.sin().powi(2)).abs() < 1e-14);
    assert!((p - 0.25).abs() < 1e-14);
    for &(t1, t2) in &[(0.3, 1.1), (-0.7, 2.0), (FRAC_PI_8, 0.0)] {
        let closed = 0.5 * (t1 - t2).sin().powi(2);
        assert!((oracle::joint_born(&psi, t1, t2, true, true).unwrap() - closed).abs() < 1e-14);
        assert!((direct_plus_plus(&psi, t1, t2) - closed).abs() < 1e-14);
    }
}

#[test]
fn singlet_is_rotation_invariant() {
    let model = singlet_model(25.0, 1.0).unwrap();
    for theta in [FRAC_PI_8, PI / 3.0] {
        let rotated = model.rotate_bases(theta, theta).unwrap();
        // Direct 4×4 rotation of Ψ: (R ⊗ R)ᵀ acting on the flattened amplitudes.
        let r = rotation(theta);
        let rr = CMatrix::from_fn(4, 4, |a, b| r[(a / 2, b / 2)] * r[(a % 2, b % 2)]);
        let psi = CVector::from_fn(4, |k, _| singlet_cross(1.0)[(k / 2, k % 2)]);
        let direct = rr.transpose() * psi;
        for k in 0..4 {
            let got = rotated.cross()[(k / 2, k % 2)];
            assert!((got - direct[k]).norm() < 1e-14, "θ = {theta}, entry {k}");
            assert!((got.norm() - model.cross()[(k / 2, k % 2)].norm()).abs() < 1e-14);
        }
    }
}

#[test]
fn orthogonal_bases_pair_equal_outcomes() {
    let rotated = singlet_model(25.0, 1.0).unwrap().rotate_bases(0.0, FRAC_PI_2).unwrap();
    let x = rotated.cross();
    assert!((x[(0, 0)].norm_sqr() - 0.5).abs() < 1e-14);
    assert!((x[(1, 1)].norm_sqr() - 0.5).abs() < 1e-14);
    assert!(x[(0, 1)].norm() < 1e-14 && x[(1, 0)].norm() < 1e-14);
    let p = oracle::joint_born(&singlet(), 0.0, FRAC_PI_2, true, true).unwrap();
    assert!((p - 0.5).abs() < 1e-14);
}

#[test]
fn singlet_correlations_follow_cosine() {
    let psi = singlet();
    for dt in [0.0, FRAC_PI_8, FRAC_PI_4, 1.0] {
        let e = oracle::correlation(&psi, 0.2, 0.2 + dt).unwrap();
        assert!((e + (2.0 * dt).cos()).abs() < 1e-14, "Δθ = {dt}: {e}");
    }
    assert!((oracle::correlation(&psi, 0.0, FRAC_PI_8).unwrap() + FRAC_1_SQRT_2).abs() < 1e-14);
    let s = oracle::chsh_value(&psi, CHSH_ANGLES).unwrap();
    assert!((s - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
    assert!((oracle::chsh_value(&psi, [0.0; 4]).unwrap() - 2.0).abs() < 1e-14);
}

#[test]
fn product_states_respect_the_classical_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    let states = [
        from_rows(2, &[c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0)]),
        // (cos a|+⟩ + sin a|−⟩) ⊗ (cos b|+⟩ − i sin b|−⟩)
        {
            let (a, b) = (0.4f64, 1.3f64);
            let u = [c(a.cos(), 0.0), c(a.sin(), 0.0)];
            let v = [c(b.cos(), 0.0), Complex64::new(0.0, -b.sin())];
            from_rows(2, &[u[0] * v[0], u[0] * v[1], u[1] * v[0], u[1] * v[1]])
        },
    ];
    for cross in &states {
        let psi = oracle::state_from_correlations(cross).unwrap();
        for _ in 0..1000 {
            let angles: [f64; 4] = std::array::from_fn(|_| rng.random_range(-PI..PI));
            let s = oracle::chsh_value(&psi, angles).unwrap();
            assert!(s <= 2.0 + 1e-12, "S = {s} at {angles:?}");
        }
    }
}

#[test]
fn state_examples() {
    let psi = singlet();
    assert!((psi.amplitude(0, 1) - c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
    assert!((psi.amplitude(1, 0) + c(FRAC_1_SQRT_2, 0.0)).norm() < 1e-15);
    let scaled = oracle::state_from_correlations(&singlet_cross(1.0).map(|z| z * c(0.0, 3.0))).unwrap();
    let overlap = scaled.amplitudes().dotc(psi.amplitudes()).norm();
    assert!((overlap - 1.0).abs() < 1e-14);
    for side in [tsd_core::model::Side::One, tsd_core::model::Side::Two] {
        let rho = oracle::partial_trace(&psi, side);
        assert!((rho.matrix() - CMatrix::identity(2, 2).scale(0.5)).norm() < 1e-14);
    }
    let partial = oracle::state_from_correlations(&from_rows(
        2,
        &[c(0.3f64.sqrt(), 0.0), c(0.0, 0.0), c(0.0, 0.0), c(0.7f64.sqrt(), 0.0)],
    ))
    .unwrap();
    let rho = oracle::partial_trace(&partial, tsd_core::model::Side::Two);
    assert!((rho.matrix()[(0, 0)].re - 0.3).abs() < 1e-14);
    assert!((rho.matrix()[(1, 1)].re - 0.7).abs() < 1e-14);
}
