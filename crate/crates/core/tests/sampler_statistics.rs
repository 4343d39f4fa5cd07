//! Statistical checks of the per-bin sampler against covariances computed
//! directly from the model parameters.

use nalgebra::Cholesky;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use tsd_core::linalg::{CMatrix, CVector};
use tsd_core::model::{build_matrix_model, build_scalar_pair_model, CorrelationModel};
use tsd_core::sampler::{sample_bin, DiscretizationParams};

const DT: f64 = 0.01;

/// Per-bin covariance written out from the block formula for a scalar pair.
fn scalar_pair_covariance(sigma: f64, e0: f64, s: f64) -> CMatrix {
    let diag = sigma * sigma * s + e0;
    let off = 2.0 * (e0 * s).sqrt() * sigma;
    CMatrix::from_row_slice(2, 2, &[diag.into(), off.into(), off.into(), diag.into()]).unscale(DT)
}

fn draw(model: &CorrelationModel, t: u64, n: usize, seed: u64) -> Vec<Vec<Complex64>> {
    let disc = DiscretizationParams::new(DT, t + 1).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| sample_bin(model, t, &disc, &mut rng).unwrap().values)
        .collect()
}

fn empirical_covariance(samples: &[Vec<Complex64>]) -> CMatrix {
    let d = samples[0].len();
    let mut acc = CMatrix::zeros(d, d);
    for z in samples {
        for i in 0..d {
            for j in 0..d {
                acc[(i, j)] += z[i] * z[j].conj();
            }
        }
    }
    acc.unscale(samples.len() as f64)
}

/// CDF of a chi-square variable with `2k` degrees of freedom.
fn chi2_even_cdf(x: f64, k: usize) -> f64 {
    let h = x / 2.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for i in 1..k {
        term *= h / i as f64;
        sum += term;
    }
    1.0 - (-h).exp() * sum
}

#[test]
fn covariance_matches_block_formula() {
    let model = build_scalar_pair_model(Complex64::new(1.0, 0.0), 4.0).unwrap();
    let t = 99;
    let s = (t as f64 + 0.5) * DT;
    let want = scalar_pair_covariance(1.0, 4.0, s);
    // Close to the unit-time value [[500, 400], [400, 500]].
    assert!((want[(0, 0)].re - 500.0).abs() < 1.0 && (want[(0, 1)].re - 400.0).abs() < 1.5);
    let got = empirical_covariance(&draw(&model, t, 400_000, 11));
    for i in 0..2 {
        for j in 0..2 {
            let err = (got[(i, j)] - want[(i, j)]).norm() / want[(i, j)].norm();
            assert!(err < 0.01, "entry ({i},{j}): {} vs {}", got[(i, j)], want[(i, j)]);
        }
    }
}

#[test]
fn whitened_samples_are_standard() {
    // Quadratic form z†C⁻¹z is chi-square with 2d degrees of freedom.
    let cases: Vec<(CorrelationModel, u64, CMatrix)> = vec![
        (
            build_scalar_pair_model(Complex64::new(1.0, 0.0), 4.0).unwrap(),
            99,
            scalar_pair_covariance(1.0, 4.0, 0.995),
        ),
        (
            build_scalar_pair_model(Complex64::new(0.0, 2.0), 1.0).unwrap(),
            10,
            CMatrix::zeros(2, 2),
        ),
        (
            build_matrix_model(
                CMatrix::from_row_slice(2, 2, &[1.0.into(), Complex64::new(0.5, 0.5), 0.0.into(), 0.3.into()]),
                2.0,
            )
            .unwrap(),
            500,
            CMatrix::zeros(4, 4),
        ),
    ];
    for (k, (model, t, direct)) in cases.into_iter().enumerate() {
        let s = (t as f64 + 0.5) * DT;
        let cov = if direct.iter().all(|z| *z == Complex64::new(0.0, 0.0)) {
            model.per_bin_covariance(s).matrix.unscale(DT)
        } else {
            direct
        };
        let d = cov.nrows();
        let chol = Cholesky::new(cov).expect("positive definite");
        let samples = draw(&model, t, 50_000, 100 + k as u64);
        let bins = 10;
        let mut counts = vec![0usize; bins];
        for z in &samples {
            let w = chol.l().solve_lower_triangular(&CVector::from_column_slice(z)).unwrap();
            let q = 2.0 * w.norm_squared();
            let u = chi2_even_cdf(q, d);
            counts[((u * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let expected = samples.len() as f64 / bins as f64;
        let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // 1% critical value with 9 degrees of freedom.
        assert!(stat < 21.666, "case {k}: chi-square {stat}, counts {counts:?}");
    }
}

#[test]
fn samples_are_centred_and_circular() {
    let model = build_scalar_pair_model(Complex64::new(1.0, 0.0), 4.0).unwrap();
    let n = 200_000;
    let samples = draw(&model, 99, n, 7);
    let var = scalar_pair_covariance(1.0, 4.0, 0.995)[(0, 0)].re;
    for i in 0..2 {
        let mean: Complex64 = samples.iter().map(|z| z[i]).sum::<Complex64>() / n as f64;
        let se = (var / n as f64).sqrt();
        assert!(mean.norm() < 4.0 * se, "channel {i} mean {mean}");
        // E[z·z] vanishes for a circular law.
        let pseudo: Complex64 = samples.iter().map(|z| z[i] * z[i]).sum::<Complex64>() / n as f64;
        assert!(
            pseudo.norm() < 5.0 * var / (n as f64).sqrt(),
            "channel {i} pseudo-covariance {pseudo}"
        );
    }
}

#[test]
fn consecutive_bins_are_independent() {
    let model = build_scalar_pair_model(Complex64::new(1.0, 0.0), 4.0).unwrap();
    let disc = DiscretizationParams::new(DT, 200).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 100_000;
    let mut acc = Complex64::new(0.0, 0.0);
    let (mut v0, mut v1) = (0.0, 0.0);
    for _ in 0..n {
        let a = sample_bin(&model, 99, &disc, &mut rng).unwrap().values[0];
        let b = sample_bin(&model, 100, &disc, &mut rng).unwrap().values[0];
        acc += a * b.conj();
        v0 += a.norm_sqr();
        v1 += b.norm_sqr();
    }
    let corr = acc.norm() / (v0 * v1).sqrt();
    assert!(corr < 4.0 / (n as f64).sqrt(), "lag-1 correlation {corr}");
}
