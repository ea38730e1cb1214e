//! System identification against simulated ground truth.

use glds::dynamics::{
    fit_glds, fit_glds_full, lds_subspace, observability, simulate_lds, stabilize, subspace_from_observability,
    FitOptions, GldsModel, TensorSeries,
};
use glds::grassmann::{chordal_distance, GrassmannPoint};
use glds::linalg::{orthonormality_error, spectral_radius, Matrix};
use glds::synthetic::{gaussian_matrix, random_model, random_state};
use glds::tensor::{tucker, unfold, DenseTensor, TuckerOptions};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Noiseless run rescaled to unit RMS, then observed with noise `sigma`.
fn unit_rms_series(model: &GldsModel, x0: &DenseTensor, tau: usize, sigma: f64, seed: u64) -> TensorSeries {
    let clean = simulate_lds(model, x0, tau, 0.0, seed).unwrap();
    let t = clean.tensor();
    let rms = t.frobenius_norm() / (t.len() as f64).sqrt();
    let x0 = DenseTensor::new(x0.shape().to_vec(), x0.as_slice().iter().map(|v| v / rms).collect()).unwrap();
    simulate_lds(model, &x0, tau, sigma, seed).unwrap()
}

fn true_subspace(model: &GldsModel, d: usize, m: usize) -> GrassmannPoint {
    subspace_from_observability(&observability(model, m), d).unwrap()
}

#[test]
fn noiseless_recovery_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let m = 5;
    for case in 0..8 {
        let d = 2 + case % 5;
        let frame = [rng.random_range(3..=19), rng.random_range(3..=9)];
        let model = random_model(&frame, d, &mut rng).unwrap();
        let series = unit_rms_series(&model, &random_state(d, &mut rng), 100, 0.0, case as u64);
        let (_, fitted) = fit_glds(&series, &frame, d, m, &FitOptions::default()).unwrap();
        let dist = chordal_distance(&fitted, &true_subspace(&model, d, m)).unwrap();
        assert!(dist < 1e-4, "case {case} frame {frame:?} d {d}: {dist:e}");
    }
}

#[test]
fn noisy_recovery_degrades_gracefully() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (d, m) = (3, 5);
    let frame = [10, 6];
    let model = random_model(&frame, d, &mut rng).unwrap();
    let x0 = random_state(d, &mut rng);
    let target = true_subspace(&model, d, m);
    let mut last = 0.0;
    for sigma in [1e-4, 1e-3, 1e-2] {
        let series = unit_rms_series(&model, &x0, 100, sigma, 3);
        let (_, fitted) = fit_glds(&series, &frame, d, m, &FitOptions::default()).unwrap();
        let dist = chordal_distance(&fitted, &target).unwrap();
        assert!(dist < 100.0 * sigma, "sigma {sigma}: {dist}");
        assert!(dist >= last * 0.5);
        last = dist;
    }
}

#[test]
fn observation_matrix_is_orthonormal_and_consistent_with_tucker() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let frame = [7, 4];
    let model = random_model(&frame, 3, &mut rng).unwrap();
    let series = simulate_lds(&model, &random_state(3, &mut rng), 60, 0.05, 1).unwrap();
    for ranks in [[7, 4], [5, 3], [2, 2]] {
        let fit = fit_glds_full(&series, &ranks, 3, 4, &FitOptions::default()).unwrap();
        let c = &fit.model.observation;
        assert_eq!(c.shape(), (28, ranks[0] * ranks[1]));
        assert!(orthonormality_error(c) < 1e-12);

        // C X^T equals the time-mode unfolding of the Tucker reconstruction
        let opts = FitOptions::default().tucker;
        let tf = tucker(series.tensor(), &[ranks[0], ranks[1], 3], opts).unwrap();
        let rec = unfold(&tf.reconstruct(), 2).unwrap().transpose();
        let via_c = c * &fit.states;
        assert!((&via_c - &rec).amax() < 1e-10, "ranks {ranks:?}");
        let y = series.observation_matrix();
        let tucker_err = (&y - &rec).norm();
        assert!(((&y - via_c).norm() - tucker_err).abs() < 1e-10 * y.norm());
    }
}

#[test]
fn vector_series_reproduce_classic_lds() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..6 {
        let j = rng.random_range(6..20);
        let d = rng.random_range(2..5);
        let m = rng.random_range(2..6);
        let model = random_model(&[j], d, &mut rng).unwrap();
        let series = simulate_lds(&model, &random_state(d, &mut rng), 50, 0.02, case).unwrap();
        let opts = FitOptions::default();
        let (_, g) = fit_glds(&series, &[j], d, m, &opts).unwrap();
        let (_, l) = lds_subspace(&series.observation_matrix(), d, m, &opts).unwrap();
        let dist = chordal_distance(&g, &l).unwrap();
        assert!(dist < 1e-8, "case {case}: {dist:e}");
    }
}

#[test]
fn fitted_transition_respects_margin() {
    // a pure rotation sits on the unit circle and must be pulled inside
    let a = Matrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
    let c = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    let model = GldsModel::new(a, c, vec![2], vec![3]).unwrap();
    let x0 = DenseTensor::new(vec![2], vec![1.0, 0.5]).unwrap();
    let series = simulate_lds(&model, &x0, 40, 0.0, 0).unwrap();
    let fit = fit_glds_full(&series, &[3], 2, 3, &FitOptions::default()).unwrap();
    let rho = spectral_radius(&fit.model.transition).unwrap();
    assert!((rho - 0.99).abs() < 1e-9, "{rho}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stabilize_is_idempotent_and_bounded(seed in any::<u64>(), n in 1usize..6, scale in 0.1f64..3.0, margin in 0.0f64..0.2) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = gaussian_matrix(n, n, &mut rng) * scale;
        let s1 = stabilize(&a, margin).unwrap();
        let s2 = stabilize(&s1, margin).unwrap();
        prop_assert_eq!(&s1, &s2);
        prop_assert!(spectral_radius(&s1).unwrap() <= (1.0 - margin) * (1.0 + 1e-9));
    }

    #[test]
    fn subspace_does_not_depend_on_state_coordinates(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let model = random_model(&[9], 3, &mut rng).unwrap();
        let t = gaussian_matrix(3, 3, &mut rng) + Matrix::identity(3, 3) * 3.0;
        let ti = t.clone().try_inverse().unwrap();
        let similar = GldsModel::new(&ti * &model.transition * &t, &model.observation * &t, vec![3], vec![9]).unwrap();
        let a = true_subspace(&model, 3, 4);
        let b = true_subspace(&similar, 3, 4);
        prop_assert!(chordal_distance(&a, &b).unwrap() < 1e-8);
    }
}

#[test]
fn tucker_options_are_honoured() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = random_model(&[5, 4], 2, &mut rng).unwrap();
    let series = simulate_lds(&model, &random_state(2, &mut rng), 30, 0.1, 9).unwrap();
    let mut opts = FitOptions::default();
    opts.tucker = TuckerOptions { max_iter: 0, tol: 0.0 };
    let hosvd = fit_glds_full(&series, &[3, 3], 2, 3, &opts).unwrap();
    opts.tucker.max_iter = 50;
    let hooi = fit_glds_full(&series, &[3, 3], 2, 3, &opts).unwrap();
    let y = series.observation_matrix();
    let e0 = (&y - &hosvd.model.observation * &hosvd.states).norm();
    let e1 = (&y - &hooi.model.observation * &hooi.states).norm();
    assert!(e1 <= e0 + 1e-12);
}
