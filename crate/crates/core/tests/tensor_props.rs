//! Tensor algebra against brute-force index oracles.

use glds::dynamics::tensor_matrix_product;
use glds::tensor::{
    fold, kronecker, kronecker_descending, mode_product, tucker, tucker_traced, unfold, DenseTensor, TuckerFactors,
    TuckerOptions,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

type M = DMatrix<f64>;

/// Walks every multi-index of `shape`, first index fastest.
fn for_each_index(shape: &[usize], mut f: impl FnMut(&[usize])) {
    let total: usize = shape.iter().product();
    let mut idx = vec![0; shape.len()];
    for _ in 0..total {
        f(&idx);
        for (k, n) in shape.iter().enumerate() {
            idx[k] += 1;
            if idx[k] < *n {
                break;
            }
            idx[k] = 0;
        }
    }
}

/// `sum_r Z[r] prod_n U_n[i_n, r_n]`, straight from the definition.
fn tucker_oracle(core: &DenseTensor, factors: &[M]) -> DenseTensor {
    let shape: Vec<usize> = factors.iter().map(|u| u.nrows()).collect();
    let mut out = DenseTensor::zeros(shape.clone()).unwrap();
    for_each_index(&shape, |i| {
        let mut acc = 0.0;
        for_each_index(core.shape(), |r| {
            let mut term = core.get(r);
            for (n, u) in factors.iter().enumerate() {
                term *= u[(i[n], r[n])];
            }
            acc += term;
        });
        out.set(i, acc);
    });
    out
}

/// Kronecker product by its entry formula.
fn kron_oracle(a: &M, b: &M) -> M {
    M::from_fn(a.nrows() * b.nrows(), a.ncols() * b.ncols(), |r, c| {
        a[(r / b.nrows(), c / b.ncols())] * b[(r % b.nrows(), c % b.ncols())]
    })
}

fn tensor_strategy(max_order: usize, max_dim: usize) -> impl Strategy<Value = DenseTensor> {
    prop::collection::vec(1..=max_dim, 1..=max_order).prop_flat_map(|shape| {
        let n: usize = shape.iter().product();
        prop::collection::vec(-1.0..1.0f64, n).prop_map(move |data| DenseTensor::new(shape.clone(), data).unwrap())
    })
}

fn matrix(rows: usize, cols: usize, seed: &[f64]) -> M {
    M::from_fn(rows, cols, |r, c| seed[(r * 7 + c * 13 + rows) % seed.len()] + 0.1 * (r as f64 - c as f64))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unfold_fold_round_trip(t in tensor_strategy(4, 4)) {
        for mode in 0..t.order() {
            let m = unfold(&t, mode).unwrap();
            prop_assert_eq!(m.nrows(), t.shape()[mode]);
            prop_assert_eq!(fold(&m, mode, t.shape()).unwrap(), t.clone());
        }
    }

    #[test]
    fn mode_product_matches_loops(t in tensor_strategy(4, 4), rows in 1usize..4, seed in prop::collection::vec(-1.0..1.0f64, 11)) {
        for mode in 0..t.order() {
            let u = matrix(rows, t.shape()[mode], &seed);
            let got = mode_product(&t, &u, mode).unwrap();
            let mut shape = t.shape().to_vec();
            shape[mode] = rows;
            prop_assert_eq!(got.shape(), &shape[..]);
            let mut worst: f64 = 0.0;
            for_each_index(&shape, |i| {
                let mut acc = 0.0;
                let mut j = i.to_vec();
                for k in 0..t.shape()[mode] {
                    j[mode] = k;
                    acc += u[(i[mode], k)] * t.get(&j);
                }
                worst = worst.max((acc - got.get(i)).abs());
            });
            prop_assert!(worst <= 1e-12, "mode {} deviation {}", mode, worst);
        }
    }

    #[test]
    fn kronecker_matches_entry_formula(a in prop::collection::vec(-1.0..1.0f64, 6), b in prop::collection::vec(-1.0..1.0f64, 6)) {
        let a = M::from_column_slice(2, 3, &a);
        let b = M::from_column_slice(3, 2, &b);
        prop_assert_eq!(kronecker(&a, &b), kron_oracle(&a, &b));
    }

    #[test]
    fn tensor_matrix_product_is_vec_product(t in tensor_strategy(3, 4), seed in prop::collection::vec(-1.0..1.0f64, 7)) {
        let c = matrix(5, t.len(), &seed);
        let y = tensor_matrix_product(&c, &t, Some(&[5])).unwrap();
        let direct = &c * DVector::from_column_slice(t.as_slice());
        prop_assert!((DVector::from_column_slice(y.as_slice()) - direct).amax() <= 1e-12);
    }

    #[test]
    fn full_rank_tucker_is_exact(t in tensor_strategy(3, 5)) {
        prop_assume!(t.frobenius_norm() > 1e-6);
        let f = tucker(&t, t.shape(), TuckerOptions::default()).unwrap();
        let rec = f.reconstruct();
        let err: f64 = rec.as_slice().iter().zip(t.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        prop_assert!(err <= 1e-8 * t.frobenius_norm());
    }
}

#[test]
fn tucker_unfolding_identity_and_oracle() {
    // every mode: X_(n) = U_n Z_(n) (U_N x ... x U_{n+1} x U_{n-1} x ... x U_1)^T
    let core = DenseTensor::from_fn(vec![2, 3, 2], |i| (i[0] as f64 + 1.0) * (i[1] as f64 - 1.0) + i[2] as f64).unwrap();
    let factors = vec![
        M::from_fn(3, 2, |r, c| (r + c) as f64 * 0.3 - 0.2),
        M::from_fn(4, 3, |r, c| ((r * 3 + c) % 5) as f64 - 2.0),
        M::from_fn(5, 2, |r, c| (r as f64 * 0.7).sin() + c as f64),
    ];
    let tf = TuckerFactors::new(core.clone(), factors.clone()).unwrap();
    let full = tf.reconstruct();
    let oracle = tucker_oracle(&core, &factors);
    let diff: f64 = full.as_slice().iter().zip(oracle.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-12, "{diff}");
    for n in 0..3 {
        let others: Vec<&M> = (0..3).rev().filter(|&i| i != n).map(|i| &factors[i]).collect();
        let kron = others[1..].iter().fold(others[0].clone(), |acc, m| kron_oracle(&acc, m));
        let rhs = &factors[n] * unfold(&core, n).unwrap() * kron.transpose();
        assert!((unfold(&oracle, n).unwrap() - rhs).amax() < 1e-12, "mode {n}");
    }
}

#[test]
fn kronecker_acts_as_mode_products() {
    let x = DenseTensor::from_fn(vec![2, 3, 2], |i| (i[0] * 6 + i[1] * 2 + i[2]) as f64 * 0.1 - 0.5).unwrap();
    let us = [
        M::from_fn(3, 2, |r, c| (r as f64 - c as f64) * 0.4),
        M::from_fn(2, 3, |r, c| 1.0 / (1.0 + r as f64 + c as f64)),
        M::from_fn(4, 2, |r, c| ((r + 2 * c) % 3) as f64),
    ];
    let mut via_modes = x.clone();
    for (n, u) in us.iter().enumerate() {
        via_modes = mode_product(&via_modes, u, n).unwrap();
    }
    let c = kronecker_descending(&us.iter().collect::<Vec<_>>());
    let via_c = tensor_matrix_product(&c, &x, Some(&[3, 2, 4])).unwrap();
    let diff: f64 = via_modes.as_slice().iter().zip(via_c.as_slice()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-12, "{diff}");
}

#[test]
fn rank_one_tensor_has_rank_one_tucker() {
    // a (x) b (x) c with a = (1, 2), b = (1, 0, -1), c = (3, 1)
    let (a, b, c) = ([1.0, 2.0], [1.0, 0.0, -1.0], [3.0, 1.0]);
    let t = DenseTensor::from_fn(vec![2, 3, 2], |i| a[i[0]] * b[i[1]] * c[i[2]]).unwrap();
    let f = tucker(&t, &[1, 1, 1], TuckerOptions::default()).unwrap();
    let norm = (5.0f64 * 2.0 * 10.0).sqrt();
    assert!((f.core.get(&[0, 0, 0]).abs() - norm).abs() < 1e-12);
    let rec = f.reconstruct();
    let err: f64 = rec.as_slice().iter().zip(t.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(err < 1e-12);
}

#[test]
fn tucker_error_shrinks_with_rank_and_iterations() {
    let t = DenseTensor::from_fn(vec![6, 5, 7], |i| {
        let (x, y, z) = (i[0] as f64, i[1] as f64, i[2] as f64);
        (x * 0.9 + y).sin() * (z * 0.3).cos() + 0.2 * (x * y - z).cos() + 0.05 * ((x + 2.0 * y + 3.0 * z) * 1.7).sin()
    })
    .unwrap();
    let mut last = f64::INFINITY;
    for r in 1..=5 {
        let (_, trace) = tucker_traced(&t, &[r, r, r], TuckerOptions { max_iter: 50, tol: 0.0 }).unwrap();
        for w in trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "HOOI error rose: {:?}", trace);
        }
        let e = *trace.last().unwrap();
        assert!(e <= last + 1e-12, "rank {r}: {e} > {last}");
        last = e;
    }
}
