//! Unfolding, folding, mode products and the Kronecker form of a Tucker model.
use glds::dynamics::tensor_matrix_product;
use glds::tensor::{fold, kronecker_descending, mode_product, unfold, DenseTensor, TuckerFactors};
use nalgebra::DMatrix;

fn main() -> glds::error::Result<()> {
    // entries 1..=24, first index fastest
    let mut k = 0.0;
    let x = DenseTensor::from_fn(vec![3, 4, 2], |_| {
        k += 1.0;
        k
    })?;
    for mode in 0..3 {
        let m = unfold(&x, mode)?;
        println!("mode-{mode} unfolding ({}x{}):{m}", m.nrows(), m.ncols());
        assert_eq!(fold(&m, mode, x.shape())?, x);
    }

    let u = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 1.0]);
    let y = mode_product(&x, &u, 1)?;
    println!("x x_2 U has shape {:?}", y.shape());

    // Tucker model: X_(n) = U_n Z_(n) (U_N (x) ... (x) U_{n+1} (x) U_{n-1} (x) ... (x) U_1)^T
    let core = DenseTensor::from_fn(vec![2, 2, 2], |i| (i[0] + 2 * i[1] + 4 * i[2]) as f64 - 3.5)?;
    let factors = vec![
        DMatrix::from_fn(3, 2, |r, c| ((r + 1) * (c + 2)) as f64 / 7.0),
        DMatrix::from_fn(4, 2, |r, c| (r as f64 - c as f64) / 3.0),
        DMatrix::from_fn(2, 2, |r, c| if r == c { 1.0 } else { 0.5 }),
    ];
    let tf = TuckerFactors::new(core.clone(), factors.clone())?;
    let full = tf.reconstruct();
    for n in 0..3 {
        let others: Vec<&DMatrix<f64>> = (0..3).filter(|&i| i != n).map(|i| &factors[i]).collect();
        let rhs = &factors[n] * unfold(&core, n)? * kronecker_descending(&others).transpose();
        let err = (unfold(&full, n)? - rhs).norm();
        println!("mode {n}: Kronecker identity residual {err:.2e}");
    }

    // vec(C * X) == C vec(X)
    let c = DMatrix::from_fn(6, 24, |r, s| ((r * 7 + s * 3) % 5) as f64 - 2.0);
    let cx = tensor_matrix_product(&c, &x, Some(&[3, 2]))?;
    let direct = &c * nalgebra::DVector::from_column_slice(x.as_slice());
    println!("C * X shape {:?}, max |diff| {:.1e}", cx.shape(), (nalgebra::DVector::from_column_slice(cx.as_slice()) - direct).amax());
    Ok(())
}
