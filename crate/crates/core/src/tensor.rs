//! Dense n-order tensors and the multilinear algebra built on them.
//!
//! Storage is first-index-fastest: the flat offset of the multi-index
//! `(i_1, ..., i_n)` (0-based here) is `sum_p i_p * prod_{m<p} I_m`, which is
//! exactly the vectorization order. Mode unfoldings order their columns by the
//! same rule over the remaining modes, so that
//!
//! ```text
//! X_(n) = U_n * Z_(n) * (U_N ⊗ ... ⊗ U_{n+1} ⊗ U_{n-1} ⊗ ... ⊗ U_1)^T
//! ```
//!
//! holds for a Tucker model `X = Z x_1 U_1 ... x_N U_N`.
//!
//! Modes are 0-based throughout the API.

use crate::error::{Error, Result};
use crate::linalg::{left_singular_vectors, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::dims("tensor order must be at least 1"));
        }
        if shape.contains(&0) {
            return Err(Error::dims(format!("zero-length mode in shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dims(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Result<Self> {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n])
    }

    /// Builds a tensor by evaluating `f` at every (0-based) multi-index.
    pub fn from_fn(shape: Vec<usize>, mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        let mut idx = vec![0usize; t.order()];
        for k in 0..t.data.len() {
            t.data[k] = f(&idx);
            increment(&mut idx, &t.shape);
        }
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// Flat offset of a 0-based multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.order());
        let mut stride = 1;
        let mut k = 0;
        for (i, dim) in index.iter().zip(&self.shape) {
            debug_assert!(i < dim);
            k += i * stride;
            stride *= dim;
        }
        k
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let k = self.offset(index);
        self.data[k] = value;
    }

    /// Same elements viewed under a different shape with equal element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        Self::new(shape, self.data.clone())
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Vectorization; identical to the storage order.
    pub fn vec(&self) -> Vec<f64> {
        self.data.clone()
    }

    pub fn unfold(&self, mode: usize) -> Result<Matrix> {
        unfold(self, mode)
    }

    pub fn mode_product(&self, u: &Matrix, mode: usize) -> Result<Self> {
        mode_product(self, u, mode)
    }
}

fn increment(idx: &mut [usize], shape: &[usize]) {
    for (i, dim) in idx.iter_mut().zip(shape) {
        *i += 1;
        if *i < *dim {
            return;
        }
        *i = 0;
    }
}

/// Vectorization in first-index-fastest order.
pub fn vec(t: &DenseTensor) -> Vec<f64> {
    t.vec()
}

fn check_mode(order: usize, mode: usize) -> Result<()> {
    if mode >= order {
        return Err(Error::ModeOutOfRange { mode, order });
    }
    Ok(())
}

/// Mode-`mode` unfolding: an `I_mode x prod(other dims)` matrix.
pub fn unfold(t: &DenseTensor, mode: usize) -> Result<Matrix> {
    check_mode(t.order(), mode)?;
    let dim = t.shape[mode];
    let left: usize = t.shape[..mode].iter().product();
    let right: usize = t.shape[mode + 1..].iter().product();
    let mut out = Matrix::zeros(dim, left * right);
    for r in 0..right {
        for i in 0..dim {
            let src = &t.data[(r * dim + i) * left..(r * dim + i + 1) * left];
            for (l, v) in src.iter().enumerate() {
                out[(i, l + r * left)] = *v;
            }
        }
    }
    Ok(out)
}

/// Inverse of [`unfold`].
pub fn fold(m: &Matrix, mode: usize, shape: &[usize]) -> Result<DenseTensor> {
    check_mode(shape.len(), mode)?;
    let dim = shape[mode];
    let left: usize = shape[..mode].iter().product();
    let right: usize = shape[mode + 1..].iter().product();
    if m.nrows() != dim || m.ncols() != left * right {
        return Err(Error::dims(format!(
            "cannot fold {}x{} matrix at mode {mode} into {shape:?}",
            m.nrows(),
            m.ncols()
        )));
    }
    let mut data = vec![0.0; dim * left * right];
    for r in 0..right {
        for i in 0..dim {
            let dst = &mut data[(r * dim + i) * left..(r * dim + i + 1) * left];
            for (l, v) in dst.iter_mut().enumerate() {
                *v = m[(i, l + r * left)];
            }
        }
    }
    DenseTensor::new(shape.to_vec(), data)
}

/// `t x_mode u`: replaces dimension `I_mode` by `u.nrows()`.
pub fn mode_product(t: &DenseTensor, u: &Matrix, mode: usize) -> Result<DenseTensor> {
    check_mode(t.order(), mode)?;
    if u.ncols() != t.shape[mode] {
        return Err(Error::dims(format!(
            "mode-{mode} product needs {} columns, matrix has {}",
            t.shape[mode],
            u.ncols()
        )));
    }
    let unfolded = u * unfold(t, mode)?;
    let mut shape = t.shape.clone();
    shape[mode] = u.nrows();
    fold(&unfolded, mode, &shape)
}

/// Kronecker product; block `(i, j)` of the result is `a[(i, j)] * b`.
pub fn kronecker(a: &Matrix, b: &Matrix) -> Matrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Matrix::zeros(ar * br, ac * bc);
    for j in 0..ac {
        for i in 0..ar {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            let mut block = out.view_mut((i * br, j * bc), (br, bc));
            block.zip_apply(b, |o, v| *o = s * v);
        }
    }
    out
}

/// `m_last ⊗ ... ⊗ m_first`, the factor order that matches the unfolding
/// convention. An empty list gives the 1x1 identity.
pub fn kronecker_descending(mats: &[&Matrix]) -> Matrix {
    let mut acc = Matrix::identity(1, 1);
    for m in mats {
        acc = kronecker(m, &acc);
    }
    acc
}

/// Core tensor plus one orthonormal factor per mode.
#[derive(Debug, Clone, PartialEq)]
pub struct TuckerFactors {
    pub core: DenseTensor,
    /// `factors[n]` is `I_n x J_n`.
    pub factors: Vec<Matrix>,
}

impl TuckerFactors {
    pub fn new(core: DenseTensor, factors: Vec<Matrix>) -> Result<Self> {
        if factors.len() != core.order() {
            return Err(Error::dims(format!(
                "{} factors for a core of order {}",
                factors.len(),
                core.order()
            )));
        }
        for (n, f) in factors.iter().enumerate() {
            if f.ncols() != core.shape()[n] {
                return Err(Error::dims(format!(
                    "factor {n} has {} columns, core mode has {}",
                    f.ncols(),
                    core.shape()[n]
                )));
            }
        }
        Ok(Self { core, factors })
    }

    pub fn ranks(&self) -> &[usize] {
        self.core.shape()
    }

    pub fn reconstruct(&self) -> DenseTensor {
        tucker_reconstruct(self)
    }
}

/// `core x_1 U_1 x_2 ... x_N U_N`.
pub fn tucker_reconstruct(f: &TuckerFactors) -> DenseTensor {
    let mut t = f.core.clone();
    for (n, u) in f.factors.iter().enumerate() {
        t = mode_product(&t, u, n).expect("TuckerFactors invariants checked at construction");
    }
    t
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuckerOptions {
    pub max_iter: usize,
    /// Stop once the relative reconstruction error improves by less than this.
    pub tol: f64,
}

impl Default for TuckerOptions {
    fn default() -> Self {
        Self {
            max_iter: 25,
            tol: 1e-7,
        }
    }
}

/// Relative reconstruction errors: entry 0 after the HOSVD initialization,
/// then one entry per HOOI sweep.
pub type TuckerTrace = Vec<f64>;

/// Truncated Tucker decomposition (HOSVD start, HOOI refinement).
pub fn tucker(t: &DenseTensor, ranks: &[usize], opts: TuckerOptions) -> Result<TuckerFactors> {
    tucker_traced(t, ranks, opts).map(|(f, _)| f)
}

pub fn tucker_traced(
    t: &DenseTensor,
    ranks: &[usize],
    opts: TuckerOptions,
) -> Result<(TuckerFactors, TuckerTrace)> {
    if ranks.len() != t.order() {
        return Err(Error::InvalidRank(format!(
            "{} ranks for a tensor of order {}",
            ranks.len(),
            t.order()
        )));
    }
    for (n, (&r, &dim)) in ranks.iter().zip(t.shape()).enumerate() {
        if r == 0 || r > dim {
            return Err(Error::InvalidRank(format!(
                "rank {r} for mode {n} of size {dim}"
            )));
        }
    }
    if !t.is_finite() {
        return Err(Error::NonFinite("tucker input"));
    }

    let norm = t.frobenius_norm();
    let mut factors: Vec<Matrix> = (0..t.order())
        .map(|n| {
            let unf = unfold(t, n).expect("mode in range");
            left_singular_vectors(&unf, ranks[n]).vectors
        })
        .collect();
    let mut core = project_all(t, &factors);
    let mut trace = vec![relative_error(norm, &core)];

    // a single mode or full ranks everywhere: HOSVD is already optimal
    let trivially_optimal = t.order() == 1 || ranks == t.shape();
    if !trivially_optimal && norm > 0.0 {
        for _ in 0..opts.max_iter {
            for n in 0..t.order() {
                let mut partial = t.clone();
                for (m, u) in factors.iter().enumerate() {
                    if m != n {
                        partial = mode_product(&partial, &u.transpose(), m)?;
                    }
                }
                let unf = unfold(&partial, n)?;
                factors[n] = left_singular_vectors(&unf, ranks[n]).vectors;
            }
            core = project_all(t, &factors);
            let err = relative_error(norm, &core);
            let prev = *trace.last().expect("non-empty");
            trace.push(err);
            if prev - err < opts.tol {
                break;
            }
        }
    }
    Ok((TuckerFactors::new(core, factors)?, trace))
}

fn project_all(t: &DenseTensor, factors: &[Matrix]) -> DenseTensor {
    let mut core = t.clone();
    for (n, u) in factors.iter().enumerate() {
        core = mode_product(&core, &u.transpose(), n).expect("factor shapes fixed by ranks");
    }
    core
}

/// With orthonormal factors, `||X - X_hat||^2 = ||X||^2 - ||core||^2`.
fn relative_error(norm: f64, core: &DenseTensor) -> f64 {
    if norm == 0.0 {
        return 0.0;
    }
    let c = core.frobenius_norm();
    ((norm * norm - c * c).max(0.0)).sqrt() / norm
}

#[cfg(test)]
mod tests {
    use super::*;

    fn counting(shape: Vec<usize>) -> DenseTensor {
        let n = shape.iter().product::<usize>();
        DenseTensor::new(shape, (1..=n).map(|v| v as f64).collect()).unwrap()
    }

    #[test]
    fn vec_of_small_matrix() {
        // t[1,1]=1, t[2,1]=2, t[1,2]=3, t[2,2]=4 in 1-based indexing
        let t = DenseTensor::from_fn(vec![2, 2], |i| match (i[0], i[1]) {
            (0, 0) => 1.0,
            (1, 0) => 2.0,
            (0, 1) => 3.0,
            _ => 4.0,
        })
        .unwrap();
        assert_eq!(vec(&t), vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn vec_matches_index_formula() {
        // independent enumeration of k = 1 + sum (i_p - 1) prod_{m<p} I_m
        let shape = [2usize, 3, 2];
        let t = DenseTensor::from_fn(shape.to_vec(), |i| {
            let k = 1 + i[0] + i[1] * shape[0] + i[2] * shape[0] * shape[1];
            k as f64
        })
        .unwrap();
        let expect: Vec<f64> = (1..=12).map(|v| v as f64).collect();
        assert_eq!(vec(&t), expect);
    }

    #[test]
    fn first_order_unfold_is_vec() {
        // I_1 x (empty product) = I_1 x 1
        let t = DenseTensor::new(vec![4], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let m = unfold(&t, 0).unwrap();
        assert_eq!(m.shape(), (4, 1));
        assert_eq!(m.as_slice(), vec(&t).as_slice());
    }

    #[test]
    fn matrix_unfold_mode_two_is_transpose() {
        let t = counting(vec![2, 2]);
        let m = Matrix::from_column_slice(2, 2, t.as_slice());
        assert_eq!(unfold(&t, 1).unwrap(), m.transpose());
        assert_eq!(unfold(&t, 0).unwrap(), m);
    }

    #[test]
    fn counting_tensor_mode_three() {
        // entries of the 2x3x2 counting tensor, written out by hand:
        // slice k=0 holds 1..6, slice k=1 holds 7..12, first index fastest.
        let t = counting(vec![2, 3, 2]);
        let m = unfold(&t, 2).unwrap();
        assert_eq!(m.shape(), (2, 6));
        let row0: Vec<f64> = m.row(0).iter().copied().collect();
        let row1: Vec<f64> = m.row(1).iter().copied().collect();
        assert_eq!(row0, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        assert_eq!(row1, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        // brute-force map: column = i + 2 j
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..2 {
                    assert_eq!(m[(k, i + 2 * j)], t.get(&[i, j, k]));
                }
            }
        }
        assert_eq!(fold(&m, 2, &[2, 3, 2]).unwrap(), t);
    }

    #[test]
    fn mode_out_of_range() {
        let t = counting(vec![2, 3]);
        assert!(matches!(
            unfold(&t, 2),
            Err(Error::ModeOutOfRange { mode: 2, order: 2 })
        ));
        assert!(fold(&Matrix::zeros(3, 3), 0, &[2, 3]).is_err());
    }

    #[test]
    fn fold_scalar() {
        let m = Matrix::from_element(1, 1, 5.0);
        let t = fold(&m, 0, &[1, 1]).unwrap();
        assert_eq!(t.shape(), &[1, 1]);
        assert_eq!(t.as_slice(), &[5.0]);
    }

    #[test]
    fn mode_product_ones_row_sums() {
        let t = counting(vec![2, 3, 2]);
        let ones = Matrix::from_element(1, 3, 1.0);
        let s = mode_product(&t, &ones, 1).unwrap();
        assert_eq!(s.shape(), &[2, 1, 2]);
        for i in 0..2 {
            for k in 0..2 {
                let expect: f64 = (0..3).map(|j| t.get(&[i, j, k])).sum();
                assert_eq!(s.get(&[i, 0, k]), expect);
            }
        }
        assert!(mode_product(&t, &Matrix::zeros(2, 2), 1).is_err());
    }

    #[test]
    fn kronecker_small_cases() {
        let b = Matrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let c = Matrix::from_element(1, 1, 3.0);
        assert_eq!(kronecker(&c, &b), &b * 3.0);
        let k = kronecker(&Matrix::identity(2, 2), &b);
        let mut expect = Matrix::zeros(4, 4);
        expect.view_mut((0, 0), (2, 2)).copy_from(&b);
        expect.view_mut((2, 2), (2, 2)).copy_from(&b);
        assert_eq!(k, expect);
    }

    #[test]
    fn tucker_rejects_bad_ranks() {
        let t = counting(vec![2, 3]);
        assert!(matches!(tucker(&t, &[3, 1], Default::default()), Err(Error::InvalidRank(_))));
        assert!(matches!(tucker(&t, &[0, 1], Default::default()), Err(Error::InvalidRank(_))));
        assert!(tucker(&t, &[1], Default::default()).is_err());
        let bad = DenseTensor::new(vec![2], vec![1.0, f64::NAN]).unwrap();
        assert!(matches!(tucker(&bad, &[1], Default::default()), Err(Error::NonFinite(_))));
    }

    #[test]
    fn tucker_of_zero_tensor() {
        let t = DenseTensor::zeros(vec![3, 2, 4]).unwrap();
        let f = tucker(&t, &[2, 1, 2], Default::default()).unwrap();
        assert!(f.core.as_slice().iter().all(|v| *v == 0.0));
        for u in &f.factors {
            assert!(crate::linalg::orthonormality_error(u) < 1e-12);
        }
        assert_eq!(f.reconstruct().frobenius_norm(), 0.0);
    }

    #[test]
    fn identity_factors_reconstruct_core() {
        let core = counting(vec![2, 3, 2]);
        let factors = core.shape().iter().map(|&d| Matrix::identity(d, d)).collect();
        let f = TuckerFactors::new(core.clone(), factors).unwrap();
        assert_eq!(f.reconstruct(), core);
    }
}
