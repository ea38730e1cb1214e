//! Dense kernels shared by the tensor, dynamics and Grassmann modules.
//!
//! Everything here is deterministic: singular vectors carry a fixed sign
//! convention and rank-deficient bases are completed in a fixed order.

use std::sync::Once;

use nalgebra::{DMatrix, Schur};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;

/// Relative threshold below which a singular value counts as zero.
pub const RANK_TOL: f64 = 1e-10;

/// Leading left singular vectors of a matrix.
#[derive(Debug, Clone)]
pub struct LeftSingular {
    /// `rows x k` orthonormal basis.
    pub vectors: Matrix,
    /// Singular values belonging to the returned columns (zero for padded ones).
    pub values: Vec<f64>,
    /// Number of singular values above `RANK_TOL * sigma_max`.
    pub numerical_rank: usize,
}

impl LeftSingular {
    pub fn padded(&self) -> bool {
        self.numerical_rank < self.vectors.ncols()
    }
}

/// Thin SVD `m = U diag(s) V^T`, singular values non-increasing.
///
/// Computed with faer, sequentially. nalgebra's bidiagonal SVD loses up to
/// three digits on tall matrices of low numerical rank, which is exactly
/// the shape of state trajectories and observability matrices.
pub fn thin_svd(m: &Matrix) -> (Matrix, Vec<f64>, Matrix) {
    static SEQUENTIAL: Once = Once::new();
    SEQUENTIAL.call_once(|| faer::set_global_parallelism(faer::Par::Seq));
    let (r, c) = m.shape();
    let k = r.min(c);
    if k == 0 {
        return (Matrix::zeros(r, 0), Vec::new(), Matrix::zeros(c, 0));
    }
    let a = faer::Mat::<f64>::from_fn(r, c, |i, j| m[(i, j)]);
    let svd = a.thin_svd().expect("SVD of a finite matrix converges");
    let (u, v) = (svd.U(), svd.V());
    let s = svd.S().column_vector();
    (
        Matrix::from_fn(r, k, |i, j| u[(i, j)]),
        (0..k).map(|i| s[i]).collect(),
        Matrix::from_fn(c, k, |i, j| v[(i, j)]),
    )
}

/// Flips each column so that its entry of largest magnitude is non-negative.
/// Ties resolve to the first such entry.
pub fn normalize_signs(m: &mut Matrix) {
    for mut col in m.column_iter_mut() {
        let mut best = 0usize;
        let mut best_abs = -1.0;
        for (i, v) in col.iter().enumerate() {
            if v.abs() > best_abs {
                best_abs = v.abs();
                best = i;
            }
        }
        if col.len() > 0 && col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

/// Extends an orthonormal `n x k` basis to `n x target` columns.
///
/// Candidates are the canonical basis vectors, taken greedily by largest
/// residual after projecting out the current span (two Gram-Schmidt passes).
pub fn orthonormal_completion(basis: &Matrix, target: usize) -> Matrix {
    let n = basis.nrows();
    assert!(target <= n, "cannot complete {target} columns in dimension {n}");
    let mut cols: Vec<nalgebra::DVector<f64>> = basis.column_iter().map(|c| c.into_owned()).collect();
    while cols.len() < target {
        let mut best: Option<(f64, nalgebra::DVector<f64>)> = None;
        for i in 0..n {
            let mut v = nalgebra::DVector::zeros(n);
            v[i] = 1.0;
            for _ in 0..2 {
                for q in &cols {
                    let proj = q.dot(&v);
                    v.axpy(-proj, q, 1.0);
                }
            }
            let norm = v.norm();
            if best.as_ref().is_none_or(|(b, _)| norm > *b + 1e-12) {
                best = Some((norm, v));
            }
        }
        let (norm, v) = best.expect("dimension is non-zero");
        cols.push(v / norm);
    }
    Matrix::from_columns(&cols)
}

/// Top-`k` left singular vectors, sign-normalized. Directions beyond the
/// numerical rank are replaced by a deterministic orthonormal completion.
pub fn left_singular_vectors(m: &Matrix, k: usize) -> LeftSingular {
    let rows = m.nrows();
    assert!(k <= rows, "requested {k} singular vectors of a {rows}-row matrix");
    if k == 0 {
        return LeftSingular {
            vectors: Matrix::zeros(rows, 0),
            values: Vec::new(),
            numerical_rank: 0,
        };
    }
    let (u, sv, _) = thin_svd(m);
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > RANK_TOL * sigma_max && s > 0.0).count();
    let keep = rank.min(k);
    let mut head = u.columns(0, keep).into_owned();
    normalize_signs(&mut head);
    let mut vectors = if keep < k {
        orthonormal_completion(&head, k)
    } else {
        head
    };
    if keep < k {
        // only the completed tail needs a sign convention
        let mut tail = vectors.columns(keep, k - keep).into_owned();
        normalize_signs(&mut tail);
        vectors.columns_mut(keep, k - keep).copy_from(&tail);
    }
    let values = (0..k).map(|i| if i < keep { sv[i] } else { 0.0 }).collect();
    LeftSingular {
        vectors,
        values,
        numerical_rank: rank,
    }
}

/// Moore-Penrose inverse via SVD; singular values at or below
/// `rel_tol * sigma_max` are treated as zero.
pub fn pinv(m: &Matrix, rel_tol: f64) -> Matrix {
    let (r, c) = m.shape();
    if r == 0 || c == 0 {
        return Matrix::zeros(c, r);
    }
    let (u, sv, v) = thin_svd(m);
    let sigma_max = sv.iter().copied().fold(0.0, f64::max);
    let cutoff = rel_tol * sigma_max;
    let mut out = Matrix::zeros(c, r);
    for (i, &s) in sv.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += (v.column(i) / s) * u.column(i).transpose();
        }
    }
    out
}

/// Largest eigenvalue modulus of a square matrix.
pub fn spectral_radius(m: &Matrix) -> Result<f64> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    if m.nrows() == 0 {
        return Ok(0.0);
    }
    if m.iter().all(|v| *v == 0.0) {
        return Ok(0.0);
    }
    if let Some(schur) = Schur::try_new(m.clone(), f64::EPSILON, 10_000) {
        let rho = schur
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        return Ok(rho);
    }
    // Gelfand's formula on repeated squaring as a fallback.
    let mut p = m.clone();
    let mut exponent = 1.0f64;
    let mut log_scale = 0.0f64;
    for _ in 0..40 {
        let n = p.norm();
        if n == 0.0 {
            return Ok(0.0);
        }
        log_scale = 2.0 * (log_scale + n.ln());
        p /= n;
        p = &p * &p;
        exponent *= 2.0;
    }
    Ok(((log_scale + p.norm().ln()) / exponent).exp())
}

/// Largest absolute deviation of `m^T m` from the identity.
pub fn orthonormality_error(m: &Matrix) -> f64 {
    let gram = m.transpose() * m;
    let mut worst: f64 = 0.0;
    for j in 0..gram.ncols() {
        for i in 0..gram.nrows() {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((gram[(i, j)] - target).abs());
        }
    }
    worst
}

pub fn all_finite(m: &Matrix) -> bool {
    m.iter().all(|v| v.is_finite())
}

/// Orthonormal basis for the column span of `m` (thin SVD based, `k` columns).
pub fn orthonormal_basis(m: &Matrix, k: usize) -> Matrix {
    left_singular_vectors(m, k).vectors
}
