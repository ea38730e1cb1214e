//! Subspaces as points on a Grassmann manifold, their projection embedding
//! `X -> X X^T`, the chordal metric, and sparse coding over a dictionary of
//! embedded subspaces.
//!
//! No `p x p` projector is formed on the hot paths. Inner products between
//! embedded points reduce to `<X X^T, D D^T>_F = ||X^T D||_F^2`, so all
//! kernels go through `d x d` cross-Gram blocks.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// Tolerance for accepting a basis as orthonormal.
pub const ORTHONORMAL_TOL: f64 = 1e-10;

/// A `p x d` orthonormal basis (`p > d`) standing for its column span.
#[derive(Debug, Clone, PartialEq)]
pub struct GrassmannPoint {
    basis: Matrix,
}

impl GrassmannPoint {
    pub fn new(basis: Matrix) -> Result<Self> {
        if basis.ncols() == 0 || basis.nrows() <= basis.ncols() {
            return Err(Error::dims(format!(
                "Grassmann basis must be tall, got {}x{}",
                basis.nrows(),
                basis.ncols()
            )));
        }
        if !linalg::all_finite(&basis) {
            return Err(Error::NonFinite("Grassmann basis"));
        }
        let dev = linalg::orthonormality_error(&basis);
        if dev > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal(dev));
        }
        Ok(Self { basis })
    }

    /// Orthonormalizes the leading `d`-dimensional column span of `m`.
    pub fn from_span(m: &Matrix, d: usize) -> Result<Self> {
        if d == 0 || d >= m.nrows() {
            return Err(Error::dims(format!(
                "subspace dimension {d} invalid for ambient dimension {}",
                m.nrows()
            )));
        }
        Self::new(linalg::orthonormal_basis(m, d))
    }

    pub fn basis(&self) -> &Matrix {
        &self.basis
    }

    pub fn into_basis(self) -> Matrix {
        self.basis
    }

    /// Ambient dimension `p`.
    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    /// Subspace dimension `d`.
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Another basis of the same span, `basis * r` for an orthogonal `r`.
    pub fn rotated(&self, r: &Matrix) -> Result<Self> {
        Self::new(&self.basis * r)
    }
}

/// Symmetric idempotent matrix `X X^T` of rank `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionMatrix {
    pub matrix: Matrix,
    pub rank: usize,
}

impl ProjectionMatrix {
    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }
}

/// Projection embedding of a subspace.
pub fn project(x: &GrassmannPoint) -> ProjectionMatrix {
    ProjectionMatrix {
        matrix: &x.basis * x.basis.transpose(),
        rank: x.dim(),
    }
}

fn check_compatible(x: &GrassmannPoint, y: &GrassmannPoint) -> Result<()> {
    if x.ambient_dim() != y.ambient_dim() || x.dim() != y.dim() {
        return Err(Error::dims(format!(
            "subspaces {}x{} and {}x{} are not comparable",
            x.ambient_dim(),
            x.dim(),
            y.ambient_dim(),
            y.dim()
        )));
    }
    Ok(())
}

/// `<X X^T, Y Y^T>_F = ||X^T Y||_F^2`.
pub fn embedding_inner(x: &GrassmannPoint, y: &GrassmannPoint) -> f64 {
    (x.basis.transpose() * &y.basis).norm_squared()
}

/// Chordal distance `||X X^T - Y Y^T||_F`.
///
/// Mathematically `sqrt(2d - 2 ||X^T Y||_F^2)`. That form loses about eight
/// digits near zero, so the squared distance is accumulated as
/// `||Y - X X^T Y||^2 + ||X - Y Y^T X||^2` (each term is `sum sin^2` of the
/// principal angles). The sum is commutative, so the result is exactly
/// symmetric.
pub fn chordal_distance(x: &GrassmannPoint, y: &GrassmannPoint) -> Result<f64> {
    check_compatible(x, y)?;
    let xty = x.basis.transpose() * &y.basis;
    let ry = &y.basis - &x.basis * &xty;
    let rx = &x.basis - &y.basis * xty.transpose();
    Ok((ry.norm_squared() + rx.norm_squared()).sqrt())
}

/// Labeled atoms with their cached embedding Gram matrix.
#[derive(Debug, Clone)]
pub struct GrassmannDictionary {
    atoms: Vec<GrassmannPoint>,
    labels: Vec<usize>,
    gram: Matrix,
}

impl GrassmannDictionary {
    pub fn new(atoms: Vec<GrassmannPoint>, labels: Vec<usize>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        if atoms.len() != labels.len() {
            return Err(Error::dims(format!(
                "{} atoms but {} labels",
                atoms.len(),
                labels.len()
            )));
        }
        let (p, d) = (atoms[0].ambient_dim(), atoms[0].dim());
        if let Some(bad) = atoms.iter().find(|a| a.ambient_dim() != p || a.dim() != d) {
            return Err(Error::dims(format!(
                "atom {}x{} differs from {p}x{d}",
                bad.ambient_dim(),
                bad.dim()
            )));
        }
        let n = atoms.len();
        let rows: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| (i..n).map(|j| embedding_inner(&atoms[i], &atoms[j])).collect())
            .collect();
        let mut gram = Matrix::zeros(n, n);
        for (i, row) in rows.into_iter().enumerate() {
            for (off, v) in row.into_iter().enumerate() {
                gram[(i, i + off)] = v;
                gram[(i + off, i)] = v;
            }
        }
        if !linalg::all_finite(&gram) {
            return Err(Error::NonFinite("dictionary gram"));
        }
        Ok(Self { atoms, labels, gram })
    }

    /// Dictionary over the listed atoms, reusing the cached Gram entries.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        if idx.is_empty() {
            return Err(Error::EmptyDictionary);
        }
        if let Some(&bad) = idx.iter().find(|&&i| i >= self.atoms.len()) {
            return Err(Error::InvalidArgument(format!("atom {bad} of {}", self.atoms.len())));
        }
        Ok(Self {
            atoms: idx.iter().map(|&i| self.atoms[i].clone()).collect(),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            gram: Matrix::from_fn(idx.len(), idx.len(), |r, c| self.gram[(idx[r], idx[c])]),
        })
    }

    pub fn atoms(&self) -> &[GrassmannPoint] {
        &self.atoms
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn gram(&self) -> &Matrix {
        &self.gram
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn ambient_dim(&self) -> usize {
        self.atoms[0].ambient_dim()
    }

    pub fn subspace_dim(&self) -> usize {
        self.atoms[0].dim()
    }

    /// Distinct labels in ascending order.
    pub fn classes(&self) -> Vec<usize> {
        let mut c = self.labels.clone();
        c.sort_unstable();
        c.dedup();
        c
    }

    /// `<X_hat, D_hat_j>` for every atom.
    pub fn kernel(&self, query: &GrassmannPoint) -> Result<Vec<f64>> {
        check_compatible(query, &self.atoms[0])?;
        let b: Vec<f64> = self.atoms.iter().map(|a| embedding_inner(query, a)).collect();
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("query kernel"));
        }
        Ok(b)
    }

    pub fn to_record(&self) -> DictionaryRecord {
        DictionaryRecord {
            ambient_dim: self.ambient_dim(),
            subspace_dim: self.subspace_dim(),
            atom_count: self.len(),
            atoms: self.atoms.iter().map(|a| row_major(a.basis())).collect(),
            labels: self.labels.clone(),
        }
    }

    pub fn from_record(rec: DictionaryRecord) -> Result<Self> {
        if rec.atoms.len() != rec.atom_count || rec.labels.len() != rec.atom_count {
            return Err(Error::dims(format!(
                "atom_count {} but {} atoms and {} labels",
                rec.atom_count,
                rec.atoms.len(),
                rec.labels.len()
            )));
        }
        let atoms = rec
            .atoms
            .iter()
            .map(|payload| {
                if payload.len() != rec.ambient_dim * rec.subspace_dim {
                    return Err(Error::dims(format!(
                        "atom payload of {} values, expected {}",
                        payload.len(),
                        rec.ambient_dim * rec.subspace_dim
                    )));
                }
                GrassmannPoint::new(Matrix::from_row_slice(
                    rec.ambient_dim,
                    rec.subspace_dim,
                    payload,
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(atoms, rec.labels)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&self.to_record())?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Self::from_record(serde_json::from_str(s)?)
    }
}

pub(crate) fn row_major(m: &Matrix) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

/// On-disk dictionary container. Field order is part of the format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DictionaryRecord {
    pub ambient_dim: usize,
    pub subspace_dim: usize,
    pub atom_count: usize,
    /// One row-major `ambient_dim x subspace_dim` basis per atom.
    pub atoms: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SparseCodingOptions {
    pub lambda: f64,
    pub tol: f64,
    pub max_iter: usize,
    /// Additionally constrain the coefficients to sum to one.
    pub affine: bool,
}

impl SparseCodingOptions {
    /// Defaults scaled to subspace dimension `d` (`<X_hat, X_hat> = d`).
    pub fn for_dim(d: usize) -> Self {
        Self {
            lambda: 0.01 * d as f64,
            tol: 1e-8,
            max_iter: 1000,
            affine: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SparseCode {
    pub coefficients: Vec<f64>,
    /// Objective after each full sweep; entry 0 is the starting point.
    pub objective_history: Vec<f64>,
    pub sweeps: usize,
    pub converged: bool,
}

impl SparseCode {
    pub fn objective(&self) -> f64 {
        *self.objective_history.last().expect("history holds the start")
    }
}

/// `||X_hat - sum y_j D_hat_j||_F^2 + lambda ||y||_1` written in kernel form.
pub fn coding_objective(self_inner: f64, b: &[f64], gram: &Matrix, y: &[f64], lambda: f64) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        if y[i] == 0.0 {
            continue;
        }
        let mut row = 0.0;
        for j in 0..n {
            row += gram[(i, j)] * y[j];
        }
        quad += y[i] * row;
    }
    let lin: f64 = b.iter().zip(y).map(|(b, y)| b * y).sum();
    let l1: f64 = y.iter().map(|v| v.abs()).sum();
    self_inner - 2.0 * lin + quad + lambda * l1
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

/// l1-regularized coding of a query over the dictionary.
pub fn sparse_code(
    query: &GrassmannPoint,
    dict: &GrassmannDictionary,
    opts: &SparseCodingOptions,
) -> Result<SparseCode> {
    if opts.lambda < 0.0 || !opts.lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("lambda {} must be >= 0", opts.lambda)));
    }
    let b = dict.kernel(query)?;
    let self_inner = query.dim() as f64;
    if opts.affine {
        Ok(affine_lasso(self_inner, &b, dict.gram(), opts))
    } else {
        Ok(lasso_cd(self_inner, &b, dict.gram(), opts))
    }
}

/// Cyclic coordinate descent on `k - 2 b^T y + y^T G y + lambda ||y||_1`.
///
/// Stops once a sweep moves no coefficient by `tol` or more and the KKT
/// violation is at most `tol`.
pub fn lasso_cd(self_inner: f64, b: &[f64], gram: &Matrix, opts: &SparseCodingOptions) -> SparseCode {
    let n = b.len();
    let mut y = vec![0.0; n];
    // g = G y, kept up to date incrementally
    let mut g = vec![0.0; n];
    let mut history = vec![coding_objective(self_inner, b, gram, &y, opts.lambda)];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_iter {
        sweeps += 1;
        let mut max_change: f64 = 0.0;
        for j in 0..n {
            let gjj = gram[(j, j)];
            if gjj <= 0.0 {
                continue;
            }
            let partial = b[j] - (g[j] - gjj * y[j]);
            let new = soft_threshold(partial, opts.lambda / 2.0) / gjj;
            let delta = new - y[j];
            if delta != 0.0 {
                for (i, gi) in g.iter_mut().enumerate() {
                    *gi += gram[(i, j)] * delta;
                }
                y[j] = new;
                max_change = max_change.max(delta.abs());
            }
        }
        history.push(coding_objective(self_inner, b, gram, &y, opts.lambda));
        if max_change < opts.tol && kkt_violation(b, gram, &y, opts.lambda) <= opts.tol {
            converged = true;
            break;
        }
    }
    SparseCode {
        coefficients: y,
        objective_history: history,
        sweeps,
        converged,
    }
}

/// Largest violation of the lasso optimality conditions
/// `2 (G y - b)_j + lambda sign(y_j) = 0` (or `|2 (G y - b)_j| <= lambda` at zero).
pub fn kkt_violation(b: &[f64], gram: &Matrix, y: &[f64], lambda: f64) -> f64 {
    let n = y.len();
    let mut worst: f64 = 0.0;
    for j in 0..n {
        let grad: f64 = 2.0 * ((0..n).map(|i| gram[(j, i)] * y[i]).sum::<f64>() - b[j]);
        let v = if y[j] > 0.0 {
            (grad + lambda).abs()
        } else if y[j] < 0.0 {
            (grad - lambda).abs()
        } else {
            (grad.abs() - lambda).max(0.0)
        };
        worst = worst.max(v);
    }
    worst
}

/// ADMM for the lasso with the extra constraint `sum y = 1`.
fn affine_lasso(self_inner: f64, b: &[f64], gram: &Matrix, opts: &SparseCodingOptions) -> SparseCode {
    let n = b.len();
    let rho = (gram.diagonal().mean()).max(1e-12);
    // KKT system of min y^T G y - 2 b^T y + rho/2 ||y - z + u||^2 s.t. 1^T y = 1
    let mut kkt = Matrix::zeros(n + 1, n + 1);
    kkt.view_mut((0, 0), (n, n)).copy_from(&(gram * 2.0));
    for i in 0..n {
        kkt[(i, i)] += rho;
        kkt[(i, n)] = 1.0;
        kkt[(n, i)] = 1.0;
    }
    let lu = kkt.lu();
    let mut z = vec![1.0 / n as f64; n];
    let mut u = vec![0.0; n];
    let mut y = z.clone();
    let mut history = vec![coding_objective(self_inner, b, gram, &z, opts.lambda)];
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < opts.max_iter {
        sweeps += 1;
        let mut rhs = nalgebra::DVector::zeros(n + 1);
        for i in 0..n {
            rhs[i] = 2.0 * b[i] + rho * (z[i] - u[i]);
        }
        rhs[n] = 1.0;
        let sol = lu.solve(&rhs).unwrap_or_else(|| rhs.clone());
        for i in 0..n {
            y[i] = sol[i];
        }
        let mut max_change: f64 = 0.0;
        for i in 0..n {
            let nz = soft_threshold(y[i] + u[i], opts.lambda / rho);
            max_change = max_change.max((nz - z[i]).abs());
            z[i] = nz;
            u[i] += y[i] - z[i];
        }
        let primal: f64 = y.iter().zip(&z).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        history.push(coding_objective(self_inner, b, gram, &y, opts.lambda));
        if max_change < opts.tol && primal < opts.tol {
            converged = true;
            break;
        }
    }
    SparseCode {
        coefficients: y,
        objective_history: history,
        sweeps,
        converged,
    }
}

#[derive(Debug, Clone)]
pub struct SrcDecision {
    pub label: usize,
    /// `(class, residual)` in ascending class order.
    pub residuals: Vec<(usize, f64)>,
    pub code: SparseCode,
}

/// Lower index wins when two scores agree to ~12 digits.
fn better(candidate: f64, incumbent: f64) -> bool {
    candidate < incumbent - 1e-12 * (1.0 + incumbent.abs())
}

/// Sparse-representation classification: code the query, then pick the
/// class whose atoms alone reconstruct it with the smallest residual.
pub fn classify_src(
    query: &GrassmannPoint,
    dict: &GrassmannDictionary,
    opts: &SparseCodingOptions,
) -> Result<SrcDecision> {
    let code = sparse_code(query, dict, opts)?;
    let b = dict.kernel(query)?;
    let gram = dict.gram();
    let y = &code.coefficients;
    let self_inner = query.dim() as f64;
    let mut residuals = Vec::new();
    for class in dict.classes() {
        let members: Vec<usize> = (0..dict.len()).filter(|&j| dict.labels[j] == class).collect();
        let mut r = self_inner;
        for &i in &members {
            r -= 2.0 * y[i] * b[i];
            for &j in &members {
                r += y[i] * gram[(i, j)] * y[j];
            }
        }
        residuals.push((class, r));
    }
    let mut best = 0;
    for (k, &(_, r)) in residuals.iter().enumerate() {
        if better(r, residuals[best].1) {
            best = k;
        }
    }
    Ok(SrcDecision {
        label: residuals[best].0,
        residuals,
        code,
    })
}

/// Label of the chordally nearest atom (first index on ties).
pub fn nearest_neighbor(query: &GrassmannPoint, dict: &GrassmannDictionary) -> Result<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (j, atom) in dict.atoms().iter().enumerate() {
        let d = chordal_distance(query, atom)?;
        if best.is_none_or(|(_, bd)| better(d, bd)) {
            best = Some((j, d));
        }
    }
    let (j, _) = best.ok_or(Error::EmptyDictionary)?;
    Ok(dict.labels[j])
}
