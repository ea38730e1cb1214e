//! Linear dynamical systems over vector and tensor time series.
//!
//! The vector case is the classic SVD-based closed form. The tensor case
//! (gLDS) fits a Tucker model to the stacked observations: the Kronecker
//! product of the spatial factors becomes the observation matrix, the
//! temporal factor times the unfolded core becomes the state trajectory, and
//! the transition is the least-squares one-step map between states. Either
//! way the sequence descriptor is the leading left singular subspace of the
//! extended observability matrix `[C; CA; ...; CA^m]`.

use log::warn;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::grassmann::GrassmannPoint;
use crate::linalg::{self, left_singular_vectors, pinv, spectral_radius, Matrix, RANK_TOL};
use crate::tensor::{kronecker_descending, tucker, unfold, DenseTensor, TuckerOptions};

/// Identified system `x(t+1) = A x(t) + v`, `y(t) = C x(t) + w`.
#[derive(Debug, Clone, PartialEq)]
pub struct GldsModel {
    /// `A`, `I x I`.
    pub transition: Matrix,
    /// `C`, `J x I`; acts on vectorized state tensors.
    pub observation: Matrix,
    pub state_shape: Vec<usize>,
    pub obs_shape: Vec<usize>,
    pub state_dim: usize,
    /// Residual covariance of the state update, when estimated.
    pub process_cov: Option<Matrix>,
    /// Residual covariance of the observations, when estimated.
    pub observation_cov: Option<Matrix>,
}

impl GldsModel {
    pub fn new(
        transition: Matrix,
        observation: Matrix,
        state_shape: Vec<usize>,
        obs_shape: Vec<usize>,
    ) -> Result<Self> {
        let i: usize = state_shape.iter().product();
        let j: usize = obs_shape.iter().product();
        if !transition.is_square() {
            return Err(Error::NotSquare {
                rows: transition.nrows(),
                cols: transition.ncols(),
            });
        }
        if transition.nrows() != i || observation.shape() != (j, i) {
            return Err(Error::dims(format!(
                "A is {}x{}, C is {}x{}, but state shape {state_shape:?} and observation shape {obs_shape:?}",
                transition.nrows(),
                transition.ncols(),
                observation.nrows(),
                observation.ncols()
            )));
        }
        Ok(Self {
            transition,
            observation,
            state_dim: i,
            state_shape,
            obs_shape,
            process_cov: None,
            observation_cov: None,
        })
    }

    pub fn state_size(&self) -> usize {
        self.transition.nrows()
    }

    pub fn obs_size(&self) -> usize {
        self.observation.nrows()
    }
}

/// An n-order tensor whose last mode is time.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSeries {
    frames: DenseTensor,
}

impl TensorSeries {
    pub fn new(frames: DenseTensor) -> Result<Self> {
        if frames.order() < 2 {
            return Err(Error::dims("a tensor series needs at least one frame mode and a time mode"));
        }
        let tau = *frames.shape().last().expect("order >= 2");
        if tau < 2 {
            return Err(Error::TooFewFrames { frames: tau, min: 2 });
        }
        if !frames.is_finite() {
            return Err(Error::NonFinite("tensor series"));
        }
        Ok(Self { frames })
    }

    /// Stacks equally shaped frames along a new trailing time mode.
    pub fn from_frames(frames: &[DenseTensor]) -> Result<Self> {
        let first = frames.first().ok_or(Error::TooFewFrames { frames: 0, min: 2 })?;
        let mut data = Vec::with_capacity(first.len() * frames.len());
        for f in frames {
            if f.shape() != first.shape() {
                return Err(Error::dims(format!(
                    "frame shape {:?} differs from {:?}",
                    f.shape(),
                    first.shape()
                )));
            }
            data.extend_from_slice(f.as_slice());
        }
        let mut shape = first.shape().to_vec();
        shape.push(frames.len());
        Self::new(DenseTensor::new(shape, data)?)
    }

    /// `J x tau` matrix whose columns are the vectorized frames.
    pub fn from_matrix(y: &Matrix) -> Result<Self> {
        Self::new(DenseTensor::new(vec![y.nrows(), y.ncols()], y.as_slice().to_vec())?)
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.frames
    }

    pub fn len(&self) -> usize {
        *self.frames.shape().last().expect("order >= 2")
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn frame_shape(&self) -> &[usize] {
        &self.frames.shape()[..self.frames.order() - 1]
    }

    pub fn frame_size(&self) -> usize {
        self.frame_shape().iter().product()
    }

    pub fn frame(&self, t: usize) -> DenseTensor {
        let j = self.frame_size();
        DenseTensor::new(
            self.frame_shape().to_vec(),
            self.frames.as_slice()[t * j..(t + 1) * j].to_vec(),
        )
        .expect("frame slice matches frame shape")
    }

    /// Observations as a `J x tau` matrix (the transposed time-mode unfolding).
    pub fn observation_matrix(&self) -> Matrix {
        Matrix::from_column_slice(self.frame_size(), self.len(), self.frames.as_slice())
    }
}

/// `C ⊛ X`: applies `c` to `vec(x)` and reshapes to `out_shape`
/// (a vector of length `c.nrows()` when omitted).
pub fn tensor_matrix_product(
    c: &Matrix,
    x: &DenseTensor,
    out_shape: Option<&[usize]>,
) -> Result<DenseTensor> {
    if c.ncols() != x.len() {
        return Err(Error::dims(format!(
            "matrix has {} columns, tensor has {} elements",
            c.ncols(),
            x.len()
        )));
    }
    let shape = out_shape.map_or_else(|| vec![c.nrows()], <[usize]>::to_vec);
    if shape.iter().product::<usize>() != c.nrows() {
        return Err(Error::dims(format!(
            "output shape {shape:?} does not hold {} elements",
            c.nrows()
        )));
    }
    let v = nalgebra::DVector::from_column_slice(x.as_slice());
    let y = c * v;
    DenseTensor::new(shape, y.as_slice().to_vec())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    /// Spectral radius is capped at `1 - margin`.
    pub margin: f64,
    /// Relative singular-value cutoff for the pseudo-inverse.
    pub pinv_tol: f64,
    pub tucker: TuckerOptions,
    /// Estimate residual covariances `Q` and `R`.
    pub estimate_noise: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            margin: 0.01,
            pinv_tol: 1e-10,
            tucker: TuckerOptions::default(),
            estimate_noise: true,
        }
    }
}

/// Scales `a` so that its spectral radius is at most `1 - margin`.
pub fn stabilize(a: &Matrix, margin: f64) -> Result<Matrix> {
    if !(margin > 0.0 && margin < 1.0) {
        return Err(Error::InvalidArgument(format!("margin {margin} not in (0, 1)")));
    }
    let rho = spectral_radius(a)?;
    let cap = 1.0 - margin;
    if rho <= cap * (1.0 + 1e-12) {
        return Ok(a.clone());
    }
    Ok(a * (cap / rho))
}

fn check_series_matrix(y: &Matrix) -> Result<()> {
    if y.ncols() < 2 {
        return Err(Error::TooFewFrames {
            frames: y.ncols(),
            min: 2,
        });
    }
    if !linalg::all_finite(y) {
        return Err(Error::NonFinite("observations"));
    }
    Ok(())
}

fn residual_cov(r: &Matrix) -> Matrix {
    let n = r.ncols().max(1) as f64;
    (r * r.transpose()) / n
}

/// Least-squares transition between consecutive columns of a state trajectory.
fn one_step_transition(states: &Matrix, pinv_tol: f64) -> Matrix {
    let tau = states.ncols();
    let next = states.columns(1, tau - 1).into_owned();
    let prev = states.columns(0, tau - 1).into_owned();
    next * pinv(&prev, pinv_tol)
}

/// Classic LDS identification from a `n x tau` observation matrix.
pub fn fit_lds(y: &Matrix, d: usize, opts: &FitOptions) -> Result<GldsModel> {
    check_series_matrix(y)?;
    let (n, tau) = y.shape();
    if d == 0 || d > n.min(tau) {
        return Err(Error::InvalidRank(format!(
            "state dimension {d} for a {n}x{tau} observation matrix"
        )));
    }
    let ls = left_singular_vectors(y, d);
    if ls.numerical_rank == 0 {
        return Err(Error::RankZeroObservation);
    }
    if ls.padded() {
        warn!(
            "state dimension {d} exceeds numerical rank {}; padding the observation basis",
            ls.numerical_rank
        );
    }
    let c = ls.vectors;
    let sigma = &ls.values;
    let sigma_inv: Vec<f64> = sigma.iter().map(|&s| if s > 0.0 { 1.0 / s } else { 0.0 }).collect();
    // V_d = Y^T U_d Sigma^+, consistent with the signs chosen for U_d
    let mut v = y.transpose() * &c;
    for (k, s) in sigma_inv.iter().enumerate() {
        v.column_mut(k).scale_mut(*s);
    }
    let v1 = v.rows(0, tau - 1).into_owned();
    let v2 = v.rows(1, tau - 1).into_owned();
    // Sigma V^T D1 V (V^T D2 V)^-1 Sigma^-1, with V^T D1 V = V2^T V1 and V^T D2 V = V1^T V1
    let mut a = v2.transpose() * &v1 * pinv(&(v1.transpose() * &v1), opts.pinv_tol);
    for i in 0..d {
        for j in 0..d {
            a[(i, j)] *= sigma[i] * sigma_inv[j];
        }
    }
    let a = stabilize(&a, opts.margin)?;
    let mut model = GldsModel::new(a, c, vec![d], vec![n])?;
    model.state_dim = d;
    if opts.estimate_noise {
        let states = model.observation.transpose() * y;
        attach_noise(&mut model, y, &states);
    }
    Ok(model)
}

fn attach_noise(model: &mut GldsModel, y: &Matrix, states: &Matrix) {
    let tau = states.ncols();
    let obs_res = y - &model.observation * states;
    let next = states.columns(1, tau - 1).into_owned();
    let prev = states.columns(0, tau - 1).into_owned();
    let proc_res = next - &model.transition * prev;
    model.observation_cov = Some(residual_cov(&obs_res));
    model.process_cov = Some(residual_cov(&proc_res));
}

/// Everything produced while fitting a gLDS to one sequence.
#[derive(Debug, Clone)]
pub struct GldsFit {
    pub model: GldsModel,
    pub subspace: GrassmannPoint,
    /// Estimated state trajectory, `I x tau`.
    pub states: Matrix,
}

/// Fits a gLDS to a tensor series and returns the model and its subspace.
///
/// `ranks` holds one rank per frame mode, `d` is both the temporal Tucker
/// rank and the subspace dimension, `m` the highest power of `A` kept in the
/// observability matrix.
pub fn fit_glds(
    series: &TensorSeries,
    ranks: &[usize],
    d: usize,
    m: usize,
    opts: &FitOptions,
) -> Result<(GldsModel, GrassmannPoint)> {
    fit_glds_full(series, ranks, d, m, opts).map(|f| (f.model, f.subspace))
}

pub fn fit_glds_full(
    series: &TensorSeries,
    ranks: &[usize],
    d: usize,
    m: usize,
    opts: &FitOptions,
) -> Result<GldsFit> {
    let tau = series.len();
    let frame_shape = series.frame_shape().to_vec();
    if ranks.len() != frame_shape.len() {
        return Err(Error::InvalidRank(format!(
            "{} ranks for {} frame modes",
            ranks.len(),
            frame_shape.len()
        )));
    }
    if d == 0 || d > tau {
        return Err(Error::InvalidRank(format!("state dimension {d} for {tau} frames")));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("truncation m must be at least 1".into()));
    }
    let mut all_ranks = ranks.to_vec();
    all_ranks.push(d);
    let tf = tucker(series.tensor(), &all_ranks, opts.tucker)?;

    let time_mode = frame_shape.len();
    let spatial: Vec<&Matrix> = tf.factors[..time_mode].iter().collect();
    let c = kronecker_descending(&spatial);
    let core_unf = unfold(&tf.core, time_mode)?;
    let states = (&tf.factors[time_mode] * core_unf).transpose();

    if states.iter().all(|v| *v == 0.0) {
        return Err(Error::RankZeroObservation);
    }
    let a = one_step_transition(&states, opts.pinv_tol);
    let a = stabilize(&a, opts.margin)?;
    let mut model = GldsModel::new(a, c, ranks.to_vec(), frame_shape)?;
    model.state_dim = d;
    if opts.estimate_noise {
        attach_noise(&mut model, &series.observation_matrix(), &states);
    }
    let o = observability(&model, m);
    let subspace = subspace_from_observability(&o, d)?;
    Ok(GldsFit {
        model,
        subspace,
        states,
    })
}

/// Extended observability matrix `[C; CA; ...; CA^m]`.
pub fn observability(model: &GldsModel, m: usize) -> Matrix {
    let j = model.obs_size();
    let i = model.state_size();
    let mut out = Matrix::zeros(j * (m + 1), i);
    let mut block = model.observation.clone();
    for k in 0..=m {
        out.view_mut((k * j, 0), (j, i)).copy_from(&block);
        if k < m {
            block = &block * &model.transition;
        }
    }
    out
}

/// Leading `d` left singular vectors of an observability matrix.
pub fn subspace_from_observability(o: &Matrix, d: usize) -> Result<GrassmannPoint> {
    if d == 0 || d >= o.nrows() {
        return Err(Error::InvalidRank(format!(
            "subspace dimension {d} for a matrix with {} rows",
            o.nrows()
        )));
    }
    if !linalg::all_finite(o) {
        return Err(Error::NonFinite("observability matrix"));
    }
    let ls = left_singular_vectors(o, d);
    if ls.padded() {
        warn!(
            "subspace dimension {d} exceeds numerical rank {} of the observability matrix; completing the basis",
            ls.numerical_rank
        );
    }
    GrassmannPoint::new(ls.vectors)
}

/// Vector-observation variant of the full pipeline: LDS fit, then subspace.
pub fn lds_subspace(y: &Matrix, d: usize, m: usize, opts: &FitOptions) -> Result<(GldsModel, GrassmannPoint)> {
    let model = fit_lds(y, d, opts)?;
    let o = observability(&model, m);
    let point = subspace_from_observability(&o, d)?;
    Ok((model, point))
}

fn noise_factor(cov: &Matrix) -> Result<Matrix> {
    match cov.clone().cholesky() {
        Some(ch) => Ok(ch.l()),
        None => {
            // semidefinite: symmetric square root through the eigenbasis
            let eig = cov.clone().symmetric_eigen();
            let mut root = eig.eigenvectors.clone();
            for (k, &l) in eig.eigenvalues.iter().enumerate() {
                root.column_mut(k).scale_mut(l.max(0.0).sqrt());
            }
            if !linalg::all_finite(&root) {
                return Err(Error::NonFinite("noise covariance"));
            }
            Ok(root)
        }
    }
}

/// Rolls the model forward for `steps` frames from `x0`.
///
/// Observation noise has covariance `noise_scale^2 R` (`R = I` when the model
/// carries none); process noise has covariance `noise_scale^2 Q` and is only
/// drawn when the model carries `Q`. The same seed gives the same series.
pub fn simulate_lds(
    model: &GldsModel,
    x0: &DenseTensor,
    steps: usize,
    noise_scale: f64,
    seed: u64,
) -> Result<TensorSeries> {
    let i = model.state_size();
    let j = model.obs_size();
    if x0.len() != i {
        return Err(Error::dims(format!("initial state has {} elements, model state {i}", x0.len())));
    }
    if steps < 2 {
        return Err(Error::TooFewFrames { frames: steps, min: 2 });
    }
    if noise_scale < 0.0 || !noise_scale.is_finite() {
        return Err(Error::InvalidArgument(format!("noise scale {noise_scale}")));
    }
    if noise_scale > 0.0 && spectral_radius(&model.transition)? >= 1.0 {
        warn!("simulating an unstable model with noise");
    }
    let obs_root = match &model.observation_cov {
        Some(r) => Some(noise_factor(r)?),
        None => None,
    };
    let proc_root = match &model.process_cov {
        Some(q) => Some(noise_factor(q)?),
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |n: usize| -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_fn(n, |_, _| StandardNormal.sample(&mut rng))
    };

    let mut x = nalgebra::DVector::from_column_slice(x0.as_slice());
    let mut data = Vec::with_capacity(j * steps);
    for _ in 0..steps {
        let mut y = &model.observation * &x;
        if noise_scale > 0.0 {
            let z = draw(j);
            match &obs_root {
                Some(l) => y += (l * z) * noise_scale,
                None => y += z * noise_scale,
            }
        }
        data.extend_from_slice(y.as_slice());
        x = &model.transition * &x;
        if noise_scale > 0.0 {
            if let Some(l) = &proc_root {
                x += (l * draw(i)) * noise_scale;
            }
        }
    }
    let mut shape = model.obs_shape.clone();
    shape.push(steps);
    TensorSeries::new(DenseTensor::new(shape, data)?)
}

/// Rank of the observation matrix under the library-wide cutoff.
pub fn numerical_rank(y: &Matrix) -> usize {
    let sv = y.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > RANK_TOL * max && s > 0.0).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stabilize_examples() {
        let half = Matrix::identity(3, 3) * 0.5;
        assert_eq!(stabilize(&half, 0.01).unwrap(), half);
        let two = Matrix::identity(2, 2) * 2.0;
        let s = stabilize(&two, 0.01).unwrap();
        assert!((s - Matrix::identity(2, 2) * 0.99).norm() < 1e-14);
        assert!(matches!(stabilize(&Matrix::zeros(2, 3), 0.01), Err(Error::NotSquare { .. })));
        assert!(stabilize(&two, 1.5).is_err());
    }

    #[test]
    fn observability_blocks() {
        let c = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let model = GldsModel::new(Matrix::zeros(2, 2), c.clone(), vec![2], vec![3]).unwrap();
        assert_eq!(observability(&model, 0), c);
        let o = observability(&model, 3);
        assert_eq!(o.shape(), (12, 2));
        assert!(o.rows(3, 9).iter().all(|v| *v == 0.0));
    }

    #[test]
    fn tensor_matrix_product_examples() {
        let x = DenseTensor::new(vec![2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let id = Matrix::identity(4, 4);
        assert_eq!(tensor_matrix_product(&id, &x, Some(&[2, 2])).unwrap(), x);
        let ones = Matrix::from_element(1, 4, 1.0);
        let s = tensor_matrix_product(&ones, &x, None).unwrap();
        assert_eq!(s.as_slice(), &[10.0]);
        assert!(tensor_matrix_product(&ones, &x, Some(&[2])).is_err());
        assert!(tensor_matrix_product(&Matrix::zeros(2, 3), &x, None).is_err());
    }

    #[test]
    fn zero_observations_are_rank_zero() {
        let y = Matrix::zeros(4, 10);
        assert!(matches!(fit_lds(&y, 2, &FitOptions::default()), Err(Error::RankZeroObservation)));
        assert!(matches!(
            fit_lds(&Matrix::zeros(4, 1), 1, &FitOptions::default()),
            Err(Error::TooFewFrames { .. })
        ));
    }

    #[test]
    fn constant_sequence_gives_unit_transition() {
        let y0 = [3.0, -4.0, 0.0];
        let y = Matrix::from_fn(3, 12, |i, _| y0[i]);
        let mut opts = FitOptions::default();
        let model = fit_lds(&y, 1, &opts).unwrap();
        // A = [1] before stabilization, so 1 - margin after
        assert!((model.transition[(0, 0)] - 0.99).abs() < 1e-12);
        let c = model.observation.column(0);
        assert!((c[0].abs() - 0.6).abs() < 1e-12 && (c[1].abs() - 0.8).abs() < 1e-12);
        opts.margin = 0.5;
        let model = fit_lds(&y, 1, &opts).unwrap();
        assert!((model.transition[(0, 0)] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn simulate_trivial_models() {
        let c = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
        let x0 = DenseTensor::new(vec![2], vec![1.0, 2.0]).unwrap();
        let zero = GldsModel::new(Matrix::zeros(2, 2), c.clone(), vec![2], vec![3]).unwrap();
        let s = simulate_lds(&zero, &x0, 4, 0.0, 1).unwrap();
        assert_eq!(s.frame(0).as_slice(), &[1.0, 2.0, 0.0]);
        for t in 1..4 {
            assert!(s.frame(t).as_slice().iter().all(|v| *v == 0.0));
        }
        let ident = GldsModel::new(Matrix::identity(2, 2), c, vec![2], vec![3]).unwrap();
        let s = simulate_lds(&ident, &x0, 5, 0.0, 1).unwrap();
        for t in 0..5 {
            assert_eq!(s.frame(t).as_slice(), &[1.0, 2.0, 0.0]);
        }
        let a = simulate_lds(&ident, &x0, 5, 0.3, 42).unwrap();
        let b = simulate_lds(&ident, &x0, 5, 0.3, 42).unwrap();
        assert_eq!(a, b);
        assert!(simulate_lds(&ident, &x0, 1, 0.0, 1).is_err());
    }

    #[test]
    fn series_layout() {
        let y = Matrix::from_fn(4, 3, |i, t| (10 * t + i) as f64);
        let s = TensorSeries::from_matrix(&y).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.frame(2).as_slice(), &[20.0, 21.0, 22.0, 23.0]);
        assert_eq!(s.observation_matrix(), y);
        let unf = unfold(s.tensor(), 1).unwrap();
        assert_eq!(unf.transpose(), y);
    }
}
