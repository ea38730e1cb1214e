//! Random stable systems and toy datasets drawn from them.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dataset::{write_generic_csv, SampleRecord};
use crate::dynamics::{simulate_lds, GldsModel, TensorSeries};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::skeleton::{SequenceMeta, SkeletonSequence, Topology};
use crate::tensor::DenseTensor;

pub fn gaussian_matrix(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// `rows x cols` with orthonormal columns, `cols <= rows`.
pub fn random_orthonormal(rows: usize, cols: usize, rng: &mut impl Rng) -> Matrix {
    assert!(cols <= rows, "need cols <= rows");
    let q = gaussian_matrix(rows, cols, rng).qr().q();
    q.columns(0, cols).into_owned()
}

/// Real `n x n` transition with eigenvalue moduli in `radius`, built from
/// 2x2 rotation blocks (plus one real pole for odd `n`) under a random
/// orthogonal similarity.
pub fn random_stable_transition(n: usize, radius: (f64, f64), rng: &mut impl Rng) -> Matrix {
    let mut b = Matrix::zeros(n, n);
    let mut k = 0;
    while k + 1 < n {
        let r = rng.random_range(radius.0..radius.1);
        let theta: f64 = rng.random_range(0.2..2.8);
        let (s, c) = theta.sin_cos();
        b[(k, k)] = r * c;
        b[(k, k + 1)] = -r * s;
        b[(k + 1, k)] = r * s;
        b[(k + 1, k + 1)] = r * c;
        k += 2;
    }
    if k < n {
        b[(k, k)] = rng.random_range(radius.0..radius.1);
    }
    let q = random_orthonormal(n, n, rng);
    &q * b * q.transpose()
}

/// Stable model with `n` states, orthonormal `C` and the given frame shape.
pub fn random_model(obs_shape: &[usize], n: usize, rng: &mut impl Rng) -> Result<GldsModel> {
    let j: usize = obs_shape.iter().product();
    if n == 0 || n > j {
        return Err(Error::InvalidArgument(format!("{n} states for {j} outputs")));
    }
    let a = random_stable_transition(n, (0.85, 0.98), rng);
    let c = random_orthonormal(j, n, rng);
    GldsModel::new(a, c, vec![n], obs_shape.to_vec())
}

pub fn random_state(n: usize, rng: &mut impl Rng) -> DenseTensor {
    let v: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    DenseTensor::new(vec![n], v).expect("vector shape")
}

/// A labeled series, as produced by feature extraction.
#[derive(Debug, Clone)]
pub struct LabeledSeries {
    pub record: SampleRecord,
    pub series: TensorSeries,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyOptions {
    pub classes: usize,
    pub subjects: u32,
    pub trials: u32,
    pub frame_shape: [usize; 2],
    pub state_dim: usize,
    pub frames: usize,
    pub noise: f64,
}

impl Default for ToyOptions {
    fn default() -> Self {
        Self {
            classes: 2,
            subjects: 4,
            trials: 2,
            frame_shape: [6, 4],
            state_dim: 3,
            frames: 40,
            noise: 0.01,
        }
    }
}

/// One random model per class; every (subject, trial) draws a fresh initial
/// state and noise stream from it. Class ids start at 1.
pub fn toy_dataset(opts: &ToyOptions, seed: u64) -> Result<Vec<LabeledSeries>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let models = (0..opts.classes)
        .map(|_| random_model(&opts.frame_shape, opts.state_dim, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for (k, model) in models.iter().enumerate() {
        let action = k + 1;
        for subject in 1..=opts.subjects {
            for trial in 1..=opts.trials {
                let x0 = random_state(opts.state_dim, &mut rng);
                let series = simulate_lds(model, &x0, opts.frames, opts.noise, rng.random())?;
                out.push(LabeledSeries {
                    record: SampleRecord {
                        id: format!("a{action:02}_s{subject:02}_e{trial:02}"),
                        path: Default::default(),
                        action,
                        subject,
                        trial,
                        view: None,
                        frames: None,
                    },
                    series,
                });
            }
        }
    }
    Ok(out)
}

/// Writes a skeleton dataset in the generic CSV layout: joint positions are
/// a fixed rest pose plus the output of a per-class random LDS.
pub fn write_toy_skeletons(dir: &Path, opts: &ToyOptions, seed: u64) -> Result<usize> {
    let topology = Arc::new(Topology::kinect_sdk());
    let n = topology.joint_count;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rest: Vec<[f64; 3]> = (0..n)
        .map(|_| [rng.random_range(-0.5..0.5), rng.random_range(-1.0..1.0), rng.random_range(2.0..3.0)])
        .collect();
    let models = (0..opts.classes)
        .map(|_| random_model(&[n, 3], opts.state_dim, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = 0;
    for (k, model) in models.iter().enumerate() {
        for subject in 1..=opts.subjects {
            for trial in 1..=opts.trials {
                let x0 = random_state(opts.state_dim, &mut rng);
                let series = simulate_lds(model, &x0, opts.frames, opts.noise, rng.random())?;
                let frames = (0..opts.frames)
                    .map(|t| {
                        let f = series.frame(t);
                        (0..n)
                            .map(|j| {
                                let p = rest[j];
                                [p[0] + f.get(&[j, 0]), p[1] + f.get(&[j, 1]), p[2] + f.get(&[j, 2])]
                            })
                            .collect()
                    })
                    .collect();
                let seq = SkeletonSequence::new(frames, topology.clone(), SequenceMeta::default())?;
                let path = dir.join(format!("a{:02}_s{subject:02}_e{trial:02}.csv", k + 1));
                fs::write(&path, write_generic_csv(&seq)).map_err(|e| Error::io(&path, e))?;
                written += 1;
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{orthonormality_error, spectral_radius};

    #[test]
    fn transition_is_stable() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in 1..7 {
            let a = random_stable_transition(n, (0.85, 0.98), &mut rng);
            let r = spectral_radius(&a).unwrap();
            assert!((0.85..0.98).contains(&r), "n={n} rho={r}");
        }
        let q = random_orthonormal(7, 3, &mut rng);
        assert!(orthonormality_error(&q) < 1e-12);
    }

    #[test]
    fn toy_is_reproducible() {
        let opts = ToyOptions { subjects: 1, trials: 1, ..Default::default() };
        let a = toy_dataset(&opts, 9).unwrap();
        let b = toy_dataset(&opts, 9).unwrap();
        assert_eq!(a.len(), 2);
        assert_eq!(a[1].series, b[1].series);
        assert_eq!(a[1].record.action, 2);
    }
}
