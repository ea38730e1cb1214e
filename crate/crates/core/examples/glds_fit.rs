//! Simulate a stable tensor LDS, identify it and compare observability subspaces.
//!
//! The initial state is scaled so the clean trajectory has unit RMS, which
//! makes `noise` a relative level.
use glds::dynamics::{fit_glds_full, observability, simulate_lds, subspace_from_observability, FitOptions};
use glds::grassmann::chordal_distance;
use glds::linalg::spectral_radius;
use glds::synthetic::{random_model, random_state};
use glds::tensor::DenseTensor;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> glds::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (d, m, tau) = (4, 5, 100);
    let frame = [19usize, 9];
    let truth = random_model(&frame, d, &mut rng)?;
    let target = subspace_from_observability(&observability(&truth, m), d)?;
    println!("true spectral radius {:.4}", spectral_radius(&truth.transition)?);

    let x0 = random_state(d, &mut rng);
    let clean = simulate_lds(&truth, &x0, tau, 0.0, 0)?;
    let rms = clean.tensor().frobenius_norm() / (clean.tensor().len() as f64).sqrt();
    let x0 = DenseTensor::new(vec![d], x0.as_slice().iter().map(|v| v / rms).collect())?;

    for noise in [0.0, 0.01, 0.05] {
        let series = simulate_lds(&truth, &x0, tau, noise, 5)?;
        let fit = fit_glds_full(&series, &frame, d, m, &FitOptions::default())?;
        println!(
            "noise {noise:<5} fitted radius {:.4}  C is {}x{}  chordal distance to truth {:.3e}",
            spectral_radius(&fit.model.transition)?,
            fit.model.observation.nrows(),
            fit.model.observation.ncols(),
            chordal_distance(&fit.subspace, &target)?
        );
    }
    Ok(())
}
