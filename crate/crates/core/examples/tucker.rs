//! HOSVD initialization refined by HOOI on a noisy low-rank tensor.
use glds::synthetic::gaussian_matrix;
use glds::tensor::{tucker, tucker_traced, DenseTensor, TuckerFactors, TuckerOptions};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> glds::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let shape = [12usize, 9, 30];
    let ranks = [3usize, 3, 4];
    let core = DenseTensor::from_fn(ranks.to_vec(), |_| StandardNormal.sample(&mut rng))?;
    let factors = shape.iter().zip(&ranks).map(|(&n, &r)| gaussian_matrix(n, r, &mut rng)).collect();
    let clean = TuckerFactors::new(core, factors)?.reconstruct();
    let scale = clean.frobenius_norm() / (clean.len() as f64).sqrt();
    let noisy = DenseTensor::from_fn(shape.to_vec(), |i| {
        clean.get(i) + 0.05 * scale * Distribution::<f64>::sample(&StandardNormal, &mut rng)
    })?;

    let (fit, trace) = tucker_traced(&noisy, &ranks, TuckerOptions::default())?;
    println!("relative error per HOOI iteration (entry 0 is HOSVD):");
    for (k, e) in trace.iter().enumerate() {
        println!("  {k:2}: {e:.6}");
    }
    println!("core shape {:?}", fit.core.shape());

    println!("error against rank of the first mode:");
    for r0 in 1..=5 {
        let f = tucker(&noisy, &[r0, 3, 4], TuckerOptions::default())?;
        let rel = (f.reconstruct().as_slice().iter().zip(noisy.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>()).sqrt()
            / noisy.frobenius_norm();
        println!("  L1 = {r0}: {rel:.4}");
    }
    Ok(())
}
