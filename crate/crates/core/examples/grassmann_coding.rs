//! Chordal distances, sparse coding over a subspace dictionary and SRC.
use glds::grassmann::{
    chordal_distance, classify_src, nearest_neighbor, sparse_code, GrassmannDictionary, GrassmannPoint,
    SparseCodingOptions,
};
use glds::synthetic::gaussian_matrix;
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn perturb(base: &GrassmannPoint, eps: f64, rng: &mut ChaCha8Rng) -> glds::error::Result<GrassmannPoint> {
    let (p, d) = (base.ambient_dim(), base.dim());
    GrassmannPoint::from_span(&(base.basis() + gaussian_matrix(p, d, rng) * eps), d)
}

fn main() -> glds::error::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (p, d) = (30, 3);
    let centers: Vec<GrassmannPoint> = (0..3)
        .map(|_| GrassmannPoint::from_span(&gaussian_matrix(p, d, &mut rng), d))
        .collect::<Result<_, _>>()?;
    println!("distance between class centres: {:.3}", chordal_distance(&centers[0], &centers[1])?);

    let mut atoms = Vec::new();
    let mut labels = Vec::new();
    for (k, c) in centers.iter().enumerate() {
        for _ in 0..5 {
            atoms.push(perturb(c, 0.1, &mut rng)?);
            labels.push(k + 1);
        }
    }
    let dict = GrassmannDictionary::new(atoms, labels)?;

    let query = perturb(&centers[1], 0.1, &mut rng)?;
    let opts = SparseCodingOptions::for_dim(d);
    let code = sparse_code(&query, &dict, &opts)?;
    println!("objective per sweep: {:?}", code.objective_history.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
    println!("coefficients: {:?}", code.coefficients.iter().map(|v| format!("{v:.3}")).collect::<Vec<_>>());

    let src = classify_src(&query, &dict, &opts)?;
    println!("SRC label {} residuals {:?}", src.label, src.residuals);
    println!("nearest-neighbour label {}", nearest_neighbor(&query, &dict)?);

    // rotating the query basis leaves everything unchanged
    let r = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let rotated = query.rotated(&r)?;
    println!("SRC label after rotating the basis: {}", classify_src(&rotated, &dict, &opts)?.label);
    Ok(())
}
