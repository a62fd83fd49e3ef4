//! Centered kernel alignment: the two computation routes and the invariances
//! that make it the right similarity for comparing checkpoints.
//!
//! CKA ignores exactly the transformations a downstream linear layer can
//! undo — orthogonal rotations and isotropic scaling — while reacting to
//! genuine reshaping of the representation geometry.
//!
//! Run with: `cargo run --example cka_invariances`

use entalloc::cka::{cka_feature_form, cka_gram_form, general_cka, linear_cka};
use entalloc::numerics::Matrix;
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

fn random_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_row_major(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.sample(StandardNormal))
            .collect(),
    )
    .expect("nonempty shape")
}

fn to_na(m: &Matrix) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), &m.to_row_major())
}

fn from_na(m: &DMatrix<f64>) -> Matrix {
    Matrix::from_row_major(
        m.nrows(),
        m.ncols(),
        m.transpose().iter().copied().collect(),
    )
    .expect("nonempty shape")
}

fn main() -> entalloc::Result<()> {
    // Tiny rational oracle: for one-dimensional features CKA is the squared
    // correlation, and x=(1,2,4), y=(1,3,2) gives exactly 3/28.
    let x1 = Matrix::from_row_major(3, 1, vec![1.0, 2.0, 4.0])?;
    let y1 = Matrix::from_row_major(3, 1, vec![1.0, 3.0, 2.0])?;
    println!(
        "1-d oracle: CKA = {:.12} (exact squared correlation 3/28 = {:.12})",
        linear_cka(&x1, &y1)?,
        3.0 / 28.0
    );

    let mut rng = ChaCha12Rng::seed_from_u64(9);
    let x = random_matrix(&mut rng, 50, 6);
    let y = random_matrix(&mut rng, 50, 4);
    let baseline = linear_cka(&x, &y)?;
    println!("\nbaseline CKA(x, y)              = {baseline:.12}");

    // Orthogonal rotation of the feature space: invisible.
    let q = to_na(&random_matrix(&mut rng, 6, 6)).qr().q();
    let rotated = linear_cka(&from_na(&(to_na(&x) * q)), &y)?;
    println!("after rotating x's features     = {rotated:.12}");

    // Isotropic scaling: invisible.
    let scaled = linear_cka(&from_na(&(to_na(&x) * 31.7)), &y)?;
    println!("after scaling x by 31.7         = {scaled:.12}");

    // Anisotropic stretch: visible, because it reshapes geometry.
    let mut stretch = DMatrix::<f64>::identity(6, 6);
    stretch[(0, 0)] = 8.0;
    let stretched = linear_cka(&from_na(&(to_na(&x) * stretch)), &y)?;
    println!("after stretching one direction  = {stretched:.12}");

    // The two routes agree; the dispatcher picks the cheaper one by shape.
    let feature = cka_feature_form(&x, &y)?;
    let gram = cka_gram_form(&x, &y)?;
    println!("\nfeature-space route             = {feature:.15}");
    println!("Gram-space route                = {gram:.15}");
    println!(
        "dispatched (general_cka)        = {:.15}",
        general_cka(&x, &y)?
    );

    // Independent noise scores near zero once there are enough rows.
    let nx = random_matrix(&mut rng, 5_000, 8);
    let ny = random_matrix(&mut rng, 5_000, 6);
    println!(
        "\nindependent noise at 5000 rows  = {:.6}",
        general_cka(&nx, &ny)?
    );
    Ok(())
}
