//! Normalized spectral entropy (NSE) of representation matrices.
//!
//! NSE measures how evenly an utterance's frame matrix spreads its energy
//! across singular directions: 1.0 means a perfectly uniform spectrum, 0.0
//! means rank one (every frame is the same direction). A falling corpus NSE
//! is the first sign that an encoder is collapsing its output space.
//!
//! Run with: `cargo run --example spectral_entropy`

use entalloc::entropy::{nse, SingularSpectrum};
use entalloc::numerics::Matrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

fn main() -> entalloc::Result<()> {
    // Analytic spectra first: the value only depends on the singular values.
    let skewed = SingularSpectrum::from_values(vec![3.0, 1.0])?.normalized_entropy()?;
    let uniform = SingularSpectrum::from_values(vec![2.0; 6])?.normalized_entropy()?;
    let rank_one = SingularSpectrum::from_values(vec![5.0, 0.0, 0.0])?.normalized_entropy()?;
    println!("spectrum (3, 1)      -> NSE {skewed:.6}   (mildly concentrated)");
    println!("six equal values     -> NSE {uniform:.6}   (perfectly spread)");
    println!("single nonzero value -> NSE {rank_one:.6}   (collapsed to rank one)");

    // The same number computed from an actual frame matrix.
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let frames = 24;
    let dim = 8;

    let isotropic = Matrix::from_row_major(
        frames,
        dim,
        (0..frames * dim)
            .map(|_| rng.sample(StandardNormal))
            .collect(),
    )?;
    println!(
        "\n{frames}x{dim} white-noise frames -> NSE {:.4}",
        nse(&isotropic)?
    );

    // Interpolate between white noise and a rank-one matrix to watch the
    // diagnostic fall as the representation collapses.
    let direction: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
    println!("\ncollapse sweep (0 = white noise, 1 = rank one):");
    for mix_percent in (0..=100).step_by(20) {
        let mix = f64::from(mix_percent) / 100.0;
        let mut entries = Vec::with_capacity(frames * dim);
        for _ in 0..frames {
            let gain: f64 = rng.sample(StandardNormal);
            for &d in &direction {
                let noise: f64 = rng.sample(StandardNormal);
                entries.push(mix * gain * d + (1.0 - mix) * noise);
            }
        }
        let m = Matrix::from_row_major(frames, dim, entries)?;
        println!("  mix {mix:.1} -> NSE {:.4}", nse(&m)?);
    }
    Ok(())
}
