//! Gaussian information proxies: log-determinant mutual information,
//! conditional information through Schur complements, and the chain rule
//! that ties them together.
//!
//! Run with: `cargo run --example gaussian_information`

use entalloc::entropy::{gaussian_cmi_bits, gaussian_mi_bits};
use entalloc::numerics::SymmetricMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

fn main() -> entalloc::Result<()> {
    // A hand-built 3-variable Gaussian: u correlates with p, and c adds
    // information about u beyond what p already carries.
    //   u = z1
    //   p = 0.8 z1 + 0.6 z2
    //   c = 0.5 z1 + 0.5 z2 + 0.707 z3
    let cov = SymmetricMatrix::from_row_major(
        3,
        vec![
            1.00, 0.80, 0.50, //
            0.80, 1.00, 0.70, //
            0.50, 0.70, 1.00,
        ],
    )?;
    let u = [0usize];
    let p = [1usize];
    let c = [2usize];
    let pc = [1usize, 2];

    let mi_up = gaussian_mi_bits(&cov, &u, &p)?;
    let mi_uc = gaussian_mi_bits(&cov, &u, &c)?;
    let mi_u_pc = gaussian_mi_bits(&cov, &u, &pc)?;
    let cmi_uc_given_p = gaussian_cmi_bits(&cov, &u, &c, &p)?;

    println!("I(u; p)        = {mi_up:.6} bits");
    println!("I(u; c)        = {mi_uc:.6} bits");
    println!("I(u; [p, c])   = {mi_u_pc:.6} bits");
    println!("I(u; c | p)    = {cmi_uc_given_p:.6} bits");
    println!(
        "chain rule     : I(u;p) + I(u;c|p) = {:.6} (matches the joint value)",
        mi_up + cmi_uc_given_p
    );
    println!(
        "note           : I(u;c|p) < I(u;c) here because p already explains \
         most of what c knows about u\n"
    );

    // Monte-Carlo sanity check: a correlated pair recovers the analytic
    // -0.5*log2(1 - rho^2) from samples alone.
    let rho: f64 = 0.6;
    let n = 100_000;
    let mut rng = ChaCha12Rng::seed_from_u64(12);
    let mut sum = [0.0f64; 2];
    let mut sq = [0.0f64; 2];
    let mut cross = 0.0f64;
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let z1: f64 = rng.sample(StandardNormal);
        let z2: f64 = rng.sample(StandardNormal);
        let a = z1;
        let b = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
        sum[0] += a;
        sum[1] += b;
        sq[0] += a * a;
        sq[1] += b * b;
        cross += a * b;
        samples.push((a, b));
    }
    let nf = n as f64;
    let mean = [sum[0] / nf, sum[1] / nf];
    let var = [
        sq[0] / nf - mean[0] * mean[0],
        sq[1] / nf - mean[1] * mean[1],
    ];
    let cov_ab = cross / nf - mean[0] * mean[1];
    let sample_cov = SymmetricMatrix::from_row_major(2, vec![var[0], cov_ab, cov_ab, var[1]])?;

    let estimated = gaussian_mi_bits(&sample_cov, &[0], &[1])?;
    let analytic = -0.5 * (1.0 - rho * rho).log2();
    println!("bivariate Gaussian, rho = {rho}, n = {n}:");
    println!("  estimated I(a; b) = {estimated:.4} bits");
    println!("  analytic  I(a; b) = {analytic:.4} bits");
    Ok(())
}
