//! The discrete identity behind "accessible information": observing Z splits
//! the entropy of Y into the part Z explains, I(Y;Z), and the part it does
//! not, H(Y|Z). The residual H(Y) - I(Y;Z) - H(Y|Z) is zero to machine
//! precision, which is what lets "information gained" and "uncertainty
//! removed" be used interchangeably.
//!
//! Run with: `cargo run --example entropy_decomposition`

use entalloc::entropy::{
    discrete_conditional_entropy, discrete_entropy, discrete_mutual_information,
    entropy_decomposition_residual, DiscreteJoint, Margin,
};

fn show(label: &str, joint: &DiscreteJoint) {
    let h_y = discrete_entropy(joint, Margin::Rows);
    let mi = discrete_mutual_information(joint);
    let h_cond = discrete_conditional_entropy(joint);
    println!("{label}");
    println!("  H(Y)     = {h_y:.6} bits");
    println!("  I(Y;Z)   = {mi:.6} bits");
    println!("  H(Y|Z)   = {h_cond:.6} bits");
    println!(
        "  residual = {:.3e}\n",
        entropy_decomposition_residual(joint)
    );
}

fn main() -> entalloc::Result<()> {
    // Independent: Z explains nothing, H(Y|Z) = H(Y).
    show(
        "independent uniform 2x2:",
        &DiscreteJoint::new(vec![vec![0.25, 0.25], vec![0.25, 0.25]])?,
    );

    // Fully determined: Z pins Y down completely, H(Y|Z) = 0.
    show(
        "diagonal (Y = Z):",
        &DiscreteJoint::new(vec![vec![0.5, 0.0], vec![0.0, 0.5]])?,
    );

    // A noisy channel in between.
    show(
        "noisy channel:",
        &DiscreteJoint::new(vec![vec![0.40, 0.10], vec![0.15, 0.35]])?,
    );

    // The identity is not an accident of nice tables; it closes on an
    // arbitrary irregular joint too.
    let raw = [
        vec![0.03, 0.11, 0.02, 0.09],
        vec![0.17, 0.01, 0.08, 0.04],
        vec![0.05, 0.13, 0.21, 0.06],
    ];
    let total: f64 = raw.iter().flatten().sum();
    let normalized: Vec<Vec<f64>> = raw
        .iter()
        .map(|row| row.iter().map(|p| p / total).collect())
        .collect();
    show("irregular 3x4 table:", &DiscreteJoint::new(normalized)?);
    Ok(())
}
