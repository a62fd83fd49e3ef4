//! The full per-checkpoint diagnostic triple — NSE, PAI, and CSAI — computed
//! end to end from a generated corpus.
//!
//! - NSE: how spread the encoder's frame spectra are (spectral health).
//! - PAI: how much the pooled summary tells us about the phone bag, in bits.
//! - CSAI: how much it tells us about the semantic embedding beyond what the
//!   phones already say, in bits.
//!
//! Together they describe how the encoder allocates entropy reduction
//! between acoustic-phonetic and semantic structure. Representation drift
//! toward the text side shows up as falling PAI with rising CSAI.
//!
//! Run with: `cargo run --example representation_metrics`

use entalloc::dataio::assemble_corpus;
use entalloc::synth::{generate, DriftSpec};
use entalloc::targets::metric_triple;

fn main() -> entalloc::Result<()> {
    // Two corpora with identical random draws, differing only in how
    // strongly the semantic embedding leaks into the representation.
    for (label, leak) in [("phonetic-dominated", 0.0), ("semantic-leaking", 2.5)] {
        let spec = DriftSpec {
            feature_dim: 16,
            frames_min: 8,
            frames_max: 16,
            utterances: 600,
            drift_rate: 0.0,
            noise_scale: 0.8,
            frame_jitter: 0.3,
            semantic_leak: leak,
            vocab_size: 40,
            phones_min: 4,
            phones_max: 12,
            embedding_dim: 12,
            seed: 33,
            checkpoint_steps: vec![1000],
            jolts: vec![],
        };
        let corpus = generate(&spec)?;
        let items = assemble_corpus(&corpus.checkpoints[0], &corpus.manifest, &corpus.embeddings)?;
        let triple = metric_triple(&items, &corpus.vocab, 8, 1e-3, 1000, label)?;
        println!(
            "{label:<20} nse {:.4}   pai {:.4} bits   csai {:.4} bits",
            triple.nse, triple.pai_bits, triple.csai_bits
        );
    }
    println!(
        "\nthe leak moves every dial, but CSAI is the one that jumps by an order of\n\
         magnitude: the pooled summary now carries embedding information the phone\n\
         bag cannot explain, which is exactly what CSAI isolates"
    );
    Ok(())
}
