//! Diagnostics for how an LLM-based speech recognizer splits the work of
//! narrowing down the transcript between its speech encoder and its language
//! model.
//!
//! The crate measures three complementary things over dumped encoder
//! representations:
//!
//! * **Spectral concentration**: the normalized spectral entropy (NSE) of an
//!   utterance's frame matrix says how evenly its energy spreads over
//!   directions; adapters that compress aggressively push it down.
//! * **Information allocation**: Gaussian log-determinant proxies estimate
//!   how many bits of phonetic information (PAI) and residual semantic
//!   information beyond phonetics (CSAI) the pooled encoder summary carries.
//! * **Representation drift**: centered kernel alignment (CKA) compares
//!   dumps across checkpoints or layers, feeding both layer-wise alignment
//!   profiles and a hot-swap scheduler that re-anchors a frozen encoder
//!   whenever drift crosses a threshold.
//!
//! Start with the runnable examples (one per capability) under `examples/`,
//! or the `entalloc` binary that fronts the same library functions as
//! subcommands.
//!
//! A minimal end-to-end pass — generate a corpus, compute the metric triple
//! for its first checkpoint, and compare two checkpoints by CKA:
//!
//! ```
//! use entalloc::cka::avg_utterance_cka;
//! use entalloc::dataio::assemble_corpus;
//! use entalloc::synth::{generate, DriftSpec};
//! use entalloc::targets::metric_triple;
//!
//! # fn main() -> entalloc::Result<()> {
//! let spec = DriftSpec {
//!     feature_dim: 8,
//!     frames_min: 4,
//!     frames_max: 8,
//!     utterances: 120,
//!     drift_rate: 0.001,
//!     noise_scale: 1.0,
//!     frame_jitter: 0.25,
//!     semantic_leak: 0.6,
//!     vocab_size: 20,
//!     phones_min: 3,
//!     phones_max: 8,
//!     embedding_dim: 6,
//!     seed: 7,
//!     checkpoint_steps: vec![100, 200],
//!     jolts: vec![],
//! };
//! let corpus = generate(&spec)?;
//!
//! let items = assemble_corpus(&corpus.checkpoints[0], &corpus.manifest, &corpus.embeddings)?;
//! let triple = metric_triple(&items, &corpus.vocab, 4, 1e-3, 100, "demo")?;
//! assert!(triple.nse > 0.0 && triple.nse <= 1.0);
//! assert!(triple.pai_bits >= 0.0 && triple.csai_bits >= 0.0);
//!
//! let drift = avg_utterance_cka(&corpus.checkpoints[0], &corpus.checkpoints[1])?;
//! assert!(drift.value > 0.0 && drift.value <= 1.0);
//! # Ok(())
//! # }
//! ```

pub mod cka;
pub mod cli;
pub mod dataio;
pub mod entropy;
pub mod error;
pub mod numerics;
pub mod scheduler;
pub mod synth;
pub mod targets;

pub use error::{Error, Result};
