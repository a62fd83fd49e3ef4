//! Layer-wise alignment profile: which tap point of an encoder stack is
//! most linearly similar to the semantic embedding space?
//!
//! Each layer's per-utterance representations are mean-pooled into one row,
//! and the pooled matrix is compared to the (unit-norm) embedding matrix
//! with linear CKA. Early acoustic layers score near zero; a layer that has
//! rotated toward semantic structure stands out.
//!
//! Run with: `cargo run --example layer_alignment`

use entalloc::cka::layerwise_alignment;
use entalloc::dataio::{EmbeddingTable, EvalManifest, ManifestUtterance, RepresentationDump};
use entalloc::numerics::Matrix;
use entalloc::targets::UtteranceRepresentation;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

fn main() -> entalloc::Result<()> {
    let mut rng = ChaCha12Rng::seed_from_u64(17);
    let utterances = 300;
    let emb_dim = 8;
    let layer_dim = 12;
    let frames = 5;

    let ids: Vec<String> = (0..utterances).map(|i| format!("utt_{i:04}")).collect();
    let embeddings: Vec<Vec<f64>> = (0..utterances)
        .map(|_| {
            let raw: Vec<f64> = (0..emb_dim).map(|_| rng.sample(StandardNormal)).collect();
            let norm = raw.iter().map(|v| v * v).sum::<f64>().sqrt();
            raw.into_iter().map(|v| v / norm).collect()
        })
        .collect();
    let table = EmbeddingTable::new(ids.clone(), embeddings.clone())?;
    let manifest = EvalManifest::new(
        ids.iter()
            .map(|id| ManifestUtterance {
                id: id.clone(),
                transcript: String::new(),
                phones: vec![],
                embedding_id: id.clone(),
            })
            .collect(),
    )?;

    // Four tap points with increasing semantic content; the last is pure
    // noise again (an over-specialized head that dropped the signal).
    let mut dumps = Vec::new();
    for (label, semantic_gain) in [
        ("layer_04", 0.1),
        ("layer_10", 0.6),
        ("adapter_out", 2.0),
        ("lm_head_tap", 0.0),
    ] {
        let utts: Vec<UtteranceRepresentation> = (0..utterances)
            .map(|i| {
                let mut entries = Vec::with_capacity(frames * layer_dim);
                for _ in 0..frames {
                    for d in 0..layer_dim {
                        let signal = embeddings[i].get(d).copied().unwrap_or(0.0);
                        let noise: f64 = rng.sample(StandardNormal);
                        entries.push(semantic_gain * signal + noise * 0.4);
                    }
                }
                UtteranceRepresentation::new(
                    ids[i].clone(),
                    Matrix::from_row_major(frames, layer_dim, entries).expect("nonempty"),
                )
                .expect("valid utterance")
            })
            .collect();
        dumps.push(RepresentationDump::new(utts, 42_000, label)?);
    }

    let profile = layerwise_alignment(&dumps, &manifest, &table)?;
    print!("{}", profile.to_csv());
    println!("\nas a chartable series: {:?}", profile.to_series().points);
    Ok(())
}
