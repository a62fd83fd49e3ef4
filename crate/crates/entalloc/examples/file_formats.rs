//! The on-disk formats: representation dumps (REPD), embedding tables
//! (EMBD), the JSON evaluation manifest, and the plain-text phone vocabulary.
//!
//! Dumps and tables are little-endian binary with f32 payloads; writing
//! quantizes exactly once, so a write-read-write cycle is bit-identical.
//! Truncated or trailing bytes are rejected with the offending byte offset.
//!
//! Run with: `cargo run --example file_formats`

use entalloc::dataio::{
    read_embd, read_manifest, read_phone_vocab, read_repd, write_embd, write_manifest,
    write_phone_vocab, write_repd, EmbeddingTable, EvalManifest, ManifestUtterance,
    RepresentationDump,
};
use entalloc::numerics::Matrix;
use entalloc::targets::{PhoneVocabulary, UtteranceRepresentation};

fn main() -> entalloc::Result<()> {
    // A two-utterance dump.
    let dump = RepresentationDump::new(
        vec![
            UtteranceRepresentation::new(
                "utt_a",
                Matrix::from_row_major(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0])?,
            )?,
            UtteranceRepresentation::new(
                "utt_b",
                Matrix::from_row_major(1, 3, vec![0.25, -0.5, 0.75])?,
            )?,
        ],
        120_000,
        "encoder_out",
    )?;
    let bytes = write_repd(&dump)?;
    println!(
        "REPD: {} bytes for 2 utterances at step 120000",
        bytes.len()
    );
    println!("  magic + version: {:02x?}", &bytes[..5]);
    let back = read_repd(&bytes)?;
    println!("  round trip equal: {}", back == dump);
    println!("  re-serialized identical: {}", write_repd(&back)? == bytes);

    // Truncation is loud and names where the data ran out.
    let err = read_repd(&bytes[..bytes.len() - 4]).unwrap_err();
    println!("  truncated read -> {err}");

    // An embedding table. The payload is f32 on disk, so values that are not
    // exactly f32-representable come back quantized; feeding the table
    // pre-quantized values makes the round trip an equality.
    let q = |v: f64| (v as f32) as f64;
    let table = EmbeddingTable::new(
        vec!["emb_a".into(), "emb_b".into()],
        vec![vec![q(0.6), q(0.8)], vec![1.0, 0.0]],
    )?;
    let bytes = write_embd(&table)?;
    let back = read_embd(&bytes)?;
    println!("\nEMBD: {} bytes for 2 embeddings", bytes.len());
    println!("  round trip equal: {}", back == table);
    println!("  re-serialized identical: {}", write_embd(&back)? == bytes);

    // The manifest ties utterances to transcripts, phones, and embeddings.
    let manifest = EvalManifest::new(vec![
        ManifestUtterance {
            id: "utt_a".into(),
            transcript: "hello there".into(),
            phones: vec!["HH".into(), "EH".into(), "L".into(), "OW".into()],
            embedding_id: "emb_a".into(),
        },
        ManifestUtterance {
            id: "utt_b".into(),
            transcript: "again".into(),
            phones: vec!["AH".into(), "G".into(), "EH".into(), "N".into()],
            embedding_id: "emb_b".into(),
        },
    ])?;
    let text = write_manifest(&manifest);
    println!("\nmanifest JSON ({} bytes):\n{text}", text.len());
    println!(
        "manifest round trip equal: {}",
        read_manifest(&text)? == manifest
    );

    // The phone vocabulary is one token per line; comments and blanks skip.
    let vocab = PhoneVocabulary::new(
        ["HH", "EH", "L", "OW", "AH", "G", "N"]
            .iter()
            .map(|s| s.to_string())
            .collect(),
    )?;
    let text = write_phone_vocab(&vocab);
    let parsed = read_phone_vocab(&format!("# comment line\n\n{text}"))?;
    println!(
        "vocab round trip equal: {}",
        parsed.tokens() == vocab.tokens()
    );
    Ok(())
}
