//! File formats: binary representation dumps (REPD), binary embedding
//! sidecars (EMBD), the JSON evaluation manifest, the phone vocabulary list,
//! and the metric report emitters (CSV, JSON, SVG).
//!
//! # Binary layouts (all integers little-endian)
//!
//! REPD: magic `52 45 50 44`, version byte `01`, u32 utterance count, then
//! per utterance a u32 id byte-length, the UTF-8 id, u32 frame count, u32
//! width, and `frames * width` f32 values in row-major frame order; a
//! trailer holds the u32 checkpoint step, a u32 label byte-length, and the
//! UTF-8 layer label.
//!
//! EMBD: magic `45 4D 42 44`, version byte `01`, u32 entry count, then per
//! entry a u32 id byte-length, the UTF-8 id, u32 width, and `width` f32
//! values.
//!
//! Values are stored as f32 (quantized exactly once, at write time) and
//! computed on as f64. Reading back a file just written and writing it
//! again reproduces the bytes exactly.
//!
//! Readers never panic on malformed input: truncation, bad magic, and
//! version mismatches are format errors that name the byte offset; NaN or
//! infinite payloads are data errors that name the utterance.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::targets::UtteranceRepresentation;

const REPD_MAGIC: [u8; 4] = [0x52, 0x45, 0x50, 0x44];
const EMBD_MAGIC: [u8; 4] = [0x45, 0x4D, 0x42, 0x44];
const FORMAT_VERSION: u8 = 0x01;

/// The exact metrics CSV header.
pub const METRICS_CSV_HEADER: &str = "checkpoint_step,nse,pai_bits,csai_bits,cka_vs_ref";

// ---------------------------------------------------------------------------
// Byte-level cursor with offset-aware errors.
// ---------------------------------------------------------------------------

struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let available = self.bytes.len() - self.pos;
        if available < n {
            return Err(Error::format(format!(
                "truncated while reading {what}: needed {n} bytes at offset {}, only {available} available",
                self.pos
            )));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32_le(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32_le(&mut self, what: &str) -> Result<f32> {
        let b = self.take(4, what)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn utf8(&mut self, n: usize, what: &str) -> Result<String> {
        let offset = self.pos;
        let raw = self.take(n, what)?;
        String::from_utf8(raw.to_vec())
            .map_err(|_| Error::format(format!("{what} at offset {offset} is not valid UTF-8")))
    }

    fn finish(&self, what: &str) -> Result<()> {
        let trailing = self.bytes.len() - self.pos;
        if trailing > 0 {
            return Err(Error::format(format!(
                "unexpected trailing data in {what}: {trailing} bytes at offset {}",
                self.pos
            )));
        }
        Ok(())
    }
}

fn push_u32_le(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_f32_le(buf: &mut Vec<u8>, v: f32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn push_len_prefixed(buf: &mut Vec<u8>, s: &str, what: &str) -> Result<()> {
    let len = u32::try_from(s.len())
        .map_err(|_| Error::usage(format!("{what} is longer than the format allows")))?;
    push_u32_le(buf, len);
    buf.extend_from_slice(s.as_bytes());
    Ok(())
}

// ---------------------------------------------------------------------------
// Representation dumps (REPD).
// ---------------------------------------------------------------------------

/// Every utterance representation dumped at one checkpoint from one layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RepresentationDump {
    utterances: Vec<UtteranceRepresentation>,
    checkpoint_step: u64,
    layer_label: String,
}

impl RepresentationDump {
    /// Wraps a set of utterances; ids must be unique. Empty dumps are legal
    /// (a checkpoint may dump a filtered corpus).
    pub fn new(
        utterances: Vec<UtteranceRepresentation>,
        checkpoint_step: u64,
        layer_label: impl Into<String>,
    ) -> Result<Self> {
        let mut seen = HashMap::with_capacity(utterances.len());
        for (i, u) in utterances.iter().enumerate() {
            if let Some(prev) = seen.insert(u.utterance_id().to_string(), i) {
                return Err(Error::data(format!(
                    "duplicate utterance id '{}' at positions {prev} and {i} in dump",
                    u.utterance_id()
                )));
            }
        }
        Ok(Self {
            utterances,
            checkpoint_step,
            layer_label: layer_label.into(),
        })
    }

    /// The utterances in dump order.
    pub fn utterances(&self) -> &[UtteranceRepresentation] {
        &self.utterances
    }

    /// Pretraining step this dump was taken at.
    pub fn checkpoint_step(&self) -> u64 {
        self.checkpoint_step
    }

    /// Which layer (or tap point) the representations came from.
    pub fn layer_label(&self) -> &str {
        &self.layer_label
    }

    /// Number of utterances.
    pub fn len(&self) -> usize {
        self.utterances.len()
    }

    /// True when the dump holds no utterances.
    pub fn is_empty(&self) -> bool {
        self.utterances.is_empty()
    }

    /// Looks up an utterance by id.
    pub fn get(&self, id: &str) -> Option<&UtteranceRepresentation> {
        self.utterances.iter().find(|u| u.utterance_id() == id)
    }
}

/// Serializes a dump to REPD bytes. Values are quantized to f32 here and
/// nowhere else; anything that would not survive the cast (overflow to
/// infinity) is a data error naming the utterance.
pub fn write_repd(dump: &RepresentationDump) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&REPD_MAGIC);
    buf.push(FORMAT_VERSION);
    let count = u32::try_from(dump.utterances.len())
        .map_err(|_| Error::usage("dump holds more utterances than the format allows"))?;
    push_u32_le(&mut buf, count);
    for u in &dump.utterances {
        push_len_prefixed(&mut buf, u.utterance_id(), "utterance id")?;
        let frames = u.frames();
        push_u32_le(
            &mut buf,
            u32::try_from(frames.rows())
                .map_err(|_| Error::usage("frame count exceeds format range"))?,
        );
        push_u32_le(
            &mut buf,
            u32::try_from(frames.cols())
                .map_err(|_| Error::usage("representation width exceeds format range"))?,
        );
        for v in frames.to_row_major() {
            let q = v as f32;
            if !q.is_finite() {
                return Err(Error::data(format!(
                    "value {v} in utterance '{}' does not fit in f32",
                    u.utterance_id()
                )));
            }
            push_f32_le(&mut buf, q);
        }
    }
    let step = u32::try_from(dump.checkpoint_step)
        .map_err(|_| Error::usage("checkpoint step exceeds the format's u32 range"))?;
    push_u32_le(&mut buf, step);
    push_len_prefixed(&mut buf, &dump.layer_label, "layer label")?;
    Ok(buf)
}

/// Parses REPD bytes back into a dump.
pub fn read_repd(bytes: &[u8]) -> Result<RepresentationDump> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4, "REPD magic")?;
    if magic != REPD_MAGIC {
        return Err(Error::format(format!(
            "bad magic: expected REPD (52 45 50 44), got {:02x} {:02x} {:02x} {:02x}",
            magic[0], magic[1], magic[2], magic[3]
        )));
    }
    let version = r.u8("REPD version")?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "unsupported REPD version {version}, this reader handles version {FORMAT_VERSION}"
        )));
    }
    let count = r.u32_le("utterance count")? as usize;
    let mut utterances = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let id_len = r.u32_le(&format!("utterance {i} id length"))? as usize;
        let id = r.utf8(id_len, &format!("utterance {i} id"))?;
        let frames = r.u32_le(&format!("utterance '{id}' frame count"))? as usize;
        let width = r.u32_le(&format!("utterance '{id}' width"))? as usize;
        if frames == 0 || width == 0 {
            return Err(Error::data(format!(
                "utterance '{id}' declares an empty {frames}x{width} representation"
            )));
        }
        let mut values = Vec::with_capacity(frames * width);
        for _ in 0..frames * width {
            let v = r.f32_le(&format!("utterance '{id}' payload"))?;
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "utterance '{id}' contains non-finite payload value {v}"
                )));
            }
            values.push(v as f64);
        }
        let matrix = Matrix::from_row_major(frames, width, values)?;
        utterances.push(UtteranceRepresentation::new(id, matrix)?);
    }
    let step = r.u32_le("checkpoint step")? as u64;
    let label_len = r.u32_le("layer label length")? as usize;
    let label = r.utf8(label_len, "layer label")?;
    r.finish("REPD stream")?;
    RepresentationDump::new(utterances, step, label)
}

/// Writes a dump to a file.
pub fn write_repd_file(path: &Path, dump: &RepresentationDump) -> Result<()> {
    let bytes = write_repd(dump)?;
    std::fs::write(path, bytes)
        .map_err(|e| Error::from(e).context(&format!("writing '{}'", path.display())))
}

/// Reads a dump from a file.
pub fn read_repd_file(path: &Path) -> Result<RepresentationDump> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::from(e).context(&format!("reading '{}'", path.display())))?;
    read_repd(&bytes).map_err(|e| e.context(&format!("in '{}'", path.display())))
}

// ---------------------------------------------------------------------------
// Embedding sidecars (EMBD).
// ---------------------------------------------------------------------------

/// An ordered table of raw embedding vectors keyed by id.
///
/// The file layer is norm-agnostic: vectors round-trip bit-exactly and the
/// unit-norm policy is applied downstream at semantic-target ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    /// Wraps parallel id and vector lists; ids must be unique and vectors
    /// nonempty.
    pub fn new(ids: Vec<String>, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if ids.len() != vectors.len() {
            return Err(Error::usage(format!(
                "{} ids but {} vectors",
                ids.len(),
                vectors.len()
            )));
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (i, id) in ids.iter().enumerate() {
            if id.is_empty() {
                return Err(Error::data(format!(
                    "embedding id at position {i} is empty"
                )));
            }
            if index.insert(id.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate embedding id '{id}'")));
            }
            if vectors[i].is_empty() {
                return Err(Error::data(format!("embedding '{id}' has zero width")));
            }
            for v in &vectors[i] {
                if !v.is_finite() {
                    return Err(Error::data(format!(
                        "embedding '{id}' contains non-finite value {v}"
                    )));
                }
            }
        }
        Ok(Self {
            ids,
            vectors,
            index,
        })
    }

    /// Number of embeddings.
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    /// True when the table is empty.
    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    /// Ids in file order.
    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    /// Looks up a vector by id.
    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.vectors[i].as_slice())
    }

    /// Iterates (id, vector) pairs in file order.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .zip(&self.vectors)
            .map(|(id, v)| (id.as_str(), v.as_slice()))
    }
}

/// Serializes an embedding table to EMBD bytes (f32 quantization happens
/// here, exactly once).
pub fn write_embd(table: &EmbeddingTable) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&EMBD_MAGIC);
    buf.push(FORMAT_VERSION);
    let count = u32::try_from(table.len())
        .map_err(|_| Error::usage("table holds more embeddings than the format allows"))?;
    push_u32_le(&mut buf, count);
    for (id, vec) in table.iter() {
        push_len_prefixed(&mut buf, id, "embedding id")?;
        push_u32_le(
            &mut buf,
            u32::try_from(vec.len())
                .map_err(|_| Error::usage("embedding width exceeds format range"))?,
        );
        for &v in vec {
            let q = v as f32;
            if !q.is_finite() {
                return Err(Error::data(format!(
                    "value {v} in embedding '{id}' does not fit in f32"
                )));
            }
            push_f32_le(&mut buf, q);
        }
    }
    Ok(buf)
}

/// Parses EMBD bytes back into a table.
pub fn read_embd(bytes: &[u8]) -> Result<EmbeddingTable> {
    let mut r = ByteReader::new(bytes);
    let magic = r.take(4, "EMBD magic")?;
    if magic != EMBD_MAGIC {
        return Err(Error::format(format!(
            "bad magic: expected EMBD (45 4d 42 44), got {:02x} {:02x} {:02x} {:02x}",
            magic[0], magic[1], magic[2], magic[3]
        )));
    }
    let version = r.u8("EMBD version")?;
    if version != FORMAT_VERSION {
        return Err(Error::format(format!(
            "unsupported EMBD version {version}, this reader handles version {FORMAT_VERSION}"
        )));
    }
    let count = r.u32_le("embedding count")? as usize;
    let mut ids = Vec::with_capacity(count.min(1 << 20));
    let mut vectors = Vec::with_capacity(count.min(1 << 20));
    for i in 0..count {
        let id_len = r.u32_le(&format!("embedding {i} id length"))? as usize;
        let id = r.utf8(id_len, &format!("embedding {i} id"))?;
        let width = r.u32_le(&format!("embedding '{id}' width"))? as usize;
        let mut values = Vec::with_capacity(width);
        for _ in 0..width {
            let v = r.f32_le(&format!("embedding '{id}' payload"))?;
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "embedding '{id}' contains non-finite value {v}"
                )));
            }
            values.push(v as f64);
        }
        ids.push(id);
        vectors.push(values);
    }
    r.finish("EMBD stream")?;
    EmbeddingTable::new(ids, vectors)
}

/// Writes an embedding table to a file.
pub fn write_embd_file(path: &Path, table: &EmbeddingTable) -> Result<()> {
    let bytes = write_embd(table)?;
    std::fs::write(path, bytes)
        .map_err(|e| Error::from(e).context(&format!("writing '{}'", path.display())))
}

/// Reads an embedding table from a file.
pub fn read_embd_file(path: &Path) -> Result<EmbeddingTable> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::from(e).context(&format!("reading '{}'", path.display())))?;
    read_embd(&bytes).map_err(|e| e.context(&format!("in '{}'", path.display())))
}

// ---------------------------------------------------------------------------
// Evaluation manifest (JSON).
// ---------------------------------------------------------------------------

/// One utterance's reference data in the evaluation manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestUtterance {
    /// Utterance id, matching the representation dumps.
    pub id: String,
    /// Reference transcript (informational; metrics use phones).
    pub transcript: String,
    /// Reference phone sequence.
    pub phones: Vec<String>,
    /// Key into the embedding sidecar.
    pub embedding_id: String,
}

/// The evaluation manifest: the corpus the metrics are computed over.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalManifest {
    /// Utterances in canonical corpus order.
    pub utterances: Vec<ManifestUtterance>,
}

impl EvalManifest {
    /// Validates and wraps a list of utterances: nonempty, unique ids,
    /// nonempty id and embedding_id fields.
    pub fn new(utterances: Vec<ManifestUtterance>) -> Result<Self> {
        if utterances.is_empty() {
            return Err(Error::data("manifest must list at least one utterance"));
        }
        let mut seen = HashMap::with_capacity(utterances.len());
        for (i, u) in utterances.iter().enumerate() {
            if u.id.is_empty() {
                return Err(Error::data(format!("utterances[{i}].id is empty")));
            }
            if u.embedding_id.is_empty() {
                return Err(Error::data(format!(
                    "utterances[{i}].embedding_id is empty"
                )));
            }
            if let Some(prev) = seen.insert(u.id.clone(), i) {
                return Err(Error::data(format!(
                    "duplicate utterance id '{}' at utterances[{prev}] and utterances[{i}]",
                    u.id
                )));
            }
        }
        Ok(Self { utterances })
    }
}

fn json_str(value: &serde_json::Value, path: &str) -> Result<String> {
    value
        .as_str()
        .map(|s| s.to_string())
        .ok_or_else(|| Error::format(format!("{path}: expected a string")))
}

fn json_field<'v>(
    obj: &'v serde_json::Value,
    key: &str,
    path: &str,
) -> Result<&'v serde_json::Value> {
    match obj.get(key) {
        Some(v) => Ok(v),
        None => Err(Error::format(format!(
            "{path}.{key}: missing required field"
        ))),
    }
}

/// Parses manifest JSON, reporting problems by JSON path (for example
/// `utterances[3].phones`).
pub fn read_manifest(text: &str) -> Result<EvalManifest> {
    let root: serde_json::Value = serde_json::from_str(text)
        .map_err(|e| Error::format(format!("manifest is not valid JSON: {e}")))?;
    let utterances = json_field(&root, "utterances", "manifest")?;
    let arr = utterances
        .as_array()
        .ok_or_else(|| Error::format("manifest.utterances: expected an array"))?;
    let mut out = Vec::with_capacity(arr.len());
    for (i, item) in arr.iter().enumerate() {
        let path = format!("utterances[{i}]");
        if !item.is_object() {
            return Err(Error::format(format!("{path}: expected an object")));
        }
        let id = json_str(json_field(item, "id", &path)?, &format!("{path}.id"))?;
        let transcript = json_str(
            json_field(item, "transcript", &path)?,
            &format!("{path}.transcript"),
        )?;
        let phones_value = json_field(item, "phones", &path)?;
        let phones_arr = phones_value
            .as_array()
            .ok_or_else(|| Error::format(format!("{path}.phones: expected an array of strings")))?;
        let mut phones = Vec::with_capacity(phones_arr.len());
        for (j, p) in phones_arr.iter().enumerate() {
            phones.push(json_str(p, &format!("{path}.phones[{j}]"))?);
        }
        let embedding_id = json_str(
            json_field(item, "embedding_id", &path)?,
            &format!("{path}.embedding_id"),
        )?;
        out.push(ManifestUtterance {
            id,
            transcript,
            phones,
            embedding_id,
        });
    }
    EvalManifest::new(out)
}

/// Serializes a manifest to pretty JSON (deterministic field order).
pub fn write_manifest(manifest: &EvalManifest) -> String {
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serialization cannot fail");
    s.push('\n');
    s
}

/// Reads a manifest from a file.
pub fn read_manifest_file(path: &Path) -> Result<EvalManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::from(e).context(&format!("reading '{}'", path.display())))?;
    read_manifest(&text).map_err(|e| e.context(&format!("in '{}'", path.display())))
}

// ---------------------------------------------------------------------------
// Phone vocabulary (plain text).
// ---------------------------------------------------------------------------

/// Parses a phone vocabulary: one token per line, `#` comment lines and
/// blank lines ignored, duplicates rejected.
pub fn read_phone_vocab(text: &str) -> Result<crate::targets::PhoneVocabulary> {
    let mut tokens = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if line.split_whitespace().count() != 1 {
            return Err(Error::data(format!(
                "vocabulary line {} holds more than one token: '{line}'",
                lineno + 1
            )));
        }
        tokens.push(line.to_string());
    }
    crate::targets::PhoneVocabulary::new(tokens)
}

/// Serializes a phone vocabulary, one token per line.
pub fn write_phone_vocab(vocab: &crate::targets::PhoneVocabulary) -> String {
    let mut out = String::new();
    for t in vocab.tokens() {
        out.push_str(t);
        out.push('\n');
    }
    out
}

/// Reads a phone vocabulary from a file.
pub fn read_phone_vocab_file(path: &Path) -> Result<crate::targets::PhoneVocabulary> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::from(e).context(&format!("reading '{}'", path.display())))?;
    read_phone_vocab(&text).map_err(|e| e.context(&format!("in '{}'", path.display())))
}

// ---------------------------------------------------------------------------
// Corpus assembly.
// ---------------------------------------------------------------------------

/// Joins a dump with the manifest and embedding table into per-utterance
/// corpus items ready for the metric pipeline.
///
/// The manifest defines the corpus: every manifest utterance must resolve
/// to a dumped representation and an embedding, and the dump must not carry
/// extra utterances (which would signal a corpus mismatch).
pub fn assemble_corpus(
    dump: &RepresentationDump,
    manifest: &EvalManifest,
    embeddings: &EmbeddingTable,
) -> Result<Vec<crate::targets::CorpusItem>> {
    if dump.len() != manifest.utterances.len() {
        let extra = dump
            .utterances()
            .iter()
            .find(|u| {
                manifest
                    .utterances
                    .iter()
                    .all(|mu| mu.id != u.utterance_id())
            })
            .map(|u| u.utterance_id().to_string());
        return Err(Error::data(match extra {
            Some(id) => format!(
                "dump holds {} utterances but the manifest lists {}; '{id}' is not in the manifest",
                dump.len(),
                manifest.utterances.len()
            ),
            None => format!(
                "dump holds {} utterances but the manifest lists {}",
                dump.len(),
                manifest.utterances.len()
            ),
        }));
    }
    let mut items = Vec::with_capacity(manifest.utterances.len());
    for mu in &manifest.utterances {
        let rep = dump.get(&mu.id).ok_or_else(|| {
            Error::data(format!(
                "utterance '{}' from the manifest is missing from the dump",
                mu.id
            ))
        })?;
        let raw = embeddings.get(&mu.embedding_id).ok_or_else(|| {
            Error::data(format!(
                "embedding '{}' (utterance '{}') is missing from the embedding table",
                mu.embedding_id, mu.id
            ))
        })?;
        let embedding = crate::targets::SemanticEmbedding::from_raw(raw.to_vec())
            .map_err(|e| e.context(&format!("embedding '{}'", mu.embedding_id)))?;
        items.push(crate::targets::CorpusItem {
            representation: rep.clone(),
            phones: mu.phones.clone(),
            embedding,
        });
    }
    Ok(items)
}

// ---------------------------------------------------------------------------
// Checkpoint file naming.
// ---------------------------------------------------------------------------

/// Parses `step_<decimal>.repd` into the step number; anything else is None.
pub fn parse_checkpoint_filename(name: &str) -> Option<u64> {
    let digits = name.strip_prefix("step_")?.strip_suffix(".repd")?;
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    digits.parse().ok()
}

/// Canonical checkpoint filename for a step.
pub fn checkpoint_filename(step: u64) -> String {
    format!("step_{step}.repd")
}

// ---------------------------------------------------------------------------
// Metric reports (CSV / JSON).
// ---------------------------------------------------------------------------

/// One report row: the metric triple for a checkpoint plus the optional
/// CKA-to-reference column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    /// Pretraining step.
    pub checkpoint_step: u64,
    /// Corpus-mean normalized spectral entropy.
    pub nse: f64,
    /// Phonetic-alignment information in bits.
    pub pai_bits: f64,
    /// Conditional semantic-alignment information in bits.
    pub csai_bits: f64,
    /// Average CKA against the monitoring reference, when one exists.
    pub cka_vs_ref: Option<f64>,
}

impl MetricRow {
    /// Builds a row from a metric triple plus the optional CKA column.
    pub fn from_triple(triple: &crate::entropy::MetricTriple, cka_vs_ref: Option<f64>) -> Self {
        Self {
            checkpoint_step: triple.checkpoint_step,
            nse: triple.nse,
            pai_bits: triple.pai_bits,
            csai_bits: triple.csai_bits,
            cka_vs_ref,
        }
    }
}

/// An ordered collection of metric rows with strictly increasing steps.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    rows: Vec<MetricRow>,
}

impl MetricReport {
    /// Validates ordering: steps must be strictly increasing (duplicates
    /// are a data error, since merging reports must not silently collapse
    /// checkpoints). An empty report is legal.
    pub fn new(rows: Vec<MetricRow>) -> Result<Self> {
        for w in rows.windows(2) {
            if w[1].checkpoint_step <= w[0].checkpoint_step {
                return Err(Error::data(format!(
                    "checkpoint steps must be strictly increasing: {} then {}",
                    w[0].checkpoint_step, w[1].checkpoint_step
                )));
            }
        }
        Ok(Self { rows })
    }

    /// The rows in step order.
    pub fn rows(&self) -> &[MetricRow] {
        &self.rows
    }

    /// Number of rows.
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    /// True when the report has no rows.
    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Merges several reports into one, re-sorting by step; duplicate steps
    /// across inputs are a data error.
    pub fn merge(reports: &[MetricReport]) -> Result<MetricReport> {
        let mut rows: Vec<MetricRow> = reports.iter().flat_map(|r| r.rows.clone()).collect();
        rows.sort_by_key(|r| r.checkpoint_step);
        MetricReport::new(rows)
    }
}

fn fmt_real(v: f64) -> String {
    format!("{v:.6}")
}

/// Renders the report as CSV with a fixed header and six-decimal reals.
/// A missing CKA column renders as an empty field.
pub fn write_metrics_csv(report: &MetricReport) -> String {
    let mut out = String::from(METRICS_CSV_HEADER);
    out.push('\n');
    for row in report.rows() {
        out.push_str(&row.checkpoint_step.to_string());
        out.push(',');
        out.push_str(&fmt_real(row.nse));
        out.push(',');
        out.push_str(&fmt_real(row.pai_bits));
        out.push(',');
        out.push_str(&fmt_real(row.csai_bits));
        out.push(',');
        if let Some(c) = row.cka_vs_ref {
            out.push_str(&fmt_real(c));
        }
        out.push('\n');
    }
    out
}

/// Parses a metrics CSV produced by [`write_metrics_csv`].
pub fn read_metrics_csv(text: &str) -> Result<MetricReport> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == METRICS_CSV_HEADER => {}
        Some(h) => {
            return Err(Error::format(format!(
                "metrics CSV header mismatch: expected '{METRICS_CSV_HEADER}', got '{h}'"
            )))
        }
        None => {
            return Err(Error::format(
                "metrics CSV is empty, expected a header line",
            ))
        }
    }
    let mut rows = Vec::new();
    for (i, raw) in lines.enumerate() {
        let lineno = i + 2;
        let line = raw.trim_end();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::format(format!(
                "metrics CSV line {lineno}: expected 5 fields, got {}",
                fields.len()
            )));
        }
        let step: u64 = fields[0].parse().map_err(|_| {
            Error::format(format!(
                "metrics CSV line {lineno}: bad checkpoint_step '{}'",
                fields[0]
            ))
        })?;
        let parse_real = |v: &str, name: &str| -> Result<f64> {
            v.parse::<f64>()
                .map_err(|_| Error::format(format!("metrics CSV line {lineno}: bad {name} '{v}'")))
        };
        let nse = parse_real(fields[1], "nse")?;
        let pai_bits = parse_real(fields[2], "pai_bits")?;
        let csai_bits = parse_real(fields[3], "csai_bits")?;
        let cka_vs_ref = if fields[4].is_empty() {
            None
        } else {
            Some(parse_real(fields[4], "cka_vs_ref")?)
        };
        rows.push(MetricRow {
            checkpoint_step: step,
            nse,
            pai_bits,
            csai_bits,
            cka_vs_ref,
        });
    }
    MetricReport::new(rows)
}

/// Reads a metrics CSV from a file.
pub fn read_metrics_csv_file(path: &Path) -> Result<MetricReport> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::from(e).context(&format!("reading '{}'", path.display())))?;
    read_metrics_csv(&text).map_err(|e| e.context(&format!("in '{}'", path.display())))
}

/// Renders the report as pretty JSON: an array of row objects with the same
/// columns as the CSV, full f64 precision, `null` for a missing CKA.
pub fn write_metrics_json(report: &MetricReport) -> String {
    let mut s =
        serde_json::to_string_pretty(report.rows()).expect("report serialization cannot fail");
    s.push('\n');
    s
}

// ---------------------------------------------------------------------------
// SVG rendering.
// ---------------------------------------------------------------------------

/// Which report columns to plot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    /// Corpus-mean normalized spectral entropy.
    Nse,
    /// Phonetic-alignment information (bits).
    PaiBits,
    /// Conditional semantic-alignment information (bits).
    CsaiBits,
    /// Average CKA against the monitoring reference.
    CkaVsRef,
}

impl SeriesKind {
    /// The CSV column name for this series.
    pub fn name(self) -> &'static str {
        match self {
            SeriesKind::Nse => "nse",
            SeriesKind::PaiBits => "pai_bits",
            SeriesKind::CsaiBits => "csai_bits",
            SeriesKind::CkaVsRef => "cka_vs_ref",
        }
    }

    /// All series, in canonical plot order.
    pub fn all() -> [SeriesKind; 4] {
        [
            SeriesKind::Nse,
            SeriesKind::PaiBits,
            SeriesKind::CsaiBits,
            SeriesKind::CkaVsRef,
        ]
    }
}

impl std::str::FromStr for SeriesKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nse" => Ok(SeriesKind::Nse),
            "pai_bits" => Ok(SeriesKind::PaiBits),
            "csai_bits" => Ok(SeriesKind::CsaiBits),
            "cka_vs_ref" => Ok(SeriesKind::CkaVsRef),
            other => Err(Error::usage(format!(
                "unknown series '{other}': expected nse, pai_bits, csai_bits, or cka_vs_ref"
            ))),
        }
    }
}

/// One named line on a chart.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesSpec {
    /// Legend label.
    pub name: String,
    /// (x, y) points in plot order; must be finite.
    pub points: Vec<(f64, f64)>,
}

const SVG_WIDTH: f64 = 800.0;
const SVG_HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 170.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 50.0;
const SERIES_COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
];

fn fmt_coord(v: f64) -> String {
    format!("{v:.2}")
}

fn fmt_tick(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn data_range(values: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut any = false;
    for v in values {
        any = true;
        if v < lo {
            lo = v;
        }
        if v > hi {
            hi = v;
        }
    }
    if any {
        Some((lo, hi))
    } else {
        None
    }
}

fn pad_range(range: Option<(f64, f64)>, frac: f64) -> (f64, f64) {
    match range {
        None => (0.0, 1.0),
        Some((lo, hi)) => {
            let span = hi - lo;
            if span <= 1e-12 {
                (lo - 1.0, hi + 1.0)
            } else {
                (lo - frac * span, hi + frac * span)
            }
        }
    }
}

/// Renders a fixed-layout 800x480 line chart as standalone SVG 1.1 markup.
///
/// The output is a pure function of the inputs: same series, same bytes.
/// Multi-point series draw a polyline plus point markers; one-point series
/// draw a lone marker; empty series contribute only a legend entry.
pub fn render_line_chart(series: &[SeriesSpec], x_label: &str, y_label: &str) -> String {
    let plot_w = SVG_WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = SVG_HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let (x_lo, x_hi) = pad_range(
        data_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.0))),
        0.0,
    );
    let (y_lo, y_hi) = pad_range(
        data_range(series.iter().flat_map(|s| s.points.iter().map(|p| p.1))),
        0.05,
    );
    let to_px = |x: f64, y: f64| -> (f64, f64) {
        let px = MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
        let py = MARGIN_TOP + plot_h - (y - y_lo) / (y_hi - y_lo) * plot_h;
        (px, py)
    };

    let mut svg = String::new();
    svg.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"{SVG_WIDTH}\" height=\"{SVG_HEIGHT}\" viewBox=\"0 0 {SVG_WIDTH} {SVG_HEIGHT}\">\n"
    ));
    svg.push_str("  <rect x=\"0\" y=\"0\" width=\"800\" height=\"480\" fill=\"#ffffff\"/>\n");

    // Axes.
    let x0 = MARGIN_LEFT;
    let x1 = MARGIN_LEFT + plot_w;
    let y0 = MARGIN_TOP + plot_h;
    let y1 = MARGIN_TOP;
    svg.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        fmt_coord(x0),
        fmt_coord(y0),
        fmt_coord(x1),
        fmt_coord(y0)
    ));
    svg.push_str(&format!(
        "  <line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
        fmt_coord(x0),
        fmt_coord(y0),
        fmt_coord(x0),
        fmt_coord(y1)
    ));

    // Ticks: five per axis at quarter fractions.
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_lo + f * (x_hi - x_lo);
        let (px, _) = to_px(xv, y_lo);
        svg.push_str(&format!(
            "  <line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
            fmt_coord(px),
            fmt_coord(y0),
            fmt_coord(y0 + 5.0)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"middle\" fill=\"#333333\">{}</text>\n",
            fmt_coord(px),
            fmt_coord(y0 + 18.0),
            fmt_tick(xv)
        ));
        let yv = y_lo + f * (y_hi - y_lo);
        let (_, py) = to_px(x_lo, yv);
        svg.push_str(&format!(
            "  <line x1=\"{1}\" y1=\"{0}\" x2=\"{2}\" y2=\"{0}\" stroke=\"#333333\" stroke-width=\"1\"/>\n",
            fmt_coord(py),
            fmt_coord(x0 - 5.0),
            fmt_coord(x0)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"11\" text-anchor=\"end\" fill=\"#333333\">{}</text>\n",
            fmt_coord(x0 - 8.0),
            fmt_coord(py + 4.0),
            fmt_tick(yv)
        ));
    }

    // Axis labels.
    svg.push_str(&format!(
        "  <text x=\"{}\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333333\">{}</text>\n",
        fmt_coord(MARGIN_LEFT + plot_w / 2.0),
        fmt_coord(SVG_HEIGHT - 12.0),
        xml_escape(x_label)
    ));
    svg.push_str(&format!(
        "  <text x=\"18\" y=\"{}\" font-size=\"12\" text-anchor=\"middle\" fill=\"#333333\" transform=\"rotate(-90 18 {})\">{}</text>\n",
        fmt_coord(MARGIN_TOP + plot_h / 2.0),
        fmt_coord(MARGIN_TOP + plot_h / 2.0),
        xml_escape(y_label)
    ));

    // Series geometry.
    for (si, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[si % SERIES_COLORS.len()];
        if s.points.len() >= 2 {
            let mut pts = String::new();
            for (i, &(x, y)) in s.points.iter().enumerate() {
                if i > 0 {
                    pts.push(' ');
                }
                let (px, py) = to_px(x, y);
                pts.push_str(&format!("{},{}", fmt_coord(px), fmt_coord(py)));
            }
            svg.push_str(&format!(
                "  <polyline points=\"{pts}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>\n"
            ));
        }
        for &(x, y) in &s.points {
            let (px, py) = to_px(x, y);
            svg.push_str(&format!(
                "  <circle cx=\"{}\" cy=\"{}\" r=\"3\" fill=\"{color}\"/>\n",
                fmt_coord(px),
                fmt_coord(py)
            ));
        }
    }

    // Legend.
    let legend_x = SVG_WIDTH - MARGIN_RIGHT + 16.0;
    for (si, s) in series.iter().enumerate() {
        let color = SERIES_COLORS[si % SERIES_COLORS.len()];
        let ly = MARGIN_TOP + 12.0 + si as f64 * 20.0;
        svg.push_str(&format!(
            "  <rect x=\"{}\" y=\"{}\" width=\"12\" height=\"12\" fill=\"{color}\"/>\n",
            fmt_coord(legend_x),
            fmt_coord(ly - 10.0)
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\" font-size=\"12\" fill=\"#333333\">{}</text>\n",
            fmt_coord(legend_x + 18.0),
            fmt_coord(ly),
            xml_escape(&s.name)
        ));
    }

    svg.push_str("</svg>\n");
    svg
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

/// Renders selected report columns as a line chart over checkpoint steps.
///
/// Rows lacking a value for a series (a missing CKA column) are skipped for
/// that series only.
pub fn render_svg_lines(report: &MetricReport, series: &[SeriesKind]) -> Result<String> {
    if series.is_empty() {
        return Err(Error::usage("select at least one series to plot"));
    }
    let mut specs = Vec::with_capacity(series.len());
    for kind in series {
        let mut points = Vec::new();
        for row in report.rows() {
            let y = match kind {
                SeriesKind::Nse => Some(row.nse),
                SeriesKind::PaiBits => Some(row.pai_bits),
                SeriesKind::CsaiBits => Some(row.csai_bits),
                SeriesKind::CkaVsRef => row.cka_vs_ref,
            };
            if let Some(y) = y {
                points.push((row.checkpoint_step as f64, y));
            }
        }
        specs.push(SeriesSpec {
            name: kind.name().to_string(),
            points,
        });
    }
    Ok(render_line_chart(&specs, "checkpoint step", "value"))
}
