//! Deterministic synthetic drifting-corpus generator behind the `synth`
//! command: checkpoint series of representation dumps plus the matching
//! manifest, embedding table, and phone vocabulary.
//!
//! # Generative model
//!
//! Each utterance draws a phone sequence from the vocabulary. Its base
//! signal is a linear map of the normalized phone counts, plus a semantic
//! leak term (a linear map of the utterance's embedding) and scaled
//! isotropic noise; every frame is that signal plus per-frame jitter.
//! Embeddings are a linear map of phone counts plus noise, unit-normalized.
//!
//! Inter-checkpoint drift is a partial orthogonal rotation per step: the
//! checkpoint transform evolves as `M_j = M_{j-1} ((1-m) I + m Q)`,
//! renormalized to Frobenius norm `sqrt(d)`, where `Q` is one random
//! orthogonal drift direction fixed per run and `m` grows with the step gap
//! (`m = 1 - (1-rate)^gap`). A single fixed direction makes the
//! accumulated anisotropy — and hence the CKA decline — monotone across
//! checkpoints. Scheduled "jolts" mix in an extra rotation with a fresh
//! direction at chosen checkpoints, placing CKA threshold crossings at
//! exact steps.
//!
//! Noise draws happen (in a fixed order) regardless of their scale, so two
//! specs differing only in `noise_scale` share every phone sequence,
//! embedding, and jitter draw: sweeps are paired by common random numbers.
//!
//! All emitted values are quantized to f32 at generation time, so writing a
//! corpus to disk and reading it back is lossless.

use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::dataio::{
    checkpoint_filename, write_embd_file, write_manifest, write_phone_vocab, write_repd_file,
    EmbeddingTable, EvalManifest, ManifestUtterance, RepresentationDump,
};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::targets::{PhoneVocabulary, UtteranceRepresentation};

/// Parameters of the synthetic drifting corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftSpec {
    /// Representation width (the encoder output dimension).
    pub feature_dim: usize,
    /// Minimum frames per utterance.
    pub frames_min: usize,
    /// Maximum frames per utterance (inclusive).
    pub frames_max: usize,
    /// Number of utterances in the corpus.
    pub utterances: usize,
    /// Per-step rotation-mixing coefficient in [0, 1]; 0 freezes the
    /// representation across checkpoints.
    pub drift_rate: f64,
    /// Scale of the per-utterance isotropic noise added to the base signal.
    pub noise_scale: f64,
    /// Scale of the per-frame jitter; 0 makes every utterance rank one.
    pub frame_jitter: f64,
    /// How strongly the utterance's semantic embedding leaks into its
    /// representation (drives conditional semantic information).
    pub semantic_leak: f64,
    /// Phone vocabulary size.
    pub vocab_size: usize,
    /// Minimum phones per utterance.
    pub phones_min: usize,
    /// Maximum phones per utterance (inclusive).
    pub phones_max: usize,
    /// Semantic embedding width.
    pub embedding_dim: usize,
    /// RNG seed; fixed seed means a fully deterministic corpus.
    pub seed: u64,
    /// Strictly increasing pretraining steps to dump checkpoints at.
    pub checkpoint_steps: Vec<u64>,
    /// Extra rotation mixing applied at specific checkpoint steps, as
    /// (step, amount) pairs; each step must be one of `checkpoint_steps`.
    pub jolts: Vec<(u64, f64)>,
}

impl DriftSpec {
    /// Checks every invariant, returning a usage error naming the offender.
    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 {
            return Err(Error::usage("feature_dim must be at least 1"));
        }
        if self.frames_min == 0 || self.frames_min > self.frames_max {
            return Err(Error::usage(format!(
                "frame range [{}, {}] is invalid",
                self.frames_min, self.frames_max
            )));
        }
        if self.utterances == 0 {
            return Err(Error::usage("utterances must be at least 1"));
        }
        if !self.drift_rate.is_finite() || !(0.0..=1.0).contains(&self.drift_rate) {
            return Err(Error::usage(format!(
                "drift_rate must lie in [0, 1], got {}",
                self.drift_rate
            )));
        }
        for (name, v) in [
            ("noise_scale", self.noise_scale),
            ("frame_jitter", self.frame_jitter),
            ("semantic_leak", self.semantic_leak),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::usage(format!(
                    "{name} must be finite and nonnegative, got {v}"
                )));
            }
        }
        if self.vocab_size == 0 {
            return Err(Error::usage("vocab_size must be at least 1"));
        }
        if self.phones_min == 0 || self.phones_min > self.phones_max {
            return Err(Error::usage(format!(
                "phone-count range [{}, {}] is invalid",
                self.phones_min, self.phones_max
            )));
        }
        if self.embedding_dim == 0 {
            return Err(Error::usage("embedding_dim must be at least 1"));
        }
        if self.checkpoint_steps.is_empty() {
            return Err(Error::usage("checkpoint_steps must not be empty"));
        }
        for w in self.checkpoint_steps.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::usage(format!(
                    "checkpoint_steps must be strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        for &s in &self.checkpoint_steps {
            if s > u64::from(u32::MAX) {
                return Err(Error::usage(format!(
                    "checkpoint step {s} exceeds the dump format's range"
                )));
            }
        }
        for &(step, amount) in &self.jolts {
            if !self.checkpoint_steps.contains(&step) {
                return Err(Error::usage(format!(
                    "jolt step {step} is not one of checkpoint_steps"
                )));
            }
            if !amount.is_finite() || !(0.0..=1.0).contains(&amount) {
                return Err(Error::usage(format!(
                    "jolt amount at step {step} must lie in [0, 1], got {amount}"
                )));
            }
        }
        Ok(())
    }
}

/// Everything the generator produces for one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    /// One dump per checkpoint step, in step order.
    pub checkpoints: Vec<RepresentationDump>,
    /// The evaluation manifest (ids, transcripts, phones, embedding keys).
    pub manifest: EvalManifest,
    /// Raw (unit-normalized, f32-quantized) semantic embeddings.
    pub embeddings: EmbeddingTable,
    /// The phone vocabulary the sequences were drawn from.
    pub vocab: PhoneVocabulary,
}

impl SyntheticCorpus {
    /// Writes the corpus to a directory: `step_<step>.repd` per checkpoint
    /// plus `manifest.json`, `embeddings.embd`, and `vocab.txt`.
    pub fn write_to_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)
            .map_err(|e| Error::from(e).context(&format!("creating '{}'", dir.display())))?;
        for dump in &self.checkpoints {
            write_repd_file(&dir.join(checkpoint_filename(dump.checkpoint_step())), dump)?;
        }
        std::fs::write(dir.join("manifest.json"), write_manifest(&self.manifest))
            .map_err(|e| Error::from(e).context("writing manifest.json"))?;
        write_embd_file(&dir.join("embeddings.embd"), &self.embeddings)?;
        std::fs::write(dir.join("vocab.txt"), write_phone_vocab(&self.vocab))
            .map_err(|e| Error::from(e).context("writing vocab.txt"))?;
        Ok(())
    }
}

fn quantize(v: f64) -> f64 {
    (v as f32) as f64
}

fn standard_normal_matrix(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(rand_distr::StandardNormal))
}

fn random_orthogonal(rng: &mut ChaCha12Rng, dim: usize) -> DMatrix<f64> {
    standard_normal_matrix(rng, dim, dim).qr().q()
}

/// `(1 - m) I + m Q`, the partial rotation toward direction `Q`.
fn partial_rotation(q: &DMatrix<f64>, m: f64) -> DMatrix<f64> {
    let dim = q.nrows();
    DMatrix::identity(dim, dim) * (1.0 - m) + q * m
}

fn renormalize_frobenius(m: &mut DMatrix<f64>) {
    let target = (m.nrows() as f64).sqrt();
    let norm = m.norm();
    if norm > 0.0 {
        *m *= target / norm;
    }
}

/// Generates the corpus described by `spec`. Identical specs give
/// identical corpora, bit for bit.
pub fn generate(spec: &DriftSpec) -> Result<SyntheticCorpus> {
    spec.validate()?;
    let d = spec.feature_dim;
    let v = spec.vocab_size;
    let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);

    // Fixed linear maps: phone bag -> signal, embedding -> signal leak,
    // phone bag -> embedding.
    let phonetic_map = standard_normal_matrix(&mut rng, d, v);
    let leak_map = standard_normal_matrix(&mut rng, d, spec.embedding_dim);
    let embedding_map = standard_normal_matrix(&mut rng, spec.embedding_dim, v);

    let vocab_tokens: Vec<String> = (0..v).map(|i| format!("ph_{i:03}")).collect();
    let vocab = PhoneVocabulary::new(vocab_tokens.clone())?;

    // Per-utterance draws, in a fixed order independent of every scale
    // parameter (only the multipliers change across sweeps).
    struct UtteranceDraw {
        phones: Vec<usize>,
        embedding: Vec<f64>,
        base_frames: DMatrix<f64>,
    }
    let mut draws = Vec::with_capacity(spec.utterances);
    for _ in 0..spec.utterances {
        let frame_count = rng.random_range(spec.frames_min..=spec.frames_max);
        let phone_count = rng.random_range(spec.phones_min..=spec.phones_max);
        let phones: Vec<usize> = (0..phone_count).map(|_| rng.random_range(0..v)).collect();
        let mut bag = vec![0.0f64; v];
        for &p in &phones {
            bag[p] += 1.0;
        }
        for b in &mut bag {
            *b /= phone_count as f64;
        }
        let bag = DMatrix::from_column_slice(v, 1, &bag);

        let sem_noise = standard_normal_matrix(&mut rng, spec.embedding_dim, 1);
        let mut embedding = &embedding_map * &bag + sem_noise * 0.25;
        let norm = embedding.norm();
        if norm < 1e-9 {
            embedding[(0, 0)] = 1.0;
        } else {
            embedding /= norm;
        }

        let utt_noise = standard_normal_matrix(&mut rng, d, 1);
        let signal = &phonetic_map * &bag
            + &leak_map * &embedding * spec.semantic_leak
            + utt_noise * spec.noise_scale;

        let jitter = standard_normal_matrix(&mut rng, frame_count, d);
        let mut base_frames = DMatrix::zeros(frame_count, d);
        for r in 0..frame_count {
            for c in 0..d {
                base_frames[(r, c)] = signal[(c, 0)] + spec.frame_jitter * jitter[(r, c)];
            }
        }
        draws.push(UtteranceDraw {
            phones,
            embedding: embedding.column(0).iter().copied().collect(),
            base_frames,
        });
    }

    // Drift directions: one fixed direction for the smooth per-step drift,
    // plus a fresh direction per jolt (in checkpoint order).
    let drift_direction = random_orthogonal(&mut rng, d);
    let mut jolts_by_step: Vec<(u64, f64, DMatrix<f64>)> = Vec::new();
    let mut sorted_jolts = spec.jolts.clone();
    sorted_jolts.sort_by_key(|&(s, _)| s);
    for (step, amount) in sorted_jolts {
        let q = random_orthogonal(&mut rng, d);
        jolts_by_step.push((step, amount, q));
    }

    // Checkpoint transforms. `None` means the exact identity (no transform
    // applied), keeping a drift-free corpus bit-identical across steps.
    let mut transforms: Vec<Option<DMatrix<f64>>> = Vec::with_capacity(spec.checkpoint_steps.len());
    let mut current: Option<DMatrix<f64>> = None;
    let mut prev_step: Option<u64> = None;
    for &step in &spec.checkpoint_steps {
        let mut m_base = 0.0;
        if let Some(prev) = prev_step {
            let gap = (step - prev) as f64;
            if spec.drift_rate > 0.0 {
                m_base = 1.0 - (1.0 - spec.drift_rate).powf(gap);
            }
        }
        if m_base > 0.0 {
            let step_mix = partial_rotation(&drift_direction, m_base);
            let mut next = match &current {
                Some(m) => m * &step_mix,
                None => step_mix,
            };
            renormalize_frobenius(&mut next);
            current = Some(next);
        }
        if let Some((_, amount, q)) = jolts_by_step
            .iter()
            .find(|&&(s, amount, _)| s == step && amount > 0.0)
            .map(|(s, a, q)| (*s, *a, q))
        {
            let jolt_mix = partial_rotation(q, amount);
            let mut next = match &current {
                Some(m) => m * &jolt_mix,
                None => jolt_mix,
            };
            renormalize_frobenius(&mut next);
            current = Some(next);
        }
        transforms.push(current.clone());
        prev_step = Some(step);
    }

    // Materialize the dumps, quantizing exactly once.
    let mut checkpoints = Vec::with_capacity(spec.checkpoint_steps.len());
    for (j, &step) in spec.checkpoint_steps.iter().enumerate() {
        let mut utterances = Vec::with_capacity(spec.utterances);
        for (i, draw) in draws.iter().enumerate() {
            let frames = match &transforms[j] {
                Some(m) => &draw.base_frames * m.transpose(),
                None => draw.base_frames.clone(),
            };
            let quantized: Vec<f64> = frames.transpose().iter().copied().map(quantize).collect();
            let matrix = Matrix::from_row_major(frames.nrows(), frames.ncols(), quantized)?;
            utterances.push(UtteranceRepresentation::new(format!("utt_{i:04}"), matrix)?);
        }
        checkpoints.push(RepresentationDump::new(utterances, step, "encoder_out")?);
    }

    let mut manifest_rows = Vec::with_capacity(spec.utterances);
    let mut emb_ids = Vec::with_capacity(spec.utterances);
    let mut emb_vecs = Vec::with_capacity(spec.utterances);
    for (i, draw) in draws.iter().enumerate() {
        let phones: Vec<String> = draw
            .phones
            .iter()
            .map(|&p| vocab_tokens[p].clone())
            .collect();
        let embedding_id = format!("emb_{i:04}");
        manifest_rows.push(ManifestUtterance {
            id: format!("utt_{i:04}"),
            transcript: phones.join(" "),
            phones,
            embedding_id: embedding_id.clone(),
        });
        emb_ids.push(embedding_id);
        emb_vecs.push(draw.embedding.iter().copied().map(quantize).collect());
    }
    let manifest = EvalManifest::new(manifest_rows)?;
    let embeddings = EmbeddingTable::new(emb_ids, emb_vecs)?;

    Ok(SyntheticCorpus {
        checkpoints,
        manifest,
        embeddings,
        vocab,
    })
}
