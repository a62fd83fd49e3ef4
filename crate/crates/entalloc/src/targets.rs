//! Construction of the joint dataset behind the information metrics: pooled
//! encoder summaries, phonetic bag-of-phones targets, and semantic
//! embedding targets, each projected to a common width and standardized.
//!
//! # Pipeline freezing
//!
//! The phonetic and semantic targets depend only on the evaluation corpus,
//! never on model weights, so [`TargetContext::fit`] fits their PCA and
//! standardization exactly once. Per checkpoint, only the summary pipeline
//! is refit (the encoder changed, its pooled statistics changed), and the
//! frozen target coordinates are reused. This keeps metric movements across
//! checkpoints attributable to the encoder rather than to target drift.
//!
//! # Shapes
//!
//! With `n` utterances and projection width `k`, the joint sample matrix is
//! `n x 3k`, partitioned `[summary | phonetic | semantic]` by a symmetric
//! [`BlockMap`]. Estimating a `3k x 3k` covariance sanely needs `n > 3k`;
//! anything smaller is rejected loudly.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::entropy::{nse, BlockMap, MetricTriple, RegularizedJointCovariance};
use crate::error::{Error, Result};
use crate::numerics::{apply_pca, apply_standardizer, fit_pca, fit_standardizer, Matrix};

/// Largest deviation from unit norm an embedding may have and still be
/// accepted (it is re-normalized on ingestion). Anything worse is rejected.
const EMBEDDING_NORM_TOLERANCE: f64 = 1e-3;

/// One utterance's dumped encoder representation: a frames-by-dims matrix
/// of the valid (non-padding) frames, tagged with its utterance id.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRepresentation {
    utterance_id: String,
    frames: Matrix,
}

impl UtteranceRepresentation {
    /// Wraps a frame matrix. The id must be nonempty.
    pub fn new(utterance_id: impl Into<String>, frames: Matrix) -> Result<Self> {
        let utterance_id = utterance_id.into();
        if utterance_id.is_empty() {
            return Err(Error::data("utterance id must not be empty"));
        }
        Ok(Self {
            utterance_id,
            frames,
        })
    }

    /// The utterance id.
    pub fn utterance_id(&self) -> &str {
        &self.utterance_id
    }

    /// The frame matrix (frames x dims).
    pub fn frames(&self) -> &Matrix {
        &self.frames
    }

    /// Number of valid frames.
    pub fn frame_count(&self) -> usize {
        self.frames.rows()
    }

    /// Representation width (encoder hidden size after any adaptor).
    pub fn dim(&self) -> usize {
        self.frames.cols()
    }
}

/// Fixed-length utterance summary: per-dimension temporal mean followed by
/// per-dimension temporal standard deviation, length `2 * dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledSummary {
    values: Vec<f64>,
}

impl PooledSummary {
    /// The pooled values, means first then standard deviations.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Summary length (`2 * dim`).
    pub fn len(&self) -> usize {
        self.values.len()
    }

    /// Never true: summaries always carry at least two values.
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Pools an utterance over time: concatenated per-dimension mean and
/// population standard deviation (divisor `L`). A single-frame utterance
/// has exactly zero standard deviation in every dimension.
pub fn pool_mean_std(rep: &UtteranceRepresentation) -> PooledSummary {
    let frames = rep.frames();
    let l = frames.rows();
    let d = frames.cols();
    let mut values = vec![0.0f64; 2 * d];
    for r in 0..l {
        for (c, v) in values[..d].iter_mut().enumerate() {
            *v += frames.get(r, c);
        }
    }
    for v in &mut values[..d] {
        *v /= l as f64;
    }
    if l > 1 {
        for r in 0..l {
            for c in 0..d {
                let delta = frames.get(r, c) - values[c];
                values[d + c] += delta * delta;
            }
        }
        for c in 0..d {
            values[d + c] = (values[d + c] / l as f64).sqrt();
        }
    }
    PooledSummary { values }
}

/// An ordered phone vocabulary with token-to-index lookup.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneVocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl PhoneVocabulary {
    /// Validates and wraps a token list: nonempty, no empty tokens, no
    /// duplicates.
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::data("phone vocabulary must not be empty"));
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(Error::data(format!("phone vocabulary entry {i} is empty")));
            }
            if index.insert(t.clone(), i).is_some() {
                return Err(Error::data(format!(
                    "duplicate phone token '{t}' in vocabulary"
                )));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Number of tokens.
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    /// Never true: construction rejects empty vocabularies.
    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// The tokens in vocabulary order.
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Index of a token, if present.
    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }
}

/// An L1-normalized bag-of-phones vector over a fixed vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct PhoneticTarget {
    weights: Vec<f64>,
}

impl PhoneticTarget {
    /// The normalized weights, one per vocabulary token.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

/// Counts phone occurrences against the vocabulary and L1-normalizes.
///
/// An empty phone sequence carries no phonetic target and is a data error;
/// so is any token missing from the vocabulary (named in the message).
pub fn bag_of_phones(phones: &[String], vocab: &PhoneVocabulary) -> Result<PhoneticTarget> {
    if phones.is_empty() {
        return Err(Error::data(
            "phone sequence is empty: no phonetic target exists",
        ));
    }
    let mut weights = vec![0.0f64; vocab.len()];
    for p in phones {
        match vocab.index_of(p) {
            Some(i) => weights[i] += 1.0,
            None => {
                return Err(Error::data(format!(
                    "phone token '{p}' is not in the vocabulary"
                )))
            }
        }
    }
    let total = phones.len() as f64;
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(PhoneticTarget { weights })
}

/// A unit-norm semantic embedding for one utterance.
///
/// Ingestion re-normalizes vectors whose L2 norm is within `1e-3` of 1 and
/// rejects anything further out, so downstream code can rely on unit norm
/// to within `1e-12`.
#[derive(Debug, Clone, PartialEq)]
pub struct SemanticEmbedding {
    values: Vec<f64>,
}

impl SemanticEmbedding {
    /// Validates, re-normalizes, and wraps a raw embedding vector.
    pub fn from_raw(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::data("semantic embedding must not be empty"));
        }
        for (i, v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "semantic embedding has non-finite entry {v} at index {i}"
                )));
            }
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > EMBEDDING_NORM_TOLERANCE {
            return Err(Error::data(format!(
                "semantic embedding norm {norm:.6} deviates from 1 by more than {EMBEDDING_NORM_TOLERANCE}"
            )));
        }
        let values = values.into_iter().map(|v| v / norm).collect();
        Ok(Self { values })
    }

    /// The normalized embedding values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Embedding width.
    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// The checkpoint-independent target data for one utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceTargets {
    /// Utterance id, matching the representation dumps.
    pub utterance_id: String,
    /// Phone sequence from the reference transcription.
    pub phones: Vec<String>,
    /// Unit-norm semantic embedding of the reference transcript.
    pub embedding: SemanticEmbedding,
}

/// One utterance with both its dumped representation and its targets.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusItem {
    /// Dumped encoder representation.
    pub representation: UtteranceRepresentation,
    /// Phone sequence from the reference transcription.
    pub phones: Vec<String>,
    /// Unit-norm semantic embedding of the reference transcript.
    pub embedding: SemanticEmbedding,
}

/// One row of the assembled joint dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSample {
    /// Utterance this row was built from.
    pub utterance_id: String,
    /// Concatenated `[summary | phonetic | semantic]` coordinates, `3k` long.
    pub q: Vec<f64>,
}

/// Frozen target-side pipelines plus everything needed to assemble joint
/// datasets for any number of checkpoints of the same corpus.
#[derive(Debug, Clone)]
pub struct TargetContext {
    ids: Vec<String>,
    id_index: HashMap<String, usize>,
    phonetic_coords: Matrix,
    semantic_coords: Matrix,
    k: usize,
    lambda: f64,
}

fn fit_project_standardize(raw: &Matrix, k: usize, what: &str) -> Result<Matrix> {
    let model = fit_pca(raw, k).map_err(|e| e.context(what))?;
    let coords = apply_pca(&model, raw).map_err(|e| e.context(what))?;
    let std = fit_standardizer(&coords).map_err(|e| e.context(what))?;
    apply_standardizer(&std, &coords).map_err(|e| e.context(what))
}

impl TargetContext {
    /// Fits the phonetic and semantic pipelines once for a corpus.
    ///
    /// Requires strictly more utterances than `3k` so that the eventual
    /// joint covariance has full sample rank, and `k` feasible for both
    /// target widths.
    pub fn fit(
        items: &[UtteranceTargets],
        vocab: &PhoneVocabulary,
        k: usize,
        lambda: f64,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::usage("projection width k must be at least 1"));
        }
        let n = items.len();
        if n <= 3 * k {
            return Err(Error::usage(format!(
                "insufficient samples for covariance rank: n={n} utterances but the \
                 3k={} joint dimensions need n > 3k",
                3 * k
            )));
        }
        if !lambda.is_finite() || lambda <= 0.0 {
            return Err(Error::usage(format!(
                "ridge lambda must be finite and positive, got {lambda}"
            )));
        }

        let mut ids = Vec::with_capacity(n);
        let mut id_index = HashMap::with_capacity(n);
        for item in items {
            if id_index
                .insert(item.utterance_id.clone(), ids.len())
                .is_some()
            {
                return Err(Error::data(format!(
                    "duplicate utterance id '{}' in corpus",
                    item.utterance_id
                )));
            }
            ids.push(item.utterance_id.clone());
        }

        let embed_dim = items[0].embedding.dim();
        let mut phonetic_rows = Vec::with_capacity(n);
        let mut semantic_rows = Vec::with_capacity(n);
        for item in items {
            let bag = bag_of_phones(&item.phones, vocab)
                .map_err(|e| e.context(&format!("utterance '{}'", item.utterance_id)))?;
            phonetic_rows.push(bag.weights().to_vec());
            if item.embedding.dim() != embed_dim {
                return Err(Error::data(format!(
                    "utterance '{}' has embedding width {} but '{}' has {}",
                    item.utterance_id,
                    item.embedding.dim(),
                    items[0].utterance_id,
                    embed_dim
                )));
            }
            semantic_rows.push(item.embedding.values().to_vec());
        }

        let phonetic_raw = Matrix::from_rows(&phonetic_rows)?;
        let semantic_raw = Matrix::from_rows(&semantic_rows)?;
        let phonetic_coords =
            fit_project_standardize(&phonetic_raw, k, "phonetic target pipeline")?;
        let semantic_coords =
            fit_project_standardize(&semantic_raw, k, "semantic target pipeline")?;

        Ok(Self {
            ids,
            id_index,
            phonetic_coords,
            semantic_coords,
            k,
            lambda,
        })
    }

    /// Utterance ids in canonical corpus order.
    pub fn utterance_ids(&self) -> &[String] {
        &self.ids
    }

    /// Projection width `k`.
    pub fn k(&self) -> usize {
        self.k
    }

    /// Ridge coefficient used for the joint covariance.
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Orders checkpoint representations into canonical corpus order,
    /// verifying the id sets match exactly.
    fn order_representations<'a>(
        &self,
        reps: &'a [UtteranceRepresentation],
    ) -> Result<Vec<&'a UtteranceRepresentation>> {
        let mut slots: Vec<Option<&UtteranceRepresentation>> = vec![None; self.ids.len()];
        for rep in reps {
            match self.id_index.get(rep.utterance_id()) {
                Some(&pos) => {
                    if slots[pos].is_some() {
                        return Err(Error::data(format!(
                            "utterance '{}' appears twice in the representation dump",
                            rep.utterance_id()
                        )));
                    }
                    slots[pos] = Some(rep);
                }
                None => {
                    return Err(Error::data(format!(
                        "utterance '{}' from the dump is not in the target corpus",
                        rep.utterance_id()
                    )))
                }
            }
        }
        let mut ordered = Vec::with_capacity(self.ids.len());
        for (pos, slot) in slots.into_iter().enumerate() {
            match slot {
                Some(rep) => ordered.push(rep),
                None => {
                    return Err(Error::data(format!(
                        "utterance '{}' has no representation in the dump",
                        self.ids[pos]
                    )))
                }
            }
        }
        let width = ordered[0].dim();
        for rep in &ordered {
            if rep.dim() != width {
                return Err(Error::data(format!(
                    "utterance '{}' has representation width {} but '{}' has {}",
                    rep.utterance_id(),
                    rep.dim(),
                    ordered[0].utterance_id(),
                    width
                )));
            }
        }
        Ok(ordered)
    }

    /// Builds the joint dataset for one checkpoint: refits the summary
    /// pipeline on this checkpoint's pooled representations, reuses the
    /// frozen target coordinates, and estimates the regularized joint
    /// covariance.
    pub fn joint_dataset(
        &self,
        reps: &[UtteranceRepresentation],
    ) -> Result<(Vec<JointSample>, RegularizedJointCovariance)> {
        let ordered = self.order_representations(reps)?;
        let pooled: Vec<PooledSummary> = ordered.par_iter().map(|rep| pool_mean_std(rep)).collect();
        let pooled_rows: Vec<Vec<f64>> = pooled.iter().map(|p| p.values().to_vec()).collect();
        let summary_raw = Matrix::from_rows(&pooled_rows)?;
        let summary_coords = fit_project_standardize(&summary_raw, self.k, "summary pipeline")?;

        let joint_matrix = summary_coords
            .hstack(&self.phonetic_coords)?
            .hstack(&self.semantic_coords)?;
        let blocks = BlockMap::symmetric(self.k)?;
        let cov = RegularizedJointCovariance::from_samples(&joint_matrix, blocks, self.lambda)?;

        let samples = self
            .ids
            .iter()
            .enumerate()
            .map(|(r, id)| JointSample {
                utterance_id: id.clone(),
                q: joint_matrix.row(r),
            })
            .collect();
        Ok((samples, cov))
    }

    /// Computes the full metric triple for one checkpoint: corpus-mean NSE
    /// plus PAI and CSAI from the joint covariance.
    pub fn metric_triple(
        &self,
        reps: &[UtteranceRepresentation],
        checkpoint_step: u64,
        corpus_id: &str,
    ) -> Result<MetricTriple> {
        let ordered = self.order_representations(reps)?;
        let spectral: Vec<f64> = ordered
            .par_iter()
            .map(|rep| {
                nse(rep.frames())
                    .map_err(|e| e.context(&format!("utterance '{}'", rep.utterance_id())))
            })
            .collect::<Result<Vec<f64>>>()?;
        let mean_nse = spectral.iter().sum::<f64>() / spectral.len() as f64;
        let (_, cov) = self.joint_dataset(reps)?;
        let pai_bits = crate::entropy::pai(&cov)?;
        let csai_bits = crate::entropy::csai(&cov)?;
        MetricTriple::new(checkpoint_step, corpus_id, mean_nse, pai_bits, csai_bits)
    }
}

fn split_corpus(corpus: &[CorpusItem]) -> (Vec<UtteranceTargets>, Vec<UtteranceRepresentation>) {
    let targets = corpus
        .iter()
        .map(|c| UtteranceTargets {
            utterance_id: c.representation.utterance_id().to_string(),
            phones: c.phones.clone(),
            embedding: c.embedding.clone(),
        })
        .collect();
    let reps = corpus.iter().map(|c| c.representation.clone()).collect();
    (targets, reps)
}

/// One-shot joint dataset assembly for a single checkpoint's corpus.
pub fn build_joint_dataset(
    corpus: &[CorpusItem],
    vocab: &PhoneVocabulary,
    k: usize,
    lambda: f64,
) -> Result<(Vec<JointSample>, RegularizedJointCovariance)> {
    let (targets, reps) = split_corpus(corpus);
    let ctx = TargetContext::fit(&targets, vocab, k, lambda)?;
    ctx.joint_dataset(&reps)
}

/// One-shot metric computation for a single checkpoint's corpus.
pub fn metric_triple(
    corpus: &[CorpusItem],
    vocab: &PhoneVocabulary,
    k: usize,
    lambda: f64,
    checkpoint_step: u64,
    corpus_id: &str,
) -> Result<MetricTriple> {
    let (targets, reps) = split_corpus(corpus);
    let ctx = TargetContext::fit(&targets, vocab, k, lambda)?;
    ctx.metric_triple(&reps, checkpoint_step, corpus_id)
}
