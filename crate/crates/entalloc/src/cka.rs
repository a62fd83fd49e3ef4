//! Linear centered kernel alignment (CKA) between representation matrices,
//! utterance-averaged CKA between two dumps, and layer-wise alignment of
//! pooled representations against semantic embeddings.
//!
//! Two algebraically equivalent routes are kept deliberately separate:
//!
//! * the feature form works on `d x d` cross-covariance products and is
//!   cheap when widths are small relative to the frame count;
//! * the gram form double-centers the `L x L` frame-similarity matrices and
//!   is cheap in the opposite regime.
//!
//! [`general_cka`] picks between them on size; tests hold the two routes to
//! each other. Every public entry point is exactly symmetric in its two
//! arguments (bit-for-bit), which is arranged by evaluating on a canonical
//! ordering of the pair.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::dataio::{EmbeddingTable, EvalManifest, RepresentationDump, SeriesSpec};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::targets::SemanticEmbedding;

/// Relative variance floor: a representation whose centered squared
/// Frobenius norm falls at or below this fraction of its raw squared norm
/// counts as constant rows and cannot be compared.
pub const CONSTANT_ROW_GATE: f64 = 1e-20;

/// Values may stray outside `[0, 1]` by at most this much before the result
/// is an error instead of a clamp.
pub const CKA_CLAMP_TOLERANCE: f64 = 1e-9;

/// Orders a pair of matrices canonically (by width, then height, then
/// lexicographic content) so that symmetric formulas evaluate identically
/// regardless of argument order. Returns the flag telling whether the
/// caller's arguments were swapped.
fn canonical_pair<'a>(x: &'a Matrix, y: &'a Matrix) -> (&'a Matrix, &'a Matrix, bool) {
    let key = |m: &Matrix| (m.cols(), m.rows());
    let (kx, ky) = (key(x), key(y));
    let swap = match kx.cmp(&ky) {
        std::cmp::Ordering::Less => false,
        std::cmp::Ordering::Greater => true,
        std::cmp::Ordering::Equal => {
            let (ax, ay) = (x.to_row_major(), y.to_row_major());
            let mut swap = false;
            for (a, b) in ax.iter().zip(&ay) {
                match a.total_cmp(b) {
                    std::cmp::Ordering::Less => break,
                    std::cmp::Ordering::Greater => {
                        swap = true;
                        break;
                    }
                    std::cmp::Ordering::Equal => continue,
                }
            }
            swap
        }
    };
    if swap {
        (y, x, true)
    } else {
        (x, y, false)
    }
}

/// Centers the columns of a matrix and applies the constant-rows gate;
/// `role` names the argument in errors from the caller's point of view.
fn center_and_gate(m: &Matrix, role: &str) -> Result<DMatrix<f64>> {
    let inner = m.inner();
    let raw_sq = inner.norm_squared();
    let mut centered = inner.clone();
    for mut col in centered.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        for v in col.iter_mut() {
            *v -= mean;
        }
    }
    let centered_sq = centered.norm_squared();
    if centered_sq <= CONSTANT_ROW_GATE * raw_sq {
        return Err(Error::data(format!(
            "{role} input has constant rows (no variance to compare)"
        )));
    }
    Ok(centered)
}

/// Maps tiny floating-point excursions back into `[0, 1]` and rejects
/// anything worse.
fn finalize_cka(v: f64) -> Result<f64> {
    if !v.is_finite() {
        return Err(Error::numerical(format!("CKA evaluated to {v}")));
    }
    if v < 0.0 {
        if v >= -CKA_CLAMP_TOLERANCE {
            return Ok(0.0);
        }
        return Err(Error::numerical(format!(
            "CKA value {v} lies outside [0, 1] beyond tolerance"
        )));
    }
    if v > 1.0 {
        if v <= 1.0 + CKA_CLAMP_TOLERANCE {
            return Ok(1.0);
        }
        return Err(Error::numerical(format!(
            "CKA value {v} lies outside [0, 1] beyond tolerance"
        )));
    }
    Ok(v)
}

fn check_row_agreement(x: &Matrix, y: &Matrix) -> Result<()> {
    if x.rows() != y.rows() {
        return Err(Error::usage(format!(
            "CKA inputs must share a row count: {} vs {}",
            x.rows(),
            y.rows()
        )));
    }
    Ok(())
}

fn role_names(swapped: bool) -> (&'static str, &'static str) {
    if swapped {
        ("second", "first")
    } else {
        ("first", "second")
    }
}

/// Linear CKA via the feature-space form:
/// `||Xc' Yc||_F^2 / (||Xc' Xc||_F ||Yc' Yc||_F)`.
pub fn cka_feature_form(x: &Matrix, y: &Matrix) -> Result<f64> {
    check_row_agreement(x, y)?;
    let (a, b, swapped) = canonical_pair(x, y);
    let (role_a, role_b) = role_names(swapped);
    let ac = center_and_gate(a, role_a)?;
    let bc = center_and_gate(b, role_b)?;
    let cross = ac.transpose() * &bc;
    let num = cross.norm_squared();
    let sxx = (ac.transpose() * &ac).norm();
    let syy = (bc.transpose() * &bc).norm();
    finalize_cka(num / (sxx * syy))
}

/// Linear CKA via the gram form: double-centered `L x L` similarity
/// matrices compared with a normalized Frobenius inner product.
pub fn cka_gram_form(x: &Matrix, y: &Matrix) -> Result<f64> {
    check_row_agreement(x, y)?;
    let (a, b, swapped) = canonical_pair(x, y);
    let (role_a, role_b) = role_names(swapped);
    // The gate is evaluated on the same criterion as the feature route so
    // both routes accept and reject identical inputs.
    center_and_gate(a, role_a)?;
    center_and_gate(b, role_b)?;
    let ka = double_centered_gram(a);
    let kb = double_centered_gram(b);
    let num = ka.dot(&kb);
    finalize_cka(num / (ka.norm() * kb.norm()))
}

/// Builds `H (M M') H` for the row-sample matrix `M`, with `H` the centering
/// projector, without materializing `H`.
fn double_centered_gram(m: &Matrix) -> DMatrix<f64> {
    let inner = m.inner();
    let mut k = inner * inner.transpose();
    let n = k.nrows();
    let row_means: Vec<f64> = (0..n).map(|i| k.row(i).sum() / n as f64).collect();
    let grand_mean = row_means.iter().sum::<f64>() / n as f64;
    for i in 0..n {
        for j in 0..n {
            k[(i, j)] = k[(i, j)] - row_means[i] - row_means[j] + grand_mean;
        }
    }
    k
}

/// Linear CKA between two row-sample matrices (feature-space route).
pub fn linear_cka(x: &Matrix, y: &Matrix) -> Result<f64> {
    cka_feature_form(x, y)
}

/// Linear CKA choosing the cheaper route for the input shape: the feature
/// form when the smaller width is below the row count, the gram form
/// otherwise.
pub fn general_cka(x: &Matrix, y: &Matrix) -> Result<f64> {
    check_row_agreement(x, y)?;
    if x.cols().min(y.cols()) < x.rows() {
        cka_feature_form(x, y)
    } else {
        cka_gram_form(x, y)
    }
}

/// Utterance-averaged CKA between two dumps of the same corpus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AverageCka {
    /// Mean per-utterance CKA over the comparable utterances.
    pub value: f64,
    /// How many utterances entered the average.
    pub compared: usize,
    /// How many utterances were skipped for having a single frame (CKA is
    /// undefined after centering a single row).
    pub skipped_single_frame: usize,
}

/// Averages per-utterance CKA between two dumps.
///
/// Utterances are matched by id (order-independent); both dumps must cover
/// exactly the same ids and agree on per-utterance frame counts.
/// Single-frame utterances are skipped and counted; if nothing remains the
/// corpus is not comparable.
pub fn avg_utterance_cka(a: &RepresentationDump, b: &RepresentationDump) -> Result<AverageCka> {
    for u in a.utterances() {
        if b.get(u.utterance_id()).is_none() {
            return Err(Error::data(format!(
                "utterance '{}' is present in the first dump but missing from the second",
                u.utterance_id()
            )));
        }
    }
    for u in b.utterances() {
        if a.get(u.utterance_id()).is_none() {
            return Err(Error::data(format!(
                "utterance '{}' is present in the second dump but missing from the first",
                u.utterance_id()
            )));
        }
    }
    let per_utterance: Vec<Option<f64>> = a
        .utterances()
        .par_iter()
        .map(|ua| -> Result<Option<f64>> {
            let id = ua.utterance_id();
            let ub = b.get(id).expect("coverage checked above");
            if ua.frame_count() != ub.frame_count() {
                return Err(Error::data(format!(
                    "utterance '{id}' has {} frames in one dump and {} in the other",
                    ua.frame_count(),
                    ub.frame_count()
                )));
            }
            if ua.frame_count() == 1 {
                return Ok(None);
            }
            general_cka(ua.frames(), ub.frames())
                .map(Some)
                .map_err(|e| e.context(&format!("utterance '{id}'")))
        })
        .collect::<Result<_>>()?;
    let mut sum = 0.0;
    let mut compared = 0usize;
    let mut skipped = 0usize;
    for v in per_utterance {
        match v {
            Some(c) => {
                sum += c;
                compared += 1;
            }
            None => skipped += 1,
        }
    }
    if compared == 0 {
        return Err(Error::data(
            "no comparable utterances: every utterance has a single frame",
        ));
    }
    Ok(AverageCka {
        value: sum / compared as f64,
        compared,
        skipped_single_frame: skipped,
    })
}

/// One layer's alignment with the semantic embedding space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerAlignment {
    /// Layer label carried from the dump.
    pub layer_label: String,
    /// Linear CKA between mean-pooled utterance representations and their
    /// semantic embeddings.
    pub cka: f64,
}

/// An ordered layer-wise alignment profile.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerProfile {
    /// Alignments in the order the layer dumps were given.
    pub layers: Vec<LayerAlignment>,
}

impl LayerProfile {
    /// Renders the profile as CSV with a fixed header and six-decimal CKA.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer_index,layer_label,cka\n");
        for (i, l) in self.layers.iter().enumerate() {
            out.push_str(&format!("{i},{},{:.6}\n", l.layer_label, l.cka));
        }
        out
    }

    /// Renders the profile as pretty JSON.
    pub fn to_json(&self) -> String {
        let mut s =
            serde_json::to_string_pretty(&self.layers).expect("profile serialization cannot fail");
        s.push('\n');
        s
    }

    /// The profile as a plottable series (x = layer index, y = CKA).
    pub fn to_series(&self) -> SeriesSpec {
        SeriesSpec {
            name: "layer alignment".to_string(),
            points: self
                .layers
                .iter()
                .enumerate()
                .map(|(i, l)| (i as f64, l.cka))
                .collect(),
        }
    }
}

/// Mean-pools each utterance over frames and stacks the corpus in manifest
/// order into one `n x d` matrix.
fn pooled_matrix(dump: &RepresentationDump, manifest: &EvalManifest) -> Result<Matrix> {
    let mut rows = Vec::with_capacity(manifest.utterances.len());
    for mu in &manifest.utterances {
        let rep = dump.get(&mu.id).ok_or_else(|| {
            Error::data(format!(
                "utterance '{}' from the manifest is missing from the dump",
                mu.id
            ))
        })?;
        let frames = rep.frames();
        let mut mean = vec![0.0; frames.cols()];
        for r in 0..frames.rows() {
            for (c, m) in mean.iter_mut().enumerate() {
                *m += frames.get(r, c);
            }
        }
        for m in &mut mean {
            *m /= frames.rows() as f64;
        }
        rows.push(mean);
    }
    Matrix::from_rows(&rows)
}

/// Stacks each utterance's (unit-normalized) semantic embedding in manifest
/// order into one `n x d_emb` matrix.
fn embedding_matrix(manifest: &EvalManifest, embeddings: &EmbeddingTable) -> Result<Matrix> {
    let mut rows = Vec::with_capacity(manifest.utterances.len());
    let mut width: Option<usize> = None;
    for mu in &manifest.utterances {
        let raw = embeddings.get(&mu.embedding_id).ok_or_else(|| {
            Error::data(format!(
                "embedding '{}' (utterance '{}') is missing from the embedding table",
                mu.embedding_id, mu.id
            ))
        })?;
        match width {
            None => width = Some(raw.len()),
            Some(w) if w != raw.len() => {
                return Err(Error::data(format!(
                    "embedding '{}' has width {} but earlier embeddings have width {w}",
                    mu.embedding_id,
                    raw.len()
                )));
            }
            Some(_) => {}
        }
        let emb = SemanticEmbedding::from_raw(raw.to_vec())
            .map_err(|e| e.context(&format!("embedding '{}'", mu.embedding_id)))?;
        rows.push(emb.values().to_vec());
    }
    Matrix::from_rows(&rows)
}

/// Computes the layer-wise alignment profile: for each dumped layer, the
/// linear CKA between mean-pooled utterance representations (in manifest
/// order) and the corresponding semantic embeddings.
pub fn layerwise_alignment(
    dumps: &[RepresentationDump],
    manifest: &EvalManifest,
    embeddings: &EmbeddingTable,
) -> Result<LayerProfile> {
    if dumps.is_empty() {
        return Err(Error::usage("layer-wise alignment needs at least one dump"));
    }
    if manifest.utterances.len() < 2 {
        return Err(Error::usage(
            "layer-wise alignment needs at least two utterances",
        ));
    }
    for (i, d) in dumps.iter().enumerate() {
        for other in &dumps[i + 1..] {
            if other.layer_label() == d.layer_label() {
                return Err(Error::data(format!(
                    "two dumps share the layer label '{}'",
                    d.layer_label()
                )));
            }
        }
    }
    let y = embedding_matrix(manifest, embeddings)?;
    let layers: Vec<LayerAlignment> = dumps
        .par_iter()
        .map(|dump| -> Result<LayerAlignment> {
            let x = pooled_matrix(dump, manifest)
                .map_err(|e| e.context(&format!("layer '{}'", dump.layer_label())))?;
            let cka = linear_cka(&x, &y)
                .map_err(|e| e.context(&format!("layer '{}'", dump.layer_label())))?;
            Ok(LayerAlignment {
                layer_label: dump.layer_label().to_string(),
                cka,
            })
        })
        .collect::<Result<_>>()?;
    Ok(LayerProfile { layers })
}
