//! Dense linear-algebra kernels shared by every diagnostic: singular value
//! spectra, SPD log-determinants, Schur complements, covariance estimation,
//! PCA projection, and per-dimension standardization.
//!
//! # Determinism
//!
//! Every reduction in this module runs in a fixed, data-canonical order, so
//! results are bit-identical across runs, thread counts, and (for the
//! covariance estimator) even across row permutations of the input sample
//! matrix. Nothing here spawns threads.
//!
//! # Conventions
//!
//! Matrices are row-major at the API boundary: a sample matrix has one row
//! per observation and one column per dimension. All log-determinants are in
//! natural log; conversion to bits happens in the entropy layer.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Scale floor for standardization. Dimensions whose fit-set standard
/// deviation falls below this are treated as dead and mapped to exactly zero
/// instead of being divided by a denormal-sized scale.
pub const STD_EPSILON: f64 = 1e-8;

/// Relative tolerance accepted between mirrored entries when constructing a
/// [`SymmetricMatrix`] from raw entries.
const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// A dense matrix of finite 64-bit reals with at least one row and column.
///
/// Construction validates shape and finiteness once; everything downstream
/// can then assume well-formed input.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    inner: DMatrix<f64>,
}

impl Matrix {
    /// Builds a matrix from row-major entries.
    ///
    /// Rejects empty shapes and entry vectors of the wrong length (usage
    /// errors) and non-finite entries (data errors, with the offending
    /// coordinates in the message).
    pub fn from_row_major(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::usage(format!(
                "matrix shape must be at least 1x1, got {rows}x{cols}"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::usage(format!(
                "expected {} entries for a {rows}x{cols} matrix, got {}",
                rows * cols,
                entries.len()
            )));
        }
        for (pos, v) in entries.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "non-finite entry {v} at row {}, col {}",
                    pos / cols,
                    pos % cols
                )));
            }
        }
        Ok(Self {
            inner: DMatrix::from_row_slice(rows, cols, &entries),
        })
    }

    /// Builds a matrix from a slice of equally sized rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::usage("matrix must have at least one row"));
        }
        let cols = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != cols {
                return Err(Error::usage(format!(
                    "row {i} has {} entries but row 0 has {cols}",
                    row.len()
                )));
            }
        }
        let mut flat = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            flat.extend_from_slice(row);
        }
        Self::from_row_major(rows.len(), cols, flat)
    }

    /// Wraps an internally produced matrix whose entries are known finite.
    pub(crate) fn from_dmatrix(inner: DMatrix<f64>) -> Self {
        debug_assert!(inner.nrows() >= 1 && inner.ncols() >= 1);
        debug_assert!(inner.iter().all(|v| v.is_finite()));
        Self { inner }
    }

    /// Number of rows.
    pub fn rows(&self) -> usize {
        self.inner.nrows()
    }

    /// Number of columns.
    pub fn cols(&self) -> usize {
        self.inner.ncols()
    }

    /// Entry at (row, col). Panics on out-of-range indices.
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner[(row, col)]
    }

    /// Copies one row out as a vector.
    pub fn row(&self, row: usize) -> Vec<f64> {
        (0..self.cols()).map(|c| self.get(row, c)).collect()
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.rows() * self.cols());
        for r in 0..self.rows() {
            for c in 0..self.cols() {
                out.push(self.get(r, c));
            }
        }
        out
    }

    /// Stacks two matrices side by side (same row count).
    pub fn hstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows() != other.rows() {
            return Err(Error::usage(format!(
                "cannot stack {}x{} beside {}x{}: row counts differ",
                self.rows(),
                self.cols(),
                other.rows(),
                other.cols()
            )));
        }
        let mut inner = DMatrix::zeros(self.rows(), self.cols() + other.cols());
        inner
            .view_mut((0, 0), (self.rows(), self.cols()))
            .copy_from(&self.inner);
        inner
            .view_mut((0, self.cols()), (other.rows(), other.cols()))
            .copy_from(&other.inner);
        Ok(Matrix::from_dmatrix(inner))
    }

    pub(crate) fn inner(&self) -> &DMatrix<f64> {
        &self.inner
    }
}

/// A symmetric matrix of finite reals, symmetrized exactly at construction.
///
/// Raw entries may disagree across the diagonal by at most a relative
/// `1e-12`; anything worse is rejected as a data error. The stored matrix is
/// the exact average of the input and its transpose, so `get(i, j) ==
/// get(j, i)` holds bitwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    inner: DMatrix<f64>,
}

impl SymmetricMatrix {
    /// Builds a symmetric matrix from row-major entries.
    pub fn from_row_major(dim: usize, entries: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage(
                "symmetric matrix dimension must be at least 1",
            ));
        }
        if entries.len() != dim * dim {
            return Err(Error::usage(format!(
                "expected {} entries for a {dim}x{dim} matrix, got {}",
                dim * dim,
                entries.len()
            )));
        }
        for (pos, v) in entries.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "non-finite entry {v} at row {}, col {}",
                    pos / dim,
                    pos % dim
                )));
            }
        }
        for i in 0..dim {
            for j in (i + 1)..dim {
                let a = entries[i * dim + j];
                let b = entries[j * dim + i];
                if (a - b).abs() > SYMMETRY_TOLERANCE * (1.0 + a.abs()) {
                    return Err(Error::data(format!(
                        "matrix is not symmetric at ({i}, {j}): {a} vs {b}"
                    )));
                }
            }
        }
        let raw = DMatrix::from_row_slice(dim, dim, &entries);
        Ok(Self::from_dmatrix_symmetrized(raw))
    }

    /// The identity matrix of the given dimension.
    pub fn identity(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::usage(
                "symmetric matrix dimension must be at least 1",
            ));
        }
        Ok(Self {
            inner: DMatrix::identity(dim, dim),
        })
    }

    /// A diagonal matrix with the given finite diagonal.
    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.is_empty() {
            return Err(Error::usage(
                "symmetric matrix dimension must be at least 1",
            ));
        }
        for (i, v) in diag.iter().enumerate() {
            if !v.is_finite() {
                return Err(Error::data(format!(
                    "non-finite diagonal entry {v} at index {i}"
                )));
            }
        }
        let mut inner = DMatrix::zeros(diag.len(), diag.len());
        for (i, v) in diag.iter().enumerate() {
            inner[(i, i)] = *v;
        }
        Ok(Self { inner })
    }

    /// Symmetrizes and wraps an internally produced matrix.
    pub(crate) fn from_dmatrix_symmetrized(m: DMatrix<f64>) -> Self {
        let sym = (&m + m.transpose()) * 0.5;
        Self { inner: sym }
    }

    /// Dimension of the (square) matrix.
    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    /// Entry at (row, col).
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.inner[(row, col)]
    }

    /// Entries in row-major order.
    pub fn to_row_major(&self) -> Vec<f64> {
        let dim = self.dim();
        let mut out = Vec::with_capacity(dim * dim);
        for r in 0..dim {
            for c in 0..dim {
                out.push(self.get(r, c));
            }
        }
        out
    }

    /// The principal submatrix selected by `rows` x `cols` index lists.
    pub(crate) fn select(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(rows.len(), cols.len());
        for (oi, &i) in rows.iter().enumerate() {
            for (oj, &j) in cols.iter().enumerate() {
                out[(oi, oj)] = self.inner[(i, j)];
            }
        }
        out
    }

    pub(crate) fn inner(&self) -> &DMatrix<f64> {
        &self.inner
    }
}

/// Lower-triangular Cholesky factor of an SPD matrix.
///
/// Hand-rolled rather than delegated so that a failure can name the exact
/// pivot that went non-positive, which is the difference between "your
/// covariance is rank-deficient in block 2" and an opaque panic.
pub(crate) struct CholeskyFactor {
    lower: DMatrix<f64>,
}

/// Factors an SPD matrix, reporting the failing pivot index on failure.
pub(crate) fn cholesky_factor(s: &DMatrix<f64>) -> Result<CholeskyFactor> {
    let n = s.nrows();
    debug_assert_eq!(n, s.ncols());
    let mut lower = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut diag = s[(j, j)];
        for k in 0..j {
            diag -= lower[(j, k)] * lower[(j, k)];
        }
        if !diag.is_finite() || diag <= 0.0 {
            return Err(Error::numerical(format!(
                "matrix is not positive-definite: Cholesky pivot {j} evaluated to {diag:e}"
            )));
        }
        let root = diag.sqrt();
        lower[(j, j)] = root;
        for i in (j + 1)..n {
            let mut acc = s[(i, j)];
            for k in 0..j {
                acc -= lower[(i, k)] * lower[(j, k)];
            }
            lower[(i, j)] = acc / root;
        }
    }
    Ok(CholeskyFactor { lower })
}

impl CholeskyFactor {
    /// Natural-log determinant of the factored matrix.
    pub fn log_determinant(&self) -> f64 {
        let n = self.lower.nrows();
        let mut acc = 0.0;
        for j in 0..n {
            acc += self.lower[(j, j)].ln();
        }
        2.0 * acc
    }

    /// Solves `S x = rhs` column by column via forward and back substitution.
    pub fn solve(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.lower.nrows();
        debug_assert_eq!(rhs.nrows(), n);
        let mut x = rhs.clone();
        for col in 0..x.ncols() {
            // Forward: L y = b.
            for i in 0..n {
                let mut v = x[(i, col)];
                for k in 0..i {
                    v -= self.lower[(i, k)] * x[(k, col)];
                }
                x[(i, col)] = v / self.lower[(i, i)];
            }
            // Backward: L^T x = y.
            for i in (0..n).rev() {
                let mut v = x[(i, col)];
                for k in (i + 1)..n {
                    v -= self.lower[(k, i)] * x[(k, col)];
                }
                x[(i, col)] = v / self.lower[(i, i)];
            }
        }
        x
    }
}

/// Singular values of a matrix, sorted descending.
///
/// Returns a numerical error if the iterative SVD fails to converge, which
/// in practice only happens on adversarial input.
pub fn svd_values(m: &Matrix) -> Result<Vec<f64>> {
    let svd = m
        .inner()
        .clone()
        .try_svd(false, false, f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("SVD failed to converge"))?;
    let mut values: Vec<f64> = svd.singular_values.iter().copied().collect();
    values.sort_by(|a, b| b.total_cmp(a));
    Ok(values)
}

/// Natural-log determinant of an SPD matrix via Cholesky.
pub fn logdet_spd(s: &SymmetricMatrix) -> Result<f64> {
    cholesky_factor(s.inner()).map(|c| c.log_determinant())
}

pub(crate) fn validate_index_sets(dim: usize, sets: &[(&str, &[usize])]) -> Result<()> {
    let mut seen = vec![None::<&str>; dim];
    for (name, set) in sets {
        if set.is_empty() {
            return Err(Error::usage(format!(
                "index set '{name}' must not be empty"
            )));
        }
        for &idx in *set {
            if idx >= dim {
                return Err(Error::usage(format!(
                    "index {idx} in set '{name}' is out of range for dimension {dim}"
                )));
            }
            match seen[idx] {
                Some(prev) if prev == *name => {
                    return Err(Error::usage(format!(
                        "index {idx} appears twice in set '{name}'"
                    )));
                }
                Some(prev) => {
                    return Err(Error::usage(format!(
                        "index {idx} appears in both '{prev}' and '{name}': sets must be disjoint"
                    )));
                }
                None => seen[idx] = Some(name),
            }
        }
    }
    Ok(())
}

/// Conditional covariance of the `target` block given the `given` block.
///
/// For a joint covariance partitioned into blocks A (target) and C (given),
/// this is the Schur complement `S_AA - S_AC S_CC^-1 S_CA`. The `given`
/// block must be positive-definite; a singular conditioning block is a
/// numerical error naming the failing pivot.
pub fn schur_conditional(
    s: &SymmetricMatrix,
    target: &[usize],
    given: &[usize],
) -> Result<SymmetricMatrix> {
    validate_index_sets(s.dim(), &[("target", target), ("given", given)])?;
    let aa = s.select(target, target);
    let ac = s.select(target, given);
    let cc = s.select(given, given);
    let chol = cholesky_factor(&cc)?;
    let ca = ac.transpose();
    let solved = chol.solve(&ca);
    let result = &aa - &ac * &solved;
    Ok(SymmetricMatrix::from_dmatrix_symmetrized(result))
}

fn lex_cmp_rows(samples: &Matrix, a: usize, b: usize) -> std::cmp::Ordering {
    for c in 0..samples.cols() {
        let ord = samples.get(a, c).total_cmp(&samples.get(b, c));
        if ord != std::cmp::Ordering::Equal {
            return ord;
        }
    }
    std::cmp::Ordering::Equal
}

/// Unbiased sample covariance (divisor `n - 1`) of a row-per-sample matrix.
///
/// Accumulation runs over rows in lexicographically sorted order, not input
/// order, so the estimate is exactly invariant under row permutation of the
/// sample matrix and bit-identical across runs.
pub fn covariance(samples: &Matrix) -> Result<SymmetricMatrix> {
    let n = samples.rows();
    if n < 2 {
        return Err(Error::usage(format!(
            "covariance requires at least 2 sample rows, got {n}"
        )));
    }
    let d = samples.cols();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| lex_cmp_rows(samples, a, b));

    let mut mean = vec![0.0f64; d];
    for &r in &order {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += samples.get(r, c);
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    let mut acc = DMatrix::zeros(d, d);
    let mut centered = vec![0.0f64; d];
    for &r in &order {
        for (c, slot) in centered.iter_mut().enumerate() {
            *slot = samples.get(r, c) - mean[c];
        }
        for i in 0..d {
            let xi = centered[i];
            for j in i..d {
                acc[(i, j)] += xi * centered[j];
            }
        }
    }
    let divisor = (n - 1) as f64;
    for i in 0..d {
        for j in i..d {
            let v = acc[(i, j)] / divisor;
            acc[(i, j)] = v;
            acc[(j, i)] = v;
        }
    }
    Ok(SymmetricMatrix { inner: acc })
}

/// Adds `lambda` to every diagonal entry. `lambda` must be finite and
/// positive; this is the ridge term that keeps near-singular covariances
/// factorable.
pub fn ridge_regularize(s: &SymmetricMatrix, lambda: f64) -> Result<SymmetricMatrix> {
    if !lambda.is_finite() || lambda <= 0.0 {
        return Err(Error::usage(format!(
            "ridge lambda must be finite and positive, got {lambda}"
        )));
    }
    let mut inner = s.inner.clone();
    for i in 0..inner.nrows() {
        inner[(i, i)] += lambda;
    }
    Ok(SymmetricMatrix { inner })
}

/// A fitted PCA projection: centering mean, orthonormal component rows, and
/// the variance bookkeeping needed to report explained fractions.
#[derive(Debug, Clone)]
pub struct PcaModel {
    mean: Vec<f64>,
    components: Matrix,
    explained_variance: Vec<f64>,
    total_variance: f64,
}

impl PcaModel {
    /// Per-dimension centering mean (length equals the input width).
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Component rows, `k x input_width`, orthonormal.
    pub fn components(&self) -> &Matrix {
        &self.components
    }

    /// Number of retained components.
    pub fn k(&self) -> usize {
        self.components.rows()
    }

    /// Sample variance captured by each retained component, descending.
    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// Total sample variance of the fit data (sum over all dimensions).
    pub fn total_variance(&self) -> f64 {
        self.total_variance
    }

    /// Maps `k`-dimensional coordinates back into the original space.
    pub fn reconstruct(&self, coords: &Matrix) -> Result<Matrix> {
        if coords.cols() != self.k() {
            return Err(Error::usage(format!(
                "coordinates have {} columns but the model retains {} components",
                coords.cols(),
                self.k()
            )));
        }
        let mut out = coords.inner() * self.components.inner();
        for mut row in out.row_iter_mut() {
            for (c, m) in self.mean.iter().enumerate() {
                row[c] += m;
            }
        }
        Ok(Matrix::from_dmatrix(out))
    }
}

/// Fits a `k`-component PCA on a row-per-sample matrix.
///
/// `k` must satisfy `1 <= k <= min(width, n - 1)`; anything else is a usage
/// error rather than a silent clamp. Components are sign-fixed so that each
/// row's largest-magnitude coefficient is positive (first index wins ties),
/// making the fit deterministic.
pub fn fit_pca(samples: &Matrix, k: usize) -> Result<PcaModel> {
    let n = samples.rows();
    let d = samples.cols();
    if n < 2 {
        return Err(Error::usage(format!(
            "PCA requires at least 2 samples, got {n}"
        )));
    }
    if k == 0 || k > d.min(n - 1) {
        return Err(Error::usage(format!(
            "PCA component count k={k} is outside the feasible range 1..={} (width {d}, samples {n})",
            d.min(n - 1)
        )));
    }

    let mut mean = vec![0.0f64; d];
    for r in 0..n {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += samples.get(r, c);
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }

    let mut centered = DMatrix::zeros(n, d);
    for r in 0..n {
        for c in 0..d {
            centered[(r, c)] = samples.get(r, c) - mean[c];
        }
    }
    let total_variance = centered.iter().map(|v| v * v).sum::<f64>() / (n as f64 - 1.0);

    let svd = centered
        .clone()
        .try_svd(false, true, f64::EPSILON, 0)
        .ok_or_else(|| Error::numerical("SVD failed to converge during PCA fit"))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::numerical("SVD did not return right singular vectors"))?;

    // Defensive descending sort: pair singular values with their rows.
    let mut idx: Vec<usize> = (0..svd.singular_values.len()).collect();
    idx.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));

    let mut components = DMatrix::zeros(k, d);
    let mut explained = Vec::with_capacity(k);
    for (row_out, &row_in) in idx.iter().take(k).enumerate() {
        let sigma = svd.singular_values[row_in];
        explained.push(sigma * sigma / (n as f64 - 1.0));
        let mut best = 0usize;
        for c in 1..d {
            if v_t[(row_in, c)].abs() > v_t[(row_in, best)].abs() {
                best = c;
            }
        }
        let flip = if v_t[(row_in, best)] < 0.0 { -1.0 } else { 1.0 };
        for c in 0..d {
            components[(row_out, c)] = flip * v_t[(row_in, c)];
        }
    }

    Ok(PcaModel {
        mean,
        components: Matrix::from_dmatrix(components),
        explained_variance: explained,
        total_variance,
    })
}

/// Projects samples through a fitted PCA: `(x - mean) C^T`, yielding `n x k`.
pub fn apply_pca(model: &PcaModel, samples: &Matrix) -> Result<Matrix> {
    let d = model.mean.len();
    if samples.cols() != d {
        return Err(Error::usage(format!(
            "samples have {} columns but the PCA model was fit on {d}",
            samples.cols()
        )));
    }
    let n = samples.rows();
    let mut centered = DMatrix::zeros(n, d);
    for r in 0..n {
        for c in 0..d {
            centered[(r, c)] = samples.get(r, c) - model.mean[c];
        }
    }
    let coords = centered * model.components.inner().transpose();
    Ok(Matrix::from_dmatrix(coords))
}

/// A fitted per-dimension affine standardizer.
///
/// Dimensions whose fit-set standard deviation falls below [`STD_EPSILON`]
/// are flagged dead and always map to exactly zero, so constant nuisance
/// dimensions cannot explode into huge z-scores.
#[derive(Debug, Clone)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
    zero_variance: Vec<bool>,
}

impl Standardizer {
    /// Per-dimension fit means.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Per-dimension scales (sample standard deviations, floored).
    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    /// Whether a dimension was flagged dead at fit time.
    pub fn is_zero_variance(&self, dim: usize) -> bool {
        self.zero_variance[dim]
    }

    /// Input width this standardizer was fit on.
    pub fn width(&self) -> usize {
        self.mean.len()
    }
}

/// Fits a standardizer (mean and sample standard deviation, divisor `n - 1`)
/// on a row-per-sample matrix. Requires at least 2 samples.
pub fn fit_standardizer(samples: &Matrix) -> Result<Standardizer> {
    let n = samples.rows();
    if n < 2 {
        return Err(Error::usage(format!(
            "standardizer requires at least 2 samples, got {n}"
        )));
    }
    let d = samples.cols();
    let mut mean = vec![0.0f64; d];
    for r in 0..n {
        for (c, m) in mean.iter_mut().enumerate() {
            *m += samples.get(r, c);
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut scale = vec![0.0f64; d];
    for r in 0..n {
        for (c, s) in scale.iter_mut().enumerate() {
            let delta = samples.get(r, c) - mean[c];
            *s += delta * delta;
        }
    }
    let mut zero_variance = vec![false; d];
    for (c, s) in scale.iter_mut().enumerate() {
        let sd = (*s / (n as f64 - 1.0)).sqrt();
        if sd < STD_EPSILON {
            zero_variance[c] = true;
            *s = STD_EPSILON;
        } else {
            *s = sd;
        }
    }
    Ok(Standardizer {
        mean,
        scale,
        zero_variance,
    })
}

/// Applies a fitted standardizer. Dead dimensions map to exactly zero.
pub fn apply_standardizer(std: &Standardizer, samples: &Matrix) -> Result<Matrix> {
    if samples.cols() != std.width() {
        return Err(Error::usage(format!(
            "samples have {} columns but the standardizer was fit on {}",
            samples.cols(),
            std.width()
        )));
    }
    let n = samples.rows();
    let d = samples.cols();
    let mut out = DMatrix::zeros(n, d);
    for r in 0..n {
        for c in 0..d {
            out[(r, c)] = if std.zero_variance[c] {
                0.0
            } else {
                (samples.get(r, c) - std.mean[c]) / std.scale[c]
            };
        }
    }
    Ok(Matrix::from_dmatrix(out))
}
