//! Vectorization algebra over dense matrices.
//!
//! All half-vectorized quantities use one ordering: the lower triangle,
//! column by column (`z11, z21, .., zd1, z22, z32, .., zdd`). [`sym_index`] is
//! the only place that maps `(i, j)` to a flat position; every other routine
//! in the crate goes through it so that regressor rows and `vech(W)` agree.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::svd::{svd, svd_scratch, ComputeSvdVectors};
use faer::diag::Diag;
use faer::{Accum, Mat, MatRef, Par};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Flat position of entry `(i, j)` of a `d x d` symmetric matrix in `vech`
/// order. The pair is unordered: `(i, j)` and `(j, i)` map to the same slot.
#[inline]
pub fn sym_index(i: usize, j: usize, d: usize) -> usize {
    let (row, col) = if i >= j { (i, j) } else { (j, i) };
    debug_assert!(row < d);
    // Columns 0..col hold d, d-1, .., d-col+1 entries.
    col * d - col * col.saturating_sub(1) / 2 + (row - col)
}

/// Number of free entries of a `d x d` symmetric matrix.
#[inline]
pub fn tri_len(d: usize) -> usize {
    d * (d + 1) / 2
}

/// Inverse of [`tri_len`]: the `d` with `d(d+1)/2 == len`, if any.
pub fn tri_dim(len: usize) -> Option<usize> {
    let d = ((((8 * len + 1) as f64).sqrt() - 1.0) / 2.0).round() as usize;
    (tri_len(d) == len).then_some(d)
}

/// Symmetric matrix stored as its packed lower triangle.
///
/// Storing only one triangle makes `m[i][j] == m[j][i]` hold by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix {
    dim: usize,
    packed: Vec<f64>,
}

impl SymMatrix {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            packed: vec![0.0; tri_len(dim)],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut s = Self::zeros(dim);
        for i in 0..dim {
            s.set(i, i, 1.0);
        }
        s
    }

    /// Builds from a packed `vech` vector.
    pub fn from_vech(packed: Vec<f64>) -> Result<Self> {
        let dim = tri_dim(packed.len()).ok_or(Error::NotTriangular(packed.len()))?;
        if dim == 0 {
            return Err(Error::EmptyMatrix);
        }
        Ok(Self { dim, packed })
    }

    /// Reads the lower triangle of a square matrix. The upper triangle is
    /// ignored, so callers must pass a matrix that is symmetric.
    pub fn from_lower(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::dims("SymMatrix::from_lower", "square", format!("{}x{}", m.nrows(), m.ncols())));
        }
        let d = m.nrows();
        let mut packed = Vec::with_capacity(tri_len(d));
        for j in 0..d {
            for i in j..d {
                packed.push(m[(i, j)]);
            }
        }
        Ok(Self { dim: d, packed })
    }

    /// Symmetrizes `(M + M^T) / 2` and packs the result.
    pub fn from_dense_symmetrized(m: &DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::dims("SymMatrix::from_dense_symmetrized", "square", format!("{}x{}", m.nrows(), m.ncols())));
        }
        let d = m.nrows();
        let mut packed = Vec::with_capacity(tri_len(d));
        for j in 0..d {
            for i in j..d {
                packed.push(0.5 * (m[(i, j)] + m[(j, i)]));
            }
        }
        Ok(Self { dim: d, packed })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.packed[sym_index(i, j, self.dim)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: f64) {
        let k = sym_index(i, j, self.dim);
        self.packed[k] = value;
    }

    /// The packed lower triangle, i.e. `vech(self)`.
    pub fn packed(&self) -> &[f64] {
        &self.packed
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.dim, |i, j| self.get(i, j))
    }

    /// Leading `k x k` principal block.
    pub fn leading_block(&self, k: usize) -> DMatrix<f64> {
        assert!(k <= self.dim, "block larger than matrix");
        DMatrix::from_fn(k, k, |i, j| self.get(i, j))
    }

    /// `z^T W z`.
    pub fn quad_form(&self, z: &[f64]) -> f64 {
        assert_eq!(z.len(), self.dim);
        let mut acc = 0.0;
        for j in 0..self.dim {
            acc += self.get(j, j) * z[j] * z[j];
            for i in (j + 1)..self.dim {
                acc += 2.0 * self.get(i, j) * z[i] * z[j];
            }
        }
        acc
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn add(&self, other: &SymMatrix) -> Result<SymMatrix> {
        if self.dim != other.dim {
            return Err(Error::dims("SymMatrix::add", self.dim, other.dim));
        }
        let packed = self.packed.iter().zip(&other.packed).map(|(a, b)| a + b).collect();
        Ok(SymMatrix { dim: self.dim, packed })
    }

    pub fn max_abs_diff(&self, other: &SymMatrix) -> f64 {
        self.packed
            .iter()
            .zip(&other.packed)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    let mut out = DMatrix::zeros(ra * rb, ca * cb);
    for j in 0..ca {
        for i in 0..ra {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            let mut block = out.view_mut((i * rb, j * cb), (rb, cb));
            block.zip_apply(b, |o, v| *o = s * v);
        }
    }
    out
}

/// Column-stacking vectorization.
pub fn vec(m: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_column_slice(m.as_slice())
}

/// Inverse of [`vec`].
pub fn unvec(v: &DVector<f64>, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
    if v.len() != rows * cols {
        return Err(Error::dims("unvec", rows * cols, v.len()));
    }
    Ok(DMatrix::from_column_slice(rows, cols, v.as_slice()))
}

/// Half-vectorization: lower-triangular columns.
pub fn vech(m: &SymMatrix) -> DVector<f64> {
    DVector::from_column_slice(m.packed())
}

/// Scaled half-vectorization: like [`vech`] with strictly off-diagonal
/// entries doubled, so that `vecs(z z^T) . vech(W) = z^T W z`.
pub fn vecs(m: &SymMatrix) -> DVector<f64> {
    let d = m.dim();
    let mut out = DVector::zeros(tri_len(d));
    for j in 0..d {
        for i in j..d {
            let k = sym_index(i, j, d);
            out[k] = if i == j { m.get(i, j) } else { 2.0 * m.get(i, j) };
        }
    }
    out
}

/// Inverse of [`vecs`].
pub fn unvecs(v: &DVector<f64>) -> Result<SymMatrix> {
    let d = tri_dim(v.len()).ok_or(Error::NotTriangular(v.len()))?;
    if d == 0 {
        return Err(Error::EmptyMatrix);
    }
    let mut m = SymMatrix::zeros(d);
    for j in 0..d {
        for i in j..d {
            let k = sym_index(i, j, d);
            m.set(i, j, if i == j { v[k] } else { 0.5 * v[k] });
        }
    }
    Ok(m)
}

/// `H(v) = vecs(vec^{-1}(v))` for a vector of square length `d^2`.
///
/// The reshaped matrix is symmetrized before packing, which only removes
/// round-off asymmetry for the `z ⊗ z` arguments this is meant for.
pub fn op_h(v: &DVector<f64>) -> Result<DVector<f64>> {
    let d = (v.len() as f64).sqrt().round() as usize;
    if d * d != v.len() || d == 0 {
        return Err(Error::NotSquare(v.len()));
    }
    let m = unvec(v, d, d)?;
    Ok(vecs(&SymMatrix::from_dense_symmetrized(&m)?))
}

/// `H(z ⊗ z)` evaluated directly from `z` without forming the Kronecker
/// product: entry `(i, j)` is `z_i z_j`, doubled off the diagonal.
pub fn quad_features(z: &[f64]) -> Vec<f64> {
    let d = z.len();
    let mut out = vec![0.0; tri_len(d)];
    quad_features_into(z, 1.0, &mut out);
    out
}

/// Accumulates `scale * H(z ⊗ z)` into `out`.
pub fn quad_features_into(z: &[f64], scale: f64, out: &mut [f64]) {
    let d = z.len();
    debug_assert_eq!(out.len(), tri_len(d));
    let mut k = 0;
    for j in 0..d {
        let zj = scale * z[j];
        out[k] += zj * z[j];
        k += 1;
        let zj2 = 2.0 * zj;
        for zi in &z[j + 1..] {
            out[k] += zj2 * zi;
            k += 1;
        }
    }
}

/// Threshold rule for treating singular values as zero.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum TolPolicy {
    /// `sigma_max * max(rows, cols) * f64::EPSILON`.
    #[default]
    Default,
    /// Fixed absolute threshold.
    Absolute(f64),
    /// `factor * sigma_max`.
    Relative(f64),
}

impl TolPolicy {
    pub fn threshold(&self, sigma_max: f64, rows: usize, cols: usize) -> f64 {
        match *self {
            TolPolicy::Default => sigma_max * rows.max(cols) as f64 * f64::EPSILON,
            TolPolicy::Absolute(t) => t,
            TolPolicy::Relative(f) => f * sigma_max,
        }
    }
}

/// SVD-based pseudoinverse together with the rank information it used.
#[derive(Debug, Clone)]
pub struct PinvResult {
    pub pseudoinverse: DMatrix<f64>,
    pub numerical_rank: usize,
    /// Descending.
    pub singular_values: Vec<f64>,
    pub tolerance_used: f64,
}

impl PinvResult {
    /// Smallest singular value kept in the pseudoinverse, if any.
    pub fn smallest_retained(&self) -> Option<f64> {
        self.numerical_rank
            .checked_sub(1)
            .map(|i| self.singular_values[i])
    }
}

fn faer_view(m: &DMatrix<f64>) -> MatRef<'_, f64> {
    MatRef::from_column_major_slice(m.as_slice(), m.nrows(), m.ncols())
}

fn count_rank(sv: &[f64], tol: f64) -> usize {
    sv.iter().take_while(|&&s| s > tol).count()
}

fn resolve_tol(sv: &[f64], policy: TolPolicy, rows: usize, cols: usize) -> f64 {
    let smax = sv.first().copied().unwrap_or(0.0);
    let t = policy.threshold(smax, rows, cols);
    // A zero matrix still needs a positive threshold.
    if t > 0.0 {
        t
    } else {
        f64::MIN_POSITIVE
    }
}

/// Descending singular values.
pub fn singular_values(m: &DMatrix<f64>) -> Result<Vec<f64>> {
    if m.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let view = faer_view(m);
    let view = if m.nrows() >= m.ncols() { view } else { view.transpose() };
    Ok(seq_svd(view, false)?.s)
}

struct SeqSvd {
    s: Vec<f64>,
    u: Mat<f64>,
    v: Mat<f64>,
}

/// Thin SVD on a single thread. Decompositions never follow the ambient
/// thread pool, so results are bit-identical whatever `--threads` says.
fn seq_svd(a: MatRef<'_, f64>, vectors: bool) -> Result<SeqSvd> {
    let (m, n) = a.shape();
    let k = m.min(n);
    let mode = if vectors { ComputeSvdVectors::Thin } else { ComputeSvdVectors::No };
    let (mut u, mut v) = if vectors { (Mat::zeros(m, k), Mat::zeros(n, k)) } else { (Mat::zeros(0, 0), Mat::zeros(0, 0)) };
    let mut s = Diag::<f64>::zeros(k);
    let mut mem = MemBuffer::new(svd_scratch::<f64>(m, n, mode, mode, Par::Seq, Default::default()));
    svd(
        a,
        s.as_mut(),
        vectors.then(|| u.as_mut()),
        vectors.then(|| v.as_mut()),
        Par::Seq,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|e| Error::Decomposition(format!("{e:?}")))?;
    let col = s.column_vector();
    Ok(SeqSvd { s: (0..k).map(|i| col[i]).collect(), u, v })
}

/// Numerical rank under `policy`, with the singular values and threshold.
pub fn numerical_rank(m: &DMatrix<f64>, policy: TolPolicy) -> Result<(usize, Vec<f64>, f64)> {
    let sv = singular_values(m)?;
    let tol = resolve_tol(&sv, policy, m.nrows(), m.ncols());
    Ok((count_rank(&sv, tol), sv, tol))
}

/// Pseudoinverse of `m` with singular values at or below the policy
/// threshold treated as zero.
pub fn pinv_tol(m: &DMatrix<f64>, policy: TolPolicy) -> Result<PinvResult> {
    svd_pinv(m, policy, false)
}

/// Pseudoinverse of `m^T`, computed without materializing the transpose.
/// The result has the same shape as `m`.
pub fn pinv_of_transpose(m: &DMatrix<f64>, policy: TolPolicy) -> Result<PinvResult> {
    svd_pinv(m, policy, true)
}

fn svd_pinv(m: &DMatrix<f64>, policy: TolPolicy, of_transpose: bool) -> Result<PinvResult> {
    if m.is_empty() {
        return Err(Error::EmptyMatrix);
    }
    let (rows, cols) = m.shape();
    let view = faer_view(m);
    // faer handles either orientation; feeding it the tall one keeps U thin.
    let tall = rows >= cols;
    let svd = seq_svd(if tall { view } else { view.transpose() }, true)?;
    let sv = svd.s.clone();
    let tol = resolve_tol(&sv, policy, rows, cols);
    let rank = count_rank(&sv, tol);

    // In the tall orientation m = U S V^T; otherwise m^T = U S V^T.
    // pinv(m) = V S^-1 U^T and pinv(m^T) = U S^-1 V^T (tall case); the
    // roles of U and V swap in the wide case.
    let (u, v) = (svd.u.as_ref(), svd.v.as_ref());
    let (left, right) = match (tall, of_transpose) {
        (true, false) | (false, true) => (v, u),
        (true, true) | (false, false) => (u, v),
    };
    let out_rows = left.nrows();
    let out_cols = right.nrows();
    let mut scaled = Mat::<f64>::zeros(out_rows, rank);
    for c in 0..rank {
        let inv = 1.0 / sv[c];
        for r in 0..out_rows {
            scaled[(r, c)] = left[(r, c)] * inv;
        }
    }
    let mut pinv = DMatrix::<f64>::zeros(out_rows, out_cols);
    if rank > 0 {
        let dst = faer::MatMut::from_column_major_slice_mut(pinv.as_mut_slice(), out_rows, out_cols);
        faer::linalg::matmul::matmul(
            dst,
            Accum::Replace,
            scaled.as_ref(),
            right.subcols(0, rank).transpose(),
            1.0,
            Par::Seq,
        );
    }
    drop(svd);
    Ok(PinvResult {
        pseudoinverse: pinv,
        numerical_rank: rank,
        singular_values: sv,
        tolerance_used: tol,
    })
}

/// Matrix-vector product `m * x` with a fixed, sequential summation order.
pub fn matvec(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(m.ncols(), x.len());
    let mut y = vec![0.0; m.nrows()];
    let view = faer_view(m);
    let xv = faer::ColRef::from_slice(x);
    let yv = faer::ColMut::from_slice_mut(&mut y);
    faer::linalg::matmul::matmul(yv, Accum::Replace, view, xv, 1.0, Par::Seq);
    y
}

/// `a * b` with a fixed, sequential summation order.
pub fn matmul_seq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.ncols(), b.nrows());
    let mut out = DMatrix::<f64>::zeros(a.nrows(), b.ncols());
    let dst = faer::MatMut::from_column_major_slice_mut(out.as_mut_slice(), a.nrows(), b.ncols());
    faer::linalg::matmul::matmul(dst, Accum::Replace, faer_view(a), faer_view(b), 1.0, Par::Seq);
    out
}

/// `a^T * b` with a fixed, sequential summation order.
pub fn matmul_tn_seq(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let mut out = DMatrix::<f64>::zeros(a.ncols(), b.ncols());
    let dst = faer::MatMut::from_column_major_slice_mut(out.as_mut_slice(), a.ncols(), b.ncols());
    faer::linalg::matmul::matmul(dst, Accum::Replace, faer_view(a).transpose(), faer_view(b), 1.0, Par::Seq);
    out
}

/// `m^T * x` with a fixed, sequential summation order.
pub fn matvec_transpose(m: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    assert_eq!(m.nrows(), x.len());
    m.column_iter()
        .map(|col| col.as_slice().iter().zip(x).map(|(a, b)| a * b).sum())
        .collect()
}
