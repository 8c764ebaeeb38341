//! Per-token importance scores for a single view.

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor_io::Tensor;

/// Row-major `rows x cols` grid of per-token scores.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreGrid<T> {
    rows: usize,
    cols: usize,
    values: Vec<T>,
}

impl<T: Scalar> ScoreGrid<T> {
    pub fn new(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Shape(format!("grid dims must be positive, got {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} grid needs {} values, got {}",
                rows * cols,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("score grid contains non-finite values".into()));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.cols + col]
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn sum(&self) -> T {
        self.values.iter().copied().fold(T::zero(), |a, b| a + b)
    }

    /// The same grid rotated by 180 degrees (flat index `i` maps to `len - 1 - i`).
    pub fn rotated_half_turn(&self) -> Self {
        let mut values = self.values.clone();
        values.reverse();
        Self {
            rows: self.rows,
            cols: self.cols,
            values,
        }
    }

    /// Copy out the `rows0..rows1 x cols0..cols1` block.
    pub fn block(&self, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<Self> {
        if row0 + rows > self.rows || col0 + cols > self.cols {
            return Err(Error::Shape(format!(
                "block {rows}x{cols} at ({row0},{col0}) exceeds {}x{} grid",
                self.rows, self.cols
            )));
        }
        let values = (row0..row0 + rows)
            .flat_map(|r| self.values[r * self.cols + col0..r * self.cols + col0 + cols].iter().copied())
            .collect();
        Self::new(rows, cols, values)
    }

    /// Affinely rescale to `[0, 1]`; a constant grid maps to all zeros.
    pub fn min_max_normalized(&self) -> Self {
        let (lo, hi) = (self.min(), self.max());
        let span = hi - lo;
        let values = if span > T::zero() {
            self.values.iter().map(|&v| (v - lo) / span).collect()
        } else {
            vec![T::zero(); self.values.len()]
        };
        Self {
            rows: self.rows,
            cols: self.cols,
            values,
        }
    }

    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        match *t.dims() {
            [rows, cols] => Self::new(rows, cols, t.data().iter().map(|&v| T::of(v as f64)).collect()),
            [n] => Self::new(1, n, t.data().iter().map(|&v| T::of(v as f64)).collect()),
            _ => Err(Error::Shape(format!("score grid needs a rank-2 tensor, got {:?}", t.dims()))),
        }
    }

    pub fn to_tensor(&self) -> Tensor {
        let data = self
            .values
            .iter()
            .map(|v| v.to_f64_lossy() as f32)
            .collect();
        Tensor::new(vec![self.rows, self.cols], data).expect("grid dims are consistent")
    }
}

/// `N x D` matrix of token embeddings (or keys), row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenMatrix<T> {
    n: usize,
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> TokenMatrix<T> {
    pub fn new(n: usize, dim: usize, data: Vec<T>) -> Result<Self> {
        if n == 0 || dim == 0 {
            return Err(Error::Shape(format!("token matrix dims must be positive, got {n}x{dim}")));
        }
        if data.len() != n * dim {
            return Err(Error::Shape(format!(
                "{n}x{dim} matrix needs {} values, got {}",
                n * dim,
                data.len()
            )));
        }
        Ok(Self { n, dim, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::Shape("ragged token rows".into()));
        }
        Self::new(rows.len(), dim, rows.concat())
    }

    pub fn num_tokens(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl DoubleEndedIterator<Item = &[T]> + ExactSizeIterator {
        self.data.chunks_exact(self.dim)
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Column-wise mean of the rows.
    pub fn mean_row(&self) -> Vec<T> {
        let mut acc = vec![T::zero(); self.dim];
        for row in self.rows() {
            for (a, &v) in acc.iter_mut().zip(row) {
                *a = *a + v;
            }
        }
        let n = T::of_usize(self.n);
        acc.into_iter().map(|v| v / n).collect()
    }
}

pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub(crate) fn norm<T: Scalar>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// Norm product below which cosine similarity is taken to be zero.
pub const DEGENERATE_NORM: f64 = 1e-12;

/// Cosine similarity with the degenerate-norm convention (`0` when either
/// vector is numerically zero). Clamped to `[-1, 1]`.
pub fn cosine<T: Scalar>(a: &[T], b: &[T]) -> T {
    let denom = norm(a) * norm(b);
    if denom < T::of(DEGENERATE_NORM) {
        return T::zero();
    }
    (dot(a, b) / denom).max(-T::one()).min(T::one())
}

fn check_grid(n: usize, rows: usize, cols: usize) -> Result<()> {
    if rows * cols != n {
        return Err(Error::Shape(format!("{n} tokens cannot fill a {rows}x{cols} grid")));
    }
    Ok(())
}

/// Numerically stable softmax (max subtracted first).
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total = exps.iter().copied().fold(T::zero(), |a, b| a + b);
    exps.into_iter().map(|e| e / total).collect()
}

/// [CLS]-query attention over patch keys: `softmax(q . K_i / sqrt(D))`.
pub fn cls_attention_scores<T: Scalar>(
    q_cls: &[T],
    keys: &TokenMatrix<T>,
    rows: usize,
    cols: usize,
) -> Result<ScoreGrid<T>> {
    if q_cls.len() != keys.dim() {
        return Err(Error::Shape(format!(
            "query has dim {}, keys have dim {}",
            q_cls.len(),
            keys.dim()
        )));
    }
    check_grid(keys.num_tokens(), rows, cols)?;
    let scale = T::of_usize(keys.dim()).sqrt();
    let logits: Vec<T> = keys.rows().map(|k| dot(q_cls, k) / scale).collect();
    ScoreGrid::new(rows, cols, softmax(&logits))
}

/// Negated mean off-diagonal attention: `-(1/(N-1)) * sum_{j != i} attn[i][j]`.
/// Tokens that attend less to the others score higher.
pub fn neg_patch_attention_scores<T: Scalar>(
    attn: &TokenMatrix<T>,
    rows: usize,
    cols: usize,
) -> Result<ScoreGrid<T>> {
    let n = attn.num_tokens();
    if attn.dim() != n {
        return Err(Error::Shape(format!("attention must be square, got {n}x{}", attn.dim())));
    }
    if n < 2 {
        return Err(Error::Shape("patch attention needs at least two tokens".into()));
    }
    check_grid(n, rows, cols)?;
    let denom = T::of_usize(n - 1);
    let values = attn
        .rows()
        .enumerate()
        .map(|(i, row)| {
            let off = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(T::zero(), |acc, (_, &v)| acc + v);
            -(off / denom)
        })
        .collect();
    ScoreGrid::new(rows, cols, values)
}

/// Negated cosine similarity of each token to the mean token.
pub fn neg_global_mean_similarity_scores<T: Scalar>(
    tokens: &TokenMatrix<T>,
    rows: usize,
    cols: usize,
) -> Result<ScoreGrid<T>> {
    check_grid(tokens.num_tokens(), rows, cols)?;
    let g = tokens.mean_row();
    let values = tokens.rows().map(|x| -cosine(x, &g)).collect();
    ScoreGrid::new(rows, cols, values)
}
