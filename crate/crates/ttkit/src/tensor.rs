//! Dense numerical substrate: row-major matrices and tensors, a one-sided
//! Jacobi thin SVD, and the elementwise kernels everything else builds on.
//!
//! All storage is row-major `f64`. Values are immutable after construction;
//! every operation returns a fresh value, so sharing across threads is safe.

use thiserror::Error;

/// Errors from dense tensor and matrix operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("dimension mismatch in {op}: left is {left_rows}x{left_cols}, right is {right_rows}x{right_cols}")]
    DimMismatch {
        op: &'static str,
        left_rows: usize,
        left_cols: usize,
        right_rows: usize,
        right_cols: usize,
    },
    #[error("data length {got} does not match shape {shape:?} (expected {expected})")]
    BadLength {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("cannot reshape {from:?} (size {from_size}) to {to:?} (size {to_size})")]
    BadReshape {
        from: Vec<usize>,
        from_size: usize,
        to: Vec<usize>,
        to_size: usize,
    },
    #[error("shape extents must be positive, got {shape:?}")]
    ZeroExtent { shape: Vec<usize> },
    #[error("non-finite entry at flat index {index}")]
    NonFinite { index: usize },
    #[error("SVD did not converge after {sweeps} sweeps (off-diagonal residual {residual:.3e})")]
    SvdNoConvergence { sweeps: usize, residual: f64 },
    #[error("index ({i}, {j}) out of bounds for {rows}x{cols} matrix")]
    IndexOutOfBounds {
        i: usize,
        j: usize,
        rows: usize,
        cols: usize,
    },
}

/// Row-major 2-D array of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    /// Builds a matrix from row-major data, rejecting bad lengths and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, TensorError> {
        if rows == 0 || cols == 0 {
            return Err(TensorError::ZeroExtent {
                shape: vec![rows, cols],
            });
        }
        if data.len() != rows * cols {
            return Err(TensorError::BadLength {
                shape: vec![rows, cols],
                expected: rows * cols,
                got: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        out
    }

    /// Standard matrix product. Rejects nonconforming shapes with both
    /// shapes reported.
    pub fn matmul(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
        if self.cols != rhs.rows {
            return Err(TensorError::DimMismatch {
                op: "matmul",
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: rhs.rows,
                right_cols: rhs.cols,
            });
        }
        let mut out = DenseMatrix::zeros(self.rows, rhs.cols);
        // i-k-j order so the inner loop streams over contiguous rows.
        for i in 0..self.rows {
            let out_row = &mut out.data[i * rhs.cols..(i + 1) * rhs.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Elementwise sum; shapes must match.
    pub fn add(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    /// Elementwise difference; shapes must match.
    pub fn sub(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    /// Elementwise (Hadamard) product; shapes must match.
    pub fn hadamard(&self, rhs: &DenseMatrix) -> Result<DenseMatrix, TensorError> {
        self.zip_with(rhs, "hadamard", |a, b| a * b)
    }

    pub fn scale(&self, s: f64) -> DenseMatrix {
        self.map(|x| x * s)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> DenseMatrix {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    fn zip_with(
        &self,
        rhs: &DenseMatrix,
        op: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<DenseMatrix, TensorError> {
        if self.rows != rhs.rows || self.cols != rhs.cols {
            return Err(TensorError::DimMismatch {
                op,
                left_rows: self.rows,
                left_cols: self.cols,
                right_rows: rhs.rows,
                right_cols: rhs.cols,
            });
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .zip(&rhs.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.data)
    }

    /// Reinterprets the matrix as a 2-D tensor without copying semantics.
    pub fn into_tensor(self) -> DenseTensor {
        DenseTensor {
            shape: vec![self.rows, self.cols],
            data: self.data,
        }
    }
}

/// Row-major N-way array of 64-bit reals.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl DenseTensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self, TensorError> {
        if shape.contains(&0) {
            return Err(TensorError::ZeroExtent { shape });
        }
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(TensorError::BadLength {
                shape,
                expected,
                got: data.len(),
            });
        }
        check_finite(&data)?;
        Ok(Self { shape, data })
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let len = shape.iter().product();
        Self {
            shape,
            data: vec![0.0; len],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Changes the shape metadata; the flat row-major data is untouched.
    pub fn reshape(self, new_shape: Vec<usize>) -> Result<DenseTensor, TensorError> {
        let to_size: usize = new_shape.iter().product();
        if new_shape.contains(&0) {
            return Err(TensorError::ZeroExtent { shape: new_shape });
        }
        if to_size != self.data.len() {
            return Err(TensorError::BadReshape {
                from: self.shape,
                from_size: self.data.len(),
                to: new_shape,
                to_size,
            });
        }
        Ok(DenseTensor {
            shape: new_shape,
            data: self.data,
        })
    }

    /// Reorders axes so that output axis `k` is input axis `perm[k]`.
    pub fn permute(&self, perm: &[usize]) -> DenseTensor {
        assert_eq!(perm.len(), self.shape.len(), "permutation arity mismatch");
        let nd = self.shape.len();
        let new_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let in_strides = row_major_strides(&self.shape);
        let mut out = vec![0.0; self.data.len()];
        // idx walks the multi-index of the *output* layout in row-major
        // order.
        let mut idx = vec![0usize; nd];
        for slot in out.iter_mut() {
            let mut in_flat = 0;
            for (k, &i) in idx.iter().enumerate() {
                in_flat += i * in_strides[perm[k]];
            }
            *slot = self.data[in_flat];
            for k in (0..nd).rev() {
                idx[k] += 1;
                if idx[k] < new_shape[k] {
                    break;
                }
                idx[k] = 0;
            }
        }
        DenseTensor {
            shape: new_shape,
            data: out,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        frobenius(&self.data)
    }

    /// Views a 2-D tensor as a matrix.
    pub fn into_matrix(self) -> Result<DenseMatrix, TensorError> {
        if self.shape.len() != 2 {
            return Err(TensorError::BadReshape {
                from_size: self.data.len(),
                to: self.shape.clone(),
                from: self.shape,
                to_size: 0,
            });
        }
        Ok(DenseMatrix {
            rows: self.shape[0],
            cols: self.shape[1],
            data: self.data,
        })
    }
}

/// Row-major product of raw buffers: (m x k) times (k x n), no validation.
pub(crate) fn matmul_raw(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let out_row = &mut out[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            if av == 0.0 {
                continue;
            }
            let b_row = &b[kk * n..(kk + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    out
}

/// at b for raw buffers: a is (m x k) stored row-major, result is (k x n).
pub(crate) fn matmul_at_b_raw(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), m * n);
    let mut out = vec![0.0; k * n];
    for i in 0..m {
        let b_row = &b[i * n..(i + 1) * n];
        for kk in 0..k {
            let av = a[i * k + kk];
            if av == 0.0 {
                continue;
            }
            let out_row = &mut out[kk * n..(kk + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(b_row) {
                *o += av * bv;
            }
        }
    }
    out
}

/// a bt for raw buffers: b is (n x k) stored row-major, result is (m x n).
pub(crate) fn matmul_a_bt_raw(a: &[f64], m: usize, k: usize, b: &[f64], n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        for j in 0..n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = 0.0;
            for (av, bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            out[i * n + j] = acc;
        }
    }
    out
}

/// Row-major strides for a shape.
pub fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut strides = vec![1usize; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        strides[k] = strides[k + 1] * shape[k + 1];
    }
    strides
}

/// Flat row-major offset of a multi-index.
pub fn flat_offset(shape: &[usize], index: &[usize]) -> usize {
    debug_assert_eq!(shape.len(), index.len());
    let mut off = 0;
    for (k, (&i, &d)) in index.iter().zip(shape).enumerate() {
        debug_assert!(i < d, "index {i} out of range {d} at axis {k}");
        let _ = k;
        off = off * d + i;
    }
    off
}

/// Decomposes a flat index into row-major digits over `shape`.
pub fn unravel(shape: &[usize], mut flat: usize) -> Vec<usize> {
    let mut idx = vec![0usize; shape.len()];
    for k in (0..shape.len()).rev() {
        idx[k] = flat % shape[k];
        flat /= shape[k];
    }
    idx
}

fn frobenius(data: &[f64]) -> f64 {
    data.iter().map(|&x| x * x).sum::<f64>().sqrt()
}

fn check_finite(data: &[f64]) -> Result<(), TensorError> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(index) => Err(TensorError::NonFinite { index }),
        None => Ok(()),
    }
}

/// Thin SVD `A = U diag(s) Vt` with `k = min(rows, cols)`.
///
/// `u` is rows x k with orthonormal columns, `s` is nonincreasing and
/// nonnegative, `vt` is k x cols with orthonormal rows.
#[derive(Debug, Clone)]
pub struct SvdResult {
    pub u: DenseMatrix,
    pub s: Vec<f64>,
    pub vt: DenseMatrix,
}

impl SvdResult {
    /// Rank-`k` truncation `(U_k, s_k, Vt_k)`.
    pub fn truncate(&self, k: usize) -> (DenseMatrix, Vec<f64>, DenseMatrix) {
        let k = k.min(self.s.len());
        let m = self.u.rows();
        let n = self.vt.cols();
        let u_k = DenseMatrix::from_fn(m, k, |i, j| self.u.get(i, j));
        let s_k = self.s[..k].to_vec();
        let vt_k = DenseMatrix::from_fn(k, n, |i, j| self.vt.get(i, j));
        (u_k, s_k, vt_k)
    }
}

const JACOBI_MAX_SWEEPS: usize = 60;
const JACOBI_OFF_TOL: f64 = 1e-12;

/// Thin SVD by one-sided Jacobi rotations.
///
/// Columns of a working copy are orthogonalized by plane rotations
/// accumulated into V; singular values are the final column norms. The
/// sweep order is fixed, so the result is deterministic. Matrices with
/// more columns than rows are handled through the transpose.
pub fn svd(a: &DenseMatrix) -> Result<SvdResult, TensorError> {
    if a.rows() >= a.cols() {
        svd_tall(a)
    } else {
        // A = (At)t = V' S U't
        let r = svd_tall(&a.transpose())?;
        Ok(SvdResult {
            u: r.vt.transpose(),
            s: r.s,
            vt: r.u.transpose(),
        })
    }
}

fn svd_tall(a: &DenseMatrix) -> Result<SvdResult, TensorError> {
    let (m, n) = (a.rows(), a.cols());
    debug_assert!(m >= n);
    let mut b = a.data().to_vec(); // m x n, columns get rotated in place
    let mut v = DenseMatrix::identity(n);
    let norm_a = a.frobenius_norm();
    // Gram off-diagonal entries scale as the squared norm of A.
    let off_tol = JACOBI_OFF_TOL * norm_a * norm_a;

    let mut converged = norm_a == 0.0;
    let mut residual = 0.0;
    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if converged {
            break;
        }
        let mut off_sq = 0.0;
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let mut app = 0.0;
                let mut aqq = 0.0;
                let mut apq = 0.0;
                for i in 0..m {
                    let bp = b[i * n + p];
                    let bq = b[i * n + q];
                    app += bp * bp;
                    aqq += bq * bq;
                    apq += bp * bq;
                }
                off_sq += apq * apq;
                if apq == 0.0 || apq.abs() <= f64::EPSILON * (app * aqq).sqrt() {
                    continue;
                }
                let tau = (aqq - app) / (2.0 * apq);
                let t = tau.signum() / (tau.abs() + (1.0 + tau * tau).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for i in 0..m {
                    let bp = b[i * n + p];
                    let bq = b[i * n + q];
                    b[i * n + p] = c * bp - s * bq;
                    b[i * n + q] = s * bp + c * bq;
                }
                for i in 0..n {
                    let vp = v.get(i, p);
                    let vq = v.get(i, q);
                    v.set(i, p, c * vp - s * vq);
                    v.set(i, q, s * vp + c * vq);
                }
                rotated = true;
            }
        }
        residual = off_sq.sqrt();
        if residual <= off_tol || !rotated {
            converged = true;
        }
    }
    if !converged {
        return Err(TensorError::SvdNoConvergence {
            sweeps: JACOBI_MAX_SWEEPS,
            residual,
        });
    }

    // Column norms are the singular values; sort them nonincreasing.
    let mut norms: Vec<f64> = (0..n)
        .map(|j| {
            (0..m)
                .map(|i| b[i * n + j])
                .map(|x| x * x)
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].partial_cmp(&norms[x]).unwrap().then(x.cmp(&y)));
    norms = order.iter().map(|&j| norms[j]).collect();

    let mut u = DenseMatrix::zeros(m, n);
    // Columns below the numerical noise floor are replaced by a
    // Gram-Schmidt completion so U keeps orthonormal columns even for
    // rank-deficient input.
    let tiny = 1e-13 * norm_a.max(f64::MIN_POSITIVE);
    let mut need_fill = Vec::new();
    for (jj, &j) in order.iter().enumerate() {
        if norms[jj] > tiny {
            for i in 0..m {
                u.set(i, jj, b[i * n + j] / norms[jj]);
            }
        } else {
            need_fill.push(jj);
        }
    }
    if !need_fill.is_empty() {
        complete_columns(&mut u, &need_fill, m, n);
    }

    let vt = DenseMatrix::from_fn(n, n, |i, j| v.get(j, order[i]));
    Ok(SvdResult { u, s: norms, vt })
}

/// Fills the listed columns of `u` with unit vectors orthogonal to all
/// other columns, chosen deterministically from the standard basis.
fn complete_columns(u: &mut DenseMatrix, fill: &[usize], m: usize, n: usize) {
    let mut filled: Vec<usize> = (0..n).filter(|j| !fill.contains(j)).collect();
    let mut candidate = 0usize;
    for &col in fill {
        loop {
            assert!(candidate < m, "ran out of basis vectors completing U");
            let mut w = vec![0.0; m];
            w[candidate] = 1.0;
            candidate += 1;
            // Two rounds of Gram-Schmidt against the accepted columns.
            for _ in 0..2 {
                for &j in &filled {
                    let dot: f64 = (0..m).map(|i| w[i] * u.get(i, j)).sum();
                    for (i, wi) in w.iter_mut().enumerate() {
                        *wi -= dot * u.get(i, j);
                    }
                }
            }
            let norm = frobenius(&w);
            if norm > 0.5 {
                for (i, wi) in w.iter().enumerate() {
                    u.set(i, col, wi / norm);
                }
                filled.push(col);
                break;
            }
        }
    }
}
