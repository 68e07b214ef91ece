//! Tensor Train matrix format: four-way cores chained along shared rank
//! indices, TT-SVD decomposition with a rank cap, reconstruction, rounding,
//! and parameter counting.
//!
//! A matrix W of shape M x N with M = prod(m_k) and N = prod(n_k) is stored
//! as cores G_k of shape (r_{k-1}, m_k, n_k, r_k) with boundary ranks
//! r_0 = r_d = 1. Entry (i1, i2) is the product of the d slice matrices
//! selected by the row-major digit maps of i1 over the row modes and i2
//! over the column modes.

use crate::tensor::{flat_offset, svd, unravel, DenseMatrix, DenseTensor, TensorError};
use thiserror::Error;

/// Errors from TT construction and decomposition.
#[derive(Debug, Error)]
pub enum TtError {
    #[error("row modes {modes:?} multiply to {product}, expected {expected}")]
    RowModeProduct {
        modes: Vec<usize>,
        product: usize,
        expected: usize,
    },
    #[error("col modes {modes:?} multiply to {product}, expected {expected}")]
    ColModeProduct {
        modes: Vec<usize>,
        product: usize,
        expected: usize,
    },
    #[error("row modes have length {rows} but col modes have length {cols}")]
    ModeArity { rows: usize, cols: usize },
    #[error("mode lists must be nonempty")]
    EmptyModes,
    #[error("max rank must be positive")]
    ZeroMaxRank,
    #[error("core {index} has left rank {left} but previous right rank is {right}")]
    RankChain {
        index: usize,
        left: usize,
        right: usize,
    },
    #[error("boundary ranks must be 1, got r_0 = {first}, r_d = {last}")]
    BoundaryRank { first: usize, last: usize },
    #[error("entry index ({i1}, {i2}) out of range for {rows}x{cols} TT matrix")]
    EntryOutOfRange {
        i1: usize,
        i2: usize,
        rows: usize,
        cols: usize,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// One four-way TT core of shape (r_{k-1}, m_k, n_k, r_k).
#[derive(Debug, Clone, PartialEq)]
pub struct TTCore {
    data: DenseTensor,
}

impl TTCore {
    pub fn new(data: DenseTensor) -> Result<Self, TtError> {
        if data.ndim() != 4 {
            return Err(TtError::Tensor(TensorError::BadReshape {
                from: data.shape().to_vec(),
                from_size: data.len(),
                to: vec![0, 0, 0, 0],
                to_size: 0,
            }));
        }
        Ok(Self { data })
    }

    pub fn left_rank(&self) -> usize {
        self.data.shape()[0]
    }

    pub fn row_mode(&self) -> usize {
        self.data.shape()[1]
    }

    pub fn col_mode(&self) -> usize {
        self.data.shape()[2]
    }

    pub fn right_rank(&self) -> usize {
        self.data.shape()[3]
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        let s = self.data.shape();
        (s[0], s[1], s[2], s[3])
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.data
    }

    pub fn tensor_mut(&mut self) -> &mut DenseTensor {
        &mut self.data
    }

    /// The (r_{k-1} x r_k) slice matrix picked out by one row digit and one
    /// column digit.
    pub fn slice(&self, row_digit: usize, col_digit: usize) -> DenseMatrix {
        let (rl, m, n, rr) = self.shape();
        debug_assert!(row_digit < m && col_digit < n);
        DenseMatrix::from_fn(rl, rr, |a, b| {
            self.data.data()[flat_offset(&[rl, m, n, rr], &[a, row_digit, col_digit, b])]
        })
    }

    /// Number of stored entries.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// The rank vector (r_0, ..., r_d) with boundary ranks 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankDistribution(Vec<usize>);

impl RankDistribution {
    pub fn new(ranks: Vec<usize>) -> Result<Self, TtError> {
        if ranks.len() < 2 || ranks[0] != 1 || *ranks.last().unwrap() != 1 {
            return Err(TtError::BoundaryRank {
                first: ranks.first().copied().unwrap_or(0),
                last: ranks.last().copied().unwrap_or(0),
            });
        }
        Ok(Self(ranks))
    }

    /// Rank vector obtained by capping the maximal possible rank at every
    /// bond: r_k = min(cap, prod_{j<=k} m_j n_j, prod_{j>k} m_j n_j).
    pub fn capped(row_modes: &[usize], col_modes: &[usize], max_rank: usize) -> Self {
        let d = row_modes.len();
        let mut ranks = vec![1usize; d + 1];
        for k in 1..d {
            let left: usize = (0..k).map(|j| row_modes[j] * col_modes[j]).product();
            let right: usize = (k..d).map(|j| row_modes[j] * col_modes[j]).product();
            ranks[k] = max_rank.min(left).min(right);
        }
        Self(ranks)
    }

    pub fn ranks(&self) -> &[usize] {
        &self.0
    }

    pub fn max_rank(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(1)
    }
}

impl std::fmt::Display for RankDistribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "(")?;
        for (i, r) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{r}")?;
        }
        write!(f, ")")
    }
}

/// Rounded train, discarded norm per bond, and the bond spectra.
type Recompressed = (TTMatrix, Vec<f64>, Vec<Vec<f64>>);

/// A matrix stored as a train of four-way cores.
#[derive(Debug, Clone, PartialEq)]
pub struct TTMatrix {
    cores: Vec<TTCore>,
    row_modes: Vec<usize>,
    col_modes: Vec<usize>,
}

impl TTMatrix {
    /// Assembles a TT matrix from cores, validating the rank chain and
    /// boundary ranks.
    pub fn new(cores: Vec<TTCore>) -> Result<Self, TtError> {
        if cores.is_empty() {
            return Err(TtError::EmptyModes);
        }
        let first = cores.first().unwrap().left_rank();
        let last = cores.last().unwrap().right_rank();
        if first != 1 || last != 1 {
            return Err(TtError::BoundaryRank { first, last });
        }
        for k in 1..cores.len() {
            if cores[k - 1].right_rank() != cores[k].left_rank() {
                return Err(TtError::RankChain {
                    index: k,
                    left: cores[k].left_rank(),
                    right: cores[k - 1].right_rank(),
                });
            }
        }
        let row_modes = cores.iter().map(|c| c.row_mode()).collect();
        let col_modes = cores.iter().map(|c| c.col_mode()).collect();
        Ok(Self {
            cores,
            row_modes,
            col_modes,
        })
    }

    pub fn cores(&self) -> &[TTCore] {
        &self.cores
    }

    pub fn cores_mut(&mut self) -> &mut [TTCore] {
        &mut self.cores
    }

    pub fn order(&self) -> usize {
        self.cores.len()
    }

    pub fn row_modes(&self) -> &[usize] {
        &self.row_modes
    }

    pub fn col_modes(&self) -> &[usize] {
        &self.col_modes
    }

    pub fn rows(&self) -> usize {
        self.row_modes.iter().product()
    }

    pub fn cols(&self) -> usize {
        self.col_modes.iter().product()
    }

    pub fn rank_distribution(&self) -> RankDistribution {
        let mut ranks = Vec::with_capacity(self.cores.len() + 1);
        ranks.push(1);
        for c in &self.cores {
            ranks.push(c.right_rank());
        }
        RankDistribution(ranks)
    }

    /// Total number of stored core entries: sum of r_{k-1} m_k n_k r_k.
    pub fn parameter_count(&self) -> usize {
        self.cores.iter().map(|c| c.len()).sum()
    }

    /// Materializes the dense M x N matrix by contracting the train left to
    /// right.
    pub fn reconstruct(&self) -> DenseMatrix {
        let d = self.order();
        // Accumulator over interleaved axes: flat (m_1 n_1 ... m_k n_k) x r_k.
        let mut acc = vec![1.0f64];
        let mut acc_rows = 1usize;
        let mut acc_cols = 1usize;
        for core in &self.cores {
            let (rl, m, n, rr) = core.shape();
            debug_assert_eq!(acc_cols, rl);
            // (acc_rows x rl) . (rl x (m n rr)) with the core's natural
            // unfolding.
            let mut next = vec![0.0; acc_rows * m * n * rr];
            let core_cols = m * n * rr;
            for i in 0..acc_rows {
                let out_row = &mut next[i * core_cols..(i + 1) * core_cols];
                for k in 0..rl {
                    let a = acc[i * acc_cols + k];
                    if a == 0.0 {
                        continue;
                    }
                    let b_row = &core.tensor().data()[k * core_cols..(k + 1) * core_cols];
                    for (o, &b) in out_row.iter_mut().zip(b_row) {
                        *o += a * b;
                    }
                }
            }
            acc = next;
            acc_rows *= m * n;
            acc_cols = rr;
        }
        debug_assert_eq!(acc_cols, 1);

        // acc is interleaved (m_1, n_1, ..., m_d, n_d); regroup to
        // (m_1..m_d, n_1..n_d) and flatten as M x N.
        let mut inter_shape = Vec::with_capacity(2 * d);
        for k in 0..d {
            inter_shape.push(self.row_modes[k]);
            inter_shape.push(self.col_modes[k]);
        }
        let inter = DenseTensor::new(inter_shape, acc).expect("core contraction size");
        let mut perm = Vec::with_capacity(2 * d);
        perm.extend((0..d).map(|k| 2 * k));
        perm.extend((0..d).map(|k| 2 * k + 1));
        let grouped = inter.permute(&perm);
        grouped
            .reshape(vec![self.rows(), self.cols()])
            .expect("mode products")
            .into_matrix()
            .expect("2-d tensor")
    }

    /// Evaluates a single entry without materializing the dense matrix.
    pub fn element_at(&self, i1: usize, i2: usize) -> Result<f64, TtError> {
        let (rows, cols) = (self.rows(), self.cols());
        if i1 >= rows || i2 >= cols {
            return Err(TtError::EntryOutOfRange { i1, i2, rows, cols });
        }
        let row_digits = unravel(&self.row_modes, i1);
        let col_digits = unravel(&self.col_modes, i2);
        // Row vector carried through the slice matrices.
        let mut vec_acc = vec![1.0f64];
        for (k, core) in self.cores.iter().enumerate() {
            let (rl, m, n, rr) = core.shape();
            let data = core.tensor().data();
            let base = (row_digits[k] * n + col_digits[k]) * rr;
            let stride = m * n * rr;
            let mut next = vec![0.0; rr];
            for (a, &va) in vec_acc.iter().enumerate().take(rl) {
                if va == 0.0 {
                    continue;
                }
                let row = &data[a * stride + base..a * stride + base + rr];
                for (o, &g) in next.iter_mut().zip(row) {
                    *o += va * g;
                }
            }
            vec_acc = next;
        }
        debug_assert_eq!(vec_acc.len(), 1);
        Ok(vec_acc[0])
    }

    /// TT rounding: recompresses the train so every rank is at most
    /// `max_rank`. See [`TTMatrix::round_with_errors`] for the error bound.
    pub fn round(&self, max_rank: usize) -> Result<TTMatrix, TtError> {
        Ok(self.round_with_errors(max_rank)?.0)
    }

    /// Rounds and also returns the norms of the singular values discarded
    /// at each bond; the reconstruction error is bounded by
    /// sqrt(sum of squared bond errors).
    pub fn round_with_errors(&self, max_rank: usize) -> Result<(TTMatrix, Vec<f64>), TtError> {
        let (tt, bond_errors, _) = self.recompress(max_rank)?;
        Ok((tt, bond_errors))
    }

    /// Right-orthogonalize, then truncate left to right. Returns the new
    /// train, the discarded norm per bond, and the full singular spectrum
    /// observed at each bond (the true bond spectra of the represented
    /// matrix).
    fn recompress(&self, max_rank: usize) -> Result<Recompressed, TtError> {
        if max_rank == 0 {
            return Err(TtError::ZeroMaxRank);
        }
        let d = self.order();
        let mut cores: Vec<DenseTensor> = self.cores.iter().map(|c| c.tensor().clone()).collect();

        // Right-to-left orthogonalization: make every core except the first
        // right-orthogonal, pushing the remainder leftward.
        for k in (1..d).rev() {
            let s = cores[k].shape().to_vec();
            let (rl, m, n, rr) = (s[0], s[1], s[2], s[3]);
            let mat = cores[k]
                .clone()
                .reshape(vec![rl, m * n * rr])?
                .into_matrix()?;
            // mat = U S Vt with Vt having orthonormal rows; Vt becomes the
            // new core and U S folds into the left neighbour.
            let f = svd(&mat)?;
            let kk = f.s.len();
            let mut us = f.u.clone();
            for i in 0..us.rows() {
                for j in 0..kk {
                    us.set(i, j, us.get(i, j) * f.s[j]);
                }
            }
            cores[k] = f.vt.into_tensor().reshape(vec![kk, m, n, rr])?;
            let left_shape = cores[k - 1].shape().to_vec();
            let (prl, pm, pn, _prr) = (left_shape[0], left_shape[1], left_shape[2], left_shape[3]);
            let left = cores[k - 1]
                .clone()
                .reshape(vec![prl * pm * pn, rl])?
                .into_matrix()?;
            cores[k - 1] = left
                .matmul(&us)?
                .into_tensor()
                .reshape(vec![prl, pm, pn, kk])?;
        }

        // Left-to-right truncation sweep.
        let mut bond_errors = Vec::with_capacity(d.saturating_sub(1));
        let mut bond_spectra = Vec::with_capacity(d.saturating_sub(1));
        for k in 0..d - 1 {
            let s = cores[k].shape().to_vec();
            let (rl, m, n, rr) = (s[0], s[1], s[2], s[3]);
            let mat = cores[k]
                .clone()
                .reshape(vec![rl * m * n, rr])?
                .into_matrix()?;
            let f = svd(&mat)?;
            let keep = max_rank.min(f.s.len());
            let discarded: f64 = f.s[keep..].iter().map(|x| x * x).sum::<f64>().sqrt();
            bond_errors.push(discarded);
            bond_spectra.push(f.s.clone());
            let (u_k, s_k, vt_k) = f.truncate(keep);
            cores[k] = u_k.into_tensor().reshape(vec![rl, m, n, keep])?;
            // diag(s) Vt folds into the right neighbour.
            let mut svt = vt_k;
            for i in 0..keep {
                for j in 0..svt.cols() {
                    svt.set(i, j, svt.get(i, j) * s_k[i]);
                }
            }
            let right_shape = cores[k + 1].shape().to_vec();
            let (_nrl, nm, nn, nrr) = (
                right_shape[0],
                right_shape[1],
                right_shape[2],
                right_shape[3],
            );
            let right = cores[k + 1]
                .clone()
                .reshape(vec![rr, nm * nn * nrr])?
                .into_matrix()?;
            cores[k + 1] = svt
                .matmul(&right)?
                .into_tensor()
                .reshape(vec![keep, nm, nn, nrr])?;
        }

        let cores = cores
            .into_iter()
            .map(TTCore::new)
            .collect::<Result<Vec<_>, _>>()?;
        Ok((TTMatrix::new(cores)?, bond_errors, bond_spectra))
    }
}

fn validate_modes(
    w: &DenseMatrix,
    row_modes: &[usize],
    col_modes: &[usize],
) -> Result<(), TtError> {
    if row_modes.is_empty() || col_modes.is_empty() {
        return Err(TtError::EmptyModes);
    }
    if row_modes.len() != col_modes.len() {
        return Err(TtError::ModeArity {
            rows: row_modes.len(),
            cols: col_modes.len(),
        });
    }
    let rp: usize = row_modes.iter().product();
    if rp != w.rows() {
        return Err(TtError::RowModeProduct {
            modes: row_modes.to_vec(),
            product: rp,
            expected: w.rows(),
        });
    }
    let cp: usize = col_modes.iter().product();
    if cp != w.cols() {
        return Err(TtError::ColModeProduct {
            modes: col_modes.to_vec(),
            product: cp,
            expected: w.cols(),
        });
    }
    Ok(())
}

/// Sequential TT-SVD of a dense matrix under the given mode split, with
/// every rank capped at `max_rank`.
///
/// The matrix is reshaped to (m_1, ..., m_d, n_1, ..., n_d), permuted to
/// the interleaved (m_1, n_1, ..., m_d, n_d) layout, then repeatedly
/// unfolded, thin-SVD'd, truncated, and the weight carried rightward. The
/// result is left-orthogonal with the weight in the last core.
pub fn decompose(
    w: &DenseMatrix,
    row_modes: &[usize],
    col_modes: &[usize],
    max_rank: usize,
) -> Result<TTMatrix, TtError> {
    if max_rank == 0 {
        return Err(TtError::ZeroMaxRank);
    }
    validate_modes(w, row_modes, col_modes)?;
    let d = row_modes.len();

    let mut split_shape = Vec::with_capacity(2 * d);
    split_shape.extend_from_slice(row_modes);
    split_shape.extend_from_slice(col_modes);
    let split = w.clone().into_tensor().reshape(split_shape)?;
    // Interleave row and column axes: (m_1, n_1, m_2, n_2, ...).
    let mut perm = Vec::with_capacity(2 * d);
    for k in 0..d {
        perm.push(k);
        perm.push(d + k);
    }
    let interleaved = split.permute(&perm);

    let mut cores = Vec::with_capacity(d);
    let mut remainder = interleaved.into_data();
    let mut left_rank = 1usize;
    for k in 0..d - 1 {
        let mode = row_modes[k] * col_modes[k];
        let rest: usize = (k + 1..d).map(|j| row_modes[j] * col_modes[j]).product();
        let unfolding = DenseMatrix::new(left_rank * mode, rest, remainder)?;
        let f = svd(&unfolding)?;
        let keep = max_rank.min(f.s.len());
        let (u_k, s_k, vt_k) = f.truncate(keep);
        cores.push(TTCore::new(u_k.into_tensor().reshape(vec![
            left_rank,
            row_modes[k],
            col_modes[k],
            keep,
        ])?)?);
        let mut svt = vt_k;
        for i in 0..keep {
            for j in 0..svt.cols() {
                svt.set(i, j, svt.get(i, j) * s_k[i]);
            }
        }
        remainder = svt.into_data();
        left_rank = keep;
    }
    cores.push(TTCore::new(DenseTensor::new(
        vec![left_rank, row_modes[d - 1], col_modes[d - 1], 1],
        remainder,
    )?)?);
    TTMatrix::new(cores)
}

/// Exact TT-ranks of a matrix under a mode split: measures the true bond
/// spectra and counts singular values above 1e-13 of the largest at each
/// bond.
pub fn exact_tt_ranks(
    w: &DenseMatrix,
    row_modes: &[usize],
    col_modes: &[usize],
) -> Result<RankDistribution, TtError> {
    validate_modes(w, row_modes, col_modes)?;
    let d = row_modes.len();
    let full = decompose(w, row_modes, col_modes, usize::MAX >> 1)?;
    let (_, _, spectra) = full.recompress(usize::MAX >> 1)?;
    let mut ranks = vec![1usize; d + 1];
    for (k, spectrum) in spectra.iter().enumerate() {
        let floor = 1e-13 * spectrum.first().copied().unwrap_or(0.0);
        ranks[k + 1] = spectrum.iter().filter(|&&x| x > floor).count().max(1);
    }
    RankDistribution::new(ranks)
}
