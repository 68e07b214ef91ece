//! Linear-layer forward passes in three parametrizations — dense, low-rank
//! two-factor, and TT — together with the analytic multiply-add model that
//! prices each one.
//!
//! Flops are counted as 2 per multiply-add (the 2MNK convention); bias adds
//! and activations are excluded. The TT count assumes the strict
//! left-to-right contraction the forward pass actually performs, so the
//! formulas are exact for this implementation, not estimates.

use crate::tensor::{matmul_raw, DenseMatrix, TensorError};
use crate::tt::{RankDistribution, TTMatrix, TtError};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Errors from layer evaluation and report assembly.
#[derive(Debug, Error)]
pub enum LinopError {
    #[error("bias has length {got}, expected {expected}")]
    BiasLength { expected: usize, got: usize },
    #[error("input has {got} columns but the layer expects {expected}")]
    InputWidth { expected: usize, got: usize },
    #[error("low-rank factors disagree: w1 is {w1_rows}x{w1_cols}, w2 is {w2_rows}x{w2_cols}")]
    FactorShapes {
        w1_rows: usize,
        w1_cols: usize,
        w2_rows: usize,
        w2_cols: usize,
    },
    #[error("inner dimension {d} exceeds min({m}, {n})")]
    InnerTooLarge { d: usize, m: usize, n: usize },
    #[error("flop report needs at least one layer")]
    EmptyReport,
    #[error("layer {name:?} has a zero dimension ({m} x {n}, batch {k})")]
    ZeroLayerDim {
        name: String,
        m: usize,
        n: usize,
        k: usize,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Tt(#[from] TtError),
}

/// Two-factor parametrization W = W1 W2 with inner dimension D.
#[derive(Debug, Clone)]
pub struct LowRankFactors {
    w1: DenseMatrix,
    w2: DenseMatrix,
}

impl LowRankFactors {
    pub fn new(w1: DenseMatrix, w2: DenseMatrix) -> Result<Self, LinopError> {
        if w1.cols() != w2.rows() {
            return Err(LinopError::FactorShapes {
                w1_rows: w1.rows(),
                w1_cols: w1.cols(),
                w2_rows: w2.rows(),
                w2_cols: w2.cols(),
            });
        }
        let d = w1.cols();
        if d > w1.rows().min(w2.cols()) {
            return Err(LinopError::InnerTooLarge {
                d,
                m: w1.rows(),
                n: w2.cols(),
            });
        }
        Ok(Self { w1, w2 })
    }

    pub fn w1(&self) -> &DenseMatrix {
        &self.w1
    }

    pub fn w2(&self) -> &DenseMatrix {
        &self.w2
    }

    pub(crate) fn factors_mut(&mut self) -> (&mut DenseMatrix, &mut DenseMatrix) {
        (&mut self.w1, &mut self.w2)
    }

    pub fn svd_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }

    pub fn parameter_count(&self) -> usize {
        self.w1.data().len() + self.w2.data().len()
    }
}

fn check_bias(b: &[f64], n: usize) -> Result<(), LinopError> {
    if b.len() != n {
        return Err(LinopError::BiasLength {
            expected: n,
            got: b.len(),
        });
    }
    Ok(())
}

fn add_bias(mut y: DenseMatrix, b: &[f64]) -> DenseMatrix {
    let cols = y.cols();
    for row in 0..y.rows() {
        let start = row * cols;
        for (j, &bv) in b.iter().enumerate() {
            y.data_mut()[start + j] += bv;
        }
    }
    y
}

/// Row-wise x W + b for a dense kernel.
pub fn dense_forward(
    x: &DenseMatrix,
    w: &DenseMatrix,
    b: &[f64],
) -> Result<DenseMatrix, LinopError> {
    check_bias(b, w.cols())?;
    let y = x.matmul(w)?;
    Ok(add_bias(y, b))
}

/// ((x W1) W2) + b — the reassociated order that never forms W1 W2.
pub fn low_rank_forward(
    x: &DenseMatrix,
    f: &LowRankFactors,
    b: &[f64],
) -> Result<DenseMatrix, LinopError> {
    check_bias(b, f.output_dim())?;
    let y = x.matmul(&f.w1)?.matmul(&f.w2)?;
    Ok(add_bias(y, b))
}

/// Step extents for one core contraction. With d cores and batch K, step k
/// reshapes the running tensor to (a, b, c, r) = (K, m_k, rest, r_{k-1}) and
/// multiplies by the core unfolded as (r_{k-1} m_k) x (n_k r_k).
#[derive(Debug, Clone, Copy)]
pub(crate) struct TtStepDims {
    pub a: usize,
    pub b: usize,
    pub c: usize,
    pub r: usize,
    pub n: usize,
    pub rr: usize,
}

/// Everything the reverse pass needs: the permuted matrix fed into each
/// core multiplication.
#[derive(Debug, Clone)]
pub(crate) struct TtTrace {
    pub permuted: Vec<Vec<f64>>,
    pub dims: Vec<TtStepDims>,
}

/// Reorders a flat (a, b, c, r) tensor to (a, c, r, b).
pub(crate) fn permute_abcr_to_acrb(
    input: &[f64],
    a: usize,
    b: usize,
    c: usize,
    r: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; input.len()];
    for ia in 0..a {
        for ib in 0..b {
            for ic in 0..c {
                let src_base = ((ia * b + ib) * c + ic) * r;
                let dst_base = (ia * c + ic) * r;
                for ir in 0..r {
                    out[(dst_base + ir) * b + ib] = input[src_base + ir];
                }
            }
        }
    }
    out
}

/// Inverse of [`permute_abcr_to_acrb`].
pub(crate) fn permute_acrb_to_abcr(
    input: &[f64],
    a: usize,
    b: usize,
    c: usize,
    r: usize,
) -> Vec<f64> {
    let mut out = vec![0.0; input.len()];
    for ia in 0..a {
        for ib in 0..b {
            for ic in 0..c {
                let dst_base = ((ia * b + ib) * c + ic) * r;
                let src_base = (ia * c + ic) * r;
                for ir in 0..r {
                    out[dst_base + ir] = input[(src_base + ir) * b + ib];
                }
            }
        }
    }
    out
}

/// Left-to-right TT application without the bias, recording the per-core
/// inputs so gradients can be pushed back through the same schedule.
///
/// The running tensor starts as x with layout (K, m_1..m_d); after step k
/// it is (K, m_{k+1}..m_d, n_1..n_k, r_k). Consumed row modes are traded
/// for produced column modes one core at a time, so the dense kernel is
/// never materialized.
pub(crate) fn tt_apply_traced(
    x: &DenseMatrix,
    tt: &TTMatrix,
) -> Result<(DenseMatrix, TtTrace), LinopError> {
    let big_m: usize = tt.rows();
    if x.cols() != big_m {
        return Err(LinopError::InputWidth {
            expected: big_m,
            got: x.cols(),
        });
    }
    let batch = x.rows();
    let d = tt.order();
    let row_modes = tt.row_modes();
    let col_modes = tt.col_modes();

    let mut running = x.data().to_vec();
    let mut trace = TtTrace {
        permuted: Vec::with_capacity(d),
        dims: Vec::with_capacity(d),
    };
    for (k, core) in tt.cores().iter().enumerate() {
        let (rl, m, n, rr) = core.shape();
        let suffix: usize = row_modes[k + 1..].iter().product();
        let prefix: usize = col_modes[..k].iter().product();
        let dims = TtStepDims {
            a: batch,
            b: m,
            c: suffix * prefix,
            r: rl,
            n,
            rr,
        };
        let permuted = permute_abcr_to_acrb(&running, dims.a, dims.b, dims.c, dims.r);
        running = matmul_raw(
            &permuted,
            dims.a * dims.c,
            dims.r * dims.b,
            core.tensor().data(),
            dims.n * dims.rr,
        );
        trace.permuted.push(permuted);
        trace.dims.push(dims);
    }
    let out = DenseMatrix::new(batch, tt.cols(), running)?;
    Ok((out, trace))
}

/// x multiplied by the TT kernel plus bias, contracting core by core.
pub fn tt_forward(x: &DenseMatrix, tt: &TTMatrix, b: &[f64]) -> Result<DenseMatrix, LinopError> {
    check_bias(b, tt.cols())?;
    let (y, _) = tt_apply_traced(x, tt)?;
    Ok(add_bias(y, b))
}

/// 2 M N K multiply-add flops of a dense layer.
pub fn dense_flops(m: usize, n: usize, k: usize) -> u64 {
    2 * m as u64 * n as u64 * k as u64
}

/// 2 M K D + 2 K N D flops of the reassociated two-factor layer.
pub fn low_rank_flops(m: usize, n: usize, k: usize, d: usize) -> u64 {
    2 * (m as u64) * (k as u64) * (d as u64) + 2 * (k as u64) * (n as u64) * (d as u64)
}

/// Flops of the left-to-right TT contraction:
/// sum over cores of 2 K (prod_{j<k} n_j)(prod_{j>k} m_j) r_{k-1} m_k n_k r_k.
pub fn tt_flops(
    row_modes: &[usize],
    col_modes: &[usize],
    ranks: &RankDistribution,
    k: usize,
) -> u64 {
    let d = row_modes.len();
    let r = ranks.ranks();
    let mut total = 0u64;
    for step in 0..d {
        let prefix: u64 = col_modes[..step].iter().map(|&x| x as u64).product();
        let suffix: u64 = row_modes[step + 1..].iter().map(|&x| x as u64).product();
        total += 2
            * k as u64
            * prefix
            * suffix
            * r[step] as u64
            * row_modes[step] as u64
            * col_modes[step] as u64
            * r[step + 1] as u64;
    }
    total
}

/// How a layer is parametrized for flop pricing.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariantFlopSpec {
    Dense,
    LowRank {
        svd_dim: usize,
    },
    Tt {
        row_modes: Vec<usize>,
        col_modes: Vec<usize>,
        max_rank: usize,
    },
}

/// One layer to price: name, dense dimensions, batch, and the variant.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub m: usize,
    pub n: usize,
    pub k: usize,
    pub variant: VariantFlopSpec,
}

impl LayerSpec {
    fn variant_flops(&self) -> u64 {
        match &self.variant {
            VariantFlopSpec::Dense => dense_flops(self.m, self.n, self.k),
            VariantFlopSpec::LowRank { svd_dim } => {
                low_rank_flops(self.m, self.n, self.k, *svd_dim)
            }
            VariantFlopSpec::Tt {
                row_modes,
                col_modes,
                max_rank,
            } => {
                let ranks = RankDistribution::capped(row_modes, col_modes, *max_rank);
                tt_flops(row_modes, col_modes, &ranks, self.k)
            }
        }
    }
}

/// Per-layer multiply-add counts for one variant against the dense
/// baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFlops {
    pub name: String,
    pub dense_flops: u64,
    pub variant_flops: u64,
}

/// Totals and the percentage of dense flops the variant uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlopReport {
    pub per_layer: Vec<LayerFlops>,
    pub total_dense: u64,
    pub total_variant: u64,
    pub percent: f64,
}

/// Assembles a flop report over one or more layers.
pub fn build_report(layers: &[LayerSpec]) -> Result<FlopReport, LinopError> {
    if layers.is_empty() {
        return Err(LinopError::EmptyReport);
    }
    for l in layers {
        if l.m == 0 || l.n == 0 || l.k == 0 {
            return Err(LinopError::ZeroLayerDim {
                name: l.name.clone(),
                m: l.m,
                n: l.n,
                k: l.k,
            });
        }
    }
    let per_layer: Vec<LayerFlops> = layers
        .iter()
        .map(|l| LayerFlops {
            name: l.name.clone(),
            dense_flops: dense_flops(l.m, l.n, l.k),
            variant_flops: l.variant_flops(),
        })
        .collect();
    let total_dense: u64 = per_layer.iter().map(|l| l.dense_flops).sum();
    let total_variant: u64 = per_layer.iter().map(|l| l.variant_flops).sum();
    Ok(FlopReport {
        per_layer,
        total_dense,
        total_variant,
        percent: 100.0 * total_variant as f64 / total_dense as f64,
    })
}

impl FlopReport {
    /// CSV with columns layer, dense_flops, variant_flops, percent; one row
    /// per layer and a trailing total row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,dense_flops,variant_flops,percent\n");
        for l in &self.per_layer {
            let pct = 100.0 * l.variant_flops as f64 / l.dense_flops as f64;
            out.push_str(&format!(
                "{},{},{},{}\n",
                l.name, l.dense_flops, l.variant_flops, pct
            ));
        }
        out.push_str(&format!(
            "total,{},{},{}\n",
            self.total_dense, self.total_variant, self.percent
        ));
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("flop report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::DenseTensor;
    use crate::tt::{decompose, TTCore};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut impl Rng, rows: usize, cols: usize) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    fn rel_err(a: &DenseMatrix, b: &DenseMatrix) -> f64 {
        let diff = a.sub(b).unwrap().frobenius_norm();
        let denom = b.frobenius_norm();
        if denom == 0.0 {
            diff
        } else {
            diff / denom
        }
    }

    /// Counter-instrumented dense reference: plain triple loop, 2 flops per
    /// multiply-add, bias not counted.
    fn counted_dense(x: &DenseMatrix, w: &DenseMatrix, b: &[f64]) -> (DenseMatrix, u64) {
        let mut count = 0u64;
        let mut y = DenseMatrix::zeros(x.rows(), w.cols());
        for i in 0..x.rows() {
            for j in 0..w.cols() {
                let mut acc = 0.0;
                for k in 0..w.rows() {
                    acc += x.get(i, k) * w.get(k, j);
                    count += 2;
                }
                y.set(i, j, acc + b[j]);
            }
        }
        (y, count)
    }

    fn counted_low_rank(x: &DenseMatrix, f: &LowRankFactors, b: &[f64]) -> (DenseMatrix, u64) {
        let (z, c1) = counted_dense(x, f.w1(), &vec![0.0; f.svd_dim()]);
        let (y, c2) = counted_dense(&z, f.w2(), b);
        (y, c1 + c2)
    }

    /// Counter-instrumented TT reference: same left-to-right schedule,
    /// explicit index arithmetic, independent of the library contraction.
    fn counted_tt(x: &DenseMatrix, tt: &TTMatrix) -> (DenseMatrix, u64) {
        let mut count = 0u64;
        let batch = x.rows();
        let mut running = x.data().to_vec();
        let d = tt.order();
        for k in 0..d {
            let (rl, m, n, rr) = tt.cores()[k].shape();
            let suffix: usize = tt.row_modes()[k + 1..].iter().product();
            let prefix: usize = tt.col_modes()[..k].iter().product();
            let c = suffix * prefix;
            let core = tt.cores()[k].tensor().data();
            let mut next = vec![0.0; batch * c * n * rr];
            for ia in 0..batch {
                for ic in 0..c {
                    for jn in 0..n {
                        for jr in 0..rr {
                            let mut acc = 0.0;
                            for ir in 0..rl {
                                for ib in 0..m {
                                    // running layout: (batch, m_k, c, r_{k-1})
                                    let xv = running[((ia * m + ib) * c + ic) * rl + ir];
                                    let gv = core[((ir * m + ib) * n + jn) * rr + jr];
                                    acc += xv * gv;
                                    count += 2;
                                }
                            }
                            next[((ia * c + ic) * n + jn) * rr + jr] = acc;
                        }
                    }
                }
            }
            running = next;
        }
        (DenseMatrix::new(batch, tt.cols(), running).unwrap(), count)
    }

    #[test]
    fn dense_forward_zero_input_gives_bias_rows() {
        let x = DenseMatrix::zeros(3, 4);
        let w = DenseMatrix::zeros(4, 2);
        let b = [1.5, -2.0];
        let y = dense_forward(&x, &w, &b).unwrap();
        for i in 0..3 {
            assert_eq!(y.row(i), &b);
        }
    }

    #[test]
    fn dense_forward_identity_kernel_passes_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let x = random_matrix(&mut rng, 2, 5);
        let y = dense_forward(&x, &DenseMatrix::identity(5), &[0.0; 5]).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn dense_forward_matches_matmul_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let x = random_matrix(&mut rng, 3, 4);
        let w = random_matrix(&mut rng, 4, 5);
        let b: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = dense_forward(&x, &w, &b).unwrap();
        let mut want = x.matmul(&w).unwrap();
        for i in 0..3 {
            for j in 0..5 {
                want.set(i, j, want.get(i, j) + b[j]);
            }
        }
        assert!(rel_err(&y, &want) <= 1e-12);
    }

    #[test]
    fn low_rank_identity_factor_equals_dense() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let x = random_matrix(&mut rng, 2, 4);
        let w = random_matrix(&mut rng, 4, 4);
        let b = [0.1, 0.2, 0.3, 0.4];
        let f = LowRankFactors::new(DenseMatrix::identity(4), w.clone()).unwrap();
        let got = low_rank_forward(&x, &f, &b).unwrap();
        let want = dense_forward(&x, &w, &b).unwrap();
        assert!(rel_err(&got, &want) <= 1e-12);
    }

    #[test]
    fn low_rank_zero_second_factor_gives_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let x = random_matrix(&mut rng, 3, 6);
        let f =
            LowRankFactors::new(random_matrix(&mut rng, 6, 2), DenseMatrix::zeros(2, 4)).unwrap();
        let b = [1.0, 2.0, 3.0, 4.0];
        let y = low_rank_forward(&x, &f, &b).unwrap();
        for i in 0..3 {
            assert_eq!(y.row(i), &b);
        }
    }

    #[test]
    fn low_rank_matches_reassociated_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let x = random_matrix(&mut rng, 2, 6);
        let f = LowRankFactors::new(random_matrix(&mut rng, 6, 2), random_matrix(&mut rng, 2, 4))
            .unwrap();
        let b: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = low_rank_forward(&x, &f, &b).unwrap();
        let dense_w = f.w1().matmul(f.w2()).unwrap();
        let want = dense_forward(&x, &dense_w, &b).unwrap();
        assert!(rel_err(&got, &want) <= 1e-12);
    }

    #[test]
    fn tt_forward_identity_kernel_passes_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let tt = decompose(&DenseMatrix::identity(8), &[2, 4], &[2, 4], 8).unwrap();
        let x = random_matrix(&mut rng, 3, 8);
        let y = tt_forward(&x, &tt, &[0.0; 8]).unwrap();
        assert!(rel_err(&y, &x) <= 1e-10);
    }

    #[test]
    fn tt_forward_basis_vector_selects_row() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let w = random_matrix(&mut rng, 8, 6);
        let tt = decompose(&w, &[2, 4], &[3, 2], 8).unwrap();
        let b: Vec<f64> = (0..6).map(|_| rng.random_range(-1.0..1.0)).collect();
        let dense = tt.reconstruct();
        for i in [0usize, 3, 7] {
            let mut e = DenseMatrix::zeros(1, 8);
            e.set(0, i, 1.0);
            let y = tt_forward(&e, &tt, &b).unwrap();
            for j in 0..6 {
                assert!((y.get(0, j) - (dense.get(i, j) + b[j])).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn tt_forward_matches_reconstruction_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(38);
        let w = random_matrix(&mut rng, 12, 8);
        let tt = decompose(&w, &[3, 2, 2], &[2, 2, 2], 4).unwrap();
        let x = random_matrix(&mut rng, 4, 12);
        let b: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
        let got = tt_forward(&x, &tt, &b).unwrap();
        let want = dense_forward(&x, &tt.reconstruct(), &b).unwrap();
        assert!(rel_err(&got, &want) <= 1e-8);
    }

    #[test]
    fn dense_flops_formula() {
        assert_eq!(dense_flops(1024, 2048, 1), 4_194_304);
        assert_eq!(dense_flops(1, 1, 1), 2);
        let mut rng = ChaCha8Rng::seed_from_u64(39);
        let x = random_matrix(&mut rng, 3, 4);
        let w = random_matrix(&mut rng, 4, 5);
        let (_, counted) = counted_dense(&x, &w, &[0.0; 5]);
        assert_eq!(counted, dense_flops(4, 5, 3));
    }

    #[test]
    fn low_rank_flops_formula() {
        assert_eq!(low_rank_flops(1024, 2048, 1, 256), 1_572_864);
        assert_eq!(low_rank_flops(1, 1, 1, 1), 4);
        // Break-even inner dimension D = MN/(M+N).
        assert_eq!(low_rank_flops(2, 2, 7, 1), dense_flops(2, 2, 7));
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let x = random_matrix(&mut rng, 3, 6);
        let f = LowRankFactors::new(random_matrix(&mut rng, 6, 2), random_matrix(&mut rng, 2, 4))
            .unwrap();
        let (_, counted) = counted_low_rank(&x, &f, &[0.0; 4]);
        assert_eq!(counted, low_rank_flops(6, 4, 3, 2));
    }

    #[test]
    fn tt_flops_degenerate_single_core_equals_dense() {
        let ranks = RankDistribution::new(vec![1, 1]).unwrap();
        assert_eq!(tt_flops(&[16], &[24], &ranks, 5), dense_flops(16, 24, 5));
    }

    #[test]
    fn tt_flops_scalar_modes() {
        let ranks = RankDistribution::new(vec![1, 3, 2, 1]).unwrap();
        let want: u64 = 2 * (3 + 3 * 2 + 2);
        assert_eq!(tt_flops(&[1, 1, 1], &[1, 1, 1], &ranks, 1), want);
    }

    #[test]
    fn tt_flops_table_configuration() {
        let ranks = RankDistribution::capped(&[2, 2, 256], &[2, 2, 512], 4);
        let total = tt_flops(&[2, 2, 256], &[2, 2, 512], &ranks, 1);
        assert_eq!(total, 16_384 + 65_536 + 4_194_304);
        assert_eq!(total, 4_276_224);
    }

    #[test]
    fn tt_flops_matches_instrumented_contraction() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for (row_modes, col_modes, cap, k) in [
            (vec![2usize, 4], vec![3usize, 2], 3usize, 2usize),
            (vec![2, 2, 2], vec![2, 2, 2], 2, 5),
            (vec![3, 2, 2], vec![2, 3, 2], 4, 1),
        ] {
            let rows: usize = row_modes.iter().product();
            let cols: usize = col_modes.iter().product();
            let w = random_matrix(&mut rng, rows, cols);
            let tt = decompose(&w, &row_modes, &col_modes, cap).unwrap();
            let x = random_matrix(&mut rng, k, rows);
            let (y_ref, counted) = counted_tt(&x, &tt);
            let formula = tt_flops(&row_modes, &col_modes, &tt.rank_distribution(), k);
            assert_eq!(counted, formula);
            let y = tt_forward(&x, &tt, &vec![0.0; cols]).unwrap();
            assert!(rel_err(&y, &y_ref) <= 1e-12);
        }
    }

    #[test]
    fn tt_flops_scales_linearly_in_batch() {
        let ranks = RankDistribution::capped(&[2, 2, 16], &[2, 2, 32], 4);
        let one = tt_flops(&[2, 2, 16], &[2, 2, 32], &ranks, 1);
        let seven = tt_flops(&[2, 2, 16], &[2, 2, 32], &ranks, 7);
        assert_eq!(seven, 7 * one);
    }

    #[test]
    fn report_single_dense_layer_is_hundred_percent() {
        let report = build_report(&[LayerSpec {
            name: "layer0".into(),
            m: 64,
            n: 32,
            k: 4,
            variant: VariantFlopSpec::Dense,
        }])
        .unwrap();
        assert_eq!(report.percent, 100.0);
        assert_eq!(report.total_dense, report.total_variant);
    }

    #[test]
    fn report_table_configuration_percent() {
        let report = build_report(&[LayerSpec {
            name: "kernel".into(),
            m: 1024,
            n: 2048,
            k: 1,
            variant: VariantFlopSpec::Tt {
                row_modes: vec![2, 2, 256],
                col_modes: vec![2, 2, 512],
                max_rank: 4,
            },
        }])
        .unwrap();
        assert!((report.percent - 101.953125).abs() < 1e-9);
    }

    #[test]
    fn report_break_even_low_rank_plus_dense() {
        let report = build_report(&[
            LayerSpec {
                name: "dense".into(),
                m: 8,
                n: 8,
                k: 3,
                variant: VariantFlopSpec::Dense,
            },
            LayerSpec {
                name: "lowrank".into(),
                m: 8,
                n: 8,
                k: 3,
                variant: VariantFlopSpec::LowRank { svd_dim: 4 },
            },
        ])
        .unwrap();
        assert_eq!(report.percent, 100.0);
        let totals: u64 = report.per_layer.iter().map(|l| l.dense_flops).sum();
        assert_eq!(totals, report.total_dense);
    }

    #[test]
    fn report_rejects_empty_layer_list() {
        assert!(build_report(&[]).is_err());
        let zero = LayerSpec {
            name: "z".into(),
            m: 0,
            n: 4,
            k: 1,
            variant: VariantFlopSpec::Dense,
        };
        assert!(build_report(&[zero]).is_err());
    }

    #[test]
    fn report_csv_shape() {
        let report = build_report(&[LayerSpec {
            name: "l0".into(),
            m: 2,
            n: 2,
            k: 1,
            variant: VariantFlopSpec::Dense,
        }])
        .unwrap();
        let csv = report.to_csv();
        assert!(csv.starts_with("layer,dense_flops,variant_flops,percent\n"));
        assert!(csv.contains("l0,8,8,100\n"));
        assert!(csv.ends_with("total,8,8,100\n"));
    }

    #[test]
    fn permutes_invert_each_other() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let (a, b, c, r) = (2usize, 3usize, 4usize, 5usize);
        let data: Vec<f64> = (0..a * b * c * r)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let there = permute_abcr_to_acrb(&data, a, b, c, r);
        let back = permute_acrb_to_abcr(&there, a, b, c, r);
        assert_eq!(back, data);
    }

    #[test]
    fn tt_forward_rejects_width_mismatch() {
        let core = TTCore::new(DenseTensor::zeros(vec![1, 4, 3, 1])).unwrap();
        let tt = TTMatrix::new(vec![core]).unwrap();
        let x = DenseMatrix::zeros(2, 5);
        assert!(tt_forward(&x, &tt, &[0.0; 3]).is_err());
    }
}
