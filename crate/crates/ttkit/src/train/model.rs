//! Trainable model: the recurrent cell plus a dense output projection that
//! maps hidden states to vocabulary logits. The projection is always dense;
//! only the cell kernel is ever compressed.

use crate::lstm::{glorot_uniform, init_params_from_rng, KernelVariant, LSTMParams, VariantSpec};
use crate::tensor::{DenseMatrix, DenseTensor};
use crate::train::TrainError;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Cell parameters plus the output projection.
#[derive(Debug, Clone)]
pub struct ModelParams {
    pub cell: LSTMParams,
    pub proj_w: DenseMatrix,
    pub proj_b: Vec<f64>,
}

/// Gradient of every trainable leaf, mirroring [`ModelParams`]: per-core
/// tensors for a TT kernel, per-factor matrices for low-rank, one matrix
/// for dense.
#[derive(Debug, Clone)]
pub enum KernelGradients {
    Dense(DenseMatrix),
    LowRank { w1: DenseMatrix, w2: DenseMatrix },
    Tt(Vec<DenseTensor>),
}

#[derive(Debug, Clone)]
pub struct ModelGradients {
    pub kernel: KernelGradients,
    pub bias: Vec<f64>,
    pub proj_w: DenseMatrix,
    pub proj_b: Vec<f64>,
}

impl ModelParams {
    /// Builds the model from one seeded RNG stream: the kernel is drawn
    /// first (Glorot uniform, then decomposed per variant), the projection
    /// second, so a seed pins every parameter bit.
    pub fn init(
        input_size: usize,
        hidden_size: usize,
        variant: &VariantSpec,
        seed: u64,
    ) -> Result<Self, TrainError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cell = init_params_from_rng(input_size, hidden_size, variant, &mut rng)?;
        let proj_w = glorot_uniform(&mut rng, hidden_size, input_size);
        let proj_b = vec![0.0; input_size];
        Ok(Self {
            cell,
            proj_w,
            proj_b,
        })
    }

    pub fn vocab_size(&self) -> usize {
        self.proj_w.cols()
    }

    /// Zero gradients shaped like this parameter tree.
    pub fn zero_gradients(&self) -> ModelGradients {
        let kernel = match &self.cell.kernel {
            KernelVariant::Dense(w) => {
                KernelGradients::Dense(DenseMatrix::zeros(w.rows(), w.cols()))
            }
            KernelVariant::LowRank(f) => KernelGradients::LowRank {
                w1: DenseMatrix::zeros(f.w1().rows(), f.w1().cols()),
                w2: DenseMatrix::zeros(f.w2().rows(), f.w2().cols()),
            },
            KernelVariant::Tt(tt) => KernelGradients::Tt(
                tt.cores()
                    .iter()
                    .map(|c| DenseTensor::zeros(c.tensor().shape().to_vec()))
                    .collect(),
            ),
        };
        ModelGradients {
            kernel,
            bias: vec![0.0; self.cell.bias.len()],
            proj_w: DenseMatrix::zeros(self.proj_w.rows(), self.proj_w.cols()),
            proj_b: vec![0.0; self.proj_b.len()],
        }
    }

    /// Flat views of every trainable leaf in a pinned order: kernel leaves,
    /// bias, projection weight, projection bias. Must stay aligned with
    /// [`ModelGradients::leaves`].
    pub fn leaves_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        match &mut self.cell.kernel {
            KernelVariant::Dense(w) => out.push(w.data_mut()),
            KernelVariant::LowRank(f) => {
                let (w1, w2) = f.factors_mut();
                out.push(w1.data_mut());
                out.push(w2.data_mut());
            }
            KernelVariant::Tt(tt) => {
                for core in tt.cores_mut() {
                    out.push(core.tensor_mut().data_mut());
                }
            }
        }
        out.push(&mut self.cell.bias);
        out.push(self.proj_w.data_mut());
        out.push(&mut self.proj_b);
        out
    }
}

impl ModelGradients {
    pub fn leaves(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        match &self.kernel {
            KernelGradients::Dense(w) => out.push(w.data()),
            KernelGradients::LowRank { w1, w2 } => {
                out.push(w1.data());
                out.push(w2.data());
            }
            KernelGradients::Tt(cores) => {
                for c in cores {
                    out.push(c.data());
                }
            }
        }
        out.push(&self.bias);
        out.push(self.proj_w.data());
        out.push(&self.proj_b);
        out
    }

    pub fn leaves_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        match &mut self.kernel {
            KernelGradients::Dense(w) => out.push(w.data_mut()),
            KernelGradients::LowRank { w1, w2 } => {
                out.push(w1.data_mut());
                out.push(w2.data_mut());
            }
            KernelGradients::Tt(cores) => {
                for c in cores {
                    out.push(c.data_mut());
                }
            }
        }
        out.push(&mut self.bias);
        out.push(self.proj_w.data_mut());
        out.push(&mut self.proj_b);
        out
    }

    /// Euclidean norm over every coordinate.
    pub fn global_norm(&self) -> f64 {
        self.leaves()
            .iter()
            .flat_map(|l| l.iter())
            .map(|&g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.leaves()
            .iter()
            .all(|l| l.iter().all(|g| g.is_finite()))
    }
}
