//! LSTM recurrent cell with a swappable gate-kernel parametrization:
//! dense, low-rank two-factor, or TT.
//!
//! One step computes `gates = [inputs | h] K + bias`, splits the columns
//! into the four blocks i, j, f, o in that order, and updates
//! `new_c = c * sigmoid(f + forget_bias) + sigmoid(i) * tanh(j)`,
//! `new_h = tanh(new_c) * sigmoid(o)`. The kernel has shape
//! (input_size + hidden_size) x 4 hidden_size regardless of variant; for
//! the TT variant the trained parameters are the cores themselves and the
//! dense kernel exists only at initialization.

use crate::io::IoError;
use crate::linops::{self, LinopError, LowRankFactors, TtTrace};
use crate::tensor::{DenseMatrix, TensorError};
use crate::tt::{decompose, TTMatrix, TtError};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;
use thiserror::Error;

/// Errors from cell construction and evaluation.
#[derive(Debug, Error)]
pub enum CellError {
    #[error("inputs are {got_rows}x{got_cols}, expected {rows}x{cols}")]
    InputShape {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("state c is {c_rows}x{c_cols} but h is {h_rows}x{h_cols}")]
    StateShape {
        c_rows: usize,
        c_cols: usize,
        h_rows: usize,
        h_cols: usize,
    },
    #[error("kernel is {got_rows}x{got_cols}, expected {rows}x{cols}")]
    KernelShape {
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("bias has length {got}, expected {expected}")]
    BiasLength { expected: usize, got: usize },
    #[error("sequence step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<CellError>,
    },
    #[error("empty input sequence")]
    EmptySequence,
    #[error("checkpoint manifest is missing variable {0:?}")]
    MissingVariable(String),
    #[error(transparent)]
    Linop(#[from] LinopError),
    #[error(transparent)]
    Tt(#[from] TtError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Cell and hidden activations for a batch.
#[derive(Debug, Clone)]
pub struct LSTMState {
    pub c: DenseMatrix,
    pub h: DenseMatrix,
}

impl LSTMState {
    pub fn new(c: DenseMatrix, h: DenseMatrix) -> Result<Self, CellError> {
        if c.rows() != h.rows() || c.cols() != h.cols() {
            return Err(CellError::StateShape {
                c_rows: c.rows(),
                c_cols: c.cols(),
                h_rows: h.rows(),
                h_cols: h.cols(),
            });
        }
        Ok(Self { c, h })
    }

    pub fn zeros(batch: usize, hidden: usize) -> Self {
        Self {
            c: DenseMatrix::zeros(batch, hidden),
            h: DenseMatrix::zeros(batch, hidden),
        }
    }
}

/// Gate-kernel parametrization.
#[derive(Debug, Clone)]
pub enum KernelVariant {
    Dense(DenseMatrix),
    LowRank(LowRankFactors),
    Tt(TTMatrix),
}

impl KernelVariant {
    pub fn input_dim(&self) -> usize {
        match self {
            KernelVariant::Dense(w) => w.rows(),
            KernelVariant::LowRank(f) => f.input_dim(),
            KernelVariant::Tt(tt) => tt.rows(),
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            KernelVariant::Dense(w) => w.cols(),
            KernelVariant::LowRank(f) => f.output_dim(),
            KernelVariant::Tt(tt) => tt.cols(),
        }
    }

    /// Trainable entries of this kernel.
    pub fn parameter_count(&self) -> usize {
        match self {
            KernelVariant::Dense(w) => w.data().len(),
            KernelVariant::LowRank(f) => f.parameter_count(),
            KernelVariant::Tt(tt) => tt.parameter_count(),
        }
    }
}

/// Which kernel to build at initialization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VariantSpec {
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

/// Cell parameters: kernel, bias of length 4H, and the forget-gate shift.
#[derive(Debug, Clone)]
pub struct LSTMParams {
    pub kernel: KernelVariant,
    pub bias: Vec<f64>,
    pub forget_bias: f64,
    input_size: usize,
    hidden_size: usize,
}

impl LSTMParams {
    pub fn new(
        kernel: KernelVariant,
        bias: Vec<f64>,
        forget_bias: f64,
        input_size: usize,
        hidden_size: usize,
    ) -> Result<Self, CellError> {
        let rows = input_size + hidden_size;
        let cols = 4 * hidden_size;
        if kernel.input_dim() != rows || kernel.output_dim() != cols {
            return Err(CellError::KernelShape {
                rows,
                cols,
                got_rows: kernel.input_dim(),
                got_cols: kernel.output_dim(),
            });
        }
        if bias.len() != cols {
            return Err(CellError::BiasLength {
                expected: cols,
                got: bias.len(),
            });
        }
        Ok(Self {
            kernel,
            bias,
            forget_bias,
            input_size,
            hidden_size,
        })
    }

    pub fn input_size(&self) -> usize {
        self.input_size
    }

    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }
}

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// What the kernel application recorded for the reverse pass.
pub(crate) enum KernelTrace {
    Dense,
    LowRank { z: DenseMatrix },
    Tt(TtTrace),
}

/// Kernel multiply without the bias, dispatched on the variant.
pub(crate) fn apply_kernel(
    kernel: &KernelVariant,
    x: &DenseMatrix,
) -> Result<(DenseMatrix, KernelTrace), CellError> {
    match kernel {
        KernelVariant::Dense(w) => Ok((x.matmul(w)?, KernelTrace::Dense)),
        KernelVariant::LowRank(f) => {
            let z = x.matmul(f.w1())?;
            let y = z.matmul(f.w2())?;
            Ok((y, KernelTrace::LowRank { z }))
        }
        KernelVariant::Tt(tt) => {
            let (y, trace) = linops::tt_apply_traced(x, tt)?;
            Ok((y, KernelTrace::Tt(trace)))
        }
    }
}

/// [inputs | h] with inputs first.
pub(crate) fn concat_columns(inputs: &DenseMatrix, h: &DenseMatrix) -> DenseMatrix {
    let batch = inputs.rows();
    let total = inputs.cols() + h.cols();
    let mut out = DenseMatrix::zeros(batch, total);
    for r in 0..batch {
        let dst = &mut out.data_mut()[r * total..(r + 1) * total];
        dst[..inputs.cols()].copy_from_slice(inputs.row(r));
        dst[inputs.cols()..].copy_from_slice(h.row(r));
    }
    out
}

/// Activated gate blocks and the states produced by one step; kept so the
/// training module can run the same step with gradients.
pub(crate) struct StepTrace {
    pub concat: DenseMatrix,
    pub kernel_trace: KernelTrace,
    pub i_gate: DenseMatrix,
    pub j_gate: DenseMatrix,
    pub f_gate: DenseMatrix,
    pub o_gate: DenseMatrix,
    pub c_prev: DenseMatrix,
    pub tanh_new_c: DenseMatrix,
}

pub(crate) fn cell_step_traced(
    params: &LSTMParams,
    inputs: &DenseMatrix,
    state: &LSTMState,
) -> Result<(DenseMatrix, LSTMState, StepTrace), CellError> {
    let (batch, hidden) = (inputs.rows(), params.hidden_size);
    if inputs.cols() != params.input_size {
        return Err(CellError::InputShape {
            rows: batch,
            cols: params.input_size,
            got_rows: inputs.rows(),
            got_cols: inputs.cols(),
        });
    }
    if state.h.rows() != batch || state.h.cols() != hidden {
        return Err(CellError::StateShape {
            c_rows: state.c.rows(),
            c_cols: state.c.cols(),
            h_rows: state.h.rows(),
            h_cols: state.h.cols(),
        });
    }

    let concat = concat_columns(inputs, &state.h);
    let (mut gates, kernel_trace) = apply_kernel(&params.kernel, &concat)?;
    let cols = gates.cols();
    for r in 0..batch {
        let row = &mut gates.data_mut()[r * cols..(r + 1) * cols];
        for (g, &b) in row.iter_mut().zip(&params.bias) {
            *g += b;
        }
    }

    // Column blocks in i, j, f, o order.
    let block = |offset: usize, f: &dyn Fn(f64) -> f64| {
        DenseMatrix::from_fn(batch, hidden, |r, c| f(gates.get(r, offset * hidden + c)))
    };
    let i_gate = block(0, &sigmoid);
    let j_gate = block(1, &|x| x.tanh());
    let fb = params.forget_bias;
    let f_gate = block(2, &|x| sigmoid(x + fb));
    let o_gate = block(3, &sigmoid);

    let new_c = DenseMatrix::from_fn(batch, hidden, |r, c| {
        state.c.get(r, c) * f_gate.get(r, c) + i_gate.get(r, c) * j_gate.get(r, c)
    });
    let tanh_new_c = new_c.map(f64::tanh);
    let new_h = tanh_new_c.hadamard(&o_gate)?;

    let trace = StepTrace {
        concat,
        kernel_trace,
        i_gate,
        j_gate,
        f_gate,
        o_gate,
        c_prev: state.c.clone(),
        tanh_new_c,
    };
    let new_state = LSTMState {
        c: new_c,
        h: new_h.clone(),
    };
    Ok((new_h, new_state, trace))
}

/// One cell step: returns the new hidden activations and the state tuple.
pub fn cell_step(
    params: &LSTMParams,
    inputs: &DenseMatrix,
    state: &LSTMState,
) -> Result<(DenseMatrix, LSTMState), CellError> {
    let (h, s, _) = cell_step_traced(params, inputs, state)?;
    Ok((h, s))
}

/// Threads the state through the sequence; the output list has one entry
/// per input step.
pub fn unroll(
    params: &LSTMParams,
    sequence: &[DenseMatrix],
    initial: &LSTMState,
) -> Result<(Vec<DenseMatrix>, LSTMState), CellError> {
    if sequence.is_empty() {
        return Err(CellError::EmptySequence);
    }
    let mut state = initial.clone();
    let mut outputs = Vec::with_capacity(sequence.len());
    for (step, inputs) in sequence.iter().enumerate() {
        let (h, next) = cell_step(params, inputs, &state).map_err(|e| CellError::AtStep {
            step,
            source: Box::new(e),
        })?;
        outputs.push(h);
        state = next;
    }
    Ok((outputs, state))
}

/// Glorot-uniform sample with fan_in + fan_out from the kernel shape.
pub(crate) fn glorot_uniform(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
}

/// Builds cell parameters from a seeded dense Glorot kernel: the TT variant
/// decomposes it, the low-rank variant keeps truncated SVD factors with the
/// singular weight split evenly, and the bias starts at zero with forget
/// bias 1.0.
pub fn init_params(
    input_size: usize,
    hidden_size: usize,
    variant: &VariantSpec,
    seed: u64,
) -> Result<LSTMParams, CellError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    init_params_from_rng(input_size, hidden_size, variant, &mut rng)
}

pub(crate) fn init_params_from_rng(
    input_size: usize,
    hidden_size: usize,
    variant: &VariantSpec,
    rng: &mut ChaCha8Rng,
) -> Result<LSTMParams, CellError> {
    let rows = input_size + hidden_size;
    let cols = 4 * hidden_size;
    let dense = glorot_uniform(rng, rows, cols);
    let kernel = match variant {
        VariantSpec::Dense => KernelVariant::Dense(dense),
        VariantSpec::LowRank { svd_dim } => {
            let f = crate::tensor::svd(&dense)?;
            let (u, s, vt) = f.truncate(*svd_dim);
            let mut w1 = u;
            let mut w2 = vt;
            for j in 0..s.len() {
                let root = s[j].sqrt();
                for i in 0..w1.rows() {
                    w1.set(i, j, w1.get(i, j) * root);
                }
                for i in 0..w2.cols() {
                    w2.set(j, i, w2.get(j, i) * root);
                }
            }
            KernelVariant::LowRank(LowRankFactors::new(w1, w2)?)
        }
        VariantSpec::Tt {
            row_modes,
            col_modes,
            max_rank,
        } => KernelVariant::Tt(decompose(&dense, row_modes, col_modes, *max_rank)?),
    };
    LSTMParams::new(kernel, vec![0.0; cols], 1.0, input_size, hidden_size)
}

/// Checkpoint manifest: names every stored variable plus the metadata
/// needed to rebuild the cell.
#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub variant: VariantSpec,
    pub input_size: usize,
    pub hidden_size: usize,
    pub forget_bias: f64,
    pub ranks: Option<Vec<usize>>,
    pub seed: Option<u64>,
    pub variables: Vec<CheckpointVariable>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CheckpointVariable {
    pub name: String,
    pub file: String,
}

/// Writes `manifest.json` plus one TTK1 binary per variable into `dir`.
pub fn save_checkpoint(
    dir: &Path,
    params: &LSTMParams,
    seed: Option<u64>,
) -> Result<(), CellError> {
    fs::create_dir_all(dir).map_err(IoError::from)?;
    let mut variables = Vec::new();
    let mut write_var = |name: &str, write: &dyn Fn(&mut Vec<u8>) -> Result<(), IoError>| {
        let file = format!("{name}.bin");
        let mut buf = Vec::new();
        write(&mut buf)?;
        fs::write(dir.join(&file), buf).map_err(IoError::from)?;
        variables.push(CheckpointVariable {
            name: name.to_string(),
            file,
        });
        Ok::<(), CellError>(())
    };

    let (variant, ranks) = match &params.kernel {
        KernelVariant::Dense(w) => {
            write_var("kernel", &|buf| crate::io::write_matrix(buf, w))?;
            (VariantSpec::Dense, None)
        }
        KernelVariant::LowRank(f) => {
            write_var("w1", &|buf| crate::io::write_matrix(buf, f.w1()))?;
            write_var("w2", &|buf| crate::io::write_matrix(buf, f.w2()))?;
            (
                VariantSpec::LowRank {
                    svd_dim: f.svd_dim(),
                },
                None,
            )
        }
        KernelVariant::Tt(tt) => {
            for (k, core) in tt.cores().iter().enumerate() {
                write_var(&format!("core_{k}"), &|buf| {
                    crate::io::write_tensor(buf, core.tensor())
                })?;
            }
            (
                VariantSpec::Tt {
                    row_modes: tt.row_modes().to_vec(),
                    col_modes: tt.col_modes().to_vec(),
                    max_rank: tt.rank_distribution().max_rank(),
                },
                Some(tt.rank_distribution().ranks().to_vec()),
            )
        }
    };
    let bias_tensor =
        crate::tensor::DenseTensor::new(vec![params.bias.len()], params.bias.clone())?;
    write_var("bias", &|buf| crate::io::write_tensor(buf, &bias_tensor))?;

    let manifest = CheckpointManifest {
        variant,
        input_size: params.input_size,
        hidden_size: params.hidden_size,
        forget_bias: params.forget_bias,
        ranks,
        seed,
        variables,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(IoError::from)?;
    fs::write(dir.join("manifest.json"), json).map_err(IoError::from)?;
    Ok(())
}

/// Rebuilds cell parameters from a checkpoint directory.
pub fn load_checkpoint(dir: &Path) -> Result<(LSTMParams, CheckpointManifest), CellError> {
    let manifest: CheckpointManifest = serde_json::from_str(
        &fs::read_to_string(dir.join("manifest.json")).map_err(IoError::from)?,
    )
    .map_err(IoError::from)?;
    let read_var = |name: &str| -> Result<Vec<u8>, CellError> {
        let var = manifest
            .variables
            .iter()
            .find(|v| v.name == name)
            .ok_or_else(|| CellError::MissingVariable(name.to_string()))?;
        Ok(fs::read(dir.join(&var.file)).map_err(IoError::from)?)
    };

    let kernel = match &manifest.variant {
        VariantSpec::Dense => {
            KernelVariant::Dense(crate::io::read_matrix(&mut read_var("kernel")?.as_slice())?)
        }
        VariantSpec::LowRank { .. } => {
            let w1 = crate::io::read_matrix(&mut read_var("w1")?.as_slice())?;
            let w2 = crate::io::read_matrix(&mut read_var("w2")?.as_slice())?;
            KernelVariant::LowRank(LowRankFactors::new(w1, w2)?)
        }
        VariantSpec::Tt { row_modes, .. } => {
            let mut cores = Vec::with_capacity(row_modes.len());
            for k in 0..row_modes.len() {
                let t = crate::io::read_tensor(&mut read_var(&format!("core_{k}"))?.as_slice())?;
                cores.push(crate::tt::TTCore::new(t)?);
            }
            KernelVariant::Tt(TTMatrix::new(cores)?)
        }
    };
    let bias = crate::io::read_tensor(&mut read_var("bias")?.as_slice())?.into_data();
    let params = LSTMParams::new(
        kernel,
        bias,
        manifest.forget_bias,
        manifest.input_size,
        manifest.hidden_size,
    )?;
    Ok((params, manifest))
}
