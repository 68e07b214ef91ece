//! Training: reverse-mode gradients through all three kernel variants, Adam
//! under a halving learning-rate schedule, and a deterministic sequence
//! copy task standing in for a real corpus.
//!
//! The loop is single-threaded and bit-reproducible: one seed pins the
//! parameter draw, the batch stream, and therefore the whole loss curve.

mod adam;
mod backprop;
mod model;
mod task;

pub use adam::{adam_step, clip_global_norm, AdamMoments};
pub use backprop::{batch_accuracy, loss_and_gradients, Batch};
pub use model::{KernelGradients, ModelGradients, ModelParams};
pub use task::CopyTask;

use crate::lstm::{CellError, VariantSpec};
use crate::tensor::TensorError;
use serde::{Deserialize, Serialize};
use std::time::Instant;
use thiserror::Error;

/// Global-norm clip applied to every gradient before the Adam update.
pub const GRADIENT_CLIP_NORM: f64 = 5.0;
/// Batches drawn for the final accuracy measurement.
pub const EVAL_BATCHES: usize = 32;
/// Seed offsets decorrelating the batch stream and the evaluation stream
/// from the parameter draw.
const TASK_SEED_XOR: u64 = 0x7461_736b;
const EVAL_SEED_XOR: u64 = 0x6576_616c;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("loss diverged to a non-finite value at step {step}")]
    Diverged { step: u64 },
    #[error("non-finite loss inside a batch of {step_in_batch} steps")]
    NonFiniteLoss { step_in_batch: usize },
    #[error("batch has {inputs} input steps but {targets} target steps")]
    BadBatch { inputs: usize, targets: usize },
    #[error("invalid config: {0}")]
    BadConfig(String),
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Linop(#[from] crate::linops::LinopError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
}

/// Base rate held for `warm_steps`, then halved every `halve_every` steps:
/// rate(s) = base for s < warm, otherwise base / 2^(1 + (s - warm) / halve).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LRSchedule {
    pub base_rate: f64,
    pub warm_steps: u64,
    pub halve_every: u64,
    pub total_steps: u64,
}

impl LRSchedule {
    pub fn rate(&self, step: u64) -> f64 {
        if step < self.warm_steps {
            self.base_rate
        } else {
            let halvings = 1 + (step - self.warm_steps) / self.halve_every;
            self.base_rate * 0.5f64.powi(halvings as i32)
        }
    }
}

/// Task dimensions: vocabulary, sequence length, batch rows, hidden units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub vocab_size: usize,
    pub seq_len: usize,
    pub batch: usize,
    pub hidden_size: usize,
}

/// One training run: kernel variant, schedule, seed, task, and step budget.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: VariantSpec,
    pub base_rate: f64,
    pub seed: u64,
    pub task: TaskSpec,
    pub steps: u64,
    #[serde(default = "default_warm_steps")]
    pub warm_steps: u64,
    #[serde(default = "default_halve_every")]
    pub halve_every: u64,
}

fn default_warm_steps() -> u64 {
    6000
}

fn default_halve_every() -> u64 {
    600
}

impl TrainConfig {
    pub fn schedule(&self) -> LRSchedule {
        LRSchedule {
            base_rate: self.base_rate,
            warm_steps: self.warm_steps,
            halve_every: self.halve_every,
            total_steps: self.steps,
        }
    }

    fn validate(&self) -> Result<(), TrainError> {
        if self.task.vocab_size < 2 {
            return Err(TrainError::BadConfig(format!(
                "vocab size must be at least 2, got {}",
                self.task.vocab_size
            )));
        }
        if self.base_rate <= 0.0 {
            return Err(TrainError::BadConfig(format!(
                "base rate must be positive, got {}",
                self.base_rate
            )));
        }
        if self.task.seq_len == 0 || self.task.batch == 0 || self.task.hidden_size == 0 {
            return Err(TrainError::BadConfig(
                "sequence length, batch, and hidden size must be positive".into(),
            ));
        }
        if self.halve_every == 0 {
            return Err(TrainError::BadConfig("halve_every must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of a run; `params` stay in memory, the summary serializes.
#[derive(Debug)]
pub struct TrainResult {
    pub config: TrainConfig,
    pub loss_curve: Vec<(u64, f64)>,
    pub final_accuracy: f64,
    pub wall_time_s: f64,
    pub params: ModelParams,
}

#[derive(Serialize)]
struct TrainResultSummary<'a> {
    config: &'a TrainConfig,
    loss_curve: &'a [(u64, f64)],
    final_accuracy: f64,
    wall_time_s: f64,
}

impl TrainResult {
    /// JSON summary: config echo, loss curve, accuracy, wall time.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TrainResultSummary {
            config: &self.config,
            loss_curve: &self.loss_curve,
            final_accuracy: self.final_accuracy,
            wall_time_s: self.wall_time_s,
        })
        .expect("summary serializes")
    }
}

/// Runs `steps` Adam updates on the copy task under the halving schedule,
/// recording the loss every 10 steps, then measures token accuracy on a
/// held-out stream.
pub fn train_loop(config: &TrainConfig) -> Result<TrainResult, TrainError> {
    config.validate()?;
    let start = Instant::now();
    let mut model = ModelParams::init(
        config.task.vocab_size,
        config.task.hidden_size,
        &config.variant,
        config.seed,
    )?;
    let mut task = CopyTask::new(
        config.task.vocab_size,
        config.task.seq_len,
        config.task.batch,
        config.seed ^ TASK_SEED_XOR,
    );
    let schedule = config.schedule();
    let mut moments = AdamMoments::zeros_like(&model);
    let mut loss_curve = Vec::new();
    for step in 0..config.steps {
        let batch = task.next_batch();
        let (loss, mut grads) = loss_and_gradients(&model, &batch).map_err(|e| match e {
            TrainError::NonFiniteLoss { .. } => TrainError::Diverged { step },
            other => other,
        })?;
        if !loss.is_finite() {
            return Err(TrainError::Diverged { step });
        }
        if step % 10 == 0 {
            loss_curve.push((step, loss));
        }
        clip_global_norm(&mut grads, GRADIENT_CLIP_NORM);
        adam_step(
            &mut model,
            &grads,
            &mut moments,
            step + 1,
            schedule.rate(step),
        );
    }

    let final_accuracy = evaluate(&model, config)?;
    Ok(TrainResult {
        config: config.clone(),
        loss_curve,
        final_accuracy,
        wall_time_s: start.elapsed().as_secs_f64(),
        params: model,
    })
}

/// Saves the full model: the cell in the checkpoint manifest format plus
/// the output projection as two more binary tensors in the same directory.
pub fn save_model(
    dir: &std::path::Path,
    model: &ModelParams,
    seed: Option<u64>,
) -> Result<(), TrainError> {
    use crate::io::IoError;
    crate::lstm::save_checkpoint(dir, &model.cell, seed)?;
    let mut buf = Vec::new();
    crate::io::write_matrix(&mut buf, &model.proj_w)?;
    std::fs::write(dir.join("proj_w.bin"), buf).map_err(IoError::from)?;
    let proj_b = crate::tensor::DenseTensor::new(vec![model.proj_b.len()], model.proj_b.clone())?;
    let mut buf = Vec::new();
    crate::io::write_tensor(&mut buf, &proj_b)?;
    std::fs::write(dir.join("proj_b.bin"), buf).map_err(IoError::from)?;
    Ok(())
}

/// Inverse of [`save_model`].
pub fn load_model(dir: &std::path::Path) -> Result<ModelParams, TrainError> {
    use crate::io::IoError;
    let (cell, _) = crate::lstm::load_checkpoint(dir)?;
    let proj_w = crate::io::read_matrix(
        &mut std::fs::read(dir.join("proj_w.bin"))
            .map_err(IoError::from)?
            .as_slice(),
    )?;
    let proj_b = crate::io::read_tensor(
        &mut std::fs::read(dir.join("proj_b.bin"))
            .map_err(IoError::from)?
            .as_slice(),
    )?
    .into_data();
    Ok(ModelParams {
        cell,
        proj_w,
        proj_b,
    })
}

/// Token accuracy over [`EVAL_BATCHES`] fresh batches from a stream
/// decorrelated from training.
pub fn evaluate(model: &ModelParams, config: &TrainConfig) -> Result<f64, TrainError> {
    let mut eval_task = CopyTask::new(
        config.task.vocab_size,
        config.task.seq_len,
        config.task.batch,
        config.seed ^ EVAL_SEED_XOR,
    );
    let mut acc = 0.0;
    for _ in 0..EVAL_BATCHES {
        acc += batch_accuracy(model, &eval_task.next_batch())?;
    }
    Ok(acc / EVAL_BATCHES as f64)
}
