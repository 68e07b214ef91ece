//! Hand-derived reverse-mode pass: mean token cross-entropy over a dense
//! output projection, backpropagated through time and through whichever
//! kernel parametrization the cell carries.
//!
//! The TT path pushes gradients through the recorded left-to-right core
//! contraction, producing a gradient for every core; kernels are never
//! re-decomposed during training.

use crate::lstm::{cell_step_traced, KernelTrace, KernelVariant, LSTMState, StepTrace};
use crate::tensor::{matmul_a_bt_raw, matmul_at_b_raw, DenseMatrix};
use crate::train::model::{KernelGradients, ModelGradients, ModelParams};
use crate::train::TrainError;

/// One training batch: a sequence of one-hot input matrices (batch x vocab)
/// and the class index of every token.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Vec<DenseMatrix>,
    pub targets: Vec<Vec<usize>>,
}

struct LossStep {
    probs: DenseMatrix,
    h: DenseMatrix,
}

/// Mean cross-entropy of the batch and the gradient of every parameter.
pub fn loss_and_gradients(
    model: &ModelParams,
    batch: &Batch,
) -> Result<(f64, ModelGradients), TrainError> {
    if batch.inputs.is_empty() || batch.inputs.len() != batch.targets.len() {
        return Err(TrainError::BadBatch {
            inputs: batch.inputs.len(),
            targets: batch.targets.len(),
        });
    }
    let steps = batch.inputs.len();
    let batch_rows = batch.inputs[0].rows();
    let hidden = model.cell.hidden_size();
    let vocab = model.vocab_size();
    let scale = 1.0 / (steps * batch_rows) as f64;

    // Forward pass, keeping per-step traces for the reverse sweep.
    let mut state = LSTMState::zeros(batch_rows, hidden);
    let mut traces: Vec<StepTrace> = Vec::with_capacity(steps);
    let mut loss_steps: Vec<LossStep> = Vec::with_capacity(steps);
    let mut loss = 0.0;
    for (t, inputs) in batch.inputs.iter().enumerate() {
        let (h, next, trace) = cell_step_traced(&model.cell, inputs, &state)?;
        let logits = h.matmul(&model.proj_w)?;
        let mut probs = DenseMatrix::zeros(batch_rows, vocab);
        for r in 0..batch_rows {
            let row = logits.row(r);
            let mut max = f64::NEG_INFINITY;
            for (j, &l) in row.iter().enumerate() {
                let v = l + model.proj_b[j];
                if v > max {
                    max = v;
                }
            }
            let mut sum = 0.0;
            for j in 0..vocab {
                let e = (row[j] + model.proj_b[j] - max).exp();
                probs.set(r, j, e);
                sum += e;
            }
            let target = batch.targets[t][r];
            let log_p = (row[target] + model.proj_b[target] - max) - sum.ln();
            loss -= log_p * scale;
            for j in 0..vocab {
                probs.set(r, j, probs.get(r, j) / sum);
            }
        }
        traces.push(trace);
        loss_steps.push(LossStep { probs, h });
        state = next;
    }
    if !loss.is_finite() {
        return Err(TrainError::NonFiniteLoss {
            step_in_batch: steps,
        });
    }

    // Reverse sweep through time.
    let mut grads = model.zero_gradients();
    let mut dh_carry = vec![0.0; batch_rows * hidden];
    let mut dc_carry = vec![0.0; batch_rows * hidden];
    for t in (0..steps).rev() {
        let ls = &loss_steps[t];
        let trace = &traces[t];

        // dlogits = (probs - onehot) * scale.
        let mut dlogits = ls.probs.scale(scale);
        for r in 0..batch_rows {
            let target = batch.targets[t][r];
            dlogits.set(r, target, dlogits.get(r, target) - scale);
        }
        // Projection gradients and the loss contribution to dh.
        let dpw = matmul_at_b_raw(ls.h.data(), batch_rows, hidden, dlogits.data(), vocab);
        for (g, d) in grads.proj_w.data_mut().iter_mut().zip(&dpw) {
            *g += d;
        }
        for r in 0..batch_rows {
            for j in 0..vocab {
                grads.proj_b[j] += dlogits.get(r, j);
            }
        }
        let dh_loss = matmul_a_bt_raw(
            dlogits.data(),
            batch_rows,
            vocab,
            model.proj_w.data(),
            hidden,
        );

        // Total dh at this step, then the gate-level chain rule.
        let n = batch_rows * hidden;
        let mut dgates = vec![0.0; batch_rows * 4 * hidden];
        let mut dc_prev = vec![0.0; n];
        let (ig, jg, fg, og) = (
            trace.i_gate.data(),
            trace.j_gate.data(),
            trace.f_gate.data(),
            trace.o_gate.data(),
        );
        let tanh_c = trace.tanh_new_c.data();
        let c_prev = trace.c_prev.data();
        for idx in 0..n {
            let dh = dh_loss[idx] + dh_carry[idx];
            let do_pre = dh * tanh_c[idx] * og[idx] * (1.0 - og[idx]);
            let dc = dc_carry[idx] + dh * og[idx] * (1.0 - tanh_c[idx] * tanh_c[idx]);
            let df_pre = dc * c_prev[idx] * fg[idx] * (1.0 - fg[idx]);
            let di_pre = dc * jg[idx] * ig[idx] * (1.0 - ig[idx]);
            let dj_pre = dc * ig[idx] * (1.0 - jg[idx] * jg[idx]);
            dc_prev[idx] = dc * fg[idx];
            let (r, u) = (idx / hidden, idx % hidden);
            let row = r * 4 * hidden;
            dgates[row + u] = di_pre;
            dgates[row + hidden + u] = dj_pre;
            dgates[row + 2 * hidden + u] = df_pre;
            dgates[row + 3 * hidden + u] = do_pre;
        }
        for r in 0..batch_rows {
            for j in 0..4 * hidden {
                grads.bias[j] += dgates[r * 4 * hidden + j];
            }
        }

        let dconcat = kernel_backward(model, trace, &dgates, batch_rows, &mut grads)?;
        let input_size = model.cell.input_size();
        let width = input_size + hidden;
        for r in 0..batch_rows {
            for u in 0..hidden {
                dh_carry[r * hidden + u] = dconcat[r * width + input_size + u];
            }
        }
        dc_carry = dc_prev;
    }

    if !grads.is_finite() {
        return Err(TrainError::NonFiniteLoss { step_in_batch: 0 });
    }
    Ok((loss, grads))
}

/// Pushes dgates back through the kernel, accumulating parameter gradients
/// and returning d[inputs | h].
fn kernel_backward(
    model: &ModelParams,
    trace: &StepTrace,
    dgates: &[f64],
    batch_rows: usize,
    grads: &mut ModelGradients,
) -> Result<Vec<f64>, TrainError> {
    let width = trace.concat.cols();
    let out_dim = model.cell.kernel.output_dim();
    match (&model.cell.kernel, &trace.kernel_trace, &mut grads.kernel) {
        (KernelVariant::Dense(w), KernelTrace::Dense, KernelGradients::Dense(gw)) => {
            let dw = matmul_at_b_raw(trace.concat.data(), batch_rows, width, dgates, out_dim);
            for (g, d) in gw.data_mut().iter_mut().zip(&dw) {
                *g += d;
            }
            Ok(matmul_a_bt_raw(
                dgates,
                batch_rows,
                out_dim,
                w.data(),
                width,
            ))
        }
        (
            KernelVariant::LowRank(f),
            KernelTrace::LowRank { z },
            KernelGradients::LowRank { w1, w2 },
        ) => {
            let d = f.svd_dim();
            let dw2 = matmul_at_b_raw(z.data(), batch_rows, d, dgates, out_dim);
            for (g, v) in w2.data_mut().iter_mut().zip(&dw2) {
                *g += v;
            }
            let dz = matmul_a_bt_raw(dgates, batch_rows, out_dim, f.w2().data(), d);
            let dw1 = matmul_at_b_raw(trace.concat.data(), batch_rows, width, &dz, d);
            for (g, v) in w1.data_mut().iter_mut().zip(&dw1) {
                *g += v;
            }
            Ok(matmul_a_bt_raw(&dz, batch_rows, d, f.w1().data(), width))
        }
        (KernelVariant::Tt(tt), KernelTrace::Tt(tt_trace), KernelGradients::Tt(gcores)) => {
            let mut d_running = dgates.to_vec();
            for k in (0..tt.order()).rev() {
                let dims = tt_trace.dims[k];
                let rows = dims.a * dims.c;
                let inner = dims.r * dims.b;
                let cols = dims.n * dims.rr;
                let dg = matmul_at_b_raw(&tt_trace.permuted[k], rows, inner, &d_running, cols);
                for (g, v) in gcores[k].data_mut().iter_mut().zip(&dg) {
                    *g += v;
                }
                let dp =
                    matmul_a_bt_raw(&d_running, rows, cols, tt.cores()[k].tensor().data(), inner);
                d_running =
                    crate::linops::permute_acrb_to_abcr(&dp, dims.a, dims.b, dims.c, dims.r);
            }
            Ok(d_running)
        }
        _ => unreachable!("kernel, trace, and gradient variants always align"),
    }
}

/// Fraction of tokens whose argmax logit matches the target.
pub fn batch_accuracy(model: &ModelParams, batch: &Batch) -> Result<f64, TrainError> {
    let hidden = model.cell.hidden_size();
    let batch_rows = batch.inputs[0].rows();
    let mut state = LSTMState::zeros(batch_rows, hidden);
    let mut correct = 0usize;
    let mut total = 0usize;
    for (t, inputs) in batch.inputs.iter().enumerate() {
        let (h, next) = crate::lstm::cell_step(&model.cell, inputs, &state)?;
        let logits = h.matmul(&model.proj_w)?;
        for r in 0..batch_rows {
            let row = logits.row(r);
            let mut best = 0usize;
            let mut best_v = f64::NEG_INFINITY;
            for (j, &l) in row.iter().enumerate() {
                let v = l + model.proj_b[j];
                if v > best_v {
                    best_v = v;
                    best = j;
                }
            }
            if best == batch.targets[t][r] {
                correct += 1;
            }
            total += 1;
        }
        state = next;
    }
    Ok(correct as f64 / total as f64)
}
