//! Adam updates over the flattened parameter tree, plus global-norm
//! gradient clipping. Constants follow the usual defaults: beta1 0.9,
//! beta2 0.999, epsilon 1e-8, bias-corrected moments.

use crate::train::model::{ModelGradients, ModelParams};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-8;

/// First and second moment estimates aligned with the parameter leaves.
#[derive(Debug, Clone)]
pub struct AdamMoments {
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamMoments {
    pub fn zeros_like(params: &ModelParams) -> Self {
        let sizes: Vec<usize> = params
            .clone()
            .leaves_mut()
            .iter()
            .map(|l| l.len())
            .collect();
        Self {
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn first(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second(&self) -> &[Vec<f64>] {
        &self.v
    }
}

/// One bias-corrected Adam update in place; `step` is 1-based.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &ModelGradients,
    moments: &mut AdamMoments,
    step: u64,
    rate: f64,
) {
    let bc1 = 1.0 - ADAM_BETA1.powi(step as i32);
    let bc2 = 1.0 - ADAM_BETA2.powi(step as i32);
    let param_leaves = params.leaves_mut();
    let grad_leaves = grads.leaves();
    debug_assert_eq!(param_leaves.len(), grad_leaves.len());
    debug_assert_eq!(param_leaves.len(), moments.m.len());
    for (((p, g), m), v) in param_leaves
        .into_iter()
        .zip(grad_leaves)
        .zip(&mut moments.m)
        .zip(&mut moments.v)
    {
        debug_assert_eq!(p.len(), g.len());
        for i in 0..p.len() {
            m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * g[i];
            v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= rate * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        }
    }
}

/// Scales the whole gradient tree so its Euclidean norm is at most
/// `max_norm`; returns the norm before clipping.
pub fn clip_global_norm(grads: &mut ModelGradients, max_norm: f64) -> f64 {
    let norm = grads.global_norm();
    if norm > max_norm {
        let factor = max_norm / norm;
        for leaf in grads.leaves_mut() {
            for g in leaf.iter_mut() {
                *g *= factor;
            }
        }
    }
    norm
}
