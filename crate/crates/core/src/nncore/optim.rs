//! Bias-corrected Adam.

use serde::{Deserialize, Serialize};

use super::kernels::{adam_outer_update, adam_update, AdamScalars};
use super::model::{backprop, Gradients, MlpModel};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First and second moment accumulators, shaped like the model's tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(model: &MlpModel, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = model.tensors().map(|t| vec![0.0; t.len()]).collect();
        Self {
            step: 0,
            config,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.v
    }
}

/// Validates the step, advances the counter and returns the update scalars.
fn begin_step(model: &MlpModel, state: &mut AdamState, lr: f64) -> Result<AdamScalars> {
    let shapes_match = state.m.len() == model.tensors().count()
        && model.tensors().zip(&state.m).all(|(t, m)| t.len() == m.len());
    if !shapes_match {
        return Err(Error::InvalidInput("optimizer state does not match the model".into()));
    }
    if !(lr >= 0.0) {
        return Err(Error::InvalidInput(format!("learning rate {lr} is negative")));
    }
    state.step += 1;
    let AdamConfig { beta1, beta2, epsilon } = state.config;
    Ok(AdamScalars {
        beta1,
        beta2,
        bias1: 1.0 - beta1.powi(state.step as i32),
        bias2: 1.0 - beta2.powi(state.step as i32),
        epsilon,
        lr,
    })
}

/// Applies one Adam update to `model` in place and increments `state.step`.
pub fn adam_step(model: &mut MlpModel, grads: &Gradients, state: &mut AdamState, lr: f64) -> Result<()> {
    if !grads.matches(model) {
        return Err(Error::InvalidInput("gradient shapes do not match the model".into()));
    }
    let scalars = begin_step(model, state, lr)?;
    let tensors = model.tensors_mut().zip(grads.tensors()).zip(state.m.iter_mut().zip(state.v.iter_mut()));
    for ((params, g), (m, v)) in tensors {
        adam_update(params, g, m, v, scalars);
    }
    Ok(())
}

/// Forward, backward and Adam update for one batch; returns the batch loss.
///
/// The first layer's weight gradient is formed inside the update rather than
/// stored, which saves a pass over the largest tensor. The result is
/// bit-identical to [`loss_and_gradients`](super::loss_and_gradients)
/// followed by [`adam_step`]. When the loss is not finite, nothing is updated.
pub fn train_step(
    model: &mut MlpModel,
    state: &mut AdamState,
    inputs: &[&[f64]],
    targets: &[usize],
    class_weights: &[f64],
    lr: f64,
    scratch: &mut Gradients,
) -> Result<f64> {
    let bp = backprop(model, inputs, targets, class_weights, scratch, false)?;
    if !bp.loss.is_finite() {
        return Ok(bp.loss);
    }
    let scalars = begin_step(model, state, lr)?;
    let (in_dim, out_dim) = (model.input_dim(), model.layers()[0].out_dim());
    let tensors = model.tensors_mut().zip(scratch.tensors()).zip(state.m.iter_mut().zip(state.v.iter_mut()));
    for (i, ((params, g), (m, v))) in tensors.enumerate() {
        if i == 0 {
            adam_outer_update(params, &bp.first_delta, &bp.inputs, bp.rows, out_dim, in_dim, m, v, scalars);
        } else {
            adam_update(params, g, m, v, scalars);
        }
    }
    Ok(bp.loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nncore::model::{backward, loss_and_gradients, LayerGradients};
    use crate::rng;
    use rand::Rng;

    fn scalar_model(value: f64) -> MlpModel {
        // 1 -> 1 layer: one weight, one bias.
        MlpModel::from_parameters(&[1, 1], vec![(vec![value], vec![0.0])]).unwrap()
    }

    #[test]
    fn zero_lr_is_a_no_op() {
        let mut model = MlpModel::seeded(&[3, 4, 2], 1).unwrap();
        let before = model.clone();
        let grads = backward(&model, &[&[0.5, -0.5, 1.0]], &[1], &[1.0, 1.0]).unwrap();
        let mut state = AdamState::new(&model, AdamConfig::default());
        adam_step(&mut model, &grads, &mut state, 0.0).unwrap();
        assert_eq!(model, before);
        assert_eq!(state.step, 1);
    }

    #[test]
    fn zero_gradient_from_fresh_state_is_a_no_op() {
        let mut model = MlpModel::seeded(&[3, 2], 1).unwrap();
        let before = model.clone();
        let grads = Gradients::zeros_like(&model);
        let mut state = AdamState::new(&model, AdamConfig::default());
        adam_step(&mut model, &grads, &mut state, 0.1).unwrap();
        assert_eq!(model, before);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // m_hat = v_hat = 1, so the update is -lr / (1 + eps).
        let mut model = scalar_model(0.0);
        let grads = Gradients {
            layers: vec![LayerGradients {
                weights: vec![1.0],
                biases: vec![0.0],
            }],
        };
        let mut state = AdamState::new(&model, AdamConfig::default());
        adam_step(&mut model, &grads, &mut state, 0.1).unwrap();
        let w = model.layers()[0].weights()[0];
        assert!((w - (-0.1 / (1.0 + 1e-8))).abs() < 1e-15);
        assert!(state.second_moments().iter().flatten().all(|v| *v >= 0.0));
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut model = scalar_model(0.0);
        let other = MlpModel::zeros(&[2, 1]).unwrap();
        let grads = Gradients::zeros_like(&other);
        let mut state = AdamState::new(&model, AdamConfig::default());
        assert!(adam_step(&mut model, &grads, &mut state, 0.1).is_err());
        assert_eq!(state.step, 0);
    }

    #[test]
    fn fused_step_matches_separate_backward_and_update() {
        let mut r = rng::seeded(77);
        for (dims, batch) in [(vec![13, 9, 4], 3), (vec![16, 5, 2], 8), (vec![21, 3], 9), (vec![8, 6, 6, 4], 1)] {
            let mut fused = MlpModel::seeded(&dims, batch as u64).unwrap();
            let mut plain = fused.clone();
            let mut fs = AdamState::new(&fused, AdamConfig::default());
            let mut ps = fs.clone();
            let mut scratch = Gradients::zeros_like(&fused);
            let heads = *dims.last().unwrap();
            for step in 0..4 {
                let xs: Vec<Vec<f64>> = (0..batch)
                    .map(|_| (0..dims[0]).map(|_| r.random_range(-1.0..1.0)).collect())
                    .collect();
                let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
                let targets: Vec<usize> = (0..batch).map(|i| (i + step) % heads).collect();
                let weights: Vec<f64> = (0..heads).map(|c| 0.5 + c as f64).collect();
                let lr = 1e-2 / (step + 1) as f64;
                let fused_loss = train_step(&mut fused, &mut fs, &refs, &targets, &weights, lr, &mut scratch).unwrap();
                let (loss, grads) = loss_and_gradients(&plain, &refs, &targets, &weights).unwrap();
                adam_step(&mut plain, &grads, &mut ps, lr).unwrap();
                assert_eq!(fused_loss, loss);
                assert_eq!(fused, plain, "dims {dims:?} step {step}");
                assert_eq!(fs, ps);
            }
        }
    }

    #[test]
    fn fused_step_skips_non_finite_loss() {
        let mut model = MlpModel::seeded(&[3, 4, 2], 1).unwrap();
        let before = model.clone();
        let mut state = AdamState::new(&model, AdamConfig::default());
        let mut scratch = Gradients::zeros_like(&model);
        let x: [&[f64]; 2] = [&[0.5, -0.5, 1.0], &[0.1, 0.2, 0.3]];
        let loss = train_step(&mut model, &mut state, &x, &[0, 1], &[1e308, 1e308], 0.1, &mut scratch).unwrap();
        assert!(!loss.is_finite());
        assert_eq!(model, before);
        assert_eq!(state.step, 0);
    }
}
