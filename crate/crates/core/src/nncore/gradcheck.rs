//! Central finite-difference gradient verification.

use super::model::{backward, batch_loss, Gradients, MlpModel};
use crate::Result;

pub const FD_STEP: f64 = 1e-4;
pub const RELATIVE_FLOOR: f64 = 1e-8;

/// Central differences of the per-sample loss path, one parameter at a time.
pub fn numeric_gradients(
    model: &MlpModel,
    inputs: &[&[f64]],
    targets: &[usize],
    class_weights: &[f64],
    step: f64,
) -> Result<Gradients> {
    let mut probe = model.clone();
    let mut grads = Gradients::zeros_like(model);
    let tensor_count = grads.tensors().count();
    for t in 0..tensor_count {
        let len = probe.tensors_mut().nth(t).map_or(0, |p| p.len());
        for i in 0..len {
            let original = probe.tensors_mut().nth(t).expect("tensor")[i];
            probe.tensors_mut().nth(t).expect("tensor")[i] = original + step;
            let plus = batch_loss(&probe, inputs, targets, class_weights)?;
            probe.tensors_mut().nth(t).expect("tensor")[i] = original - step;
            let minus = batch_loss(&probe, inputs, targets, class_weights)?;
            probe.tensors_mut().nth(t).expect("tensor")[i] = original;
            grads.tensors_mut().nth(t).expect("tensor")[i] = (plus - minus) / (2.0 * step);
        }
    }
    Ok(grads)
}

/// `max |a - n| / max(|a|, |n|, 1e-8)` over all parameters.
pub fn max_relative_error(analytic: &Gradients, numeric: &Gradients) -> f64 {
    analytic
        .tensors()
        .flat_map(|t| t.iter())
        .zip(numeric.tensors().flat_map(|t| t.iter()))
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(RELATIVE_FLOOR))
        .fold(0.0, f64::max)
}

/// Smallest |pre-activation| of any hidden unit over the batch. Central
/// differences straddle a ReLU kink when this is within a few steps of zero.
pub fn kink_margin(model: &MlpModel, inputs: &[&[f64]]) -> f64 {
    let hidden = model.layers().len() - 1;
    let mut margin = f64::INFINITY;
    for x in inputs {
        let mut act = x.to_vec();
        for layer in &model.layers()[..hidden] {
            let z: Vec<f64> = layer
                .weights()
                .chunks_exact(layer.in_dim())
                .zip(layer.biases())
                .map(|(row, b)| b + row.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>())
                .collect();
            margin = z.iter().fold(margin, |m, v| m.min(v.abs()));
            act = z.into_iter().map(|v| v.max(0.0)).collect();
        }
    }
    margin
}

/// Compares caller-supplied analytic gradients against finite differences.
pub fn grad_check_against(
    model: &MlpModel,
    inputs: &[&[f64]],
    targets: &[usize],
    class_weights: &[f64],
    analytic: &Gradients,
) -> Result<f64> {
    let numeric = numeric_gradients(model, inputs, targets, class_weights, FD_STEP)?;
    Ok(max_relative_error(analytic, &numeric))
}

/// Max relative error between [`backward`] and central differences.
pub fn grad_check(model: &MlpModel, inputs: &[&[f64]], targets: &[usize], class_weights: &[f64]) -> Result<f64> {
    let analytic = backward(model, inputs, targets, class_weights)?;
    grad_check_against(model, inputs, targets, class_weights, &analytic)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use rand::Rng;

    fn random_batch(seed: u64, dim: usize, classes: usize, n: usize) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut r = rng::seeded(seed);
        let xs = (0..n)
            .map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect())
            .collect();
        let ys = (0..n).map(|_| r.random_range(0..classes)).collect();
        (xs, ys)
    }

    #[test]
    fn analytic_matches_numeric_on_8_16_4() {
        let model = MlpModel::seeded(&[8, 16, 4], 42).unwrap();
        let (xs, ys) = random_batch(43, 8, 4, 4);
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let err = grad_check(&model, &refs, &ys, &[0.8, 1.3, 1.0, 1.0]).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let model = MlpModel::seeded(&[8, 16, 4], 42).unwrap();
        let (xs, ys) = random_batch(43, 8, 4, 4);
        let refs: Vec<&[f64]> = xs.iter().map(|x| x.as_slice()).collect();
        let weights = [1.0; 4];
        let mut analytic = backward(&model, &refs, &ys, &weights).unwrap();
        // Double the largest entry of the head weights.
        let head = &mut analytic.layers[1].weights;
        let idx = (0..head.len())
            .max_by(|&a, &b| head[a].abs().total_cmp(&head[b].abs()))
            .unwrap();
        head[idx] *= 2.0;
        let err = grad_check_against(&model, &refs, &ys, &weights, &analytic).unwrap();
        assert!(err > 0.1, "fault went unnoticed: {err}");
    }

    #[test]
    fn smallest_model_yields_finite_error() {
        let model = MlpModel::seeded(&[1, 1], 0).unwrap();
        let err = grad_check(&model, &[&[0.5]], &[0], &[1.0]).unwrap();
        assert!(err.is_finite());
        let model = MlpModel::seeded(&[1, 2], 0).unwrap();
        let err = grad_check(&model, &[&[0.5]], &[1], &[1.0, 1.0]).unwrap();
        assert!(err < 1e-4);
    }
}
