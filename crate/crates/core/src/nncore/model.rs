//! Dense rectifier network with a linear classification head.
//!
//! All layers but the last form the feature extractor; the last layer is the
//! head producing logits. Weights are row-major `(out_dim, in_dim)`.

use rand::Rng;

use super::loss::{softmax, ProbVector, PROB_EPSILON};
use super::kernels;
use crate::{rng, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    in_dim: usize,
    out_dim: usize,
    weights: Vec<f64>,
    biases: Vec<f64>,
}

impl DenseLayer {
    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn biases(&self) -> &[f64] {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        &mut self.biases
    }
}

/// Penultimate activation of the network.
///
/// For a single-layer model this is the input itself.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    pub features: FeatureVector,
    pub logits: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradients {
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

/// Gradients with the same shapes as an [`MlpModel`]'s parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<LayerGradients>,
}

impl Gradients {
    pub fn zeros_like(model: &MlpModel) -> Self {
        Self {
            layers: model
                .layers
                .iter()
                .map(|l| LayerGradients {
                    weights: vec![0.0; l.weights.len()],
                    biases: vec![0.0; l.biases.len()],
                })
                .collect(),
        }
    }

    /// Parameter tensors in model order: weights then biases, per layer.
    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
    }

    pub fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.biases])
    }

    pub fn l2_norm(&self) -> f64 {
        self.tensors()
            .flat_map(|t| t.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.tensors().flat_map(|t| t.iter().copied()).collect()
    }

    pub(crate) fn matches(&self, model: &MlpModel) -> bool {
        self.layers.len() == model.layers.len()
            && self.layers.iter().zip(&model.layers).all(|(g, l)| {
                g.weights.len() == l.weights.len() && g.biases.len() == l.biases.len()
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<DenseLayer>,
}

fn check_dims(layer_dims: &[usize]) -> Result<()> {
    if layer_dims.len() < 2 {
        return Err(Error::InvalidConfig(
            "a model needs at least an input and an output dimension".into(),
        ));
    }
    if layer_dims.contains(&0) {
        return Err(Error::InvalidConfig(format!(
            "layer dimensions must be positive, got {layer_dims:?}"
        )));
    }
    Ok(())
}

impl MlpModel {
    /// Glorot-uniform weights and zero biases drawn from `rng`.
    pub fn with_rng<R: Rng + ?Sized>(layer_dims: &[usize], rng: &mut R) -> Result<Self> {
        check_dims(layer_dims)?;
        let layers = layer_dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-limit..limit))
                    .collect();
                DenseLayer {
                    in_dim: fan_in,
                    out_dim: fan_out,
                    weights,
                    biases: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self { layers })
    }

    pub fn seeded(layer_dims: &[usize], seed: u64) -> Result<Self> {
        Self::with_rng(layer_dims, &mut rng::seeded(seed))
    }

    pub fn zeros(layer_dims: &[usize]) -> Result<Self> {
        check_dims(layer_dims)?;
        Ok(Self {
            layers: layer_dims
                .windows(2)
                .map(|w| DenseLayer {
                    in_dim: w[0],
                    out_dim: w[1],
                    weights: vec![0.0; w[0] * w[1]],
                    biases: vec![0.0; w[1]],
                })
                .collect(),
        })
    }

    /// Builds a model from explicit per-layer weights and biases.
    pub fn from_parameters(layer_dims: &[usize], params: Vec<(Vec<f64>, Vec<f64>)>) -> Result<Self> {
        check_dims(layer_dims)?;
        if params.len() != layer_dims.len() - 1 {
            return Err(Error::InvalidInput(format!(
                "{} parameter blocks for {} layers",
                params.len(),
                layer_dims.len() - 1
            )));
        }
        let mut layers = Vec::with_capacity(params.len());
        for (i, (weights, biases)) in params.into_iter().enumerate() {
            let (in_dim, out_dim) = (layer_dims[i], layer_dims[i + 1]);
            if weights.len() != in_dim * out_dim || biases.len() != out_dim {
                return Err(Error::InvalidInput(format!(
                    "layer {i}: expected {out_dim}x{in_dim} weights and {out_dim} biases"
                )));
            }
            if weights.iter().chain(&biases).any(|v| !v.is_finite()) {
                return Err(Error::InvalidInput(format!("layer {i} has non-finite parameters")));
            }
            layers.push(DenseLayer {
                in_dim,
                out_dim,
                weights,
                biases,
            });
        }
        Ok(Self { layers })
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.layers[0].in_dim)
            .chain(self.layers.iter().map(|l| l.out_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.biases.len()).sum()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn tensors(&self) -> impl Iterator<Item = &[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.biases.as_slice()])
    }

    pub(crate) fn tensors_mut(&mut self) -> impl Iterator<Item = &mut Vec<f64>> {
        self.layers
            .iter_mut()
            .flat_map(|l| [&mut l.weights, &mut l.biases])
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::InvalidInput(format!(
                "input has length {}, model expects {}",
                input.len(),
                self.input_dim()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("input contains non-finite values".into()));
        }
        Ok(())
    }

    /// Runs the network on one input, returning the penultimate features and the logits.
    pub fn forward(&self, input: &[f64]) -> Result<ForwardOutput> {
        self.check_input(input)?;
        let mut acts = self.forward_rows(input, 1);
        let logits = acts.pop().expect("at least one layer");
        let features = acts.pop().unwrap_or_else(|| input.to_vec());
        Ok(ForwardOutput {
            features: FeatureVector(features),
            logits,
        })
    }

    pub fn predict_proba(&self, input: &[f64]) -> Result<ProbVector> {
        Ok(softmax(&self.forward(input)?.logits))
    }

    /// Logits for many inputs in one pass.
    pub fn logits_batch(&self, inputs: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        for x in inputs {
            self.check_input(x)?;
        }
        let packed: Vec<f64> = inputs.iter().flat_map(|x| x.iter().copied()).collect();
        let logits = self.forward_rows(&packed, inputs.len()).pop().expect("at least one layer");
        Ok(logits.chunks_exact(self.output_dim()).map(<[f64]>::to_vec).collect())
    }

    /// Post-activation outputs of every layer for `rows` stacked inputs.
    fn forward_rows(&self, inputs: &[f64], rows: usize) -> Vec<Vec<f64>> {
        let last = self.layers.len() - 1;
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let prev = if i == 0 { inputs } else { &acts[i - 1] };
            let mut out = vec![0.0; rows * layer.out_dim];
            kernels::affine_rows(prev, &layer.weights, &layer.biases, rows, layer.in_dim, layer.out_dim, &mut out);
            if i != last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            acts.push(out);
        }
        acts
    }
}

fn check_weights(model: &MlpModel, targets: &[usize], class_weights: &[f64]) -> Result<()> {
    if class_weights.len() != model.output_dim() {
        return Err(Error::InvalidConfig(format!(
            "{} class weights for a {}-way head",
            class_weights.len(),
            model.output_dim()
        )));
    }
    if class_weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidConfig("class weights must be finite and non-negative".into()));
    }
    for &t in targets {
        match class_weights.get(t) {
            None => {
                return Err(Error::InvalidInput(format!(
                    "target class {t} out of range for a {}-way head",
                    model.output_dim()
                )))
            }
            Some(w) if *w <= 0.0 => {
                return Err(Error::InvalidConfig(format!(
                    "target class {t} has non-positive weight {w}"
                )))
            }
            Some(_) => {}
        }
    }
    Ok(())
}

/// Mean weighted cross-entropy over the batch and its gradient with respect
/// to every weight and bias.
pub fn loss_and_gradients(
    model: &MlpModel,
    inputs: &[&[f64]],
    targets: &[usize],
    class_weights: &[f64],
) -> Result<(f64, Gradients)> {
    let mut grads = Gradients::zeros_like(model);
    let loss = loss_and_gradients_into(model, inputs, targets, class_weights, &mut grads)?;
    Ok((loss, grads))
}

/// [`loss_and_gradients`] writing into an existing buffer, which saves an
/// allocation per step in training loops.
pub fn loss_and_gradients_into(
    model: &MlpModel,
    inputs: &[&[f64]],
    targets: &[usize],
    class_weights: &[f64],
    grads: &mut Gradients,
) -> Result<f64> {
    backprop(model, inputs, targets, class_weights, grads, true).map(|b| b.loss)
}

/// What [`backprop`] leaves behind for a caller that finishes the first
/// layer's weight gradient itself.
pub(crate) struct Backprop {
    pub loss: f64,
    /// Stacked batch inputs, `rows × input_dim`.
    pub inputs: Vec<f64>,
    /// Loss gradient with respect to the first layer's pre-activations.
    pub first_delta: Vec<f64>,
    pub rows: usize,
}

/// Forward and backward pass. With `first_weights == false` the first
/// layer's weight gradient is left untouched in `grads`.
pub(crate) fn backprop(
    model: &MlpModel,
    inputs: &[&[f64]],
    targets: &[usize],
    class_weights: &[f64],
    grads: &mut Gradients,
    first_weights: bool,
) -> Result<Backprop> {
    if !grads.matches(model) {
        return Err(Error::InvalidInput("gradient buffer does not match the model".into()));
    }
    if inputs.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    if inputs.len() != targets.len() {
        return Err(Error::InvalidInput(format!(
            "{} inputs but {} targets",
            inputs.len(),
            targets.len()
        )));
    }
    check_weights(model, targets, class_weights)?;
    for x in inputs {
        model.check_input(x)?;
    }

    let rows = inputs.len();
    let packed: Vec<f64> = inputs.iter().flat_map(|x| x.iter().copied()).collect();
    let acts = model.forward_rows(&packed, rows);

    let classes = model.output_dim();
    let scale = 1.0 / rows as f64;
    let mut loss = 0.0;
    let mut delta = vec![0.0; rows * classes];
    for (r, &t) in targets.iter().enumerate() {
        let logits = &acts[acts.len() - 1][r * classes..(r + 1) * classes];
        let probs = softmax(logits);
        let p = probs.values();
        let w = class_weights[t];
        loss += w * -(p[t] + PROB_EPSILON).ln();
        // d/dlogit_j of -w ln(p_t + eps) = w * p_t / (p_t + eps) * (p_j - [j == t])
        let factor = w * p[t] / (p[t] + PROB_EPSILON) * scale;
        let row = &mut delta[r * classes..(r + 1) * classes];
        for (j, d) in row.iter_mut().enumerate() {
            let onehot = if j == t { 1.0 } else { 0.0 };
            *d = factor * (p[j] - onehot);
        }
    }
    loss *= scale;

    for l in (0..model.layers.len()).rev() {
        let layer = &model.layers[l];
        let prev = if l == 0 { packed.as_slice() } else { &acts[l - 1] };
        let g = &mut grads.layers[l];
        g.biases.fill(0.0);
        if l > 0 || first_weights {
            kernels::at_b(&delta, prev, rows, layer.out_dim, layer.in_dim, &mut g.weights);
        }
        for row in delta.chunks_exact(layer.out_dim) {
            for (b, d) in g.biases.iter_mut().zip(row) {
                *b += d;
            }
        }
        if l > 0 {
            let mut upstream = vec![0.0; rows * layer.in_dim];
            kernels::a_b(&delta, &layer.weights, rows, layer.out_dim, layer.in_dim, &mut upstream);
            for (u, a) in upstream.iter_mut().zip(prev) {
                if *a <= 0.0 {
                    *u = 0.0;
                }
            }
            delta = upstream;
        }
    }
    Ok(Backprop {
        loss,
        inputs: packed,
        first_delta: delta,
        rows,
    })
}

/// Mean-over-batch gradient of the weighted cross-entropy loss.
pub fn backward(
    model: &MlpModel,
    inputs: &[&[f64]],
    targets: &[usize],
    class_weights: &[f64],
) -> Result<Gradients> {
    loss_and_gradients(model, inputs, targets, class_weights).map(|(_, g)| g)
}

/// Mean weighted cross-entropy of the batch, computed one sample at a time.
pub fn batch_loss(
    model: &MlpModel,
    inputs: &[&[f64]],
    targets: &[usize],
    class_weights: &[f64],
) -> Result<f64> {
    if inputs.is_empty() {
        return Err(Error::InvalidInput("empty batch".into()));
    }
    check_weights(model, targets, class_weights)?;
    let mut total = 0.0;
    for (x, &t) in inputs.iter().zip(targets) {
        let p = model.predict_proba(x)?;
        total += class_weights[t] * -(p.values()[t] + PROB_EPSILON).ln();
    }
    Ok(total / inputs.len() as f64)
}
