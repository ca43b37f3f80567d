//! Compare backprop gradients with central finite differences on a small MLP.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use twostage::nncore::{grad_check, kink_margin, MlpModel};

fn main() -> twostage::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut model = MlpModel::seeded(&[10, 16, 8, 4], 5)?;
    for layer in model.layers_mut() {
        layer.biases_mut().iter_mut().for_each(|b| *b = rng.random_range(-0.5..0.5));
    }
    let inputs: Vec<Vec<f64>> = (0..6).map(|_| (0..10).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let refs: Vec<&[f64]> = inputs.iter().map(Vec::as_slice).collect();
    let targets = [0, 1, 2, 3, 1, 2];
    let weights = [1.0, 2.5, 1.0, 0.7];

    println!("{} parameters, smallest |pre-activation| {:.3e}", model.num_params(), kink_margin(&model, &refs));
    let err = grad_check(&model, &refs, &targets, &weights)?;
    println!("max relative error {err:.3e}");
    Ok(())
}
