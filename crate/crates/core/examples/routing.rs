//! Hard routing: the gender head picks which disease model sees the input.

use twostage::data::GenderLabel;
use twostage::nncore::MlpModel;
use twostage::pipeline::TwoStageModel;
use twostage::preprocess::PreprocessConfig;

fn main() -> twostage::Result<()> {
    let preprocess = PreprocessConfig { target_dims: [2, 4, 4], ..PreprocessConfig::default() };
    let n = preprocess.feature_len();
    let mut model = TwoStageModel::new(
        MlpModel::seeded(&[n, 8, 2], 1)?,
        MlpModel::seeded(&[n, 8, 4], 2)?,
        MlpModel::seeded(&[n, 8, 4], 3)?,
        preprocess,
    )?;
    let x: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();

    let p = model.predict_features(&x)?;
    println!("gender probs {:?} -> routed to {:?}, disease {:?}", p.gender_probs.values(), p.routed_gender, p.disease);

    // Pin the gender head to "male" and check the route follows.
    let head = model.gender_model.layers_mut().last_mut().expect("output layer");
    head.weights_mut().fill(0.0);
    head.biases_mut().copy_from_slice(&[-20.0, 20.0]);
    let forced = model.predict_features(&x)?;
    let direct = model.male_disease_model.predict_proba(&x)?;
    println!("forced route {:?}; matches male model directly: {}", forced.routed_gender, forced.disease_probs == direct);

    let oracle = model.predict_with_gender(&x, GenderLabel::Female)?;
    println!("oracle routing to female gives {:?}", oracle.disease);
    Ok(())
}
