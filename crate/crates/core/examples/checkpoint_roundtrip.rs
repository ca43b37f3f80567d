//! Save a model to the binary checkpoint format and load it back.
//!
//! Parameters are stored as f32, so the first save rounds them. After that a
//! load and save reproduces the file byte for byte.

use twostage::nncore::{load_model, save_model, MlpModel};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let first = dir.path().join("first.lmlp");
    let second = dir.path().join("second.lmlp");

    let model = MlpModel::seeded(&[12, 24, 4], 9)?;
    save_model(&model, &first)?;
    let restored = load_model(&first)?;
    save_model(&restored, &second)?;

    let x: Vec<f64> = (0..12).map(|i| i as f64 / 12.0).collect();
    let a = model.forward(&x)?.logits;
    let b = restored.forward(&x)?.logits;
    let drift = a.iter().zip(&b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
    println!("{} bytes on disk", std::fs::metadata(&first)?.len());
    println!("max logit change from f32 storage: {drift:.2e}");
    println!("second save identical: {}", std::fs::read(&first)? == std::fs::read(&second)?);
    Ok(())
}
