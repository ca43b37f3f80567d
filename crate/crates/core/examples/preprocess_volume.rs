//! Run one synthetic volume through trimming, resizing and normalization.

use twostage::data::synth::render_volume;
use twostage::data::{CohortSpec, DiseaseLabel, GenderLabel};
use twostage::preprocess::{featurize, normalize, resize, trim_slices, Normalization, PreprocessConfig};

fn summary(values: &[f32]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let var = values.iter().map(|&v| (f64::from(v) - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn main() -> twostage::Result<()> {
    let spec = CohortSpec::with_seed(3);
    let volume = render_volume(&spec, DiseaseLabel::Covid19, GenderLabel::Female, 0);
    println!("raw       {:?} mean/std {:?}", volume.dims(), summary(volume.voxels()));

    let config = PreprocessConfig::default();
    let trimmed = trim_slices(&volume, config.trim_low_frac, config.trim_high_frac)?;
    println!("trimmed   {:?}", trimmed.dims());
    let resized = resize(&trimmed, config.target_dims)?;
    println!("resized   {:?} mean/std {:?}", resized.dims(), summary(resized.voxels()));
    let normalized = normalize(&resized, Normalization::Zscore);
    println!("z-scored  mean/std {:?} degenerate={}", summary(normalized.volume.voxels()), normalized.degenerate);

    let features = featurize(&volume, &config)?;
    println!("feature vector length {} (expected {})", features.len(), config.feature_len());
    Ok(())
}
