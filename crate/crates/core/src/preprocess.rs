//! Volume preprocessing: slice trimming, trilinear resizing, intensity
//! normalization and flattening into a model input vector.

use serde::{Deserialize, Serialize};

use crate::data::{Dims, Volume};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Zscore,
    Minmax,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessConfig {
    pub trim_low_frac: f64,
    pub trim_high_frac: f64,
    pub target_dims: Dims,
    pub normalization: Normalization,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            trim_low_frac: 0.1,
            trim_high_frac: 0.1,
            target_dims: [8, 32, 32],
            normalization: Normalization::Zscore,
        }
    }
}

impl PreprocessConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [("trim_low_frac", self.trim_low_frac), ("trim_high_frac", self.trim_high_frac)] {
            if !(0.0..=0.45).contains(&f) {
                return Err(Error::InvalidConfig(format!("{name} = {f} outside [0, 0.45]")));
            }
        }
        if self.trim_low_frac + self.trim_high_frac >= 1.0 {
            return Err(Error::InvalidConfig("trim fractions must sum to less than 1".into()));
        }
        if self.target_dims.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "target dims must be positive, got {:?}",
                self.target_dims
            )));
        }
        Ok(())
    }

    /// Length of the flattened feature vector.
    pub fn feature_len(&self) -> usize {
        self.target_dims.iter().product()
    }
}

/// Keeps slices `[floor(low·D), D − floor(high·D))`.
pub fn trim_slices(volume: &Volume, low_frac: f64, high_frac: f64) -> Result<Volume> {
    let depth = volume.depth();
    let start = (low_frac * depth as f64).floor() as usize;
    let cut = (high_frac * depth as f64).floor() as usize;
    let end = depth.saturating_sub(cut);
    if end <= start {
        return Err(Error::InvalidConfig(format!(
            "trimming {low_frac}/{high_frac} of {depth} slices leaves nothing"
        )));
    }
    let [_, h, w] = volume.dims();
    Volume::new([end - start, h, w], volume.slices(start, end).to_vec())
}

/// Corner-aligned sample positions of `target` points over `source` voxels.
fn sample_positions(source: usize, target: usize) -> Vec<(usize, usize, f64)> {
    (0..target)
        .map(|i| {
            let pos = if target == 1 {
                (source - 1) as f64 / 2.0
            } else {
                i as f64 * (source - 1) as f64 / (target - 1) as f64
            };
            let lo = (pos.floor() as usize).min(source - 1);
            let hi = (lo + 1).min(source - 1);
            (lo, hi, pos - lo as f64)
        })
        .collect()
}

fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Trilinear resampling with corner-aligned grids.
pub fn resize(volume: &Volume, target: Dims) -> Result<Volume> {
    if target.contains(&0) {
        return Err(Error::InvalidConfig(format!("target dims must be positive, got {target:?}")));
    }
    if volume.dims() == target {
        return Ok(volume.clone());
    }
    let src = volume.dims();
    let (zs, ys, xs) = (
        sample_positions(src[0], target[0]),
        sample_positions(src[1], target[1]),
        sample_positions(src[2], target[2]),
    );
    let at = |z: usize, y: usize, x: usize| volume.get(z, y, x) as f64;
    let mut out = Vec::with_capacity(target.iter().product());
    for &(z0, z1, tz) in &zs {
        for &(y0, y1, ty) in &ys {
            for &(x0, x1, tx) in &xs {
                let c00 = lerp(at(z0, y0, x0), at(z0, y0, x1), tx);
                let c01 = lerp(at(z0, y1, x0), at(z0, y1, x1), tx);
                let c10 = lerp(at(z1, y0, x0), at(z1, y0, x1), tx);
                let c11 = lerp(at(z1, y1, x0), at(z1, y1, x1), tx);
                let c0 = lerp(c00, c01, ty);
                let c1 = lerp(c10, c11, ty);
                out.push(lerp(c0, c1, tz) as f32);
            }
        }
    }
    Volume::new(target, out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Normalized {
    pub volume: Volume,
    /// Set when the volume had no spread; the output is then all zeros.
    pub degenerate: bool,
}

pub fn normalize(volume: &Volume, mode: Normalization) -> Normalized {
    let values = volume.voxels();
    let zeros = || Normalized {
        volume: Volume::filled(volume.dims(), 0.0).expect("dims already valid"),
        degenerate: true,
    };
    let mapped = |f: &dyn Fn(f64) -> f64| Normalized {
        volume: Volume::new(volume.dims(), values.iter().map(|v| f(*v as f64) as f32).collect())
            .expect("normalized values are finite"),
        degenerate: false,
    };
    match mode {
        Normalization::None => Normalized {
            volume: volume.clone(),
            degenerate: false,
        },
        Normalization::Zscore => {
            let n = values.len() as f64;
            let mean = values.iter().map(|v| *v as f64).sum::<f64>() / n;
            let var = values.iter().map(|v| (*v as f64 - mean).powi(2)).sum::<f64>() / n;
            let std = var.sqrt();
            if std == 0.0 || !std.is_finite() {
                return zeros();
            }
            mapped(&|v| (v - mean) / std)
        }
        Normalization::Minmax => {
            let (min, max) = values
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v as f64), hi.max(*v as f64)));
            if max == min {
                return zeros();
            }
            mapped(&|v| (v - min) / (max - min))
        }
    }
}

/// Trim, resize, normalize and flatten (z-major, row-major) into a model input.
pub fn featurize(volume: &Volume, config: &PreprocessConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let trimmed = trim_slices(volume, config.trim_low_frac, config.trim_high_frac)?;
    let resized = resize(&trimmed, config.target_dims)?;
    let normalized = normalize(&resized, config.normalization);
    Ok(normalized.volume.voxels().iter().map(|v| *v as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp_depth(depth: usize) -> Volume {
        let voxels = (0..depth).flat_map(|z| [z as f32; 4]).collect();
        Volume::new([depth, 2, 2], voxels).unwrap()
    }

    #[test]
    fn trim_keeps_expected_slices() {
        let t = trim_slices(&ramp_depth(10), 0.2, 0.2).unwrap();
        assert_eq!(t.depth(), 6);
        assert_eq!(t.get(0, 0, 0), 2.0);
        assert_eq!(t.get(5, 0, 0), 7.0);

        let v = ramp_depth(10);
        assert_eq!(trim_slices(&v, 0.0, 0.0).unwrap(), v);

        // floor(0.4 * 3) = 1 from each end.
        let t = trim_slices(&ramp_depth(3), 0.4, 0.4).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.get(0, 1, 1), 1.0);
    }

    #[test]
    fn trim_to_nothing_is_rejected() {
        assert!(matches!(trim_slices(&ramp_depth(2), 0.5, 0.5), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn resize_constant_and_identity() {
        let c = Volume::filled([3, 5, 7], 0.3).unwrap();
        let r = resize(&c, [6, 2, 9]).unwrap();
        assert!(r.voxels().iter().all(|v| *v == 0.3));
        let v = Volume::new([2, 2, 3], (0..12).map(|i| i as f32 * 0.37).collect()).unwrap();
        assert_eq!(resize(&v, [2, 2, 3]).unwrap(), v);
    }

    #[test]
    fn resize_ramp_matches_linear_interpolant() {
        let w = 5;
        let ramp: Vec<f32> = (0..w).map(|x| x as f32 / (w - 1) as f32).collect();
        let v = Volume::new([1, 1, w], ramp).unwrap();
        let r = resize(&v, [1, 1, 2 * w]).unwrap();
        for (i, got) in r.voxels().iter().enumerate() {
            let want = i as f64 / (2 * w - 1) as f64;
            assert!((*got as f64 - want).abs() < 1e-6, "{i}: {got} vs {want}");
        }
    }

    #[test]
    fn normalize_modes() {
        let v = Volume::new([1, 1, 2], vec![0.0, 2.0]).unwrap();
        let z = normalize(&v, Normalization::Zscore);
        assert_eq!(z.volume.voxels(), &[-1.0, 1.0]);
        assert!(!z.degenerate);

        let c = Volume::filled([2, 2, 2], 4.0).unwrap();
        let z = normalize(&c, Normalization::Zscore);
        assert!(z.degenerate && z.volume.voxels().iter().all(|v| *v == 0.0));
        assert!(normalize(&c, Normalization::Minmax).degenerate);

        let v = Volume::new([1, 2, 2], vec![3.0, -1.0, 7.0, 0.5]).unwrap();
        let m = normalize(&v, Normalization::Minmax).volume;
        let min = m.voxels().iter().copied().fold(f32::INFINITY, f32::min);
        let max = m.voxels().iter().copied().fold(f32::NEG_INFINITY, f32::max);
        assert_eq!((min, max), (0.0, 1.0));
        assert_eq!(normalize(&v, Normalization::None).volume, v);
    }

    #[test]
    fn featurize_is_the_composition_of_stages() {
        let v = Volume::new([6, 4, 4], (0..96).map(|i| ((i * 7) % 13) as f32).collect()).unwrap();
        let cfg = PreprocessConfig {
            trim_low_frac: 0.2,
            trim_high_frac: 0.1,
            target_dims: [2, 2, 2],
            normalization: Normalization::Zscore,
        };
        let got = featurize(&v, &cfg).unwrap();
        assert_eq!(got.len(), 8);
        let manual = normalize(
            &resize(&trim_slices(&v, 0.2, 0.1).unwrap(), [2, 2, 2]).unwrap(),
            Normalization::Zscore,
        );
        let manual: Vec<f64> = manual.volume.voxels().iter().map(|x| *x as f64).collect();
        assert_eq!(got, manual);
        assert_eq!(got, featurize(&v.clone(), &cfg).unwrap());
    }

    #[test]
    fn config_validation() {
        assert!(PreprocessConfig::default().validate().is_ok());
        let bad = PreprocessConfig {
            trim_low_frac: 0.5,
            ..PreprocessConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = PreprocessConfig {
            target_dims: [0, 1, 1],
            ..PreprocessConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    proptest! {
        #[test]
        fn zscore_output_is_standardized(vals in prop::collection::vec(-100.0f32..100.0, 8..64)) {
            let n = vals.len();
            let v = Volume::new([1, 1, n], vals).unwrap();
            let out = normalize(&v, Normalization::Zscore);
            prop_assume!(!out.degenerate);
            let xs: Vec<f64> = out.volume.voxels().iter().map(|x| *x as f64).collect();
            let mean = xs.iter().sum::<f64>() / n as f64;
            let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
            prop_assert!(mean.abs() < 1e-6);
            prop_assert!((std - 1.0).abs() < 1e-6);
        }

        #[test]
        fn zero_trim_after_trim_is_identity(depth in 1usize..20, low in 0.0f64..0.45, high in 0.0f64..0.45) {
            let v = ramp_depth(depth);
            if let Ok(once) = trim_slices(&v, low, high) {
                prop_assert_eq!(trim_slices(&once, 0.0, 0.0).unwrap(), once);
            }
        }

        #[test]
        fn resize_preserves_constants(c in -10.0f32..10.0, d in 1usize..5, h in 1usize..6, w in 1usize..6) {
            let v = Volume::filled([3, 4, 5], c).unwrap();
            let r = resize(&v, [d, h, w]).unwrap();
            prop_assert!(r.voxels().iter().all(|x| *x == c));
        }
    }
}
