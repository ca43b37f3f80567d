use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::nncore::{AdamConfig, LrSchedule};
use crate::preprocess::PreprocessConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    #[default]
    MacroF1,
    Accuracy,
}

/// Peak rate, floor and warmup share. The step count comes from the data.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleConfig {
    pub peak_lr: f64,
    pub min_lr: f64,
    pub warmup_fraction: f64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            peak_lr: 1e-4,
            min_lr: 1e-6,
            warmup_fraction: 0.05,
        }
    }
}

impl ScheduleConfig {
    pub fn schedule(&self, total_steps: usize) -> Result<LrSchedule> {
        LrSchedule::with_warmup_fraction(self.peak_lr, self.min_lr, self.warmup_fraction, total_steps)
    }
}

fn default_epochs() -> usize {
    100
}
fn default_batch_size() -> usize {
    8
}
fn default_hidden() -> Vec<usize> {
    vec![256, 64]
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub schedule: ScheduleConfig,
    /// No default: every run names its seed.
    pub seed: u64,
    #[serde(default)]
    pub preprocess: PreprocessConfig,
    #[serde(default = "default_hidden")]
    pub hidden_dims: Vec<usize>,
    #[serde(default)]
    pub selection_metric: SelectionMetric,
    /// Applies to the disease heads. The gender head is always unweighted.
    #[serde(default = "yes")]
    pub use_class_weights: bool,
    #[serde(default)]
    pub adam: AdamConfig,
}

impl TrainConfig {
    /// 100 epochs, batch 8, peak 1e-4.
    pub fn paper(seed: u64) -> Self {
        Self {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            schedule: ScheduleConfig::default(),
            seed,
            preprocess: PreprocessConfig::default(),
            hidden_dims: default_hidden(),
            selection_metric: SelectionMetric::MacroF1,
            use_class_weights: true,
            adam: AdamConfig::default(),
        }
    }

    /// Same as [`TrainConfig::paper`] with 30 epochs.
    pub fn desk(seed: u64) -> Self {
        Self {
            epochs: 30,
            ..Self::paper(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidConfig("batch_size must be positive".into()));
        }
        if self.hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "hidden dims must be positive, got {:?}",
                self.hidden_dims
            )));
        }
        let s = &self.schedule;
        if !(s.peak_lr.is_finite() && s.min_lr >= 0.0 && s.min_lr <= s.peak_lr) {
            return Err(Error::InvalidConfig(format!(
                "need 0 <= min_lr <= peak_lr, got min {} peak {}",
                s.min_lr, s.peak_lr
            )));
        }
        if !(0.0..1.0).contains(&s.warmup_fraction) {
            return Err(Error::InvalidConfig(format!(
                "warmup_fraction {} outside [0, 1)",
                s.warmup_fraction
            )));
        }
        let a = &self.adam;
        if !((0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.epsilon > 0.0) {
            return Err(Error::InvalidConfig("adam betas must lie in [0, 1) and epsilon be positive".into()));
        }
        self.preprocess.validate()
    }

    pub fn layer_dims(&self, head_width: usize) -> Vec<usize> {
        let mut dims = Vec::with_capacity(self.hidden_dims.len() + 2);
        dims.push(self.preprocess.feature_len());
        dims.extend(&self.hidden_dims);
        dims.push(head_width);
        dims
    }

    /// SHA-256 of the compact JSON form.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_is_required() {
        let err = serde_json::from_str::<TrainConfig>("{}").unwrap_err();
        assert!(err.to_string().contains("seed"));
        let cfg: TrainConfig = serde_json::from_str(r#"{"seed": 5}"#).unwrap();
        assert_eq!(cfg, TrainConfig::paper(5));
    }

    #[test]
    fn profiles() {
        let desk = TrainConfig::desk(1);
        assert_eq!((desk.epochs, desk.batch_size, desk.schedule.peak_lr), (30, 8, 1e-4));
        assert_eq!(desk.schedule.min_lr, desk.schedule.peak_lr / 100.0);
        assert_eq!(TrainConfig::paper(1).epochs, 100);
        assert_eq!(desk.layer_dims(4), vec![8 * 32 * 32, 256, 64, 4]);
        desk.validate().unwrap();
    }

    #[test]
    fn hash_tracks_content() {
        let a = TrainConfig::desk(1);
        assert_eq!(a.hash(), TrainConfig::desk(1).hash());
        assert_ne!(a.hash(), TrainConfig::desk(2).hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn validation() {
        let mut c = TrainConfig::desk(0);
        c.batch_size = 0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::desk(0);
        c.schedule.min_lr = 1.0;
        assert!(c.validate().is_err());
        let mut c = TrainConfig::desk(0);
        c.hidden_dims = vec![0];
        assert!(c.validate().is_err());
        assert!(serde_json::from_str::<TrainConfig>(r#"{"seed": 1, "epoch": 3}"#).is_err());
    }
}
