//! Run configuration: a training profile, the run seed and optional overrides
//! for the synthetic cohort and the training config.

use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::CohortSpec;
use crate::pipeline::TrainConfig;
use crate::preprocess::PreprocessConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// 30 epochs.
    #[default]
    Desk,
    /// 100 epochs.
    Paper,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

/// The `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub profile: Option<Profile>,
    pub seed: Option<u64>,
    /// Keys overlaid on the default cohort.
    pub cohort: Option<Map<String, Value>>,
    /// Keys overlaid on the profile's training config, including `preprocess`.
    pub train: Option<Map<String, Value>>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: Self = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
        for (name, section) in [("cohort", &file.cohort), ("train", &file.train)] {
            if section.as_ref().is_some_and(|m| m.contains_key("seed")) {
                return Err(Error::InvalidConfig(format!(
                    "`{name}.seed` is not allowed; set the top-level `seed` or pass --seed"
                )));
            }
        }
        Ok(file)
    }
}

/// Everything a command needs besides its own arguments.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub profile: Profile,
    pub seed: Option<u64>,
    pub cohort_overrides: Map<String, Value>,
    pub train_overrides: Map<String, Value>,
    pub out: PathBuf,
    pub format: Format,
}

/// Recursively overlays `patch` onto `base`.
pub fn merge(base: &mut Value, patch: &Map<String, Value>) {
    let Value::Object(target) = base else {
        *base = Value::Object(patch.clone());
        return;
    };
    for (k, v) in patch {
        match (target.get_mut(k), v) {
            (Some(existing @ Value::Object(_)), Value::Object(inner)) => merge(existing, inner),
            _ => {
                target.insert(k.clone(), v.clone());
            }
        }
    }
}

impl RunConfig {
    /// Flags win over the config file.
    pub fn resolve(
        file: Option<ConfigFile>,
        seed: Option<u64>,
        profile: Option<Profile>,
        out: PathBuf,
        format: Format,
    ) -> Self {
        let file = file.unwrap_or_default();
        Self {
            profile: profile.or(file.profile).unwrap_or_default(),
            seed: seed.or(file.seed),
            cohort_overrides: file.cohort.unwrap_or_default(),
            train_overrides: file.train.unwrap_or_default(),
            out,
            format,
        }
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::InvalidConfig("no seed given: pass --seed or set `seed` in the config file".into())
        })
    }

    pub fn cohort(&self) -> Result<CohortSpec> {
        let mut value = CohortSpec::with_seed(self.require_seed()?).to_json();
        merge(&mut value, &self.cohort_overrides);
        CohortSpec::from_json_str(&value.to_string())
    }

    fn train_with_seed(&self, seed: u64) -> Result<TrainConfig> {
        let base = match self.profile {
            Profile::Desk => TrainConfig::desk(seed),
            Profile::Paper => TrainConfig::paper(seed),
        };
        let mut value = serde_json::to_value(base)?;
        merge(&mut value, &self.train_overrides);
        let config: TrainConfig =
            serde_json::from_value(value).map_err(|e| Error::InvalidConfig(format!("train section: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn train(&self) -> Result<TrainConfig> {
        self.train_with_seed(self.require_seed()?)
    }

    /// Preprocessing does not consume randomness, so no seed is needed.
    pub fn preprocess(&self) -> Result<PreprocessConfig> {
        Ok(self.train_with_seed(0)?.preprocess)
    }
}

/// Fails with a validation error when an input path is missing.
pub fn require_exists(path: &Path, what: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{what} {} does not exist", path.display())))
    }
}
