//! Checkpoint directories: one `.lmlp` file per network, the preprocessing
//! config and a metadata document.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::train::History;
use super::two_stage::{BaselineModel, TwoStageModel};
use crate::nncore::{load_model, save_model};
use crate::preprocess::PreprocessConfig;
use crate::{Error, Result};

pub const METADATA_FILE: &str = "metadata.json";
pub const PREPROCESS_FILE: &str = "preprocess.json";
pub const GENDER_FILE: &str = "gender.lmlp";
pub const MALE_FILE: &str = "male.lmlp";
pub const FEMALE_FILE: &str = "female.lmlp";
pub const BASELINE_FILE: &str = "baseline.lmlp";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    TwoStage,
    Baseline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub kind: CheckpointKind,
    pub seed: u64,
    pub config_hash: String,
    pub config: TrainConfig,
    pub manifest_hash: Option<String>,
    pub histories: Vec<History>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Checkpoint {
    TwoStage(TwoStageModel),
    Baseline(BaselineModel),
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))
}

fn prepare(dir: &Path, preprocess: &PreprocessConfig, metadata: &Metadata) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_json(preprocess, &dir.join(PREPROCESS_FILE))?;
    write_json(metadata, &dir.join(METADATA_FILE))
}

pub fn save_two_stage(model: &TwoStageModel, metadata: &Metadata, dir: &Path) -> Result<()> {
    prepare(dir, &model.preprocess, metadata)?;
    save_model(&model.gender_model, &dir.join(GENDER_FILE))?;
    save_model(&model.male_disease_model, &dir.join(MALE_FILE))?;
    save_model(&model.female_disease_model, &dir.join(FEMALE_FILE))
}

pub fn save_baseline(model: &BaselineModel, metadata: &Metadata, dir: &Path) -> Result<()> {
    prepare(dir, &model.preprocess, metadata)?;
    save_model(&model.model, &dir.join(BASELINE_FILE))
}

pub fn load_metadata(dir: &Path) -> Result<Metadata> {
    read_json(&dir.join(METADATA_FILE))
}

pub fn load_checkpoint(dir: &Path) -> Result<(Checkpoint, Metadata)> {
    let metadata = load_metadata(dir)?;
    let preprocess: PreprocessConfig = read_json(&dir.join(PREPROCESS_FILE))?;
    preprocess.validate()?;
    let checkpoint = match metadata.kind {
        CheckpointKind::TwoStage => Checkpoint::TwoStage(TwoStageModel::new(
            load_model(&dir.join(GENDER_FILE))?,
            load_model(&dir.join(MALE_FILE))?,
            load_model(&dir.join(FEMALE_FILE))?,
            preprocess,
        )?),
        CheckpointKind::Baseline => {
            Checkpoint::Baseline(BaselineModel::new(load_model(&dir.join(BASELINE_FILE))?, preprocess)?)
        }
    };
    Ok((checkpoint, metadata))
}
