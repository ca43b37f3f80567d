use serde::{Deserialize, Serialize};

use super::config::{SelectionMetric, TrainConfig};
use super::features::Example;
use crate::data::Split;
use crate::metrics::{confusion, macro_scores};
use crate::nncore::{argmax, train_step, AdamState, Gradients, MlpModel};
use crate::rng::{role_seed, SeedRole};
use crate::{data, Error, Result};

/// Which of the four trained networks a run belongs to. Fixes its seeds and name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Gender,
    Male,
    Female,
    Baseline,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Gender => "gender",
            Stage::Male => "male",
            Stage::Female => "female",
            Stage::Baseline => "baseline",
        }
    }

    fn roles(self) -> (SeedRole, SeedRole) {
        match self {
            Stage::Gender => (SeedRole::GenderInit, SeedRole::GenderShuffle),
            Stage::Male => (SeedRole::MaleInit, SeedRole::MaleShuffle),
            Stage::Female => (SeedRole::FemaleInit, SeedRole::FemaleShuffle),
            Stage::Baseline => (SeedRole::BaselineInit, SeedRole::BaselineShuffle),
        }
    }

    pub fn init_seed(self, seed: u64) -> u64 {
        role_seed(seed, self.roles().0)
    }

    pub fn shuffle_seed(self, seed: u64) -> u64 {
        role_seed(seed, self.roles().1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub mean_loss: f64,
    pub last_lr: f64,
    pub val_accuracy: f64,
    pub val_macro_f1: f64,
}

impl EpochRecord {
    pub fn metric(&self, metric: SelectionMetric) -> f64 {
        match metric {
            SelectionMetric::MacroF1 => self.val_macro_f1,
            SelectionMetric::Accuracy => self.val_accuracy,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// 0-based optimizer step.
    pub step: usize,
    pub epoch: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub stage: Stage,
    pub train_samples: usize,
    pub val_samples: usize,
    pub class_weights: Vec<f64>,
    pub selection_metric: SelectionMetric,
    pub best_epoch: usize,
    pub epochs: Vec<EpochRecord>,
}

impl History {
    pub fn best(&self) -> &EpochRecord {
        &self.epochs[self.best_epoch - 1]
    }
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub model: MlpModel,
    pub history: History,
    pub steps: Vec<StepRecord>,
}

/// Index of the first maximum.
pub fn select_best(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if best.is_none_or(|b| *v > values[b]) {
            best = Some(i);
        }
    }
    best
}

fn val_scores(model: &MlpModel, val: &[&Example], label: &dyn Fn(&Example) -> usize, classes: usize) -> Result<(f64, f64)> {
    let inputs: Vec<&[f64]> = val.iter().map(|e| e.features.as_slice()).collect();
    let predicted: Vec<usize> = model.logits_batch(&inputs)?.iter().map(|l| argmax(l)).collect();
    let truth: Vec<usize> = val.iter().map(|e| label(e)).collect();
    let m = macro_scores(&confusion(&truth, &predicted, classes)?)?;
    Ok((m.accuracy, m.macro_f1))
}

/// Trains one classifier on the train split of `examples` and keeps the
/// parameters from the epoch with the best validation score.
pub fn train_classifier(
    examples: &[&Example],
    head_width: usize,
    label: &dyn Fn(&Example) -> usize,
    config: &TrainConfig,
    class_weights: &[f64],
    stage: Stage,
) -> Result<Trained> {
    config.validate()?;
    let train: Vec<&Example> = examples.iter().copied().filter(|e| e.split == Split::Train).collect();
    let val: Vec<&Example> = examples.iter().copied().filter(|e| e.split == Split::Val).collect();
    for (name, part) in [("train", &train), ("val", &val)] {
        if part.is_empty() {
            return Err(Error::InvalidInput(format!("{} stage has an empty {name} split", stage.name())));
        }
    }
    if let Some(e) = examples.iter().find(|e| label(e) >= head_width) {
        return Err(Error::InvalidInput(format!(
            "sample {} has label {} for a {head_width}-way head",
            e.id,
            label(e)
        )));
    }

    let mut model = MlpModel::seeded(&config.layer_dims(head_width), stage.init_seed(config.seed))?;
    let mut adam = AdamState::new(&model, config.adam);
    let mut grads = Gradients::zeros_like(&model);
    let steps_per_epoch = train.len().div_ceil(config.batch_size);
    let schedule = config.schedule.schedule(config.epochs * steps_per_epoch)?;
    let shuffle_seed = stage.shuffle_seed(config.seed);

    let mut steps = Vec::with_capacity(schedule.total_steps);
    let mut records = Vec::with_capacity(config.epochs);
    let mut best: Option<(f64, MlpModel)> = None;
    let mut step = 0;
    for epoch in 1..=config.epochs {
        let mut loss_sum = 0.0;
        let mut lr = 0.0;
        let batches = data::batches(train.len(), config.batch_size, shuffle_seed, epoch as u64);
        for batch in &batches {
            let inputs: Vec<&[f64]> = batch.iter().map(|&i| train[i].features.as_slice()).collect();
            let targets: Vec<usize> = batch.iter().map(|&i| label(train[i])).collect();
            lr = schedule.lr_at(step)?;
            let loss = train_step(&mut model, &mut adam, &inputs, &targets, class_weights, lr, &mut grads)?;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    model: stage.name().to_string(),
                    step,
                    lr,
                });
            }
            steps.push(StepRecord { step, epoch, lr, loss });
            loss_sum += loss;
            step += 1;
        }
        let (val_accuracy, val_macro_f1) = val_scores(&model, &val, label, head_width)?;
        let record = EpochRecord {
            epoch,
            mean_loss: loss_sum / batches.len() as f64,
            last_lr: lr,
            val_accuracy,
            val_macro_f1,
        };
        let score = record.metric(config.selection_metric);
        if best.as_ref().is_none_or(|(b, _)| score > *b) {
            best = Some((score, model.clone()));
        }
        records.push(record);
    }

    let scores: Vec<f64> = records.iter().map(|r| r.metric(config.selection_metric)).collect();
    let best_epoch = select_best(&scores).expect("at least one epoch") + 1;
    Ok(Trained {
        model: best.expect("at least one epoch").1,
        history: History {
            stage,
            train_samples: train.len(),
            val_samples: val.len(),
            class_weights: class_weights.to_vec(),
            selection_metric: config.selection_metric,
            best_epoch,
            epochs: records,
        },
        steps,
    })
}
