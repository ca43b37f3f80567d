use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::features::{Example, FeatureSet};
use super::train::{train_classifier, History, Stage, StepRecord, Trained};
use crate::data::{class_weights, Dataset, DiseaseLabel, GenderLabel, Split, NUM_DISEASES};
use crate::metrics::MetricsReport;
use crate::nncore::{softmax, MlpModel, ProbVector};
use crate::preprocess::{featurize, PreprocessConfig};
use crate::{Error, Result};

pub const HARD_ROUTING_NOTE: &str =
    "two-stage AUC uses the routed classifier's disease probabilities (hard routing)";
pub const WEIGHTED_BASELINE_NOTE: &str = "baseline trained with weighted cross-entropy over pooled class weights";
pub const ORACLE_ROUTING_NOTE: &str = "samples routed by their true gender label";

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStageModel {
    pub gender_model: MlpModel,
    pub male_disease_model: MlpModel,
    pub female_disease_model: MlpModel,
    pub preprocess: PreprocessConfig,
}

/// The single pooled disease classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub model: MlpModel,
    pub preprocess: PreprocessConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub gender_probs: ProbVector,
    pub routed_gender: GenderLabel,
    pub disease_probs: ProbVector,
    pub disease: DiseaseLabel,
}

fn check_head(model: &MlpModel, width: usize, input: usize, name: &str) -> Result<()> {
    if model.output_dim() != width || model.input_dim() != input {
        return Err(Error::InvalidConfig(format!(
            "{name} model maps {} -> {}, expected {input} -> {width}",
            model.input_dim(),
            model.output_dim()
        )));
    }
    Ok(())
}

impl TwoStageModel {
    pub fn new(
        gender_model: MlpModel,
        male_disease_model: MlpModel,
        female_disease_model: MlpModel,
        preprocess: PreprocessConfig,
    ) -> Result<Self> {
        let n = preprocess.feature_len();
        check_head(&gender_model, 2, n, "gender")?;
        check_head(&male_disease_model, NUM_DISEASES, n, "male disease")?;
        check_head(&female_disease_model, NUM_DISEASES, n, "female disease")?;
        Ok(Self {
            gender_model,
            male_disease_model,
            female_disease_model,
            preprocess,
        })
    }

    pub fn disease_model(&self, gender: GenderLabel) -> &MlpModel {
        match gender {
            GenderLabel::Male => &self.male_disease_model,
            GenderLabel::Female => &self.female_disease_model,
        }
    }

    /// Routes already-featurized input. A gender tie goes to female (index 0).
    pub fn predict_features(&self, features: &[f64]) -> Result<Prediction> {
        let gender_probs = softmax(&self.gender_model.forward(features)?.logits);
        let routed_gender = GenderLabel::from_index(gender_probs.argmax()).expect("2-way head");
        self.route(features, gender_probs, routed_gender)
    }

    /// Skips the gender head and routes by the given label.
    pub fn predict_with_gender(&self, features: &[f64], gender: GenderLabel) -> Result<Prediction> {
        let mut onehot = vec![0.0; 2];
        onehot[gender.index()] = 1.0;
        self.route(features, ProbVector::new(onehot)?, gender)
    }

    fn route(&self, features: &[f64], gender_probs: ProbVector, routed_gender: GenderLabel) -> Result<Prediction> {
        let disease_probs = softmax(&self.disease_model(routed_gender).forward(features)?.logits);
        let disease = DiseaseLabel::from_index(disease_probs.argmax()).expect("4-way head");
        Ok(Prediction {
            gender_probs,
            routed_gender,
            disease_probs,
            disease,
        })
    }
}

impl BaselineModel {
    pub fn new(model: MlpModel, preprocess: PreprocessConfig) -> Result<Self> {
        check_head(&model, NUM_DISEASES, preprocess.feature_len(), "baseline")?;
        Ok(Self { model, preprocess })
    }

    pub fn predict_features(&self, features: &[f64]) -> Result<ProbVector> {
        self.model.predict_proba(features)
    }
}

pub fn predict_two_stage(model: &TwoStageModel, volume: &crate::data::Volume) -> Result<Prediction> {
    model.predict_features(&featurize(volume, &model.preprocess)?)
}

fn gender_label(e: &Example) -> usize {
    e.gender.index()
}

fn disease_label(e: &Example) -> usize {
    e.disease.index()
}

fn disease_weights(examples: &[&Example], config: &TrainConfig) -> Vec<f64> {
    if !config.use_class_weights {
        return vec![1.0; NUM_DISEASES];
    }
    let train: Vec<&Example> = examples.iter().copied().filter(|e| e.split == Split::Train).collect();
    class_weights(&train).weights.to_vec()
}

#[derive(Debug, Clone)]
pub struct TwoStageTraining {
    pub model: TwoStageModel,
    pub gender: History,
    pub male: History,
    pub female: History,
    pub steps: Vec<(Stage, StepRecord)>,
}

impl TwoStageTraining {
    pub fn histories(&self) -> [&History; 3] {
        [&self.gender, &self.male, &self.female]
    }
}

fn check_features(features: &FeatureSet, config: &TrainConfig) -> Result<()> {
    if features.preprocess() != &config.preprocess {
        return Err(Error::InvalidConfig(
            "feature set was built with a different preprocessing config".into(),
        ));
    }
    Ok(())
}

/// Gender head on every sample, then one disease head per true-gender subset.
/// The three runs are independent and train concurrently.
pub fn train_two_stage_features(features: &FeatureSet, config: &TrainConfig) -> Result<TwoStageTraining> {
    config.validate()?;
    check_features(features, config)?;
    let all = features.all();
    let (male, female): (Vec<&Example>, Vec<&Example>) =
        all.iter().copied().partition(|e| e.gender == GenderLabel::Male);
    for (name, subset) in [("male", &male), ("female", &female)] {
        if !subset.iter().any(|e| e.split == Split::Train) {
            return Err(Error::InvalidInput(format!("{name} subset has no training samples")));
        }
    }

    let train_disease = |subset: &[&Example], stage| {
        train_classifier(subset, NUM_DISEASES, &disease_label, config, &disease_weights(subset, config), stage)
    };
    let (g, (m, f)) = rayon::join(
        || train_classifier(&all, 2, &gender_label, config, &[1.0, 1.0], Stage::Gender),
        || {
            rayon::join(
                || train_disease(&male, Stage::Male),
                || train_disease(&female, Stage::Female),
            )
        },
    );
    let (g, m, f): (Trained, Trained, Trained) = (g?, m?, f?);
    let steps = [(Stage::Gender, &g.steps), (Stage::Male, &m.steps), (Stage::Female, &f.steps)]
        .into_iter()
        .flat_map(|(s, v)| v.iter().map(move |r| (s, *r)))
        .collect();
    Ok(TwoStageTraining {
        model: TwoStageModel::new(g.model, m.model, f.model, config.preprocess)?,
        gender: g.history,
        male: m.history,
        female: f.history,
        steps,
    })
}

pub fn train_two_stage(dataset: &Dataset, config: &TrainConfig) -> Result<TwoStageTraining> {
    train_two_stage_features(&FeatureSet::build(dataset, &config.preprocess)?, config)
}

#[derive(Debug, Clone)]
pub struct BaselineTraining {
    pub model: BaselineModel,
    pub history: History,
    pub steps: Vec<StepRecord>,
}

/// One disease head over every training sample, pooled class weights.
pub fn train_baseline_features(features: &FeatureSet, config: &TrainConfig) -> Result<BaselineTraining> {
    config.validate()?;
    check_features(features, config)?;
    let all = features.all();
    let t = train_classifier(&all, NUM_DISEASES, &disease_label, config, &disease_weights(&all, config), Stage::Baseline)?;
    Ok(BaselineTraining {
        model: BaselineModel::new(t.model, config.preprocess)?,
        history: t.history,
        steps: t.steps,
    })
}

pub fn train_baseline(dataset: &Dataset, config: &TrainConfig) -> Result<BaselineTraining> {
    train_baseline_features(&FeatureSet::build(dataset, &config.preprocess)?, config)
}

/// Anything that can be scored on the disease task.
#[derive(Debug, Clone, Copy)]
pub enum Evaluated<'a> {
    TwoStage(&'a TwoStageModel),
    /// Two-stage model with the gender head replaced by the true labels.
    OracleRouted(&'a TwoStageModel),
    Baseline(&'a BaselineModel),
}

impl Evaluated<'_> {
    pub fn preprocess(&self) -> &PreprocessConfig {
        match self {
            Evaluated::TwoStage(m) | Evaluated::OracleRouted(m) => &m.preprocess,
            Evaluated::Baseline(m) => &m.preprocess,
        }
    }

    /// Disease probabilities and, for routed models, the routed gender.
    fn predict(&self, e: &Example) -> Result<(ProbVector, Option<GenderLabel>)> {
        match self {
            Evaluated::TwoStage(m) => {
                let p = m.predict_features(&e.features)?;
                Ok((p.disease_probs, Some(p.routed_gender)))
            }
            Evaluated::OracleRouted(m) => {
                let p = m.predict_with_gender(&e.features, e.gender)?;
                Ok((p.disease_probs, Some(p.routed_gender)))
            }
            Evaluated::Baseline(m) => Ok((m.predict_features(&e.features)?, None)),
        }
    }
}

pub fn disease_names() -> Vec<&'static str> {
    DiseaseLabel::ALL.iter().map(|d| d.name()).collect()
}

/// Scores one split through the shared metrics path.
pub fn evaluate_features(model: Evaluated<'_>, features: &FeatureSet, split: Split) -> Result<MetricsReport> {
    if features.preprocess() != model.preprocess() {
        return Err(Error::InvalidConfig(
            "feature set was built with a different preprocessing config than the model".into(),
        ));
    }
    let examples = features.split(split);
    if examples.is_empty() {
        return Err(Error::InvalidInput(format!("{} split is empty", split.name())));
    }
    let mut probs = Vec::with_capacity(examples.len());
    let mut gender_hits = 0usize;
    for e in &examples {
        let (p, routed) = model.predict(e)?;
        gender_hits += usize::from(routed == Some(e.gender));
        probs.push(p.into_inner());
    }
    let truth: Vec<usize> = examples.iter().map(|e| e.disease.index()).collect();
    let mut report = MetricsReport::from_probabilities(&truth, &probs, &disease_names())?;
    match model {
        Evaluated::TwoStage(_) => {
            report.gender_accuracy = Some(gender_hits as f64 / examples.len() as f64);
            report.notes.push(HARD_ROUTING_NOTE.into());
        }
        Evaluated::OracleRouted(_) => {
            report.notes.push(HARD_ROUTING_NOTE.into());
            report.notes.push(ORACLE_ROUTING_NOTE.into());
        }
        Evaluated::Baseline(_) => report.notes.push(WEIGHTED_BASELINE_NOTE.into()),
    }
    if report.auc_undefined_classes > 0 {
        report.notes.push(format!(
            "{} class(es) absent from the split were left out of macro AUC",
            report.auc_undefined_classes
        ));
    }
    Ok(report)
}

pub fn evaluate(model: Evaluated<'_>, dataset: &Dataset, split: Split) -> Result<MetricsReport> {
    let features = FeatureSet::build(&dataset.split(split), model.preprocess())?;
    evaluate_features(model, &features, split)
}
