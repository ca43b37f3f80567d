use rayon::prelude::*;

use crate::data::{Dataset, DiseaseLabel, GenderLabel, Labeled, Split};
use crate::preprocess::{featurize, PreprocessConfig};
use crate::Result;

/// A featurized sample with its labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub id: String,
    pub features: Vec<f64>,
    pub gender: GenderLabel,
    pub disease: DiseaseLabel,
    pub split: Split,
}

impl Labeled for Example {
    fn gender(&self) -> GenderLabel {
        self.gender
    }
    fn disease(&self) -> DiseaseLabel {
        self.disease
    }
    fn split(&self) -> Split {
        self.split
    }
}

/// Every sample of a dataset pushed through one preprocessing config.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    preprocess: PreprocessConfig,
    examples: Vec<Example>,
}

impl FeatureSet {
    pub fn build(dataset: &Dataset, preprocess: &PreprocessConfig) -> Result<Self> {
        preprocess.validate()?;
        let examples = dataset
            .samples()
            .par_iter()
            .map(|s| {
                let volume = s.load_volume()?;
                Ok(Example {
                    id: s.id.clone(),
                    features: featurize(&volume, preprocess)?,
                    gender: s.gender,
                    disease: s.disease,
                    split: s.split,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            preprocess: *preprocess,
            examples,
        })
    }

    pub fn from_examples(preprocess: PreprocessConfig, examples: Vec<Example>) -> Self {
        Self { preprocess, examples }
    }

    pub fn preprocess(&self) -> &PreprocessConfig {
        &self.preprocess
    }

    pub fn examples(&self) -> &[Example] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn all(&self) -> Vec<&Example> {
        self.examples.iter().collect()
    }

    pub fn split(&self, split: Split) -> Vec<&Example> {
        self.examples.iter().filter(|e| e.split == split).collect()
    }
}
