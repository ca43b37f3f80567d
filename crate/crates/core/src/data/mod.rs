//! Volumes, labels, datasets and synthetic cohorts.

pub mod dataset;
pub mod labels;
pub mod synth;
pub mod volume;

pub use dataset::{
    batches, class_weights, class_weights_from_counts, load_manifest, split_by_gender, write_manifest, ClassWeights,
    Dataset, Sample, VolumeSource,
};
pub use labels::{DiseaseLabel, GenderLabel, Labeled, Split, NUM_DISEASES};
pub use synth::{generate_synthetic, CohortCounts, CohortSpec};
pub use volume::{load_volume, save_volume, Dims, Volume};
