//! Samples, datasets, gender splitting, class weights, batching and the
//! JSON Lines manifest.

use std::borrow::Cow;
use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::labels::{DiseaseLabel, GenderLabel, Labeled, Split, NUM_DISEASES};
use super::volume::{load_volume, Volume};
use crate::{rng, Error, Result};

/// Where a sample's voxels live.
#[derive(Debug, Clone, PartialEq)]
pub enum VolumeSource {
    InMemory(Arc<Volume>),
    File(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub volume: VolumeSource,
    pub gender: GenderLabel,
    pub disease: DiseaseLabel,
    pub split: Split,
}

impl Sample {
    pub fn load_volume(&self) -> Result<Cow<'_, Volume>> {
        match &self.volume {
            VolumeSource::InMemory(v) => Ok(Cow::Borrowed(v.as_ref())),
            VolumeSource::File(path) => load_volume(path).map(Cow::Owned),
        }
    }
}

impl Labeled for Sample {
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

/// An ordered collection of samples with unique ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    samples: Vec<Sample>,
}

impl Dataset {
    pub fn new(samples: Vec<Sample>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !seen.insert(s.id.as_str()) {
                return Err(Error::Validation {
                    id: s.id.clone(),
                    message: "duplicate sample id".into(),
                });
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Sample> {
        self.samples.iter()
    }

    /// Samples of one split, in order.
    pub fn split(&self, split: Split) -> Dataset {
        Dataset {
            samples: self.samples.iter().filter(|s| s.split == split).cloned().collect(),
        }
    }

    /// `(male, female)` partition preserving input order.
    pub fn split_by_gender(&self) -> (Dataset, Dataset) {
        let (male, female) = split_by_gender(&self.samples);
        (Dataset { samples: male }, Dataset { samples: female })
    }

    pub fn class_weights(&self) -> ClassWeights {
        class_weights(&self.samples)
    }

    /// Seeded batches of samples for one epoch.
    pub fn batches(&self, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<&Sample>> {
        batches(self.samples.len(), batch_size, seed, epoch)
            .into_iter()
            .map(|b| b.into_iter().map(|i| &self.samples[i]).collect())
            .collect()
    }
}

impl<'a> IntoIterator for &'a Dataset {
    type Item = &'a Sample;
    type IntoIter = std::slice::Iter<'a, Sample>;

    fn into_iter(self) -> Self::IntoIter {
        self.samples.iter()
    }
}

/// Partitions items into `(male, female)`, keeping relative order.
pub fn split_by_gender<T: Labeled + Clone>(items: &[T]) -> (Vec<T>, Vec<T>) {
    items.iter().cloned().partition(|s| s.gender() == GenderLabel::Male)
}

/// Inverse-frequency class weights `N / (C * n_c)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights {
    pub weights: Vec<f64>,
    pub counts: Vec<usize>,
    /// Classes with no samples; their weight is 0.
    pub empty_classes: Vec<DiseaseLabel>,
}

impl ClassWeights {
    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

pub fn class_weights_from_counts(counts: &[usize; NUM_DISEASES]) -> ClassWeights {
    let total: usize = counts.iter().sum();
    let c = NUM_DISEASES as f64;
    let weights = counts
        .iter()
        .map(|&n| if n == 0 { 0.0 } else { total as f64 / (c * n as f64) })
        .collect();
    let empty_classes = DiseaseLabel::ALL
        .into_iter()
        .filter(|d| counts[d.index()] == 0)
        .collect();
    ClassWeights {
        weights,
        counts: counts.to_vec(),
        empty_classes,
    }
}

pub fn class_weights<T: Labeled>(items: &[T]) -> ClassWeights {
    let mut counts = [0usize; NUM_DISEASES];
    for s in items {
        counts[s.disease().index()] += 1;
    }
    class_weights_from_counts(&counts)
}

/// A seeded permutation of `0..len` for `(seed, epoch)`, chunked into
/// batches of `batch_size`; the last batch may be short.
pub fn batches(len: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch size must be positive");
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng::stream(seed, epoch));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct ManifestRecord {
    id: String,
    volume: String,
    gender: String,
    disease: String,
    split: String,
}

fn parse_record(rec: ManifestRecord, base: &Path) -> Result<Sample> {
    let invalid = |message: String| Error::Validation {
        id: rec.id.clone(),
        message,
    };
    let gender = rec.gender.parse().map_err(invalid)?;
    let disease = rec.disease.parse().map_err(invalid)?;
    let split = rec.split.parse().map_err(invalid)?;
    let path = Path::new(&rec.volume);
    let path = if path.is_absolute() { path.to_path_buf() } else { base.join(path) };
    Ok(Sample {
        id: rec.id,
        volume: VolumeSource::File(path),
        gender,
        disease,
        split,
    })
}

/// Reads a JSON Lines manifest. Relative volume paths resolve against the
/// manifest's directory.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let mut samples = Vec::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ManifestRecord = serde_json::from_str(&line).map_err(|e| Error::Validation {
            id: format!("line {}", lineno + 1),
            message: format!("malformed manifest record: {e}"),
        })?;
        samples.push(parse_record(rec, base)?);
    }
    Dataset::new(samples)
}

/// Writes a manifest; volume paths are written relative to `base` when possible.
pub fn write_manifest(dataset: &Dataset, path: &Path, base: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for s in dataset {
        let volume = match &s.volume {
            VolumeSource::File(p) => p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned(),
            VolumeSource::InMemory(_) => {
                return Err(Error::InvalidInput(format!(
                    "sample `{}` has no volume file to reference",
                    s.id
                )))
            }
        };
        let rec = ManifestRecord {
            id: s.id.clone(),
            volume,
            gender: s.gender.code().into(),
            disease: s.disease.name().into(),
            split: s.split.name().into(),
        };
        serde_json::to_writer(&mut w, &rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
