//! Seeded synthetic cohorts.
//!
//! Each volume is a sum of separable Gaussian blobs over a unit cube plus
//! i.i.d. Gaussian noise. A broad "anatomy" blob is present in every sample;
//! each disease adds its own lesion blobs. Every blob center is displaced by
//! `+gender_shift` (male) or `-gender_shift` (female) along the x axis, so
//! with the default shift a female squamous lesion lands where a male
//! adenocarcinoma lesion sits. Only the anatomy blob disambiguates them,
//! which a pooled classifier has to learn from five female squamous cases.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::dataset::{Dataset, Sample, VolumeSource};
use super::labels::{DiseaseLabel, GenderLabel, Labeled, Split, NUM_DISEASES};
use super::volume::{Dims, Volume};
use crate::{rng, Error, Result};

/// Sample counts per `(split, disease, gender)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CohortCounts([[[usize; 2]; NUM_DISEASES]; 2]);

impl CohortCounts {
    /// The published training/validation distribution.
    pub const TABLE: CohortCounts = CohortCounts([
        [[125, 125], [5, 79], [100, 100], [100, 100]],
        [[25, 25], [13, 12], [20, 20], [20, 20]],
    ]);

    pub fn zeros() -> Self {
        CohortCounts([[[0; 2]; NUM_DISEASES]; 2])
    }

    pub fn get(&self, split: Split, disease: DiseaseLabel, gender: GenderLabel) -> usize {
        self.0[split as usize][disease.index()][gender.index()]
    }

    pub fn set(&mut self, split: Split, disease: DiseaseLabel, gender: GenderLabel, n: usize) {
        self.0[split as usize][disease.index()][gender.index()] = n;
    }

    pub fn total(&self) -> usize {
        self.0.iter().flatten().flatten().sum()
    }

    pub fn split_total(&self, split: Split) -> usize {
        self.0[split as usize].iter().flatten().sum()
    }

    pub fn cells(&self) -> impl Iterator<Item = (Split, DiseaseLabel, GenderLabel, usize)> + '_ {
        Split::ALL.into_iter().flat_map(move |s| {
            DiseaseLabel::ALL.into_iter().flat_map(move |d| {
                GenderLabel::ALL
                    .into_iter()
                    .map(move |g| (s, d, g, self.get(s, d, g)))
            })
        })
    }

    /// Tallies the cells of an existing dataset.
    pub fn tally<T: Labeled>(items: &[T]) -> Self {
        let mut counts = Self::zeros();
        for s in items {
            counts.0[s.split() as usize][s.disease().index()][s.gender().index()] += 1;
        }
        counts
    }

    pub fn to_json(self) -> Value {
        let mut splits = serde_json::Map::new();
        for s in Split::ALL {
            let mut diseases = serde_json::Map::new();
            for d in DiseaseLabel::ALL {
                let mut genders = serde_json::Map::new();
                for g in GenderLabel::ALL {
                    genders.insert(g.code().into(), self.get(s, d, g).into());
                }
                diseases.insert(d.name().into(), genders.into());
            }
            splits.insert(s.name().into(), diseases.into());
        }
        splits.into()
    }

    fn from_raw(raw: &BTreeMap<String, BTreeMap<String, BTreeMap<String, i64>>>) -> Result<Self> {
        let mut counts = Self::zeros();
        for (split_name, diseases) in raw {
            let split: Split = split_name.parse().map_err(Error::InvalidConfig)?;
            for (disease_name, genders) in diseases {
                let disease: DiseaseLabel = disease_name.parse().map_err(Error::InvalidConfig)?;
                for (gender_name, n) in genders {
                    let gender: GenderLabel = gender_name.parse().map_err(Error::InvalidConfig)?;
                    if *n < 0 {
                        return Err(Error::InvalidConfig(format!(
                            "count for cell {split}/{disease}/{gender} is negative ({n})"
                        )));
                    }
                    counts.set(split, disease, gender, *n as usize);
                }
            }
        }
        for s in Split::ALL {
            for d in DiseaseLabel::ALL {
                for g in GenderLabel::ALL {
                    let present = raw
                        .get(s.name())
                        .and_then(|m| m.get(d.name()))
                        .is_some_and(|m| m.contains_key(g.code()));
                    if !present {
                        return Err(Error::InvalidConfig(format!("missing count for cell {s}/{d}/{g}")));
                    }
                }
            }
        }
        Ok(counts)
    }

    /// Plain-text table with one row per disease and Train/Val × F/M columns.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<24} | {:>7} | {:>7} | {:>5} | {:>5}", "Disease", "Train F", "Train M", "Val F", "Val M");
        let mut col = [0usize; 4];
        for d in DiseaseLabel::ALL {
            let row = [
                self.get(Split::Train, d, GenderLabel::Female),
                self.get(Split::Train, d, GenderLabel::Male),
                self.get(Split::Val, d, GenderLabel::Female),
                self.get(Split::Val, d, GenderLabel::Male),
            ];
            for (c, r) in col.iter_mut().zip(row) {
                *c += r;
            }
            let _ = writeln!(
                out,
                "{:<24} | {:>7} | {:>7} | {:>5} | {:>5}",
                d.display_name(),
                row[0],
                row[1],
                row[2],
                row[3]
            );
        }
        let _ = writeln!(out, "{:<24} | {:>7} | {:>7} | {:>5} | {:>5}", "Total", col[0], col[1], col[2], col[3]);
        let _ = writeln!(
            out,
            "train total {} / val total {}",
            self.split_total(Split::Train),
            self.split_total(Split::Val)
        );
        out
    }
}

/// Parameters of a synthetic cohort.
#[derive(Debug, Clone, PartialEq)]
pub struct CohortSpec {
    pub counts: CohortCounts,
    /// Standard deviation of the i.i.d. voxel noise.
    pub noise_sigma: f64,
    /// Displacement of every blob center along x, in unit-cube coordinates.
    pub gender_shift: f64,
    /// Multiplier on lesion amplitudes.
    pub class_separation: f64,
    pub dims: Dims,
    pub seed: u64,
}

pub const DEFAULT_NOISE_SIGMA: f64 = 0.15;
pub const DEFAULT_GENDER_SHIFT: f64 = 0.1;
pub const DEFAULT_CLASS_SEPARATION: f64 = 1.0;
pub const DEFAULT_VOLUME_DIMS: Dims = [16, 64, 64];

impl Default for CohortSpec {
    fn default() -> Self {
        Self {
            counts: CohortCounts::TABLE,
            noise_sigma: DEFAULT_NOISE_SIGMA,
            gender_shift: DEFAULT_GENDER_SHIFT,
            class_separation: DEFAULT_CLASS_SEPARATION,
            dims: DEFAULT_VOLUME_DIMS,
            seed: 0,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCohortSpec {
    counts: BTreeMap<String, BTreeMap<String, BTreeMap<String, i64>>>,
    noise_sigma: f64,
    gender_shift: f64,
    class_separation: f64,
    dims: [i64; 3],
    seed: u64,
}

impl CohortSpec {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::InvalidConfig(format!("noise_sigma must be > 0, got {}", self.noise_sigma)));
        }
        if !(self.gender_shift >= 0.0 && self.gender_shift.is_finite()) {
            return Err(Error::InvalidConfig(format!("gender_shift must be >= 0, got {}", self.gender_shift)));
        }
        if !(self.class_separation > 0.0 && self.class_separation.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "class_separation must be > 0, got {}",
                self.class_separation
            )));
        }
        if self.dims.contains(&0) {
            return Err(Error::InvalidConfig(format!("volume dims must be positive, got {:?}", self.dims)));
        }
        if self.counts.total() == 0 {
            return Err(Error::InvalidConfig("cohort has zero samples".into()));
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let raw: RawCohortSpec = serde_json::from_str(text)?;
        if let Some(d) = raw.dims.iter().find(|d| **d <= 0) {
            return Err(Error::InvalidConfig(format!("volume dims must be positive, got {d}")));
        }
        let spec = Self {
            counts: CohortCounts::from_raw(&raw.counts)?,
            noise_sigma: raw.noise_sigma,
            gender_shift: raw.gender_shift,
            class_separation: raw.class_separation,
            dims: raw.dims.map(|d| d as usize),
            seed: raw.seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> Value {
        serde_json::json!({
            "counts": self.counts.to_json(),
            "noise_sigma": self.noise_sigma,
            "gender_shift": self.gender_shift,
            "class_separation": self.class_separation,
            "dims": self.dims,
            "seed": self.seed,
        })
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(&self.to_json()).expect("cohort spec serializes")
    }
}

impl Serialize for CohortSpec {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_json().serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for CohortSpec {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let value = Value::deserialize(deserializer)?;
        CohortSpec::from_json_str(&value.to_string()).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    center: [f64; 3],
    sigma: [f64; 3],
    amplitude: f64,
}

const ANATOMY: Blob = Blob {
    center: [0.5, 0.5, 0.5],
    sigma: [0.35, 0.25, 0.22],
    amplitude: 1.0,
};

/// Lesion blobs of each disease before gender displacement.
fn lesions(disease: DiseaseLabel) -> &'static [Blob] {
    match disease {
        DiseaseLabel::Adenocarcinoma => &[Blob {
            center: [0.5, 0.38, 0.30],
            sigma: [0.12, 0.06, 0.06],
            amplitude: 1.0,
        }],
        DiseaseLabel::SquamousCellCarcinoma => &[Blob {
            center: [0.5, 0.38, 0.50],
            sigma: [0.12, 0.065, 0.065],
            amplitude: 1.0,
        }],
        DiseaseLabel::Covid19 => &[
            Blob {
                center: [0.5, 0.66, 0.30],
                sigma: [0.18, 0.09, 0.09],
                amplitude: 0.6,
            },
            Blob {
                center: [0.5, 0.66, 0.70],
                sigma: [0.18, 0.09, 0.09],
                amplitude: 0.6,
            },
        ],
        DiseaseLabel::Normal => &[],
    }
}

const CENTER_JITTER: f64 = 0.02;
const AMPLITUDE_JITTER: f64 = 0.1;

fn add_blob(voxels: &mut [f32], dims: Dims, blob: &Blob) {
    let profile = |axis: usize| -> Vec<f64> {
        let n = dims[axis];
        (0..n)
            .map(|i| {
                let u = (i as f64 + 0.5) / n as f64;
                let d = (u - blob.center[axis]) / blob.sigma[axis];
                (-0.5 * d * d).exp()
            })
            .collect()
    };
    let (pz, py, px) = (profile(0), profile(1), profile(2));
    let plane = dims[1] * dims[2];
    for (z, gz) in pz.iter().enumerate() {
        for (y, gy) in py.iter().enumerate() {
            let scale = blob.amplitude * gz * gy;
            let row = &mut voxels[z * plane + y * dims[2]..z * plane + (y + 1) * dims[2]];
            for (v, gx) in row.iter_mut().zip(&px) {
                *v += (scale * gx) as f32;
            }
        }
    }
}

/// Renders one sample's volume from its own random stream.
pub fn render_volume(spec: &CohortSpec, disease: DiseaseLabel, gender: GenderLabel, stream: u64) -> Volume {
    let mut rng = rng::stream(spec.seed, stream);
    let sign = match gender {
        GenderLabel::Male => 1.0,
        GenderLabel::Female => -1.0,
    };
    let count: usize = spec.dims.iter().product();
    let mut voxels = vec![0.0f32; count];

    let mut anatomy = ANATOMY;
    anatomy.center[2] += sign * spec.gender_shift;
    anatomy.amplitude *= 1.0 + 0.05 * rng.sample::<f64, _>(StandardNormal);
    add_blob(&mut voxels, spec.dims, &anatomy);

    for base in lesions(disease) {
        let mut blob = *base;
        for c in &mut blob.center {
            *c += CENTER_JITTER * rng.sample::<f64, _>(StandardNormal);
        }
        blob.center[2] += sign * spec.gender_shift;
        blob.amplitude *= spec.class_separation * (1.0 + AMPLITUDE_JITTER * rng.sample::<f64, _>(StandardNormal));
        add_blob(&mut voxels, spec.dims, &blob);
    }

    for v in &mut voxels {
        *v += (spec.noise_sigma * rng.sample::<f64, _>(StandardNormal)) as f32;
    }
    Volume::new(spec.dims, voxels).expect("rendered volume is finite and well-shaped")
}

/// Generates the cohort with exactly the requested cell counts.
///
/// Samples are ordered by split, disease, gender; sample `i` draws from
/// stream `i` of the seed, so generation order does not affect the result.
pub fn generate_synthetic(spec: &CohortSpec) -> Result<Dataset> {
    spec.validate()?;
    let cells: Vec<(Split, DiseaseLabel, GenderLabel)> = spec
        .counts
        .cells()
        .flat_map(|(s, d, g, n)| std::iter::repeat_n((s, d, g), n))
        .collect();
    let samples = cells
        .into_par_iter()
        .enumerate()
        .map(|(i, (split, disease, gender))| Sample {
            id: format!("syn-{i:05}"),
            volume: VolumeSource::InMemory(Arc::new(render_volume(spec, disease, gender, i as u64))),
            gender,
            disease,
            split,
        })
        .collect();
    Dataset::new(samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec(seed: u64) -> CohortSpec {
        let mut counts = CohortCounts::zeros();
        counts.set(Split::Train, DiseaseLabel::Covid19, GenderLabel::Male, 3);
        counts.set(Split::Val, DiseaseLabel::Normal, GenderLabel::Female, 2);
        CohortSpec {
            counts,
            dims: [4, 8, 8],
            seed,
            ..CohortSpec::default()
        }
    }

    #[test]
    fn table_totals() {
        let c = CohortCounts::TABLE;
        assert_eq!(c.split_total(Split::Train), 734);
        assert_eq!(c.split_total(Split::Val), 155);
        assert_eq!(c.get(Split::Train, DiseaseLabel::SquamousCellCarcinoma, GenderLabel::Female), 5);
        assert_eq!(c.get(Split::Val, DiseaseLabel::SquamousCellCarcinoma, GenderLabel::Male), 12);
    }

    #[test]
    fn counts_and_determinism() {
        let a = generate_synthetic(&small_spec(1)).unwrap();
        assert_eq!(CohortCounts::tally(a.samples()), small_spec(1).counts);
        let b = generate_synthetic(&small_spec(1)).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&small_spec(2)).unwrap();
        assert_ne!(a.samples()[0].load_volume().unwrap().voxels(), c.samples()[0].load_volume().unwrap().voxels());
    }

    #[test]
    fn empty_cohort_rejected() {
        let spec = CohortSpec {
            counts: CohortCounts::zeros(),
            ..CohortSpec::default()
        };
        assert!(matches!(generate_synthetic(&spec), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn json_round_trip_and_negative_cell() {
        let spec = CohortSpec::with_seed(9);
        let back = CohortSpec::from_json_str(&spec.to_json_pretty()).unwrap();
        assert_eq!(back, spec);

        let mut json = spec.to_json();
        json["counts"]["train"]["squamous_cell_carcinoma"]["F"] = (-3).into();
        let err = CohortSpec::from_json_str(&json.to_string()).unwrap_err();
        assert!(err.to_string().contains("train/squamous_cell_carcinoma/F"), "{err}");

        let mut json = spec.to_json();
        json["counts"]["val"]["normal"].as_object_mut().unwrap().remove("M");
        let err = CohortSpec::from_json_str(&json.to_string()).unwrap_err();
        assert!(err.to_string().contains("val/normal/M"), "{err}");
    }

    #[test]
    fn gender_moves_the_anatomy() {
        let spec = CohortSpec {
            noise_sigma: 1e-6,
            ..CohortSpec::with_seed(3)
        };
        let m = render_volume(&spec, DiseaseLabel::Normal, GenderLabel::Male, 0);
        let f = render_volume(&spec, DiseaseLabel::Normal, GenderLabel::Female, 0);
        // Centroid along x shifts right for male, left for female.
        let centroid = |v: &Volume| {
            let [d, h, w] = v.dims();
            let (mut num, mut den) = (0.0, 0.0);
            for z in 0..d {
                for y in 0..h {
                    for x in 0..w {
                        let val = v.get(z, y, x) as f64;
                        num += val * x as f64;
                        den += val;
                    }
                }
            }
            num / den / w as f64
        };
        assert!(centroid(&m) > 0.5 && centroid(&f) < 0.5);
    }
}
