use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GenderLabel {
    #[serde(rename = "F")]
    Female,
    #[serde(rename = "M")]
    Male,
}

impl GenderLabel {
    pub const ALL: [GenderLabel; 2] = [GenderLabel::Female, GenderLabel::Male];

    /// Head index: female 0, male 1.
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            GenderLabel::Female => "F",
            GenderLabel::Male => "M",
        }
    }
}

impl FromStr for GenderLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "F" => Ok(GenderLabel::Female),
            "M" => Ok(GenderLabel::Male),
            other => Err(format!("unknown gender `{other}` (expected F or M)")),
        }
    }
}

impl fmt::Display for GenderLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// The four disease categories, in head-index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiseaseLabel {
    Adenocarcinoma,
    SquamousCellCarcinoma,
    #[serde(rename = "covid19")]
    Covid19,
    Normal,
}

pub const NUM_DISEASES: usize = 4;

impl DiseaseLabel {
    pub const ALL: [DiseaseLabel; NUM_DISEASES] = [
        DiseaseLabel::Adenocarcinoma,
        DiseaseLabel::SquamousCellCarcinoma,
        DiseaseLabel::Covid19,
        DiseaseLabel::Normal,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            DiseaseLabel::Adenocarcinoma => "adenocarcinoma",
            DiseaseLabel::SquamousCellCarcinoma => "squamous_cell_carcinoma",
            DiseaseLabel::Covid19 => "covid19",
            DiseaseLabel::Normal => "normal",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            DiseaseLabel::Adenocarcinoma => "Adenocarcinoma",
            DiseaseLabel::SquamousCellCarcinoma => "Squamous Cell Carcinoma",
            DiseaseLabel::Covid19 => "COVID-19",
            DiseaseLabel::Normal => "Normal",
        }
    }
}

impl FromStr for DiseaseLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| format!("unknown disease `{s}`"))
    }
}

impl fmt::Display for DiseaseLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

impl Split {
    pub const ALL: [Split; 2] = [Split::Train, Split::Val];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
        }
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            other => Err(format!("unknown split `{other}` (expected train or val)")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Anything carrying the three labels a sample has.
pub trait Labeled {
    fn gender(&self) -> GenderLabel;
    fn disease(&self) -> DiseaseLabel;
    fn split(&self) -> Split;
}

impl<T: Labeled + ?Sized> Labeled for &T {
    fn gender(&self) -> GenderLabel {
        (**self).gender()
    }
    fn disease(&self) -> DiseaseLabel {
        (**self).disease()
    }
    fn split(&self) -> Split {
        (**self).split()
    }
}
