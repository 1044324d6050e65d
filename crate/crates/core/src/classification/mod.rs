//! Life-cycle stage classification of localized cells.
//!
//! Each cell is cropped to a fixed 64x64 patch, summarized by a 30-value
//! handcrafted [`FeatureVector`] and scored by linear softmax models. Two
//! architectures are supported:
//!
//! * single-stage: one five-way classifier over all labels;
//! * two-stage cascade: a healthy/infected gate, then a five-way stage
//!   classifier (which may still answer healthy) for cells the gate flags.
//!
//! The cascade works over any [`ProbabilisticClassifier`], so an external
//! model can replace the built-in softmax backend.

mod cascade;
mod crop;
mod features;
mod softmax;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use cascade::{
    argmax, balanced_stage2_subset, classify_ssc, classify_tsc, load_model_json, train_cascade,
    train_model, train_single, Architecture, CascadeModel, CellClassification, StageModel,
    STAGE1_CLASS_NAMES,
};
pub use crop::{extract_crop, CellCrop, CropConfig, CROP_SIZE, DEFAULT_MARGIN};
pub use features::{extract_features, FeatureVector, DARK_PIXEL_LEVEL, FEATURE_DIM, FEATURE_SPEC};
pub use softmax::{
    Gradient, HyperParams, ModelFile, ProbabilisticClassifier, SoftmaxClassifier, CASCADE_FORMAT,
    MODEL_FORMAT,
};

use crate::error::Error;

/// Five-way life-cycle taxonomy. `Healthy` is the only non-infected label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum StageLabel {
    Healthy = 0,
    Ring = 1,
    Trophozoite = 2,
    Schizont = 3,
    Gametocyte = 4,
}

impl StageLabel {
    pub const ALL: [StageLabel; 5] = [
        StageLabel::Healthy,
        StageLabel::Ring,
        StageLabel::Trophozoite,
        StageLabel::Schizont,
        StageLabel::Gametocyte,
    ];

    pub const INFECTED: [StageLabel; 4] = [
        StageLabel::Ring,
        StageLabel::Trophozoite,
        StageLabel::Schizont,
        StageLabel::Gametocyte,
    ];

    pub fn id(self) -> usize {
        self as usize
    }

    pub fn from_id(id: usize) -> Option<Self> {
        Self::ALL.get(id).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            StageLabel::Healthy => "healthy",
            StageLabel::Ring => "ring",
            StageLabel::Trophozoite => "trophozoite",
            StageLabel::Schizont => "schizont",
            StageLabel::Gametocyte => "gametocyte",
        }
    }

    pub fn is_infected(self) -> bool {
        self != StageLabel::Healthy
    }

    pub fn class_names() -> Vec<String> {
        Self::ALL.iter().map(|l| l.name().to_string()).collect()
    }
}

impl fmt::Display for StageLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StageLabel {
    type Err = Error;

    /// Case-insensitive.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let lower = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|l| l.name() == lower)
            .ok_or_else(|| Error::UnknownLabelName(s.to_string()))
    }
}

impl Serialize for StageLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for StageLabel {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
