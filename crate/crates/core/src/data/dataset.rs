//! Samples, datasets and label visibility. Target labels are wrapped in
//! `Label::Hidden`: training code can only reach them through `reveal()`,
//! which evaluation and oracle-ablation paths call explicitly.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Known(usize),
    /// A true label stored for evaluation but invisible to training.
    Hidden(usize),
}

impl Label {
    /// The underlying class index, for evaluation and serialization only.
    pub fn reveal(&self) -> usize {
        match self {
            Label::Known(y) | Label::Hidden(y) => *y,
        }
    }

    /// The class index if visible to training.
    pub fn known(&self) -> Option<usize> {
        match self {
            Label::Known(y) => Some(*y),
            Label::Hidden(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: Label,
    pub domain_id: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.features.len())
    }

    /// Feature vectors only, stripped of all label information.
    pub fn features(&self) -> impl Iterator<Item = &[f64]> {
        self.samples.iter().map(|s| s.features.as_slice())
    }
}
