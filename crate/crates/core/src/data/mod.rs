//! Labeled datasets: file loaders and the synthetic deformation generator.

mod idx;
mod manifest;
mod pgm;
mod synthetic;

use std::collections::BTreeMap;
use std::fmt;

pub use idx::{load_idx, IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC};
pub use manifest::{load_directory, write_manifest};
pub use pgm::{read_pgm, write_pgm};
pub use synthetic::{default_templates, generate_synthetic, DeformationSpec, Template};

use crate::image::Image;

/// Manifest spelling of the out-of-class label.
pub const OOD_LABEL: &str = "__ood__";

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Class(String),
    OutOfClass,
}

impl Label {
    pub fn parse(text: &str) -> Self {
        if text == OOD_LABEL {
            Label::OutOfClass
        } else {
            Label::Class(text.to_string())
        }
    }

    pub fn class_name(&self) -> Option<&str> {
        match self {
            Label::Class(name) => Some(name),
            Label::OutOfClass => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Class(name) => f.write_str(name),
            Label::OutOfClass => f.write_str(OOD_LABEL),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: Image,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    pub samples: Vec<Sample>,
}

impl LabeledDataset {
    pub fn new(samples: Vec<Sample>) -> Self {
        Self { samples }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn images(&self) -> impl Iterator<Item = &Image> {
        self.samples.iter().map(|s| &s.image)
    }

    /// Sorted distinct in-class label names.
    pub fn class_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self
            .samples
            .iter()
            .filter_map(|s| s.label.class_name().map(str::to_string))
            .collect();
        names.sort();
        names.dedup();
        names
    }

    pub fn count_out_of_class(&self) -> usize {
        self.samples
            .iter()
            .filter(|s| s.label == Label::OutOfClass)
            .count()
    }

    /// Keeps samples whose class is in `in_classes` and relabels those in
    /// `ood_classes` as out-of-class; everything else is dropped. An empty
    /// `in_classes` keeps every class not listed as out-of-class.
    pub fn select(&self, in_classes: &[String], ood_classes: &[String]) -> Self {
        let samples = self
            .samples
            .iter()
            .filter_map(|s| match &s.label {
                Label::Class(name) if ood_classes.contains(name) => Some(Sample {
                    image: s.image.clone(),
                    label: Label::OutOfClass,
                }),
                Label::Class(name) if in_classes.is_empty() || in_classes.contains(name) => {
                    Some(s.clone())
                }
                Label::OutOfClass => Some(s.clone()),
                _ => None,
            })
            .collect();
        Self { samples }
    }

    /// First `limit` samples of each label, in dataset order.
    pub fn take_per_class(&self, limit: usize) -> Self {
        let mut seen: BTreeMap<&Label, usize> = BTreeMap::new();
        let samples = self
            .samples
            .iter()
            .filter(|s| {
                let count = seen.entry(&s.label).or_default();
                *count += 1;
                *count <= limit
            })
            .cloned()
            .collect();
        Self { samples }
    }

    pub fn extend(&mut self, other: LabeledDataset) {
        self.samples.extend(other.samples);
    }
}
