//! Run configuration: one TOML file, with command-line flags layered on top.

use std::path::{Path, PathBuf};

use rcdt_ood::classifier::DEFAULT_VALIDATION_FRACTION;
use rcdt_ood::data::{load_directory, load_idx, DeformationSpec};
use rcdt_ood::subspace::DEFAULT_RANK_TOLERANCE;
use rcdt_ood::{LabeledDataset, TrainConfig, TransformConfig};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_ALPHAS: [f64; 4] = [0.0, 0.01, 0.05, 0.10];

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: Option<u64>,
    pub alphas: Option<Vec<f64>>,
    pub out: Option<PathBuf>,
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub transform: TransformConfig,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub gen: GenSection,
    #[serde(default)]
    pub data: DataSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub rank_tolerance: f64,
    pub max_rank: Option<usize>,
    pub validation_fraction: f64,
    pub bandwidth: Option<f64>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            rank_tolerance: DEFAULT_RANK_TOLERANCE,
            max_rank: None,
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            bandwidth: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenSection {
    /// Side length of the square synthetic images.
    pub size: usize,
    /// Training samples per in-class template.
    pub train_count: usize,
    /// Test samples per template, held-out templates included.
    pub test_count: usize,
    pub translation_x: [f64; 2],
    pub translation_y: [f64; 2],
    pub scale: [f64; 2],
    pub shear: [f64; 2],
    pub in_templates: Vec<String>,
    pub ood_templates: Vec<String>,
}

impl Default for GenSection {
    fn default() -> Self {
        let spec = DeformationSpec::default();
        Self {
            size: 64,
            train_count: 100,
            test_count: 100,
            translation_x: spec.translation_x,
            translation_y: spec.translation_y,
            scale: spec.scale,
            shear: spec.shear,
            in_templates: vec!["gaussian".into(), "ring".into(), "cross".into()],
            ood_templates: vec!["crescent".into()],
        }
    }
}

impl GenSection {
    pub fn spec(&self, count: usize, seed: u64) -> Result<DeformationSpec, CliError> {
        let spec = DeformationSpec {
            translation_x: self.translation_x,
            translation_y: self.translation_y,
            scale: self.scale,
            shear: self.shear,
            count,
            seed,
        };
        spec.validate()
            .map_err(|e| CliError::Config(format!("gen: {e}")))?;
        Ok(spec)
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub train: Option<DataSource>,
    pub test: Option<DataSource>,
}

/// Either a `path,label` manifest or an IDX image/label pair, with an
/// optional class selection.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSource {
    pub manifest: Option<PathBuf>,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    /// Classes to keep; empty keeps every class not listed as held out.
    #[serde(default)]
    pub in_classes: Vec<String>,
    /// Classes relabeled as out-of-class.
    #[serde(default)]
    pub ood_classes: Vec<String>,
    /// Keep at most this many samples per label, in file order.
    pub per_class_limit: Option<usize>,
}

impl DataSource {
    pub fn from_manifest(path: PathBuf) -> Self {
        Self {
            manifest: Some(path),
            ..Self::default()
        }
    }

    fn rebase(&mut self, base: &Path) {
        for p in [&mut self.manifest, &mut self.idx_images, &mut self.idx_labels]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn load(&self, role: &str) -> Result<LabeledDataset, CliError> {
        let data = match (&self.manifest, &self.idx_images, &self.idx_labels) {
            (Some(m), None, None) => load_directory(m)?,
            (None, Some(i), Some(l)) => load_idx(i, l)?,
            _ => {
                return Err(CliError::Config(format!(
                    "data.{role}: give either `manifest` or both `idx_images` and `idx_labels`"
                )))
            }
        };
        let mut data = if self.in_classes.is_empty() && self.ood_classes.is_empty() {
            data
        } else {
            data.select(&self.in_classes, &self.ood_classes)
        };
        if let Some(limit) = self.per_class_limit {
            data = data.take_per_class(limit);
        }
        Ok(data)
    }
}

impl RunConfig {
    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn from_file(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut config.out, &mut config.model].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        for source in [&mut config.data.train, &mut config.data.test]
            .into_iter()
            .flatten()
        {
            source.rebase(base);
        }
        Ok(config)
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(0)
    }

    pub fn alphas(&self) -> Result<Vec<f64>, CliError> {
        let alphas = self.alphas.clone().unwrap_or_else(|| DEFAULT_ALPHAS.to_vec());
        if alphas.is_empty() {
            return Err(CliError::Config("alphas: need at least one value".into()));
        }
        if let Some(bad) = alphas.iter().find(|a| !(0.0..1.0).contains(*a)) {
            return Err(CliError::Config(format!("alphas: {bad} is outside [0, 1)")));
        }
        Ok(alphas)
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out
            .as_deref()
            .ok_or_else(|| CliError::Config("no output directory: pass --out or set `out`".into()))
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let config = TrainConfig {
            transform: self.transform,
            rank_tolerance: self.train.rank_tolerance,
            max_rank: self.train.max_rank,
            validation_fraction: self.train.validation_fraction,
            bandwidth: self.train.bandwidth,
            seed: self.seed(),
        };
        config
            .validate()
            .map_err(|e| CliError::Config(format!("train: {e}")))?;
        Ok(config)
    }
}
