//! Radon-CDT representation: the CDT of every Radon projection, stacked
//! angle-major into one flat vector.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cdt::{cdt_forward, normalize_density, Density};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::radon::{AngleGrid, RadonProjector};

pub const DEFAULT_ANGLES: usize = 180;

/// Identifier of the reference density, part of the fingerprint.
const REFERENCE_ID: &str = "uniform[0,1]";

/// Transform parameters. Unset sizes are resolved per image size: the
/// offset count defaults to the image diagonal and the reference size to
/// the offset count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransformConfig {
    #[serde(default = "default_angles")]
    pub n_angles: usize,
    #[serde(default)]
    pub n_offsets: Option<usize>,
    #[serde(default)]
    pub reference_size: Option<usize>,
}

fn default_angles() -> usize {
    DEFAULT_ANGLES
}

impl Default for TransformConfig {
    fn default() -> Self {
        Self {
            n_angles: DEFAULT_ANGLES,
            n_offsets: None,
            reference_size: None,
        }
    }
}

impl TransformConfig {
    pub fn with_angles(n_angles: usize) -> Self {
        Self {
            n_angles,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_angles == 0 {
            return Err(Error::InvalidInput("n_angles must be at least 1".into()));
        }
        if matches!(self.n_offsets, Some(n) if n < 2) {
            return Err(Error::InvalidInput("n_offsets must be at least 2".into()));
        }
        if matches!(self.reference_size, Some(m) if m < 2) {
            return Err(Error::InvalidInput("reference_size must be at least 2".into()));
        }
        Ok(())
    }

    /// Concrete sizes for images of the given dimensions.
    pub fn resolve(&self, height: usize, width: usize) -> Result<ResolvedTransform> {
        self.validate()?;
        let n_offsets = self
            .n_offsets
            .unwrap_or_else(|| Image::zeros(height.max(1), width.max(1)).diagonal().max(2));
        let reference_size = self.reference_size.unwrap_or(n_offsets);
        Ok(ResolvedTransform {
            n_angles: self.n_angles,
            n_offsets,
            reference_size,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResolvedTransform {
    pub n_angles: usize,
    pub n_offsets: usize,
    pub reference_size: usize,
}

impl ResolvedTransform {
    pub fn dimension(&self) -> usize {
        self.n_angles * self.reference_size
    }

    /// Stable 64-bit FNV-1a hash of the parameters that shape the vector.
    pub fn fingerprint(&self) -> u64 {
        let text = format!(
            "rcdt;angles={};offsets={};reference={};m={}",
            self.n_angles, self.n_offsets, REFERENCE_ID, self.reference_size
        );
        text.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
            (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
        })
    }
}

/// Flattened R-CDT of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct RcdtVector {
    values: Vec<f64>,
    fingerprint: u64,
}

impl RcdtVector {
    pub fn new(values: Vec<f64>, fingerprint: u64) -> Self {
        Self {
            values,
            fingerprint,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Euclidean distance; errors when fingerprints differ.
    pub fn distance(&self, other: &RcdtVector) -> Result<f64> {
        self.check_compatible(other.fingerprint)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt())
    }

    pub(crate) fn check_compatible(&self, fingerprint: u64) -> Result<()> {
        if self.fingerprint != fingerprint {
            return Err(Error::ConfigMismatch {
                expected: fingerprint,
                found: self.fingerprint,
            });
        }
        Ok(())
    }

    /// Angle block `i` (the CDT of the projection at the `i`-th angle).
    pub fn block(&self, angle_index: usize, reference_size: usize) -> &[f64] {
        &self.values[angle_index * reference_size..(angle_index + 1) * reference_size]
    }
}

/// Reusable R-CDT operator for one image size.
#[derive(Debug, Clone)]
pub struct RcdtTransform {
    resolved: ResolvedTransform,
    projector: RadonProjector,
    reference: Density,
}

impl RcdtTransform {
    pub fn new(config: &TransformConfig, height: usize, width: usize) -> Result<Self> {
        let resolved = config.resolve(height, width)?;
        let grid = AngleGrid::uniform(resolved.n_angles)?;
        let projector = RadonProjector::new(height, width, &grid, resolved.n_offsets)?;
        let reference = Density::uniform(resolved.reference_size, (0.0, 1.0))?;
        Ok(Self {
            resolved,
            projector,
            reference,
        })
    }

    pub fn resolved(&self) -> &ResolvedTransform {
        &self.resolved
    }

    pub fn fingerprint(&self) -> u64 {
        self.resolved.fingerprint()
    }

    pub fn dimension(&self) -> usize {
        self.resolved.dimension()
    }

    pub fn image_size(&self) -> (usize, usize) {
        (self.projector.height(), self.projector.width())
    }

    pub fn transform(&self, image: &Image) -> Result<RcdtVector> {
        let sinogram = self.projector.project(image)?;
        let interval = sinogram.offset_interval();
        let mut values = Vec::with_capacity(self.resolved.dimension());
        for row in sinogram.rows() {
            let density = normalize_density(row, interval)?;
            values.extend_from_slice(cdt_forward(&density, &self.reference)?.values());
        }
        Ok(RcdtVector::new(values, self.fingerprint()))
    }

    /// Transforms a batch in parallel; output order follows input order.
    pub fn transform_batch<'a, I>(&self, images: I) -> Result<Vec<RcdtVector>>
    where
        I: IntoParallelIterator<Item = &'a Image>,
    {
        images
            .into_par_iter()
            .map(|image| self.transform(image))
            .collect()
    }
}

/// One-shot R-CDT of a single image.
pub fn rcdt_forward(image: &Image, config: &TransformConfig) -> Result<RcdtVector> {
    RcdtTransform::new(config, image.height(), image.width())?.transform(image)
}
