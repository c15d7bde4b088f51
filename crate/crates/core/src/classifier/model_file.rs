//! Binary model file.
//!
//! Layout, all integers little-endian:
//!
//! | bytes | content |
//! |-------|---------|
//! | 8     | magic `RCDTMDL\0` |
//! | 4     | format version (u32) |
//! | 8     | header length `n` (u64) |
//! | n     | UTF-8 JSON header |
//! | ...   | per class, in header order: basis (`dimension × rank` f64, column-major), then validation distances (`n_support` f64) |
//! | 8     | FNV-1a 64 checksum of every preceding byte (u64) |

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ClassModel, ClassifierModel, TrainConfig};
use crate::error::{Error, Result};
use crate::likelihood::fit_kde;
use crate::subspace::SubspaceBasis;

pub const MODEL_MAGIC: &[u8; 8] = b"RCDTMDL\0";
pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    train_config: TrainConfig,
    image_height: usize,
    image_width: usize,
    fingerprint: u64,
    dimension: usize,
    classes: Vec<ClassHeader>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClassHeader {
    label: String,
    rank: usize,
    singular_values: Vec<f64>,
    bandwidth: f64,
    n_support: usize,
    n_fit: usize,
    n_validation: usize,
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

fn put_f64s(out: &mut Vec<u8>, values: &[f64]) {
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|e| *e <= self.bytes.len())
            .ok_or_else(|| format!("truncated: needed {n} bytes at offset {}", self.pos))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, count: usize) -> std::result::Result<Vec<f64>, String> {
        let len = count.checked_mul(8).ok_or("array length overflows")?;
        Ok(self
            .take(len)?
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}

impl ClassifierModel {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            train_config: self.config.clone(),
            image_height: self.image_size.0,
            image_width: self.image_size.1,
            fingerprint: self.transform.fingerprint(),
            dimension: self.transform.dimension(),
            classes: self
                .classes
                .iter()
                .map(|c| ClassHeader {
                    label: c.label.clone(),
                    rank: c.basis.rank(),
                    singular_values: c.basis.singular_values().to_vec(),
                    bandwidth: c.density.bandwidth(),
                    n_support: c.density.support_points().len(),
                    n_fit: c.n_fit,
                    n_validation: c.n_validation,
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let payload: usize = self
            .classes
            .iter()
            .map(|c| 8 * (c.basis.columns().len() + c.density.support_points().len()))
            .sum();
        let mut out = Vec::with_capacity(28 + json.len() + payload);
        out.extend_from_slice(MODEL_MAGIC);
        out.extend_from_slice(&MODEL_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for c in &self.classes {
            put_f64s(&mut out, c.basis.columns());
            put_f64s(&mut out, c.density.support_points());
        }
        let checksum = fnv1a(&out);
        out.extend_from_slice(&checksum.to_le_bytes());
        out
    }

    /// Parses a model file image. `source` names the origin in errors.
    pub fn from_bytes(bytes: &[u8], source: &Path) -> Result<Self> {
        Self::parse(bytes).map_err(|message| Error::format(source, message))
    }

    fn parse(bytes: &[u8]) -> std::result::Result<Self, String> {
        if bytes.len() < MODEL_MAGIC.len() || &bytes[..MODEL_MAGIC.len()] != MODEL_MAGIC {
            return Err("not a model file (bad magic)".into());
        }
        if bytes.len() < 28 {
            return Err("truncated model file".into());
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
        let mut cur = Cursor { bytes: body, pos: MODEL_MAGIC.len() };
        let version = cur.u32()?;
        if version != MODEL_FORMAT_VERSION {
            return Err(format!(
                "unsupported format version {version}, expected {MODEL_FORMAT_VERSION}"
            ));
        }
        if fnv1a(body) != stored {
            return Err("checksum mismatch (file is corrupt or truncated)".into());
        }
        let header_len = usize::try_from(cur.u64()?).map_err(|_| "header too large")?;
        let header: Header = serde_json::from_slice(cur.take(header_len)?)
            .map_err(|e| format!("bad header: {e}"))?;

        let mut classes = Vec::with_capacity(header.classes.len());
        for c in header.classes {
            let columns = cur.f64s(header.dimension.checked_mul(c.rank).ok_or("basis size overflows")?)?;
            let support = cur.f64s(c.n_support)?;
            let basis = SubspaceBasis::from_parts(
                header.dimension,
                c.rank,
                columns,
                c.singular_values,
                header.fingerprint,
            )
            .map_err(|e| format!("class `{}`: {e}", c.label))?;
            let density = fit_kde(&support, Some(c.bandwidth))
                .map_err(|e| format!("class `{}`: {e}", c.label))?;
            classes.push(ClassModel {
                label: c.label,
                basis,
                density,
                n_fit: c.n_fit,
                n_validation: c.n_validation,
            });
        }
        if cur.pos != body.len() {
            return Err(format!("{} unexpected trailing bytes", body.len() - cur.pos));
        }
        ClassifierModel::from_parts(
            header.train_config,
            (header.image_height, header.image_width),
            classes,
        )
        .map_err(|e| e.to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::format(path, format!("cannot read model: {e}")))?;
        Self::from_bytes(&bytes, path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::train;
    use crate::data::{default_templates, generate_synthetic, DeformationSpec};
    use crate::rcdt::TransformConfig;

    fn model() -> ClassifierModel {
        let spec = DeformationSpec { count: 20, seed: 3, ..DeformationSpec::default() };
        let data = generate_synthetic(&default_templates(24)[..2], &spec).unwrap();
        let config = TrainConfig { transform: TransformConfig::with_angles(12), ..TrainConfig::default() };
        train(&data, &config).unwrap()
    }

    #[test]
    fn round_trip_preserves_everything() {
        let m = model();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.bin");
        m.save(&path).unwrap();
        let back = ClassifierModel::load(&path).unwrap();
        assert_eq!(back.classes(), m.classes());
        assert_eq!(back.config(), m.config());
        assert_eq!(back.to_bytes(), m.to_bytes());
        let spec = DeformationSpec { count: 5, seed: 11, ..DeformationSpec::default() };
        let probe = generate_synthetic(&default_templates(24), &spec).unwrap();
        for s in &probe.samples {
            for alpha in [0.0, 0.05] {
                assert_eq!(m.predict(&s.image, alpha).unwrap(), back.predict(&s.image, alpha).unwrap());
            }
        }
    }

    #[test]
    fn corruption_is_detected() {
        let bytes = model().to_bytes();
        let p = Path::new("model.bin");
        let mut flipped = bytes.clone();
        let mid = flipped.len() / 2;
        flipped[mid] ^= 1;
        let err = ClassifierModel::from_bytes(&flipped, p).unwrap_err();
        assert!(err.to_string().contains("checksum"), "{err}");
        assert!(ClassifierModel::from_bytes(&bytes[..bytes.len() - 100], p).is_err());
        assert!(ClassifierModel::from_bytes(b"P5 not a model", p).is_err());

        let mut future = bytes;
        future[8..12].copy_from_slice(&7u32.to_le_bytes());
        let err = ClassifierModel::from_bytes(&future, p).unwrap_err();
        assert!(err.to_string().contains("version 7"), "{err}");
    }
}
