//! CSV manifests (`path,label`) pointing at PGM files.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::pgm::read_pgm;
use super::{Label, LabeledDataset, Sample};
use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Row {
    path: String,
    label: String,
}

/// Loads every image listed in a `path,label` manifest. Relative paths are
/// resolved against the manifest's directory; all images must share one
/// size.
pub fn load_directory(manifest_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let manifest_path = manifest_path.as_ref();
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut reader = csv::Reader::from_path(manifest_path)
        .map_err(|e| Error::format(manifest_path, format!("cannot open manifest: {e}")))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::format(manifest_path, e.to_string()))?
        .clone();
    if headers.len() != 2 || &headers[0] != "path" || &headers[1] != "label" {
        return Err(Error::format(
            manifest_path,
            format!("expected header `path,label`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }

    let mut samples = Vec::new();
    let mut size: Option<(usize, usize)> = None;
    for row in reader.deserialize::<Row>() {
        let row = row.map_err(|e| Error::format(manifest_path, e.to_string()))?;
        let path = resolve(base, &row.path);
        if !path.is_file() {
            return Err(Error::format(&path, "listed image file does not exist"));
        }
        let image = read_pgm(&path)?;
        let dims = (image.height(), image.width());
        match size {
            None => size = Some(dims),
            Some(expected) if expected != dims => {
                return Err(Error::format(
                    &path,
                    format!(
                        "image is {}x{}, expected {}x{} like earlier entries",
                        dims.0, dims.1, expected.0, expected.1
                    ),
                ))
            }
            _ => {}
        }
        samples.push(Sample {
            image,
            label: Label::parse(&row.label),
        });
    }
    Ok(LabeledDataset::new(samples))
}

fn resolve(base: &Path, entry: &str) -> PathBuf {
    let p = Path::new(entry);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Writes a manifest with paths stored as given.
pub fn write_manifest(manifest_path: impl AsRef<Path>, entries: &[(String, Label)]) -> Result<()> {
    let manifest_path = manifest_path.as_ref();
    let to_err = |e: csv::Error| Error::format(manifest_path, e.to_string());
    let mut writer = csv::Writer::from_path(manifest_path).map_err(to_err)?;
    // Header is written explicitly so empty manifests stay loadable.
    writer.write_record(["path", "label"]).map_err(to_err)?;
    for (path, label) in entries {
        writer
            .write_record([path.as_str(), label.to_string().as_str()])
            .map_err(to_err)?;
    }
    writer.flush().map_err(|e| Error::io(manifest_path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::write_pgm;
    use crate::image::Image;

    fn pgm16(path: &Path, value: u16, width: usize) {
        let mut bytes = format!("P5\n{width} 1\n65535\n").into_bytes();
        for _ in 0..width {
            bytes.extend_from_slice(&value.to_be_bytes());
        }
        std::fs::write(path, bytes).unwrap();
    }

    #[test]
    fn loads_in_class_and_ood_rows() {
        let dir = tempfile::tempdir().unwrap();
        for name in ["a1.pgm", "a2.pgm", "z.pgm"] {
            write_pgm(dir.path().join(name), &Image::new(2, 2, vec![1.0, 0.0, 0.5, 0.25]).unwrap()).unwrap();
        }
        let manifest = dir.path().join("m.csv");
        std::fs::write(&manifest, "path,label\na1.pgm,a\na2.pgm,a\nz.pgm,__ood__\n").unwrap();
        let ds = load_directory(&manifest).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.class_names(), ["a"]);
        assert_eq!(ds.count_out_of_class(), 1);
    }

    #[test]
    fn missing_file_error_names_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("m.csv");
        std::fs::write(&manifest, "path,label\nnowhere.pgm,a\n").unwrap();
        let err = load_directory(&manifest).unwrap_err();
        assert!(matches!(err, Error::Format { .. }));
        assert!(err.to_string().contains("nowhere.pgm"), "{err}");
    }

    #[test]
    fn full_scale_16_bit_is_one() {
        let dir = tempfile::tempdir().unwrap();
        pgm16(&dir.path().join("x.pgm"), 65535, 3);
        let manifest = dir.path().join("m.csv");
        std::fs::write(&manifest, "path,label\nx.pgm,k\n").unwrap();
        let ds = load_directory(&manifest).unwrap();
        assert!(ds.samples[0].image.pixels().iter().all(|p| *p == 1.0));
    }

    #[test]
    fn inconsistent_sizes_and_bad_headers_fail() {
        let dir = tempfile::tempdir().unwrap();
        pgm16(&dir.path().join("a.pgm"), 10, 3);
        pgm16(&dir.path().join("b.pgm"), 10, 4);
        let manifest = dir.path().join("m.csv");
        std::fs::write(&manifest, "path,label\na.pgm,k\nb.pgm,k\n").unwrap();
        let err = load_directory(&manifest).unwrap_err();
        assert!(err.to_string().contains("b.pgm"));

        std::fs::write(&manifest, "file,class\na.pgm,k\n").unwrap();
        assert!(matches!(load_directory(&manifest), Err(Error::Format { .. })));
    }

    #[test]
    fn written_manifest_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        write_pgm(dir.path().join("a.pgm"), &Image::new(1, 1, vec![1.0]).unwrap()).unwrap();
        let manifest = dir.path().join("m.csv");
        write_manifest(&manifest, &[("a.pgm".into(), Label::OutOfClass)]).unwrap();
        let ds = load_directory(&manifest).unwrap();
        assert_eq!(ds.samples[0].label, Label::OutOfClass);

        write_manifest(&manifest, &[]).unwrap();
        assert!(load_directory(&manifest).unwrap().is_empty());
    }
}
