use std::path::Path;

use super::{Label, LabeledDataset, Sample};
use crate::error::{Error, Result};
use crate::image::Image;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

struct Reader<'a> {
    path: &'a Path,
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn u32(&mut self) -> Result<u32> {
        let chunk = self.take(4)?;
        Ok(u32::from_be_bytes(chunk.try_into().expect("4 bytes")))
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        match end {
            Some(end) => {
                let out = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(out)
            }
            None => Err(Error::format(
                self.path,
                format!(
                    "truncated file: needed {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.bytes.len()
                ),
            )),
        }
    }

    fn expect_magic(&mut self, expected: u32) -> Result<()> {
        let magic = self.u32()?;
        if magic != expected {
            return Err(Error::format(
                self.path,
                format!("bad magic number 0x{magic:08x}, expected 0x{expected:08x}"),
            ));
        }
        Ok(())
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::format(path, format!("cannot read file: {e}")))
}

/// Loads an uncompressed IDX image/label pair (the MNIST distribution
/// format). Intensities are divided by 255.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();

    let image_bytes = read(images_path)?;
    let mut images = Reader {
        path: images_path,
        bytes: &image_bytes,
        pos: 0,
    };
    images.expect_magic(IDX_IMAGES_MAGIC)?;
    let count = images.u32()? as usize;
    let rows = images.u32()? as usize;
    let cols = images.u32()? as usize;

    let label_bytes = read(labels_path)?;
    let mut labels = Reader {
        path: labels_path,
        bytes: &label_bytes,
        pos: 0,
    };
    labels.expect_magic(IDX_LABELS_MAGIC)?;
    let label_count = labels.u32()? as usize;
    if label_count != count {
        return Err(Error::format(
            labels_path,
            format!("{label_count} labels for {count} images"),
        ));
    }

    let pixels = images.take(count * rows * cols)?;
    let label_values = labels.take(count)?;
    let samples = pixels
        .chunks_exact((rows * cols).max(1))
        .zip(label_values)
        .map(|(raw, label)| {
            let values = raw.iter().map(|b| f64::from(*b) / 255.0).collect();
            Ok(Sample {
                image: Image::new(rows, cols, values)?,
                label: Label::Class(label.to_string()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LabeledDataset::new(samples))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
        let path = dir.join(name);
        std::fs::File::create(&path).unwrap().write_all(bytes).unwrap();
        path
    }

    fn header(magic: u32, dims: &[u32]) -> Vec<u8> {
        let mut out = magic.to_be_bytes().to_vec();
        for d in dims {
            out.extend_from_slice(&d.to_be_bytes());
        }
        out
    }

    fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
        let mut img = header(IDX_IMAGES_MAGIC, &[2, 2, 3]);
        img.extend_from_slice(&[0, 255, 0, 10, 20, 30, 1, 2, 3, 4, 5, 6]);
        let mut lab = header(IDX_LABELS_MAGIC, &[2]);
        lab.extend_from_slice(&[7, 3]);
        (write(dir, "img", &img), write(dir, "lab", &lab))
    }

    #[test]
    fn loads_two_image_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = fixture(dir.path());
        let ds = load_idx(&img, &lab).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.samples[0].label, Label::Class("7".into()));
        assert_eq!(ds.samples[1].label, Label::Class("3".into()));
        assert_eq!(ds.samples[0].image.height(), 2);
        assert_eq!(ds.samples[0].image.width(), 3);
        assert_eq!(ds.samples[0].image.get(0, 1), 1.0);
        assert_eq!(ds.samples[1].image.get(1, 2), 6.0 / 255.0);
    }

    #[test]
    fn label_magic_in_image_file_is_a_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let (_, lab) = fixture(dir.path());
        let err = load_idx(&lab, &lab).unwrap_err();
        match err {
            Error::Format { message, .. } => assert!(message.contains("0x00000803"), "{message}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn count_mismatch_and_truncation_are_format_errors() {
        let dir = tempfile::tempdir().unwrap();
        let (img, _) = fixture(dir.path());
        let mut lab = header(IDX_LABELS_MAGIC, &[3]);
        lab.extend_from_slice(&[1, 2, 3]);
        let lab = write(dir.path(), "lab3", &lab);
        assert!(matches!(load_idx(&img, &lab), Err(Error::Format { .. })));

        let mut short = header(IDX_IMAGES_MAGIC, &[2, 2, 3]);
        short.extend_from_slice(&[0; 5]);
        let short = write(dir.path(), "short", &short);
        let (_, good_lab) = fixture(dir.path());
        assert!(matches!(load_idx(&short, &good_lab), Err(Error::Format { .. })));
    }
}
