//! Binary portable graymap (P5), 8- or 16-bit.

use std::path::Path;

use crate::error::{Error, Result};
use crate::image::Image;

/// Reads a P5 graymap, scaling intensities by the header's maximum value.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::format(path, format!("cannot read file: {e}")))?;
    parse_pgm(&bytes).map_err(|message| Error::format(path, message))
}

fn parse_pgm(bytes: &[u8]) -> std::result::Result<Image, String> {
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err("not a binary PGM (missing P5 magic)".into());
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // Whitespace and comments between header fields.
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|b| *b != b'\n') {
                        pos += 1;
                    }
                }
                _ => break,
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(format!("malformed header near byte {start}"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .expect("ascii digits")
            .parse()
            .map_err(|e| format!("bad header number: {e}"))?;
    }
    let [width, height, maxval] = fields;
    if width == 0 || height == 0 {
        return Err(format!("empty image {width}x{height}"));
    }
    if !(1..=65535).contains(&maxval) {
        return Err(format!("maxval {maxval} outside 1..=65535"));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err("missing whitespace after maxval".into());
    }
    pos += 1;

    let wide = maxval > 255;
    let needed = width * height * if wide { 2 } else { 1 };
    let raster = bytes
        .get(pos..pos + needed)
        .ok_or_else(|| format!("truncated raster: need {needed} bytes, have {}", bytes.len() - pos))?;
    let scale = 1.0 / maxval as f64;
    let pixels: Vec<f64> = if wide {
        raster
            .chunks_exact(2)
            .map(|c| f64::from(u16::from_be_bytes([c[0], c[1]])) * scale)
            .collect()
    } else {
        raster.iter().map(|b| f64::from(*b) * scale).collect()
    };
    if pixels.iter().any(|p| *p > 1.0) {
        return Err("sample exceeds maxval".into());
    }
    Image::new(height, width, pixels).map_err(|e| e.to_string())
}

/// Writes a 16-bit P5 graymap with the image maximum mapped to 65535.
pub fn write_pgm(path: impl AsRef<Path>, image: &Image) -> Result<()> {
    let path = path.as_ref();
    let peak = image.pixels().iter().cloned().fold(0.0, f64::max);
    let scale = if peak > 0.0 { 65535.0 / peak } else { 0.0 };
    let mut out = format!("P5\n{} {}\n65535\n", image.width(), image.height()).into_bytes();
    for p in image.pixels() {
        let v = (p * scale).round().clamp(0.0, 65535.0) as u16;
        out.extend_from_slice(&v.to_be_bytes());
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
