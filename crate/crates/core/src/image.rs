//! Nonnegative 2-D intensity images.

use crate::error::{Error, Result};

/// Row-major grid of nonnegative intensities with unit pixel spacing.
///
/// Spatial coordinates used throughout the crate put the origin at the
/// image center, `x` increasing with the column index and `y` increasing
/// upwards (decreasing row index).
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    pixels: Vec<f64>,
}

impl Image {
    /// Builds an image, rejecting negative or non-finite intensities.
    pub fn new(height: usize, width: usize, pixels: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "image dimensions must be positive, got {height}x{width}"
            )));
        }
        if pixels.len() != height * width {
            return Err(Error::InvalidInput(format!(
                "expected {} pixels for a {height}x{width} image, got {}",
                height * width,
                pixels.len()
            )));
        }
        if let Some(bad) = pixels.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::InvalidInput(format!(
                "pixel intensities must be finite and nonnegative, found {bad}"
            )));
        }
        Ok(Self {
            height,
            width,
            pixels,
        })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            pixels: vec![0.0; height * width],
        }
    }

    /// Samples `f(x, y)` at every pixel center in centered coordinates.
    /// Negative samples are clamped to zero.
    pub fn from_fn(height: usize, width: usize, f: impl Fn(f64, f64) -> f64) -> Self {
        let (cx, cy) = center(height, width);
        let mut pixels = Vec::with_capacity(height * width);
        for row in 0..height {
            for col in 0..width {
                let x = col as f64 - cx;
                let y = cy - row as f64;
                pixels.push(f(x, y).max(0.0));
            }
        }
        Self {
            height,
            width,
            pixels,
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.pixels[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        assert!(value >= 0.0, "intensity must be nonnegative");
        self.pixels[row * self.width + col] = value;
    }

    pub fn mass(&self) -> f64 {
        self.pixels.iter().sum()
    }

    /// Multiplies every intensity by `factor` (which must be nonnegative).
    pub fn scaled(&self, factor: f64) -> Self {
        assert!(factor >= 0.0);
        Self {
            height: self.height,
            width: self.width,
            pixels: self.pixels.iter().map(|p| p * factor).collect(),
        }
    }

    /// Bilinear interpolation at centered coordinates; zero outside the grid.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let (cx, cy) = center(self.height, self.width);
        self.sample_pixel(cy - y, x + cx)
    }

    /// Bilinear interpolation at fractional (row, col); zero outside the grid.
    pub(crate) fn sample_pixel(&self, row: f64, col: f64) -> f64 {
        let r0 = row.floor();
        let c0 = col.floor();
        let fr = row - r0;
        let fc = col - c0;
        let r0 = r0 as isize;
        let c0 = c0 as isize;
        let px = |r: isize, c: isize| -> f64 {
            if r < 0 || c < 0 || r >= self.height as isize || c >= self.width as isize {
                0.0
            } else {
                self.pixels[r as usize * self.width + c as usize]
            }
        };
        let top = px(r0, c0) * (1.0 - fc) + px(r0, c0 + 1) * fc;
        let bottom = px(r0 + 1, c0) * (1.0 - fc) + px(r0 + 1, c0 + 1) * fc;
        top * (1.0 - fr) + bottom * fr
    }

    /// Length of the image diagonal, rounded up.
    pub fn diagonal(&self) -> usize {
        ((self.height * self.height + self.width * self.width) as f64)
            .sqrt()
            .ceil() as usize
    }
}

/// Centered-coordinate origin as (column, row) offsets.
pub(crate) fn center(height: usize, width: usize) -> (f64, f64) {
    ((width as f64 - 1.0) / 2.0, (height as f64 - 1.0) / 2.0)
}
