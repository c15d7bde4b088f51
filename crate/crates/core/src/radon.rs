//! Forward Radon transform by rotate-and-sum.
//!
//! For projection angle `θ` the line integral at signed offset `t` runs
//! along `t·(cos θ, sin θ) + u·(−sin θ, cos θ)` for all `u`, so translating
//! an image by `v` moves its projection at `θ` by `v·(cos θ, sin θ)`.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::image::{center, Image};

/// Projection angles in radians, uniformly spaced over `[0, π)`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleGrid {
    angles: Vec<f64>,
}

impl AngleGrid {
    pub fn uniform(count: usize) -> Result<Self> {
        if count == 0 {
            return Err(Error::InvalidInput("angle count must be at least 1".into()));
        }
        let step = PI / count as f64;
        Ok(Self {
            angles: (0..count).map(|i| i as f64 * step).collect(),
        })
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }
}

/// One nonnegative projection profile per angle, over a shared offset grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Sinogram {
    angles: Vec<f64>,
    offsets: Vec<f64>,
    values: Vec<f64>,
}

impl Sinogram {
    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    pub fn n_offsets(&self) -> usize {
        self.offsets.len()
    }

    pub fn row(&self, angle_index: usize) -> &[f64] {
        let n = self.offsets.len();
        &self.values[angle_index * n..(angle_index + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.offsets.len())
    }

    /// Offset interval `[−D/2, D/2]` covered by the grid.
    pub fn offset_interval(&self) -> (f64, f64) {
        (self.offsets[0], self.offsets[self.offsets.len() - 1])
    }
}

/// Signed offsets spanning the image diagonal `D`: `n` points on `[−D/2, D/2]`.
pub fn offset_grid(image_height: usize, image_width: usize, n_offsets: usize) -> Vec<f64> {
    let half = Image::zeros(image_height, image_width).diagonal() as f64 / 2.0;
    let step = 2.0 * half / (n_offsets - 1) as f64;
    (0..n_offsets).map(|j| -half + j as f64 * step).collect()
}

/// Sparse projection operator for one image size.
///
/// The image is treated as its bilinear interpolant, a sum of unit tent
/// functions centered on the pixels. A tent projects at angle `θ` onto the
/// distribution of a sum of four centered uniforms with widths `|cos θ|`,
/// `|cos θ|`, `|sin θ|`, `|sin θ|`, so each pixel's contribution to an offset
/// bin is a difference of that closed-form CDF across the bin edges. Bins
/// tile the offset axis (the outermost are open-ended), hence every row
/// carries exactly the image mass and the operator is linear.
#[derive(Debug, Clone)]
pub struct RadonProjector {
    height: usize,
    width: usize,
    angles: Vec<f64>,
    offsets: Vec<f64>,
    /// CSR layout over (angle, pixel) pairs.
    starts: Vec<u32>,
    bins: Vec<u32>,
    weights: Vec<f64>,
}

impl RadonProjector {
    pub fn new(height: usize, width: usize, grid: &AngleGrid, n_offsets: usize) -> Result<Self> {
        if n_offsets < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 offsets, got {n_offsets}"
            )));
        }
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput("image dimensions must be positive".into()));
        }
        let offsets = offset_grid(height, width, n_offsets);
        let spacing = offsets[1] - offsets[0];
        let (cx, cy) = center(height, width);
        let n_pixels = height * width;
        let last = n_offsets - 1;

        let mut starts = Vec::with_capacity(grid.len() * n_pixels + 1);
        let mut bins = Vec::new();
        let mut weights = Vec::new();
        starts.push(0u32);
        for &theta in grid.angles() {
            let (sin, cos) = theta.sin_cos();
            let kernel = TentProjection::new(cos.abs(), sin.abs());
            for pixel in 0..n_pixels {
                let (r, c) = (pixel / width, pixel % width);
                let t = (c as f64 - cx) * cos + (cy - r as f64) * sin;
                let lo = t - kernel.half_support;
                let hi = t + kernel.half_support;
                let first = (((lo - offsets[0]) / spacing + 0.5).floor().max(0.0) as usize).min(last);
                let end = (((hi - offsets[0]) / spacing + 0.5).floor().max(0.0) as usize).min(last);
                for j in first..=end {
                    let below = if j == 0 { 0.0 } else { kernel.cdf(offsets[j] - 0.5 * spacing - t) };
                    let above = if j == last { 1.0 } else { kernel.cdf(offsets[j] + 0.5 * spacing - t) };
                    let w = above - below;
                    if w > 0.0 {
                        bins.push(j as u32);
                        weights.push(w);
                    }
                }
                starts.push(bins.len() as u32);
            }
        }

        Ok(Self {
            height,
            width,
            angles: grid.angles().to_vec(),
            offsets,
            starts,
            bins,
            weights,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_offsets(&self) -> usize {
        self.offsets.len()
    }

    pub fn n_angles(&self) -> usize {
        self.angles.len()
    }

    /// Projects an image of the operator's size.
    pub fn project(&self, image: &Image) -> Result<Sinogram> {
        if image.height() != self.height || image.width() != self.width {
            return Err(Error::InvalidInput(format!(
                "projector built for {}x{} images, got {}x{}",
                self.height,
                self.width,
                image.height(),
                image.width()
            )));
        }
        let mass = image.mass();
        if mass <= 0.0 {
            return Err(Error::InvalidInput("image has zero total mass".to_string()));
        }
        let n_offsets = self.offsets.len();
        let n_pixels = self.height * self.width;
        let pixels = image.pixels();
        let mut values = vec![0.0; self.angles.len() * n_offsets];
        for (a, row) in values.chunks_exact_mut(n_offsets).enumerate() {
            let base = a * n_pixels;
            for (p, &value) in pixels.iter().enumerate() {
                if value == 0.0 {
                    continue;
                }
                let lo = self.starts[base + p] as usize;
                let hi = self.starts[base + p + 1] as usize;
                for (bin, w) in self.bins[lo..hi].iter().zip(&self.weights[lo..hi]) {
                    row[*bin as usize] += value * w;
                }
            }
            row.iter_mut().for_each(|v| *v = v.max(0.0));
            let row_mass: f64 = row.iter().sum();
            let scale = mass / row_mass;
            row.iter_mut().for_each(|v| *v *= scale);
        }
        Ok(Sinogram {
            angles: self.angles.clone(),
            offsets: self.offsets.clone(),
            values,
        })
    }
}

/// Projection of a unit tent `max(0, 1−|x|)·max(0, 1−|y|)` onto one
/// direction, as the sum of centered uniforms.
struct TentProjection {
    widths: Vec<f64>,
    half_support: f64,
    /// `n! · Π widths`
    normalizer: f64,
}

impl TentProjection {
    /// Widths this small are dropped; their effect on the CDF is far below
    /// rounding error at pixel scale.
    const MIN_WIDTH: f64 = 1e-9;

    fn new(cos: f64, sin: f64) -> Self {
        let widths: Vec<f64> = [cos, cos, sin, sin]
            .into_iter()
            .filter(|w| *w > Self::MIN_WIDTH)
            .collect();
        let half_support = 0.5 * widths.iter().sum::<f64>();
        let factorial: f64 = (1..=widths.len()).map(|k| k as f64).product();
        let normalizer = factorial * widths.iter().product::<f64>();
        Self {
            widths,
            half_support,
            normalizer,
        }
    }

    /// `P(Σ U_k ≤ s)` by inclusion-exclusion over the uniform widths.
    fn cdf(&self, s: f64) -> f64 {
        let shifted = s + self.half_support;
        if shifted <= 0.0 {
            return 0.0;
        }
        if s >= self.half_support {
            return 1.0;
        }
        let n = self.widths.len();
        let mut acc = 0.0;
        for subset in 0u32..(1 << n) {
            let mut edge = shifted;
            for (k, w) in self.widths.iter().enumerate() {
                if subset & (1 << k) != 0 {
                    edge -= w;
                }
            }
            if edge > 0.0 {
                let term = edge.powi(n as i32);
                if subset.count_ones() % 2 == 0 {
                    acc += term;
                } else {
                    acc -= term;
                }
            }
        }
        (acc / self.normalizer).clamp(0.0, 1.0)
    }
}

/// Discrete line integrals of `image` at every angle in `grid`, on
/// `n_offsets` offsets spanning the image diagonal.
///
/// Builds a [`RadonProjector`] for the call; reuse one directly when
/// transforming many images of the same size.
pub fn radon_forward(image: &Image, grid: &AngleGrid, n_offsets: usize) -> Result<Sinogram> {
    if image.mass() <= 0.0 {
        return Err(Error::InvalidInput("image has zero total mass".to_string()));
    }
    RadonProjector::new(image.height(), image.width(), grid, n_offsets)?.project(image)
}
