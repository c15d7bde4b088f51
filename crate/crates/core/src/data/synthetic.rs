//! Synthetic classes: affine deformations of fixed templates with the total
//! intensity of each template preserved.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Label, LabeledDataset, Sample};
use crate::error::{Error, Result};
use crate::image::Image;

const MAX_REDRAWS: usize = 100;
/// Largest fraction of template mass a deformation may push out of frame.
const MAX_LOST_MASS: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct Template {
    pub name: String,
    pub image: Image,
}

impl Template {
    pub fn new(name: impl Into<String>, image: Image) -> Result<Self> {
        if image.mass() <= 0.0 {
            return Err(Error::InvalidInput("template has zero mass".into()));
        }
        Ok(Self {
            name: name.into(),
            image,
        })
    }
}

/// Parameter ranges of the affine family `x ↦ s·[[1, k], [0, 1]]·x + b`,
/// each drawn uniformly from a closed `[min, max]` range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformationSpec {
    /// Horizontal translation range in pixels.
    pub translation_x: [f64; 2],
    /// Vertical translation range in pixels (positive is up).
    pub translation_y: [f64; 2],
    /// Isotropic scale range.
    pub scale: [f64; 2],
    /// Horizontal shear range.
    pub shear: [f64; 2],
    /// Samples generated per template.
    pub count: usize,
    pub seed: u64,
}

impl Default for DeformationSpec {
    fn default() -> Self {
        Self {
            translation_x: [-6.0, 6.0],
            translation_y: [-6.0, 6.0],
            scale: [0.8, 1.2],
            shear: [0.0, 0.0],
            count: 100,
            seed: 0,
        }
    }
}

impl DeformationSpec {
    pub fn identity(count: usize, seed: u64) -> Self {
        Self {
            translation_x: [0.0, 0.0],
            translation_y: [0.0, 0.0],
            scale: [1.0, 1.0],
            shear: [0.0, 0.0],
            count,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("translation_x", self.translation_x),
            ("translation_y", self.translation_y),
            ("scale", self.scale),
            ("shear", self.shear),
        ];
        for (name, [lo, hi]) in ranges {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidInput(format!(
                    "{name} range [{lo}, {hi}] must be finite with min <= max"
                )));
            }
        }
        if self.scale[0] <= 0.0 {
            return Err(Error::InvalidInput(format!(
                "scale range must be positive, got [{}, {}]",
                self.scale[0], self.scale[1]
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Affine {
    scale: f64,
    shear: f64,
    tx: f64,
    ty: f64,
}

impl Affine {
    fn draw(rng: &mut ChaCha8Rng, spec: &DeformationSpec) -> Self {
        fn uniform(rng: &mut ChaCha8Rng, [lo, hi]: [f64; 2]) -> f64 {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..=hi)
            }
        }
        Self {
            tx: uniform(rng, spec.translation_x),
            ty: uniform(rng, spec.translation_y),
            scale: uniform(rng, spec.scale),
            shear: uniform(rng, spec.shear),
        }
    }

    fn determinant(&self) -> f64 {
        self.scale * self.scale
    }

    /// Pre-image of output point (x, y) in centered coordinates.
    fn inverse(&self, x: f64, y: f64) -> (f64, f64) {
        let (u, v) = ((x - self.tx) / self.scale, (y - self.ty) / self.scale);
        (u - self.shear * v, v)
    }
}

/// Warps `template` by `g` with bilinear resampling, renormalized to the
/// template's mass. Fails if more than 10% of the mass leaves the frame.
fn deform(template: &Image, g: &Affine) -> Result<Image> {
    let source = template.clone();
    let mut out = Image::from_fn(template.height(), template.width(), |x, y| {
        let (u, v) = g.inverse(x, y);
        source.sample(u, v)
    });
    let mass = template.mass();
    let kept = out.mass() / g.determinant();
    let lost = 1.0 - kept / mass;
    if lost > MAX_LOST_MASS || out.mass() <= 0.0 {
        return Err(Error::SampleRejected(format!(
            "{:.1}% of the mass left the frame",
            100.0 * lost.min(1.0)
        )));
    }
    let factor = mass / out.mass();
    if factor != 1.0 {
        out = out.scaled(factor);
    }
    Ok(out)
}

/// Draws `spec.count` deformed copies of every template, labeled by the
/// template name. Each template uses its own stream of a generator seeded
/// with `spec.seed`.
pub fn generate_synthetic(templates: &[Template], spec: &DeformationSpec) -> Result<LabeledDataset> {
    if templates.is_empty() {
        return Err(Error::InvalidInput("need at least one template".into()));
    }
    spec.validate()?;
    let mut samples = Vec::with_capacity(templates.len() * spec.count);
    for (k, template) in templates.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(k as u64);
        for _ in 0..spec.count {
            let mut image = None;
            for _ in 0..MAX_REDRAWS {
                let g = Affine::draw(&mut rng, spec);
                match deform(&template.image, &g) {
                    Ok(img) => {
                        image = Some(img);
                        break;
                    }
                    Err(Error::SampleRejected(_)) => continue,
                    Err(e) => return Err(e),
                }
            }
            let image = image.ok_or_else(|| Error::GenerationFailed {
                template: template.name.clone(),
                attempts: MAX_REDRAWS,
            })?;
            samples.push(Sample {
                image,
                label: Label::Class(template.name.clone()),
            });
        }
    }
    Ok(LabeledDataset::new(samples))
}

/// Logistic edge of width ~`softness` pixels.
fn soft_step(signed_distance: f64, softness: f64) -> f64 {
    1.0 / (1.0 + (signed_distance / softness).exp())
}

fn disk(x: f64, y: f64, cx: f64, cy: f64, radius: f64) -> f64 {
    soft_step(((x - cx).powi(2) + (y - cy).powi(2)).sqrt() - radius, 0.6)
}

/// The four shipped templates on a `size`×`size` grid: `gaussian`, `ring`
/// and `cross` as in-class shapes and `crescent` as a held-out shape.
/// Dimensions scale with `size` (reference size 64).
pub fn default_templates(size: usize) -> Vec<Template> {
    let u = size as f64 / 64.0;
    let gaussian = Image::from_fn(size, size, |x, y| {
        (-(x * x + y * y) / (2.0 * (6.0 * u).powi(2))).exp()
    });
    let ring = Image::from_fn(size, size, |x, y| {
        let r = (x * x + y * y).sqrt();
        (-(r - 11.0 * u).powi(2) / (2.0 * (2.0 * u).powi(2))).exp()
    });
    let cross = Image::from_fn(size, size, |x, y| {
        let bar = |a: f64, b: f64| {
            soft_step(a.abs() - 13.0 * u, 0.6) * soft_step(b.abs() - 3.0 * u, 0.6)
        };
        bar(x, y).max(bar(y, x))
    });
    let crescent = Image::from_fn(size, size, |x, y| {
        (disk(x, y, 0.0, 0.0, 13.0 * u) - disk(x, y, 6.0 * u, 2.0 * u, 11.0 * u)).max(0.0)
    });
    [
        ("gaussian", gaussian),
        ("ring", ring),
        ("cross", cross),
        ("crescent", crescent),
    ]
    .into_iter()
    .map(|(name, image)| Template::new(name, image).expect("templates have mass"))
    .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_spec_reproduces_templates() {
        let templates = default_templates(32);
        let ds = generate_synthetic(&templates, &DeformationSpec::identity(3, 9)).unwrap();
        assert_eq!(ds.len(), 12);
        for (i, s) in ds.samples.iter().enumerate() {
            assert_eq!(s.image, templates[i / 3].image);
            assert_eq!(s.label, Label::Class(templates[i / 3].name.clone()));
        }
    }

    #[test]
    fn translation_preserves_mass() {
        let blob = Image::from_fn(32, 32, |x, y| (-(x * x + y * y) / 8.0).exp());
        let t = Template::new("blob", blob.clone()).unwrap();
        let spec = DeformationSpec {
            translation_x: [3.0, 3.0],
            translation_y: [1.0, 1.0],
            ..DeformationSpec::identity(1, 0)
        };
        let ds = generate_synthetic(&[t], &spec).unwrap();
        let out = &ds.samples[0].image;
        assert!(((out.mass() - blob.mass()) / blob.mass()).abs() <= 1e-6);
        // Content moved 3 right and 1 up: peak at row 15.5 - 1, col 15.5 + 3.
        assert!((out.get(14, 18) - blob.get(15, 15)).abs() < 1e-12 * blob.mass());
    }

    #[test]
    fn half_scale_disk_has_half_radius() {
        let disk_img = Image::from_fn(48, 48, |x, y| if x * x + y * y <= 64.0 { 1.0 } else { 0.0 });
        let t = Template::new("disk", disk_img.clone()).unwrap();
        let spec = DeformationSpec {
            scale: [0.5, 0.5],
            ..DeformationSpec::identity(1, 0)
        };
        let out = &generate_synthetic(&[t], &spec).unwrap().samples[0].image;
        assert!(((out.mass() - disk_img.mass()) / disk_img.mass()).abs() <= 1e-9);
        // Every pixel well inside radius 3 is lit, every pixel beyond 5 is dark.
        let peak = out.pixels().iter().cloned().fold(0.0, f64::max);
        for row in 0..48 {
            for col in 0..48 {
                let (x, y) = (col as f64 - 23.5, 23.5 - row as f64);
                let r = (x * x + y * y).sqrt();
                let v = out.get(row, col);
                if r <= 3.0 {
                    assert!(v >= 0.5 * peak, "r={r} v={v}");
                } else if r >= 5.0 {
                    assert_eq!(v, 0.0, "r={r}");
                }
            }
        }
    }

    #[test]
    fn generation_is_seed_deterministic() {
        let templates = default_templates(24);
        let spec = DeformationSpec {
            count: 4,
            seed: 17,
            translation_x: [-3.0, 3.0],
            translation_y: [-3.0, 3.0],
            ..DeformationSpec::default()
        };
        let a = generate_synthetic(&templates, &spec).unwrap();
        let b = generate_synthetic(&templates, &spec).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic(&templates, &DeformationSpec { seed: 18, ..spec }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn samples_preserve_template_mass() {
        let templates = default_templates(64);
        let ds = generate_synthetic(&templates, &DeformationSpec { count: 5, seed: 2, shear: [-0.2, 0.2], ..DeformationSpec::default() }).unwrap();
        for (i, s) in ds.samples.iter().enumerate() {
            let m = templates[i / 5].image.mass();
            assert!(((s.image.mass() - m) / m).abs() <= 1e-6);
        }
    }

    #[test]
    fn out_of_frame_deformations_fail_after_redraws() {
        let t = Template::new("blob", Image::from_fn(16, 16, |x, y| (-(x * x + y * y) / 4.0).exp())).unwrap();
        let spec = DeformationSpec {
            translation_x: [40.0, 50.0],
            ..DeformationSpec::identity(1, 0)
        };
        assert!(matches!(
            generate_synthetic(&[t], &spec),
            Err(Error::GenerationFailed { attempts: 100, .. })
        ));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let t = default_templates(16);
        let bad = DeformationSpec { scale: [-0.5, 1.0], ..DeformationSpec::default() };
        assert!(matches!(generate_synthetic(&t, &bad), Err(Error::InvalidInput(m)) if m.contains("scale")));
        let bad = DeformationSpec { shear: [1.0, 0.0], ..DeformationSpec::default() };
        assert!(generate_synthetic(&t, &bad).is_err());
        assert!(generate_synthetic(&[], &DeformationSpec::default()).is_err());
    }

    #[test]
    fn zero_count_gives_empty_dataset() {
        let ds = generate_synthetic(&default_templates(16), &DeformationSpec { count: 0, ..DeformationSpec::default() }).unwrap();
        assert!(ds.is_empty());
    }
}
