//! Training, prediction and evaluation of the nearest-subspace classifier
//! with the likelihood gate.

mod model_file;
mod report;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use model_file::{MODEL_FORMAT_VERSION, MODEL_MAGIC};
pub use report::{ClassAccuracy, EvaluationReport, SampleRecord, REJECT_COLUMN};

use crate::data::{Label, LabeledDataset};
use crate::error::{Error, Result};
use crate::image::Image;
use crate::likelihood::{fit_kde, gate, quantile_sorted, Decision, DistanceDensity};
use crate::rcdt::{RcdtTransform, RcdtVector, TransformConfig};
use crate::subspace::{fit_subspace_capped, nearest, SubspaceBasis, DEFAULT_RANK_TOLERANCE};

pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub transform: TransformConfig,
    /// Relative singular-value cutoff for the class subspaces.
    pub rank_tolerance: f64,
    pub max_rank: Option<usize>,
    /// Per-class share of samples held out for the distance densities.
    pub validation_fraction: f64,
    /// Fixed KDE bandwidth; Silverman's rule when unset.
    pub bandwidth: Option<f64>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            transform: TransformConfig::default(),
            rank_tolerance: DEFAULT_RANK_TOLERANCE,
            max_rank: None,
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            bandwidth: None,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.transform.validate()?;
        if !(0.0..1.0).contains(&self.rank_tolerance) {
            return Err(Error::InvalidInput(format!(
                "rank_tolerance must lie in [0, 1), got {}",
                self.rank_tolerance
            )));
        }
        if self.max_rank == Some(0) {
            return Err(Error::InvalidInput("max_rank must be at least 1".into()));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction <= 0.5) {
            return Err(Error::InvalidInput(format!(
                "validation_fraction must lie in (0, 0.5], got {}",
                self.validation_fraction
            )));
        }
        if let Some(h) = self.bandwidth {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidInput(format!("bandwidth must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

/// Everything learned for one class.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassModel {
    pub label: String,
    pub basis: SubspaceBasis,
    pub density: DistanceDensity,
    pub n_fit: usize,
    pub n_validation: usize,
}

/// Training diagnostics for one class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSummary {
    pub label: String,
    pub n_fit: usize,
    pub n_validation: usize,
    pub rank: usize,
    pub bandwidth: f64,
    /// Validation distances at quantiles 0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.
    pub distance_quantiles: Vec<f64>,
}

pub const SUMMARY_QUANTILES: [f64; 7] = [0.0, 0.05, 0.25, 0.5, 0.75, 0.95, 1.0];

#[derive(Debug, Clone)]
pub struct ClassifierModel {
    config: TrainConfig,
    image_size: (usize, usize),
    classes: Vec<ClassModel>,
    transform: RcdtTransform,
}

/// Distances of one image to every class and the likelihood of the nearest.
#[derive(Debug, Clone, PartialEq)]
pub struct Score {
    pub nearest: usize,
    pub distances: Vec<f64>,
    pub likelihood: f64,
}

impl Score {
    pub fn nearest_distance(&self) -> f64 {
        self.distances[self.nearest]
    }

    /// Gate decision at `alpha`; zero accepts unconditionally.
    pub fn decide(&self, alpha: f64) -> Decision {
        if alpha == 0.0 {
            Decision::Accept(self.nearest)
        } else {
            gate(self.likelihood, self.nearest, alpha)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub nearest: usize,
    pub distances: Vec<f64>,
    pub likelihood: f64,
    pub decision: Decision,
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("alpha must lie in [0, 1), got {alpha}")))
    }
}

fn image_size(dataset: &LabeledDataset) -> Result<(usize, usize)> {
    let first = dataset
        .samples
        .first()
        .ok_or_else(|| Error::InvalidInput("dataset is empty".into()))?;
    let size = (first.image.height(), first.image.width());
    for (i, s) in dataset.samples.iter().enumerate() {
        if (s.image.height(), s.image.width()) != size {
            return Err(Error::InvalidInput(format!(
                "sample {i} is {}x{}, expected {}x{}",
                s.image.height(),
                s.image.width(),
                size.0,
                size.1
            )));
        }
    }
    Ok(size)
}

fn insufficient(class: &str, reason: String) -> Error {
    Error::InsufficientData {
        class: class.to_string(),
        reason,
    }
}

/// Seeded split of one class's sample indices into (fit, validation).
fn split_class(
    label: &str,
    class_index: usize,
    members: &[usize],
    config: &TrainConfig,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let n = members.len();
    if n < 2 {
        return Err(insufficient(label, format!("need at least 2 samples, got {n}")));
    }
    let n_val = (config.validation_fraction * n as f64).round() as usize;
    if n_val < 2 {
        return Err(insufficient(
            label,
            format!(
                "validation split of {n} samples at fraction {} leaves {n_val} validation samples, need at least 2",
                config.validation_fraction
            ),
        ));
    }
    if n_val >= n {
        return Err(insufficient(label, "no samples left for subspace fitting".into()));
    }
    let mut order = members.to_vec();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(class_index as u64);
    order.shuffle(&mut rng);
    let validation = order.split_off(n - n_val);
    Ok((order, validation))
}

/// Fits one subspace and one distance density per class. Each class is
/// split into fit and validation parts by a seeded shuffle; validation
/// samples do not contribute to the subspace.
pub fn train(train_set: &LabeledDataset, config: &TrainConfig) -> Result<ClassifierModel> {
    config.validate()?;
    if train_set.count_out_of_class() > 0 {
        return Err(Error::InvalidInput(
            "training data must not contain out-of-class samples".into(),
        ));
    }
    let (height, width) = image_size(train_set)?;
    let transform = RcdtTransform::new(&config.transform, height, width)?;
    let labels = train_set.class_names();

    let mut members: Vec<Vec<usize>> = vec![Vec::new(); labels.len()];
    for (i, s) in train_set.samples.iter().enumerate() {
        let name = s.label.class_name().expect("no out-of-class samples");
        let k = labels.binary_search_by(|l| l.as_str().cmp(name)).expect("label table is complete");
        members[k].push(i);
    }

    let splits = labels
        .iter()
        .zip(&members)
        .enumerate()
        .map(|(k, (label, idx))| split_class(label, k, idx, config))
        .collect::<Result<Vec<_>>>()?;

    let vectors = transform.transform_batch(train_set.samples.par_iter().map(|s| &s.image))?;
    let classes = labels
        .par_iter()
        .zip(splits.par_iter())
        .map(|(label, (fit, validation))| {
            let fit_vectors: Vec<RcdtVector> = fit.iter().map(|&i| vectors[i].clone()).collect();
            let val_vectors: Vec<RcdtVector> =
                validation.iter().map(|&i| vectors[i].clone()).collect();
            let basis = fit_subspace_capped(&fit_vectors, config.rank_tolerance, config.max_rank)?;
            let distances = basis.distances(&val_vectors)?;
            let density = fit_kde(&distances, config.bandwidth).map_err(|e| match e {
                Error::InsufficientData { reason, .. } => insufficient(label, reason),
                other => other,
            })?;
            Ok(ClassModel {
                label: label.clone(),
                basis,
                density,
                n_fit: fit.len(),
                n_validation: validation.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(ClassifierModel {
        config: config.clone(),
        image_size: (height, width),
        classes,
        transform,
    })
}

impl ClassifierModel {
    /// Assembles a model from stored parts, checking that they agree.
    pub fn from_parts(
        config: TrainConfig,
        image_size: (usize, usize),
        classes: Vec<ClassModel>,
    ) -> Result<Self> {
        config.validate()?;
        if classes.is_empty() {
            return Err(Error::ModelIncomplete("model has no classes".into()));
        }
        let transform = RcdtTransform::new(&config.transform, image_size.0, image_size.1)?;
        for class in &classes {
            if class.basis.fingerprint() != transform.fingerprint() {
                return Err(Error::ConfigMismatch {
                    expected: transform.fingerprint(),
                    found: class.basis.fingerprint(),
                });
            }
            if class.basis.dimension() != transform.dimension() {
                return Err(Error::InvalidInput(format!(
                    "basis for `{}` has dimension {}, transform produces {}",
                    class.label,
                    class.basis.dimension(),
                    transform.dimension()
                )));
            }
        }
        Ok(Self {
            config,
            image_size,
            classes,
            transform,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn image_size(&self) -> (usize, usize) {
        self.image_size
    }

    pub fn classes(&self) -> &[ClassModel] {
        &self.classes
    }

    pub fn labels(&self) -> Vec<&str> {
        self.classes.iter().map(|c| c.label.as_str()).collect()
    }

    pub fn transform(&self) -> &RcdtTransform {
        &self.transform
    }

    pub fn class_index(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c.label == label)
    }

    pub fn summary(&self) -> Vec<ClassSummary> {
        self.classes
            .iter()
            .map(|c| {
                let mut d = c.density.support_points().to_vec();
                d.sort_by(f64::total_cmp);
                ClassSummary {
                    label: c.label.clone(),
                    n_fit: c.n_fit,
                    n_validation: c.n_validation,
                    rank: c.basis.rank(),
                    bandwidth: c.density.bandwidth(),
                    distance_quantiles: SUMMARY_QUANTILES
                        .iter()
                        .map(|q| quantile_sorted(&d, *q))
                        .collect(),
                }
            })
            .collect()
    }

    fn check_image(&self, image: &Image) -> Result<()> {
        let size = (image.height(), image.width());
        if size != self.image_size {
            return Err(Error::InvalidInput(format!(
                "image is {}x{}, model expects {}x{}",
                size.0, size.1, self.image_size.0, self.image_size.1
            )));
        }
        Ok(())
    }

    fn score_vector(&self, distances: Vec<f64>) -> Score {
        let nearest = nearest(&distances).expect("model has classes");
        let likelihood = self.classes[nearest].density.likelihood(distances[nearest]);
        Score {
            nearest,
            distances,
            likelihood,
        }
    }

    pub fn score(&self, image: &Image) -> Result<Score> {
        self.check_image(image)?;
        let v = self.transform.transform(image)?;
        let distances = self
            .classes
            .iter()
            .map(|c| c.basis.distance(&v))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.score_vector(distances))
    }

    /// Scores many images; output order follows input order.
    pub fn score_batch(&self, images: &[&Image]) -> Result<Vec<Score>> {
        for image in images {
            self.check_image(image)?;
        }
        let vectors = self.transform.transform_batch(images.par_iter().copied())?;
        let per_class = self
            .classes
            .par_iter()
            .map(|c| c.basis.distances(&vectors))
            .collect::<Result<Vec<_>>>()?;
        Ok((0..vectors.len())
            .map(|i| self.score_vector(per_class.iter().map(|d| d[i]).collect()))
            .collect())
    }

    /// Nearest class plus the gate decision; `alpha = 0` always accepts.
    pub fn predict(&self, image: &Image, alpha: f64) -> Result<Prediction> {
        check_alpha(alpha)?;
        let score = self.score(image)?;
        let decision = score.decide(alpha);
        Ok(Prediction {
            nearest: score.nearest,
            distances: score.distances,
            likelihood: score.likelihood,
            decision,
        })
    }

    pub fn evaluate(&self, test_set: &LabeledDataset, alpha: f64) -> Result<EvaluationReport> {
        Ok(self.evaluate_many(test_set, &[alpha])?.remove(0))
    }

    /// One report per alpha, sharing a single pass of transforms.
    pub fn evaluate_many(
        &self,
        test_set: &LabeledDataset,
        alphas: &[f64],
    ) -> Result<Vec<EvaluationReport>> {
        if test_set.is_empty() {
            return Err(Error::InvalidInput("test set is empty".into()));
        }
        if alphas.is_empty() {
            return Err(Error::InvalidInput("need at least one alpha".into()));
        }
        for alpha in alphas {
            check_alpha(*alpha)?;
        }
        let truth = test_set
            .samples
            .iter()
            .map(|s| match &s.label {
                Label::OutOfClass => Ok(None),
                Label::Class(name) => self.class_index(name).map(Some).ok_or_else(|| {
                    Error::InvalidInput(format!(
                        "test label `{name}` is not a trained class; label held-out classes `{}`",
                        crate::data::OOD_LABEL
                    ))
                }),
            })
            .collect::<Result<Vec<_>>>()?;
        let images: Vec<&Image> = test_set.images().collect();
        let scores = self.score_batch(&images)?;
        Ok(alphas
            .iter()
            .map(|&alpha| EvaluationReport::build(&self.labels(), &truth, &scores, alpha))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{default_templates, generate_synthetic, DeformationSpec, Sample};

    fn small_config(seed: u64) -> TrainConfig {
        TrainConfig {
            transform: TransformConfig::with_angles(24),
            seed,
            ..TrainConfig::default()
        }
    }

    fn synthetic(count: usize, seed: u64, templates: usize) -> LabeledDataset {
        let t = default_templates(32);
        let spec = DeformationSpec {
            count,
            seed,
            translation_x: [-3.0, 3.0],
            translation_y: [-3.0, 3.0],
            ..DeformationSpec::default()
        };
        generate_synthetic(&t[..templates], &spec).unwrap()
    }

    fn ood(count: usize, seed: u64) -> LabeledDataset {
        let mut ds = synthetic(count, seed, 4);
        ds.samples.retain(|s| s.label == Label::Class("crescent".into()));
        for s in &mut ds.samples {
            s.label = Label::OutOfClass;
        }
        ds
    }

    #[test]
    fn training_is_seed_deterministic() {
        let data = synthetic(50, 1, 2);
        let a = train(&data, &small_config(4)).unwrap();
        let b = train(&data, &small_config(4)).unwrap();
        assert_eq!(a.classes().len(), 2);
        for (x, y) in a.classes().iter().zip(b.classes()) {
            assert_eq!(x.basis.singular_values(), y.basis.singular_values());
            assert_eq!(x.density, y.density);
        }
        let c = train(&data, &small_config(5)).unwrap();
        assert_ne!(a.classes()[0].density, c.classes()[0].density);
    }

    #[test]
    fn single_sample_class_is_insufficient() {
        let mut data = synthetic(20, 1, 2);
        data.samples.push(Sample {
            image: data.samples[0].image.clone(),
            label: Label::Class("lonely".into()),
        });
        match train(&data, &small_config(0)) {
            Err(Error::InsufficientData { class, .. }) => assert_eq!(class, "lonely"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn tiny_validation_split_is_insufficient() {
        let data = synthetic(5, 1, 1);
        assert!(matches!(
            train(&data, &small_config(0)),
            Err(Error::InsufficientData { .. })
        ));
    }

    #[test]
    fn rejects_bad_training_inputs() {
        let mut data = synthetic(10, 1, 1);
        let bad = TrainConfig { validation_fraction: 0.6, ..small_config(0) };
        assert!(matches!(train(&data, &bad), Err(Error::InvalidInput(_))));
        data.samples[0].label = Label::OutOfClass;
        assert!(matches!(train(&data, &small_config(0)), Err(Error::InvalidInput(_))));
        assert!(train(&LabeledDataset::default(), &small_config(0)).is_err());
    }

    #[test]
    fn validation_samples_prefer_their_own_subspace() {
        let data = synthetic(60, 2, 3);
        let model = train(&data, &small_config(3)).unwrap();
        let vectors = model
            .transform()
            .transform_batch(data.samples.par_iter().map(|s| &s.image))
            .unwrap();
        let (mut wins, mut total) = (0, 0);
        for (k, c) in model.classes().iter().enumerate() {
            let members: Vec<usize> = (0..data.len())
                .filter(|&i| data.samples[i].label.class_name() == Some(&c.label))
                .collect();
            let (_, validation) = split_class(&c.label, k, &members, model.config()).unwrap();
            for (j, i) in validation.into_iter().enumerate() {
                let d: Vec<f64> = model.classes().iter().map(|c| c.basis.distance(&vectors[i]).unwrap()).collect();
                assert!((d[k] - c.density.support_points()[j]).abs() <= 1e-9 * d[k].max(1.0));
                total += 1;
                if d.iter().enumerate().all(|(j, dj)| j == k || d[k] < *dj) {
                    wins += 1;
                }
            }
        }
        assert!(total >= 36, "{total}");
        assert!(wins as f64 >= 0.95 * total as f64, "{wins}/{total}");
    }

    #[test]
    fn class_midpoints_stay_nearest_to_their_class() {
        let data = synthetic(40, 5, 3);
        let model = train(&data, &small_config(1)).unwrap();
        let fresh = synthetic(20, 99, 3);
        let vectors = model
            .transform()
            .transform_batch(fresh.samples.par_iter().map(|s| &s.image))
            .unwrap();
        let (mut wins, mut total) = (0, 0);
        for k in 0..3 {
            for i in 0..19 {
                let (a, b) = (&vectors[k * 20 + i], &vectors[k * 20 + i + 1]);
                let mid: Vec<f64> = a.values().iter().zip(b.values()).map(|(x, y)| 0.5 * (x + y)).collect();
                let mid = RcdtVector::new(mid, a.fingerprint());
                let d: Vec<f64> = model.classes().iter().map(|c| c.basis.distance(&mid).unwrap()).collect();
                total += 1;
                if nearest(&d) == model.class_index(fresh.samples[k * 20].label.class_name().unwrap()) {
                    wins += 1;
                }
            }
        }
        assert!(wins as f64 >= 0.95 * total as f64, "{wins}/{total}");
    }

    #[test]
    fn alpha_zero_accepts_and_training_images_pass_the_gate() {
        let data = synthetic(30, 3, 3);
        let model = train(&data, &small_config(2)).unwrap();
        for s in data.samples.iter().step_by(7) {
            let p0 = model.predict(&s.image, 0.0).unwrap();
            assert_eq!(p0.decision, Decision::Accept(p0.nearest));
            let p = model.predict(&s.image, 0.01).unwrap();
            let k = model.class_index(s.label.class_name().unwrap()).unwrap();
            assert_eq!(p.decision, Decision::Accept(k));
        }
        assert!(model.predict(&data.samples[0].image, 1.0).is_err());
        assert!(model.predict(&Image::zeros(8, 8), 0.0).is_err());
    }

    #[test]
    fn held_out_template_is_mostly_rejected() {
        let model = train(&synthetic(60, 4, 3), &small_config(0)).unwrap();
        let test = ood(60, 77);
        let report = model.evaluate(&test, 0.05).unwrap();
        assert!(report.n_rejected as f64 >= 0.9 * test.len() as f64, "{}", report.n_rejected);
    }

    #[test]
    fn rejections_grow_with_alpha_and_reports_are_consistent() {
        let model = train(&synthetic(40, 6, 3), &small_config(0)).unwrap();
        let mut test = synthetic(15, 8, 3);
        test.extend(ood(15, 9));
        let reports = model.evaluate_many(&test, &[0.0, 0.01, 0.05, 0.1, 0.5]).unwrap();
        assert_eq!(reports[0].n_rejected, 0);
        for w in reports.windows(2) {
            assert!(w[0].n_rejected <= w[1].n_rejected);
        }
        for r in &reports {
            r.check_consistency().unwrap();
            let total: usize = r.confusion.iter().flatten().sum();
            assert_eq!(total, test.len());
        }
        // Evaluating one alpha at a time gives the same reports.
        assert_eq!(model.evaluate(&test, 0.05).unwrap(), reports[2]);
    }

    #[test]
    fn unknown_test_labels_and_empty_sets_are_rejected() {
        let model = train(&synthetic(20, 1, 2), &small_config(0)).unwrap();
        let stranger = synthetic(2, 1, 3);
        assert!(matches!(model.evaluate(&stranger, 0.0), Err(Error::InvalidInput(m)) if m.contains("cross")));
        assert!(model.evaluate(&LabeledDataset::default(), 0.0).is_err());
    }
}
