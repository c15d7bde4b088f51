use std::fs;
use std::path::{Path, PathBuf};

use rcdt_ood::classifier::ClassSummary;
use rcdt_ood::data::{default_templates, generate_synthetic, read_pgm, write_manifest, write_pgm, Template};
use rcdt_ood::{train, ClassifierModel, Decision, EvaluationReport, Label, LabeledDataset};
use serde::Serialize;

use crate::config::{DataSource, RunConfig};
use crate::CliError;

pub const MODEL_FILE: &str = "model.bin";
pub const TRAIN_SUMMARY_FILE: &str = "train_summary.json";
pub const GEN_SUMMARY_FILE: &str = "gen_summary.json";
pub const REPORT_FILE: &str = "report.json";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const CURVES_FILE: &str = "likelihood_curves.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";

/// Points per class on the likelihood-curve grid.
const CURVE_POINTS: usize = 201;

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("reports serialize");
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>, CliError> {
    csv::Writer::from_path(path)
        .map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("cannot write {}: {e}", path.display()))
}

fn pick_templates(all: &[Template], names: &[String]) -> Result<Vec<Template>, CliError> {
    names
        .iter()
        .map(|name| {
            all.iter().find(|t| &t.name == name).cloned().ok_or_else(|| {
                let known: Vec<&str> = all.iter().map(|t| t.name.as_str()).collect();
                CliError::Config(format!("gen: unknown template `{name}` (known: {})", known.join(", ")))
            })
        })
        .collect()
}

#[derive(Serialize)]
struct SplitSummary {
    manifest: String,
    samples: usize,
    labels: Vec<String>,
}

#[derive(Serialize)]
struct GenSummary {
    seed: u64,
    test_seed: u64,
    size: usize,
    train: SplitSummary,
    test: SplitSummary,
}

/// Seed of the test split, kept apart from the training stream.
pub fn test_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

pub fn gen(config: &RunConfig) -> Result<PathBuf, CliError> {
    let out = config.out_dir()?;
    let g = &config.gen;
    if g.size < 4 {
        return Err(CliError::Config(format!("gen: size must be at least 4, got {}", g.size)));
    }
    if g.in_templates.is_empty() {
        return Err(CliError::Config("gen: in_templates is empty".into()));
    }
    let all = default_templates(g.size);
    let in_templates = pick_templates(&all, &g.in_templates)?;
    let ood_templates = pick_templates(&all, &g.ood_templates)?;
    let seed = config.seed();
    let train_spec = g.spec(g.train_count, seed)?;
    let test_spec = g.spec(g.test_count, test_seed(seed))?;
    for (name, count) in [("train_count", g.train_count), ("test_count", g.test_count)] {
        if count == 0 {
            eprintln!("warning: gen.{name} is 0; the split will be empty");
        }
    }

    let train_set = generate_synthetic(&in_templates, &train_spec)?;
    let test_templates: Vec<Template> = in_templates.iter().chain(&ood_templates).cloned().collect();
    let mut test_set = generate_synthetic(&test_templates, &test_spec)?;
    let test_names: Vec<String> = test_set.samples.iter().map(|s| s.label.to_string()).collect();
    for s in &mut test_set.samples[in_templates.len() * g.test_count..] {
        s.label = Label::OutOfClass;
    }

    create_dir(out)?;
    let train_names: Vec<String> = train_set.samples.iter().map(|s| s.label.to_string()).collect();
    let train = write_split(out, "train", &train_set, &train_names)?;
    let test = write_split(out, "test", &test_set, &test_names)?;
    let summary_path = out.join(GEN_SUMMARY_FILE);
    write_json(
        &summary_path,
        &GenSummary {
            seed,
            test_seed: test_seed(seed),
            size: g.size,
            train,
            test,
        },
    )?;
    Ok(summary_path)
}

/// Writes one split as PGM files plus a manifest. Files are named after
/// the generating template, which out-of-class labels no longer carry.
fn write_split(
    out: &Path,
    split: &str,
    data: &LabeledDataset,
    names: &[String],
) -> Result<SplitSummary, CliError> {
    create_dir(&out.join(split))?;
    let mut entries = Vec::with_capacity(data.len());
    let mut counter = std::collections::BTreeMap::<&str, usize>::new();
    for (sample, name) in data.samples.iter().zip(names) {
        let n = counter.entry(name).or_default();
        let rel = format!("{split}/{name}_{n:05}.pgm");
        *n += 1;
        write_pgm(out.join(&rel), &sample.image)?;
        entries.push((rel, sample.label.clone()));
    }
    let manifest = format!("{split}.csv");
    write_manifest(out.join(&manifest), &entries)?;
    let mut labels: Vec<String> = entries.iter().map(|(_, l)| l.to_string()).collect();
    labels.sort();
    labels.dedup();
    Ok(SplitSummary {
        manifest,
        samples: entries.len(),
        labels,
    })
}

#[derive(Serialize)]
struct TrainSummary {
    model: String,
    samples: usize,
    image_height: usize,
    image_width: usize,
    dimension: usize,
    n_angles: usize,
    n_offsets: usize,
    reference_size: usize,
    classes: Vec<ClassSummary>,
}

pub fn train_cmd(config: &RunConfig, train_source: Option<PathBuf>) -> Result<PathBuf, CliError> {
    let out = config.out_dir()?;
    let train_config = config.train_config()?;
    let source = match train_source {
        Some(path) => DataSource::from_manifest(path),
        None => config
            .data
            .train
            .clone()
            .ok_or_else(|| CliError::Config("no training data: pass --train or set [data.train]".into()))?,
    };
    let data = source.load("train")?;
    let model = train(&data, &train_config)?;

    create_dir(out)?;
    model.save(out.join(MODEL_FILE))?;
    let resolved = model.transform().resolved();
    let summary_path = out.join(TRAIN_SUMMARY_FILE);
    write_json(
        &summary_path,
        &TrainSummary {
            model: MODEL_FILE.into(),
            samples: data.len(),
            image_height: model.image_size().0,
            image_width: model.image_size().1,
            dimension: resolved.dimension(),
            n_angles: resolved.n_angles,
            n_offsets: resolved.n_offsets,
            reference_size: resolved.reference_size,
            classes: model.summary(),
        },
    )?;
    Ok(summary_path)
}

fn model_path(config: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.model.clone())
        .ok_or_else(|| CliError::Config("no model: pass --model or set `model`".into()))
}

#[derive(Serialize)]
struct AccuracyRow {
    alpha: f64,
    accuracy: f64,
    n_rejected: usize,
}

#[derive(Serialize)]
struct EvalOutput<'a> {
    labels: Vec<&'a str>,
    n_samples: usize,
    accuracy_by_alpha: Vec<AccuracyRow>,
    reports: &'a [EvaluationReport],
}

pub fn eval(
    config: &RunConfig,
    model_flag: Option<PathBuf>,
    test_source: Option<PathBuf>,
) -> Result<PathBuf, CliError> {
    let out = config.out_dir()?;
    let alphas = config.alphas()?;
    let model = ClassifierModel::load(model_path(config, model_flag)?)?;
    let source = match test_source {
        Some(path) => DataSource::from_manifest(path),
        None => config
            .data
            .test
            .clone()
            .ok_or_else(|| CliError::Config("no test data: pass --test or set [data.test]".into()))?,
    };
    let data = source.load("test")?;
    let reports = model.evaluate_many(&data, &alphas)?;

    create_dir(out)?;
    let report_path = out.join(REPORT_FILE);
    write_json(
        &report_path,
        &EvalOutput {
            labels: model.labels(),
            n_samples: data.len(),
            accuracy_by_alpha: reports
                .iter()
                .map(|r| AccuracyRow {
                    alpha: r.alpha,
                    accuracy: r.accuracy,
                    n_rejected: r.n_rejected,
                })
                .collect(),
            reports: &reports,
        },
    )?;
    write_samples(&out.join(SAMPLES_FILE), &reports)?;
    write_curves(&out.join(CURVES_FILE), &model)?;
    Ok(report_path)
}

fn write_samples(path: &Path, reports: &[EvaluationReport]) -> Result<(), CliError> {
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record([
        "alpha",
        "index",
        "true_label",
        "nearest_class",
        "distance",
        "likelihood",
        "decision",
        "correct",
    ])
    .map_err(&err)?;
    for r in reports {
        for s in &r.records {
            w.write_record([
                r.alpha.to_string(),
                s.index.to_string(),
                s.true_label.clone(),
                s.nearest_class.clone(),
                s.distance.to_string(),
                s.likelihood.to_string(),
                s.decision.clone(),
                s.correct.to_string(),
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

/// `L(x)` for every class on one shared distance grid.
fn write_curves(path: &Path, model: &ClassifierModel) -> Result<(), CliError> {
    let x_max = model
        .classes()
        .iter()
        .map(|c| {
            let top = c.density.support_points().iter().cloned().fold(0.0, f64::max);
            top + 4.0 * c.density.bandwidth()
        })
        .fold(0.0, f64::max);
    let mut w = csv_writer(path)?;
    let err = csv_err(path);
    w.write_record(["class", "distance", "likelihood"]).map_err(&err)?;
    for c in model.classes() {
        for i in 0..CURVE_POINTS {
            let x = x_max * i as f64 / (CURVE_POINTS - 1) as f64;
            w.write_record([c.label.clone(), x.to_string(), c.density.likelihood(x).to_string()])
                .map_err(&err)?;
        }
    }
    w.flush().map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))
}

pub fn predict(
    config: &RunConfig,
    model_flag: Option<PathBuf>,
    inputs: &[PathBuf],
) -> Result<PathBuf, CliError> {
    let out = config.out_dir()?;
    let alphas = config.alphas()?;
    if inputs.is_empty() {
        return Err(CliError::Config("predict: no input images given".into()));
    }
    let model = ClassifierModel::load(model_path(config, model_flag)?)?;
    let images = inputs.iter().map(read_pgm).collect::<Result<Vec<_>, _>>()?;
    let refs: Vec<_> = images.iter().collect();
    let scores = model.score_batch(&refs)?;
    let labels = model.labels();

    create_dir(out)?;
    let path = out.join(PREDICTIONS_FILE);
    let mut w = csv_writer(&path)?;
    let err = csv_err(&path);
    w.write_record(["path", "nearest_class", "distance", "likelihood", "alpha", "decision"])
        .map_err(&err)?;
    for (input, score) in inputs.iter().zip(&scores) {
        for &alpha in &alphas {
            let decision = match score.decide(alpha) {
                Decision::Accept(k) => labels[k].to_string(),
                Decision::Reject => rcdt_ood::classifier::REJECT_COLUMN.to_string(),
            };
            w.write_record([
                input.display().to_string(),
                labels[score.nearest].to_string(),
                score.nearest_distance().to_string(),
                score.likelihood.to_string(),
                alpha.to_string(),
                decision,
            ])
            .map_err(&err)?;
        }
    }
    w.flush().map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    drop(err);
    Ok(path)
}
