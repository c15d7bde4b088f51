use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rcdt-ood"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).trim().to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).to_string()
}

const SMALL: &str = r#"
seed = 11
alphas = [0.0, 0.01, 0.05, 0.10]

[transform]
n_angles = 36

[gen]
size = 32
train_count = 30
test_count = 10
translation_x = [-3.0, 3.0]
translation_y = [-3.0, 3.0]
"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// gen + train + eval in `dir`; returns the eval output directory.
fn pipeline(dir: &Path) -> PathBuf {
    let config = write_config(dir, SMALL);
    let data = dir.join("data");
    let o = run(&["gen", "--config", s(&config), "--out", s(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), data.join("gen_summary.json").display().to_string());

    let model_dir = dir.join("model");
    let o = run(&["train", "--config", s(&config), "--train", s(&data.join("train.csv")), "--out", s(&model_dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), model_dir.join("train_summary.json").display().to_string());

    let eval_dir = dir.join("eval");
    let o = run(&[
        "eval",
        "--config",
        s(&config),
        "--model",
        s(&model_dir.join("model.bin")),
        "--test",
        s(&data.join("test.csv")),
        "--out",
        s(&eval_dir),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), eval_dir.join("report.json").display().to_string());
    eval_dir
}

#[test]
fn pipeline_outputs_are_complete_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let eval_dir = pipeline(dir.path());

    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("model/train_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["classes"].as_array().unwrap().len(), 3);

    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(eval_dir.join("report.json")).unwrap()).unwrap();
    let rows = report["accuracy_by_alpha"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0]["n_rejected"], 0);
    let rejected: Vec<u64> = rows.iter().map(|r| r["n_rejected"].as_u64().unwrap()).collect();
    assert!(rejected.windows(2).all(|w| w[0] <= w[1]), "{rejected:?}");

    let mut curves = csv::Reader::from_path(eval_dir.join("likelihood_curves.csv")).unwrap();
    let mut last: Option<(String, f64)> = None;
    for row in curves.records() {
        let row = row.unwrap();
        let (class, l) = (row[0].to_string(), row[2].parse::<f64>().unwrap());
        if let Some((c, prev)) = &last {
            if *c == class {
                assert!(l <= *prev, "likelihood rose for {class}");
            }
        }
        last = Some((class, l));
    }

    let samples = csv::Reader::from_path(eval_dir.join("samples.csv")).unwrap().into_records().count();
    assert_eq!(samples, 4 * 40);
}

#[test]
fn same_seed_gives_byte_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    pipeline(a.path());
    pipeline(b.path());
    for file in ["data/train.csv", "data/test.csv", "data/train/cross_00003.pgm", "model/model.bin", "model/train_summary.json", "eval/report.json", "eval/samples.csv", "eval/likelihood_curves.csv"] {
        assert_eq!(
            std::fs::read(a.path().join(file)).unwrap(),
            std::fs::read(b.path().join(file)).unwrap(),
            "{file} differs"
        );
    }
}

#[test]
fn negative_scale_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[gen]\nscale = [-0.5, 1.0]\n");
    let o = run(&["gen", "--config", s(&config), "--out", s(&dir.path().join("d"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scale"), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}

#[test]
fn zero_count_writes_empty_split_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[gen]\nsize = 16\ntrain_count = 0\ntest_count = 2\n");
    let out = dir.path().join("d");
    let o = run(&["gen", "--config", s(&config), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("warning"));
    assert_eq!(std::fs::read_to_string(out.join("train.csv")).unwrap().trim(), "path,label");
    let test = std::fs::read_to_string(out.join("test.csv")).unwrap();
    assert_eq!(test.lines().count(), 1 + 4 * 2);
    assert_eq!(test.matches("__ood__").count(), 2);
}

#[test]
fn unknown_config_keys_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[gen]\nsizee = 16\n");
    let o = run(&["gen", "--config", s(&config), "--out", s(&dir.path().join("d"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("sizee"), "{}", stderr(&o));
}

#[test]
fn corrupt_manifest_exits_2_with_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("bad.csv");
    std::fs::write(&manifest, "path,label\nmissing.pgm,a\n").unwrap();
    let o = run(&["train", "--train", s(&manifest), "--out", s(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("format error"), "{}", stderr(&o));
    assert!(stderr(&o).contains("missing.pgm"));
}

#[test]
fn too_few_samples_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), "[gen]\nsize = 16\ntrain_count = 4\ntest_count = 1\n");
    let data = dir.path().join("d");
    assert!(run(&["gen", "--config", s(&config), "--out", s(&data)]).status.success());
    let o = run(&["train", "--train", s(&data.join("train.csv")), "--out", s(&dir.path().join("m"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("insufficient data"), "{}", stderr(&o));
}

#[test]
fn predict_classifies_individual_images() {
    let dir = tempfile::tempdir().unwrap();
    pipeline(dir.path());
    let image = dir.path().join("data/test/ring_00000.pgm");
    let o = run(&[
        "predict",
        "--model",
        s(&dir.path().join("model/model.bin")),
        "--alpha",
        "0,0.05",
        "--out",
        s(&dir.path().join("p")),
        s(&image),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(stdout(&o)).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",ring,"), "{text}");
    assert!(rows[0].ends_with(",0,ring"), "{text}");
}

#[test]
fn missing_model_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["eval", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["eval", "--model", s(&dir.path().join("nope.bin")), "--test", "x.csv", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
}
