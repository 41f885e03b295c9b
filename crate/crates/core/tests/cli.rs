mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chemcal::calibration::CalibrationReport;
use chemcal::corpus::LabeledExample;
use chemcal::pipeline::{self, RunManifest};
use chemcal::records::{read_jsonl, write_jsonl, PredictionLine, UnlabeledExample};
use chemcal::selftrain::ProvenanceEntry;
use chemcal::synthetic::{generate_labeled, generate_pool, SyntheticConfig};
use chemcal::Classifier;

fn chemcal(dir: &Path, args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_chemcal"));
    cmd.current_dir(dir).args(args).env("RUST_LOG", "warn");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Small synthetic corpus and a config that runs every stage in seconds.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let cfg = SyntheticConfig::default();
    write_jsonl(&dir.path().join("train.jsonl"), &generate_labeled(300, 1, "tr", &cfg)).unwrap();
    write_jsonl(&dir.path().join("test.jsonl"), &generate_labeled(120, 2, "te", &cfg)).unwrap();
    write_jsonl(&dir.path().join("pool.jsonl"), &generate_pool(500, 3, "po", &cfg)).unwrap();
    std::fs::write(
        dir.path().join("run.toml"),
        r#"seed = 5
out_dir = "out"

[data]
train = "train.jsonl"
test = "test.jsonl"
pool = "pool.jsonl"

[encoder]
dim = 12
hidden = 12

[train]
epochs = 3
mix_per_example = 1

[selftrain]
k = 40000.0

[ablation]
rows = ["base", "cpl"]
replicates = 1
"#,
    )
    .unwrap();
    dir
}

fn files(dir: &Path, names: &[&str]) -> Vec<PathBuf> {
    names.iter().map(|n| dir.join(n)).collect()
}

#[test]
fn pipeline_writes_every_declared_output() {
    let ws = workspace();
    let out = chemcal(ws.path(), &["--config", "run.toml", "pipeline"], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let o = ws.path().join("out");
    for p in files(
        &o,
        &[
            pipeline::MODEL_FILE,
            pipeline::TRAIN_LOG_FILE,
            pipeline::REPORT_FILE,
            pipeline::HISTOGRAM_FILE,
            pipeline::PREDICTIONS_FILE,
            pipeline::SELFTRAIN_MODEL_FILE,
            pipeline::SELFTRAIN_LOG_FILE,
            pipeline::PROVENANCE_FILE,
            pipeline::SELFTRAIN_REPORT_FILE,
            pipeline::SELFTRAIN_HISTOGRAM_FILE,
            pipeline::SELFTRAIN_PREDICTIONS_FILE,
            pipeline::MANIFEST_FILE,
        ],
    ) {
        assert!(p.is_file(), "missing {}", p.display());
    }
    Classifier::load(&o.join(pipeline::MODEL_FILE)).unwrap();
    Classifier::load(&o.join(pipeline::SELFTRAIN_MODEL_FILE)).unwrap();
    for r in [pipeline::REPORT_FILE, pipeline::SELFTRAIN_REPORT_FILE] {
        let text = std::fs::read_to_string(o.join(r)).unwrap();
        let report = CalibrationReport::from_keyed_text(&text).unwrap();
        assert_eq!(report.n, 120);
        assert!(report.oe <= report.ece);
    }
    let preds: Vec<PredictionLine> = read_jsonl(&o.join(pipeline::PREDICTIONS_FILE)).unwrap();
    assert_eq!(preds.len(), 120);
    let prov: Vec<ProvenanceEntry> = read_jsonl(&o.join(pipeline::PROVENANCE_FILE)).unwrap();
    // quota round(40000 * 500 / 1e6) = 20 per class
    assert!(!prov.is_empty() && prov.len() <= 100);
    let hist = std::fs::read_to_string(o.join(pipeline::HISTOGRAM_FILE)).unwrap();
    assert_eq!(hist.lines().count(), 11);
    let manifest = RunManifest::read(&o.join(pipeline::MANIFEST_FILE)).unwrap();
    assert!(manifest.error.is_none());
    assert_eq!(manifest.input_digests.len(), 3);
    assert_eq!(manifest.seed, 5);
}

#[test]
fn missing_pool_fails_in_selftrain_stage() {
    let ws = workspace();
    let out = chemcal(
        ws.path(),
        &["--config", "run.toml", "pipeline"],
        &[("CHEMCAL_DATA__POOL", "absent.jsonl")],
    );
    assert!(!out.status.success());
    assert!(stderr(&out).contains("error[selftrain]"), "{}", stderr(&out));
    let manifest = RunManifest::read(&ws.path().join("out").join(pipeline::MANIFEST_FILE)).unwrap();
    assert!(manifest.error.unwrap().contains("absent.jsonl"));
    assert!(!ws.path().join("out").join(pipeline::MODEL_FILE).exists());
}

#[test]
fn zero_k_skips_the_pool() {
    let ws = workspace();
    let out = chemcal(
        ws.path(),
        &["--config", "run.toml", "pipeline"],
        &[("CHEMCAL_SELFTRAIN__K", "0"), ("CHEMCAL_DATA__POOL", "absent.jsonl")],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let o = ws.path().join("out");
    assert!(o.join(pipeline::REPORT_FILE).is_file());
    assert!(!o.join(pipeline::SELFTRAIN_MODEL_FILE).exists());
    assert!(!o.join(pipeline::PROVENANCE_FILE).exists());
}

#[test]
fn manifest_replay_reproduces_outputs() {
    let ws = workspace();
    assert!(chemcal(ws.path(), &["--config", "run.toml", "pipeline"], &[]).status.success());
    let out = chemcal(
        ws.path(),
        &[
            "pipeline",
            "--from-manifest",
            "out/pipeline.manifest.json",
            "--out-dir",
            "replay",
        ],
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    for f in [
        pipeline::MODEL_FILE,
        pipeline::SELFTRAIN_MODEL_FILE,
        pipeline::REPORT_FILE,
        pipeline::PROVENANCE_FILE,
    ] {
        assert_eq!(
            std::fs::read(ws.path().join("out").join(f)).unwrap(),
            std::fs::read(ws.path().join("replay").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn resume_reuses_stage_outputs() {
    let ws = workspace();
    assert!(chemcal(ws.path(), &["--config", "run.toml", "pipeline"], &[]).status.success());
    let model = ws.path().join("out").join(pipeline::MODEL_FILE);
    let before = std::fs::read(&model).unwrap();
    // a different seed would change the model if it were retrained
    let out = chemcal(
        ws.path(),
        &["--config", "run.toml", "--seed", "99", "pipeline"],
        &[("CHEMCAL_RESUME", "true")],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(std::fs::read(&model).unwrap(), before);
}

#[test]
fn standalone_stages_chain() {
    let ws = workspace();
    let run = |args: &[&str]| {
        let out = chemcal(ws.path(), args, &[]);
        assert!(out.status.success(), "{args:?}: {}", stderr(&out));
        out
    };
    run(&["--config", "run.toml", "train", "--data", "train.jsonl", "--out-model", "m/a.bin"]);
    let out = run(&[
        "--config", "run.toml", "evaluate", "--model", "m/a.bin", "--data", "test.jsonl",
        "--report", "m/report.toml", "--histogram", "m/hist.tsv", "--predictions", "m/pred.jsonl",
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("ece"));
    let preds: Vec<PredictionLine> = read_jsonl(&ws.path().join("m/pred.jsonl")).unwrap();
    assert_eq!(preds.len(), 120);
    assert!(preds.iter().all(|p| p.gold.is_some() && p.probs.is_valid(1e-9)));
    run(&[
        "--config", "run.toml", "selftrain", "--labeled", "train.jsonl", "--pool", "pool.jsonl",
        "--k", "20000", "--out-model", "m/b.bin", "--provenance", "m/prov.jsonl",
    ]);
    let prov: Vec<ProvenanceEntry> = read_jsonl(&ws.path().join("m/prov.jsonl")).unwrap();
    assert!(prov.iter().all(|p| p.pseudo_labeled && p.label != chemcal::Label::False));
    for m in ["train", "evaluate", "selftrain"] {
        let manifest = RunManifest::read(&ws.path().join(format!("m/{m}.manifest.json"))).unwrap();
        assert_eq!(manifest.command, m);
        assert!(manifest.error.is_none());
    }
}

#[test]
fn ablation_emits_one_row_per_toggle_set() {
    let ws = workspace();
    let out = chemcal(ws.path(), &["--config", "run.toml", "ablation", "--out", "abl.tsv"], &[]);
    assert!(out.status.success(), "{}", stderr(&out));
    let table = std::fs::read_to_string(ws.path().join("abl.tsv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("model\truns\tprecision\tprecision_std"));
    assert!(lines[1].starts_with("base\t1\t"));
    assert!(lines[2].starts_with("cpl\t1\t"));
    assert_eq!(lines[1].split('\t').count(), 16);
}

#[test]
fn preprocess_command_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let fx = common::fixture_dir();
    let arg = |f: &str| fx.join(f).display().to_string();
    let out = chemcal(
        dir.path(),
        &[
            "preprocess", "--abstracts", &arg("abstracts.tsv"), "--entities", &arg("entities.tsv"),
            "--relations", &arg("relations.tsv"), "--out", "ex.jsonl", "--stats", "stats.toml",
        ],
        &[],
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let got: Vec<LabeledExample> = read_jsonl(&dir.path().join("ex.jsonl")).unwrap();
    assert_eq!(got.len(), common::expected_fixture_examples().len());
    let stats: toml::Table =
        std::fs::read_to_string(dir.path().join("stats.toml")).unwrap().parse().unwrap();
    assert_eq!(stats["total"].as_integer(), Some(12));
}

#[test]
fn bad_config_reports_config_stage() {
    let ws = workspace();
    let out = chemcal(
        ws.path(),
        &["--config", "run.toml", "pipeline"],
        &[("CHEMCAL_TRAIN__BETA", "-1")],
    );
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error[config]"), "{}", stderr(&out));
}

#[test]
fn pool_files_accept_labeled_lines() {
    let ws = workspace();
    let pool: Vec<UnlabeledExample> = read_jsonl(&ws.path().join("train.jsonl")).unwrap();
    assert_eq!(pool.len(), 300);
}
