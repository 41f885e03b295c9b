//! End-to-end runs: preprocess, train, evaluate, self-train, evaluate.

pub mod ablation;
pub mod config;
pub mod manifest;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::info;

pub use ablation::{run_ablation, AblationData, AblationRow, AblationSpec, AblationTable, Toggles};
pub use config::{ChemProtSource, ChemProtSplit, DataConfig, GridConfig, RunConfig};
pub use manifest::{sha256_file, ManifestRecorder, RunManifest};

use crate::calibration::{self, CalibrationReport, PredictionRecord};
use crate::corpus::{self, dataset_stats, LabeledExample};
use crate::error::{Error, Result, StageExt};
use crate::label::Label;
use crate::model::Classifier;
use crate::records::{read_jsonl, write_jsonl, write_text, PredictionLine, UnlabeledExample};
use crate::seed::derive_seed;
use crate::selftrain::selftrain_from;
use crate::training::{fit, predict_labeled, TrainConfig, TrainLog};

pub const STAGE_PREPROCESS: &str = "preprocess";
pub const STAGE_TRAIN: &str = "train";
pub const STAGE_EVALUATE: &str = "evaluate";
pub const STAGE_SELFTRAIN: &str = "selftrain";

pub const TRAIN_FILE: &str = "train.jsonl";
pub const DEV_FILE: &str = "dev.jsonl";
pub const TEST_FILE: &str = "test.jsonl";
pub const STATS_FILE: &str = "preprocess_stats.toml";
pub const MODEL_FILE: &str = "model.bin";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const REPORT_FILE: &str = "report.toml";
pub const HISTOGRAM_FILE: &str = "histogram.tsv";
pub const PREDICTIONS_FILE: &str = "predictions.jsonl";
pub const SELFTRAIN_MODEL_FILE: &str = "model_selftrain.bin";
pub const SELFTRAIN_LOG_FILE: &str = "selftrain_log.jsonl";
pub const PROVENANCE_FILE: &str = "provenance.jsonl";
pub const SELFTRAIN_REPORT_FILE: &str = "report_selftrain.toml";
pub const SELFTRAIN_HISTOGRAM_FILE: &str = "histogram_selftrain.tsv";
pub const SELFTRAIN_PREDICTIONS_FILE: &str = "predictions_selftrain.jsonl";
pub const MANIFEST_FILE: &str = "pipeline.manifest.json";

/// Training config with the seed derived from the master seed.
pub fn stage_train_config(config: &RunConfig) -> TrainConfig {
    TrainConfig {
        seed: derive_seed(config.seed, STAGE_TRAIN),
        ..config.train.clone()
    }
}

/// Input files of a pipeline run, each with the stage that reads it.
pub fn pipeline_inputs(config: &RunConfig) -> Result<Vec<(&'static str, PathBuf)>> {
    let mut inputs = Vec::new();
    let data = &config.data;
    if let Some(src) = &data.chemprot {
        for split in [Some(&src.train), src.dev.as_ref(), src.test.as_ref()]
            .into_iter()
            .flatten()
        {
            inputs.extend(split.paths().map(|p| (STAGE_PREPROCESS, p.to_path_buf())));
        }
    } else {
        let train = data.train.as_ref().ok_or_else(|| {
            Error::Config("data.train or data.chemprot is required".into()).in_stage(STAGE_TRAIN)
        })?;
        inputs.push((STAGE_TRAIN, train.clone()));
        if let Some(dev) = &data.dev {
            inputs.push((STAGE_TRAIN, dev.clone()));
        }
        if let Some(test) = &data.test {
            inputs.push((STAGE_EVALUATE, test.clone()));
        }
    }
    if config.selftrain.k > 0.0 {
        let pool = data.pool.as_ref().ok_or_else(|| {
            Error::Config("selftrain.k > 0 needs data.pool".into()).in_stage(STAGE_SELFTRAIN)
        })?;
        inputs.push((STAGE_SELFTRAIN, pool.clone()));
    }
    Ok(inputs)
}

#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub outputs: Vec<PathBuf>,
    pub report: CalibrationReport,
    /// `None` when self-training was skipped (`k = 0`).
    pub selftrain_report: Option<CalibrationReport>,
    pub pseudo_labeled: usize,
}

/// Runs the pipeline and writes `pipeline.manifest.json` into
/// `manifest_dir` (default: the output directory), on success or failure.
pub fn execute_pipeline(config: &RunConfig, manifest_dir: Option<&Path>) -> Result<PipelineOutcome> {
    let manifest_path = manifest_dir
        .unwrap_or(&config.out_dir)
        .join(MANIFEST_FILE);
    let mut recorder = ManifestRecorder::begin("pipeline", config);
    let mut outputs = Vec::new();
    let result = pipeline_inputs(config)
        .and_then(|inputs| recorder.digest_inputs(inputs.iter().map(|(s, p)| (*s, p.as_path()))))
        .and_then(|_| run_stages(config, &mut outputs));
    recorder.finish(&result, outputs, &manifest_path)?;
    result
}

/// Runs the pipeline without writing a manifest.
pub fn run_pipeline(config: &RunConfig) -> Result<PipelineOutcome> {
    for (stage, path) in pipeline_inputs(config)? {
        if !path.is_file() {
            return Err(Error::io(
                &path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "input file not found"),
            )
            .in_stage(stage));
        }
    }
    let mut outputs = Vec::new();
    run_stages(config, &mut outputs)
}

struct Splits {
    train: Vec<LabeledExample>,
    dev: Option<Vec<LabeledExample>>,
    test: Option<Vec<LabeledExample>>,
}

fn run_stages(config: &RunConfig, outputs: &mut Vec<PathBuf>) -> Result<PipelineOutcome> {
    config.validate().stage(STAGE_TRAIN)?;
    let out = &config.out_dir;
    std::fs::create_dir_all(out)
        .map_err(|e| Error::io(out, e))
        .stage(STAGE_PREPROCESS)?;

    let splits = preprocess_stage(config, outputs).stage(STAGE_PREPROCESS)?;
    let train_cfg = stage_train_config(config);

    let (model_a, log_a) = train_stage(config, &splits, &train_cfg, outputs).stage(STAGE_TRAIN)?;

    let eval_set = splits
        .test
        .as_deref()
        .or(splits.dev.as_deref())
        .ok_or(Error::EmptyInput("no test or dev set to evaluate on"))
        .stage(STAGE_EVALUATE)?;
    let report = evaluate_stage(
        &model_a,
        eval_set,
        config.bins,
        [REPORT_FILE, HISTOGRAM_FILE, PREDICTIONS_FILE],
        out,
        outputs,
    )
    .stage(STAGE_EVALUATE)?;
    info!(
        "model: f1 {:.4} accuracy {:.4} confidence {:.4} ece {:.4} oe {:.4}",
        report.f1, report.accuracy, report.mean_confidence, report.ece, report.oe
    );

    if config.selftrain.k <= 0.0 {
        info!("selftrain.k = 0, skipping self-training");
        return Ok(PipelineOutcome {
            outputs: outputs.clone(),
            report,
            selftrain_report: None,
            pseudo_labeled: 0,
        });
    }

    let (model_b, pseudo_labeled) =
        selftrain_stage(config, &splits, &train_cfg, (model_a, log_a), outputs)
            .stage(STAGE_SELFTRAIN)?;
    let st_report = evaluate_stage(
        &model_b,
        eval_set,
        config.bins,
        [
            SELFTRAIN_REPORT_FILE,
            SELFTRAIN_HISTOGRAM_FILE,
            SELFTRAIN_PREDICTIONS_FILE,
        ],
        out,
        outputs,
    )
    .stage(STAGE_EVALUATE)?;
    info!(
        "self-trained model: f1 {:.4} accuracy {:.4} confidence {:.4} ece {:.4} oe {:.4}",
        st_report.f1, st_report.accuracy, st_report.mean_confidence, st_report.ece, st_report.oe
    );
    Ok(PipelineOutcome {
        outputs: outputs.clone(),
        report,
        selftrain_report: Some(st_report),
        pseudo_labeled,
    })
}

fn preprocess_stage(config: &RunConfig, outputs: &mut Vec<PathBuf>) -> Result<Splits> {
    let data = &config.data;
    let Some(src) = &data.chemprot else {
        let read_opt = |p: &Option<PathBuf>| p.as_deref().map(read_jsonl).transpose();
        let train_path = data.train.as_ref().ok_or_else(|| {
            Error::Config("data.train or data.chemprot is required".into())
        })?;
        return Ok(Splits {
            train: read_jsonl(train_path)?,
            dev: read_opt(&data.dev)?,
            test: read_opt(&data.test)?,
        });
    };

    let out = &config.out_dir;
    let mut stats = BTreeMap::new();
    let mut run_split = |name: &str, file: &str, split: Option<&ChemProtSplit>| -> Result<Option<Vec<LabeledExample>>> {
        let Some(split) = split else { return Ok(None) };
        let path = out.join(file);
        let examples = if config.resume && path.is_file() {
            info!("reusing {}", path.display());
            read_jsonl(&path)?
        } else {
            let examples = corpus::preprocess_corpus(
                &corpus::read_abstracts(&split.abstracts)?,
                &corpus::read_entities(&split.entities)?,
                &corpus::read_relations(&split.relations)?,
                &data.eval_groups,
            )?;
            write_jsonl(&path, &examples)?;
            examples
        };
        let counts = dataset_stats(&examples);
        info!("{name}: {counts}");
        stats.insert(name.to_string(), label_count_map(&counts));
        outputs.push(path);
        Ok(Some(examples))
    };
    let train = run_split("train", TRAIN_FILE, Some(&src.train))?.expect("train split");
    let dev = run_split("dev", DEV_FILE, src.dev.as_ref())?;
    let test = run_split("test", TEST_FILE, src.test.as_ref())?;

    let stats_path = out.join(STATS_FILE);
    write_text(&stats_path, &toml::to_string(&stats).expect("stats serialize"))?;
    outputs.push(stats_path);
    Ok(Splits { train, dev, test })
}

pub fn label_count_map(counts: &corpus::LabelCounts) -> BTreeMap<String, usize> {
    let mut map: BTreeMap<String, usize> = Label::ALL
        .iter()
        .map(|l| (l.to_string(), counts.get(*l)))
        .collect();
    map.insert("total".into(), counts.total);
    map
}

fn train_stage(
    config: &RunConfig,
    splits: &Splits,
    train_cfg: &TrainConfig,
    outputs: &mut Vec<PathBuf>,
) -> Result<(Classifier, TrainLog)> {
    let model_path = config.out_dir.join(MODEL_FILE);
    if config.resume && model_path.is_file() {
        info!("reusing {}", model_path.display());
        outputs.push(model_path.clone());
        return Ok((Classifier::load(&model_path)?, TrainLog::default()));
    }
    let (model, log) = fit(&splits.train, splits.dev.as_deref(), &config.encoder, train_cfg)?;
    model.save(&model_path)?;
    outputs.push(model_path);
    let log_path = config.out_dir.join(TRAIN_LOG_FILE);
    write_jsonl(&log_path, &log.epochs)?;
    outputs.push(log_path);
    Ok((model, log))
}

fn selftrain_stage(
    config: &RunConfig,
    splits: &Splits,
    train_cfg: &TrainConfig,
    initial: (Classifier, TrainLog),
    outputs: &mut Vec<PathBuf>,
) -> Result<(Classifier, usize)> {
    let out = &config.out_dir;
    let model_path = out.join(SELFTRAIN_MODEL_FILE);
    let provenance_path = out.join(PROVENANCE_FILE);
    if config.resume && model_path.is_file() && provenance_path.is_file() {
        info!("reusing {}", model_path.display());
        let n = read_jsonl::<crate::selftrain::ProvenanceEntry>(&provenance_path)?.len();
        outputs.push(model_path.clone());
        outputs.push(provenance_path);
        return Ok((Classifier::load(&model_path)?, n));
    }
    let pool_path = config
        .data
        .pool
        .as_ref()
        .ok_or_else(|| Error::Config("selftrain.k > 0 needs data.pool".into()))?;
    let pool: Vec<UnlabeledExample> = read_jsonl(pool_path)?;
    let outcome = selftrain_from(
        initial,
        &splits.train,
        splits.dev.as_deref(),
        &pool,
        &config.encoder,
        train_cfg,
        &config.selftrain,
    )?;
    outcome.final_model.save(&model_path)?;
    outputs.push(model_path);
    write_jsonl(&provenance_path, &outcome.provenance)?;
    outputs.push(provenance_path);
    let log_path = out.join(SELFTRAIN_LOG_FILE);
    write_jsonl(&log_path, &outcome.final_log.epochs)?;
    outputs.push(log_path);
    Ok((outcome.final_model, outcome.provenance.len()))
}

/// Writes predictions, the keyed report and the histogram table.
pub fn write_evaluation(
    records: &[PredictionRecord],
    report: &CalibrationReport,
    report_path: &Path,
    histogram_path: Option<&Path>,
    predictions_path: Option<&Path>,
) -> Result<()> {
    write_text(report_path, &report.to_keyed_text())?;
    if let Some(p) = histogram_path {
        report.write_histogram(p)?;
    }
    if let Some(p) = predictions_path {
        let lines: Vec<PredictionLine> = records
            .iter()
            .map(|r| PredictionLine {
                example_id: r.example_id.clone(),
                probs: r.probs,
                gold: r.gold,
            })
            .collect();
        write_jsonl(p, &lines)?;
    }
    Ok(())
}

fn evaluate_stage(
    model: &Classifier,
    data: &[LabeledExample],
    bins: usize,
    [report_file, histogram_file, predictions_file]: [&str; 3],
    out: &Path,
    outputs: &mut Vec<PathBuf>,
) -> Result<CalibrationReport> {
    let records = predict_labeled(model, data)?;
    let report = calibration::report(&records, bins)?;
    let paths = [report_file, histogram_file, predictions_file].map(|f| out.join(f));
    write_evaluation(
        &records,
        &report,
        &paths[0],
        Some(&paths[1]),
        Some(&paths[2]),
    )?;
    outputs.extend(paths);
    Ok(report)
}
