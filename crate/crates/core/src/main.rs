use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::info;

use chemcal::calibration;
use chemcal::corpus::{self, dataset_stats, LabeledExample};
use chemcal::pipeline::{
    self, label_count_map, run_ablation, stage_train_config, AblationData, ManifestRecorder,
    RunConfig, RunManifest,
};
use chemcal::records::{read_jsonl, write_jsonl, write_text, UnlabeledExample};
use chemcal::seed::derive_seed;
use chemcal::selftrain::selftrain_round;
use chemcal::synthetic::{self, SyntheticConfig};
use chemcal::training::{fit, grid_search_beta, predict_labeled, TrainConfig};
use chemcal::{Classifier, Error, Result};

#[derive(Parser)]
#[command(name = "chemcal", version, about = "Calibrated chemical-protein relation classifier")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Where to write the run manifest.
    #[arg(long, global = true)]
    manifest_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn ChemProt files into anonymized single-sentence examples.
    Preprocess(PreprocessArgs),
    /// Train a classifier on labeled examples.
    Train(TrainArgs),
    /// Score a model: metrics, calibration and histogram data.
    Evaluate(EvaluateArgs),
    /// Train, pseudo-label an unlabeled pool and retrain.
    Selftrain(SelftrainArgs),
    /// Preprocess, train, evaluate, self-train and evaluate again.
    Pipeline(PipelineArgs),
    /// Ablation over mixup, the confidence penalty and self-training.
    Ablation(AblationArgs),
    /// Pick the confidence-penalty weight on a development set.
    GridSearch(GridArgs),
    /// Generate a synthetic anonymized corpus.
    Synth(SynthArgs),
}

#[derive(Args)]
struct PreprocessArgs {
    #[arg(long)]
    abstracts: PathBuf,
    #[arg(long)]
    entities: PathBuf,
    #[arg(long)]
    relations: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Per-label counts as TOML.
    #[arg(long)]
    stats: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    out_model: PathBuf,
    /// Per-epoch log (JSON lines).
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    histogram: Option<PathBuf>,
    #[arg(long)]
    predictions: Option<PathBuf>,
    /// Number of confidence bins; defaults to the config value.
    #[arg(long)]
    bins: Option<usize>,
}

#[derive(Args)]
struct SelftrainArgs {
    #[arg(long)]
    labeled: PathBuf,
    #[arg(long)]
    pool: PathBuf,
    #[arg(long)]
    dev: Option<PathBuf>,
    /// Pseudo-labels per class per million pool sentences.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    out_model: PathBuf,
    #[arg(long)]
    provenance: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Replay the configuration recorded in a manifest.
    #[arg(long)]
    from_manifest: Option<PathBuf>,
}

#[derive(Args)]
struct AblationArgs {
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    dev: Option<PathBuf>,
    #[arg(long)]
    pool: Option<PathBuf>,
    /// Rows such as `base`, `mixup+cpl` or `mixup+cpl+st`.
    #[arg(long, value_delimiter = ',')]
    rows: Vec<String>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    from_manifest: Option<PathBuf>,
}

#[derive(Args)]
struct GridArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    dev: PathBuf,
    #[arg(long, value_delimiter = ',')]
    candidates: Vec<f64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    out: PathBuf,
    /// Omit labels (pool format).
    #[arg(long)]
    unlabeled: bool,
    #[arg(long, default_value = "syn")]
    prefix: String,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Preprocess(_) => "preprocess",
            Command::Train(_) => "train",
            Command::Evaluate(_) => "evaluate",
            Command::Selftrain(_) => "selftrain",
            Command::Pipeline(_) => "pipeline",
            Command::Ablation(_) => "ablation",
            Command::GridSearch(_) => "grid-search",
            Command::Synth(_) => "synth",
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let name = cli.command.name();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (stage, message) = match &e {
                Error::Stage { stage, source } => (*stage, source.to_string()),
                other => (name, other.to_string()),
            };
            eprintln!("error[{stage}]: {message}");
            ExitCode::FAILURE
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = RunConfig::load(cli.config.as_deref()).map_err(|e| e.in_stage("config"))?;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    Ok(config)
}

fn parent_dir(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

/// Runs `body` with a manifest named `<command>.manifest.json` written to
/// `--manifest-dir` or next to the primary output.
fn with_manifest(
    cli: &Cli,
    config: &RunConfig,
    primary_output: &Path,
    inputs: &[(&'static str, &Path)],
    args: &[(&str, String)],
    body: impl FnOnce(&mut Vec<PathBuf>) -> Result<()>,
) -> Result<()> {
    let name = cli.command.name();
    let dir = cli
        .manifest_dir
        .clone()
        .unwrap_or_else(|| parent_dir(primary_output));
    let mut recorder = ManifestRecorder::begin(name, config);
    for (k, v) in args {
        recorder.arg(k, v);
    }
    let mut outputs = Vec::new();
    let result = recorder
        .digest_inputs(inputs.iter().copied())
        .and_then(|_| body(&mut outputs).map_err(|e| e.in_stage(name)));
    recorder.finish(&result, outputs, &dir.join(format!("{name}.manifest.json")))?;
    result
}

fn path_arg(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    match &cli.command {
        Command::Preprocess(a) => with_manifest(
            &cli,
            &config,
            &a.out,
            &[
                ("preprocess", &a.abstracts),
                ("preprocess", &a.entities),
                ("preprocess", &a.relations),
            ],
            &[("out", a.out.display().to_string()), ("stats", path_arg(&a.stats))],
            |outputs| {
                let examples = corpus::preprocess_corpus(
                    &corpus::read_abstracts(&a.abstracts)?,
                    &corpus::read_entities(&a.entities)?,
                    &corpus::read_relations(&a.relations)?,
                    &config.data.eval_groups,
                )?;
                write_jsonl(&a.out, &examples)?;
                outputs.push(a.out.clone());
                let counts = dataset_stats(&examples);
                info!("{counts}");
                if let Some(p) = &a.stats {
                    let text = toml::to_string(&label_count_map(&counts)).expect("stats serialize");
                    write_text(p, &text)?;
                    outputs.push(p.clone());
                }
                Ok(())
            },
        ),

        Command::Train(a) => {
            let mut inputs = vec![("train", a.data.as_path())];
            inputs.extend(a.dev.as_deref().map(|d| ("train", d)));
            with_manifest(
                &cli,
                &config,
                &a.out_model,
                &inputs,
                &[
                    ("data", a.data.display().to_string()),
                    ("dev", path_arg(&a.dev)),
                    ("out-model", a.out_model.display().to_string()),
                ],
                |outputs| {
                    let train_set: Vec<LabeledExample> = read_jsonl(&a.data)?;
                    let dev: Option<Vec<LabeledExample>> =
                        a.dev.as_deref().map(read_jsonl).transpose()?;
                    let train_cfg = stage_train_config(&config);
                    let (model, log) = fit(&train_set, dev.as_deref(), &config.encoder, &train_cfg)?;
                    model.save(&a.out_model)?;
                    outputs.push(a.out_model.clone());
                    if let Some(p) = &a.log {
                        write_jsonl(p, &log.epochs)?;
                        outputs.push(p.clone());
                    }
                    Ok(())
                },
            )
        }

        Command::Evaluate(a) => with_manifest(
            &cli,
            &config,
            &a.report,
            &[("evaluate", &a.model), ("evaluate", &a.data)],
            &[
                ("model", a.model.display().to_string()),
                ("data", a.data.display().to_string()),
            ],
            |outputs| {
                let model = Classifier::load(&a.model)?;
                let data: Vec<LabeledExample> = read_jsonl(&a.data)?;
                let records = predict_labeled(&model, &data)?;
                let report = calibration::report(&records, a.bins.unwrap_or(config.bins))?;
                pipeline::write_evaluation(
                    &records,
                    &report,
                    &a.report,
                    a.histogram.as_deref(),
                    a.predictions.as_deref(),
                )?;
                outputs.push(a.report.clone());
                outputs.extend(a.histogram.clone());
                outputs.extend(a.predictions.clone());
                println!(
                    "precision {:.4} recall {:.4} f1 {:.4} accuracy {:.4} confidence {:.4} ece {:.4} oe {:.4}",
                    report.precision,
                    report.recall,
                    report.f1,
                    report.accuracy,
                    report.mean_confidence,
                    report.ece,
                    report.oe
                );
                Ok(())
            },
        ),

        Command::Selftrain(a) => {
            let mut config = config.clone();
            if let Some(k) = a.k {
                config.selftrain.k = k;
                config.selftrain.validate().map_err(|e| e.in_stage("selftrain"))?;
            }
            let mut inputs = vec![("train", a.labeled.as_path()), ("selftrain", a.pool.as_path())];
            inputs.extend(a.dev.as_deref().map(|d| ("train", d)));
            with_manifest(
                &cli,
                &config,
                &a.out_model,
                &inputs,
                &[
                    ("labeled", a.labeled.display().to_string()),
                    ("pool", a.pool.display().to_string()),
                    ("dev", path_arg(&a.dev)),
                ],
                |outputs| {
                    let labeled: Vec<LabeledExample> = read_jsonl(&a.labeled)?;
                    let pool: Vec<UnlabeledExample> = read_jsonl(&a.pool)?;
                    let dev: Option<Vec<LabeledExample>> =
                        a.dev.as_deref().map(read_jsonl).transpose()?;
                    let outcome = selftrain_round(
                        &labeled,
                        dev.as_deref(),
                        &pool,
                        &config.encoder,
                        &stage_train_config(&config),
                        &config.selftrain,
                    )?;
                    info!("pseudo-labeled {} pool sentences", outcome.provenance.len());
                    outcome.final_model.save(&a.out_model)?;
                    write_jsonl(&a.provenance, &outcome.provenance)?;
                    outputs.push(a.out_model.clone());
                    outputs.push(a.provenance.clone());
                    Ok(())
                },
            )
        }

        Command::Pipeline(a) => {
            let mut config = config;
            if let Some(path) = &a.from_manifest {
                let manifest = RunManifest::read(path).map_err(|e| e.in_stage("config"))?;
                for changed in manifest.changed_inputs() {
                    log::warn!("input {changed} differs from the recorded digest");
                }
                config = manifest.config;
            }
            if let Some(dir) = &a.out_dir {
                config.out_dir = dir.clone();
            }
            let outcome = pipeline::execute_pipeline(&config, cli.manifest_dir.as_deref())?;
            for p in &outcome.outputs {
                println!("{}", p.display());
            }
            Ok(())
        }

        Command::Ablation(a) => {
            let mut config = config;
            if let Some(path) = &a.from_manifest {
                config = RunManifest::read(path).map_err(|e| e.in_stage("config"))?.config;
            }
            let data_cfg = &mut config.data;
            for (slot, arg) in [
                (&mut data_cfg.train, &a.data),
                (&mut data_cfg.test, &a.test),
                (&mut data_cfg.dev, &a.dev),
                (&mut data_cfg.pool, &a.pool),
            ] {
                if arg.is_some() {
                    *slot = arg.clone();
                }
            }
            if !a.rows.is_empty() {
                config.ablation.rows = a
                    .rows
                    .iter()
                    .map(|r| r.parse())
                    .collect::<Result<_>>()
                    .map_err(|e| e.in_stage("config"))?;
            }
            if let Some(r) = a.replicates {
                config.ablation.replicates = r;
            }
            let train_path = config.data.train.clone().ok_or_else(|| {
                Error::Config("--data or data.train is required".into()).in_stage("ablation")
            })?;
            let test_path = config.data.test.clone().ok_or_else(|| {
                Error::Config("--test or data.test is required".into()).in_stage("ablation")
            })?;
            let needs_pool = config.ablation.rows.iter().any(|r| r.selftrain);
            let mut inputs = vec![("ablation", train_path.as_path()), ("ablation", test_path.as_path())];
            inputs.extend(config.data.dev.as_deref().map(|p| ("ablation", p)));
            if needs_pool {
                inputs.extend(config.data.pool.as_deref().map(|p| ("selftrain", p)));
            }
            with_manifest(&cli, &config, &a.out, &inputs, &[("out", a.out.display().to_string())], |outputs| {
                let train_set: Vec<LabeledExample> = read_jsonl(&train_path)?;
                let test: Vec<LabeledExample> = read_jsonl(&test_path)?;
                let dev: Option<Vec<LabeledExample>> =
                    config.data.dev.as_deref().map(read_jsonl).transpose()?;
                let pool: Option<Vec<UnlabeledExample>> = if needs_pool {
                    config.data.pool.as_deref().map(read_jsonl).transpose()?
                } else {
                    None
                };
                let data = AblationData {
                    train: &train_set,
                    dev: dev.as_deref(),
                    test: &test,
                    pool: pool.as_deref(),
                };
                let table = run_ablation(&config.ablation, &data, &config)?;
                write_text(&a.out, &table.to_table())?;
                outputs.push(a.out.clone());
                print!("{}", table.to_table());
                match table.error {
                    Some(e) => Err(Error::Config(format!("partial table: {e}"))),
                    None => Ok(()),
                }
            })
        }

        Command::GridSearch(a) => {
            let candidates = if a.candidates.is_empty() {
                config.grid.candidates.clone()
            } else {
                a.candidates.clone()
            };
            let replicates = a.replicates.unwrap_or(config.grid.replicates);
            with_manifest(
                &cli,
                &config,
                &a.out,
                &[("grid-search", &a.data), ("grid-search", &a.dev)],
                &[
                    ("candidates", format!("{candidates:?}")),
                    ("replicates", replicates.to_string()),
                ],
                |outputs| {
                    let train_set: Vec<LabeledExample> = read_jsonl(&a.data)?;
                    let dev: Vec<LabeledExample> = read_jsonl(&a.dev)?;
                    let base = TrainConfig {
                        seed: derive_seed(config.seed, "grid-search"),
                        ..config.train.clone()
                    };
                    let report = grid_search_beta(
                        &train_set,
                        &dev,
                        &config.encoder,
                        &base,
                        &candidates,
                        replicates,
                    )?;
                    write_text(&a.out, &report.to_table())?;
                    outputs.push(a.out.clone());
                    print!("{}", report.to_table());
                    println!("chosen beta: {}", report.chosen_beta);
                    Ok(())
                },
            )
        }

        Command::Synth(a) => {
            let seed = derive_seed(config.seed, &format!("synth-{}", a.prefix));
            let cfg = SyntheticConfig::default();
            if a.unlabeled {
                write_jsonl(&a.out, &synthetic::generate_pool(a.n, seed, &a.prefix, &cfg))
            } else {
                write_jsonl(&a.out, &synthetic::generate_labeled(a.n, seed, &a.prefix, &cfg))
            }
            .map_err(|e| e.in_stage("synth"))
        }
    }
}
