//! Ablation over mixup, the confidence penalty and self-training.

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use log::info;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::calibration::{self, CalibrationReport};
use crate::corpus::LabeledExample;
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::records::UnlabeledExample;
use crate::seed::derive_seed;
use crate::selftrain::selftrain_from;
use crate::training::{fit, predict_labeled, MeanVar, TrainConfig, TrainLog};

/// One row of the ablation: which components are switched on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Toggles {
    pub mixup: bool,
    pub cpl: bool,
    pub selftrain: bool,
}

impl Toggles {
    pub const BASELINE: Toggles = Toggles {
        mixup: false,
        cpl: false,
        selftrain: false,
    };

    pub fn new(mixup: bool, cpl: bool, selftrain: bool) -> Self {
        Toggles {
            mixup,
            cpl,
            selftrain,
        }
    }
}

impl fmt::Display for Toggles {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<&str> = [
            (self.mixup, "mixup"),
            (self.cpl, "cpl"),
            (self.selftrain, "st"),
        ]
        .iter()
        .filter(|(on, _)| *on)
        .map(|(_, name)| *name)
        .collect();
        if parts.is_empty() {
            f.write_str("base")
        } else {
            f.write_str(&parts.join("+"))
        }
    }
}

impl FromStr for Toggles {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut t = Toggles::BASELINE;
        for part in s.split('+').map(str::trim) {
            match part.to_ascii_lowercase().as_str() {
                "base" | "baseline" => {}
                "mixup" => t.mixup = true,
                "cpl" => t.cpl = true,
                "st" | "selftrain" => t.selftrain = true,
                other => {
                    return Err(Error::Config(format!("unknown ablation component {other:?}")))
                }
            }
        }
        Ok(t)
    }
}

impl TryFrom<String> for Toggles {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Toggles> for String {
    fn from(t: Toggles) -> String {
        t.to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSpec {
    pub rows: Vec<Toggles>,
    pub replicates: usize,
}

impl Default for AblationSpec {
    fn default() -> Self {
        AblationSpec {
            rows: vec![
                Toggles::BASELINE,
                Toggles::new(true, false, false),
                Toggles::new(false, true, false),
                Toggles::new(true, true, false),
            ],
            replicates: 3,
        }
    }
}

impl AblationSpec {
    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("ablation replicates must be >= 1".into()));
        }
        Ok(())
    }
}

pub struct AblationData<'a> {
    pub train: &'a [LabeledExample],
    pub dev: Option<&'a [LabeledExample]>,
    pub test: &'a [LabeledExample],
    pub pool: Option<&'a [UnlabeledExample]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub toggles: Toggles,
    pub runs: usize,
    pub precision: MeanVar,
    pub recall: MeanVar,
    pub f1: MeanVar,
    pub accuracy: MeanVar,
    pub confidence: MeanVar,
    pub ece: MeanVar,
    pub oe: MeanVar,
}

impl AblationRow {
    fn from_reports(toggles: Toggles, reports: &[CalibrationReport]) -> Self {
        let col = |f: fn(&CalibrationReport) -> f64| {
            MeanVar::of(&reports.iter().map(f).collect::<Vec<_>>())
        };
        AblationRow {
            toggles,
            runs: reports.len(),
            precision: col(|r| r.precision),
            recall: col(|r| r.recall),
            f1: col(|r| r.f1),
            accuracy: col(|r| r.accuracy),
            confidence: col(|r| r.mean_confidence),
            ece: col(|r| r.ece),
            oe: col(|r| r.oe),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationTable {
    pub replicates: usize,
    pub rows: Vec<AblationRow>,
    /// Set when a run failed; `rows` then holds only the finished rows.
    pub error: Option<String>,
}

impl AblationTable {
    pub fn is_partial(&self) -> bool {
        self.error.is_some()
    }

    pub fn row(&self, toggles: Toggles) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.toggles == toggles)
    }

    /// Tab-separated means and standard deviations. A partial table starts
    /// with a `# partial:` comment line.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        if let Some(e) = &self.error {
            let _ = writeln!(out, "# partial: {e}");
        }
        out.push_str("model\truns");
        for name in ["precision", "recall", "f1", "accuracy", "confidence", "ece", "oe"] {
            let _ = write!(out, "\t{name}\t{name}_std");
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{}\t{}", r.toggles, r.runs);
            for m in [
                &r.precision,
                &r.recall,
                &r.f1,
                &r.accuracy,
                &r.confidence,
                &r.ece,
                &r.oe,
            ] {
                let _ = write!(out, "\t{:.4}\t{:.4}", m.mean, m.std());
            }
            out.push('\n');
        }
        out
    }
}

/// Training config of one ablation row. Mixup off means no mixed partners;
/// the confidence penalty off means β = 0.
pub fn row_train_config(base: &TrainConfig, toggles: Toggles, seed: u64) -> TrainConfig {
    TrainConfig {
        beta: if toggles.cpl { base.beta } else { 0.0 },
        mix_per_example: if toggles.mixup { base.mix_per_example } else { 0 },
        seed,
        ..base.clone()
    }
}

pub fn replicate_seed(master: u64, replicate: usize) -> u64 {
    derive_seed(master, &format!("ablation-replicate-{replicate}"))
}

/// Trains every row for `spec.replicates` paired seeds and scores on the
/// test set. Invalid specs are errors; a failing run ends the sweep and
/// yields a partial table.
pub fn run_ablation(
    spec: &AblationSpec,
    data: &AblationData<'_>,
    config: &RunConfig,
) -> Result<AblationTable> {
    spec.validate()?;
    if data.test.is_empty() {
        return Err(Error::EmptyInput("ablation test set"));
    }
    for t in &spec.rows {
        if t.cpl && config.train.beta <= 0.0 {
            return Err(Error::Config(format!("row {t} needs train.beta > 0")));
        }
        if t.mixup && config.train.mix_per_example == 0 {
            return Err(Error::Config(format!("row {t} needs train.mix_per_example > 0")));
        }
        if t.selftrain && data.pool.is_none() {
            return Err(Error::Config(format!("row {t} needs an unlabeled pool")));
        }
    }

    let mut table = AblationTable {
        replicates: spec.replicates,
        rows: Vec::new(),
        error: None,
    };
    // Rows that differ only in self-training share their initial model.
    let mut initial: HashMap<(bool, bool, usize), (Classifier, TrainLog)> = HashMap::new();
    for &toggles in &spec.rows {
        let mut reports = Vec::with_capacity(spec.replicates);
        for r in 0..spec.replicates {
            match run_one(toggles, r, data, config, &mut initial) {
                Ok(rep) => reports.push(rep),
                Err(e) => {
                    table.error = Some(format!("row {toggles}, replicate {r}: {e}"));
                    return Ok(table);
                }
            }
        }
        let row = AblationRow::from_reports(toggles, &reports);
        info!(
            "ablation {toggles}: f1 {:.4} confidence {:.4} ece {:.4}",
            row.f1.mean, row.confidence.mean, row.ece.mean
        );
        table.rows.push(row);
    }
    Ok(table)
}

fn run_one(
    toggles: Toggles,
    replicate: usize,
    data: &AblationData<'_>,
    config: &RunConfig,
    initial: &mut HashMap<(bool, bool, usize), (Classifier, TrainLog)>,
) -> Result<CalibrationReport> {
    let train_cfg = row_train_config(
        &config.train,
        toggles,
        replicate_seed(config.seed, replicate),
    );
    let key = (toggles.mixup, toggles.cpl, replicate);
    if !initial.contains_key(&key) {
        let fitted = fit(data.train, data.dev, &config.encoder, &train_cfg)?;
        initial.insert(key, fitted);
    }
    let start = initial[&key].clone();
    let model = if toggles.selftrain {
        let pool = data.pool.expect("checked above");
        selftrain_from(
            start,
            data.train,
            data.dev,
            pool,
            &config.encoder,
            &train_cfg,
            &config.selftrain,
        )?
        .final_model
    } else {
        start.0
    };
    let records = predict_labeled(&model, data.test)?;
    calibration::report(&records, config.bins)
}
