//! Self-training with top-k pseudo-labels.
//!
//! A model trained on the labeled set scores an unlabeled pool. For each class
//! except `false`, the pool sentences predicted as that class are ranked by the
//! class probability and the first `round(k · pool_size / 1e6)` are kept with
//! the predicted label. A fresh model is then trained on the labeled and
//! pseudo-labeled sentences together.

use std::cmp::Ordering;

use log::info;
use serde::{Deserialize, Serialize};

use crate::calibration::PredictionRecord;
use crate::corpus::LabeledExample;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::label::Label;
use crate::model::Classifier;
use crate::records::UnlabeledExample;
use crate::training::{fit, TrainConfig, TrainLog};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfTrainConfig {
    /// Pseudo-labels per class per million pool sentences.
    pub k: f64,
    pub rounds: usize,
    /// Classes never pseudo-labeled. `false` is always excluded.
    pub excluded_labels: Vec<Label>,
}

impl Default for SelfTrainConfig {
    fn default() -> Self {
        SelfTrainConfig {
            k: 200.0,
            rounds: 1,
            excluded_labels: vec![Label::False],
        }
    }
}

impl SelfTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::Config(format!("k must be >= 0, got {}", self.k)));
        }
        Ok(())
    }

    pub fn is_excluded(&self, label: Label) -> bool {
        label == Label::False || self.excluded_labels.contains(&label)
    }
}

/// Per-class selection size for a pool of `pool_size` sentences.
pub fn per_class_quota(k: f64, pool_size: usize) -> usize {
    (k * pool_size as f64 / 1e6).round() as usize
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabel {
    /// Position in the scored pool.
    pub pool_index: usize,
    pub example_id: String,
    pub label: Label,
    /// Probability of `label` that ranked this sentence.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabeledBatch {
    /// Grouped by class in class order, descending score within a class.
    pub entries: Vec<PseudoLabel>,
    pub k: f64,
    pub pool_size: usize,
}

impl PseudoLabeledBatch {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.entries.iter().filter(|e| e.label == label).count()
    }

    /// Joins the selection back to pool texts.
    pub fn to_examples(&self, pool: &[UnlabeledExample]) -> Result<Vec<LabeledExample>> {
        self.entries
            .iter()
            .map(|e| {
                let src = pool.get(e.pool_index).filter(|p| p.example_id == e.example_id);
                let src = src.ok_or_else(|| {
                    Error::Config(format!("pool does not match selection at {}", e.example_id))
                })?;
                Ok(LabeledExample {
                    example_id: src.example_id.clone(),
                    text: src.text.clone(),
                    label: e.label,
                })
            })
            .collect()
    }
}

/// Scores every pool sentence; records carry no gold label.
pub fn predict_pool(model: &Classifier, pool: &[UnlabeledExample]) -> Result<Vec<PredictionRecord>> {
    pool.iter()
        .map(|p| model.predict_record(&p.example_id, &p.text, None))
        .collect()
}

pub fn select_topk(records: &[PredictionRecord], config: &SelfTrainConfig) -> PseudoLabeledBatch {
    let quota = per_class_quota(config.k, records.len());
    let mut entries = Vec::new();
    if quota > 0 {
        for label in Label::ALL.into_iter().filter(|l| !config.is_excluded(*l)) {
            let c = label.index();
            let mut candidates: Vec<usize> = (0..records.len())
                .filter(|&i| records[i].predicted == label)
                .collect();
            candidates.sort_by(|&a, &b| {
                records[b].probs.0[c]
                    .partial_cmp(&records[a].probs.0[c])
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| records[a].example_id.cmp(&records[b].example_id))
            });
            entries.extend(candidates.into_iter().take(quota).map(|i| PseudoLabel {
                pool_index: i,
                example_id: records[i].example_id.clone(),
                label,
                score: records[i].probs.0[c],
            }));
        }
    }
    PseudoLabeledBatch {
        entries,
        k: config.k,
        pool_size: records.len(),
    }
}

/// One line of the provenance log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceEntry {
    pub round: usize,
    pub example_id: String,
    pub label: Label,
    pub score: f64,
    pub pseudo_labeled: bool,
}

#[derive(Debug, Clone)]
pub struct SelfTrainOutcome {
    /// Model trained on labeled data only.
    pub initial: Classifier,
    pub initial_log: TrainLog,
    pub final_model: Classifier,
    pub final_log: TrainLog,
    /// Selection of each round.
    pub batches: Vec<PseudoLabeledBatch>,
    pub provenance: Vec<ProvenanceEntry>,
}

/// Trains on `labeled`, pseudo-labels `pool`, and retrains from scratch on
/// the union, `rounds` times. With `k = 0` the pool is never scored and the
/// final model equals the initial one.
pub fn selftrain_round(
    labeled: &[LabeledExample],
    dev: Option<&[LabeledExample]>,
    pool: &[UnlabeledExample],
    encoder: &EncoderConfig,
    train_config: &TrainConfig,
    config: &SelfTrainConfig,
) -> Result<SelfTrainOutcome> {
    config.validate()?;
    let initial = fit(labeled, dev, encoder, train_config)?;
    selftrain_from(initial, labeled, dev, pool, encoder, train_config, config)
}

/// Self-training starting from an already trained model `initial`, which
/// must come from [`fit`] on `labeled` with the same configs.
pub fn selftrain_from(
    (initial, initial_log): (Classifier, TrainLog),
    labeled: &[LabeledExample],
    dev: Option<&[LabeledExample]>,
    pool: &[UnlabeledExample],
    encoder: &EncoderConfig,
    train_config: &TrainConfig,
    config: &SelfTrainConfig,
) -> Result<SelfTrainOutcome> {
    config.validate()?;
    let mut current = (initial.clone(), initial_log.clone());
    let mut batches = Vec::new();
    let mut provenance = Vec::new();
    if config.k > 0.0 {
        for round in 0..config.rounds {
            let records = predict_pool(&current.0, pool)?;
            let batch = select_topk(&records, config);
            info!(
                "round {round}: pseudo-labeled {} of {} pool sentences",
                batch.len(),
                pool.len()
            );
            provenance.extend(batch.entries.iter().map(|e| ProvenanceEntry {
                round,
                example_id: e.example_id.clone(),
                label: e.label,
                score: e.score,
                pseudo_labeled: true,
            }));
            let mut augmented = labeled.to_vec();
            augmented.extend(batch.to_examples(pool)?);
            batches.push(batch);
            current = fit(&augmented, dev, encoder, train_config)?;
        }
    }
    Ok(SelfTrainOutcome {
        initial,
        initial_log,
        final_model: current.0,
        final_log: current.1,
        batches,
        provenance,
    })
}
