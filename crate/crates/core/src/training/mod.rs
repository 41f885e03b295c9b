//! Classifier training with feature-level mixup and the confidence penalty.
//!
//! Every epoch builds, for each training example, one unmixed copy (`λ = 1`)
//! plus `mix_per_example` mixtures with a partner drawn uniformly from the
//! whole training set and `λ ~ U(0, 1)`. The shuffled items are processed in
//! mini-batches: each distinct source sentence is encoded once, mixtures are
//! formed on the encoded vectors, and the mean of `CE − β·H` over the batch is
//! minimised with momentum gradient descent. No dropout is applied.

mod grid;
mod head;
mod loss;
mod mixup;
mod optim;

use std::collections::BTreeMap;

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::calibration::{self, PredictionRecord, DEFAULT_BINS};
use crate::corpus::LabeledExample;
use crate::encoder::{tokenize, EncoderConfig, EncoderGrads, TokenSequence, Vocabulary};
use crate::error::{Error, Result};
use crate::label::{Label, SoftLabel};
use crate::model::Classifier;
use crate::seed::derive_seed;

pub use grid::{choose_beta, grid_search_beta, GridRow, GridSearchReport, MeanVar};
pub use head::{softmax_forward, ClassifierHead};
pub use loss::{cross_entropy, entropy, loss, loss_backward, softmax, LOG_FLOOR};
pub use mixup::{mixup_pair, MixedExample};
pub use optim::{linear_decay, Momentum};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum LambdaDistribution {
    /// `U(0, 1)`
    #[default]
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Confidence-penalty weight.
    pub beta: f64,
    /// Mixed examples generated per training sentence and epoch.
    pub mix_per_example: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Decay the learning rate linearly to zero over the run.
    pub lr_decay: bool,
    pub seed: u64,
    pub lambda_distribution: LambdaDistribution,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            beta: 0.3,
            mix_per_example: 3,
            epochs: 10,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            lr_decay: true,
            seed: 42,
            lambda_distribution: LambdaDistribution::Uniform,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::Config(format!("beta must be >= 0, got {}", self.beta)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config("momentum must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// A tokenized sentence with its (possibly soft) target.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainExample {
    pub example_id: String,
    pub seq: TokenSequence,
    pub target: SoftLabel,
}

impl TrainExample {
    pub fn gold(&self) -> Label {
        Label::from_index(self.target.argmax()).expect("class index")
    }
}

pub fn prepare(examples: &[LabeledExample], vocab: &Vocabulary, max_len: usize) -> Vec<TrainExample> {
    examples
        .iter()
        .map(|e| TrainExample {
            example_id: e.example_id.clone(),
            seq: tokenize(&e.text, vocab, max_len),
            target: SoftLabel::one_hot(e.label),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub mean_loss: f64,
    pub learning_rate: f64,
    pub items: usize,
    pub dev_accuracy: Option<f64>,
    pub dev_ece: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

/// One entry of an epoch's work list: mix source `i` with partner `j`.
#[derive(Debug, Clone, Copy)]
struct MixItem {
    i: usize,
    j: usize,
    lambda: f64,
}

fn epoch_items<R: Rng>(n: usize, mix_per_example: usize, rng: &mut R) -> Vec<MixItem> {
    let mut items = Vec::with_capacity(n * (1 + mix_per_example));
    for i in 0..n {
        items.push(MixItem { i, j: i, lambda: 1.0 });
        for _ in 0..mix_per_example {
            let j = rng.random_range(0..n);
            let lambda: f64 = rng.random();
            items.push(MixItem { i, j, lambda });
        }
    }
    items.shuffle(rng);
    items
}

/// Gradients for the whole model.
struct Grads {
    encoder: EncoderGrads,
    head: ClassifierHead,
}

impl Grads {
    fn zeros_like(model: &Classifier) -> Self {
        Grads {
            encoder: EncoderGrads::zeros_like(&model.encoder),
            head: ClassifierHead::zeros(model.head.dim()),
        }
    }

    fn clear(&mut self) {
        self.encoder.clear();
        for t in self.head.tensors_mut() {
            t.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.encoder.tensors().into_iter().collect();
        out.extend(self.head.tensors());
        out
    }
}

/// Mean batch objective; fills `grads` with its gradient.
fn batch_gradient(
    model: &Classifier,
    data: &[TrainExample],
    batch: &[MixItem],
    beta: f64,
    grads: &mut Grads,
) -> Result<f64> {
    grads.clear();
    let mut slots: BTreeMap<usize, usize> = BTreeMap::new();
    for item in batch {
        for idx in [item.i, item.j] {
            let next = slots.len();
            slots.entry(idx).or_insert(next);
        }
    }
    let mut encoded = vec![None; slots.len()];
    for (&idx, &slot) in &slots {
        encoded[slot] = Some(model.encoder.forward(&data[idx].seq)?);
    }
    let encoded: Vec<_> = encoded.into_iter().map(|e| e.expect("every slot encoded")).collect();
    let dim = model.encoder.dim();
    let mut feature_grads = vec![vec![0.0; dim]; encoded.len()];

    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;
    for item in batch {
        let (si, sj) = (slots[&item.i], slots[&item.j]);
        let mixed = mixup_pair(
            (item.i, &encoded[si].0, &data[item.i].target),
            (item.j, &encoded[sj].0, &data[item.j].target),
            item.lambda,
        )?;
        let p = softmax_forward(&mixed.feature, &model.head)?;
        total += loss(&p, &mixed.label, beta);
        let g_logits = loss_backward(&p, &mixed.label, beta).map(|g| g * scale);
        let g_feature = model.head.backward(&mixed.feature, &g_logits, &mut grads.head);
        crate::tensor::axpy(item.lambda, &g_feature, &mut feature_grads[si]);
        crate::tensor::axpy(1.0 - item.lambda, &g_feature, &mut feature_grads[sj]);
    }
    for ((_, cache), g) in encoded.iter().zip(&feature_grads) {
        model.encoder.backward(cache, g, &mut grads.encoder)?;
    }
    Ok(total * scale)
}

/// Trains `model` in place on `data`, evaluating on `dev` after every epoch.
pub fn train(
    data: &[TrainExample],
    dev: Option<&[TrainExample]>,
    config: &TrainConfig,
    mut model: Classifier,
) -> Result<(Classifier, TrainLog)> {
    config.validate()?;
    if data.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    model.encoder.check_shapes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, "mixup-sampling"));
    let items_per_epoch = data.len() * (1 + config.mix_per_example);
    let batches_per_epoch = items_per_epoch.div_ceil(config.batch_size);
    let total_steps = batches_per_epoch * config.epochs;

    let mut optimizer = Momentum::new(config.momentum);
    let mut grads = Grads::zeros_like(&model);
    let mut log = TrainLog::default();
    let mut step = 0;
    for epoch in 0..config.epochs {
        let items = epoch_items(data.len(), config.mix_per_example, &mut rng);
        let mut loss_sum = 0.0;
        let mut lr = config.learning_rate;
        for (b, batch) in items.chunks(config.batch_size).enumerate() {
            let batch_loss = batch_gradient(&model, data, batch, config.beta, &mut grads)?;
            if !batch_loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            loss_sum += batch_loss * batch.len() as f64;
            lr = if config.lr_decay {
                linear_decay(config.learning_rate, step, total_steps)
            } else {
                config.learning_rate
            };
            optimizer.step(model.tensors_mut(), grads.tensors(), lr);
            step += 1;
        }
        let (dev_accuracy, dev_ece) = match dev {
            Some(dev) if !dev.is_empty() => {
                let records = predict_examples(&model, dev)?;
                (
                    Some(calibration::classification_scores(&records)?.accuracy),
                    Some(calibration::ece(&records, DEFAULT_BINS)?),
                )
            }
            _ => (None, None),
        };
        let entry = EpochLog {
            epoch,
            mean_loss: loss_sum / items.len() as f64,
            learning_rate: lr,
            items: items.len(),
            dev_accuracy,
            dev_ece,
        };
        debug!("epoch {epoch}: {entry:?}");
        log.epochs.push(entry);
    }
    if let Some(last) = log.epochs.last() {
        info!(
            "trained {} epochs on {} examples; final loss {:.4}",
            config.epochs,
            data.len(),
            last.mean_loss
        );
    }
    Ok((model, log))
}

/// Builds the vocabulary from `train_set`, initialises a model from the
/// config seed and trains it.
pub fn fit(
    train_set: &[LabeledExample],
    dev: Option<&[LabeledExample]>,
    encoder: &EncoderConfig,
    config: &TrainConfig,
) -> Result<(Classifier, TrainLog)> {
    if train_set.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    let vocab = Vocabulary::build(train_set.iter().map(|e| e.text.as_str()), encoder.min_freq);
    let model = Classifier::init(vocab, encoder, derive_seed(config.seed, "init"));
    let data = prepare(train_set, &model.vocab, model.max_len);
    let dev = dev.map(|d| prepare(d, &model.vocab, model.max_len));
    train(&data, dev.as_deref(), config, model)
}

pub fn predict_examples(model: &Classifier, data: &[TrainExample]) -> Result<Vec<PredictionRecord>> {
    data.iter()
        .map(|e| {
            Ok(PredictionRecord::new(
                e.example_id.clone(),
                model.probs(&e.seq)?,
                Some(e.gold()),
            ))
        })
        .collect()
}

pub fn predict_labeled(model: &Classifier, data: &[LabeledExample]) -> Result<Vec<PredictionRecord>> {
    data.iter()
        .map(|e| model.predict_record(&e.example_id, &e.text, Some(e.label)))
        .collect()
}
