//! Binned calibration metrics and classification scores.
//!
//! Predictions are grouped into `M` equal-width confidence bins. Bin `0`
//! covers `[0, 1/M]` and bin `m ≥ 1` covers `(m/M, (m+1)/M]`, so a boundary
//! value belongs to the lower bin. For bin `B_m`:
//!
//! ```text
//! acc(B_m)  = mean of 1[predicted = gold]
//! conf(B_m) = mean confidence
//! ECE = Σ_m |B_m|/n · |acc(B_m) − conf(B_m)|
//! OE  = Σ_m |B_m|/n · conf(B_m) · max(conf(B_m) − acc(B_m), 0)
//! ```
//!
//! Empty bins report zero accuracy and confidence and carry no weight.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Label, SoftLabel};

pub const DEFAULT_BINS: usize = 10;

/// One scored example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub example_id: String,
    pub probs: SoftLabel,
    pub predicted: Label,
    /// Maximum class probability.
    pub confidence: f64,
    pub gold: Option<Label>,
}

impl PredictionRecord {
    pub fn new(example_id: impl Into<String>, probs: SoftLabel, gold: Option<Label>) -> Self {
        let idx = probs.argmax();
        PredictionRecord {
            example_id: example_id.into(),
            probs,
            predicted: Label::from_index(idx).expect("argmax within class range"),
            confidence: probs.0[idx],
            gold,
        }
    }

    pub fn is_correct(&self) -> Result<bool> {
        self.gold
            .map(|g| g == self.predicted)
            .ok_or_else(|| Error::MissingGold {
                example_id: self.example_id.clone(),
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinStats {
    pub bin_index: usize,
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
    pub accuracy: f64,
    pub mean_confidence: f64,
}

/// Bin owning `confidence` among `bins` equal-width bins.
pub fn bin_index(confidence: f64, bins: usize) -> usize {
    let m = bins.max(1);
    let edge = |k: usize| k as f64 / m as f64;
    let mut idx = ((confidence * m as f64).ceil() as isize - 1).clamp(0, m as isize - 1) as usize;
    // ceil() can land one bin off when confidence·M rounds across an edge
    while idx > 0 && confidence <= edge(idx) {
        idx -= 1;
    }
    while idx + 1 < m && confidence > edge(idx + 1) {
        idx += 1;
    }
    idx
}

/// Record indices per bin.
pub fn assign_bins(records: &[PredictionRecord], bins: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); bins.max(1)];
    for (i, r) in records.iter().enumerate() {
        out[bin_index(r.confidence, bins)].push(i);
    }
    out
}

pub fn bin_stats(records: &[PredictionRecord], bins: usize) -> Result<Vec<BinStats>> {
    let m = bins.max(1);
    let mut count = vec![0usize; m];
    let mut correct = vec![0usize; m];
    let mut conf = vec![0.0; m];
    for r in records {
        let b = bin_index(r.confidence, m);
        count[b] += 1;
        correct[b] += usize::from(r.is_correct()?);
        conf[b] += r.confidence;
    }
    Ok((0..m)
        .map(|b| {
            let (accuracy, mean_confidence) = if count[b] == 0 {
                (0.0, 0.0)
            } else {
                (correct[b] as f64 / count[b] as f64, conf[b] / count[b] as f64)
            };
            BinStats {
                bin_index: b,
                lower: b as f64 / m as f64,
                upper: (b + 1) as f64 / m as f64,
                count: count[b],
                accuracy,
                mean_confidence,
            }
        })
        .collect())
}

fn weighted_sum(
    records: &[PredictionRecord],
    bins: usize,
    term: impl Fn(&BinStats) -> f64,
) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no prediction records"));
    }
    let n = records.len() as f64;
    Ok(bin_stats(records, bins)?
        .iter()
        .filter(|b| b.count > 0)
        .map(|b| b.count as f64 / n * term(b))
        .sum())
}

pub fn ece(records: &[PredictionRecord], bins: usize) -> Result<f64> {
    weighted_sum(records, bins, |b| (b.accuracy - b.mean_confidence).abs())
}

/// Over-confidence error: only bins whose confidence exceeds their accuracy
/// contribute.
pub fn oe(records: &[PredictionRecord], bins: usize) -> Result<f64> {
    weighted_sum(records, bins, |b| {
        b.mean_confidence * (b.mean_confidence - b.accuracy).max(0.0)
    })
}

/// Micro-averaged scores over the relation classes; `false` counts as the
/// negative class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassificationScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

pub fn classification_scores(records: &[PredictionRecord]) -> Result<ClassificationScores> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no prediction records"));
    }
    let (mut tp, mut predicted_pos, mut gold_pos, mut correct) = (0usize, 0usize, 0usize, 0usize);
    for r in records {
        let gold = r.gold.ok_or_else(|| Error::MissingGold {
            example_id: r.example_id.clone(),
        })?;
        predicted_pos += usize::from(r.predicted.is_relation());
        gold_pos += usize::from(gold.is_relation());
        tp += usize::from(gold.is_relation() && gold == r.predicted);
        correct += usize::from(gold == r.predicted);
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(tp, predicted_pos);
    let recall = ratio(tp, gold_pos);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ClassificationScores {
        precision,
        recall,
        f1,
        accuracy: ratio(correct, records.len()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub n: usize,
    pub num_bins: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub mean_confidence: f64,
    pub ece: f64,
    pub oe: f64,
    /// Count of maximum probabilities per bin.
    pub histogram: Vec<usize>,
    pub bins: Vec<BinStats>,
}

pub fn report(records: &[PredictionRecord], bins: usize) -> Result<CalibrationReport> {
    if records.is_empty() {
        return Err(Error::EmptyInput("no prediction records"));
    }
    let stats = bin_stats(records, bins)?;
    let scores = classification_scores(records)?;
    let n = records.len();
    let mean_confidence = records.iter().map(|r| r.confidence).sum::<f64>() / n as f64;
    Ok(CalibrationReport {
        n,
        num_bins: stats.len(),
        precision: scores.precision,
        recall: scores.recall,
        f1: scores.f1,
        accuracy: scores.accuracy,
        mean_confidence,
        ece: ece(records, bins)?,
        oe: oe(records, bins)?,
        histogram: stats.iter().map(|b| b.count).collect(),
        bins: stats,
    })
}

impl CalibrationReport {
    /// Keyed text (TOML) rendering.
    pub fn to_keyed_text(&self) -> String {
        toml::to_string(self).expect("report serializes")
    }

    pub fn from_keyed_text(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::parse("<report>", 0, e.to_string()))
    }

    /// Two-column table: bin upper edge and count of maximum probabilities.
    pub fn histogram_table(&self) -> String {
        let mut out = String::from("bin_upper\tcount\n");
        for b in &self.bins {
            let _ = writeln!(out, "{:.4}\t{}", b.upper, b.count);
        }
        out
    }

    pub fn write_histogram(&self, path: &Path) -> Result<()> {
        crate::records::write_text(path, &self.histogram_table())
    }
}
