//! Selection of the confidence-penalty weight on a development set.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{fit, predict_labeled, TrainConfig};
use crate::calibration::{self, DEFAULT_BINS};
use crate::corpus::LabeledExample;
use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

/// ECE values closer than this count as tied.
const ECE_TIE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanVar {
    pub mean: f64,
    /// Sample variance (`n − 1` denominator); zero for a single value.
    pub var: f64,
}

impl MeanVar {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return MeanVar::default();
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = if values.len() > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        MeanVar { mean, var }
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub beta: f64,
    pub replicates: usize,
    pub f1: MeanVar,
    pub accuracy: MeanVar,
    pub confidence: MeanVar,
    pub ece: MeanVar,
    pub oe: MeanVar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearchReport {
    pub chosen_beta: f64,
    pub rows: Vec<GridRow>,
}

impl GridSearchReport {
    /// Tab-separated table, one row per candidate.
    pub fn to_table(&self) -> String {
        let mut out = String::from(
            "beta\tf1\tf1_var\taccuracy\tconfidence\tece\tece_var\toe\toe_var\n",
        );
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{:.4}\t{:.3e}\t{:.4}\t{:.4}\t{:.4}\t{:.3e}\t{:.4}\t{:.3e}",
                r.beta,
                r.f1.mean,
                r.f1.var,
                r.accuracy.mean,
                r.confidence.mean,
                r.ece.mean,
                r.ece.var,
                r.oe.mean,
                r.oe.var
            );
        }
        let _ = writeln!(out, "# chosen beta = {}", self.chosen_beta);
        out
    }
}

/// Lowest mean ECE wins; ties go to the higher mean F1, then to the earlier row.
pub fn choose_beta(rows: &[GridRow]) -> Option<f64> {
    let mut best: Option<&GridRow> = None;
    for row in rows {
        best = match best {
            None => Some(row),
            Some(b) if row.ece.mean < b.ece.mean - ECE_TIE => Some(row),
            Some(b) if (row.ece.mean - b.ece.mean).abs() <= ECE_TIE && row.f1.mean > b.f1.mean => {
                Some(row)
            }
            keep => keep,
        };
    }
    best.map(|r| r.beta)
}

/// Trains `replicates` models per candidate β and scores them on `dev`.
///
/// Replicate `r` uses the same derived seed for every candidate, so the
/// comparison is paired.
pub fn grid_search_beta(
    train_set: &[LabeledExample],
    dev: &[LabeledExample],
    encoder: &EncoderConfig,
    base: &TrainConfig,
    candidates: &[f64],
    replicates: usize,
) -> Result<GridSearchReport> {
    if candidates.is_empty() {
        return Err(Error::Config("no beta candidates".into()));
    }
    if replicates == 0 {
        return Err(Error::Config("replicates must be >= 1".into()));
    }
    if dev.is_empty() {
        return Err(Error::EmptyInput("development set"));
    }
    let mut rows = Vec::with_capacity(candidates.len());
    for &beta in candidates {
        let mut cols: [Vec<f64>; 5] = Default::default();
        for r in 0..replicates {
            let config = TrainConfig {
                beta,
                seed: derive_seed(base.seed, &format!("replicate-{r}")),
                ..base.clone()
            };
            let (model, _) = fit(train_set, None, encoder, &config)?;
            let records = predict_labeled(&model, dev)?;
            let rep = calibration::report(&records, DEFAULT_BINS)?;
            for (col, v) in cols
                .iter_mut()
                .zip([rep.f1, rep.accuracy, rep.mean_confidence, rep.ece, rep.oe])
            {
                col.push(v);
            }
        }
        let [f1, accuracy, confidence, ece, oe] = cols.map(|c| MeanVar::of(&c));
        log::info!("beta {beta}: dev ECE {:.4}, F1 {:.4}", ece.mean, f1.mean);
        rows.push(GridRow {
            beta,
            replicates,
            f1,
            accuracy,
            confidence,
            ece,
            oe,
        });
    }
    let chosen_beta = choose_beta(&rows).expect("rows non-empty");
    Ok(GridSearchReport { chosen_beta, rows })
}
