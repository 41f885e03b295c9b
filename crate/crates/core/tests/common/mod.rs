#![allow(dead_code)]

pub mod gradcheck;

use std::path::{Path, PathBuf};

use rand::Rng;

use chemcal::calibration::PredictionRecord;
use chemcal::corpus::{self, LabeledExample};
use chemcal::{Label, SoftLabel, NUM_CLASSES};

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/chemprot_mini")
}

pub fn preprocess_fixture() -> chemcal::Result<Vec<LabeledExample>> {
    let dir = fixture_dir();
    corpus::preprocess_corpus(
        &corpus::read_abstracts(&dir.join("abstracts.tsv"))?,
        &corpus::read_entities(&dir.join("entities.tsv"))?,
        &corpus::read_relations(&dir.join("relations.tsv"))?,
        &corpus::default_eval_groups(),
    )
}

/// The hand-derived expected output: `(example_id, label, text)`.
pub fn expected_fixture_examples() -> Vec<(String, Label, String)> {
    let text = std::fs::read_to_string(fixture_dir().join("expected.tsv")).unwrap();
    text.lines()
        .filter(|l| !l.is_empty())
        .map(|l| {
            let cols: Vec<&str> = l.splitn(3, '\t').collect();
            (
                cols[0].to_string(),
                cols[1].parse().unwrap(),
                cols[2].to_string(),
            )
        })
        .collect()
}

/// A record whose top class (the gold class when `correct`, the next class
/// otherwise) carries `confidence`, the rest spread evenly. Needs `confidence >= 1/6`.
pub fn record_with(id: usize, confidence: f64, correct: bool, gold: Label) -> PredictionRecord {
    let rest = (1.0 - confidence) / (NUM_CLASSES - 1) as f64;
    let predicted = if correct {
        gold
    } else {
        Label::from_index((gold.index() + 1) % NUM_CLASSES).unwrap()
    };
    let mut probs = [rest; NUM_CLASSES];
    probs[predicted.index()] = confidence;
    PredictionRecord::new(format!("r{id}"), SoftLabel(probs), Some(gold))
}

/// Random prediction set: Dirichlet-like probabilities with a random
/// sharpness, some confidences pinned to bin edges, gold drawn so that
/// correctness loosely tracks confidence.
pub fn random_records<R: Rng>(rng: &mut R, n: usize, bins: usize) -> Vec<PredictionRecord> {
    (0..n)
        .map(|i| {
            let gold = Label::ALL[rng.random_range(0..NUM_CLASSES)];
            if rng.random_bool(0.2) {
                // confidence exactly on an edge k/M, when it can be a maximum
                let lo = (bins as f64 / NUM_CLASSES as f64).ceil() as usize;
                let k = rng.random_range(lo.max(1)..=bins);
                let c = k as f64 / bins as f64;
                return record_with(i, c, rng.random_bool(c), gold);
            }
            let sharp: f64 = rng.random_range(0.2..6.0);
            let mut w = [0.0; NUM_CLASSES];
            for x in w.iter_mut() {
                let u: f64 = rng.random_range(1e-9..1.0);
                *x = (-u.ln()).powf(sharp);
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
            let probs = SoftLabel(w);
            let predicted = probs.argmax();
            let gold = if rng.random_bool(probs.0[predicted]) {
                Label::ALL[predicted]
            } else {
                gold
            };
            PredictionRecord::new(format!("r{i}"), probs, Some(gold))
        })
        .collect()
}

/// Direct per-bin tally. Bin 0 is `[0, 1/M]`, bin `m` is `(m/M, (m+1)/M]`.
pub struct Oracle {
    pub count: Vec<usize>,
    pub correct: Vec<usize>,
    pub conf_sum: Vec<f64>,
    pub n: usize,
}

impl Oracle {
    pub fn tally(records: &[PredictionRecord], bins: usize) -> Self {
        let mut o = Oracle {
            count: vec![0; bins],
            correct: vec![0; bins],
            conf_sum: vec![0.0; bins],
            n: records.len(),
        };
        for r in records {
            let mut conf = f64::NEG_INFINITY;
            let mut arg = 0;
            for (k, &p) in r.probs.0.iter().enumerate() {
                if p > conf {
                    conf = p;
                    arg = k;
                }
            }
            let hit = (0..bins)
                .filter(|&m| {
                    let lo = m as f64 / bins as f64;
                    let hi = (m + 1) as f64 / bins as f64;
                    if m == 0 {
                        conf >= 0.0 && conf <= hi
                    } else {
                        conf > lo && conf <= hi
                    }
                })
                .collect::<Vec<_>>();
            assert_eq!(hit.len(), 1, "confidence {conf} must fall in exactly one bin");
            let m = hit[0];
            o.count[m] += 1;
            o.conf_sum[m] += conf;
            if r.gold.map(|g| g.index()) == Some(arg) {
                o.correct[m] += 1;
            }
        }
        o
    }

    fn terms(&self) -> impl Iterator<Item = (f64, f64, f64)> + '_ {
        (0..self.count.len())
            .filter(|&m| self.count[m] > 0)
            .map(|m| {
                let c = self.count[m] as f64;
                (
                    c / self.n as f64,
                    self.correct[m] as f64 / c,
                    self.conf_sum[m] / c,
                )
            })
    }

    pub fn ece(&self) -> f64 {
        self.terms().map(|(w, acc, conf)| w * (acc - conf).abs()).sum()
    }

    pub fn oe(&self) -> f64 {
        self.terms()
            .map(|(w, acc, conf)| w * conf * (conf - acc).max(0.0))
            .sum()
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, b)| a - b).collect();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-10 {
        norm(&diff)
    } else {
        norm(&diff) / scale
    }
}

pub const FD_STEP: f64 = 1e-4;

/// Central differences of `f` with respect to `len` scalar entries of
/// `model`; `poke(m, i, delta)` adds `delta` to entry `i`.
pub fn fd_grad<M: Clone>(
    model: &M,
    len: usize,
    poke: impl Fn(&mut M, usize, f64),
    f: impl Fn(&M) -> f64,
) -> Vec<f64> {
    let mut work = model.clone();
    (0..len)
        .map(|i| {
            poke(&mut work, i, FD_STEP);
            let up = f(&work);
            poke(&mut work, i, -2.0 * FD_STEP);
            let down = f(&work);
            poke(&mut work, i, FD_STEP);
            (up - down) / (2.0 * FD_STEP)
        })
        .collect()
}

pub fn random_soft_label<R: Rng>(rng: &mut R) -> SoftLabel {
    let mut w = [0.0; NUM_CLASSES];
    for x in w.iter_mut() {
        *x = rng.random_range(0.0..1.0);
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    SoftLabel(w)
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}
