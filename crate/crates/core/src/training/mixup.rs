use crate::error::{Error, Result};
use crate::label::{SoftLabel, NUM_CLASSES};

/// Convex combination of two encoded examples and their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedExample {
    pub feature: Vec<f64>,
    pub label: SoftLabel,
    pub lambda: f64,
    pub source_ids: (usize, usize),
}

/// `x̃ = λ·x_i + (1−λ)·x_j`, `ỹ = λ·y_i + (1−λ)·y_j`.
///
/// At `λ = 1` and `λ = 0` the respective source is returned bit-for-bit.
pub fn mixup_pair(
    (i, feat_i, label_i): (usize, &[f64], &SoftLabel),
    (j, feat_j, label_j): (usize, &[f64], &SoftLabel),
    lambda: f64,
) -> Result<MixedExample> {
    if feat_i.len() != feat_j.len() {
        return Err(Error::DimensionMismatch {
            expected: feat_i.len(),
            actual: feat_j.len(),
        });
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::Config(format!("mixing ratio {lambda} outside [0, 1]")));
    }
    let (feature, label) = if lambda == 1.0 {
        (feat_i.to_vec(), *label_i)
    } else if lambda == 0.0 {
        (feat_j.to_vec(), *label_j)
    } else {
        let mu = 1.0 - lambda;
        let feature = feat_i
            .iter()
            .zip(feat_j)
            .map(|(a, b)| lambda * a + mu * b)
            .collect();
        let mut probs = [0.0; NUM_CLASSES];
        for (k, p) in probs.iter_mut().enumerate() {
            *p = lambda * label_i.0[k] + mu * label_j.0[k];
        }
        (feature, SoftLabel(probs))
    };
    Ok(MixedExample {
        feature,
        label,
        lambda,
        source_ids: (i, j),
    })
}
