//! Softmax, entropy and the confidence-penalised cross-entropy.

use crate::label::{SoftLabel, NUM_CLASSES};

/// Probability floor inside the cross-entropy logarithm.
pub const LOG_FLOOR: f64 = 1e-12;

// NaN passes through, unlike f64::max
fn clamp_floor(p: f64) -> f64 {
    if p < LOG_FLOOR {
        LOG_FLOOR
    } else {
        p
    }
}

/// Max-shifted softmax.
pub fn softmax(logits: &[f64; NUM_CLASSES]) -> SoftLabel {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out = [0.0; NUM_CLASSES];
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    out.iter_mut().for_each(|o| *o /= sum);
    SoftLabel(out)
}

/// Shannon entropy in nats, with `0 · ln 0 = 0`.
pub fn entropy(p: &SoftLabel) -> f64 {
    -p.0
        .iter()
        .filter(|&&pi| pi != 0.0)
        .map(|&pi| pi * pi.ln())
        .sum::<f64>()
}

/// Soft-target cross-entropy.
pub fn cross_entropy(p: &SoftLabel, target: &SoftLabel) -> f64 {
    -p.0
        .iter()
        .zip(&target.0)
        .filter(|(_, &t)| t != 0.0)
        .map(|(&pi, &t)| t * clamp_floor(pi).ln())
        .sum::<f64>()
}

/// Per-example objective `CE(target, p) − β·H(p)`.
pub fn loss(p: &SoftLabel, target: &SoftLabel, beta: f64) -> f64 {
    cross_entropy(p, target) - beta * entropy(p)
}

/// Gradient of [`loss`] with respect to the logits that produced `p`:
///
/// `∂/∂z_k = p_k − t_k + β · p_k · (ln p_k + H(p))`
///
/// The cross-entropy part assumes `target` sums to one and ignores the
/// [`LOG_FLOOR`] clamp.
pub fn loss_backward(p: &SoftLabel, target: &SoftLabel, beta: f64) -> [f64; NUM_CLASSES] {
    let h = entropy(p);
    let mut g = [0.0; NUM_CLASSES];
    for k in 0..NUM_CLASSES {
        let pk = p.0[k];
        let penalty = if pk > 0.0 { pk * (pk.ln() + h) } else { 0.0 };
        g[k] = pk - target.0[k] + beta * penalty;
    }
    g
}
