//! Finite-difference checks of every analytic gradient. Each function builds
//! one random instance and returns the largest per-tensor relative error.

use rand::Rng;

use chemcal::encoder::{EncoderConfig, EncoderGrads, EncoderParams, TokenSequence};
use chemcal::training::{loss, loss_backward, softmax, ClassifierHead};

use super::{fd_grad, random_soft_label, random_vec, rel_error};

fn small_encoder<R: Rng>(rng: &mut R) -> (EncoderParams, TokenSequence) {
    let vocab = rng.random_range(3..9);
    let config = EncoderConfig {
        dim: rng.random_range(2..6),
        hidden: rng.random_range(2..6),
        ..EncoderConfig::default()
    };
    let params = EncoderParams::init(vocab, &config, rng);
    let len = rng.random_range(1..7);
    let tokens = (0..len).map(|_| rng.random_range(0..vocab as u32)).collect();
    let pad = rng.random_range(0..3);
    (params, TokenSequence::new(tokens).padded(len + pad))
}

/// Logit gradient of the penalised cross-entropy.
pub fn loss_instance<R: Rng>(rng: &mut R) -> f64 {
    let z: [f64; 6] = random_vec(rng, 6, 4.0).try_into().unwrap();
    let target = random_soft_label(rng);
    let beta = rng.random_range(0.0..1.5);
    let analytic = loss_backward(&softmax(&z), &target, beta);
    let numeric = fd_grad(
        &z,
        6,
        |z, i, d| z[i] += d,
        |z| loss(&softmax(z), &target, beta),
    );
    rel_error(&analytic, &numeric)
}

/// Head weights, bias and input feature under the full loss.
pub fn head_instance<R: Rng>(rng: &mut R) -> f64 {
    let dim = rng.random_range(2..9);
    let head = ClassifierHead::init(dim, rng);
    let x = random_vec(rng, dim, 1.0);
    let target = random_soft_label(rng);
    let beta = rng.random_range(0.0..1.5);

    let objective = |(h, x): &(ClassifierHead, Vec<f64>)| {
        loss(&softmax(&h.logits(x).unwrap()), &target, beta)
    };
    let p = softmax(&head.logits(&x).unwrap());
    let g = loss_backward(&p, &target, beta);
    let mut grads = ClassifierHead::zeros(dim);
    let gx = head.backward(&x, &g, &mut grads);

    let state = (head, x);
    let mut worst: f64 = 0.0;
    for t in 0..2 {
        let len = state.0.tensors()[t].len();
        let numeric = fd_grad(&state, len, |s, i, d| s.0.tensors_mut()[t][i] += d, objective);
        worst = worst.max(rel_error(grads.tensors()[t], &numeric));
    }
    let numeric = fd_grad(&state, dim, |s, i, d| s.1[i] += d, objective);
    worst.max(rel_error(&gx, &numeric))
}

/// All five encoder tensors for a random linear read-out of the output.
pub fn encoder_instance<R: Rng>(rng: &mut R) -> f64 {
    let (params, seq) = small_encoder(rng);
    let upstream = random_vec(rng, params.dim(), 1.0);
    let objective = |p: &EncoderParams| {
        let out = p.encode(&seq).unwrap();
        out.iter().zip(&upstream).map(|(a, b)| a * b).sum::<f64>()
    };
    let grads = params.encode_backward(&seq, &upstream).unwrap();
    let mut worst: f64 = 0.0;
    for t in 0..5 {
        let len = params.tensors()[t].len();
        let numeric = fd_grad(&params, len, |p, i, d| p.tensors_mut()[t][i] += d, objective);
        worst = worst.max(rel_error(grads.tensors()[t], &numeric));
    }
    worst
}

/// Encoder, mixup of two encoded sentences, head and loss composed, as in a
/// training step.
pub fn composed_instance<R: Rng>(rng: &mut R) -> f64 {
    let (params, seq_a) = small_encoder(rng);
    let len = rng.random_range(1..7);
    let seq_b = TokenSequence::new(
        (0..len)
            .map(|_| rng.random_range(0..params.vocab_size() as u32))
            .collect(),
    );
    let head = ClassifierHead::init(params.dim(), rng);
    let target = random_soft_label(rng);
    let beta = rng.random_range(0.0..1.0);
    let lambda = rng.random_range(0.0..1.0);

    let objective = |(p, h): &(EncoderParams, ClassifierHead)| {
        let a = p.encode(&seq_a).unwrap();
        let b = p.encode(&seq_b).unwrap();
        let x: Vec<f64> = a.iter().zip(&b).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
        loss(&softmax(&h.logits(&x).unwrap()), &target, beta)
    };

    let (a, cache_a) = params.forward(&seq_a).unwrap();
    let (b, cache_b) = params.forward(&seq_b).unwrap();
    let x: Vec<f64> = a.iter().zip(&b).map(|(a, b)| lambda * a + (1.0 - lambda) * b).collect();
    let p = softmax(&head.logits(&x).unwrap());
    let g = loss_backward(&p, &target, beta);
    let mut head_grads = ClassifierHead::zeros(params.dim());
    let gx = head.backward(&x, &g, &mut head_grads);
    let mut enc_grads = EncoderGrads::zeros_like(&params);
    let ga: Vec<f64> = gx.iter().map(|v| lambda * v).collect();
    let gb: Vec<f64> = gx.iter().map(|v| (1.0 - lambda) * v).collect();
    params.backward(&cache_a, &ga, &mut enc_grads).unwrap();
    params.backward(&cache_b, &gb, &mut enc_grads).unwrap();

    let state = (params, head);
    let mut worst: f64 = 0.0;
    for t in 0..5 {
        let len = state.0.tensors()[t].len();
        let numeric = fd_grad(&state, len, |s, i, d| s.0.tensors_mut()[t][i] += d, objective);
        worst = worst.max(rel_error(enc_grads.tensors()[t], &numeric));
    }
    for t in 0..2 {
        let len = state.1.tensors()[t].len();
        let numeric = fd_grad(&state, len, |s, i, d| s.1.tensors_mut()[t][i] += d, objective);
        worst = worst.max(rel_error(head_grads.tensors()[t], &numeric));
    }
    worst
}
