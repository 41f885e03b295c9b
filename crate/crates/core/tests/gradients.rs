mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::gradcheck::{composed_instance, encoder_instance, head_instance, loss_instance};

const TOL: f64 = 1e-4;

fn sweep(name: &str, seed: u64, n: usize, f: fn(&mut ChaCha8Rng) -> f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n {
        let err = f(&mut rng);
        assert!(err < TOL, "{name} instance {i}: relative error {err:e}");
    }
}

#[test]
fn loss_gradient_matches_finite_differences() {
    sweep("loss", 1, 50, loss_instance);
}

#[test]
fn head_gradient_matches_finite_differences() {
    sweep("head", 2, 50, head_instance);
}

#[test]
fn encoder_gradient_matches_finite_differences() {
    sweep("encoder", 3, 50, encoder_instance);
}

#[test]
fn composed_gradient_matches_finite_differences() {
    sweep("composed", 4, 30, composed_instance);
}
