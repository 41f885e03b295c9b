/// Gradient descent with classical momentum:
/// `v ← μ·v + g`, `θ ← θ − lr·v`.
#[derive(Debug, Clone)]
pub struct Momentum {
    momentum: f64,
    velocity: Vec<Vec<f64>>,
}

impl Momentum {
    pub fn new(momentum: f64) -> Self {
        Momentum {
            momentum,
            velocity: Vec::new(),
        }
    }

    pub fn step(&mut self, params: Vec<&mut [f64]>, grads: Vec<&[f64]>, lr: f64) {
        assert_eq!(params.len(), grads.len(), "parameter/gradient tensor count");
        if self.velocity.is_empty() {
            self.velocity = grads.iter().map(|g| vec![0.0; g.len()]).collect();
        }
        for ((p, g), v) in params.into_iter().zip(grads).zip(&mut self.velocity) {
            for ((pi, gi), vi) in p.iter_mut().zip(g).zip(v.iter_mut()) {
                *vi = self.momentum * *vi + gi;
                *pi -= lr * *vi;
            }
        }
    }
}

/// Learning rate decayed linearly from `base` towards zero over `total` steps.
pub fn linear_decay(base: f64, step: usize, total: usize) -> f64 {
    if total == 0 {
        return base;
    }
    base * (1.0 - step as f64 / total as f64).max(0.0)
}
