//! Adam and weight initialization.

use rand::Rng;

use crate::tensor::DenseMatrix;

/// Adam with bias-corrected moment estimates, no weight decay.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// Applies one update. `params` and `grads` must keep the same order and
    /// shapes across calls.
    pub fn step(&mut self, params: &mut [&mut DenseMatrix], grads: &[DenseMatrix]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| DenseMatrix::zeros(g.rows(), g.cols())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (idx, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            assert_eq!(p.shape(), g.shape(), "gradient shape for tensor {idx}");
            let m = self.m[idx].data_mut();
            let v = self.v[idx].data_mut();
            for (((w, &gi), mi), vi) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= self.lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }
}

/// Glorot/Xavier uniform: entries in `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot_uniform(fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> DenseMatrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    DenseMatrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..limit))
}
