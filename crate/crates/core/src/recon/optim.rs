use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;

use crate::math;

/// Adam with L2 regularization folded into the gradient. Parameters outside
/// the trainable ranges are left untouched, moments included.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
    pub l2: f32,
    m: Vec<f32>,
    v: Vec<f32>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f32, l2: f32) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            l2,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f32], grads: &[f32], trainable: &[Range<usize>]) {
        self.t += 1;
        let bc1 = 1.0 - powi(self.beta1, self.t);
        let bc2 = 1.0 - powi(self.beta2, self.t);
        for range in trainable {
            for i in range.clone() {
                let g = grads[i] + self.l2 * params[i];
                self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
                self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
                let mh = self.m[i] / bc1;
                let vh = self.v[i] / bc2;
                params[i] -= self.lr * mh / (math::sqrtf(vh) + self.eps);
            }
        }
    }
}

fn powi(x: f32, n: i32) -> f32 {
    (0..n).fold(1.0f32, |acc, _| acc * x)
}
