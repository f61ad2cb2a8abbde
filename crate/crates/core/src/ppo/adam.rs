use serde::{Deserialize, Serialize};

use crate::policy::Real;

/// Adam with bias correction; moments kept in f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, eps: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn apply<R: Real>(&mut self, params: &mut [R], grad: &[R], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grad[i].as_f64();
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] = R::of(params[i].as_f64() - lr * mh / (vh.sqrt() + self.eps));
        }
    }
}

/// Scales `grad` so its L2 norm is at most `max_norm`; returns the norm
/// before clipping.
pub fn clip_grad_norm<R: Real>(grad: &mut [R], max_norm: f64) -> f64 {
    let norm = grad.iter().map(|g| g.as_f64().powi(2)).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = R::of(max_norm / norm);
        for g in grad.iter_mut() {
            *g = *g * s;
        }
    }
    norm
}
