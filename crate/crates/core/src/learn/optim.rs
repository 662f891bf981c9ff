//! Adam and observation normalizers.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    /// One descent step on `params` along `grad`.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grad[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grad[i] * grad[i];
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

/// Fixed per-dimension shift and scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedNorm {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl FixedNorm {
    pub const MIN_STD: f64 = 1e-3;

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], std: vec![1.0; dim] }
    }

    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a Vec<f64>>) -> Self {
        let mut rn = RunningNorm::new(0);
        for r in rows {
            if rn.mean.is_empty() {
                rn = RunningNorm::new(r.len());
            }
            rn.update(r);
        }
        let std = rn.variance().iter().map(|v| v.sqrt().max(Self::MIN_STD)).collect();
        Self { mean: rn.mean, std }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

/// Welford running mean and variance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunningNorm {
    pub count: f64,
    pub mean: Vec<f64>,
    pub m2: Vec<f64>,
}

impl RunningNorm {
    pub fn new(dim: usize) -> Self {
        Self { count: 0.0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn update(&mut self, x: &[f64]) {
        self.count += 1.0;
        for i in 0..self.mean.len() {
            let d = x[i] - self.mean[i];
            self.mean[i] += d / self.count;
            self.m2[i] += d * (x[i] - self.mean[i]);
        }
    }

    pub fn variance(&self) -> Vec<f64> {
        self.m2.iter().map(|m| if self.count > 1.0 { m / (self.count - 1.0) } else { 1.0 }).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let var = self.variance();
        (0..x.len()).map(|i| (x[i] - self.mean[i]) / (var[i] + 1e-8).sqrt()).collect()
    }
}
