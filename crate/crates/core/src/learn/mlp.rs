//! Fully connected tanh network with exact reverse- and forward-mode derivatives.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

/// Layer sizes plus one flat parameter vector. Layer `l` stores its weight
/// matrix row-major (`out × in`) followed by its bias.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    pub params: Vec<f64>,
}

/// Activations saved by [`Mlp::forward_cache`]. `layers[0]` is the input,
/// `layers[L]` the output; hidden entries are post-tanh.
#[derive(Debug, Clone)]
pub struct MlpCache {
    pub layers: Vec<Vec<f64>>,
}

impl MlpCache {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("cache holds at least the input")
    }

    /// Activations feeding the output layer.
    pub fn last_hidden(&self) -> &[f64] {
        &self.layers[self.layers.len() - 2]
    }
}

impl Mlp {
    /// Network with all parameters zero.
    pub fn zeros(sizes: &[usize]) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|s| *s == 0) {
            return Err(Error::Config(format!("network needs at least two nonzero layer sizes, got {sizes:?}")));
        }
        let n = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Ok(Self { sizes: sizes.to_vec(), params: vec![0.0; n] })
    }

    /// Glorot-uniform weights and zero biases; the output layer is scaled by `out_scale`.
    pub fn init<R: Rng + ?Sized>(sizes: &[usize], out_scale: f64, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        let layers = net.num_layers();
        for l in 0..layers {
            let (fan_in, fan_out) = (sizes[l], sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() * if l + 1 == layers { out_scale } else { 1.0 };
            let (w, _) = net.offsets(l);
            for p in &mut net.params[w..w + fan_in * fan_out] {
                *p = rng.random_range(-1.0..1.0) * limit;
            }
        }
        Ok(net)
    }

    pub fn from_params(sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(sizes)?;
        if params.len() != net.params.len() {
            return Err(Error::Shape(format!("network {sizes:?} has {} parameters, got {}", net.params.len(), params.len())));
        }
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    /// Offsets of the weight and bias blocks of layer `l`.
    pub fn offsets(&self, l: usize) -> (usize, usize) {
        let mut off = 0;
        for k in 0..l {
            off += self.sizes[k] * self.sizes[k + 1] + self.sizes[k + 1];
        }
        (off, off + self.sizes[l] * self.sizes[l + 1])
    }

    /// One name per parameter, e.g. `l1.w[3,0]` or `l1.b[3]`.
    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.params.len());
        for l in 0..self.num_layers() {
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            for r in 0..o {
                for c in 0..i {
                    out.push(format!("l{l}.w[{r},{c}]"));
                }
            }
            for r in 0..o {
                out.push(format!("l{l}.b[{r}]"));
            }
        }
        out
    }

    /// Weights of the output layer as an `out × last_hidden` matrix.
    pub fn output_weights(&self) -> DMatrix<f64> {
        let l = self.num_layers() - 1;
        let (w, _) = self.offsets(l);
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        DMatrix::from_row_slice(o, i, &self.params[w..w + i * o])
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        let l = self.num_layers() - 1;
        let (_, b) = self.offsets(l);
        let o = self.sizes[l + 1];
        &mut self.params[b..b + o]
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!("network expects input of length {}, got {}", self.input_dim(), x.len())));
        }
        Ok(())
    }

    fn affine(&self, l: usize, x: &[f64]) -> Vec<f64> {
        let (w, b) = self.offsets(l);
        let (i, o) = (self.sizes[l], self.sizes[l + 1]);
        (0..o)
            .map(|r| {
                let row = &self.params[w + r * i..w + (r + 1) * i];
                self.params[b + r] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cache(x)?.layers.pop().unwrap())
    }

    pub fn forward_cache(&self, x: &[f64]) -> Result<MlpCache> {
        self.check_input(x)?;
        let mut layers = Vec::with_capacity(self.sizes.len());
        layers.push(x.to_vec());
        let last = self.num_layers() - 1;
        for l in 0..=last {
            let mut z = self.affine(l, &layers[l]);
            if l < last {
                z.iter_mut().for_each(|v| *v = v.tanh());
            }
            layers.push(z);
        }
        Ok(MlpCache { layers })
    }

    /// Accumulates `(∂y/∂θ)ᵀ g` into `grad` and returns `(∂y/∂x)ᵀ g`.
    pub fn backward(&self, cache: &MlpCache, grad_out: &[f64], grad: &mut [f64]) -> Vec<f64> {
        let mut delta = grad_out.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (w, b) = self.offsets(l);
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let input = &cache.layers[l];
            for r in 0..o {
                let d = delta[r];
                grad[b + r] += d;
                if d != 0.0 {
                    let g = &mut grad[w + r * i..w + (r + 1) * i];
                    for (gc, xc) in g.iter_mut().zip(input) {
                        *gc += d * xc;
                    }
                }
            }
            let mut next = vec![0.0; i];
            for r in 0..o {
                let d = delta[r];
                if d != 0.0 {
                    let row = &self.params[w + r * i..w + (r + 1) * i];
                    for (n, wc) in next.iter_mut().zip(row) {
                        *n += d * wc;
                    }
                }
            }
            if l > 0 {
                // input to layer l is tanh of the previous pre-activation
                for (n, h) in next.iter_mut().zip(input) {
                    *n *= 1.0 - h * h;
                }
            }
            delta = next;
        }
        delta
    }

    /// Directional derivative of the output along the parameter tangent `dp`.
    pub fn jvp(&self, cache: &MlpCache, dp: &[f64]) -> Vec<f64> {
        let mut dx = vec![0.0; self.input_dim()];
        for l in 0..self.num_layers() {
            let (w, b) = self.offsets(l);
            let (i, o) = (self.sizes[l], self.sizes[l + 1]);
            let input = &cache.layers[l];
            let mut dz: Vec<f64> = (0..o)
                .map(|r| {
                    let row = &self.params[w + r * i..w + (r + 1) * i];
                    let drow = &dp[w + r * i..w + (r + 1) * i];
                    let mut acc = dp[b + r];
                    for c in 0..i {
                        acc += drow[c] * input[c] + row[c] * dx[c];
                    }
                    acc
                })
                .collect();
            if l + 1 < self.num_layers() {
                let out = &cache.layers[l + 1];
                for (d, h) in dz.iter_mut().zip(out) {
                    *d *= 1.0 - h * h;
                }
            }
            dx = dz;
        }
        dx
    }
}
