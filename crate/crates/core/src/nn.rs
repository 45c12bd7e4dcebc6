//! Dense feed-forward network with hand-written backpropagation.
//!
//! Parameters live in one flat `Vec<f64>` (per layer: weights row-major
//! `out x in`, then bias), which keeps the optimizer, EMA tracking and
//! checkpointing trivial. Hidden layers use the SiLU nonlinearity; the
//! output layer is linear. No autodiff dependency.

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::Rng;

/// Layer widths including input and output, e.g. `[in, h1, h2, out]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DenseNet {
    dims: Vec<usize>,
}

/// Forward-pass intermediates needed by [`DenseNet::backward`].
#[derive(Debug, Clone)]
pub struct Cache {
    /// Post-activation values per layer; `acts[0]` is the input.
    acts: Vec<Vec<f64>>,
    /// Pre-activation values per layer.
    pre: Vec<Vec<f64>>,
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
fn silu_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

impl DenseNet {
    pub fn new(dims: Vec<usize>) -> Self {
        assert!(dims.len() >= 2, "need at least input and output dims");
        assert!(dims.iter().all(|&d| d > 0), "zero-width layer");
        DenseNet { dims }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn param_count(&self) -> usize {
        (0..self.num_layers())
            .map(|l| self.dims[l] * self.dims[l + 1] + self.dims[l + 1])
            .sum()
    }

    /// He-style seeded initialization: weights `N(0, 2/fan_in)`, zero bias.
    pub fn init_params(&self, rng: &mut Rng) -> Vec<f64> {
        let mut params = Vec::with_capacity(self.param_count());
        for l in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let std = libm::sqrt(2.0 / fan_in as f64);
            for _ in 0..fan_in * fan_out {
                params.push(std * rng.normal());
            }
            params.extend(core::iter::repeat_n(0.0, fan_out));
        }
        params
    }

    fn layer_offset(&self, layer: usize) -> usize {
        (0..layer)
            .map(|l| self.dims[l] * self.dims[l + 1] + self.dims[l + 1])
            .sum()
    }

    pub fn forward(&self, params: &[f64], input: &[f64]) -> Vec<f64> {
        self.forward_cached(params, input).0
    }

    pub fn forward_cached(&self, params: &[f64], input: &[f64]) -> (Vec<f64>, Cache) {
        debug_assert_eq!(params.len(), self.param_count());
        assert_eq!(input.len(), self.input_dim(), "input width mismatch");
        let layers = self.num_layers();
        let mut acts = Vec::with_capacity(layers + 1);
        let mut pre = Vec::with_capacity(layers);
        acts.push(input.to_vec());
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let w = &params[offset..offset + fan_in * fan_out];
            let b = &params[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let a = &acts[l];
            let mut z = vec![0.0; fan_out];
            for o in 0..fan_out {
                let row = &w[o * fan_in..(o + 1) * fan_in];
                let mut acc = b[o];
                for (wi, ai) in row.iter().zip(a.iter()) {
                    acc += wi * ai;
                }
                z[o] = acc;
            }
            // Last layer stays linear.
            let out = if l + 1 == layers {
                z.clone()
            } else {
                z.iter().map(|&v| silu(v)).collect()
            };
            pre.push(z);
            acts.push(out);
        }
        (acts.last().unwrap().clone(), Cache { acts, pre })
    }

    /// Backpropagates `d_out` through the cached pass.
    ///
    /// Parameter gradients are accumulated into `grads` (same flat layout as
    /// `params`); the returned vector is the gradient w.r.t. the input.
    pub fn backward(
        &self,
        params: &[f64],
        cache: &Cache,
        d_out: &[f64],
        grads: &mut [f64],
    ) -> Vec<f64> {
        debug_assert_eq!(grads.len(), self.param_count());
        assert_eq!(d_out.len(), self.output_dim(), "output gradient width mismatch");
        let layers = self.num_layers();
        // Output layer is linear, so dL/dz of the last layer equals d_out.
        let mut delta = d_out.to_vec();
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.dims[l], self.dims[l + 1]);
            let offset = self.layer_offset(l);
            let w = &params[offset..offset + fan_in * fan_out];
            let a = &cache.acts[l];
            {
                let gw = &mut grads[offset..offset + fan_in * fan_out];
                for o in 0..fan_out {
                    let d = delta[o];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &mut gw[o * fan_in..(o + 1) * fan_in];
                    for (g, ai) in row.iter_mut().zip(a.iter()) {
                        *g += d * ai;
                    }
                }
            }
            {
                let gb = &mut grads
                    [offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
                for (g, d) in gb.iter_mut().zip(delta.iter()) {
                    *g += d;
                }
            }
            let mut d_a = vec![0.0; fan_in];
            for o in 0..fan_out {
                let d = delta[o];
                if d == 0.0 {
                    continue;
                }
                let row = &w[o * fan_in..(o + 1) * fan_in];
                for (da, wi) in d_a.iter_mut().zip(row.iter()) {
                    *da += wi * d;
                }
            }
            if l == 0 {
                return d_a;
            }
            let z_prev = &cache.pre[l - 1];
            delta = d_a
                .iter()
                .zip(z_prev.iter())
                .map(|(da, &z)| da * silu_prime(z))
                .collect();
        }
        unreachable!("network has at least one layer");
    }
}
