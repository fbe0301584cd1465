//! MLP layers over the flat parameter store, plus Fourier time features.

use rand::Rng;

use super::tape::{linear_forward, NodeId, Tape};
use super::{LayoutBuilder, ParameterStore, Tensor};
use crate::{Error, Result};

/// Elementwise nonlinearity between layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Tanh => v.tanh(),
            Activation::Relu => v.max(0.0),
        }
    }
}

/// One affine layer's slice addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct LinearRef {
    pub w_off: usize,
    pub b_off: usize,
    pub in_dim: usize,
    pub out_dim: usize,
}

/// A chain of affine layers with the activation applied between layers
/// (never after the last one).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Mlp {
    layers: Vec<LinearRef>,
    activation: Activation,
}

impl Mlp {
    /// Reserve parameter slices for layer sizes `sizes[0] → … → sizes[last]`
    /// under `prefix` in the layout being built.
    pub fn reserve(builder: &mut LayoutBuilder, prefix: &str, sizes: &[usize], activation: Activation) -> Self {
        assert!(sizes.len() >= 2, "an MLP needs at least one layer");
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        for (i, pair) in sizes.windows(2).enumerate() {
            let (in_dim, out_dim) = (pair[0], pair[1]);
            let w_off = builder.push(format!("{prefix}.{i}.w"), out_dim, in_dim);
            let b_off = builder.push(format!("{prefix}.{i}.b"), out_dim, 1);
            layers.push(LinearRef {
                w_off,
                b_off,
                in_dim,
                out_dim,
            });
        }
        Mlp { layers, activation }
    }

    pub fn layers(&self) -> &[LinearRef] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().out_dim
    }

    /// Uniform ±1/√fan_in init; the last layer is zeroed when `zero_last` is
    /// set so the net starts as the zero function.
    pub fn init<R: Rng>(&self, store: &mut ParameterStore, rng: &mut R, zero_last: bool) {
        let n_layers = self.layers.len();
        for (i, l) in self.layers.iter().enumerate() {
            let zero = zero_last && i + 1 == n_layers;
            let bound = 1.0 / (l.in_dim as f64).sqrt();
            let flat = store.flat_mut();
            for w in &mut flat[l.w_off..l.w_off + l.out_dim * l.in_dim] {
                *w = if zero { 0.0 } else { rng.random_range(-bound..bound) };
            }
            for b in &mut flat[l.b_off..l.b_off + l.out_dim] {
                *b = if zero { 0.0 } else { rng.random_range(-bound..bound) };
            }
        }
    }

    /// Forward pass without a tape. Arithmetic matches the taped pass
    /// bit for bit.
    pub fn forward_plain(&self, store: &ParameterStore, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim());
        let n_layers = self.layers.len();
        let mut cur = x.to_vec();
        for (i, l) in self.layers.iter().enumerate() {
            let w = &store.flat()[l.w_off..l.w_off + l.out_dim * l.in_dim];
            let b = &store.flat()[l.b_off..l.b_off + l.out_dim];
            let mut out = vec![0.0; l.out_dim];
            linear_forward(w, b, &cur, &mut out);
            if i + 1 < n_layers {
                for v in &mut out {
                    *v = self.activation.apply(*v);
                }
            }
            cur = out;
        }
        cur
    }

    /// Forward pass recorded on a tape.
    pub fn forward_tape(&self, tape: &mut Tape<'_>, x: NodeId) -> NodeId {
        let n_layers = self.layers.len();
        let mut cur = x;
        for (i, l) in self.layers.iter().enumerate() {
            cur = tape.linear(l.w_off, l.b_off, l.in_dim, l.out_dim, cur);
            if i + 1 < n_layers {
                cur = match self.activation {
                    Activation::Tanh => tape.tanh(cur),
                    Activation::Relu => tape.relu(cur),
                };
            }
        }
        cur
    }

    /// Tensor-level forward with shape validation.
    pub fn forward(&self, store: &ParameterStore, input: &Tensor) -> Result<Tensor> {
        if input.len() != self.in_dim() {
            return Err(Error::config(format!(
                "mlp expects input of length {}, got {}",
                self.in_dim(),
                input.len()
            )));
        }
        Ok(Tensor::vector(self.forward_plain(store, input.data())))
    }
}

/// `[sin(2π k t/T)]_{k=1..K} ++ [cos(2π k t/T)]_{k=1..K}`.
pub fn fourier_time_features(t: f64, horizon: f64, num_freq: usize) -> Vec<f64> {
    let base = 2.0 * std::f64::consts::PI * t / horizon;
    let mut out = Vec::with_capacity(2 * num_freq);
    for k in 1..=num_freq {
        out.push((base * k as f64).sin());
    }
    for k in 1..=num_freq {
        out.push((base * k as f64).cos());
    }
    out
}
