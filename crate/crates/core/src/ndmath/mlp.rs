//! Fully connected feed-forward network with explicit forward and backward
//! passes.
//!
//! Weights are stored row-major with shape `(out_dim, in_dim)`. Hidden layers
//! share one activation; the output layer is linear.

use serde::{Deserialize, Serialize};

use super::matrix::{axpy, Matrix};
use super::rng::Rng;
use crate::error::{ensure_len, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    #[inline]
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - post * post,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
    hidden_activation: Activation,
    output_activation: Activation,
}

/// Activations recorded by [`Mlp::forward`], consumed by [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
    layer_sizes: Vec<usize>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&self.input)
    }

    pub fn into_output(mut self) -> Vec<f64> {
        self.post.pop().unwrap_or(self.input)
    }
}

/// Parameter gradients with the same shapes as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGradients {
    pub fn zeros_like(net: &Mlp) -> Self {
        Self {
            weights: net
                .layers
                .iter()
                .map(|l| Matrix::zeros(l.out_dim(), l.in_dim()))
                .collect(),
            biases: net.layers.iter().map(|l| vec![0.0; l.out_dim()]).collect(),
        }
    }

    /// `self += scale · other`
    pub fn accumulate(&mut self, other: &MlpGradients, scale: f64) {
        for (w, ow) in self.weights.iter_mut().zip(&other.weights) {
            axpy(scale, ow.as_slice(), w.as_mut_slice());
        }
        for (b, ob) in self.biases.iter_mut().zip(&other.biases) {
            axpy(scale, ob, b);
        }
    }

    pub fn fill_zero(&mut self) {
        self.weights
            .iter_mut()
            .for_each(|w| w.as_mut_slice().fill(0.0));
        self.biases.iter_mut().for_each(|b| b.fill(0.0));
    }

    /// Flat views in the order `[w0, b0, w1, b1, ...]`, matching
    /// [`Mlp::param_blocks_mut`].
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }
}

/// A named, mutable view of one parameter array.
pub struct ParamBlock<'a> {
    pub name: String,
    pub values: &'a mut [f64],
}

impl Mlp {
    /// Glorot-uniform weights, zero biases.
    pub fn new(layer_sizes: &[usize], hidden_activation: Activation, rng: &mut Rng) -> Result<Self> {
        Self::check_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out)
                    .map(|_| rng.uniform_in(-limit, limit))
                    .collect();
                Dense {
                    weights: Matrix::new(fan_out, fan_in, data).expect("sized"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Ok(Self {
            layers,
            hidden_activation,
            output_activation: Activation::Linear,
        })
    }

    pub fn zeros(layer_sizes: &[usize], hidden_activation: Activation) -> Result<Self> {
        Self::check_sizes(layer_sizes)?;
        let layers = layer_sizes
            .windows(2)
            .map(|w| Dense {
                weights: Matrix::zeros(w[1], w[0]),
                bias: vec![0.0; w[1]],
            })
            .collect();
        Ok(Self {
            layers,
            hidden_activation,
            output_activation: Activation::Linear,
        })
    }

    pub fn from_layers(
        layers: Vec<Dense>,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidConfig("network needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            ensure_len("layer bias", l.out_dim(), l.bias.len())?;
            if i > 0 {
                ensure_len("layer input", layers[i - 1].out_dim(), l.in_dim())?;
            }
            if !l.bias.iter().all(|b| b.is_finite()) {
                return Err(Error::NonFinite(format!("bias of layer {i}")));
            }
        }
        Ok(Self {
            layers,
            hidden_activation,
            output_activation,
        })
    }

    fn check_sizes(layer_sizes: &[usize]) -> Result<()> {
        if layer_sizes.len() < 2 || layer_sizes.contains(&0) {
            return Err(Error::InvalidConfig(format!(
                "layer sizes must have at least two positive entries, got {layer_sizes:?}"
            )));
        }
        Ok(())
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden_activation
    }

    pub fn output_activation(&self) -> Activation {
        self.output_activation
    }

    pub fn layer_sizes(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(Dense::out_dim))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").out_dim()
    }

    pub fn num_parameters(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.as_slice().len() + l.bias.len())
            .sum()
    }

    fn activation_of(&self, layer: usize) -> Activation {
        if layer + 1 == self.layers.len() {
            self.output_activation
        } else {
            self.hidden_activation
        }
    }

    pub fn forward(&self, input: &[f64]) -> Result<ForwardCache> {
        ensure_len("mlp input", self.input_dim(), input.len())?;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut post: Vec<Vec<f64>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let x = post.last().map(Vec::as_slice).unwrap_or(input);
            let mut a = layer.weights.matvec(x)?;
            for (ai, bi) in a.iter_mut().zip(&layer.bias) {
                *ai += bi;
            }
            let act = self.activation_of(i);
            let h: Vec<f64> = a.iter().map(|&v| act.apply(v)).collect();
            pre.push(a);
            post.push(h);
        }
        Ok(ForwardCache {
            input: input.to_vec(),
            pre,
            post,
            layer_sizes: self.layer_sizes(),
        })
    }

    pub fn predict(&self, input: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(input)?.into_output())
    }

    fn check_cache(&self, cache: &ForwardCache, output_gradient: &[f64]) -> Result<()> {
        if cache.layer_sizes != self.layer_sizes() || cache.pre.len() != self.layers.len() {
            return Err(Error::InvalidConfig(
                "forward cache does not belong to this network".into(),
            ));
        }
        ensure_len("output gradient", self.output_dim(), output_gradient.len())
    }

    /// Back-propagates `output_gradient` (dLoss/dOutput). Returns parameter
    /// gradients and dLoss/dInput.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        output_gradient: &[f64],
    ) -> Result<(MlpGradients, Vec<f64>)> {
        self.check_cache(cache, output_gradient)?;
        let mut grads = MlpGradients::zeros_like(self);
        let input_grad = self.backprop(cache, output_gradient, Some(&mut grads));
        Ok((grads, input_grad))
    }

    /// Adds the parameter gradients into `grads` instead of allocating.
    pub fn backward_accumulate(
        &self,
        cache: &ForwardCache,
        output_gradient: &[f64],
        grads: &mut MlpGradients,
    ) -> Result<Vec<f64>> {
        self.check_cache(cache, output_gradient)?;
        Ok(self.backprop(cache, output_gradient, Some(grads)))
    }

    /// Input gradient only; skips the parameter outer products.
    pub fn input_gradient(&self, cache: &ForwardCache, output_gradient: &[f64]) -> Result<Vec<f64>> {
        self.check_cache(cache, output_gradient)?;
        Ok(self.backprop(cache, output_gradient, None))
    }

    fn backprop(
        &self,
        cache: &ForwardCache,
        output_gradient: &[f64],
        mut grads: Option<&mut MlpGradients>,
    ) -> Vec<f64> {
        let mut delta = output_gradient.to_vec();
        for i in (0..self.layers.len()).rev() {
            let act = self.activation_of(i);
            for (d, (&a, &h)) in delta.iter_mut().zip(cache.pre[i].iter().zip(&cache.post[i])) {
                *d *= act.derivative(a, h);
            }
            let x = if i == 0 {
                &cache.input
            } else {
                &cache.post[i - 1]
            };
            if let Some(g) = grads.as_deref_mut() {
                let gw = &mut g.weights[i];
                for (r, &d) in delta.iter().enumerate() {
                    axpy(d, x, gw.row_mut(r));
                }
                axpy(1.0, &delta, &mut g.biases[i]);
            }
            delta = self.layers[i]
                .weights
                .transpose_matvec(&delta)
                .expect("checked shapes");
        }
        delta
    }

    /// Mutable parameter views in the order `[w0, b0, w1, b1, ...]`.
    pub fn param_blocks_mut(&mut self, prefix: &str) -> Vec<ParamBlock<'_>> {
        self.layers
            .iter_mut()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    ParamBlock {
                        name: format!("{prefix}layer{i}.weights"),
                        values: l.weights.as_mut_slice(),
                    },
                    ParamBlock {
                        name: format!("{prefix}layer{i}.bias"),
                        values: l.bias.as_mut_slice(),
                    },
                ]
            })
            .collect()
    }
}
