use rand::Rng;
use serde::{Deserialize, Serialize};

use super::init::glorot_matrix;
use super::matrix::Matrix;
use super::params::{push_prefixed, Params};
use crate::error::{check_dim, Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    pub fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => out * (1.0 - out),
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Fully connected layer computing `activation(x W + b)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    pub weights: Matrix,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

/// Values recorded by a training-mode forward pass.
#[derive(Clone, Debug)]
pub struct DenseCache {
    pub input: Vec<f64>,
    pub pre: Vec<f64>,
    pub output: Vec<f64>,
}

impl DenseLayer {
    pub fn new(weights: Matrix, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        check_dim("dense bias", weights.cols(), bias.len())?;
        Ok(DenseLayer {
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(fan_in: usize, fan_out: usize, activation: Activation) -> Self {
        DenseLayer {
            weights: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
            activation,
        }
    }

    pub fn glorot<R: Rng + ?Sized>(
        fan_in: usize,
        fan_out: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        DenseLayer {
            weights: glorot_matrix(fan_in, fan_out, rng),
            bias: vec![0.0; fan_out],
            activation,
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    fn pre_activation(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim("dense input", self.fan_in(), x.len())?;
        let mut pre = self.bias.clone();
        self.weights.accumulate_left_mul(x, &mut pre);
        Ok(pre)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut out = self.pre_activation(x)?;
        for v in &mut out {
            *v = self.activation.apply(*v);
        }
        Ok(out)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<DenseCache> {
        let pre = self.pre_activation(x)?;
        let output = pre.iter().map(|&p| self.activation.apply(p)).collect();
        Ok(DenseCache {
            input: x.to_vec(),
            pre,
            output,
        })
    }

    /// Returns `(grad_W, grad_b, grad_x)` for the given upstream gradient.
    pub fn backward(&self, cache: &DenseCache, upstream: &[f64]) -> Result<(Matrix, Vec<f64>, Vec<f64>)> {
        let mut grads = DenseLayer::zeros(self.fan_in(), self.fan_out(), self.activation);
        let grad_x = self.backward_into(cache, upstream, &mut grads)?;
        Ok((grads.weights, grads.bias, grad_x))
    }

    /// Accumulates parameter gradients into `grads` and returns the input gradient.
    pub fn backward_into(
        &self,
        cache: &DenseCache,
        upstream: &[f64],
        grads: &mut DenseLayer,
    ) -> Result<Vec<f64>> {
        check_dim("dense upstream gradient", self.fan_out(), upstream.len())?;
        check_dim("dense cached input", self.fan_in(), cache.input.len())?;
        let delta: Vec<f64> = upstream
            .iter()
            .zip(cache.pre.iter().zip(&cache.output))
            .map(|(g, (&p, &o))| g * self.activation.derivative(p, o))
            .collect();
        grads.weights.accumulate_outer(&cache.input, &delta);
        for (gb, d) in grads.bias.iter_mut().zip(&delta) {
            *gb += d;
        }
        let mut grad_x = vec![0.0; self.fan_in()];
        self.weights.accumulate_right_mul(&delta, &mut grad_x);
        Ok(grad_x)
    }
}

impl Params for DenseLayer {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        vec![
            ("weight".to_string(), self.weights.as_slice()),
            ("bias".to_string(), self.bias.as_slice()),
        ]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        vec![self.weights.as_mut_slice(), self.bias.as_mut_slice()]
    }
}

/// A stack of dense layers applied in order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        for pair in layers.windows(2) {
            check_dim("mlp layer chain", pair[0].fan_out(), pair[1].fan_in())?;
        }
        Ok(Mlp { layers })
    }

    /// Builds `widths.len() - 1` Glorot-initialized layers; hidden layers use
    /// `hidden`, the last one uses `output`.
    pub fn glorot<R: Rng + ?Sized>(
        widths: &[usize],
        hidden: Activation,
        output: Activation,
        rng: &mut R,
    ) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::Param(format!(
                "an mlp needs at least input and output widths, got {widths:?}"
            )));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { output } else { hidden };
                DenseLayer::glorot(widths[i], widths[i + 1], act, rng)
            })
            .collect();
        Ok(Mlp { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers.first().map_or(0, DenseLayer::fan_in)
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::fan_out)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer.forward(&h)?;
        }
        Ok(h)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<Vec<DenseCache>> {
        let mut caches: Vec<DenseCache> = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            let input = caches.last().map_or(x, |c| c.output.as_slice());
            let cache = layer.forward_cached(input)?;
            caches.push(cache);
        }
        Ok(caches)
    }

    pub fn backward_into(
        &self,
        caches: &[DenseCache],
        upstream: &[f64],
        grads: &mut Mlp,
    ) -> Result<Vec<f64>> {
        check_dim("mlp caches", self.layers.len(), caches.len())?;
        let mut g = upstream.to_vec();
        for ((layer, cache), grad) in self
            .layers
            .iter()
            .zip(caches)
            .zip(grads.layers.iter_mut())
            .rev()
        {
            g = layer.backward_into(cache, &g, grad)?;
        }
        Ok(g)
    }
}

impl Params for Mlp {
    fn blocks(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            push_prefixed(&mut out, &format!("layer{i}"), layer.blocks());
        }
        out
    }

    fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers.iter_mut().flat_map(|l| l.blocks_mut()).collect()
    }
}
