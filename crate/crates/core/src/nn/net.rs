use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    /// Derivative evaluated at the pre-activation `z`. ReLU uses 0 at the kink.
    #[inline]
    pub fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// A fully connected layer `y = act(W x + b)` with `W` stored row-major as `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            in_dim,
            out_dim,
            weight: vec![0.0; in_dim * out_dim],
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    /// `y = x` with identity activation.
    pub fn identity(dim: usize) -> Self {
        let mut layer = Self::zeros(dim, dim, Activation::Identity);
        for i in 0..dim {
            layer.weight[i * dim + i] = 1.0;
        }
        layer
    }

    /// He-uniform for ReLU layers, Glorot-uniform otherwise. Biases start at zero.
    pub fn random<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = match activation {
            Activation::Relu => (6.0 / in_dim as f64).sqrt(),
            Activation::Identity => (6.0 / (in_dim + out_dim) as f64).sqrt(),
        };
        let mut layer = Self::zeros(in_dim, out_dim, activation);
        for w in &mut layer.weight {
            *w = rng.random_range(-bound..bound);
        }
        layer
    }

    /// Pre-activation `W x + b`.
    pub fn affine(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.in_dim);
        self.weight
            .chunks_exact(self.in_dim)
            .zip(&self.bias)
            .map(|(row, b)| row.iter().zip(x).fold(*b, |acc, (w, xi)| acc + w * xi))
            .collect()
    }

    pub(crate) fn check(&self, index: usize) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::config(format!("layer {index} has a zero dimension")));
        }
        if self.weight.len() != self.in_dim * self.out_dim || self.bias.len() != self.out_dim {
            return Err(Error::config(format!(
                "layer {index}: parameter buffers do not match {}x{}",
                self.out_dim, self.in_dim
            )));
        }
        if !self.weight.iter().chain(&self.bias).all(|v| v.is_finite()) {
            return Err(Error::data(format!("layer {index} has non-finite parameters")));
        }
        Ok(())
    }
}

/// Feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    pub layers: Vec<DenseLayer>,
}

impl DenseNet {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        let net = Self { layers };
        net.validate()?;
        Ok(net)
    }

    /// ReLU layers `dims[0] → dims[1] → … → dims[n]`.
    pub fn random_relu<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::config("a body needs an input and at least one layer width"));
        }
        let layers = dims
            .windows(2)
            .map(|w| DenseLayer::random(w[0], w[1], Activation::Relu, rng))
            .collect();
        Self::new(layers)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::config("network has no layers"));
        }
        for (i, layer) in self.layers.iter().enumerate() {
            layer.check(i)?;
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].out_dim != pair[1].in_dim {
                return Err(Error::config(format!(
                    "layer {i} outputs {} values but layer {} expects {}",
                    pair[0].out_dim,
                    i + 1,
                    pair[1].in_dim
                )));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    /// Output of the last layer, no intermediate state kept.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut h = x.to_vec();
        for layer in &self.layers {
            let mut z = layer.affine(&h);
            z.iter_mut().for_each(|v| *v = layer.activation.apply(*v));
            h = z;
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_broken_chain() {
        let net = DenseNet::new(vec![
            DenseLayer::zeros(3, 4, Activation::Relu),
            DenseLayer::zeros(5, 2, Activation::Relu),
        ]);
        assert!(matches!(net, Err(Error::Config(_))));
    }

    #[test]
    fn rejects_non_finite_parameters() {
        let mut layer = DenseLayer::zeros(2, 2, Activation::Identity);
        layer.bias[1] = f64::NAN;
        assert!(matches!(DenseNet::new(vec![layer]), Err(Error::Data(_))));
    }

    #[test]
    fn he_uniform_stays_in_bounds() {
        let mut rng = crate::seed::rng(1, &[]);
        let layer = DenseLayer::random(8, 16, Activation::Relu, &mut rng);
        let bound = (6.0f64 / 8.0).sqrt();
        assert!(layer.weight.iter().all(|w| w.abs() < bound));
        assert!(layer.bias.iter().all(|&b| b == 0.0));
    }
}
