//! Dense feed-forward networks with recorded forward passes and exact
//! reverse-mode gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::{matmul, matmul_nt, matmul_tn, Scalar, Tensor};

/// Negative-side slope of the leaky ReLU.
pub const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    LeakyRelu,
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::LeakyRelu => {
                if x >= T::zero() {
                    x
                } else {
                    x * T::from_f64(LEAKY_SLOPE)
                }
            }
            Activation::Sigmoid => T::one() / (T::one() + (-x).exp()),
            Activation::Tanh => x.tanh(),
        }
    }

    /// Derivative expressed through the activation's own output.
    pub fn grad_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::LeakyRelu => {
                if y >= T::zero() {
                    T::one()
                } else {
                    T::from_f64(LEAKY_SLOPE)
                }
            }
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
        }
    }
}

#[derive(Debug, Clone)]
struct LayerCache<T> {
    input: Tensor<T>,
    output: Tensor<T>,
}

/// Fully connected layer computing `activation(x · Wᵀ + b)` row-wise.
#[derive(Debug, Clone)]
pub struct DenseLayer<T = f32> {
    weight: Tensor<T>,
    bias: Tensor<T>,
    activation: Activation,
    cache: Option<LayerCache<T>>,
}

impl<T: Scalar> DenseLayer<T> {
    /// Weights uniform in `[-s, s]` with `s = sqrt(6 / (in + out))`, zero bias.
    pub fn new(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut Rng) -> Result<Self> {
        let s = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let mut weight = Tensor::zeros(&[out_dim, in_dim])?;
        for w in weight.data_mut() {
            *w = T::from_f64((rng.uniform01() * 2.0 - 1.0) * s);
        }
        Ok(DenseLayer {
            weight,
            bias: Tensor::zeros(&[out_dim])?,
            activation,
            cache: None,
        })
    }

    pub fn from_params(weight: Tensor<T>, bias: Tensor<T>, activation: Activation) -> Result<Self> {
        if weight.shape().len() != 2 {
            return Err(Error::invalid_shape(format!(
                "dense weight must be 2-D, got {:?}",
                weight.shape()
            )));
        }
        if bias.shape() != [weight.shape()[0]] {
            return Err(Error::invalid_shape(format!(
                "bias shape {:?} does not match weight {:?}",
                bias.shape(),
                weight.shape()
            )));
        }
        Ok(DenseLayer {
            weight,
            bias,
            activation,
            cache: None,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight(&self) -> &Tensor<T> {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor<T> {
        &self.bias
    }

    pub fn weight_mut(&mut self) -> &mut Tensor<T> {
        &mut self.weight
    }

    pub fn bias_mut(&mut self) -> &mut Tensor<T> {
        &mut self.bias
    }

    fn affine(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        if x.shape().len() != 2 || x.shape()[1] != self.in_dim() {
            return Err(Error::invalid_shape(format!(
                "dense layer expects [batch, {}], got {:?}",
                self.in_dim(),
                x.shape()
            )));
        }
        let mut z = matmul_nt(x, &self.weight)?;
        let out = self.out_dim();
        for row in z.data_mut().chunks_mut(out) {
            for (v, b) in row.iter_mut().zip(self.bias.data()) {
                *v = *v + *b;
            }
        }
        Ok(z.map(|v| self.activation.apply(v)))
    }

    /// Forward pass without recording; for evaluation and sampling.
    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        self.affine(x)
    }

    /// Forward pass that records input and output for a later `backward`.
    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let y = self.affine(x)?;
        self.cache = Some(LayerCache {
            input: x.clone(),
            output: y.clone(),
        });
        Ok(y)
    }

    /// Consumes the recorded pass; returns parameter gradients and the
    /// gradient with respect to the layer input.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<(LayerGrads<T>, Tensor<T>)> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::State("backward called without a recorded forward pass".into())
        })?;
        if grad_out.shape() != cache.output.shape() {
            return Err(Error::invalid_shape(format!(
                "output gradient shape {:?} does not match recorded output {:?}",
                grad_out.shape(),
                cache.output.shape()
            )));
        }
        let dz = grad_out.zip(&cache.output, |g, y| g * self.activation.grad_from_output(y))?;
        let d_weight = matmul_tn(&dz, &cache.input)?;
        let mut d_bias = Tensor::zeros(&[self.out_dim()])?;
        for row in dz.data().chunks(self.out_dim()) {
            for (acc, v) in d_bias.data_mut().iter_mut().zip(row) {
                *acc = *acc + *v;
            }
        }
        let d_input = matmul(&dz, &self.weight)?;
        Ok((
            LayerGrads {
                weight: d_weight,
                bias: d_bias,
            },
            d_input,
        ))
    }
}

/// Gradients for one layer's parameters, same shapes as the parameters.
#[derive(Debug, Clone)]
pub struct LayerGrads<T = f32> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Parameter gradients for a whole network, in layer order.
#[derive(Debug, Clone)]
pub struct NetworkGrads<T = f32> {
    pub layers: Vec<LayerGrads<T>>,
}

impl<T: Scalar> NetworkGrads<T> {
    pub fn zeros_like(net: &Network<T>) -> Result<Self> {
        let layers = net
            .layers
            .iter()
            .map(|l| {
                Ok(LayerGrads {
                    weight: Tensor::zeros(l.weight.shape())?,
                    bias: Tensor::zeros(l.bias.shape())?,
                })
            })
            .collect::<Result<_>>()?;
        Ok(NetworkGrads { layers })
    }

    pub fn add_assign(&mut self, other: &Self) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::invalid_shape(
                "gradient accumulation across different layer counts",
            ));
        }
        for (a, b) in self.layers.iter_mut().zip(&other.layers) {
            a.weight = a.weight.add(&b.weight)?;
            a.bias = a.bias.add(&b.bias)?;
        }
        Ok(())
    }

    /// Visits gradients in the fixed traversal order: per layer, weight then bias.
    pub fn visit(&self, f: &mut impl FnMut(&Tensor<T>)) {
        for l in &self.layers {
            f(&l.weight);
            f(&l.bias);
        }
    }
}

/// Sequence of dense layers applied in order.
#[derive(Debug, Clone)]
pub struct Network<T = f32> {
    layers: Vec<DenseLayer<T>>,
}

impl<T: Scalar> Network<T> {
    /// `dims` lists layer widths including input; one activation per layer.
    pub fn new(dims: &[usize], activations: &[Activation], rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 || activations.len() != dims.len() - 1 {
            return Err(Error::invalid_argument(format!(
                "network needs n+1 dims for n activations, got {} dims and {} activations",
                dims.len(),
                activations.len()
            )));
        }
        let layers = dims
            .windows(2)
            .zip(activations)
            .map(|(w, &a)| DenseLayer::new(w[0], w[1], a, rng))
            .collect::<Result<_>>()?;
        Ok(Network { layers })
    }

    pub fn from_layers(layers: Vec<DenseLayer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid_argument("network with no layers"));
        }
        for pair in layers.windows(2) {
            if pair[0].out_dim() != pair[1].in_dim() {
                return Err(Error::invalid_shape(format!(
                    "layer output {} does not feed layer input {}",
                    pair[0].out_dim(),
                    pair[1].in_dim()
                )));
            }
        }
        Ok(Network { layers })
    }

    pub fn layers(&self) -> &[DenseLayer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer<T>] {
        &mut self.layers
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weight.len() + l.bias.len())
            .sum()
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for l in &self.layers {
            h = l.forward(&h)?;
        }
        Ok(h)
    }

    pub fn forward_train(&mut self, x: &Tensor<T>) -> Result<Tensor<T>> {
        let mut h = x.clone();
        for l in &mut self.layers {
            h = l.forward_train(&h)?;
        }
        Ok(h)
    }

    /// Reverse-mode gradients of the last recorded `forward_train`.
    pub fn backward(&mut self, grad_out: &Tensor<T>) -> Result<(NetworkGrads<T>, Tensor<T>)> {
        let mut grad = grad_out.clone();
        let mut layers = Vec::with_capacity(self.layers.len());
        for l in self.layers.iter_mut().rev() {
            let (g, d_in) = l.backward(&grad)?;
            layers.push(g);
            grad = d_in;
        }
        layers.reverse();
        Ok((NetworkGrads { layers }, grad))
    }

    /// Visits parameters in the fixed traversal order: per layer, weight then bias.
    pub fn visit_params(&self, f: &mut impl FnMut(&Tensor<T>)) {
        for l in &self.layers {
            f(&l.weight);
            f(&l.bias);
        }
    }

    pub fn visit_params_mut(&mut self, f: &mut impl FnMut(&mut Tensor<T>)) {
        for l in &mut self.layers {
            f(&mut l.weight);
            f(&mut l.bias);
        }
    }

    /// Convert parameters to another precision; recorded passes are dropped.
    pub fn cast<U: Scalar>(&self) -> Result<Network<U>> {
        let layers = self
            .layers
            .iter()
            .map(|l| DenseLayer::from_params(l.weight.cast(), l.bias.cast(), l.activation))
            .collect::<Result<_>>()?;
        Ok(Network { layers })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_layer_passes_input_through() {
        let w = Tensor::<f64>::eye(3).unwrap();
        let b = Tensor::<f64>::zeros(&[3]).unwrap();
        let layer = DenseLayer::from_params(w, b, Activation::Identity).unwrap();
        let x = Tensor::from_vec(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, -1.0]).unwrap();
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.data(), x.data());
    }

    #[test]
    fn zero_weight_layer_is_constant_sigmoid() {
        let w = Tensor::<f64>::zeros(&[2, 3]).unwrap();
        let b = Tensor::from_vec(&[2], vec![1.5, -0.5]).unwrap();
        let layer = DenseLayer::from_params(w, b, Activation::Sigmoid).unwrap();
        let x = Tensor::from_vec(&[2, 3], vec![9.0; 6]).unwrap();
        let y = layer.forward(&x).unwrap();
        let s = |c: f64| 1.0 / (1.0 + (-c).exp());
        for row in y.data().chunks(2) {
            assert!((row[0] - s(1.5)).abs() < 1e-15);
            assert!((row[1] - s(-0.5)).abs() < 1e-15);
        }
    }

    #[test]
    fn leaky_relu_slope() {
        let w = Tensor::<f64>::eye(2).unwrap();
        let b = Tensor::<f64>::zeros(&[2]).unwrap();
        let layer = DenseLayer::from_params(w, b, Activation::LeakyRelu).unwrap();
        let x = Tensor::from_vec(&[1, 2], vec![-1.0, 2.0]).unwrap();
        let y = layer.forward(&x).unwrap();
        assert_eq!(y.data(), &[-0.2, 2.0]);
    }

    #[test]
    fn forward_rejects_bad_input_width() {
        let mut rng = Rng::new(1);
        let layer = DenseLayer::<f32>::new(4, 2, Activation::Identity, &mut rng).unwrap();
        let x = Tensor::<f32>::zeros(&[1, 3]).unwrap();
        assert!(matches!(layer.forward(&x), Err(Error::InvalidShape(_))));
    }

    #[test]
    fn sum_loss_bias_gradient_is_all_ones() {
        let w = Tensor::<f64>::eye(3).unwrap();
        let b = Tensor::<f64>::zeros(&[3]).unwrap();
        let mut net = Network::from_layers(vec![DenseLayer::from_params(
            w,
            b,
            Activation::Identity,
        )
        .unwrap()])
        .unwrap();
        let x = Tensor::from_vec(&[1, 3], vec![0.3, -0.7, 2.0]).unwrap();
        net.forward_train(&x).unwrap();
        // d(sum)/d(output) = 1 everywhere.
        let ones = Tensor::full(&[1, 3], 1.0).unwrap();
        let (grads, d_input) = net.backward(&ones).unwrap();
        assert_eq!(grads.layers[0].bias.data(), &[1.0, 1.0, 1.0]);
        assert_eq!(d_input.data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn backward_without_forward_is_a_state_error() {
        let mut rng = Rng::new(2);
        let mut net = Network::<f64>::new(
            &[3, 2],
            &[Activation::Identity],
            &mut rng,
        )
        .unwrap();
        let g = Tensor::<f64>::zeros(&[1, 2]).unwrap();
        assert!(matches!(net.backward(&g), Err(Error::State(_))));

        // A consumed pass cannot be replayed either.
        let x = Tensor::<f64>::zeros(&[1, 3]).unwrap();
        net.forward_train(&x).unwrap();
        net.backward(&g).unwrap();
        assert!(matches!(net.backward(&g), Err(Error::State(_))));
    }

    #[test]
    fn three_layer_backward_matches_finite_differences() {
        let mut rng = Rng::new(11);
        let mut net = Network::<f64>::new(
            &[4, 6, 5, 3],
            &[Activation::LeakyRelu, Activation::Tanh, Activation::Sigmoid],
            &mut rng,
        )
        .unwrap();
        let x = Tensor::<f64>::sample(crate::tensor::Dist::StandardNormal, &[2, 4], &mut rng)
            .unwrap();

        // Scalar loss: sum of outputs. Analytic gradients first.
        let y = net.forward_train(&x).unwrap();
        let ones = Tensor::full(y.shape(), 1.0).unwrap();
        let (grads, _) = net.backward(&ones).unwrap();

        let loss = |net: &Network<f64>, x: &Tensor<f64>| -> f64 {
            net.forward(x).unwrap().data().iter().sum()
        };
        let h = 1e-6;
        let mut max_rel = 0.0f64;
        for li in 0..net.layers().len() {
            for which in 0..2 {
                let n = if which == 0 {
                    net.layers()[li].weight().len()
                } else {
                    net.layers()[li].bias().len()
                };
                for idx in 0..n {
                    let read = |net: &mut Network<f64>, v: Option<f64>| -> f64 {
                        let t = if which == 0 {
                            net.layers_mut()[li].weight_mut()
                        } else {
                            net.layers_mut()[li].bias_mut()
                        };
                        let old = t.data()[idx];
                        if let Some(v) = v {
                            t.data_mut()[idx] = v;
                        }
                        old
                    };
                    let orig = read(&mut net, None);
                    read(&mut net, Some(orig + h));
                    let up = loss(&net, &x);
                    read(&mut net, Some(orig - h));
                    let down = loss(&net, &x);
                    read(&mut net, Some(orig));
                    let numeric = (up - down) / (2.0 * h);
                    let analytic = if which == 0 {
                        grads.layers[li].weight.data()[idx]
                    } else {
                        grads.layers[li].bias.data()[idx]
                    };
                    let rel = (analytic - numeric).abs() / analytic.abs().max(1.0);
                    max_rel = max_rel.max(rel);
                }
            }
        }
        assert!(max_rel < 1e-4, "max relative error {max_rel}");
    }

    #[test]
    fn xavier_init_is_bounded_and_biases_zero() {
        let mut rng = Rng::new(3);
        let layer = DenseLayer::<f64>::new(8, 4, Activation::LeakyRelu, &mut rng).unwrap();
        let s = (6.0 / 12.0f64).sqrt();
        assert!(layer.weight().data().iter().all(|w| w.abs() <= s));
        assert!(layer.bias().data().iter().all(|&b| b == 0.0));
    }
}
