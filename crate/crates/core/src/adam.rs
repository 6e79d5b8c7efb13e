//! Adam with bias correction, tracking first/second moments per parameter
//! tensor in the network's fixed traversal order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Network, NetworkGrads};
use crate::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Moment estimates for one parameter collection plus the shared step count.
#[derive(Debug, Clone)]
pub struct AdamState<T = f32> {
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn for_network(net: &Network<T>) -> Result<Self> {
        let mut m = Vec::new();
        net.visit_params(&mut |p| m.push(p.shape().to_vec()));
        let m = m
            .iter()
            .map(|s| Tensor::zeros(s))
            .collect::<Result<Vec<_>>>()?;
        let v = m.clone();
        Ok(AdamState { m, v, t: 0 })
    }

    pub fn from_parts(m: Vec<Tensor<T>>, v: Vec<Tensor<T>>, t: u64) -> Result<Self> {
        if m.len() != v.len() {
            return Err(Error::invalid_shape(
                "first/second moment counts differ",
            ));
        }
        for (a, b) in m.iter().zip(&v) {
            if a.shape() != b.shape() {
                return Err(Error::invalid_shape(
                    "first/second moment shapes differ",
                ));
            }
        }
        Ok(AdamState { m, v, t })
    }

    pub fn moments(&self) -> (&[Tensor<T>], &[Tensor<T>]) {
        (&self.m, &self.v)
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update over all network parameters.
    pub fn step(
        &mut self,
        cfg: &AdamConfig,
        net: &mut Network<T>,
        grads: &NetworkGrads<T>,
    ) -> Result<()> {
        let mut flat_grads = Vec::new();
        grads.visit(&mut |g| flat_grads.push(g.clone()));
        if flat_grads.len() != self.m.len() {
            return Err(Error::invalid_shape(format!(
                "optimizer tracks {} tensors, gradients provide {}",
                self.m.len(),
                flat_grads.len()
            )));
        }
        self.t += 1;
        let c1 = 1.0 / (1.0 - cfg.beta1.powi(self.t as i32));
        let c2 = 1.0 / (1.0 - cfg.beta2.powi(self.t as i32));
        let mut idx = 0;
        let mut status = Ok(());
        net.visit_params_mut(&mut |p| {
            if status.is_err() {
                return;
            }
            let g = &flat_grads[idx];
            if g.shape() != p.shape() {
                status = Err(Error::invalid_shape(format!(
                    "gradient shape {:?} does not match parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
                return;
            }
            update_tensor(cfg, c1, c2, p, g, &mut self.m[idx], &mut self.v[idx]);
            idx += 1;
        });
        status
    }
}

fn update_tensor<T: Scalar>(
    cfg: &AdamConfig,
    c1: f64,
    c2: f64,
    p: &mut Tensor<T>,
    g: &Tensor<T>,
    m: &mut Tensor<T>,
    v: &mut Tensor<T>,
) {
    let b1 = T::from_f64(cfg.beta1);
    let b2 = T::from_f64(cfg.beta2);
    let one = T::one();
    let lr = T::from_f64(cfg.lr);
    let eps = T::from_f64(cfg.eps);
    let c1 = T::from_f64(c1);
    let c2 = T::from_f64(c2);
    for (((p, &g), m), v) in p
        .data_mut()
        .iter_mut()
        .zip(g.data())
        .zip(m.data_mut().iter_mut())
        .zip(v.data_mut().iter_mut())
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m * c1;
        let v_hat = *v * c2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
}
