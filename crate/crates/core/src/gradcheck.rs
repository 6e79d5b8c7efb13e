//! Central-difference gradient oracles, for single networks and for the
//! whole discriminator-generator-measurement pipeline.

use crate::error::Result;
use crate::loss::PROB_EPS;
use crate::measure::{
    apply_measurement, measurement_backward, sample_theta, MeasurementKind, MeasurementSpec,
    ThetaSample,
};
use crate::nn::{Activation, Network};
use crate::rng::Rng;
use crate::tensor::{Dist, Tensor};

/// Differentiable scalar loss over a network output.
pub trait ScalarLoss {
    fn value(&self, y: &Tensor<f64>) -> Result<f64>;
    fn grad(&self, y: &Tensor<f64>) -> Result<Tensor<f64>>;
}

/// Sum of all outputs.
pub struct SumLoss;

impl ScalarLoss for SumLoss {
    fn value(&self, y: &Tensor<f64>) -> Result<f64> {
        Ok(y.data().iter().sum())
    }
    fn grad(&self, y: &Tensor<f64>) -> Result<Tensor<f64>> {
        Tensor::full(y.shape(), 1.0)
    }
}

/// `0.5 ||y - target||^2`.
pub struct QuadraticLoss {
    pub target: Tensor<f64>,
}

impl ScalarLoss for QuadraticLoss {
    fn value(&self, y: &Tensor<f64>) -> Result<f64> {
        Ok(y.sub(&self.target)?
            .data()
            .iter()
            .map(|d| 0.5 * d * d)
            .sum())
    }
    fn grad(&self, y: &Tensor<f64>) -> Result<Tensor<f64>> {
        y.sub(&self.target)
    }
}

/// Relative error `|analytic - numeric| / max(1, |analytic|)`.
fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(1.0)
}

/// Visits one parameter coordinate: reads it, optionally writes it.
fn param_access(net: &mut Network<f64>, flat_idx: usize, write: Option<f64>) -> f64 {
    let mut remaining = flat_idx;
    let mut out = 0.0;
    net.visit_params_mut(&mut |t| {
        if remaining < t.len() {
            out = t.data()[remaining];
            if let Some(v) = write {
                t.data_mut()[remaining] = v;
            }
            remaining = usize::MAX;
        } else if remaining != usize::MAX {
            remaining -= t.len();
        }
    });
    out
}

/// Max relative error between reverse-mode and central-difference gradients
/// over the selected parameter coordinates (all of them when `coords` is
/// `None`).
pub fn finite_diff_gradcheck_coords(
    net: &mut Network<f64>,
    input: &Tensor<f64>,
    loss: &dyn ScalarLoss,
    h: f64,
    coords: Option<&[usize]>,
) -> Result<f64> {
    let y = net.forward_train(input)?;
    let grad_out = loss.grad(&y)?;
    let (grads, _) = net.backward(&grad_out)?;
    let mut analytic = Vec::with_capacity(net.num_params());
    grads.visit(&mut |g| analytic.extend_from_slice(g.data()));

    let all: Vec<usize>;
    let coords = match coords {
        Some(c) => c,
        None => {
            all = (0..net.num_params()).collect();
            &all
        }
    };
    let mut max_rel = 0.0f64;
    for &i in coords {
        let orig = param_access(net, i, None);
        param_access(net, i, Some(orig + h));
        let up = loss.value(&net.forward(input)?)?;
        param_access(net, i, Some(orig - h));
        let down = loss.value(&net.forward(input)?)?;
        param_access(net, i, Some(orig));
        max_rel = max_rel.max(rel_err(analytic[i], (up - down) / (2.0 * h)));
    }
    Ok(max_rel)
}

/// Full-parameter gradient check of a single network.
pub fn finite_diff_gradcheck(
    net: &mut Network<f64>,
    input: &Tensor<f64>,
    loss: &dyn ScalarLoss,
    h: f64,
) -> Result<f64> {
    finite_diff_gradcheck_coords(net, input, loss, h, None)
}

/// One randomly built end-to-end instance: noise through g2, a fixed
/// measurement in the hidden space, g1, then the discriminator, scored by
/// the generator's non-saturating loss.
pub struct Pipeline {
    pub g2: Network<f64>,
    pub g1: Network<f64>,
    pub disc: Network<f64>,
    pub theta: ThetaSample<f64>,
    pub hidden_shape: Vec<usize>,
    pub z: Tensor<f64>,
}

impl Pipeline {
    /// Small random instance; `seed` selects sizes, weights, Θ and z.
    /// Masking, extraction and identity measurements are all exercised.
    pub fn random(seed: u64) -> Result<Pipeline> {
        let mut rng = Rng::new(seed.wrapping_mul(0x9e37_79b9).wrapping_add(1));
        let noise_dim = 4 + rng.uniform_usize(5);
        let ch = 1 + rng.uniform_usize(3);
        let hh = 3 + rng.uniform_usize(3);
        let hw = 3 + rng.uniform_usize(3);
        let hidden_shape = vec![ch, hh, hw];
        let hidden_len = ch * hh * hw;
        let out_side = 4 + rng.uniform_usize(3);
        let batch = 2 + rng.uniform_usize(3);

        let spec = match rng.uniform_usize(5) {
            0 => MeasurementSpec {
                p: 0.3 + 0.4 * rng.uniform01(),
                ..MeasurementSpec::new(MeasurementKind::BlockPixel)
            },
            1 => MeasurementSpec {
                k: 2,
                ..MeasurementSpec::new(MeasurementKind::BlockPatch)
            },
            2 => MeasurementSpec {
                k: 2,
                ..MeasurementSpec::new(MeasurementKind::KeepPatch)
            },
            3 => MeasurementSpec {
                k: 2,
                ..MeasurementSpec::new(MeasurementKind::ExtractPatch)
            },
            _ => MeasurementSpec::new(MeasurementKind::Identity),
        };
        let theta = sample_theta::<f64>(&spec, &hidden_shape, &mut rng)?;
        let g1_in = match &theta {
            ThetaSample::ExtractPatch { k, .. } => ch * k * k,
            _ => hidden_len,
        };

        let mid = 8 + rng.uniform_usize(9);
        let g2 = Network::new(
            &[noise_dim, mid, hidden_len],
            &[Activation::LeakyRelu, Activation::Identity],
            &mut rng,
        )?;
        let g1 = Network::new(
            &[g1_in, mid, out_side * out_side],
            &[Activation::LeakyRelu, Activation::Sigmoid],
            &mut rng,
        )?;
        let disc = Network::new(
            &[out_side * out_side, mid, 1],
            &[Activation::LeakyRelu, Activation::Sigmoid],
            &mut rng,
        )?;
        let z = Tensor::sample(Dist::StandardNormal, &[batch, noise_dim], &mut rng)?;
        Ok(Pipeline {
            g2,
            g1,
            disc,
            theta,
            hidden_shape,
            z,
        })
    }

    fn measure_rows(&self, hidden: &Tensor<f64>) -> Result<Tensor<f64>> {
        let batch = hidden.shape()[0];
        let mut rows: Option<Tensor<f64>> = None;
        for b in 0..batch {
            let start = b * hidden.shape()[1];
            let item = Tensor::from_vec(
                &self.hidden_shape,
                hidden.data()[start..start + hidden.shape()[1]].to_vec(),
            )?;
            let measured = apply_measurement(&self.theta, &item)?;
            let m = measured.len();
            let out = rows.get_or_insert_with(|| Tensor::zeros(&[batch, m]).unwrap());
            out.data_mut()[b * m..(b + 1) * m].copy_from_slice(measured.data());
        }
        Ok(rows.unwrap())
    }

    /// Generator loss `-mean(log D(G1(f_Θ(G2(z)))))` without recording.
    pub fn loss(&self) -> Result<f64> {
        let hidden = self.g2.forward(&self.z)?;
        let measured = self.measure_rows(&hidden)?;
        let img = self.g1.forward(&measured)?;
        let d = self.disc.forward(&img)?;
        let n = d.len() as f64;
        Ok(-d
            .data()
            .iter()
            .map(|v| v.clamp(PROB_EPS, 1.0 - PROB_EPS).ln())
            .sum::<f64>()
            / n)
    }

    /// Analytic gradients for every parameter of disc, g1 and g2, flattened
    /// in that order.
    pub fn analytic_grads(&mut self) -> Result<Vec<f64>> {
        let hidden = self.g2.forward_train(&self.z)?;
        let measured = self.measure_rows(&hidden)?;
        let img = self.g1.forward_train(&measured)?;
        let d = self.disc.forward_train(&img)?;

        let n = d.len() as f64;
        let grad_d = d.map(|v| -1.0 / (n * v.clamp(PROB_EPS, 1.0 - PROB_EPS)));
        let (disc_grads, grad_img) = self.disc.backward(&grad_d)?;
        let (g1_grads, grad_measured) = self.g1.backward(&grad_img)?;

        let batch = hidden.shape()[0];
        let hidden_len = hidden.shape()[1];
        let m = grad_measured.shape()[1];
        let mut grad_hidden = Tensor::zeros(&[batch, hidden_len])?;
        for b in 0..batch {
            let gm = Tensor::from_vec(
                &measured_item_shape(&self.theta, &self.hidden_shape)?,
                grad_measured.data()[b * m..(b + 1) * m].to_vec(),
            )?;
            let gh = measurement_backward(&self.theta, &gm, &self.hidden_shape)?;
            grad_hidden.data_mut()[b * hidden_len..(b + 1) * hidden_len]
                .copy_from_slice(gh.data());
        }
        let (g2_grads, _) = self.g2.backward(&grad_hidden)?;

        let mut flat = Vec::new();
        disc_grads.visit(&mut |g| flat.extend_from_slice(g.data()));
        g1_grads.visit(&mut |g| flat.extend_from_slice(g.data()));
        g2_grads.visit(&mut |g| flat.extend_from_slice(g.data()));
        Ok(flat)
    }

    fn with_net<R>(&mut self, which: usize, f: impl FnOnce(&mut Network<f64>) -> R) -> R {
        match which {
            0 => f(&mut self.disc),
            1 => f(&mut self.g1),
            _ => f(&mut self.g2),
        }
    }

    pub fn num_params(&self) -> usize {
        self.disc.num_params() + self.g1.num_params() + self.g2.num_params()
    }

    /// Max relative error over every parameter of all three networks.
    pub fn gradcheck(&mut self, h: f64) -> Result<f64> {
        let analytic = self.analytic_grads()?;
        let mut max_rel = 0.0f64;
        let mut offset = 0;
        for which in 0..3 {
            let count = self.with_net(which, |n| n.num_params());
            for i in 0..count {
                let orig = self.with_net(which, |n| param_access(n, i, None));
                self.with_net(which, |n| param_access(n, i, Some(orig + h)));
                let up = self.loss()?;
                self.with_net(which, |n| param_access(n, i, Some(orig - h)));
                let down = self.loss()?;
                self.with_net(which, |n| param_access(n, i, Some(orig)));
                max_rel = max_rel.max(rel_err(analytic[offset + i], (up - down) / (2.0 * h)));
            }
            offset += count;
        }
        Ok(max_rel)
    }
}

/// Output shape of one measured item.
fn measured_item_shape(theta: &ThetaSample<f64>, input_shape: &[usize]) -> Result<Vec<usize>> {
    Ok(match theta {
        ThetaSample::ExtractPatch { k, .. } => {
            if input_shape.len() == 3 {
                vec![input_shape[0], *k, *k]
            } else {
                vec![*k, *k]
            }
        }
        ThetaSample::Projection(p) => vec![p.shape()[0]],
        _ => input_shape.to_vec(),
    })
}

/// Runs `trials` random pipeline instances and returns the worst relative
/// gradient error seen.
pub fn pipeline_gradcheck(trials: usize, h: f64, seed: u64) -> Result<f64> {
    let mut worst = 0.0f64;
    for t in 0..trials {
        let mut p = Pipeline::random(seed.wrapping_add(t as u64))?;
        worst = worst.max(p.gradcheck(h)?);
    }
    Ok(worst)
}
