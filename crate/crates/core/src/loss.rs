//! Minimax losses for discriminator and generator, with the gradients the
//! trainer feeds back through the discriminator head.

use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GanLosses {
    pub d_loss: f64,
    pub g_loss: f64,
}

fn clamp01<T: Scalar>(x: T) -> f64 {
    x.to_f64().clamp(PROB_EPS, 1.0 - PROB_EPS)
}

fn require_nonempty<T: Scalar>(t: &Tensor<T>, name: &str) -> Result<()> {
    if t.is_empty() {
        return Err(Error::invalid_argument(format!("{name} batch is empty")));
    }
    Ok(())
}

/// Discriminator loss `-mean(log d_real) - mean(log(1 - d_fake))` and the
/// non-saturating generator loss `-mean(log d_fake)`.
pub fn gan_losses<T: Scalar>(d_real: &Tensor<T>, d_fake: &Tensor<T>) -> Result<GanLosses> {
    require_nonempty(d_real, "d_real")?;
    require_nonempty(d_fake, "d_fake")?;
    let mean_log_real = d_real
        .data()
        .iter()
        .map(|&d| clamp01(d).ln())
        .sum::<f64>()
        / d_real.len() as f64;
    let mean_log_one_minus_fake = d_fake
        .data()
        .iter()
        .map(|&d| (1.0 - clamp01(d)).ln())
        .sum::<f64>()
        / d_fake.len() as f64;
    let mean_log_fake = d_fake
        .data()
        .iter()
        .map(|&d| clamp01(d).ln())
        .sum::<f64>()
        / d_fake.len() as f64;
    Ok(GanLosses {
        d_loss: -mean_log_real - mean_log_one_minus_fake,
        g_loss: -mean_log_fake,
    })
}

/// Gradients of the discriminator loss with respect to `d_real` and `d_fake`.
/// The clamp acts as identity in the backward direction so saturated outputs
/// still receive a restoring gradient.
pub fn d_loss_grads<T: Scalar>(
    d_real: &Tensor<T>,
    d_fake: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    require_nonempty(d_real, "d_real")?;
    require_nonempty(d_fake, "d_fake")?;
    let nr = d_real.len() as f64;
    let nf = d_fake.len() as f64;
    let g_real = d_real.map(|d| T::from_f64(-1.0 / (nr * clamp01(d))));
    let g_fake = d_fake.map(|d| T::from_f64(1.0 / (nf * (1.0 - clamp01(d)))));
    Ok((g_real, g_fake))
}

/// Non-saturating generator objective alone, for the generator phase where
/// no real batch is at hand.
pub fn g_loss_value<T: Scalar>(d_fake: &Tensor<T>) -> Result<f64> {
    require_nonempty(d_fake, "d_fake")?;
    Ok(-d_fake.data().iter().map(|&d| clamp01(d).ln()).sum::<f64>() / d_fake.len() as f64)
}

/// Gradient of the non-saturating generator loss with respect to `d_fake`.
pub fn g_loss_grad<T: Scalar>(d_fake: &Tensor<T>) -> Result<Tensor<T>> {
    require_nonempty(d_fake, "d_fake")?;
    let n = d_fake.len() as f64;
    Ok(d_fake.map(|d| T::from_f64(-1.0 / (n * clamp01(d)))))
}
