//! Minimax training loop: a split generator with an optional measurement
//! module acting in its hidden space, a discriminator that only ever sees
//! measured data, and the evaluation and sampling entry points.

use serde::{Deserialize, Serialize};

use crate::adam::{AdamConfig, AdamState};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::loss::{d_loss_grads, g_loss_grad, g_loss_value, gan_losses, GanLosses};
use crate::measure::{
    measured_shape, sample_theta, MeasurementKind, MeasurementSpec, ThetaSample,
};
use crate::metrics::{mmd2_unbiased, per_pixel_mean_error, stack_rows, Metrics};
use crate::nn::{Activation, Network, NetworkGrads};
use crate::rng::Rng;
use crate::tensor::{Dist, Scalar, Tensor};

/// Where the measurement module sits on the generator's training branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// No measurement on the fake branch; the generator imitates the
    /// measured data directly.
    Baseline,
    /// Measurement applied to the generated image.
    AmbientOutput,
    /// Measurement applied to the hidden tensor between g2 and g1.
    AmbientHidden,
    /// Both of the above.
    AmbientBoth,
}

impl Mode {
    pub fn uses_hidden(self) -> bool {
        matches!(self, Mode::AmbientHidden | Mode::AmbientBoth)
    }

    pub fn uses_output(self) -> bool {
        matches!(self, Mode::AmbientOutput | Mode::AmbientBoth)
    }
}

fn default_noise_dim() -> usize {
    64
}
fn default_side() -> usize {
    16
}
fn default_hidden_shape() -> [usize; 3] {
    [8, 8, 8]
}
fn default_dataset_spec() -> MeasurementSpec {
    MeasurementSpec::new(MeasurementKind::Identity)
}
fn default_dataset_size() -> usize {
    8000
}
fn default_lr() -> f64 {
    2e-4
}
fn default_beta1() -> f64 {
    0.5
}
fn default_beta2() -> f64 {
    0.999
}
fn default_batch_size() -> usize {
    64
}
fn default_d_steps() -> usize {
    1
}
fn default_eval_every() -> u64 {
    500
}

/// Everything a run needs. `seed`, `mode`, and `steps` are required; the
/// rest default to the stock rectangles setup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    #[serde(default = "default_noise_dim")]
    pub noise_dim: usize,
    #[serde(default = "default_side")]
    pub height: usize,
    #[serde(default = "default_side")]
    pub width: usize,
    #[serde(default = "default_hidden_shape")]
    pub hidden_shape: [usize; 3],
    pub mode: Mode,
    #[serde(default)]
    pub spec_output: Option<MeasurementSpec>,
    #[serde(default)]
    pub spec_hidden: Option<MeasurementSpec>,
    /// Measurement that produced the training dataset.
    #[serde(default = "default_dataset_spec")]
    pub dataset_spec: MeasurementSpec,
    #[serde(default = "default_dataset_size")]
    pub dataset_size: usize,
    /// When set, load this IDX file instead of synthesizing rectangles.
    #[serde(default)]
    pub idx_path: Option<String>,
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    pub steps: u64,
    #[serde(default = "default_d_steps")]
    pub d_steps_per_g_step: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: u64,
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: 1e-8,
        }
    }

    pub fn hidden_len(&self) -> usize {
        self.hidden_shape.iter().product()
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self) -> Result<()> {
        if self.noise_dim == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::config(
                "noise_dim and image sides must be positive",
            ));
        }
        if self.hidden_shape.contains(&0) {
            return Err(Error::config("hidden_shape extents must be positive"));
        }
        if self.steps == 0 {
            return Err(Error::config("steps must be at least 1"));
        }
        if self.batch_size == 0 || self.d_steps_per_g_step == 0 || self.eval_every == 0 {
            return Err(Error::config(
                "batch_size, d_steps_per_g_step, and eval_every must be positive",
            ));
        }
        if !self.lr.is_finite() || self.lr < 0.0 {
            return Err(Error::config("lr must be finite and non-negative"));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(Error::config(format!("{name} must lie in [0, 1)")));
            }
        }
        if self.mode.uses_hidden() != self.spec_hidden.is_some() {
            return Err(Error::config(format!(
                "mode {:?} {} spec_hidden",
                self.mode,
                if self.mode.uses_hidden() {
                    "requires"
                } else {
                    "does not accept"
                }
            )));
        }
        if self.mode.uses_output() != self.spec_output.is_some() {
            return Err(Error::config(format!(
                "mode {:?} {} spec_output",
                self.mode,
                if self.mode.uses_output() {
                    "requires"
                } else {
                    "does not accept"
                }
            )));
        }
        let image_shape = [self.height, self.width];
        if let Some(spec) = &self.spec_hidden {
            spec.validate(&self.hidden_shape)?;
            if spec.kind == MeasurementKind::GaussianProjection && spec.m != self.hidden_len() {
                return Err(Error::config(
                    "a hidden gaussian_projection must preserve the flattened hidden size \
                     so the measurement-free sampling path stays well-typed",
                ));
            }
        }
        if let Some(spec) = &self.spec_output {
            spec.validate(&image_shape)?;
        }
        self.dataset_spec.validate(&image_shape)?;
        // Real and fake branches must hand the discriminator the same width.
        let real_len = measured_len(&self.dataset_spec, &image_shape)?;
        let fake_len = self.discriminator_input_len()?;
        if real_len != fake_len {
            return Err(Error::config(format!(
                "the discriminator would receive {real_len} values from the dataset but \
                 {fake_len} from the generator; dataset_spec and mode/spec_output disagree"
            )));
        }
        Ok(())
    }

    /// Flattened width of the samples the discriminator consumes.
    pub fn discriminator_input_len(&self) -> Result<usize> {
        let image_shape = [self.height, self.width];
        match &self.spec_output {
            Some(spec) if self.mode.uses_output() => measured_len(spec, &image_shape),
            _ => Ok(self.pixels()),
        }
    }

    /// Draws the per-element measurement parameters for one batch: hidden
    /// draws first, then output draws.
    pub fn sample_thetas<T: Scalar>(&self, batch: usize, rng: &mut Rng) -> Result<BatchThetas<T>> {
        let mut hidden = Vec::new();
        if self.mode.uses_hidden() {
            let spec = self
                .spec_hidden
                .as_ref()
                .ok_or_else(|| Error::config("mode requires spec_hidden"))?;
            for _ in 0..batch {
                hidden.push(sample_theta(spec, &self.hidden_shape, rng)?);
            }
        }
        let mut output = Vec::new();
        if self.mode.uses_output() {
            let spec = self
                .spec_output
                .as_ref()
                .ok_or_else(|| Error::config("mode requires spec_output"))?;
            for _ in 0..batch {
                output.push(sample_theta(spec, &[self.height, self.width], rng)?);
            }
        }
        Ok(BatchThetas { hidden, output })
    }
}

fn measured_len(spec: &MeasurementSpec, input_shape: &[usize]) -> Result<usize> {
    Ok(measured_shape(spec, input_shape)?.iter().product())
}

/// Per-batch-element measurement draws for one generator pass. Empty lists
/// mean the corresponding site is unused in the current mode.
#[derive(Debug, Clone)]
pub struct BatchThetas<T = f32> {
    pub hidden: Vec<ThetaSample<T>>,
    pub output: Vec<ThetaSample<T>>,
}

impl<T> BatchThetas<T> {
    pub fn none() -> Self {
        BatchThetas {
            hidden: Vec::new(),
            output: Vec::new(),
        }
    }
}

/// Split generator: g2 maps noise to a hidden tensor, an optional
/// measurement module acts there, and g1 decodes to image space.
#[derive(Debug, Clone)]
pub struct GeneratorSplit<T: Scalar = f32> {
    g2: Network<T>,
    hidden_shape: [usize; 3],
    hidden_spec: Option<MeasurementSpec>,
    g1: Network<T>,
    image_shape: [usize; 2],
}

impl<T: Scalar> GeneratorSplit<T> {
    pub fn new(
        g2: Network<T>,
        hidden_shape: [usize; 3],
        hidden_spec: Option<MeasurementSpec>,
        g1: Network<T>,
        image_shape: [usize; 2],
    ) -> Result<Self> {
        let hidden_len: usize = hidden_shape.iter().product();
        if hidden_len == 0 || image_shape.contains(&0) {
            return Err(Error::config("generator shapes must be positive"));
        }
        if g2.out_dim() != hidden_len {
            return Err(Error::config(format!(
                "g2 produces {} values but the hidden tensor {:?} holds {hidden_len}",
                g2.out_dim(),
                hidden_shape
            )));
        }
        let expected_g1_in = match &hidden_spec {
            Some(spec) => measured_len(spec, &hidden_shape)?,
            None => hidden_len,
        };
        if g1.in_dim() != expected_g1_in {
            return Err(Error::config(format!(
                "g1 expects {} inputs but the (measured) hidden tensor holds {expected_g1_in}",
                g1.in_dim()
            )));
        }
        let pixels = image_shape[0] * image_shape[1];
        if g1.out_dim() != pixels {
            return Err(Error::config(format!(
                "g1 produces {} values but the image {:?} holds {pixels}",
                g1.out_dim(),
                image_shape
            )));
        }
        Ok(GeneratorSplit {
            g2,
            hidden_shape,
            hidden_spec,
            g1,
            image_shape,
        })
    }

    pub fn g2(&self) -> &Network<T> {
        &self.g2
    }

    pub fn g1(&self) -> &Network<T> {
        &self.g1
    }

    pub fn g2_mut(&mut self) -> &mut Network<T> {
        &mut self.g2
    }

    pub fn g1_mut(&mut self) -> &mut Network<T> {
        &mut self.g1
    }

    pub fn hidden_shape(&self) -> [usize; 3] {
        self.hidden_shape
    }

    pub fn hidden_spec(&self) -> Option<&MeasurementSpec> {
        self.hidden_spec.as_ref()
    }

    pub fn image_shape(&self) -> [usize; 2] {
        self.image_shape
    }

    pub fn noise_dim(&self) -> usize {
        self.g2.in_dim()
    }

    /// Measurement-free samples, one row per noise row. With an
    /// extract-patch hidden module there is no measurement-free pathway of
    /// matching shape, so this draws a fresh patch position per element;
    /// the stochastic composition is the generator.
    pub fn clean_forward(&self, z: &Tensor<T>, rng: &mut Rng) -> Result<Tensor<T>> {
        let hidden = self.g2.forward(z)?;
        self.decode_clean(&hidden, rng)
    }

    fn decode_clean(&self, hidden: &Tensor<T>, rng: &mut Rng) -> Result<Tensor<T>> {
        match &self.hidden_spec {
            Some(spec) if spec.kind == MeasurementKind::ExtractPatch => {
                let b = hidden.shape()[0];
                let mut fresh = Vec::with_capacity(b);
                for _ in 0..b {
                    fresh.push(sample_theta::<T>(spec, &self.hidden_shape, rng)?);
                }
                self.g1
                    .forward(&measure_rows(hidden, &self.hidden_shape, &fresh)?)
            }
            _ => self.g1.forward(hidden),
        }
    }

    pub fn cast<U: Scalar>(&self) -> Result<GeneratorSplit<U>> {
        Ok(GeneratorSplit {
            g2: self.g2.cast()?,
            hidden_shape: self.hidden_shape,
            hidden_spec: self.hidden_spec.clone(),
            g1: self.g1.cast()?,
            image_shape: self.image_shape,
        })
    }
}

/// Applies one Θ per row of a `[batch, features]` matrix; each row is
/// viewed as `item_shape` and the measured outputs are flattened back.
fn measure_rows<T: Scalar>(
    rows: &Tensor<T>,
    item_shape: &[usize],
    thetas: &[ThetaSample<T>],
) -> Result<Tensor<T>> {
    let d: usize = item_shape.iter().product();
    if rows.shape().len() != 2 || rows.shape()[1] != d {
        return Err(Error::invalid_shape(format!(
            "expected [batch, {d}] rows for items {:?}, got {:?}",
            item_shape,
            rows.shape()
        )));
    }
    let b = rows.shape()[0];
    if thetas.len() != b {
        return Err(Error::invalid_argument(format!(
            "{} measurement draws for a batch of {b}",
            thetas.len()
        )));
    }
    let mut out = Vec::with_capacity(b);
    for (i, theta) in thetas.iter().enumerate() {
        let item = Tensor::from_vec(item_shape, rows.data()[i * d..(i + 1) * d].to_vec())?;
        out.push(crate::measure::apply_measurement(theta, &item)?);
    }
    stack_rows(&out)
}

/// Adjoint of `measure_rows` for fixed Θ.
fn measure_rows_backward<T: Scalar>(
    grad_rows: &Tensor<T>,
    out_item_shape: &[usize],
    in_item_shape: &[usize],
    thetas: &[ThetaSample<T>],
) -> Result<Tensor<T>> {
    let d: usize = out_item_shape.iter().product();
    if grad_rows.shape().len() != 2 || grad_rows.shape()[1] != d {
        return Err(Error::invalid_shape(format!(
            "expected [batch, {d}] gradient rows, got {:?}",
            grad_rows.shape()
        )));
    }
    let b = grad_rows.shape()[0];
    if thetas.len() != b {
        return Err(Error::invalid_argument(format!(
            "{} measurement draws for a batch of {b}",
            thetas.len()
        )));
    }
    let mut out = Vec::with_capacity(b);
    for (i, theta) in thetas.iter().enumerate() {
        let item = Tensor::from_vec(
            out_item_shape,
            grad_rows.data()[i * d..(i + 1) * d].to_vec(),
        )?;
        out.push(crate::measure::measurement_backward(
            theta,
            &item,
            in_item_shape,
        )?);
    }
    stack_rows(&out)
}

fn training_branch<T: Scalar>(
    gen: &GeneratorSplit<T>,
    hidden: &Tensor<T>,
    mode: Mode,
    thetas: &BatchThetas<T>,
) -> Result<Tensor<T>> {
    let hs = gen.hidden_shape;
    let g1_in = if mode.uses_hidden() {
        measure_rows(hidden, &hs, &thetas.hidden)?
    } else {
        hidden.clone()
    };
    let img = gen.g1.forward(&g1_in)?;
    if mode.uses_output() {
        let ishape = gen.image_shape;
        measure_rows(&img, &ishape, &thetas.output)
    } else {
        Ok(img)
    }
}

/// Runs the generator both ways: the training sample handed to the
/// discriminator (mode-dependent measurement placement) and the
/// measurement-free sample used for evaluation and figures.
pub fn generator_forward<T: Scalar>(
    gen: &GeneratorSplit<T>,
    z: &Tensor<T>,
    mode: Mode,
    thetas: &BatchThetas<T>,
    rng: &mut Rng,
) -> Result<(Tensor<T>, Tensor<T>)> {
    if z.shape().len() != 2 || z.shape()[1] != gen.noise_dim() {
        return Err(Error::invalid_shape(format!(
            "noise must be [batch, {}], got {:?}",
            gen.noise_dim(),
            z.shape()
        )));
    }
    if mode.uses_hidden() != gen.hidden_spec.is_some() {
        return Err(Error::config(format!(
            "mode {:?} and the generator's hidden module disagree",
            mode
        )));
    }
    let hidden = gen.g2.forward(z)?;
    let training = training_branch(gen, &hidden, mode, thetas)?;
    let clean = gen.decode_clean(&hidden, rng)?;
    Ok((training, clean))
}

fn vstack<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.shape().len() != 2 || b.shape().len() != 2 || a.shape()[1] != b.shape()[1] {
        return Err(Error::invalid_shape(format!(
            "cannot stack {:?} over {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut data = Vec::with_capacity(a.len() + b.len());
    data.extend_from_slice(a.data());
    data.extend_from_slice(b.data());
    Tensor::from_vec(&[a.shape()[0] + b.shape()[0], a.shape()[1]], data)
}

fn split_rows<T: Scalar>(t: &Tensor<T>, at: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let rows = t.shape()[0];
    let cols = t.shape()[1];
    if at > rows {
        return Err(Error::invalid_argument(format!(
            "cannot split {rows} rows at {at}"
        )));
    }
    let first = Tensor::from_vec(&[at, cols], t.data()[..at * cols].to_vec())?;
    let second = Tensor::from_vec(&[rows - at, cols], t.data()[at * cols..].to_vec())?;
    Ok((first, second))
}

/// Everything that evolves during a run.
#[derive(Debug, Clone)]
pub struct TrainState {
    pub cfg: TrainConfig,
    pub gen: GeneratorSplit<f32>,
    pub disc: Network<f32>,
    pub opt_g2: AdamState<f32>,
    pub opt_g1: AdamState<f32>,
    pub opt_disc: AdamState<f32>,
    pub rng: Rng,
    pub step: u64,
}

/// Builds the stock architecture for `cfg`, drawing parameters in the
/// fixed order g2, g1, discriminator.
pub fn build_networks(cfg: &TrainConfig, rng: &mut Rng) -> Result<(GeneratorSplit<f32>, Network<f32>)> {
    let hidden_len = cfg.hidden_len();
    let g2 = Network::new(
        &[cfg.noise_dim, hidden_len],
        &[Activation::LeakyRelu],
        rng,
    )?;
    let g1_in = match &cfg.spec_hidden {
        Some(spec) => measured_len(spec, &cfg.hidden_shape)?,
        None => hidden_len,
    };
    let g1 = Network::new(
        &[g1_in, 256, cfg.pixels()],
        &[Activation::LeakyRelu, Activation::Sigmoid],
        rng,
    )?;
    let gen = GeneratorSplit::new(
        g2,
        cfg.hidden_shape,
        cfg.spec_hidden.clone(),
        g1,
        [cfg.height, cfg.width],
    )?;
    let disc = Network::new(
        &[cfg.discriminator_input_len()?, 128, 64, 1],
        &[Activation::LeakyRelu, Activation::LeakyRelu, Activation::Sigmoid],
        rng,
    )?;
    Ok((gen, disc))
}

impl TrainState {
    pub fn new(cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = Rng::new(cfg.seed);
        let (gen, disc) = build_networks(&cfg, &mut rng)?;
        let opt_g2 = AdamState::for_network(gen.g2())?;
        let opt_g1 = AdamState::for_network(gen.g1())?;
        let opt_disc = AdamState::for_network(&disc)?;
        Ok(TrainState {
            cfg,
            gen,
            disc,
            opt_g2,
            opt_g1,
            opt_disc,
            rng,
            step: 0,
        })
    }
}

fn non_finite(what: &str, step: u64) -> Error {
    Error::numerical(format!(
        "{what} became non-finite at step {step}; lower lr or check the data"
    ))
}

/// Gradients for one generator update: cached forward through
/// g2 → hidden measurement → g1 → output measurement → D, then the chain
/// backward with the measurement adjoints in between.
fn generator_backward(
    gen: &mut GeneratorSplit<f32>,
    disc: &mut Network<f32>,
    cfg: &TrainConfig,
    z: &Tensor<f32>,
    thetas: &BatchThetas<f32>,
    step: u64,
) -> Result<(f64, NetworkGrads<f32>, NetworkGrads<f32>)> {
    let hs = cfg.hidden_shape;
    let image_shape = [cfg.height, cfg.width];
    let mode = cfg.mode;

    let hidden = gen.g2.forward_train(z)?;
    let g1_in = if mode.uses_hidden() {
        measure_rows(&hidden, &hs, &thetas.hidden)?
    } else {
        hidden
    };
    let img = gen.g1.forward_train(&g1_in)?;
    let fake = if mode.uses_output() {
        measure_rows(&img, &image_shape, &thetas.output)?
    } else {
        img
    };
    let d_out = disc.forward_train(&fake)?;
    if !d_out.all_finite() {
        return Err(non_finite("the discriminator output", step));
    }
    let g_loss = g_loss_value(&d_out)?;

    let gd = g_loss_grad(&d_out)?;
    let (_, fake_grad) = disc.backward(&gd)?;
    let img_grad = if mode.uses_output() {
        let spec = cfg.spec_output.as_ref().expect("validated");
        let out_shape = measured_shape(spec, &image_shape)?;
        measure_rows_backward(&fake_grad, &out_shape, &image_shape, &thetas.output)?
    } else {
        fake_grad
    };
    let (g1_grads, g1_in_grad) = gen.g1.backward(&img_grad)?;
    let hidden_grad = if mode.uses_hidden() {
        let spec = cfg.spec_hidden.as_ref().expect("validated");
        let out_shape = measured_shape(spec, &hs)?;
        measure_rows_backward(&g1_in_grad, &out_shape, &hs, &thetas.hidden)?
    } else {
        g1_in_grad
    };
    let (g2_grads, _) = gen.g2.backward(&hidden_grad)?;
    Ok((g_loss, g2_grads, g1_grads))
}

/// One discriminator phase (`d_steps_per_g_step` updates) followed by one
/// generator update. Real batches are drawn with replacement from the
/// measured training partition; the real side of the discriminator always
/// receives measured data. Per substep the RNG is consumed in a fixed
/// order: real indices, noise, hidden Θ draws, output Θ draws.
pub fn train_step(state: &mut TrainState, dataset: &Dataset) -> Result<GanLosses> {
    let b = state.cfg.batch_size;
    let train = dataset.train_measured();
    if train.is_empty() {
        return Err(Error::invalid_argument(
            "the dataset has no training partition",
        ));
    }
    let adam = state.cfg.adam();
    let at_step = state.step + 1;
    let mut d_loss = f64::NAN;
    for _ in 0..state.cfg.d_steps_per_g_step {
        let mut real_items = Vec::with_capacity(b);
        for _ in 0..b {
            real_items.push(train[state.rng.uniform_usize(train.len())].clone());
        }
        let real = stack_rows(&real_items)?;
        let z = Tensor::sample(Dist::StandardNormal, &[b, state.cfg.noise_dim], &mut state.rng)?;
        let thetas = state.cfg.sample_thetas::<f32>(b, &mut state.rng)?;
        let hidden = state.gen.g2().forward(&z)?;
        let fake = training_branch(&state.gen, &hidden, state.cfg.mode, &thetas)?;

        let stacked = vstack(&real, &fake)?;
        let out = state.disc.forward_train(&stacked)?;
        if !out.all_finite() {
            return Err(non_finite("the discriminator output", at_step));
        }
        let (out_r, out_f) = split_rows(&out, b)?;
        d_loss = gan_losses(&out_r, &out_f)?.d_loss;
        if !d_loss.is_finite() {
            return Err(non_finite("the discriminator loss", at_step));
        }
        let (gr, gf) = d_loss_grads(&out_r, &out_f)?;
        let grad = vstack(&gr, &gf)?;
        let (grads, _) = state.disc.backward(&grad)?;
        state.opt_disc.step(&adam, &mut state.disc, &grads)?;
    }

    let z = Tensor::sample(Dist::StandardNormal, &[b, state.cfg.noise_dim], &mut state.rng)?;
    let thetas = state.cfg.sample_thetas::<f32>(b, &mut state.rng)?;
    let (g_loss, g2_grads, g1_grads) = generator_backward(
        &mut state.gen,
        &mut state.disc,
        &state.cfg,
        &z,
        &thetas,
        at_step,
    )?;
    if !g_loss.is_finite() {
        return Err(non_finite("the generator loss", at_step));
    }
    state.opt_g2.step(&adam, &mut state.gen.g2, &g2_grads)?;
    state.opt_g1.step(&adam, &mut state.gen.g1, &g1_grads)?;
    state.step += 1;
    Ok(GanLosses { d_loss, g_loss })
}

/// Compares measurement-free generator samples against a clean holdout
/// given as `[n, H·W]` rows. Loss fields of the returned metrics are zero;
/// the training loop fills them in from the most recent step.
pub fn evaluate_metrics(
    gen: &GeneratorSplit<f32>,
    clean_holdout: &Tensor<f32>,
    n_generated: usize,
    rng: &mut Rng,
) -> Result<Metrics> {
    if clean_holdout.shape().len() != 2 || clean_holdout.shape()[0] == 0 {
        return Err(Error::invalid_argument(
            "the clean holdout must be a non-empty [n, pixels] matrix",
        ));
    }
    if n_generated < 100 {
        return Err(Error::invalid_argument(
            "evaluation needs at least 100 generated samples",
        ));
    }
    let z = Tensor::sample(Dist::StandardNormal, &[n_generated, gen.noise_dim()], rng)?;
    let generated = gen.clean_forward(&z, rng)?;
    Ok(Metrics {
        step: 0,
        d_loss: 0.0,
        g_loss: 0.0,
        per_pixel_mean_error: per_pixel_mean_error(&generated, clean_holdout)?,
        mmd2: mmd2_unbiased(&generated, clean_holdout)?,
    })
}

/// Measurement-free samples as an `[n, H, W]` stack; the sigmoid head
/// keeps every value in [0, 1].
pub fn sample_grid(gen: &GeneratorSplit<f32>, n: usize, rng: &mut Rng) -> Result<Tensor<f32>> {
    if n == 0 {
        return Err(Error::invalid_argument("need at least one sample"));
    }
    let z = Tensor::sample(Dist::StandardNormal, &[n, gen.noise_dim()], rng)?;
    let rows = gen.clean_forward(&z, rng)?;
    let [h, w] = gen.image_shape;
    rows.reshape(&[n, h, w])
}

/// Evaluation cadence: periodic rows use a 200-sample draw against (up to)
/// the first 400 holdout images, the final row a 400-sample draw against
/// the full holdout. Evaluation RNG streams are derived from the seed and
/// step so evaluation never perturbs the training stream.
const EVAL_N_PERIODIC: usize = 200;
const EVAL_N_FINAL: usize = 400;
const EVAL_HOLDOUT_CAP: usize = 400;

fn eval_rng(seed: u64, step: u64) -> Rng {
    Rng::new(seed ^ step.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Continues a run until `cfg.steps`, evaluating every `eval_every` steps
/// and at the end. `on_metrics` fires as each row is produced so callers
/// can stream a log.
pub fn train_resume(
    state: &mut TrainState,
    dataset: &Dataset,
    mut on_metrics: impl FnMut(&Metrics) -> Result<()>,
) -> Result<Vec<Metrics>> {
    let holdout = stack_rows(dataset.holdout_clean())?;
    let sub_rows = holdout.shape()[0].min(EVAL_HOLDOUT_CAP);
    let cols = holdout.shape()[1];
    let holdout_sub = Tensor::from_vec(
        &[sub_rows, cols],
        holdout.data()[..sub_rows * cols].to_vec(),
    )?;
    let mut log = Vec::new();
    while state.step < state.cfg.steps {
        let losses = train_step(state, dataset)?;
        let s = state.step;
        let last = s == state.cfg.steps;
        if s % state.cfg.eval_every == 0 || last {
            let (n_gen, hold) = if last {
                (EVAL_N_FINAL, &holdout)
            } else {
                (EVAL_N_PERIODIC, &holdout_sub)
            };
            let mut m = evaluate_metrics(&state.gen, hold, n_gen, &mut eval_rng(state.cfg.seed, s))?;
            m.step = s;
            m.d_loss = losses.d_loss;
            m.g_loss = losses.g_loss;
            on_metrics(&m)?;
            log.push(m);
        }
    }
    Ok(log)
}

/// Trains from scratch. Returns the final state (ready for persistence)
/// and the metrics log.
pub fn train_run(
    cfg: &TrainConfig,
    dataset: &Dataset,
    on_metrics: impl FnMut(&Metrics) -> Result<()>,
) -> Result<(TrainState, Vec<Metrics>)> {
    let mut state = TrainState::new(cfg.clone())?;
    let log = train_resume(&mut state, dataset, on_metrics)?;
    Ok((state, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_measured_dataset;
    use crate::dataset::synth_rectangles_dataset;
    use crate::measure::apply_measurement;

    fn tiny_config(mode: Mode) -> TrainConfig {
        TrainConfig {
            seed: 7,
            noise_dim: 6,
            height: 8,
            width: 8,
            hidden_shape: [2, 4, 4],
            mode,
            spec_output: None,
            spec_hidden: None,
            dataset_spec: MeasurementSpec::new(MeasurementKind::Identity),
            dataset_size: 20,
            idx_path: None,
            lr: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch_size: 4,
            steps: 3,
            d_steps_per_g_step: 1,
            eval_every: 500,
        }
    }

    fn tiny_dataset(cfg: &TrainConfig) -> Dataset {
        let mut rng = Rng::new(99);
        let clean = synth_rectangles_dataset(cfg.dataset_size, cfg.height, cfg.width, &mut rng)
            .unwrap();
        make_measured_dataset(clean, cfg.dataset_spec.clone(), 5).unwrap()
    }

    fn flat_params(net: &Network<f32>) -> Vec<u32> {
        let mut out = Vec::new();
        net.visit_params(&mut |t| out.extend(t.data().iter().map(|v| v.to_bits())));
        out
    }

    fn state_bits(state: &TrainState) -> Vec<u32> {
        let mut bits = flat_params(state.gen.g2());
        bits.extend(flat_params(state.gen.g1()));
        bits.extend(flat_params(&state.disc));
        bits
    }

    #[test]
    fn identity_hidden_measurement_leaves_training_branch_clean() {
        let mut cfg = tiny_config(Mode::AmbientHidden);
        cfg.spec_hidden = Some(MeasurementSpec::new(MeasurementKind::Identity));
        let state = TrainState::new(cfg.clone()).unwrap();
        let mut rng = Rng::new(11);
        let z = Tensor::sample(Dist::StandardNormal, &[5, cfg.noise_dim], &mut rng).unwrap();
        let thetas = cfg.sample_thetas::<f32>(5, &mut rng).unwrap();
        let (training, clean) =
            generator_forward(&state.gen, &z, cfg.mode, &thetas, &mut rng).unwrap();
        assert_eq!(training, clean);
    }

    #[test]
    fn ambient_both_composes_the_output_measurement() {
        let mut cfg = tiny_config(Mode::AmbientBoth);
        cfg.spec_hidden = Some(MeasurementSpec {
            p: 0.4,
            ..MeasurementSpec::new(MeasurementKind::BlockPixel)
        });
        cfg.spec_output = Some(MeasurementSpec {
            p: 0.5,
            ..MeasurementSpec::new(MeasurementKind::BlockPixel)
        });
        let state = TrainState::new(cfg.clone()).unwrap();
        let mut rng = Rng::new(12);
        let z = Tensor::sample(Dist::StandardNormal, &[4, cfg.noise_dim], &mut rng).unwrap();
        let thetas = cfg.sample_thetas::<f32>(4, &mut rng).unwrap();

        let (both, _) =
            generator_forward(&state.gen, &z, Mode::AmbientBoth, &thetas, &mut rng.clone())
                .unwrap();

        // Recompute by hand: the hidden branch followed by the same Θ1.
        let hidden = state.gen.g2().forward(&z).unwrap();
        let inner =
            training_branch(&state.gen, &hidden, Mode::AmbientHidden, &thetas).unwrap();
        let mut outer_rows = Vec::new();
        for i in 0..4 {
            let item = Tensor::from_vec(
                &[cfg.height, cfg.width],
                inner.data()[i * cfg.pixels()..(i + 1) * cfg.pixels()].to_vec(),
            )
            .unwrap();
            outer_rows.push(apply_measurement(&thetas.output[i], &item).unwrap());
        }
        assert_eq!(both, stack_rows(&outer_rows).unwrap());
    }

    #[test]
    fn hidden_mode_never_measures_the_generator_output() {
        let mut cfg = tiny_config(Mode::AmbientHidden);
        cfg.spec_hidden = Some(MeasurementSpec {
            p: 0.5,
            ..MeasurementSpec::new(MeasurementKind::BlockPixel)
        });
        let state = TrainState::new(cfg.clone()).unwrap();
        let mut rng = Rng::new(13);
        let z = Tensor::sample(Dist::StandardNormal, &[3, cfg.noise_dim], &mut rng).unwrap();
        let thetas = cfg.sample_thetas::<f32>(3, &mut rng).unwrap();
        assert!(thetas.output.is_empty());
        let (training, _) =
            generator_forward(&state.gen, &z, cfg.mode, &thetas, &mut rng).unwrap();
        // The training branch is exactly g1 of the masked hidden tensor; no
        // further operator touches it.
        let hidden = state.gen.g2().forward(&z).unwrap();
        let masked = measure_rows(&hidden, &cfg.hidden_shape, &thetas.hidden).unwrap();
        assert_eq!(training, state.gen.g1().forward(&masked).unwrap());
    }

    #[test]
    fn gradients_through_blocked_hidden_units_are_exactly_zero() {
        let mut cfg = tiny_config(Mode::AmbientHidden);
        cfg.spec_hidden = Some(MeasurementSpec {
            p: 0.5,
            ..MeasurementSpec::new(MeasurementKind::BlockPixel)
        });
        let mut state = TrainState::new(cfg.clone()).unwrap();
        let [c, hh, hw] = cfg.hidden_shape;
        // One fixed mask shared by the whole batch, blocking position (1, 2).
        let mut mask = Tensor::<f32>::full(&[hh, hw], 1.0).unwrap();
        mask.data_mut()[1 * hw + 2] = 0.0;
        let b = 3;
        let thetas = BatchThetas {
            hidden: vec![ThetaSample::PixelMask(mask); b],
            output: Vec::new(),
        };
        let mut rng = Rng::new(14);
        let z = Tensor::sample(Dist::StandardNormal, &[b, cfg.noise_dim], &mut rng).unwrap();
        let (_, g2_grads, _) = generator_backward(
            &mut state.gen,
            &mut state.disc,
            &cfg,
            &z,
            &thetas,
            1,
        )
        .unwrap();
        let grads = &g2_grads.layers[0];
        let in_dim = cfg.noise_dim;
        for ch in 0..c {
            let unit = ch * hh * hw + 1 * hw + 2;
            assert_eq!(grads.bias.data()[unit], 0.0);
            for j in 0..in_dim {
                assert_eq!(grads.weight.data()[unit * in_dim + j], 0.0);
            }
        }
        // A neighboring unblocked unit does receive gradient.
        let live = 0;
        assert!(grads.weight.data()[live * in_dim..(live + 1) * in_dim]
            .iter()
            .any(|&g| g != 0.0));
    }

    #[test]
    fn zero_learning_rate_leaves_parameters_bit_identical() {
        let mut cfg = tiny_config(Mode::Baseline);
        cfg.lr = 0.0;
        let dataset = tiny_dataset(&cfg);
        let mut state = TrainState::new(cfg).unwrap();
        let before = state_bits(&state);
        train_step(&mut state, &dataset).unwrap();
        assert_eq!(before, state_bits(&state));
    }

    #[test]
    fn single_step_is_bit_reproducible() {
        let mut cfg = tiny_config(Mode::AmbientHidden);
        cfg.spec_hidden = Some(MeasurementSpec {
            p: 0.5,
            ..MeasurementSpec::new(MeasurementKind::BlockPixel)
        });
        cfg.d_steps_per_g_step = 2;
        let dataset = tiny_dataset(&cfg);
        let mut a = TrainState::new(cfg.clone()).unwrap();
        let mut b = TrainState::new(cfg).unwrap();
        let la = train_step(&mut a, &dataset).unwrap();
        let lb = train_step(&mut b, &dataset).unwrap();
        assert_eq!(la.d_loss.to_bits(), lb.d_loss.to_bits());
        assert_eq!(la.g_loss.to_bits(), lb.g_loss.to_bits());
        assert_eq!(state_bits(&a), state_bits(&b));
        assert_eq!(a.rng.state(), b.rng.state());
    }

    #[test]
    fn missing_mode_spec_is_a_configuration_error() {
        let cfg = tiny_config(Mode::AmbientHidden);
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        let mut cfg = tiny_config(Mode::Baseline);
        cfg.spec_output = Some(MeasurementSpec::new(MeasurementKind::Identity));
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn discriminator_width_mismatch_is_a_configuration_error() {
        // Extract-patch dataset produces 3x3 patches while a baseline
        // generator emits full images.
        let mut cfg = tiny_config(Mode::Baseline);
        cfg.dataset_spec = MeasurementSpec {
            k: 3,
            ..MeasurementSpec::new(MeasurementKind::ExtractPatch)
        };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn generator_split_shape_invariants_are_enforced() {
        let mut rng = Rng::new(15);
        let g2 = Network::<f32>::new(&[6, 30], &[Activation::LeakyRelu], &mut rng).unwrap();
        let g1 = Network::<f32>::new(&[32, 64], &[Activation::Sigmoid], &mut rng).unwrap();
        let err = GeneratorSplit::new(g2, [2, 4, 4], None, g1, [8, 8]);
        assert!(matches!(err, Err(Error::Config(_))));
    }

    #[test]
    fn extract_hidden_clean_path_draws_fresh_patches() {
        let mut cfg = tiny_config(Mode::AmbientHidden);
        cfg.spec_hidden = Some(MeasurementSpec {
            k: 2,
            ..MeasurementSpec::new(MeasurementKind::ExtractPatch)
        });
        let state = TrainState::new(cfg.clone()).unwrap();
        assert_eq!(state.gen.g1().in_dim(), 2 * 2 * 2);
        let mut rng = Rng::new(16);
        let z = Tensor::sample(Dist::StandardNormal, &[6, cfg.noise_dim], &mut rng).unwrap();
        let a = state.gen.clean_forward(&z, &mut Rng::new(1)).unwrap();
        let b = state.gen.clean_forward(&z, &mut Rng::new(1)).unwrap();
        let c = state.gen.clean_forward(&z, &mut Rng::new(2)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn evaluation_on_the_generators_own_samples_is_self_consistent() {
        let cfg = tiny_config(Mode::Baseline);
        let state = TrainState::new(cfg.clone()).unwrap();
        // Build the holdout from the exact samples evaluation will draw.
        let mut probe = Rng::new(21);
        let z = Tensor::sample(Dist::StandardNormal, &[120, cfg.noise_dim], &mut probe).unwrap();
        let holdout = state.gen.clean_forward(&z, &mut probe).unwrap();
        let m = evaluate_metrics(&state.gen, &holdout, 120, &mut Rng::new(21)).unwrap();
        assert_eq!(m.per_pixel_mean_error, 0.0);
        assert!(m.mmd2 <= 1e-9, "mmd {}", m.mmd2);
        assert!(m.mmd2 > -0.05);
    }

    #[test]
    fn evaluation_preconditions() {
        let cfg = tiny_config(Mode::Baseline);
        let state = TrainState::new(cfg).unwrap();
        let holdout = Tensor::<f32>::zeros(&[4, 64]).unwrap();
        assert!(matches!(
            evaluate_metrics(&state.gen, &holdout, 50, &mut Rng::new(1)),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn short_run_logs_final_metrics_and_streams_them() {
        let cfg = tiny_config(Mode::Baseline);
        let dataset = tiny_dataset(&cfg);
        let mut streamed = Vec::new();
        let (state, log) = train_run(&cfg, &dataset, |m| {
            streamed.push(m.step);
            Ok(())
        })
        .unwrap();
        assert_eq!(state.step, cfg.steps);
        assert_eq!(log.len(), 1);
        assert_eq!(log[0].step, cfg.steps);
        assert_eq!(streamed, vec![cfg.steps]);
        assert!(log[0].d_loss.is_finite() && log[0].g_loss.is_finite());
        assert!(log[0].per_pixel_mean_error >= 0.0);
        assert!(log[0].mmd2 > -0.05);
    }

    #[test]
    fn identical_runs_match_bit_for_bit() {
        let cfg = tiny_config(Mode::Baseline);
        let dataset = tiny_dataset(&cfg);
        let (a, _) = train_run(&cfg, &dataset, |_| Ok(())).unwrap();
        let (b, _) = train_run(&cfg, &dataset, |_| Ok(())).unwrap();
        assert_eq!(state_bits(&a), state_bits(&b));
        assert_eq!(a.rng.state(), b.rng.state());
    }

    #[test]
    fn baseline_discriminator_loss_settles_in_the_smoke_band() {
        // Desk-scale rectangles measured with block_pixel(0.5), baseline
        // mode, 2000 steps: the discriminator loss should settle in the
        // (0.5, 2.5) band, meaning neither side has run away.
        let cfg: TrainConfig = serde_json::from_str(
            r#"{
                "seed": 1,
                "mode": "baseline",
                "steps": 2000,
                "dataset_size": 8000,
                "height": 16,
                "width": 16,
                "dataset_spec": {"kind": "block_pixel", "p": 0.5}
            }"#,
        )
        .unwrap();
        cfg.validate().unwrap();
        let clean = synth_rectangles_dataset(
            cfg.dataset_size,
            cfg.height,
            cfg.width,
            &mut Rng::new(cfg.seed),
        )
        .unwrap();
        let dataset = make_measured_dataset(clean, cfg.dataset_spec.clone(), cfg.seed).unwrap();
        let mut state = TrainState::new(cfg).unwrap();
        let mut window = Vec::new();
        for step in 1..=2000u64 {
            let losses = train_step(&mut state, &dataset).unwrap();
            assert!(losses.d_loss.is_finite(), "d_loss diverged at step {step}");
            if step > 1900 {
                window.push(losses.d_loss);
            }
        }
        let mean = window.iter().sum::<f64>() / window.len() as f64;
        assert!(
            mean > 0.5 && mean < 2.5,
            "d_loss settled at {mean:.4}, outside (0.5, 2.5)"
        );
    }

    #[test]
    fn untrained_samples_sit_near_one_half() {
        // Stock 16x16 architecture: Xavier logits are small, so the sigmoid
        // head should keep everything well inside (0, 1) and image means
        // near 0.5.
        let cfg = TrainConfig {
            seed: 3,
            mode: Mode::Baseline,
            steps: 1,
            ..serde_json::from_str(r#"{"seed":3,"mode":"baseline","steps":1}"#).unwrap()
        };
        let state = TrainState::new(cfg).unwrap();
        let grid = sample_grid(&state.gen, 64, &mut Rng::new(30)).unwrap();
        assert_eq!(grid.shape(), [64, 16, 16]);
        let mut total = 0.0;
        for img in grid.data().chunks(256) {
            let mean = img.iter().map(|&v| v as f64).sum::<f64>() / 256.0;
            assert!((mean - 0.5).abs() < 0.2, "image mean {mean}");
            total += mean;
        }
        total /= 64.0;
        assert!((total - 0.5).abs() < 0.1, "grand mean {total}");
        assert!(grid.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn config_json_defaults_fill_in() {
        let cfg: TrainConfig =
            serde_json::from_str(r#"{"seed":1,"mode":"ambient_hidden","steps":10,"spec_hidden":{"kind":"block_pixel"}}"#)
                .unwrap();
        assert_eq!(cfg.noise_dim, 64);
        assert_eq!(cfg.hidden_shape, [8, 8, 8]);
        assert_eq!(cfg.batch_size, 64);
        assert_eq!(cfg.eval_every, 500);
        assert_eq!(cfg.dataset_spec.kind, MeasurementKind::Identity);
        assert_eq!(cfg.spec_hidden.as_ref().unwrap().p, 0.5);
        cfg.validate().unwrap();
        let unknown = serde_json::from_str::<TrainConfig>(r#"{"seed":1,"mode":"baseline","steps":1,"bogus":2}"#);
        assert!(unknown.is_err());
    }
}
