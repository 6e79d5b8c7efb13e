//! Lossy measurement operators f_Θ, their parameter sampling, gradient
//! propagation, and two uniqueness diagnostics: a Monte-Carlo estimate of
//! the identity probability Pr[f_Θ(x) = x] and an exact injectivity test of
//! the Θ-marginalized channel on tiny discrete input spaces.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::DiscreteChannel;
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Smoothing kernel used by `convolve_noise`, normalized to sum 1.
pub const CONV_KERNEL: [[f64; 3]; 3] = [
    [1.0 / 16.0, 2.0 / 16.0, 1.0 / 16.0],
    [2.0 / 16.0, 4.0 / 16.0, 2.0 / 16.0],
    [1.0 / 16.0, 2.0 / 16.0, 1.0 / 16.0],
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    BlockPixel,
    BlockPatch,
    KeepPatch,
    ExtractPatch,
    GaussianProjection,
    ConvolveNoise,
    Identity,
}

impl MeasurementKind {
    /// Kinds whose Θ acts by zeroing positions.
    pub fn is_masking(self) -> bool {
        matches!(
            self,
            MeasurementKind::BlockPixel | MeasurementKind::BlockPatch | MeasurementKind::KeepPatch
        )
    }
}

impl std::fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            MeasurementKind::BlockPixel => "block_pixel",
            MeasurementKind::BlockPatch => "block_patch",
            MeasurementKind::KeepPatch => "keep_patch",
            MeasurementKind::ExtractPatch => "extract_patch",
            MeasurementKind::GaussianProjection => "gaussian_projection",
            MeasurementKind::ConvolveNoise => "convolve_noise",
            MeasurementKind::Identity => "identity",
        };
        f.write_str(s)
    }
}

fn default_p() -> f64 {
    0.5
}
fn default_k() -> usize {
    4
}
fn default_m() -> usize {
    16
}
fn default_noise_std() -> f64 {
    0.1
}

/// Measurement family plus its θ-distribution parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSpec {
    pub kind: MeasurementKind,
    /// Blocking probability for `block_pixel`.
    #[serde(default = "default_p")]
    pub p: f64,
    /// Patch side for the patch kinds.
    #[serde(default = "default_k")]
    pub k: usize,
    /// Output dimension for `gaussian_projection`.
    #[serde(default = "default_m")]
    pub m: usize,
    /// Additive noise scale for `convolve_noise`.
    #[serde(default = "default_noise_std")]
    pub noise_std: f64,
}

impl MeasurementSpec {
    pub fn new(kind: MeasurementKind) -> Self {
        MeasurementSpec {
            kind,
            p: default_p(),
            k: default_k(),
            m: default_m(),
            noise_std: default_noise_std(),
        }
    }

    /// Checks the parameters against a concrete target shape.
    pub fn validate(&self, target_shape: &[usize]) -> Result<()> {
        let (_, h, w) = spatial_dims(target_shape)?;
        if !(0.0..=1.0).contains(&self.p) {
            return Err(Error::invalid_argument(format!(
                "blocking probability p={} outside [0, 1]",
                self.p
            )));
        }
        if self.kind.is_masking() || self.kind == MeasurementKind::ExtractPatch {
            if self.k < 1 {
                return Err(Error::invalid_argument("patch side k must be at least 1"));
            }
            if matches!(
                self.kind,
                MeasurementKind::BlockPatch
                    | MeasurementKind::KeepPatch
                    | MeasurementKind::ExtractPatch
            ) && self.k > h.min(w)
            {
                return Err(Error::invalid_argument(format!(
                    "patch side k={} exceeds spatial extent {}x{}",
                    self.k, h, w
                )));
            }
        }
        if self.kind == MeasurementKind::GaussianProjection && self.m < 1 {
            return Err(Error::invalid_argument("projection dimension m must be at least 1"));
        }
        if self.kind == MeasurementKind::ConvolveNoise && self.noise_std < 0.0 {
            return Err(Error::invalid_argument("noise_std must be nonnegative"));
        }
        Ok(())
    }
}

/// Interprets a tensor shape as `[H, W]` or `[C, H, W]`.
pub fn spatial_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape {
        [h, w] => Ok((1, *h, *w)),
        [c, h, w] => Ok((*c, *h, *w)),
        _ => Err(Error::invalid_shape(format!(
            "expected [H, W] or [C, H, W], got {shape:?}"
        ))),
    }
}

/// One realization Θ drawn from the measurement family's p_θ.
#[derive(Debug, Clone)]
pub enum ThetaSample<T = f32> {
    Identity,
    /// 2-D zero/one mask applied at every channel.
    PixelMask(Tensor<T>),
    BlockPatch { row: usize, col: usize, k: usize },
    KeepPatch { row: usize, col: usize, k: usize },
    ExtractPatch { row: usize, col: usize, k: usize },
    /// Row-major `[m, n]` projection applied to the flattened input.
    Projection(Tensor<T>),
    /// Additive noise, same shape as the input; convolution comes first.
    ConvNoise(Tensor<T>),
}

/// Draws Θ for the given spec and target shape.
pub fn sample_theta<T: Scalar>(
    spec: &MeasurementSpec,
    target_shape: &[usize],
    rng: &mut Rng,
) -> Result<ThetaSample<T>> {
    spec.validate(target_shape)?;
    let (_, h, w) = spatial_dims(target_shape)?;
    Ok(match spec.kind {
        MeasurementKind::Identity => ThetaSample::Identity,
        MeasurementKind::BlockPixel => {
            let mut mask = Tensor::zeros(&[h, w])?;
            for v in mask.data_mut() {
                *v = if rng.bernoulli(spec.p) {
                    T::zero()
                } else {
                    T::one()
                };
            }
            ThetaSample::PixelMask(mask)
        }
        MeasurementKind::BlockPatch | MeasurementKind::KeepPatch | MeasurementKind::ExtractPatch => {
            let row = rng.uniform_usize(h - spec.k + 1);
            let col = rng.uniform_usize(w - spec.k + 1);
            match spec.kind {
                MeasurementKind::BlockPatch => ThetaSample::BlockPatch { row, col, k: spec.k },
                MeasurementKind::KeepPatch => ThetaSample::KeepPatch { row, col, k: spec.k },
                _ => ThetaSample::ExtractPatch { row, col, k: spec.k },
            }
        }
        MeasurementKind::GaussianProjection => {
            let n: usize = target_shape.iter().product();
            ThetaSample::Projection(Tensor::sample(
                crate::tensor::Dist::StandardNormal,
                &[spec.m, n],
                rng,
            )?)
        }
        MeasurementKind::ConvolveNoise => {
            let noise = Tensor::sample(crate::tensor::Dist::StandardNormal, target_shape, rng)?
                .scale(T::from_f64(spec.noise_std));
            ThetaSample::ConvNoise(noise)
        }
    })
}

fn check_mask_shape<T: Scalar>(mask: &Tensor<T>, x: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (c, h, w) = spatial_dims(x.shape())?;
    if mask.shape() != [h, w] {
        return Err(Error::invalid_shape(format!(
            "mask shape {:?} does not cover input {:?}",
            mask.shape(),
            x.shape()
        )));
    }
    Ok((c, h, w))
}

fn check_window<T: Scalar>(
    x: &Tensor<T>,
    row: usize,
    col: usize,
    k: usize,
) -> Result<(usize, usize, usize)> {
    let (c, h, w) = spatial_dims(x.shape())?;
    if row + k > h || col + k > w {
        return Err(Error::invalid_shape(format!(
            "{k}x{k} window at ({row}, {col}) leaves {h}x{w} bounds"
        )));
    }
    Ok((c, h, w))
}

fn in_window(r: usize, cc: usize, row: usize, col: usize, k: usize) -> bool {
    r >= row && r < row + k && cc >= col && cc < col + k
}

/// 3x3 same-padding convolution of each channel with `CONV_KERNEL`.
fn convolve_same<T: Scalar>(x: &Tensor<T>, flip: bool) -> Result<Tensor<T>> {
    let (c, h, w) = spatial_dims(x.shape())?;
    let mut out = Tensor::zeros(x.shape())?;
    for ch in 0..c {
        let base = ch * h * w;
        for r in 0..h {
            for cc in 0..w {
                let mut acc = 0.0;
                for (dr, krow) in CONV_KERNEL.iter().enumerate() {
                    for (dc, &kv) in krow.iter().enumerate() {
                        let kv = if flip {
                            CONV_KERNEL[2 - dr][2 - dc]
                        } else {
                            kv
                        };
                        let rr = r as isize + dr as isize - 1;
                        let cw = cc as isize + dc as isize - 1;
                        if rr >= 0 && rr < h as isize && cw >= 0 && cw < w as isize {
                            acc += kv
                                * x.data()[base + rr as usize * w + cw as usize].to_f64();
                        }
                    }
                }
                out.data_mut()[base + r * w + cc] = T::from_f64(acc);
            }
        }
    }
    Ok(out)
}

/// Applies f_Θ to a single item shaped `[H, W]` or `[C, H, W]`.
pub fn apply_measurement<T: Scalar>(theta: &ThetaSample<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    match theta {
        ThetaSample::Identity => Ok(x.clone()),
        ThetaSample::PixelMask(mask) => {
            let (c, h, w) = check_mask_shape(mask, x)?;
            let mut out = x.clone();
            for ch in 0..c {
                for i in 0..h * w {
                    if mask.data()[i] == T::zero() {
                        out.data_mut()[ch * h * w + i] = T::zero();
                    }
                }
            }
            Ok(out)
        }
        ThetaSample::BlockPatch { row, col, k } => {
            let (c, h, w) = check_window(x, *row, *col, *k)?;
            let mut out = x.clone();
            for ch in 0..c {
                for r in 0..h {
                    for cc in 0..w {
                        if in_window(r, cc, *row, *col, *k) {
                            out.data_mut()[ch * h * w + r * w + cc] = T::zero();
                        }
                    }
                }
            }
            Ok(out)
        }
        ThetaSample::KeepPatch { row, col, k } => {
            let (c, h, w) = check_window(x, *row, *col, *k)?;
            let mut out = x.clone();
            for ch in 0..c {
                for r in 0..h {
                    for cc in 0..w {
                        if !in_window(r, cc, *row, *col, *k) {
                            out.data_mut()[ch * h * w + r * w + cc] = T::zero();
                        }
                    }
                }
            }
            Ok(out)
        }
        ThetaSample::ExtractPatch { row, col, k } => {
            let (c, h, w) = check_window(x, *row, *col, *k)?;
            let out_shape: Vec<usize> = if x.shape().len() == 3 {
                vec![c, *k, *k]
            } else {
                vec![*k, *k]
            };
            let mut out = Tensor::zeros(&out_shape)?;
            for ch in 0..c {
                for r in 0..*k {
                    for cc in 0..*k {
                        out.data_mut()[ch * k * k + r * k + cc] =
                            x.data()[ch * h * w + (row + r) * w + (col + cc)];
                    }
                }
            }
            Ok(out)
        }
        ThetaSample::Projection(p) => {
            let n: usize = x.shape().iter().product();
            if p.shape().len() != 2 || p.shape()[1] != n {
                return Err(Error::invalid_shape(format!(
                    "projection {:?} does not accept input {:?}",
                    p.shape(),
                    x.shape()
                )));
            }
            let col = x.reshape(&[n, 1])?;
            crate::tensor::matmul(p, &col)?.reshape(&[p.shape()[0]])
        }
        ThetaSample::ConvNoise(noise) => {
            if noise.shape() != x.shape() {
                return Err(Error::invalid_shape(format!(
                    "noise shape {:?} does not match input {:?}",
                    noise.shape(),
                    x.shape()
                )));
            }
            convolve_same(x, false)?.add(noise)
        }
    }
}

/// Output shape of `apply_measurement` for any Θ drawn from `spec` on inputs
/// of `input_shape`.
pub fn measured_shape(spec: &MeasurementSpec, input_shape: &[usize]) -> Result<Vec<usize>> {
    spec.validate(input_shape)?;
    let (c, _, _) = spatial_dims(input_shape)?;
    Ok(match spec.kind {
        MeasurementKind::ExtractPatch if input_shape.len() == 3 => vec![c, spec.k, spec.k],
        MeasurementKind::ExtractPatch => vec![spec.k, spec.k],
        MeasurementKind::GaussianProjection => vec![spec.m],
        _ => input_shape.to_vec(),
    })
}

/// Gradient of `apply_measurement` with respect to its input.
pub fn measurement_backward<T: Scalar>(
    theta: &ThetaSample<T>,
    grad_out: &Tensor<T>,
    input_shape: &[usize],
) -> Result<Tensor<T>> {
    match theta {
        ThetaSample::Identity => {
            if grad_out.shape() != input_shape {
                return Err(Error::invalid_shape(format!(
                    "gradient shape {:?} does not match input {:?}",
                    grad_out.shape(),
                    input_shape
                )));
            }
            Ok(grad_out.clone())
        }
        ThetaSample::PixelMask(mask) => {
            let probe = Tensor::zeros(input_shape)?;
            let (c, h, w) = check_mask_shape(mask, &probe)?;
            if grad_out.shape() != input_shape {
                return Err(Error::invalid_shape(format!(
                    "gradient shape {:?} does not match input {:?}",
                    grad_out.shape(),
                    input_shape
                )));
            }
            let mut out = grad_out.clone();
            for ch in 0..c {
                for i in 0..h * w {
                    if mask.data()[i] == T::zero() {
                        out.data_mut()[ch * h * w + i] = T::zero();
                    }
                }
            }
            Ok(out)
        }
        ThetaSample::BlockPatch { row, col, k } | ThetaSample::KeepPatch { row, col, k } => {
            let probe: Tensor<T> = Tensor::zeros(input_shape)?;
            let (c, h, w) = check_window(&probe, *row, *col, *k)?;
            if grad_out.shape() != input_shape {
                return Err(Error::invalid_shape(format!(
                    "gradient shape {:?} does not match input {:?}",
                    grad_out.shape(),
                    input_shape
                )));
            }
            let blocked = matches!(theta, ThetaSample::BlockPatch { .. });
            let mut out = grad_out.clone();
            for ch in 0..c {
                for r in 0..h {
                    for cc in 0..w {
                        let inside = in_window(r, cc, *row, *col, *k);
                        if inside == blocked {
                            out.data_mut()[ch * h * w + r * w + cc] = T::zero();
                        }
                    }
                }
            }
            Ok(out)
        }
        ThetaSample::ExtractPatch { row, col, k } => {
            let probe: Tensor<T> = Tensor::zeros(input_shape)?;
            let (c, h, w) = check_window(&probe, *row, *col, *k)?;
            let want: Vec<usize> = if input_shape.len() == 3 {
                vec![c, *k, *k]
            } else {
                vec![*k, *k]
            };
            if grad_out.shape() != want {
                return Err(Error::invalid_shape(format!(
                    "gradient shape {:?} does not match extracted window {:?}",
                    grad_out.shape(),
                    want
                )));
            }
            let mut out = Tensor::zeros(input_shape)?;
            for ch in 0..c {
                for r in 0..*k {
                    for cc in 0..*k {
                        out.data_mut()[ch * h * w + (row + r) * w + (col + cc)] =
                            grad_out.data()[ch * k * k + r * k + cc];
                    }
                }
            }
            Ok(out)
        }
        ThetaSample::Projection(p) => {
            let n: usize = input_shape.iter().product();
            if p.shape().len() != 2 || p.shape()[1] != n || grad_out.shape() != [p.shape()[0]] {
                return Err(Error::invalid_shape(format!(
                    "projection backward with matrix {:?}, gradient {:?}, input {:?}",
                    p.shape(),
                    grad_out.shape(),
                    input_shape
                )));
            }
            let col = grad_out.reshape(&[p.shape()[0], 1])?;
            crate::tensor::matmul_tn(p, &col)?.reshape(input_shape)
        }
        ThetaSample::ConvNoise(noise) => {
            if grad_out.shape() != input_shape || noise.shape() != input_shape {
                return Err(Error::invalid_shape(format!(
                    "gradient shape {:?} does not match input {:?}",
                    grad_out.shape(),
                    input_shape
                )));
            }
            convolve_same(grad_out, true)
        }
    }
}

/// Result of the uniqueness diagnostics for one measurement family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct UniquenessReport {
    /// Monte-Carlo estimate of Pr[f_Θ(x) = x].
    pub identity_probability: f64,
    /// 95% Wilson confidence half-width of the estimate.
    pub half_width: f64,
    pub n_samples: usize,
    pub n_identity: usize,
    /// Present when a discrete channel could be built and rank-tested.
    pub channel_injective: Option<bool>,
}

/// Estimates Pr[f_Θ(x) = x] over x from `input_sampler` and Θ ∼ p_θ.
/// Equality is exact elementwise match with identical shape.
pub fn identity_probability_estimate<T: Scalar>(
    spec: &MeasurementSpec,
    input_sampler: &mut dyn FnMut(&mut Rng) -> Result<Tensor<T>>,
    n_samples: usize,
    rng: &mut Rng,
) -> Result<UniquenessReport> {
    if n_samples < 1 {
        return Err(Error::invalid_argument("need at least one sample"));
    }
    let mut hits = 0usize;
    for _ in 0..n_samples {
        let x = input_sampler(rng)?;
        let theta = sample_theta::<T>(spec, x.shape(), rng)?;
        let y = apply_measurement(&theta, &x)?;
        if y.shape() == x.shape() && y.data() == x.data() {
            hits += 1;
        }
    }
    let n = n_samples as f64;
    let p_hat = hits as f64 / n;
    let z = 1.96;
    let half_width =
        z / (1.0 + z * z / n) * (p_hat * (1.0 - p_hat) / n + z * z / (4.0 * n * n)).sqrt();
    Ok(UniquenessReport {
        identity_probability: p_hat,
        half_width,
        n_samples,
        n_identity: hits,
        channel_injective: None,
    })
}

fn tensor_key<T: Scalar>(t: &Tensor<T>) -> (Vec<usize>, Vec<u64>) {
    (
        t.shape().to_vec(),
        t.data().iter().map(|&v| v.to_f64().to_bits()).collect(),
    )
}

/// Enumerates `(outcome, probability)` pairs of f_Θ(x) over the finite Θ
/// support, merging duplicate outcomes.
fn outcome_distribution<T: Scalar>(
    spec: &MeasurementSpec,
    x: &Tensor<T>,
) -> Result<Vec<(Tensor<T>, f64)>> {
    spec.validate(x.shape())?;
    let (_, h, w) = spatial_dims(x.shape())?;
    let mut acc: HashMap<(Vec<usize>, Vec<u64>), (Tensor<T>, f64)> = HashMap::new();
    let mut push = |y: Tensor<T>, pr: f64| {
        if pr == 0.0 {
            return;
        }
        acc.entry(tensor_key(&y))
            .and_modify(|e| e.1 += pr)
            .or_insert((y, pr));
    };
    match spec.kind {
        MeasurementKind::Identity => push(x.clone(), 1.0),
        MeasurementKind::BlockPixel => {
            let (c, _, _) = spatial_dims(x.shape())?;
            if c != 1 {
                return Err(Error::invalid_argument(
                    "channel enumeration only supports single-channel inputs",
                ));
            }
            // Zeroing an already-zero pixel changes nothing, so only the
            // nonzero positions need enumerating; each subset of them being
            // blocked has probability p^|S| (1-p)^(rest).
            let nonzero: Vec<usize> = (0..h * w).filter(|&i| x.data()[i] != T::zero()).collect();
            if nonzero.len() > 16 {
                return Err(Error::invalid_argument(format!(
                    "{} nonzero pixels is too many to enumerate exactly",
                    nonzero.len()
                )));
            }
            for subset in 0..(1u32 << nonzero.len()) {
                let mut pr = 1.0;
                let mut y = x.clone();
                for (bit, &pos) in nonzero.iter().enumerate() {
                    if subset >> bit & 1 == 1 {
                        pr *= spec.p;
                        y.data_mut()[pos] = T::zero();
                    } else {
                        pr *= 1.0 - spec.p;
                    }
                }
                push(y, pr);
            }
        }
        MeasurementKind::BlockPatch | MeasurementKind::KeepPatch | MeasurementKind::ExtractPatch => {
            let origins = (h - spec.k + 1) * (w - spec.k + 1);
            let pr = 1.0 / origins as f64;
            for row in 0..=h - spec.k {
                for col in 0..=w - spec.k {
                    let theta: ThetaSample<T> = match spec.kind {
                        MeasurementKind::BlockPatch => {
                            ThetaSample::BlockPatch { row, col, k: spec.k }
                        }
                        MeasurementKind::KeepPatch => ThetaSample::KeepPatch { row, col, k: spec.k },
                        _ => ThetaSample::ExtractPatch { row, col, k: spec.k },
                    };
                    push(apply_measurement(&theta, x)?, pr);
                }
            }
        }
        MeasurementKind::GaussianProjection | MeasurementKind::ConvolveNoise => {
            return Err(Error::UnsupportedChannel(format!(
                "{} has continuous Θ; its channel cannot be enumerated",
                spec.kind
            )));
        }
    }
    Ok(acc.into_values().collect())
}

/// Builds the exact row-stochastic channel K[i][j] = Pr[f_Θ(x_i) = y_j]
/// over an enumerable input space. Outputs are all reachable outcomes,
/// sorted by shape then values.
pub fn build_channel_matrix<T: Scalar>(
    spec: &MeasurementSpec,
    inputs: &[Tensor<T>],
) -> Result<DiscreteChannel> {
    if inputs.is_empty() {
        return Err(Error::invalid_argument("channel needs at least one input state"));
    }
    if inputs.len() > 4096 {
        return Err(Error::invalid_argument(format!(
            "{} input states is too many to enumerate",
            inputs.len()
        )));
    }
    let per_input: Vec<Vec<(Tensor<T>, f64)>> = inputs
        .iter()
        .map(|x| outcome_distribution(spec, x))
        .collect::<Result<_>>()?;

    let mut outputs: Vec<Tensor<T>> = Vec::new();
    let mut index: HashMap<(Vec<usize>, Vec<u64>), usize> = HashMap::new();
    for dist in &per_input {
        for (y, _) in dist {
            let key = tensor_key(y);
            if !index.contains_key(&key) {
                index.insert(key, 0);
                outputs.push(y.clone());
            }
        }
    }
    outputs.sort_by(|a, b| {
        a.shape().cmp(b.shape()).then_with(|| {
            for (&x, &y) in a.data().iter().zip(b.data()) {
                let o = x.to_f64().total_cmp(&y.to_f64());
                if o != std::cmp::Ordering::Equal {
                    return o;
                }
            }
            std::cmp::Ordering::Equal
        })
    });
    for (j, y) in outputs.iter().enumerate() {
        *index.get_mut(&tensor_key(y)).unwrap() = j;
    }

    let mut rows = vec![vec![0.0f64; outputs.len()]; inputs.len()];
    for (i, dist) in per_input.iter().enumerate() {
        for (y, pr) in dist {
            rows[i][index[&tensor_key(y)]] += pr;
        }
    }
    DiscreteChannel::new(rows)
}

/// True iff p_x ↦ Kᵀ p_x is injective, decided by rank(K) equal to the
/// number of input states (elimination with partial pivoting, tol 1e-9).
pub fn injectivity_test(channel: &DiscreteChannel) -> bool {
    let n = channel.num_inputs();
    let m = channel.num_outputs();
    if n > m {
        return false;
    }
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| channel.row(i).to_vec()).collect();
    let tol = 1e-9;
    let mut rank = 0;
    let mut col = 0;
    while rank < n && col < m {
        let (best, best_val) = (rank..n)
            .map(|r| (r, a[r][col].abs()))
            .max_by(|x, y| x.1.total_cmp(&y.1))
            .unwrap();
        if best_val <= tol {
            col += 1;
            continue;
        }
        a.swap(rank, best);
        for r in rank + 1..n {
            let f = a[r][col] / a[rank][col];
            for c in col..m {
                a[r][c] -= f * a[rank][c];
            }
        }
        rank += 1;
        col += 1;
    }
    rank == n
}
