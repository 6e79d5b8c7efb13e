//! Python bindings for the hagn toolkit.
//!
//! The surface mirrors the CLI: measurement operators on numpy arrays,
//! uniqueness diagnostics, the discrete minimax oracle, dataset and
//! format helpers, and an incremental [`Trainer`] driving the same loop
//! as `hagn train`.

use std::path::PathBuf;

use numpy::ndarray::{ArrayD, IxDyn};
use numpy::{IntoPyArray, PyArrayDyn, PyReadonlyArrayDyn};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use hagn::checkpoint::{load_checkpoint, save_checkpoint};
use hagn::cli::build_dataset;
use hagn::dataset::{load_idx, synth_rectangles_dataset, Dataset};
use hagn::game::{
    game_value, generator_optimum_grid_search, js_divergence as js_divergence_core,
    mixture_optimum_analysis, optimal_discriminator, pushforward, DiscreteChannel,
    DiscreteDistribution, MixtureGameConfig,
};
use hagn::gradcheck::pipeline_gradcheck;
use hagn::measure::{
    apply_measurement, build_channel_matrix, identity_probability_estimate, injectivity_test,
    measured_shape, sample_theta, MeasurementKind, MeasurementSpec,
};
use hagn::metrics::{stack_rows, Metrics};
use hagn::pgm::write_image_grid;
use hagn::train::{evaluate_metrics, sample_grid, train_resume, train_step, TrainConfig, TrainState};
use hagn::{Dist, Rng, Tensor};

fn to_py(e: hagn::Error) -> PyErr {
    match &e {
        hagn::Error::Io(_) => PyIOError::new_err(e.to_string()),
        _ => PyValueError::new_err(e.to_string()),
    }
}

fn parse_spec(spec_json: &str) -> PyResult<MeasurementSpec> {
    serde_json::from_str(spec_json)
        .map_err(|e| PyValueError::new_err(format!("bad measurement spec: {e}")))
}

fn tensor_from_numpy(x: &PyReadonlyArrayDyn<'_, f32>) -> PyResult<Tensor<f32>> {
    let view = x.as_array();
    let shape = view.shape().to_vec();
    let data: Vec<f32> = view.iter().copied().collect();
    Tensor::from_vec(&shape, data).map_err(to_py)
}

fn tensor_to_numpy<'py>(
    py: Python<'py>,
    t: &Tensor<f32>,
) -> PyResult<Bound<'py, PyArrayDyn<f32>>> {
    let arr = ArrayD::from_shape_vec(IxDyn(t.shape()), t.data().to_vec())
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(arr.into_pyarray(py))
}

fn images_to_numpy<'py>(
    py: Python<'py>,
    imgs: &[Tensor<f32>],
) -> PyResult<Bound<'py, PyArrayDyn<f32>>> {
    if imgs.is_empty() {
        return Err(PyValueError::new_err("no images to stack"));
    }
    let (h, w) = (imgs[0].shape()[0], imgs[0].shape()[1]);
    let mut data = Vec::with_capacity(imgs.len() * h * w);
    for t in imgs {
        data.extend_from_slice(t.data());
    }
    let arr = ArrayD::from_shape_vec(IxDyn(&[imgs.len(), h, w]), data)
        .map_err(|e| PyValueError::new_err(e.to_string()))?;
    Ok(arr.into_pyarray(py))
}

fn metrics_dict<'py>(py: Python<'py>, m: &Metrics) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("step", m.step)?;
    d.set_item("d_loss", m.d_loss)?;
    d.set_item("g_loss", m.g_loss)?;
    d.set_item("per_pixel_mean_error", m.per_pixel_mean_error)?;
    d.set_item("mmd2", m.mmd2)?;
    Ok(d)
}

/// Applies a freshly drawn measurement to `x` (an image or a stack of
/// images) and returns the measured array; its shape can differ from the
/// input for extracting kinds.
#[pyfunction]
fn measure<'py>(
    py: Python<'py>,
    spec_json: &str,
    x: PyReadonlyArrayDyn<'py, f32>,
    seed: u64,
) -> PyResult<Bound<'py, PyArrayDyn<f32>>> {
    let spec = parse_spec(spec_json)?;
    let t = tensor_from_numpy(&x)?;
    let mut rng = Rng::new(seed);
    let theta = sample_theta::<f32>(&spec, t.shape(), &mut rng).map_err(to_py)?;
    let y = apply_measurement(&theta, &t).map_err(to_py)?;
    tensor_to_numpy(py, &y)
}

/// Output shape of the measurement for a given input shape.
#[pyfunction]
fn output_shape(spec_json: &str, shape: Vec<usize>) -> PyResult<Vec<usize>> {
    let spec = parse_spec(spec_json)?;
    measured_shape(&spec, &shape).map_err(to_py)
}

/// All 2^(h*w) binary images over an h-by-w grid, in ascending bit order.
fn binary_images(h: usize, w: usize) -> PyResult<Vec<Tensor<f32>>> {
    let n = h * w;
    let mut out = Vec::with_capacity(1 << n);
    for bits in 0u32..(1u32 << n) {
        let mut t = Tensor::zeros(&[h, w]).map_err(to_py)?;
        for i in 0..n {
            if bits >> i & 1 == 1 {
                t.data_mut()[i] = 1.0;
            }
        }
        out.push(t);
    }
    Ok(out)
}

/// Monte-Carlo estimate of Pr[f(x) = x] over positive uniform images,
/// with an exact injectivity verdict on the binary channel when the grid
/// is small enough to enumerate.
#[pyfunction]
#[pyo3(signature = (spec_json, shape, n_samples = 2000, seed = 1))]
fn identity_probability<'py>(
    py: Python<'py>,
    spec_json: &str,
    shape: (usize, usize),
    n_samples: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = parse_spec(spec_json)?;
    let (h, w) = shape;
    spec.validate(&[h, w]).map_err(to_py)?;
    let mut sampler = |r: &mut Rng| {
        let mut t = Tensor::<f32>::sample(Dist::Uniform01, &[h, w], r)?;
        for v in t.data_mut() {
            *v = 1.0 - *v;
        }
        Ok(t)
    };
    let mut rng = Rng::new(seed);
    let mut report =
        identity_probability_estimate(&spec, &mut sampler, n_samples, &mut rng).map_err(to_py)?;
    let enumerable = !matches!(
        spec.kind,
        MeasurementKind::GaussianProjection | MeasurementKind::ConvolveNoise
    );
    if enumerable && h * w <= 12 {
        let inputs = binary_images(h, w)?;
        let channel = build_channel_matrix(&spec, &inputs).map_err(to_py)?;
        report.channel_injective = Some(injectivity_test(&channel));
    }
    let d = PyDict::new(py);
    d.set_item("identity_probability", report.identity_probability)?;
    d.set_item("half_width", report.half_width)?;
    d.set_item("n_samples", report.n_samples)?;
    d.set_item("n_identity", report.n_identity)?;
    d.set_item("channel_injective", report.channel_injective)?;
    Ok(d)
}

/// Exhaustive simplex-grid minimax solution for one discrete channel:
/// the minimizing input distributions, the pushforward of the first one,
/// its best-response discriminator, and the game value there.
#[pyfunction]
#[pyo3(signature = (channel, target, grid_step = 0.01))]
fn oracle<'py>(
    py: Python<'py>,
    channel: Vec<Vec<f64>>,
    target: Vec<f64>,
    grid_step: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let k = DiscreteChannel::new(channel).map_err(to_py)?;
    let p_y_r = DiscreteDistribution::new(target).map_err(to_py)?;
    let minimizers = generator_optimum_grid_search(&k, &p_y_r, grid_step).map_err(to_py)?;
    let best = minimizers
        .first()
        .ok_or_else(|| PyValueError::new_err("grid search returned no minimizers"))?;
    let p_y_g = pushforward(&k, best).map_err(to_py)?;
    let d_star = optimal_discriminator(&p_y_r, &p_y_g).map_err(to_py)?;
    let value = game_value(&p_y_r, &p_y_g, &d_star).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item(
        "minimizers",
        minimizers
            .iter()
            .map(|m| m.probs().to_vec())
            .collect::<Vec<_>>(),
    )?;
    out.set_item("p_y_g", p_y_g.probs().to_vec())?;
    out.set_item("optimal_discriminator", d_star)?;
    out.set_item("value_at_optimum", value)?;
    Ok(out)
}

/// Minimizer sets of the two component games and of their p2-mixture,
/// plus whether all three sets share a common point.
#[pyfunction]
#[pyo3(signature = (p2, channel_id, channel_noise, p_x_r, target = None, grid_step = 0.01))]
fn mixture<'py>(
    py: Python<'py>,
    p2: f64,
    channel_id: Vec<Vec<f64>>,
    channel_noise: Vec<Vec<f64>>,
    p_x_r: Vec<f64>,
    target: Option<Vec<f64>>,
    grid_step: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg = MixtureGameConfig {
        p2,
        channel_id: DiscreteChannel::new(channel_id).map_err(to_py)?,
        channel_noise: DiscreteChannel::new(channel_noise).map_err(to_py)?,
        target: target
            .map(DiscreteDistribution::new)
            .transpose()
            .map_err(to_py)?,
    };
    let p = DiscreteDistribution::new(p_x_r).map_err(to_py)?;
    let report = mixture_optimum_analysis(&cfg, &p, grid_step).map_err(to_py)?;
    let probs = |ms: &[DiscreteDistribution]| -> Vec<Vec<f64>> {
        ms.iter().map(|m| m.probs().to_vec()).collect()
    };
    let out = PyDict::new(py);
    out.set_item("id_minimizers", probs(&report.id_minimizers))?;
    out.set_item("noise_minimizers", probs(&report.noise_minimizers))?;
    out.set_item("mixture_minimizers", probs(&report.mixture_minimizers))?;
    out.set_item("agreement", report.agreement)?;
    Ok(out)
}

/// Jensen-Shannon divergence (natural log) between two distributions on
/// the same finite space.
#[pyfunction]
fn js_divergence(p: Vec<f64>, q: Vec<f64>) -> PyResult<f64> {
    let p = DiscreteDistribution::new(p).map_err(to_py)?;
    let q = DiscreteDistribution::new(q).map_err(to_py)?;
    js_divergence_core(&p, &q).map_err(to_py)
}

/// Worst relative error between analytic and central-difference gradients
/// over randomized full-pipeline instances in f64.
#[pyfunction]
#[pyo3(signature = (trials = 20, h = 1e-5, seed = 1))]
fn gradcheck(trials: usize, h: f64, seed: u64) -> PyResult<f64> {
    pipeline_gradcheck(trials, h, seed).map_err(to_py)
}

/// Synthetic rectangle images as an [n, height, width] float32 array.
#[pyfunction]
fn synth_rectangles<'py>(
    py: Python<'py>,
    n: usize,
    height: usize,
    width: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyArrayDyn<f32>>> {
    let mut rng = Rng::new(seed);
    let imgs = synth_rectangles_dataset(n, height, width, &mut rng).map_err(to_py)?;
    images_to_numpy(py, &imgs)
}

/// Loads an IDX image file as an [n, height, width] float32 array scaled
/// to [0, 1].
#[pyfunction]
fn load_idx_images<'py>(py: Python<'py>, path: PathBuf) -> PyResult<Bound<'py, PyArrayDyn<f32>>> {
    let imgs = load_idx(&path).map_err(to_py)?;
    images_to_numpy(py, &imgs)
}

/// Writes an [n, height, width] array in [0, 1] as a tiled binary PGM.
#[pyfunction]
fn write_pgm(x: PyReadonlyArrayDyn<'_, f32>, cols: usize, path: PathBuf) -> PyResult<()> {
    let t = tensor_from_numpy(&x)?;
    write_image_grid(&t, cols, &path).map_err(to_py)
}

/// Incremental training driver mirroring `hagn train`: owns the dataset,
/// both generator stages, the discriminator, the optimizer states, and
/// the RNG stream.
#[pyclass]
struct Trainer {
    state: TrainState,
    dataset: Dataset,
}

#[pymethods]
impl Trainer {
    #[new]
    fn new(config_json: &str) -> PyResult<Self> {
        let cfg: TrainConfig = serde_json::from_str(config_json)
            .map_err(|e| PyValueError::new_err(format!("bad config: {e}")))?;
        cfg.validate().map_err(to_py)?;
        let dataset = build_dataset(&cfg).map_err(to_py)?;
        let state = TrainState::new(cfg).map_err(to_py)?;
        Ok(Trainer { state, dataset })
    }

    /// One alternating discriminator/generator update; returns
    /// (d_loss, g_loss).
    fn step(&mut self) -> PyResult<(f64, f64)> {
        let losses = train_step(&mut self.state, &self.dataset).map_err(to_py)?;
        Ok((losses.d_loss, losses.g_loss))
    }

    /// Runs to the configured step count, returning one metrics dict per
    /// evaluation row.
    fn run(&mut self, py: Python<'_>) -> PyResult<Vec<Py<PyDict>>> {
        let log = train_resume(&mut self.state, &self.dataset, |_| Ok(())).map_err(to_py)?;
        log.iter()
            .map(|m| metrics_dict(py, m).map(Bound::unbind))
            .collect()
    }

    /// Distribution metrics against the full clean holdout. Uses a copy
    /// of the training RNG so the training stream is untouched.
    #[pyo3(signature = (n_generated = 400))]
    fn evaluate(&self, py: Python<'_>, n_generated: usize) -> PyResult<Py<PyDict>> {
        let holdout = stack_rows(self.dataset.holdout_clean()).map_err(to_py)?;
        let mut rng = self.state.rng.clone();
        let m = evaluate_metrics(&self.state.gen, &holdout, n_generated, &mut rng).map_err(to_py)?;
        let d = PyDict::new(py);
        d.set_item("step", self.state.step)?;
        d.set_item("per_pixel_mean_error", m.per_pixel_mean_error)?;
        d.set_item("mmd2", m.mmd2)?;
        Ok(d.unbind())
    }

    /// Measurement-free samples as an [n, height, width] float32 array,
    /// drawn from a copy of the training RNG.
    #[pyo3(signature = (n = 16))]
    fn sample<'py>(&self, py: Python<'py>, n: usize) -> PyResult<Bound<'py, PyArrayDyn<f32>>> {
        let mut rng = self.state.rng.clone();
        let grid = sample_grid(&self.state.gen, n, &mut rng).map_err(to_py)?;
        tensor_to_numpy(py, &grid)
    }

    /// Serializes the full training state to a checkpoint file.
    fn save(&self, path: PathBuf) -> PyResult<()> {
        save_checkpoint(&self.state, &path).map_err(to_py)
    }

    /// Restores a checkpoint and rebuilds its dataset from the embedded
    /// config, so training can resume bit-identically.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let ckpt = load_checkpoint(&path).map_err(to_py)?;
        let dataset = build_dataset(&ckpt.state.cfg).map_err(to_py)?;
        Ok(Trainer {
            state: ckpt.state,
            dataset,
        })
    }

    /// Number of optimizer steps taken so far.
    #[getter]
    fn steps_done(&self) -> u64 {
        self.state.step
    }

    /// The active configuration as pretty-printed JSON.
    #[getter]
    fn config(&self) -> PyResult<String> {
        serde_json::to_string_pretty(&self.state.cfg)
            .map_err(|e| PyValueError::new_err(e.to_string()))
    }

    /// (height, width) of generated images.
    #[getter]
    fn image_shape(&self) -> (usize, usize) {
        let [h, w] = self.state.gen.image_shape();
        (h, w)
    }

    /// (train, holdout) image counts of the owned dataset.
    #[getter]
    fn dataset_sizes(&self) -> (usize, usize) {
        let train = self.dataset.train_count();
        (train, self.dataset.len() - train)
    }
}

#[pymodule]
fn hagn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Trainer>()?;
    m.add_function(wrap_pyfunction!(measure, m)?)?;
    m.add_function(wrap_pyfunction!(output_shape, m)?)?;
    m.add_function(wrap_pyfunction!(identity_probability, m)?)?;
    m.add_function(wrap_pyfunction!(oracle, m)?)?;
    m.add_function(wrap_pyfunction!(mixture, m)?)?;
    m.add_function(wrap_pyfunction!(js_divergence, m)?)?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(synth_rectangles, m)?)?;
    m.add_function(wrap_pyfunction!(load_idx_images, m)?)?;
    m.add_function(wrap_pyfunction!(write_pgm, m)?)?;
    Ok(())
}
