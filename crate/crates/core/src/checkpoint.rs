//! Run persistence. A checkpoint file is `HAGN`, a little-endian format
//! version, a little-endian JSON header length, the JSON header (config,
//! step, RNG state, layer architectures, and the tensor manifest), then
//! every tensor as little-endian f32 words in manifest order.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::adam::AdamState;
use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, Network};
use crate::rng::Rng;
use crate::tensor::Tensor;
use crate::train::{GeneratorSplit, TrainConfig, TrainState};

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"HAGN";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Byte position where the JSON header starts.
const HEADER_START: u64 = 12;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct NetArch {
    dims: Vec<usize>,
    activations: Vec<Activation>,
}

impl NetArch {
    fn of<T: crate::tensor::Scalar>(net: &Network<T>) -> Self {
        let mut dims = vec![net.in_dim()];
        let mut activations = Vec::new();
        for layer in net.layers() {
            dims.push(layer.out_dim());
            activations.push(layer.activation());
        }
        NetArch { dims, activations }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    step: u64,
    rng_state: u64,
    g2: NetArch,
    g1: NetArch,
    disc: NetArch,
    adam_steps: [u64; 3],
    tensors: Vec<TensorEntry>,
}

/// A parsed checkpoint: the file's format version plus the reconstructed
/// run state.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub version: u32,
    pub state: TrainState,
}

fn param_entries<T: crate::tensor::Scalar>(prefix: &str, net: &Network<T>) -> Vec<TensorEntry> {
    let mut out = Vec::new();
    for (i, layer) in net.layers().iter().enumerate() {
        out.push(TensorEntry {
            name: format!("{prefix}.{i}.weight"),
            shape: layer.weight().shape().to_vec(),
        });
        out.push(TensorEntry {
            name: format!("{prefix}.{i}.bias"),
            shape: layer.bias().shape().to_vec(),
        });
    }
    out
}

fn moment_entries(prefix: &str, opt: &AdamState<f32>) -> Vec<TensorEntry> {
    let (m, v) = opt.moments();
    let mut out = Vec::new();
    for (which, tensors) in [("m", m), ("v", v)] {
        for (i, t) in tensors.iter().enumerate() {
            out.push(TensorEntry {
                name: format!("{prefix}.{which}.{i}"),
                shape: t.shape().to_vec(),
            });
        }
    }
    out
}

/// Tensor manifest in data order: network parameters, then optimizer
/// moments, matching the traversal order used everywhere else (per layer
/// weight then bias).
fn manifest(state: &TrainState) -> Vec<TensorEntry> {
    let mut out = param_entries("g2", state.gen.g2());
    out.extend(param_entries("g1", state.gen.g1()));
    out.extend(param_entries("disc", &state.disc));
    out.extend(moment_entries("opt_g2", &state.opt_g2));
    out.extend(moment_entries("opt_g1", &state.opt_g1));
    out.extend(moment_entries("opt_disc", &state.opt_disc));
    out
}

fn collect_data(state: &TrainState, buf: &mut Vec<u8>) {
    let mut push = |t: &Tensor<f32>| {
        for &v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    };
    state.gen.g2().visit_params(&mut push);
    state.gen.g1().visit_params(&mut push);
    state.disc.visit_params(&mut push);
    for opt in [&state.opt_g2, &state.opt_g1, &state.opt_disc] {
        let (m, v) = opt.moments();
        for t in m.iter().chain(v.iter()) {
            push(t);
        }
    }
}

/// Serializes `state` and atomically replaces `path`.
pub fn save_checkpoint(state: &TrainState, path: &Path) -> Result<()> {
    let header = Header {
        config: state.cfg.clone(),
        step: state.step,
        rng_state: state.rng.state(),
        g2: NetArch::of(state.gen.g2()),
        g1: NetArch::of(state.gen.g1()),
        disc: NetArch::of(&state.disc),
        adam_steps: [
            state.opt_g2.step_count(),
            state.opt_g1.step_count(),
            state.opt_disc.step_count(),
        ],
        tensors: manifest(state),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let mut buf = Vec::new();
    buf.extend_from_slice(&CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(header_bytes.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header_bytes);
    collect_data(state, &mut buf);
    write_atomic(path, &buf)
}

/// Writes via a temporary file in the destination directory so readers
/// never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    tmp.write_all(bytes)?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::format(
                self.bytes.len() as u64,
                format!("file ends before {what}"),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32_le(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

fn rebuild_network(arch: &NetArch, entries: &[TensorEntry], data: &mut Reader) -> Result<Network<f32>> {
    if arch.dims.len() != arch.activations.len() + 1 || arch.dims.is_empty() {
        return Err(Error::format(
            HEADER_START,
            "layer dims and activations are inconsistent",
        ));
    }
    let mut layers = Vec::new();
    let mut entry_idx = 0;
    for (i, act) in arch.activations.iter().enumerate() {
        let (in_dim, out_dim) = (arch.dims[i], arch.dims[i + 1]);
        let weight = read_tensor(entries, &mut entry_idx, &[out_dim, in_dim], data)?;
        let bias = read_tensor(entries, &mut entry_idx, &[out_dim], data)?;
        layers.push(DenseLayer::from_params(weight, bias, *act)?);
    }
    Network::from_layers(layers)
}

fn read_tensor(
    entries: &[TensorEntry],
    entry_idx: &mut usize,
    expected_shape: &[usize],
    data: &mut Reader,
) -> Result<Tensor<f32>> {
    let entry = entries.get(*entry_idx).ok_or_else(|| {
        Error::format(HEADER_START, "tensor manifest is shorter than the architecture requires")
    })?;
    if entry.shape != expected_shape {
        return Err(Error::format(
            HEADER_START,
            format!(
                "tensor {} has shape {:?}, architecture requires {:?}",
                entry.name, entry.shape, expected_shape
            ),
        ));
    }
    *entry_idx += 1;
    let count: usize = expected_shape.iter().product();
    let raw = data.take(count * 4, &format!("tensor {}", entry.name))?;
    let values = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Tensor::from_vec(expected_shape, values)
}

fn rebuild_moments(
    param_shapes: &[Vec<usize>],
    entries: &[TensorEntry],
    entry_offset: usize,
    t: u64,
    data: &mut Reader,
) -> Result<AdamState<f32>> {
    let mut idx = entry_offset;
    let mut read_set = |_which: &str| -> Result<Vec<Tensor<f32>>> {
        let mut out = Vec::new();
        for shape in param_shapes {
            out.push(read_tensor(entries, &mut idx, shape, data)?);
        }
        Ok(out)
    };
    let m = read_set("m")?;
    let v = read_set("v")?;
    AdamState::from_parts(m, v, t)
}

fn param_shapes(net: &Network<f32>) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    net.visit_params(&mut |t| out.push(t.shape().to_vec()));
    out
}

/// Parses a checkpoint file, validating the layout and every tensor shape.
pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path)?;
    let mut r = Reader {
        bytes: &bytes,
        pos: 0,
    };
    let magic = r.take(4, "the magic")?;
    if magic != CHECKPOINT_MAGIC {
        return Err(Error::format(0, format!("bad magic {magic:02x?}")));
    }
    let version = r.u32_le("the format version")?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::format(
            4,
            format!("unsupported format version {version}"),
        ));
    }
    let header_len = r.u32_le("the header length")? as usize;
    let header_bytes = r.take(header_len, "the JSON header")?;
    let header: Header = serde_json::from_slice(header_bytes)
        .map_err(|e| Error::format(HEADER_START, format!("header is not valid JSON: {e}")))?;

    let mut entry_idx = 0;
    let count_net =
        |arch: &NetArch| -> usize { 2 * arch.activations.len() };
    let g2 = rebuild_network(&header.g2, &header.tensors, &mut r)?;
    entry_idx += count_net(&header.g2);
    let g1 = {
        let n = rebuild_network(&header.g1, &header.tensors[entry_idx..], &mut r)?;
        entry_idx += count_net(&header.g1);
        n
    };
    let disc = {
        let n = rebuild_network(&header.disc, &header.tensors[entry_idx..], &mut r)?;
        entry_idx += count_net(&header.disc);
        n
    };

    let cfg = header.config;
    cfg.validate().map_err(|e| {
        Error::format(HEADER_START, format!("embedded config is invalid: {e}"))
    })?;
    let gen = GeneratorSplit::new(
        g2,
        cfg.hidden_shape,
        cfg.spec_hidden.clone(),
        g1,
        [cfg.height, cfg.width],
    )
    .map_err(|e| Error::format(HEADER_START, format!("networks do not fit the config: {e}")))?;

    let mut opts = Vec::new();
    for (shapes, t) in [
        (param_shapes(gen.g2()), header.adam_steps[0]),
        (param_shapes(gen.g1()), header.adam_steps[1]),
        (param_shapes(&disc), header.adam_steps[2]),
    ] {
        let opt = rebuild_moments(&shapes, &header.tensors, entry_idx, t, &mut r)?;
        entry_idx += 2 * shapes.len();
        opts.push(opt);
    }
    if entry_idx != header.tensors.len() {
        return Err(Error::format(
            HEADER_START,
            format!(
                "tensor manifest lists {} tensors, architecture requires {entry_idx}",
                header.tensors.len()
            ),
        ));
    }
    if r.pos != bytes.len() {
        return Err(Error::format(
            r.pos as u64,
            format!("{} trailing bytes after the tensor data", bytes.len() - r.pos),
        ));
    }

    let opt_disc = opts.pop().expect("three optimizers");
    let opt_g1 = opts.pop().expect("three optimizers");
    let opt_g2 = opts.pop().expect("three optimizers");
    Ok(Checkpoint {
        version,
        state: TrainState {
            cfg,
            gen,
            disc,
            opt_g2,
            opt_g1,
            opt_disc,
            rng: Rng::from_state(header.rng_state),
            step: header.step,
        },
    })
}
