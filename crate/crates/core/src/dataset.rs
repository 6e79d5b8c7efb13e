//! Synthetic corpus generation, IDX ingestion, and measured-dataset
//! construction with a deterministic clean holdout split.

use std::path::Path;

use crate::error::{Error, Result};
use crate::measure::{apply_measurement, sample_theta, MeasurementSpec, ThetaSample};
use crate::rng::Rng;
use crate::tensor::Tensor;

/// Clean images plus their one-Θ-per-image measurements. The first 80% of
/// the measured list is the training partition; the last 20% of the clean
/// list is the evaluation holdout.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub clean: Vec<Tensor<f32>>,
    pub measured: Vec<Tensor<f32>>,
    pub thetas: Vec<ThetaSample<f32>>,
    pub spec: MeasurementSpec,
    pub seed: u64,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.clean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clean.is_empty()
    }

    fn holdout_count(&self) -> usize {
        self.len() / 5
    }

    pub fn train_count(&self) -> usize {
        self.len() - self.holdout_count()
    }

    /// Measurements the trainer may consume.
    pub fn train_measured(&self) -> &[Tensor<f32>] {
        &self.measured[..self.train_count()]
    }

    /// Clean images reserved for evaluation.
    pub fn holdout_clean(&self) -> &[Tensor<f32>] {
        &self.clean[self.train_count()..]
    }
}

/// Black images, each with one white axis-aligned rectangle whose sides
/// are uniform over [H/4, H/2] and [W/4, W/2] at a uniform valid position.
pub fn synth_rectangles_dataset(
    s: usize,
    h: usize,
    w: usize,
    rng: &mut Rng,
) -> Result<Vec<Tensor<f32>>> {
    if h < 8 || w < 8 {
        return Err(Error::invalid_argument(format!(
            "rectangles need at least 8x8 images, got {h}x{w}"
        )));
    }
    if s < 1 {
        return Err(Error::invalid_argument("dataset needs at least one image"));
    }
    let mut out = Vec::with_capacity(s);
    for _ in 0..s {
        let rh = rng.uniform_range(h / 4, h / 2);
        let rw = rng.uniform_range(w / 4, w / 2);
        let top = rng.uniform_usize(h - rh + 1);
        let left = rng.uniform_usize(w - rw + 1);
        let mut img = Tensor::zeros(&[h, w])?;
        for r in top..top + rh {
            for c in left..left + rw {
                img.data_mut()[r * w + c] = 1.0;
            }
        }
        out.push(img);
    }
    Ok(out)
}

/// Measures every image with a fresh seeded Θ and records the Θ draws.
pub fn make_measured_dataset(
    clean: Vec<Tensor<f32>>,
    spec: MeasurementSpec,
    seed: u64,
) -> Result<Dataset> {
    if clean.is_empty() {
        return Err(Error::invalid_argument("dataset needs at least one image"));
    }
    let mut rng = Rng::new(seed);
    let mut measured = Vec::with_capacity(clean.len());
    let mut thetas = Vec::with_capacity(clean.len());
    for img in &clean {
        let theta = sample_theta::<f32>(&spec, img.shape(), &mut rng)?;
        measured.push(apply_measurement(&theta, img)?);
        thetas.push(theta);
    }
    Ok(Dataset {
        clean,
        measured,
        thetas,
        spec,
        seed,
    })
}

const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::format(
            bytes.len() as u64,
            format!("file ends before the 4 bytes at offset {offset}"),
        ));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// Parses an IDX image file (big-endian magic 0x00000803, three u32 dims,
/// u8 pixels) into per-image tensors scaled to [0, 1].
pub fn load_idx(path: &Path) -> Result<Vec<Tensor<f32>>> {
    let bytes = std::fs::read(path)?;
    let magic = read_u32_be(&bytes, 0)?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::format(
            0,
            format!("magic 0x{magic:08x} is not an IDX image file (0x{IDX_IMAGE_MAGIC:08x})"),
        ));
    }
    let s = read_u32_be(&bytes, 4)? as usize;
    let h = read_u32_be(&bytes, 8)? as usize;
    let w = read_u32_be(&bytes, 12)? as usize;
    let expected = 16usize
        .checked_add(
            s.checked_mul(h)
                .and_then(|v| v.checked_mul(w))
                .ok_or_else(|| Error::format(4, "dimension product overflows"))?,
        )
        .ok_or_else(|| Error::format(4, "dimension product overflows"))?;
    if bytes.len() < expected {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated: {s}x{h}x{w} needs {expected} bytes, file has {}", bytes.len()),
        ));
    }
    if bytes.len() > expected {
        return Err(Error::format(
            expected as u64,
            format!("{} trailing bytes after pixel data", bytes.len() - expected),
        ));
    }
    let mut out = Vec::with_capacity(s);
    for i in 0..s {
        let start = 16 + i * h * w;
        let data = bytes[start..start + h * w]
            .iter()
            .map(|&b| b as f32 / 255.0)
            .collect();
        out.push(Tensor::from_vec(&[h, w], data)?);
    }
    Ok(out)
}
