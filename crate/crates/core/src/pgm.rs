//! Binary PGM (P5) emission of sample grids: cells separated by one-pixel
//! mid-gray rules, values clamped to [0, 1] and scaled to 0..255.

use std::path::Path;

use crate::checkpoint::write_atomic;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

const SEPARATOR: u8 = 128;

fn to_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Renders `[n, H, W]` samples as a `cols`-wide grid and writes one P5
/// file. Unused trailing cells are black.
pub fn write_image_grid(samples: &Tensor<f32>, cols: usize, path: &Path) -> Result<()> {
    let shape = samples.shape();
    if shape.len() != 3 {
        return Err(Error::invalid_shape(format!(
            "expected [n, H, W] samples, got {shape:?}"
        )));
    }
    let (n, h, w) = (shape[0], shape[1], shape[2]);
    if cols == 0 {
        return Err(Error::invalid_argument("cols must be positive"));
    }
    let rows = n.div_ceil(cols);
    let canvas_h = rows * h + (rows - 1);
    let canvas_w = cols * w + (cols - 1);
    let mut canvas = vec![SEPARATOR; canvas_h * canvas_w];
    for cell in 0..rows * cols {
        let (cr, cc) = (cell / cols, cell % cols);
        let top = cr * (h + 1);
        let left = cc * (w + 1);
        for r in 0..h {
            for c in 0..w {
                let v = if cell < n {
                    to_byte(samples.data()[cell * h * w + r * w + c])
                } else {
                    0
                };
                canvas[(top + r) * canvas_w + left + c] = v;
            }
        }
    }
    let mut bytes = format!("P5\n{canvas_w} {canvas_h}\n255\n").into_bytes();
    bytes.extend_from_slice(&canvas);
    write_atomic(path, &bytes)
}
