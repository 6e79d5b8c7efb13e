//! Distribution-match metrics comparing generated samples against a clean
//! holdout: per-pixel mean error and unbiased MMD² with an RBF kernel.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{matmul_nt, Scalar, Tensor};

/// One metrics log row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub step: u64,
    pub d_loss: f64,
    pub g_loss: f64,
    pub per_pixel_mean_error: f64,
    pub mmd2: f64,
}

impl Metrics {
    pub const CSV_HEADER: &'static str = "step,d_loss,g_loss,per_pixel_mean_error,mmd2";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{}",
            self.step, self.d_loss, self.g_loss, self.per_pixel_mean_error, self.mmd2
        )
    }
}

fn require_rows<T: Scalar>(t: &Tensor<T>, name: &str, min_rows: usize) -> Result<(usize, usize)> {
    if t.shape().len() != 2 {
        return Err(Error::invalid_shape(format!(
            "{name} must be [samples, features], got {:?}",
            t.shape()
        )));
    }
    if t.shape()[0] < min_rows {
        return Err(Error::invalid_argument(format!(
            "{name} needs at least {min_rows} samples, got {}",
            t.shape()[0]
        )));
    }
    Ok((t.shape()[0], t.shape()[1]))
}

/// Mean over features of |E[generated] - E[reference]|.
pub fn per_pixel_mean_error<T: Scalar>(generated: &Tensor<T>, reference: &Tensor<T>) -> Result<f64> {
    let (gn, gd) = require_rows(generated, "generated", 1)?;
    let (rn, rd) = require_rows(reference, "reference", 1)?;
    if gd != rd {
        return Err(Error::invalid_shape(format!(
            "feature counts differ: {gd} vs {rd}"
        )));
    }
    let mut err = 0.0;
    for j in 0..gd {
        let mut gm = 0.0;
        for i in 0..gn {
            gm += generated.data()[i * gd + j].to_f64();
        }
        let mut rm = 0.0;
        for i in 0..rn {
            rm += reference.data()[i * rd + j].to_f64();
        }
        err += (gm / gn as f64 - rm / rn as f64).abs();
    }
    Ok(err / gd as f64)
}

/// Squared distances between all rows of the pooled stack of `x` over `y`.
fn pooled_sq_distances(pooled: &Tensor<f64>) -> Result<Vec<f64>> {
    let n = pooled.shape()[0];
    let gram = matmul_nt(pooled, pooled)?;
    let sq: Vec<f64> = (0..n).map(|i| gram.at2(i, i)).collect();
    let mut d2 = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            // Clamp tiny negatives from cancellation.
            d2[i * n + j] = (sq[i] + sq[j] - 2.0 * gram.at2(i, j)).max(0.0);
        }
    }
    Ok(d2)
}

/// Median pairwise Euclidean distance over the pooled sample; the standard
/// RBF bandwidth heuristic. Upper median for even counts.
fn median_distance(d2: &[f64], n: usize) -> f64 {
    let mut dists: Vec<f64> = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            dists.push(d2[i * n + j].sqrt());
        }
    }
    let mid = dists.len() / 2;
    dists.select_nth_unstable_by(mid, f64::total_cmp);
    dists[mid]
}

/// Unbiased MMD² between sample sets `x` [m, d] and `y` [n, d] under an RBF
/// kernel with median-heuristic bandwidth. Slightly negative values are
/// expected when the distributions match.
pub fn mmd2_unbiased<T: Scalar>(x: &Tensor<T>, y: &Tensor<T>) -> Result<f64> {
    let (m, dx) = require_rows(x, "x", 2)?;
    let (n, dy) = require_rows(y, "y", 2)?;
    if dx != dy {
        return Err(Error::invalid_shape(format!(
            "feature counts differ: {dx} vs {dy}"
        )));
    }
    let mut pooled = Tensor::<f64>::zeros(&[m + n, dx])?;
    for (i, row) in x.data().chunks(dx).enumerate() {
        for (j, &v) in row.iter().enumerate() {
            pooled.data_mut()[i * dx + j] = v.to_f64();
        }
    }
    for (i, row) in y.data().chunks(dx).enumerate() {
        for (j, &v) in row.iter().enumerate() {
            pooled.data_mut()[(m + i) * dx + j] = v.to_f64();
        }
    }
    let total = m + n;
    let d2 = pooled_sq_distances(&pooled)?;
    let sigma = median_distance(&d2, total).max(1e-12);
    let denom = 2.0 * sigma * sigma;
    let kernel = |i: usize, j: usize| (-d2[i * total + j] / denom).exp();

    let mut xx = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                xx += kernel(i, j);
            }
        }
    }
    let mut yy = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                yy += kernel(m + i, m + j);
            }
        }
    }
    let mut xy = 0.0;
    for i in 0..m {
        for j in 0..n {
            xy += kernel(i, m + j);
        }
    }
    Ok(xx / (m * (m - 1)) as f64 + yy / (n * (n - 1)) as f64 - 2.0 * xy / (m * n) as f64)
}

/// Stacks per-item tensors into a [count, features] matrix.
pub fn stack_rows<T: Scalar>(items: &[Tensor<T>]) -> Result<Tensor<T>> {
    if items.is_empty() {
        return Err(Error::invalid_argument("cannot stack zero samples"));
    }
    let d = items[0].len();
    let mut out = Tensor::zeros(&[items.len(), d])?;
    for (i, item) in items.iter().enumerate() {
        if item.len() != d {
            return Err(Error::invalid_shape(format!(
                "sample {i} has {} features, expected {d}",
                item.len()
            )));
        }
        out.data_mut()[i * d..(i + 1) * d].copy_from_slice(item.data());
    }
    Ok(out)
}
