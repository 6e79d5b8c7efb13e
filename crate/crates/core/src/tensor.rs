//! Dense row-major tensors over f32 (training) or f64 (oracle paths).

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Element types the numeric core runs on. Training uses `f32`; gradient
/// checking and the discrete-game oracle use `f64`.
pub trait Scalar:
    num_traits::Float + Default + std::fmt::Debug + std::fmt::Display + Send + Sync + 'static
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;

    /// C = alpha * A * B + beta * C over raw strided buffers.
    ///
    /// # Safety
    /// Pointers must cover m*k, k*n and m*n elements under the given strides.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Scalar for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Scalar for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Distributions `Tensor::sample` can draw from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dist {
    Uniform01,
    StandardNormal,
}

/// Dense n-dimensional array, row-major, `data.len() == product(shape)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let n = checked_numel(shape)?;
        if data.len() != n {
            return Err(Error::invalid_shape(format!(
                "data length {} does not match shape {:?} (= {} elements)",
                data.len(),
                shape,
                n
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let n = checked_numel(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        })
    }

    pub fn full(shape: &[usize], value: T) -> Result<Self> {
        let n = checked_numel(shape)?;
        Ok(Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        })
    }

    /// Identity matrix `[n, n]`.
    pub fn eye(n: usize) -> Result<Self> {
        let mut t = Self::zeros(&[n, n])?;
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        Ok(t)
    }

    /// Tensor of i.i.d. draws; advances `rng` deterministically.
    pub fn sample(dist: Dist, shape: &[usize], rng: &mut Rng) -> Result<Self> {
        let n = checked_numel(shape)?;
        let data = match dist {
            Dist::Uniform01 => (0..n).map(|_| T::from_f64(rng.uniform01())).collect(),
            Dist::StandardNormal => {
                let mut buf = vec![0.0f64; n];
                rng.fill_standard_normal(&mut buf);
                buf.into_iter().map(T::from_f64).collect()
            }
        };
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Same data, new shape; element counts must agree.
    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n = checked_numel(shape)?;
        if n != self.data.len() {
            return Err(Error::invalid_shape(format!(
                "cannot reshape {:?} ({} elements) to {:?} ({} elements)",
                self.shape,
                self.data.len(),
                shape,
                n
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::invalid_shape(format!(
                "elementwise op on mismatched shapes {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |acc, &x| acc.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Element at a 2-D position; rows/cols of a `[r, c]` tensor.
    pub fn at2(&self, row: usize, col: usize) -> T {
        debug_assert_eq!(self.shape.len(), 2);
        self.data[row * self.shape[1] + col]
    }

    /// Convert elementwise to a different precision.
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64(x.to_f64())).collect(),
        }
    }
}

fn checked_numel(shape: &[usize]) -> Result<usize> {
    if shape.iter().any(|&e| e == 0) {
        return Err(Error::invalid_shape(format!(
            "shape {shape:?} has a zero extent"
        )));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &e| acc.checked_mul(e))
        .ok_or_else(|| Error::invalid_shape(format!("shape {shape:?} overflows")))
}

fn require_matrix<'a, T: Scalar>(t: &'a Tensor<T>, name: &str) -> Result<(&'a [T], usize, usize)> {
    if t.shape().len() != 2 {
        return Err(Error::invalid_shape(format!(
            "{name} must be 2-D, got shape {:?}",
            t.shape()
        )));
    }
    Ok((t.data(), t.shape()[0], t.shape()[1]))
}

/// Standard matrix product `[p,q] x [q,r] -> [p,r]`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (ad, p, q) = require_matrix(a, "matmul lhs")?;
    let (bd, q2, r) = require_matrix(b, "matmul rhs")?;
    if q != q2 {
        return Err(Error::invalid_shape(format!(
            "matmul inner extents differ: [{p},{q}] x [{q2},{r}]"
        )));
    }
    let mut out = Tensor::zeros(&[p, r])?;
    unsafe {
        T::gemm(
            p,
            q,
            r,
            T::one(),
            ad.as_ptr(),
            q as isize,
            1,
            bd.as_ptr(),
            r as isize,
            1,
            T::zero(),
            out.data_mut().as_mut_ptr(),
            r as isize,
            1,
        );
    }
    Ok(out)
}

/// `a [p,q] x bᵀ` for `b [r,q]`, yielding `[p,r]`. Used for `x · Wᵀ`.
pub(crate) fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (ad, p, q) = require_matrix(a, "matmul_nt lhs")?;
    let (bd, r, q2) = require_matrix(b, "matmul_nt rhs")?;
    if q != q2 {
        return Err(Error::invalid_shape(format!(
            "matmul_nt inner extents differ: [{p},{q}] x [{r},{q2}]ᵀ"
        )));
    }
    let mut out = Tensor::zeros(&[p, r])?;
    unsafe {
        T::gemm(
            p,
            q,
            r,
            T::one(),
            ad.as_ptr(),
            q as isize,
            1,
            bd.as_ptr(),
            1,
            q as isize,
            T::zero(),
            out.data_mut().as_mut_ptr(),
            r as isize,
            1,
        );
    }
    Ok(out)
}

/// `aᵀ x b` for `a [q,p]`, `b [q,r]`, yielding `[p,r]`. Used for `δᵀ · x`.
pub(crate) fn matmul_tn<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (ad, q, p) = require_matrix(a, "matmul_tn lhs")?;
    let (bd, q2, r) = require_matrix(b, "matmul_tn rhs")?;
    if q != q2 {
        return Err(Error::invalid_shape(format!(
            "matmul_tn inner extents differ: [{q},{p}]ᵀ x [{q2},{r}]"
        )));
    }
    let mut out = Tensor::zeros(&[p, r])?;
    unsafe {
        T::gemm(
            p,
            q,
            r,
            T::one(),
            ad.as_ptr(),
            1,
            p as isize,
            bd.as_ptr(),
            r as isize,
            1,
            T::zero(),
            out.data_mut().as_mut_ptr(),
            r as isize,
            1,
        );
    }
    Ok(out)
}
