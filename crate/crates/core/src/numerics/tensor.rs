//! Dense row-major tensors over f32/f64/c64/c128.
//!
//! `Tensor<T>` is the universal value carrier: images, k-space data,
//! masks, network parameters. Math-heavy paths run on `f64`/`Complex64`;
//! the narrower types exist for storage and interchange.

use std::fmt;

use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};
use crate::numerics::rng::Rng;

/// Element type tag, matching the AMBT on-disk dtype codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
    C64,
    C128,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
            Dtype::C64 => 2,
            Dtype::C128 => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        match code {
            0 => Ok(Dtype::F32),
            1 => Ok(Dtype::F64),
            2 => Ok(Dtype::C64),
            3 => Ok(Dtype::C128),
            other => Err(Error::Format(format!("unknown dtype code {other}"))),
        }
    }

    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
            Dtype::C64 => 8,
            Dtype::C128 => 16,
        }
    }

    pub fn is_complex(self) -> bool {
        matches!(self, Dtype::C64 | Dtype::C128)
    }
}

impl fmt::Display for Dtype {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Dtype::F32 => "f32",
            Dtype::F64 => "f64",
            Dtype::C64 => "c64",
            Dtype::C128 => "c128",
        };
        f.write_str(name)
    }
}

/// Whether a signal space is real-valued or circularly-symmetric complex.
///
/// Complex tensors carry real problems with identically zero imaginary
/// part; the kind decides how many real degrees of freedom noise and
/// Gaussian conditioning see.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalKind {
    Real,
    Complex,
}

impl SignalKind {
    /// Real dimension of an n-element signal of this kind.
    pub fn real_dim(self, n: usize) -> usize {
        match self {
            SignalKind::Real => n,
            SignalKind::Complex => 2 * n,
        }
    }
}

/// Scalar element of a tensor.
pub trait Scalar:
    Copy
    + PartialEq
    + Send
    + Sync
    + fmt::Debug
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Neg<Output = Self>
    + 'static
{
    const DTYPE: Dtype;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_f64(v: f64) -> Self;
    fn conj(self) -> Self;
    fn scale(self, k: f64) -> Self;
    /// Modulus.
    fn abs(self) -> f64;
    fn abs_sq(self) -> f64;
    fn re(self) -> f64;
    /// conj(self) * rhs — the elementwise kernel of the inner product.
    fn mul_conj(self, rhs: Self) -> Self;
    /// Standard normal: real variance 1; complex with independent
    /// real/imaginary parts of variance 1 each.
    fn standard_normal(rng: &mut Rng) -> Self;
    fn is_finite(self) -> bool;
    fn write_le(self, out: &mut Vec<u8>);
    fn read_le(bytes: &[u8]) -> Self;
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn conj(self) -> Self {
        self
    }
    fn scale(self, k: f64) -> Self {
        (self as f64 * k) as f32
    }
    fn abs(self) -> f64 {
        (self as f64).abs()
    }
    fn abs_sq(self) -> f64 {
        let v = self as f64;
        v * v
    }
    fn re(self) -> f64 {
        self as f64
    }
    fn mul_conj(self, rhs: Self) -> Self {
        self * rhs
    }
    fn standard_normal(rng: &mut Rng) -> Self {
        rng.normal() as f32
    }
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f32::from_le_bytes(bytes[..4].try_into().unwrap())
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn conj(self) -> Self {
        self
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
    fn abs(self) -> f64 {
        f64::abs(self)
    }
    fn abs_sq(self) -> f64 {
        self * self
    }
    fn re(self) -> f64 {
        self
    }
    fn mul_conj(self, rhs: Self) -> Self {
        self * rhs
    }
    fn standard_normal(rng: &mut Rng) -> Self {
        rng.normal()
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        f64::from_le_bytes(bytes[..8].try_into().unwrap())
    }
}

impl Scalar for Complex32 {
    const DTYPE: Dtype = Dtype::C64;

    fn zero() -> Self {
        Complex32::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex32::new(1.0, 0.0)
    }
    fn from_f64(v: f64) -> Self {
        Complex32::new(v as f32, 0.0)
    }
    fn conj(self) -> Self {
        Complex32::conj(&self)
    }
    fn scale(self, k: f64) -> Self {
        self * k as f32
    }
    fn abs(self) -> f64 {
        self.norm() as f64
    }
    fn abs_sq(self) -> f64 {
        self.norm_sqr() as f64
    }
    fn re(self) -> f64 {
        self.re as f64
    }
    fn mul_conj(self, rhs: Self) -> Self {
        Complex32::conj(&self) * rhs
    }
    fn standard_normal(rng: &mut Rng) -> Self {
        Complex32::new(rng.normal() as f32, rng.normal() as f32)
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.re.to_le_bytes());
        out.extend_from_slice(&self.im.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        Complex32::new(
            f32::from_le_bytes(bytes[..4].try_into().unwrap()),
            f32::from_le_bytes(bytes[4..8].try_into().unwrap()),
        )
    }
}

impl Scalar for Complex64 {
    const DTYPE: Dtype = Dtype::C128;

    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn from_f64(v: f64) -> Self {
        Complex64::new(v, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
    fn abs(self) -> f64 {
        self.norm()
    }
    fn abs_sq(self) -> f64 {
        self.norm_sqr()
    }
    fn re(self) -> f64 {
        self.re
    }
    fn mul_conj(self, rhs: Self) -> Self {
        Complex64::conj(&self) * rhs
    }
    fn standard_normal(rng: &mut Rng) -> Self {
        Complex64::new(rng.normal(), rng.normal())
    }
    fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
    fn write_le(self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.re.to_le_bytes());
        out.extend_from_slice(&self.im.to_le_bytes());
    }
    fn read_le(bytes: &[u8]) -> Self {
        Complex64::new(
            f64::from_le_bytes(bytes[..8].try_into().unwrap()),
            f64::from_le_bytes(bytes[8..16].try_into().unwrap()),
        )
    }
}

/// Dense row-major n-dimensional array.
#[derive(Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() {
            return Err(Error::invalid("tensor shape must be nonempty"));
        }
        if shape.contains(&0) {
            return Err(Error::invalid(format!("tensor dims must be positive: {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::ShapeMismatch {
                expected: shape,
                got: vec![data.len()],
            });
        }
        Ok(Tensor { shape, data })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::zero(); n],
        }
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: (0..n).map(&mut f).collect(),
        }
    }

    /// i.i.d. standard normal entries (complex: unit variance per part).
    pub fn noise(shape: &[usize], rng: &mut Rng) -> Self {
        Self::from_fn(shape, |_| T::standard_normal(rng))
    }

    pub fn dtype(&self) -> Dtype {
        T::DTYPE
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
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

    /// Row-major strides.
    pub fn strides(&self) -> Vec<usize> {
        let mut s = vec![1usize; self.shape.len()];
        for i in (0..self.shape.len().saturating_sub(1)).rev() {
            s[i] = s[i + 1] * self.shape[i + 1];
        }
        s
    }

    pub fn reshape(mut self, shape: Vec<usize>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.is_empty() {
            return Err(Error::ShapeMismatch {
                expected: shape,
                got: self.shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.check_same_shape(other)?;
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

    pub fn check_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::ShapeMismatch {
                expected: self.shape.clone(),
                got: other.shape.clone(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul_elem(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, k: f64) -> Self {
        self.map(|v| v.scale(k))
    }

    /// self + k * other, in place.
    pub fn axpy(&mut self, k: f64, other: &Self) -> Result<()> {
        self.check_same_shape(other)?;
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a = *a + b.scale(k);
        }
        Ok(())
    }

    /// Σ conj(a_i) b_i.
    pub fn inner(&self, other: &Self) -> Result<T> {
        self.check_same_shape(other)?;
        let mut acc = T::zero();
        for (&a, &b) in self.data.iter().zip(&other.data) {
            acc = acc + a.mul_conj(b);
        }
        Ok(acc)
    }

    pub fn norm_sq(&self) -> f64 {
        self.data.iter().map(|v| v.abs_sq()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn norm_l1(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl<T: Scalar> fmt::Debug for Tensor<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "Tensor<{}>(shape={:?}, n={})",
            T::DTYPE,
            self.shape,
            self.data.len()
        )
    }
}

impl Tensor<f64> {
    pub fn to_c128(&self) -> Tensor<Complex64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn to_f32(&self) -> Tensor<f32> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }
}

impl Tensor<f32> {
    pub fn to_f64(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| v as f64).collect(),
        }
    }
}

impl Tensor<Complex32> {
    pub fn to_c128(&self) -> Tensor<Complex64> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| Complex64::new(v.re as f64, v.im as f64))
                .collect(),
        }
    }
}

impl Tensor<Complex64> {
    pub fn re_part(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.re).collect(),
        }
    }

    pub fn im_part(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.im).collect(),
        }
    }

    pub fn magnitude(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v.norm()).collect(),
        }
    }

    pub fn conj(&self) -> Tensor<Complex64> {
        self.map(|v| v.conj())
    }

    pub fn to_c64(&self) -> Tensor<Complex32> {
        Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .map(|v| Complex32::new(v.re as f32, v.im as f32))
                .collect(),
        }
    }

    /// Noise matching a signal kind: real kind leaves imaginary parts zero.
    pub fn noise_of_kind(shape: &[usize], kind: SignalKind, rng: &mut Rng) -> Tensor<Complex64> {
        match kind {
            SignalKind::Real => Tensor::from_fn(shape, |_| Complex64::new(rng.normal(), 0.0)),
            SignalKind::Complex => Tensor::noise(shape, rng),
        }
    }

    /// Real view: `[re...]` for real signals, `[re..., im...]` for complex.
    pub fn real_view(&self, kind: SignalKind) -> Vec<f64> {
        match kind {
            SignalKind::Real => self.data.iter().map(|v| v.re).collect(),
            SignalKind::Complex => {
                let mut out = Vec::with_capacity(2 * self.data.len());
                out.extend(self.data.iter().map(|v| v.re));
                out.extend(self.data.iter().map(|v| v.im));
                out
            }
        }
    }

    pub fn from_real_view(shape: &[usize], kind: SignalKind, view: &[f64]) -> Result<Tensor<Complex64>> {
        let n: usize = shape.iter().product();
        if view.len() != kind.real_dim(n) {
            return Err(Error::ShapeMismatch {
                expected: vec![kind.real_dim(n)],
                got: vec![view.len()],
            });
        }
        let data = match kind {
            SignalKind::Real => view.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
            SignalKind::Complex => (0..n)
                .map(|i| Complex64::new(view[i], view[n + i]))
                .collect(),
        };
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }
}
