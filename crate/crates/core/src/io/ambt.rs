//! AMBT v1 tensor files.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic   4 bytes  "AMBT"
//! version u8       1
//! dtype   u8       0=f32, 1=f64, 2=c64, 3=c128
//! ndim    u8
//! pad     u8       0
//! dims    ndim × u32
//! payload row-major scalars (complex as re, im pairs)
//! ```

use std::fs;
use std::path::Path;

use num_complex::{Complex32, Complex64};

use crate::error::{Error, Result};
use crate::numerics::tensor::{Dtype, Scalar, Tensor};

pub const AMBT_MAGIC: [u8; 4] = *b"AMBT";
pub const AMBT_VERSION: u8 = 1;

/// A tensor of any supported dtype, as read from disk.
#[derive(Debug, Clone)]
pub enum DynTensor {
    F32(Tensor<f32>),
    F64(Tensor<f64>),
    C64(Tensor<Complex32>),
    C128(Tensor<Complex64>),
}

impl DynTensor {
    pub fn dtype(&self) -> Dtype {
        match self {
            DynTensor::F32(_) => Dtype::F32,
            DynTensor::F64(_) => Dtype::F64,
            DynTensor::C64(_) => Dtype::C64,
            DynTensor::C128(_) => Dtype::C128,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            DynTensor::F32(t) => t.shape(),
            DynTensor::F64(t) => t.shape(),
            DynTensor::C64(t) => t.shape(),
            DynTensor::C128(t) => t.shape(),
        }
    }

    /// Widening conversion to c128; always exact.
    pub fn to_c128(&self) -> Tensor<Complex64> {
        match self {
            DynTensor::F32(t) => t.to_f64().to_c128(),
            DynTensor::F64(t) => t.to_c128(),
            DynTensor::C64(t) => t.to_c128(),
            DynTensor::C128(t) => t.clone(),
        }
    }

    /// To f64; complex inputs are rejected.
    pub fn to_f64(&self) -> Result<Tensor<f64>> {
        match self {
            DynTensor::F32(t) => Ok(t.to_f64()),
            DynTensor::F64(t) => Ok(t.clone()),
            _ => Err(Error::Format(format!(
                "cannot read {} tensor as real",
                self.dtype()
            ))),
        }
    }
}

fn encode<T: Scalar>(t: &Tensor<T>) -> Result<Vec<u8>> {
    let ndim = t.ndim();
    if ndim > u8::MAX as usize {
        return Err(Error::Format(format!("too many dims: {ndim}")));
    }
    for &d in t.shape() {
        if d > u32::MAX as usize {
            return Err(Error::Format(format!("dim {d} exceeds u32")));
        }
    }
    let mut out = Vec::with_capacity(8 + 4 * ndim + t.len() * T::DTYPE.size_bytes());
    out.extend_from_slice(&AMBT_MAGIC);
    out.push(AMBT_VERSION);
    out.push(T::DTYPE.code());
    out.push(ndim as u8);
    out.push(0);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for &v in t.data() {
        v.write_le(&mut out);
    }
    Ok(out)
}

pub fn save_tensor<T: Scalar>(path: impl AsRef<Path>, t: &Tensor<T>) -> Result<()> {
    let bytes = encode(t)?;
    fs::write(path, bytes)?;
    Ok(())
}

fn decode(bytes: &[u8]) -> Result<DynTensor> {
    if bytes.len() < 8 {
        return Err(Error::Format("file too short for AMBT header".into()));
    }
    if bytes[..4] != AMBT_MAGIC {
        return Err(Error::Format("bad magic (not an AMBT file)".into()));
    }
    if bytes[4] != AMBT_VERSION {
        return Err(Error::Format(format!("unsupported AMBT version {}", bytes[4])));
    }
    let dtype = Dtype::from_code(bytes[5])?;
    let ndim = bytes[6] as usize;
    if ndim == 0 {
        return Err(Error::Format("zero-dimensional tensor".into()));
    }
    let header = 8 + 4 * ndim;
    if bytes.len() < header {
        return Err(Error::Format("truncated dims".into()));
    }
    let mut shape = Vec::with_capacity(ndim);
    for i in 0..ndim {
        let off = 8 + 4 * i;
        let d = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
        if d == 0 {
            return Err(Error::Format("zero dim".into()));
        }
        shape.push(d);
    }
    let n: usize = shape.iter().product();
    let payload = &bytes[header..];
    let want = n * dtype.size_bytes();
    if payload.len() != want {
        return Err(Error::Format(format!(
            "truncated payload: want {want} bytes, have {}",
            payload.len()
        )));
    }
    fn read_all<T: Scalar>(shape: Vec<usize>, payload: &[u8]) -> Tensor<T> {
        let sz = T::DTYPE.size_bytes();
        let n: usize = shape.iter().product();
        let data: Vec<T> = (0..n).map(|i| T::read_le(&payload[i * sz..])).collect();
        Tensor::new(shape, data).expect("validated dims")
    }
    Ok(match dtype {
        Dtype::F32 => DynTensor::F32(read_all(shape, payload)),
        Dtype::F64 => DynTensor::F64(read_all(shape, payload)),
        Dtype::C64 => DynTensor::C64(read_all(shape, payload)),
        Dtype::C128 => DynTensor::C128(read_all(shape, payload)),
    })
}

pub fn load_tensor_dyn(path: impl AsRef<Path>) -> Result<DynTensor> {
    let bytes = fs::read(&path)?;
    decode(&bytes)
}

/// Typed load; the stored dtype must match exactly.
pub fn load_tensor<T: Scalar>(path: impl AsRef<Path>) -> Result<Tensor<T>> {
    let dynt = load_tensor_dyn(path)?;
    if dynt.dtype() != T::DTYPE {
        return Err(Error::Format(format!(
            "dtype mismatch: file holds {}, requested {}",
            dynt.dtype(),
            T::DTYPE
        )));
    }
    Ok(match dynt {
        DynTensor::F32(t) => cast(t),
        DynTensor::F64(t) => cast(t),
        DynTensor::C64(t) => cast(t),
        DynTensor::C128(t) => cast(t),
    })
}

fn cast<A: Scalar, B: Scalar>(t: Tensor<A>) -> Tensor<B> {
    assert_eq!(A::DTYPE, B::DTYPE);
    // same dtype: reinterpret through the Any machinery
    let any: Box<dyn std::any::Any> = Box::new(t);
    *any.downcast::<Tensor<B>>().expect("dtype equality checked")
}
