//! Orthonormal Haar wavelet transform, 1-D and 2-D, multi-level.
//!
//! Single level on a length-2m axis: `a[i] = (x[2i]+x[2i+1])/√2`,
//! `d[i] = (x[2i]-x[2i+1])/√2`, laid out `[a | d]`. Deeper levels recurse
//! on the approximation block, so the transform is an isometry and
//! `haar_inv ∘ haar_fwd` is the identity.

use crate::error::{Error, Result};
use crate::numerics::tensor::{Scalar, Tensor};

const SQRT1_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

fn check_levels(shape: &[usize], levels: usize) -> Result<()> {
    if levels == 0 {
        return Err(Error::invalid("haar levels must be >= 1"));
    }
    if shape.len() > 2 {
        return Err(Error::invalid(format!(
            "haar transform supports 1-D and 2-D tensors, got shape {shape:?}"
        )));
    }
    let divisor = 1usize << levels;
    for &d in shape {
        if d % divisor != 0 {
            return Err(Error::NotDivisible { dim: d, divisor });
        }
    }
    Ok(())
}

/// One forward level over `buf[..n]` (n even).
fn fwd_pairs<T: Scalar>(buf: &mut [T], n: usize, scratch: &mut Vec<T>) {
    scratch.clear();
    scratch.extend_from_slice(&buf[..n]);
    let half = n / 2;
    for i in 0..half {
        let a = scratch[2 * i];
        let b = scratch[2 * i + 1];
        buf[i] = (a + b).scale(SQRT1_2);
        buf[half + i] = (a - b).scale(SQRT1_2);
    }
}

fn inv_pairs<T: Scalar>(buf: &mut [T], n: usize, scratch: &mut Vec<T>) {
    scratch.clear();
    scratch.extend_from_slice(&buf[..n]);
    let half = n / 2;
    for i in 0..half {
        let a = scratch[i];
        let d = scratch[half + i];
        buf[2 * i] = (a + d).scale(SQRT1_2);
        buf[2 * i + 1] = (a - d).scale(SQRT1_2);
    }
}

fn for_each_line<T: Scalar>(
    t: &mut Tensor<T>,
    axis: usize,
    span: &[usize], // size of the active block per axis
    mut f: impl FnMut(&mut [T]),
) {
    let shape = t.shape().to_vec();
    let strides = t.strides();
    let stride = strides[axis];
    let line_len = span[axis];
    let mut line = vec![T::zero(); line_len];
    // lanes iterate over the other axes inside the active block
    let mut lanes = 1usize;
    for (d, &s) in span.iter().enumerate() {
        if d != axis {
            lanes *= s;
        }
    }
    let data = t.data_mut();
    for lane in 0..lanes {
        let mut rem = lane;
        let mut offset = 0;
        for d in 0..shape.len() {
            if d == axis {
                continue;
            }
            let idx = rem % span[d];
            rem /= span[d];
            offset += idx * strides[d];
        }
        for (k, slot) in line.iter_mut().enumerate() {
            *slot = data[offset + k * stride];
        }
        f(&mut line);
        for (k, &v) in line.iter().enumerate() {
            data[offset + k * stride] = v;
        }
    }
}

/// Multi-level orthonormal Haar analysis.
pub fn haar_fwd<T: Scalar>(x: &Tensor<T>, levels: usize) -> Result<Tensor<T>> {
    check_levels(x.shape(), levels)?;
    let mut out = x.clone();
    let ndim = out.ndim();
    let mut span = out.shape().to_vec();
    let mut scratch = Vec::new();
    for _ in 0..levels {
        for axis in 0..ndim {
            let n = span[axis];
            for_each_line(&mut out, axis, &span, |line| fwd_pairs(line, n, &mut scratch));
        }
        for s in span.iter_mut() {
            *s /= 2;
        }
    }
    Ok(out)
}

/// Multi-level Haar synthesis; exact inverse of [`haar_fwd`].
pub fn haar_inv<T: Scalar>(x: &Tensor<T>, levels: usize) -> Result<Tensor<T>> {
    check_levels(x.shape(), levels)?;
    let mut out = x.clone();
    let ndim = out.ndim();
    let full = out.shape().to_vec();
    let mut scratch = Vec::new();
    for level in (0..levels).rev() {
        let span: Vec<usize> = full.iter().map(|&d| d >> level).collect();
        for axis in (0..ndim).rev() {
            let n = span[axis];
            for_each_line(&mut out, axis, &span, |line| inv_pairs(line, n, &mut scratch));
        }
    }
    Ok(out)
}

/// Largest level count the shape admits (capped for practicality).
pub fn max_levels(shape: &[usize], cap: usize) -> usize {
    let mut levels = usize::MAX;
    for &d in shape {
        levels = levels.min(d.trailing_zeros() as usize);
    }
    levels.min(cap).max(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::Rng;
    use num_complex::Complex64;

    #[test]
    fn constant_image_energy_in_approximation() {
        let x = Tensor::<f64>::full(&[8, 8], 3.0);
        let w = haar_fwd(&x, 3).unwrap();
        // all energy in the single top-level approximation coefficient
        assert!((w.data()[0] - 3.0 * 8.0).abs() < 1e-12);
        let tail: f64 = w.data()[1..].iter().map(|v| v * v).sum();
        assert!(tail < 1e-20);
    }

    #[test]
    fn isometry_and_round_trip() {
        let mut rng = Rng::new(11);
        for shape in [vec![64usize], vec![16, 32]] {
            let x = Tensor::<Complex64>::noise(&shape, &mut rng);
            let w = haar_fwd(&x, 2).unwrap();
            assert!((w.norm() - x.norm()).abs() < 1e-12 * x.norm());
            let back = haar_inv(&w, 2).unwrap();
            assert!(back.sub(&x).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn indivisible_dims_rejected() {
        let x = Tensor::<f64>::zeros(&[12]);
        assert!(matches!(
            haar_fwd(&x, 3),
            Err(Error::NotDivisible { dim: 12, divisor: 8 })
        ));
    }
}
