//! Radix-2 FFT with unitary normalization.
//!
//! Both directions carry a 1/√n factor so the transform is unitary:
//! the adjoint of `fft` is `ifft`, and Parseval holds exactly (up to
//! rounding). Lengths must be powers of two.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

fn check_pow2(n: usize) -> Result<()> {
    if n < 1 || !n.is_power_of_two() {
        return Err(Error::FftLength { len: n });
    }
    Ok(())
}

/// Twiddle table: w[k] = exp(-2πi k / n) for k < n/2.
fn twiddles(n: usize, inverse: bool) -> Vec<Complex64> {
    let sign = if inverse { 1.0 } else { -1.0 };
    (0..n / 2)
        .map(|k| {
            let theta = sign * 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            Complex64::new(theta.cos(), theta.sin())
        })
        .collect()
}

/// In-place iterative Cooley–Tukey on a power-of-two buffer, then 1/√n.
fn radix2(buf: &mut [Complex64], tw: &[Complex64]) {
    let n = buf.len();
    if n == 1 {
        return;
    }
    // bit-reversal permutation
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if i < j {
            buf.swap(i, j);
        }
    }
    let mut len = 2;
    while len <= n {
        let half = len / 2;
        let step = n / len;
        let mut base = 0;
        while base < n {
            for k in 0..half {
                let w = tw[k * step];
                let u = buf[base + k];
                let v = buf[base + k + half] * w;
                buf[base + k] = u + v;
                buf[base + k + half] = u - v;
            }
            base += len;
        }
        len <<= 1;
    }
    let scale = 1.0 / (n as f64).sqrt();
    for v in buf.iter_mut() {
        *v *= scale;
    }
}

fn transform_axis(x: &Tensor<Complex64>, axis: usize, inverse: bool) -> Result<Tensor<Complex64>> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(Error::invalid(format!(
            "axis {axis} out of range for shape {shape:?}"
        )));
    }
    let n = shape[axis];
    check_pow2(n)?;
    let tw = twiddles(n, inverse);
    let strides = x.strides();
    let stride = strides[axis];
    let total = x.len();
    let mut out = x.clone();
    let data = out.data_mut();
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    // iterate over all lines along `axis`
    let outer: usize = total / n;
    for lane in 0..outer {
        // compute the flat offset of this lane's first element
        let mut rem = lane;
        let mut offset = 0;
        for (d, (&dim, &st)) in shape.iter().zip(&strides).enumerate() {
            if d == axis {
                continue;
            }
            let idx = rem % dim;
            rem /= dim;
            offset += idx * st;
        }
        for (k, slot) in line.iter_mut().enumerate() {
            *slot = data[offset + k * stride];
        }
        radix2(&mut line, &tw);
        for (k, &v) in line.iter().enumerate() {
            data[offset + k * stride] = v;
        }
    }
    Ok(out)
}

/// Unitary DFT along one axis.
pub fn fft(x: &Tensor<Complex64>, axis: usize) -> Result<Tensor<Complex64>> {
    transform_axis(x, axis, false)
}

/// Unitary inverse DFT along one axis.
pub fn ifft(x: &Tensor<Complex64>, axis: usize) -> Result<Tensor<Complex64>> {
    transform_axis(x, axis, true)
}

/// Unitary DFT over every axis (the full n-dimensional transform).
pub fn fft_all(x: &Tensor<Complex64>) -> Result<Tensor<Complex64>> {
    let mut out = x.clone();
    for axis in 0..x.ndim() {
        out = fft(&out, axis)?;
    }
    Ok(out)
}

pub fn ifft_all(x: &Tensor<Complex64>) -> Result<Tensor<Complex64>> {
    let mut out = x.clone();
    for axis in 0..x.ndim() {
        out = ifft(&out, axis)?;
    }
    Ok(out)
}

fn roll(x: &Tensor<Complex64>, amounts: &[usize]) -> Tensor<Complex64> {
    let shape = x.shape().to_vec();
    let strides = x.strides();
    Tensor::from_fn(&shape, |flat| {
        let mut rem = flat;
        let mut src = 0;
        for d in (0..shape.len()).rev() {
            let idx = rem % shape[d];
            rem /= shape[d];
            let src_idx = (idx + shape[d] - amounts[d] % shape[d]) % shape[d];
            src += src_idx * strides[d];
        }
        x.data()[src]
    })
}

/// Move the zero-frequency component to the array center.
pub fn fftshift(x: &Tensor<Complex64>) -> Tensor<Complex64> {
    let amounts: Vec<usize> = x.shape().iter().map(|&d| d / 2).collect();
    roll(x, &amounts)
}

/// Inverse of [`fftshift`] (identical for even lengths).
pub fn ifftshift(x: &Tensor<Complex64>) -> Tensor<Complex64> {
    let amounts: Vec<usize> = x.shape().iter().map(|&d| d - d / 2).collect();
    roll(x, &amounts)
}

/// Centered k-space transform: DC lands in the middle of the array, so
/// "central lines" are the low frequencies. Still unitary.
pub fn kspace_fwd(x: &Tensor<Complex64>) -> Result<Tensor<Complex64>> {
    Ok(fftshift(&fft_all(x)?))
}

/// Adjoint (and inverse) of [`kspace_fwd`].
pub fn kspace_adj(z: &Tensor<Complex64>) -> Result<Tensor<Complex64>> {
    ifft_all(&ifftshift(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::Rng;

    fn randc(shape: &[usize], seed: u64) -> Tensor<Complex64> {
        let mut rng = Rng::new(seed);
        Tensor::noise(shape, &mut rng)
    }

    #[test]
    fn impulse_becomes_constant() {
        let mut e0 = Tensor::<Complex64>::zeros(&[4]);
        e0.data_mut()[0] = Complex64::new(1.0, 0.0);
        let f = fft(&e0, 0).unwrap();
        for &v in f.data() {
            assert!((v - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn round_trip_identity() {
        let x = randc(&[64], 1);
        let back = ifft(&fft(&x, 0).unwrap(), 0).unwrap();
        let err = back.sub(&x).unwrap().max_abs();
        assert!(err < 1e-12, "round trip error {err}");
    }

    #[test]
    fn parseval_inner_products() {
        for (i, &n) in [4usize, 8, 16, 256].iter().enumerate() {
            let x = randc(&[n], 10 + i as u64);
            let y = randc(&[n], 20 + i as u64);
            let lhs = fft(&x, 0).unwrap().inner(&fft(&y, 0).unwrap()).unwrap();
            let rhs = x.inner(&y).unwrap();
            assert!((lhs - rhs).norm() < 1e-12 * (n as f64), "n={n}");
        }
    }

    #[test]
    fn unitarity_sweep() {
        // ~10^3 random vectors spread over sizes 4..256
        let sizes = [4usize, 8, 16, 32, 64, 128, 256];
        let per_size = 143;
        let mut rng = Rng::new(42);
        for &n in &sizes {
            for _ in 0..per_size {
                let x = Tensor::<Complex64>::noise(&[n], &mut rng);
                let fx = fft(&x, 0).unwrap();
                assert!((fx.norm() - x.norm()).abs() < 1e-12 * (n as f64).sqrt());
                let back = ifft(&fx, 0).unwrap();
                assert!(back.sub(&x).unwrap().max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn two_dimensional_transform_per_axis() {
        let x = randc(&[8, 16], 3);
        let f = fft_all(&x).unwrap();
        let back = ifft_all(&f).unwrap();
        assert!(back.sub(&x).unwrap().max_abs() < 1e-12);
        // matches axis-by-axis composition
        let g = fft(&fft(&x, 0).unwrap(), 1).unwrap();
        assert!(g.sub(&f).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn non_power_of_two_rejected() {
        let x = Tensor::<Complex64>::zeros(&[6]);
        assert!(matches!(fft(&x, 0), Err(Error::FftLength { len: 6 })));
    }

    #[test]
    fn centered_transform_round_trips_and_centers_dc() {
        let x = randc(&[8, 16], 4);
        let z = kspace_fwd(&x).unwrap();
        let back = kspace_adj(&z).unwrap();
        assert!(back.sub(&x).unwrap().max_abs() < 1e-12);
        // a constant image concentrates at the array center
        let flat = Tensor::<Complex64>::full(&[8], Complex64::new(1.0, 0.0));
        let zf = kspace_fwd(&flat).unwrap();
        for (i, v) in zf.data().iter().enumerate() {
            if i == 4 {
                assert!((v.re - (8.0f64).sqrt()).abs() < 1e-12);
            } else {
                assert!(v.norm() < 1e-12);
            }
        }
    }
}
