//! Coil sensitivity profiles.
//!
//! Smooth complex spatial weights, one per receive coil, renormalized
//! pointwise so that Σᵢ Sᵢᴴ Sᵢ = I holds to machine precision. The
//! magnitudes are Gaussian bumps at random centers and the phases are
//! linear ramps, which is enough structure for synthetic studies.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::{load_tensor, save_tensor, KvMap};
use crate::numerics::rng::Rng;
use crate::numerics::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct CoilMaps {
    pub shape: Vec<usize>,
    /// One complex diagonal profile per coil, each over `shape`.
    pub maps: Vec<Tensor<Complex64>>,
}

pub fn make_coil_maps(shape: &[usize], n_coils: usize, smoothness: f64, seed: u64) -> Result<CoilMaps> {
    if n_coils == 0 {
        return Err(Error::invalid("coil count must be >= 1"));
    }
    if shape.is_empty() {
        return Err(Error::invalid("empty coil map shape"));
    }
    let mut rng = Rng::new(seed);
    let n: usize = shape.iter().product();
    let ndim = shape.len();
    let width = smoothness.max(0.05);
    let mut raw: Vec<Tensor<Complex64>> = Vec::with_capacity(n_coils);
    for _ in 0..n_coils {
        let center: Vec<f64> = (0..ndim).map(|_| rng.uniform()).collect();
        let slope: Vec<f64> = (0..ndim).map(|_| rng.uniform_range(-0.5, 0.5)).collect();
        let phase0 = rng.uniform_range(0.0, 2.0 * std::f64::consts::PI);
        let map = Tensor::from_fn(shape, |flat| {
            // normalized coordinates of the flat index
            let mut rem = flat;
            let mut dist2 = 0.0;
            let mut ramp = phase0;
            for d in (0..ndim).rev() {
                let idx = rem % shape[d];
                rem /= shape[d];
                let u = if shape[d] > 1 {
                    idx as f64 / (shape[d] - 1) as f64
                } else {
                    0.5
                };
                let delta = u - center[d];
                dist2 += delta * delta;
                ramp += 2.0 * std::f64::consts::PI * slope[d] * u;
            }
            let mag = (-dist2 / (2.0 * width * width)).exp() + 0.05;
            Complex64::from_polar(mag, ramp)
        });
        raw.push(map);
    }
    // pointwise renormalization: Σ |s_i|² = 1
    let mut maps = raw;
    for flat in 0..n {
        let norm: f64 = maps.iter().map(|m| m.data()[flat].norm_sqr()).sum::<f64>().sqrt();
        for m in maps.iter_mut() {
            m.data_mut()[flat] /= norm;
        }
    }
    Ok(CoilMaps {
        shape: shape.to_vec(),
        maps,
    })
}

impl CoilMaps {
    pub fn n_coils(&self) -> usize {
        self.maps.len()
    }

    /// Uniform unit maps (S = I for a single coil).
    pub fn uniform(shape: &[usize], n_coils: usize) -> CoilMaps {
        let w = 1.0 / (n_coils as f64).sqrt();
        CoilMaps {
            shape: shape.to_vec(),
            maps: (0..n_coils)
                .map(|_| Tensor::full(shape, Complex64::new(w, 0.0)))
                .collect(),
        }
    }

    /// Max pointwise |Σ SᵢᴴSᵢ − 1|.
    pub fn normalization_residual(&self) -> f64 {
        let n: usize = self.shape.iter().product();
        let mut worst = 0.0f64;
        for flat in 0..n {
            let s: f64 = self.maps.iter().map(|m| m.data()[flat].norm_sqr()).sum();
            worst = worst.max((s - 1.0).abs());
        }
        worst
    }

    /// Stacked [n_coils, shape...] tensor.
    pub fn stacked(&self) -> Tensor<Complex64> {
        let mut shape = vec![self.n_coils()];
        shape.extend_from_slice(&self.shape);
        let per: usize = self.shape.iter().product();
        Tensor::from_fn(&shape, |flat| self.maps[flat / per].data()[flat % per])
    }

    pub fn from_stacked(t: &Tensor<Complex64>) -> Result<CoilMaps> {
        if t.ndim() < 2 {
            return Err(Error::invalid("stacked coil tensor needs >= 2 dims"));
        }
        let n_coils = t.shape()[0];
        let shape = t.shape()[1..].to_vec();
        let per: usize = shape.iter().product();
        let maps = (0..n_coils)
            .map(|c| {
                Tensor::new(shape.clone(), t.data()[c * per..(c + 1) * per].to_vec()).unwrap()
            })
            .collect();
        Ok(CoilMaps { shape, maps })
    }

    pub fn save(&self, base: impl AsRef<Path>) -> Result<()> {
        let base = base.as_ref();
        save_tensor(base.with_extension("ambt"), &self.stacked())?;
        let mut kv = KvMap::new();
        kv.set("n_coils", self.n_coils());
        kv.set("shape", super::mask::join_usize(&self.shape));
        kv.save(base.with_extension("kv"))
    }

    pub fn load(base: impl AsRef<Path>) -> Result<CoilMaps> {
        let t: Tensor<Complex64> = load_tensor(base.as_ref().with_extension("ambt"))?;
        CoilMaps::from_stacked(&t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_coil_has_unit_modulus() {
        let c = make_coil_maps(&[8, 8], 1, 0.5, 1).unwrap();
        for v in c.maps[0].data() {
            assert!((v.norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn normalization_enforced() {
        for seed in [1u64, 2, 3] {
            let c = make_coil_maps(&[16, 16], 4, 0.4, seed).unwrap();
            assert!(c.normalization_residual() < 1e-10);
        }
    }

    #[test]
    fn seeds_change_profiles_not_normalization() {
        let a = make_coil_maps(&[8, 8], 4, 0.4, 1).unwrap();
        let b = make_coil_maps(&[8, 8], 4, 0.4, 2).unwrap();
        assert_ne!(a.maps[0], b.maps[0]);
        assert!(a.normalization_residual() < 1e-10);
        assert!(b.normalization_residual() < 1e-10);
    }

    #[test]
    fn one_dimensional_maps_supported() {
        let c = make_coil_maps(&[16], 2, 0.5, 3).unwrap();
        assert!(c.normalization_residual() < 1e-10);
    }

    #[test]
    fn stacked_round_trip() {
        let c = make_coil_maps(&[4, 8], 3, 0.5, 9).unwrap();
        let back = CoilMaps::from_stacked(&c.stacked()).unwrap();
        assert_eq!(back, c);
    }
}
