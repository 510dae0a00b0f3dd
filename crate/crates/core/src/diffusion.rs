//! Variance-exploding noise schedule and time discretization.
//!
//! σ(t) = t on t ∈ [t_min, t_max] with diffusion coefficient
//! g(t) = √(2·σ̇·σ). The reverse-time grid is ρ-spaced
//! (t_i = (t_max^{1/ρ} + i/(N−1)·(t_min^{1/ρ} − t_max^{1/ρ}))^ρ)
//! or linear, always strictly decreasing from t_max to t_min.

use crate::error::{Error, Result};
use crate::numerics::rng::Rng;
use crate::numerics::tensor::{Scalar, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpacingRule {
    /// Power-law spacing with the given ρ (7.0 is the usual default).
    Rho(f64),
    Linear,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub sigma_min: f64,
    pub sigma_max: f64,
    pub spacing: SpacingRule,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        NoiseSchedule {
            sigma_min: 0.002,
            sigma_max: 80.0,
            spacing: SpacingRule::Rho(7.0),
        }
    }
}

impl NoiseSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64, spacing: SpacingRule) -> Result<Self> {
        if sigma_min < 0.0 || sigma_max <= sigma_min {
            return Err(Error::invalid(format!(
                "need 0 <= sigma_min < sigma_max, got [{sigma_min}, {sigma_max}]"
            )));
        }
        if let SpacingRule::Rho(rho) = spacing {
            if rho < 1.0 {
                return Err(Error::invalid(format!("rho must be >= 1, got {rho}")));
            }
        }
        Ok(NoiseSchedule {
            sigma_min,
            sigma_max,
            spacing,
        })
    }

    pub fn sigma(&self, t: f64) -> f64 {
        t
    }

    pub fn sigma_dot(&self, _t: f64) -> f64 {
        1.0
    }

    /// g(t) = √(2 σ̇ σ).
    pub fn g(&self, t: f64) -> f64 {
        (2.0 * self.sigma_dot(t) * self.sigma(t)).sqrt()
    }

    pub fn contains(&self, t: f64) -> bool {
        (self.sigma_min..=self.sigma_max).contains(&t)
    }

    /// Strictly decreasing grid from t_max to t_min with N points.
    pub fn time_grid(&self, steps: usize) -> Result<Vec<f64>> {
        if steps < 2 {
            return Err(Error::invalid(format!("time grid needs N >= 2, got {steps}")));
        }
        let n = steps;
        let mut grid: Vec<f64> = match self.spacing {
            SpacingRule::Rho(rho) => {
                let a = self.sigma_max.powf(1.0 / rho);
                let b = self.sigma_min.powf(1.0 / rho);
                (0..n)
                    .map(|i| {
                        let frac = i as f64 / (n - 1) as f64;
                        (a + frac * (b - a)).powf(rho)
                    })
                    .collect()
            }
            SpacingRule::Linear => (0..n)
                .map(|i| {
                    let frac = i as f64 / (n - 1) as f64;
                    self.sigma_max + frac * (self.sigma_min - self.sigma_max)
                })
                .collect(),
        };
        // pin the endpoints exactly; powf round trips drift by ulps
        grid[0] = self.sigma_max;
        grid[n - 1] = self.sigma_min;
        debug_assert!(grid.windows(2).all(|w| w[0] > w[1]));
        Ok(grid)
    }

    /// x₀ + σ(t)·η with η standard normal (complex: unit variance per
    /// real and imaginary part).
    pub fn add_noise<T: Scalar>(&self, x0: &Tensor<T>, t: f64, rng: &mut Rng) -> Result<Tensor<T>> {
        if !self.contains(t) {
            return Err(Error::invalid(format!(
                "t = {t} outside [{}, {}]",
                self.sigma_min, self.sigma_max
            )));
        }
        Ok(add_noise_sigma(x0, self.sigma(t), rng))
    }
}

/// x₀ + σ·η for a directly chosen noise level.
pub fn add_noise_sigma<T: Scalar>(x0: &Tensor<T>, sigma: f64, rng: &mut Rng) -> Tensor<T> {
    let mut out = x0.clone();
    for v in out.data_mut() {
        *v = *v + T::standard_normal(rng).scale(sigma);
    }
    out
}

/// x₀ + σ·η on the complex carrier, with η drawn for the given signal
/// kind: real-kind signals receive noise only in the real part.
pub fn add_noise_sigma_of_kind(
    x0: &Tensor<num_complex::Complex64>,
    sigma: f64,
    kind: crate::numerics::tensor::SignalKind,
    rng: &mut Rng,
) -> Tensor<num_complex::Complex64> {
    let noise = Tensor::noise_of_kind(x0.shape(), kind, rng);
    let mut out = x0.clone();
    out.axpy(sigma, &noise).unwrap();
    out
}
