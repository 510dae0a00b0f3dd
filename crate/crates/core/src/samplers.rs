//! Reverse-time samplers: unconditional, posterior-guided (DPS), the
//! ambient variant that only ever feeds corrupted states to its
//! denoiser (A-DPS), and the one-step restorer (A-OS).
//!
//! One Euler–Maruyama step from t to t' integrates
//! dx = −2σ̇σ·(score + γ_t·∇ log p(y|x̂₀))·dt + g(t)·dw with
//! score = (x̂₀ − x)/σ², injecting g(t)·√|Δt| noise per step; the
//! deterministic probability-flow variant halves the drift and drops
//! the noise. The guidance gradient flows through the denoiser by its
//! exact Jacobian-transpose product, and — in the ambient case — then
//! through the frozen training operator by its adjoint, since the
//! denoiser input is re-corrupted from the current state at every step.

use num_complex::Complex64;

use crate::diffusion::NoiseSchedule;
use crate::error::{Error, Result};
use crate::models::{Conditioning, Denoiser};
use crate::numerics::rng::Rng;
use crate::numerics::tensor::{SignalKind, Tensor};
use crate::operators::LinearOp;

pub const GAMMA_RECOMMENDED: std::ops::RangeInclusive<f64> = 0.1..=10.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Guidance {
    /// Constant likelihood weight γ.
    Constant(f64),
    /// γ_t = 1 / ‖y − A x̂₀‖₂ recomputed every step.
    Normalized,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerConfig {
    pub steps: usize,
    pub guidance: Guidance,
    pub seed: u64,
    /// true: reverse SDE with per-step noise; false: probability flow.
    pub stochastic: bool,
}

impl SamplerConfig {
    /// Validates N ≥ 2 and keeps constant γ inside the recommended
    /// [0.1, 10] range; use [`SamplerConfig::with_gamma_override`] to
    /// step outside it deliberately.
    pub fn new(steps: usize, guidance: Guidance, seed: u64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::invalid(format!("sampler needs N >= 2 steps, got {steps}")));
        }
        if let Guidance::Constant(gamma) = guidance {
            if !GAMMA_RECOMMENDED.contains(&gamma) {
                return Err(Error::invalid(format!(
                    "constant guidance {gamma} outside the recommended [0.1, 10]; \
                     use with_gamma_override to force it"
                )));
            }
        }
        Ok(SamplerConfig {
            steps,
            guidance,
            seed,
            stochastic: true,
        })
    }

    /// Any γ, including 0 (which reduces DPS to the unconditional
    /// sampler) and large strong-guidance values.
    pub fn with_gamma_override(steps: usize, gamma: f64, seed: u64) -> Result<Self> {
        if steps < 2 {
            return Err(Error::invalid(format!("sampler needs N >= 2 steps, got {steps}")));
        }
        Ok(SamplerConfig {
            steps,
            guidance: Guidance::Constant(gamma),
            seed,
            stochastic: true,
        })
    }

    pub fn deterministic(mut self) -> Self {
        self.stochastic = false;
        self
    }
}

/// A measurement and the operator that produced it.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    pub measurement: Tensor<Complex64>,
    pub operator: LinearOp,
}

impl InverseProblem {
    pub fn new(measurement: Tensor<Complex64>, operator: LinearOp) -> Result<Self> {
        if measurement.shape() != operator.output_shape().as_slice() {
            return Err(Error::ShapeMismatch {
                expected: operator.output_shape(),
                got: measurement.shape().to_vec(),
            });
        }
        Ok(InverseProblem {
            measurement,
            operator,
        })
    }
}

/// Per-step estimate: x̂₀ plus an optional already-γ-scaled
/// log-likelihood gradient.
struct StepEval {
    xhat: Tensor<Complex64>,
    guidance: Option<Tensor<Complex64>>,
}

fn integrate(
    shape: &[usize],
    kind: SignalKind,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    mut eval: impl FnMut(&Tensor<Complex64>, f64) -> Result<StepEval>,
    mut trace: Option<&mut Vec<Tensor<Complex64>>>,
) -> Result<Tensor<Complex64>> {
    let grid = schedule.time_grid(cfg.steps)?;
    let mut rng = Rng::new(cfg.seed);
    let mut x = Tensor::<Complex64>::noise_of_kind(shape, kind, &mut rng)
        .scale(schedule.sigma(grid[0]));
    if let Some(t) = trace.as_deref_mut() {
        t.push(x.clone());
    }
    for i in 0..grid.len() - 1 {
        let t = grid[i];
        let dt = grid[i + 1] - grid[i]; // negative
        let sigma = schedule.sigma(t);
        let StepEval { xhat, guidance } = eval(&x, sigma)?;
        // drift bracket: score + γ_t ∇ log p
        let mut bracket = xhat.sub(&x)?.scale(1.0 / (sigma * sigma));
        if let Some(g) = guidance {
            bracket = bracket.add(&g)?;
        }
        let drift_scale = if cfg.stochastic { 2.0 } else { 1.0 };
        let coeff = -drift_scale * schedule.sigma_dot(t) * sigma * dt;
        x.axpy(coeff, &bracket)?;
        if cfg.stochastic {
            let noise = Tensor::<Complex64>::noise_of_kind(shape, kind, &mut rng);
            x.axpy(schedule.g(t) * dt.abs().sqrt(), &noise)?;
        }
        if !x.all_finite() {
            return Err(Error::Numerical(format!(
                "sampler state became non-finite at step {i} (t = {t})"
            )));
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(x.clone());
        }
    }
    Ok(x)
}

fn gamma_value(guidance: Guidance, residual_norm: f64) -> f64 {
    match guidance {
        Guidance::Constant(g) => g,
        Guidance::Normalized => 1.0 / residual_norm.max(1e-12),
    }
}

/// All-ones mask channel for networks with a mask contract that are
/// driven on uncorrupted inputs.
fn ones_mask_for(den: &Denoiser) -> Option<Tensor<f64>> {
    match den {
        Denoiser::Mlp(m) if m.conditioning == Conditioning::MaskChannel => {
            Some(Tensor::full(&m.signal_shape, 1.0))
        }
        _ => None,
    }
}

/// Mask channel induced by a frozen training operator.
fn mask_channel_of(op: &LinearOp, den: &Denoiser) -> Result<Option<Tensor<f64>>> {
    let needs_mask = matches!(den, Denoiser::Mlp(m) if m.conditioning == Conditioning::MaskChannel);
    if !needs_mask {
        return Ok(None);
    }
    match op {
        LinearOp::Identity { shape } => Ok(Some(Tensor::full(shape, 1.0))),
        LinearOp::Inpaint { mask } => Ok(Some(mask.dense())),
        LinearOp::MriAdjointAggregate { mask, .. } => Ok(Some(mask.dense())),
        other => Err(Error::MaskKind(format!(
            "training operator `{}` provides no mask channel for a mask-conditioned denoiser",
            other.kind_name()
        ))),
    }
}

/// Unconditional reverse-time sampling from the denoiser's prior.
pub fn sample_uncond(
    den: &Denoiser,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
) -> Result<Tensor<Complex64>> {
    sample_uncond_traced(den, schedule, cfg, None)
}

pub fn sample_uncond_traced(
    den: &Denoiser,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    trace: Option<&mut Vec<Tensor<Complex64>>>,
) -> Result<Tensor<Complex64>> {
    let mask = ones_mask_for(den);
    integrate(
        den.signal_shape(),
        den.signal(),
        schedule,
        cfg,
        |x, sigma| {
            Ok(StepEval {
                xhat: den.denoise(x, mask.as_ref(), sigma)?,
                guidance: None,
            })
        },
        trace,
    )
}

/// Posterior sampling with a clean-trained denoiser: each step adds
/// γ_t · ∇_{x_t} log p(y | x̂₀(x_t)) to the score.
pub fn dps_sample(
    den: &Denoiser,
    problem: &InverseProblem,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
) -> Result<Tensor<Complex64>> {
    dps_sample_traced(den, problem, schedule, cfg, None)
}

pub fn dps_sample_traced(
    den: &Denoiser,
    problem: &InverseProblem,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    trace: Option<&mut Vec<Tensor<Complex64>>>,
) -> Result<Tensor<Complex64>> {
    let mask = ones_mask_for(den);
    let a = &problem.operator;
    let y = &problem.measurement;
    integrate(
        den.signal_shape(),
        den.signal(),
        schedule,
        cfg,
        |x, sigma| {
            let xhat = den.denoise(x, mask.as_ref(), sigma)?;
            let guidance = if matches!(cfg.guidance, Guidance::Constant(g) if g == 0.0) {
                None
            } else {
                let residual = a.apply(&xhat)?.sub(y)?;
                let gamma = gamma_value(cfg.guidance, residual.norm());
                // ∇_{x̂₀} ½‖y − A x̂₀‖² = Aᴴ(A x̂₀ − y); pull back
                // through the denoiser and negate for ∇ log p
                let cot = a.adjoint(&residual)?;
                let glog = den.vjp(x, mask.as_ref(), sigma, &cot)?.scale(-gamma);
                Some(glog)
            };
            Ok(StepEval { xhat, guidance })
        },
        trace,
    )
}

/// Ambient posterior sampling: the denoiser only ever sees
/// y_t = A_train·x_t (re-corrupted from the current state) plus the
/// A_train mask channel, and the likelihood gradient chains through
/// A_trainᴴ.
pub fn adps_sample(
    den: &Denoiser,
    problem: &InverseProblem,
    a_train: &LinearOp,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
) -> Result<Tensor<Complex64>> {
    adps_sample_traced(den, problem, a_train, schedule, cfg, None)
}

pub fn adps_sample_traced(
    den: &Denoiser,
    problem: &InverseProblem,
    a_train: &LinearOp,
    schedule: &NoiseSchedule,
    cfg: &SamplerConfig,
    trace: Option<&mut Vec<Tensor<Complex64>>>,
) -> Result<Tensor<Complex64>> {
    if a_train.input_shape() != den.signal_shape() {
        return Err(Error::ShapeMismatch {
            expected: den.signal_shape().to_vec(),
            got: a_train.input_shape().to_vec(),
        });
    }
    let mask = mask_channel_of(a_train, den)?;
    let a_inf = &problem.operator;
    let y = &problem.measurement;
    integrate(
        den.signal_shape(),
        den.signal(),
        schedule,
        cfg,
        |x, sigma| {
            let y_t = a_train.apply(x)?;
            let xhat = den.denoise(&y_t, mask.as_ref(), sigma)?;
            let guidance = if matches!(cfg.guidance, Guidance::Constant(g) if g == 0.0) {
                None
            } else {
                let residual = a_inf.apply(&xhat)?.sub(y)?;
                let gamma = gamma_value(cfg.guidance, residual.norm());
                let cot = a_inf.adjoint(&residual)?;
                let pulled = den.vjp(&y_t, mask.as_ref(), sigma, &cot)?;
                let glog = a_train.adjoint(&pulled)?.scale(-gamma);
                Some(glog)
            };
            Ok(StepEval { xhat, guidance })
        },
        trace,
    )
}

/// One-step ambient restoration: a single denoiser evaluation at (or
/// near) the minimal noise level. In distribution — the inference mask
/// drawn from the training mask law — this is the MSE-optimal
/// restoration; out of distribution no contract is made.
pub fn aos_predict(
    den: &Denoiser,
    y: &Tensor<Complex64>,
    mask: Option<&Tensor<f64>>,
    sigma: f64,
) -> Result<Tensor<Complex64>> {
    den.denoise(y, mask, sigma)
}
