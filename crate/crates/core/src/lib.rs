//! Ambient diffusion posterior sampling at desk scale.
//!
//! This crate trains denoisers from linearly corrupted observations
//! (random inpainting and multi-coil Fourier-subsampled MRI), solves
//! linear inverse problems with DPS / A-DPS / A-OS samplers, and ships
//! brute-force oracles that numerically certify the identifiability
//! conditions the training scheme relies on.
//!
//! Layout follows the pipeline:
//!
//! * [`numerics`] — tensors, FFT, Haar wavelets, eigensolver, seeded RNG
//! * [`io`] — the AMBT tensor file format and flat key/value sidecars
//! * [`operators`] — masks, coil maps, and every linear corruption operator
//! * [`diffusion`] — noise schedule and time discretization
//! * [`models`] — analytic Gaussian-mixture denoisers, the MLP denoiser,
//!   and the clean / ambient training loops
//! * [`samplers`] — reverse-SDE sampling, DPS, A-DPS, A-OS
//! * [`baselines`] — L1-wavelet FISTA and the SSDU split/loss
//! * [`mri_sim`] — synthetic multi-coil k-space generation and preprocessing
//! * [`metrics`] — MSE / NRMSE / PSNR / SSIM
//! * [`oracles`] — Monte-Carlo and enumeration verifiers for the
//!   full-rank and conditional-expectation claims
//! * [`experiment`] — reproducible experiment configs and metric sweeps

// index loops over parallel-indexed buffers read better than zipped
// iterator chains in the dense kernels here
#![allow(clippy::needless_range_loop)]

pub mod baselines;
pub mod diffusion;
pub mod error;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod models;
pub mod mri_sim;
pub mod numerics;
pub mod operators;
pub mod oracles;
pub mod samplers;

pub use error::{Error, Result};
pub use numerics::rng::Rng;
pub use numerics::tensor::{Dtype, Scalar, SignalKind, Tensor};
