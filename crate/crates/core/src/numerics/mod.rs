//! Numerical substrate: tensors, FFT, wavelets, eigensolver, RNG.

pub mod fft;
pub mod linalg;
pub mod rng;
pub mod tensor;
pub mod wavelet;
