//! Denoisers E[x₀ | ·] — analytic and trainable — and their training
//! objectives.

mod gm;
mod mlp;
mod train;

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::{load_tensor, save_tensor, KvMap};
use crate::numerics::tensor::{SignalKind, Tensor};
use crate::operators::parse_shape;

pub use gm::{
    gm_ambient_denoise, gm_denoise, gm_denoise_vjp, DiscretePrior, GaussianMixturePrior,
    GmAmbientDenoiser,
};
pub use mlp::{Activation, Conditioning, Grads, MlpDenoiser, MlpParams, Trace};
pub use train::{
    train_ambient_inpaint, train_ambient_mri, train_clean, Optimizer, SigmaDist, TrainConfig,
    TrainResult,
};

/// Anything that can produce x̂₀ = E[x₀ | input, σ, conditioning].
///
/// `Gm` consumes uncorrupted states, `GmAmbient` consumes measurements
/// through its baked-in operator, `Mlp` follows its conditioning
/// contract, and `Identity` echoes its input (zero-score test denoiser).
#[derive(Debug, Clone)]
pub enum Denoiser {
    Identity { shape: Vec<usize>, signal: SignalKind },
    Gm(GaussianMixturePrior),
    GmAmbient(GmAmbientDenoiser),
    Mlp(MlpDenoiser),
}

impl Denoiser {
    pub fn signal(&self) -> SignalKind {
        match self {
            Denoiser::Identity { signal, .. } => *signal,
            Denoiser::Gm(p) => p.signal(),
            Denoiser::GmAmbient(d) => d.signal(),
            Denoiser::Mlp(m) => m.signal,
        }
    }

    pub fn signal_shape(&self) -> &[usize] {
        match self {
            Denoiser::Identity { shape, .. } => shape,
            Denoiser::Gm(p) => p.shape(),
            Denoiser::GmAmbient(d) => d.prior().shape(),
            Denoiser::Mlp(m) => &m.signal_shape,
        }
    }

    /// x̂₀ from the (possibly corrupted) input at noise level σ.
    pub fn denoise(
        &self,
        input: &Tensor<Complex64>,
        mask: Option<&Tensor<f64>>,
        sigma: f64,
    ) -> Result<Tensor<Complex64>> {
        match self {
            Denoiser::Identity { .. } => Ok(input.clone()),
            Denoiser::Gm(p) => gm_denoise(p, input, sigma),
            Denoiser::GmAmbient(d) => d.denoise(input, sigma),
            Denoiser::Mlp(m) => m.denoise(input, mask, sigma),
        }
    }

    /// Jᵀ·cot with respect to the denoiser input, in the real view.
    pub fn vjp(
        &self,
        input: &Tensor<Complex64>,
        mask: Option<&Tensor<f64>>,
        sigma: f64,
        cotangent: &Tensor<Complex64>,
    ) -> Result<Tensor<Complex64>> {
        match self {
            Denoiser::Identity { .. } => Ok(cotangent.clone()),
            Denoiser::Gm(p) => gm_denoise_vjp(p, input, sigma, cotangent),
            Denoiser::GmAmbient(d) => d.vjp(input, sigma, cotangent),
            Denoiser::Mlp(m) => m.vjp_input(input, mask, sigma, cotangent),
        }
    }
}

/// Write a trained network as one flat AMBT tensor plus a manifest.
pub fn save_checkpoint(den: &MlpDenoiser, base: impl AsRef<Path>, extra: &KvMap) -> Result<()> {
    let base = base.as_ref();
    let flat = den.params.flatten();
    let t = Tensor::new(vec![flat.len()], flat)?;
    save_tensor(base.with_extension("ambt"), &t)?;
    let mut kv = KvMap::new();
    kv.set(
        "widths",
        den.params
            .widths
            .iter()
            .map(|w| w.to_string())
            .collect::<Vec<_>>()
            .join(","),
    );
    kv.set("activation", den.params.activation.name());
    kv.set("signal", match den.signal {
        SignalKind::Real => "real",
        SignalKind::Complex => "complex",
    });
    kv.set("conditioning", den.conditioning.name());
    kv.set("shape", crate::operators::join_usize(&den.signal_shape));
    for key in extra.keys() {
        kv.set(key, extra.get(key)?);
    }
    kv.save(base.with_extension("kv"))
}

pub fn load_checkpoint(base: impl AsRef<Path>) -> Result<MlpDenoiser> {
    let base = base.as_ref();
    let kv = KvMap::load(base.with_extension("kv"))?;
    let widths: Vec<usize> = kv
        .get("widths")?
        .split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad width `{s}`")))
        })
        .collect::<Result<_>>()?;
    let activation = Activation::from_name(kv.get("activation")?)?;
    let signal = match kv.get("signal")? {
        "real" => SignalKind::Real,
        "complex" => SignalKind::Complex,
        other => return Err(Error::Config(format!("unknown signal kind `{other}`"))),
    };
    let conditioning = Conditioning::from_name(kv.get("conditioning")?)?;
    let shape = parse_shape(kv.get("shape")?)?;
    let flat: Tensor<f64> = load_tensor(base.with_extension("ambt"))?;
    let params = MlpParams::unflatten(&widths, activation, flat.data())?;
    let expected = MlpDenoiser::input_width(&shape, signal, conditioning);
    if widths[0] != expected {
        return Err(Error::Config(format!(
            "checkpoint input width {} does not match shape/conditioning (need {expected})",
            widths[0]
        )));
    }
    Ok(MlpDenoiser {
        params,
        signal_shape: shape,
        signal,
        conditioning,
    })
}
