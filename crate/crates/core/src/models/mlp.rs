//! Trainable denoiser: a fully-connected network with reverse-mode
//! gradients, hand-derived layer by layer.
//!
//! The input layout concatenates the signal channels (complex signals
//! as two real channels), an optional 0/1 mask channel, and a two-part
//! σ embedding [ln σ / 4, 1/(1+σ²)]. Signal channels are scaled by
//! 1/(1+σ²) — the posterior shrinkage of a unit-scale prior — which
//! keeps activations in range at every noise level and, together with
//! the shrinkage feature and the linear skip, makes single-Gaussian
//! conditional means exactly representable. The output is read raw.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::rng::Rng;
use crate::numerics::tensor::{SignalKind, Tensor};

const SIGMA_FEATURE_SCALE: f64 = 0.25;

fn input_gain(sigma: f64) -> f64 {
    1.0 / (1.0 + sigma * sigma)
}

fn sigma_features(sigma: f64) -> [f64; 2] {
    [SIGMA_FEATURE_SCALE * sigma.max(1e-12).ln(), input_gain(sigma)]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }

    fn eval(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation value.
    fn deriv_from_value(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }
}

/// Dense parameters: hidden layers use `activation`, the output layer
/// is linear, and a zero-initialized linear skip from input to output
/// lets affine maps be represented exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    /// Layer widths, input first, output last.
    pub widths: Vec<usize>,
    /// `weights[l]` is `widths[l+1] × widths[l]`, row-major.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    /// Output × input linear skip, row-major.
    pub skip: Vec<f64>,
    pub activation: Activation,
}

impl MlpParams {
    pub fn init(widths: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::invalid("network needs at least input and output widths"));
        }
        if widths.contains(&0) {
            return Err(Error::invalid("zero layer width"));
        }
        let mut rng = Rng::new(seed);
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for l in 0..widths.len() - 1 {
            let (fan_in, fan_out) = (widths[l], widths[l + 1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.uniform_range(-bound, bound))
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        let skip = vec![0.0; widths[0] * widths[widths.len() - 1]];
        Ok(MlpParams {
            widths: widths.to_vec(),
            weights,
            biases,
            skip,
            activation,
        })
    }

    pub fn layer_count(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>()
            + self.biases.iter().map(Vec::len).sum::<usize>()
            + self.skip.len()
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().flatten().all(|v| v.is_finite())
            && self.biases.iter().flatten().all(|v| v.is_finite())
            && self.skip.iter().all(|v| v.is_finite())
    }

    /// Flat parameter vector (weights then bias per layer, skip last).
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in 0..self.layer_count() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out.extend_from_slice(&self.skip);
        out
    }

    pub fn unflatten(widths: &[usize], activation: Activation, flat: &[f64]) -> Result<Self> {
        let mut params = MlpParams::init(widths, activation, 0)?;
        let mut pos = 0;
        for l in 0..params.layer_count() {
            let wlen = params.weights[l].len();
            let blen = params.biases[l].len();
            if flat.len() < pos + wlen + blen {
                return Err(Error::Format("checkpoint shorter than architecture".into()));
            }
            params.weights[l].copy_from_slice(&flat[pos..pos + wlen]);
            pos += wlen;
            params.biases[l].copy_from_slice(&flat[pos..pos + blen]);
            pos += blen;
        }
        let slen = params.skip.len();
        if flat.len() < pos + slen {
            return Err(Error::Format("checkpoint shorter than architecture".into()));
        }
        params.skip.copy_from_slice(&flat[pos..pos + slen]);
        pos += slen;
        if pos != flat.len() {
            return Err(Error::Format("checkpoint longer than architecture".into()));
        }
        Ok(params)
    }

    /// Forward pass returning the output and every layer's activation.
    pub fn forward(&self, input: &[f64]) -> Result<(Vec<f64>, Trace)> {
        if input.len() != self.widths[0] {
            return Err(Error::ShapeMismatch {
                expected: vec![self.widths[0]],
                got: vec![input.len()],
            });
        }
        let layers = self.layer_count();
        let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layers + 1);
        acts.push(input.to_vec());
        for l in 0..layers {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let prev = &acts[l];
            let mut next = self.biases[l].clone();
            for (i, slot) in next.iter_mut().enumerate() {
                let row = &self.weights[l][i * fan_in..(i + 1) * fan_in];
                let mut acc = 0.0;
                for (w, a) in row.iter().zip(prev) {
                    acc += w * a;
                }
                *slot += acc;
            }
            if l + 1 < layers {
                for v in next.iter_mut() {
                    *v = self.activation.eval(*v);
                }
            }
            let _ = fan_out;
            acts.push(next);
        }
        let mut out = acts.last().unwrap().clone();
        let (n_in, n_out) = (self.widths[0], *self.widths.last().unwrap());
        for i in 0..n_out {
            let row = &self.skip[i * n_in..(i + 1) * n_in];
            let mut acc = 0.0;
            for (w, a) in row.iter().zip(input) {
                acc += w * a;
            }
            out[i] += acc;
        }
        Ok((out, Trace { activations: acts }))
    }

    /// Reverse pass from an output cotangent: gradients for every
    /// parameter plus the gradient with respect to the input vector.
    pub fn backward(&self, trace: &Trace, cot_out: &[f64]) -> (Grads, Vec<f64>) {
        let layers = self.layer_count();
        let mut grads = Grads::zeros_like(self);
        // skip path: gradients and its direct input contribution
        let (n_in, n_out) = (self.widths[0], *self.widths.last().unwrap());
        let input = &trace.activations[0];
        let mut skip_input_grad = vec![0.0; n_in];
        for i in 0..n_out {
            let ci = cot_out[i];
            let grow = &mut grads.skip[i * n_in..(i + 1) * n_in];
            let wrow = &self.skip[i * n_in..(i + 1) * n_in];
            for j in 0..n_in {
                grow[j] += ci * input[j];
                skip_input_grad[j] += ci * wrow[j];
            }
        }
        let mut delta = cot_out.to_vec();
        for l in (0..layers).rev() {
            let fan_in = self.widths[l];
            let fan_out = self.widths[l + 1];
            // output layer is linear; hidden activations differentiate
            // through the stored value
            if l + 1 < layers {
                let act = &trace.activations[l + 1];
                for (d, &a) in delta.iter_mut().zip(act) {
                    *d *= self.activation.deriv_from_value(a);
                }
            }
            let prev = &trace.activations[l];
            for i in 0..fan_out {
                let di = delta[i];
                grads.biases[l][i] += di;
                let row = &mut grads.weights[l][i * fan_in..(i + 1) * fan_in];
                for (g, &a) in row.iter_mut().zip(prev) {
                    *g += di * a;
                }
            }
            let mut next_delta = vec![0.0; fan_in];
            for i in 0..fan_out {
                let di = delta[i];
                let row = &self.weights[l][i * fan_in..(i + 1) * fan_in];
                for (nd, &w) in next_delta.iter_mut().zip(row) {
                    *nd += di * w;
                }
            }
            delta = next_delta;
        }
        for (d, s) in delta.iter_mut().zip(&skip_input_grad) {
            *d += s;
        }
        (grads, delta)
    }
}

/// Cached activations from a forward pass.
pub struct Trace {
    /// `activations[0]` is the input; `activations[l+1]` the output of layer l.
    pub activations: Vec<Vec<f64>>,
}

/// Parameter-shaped gradient accumulator.
#[derive(Debug, Clone)]
pub struct Grads {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub skip: Vec<f64>,
}

impl Grads {
    pub fn zeros_like(params: &MlpParams) -> Self {
        Grads {
            weights: params.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: params.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
            skip: vec![0.0; params.skip.len()],
        }
    }

    pub fn accumulate(&mut self, other: &Grads) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (x, y) in self.skip.iter_mut().zip(&other.skip) {
            *x += y;
        }
    }

    pub fn scale(&mut self, k: f64) {
        for w in self.weights.iter_mut().flatten() {
            *w *= k;
        }
        for b in self.biases.iter_mut().flatten() {
            *b *= k;
        }
        for v in self.skip.iter_mut() {
            *v *= k;
        }
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in 0..self.weights.len() {
            out.extend_from_slice(&self.weights[l]);
            out.extend_from_slice(&self.biases[l]);
        }
        out.extend_from_slice(&self.skip);
        out
    }
}

/// Conditioning contract of a denoiser network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    None,
    MaskChannel,
}

impl Conditioning {
    pub fn name(self) -> &'static str {
        match self {
            Conditioning::None => "none",
            Conditioning::MaskChannel => "mask_channel",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "none" => Ok(Conditioning::None),
            "mask_channel" => Ok(Conditioning::MaskChannel),
            other => Err(Error::Config(format!("unknown conditioning `{other}`"))),
        }
    }
}

/// A denoiser network bound to a signal shape and conditioning contract.
#[derive(Debug, Clone)]
pub struct MlpDenoiser {
    pub params: MlpParams,
    pub signal_shape: Vec<usize>,
    pub signal: SignalKind,
    pub conditioning: Conditioning,
}

impl MlpDenoiser {
    /// Input width implied by shape, signal kind, and conditioning.
    pub fn input_width(shape: &[usize], signal: SignalKind, conditioning: Conditioning) -> usize {
        let n: usize = shape.iter().product();
        let mut w = signal.real_dim(n);
        if conditioning == Conditioning::MaskChannel {
            w += n;
        }
        w + 2 // σ embedding
    }

    pub fn init(
        shape: &[usize],
        signal: SignalKind,
        conditioning: Conditioning,
        hidden: &[usize],
        seed: u64,
    ) -> Result<Self> {
        let n: usize = shape.iter().product();
        let mut widths = vec![Self::input_width(shape, signal, conditioning)];
        widths.extend_from_slice(hidden);
        widths.push(signal.real_dim(n));
        Ok(MlpDenoiser {
            params: MlpParams::init(&widths, Activation::Tanh, seed)?,
            signal_shape: shape.to_vec(),
            signal,
            conditioning,
        })
    }

    pub fn signal_len(&self) -> usize {
        self.signal_shape.iter().product()
    }

    /// Assemble the feature vector for one input.
    pub fn features(
        &self,
        input: &Tensor<Complex64>,
        mask: Option<&Tensor<f64>>,
        sigma: f64,
    ) -> Result<Vec<f64>> {
        if input.shape() != self.signal_shape.as_slice() {
            return Err(Error::ShapeMismatch {
                expected: self.signal_shape.clone(),
                got: input.shape().to_vec(),
            });
        }
        let n = self.signal_len();
        let gain = input_gain(sigma);
        let mut feats = input.real_view(self.signal);
        for v in feats.iter_mut() {
            *v *= gain;
        }
        match self.conditioning {
            Conditioning::None => {}
            Conditioning::MaskChannel => {
                let mask = mask.ok_or_else(|| {
                    Error::MaskKind("mask-conditioned network called without a mask".into())
                })?;
                if mask.len() != n {
                    return Err(Error::ShapeMismatch {
                        expected: self.signal_shape.clone(),
                        got: mask.shape().to_vec(),
                    });
                }
                feats.extend_from_slice(mask.data());
            }
        }
        feats.extend_from_slice(&sigma_features(sigma));
        Ok(feats)
    }

    pub fn denoise(
        &self,
        input: &Tensor<Complex64>,
        mask: Option<&Tensor<f64>>,
        sigma: f64,
    ) -> Result<Tensor<Complex64>> {
        let feats = self.features(input, mask, sigma)?;
        let (out, _) = self.params.forward(&feats)?;
        Tensor::from_real_view(&self.signal_shape, self.signal, &out)
    }

    /// Jᵀ·cot with respect to the signal input (mask and σ features are
    /// not differentiated), including the input-gain factor.
    pub fn vjp_input(
        &self,
        input: &Tensor<Complex64>,
        mask: Option<&Tensor<f64>>,
        sigma: f64,
        cotangent: &Tensor<Complex64>,
    ) -> Result<Tensor<Complex64>> {
        let feats = self.features(input, mask, sigma)?;
        let (_, trace) = self.params.forward(&feats)?;
        let cot = cotangent.real_view(self.signal);
        let (_, input_grad) = self.params.backward(&trace, &cot);
        let d = self.signal.real_dim(self.signal_len());
        let gain = input_gain(sigma);
        let sig_grad: Vec<f64> = input_grad[..d].iter().map(|&g| g * gain).collect();
        Tensor::from_real_view(&self.signal_shape, self.signal, &sig_grad)
    }

    /// Value, parameter gradients, and input gradient of a scalar loss
    /// given as (value, ∂loss/∂output) at the network output.
    pub fn value_and_grads(
        &self,
        input: &Tensor<Complex64>,
        mask: Option<&Tensor<f64>>,
        sigma: f64,
        loss: impl FnOnce(&Tensor<Complex64>) -> Result<(f64, Tensor<Complex64>)>,
    ) -> Result<(f64, Grads, Tensor<Complex64>)> {
        let feats = self.features(input, mask, sigma)?;
        let (out, trace) = self.params.forward(&feats)?;
        let out_t = Tensor::from_real_view(&self.signal_shape, self.signal, &out)?;
        let (value, cot) = loss(&out_t)?;
        let cot_v = cot.real_view(self.signal);
        let (grads, input_grad) = self.params.backward(&trace, &cot_v);
        let d = self.signal.real_dim(self.signal_len());
        let gain = input_gain(sigma);
        let sig_grad: Vec<f64> = input_grad[..d].iter().map(|&g| g * gain).collect();
        let input_grad_t = Tensor::from_real_view(&self.signal_shape, self.signal, &sig_grad)?;
        Ok((value, grads, input_grad_t))
    }
}
