//! Analytic denoisers under Gaussian-mixture and discrete priors.
//!
//! For an isotropic mixture prior the conditional mean E[x₀ | x_t] has
//! a closed form (responsibility-weighted per-component shrinkage), and
//! under any linear corruption the conditional mean E[x₀ | Ã(x₀+ση)]
//! follows from joint-Gaussian conditioning per component. Both paths
//! also expose exact input Jacobian-transpose products, which is what
//! posterior sampling differentiates through.
//!
//! Variances are per real coordinate: a complex signal of n entries has
//! 2n real degrees of freedom, each of prior variance τ² and noise
//! variance σ².

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::linalg::psd_pinv;
use crate::numerics::rng::Rng;
use crate::numerics::tensor::{SignalKind, Tensor};
use crate::operators::{LinearOp, RealViewOp};

#[derive(Debug, Clone)]
pub struct GaussianMixturePrior {
    weights: Vec<f64>,
    means: Vec<Tensor<Complex64>>,
    /// τ_k², per real coordinate.
    variances: Vec<f64>,
    signal: SignalKind,
}

impl GaussianMixturePrior {
    pub fn new(
        weights: Vec<f64>,
        means: Vec<Tensor<Complex64>>,
        variances: Vec<f64>,
        signal: SignalKind,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != means.len() || weights.len() != variances.len() {
            return Err(Error::invalid("mixture component count mismatch"));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::invalid("mixture weights must be positive"));
        }
        if variances.iter().any(|&v| v <= 0.0) {
            return Err(Error::invalid("mixture variances must be positive"));
        }
        let shape = means[0].shape().to_vec();
        for m in &means {
            if m.shape() != shape.as_slice() {
                return Err(Error::ShapeMismatch {
                    expected: shape,
                    got: m.shape().to_vec(),
                });
            }
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(GaussianMixturePrior {
            weights,
            means,
            variances,
            signal,
        })
    }

    /// Single isotropic Gaussian N(mean, τ²I).
    pub fn single(mean: Tensor<Complex64>, tau_sq: f64, signal: SignalKind) -> Result<Self> {
        GaussianMixturePrior::new(vec![1.0], vec![mean], vec![tau_sq], signal)
    }

    pub fn components(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn means(&self) -> &[Tensor<Complex64>] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn signal(&self) -> SignalKind {
        self.signal
    }

    pub fn shape(&self) -> &[usize] {
        self.means[0].shape()
    }

    pub fn mean(&self) -> Tensor<Complex64> {
        let mut acc = Tensor::zeros(self.shape());
        for (w, m) in self.weights.iter().zip(&self.means) {
            acc.axpy(*w, m).unwrap();
        }
        acc
    }

    pub fn sample(&self, rng: &mut Rng) -> Tensor<Complex64> {
        let k = sample_index(&self.weights, rng);
        let noise = Tensor::<Complex64>::noise_of_kind(self.shape(), self.signal, rng);
        let mut out = self.means[k].clone();
        out.axpy(self.variances[k].sqrt(), &noise).unwrap();
        out
    }

    /// Posterior responsibilities of x_t at noise level σ.
    fn responsibilities(&self, x_t: &Tensor<Complex64>, sigma: f64) -> Result<Vec<f64>> {
        let d = self.signal.real_dim(x_t.len()) as f64;
        let mut logs = Vec::with_capacity(self.components());
        for k in 0..self.components() {
            let s_sq = self.variances[k] + sigma * sigma;
            if s_sq <= 0.0 {
                return Err(Error::Numerical("degenerate mixture component".into()));
            }
            let dist_sq = x_t.sub(&self.means[k])?.norm_sq();
            logs.push(self.weights[k].ln() - dist_sq / (2.0 * s_sq) - 0.5 * d * s_sq.ln());
        }
        Ok(softmax(&logs))
    }
}

fn sample_index(weights: &[f64], rng: &mut Rng) -> usize {
    let u = rng.uniform();
    let mut acc = 0.0;
    for (k, &w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return k;
        }
    }
    weights.len() - 1
}

fn softmax(logs: &[f64]) -> Vec<f64> {
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Exact E[x₀ | x_t] under the mixture prior at noise level σ.
pub fn gm_denoise(
    prior: &GaussianMixturePrior,
    x_t: &Tensor<Complex64>,
    sigma: f64,
) -> Result<Tensor<Complex64>> {
    if sigma < 0.0 {
        return Err(Error::invalid("sigma must be >= 0"));
    }
    let resp = prior.responsibilities(x_t, sigma)?;
    let mut out = Tensor::zeros(x_t.shape());
    for k in 0..prior.components() {
        let s_sq = prior.variances[k] + sigma * sigma;
        let a = prior.variances[k] / s_sq;
        let b = sigma * sigma / s_sq;
        // m_k = a·x_t + b·μ_k
        out.axpy(resp[k] * a, x_t)?;
        out.axpy(resp[k] * b, &prior.means[k])?;
    }
    Ok(out)
}

/// Jᵀ·cot where J = ∂ gm_denoise / ∂ x_t in the real view.
pub fn gm_denoise_vjp(
    prior: &GaussianMixturePrior,
    x_t: &Tensor<Complex64>,
    sigma: f64,
    cotangent: &Tensor<Complex64>,
) -> Result<Tensor<Complex64>> {
    let resp = prior.responsibilities(x_t, sigma)?;
    let k_count = prior.components();
    let mut shrink = Vec::with_capacity(k_count);
    let mut comp_means = Vec::with_capacity(k_count);
    let mut grads = Vec::with_capacity(k_count);
    for k in 0..k_count {
        let s_sq = prior.variances[k] + sigma * sigma;
        let a = prior.variances[k] / s_sq;
        let b = sigma * sigma / s_sq;
        shrink.push(a);
        let mut m = x_t.scale(a);
        m.axpy(b, &prior.means[k])?;
        comp_means.push(m);
        // ∇ log N_k = (μ_k − x_t)/s_k²
        let g = prior.means[k].sub(x_t)?.scale(1.0 / s_sq);
        grads.push(g);
    }
    let mut gbar = Tensor::zeros(x_t.shape());
    for k in 0..k_count {
        gbar.axpy(resp[k], &grads[k])?;
    }
    let scale: f64 = resp.iter().zip(&shrink).map(|(r, a)| r * a).sum();
    let mut out = cotangent.scale(scale);
    for k in 0..k_count {
        // real-view inner product ⟨m_k, cot⟩
        let dot = comp_means[k].inner(cotangent)?.re;
        let mut dir = grads[k].sub(&gbar)?;
        dir = dir.scale(resp[k] * dot);
        out = out.add(&dir)?;
    }
    Ok(out)
}

/// Exact E[x₀ | ỹ, Ã] for ỹ = Ã(x₀ + ση) under a mixture prior,
/// precomputed for one fixed operator.
#[derive(Debug, Clone)]
pub struct GmAmbientDenoiser {
    prior: GaussianMixturePrior,
    op: LinearOp,
    identity: bool,
    rv: Option<RealViewOp>,
    /// (M Mᵀ)⁺, row-major rows×rows.
    gram_pinv: Vec<f64>,
    rank: usize,
    /// M·realview(μ_k) per component.
    projected_means: Vec<Vec<f64>>,
}

impl GmAmbientDenoiser {
    pub fn new(prior: GaussianMixturePrior, op: LinearOp) -> Result<Self> {
        if op.input_shape() != prior.shape() {
            return Err(Error::ShapeMismatch {
                expected: prior.shape().to_vec(),
                got: op.input_shape().to_vec(),
            });
        }
        if op.is_identity() {
            return Ok(GmAmbientDenoiser {
                prior,
                op,
                identity: true,
                rv: None,
                gram_pinv: Vec::new(),
                rank: 0,
                projected_means: Vec::new(),
            });
        }
        let rv = RealViewOp::from_op(&op, prior.signal())?;
        let rows = rv.rows;
        let gram = rv.gram();
        let gram_c: Vec<Complex64> = gram.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        let pinv = psd_pinv(&gram_c, rows, 1e-12)?;
        let gram_pinv: Vec<f64> = pinv.inv.iter().map(|v| v.re).collect();
        let projected_means = prior
            .means()
            .iter()
            .map(|m| rv.matvec(&m.real_view(prior.signal())))
            .collect();
        Ok(GmAmbientDenoiser {
            prior,
            op,
            identity: false,
            rv: Some(rv),
            gram_pinv,
            rank: pinv.rank,
            projected_means,
        })
    }

    pub fn prior(&self) -> &GaussianMixturePrior {
        &self.prior
    }

    pub fn operator(&self) -> &LinearOp {
        &self.op
    }

    pub fn signal(&self) -> SignalKind {
        self.prior.signal()
    }

    fn gram_apply(&self, v: &[f64]) -> Vec<f64> {
        let rows = v.len();
        let mut out = vec![0.0; rows];
        for i in 0..rows {
            let row = &self.gram_pinv[i * rows..(i + 1) * rows];
            out[i] = row.iter().zip(v).map(|(&a, &b)| a * b).sum();
        }
        out
    }

    /// Responsibilities and per-component whitened residuals for ỹ.
    fn conditioning(&self, y: &[f64], sigma: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
        let k_count = self.prior.components();
        let mut logs = Vec::with_capacity(k_count);
        let mut whitened = Vec::with_capacity(k_count);
        for k in 0..k_count {
            let s_sq = self.prior.variances()[k] + sigma * sigma;
            if s_sq <= 0.0 {
                return Err(Error::Numerical(
                    "singular conditioning covariance (sigma = 0 with zero-variance component)"
                        .into(),
                ));
            }
            let d: Vec<f64> = y
                .iter()
                .zip(&self.projected_means[k])
                .map(|(&a, &b)| a - b)
                .collect();
            let u = self.gram_apply(&d);
            let q: f64 = d.iter().zip(&u).map(|(&a, &b)| a * b).sum();
            logs.push(
                self.prior.weights()[k].ln()
                    - q / (2.0 * s_sq)
                    - 0.5 * self.rank as f64 * s_sq.ln(),
            );
            whitened.push(u);
        }
        Ok((softmax(&logs), whitened))
    }

    /// E[x₀ | ỹ, Ã] at noise level σ.
    pub fn denoise(&self, y: &Tensor<Complex64>, sigma: f64) -> Result<Tensor<Complex64>> {
        if self.identity {
            return gm_denoise(&self.prior, y, sigma);
        }
        let rv = self.rv.as_ref().unwrap();
        let yv = y.real_view(self.prior.signal());
        if yv.len() != rv.rows {
            return Err(Error::ShapeMismatch {
                expected: vec![rv.rows],
                got: vec![yv.len()],
            });
        }
        let (resp, whitened) = self.conditioning(&yv, sigma)?;
        let cols = rv.cols;
        let mut out = vec![0.0; cols];
        for k in 0..self.prior.components() {
            let s_sq = self.prior.variances()[k] + sigma * sigma;
            let c = self.prior.variances()[k] / s_sq;
            let pulled = rv.rmatvec(&whitened[k]);
            let mu = self.prior.means()[k].real_view(self.prior.signal());
            for i in 0..cols {
                out[i] += resp[k] * (mu[i] + c * pulled[i]);
            }
        }
        Tensor::from_real_view(self.prior.shape(), self.prior.signal(), &out)
    }

    /// Jᵀ·cot where J = ∂ denoise / ∂ ỹ in the real view. The result
    /// lives in the measurement space of Ã.
    pub fn vjp(
        &self,
        y: &Tensor<Complex64>,
        sigma: f64,
        cotangent: &Tensor<Complex64>,
    ) -> Result<Tensor<Complex64>> {
        if self.identity {
            return gm_denoise_vjp(&self.prior, y, sigma, cotangent);
        }
        let rv = self.rv.as_ref().unwrap();
        let kind = self.prior.signal();
        let yv = y.real_view(kind);
        let (resp, whitened) = self.conditioning(&yv, sigma)?;
        let cv = cotangent.real_view(kind);
        let k_count = self.prior.components();
        // per-component posterior means and score directions
        let mut comp_means = Vec::with_capacity(k_count);
        let mut scores = Vec::with_capacity(k_count);
        for k in 0..k_count {
            let s_sq = self.prior.variances()[k] + sigma * sigma;
            let c = self.prior.variances()[k] / s_sq;
            let pulled = rv.rmatvec(&whitened[k]);
            let mu = self.prior.means()[k].real_view(kind);
            let mean: Vec<f64> = mu.iter().zip(&pulled).map(|(&m, &p)| m + c * p).collect();
            comp_means.push(mean);
            let score: Vec<f64> = whitened[k].iter().map(|&u| -u / s_sq).collect();
            scores.push(score);
        }
        let rows = rv.rows;
        let mut gbar = vec![0.0; rows];
        for k in 0..k_count {
            for i in 0..rows {
                gbar[i] += resp[k] * scores[k][i];
            }
        }
        // Σ w̃_k c_k · Ginv M cot
        let shrink: f64 = (0..k_count)
            .map(|k| {
                let s_sq = self.prior.variances()[k] + sigma * sigma;
                resp[k] * self.prior.variances()[k] / s_sq
            })
            .sum();
        let mcot = rv.matvec(&cv);
        let mut out = self.gram_apply(&mcot);
        for v in out.iter_mut() {
            *v *= shrink;
        }
        for k in 0..k_count {
            let dot: f64 = comp_means[k].iter().zip(&cv).map(|(&a, &b)| a * b).sum();
            for i in 0..rows {
                out[i] += resp[k] * (scores[k][i] - gbar[i]) * dot;
            }
        }
        Tensor::from_real_view(&self.op.output_shape(), kind, &out)
    }
}

/// Convenience one-shot form of [`GmAmbientDenoiser`].
pub fn gm_ambient_denoise(
    prior: &GaussianMixturePrior,
    y: &Tensor<Complex64>,
    op: &LinearOp,
    sigma: f64,
) -> Result<Tensor<Complex64>> {
    GmAmbientDenoiser::new(prior.clone(), op.clone())?.denoise(y, sigma)
}

/// Finite atom prior, the enumeration oracle's ground truth.
#[derive(Debug, Clone)]
pub struct DiscretePrior {
    pub atoms: Vec<Tensor<Complex64>>,
    pub weights: Vec<f64>,
    pub signal: SignalKind,
}

impl DiscretePrior {
    pub fn new(atoms: Vec<Tensor<Complex64>>, weights: Vec<f64>, signal: SignalKind) -> Result<Self> {
        if atoms.is_empty() || atoms.len() != weights.len() {
            return Err(Error::invalid("atom/weight count mismatch"));
        }
        if weights.iter().any(|&w| w <= 0.0) {
            return Err(Error::invalid("atom weights must be positive"));
        }
        let total: f64 = weights.iter().sum();
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(DiscretePrior {
            atoms,
            weights,
            signal,
        })
    }

    pub fn uniform(atoms: Vec<Tensor<Complex64>>, signal: SignalKind) -> Result<Self> {
        let n = atoms.len();
        DiscretePrior::new(atoms, vec![1.0; n], signal)
    }

    pub fn shape(&self) -> &[usize] {
        self.atoms[0].shape()
    }

    pub fn mean(&self) -> Tensor<Complex64> {
        let mut acc = Tensor::zeros(self.shape());
        for (w, a) in self.weights.iter().zip(&self.atoms) {
            acc.axpy(*w, a).unwrap();
        }
        acc
    }

    pub fn sample(&self, rng: &mut Rng) -> Tensor<Complex64> {
        self.atoms[sample_index(&self.weights, rng)].clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real_tensor(v: &[f64]) -> Tensor<Complex64> {
        Tensor::new(vec![v.len()], v.iter().map(|&x| Complex64::new(x, 0.0)).collect()).unwrap()
    }

    fn two_component_2d() -> GaussianMixturePrior {
        GaussianMixturePrior::new(
            vec![0.4, 0.6],
            vec![real_tensor(&[1.0, -1.0]), real_tensor(&[-2.0, 0.5])],
            vec![0.3, 0.8],
            SignalKind::Real,
        )
        .unwrap()
    }

    #[test]
    fn sigma_zero_returns_input() {
        let prior = two_component_2d();
        let x = real_tensor(&[0.3, 0.7]);
        let out = gm_denoise(&prior, &x, 0.0).unwrap();
        assert!(out.sub(&x).unwrap().max_abs() < 1e-14);
    }

    #[test]
    fn huge_sigma_returns_prior_mean() {
        let prior = two_component_2d();
        let x = real_tensor(&[5.0, -3.0]);
        let out = gm_denoise(&prior, &x, 1e8).unwrap();
        let mean = prior.mean();
        assert!(out.sub(&mean).unwrap().max_abs() < 1e-6);
    }

    #[test]
    fn single_component_linear_in_input_via_joint_draws() {
        // For K=1 the conditional mean is linear: E[x0|xt] = a·xt + b with
        // a = τ²/(τ²+σ²), b = σ²μ/(τ²+σ²). Linear-Gaussian regression of
        // x0 on xt over joint draws recovers exactly those coefficients,
        // so the Monte-Carlo slope/intercept are an independent oracle.
        let tau_sq = 0.7;
        let mu = 1.3;
        let sigma = 0.9;
        let prior = GaussianMixturePrior::single(real_tensor(&[mu]), tau_sq, SignalKind::Real).unwrap();
        let mut rng = Rng::new(5);
        let n = 1_000_000;
        let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..n {
            let x0 = mu + tau_sq.sqrt() * rng.normal();
            let xt = x0 + sigma * rng.normal();
            sx += xt;
            sy += x0;
            sxx += xt * xt;
            sxy += xt * x0;
        }
        let nf = n as f64;
        let slope = (sxy - sx * sy / nf) / (sxx - sx * sx / nf);
        let intercept = sy / nf - slope * sx / nf;
        let a = tau_sq / (tau_sq + sigma * sigma);
        let b = sigma * sigma * mu / (tau_sq + sigma * sigma);
        assert!((slope - a).abs() / a < 0.005, "slope {slope} vs {a}");
        assert!((intercept - b).abs() / b < 0.005, "intercept {intercept} vs {b}");
        // and gm_denoise evaluates that same affine map
        let xt = real_tensor(&[2.0]);
        let d = gm_denoise(&prior, &xt, sigma).unwrap();
        assert!((d.data()[0].re - (a * 2.0 + b)).abs() < 1e-12);
    }

    #[test]
    fn ambient_identity_operator_equals_gm_denoise_exactly() {
        let prior = two_component_2d();
        let op = LinearOp::Identity { shape: vec![2] };
        let den = GmAmbientDenoiser::new(prior.clone(), op).unwrap();
        let x = real_tensor(&[0.4, 0.1]);
        for sigma in [0.1, 0.5, 2.0] {
            let a = den.denoise(&x, sigma).unwrap();
            let b = gm_denoise(&prior, &x, sigma).unwrap();
            assert_eq!(a, b); // identity fast-path is bit-exact
        }
    }

    #[test]
    fn ambient_erasure_matches_grid_quadrature() {
        // Ã erases coordinate 2; the oracle integrates the posterior on a
        // dense 2-D grid of x0 values.
        let prior = two_component_2d();
        let mask = crate::operators::make_pixel_mask(&[2], 0.0, 1).unwrap();
        let mut mask = mask;
        mask.keep[1] = false;
        let op = crate::operators::inpaint_operator(mask);
        let den = GmAmbientDenoiser::new(prior.clone(), op.clone()).unwrap();
        let sigma = 0.4;
        let y = op
            .apply(&real_tensor(&[0.8, 0.0]))
            .unwrap();
        let got = den.denoise(&y, sigma).unwrap();

        // grid quadrature over x0
        let steps = 801;
        let lo = -6.0;
        let hi = 6.0;
        let h = (hi - lo) / (steps - 1) as f64;
        let mut num = [0.0f64; 2];
        let mut den_sum = 0.0f64;
        for i in 0..steps {
            for j in 0..steps {
                let x0 = [lo + i as f64 * h, lo + j as f64 * h];
                let mut p_prior = 0.0;
                for k in 0..2 {
                    let tau_sq = prior.variances()[k];
                    let m = &prior.means()[k];
                    let d2 = (x0[0] - m.data()[0].re).powi(2) + (x0[1] - m.data()[1].re).powi(2);
                    p_prior +=
                        prior.weights()[k] * (-d2 / (2.0 * tau_sq)).exp() / (2.0 * std::f64::consts::PI * tau_sq);
                }
                // observed coordinate only
                let r = y.data()[0].re - x0[0];
                let lik = (-r * r / (2.0 * sigma * sigma)).exp();
                let w = p_prior * lik;
                num[0] += w * x0[0];
                num[1] += w * x0[1];
                den_sum += w;
            }
        }
        let oracle = [num[0] / den_sum, num[1] / den_sum];
        for c in 0..2 {
            assert!(
                (got.data()[c].re - oracle[c]).abs() < 1e-3,
                "coord {c}: {} vs {}",
                got.data()[c].re,
                oracle[c]
            );
        }
    }

    #[test]
    fn ambient_huge_sigma_returns_prior_mean() {
        let prior = two_component_2d();
        let mut mask = crate::operators::make_pixel_mask(&[2], 0.0, 1).unwrap();
        mask.keep[1] = false;
        let op = crate::operators::inpaint_operator(mask);
        let den = GmAmbientDenoiser::new(prior.clone(), op.clone()).unwrap();
        let y = Tensor::zeros(&[2]);
        let out = den.denoise(&y, 1e8).unwrap();
        assert!(out.sub(&prior.mean()).unwrap().max_abs() < 1e-6);
    }

    #[test]
    fn vjp_matches_finite_differences() {
        let prior = two_component_2d();
        let sigma = 0.6;
        let x = real_tensor(&[0.25, -0.4]);
        let cot = real_tensor(&[0.7, -1.1]);
        let vjp = gm_denoise_vjp(&prior, &x, sigma, &cot).unwrap();
        let h = 1e-6;
        for c in 0..2 {
            let mut xp = x.clone();
            xp.data_mut()[c] += Complex64::new(h, 0.0);
            let mut xm = x.clone();
            xm.data_mut()[c] -= Complex64::new(h, 0.0);
            let fp = gm_denoise(&prior, &xp, sigma).unwrap();
            let fm = gm_denoise(&prior, &xm, sigma).unwrap();
            // d⟨cot, f⟩/dx_c
            let dot_p = fp.inner(&cot).unwrap().re;
            let dot_m = fm.inner(&cot).unwrap().re;
            let fd = (dot_p - dot_m) / (2.0 * h);
            assert!(
                (vjp.data()[c].re - fd).abs() < 1e-6,
                "coord {c}: {} vs {}",
                vjp.data()[c].re,
                fd
            );
        }
    }

    #[test]
    fn ambient_vjp_matches_finite_differences() {
        let prior = two_component_2d();
        let mut mask = crate::operators::make_pixel_mask(&[2], 0.0, 1).unwrap();
        mask.keep[1] = false;
        let op = crate::operators::inpaint_operator(mask);
        let den = GmAmbientDenoiser::new(prior, op).unwrap();
        let sigma = 0.5;
        let y = real_tensor(&[0.6, 0.0]);
        let cot = real_tensor(&[1.0, 0.5]);
        let vjp = den.vjp(&y, sigma, &cot).unwrap();
        let h = 1e-6;
        for c in 0..2 {
            let mut yp = y.clone();
            yp.data_mut()[c] += Complex64::new(h, 0.0);
            let mut ym = y.clone();
            ym.data_mut()[c] -= Complex64::new(h, 0.0);
            let dp = den.denoise(&yp, sigma).unwrap().inner(&cot).unwrap().re;
            let dm = den.denoise(&ym, sigma).unwrap().inner(&cot).unwrap().re;
            let fd = (dp - dm) / (2.0 * h);
            assert!(
                (vjp.data()[c].re - fd).abs() < 1e-6,
                "coord {c}: {} vs {}",
                vjp.data()[c].re,
                fd
            );
        }
    }

    #[test]
    fn gm_denoise_is_the_mse_minimizer() {
        // Empirical loss of gm_denoise vs perturbed competitors over
        // joint draws: the exact conditional mean must win within
        // Monte-Carlo error.
        let prior = two_component_2d();
        let sigma = 0.8;
        let mut rng = Rng::new(31);
        let n = 100_000;
        let mut loss_opt = 0.0;
        let mut loss_shift = 0.0;
        let mut loss_scale = 0.0;
        let mut sq_opt = 0.0;
        for _ in 0..n {
            let x0 = prior.sample(&mut rng);
            let xt = crate::diffusion::add_noise_sigma(&x0, sigma, &mut rng);
            let est = gm_denoise(&prior, &xt, sigma).unwrap();
            let l = est.sub(&x0).unwrap().norm_sq();
            loss_opt += l;
            sq_opt += l * l;
            let shifted = est.map(|v| v + Complex64::new(0.05, 0.0));
            loss_shift += shifted.sub(&x0).unwrap().norm_sq();
            loss_scale += est.scale(1.05).sub(&x0).unwrap().norm_sq();
        }
        let nf = n as f64;
        let mean_opt = loss_opt / nf;
        let stderr = ((sq_opt / nf - mean_opt * mean_opt) / nf).sqrt();
        assert!(loss_shift / nf >= mean_opt - 3.0 * stderr);
        assert!(loss_scale / nf >= mean_opt - 3.0 * stderr);
    }

    #[test]
    fn discrete_prior_normalizes_and_samples() {
        let atoms = vec![real_tensor(&[1.0]), real_tensor(&[-1.0])];
        let prior = DiscretePrior::new(atoms, vec![3.0, 1.0], SignalKind::Real).unwrap();
        assert!((prior.weights[0] - 0.75).abs() < 1e-12);
        let mut rng = Rng::new(4);
        let mut pos = 0;
        for _ in 0..4000 {
            if prior.sample(&mut rng).data()[0].re > 0.0 {
                pos += 1;
            }
        }
        assert!((pos as f64 / 4000.0 - 0.75).abs() < 0.03);
    }
}
