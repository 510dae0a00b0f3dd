//! Brute-force and Monte-Carlo verifiers for the identifiability
//! claims behind ambient training.
//!
//! The chain being certified: conditioned on a realized further-
//! corrupted mask P̃, the expectation E[P | P̃] is entrywise positive
//! on its diagonal, hence full-rank; unitary similarity transfers that
//! to E[F⁻¹PF | P̃]; and the coil-normalized aggregate
//! E[Σᵢ SᵢᴴF⁻¹PFSᵢ | P̃] stays full-rank. Separately, the enumeration
//! oracle computes the exact conditional mean E[x₀ | ỹ_t, P̃] for a
//! finite prior, which a trained ambient model must approach.
//!
//! Conditional mask sampling is exact for line masks (the lines P kept
//! beyond P̃ are a uniform subset of the unobserved non-ACS lines, by
//! exchangeability of the uniform line draws) and falls back to
//! rejection for pixel masks, whose acceptance cost confines it to
//! small grids.

use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::models::{Denoiser, DiscretePrior};
use crate::numerics::linalg::min_singular_value;
use crate::numerics::rng::Rng;
use crate::numerics::tensor::Tensor;
use crate::operators::{
    further_corrupt, inpaint_operator, make_kspace_mask, make_pixel_mask, mri_operator,
    CoilMaps, CorruptionPolicy, LinearOp, MaskKind, MaskSpec, RealViewOp,
};

/// Outcome of one oracle run.
#[derive(Debug, Clone)]
pub struct OracleReport {
    pub claim: String,
    pub estimate: f64,
    pub tolerance: f64,
    pub trials: u64,
    pub pass: bool,
    pub seed: u64,
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "claim = {}", self.claim)?;
        writeln!(f, "estimate = {:.6e}", self.estimate)?;
        writeln!(f, "tolerance = {:.6e}", self.tolerance)?;
        writeln!(f, "trials = {}", self.trials)?;
        writeln!(f, "seed = {}", self.seed)?;
        write!(f, "pass = {}", self.pass)
    }
}

/// Joint law of the training mask P and its further corruption P̃.
#[derive(Debug, Clone)]
pub enum MaskLaw {
    Pixel {
        shape: Vec<usize>,
        erase_prob: f64,
        delta: f64,
    },
    /// Line mask at acceleration R, further corrupted to R+1.
    Kspace {
        shape: Vec<usize>,
        accel: f64,
        acs_lines: usize,
    },
}

impl MaskLaw {
    fn policy(&self) -> CorruptionPolicy {
        match self {
            MaskLaw::Pixel { delta, .. } => CorruptionPolicy::PixelErase { delta: *delta },
            MaskLaw::Kspace { .. } => CorruptionPolicy::NextAcceleration,
        }
    }

    /// Draw (P, P̃) from the joint law.
    pub fn sample_pair(&self, rng: &mut Rng) -> Result<(MaskSpec, MaskSpec)> {
        let p = match self {
            MaskLaw::Pixel {
                shape, erase_prob, ..
            } => make_pixel_mask(shape, *erase_prob, rng.next_u64())?,
            MaskLaw::Kspace {
                shape,
                accel,
                acs_lines,
            } => make_kspace_mask(shape, *accel, *acs_lines, rng.next_u64())?,
        };
        let p_tilde = further_corrupt(&p, &self.policy(), rng)?;
        Ok((p, p_tilde))
    }

    /// Exact diagonal of E[P | P̃].
    pub fn exact_conditional_diag(&self, p_tilde: &MaskSpec) -> Result<Vec<f64>> {
        match self {
            MaskLaw::Pixel { erase_prob, delta, .. } => {
                let p = *erase_prob;
                let off = (1.0 - p) * delta / (p + (1.0 - p) * delta);
                Ok(p_tilde
                    .keep
                    .iter()
                    .map(|&k| if k { 1.0 } else { off })
                    .collect())
            }
            MaskLaw::Kspace { shape, accel, acs_lines } => {
                let n_lines = *shape.last().unwrap();
                let kept_full = crate::operators::lines_at_acceleration(n_lines, *accel);
                let kept_tilde =
                    crate::operators::lines_at_acceleration(n_lines, accel + 1.0);
                if p_tilde.kept() != kept_tilde {
                    return Err(Error::invalid(format!(
                        "realized mask keeps {} lines, law expects {kept_tilde}",
                        p_tilde.kept()
                    )));
                }
                let extra = kept_full - kept_tilde;
                let unobserved = n_lines - kept_tilde;
                let off = extra as f64 / unobserved as f64;
                let _ = acs_lines;
                Ok(p_tilde
                    .keep
                    .iter()
                    .map(|&k| if k { 1.0 } else { off })
                    .collect())
            }
        }
    }

    /// One draw of P conditioned on further_corrupt(P) = P̃.
    ///
    /// Line masks: exact — the extra kept lines are a uniform subset of
    /// the lines P̃ does not keep (none of which are ACS). Pixel masks:
    /// rejection against the realized P̃; errors if nothing accepts.
    pub fn conditional_sample(&self, p_tilde: &MaskSpec, rng: &mut Rng) -> Result<MaskSpec> {
        match self {
            MaskLaw::Kspace { shape, accel, acs_lines } => {
                let n_lines = *shape.last().unwrap();
                let kept_full = crate::operators::lines_at_acceleration(n_lines, *accel);
                let extra = kept_full - p_tilde.kept();
                let unobserved: Vec<usize> = (0..n_lines).filter(|&l| !p_tilde.keep[l]).collect();
                if extra > unobserved.len() {
                    return Err(Error::invalid("conditional law infeasible"));
                }
                let mut keep = p_tilde.keep.clone();
                for pick in rng.choose(unobserved.len(), extra) {
                    keep[unobserved[pick]] = true;
                }
                Ok(MaskSpec {
                    kind: MaskKind::KspaceLines {
                        accel: *accel,
                        acs_lines: *acs_lines,
                    },
                    shape: shape.clone(),
                    keep,
                    seed: rng.next_u64(),
                })
            }
            MaskLaw::Pixel { .. } => {
                const MAX_ATTEMPTS: usize = 2_000_000;
                for _ in 0..MAX_ATTEMPTS {
                    let (p, cand) = self.sample_pair(rng)?;
                    if cand.keep == p_tilde.keep {
                        return Ok(p);
                    }
                }
                Err(Error::Numerical(
                    "rejection sampler accepted nothing; the conditioning event is too rare".into(),
                ))
            }
        }
    }
}

/// Monte-Carlo estimate of the diagonal of E[P | P̃] with its minimum
/// entry as the full-rank witness.
pub struct MaskOracleOutcome {
    pub report: OracleReport,
    pub diag: Vec<f64>,
}

pub fn expected_mask_fullrank(
    law: &MaskLaw,
    p_tilde: &MaskSpec,
    trials: usize,
    tolerance: f64,
    seed: u64,
) -> Result<MaskOracleOutcome> {
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    let mut rng = Rng::new(seed);
    let mut diag = vec![0.0f64; p_tilde.keep.len()];
    for _ in 0..trials {
        let p = law.conditional_sample(p_tilde, &mut rng)?;
        for (acc, &k) in diag.iter_mut().zip(&p.keep) {
            if k {
                *acc += 1.0;
            }
        }
    }
    for v in diag.iter_mut() {
        *v /= trials as f64;
    }
    let min_entry = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    let kind = match law {
        MaskLaw::Pixel { .. } => "pixel",
        MaskLaw::Kspace { .. } => "kspace",
    };
    Ok(MaskOracleOutcome {
        report: OracleReport {
            claim: format!("expected_mask_fullrank.{kind}"),
            estimate: min_entry,
            tolerance,
            trials: trials as u64,
            pass: min_entry > tolerance,
            seed,
        },
        diag,
    })
}

/// Monte-Carlo estimate of E[Σᵢ SᵢᴴF⁻¹PFSᵢ | P̃] accumulated as an
/// explicit matrix, reported through its smallest singular value.
pub struct OperatorOracleOutcome {
    pub report: OracleReport,
    pub sigma_min: f64,
    pub mean_matrix: Tensor<Complex64>,
}

pub fn expected_operator_fullrank(
    coils: &CoilMaps,
    law: &MaskLaw,
    p_tilde: &MaskSpec,
    trials: usize,
    tolerance: f64,
    seed: u64,
) -> Result<OperatorOracleOutcome> {
    let n: usize = coils.shape.iter().product();
    if n > 64 {
        return Err(Error::invalid(format!(
            "operator oracle builds explicit {n}x{n} matrices; limit is 64 pixels"
        )));
    }
    if trials == 0 {
        return Err(Error::invalid("trials must be >= 1"));
    }
    let mut rng = Rng::new(seed);
    let mut acc = vec![Complex64::new(0.0, 0.0); n * n];
    for _ in 0..trials {
        let p = law.conditional_sample(p_tilde, &mut rng)?;
        let op = mri_operator(p, coils.clone())?;
        let m = op.to_matrix()?;
        for (a, &v) in acc.iter_mut().zip(m.data()) {
            *a += v;
        }
    }
    let scale = 1.0 / trials as f64;
    for a in acc.iter_mut() {
        *a *= scale;
    }
    let mean_matrix = Tensor::new(vec![n, n], acc)?;
    let sigma_min = min_singular_value(&mean_matrix)?;
    Ok(OperatorOracleOutcome {
        report: OracleReport {
            claim: format!("expected_operator_fullrank.c{}", coils.n_coils()),
            estimate: sigma_min,
            tolerance,
            trials: trials as u64,
            pass: sigma_min > tolerance,
            seed,
        },
        sigma_min,
        mean_matrix,
    })
}

/// Exact counterpart of [`expected_operator_fullrank`]: by linearity,
/// E[A | P̃] equals the aggregate built from the exact diagonal
/// E[P | P̃].
pub fn exact_operator_fullrank(
    coils: &CoilMaps,
    law: &MaskLaw,
    p_tilde: &MaskSpec,
) -> Result<(f64, Tensor<Complex64>)> {
    let diag = law.exact_conditional_diag(p_tilde)?;
    let op = weighted_aggregate_matrix(coils, p_tilde, &diag)?;
    let sigma = min_singular_value(&op)?;
    Ok((sigma, op))
}

/// Explicit matrix of Σᵢ SᵢᴴF⁻¹ diag(w) F Sᵢ where diag(w) weights the
/// mask lines (or pixels) of the given kind.
fn weighted_aggregate_matrix(
    coils: &CoilMaps,
    template: &MaskSpec,
    weights: &[f64],
) -> Result<Tensor<Complex64>> {
    use crate::numerics::fft::{kspace_adj, kspace_fwd};
    let shape = &coils.shape;
    let n: usize = shape.iter().product();
    let lines = template.n_lines();
    let mut data = vec![Complex64::new(0.0, 0.0); n * n];
    let mut basis = Tensor::<Complex64>::zeros(shape);
    for j in 0..n {
        basis.data_mut()[j] = Complex64::new(1.0, 0.0);
        let mut col = Tensor::<Complex64>::zeros(shape);
        for s in &coils.maps {
            let ks = kspace_fwd(&basis.mul_elem(s)?)?;
            let weighted = match template.kind {
                MaskKind::Pixel { .. } => {
                    Tensor::from_fn(shape, |i| ks.data()[i] * weights[i])
                }
                MaskKind::KspaceLines { .. } => {
                    Tensor::from_fn(shape, |i| ks.data()[i] * weights[i % lines])
                }
            };
            col = col.add(&kspace_adj(&weighted)?.mul_elem(&s.conj())?)?;
        }
        for (i, &v) in col.data().iter().enumerate() {
            data[i * n + j] = v;
        }
        basis.data_mut()[j] = Complex64::new(0.0, 0.0);
    }
    Tensor::new(vec![n, n], data)
}

/// Exact Bayes posterior mean over a finite prior for ỹ = Ã(x₀ + ση).
///
/// The Gaussian factor shares its covariance σ²·ÃÃᴴ across atoms, so
/// responsibilities reduce to the range-restricted quadratic form.
pub fn bruteforce_posterior_mean(
    prior: &DiscretePrior,
    y_t: &Tensor<Complex64>,
    op: &LinearOp,
    sigma: f64,
) -> Result<Tensor<Complex64>> {
    if sigma <= 0.0 {
        return Err(Error::invalid("bruteforce posterior needs sigma > 0"));
    }
    if prior.atoms.len() > 64 {
        return Err(Error::invalid("enumeration oracle limited to 64 atoms"));
    }
    let kind = prior.signal;
    let rv = RealViewOp::from_op(op, kind)?;
    let gram = rv.gram();
    let gram_c: Vec<Complex64> = gram.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    let pinv = crate::numerics::linalg::psd_pinv(&gram_c, rv.rows, 1e-12)?;
    let ginv: Vec<f64> = pinv.inv.iter().map(|v| v.re).collect();
    let z = y_t.real_view(kind);
    let mut logs = Vec::with_capacity(prior.atoms.len());
    for (atom, w) in prior.atoms.iter().zip(&prior.weights) {
        let proj = rv.matvec(&atom.real_view(kind));
        let d: Vec<f64> = z.iter().zip(&proj).map(|(&a, &b)| a - b).collect();
        // q = dᵀ (ÃÃᵀ)⁺ d
        let mut q = 0.0;
        for i in 0..rv.rows {
            let row = &ginv[i * rv.rows..(i + 1) * rv.rows];
            let gi: f64 = row.iter().zip(&d).map(|(&a, &b)| a * b).sum();
            q += d[i] * gi;
        }
        logs.push(w.ln() - q / (2.0 * sigma * sigma));
    }
    let max = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::Numerical(
            "degenerate likelihood: all atom densities vanished".into(),
        ));
    }
    let mut weights: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    let mut out = Tensor::zeros(prior.shape());
    for (w, atom) in weights.iter().zip(&prior.atoms) {
        out.axpy(*w, atom)?;
    }
    Ok(out)
}

/// Configuration of the trained-model-vs-oracle comparison.
#[derive(Debug, Clone)]
pub struct Theorem1Config {
    pub sigmas: Vec<f64>,
    /// Held-out grid points per noise level.
    pub points_per_sigma: usize,
    pub tolerance: f64,
    pub seed: u64,
}

/// Max relative L2 deviation between a trained denoiser and the
/// enumeration oracle over a held-out in-distribution grid.
pub fn theorem1_check(
    den: &Denoiser,
    prior: &DiscretePrior,
    law: &MaskLaw,
    cfg: &Theorem1Config,
) -> Result<OracleReport> {
    if cfg.sigmas.is_empty() || cfg.points_per_sigma == 0 {
        return Err(Error::invalid("empty theorem-1 test grid"));
    }
    let mut rng = Rng::new(cfg.seed);
    let mut worst = 0.0f64;
    let mut trials = 0u64;
    for &sigma in &cfg.sigmas {
        for _ in 0..cfg.points_per_sigma {
            let x0 = prior.sample(&mut rng);
            let (_, p_tilde) = law.sample_pair(&mut rng)?;
            let tilde_op = inpaint_operator(p_tilde.clone());
            let noise = Tensor::<Complex64>::noise_of_kind(prior.shape(), prior.signal, &mut rng);
            let mut noisy = x0.clone();
            noisy.axpy(sigma, &noise)?;
            let y_t = tilde_op.apply(&noisy)?;
            let oracle = bruteforce_posterior_mean(prior, &y_t, &tilde_op, sigma)?;
            let model = den.denoise(&y_t, Some(&p_tilde.dense()), sigma)?;
            let dev = model.sub(&oracle)?.norm() / oracle.norm().max(1e-12);
            worst = worst.max(dev);
            trials += 1;
        }
    }
    Ok(OracleReport {
        claim: "theorem1.trained_vs_enumeration".into(),
        estimate: worst,
        tolerance: cfg.tolerance,
        trials,
        pass: worst < cfg.tolerance,
        seed: cfg.seed,
    })
}
