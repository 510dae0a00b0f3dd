//! Non-diffusion comparators: L1-wavelet compressed sensing via a
//! monotone FISTA, and the self-supervised k-space split with its
//! mixed-norm loss.
//!
//! FISTA minimizes ½‖A x − y‖² + λ‖W x‖₁ with an orthonormal Haar W,
//! step size 1/L from power iteration on AᴴA, and the monotone variant
//! of the momentum update (a candidate that increases the objective is
//! rejected in favor of the previous iterate, momentum still advances).

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::metrics;
use crate::numerics::rng::Rng;
use crate::numerics::tensor::Tensor;
use crate::numerics::wavelet::{haar_fwd, haar_inv, max_levels};
use crate::operators::{LinearOp, MaskKind, MaskSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct FistaConfig {
    /// L1 regularization weight λ.
    pub lambda: f64,
    pub iters: usize,
    /// Wavelet decomposition depth; None picks the deepest level the
    /// shape admits, capped at 3.
    pub wavelet_levels: Option<usize>,
    pub power_iters: usize,
}

impl Default for FistaConfig {
    fn default() -> Self {
        FistaConfig {
            lambda: 1e-3,
            iters: 100,
            wavelet_levels: None,
            power_iters: 60,
        }
    }
}

impl FistaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda < 0.0 {
            return Err(Error::invalid("lambda must be >= 0"));
        }
        if self.iters == 0 {
            return Err(Error::invalid("iteration count must be >= 1"));
        }
        Ok(())
    }
}

/// Largest eigenvalue of AᴴA by power iteration from a seeded start.
pub fn operator_norm_sq(op: &LinearOp, iters: usize, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let mut v = Tensor::<Complex64>::noise(op.input_shape(), &mut rng);
    let mut lambda = 0.0;
    for _ in 0..iters.max(1) {
        let w = op.adjoint(&op.apply(&v)?)?;
        lambda = w.norm();
        if lambda == 0.0 {
            return Err(Error::Numerical("zero operator norm".into()));
        }
        v = w.scale(1.0 / lambda);
    }
    Ok(lambda)
}

fn objective(
    op: &LinearOp,
    y: &Tensor<Complex64>,
    lambda: f64,
    levels: usize,
    x: &Tensor<Complex64>,
) -> Result<f64> {
    let resid = op.apply(x)?.sub(y)?;
    let coeffs = haar_fwd(x, levels)?;
    Ok(0.5 * resid.norm_sq() + lambda * coeffs.norm_l1())
}

/// Complex magnitude soft-threshold of wavelet coefficients.
fn shrink(coeffs: &Tensor<Complex64>, threshold: f64) -> Tensor<Complex64> {
    coeffs.map(|c| {
        let mag = c.norm();
        if mag <= threshold {
            Complex64::new(0.0, 0.0)
        } else {
            c * ((mag - threshold) / mag)
        }
    })
}

/// Result of an L1-wavelet reconstruction.
#[derive(Debug, Clone)]
pub struct FistaResult {
    pub image: Tensor<Complex64>,
    /// Objective value after every iteration.
    pub objective_trace: Vec<f64>,
    pub step_size: f64,
    pub wavelet_levels: usize,
}

pub fn fista_l1wavelet(
    y: &Tensor<Complex64>,
    op: &LinearOp,
    cfg: &FistaConfig,
) -> Result<FistaResult> {
    cfg.validate()?;
    if y.shape() != op.output_shape().as_slice() {
        return Err(Error::ShapeMismatch {
            expected: op.output_shape(),
            got: y.shape().to_vec(),
        });
    }
    let levels = cfg
        .wavelet_levels
        .unwrap_or_else(|| max_levels(op.input_shape(), 3));
    let lipschitz = operator_norm_sq(op, cfg.power_iters, 0x157a)?;
    let step = 1.0 / lipschitz;
    let mut x = Tensor::<Complex64>::zeros(op.input_shape());
    let mut momentum_point = x.clone();
    let mut t_k = 1.0f64;
    let mut best = objective(op, y, cfg.lambda, levels, &x)?;
    let mut trace = Vec::with_capacity(cfg.iters);
    for _ in 0..cfg.iters {
        let grad = op.adjoint(&op.apply(&momentum_point)?.sub(y)?)?;
        let mut forward = momentum_point.clone();
        forward.axpy(-step, &grad)?;
        let candidate = haar_inv(&shrink(&haar_fwd(&forward, levels)?, cfg.lambda * step), levels)?;
        let cand_obj = objective(op, y, cfg.lambda, levels, &candidate)?;
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t_k * t_k).sqrt());
        // monotone acceptance: never let the objective rise
        let (x_next, obj_next) = if cand_obj <= best {
            (candidate.clone(), cand_obj)
        } else {
            (x.clone(), best)
        };
        let mut next_momentum = x_next.clone();
        next_momentum.axpy(t_k / t_next, &candidate.sub(&x_next)?)?;
        next_momentum.axpy((t_k - 1.0) / t_next, &x_next.sub(&x)?)?;
        x = x_next;
        best = obj_next;
        momentum_point = next_momentum;
        t_k = t_next;
        trace.push(best);
    }
    Ok(FistaResult {
        image: x,
        objective_trace: trace,
        step_size: step,
        wavelet_levels: levels,
    })
}

/// Self-supervised split of an acquired line set Ω into a
/// reconstruction set Θ and a disjoint loss set Λ. ACS lines always
/// land in Θ; |Λ| = round(ρ·|Ω|) drawn uniformly from the non-ACS
/// kept lines.
#[derive(Debug, Clone)]
pub struct SsduSplit {
    pub omega: MaskSpec,
    pub theta: MaskSpec,
    pub lambda_set: MaskSpec,
    pub rho: f64,
}

pub fn ssdu_split(omega: &MaskSpec, rho: f64, seed: u64) -> Result<SsduSplit> {
    if !(0.0..1.0).contains(&rho) || rho == 0.0 {
        return Err(Error::invalid(format!("need 0 < rho < 1, got {rho}")));
    }
    let MaskKind::KspaceLines { accel, acs_lines } = omega.kind else {
        return Err(Error::MaskKind("SSDU splits k-space line masks".into()));
    };
    let kept = omega.kept();
    let acs = omega.acs_indices();
    let candidates: Vec<usize> = omega
        .kept_indices()
        .into_iter()
        .filter(|i| !acs.contains(i))
        .collect();
    let loss_count = (rho * kept as f64).round() as usize;
    if loss_count == 0 {
        return Err(Error::invalid(format!(
            "rho = {rho} rounds to an empty loss set on {kept} kept lines"
        )));
    }
    if loss_count > candidates.len() {
        return Err(Error::invalid(format!(
            "rho = {rho} leaves the reconstruction set empty: wants {loss_count} loss lines, \
             only {} non-ACS lines kept",
            candidates.len()
        )));
    }
    let mut rng = Rng::new(seed);
    let mut in_lambda = vec![false; omega.keep.len()];
    for pick in rng.choose(candidates.len(), loss_count) {
        in_lambda[candidates[pick]] = true;
    }
    let theta_keep: Vec<bool> = omega
        .keep
        .iter()
        .enumerate()
        .map(|(i, &k)| k && !in_lambda[i])
        .collect();
    let lambda_keep: Vec<bool> = in_lambda.clone();
    let n_lines = omega.n_lines() as f64;
    let theta = MaskSpec {
        kind: MaskKind::KspaceLines {
            accel: n_lines / theta_keep.iter().filter(|&&k| k).count() as f64,
            acs_lines,
        },
        shape: omega.shape.clone(),
        keep: theta_keep,
        seed,
    };
    let lambda_set = MaskSpec {
        kind: MaskKind::KspaceLines {
            accel: n_lines / loss_count as f64,
            acs_lines: 0,
        },
        shape: omega.shape.clone(),
        keep: lambda_keep,
        seed,
    };
    let _ = accel;
    Ok(SsduSplit {
        omega: omega.clone(),
        theta,
        lambda_set,
        rho,
    })
}

impl SsduSplit {
    /// Θ ∪ Λ = Ω and Θ ∩ Λ = ∅, checked exhaustively.
    pub fn is_exact_partition(&self) -> bool {
        self.omega
            .keep
            .iter()
            .zip(&self.theta.keep)
            .zip(&self.lambda_set.keep)
            .all(|((&o, &t), &l)| (t || l) == o && !(t && l))
    }
}

/// Mixed-norm self-supervised loss over the loss measurements:
/// ‖y − A x̂‖₁/‖y‖₁ + ‖y − A x̂‖₂/‖y‖₂.
pub fn ssdu_loss(
    y_lambda: &Tensor<Complex64>,
    xhat: &Tensor<Complex64>,
    a_lambda: &LinearOp,
) -> Result<f64> {
    let l1 = y_lambda.norm_l1();
    let l2 = y_lambda.norm();
    if l1 == 0.0 || l2 == 0.0 {
        return Err(Error::invalid("SSDU loss undefined for zero loss measurements"));
    }
    let resid = y_lambda.sub(&a_lambda.apply(xhat)?)?;
    Ok(resid.norm_l1() / l1 + resid.norm() / l2)
}

/// ‖x − x̂‖₂ / ‖x‖₂ on magnitude images (shared with the metrics
/// module).
pub fn nrmse_loss(reference: &Tensor<Complex64>, estimate: &Tensor<Complex64>) -> Result<f64> {
    metrics::nrmse(&reference.magnitude(), &estimate.magnitude())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{gaussian_cs_operator, make_kspace_mask};

    fn real_tensor(v: &[f64]) -> Tensor<Complex64> {
        Tensor::new(vec![v.len()], v.iter().map(|&x| Complex64::new(x, 0.0)).collect()).unwrap()
    }

    #[test]
    fn default_config_matches_stated_baseline() {
        let cfg = FistaConfig::default();
        assert_eq!(cfg.lambda, 1e-3);
        assert_eq!(cfg.iters, 100);
    }

    #[test]
    fn identity_no_regularization_solves_in_one_iteration() {
        let y = real_tensor(&[0.3, -0.2, 0.8, 0.1, 0.0, 0.5, -0.7, 0.9]);
        let op = LinearOp::Identity { shape: vec![8] };
        let cfg = FistaConfig {
            lambda: 0.0,
            iters: 1,
            ..FistaConfig::default()
        };
        let out = fista_l1wavelet(&y, &op, &cfg).unwrap();
        assert!(out.image.sub(&y).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn zero_operator_rejected() {
        let mask = crate::operators::make_pixel_mask(&[4], 0.0, 1).unwrap();
        let mut mask = mask;
        for k in mask.keep.iter_mut() {
            *k = false;
        }
        let op = crate::operators::inpaint_operator(mask);
        let y = Tensor::zeros(&[4]);
        assert!(matches!(
            fista_l1wavelet(&y, &op, &FistaConfig::default()),
            Err(Error::Numerical(_))
        ));
    }

    #[test]
    fn objective_monotone_after_warmup() {
        let mut rng = Rng::new(4);
        let x = Tensor::<Complex64>::noise(&[64], &mut rng);
        let op = gaussian_cs_operator(&[64], 24, 5).unwrap();
        let y = op.apply(&x).unwrap();
        let cfg = FistaConfig {
            lambda: 1e-3,
            iters: 100,
            ..FistaConfig::default()
        };
        let out = fista_l1wavelet(&y, &op, &cfg).unwrap();
        let trace = &out.objective_trace;
        for pair in trace.windows(2).skip(5) {
            assert!(pair[1] <= pair[0] + 1e-12, "objective rose: {} -> {}", pair[0], pair[1]);
        }
    }

    #[test]
    fn five_sparse_wavelet_signal_recovered() {
        // signal that is 5-sparse in the Haar domain, measured by a
        // 100×256 Gaussian matrix
        let n = 256;
        let levels = 3;
        let mut coeffs = Tensor::<Complex64>::zeros(&[n]);
        let support = [3usize, 17, 64, 150, 230];
        let values = [8.0, -6.0, 7.5, -9.0, 5.0];
        for (&idx, &v) in support.iter().zip(&values) {
            coeffs.data_mut()[idx] = Complex64::new(v, 0.0);
        }
        let x_true = haar_inv(&coeffs, levels).unwrap();
        let op = gaussian_cs_operator(&[n], 100, 9).unwrap();
        let y = op.apply(&x_true).unwrap();
        let cfg = FistaConfig {
            lambda: 1e-3,
            iters: 2000,
            wavelet_levels: Some(levels),
            ..FistaConfig::default()
        };
        let out = fista_l1wavelet(&y, &op, &cfg).unwrap();
        let rel = out.image.sub(&x_true).unwrap().norm() / x_true.norm();
        assert!(rel < 1e-3, "recovery rel error {rel}");
        // support recovered: the five largest coefficients are the truth
        let w = haar_fwd(&out.image, levels).unwrap();
        let mut mags: Vec<(usize, f64)> =
            w.data().iter().enumerate().map(|(i, c)| (i, c.norm())).collect();
        mags.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap());
        let mut top: Vec<usize> = mags[..5].iter().map(|&(i, _)| i).collect();
        top.sort_unstable();
        assert_eq!(top, support.to_vec());
    }

    #[test]
    fn fixed_point_satisfies_proximal_stationarity() {
        // run far past the default budget on a small instance and check
        // the subgradient optimality conditions in the wavelet domain
        let n = 32;
        let levels = 2;
        let mut rng = Rng::new(12);
        let x = Tensor::<Complex64>::noise(&[n], &mut rng);
        let op = gaussian_cs_operator(&[n], 24, 13).unwrap();
        let y = op.apply(&x).unwrap();
        let lambda = 5e-2;
        let cfg = FistaConfig {
            lambda,
            iters: 1000,
            wavelet_levels: Some(levels),
            ..FistaConfig::default()
        };
        let out = fista_l1wavelet(&y, &op, &cfg).unwrap();
        let grad = op.adjoint(&op.apply(&out.image).unwrap().sub(&y).unwrap()).unwrap();
        let wg = haar_fwd(&grad, levels).unwrap();
        let wx = haar_fwd(&out.image, levels).unwrap();
        let scale = wg.max_abs().max(lambda);
        for (c, g) in wx.data().iter().zip(wg.data()) {
            if c.norm() > 1e-8 {
                // ∇f + λ·phase(c) = 0 on the support
                let stat = *g + *c / c.norm() * lambda;
                assert!(stat.norm() <= 1e-6 * scale.max(1.0), "support stationarity {}", stat.norm());
            } else {
                // |∇f| ≤ λ off the support
                assert!(g.norm() <= lambda * (1.0 + 1e-6), "off-support |grad| {}", g.norm());
            }
        }
    }

    #[test]
    fn ssdu_split_counts_and_partition() {
        // 128 lines at R=2 keeps 64; ρ=0.2 puts 13 in the loss set
        let omega = make_kspace_mask(&[128, 128], 2.0, 20, 3).unwrap();
        let split = ssdu_split(&omega, 0.2, 7).unwrap();
        assert_eq!(split.lambda_set.kept(), 13);
        assert_eq!(split.theta.kept(), 51);
        assert!(split.is_exact_partition());
        // ACS lines all live in Θ
        for i in omega.acs_indices() {
            assert!(split.theta.keep[i]);
            assert!(!split.lambda_set.keep[i]);
        }
        // realized ρ within one line of the target
        let realized = split.lambda_set.kept() as f64 / omega.kept() as f64;
        assert!((realized - 0.2).abs() <= 1.0 / omega.kept() as f64);
    }

    #[test]
    fn ssdu_split_is_uniform_over_non_acs_lines() {
        let omega = make_kspace_mask(&[64, 64], 2.0, 8, 5).unwrap();
        let kept_non_acs: Vec<usize> = omega
            .kept_indices()
            .into_iter()
            .filter(|i| !omega.acs_indices().contains(i))
            .collect();
        let loss_count = (0.2 * omega.kept() as f64).round() as usize;
        let expect = loss_count as f64 / kept_non_acs.len() as f64;
        let mut counts = std::collections::HashMap::new();
        let trials = 10_000;
        for seed in 0..trials {
            let split = ssdu_split(&omega, 0.2, seed).unwrap();
            for &i in &kept_non_acs {
                if split.lambda_set.keep[i] {
                    *counts.entry(i).or_insert(0usize) += 1;
                }
            }
        }
        for &i in &kept_non_acs {
            let freq = *counts.get(&i).unwrap_or(&0) as f64 / trials as f64;
            assert!(
                (freq - expect).abs() < 0.01,
                "line {i}: frequency {freq} vs {expect}"
            );
        }
    }

    #[test]
    fn ssdu_split_degenerate_rho_rejected() {
        let omega = make_kspace_mask(&[32, 32], 2.0, 8, 1).unwrap();
        assert!(ssdu_split(&omega, 0.0, 1).is_err());
        // ρ so large the loss set would swallow every non-ACS line
        assert!(ssdu_split(&omega, 0.99, 1).is_err());
    }

    #[test]
    fn ssdu_loss_values() {
        // exact reconstruction → 0
        let y = real_tensor(&[1.0, 0.0]);
        let op = LinearOp::Identity { shape: vec![2] };
        assert!(ssdu_loss(&y, &y, &op).unwrap() < 1e-15);
        // y=(1,0), x̂=0: L1 part 1/1, L2 part 1/1
        let zero = Tensor::zeros(&[2]);
        assert!((ssdu_loss(&y, &zero, &op).unwrap() - 2.0).abs() < 1e-12);
        // zero loss measurements rejected
        assert!(ssdu_loss(&zero, &y, &op).is_err());
    }

    #[test]
    fn ssdu_loss_matches_second_implementation() {
        let mut rng = Rng::new(21);
        let xhat = Tensor::<Complex64>::noise(&[16], &mut rng);
        let op = gaussian_cs_operator(&[16], 8, 3).unwrap();
        let y = op
            .apply(&Tensor::<Complex64>::noise(&[16], &mut rng))
            .unwrap();
        let got = ssdu_loss(&y, &xhat, &op).unwrap();
        let ax = op.apply(&xhat).unwrap();
        let mut l1_num = 0.0;
        let mut l1_den = 0.0;
        let mut l2_num = 0.0;
        let mut l2_den = 0.0;
        for (a, b) in y.data().iter().zip(ax.data()) {
            l1_num += (a - b).norm();
            l1_den += a.norm();
            l2_num += (a - b).norm_sqr();
            l2_den += a.norm_sqr();
        }
        let want = l1_num / l1_den + (l2_num / l2_den).sqrt();
        assert!((got - want).abs() < 1e-12);
    }

    #[test]
    fn nrmse_loss_hand_values() {
        let x = real_tensor(&[3.0, 4.0]);
        assert!((nrmse_loss(&x, &Tensor::zeros(&[2])).unwrap() - 1.0).abs() < 1e-15);
        assert!(nrmse_loss(&x, &x).unwrap() < 1e-15);
    }
}
