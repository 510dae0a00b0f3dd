//! Reconstruction quality metrics: MSE, NRMSE, PSNR, SSIM.
//!
//! Complex images are reduced to magnitude before scoring. SSIM uses a
//! 7×7 uniform window over valid positions with the standard
//! stabilizers C₁ = (0.01·range)², C₂ = (0.03·range)², and is only
//! defined for 2-D images at least as large as the window.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Sentinel PSNR reported when the MSE is exactly zero.
pub const PSNR_CAP_DB: f64 = 300.0;

pub const SSIM_WINDOW: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleMetrics {
    pub mse: f64,
    pub nrmse: f64,
    pub psnr: f64,
    /// None when the image geometry does not support SSIM.
    pub ssim: Option<f64>,
}

pub fn mse(reference: &Tensor<f64>, estimate: &Tensor<f64>) -> Result<f64> {
    reference.check_same_shape(estimate)?;
    Ok(reference.sub(estimate)?.norm_sq() / reference.len() as f64)
}

/// ‖x − x̂‖₂ / ‖x‖₂.
pub fn nrmse(reference: &Tensor<f64>, estimate: &Tensor<f64>) -> Result<f64> {
    reference.check_same_shape(estimate)?;
    let denom = reference.norm();
    if denom == 0.0 {
        return Err(Error::invalid("NRMSE undefined for a zero reference"));
    }
    Ok(reference.sub(estimate)?.norm() / denom)
}

pub fn psnr(reference: &Tensor<f64>, estimate: &Tensor<f64>, data_range: f64) -> Result<f64> {
    let m = mse(reference, estimate)?;
    if m == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok(10.0 * (data_range * data_range / m).log10())
}

/// Mean SSIM over all valid 7×7 windows of two 2-D images.
pub fn ssim(reference: &Tensor<f64>, estimate: &Tensor<f64>, data_range: f64) -> Result<f64> {
    reference.check_same_shape(estimate)?;
    if reference.ndim() != 2 {
        return Err(Error::invalid("SSIM requires 2-D images"));
    }
    let (h, w) = (reference.shape()[0], reference.shape()[1]);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::invalid(format!(
            "SSIM needs images of at least {SSIM_WINDOW}x{SSIM_WINDOW}, got {h}x{w}"
        )));
    }
    let c1 = (0.01 * data_range).powi(2);
    let c2 = (0.03 * data_range).powi(2);
    let win = SSIM_WINDOW;
    let npix = (win * win) as f64;
    let mut total = 0.0;
    let mut count = 0usize;
    for row in 0..=(h - win) {
        for col in 0..=(w - win) {
            let mut sx = 0.0;
            let mut sy = 0.0;
            let mut sxx = 0.0;
            let mut syy = 0.0;
            let mut sxy = 0.0;
            for i in 0..win {
                for j in 0..win {
                    let a = reference.data()[(row + i) * w + (col + j)];
                    let b = estimate.data()[(row + i) * w + (col + j)];
                    sx += a;
                    sy += b;
                    sxx += a * a;
                    syy += b * b;
                    sxy += a * b;
                }
            }
            let mx = sx / npix;
            let my = sy / npix;
            let vx = sxx / npix - mx * mx;
            let vy = syy / npix - my * my;
            let cov = sxy / npix - mx * my;
            let val = ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                / ((mx * mx + my * my + c1) * (vx + vy + c2));
            total += val;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// All metrics for a magnitude-image pair (complex inputs reduced by
/// modulus first).
pub fn compute_metrics(
    reference: &Tensor<Complex64>,
    estimate: &Tensor<Complex64>,
    data_range: f64,
) -> Result<SampleMetrics> {
    reference.check_same_shape(estimate)?;
    if data_range <= 0.0 {
        return Err(Error::invalid("data range must be positive"));
    }
    let r = reference.magnitude();
    let e = estimate.magnitude();
    let ssim_val = if r.ndim() == 2 && r.shape().iter().all(|&d| d >= SSIM_WINDOW) {
        Some(ssim(&r, &e, data_range)?)
    } else {
        None
    };
    Ok(SampleMetrics {
        mse: mse(&r, &e)?,
        nrmse: nrmse(&r, &e)?,
        psnr: psnr(&r, &e, data_range)?,
        ssim: ssim_val,
    })
}

/// Per-sample metrics with their aggregate statistics.
#[derive(Debug, Clone, Default)]
pub struct MetricReport {
    pub ids: Vec<String>,
    pub samples: Vec<SampleMetrics>,
}

#[derive(Debug, Clone, Copy)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

fn mean_std(values: &[f64]) -> MeanStd {
    let n = values.len().max(1) as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MeanStd {
        mean,
        std: var.sqrt(),
    }
}

impl MetricReport {
    pub fn push(&mut self, id: impl Into<String>, m: SampleMetrics) {
        self.ids.push(id.into());
        self.samples.push(m);
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mse_stats(&self) -> MeanStd {
        mean_std(&self.samples.iter().map(|m| m.mse).collect::<Vec<_>>())
    }

    pub fn nrmse_stats(&self) -> MeanStd {
        mean_std(&self.samples.iter().map(|m| m.nrmse).collect::<Vec<_>>())
    }

    pub fn psnr_stats(&self) -> MeanStd {
        mean_std(&self.samples.iter().map(|m| m.psnr).collect::<Vec<_>>())
    }

    pub fn ssim_stats(&self) -> Option<MeanStd> {
        let vals: Vec<f64> = self.samples.iter().filter_map(|m| m.ssim).collect();
        if vals.is_empty() {
            None
        } else {
            Some(mean_std(&vals))
        }
    }

    /// CSV with one row per sample and a trailing summary row. The
    /// header comment carries the config hash for provenance.
    pub fn to_csv(&self, config_hash: u64) -> String {
        let mut out = String::new();
        out.push_str(&format!("# config_hash = {config_hash:016x}\n"));
        out.push_str("id,mse,nrmse,psnr,ssim\n");
        for (id, m) in self.ids.iter().zip(&self.samples) {
            out.push_str(&format!(
                "{id},{:.12e},{:.12e},{:.12e},{}\n",
                m.mse,
                m.nrmse,
                m.psnr,
                m.ssim.map_or(String::new(), |v| format!("{v:.12e}"))
            ));
        }
        let mse = self.mse_stats();
        let nr = self.nrmse_stats();
        let ps = self.psnr_stats();
        let ss = self.ssim_stats();
        out.push_str(&format!(
            "mean,{:.12e},{:.12e},{:.12e},{}\n",
            mse.mean,
            nr.mean,
            ps.mean,
            ss.map_or(String::new(), |v| format!("{:.12e}", v.mean))
        ));
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::Rng;

    fn magnitude_image(shape: &[usize], seed: u64) -> Tensor<f64> {
        let mut rng = Rng::new(seed);
        Tensor::from_fn(shape, |_| rng.uniform())
    }

    #[test]
    fn identical_images_are_perfect() {
        let img = magnitude_image(&[16, 16], 1).to_c128();
        let m = compute_metrics(&img, &img, 1.0).unwrap();
        assert_eq!(m.mse, 0.0);
        assert_eq!(m.nrmse, 0.0);
        assert_eq!(m.psnr, PSNR_CAP_DB);
        assert!((m.ssim.unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn nrmse_of_zero_estimate_is_one() {
        let r = Tensor::<f64>::new(vec![2], vec![3.0, 4.0]).unwrap();
        let e = Tensor::<f64>::zeros(&[2]);
        assert!((nrmse(&r, &e).unwrap() - 1.0).abs() < 1e-15);
        assert!(nrmse(&Tensor::<f64>::zeros(&[2]), &e).is_err());
    }

    #[test]
    fn second_implementation_oracle_agrees() {
        // straightforward reimplementation of every formula
        let r = magnitude_image(&[12, 12], 3);
        let e = magnitude_image(&[12, 12], 4);
        let range = 1.0;
        let m = compute_metrics(&r.to_c128(), &e.to_c128(), range).unwrap();

        let n = r.len() as f64;
        let mse2: f64 = r
            .data()
            .iter()
            .zip(e.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n;
        assert!((m.mse - mse2).abs() < 1e-10);
        let nrmse2 = (r
            .data()
            .iter()
            .zip(e.data())
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / r.data().iter().map(|a| a * a).sum::<f64>())
        .sqrt();
        assert!((m.nrmse - nrmse2).abs() < 1e-10);
        let psnr2 = 10.0 * (range * range / mse2).log10();
        assert!((m.psnr - psnr2).abs() < 1e-10);

        // SSIM by direct loops with explicit window statistics
        let win = 7;
        let (c1, c2) = ((0.01f64).powi(2), (0.03f64).powi(2));
        let mut acc = 0.0;
        let mut cnt = 0;
        for row in 0..=(12 - win) {
            for col in 0..=(12 - win) {
                let mut xs = Vec::new();
                let mut ys = Vec::new();
                for i in 0..win {
                    for j in 0..win {
                        xs.push(r.data()[(row + i) * 12 + col + j]);
                        ys.push(e.data()[(row + i) * 12 + col + j]);
                    }
                }
                let np = xs.len() as f64;
                let mx = xs.iter().sum::<f64>() / np;
                let my = ys.iter().sum::<f64>() / np;
                let vx = xs.iter().map(|v| (v - mx) * (v - mx)).sum::<f64>() / np;
                let vy = ys.iter().map(|v| (v - my) * (v - my)).sum::<f64>() / np;
                let cov = xs
                    .iter()
                    .zip(&ys)
                    .map(|(a, b)| (a - mx) * (b - my))
                    .sum::<f64>()
                    / np;
                acc += ((2.0 * mx * my + c1) * (2.0 * cov + c2))
                    / ((mx * mx + my * my + c1) * (vx + vy + c2));
                cnt += 1;
            }
        }
        assert!((m.ssim.unwrap() - acc / cnt as f64).abs() < 1e-10);
    }

    #[test]
    fn ssim_is_symmetric_and_one_iff_identical() {
        let a = magnitude_image(&[10, 10], 5);
        let b = magnitude_image(&[10, 10], 6);
        let ab = ssim(&a, &b, 1.0).unwrap();
        let ba = ssim(&b, &a, 1.0).unwrap();
        assert!((ab - ba).abs() < 1e-12);
        assert!(ab < 1.0);
        assert!((ssim(&a, &a, 1.0).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psnr_strictly_decreasing_in_mse() {
        let r = magnitude_image(&[8, 8], 7);
        let mut last = f64::INFINITY;
        for scale in [0.01, 0.05, 0.2, 0.5] {
            let e = r.map(|v| v + scale);
            let p = psnr(&r, &e, 1.0).unwrap();
            assert!(p < last, "psnr not decreasing: {p} !< {last}");
            last = p;
        }
    }

    #[test]
    fn one_dimensional_signals_skip_ssim() {
        let r = magnitude_image(&[32], 8).to_c128();
        let e = magnitude_image(&[32], 9).to_c128();
        let m = compute_metrics(&r, &e, 1.0).unwrap();
        assert!(m.ssim.is_none());
        assert!(m.mse > 0.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let r = magnitude_image(&[8, 8], 1).to_c128();
        let e = magnitude_image(&[8, 4], 2).to_c128();
        assert!(compute_metrics(&r, &e, 1.0).is_err());
    }

    #[test]
    fn report_csv_is_deterministic() {
        let mut rep = MetricReport::default();
        rep.push(
            "s0",
            SampleMetrics {
                mse: 0.25,
                nrmse: 0.5,
                psnr: 6.0,
                ssim: Some(0.9),
            },
        );
        rep.push(
            "s1",
            SampleMetrics {
                mse: 0.01,
                nrmse: 0.1,
                psnr: 20.0,
                ssim: None,
            },
        );
        let a = rep.to_csv(0xdead);
        let b = rep.to_csv(0xdead);
        assert_eq!(a, b);
        assert!(a.starts_with("# config_hash = 000000000000dead\n"));
        assert!(a.lines().count() == 5);
    }
}
