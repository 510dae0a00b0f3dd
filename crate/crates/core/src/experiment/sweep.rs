//! Reconstruction sweeps: rebuild the test set at each axis value,
//! score every sample, and emit per-sample CSVs plus a mean±std curve
//! file, all byte-deterministic for a fixed config and master seed.

use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::baselines::{fista_l1wavelet, FistaConfig};
use crate::error::{Error, Result};
use crate::io::KvMap;
use crate::metrics::{compute_metrics, SampleMetrics};
use crate::models::{load_checkpoint, Denoiser, GaussianMixturePrior, GmAmbientDenoiser};
use crate::mri_sim::{acquire, load_dataset_item};
use crate::numerics::rng::Rng;
use crate::numerics::tensor::{SignalKind, Tensor};
use crate::operators::{
    downsample_operator, gaussian_cs_operator, inpaint_operator, make_kspace_mask,
    make_pixel_mask, mri_forward_operator, mri_operator, LinearOp,
};
use crate::samplers::{adps_sample, aos_predict, dps_sample, InverseProblem, SamplerConfig};

use super::config::{ExperimentConfig, Method, ModelRef, SweepAxis, Task, ToyPrior};
use super::threads::parallel_map;

/// Toy mixture prior the natural-image-analog tasks draw signals from.
pub fn build_toy_prior(shape: &[usize], spec: &ToyPrior) -> Result<GaussianMixturePrior> {
    let mut rng = Rng::new(spec.seed);
    let means: Vec<Tensor<Complex64>> = (0..spec.components.max(1))
        .map(|_| {
            Tensor::<Complex64>::noise_of_kind(shape, SignalKind::Real, &mut rng)
                .scale(spec.mean_scale)
        })
        .collect();
    GaussianMixturePrior::new(
        vec![1.0; spec.components.max(1)],
        means,
        vec![spec.tau_sq; spec.components.max(1)],
        SignalKind::Real,
    )
}

/// Reference signal, inference operator and measurement, optional
/// frozen train operator, and optional one-step input with its mask.
type SampleSetup = (
    Tensor<Complex64>,
    LinearOp,
    Tensor<Complex64>,
    Option<LinearOp>,
    Option<(Tensor<Complex64>, Tensor<f64>)>,
);

/// Immutable state shared across every sample of a run.
struct RunContext {
    prior: Option<GaussianMixturePrior>,
    checkpoint: Option<Denoiser>,
    dataset_count: usize,
}

impl RunContext {
    fn build(cfg: &ExperimentConfig) -> Result<Self> {
        let prior = if cfg.task == Task::Mri {
            None
        } else {
            Some(build_toy_prior(&cfg.shape, &cfg.prior)?)
        };
        let checkpoint = match &cfg.model {
            ModelRef::Checkpoint(base) => Some(Denoiser::Mlp(load_checkpoint(base)?)),
            _ => None,
        };
        let dataset_count = match &cfg.dataset {
            Some(dir) => KvMap::load(dir.join("manifest.kv"))?.get_usize("count")?,
            None => 0,
        };
        Ok(RunContext {
            prior,
            checkpoint,
            dataset_count,
        })
    }
}

fn axis_usize(base: usize, axis: Option<(SweepAxis, f64)>, which: SweepAxis) -> usize {
    match axis {
        Some((a, v)) if a == which => v.round() as usize,
        _ => base,
    }
}

fn axis_f64(base: f64, axis: Option<(SweepAxis, f64)>, which: SweepAxis) -> f64 {
    match axis {
        Some((a, v)) if a == which => v,
        _ => base,
    }
}

/// Reconstruct and score one test sample.
fn run_sample(
    cfg: &ExperimentConfig,
    ctx: &RunContext,
    axis: Option<(SweepAxis, f64)>,
    value_idx: usize,
    sample_idx: usize,
) -> Result<SampleMetrics> {
    let mut rng = Rng::derive(cfg.seed, ((value_idx as u64) << 32) | sample_idx as u64);
    let steps = axis_usize(cfg.steps, axis, SweepAxis::Nfe).max(2);
    let sampler_cfg = {
        let mut c = SamplerConfig::new(steps, cfg.guidance, rng.next_u64())?;
        c.stochastic = cfg.stochastic;
        c
    };

    // reference signal, measurement operator, and measurement
    let (reference, a_inf, y_inf, a_train, aos_input): SampleSetup = match cfg.task {
        Task::Mri => {
            let dir = cfg.dataset.as_ref().expect("validated");
            let item = load_dataset_item(dir, sample_idx % ctx.dataset_count.max(1))?;
            let accel = axis_f64(cfg.accel, axis, SweepAxis::Acceleration);
            let (mask, kspace) = if (accel - item.kspace.mask_accel()).abs() < 1e-9 {
                (item.kspace.mask.clone(), item.kspace)
            } else {
                let mask =
                    make_kspace_mask(&cfg.shape, accel, cfg.acs_lines, rng.next_u64())?;
                let k = acquire(&item.phantom, &item.kspace.coils, &mask)?;
                (mask, k)
            };
            let coils = kspace.coils.clone();
            let a = mri_forward_operator(mask.clone(), coils.clone())?;
            let y = stack_coils(&kspace.data, &cfg.shape)?;
            let train_mask =
                make_kspace_mask(&cfg.shape, cfg.train_accel, cfg.acs_lines, rng.next_u64())?;
            let a_train = mri_operator(train_mask, coils)?;
            let aggregate = kspace.adjoint_aggregate()?;
            let mask_dense = mask.dense();
            (
                item.phantom,
                a,
                y,
                Some(a_train),
                Some((aggregate, mask_dense)),
            )
        }
        _ => {
            let prior = ctx.prior.as_ref().expect("toy prior");
            let xstar = prior.sample(&mut rng);
            let op = match cfg.task {
                Task::CompressedSensing => {
                    let m = axis_usize(cfg.measurements, axis, SweepAxis::Measurements).max(1);
                    gaussian_cs_operator(&cfg.shape, m, rng.next_u64())?
                }
                Task::SuperResolution => {
                    let f = axis_usize(cfg.factor, axis, SweepAxis::Factor).max(1);
                    downsample_operator(&cfg.shape, f)?
                }
                Task::Inpainting => {
                    let p = axis_f64(cfg.erase_prob, axis, SweepAxis::EraseProb);
                    inpaint_operator(make_pixel_mask(&cfg.shape, p, rng.next_u64())?)
                }
                Task::Mri => unreachable!(),
            };
            let y = op.apply(&xstar)?;
            let train_mask = make_pixel_mask(&cfg.shape, cfg.train_erase_prob, rng.next_u64())?;
            let aos_in = match cfg.task {
                Task::Inpainting => Some((y.clone(), match &op {
                    LinearOp::Inpaint { mask } => mask.dense(),
                    _ => unreachable!(),
                })),
                _ => None,
            };
            (xstar, op, y, Some(inpaint_operator(train_mask)), aos_in)
        }
    };

    let problem = InverseProblem::new(y_inf.clone(), a_inf.clone())?;
    let estimate = match cfg.method {
        Method::Fista => {
            let fcfg = FistaConfig {
                lambda: cfg.fista_lambda,
                iters: cfg.fista_iters,
                ..FistaConfig::default()
            };
            fista_l1wavelet(&y_inf, &a_inf, &fcfg)?.image
        }
        Method::Dps => {
            let den = match (&cfg.model, &ctx.checkpoint) {
                (ModelRef::Checkpoint(_), Some(d)) => d.clone(),
                _ => Denoiser::Gm(ctx.prior.clone().ok_or_else(|| {
                    Error::Config("dps with the analytic model needs a toy prior task".into())
                })?),
            };
            dps_sample(&den, &problem, &cfg.schedule, &sampler_cfg)?
        }
        Method::Adps => {
            let a_train = a_train.ok_or_else(|| Error::Config("no train operator".into()))?;
            let den = match (&cfg.model, &ctx.checkpoint) {
                (ModelRef::Checkpoint(_), Some(d)) => d.clone(),
                _ => {
                    let prior = ctx.prior.clone().ok_or_else(|| {
                        Error::Config("analytic ambient model needs a toy prior task".into())
                    })?;
                    Denoiser::GmAmbient(GmAmbientDenoiser::new(prior, a_train.clone())?)
                }
            };
            adps_sample(&den, &problem, &a_train, &cfg.schedule, &sampler_cfg)?
        }
        Method::Aos => {
            let (input, mask_dense) = aos_input.ok_or_else(|| {
                Error::Config("one-step restoration applies to inpaint and mri tasks".into())
            })?;
            let den = match (&cfg.model, &ctx.checkpoint) {
                (ModelRef::Checkpoint(_), Some(d)) => d.clone(),
                _ => {
                    return Err(Error::Config(
                        "one-step restoration needs a trained checkpoint".into(),
                    ))
                }
            };
            aos_predict(&den, &input, Some(&mask_dense), cfg.schedule.sigma_min)?
        }
    };
    let range = reference.magnitude().max_abs().max(1e-12);
    compute_metrics(&reference, &estimate, range)
}

fn stack_coils(data: &[Tensor<Complex64>], shape: &[usize]) -> Result<Tensor<Complex64>> {
    let per: usize = shape.iter().product();
    let mut out_shape = vec![data.len()];
    out_shape.extend_from_slice(shape);
    let mut flat = Vec::with_capacity(data.len() * per);
    for z in data {
        flat.extend_from_slice(z.data());
    }
    Tensor::new(out_shape, flat)
}

impl crate::mri_sim::KspaceData {
    fn mask_accel(&self) -> f64 {
        match self.mask.kind {
            crate::operators::MaskKind::KspaceLines { accel, .. } => accel,
            crate::operators::MaskKind::Pixel { .. } => 1.0,
        }
    }
}

/// One axis value's scored samples.
#[derive(Debug)]
pub struct SweepPoint {
    pub value: f64,
    pub statuses: Vec<std::result::Result<SampleMetrics, String>>,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub points: Vec<SweepPoint>,
    pub curve_path: PathBuf,
    pub sample_paths: Vec<PathBuf>,
}

fn fmt_metric(v: f64) -> String {
    format!("{v:.12e}")
}

/// Run the configured sweep and write all outputs (none on fatal
/// error; per-sample failures are recorded, not fatal).
pub fn run_sweep(cfg: &ExperimentConfig, out_dir: impl AsRef<Path>) -> Result<SweepOutcome> {
    let out_dir = out_dir.as_ref();
    let axis = cfg
        .sweep_axis
        .ok_or_else(|| Error::Config("sweep requires sweep_axis".into()))?;
    if cfg.sweep_values.is_empty() {
        return Err(Error::Config("sweep requires nonempty sweep_values".into()));
    }
    let ctx = RunContext::build(cfg)?;
    if cfg.task == Task::Mri && ctx.dataset_count == 0 {
        return Err(Error::Config("empty dataset".into()));
    }
    // refuse to mix outputs from different configurations
    let curve_path = out_dir.join("curve.csv");
    if curve_path.exists() {
        let existing = std::fs::read_to_string(&curve_path)?;
        let tag = format!("# config_hash = {:016x}", cfg.hash());
        if !existing.starts_with(&tag) {
            return Err(Error::Config(format!(
                "output directory holds a sweep with a different config hash; refusing to mix \
                 ({})",
                curve_path.display()
            )));
        }
    }

    let mut points = Vec::new();
    for (value_idx, &value) in cfg.sweep_values.iter().enumerate() {
        let statuses = parallel_map(cfg.count, |sample_idx| {
            run_sample(cfg, &ctx, Some((axis, value)), value_idx, sample_idx)
                .map_err(|e| e.to_string())
        });
        points.push(SweepPoint { value, statuses });
    }

    // render everything before touching the filesystem
    let mut sample_files = Vec::new();
    for (value_idx, point) in points.iter().enumerate() {
        let mut text = format!("# config_hash = {:016x}\n", cfg.hash());
        text.push_str("id,status,mse,nrmse,psnr,ssim\n");
        for (i, status) in point.statuses.iter().enumerate() {
            match status {
                Ok(m) => {
                    text.push_str(&format!(
                        "{i},ok,{},{},{},{}\n",
                        fmt_metric(m.mse),
                        fmt_metric(m.nrmse),
                        fmt_metric(m.psnr),
                        m.ssim.map(fmt_metric).unwrap_or_default()
                    ));
                }
                Err(msg) => {
                    text.push_str(&format!("{i},error,,,,{}\n", msg.replace(',', ";")));
                }
            }
        }
        let name = format!("samples_{}_{value_idx}.csv", axis.name());
        sample_files.push((out_dir.join(name), text));
    }
    let mut curve = format!("# config_hash = {:016x}\n", cfg.hash());
    curve.push_str(
        "axis,value,n_ok,mse_mean,mse_std,nrmse_mean,nrmse_std,psnr_mean,psnr_std,ssim_mean,ssim_std\n",
    );
    for point in &points {
        let ok: Vec<&SampleMetrics> = point.statuses.iter().filter_map(|s| s.as_ref().ok()).collect();
        let stat = |get: &dyn Fn(&SampleMetrics) -> Option<f64>| -> (String, String) {
            let vals: Vec<f64> = ok.iter().filter_map(|m| get(m)).collect();
            if vals.is_empty() {
                return (String::new(), String::new());
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std =
                (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            (fmt_metric(mean), fmt_metric(std))
        };
        let (mse_m, mse_s) = stat(&|m| Some(m.mse));
        let (nr_m, nr_s) = stat(&|m| Some(m.nrmse));
        let (ps_m, ps_s) = stat(&|m| Some(m.psnr));
        let (ss_m, ss_s) = stat(&|m| m.ssim);
        curve.push_str(&format!(
            "{},{},{},{mse_m},{mse_s},{nr_m},{nr_s},{ps_m},{ps_s},{ss_m},{ss_s}\n",
            axis.name(),
            point.value,
            ok.len()
        ));
    }

    std::fs::create_dir_all(out_dir)?;
    let mut sample_paths = Vec::new();
    for (path, text) in sample_files {
        std::fs::write(&path, text)?;
        sample_paths.push(path);
    }
    std::fs::write(&curve_path, curve)?;
    Ok(SweepOutcome {
        points,
        curve_path,
        sample_paths,
    })
}

/// Score the whole test set at the base configuration (no axis).
pub fn run_testset(cfg: &ExperimentConfig) -> Result<Vec<std::result::Result<SampleMetrics, String>>> {
    let ctx = RunContext::build(cfg)?;
    if cfg.task == Task::Mri && ctx.dataset_count == 0 {
        return Err(Error::Config("empty dataset".into()));
    }
    Ok(parallel_map(cfg.count, |sample_idx| {
        run_sample(cfg, &ctx, None, 0, sample_idx).map_err(|e| e.to_string())
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::KvMap;

    fn sweep_config(dir: &Path) -> ExperimentConfig {
        let text = "task = cs\nmethod = dps\nmodel = gm\nshape = 8\ncount = 6\n\
                    steps = 24\ngamma = const:1.0\nseed = 5\nsigma_max = 10\n\
                    sweep_axis = m\nsweep_values = 2,6\n";
        let _ = dir;
        ExperimentConfig::from_kv(&KvMap::parse(text).unwrap()).unwrap()
    }

    #[test]
    fn sweep_outputs_are_byte_identical_across_reruns() {
        let base = std::env::temp_dir().join("ambient_sweep_test");
        let _ = std::fs::remove_dir_all(&base);
        let cfg = sweep_config(&base);
        let out_a = run_sweep(&cfg, base.join("a")).unwrap();
        let out_b = run_sweep(&cfg, base.join("b")).unwrap();
        let curve_a = std::fs::read(&out_a.curve_path).unwrap();
        let curve_b = std::fs::read(&out_b.curve_path).unwrap();
        assert_eq!(curve_a, curve_b);
        for (pa, pb) in out_a.sample_paths.iter().zip(&out_b.sample_paths) {
            assert_eq!(std::fs::read(pa).unwrap(), std::fs::read(pb).unwrap());
        }
    }

    #[test]
    fn mixing_hashes_in_one_directory_rejected() {
        let base = std::env::temp_dir().join("ambient_sweep_mix_test");
        let _ = std::fs::remove_dir_all(&base);
        let cfg = sweep_config(&base);
        run_sweep(&cfg, &base).unwrap();
        let text = "task = cs\nmethod = dps\nmodel = gm\nshape = 8\ncount = 2\n\
                    steps = 12\ngamma = const:1.0\nseed = 9\nsigma_max = 10\n\
                    sweep_axis = m\nsweep_values = 2\n";
        let other = ExperimentConfig::from_kv(&KvMap::parse(text).unwrap()).unwrap();
        let err = run_sweep(&other, &base).unwrap_err();
        assert!(err.to_string().contains("different config hash"), "{err}");
    }

    #[test]
    fn nfe_axis_changes_step_count_without_failing() {
        let base = std::env::temp_dir().join("ambient_sweep_nfe_test");
        let _ = std::fs::remove_dir_all(&base);
        let text = "task = cs\nmethod = dps\nmodel = gm\nshape = 8\ncount = 3\n\
                    gamma = const:1.0\nseed = 2\nsigma_max = 10\nm = 4\n\
                    sweep_axis = nfe\nsweep_values = 50,100,150,200,250,300\n";
        let cfg = ExperimentConfig::from_kv(&KvMap::parse(text).unwrap()).unwrap();
        let out = run_sweep(&cfg, &base).unwrap();
        assert_eq!(out.points.len(), 6);
        for point in &out.points {
            for s in &point.statuses {
                assert!(s.is_ok(), "{s:?}");
            }
        }
    }

    #[test]
    fn fista_method_runs_in_sweeps() {
        let base = std::env::temp_dir().join("ambient_sweep_fista_test");
        let _ = std::fs::remove_dir_all(&base);
        let text = "task = cs\nmethod = fista\nshape = 16\ncount = 3\nlambda = 0.001\n\
                    iters = 100\nseed = 4\nsweep_axis = m\nsweep_values = 4,12\n";
        let cfg = ExperimentConfig::from_kv(&KvMap::parse(text).unwrap()).unwrap();
        let out = run_sweep(&cfg, &base).unwrap();
        // more measurements must help on average
        let mean_nrmse = |p: &SweepPoint| {
            let vals: Vec<f64> = p
                .statuses
                .iter()
                .filter_map(|s| s.as_ref().ok().map(|m| m.nrmse))
                .collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        };
        assert!(mean_nrmse(&out.points[1]) < mean_nrmse(&out.points[0]));
    }
}
