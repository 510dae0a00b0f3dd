//! Experiment configuration: a flat `key = value` file mapped onto the
//! task, operator, model, sampler, and sweep settings, hashed in
//! canonical form so every output can carry its provenance.

use std::path::{Path, PathBuf};

use crate::diffusion::{NoiseSchedule, SpacingRule};
use crate::error::{Error, Result};
use crate::io::KvMap;
use crate::operators::parse_shape;
use crate::samplers::{Guidance, SamplerConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Task {
    CompressedSensing,
    SuperResolution,
    Inpainting,
    Mri,
}

impl Task {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "cs" => Ok(Task::CompressedSensing),
            "superres" => Ok(Task::SuperResolution),
            "inpaint" => Ok(Task::Inpainting),
            "mri" => Ok(Task::Mri),
            other => Err(Error::Config(format!("unknown task `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dps,
    Adps,
    Aos,
    Fista,
}

impl Method {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "dps" => Ok(Method::Dps),
            "adps" => Ok(Method::Adps),
            "aos" => Ok(Method::Aos),
            "fista" => Ok(Method::Fista),
            other => Err(Error::Config(format!("unknown method `{other}`"))),
        }
    }
}

/// Which denoiser backs a sampler method.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelRef {
    /// Analytic mixture denoiser over the toy prior.
    AnalyticGm,
    /// Analytic ambient mixture denoiser over the frozen train operator.
    AnalyticGmAmbient,
    /// Trained network checkpoint (base path without extension).
    Checkpoint(PathBuf),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Nfe,
    Measurements,
    Factor,
    EraseProb,
    Acceleration,
}

impl SweepAxis {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "nfe" => Ok(SweepAxis::Nfe),
            "m" => Ok(SweepAxis::Measurements),
            "factor" => Ok(SweepAxis::Factor),
            "p" => Ok(SweepAxis::EraseProb),
            "r" => Ok(SweepAxis::Acceleration),
            other => Err(Error::Config(format!("unknown sweep axis `{other}`"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Nfe => "nfe",
            SweepAxis::Measurements => "m",
            SweepAxis::Factor => "factor",
            SweepAxis::EraseProb => "p",
            SweepAxis::Acceleration => "r",
        }
    }
}

/// Toy Gaussian-mixture prior the natural-image-analog tasks draw
/// signals from.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPrior {
    pub components: usize,
    pub tau_sq: f64,
    pub mean_scale: f64,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub task: Task,
    pub method: Method,
    pub model: ModelRef,
    pub shape: Vec<usize>,
    /// Test-set size for toy tasks; item count for dataset tasks.
    pub count: usize,
    pub measurements: usize,
    pub factor: usize,
    pub erase_prob: f64,
    pub accel: f64,
    pub acs_lines: usize,
    /// Erasure probability of the frozen inpainting train operator.
    pub train_erase_prob: f64,
    /// Acceleration of the frozen MRI train operator.
    pub train_accel: f64,
    pub dataset: Option<PathBuf>,
    pub steps: usize,
    pub guidance: Guidance,
    pub stochastic: bool,
    pub seed: u64,
    pub schedule: NoiseSchedule,
    pub prior: ToyPrior,
    pub fista_lambda: f64,
    pub fista_iters: usize,
    pub sweep_axis: Option<SweepAxis>,
    pub sweep_values: Vec<f64>,
    hash: u64,
}

fn parse_guidance(text: &str) -> Result<Guidance> {
    if text == "normalized" {
        return Ok(Guidance::Normalized);
    }
    if let Some(v) = text.strip_prefix("const:") {
        let gamma: f64 = v
            .parse()
            .map_err(|_| Error::Config(format!("bad gamma `{v}`")))?;
        return Ok(Guidance::Constant(gamma));
    }
    Err(Error::Config(format!(
        "guidance must be `normalized` or `const:<value>`, got `{text}`"
    )))
}

impl ExperimentConfig {
    pub fn from_kv(kv: &KvMap) -> Result<Self> {
        let task = Task::from_name(kv.get("task")?)?;
        let method = Method::from_name(kv.get("method")?)?;
        let model = match kv.get_or("model", "gm") {
            "gm" => ModelRef::AnalyticGm,
            "gm-ambient" => ModelRef::AnalyticGmAmbient,
            path => ModelRef::Checkpoint(PathBuf::from(path)),
        };
        let shape = parse_shape(kv.get_or("shape", "8"))?;
        let schedule = NoiseSchedule::new(
            kv.get_f64_or("sigma_min", 0.002)?,
            kv.get_f64_or("sigma_max", 20.0)?,
            SpacingRule::Rho(kv.get_f64_or("rho", 7.0)?),
        )?;
        let guidance = parse_guidance(kv.get_or("gamma", "const:1.0"))?;
        let cfg = ExperimentConfig {
            task,
            method,
            model,
            shape,
            count: kv.get_usize_or("count", 16)?,
            measurements: kv.get_usize_or("m", 4)?,
            factor: kv.get_usize_or("factor", 2)?,
            erase_prob: kv.get_f64_or("p", 0.5)?,
            accel: kv.get_f64_or("r", 2.0)?,
            acs_lines: kv.get_usize_or("acs_lines", 2)?,
            train_erase_prob: kv.get_f64_or("train_p", 0.8)?,
            train_accel: kv.get_f64_or("train_r", 2.0)?,
            dataset: if kv.contains("dataset") {
                Some(PathBuf::from(kv.get("dataset")?))
            } else {
                None
            },
            steps: kv.get_usize_or("steps", 100)?,
            guidance,
            stochastic: kv.get_bool_or("stochastic", true)?,
            seed: kv.get_u64_or("seed", 0)?,
            schedule,
            prior: ToyPrior {
                components: kv.get_usize_or("prior_components", 2)?,
                tau_sq: kv.get_f64_or("prior_tau_sq", 0.25)?,
                mean_scale: kv.get_f64_or("prior_mean_scale", 1.0)?,
                seed: kv.get_u64_or("prior_seed", 7)?,
            },
            fista_lambda: kv.get_f64_or("lambda", 1e-3)?,
            fista_iters: kv.get_usize_or("iters", 100)?,
            sweep_axis: if kv.contains("sweep_axis") {
                Some(SweepAxis::from_name(kv.get("sweep_axis")?)?)
            } else {
                None
            },
            sweep_values: if kv.contains("sweep_values") {
                kv.get_f64_list("sweep_values")?
            } else {
                Vec::new()
            },
            hash: kv.hash(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KvMap::load(path)?)
    }

    fn validate(&self) -> Result<()> {
        if self.count == 0 {
            return Err(Error::Config("empty test set (count = 0)".into()));
        }
        // every referenced file must exist at load time
        if let ModelRef::Checkpoint(base) = &self.model {
            for ext in ["ambt", "kv"] {
                let p = base.with_extension(ext);
                if !p.exists() {
                    return Err(Error::Config(format!(
                        "referenced checkpoint file missing: {}",
                        p.display()
                    )));
                }
            }
        }
        if let Some(dir) = &self.dataset {
            if !dir.join("manifest.kv").exists() {
                return Err(Error::Config(format!(
                    "dataset manifest missing: {}",
                    dir.join("manifest.kv").display()
                )));
            }
        }
        if self.task == Task::Mri && self.dataset.is_none() {
            return Err(Error::Config("mri task requires a dataset directory".into()));
        }
        if self.method == Method::Dps || self.method == Method::Adps {
            if let Guidance::Constant(g) = self.guidance {
                // validated through the sampler-config constructor
                SamplerConfig::new(self.steps.max(2), Guidance::Constant(g), self.seed)?;
            }
        }
        Ok(())
    }

    pub fn hash(&self) -> u64 {
        self.hash
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_text() -> String {
        "task = cs\nmethod = dps\nmodel = gm\nshape = 8\ncount = 4\nm = 4\n".to_string()
    }

    #[test]
    fn parses_and_hashes() {
        let kv = KvMap::parse(&base_text()).unwrap();
        let cfg = ExperimentConfig::from_kv(&kv).unwrap();
        assert_eq!(cfg.task, Task::CompressedSensing);
        assert_eq!(cfg.shape, vec![8]);
        assert_eq!(cfg.hash(), kv.hash());
    }

    #[test]
    fn missing_checkpoint_rejected() {
        let text = base_text().replace("model = gm", "model = /nonexistent/model");
        let kv = KvMap::parse(&text).unwrap();
        assert!(ExperimentConfig::from_kv(&kv).is_err());
    }

    #[test]
    fn zero_count_rejected() {
        let text = base_text().replace("count = 4", "count = 0");
        let kv = KvMap::parse(&text).unwrap();
        assert!(ExperimentConfig::from_kv(&kv).is_err());
    }

    #[test]
    fn guidance_forms() {
        assert!(matches!(parse_guidance("normalized"), Ok(Guidance::Normalized)));
        assert!(matches!(
            parse_guidance("const:2.5"),
            Ok(Guidance::Constant(g)) if g == 2.5
        ));
        assert!(parse_guidance("garbage").is_err());
    }

    #[test]
    fn out_of_range_gamma_rejected_for_samplers() {
        let text = base_text() + "gamma = const:99\n";
        let kv = KvMap::parse(&text).unwrap();
        assert!(ExperimentConfig::from_kv(&kv).is_err());
    }

    #[test]
    fn mri_without_dataset_rejected() {
        let text = base_text().replace("task = cs", "task = mri");
        let kv = KvMap::parse(&text).unwrap();
        assert!(ExperimentConfig::from_kv(&kv).is_err());
    }
}
