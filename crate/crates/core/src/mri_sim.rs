//! Synthetic multi-coil MRI data and the preprocessing pipeline.
//!
//! Phantoms are random complex ellipse stacks with a smooth phase ramp.
//! Acquisition is noiseless: z_i = P F S_i x per coil. Normalization
//! divides every coil's k-space by the 99th percentile of the
//! root-sum-of-squares reconstruction of the central 24×24
//! autocalibration block, matching the usual preprocessing convention.

use std::path::{Path, PathBuf};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::{load_tensor, save_tensor, KvMap};
use crate::numerics::fft::{kspace_adj, kspace_fwd};
use crate::numerics::rng::Rng;
use crate::numerics::tensor::Tensor;
use crate::operators::{make_coil_maps, make_kspace_mask, CoilMaps, MaskSpec};

/// Autocalibration block edge used by normalization.
pub const ACS_NORM_BLOCK: usize = 24;

#[derive(Debug, Clone)]
pub struct Phantom {
    pub image: Tensor<Complex64>,
    pub seed: u64,
    pub n_ellipses: usize,
}

/// Deterministic random-ellipse phantom with magnitude in [0, 1.5].
pub fn make_phantom(shape: &[usize], seed: u64) -> Result<Phantom> {
    if shape.len() != 2 {
        return Err(Error::invalid(format!("phantom shape must be 2-D, got {shape:?}")));
    }
    let (h, w) = (shape[0], shape[1]);
    let mut rng = Rng::new(seed);
    let n_ellipses = 4 + rng.below(6);
    struct Ellipse {
        cy: f64,
        cx: f64,
        ry: f64,
        rx: f64,
        cos_t: f64,
        sin_t: f64,
        amp: f64,
    }
    let ellipses: Vec<Ellipse> = (0..n_ellipses)
        .map(|_| {
            let theta = rng.uniform_range(0.0, std::f64::consts::PI);
            Ellipse {
                cy: rng.uniform_range(0.2, 0.8),
                cx: rng.uniform_range(0.2, 0.8),
                ry: rng.uniform_range(0.08, 0.35),
                rx: rng.uniform_range(0.08, 0.35),
                cos_t: theta.cos(),
                sin_t: theta.sin(),
                amp: rng.uniform_range(0.15, 0.5),
            }
        })
        .collect();
    let phase_slope = (rng.uniform_range(-1.0, 1.0), rng.uniform_range(-1.0, 1.0));
    let image = Tensor::from_fn(shape, |flat| {
        let y = (flat / w) as f64 / (h.max(2) - 1) as f64;
        let x = (flat % w) as f64 / (w.max(2) - 1) as f64;
        let mut mag = 0.0;
        for e in &ellipses {
            let dy = y - e.cy;
            let dx = x - e.cx;
            let u = (dx * e.cos_t + dy * e.sin_t) / e.rx;
            let v = (-dx * e.sin_t + dy * e.cos_t) / e.ry;
            if u * u + v * v <= 1.0 {
                mag += e.amp;
            }
        }
        mag = mag.min(1.5);
        let phase = std::f64::consts::PI * (phase_slope.0 * y + phase_slope.1 * x);
        Complex64::from_polar(mag, phase)
    });
    Ok(Phantom {
        image,
        seed,
        n_ellipses,
    })
}

/// Per-coil noiseless measurements z_i = P F S_i x with their mask and
/// coil profiles.
#[derive(Debug, Clone)]
pub struct KspaceData {
    pub coils: CoilMaps,
    pub mask: MaskSpec,
    pub data: Vec<Tensor<Complex64>>,
}

pub fn acquire(image: &Tensor<Complex64>, coils: &CoilMaps, mask: &MaskSpec) -> Result<KspaceData> {
    if image.shape() != coils.shape.as_slice() || image.shape() != mask.shape.as_slice() {
        return Err(Error::ShapeMismatch {
            expected: image.shape().to_vec(),
            got: coils.shape.clone(),
        });
    }
    let dense = mask.dense().to_c128();
    let data = coils
        .maps
        .iter()
        .map(|s| kspace_fwd(&image.mul_elem(s)?)?.mul_elem(&dense))
        .collect::<Result<Vec<_>>>()?;
    Ok(KspaceData {
        coils: coils.clone(),
        mask: mask.clone(),
        data,
    })
}

impl KspaceData {
    pub fn shape(&self) -> &[usize] {
        &self.mask.shape
    }

    /// Crude image estimate Σᵢ Sᵢᴴ F⁻¹ z_i (the adjoint aggregate).
    pub fn adjoint_aggregate(&self) -> Result<Tensor<Complex64>> {
        let mut acc = Tensor::zeros(self.shape());
        for (s, z) in self.coils.maps.iter().zip(&self.data) {
            acc = acc.add(&kspace_adj(z)?.mul_elem(&s.conj())?)?;
        }
        Ok(acc)
    }

    /// Same aggregate after masking each coil with a further mask.
    pub fn masked_adjoint_aggregate(&self, mask: &MaskSpec) -> Result<Tensor<Complex64>> {
        let dense = mask.dense().to_c128();
        let mut acc = Tensor::zeros(self.shape());
        for (s, z) in self.coils.maps.iter().zip(&self.data) {
            acc = acc.add(&kspace_adj(&z.mul_elem(&dense)?)?.mul_elem(&s.conj())?)?;
        }
        Ok(acc)
    }

    /// Root-sum-of-squares of the zero-filled reconstruction from the
    /// central autocalibration block.
    fn acs_rss(&self) -> Result<Tensor<f64>> {
        let shape = self.shape();
        let block: Vec<usize> = shape.iter().map(|&d| d.min(ACS_NORM_BLOCK)).collect();
        let mut rss = Tensor::<f64>::zeros(shape);
        for z in &self.data {
            let padded = keep_center_block(z, &block);
            let img = kspace_adj(&padded)?;
            for (acc, v) in rss.data_mut().iter_mut().zip(img.data()) {
                *acc += v.norm_sqr();
            }
        }
        Ok(rss.map(|v| v.sqrt()))
    }

    /// Divide all coil data by the 99th percentile of the ACS RSS
    /// image; returns the scale that was divided out.
    pub fn normalize(&mut self) -> Result<f64> {
        let rss = self.acs_rss()?;
        let scale = percentile(rss.data(), 0.99);
        if scale <= 0.0 {
            return Err(Error::Numerical("zero ACS energy; cannot normalize".into()));
        }
        for z in self.data.iter_mut() {
            *z = z.scale(1.0 / scale);
        }
        Ok(scale)
    }

    /// Scanner-noise pre-whitening hook. Synthetic data is noiseless,
    /// so the transform is the identity; the call-site shape of the
    /// pipeline stays faithful.
    pub fn prewhiten(&mut self) -> Result<()> {
        Ok(())
    }
}

/// Zero everything outside the centered block of the given size.
fn keep_center_block(src: &Tensor<Complex64>, block: &[usize]) -> Tensor<Complex64> {
    let shape = src.shape().to_vec();
    let starts: Vec<usize> = shape.iter().zip(block).map(|(&s, &b)| (s - b) / 2).collect();
    Tensor::from_fn(&shape, |flat| {
        let mut rem = flat;
        let mut inside = true;
        for d in (0..shape.len()).rev() {
            let idx = rem % shape[d];
            rem /= shape[d];
            if idx < starts[d] || idx >= starts[d] + block[d] {
                inside = false;
            }
        }
        if inside {
            src.data()[flat]
        } else {
            Complex64::new(0.0, 0.0)
        }
    })
}

/// Linear-interpolation percentile of a value set, q in [0, 1].
pub fn percentile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Generation parameters for a synthetic dataset.
#[derive(Debug, Clone)]
pub struct DatasetParams {
    pub shape: Vec<usize>,
    pub n_coils: usize,
    pub accel: f64,
    pub acs_lines: usize,
    pub smoothness: f64,
    pub normalize: bool,
}

/// Write `count` phantoms with coil maps and masks plus a manifest.
/// Fully determined by `master_seed`.
pub fn generate_dataset(
    dir: impl AsRef<Path>,
    count: usize,
    params: &DatasetParams,
    master_seed: u64,
) -> Result<KvMap> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut manifest = KvMap::new();
    manifest.set("count", count);
    manifest.set("shape", crate::operators::join_usize(&params.shape));
    manifest.set("n_coils", params.n_coils);
    manifest.set("r", params.accel);
    manifest.set("acs_lines", params.acs_lines);
    manifest.set("smoothness", params.smoothness);
    manifest.set("normalize", params.normalize);
    manifest.set("master_seed", master_seed);
    for idx in 0..count {
        let item_seed = Rng::derive(master_seed, idx as u64).next_u64();
        let phantom = make_phantom(&params.shape, item_seed)?;
        let coils = make_coil_maps(&params.shape, params.n_coils, params.smoothness, item_seed ^ 1)?;
        let mask = make_kspace_mask(&params.shape, params.accel, params.acs_lines, item_seed ^ 2)?;
        let mut kspace = acquire(&phantom.image, &coils, &mask)?;
        kspace.prewhiten()?;
        if params.normalize {
            kspace.normalize()?;
        }
        save_tensor(dir.join(format!("phantom_{idx:06}.ambt")), &phantom.image)?;
        coils.save(dir.join(format!("coils_{idx:06}")))?;
        mask.save(dir.join(format!("mask_{idx:06}")))?;
        let stacked = stack_kspace(&kspace);
        save_tensor(dir.join(format!("kspace_{idx:06}.ambt")), &stacked)?;
        manifest.set(&format!("seed_{idx:06}"), item_seed);
    }
    let hash = manifest.hash();
    manifest.set("config_hash", format!("{hash:016x}"));
    manifest.save(dir.join("manifest.kv"))?;
    Ok(manifest)
}

fn stack_kspace(k: &KspaceData) -> Tensor<Complex64> {
    let per: usize = k.shape().iter().product();
    let mut shape = vec![k.data.len()];
    shape.extend_from_slice(k.shape());
    Tensor::from_fn(&shape, |flat| k.data[flat / per].data()[flat % per])
}

/// One dataset item loaded back from disk.
pub struct DatasetItem {
    pub index: usize,
    pub phantom: Tensor<Complex64>,
    pub kspace: KspaceData,
}

pub fn load_dataset_item(dir: impl AsRef<Path>, index: usize) -> Result<DatasetItem> {
    let dir = dir.as_ref();
    let phantom: Tensor<Complex64> = load_tensor(dir.join(format!("phantom_{index:06}.ambt")))?;
    let coils = CoilMaps::load(dir.join(format!("coils_{index:06}")))?;
    let mask = MaskSpec::load(dir.join(format!("mask_{index:06}")))?;
    let stacked: Tensor<Complex64> = load_tensor(dir.join(format!("kspace_{index:06}.ambt")))?;
    let per: usize = mask.shape.iter().product();
    let data = (0..coils.n_coils())
        .map(|c| Tensor::new(mask.shape.clone(), stacked.data()[c * per..(c + 1) * per].to_vec()).unwrap())
        .collect();
    Ok(DatasetItem {
        index,
        phantom,
        kspace: KspaceData { coils, mask, data },
    })
}

pub fn dataset_paths(dir: impl AsRef<Path>, index: usize) -> Vec<PathBuf> {
    let dir = dir.as_ref();
    vec![
        dir.join(format!("phantom_{index:06}.ambt")),
        dir.join(format!("coils_{index:06}.ambt")),
        dir.join(format!("mask_{index:06}.ambt")),
        dir.join(format!("kspace_{index:06}.ambt")),
    ]
}
