//! Linear corruption operators with exact adjoints.
//!
//! Everything the training and inference pipelines measure through is
//! one of these: pixel inpainting, seeded Gaussian compressed sensing,
//! block-average downsampling, the per-coil MRI forward map
//! `z_i = P F S_i x`, and its adjoint-aggregated square composite
//! `Σᵢ Sᵢᴴ F⁻¹ P F Sᵢ`. Operators act on complex tensors; real
//! problems ride the complex carrier with zero imaginary part.

use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::KvMap;
use crate::numerics::fft::{kspace_adj, kspace_fwd};
use crate::numerics::rng::Rng;
use crate::numerics::tensor::{SignalKind, Tensor};

use super::coils::CoilMaps;
use super::mask::{join_usize, parse_shape, MaskKind, MaskSpec};

/// Dense Gaussian matrices are cached below this entry count and
/// regenerated row-by-row from the seed above it.
const GAUSSIAN_CACHE_LIMIT: usize = 4_000_000;

#[derive(Debug, Clone)]
pub enum LinearOp {
    Identity {
        shape: Vec<usize>,
    },
    /// Diagonal 0/1 projection by a realized mask.
    Inpaint {
        mask: MaskSpec,
    },
    /// m×n i.i.d. N(0, 1/m) projection of the flattened input.
    GaussianCs {
        input_shape: Vec<usize>,
        measurements: usize,
        seed: u64,
        matrix: Option<Vec<f64>>,
    },
    /// Block-average pooling by `factor` along every axis.
    Downsample {
        shape: Vec<usize>,
        factor: usize,
    },
    /// Σᵢ Sᵢᴴ F⁻¹ P F Sᵢ — square, Hermitian, spectrum in [0, 1].
    MriAdjointAggregate {
        mask: MaskSpec,
        coils: CoilMaps,
    },
    /// Per-coil forward map x ↦ [P F Sᵢ x]ᵢ stacked on a leading axis.
    MriForward {
        mask: MaskSpec,
        coils: CoilMaps,
    },
    /// outer ∘ inner.
    Compose {
        inner: Box<LinearOp>,
        outer: Box<LinearOp>,
    },
}

pub fn inpaint_operator(mask: MaskSpec) -> LinearOp {
    LinearOp::Inpaint { mask }
}

pub fn gaussian_cs_operator(input_shape: &[usize], measurements: usize, seed: u64) -> Result<LinearOp> {
    if measurements == 0 {
        return Err(Error::invalid("measurement count must be >= 1"));
    }
    let n: usize = input_shape.iter().product();
    let matrix = if measurements * n <= GAUSSIAN_CACHE_LIMIT {
        let mut mat = Vec::with_capacity(measurements * n);
        for row in 0..measurements {
            gaussian_row(seed, row, n, measurements, &mut mat);
        }
        Some(mat)
    } else {
        None
    };
    Ok(LinearOp::GaussianCs {
        input_shape: input_shape.to_vec(),
        measurements,
        seed,
        matrix,
    })
}

/// Row `row` of the measurement matrix, appended to `out`.
fn gaussian_row(seed: u64, row: usize, n: usize, m: usize, out: &mut Vec<f64>) {
    let mut rng = Rng::derive(seed, row as u64);
    let scale = 1.0 / (m as f64).sqrt();
    out.extend((0..n).map(|_| rng.normal() * scale));
}

pub fn downsample_operator(shape: &[usize], factor: usize) -> Result<LinearOp> {
    if factor == 0 {
        return Err(Error::invalid("downsample factor must be >= 1"));
    }
    for &d in shape {
        if d % factor != 0 {
            return Err(Error::NotDivisible { dim: d, divisor: factor });
        }
    }
    Ok(LinearOp::Downsample {
        shape: shape.to_vec(),
        factor,
    })
}

/// The adjoint-aggregated multi-coil operator Σᵢ Sᵢᴴ F⁻¹ P F Sᵢ.
pub fn mri_operator(mask: MaskSpec, coils: CoilMaps) -> Result<LinearOp> {
    check_mri_parts(&mask, &coils)?;
    Ok(LinearOp::MriAdjointAggregate { mask, coils })
}

/// The stacked per-coil measurement map x ↦ [P F Sᵢ x]ᵢ.
pub fn mri_forward_operator(mask: MaskSpec, coils: CoilMaps) -> Result<LinearOp> {
    check_mri_parts(&mask, &coils)?;
    Ok(LinearOp::MriForward { mask, coils })
}

fn check_mri_parts(mask: &MaskSpec, coils: &CoilMaps) -> Result<()> {
    if !matches!(mask.kind, MaskKind::KspaceLines { .. }) {
        return Err(Error::MaskKind(
            "MRI operators require a k-space line mask, not a pixel mask".into(),
        ));
    }
    if mask.shape != coils.shape {
        return Err(Error::ShapeMismatch {
            expected: mask.shape.clone(),
            got: coils.shape.clone(),
        });
    }
    for &d in &mask.shape {
        if !d.is_power_of_two() {
            return Err(Error::FftLength { len: d });
        }
    }
    Ok(())
}

pub fn compose(inner: LinearOp, outer: LinearOp) -> Result<LinearOp> {
    if inner.output_shape() != outer.input_shape() {
        return Err(Error::ShapeMismatch {
            expected: outer.input_shape().to_vec(),
            got: inner.output_shape(),
        });
    }
    Ok(LinearOp::Compose {
        inner: Box::new(inner),
        outer: Box::new(outer),
    })
}

impl LinearOp {
    pub fn input_shape(&self) -> &[usize] {
        match self {
            LinearOp::Identity { shape } => shape,
            LinearOp::Inpaint { mask } => &mask.shape,
            LinearOp::GaussianCs { input_shape, .. } => input_shape,
            LinearOp::Downsample { shape, .. } => shape,
            LinearOp::MriAdjointAggregate { mask, .. } => &mask.shape,
            LinearOp::MriForward { mask, .. } => &mask.shape,
            LinearOp::Compose { inner, .. } => inner.input_shape(),
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        match self {
            LinearOp::Identity { shape } => shape.clone(),
            LinearOp::Inpaint { mask } => mask.shape.clone(),
            LinearOp::GaussianCs { measurements, .. } => vec![*measurements],
            LinearOp::Downsample { shape, factor } => {
                shape.iter().map(|&d| d / factor).collect()
            }
            LinearOp::MriAdjointAggregate { mask, .. } => mask.shape.clone(),
            LinearOp::MriForward { mask, coils } => {
                let mut s = vec![coils.n_coils()];
                s.extend_from_slice(&mask.shape);
                s
            }
            LinearOp::Compose { outer, .. } => outer.output_shape(),
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            LinearOp::Identity { .. } => "identity",
            LinearOp::Inpaint { .. } => "inpaint",
            LinearOp::GaussianCs { .. } => "gaussian_cs",
            LinearOp::Downsample { .. } => "downsample",
            LinearOp::MriAdjointAggregate { .. } => "mri_adjoint_aggregate",
            LinearOp::MriForward { .. } => "mri_forward",
            LinearOp::Compose { .. } => "composite",
        }
    }

    pub fn is_identity(&self) -> bool {
        match self {
            LinearOp::Identity { .. } => true,
            LinearOp::Inpaint { mask } => mask.keep.iter().all(|&k| k),
            _ => false,
        }
    }

    fn check_input(&self, x: &Tensor<Complex64>) -> Result<()> {
        if x.shape() != self.input_shape() {
            return Err(Error::ShapeMismatch {
                expected: self.input_shape().to_vec(),
                got: x.shape().to_vec(),
            });
        }
        Ok(())
    }

    fn check_output(&self, y: &Tensor<Complex64>) -> Result<()> {
        if y.shape() != self.output_shape().as_slice() {
            return Err(Error::ShapeMismatch {
                expected: self.output_shape(),
                got: y.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn apply(&self, x: &Tensor<Complex64>) -> Result<Tensor<Complex64>> {
        self.check_input(x)?;
        match self {
            LinearOp::Identity { .. } => Ok(x.clone()),
            LinearOp::Inpaint { mask } => apply_mask(x, mask),
            LinearOp::GaussianCs {
                measurements,
                seed,
                matrix,
                ..
            } => {
                let n = x.len();
                let m = *measurements;
                let mut out = vec![Complex64::new(0.0, 0.0); m];
                let mut row_buf = Vec::new();
                for (j, slot) in out.iter_mut().enumerate() {
                    let row = matrix_row(matrix, *seed, j, n, m, &mut row_buf);
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (k, &w) in row.iter().enumerate() {
                        acc += x.data()[k] * w;
                    }
                    *slot = acc;
                }
                Tensor::new(vec![m], out)
            }
            LinearOp::Downsample { shape, factor } => Ok(downsample(x, shape, *factor)),
            LinearOp::MriAdjointAggregate { mask, coils } => {
                let mut acc = Tensor::zeros(x.shape());
                for s in &coils.maps {
                    let coil_img = x.mul_elem(s)?;
                    let masked = apply_mask(&kspace_fwd(&coil_img)?, mask)?;
                    let back = kspace_adj(&masked)?;
                    acc = acc.add(&back.mul_elem(&s.conj())?)?;
                }
                Ok(acc)
            }
            LinearOp::MriForward { mask, coils } => {
                let per: usize = mask.shape.iter().product();
                let mut data = Vec::with_capacity(coils.n_coils() * per);
                for s in &coils.maps {
                    let z = apply_mask(&kspace_fwd(&x.mul_elem(s)?)?, mask)?;
                    data.extend_from_slice(z.data());
                }
                Tensor::new(self.output_shape(), data)
            }
            LinearOp::Compose { inner, outer } => outer.apply(&inner.apply(x)?),
        }
    }

    pub fn adjoint(&self, y: &Tensor<Complex64>) -> Result<Tensor<Complex64>> {
        self.check_output(y)?;
        match self {
            LinearOp::Identity { .. } => Ok(y.clone()),
            LinearOp::Inpaint { mask } => apply_mask(y, mask),
            LinearOp::GaussianCs {
                input_shape,
                measurements,
                seed,
                matrix,
            } => {
                let n: usize = input_shape.iter().product();
                let m = *measurements;
                let mut out = vec![Complex64::new(0.0, 0.0); n];
                let mut row_buf = Vec::new();
                for j in 0..m {
                    let row = matrix_row(matrix, *seed, j, n, m, &mut row_buf);
                    let yj = y.data()[j];
                    for (k, &w) in row.iter().enumerate() {
                        out[k] += yj * w;
                    }
                }
                Tensor::new(input_shape.clone(), out)
            }
            LinearOp::Downsample { shape, factor } => Ok(upsample_adjoint(y, shape, *factor)),
            // Hermitian
            LinearOp::MriAdjointAggregate { .. } => self.apply(y),
            LinearOp::MriForward { mask, coils } => {
                let per: usize = mask.shape.iter().product();
                let mut acc = Tensor::zeros(&mask.shape);
                for (i, s) in coils.maps.iter().enumerate() {
                    let z = Tensor::new(
                        mask.shape.clone(),
                        y.data()[i * per..(i + 1) * per].to_vec(),
                    )?;
                    let img = kspace_adj(&apply_mask(&z, mask)?)?;
                    acc = acc.add(&img.mul_elem(&s.conj())?)?;
                }
                Ok(acc)
            }
            LinearOp::Compose { inner, outer } => inner.adjoint(&outer.adjoint(y)?),
        }
    }

    /// Dense matrix form, column by column. Meant for the small spaces
    /// the oracles work in.
    pub fn to_matrix(&self) -> Result<Tensor<Complex64>> {
        let in_len: usize = self.input_shape().iter().product();
        let out_len: usize = self.output_shape().iter().product();
        let mut data = vec![Complex64::new(0.0, 0.0); out_len * in_len];
        let mut basis = Tensor::zeros(self.input_shape());
        for j in 0..in_len {
            basis.data_mut()[j] = Complex64::new(1.0, 0.0);
            let col = self.apply(&basis)?;
            for (i, &v) in col.data().iter().enumerate() {
                data[i * in_len + j] = v;
            }
            basis.data_mut()[j] = Complex64::new(0.0, 0.0);
        }
        Tensor::new(vec![out_len, in_len], data)
    }
}

impl LinearOp {
    /// Serialize as a key-value sidecar plus AMBT files for realized
    /// masks and coil maps. Composites are rebuilt from their parts and
    /// are not serializable.
    pub fn save(&self, base: impl AsRef<Path>) -> Result<()> {
        let base = base.as_ref();
        let mut kv = KvMap::new();
        kv.set("kind", self.kind_name());
        match self {
            LinearOp::Identity { shape } => {
                kv.set("shape", join_usize(shape));
            }
            LinearOp::Inpaint { mask } => {
                mask.save(sub_base(base, "mask"))?;
            }
            LinearOp::GaussianCs {
                input_shape,
                measurements,
                seed,
                ..
            } => {
                kv.set("shape", join_usize(input_shape));
                kv.set("m", *measurements);
                kv.set("seed", *seed);
            }
            LinearOp::Downsample { shape, factor } => {
                kv.set("shape", join_usize(shape));
                kv.set("factor", *factor);
            }
            LinearOp::MriAdjointAggregate { mask, coils }
            | LinearOp::MriForward { mask, coils } => {
                mask.save(sub_base(base, "mask"))?;
                coils.save(sub_base(base, "coils"))?;
            }
            LinearOp::Compose { .. } => {
                return Err(Error::invalid("composite operators are not serializable"));
            }
        }
        kv.save(base.with_extension("kv"))
    }

    pub fn load(base: impl AsRef<Path>) -> Result<LinearOp> {
        let base = base.as_ref();
        let kv = KvMap::load(base.with_extension("kv"))?;
        match kv.get("kind")? {
            "identity" => Ok(LinearOp::Identity {
                shape: parse_shape(kv.get("shape")?)?,
            }),
            "inpaint" => Ok(LinearOp::Inpaint {
                mask: MaskSpec::load(sub_base(base, "mask"))?,
            }),
            "gaussian_cs" => gaussian_cs_operator(
                &parse_shape(kv.get("shape")?)?,
                kv.get_usize("m")?,
                kv.get_u64("seed")?,
            ),
            "downsample" => {
                downsample_operator(&parse_shape(kv.get("shape")?)?, kv.get_usize("factor")?)
            }
            "mri_adjoint_aggregate" => mri_operator(
                MaskSpec::load(sub_base(base, "mask"))?,
                CoilMaps::load(sub_base(base, "coils"))?,
            ),
            "mri_forward" => mri_forward_operator(
                MaskSpec::load(sub_base(base, "mask"))?,
                CoilMaps::load(sub_base(base, "coils"))?,
            ),
            other => Err(Error::Config(format!("unknown operator kind `{other}`"))),
        }
    }
}

/// Sibling path `<base>_<suffix>` for an operator's auxiliary files.
fn sub_base(base: &Path, suffix: &str) -> std::path::PathBuf {
    let mut name = base.file_name().unwrap_or_default().to_os_string();
    name.push("_");
    name.push(suffix);
    base.with_file_name(name)
}

fn matrix_row<'a>(
    matrix: &'a Option<Vec<f64>>,
    seed: u64,
    row: usize,
    n: usize,
    m: usize,
    buf: &'a mut Vec<f64>,
) -> &'a [f64] {
    match matrix {
        Some(mat) => &mat[row * n..(row + 1) * n],
        None => {
            buf.clear();
            gaussian_row(seed, row, n, m, buf);
            buf
        }
    }
}

fn apply_mask(x: &Tensor<Complex64>, mask: &MaskSpec) -> Result<Tensor<Complex64>> {
    if x.shape() != mask.shape.as_slice() {
        return Err(Error::ShapeMismatch {
            expected: mask.shape.clone(),
            got: x.shape().to_vec(),
        });
    }
    match mask.kind {
        MaskKind::Pixel { .. } => Ok(Tensor::from_fn(x.shape(), |i| {
            if mask.keep[i] {
                x.data()[i]
            } else {
                Complex64::new(0.0, 0.0)
            }
        })),
        MaskKind::KspaceLines { .. } => {
            let lines = mask.n_lines();
            Ok(Tensor::from_fn(x.shape(), |i| {
                if mask.keep[i % lines] {
                    x.data()[i]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }))
        }
    }
}

fn downsample(x: &Tensor<Complex64>, shape: &[usize], factor: usize) -> Tensor<Complex64> {
    let out_shape: Vec<usize> = shape.iter().map(|&d| d / factor).collect();
    let block = (factor as f64).powi(shape.len() as i32);
    let in_strides = strides_of(shape);
    let out = Tensor::from_fn(&out_shape, |flat| {
        let coords = unravel(flat, &out_shape);
        let mut acc = Complex64::new(0.0, 0.0);
        let block_elems = factor.pow(shape.len() as u32);
        for b in 0..block_elems {
            let mut rem = b;
            let mut off = 0;
            for d in (0..shape.len()).rev() {
                let k = rem % factor;
                rem /= factor;
                off += (coords[d] * factor + k) * in_strides[d];
            }
            acc += x.data()[off];
        }
        acc / block
    });
    out
}

fn upsample_adjoint(y: &Tensor<Complex64>, shape: &[usize], factor: usize) -> Tensor<Complex64> {
    let out_shape: Vec<usize> = shape.iter().map(|&d| d / factor).collect();
    let block = (factor as f64).powi(shape.len() as i32);
    let out_strides = strides_of(&out_shape);
    Tensor::from_fn(shape, |flat| {
        let coords = unravel(flat, shape);
        let mut off = 0;
        for d in 0..shape.len() {
            off += (coords[d] / factor) * out_strides[d];
        }
        y.data()[off] / block
    })
}

fn strides_of(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

fn unravel(mut flat: usize, shape: &[usize]) -> Vec<usize> {
    let mut coords = vec![0usize; shape.len()];
    for d in (0..shape.len()).rev() {
        coords[d] = flat % shape[d];
        flat /= shape[d];
    }
    coords
}

/// Max over random pairs of |⟨Ax, y⟩ − ⟨x, Aᴴy⟩| / (‖Ax‖‖y‖).
pub fn adjoint_check(op: &LinearOp, trials: usize, seed: u64) -> Result<f64> {
    let mut rng = Rng::new(seed);
    let out_shape = op.output_shape();
    let mut worst = 0.0f64;
    for _ in 0..trials.max(1) {
        let x = Tensor::<Complex64>::noise(op.input_shape(), &mut rng);
        let y = Tensor::<Complex64>::noise(&out_shape, &mut rng);
        let ax = op.apply(&x)?;
        let aty = op.adjoint(&y)?;
        let lhs = ax.inner(&y)?;
        let rhs = x.inner(&aty)?;
        let denom = ax.norm() * y.norm();
        let dev = (lhs - rhs).norm();
        let rel = if denom > 0.0 { dev / denom } else if dev > 0.0 { f64::INFINITY } else { 0.0 };
        worst = worst.max(rel);
    }
    Ok(worst)
}

/// Real-matrix view of an operator in a given signal kind.
///
/// For real signals this is the m×n matrix of real parts; for complex
/// signals the 2m×2n block structure [[Re, −Im], [Im, Re]] acting on
/// stacked `[re..., im...]` views. Intended for the small instances
/// analytic conditioning and the enumeration oracles work on.
#[derive(Debug, Clone)]
pub struct RealViewOp {
    pub rows: usize,
    pub cols: usize,
    /// Row-major rows×cols.
    pub mat: Vec<f64>,
}

impl RealViewOp {
    pub fn from_op(op: &LinearOp, kind: SignalKind) -> Result<RealViewOp> {
        let n: usize = op.input_shape().iter().product();
        let m: usize = op.output_shape().iter().product();
        let (rows, cols) = match kind {
            SignalKind::Real => (m, n),
            SignalKind::Complex => (2 * m, 2 * n),
        };
        let mut mat = vec![0.0f64; rows * cols];
        let mut basis = Tensor::zeros(op.input_shape());
        for j in 0..n {
            basis.data_mut()[j] = Complex64::new(1.0, 0.0);
            let col = op.apply(&basis)?;
            basis.data_mut()[j] = Complex64::new(0.0, 0.0);
            match kind {
                SignalKind::Real => {
                    for (i, v) in col.data().iter().enumerate() {
                        mat[i * cols + j] = v.re;
                    }
                }
                SignalKind::Complex => {
                    for (i, v) in col.data().iter().enumerate() {
                        mat[i * cols + j] = v.re;
                        mat[(m + i) * cols + j] = v.im;
                        mat[i * cols + (n + j)] = -v.im;
                        mat[(m + i) * cols + (n + j)] = v.re;
                    }
                }
            }
        }
        Ok(RealViewOp { rows, cols, mat })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.cols);
        let mut out = vec![0.0; self.rows];
        for i in 0..self.rows {
            let row = &self.mat[i * self.cols..(i + 1) * self.cols];
            out[i] = row.iter().zip(x).map(|(&a, &b)| a * b).sum();
        }
        out
    }

    pub fn rmatvec(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.rows);
        let mut out = vec![0.0; self.cols];
        for i in 0..self.rows {
            let row = &self.mat[i * self.cols..(i + 1) * self.cols];
            let yi = y[i];
            for (k, &a) in row.iter().enumerate() {
                out[k] += a * yi;
            }
        }
        out
    }

    /// Gram matrix M Mᵀ (rows×rows).
    pub fn gram(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.rows * self.rows];
        for i in 0..self.rows {
            for j in i..self.rows {
                let a = &self.mat[i * self.cols..(i + 1) * self.cols];
                let b = &self.mat[j * self.cols..(j + 1) * self.cols];
                let v: f64 = a.iter().zip(b).map(|(&x, &y)| x * y).sum();
                g[i * self.rows + j] = v;
                g[j * self.rows + i] = v;
            }
        }
        g
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::mask::{make_kspace_mask, make_pixel_mask};
    use crate::operators::coils::make_coil_maps;

    fn randc(shape: &[usize], seed: u64) -> Tensor<Complex64> {
        let mut rng = Rng::new(seed);
        Tensor::noise(shape, &mut rng)
    }

    #[test]
    fn identity_adjoint_deviation_is_zero() {
        let op = LinearOp::Identity { shape: vec![8] };
        assert_eq!(adjoint_check(&op, 10, 1).unwrap(), 0.0);
    }

    #[test]
    fn gaussian_cs_scalar_case() {
        let op = gaussian_cs_operator(&[1], 1, 7).unwrap();
        let x = Tensor::new(vec![1], vec![Complex64::new(2.0, 1.0)]).unwrap();
        let y = op.apply(&x).unwrap();
        let back = op.adjoint(&y).unwrap();
        // scalar multiply both ways: adjoint(apply(x)) = w² x
        let w = y.data()[0] / x.data()[0];
        assert!((back.data()[0] - x.data()[0] * w * w).norm() < 1e-12);
    }

    #[test]
    fn gaussian_cs_energy_roughly_preserved() {
        // E ‖Ax‖² = ‖x‖² for N(0, 1/m) entries
        let n = 64;
        let op = gaussian_cs_operator(&[n], 48, 3).unwrap();
        let mut rng = Rng::new(5);
        let mut ratio_sum = 0.0;
        let trials = 1000;
        for _ in 0..trials {
            let x = Tensor::<Complex64>::noise(&[n], &mut rng);
            ratio_sum += op.apply(&x).unwrap().norm_sq() / x.norm_sq();
        }
        let mean = ratio_sum / trials as f64;
        assert!((mean - 1.0).abs() < 0.05, "energy ratio {mean}");
    }

    #[test]
    fn gaussian_cs_paper_scale_configuration() {
        // 4000 measurements of a 64x64x3 image; too large to cache, so
        // rows regenerate from the seed. One apply/adjoint pair must
        // still satisfy the inner-product identity.
        let op = gaussian_cs_operator(&[64, 64, 3], 4000, 11).unwrap();
        if let LinearOp::GaussianCs { matrix, .. } = &op {
            assert!(matrix.is_none(), "expected matrix-free mode");
        }
        let dev = adjoint_check(&op, 1, 2).unwrap();
        assert!(dev < 1e-10, "adjoint deviation {dev}");
    }

    #[test]
    fn gaussian_cached_and_streamed_rows_agree() {
        let cached = gaussian_cs_operator(&[32], 8, 9).unwrap();
        let streamed = LinearOp::GaussianCs {
            input_shape: vec![32],
            measurements: 8,
            seed: 9,
            matrix: None,
        };
        let x = randc(&[32], 1);
        let a = cached.apply(&x).unwrap();
        let b = streamed.apply(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn downsample_identity_at_factor_one() {
        let op = downsample_operator(&[8, 8], 1).unwrap();
        let x = randc(&[8, 8], 2);
        assert_eq!(op.apply(&x).unwrap(), x);
    }

    #[test]
    fn downsample_block_average_and_adjoint() {
        let op = downsample_operator(&[4, 4], 2).unwrap();
        let x = Tensor::from_fn(&[4, 4], |i| Complex64::new(i as f64, 0.0));
        let y = op.apply(&x).unwrap();
        // top-left block: (0 + 1 + 4 + 5) / 4 = 2.5
        assert!((y.data()[0] - Complex64::new(2.5, 0.0)).norm() < 1e-12);
        assert!(adjoint_check(&op, 20, 3).unwrap() < 1e-10);
    }

    #[test]
    fn indivisible_downsample_rejected() {
        assert!(downsample_operator(&[6, 6], 4).is_err());
    }

    #[test]
    fn inpaint_projects_and_is_self_adjoint() {
        let mask = make_pixel_mask(&[16], 0.5, 4).unwrap();
        let op = inpaint_operator(mask.clone());
        let x = randc(&[16], 5);
        let y = op.apply(&x).unwrap();
        for (i, v) in y.data().iter().enumerate() {
            if mask.keep[i] {
                assert_eq!(*v, x.data()[i]);
            } else {
                assert_eq!(v.norm(), 0.0);
            }
        }
        assert!(adjoint_check(&op, 20, 6).unwrap() < 1e-12);
    }

    #[test]
    fn mri_operator_rejects_pixel_masks() {
        let mask = make_pixel_mask(&[8, 8], 0.5, 4).unwrap();
        let coils = make_coil_maps(&[8, 8], 2, 0.5, 1).unwrap();
        assert!(matches!(mri_operator(mask, coils), Err(Error::MaskKind(_))));
    }

    #[test]
    fn mri_full_sampling_is_identity() {
        let mask = make_kspace_mask(&[8, 8], 1.0, 2, 1).unwrap();
        let coils = make_coil_maps(&[8, 8], 4, 0.5, 2).unwrap();
        let op = mri_operator(mask, coils).unwrap();
        let x = randc(&[8, 8], 3);
        let y = op.apply(&x).unwrap();
        assert!(y.sub(&x).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn mri_single_uniform_coil_is_idempotent_projection() {
        let mask = make_kspace_mask(&[16, 16], 4.0, 4, 2).unwrap();
        let coils = CoilMaps::uniform(&[16, 16], 1);
        let op = mri_operator(mask, coils).unwrap();
        let x = randc(&[16, 16], 9);
        let once = op.apply(&x).unwrap();
        let twice = op.apply(&once).unwrap();
        assert!(twice.sub(&once).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn mri_operator_is_psd_contraction() {
        let mask = make_kspace_mask(&[16, 16], 4.0, 4, 5).unwrap();
        let coils = make_coil_maps(&[16, 16], 4, 0.4, 6).unwrap();
        let op = mri_operator(mask, coils).unwrap();
        let mut rng = Rng::new(8);
        for _ in 0..20 {
            let x = Tensor::<Complex64>::noise(&[16, 16], &mut rng);
            let quad = x.inner(&op.apply(&x).unwrap()).unwrap();
            assert!(quad.im.abs() < 1e-10 * x.norm_sq(), "not Hermitian: {quad}");
            let rayleigh = quad.re / x.norm_sq();
            assert!((-1e-12..=1.0 + 1e-12).contains(&rayleigh), "rayleigh {rayleigh}");
        }
    }

    #[test]
    fn mri_forward_adjoint_identity() {
        let mask = make_kspace_mask(&[8, 16], 2.0, 4, 3).unwrap();
        let coils = make_coil_maps(&[8, 16], 3, 0.5, 4).unwrap();
        let op = mri_forward_operator(mask, coils).unwrap();
        assert_eq!(op.output_shape(), vec![3, 8, 16]);
        assert!(adjoint_check(&op, 25, 7).unwrap() < 1e-10);
    }

    #[test]
    fn compose_chains_apply_and_adjoint() {
        let mask = make_pixel_mask(&[16], 0.3, 1).unwrap();
        let inner = inpaint_operator(mask);
        let outer = gaussian_cs_operator(&[16], 6, 2).unwrap();
        let op = compose(inner, outer).unwrap();
        assert!(adjoint_check(&op, 25, 3).unwrap() < 1e-10);
    }

    #[test]
    fn real_view_matches_complex_application() {
        let mask = make_kspace_mask(&[8], 2.0, 2, 5).unwrap();
        let coils = make_coil_maps(&[8], 2, 0.5, 6).unwrap();
        let op = mri_operator(mask, coils).unwrap();
        let rv = RealViewOp::from_op(&op, SignalKind::Complex).unwrap();
        let x = randc(&[8], 10);
        let direct = op.apply(&x).unwrap();
        let via = rv.matvec(&x.real_view(SignalKind::Complex));
        let back = Tensor::from_real_view(&[8], SignalKind::Complex, &via).unwrap();
        assert!(back.sub(&direct).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn operator_save_load_round_trip() {
        let dir = std::env::temp_dir().join("linop_io_tests");
        std::fs::create_dir_all(&dir).unwrap();
        let mut rng = Rng::new(31);
        let mask = make_kspace_mask(&[8, 8], 2.0, 2, 1).unwrap();
        let coils = make_coil_maps(&[8, 8], 2, 0.5, 2).unwrap();
        let ops = vec![
            LinearOp::Identity { shape: vec![8] },
            inpaint_operator(make_pixel_mask(&[8], 0.4, 3).unwrap()),
            gaussian_cs_operator(&[8], 4, 5).unwrap(),
            downsample_operator(&[8, 8], 2).unwrap(),
            mri_operator(mask.clone(), coils.clone()).unwrap(),
            mri_forward_operator(mask, coils).unwrap(),
        ];
        for (i, op) in ops.iter().enumerate() {
            let base = dir.join(format!("op{i}"));
            op.save(&base).unwrap();
            let back = LinearOp::load(&base).unwrap();
            assert_eq!(back.kind_name(), op.kind_name());
            let x = Tensor::<Complex64>::noise(op.input_shape(), &mut rng);
            assert_eq!(back.apply(&x).unwrap(), op.apply(&x).unwrap());
        }
        let composite = compose(
            inpaint_operator(make_pixel_mask(&[8], 0.2, 9).unwrap()),
            gaussian_cs_operator(&[8], 3, 9).unwrap(),
        )
        .unwrap();
        assert!(composite.save(dir.join("bad")).is_err());
    }

    #[test]
    fn to_matrix_matches_apply() {
        let op = gaussian_cs_operator(&[6], 4, 13).unwrap();
        let m = op.to_matrix().unwrap();
        let x = randc(&[6], 14);
        let direct = op.apply(&x).unwrap();
        for i in 0..4 {
            let mut acc = Complex64::new(0.0, 0.0);
            for j in 0..6 {
                acc += m.data()[i * 6 + j] * x.data()[j];
            }
            assert!((acc - direct.data()[i]).norm() < 1e-12);
        }
    }
}
