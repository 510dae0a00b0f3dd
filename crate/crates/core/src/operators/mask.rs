//! Realized corruption masks.
//!
//! Two families: independent per-pixel Bernoulli erasure, and k-space
//! line masks that keep or drop whole readout lines (the last axis
//! indexes lines) with a always-kept central autocalibration block.
//! `further_corrupt` produces the deliberately-worse mask used at
//! training time; it never resurrects an erased entry and never touches
//! the autocalibration lines.

use std::ops::Range;
use std::path::Path;

use crate::error::{Error, Result};
use crate::io::{load_tensor, save_tensor, KvMap};
use crate::numerics::rng::Rng;
use crate::numerics::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub enum MaskKind {
    /// Each pixel erased independently with probability `erase_prob`.
    Pixel { erase_prob: f64 },
    /// Whole lines kept or dropped; `round(n_lines / accel)` lines kept
    /// in total, always including the central `acs_lines`.
    KspaceLines { accel: f64, acs_lines: usize },
}

/// A corruption mask together with the parameters that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSpec {
    pub kind: MaskKind,
    pub shape: Vec<usize>,
    /// Per-pixel (pixel kind) or per-line (k-space kind) keep flags.
    pub keep: Vec<bool>,
    pub seed: u64,
}

/// Central ACS block of `acs` lines among `n`.
pub fn acs_range(n_lines: usize, acs: usize) -> Range<usize> {
    let start = (n_lines - acs) / 2;
    start..start + acs
}

/// Kept-line budget at acceleration `r`.
pub fn lines_at_acceleration(n_lines: usize, r: f64) -> usize {
    (n_lines as f64 / r).round() as usize
}

pub fn make_pixel_mask(shape: &[usize], erase_prob: f64, seed: u64) -> Result<MaskSpec> {
    if !(0.0..1.0).contains(&erase_prob) {
        return Err(Error::invalid(format!(
            "pixel erasure probability must be in [0, 1), got {erase_prob}"
        )));
    }
    let n: usize = shape.iter().product();
    if n == 0 {
        return Err(Error::invalid("empty mask shape"));
    }
    let mut rng = Rng::new(seed);
    let keep = (0..n).map(|_| !rng.bernoulli(erase_prob)).collect();
    Ok(MaskSpec {
        kind: MaskKind::Pixel { erase_prob },
        shape: shape.to_vec(),
        keep,
        seed,
    })
}

pub fn make_kspace_mask(shape: &[usize], accel: f64, acs_lines: usize, seed: u64) -> Result<MaskSpec> {
    if accel < 1.0 {
        return Err(Error::invalid(format!("acceleration must be >= 1, got {accel}")));
    }
    let n_lines = *shape.last().ok_or_else(|| Error::invalid("empty mask shape"))?;
    if acs_lines > n_lines {
        return Err(Error::invalid(format!(
            "{acs_lines} ACS lines exceed {n_lines} phase-encode lines"
        )));
    }
    let budget = lines_at_acceleration(n_lines, accel);
    if budget < acs_lines {
        return Err(Error::invalid(format!(
            "infeasible mask: {budget} kept lines at R={accel} cannot cover {acs_lines} ACS lines"
        )));
    }
    let mut keep = vec![false; n_lines];
    let acs = acs_range(n_lines, acs_lines);
    for i in acs.clone() {
        keep[i] = true;
    }
    let candidates: Vec<usize> = (0..n_lines).filter(|i| !acs.contains(i)).collect();
    let mut rng = Rng::new(seed);
    for pick in rng.choose(candidates.len(), budget - acs_lines) {
        keep[candidates[pick]] = true;
    }
    Ok(MaskSpec {
        kind: MaskKind::KspaceLines { accel, acs_lines },
        shape: shape.to_vec(),
        keep,
        seed,
    })
}

/// How to corrupt an already-corrupted mask further.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CorruptionPolicy {
    /// Erase each kept pixel independently with probability `delta` > 0.
    PixelErase { delta: f64 },
    /// Drop kept non-ACS lines uniformly at random down to the budget of
    /// acceleration R+1.
    NextAcceleration,
}

pub fn further_corrupt(mask: &MaskSpec, policy: &CorruptionPolicy, rng: &mut Rng) -> Result<MaskSpec> {
    // record a fresh seed so the output is reproducible on its own
    let seed = rng.next_u64();
    let mut local = Rng::new(seed);
    match (&mask.kind, policy) {
        (MaskKind::Pixel { erase_prob }, CorruptionPolicy::PixelErase { delta }) => {
            if *delta <= 0.0 {
                return Err(Error::invalid(
                    "further corruption requires delta > 0 (identifiability fails at delta = 0)",
                ));
            }
            if *delta >= 1.0 {
                return Err(Error::invalid(format!("delta must be < 1, got {delta}")));
            }
            let keep = mask
                .keep
                .iter()
                .map(|&k| k && !local.bernoulli(*delta))
                .collect();
            Ok(MaskSpec {
                kind: MaskKind::Pixel { erase_prob: *erase_prob },
                shape: mask.shape.clone(),
                keep,
                seed,
            })
        }
        (MaskKind::KspaceLines { accel, acs_lines }, CorruptionPolicy::NextAcceleration) => {
            let n_lines = *mask.shape.last().unwrap();
            let target_r = accel + 1.0;
            let target = lines_at_acceleration(n_lines, target_r);
            if target < *acs_lines {
                return Err(Error::invalid(format!(
                    "target budget {target} at R={target_r} is below the {acs_lines}-line ACS floor"
                )));
            }
            let acs = acs_range(n_lines, *acs_lines);
            let removable: Vec<usize> = (0..n_lines)
                .filter(|i| mask.keep[*i] && !acs.contains(i))
                .collect();
            let kept = mask.keep.iter().filter(|&&k| k).count();
            let to_remove = kept.saturating_sub(target);
            if to_remove > removable.len() {
                return Err(Error::invalid(format!(
                    "cannot remove {to_remove} lines, only {} non-ACS lines kept",
                    removable.len()
                )));
            }
            let mut keep = mask.keep.clone();
            for pick in local.choose(removable.len(), to_remove) {
                keep[removable[pick]] = false;
            }
            Ok(MaskSpec {
                kind: MaskKind::KspaceLines { accel: target_r, acs_lines: *acs_lines },
                shape: mask.shape.clone(),
                keep,
                seed,
            })
        }
        _ => Err(Error::MaskKind(
            "corruption policy does not match mask kind".into(),
        )),
    }
}

impl MaskSpec {
    pub fn is_pixel(&self) -> bool {
        matches!(self.kind, MaskKind::Pixel { .. })
    }

    pub fn is_kspace(&self) -> bool {
        matches!(self.kind, MaskKind::KspaceLines { .. })
    }

    pub fn n_lines(&self) -> usize {
        *self.shape.last().unwrap()
    }

    pub fn kept(&self) -> usize {
        self.keep.iter().filter(|&&k| k).count()
    }

    pub fn keep_fraction(&self) -> f64 {
        self.kept() as f64 / self.keep.len() as f64
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        (0..self.keep.len()).filter(|&i| self.keep[i]).collect()
    }

    pub fn acs_indices(&self) -> Range<usize> {
        match self.kind {
            MaskKind::KspaceLines { acs_lines, .. } => acs_range(self.n_lines(), acs_lines),
            MaskKind::Pixel { .. } => 0..0,
        }
    }

    /// True when every entry kept here is also kept in `other`.
    pub fn is_subset_of(&self, other: &MaskSpec) -> bool {
        self.keep.len() == other.keep.len()
            && self
                .keep
                .iter()
                .zip(&other.keep)
                .all(|(&a, &b)| !a || b)
    }

    /// 0/1 mask over the full tensor shape (line masks broadcast over
    /// the leading axes).
    pub fn dense(&self) -> Tensor<f64> {
        let n: usize = self.shape.iter().product();
        match self.kind {
            MaskKind::Pixel { .. } => Tensor::from_fn(&self.shape, |i| {
                if self.keep[i] {
                    1.0
                } else {
                    0.0
                }
            }),
            MaskKind::KspaceLines { .. } => {
                let lines = self.n_lines();
                let _ = n;
                Tensor::from_fn(&self.shape, |i| {
                    if self.keep[i % lines] {
                        1.0
                    } else {
                        0.0
                    }
                })
            }
        }
    }

    /// Write the realized mask as AMBT plus a key-value sidecar.
    pub fn save(&self, base: impl AsRef<Path>) -> Result<()> {
        let base = base.as_ref();
        save_tensor(base.with_extension("ambt"), &self.dense())?;
        let mut kv = KvMap::new();
        kv.set("shape", join_usize(&self.shape));
        kv.set("seed", self.seed);
        match self.kind {
            MaskKind::Pixel { erase_prob } => {
                kv.set("kind", "pixel");
                kv.set("p", erase_prob);
            }
            MaskKind::KspaceLines { accel, acs_lines } => {
                kv.set("kind", "kspace_line");
                kv.set("r", accel);
                kv.set("acs_lines", acs_lines);
            }
        }
        kv.save(base.with_extension("kv"))
    }

    pub fn load(base: impl AsRef<Path>) -> Result<MaskSpec> {
        let base = base.as_ref();
        let kv = KvMap::load(base.with_extension("kv"))?;
        let dense: Tensor<f64> = load_tensor(base.with_extension("ambt"))?;
        let shape = dense.shape().to_vec();
        let seed = kv.get_u64("seed")?;
        match kv.get("kind")? {
            "pixel" => {
                let keep = dense.data().iter().map(|&v| v != 0.0).collect();
                Ok(MaskSpec {
                    kind: MaskKind::Pixel { erase_prob: kv.get_f64("p")? },
                    shape,
                    keep,
                    seed,
                })
            }
            "kspace_line" => {
                let lines = *shape.last().unwrap();
                let keep = (0..lines).map(|i| dense.data()[i] != 0.0).collect();
                Ok(MaskSpec {
                    kind: MaskKind::KspaceLines {
                        accel: kv.get_f64("r")?,
                        acs_lines: kv.get_usize("acs_lines")?,
                    },
                    shape,
                    keep,
                    seed,
                })
            }
            other => Err(Error::Config(format!("unknown mask kind `{other}`"))),
        }
    }
}

pub(crate) fn join_usize(v: &[usize]) -> String {
    v.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("x")
}

/// Parse a `HxWx...` shape string.
pub fn parse_shape(s: &str) -> Result<Vec<usize>> {
    s.split('x')
        .map(|p| {
            p.trim()
                .parse()
                .map_err(|_| Error::Config(format!("bad shape component `{p}`")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_erasure_keeps_everything() {
        let m = make_pixel_mask(&[4, 4], 0.0, 1).unwrap();
        assert_eq!(m.kept(), 16);
    }

    #[test]
    fn erasure_probability_one_rejected() {
        assert!(make_pixel_mask(&[4], 1.0, 1).is_err());
    }

    #[test]
    fn empirical_keep_fraction() {
        let m = make_pixel_mask(&[100_000], 0.4, 9).unwrap();
        let frac = m.keep_fraction();
        assert!((frac - 0.6).abs() < 0.005, "keep fraction {frac}");
        // the heavy-erasure training regime
        let m = make_pixel_mask(&[100_000], 0.8, 10).unwrap();
        assert!((m.keep_fraction() - 0.2).abs() < 0.005);
    }

    #[test]
    fn further_corruption_is_always_a_subset_preserving_acs() {
        let mut rng = Rng::new(123);
        for seed in 0..50u64 {
            let pm = make_pixel_mask(&[64], 0.3, seed).unwrap();
            let pw = further_corrupt(&pm, &CorruptionPolicy::PixelErase { delta: 0.2 }, &mut rng)
                .unwrap();
            assert!(pw.is_subset_of(&pm));
            let km = make_kspace_mask(&[32, 32], 2.0, 6, seed).unwrap();
            let kw = further_corrupt(&km, &CorruptionPolicy::NextAcceleration, &mut rng).unwrap();
            assert!(kw.is_subset_of(&km));
            for i in acs_range(32, 6) {
                assert!(kw.keep[i], "seed {seed}: ACS line {i} removed");
            }
        }
    }

    #[test]
    fn paper_acceleration_budgets() {
        // 128 lines, 20 ACS: R in {2,4,6} keeps 64/32/21 lines
        for (r, want) in [(2.0, 64), (4.0, 32), (6.0, 21)] {
            let m = make_kspace_mask(&[128, 128], r, 20, 3).unwrap();
            assert_eq!(m.kept(), want, "R={r}");
            for i in acs_range(128, 20) {
                assert!(m.keep[i], "ACS line {i} dropped at R={r}");
            }
        }
        // R=8 keeps 16 < 20 ACS lines on a 128 grid: infeasible by the
        // budget rule, so the feasible wide-grid case stands in for it.
        assert!(make_kspace_mask(&[128, 128], 8.0, 20, 3).is_err());
        let m = make_kspace_mask(&[256, 256], 8.0, 20, 3).unwrap();
        assert_eq!(m.kept(), 32);
        for i in acs_range(256, 20) {
            assert!(m.keep[i]);
        }
    }

    #[test]
    fn full_sampling_keeps_all_lines() {
        let m = make_kspace_mask(&[64, 64], 1.0, 20, 5).unwrap();
        assert_eq!(m.kept(), 64);
    }

    #[test]
    fn seeds_move_only_non_acs_lines() {
        let a = make_kspace_mask(&[128, 128], 4.0, 20, 1).unwrap();
        let b = make_kspace_mask(&[128, 128], 4.0, 20, 2).unwrap();
        assert_ne!(a.keep, b.keep);
        for i in acs_range(128, 20) {
            assert!(a.keep[i] && b.keep[i]);
        }
    }

    #[test]
    fn infeasible_acs_budget_rejected() {
        // R=8 on 64 lines keeps 8 < 20 ACS lines
        assert!(make_kspace_mask(&[64, 64], 8.0, 20, 1).is_err());
    }

    #[test]
    fn further_corrupt_kspace_hits_next_budget() {
        let mut rng = Rng::new(11);
        let m = make_kspace_mask(&[128, 128], 2.0, 20, 7).unwrap();
        assert_eq!(m.kept(), 64);
        let worse = further_corrupt(&m, &CorruptionPolicy::NextAcceleration, &mut rng).unwrap();
        assert_eq!(worse.kept(), 43); // round(128/3)
        assert!(worse.is_subset_of(&m));
        for i in acs_range(128, 20) {
            assert!(worse.keep[i]);
        }
        assert!(matches!(worse.kind, MaskKind::KspaceLines { accel, .. } if accel == 3.0));
    }

    #[test]
    fn further_corrupt_pixel_erases_at_delta() {
        let mut rng = Rng::new(2);
        let ones = make_pixel_mask(&[100_000], 0.0, 3).unwrap();
        let worse =
            further_corrupt(&ones, &CorruptionPolicy::PixelErase { delta: 0.1 }, &mut rng).unwrap();
        let frac = worse.keep_fraction();
        assert!((frac - 0.9).abs() < 0.005, "kept fraction {frac}");
        assert!(worse.is_subset_of(&ones));
    }

    #[test]
    fn zero_delta_rejected() {
        let mut rng = Rng::new(2);
        let m = make_pixel_mask(&[16], 0.2, 3).unwrap();
        assert!(further_corrupt(&m, &CorruptionPolicy::PixelErase { delta: 0.0 }, &mut rng).is_err());
    }

    #[test]
    fn policy_kind_mismatch_rejected() {
        let mut rng = Rng::new(2);
        let m = make_pixel_mask(&[16], 0.2, 3).unwrap();
        assert!(matches!(
            further_corrupt(&m, &CorruptionPolicy::NextAcceleration, &mut rng),
            Err(Error::MaskKind(_))
        ));
    }

    #[test]
    fn corruption_below_acs_floor_rejected() {
        // 64 lines, 8 ACS, R=7 keeps 9; R=8 would keep 8 == ACS, fine;
        // push to the failing case: R=15 keeps 4 < 8.
        let m = make_kspace_mask(&[64, 64], 15.0, 8, 1);
        assert!(m.is_err());
        let m = make_kspace_mask(&[64, 64], 7.0, 8, 1).unwrap();
        let mut rng = Rng::new(5);
        // R=8 keeps exactly 8 = ACS floor: allowed, removes every random line
        let worse = further_corrupt(&m, &CorruptionPolicy::NextAcceleration, &mut rng).unwrap();
        assert_eq!(worse.kept(), 8);
        assert_eq!(worse.kept_indices(), acs_range(64, 8).collect::<Vec<_>>());
    }

    #[test]
    fn dense_broadcasts_lines_over_rows() {
        let m = make_kspace_mask(&[4, 8], 2.0, 2, 1).unwrap();
        let d = m.dense();
        for row in 0..4 {
            for col in 0..8 {
                let want = if m.keep[col] { 1.0 } else { 0.0 };
                assert_eq!(d.data()[row * 8 + col], want);
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = std::env::temp_dir().join("mask_io_tests");
        std::fs::create_dir_all(&dir).unwrap();
        let m = make_kspace_mask(&[16, 16], 4.0, 4, 9).unwrap();
        m.save(dir.join("m1")).unwrap();
        let back = MaskSpec::load(dir.join("m1")).unwrap();
        assert_eq!(back, m);
        let p = make_pixel_mask(&[8, 8], 0.3, 4).unwrap();
        p.save(dir.join("m2")).unwrap();
        assert_eq!(MaskSpec::load(dir.join("m2")).unwrap(), p);
    }
}
