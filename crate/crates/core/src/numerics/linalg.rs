//! Small dense complex linear algebra: Hermitian eigendecomposition via
//! cyclic Jacobi, singular values through the Gram matrix, and PSD
//! pseudo-inverses. Built for the n ≤ 128 matrices the oracles and
//! analytic denoisers work with, not for scale.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Row-major complex matrix product (m×k)·(k×n).
pub fn matmul(a: &[Complex64], b: &[Complex64], m: usize, k: usize, n: usize) -> Vec<Complex64> {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    let mut out = vec![Complex64::new(0.0, 0.0); m * n];
    for i in 0..m {
        for l in 0..k {
            let av = a[i * k + l];
            if av == Complex64::new(0.0, 0.0) {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += av * b[l * n + j];
            }
        }
    }
    out
}

pub fn matvec(a: &[Complex64], x: &[Complex64], m: usize, n: usize) -> Vec<Complex64> {
    assert_eq!(a.len(), m * n);
    assert_eq!(x.len(), n);
    let mut out = vec![Complex64::new(0.0, 0.0); m];
    for i in 0..m {
        let mut acc = Complex64::new(0.0, 0.0);
        let row = &a[i * n..(i + 1) * n];
        for (j, &v) in row.iter().enumerate() {
            acc += v * x[j];
        }
        out[i] = acc;
    }
    out
}

/// Conjugate transpose of a row-major m×n matrix.
pub fn adjoint_matrix(a: &[Complex64], m: usize, n: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j].conj();
        }
    }
    out
}

/// Eigendecomposition of a Hermitian matrix.
pub struct HermitianEig {
    /// Ascending eigenvalues.
    pub values: Vec<f64>,
    /// Row-major n×n unitary; column j is the eigenvector of `values[j]`.
    pub vectors: Vec<Complex64>,
}

/// Cyclic Jacobi for Hermitian matrices. Input is row-major n×n; only
/// the Hermitian part is meaningful (the routine symmetrizes first).
pub fn eigh(matrix: &[Complex64], n: usize) -> Result<HermitianEig> {
    if matrix.len() != n * n {
        return Err(Error::invalid(format!(
            "eigh: expected {n}x{n} matrix, got {} entries",
            matrix.len()
        )));
    }
    let mut a: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] = (matrix[i * n + j] + matrix[j * n + i].conj()) * 0.5;
        }
    }
    if a.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Numerical("eigh: non-finite entries".into()));
    }
    let mut v: Vec<Complex64> = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        v[i * n + i] = Complex64::new(1.0, 0.0);
    }
    let scale: f64 = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt().max(1e-300);
    let tol = 1e-15 * scale;
    let max_sweeps = 60;
    for _ in 0..max_sweeps {
        let mut off = 0.0f64;
        for p in 0..n {
            for q in (p + 1)..n {
                off += a[p * n + q].norm_sqr();
            }
        }
        if off.sqrt() <= tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let g = a[p * n + q];
                let gabs = g.norm();
                if gabs <= tol / (n as f64) {
                    continue;
                }
                let app = a[p * n + p].re;
                let aqq = a[q * n + q].re;
                let tau = (app - aqq) / (2.0 * gabs);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // sc = s * e^{-iφ} where φ = arg(a_pq)
                let phase = g / gabs;
                let sc = phase.conj() * s;
                // columns: col_p' = c col_p + sc col_q ; col_q' = -conj(sc) col_p + c col_q
                for i in 0..n {
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    a[i * n + p] = aip * c + aiq * sc;
                    a[i * n + q] = aip * (-sc.conj()) + aiq * c;
                    let vip = v[i * n + p];
                    let viq = v[i * n + q];
                    v[i * n + p] = vip * c + viq * sc;
                    v[i * n + q] = vip * (-sc.conj()) + viq * c;
                }
                // rows: row_p' = c row_p + conj(sc) row_q ; row_q' = -sc row_p + c row_q
                for j in 0..n {
                    let apj = a[p * n + j];
                    let aqj = a[q * n + j];
                    a[p * n + j] = apj * c + aqj * sc.conj();
                    a[q * n + j] = apj * (-sc) + aqj * c;
                }
                a[p * n + q] = Complex64::new(0.0, 0.0);
                a[q * n + p] = Complex64::new(0.0, 0.0);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| a[i * n + i].re).collect();
    order.sort_by(|&i, &j| diag[i].partial_cmp(&diag[j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = vec![Complex64::new(0.0, 0.0); n * n];
    for (newj, &oldj) in order.iter().enumerate() {
        for i in 0..n {
            vectors[i * n + newj] = v[i * n + oldj];
        }
    }
    Ok(HermitianEig { values, vectors })
}

/// Smallest singular value of a 2-D tensor, via the Gram matrix of the
/// smaller side.
pub fn min_singular_value(m: &Tensor<Complex64>) -> Result<f64> {
    if m.ndim() != 2 {
        return Err(Error::invalid(format!(
            "min_singular_value needs a 2-D tensor, got shape {:?}",
            m.shape()
        )));
    }
    if !m.all_finite() {
        return Err(Error::Numerical("min_singular_value: non-finite entries".into()));
    }
    let (rows, cols) = (m.shape()[0], m.shape()[1]);
    let a = m.data();
    let gram: Vec<Complex64> = if rows >= cols {
        // MᴴM (cols×cols)
        let mut g = vec![Complex64::new(0.0, 0.0); cols * cols];
        for i in 0..cols {
            for j in 0..cols {
                let mut acc = Complex64::new(0.0, 0.0);
                for r in 0..rows {
                    acc += a[r * cols + i].conj() * a[r * cols + j];
                }
                g[i * cols + j] = acc;
            }
        }
        g
    } else {
        // MMᴴ (rows×rows)
        let mut g = vec![Complex64::new(0.0, 0.0); rows * rows];
        for i in 0..rows {
            for j in 0..rows {
                let mut acc = Complex64::new(0.0, 0.0);
                for cidx in 0..cols {
                    acc += a[i * cols + cidx] * a[j * cols + cidx].conj();
                }
                g[i * rows + j] = acc;
            }
        }
        g
    };
    let dim = rows.min(cols);
    let eig = eigh(&gram, dim)?;
    Ok(eig.values[0].max(0.0).sqrt())
}

/// Pseudo-inverse of a Hermitian PSD matrix, with its numerical rank.
pub struct PsdPinv {
    /// Row-major n×n pseudo-inverse.
    pub inv: Vec<Complex64>,
    pub rank: usize,
    /// Ascending eigenvalues of the input.
    pub eigenvalues: Vec<f64>,
}

pub fn psd_pinv(g: &[Complex64], n: usize, rel_tol: f64) -> Result<PsdPinv> {
    let eig = eigh(g, n)?;
    let max = eig.values.iter().cloned().fold(0.0f64, f64::max);
    let cut = rel_tol * max.max(0.0);
    let mut inv = vec![Complex64::new(0.0, 0.0); n * n];
    let mut rank = 0;
    for (j, &lam) in eig.values.iter().enumerate() {
        if lam <= cut || lam <= 0.0 {
            continue;
        }
        rank += 1;
        let w = 1.0 / lam;
        for i in 0..n {
            let vij = eig.vectors[i * n + j];
            for k in 0..n {
                inv[i * n + k] += vij * eig.vectors[k * n + j].conj() * w;
            }
        }
    }
    Ok(PsdPinv {
        inv,
        rank,
        eigenvalues: eig.values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::Rng;

    fn residual(a: &[Complex64], n: usize, eig: &HermitianEig) -> f64 {
        // max |A v_j - λ_j v_j|
        let mut worst = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                let mut acc = Complex64::new(0.0, 0.0);
                for k in 0..n {
                    acc += a[i * n + k] * eig.vectors[k * n + j];
                }
                acc -= eig.vectors[i * n + j] * eig.values[j];
                worst = worst.max(acc.norm());
            }
        }
        worst
    }

    #[test]
    fn identity_eigs() {
        let n = 4;
        let mut a = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            a[i * n + i] = Complex64::new(1.0, 0.0);
        }
        let eig = eigh(&a, n).unwrap();
        for &v in &eig.values {
            assert!((v - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn random_hermitian_diagonalized() {
        let mut rng = Rng::new(21);
        for n in [3usize, 8, 16] {
            let mut a = vec![Complex64::new(0.0, 0.0); n * n];
            for i in 0..n {
                for j in i..n {
                    let z = Complex64::new(rng.normal(), if i == j { 0.0 } else { rng.normal() });
                    a[i * n + j] = z;
                    a[j * n + i] = z.conj();
                }
            }
            let eig = eigh(&a, n).unwrap();
            assert!(residual(&a, n, &eig) < 1e-10, "n={n}");
            // V unitary
            for p in 0..n {
                for q in 0..n {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for i in 0..n {
                        acc += eig.vectors[i * n + p].conj() * eig.vectors[i * n + q];
                    }
                    let want = if p == q { 1.0 } else { 0.0 };
                    assert!((acc - Complex64::new(want, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn min_singular_identity() {
        let n = 4;
        let eye = Tensor::from_fn(&[n, n], |k| {
            if k / n == k % n {
                Complex64::new(1.0, 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        assert!((min_singular_value(&eye).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn min_singular_rank_deficient_diag() {
        let d = [2.0, 1.0, 0.0];
        let t = Tensor::from_fn(&[3, 3], |k| {
            if k / 3 == k % 3 {
                Complex64::new(d[k / 3], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        assert!(min_singular_value(&t).unwrap().abs() < 1e-12);
    }

    #[test]
    fn min_singular_constructed_factors() {
        // M = U Σ Vᴴ with Σ = diag(3.0 .. 0.5); build U, V from Jacobi of
        // random Hermitian matrices so they are exactly unitary.
        let n = 8;
        let mut rng = Rng::new(77);
        let mut unitaries = Vec::new();
        for _ in 0..2 {
            let mut h = vec![Complex64::new(0.0, 0.0); n * n];
            for i in 0..n {
                for j in i..n {
                    let z = Complex64::new(rng.normal(), if i == j { 0.0 } else { rng.normal() });
                    h[i * n + j] = z;
                    h[j * n + i] = z.conj();
                }
            }
            unitaries.push(eigh(&h, n).unwrap().vectors);
        }
        let sig: Vec<f64> = (0..n).map(|i| 3.0 - 2.5 * i as f64 / (n - 1) as f64).collect();
        assert!((sig[n - 1] - 0.5).abs() < 1e-12);
        let mut us = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                us[i * n + j] = unitaries[0][i * n + j] * sig[j];
            }
        }
        let vh = adjoint_matrix(&unitaries[1], n, n);
        let m = matmul(&us, &vh, n, n, n);
        let t = Tensor::new(vec![n, n], m).unwrap();
        let got = min_singular_value(&t).unwrap();
        assert!(
            (got - 0.5).abs() < 1e-6 * 0.5,
            "smallest singular value {got}, want 0.5"
        );
    }

    #[test]
    fn pinv_of_rank_deficient_projector() {
        // G = diag(2, 0) → G⁺ = diag(0.5, 0)
        let g = vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
        ];
        let p = psd_pinv(&g, 2, 1e-12).unwrap();
        assert_eq!(p.rank, 1);
        assert!((p.inv[0] - Complex64::new(0.5, 0.0)).norm() < 1e-14);
        assert!(p.inv[3].norm() < 1e-14);
    }

    #[test]
    fn non_two_dimensional_rejected() {
        let t = Tensor::<Complex64>::zeros(&[4]);
        assert!(min_singular_value(&t).is_err());
    }
}
