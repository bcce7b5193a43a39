//! Thin complex linear-algebra layer over LAPACK (through `ndarray-linalg`).
//!
//! Every rank decision in the crate funnels through [`numerical_rank`]:
//! singular values below [`RANK_RTOL`] times the largest are zero. Keeping the
//! cutoff in one place keeps subspace extraction, pseudo-inverses and the
//! frame factorizations consistent with each other.

use ndarray::{s, Array2, ArrayView1, ArrayView2};
use ndarray_linalg::{Eig, Eigh, Inverse, SVD, UPLO};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Relative singular-value cutoff for all rank decisions.
pub const RANK_RTOL: f64 = 1e-8;

/// `e^{i phi}`.
#[inline]
pub fn cis(phi: f64) -> C64 {
    C64::new(phi.cos(), phi.sin())
}

/// Conjugate transpose.
pub fn dagger(a: ArrayView2<C64>) -> Array2<C64> {
    let mut out = Array2::zeros((a.ncols(), a.nrows()));
    for ((i, j), v) in a.indexed_iter() {
        out[(j, i)] = v.conj();
    }
    out
}

pub fn frob(a: ArrayView2<C64>) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

fn backend<E: std::fmt::Debug>(e: E) -> Error {
    Error::Backend(format!("{e:?}"))
}

/// Thin SVD `A = U diag(s) Vh` with `U: n×k`, `Vh: k×m`, `k = min(n, m)`,
/// singular values descending.
pub fn svd_thin(a: ArrayView2<C64>) -> Result<(Array2<C64>, Vec<f64>, Array2<C64>)> {
    let (u, sv, vh) = a.svd(true, true).map_err(backend)?;
    let k = sv.len();
    let u = u.expect("svd requested U").slice(s![.., ..k]).to_owned();
    let vh = vh.expect("svd requested Vh").slice(s![..k, ..]).to_owned();
    Ok((u, sv.to_vec(), vh))
}

/// Singular values only, descending.
pub fn singular_values(a: ArrayView2<C64>) -> Result<Vec<f64>> {
    let (_, sv, _) = a.svd(false, false).map_err(backend)?;
    Ok(sv.to_vec())
}

/// Count of singular values above `RANK_RTOL * s_max`.
pub fn numerical_rank(sv: &[f64]) -> usize {
    let smax = sv.first().copied().unwrap_or(0.0);
    if smax <= 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_RTOL * smax).count()
}

pub fn rank(a: ArrayView2<C64>) -> Result<usize> {
    Ok(numerical_rank(&singular_values(a)?))
}

/// Moore-Penrose pseudo-inverse with singular values below the rank cutoff
/// dropped.
pub fn pinv(a: ArrayView2<C64>) -> Result<Array2<C64>> {
    let (u, sv, vh) = svd_thin(a)?;
    let smax = sv.first().copied().unwrap_or(0.0);
    let v = dagger(vh.view());
    let uh = dagger(u.view());
    let mut scaled = v;
    for (j, &s) in sv.iter().enumerate() {
        let inv = if smax > 0.0 && s > RANK_RTOL * smax {
            C64::new(1.0 / s, 0.0)
        } else {
            C64::new(0.0, 0.0)
        };
        scaled.column_mut(j).mapv_inplace(|z| z * inv);
    }
    Ok(scaled.dot(&uh))
}

/// Least squares `argmin_X |A X - B|_F` via the pseudo-inverse.
pub fn lstsq(a: ArrayView2<C64>, b: ArrayView2<C64>) -> Result<Array2<C64>> {
    Ok(pinv(a)?.dot(&b))
}

/// Eigenpairs of a Hermitian matrix, eigenvalues descending, eigenvectors as
/// matching columns.
pub fn eigh_desc(a: ArrayView2<C64>) -> Result<(Vec<f64>, Array2<C64>)> {
    // Pin the input to row-major: the backend eigensolver sees row-major
    // Hermitian storage as its conjugate, so its eigenvector columns come
    // back conjugated and we undo that here.
    let a_std = a.as_standard_layout().to_owned();
    let (vals, vecs) = a_std.eigh(UPLO::Lower).map_err(backend)?;
    let n = vals.len();
    let vals_desc: Vec<f64> = vals.iter().rev().copied().collect();
    let mut vecs_desc = Array2::zeros((n, n));
    for j in 0..n {
        vecs_desc
            .column_mut(j)
            .assign(&vecs.column(n - 1 - j).mapv(|z| z.conj()));
    }
    Ok((vals_desc, vecs_desc))
}

/// Eigendecomposition of a general complex square matrix; eigenvectors are
/// the columns of the returned matrix, in eigenvalue order.
pub fn eig_general(a: ArrayView2<C64>) -> Result<(Vec<C64>, Array2<C64>)> {
    let (vals, vecs) = a.eig().map_err(backend)?;
    Ok((vals.to_vec(), vecs))
}

pub fn inv(a: ArrayView2<C64>) -> Result<Array2<C64>> {
    a.inv().map_err(backend)
}

/// Max absolute deviation from Hermitian symmetry; 0 for exactly Hermitian.
pub fn hermitian_defect(a: ArrayView2<C64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            let d = (a[(i, j)] - a[(j, i)].conj()).norm();
            if d > worst {
                worst = d;
            }
        }
    }
    worst
}

pub fn norm2(v: ArrayView1<C64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Deterministic seed derivation: one root seed plus three indices, mixed
/// with SplitMix64 so distinct index tuples land on uncorrelated streams.
pub fn mix_seed(root: u64, a: u64, b: u64, c: u64) -> u64 {
    let mut z = root
        ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ c.wrapping_mul(0x94D0_49BB_1331_11EB);
    for _ in 0..2 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn pinv_recovers_inverse_on_full_rank() {
        let a = array![[c(2.0, 0.0), c(0.0, 1.0)], [c(0.0, -1.0), c(3.0, 0.0)]];
        let p = pinv(a.view()).unwrap();
        let eye = a.dot(&p);
        assert!((eye[(0, 0)] - c(1.0, 0.0)).norm() < 1e-12);
        assert!((eye[(1, 1)] - c(1.0, 0.0)).norm() < 1e-12);
        assert!(eye[(0, 1)].norm() < 1e-12);
    }

    #[test]
    fn numerical_rank_uses_relative_cutoff() {
        assert_eq!(numerical_rank(&[1.0, 1e-3, 0.9e-8]), 2);
        assert_eq!(numerical_rank(&[1.0, 1e-3, 1.1e-8]), 3);
        assert_eq!(numerical_rank(&[0.0, 0.0]), 0);
    }

    #[test]
    fn eigh_desc_orders_descending() {
        let a = array![[c(1.0, 0.0), c(0.0, 2.0)], [c(0.0, -2.0), c(5.0, 0.0)]];
        let (vals, vecs) = eigh_desc(a.view()).unwrap();
        assert!(vals[0] >= vals[1]);
        // residual A v = lambda v for the leading pair
        let v0 = vecs.column(0).to_owned();
        let av = a.dot(&v0);
        for i in 0..2 {
            assert!((av[i] - v0[i] * vals[0]).norm() < 1e-10);
        }
    }

    #[test]
    fn eig_general_diagonalizes() {
        let a = array![[c(0.0, 1.0), c(1.0, 0.0)], [c(0.0, 0.0), c(2.0, -1.0)]];
        let (vals, vecs) = eig_general(a.view()).unwrap();
        for (j, &l) in vals.iter().enumerate() {
            let v = vecs.column(j).to_owned();
            let av = a.dot(&v);
            for i in 0..2 {
                assert!((av[i] - v[i] * l).norm() < 1e-10, "eigenpair {j} residual");
            }
        }
    }

    #[test]
    fn mix_seed_distinguishes_indices() {
        let s0 = mix_seed(7, 0, 0, 0);
        let s1 = mix_seed(7, 0, 0, 1);
        let s2 = mix_seed(7, 0, 1, 0);
        let s3 = mix_seed(7, 1, 0, 0);
        assert!(s0 != s1 && s0 != s2 && s0 != s3 && s1 != s2);
        assert_eq!(mix_seed(7, 0, 0, 1), s1);
    }
}
