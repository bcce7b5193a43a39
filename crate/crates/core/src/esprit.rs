//! Carrier recovery on a single axis: sample covariance, spatial smoothing
//! for rank-starved (correlated or snapshot-poor) data, model-order selection,
//! and the shift-invariance eigenstructure step itself.
//!
//! The sensor phase progression for a transmission at carrier f and known
//! direction theta is e^{j 2 pi f d cos(theta) n / c}; recovering the
//! generator of that progression from the signal subspace gives f back as
//! long as the per-sensor phase step stays inside one wrap.

use ndarray::{s, Array2};

use crate::error::{Error, Result};
use crate::frontend::SampleSet;
use crate::linalg::{
    dagger, eig_general, hermitian_defect, numerical_rank, pinv, svd_thin, C64,
};

#[derive(Clone, Debug)]
pub struct CovarianceMatrix {
    /// Accumulated outer products (not normalized by the snapshot count).
    pub r: Array2<C64>,
    pub n_snapshots: usize,
}

impl CovarianceMatrix {
    pub fn dim(&self) -> usize {
        self.r.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let scale = self.r.iter().map(|z| z.norm()).fold(0.0f64, f64::max);
        if hermitian_defect(self.r.view()) > 1e-12 * scale.max(1.0) {
            return Err(Error::InvalidConfig("covariance is not Hermitian".into()));
        }
        let (vals, _) = crate::linalg::eigh_desc(self.r.view())?;
        let max = vals.first().copied().unwrap_or(0.0);
        if vals.iter().any(|&v| v < -1e-10 * max.max(1.0)) {
            return Err(Error::InvalidConfig(
                "covariance has a significantly negative eigenvalue".into(),
            ));
        }
        Ok(())
    }
}

/// Sample covariance of the x-axis snapshots: R = sum_k x[k] x[k]^H.
pub fn covariance(samples: &SampleSet) -> CovarianceMatrix {
    let x = &samples.x;
    CovarianceMatrix {
        r: x.dot(&dagger(x.view())),
        n_snapshots: x.ncols(),
    }
}

/// Spatially smoothed covariance: average the covariances of all V = N - m
/// sliding subarrays of length m+1. Restores rank up to m even from a single
/// coherent snapshot, at the price of a smaller aperture.
pub fn smooth_covariance(samples: &SampleSet, m: usize) -> Result<CovarianceMatrix> {
    let x = &samples.x;
    let n = x.nrows();
    if n <= m + 1 {
        return Err(Error::InsufficientSensors {
            needed: m + 2,
            have: n,
            context: "spatial smoothing needs at least two subarrays of length m+1".into(),
        });
    }
    let v = n - m;
    let mut acc: Array2<C64> = Array2::zeros((m + 1, m + 1));
    for start in 0..v {
        let window = x.slice(s![start..start + m + 1, ..]);
        acc = acc + window.dot(&dagger(window));
    }
    acc.mapv_inplace(|z| z / v as f64);
    Ok(CovarianceMatrix {
        r: acc,
        n_snapshots: x.ncols(),
    })
}

/// Model-order estimate from descending covariance eigenvalues: minimizes the
/// description length of "k signals + isotropic noise". Eigenvalues are
/// floored at 1e-12 of the largest so noiseless rank-deficient spectra
/// resolve to the numerical rank instead of log(0).
pub fn mdl_order(eigenvalues: &[f64], q_snapshots: usize) -> Result<usize> {
    if eigenvalues.is_empty() {
        return Err(Error::InvalidConfig(
            "model-order selection needs at least one eigenvalue".into(),
        ));
    }
    let n = eigenvalues.len();
    let max = eigenvalues[0];
    if !(max > 0.0) {
        return Ok(0);
    }
    let floor = 1e-12 * max;
    let lam: Vec<f64> = eigenvalues.iter().map(|&v| v.max(floor)).collect();
    let q = q_snapshots.max(1) as f64;

    let mut best = (f64::INFINITY, 0usize);
    for k in 0..n {
        let noise = &lam[k..];
        let p = noise.len() as f64;
        let am = noise.iter().sum::<f64>() / p;
        let gm_log = noise.iter().map(|&v| v.ln()).sum::<f64>() / p;
        let data_term = q * p * (am.ln() - gm_log);
        let penalty = 0.5 * (k as f64) * (2.0 * n as f64 - k as f64) * q.ln();
        let score = data_term + penalty;
        if score < best.0 {
            best = (score, k);
        }
    }
    Ok(best.1)
}

#[derive(Clone, Debug)]
pub struct CarrierEstimate {
    /// Ascending.
    pub carriers_hz: Vec<f64>,
    /// |eigenvalue| per carrier; 1 in the noiseless model, drift away from 1
    /// signals a degenerate subspace.
    pub eigen_moduli: Vec<f64>,
}

impl CarrierEstimate {
    /// True when some rotation eigenvalue has modulus far from the unit
    /// circle, i.e. the shift-invariance structure has broken down.
    pub fn degenerate(&self) -> bool {
        self.eigen_moduli.iter().any(|&m| (m - 1.0).abs() > 0.5)
    }
}

/// Carrier recovery from a covariance via the shift-invariance of the two
/// row subarrays (rows 0..N-1 vs rows 1..N) of the signal subspace.
///
/// Caller guarantees d·|cos theta| < c/f_nyq (one phase wrap) and
/// theta != ±90°.
pub fn esprit_1d(
    r: &CovarianceMatrix,
    m: usize,
    d_m: f64,
    wave_speed: f64,
    theta_rad: f64,
) -> Result<CarrierEstimate> {
    let n = r.dim();
    if m == 0 {
        return Err(Error::InvalidConfig("need at least one source".into()));
    }
    if n < m + 1 {
        return Err(Error::InsufficientSensors {
            needed: m + 1,
            have: n,
            context: "shift invariance needs subarrays with at least m rows".into(),
        });
    }
    let cos_t = theta_rad.cos();
    if cos_t.abs() < 1e-12 {
        return Err(Error::InvalidConfig(
            "broadside direction leaves no carrier phase to invert".into(),
        ));
    }

    let (u, sv, _) = svd_thin(r.r.view())?;
    let rank = numerical_rank(&sv);
    if rank < m {
        return Err(Error::RankDeficient {
            rank,
            needed: m,
            advice: "covariance rank is below the source count; smooth_covariance restores it \
                     for correlated or snapshot-poor data"
                .into(),
        });
    }
    let us = u.slice(s![.., ..m]);
    let u1 = us.slice(s![..n - 1, ..]);
    let u2 = us.slice(s![1.., ..]);
    let psi = u2.dot(&pinv(u1)?);

    let (vals, _) = eig_general(psi.view())?;
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[b].norm().total_cmp(&vals[a].norm()));
    let factor = wave_speed / (2.0 * std::f64::consts::PI * d_m * cos_t);
    let mut paired: Vec<(f64, f64)> = order[..m]
        .iter()
        .map(|&i| (vals[i].arg() * factor, vals[i].norm()))
        .collect();
    paired.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(CarrierEstimate {
        carriers_hz: paired.iter().map(|p| p.0).collect(),
        eigen_moduli: paired.iter().map(|p| p.1).collect(),
    })
}
