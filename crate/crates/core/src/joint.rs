//! Joint carrier/direction recovery on the L-shaped array: the four
//! cross-covariances between axis subarrays and the paired two-dimensional
//! rotational-invariance estimator built on them.
//!
//! Both axes share one source set, so one eigenbasis diagonalizes the shift
//! operators of both axes at once; reading the two diagonals positionally
//! pairs every carrier with its direction without a search.

use ndarray::{s, Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::frontend::{steering, Axis, SampleSet};
use crate::linalg::{dagger, eig_general, inv, numerical_rank, pinv, svd_thin, C64};
use crate::model::{ArrayGeometry, ArrayKind, SignalScene};

/// Collision tolerance on eigenvalues of the pairing target: closer than
/// this and the shared eigenbasis no longer identifies who is who.
const EIGEN_COLLISION_TOL: f64 = 1e-8;

/// Below this |cos theta| the carrier estimate divides by almost zero.
const ENDFIRE_COS_TOL: f64 = 1e-3;

#[derive(Clone, Debug)]
pub struct JointEstimate {
    /// (carrier_hz, aoa_rad), sorted by carrier; entry i is read from
    /// (phi_diag[i], psi_diag[i]), one shared permutation across all fields.
    pub pairs: Vec<(f64, f64)>,
    pub phi_diag: Vec<C64>,
    pub psi_diag: Vec<C64>,
    /// Conditioning warnings (e.g. a direction close to endfire).
    pub notes: Vec<String>,
}

/// The four subarray cross-covariances Σ_k x_a[k] z_b^H[k] for a, b in
/// {leading, trailing}: R1 = x1 z1^H, R2 = x2 z1^H, R3 = x1 z2^H,
/// R4 = x2 z2^H, each (N-1)x(N-1). Subarray 1 drops the last sensor of an
/// axis, subarray 2 drops the first.
pub fn cross_covariances(
    samples: &SampleSet,
) -> Result<(Array2<C64>, Array2<C64>, Array2<C64>, Array2<C64>)> {
    if samples.geometry.kind != ArrayKind::LShape {
        return Err(Error::InvalidConfig(
            "cross-covariances need both axes of an L-shaped array".into(),
        ));
    }
    let z = samples.z.as_ref().ok_or_else(|| {
        Error::InvalidConfig("sample set has no z-axis block".into())
    })?;
    let n = samples.x.nrows();
    if n < 2 {
        return Err(Error::InsufficientSensors {
            needed: 2,
            have: n,
            context: "subarray cross-covariances".into(),
        });
    }
    if z.nrows() != n || z.ncols() != samples.x.ncols() {
        return Err(Error::InvalidConfig(format!(
            "axis blocks disagree: x is {:?}, z is {:?}",
            samples.x.dim(),
            z.dim()
        )));
    }
    let x1 = samples.x.slice(s![..n - 1, ..]);
    let x2 = samples.x.slice(s![1.., ..]);
    let z1 = z.slice(s![..n - 1, ..]);
    let z2 = z.slice(s![1.., ..]);
    Ok((
        x1.dot(&dagger(z1)),
        x2.dot(&dagger(z1)),
        x1.dot(&dagger(z2)),
        x2.dot(&dagger(z2)),
    ))
}

/// Expectation-path oracle for the same four matrices: with x = A_x w and
/// z = A_z w and uncorrelated source amplitudes of variance `power`,
/// E[x_a z_b^H] collapses to A_xa diag(p) A_zb^H. Noise-free and free of
/// finite-snapshot scatter, so estimator identities hold to machine
/// precision on its output.
pub fn exact_cross_covariances(
    scene: &SignalScene,
    geometry: &ArrayGeometry,
) -> Result<(Array2<C64>, Array2<C64>, Array2<C64>, Array2<C64>)> {
    if geometry.kind != ArrayKind::LShape {
        return Err(Error::InvalidConfig(
            "expectation oracle is defined for the L-shaped array".into(),
        ));
    }
    let n = geometry.n_per_axis;
    if n < 2 {
        return Err(Error::InsufficientSensors {
            needed: 2,
            have: n,
            context: "subarray cross-covariances".into(),
        });
    }
    let ax = steering(scene, geometry, Axis::X)?.entries;
    let az = steering(scene, geometry, Axis::Z)?.entries;
    let m = scene.m();
    let scaled = |a: ArrayView2<C64>, b: ArrayView2<C64>| -> Array2<C64> {
        let mut r = Array2::zeros((n - 1, n - 1));
        for i in 0..m {
            let p = scene.transmissions[i].power;
            for row in 0..n - 1 {
                for col in 0..n - 1 {
                    r[(row, col)] += a[(row, i)] * b[(col, i)].conj() * p;
                }
            }
        }
        r
    };
    let r1 = scaled(ax.slice(s![..n - 1, ..]), az.slice(s![..n - 1, ..]));
    let r2 = scaled(ax.slice(s![1.., ..]), az.slice(s![..n - 1, ..]));
    let r3 = scaled(ax.slice(s![..n - 1, ..]), az.slice(s![1.., ..]));
    let r4 = scaled(ax.slice(s![1.., ..]), az.slice(s![1.., ..]));
    Ok((r1, r2, r3, r4))
}

/// Paired two-axis rotational-invariance estimation from the four
/// cross-covariances. Stacks them, extracts the m-dimensional common column
/// space, forms the three shift operators V_i relative to the leading block,
/// and diagonalizes their sum once; the resulting basis exposes the x-axis
/// phases (phi) and z-axis phases (psi) on matching diagonal positions.
pub fn joint_esprit(
    r1: ArrayView2<C64>,
    r2: ArrayView2<C64>,
    r3: ArrayView2<C64>,
    r4: ArrayView2<C64>,
    m: usize,
    d_m: f64,
    wave_speed: f64,
) -> Result<JointEstimate> {
    let n1 = r1.nrows();
    for (name, r) in [("r1", &r1), ("r2", &r2), ("r3", &r3), ("r4", &r4)] {
        if r.nrows() != n1 || r.ncols() != n1 {
            return Err(Error::InvalidConfig(format!(
                "{name} must be {n1}x{n1}, got {:?}",
                r.dim()
            )));
        }
    }
    if m == 0 {
        return Err(Error::InvalidConfig("cannot estimate zero sources".into()));
    }
    if n1 < m + 1 {
        // n1 = N-1 and the theory wants N > M, i.e. n1 >= m; one extra row
        // keeps the leading-block pseudo-inverse overdetermined.
        return Err(Error::InsufficientSensors {
            needed: m + 2,
            have: n1 + 1,
            context: "joint estimation sensors per axis".into(),
        });
    }
    if !(d_m > 0.0) || !(wave_speed > 0.0) {
        return Err(Error::InvalidConfig(
            "spacing and wave speed must be positive".into(),
        ));
    }

    let mut stacked = Array2::zeros((4 * n1, n1));
    for (b, r) in [r1, r2, r3, r4].iter().enumerate() {
        stacked.slice_mut(s![b * n1..(b + 1) * n1, ..]).assign(r);
    }
    let (u, sv, _) = svd_thin(stacked.view())?;
    let rank = numerical_rank(&sv);
    if rank < m {
        return Err(Error::RankDeficient {
            rank,
            needed: m,
            advice: "stacked cross-covariance carries fewer independent sources \
                     than requested; lower m or supply more snapshots"
                .into(),
        });
    }
    let u1 = u.slice(s![.., ..m]);
    let u11 = u1.slice(s![..n1, ..]);
    let (_, sv11, _) = svd_thin(u11)?;
    if numerical_rank(&sv11) < m {
        return Err(Error::RankDeficient {
            rank: numerical_rank(&sv11),
            needed: m,
            advice: "leading signal-subspace block is singular; the common \
                     eigenbasis is not identifiable from these covariances"
                .into(),
        });
    }
    let u11_pinv = pinv(u11)?;
    let v1 = u11_pinv.dot(&u1.slice(s![n1..2 * n1, ..]));
    let v2 = u11_pinv.dot(&u1.slice(s![2 * n1..3 * n1, ..]));
    let v3 = u11_pinv.dot(&u1.slice(s![3 * n1.., ..]));

    let sum = &v1 + &v2 + &v3;
    let (lambda, t) = eig_general(sum.view())?;
    for i in 0..m {
        for j in (i + 1)..m {
            if (lambda[i] - lambda[j]).norm() < EIGEN_COLLISION_TOL {
                return Err(Error::PairingAmbiguity(format!(
                    "eigenvalues {i} and {j} of the pairing target coincide \
                     ({:.3e} apart); positional pairing is undefined",
                    (lambda[i] - lambda[j]).norm()
                )));
            }
        }
    }
    let t_inv = inv(t.view())?;
    let phi_mat = t_inv.dot(&v1).dot(&t);
    let psi_mat = dagger(t_inv.dot(&v2).dot(&t).view());

    let mut entries: Vec<(f64, f64, C64, C64)> = Vec::with_capacity(m);
    let mut notes = Vec::new();
    for i in 0..m {
        let phi = phi_mat[(i, i)];
        let psi = psi_mat[(i, i)];
        let phi_ang = phi.arg();
        let psi_ang = psi.arg();
        // quadrant-aware direction, folded into (-pi/2, pi/2): a negative
        // carrier negates both axis phases, which the fold undoes
        let mut theta = f64::atan2(psi_ang, phi_ang);
        if theta > std::f64::consts::FRAC_PI_2 {
            theta -= std::f64::consts::PI;
        } else if theta <= -std::f64::consts::FRAC_PI_2 {
            theta += std::f64::consts::PI;
        }
        let cos_t = theta.cos();
        if cos_t.abs() < ENDFIRE_COS_TOL {
            notes.push(format!(
                "direction {i} is {:.2e} rad from endfire; carrier estimate \
                 is poorly conditioned",
                std::f64::consts::FRAC_PI_2 - theta.abs()
            ));
        }
        let f = phi_ang * wave_speed / (2.0 * std::f64::consts::PI * d_m * cos_t);
        entries.push((f, theta, phi, psi));
    }
    entries.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(JointEstimate {
        pairs: entries.iter().map(|e| (e.0, e.1)).collect(),
        phi_diag: entries.iter().map(|e| e.2).collect(),
        psi_diag: entries.iter().map(|e| e.3).collect(),
        notes,
    })
}

/// Full matrices behind the positional diagonals, for diagnostics: the same
/// transform as [`joint_esprit`] but returning (estimate, phi_matrix,
/// psi_matrix) so callers can inspect off-diagonal leakage.
#[doc(hidden)]
pub fn joint_esprit_matrices(
    r1: ArrayView2<C64>,
    r2: ArrayView2<C64>,
    r3: ArrayView2<C64>,
    r4: ArrayView2<C64>,
    m: usize,
) -> Result<(Array2<C64>, Array2<C64>)> {
    let n1 = r1.nrows();
    let mut stacked = Array2::zeros((4 * n1, n1));
    for (b, r) in [r1, r2, r3, r4].iter().enumerate() {
        stacked.slice_mut(s![b * n1..(b + 1) * n1, ..]).assign(r);
    }
    let (u, _, _) = svd_thin(stacked.view())?;
    let u1 = u.slice(s![.., ..m]);
    let u11_pinv = pinv(u1.slice(s![..n1, ..]))?;
    let v1 = u11_pinv.dot(&u1.slice(s![n1..2 * n1, ..]));
    let v2 = u11_pinv.dot(&u1.slice(s![2 * n1..3 * n1, ..]));
    let v3 = u11_pinv.dot(&u1.slice(s![3 * n1.., ..]));
    let (_, t) = eig_general((&v1 + &v2 + &v3).view())?;
    let t_inv = inv(t.view())?;
    Ok((
        t_inv.dot(&v1).dot(&t),
        dagger(t_inv.dot(&v2).dot(&t).view()),
    ))
}
