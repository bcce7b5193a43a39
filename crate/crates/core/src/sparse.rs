//! Grid-based compressed-sensing recovery: dictionaries of steering atoms on
//! a frequency grid, reduction of the infinite-measurement system to a finite
//! one through a covariance frame, and greedy support pursuit (multi- and
//! single-measurement variants), including the Khatri-Rao lifting that turns
//! one covariance into a tall single-measurement system.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};
use crate::esprit::CovarianceMatrix;
use crate::frontend::{delay, Axis};
use crate::linalg::{cis, dagger, eigh_desc, pinv, C64, RANK_RTOL};

/// Parameter(s) of one dictionary column.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GridAtom {
    /// Electronic frequency of a single-axis atom (a carrier, given the
    /// axis direction is known).
    Frequency(f64),
    /// Electronic-angle pair (alpha, beta) = (f cos theta, f sin theta) of a
    /// two-axis atom.
    Pair { alpha: f64, beta: f64 },
}

#[derive(Clone, Debug)]
pub struct Dictionary {
    /// Rows = stacked sensors, columns = grid atoms; unit-modulus entries.
    pub g: Array2<C64>,
    pub grid_delta: f64,
    /// Per-column parameters, same order as columns.
    pub atoms: Vec<GridAtom>,
}

impl Dictionary {
    pub fn validate(&self) -> Result<()> {
        if self.g.ncols() != self.atoms.len() {
            return Err(Error::InvalidConfig(format!(
                "{} columns vs {} atom labels",
                self.g.ncols(),
                self.atoms.len()
            )));
        }
        if self.g.iter().any(|z| (z.norm() - 1.0).abs() > 1e-12) {
            return Err(Error::InvalidConfig(
                "dictionary entries must be unit modulus".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SupportEstimate {
    /// Strictly increasing column indices.
    pub indices: Vec<usize>,
    pub residual_norm: f64,
}

/// Single-axis dictionary: column l holds the steering vector of a source at
/// carrier l·delta arriving from the known direction theta.
pub fn build_grid_1d(
    n_sensors: usize,
    delta_hz: f64,
    f_nyq_hz: f64,
    d_m: f64,
    wave_speed: f64,
    theta_rad: f64,
) -> Result<Dictionary> {
    if !(delta_hz > 0.0) {
        return Err(Error::InvalidConfig("grid spacing must be positive".into()));
    }
    let l_half = (f_nyq_hz / (2.0 * delta_hz)).ceil() as i64;
    let n_atoms = (2 * l_half + 1) as usize;
    let mut g = Array2::zeros((n_sensors, n_atoms));
    let mut atoms = Vec::with_capacity(n_atoms);
    for (col, l) in (-l_half..=l_half).enumerate() {
        let f = l as f64 * delta_hz;
        for row in 0..n_sensors {
            let tau = delay(row, d_m, theta_rad, wave_speed, Axis::X);
            g[(row, col)] = cis(2.0 * std::f64::consts::PI * f * tau);
        }
        atoms.push(GridAtom::Frequency(f));
    }
    Ok(Dictionary {
        g,
        grid_delta: delta_hz,
        atoms,
    })
}

/// Two-axis dictionary over the electronic-angle plane: rows are the stacked
/// L-shaped sensors (x axis, then z axis without its origin row), columns are
/// all (alpha, beta) = (l1·delta, l2·delta) pairs that stay inside the
/// half-Nyquist disc `alpha² + beta² <= (f_nyq/2)²`.
pub fn build_grid_joint(
    n_per_axis: usize,
    delta_hz: f64,
    f_nyq_hz: f64,
    d_m: f64,
    wave_speed: f64,
) -> Result<Dictionary> {
    if !(delta_hz > 0.0) {
        return Err(Error::InvalidConfig("grid spacing must be positive".into()));
    }
    if n_per_axis < 2 {
        return Err(Error::InsufficientSensors {
            needed: 2,
            have: n_per_axis,
            context: "two-axis grid needs at least two sensors per axis".into(),
        });
    }
    let l_half = (f_nyq_hz / (2.0 * delta_hz)).ceil() as i64;
    let rows = 2 * n_per_axis - 1;
    let limit = (f_nyq_hz / 2.0) * (f_nyq_hz / 2.0);
    let mut cols: Vec<(f64, f64)> = Vec::new();
    for l2 in -l_half..=l_half {
        for l1 in -l_half..=l_half {
            let alpha = l1 as f64 * delta_hz;
            let beta = l2 as f64 * delta_hz;
            if alpha * alpha + beta * beta <= limit {
                cols.push((alpha, beta));
            }
        }
    }
    let mut g = Array2::zeros((rows, cols.len()));
    for (col, &(alpha, beta)) in cols.iter().enumerate() {
        for r in 0..rows {
            // rows 0..N-1 sit on the x axis (phase from alpha); rows N..
            // continue the z axis from its second sensor (phase from beta).
            let phase = if r < n_per_axis {
                2.0 * std::f64::consts::PI * alpha * d_m * r as f64 / wave_speed
            } else {
                let nz = r - n_per_axis + 1;
                2.0 * std::f64::consts::PI * beta * d_m * nz as f64 / wave_speed
            };
            g[(r, col)] = cis(phase);
        }
    }
    Ok(Dictionary {
        g,
        grid_delta: delta_hz,
        atoms: cols
            .into_iter()
            .map(|(alpha, beta)| GridAtom::Pair { alpha, beta })
            .collect(),
    })
}

/// Invert an electronic-angle pair back to (carrier, direction).
pub fn atom_to_carrier_aoa(alpha: f64, beta: f64) -> (f64, f64) {
    let mag = alpha.hypot(beta);
    if mag == 0.0 {
        return (0.0, 0.0);
    }
    (alpha.signum() * mag, (beta / alpha).atan())
}

/// Frame V with V V^H = R, from the eigenpairs carrying non-negligible
/// energy (lambda > 1e-8 lambda_max). A zero covariance yields a frame with
/// zero columns: no active transmissions.
pub fn ctf_frame(r: &CovarianceMatrix) -> Result<Array2<C64>> {
    let n = r.dim();
    let (vals, vecs) = eigh_desc(r.r.view())?;
    let max = vals.first().copied().unwrap_or(0.0);
    if !(max > 0.0) {
        return Ok(Array2::zeros((n, 0)));
    }
    let keep = vals.iter().take_while(|&&v| v > RANK_RTOL * max).count();
    let mut v = Array2::zeros((n, keep));
    for j in 0..keep {
        let scale = vals[j].sqrt();
        for i in 0..n {
            v[(i, j)] = vecs[(i, j)] * scale;
        }
    }
    Ok(v)
}

fn frob(m: ArrayView2<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Greedy simultaneous pursuit over the columns of `v`: each round selects
/// the atom with the largest summed squared correlation against the residual
/// (ties to the lowest index), then re-projects `v` off the selected span.
/// Stops after `m` atoms or when the residual drops below 1e-6 of the input.
pub fn somp(v: ArrayView2<C64>, dict: &Dictionary, m: usize) -> Result<SupportEstimate> {
    let n_atoms = dict.g.ncols();
    if m > n_atoms {
        return Err(Error::InvalidConfig(format!(
            "cannot select {m} atoms from {n_atoms}"
        )));
    }
    if dict.g.nrows() != v.nrows() {
        return Err(Error::InvalidConfig(format!(
            "frame has {} rows, dictionary {}",
            v.nrows(),
            dict.g.nrows()
        )));
    }
    let input_norm = frob(v);
    let mut selected: Vec<usize> = Vec::new();
    let mut residual = v.to_owned();
    for _ in 0..m {
        if frob(residual.view()) <= 1e-6 * input_norm {
            break;
        }
        let corr = dagger(dict.g.view()).dot(&residual);
        let mut best = (f64::NEG_INFINITY, 0usize);
        for j in 0..n_atoms {
            if selected.contains(&j) {
                continue;
            }
            let score: f64 = corr.row(j).iter().map(|z| z.norm_sqr()).sum();
            if score > best.0 {
                best = (score, j);
            }
        }
        selected.push(best.1);
        let mut gs = Array2::zeros((v.nrows(), selected.len()));
        for (k, &j) in selected.iter().enumerate() {
            gs.column_mut(k).assign(&dict.g.column(j));
        }
        let coef = pinv(gs.view())?.dot(&v);
        residual = &v - &gs.dot(&coef);
    }
    selected.sort_unstable();
    Ok(SupportEstimate {
        indices: selected,
        residual_norm: frob(residual.view()),
    })
}

/// Single-measurement greedy pursuit; same selection and stop rules as
/// [`somp`] with one column.
pub fn omp(
    measurement: ArrayView1<C64>,
    dictionary: ArrayView2<C64>,
    m: usize,
) -> Result<SupportEstimate> {
    let v = measurement.insert_axis(ndarray::Axis(1));
    let dict = Dictionary {
        g: dictionary.to_owned(),
        grid_delta: 0.0,
        atoms: vec![GridAtom::Frequency(0.0); dictionary.ncols()],
    };
    somp(v, &dict, m)
}

/// Lift a stacked two-axis covariance into a single tall measurement:
/// column-major vec(R) paired with the column-wise Khatri-Rao dictionary
/// (conj(g_j) ⊗ g_j per atom), so a diagonal source covariance turns into a
/// sparse nonnegative vector on the grid.
pub fn krao_model(
    r: &CovarianceMatrix,
    dict_joint: &Dictionary,
) -> Result<(Array1<C64>, Array2<C64>)> {
    let n = r.dim();
    if dict_joint.g.nrows() != n {
        return Err(Error::InvalidConfig(format!(
            "covariance is {n}x{n} but dictionary has {} rows",
            dict_joint.g.nrows()
        )));
    }
    let mut vec_r = Array1::zeros(n * n);
    for a in 0..n {
        for b in 0..n {
            vec_r[a * n + b] = r.r[(b, a)];
        }
    }
    let n_atoms = dict_joint.g.ncols();
    let mut kr = Array2::zeros((n * n, n_atoms));
    for j in 0..n_atoms {
        let col = dict_joint.g.column(j);
        for a in 0..n {
            let ca = col[a].conj();
            for b in 0..n {
                kr[(a * n + b, j)] = ca * col[b];
            }
        }
    }
    Ok((vec_r, kr))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::esprit::covariance;
    use crate::frontend::{steering, SampleSet};
    use crate::linalg::numerical_rank;
    use crate::model::{ArrayGeometry, ModelClass, SignalScene, Transmission};

    const F_NYQ: f64 = 1e9;
    const C: f64 = 3e8;

    fn scene_at(carriers: &[f64], theta: f64) -> SignalScene {
        SignalScene {
            transmissions: carriers
                .iter()
                .enumerate()
                .map(|(i, &f)| Transmission {
                    carrier_hz: f,
                    aoa_rad: theta,
                    bandwidth_hz: 10e6,
                    power: 1.0,
                    baseband_seed: i as u64,
                })
                .collect(),
            f_nyq_hz: F_NYQ,
            b_hz: 10e6,
            model: ModelClass::SharedAoa { theta_rad: theta },
        }
    }

    fn cov_of(x: Array2<C64>, n: usize) -> CovarianceMatrix {
        let set = SampleSet {
            x,
            z: None,
            f_s_hz: 65e6,
            geometry: ArrayGeometry::ula(n, 0.15),
        };
        covariance(&set)
    }

    #[test]
    fn zero_frequency_atom_is_all_ones() {
        let dict = build_grid_1d(5, 65e6 / 4.0, F_NYQ, 0.15, C, 0.3).unwrap();
        dict.validate().unwrap();
        let mid = dict.g.ncols() / 2;
        assert_eq!(dict.atoms[mid], GridAtom::Frequency(0.0));
        assert!(dict.g.column(mid).iter().all(|&v| v == C64::new(1.0, 0.0)));
    }

    #[test]
    fn on_grid_atom_equals_steering_column() {
        let delta = 65e6;
        let theta = 0.25;
        let f = 3.0 * delta;
        let scene = scene_at(&[f], theta);
        let geom = ArrayGeometry::ula(6, 0.15);
        let a = steering(&scene, &geom, Axis::X).unwrap().entries;
        let dict = build_grid_1d(6, delta, F_NYQ, 0.15, C, theta).unwrap();
        let col = dict
            .atoms
            .iter()
            .position(|&at| at == GridAtom::Frequency(f))
            .unwrap();
        for r in 0..6 {
            assert!((dict.g[(r, col)] - a[(r, 0)]).norm() < 1e-12);
        }
    }

    #[test]
    fn random_column_subsets_stay_nonsingular() {
        let dict = build_grid_1d(4, F_NYQ / 8.0, F_NYQ, 0.2, C, 0.0).unwrap();
        let n_atoms = dict.g.ncols();
        let mut pick = 0usize;
        for trial in 0..100 {
            // cheap deterministic subset enumeration
            let cols: Vec<usize> = (0..4)
                .map(|i| {
                    pick = (pick * 31 + trial * 17 + i * 7 + 3) % n_atoms;
                    pick
                })
                .collect();
            let mut dedup = cols.clone();
            dedup.sort_unstable();
            dedup.dedup();
            if dedup.len() < 4 {
                continue;
            }
            let mut sub = Array2::zeros((4, 4));
            for (k, &j) in dedup.iter().enumerate() {
                sub.column_mut(k).assign(&dict.g.column(j));
            }
            let (_, sv, _) = crate::linalg::svd_thin(sub.view()).unwrap();
            assert!(
                sv[3] > 1e-10 * sv[0],
                "singular 4x4 subset {dedup:?} at trial {trial}"
            );
        }
    }

    #[test]
    fn ctf_frame_of_identity_is_orthonormal() {
        let r = CovarianceMatrix {
            r: Array2::eye(3),
            n_snapshots: 1,
        };
        let v = ctf_frame(&r).unwrap();
        assert_eq!(v.ncols(), 3);
        let vvh = v.dot(&dagger(v.view()));
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((vvh[(i, j)] - C64::new(want, 0.0)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn ctf_frame_tracks_rank_and_energy() {
        let theta = 0.2;
        let scene = scene_at(&[130e6, -260e6], theta);
        let geom = ArrayGeometry::ula(5, 0.15);
        let a = steering(&scene, &geom, Axis::X).unwrap().entries;
        // uncorrelated powers 2 and 3
        let mut r = Array2::zeros((5, 5));
        for (i, p) in [2.0, 3.0].iter().enumerate() {
            let col = a.column(i);
            for x in 0..5 {
                for y in 0..5 {
                    r[(x, y)] += col[x] * col[y].conj() * *p;
                }
            }
        }
        let cov = CovarianceMatrix { r: r.clone(), n_snapshots: 1 };
        let v = ctf_frame(&cov).unwrap();
        assert_eq!(v.ncols(), 2);
        let diff = &r - &v.dot(&dagger(v.view()));
        assert!(frob(diff.view()) <= 1e-8 * frob(r.view()));
    }

    #[test]
    fn ctf_frame_of_zero_is_empty() {
        let r = CovarianceMatrix {
            r: Array2::zeros((4, 4)),
            n_snapshots: 2,
        };
        assert_eq!(ctf_frame(&r).unwrap().ncols(), 0);
    }

    #[test]
    fn somp_zero_iterations_reports_input_energy() {
        let dict = build_grid_1d(3, 65e6, F_NYQ, 0.15, C, 0.0).unwrap();
        let v = Array2::from_elem((3, 2), C64::new(1.0, -1.0));
        let est = somp(v.view(), &dict, 0).unwrap();
        assert!(est.indices.is_empty());
        assert!((est.residual_norm - frob(v.view())).abs() < 1e-12);
    }

    #[test]
    fn somp_recovers_on_grid_support() {
        let delta = 65e6;
        let theta = 0.3;
        // spread the sources across the grid: greedy pursuit needs the
        // support atoms to stay far from mutual coherence
        let carriers = [-7.0 * delta, 1.0 * delta, 7.0 * delta];
        let scene = scene_at(&carriers, theta);
        let geom = ArrayGeometry::ula(6, 0.29);
        let a = steering(&scene, &geom, Axis::X).unwrap().entries;
        // independent amplitude rows: rank-3 mixture
        let w = Array2::from_shape_fn((3, 16), |(i, k)| {
            C64::new((1 + i + k) as f64, (i * k) as f64 % 5.0 - 2.0)
        });
        let x = a.dot(&w);
        let cov = cov_of(x, 6);
        let v = ctf_frame(&cov).unwrap();
        assert_eq!(v.ncols(), 3);
        let dict = build_grid_1d(6, delta, F_NYQ, 0.29, C, theta).unwrap();
        let est = somp(v.view(), &dict, 3).unwrap();
        let mut want: Vec<usize> = carriers
            .iter()
            .map(|&f| {
                dict.atoms
                    .iter()
                    .position(|&at| at == GridAtom::Frequency(f))
                    .unwrap()
            })
            .collect();
        want.sort_unstable();
        assert_eq!(est.indices, want);
        assert!(est.residual_norm <= 1e-6 * frob(v.view()));
    }

    #[test]
    fn somp_breaks_ties_toward_lower_index() {
        // two identical atoms: scores tie exactly, index 0 must win
        let g = Array2::from_elem((2, 2), C64::new(1.0, 0.0));
        let dict = Dictionary {
            g,
            grid_delta: 1.0,
            atoms: vec![GridAtom::Frequency(0.0), GridAtom::Frequency(1.0)],
        };
        let v = Array2::from_elem((2, 1), C64::new(1.0, 0.0));
        let est = somp(v.view(), &dict, 1).unwrap();
        assert_eq!(est.indices, vec![0]);
    }

    #[test]
    fn somp_rejects_oversized_request() {
        let dict = build_grid_1d(3, 65e6, F_NYQ, 0.15, C, 0.0).unwrap();
        let v = Array2::zeros((3, 1));
        assert!(somp(v.view(), &dict, dict.g.ncols() + 1).is_err());
    }

    /// Brute-force sparsest-solution oracle: which 2-column supports can
    /// reproduce the measurement exactly?
    fn feasible_pairs(v: ArrayView2<C64>, dict: &Dictionary) -> Vec<(usize, usize)> {
        let n_atoms = dict.g.ncols();
        let mut out = Vec::new();
        for i in 0..n_atoms {
            for j in (i + 1)..n_atoms {
                let mut gs = Array2::zeros((dict.g.nrows(), 2));
                gs.column_mut(0).assign(&dict.g.column(i));
                gs.column_mut(1).assign(&dict.g.column(j));
                let coef = pinv(gs.view()).unwrap().dot(&v);
                let res = &v - &gs.dot(&coef);
                if frob(res.view()) <= 1e-8 * frob(v).max(1e-300) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    #[test]
    fn rank_preserving_mixture_identifiable_with_m_plus_one_sensors() {
        let delta = F_NYQ / 16.0;
        let dict = build_grid_1d(3, delta, F_NYQ, 0.2, C, 0.0).unwrap();
        assert_eq!(dict.g.ncols(), 17);
        let (i, j) = (3, 10);
        let mut gs = Array2::zeros((3, 2));
        gs.column_mut(0).assign(&dict.g.column(i));
        gs.column_mut(1).assign(&dict.g.column(j));
        // rank-2 amplitudes: identifiable at N = M+1 = 3
        let w = ndarray::array![
            [C64::new(1.0, 0.0), C64::new(0.2, 1.0)],
            [C64::new(-0.5, 0.3), C64::new(1.0, -1.0)]
        ];
        let v = gs.dot(&w);
        let feas = feasible_pairs(v.view(), &dict);
        assert_eq!(feas, vec![(i, j)], "support must be unique");
    }

    #[test]
    fn coherent_mixture_needs_twice_the_sensors() {
        let delta = F_NYQ / 16.0;

        // N = 4 >= 2M: every rank-1 two-atom mixture is identifiable
        let dict4 = build_grid_1d(4, delta, F_NYQ, 0.2, C, 0.0).unwrap();
        let mut gs = Array2::zeros((4, 2));
        gs.column_mut(0).assign(&dict4.g.column(3));
        gs.column_mut(1).assign(&dict4.g.column(10));
        let w = ndarray::array![[C64::new(1.0, 0.0)], [C64::new(0.8, -0.6)]];
        let v = gs.dot(&w);
        let feas = feasible_pairs(v.view(), &dict4);
        assert_eq!(feas, vec![(3, 10)], "N=4 must identify the support");

        // N = 3 < 2M: four columns are dependent, so a null combination
        // splits one measurement across two different two-atom supports
        let dict3 = build_grid_1d(3, delta, F_NYQ, 0.2, C, 0.0).unwrap();
        let cols = [3usize, 10, 0, 6];
        let mut a3 = Array2::zeros((3, 3));
        for (k, &j) in cols[..3].iter().enumerate() {
            a3.column_mut(k).assign(&dict3.g.column(j));
        }
        let rhs = dict3
            .g
            .column(cols[3])
            .mapv(|z| -z)
            .insert_axis(ndarray::Axis(1));
        let coef = crate::linalg::inv(a3.view()).unwrap().dot(&rhs);
        // all null-vector entries active, else the split is not two 2-sparse sets
        for k in 0..3 {
            assert!(coef[(k, 0)].norm() > 1e-6);
        }
        let mut v3 = Array2::zeros((3, 1));
        for r in 0..3 {
            v3[(r, 0)] = coef[(0, 0)] * dict3.g[(r, 3)] + coef[(1, 0)] * dict3.g[(r, 10)];
        }
        let feas3 = feasible_pairs(v3.view(), &dict3);
        assert!(feas3.contains(&(3, 10)));
        assert!(feas3.contains(&(0, 6)), "null split should be feasible");
        assert!(feas3.len() > 1, "N=3 must be ambiguous, got {feas3:?}");
    }

    #[test]
    fn one_dimensional_spark_is_sensor_count_plus_one() {
        let dict = build_grid_1d(3, F_NYQ / 4.0, F_NYQ, 0.2, C, 0.0).unwrap();
        let n_atoms = dict.g.ncols();
        // every subset of size <= 3 independent => spark = 4 = N+1
        let mut subsets: Vec<Vec<usize>> = Vec::new();
        for i in 0..n_atoms {
            for j in (i + 1)..n_atoms {
                subsets.push(vec![i, j]);
                for k in (j + 1)..n_atoms {
                    subsets.push(vec![i, j, k]);
                }
            }
        }
        for cols in subsets {
            let mut sub = Array2::zeros((3, cols.len()));
            for (k, &j) in cols.iter().enumerate() {
                sub.column_mut(k).assign(&dict.g.column(j));
            }
            let (_, sv, _) = crate::linalg::svd_thin(sub.view()).unwrap();
            assert_eq!(numerical_rank(&sv), cols.len(), "dependent subset {cols:?}");
        }
    }

    #[test]
    fn joint_grid_prunes_atoms_beyond_nyquist_disc() {
        let delta = F_NYQ / 2.0;
        let dict = build_grid_joint(3, delta, F_NYQ, 0.2, C).unwrap();
        dict.validate().unwrap();
        assert_eq!(dict.g.nrows(), 5);
        // side 3 grid has 9 atoms; the 4 corners lie outside the disc
        assert_eq!(dict.atoms.len(), 5);
        for atom in &dict.atoms {
            let GridAtom::Pair { alpha, beta } = *atom else {
                panic!("joint grid must label atoms with pairs")
            };
            assert!(alpha * alpha + beta * beta <= (F_NYQ / 2.0).powi(2) + 1.0);
        }
    }

    #[test]
    fn atom_inversion_round_trips() {
        for &(f, th) in &[
            (3.2e8, 0.4),
            (-2.5e8, -0.7),
            (1.0e8, 0.0),
            (-4.0e8, 1.2),
        ] {
            let (alpha, beta) = (f * f64::cos(th), f * f64::sin(th));
            let (f2, th2) = atom_to_carrier_aoa(alpha, beta);
            assert!((f2 - f).abs() < 1e-6);
            assert!((th2 - th).abs() < 1e-12);
        }
        assert_eq!(atom_to_carrier_aoa(0.0, 0.0), (0.0, 0.0));
    }

    #[test]
    fn krao_identity_on_synthetic_sparse_covariance() {
        let delta = F_NYQ / 8.0;
        let dict = build_grid_joint(4, delta, F_NYQ, 0.2, C).unwrap();
        let n = dict.g.nrows();
        let support = [5usize, 20, 33];
        let powers = [2.0, 0.7, 1.3];
        let mut r = Array2::zeros((n, n));
        for (&j, &p) in support.iter().zip(&powers) {
            let col = dict.g.column(j);
            for a in 0..n {
                for b in 0..n {
                    r[(a, b)] += col[a] * col[b].conj() * p;
                }
            }
        }
        let cov = CovarianceMatrix { r, n_snapshots: 1 };
        let (vec_r, kr) = krao_model(&cov, &dict).unwrap();
        assert_eq!(vec_r.len(), n * n);
        assert_eq!(kr.dim(), (n * n, dict.g.ncols()));
        let mut want: Array1<C64> = Array1::zeros(n * n);
        for (&j, &p) in support.iter().zip(&powers) {
            for i in 0..n * n {
                want[i] += kr[(i, j)] * p;
            }
        }
        for i in 0..n * n {
            assert!((vec_r[i] - want[i]).norm() < 1e-12);
        }
        // greedy recovery lands on the exact support
        let est = omp(vec_r.view(), kr.view(), 3).unwrap();
        assert_eq!(est.indices, support.to_vec());
        assert!(est.residual_norm < 1e-8 * frob(vec_r.view().insert_axis(ndarray::Axis(1))));
    }

    #[test]
    fn krao_single_source_selects_its_atom_first() {
        let delta = F_NYQ / 8.0;
        let dict = build_grid_joint(3, delta, F_NYQ, 0.2, C).unwrap();
        let j = 17usize.min(dict.g.ncols() - 1);
        let n = dict.g.nrows();
        let col = dict.g.column(j);
        let mut r = Array2::zeros((n, n));
        for a in 0..n {
            for b in 0..n {
                r[(a, b)] = col[a] * col[b].conj() * 1.7;
            }
        }
        let cov = CovarianceMatrix { r, n_snapshots: 1 };
        let (vec_r, kr) = krao_model(&cov, &dict).unwrap();
        let est = omp(vec_r.view(), kr.view(), 1).unwrap();
        assert_eq!(est.indices, vec![j]);
    }

    #[test]
    fn krao_of_zero_covariance_recovers_nothing() {
        let dict = build_grid_joint(3, F_NYQ / 4.0, F_NYQ, 0.2, C).unwrap();
        let cov = CovarianceMatrix {
            r: Array2::zeros((5, 5)),
            n_snapshots: 1,
        };
        let (vec_r, kr) = krao_model(&cov, &dict).unwrap();
        assert!(vec_r.iter().all(|&v| v == C64::new(0.0, 0.0)));
        let est = omp(vec_r.view(), kr.view(), 2).unwrap();
        assert!(est.indices.is_empty());
    }

    #[test]
    fn krao_spark_bound_holds_on_tiny_grid() {
        let dict = build_grid_joint(3, F_NYQ / 2.0, F_NYQ, 0.2, C).unwrap();
        let n_atoms = dict.g.ncols();
        assert_eq!(n_atoms, 5);
        let cov = CovarianceMatrix {
            r: Array2::eye(dict.g.nrows()),
            n_snapshots: 1,
        };
        let (_, kr) = krao_model(&cov, &dict).unwrap();

        fn subsets_of(n: usize, k: usize) -> Vec<Vec<usize>> {
            fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
                if cur.len() == k {
                    out.push(cur.clone());
                    return;
                }
                for i in start..n {
                    cur.push(i);
                    rec(i + 1, n, k, cur, out);
                    cur.pop();
                }
            }
            let mut out = Vec::new();
            rec(0, n, k, &mut Vec::new(), &mut out);
            out
        }
        let spark_of = |m: &Array2<C64>| -> usize {
            // smallest dependent column subset; columns here are few enough
            // for exhaustive search
            let cols = m.ncols();
            for size in 2..=cols {
                for idx in subsets_of(cols, size) {
                    let mut sub = Array2::zeros((m.nrows(), size));
                    for (k, &j) in idx.iter().enumerate() {
                        sub.column_mut(k).assign(&m.column(j));
                    }
                    let (_, sv, _) = crate::linalg::svd_thin(sub.view()).unwrap();
                    if numerical_rank(&sv) < size {
                        return size;
                    }
                }
            }
            cols + 1
        };
        let spark_g = spark_of(&dict.g);
        let spark_kr = spark_of(&kr);
        let bound = (2 * (spark_g - 1)).min(n_atoms + 1);
        assert!(
            spark_kr >= bound,
            "spark(kr) = {spark_kr} below bound {bound} (spark(g) = {spark_g})"
        );
    }
}
