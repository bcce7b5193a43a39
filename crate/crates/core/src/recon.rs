//! Signal reconstruction from recovered parameters and the error metrics of
//! the experiment figures.
//!
//! The chain is: invert the steering mixture per snapshot to get each
//! transmission's folded low-rate stream, unfold that stream's spectrum back
//! to baseband using the known mixing weights, then remodulate everything
//! onto a common Nyquist-rate grid. Truth is synthesized on the same grid
//! from the scene's own tone coefficients, so the error metric carries no
//! interpolation artifacts.

use std::io::Write as _;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::esprit::covariance;
use crate::frontend::{
    delay, fourier_coeffs, landing_alias, Axis, FrontEndConfig, SampleSet,
};
use crate::linalg::{cis, numerical_rank, pinv, svd_thin, C64};
use crate::model::{baseband_bins, ArrayGeometry, ArrayKind, ModelClass, SignalScene};
use crate::sparse::{ctf_frame, somp, Dictionary, GridAtom};

/// Mixing weights smaller than this (relative to the largest) count as zero,
/// i.e. the corresponding spectral bin is unrecoverable.
const ZERO_WEIGHT_RTOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Metrics {
    /// `|u - u_hat|^2 / len(u)` on the Nyquist grid; NaN when no signal
    /// reconstruction was attempted.
    pub mse_norm: f64,
    /// Mean matched carrier offset as a fraction of the Nyquist rate, in
    /// [0, 1]; unmatched truths count 1 each.
    pub carrier_err: f64,
    /// Mean matched direction offset as a fraction of 180 degrees, in
    /// [0, 1]; NaN when directions were not estimated.
    pub aoa_err: f64,
}

#[derive(Clone, Debug)]
pub struct Reconstruction {
    /// Per-transmission folded low-rate streams, one row each.
    pub w_hat: Array2<C64>,
    /// Unfolded baseband series, one per recovered transmission.
    pub s_hat: Vec<Vec<C64>>,
    /// Reassembled signal on the Nyquist grid.
    pub u_hat: Vec<C64>,
    pub metrics: Metrics,
}

impl Reconstruction {
    /// Raw little-endian f64 re/im pairs — w_hat rows, then each s_hat, then
    /// u_hat — plus a JSON sidecar `<path>.json` describing the layout.
    pub fn export(&self, path: &Path) -> Result<()> {
        let mut raw = Vec::new();
        let mut push = |v: &C64| {
            raw.extend_from_slice(&v.re.to_le_bytes());
            raw.extend_from_slice(&v.im.to_le_bytes());
        };
        for v in self.w_hat.iter() {
            push(v);
        }
        for s in &self.s_hat {
            for v in s {
                push(v);
            }
        }
        for v in &self.u_hat {
            push(v);
        }
        std::fs::write(path, &raw)?;
        let sidecar = serde_json::json!({
            "m": self.w_hat.nrows(),
            "q": self.w_hat.ncols(),
            "n_out": self.u_hat.len(),
            "mse_norm": self.metrics.mse_norm,
            "carrier_err": self.metrics.carrier_err,
            "aoa_err": self.metrics.aoa_err,
        });
        let mut f = std::fs::File::create(path.with_extension("json"))?;
        writeln!(f, "{}", serde_json::to_string_pretty(&sidecar)?)?;
        Ok(())
    }
}

fn signed_bin(slot: usize, q: usize) -> i64 {
    let half = (q as i64 - 1) / 2;
    if slot as i64 <= half {
        slot as i64
    } else {
        slot as i64 - q as i64
    }
}

/// Length of the Nyquist-rate grid spanning the same duration as `q`
/// low-rate snapshots.
pub fn nyquist_len(q: usize, f_s_hz: f64, f_nyq_hz: f64) -> usize {
    (q as f64 * f_nyq_hz / f_s_hz).floor() as usize
}

/// Per-snapshot least-squares inversion of the steering mixture built from
/// recovered parameters: w_hat[k] = A^+ y[k], where y stacks both axes for
/// the L-shaped array.
pub fn invert_steering(
    samples: &SampleSet,
    carriers_hz: &[f64],
    aoas_rad: &[f64],
    geometry: &ArrayGeometry,
) -> Result<Array2<C64>> {
    if carriers_hz.len() != aoas_rad.len() {
        return Err(Error::InvalidConfig(format!(
            "{} carriers vs {} directions",
            carriers_hz.len(),
            aoas_rad.len()
        )));
    }
    let m = carriers_hz.len();
    let q = samples.x.ncols();
    if m == 0 {
        return Ok(Array2::zeros((0, q)));
    }
    let n = geometry.n_per_axis;
    let (meas, cap) = match geometry.kind {
        ArrayKind::Ula => {
            if samples.x.nrows() != n {
                return Err(Error::InvalidConfig(format!(
                    "geometry says {n} sensors, samples carry {}",
                    samples.x.nrows()
                )));
            }
            (samples.x.clone(), n)
        }
        ArrayKind::LShape => {
            let z = samples.z.as_ref().ok_or_else(|| {
                Error::InvalidConfig("L-shaped inversion needs the z-axis block".into())
            })?;
            if samples.x.nrows() != n || z.nrows() != n {
                return Err(Error::InvalidConfig(
                    "axis blocks do not match the geometry".into(),
                ));
            }
            let mut stacked = Array2::zeros((2 * n, q));
            stacked.slice_mut(ndarray::s![..n, ..]).assign(&samples.x);
            stacked.slice_mut(ndarray::s![n.., ..]).assign(z);
            (stacked, 2 * n - 1)
        }
        ArrayKind::MwcSingleSensor => {
            return Err(Error::InvalidConfig(
                "steering inversion is undefined for a single-sensor front end".into(),
            ))
        }
    };
    if m > cap {
        return Err(Error::InsufficientSensors {
            needed: m,
            have: cap,
            context: "steering inversion".into(),
        });
    }
    let rows = meas.nrows();
    let mut a = Array2::zeros((rows, m));
    for i in 0..m {
        let f = carriers_hz[i];
        let th = aoas_rad[i];
        for r in 0..rows {
            let tau = if r < n {
                delay(r, geometry.spacing_m, th, geometry.wave_speed, Axis::X)
            } else {
                delay(r - n, geometry.spacing_m, th, geometry.wave_speed, Axis::Z)
            };
            a[(r, i)] = cis(2.0 * std::f64::consts::PI * f * tau);
        }
    }
    let (_, sv, _) = svd_thin(a.view())?;
    let rank = numerical_rank(&sv);
    if rank < m {
        // name the parameter pairs whose steering columns collapsed
        let mut close = Vec::new();
        for i in 0..m {
            for j in (i + 1)..m {
                let dot: C64 = (0..rows).map(|r| a[(r, i)].conj() * a[(r, j)]).sum();
                if dot.norm() / rows as f64 > 1.0 - 1e-8 {
                    close.push(format!("({i}, {j})"));
                }
            }
        }
        let advice = if close.is_empty() {
            "recovered parameters yield a rank-deficient steering matrix".to_string()
        } else {
            format!("nearly collinear parameter pairs: {}", close.join(", "))
        };
        return Err(Error::RankDeficient {
            rank,
            needed: m,
            advice,
        });
    }
    Ok(pinv(a.view())?.dot(&meas))
}

/// Undo the spectral folding of one recovered stream: demodulate by the
/// recovered carrier (which parks every alias line exactly on the DFT grid),
/// divide each bin by the mixing weight of the alias shift that produced it,
/// and return to time. Requires the sampling and mixing rates to coincide so
/// that bins and alias slots are in bijection.
pub fn unfold_spectrum(
    w_hat_row: &[C64],
    f_i_hz: f64,
    cfg: &FrontEndConfig,
) -> Result<Vec<C64>> {
    if (cfg.f_s_hz - cfg.f_p_hz).abs() > 1e-9 * cfg.f_p_hz {
        return Err(Error::InvalidConfig(format!(
            "spectrum unfolding requires f_s = f_p (got f_s = {}, f_p = {})",
            cfg.f_s_hz, cfg.f_p_hz
        )));
    }
    let q = w_hat_row.len();
    if q == 0 {
        return Ok(Vec::new());
    }
    let delta_f = cfg.f_s_hz / q as f64;
    let t_s = 1.0 / cfg.f_s_hz;
    let coeffs = fourier_coeffs(&cfg.channel_mixing(0)?, cfg.l0);
    let c_max = coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);

    let mut buf: Vec<C64> = w_hat_row
        .iter()
        .enumerate()
        .map(|(k, &w)| {
            w * cis(-2.0 * std::f64::consts::PI * f_i_hz * k as f64 * t_s)
        })
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(q).process(&mut buf);

    for slot in 0..q {
        let nu = f_i_hz + signed_bin(slot, q) as f64 * delta_f;
        let l_a = landing_alias(nu, cfg.f_p_hz);
        let c = if l_a.abs() <= cfg.l0 {
            coeffs[(l_a + cfg.l0) as usize]
        } else {
            C64::new(0.0, 0.0)
        };
        if c.norm() <= ZERO_WEIGHT_RTOL * c_max {
            return Err(Error::InvalidConfig(format!(
                "bin at {nu:.3e} Hz lands on alias shift {l_a} whose mixing \
                 weight is zero; that bin is unrecoverable"
            )));
        }
        buf[slot] = buf[slot] / (c * q as f64);
    }
    planner.plan_fft_inverse(q).process(&mut buf);
    Ok(buf)
}

/// Remodulate recovered baseband series onto the Nyquist grid and sum. Each
/// series is read as a trigonometric polynomial on the low-rate grid; its
/// lines are shifted by the matching carrier and evaluated at Nyquist-rate
/// instants, so rates need not divide one another.
pub fn assemble(
    s_hats: &[Vec<C64>],
    carriers_hz: &[f64],
    f_s_hz: f64,
    f_nyq_hz: f64,
    q: usize,
) -> Result<Vec<C64>> {
    if s_hats.len() != carriers_hz.len() {
        return Err(Error::InvalidConfig(format!(
            "{} series vs {} carriers",
            s_hats.len(),
            carriers_hz.len()
        )));
    }
    if q == 0 {
        return Err(Error::InvalidConfig("q must be >= 1".into()));
    }
    let n_out = nyquist_len(q, f_s_hz, f_nyq_hz);
    let delta_f = f_s_hz / q as f64;
    let mut u = vec![C64::new(0.0, 0.0); n_out];
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(q);
    for (series, &f_c) in s_hats.iter().zip(carriers_hz) {
        if series.len() != q {
            return Err(Error::InvalidConfig(format!(
                "series length {} does not match q = {q}",
                series.len()
            )));
        }
        let mut bins = series.clone();
        fft.process(&mut bins);
        for (slot, &b) in bins.iter().enumerate() {
            let amp = b / q as f64;
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let nu = f_c + signed_bin(slot, q) as f64 * delta_f;
            let step = cis(2.0 * std::f64::consts::PI * nu / f_nyq_hz);
            let mut ph = C64::new(1.0, 0.0);
            for out in u.iter_mut() {
                *out += amp * ph;
                ph *= step;
            }
        }
    }
    Ok(u)
}

/// The scene's own signal on the Nyquist grid, synthesized line by line from
/// the generating tone coefficients — the comparison target for every MSE.
pub fn nyquist_truth(scene: &SignalScene, q: usize, f_s_hz: f64) -> Vec<C64> {
    let delta_f = f_s_hz / q as f64;
    let n_out = nyquist_len(q, f_s_hz, scene.f_nyq_hz);
    let mut u = vec![C64::new(0.0, 0.0); n_out];
    for t in &scene.transmissions {
        // mirror the sampling model: lines stay off the wrap-around bin
        // while the band fits the window, genuine folding otherwise
        let clamp = (t.bandwidth_hz <= f_s_hz).then(|| (q as i64 - 1) / 2);
        let bins = baseband_bins(t.bandwidth_hz, delta_f, clamp, t.baseband_seed);
        let amp_scale = t.power.sqrt();
        for (idx, &a) in bins.coeffs.iter().enumerate() {
            let qs = idx as i64 - bins.q_max;
            let amp = a * amp_scale;
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let nu = t.carrier_hz + qs as f64 * delta_f;
            let step = cis(2.0 * std::f64::consts::PI * nu / scene.f_nyq_hz);
            let mut ph = C64::new(1.0, 0.0);
            for out in u.iter_mut() {
                *out += amp * ph;
                ph *= step;
            }
        }
    }
    u
}

fn per_term(delta: f64, scale: f64) -> f64 {
    (delta.abs() / scale).min(1.0)
}

struct Assignment {
    carrier_sum: f64,
    aoa_sum: f64,
}

/// Minimal-cost injective matching of truth entries to estimates; misses pay
/// the maximal per-term cost in every metric.
fn best_assignment(
    truth: &[(f64, f64)],
    est: &[(f64, f64)],
    f_nyq: f64,
    with_aoa: bool,
) -> Assignment {
    fn search(
        i: usize,
        truth: &[(f64, f64)],
        est: &[(f64, f64)],
        used: &mut [bool],
        f_nyq: f64,
        with_aoa: bool,
    ) -> (f64, f64, f64) {
        if i == truth.len() {
            return (0.0, 0.0, 0.0);
        }
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let unused = used.iter().filter(|&&u| !u).count();
        for j in 0..est.len() {
            if used[j] {
                continue;
            }
            let c = per_term(truth[i].0 - est[j].0, f_nyq);
            let a = if with_aoa {
                per_term(
                    (truth[i].1 - est[j].1).to_degrees(),
                    180.0,
                )
            } else {
                0.0
            };
            used[j] = true;
            let (rc, rcs, ras) = search(i + 1, truth, est, used, f_nyq, with_aoa);
            used[j] = false;
            let combined = c + a + rc;
            if combined < best.0 {
                best = (combined, c + rcs, a + ras);
            }
        }
        // leaving this truth unmatched is only forced when estimates run out
        if unused < truth.len() - i {
            let miss_a = if with_aoa { 1.0 } else { 0.0 };
            let (rc, rcs, ras) = search(i + 1, truth, est, used, f_nyq, with_aoa);
            let combined = 1.0 + miss_a + rc;
            if combined < best.0 {
                best = (combined, 1.0 + rcs, miss_a + ras);
            }
        }
        best
    }
    let mut used = vec![false; est.len()];
    let (_, carrier_sum, aoa_sum) = search(0, truth, est, &mut used, f_nyq, with_aoa);
    Assignment {
        carrier_sum,
        aoa_sum,
    }
}

/// All figure metrics in one place. Truth parameters come from the scene;
/// estimated directions are optional (NaN direction error when absent), and
/// the signal error is NaN when no reconstruction was attempted.
pub fn metrics(
    scene: &SignalScene,
    u: &[C64],
    u_hat: Option<&[C64]>,
    est_carriers_hz: &[f64],
    est_aoas_rad: Option<&[f64]>,
) -> Result<Metrics> {
    let m = scene.m();
    if m == 0 {
        return Err(Error::InvalidConfig("scene has no transmissions".into()));
    }
    let mse_norm = match u_hat {
        None => f64::NAN,
        Some(uh) => {
            if uh.len() != u.len() {
                return Err(Error::InvalidConfig(format!(
                    "signal lengths differ: truth {} vs estimate {}",
                    u.len(),
                    uh.len()
                )));
            }
            if u.is_empty() {
                return Err(Error::InvalidConfig("empty signals".into()));
            }
            u.iter()
                .zip(uh)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                / u.len() as f64
        }
    };
    if let Some(aoas) = est_aoas_rad {
        if aoas.len() != est_carriers_hz.len() {
            return Err(Error::InvalidConfig(format!(
                "{} estimated carriers vs {} directions",
                est_carriers_hz.len(),
                aoas.len()
            )));
        }
    }
    let truth: Vec<(f64, f64)> = scene
        .transmissions
        .iter()
        .map(|t| (t.carrier_hz, t.aoa_rad))
        .collect();
    let est: Vec<(f64, f64)> = est_carriers_hz
        .iter()
        .enumerate()
        .map(|(i, &f)| (f, est_aoas_rad.map_or(0.0, |a| a[i])))
        .collect();
    let with_aoa = est_aoas_rad.is_some();
    let asg = best_assignment(&truth, &est, scene.f_nyq_hz, with_aoa);
    Ok(Metrics {
        mse_norm,
        carrier_err: asg.carrier_sum / m as f64,
        aoa_err: if with_aoa {
            asg.aoa_sum / m as f64
        } else {
            f64::NAN
        },
    })
}

/// Full array-path reconstruction: invert the steering mixture, unfold each
/// stream, reassemble at the Nyquist rate, and score against the scene's own
/// signal. Directions default to the scene's shared known angle when not
/// estimated (single-angle model); direction error is then reported as NaN.
pub fn reconstruct(
    samples: &SampleSet,
    cfg: &FrontEndConfig,
    scene: &SignalScene,
    est_carriers_hz: &[f64],
    est_aoas_rad: Option<&[f64]>,
) -> Result<Reconstruction> {
    let steering_aoas: Vec<f64> = match est_aoas_rad {
        Some(a) => a.to_vec(),
        None => match scene.model {
            ModelClass::SharedAoa { theta_rad } => vec![theta_rad; est_carriers_hz.len()],
            ModelClass::DistinctAoas => {
                return Err(Error::InvalidConfig(
                    "per-transmission directions are required to invert a \
                     distinct-angle scene"
                        .into(),
                ))
            }
        },
    };
    let w_hat = invert_steering(samples, est_carriers_hz, &steering_aoas, &samples.geometry)?;
    let mut s_hat = Vec::with_capacity(est_carriers_hz.len());
    for (i, &f) in est_carriers_hz.iter().enumerate() {
        s_hat.push(unfold_spectrum(&w_hat.row(i).to_vec(), f, cfg)?);
    }
    let q = cfg.q_snapshots;
    let u_hat = assemble(&s_hat, est_carriers_hz, samples.f_s_hz, scene.f_nyq_hz, q)?;
    let u = nyquist_truth(scene, q, samples.f_s_hz);
    let metrics = metrics(scene, &u, Some(&u_hat), est_carriers_hz, est_aoas_rad)?;
    Ok(Reconstruction {
        w_hat,
        s_hat,
        u_hat,
        metrics,
    })
}

/// Single-sensor baseline reconstruction: pursue the occupied alias slices
/// across the channel mixing matrix, invert the selected columns for the
/// slice streams, and remodulate each slice at its own alias offset. Carrier
/// estimates are the dominant line per recovered slice, deduplicated to the
/// band separation and capped at m.
pub fn mwc_reconstruct(
    samples: &SampleSet,
    cfg: &FrontEndConfig,
    scene: &SignalScene,
    m: usize,
) -> Result<Reconstruction> {
    if samples.geometry.kind != ArrayKind::MwcSingleSensor {
        return Err(Error::InvalidConfig(
            "baseline reconstruction expects single-sensor channel samples".into(),
        ));
    }
    let q = samples.x.ncols();
    let n_ch = samples.x.nrows();
    let slices = (2 * cfg.l0 + 1) as usize;
    // channel mixing weights; columns normalized for the pursuit, raw for
    // the inversion
    let mut c_raw = Array2::zeros((n_ch, slices));
    for ch in 0..n_ch {
        let coeffs = fourier_coeffs(&cfg.channel_mixing(ch)?, cfg.l0);
        for (s, &c) in coeffs.iter().enumerate() {
            c_raw[(ch, s)] = c;
        }
    }
    let mut c_unit = c_raw.clone();
    for s in 0..slices {
        let norm = c_unit.column(s).iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            c_unit.column_mut(s).mapv_inplace(|v| v / norm);
        }
    }
    let dict = Dictionary {
        g: c_unit,
        grid_delta: cfg.f_p_hz,
        atoms: (0..slices)
            .map(|s| GridAtom::Frequency((s as i64 - cfg.l0) as f64 * cfg.f_p_hz))
            .collect(),
    };
    let cov = covariance(samples);
    let v = ctf_frame(&cov)?;
    let want = (2 * m).min(slices).min(n_ch);
    let support = somp(v.view(), &dict, want)?;

    let truth = nyquist_truth(scene, q, samples.f_s_hz);
    if support.indices.is_empty() {
        let u_hat = vec![C64::new(0.0, 0.0); truth.len()];
        let metrics = metrics(scene, &truth, Some(&u_hat), &[], None)?;
        return Ok(Reconstruction {
            w_hat: Array2::zeros((0, q)),
            s_hat: Vec::new(),
            u_hat,
            metrics,
        });
    }

    let mut cs = Array2::zeros((n_ch, support.indices.len()));
    for (k, &s) in support.indices.iter().enumerate() {
        cs.column_mut(k).assign(&c_raw.column(s));
    }
    let z_hat = pinv(cs.view())?.dot(&samples.x);
    let series: Vec<Vec<C64>> = (0..z_hat.nrows()).map(|r| z_hat.row(r).to_vec()).collect();
    let slice_carriers: Vec<f64> = support
        .indices
        .iter()
        .map(|&s| (s as i64 - cfg.l0) as f64 * cfg.f_p_hz)
        .collect();
    let u_hat = assemble(&series, &slice_carriers, samples.f_s_hz, scene.f_nyq_hz, q)?;

    // dominant line per slice -> carrier candidates, strongest first,
    // separated by at least the band cap
    let delta_f = samples.f_s_hz / q as f64;
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(q);
    let mut candidates: Vec<(f64, f64)> = Vec::new(); // (energy, carrier)
    for (row, &offset) in series.iter().zip(&slice_carriers) {
        let mut bins = row.clone();
        fft.process(&mut bins);
        let mut best = (0.0f64, 0usize);
        let mut energy = 0.0f64;
        for (slot, b) in bins.iter().enumerate() {
            let p = b.norm_sqr();
            energy += p;
            if p > best.0 {
                best = (p, slot);
            }
        }
        if energy > 0.0 {
            candidates.push((energy, offset + signed_bin(best.1, q) as f64 * delta_f));
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut carriers_hat: Vec<f64> = Vec::new();
    for (_, f) in candidates {
        if carriers_hat.len() == m {
            break;
        }
        if carriers_hat.iter().all(|&kept| (kept - f).abs() > scene.b_hz) {
            carriers_hat.push(f);
        }
    }
    carriers_hat.sort_by(f64::total_cmp);

    let metrics = metrics(scene, &truth, Some(&u_hat), &carriers_hat, None)?;
    Ok(Reconstruction {
        w_hat: z_hat,
        s_hat: series,
        u_hat,
        metrics,
    })
}
