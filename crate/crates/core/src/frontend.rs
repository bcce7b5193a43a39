//! Sensor front ends: mix the antenna signal with a periodic waveform,
//! low-pass to `±f_s/2`, sample at `f_s`.
//!
//! Everything runs on the exact tone grid of the scene basebands (spacing
//! `delta_f = f_s/Q`): mixing translates each spectral line by integer
//! multiples of `f_p`, the ideal LPF is a window test per translated line, and
//! sampling evaluates the surviving tone sum at `k/f_s`. This keeps the whole
//! chain at machine precision, so recovery errors downstream are attributable
//! to the algorithms, never the simulator.

use std::fs;
use std::io::{Read as _, Write as _};
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cis, mix_seed, C64};
use crate::model::{ArrayGeometry, ArrayKind, SignalScene};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Axis {
    X,
    Z,
}

/// Which periodic waveform each mixing channel uses.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MixingKind {
    /// Impulse train at rate f_p: every Fourier coefficient is exactly 1.
    DiracComb,
    /// Per-channel pseudorandom ±1 sequences; array front ends share the
    /// first entry so their channels stay identical.
    RandomSignSequence { per_channel_seeds: Vec<u64> },
}

/// One realized mixing waveform.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Mixing {
    DiracComb,
    /// ±1 values over equal subdivisions of one period.
    SignSequence(Vec<i8>),
}

impl Mixing {
    /// Pseudorandom ±1 sequence with `2*l0 + 1` pieces — enough sign changes
    /// that all coefficients through `|l| = l0` are generically nonzero.
    /// Redraws a constant sequence (its AC coefficients all vanish).
    pub fn random_signs(l0: i64, seed: u64) -> Mixing {
        let pieces = (2 * l0 + 1).max(1) as usize;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut signs: Vec<i8> = Vec::new();
        for _ in 0..64 {
            signs = (0..pieces)
                .map(|_| if rng.random::<bool>() { 1 } else { -1 })
                .collect();
            if pieces == 1 || signs.iter().any(|&s| s != signs[0]) {
                return Mixing::SignSequence(signs);
            }
        }
        let last = pieces - 1;
        signs[last] = -signs[last];
        Mixing::SignSequence(signs)
    }
}

/// Fourier coefficients of the mixing waveform, indexed `l + l0` for
/// `l in -l0..=l0`; `c_l` weights the spectral copy translated down by
/// `l * f_p`.
pub fn fourier_coeffs(mixing: &Mixing, l0: i64) -> Vec<C64> {
    let len = (2 * l0 + 1) as usize;
    match mixing {
        Mixing::DiracComb => vec![C64::new(1.0, 0.0); len],
        Mixing::SignSequence(signs) => {
            let s = signs.len() as f64;
            let mean = signs.iter().map(|&b| b as f64).sum::<f64>() / s;
            (-l0..=l0)
                .map(|l| {
                    if l == 0 {
                        return C64::new(mean, 0.0);
                    }
                    // Integral of e^{j2pi l t/T} over each constant piece.
                    let lf = l as f64;
                    let pre = (cis(2.0 * std::f64::consts::PI * lf / s) - 1.0)
                        / C64::new(0.0, 2.0 * std::f64::consts::PI * lf);
                    let dft: C64 = signs
                        .iter()
                        .enumerate()
                        .map(|(r, &b)| {
                            b as f64 * cis(2.0 * std::f64::consts::PI * lf * r as f64 / s)
                        })
                        .sum();
                    pre * dft
                })
                .collect()
        }
    }
}

/// Full signal recovery hinges on every alias weight being invertible; a
/// numerically zero coefficient makes its band unrecoverable.
pub fn validate_full_recovery_coeffs(coeffs: &[C64]) -> Result<()> {
    let max = coeffs.iter().map(|c| c.norm()).fold(0.0f64, f64::max);
    for (idx, c) in coeffs.iter().enumerate() {
        if c.norm() <= 1e-12 * max {
            let l = idx as i64 - (coeffs.len() as i64 - 1) / 2;
            return Err(Error::InvalidConfig(format!(
                "mixing coefficient c_{l} is numerically zero; bands aliased \
                 through shift {l} cannot be recovered"
            )));
        }
    }
    Ok(())
}

#[derive(Clone, Debug)]
pub struct FrontEndConfig {
    pub f_p_hz: f64,
    pub f_s_hz: f64,
    pub mixing: MixingKind,
    /// Number of low-rate snapshots Q; also the tone-grid length.
    pub q_snapshots: usize,
    /// Alias sum reaches `l in -l0..=l0`; covers the Nyquist range when
    /// `l0 >= ceil(f_nyq / (2 f_p))`.
    pub l0: i64,
}

impl FrontEndConfig {
    pub fn new(
        f_p_hz: f64,
        f_s_hz: f64,
        mixing: MixingKind,
        q_snapshots: usize,
        f_nyq_hz: f64,
    ) -> FrontEndConfig {
        FrontEndConfig {
            f_p_hz,
            f_s_hz,
            mixing,
            q_snapshots,
            l0: required_l0(f_nyq_hz, f_p_hz),
        }
    }

    /// Tone-grid spacing of the sampled window.
    pub fn delta_f(&self) -> f64 {
        self.f_s_hz / self.q_snapshots as f64
    }

    /// Realized mixing waveform of one channel. Array front ends are
    /// identical across sensors and use channel 0.
    pub fn channel_mixing(&self, channel: usize) -> Result<Mixing> {
        match &self.mixing {
            MixingKind::DiracComb => Ok(Mixing::DiracComb),
            MixingKind::RandomSignSequence { per_channel_seeds } => {
                let seed = per_channel_seeds.get(channel).ok_or_else(|| {
                    Error::InvalidConfig(format!(
                        "channel {channel} has no sign-sequence seed ({} provided)",
                        per_channel_seeds.len()
                    ))
                })?;
                Ok(Mixing::random_signs(self.l0, *seed))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_p_hz > 0.0) || !(self.f_s_hz > 0.0) {
            return Err(Error::InvalidConfig("f_p and f_s must be positive".into()));
        }
        if self.q_snapshots == 0 {
            return Err(Error::InvalidConfig("q_snapshots must be >= 1".into()));
        }
        if self.l0 < 0 {
            return Err(Error::InvalidConfig("l0 must be >= 0".into()));
        }
        if let MixingKind::RandomSignSequence { per_channel_seeds } = &self.mixing {
            if per_channel_seeds.is_empty() {
                return Err(Error::InvalidConfig(
                    "sign-sequence mixing needs at least one seed".into(),
                ));
            }
        }
        Ok(())
    }
}

pub fn required_l0(f_nyq_hz: f64, f_p_hz: f64) -> i64 {
    (f_nyq_hz / (2.0 * f_p_hz)).ceil() as i64
}

/// Shift index whose translate lands a line of absolute frequency `f_abs`
/// inside the baseband window when `f_s = f_p`.
pub(crate) fn landing_alias(f_abs: f64, f_p_hz: f64) -> i64 {
    ((f_abs + 0.5 * f_p_hz) / f_p_hz).floor() as i64
}

/// Wave travel time from the reference sensor to sensor `n` along one axis.
pub fn delay(n: usize, d_m: f64, theta_rad: f64, wave_speed: f64, axis: Axis) -> f64 {
    let along = match axis {
        Axis::X => theta_rad.cos(),
        Axis::Z => theta_rad.sin(),
    };
    d_m * n as f64 * along / wave_speed
}

#[derive(Clone, Debug)]
pub struct SteeringMatrix {
    /// N×M, entry (n, i) = e^{j 2 pi f_i tau_n}.
    pub entries: Array2<C64>,
    pub axis: Axis,
}

/// Carrier-phase steering of the scene onto an array axis.
pub fn steering(
    scene: &SignalScene,
    geometry: &ArrayGeometry,
    axis: Axis,
) -> Result<SteeringMatrix> {
    if geometry.kind == ArrayKind::MwcSingleSensor {
        return Err(Error::InvalidConfig(
            "single-sensor geometry has no steering structure".into(),
        ));
    }
    let n = geometry.n_per_axis;
    let m = scene.m();
    let mut entries = Array2::zeros((n, m));
    for (i, t) in scene.transmissions.iter().enumerate() {
        for row in 0..n {
            let tau = delay(row, geometry.spacing_m, t.aoa_rad, geometry.wave_speed, axis);
            entries[(row, i)] = cis(2.0 * std::f64::consts::PI * t.carrier_hz * tau);
        }
    }
    Ok(SteeringMatrix { entries, axis })
}

/// Low-rate sample matrices of one scene realization.
#[derive(Clone, Debug)]
pub struct SampleSet {
    /// N×Q (sensors along x, or mixing channels for the single-sensor kind).
    pub x: Array2<C64>,
    /// N×Q for the L-shaped array (row 0 is the shared origin sensor).
    pub z: Option<Array2<C64>>,
    pub f_s_hz: f64,
    pub geometry: ArrayGeometry,
}

impl SampleSet {
    pub fn validate(&self) -> Result<()> {
        let expect_z = self.geometry.kind == ArrayKind::LShape;
        if expect_z != self.z.is_some() {
            return Err(Error::InvalidConfig(
                "z samples present iff geometry is L-shaped".into(),
            ));
        }
        if self.x.nrows() != self.geometry.n_per_axis {
            return Err(Error::InvalidConfig(format!(
                "x has {} rows for {} sensors per axis",
                self.x.nrows(),
                self.geometry.n_per_axis
            )));
        }
        if let Some(z) = &self.z {
            if z.dim() != self.x.dim() {
                return Err(Error::InvalidConfig("x and z shapes differ".into()));
            }
        }
        Ok(())
    }

    /// Write interleaved little-endian re/im f64, row-major, x block then z
    /// block, with a JSON sidecar `<path>.json` describing the layout.
    pub fn export(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::with_capacity(16 * self.x.len() * 2);
        for m in std::iter::once(&self.x).chain(self.z.iter()) {
            for v in m.iter() {
                buf.extend_from_slice(&v.re.to_le_bytes());
                buf.extend_from_slice(&v.im.to_le_bytes());
            }
        }
        fs::File::create(path)?.write_all(&buf)?;
        let side = SampleSidecar {
            n: self.x.nrows(),
            q: self.x.ncols(),
            f_s: self.f_s_hz,
            geometry: self.geometry,
            has_z: self.z.is_some(),
        };
        fs::write(
            sidecar_path(path),
            serde_json::to_string_pretty(&side)?,
        )?;
        Ok(())
    }

    pub fn import(path: &Path) -> Result<SampleSet> {
        let side: SampleSidecar = serde_json::from_str(&fs::read_to_string(sidecar_path(path))?)?;
        let mut buf = Vec::new();
        fs::File::open(path)?.read_to_end(&mut buf)?;
        let per_matrix = side.n * side.q * 16;
        let blocks = if side.has_z { 2 } else { 1 };
        if buf.len() != per_matrix * blocks {
            return Err(Error::InvalidConfig(format!(
                "sample file holds {} bytes, sidecar implies {}",
                buf.len(),
                per_matrix * blocks
            )));
        }
        let read_block = |offset: usize| -> Array2<C64> {
            Array2::from_shape_fn((side.n, side.q), |(r, c)| {
                let at = offset + (r * side.q + c) * 16;
                let re = f64::from_le_bytes(buf[at..at + 8].try_into().unwrap());
                let im = f64::from_le_bytes(buf[at + 8..at + 16].try_into().unwrap());
                C64::new(re, im)
            })
        };
        let set = SampleSet {
            x: read_block(0),
            z: side.has_z.then(|| read_block(per_matrix)),
            f_s_hz: side.f_s,
            geometry: side.geometry,
        };
        set.validate()?;
        Ok(set)
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    std::path::PathBuf::from(s)
}

#[derive(Serialize, Deserialize)]
struct SampleSidecar {
    n: usize,
    q: usize,
    f_s: f64,
    geometry: ArrayGeometry,
    has_z: bool,
}

/// One translated-and-filtered slice of a transmission: samples of
/// `sum_q a_q e^{j 2 pi (f_i + q delta_f - l f_p) k T_s}` over the lines that
/// survive the LPF window for shift `l`, before mixing-coefficient weighting.
struct ToneBlock {
    l: i64,
    samples: Vec<C64>,
}

/// Per-transmission tone blocks; mixing-independent, so every channel reuses
/// them with its own coefficient weights.
fn tone_blocks(scene: &SignalScene, cfg: &FrontEndConfig) -> Result<Vec<Vec<ToneBlock>>> {
    let q_len = cfg.q_snapshots;
    let delta_f = cfg.delta_f();
    let t_s = 1.0 / cfg.f_s_hz;
    let half_fs = cfg.f_s_hz / 2.0;
    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(q_len);

    let mut out = Vec::with_capacity(scene.m());
    for t in &scene.transmissions {
        // Keep lines off the wrap-around bin while the band fits in the
        // window; a band wider than f_s genuinely folds, so leave it alone.
        let clamp = (t.bandwidth_hz <= cfg.f_s_hz).then(|| (q_len as i64 - 1) / 2);
        let bins = crate::model::baseband_bins(t.bandwidth_hz, delta_f, clamp, t.baseband_seed);
        let amp = t.power.sqrt();
        let mut blocks = Vec::new();
        for l in -cfg.l0..=cfg.l0 {
            let shift = l as f64 * cfg.f_p_hz;
            let mut spectrum = vec![C64::new(0.0, 0.0); q_len];
            let mut occupied = false;
            for (idx, &a) in bins.coeffs.iter().enumerate() {
                let q = idx as i64 - bins.q_max;
                let landed = t.carrier_hz + q as f64 * delta_f - shift;
                if landed >= -half_fs && landed < half_fs {
                    let slot = q.rem_euclid(q_len as i64) as usize;
                    spectrum[slot] += a * amp;
                    occupied = true;
                }
            }
            if !occupied {
                continue;
            }
            ifft.process(&mut spectrum);
            // Residual carrier after the shift; exactly 1 when f_p = f_s and
            // the transmission sits at baseband.
            let omega = 2.0 * std::f64::consts::PI * (t.carrier_hz - shift) * t_s;
            for (k, v) in spectrum.iter_mut().enumerate() {
                *v *= cis(omega * k as f64);
            }
            blocks.push(ToneBlock { l, samples: spectrum });
        }
        out.push(blocks);
    }
    Ok(out)
}

/// Sampled front-end output per transmission (M×Q): each row is the
/// transmission mixed to baseband, filtered and sampled, using the shared
/// array mixing waveform.
pub fn alias_baseband(scene: &SignalScene, cfg: &FrontEndConfig) -> Result<Array2<C64>> {
    scene.validate()?;
    cfg.validate()?;
    let coeffs = fourier_coeffs(&cfg.channel_mixing(0)?, cfg.l0);
    let blocks = tone_blocks(scene, cfg)?;
    let mut w = Array2::zeros((scene.m(), cfg.q_snapshots));
    for (i, tb) in blocks.iter().enumerate() {
        for block in tb {
            let c = coeffs[(block.l + cfg.l0) as usize];
            let mut row = w.row_mut(i);
            for (k, &v) in block.samples.iter().enumerate() {
                row[k] += c * v;
            }
        }
    }
    Ok(w)
}

fn frob2(m: ArrayView2<C64>) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum()
}

fn gaussian_matrix(rows: usize, cols: usize, seed: u64) -> Array2<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((rows, cols), |_| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(re, im)
    })
}

/// Simulate one acquisition. Noise is white Gaussian per sensor, added after
/// the front end for array kinds; the single-sensor kind folds one shared
/// antenna-noise realization through every channel's mixer. Finite `snr_db`
/// scales the noise so the realized signal-to-noise energy ratio over all
/// distinct sensors matches exactly; `f64::INFINITY` disables noise.
pub fn sample(
    scene: &SignalScene,
    geometry: &ArrayGeometry,
    cfg: &FrontEndConfig,
    snr_db: f64,
    rng_seed: u64,
) -> Result<SampleSet> {
    scene.validate()?;
    geometry.validate()?;
    cfg.validate()?;
    let need = required_l0(scene.f_nyq_hz, cfg.f_p_hz);
    if cfg.l0 < need {
        return Err(Error::InvalidConfig(format!(
            "l0 = {} misses alias terms; the scene needs {need}",
            cfg.l0
        )));
    }
    let snr_lin = if snr_db.is_infinite() {
        None
    } else {
        Some(10f64.powf(snr_db / 10.0))
    };
    let q_len = cfg.q_snapshots;
    let n = geometry.n_per_axis;

    match geometry.kind {
        ArrayKind::Ula => {
            let w = alias_baseband(scene, cfg)?;
            let a = steering(scene, geometry, Axis::X)?;
            let mut x = a.entries.dot(&w);
            if let Some(snr) = snr_lin {
                let noise = gaussian_matrix(n, q_len, mix_seed(rng_seed, 1, 0, 0));
                let scale = (frob2(x.view()) / (snr * frob2(noise.view()))).sqrt();
                x = x + noise * C64::new(scale, 0.0);
            }
            Ok(SampleSet {
                x,
                z: None,
                f_s_hz: cfg.f_s_hz,
                geometry: *geometry,
            })
        }
        ArrayKind::LShape => {
            let w = alias_baseband(scene, cfg)?;
            let ax = steering(scene, geometry, Axis::X)?;
            let az = steering(scene, geometry, Axis::Z)?;
            let mut x = ax.entries.dot(&w);
            let mut z = az.entries.dot(&w);
            if let Some(snr) = snr_lin {
                let hx = gaussian_matrix(n, q_len, mix_seed(rng_seed, 1, 0, 0));
                let hz_tail = gaussian_matrix(n - 1, q_len, mix_seed(rng_seed, 1, 1, 0));
                // 2N-1 distinct sensors: z row 0 is the same physical sensor
                // as x row 0 and shares its noise; norms count it once.
                let signal = frob2(x.view()) + frob2(z.slice(ndarray::s![1.., ..]));
                let noise_e = frob2(hx.view()) + frob2(hz_tail.view());
                let scale = (signal / (snr * noise_e)).sqrt();
                for r in 0..n {
                    for k in 0..q_len {
                        x[(r, k)] += hx[(r, k)] * scale;
                        if r == 0 {
                            z[(0, k)] += hx[(0, k)] * scale;
                        } else {
                            z[(r, k)] += hz_tail[(r - 1, k)] * scale;
                        }
                    }
                }
            }
            Ok(SampleSet {
                x,
                z: Some(z),
                f_s_hz: cfg.f_s_hz,
                geometry: *geometry,
            })
        }
        ArrayKind::MwcSingleSensor => {
            if matches!(cfg.mixing, MixingKind::DiracComb) {
                return Err(Error::InvalidConfig(
                    "single-sensor channels must use distinct sign sequences; \
                     a shared comb makes every channel identical"
                        .into(),
                ));
            }
            let blocks = tone_blocks(scene, cfg)?;
            let chan_coeffs: Vec<Vec<C64>> = (0..n)
                .map(|r| Ok(fourier_coeffs(&cfg.channel_mixing(r)?, cfg.l0)))
                .collect::<Result<_>>()?;
            let mut x = Array2::zeros((n, q_len));
            for tb in &blocks {
                for block in tb {
                    let li = (block.l + cfg.l0) as usize;
                    for r in 0..n {
                        let c = chan_coeffs[r][li];
                        let mut row = x.row_mut(r);
                        for (k, &v) in block.samples.iter().enumerate() {
                            row[k] += c * v;
                        }
                    }
                }
            }
            if let Some(snr) = snr_lin {
                let h = folded_antenna_noise(scene, cfg, &chan_coeffs, rng_seed)?;
                let scale = (frob2(x.view()) / (snr * frob2(h.view()))).sqrt();
                x = x + h * C64::new(scale, 0.0);
            }
            Ok(SampleSet {
                x,
                z: None,
                f_s_hz: cfg.f_s_hz,
                geometry: *geometry,
            })
        }
    }
}

/// One wideband noise realization (spectral lines across the whole Nyquist
/// range) folded through every channel's mixer — channels see the same noise,
/// weighted by their own coefficients.
fn folded_antenna_noise(
    scene: &SignalScene,
    cfg: &FrontEndConfig,
    chan_coeffs: &[Vec<C64>],
    rng_seed: u64,
) -> Result<Array2<C64>> {
    let q_len = cfg.q_snapshots;
    let delta_f = cfg.delta_f();
    let t_s = 1.0 / cfg.f_s_hz;
    let half_fs = cfg.f_s_hz / 2.0;
    let g_max = (scene.f_nyq_hz / 2.0 / delta_f).floor() as i64;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(rng_seed, 2, 0, 0));
    let lines: Vec<C64> = (0..=2 * g_max)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            C64::new(re, im)
        })
        .collect();

    let mut planner = FftPlanner::new();
    let ifft = planner.plan_fft_inverse(q_len);
    let mut h = Array2::zeros((chan_coeffs.len(), q_len));
    for l in -cfg.l0..=cfg.l0 {
        let shift = l as f64 * cfg.f_p_hz;
        let mut spectrum = vec![C64::new(0.0, 0.0); q_len];
        let mut occupied = false;
        for g in -g_max..=g_max {
            let landed = g as f64 * delta_f - shift;
            if landed >= -half_fs && landed < half_fs {
                let slot = g.rem_euclid(q_len as i64) as usize;
                spectrum[slot] += lines[(g + g_max) as usize];
                occupied = true;
            }
        }
        if !occupied {
            continue;
        }
        ifft.process(&mut spectrum);
        let omega = -2.0 * std::f64::consts::PI * shift * t_s;
        for (k, v) in spectrum.iter_mut().enumerate() {
            *v *= cis(omega * k as f64);
        }
        let li = (l + cfg.l0) as usize;
        for (r, coeffs) in chan_coeffs.iter().enumerate() {
            let c = coeffs[li];
            let mut row = h.row_mut(r);
            for (k, &v) in spectrum.iter().enumerate() {
                row[k] += c * v;
            }
        }
    }
    Ok(h)
}
