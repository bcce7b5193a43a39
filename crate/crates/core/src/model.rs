//! Scene model: M sparse transmissions, each a band of width at most B around
//! an unknown carrier, impinging on the array from directions given by the
//! model class.
//!
//! Two classes: a shared known direction for every transmission (linear-array
//! runs), or distinct unknown directions (L-shaped-array runs). Carriers live
//! inside `±(f_nyq - B)/2` so each band stays inside the Nyquist range, and
//! occupied bands never overlap.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Propagation speed default [m/s].
pub const DEFAULT_WAVE_SPEED: f64 = 3.0e8;

/// Cap on rejection resampling in [`draw_scene`].
pub const MAX_DRAW_ATTEMPTS: usize = 10_000;

/// Direction structure of a scene.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ModelClass {
    /// Every transmission arrives from one known angle (radians, inside
    /// `(-pi/2, pi/2)`).
    SharedAoa { theta_rad: f64 },
    /// Each transmission has its own unknown angle.
    DistinctAoas,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Transmission {
    pub carrier_hz: f64,
    /// Angle of arrival, radians, strictly inside `(-pi/2, pi/2)`.
    pub aoa_rad: f64,
    pub bandwidth_hz: f64,
    /// Average power sigma_i^2 of the transmission.
    pub power: f64,
    /// Seed that fully determines the baseband waveform.
    pub baseband_seed: u64,
}

impl Transmission {
    /// Materialize the baseband as a time series of `n_samples` at `rate_hz`,
    /// scaled to the transmission power.
    pub fn baseband(&self, n_samples: usize, rate_hz: f64) -> Result<Vec<Complex64>> {
        let mut s = gen_baseband(self.bandwidth_hz, n_samples, rate_hz, self.baseband_seed)?;
        let amp = self.power.sqrt();
        for v in &mut s {
            *v *= amp;
        }
        Ok(s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SignalScene {
    pub transmissions: Vec<Transmission>,
    pub f_nyq_hz: f64,
    /// Shared bandwidth cap B.
    pub b_hz: f64,
    pub model: ModelClass,
}

impl SignalScene {
    pub fn m(&self) -> usize {
        self.transmissions.len()
    }

    pub fn carriers(&self) -> Vec<f64> {
        self.transmissions.iter().map(|t| t.carrier_hz).collect()
    }

    pub fn aoas(&self) -> Vec<f64> {
        self.transmissions.iter().map(|t| t.aoa_rad).collect()
    }

    /// Check every scene invariant; scenes from [`draw_scene`] always pass.
    pub fn validate(&self) -> Result<()> {
        if self.transmissions.is_empty() {
            return Err(Error::InvalidConfig("scene has no transmissions".into()));
        }
        if !(self.f_nyq_hz > 0.0) || !(self.b_hz > 0.0) {
            return Err(Error::InvalidConfig("f_nyq and B must be positive".into()));
        }
        let half = (self.f_nyq_hz - self.b_hz) / 2.0;
        for t in &self.transmissions {
            if !(t.bandwidth_hz > 0.0) || t.bandwidth_hz > self.b_hz {
                return Err(Error::InvalidConfig(format!(
                    "bandwidth {} outside (0, B = {}]",
                    t.bandwidth_hz, self.b_hz
                )));
            }
            if t.carrier_hz.abs() > half {
                return Err(Error::InvalidConfig(format!(
                    "carrier {} outside +-(f_nyq - B)/2 = {half}",
                    t.carrier_hz
                )));
            }
            if !(t.aoa_rad > -std::f64::consts::FRAC_PI_2 && t.aoa_rad < std::f64::consts::FRAC_PI_2)
            {
                return Err(Error::InvalidConfig(format!(
                    "aoa {} rad outside (-pi/2, pi/2)",
                    t.aoa_rad
                )));
            }
            if !(t.power > 0.0) {
                return Err(Error::InvalidConfig("transmission power must be > 0".into()));
            }
        }
        for i in 0..self.m() {
            for j in (i + 1)..self.m() {
                let fi = self.transmissions[i].carrier_hz;
                let fj = self.transmissions[j].carrier_hz;
                if (fi - fj).abs() <= self.b_hz {
                    return Err(Error::InvalidConfig(format!(
                        "carriers {fi} and {fj} closer than B = {}",
                        self.b_hz
                    )));
                }
            }
        }
        match self.model {
            ModelClass::SharedAoa { theta_rad } => {
                for t in &self.transmissions {
                    if t.aoa_rad != theta_rad {
                        return Err(Error::InvalidConfig(
                            "shared-angle scene has differing angles".into(),
                        ));
                    }
                }
            }
            ModelClass::DistinctAoas => {
                // Electronic angles f cos(theta), f sin(theta) must be
                // pairwise distinct or the two axes cannot separate sources.
                for i in 0..self.m() {
                    for j in (i + 1)..self.m() {
                        let (ti, tj) = (&self.transmissions[i], &self.transmissions[j]);
                        let xi = ti.carrier_hz * ti.aoa_rad.cos();
                        let xj = tj.carrier_hz * tj.aoa_rad.cos();
                        let zi = ti.carrier_hz * ti.aoa_rad.sin();
                        let zj = tj.carrier_hz * tj.aoa_rad.sin();
                        if xi == xj || zi == zj {
                            return Err(Error::InvalidConfig(format!(
                                "electronic angles collide between transmissions {i} and {j}"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let rad2deg = 180.0 / std::f64::consts::PI;
        let doc = SceneJson {
            f_nyq: self.f_nyq_hz,
            b: self.b_hz,
            model: match self.model {
                ModelClass::SharedAoa { .. } => "m1".into(),
                ModelClass::DistinctAoas => "m2".into(),
            },
            carriers: self.carriers(),
            aoas: self.aoas().iter().map(|a| a * rad2deg).collect(),
            seeds: self.transmissions.iter().map(|t| t.baseband_seed).collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<SignalScene> {
        let doc: SceneJson = serde_json::from_str(text)?;
        let deg2rad = std::f64::consts::PI / 180.0;
        if doc.carriers.len() != doc.aoas.len() || doc.carriers.len() != doc.seeds.len() {
            return Err(Error::InvalidConfig(
                "carriers, aoas and seeds must have equal length".into(),
            ));
        }
        let model = match doc.model.as_str() {
            "m1" => ModelClass::SharedAoa {
                theta_rad: doc.aoas.first().copied().unwrap_or(0.0) * deg2rad,
            },
            "m2" => ModelClass::DistinctAoas,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown model class {other:?} (expected \"m1\" or \"m2\")"
                )))
            }
        };
        let scene = SignalScene {
            transmissions: doc
                .carriers
                .iter()
                .zip(&doc.aoas)
                .zip(&doc.seeds)
                .map(|((&f, &a), &s)| Transmission {
                    carrier_hz: f,
                    aoa_rad: a * deg2rad,
                    bandwidth_hz: doc.b,
                    power: 1.0,
                    baseband_seed: s,
                })
                .collect(),
            f_nyq_hz: doc.f_nyq,
            b_hz: doc.b,
            model,
        };
        scene.validate()?;
        Ok(scene)
    }
}

/// Receiver hardware layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ArrayKind {
    /// Uniform linear array along the x axis.
    Ula,
    /// Two orthogonal ULAs sharing the origin sensor (2N-1 sensors total).
    LShape,
    /// One antenna feeding N parallel mixing channels.
    MwcSingleSensor,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub kind: ArrayKind,
    /// Sensors per axis, or mixing channels for the single-sensor kind.
    pub n_per_axis: usize,
    pub spacing_m: f64,
    pub wave_speed: f64,
}

impl ArrayGeometry {
    pub fn ula(n: usize, spacing_m: f64) -> Self {
        ArrayGeometry {
            kind: ArrayKind::Ula,
            n_per_axis: n,
            spacing_m,
            wave_speed: DEFAULT_WAVE_SPEED,
        }
    }

    pub fn l_shape(n_per_axis: usize, spacing_m: f64) -> Self {
        ArrayGeometry {
            kind: ArrayKind::LShape,
            n_per_axis,
            spacing_m,
            wave_speed: DEFAULT_WAVE_SPEED,
        }
    }

    pub fn mwc_single_sensor(channels: usize) -> Self {
        ArrayGeometry {
            kind: ArrayKind::MwcSingleSensor,
            n_per_axis: channels,
            // No aperture: one antenna. Kept positive to satisfy validate().
            spacing_m: 1.0,
            wave_speed: DEFAULT_WAVE_SPEED,
        }
    }

    /// Physical sensor count (channels of the single-sensor kind share one).
    pub fn total_sensors(&self) -> usize {
        match self.kind {
            ArrayKind::Ula => self.n_per_axis,
            ArrayKind::LShape => 2 * self.n_per_axis - 1,
            ArrayKind::MwcSingleSensor => 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_per_axis < 2 {
            return Err(Error::InvalidConfig(format!(
                "n_per_axis = {} must be >= 2",
                self.n_per_axis
            )));
        }
        if !(self.spacing_m > 0.0) || !(self.wave_speed > 0.0) {
            return Err(Error::InvalidConfig(
                "spacing and wave speed must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Spacing guard for unambiguous joint recovery: phase differences stay
    /// inside one wrap only when d < c/f_nyq.
    pub fn check_unambiguous_spacing(&self, f_nyq_hz: f64) -> Result<()> {
        let limit = self.wave_speed / f_nyq_hz;
        if self.spacing_m >= limit {
            return Err(Error::InvalidConfig(format!(
                "sensor spacing {} m >= {} m = c/f_nyq aliases the carrier phase",
                self.spacing_m, limit
            )));
        }
        Ok(())
    }
}

/// JSON form of a scene; angles cross this boundary in degrees.
#[derive(Serialize, Deserialize)]
struct SceneJson {
    f_nyq: f64,
    b: f64,
    model: String,
    carriers: Vec<f64>,
    aoas: Vec<f64>,
    seeds: Vec<u64>,
}

/// Draw a scene by rejection sampling: carriers uniform over the admissible
/// range until all pairwise separations exceed B; distinct-angle scenes also
/// redraw until both electronic-angle families are pairwise distinct. Gives up
/// after [`MAX_DRAW_ATTEMPTS`].
pub fn draw_scene(
    m: usize,
    f_nyq_hz: f64,
    b_hz: f64,
    model: &ModelClass,
    seed: u64,
) -> Result<SignalScene> {
    if m == 0 {
        return Err(Error::InvalidConfig("m must be >= 1".into()));
    }
    if !(f_nyq_hz > 0.0) || !(b_hz > 0.0) {
        return Err(Error::InvalidConfig("f_nyq and B must be positive".into()));
    }
    if (m as f64) * b_hz >= f_nyq_hz / 2.0 {
        return Err(Error::InvalidConfig(format!(
            "m*B = {} must stay below f_nyq/2 = {} for separable bands",
            (m as f64) * b_hz,
            f_nyq_hz / 2.0
        )));
    }
    if let ModelClass::SharedAoa { theta_rad } = model {
        if !(theta_rad.abs() < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidConfig(
                "shared angle must lie strictly inside (-pi/2, pi/2)".into(),
            ));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = (f_nyq_hz - b_hz) / 2.0;
    let aoa_half = 85.0f64.to_radians();

    for attempt in 1..=MAX_DRAW_ATTEMPTS {
        let carriers: Vec<f64> = (0..m).map(|_| rng.random_range(-half..half)).collect();
        let mut separated = true;
        'sep: for i in 0..m {
            for j in (i + 1)..m {
                if (carriers[i] - carriers[j]).abs() <= b_hz {
                    separated = false;
                    break 'sep;
                }
            }
        }
        if !separated {
            continue;
        }

        let aoas: Vec<f64> = match model {
            ModelClass::SharedAoa { theta_rad } => vec![*theta_rad; m],
            ModelClass::DistinctAoas => (0..m)
                .map(|_| rng.random_range(-aoa_half..aoa_half))
                .collect(),
        };
        if matches!(model, ModelClass::DistinctAoas) {
            let mut ok = true;
            'el: for i in 0..m {
                for j in (i + 1)..m {
                    let xi = carriers[i] * aoas[i].cos();
                    let xj = carriers[j] * aoas[j].cos();
                    let zi = carriers[i] * aoas[i].sin();
                    let zj = carriers[j] * aoas[j].sin();
                    if xi == xj || zi == zj {
                        ok = false;
                        break 'el;
                    }
                }
            }
            if !ok {
                continue;
            }
        }

        let transmissions = carriers
            .iter()
            .zip(&aoas)
            .map(|(&f, &a)| Transmission {
                carrier_hz: f,
                aoa_rad: a,
                bandwidth_hz: b_hz,
                power: 1.0,
                baseband_seed: rng.random(),
            })
            .collect();
        let scene = SignalScene {
            transmissions,
            f_nyq_hz,
            b_hz,
            model: model.clone(),
        };
        scene.validate()?;
        let _ = attempt;
        return Ok(scene);
    }
    Err(Error::ConstraintUnsatisfiable {
        what: format!("scene with m = {m}, B = {b_hz}, f_nyq = {f_nyq_hz}"),
        attempts: MAX_DRAW_ATTEMPTS,
    })
}

/// Spectral-line representation of one baseband: complex amplitudes on the
/// grid `q * delta_f` for `q in -q_max..=q_max`. The waveform is the finite
/// tone sum `s(t) = sum_q a_q e^{j 2 pi q delta_f t}`, which makes every
/// later mixing/filtering step exact.
#[derive(Clone, Debug)]
pub(crate) struct BasebandBins {
    pub q_max: i64,
    /// Length `2*q_max + 1`, index `q + q_max`.
    pub coeffs: Vec<Complex64>,
}

impl BasebandBins {
    /// Realized (windowed) average power; tones on the grid are orthogonal
    /// over a full window, so this is exactly the coefficient energy.
    pub fn power(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Draw the spectral lines: i.i.d. circular Gaussian amplitudes with total
/// expected power 1. `max_q` caps the half-width (used to keep bins off the
/// wrap-around bin of an n-point grid).
pub(crate) fn baseband_bins(
    bandwidth_hz: f64,
    delta_f: f64,
    max_q: Option<i64>,
    seed: u64,
) -> BasebandBins {
    let mut q_max = ((bandwidth_hz / 2.0) / delta_f).floor() as i64;
    if let Some(mx) = max_q {
        q_max = q_max.min(mx);
    }
    if q_max < 0 {
        q_max = 0;
    }
    let n_bins = (2 * q_max + 1) as usize;
    let sigma = (1.0 / n_bins as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = (0..n_bins)
        .map(|_| {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            Complex64::new(re, im) * (sigma / 2.0f64.sqrt())
        })
        .collect();
    BasebandBins { q_max, coeffs }
}

/// Generate a zero-mean, wide-sense-stationary complex baseband series:
/// band-limited to `±bandwidth/2`, expected average power 1, fully determined
/// by the seed.
pub fn gen_baseband(
    bandwidth_hz: f64,
    n_samples: usize,
    rate_hz: f64,
    seed: u64,
) -> Result<Vec<Complex64>> {
    if n_samples == 0 {
        return Err(Error::InvalidConfig(
            "gen_baseband needs at least one sample".into(),
        ));
    }
    if !(bandwidth_hz > 0.0) || !(rate_hz > 0.0) {
        return Err(Error::InvalidConfig(
            "bandwidth and rate must be positive".into(),
        ));
    }
    if bandwidth_hz > rate_hz {
        return Err(Error::InvalidConfig(format!(
            "bandwidth {bandwidth_hz} exceeds series rate {rate_hz}"
        )));
    }
    let delta_f = rate_hz / n_samples as f64;
    let max_q = ((n_samples as i64) - 1) / 2;
    let bins = baseband_bins(bandwidth_hz, delta_f, Some(max_q), seed);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); n_samples];
    for (idx, &a) in bins.coeffs.iter().enumerate() {
        let q = idx as i64 - bins.q_max;
        let slot = q.rem_euclid(n_samples as i64) as usize;
        spectrum[slot] += a;
    }
    // Unnormalized inverse DFT turns amplitude-at-bin into the tone sum.
    let mut planner = FftPlanner::new();
    planner.plan_fft_inverse(n_samples).process(&mut spectrum);
    Ok(spectrum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::FftPlanner;

    const B: f64 = 50e6;
    const F_NYQ: f64 = 1e9;

    #[test]
    fn draw_is_deterministic_and_valid() {
        let model = ModelClass::SharedAoa { theta_rad: 0.0 };
        let a = draw_scene(3, F_NYQ, B, &model, 42).unwrap();
        let b = draw_scene(3, F_NYQ, B, &model, 42).unwrap();
        for (ta, tb) in a.transmissions.iter().zip(&b.transmissions) {
            assert_eq!(ta.carrier_hz.to_bits(), tb.carrier_hz.to_bits());
            assert_eq!(ta.baseband_seed, tb.baseband_seed);
        }
        a.validate().unwrap();
    }

    #[test]
    fn draw_rejects_infeasible_occupancy() {
        let model = ModelClass::SharedAoa { theta_rad: 0.0 };
        let err = draw_scene(11, F_NYQ, B, &model, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidConfig(_)), "got {err:?}");
    }

    #[test]
    fn distinct_angle_scenes_satisfy_electronic_inequalities() {
        for seed in 0..20u64 {
            let s = draw_scene(4, F_NYQ, B, &ModelClass::DistinctAoas, seed).unwrap();
            s.validate().unwrap();
            let f = s.carriers();
            let a = s.aoas();
            for i in 0..4 {
                for j in (i + 1)..4 {
                    assert!(f[i] * a[i].cos() != f[j] * a[j].cos());
                    assert!(f[i] * a[i].sin() != f[j] * a[j].sin());
                }
            }
        }
    }

    #[test]
    fn baseband_rejects_empty_request() {
        assert!(gen_baseband(B, 0, 65e6, 3).is_err());
    }

    #[test]
    fn baseband_is_seed_deterministic_and_seed_sensitive() {
        let a = gen_baseband(B, 1024, 65e6, 9).unwrap();
        let b = gen_baseband(B, 1024, 65e6, 9).unwrap();
        let c = gen_baseband(B, 1024, 65e6, 10).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x == y));
        assert!(a.iter().zip(&c).any(|(x, y)| x != y));
    }

    /// Oracle: forward FFT of the series; energy strictly outside ±B/2 must
    /// be negligible, in-band average power near 1.
    #[test]
    fn baseband_band_energy_and_power() {
        let n = 4096usize;
        let rate = 65e6;
        let s = gen_baseband(B, n, rate, 7).unwrap();
        let mut buf = s.clone();
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        let delta_f = rate / n as f64;
        let mut inband = 0.0;
        let mut outband = 0.0;
        for (r, v) in buf.iter().enumerate() {
            let q = if r <= n / 2 { r as i64 } else { r as i64 - n as i64 };
            let freq = q as f64 * delta_f;
            if freq.abs() <= B / 2.0 {
                inband += v.norm_sqr();
            } else {
                outband += v.norm_sqr();
            }
        }
        assert!(
            outband < 1e-10 * inband,
            "out-of-band energy {outband} vs in-band {inband}"
        );
        let avg_power = s.iter().map(|z| z.norm_sqr()).sum::<f64>() / n as f64;
        assert!(
            (avg_power - 1.0).abs() < 0.1,
            "realized average power {avg_power}"
        );
    }

    #[test]
    fn distinct_seeds_decorrelate() {
        let n = 16384usize;
        let a = gen_baseband(B, n, 65e6, 100).unwrap();
        let b = gen_baseband(B, n, 65e6, 101).unwrap();
        let dot: Complex64 = a.iter().zip(&b).map(|(x, y)| x * y.conj()).sum();
        let na = a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let nb = b.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let rho = dot.norm() / (na * nb);
        assert!(rho < 0.1, "cross-seed correlation {rho}");
    }

    #[test]
    fn scene_json_round_trip() {
        let scene = draw_scene(3, F_NYQ, B, &ModelClass::DistinctAoas, 5).unwrap();
        let text = scene.to_json().unwrap();
        let back = SignalScene::from_json(&text).unwrap();
        assert_eq!(scene.m(), back.m());
        for (a, b) in scene.transmissions.iter().zip(&back.transmissions) {
            assert_eq!(a.carrier_hz.to_bits(), b.carrier_hz.to_bits());
            assert_eq!(a.baseband_seed, b.baseband_seed);
            assert!((a.aoa_rad - b.aoa_rad).abs() < 1e-12);
        }
        // same seeds regenerate identical waveforms
        let wa = scene.transmissions[0].baseband(256, 65e6).unwrap();
        let wb = back.transmissions[0].baseband(256, 65e6).unwrap();
        assert!(wa.iter().zip(&wb).all(|(x, y)| x == y));
    }

    #[test]
    fn shared_angle_at_edge_is_rejected() {
        let model = ModelClass::SharedAoa {
            theta_rad: std::f64::consts::FRAC_PI_2,
        };
        assert!(draw_scene(2, F_NYQ, B, &model, 0).is_err());
    }
}
