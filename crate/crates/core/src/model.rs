//! Physical configuration and the post-matched-filter measurement model.
//!
//! Transmitters sit at `-d, -2d, ..., -Id` and receivers at `d, 2d, ..., Rd`.
//! A sample of pulse `p`, fast-time index `n`, for the pair `(i, r)` is
//!
//! ```text
//! y[n] = sum_q alpha_q * h(t; v_q) * beta_q(n Ts) * phi_ri(u_q)
//! h(t; v)    = exp(j 4 pi v t / lambda)
//! beta_q(t)  = exp(j 4 pi k t R_q / c),  k = B / Tc
//! phi_ri(u)  = exp(j 2 pi (d_i + d_r) u / lambda)
//! ```
//!
//! where `t` is the slow/fast time of the sample measured from the configured
//! [`TimeOrigin`] and `d_i + d_r` is taken relative to the [`ArrayOrigin`].
//! Indices `i`, `r`, `p`, `n` are zero-based everywhere.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::selection::Selection;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Reference instant for the sample times entering the Doppler phase.
///
/// With amplitudes known, the Fisher information on velocity grows with the
/// distance of a sample from this reference, so the choice changes which
/// pulses are informative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeOrigin {
    /// `t = p Tp + n Ts`.
    #[default]
    Start,
    /// `t` measured from the midpoint of the candidate pulse train.
    Center,
}

/// Reference point for the pair offsets `d_i + d_r` entering the steering
/// phase. Like [`TimeOrigin`], it decides which elements carry most angle
/// information when amplitudes are known.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArrayOrigin {
    /// Offsets measured from the physical origin between the two arrays.
    #[default]
    Physical,
    /// Offsets measured from the midpoint of the candidate virtual array.
    Center,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RadarConfig {
    /// Carrier frequency, Hz.
    pub fc: f64,
    /// Sweep bandwidth, Hz.
    pub bandwidth: f64,
    /// Chirp duration `Tc`, s.
    pub pulse_duration: f64,
    /// Pulse repetition interval `Tp`, s.
    pub pri: f64,
    /// Time shift between adjacent transmitter waveforms, s.
    pub tx_shift: f64,
    /// Sampling period `Ts`, s.
    pub sample_period: f64,
    /// Samples per pulse `N`.
    pub samples: usize,
    pub transmitters: usize,
    pub receivers: usize,
    /// Candidate pulses per transmitter.
    pub pulses: usize,
    /// Inter-element spacing, m. Half a wavelength when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spacing: Option<f64>,
    /// Noise standard deviation of each complex matched-filter output.
    pub noise_std: f64,
    /// Complex target amplitudes, one per target.
    pub alpha: Vec<Complex64>,
    /// Compensation weights `[u1, v1, u2, v2]`.
    pub gamma: [f64; 4],
    #[serde(default)]
    pub time_origin: TimeOrigin,
    #[serde(default)]
    pub array_origin: ArrayOrigin,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetParams {
    /// Direction cosine.
    pub u: f64,
    /// Radial velocity, m/s.
    pub v: f64,
    /// Range, m. Only affects the simulated fast-time phase.
    #[serde(default)]
    pub range: f64,
}

impl TargetParams {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v, range: 0.0 }
    }
}

/// Parameter difference between the two targets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaTheta {
    pub du: f64,
    pub dv: f64,
}

impl DeltaTheta {
    pub fn new(du: f64, dv: f64) -> Self {
        Self { du, dv }
    }
}

impl RadarConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.fc
    }

    pub fn spacing(&self) -> f64 {
        self.spacing.unwrap_or_else(|| self.wavelength() / 2.0)
    }

    /// Chirp rate `B / Tc`.
    pub fn chirp_rate(&self) -> f64 {
        self.bandwidth / self.pulse_duration
    }

    pub fn num_tx_pulses(&self) -> usize {
        self.transmitters * self.pulses
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        let finite_pos = |x: f64| x.is_finite() && x > 0.0;
        if !finite_pos(self.fc) {
            return bad("carrier frequency must be positive");
        }
        if !finite_pos(self.bandwidth) {
            return bad("bandwidth must be positive");
        }
        if !finite_pos(self.pulse_duration) {
            return bad("pulse duration must be positive");
        }
        if !(self.pri > self.pulse_duration) {
            return bad("PRI must exceed the pulse duration");
        }
        if !finite_pos(self.sample_period) {
            return bad("sampling period must be positive");
        }
        if self.samples == 0 {
            return bad("at least one sample per pulse is required");
        }
        if self.samples as f64 * self.sample_period > self.pri * (1.0 + 1e-12) {
            return bad("N * Ts must not exceed the PRI");
        }
        if !(self.tx_shift >= 0.0) {
            return bad("transmitter time shift must be non-negative");
        }
        if !(self.pulse_duration + self.transmitters as f64 * self.tx_shift < self.pri) {
            return bad("Tc + I * t_sh must be below the PRI");
        }
        if self.transmitters == 0 || self.receivers == 0 || self.pulses == 0 {
            return bad("I, R and P must be at least 1");
        }
        if !finite_pos(self.spacing()) {
            return bad("element spacing must be positive");
        }
        if !finite_pos(self.noise_std) {
            return bad("noise standard deviation must be positive");
        }
        if self.alpha.is_empty() {
            return bad("at least one target amplitude is required");
        }
        if self.gamma.iter().any(|g| !finite_pos(*g)) {
            return Err(Error::NonPositiveWeight);
        }
        Ok(())
    }

    fn time_reference(&self) -> f64 {
        match self.time_origin {
            TimeOrigin::Start => 0.0,
            TimeOrigin::Center => {
                0.5 * ((self.pulses - 1) as f64 * self.pri
                    + (self.samples - 1) as f64 * self.sample_period)
            }
        }
    }

    /// Time of sample `n` of pulse `p` relative to the configured origin.
    pub fn sample_time(&self, p: usize, n: usize) -> f64 {
        p as f64 * self.pri + n as f64 * self.sample_period - self.time_reference()
    }

    pub fn tx_position(&self, i: usize) -> f64 {
        -((i + 1) as f64) * self.spacing()
    }

    pub fn rx_position(&self, r: usize) -> f64 {
        (r + 1) as f64 * self.spacing()
    }

    /// Sum of transmitter and receiver positions, `d_i + d_r`, relative to
    /// the configured [`ArrayOrigin`].
    pub fn pair_offset(&self, r: usize, i: usize) -> f64 {
        self.index_offset(r as i64 - i as i64)
    }

    /// Pair offset of every pair with `r - i = k`.
    pub fn index_offset(&self, k: i64) -> f64 {
        let reference = match self.array_origin {
            ArrayOrigin::Physical => 0.0,
            ArrayOrigin::Center => 0.5 * (self.receivers as f64 - self.transmitters as f64),
        };
        (k as f64 - reference) * self.spacing()
    }

    /// Nominal angular resolution in direction cosine, `lambda / (2 aperture)`
    /// with the aperture spanning all candidate elements.
    pub fn angle_resolution(&self) -> f64 {
        let aperture = (self.transmitters + self.receivers) as f64 * self.spacing();
        self.wavelength() / (2.0 * aperture)
    }

    /// Nominal velocity resolution, `lambda / (2 P Tp)`.
    pub fn velocity_resolution(&self) -> f64 {
        self.wavelength() / (2.0 * self.pulses as f64 * self.pri)
    }

    /// Weights that express the CRLB in squared resolution cells.
    pub fn resolution_weights(&self) -> [f64; 4] {
        let gu = 1.0 / self.angle_resolution();
        let gv = 1.0 / self.velocity_resolution();
        [gu, gv, gu, gv]
    }

    fn check_indices(&self, r: usize, i: usize, p: usize, n: usize) -> Result<()> {
        let check = |what, index, len| {
            if index < len {
                Ok(())
            } else {
                Err(Error::IndexOutOfRange { what, index, len })
            }
        };
        check("receiver", r, self.receivers)?;
        check("transmitter", i, self.transmitters)?;
        check("pulse", p, self.pulses)?;
        check("sample", n, self.samples)
    }
}

/// Positions of the candidate transmitters and receivers on the array axis.
pub fn element_positions(cfg: &RadarConfig) -> (Vec<f64>, Vec<f64>) {
    let tx = (0..cfg.transmitters).map(|i| cfg.tx_position(i)).collect();
    let rx = (0..cfg.receivers).map(|r| cfg.rx_position(r)).collect();
    (tx, rx)
}

/// Noiseless contribution of a single target with amplitude `alpha`.
pub(crate) fn target_term(
    cfg: &RadarConfig,
    target: &TargetParams,
    alpha: Complex64,
    r: usize,
    i: usize,
    p: usize,
    n: usize,
) -> Complex64 {
    let lambda = cfg.wavelength();
    let t = cfg.sample_time(p, n);
    let fast = n as f64 * cfg.sample_period;
    let doppler = 4.0 * PI * target.v * t / lambda;
    let range = 4.0 * PI * cfg.chirp_rate() * fast * target.range / SPEED_OF_LIGHT;
    let steering = 2.0 * PI * cfg.pair_offset(r, i) * target.u / lambda;
    alpha * Complex64::from_polar(1.0, doppler + range + steering)
}

fn amplitude(cfg: &RadarConfig, q: usize) -> Complex64 {
    cfg.alpha.get(q).copied().unwrap_or_default()
}

/// Noiseless sample `y_{r,i,p}[n]`, summed over all targets.
pub fn noiseless_sample(
    cfg: &RadarConfig,
    targets: &[TargetParams],
    r: usize,
    i: usize,
    p: usize,
    n: usize,
) -> Result<Complex64> {
    cfg.check_indices(r, i, p, n)?;
    if targets.is_empty() {
        return Err(Error::TargetCount {
            expected: 1,
            found: 0,
        });
    }
    Ok(targets
        .iter()
        .enumerate()
        .map(|(q, t)| target_term(cfg, t, amplitude(cfg, q), r, i, p, n))
        .sum())
}

/// Derivative of `y_{r,i,p}[n]` with respect to `[u1, v1, u2, v2]`.
pub fn derivative_vector(
    cfg: &RadarConfig,
    targets: &[TargetParams],
    r: usize,
    i: usize,
    p: usize,
    n: usize,
) -> Result<[Complex64; 4]> {
    if targets.len() != 2 {
        return Err(Error::TargetCount {
            expected: 2,
            found: targets.len(),
        });
    }
    cfg.check_indices(r, i, p, n)?;
    let scale = Complex64::new(0.0, 2.0 * PI / cfg.wavelength());
    let c = cfg.pair_offset(r, i);
    let t2 = 2.0 * cfg.sample_time(p, n);
    let y1 = target_term(cfg, &targets[0], amplitude(cfg, 0), r, i, p, n);
    let y2 = target_term(cfg, &targets[1], amplitude(cfg, 1), r, i, p, n);
    Ok([
        scale * c * y1,
        scale * t2 * y1,
        scale * c * y2,
        scale * t2 * y2,
    ])
}

/// Noisy samples of every selected `(r, i, p)` triple.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurements {
    /// `(r, i, p)` of each row, receiver-major.
    pub keys: Vec<(usize, usize, usize)>,
    /// `samples[k][n]` is sample `n` of row `k`.
    pub samples: Vec<Vec<Complex64>>,
}

/// Draws `z = y + e` with `e ~ CN(0, sigma_e^2)` over the selected triples.
pub fn simulate_measurements(
    cfg: &RadarConfig,
    targets: &[TargetParams],
    selection: &Selection,
    seed: u64,
) -> Result<Measurements> {
    cfg.validate()?;
    selection.check_dims(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let component = Normal::new(0.0, cfg.noise_std / std::f64::consts::SQRT_2)
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let mut keys = Vec::new();
    let mut samples = Vec::new();
    for r in selection.selected_receivers() {
        for (i, p) in selection.selected_pulses() {
            let row = (0..cfg.samples)
                .map(|n| {
                    let y = noiseless_sample(cfg, targets, r, i, p, n)?;
                    let e = Complex64::new(component.sample(&mut rng), component.sample(&mut rng));
                    Ok(y + e)
                })
                .collect::<Result<Vec<_>>>()?;
            keys.push((r, i, p));
            samples.push(row);
        }
    }
    Ok(Measurements { keys, samples })
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub fn small_config() -> RadarConfig {
        RadarConfig {
            fc: 77e9,
            bandwidth: 100e6,
            pulse_duration: 20e-6,
            pri: 50e-6,
            tx_shift: 1e-6,
            sample_period: 2.5e-6,
            samples: 4,
            transmitters: 2,
            receivers: 2,
            pulses: 3,
            spacing: None,
            noise_std: 1.0,
            alpha: vec![Complex64::new(1.0, 0.0), Complex64::new(0.7, 0.2)],
            gamma: [1.0; 4],
            time_origin: TimeOrigin::Start,
            array_origin: ArrayOrigin::Physical,
        }
    }

    #[test]
    fn positions_follow_the_array_layout() {
        let mut cfg = small_config();
        let lambda = cfg.wavelength();
        let (tx, rx) = element_positions(&cfg);
        assert!((tx[0] + lambda / 2.0).abs() < 1e-15);
        assert!((tx[1] + lambda).abs() < 1e-15);

        cfg.receivers = 1;
        let (_, rx1) = element_positions(&cfg);
        assert_eq!(rx1.len(), 1);
        assert!((rx1[0] - lambda / 2.0).abs() < 1e-15);
        assert_eq!(rx.len(), 2);

        cfg.transmitters = 8;
        cfg.receivers = 4;
        cfg.spacing = Some(1.0);
        let (tx, rx) = element_positions(&cfg);
        assert_eq!(tx, (1..=8).map(|k| -(k as f64)).collect::<Vec<_>>());
        assert_eq!(rx, vec![1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn stationary_target_at_broadside_returns_amplitude() {
        let cfg = small_config();
        let target = [TargetParams::new(0.0, 0.0)];
        for p in 0..cfg.pulses {
            for n in 0..cfg.samples {
                let y = noiseless_sample(&cfg, &target, 1, 0, p, n).unwrap();
                assert!((y - cfg.alpha[0]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn silent_second_target_changes_nothing() {
        let mut cfg = small_config();
        cfg.alpha[1] = Complex64::new(0.0, 0.0);
        let a = TargetParams { u: 0.2, v: 3.0, range: 20.0 };
        let b = TargetParams { u: -0.4, v: 1.0, range: 35.0 };
        for n in 0..cfg.samples {
            let one = noiseless_sample(&cfg, &[a], 0, 1, 2, n).unwrap();
            let two = noiseless_sample(&cfg, &[a, b], 0, 1, 2, n).unwrap();
            assert!((one - two).norm() < 1e-15);
        }
    }

    #[test]
    fn zero_amplitude_zeroes_its_derivatives() {
        let mut cfg = small_config();
        cfg.alpha[0] = Complex64::new(0.0, 0.0);
        let targets = [TargetParams::new(0.1, 2.0), TargetParams::new(0.3, -1.0)];
        let g = derivative_vector(&cfg, &targets, 1, 0, 2, 3).unwrap();
        assert_eq!(g[0], Complex64::new(0.0, 0.0));
        assert_eq!(g[1], Complex64::new(0.0, 0.0));
        assert!(g[2].norm() > 0.0);
    }

    #[test]
    fn colocated_pair_at_time_zero_has_no_derivative() {
        // Transmitter 0 at -d and receiver 0 at +d give d_i + d_r = 0.
        let cfg = small_config();
        let targets = [TargetParams::new(0.1, 2.0), TargetParams::new(0.3, -1.0)];
        let g = derivative_vector(&cfg, &targets, 0, 0, 0, 0).unwrap();
        assert!(g.iter().all(|z| z.norm() == 0.0));
    }

    #[test]
    fn derivative_requires_two_targets() {
        let cfg = small_config();
        let err = derivative_vector(&cfg, &[TargetParams::default()], 0, 0, 0, 0);
        assert!(matches!(err, Err(Error::TargetCount { expected: 2, found: 1 })));
    }

    #[test]
    fn out_of_range_index_is_rejected() {
        let cfg = small_config();
        let t = [TargetParams::default()];
        assert!(matches!(
            noiseless_sample(&cfg, &t, 0, 0, cfg.pulses, 0),
            Err(Error::IndexOutOfRange { what: "pulse", .. })
        ));
    }

    #[test]
    fn validation_enforces_the_waveform_fit() {
        let mut cfg = small_config();
        assert!(cfg.validate().is_ok());
        cfg.tx_shift = 15e-6; // 20 + 2 * 15 = 50 us, not below the PRI
        assert!(matches!(cfg.validate(), Err(Error::InvalidConfig(_))));
        cfg.tx_shift = 1e-6;
        cfg.gamma[2] = 0.0;
        assert!(matches!(cfg.validate(), Err(Error::NonPositiveWeight)));
    }

    #[test]
    fn vanishing_noise_reproduces_the_noiseless_model() {
        let mut cfg = small_config();
        cfg.noise_std = 1e-300;
        let targets = [TargetParams::new(0.1, 5.0)];
        let sel = Selection::full(&cfg);
        let z = simulate_measurements(&cfg, &targets, &sel, 7).unwrap();
        for (key, row) in z.keys.iter().zip(&z.samples) {
            for (n, s) in row.iter().enumerate() {
                let y = noiseless_sample(&cfg, &targets, key.0, key.1, key.2, n).unwrap();
                assert!((*s - y).norm() < 1e-290);
            }
        }
    }

    #[test]
    fn simulation_is_deterministic_per_seed() {
        let cfg = small_config();
        let targets = [TargetParams::new(0.1, 5.0)];
        let sel = Selection::full(&cfg);
        let a = simulate_measurements(&cfg, &targets, &sel, 11).unwrap();
        let b = simulate_measurements(&cfg, &targets, &sel, 11).unwrap();
        let c = simulate_measurements(&cfg, &targets, &sel, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
