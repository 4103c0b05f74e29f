#![allow(dead_code)]

use std::f64::consts::PI;

use mimo_placement::model::SPEED_OF_LIGHT;
use mimo_placement::{ArrayOrigin, RadarConfig, TargetParams, TimeOrigin};
use num_complex::Complex64;
use proptest::prelude::*;

pub fn radar(transmitters: usize, pulses: usize, receivers: usize) -> RadarConfig {
    RadarConfig {
        fc: 77e9,
        bandwidth: 100e6,
        pulse_duration: 20e-6,
        pri: 50e-6,
        tx_shift: 1e-6,
        sample_period: 2.5e-6,
        samples: 4,
        transmitters,
        receivers,
        pulses,
        spacing: None,
        noise_std: 1.0,
        alpha: vec![Complex64::new(1.0, 0.0), Complex64::new(0.8, -0.3)],
        gamma: [1.0; 4],
        time_origin: TimeOrigin::Start,
        array_origin: ArrayOrigin::Physical,
    }
}

/// Straight-line evaluation of one sample, written from the model equations
/// without touching the library's helpers.
pub fn direct_sample(
    cfg: &RadarConfig,
    targets: &[TargetParams],
    r: usize,
    i: usize,
    p: usize,
    n: usize,
) -> Complex64 {
    let lambda = SPEED_OF_LIGHT / cfg.fc;
    let d = cfg.spacing.unwrap_or(lambda / 2.0);
    let d_i = -((i + 1) as f64) * d;
    let d_r = (r + 1) as f64 * d;
    let reference = match cfg.array_origin {
        ArrayOrigin::Physical => 0.0,
        ArrayOrigin::Center => 0.5 * (cfg.receivers as f64 - cfg.transmitters as f64) * d,
    };
    let t0 = match cfg.time_origin {
        TimeOrigin::Start => 0.0,
        TimeOrigin::Center => {
            0.5 * ((cfg.pulses - 1) as f64 * cfg.pri + (cfg.samples - 1) as f64 * cfg.sample_period)
        }
    };
    let slope = cfg.bandwidth / cfg.pulse_duration;
    let t = p as f64 * cfg.pri + n as f64 * cfg.sample_period - t0;
    let fast = n as f64 * cfg.sample_period;
    let mut y = Complex64::new(0.0, 0.0);
    for (q, tg) in targets.iter().enumerate() {
        let h = Complex64::from_polar(1.0, 4.0 * PI * tg.v * t / lambda);
        let beta = Complex64::from_polar(1.0, 4.0 * PI * slope * fast * tg.range / SPEED_OF_LIGHT);
        let phi = Complex64::from_polar(1.0, 2.0 * PI * cfg.fc * (d_i + d_r - reference) * tg.u / SPEED_OF_LIGHT);
        y += cfg.alpha[q] * h * beta * phi;
    }
    y
}

/// Central-difference gradient of `direct_sample` over `[u1, v1, u2, v2]`.
pub fn numeric_gradient(
    cfg: &RadarConfig,
    targets: &[TargetParams; 2],
    r: usize,
    i: usize,
    p: usize,
    n: usize,
    h: f64,
) -> [Complex64; 4] {
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for k in 0..4 {
        let shift = |s: f64| {
            let mut t = *targets;
            let tg = &mut t[k / 2];
            if k % 2 == 0 {
                tg.u += s;
            } else {
                tg.v += s;
            }
            direct_sample(cfg, &t, r, i, p, n)
        };
        out[k] = (shift(h) - shift(-h)) / (2.0 * h);
    }
    out
}

/// `(4 / sigma^2) sum_n Re(g g^H)` from numerically differentiated samples.
pub fn numeric_atom(
    cfg: &RadarConfig,
    targets: &[TargetParams; 2],
    r: usize,
    i: usize,
    p: usize,
    h: f64,
) -> nalgebra::Matrix4<f64> {
    let mut f = nalgebra::Matrix4::zeros();
    for n in 0..cfg.samples {
        let g = numeric_gradient(cfg, targets, r, i, p, n, h);
        for a in 0..4 {
            for b in 0..4 {
                f[(a, b)] += 4.0 / (cfg.noise_std * cfg.noise_std) * (g[a] * g[b].conj()).re;
            }
        }
    }
    f
}

pub fn rel_frobenius(a: &nalgebra::Matrix4<f64>, b: &nalgebra::Matrix4<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

pub fn origins() -> impl Strategy<Value = (TimeOrigin, ArrayOrigin)> {
    (
        prop_oneof![Just(TimeOrigin::Start), Just(TimeOrigin::Center)],
        prop_oneof![Just(ArrayOrigin::Physical), Just(ArrayOrigin::Center)],
    )
}

/// Small random radars: sizes 1..=4, complex amplitudes, random weights.
pub fn small_radar() -> impl Strategy<Value = RadarConfig> {
    (
        (1usize..=4, 1usize..=4, 1usize..=4, 1usize..=4),
        (0.2f64..2.0, -PI..PI, 0.2f64..2.0, -PI..PI),
        prop::array::uniform4(0.1f64..10.0),
        origins(),
        0.3f64..3.0,
    )
        .prop_map(|((ti, p, r, n), (m1, a1, m2, a2), gamma, (to, ao), noise)| {
            let mut cfg = radar(ti, p, r);
            cfg.samples = n;
            cfg.alpha = vec![Complex64::from_polar(m1, a1), Complex64::from_polar(m2, a2)];
            cfg.gamma = gamma;
            cfg.time_origin = to;
            cfg.array_origin = ao;
            cfg.noise_std = noise;
            cfg
        })
}

pub fn target_pair() -> impl Strategy<Value = [TargetParams; 2]> {
    (-0.9f64..0.9, -30.0f64..30.0, -0.9f64..0.9, -30.0f64..30.0, 0.0f64..100.0).prop_map(
        |(u1, v1, u2, v2, range)| {
            [
                TargetParams { u: u1, v: v1, range },
                TargetParams { u: u2, v: v2, range },
            ]
        },
    )
}

/// Analytic gradient over `[u1, v1, u2, v2]`, differentiating each target's
/// straight-line term: `d/du = j 2 pi c / lambda`, `d/dv = j 4 pi t / lambda`.
pub fn direct_gradient(
    cfg: &RadarConfig,
    targets: &[TargetParams; 2],
    r: usize,
    i: usize,
    p: usize,
    n: usize,
) -> [Complex64; 4] {
    let lambda = SPEED_OF_LIGHT / cfg.fc;
    let d = cfg.spacing.unwrap_or(lambda / 2.0);
    let reference = match cfg.array_origin {
        ArrayOrigin::Physical => 0.0,
        ArrayOrigin::Center => 0.5 * (cfg.receivers as f64 - cfg.transmitters as f64) * d,
    };
    let c = (r as f64 - i as f64) * d - reference;
    let t0 = match cfg.time_origin {
        TimeOrigin::Start => 0.0,
        TimeOrigin::Center => {
            0.5 * ((cfg.pulses - 1) as f64 * cfg.pri + (cfg.samples - 1) as f64 * cfg.sample_period)
        }
    };
    let t = p as f64 * cfg.pri + n as f64 * cfg.sample_period - t0;
    let mut out = [Complex64::new(0.0, 0.0); 4];
    for q in 0..2 {
        let mut solo = cfg.clone();
        solo.alpha = vec![cfg.alpha[q]];
        let y = direct_sample(&solo, &targets[q..q + 1], r, i, p, n);
        out[2 * q] = Complex64::new(0.0, 2.0 * PI * c / lambda) * y;
        out[2 * q + 1] = Complex64::new(0.0, 4.0 * PI * t / lambda) * y;
    }
    out
}

/// `(4 / sigma^2) sum_n Re(g g^H)` from [`direct_gradient`].
pub fn outer_product_atom(
    cfg: &RadarConfig,
    targets: &[TargetParams; 2],
    r: usize,
    i: usize,
    p: usize,
) -> nalgebra::Matrix4<f64> {
    let mut f = nalgebra::Matrix4::zeros();
    for n in 0..cfg.samples {
        let g = direct_gradient(cfg, targets, r, i, p, n);
        for a in 0..4 {
            for b in 0..4 {
                f[(a, b)] += 4.0 / (cfg.noise_std * cfg.noise_std) * (g[a] * g[b].conj()).re;
            }
        }
    }
    f
}
