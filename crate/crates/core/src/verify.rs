//! Self-check suite: closed-form atoms against the derivative outer product,
//! derivatives against finite differences, submodularity of the greedy
//! objectives by enumeration, and the convex relaxation sandwich.
//!
//! The atom and an extra set function can be injected so that deliberately
//! broken implementations can be shown to fail.

use std::f64::consts::PI;

use nalgebra::Matrix4;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::convex::{self, boolean_gamma};
use crate::error::Result;
use crate::fim::{self, build_grid, DeltaGrid, FimAtom, FimCache};
use crate::greedy::logdet_value;
use crate::measures::{Criterion, FrameKernel, FrameNorm};
use crate::model::{
    derivative_vector, noiseless_sample, ArrayOrigin, DeltaTheta, RadarConfig, TargetParams, TimeOrigin,
};
use crate::oracle::{check_submodular, exhaustive_search_by};
use crate::selection::Budgets;

/// `(4 / sigma^2) sum_n Re{g g^H}` of the derivative vectors of a pair of
/// targets.
pub fn outer_product_atom(
    cfg: &RadarConfig,
    targets: &[TargetParams; 2],
    r: usize,
    i: usize,
    p: usize,
) -> Result<FimAtom> {
    let mut f = Matrix4::zeros();
    for n in 0..cfg.samples {
        let g = derivative_vector(cfg, targets, r, i, p, n)?;
        for a in 0..4 {
            for b in 0..4 {
                f[(a, b)] += (g[a] * g[b].conj()).re;
            }
        }
    }
    Ok(f * (4.0 / (cfg.noise_std * cfg.noise_std)))
}

/// Draws a small valid configuration with complex amplitudes and random
/// weights, spacing and time origin.
pub fn random_config(rng: &mut impl Rng, max_elements: usize) -> RadarConfig {
    let max = max_elements.max(1);
    let transmitters = rng.random_range(1..=max);
    let receivers = rng.random_range(1..=max);
    let pulses = rng.random_range(1..=max);
    let samples = rng.random_range(1..=4);
    let fc = rng.random_range(24e9..81e9);
    let pulse_duration = rng.random_range(10e-6..40e-6);
    let pri = pulse_duration * rng.random_range(1.5..3.0);
    let tx_shift = (pri - pulse_duration) / (transmitters as f64 + 1.0) * rng.random_range(0.1..0.9);
    let sample_period = pri / samples as f64 * rng.random_range(0.2..1.0);
    let amp = |rng: &mut dyn rand::RngCore| {
        Complex64::from_polar(rng.random_range(0.3..2.0), rng.random_range(-PI..PI))
    };
    let alpha = vec![amp(rng), amp(rng)];
    let spacing = if rng.random_bool(0.5) {
        None
    } else {
        Some(299_792_458.0 / fc * rng.random_range(0.3..1.0))
    };
    RadarConfig {
        fc,
        bandwidth: rng.random_range(50e6..500e6),
        pulse_duration,
        pri,
        tx_shift,
        sample_period,
        samples,
        transmitters,
        receivers,
        pulses,
        spacing,
        noise_std: rng.random_range(0.5..2.0),
        alpha,
        gamma: std::array::from_fn(|_| rng.random_range(0.5..2.0)),
        time_origin: if rng.random_bool(0.5) {
            TimeOrigin::Start
        } else {
            TimeOrigin::Center
        },
        array_origin: if rng.random_bool(0.5) {
            ArrayOrigin::Physical
        } else {
            ArrayOrigin::Center
        },
    }
}

/// Random target pair at a common range inside the unambiguous velocity
/// region.
pub fn random_targets(rng: &mut impl Rng, cfg: &RadarConfig) -> [TargetParams; 2] {
    let vmax = cfg.wavelength() / (4.0 * cfg.pri);
    // A shared range: a range difference adds a fast-time phase to the
    // cross terms that the closed-form atoms do not model.
    let range = rng.random_range(1.0..100.0);
    std::array::from_fn(|_| TargetParams {
        u: rng.random_range(-0.9..0.9),
        v: rng.random_range(-vmax..vmax),
        range,
    })
}

/// Relative Frobenius distance `|a - b| / max(|b|, tiny)`.
pub fn relative_error(a: &FimAtom, b: &FimAtom) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}

/// Worst relative error between the analytic derivative and central
/// differences of the noiseless samples, with parameter step `h`. Components
/// are compared against `max(|analytic|, 1e-3 |full vector|)` so that
/// (nearly) vanishing components are not judged by rounding noise alone.
pub fn finite_difference_error(
    cfg: &RadarConfig,
    targets: &[TargetParams; 2],
    r: usize,
    i: usize,
    p: usize,
    n: usize,
    h: f64,
) -> Result<f64> {
    let g = derivative_vector(cfg, targets, r, i, p, n)?;
    let scale = g.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut worst = 0.0f64;
    for k in 0..4 {
        let shifted = |sign: f64| {
            let mut t = *targets;
            let q = k / 2;
            if k % 2 == 0 {
                t[q].u += sign * h;
            } else {
                t[q].v += sign * h;
            }
            noiseless_sample(cfg, &t, r, i, p, n)
        };
        let fd = (shifted(1.0)? - shifted(-1.0)?) / (2.0 * h);
        let denom = g[k].norm().max(1e-3 * scale).max(f64::MIN_POSITIVE);
        worst = worst.max((fd - g[k]).norm() / denom);
    }
    Ok(worst)
}

pub type AtomHook<'a> = &'a dyn Fn(&RadarConfig, usize, usize, usize, DeltaTheta) -> Result<FimAtom>;

/// Injectable pieces of the suite.
pub struct Hooks<'a> {
    /// Closed-form atom under test.
    pub atom: AtomHook<'a>,
    /// Extra set function on a ground set of the given size that must pass
    /// the submodularity check.
    pub objective: Option<(usize, &'a dyn Fn(&[usize]) -> f64)>,
}

impl Default for Hooks<'_> {
    fn default() -> Self {
        Self {
            atom: &fim::atom,
            objective: None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub seed: u64,
    pub fim_draws: usize,
    pub derivative_draws: usize,
    /// Random configurations per submodularity check.
    pub submodular_configs: usize,
    /// Largest ground set enumerated for `G` and number of pulses for `h`.
    pub max_ground: usize,
    pub fim_tolerance: f64,
    pub derivative_tolerance: f64,
    pub derivative_step: f64,
    /// Relative slack of the submodularity comparisons.
    pub submodular_tolerance: f64,
    pub relaxation_tolerance: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            fim_draws: 1000,
            derivative_draws: 200,
            submodular_configs: 20,
            max_ground: 8,
            fim_tolerance: 1e-10,
            derivative_tolerance: 1e-5,
            derivative_step: 1e-6,
            submodular_tolerance: 1e-9,
            relaxation_tolerance: 1e-5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn push(&mut self, name: &str, outcome: Result<(bool, String)>) {
        let (passed, detail) = outcome.unwrap_or_else(|e| (false, format!("error: {e}")));
        self.checks.push(CheckResult {
            name: name.to_string(),
            passed,
            detail,
        });
    }
}

/// Closed-form atoms against the outer product at random targets.
pub fn check_fim_oracle(opts: &VerifyOptions, atom: AtomHook<'_>) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut worst = 0.0f64;
    for _ in 0..opts.fim_draws {
        let cfg = random_config(&mut rng, 3);
        let targets = random_targets(&mut rng, &cfg);
        let r = rng.random_range(0..cfg.receivers);
        let i = rng.random_range(0..cfg.transmitters);
        let p = rng.random_range(0..cfg.pulses);
        let dtheta = DeltaTheta::new(targets[0].u - targets[1].u, targets[0].v - targets[1].v);
        let closed = atom(&cfg, r, i, p, dtheta)?;
        let oracle = outer_product_atom(&cfg, &targets, r, i, p)?;
        worst = worst.max(relative_error(&closed, &oracle));
    }
    Ok((
        worst < opts.fim_tolerance,
        format!("{} draws, worst relative error {worst:.3e}", opts.fim_draws),
    ))
}

pub fn check_derivatives(opts: &VerifyOptions) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(1));
    let mut worst = 0.0f64;
    for _ in 0..opts.derivative_draws {
        let cfg = random_config(&mut rng, 3);
        let targets = random_targets(&mut rng, &cfg);
        let r = rng.random_range(0..cfg.receivers);
        let i = rng.random_range(0..cfg.transmitters);
        let p = rng.random_range(0..cfg.pulses);
        let n = rng.random_range(0..cfg.samples);
        worst = worst.max(finite_difference_error(&cfg, &targets, r, i, p, n, opts.derivative_step)?);
    }
    Ok((
        worst < opts.derivative_tolerance,
        format!("{} draws, worst relative error {worst:.3e}", opts.derivative_draws),
    ))
}

/// Small grid around the origin in resolution cells.
fn small_grid(cfg: &RadarConfig) -> Result<DeltaGrid> {
    DeltaGrid::resolution_cells(cfg, 2.0, 5, 0.5)
}

/// Random configuration whose ground set `I P + R` lies in `lo..=hi`.
fn config_with_ground(rng: &mut impl Rng, lo: usize, hi: usize) -> RadarConfig {
    loop {
        let cfg = random_config(rng, 3);
        let g = cfg.num_tx_pulses() + cfg.receivers;
        if (lo..=hi).contains(&g) {
            return cfg;
        }
    }
}

/// `G(X) = MFP(U) - MFP(U \ X)` with both normalizations.
pub fn check_g_submodular(opts: &VerifyOptions) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(2));
    let mut largest = 0;
    for k in 0..opts.submodular_configs {
        let cfg = config_with_ground(&mut rng, 4, opts.max_ground);
        let grid = small_grid(&cfg)?;
        let ground = cfg.num_tx_pulses() + cfg.receivers;
        largest = largest.max(ground);
        for norm in [FrameNorm::Literal, FrameNorm::Cosine] {
            let kernel = FrameKernel::build(&cfg, &grid, norm)?;
            let report = check_submodular(ground, opts.submodular_tolerance, |x| {
                kernel.g_value(x).expect("elements are in range")
            })?;
            if !report.passed() {
                return Ok((
                    false,
                    format!("config {k} ({norm:?}): {:?}", report.counterexample),
                ));
            }
        }
    }
    Ok((
        true,
        format!("{} configs, ground sets up to {largest}", opts.submodular_configs),
    ))
}

/// Regularized log-determinant of the pulses with all receivers fixed.
pub fn check_h_submodular(opts: &VerifyOptions) -> Result<(bool, String)> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed.wrapping_add(3));
    let mut largest = 0;
    for k in 0..opts.submodular_configs {
        let mut cfg = random_config(&mut rng, 3);
        // Spread the pulse candidates over transmitters and pulses.
        let np = rng.random_range(2..=opts.max_ground.max(2));
        cfg.transmitters = [1, 2, 4].into_iter().filter(|t| np % t == 0).last().unwrap_or(1);
        cfg.pulses = np / cfg.transmitters;
        cfg.tx_shift = (cfg.pri - cfg.pulse_duration) / (cfg.transmitters as f64 + 1.0);
        largest = largest.max(np);
        let grid = small_grid(&cfg)?;
        let cache = FimCache::build(&cfg, &grid, true)?;
        let criterion = Criterion::d_opt();
        let eps = criterion.resolve_epsilon(&cache);
        let rx = vec![true; cfg.receivers];
        let report = check_submodular(np, opts.submodular_tolerance, |x| {
            let mut pulses = vec![false; np];
            x.iter().for_each(|&a| pulses[a] = true);
            logdet_value(&cache, &criterion, eps, &pulses, &rx).expect("valid masks")
        })?;
        if !report.passed() {
            return Ok((false, format!("config {k}: {:?}", report.counterexample)));
        }
    }
    Ok((
        true,
        format!("{} configs, up to {largest} pulses", opts.submodular_configs),
    ))
}

/// Boolean optimum <= relaxed optimum and rounded <= relaxed optimum on a toy
/// instance for every budget pair.
pub fn check_relaxation_sandwich(opts: &VerifyOptions) -> Result<(bool, String)> {
    let mut cfg = crate::scenarios::radar(2, 2, 2);
    cfg.alpha = vec![Complex64::new(1.0, 0.0), Complex64::new(0.8, 0.3)];
    let grid = build_grid((-0.3, 0.3), (-6.0, 6.0), 5, 5, 0.2)?;
    let cache = FimCache::build(&cfg, &grid, true)?;
    let criterion = Criterion::e_opt();
    let mut worst_gap = f64::INFINITY;
    for kp in 1..=cache.num_tx_pulses() {
        for kr in 1..=cache.receivers() {
            let budgets = Budgets::new(kp, kr);
            let (_, opt_cost) = exhaustive_search_by(2, 2, 2, budgets, u128::MAX, |s| {
                Ok(-boolean_gamma(&cache, &criterion, s)?)
            })?;
            let opt = -opt_cost;
            let (sol, rounded) = convex::design(&cache, &criterion, budgets, 20, opts.seed)?;
            let slack = opts.relaxation_tolerance * sol.gamma_star.abs().max(1.0);
            if opt > sol.gamma_star + slack || rounded.gamma > sol.gamma_star + slack {
                return Ok((
                    false,
                    format!(
                        "budgets ({kp}, {kr}): optimum {opt:.6e}, rounded {:.6e}, relaxed {:.6e}",
                        rounded.gamma, sol.gamma_star
                    ),
                ));
            }
            worst_gap = worst_gap.min(sol.gamma_star - opt);
        }
    }
    Ok((true, format!("smallest relaxed-minus-optimum gap {worst_gap:.3e}")))
}

/// Runs every check and collects the results.
pub fn run(opts: &VerifyOptions, hooks: &Hooks<'_>) -> VerifyReport {
    let mut report = VerifyReport::default();
    report.push("fim_oracle", check_fim_oracle(opts, hooks.atom));
    report.push("finite_differences", check_derivatives(opts));
    report.push("g_submodular", check_g_submodular(opts));
    report.push("h_submodular", check_h_submodular(opts));
    report.push("relaxation_sandwich", check_relaxation_sandwich(opts));
    if let Some((size, f)) = hooks.objective {
        report.push(
            "injected_objective",
            check_submodular(size, opts.submodular_tolerance, f).map(|r| {
                (r.passed(), format!("{:?}", r.counterexample))
            }),
        );
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> VerifyOptions {
        VerifyOptions {
            fim_draws: 50,
            derivative_draws: 50,
            submodular_configs: 3,
            max_ground: 6,
            ..VerifyOptions::default()
        }
    }

    #[test]
    fn default_suite_passes() {
        let report = run(&quick(), &Hooks::default());
        assert!(report.passed(), "{report:#?}");
    }

    #[test]
    fn conjugated_cross_phase_is_caught() {
        let broken = |cfg: &RadarConfig, r, i, p, d: DeltaTheta| {
            fim::atom(cfg, r, i, p, DeltaTheta::new(-d.du, -d.dv))
        };
        let hooks = Hooks {
            atom: &broken,
            objective: None,
        };
        let (ok, _) = check_fim_oracle(&quick(), hooks.atom).unwrap();
        assert!(!ok);
    }

    #[test]
    fn injected_supermodular_objective_fails() {
        let square = |s: &[usize]| (s.len() * s.len()) as f64;
        let hooks = Hooks {
            atom: &fim::atom,
            objective: Some((5, &square)),
        };
        let opts = VerifyOptions {
            fim_draws: 1,
            derivative_draws: 1,
            submodular_configs: 1,
            max_ground: 4,
            ..VerifyOptions::default()
        };
        let report = run(&opts, &hooks);
        let injected = report.checks.iter().find(|c| c.name == "injected_objective").unwrap();
        assert!(!injected.passed);
        assert!(!report.passed());
    }
}
