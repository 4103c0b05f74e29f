//! Ground truth and evaluation: exhaustive search, brute-force
//! submodularity checks, ambiguity functions and Monte-Carlo maximum
//! likelihood.

use std::f64::consts::PI;

use nalgebra::Matrix4;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fim::{FimAtom, FimCache};
use crate::measures::{a_opt, crlb, Criterion};
use crate::model::{simulate_measurements, RadarConfig, TargetParams, SPEED_OF_LIGHT};
use crate::selection::{Budgets, Selection};

pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;
pub const MAX_SUBMODULAR_GROUND: usize = 10;
pub const DB_FLOOR: f64 = -80.0;

/// Binomial coefficient, saturating.
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc.saturating_mul((n - j) as u128) / (j + 1) as u128;
    }
    acc
}

/// Calls `visit` with every `k`-subset of `0..n` in lexicographic order.
pub fn for_each_combination(n: usize, k: usize, mut visit: impl FnMut(&[usize])) {
    if k > n {
        return;
    }
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        visit(&c);
        let Some(pos) = (0..k).rev().find(|&j| c[j] < n - k + j) else {
            return;
        };
        c[pos] += 1;
        for j in pos + 1..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

/// What the transmit side of an exhaustive search enumerates.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransmitUnit {
    /// `K_P` individual transmit pulses.
    Pulses,
    /// `K_I` whole transmitters, each with all its pulses.
    Transmitters(usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExhaustiveOptions {
    pub cap: u128,
    pub unit: TransmitUnit,
}

impl Default for ExhaustiveOptions {
    fn default() -> Self {
        Self {
            cap: DEFAULT_ENUMERATION_CAP,
            unit: TransmitUnit::Pulses,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExhaustiveResult {
    pub selection: Selection,
    /// Natural-sign objective of the optimizer.
    pub objective: f64,
    /// Number of selections evaluated.
    pub evaluated: u128,
}

/// Enumerates all selections with exactly the budgeted numbers of transmit
/// units and receivers and returns the best under `criterion`, the
/// lexicographically smallest element set on exact ties.
pub fn exhaustive_search(
    cache: &FimCache,
    criterion: &Criterion,
    budgets: Budgets,
    options: ExhaustiveOptions,
) -> Result<ExhaustiveResult> {
    if !criterion.is_fim_based() {
        return Err(Error::IllegalCombination(
            "exhaustive FIM search needs an A, D or E criterion; use exhaustive_search_by".into(),
        ));
    }
    let np = cache.num_tx_pulses();
    let nr = cache.receivers();
    let pulses = cache.pulses();
    let groups: Vec<Vec<usize>> = match options.unit {
        TransmitUnit::Pulses => {
            budgets.check(np, nr)?;
            (0..np).map(|a| vec![a]).collect()
        }
        TransmitUnit::Transmitters(ki) => {
            if ki > cache.transmitters() || budgets.receivers > nr {
                return Err(Error::InfeasibleBudget(format!(
                    "K_I = {ki}, K_R = {} for {} transmitters and {nr} receivers",
                    budgets.receivers,
                    cache.transmitters()
                )));
            }
            (0..cache.transmitters())
                .map(|i| (i * pulses..(i + 1) * pulses).collect())
                .collect()
        }
    };
    let k_tx = match options.unit {
        TransmitUnit::Pulses => budgets.pulses,
        TransmitUnit::Transmitters(ki) => ki,
    };
    let count = binomial(groups.len(), k_tx).saturating_mul(binomial(nr, budgets.receivers));
    if count > options.cap {
        return Err(Error::EnumerationCap {
            count,
            cap: options.cap,
        });
    }
    let eps = criterion.resolve_epsilon(cache);
    let d_len = cache.grid_len();

    // Best so far: (cost, transmit combination, receiver combination).
    let mut best: Option<(f64, Vec<usize>, Vec<usize>)> = None;
    let mut failure = None;
    let mut evaluated = 0u128;
    for_each_combination(nr, budgets.receivers, |rx_combo| {
        let mut rx = vec![false; nr];
        rx_combo.iter().for_each(|&r| rx[r] = true);
        let group_info: Vec<Vec<FimAtom>> = groups
            .iter()
            .map(|g| {
                let mut acc = vec![Matrix4::zeros(); d_len];
                for &a in g {
                    for (s, f) in acc.iter_mut().zip(cache.pulse_information(a, &rx)) {
                        *s += f;
                    }
                }
                acc
            })
            .collect();
        // Depth-first over transmit combinations with running sums.
        let mut partial = vec![vec![Matrix4::zeros(); d_len]; k_tx + 1];
        let mut combo = Vec::with_capacity(k_tx);
        dfs(
            &group_info,
            k_tx,
            0,
            &mut combo,
            &mut partial,
            &mut |combo, fims| {
                evaluated += 1;
                let cost = match criterion.cost(fims, eps) {
                    Ok(c) => c,
                    Err(e) => {
                        failure.get_or_insert(e);
                        return;
                    }
                };
                let better = match &best {
                    None => true,
                    Some((b, bc, br)) => {
                        cost < *b
                            || (cost == *b && (combo, rx_combo) < (bc.as_slice(), br.as_slice()))
                    }
                };
                if better {
                    best = Some((cost, combo.to_vec(), rx_combo.to_vec()));
                }
            },
        );
    });
    if let Some(e) = failure {
        return Err(e);
    }
    let (cost, combo, rx_combo) = best.ok_or(Error::EmptySelection)?;
    let mut sel = cache.empty_selection();
    for g in combo {
        for &a in &groups[g] {
            sel.set_element(a, true)?;
        }
    }
    for r in rx_combo {
        sel.set_receiver(r, true);
    }
    Ok(ExhaustiveResult {
        selection: sel,
        objective: criterion.natural(cost),
        evaluated,
    })
}

fn dfs(
    info: &[Vec<FimAtom>],
    k: usize,
    start: usize,
    combo: &mut Vec<usize>,
    partial: &mut [Vec<FimAtom>],
    leaf: &mut dyn FnMut(&[usize], &[FimAtom]),
) {
    let depth = combo.len();
    if depth == k {
        leaf(combo, &partial[depth]);
        return;
    }
    for g in start..=info.len() - (k - depth) {
        let (lo, hi) = partial.split_at_mut(depth + 1);
        for ((next, prev), f) in hi[0].iter_mut().zip(&lo[depth]).zip(&info[g]) {
            *next = prev + f;
        }
        combo.push(g);
        dfs(info, k, g + 1, combo, partial, leaf);
        combo.pop();
    }
}

/// Exhaustive minimization of an arbitrary cost over exactly-budgeted
/// pulse/receiver selections.
pub fn exhaustive_search_by(
    transmitters: usize,
    pulses: usize,
    receivers: usize,
    budgets: Budgets,
    cap: u128,
    mut cost: impl FnMut(&Selection) -> Result<f64>,
) -> Result<(Selection, f64)> {
    let np = transmitters * pulses;
    budgets.check(np, receivers)?;
    let count = binomial(np, budgets.pulses).saturating_mul(binomial(receivers, budgets.receivers));
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let mut best: Option<(f64, Selection)> = None;
    let mut failure = None;
    for_each_combination(np, budgets.pulses, |pc| {
        for_each_combination(receivers, budgets.receivers, |rc| {
            let sel = Selection::from_elements(
                transmitters,
                pulses,
                receivers,
                pc.iter().copied().chain(rc.iter().map(|r| np + r)),
            )
            .expect("indices are in range");
            match cost(&sel) {
                Ok(c) if best.as_ref().is_none_or(|(b, _)| c < *b) => best = Some((c, sel)),
                Ok(_) => {}
                Err(e) => {
                    failure.get_or_insert(e);
                }
            }
        });
    });
    if let Some(e) = failure {
        return Err(e);
    }
    best.map(|(c, s)| (s, c)).ok_or(Error::EmptySelection)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    Normalization,
    Monotonicity,
    DiminishingReturns,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub violation: Violation,
    pub smaller: Vec<usize>,
    pub larger: Vec<usize>,
    pub element: Option<usize>,
    /// Gain (or value) on the smaller set and on the larger set.
    pub values: (f64, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubmodularReport {
    pub normalized: bool,
    pub monotone: bool,
    pub submodular: bool,
    pub counterexample: Option<Counterexample>,
    pub checks: u64,
}

impl SubmodularReport {
    pub fn passed(&self) -> bool {
        self.normalized && self.monotone && self.submodular
    }
}

fn members(mask: u32) -> Vec<usize> {
    (0..32).filter(|&b| mask >> b & 1 == 1).collect()
}

/// Exhaustively checks normalization, monotonicity and diminishing returns of
/// `f` on the subsets of a ground set of `size` elements. Comparisons allow a
/// slack of `rel_tol` times the largest `|f|`.
pub fn check_submodular(
    size: usize,
    rel_tol: f64,
    mut f: impl FnMut(&[usize]) -> f64,
) -> Result<SubmodularReport> {
    if size > MAX_SUBMODULAR_GROUND {
        return Err(Error::GroundSetTooLarge {
            size,
            max: MAX_SUBMODULAR_GROUND,
        });
    }
    let n = 1u32 << size;
    let values: Vec<f64> = (0..n).map(|m| f(&members(m))).collect();
    let tol = rel_tol * values.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(f64::MIN_POSITIVE);
    let mut report = SubmodularReport {
        normalized: true,
        monotone: true,
        submodular: true,
        counterexample: None,
        checks: 1,
    };
    let fail = |report: &mut SubmodularReport, c: Counterexample| {
        match c.violation {
            Violation::Normalization => report.normalized = false,
            Violation::Monotonicity => report.monotone = false,
            Violation::DiminishingReturns => report.submodular = false,
        }
        report.counterexample.get_or_insert(c);
    };
    if values[0].abs() > tol {
        fail(
            &mut report,
            Counterexample {
                violation: Violation::Normalization,
                smaller: vec![],
                larger: vec![],
                element: None,
                values: (values[0], 0.0),
            },
        );
    }
    for s in 0..n {
        for u in (0..size).filter(|&u| s >> u & 1 == 0) {
            report.checks += 1;
            let with = s | 1 << u;
            if values[with as usize] < values[s as usize] - tol {
                fail(
                    &mut report,
                    Counterexample {
                        violation: Violation::Monotonicity,
                        smaller: members(s),
                        larger: members(with),
                        element: Some(u),
                        values: (values[s as usize], values[with as usize]),
                    },
                );
            }
        }
    }
    for large in 0..n {
        let free: Vec<usize> = (0..size).filter(|&u| large >> u & 1 == 0).collect();
        if free.is_empty() {
            continue;
        }
        // Every submask of `large`.
        let mut small = large;
        loop {
            for &u in &free {
                report.checks += 1;
                let gs = values[(small | 1 << u) as usize] - values[small as usize];
                let gl = values[(large | 1 << u) as usize] - values[large as usize];
                if gs < gl - tol {
                    fail(
                        &mut report,
                        Counterexample {
                            violation: Violation::DiminishingReturns,
                            smaller: members(small),
                            larger: members(large),
                            element: Some(u),
                            values: (gs, gl),
                        },
                    );
                }
            }
            if small == 0 {
                break;
            }
            small = (small - 1) & large;
        }
    }
    Ok(report)
}

/// Coherent normalized response of a selection at a parameter offset, in
/// `[0, 1]`.
pub fn ambiguity(cfg: &RadarConfig, sel: &Selection, du: f64, dv: f64) -> Result<f64> {
    sel.check_dims(cfg)?;
    if sel.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(ambiguity_unchecked(cfg, sel, du, dv))
}

fn ambiguity_unchecked(cfg: &RadarConfig, sel: &Selection, du: f64, dv: f64) -> f64 {
    let lambda = cfg.wavelength();
    let pulses: Vec<(usize, usize)> = sel.selected_pulses().collect();
    let receivers: Vec<usize> = sel.selected_receivers().collect();
    let mut total = Complex64::new(0.0, 0.0);
    for &r in &receivers {
        for &(i, p) in &pulses {
            let spatial = 2.0 * PI * cfg.pair_offset(r, i) * du / lambda;
            for n in 0..cfg.samples {
                let t = p as f64 * cfg.pri + n as f64 * cfg.sample_period;
                total += Complex64::from_polar(1.0, spatial + 4.0 * PI * dv * t / lambda);
            }
        }
    }
    total.norm() / (receivers.len() * pulses.len() * cfg.samples) as f64
}

/// Magnitude in dB, optionally floored.
pub fn to_db(x: f64, floor: Option<f64>) -> f64 {
    let db = 20.0 * x.log10();
    match floor {
        Some(f) => db.max(f),
        None => db,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub axis: Vec<f64>,
    /// Normalized response in dB, 0 at the origin.
    pub db: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Surface {
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
    /// `db[a][b]` at `(du[a], dv[b])`.
    pub db: Vec<Vec<f64>>,
}

fn trace(
    cfg: &RadarConfig,
    sel: &Selection,
    axis: &[f64],
    at: impl Fn(f64) -> (f64, f64),
) -> Result<Trace> {
    sel.check_dims(cfg)?;
    if sel.is_empty() {
        return Err(Error::EmptySelection);
    }
    let db = axis
        .iter()
        .map(|&x| {
            let (du, dv) = at(x);
            to_db(ambiguity_unchecked(cfg, sel, du, dv), None)
        })
        .collect();
    Ok(Trace {
        axis: axis.to_vec(),
        db,
    })
}

/// Velocity cut of the ambiguity function at `du = 0`.
pub fn ambiguity_velocity(cfg: &RadarConfig, sel: &Selection, dv_axis: &[f64]) -> Result<Trace> {
    trace(cfg, sel, dv_axis, |v| (0.0, v))
}

/// Angle cut (beampattern) at `dv = 0`.
pub fn beampattern(cfg: &RadarConfig, sel: &Selection, du_axis: &[f64]) -> Result<Trace> {
    trace(cfg, sel, du_axis, |u| (u, 0.0))
}

pub fn ambiguity_joint(
    cfg: &RadarConfig,
    sel: &Selection,
    du_axis: &[f64],
    dv_axis: &[f64],
) -> Result<Surface> {
    sel.check_dims(cfg)?;
    if sel.is_empty() {
        return Err(Error::EmptySelection);
    }
    let db = du_axis
        .iter()
        .map(|&u| {
            dv_axis
                .iter()
                .map(|&v| to_db(ambiguity_unchecked(cfg, sel, u, v), None))
                .collect()
        })
        .collect();
    Ok(Surface {
        du: du_axis.to_vec(),
        dv: dv_axis.to_vec(),
        db,
    })
}

/// Highest level between the first null and the end of the `lobes`-th
/// sidelobe of a one-sided trace starting at the mainlobe peak. Nulls are
/// the local minima of the sampled trace. `None` when no null is found.
pub fn near_sidelobe_level(db: &[f64], lobes: usize) -> Option<f64> {
    let minima: Vec<usize> = (1..db.len().saturating_sub(1))
        .filter(|&k| db[k] <= db[k - 1] && db[k] < db[k + 1])
        .collect();
    let first = *minima.first()?;
    let end = minima.get(lobes).copied().unwrap_or(db.len() - 1);
    db[first..=end].iter().copied().reduce(f64::max)
}

/// Evenly spaced axis with `n` points over `[lo, hi]`.
pub fn axis(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Coarse search grid for the maximum-likelihood estimator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchGrid {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeModel {
    /// Amplitudes equal the configured ones.
    #[default]
    Known,
    /// Amplitudes re-estimated by least squares at every candidate.
    LeastSquares,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleOptions {
    pub amplitudes: AmplitudeModel,
    /// Cap on the number of coarse candidates (two-target search is the
    /// square of the one-target grid).
    pub max_candidates: usize,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self {
            amplitudes: AmplitudeModel::Known,
            max_candidates: 250_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleReport {
    /// Mean squared error per parameter, `[u1, v1]` or `[u1, v1, u2, v2]`.
    pub mse: Vec<f64>,
    /// 95% confidence half-width of each MSE.
    pub ci_half_width: Vec<f64>,
    /// CRLB diagonal of the same parameters for reference.
    pub crlb: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

/// Received data collapsed onto measurement classes: rows sharing the pair
/// offset and pulse see identical steering, so only their sum matters.
struct Collapsed {
    /// `(offset, t per sample, sum of conj(z) * range phase per sample)`.
    rows: Vec<(f64, Vec<f64>, Vec<Complex64>)>,
    /// Number of original rows in each class.
    counts: Vec<f64>,
    energy: f64,
}

fn range_phase(cfg: &RadarConfig, n: usize, range: f64) -> Complex64 {
    let fast = n as f64 * cfg.sample_period;
    Complex64::from_polar(1.0, 4.0 * PI * cfg.chirp_rate() * fast * range / SPEED_OF_LIGHT)
}

fn collapse(cfg: &RadarConfig, meas: &crate::model::Measurements, range: f64) -> Collapsed {
    use std::collections::BTreeMap;
    let mut classes: BTreeMap<(i64, usize), (Vec<Complex64>, f64)> = BTreeMap::new();
    let mut energy = 0.0;
    for (&(r, i, p), row) in meas.keys.iter().zip(&meas.samples) {
        let entry = classes
            .entry((r as i64 - i as i64, p))
            .or_insert_with(|| (vec![Complex64::new(0.0, 0.0); cfg.samples], 0.0));
        for (n, z) in row.iter().enumerate() {
            entry.0[n] += z.conj() * range_phase(cfg, n, range);
            energy += z.norm_sqr();
        }
        entry.1 += 1.0;
    }
    let mut rows = Vec::new();
    let mut counts = Vec::new();
    for ((k, p), (sums, count)) in classes {
        let t = (0..cfg.samples).map(|n| cfg.sample_time(p, n)).collect();
        rows.push((cfg.index_offset(k), t, sums));
        counts.push(count);
    }
    Collapsed {
        rows,
        counts,
        energy,
    }
}

impl Collapsed {
    /// `sum conj(z) s(u, v)` for a unit-amplitude target.
    fn correlation(&self, lambda: f64, u: f64, v: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (c, t, sums) in &self.rows {
            let spatial = 2.0 * PI * c * u / lambda;
            for (tn, s) in t.iter().zip(sums) {
                acc += s * Complex64::from_polar(1.0, spatial + 4.0 * PI * v * tn / lambda);
            }
        }
        acc
    }

    /// `sum s(u1, v1) conj(s(u2, v2))` over the selected samples.
    fn cross(&self, lambda: f64, a: (f64, f64), b: (f64, f64)) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for ((c, t, _), count) in self.rows.iter().zip(&self.counts) {
            let spatial = 2.0 * PI * c * (a.0 - b.0) / lambda;
            for tn in t {
                acc += *count * Complex64::from_polar(1.0, spatial + 4.0 * PI * (a.1 - b.1) * tn / lambda);
            }
        }
        acc
    }

    fn samples(&self) -> f64 {
        self.rows
            .iter()
            .zip(&self.counts)
            .map(|((_, t, _), c)| c * t.len() as f64)
            .sum()
    }
}

/// Negative residual energy of the best fit at parameters `x`
/// (`[u1, v1]` or `[u1, v1, u2, v2]`); larger is better.
fn log_likelihood(cfg: &RadarConfig, data: &Collapsed, x: &[f64], model: AmplitudeModel) -> f64 {
    let lambda = cfg.wavelength();
    let m = data.samples();
    if x.len() == 2 {
        let corr = data.correlation(lambda, x[0], x[1]);
        return match model {
            // ||z||^2 - 2 Re(alpha conj(z) s) + |alpha|^2 m
            AmplitudeModel::Known => {
                let a = cfg.alpha[0];
                -(data.energy - 2.0 * (a * corr).re + a.norm_sqr() * m)
            }
            AmplitudeModel::LeastSquares => -(data.energy - corr.norm_sqr() / m),
        };
    }
    let c1 = data.correlation(lambda, x[0], x[1]);
    let c2 = data.correlation(lambda, x[2], x[3]);
    let g = data.cross(lambda, (x[0], x[1]), (x[2], x[3]));
    let (a1, a2) = match model {
        AmplitudeModel::Known => (cfg.alpha[0], cfg.alpha[1]),
        AmplitudeModel::LeastSquares => {
            // Normal equations [[m, g^*], [g, m]] [a1; a2] = [conj(c1); conj(c2)].
            let det = m * m - g.norm_sqr();
            if det.abs() < 1e-12 * m * m {
                let a = c1.conj() / m;
                (a, Complex64::new(0.0, 0.0))
            } else {
                let r1 = c1.conj();
                let r2 = c2.conj();
                ((m * r1 - g.conj() * r2) / det, (m * r2 - g * r1) / det)
            }
        }
    };
    let fit = 2.0 * (a1 * c1 + a2 * c2).re
        - a1.norm_sqr() * m
        - a2.norm_sqr() * m
        - 2.0 * (a1 * a2.conj() * g.conj()).re;
    -(data.energy - fit)
}

/// Coordinate-wise parabolic refinement with step halving.
fn refine(mut x: Vec<f64>, steps: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut h = steps.to_vec();
    let mut fx = f(&x);
    for _ in 0..60 {
        let mut moved = false;
        for k in 0..x.len() {
            if h[k] == 0.0 {
                continue;
            }
            let mut probe = x.clone();
            probe[k] = x[k] - h[k];
            let fm = f(&probe);
            probe[k] = x[k] + h[k];
            let fp = f(&probe);
            if fm > fx || fp > fx {
                let (xn, fnew) = if fp >= fm { (x[k] + h[k], fp) } else { (x[k] - h[k], fm) };
                x[k] = xn;
                fx = fnew;
                moved = true;
                continue;
            }
            let curv = fm - 2.0 * fx + fp;
            if curv < 0.0 {
                let offset = 0.5 * h[k] * (fm - fp) / curv;
                let mut cand = x.clone();
                cand[k] = x[k] + offset.clamp(-h[k], h[k]);
                let fc = f(&cand);
                if fc > fx {
                    x = cand;
                    fx = fc;
                }
            }
        }
        if !moved {
            let mut done = true;
            for (hk, s) in h.iter_mut().zip(steps) {
                *hk *= 0.5;
                if *hk > s * 1e-6 {
                    done = false;
                }
            }
            if done {
                break;
            }
        }
    }
    x
}

fn spacing_of(axis: &[f64]) -> f64 {
    if axis.len() < 2 {
        0.0
    } else {
        (axis[axis.len() - 1] - axis[0]) / (axis.len() - 1) as f64
    }
}

/// Monte-Carlo MSE of the grid-refined maximum-likelihood estimate of the
/// target parameters. One target uses the first configured amplitude; two
/// targets search the square of the coarse grid.
pub fn mle_mse(
    cfg: &RadarConfig,
    sel: &Selection,
    truth: &[TargetParams],
    trials: usize,
    seed: u64,
    search: &SearchGrid,
    options: MleOptions,
) -> Result<MleReport> {
    cfg.validate()?;
    sel.check_dims(cfg)?;
    if sel.is_empty() {
        return Err(Error::EmptySelection);
    }
    if trials == 0 {
        return Err(Error::InvalidConfig("at least one trial is needed".into()));
    }
    if truth.is_empty() || truth.len() > 2 || cfg.alpha.len() < truth.len() {
        return Err(Error::TargetCount {
            expected: truth.len().clamp(1, 2),
            found: cfg.alpha.len().min(truth.len()),
        });
    }
    if search.u.is_empty() || search.v.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let within = |axis: &[f64], x: f64| {
        let lo = axis.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = axis.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        x >= lo - 1e-12 * lo.abs().max(1.0) && x <= hi + 1e-12 * hi.abs().max(1.0)
    };
    if truth.iter().any(|t| !within(&search.u, t.u) || !within(&search.v, t.v)) {
        return Err(Error::SearchGridExcludesTruth);
    }
    let points: Vec<(f64, f64)> = search
        .u
        .iter()
        .flat_map(|&u| search.v.iter().map(move |&v| (u, v)))
        .collect();
    let candidates = points.len().pow(truth.len() as u32);
    if candidates > options.max_candidates {
        return Err(Error::EnumerationCap {
            count: candidates as u128,
            cap: options.max_candidates as u128,
        });
    }
    let steps: Vec<f64> = truth
        .iter()
        .flat_map(|_| [spacing_of(&search.u), spacing_of(&search.v)])
        .collect();
    let exact: Vec<f64> = truth.iter().flat_map(|t| [t.u, t.v]).collect();
    let dims = exact.len();
    // Range enters only through a known phase; use the first target's.
    let range = truth[0].range;
    let mut sq = vec![Vec::with_capacity(trials); dims];
    for trial in 0..trials {
        let trial_seed = seed ^ (trial as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let meas = simulate_measurements(cfg, truth, sel, trial_seed)?;
        let data = collapse(cfg, &meas, range);
        let ll = |x: &[f64]| log_likelihood(cfg, &data, x, options.amplitudes);
        let mut best = (f64::NEG_INFINITY, vec![0.0; dims]);
        if dims == 2 {
            for &(u, v) in &points {
                let val = ll(&[u, v]);
                if val > best.0 {
                    best = (val, vec![u, v]);
                }
            }
        } else {
            for &(u1, v1) in &points {
                for &(u2, v2) in &points {
                    let x = [u1, v1, u2, v2];
                    let val = ll(&x);
                    if val > best.0 {
                        best = (val, x.to_vec());
                    }
                }
            }
        }
        let est = refine(best.1, &steps, ll);
        for k in 0..dims {
            sq[k].push((est[k] - exact[k]).powi(2));
        }
    }
    let mut mse = Vec::with_capacity(dims);
    let mut ci = Vec::with_capacity(dims);
    for errs in &sq {
        let n = errs.len() as f64;
        let mean = errs.iter().sum::<f64>() / n;
        let var = if errs.len() > 1 {
            errs.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        mse.push(mean);
        ci.push(1.96 * var.sqrt() / n.sqrt());
    }
    let crlb_diag = single_target_crlb(cfg, sel, dims)?;
    Ok(MleReport {
        mse,
        ci_half_width: ci,
        crlb: crlb_diag,
        trials,
        seed,
    })
}

/// CRLB diagonal for one target (`dims == 2`) or the two targets at the
/// configured amplitudes with zero separation excluded (`dims == 4`, reported
/// as NaN since it depends on the separation).
fn single_target_crlb(cfg: &RadarConfig, sel: &Selection, dims: usize) -> Result<Vec<f64>> {
    if dims != 2 {
        return Ok(vec![f64::NAN; dims]);
    }
    let mut f = nalgebra::Matrix2::zeros();
    for r in sel.selected_receivers() {
        for (i, p) in sel.selected_pulses() {
            for n in 0..cfg.samples {
                f += crate::fim::single_target_block(cfg, r, i, p, n, 0)?;
            }
        }
    }
    Ok(match f.try_inverse() {
        Some(c) => vec![c[(0, 0)], c[(1, 1)]],
        None => vec![f64::INFINITY; 2],
    })
}

/// One row of a per-budget evaluation table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetRow {
    pub budgets: Budgets,
    pub objective: f64,
    /// Trace of the (weighted) CRLB at every grid point.
    pub crlb_trace: Vec<f64>,
    pub selection: Selection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<BudgetRow>,
    pub velocity: Option<Trace>,
    pub beampattern: Option<Trace>,
    pub mle: Option<MleReport>,
}

impl BudgetRow {
    pub fn evaluate(cache: &FimCache, criterion: &Criterion, budgets: Budgets, sel: Selection) -> Result<Self> {
        let fims = cache.assemble(&sel)?;
        let crlb_trace = fims.iter().map(crlb_trace_of).collect();
        Ok(Self {
            budgets,
            objective: criterion.evaluate(cache, &sel)?,
            crlb_trace,
            selection: sel,
        })
    }
}

/// Trace of the CRLB (infinite when the FIM is singular).
pub fn crlb_trace_of(f: &FimAtom) -> f64 {
    a_opt(f)
}

/// Largest CRLB eigenvalue and log-determinant of the FIM, for reports.
pub fn crlb_summary(f: &FimAtom) -> (f64, f64, f64) {
    let c = crlb(f);
    let tr = if c.singular { f64::INFINITY } else { c.matrix.trace() };
    let lmax = crate::measures::e_opt(f);
    let logdet = f.determinant().max(0.0).ln();
    (tr, lmax, logdet)
}
