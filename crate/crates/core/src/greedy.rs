//! Greedy selection: matroid-constrained frame-potential greedy over the
//! complement set, and log-determinant greedy over transmit pulses.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fim::{FimAtom, FimCache};
use crate::measures::{Aggregation, Criterion, CriterionKind, FrameKernel};
pub use crate::selection::{Budgets, Selection};

/// Partition matroid on the complement set: at most `pulse_budget` removed
/// transmit pulses and `receiver_budget` removed receivers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartitionMatroid {
    pub pulse_budget: usize,
    pub receiver_budget: usize,
    /// Number of transmit-pulse elements; receivers follow them.
    pub num_pulses: usize,
}

impl PartitionMatroid {
    pub fn from_budgets(num_pulses: usize, num_receivers: usize, budgets: Budgets) -> Result<Self> {
        budgets.check(num_pulses, num_receivers)?;
        Ok(Self {
            pulse_budget: num_pulses - budgets.pulses,
            receiver_budget: num_receivers - budgets.receivers,
            num_pulses,
        })
    }

    pub fn is_pulse(&self, e: usize) -> bool {
        e < self.num_pulses
    }
}

/// True iff `set` removes no more pulses and receivers than the budgets allow.
pub fn is_independent(matroid: &PartitionMatroid, set: &[usize]) -> bool {
    let pulses = set.iter().filter(|&&e| matroid.is_pulse(e)).count();
    pulses <= matroid.pulse_budget && set.len() - pulses <= matroid.receiver_budget
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GreedyOptions {
    /// Memoize gains in a priority queue and only refresh the top.
    pub lazy: bool,
}

impl Default for GreedyOptions {
    fn default() -> Self {
        Self { lazy: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GreedyOutcome {
    pub selection: Selection,
    /// Complement elements in the order they were accepted.
    pub removed: Vec<usize>,
    /// Objective of the complement, `G(S^c)`.
    pub value: f64,
    pub evaluations: usize,
    pub iterations: usize,
}

/// Heap entry ordered by value, then by lowest element index.
#[derive(Clone, Copy, Debug)]
struct Entry {
    value: f64,
    element: usize,
    round: usize,
}

impl PartialEq for Entry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Entry {}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        self.value
            .total_cmp(&other.value)
            .then_with(|| other.element.cmp(&self.element))
    }
}

/// Runs the pick-best-then-check-independence loop over `pool` with gains
/// supplied by `gain`, calling `accept` for each accepted element. Gains
/// must be non-increasing as elements are accepted when `lazy` is set.
fn greedy_loop(
    mut pool: Vec<usize>,
    lazy: bool,
    mut gain: impl FnMut(usize) -> f64,
    mut admissible: impl FnMut(usize) -> bool,
    mut accept: impl FnMut(usize, f64),
) -> (usize, usize) {
    let mut evaluations = 0;
    let mut iterations = 0;
    if lazy {
        let mut heap: BinaryHeap<Entry> = pool
            .iter()
            .map(|&e| {
                evaluations += 1;
                Entry {
                    value: gain(e),
                    element: e,
                    round: 0,
                }
            })
            .collect();
        let mut round = 0;
        while let Some(top) = heap.pop() {
            if !admissible(top.element) {
                // Never independent again; dropping it now is what the
                // pool removal would do when it surfaces as the argmax.
                continue;
            }
            if top.round != round {
                evaluations += 1;
                heap.push(Entry {
                    value: gain(top.element),
                    element: top.element,
                    round,
                });
                continue;
            }
            iterations += 1;
            accept(top.element, top.value);
            round += 1;
        }
    } else {
        loop {
            pool.retain(|&e| admissible(e));
            if pool.is_empty() {
                break;
            }
            let mut best: Option<(usize, f64)> = None;
            for &e in &pool {
                evaluations += 1;
                let g = gain(e);
                if best.is_none_or(|(_, b)| g > b) {
                    best = Some((e, g));
                }
            }
            let (e, g) = best.expect("pool is not empty");
            iterations += 1;
            accept(e, g);
            pool.retain(|&x| x != e);
        }
    }
    (evaluations, iterations)
}

/// Incremental state of the frame potential of the current selection.
struct FrameState<'a> {
    kernel: &'a FrameKernel,
    mean: &'a [f64],
    selection: Selection,
    /// `K n` for the current class counts `n`.
    field: Vec<f64>,
}

impl<'a> FrameState<'a> {
    fn new(kernel: &'a FrameKernel, selection: Selection) -> Result<Self> {
        let counts = kernel.counts(&selection)?;
        let c = kernel.classes();
        let mean = kernel.mean_kernel();
        let field = (0..c)
            .map(|a| (0..c).map(|b| mean[a * c + b] * counts[b]).sum())
            .collect();
        Ok(Self {
            kernel,
            mean,
            selection,
            field,
        })
    }

    /// Classes whose counts drop when element `e` leaves the selection.
    fn delta(&self, e: usize) -> Vec<usize> {
        let sel = &self.selection;
        let np = sel.num_candidate_pulses();
        let pulses = sel.pulses_per_transmitter();
        if e < np {
            let (i, p) = (e / pulses, e % pulses);
            sel.selected_receivers()
                .map(|r| self.kernel.class_of(r, i, p))
                .collect()
        } else {
            let r = e - np;
            sel.selected_pulses()
                .map(|(i, p)| self.kernel.class_of(r, i, p))
                .collect()
        }
    }

    /// `MFP(S) - MFP(S \ {e})` on the grid-mean kernel.
    fn removal_gain(&self, e: usize) -> f64 {
        let delta = self.delta(e);
        let c = self.kernel.classes();
        let linear: f64 = delta.iter().map(|&a| self.field[a]).sum();
        let quad: f64 = delta
            .iter()
            .map(|&a| delta.iter().map(|&b| self.mean[a * c + b]).sum::<f64>())
            .sum();
        2.0 * linear - quad
    }

    fn remove(&mut self, e: usize) -> Result<()> {
        let delta = self.delta(e);
        let c = self.kernel.classes();
        for &b in &delta {
            for a in 0..c {
                self.field[a] -= self.mean[a * c + b];
            }
        }
        self.selection.set_element(e, false)
    }
}

/// Matroid-constrained greedy maximization of `G` over the complement set.
///
/// Starting from an empty complement, repeatedly takes the element whose
/// removal from the selection raises `G` the most and keeps it if the
/// complement stays independent. Ties go to the lowest element index. Once a
/// class budget is exhausted its remaining elements can never be accepted
/// and are discarded without evaluation.
pub fn greedy_mfp(
    kernel: &FrameKernel,
    criterion: &Criterion,
    budgets: Budgets,
    options: GreedyOptions,
) -> Result<GreedyOutcome> {
    if !matches!(criterion.kind, CriterionKind::Mfp | CriterionKind::Fp) {
        return Err(Error::IllegalCombination(
            "matroid greedy needs a frame-potential criterion".into(),
        ));
    }
    if criterion.aggregation != Aggregation::MeanOverGrid {
        return Err(Error::IllegalCombination(
            "matroid greedy needs mean aggregation over the grid".into(),
        ));
    }
    let full = kernel.full_selection();
    let num_pulses = full.num_candidate_pulses();
    let matroid = PartitionMatroid::from_budgets(num_pulses, full.num_candidate_receivers(), budgets)?;
    let state = std::cell::RefCell::new(FrameState::new(kernel, full.clone())?);
    let mut removed = Vec::new();
    let mut value = 0.0;
    let taken = std::cell::Cell::new((0usize, 0usize));
    let pool: Vec<usize> = (0..full.ground_size()).collect();
    let (evaluations, iterations) = greedy_loop(
        pool,
        options.lazy,
        |e| state.borrow().removal_gain(e),
        |e| {
            let (p, r) = taken.get();
            if matroid.is_pulse(e) {
                p < matroid.pulse_budget
            } else {
                r < matroid.receiver_budget
            }
        },
        |e, g| {
            debug_assert!(is_independent(&matroid, &[removed.as_slice(), &[e]].concat()));
            state.borrow_mut().remove(e).expect("element is in the ground set");
            let (p, r) = taken.get();
            taken.set(if matroid.is_pulse(e) { (p + 1, r) } else { (p, r + 1) });
            removed.push(e);
            value += g;
        },
    );
    let selection = state.into_inner().selection;
    Ok(GreedyOutcome {
        selection,
        removed,
        value,
        evaluations,
        iterations,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LogDetDirection {
    /// Start from all pulses and remove one at a time.
    #[default]
    Removal,
    /// Start from no pulses and add one at a time.
    Forward,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LogDetOptions {
    pub lazy: bool,
    pub direction: LogDetDirection,
}

impl Default for LogDetOptions {
    fn default() -> Self {
        Self {
            lazy: true,
            direction: LogDetDirection::Removal,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogDetOutcome {
    pub selection: Selection,
    /// Transmit-pulse indices in the order they were removed (or added).
    pub trajectory: Vec<usize>,
    /// `h` after each step; `values[0]` is the starting set.
    pub values: Vec<f64>,
    pub evaluations: usize,
    pub direction: LogDetDirection,
}

impl LogDetOutcome {
    /// Pulse mask after the first `steps` steps of the trajectory.
    pub fn mask_after(&self, steps: usize) -> Vec<bool> {
        let forward = self.direction == LogDetDirection::Forward;
        let mut mask = vec![!forward; self.selection.num_candidate_pulses()];
        for &a in &self.trajectory[..steps] {
            mask[a] = forward;
        }
        mask
    }
}

/// Log-determinant state of a pulse set with fixed receivers: per grid point
/// the regularized FIM and its Cholesky factor.
#[derive(Clone, Debug)]
pub struct LogDetState {
    epsilon: f64,
    mask: [bool; 4],
    /// `F_S(d) + eps I` with the parameters outside the mask zeroed.
    regularized: Vec<Matrix4<f64>>,
    factors: Vec<Option<Matrix4<f64>>>,
    value: f64,
}

fn masked(f: &FimAtom, mask: &[bool; 4]) -> Matrix4<f64> {
    Matrix4::from_fn(|a, b| if mask[a] && mask[b] { f[(a, b)] } else { 0.0 })
}

fn logdet_pd(m: &Matrix4<f64>, floor: f64) -> (f64, Option<Matrix4<f64>>) {
    match m.cholesky() {
        Some(c) => {
            let l = c.unpack();
            (2.0 * l.diagonal().iter().map(|x| x.ln()).sum::<f64>(), Some(l))
        }
        None => (
            m.symmetric_eigenvalues().iter().map(|l| l.max(floor).ln()).sum(),
            None,
        ),
    }
}

impl LogDetState {
    /// State for the pulse set whose per-grid information is `fims`.
    pub fn new(fims: &[FimAtom], criterion: &Criterion, epsilon: f64) -> Result<Self> {
        if fims.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let mut mask = [false; 4];
        for &k in criterion.indices() {
            mask[k] = true;
        }
        let mut state = Self {
            epsilon,
            mask,
            regularized: Vec::new(),
            factors: Vec::new(),
            value: 0.0,
        };
        state.reset(fims.iter().map(|f| masked(f, &mask)).collect());
        Ok(state)
    }

    fn reset(&mut self, info: Vec<Matrix4<f64>>) {
        let eps = self.epsilon;
        let shift = 4.0 * eps.ln();
        self.regularized = info.into_iter().map(|f| f + Matrix4::identity() * eps).collect();
        let mut total = 0.0;
        self.factors = self
            .regularized
            .iter()
            .map(|m| {
                let (ld, l) = logdet_pd(m, eps * 1e-12);
                total += ld - shift;
                l
            })
            .collect();
        self.value = total / self.regularized.len() as f64;
    }

    /// `h` of the current set, the grid-mean normalized log-determinant.
    pub fn value(&self) -> f64 {
        self.value
    }

    fn masked_info(&self, info: &[FimAtom]) -> Vec<Matrix4<f64>> {
        info.iter().map(|f| masked(f, &self.mask)).collect()
    }

    /// `h(S -/+ p) - h(S)` where `info` is the information of `p` per grid
    /// point and `sign` is `-1` for removal and `+1` for addition. Uses the
    /// determinant lemma on the Cholesky factor and falls back to a direct
    /// eigenvalue evaluation when the update is numerically indefinite.
    fn update_gain(&self, info: &[FimAtom], sign: f64) -> f64 {
        let mut total = 0.0;
        for ((f, m), l) in self.masked_info(info).iter().zip(&self.regularized).zip(&self.factors) {
            if f.iter().all(|&x| x == 0.0) {
                continue;
            }
            let small = l
                .as_ref()
                .and_then(|l| l.solve_lower_triangular(f).map(|x| (l, x)))
                .and_then(|(l, x)| l.solve_lower_triangular(&x.transpose()));
            let lemma = small.and_then(|b| {
                let core = Matrix4::identity() + b * sign;
                let core = (core + core.transpose()) * 0.5;
                core.cholesky()
                    .map(|c| 2.0 * c.l_dirty().diagonal().iter().map(|x| x.ln()).sum::<f64>())
            });
            total += match lemma {
                Some(v) if v.is_finite() => v,
                _ => {
                    let floor = self.epsilon * 1e-12;
                    logdet_pd(&(m + f * sign), floor).0 - logdet_pd(m, floor).0
                }
            };
        }
        total / self.regularized.len() as f64
    }

    /// `h(S \ {p}) - h(S)` for a pulse whose information is `info`.
    pub fn removal_gain(&self, info: &[FimAtom]) -> f64 {
        self.update_gain(info, -1.0)
    }

    /// `h(S u {p}) - h(S)`.
    pub fn addition_gain(&self, info: &[FimAtom]) -> f64 {
        self.update_gain(info, 1.0)
    }

    fn apply(&mut self, info: &[FimAtom], sign: f64) {
        let eps = self.epsilon;
        let next: Vec<Matrix4<f64>> = self
            .regularized
            .iter()
            .zip(self.masked_info(info))
            .map(|(m, f)| m + f * sign - Matrix4::identity() * eps)
            .collect();
        self.reset(next);
    }

    pub fn remove(&mut self, info: &[FimAtom]) {
        self.apply(info, -1.0);
    }

    pub fn add(&mut self, info: &[FimAtom]) {
        self.apply(info, 1.0);
    }
}

/// `h(S)` evaluated from scratch for a pulse mask with fixed receivers.
pub fn logdet_value(
    cache: &FimCache,
    criterion: &Criterion,
    epsilon: f64,
    pulses: &[bool],
    receivers: &[bool],
) -> Result<f64> {
    let sel = Selection::from_masks(
        cache.transmitters(),
        cache.pulses(),
        pulses.to_vec(),
        receivers.to_vec(),
    )?;
    Ok(LogDetState::new(&cache.assemble(&sel)?, criterion, epsilon)?.value())
}

/// Log-determinant greedy over transmit pulses with the receivers in
/// `fixed_rx` selected and frozen. The removal direction drops pulses from the
/// full set until `budget` remain; the forward direction adds them to the
/// empty set.
pub fn greedy_logdet(
    cache: &FimCache,
    criterion: &Criterion,
    budget: usize,
    fixed_rx: &[bool],
    options: LogDetOptions,
) -> Result<LogDetOutcome> {
    let n = cache.num_tx_pulses();
    if criterion.kind != CriterionKind::DOpt {
        return Err(Error::IllegalCombination(
            "log-determinant greedy needs the D-optimal criterion".into(),
        ));
    }
    if budget > n {
        return Err(Error::InfeasibleBudget(format!(
            "K_P = {budget} exceeds the {n} candidate transmit pulses"
        )));
    }
    if fixed_rx.len() != cache.receivers() {
        return Err(Error::DimensionMismatch("receiver mask length".into()));
    }
    let eps = criterion.resolve_epsilon(cache);
    let info: Vec<Vec<FimAtom>> = (0..n).map(|a| cache.pulse_information(a, fixed_rx)).collect();
    let forward = options.direction == LogDetDirection::Forward;
    let start_mask = vec![!forward; n];
    let start = Selection::from_masks(cache.transmitters(), cache.pulses(), start_mask.clone(), fixed_rx.to_vec())?;
    let current = std::cell::RefCell::new(start_mask);
    let state = std::cell::RefCell::new(LogDetState::new(&cache.assemble(&start)?, criterion, eps)?);
    let steps = if forward { budget } else { n - budget };
    let mut values = vec![state.borrow().value()];
    let mut trajectory = Vec::new();
    let mut evaluations = 0;

    // Removal gains are h(S \ p) - h(S) <= 0 and, by submodularity, only fall
    // as S shrinks; addition gains only fall as S grows. Either way stale
    // values are upper bounds, so the same lazy loop applies.
    let pool: Vec<usize> = (0..n).collect();
    let remaining = std::cell::Cell::new(steps);
    let (evals, _) = greedy_loop(
        pool,
        options.lazy,
        |a| {
            let s = state.borrow();
            if forward {
                s.addition_gain(&info[a])
            } else {
                s.removal_gain(&info[a])
            }
        },
        |_| remaining.get() > 0,
        |a, _| {
            // Rebuild from the assembled information rather than updating in
            // place: subtracting pulses leaves cancellation residue of the
            // order of epsilon once the set is nearly empty.
            let mut m = current.borrow_mut();
            m[a] = forward;
            let sel = Selection::from_masks(cache.transmitters(), cache.pulses(), m.clone(), fixed_rx.to_vec())
                .expect("mask shape is fixed");
            let fims = cache.assemble(&sel).expect("mask shape is fixed");
            let mut s = state.borrow_mut();
            *s = LogDetState::new(&fims, criterion, eps).expect("grid is non-empty");
            values.push(s.value());
            trajectory.push(a);
            remaining.set(remaining.get() - 1);
        },
    );
    evaluations += evals;
    let mut mask = vec![!forward; n];
    for &a in &trajectory {
        mask[a] = forward;
    }
    let selection = Selection::from_masks(cache.transmitters(), cache.pulses(), mask, fixed_rx.to_vec())?;
    Ok(LogDetOutcome {
        selection,
        trajectory,
        values,
        evaluations,
        direction: options.direction,
    })
}
