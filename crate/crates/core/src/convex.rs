//! E-optimal semidefinite relaxation of the joint pulse/receiver selection
//! and randomized rounding of its fractional solution.
//!
//! With `w` the stacked selection vector (transmit pulses, then receivers)
//! and `W` standing in for `w w^T`, the relaxation is
//!
//! ```text
//! maximize gamma
//!   s.t. sum_{a, r} W[a, r] F_{a,r}(d) >= gamma I      for every grid point d
//!        [[W, w], [w^T, 1]] >= 0,  diag(W) = w
//!        sum_pulses w <= K_P,  sum_receivers w <= K_R,  0 <= w <= 1
//! ```
//!
//! where `F_{a,r}` is the (weighted, masked) atom of transmit pulse `a` and
//! receiver `r`.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fim::FimCache;
use crate::measures::{min_eigenvalue, Criterion};
use crate::sdp::{Block, Problem, Settings};
use crate::selection::{Budgets, Selection};

pub const DEFAULT_TOLERANCE: f64 = 1e-7;
pub const DEFAULT_MAX_ITER: usize = 200;
pub const DEFAULT_ROUNDS: usize = 200;

/// Assembled semidefinite program together with the bookkeeping needed to
/// read a selection back out of it.
#[derive(Clone, Debug)]
pub struct Relaxation {
    num_pulses: usize,
    num_receivers: usize,
    transmitters: usize,
    pulses: usize,
    budgets: Budgets,
    /// Atoms were divided by this before entering the program.
    scale: f64,
    lmi_dim: usize,
    grid_len: usize,
    problem: Problem,
}

/// Solver counters and residuals of a relaxed solution.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub gap: f64,
    /// Smallest eigenvalue over the LMI blocks at the returned point, scaled
    /// back to FIM units; `>= -tol` when feasible.
    pub lmi_min_eigenvalue: f64,
    /// `min eig [[W, w], [w^T, 1]]`.
    pub schur_min_eigenvalue: f64,
    /// `max(sum w - K)` over the two budgets.
    pub budget_excess: f64,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxedSolution {
    /// Fractional selection, transmit pulses first then receivers.
    pub w: Vec<f64>,
    /// Relaxed outer product, row-major `n x n` with `diag(W) = w`.
    pub big_w: Vec<Vec<f64>>,
    /// Optimal value: smallest eigenvalue of the relaxed FIM over the grid.
    pub gamma_star: f64,
    pub stats: SolverStats,
    pub num_pulses: usize,
}

fn var_index(n: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i < j { (i, j) } else { (j, i) };
    if i == j {
        1 + i
    } else {
        // Upper-triangle pairs after gamma and the n diagonal entries.
        1 + n + i * n - i * (i + 1) / 2 + (j - i - 1)
    }
}

impl Relaxation {
    pub fn num_variables(&self) -> usize {
        self.problem.b.len()
    }

    /// Length of `w` (and side of `W`).
    pub fn num_weights(&self) -> usize {
        self.num_pulses + self.num_receivers
    }

    /// Sizes of the semidefinite blocks: one per grid point, then the
    /// Schur block.
    pub fn lmi_block_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![self.lmi_dim; self.grid_len];
        sizes.push(self.num_weights() + 1);
        sizes
    }

    pub fn budgets(&self) -> Budgets {
        self.budgets
    }
}

/// Builds the relaxation for the parameters kept by `criterion` (its kind is
/// ignored; the relaxation is always max-min-eigenvalue over the grid).
pub fn build_relaxation(cache: &FimCache, budgets: Budgets, criterion: &Criterion) -> Result<Relaxation> {
    let np = cache.num_tx_pulses();
    let nr = cache.receivers();
    budgets.check(np, nr)?;
    if cache.grid_len() == 0 {
        return Err(Error::EmptyGrid);
    }
    let n = np + nr;
    let idx = criterion.indices();
    let k = idx.len();
    let num_vars = 1 + n + n * (n - 1) / 2;

    // Scale so that the full-selection information has unit average size.
    let full = cache.assemble(&cache.full_selection())?;
    let scale = full
        .iter()
        .map(|f| idx.iter().map(|&a| f[(a, a)]).sum::<f64>() / k as f64)
        .fold(0.0, f64::max);
    let scale = if scale > 0.0 { scale } else { 1.0 };

    let mut blocks = Vec::with_capacity(cache.grid_len() + 2);
    for d in 0..cache.grid_len() {
        let mut a = vec![(0, DMatrix::identity(k, k))];
        for r in 0..nr {
            for pulse in 0..np {
                let (i, p) = (pulse / cache.pulses(), pulse % cache.pulses());
                let f = cache.atom(r, i, p, d);
                let m = DMatrix::from_fn(k, k, |x, y| -f[(idx[x], idx[y])] / scale);
                if m.iter().any(|&v| v != 0.0) {
                    a.push((var_index(n, pulse, np + r), m));
                }
            }
        }
        blocks.push(Block::Dense {
            c: DMatrix::zeros(k, k),
            a,
        });
    }

    let mut c = DMatrix::zeros(n + 1, n + 1);
    c[(n, n)] = 1.0;
    let mut a = Vec::with_capacity(num_vars - 1);
    for i in 0..n {
        let mut m = DMatrix::zeros(n + 1, n + 1);
        m[(i, i)] = -1.0;
        m[(i, n)] = -1.0;
        m[(n, i)] = -1.0;
        a.push((var_index(n, i, i), m));
    }
    for i in 0..n {
        for j in i + 1..n {
            let mut m = DMatrix::zeros(n + 1, n + 1);
            m[(i, j)] = -1.0;
            m[(j, i)] = -1.0;
            a.push((var_index(n, i, j), m));
        }
    }
    blocks.push(Block::Dense { c, a });

    // Rows: pulse budget, receiver budget, w >= 0, w <= 1.
    let rows = 2 + 2 * n;
    let mut c = DVector::zeros(rows);
    c[0] = budgets.pulses as f64;
    c[1] = budgets.receivers as f64;
    for i in 0..n {
        c[2 + n + i] = 1.0;
    }
    let a = (0..n)
        .map(|i| {
            let mut v = DVector::zeros(rows);
            v[if i < np { 0 } else { 1 }] = 1.0;
            v[2 + i] = -1.0;
            v[2 + n + i] = 1.0;
            (var_index(n, i, i), v)
        })
        .collect();
    blocks.push(Block::Diag { c, a });

    let mut b = DVector::zeros(num_vars);
    b[0] = 1.0;
    Ok(Relaxation {
        num_pulses: np,
        num_receivers: nr,
        transmitters: cache.transmitters(),
        pulses: cache.pulses(),
        budgets,
        scale,
        lmi_dim: k,
        grid_len: cache.grid_len(),
        problem: Problem { b, blocks },
    })
}

fn extract(relax: &Relaxation, y: &DVector<f64>, stats: SolverStats) -> RelaxedSolution {
    let n = relax.num_weights();
    let w: Vec<f64> = (0..n).map(|i| y[1 + i]).collect();
    let big_w: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[var_index(n, i, j)]).collect())
        .collect();
    let mut schur = DMatrix::zeros(n + 1, n + 1);
    for i in 0..n {
        for j in 0..n {
            schur[(i, j)] = big_w[i][j];
        }
        schur[(i, n)] = w[i];
        schur[(n, i)] = w[i];
    }
    schur[(n, n)] = 1.0;
    let np = relax.num_pulses;
    let budget_excess = (w[..np].iter().sum::<f64>() - relax.budgets.pulses as f64)
        .max(w[np..].iter().sum::<f64>() - relax.budgets.receivers as f64);
    let lmi_min = relax.problem.blocks[..relax.grid_len]
        .iter()
        .map(|block| match block {
            Block::Dense { c, a } => {
                let mut z = c.clone();
                for (k, ak) in a {
                    z -= ak * y[*k];
                }
                z.symmetric_eigenvalues().min()
            }
            Block::Diag { .. } => f64::INFINITY,
        })
        .fold(f64::INFINITY, f64::min);
    RelaxedSolution {
        w,
        big_w,
        gamma_star: y[0] * relax.scale,
        stats: SolverStats {
            lmi_min_eigenvalue: lmi_min * relax.scale,
            schur_min_eigenvalue: schur.symmetric_eigenvalues().min(),
            budget_excess,
            ..stats
        },
        num_pulses: np,
    }
}

/// Solves the relaxation with an interior-point method. Non-convergence
/// returns the best dual-feasible iterate inside the error.
pub fn solve_relaxation(relax: &Relaxation, tol: f64, max_iter: usize) -> Result<RelaxedSolution> {
    let n = relax.num_weights();
    let (kp, kr) = (relax.budgets.pulses, relax.budgets.receivers);
    if kp == 0 || kr == 0 {
        // Only w = 0 fits; the relaxed FIM is zero.
        return Ok(RelaxedSolution {
            w: vec![0.0; n],
            big_w: vec![vec![0.0; n]; n],
            gamma_star: 0.0,
            stats: SolverStats {
                converged: true,
                ..SolverStats::default()
            },
            num_pulses: relax.num_pulses,
        });
    }
    let sol = relax.problem.solve(Settings { tol, max_iter });
    let stats = SolverStats {
        iterations: sol.iterations,
        primal_residual: sol.primal_residual,
        dual_residual: sol.dual_residual,
        gap: sol.gap,
        converged: sol.converged,
        ..SolverStats::default()
    };
    let out = extract(relax, &sol.y, stats);
    if sol.converged {
        Ok(out)
    } else {
        Err(Error::NotConverged {
            iterations: sol.iterations,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
            gap: sol.gap,
            best: Box::new(out),
        })
    }
}

/// Smallest eigenvalue of the assembled FIM over the grid, restricted to the
/// parameters kept by `criterion`.
pub fn boolean_gamma(cache: &FimCache, criterion: &Criterion, sel: &Selection) -> Result<f64> {
    let idx = criterion.indices();
    Ok(cache
        .assemble(sel)?
        .iter()
        .map(|f| min_eigenvalue(f, idx))
        .fold(f64::INFINITY, f64::min))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rounded {
    pub selection: Selection,
    /// `boolean_gamma` of the selection.
    pub gamma: f64,
    /// Draw that produced it; 0 is the deterministic sort rounding.
    pub round: usize,
    pub seed: u64,
}

/// Indices of the `k` largest weights, ties to the lowest index.
fn top_k(w: &[f64], k: usize) -> Vec<bool> {
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[b].total_cmp(&w[a]).then(a.cmp(&b)));
    let mut mask = vec![false; w.len()];
    for &i in order.iter().take(k) {
        mask[i] = true;
    }
    mask
}

/// Adds the heaviest unselected or drops the lightest selected entries until
/// exactly `k` are selected.
fn repair(mask: &mut [bool], w: &[f64], k: usize) {
    let mut count = mask.iter().filter(|&&b| b).count();
    while count > k {
        let drop = (0..w.len())
            .filter(|&i| mask[i])
            .min_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a)))
            .expect("count > k >= 0");
        mask[drop] = false;
        count -= 1;
    }
    while count < k {
        let add = (0..w.len())
            .filter(|&i| !mask[i])
            .max_by(|&a, &b| w[a].total_cmp(&w[b]).then(b.cmp(&a)))
            .expect("count < k <= len");
        mask[add] = true;
        count += 1;
    }
}

/// Randomized rounding: round 0 keeps the `K` largest weights of each class;
/// every further round includes each element with probability `w`, then
/// repairs to the budgets. The candidate with the largest Boolean
/// min-eigenvalue wins, earliest round on ties.
pub fn round(
    cache: &FimCache,
    criterion: &Criterion,
    solution: &RelaxedSolution,
    budgets: Budgets,
    rounds: usize,
    seed: u64,
) -> Result<Rounded> {
    let np = cache.num_tx_pulses();
    let nr = cache.receivers();
    if solution.w.len() != np + nr {
        return Err(Error::DimensionMismatch("relaxed solution length".into()));
    }
    budgets.check(np, nr)?;
    let (wp, wr) = solution.w.split_at(np);
    let make = |pm: Vec<bool>, rm: Vec<bool>| {
        Selection::from_masks(cache.transmitters(), cache.pulses(), pm, rm)
    };
    let first = make(top_k(wp, budgets.pulses), top_k(wr, budgets.receivers))?;
    let mut best = Rounded {
        gamma: boolean_gamma(cache, criterion, &first)?,
        selection: first,
        round: 0,
        seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 1..=rounds {
        let mut draw = |w: &[f64], budget: usize| {
            let mut m: Vec<bool> = w.iter().map(|&p| rng.random::<f64>() < p.clamp(0.0, 1.0)).collect();
            repair(&mut m, w, budget);
            m
        };
        let pm = draw(wp, budgets.pulses);
        let rm = draw(wr, budgets.receivers);
        let sel = make(pm, rm)?;
        let gamma = boolean_gamma(cache, criterion, &sel)?;
        if gamma > best.gamma {
            best = Rounded {
                selection: sel,
                gamma,
                round: k,
                seed,
            };
        }
    }
    Ok(best)
}

/// Convenience pipeline: build, solve and round.
pub fn design(
    cache: &FimCache,
    criterion: &Criterion,
    budgets: Budgets,
    rounds: usize,
    seed: u64,
) -> Result<(RelaxedSolution, Rounded)> {
    let relax = build_relaxation(cache, budgets, criterion)?;
    let sol = solve_relaxation(&relax, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER)?;
    let rounded = round(cache, criterion, &sol, budgets, rounds, seed)?;
    Ok((sol, rounded))
}

impl Relaxation {
    /// `(I, P, R)` of the underlying configuration.
    pub fn shape(&self) -> (usize, usize, usize) {
        (self.transmitters, self.pulses, self.num_receivers)
    }
}
