mod common;

use common::*;
use mimo_placement::convex::{
    boolean_gamma, build_relaxation, design, round, solve_relaxation, RelaxedSolution, DEFAULT_MAX_ITER,
    DEFAULT_TOLERANCE,
};
use mimo_placement::fim::build_grid;
use mimo_placement::oracle::{exhaustive_search_by, DEFAULT_ENUMERATION_CAP};
use mimo_placement::{Budgets, Criterion, DeltaGrid, FimCache, RadarConfig, Selection};
use nalgebra::SymmetricEigen;

fn toy() -> RadarConfig {
    let mut cfg = radar(2, 2, 2);
    cfg.gamma = cfg.resolution_weights();
    cfg.time_origin = mimo_placement::TimeOrigin::Center;
    cfg.array_origin = mimo_placement::ArrayOrigin::Center;
    cfg
}

fn toy_grid(cfg: &RadarConfig) -> DeltaGrid {
    let (ru, rv) = (cfg.angle_resolution(), cfg.velocity_resolution());
    build_grid((-2.0 * ru, 2.0 * ru), (-2.0 * rv, 2.0 * rv), 3, 3, 0.2).unwrap()
}

fn toy_cache() -> FimCache {
    let cfg = toy();
    FimCache::build(&cfg, &toy_grid(&cfg), true).unwrap()
}

/// Smallest eigenvalue over the grid, computed from the assembled matrices.
fn min_eig_over_grid(cache: &FimCache, sel: &Selection) -> f64 {
    cache
        .assemble(sel)
        .unwrap()
        .into_iter()
        .map(|f| SymmetricEigen::new(f).eigenvalues.min())
        .fold(f64::INFINITY, f64::min)
}

/// Best Boolean min-eigenvalue at `budgets`, by enumeration.
fn boolean_optimum(cache: &FimCache, budgets: Budgets) -> (Selection, f64) {
    let (sel, cost) = exhaustive_search_by(
        cache.transmitters(),
        cache.pulses(),
        cache.receivers(),
        budgets,
        DEFAULT_ENUMERATION_CAP,
        |s| Ok(-min_eig_over_grid(cache, s)),
    )
    .unwrap();
    (sel, -cost)
}

#[test]
fn relaxation_dimensions() {
    let cache = toy_cache();
    let relax = build_relaxation(&cache, Budgets::new(2, 1), &Criterion::e_opt()).unwrap();
    assert_eq!(relax.num_weights(), 6);
    // gamma, the six diagonal entries and the fifteen off-diagonal ones.
    assert_eq!(relax.num_variables(), 1 + 6 + 15);
    let mut want = vec![4; cache.grid_len()];
    want.push(7);
    assert_eq!(relax.lmi_block_sizes(), want);
    assert_eq!(relax.shape(), (2, 2, 2));
}

#[test]
fn boolean_gamma_is_the_smallest_eigenvalue_over_the_grid() {
    let cache = toy_cache();
    let mut sel = Selection::empty(2, 2, 2);
    sel.set_pulse(0, 1, true);
    sel.set_pulse(1, 0, true);
    sel.set_receiver(1, true);
    let got = boolean_gamma(&cache, &Criterion::e_opt(), &sel).unwrap();
    let want = min_eig_over_grid(&cache, &sel);
    assert!((got - want).abs() <= 1e-12 * want.abs().max(1e-300));
    // The E criterion reports the reciprocal worst-case eigenvalue.
    let e = Criterion::e_opt().evaluate(&cache, &sel).unwrap();
    assert!((e * want - 1.0).abs() < 1e-9);
}

#[test]
fn full_budget_reaches_the_full_selection_value() {
    let cache = toy_cache();
    let relax = build_relaxation(&cache, Budgets::new(4, 2), &Criterion::e_opt()).unwrap();
    let sol = solve_relaxation(&relax, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap();
    let full = min_eig_over_grid(&cache, &cache.full_selection());
    assert!((sol.gamma_star - full).abs() <= 1e-4 * full, "{} vs {full}", sol.gamma_star);
    assert!(sol.w.iter().all(|&w| (w - 1.0).abs() < 1e-4), "{:?}", sol.w);
}

#[test]
fn relaxation_sandwich_on_the_toy_instance() {
    let cache = toy_cache();
    let crit = Criterion::e_opt();
    for (kp, kr) in [(1, 1), (2, 1), (3, 1), (2, 2), (3, 2)] {
        let b = Budgets::new(kp, kr);
        let (sol, rounded) = design(&cache, &crit, b, 200, 7).unwrap();
        let (_, opt) = boolean_optimum(&cache, b);
        let tol = 1e-6 * opt.abs().max(sol.gamma_star.abs());
        assert!(opt <= sol.gamma_star + tol, "{b:?}: {opt} > {}", sol.gamma_star);
        assert!(rounded.gamma <= opt + tol);
        assert!(rounded.gamma <= sol.gamma_star + tol);
        assert_eq!(rounded.selection.count_pulses(), kp);
        assert_eq!(rounded.selection.count_receivers(), kr);

        // Feasibility residuals of the returned point.
        let s = &sol.stats;
        assert!(s.converged);
        assert!(s.lmi_min_eigenvalue >= -1e-6 * sol.gamma_star.abs().max(1.0));
        assert!(s.schur_min_eigenvalue >= -1e-6);
        assert!(s.budget_excess <= 1e-6);
        for (k, &w) in sol.w.iter().enumerate() {
            assert!((-1e-6..=1.0 + 1e-6).contains(&w));
            assert!((sol.big_w[k][k] - w).abs() <= 1e-6);
        }
    }
}

#[test]
fn best_of_many_rounds_finds_the_optimum_for_most_seeds() {
    let cache = toy_cache();
    let crit = Criterion::e_opt();
    let b = Budgets::new(2, 1);
    let relax = build_relaxation(&cache, b, &crit).unwrap();
    let sol = solve_relaxation(&relax, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap();
    let (_, opt) = boolean_optimum(&cache, b);
    let hits = (0..100)
        .filter(|&seed| {
            let r = round(&cache, &crit, &sol, b, 200, seed).unwrap();
            r.gamma >= opt * (1.0 - 1e-12)
        })
        .count();
    assert!(hits >= 95, "{hits} of 100 seeds");
}

#[test]
fn boolean_weights_round_to_themselves() {
    let cache = toy_cache();
    let b = Budgets::new(2, 1);
    let w = vec![1.0, 0.0, 0.0, 1.0, 0.0, 1.0];
    let sol = RelaxedSolution {
        big_w: w.iter().map(|&a| w.iter().map(|&c| a * c).collect()).collect(),
        w: w.clone(),
        gamma_star: 0.0,
        stats: Default::default(),
        num_pulses: 4,
    };
    for seed in [0, 1, 99] {
        let r = round(&cache, &Criterion::e_opt(), &sol, b, 50, seed).unwrap();
        let got: Vec<bool> = r.selection.pulse_mask().iter().chain(r.selection.receiver_mask()).copied().collect();
        assert_eq!(got, w.iter().map(|&x| x == 1.0).collect::<Vec<_>>());
        assert_eq!(r.seed, seed);
    }
}

#[test]
fn duplicate_transmitters_get_equal_weights() {
    let cfg = toy();
    let grid = toy_grid(&cfg);
    let base = FimCache::build(&cfg, &grid, true).unwrap();
    let mut atoms = Vec::new();
    for r in 0..2 {
        for _i in 0..2 {
            for p in 0..2 {
                atoms.extend_from_slice(base.atoms_over_grid(r, 0, p));
            }
        }
    }
    let cache = FimCache::from_atoms(2, 2, 2, grid, atoms, true).unwrap();
    let relax = build_relaxation(&cache, Budgets::new(2, 1), &Criterion::e_opt()).unwrap();
    let sol = solve_relaxation(&relax, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap();
    // Pulse index a = i * P + p.
    for p in 0..2 {
        assert!((sol.w[p] - sol.w[2 + p]).abs() < 1e-4, "{:?}", sol.w);
    }
}

#[test]
fn common_weight_scaling_rescales_gamma_and_keeps_the_design() {
    let cfg = toy();
    let grid = toy_grid(&cfg);
    let crit = Criterion::e_opt();
    let b = Budgets::new(2, 1);
    let (sol, rounded) = design(&FimCache::build(&cfg, &grid, true).unwrap(), &crit, b, 200, 3).unwrap();
    let mut scaled = cfg.clone();
    scaled.gamma = cfg.gamma.map(|g| 4.0 * g);
    let (sol2, rounded2) = design(&FimCache::build(&scaled, &grid, true).unwrap(), &crit, b, 200, 3).unwrap();
    assert!((sol2.gamma_star * 16.0 - sol.gamma_star).abs() <= 1e-6 * sol.gamma_star);
    assert_eq!(rounded.selection, rounded2.selection);
}

#[test]
fn zero_budget_gives_the_zero_relaxation() {
    let cache = toy_cache();
    let relax = build_relaxation(&cache, Budgets::new(0, 1), &Criterion::e_opt()).unwrap();
    let sol = solve_relaxation(&relax, DEFAULT_TOLERANCE, DEFAULT_MAX_ITER).unwrap();
    assert_eq!(sol.gamma_star, 0.0);
    assert!(build_relaxation(&cache, Budgets::new(5, 1), &Criterion::e_opt()).is_err());
}
