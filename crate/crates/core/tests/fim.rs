mod common;

use common::*;
use mimo_placement::fim::{apply_weights, atom, build_grid, cross_block, single_target_block};
use mimo_placement::measures::crlb;
use mimo_placement::{DeltaGrid, DeltaTheta, Error, FimCache, Selection, TargetParams};
use nalgebra::{Matrix4, SymmetricEigen};
use num_complex::Complex64;
use proptest::prelude::*;

fn dtheta(t: &[TargetParams; 2]) -> DeltaTheta {
    DeltaTheta::new(t[0].u - t[1].u, t[0].v - t[1].v)
}

#[test]
fn single_target_block_ignores_the_targets_and_has_rank_one() {
    let cfg = radar(3, 4, 2);
    let a = single_target_block(&cfg, 1, 2, 3, 1, 0).unwrap();
    let lambda = cfg.wavelength();
    let c = cfg.pair_offset(1, 2);
    let t = 3.0 * cfg.pri + cfg.sample_period;
    let s = 32.0 * std::f64::consts::PI.powi(2) / (lambda * lambda);
    let want = nalgebra::Matrix2::new(0.5 * c * c, c * t, c * t, 2.0 * t * t) * s;
    assert!((a - want).norm() < 1e-12 * want.norm());
    assert!(a.determinant().abs() < 1e-12 * a.norm() * a.norm());
    // p = n = 0 with a colocated pair (r = i) in the physical frame.
    assert_eq!(single_target_block(&cfg, 1, 1, 0, 0, 0).unwrap(), nalgebra::Matrix2::zeros());
}

#[test]
fn cross_block_at_zero_difference_is_the_scaled_structure() {
    let cfg = radar(2, 2, 2);
    let j1 = single_target_block(&cfg, 0, 1, 1, 2, 0).unwrap();
    let j2 = cross_block(&cfg, 0, 1, 1, 2, DeltaTheta::new(0.0, 0.0)).unwrap();
    let ratio = cfg.alpha[0] * cfg.alpha[1].conj() / cfg.alpha[0].norm_sqr();
    for k in 0..4 {
        assert!((j2[k] - ratio * j1[k]).norm() < 1e-9 * j1.norm());
    }
}

#[test]
fn cross_block_depends_only_on_differences() {
    let cfg = radar(3, 3, 3);
    let from = |u1: f64, u2: f64, v1: f64, v2: f64| {
        cross_block(&cfg, 2, 0, 2, 3, DeltaTheta::new(u1 - u2, v1 - v2)).unwrap()
    };
    let a = from(0.3, 0.1, 7.0, 2.0);
    let b = from(0.25, 0.05, 6.0, 1.0);
    for k in 0..4 {
        assert!((a[k] - b[k]).norm() < 1e-9 * a[k].norm().max(1.0));
    }
    let j1 = single_target_block(&cfg, 2, 0, 2, 3, 0).unwrap();
    let scale = (cfg.alpha[0] * cfg.alpha[1].conj()).norm() / cfg.alpha[0].norm_sqr();
    for k in 0..4 {
        assert!((a[k].norm() - scale * j1[k].abs()).abs() < 1e-9 * j1.norm());
    }
}

#[test]
fn silent_second_target_leaves_only_the_first_block() {
    let mut cfg = radar(2, 2, 2);
    cfg.alpha[1] = Complex64::new(0.0, 0.0);
    let f = atom(&cfg, 1, 0, 1, DeltaTheta::new(0.1, 3.0)).unwrap();
    for a in 0..4 {
        for b in 0..4 {
            if a >= 2 || b >= 2 {
                assert_eq!(f[(a, b)], 0.0);
            }
        }
    }
    assert!(f[(0, 0)] > 0.0);
}

#[test]
fn weights_scale_entries() {
    let cfg = radar(2, 2, 2);
    let f = atom(&cfg, 1, 0, 1, DeltaTheta::new(0.1, 3.0)).unwrap();
    assert_eq!(apply_weights(&f, &[1.0; 4]).unwrap(), f);
    let quarter = apply_weights(&f, &[2.0; 4]).unwrap();
    assert!((quarter - f / 4.0).norm() <= 1e-15 * f.norm());
    assert!(matches!(apply_weights(&f, &[1.0, 0.0, 1.0, 1.0]), Err(Error::NonPositiveWeight)));
}

#[test]
fn weighted_crlb_is_the_rescaled_crlb() {
    let cfg = radar(3, 3, 3);
    let cache = FimCache::build(&cfg, &DeltaGrid::from_points(vec![DeltaTheta::new(0.2, 4.0)]).unwrap(), false).unwrap();
    let f = cache.assemble(&Selection::full(&cfg)).unwrap()[0];
    let gamma = [1.0, 10.0, 1.0, 10.0];
    let weighted = crlb(&apply_weights(&f, &gamma).unwrap()).matrix;
    let c = f.try_inverse().unwrap();
    let g = Matrix4::from_diagonal(&nalgebra::Vector4::from(gamma));
    let want = g * c * g;
    assert!((weighted - want).norm() < 1e-8 * want.norm());
}

#[test]
fn one_dimensional_grids_keep_every_point() {
    let v = build_grid((0.0, 0.0), (0.5, 10.0), 1, 20, 0.0).unwrap();
    assert_eq!(v.len(), 20);
    assert!(v.points.iter().all(|p| p.du == 0.0));
    let u = build_grid((0.05, 1.0), (0.0, 0.0), 20, 1, 0.0).unwrap();
    assert_eq!(u.len(), 20);
    assert!(u.points.iter().all(|p| p.dv == 0.0));
}

#[test]
fn exclusion_removes_exactly_the_inner_points() {
    let (du, dv) = ((-0.5, 0.5), (-10.0, 10.0));
    let (nu, nv) = (21, 21);
    let radius = 0.05;
    let grid = build_grid(du, dv, nu, nv, radius).unwrap();
    let mut expected = 0;
    for a in 0..nu {
        for b in 0..nv {
            let x = (-0.5 + a as f64 / 20.0) / 1.0;
            let y = (-10.0 + 20.0 * b as f64 / 20.0) / 20.0;
            if (x * x + y * y).sqrt() >= radius {
                expected += 1;
            }
        }
    }
    assert_eq!(grid.len(), expected);
    assert!(expected < nu * nv);
    assert!(matches!(build_grid((0.0, 0.0), (0.0, 0.0), 1, 1, 0.1), Err(Error::EmptyGrid)));
}

#[test]
fn empty_and_full_assembly() {
    let cfg = radar(2, 3, 2);
    let grid = build_grid((-0.3, 0.3), (-5.0, 5.0), 3, 3, 0.1).unwrap();
    let cache = FimCache::build(&cfg, &grid, false).unwrap();
    for f in cache.assemble(&Selection::empty(2, 3, 2)).unwrap() {
        assert_eq!(f, Matrix4::zeros());
    }
    let full = cache.assemble(&Selection::full(&cfg)).unwrap();
    for (d, f) in full.iter().enumerate() {
        let mut sum = Matrix4::zeros();
        for r in 0..2 {
            for i in 0..2 {
                for p in 0..3 {
                    sum += atom(&cfg, r, i, p, grid.points[d]).unwrap();
                }
            }
        }
        assert!((f - sum).norm() <= 1e-10 * sum.norm());
    }
    assert!(matches!(
        cache.assemble(&Selection::empty(2, 2, 2)),
        Err(Error::DimensionMismatch(_))
    ));
}

fn selection_from_bits(cfg: &mimo_placement::RadarConfig, bits: u64) -> Selection {
    let np = cfg.transmitters * cfg.pulses;
    let pm = (0..np).map(|k| bits >> k & 1 == 1).collect();
    let rm = (0..cfg.receivers).map(|k| bits >> (np + k) & 1 == 1).collect();
    Selection::from_masks(cfg.transmitters, cfg.pulses, pm, rm).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn closed_form_atom_matches_outer_products(cfg in small_radar(), t in target_pair()) {
        for r in 0..cfg.receivers {
            for i in 0..cfg.transmitters {
                let p = cfg.pulses - 1;
                let f = atom(&cfg, r, i, p, dtheta(&t)).unwrap();
                let oracle = outer_product_atom(&cfg, &t, r, i, p);
                if oracle.norm() > 0.0 {
                    prop_assert!(rel_frobenius(&f, &oracle) < 1e-10, "{}", rel_frobenius(&f, &oracle));
                } else {
                    prop_assert!(f.norm() == 0.0);
                }
            }
        }
    }

    #[test]
    fn closed_form_atom_matches_numeric_derivatives(cfg in small_radar(), t in target_pair()) {
        let (r, i, p) = (cfg.receivers - 1, 0, cfg.pulses - 1);
        let f = atom(&cfg, r, i, p, dtheta(&t)).unwrap();
        let numeric = numeric_atom(&cfg, &t, r, i, p, 1e-6);
        prop_assert!(numeric.norm() == 0.0 || rel_frobenius(&f, &numeric) < 1e-5);
    }

    #[test]
    fn atoms_are_symmetric_psd(cfg in small_radar(), t in target_pair()) {
        let f = atom(&cfg, cfg.receivers - 1, 0, 0, dtheta(&t)).unwrap();
        prop_assert!((f - f.transpose()).norm() <= 1e-14 * f.norm());
        let min = SymmetricEigen::new(f).eigenvalues.min();
        prop_assert!(min >= -1e-12 * f.norm());
    }

    #[test]
    fn atoms_are_shift_invariant(cfg in small_radar(), t in target_pair(), su in -0.05f64..0.05, sv in -5.0f64..5.0) {
        let shifted = [
            TargetParams { u: t[0].u + su, v: t[0].v + sv, range: t[0].range },
            TargetParams { u: t[1].u + su, v: t[1].v + sv, range: t[1].range },
        ];
        let (r, i, p) = (cfg.receivers - 1, 0, cfg.pulses - 1);
        let a = outer_product_atom(&cfg, &t, r, i, p);
        let b = outer_product_atom(&cfg, &shifted, r, i, p);
        prop_assert!(a.norm() == 0.0 || rel_frobenius(&b, &a) < 1e-9);
    }

    #[test]
    fn assembly_is_additive_and_monotone(cfg in small_radar(), a in any::<u64>(), b in any::<u64>()) {
        let grid = build_grid((-0.4, 0.4), (-8.0, 8.0), 3, 3, 0.2).unwrap();
        let cache = FimCache::build(&cfg, &grid, true).unwrap();
        let np = cfg.transmitters * cfg.pulses;
        // Disjoint in the pulses, sharing the receiver set: then the pair sets
        // are disjoint and the sums must add.
        let ground = np + cfg.receivers;
        let rx = b >> np;
        let sa = selection_from_bits(&cfg, (a & !b) & ((1 << np) - 1) | rx << np);
        let sb = selection_from_bits(&cfg, (b & !a) & ((1 << np) - 1) | rx << np);
        let su = selection_from_bits(&cfg, ((a ^ b) & ((1 << np) - 1)) | rx << np);
        let (fa, fb, fu) = (cache.assemble(&sa).unwrap(), cache.assemble(&sb).unwrap(), cache.assemble(&su).unwrap());
        for d in 0..grid.len() {
            let sum = fa[d] + fb[d];
            prop_assert!((fu[d] - sum).norm() <= 1e-10 * sum.norm().max(1e-300));
            prop_assert!((fu[d] - fu[d].transpose()).norm() <= 1e-12 * fu[d].norm().max(1e-300));
        }
        // Loewner monotonicity under adding one element.
        let base = selection_from_bits(&cfg, a & ((1 << ground) - 1));
        for e in 0..ground {
            if base.contains_element(e) {
                continue;
            }
            let mut more = base.clone();
            more.set_element(e, true).unwrap();
            let (f0, f1) = (cache.assemble(&base).unwrap(), cache.assemble(&more).unwrap());
            for d in 0..grid.len() {
                let gap = SymmetricEigen::new(f1[d] - f0[d]).eigenvalues.min();
                prop_assert!(gap >= -1e-10 * f1[d].norm().max(1e-300));
            }
        }
    }
}
