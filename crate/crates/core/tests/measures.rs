mod common;

use common::*;
use mimo_placement::fim::build_grid;
use mimo_placement::measures::{
    a_opt, aggregate, cosine_frame_potential, crlb, d_opt, e_opt, frame_potential,
    modified_frame_potential, FrameKernel, FrameNorm,
};
use mimo_placement::oracle::check_submodular;
use mimo_placement::{Aggregation, DeltaTheta, Error, RadarConfig, Selection, TargetParams};
use nalgebra::{DMatrix, Matrix4, SymmetricEigen, Vector4};
use num_complex::Complex64;
use proptest::prelude::*;

#[test]
fn crlb_of_identity_and_diagonal() {
    assert_eq!(crlb(&Matrix4::identity()).matrix, Matrix4::identity());
    let c = crlb(&Matrix4::from_diagonal(&Vector4::new(4.0, 1.0, 4.0, 1.0))).matrix;
    assert_eq!(c, Matrix4::from_diagonal(&Vector4::new(0.25, 1.0, 0.25, 1.0)));
}

#[test]
fn scalar_measures_of_identity() {
    let f = Matrix4::identity();
    assert_eq!(a_opt(&f), 4.0);
    assert_eq!(e_opt(&f), 1.0);
    assert_eq!(d_opt(&Matrix4::zeros(), 1e-6), 0.0);
    let eps: f64 = 1e-6;
    let want = 4.0 * (1.0 + eps).ln() - 4.0 * eps.ln();
    assert!((d_opt(&f, eps) - want).abs() < 1e-9);
}

#[test]
fn aggregation_examples() {
    assert_eq!(aggregate(&[1.0, 2.0, 3.0], Aggregation::MaxOverGrid).unwrap(), 3.0);
    assert_eq!(aggregate(&[1.0, 2.0, 3.0], Aggregation::MeanOverGrid).unwrap(), 2.0);
    assert_eq!(
        aggregate(&[7.5], Aggregation::MaxOverGrid).unwrap(),
        aggregate(&[7.5], Aggregation::MeanOverGrid).unwrap()
    );
    assert!(matches!(aggregate(&[], Aggregation::MeanOverGrid), Err(Error::EmptyGrid)));
}

fn random_psd(seed: [f64; 16], shift: f64) -> Matrix4<f64> {
    let a = Matrix4::from_iterator(seed);
    a * a.transpose() + Matrix4::identity() * shift
}

proptest! {
    #[test]
    fn crlb_inverts_nonsingular_information(seed in prop::array::uniform16(-1.0f64..1.0), shift in 0.01f64..1.0) {
        let f = random_psd(seed, shift);
        let c = crlb(&f);
        prop_assert!(!c.singular);
        prop_assert!((f * c.matrix - Matrix4::identity()).norm() < 1e-9);
    }

    #[test]
    fn e_opt_is_reciprocal_smallest_eigenvalue(seed in prop::array::uniform16(-1.0f64..1.0), shift in 0.01f64..1.0) {
        let f = random_psd(seed, shift);
        let inv = f.try_inverse().unwrap();
        let largest = SymmetricEigen::new(inv).eigenvalues.max();
        prop_assert!((e_opt(&f) - largest).abs() < 1e-9 * largest);
        let smallest = SymmetricEigen::new(f).eigenvalues.min();
        prop_assert!((e_opt(&f) * smallest - 1.0).abs() < 1e-9);
        prop_assert!((a_opt(&f) - inv.trace()).abs() < 1e-9 * inv.trace());
    }
}

/// Every selected measurement row at sample `n` with target one at `dtheta`
/// and target two at the origin, divided by the compensation weights.
fn raw_rows(cfg: &RadarConfig, sel: &Selection, dtheta: DeltaTheta, n: usize) -> Vec<[Complex64; 4]> {
    let targets = [TargetParams::new(dtheta.du, dtheta.dv), TargetParams::new(0.0, 0.0)];
    let mut rows = Vec::new();
    for r in sel.selected_receivers() {
        for (i, p) in sel.selected_pulses() {
            let g = direct_gradient(cfg, &targets, r, i, p, n);
            rows.push([0, 1, 2, 3].map(|k| g[k] / cfg.gamma[k]));
        }
    }
    rows
}

fn brute_force_potential(cfg: &RadarConfig, sel: &Selection, dtheta: DeltaTheta, norm: FrameNorm) -> f64 {
    let mut total = 0.0;
    for n in 0..cfg.samples {
        let rows = raw_rows(cfg, sel, dtheta, n);
        for a in &rows {
            for b in &rows {
                let inner: Complex64 = a.iter().zip(b).map(|(x, y)| x * y.conj()).sum();
                let na: f64 = a.iter().map(|x| x.norm_sqr()).sum();
                let nb: f64 = b.iter().map(|x| x.norm_sqr()).sum();
                total += match norm {
                    FrameNorm::None => inner.norm_sqr(),
                    _ if na == 0.0 || nb == 0.0 => 0.0,
                    FrameNorm::Literal => inner.norm_sqr() / (na * nb).powi(2),
                    FrameNorm::Cosine => inner.norm_sqr() / (na * nb),
                };
            }
        }
    }
    total
}

fn toy() -> RadarConfig {
    let mut cfg = radar(2, 2, 2);
    cfg.gamma = [0.05, 2.0, 0.05, 2.0];
    cfg.time_origin = mimo_placement::TimeOrigin::Center;
    cfg
}

#[test]
fn frame_potential_of_empty_selection_is_zero() {
    let cfg = toy();
    let d = DeltaTheta::new(0.2, 3.0);
    let empty = Selection::empty(2, 2, 2);
    assert_eq!(frame_potential(&cfg, &empty, d).unwrap(), 0.0);
    assert_eq!(modified_frame_potential(&cfg, &empty, d).unwrap(), 0.0);
}

#[test]
fn single_element_potential_is_the_diagonal() {
    let cfg = toy();
    let d = DeltaTheta::new(0.2, 3.0);
    let mut sel = Selection::empty(2, 2, 2);
    sel.set_pulse(1, 0, true);
    sel.set_receiver(0, true);
    let got = frame_potential(&cfg, &sel, d).unwrap();
    let want: f64 = (0..cfg.samples)
        .map(|n| {
            let row = &raw_rows(&cfg, &sel, d, n)[0];
            row.iter().map(|x| x.norm_sqr()).sum::<f64>().powi(2)
        })
        .sum();
    assert!(got > 0.0);
    assert!((got - want).abs() <= 1e-12 * want);
}

#[test]
fn potentials_match_double_loop_on_three_measurements() {
    let cfg = toy();
    let d = DeltaTheta::new(0.17, -4.5);
    // Pulses (0,0), (1,1) and (0,1) with receiver 1: three measurements.
    let mut sel = Selection::empty(2, 2, 2);
    sel.set_pulse(0, 0, true);
    sel.set_pulse(1, 1, true);
    sel.set_pulse(0, 1, true);
    sel.set_receiver(1, true);
    for (norm, got) in [
        (FrameNorm::None, frame_potential(&cfg, &sel, d).unwrap()),
        (FrameNorm::Literal, modified_frame_potential(&cfg, &sel, d).unwrap()),
        (FrameNorm::Cosine, cosine_frame_potential(&cfg, &sel, d).unwrap()),
    ] {
        let want = brute_force_potential(&cfg, &sel, d, norm);
        assert!((got - want).abs() <= 1e-12 * want, "{norm:?}: {got} vs {want}");
    }
}

#[test]
fn zero_norm_rows_contribute_nothing_after_normalization() {
    // One transmitter, one receiver, one sample: the only row has a zero pair
    // offset (r = i) and zero time (p = n = 0).
    let mut cfg = radar(1, 1, 1);
    cfg.samples = 1;
    let mut sel = Selection::empty(1, 1, 1);
    sel.set_pulse(0, 0, true);
    sel.set_receiver(0, true);
    let d = DeltaTheta::new(0.3, 1.0);
    assert_eq!(modified_frame_potential(&cfg, &sel, d).unwrap(), 0.0);
    assert_eq!(cosine_frame_potential(&cfg, &sel, d).unwrap(), 0.0);
    assert_eq!(frame_potential(&cfg, &sel, d).unwrap(), 0.0);
}

#[test]
fn g_function_endpoints_and_monotonicity() {
    let cfg = toy();
    let grid = build_grid((-0.3, 0.3), (-6.0, 6.0), 3, 3, 0.2).unwrap();
    for norm in [FrameNorm::Literal, FrameNorm::Cosine] {
        let kernel = FrameKernel::build(&cfg, &grid, norm).unwrap();
        assert_eq!(kernel.g_value(&[]).unwrap(), 0.0);
        let all: Vec<usize> = (0..6).collect();
        let full = kernel.mean_value(&Selection::full(&cfg)).unwrap();
        assert!((kernel.g_value(&all).unwrap() - full).abs() <= 1e-12 * full);
        let report = check_submodular(6, 1e-9, |set| kernel.g_value(set).unwrap()).unwrap();
        assert!(report.monotone && report.normalized, "{report:?}");
        assert!(report.submodular, "{report:?}");
        assert!(matches!(kernel.g_value(&[6]), Err(Error::OutsideGroundSet(6))));
    }
}

#[test]
fn pair_terms_are_symmetric() {
    let cfg = toy();
    let d = DeltaTheta::new(0.11, 2.5);
    let sel = Selection::full(&cfg);
    for n in 0..cfg.samples {
        let rows = raw_rows(&cfg, &sel, d, n);
        for a in &rows {
            for b in &rows {
                let ab: Complex64 = a.iter().zip(b).map(|(x, y)| x * y.conj()).sum();
                let ba: Complex64 = b.iter().zip(a).map(|(x, y)| x * y.conj()).sum();
                assert!((ab.norm_sqr() - ba.norm_sqr()).abs() <= 1e-12 * ab.norm_sqr().max(1e-300));
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adding_elements_never_raises_a_or_e(cfg in small_radar(), bits in any::<u64>()) {
        let grid = build_grid((-0.4, 0.4), (-8.0, 8.0), 3, 3, 0.2).unwrap();
        let cache = mimo_placement::FimCache::build(&cfg, &grid, true).unwrap();
        let np = cfg.transmitters * cfg.pulses;
        let ground = np + cfg.receivers;
        let pm = (0..np).map(|k| bits >> k & 1 == 1).collect();
        let rm = (0..cfg.receivers).map(|k| bits >> (np + k) & 1 == 1).collect();
        let base = Selection::from_masks(cfg.transmitters, cfg.pulses, pm, rm).unwrap();
        for crit in [mimo_placement::Criterion::a_opt(), mimo_placement::Criterion::e_opt()] {
            let before = crit.evaluate(&cache, &base).unwrap();
            for e in (0..ground).filter(|&e| !base.contains_element(e)) {
                let mut more = base.clone();
                more.set_element(e, true).unwrap();
                let after = crit.evaluate(&cache, &more).unwrap();
                prop_assert!(after <= before * (1.0 + 1e-9) || before.is_infinite());
            }
        }
    }

    #[test]
    fn principal_block_matches_explicit_submatrix(seed in prop::array::uniform16(-1.0f64..1.0), shift in 0.05f64..1.0) {
        use mimo_placement::{Criterion, ParamSet, TargetModel};
        let f = random_psd(seed, shift);
        let crit = Criterion::a_opt().with_targets(TargetModel::Two).with_params(ParamSet::Velocity);
        let sub = DMatrix::from_fn(2, 2, |a, b| f[(1 + 2 * a, 1 + 2 * b)]);
        let want = sub.try_inverse().unwrap().trace();
        let got = crit.point_cost(&f, 0.0).unwrap();
        prop_assert!((got - want).abs() < 1e-9 * want);
    }
}
