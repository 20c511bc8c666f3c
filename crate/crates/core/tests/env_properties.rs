use broxlab_core::stats::{ks_test, variance_with_se};
use broxlab_core::{Direction, EnvironmentPath, Side, Target};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

fn standard_normal_cdf(x: f64) -> f64 {
    Normal::new(0.0, 1.0).unwrap().cdf(x)
}

#[test]
fn origin_is_pinned_and_nodes_span_the_domain() {
    for seed in 0..20 {
        let env = EnvironmentPath::sample(seed, 3.0, 0.25).unwrap();
        assert_eq!(env.eval(0.0).unwrap(), 0.0);
        let xs = env.nodes();
        assert_eq!(xs[0], -3.0);
        assert_eq!(*xs.last().unwrap(), 3.0);
        assert!(xs.windows(2).all(|p| p[0] < p[1]));
    }
}

#[test]
fn sampling_is_deterministic_and_sides_use_disjoint_streams() {
    let a = EnvironmentPath::sample(11, 4.0, 0.5).unwrap();
    let b = EnvironmentPath::sample(11, 4.0, 0.5).unwrap();
    assert_eq!(a.values(), b.values());
    let right: Vec<f64> = (1..=8).map(|k| a.eval(0.5 * k as f64).unwrap()).collect();
    let left: Vec<f64> = (1..=8).map(|k| a.eval(-0.5 * k as f64).unwrap()).collect();
    assert_ne!(right, left);
}

#[test]
fn enlarging_keeps_the_seed_lineage() {
    let small = EnvironmentPath::sample(5, 4.0, 0.25).unwrap().refine(&[0.1, -2.3]).unwrap();
    let big = small.enlarged(16.0).unwrap();
    for (x, w) in small.nodes().iter().zip(small.values()) {
        assert_eq!(big.eval(*x).unwrap().to_bits(), w.to_bits());
    }
    let direct = EnvironmentPath::sample(5, 16.0, 0.25).unwrap();
    assert_eq!(direct.eval(3.75).unwrap(), big.eval(3.75).unwrap());
}

#[test]
fn refining_at_an_existing_node_changes_nothing() {
    let env = EnvironmentPath::sample(3, 2.0, 0.25).unwrap();
    let same = env.refine(&[0.5, -1.0, 0.0]).unwrap();
    assert_eq!(env.nodes(), same.nodes());
    assert_eq!(env.values(), same.values());
}

#[test]
fn refining_outside_the_domain_is_a_domain_error() {
    let env = EnvironmentPath::sample(3, 2.0, 0.25).unwrap();
    assert!(env.refine(&[2.5]).is_err());
}

#[test]
fn bad_parameters_are_rejected() {
    assert!(EnvironmentPath::sample(1, f64::NAN, 0.1).is_err());
    assert!(EnvironmentPath::sample(1, 1.0, 0.0).is_err());
    assert!(EnvironmentPath::sample(1, 1.0, 2.0).is_err());
    assert!(EnvironmentPath::sample(1, 1.0, 0.3).is_err());
    let env = EnvironmentPath::flat(1.0, 0.25).unwrap();
    assert!(env.clone().with_alpha(0.5).is_err());
    assert!(env.occupation_time(1.0, 1.0, 0.5, Direction::Forward).is_err());
}

#[test]
fn flat_environment_functionals_vanish() {
    let env = EnvironmentPath::flat(8.0, 0.125).unwrap();
    assert_eq!(env.oscillation(0.0, 1.0).unwrap(), 0.0);
    assert_eq!(env.holder_coefficient(0.0, 1.0).unwrap(), 0.0);
    assert_eq!(env.upsilon(3.0, 1.0).unwrap(), 0.0);
    let occ = env.occupation_time(-1.0, 1.0, 2.5, Direction::Forward).unwrap();
    assert!((occ - 2.5).abs() < 1e-12);
    let hit = env.hitting_time(Target::Level(1.0), Direction::Forward).unwrap();
    assert!(!hit.resolved());
}

#[test]
fn linear_environment_functionals() {
    let env = EnvironmentPath::linear(8.0, 0.125, 1.0).unwrap();
    let alpha = env.alpha();
    for r in [0.25, 1.0, 2.0] {
        assert!((env.oscillation(0.0, r).unwrap() - 2.0 * r).abs() < 1e-12);
        let expected = (2.0 * r).powf(1.0 - alpha);
        assert!((env.holder_coefficient(0.0, r).unwrap() - expected).abs() < 1e-12);
    }
    for b in [0.3, 1.0, 2.5] {
        let hit = env.hitting_time(Target::Level(b), Direction::Forward).unwrap();
        assert!((hit.position - b).abs() < 1e-9);
        assert_eq!(hit.side, Some(Side::Upper));
    }
    assert_eq!(env.hitting_time(Target::Level(0.0), Direction::Forward).unwrap().position, 0.0);
    let back = env.hitting_time(Target::Level(-1.5), Direction::Backward).unwrap();
    assert!((back.position - 1.5).abs() < 1e-9);
    let c = 1.7;
    let occ = env.occupation_time(0.0, c, 3.0, Direction::Forward).unwrap();
    assert!((occ - c).abs() < 1e-12);
}

#[test]
fn corridor_reports_the_exit_side() {
    let env = EnvironmentPath::injected("tent", 8.0, 0.125, |z| if z < 2.0 { z } else { 4.0 - z }).unwrap();
    let up = env.hitting_time(Target::Corridor { lower: -1.0, upper: 1.5 }, Direction::Forward).unwrap();
    assert_eq!(up.side, Some(Side::Upper));
    assert!((up.position - 1.5).abs() < 1e-9);
    let down = env.hitting_time(Target::Corridor { lower: -1.0, upper: 3.0 }, Direction::Forward).unwrap();
    assert_eq!(down.side, Some(Side::Lower));
    assert!((down.position - 5.0).abs() < 1e-9);
}

#[test]
fn upsilon_is_non_decreasing() {
    for seed in 0..5 {
        let env = EnvironmentPath::sample(seed, 24.0, 1.0 / 32.0).unwrap();
        let prof = env.upsilon_profile(20, 1.0).unwrap();
        assert!(prof.windows(2).all(|p| p[1] >= p[0]));
        assert!(prof.iter().all(|&v| v >= 0.0));
    }
}

#[test]
fn csv_round_trip_restores_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    let env = EnvironmentPath::sample(77, 2.0, 0.125).unwrap().refine(&[0.3]).unwrap();
    let csv = dir.path().join("env.csv");
    let meta = dir.path().join("env.json");
    env.write_csv(&csv).unwrap();
    env.write_metadata(&meta).unwrap();
    let back = EnvironmentPath::read(&csv, &meta).unwrap();
    assert_eq!(back.nodes(), env.nodes());
    assert_eq!(back.values(), env.values());
    assert!(back.is_brownian());
    assert_eq!(back.master_seed(), 77);
    let more = back.refine(&[1.3]).unwrap();
    let direct = env.refine(&[1.3]).unwrap();
    assert_eq!(more.eval(1.3).unwrap(), direct.eval(1.3).unwrap());
}

#[test]
fn marginal_variance_at_one() {
    let n = 10_000;
    let w1: Vec<f64> =
        (0..n).map(|s| EnvironmentPath::sample(s, 2.0, 1.0 / 64.0).unwrap().eval(1.0).unwrap()).collect();
    let (var, se) = variance_with_se(&w1);
    assert!((var - 1.0).abs() <= 3.0 * se, "var {var} se {se}");
}

#[test]
fn increments_are_standard_normal() {
    let h0 = 1.0 / 64.0;
    let z: Vec<f64> = (0..10_000u64)
        .map(|s| {
            let env = EnvironmentPath::sample(s, 1.0, h0).unwrap();
            let k = (s % 64) as f64;
            (env.eval((k + 1.0) * h0 - 1.0).unwrap() - env.eval(k * h0 - 1.0).unwrap()) / h0.sqrt()
        })
        .collect();
    let ks = ks_test(&z, standard_normal_cdf, f64::INFINITY);
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn bridge_midpoint_variance_is_a_quarter_of_the_cell() {
    let h = 0.125;
    let dev: Vec<f64> = (0..10_000)
        .map(|s| {
            let env = EnvironmentPath::sample(s, 1.0, h).unwrap();
            let (w0, w1) = (env.eval(0.25).unwrap(), env.eval(0.375).unwrap());
            env.refine(&[0.3125]).unwrap().eval(0.3125).unwrap() - 0.5 * (w0 + w1)
        })
        .collect();
    let (var, se) = variance_with_se(&dev);
    assert!((var - h / 4.0).abs() <= 3.0 * se, "var {var} se {se}");
}

#[test]
fn hitting_law_of_level_one() {
    let censor = 256.0;
    let h: Vec<f64> = (0..3000)
        .map(|s| {
            let env = EnvironmentPath::sample(s, censor, 1.0 / 16.0).unwrap();
            env.hitting_time(Target::Level(1.0), Direction::Forward).unwrap().position
        })
        .collect();
    let cdf = |s: f64| broxlab_core::annealed::closed_form::hitting_cdf(1.0, s).unwrap();
    let ks = ks_test(&h, cdf, censor);
    assert!(ks.p_value > 0.01, "{ks:?}");
}

#[test]
fn range_tail_against_the_gaussian_shape() {
    // Fraction with ξ₀(1) ≥ λ, c₀ calibrated at λ = 2, checked at λ = 3.
    let n = 10_000;
    let range: Vec<f64> = (0..n)
        .map(|s| {
            let env = EnvironmentPath::sample(s, 1.0, 1.0 / 256.0).unwrap();
            let (lo, hi) = env.range_on(0.0, 1.0).unwrap();
            hi - lo
        })
        .collect();
    let frac = |l: f64| range.iter().filter(|&&r| r >= l).count() as f64 / n as f64;
    let shape = |l: f64| (-l * l / 2.0).exp() / l;
    let c0 = frac(2.0) / shape(2.0);
    assert!(c0 > 0.0);
    for l in [2.0, 3.0] {
        assert!(frac(l) <= 3.0 * c0 * shape(l), "λ = {l}: {} vs {}", frac(l), 3.0 * c0 * shape(l));
    }
}

#[test]
fn holder_coefficient_has_a_gaussian_moment() {
    let xi: Vec<f64> = (0..2000)
        .map(|s| EnvironmentPath::sample(s, 1.0, 1.0 / 64.0).unwrap().holder_coefficient(0.0, 1.0).unwrap())
        .collect();
    let moment = |v: &[f64], l: f64| v.iter().map(|x| (l * x * x).exp()).sum::<f64>() / v.len() as f64;
    let stable = |l: f64| {
        let half = moment(&xi[..1000], l);
        let full = moment(&xi, l);
        full.is_finite() && ((full - half) / full).abs() < 0.2
    };
    let found = [0.4, 0.2, 0.1, 0.05, 0.025].into_iter().find(|&l| stable(l));
    assert!(found.is_some());
}

#[test]
fn refinement_order_does_not_matter_on_a_lattice() {
    let env = EnvironmentPath::sample(9, 2.0, 0.25).unwrap();
    let pts = [0.1, 0.11, -0.7, 1.33, 0.105];
    let once = env.refine(&pts).unwrap();
    let mut step = env.clone();
    for p in pts.iter().rev() {
        step = step.refine(&[*p]).unwrap();
    }
    assert_eq!(once.nodes(), step.nodes());
    assert_eq!(once.values(), step.values());
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 48, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn refinement_never_moves_existing_nodes(seed in 0u64..1000, pts in prop::collection::vec(-3.0f64..3.0, 1..12)) {
        let env = EnvironmentPath::sample(seed, 3.0, 0.25).unwrap();
        let fine = env.refine(&pts).unwrap();
        for (x, w) in env.nodes().iter().zip(env.values()) {
            prop_assert_eq!(fine.eval(*x).unwrap().to_bits(), w.to_bits());
        }
        prop_assert!(fine.nodes().windows(2).all(|p| p[0] < p[1]));
        prop_assert_eq!(fine.eval(0.0).unwrap(), 0.0);
    }

    #[test]
    fn refinement_is_order_independent(seed in 0u64..1000, pts in prop::collection::vec(-2.0f64..2.0, 2..8)) {
        let env = EnvironmentPath::sample(seed, 2.0, 0.25).unwrap();
        let a = env.refine(&pts).unwrap();
        let mut rev = pts.clone();
        rev.reverse();
        let mut b = env.clone();
        for p in rev {
            b = b.refine(&[p]).unwrap();
        }
        prop_assert_eq!(a.values(), b.values());
    }

    #[test]
    fn oscillation_is_dominated_by_the_holder_coefficient(
        seed in 0u64..1000,
        x in -1.0f64..1.0,
        r in 0.1f64..1.0,
        frac in 0.05f64..1.0,
    ) {
        let env = EnvironmentPath::sample(seed, 4.0, 1.0 / 16.0).unwrap();
        let s = r * frac;
        let res = r / 32.0;
        let xi = env.oscillation_at(x, s, res).unwrap();
        let big = env.holder_coefficient_at(x, r, res).unwrap();
        prop_assert!(xi >= 0.0 && big >= 0.0);
        prop_assert!(xi <= big * (2.0 * s).powf(env.alpha()) * (1.0 + 1e-12), "{} > {}", xi, big * (2.0 * s).powf(env.alpha()));
    }

    #[test]
    fn occupation_splits_the_horizon(seed in 0u64..1000, x in 0.0f64..4.0, c in -1.0f64..1.0) {
        let env = EnvironmentPath::sample(seed, 4.0, 1.0 / 16.0).unwrap();
        for dir in [Direction::Forward, Direction::Backward] {
            let below = env.occupation_time(f64::NEG_INFINITY, c, x, dir).unwrap();
            let above = env.occupation_time(c, f64::INFINITY, x, dir).unwrap();
            prop_assert!(below >= 0.0 && above >= 0.0);
            prop_assert!((below + above - x).abs() < 1e-9);
        }
    }

    #[test]
    fn hitting_positions_are_first_crossings(seed in 0u64..1000, b in 0.2f64..1.5) {
        let env = EnvironmentPath::sample(seed, 16.0, 1.0 / 16.0).unwrap();
        let hit = env.hitting_time(Target::Level(b), Direction::Forward).unwrap();
        if hit.resolved() {
            prop_assert!(hit.position > 0.0 && hit.position <= 16.0);
            let (_, hi) = env.range_on(0.0, (hit.position - 1.0 / 16.0).max(0.0)).unwrap();
            prop_assert!(hi < b);
        }
    }
}
