use broxlab_core::scale::VolumeVariant;
use broxlab_core::{BroxError, EnvironmentPath, ScaleTable};
use proptest::prelude::*;

fn sampled(seed: u64) -> EnvironmentPath {
    EnvironmentPath::sample(seed, 16.0, 1.0 / 16.0).unwrap()
}

/// Table large enough for every volume up to radius `r` around `|x| ≤ 2`,
/// or `None` when that needs more than `max_half_width`.
fn covering(seed: u64, r: f64, max_half_width: f64) -> Option<ScaleTable> {
    let env = sampled(seed);
    let (a, _) = ScaleTable::covering(&env, -2.0, r, max_half_width).ok()?;
    let (b, _) = ScaleTable::covering(a.env(), 2.0, r, max_half_width).ok()?;
    Some(b)
}

fn table_for(seed: u64, r: f64) -> ScaleTable {
    covering(seed, r, 1e6).unwrap()
}

#[test]
fn flat_scale_is_the_identity() {
    let t = ScaleTable::build(&EnvironmentPath::flat(8.0, 0.125).unwrap()).unwrap();
    for x in [-7.5, -1.0, 0.0, 0.3, 6.0] {
        assert!((t.s(x).unwrap() - x).abs() < 1e-12);
        assert!((t.m(x).unwrap() - x).abs() < 1e-12);
        assert!((t.inverse(x).unwrap() - x).abs() < 1e-12);
    }
    let (dp, dm) = t.delta_radii(0.5, 1.5).unwrap();
    assert!((dp - 1.5).abs() < 1e-12 && (dm - 1.5).abs() < 1e-12);
    let v = t.volume(0.0, 2.0).unwrap();
    assert!((v.v - 4.0).abs() < 1e-12);
    assert!((v.lower_bound - 4.0).abs() < 1e-12 && (v.upper_bound - 4.0).abs() < 1e-12);
    let r = t.solve_r_of_t(0.0, 3.0, VolumeVariant::TwoSided, 4.0).unwrap();
    assert!((r - (3.0f64 / 8.0).sqrt()).abs() < 1e-9);
}

#[test]
fn linear_scale_matches_the_exponential() {
    let t = ScaleTable::build(&EnvironmentPath::linear(8.0, 1.0 / 4096.0, 1.0).unwrap()).unwrap();
    for x in [-2.0, -0.5, 0.25, 1.0, 3.0] {
        assert!((t.s(x).unwrap() - x.exp_m1()).abs() < 1e-6 * x.exp().max(1.0));
        assert!((t.m(x).unwrap() + (-x).exp_m1()).abs() < 1e-6 * (-x).exp().max(1.0));
    }
    let e1 = std::f64::consts::E - 1.0;
    assert!((t.inverse(e1).unwrap() - 1.0).abs() < 1e-6);
    for r in [0.1, 0.5, 0.9] {
        let (dp, dm) = t.delta_radii(0.0, r).unwrap();
        assert!((dp - r.ln_1p()).abs() < 1e-8);
        assert!((dm + (-r).ln_1p()).abs() < 1e-8);
        let v = t.volume(0.0, r).unwrap();
        assert!((v.v_plus - r / (1.0 + r)).abs() < 1e-8);
    }
}

#[test]
fn inverse_outside_the_table_is_a_range_error() {
    let t = ScaleTable::build(&EnvironmentPath::flat(2.0, 0.25).unwrap()).unwrap();
    assert!(matches!(t.inverse(2.5), Err(BroxError::Range { .. })));
    assert!(matches!(t.delta_radii(1.5, 1.0), Err(BroxError::Range { .. })));
}

#[test]
fn volume_sandwich_on_sampled_environments() {
    let mut checked = 0;
    for seed in 0..100 {
        let t = table_for(seed, 10.0);
        for x in [-2.0, 0.0, 2.0] {
            for r in [0.1, 1.0, 10.0] {
                let v = t.volume(x, r).unwrap();
                assert!(v.sandwich_holds(1e-3), "seed {seed} x {x} R {r}: {v:?}");
                assert!(((v.v_plus + v.v_minus) - v.v).abs() <= 1e-12 * v.v);
                assert!(v.delta_plus > 0.0 && v.delta_minus > 0.0);
                checked += 1;
            }
        }
    }
    assert_eq!(checked, 900);
}

#[test]
fn round_trip_on_random_targets() {
    let t = ScaleTable::build(&sampled(4)).unwrap();
    let (lo, hi) = t.s_range();
    for k in 0..100 {
        let y = lo + (hi - lo) * (k as f64 + 0.5) / 100.0;
        let x = t.inverse(y).unwrap();
        assert!((t.s(x).unwrap() - y).abs() <= 1e-10 * y.abs().max(1.0));
    }
}

#[test]
fn solve_r_of_t_residual_on_sampled_env() {
    let t = table_for(8, 2.0);
    let r = t.solve_r_of_t(0.0, 1.0, VolumeVariant::TwoSided, 4.0).unwrap();
    let v = t.volume_only(0.0, r, VolumeVariant::TwoSided).unwrap();
    assert!((4.0 * r * v - 1.0).abs() <= 1e-8);
}

#[test]
fn refining_and_rebuilding_moves_the_scale_little() {
    let env = EnvironmentPath::sample(21, 4.0, 1.0 / 64.0).unwrap();
    let coarse = ScaleTable::build(&env).unwrap();
    let fine = ScaleTable::build(&env.refine_uniform(-4.0, 4.0, 1.0 / 512.0).unwrap()).unwrap();
    for x in [-3.0, -1.0, 1.0, 3.0] {
        let (a, b) = (coarse.s(x).unwrap(), fine.s(x).unwrap());
        assert!(((a - b) / a).abs() < 1e-2, "x {x}: {a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn tables_are_strictly_increasing(seed in 0u64..10_000) {
        let t = ScaleTable::build(&EnvironmentPath::sample(seed, 8.0, 1.0 / 8.0).unwrap()).unwrap();
        prop_assert!(t.s_values().windows(2).all(|p| p[1] > p[0]));
        prop_assert!(t.m_values().windows(2).all(|p| p[1] > p[0]));
        prop_assert_eq!(t.s(0.0).unwrap(), 0.0);
        prop_assert_eq!(t.m(0.0).unwrap(), 0.0);
    }

    #[test]
    fn radii_are_self_consistent(seed in 0u64..10_000, x in -2.0f64..2.0, r in 0.05f64..5.0) {
        let t = covering(seed, 5.0, 4096.0);
        prop_assume!(t.is_some());
        let t = t.unwrap();
        let (dp, dm) = t.delta_radii(x, r).unwrap();
        let sx = t.s(x).unwrap();
        prop_assert!((t.s(x + dp).unwrap() - sx - r).abs() <= 1e-8 * r);
        prop_assert!((sx - t.s(x - dm).unwrap() - r).abs() <= 1e-8 * r);
        let v = t.volume_only(x, r, VolumeVariant::TwoSided).unwrap();
        prop_assert!(dp + dm <= (2.0 * r * v).sqrt() * (1.0 + 1e-9));
    }

    #[test]
    fn volume_is_increasing_in_r(seed in 0u64..10_000, x in -2.0f64..2.0) {
        let t = covering(seed, 5.0, 4096.0);
        prop_assume!(t.is_some());
        let t = t.unwrap();
        let vs: Vec<f64> = (1..=20).map(|k| t.volume_only(x, 0.25 * k as f64, VolumeVariant::TwoSided).unwrap()).collect();
        // Far into a deep valley the increments drop below one ulp of V.
        prop_assert!(vs.windows(2).all(|p| p[1] > p[0] || (p[1] == p[0] && p[0] > 1e12)));
    }

    #[test]
    fn r_of_t_is_increasing(seed in 0u64..10_000, t1 in 0.05f64..2.0, ratio in 1.01f64..4.0) {
        let t = covering(seed, 5.0, 4096.0);
        prop_assume!(t.is_some());
        let t = t.unwrap();
        let a = t.solve_r_of_t(0.0, t1, VolumeVariant::TwoSided, 4.0).unwrap();
        let b = t.solve_r_of_t(0.0, t1 * ratio, VolumeVariant::TwoSided, 4.0).unwrap();
        prop_assert!(a < b);
        let v = t.volume_only(0.0, a, VolumeVariant::TwoSided).unwrap();
        prop_assert!(((4.0 * a * v - t1) / t1).abs() <= 1e-8);
    }
}
