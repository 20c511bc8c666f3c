use std::f64::consts::PI;

use broxlab_core::kernel::{
    diag_series, gaussian_shape_fit, heat_kernel_y, nash_bound_check, nash_bound_check_grown, off_diagonal_ratios,
    quenched_bound_report, KernelGrid, NashDomain, SolverOptions,
};
use broxlab_core::rng::{derive_seed, tag};
use broxlab_core::{EnvironmentPath, ScaleTable};

fn opts() -> SolverOptions {
    SolverOptions::default()
}

fn sampled(seed: u64) -> EnvironmentPath {
    EnvironmentPath::sample(seed, 8.0, 1.0 / 64.0).unwrap()
}

fn gauss(t: f64) -> f64 {
    1.0 / (2.0 * PI * t).sqrt()
}

#[test]
fn flat_stencil_is_the_three_point_half_laplacian() {
    let h = 0.125;
    let g = KernelGrid::x_grid(&EnvironmentPath::flat(2.0, h).unwrap(), h).unwrap();
    for i in 1..g.len() - 1 {
        let (l, d, r) = g.generator_row(i);
        assert!((l - 0.5 / (h * h)).abs() < 1e-12 && (r - 0.5 / (h * h)).abs() < 1e-12);
        assert!((d + 1.0 / (h * h)).abs() < 1e-12);
    }
    assert_eq!(g.generator_row(0), (0.0, 0.0, 0.0));
}

#[test]
fn generator_is_measure_symmetric_and_conservative() {
    for seed in 0..5 {
        let g = KernelGrid::x_grid(&sampled(seed), 1.0 / 32.0).unwrap();
        let m = g.masses();
        assert!(m.iter().chain(g.conductances()).all(|&v| v > 0.0));
        for i in 1..g.len() - 2 {
            let (_, d, r) = g.generator_row(i);
            let (l_next, _, _) = g.generator_row(i + 1);
            let (a, b) = (m[i] * r, m[i + 1] * l_next);
            assert!((a - b).abs() <= 1e-14 * a.abs(), "seed {seed} row {i}: {a} vs {b}");
            let (l, _, _) = g.generator_row(i);
            assert!((l + d + r).abs() <= 1e-12 * d.abs());
        }
    }
}

#[test]
fn flat_gaussian_pin_and_resolution_convergence() {
    let env = EnvironmentPath::flat(8.0, 1.0 / 256.0).unwrap();
    let p = |h: f64| {
        let g = KernelGrid::x_grid(&env, h).unwrap();
        let s = g.heat_kernel(1.0, g.index_of(0.0), &opts()).unwrap();
        s.p_leb[g.index_of(0.0)]
    };
    let (coarse, fine) = (p(1.0 / 128.0), p(1.0 / 256.0));
    assert!(((coarse - gauss(1.0)) / gauss(1.0)).abs() < 0.01, "{coarse}");
    assert!(((coarse - fine) / fine).abs() <= 0.003, "{coarse} vs {fine}");
}

#[test]
fn chapman_kolmogorov_and_column_row_symmetry() {
    for env in [EnvironmentPath::flat(8.0, 1.0 / 64.0).unwrap(), sampled(7)] {
        let g = KernelGrid::x_grid(&env, 1.0 / 64.0).unwrap();
        let (ix, iy) = (g.index_of(0.0), g.index_of(0.5));
        for t in [0.25, 0.5, 1.0] {
            let from_x = g.evolve(ix, &[t, 2.0 * t], &opts()).unwrap();
            let from_y = g.heat_kernel(t, iy, &opts()).unwrap();
            let (a, b) = (from_x[0].p_ref[iy], from_y.p_ref[ix]);
            assert!(((a - b) / a).abs() <= 1e-8, "t {t}: {a} vs {b}");
            let composed: f64 =
                (0..g.len()).map(|k| from_x[0].p_ref[k] * from_y.p_ref[k] * g.masses()[k]).sum();
            let direct = from_x[1].p_ref[iy];
            assert!(((composed - direct) / direct).abs() <= 1e-4, "t {t}: {composed} vs {direct}");
        }
    }
}

#[test]
fn kernel_is_nonnegative_with_small_deficit() {
    let g = KernelGrid::x_grid(&sampled(2), 1.0 / 64.0).unwrap();
    let s = g.heat_kernel(1.0, g.index_of(0.0), &opts()).unwrap();
    assert!(s.p_ref.iter().all(|&v| v >= 0.0));
    assert!(s.min_value >= -1e-12 || s.clipped > 0);
    assert!((0.0..=1e-6).contains(&s.mass_deficit), "{}", s.mass_deficit);
}

#[test]
fn diagonal_decreases_in_time() {
    for seed in 0..5 {
        let g = KernelGrid::x_grid(&sampled(seed), 1.0 / 64.0).unwrap();
        let t: Vec<f64> = (0..12).map(|k| 0.05 * 1.5f64.powi(k)).collect();
        let d = diag_series(&g, 0.0, &t, &opts()).unwrap();
        assert!(d.p_leb.windows(2).all(|p| p[1] < p[0]), "seed {seed}: {:?}", d.p_leb);
    }
}

#[test]
fn flat_diagonal_times_root_t_is_constant() {
    let g = KernelGrid::x_grid(&EnvironmentPath::flat(8.0, 1.0 / 128.0).unwrap(), 1.0 / 128.0).unwrap();
    let t: Vec<f64> = (0..=12).map(|k| 0.01 * 10f64.powf(k as f64 / 4.0)).collect();
    let d = diag_series(&g, 0.0, &t, &opts()).unwrap();
    for (t, p) in d.t.iter().zip(&d.p_leb) {
        let r = p * t.sqrt() * (2.0 * PI).sqrt();
        assert!((r - 1.0).abs() < 0.01, "t {t}: ratio {r}");
    }
}

#[test]
fn psi_identity_in_scale_coordinates() {
    for env in [EnvironmentPath::flat(8.0, 1.0 / 64.0).unwrap(), sampled(9)] {
        let table = ScaleTable::build(&env).unwrap();
        let g = KernelGrid::y_grid(&table, 0.0, 1.0 / 64.0, 200_000).unwrap();
        let i = g.index_of(0.0);
        for t in [0.25, 1.0] {
            let restart = SolverOptions { restart: true, ..opts() };
            let sols = g.evolve(i, &[t, 2.0 * t], &restart).unwrap();
            let psi: f64 = (0..g.len()).map(|k| sols[0].p_ref[k].powi(2) * g.masses()[k]).sum();
            let direct = sols[1].p_ref[i];
            assert!(((psi - direct) / direct).abs() <= 1e-6, "t {t}: {psi} vs {direct}");
        }
    }
}

#[test]
fn flat_y_kernel_equals_the_x_kernel() {
    let env = EnvironmentPath::flat(4.0, 1.0 / 64.0).unwrap();
    let table = ScaleTable::build(&env).unwrap();
    let gx = KernelGrid::x_grid(&env, 1.0 / 64.0).unwrap();
    let sx = gx.heat_kernel(1.0, gx.index_of(0.0), &opts()).unwrap();
    let (gy, sy) = heat_kernel_y(&table, 1.0, 0.0, 1.0 / 64.0, 100_000, &opts()).unwrap();
    assert_eq!(gx.len(), gy.len());
    for (a, b) in sx.p_ref.iter().zip(&sy.p_ref) {
        assert!((a - b).abs() <= 1e-10, "{a} vs {b}");
    }
}

#[test]
fn x_and_y_solvers_agree_through_the_scale_map() {
    for seed in [11, 12, 13] {
        let env = sampled(seed);
        let table = ScaleTable::build(&env).unwrap();
        let gx = KernelGrid::x_grid(&env, 1.0 / 64.0).unwrap();
        let sx = gx.heat_kernel(1.0, gx.index_of(0.0), &opts()).unwrap();
        let (_, sy) = heat_kernel_y(&table, 1.0, 0.0, 1.0 / 64.0, 400_000, &opts()).unwrap();
        for y in [-0.5, 0.0, 0.5] {
            let px = sx.p_ref[gx.index_of(y)];
            let py = sy.interpolate(table.s(y).unwrap());
            assert!(((px - py) / px).abs() <= 0.02, "seed {seed} y {y}: {px} vs {py}");
        }
    }
}

#[test]
fn nash_bounds_on_the_flat_environment() {
    let env = EnvironmentPath::flat(16.0, 1.0 / 32.0).unwrap();
    let table = ScaleTable::build(&env).unwrap();
    let g = KernelGrid::x_grid(&env, 1.0 / 32.0).unwrap();
    let rep = nash_bound_check(&table, &g, 0.0, 1.0, &opts()).unwrap();
    assert!((rep.t_upper - 8.0).abs() < 1e-12 && (rep.t_lower - 1.0).abs() < 1e-12);
    assert!((rep.p_upper - gauss(8.0)).abs() < 1e-3 * gauss(8.0));
    assert!((rep.bound_upper - 1.0).abs() < 1e-12);
    assert!((rep.bound_lower - 4.0 / 4096.0).abs() < 1e-15);
    assert!(rep.upper_ok && rep.lower_ok);
}

#[test]
fn nash_bounds_on_sampled_environments() {
    for seed in 0..5 {
        let (table, _) = ScaleTable::covering(&sampled(seed), 0.0, 2.0, 1e5).unwrap();
        let g = KernelGrid::x_grid(table.env(), 1.0 / 32.0).unwrap();
        for r in [0.5, 1.0] {
            let rep = nash_bound_check(&table, &g, 0.0, r, &opts()).unwrap();
            assert!(rep.upper_ok && rep.lower_ok, "seed {seed} R {r}: {rep:?}");
            assert!(rep.upper_slack >= 1.0 && rep.lower_slack >= 1.0);
        }
    }
}

#[test]
fn nash_bounds_hold_across_a_deep_valley() {
    // A valley of depth ≈ 66 lies 860 units out, behind a barrier of ≈ 27, inside
    // the scale ball of radius 2. The diffusion crosses the barrier by t ≈ 10¹⁵
    // and equilibrates long before t_upper ≈ 3·10³⁰; an integrator that is not
    // L-stable leaves the crossing mode frozen and breaks the upper bound.
    let env = EnvironmentPath::sample(derive_seed(1, tag::ENVIRONMENT, 35), 8.0, 1.0 / 64.0).unwrap();
    let g = nash_bound_check_grown(&env, 0.0, 2.0, &NashDomain::default(), &opts()).unwrap();
    let rep = g.report;
    assert!(rep.v_r > 1e29, "{rep:?}");
    assert!(rep.upper_ok && rep.lower_ok, "{g:?}");
    assert!(rep.mass_deficit.abs() <= 1e-3);
    // Equilibrium on the truncated domain.
    assert!((rep.p_upper * g.report.v_r - 1.0).abs() < 0.1, "{rep:?}");
}

#[test]
fn flat_normalised_diagonal_is_gaussian() {
    let env = EnvironmentPath::flat(8.0, 1.0 / 64.0).unwrap();
    let g = KernelGrid::x_grid(&env, 1.0 / 64.0).unwrap();
    let rep = quenched_bound_report(&env, &g, &[0.1, 0.25, 0.5], &[0.0, 1.0], 3.0, &opts()).unwrap();
    assert!(rep.envelope < 1e-2, "{}", rep.envelope);
    assert!((rep.fit.slope + 0.5).abs() < 0.01, "{:?}", rep.fit);
}

#[test]
fn sampled_off_diagonal_shape() {
    let env = sampled(4);
    let g = KernelGrid::x_grid(&env, 1.0 / 64.0).unwrap();
    let (samples, _) = off_diagonal_ratios(&g, 0.0, &[0.25], 3.0, &opts()).unwrap();
    let fit = gaussian_shape_fit(&samples);
    assert!((-1.0..=-0.25).contains(&fit.slope), "{fit:?}");
    for seed in 0..5 {
        let env = sampled(seed);
        let g = KernelGrid::x_grid(&env, 1.0 / 64.0).unwrap();
        let rep = quenched_bound_report(&env, &g, &[0.1, 0.25, 0.5], &[0.0], 3.0, &opts()).unwrap();
        assert!(rep.c_lo_rate >= rep.c_hi_rate && rep.c_hi_rate > 0.0);
        assert!(rep.c_hi.is_finite() && rep.c_lo > 0.0 && (rep.c_hi / rep.c_lo).is_finite());
    }
}
