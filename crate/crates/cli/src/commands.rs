//! The eight subcommands. Each writes its artifacts into the output
//! directory and returns its checks; nothing here depends on wall time or
//! on the number of worker threads.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use broxlab_core::annealed::{annealed_diag, oracle_validation_with, quenched_growth_stats};
use broxlab_core::kernel::{
    gaussian_shape_fit, heat_kernel_y, nash_bound_check_grown, off_diagonal_ratios, quenched_bound_report,
    write_kernel_csv, GrownNash, KernelGrid, KernelSolution, QuenchedReport,
};
use broxlab_core::rng::{derive_seed, tag};
use broxlab_core::scale::write_volume_csv;
use broxlab_core::sde::{
    ensemble_c9, exit_bound_check, exit_time_exact, exit_time_mc, simulate_brox, survival_bound_check,
    terminal_sample, ExitBoundCheck, SurvivalReport,
};
use broxlab_core::stats::{ks_test, mean_se, variance_with_se, LinearFit};
use broxlab_core::{BroxError, EnvironmentPath, ExitSample, ScaleTable, VolumeResult};
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::config::{Coordinate, EnvKind, RunConfig};
use crate::{CliError, Command};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Default)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub artifacts: Vec<String>,
}

struct Run<'a> {
    cfg: &'a RunConfig,
    out: &'a Path,
    outcome: Outcome,
}

impl Run<'_> {
    /// Path of a new artifact, recorded in the manifest.
    fn artifact(&mut self, name: &str) -> PathBuf {
        self.outcome.artifacts.push(name.to_string());
        self.out.join(name)
    }

    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let path = self.artifact(name);
        let text = serde_json::to_string_pretty(value).map_err(broxlab_core::BroxError::from)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    fn write_text(&mut self, name: &str, text: &str) -> Result<(), CliError> {
        let path = self.artifact(name);
        std::fs::write(path, text)?;
        Ok(())
    }

    fn check(&mut self, name: &str, pass: bool, detail: String) {
        self.outcome.checks.push(Check { name: name.to_string(), pass, detail });
    }

    fn warn(&mut self, message: String) {
        self.outcome.warnings.push(message);
    }

    fn progress(&self, message: &str) {
        eprintln!("[broxlab] {message}");
    }
}

pub fn run(command: Command, cfg: &RunConfig, out: &Path) -> Result<Outcome, CliError> {
    let mut run = Run { cfg, out, outcome: Outcome::default() };
    match command {
        Command::EnvSample => env_sample(&mut run)?,
        Command::VolumeSweep => volume_sweep(&mut run)?,
        Command::Simulate => simulate(&mut run)?,
        Command::ExitStudy => exit_study(&mut run)?,
        Command::Kernel => kernel(&mut run)?,
        Command::VerifyQuenched => verify_quenched(&mut run)?,
        Command::VerifyAnnealed => verify_annealed(&mut run)?,
        Command::Oracles => oracles(&mut run)?,
    }
    Ok(run.outcome)
}

/// Full round-trip precision for CSV fields.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn env_sample(run: &mut Run) -> Result<(), CliError> {
    let s = &run.cfg.sample;
    run.progress(&format!("sampling {} environment(s)", s.n_envs));
    let mut functionals = String::from("env,x,r,xi,Xi,Upsilon,resolution\n");
    let mut identical = true;
    for i in 0..s.n_envs {
        let env = run.cfg.environment(i as u64)?;
        let (csv, meta) = (format!("env_{i}.csv"), format!("env_{i}.json"));
        env.write_csv(run.artifact(&csv))?;
        env.write_metadata(run.artifact(&meta))?;
        let back = EnvironmentPath::read(run.out.join(&csv), run.out.join(&meta))?;
        identical &= back.nodes() == env.nodes() && back.values() == env.values() && back.metadata() == env.metadata();
        for &x in &s.points {
            for &r in &s.radii {
                let f = env.functionals(x, r, s.c0)?;
                let _ = writeln!(
                    functionals,
                    "{i},{},{},{},{},{},{}",
                    num(x),
                    num(r),
                    num(f.xi),
                    num(f.holder),
                    num(f.upsilon),
                    num(f.resolution)
                );
            }
        }
    }
    run.write_text("functionals.csv", &functionals)?;
    run.check("env_round_trip", identical, format!("{} environment(s) re-read bit for bit", s.n_envs));
    Ok(())
}

#[derive(Serialize)]
struct VolumeEnv {
    env: usize,
    half_width: f64,
    enlargements: usize,
    clipped: usize,
    /// `(x, R)` pairs whose radii do not fit within the largest allowed domain.
    uncovered: Vec<[f64; 2]>,
    sandwich: bool,
}

fn volume_sweep(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let v = &cfg.volume;
    run.progress(&format!("volume sweep over {} environments", v.n_envs));
    let per_env: Vec<(VolumeEnv, Vec<VolumeResult>)> = (0..v.n_envs)
        .into_par_iter()
        .map(|i| -> Result<_, CliError> {
            let mut table = ScaleTable::build(&cfg.environment(i as u64)?)?;
            let (mut enlargements, mut rows, mut uncovered) = (0, Vec::new(), Vec::new());
            for &x in &v.points {
                for &r in &v.radii {
                    match table.volume(x, r) {
                        Ok(row) => rows.push(row),
                        Err(_) => match ScaleTable::covering(table.env(), x, r, v.max_half_width) {
                            Ok((grown, n)) => {
                                table = grown;
                                enlargements += n;
                                rows.push(table.volume(x, r)?);
                            }
                            Err(BroxError::Range { .. } | BroxError::Domain { .. } | BroxError::Numerical(_)) => {
                                uncovered.push([x, r]);
                            }
                            Err(e) => return Err(e.into()),
                        },
                    }
                }
            }
            let summary = VolumeEnv {
                env: i,
                half_width: table.env().half_width(),
                enlargements,
                clipped: rows.iter().filter(|r| r.clipped).count(),
                sandwich: rows.iter().all(|r| r.sandwich_holds(v.slack)),
                uncovered,
            };
            Ok((summary, rows))
        })
        .collect::<Result<_, _>>()?;
    let rows: Vec<VolumeResult> = per_env.iter().flat_map(|(_, r)| r.iter().cloned()).collect();
    write_volume_csv(run.artifact("volume.csv"), &rows)?;
    let envs: Vec<&VolumeEnv> = per_env.iter().map(|(e, _)| e).collect();
    run.write_json("volume_envs.json", &envs)?;
    let failing = rows.iter().filter(|r| !r.sandwich_holds(v.slack)).count();
    run.check(
        "volume_sandwich",
        failing == 0,
        format!("{} of {} (x, R) pairs outside the sandwich at slack {}", failing, rows.len(), v.slack),
    );
    let split = rows.iter().map(|r| ((r.v_plus + r.v_minus) - r.v).abs() / r.v).fold(0.0, f64::max);
    run.check("volume_split", split <= 1e-12, format!("max |V₊ + V₋ − V|/V = {split:.3e}"));
    for e in envs.iter().filter(|e| !e.uncovered.is_empty()) {
        run.warn(format!(
            "environment {}: {} (x, R) pair(s) not covered within half-width {}",
            e.env,
            e.uncovered.len(),
            v.max_half_width
        ));
    }
    Ok(())
}

#[derive(Serialize)]
struct SimulateSummary {
    x0: f64,
    t_end: f64,
    ds: f64,
    n_paths: usize,
    truncated: usize,
    mean: f64,
    mean_se: f64,
    variance: f64,
    variance_se: f64,
    clock_error: f64,
    path_truncated: bool,
    ks_statistic: Option<f64>,
    ks_p_value: Option<f64>,
}

fn simulate(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let s = &cfg.simulate;
    let table = ScaleTable::build(&cfg.environment(0)?)?;
    run.progress(&format!("simulating {} paths to t = {}", s.n_paths, s.t_end));
    let path = simulate_brox(&table, s.x0, s.t_end, s.ds, derive_seed(cfg.seed, tag::PATH, 0), s.n_readout)?;
    path.write_csv(run.artifact("path.csv"))?;
    let clock_error = path
        .times
        .iter()
        .zip(&path.driver_times)
        .map(|(t, u)| (path.clock_at(*u) - t).abs())
        .fold(0.0, f64::max);
    let sample = terminal_sample(&table, s.x0, s.t_end, s.ds, s.n_paths, derive_seed(cfg.seed, tag::PATH, 1))?;
    let xs: Vec<f64> = sample.iter().flatten().copied().collect();
    let truncated = sample.len() - xs.len();
    let mut text = String::from("x\n");
    for x in &sample {
        let _ = writeln!(text, "{}", x.map_or("nan".to_string(), num));
    }
    run.write_text("terminal.csv", &text)?;
    let (mean, mse) = mean_se(&xs);
    let (variance, vse) = variance_with_se(&xs);
    let ks = (cfg.env.kind == EnvKind::Flat).then(|| {
        let normal = Normal::new(s.x0, s.t_end.sqrt()).expect("positive variance");
        ks_test(&xs, |x| normal.cdf(x), f64::INFINITY)
    });
    run.write_json(
        "simulate.json",
        &SimulateSummary {
            x0: s.x0,
            t_end: s.t_end,
            ds: s.ds,
            n_paths: s.n_paths,
            truncated,
            mean,
            mean_se: mse,
            variance,
            variance_se: vse,
            clock_error,
            path_truncated: path.truncated,
            ks_statistic: ks.as_ref().map(|k| k.statistic),
            ks_p_value: ks.as_ref().map(|k| k.p_value),
        },
    )?;
    run.check(
        "clock_consistency",
        clock_error <= 2.0 * s.ds,
        format!("max |T(T⁻¹(t)) − t| = {clock_error:.3e} (limit 2·ds = {:.3e})", 2.0 * s.ds),
    );
    if let Some(k) = ks {
        run.check(
            "flat_gaussian_ks",
            k.p_value > s.ks_level,
            format!("KS D = {:.4}, p = {:.4} against N({}, {})", k.statistic, k.p_value, s.x0, s.t_end),
        );
    }
    if truncated > 0 || path.truncated {
        run.warn(format!("{truncated} terminal paths left the domain before t_end"));
    }
    Ok(())
}

#[derive(Serialize)]
struct ExitRow {
    env: usize,
    sample: ExitSample,
    exact: f64,
    z_score: f64,
    sandwich: ExitBoundCheck,
    half_width: f64,
}

fn exit_study(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let e = &cfg.exit;
    let mut rows = Vec::new();
    let mut survival: Vec<SurvivalReport> = Vec::new();
    for i in 0..e.n_envs {
        run.progress(&format!("exit study: environment {} of {}", i + 1, e.n_envs));
        let (table, _) = ScaleTable::covering(&cfg.environment(i as u64)?, e.z, e.r, cfg.volume.max_half_width)?;
        let mut sample = exit_time_mc(&table, e.z, e.r, e.n_paths, derive_seed(cfg.seed, tag::PATH, i as u64), &e.options)?;
        let exact = exit_time_exact(&table, e.z, e.r)?;
        sample.exact = Some(exact);
        let z_score = (sample.mean - exact) / sample.se;
        let sandwich = exit_bound_check(&table, e.z, e.r)?;
        if sample.unresolved > 0 {
            run.warn(format!("environment {i}: {} exit paths unresolved", sample.unresolved));
        }
        run.check(
            &format!("exit_oracle[{i}]"),
            z_score.abs() <= e.se_factor,
            format!("MC {:.6} ± {:.6} vs exact {:.6} ({z_score:+.2} SE)", sample.mean, sample.se, exact),
        );
        run.check(
            &format!("exit_sandwich[{i}]"),
            sandwich.holds,
            format!("{:.4} ≤ {:.4} ≤ {:.4}", sandwich.lower, sandwich.mean, sandwich.upper),
        );
        if !e.survival.is_empty() {
            let sweep: Vec<(f64, f64)> = e.survival.iter().map(|&[r, t]| (r, t)).collect();
            let seed = derive_seed(cfg.seed, tag::PATH, (e.n_envs + i) as u64);
            survival.push(survival_bound_check(&table, e.z, &sweep, e.survival_paths, seed, e.c6, &e.options)?);
        }
        rows.push(ExitRow { env: i, sample, exact, z_score, sandwich, half_width: table.env().half_width() });
    }
    let mut csv = String::from("env,mean,se,exact,z_score,lower,upper,unresolved\n");
    for r in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            r.env,
            num(r.sample.mean),
            num(r.sample.se),
            num(r.exact),
            num(r.z_score),
            num(r.sandwich.lower),
            num(r.sandwich.upper),
            r.sample.unresolved
        );
    }
    run.write_text("exit.csv", &csv)?;
    for r in &rows {
        run.write_json(&format!("exit_{}.json", r.env), r)?;
    }
    if !survival.is_empty() {
        #[derive(Serialize)]
        struct Survival<'a> {
            reports: &'a [SurvivalReport],
            ensemble_c9: Option<f64>,
        }
        run.write_json("survival.json", &Survival { reports: &survival, ensemble_c9: ensemble_c9(&survival) })?;
    }
    Ok(())
}

#[derive(Serialize)]
struct KernelPoint {
    t: f64,
    source: f64,
    p_diagonal: f64,
    gaussian: f64,
    mass_deficit: f64,
    min_value: f64,
    clipped: usize,
    steps: usize,
}

fn kernel(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let k = &cfg.kernel;
    let env = cfg.environment(0)?;
    run.progress(&format!("kernel on the {:?} grid at {} time(s)", k.coordinate, k.t.len()));
    let (sols, diag): (Vec<KernelSolution>, Vec<f64>) = match k.coordinate {
        Coordinate::X => {
            let grid = KernelGrid::x_grid(&env, k.h)?;
            let i = grid.index_of(k.x_source);
            let sols = grid.evolve(i, &k.t, &cfg.solver)?;
            let diag = sols.iter().map(|s| s.p_leb[i]).collect();
            (sols, diag)
        }
        Coordinate::Y => {
            let table = ScaleTable::build(&env)?;
            let grid = KernelGrid::y_grid(&table, k.x_source, k.h, k.max_nodes)?;
            let i = grid.index_of(table.s(k.x_source)?);
            let sols = grid.evolve(i, &k.t, &cfg.solver)?;
            let diag = sols.iter().map(|s| s.p_ref[i]).collect();
            (sols, diag)
        }
    };
    write_kernel_csv(run.artifact("kernel.csv"), &sols)?;
    let points: Vec<KernelPoint> = sols
        .iter()
        .zip(&diag)
        .map(|(s, &p)| KernelPoint {
            t: s.t,
            source: s.source,
            p_diagonal: p,
            gaussian: 1.0 / (2.0 * PI * s.t).sqrt(),
            mass_deficit: s.mass_deficit,
            min_value: s.min_value,
            clipped: s.clipped,
            steps: s.steps,
        })
        .collect();
    run.write_json("kernel.json", &points)?;
    let nonnegative = sols.iter().all(|s| s.p_ref.iter().all(|&v| v >= 0.0));
    run.check("kernel_nonnegative", nonnegative, "every grid value is non-negative".into());
    for p in &points {
        if p.mass_deficit > cfg.solver.deficit_cap {
            run.warn(format!("t = {}: mass deficit {:.3e} above cap {:.3e}", p.t, p.mass_deficit, cfg.solver.deficit_cap));
        }
    }
    if cfg.env.kind == EnvKind::Flat {
        for p in &points {
            let rel = (p.p_diagonal - p.gaussian) / p.gaussian;
            run.check(
                &format!("flat_gaussian_pin[t={}]", p.t),
                rel.abs() <= k.pin_tolerance,
                format!("p(t,x,x) = {:.6} vs (2πt)^(-1/2) = {:.6} ({:+.3}%)", p.p_diagonal, p.gaussian, 100.0 * rel),
            );
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct ShapeRow {
    env: usize,
    fit: LinearFit,
    report: QuenchedReport,
}

fn verify_quenched(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let q = &cfg.quenched;
    let opts = cfg.solver;

    if q.nash_envs > 0 {
        run.progress(&format!("Nash bounds on {} environments × {} radii", q.nash_envs, q.nash_radii.len()));
        let nash: Vec<Vec<GrownNash>> = (0..q.nash_envs)
            .into_par_iter()
            .map(|i| -> Result<_, CliError> {
                let env = cfg.environment(i as u64)?;
                q.nash_radii
                    .iter()
                    .map(|&r| nash_bound_check_grown(&env, q.nash_x, r, &q.nash, &opts).map_err(CliError::from))
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        let mut csv = String::from(
            "env,R,V_R,V_2R,t_upper,p_upper,bound_upper,t_lower,p_lower,bound_lower,upper_ok,lower_ok,mass_deficit,half_width,h\n",
        );
        for (i, row) in nash.iter().enumerate() {
            for g in row {
                let n = &g.report;
                let _ = writeln!(
                    csv,
                    "{i},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    num(n.r),
                    num(n.v_r),
                    num(n.v_2r),
                    num(n.t_upper),
                    num(n.p_upper),
                    num(n.bound_upper),
                    num(n.t_lower),
                    num(n.p_lower),
                    num(n.bound_lower),
                    n.upper_ok,
                    n.lower_ok,
                    num(n.mass_deficit),
                    num(g.half_width),
                    num(g.h)
                );
            }
        }
        run.write_text("nash.csv", &csv)?;
        let all: Vec<&GrownNash> = nash.iter().flatten().collect();
        let upper_fail = all.iter().filter(|g| !g.report.upper_ok).count();
        let lower_fail = all.iter().filter(|g| !g.report.lower_ok).count();
        let upper_slack = all.iter().map(|g| g.report.upper_slack).fold(f64::INFINITY, f64::min);
        let lower_slack = all.iter().map(|g| g.report.lower_slack).fold(f64::INFINITY, f64::min);
        run.check(
            "nash_upper",
            upper_fail == 0,
            format!("{upper_fail} of {} fail; min slack {upper_slack:.3}", all.len()),
        );
        run.check(
            "nash_lower",
            lower_fail == 0,
            format!("{lower_fail} of {} fail; min slack {lower_slack:.3}", all.len()),
        );
        let deficit = all.iter().map(|g| g.report.mass_deficit).fold(0.0, f64::max);
        if deficit > q.nash.deficit_cap {
            run.warn(format!("Nash mass deficit {deficit:.3e} above cap after growing to the maximum domain"));
        }
    }

    if q.eqxy_envs > 0 {
        run.progress(&format!("X/Y identity on {} environments", q.eqxy_envs));
        let rows: Vec<Vec<[f64; 4]>> = (0..q.eqxy_envs)
            .into_par_iter()
            .map(|i| -> Result<_, CliError> {
                let env = cfg.environment(i as u64)?;
                let table = ScaleTable::build(&env)?;
                let gx = KernelGrid::x_grid(&env, q.eqxy_h)?;
                let sx = gx.heat_kernel(q.eqxy_t, gx.index_of(q.eqxy_x), &opts)?;
                let (_, sy) = heat_kernel_y(&table, q.eqxy_t, q.eqxy_x, q.eqxy_h, q.eqxy_max_nodes, &opts)?;
                q.eqxy_points
                    .iter()
                    .map(|&y| {
                        let j = gx.index_of(y);
                        let node = sx.nodes[j];
                        let (px, py) = (sx.p_ref[j], sy.interpolate(table.s(node)?));
                        Ok([node, px, py, (px - py).abs() / px])
                    })
                    .collect()
            })
            .collect::<Result<_, _>>()?;
        let mut csv = String::from("env,y,pX,pY,rel\n");
        let mut worst: f64 = 0.0;
        for (i, row) in rows.iter().enumerate() {
            for [y, px, py, rel] in row {
                let _ = writeln!(csv, "{i},{},{},{},{}", num(*y), num(*px), num(*py), num(*rel));
                worst = worst.max(*rel);
            }
        }
        run.write_text("eqxy.csv", &csv)?;
        run.check(
            "eqxy",
            worst <= q.eqxy_tolerance,
            format!("max |pX − pY|/pX = {:.4}% at t = {} (limit {}%)", 100.0 * worst, q.eqxy_t, 100.0 * q.eqxy_tolerance),
        );
    }

    if q.shape_envs > 0 {
        run.progress(&format!("Gaussian shape on {} environments", q.shape_envs));
        let rows: Vec<ShapeRow> = (0..q.shape_envs)
            .into_par_iter()
            .map(|i| -> Result<_, CliError> {
                let env = cfg.environment(i as u64)?;
                let grid = KernelGrid::x_grid(&env, q.shape_h)?;
                let (samples, _) = off_diagonal_ratios(&grid, 0.0, &q.shape_t, q.shape_radius_factor, &opts)?;
                let fit = gaussian_shape_fit(&samples);
                let report = quenched_bound_report(&env, &grid, &q.shape_t, &q.envelope_x, q.shape_radius_factor, &opts)?;
                Ok(ShapeRow { env: i, fit, report })
            })
            .collect::<Result<_, _>>()?;
        let mut csv = String::from("env,slope,intercept,r_squared,n,c_hi,c_lo,c_hi_rate,c_lo_rate,envelope\n");
        for r in &rows {
            let _ = writeln!(
                csv,
                "{},{},{},{},{},{},{},{},{},{}",
                r.env,
                num(r.fit.slope),
                num(r.fit.intercept),
                num(r.fit.r_squared),
                r.fit.n,
                num(r.report.c_hi),
                num(r.report.c_lo),
                num(r.report.c_hi_rate),
                num(r.report.c_lo_rate),
                num(r.report.envelope)
            );
        }
        run.write_text("shape.csv", &csv)?;
        run.write_json("shape.json", &rows)?;
        let [lo, hi] = q.shape_slope;
        let min_r2 = rows.iter().map(|r| r.fit.r_squared).fold(f64::INFINITY, f64::min);
        let (smin, smax) = rows
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), r| (a.min(r.fit.slope), b.max(r.fit.slope)));
        run.check(
            "shape_r_squared",
            rows.iter().all(|r| r.fit.r_squared >= q.shape_min_r2),
            format!("min R² = {min_r2:.4} (need ≥ {})", q.shape_min_r2),
        );
        run.check(
            "shape_slope",
            rows.iter().all(|r| (lo..=hi).contains(&r.fit.slope)),
            format!("slopes in [{smin:.4}, {smax:.4}] (need within [{lo}, {hi}])"),
        );
    }
    Ok(())
}

fn verify_annealed(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    let a = &cfg.annealed;
    let t = a.times();
    run.progress(&format!("annealed diagonal: {} environments, t ∈ [{}, {}]", a.n_envs, a.t_min, a.t_max));
    let params = a.params(cfg.solver, cfg.events);
    let rep = annealed_diag(&t, a.n_envs, &params, cfg.seed)?;
    rep.write_json(run.artifact("annealed.json"))?;
    rep.write_csv(run.artifact("annealed.csv"))?;
    rep.write_slots_csv(run.artifact("annealed_slots.csv"))?;
    run.check(
        "annealed_decreasing",
        rep.decreasing,
        format!("Ē from {:.6e} to {:.6e}", rep.points[0].mean, rep.points[rep.points.len() - 1].mean),
    );
    run.check(
        "annealed_log2_band",
        rep.scaled_spread <= a.max_scaled_spread,
        format!("max/min of Ē·log²t = {:.3} (limit {})", rep.scaled_spread, a.max_scaled_spread),
    );
    run.check(
        "annealed_loglog_slope",
        rep.slope_log.slope > a.min_loglog_slope,
        format!(
            "slope of log Ē on log t = {:.4} [{:.4}, {:.4}] (must exceed {})",
            rep.slope_log.slope, rep.slope_log.ci_lo, rep.slope_log.ci_hi, a.min_loglog_slope
        ),
    );
    if a.classify {
        let classified: Vec<_> = rep.points.iter().filter_map(|p| p.events.as_ref()).collect();
        run.check(
            "lambda_cover",
            classified.iter().all(|e| e.lambda_cover),
            format!("Λ events cover every environment at {} classified time(s)", classified.len()),
        );
    }
    if rep.over_cap > 0 {
        run.warn(format!("{} slot(s) kept a mass deficit above the cap", rep.over_cap));
    }
    if a.growth_envs > 0 {
        run.progress(&format!("Υ growth statistics on {} environments", a.growth_envs));
        let g = quenched_growth_stats(a.growth_envs, &a.growth_radii, cfg.seed)?;
        g.write_json(run.artifact("growth.json"))?;
        g.write_csv(run.artifact("growth.csv"))?;
    }
    Ok(())
}

fn oracles(run: &mut Run) -> Result<(), CliError> {
    let cfg = run.cfg;
    run.progress(&format!("closed-form laws on {} environments", cfg.oracles.n_envs));
    let rep = oracle_validation_with(&cfg.oracles, cfg.seed)?;
    rep.write_json(run.artifact("oracles.json"))?;
    for ks in [&rep.hitting_ks, &rep.arcsine_ks] {
        run.check(&ks.name, ks.pass, format!("KS D = {:.4}, p = {:.4} (level {})", ks.statistic, ks.p_value, ks.level));
    }
    for f in [&rep.hitting_unit, &rep.gamma, &rep.two_sided, &rep.running_max, &rep.arcsine_half] {
        run.check(
            &f.name,
            f.pass,
            format!("frequency {:.5} vs {:.5} ({:+.2} SE)", f.frequency.p, f.expected, f.z),
        );
    }
    for l in &rep.laplace {
        run.check(
            &format!("laplace[λ={}]", l.lambda),
            l.pass,
            format!("mean {:.6} vs Q(λ) = {:.6} ({:+.2} SE)", l.mean, l.expected, l.z),
        );
    }
    Ok(())
}
