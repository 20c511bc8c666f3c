//! Path simulation through `X(t) = S^{-1}(B(T^{-1}(t)))`, exit-time sampling
//! and the Green-function exit-time oracle.
//!
//! The driver `B` is a Gaussian random walk on a uniform grid of step `ds`
//! in its own clock `s`. The diffusion clock `T(s)` is accumulated by the
//! trapezoid rule on the rate `exp(−2 W(S^{-1}(B(s))))`. Exits from an
//! `x`-ball are detected on the fixed `Y`-corridor `(S(z − R), S(z + R))`.

use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{require_positive, BroxError, Result};
use crate::rng;
use crate::scale::ScaleTable;
use crate::stats::{mean_se, Neumaier};

/// Start of the bridge-crossing check, in units of `√ds`.
const BRIDGE_WINDOW: f64 = 5.0;
/// Paths still inside after this many multiples of the expected number of
/// driver steps are reported as unresolved.
const STEP_BUDGET: f64 = 2000.0;

/// A simulated trajectory read out on a uniform diffusion-time grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroxPath {
    pub x0: f64,
    pub ds: f64,
    pub seed: u64,
    /// Diffusion times `t_k`.
    pub times: Vec<f64>,
    /// `X(t_k)`.
    pub positions: Vec<f64>,
    /// Driver times `T^{-1}(t_k)`.
    pub driver_times: Vec<f64>,
    /// Driver samples `B(j·ds)`.
    pub driver: Vec<f64>,
    /// Accumulated clock `T(j·ds)`.
    pub clock: Vec<f64>,
    /// `B` left `[S(−L), S(L)]` before `t_end`.
    pub truncated: bool,
}

impl BroxPath {
    /// `T(s)` by linear interpolation of the recorded clock.
    pub fn clock_at(&self, s: f64) -> f64 {
        let j = (s / self.ds).floor() as usize;
        if j + 1 >= self.clock.len() {
            return *self.clock.last().unwrap_or(&0.0);
        }
        let f = s / self.ds - j as f64;
        self.clock[j] + f * (self.clock[j + 1] - self.clock[j])
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,x")?;
        for (t, x) in self.times.iter().zip(&self.positions) {
            writeln!(out, "{t:.16e},{x:.16e}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Simulates one path from `x0` up to diffusion time `t_end`, read out at
/// `n_readout + 1` equally spaced times.
pub fn simulate_brox(table: &ScaleTable, x0: f64, t_end: f64, ds: f64, seed: u64, n_readout: usize) -> Result<BroxPath> {
    require_positive("ds", ds)?;
    require_positive("t_end", t_end)?;
    let l = table.env().half_width();
    if x0.abs() >= l {
        return Err(BroxError::Domain { position: x0, half_width: l });
    }
    let n_readout = n_readout.max(1);
    let times: Vec<f64> = (0..=n_readout).map(|k| t_end * k as f64 / n_readout as f64).collect();
    let mut rng = rng::substream(seed, 0);
    let sd = ds.sqrt();
    let mut hint = 0usize;
    let b0 = table.s(x0)?;
    let (_, w0) = table.inverse_with_hint(b0, &mut hint).expect("start inside range");
    let mut driver = vec![b0];
    let mut clock = vec![0.0];
    let mut positions = vec![x0];
    let mut driver_times = vec![0.0];
    let mut rate = (-2.0 * w0).exp();
    let mut k = 1;
    let mut truncated = false;
    let (mut b, mut t) = (b0, 0.0);
    while k < times.len() {
        let z: f64 = StandardNormal.sample(&mut rng);
        let nb = b + sd * z;
        let Some((_, nw)) = table.inverse_with_hint(nb, &mut hint) else {
            truncated = true;
            break;
        };
        let nrate = (-2.0 * nw).exp();
        let nt = t + 0.5 * ds * (rate + nrate);
        let j = driver.len() - 1;
        while k < times.len() && times[k] <= nt {
            let f = (times[k] - t) / (nt - t);
            let bs = b + f * (nb - b);
            positions.push(table.inverse(bs)?);
            driver_times.push((j as f64 + f) * ds);
            k += 1;
        }
        driver.push(nb);
        clock.push(nt);
        b = nb;
        t = nt;
        rate = nrate;
    }
    let done = positions.len();
    Ok(BroxPath {
        x0,
        ds,
        seed,
        times: times[..done].to_vec(),
        positions,
        driver_times,
        driver,
        clock,
        truncated,
    })
}

/// `X(t)` for one path without recording the trajectory; `None` if the
/// driver left the tabulated range first.
pub fn terminal_position(table: &ScaleTable, x0: f64, t: f64, ds: f64, seed: u64) -> Result<Option<f64>> {
    let mut rng = rng::substream(seed, 0);
    let sd = ds.sqrt();
    let mut hint = 0usize;
    let mut b = table.s(x0)?;
    let (_, w0) = table.inverse_with_hint(b, &mut hint).expect("start inside range");
    let mut rate = (-2.0 * w0).exp();
    let mut clock = 0.0;
    loop {
        let z: f64 = StandardNormal.sample(&mut rng);
        let nb = b + sd * z;
        let Some((_, nw)) = table.inverse_with_hint(nb, &mut hint) else {
            return Ok(None);
        };
        let nrate = (-2.0 * nw).exp();
        let nt = clock + 0.5 * ds * (rate + nrate);
        if nt >= t {
            let f = (t - clock) / (nt - clock);
            return Ok(Some(table.inverse(b + f * (nb - b))?));
        }
        b = nb;
        clock = nt;
        rate = nrate;
    }
}

/// Terminal positions of `n` independent paths (slot `i` uses the child
/// seed `(seed, i)`); order and values do not depend on the thread count.
pub fn terminal_sample(table: &ScaleTable, x0: f64, t: f64, ds: f64, n: usize, seed: u64) -> Result<Vec<Option<f64>>> {
    (0..n)
        .into_par_iter()
        .map(|i| terminal_position(table, x0, t, ds, rng::derive_seed(seed, rng::tag::PATH, i as u64)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalPoint {
    pub t: f64,
    pub p: f64,
}

/// Monte Carlo exit-time statistics for the ball `B(z, R)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitSample {
    pub z: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
    pub exact: Option<f64>,
    pub survival: Vec<SurvivalPoint>,
    pub ds: f64,
    /// Paths that did not exit within the step budget.
    pub unresolved: usize,
    #[serde(skip)]
    pub exit_times: Vec<f64>,
}

impl ExitSample {
    /// Empirical `P(τ ≤ t)`.
    pub fn exit_probability(&self, t: f64) -> f64 {
        let hits = self.exit_times.iter().filter(|&&v| v <= t).count();
        hits as f64 / self.n as f64
    }

    pub fn write_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExitOptions {
    /// Driver step; `None` selects `1e-4 · ((b − a)/2)²` in scale units.
    pub ds: Option<f64>,
    /// Brownian-bridge crossing check between grid points.
    pub bridge: bool,
    pub survival_points: usize,
}

impl Default for ExitOptions {
    fn default() -> Self {
        Self { ds: None, bridge: true, survival_points: 64 }
    }
}

struct Corridor {
    a: f64,
    b: f64,
    rate_a: f64,
    rate_b: f64,
}

fn one_exit(table: &ScaleTable, start: f64, c: &Corridor, ds: f64, bridge: bool, budget: u64, rng: &mut ChaCha8Rng) -> Option<f64> {
    let sd = ds.sqrt();
    let near = BRIDGE_WINDOW * sd;
    let mut hint = 0usize;
    let (_, w0) = table.inverse_with_hint(start, &mut hint)?;
    let mut rate = (-2.0 * w0).exp();
    let (mut b, mut clock) = (start, Neumaier::new());
    for _ in 0..budget {
        let z: f64 = StandardNormal.sample(rng);
        let nb = b + sd * z;
        if nb <= c.a || nb >= c.b {
            let (edge, er) = if nb <= c.a { (c.a, c.rate_a) } else { (c.b, c.rate_b) };
            let f = (edge - b) / (nb - b);
            clock.add(0.5 * f * ds * (rate + er));
            return Some(clock.value());
        }
        let (_, nw) = table.inverse_with_hint(nb, &mut hint)?;
        let nrate = (-2.0 * nw).exp();
        if bridge && (b - c.a).min(c.b - b).min(nb - c.a).min(c.b - nb) < near {
            let p = (-2.0 * (c.b - b) * (c.b - nb) / ds).exp() + (-2.0 * (b - c.a) * (nb - c.a) / ds).exp();
            if rng.random::<f64>() < p {
                clock.add(0.25 * ds * (rate + nrate));
                return Some(clock.value());
            }
        }
        clock.add(0.5 * ds * (rate + nrate));
        b = nb;
        rate = nrate;
    }
    None
}

/// Samples `n_paths` exit times of `X` from the ball `B(z, R)`.
pub fn exit_time_mc(table: &ScaleTable, z: f64, r: f64, n_paths: usize, seed: u64, opts: &ExitOptions) -> Result<ExitSample> {
    require_positive("R", r)?;
    if n_paths < 2 {
        return Err(BroxError::Parameter("need at least two paths".into()));
    }
    let l = table.env().half_width();
    if z - r <= -l || z + r >= l {
        return Err(BroxError::Domain { position: if z < 0.0 { z - r } else { z + r }, half_width: l });
    }
    let (a, b) = (table.s(z - r)?, table.s(z + r)?);
    let start = table.s(z)?;
    let c = Corridor {
        a,
        b,
        rate_a: (-2.0 * table.w(z - r)).exp(),
        rate_b: (-2.0 * table.w(z + r)).exp(),
    };
    let half = 0.5 * (b - a);
    let ds = match opts.ds {
        Some(v) => {
            require_positive("ds", v)?;
            v
        }
        None => 1e-4 * half * half,
    };
    let expected_steps = (start - a) * (b - start) / ds;
    let budget = (STEP_BUDGET * expected_steps.max(1.0)) as u64;
    let times: Vec<Option<f64>> = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng::substream(rng::derive_seed(seed, rng::tag::PATH, i as u64), 0);
            one_exit(table, start, &c, ds, opts.bridge, budget, &mut rng)
        })
        .collect();
    let unresolved = times.iter().filter(|v| v.is_none()).count();
    let exit_times: Vec<f64> = times.iter().map(|v| v.unwrap_or(f64::INFINITY)).collect();
    let finite: Vec<f64> = exit_times.iter().copied().filter(|v| v.is_finite()).collect();
    let (mean, se) = mean_se(&finite);
    let mut sorted = exit_times.clone();
    sorted.sort_by(|x, y| x.total_cmp(y));
    let t_max = finite.iter().copied().fold(0.0, f64::max);
    let k = opts.survival_points.max(2);
    let survival = (0..k)
        .map(|i| {
            let t = t_max * i as f64 / (k - 1) as f64;
            let below = sorted.partition_point(|&v| v <= t);
            SurvivalPoint { t, p: if i == 0 { 1.0 } else { 1.0 - below as f64 / n_paths as f64 } }
        })
        .collect();
    Ok(ExitSample { z, r, n: n_paths, mean, se, exact: None, survival, ds, unresolved, exit_times })
}

/// Green function of Brownian motion killed outside `(a, b)`.
pub fn green_interval(a: f64, b: f64, y: f64, z: f64) -> f64 {
    let (lo, hi) = if y < z { (y, z) } else { (z, y) };
    2.0 * (lo - a) * (b - hi) / (b - a)
}

/// `E_z[τ_{B(z,R)}] = ∫_{z−R}^{z+R} G(S(z), S(y)) e^{−W(y)} dy` by the
/// trapezoid rule on the environment nodes, each cell split `sub` times.
pub fn exit_time_exact_with(table: &ScaleTable, z: f64, r: f64, sub: usize) -> Result<f64> {
    require_positive("R", r)?;
    let l = table.env().half_width();
    if z - r < -l || z + r > l {
        return Err(BroxError::Domain { position: if z < 0.0 { z - r } else { z + r }, half_width: l });
    }
    let (a, b) = (table.s(z - r)?, table.s(z + r)?);
    let sz = table.s(z)?;
    let (xs, _) = table.env().window(z - r, z + r);
    let sub = sub.max(1);
    let f = |y: f64| green_interval(a, b, sz, table.s_unchecked(y)) * (-table.w(y)).exp();
    let mut acc = Neumaier::new();
    for p in xs.windows(2) {
        let h = (p[1] - p[0]) / sub as f64;
        let mut prev = f(p[0]);
        for k in 1..=sub {
            let y = if k == sub { p[1] } else { p[0] + h * k as f64 };
            let cur = f(y);
            acc.add(0.5 * h * (prev + cur));
            prev = cur;
        }
    }
    Ok(acc.value())
}

pub fn exit_time_exact(table: &ScaleTable, z: f64, r: f64) -> Result<f64> {
    exit_time_exact_with(table, z, r, 8)
}

/// Mean exit time against `C4 e^{−8ΞR^α} R² ≤ E τ ≤ C5 e^{4ΞR^α} R²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExitBoundCheck {
    pub z: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub mean: f64,
    pub holder: f64,
    pub lower: f64,
    pub upper: f64,
    pub holds: bool,
}

/// Both constants equal 1: that is the flat case, where `E τ = R²` exactly.
pub const EXIT_C4: f64 = 1.0;
pub const EXIT_C5: f64 = 1.0;

pub fn exit_bound_check(table: &ScaleTable, z: f64, r: f64) -> Result<ExitBoundCheck> {
    let mean = exit_time_exact(table, z, r)?;
    let env = table.env();
    let holder = env.holder_coefficient(z, r)?;
    let ra = r.powf(env.alpha());
    let lower = EXIT_C4 * (-8.0 * holder * ra).exp() * r * r;
    let upper = EXIT_C5 * (4.0 * holder * ra).exp() * r * r;
    Ok(ExitBoundCheck { z, r, mean, holder, lower, upper, holds: lower <= mean && mean <= upper })
}

/// One `(R, t)` point of a survival sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalSweepPoint {
    #[serde(rename = "R")]
    pub r: f64,
    pub t: f64,
    /// Monte Carlo `P(τ ≤ t)`.
    pub p_exit: f64,
    /// `Ξ(x, 4R)`.
    pub holder_4r: f64,
}

/// Minimal constants making the two exit-probability bound shapes hold
/// over a sweep:
/// `P(τ ≤ t) ≤ 1 − C6 e^{−16ΞR^α} + C7 e^{−8ΞR^α} t/R²` (with `C6` given)
/// and `P(τ ≤ t) ≤ exp(−C9 R²/t)` (the `Υ` correction taken with `C10 = 0`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalReport {
    pub x: f64,
    pub points: Vec<SurvivalSweepPoint>,
    pub c6: f64,
    pub c7: f64,
    pub c9: Option<f64>,
}

pub fn survival_bound_check(
    table: &ScaleTable,
    x: f64,
    sweep: &[(f64, f64)],
    n_paths: usize,
    seed: u64,
    c6: f64,
    opts: &ExitOptions,
) -> Result<SurvivalReport> {
    let env = table.env();
    let mut points = Vec::with_capacity(sweep.len());
    for (i, &(r, t)) in sweep.iter().enumerate() {
        require_positive("t", t)?;
        let s = exit_time_mc(table, x, r, n_paths, rng::derive_seed(seed, rng::tag::PATH, i as u64), opts)?;
        let holder_4r = env.holder_coefficient(x, 4.0 * r)?;
        points.push(SurvivalSweepPoint { r, t, p_exit: s.exit_probability(t), holder_4r });
    }
    Ok(fit_survival_constants(x, points, c6, env.alpha()))
}

pub fn fit_survival_constants(x: f64, points: Vec<SurvivalSweepPoint>, c6: f64, alpha: f64) -> SurvivalReport {
    let mut c7: f64 = 0.0;
    let mut c9: Option<f64> = None;
    for p in &points {
        let ra = p.r.powf(alpha);
        let need = p.p_exit - 1.0 + c6 * (-16.0 * p.holder_4r * ra).exp();
        c7 = c7.max(need * p.r * p.r / (p.t * (-8.0 * p.holder_4r * ra).exp()));
        if p.p_exit > 0.0 && p.r * p.r >= p.t {
            let v = -p.p_exit.ln() * p.t / (p.r * p.r);
            c9 = Some(c9.map_or(v, |c: f64| c.min(v)));
        }
    }
    SurvivalReport { x, points, c6, c7, c9 }
}

/// Ensemble value of `C9`: the median of the per-environment fits. The
/// minimum over environments is an extreme-value statistic and does not
/// stabilise at ensemble sizes of tens.
pub fn ensemble_c9(reports: &[SurvivalReport]) -> Option<f64> {
    let fits: Vec<f64> = reports.iter().filter_map(|r| r.c9).collect();
    if fits.is_empty() {
        return None;
    }
    Some(crate::stats::quantile(&fits, 0.5))
}
