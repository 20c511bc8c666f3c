//! Heat kernels of `X` and of the time-changed process `Y` by a conservative
//! finite-difference semigroup.
//!
//! A grid carries node masses `m_i` (the reference measure) and edge
//! conductances `c_{i+1/2}`; the generator is
//! `(Af)_i = [c_{i+1/2}(f_{i+1} − f_i) − c_{i−1/2}(f_i − f_{i−1})] / (2 m_i)`
//! with absorbing end nodes. `m_i A_ij` is symmetric by construction. Time
//! stepping is TR-BDF2 (a Crank–Nicolson stage followed by BDF2), which is
//! second order and L-stable; each stage solves `(M + κK) v = M f` with
//! `K = −MA`.
//!
//! Every kernel computed here is the Dirichlet-truncated minorant of the
//! whole-line kernel; the lost mass is reported as `mass_deficit`.

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EnvironmentPath;
use crate::error::{require_positive, BroxError, Result};
use crate::scale::{ScaleTable, VolumeVariant};
use crate::stats::{linear_fit, LinearFit, Neumaier};
use crate::tridiag::solve_row_sum;

const TRBDF2_GAMMA: f64 = 2.0 - std::f64::consts::SQRT_2;
const TRBDF2_A: f64 = 1.0 / (TRBDF2_GAMMA * (2.0 - TRBDF2_GAMMA));
const TRBDF2_B: f64 = (1.0 - TRBDF2_GAMMA) * (1.0 - TRBDF2_GAMMA) / (TRBDF2_GAMMA * (2.0 - TRBDF2_GAMMA));
const TRBDF2_C: f64 = (1.0 - TRBDF2_GAMMA) / (2.0 - TRBDF2_GAMMA);

/// Entries more negative than this after a step are clipped and counted.
pub const NEGATIVE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coordinate {
    /// Natural coordinate `x`, masses `e^{−W}`.
    X,
    /// Scale coordinate `u = S(x)`, masses `e^{−2W(S^{-1}(u))}`.
    Y,
}

/// Discrete divergence-form generator on a one-dimensional grid.
#[derive(Debug, Clone)]
pub struct KernelGrid {
    coordinate: Coordinate,
    nodes: Vec<f64>,
    /// Potential at each node, in the natural coordinate.
    w: Vec<f64>,
    masses: Vec<f64>,
    conductances: Vec<f64>,
    /// Nominal spacing (uniform part of the grid).
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub growth: f64,
    /// Steps are capped at this fraction of the next checkpoint time.
    pub cap_fraction: f64,
    /// Number of initial steps taken at `dt0` before growth starts.
    pub initial_steps: usize,
    pub deficit_cap: f64,
    /// Promote a deficit above the cap to an error.
    pub strict: bool,
    /// Restart the step schedule at every checkpoint, so that equal
    /// intervals are stepped identically.
    #[serde(default)]
    pub restart: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { growth: 1.05, cap_fraction: 1.0 / 50.0, initial_steps: 2, deficit_cap: 1e-6, strict: false, restart: false }
    }
}

/// One column `p^X(t, x_source, ·)` of the kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSolution {
    pub t: f64,
    pub coordinate: Coordinate,
    pub source_index: usize,
    pub source: f64,
    pub nodes: Vec<f64>,
    /// Kernel with respect to the grid's reference measure.
    pub p_ref: Vec<f64>,
    /// Lebesgue density in the natural coordinate, `p_ref · e^{−W(y)}`.
    /// Only meaningful for the `X` grid.
    pub p_leb: Vec<f64>,
    pub mass_deficit: f64,
    /// Most negative entry seen over the whole evolution.
    pub min_value: f64,
    pub clipped: usize,
    pub steps: usize,
}

impl KernelSolution {
    /// Linear interpolation of `p_ref` at a grid coordinate.
    pub fn interpolate(&self, at: f64) -> f64 {
        let xs = &self.nodes;
        if at <= xs[0] || at >= xs[xs.len() - 1] {
            return 0.0;
        }
        let i = xs.partition_point(|&v| v <= at).clamp(1, xs.len() - 1);
        let s = (at - xs[i - 1]) / (xs[i] - xs[i - 1]);
        self.p_ref[i - 1] * (1.0 - s) + self.p_ref[i] * s
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        write_kernel_csv(path, std::slice::from_ref(self))
    }
}

/// Writes `t,x,y,pX,pLeb` rows for every solution.
pub fn write_kernel_csv<P: AsRef<Path>>(path: P, sols: &[KernelSolution]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "t,x,y,pX,pLeb")?;
    for s in sols {
        for (j, &y) in s.nodes.iter().enumerate() {
            writeln!(out, "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}", s.t, s.source, y, s.p_ref[j], s.p_leb[j])?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Builds the generator of `X` on the uniform grid of spacing `h` over the
/// environment's domain. `W` is read at nodes and half-nodes.
pub fn build_generator(env: &EnvironmentPath, h: f64) -> Result<KernelGrid> {
    KernelGrid::x_grid(env, h)
}

impl KernelGrid {
    pub fn x_grid(env: &EnvironmentPath, h: f64) -> Result<Self> {
        require_positive("h", h)?;
        let l = env.half_width();
        let n = (2.0 * l / h).round();
        if ((n * h - 2.0 * l) / l).abs() > 1e-9 || n < 2.0 {
            return Err(BroxError::Parameter(format!("h = {h} does not divide 2L = {}", 2.0 * l)));
        }
        let n = n as usize;
        let fine = env.sample_grid(-l, 0.5 * h, 2 * n)?;
        let nodes: Vec<f64> = (0..=n).map(|i| -l + h * i as f64).collect();
        let w: Vec<f64> = (0..=n).map(|i| fine[2 * i]).collect();
        let masses: Vec<f64> = w.iter().map(|&v| h * (-v).exp()).collect();
        let conductances: Vec<f64> = (0..n).map(|i| (-fine[2 * i + 1]).exp() / h).collect();
        Self::finish(Coordinate::X, nodes, w, masses, conductances, h)
    }

    /// Generator of `Y` on a uniform `u`-grid through `S(x_source)` spanning
    /// `[S(−L), S(L)]` (end cells shortened to hit the ends exactly). The
    /// spacing is chosen so that the induced `x`-spacing is at most `dx`,
    /// unless that would exceed `max_nodes`.
    pub fn y_grid(table: &ScaleTable, x_source: f64, dx: f64, max_nodes: usize) -> Result<Self> {
        require_positive("dx", dx)?;
        let (a, b) = table.s_range();
        let u0 = table.s(x_source)?;
        let wmin = table.env().values().iter().copied().fold(f64::INFINITY, f64::min);
        let mut hu = dx * wmin.exp();
        if (b - a) / hu > max_nodes as f64 {
            hu = (b - a) / max_nodes as f64;
        }
        let left = ((u0 - a) / hu * (1.0 - 1e-12)).floor() as i64;
        let right = ((b - u0) / hu * (1.0 - 1e-12)).floor() as i64;
        let mut nodes = Vec::with_capacity((left + right + 3) as usize);
        nodes.push(a);
        for i in -left..=right {
            nodes.push(u0 + hu * i as f64);
        }
        nodes.push(b);
        nodes.dedup_by(|p, q| (*p - *q).abs() <= 1e-14 * hu);
        let mut hint = 0usize;
        let mut w = Vec::with_capacity(nodes.len());
        for &u in &nodes {
            let (_, wv) = table
                .inverse_with_hint(u.clamp(a, b), &mut hint)
                .ok_or(BroxError::Range { requested: u, lo: a, hi: b })?;
            w.push(wv);
        }
        let n = nodes.len() - 1;
        let gaps: Vec<f64> = nodes.windows(2).map(|p| p[1] - p[0]).collect();
        let masses: Vec<f64> = (0..=n)
            .map(|i| {
                let l = if i > 0 { gaps[i - 1] } else { 0.0 };
                let r = if i < n { gaps[i] } else { 0.0 };
                0.5 * (l + r) * (-2.0 * w[i]).exp()
            })
            .collect();
        let conductances: Vec<f64> = gaps.iter().map(|&g| 1.0 / g).collect();
        Self::finish(Coordinate::Y, nodes, w, masses, conductances, hu)
    }

    fn finish(
        coordinate: Coordinate,
        nodes: Vec<f64>,
        w: Vec<f64>,
        masses: Vec<f64>,
        conductances: Vec<f64>,
        h: f64,
    ) -> Result<Self> {
        if masses.iter().chain(&conductances).any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(BroxError::Numerical(
                "non-finite or non-positive grid weight; potential range too large".into(),
            ));
        }
        Ok(Self { coordinate, nodes, w, masses, conductances, h })
    }

    pub fn coordinate(&self) -> Coordinate {
        self.coordinate
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn conductances(&self) -> &[f64] {
        &self.conductances
    }

    pub fn potential(&self) -> &[f64] {
        &self.w
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Index of the node nearest to `x`.
    pub fn index_of(&self, x: f64) -> usize {
        let i = self.nodes.partition_point(|&v| v < x).min(self.nodes.len() - 1);
        if i > 0 && (x - self.nodes[i - 1]).abs() <= (self.nodes[i] - x).abs() {
            i - 1
        } else {
            i
        }
    }

    /// Generator row `i` as `(A_{i,i−1}, A_{ii}, A_{i,i+1})`; zero on the
    /// absorbing end rows.
    pub fn generator_row(&self, i: usize) -> (f64, f64, f64) {
        let n = self.nodes.len() - 1;
        if i == 0 || i == n {
            return (0.0, 0.0, 0.0);
        }
        let (cl, cr) = (self.conductances[i - 1], self.conductances[i]);
        let m2 = 2.0 * self.masses[i];
        (cl / m2, -(cl + cr) / m2, cr / m2)
    }

    fn dt0(&self) -> f64 {
        let n = self.nodes.len() - 1;
        (1..n)
            .map(|i| self.masses[i] / (self.conductances[i - 1] + self.conductances[i]))
            .fold(f64::INFINITY, f64::min)
            * 0.5
    }

    /// Evolves `δ_source / m_source` and records the column at each time in
    /// `t_list` (strictly increasing).
    pub fn evolve(&self, source_index: usize, t_list: &[f64], opts: &SolverOptions) -> Result<Vec<KernelSolution>> {
        let n = self.nodes.len() - 1;
        if source_index == 0 || source_index >= n {
            return Err(BroxError::Parameter("source must be an interior node".into()));
        }
        if t_list.is_empty() || t_list.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return Err(BroxError::Parameter("times must be positive and finite".into()));
        }
        if t_list.windows(2).any(|p| p[1] <= p[0]) {
            return Err(BroxError::Parameter("times must be strictly increasing".into()));
        }
        let m = n - 1;
        let mass = &self.masses[1..n];
        let mut u = vec![0.0; m];
        u[source_index - 1] = 1.0 / self.masses[source_index];
        let mut coupling = vec![0.0; m + 1];
        let mut rhs = vec![0.0; m];
        let mut stage = vec![0.0; m];
        let mut pivots = vec![0.0; m];
        let mut out = Vec::with_capacity(t_list.len());
        let (mut t, mut dt, mut steps, mut total) = (0.0f64, self.dt0(), 0usize, 0usize);
        let mut min_value = 0.0f64;
        let mut clipped = 0usize;
        for &target in t_list {
            let span = if opts.restart { target - t } else { target };
            if opts.restart {
                dt = self.dt0();
                steps = 0;
            }
            while t < target {
                let mut step = dt.min(opts.cap_fraction * span);
                if t + step >= target * (1.0 - 1e-12) {
                    step = target - t;
                }
                // TR-BDF2: a Crank–Nicolson stage to t + γ dt, written as
                // u_γ = 2v − u with (M + A γdt/2) v = M u, then BDF2 to t + dt.
                // Plain Crank–Nicolson leaves modes with λ dt ≫ 1 undamped
                // under geometric step growth, which freezes slow relaxation.
                let mut solve = |kappa: f64, rhs: &mut [f64]| {
                    for (g, c) in coupling.iter_mut().zip(&self.conductances) {
                        *g = 0.5 * kappa * c;
                    }
                    solve_row_sum(mass, &coupling, rhs, &mut pivots);
                };
                for i in 0..m {
                    stage[i] = mass[i] * u[i];
                }
                solve(0.5 * TRBDF2_GAMMA * step, &mut stage);
                for (s, v) in stage.iter_mut().zip(&u) {
                    *s = 2.0 * *s - v;
                }
                for i in 0..m {
                    rhs[i] = mass[i] * (TRBDF2_A * stage[i] - TRBDF2_B * u[i]);
                }
                solve(TRBDF2_C * step, &mut rhs);
                std::mem::swap(&mut u, &mut rhs);
                for v in u.iter_mut() {
                    if *v < 0.0 {
                        min_value = min_value.min(*v);
                        if *v < -NEGATIVE_TOLERANCE {
                            *v = 0.0;
                            clipped += 1;
                        }
                    }
                }
                t = if step == target - t { target } else { t + step };
                steps += 1;
                total += 1;
                if steps >= opts.initial_steps {
                    dt *= opts.growth;
                }
            }
            let mut acc = Neumaier::new();
            for i in 0..m {
                acc.add(mass[i] * u[i]);
            }
            let deficit = 1.0 - acc.value();
            if opts.strict && deficit > opts.deficit_cap {
                return Err(BroxError::Truncation { deficit, cap: opts.deficit_cap, t: target });
            }
            let mut p_ref = Vec::with_capacity(n + 1);
            p_ref.push(0.0);
            p_ref.extend_from_slice(&u);
            p_ref.push(0.0);
            let p_leb = p_ref.iter().zip(&self.w).map(|(p, w)| p * (-w).exp()).collect();
            out.push(KernelSolution {
                t: target,
                coordinate: self.coordinate,
                source_index,
                source: self.nodes[source_index],
                nodes: self.nodes.clone(),
                p_ref,
                p_leb,
                mass_deficit: deficit,
                min_value,
                clipped,
                steps: total,
            });
        }
        Ok(out)
    }

    /// Kernel column at a single time.
    pub fn heat_kernel(&self, t: f64, source_index: usize, opts: &SolverOptions) -> Result<KernelSolution> {
        Ok(self.evolve(source_index, &[t], opts)?.pop().expect("one checkpoint"))
    }
}

/// Heat kernel of `Y` started at the node nearest `S(x_source)`.
pub fn heat_kernel_y(
    table: &ScaleTable,
    t: f64,
    x_source: f64,
    dx: f64,
    max_nodes: usize,
    opts: &SolverOptions,
) -> Result<(KernelGrid, KernelSolution)> {
    let grid = KernelGrid::y_grid(table, x_source, dx, max_nodes)?;
    let src = grid.index_of(table.s(x_source)?);
    let sol = grid.heat_kernel(t, src, opts)?;
    Ok((grid, sol))
}

/// On-diagonal values along `t_list` from one evolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagSeries {
    pub x: f64,
    pub t: Vec<f64>,
    /// `p^X(t, x, x)`.
    pub p_ref: Vec<f64>,
    /// `p(t, x, x)`.
    pub p_leb: Vec<f64>,
    pub mass_deficit: Vec<f64>,
}

pub fn diag_series(grid: &KernelGrid, x: f64, t_list: &[f64], opts: &SolverOptions) -> Result<DiagSeries> {
    let i = grid.index_of(x);
    let sols = grid.evolve(i, t_list, opts)?;
    Ok(DiagSeries {
        x: grid.nodes[i],
        t: t_list.to_vec(),
        p_ref: sols.iter().map(|s| s.p_ref[i]).collect(),
        p_leb: sols.iter().map(|s| s.p_leb[i]).collect(),
        mass_deficit: sols.iter().map(|s| s.mass_deficit).collect(),
    })
}

/// Both on-diagonal Nash-type inequalities at one `(x, R)`, with
/// `C1 = 1` and `C2 = 1/4`.
///
/// These constants come from the Green function of Brownian motion killed
/// outside `(a, b)`, `G(y, z) = 2 (min − a)(b − max)/(b − a)`: on the ball of
/// radius `r` it is at most `r`, and on the half ball around the centre it is
/// at least `r/4`. The upper check is `p^Y(4RV(R)) ≤ 2/V(R)` and the lower
/// check is `p^Y(RV(R)/2) ≥ V(R)²/(64 V(2R)³)`, with `p^Y(t, S(x), S(x))`
/// read off the `X` solver as `p^X(t, x, x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NashReport {
    pub x: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub v_r: f64,
    pub v_2r: f64,
    pub t_upper: f64,
    pub p_upper: f64,
    pub bound_upper: f64,
    pub t_lower: f64,
    pub p_lower: f64,
    pub bound_lower: f64,
    /// `bound_upper / p_upper`; at least 1 when the upper bound holds.
    pub upper_slack: f64,
    /// `p_lower / bound_lower`; at least 1 when the lower bound holds.
    pub lower_slack: f64,
    pub upper_ok: bool,
    pub lower_ok: bool,
    pub mass_deficit: f64,
}

pub const NASH_C1: f64 = 1.0;
pub const NASH_C2: f64 = 0.25;

pub fn nash_bound_check(
    table: &ScaleTable,
    grid: &KernelGrid,
    x: f64,
    r: f64,
    opts: &SolverOptions,
) -> Result<NashReport> {
    if grid.coordinate != Coordinate::X {
        return Err(BroxError::Parameter("Nash check runs on the X grid".into()));
    }
    let v_r = table.volume_only(x, r, VolumeVariant::TwoSided)?;
    let v_2r = table.volume_only(x, 2.0 * r, VolumeVariant::TwoSided)?;
    let t_upper = 4.0 * r * v_r;
    let t_lower = 2.0 * NASH_C2 * r * v_r;
    let series = diag_series(grid, x, &[t_lower, t_upper], opts)?;
    let (p_lower, p_upper) = (series.p_ref[0], series.p_ref[1]);
    let bound_upper = 2.0 / v_r;
    let bound_lower = NASH_C2 * NASH_C2 * v_r * v_r / (4.0 * NASH_C1 * NASH_C1 * v_2r.powi(3));
    Ok(NashReport {
        x: series.x,
        r,
        v_r,
        v_2r,
        t_upper,
        p_upper,
        bound_upper,
        t_lower,
        p_lower,
        bound_lower,
        upper_slack: bound_upper / p_upper,
        lower_slack: p_lower / bound_lower,
        upper_ok: p_upper <= bound_upper,
        lower_ok: p_lower >= bound_lower,
        mass_deficit: series.mass_deficit[1],
    })
}

/// Domain and grid settings for [`nash_bound_check_grown`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NashDomain {
    /// Finest grid spacing.
    pub h: f64,
    /// Node budget; the spacing is coarsened to `2L/max_nodes` beyond it.
    pub max_nodes: usize,
    pub max_half_width: f64,
    /// Killed mass at `t_upper` above which the domain is doubled.
    pub deficit_cap: f64,
}

impl Default for NashDomain {
    fn default() -> Self {
        Self { h: 1.0 / 32.0, max_nodes: 65_536, max_half_width: 1_048_576.0, deficit_cap: 1e-3 }
    }
}

/// A Nash check together with the domain it ran on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrownNash {
    pub report: NashReport,
    pub half_width: f64,
    pub h: f64,
    pub enlargements: usize,
}

/// [`nash_bound_check`] on `env` grown along its seed lineage until `S(x) ± 2R`
/// is tabulated and the killed mass at `t_upper` is below the cap. Large
/// volumes push `t_upper` to times at which the diffusion has travelled
/// `O(log² t)`, far beyond the base domain.
pub fn nash_bound_check_grown(
    env: &EnvironmentPath,
    x: f64,
    r: f64,
    domain: &NashDomain,
    opts: &SolverOptions,
) -> Result<GrownNash> {
    let (mut table, mut enlargements) = ScaleTable::covering(env, x, 2.0 * r, domain.max_half_width)?;
    loop {
        let l = table.env().half_width();
        let h = domain.h.max(2.0 * l / domain.max_nodes as f64);
        let grid = KernelGrid::x_grid(table.env(), h)?;
        let report = nash_bound_check(&table, &grid, x, r, opts)?;
        if report.mass_deficit <= domain.deficit_cap || 2.0 * l > domain.max_half_width {
            return Ok(GrownNash { report, half_width: l, h, enlargements });
        }
        table = ScaleTable::build(&table.env().enlarged(2.0 * l)?)?;
        enlargements += 1;
    }
}

/// Fitted constants of the small-time Gaussian sandwich
/// `C_lo exp(−c_lo d²/t) ≤ r_off ≤ C_hi exp(−c_hi d²/t)` and of the
/// on-diagonal envelope `|log(r_on √(2π))| ≤ C t^{α/2} Υ(1 + |x|)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuenchedReport {
    pub fit: LinearFit,
    pub c_hi_rate: f64,
    pub c_lo_rate: f64,
    pub c_hi: f64,
    pub c_lo: f64,
    pub envelope: f64,
    pub points: usize,
    pub max_deficit: f64,
    pub resolution: f64,
    pub truncated: bool,
}

/// One off-diagonal sample `r_off(t, x, y) = p^X(t,x,y) √t e^{−W(y)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OffDiagonal {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub r_off: f64,
}

/// Normalised off-diagonal ratios from `x` for `|y − x| ≤ radius_factor·√t`.
pub fn off_diagonal_ratios(
    grid: &KernelGrid,
    x: f64,
    t_list: &[f64],
    radius_factor: f64,
    opts: &SolverOptions,
) -> Result<(Vec<OffDiagonal>, f64)> {
    let i = grid.index_of(x);
    let sols = grid.evolve(i, t_list, opts)?;
    let mut out = Vec::new();
    let mut deficit: f64 = 0.0;
    let xs = grid.nodes[i];
    for s in &sols {
        deficit = deficit.max(s.mass_deficit);
        let reach = radius_factor * s.t.sqrt();
        for (j, &y) in grid.nodes.iter().enumerate() {
            if (y - xs).abs() <= reach && s.p_ref[j] > 0.0 {
                out.push(OffDiagonal { t: s.t, x: xs, y, r_off: s.p_ref[j] * s.t.sqrt() * (-grid.w[j]).exp() });
            }
        }
    }
    Ok((out, deficit))
}

/// Regression of `log r_off` on `|y − x|²/t`.
pub fn gaussian_shape_fit(samples: &[OffDiagonal]) -> LinearFit {
    let xs: Vec<f64> = samples.iter().map(|s| (s.y - s.x).powi(2) / s.t).collect();
    let ys: Vec<f64> = samples.iter().map(|s| s.r_off.ln()).collect();
    linear_fit(&xs, &ys)
}

pub fn quenched_bound_report(
    env: &EnvironmentPath,
    grid: &KernelGrid,
    t_grid: &[f64],
    x_grid: &[f64],
    radius_factor: f64,
    opts: &SolverOptions,
) -> Result<QuenchedReport> {
    if t_grid.iter().any(|&t| t > 1.0) {
        return Err(BroxError::Parameter("quenched report needs t ≤ 1".into()));
    }
    let mut samples = Vec::new();
    let mut max_deficit: f64 = 0.0;
    let mut envelope: f64 = 0.0;
    for &x in x_grid {
        let (s, d) = off_diagonal_ratios(grid, x, t_grid, radius_factor, opts)?;
        max_deficit = max_deficit.max(d);
        let ups = env.upsilon(1.0 + x.abs(), 1.0)?;
        for o in s.iter().filter(|o| o.y == o.x) {
            let dev = (o.r_off * (2.0 * std::f64::consts::PI).sqrt()).ln().abs();
            if ups > 0.0 {
                envelope = envelope.max(dev / (o.t.powf(0.5 * env.alpha()) * ups));
            }
        }
        samples.extend(s);
    }
    if samples.len() < 3 {
        return Err(BroxError::Parameter("too few kernel samples for a fit".into()));
    }
    let fit = gaussian_shape_fit(&samples);
    let rate = fit.slope.abs();
    let (c_hi_rate, c_lo_rate) = (0.5 * rate, 2.0 * rate);
    let mut c_hi: f64 = 0.0;
    let mut c_lo = f64::INFINITY;
    for s in &samples {
        let q = (s.y - s.x).powi(2) / s.t;
        c_hi = c_hi.max(s.r_off * (c_hi_rate * q).exp());
        c_lo = c_lo.min(s.r_off * (c_lo_rate * q).exp());
    }
    Ok(QuenchedReport {
        fit,
        c_hi_rate,
        c_lo_rate,
        c_hi,
        c_lo,
        envelope,
        points: samples.len(),
        max_deficit,
        resolution: grid.h,
        truncated: true,
    })
}
