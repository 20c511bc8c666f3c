//! Two-sided Brownian environments on a refinable lattice grid.
//!
//! Positions are quantised to a dyadic lattice of quantum `h0 / 2^20`, so a
//! base cell of width `h0` holds `2^20` lattice steps. The value of `W` at any
//! lattice point is a fixed function of the master seed: base nodes come from
//! two sequential normal streams (one per side), and every other lattice point
//! is reached by Lévy midpoint descent inside its base cell, with the normal
//! at each midpoint drawn from a substream keyed by the midpoint's lattice
//! index. Refinement therefore only materialises values that already exist in
//! distribution and never depends on insertion order.
//!
//! All functionals work on the piecewise-linear interpolant of the stored
//! nodes. Hitting times are the exception: they walk the base cells and bisect
//! towards a crossing using Brownian-bridge crossing probabilities.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{require_finite, require_positive, BroxError, Result};
use crate::rng;

pub const DEFAULT_ALPHA: f64 = 0.4;
/// Lattice steps per base cell, as a power of two.
pub const LATTICE_BITS: u32 = 20;
const BASE_STRIDE: i64 = 1 << LATTICE_BITS;
/// Hitting-time bisection stops at cells of width `h0 / 2^HIT_DEPTH`.
const HIT_DEPTH: u32 = 6;
/// Bridge crossing probability below which a cell is not bisected.
const HIT_EPS: f64 = 1e-7;

type InjectedFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Source {
    Brownian { base: Arc<Vec<f64>> },
    Injected { f: InjectedFn, name: String },
    /// Imported node values with no generator attached; off-node values are
    /// linear interpolations.
    Frozen,
}

/// A sampled potential `W` on `[-L, L]`.
#[derive(Clone)]
pub struct EnvironmentPath {
    keys: Vec<i64>,
    xs: Vec<f64>,
    values: Vec<f64>,
    master_seed: u64,
    alpha: f64,
    half_width: f64,
    base_spacing: f64,
    quantum: f64,
    n_base: i64,
    source: Source,
}

impl fmt::Debug for EnvironmentPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EnvironmentPath")
            .field("generator", &self.generator())
            .field("master_seed", &self.master_seed)
            .field("alpha", &self.alpha)
            .field("half_width", &self.half_width)
            .field("base_spacing", &self.base_spacing)
            .field("nodes", &self.keys.len())
            .finish()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> i64 {
        match self {
            Direction::Forward => 1,
            Direction::Backward => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Target {
    /// First time `W` reaches the level.
    Level(f64),
    /// First exit from the open interval `(lower, upper)`, `lower < 0 < upper`.
    Corridor { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

/// A hitting time measured as a distance from the origin. Unresolved hits
/// carry `position = +inf` and `side = None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub position: f64,
    pub side: Option<Side>,
}

impl Hit {
    pub fn resolved(&self) -> bool {
        self.position.is_finite()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvMetadata {
    pub master_seed: u64,
    pub alpha: f64,
    pub half_width: f64,
    pub lattice_quantum: f64,
    pub base_spacing: f64,
    pub generator: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathFunctionals {
    pub xi: f64,
    #[serde(rename = "Xi")]
    pub holder: f64,
    #[serde(rename = "Upsilon")]
    pub upsilon: f64,
    pub resolution: f64,
}

fn check_grid(half_width: f64, h0: f64) -> Result<i64> {
    require_positive("half_width", half_width)?;
    require_positive("h0", h0)?;
    if h0 > half_width {
        return Err(BroxError::Parameter(format!("h0 = {h0} exceeds L = {half_width}")));
    }
    let n = (half_width / h0).round();
    if ((n * h0 - half_width) / half_width).abs() > 1e-9 {
        return Err(BroxError::Parameter(format!(
            "L = {half_width} is not an integer multiple of h0 = {h0}"
        )));
    }
    if n > (1u64 << 40) as f64 {
        return Err(BroxError::Parameter("too many base cells".into()));
    }
    Ok(n as i64)
}

fn sample_base(seed: u64, n: i64, h0: f64) -> Vec<f64> {
    let n = n as usize;
    let sd = h0.sqrt();
    let mut base = vec![0.0; 2 * n + 1];
    let mut right = rng::substream(seed, rng::STREAM_RIGHT);
    let mut left = rng::substream(seed, rng::STREAM_LEFT);
    let mut w = 0.0;
    for i in 1..=n {
        let z: f64 = StandardNormal.sample(&mut right);
        w += sd * z;
        base[n + i] = w;
    }
    w = 0.0;
    for i in 1..=n {
        let z: f64 = StandardNormal.sample(&mut left);
        w += sd * z;
        base[n - i] = w;
    }
    base
}

/// Samples a Brownian environment with the default exponent.
pub fn sample_environment(master_seed: u64, half_width: f64, h0: f64) -> Result<EnvironmentPath> {
    EnvironmentPath::sample(master_seed, half_width, h0)
}

impl EnvironmentPath {
    pub fn sample(master_seed: u64, half_width: f64, h0: f64) -> Result<Self> {
        let n = check_grid(half_width, h0)?;
        let base = sample_base(master_seed, n, h0);
        let keys: Vec<i64> = (-n..=n).map(|j| j * BASE_STRIDE).collect();
        let quantum = h0 / BASE_STRIDE as f64;
        let xs = keys.iter().map(|&k| k as f64 * quantum).collect();
        Ok(Self {
            values: base.clone(),
            keys,
            xs,
            master_seed,
            alpha: DEFAULT_ALPHA,
            half_width: n as f64 * h0,
            base_spacing: h0,
            quantum,
            n_base: n,
            source: Source::Brownian { base: Arc::new(base) },
        })
    }

    /// Deterministic potential `f` on the base grid. `f(0)` must be zero.
    pub fn injected<F>(name: &str, half_width: f64, h0: f64, f: F) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let n = check_grid(half_width, h0)?;
        if f(0.0) != 0.0 {
            return Err(BroxError::Parameter("injected potential must vanish at 0".into()));
        }
        let quantum = h0 / BASE_STRIDE as f64;
        let keys: Vec<i64> = (-n..=n).map(|j| j * BASE_STRIDE).collect();
        let xs: Vec<f64> = keys.iter().map(|&k| k as f64 * quantum).collect();
        let values: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        for (&x, &w) in xs.iter().zip(&values) {
            if !w.is_finite() {
                return Err(BroxError::Parameter(format!("injected potential not finite at {x}")));
            }
        }
        Ok(Self {
            keys,
            xs,
            values,
            master_seed: 0,
            alpha: DEFAULT_ALPHA,
            half_width: n as f64 * h0,
            base_spacing: h0,
            quantum,
            n_base: n,
            source: Source::Injected { f: Arc::new(f), name: name.to_string() },
        })
    }

    /// `W ≡ 0`.
    pub fn flat(half_width: f64, h0: f64) -> Result<Self> {
        Self::injected("flat", half_width, h0, |_| 0.0)
    }

    /// `W(z) = slope · z`.
    pub fn linear(half_width: f64, h0: f64, slope: f64) -> Result<Self> {
        require_finite("slope", slope)?;
        Self::injected("linear", half_width, h0, move |z| slope * z)
    }

    pub fn with_alpha(mut self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 0.5) {
            return Err(BroxError::Parameter(format!("alpha must lie in (0, 1/2), got {alpha}")));
        }
        self.alpha = alpha;
        Ok(self)
    }

    /// Same seed lineage on a larger domain. Every node already present keeps
    /// its value bit-for-bit.
    pub fn enlarged(&self, half_width: f64) -> Result<Self> {
        if half_width < self.half_width {
            return Err(BroxError::Parameter("enlarged domain must contain the old one".into()));
        }
        let fresh = match &self.source {
            Source::Brownian { .. } => Self::sample(self.master_seed, half_width, self.base_spacing)?,
            Source::Injected { f, name } => {
                let f = f.clone();
                Self::injected(name, half_width, self.base_spacing, move |z| f(z))?
            }
            Source::Frozen => {
                return Err(BroxError::Parameter("frozen environments cannot be enlarged".into()))
            }
        };
        let mut out = fresh.with_alpha(self.alpha)?;
        out = out.refine_keys(self.keys.clone());
        Ok(out)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.xs
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn base_spacing(&self) -> f64 {
        self.base_spacing
    }

    pub fn lattice_quantum(&self) -> f64 {
        self.quantum
    }

    pub fn is_brownian(&self) -> bool {
        matches!(self.source, Source::Brownian { .. })
    }

    pub fn generator(&self) -> String {
        match &self.source {
            Source::Brownian { .. } => "brownian".into(),
            Source::Injected { name, .. } => format!("injected:{name}"),
            Source::Frozen => "frozen".into(),
        }
    }

    /// Largest gap between consecutive nodes.
    pub fn resolution(&self) -> f64 {
        self.xs.windows(2).map(|p| p[1] - p[0]).fold(0.0, f64::max)
    }

    pub fn metadata(&self) -> EnvMetadata {
        EnvMetadata {
            master_seed: self.master_seed,
            alpha: self.alpha,
            half_width: self.half_width,
            lattice_quantum: self.quantum,
            base_spacing: self.base_spacing,
            generator: self.generator(),
        }
    }

    fn key_of(&self, x: f64) -> i64 {
        (x / self.quantum).round() as i64
    }

    fn pos(&self, k: i64) -> f64 {
        k as f64 * self.quantum
    }

    fn check_inside(&self, x: f64) -> Result<()> {
        require_finite("position", x)?;
        let tol = 1e-12 * self.half_width.max(1.0);
        if x.abs() > self.half_width + tol {
            return Err(BroxError::Domain { position: x, half_width: self.half_width });
        }
        Ok(())
    }

    fn clamp_key(&self, k: i64) -> i64 {
        let m = self.n_base * BASE_STRIDE;
        k.clamp(-m, m)
    }

    fn base_value(&self, j: i64) -> f64 {
        match &self.source {
            Source::Brownian { base } => base[(j + self.n_base) as usize],
            _ => self.lattice_value(j * BASE_STRIDE, &mut HashMap::new()),
        }
    }

    /// Brownian-bridge midpoint of the dyadic cell `[ka, kb]`.
    fn bridge_mid(&self, ka: i64, wa: f64, kb: i64, wb: f64) -> f64 {
        let mid = ka + (kb - ka) / 2;
        let sd = ((kb - ka).unsigned_abs() as f64 * self.quantum / 4.0).sqrt();
        0.5 * (wa + wb) + sd * rng::lattice_normal(self.master_seed, mid)
    }

    /// Value of the generator at lattice index `k`.
    fn lattice_value(&self, k: i64, memo: &mut HashMap<i64, f64>) -> f64 {
        match &self.source {
            Source::Brownian { base } => {
                let j = k.div_euclid(BASE_STRIDE);
                let r = k.rem_euclid(BASE_STRIDE);
                let off = self.n_base;
                if r == 0 {
                    return base[(j + off) as usize];
                }
                let (mut lo, mut hi) = (j * BASE_STRIDE, (j + 1) * BASE_STRIDE);
                let (mut wl, mut wr) = (base[(j + off) as usize], base[(j + 1 + off) as usize]);
                loop {
                    let mid = lo + (hi - lo) / 2;
                    let wm = match memo.get(&mid) {
                        Some(&v) => v,
                        None => {
                            let v = self.bridge_mid(lo, wl, hi, wr);
                            memo.insert(mid, v);
                            v
                        }
                    };
                    if mid == k {
                        return wm;
                    }
                    if k < mid {
                        hi = mid;
                        wr = wm;
                    } else {
                        lo = mid;
                        wl = wm;
                    }
                }
            }
            Source::Injected { f, .. } => f(self.pos(k)),
            Source::Frozen => self.interp_key(k),
        }
    }

    fn interp_key(&self, k: i64) -> f64 {
        match self.keys.binary_search(&k) {
            Ok(i) => self.values[i],
            Err(i) => {
                let i = i.clamp(1, self.keys.len() - 1);
                let (k0, k1) = (self.keys[i - 1], self.keys[i]);
                let s = (k - k0) as f64 / (k1 - k0) as f64;
                self.values[i - 1] + s * (self.values[i] - self.values[i - 1])
            }
        }
    }

    fn refine_keys(&self, mut new: Vec<i64>) -> Self {
        new.sort_unstable();
        new.dedup();
        new.retain(|k| self.keys.binary_search(k).is_err());
        if new.is_empty() {
            return self.clone();
        }
        let mut memo = HashMap::new();
        let new_vals: Vec<f64> = new.iter().map(|&k| self.lattice_value(k, &mut memo)).collect();
        let total = self.keys.len() + new.len();
        let (mut keys, mut values) = (Vec::with_capacity(total), Vec::with_capacity(total));
        let (mut i, mut j) = (0, 0);
        while i < self.keys.len() || j < new.len() {
            if j == new.len() || (i < self.keys.len() && self.keys[i] < new[j]) {
                keys.push(self.keys[i]);
                values.push(self.values[i]);
                i += 1;
            } else {
                keys.push(new[j]);
                values.push(new_vals[j]);
                j += 1;
            }
        }
        let xs = keys.iter().map(|&k| self.pos(k)).collect();
        Self { keys, xs, values, source: self.source.clone(), ..*self.shallow() }
    }

    fn shallow(&self) -> Box<Self> {
        Box::new(Self {
            keys: Vec::new(),
            xs: Vec::new(),
            values: Vec::new(),
            source: Source::Frozen,
            ..*self
        })
    }

    /// Inserts nodes at `points` (quantised to the lattice).
    pub fn refine(&self, points: &[f64]) -> Result<Self> {
        let mut keys = Vec::with_capacity(points.len());
        for &x in points {
            self.check_inside(x)?;
            keys.push(self.clamp_key(self.key_of(x)));
        }
        Ok(self.refine_keys(keys))
    }

    /// Inserts a regular grid of spacing at most `spacing` on `[a, b]`.
    pub fn refine_uniform(&self, a: f64, b: f64, spacing: f64) -> Result<Self> {
        self.check_inside(a)?;
        self.check_inside(b)?;
        require_positive("spacing", spacing)?;
        Ok(self.refine_keys(self.grid_keys(self.key_of(a), self.key_of(b), spacing)))
    }

    /// Dyadic lattice stride no larger than `spacing`.
    fn stride_for(&self, spacing: f64) -> i64 {
        let steps = (spacing / self.quantum).floor().max(1.0);
        let p = (steps.log2().floor() as u32).min(LATTICE_BITS);
        1i64 << p
    }

    fn grid_keys(&self, ka: i64, kb: i64, spacing: f64) -> Vec<i64> {
        let stride = self.stride_for(spacing);
        let first = ka.div_euclid(stride) * stride;
        let mut out = vec![ka];
        let mut k = if first <= ka { first + stride } else { first };
        while k < kb {
            out.push(k);
            k += stride;
        }
        out.push(kb);
        out
    }

    /// Piecewise-linear interpolant of the stored nodes.
    pub fn eval(&self, x: f64) -> Result<f64> {
        self.check_inside(x)?;
        Ok(self.interp(x))
    }

    pub(crate) fn interp(&self, x: f64) -> f64 {
        let i = self.xs.partition_point(|&v| v <= x);
        if i == 0 {
            return self.values[0];
        }
        if i == self.xs.len() {
            return self.values[i - 1];
        }
        let (x0, x1) = (self.xs[i - 1], self.xs[i]);
        let s = (x - x0) / (x1 - x0);
        self.values[i - 1] + s * (self.values[i] - self.values[i - 1])
    }

    /// Values of the generator on the regular grid `a + i·spacing`,
    /// `i = 0..=n`, without storing them. `spacing` must be a multiple of
    /// the lattice quantum.
    pub fn sample_grid(&self, a: f64, spacing: f64, n: usize) -> Result<Vec<f64>> {
        self.check_inside(a)?;
        self.check_inside(a + spacing * n as f64)?;
        let ka = self.key_of(a);
        let step = self.key_of(spacing);
        if step <= 0 || ((step as f64 * self.quantum - spacing) / spacing).abs() > 1e-9 {
            return Err(BroxError::Parameter(format!(
                "grid spacing {spacing} is not a multiple of the lattice quantum"
            )));
        }
        let mut memo = HashMap::new();
        Ok((0..=n as i64).map(|i| self.lattice_value(self.clamp_key(ka + i * step), &mut memo)).collect())
    }

    /// Node positions and values on `[a, b]`: stored nodes strictly inside,
    /// plus interpolated endpoints.
    pub fn window(&self, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
        let lo = self.xs.partition_point(|&v| v <= a);
        let hi = self.xs.partition_point(|&v| v < b);
        let mut xs = Vec::with_capacity(hi.saturating_sub(lo) + 2);
        let mut ws = Vec::with_capacity(xs.capacity());
        xs.push(a);
        ws.push(self.interp(a));
        for i in lo..hi {
            xs.push(self.xs[i]);
            ws.push(self.values[i]);
        }
        if b > a {
            xs.push(b);
            ws.push(self.interp(b));
        }
        (xs, ws)
    }

    fn check_window(&self, x: f64, r: f64) -> Result<()> {
        require_finite("x", x)?;
        require_positive("r", r)?;
        self.check_inside(x - r)?;
        self.check_inside(x + r)
    }

    /// Window at resolution `resolution`, refining as needed.
    fn resolved_window(&self, x: f64, r: f64, resolution: f64) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_window(x, r)?;
        let (ka, kb) = (self.clamp_key(self.key_of(x - r)), self.clamp_key(self.key_of(x + r)));
        if resolution >= self.base_spacing && !matches!(self.source, Source::Frozen) {
            // Base cells are already this fine; add only the endpoints.
            let env = self.refine_keys(vec![ka, kb]);
            return Ok(env.window(self.pos(ka), self.pos(kb)));
        }
        let env = self.refine_keys(self.grid_keys(ka, kb, resolution));
        Ok(env.window(self.pos(ka), self.pos(kb)))
    }

    /// `ξ(x, r)`: oscillation of `W` on `[x − r, x + r]` at resolution `r/32`.
    pub fn oscillation(&self, x: f64, r: f64) -> Result<f64> {
        self.oscillation_at(x, r, r / 32.0)
    }

    pub fn oscillation_at(&self, x: f64, r: f64, resolution: f64) -> Result<f64> {
        let (_, ws) = self.resolved_window(x, r, resolution)?;
        Ok(spread(&ws))
    }

    /// Oscillation of the interpolant of the stored nodes, no refinement.
    pub fn oscillation_on_grid(&self, x: f64, r: f64) -> Result<f64> {
        self.check_window(x, r)?;
        Ok(spread(&self.window(x - r, x + r).1))
    }

    /// `Ξ(x, r)`: Hölder coefficient on `[x − r, x + r]` at resolution `r/32`.
    pub fn holder_coefficient(&self, x: f64, r: f64) -> Result<f64> {
        self.holder_coefficient_at(x, r, r / 32.0)
    }

    pub fn holder_coefficient_at(&self, x: f64, r: f64, resolution: f64) -> Result<f64> {
        let (xs, ws) = self.resolved_window(x, r, resolution)?;
        Ok(holder_sup(&xs, &ws, self.alpha, f64::INFINITY))
    }

    /// Hölder coefficient of the interpolant of the stored nodes. For a
    /// piecewise-linear function the sup over the window is attained at
    /// nodes or window endpoints, so this is exact for the interpolant.
    pub fn holder_on_grid(&self, x: f64, r: f64) -> Result<f64> {
        self.check_window(x, r)?;
        let (xs, ws) = self.window(x - r, x + r);
        Ok(holder_sup(&xs, &ws, self.alpha, f64::INFINITY))
    }

    /// Hölder sup over pairs in `[a, b]` no further apart than `max_lag`,
    /// on the stored nodes.
    pub fn local_holder(&self, a: f64, b: f64, max_lag: f64) -> Result<f64> {
        self.check_inside(a)?;
        self.check_inside(b)?;
        if a >= b {
            return Err(BroxError::Parameter(format!("empty interval [{a}, {b}]")));
        }
        let (xs, ws) = self.window(a, b);
        Ok(holder_sup(&xs, &ws, self.alpha, max_lag))
    }

    /// `Υ(i, c0)` for every integer `i` in `0..=r_max` (running sup).
    pub fn upsilon_profile(&self, r_max: usize, c0: f64) -> Result<Vec<f64>> {
        if !(c0 >= 1.0) {
            return Err(BroxError::Parameter(format!("c0 must be at least 1, got {c0}")));
        }
        self.check_inside(r_max as f64 + c0)?;
        let mut out = Vec::with_capacity(r_max + 1);
        let mut running: f64 = 0.0;
        for i in 0..=r_max {
            let x = i as f64;
            let v = self.holder_coefficient(x, c0)? + self.holder_coefficient(-x, c0)?;
            running = running.max(v);
            out.push(running);
        }
        Ok(out)
    }

    /// `Υ(r, c0) = sup_{0 ≤ i ≤ r} Ξ(i, c0) + Ξ(−i, c0)` over integers `i`.
    pub fn upsilon(&self, r: f64, c0: f64) -> Result<f64> {
        require_finite("r", r)?;
        if r < 0.0 {
            return Err(BroxError::Parameter(format!("r must be non-negative, got {r}")));
        }
        Ok(*self.upsilon_profile(r.floor() as usize, c0)?.last().unwrap_or(&0.0))
    }

    pub fn functionals(&self, x: f64, r: f64, c0: f64) -> Result<PathFunctionals> {
        Ok(PathFunctionals {
            xi: self.oscillation(x, r)?,
            holder: self.holder_coefficient(x, r)?,
            upsilon: self.upsilon(r, c0)?,
            resolution: (r / 32.0).min(self.base_spacing),
        })
    }

    /// Minimum and maximum of the interpolant on `[a, b]`.
    pub fn range_on(&self, a: f64, b: f64) -> Result<(f64, f64)> {
        self.check_inside(a)?;
        self.check_inside(b)?;
        let (_, ws) = self.window(a.min(b), a.max(b));
        let lo = ws.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = ws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((lo, hi))
    }

    /// First crossing of `target` moving away from the origin in
    /// `direction`; the backward direction reads `W̃(z) = W(−z)`.
    pub fn hitting_time(&self, target: Target, direction: Direction) -> Result<Hit> {
        let (lo, hi) = match target {
            Target::Level(z) => {
                require_finite("level", z)?;
                if z == 0.0 {
                    return Ok(Hit { position: 0.0, side: None });
                }
                if z > 0.0 {
                    (f64::NEG_INFINITY, z)
                } else {
                    (z, f64::INFINITY)
                }
            }
            Target::Corridor { lower, upper } => {
                require_finite("lower", lower)?;
                require_finite("upper", upper)?;
                if !(lower < 0.0 && 0.0 < upper) {
                    return Err(BroxError::Parameter(format!(
                        "corridor ({lower}, {upper}) must contain 0"
                    )));
                }
                (lower, upper)
            }
        };
        let s = direction.sign();
        let mut wa = 0.0;
        for j in 0..self.n_base {
            let ka = s * j * BASE_STRIDE;
            let kb = s * (j + 1) * BASE_STRIDE;
            let wb = self.base_value(s * (j + 1));
            if let Some((k, side)) = self.seek(ka, wa, kb, wb, lo, hi, 0) {
                return Ok(Hit { position: k * self.quantum, side: Some(side) });
            }
            wa = wb;
        }
        Ok(Hit { position: f64::INFINITY, side: None })
    }

    /// Searches the cell `[ka, kb]` (keys may run backwards) for the first
    /// exit from `(lo, hi)`, given `lo < wa < hi`. Returns the lattice
    /// coordinate of the crossing.
    #[allow(clippy::too_many_arguments)]
    fn seek(&self, ka: i64, wa: f64, kb: i64, wb: f64, lo: f64, hi: f64, depth: u32) -> Option<(f64, Side)> {
        let certain = wb >= hi || wb <= lo;
        let len = (kb - ka).unsigned_abs() as f64 * self.quantum;
        let brownian = self.is_brownian();
        let (p_hi, p_lo) = if certain || !brownian {
            (0.0, 0.0)
        } else {
            let ph = if hi.is_finite() { (-2.0 * (hi - wa) * (hi - wb) / len).exp() } else { 0.0 };
            let pl = if lo.is_finite() { (-2.0 * (wa - lo) * (wb - lo) / len).exp() } else { 0.0 };
            (ph, pl)
        };
        if !certain && p_hi + p_lo < HIT_EPS {
            return None;
        }
        let leaf = depth >= HIT_DEPTH || (kb - ka).abs() < 2;
        if leaf {
            if certain {
                let (level, side) = if wb >= hi { (hi, Side::Upper) } else { (lo, Side::Lower) };
                let frac = ((level - wa) / (wb - wa)).clamp(0.0, 1.0);
                let k = ka as f64 + frac * (kb - ka) as f64;
                return Some((k.abs(), side));
            }
            let mid = ka + (kb - ka) / 2;
            let u = rng::lattice_uniform(self.master_seed, mid);
            if u < p_hi {
                return Some(((mid as f64).abs(), Side::Upper));
            }
            if u < p_hi + p_lo {
                return Some(((mid as f64).abs(), Side::Lower));
            }
            return None;
        }
        let mid = ka + (kb - ka) / 2;
        let wm = if brownian {
            self.bridge_mid(ka.min(kb), if ka < kb { wa } else { wb }, ka.max(kb), if ka < kb { wb } else { wa })
        } else {
            self.lattice_value(mid, &mut HashMap::new())
        };
        if let Some(hit) = self.seek(ka, wa, mid, wm, lo, hi, depth + 1) {
            return Some(hit);
        }
        if wm >= hi || wm <= lo {
            // Unreachable for exact arithmetic: the left half would be certain.
            return Some(((mid as f64).abs(), if wm >= hi { Side::Upper } else { Side::Lower }));
        }
        self.seek(mid, wm, kb, wb, lo, hi, depth + 1)
    }

    /// Lebesgue measure of `{z ∈ [0, x] : a ≤ W̃(z) ≤ b}` for the
    /// interpolant, with `W̃` the environment read in `direction`. Either
    /// bound may be infinite.
    pub fn occupation_time(&self, a: f64, b: f64, x: f64, direction: Direction) -> Result<f64> {
        if a.is_nan() || b.is_nan() || a >= b {
            return Err(BroxError::Parameter(format!("band [{a}, {b}] is empty")));
        }
        require_finite("horizon", x)?;
        if x < 0.0 {
            return Err(BroxError::Parameter(format!("horizon must be non-negative, got {x}")));
        }
        self.check_inside(x)?;
        let (us, ws) = self.directed_window(x, direction);
        let mut acc = crate::stats::Neumaier::new();
        for i in 1..us.len() {
            let (w0, w1) = (ws[i - 1], ws[i]);
            let len = us[i] - us[i - 1];
            let dw = w1 - w0;
            let frac = if dw == 0.0 {
                if a <= w0 && w0 <= b {
                    1.0
                } else {
                    0.0
                }
            } else {
                let sa = (a - w0) / dw;
                let sb = (b - w0) / dw;
                let (s0, s1) = (sa.min(sb).max(0.0), sa.max(sb).min(1.0));
                (s1 - s0).max(0.0)
            };
            acc.add(frac * len);
        }
        Ok(acc.value())
    }

    /// Distances and values of the interpolant on `[0, x]` read in
    /// `direction`, including the endpoint.
    pub fn directed_window(&self, x: f64, direction: Direction) -> (Vec<f64>, Vec<f64>) {
        match direction {
            Direction::Forward => self.window(0.0, x),
            Direction::Backward => {
                let (xs, ws) = self.window(-x, 0.0);
                (xs.iter().rev().map(|v| -v).collect(), ws.into_iter().rev().collect())
            }
        }
    }

    /// Extremes of `W̃` on `[u0, u1] ⊂ [0, L]` read in `direction`.
    pub fn directed_range(&self, u0: f64, u1: f64, direction: Direction) -> Result<(f64, f64)> {
        match direction {
            Direction::Forward => self.range_on(u0, u1),
            Direction::Backward => self.range_on(-u1, -u0),
        }
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "x,w")?;
        for (x, w) in self.xs.iter().zip(&self.values) {
            writeln!(out, "{x:.16e},{w:.16e}")?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn write_metadata<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.metadata())?)?;
        Ok(())
    }

    /// Reads an environment written by [`write_csv`](Self::write_csv) and
    /// [`write_metadata`](Self::write_metadata). If the sidecar names the
    /// Brownian generator and regenerating it reproduces every node, the
    /// result keeps the generator and refines exactly; otherwise it is frozen.
    pub fn read<P: AsRef<Path>, Q: AsRef<Path>>(csv: P, sidecar: Q) -> Result<Self> {
        let meta: EnvMetadata = serde_json::from_str(&std::fs::read_to_string(sidecar)?)?;
        let reader = BufReader::new(std::fs::File::open(csv)?);
        let mut lines = reader.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "x,w" => {}
            _ => return Err(BroxError::Format("expected header `x,w`".into())),
        }
        let mut xs = Vec::new();
        let mut ws = Vec::new();
        for (n, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut it = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| BroxError::Format(format!("bad row {}: {line}", n + 2)))
            };
            xs.push(parse(it.next())?);
            ws.push(parse(it.next())?);
        }
        let n = check_grid(meta.half_width, meta.base_spacing)?;
        let quantum = meta.base_spacing / BASE_STRIDE as f64;
        if (quantum - meta.lattice_quantum).abs() > 1e-15 * quantum.max(1e-300) {
            return Err(BroxError::Format("lattice quantum does not match base spacing".into()));
        }
        let keys: Vec<i64> = xs.iter().map(|&x| (x / quantum).round() as i64).collect();
        if keys.windows(2).any(|p| p[0] >= p[1]) {
            return Err(BroxError::Format("nodes are not strictly increasing".into()));
        }
        let m = n * BASE_STRIDE;
        if keys.first() != Some(&-m) || keys.last() != Some(&m) || keys.binary_search(&0).is_err() {
            return Err(BroxError::Format("nodes must span [-L, L] and contain 0".into()));
        }
        if meta.generator == "brownian" {
            let regen = Self::sample(meta.master_seed, meta.half_width, meta.base_spacing)?
                .with_alpha(meta.alpha)?;
            let full = regen.refine_keys(keys.clone());
            if full.keys == keys && full.values == ws {
                return Ok(full);
            }
        }
        let env = Self {
            xs: keys.iter().map(|&k| k as f64 * quantum).collect(),
            keys,
            values: ws,
            master_seed: meta.master_seed,
            alpha: DEFAULT_ALPHA,
            half_width: n as f64 * meta.base_spacing,
            base_spacing: meta.base_spacing,
            quantum,
            n_base: n,
            source: Source::Frozen,
        };
        env.with_alpha(meta.alpha)
    }
}

fn spread(ws: &[f64]) -> f64 {
    let lo = ws.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ws.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (hi - lo).max(0.0)
}

/// `sup |w_j − w_i| / |x_j − x_i|^α` over node pairs at most `max_lag` apart.
pub fn holder_sup(xs: &[f64], ws: &[f64], alpha: f64, max_lag: f64) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let gaps: Vec<f64> = xs.windows(2).map(|p| p[1] - p[0]).collect();
    let gmin = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let gmax = gaps.iter().copied().fold(0.0, f64::max);
    let mut best: f64 = 0.0;
    if gmax <= gmin * (1.0 + 1e-12) {
        // Uniform spacing: precompute the lag weights.
        let h = (xs[n - 1] - xs[0]) / (n - 1) as f64;
        let lags = if max_lag.is_finite() {
            (((max_lag / h) * (1.0 + 1e-12)).floor() as usize).min(n - 1)
        } else {
            n - 1
        };
        let weight: Vec<f64> = (0..=lags).map(|l| (l as f64 * h).powf(-alpha)).collect();
        for i in 0..n {
            let top = (i + lags).min(n - 1);
            for j in i + 1..=top {
                let v = (ws[j] - ws[i]).abs() * weight[j - i];
                if v > best {
                    best = v;
                }
            }
        }
        return best;
    }
    for i in 0..n {
        for j in i + 1..n {
            let d = xs[j] - xs[i];
            if d > max_lag * (1.0 + 1e-12) {
                break;
            }
            if d <= 0.0 {
                continue;
            }
            let v = (ws[j] - ws[i]).abs() / d.powf(alpha);
            if v > best {
                best = v;
            }
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_pinned() {
        let env = EnvironmentPath::sample(11, 4.0, 0.25).unwrap();
        assert_eq!(env.eval(0.0).unwrap(), 0.0);
        assert_eq!(env.nodes().first(), Some(&-4.0));
        assert_eq!(env.nodes().last(), Some(&4.0));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(EnvironmentPath::sample(1, f64::NAN, 0.1).is_err());
        assert!(EnvironmentPath::sample(1, 1.0, 2.0).is_err());
        assert!(EnvironmentPath::sample(1, 1.0, 0.3).is_err());
        assert!(EnvironmentPath::sample(1, 1.0, 0.25).unwrap().with_alpha(0.5).is_err());
    }

    #[test]
    fn doubling_the_domain_keeps_the_prefix() {
        let a = EnvironmentPath::sample(5, 2.0, 0.125).unwrap();
        let b = EnvironmentPath::sample(5, 4.0, 0.125).unwrap();
        for (&x, &w) in a.nodes().iter().zip(a.values()) {
            assert_eq!(b.eval(x).unwrap(), w);
        }
    }

    #[test]
    fn refinement_keeps_old_nodes() {
        let env = EnvironmentPath::sample(3, 2.0, 0.5).unwrap();
        let fine = env.refine(&[0.1, -0.3, 0.5]).unwrap();
        for (&x, &w) in env.nodes().iter().zip(env.values()) {
            assert_eq!(fine.eval(x).unwrap(), w);
        }
        assert_eq!(fine.len(), env.len() + 2);
        assert!(env.refine(&[2.5]).is_err());
    }

    #[test]
    fn uniform_grid_matches_refined_nodes() {
        let env = EnvironmentPath::sample(9, 2.0, 0.25).unwrap();
        let g = env.sample_grid(-1.0, 0.0625, 32).unwrap();
        let fine = env.refine_uniform(-1.0, 1.0, 0.0625).unwrap();
        for (i, &v) in g.iter().enumerate() {
            assert_eq!(fine.eval(-1.0 + 0.0625 * i as f64).unwrap(), v);
        }
    }

    #[test]
    fn linear_functionals() {
        let env = EnvironmentPath::linear(4.0, 1.0 / 64.0, 1.0).unwrap();
        let r: f64 = 1.5;
        assert!((env.oscillation(0.0, r).unwrap() - 2.0 * r).abs() < 1e-12);
        let xi = env.holder_coefficient(0.0, r).unwrap();
        assert!((xi - (2.0 * r).powf(0.6)).abs() < 1e-12, "{xi}");
        let hit = env.hitting_time(Target::Level(1.25), Direction::Forward).unwrap();
        assert!((hit.position - 1.25).abs() < 1e-12);
        assert_eq!(hit.side, Some(Side::Upper));
        let back = env.hitting_time(Target::Level(-0.5), Direction::Backward).unwrap();
        assert!((back.position - 0.5).abs() < 1e-12);
        let occ = env.occupation_time(0.0, 1.0, 3.0, Direction::Forward).unwrap();
        assert!((occ - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_functionals_vanish() {
        let env = EnvironmentPath::flat(4.0, 0.25).unwrap();
        assert_eq!(env.oscillation(0.0, 1.0).unwrap(), 0.0);
        assert_eq!(env.holder_coefficient(1.0, 1.0).unwrap(), 0.0);
        assert_eq!(env.upsilon(2.0, 1.0).unwrap(), 0.0);
        assert_eq!(env.occupation_time(-1.0, 1.0, 2.5, Direction::Forward).unwrap(), 2.5);
        let h = env.hitting_time(Target::Level(1.0), Direction::Forward).unwrap();
        assert!(!h.resolved());
    }

    #[test]
    fn level_zero_hits_at_origin() {
        let env = EnvironmentPath::sample(1, 2.0, 0.25).unwrap();
        assert_eq!(env.hitting_time(Target::Level(0.0), Direction::Forward).unwrap().position, 0.0);
    }

    #[test]
    fn occupation_rejects_empty_band() {
        let env = EnvironmentPath::flat(1.0, 0.25).unwrap();
        assert!(env.occupation_time(1.0, 1.0, 0.5, Direction::Forward).is_err());
    }
}
