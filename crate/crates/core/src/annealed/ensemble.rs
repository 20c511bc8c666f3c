//! Environment ensembles: Monte Carlo checks of the closed-form Brownian
//! laws, the annealed on-diagonal decay and the growth of `Υ`.
//!
//! Slot `i` of an ensemble with master seed `s` always uses the environment
//! seed `derive_seed(s, tag, i)`; work is distributed with an ordered
//! parallel map, so results do not depend on the number of threads.

use std::io::{BufWriter, Write};
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::closed_form;
use super::events::{classify_events, required_half_width, EventFlags, EventParams};
use crate::env::{Direction, EnvironmentPath, Hit, Side, Target};
use crate::error::{require_positive, BroxError, Result};
use crate::kernel::{diag_series, KernelGrid, SolverOptions};
use crate::rng::{derive_seed, substream, tag};
use crate::stats::{self, bootstrap_mean_ci, ks_test, linear_fit, quantile_sorted, Neumaier};

/// Two-sided critical value used for every `3 SE` comparison.
pub const Z_TOLERANCE: f64 = 3.0;

/// A Bernoulli frequency with a Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Frequency {
    pub hits: usize,
    pub n: usize,
    pub p: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

impl Frequency {
    pub fn new(hits: usize, n: usize) -> Self {
        if n == 0 {
            return Self { hits, n, p: f64::NAN, se: f64::NAN, ci_lo: 0.0, ci_hi: 1.0 };
        }
        let (p, se) = stats::frequency(hits, n);
        let z = 1.96f64;
        let nf = n as f64;
        let denom = 1.0 + z * z / nf;
        let centre = (p + z * z / (2.0 * nf)) / denom;
        let half = z * (p * (1.0 - p) / nf + z * z / (4.0 * nf * nf)).sqrt() / denom;
        // Rounding can put the interval a few ulp inside p at p ∈ {0, 1}.
        Self { hits, n, p, se, ci_lo: (centre - half).clamp(0.0, p), ci_hi: (centre + half).clamp(p, 1.0) }
    }
}

/// Empirical frequency against a closed-form probability. The standard
/// error is the one implied by the closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCheck {
    pub name: String,
    pub frequency: Frequency,
    pub expected: f64,
    pub z: f64,
    pub pass: bool,
}

impl FrequencyCheck {
    fn new(name: &str, hits: usize, n: usize, expected: f64) -> Self {
        let frequency = Frequency::new(hits, n);
        let se = (expected * (1.0 - expected) / n as f64).sqrt();
        let z = (frequency.p - expected) / se;
        Self { name: name.into(), frequency, expected, z, pass: z.abs() <= Z_TOLERANCE }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KsCheck {
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    /// Observations beyond the censoring point.
    pub censored: usize,
    pub censor: f64,
    pub level: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceCheck {
    pub lambda: f64,
    /// Mean of `exp(−λ · occupation) · 1{top exit}`.
    pub mean: f64,
    /// Sample standard error.
    pub se: f64,
    pub expected: f64,
    /// Standard error implied by the closed form, `√((Q(2λ) − Q(λ)²)/n)`.
    /// The summand is very skewed for large `λ`, so the sample standard
    /// error understates the spread; `z` uses this one.
    pub null_se: f64,
    pub z: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub n_envs: usize,
    pub t: f64,
    /// Base spacing for the hitting-time checks.
    pub spacing: f64,
    /// Base spacing for the corridor and occupation checks.
    pub occupation_spacing: f64,
    pub initial_half_width: f64,
    pub max_half_width: f64,
    /// Base spacing of the unit-length environments used for the arcsine law.
    pub arcsine_spacing: f64,
    pub lambdas: Vec<f64>,
    pub ks_level: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            n_envs: 10_000,
            t: 10f64.exp(),
            spacing: 1.0 / 16.0,
            occupation_spacing: 1.0 / 128.0,
            initial_half_width: 64.0,
            max_half_width: 4096.0,
            arcsine_spacing: 1.0 / 16384.0,
            lambdas: vec![0.5, 1.0, 2.0],
            ks_level: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub config: OracleConfig,
    pub seed: u64,
    /// Law of `H_1` (hitting density).
    pub hitting_ks: KsCheck,
    /// `P(H_1 ≤ 1) = 2(1 − Φ(1))`.
    pub hitting_unit: FrequencyCheck,
    /// `P(Γ_t) = 1/(1 + 2 log t)`.
    pub gamma: FrequencyCheck,
    /// `P(inf before H_2 ≤ −3) = 2/5`.
    pub two_sided: FrequencyCheck,
    /// `P(max before H_{−1} ≥ 1) = 1/2`.
    pub running_max: FrequencyCheck,
    pub arcsine_ks: KsCheck,
    /// `P(occupation of (−∞, 0] over [0, 1] ≤ 1/2) = 1/2`.
    pub arcsine_half: FrequencyCheck,
    pub laplace: Vec<LaplaceCheck>,
    /// Domain doublings needed to resolve hitting times.
    pub enlargements: usize,
    pub pass: bool,
}

struct OracleSlot {
    h1: f64,
    gamma: bool,
    occupation: f64,
    two_sided_low: bool,
    max_first: bool,
    arcsine: f64,
    enlargements: usize,
}

/// Hitting time, doubling the domain (same seed lineage) until the hit is
/// resolved or `max_half_width` is reached.
fn hit_growing(env: &mut EnvironmentPath, target: Target, max_half_width: f64, grown: &mut usize) -> Result<Hit> {
    loop {
        let hit = env.hitting_time(target, Direction::Forward)?;
        if hit.resolved() || env.half_width() >= max_half_width {
            return Ok(hit);
        }
        *env = env.enlarged((2.0 * env.half_width()).min(max_half_width))?;
        *grown += 1;
    }
}

pub fn oracle_validation(n_envs: usize, t: f64, seed: u64) -> Result<OracleReport> {
    oracle_validation_with(&OracleConfig { n_envs, t, ..OracleConfig::default() }, seed)
}

pub fn oracle_validation_with(cfg: &OracleConfig, seed: u64) -> Result<OracleReport> {
    if cfg.n_envs < 2 {
        return Err(BroxError::Parameter("need at least two environments".into()));
    }
    require_positive("spacing", cfg.spacing)?;
    if cfg.max_half_width < cfg.initial_half_width {
        return Err(BroxError::Parameter("max_half_width below initial_half_width".into()));
    }
    let gamma_p = closed_form::gamma_probability(cfg.t)?;
    let lt = cfg.t.ln();
    let llt = lt.ln();
    let expected_q: Vec<(f64, f64)> = cfg
        .lambdas
        .iter()
        .map(|&l| Ok((closed_form::occupation_laplace(l, cfg.t)?, closed_form::occupation_laplace(2.0 * l, cfg.t)?)))
        .collect::<Result<_>>()?;

    let slots: Vec<OracleSlot> = (0..cfg.n_envs)
        .into_par_iter()
        .map(|i| -> Result<OracleSlot> {
            let s = derive_seed(seed, tag::ORACLE, i as u64);
            let mut env = EnvironmentPath::sample(s, cfg.initial_half_width, cfg.spacing)?;
            let mut grown = 0;
            let max = cfg.max_half_width;
            let h1 = hit_growing(&mut env, Target::Level(1.0), max, &mut grown)?.position;
            let mut fine =
                EnvironmentPath::sample(derive_seed(s, tag::ORACLE, 2), cfg.initial_half_width, cfg.occupation_spacing)?;
            let corridor = hit_growing(&mut fine, Target::Corridor { lower: -1.0, upper: 2.0 * lt }, max, &mut grown)?;
            if !corridor.resolved() {
                return Err(BroxError::Unresolved { what: "corridor exit".into(), half_width: max });
            }
            let occupation = fine.occupation_time(-1.0, 2.0 * llt, corridor.position, Direction::Forward)?;
            let two = hit_growing(&mut env, Target::Corridor { lower: -3.0, upper: 2.0 }, max, &mut grown)?;
            let one = hit_growing(&mut env, Target::Corridor { lower: -1.0, upper: 1.0 }, max, &mut grown)?;
            let unit = EnvironmentPath::sample(derive_seed(s, tag::ORACLE, 1), 1.0, cfg.arcsine_spacing)?;
            let arcsine = unit.occupation_time(f64::NEG_INFINITY, 0.0, 1.0, Direction::Forward)?;
            Ok(OracleSlot {
                h1,
                gamma: corridor.side == Some(Side::Upper),
                occupation,
                two_sided_low: two.side == Some(Side::Lower),
                max_first: one.side == Some(Side::Upper),
                arcsine,
                enlargements: grown,
            })
        })
        .collect::<Result<_>>()?;

    let n = slots.len();
    let count = |f: &dyn Fn(&OracleSlot) -> bool| slots.iter().filter(|s| f(s)).count();
    let h1: Vec<f64> = slots.iter().map(|s| s.h1).collect();
    let censor = cfg.max_half_width;
    let ks = ks_test(&h1, |s| closed_form::hitting_cdf(1.0, s).unwrap_or(0.0), censor);
    let hitting_ks = KsCheck {
        name: "hitting time of level 1".into(),
        statistic: ks.statistic,
        p_value: ks.p_value,
        n,
        censored: h1.iter().filter(|&&v| v > censor).count(),
        censor,
        level: cfg.ks_level,
        pass: ks.p_value >= cfg.ks_level,
    };
    let arc: Vec<f64> = slots.iter().map(|s| s.arcsine).collect();
    let ks = ks_test(&arc, |a| closed_form::arcsine_cdf(a).unwrap_or(0.0), f64::INFINITY);
    let arcsine_ks = KsCheck {
        name: "arcsine law".into(),
        statistic: ks.statistic,
        p_value: ks.p_value,
        n,
        censored: 0,
        censor: f64::INFINITY,
        level: cfg.ks_level,
        pass: ks.p_value >= cfg.ks_level,
    };
    let laplace: Vec<LaplaceCheck> = cfg
        .lambdas
        .iter()
        .zip(&expected_q)
        .map(|(&lambda, &(expected, second))| {
            let vals: Vec<f64> =
                slots.iter().map(|s| if s.gamma { (-lambda * s.occupation).exp() } else { 0.0 }).collect();
            let (mean, se) = stats::mean_se(&vals);
            let null_se = ((second - expected * expected) / n as f64).sqrt();
            let z = (mean - expected) / null_se;
            LaplaceCheck { lambda, mean, se, expected, null_se, z, pass: z.abs() <= Z_TOLERANCE }
        })
        .collect();
    let mut report = OracleReport {
        config: cfg.clone(),
        seed,
        hitting_ks,
        hitting_unit: FrequencyCheck::new(
            "P(H_1 <= 1)",
            count(&|s| s.h1 <= 1.0),
            n,
            closed_form::hitting_cdf(1.0, 1.0)?,
        ),
        gamma: FrequencyCheck::new("P(Gamma_t)", count(&|s| s.gamma), n, gamma_p),
        two_sided: FrequencyCheck::new(
            "P(inf before H_2 <= -3)",
            count(&|s| s.two_sided_low),
            n,
            closed_form::two_sided(2.0, 3.0)?,
        ),
        running_max: FrequencyCheck::new(
            "P(max before H_-1 >= 1)",
            count(&|s| s.max_first),
            n,
            closed_form::running_max_tail(0.0, 1.0, -1.0)?,
        ),
        arcsine_ks,
        arcsine_half: FrequencyCheck::new(
            "P(occupation <= 1/2)",
            count(&|s| s.arcsine <= 0.5),
            n,
            closed_form::arcsine_cdf(0.5)?,
        ),
        laplace,
        enlargements: slots.iter().map(|s| s.enlargements).sum(),
        pass: false,
    };
    report.pass = report.hitting_ks.pass
        && report.hitting_unit.pass
        && report.gamma.pass
        && report.two_sided.pass
        && report.running_max.pass
        && report.arcsine_ks.pass
        && report.arcsine_half.pass
        && report.laplace.iter().all(|c| c.pass);
    Ok(report)
}

impl OracleReport {
    pub fn write_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }
}

/// Solver and ensemble settings for [`annealed_diag`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnnealedParams {
    /// Kernel grid spacing.
    pub h: f64,
    /// Base spacing of the sampled environments.
    pub env_spacing: f64,
    /// Domain `L = max(min_half_width, log_factor · log² t_max)`.
    pub min_half_width: f64,
    pub log_factor: f64,
    /// A slot whose deficit at `t_max` exceeds this is redone on a doubled
    /// domain (same environment lineage).
    pub deficit_cap: f64,
    pub max_enlargements: usize,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
    pub solver: SolverOptions,
    /// Classify the environment events at every `t ≥ e²` of the grid.
    pub classify: bool,
    pub events: EventParams,
    /// Use `W ≡ 0` in every slot (sanity channel).
    pub flat: bool,
}

impl Default for AnnealedParams {
    fn default() -> Self {
        Self {
            h: 1.0 / 16.0,
            env_spacing: 1.0 / 32.0,
            min_half_width: 16.0,
            log_factor: 4.0,
            deficit_cap: 1e-3,
            max_enlargements: 3,
            bootstrap_resamples: 1000,
            ci_level: 0.95,
            solver: SolverOptions::default(),
            classify: true,
            events: EventParams::default(),
            flat: false,
        }
    }
}

impl AnnealedParams {
    pub fn half_width(&self, t_max: f64) -> f64 {
        let lt = t_max.max(1.0).ln();
        (self.min_half_width.max(self.log_factor * lt * lt)).ceil()
    }
}

/// Per-slot result of [`annealed_diag`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotDiag {
    pub slot: usize,
    pub seed: u64,
    pub half_width: f64,
    pub enlargements: usize,
    /// `p(t, 0, 0)` along the time grid.
    pub p: Vec<f64>,
    pub mass_deficit: Vec<f64>,
    /// Deficit still above the cap after the last enlargement.
    pub over_cap: bool,
    /// Event flags at each `t ≥ e²` of the grid (empty when not classified).
    pub events: Vec<EventFlags>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventFrequencies {
    pub t: f64,
    pub n: usize,
    pub gamma: Frequency,
    pub gamma_tilde: Frequency,
    /// Pearson correlation of the indicators of `Γ_t` and `Γ̃_t`.
    pub gamma_correlation: f64,
    pub theta: Vec<Frequency>,
    pub theta_tilde: Vec<Frequency>,
    pub lambda: Vec<Frequency>,
    pub lambda_tilde: Vec<Frequency>,
    /// Every slot has some `Λ^i` and some `Λ̃^i` true.
    pub lambda_cover: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimePoint {
    pub t: f64,
    pub mean: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    /// `Ē · log² t`.
    pub scaled: f64,
    pub scaled_ci_lo: f64,
    pub scaled_ci_hi: f64,
    /// `Ē · √t`.
    pub diffusive: f64,
    /// Slots whose deficit stayed within the cap.
    pub n_effective: usize,
    pub mean_deficit: f64,
    pub max_deficit: f64,
    pub events: Option<EventFrequencies>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealedReport {
    pub seed: u64,
    pub n_envs: usize,
    pub params: AnnealedParams,
    pub points: Vec<TimePoint>,
    /// `Ē` strictly decreasing along the grid.
    pub decreasing: bool,
    /// `max / min` of `Ē · log² t` over the grid.
    pub scaled_spread: f64,
    /// Range `[a, b]` of `Ē · log² t` over the top decade of the grid.
    pub top_decade: (f64, f64),
    /// Slope of `log Ē` against `log log t`.
    pub slope_loglog: SlopeFit,
    /// Slope of `log Ē` against `log t`.
    pub slope_log: SlopeFit,
    pub enlargements: usize,
    pub over_cap: usize,
    pub slots: Vec<SlotDiag>,
}

fn diag_slot(t_list: &[f64], params: &AnnealedParams, seed: u64, slot: usize) -> Result<SlotDiag> {
    let s = derive_seed(seed, tag::ENVIRONMENT, slot as u64);
    let t_max = *t_list.last().expect("non-empty grid");
    let mut l = params.half_width(t_max);
    let mut env = if params.flat {
        EnvironmentPath::flat(l, params.env_spacing)?
    } else {
        EnvironmentPath::sample(s, l, params.env_spacing)?
    };
    let mut enlargements = 0;
    let series = loop {
        let grid = KernelGrid::x_grid(&env, params.h)?;
        let series = diag_series(&grid, 0.0, t_list, &params.solver)?;
        let deficit = *series.mass_deficit.last().expect("non-empty grid");
        if deficit <= params.deficit_cap || enlargements >= params.max_enlargements {
            break series;
        }
        l *= 2.0;
        env = env.enlarged(l)?;
        enlargements += 1;
    };
    let over_cap = *series.mass_deficit.last().expect("non-empty grid") > params.deficit_cap;
    let mut events = Vec::new();
    let e2 = std::f64::consts::E.powi(2);
    if params.classify && !params.flat {
        let times: Vec<f64> = t_list.iter().copied().filter(|&t| t >= e2).collect();
        if let Some(&t_top) = times.last() {
            let need = required_half_width(t_top, &params.events).ceil();
            let big = if need > env.half_width() { env.enlarged(need)? } else { env.clone() };
            for &t in &times {
                events.push(grow_until_classified(big.clone(), t, &params.events)?);
            }
        }
    }
    Ok(SlotDiag {
        slot,
        seed: s,
        half_width: env.half_width(),
        enlargements,
        p: series.p_leb,
        mass_deficit: series.mass_deficit,
        over_cap,
        events,
    })
}

/// Classifies, doubling the domain while the corridor exit is unresolved.
fn grow_until_classified(mut env: EnvironmentPath, t: f64, params: &EventParams) -> Result<EventFlags> {
    for _ in 0..8 {
        match classify_events(&env, t, params) {
            Err(BroxError::Unresolved { .. }) => env = env.enlarged(2.0 * env.half_width())?,
            other => return other,
        }
    }
    classify_events(&env, t, params)
}

fn event_frequencies(t: f64, flags: &[&EventFlags]) -> EventFrequencies {
    let n = flags.len();
    let freq = |f: &dyn Fn(&EventFlags) -> bool| Frequency::new(flags.iter().filter(|e| f(e)).count(), n);
    let g: Vec<f64> = flags.iter().map(|e| e.forward.gamma as u8 as f64).collect();
    let gt: Vec<f64> = flags.iter().map(|e| e.backward.gamma as u8 as f64).collect();
    EventFrequencies {
        t,
        n,
        gamma: freq(&|e| e.forward.gamma),
        gamma_tilde: freq(&|e| e.backward.gamma),
        gamma_correlation: correlation(&g, &gt),
        theta: (0..4).map(|k| freq(&|e| e.forward.theta[k])).collect(),
        theta_tilde: (0..4).map(|k| freq(&|e| e.backward.theta[k])).collect(),
        lambda: (0..5).map(|k| freq(&|e| e.forward.lambda[k])).collect(),
        lambda_tilde: (0..5).map(|k| freq(&|e| e.backward.lambda[k])).collect(),
        lambda_cover: flags.iter().all(|e| e.forward.lambda_covers() && e.backward.lambda_covers()),
    }
}

/// Pearson correlation; `0` when either sample is constant.
pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len()) as f64;
    let ma = stats::sum(a) / n;
    let mb = stats::sum(b) / n;
    let (mut sab, mut saa, mut sbb) = (Neumaier::new(), Neumaier::new(), Neumaier::new());
    for (x, y) in a.iter().zip(b) {
        sab.add((x - ma) * (y - mb));
        saa.add((x - ma) * (x - ma));
        sbb.add((y - mb) * (y - mb));
    }
    let d = (saa.value() * sbb.value()).sqrt();
    if d > 0.0 {
        sab.value() / d
    } else {
        0.0
    }
}

fn slope_with_bootstrap(x: &[f64], per_slot: &[Vec<f64>], params: &AnnealedParams, seed: u64, salt: u64) -> SlopeFit {
    let n = per_slot.len();
    let n_t = x.len();
    let means = |pick: &mut dyn FnMut() -> usize| -> Vec<f64> {
        let mut acc = vec![Neumaier::new(); n_t];
        for _ in 0..n {
            let row = &per_slot[pick()];
            for j in 0..n_t {
                acc[j].add(row[j]);
            }
        }
        acc.iter().map(|a| (a.value() / n as f64).ln()).collect()
    };
    let mut k = 0;
    let fit = linear_fit(x, &means(&mut || {
        k += 1;
        k - 1
    }));
    let mut rng = substream(derive_seed(seed, tag::BOOTSTRAP, salt), 0);
    let mut slopes: Vec<f64> =
        (0..params.bootstrap_resamples).map(|_| linear_fit(x, &means(&mut || rng.random_range(0..n))).slope).collect();
    slopes.sort_by(|a, b| a.total_cmp(b));
    let a = (1.0 - params.ci_level) / 2.0;
    SlopeFit {
        slope: fit.slope,
        ci_lo: quantile_sorted(&slopes, a),
        ci_hi: quantile_sorted(&slopes, 1.0 - a),
        r_squared: fit.r_squared,
    }
}

/// Ensemble of on-diagonal kernels `p(t, 0, 0)` at the times `t_list`.
pub fn annealed_diag(t_list: &[f64], n_envs: usize, params: &AnnealedParams, seed: u64) -> Result<AnnealedReport> {
    if n_envs < 2 {
        return Err(BroxError::Parameter("need at least two environments".into()));
    }
    if t_list.len() < 2 || t_list.windows(2).any(|p| p[1] <= p[0]) || t_list[0] <= 1.0 {
        return Err(BroxError::Parameter("need at least two increasing times above 1".into()));
    }
    require_positive("h", params.h)?;
    let slots: Vec<SlotDiag> =
        (0..n_envs).into_par_iter().map(|i| diag_slot(t_list, params, seed, i)).collect::<Result<_>>()?;

    let per_slot: Vec<Vec<f64>> = slots.iter().map(|s| s.p.clone()).collect();
    let mut points = Vec::with_capacity(t_list.len());
    for (j, &t) in t_list.iter().enumerate() {
        let vals: Vec<f64> = per_slot.iter().map(|r| r[j]).collect();
        let mean = stats::sum(&vals) / n_envs as f64;
        let (lo, hi) = bootstrap_mean_ci(
            &vals,
            params.bootstrap_resamples,
            params.ci_level,
            derive_seed(seed, tag::BOOTSTRAP, j as u64),
        );
        let l2 = t.ln().powi(2);
        let deficits: Vec<f64> = slots.iter().map(|s| s.mass_deficit[j]).collect();
        let flags: Vec<&EventFlags> =
            slots.iter().filter_map(|s| s.events.iter().find(|e| e.t == t)).collect();
        points.push(TimePoint {
            t,
            mean,
            ci_lo: lo,
            ci_hi: hi,
            scaled: mean * l2,
            scaled_ci_lo: lo * l2,
            scaled_ci_hi: hi * l2,
            diffusive: mean * t.sqrt(),
            n_effective: slots.iter().filter(|s| s.mass_deficit[j] <= params.deficit_cap).count(),
            mean_deficit: stats::sum(&deficits) / n_envs as f64,
            max_deficit: deficits.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            events: (!flags.is_empty()).then(|| event_frequencies(t, &flags)),
        });
    }
    let decreasing = points.windows(2).all(|p| p[1].mean < p[0].mean);
    let scaled: Vec<f64> = points.iter().map(|p| p.scaled).collect();
    let smax = scaled.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let smin = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let t_max = *t_list.last().expect("non-empty grid");
    let top: Vec<f64> = points.iter().filter(|p| p.t >= t_max / 10.0).map(|p| p.scaled).collect();
    let top_decade = (
        top.iter().copied().fold(f64::INFINITY, f64::min),
        top.iter().copied().fold(f64::NEG_INFINITY, f64::max),
    );
    let loglog: Vec<f64> = t_list.iter().map(|t| t.ln().ln()).collect();
    let logt: Vec<f64> = t_list.iter().map(|t| t.ln()).collect();
    Ok(AnnealedReport {
        seed,
        n_envs,
        params: params.clone(),
        decreasing,
        scaled_spread: smax / smin,
        top_decade,
        slope_loglog: slope_with_bootstrap(&loglog, &per_slot, params, seed, u64::MAX),
        slope_log: slope_with_bootstrap(&logt, &per_slot, params, seed, u64::MAX - 1),
        enlargements: slots.iter().map(|s| s.enlargements).sum(),
        over_cap: slots.iter().filter(|s| s.over_cap).count(),
        points,
        slots,
    })
}

impl AnnealedReport {
    /// Whole report, per-slot series included.
    pub fn write_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    /// One row per time: `t,mean,ci_lo,ci_hi,scaled,scaled_ci_lo,scaled_ci_hi,diffusive,mean_deficit,max_deficit`.
    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "t,mean,ci_lo,ci_hi,scaled,scaled_ci_lo,scaled_ci_hi,diffusive,mean_deficit,max_deficit")?;
        for p in &self.points {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                p.t,
                p.mean,
                p.ci_lo,
                p.ci_hi,
                p.scaled,
                p.scaled_ci_lo,
                p.scaled_ci_hi,
                p.diffusive,
                p.mean_deficit,
                p.max_deficit
            )?;
        }
        out.flush()?;
        Ok(())
    }

    /// One row per slot and time: `slot,seed,t,p,mass_deficit`.
    pub fn write_slots_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "slot,seed,t,p,mass_deficit")?;
        for s in &self.slots {
            for (j, t) in self.points.iter().map(|p| p.t).enumerate() {
                writeln!(out, "{},{},{:.16e},{:.16e},{:.16e}", s.slot, s.seed, t, s.p[j], s.mass_deficit[j])?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthRow {
    #[serde(rename = "R")]
    pub r: f64,
    pub median: f64,
    pub q90: f64,
    pub q99: f64,
    pub max: f64,
    /// Fraction of environments whose ratio exceeds three times the median.
    pub above_three_medians: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthReport {
    pub seed: u64,
    pub n_envs: usize,
    pub c0: f64,
    pub rows: Vec<GrowthRow>,
    /// Smallest `R` of the list from which the 99th percentile of
    /// `Υ(R, c0)/√log(1 + R)` is non-increasing.
    pub r0: Option<f64>,
}

impl GrowthReport {
    pub fn write_json<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn write_csv<P: AsRef<Path>>(&self, path: P) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "R,median,q90,q99,max,above_three_medians")?;
        for r in &self.rows {
            writeln!(
                out,
                "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.r, r.median, r.q90, r.q99, r.max, r.above_three_medians
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_radii(r_list: &[f64]) -> Result<()> {
    if r_list.is_empty() || r_list[0] <= 0.0 || r_list.windows(2).any(|p| p[1] <= p[0]) {
        return Err(BroxError::Parameter("R list must be positive and increasing".into()));
    }
    Ok(())
}

/// `Υ(R, c0)/√log(1 + R)` for each `R` of the list.
pub fn upsilon_ratios(env: &EnvironmentPath, r_list: &[f64], c0: f64) -> Result<Vec<f64>> {
    check_radii(r_list)?;
    let profile = env.upsilon_profile(r_list.last().expect("non-empty").floor() as usize, c0)?;
    Ok(r_list.iter().map(|&r| profile[r.floor() as usize] / (1.0 + r).ln().sqrt()).collect())
}

/// Quantiles of `Υ(R, c0)/√log(1 + R)` over sampled environments, with
/// `c0 = 1` and base spacing `1/32`.
pub fn quenched_growth_stats(n_envs: usize, r_list: &[f64], seed: u64) -> Result<GrowthReport> {
    check_radii(r_list)?;
    let c0 = 1.0;
    let l = (r_list.last().expect("non-empty") + c0 + 1.0).ceil();
    let per_env: Vec<Vec<f64>> = (0..n_envs)
        .into_par_iter()
        .map(|i| {
            let env = EnvironmentPath::sample(derive_seed(seed, tag::ENVIRONMENT, i as u64), l, 1.0 / 32.0)?;
            upsilon_ratios(&env, r_list, c0)
        })
        .collect::<Result<_>>()?;
    Ok(growth_report(seed, c0, r_list, &per_env))
}

pub fn growth_report(seed: u64, c0: f64, r_list: &[f64], per_env: &[Vec<f64>]) -> GrowthReport {
    let rows: Vec<GrowthRow> = r_list
        .iter()
        .enumerate()
        .map(|(j, &r)| {
            let mut v: Vec<f64> = per_env.iter().map(|row| row[j]).collect();
            v.sort_by(|a, b| a.total_cmp(b));
            let median = quantile_sorted(&v, 0.5);
            let above = v.iter().filter(|&&x| x > 3.0 * median).count() as f64 / v.len() as f64;
            GrowthRow {
                r,
                median,
                q90: quantile_sorted(&v, 0.9),
                q99: quantile_sorted(&v, 0.99),
                max: *v.last().unwrap_or(&f64::NAN),
                above_three_medians: above,
            }
        })
        .collect();
    let r0 = (0..rows.len()).find(|&k| rows[k..].windows(2).all(|p| p[1].q99 <= p[0].q99)).map(|k| rows[k].r);
    GrowthReport { seed, n_envs: per_env.len(), c0, rows, r0 }
}
