//! Run configuration: TOML with one section per experiment, or the same
//! structure as JSON.
//!
//! Every field has a default, so a config only lists what it changes. The
//! whole config is validated before any computation starts, and
//! [`RunConfig::to_toml`] followed by [`RunConfig::parse`] reproduces it.

use std::path::{Path, PathBuf};

use broxlab_core::annealed::{AnnealedParams, EventParams, OracleConfig};
use broxlab_core::env::DEFAULT_ALPHA;
use broxlab_core::kernel::{NashDomain, SolverOptions};
use broxlab_core::rng::{derive_seed, tag};
use broxlab_core::sde::ExitOptions;
use broxlab_core::{EnvironmentPath, Result as CoreResult};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Subcommand this config was written for; checked against the one run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub command: Option<String>,
    pub seed: u64,
    /// Hölder exponent used by the path functionals.
    pub alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    pub threads: usize,
    /// Promote warnings (mass deficits, unresolved paths) to failures.
    pub strict: bool,
    pub env: EnvSection,
    pub solver: SolverOptions,
    pub events: EventParams,
    pub sample: SampleSection,
    pub volume: VolumeSection,
    pub simulate: SimulateSection,
    pub exit: ExitSection,
    pub kernel: KernelSection,
    pub quenched: QuenchedSection,
    pub annealed: AnnealedSection,
    pub oracles: OracleConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: None,
            seed: 1,
            alpha: DEFAULT_ALPHA,
            out: None,
            threads: 0,
            strict: false,
            env: EnvSection::default(),
            solver: SolverOptions::default(),
            events: EventParams::default(),
            sample: SampleSection::default(),
            volume: VolumeSection::default(),
            simulate: SimulateSection::default(),
            exit: ExitSection::default(),
            kernel: KernelSection::default(),
            quenched: QuenchedSection::default(),
            annealed: AnnealedSection::default(),
            oracles: OracleConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnvKind {
    Brownian,
    Flat,
    Linear,
}

/// The environment shared by the single-environment commands and by the
/// quenched ensembles. Environment `i` of a run is keyed by
/// `derive_seed(seed, ENVIRONMENT, i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSection {
    pub kind: EnvKind,
    pub half_width: f64,
    pub h0: f64,
    /// Slope of `W` for `kind = "linear"`.
    pub slope: f64,
}

impl Default for EnvSection {
    fn default() -> Self {
        Self { kind: EnvKind::Brownian, half_width: 8.0, h0: 1.0 / 64.0, slope: 1.0 }
    }
}

/// `env-sample`: environments written to disk with their path functionals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleSection {
    pub n_envs: usize,
    pub points: Vec<f64>,
    pub radii: Vec<f64>,
    pub c0: f64,
}

impl Default for SampleSection {
    fn default() -> Self {
        Self { n_envs: 1, points: vec![0.0, 1.0], radii: vec![0.5, 1.0, 2.0], c0: 1.0 }
    }
}

/// `volume-sweep`: the volume sandwich over an environment ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VolumeSection {
    pub n_envs: usize,
    pub points: Vec<f64>,
    pub radii: Vec<f64>,
    pub slack: f64,
    /// Environments grow along their seed lineage up to this half-width.
    pub max_half_width: f64,
}

impl Default for VolumeSection {
    fn default() -> Self {
        Self {
            n_envs: 100,
            points: vec![-2.0, 0.0, 2.0],
            radii: vec![0.1, 1.0, 10.0],
            slack: 1e-3,
            max_half_width: 65_536.0,
        }
    }
}

/// `simulate`: one recorded path and a terminal-position sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub x0: f64,
    pub t_end: f64,
    pub ds: f64,
    pub n_readout: usize,
    pub n_paths: usize,
    /// Level of the KS test against `N(x0, t_end)` on a flat environment.
    pub ks_level: f64,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { x0: 0.0, t_end: 1.0, ds: 1e-4, n_readout: 100, n_paths: 1000, ks_level: 0.01 }
    }
}

/// `exit-study`: Monte Carlo exit times against the Green-function oracle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExitSection {
    pub n_envs: usize,
    pub z: f64,
    pub r: f64,
    pub n_paths: usize,
    pub options: ExitOptions,
    /// Agreement threshold in standard errors.
    pub se_factor: f64,
    /// `(R, t)` pairs for the survival-bound sweep; empty skips it.
    pub survival: Vec<[f64; 2]>,
    pub survival_paths: usize,
    pub c6: f64,
}

impl Default for ExitSection {
    fn default() -> Self {
        Self {
            n_envs: 3,
            z: 0.0,
            r: 1.0,
            n_paths: 10_000,
            options: ExitOptions::default(),
            se_factor: 3.0,
            survival: Vec::new(),
            survival_paths: 1000,
            c6: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Coordinate {
    X,
    Y,
}

/// `kernel`: one column of the heat kernel at a list of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KernelSection {
    pub coordinate: Coordinate,
    /// Grid spacing; for the `Y` solver the bound on the induced `x` spacing.
    pub h: f64,
    pub x_source: f64,
    pub t: Vec<f64>,
    /// Node budget of the `Y` grid.
    pub max_nodes: usize,
    /// Relative tolerance of the Gaussian pin on a flat environment.
    pub pin_tolerance: f64,
}

impl Default for KernelSection {
    fn default() -> Self {
        Self {
            coordinate: Coordinate::X,
            h: 1.0 / 128.0,
            x_source: 0.0,
            t: vec![1.0],
            max_nodes: 400_000,
            pin_tolerance: 0.01,
        }
    }
}

/// `verify-quenched`: Nash bounds, the cross-solver identity and the
/// small-time Gaussian shape. A count of zero skips that part.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuenchedSection {
    pub nash_envs: usize,
    pub nash_x: f64,
    pub nash_radii: Vec<f64>,
    pub nash: NashDomain,
    pub eqxy_envs: usize,
    pub eqxy_x: f64,
    pub eqxy_t: f64,
    pub eqxy_points: Vec<f64>,
    pub eqxy_h: f64,
    pub eqxy_max_nodes: usize,
    pub eqxy_tolerance: f64,
    pub shape_envs: usize,
    pub shape_t: Vec<f64>,
    /// Off-diagonal points satisfy `|y| ≤ radius_factor · √t`.
    pub shape_radius_factor: f64,
    pub shape_h: f64,
    pub shape_min_r2: f64,
    pub shape_slope: [f64; 2],
    /// Sources of the on-diagonal envelope fit.
    pub envelope_x: Vec<f64>,
}

impl Default for QuenchedSection {
    fn default() -> Self {
        Self {
            nash_envs: 100,
            nash_x: 0.0,
            nash_radii: vec![0.5, 1.0, 2.0],
            nash: NashDomain::default(),
            eqxy_envs: 10,
            eqxy_x: 0.0,
            eqxy_t: 1.0,
            eqxy_points: vec![-0.5, 0.0, 0.5],
            eqxy_h: 1.0 / 64.0,
            eqxy_max_nodes: 400_000,
            eqxy_tolerance: 0.02,
            shape_envs: 10,
            shape_t: vec![0.1, 0.25, 0.5],
            shape_radius_factor: 6.0,
            shape_h: 1.0 / 64.0,
            shape_min_r2: 0.95,
            shape_slope: [-1.5, -0.1],
            envelope_x: vec![0.0, 1.0],
        }
    }
}

/// `verify-annealed`: the ensemble-averaged diagonal over a log-spaced grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealedSection {
    pub n_envs: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub n_times: usize,
    pub h: f64,
    pub env_spacing: f64,
    pub min_half_width: f64,
    pub log_factor: f64,
    pub deficit_cap: f64,
    pub max_enlargements: usize,
    pub bootstrap_resamples: usize,
    pub ci_level: f64,
    pub classify: bool,
    pub flat: bool,
    /// Largest allowed `max/min` of `Ē · log² t` over the grid.
    pub max_scaled_spread: f64,
    /// The slope of `log Ē` against `log t` must exceed this.
    pub min_loglog_slope: f64,
    /// Environments for the `Υ` growth statistics; 0 skips them.
    pub growth_envs: usize,
    pub growth_radii: Vec<f64>,
}

impl Default for AnnealedSection {
    fn default() -> Self {
        let p = AnnealedParams::default();
        Self {
            n_envs: 200,
            t_min: 1e2,
            t_max: 1e6,
            n_times: 9,
            h: p.h,
            env_spacing: p.env_spacing,
            min_half_width: p.min_half_width,
            log_factor: p.log_factor,
            deficit_cap: p.deficit_cap,
            max_enlargements: p.max_enlargements,
            bootstrap_resamples: p.bootstrap_resamples,
            ci_level: p.ci_level,
            classify: p.classify,
            flat: p.flat,
            max_scaled_spread: 10.0,
            min_loglog_slope: -0.25,
            growth_envs: 0,
            growth_radii: vec![10.0, 30.0, 100.0],
        }
    }
}

impl AnnealedSection {
    /// Log-spaced grid from `t_min` to `t_max`, both included.
    pub fn times(&self) -> Vec<f64> {
        let (a, b) = (self.t_min.ln(), self.t_max.ln());
        let last = self.n_times - 1;
        (0..self.n_times)
            .map(|k| match k {
                0 => self.t_min,
                k if k == last => self.t_max,
                k => (a + (b - a) * k as f64 / last as f64).exp(),
            })
            .collect()
    }

    pub fn params(&self, solver: SolverOptions, events: EventParams) -> AnnealedParams {
        AnnealedParams {
            h: self.h,
            env_spacing: self.env_spacing,
            min_half_width: self.min_half_width,
            log_factor: self.log_factor,
            deficit_cap: self.deficit_cap,
            max_enlargements: self.max_enlargements,
            bootstrap_resamples: self.bootstrap_resamples,
            ci_level: self.ci_level,
            solver,
            classify: self.classify,
            events,
            flat: self.flat,
        }
    }
}

impl RunConfig {
    /// Parses TOML, or JSON when the text starts with `{`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        if text.trim_start().starts_with('{') {
            serde_json::from_str(text).map_err(|e| CliError::Config(format!("JSON: {e}")))
        } else {
            toml::from_str(text).map_err(|e| CliError::Config(format!("TOML: {e}")))
        }
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Canonical TOML form; the config hash is taken over this text.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    /// Environment `index` of the run, built from the `[env]` section.
    pub fn environment(&self, index: u64) -> CoreResult<EnvironmentPath> {
        let e = &self.env;
        let env = match e.kind {
            EnvKind::Brownian => {
                EnvironmentPath::sample(derive_seed(self.seed, tag::ENVIRONMENT, index), e.half_width, e.h0)?
            }
            EnvKind::Flat => EnvironmentPath::flat(e.half_width, e.h0)?,
            EnvKind::Linear => EnvironmentPath::linear(e.half_width, e.h0, e.slope)?,
        };
        env.with_alpha(self.alpha)
    }

    /// Checks every field against the preconditions of the operation that
    /// consumes it and reports all violations at once.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut v = Validator::default();
        v.check("seed", i64::try_from(self.seed).is_ok(), "must fit a TOML integer (at most 2^63 - 1)");
        v.check("alpha", self.alpha > 0.0 && self.alpha < 0.5, "must lie in (0, 1/2)");

        let e = &self.env;
        v.positive("env.half_width", e.half_width);
        v.positive("env.h0", e.h0);
        if e.h0 > 0.0 && e.half_width > 0.0 {
            v.check("env.h0", divides(e.h0, e.half_width), "must divide env.half_width");
        }
        v.finite("env.slope", e.slope);

        let s = &self.solver;
        v.check("solver.growth", s.growth >= 1.0 && s.growth.is_finite(), "must be at least 1");
        v.check("solver.cap_fraction", s.cap_fraction > 0.0 && s.cap_fraction <= 1.0, "must lie in (0, 1]");
        v.positive("solver.deficit_cap", s.deficit_cap);
        if let Err(err) = self.events.validate() {
            v.errors.push(format!("events: {err}"));
        }

        let sm = &self.sample;
        v.check("sample.n_envs", sm.n_envs >= 1, "must be at least 1");
        v.all_finite("sample.points", &sm.points);
        v.all_positive("sample.radii", &sm.radii);
        v.check("sample.c0", sm.c0 >= 1.0, "must be at least 1");

        let vol = &self.volume;
        v.check("volume.n_envs", vol.n_envs >= 1, "must be at least 1");
        v.all_finite("volume.points", &vol.points);
        v.all_positive("volume.radii", &vol.radii);
        v.check("volume.slack", vol.slack >= 0.0 && vol.slack < 1.0, "must lie in [0, 1)");
        v.check("volume.max_half_width", vol.max_half_width >= e.half_width, "must be at least env.half_width");

        let sim = &self.simulate;
        v.finite("simulate.x0", sim.x0);
        v.check("simulate.x0", sim.x0.abs() < e.half_width, "must lie inside the domain");
        v.positive("simulate.t_end", sim.t_end);
        v.positive("simulate.ds", sim.ds);
        v.check("simulate.n_readout", sim.n_readout >= 1, "must be at least 1");
        v.check("simulate.n_paths", sim.n_paths >= 2, "must be at least 2");
        v.probability("simulate.ks_level", sim.ks_level);

        let ex = &self.exit;
        v.check("exit.n_envs", ex.n_envs >= 1, "must be at least 1");
        v.positive("exit.r", ex.r);
        v.check("exit.z", ex.z.is_finite() && ex.z.abs() + ex.r < e.half_width, "± exit.r must lie inside the domain");
        v.check("exit.n_paths", ex.n_paths >= 2, "must be at least 2");
        if let Some(ds) = ex.options.ds {
            v.positive("exit.options.ds", ds);
        }
        v.check("exit.options.survival_points", ex.options.survival_points >= 2, "must be at least 2");
        v.positive("exit.se_factor", ex.se_factor);
        for (i, [r, t]) in ex.survival.iter().enumerate() {
            v.check(&format!("exit.survival[{i}]"), *r > 0.0 && *t > 0.0, "R and t must be positive");
        }
        v.check("exit.survival_paths", ex.survival_paths >= 2, "must be at least 2");
        v.check("exit.c6", ex.c6 > 0.0 && ex.c6 <= 1.0, "must lie in (0, 1]");

        let k = &self.kernel;
        v.positive("kernel.h", k.h);
        if k.coordinate == Coordinate::X && k.h > 0.0 && e.half_width > 0.0 {
            v.check("kernel.h", divides(k.h, 2.0 * e.half_width), "must divide 2·env.half_width");
        }
        v.check("kernel.x_source", k.x_source.abs() < e.half_width, "must lie inside the domain");
        v.increasing_times("kernel.t", &k.t);
        v.check("kernel.max_nodes", k.max_nodes >= 3, "must be at least 3");
        v.check("kernel.pin_tolerance", k.pin_tolerance > 0.0, "must be positive");

        let q = &self.quenched;
        v.check("quenched.nash_x", q.nash_x.abs() < e.half_width, "must lie inside the domain");
        v.all_positive("quenched.nash_radii", &q.nash_radii);
        v.positive("quenched.nash.h", q.nash.h);
        v.check("quenched.nash.max_nodes", q.nash.max_nodes >= 16, "must be at least 16");
        v.check("quenched.nash.max_half_width", q.nash.max_half_width >= e.half_width, "must be at least env.half_width");
        v.positive("quenched.nash.deficit_cap", q.nash.deficit_cap);
        v.check("quenched.eqxy_x", q.eqxy_x.abs() < e.half_width, "must lie inside the domain");
        v.positive("quenched.eqxy_t", q.eqxy_t);
        v.all_finite("quenched.eqxy_points", &q.eqxy_points);
        v.check(
            "quenched.eqxy_points",
            q.eqxy_points.iter().all(|x| x.abs() < e.half_width),
            "must lie inside the domain",
        );
        v.positive("quenched.eqxy_h", q.eqxy_h);
        if q.eqxy_h > 0.0 && e.half_width > 0.0 {
            v.check("quenched.eqxy_h", divides(q.eqxy_h, 2.0 * e.half_width), "must divide 2·env.half_width");
        }
        v.check("quenched.eqxy_max_nodes", q.eqxy_max_nodes >= 3, "must be at least 3");
        v.positive("quenched.eqxy_tolerance", q.eqxy_tolerance);
        v.increasing_times("quenched.shape_t", &q.shape_t);
        v.check("quenched.shape_t", q.shape_t.iter().all(|&t| t <= 1.0), "must not exceed 1");
        v.positive("quenched.shape_radius_factor", q.shape_radius_factor);
        v.positive("quenched.shape_h", q.shape_h);
        if q.shape_h > 0.0 && e.half_width > 0.0 {
            v.check("quenched.shape_h", divides(q.shape_h, 2.0 * e.half_width), "must divide 2·env.half_width");
        }
        v.probability("quenched.shape_min_r2", q.shape_min_r2);
        v.check("quenched.shape_slope", q.shape_slope[0] < q.shape_slope[1], "must be an increasing pair");
        v.check(
            "quenched.envelope_x",
            q.envelope_x.iter().all(|x| x.is_finite() && x.abs() < e.half_width),
            "must lie inside the domain",
        );

        let a = &self.annealed;
        v.check("annealed.n_envs", a.n_envs >= 2, "must be at least 2");
        v.check("annealed.t_min", a.t_min > 1.0 && a.t_min.is_finite(), "must exceed 1");
        v.check("annealed.t_max", a.t_max > a.t_min && a.t_max.is_finite(), "must exceed annealed.t_min");
        v.check("annealed.n_times", a.n_times >= 2, "must be at least 2");
        v.positive("annealed.h", a.h);
        v.positive("annealed.env_spacing", a.env_spacing);
        v.positive("annealed.min_half_width", a.min_half_width);
        v.positive("annealed.log_factor", a.log_factor);
        v.positive("annealed.deficit_cap", a.deficit_cap);
        v.check("annealed.bootstrap_resamples", a.bootstrap_resamples >= 10, "must be at least 10");
        v.check("annealed.ci_level", a.ci_level > 0.0 && a.ci_level < 1.0, "must lie in (0, 1)");
        v.check("annealed.max_scaled_spread", a.max_scaled_spread >= 1.0, "must be at least 1");
        v.finite("annealed.min_loglog_slope", a.min_loglog_slope);
        if a.growth_envs > 0 {
            v.all_positive("annealed.growth_radii", &a.growth_radii);
            v.check(
                "annealed.growth_radii",
                a.growth_radii.windows(2).all(|p| p[1] > p[0]),
                "must be increasing",
            );
        }

        let o = &self.oracles;
        v.check("oracles.n_envs", o.n_envs >= 2, "must be at least 2");
        v.check("oracles.t", o.t > 1.0 && o.t.is_finite(), "must exceed 1");
        v.positive("oracles.spacing", o.spacing);
        v.positive("oracles.occupation_spacing", o.occupation_spacing);
        v.positive("oracles.arcsine_spacing", o.arcsine_spacing);
        v.positive("oracles.initial_half_width", o.initial_half_width);
        v.check(
            "oracles.max_half_width",
            o.max_half_width >= o.initial_half_width,
            "must be at least oracles.initial_half_width",
        );
        v.all_positive("oracles.lambdas", &o.lambdas);
        v.probability("oracles.ks_level", o.ks_level);

        v.finish()
    }
}

fn divides(step: f64, length: f64) -> bool {
    let n = (length / step).round();
    n >= 1.0 && ((n * step - length) / length).abs() <= 1e-9
}

#[derive(Default)]
struct Validator {
    errors: Vec<String>,
}

impl Validator {
    fn check(&mut self, key: &str, ok: bool, what: &str) {
        if !ok {
            self.errors.push(format!("{key} {what}"));
        }
    }

    fn finite(&mut self, key: &str, x: f64) {
        self.check(key, x.is_finite(), "must be finite");
    }

    fn positive(&mut self, key: &str, x: f64) {
        self.check(key, x.is_finite() && x > 0.0, "must be positive and finite");
    }

    fn probability(&mut self, key: &str, x: f64) {
        self.check(key, x > 0.0 && x < 1.0, "must lie in (0, 1)");
    }

    fn all_finite(&mut self, key: &str, xs: &[f64]) {
        self.check(key, !xs.is_empty() && xs.iter().all(|x| x.is_finite()), "must be a non-empty list of finite numbers");
    }

    fn all_positive(&mut self, key: &str, xs: &[f64]) {
        self.check(key, !xs.is_empty() && xs.iter().all(|&x| x.is_finite() && x > 0.0), "must be a non-empty list of positive numbers");
    }

    fn increasing_times(&mut self, key: &str, ts: &[f64]) {
        self.all_positive(key, ts);
        self.check(key, ts.windows(2).all(|p| p[1] > p[0]), "must be strictly increasing");
    }

    fn finish(self) -> Result<(), CliError> {
        if self.errors.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(self.errors.join("; ")))
        }
    }
}
