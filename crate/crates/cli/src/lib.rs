//! Command-line orchestration of broxlab experiments.
//!
//! A run reads a [`config::RunConfig`], validates all of it, executes one
//! subcommand and writes the subcommand's CSV/JSON artifacts, the effective
//! config and a `manifest.json` into the output directory. The manifest is
//! written on every exit path and carries the failure list.
//!
//! Exit status: 0 when every enabled check passes, 1 on a failed check or a
//! numerical error, 2 on a configuration error.

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use broxlab_core::BroxError;
use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::manifest::{Manifest, Status};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] BroxError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Sample environments and write them with their path functionals.
    EnvSample,
    /// Scale radii and volumes, with the volume sandwich check.
    VolumeSweep,
    /// Simulate a path and a terminal-position sample.
    Simulate,
    /// Monte Carlo exit times against the Green-function oracle.
    ExitStudy,
    /// One column of the heat kernel.
    Kernel,
    /// Nash bounds, the X/Y cross-solver identity and the Gaussian shape.
    VerifyQuenched,
    /// Ensemble-averaged on-diagonal decay.
    VerifyAnnealed,
    /// Closed-form Brownian laws against environment ensembles.
    Oracles,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::EnvSample => "env-sample",
            Command::VolumeSweep => "volume-sweep",
            Command::Simulate => "simulate",
            Command::ExitStudy => "exit-study",
            Command::Kernel => "kernel",
            Command::VerifyQuenched => "verify-quenched",
            Command::VerifyAnnealed => "verify-annealed",
            Command::Oracles => "oracles",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "broxlab", version, about = "Brox diffusion laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML (or JSON) run configuration; defaults apply without one.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory [default: config `out`, then $BROXLAB_OUT, then ./broxlab-out].
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (0 = all cores), overriding the config.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Treat warnings as failures.
    #[arg(long, global = true)]
    pub strict: bool,
}

impl Cli {
    /// Config file plus command-line overrides.
    pub fn effective_config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(cmd) = &cfg.command {
            if cmd != self.command.name() {
                return Err(CliError::Config(format!(
                    "config is for `{cmd}`, not `{}`",
                    self.command.name()
                )));
            }
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(threads) = self.threads {
            cfg.threads = threads;
        }
        if self.out.is_some() {
            cfg.out = self.out.clone();
        }
        cfg.strict |= self.strict;
        cfg.solver.strict |= cfg.strict;
        Ok(cfg)
    }

    fn output_dir(&self, cfg: Option<&RunConfig>) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.and_then(|c| c.out.clone()))
            .or_else(|| std::env::var_os("BROXLAB_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("broxlab-out"))
    }
}

/// Runs one invocation end to end and returns its exit status.
pub fn run(cli: &Cli) -> ExitCode {
    let start = Instant::now();
    let mut manifest = Manifest::new(cli.command.name());
    manifest.config_path = cli.config.as_ref().map(|p| p.display().to_string());

    let cfg = cli.effective_config().and_then(|cfg| cfg.validate().map(|_| cfg));
    let out = cli.output_dir(cfg.as_ref().ok());
    let status = match cfg {
        Err(e) => {
            manifest.fail(Status::ConfigError, "config", &e.to_string());
            eprintln!("broxlab: {e}");
            Status::ConfigError
        }
        Ok(cfg) => execute(cli.command, &cfg, &out, &mut manifest),
    };
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    manifest.status = status;
    if let Err(e) = std::fs::create_dir_all(&out).and_then(|_| manifest.write(&out.join("manifest.json"))) {
        eprintln!("broxlab: cannot write manifest to {}: {e}", out.display());
        return ExitCode::from(Status::Error.exit_code());
    }
    println!("{} {}: {}", cli.command.name(), status.label(), out.join("manifest.json").display());
    ExitCode::from(status.exit_code())
}

fn execute(command: Command, cfg: &RunConfig, out: &std::path::Path, manifest: &mut Manifest) -> Status {
    manifest.seed = Some(cfg.seed);
    // Thread count and output location do not affect results, so they stay
    // out of the recorded config and its hash.
    let canonical = RunConfig { threads: 0, out: None, ..cfg.clone() }.to_toml();
    manifest.config_hash = Some(manifest::sha256_hex(canonical.as_bytes()));
    manifest.threads = cfg.threads;
    manifest.strict = cfg.strict;
    if cfg.threads > 0 {
        // Results never depend on the thread count; only the pool size changes.
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global() {
            eprintln!("broxlab: thread pool already initialised: {e}");
        }
    }
    manifest.threads_used = rayon::current_num_threads();
    let result = std::fs::create_dir_all(out)
        .map_err(CliError::from)
        .and_then(|_| std::fs::write(out.join("config.toml"), &canonical).map_err(CliError::from))
        .and_then(|_| commands::run(command, cfg, out));
    match result {
        Err(CliError::Config(msg)) => {
            manifest.fail(Status::ConfigError, "config", &msg);
            eprintln!("broxlab: configuration error: {msg}");
            Status::ConfigError
        }
        Err(e) => {
            manifest.fail(Status::Error, "error", &e.to_string());
            eprintln!("broxlab: {e}");
            Status::Error
        }
        Ok(outcome) => {
            for c in &outcome.checks {
                println!("{} {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            for w in &outcome.warnings {
                eprintln!("broxlab: warning: {w}");
            }
            manifest.absorb(outcome, cfg.strict)
        }
    }
}
