//! The per-run manifest: config hash, versions, wall time and the outcome of
//! every check. Timing lives only here, so all other artifacts of a run are
//! reproducible byte for byte.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::commands::{Check, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    Fail,
    Error,
    ConfigError,
}

impl Status {
    pub fn exit_code(self) -> u8 {
        match self {
            Status::Pass => 0,
            Status::Fail | Status::Error => 1,
            Status::ConfigError => 2,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Error => "error",
            Status::ConfigError => "config error",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Versions {
    pub broxlab: &'static str,
    pub broxlab_core: &'static str,
    pub target: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub name: String,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub status: Status,
    pub exit_code: u8,
    pub config_path: Option<String>,
    /// SHA-256 of the effective config in canonical TOML form.
    pub config_hash: Option<String>,
    pub seed: Option<u64>,
    pub threads: usize,
    pub threads_used: usize,
    pub strict: bool,
    pub wall_time_s: f64,
    pub versions: Versions,
    pub checks: Vec<Check>,
    pub warnings: Vec<String>,
    pub failures: Vec<Failure>,
    pub artifacts: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            status: Status::Pass,
            exit_code: 0,
            config_path: None,
            config_hash: None,
            seed: None,
            threads: 0,
            threads_used: 0,
            strict: false,
            wall_time_s: 0.0,
            versions: Versions {
                broxlab: env!("CARGO_PKG_VERSION"),
                broxlab_core: broxlab_core::VERSION,
                target: format!("{}-{}", std::env::consts::ARCH, std::env::consts::OS),
            },
            checks: Vec::new(),
            warnings: Vec::new(),
            failures: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn fail(&mut self, status: Status, name: &str, detail: &str) {
        self.status = status;
        self.failures.push(Failure { name: name.to_string(), detail: detail.to_string() });
    }

    /// Records a completed run; in strict mode warnings count as failures.
    pub fn absorb(&mut self, outcome: Outcome, strict: bool) -> Status {
        for c in outcome.checks.iter().filter(|c| !c.pass) {
            self.failures.push(Failure { name: c.name.clone(), detail: c.detail.clone() });
        }
        if strict {
            for w in &outcome.warnings {
                self.failures.push(Failure { name: "warning".into(), detail: w.clone() });
            }
        }
        self.checks = outcome.checks;
        self.warnings = outcome.warnings;
        self.artifacts = outcome.artifacts;
        if self.failures.is_empty() {
            Status::Pass
        } else {
            Status::Fail
        }
    }

    pub fn write(&mut self, path: &Path) -> std::io::Result<()> {
        self.exit_code = self.status.exit_code();
        let text = serde_json::to_string_pretty(self).expect("manifest serialises");
        std::fs::write(path, text + "\n")
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
