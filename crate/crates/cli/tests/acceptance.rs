//! Acceptance criteria 1–9, each run through the `broxlab` binary at its
//! stated scale and tolerance. Prints one PASS/FAIL line per criterion and
//! fails when any criterion fails.

use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

struct Scratch {
    root: tempfile::TempDir,
}

impl Scratch {
    /// Runs `command` with `config`, returning the parsed manifest, the
    /// output directory and the wall time.
    fn run(&self, label: &str, command: &str, config: &str, extra: &[&str]) -> (Value, PathBuf, Duration) {
        let cfg = self.root.path().join(format!("{label}.toml"));
        std::fs::write(&cfg, config).expect("write config");
        let out = self.root.path().join(label);
        let start = Instant::now();
        let output = Command::new(env!("CARGO_BIN_EXE_broxlab"))
            .arg(command)
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .args(extra)
            .output()
            .expect("spawn broxlab");
        let elapsed = start.elapsed();
        let text = std::fs::read_to_string(out.join("manifest.json")).unwrap_or_else(|e| {
            panic!("{label}: no manifest ({e}); stderr:\n{}", String::from_utf8_lossy(&output.stderr))
        });
        (serde_json::from_str(&text).expect("manifest is JSON"), out, elapsed)
    }
}

fn check<'a>(manifest: &'a Value, name: &str) -> &'a Value {
    manifest["checks"]
        .as_array()
        .and_then(|c| c.iter().find(|c| c["name"] == name))
        .unwrap_or_else(|| panic!("check {name} missing from manifest: {manifest}"))
}

/// Every check of the run passed, within the time budget.
fn all_checks(manifest: &Value, elapsed: Duration, budget: Duration) -> Outcome {
    let checks = manifest["checks"].as_array().cloned().unwrap_or_default();
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| c["pass"] != true)
        .map(|c| format!("{}: {}", c["name"].as_str().unwrap_or("?"), c["detail"].as_str().unwrap_or("")))
        .collect();
    let in_time = elapsed <= budget;
    let mut detail = if failed.is_empty() {
        format!("{} checks pass", checks.len())
    } else {
        failed.join("; ")
    };
    detail += &format!(" [{:.1} s of {} s]", elapsed.as_secs_f64(), budget.as_secs());
    Outcome { pass: failed.is_empty() && !checks.is_empty() && manifest["status"] == "pass" && in_time, detail }
}

fn details(manifest: &Value, names: &[&str]) -> String {
    names.iter().map(|n| check(manifest, n)["detail"].as_str().unwrap_or("").to_string()).collect::<Vec<_>>().join("; ")
}

fn c1(s: &Scratch) -> Outcome {
    let (m, _, t) = s.run(
        "c1",
        "kernel",
        "[env]\nkind = \"flat\"\nhalf_width = 8.0\nh0 = 0.0078125\n[kernel]\nh = 0.0078125\nt = [1.0]\npin_tolerance = 0.01\n",
        &[],
    );
    let mut o = all_checks(&m, t, Duration::from_secs(10));
    o.detail = format!("{} [{:.1} s]", details(&m, &["flat_gaussian_pin[t=1]"]), t.as_secs_f64());
    o
}

fn c2(s: &Scratch) -> Outcome {
    let (m, _, t) = s.run("c2", "exit-study", "[exit]\nn_envs = 3\nn_paths = 10000\nse_factor = 3.0\n", &[]);
    let mut o = all_checks(&m, t, Duration::from_secs(120));
    if o.pass {
        o.detail = format!("{} [{:.1} s]", details(&m, &["exit_oracle[0]", "exit_oracle[1]", "exit_oracle[2]"]), t.as_secs_f64());
    }
    o
}

fn c3(s: &Scratch) -> Outcome {
    let (m, _, t) = s.run(
        "c3",
        "volume-sweep",
        "[env]\nhalf_width = 16.0\nh0 = 0.0625\n[volume]\nn_envs = 100\npoints = [-2.0, 0.0, 2.0]\nradii = [0.1, 1.0, 10.0]\nslack = 1e-3\n",
        &[],
    );
    let mut o = all_checks(&m, t, Duration::from_secs(60));
    let rows = m["warnings"].as_array().map_or(0, Vec::len);
    o.pass &= rows == 0;
    o.detail = format!("{}; {rows} uncovered-pair warnings [{:.1} s]", details(&m, &["volume_sandwich"]), t.as_secs_f64());
    o
}

fn c4(s: &Scratch) -> Outcome {
    let (m, _, t) = s.run(
        "c4",
        "verify-quenched",
        "[quenched]\nnash_envs = 100\nnash_radii = [0.5, 1.0, 2.0]\neqxy_envs = 0\nshape_envs = 0\n",
        &[],
    );
    let mut o = all_checks(&m, t, Duration::from_secs(600));
    o.detail = format!("{} [{:.1} s]", details(&m, &["nash_upper", "nash_lower"]), t.as_secs_f64());
    o
}

fn c5(s: &Scratch) -> Outcome {
    let (m, _, t) = s.run(
        "c5",
        "verify-quenched",
        "[quenched]\nnash_envs = 0\neqxy_envs = 10\neqxy_t = 1.0\neqxy_tolerance = 0.02\nshape_envs = 0\n",
        &[],
    );
    let mut o = all_checks(&m, t, Duration::from_secs(300));
    o.detail = format!("{} [{:.1} s]", details(&m, &["eqxy"]), t.as_secs_f64());
    o
}

fn c6(s: &Scratch) -> Outcome {
    let (m, _, t) = s.run("c6", "oracles", "[oracles]\nn_envs = 10000\n", &[]);
    all_checks(&m, t, Duration::from_secs(300))
}

fn c7(s: &Scratch) -> Outcome {
    let (m, _, t) = s.run(
        "c7",
        "verify-quenched",
        "[quenched]\nnash_envs = 0\neqxy_envs = 0\nshape_envs = 10\nshape_min_r2 = 0.95\nshape_slope = [-1.5, -0.1]\n",
        &[],
    );
    let mut o = all_checks(&m, t, Duration::from_secs(600));
    o.detail = format!("{} [{:.1} s]", details(&m, &["shape_r_squared", "shape_slope"]), t.as_secs_f64());
    o
}

fn c8(s: &Scratch) -> Outcome {
    let (m, _, t) = s.run(
        "c8",
        "verify-annealed",
        "[annealed]\nn_envs = 200\nt_min = 1e2\nt_max = 1e6\nmax_scaled_spread = 10.0\nmin_loglog_slope = -0.25\nclassify = false\n",
        &[],
    );
    let mut o = all_checks(&m, t, Duration::from_secs(3600));
    o.detail = format!(
        "{} [{:.1} s]",
        details(&m, &["annealed_decreasing", "annealed_log2_band", "annealed_loglog_slope"]),
        t.as_secs_f64()
    );
    o
}

/// Files of `dir` except the manifest, which carries wall time.
fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .expect("output directory")
        .map(|e| e.expect("entry").path())
        .filter(|p| p.file_name().is_some_and(|n| n != "manifest.json"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).expect("read")))
        .collect();
    files.sort();
    files
}

fn c9(s: &Scratch) -> Outcome {
    let runs = [
        ("oracles", "[oracles]\nn_envs = 10000\n"),
        ("volume-sweep", "[env]\nhalf_width = 16.0\nh0 = 0.0625\n[volume]\nn_envs = 20\n"),
        ("verify-quenched", "[quenched]\nnash_envs = 5\neqxy_envs = 2\nshape_envs = 2\n"),
        ("exit-study", "[exit]\nn_envs = 1\nn_paths = 2000\n"),
    ];
    let mut compared = 0;
    for (command, config) in runs {
        let (_, a, _) = s.run(&format!("c9-{command}-a"), command, config, &["--threads", "1"]);
        let (_, b, _) = s.run(&format!("c9-{command}-b"), command, config, &["--threads", "2"]);
        let (fa, fb) = (artifacts(&a), artifacts(&b));
        if fa != fb {
            let differing: Vec<_> =
                fa.iter().zip(&fb).filter(|(x, y)| x != y).map(|(x, _)| x.0.clone()).collect();
            return Outcome { pass: false, detail: format!("{command}: artifacts differ: {differing:?}") };
        }
        compared += fa.len();
    }
    Outcome { pass: true, detail: format!("{compared} artifacts identical across repeated runs with 1 and 2 threads") }
}

fn main() -> ExitCode {
    let scratch = Scratch { root: tempfile::tempdir().expect("tempdir") };
    let criteria: [(&str, fn(&Scratch) -> Outcome); 9] = [
        ("1 flat kernel pin", c1),
        ("2 exit times vs Green function", c2),
        ("3 volume sandwich", c3),
        ("4 Nash bounds", c4),
        ("5 X/Y cross-solver identity", c5),
        ("6 closed-form oracles", c6),
        ("7 Gaussian off-diagonal shape", c7),
        ("8 annealed log-squared decay", c8),
        ("9 determinism", c9),
    ];
    let mut failed = 0;
    for (name, criterion) in criteria {
        let o = criterion(&scratch);
        println!("criterion {name}: {} ({})", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} of 9 criteria pass", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
