//! Closed-form laws of one-dimensional Brownian motion started at 0.

use std::f64::consts::PI;

use statrs::function::erf::erfc;

use crate::error::{BroxError, Result};

fn positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(BroxError::Parameter(format!("{name} must be positive, got {v}")))
    }
}

/// Density of the first hitting time of level `b ≠ 0`:
/// `|b| (2π)^{−1/2} s^{−3/2} exp(−b²/(2s))`.
pub fn hitting_density(b: f64, s: f64) -> Result<f64> {
    positive("|b|", b.abs())?;
    positive("s", s)?;
    let b = b.abs();
    Ok(b / (2.0 * PI).sqrt() * s.powf(-1.5) * (-b * b / (2.0 * s)).exp())
}

/// `P(H_b ≤ s) = erfc(|b| / √(2s))`.
pub fn hitting_cdf(b: f64, s: f64) -> Result<f64> {
    positive("|b|", b.abs())?;
    if s <= 0.0 {
        return Ok(0.0);
    }
    if s.is_infinite() {
        return Ok(1.0);
    }
    Ok(erfc(b.abs() / (2.0 * s).sqrt()))
}

/// Density in `y` of the running maximum of a Brownian motion started at
/// `x`, stopped when it first hits `z < x`: `(x − z)/(y − z)²` on `y ≥ x`.
pub fn running_max_density(x: f64, y: f64, z: f64) -> Result<f64> {
    if !(z < x) {
        return Err(BroxError::Parameter(format!("need z < x, got z = {z}, x = {x}")));
    }
    if y < x {
        return Ok(0.0);
    }
    Ok((x - z) / ((y - z) * (y - z)))
}

/// `P(max before H_z ≥ y) = (x − z)/(y − z)` for `y ≥ x > z`.
pub fn running_max_tail(x: f64, y: f64, z: f64) -> Result<f64> {
    if !(z < x) {
        return Err(BroxError::Parameter(format!("need z < x, got z = {z}, x = {x}")));
    }
    if y <= x {
        return Ok(1.0);
    }
    Ok((x - z) / (y - z))
}

/// `P(inf before H_K ≤ −M) = K/(K + M)`.
pub fn two_sided(k: f64, m: f64) -> Result<f64> {
    positive("K", k)?;
    positive("M", m)?;
    Ok(k / (k + m))
}

/// Probability of leaving `(−a, b)` through the top: `a/(a + b)`.
pub fn corridor_top(a: f64, b: f64) -> Result<f64> {
    positive("a", a)?;
    positive("b", b)?;
    Ok(a / (a + b))
}

/// `P(Γ_t) = 1/(1 + 2 log t)`.
pub fn gamma_probability(t: f64) -> Result<f64> {
    corridor_top(1.0, 2.0 * log_t(t)?)
}

fn log_t(t: f64) -> Result<f64> {
    if !(t.is_finite() && t > std::f64::consts::E) {
        return Err(BroxError::Parameter(format!("need t > e, got {t}")));
    }
    Ok(t.ln())
}

/// Joint Laplace transform of the time spent in `[−1, 2 log log t]` before
/// leaving `(−1, 2 log t)`, on the event of a top exit:
///
/// `Q(λ) = sh(k) / (sh(k(1 + c)) + k (b − c) ch(k(1 + c)))`
/// with `k = √(2λ)`, `c = 2 log log t`, `b = 2 log t`.
pub fn occupation_laplace(lambda: f64, t: f64) -> Result<f64> {
    positive("lambda", lambda)?;
    let lt = log_t(t)?;
    let llt = lt.ln();
    if llt <= 0.0 {
        return Err(BroxError::Parameter("need log log t > 0".into()));
    }
    let k = (2.0 * lambda).sqrt();
    let c = 2.0 * llt;
    let b = 2.0 * lt;
    Ok(k.sinh() / ((k * (1.0 + c)).sinh() + k * (b - c) * (k * (1.0 + c)).cosh()))
}

/// Arcsine law: `P(∫_0^1 1{W < 0} ≤ a) = (2/π) arcsin √a`.
pub fn arcsine_cdf(a: f64) -> Result<f64> {
    if a.is_nan() {
        return Err(BroxError::Parameter("a is NaN".into()));
    }
    Ok(2.0 / PI * a.clamp(0.0, 1.0).sqrt().asin())
}

/// Evaluates a law by name. Arguments, in order:
/// `hitting_density b s`, `hitting_cdf b s`, `running_max_density x y z`,
/// `running_max_tail x y z`, `two_sided K M`, `corridor_top a b`,
/// `gamma t`, `occupation_laplace lambda t`, `arcsine a`.
pub fn closed_form_oracle(name: &str, args: &[f64]) -> Result<f64> {
    let need = |n: usize| -> Result<()> {
        if args.len() == n {
            Ok(())
        } else {
            Err(BroxError::Parameter(format!("{name} takes {n} arguments, got {}", args.len())))
        }
    };
    match name {
        "hitting_density" => need(2).and_then(|_| hitting_density(args[0], args[1])),
        "hitting_cdf" => need(2).and_then(|_| hitting_cdf(args[0], args[1])),
        "running_max_density" => need(3).and_then(|_| running_max_density(args[0], args[1], args[2])),
        "running_max_tail" => need(3).and_then(|_| running_max_tail(args[0], args[1], args[2])),
        "two_sided" => need(2).and_then(|_| two_sided(args[0], args[1])),
        "corridor_top" => need(2).and_then(|_| corridor_top(args[0], args[1])),
        "gamma" => need(1).and_then(|_| gamma_probability(args[0])),
        "occupation_laplace" => need(2).and_then(|_| occupation_laplace(args[0], args[1])),
        "arcsine" => need(1).and_then(|_| arcsine_cdf(args[0])),
        _ => Err(BroxError::Parameter(format!("unknown closed form `{name}`"))),
    }
}
