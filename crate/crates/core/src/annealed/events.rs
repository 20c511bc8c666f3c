//! Environment events used in the annealed analysis.
//!
//! With `ℓ = log t` and `ℓ₂ = log log t`, for the environment read forward
//! (and, for the tilde versions, backward from the origin):
//!
//! * `Γ`: `(−1, 2ℓ)` is left through the top.
//! * `Θ¹`: `H_{−1} ≤ K₁ℓ²`; `Θ²`: `ξ_{+,K₁ℓ²} ≤ K₂√ℓ₂`;
//!   `Θ³`: time in `[−1, 2ℓ₂]` before leaving `(−1, 2ℓ)` is at most `K₃ℓ₂³`;
//!   `Θ⁴`: time in `[−1, 0]` before `H_{ℓ/2}` is at least `1/(K₄ℓ₂)`.
//! * `Λ¹ … Λ⁵`: the valley decomposition built from `H_{−K₁ℓ₂}`, `H_{θℓ}`,
//!   `H_{2θℓ}`, `H_{−(1−2θ)ℓ}` and `ξ_{+,ℓ⁴}`. Their union is everything.
//!
//! `ξ_{+,R}` is the Hölder sup of `W` over pairs in `[0, R]` at most one
//! apart. Unresolved hitting times compare as `+∞`.

use serde::{Deserialize, Serialize};

use crate::env::{Direction, EnvironmentPath, Side, Target};
use crate::error::{BroxError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventParams {
    pub theta: f64,
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
    pub k4: f64,
}

impl Default for EventParams {
    fn default() -> Self {
        Self { theta: 0.25, k1: 8.0, k2: 8.0, k3: 16.0, k4: 8.0 }
    }
}

impl EventParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.theta > 0.0 && self.theta < 0.5) {
            return Err(BroxError::Parameter(format!("theta must lie in (0, 1/2), got {}", self.theta)));
        }
        for (n, v) in [("K1", self.k1), ("K2", self.k2), ("K3", self.k3), ("K4", self.k4)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(BroxError::Parameter(format!("{n} must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Events for one reading direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideEvents {
    pub gamma: bool,
    pub theta: [bool; 4],
    pub lambda: [bool; 5],
    /// `H_{−1,2ℓ}`.
    pub h_corridor: f64,
    /// `H_{−1}`.
    pub h_minus_one: f64,
    /// `H_{ℓ/2}`.
    pub h_half_log: f64,
    /// Occupation integrals entering `Θ³` and `Θ⁴`.
    pub occupation_theta3: f64,
    pub occupation_theta4: f64,
    /// `ξ_{±,K₁ℓ²}` and `ξ_{±,ℓ⁴}`.
    pub xi_k1: f64,
    pub xi_log4: f64,
    /// `sup_{0 ≤ z ≤ H_{θℓ}} (−W)`; `None` if `H_{θℓ}` is unresolved.
    pub r1: Option<f64>,
    /// `sup_{H_{θℓ} ≤ z ≤ H_{2θℓ}} (−W)`.
    pub r2: Option<f64>,
}

impl SideEvents {
    pub fn lambda_covers(&self) -> bool {
        self.lambda.iter().any(|&b| b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventFlags {
    pub t: f64,
    pub params: EventParams,
    pub forward: SideEvents,
    pub backward: SideEvents,
}

/// Domain needed by [`classify_events`]: `max(K₁ log²t, log⁴t)`.
pub fn required_half_width(t: f64, params: &EventParams) -> f64 {
    let lt = t.ln();
    (params.k1 * lt * lt).max(lt.powi(4))
}

pub fn classify_events(env: &EnvironmentPath, t: f64, params: &EventParams) -> Result<EventFlags> {
    params.validate()?;
    if !(t.is_finite() && t >= std::f64::consts::E.powi(2) * (1.0 - 1e-12)) {
        return Err(BroxError::Parameter(format!("need t ≥ e², got {t}")));
    }
    let need = required_half_width(t, params);
    if env.half_width() < need {
        return Err(BroxError::Range { requested: need, lo: 0.0, hi: env.half_width() });
    }
    Ok(EventFlags {
        t,
        params: *params,
        forward: side_events(env, t, params, Direction::Forward)?,
        backward: side_events(env, t, params, Direction::Backward)?,
    })
}

fn side_events(env: &EnvironmentPath, t: f64, p: &EventParams, dir: Direction) -> Result<SideEvents> {
    let lt = t.ln();
    let llt = lt.ln();
    let l = env.half_width();
    let hit = |level: f64| -> Result<f64> { Ok(env.hitting_time(Target::Level(level), dir)?.position) };
    let unresolved = |what: &str| BroxError::Unresolved { what: what.into(), half_width: l };
    // Hölder sup over unit-separated pairs on [0, R] read in `dir`.
    let xi_on = |r: f64| -> Result<f64> {
        match dir {
            Direction::Forward => env.local_holder(0.0, r, 1.0),
            Direction::Backward => env.local_holder(-r, 0.0, 1.0),
        }
    };

    let corridor = env.hitting_time(Target::Corridor { lower: -1.0, upper: 2.0 * lt }, dir)?;
    if !corridor.resolved() {
        return Err(unresolved("corridor exit H_{-1,2 log t}"));
    }
    let gamma = corridor.side == Some(Side::Upper);
    let h_minus_one = hit(-1.0)?;
    let xi_k1 = xi_on(p.k1 * lt * lt)?;
    let occupation_theta3 = env.occupation_time(-1.0, 2.0 * llt, corridor.position.min(l), dir)?;
    let h_half_log = hit(0.5 * lt)?;
    let threshold4 = 1.0 / (p.k4 * llt);
    let occupation_theta4 = env.occupation_time(-1.0, 0.0, h_half_log.min(l), dir)?;
    if !h_half_log.is_finite() && occupation_theta4 < threshold4 {
        return Err(unresolved("H_{log t / 2}"));
    }
    let theta = [
        h_minus_one <= p.k1 * lt * lt,
        xi_k1 <= p.k2 * llt.sqrt(),
        occupation_theta3 <= p.k3 * llt.powi(3),
        occupation_theta4 >= threshold4,
    ];

    let ha = hit(-p.k1 * llt)?;
    let hb = hit(p.theta * lt)?;
    let hc = hit(2.0 * p.theta * lt)?;
    let hd = hit(-(1.0 - 2.0 * p.theta) * lt)?;
    let l4 = lt.powi(4);
    let xi_log4 = xi_on(l4)?;
    let xi_ok = xi_log4 <= p.k2 * llt.sqrt();
    let lambda = [
        ha <= hb && hc <= hd && xi_ok && hc <= l4,
        hc > hd && xi_ok && hc <= l4,
        hc > l4,
        !xi_ok,
        ha > hb,
    ];
    let r1 = if hb.is_finite() { Some(-env.directed_range(0.0, hb, dir)?.0) } else { None };
    let r2 = if hb.is_finite() && hc.is_finite() { Some(-env.directed_range(hb, hc, dir)?.0) } else { None };
    Ok(SideEvents {
        gamma,
        theta,
        lambda,
        h_corridor: corridor.position,
        h_minus_one,
        h_half_log,
        occupation_theta3,
        occupation_theta4,
        xi_k1,
        xi_log4,
        r1,
        r2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_small_domains_and_times() {
        let env = EnvironmentPath::sample(1, 16.0, 0.25).unwrap();
        let p = EventParams::default();
        assert!(classify_events(&env, 5.0, &p).is_err());
        assert!(matches!(classify_events(&env, 100.0, &p), Err(BroxError::Range { .. })));
    }
}
