//! Scale function, speed-measure masses and the radius/volume solvers.
//!
//! `W` is taken piecewise linear between environment nodes, and the segment
//! integrals of `e^{±W}` are evaluated in closed form for that interpolant:
//! `∫ e^W = Δ · e^{(w0+w1)/2} · sinh(d/2)/(d/2)` with `d = w1 − w0`. The
//! cumulative sums run outward from the origin with compensated addition.
//! Inverting `S` inside a segment is then also closed form.

use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::env::EnvironmentPath;
use crate::error::{require_finite, require_positive, BroxError, Result};
use crate::stats::Neumaier;

/// `sinh(y)/y`, accurate near zero.
fn sinhc(y: f64) -> f64 {
    if y.abs() < 1e-4 {
        1.0 + y * y / 6.0
    } else {
        y.sinh() / y
    }
}

/// `(e^z − 1)/z`, accurate near zero.
fn expm1c(z: f64) -> f64 {
    if z.abs() < 1e-8 {
        1.0 + 0.5 * z
    } else {
        z.exp_m1() / z
    }
}

/// Tabulated `S(x) = ∫_0^x e^W` and `M(x) = ∫_0^x e^{−W}` on the nodes of an
/// environment.
#[derive(Debug, Clone)]
pub struct ScaleTable {
    env: EnvironmentPath,
    s: Vec<f64>,
    m: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VolumeVariant {
    TwoSided,
    Plus,
    Minus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VolumeResult {
    pub x: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub delta_plus: f64,
    pub delta_minus: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "V_plus")]
    pub v_plus: f64,
    #[serde(rename = "V_minus")]
    pub v_minus: f64,
    pub lower_bound: f64,
    pub upper_bound: f64,
    /// Oscillation of `W` on `[x − ρ, x + ρ]`, `ρ = (2RV)^{1/2}`.
    pub xi: f64,
    pub radius: f64,
    /// The window was cut to `[−L, L]`.
    pub clipped: bool,
}

impl VolumeResult {
    pub fn get(&self, variant: VolumeVariant) -> f64 {
        match variant {
            VolumeVariant::TwoSided => self.v,
            VolumeVariant::Plus => self.v_plus,
            VolumeVariant::Minus => self.v_minus,
        }
    }

    /// Whether the sandwich holds with relative slack `slack`.
    pub fn sandwich_holds(&self, slack: f64) -> bool {
        self.lower_bound * (1.0 - slack) <= self.v && self.v <= self.upper_bound * (1.0 + slack)
    }
}

/// Builds the scale table of `env`.
pub fn build_scale(env: &EnvironmentPath) -> Result<ScaleTable> {
    ScaleTable::build(env)
}

impl ScaleTable {
    pub fn build(env: &EnvironmentPath) -> Result<Self> {
        let xs = env.nodes();
        let ws = env.values();
        let n = xs.len();
        let origin = xs
            .binary_search_by(|v| v.total_cmp(&0.0))
            .map_err(|_| BroxError::Parameter("environment has no node at the origin".into()))?;
        let mut s = vec![0.0; n];
        let mut m = vec![0.0; n];
        let seg = |i: usize| -> (f64, f64) {
            let dx = xs[i + 1] - xs[i];
            let mid = 0.5 * (ws[i] + ws[i + 1]);
            let c = sinhc(0.5 * (ws[i + 1] - ws[i]));
            (dx * mid.exp() * c, dx * (-mid).exp() * c)
        };
        let (mut as_, mut am) = (Neumaier::new(), Neumaier::new());
        for i in origin..n - 1 {
            let (a, b) = seg(i);
            as_.add(a);
            am.add(b);
            s[i + 1] = as_.value();
            m[i + 1] = am.value();
        }
        let (mut as_, mut am) = (Neumaier::new(), Neumaier::new());
        for i in (0..origin).rev() {
            let (a, b) = seg(i);
            as_.add(a);
            am.add(b);
            s[i] = -as_.value();
            m[i] = -am.value();
        }
        if s.iter().chain(&m).any(|v| !v.is_finite()) {
            return Err(BroxError::Numerical("scale integral overflowed".into()));
        }
        // Increments below one ulp of the running sum are lost, so only
        // monotonicity is enforced; on moderate domains the tables are strict.
        if s.windows(2).any(|p| p[1] < p[0]) || m.windows(2).any(|p| p[1] < p[0]) {
            return Err(BroxError::Numerical("scale table is decreasing".into()));
        }
        Ok(Self { env: env.clone(), s, m })
    }

    /// Builds a table on `env`, doubling the domain along the same seed
    /// lineage until `volume(x, r)` is computable or `max_half_width` is
    /// exceeded. Returns the table and the number of doublings.
    pub fn covering(env: &EnvironmentPath, x: f64, r: f64, max_half_width: f64) -> Result<(Self, usize)> {
        let mut env = env.clone();
        let mut grown = 0;
        loop {
            let table = Self::build(&env)?;
            match table.volume(x, r) {
                Ok(_) => return Ok((table, grown)),
                Err(BroxError::Range { .. } | BroxError::Domain { .. })
                    if 2.0 * env.half_width() <= max_half_width =>
                {
                    env = env.enlarged(2.0 * env.half_width())?;
                    grown += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    pub fn env(&self) -> &EnvironmentPath {
        &self.env
    }

    pub fn nodes(&self) -> &[f64] {
        self.env.nodes()
    }

    pub fn s_values(&self) -> &[f64] {
        &self.s
    }

    pub fn m_values(&self) -> &[f64] {
        &self.m
    }

    /// `[S(−L), S(L)]`.
    pub fn s_range(&self) -> (f64, f64) {
        (self.s[0], self.s[self.s.len() - 1])
    }

    fn segment(&self, x: f64) -> usize {
        let xs = self.env.nodes();
        xs.partition_point(|&v| v <= x).clamp(1, xs.len() - 1) - 1
    }

    fn check_x(&self, x: f64) -> Result<()> {
        require_finite("x", x)?;
        let l = self.env.half_width();
        if x.abs() > l * (1.0 + 1e-12) {
            return Err(BroxError::Domain { position: x, half_width: l });
        }
        Ok(())
    }

    /// `S(x)`, exact for the piecewise-linear potential.
    pub fn s(&self, x: f64) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.s_unchecked(x))
    }

    pub(crate) fn s_unchecked(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let (xs, ws) = (self.env.nodes(), self.env.values());
        let d = x - xs[i];
        let g = (ws[i + 1] - ws[i]) / (xs[i + 1] - xs[i]);
        self.s[i] + ws[i].exp() * d * expm1c(g * d)
    }

    /// `M(x) = ∫_0^x e^{−W}`.
    pub fn m(&self, x: f64) -> Result<f64> {
        self.check_x(x)?;
        Ok(self.m_unchecked(x))
    }

    pub(crate) fn m_unchecked(&self, x: f64) -> f64 {
        let i = self.segment(x);
        let (xs, ws) = (self.env.nodes(), self.env.values());
        let d = x - xs[i];
        let g = (ws[i + 1] - ws[i]) / (xs[i + 1] - xs[i]);
        self.m[i] + (-ws[i]).exp() * d * expm1c(-g * d)
    }

    /// Interpolated potential.
    pub fn w(&self, x: f64) -> f64 {
        self.env.interp(x)
    }

    /// `S^{-1}(y)`.
    pub fn inverse(&self, y: f64) -> Result<f64> {
        require_finite("y", y)?;
        let (lo, hi) = self.s_range();
        if y < lo || y > hi {
            return Err(BroxError::Range { requested: y, lo, hi });
        }
        let i = self.s.partition_point(|&v| v <= y).clamp(1, self.s.len() - 1) - 1;
        Ok(self.invert_in(i, y).0)
    }

    /// Inverts inside segment `i`; returns `(x, W(x))`.
    #[inline]
    fn invert_in(&self, i: usize, y: f64) -> (f64, f64) {
        let (xs, ws) = (self.env.nodes(), self.env.values());
        let dx = xs[i + 1] - xs[i];
        let g = (ws[i + 1] - ws[i]) / dx;
        let r = (y - self.s[i]) * (-ws[i]).exp();
        let gr = g * r;
        let d = if gr.abs() < 1e-8 { r * (1.0 - 0.5 * gr) } else { gr.ln_1p() / g };
        let d = d.clamp(0.0, dx);
        (xs[i] + d, ws[i] + g * d)
    }

    /// `S^{-1}(y)` and `W(S^{-1}(y))`, walking from the segment `hint` and
    /// updating it. `None` when `y` is outside the tabulated range.
    #[inline]
    pub fn inverse_with_hint(&self, y: f64, hint: &mut usize) -> Option<(f64, f64)> {
        let n = self.s.len();
        if !(y >= self.s[0] && y <= self.s[n - 1]) {
            return None;
        }
        let mut i = (*hint).min(n - 2);
        let mut steps = 0;
        while y < self.s[i] {
            i -= 1;
            steps += 1;
            if steps > 64 {
                i = self.s.partition_point(|&v| v <= y).clamp(1, n - 1) - 1;
                break;
            }
        }
        while y > self.s[i + 1] {
            i += 1;
            steps += 1;
            if steps > 64 {
                i = self.s.partition_point(|&v| v <= y).clamp(1, n - 1) - 1;
                break;
            }
        }
        *hint = i;
        Some(self.invert_in(i, y))
    }

    /// `(δ₊(x, R), δ₋(x, R))`.
    pub fn delta_radii(&self, x: f64, r: f64) -> Result<(f64, f64)> {
        require_positive("R", r)?;
        let sx = self.s(x)?;
        let xp = self.inverse(sx + r)?;
        let xm = self.inverse(sx - r)?;
        Ok((xp - x, x - xm))
    }

    /// Volumes `V(S(x), R)` and the two sides of the sandwich
    /// `2R e^{−2W(x)} e^{∓2ξ(x, (2RV)^{1/2})}`.
    pub fn volume(&self, x: f64, r: f64) -> Result<VolumeResult> {
        let (dp, dm) = self.delta_radii(x, r)?;
        let mx = self.m_unchecked(x);
        let v_plus = self.m_unchecked(x + dp) - mx;
        let v_minus = mx - self.m_unchecked(x - dm);
        let v = v_plus + v_minus;
        let radius = (2.0 * r * v).sqrt();
        // The window is cut at the domain edge when it sticks out. It still
        // contains `[x − δ₋, x + δ₊]`, which is all the bounds need.
        let l = self.env.half_width();
        let (a, b) = ((x - radius).max(-l), (x + radius).min(l));
        let clipped = a > x - radius || b < x + radius;
        let (lo, hi) = self.env.range_on(a, b)?;
        let xi = hi - lo;
        let base = 2.0 * r * (-2.0 * self.w(x)).exp();
        Ok(VolumeResult {
            x,
            r,
            delta_plus: dp,
            delta_minus: dm,
            v,
            v_plus,
            v_minus,
            lower_bound: base * (-2.0 * xi).exp(),
            upper_bound: base * (2.0 * xi).exp(),
            xi,
            radius,
            clipped,
        })
    }

    /// Volume without the sandwich bounds (no oscillation window needed).
    pub fn volume_only(&self, x: f64, r: f64, variant: VolumeVariant) -> Result<f64> {
        let (dp, dm) = self.delta_radii(x, r)?;
        let mx = self.m_unchecked(x);
        Ok(match variant {
            VolumeVariant::TwoSided => self.m_unchecked(x + dp) - self.m_unchecked(x - dm),
            VolumeVariant::Plus => self.m_unchecked(x + dp) - mx,
            VolumeVariant::Minus => mx - self.m_unchecked(x - dm),
        })
    }

    /// Root of `coefficient · R · V(x, R) = t`.
    pub fn solve_r_of_t(&self, x: f64, t: f64, variant: VolumeVariant, coefficient: f64) -> Result<f64> {
        require_positive("t", t)?;
        require_positive("coefficient", coefficient)?;
        let f = |r: f64| -> Result<f64> { Ok(coefficient * r * self.volume_only(x, r, variant)?) };
        let mut hi = (t / (2.0 * coefficient)).sqrt().max(1e-12);
        let mut lo = hi;
        let mut fh = f(hi)?;
        if fh < t {
            loop {
                lo = hi;
                hi *= 2.0;
                fh = f(hi)?;
                if fh >= t {
                    break;
                }
            }
        } else {
            loop {
                hi = lo;
                lo *= 0.5;
                if f(lo)? < t {
                    break;
                }
                if lo < 1e-300 {
                    return Err(BroxError::Numerical("R(t) bracket collapsed".into()));
                }
            }
        }
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            let fm = f(mid)?;
            if ((fm - t) / t).abs() <= 1e-10 || hi - lo <= 1e-15 * hi {
                return Ok(mid);
            }
            if fm < t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

pub fn write_volume_csv<P: AsRef<Path>>(path: P, rows: &[VolumeResult]) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "x,R,delta_plus,delta_minus,V,V_plus,V_minus,lb,ub")?;
    for r in rows {
        writeln!(
            out,
            "{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.x, r.r, r.delta_plus, r.delta_minus, r.v, r.v_plus, r.v_minus, r.lower_bound, r.upper_bound
        )?;
    }
    out.flush()?;
    Ok(())
}
