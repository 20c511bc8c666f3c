use thiserror::Error;

/// Errors raised by the environment, scale, path and kernel layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BroxError {
    /// A numeric parameter violates an operation precondition.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A position or window lies outside the sampled domain `[-L, L]`.
    #[error("position {position} outside domain [-{half_width}, {half_width}]")]
    Domain { position: f64, half_width: f64 },

    /// A scale-coordinate query fell outside the tabulated range. The domain
    /// truncation is too small for the request; resample at a larger `L`.
    #[error("value {requested} outside attained range [{lo}, {hi}]; enlarge the domain")]
    Range { requested: f64, lo: f64, hi: f64 },

    /// A hitting time or corridor exit was not resolved inside the domain.
    #[error("{what} not resolved within [0, {half_width}]; enlarge the domain")]
    Unresolved { what: String, half_width: f64 },

    /// Absorbing truncation lost more probability mass than allowed.
    #[error("mass deficit {deficit:.3e} exceeds cap {cap:.3e} at t = {t}")]
    Truncation { deficit: f64, cap: f64, t: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o: {0}")]
    Io(String),

    #[error("malformed input: {0}")]
    Format(String),
}

impl From<std::io::Error> for BroxError {
    fn from(e: std::io::Error) -> Self {
        BroxError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for BroxError {
    fn from(e: serde_json::Error) -> Self {
        BroxError::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, BroxError>;

pub(crate) fn require_finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(BroxError::Parameter(format!("{name} must be finite, got {v}")))
    }
}

pub(crate) fn require_positive(name: &str, v: f64) -> Result<()> {
    require_finite(name, v)?;
    if v > 0.0 {
        Ok(())
    } else {
        Err(BroxError::Parameter(format!("{name} must be positive, got {v}")))
    }
}
