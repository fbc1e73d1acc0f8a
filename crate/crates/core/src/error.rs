use std::fmt;

/// Errors raised by the ffpc models and solvers.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("singular propagation: C*q + D vanished")]
    SingularPropagation,

    #[error("non-physical beam: Im(q) = {im_q:e} must be positive")]
    NonPhysicalBeam { im_q: f64 },

    #[error("invalid comparison: {0}")]
    InvalidComparison(String),

    #[error(
        "core clipping in {segment} segment at z = {z:e} m: beam radius {beam_radius:e} m exceeds core radius {core_radius:e} m"
    )]
    CoreClipping {
        segment: &'static str,
        z: f64,
        beam_radius: f64,
        core_radius: f64,
    },

    #[error("no design solution within constraints (best residual: {best})")]
    NoSolution { best: DesignResidual },

    #[error("fit failed after {iterations} iterations: {reason} (cost {cost:e})")]
    FitFailure {
        iterations: usize,
        cost: f64,
        reason: String,
    },

    #[error("unstable cavity: g1 = {g1}, g2 = {g2}, g1*g2 = {}", g1 * g2)]
    Unstable { g1: f64, g2: f64 },

    #[error("overdamped cavity: total round-trip loss {loss} is not in (0, 1)")]
    Overdamped { loss: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("inconsistent data: inferred mode matching {value} exceeds 1")]
    InconsistentData { value: f64 },

    #[error("no peaks above threshold {threshold:e}")]
    EmptySpectrum { threshold: f64 },

    #[error("no stable cavity length in the requested range")]
    NoData,

    #[error("not implemented: {0}")]
    Unimplemented(&'static str),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

/// Mismatch left after a design or calibration solve, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignResidual {
    pub waist_radius: f64,
    pub waist_position: f64,
}

impl DesignResidual {
    /// Weighted norm with 1 nm of waist radius and 10 nm of waist position per unit.
    pub fn norm(&self) -> f64 {
        ((self.waist_radius / 1e-9).powi(2) + (self.waist_position / 10e-9).powi(2)).sqrt()
    }

    pub fn converged(&self) -> bool {
        self.waist_radius.abs() < 1e-9 && self.waist_position.abs() < 10e-9
    }
}

impl fmt::Display for DesignResidual {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "dw0 = {:.4e} m, dz0 = {:.4e} m",
            self.waist_radius, self.waist_position
        )
    }
}
