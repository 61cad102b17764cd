//! Error type shared by every module of the crate.

use core::fmt;

#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A parameter failed validation; the message names the offending field.
    InvalidParams(&'static str),
    /// A drive amplitude was needed but neither an input power nor an
    /// explicit coupling override was supplied.
    MissingDrive,
    /// An iterative solve did not reach its residual target.
    NonConvergence { iterations: u32, residual: f64 },
    /// A propagated quantity crossed its divergence ceiling at time `t`.
    Divergence { t: f64, ratio: f64 },
    /// A steady-state solve was requested for a non-Hurwitz drift matrix.
    NonHurwitz { max_real: f64 },
    /// The vectorized steady-state system is too ill-conditioned to trust.
    IllConditioned { cond: f64 },
    /// The steady-state solve finished but its residual check failed.
    ResidualCheck { residual: f64 },
    /// The Routh table has a pivot too close to zero to classify.
    NearSingular { pivot: f64 },
    /// A requested time step violates the resolution rule.
    StepPolicyViolation { dt: f64, max_dt: f64 },
    /// Bessel evaluation outside the supported `(order, argument)` range.
    BesselRange { k: i32, xi: f64 },
    /// A sideband table truncation leaves too much spectral weight outside.
    Truncation { requested: i32, required: i32, residual: f64 },
    /// A covariance matrix violates physicality beyond tolerance.
    Unphysical { what: &'static str, value: f64 },
    /// A series never met the settling criterion.
    Unsettled { t_end: f64 },
    /// A series is too short for the requested window, in periods.
    ShortSeries { have: f64, need: f64 },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidParams(what) => write!(f, "invalid parameter: {what}"),
            Error::MissingDrive => {
                write!(f, "no input power and no coupling override: cannot calibrate the linearized coupling")
            }
            Error::NonConvergence { iterations, residual } => {
                write!(f, "no convergence after {iterations} iterations (residual {residual:.3e})")
            }
            Error::Divergence { t, ratio } => {
                write!(f, "divergence at t = {t:.6e} (diagonal grew {ratio:.3e}x)")
            }
            Error::NonHurwitz { max_real } => {
                write!(f, "drift matrix is not Hurwitz (max eigenvalue real part {max_real:.3e})")
            }
            Error::IllConditioned { cond } => {
                write!(f, "steady-state system ill-conditioned (cond ~ {cond:.3e})")
            }
            Error::ResidualCheck { residual } => {
                write!(f, "steady-state residual check failed (relative residual {residual:.3e})")
            }
            Error::NearSingular { pivot } => {
                write!(f, "Routh table pivot too small to classify ({pivot:.3e})")
            }
            Error::StepPolicyViolation { dt, max_dt } => {
                write!(f, "time step {dt:.6e} exceeds the allowed {max_dt:.6e}")
            }
            Error::BesselRange { k, xi } => {
                write!(f, "Bessel J_{k}({xi}) outside the supported range (|k| <= 200, |arg| <= 50)")
            }
            Error::Truncation { requested, required, residual } => {
                write!(
                    f,
                    "sideband truncation K = {requested} leaves residual weight {residual:.3e}; use K >= {required}"
                )
            }
            Error::Unphysical { what, value } => {
                write!(f, "unphysical covariance: {what} = {value:.6e}")
            }
            Error::Unsettled { t_end } => {
                write!(f, "series still transient at t = {t_end:.6e}")
            }
            Error::ShortSeries { have, need } => {
                write!(f, "series spans {have:.2} periods, {need:.2} required")
            }
        }
    }
}

impl core::error::Error for Error {}
