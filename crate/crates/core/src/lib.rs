//! Gaussian-state dynamics of a driven optomechanical cavity whose drive
//! detuning is modulated as `delta(t) = delta_c' + xi*nu*cos(nu*t)`.
//!
//! All dynamical quantities are expressed in units of the mechanical
//! frequency (`omega_m = 1`); [`model::reduce`] converts laboratory
//! parameters into that form. The quadrature ordering throughout is
//! `u = (x, y, q, p)` with optical quadratures first, and vacuum variance
//! 1/2 on the diagonal.
//!
//! The crate is `no_std` (with `alloc`): it holds the parameter model, the
//! sideband decomposition of the modulation, the covariance propagator and
//! its steady-state solver, stability classifiers, and the scalar
//! observables derived from covariance matrices. File formats, configs and
//! the command-line front end live in the companion `optoshake-cli` crate.

#![no_std]
#![deny(unsafe_code)]
// index loops mirror the written matrix algebra, negated comparisons like
// !(x > 0.0) are deliberate guards that also reject NaN, and reference
// values keep every digit of the independently computed number
#![allow(clippy::needless_range_loop)]
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::manual_range_contains)]
#![allow(clippy::manual_is_multiple_of)]
#![allow(clippy::slow_vector_initialization)]
#![allow(clippy::excessive_precision)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod mat4;

pub mod dynamics;
pub mod error;
pub mod meanfield;
pub mod model;
pub mod observables;
pub mod sidebands;
pub mod stability;

pub use error::Error;

pub type Result<T> = core::result::Result<T, Error>;
