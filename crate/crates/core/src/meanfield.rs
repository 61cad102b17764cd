//! Classical (first-moment) amplitudes of the cavity field and the mirror:
//! the damped self-consistent solver that fixes the working point behind
//! the linearized model, and an explicit integrator for their driven time
//! evolution.

use alloc::vec::Vec;
use num_complex::Complex64;
// float math for no_std builds; test builds pull std into the crate graph
// and its inherent methods shadow the trait
#[allow(unused_imports)]
use num_traits::Float;

use crate::dynamics::{whole_periods, StepGrid, StepPolicy};
use crate::model::{PhysicalParams, ReducedParams};
use crate::{Error, Result};

/// Classical amplitudes: cavity field `alpha` and mirror amplitude `beta`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldState {
    pub alpha: Complex64,
    pub beta: Complex64,
}

impl MeanFieldState {
    pub fn zero() -> Self {
        MeanFieldState { alpha: Complex64::new(0.0, 0.0), beta: Complex64::new(0.0, 0.0) }
    }
}

/// Steady amplitude of a damped driven mode: `-i E / (kappa/2 + i delta)`.
/// Units cancel, so this works in laboratory and reduced units alike.
pub fn cavity_response(drive: f64, kappa: f64, detuning: f64) -> Complex64 {
    -Complex64::i() * drive / Complex64::new(0.5 * kappa, detuning)
}

fn mirror_response(radiation_force: f64, gamma: f64, omega: f64) -> Complex64 {
    Complex64::i() * radiation_force / Complex64::new(0.5 * gamma, omega)
}

/// Self-consistent working point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyMeanFields {
    pub state: MeanFieldState,
    /// Detuning including the static radiation-pressure shift, in the same
    /// units as the input parameters.
    pub delta_c_prime: f64,
    /// Linearized coupling `g alpha`.
    pub coupling: Complex64,
    pub iterations: u32,
    pub residual: f64,
}

const MAX_ITERATIONS: u32 = 10_000;

/// Solves the coupled steady-state equations for the cavity amplitude, the
/// static mirror displacement and the shifted detuning by damped
/// fixed-point iteration (equal blend of old and new detuning each round).
///
/// The iteration follows the branch continuously connected to the undriven
/// cavity. Where the response is multivalued the other branches are not
/// reachable this way; working points on them have to be specified through
/// a coupling override instead. Near a fold, or past it, the iteration
/// fails with [`Error::NonConvergence`].
pub fn steady_mean_fields(params: &PhysicalParams, drive: f64) -> Result<SteadyMeanFields> {
    params.validate()?;
    if !drive.is_finite() || drive < 0.0 {
        return Err(Error::InvalidParams("drive amplitude must be finite and nonnegative"));
    }
    let w = params.omega_m;
    let delta_c = params.delta_c();
    let scale = w.max(delta_c.abs()).max(params.kappa);
    let mut x = delta_c;
    let mut residual = f64::INFINITY;
    for it in 1..=MAX_ITERATIONS {
        let alpha = cavity_response(drive, params.kappa, x);
        let beta = mirror_response(params.g * alpha.norm_sqr(), params.gamma, w);
        let next = delta_c - 2.0 * params.g * beta.re;
        if !next.is_finite() {
            return Err(Error::NonConvergence { iterations: it, residual });
        }
        residual = (next - x).abs() / scale.max(x.abs());
        if residual <= 1e-12 {
            let alpha = cavity_response(drive, params.kappa, next);
            let beta = mirror_response(params.g * alpha.norm_sqr(), params.gamma, w);
            return Ok(SteadyMeanFields {
                state: MeanFieldState { alpha, beta },
                delta_c_prime: next,
                coupling: params.g * alpha,
                iterations: it,
                residual,
            });
        }
        x = 0.5 * (x + next);
    }
    Err(Error::NonConvergence { iterations: MAX_ITERATIONS, residual })
}

/// Time derivatives of the classical amplitudes in reduced units, shared
/// with the covariance integrator that tracks them alongside the state.
#[allow(clippy::too_many_arguments)]
pub(crate) fn rhs(
    alpha: Complex64,
    beta: Complex64,
    t: f64,
    delta_c: f64,
    g: f64,
    drive: f64,
    kappa: f64,
    gamma: f64,
    xi: f64,
    nu: f64,
) -> (Complex64, Complex64) {
    let delta = delta_c + xi * nu * (nu * t).cos() - 2.0 * g * beta.re;
    let i = Complex64::i();
    let d_alpha = -(i * delta + 0.5 * kappa) * alpha - i * drive;
    let d_beta = -(i + 0.5 * gamma) * beta + i * g * alpha.norm_sqr();
    (d_alpha, d_beta)
}

/// Sampled classical trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanFieldTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<MeanFieldState>,
    pub dt: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanFieldOptions {
    /// Keep every n-th step (the initial and final states are always kept).
    pub store_stride: u64,
    /// Amplitude ceiling as a multiple of the expected scale.
    pub ceiling_factor: f64,
}

impl Default for MeanFieldOptions {
    fn default() -> Self {
        MeanFieldOptions { store_stride: 1, ceiling_factor: 1e12 }
    }
}

/// Integrates the classical equations in reduced units over whole
/// bookkeeping periods. The bare detuning and single-photon coupling fall
/// back to the shifted detuning and zero when the parameters carry no
/// calibration context; the drive amplitude is mandatory.
pub fn integrate_mean_fields(
    params: &ReducedParams,
    initial: MeanFieldState,
    t_span: (f64, f64),
    policy: &StepPolicy,
    options: &MeanFieldOptions,
) -> Result<MeanFieldTrajectory> {
    params.validate()?;
    let g = params.g.unwrap_or(0.0);
    let delta_c = params.delta_c.unwrap_or(params.delta_c_prime);
    let drive = params.drive.ok_or(Error::MissingDrive)?;
    if !initial.alpha.is_finite() || !initial.beta.is_finite() {
        return Err(Error::InvalidParams("initial amplitudes must be finite"));
    }
    let grid = StepGrid::resolve(params, policy)?;
    let periods = whole_periods(t_span, grid.period)?;
    let n_total = periods * grid.steps_per_period;
    let dt = grid.dt;
    let stride = options.store_stride.max(1);

    let mut scale = initial.alpha.norm().max(initial.beta.norm()).max(1.0);
    if params.kappa > 0.0 {
        scale = scale.max(drive / (0.5 * params.kappa));
    } else {
        scale = scale.max(drive);
    }
    let ceiling = options.ceiling_factor * scale;

    let f = |a: Complex64, b: Complex64, t: f64| {
        rhs(a, b, t, delta_c, g, drive, params.kappa, params.gamma, params.xi, params.nu)
    };

    let mut state = initial;
    let mut times = Vec::new();
    let mut states = Vec::new();
    times.push(t_span.0);
    states.push(state);
    for k in 1..=n_total {
        let t = t_span.0 + (k - 1) as f64 * dt;
        let (a, b) = (state.alpha, state.beta);
        let (ka1, kb1) = f(a, b, t);
        let (ka2, kb2) = f(a + 0.5 * dt * ka1, b + 0.5 * dt * kb1, t + 0.5 * dt);
        let (ka3, kb3) = f(a + 0.5 * dt * ka2, b + 0.5 * dt * kb2, t + 0.5 * dt);
        let (ka4, kb4) = f(a + dt * ka3, b + dt * kb3, t + dt);
        state.alpha = a + dt / 6.0 * (ka1 + 2.0 * (ka2 + ka3) + ka4);
        state.beta = b + dt / 6.0 * (kb1 + 2.0 * (kb2 + kb3) + kb4);

        let t_now = t_span.0 + k as f64 * dt;
        let peak = state.alpha.norm().max(state.beta.norm());
        if !peak.is_finite() || peak > ceiling {
            return Err(Error::Divergence { t: t_now, ratio: peak / scale });
        }
        if k % stride == 0 || k == n_total {
            times.push(t_now);
            states.push(state);
        }
    }
    Ok(MeanFieldTrajectory { times, states, dt })
}
