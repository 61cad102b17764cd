//! Covariance dynamics of the linearized model.
//!
//! The state is the symmetric 4x4 covariance matrix `V` of the quadratures
//! `(x, y, q, p)` (cavity pair first, mechanical pair second, vacuum
//! variance 1/2). It evolves as `dV/dt = A(t) V + V A(t)^T + D` with the
//! drift `A(t)` carrying the modulated detuning and the diffusion `D` the
//! input noise. This module builds those matrices, integrates the equation
//! with a fixed-step fourth-order Runge-Kutta scheme locked to the
//! modulation period, and solves the time-independent steady state through
//! the vectorized linear system.

use alloc::vec::Vec;
use num_complex::Complex64;
// float math for no_std builds; test builds pull std into the crate graph
// and its inherent methods shadow the trait
#[allow(unused_imports)]
use num_traits::Float;

use crate::mat4::{self, M4};
use crate::meanfield::MeanFieldState;
use crate::model::ReducedParams;
use crate::{Error, Result};

/// Drift matrix of the first-moment/covariance equations.
pub type DriftMatrix = [[f64; 4]; 4];
/// Diffusion (input noise) matrix.
pub type DiffusionMatrix = [[f64; 4];4];

/// Symplectic form for the ordering `(x, y, q, p)`.
const OMEGA: M4 = [
    [0.0, 1.0, 0.0, 0.0],
    [-1.0, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 1.0],
    [0.0, 0.0, -1.0, 0.0],
];

fn drift_from(kappa: f64, gamma: f64, delta: f64, coupling: Complex64) -> M4 {
    let (gre, gim) = (coupling.re, coupling.im);
    [
        [-0.5 * kappa, delta, -2.0 * gim, 0.0],
        [-delta, -0.5 * kappa, 2.0 * gre, 0.0],
        [0.0, 0.0, -0.5 * gamma, 1.0],
        [2.0 * gre, 2.0 * gim, -1.0, -0.5 * gamma],
    ]
}

/// Drift matrix at time `t`, with the instantaneous detuning
/// `delta_c_prime + xi nu cos(nu t)`.
pub fn build_drift(params: &ReducedParams, t: f64) -> DriftMatrix {
    drift_from(params.kappa, params.gamma, params.detuning(t), params.coupling)
}

/// Diffusion matrix: `diag(kappa/2, kappa/2, gamma(2 n_th + 1)/2, ...)`.
pub fn build_diffusion(params: &ReducedParams) -> DiffusionMatrix {
    let mech = 0.5 * params.gamma * (2.0 * params.n_th + 1.0);
    let mut d = mat4::ZERO;
    d[0][0] = 0.5 * params.kappa;
    d[1][1] = 0.5 * params.kappa;
    d[2][2] = mech;
    d[3][3] = mech;
    d
}

/// Symmetric covariance matrix of `(x, y, q, p)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceMatrix(pub [[f64; 4]; 4]);

impl CovarianceMatrix {
    /// Vacuum state: every quadrature at variance 1/2, no correlations.
    pub fn vacuum() -> Self {
        initial_covariance(0.0)
    }

    /// Largest `|V_ij - V_ji|`; zero for exactly symmetric storage.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..4 {
            for j in i + 1..4 {
                worst = worst.max((self.0[i][j] - self.0[j][i]).abs());
            }
        }
        worst
    }

    pub fn symmetrized(&self) -> Self {
        CovarianceMatrix(mat4::symmetrize(&self.0))
    }

    /// Smallest eigenvalue of `V + (i/2) Omega`. Nonnegative (up to
    /// roundoff) exactly when `V` is a valid quantum covariance matrix;
    /// zero marks a pure state.
    pub fn physicality_margin(&self) -> f64 {
        let re = mat4::symmetrize(&self.0);
        let mut im = mat4::ZERO;
        for i in 0..4 {
            for j in 0..4 {
                im[i][j] = 0.5 * OMEGA[i][j];
            }
        }
        mat4::hermitian_min_eigenvalue(&re, &im)
    }

    pub fn is_physical(&self, tolerance: f64) -> bool {
        self.physicality_margin() >= -tolerance
    }
}

/// Uncorrelated initial state: cavity in vacuum, mechanics thermal with
/// occupation `n_th`.
pub fn initial_covariance(n_th: f64) -> CovarianceMatrix {
    let mut v = mat4::ZERO;
    v[0][0] = 0.5;
    v[1][1] = 0.5;
    v[2][2] = n_th + 0.5;
    v[3][3] = n_th + 0.5;
    CovarianceMatrix(v)
}

/// How the integration grid is chosen. The step always divides the
/// bookkeeping period exactly, so period boundaries are grid points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepPolicy {
    /// Steps per period when no explicit step is given.
    pub steps_per_period: u32,
    /// Upper bound on the step size; the grid refines it so that an integer
    /// number of steps covers one period.
    pub dt_override: Option<f64>,
}

impl Default for StepPolicy {
    fn default() -> Self {
        StepPolicy { steps_per_period: 64, dt_override: None }
    }
}

/// Hard ceiling on the step: 1/64 of the mechanical period. Coarser grids
/// cannot resolve the mechanical rotation.
pub const MAX_STEP: f64 = core::f64::consts::TAU / 64.0;

/// Resolved integration grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepGrid {
    /// Step size.
    pub dt: f64,
    /// Steps per bookkeeping period.
    pub steps_per_period: u64,
    /// Bookkeeping period: the modulation period when modulation is on,
    /// otherwise one mechanical period.
    pub period: f64,
}

impl StepGrid {
    pub fn resolve(params: &ReducedParams, policy: &StepPolicy) -> Result<Self> {
        let period = if params.xi > 0.0 { params.period() } else { core::f64::consts::TAU };
        let mut n = match policy.dt_override {
            Some(dt) => {
                if !dt.is_finite() || dt <= 0.0 || dt > MAX_STEP {
                    return Err(Error::StepPolicyViolation { dt, max_dt: MAX_STEP });
                }
                (period / dt).ceil() as u64
            }
            None => policy.steps_per_period.max(1) as u64,
        };
        // enforce the mechanical-resolution ceiling on either route
        let floor_n = (period / MAX_STEP).ceil() as u64;
        n = n.max(floor_n).max(1);
        Ok(StepGrid { dt: period / n as f64, steps_per_period: n, period })
    }
}

fn covariance_rhs(a: &M4, v: &M4, d: &M4) -> M4 {
    let m = mat4::mul(a, v);
    let mut out = *d;
    for i in 0..4 {
        for j in 0..4 {
            out[i][j] += m[i][j] + m[j][i];
        }
    }
    out
}

/// Stepwise covariance integrator. One call to [`step`](Self::step)
/// advances by exactly one grid step; time is reconstructed as
/// `t0 + index * dt` so long runs accumulate no additive drift.
pub struct CovarianceIntegrator<'a> {
    params: &'a ReducedParams,
    grid: StepGrid,
    diffusion: M4,
    v: M4,
    t0: f64,
    step_index: u64,
    ceiling: f64,
    base_scale: f64,
}

impl<'a> CovarianceIntegrator<'a> {
    pub fn new(
        params: &'a ReducedParams,
        initial: CovarianceMatrix,
        t0: f64,
        policy: &StepPolicy,
        ceiling_factor: f64,
    ) -> Result<Self> {
        params.validate()?;
        if !(ceiling_factor > 1.0) {
            return Err(Error::InvalidParams("ceiling factor must exceed 1"));
        }
        let mut base_scale = 1.0_f64;
        for i in 0..4 {
            for j in 0..4 {
                let x = initial.0[i][j];
                if !x.is_finite() {
                    return Err(Error::Unphysical { what: "initial covariance entry", value: x });
                }
            }
            if initial.0[i][i] < 0.0 {
                return Err(Error::Unphysical {
                    what: "initial covariance diagonal",
                    value: initial.0[i][i],
                });
            }
            base_scale = base_scale.max(initial.0[i][i]);
        }
        let grid = StepGrid::resolve(params, policy)?;
        Ok(CovarianceIntegrator {
            params,
            grid,
            diffusion: build_diffusion(params),
            v: mat4::symmetrize(&initial.0),
            t0,
            step_index: 0,
            ceiling: ceiling_factor * base_scale,
            base_scale,
        })
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.step_index as f64 * self.grid.dt
    }

    pub fn covariance(&self) -> CovarianceMatrix {
        CovarianceMatrix(self.v)
    }

    pub fn grid(&self) -> StepGrid {
        self.grid
    }

    pub fn step_index(&self) -> u64 {
        self.step_index
    }

    /// Advances one step. Fails with [`Error::Divergence`] when a variance
    /// exceeds the ceiling or stops being finite.
    pub fn step(&mut self) -> Result<()> {
        let dt = self.grid.dt;
        let t = self.time();
        let a_start = build_drift(self.params, t);
        let a_mid = build_drift(self.params, t + 0.5 * dt);
        let a_end = build_drift(self.params, t + dt);

        let k1 = covariance_rhs(&a_start, &self.v, &self.diffusion);
        let v2 = mat4::add_scaled(&self.v, &k1, 0.5 * dt);
        let k2 = covariance_rhs(&a_mid, &v2, &self.diffusion);
        let v3 = mat4::add_scaled(&self.v, &k2, 0.5 * dt);
        let k3 = covariance_rhs(&a_mid, &v3, &self.diffusion);
        let v4 = mat4::add_scaled(&self.v, &k3, dt);
        let k4 = covariance_rhs(&a_end, &v4, &self.diffusion);

        let mut v = self.v;
        let w = dt / 6.0;
        for i in 0..4 {
            for j in 0..4 {
                v[i][j] += w * (k1[i][j] + 2.0 * (k2[i][j] + k3[i][j]) + k4[i][j]);
            }
        }
        // the exact flow preserves symmetry; averaging off-diagonal pairs
        // removes the roundoff skew before it can feed back
        self.v = mat4::symmetrize(&v);
        self.step_index += 1;

        let mut peak = 0.0_f64;
        for i in 0..4 {
            peak = peak.max(self.v[i][i].abs());
        }
        if !peak.is_finite() || peak > self.ceiling {
            return Err(Error::Divergence { t: self.time(), ratio: peak / self.base_scale });
        }
        Ok(())
    }
}

/// Which integration samples a trace keeps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StorePolicy {
    /// Number of trailing periods stored at full step resolution.
    pub tail_periods: u32,
    /// Store every step of the whole run (overrides thinning).
    pub every_step: bool,
}

impl Default for StorePolicy {
    fn default() -> Self {
        StorePolicy { tail_periods: 2, every_step: false }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegrationOptions {
    /// Divergence ceiling as a multiple of the initial variance scale.
    pub ceiling_factor: f64,
    pub store: StorePolicy,
}

impl Default for IntegrationOptions {
    fn default() -> Self {
        IntegrationOptions { ceiling_factor: 1e12, store: StorePolicy::default() }
    }
}

/// Result of a covariance integration. Samples are thinned: the initial
/// point, every period boundary, the trailing periods at full resolution
/// and the final point are kept.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationTrace {
    pub times: Vec<f64>,
    pub covariances: Vec<CovarianceMatrix>,
    pub params: ReducedParams,
    pub dt: f64,
    pub steps_per_period: u64,
    pub method: &'static str,
    /// Physicality margin of the final covariance matrix.
    pub final_physicality: f64,
}

pub(crate) fn whole_periods(span: (f64, f64), period: f64) -> Result<u64> {
    let (t0, t1) = span;
    if !t0.is_finite() || !t1.is_finite() || t1 <= t0 {
        return Err(Error::InvalidParams("time span must be finite with t1 > t0"));
    }
    // round the span up to whole periods, with slack so that spans intended
    // as N periods do not pick up an extra one through roundoff
    let periods = ((t1 - t0) / period - 1e-9).ceil().max(1.0);
    Ok(periods as u64)
}

/// Integrates `dV/dt = A(t) V + V A^T(t) + D` over `t_span`, rounded up to
/// a whole number of bookkeeping periods.
pub fn integrate_covariance(
    params: &ReducedParams,
    initial: CovarianceMatrix,
    t_span: (f64, f64),
    policy: &StepPolicy,
    options: &IntegrationOptions,
) -> Result<SimulationTrace> {
    let mut stepper =
        CovarianceIntegrator::new(params, initial, t_span.0, policy, options.ceiling_factor)?;
    let grid = stepper.grid();
    let periods = whole_periods(t_span, grid.period)?;
    let n_per = grid.steps_per_period;
    let n_total = periods * n_per;
    let tail_start = n_total.saturating_sub(options.store.tail_periods as u64 * n_per);

    let mut times = Vec::new();
    let mut covariances = Vec::new();
    times.push(stepper.time());
    covariances.push(stepper.covariance());
    for k in 1..=n_total {
        stepper.step()?;
        if options.store.every_step || k % n_per == 0 || k > tail_start {
            times.push(stepper.time());
            covariances.push(stepper.covariance());
        }
    }
    let last = *covariances.last().expect("at least the initial sample");
    Ok(SimulationTrace {
        times,
        covariances,
        params: params.clone(),
        dt: grid.dt,
        steps_per_period: n_per,
        method: "rk4",
        final_physicality: last.physicality_margin(),
    })
}

/// Steady-state covariance of a time-independent drift: solves
/// `A V + V A^T + D = 0` through the 16x16 vectorized system with partial
/// pivoting and iterative refinement, then verifies the residual.
pub fn lyapunov_steady(a: &DriftMatrix, d: &DiffusionMatrix) -> Result<CovarianceMatrix> {
    for i in 0..4 {
        for j in 0..4 {
            if !a[i][j].is_finite() || !d[i][j].is_finite() {
                return Err(Error::InvalidParams("drift and diffusion must be finite"));
            }
        }
    }
    let mut max_real = f64::NEG_INFINITY;
    for e in mat4::eigenvalues(a) {
        max_real = max_real.max(e.re);
    }
    if max_real >= 0.0 {
        return Err(Error::NonHurwitz { max_real });
    }

    // (A V + V A^T)_{ij} = sum_k A_ik V_kj + A_jk V_ik, vectorized with
    // row index 4i+j and column index 4k+l
    let mut m = [[0.0_f64; 16]; 16];
    for i in 0..4 {
        for j in 0..4 {
            for k in 0..4 {
                m[4 * i + j][4 * k + j] += a[i][k];
                m[4 * i + j][4 * i + k] += a[j][k];
            }
        }
    }
    let mut b = [0.0_f64; 16];
    for i in 0..4 {
        for j in 0..4 {
            b[4 * i + j] = -d[i][j];
        }
    }

    let lu = match mat4::Lu16::factor(&m) {
        Some(lu) => lu,
        None => return Err(Error::IllConditioned { cond: f64::INFINITY }),
    };

    let norm_m = mat4::inf_norm16(&m);
    let mut inv_row_sums = [0.0_f64; 16];
    for col in 0..16 {
        let mut e = [0.0_f64; 16];
        e[col] = 1.0;
        let x = lu.solve(&e);
        for row in 0..16 {
            inv_row_sums[row] += x[row].abs();
        }
    }
    let mut norm_inv = 0.0_f64;
    for s in inv_row_sums {
        norm_inv = norm_inv.max(s);
    }
    let cond = norm_m * norm_inv;
    if !cond.is_finite() || cond > 1e12 {
        return Err(Error::IllConditioned { cond });
    }

    let mut x = lu.solve(&b);
    // a couple of refinement passes push the backward error to machine
    // level even when the system is moderately ill conditioned
    for _ in 0..3 {
        let mut r = b;
        for i in 0..16 {
            for j in 0..16 {
                r[i] -= m[i][j] * x[j];
            }
        }
        let mut rmax = 0.0_f64;
        for v in r {
            rmax = rmax.max(v.abs());
        }
        if rmax <= 1e-15 * norm_m {
            break;
        }
        let dx = lu.solve(&r);
        for i in 0..16 {
            x[i] += dx[i];
        }
    }

    let mut v = mat4::ZERO;
    for i in 0..4 {
        for j in 0..4 {
            v[i][j] = x[4 * i + j];
        }
    }
    let v = mat4::symmetrize(&v);

    let mut residual = 0.0_f64;
    let av = mat4::mul(a, &v);
    for i in 0..4 {
        for j in 0..4 {
            residual = residual.max((av[i][j] + av[j][i] + d[i][j]).abs());
        }
    }
    let scale = mat4::max_abs(d).max(mat4::max_abs(a) * mat4::max_abs(&v)).max(f64::MIN_POSITIVE);
    let relative = residual / scale;
    if relative > 1e-10 {
        return Err(Error::ResidualCheck { residual: relative });
    }
    Ok(CovarianceMatrix(v))
}

#[allow(clippy::too_many_arguments)]
fn mean_field_rhs(
    state: (Complex64, Complex64),
    t: f64,
    delta_c: f64,
    g: f64,
    drive: f64,
    kappa: f64,
    gamma: f64,
    xi: f64,
    nu: f64,
) -> (Complex64, Complex64) {
    crate::meanfield::rhs(state.0, state.1, t, delta_c, g, drive, kappa, gamma, xi, nu)
}

/// Covariance integration with the linearized coupling following the
/// instantaneous classical fields instead of staying frozen at its
/// calibration value: `G(t) = g alpha(t)`, and the detuning follows the
/// moving mirror. The classical fields and the covariance advance in one
/// Runge-Kutta scheme so every stage sees consistent coefficients.
///
/// Requires parameters produced by a physical calibration, since the
/// single-photon coupling, bare detuning and drive amplitude are needed.
pub fn integrate_covariance_dynamic_g(
    params: &ReducedParams,
    initial: CovarianceMatrix,
    mean_initial: MeanFieldState,
    t_span: (f64, f64),
    policy: &StepPolicy,
    options: &IntegrationOptions,
) -> Result<(SimulationTrace, MeanFieldState)> {
    params.validate()?;
    let g = params.g.ok_or(Error::InvalidParams(
        "dynamic coupling needs the single-photon coupling from a physical calibration",
    ))?;
    let delta_c = params.delta_c.ok_or(Error::InvalidParams(
        "dynamic coupling needs the bare detuning from a physical calibration",
    ))?;
    let drive = params.drive.ok_or(Error::MissingDrive)?;

    let grid = StepGrid::resolve(params, policy)?;
    let periods = whole_periods(t_span, grid.period)?;
    let n_per = grid.steps_per_period;
    let n_total = periods * n_per;
    let tail_start = n_total.saturating_sub(options.store.tail_periods as u64 * n_per);
    let dt = grid.dt;
    let diffusion = build_diffusion(params);

    let mut base_scale = 1.0_f64;
    for i in 0..4 {
        base_scale = base_scale.max(initial.0[i][i]);
    }
    let ceiling = options.ceiling_factor * base_scale;

    let mf = |s: (Complex64, Complex64), t: f64| {
        mean_field_rhs(s, t, delta_c, g, drive, params.kappa, params.gamma, params.xi, params.nu)
    };
    let drift = |s: (Complex64, Complex64), t: f64| {
        let delta = delta_c + params.xi * params.nu * (params.nu * t).cos() - 2.0 * g * s.1.re;
        drift_from(params.kappa, params.gamma, delta, Complex64::new(g, 0.0) * s.0)
    };

    let mut v = mat4::symmetrize(&initial.0);
    let mut s = (mean_initial.alpha, mean_initial.beta);
    let mut times = Vec::new();
    let mut covariances = Vec::new();
    times.push(t_span.0);
    covariances.push(CovarianceMatrix(v));

    for k in 1..=n_total {
        let t = t_span.0 + (k - 1) as f64 * dt;

        let s1 = mf(s, t);
        let kv1 = covariance_rhs(&drift(s, t), &v, &diffusion);

        let sa = (s.0 + 0.5 * dt * s1.0, s.1 + 0.5 * dt * s1.1);
        let s2 = mf(sa, t + 0.5 * dt);
        let kv2 = covariance_rhs(
            &drift(sa, t + 0.5 * dt),
            &mat4::add_scaled(&v, &kv1, 0.5 * dt),
            &diffusion,
        );

        let sb = (s.0 + 0.5 * dt * s2.0, s.1 + 0.5 * dt * s2.1);
        let s3 = mf(sb, t + 0.5 * dt);
        let kv3 = covariance_rhs(
            &drift(sb, t + 0.5 * dt),
            &mat4::add_scaled(&v, &kv2, 0.5 * dt),
            &diffusion,
        );

        let sc = (s.0 + dt * s3.0, s.1 + dt * s3.1);
        let s4 = mf(sc, t + dt);
        let kv4 =
            covariance_rhs(&drift(sc, t + dt), &mat4::add_scaled(&v, &kv3, dt), &diffusion);

        s.0 += dt / 6.0 * (s1.0 + 2.0 * (s2.0 + s3.0) + s4.0);
        s.1 += dt / 6.0 * (s1.1 + 2.0 * (s2.1 + s3.1) + s4.1);
        let w = dt / 6.0;
        let mut next = v;
        for i in 0..4 {
            for j in 0..4 {
                next[i][j] += w * (kv1[i][j] + 2.0 * (kv2[i][j] + kv3[i][j]) + kv4[i][j]);
            }
        }
        v = mat4::symmetrize(&next);

        let t_now = t_span.0 + k as f64 * dt;
        let mut peak = 0.0_f64;
        for i in 0..4 {
            peak = peak.max(v[i][i].abs());
        }
        if !peak.is_finite() || peak > ceiling || !s.0.is_finite() || !s.1.is_finite() {
            return Err(Error::Divergence { t: t_now, ratio: peak / base_scale });
        }
        if options.store.every_step || k % n_per == 0 || k > tail_start {
            times.push(t_now);
            covariances.push(CovarianceMatrix(v));
        }
    }

    let last = *covariances.last().expect("at least the initial sample");
    Ok((
        SimulationTrace {
            times,
            covariances,
            params: params.clone(),
            dt,
            steps_per_period: n_per,
            method: "rk4-dynamic",
            final_physicality: last.physicality_margin(),
        },
        MeanFieldState { alpha: s.0, beta: s.1 },
    ))
}
