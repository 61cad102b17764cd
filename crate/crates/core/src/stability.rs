//! Stability classification of the linearized dynamics, by four routes of
//! increasing generality and cost: drift eigenvalues, a Routh table on the
//! characteristic polynomial (no eigenvalue solve), Floquet multipliers of
//! the periodically driven system, and a brute-force divergence probe of
//! the covariance propagation itself. The first two apply to the
//! unmodulated drift only; the latter two respect the modulation.

use alloc::vec::Vec;
use num_complex::Complex64;
// float math for no_std builds; test builds pull std into the crate graph
// and its inherent methods shadow the trait
#[allow(unused_imports)]
use num_traits::Float;

use crate::dynamics::{
    build_drift, initial_covariance, CovarianceIntegrator, DriftMatrix, StepGrid, StepPolicy,
};
use crate::mat4::{self, M4};
use crate::model::ReducedParams;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    /// The route could not commit: a marginal spectrum, or a probe that hit
    /// its horizon before settling or diverging.
    Undecided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Eigenvalues,
    RouthHurwitz,
    Floquet,
    DivergenceProbe,
}

/// A classification together with how far from the boundary it sits. The
/// margin is positive on the unstable side; its scale depends on the
/// method: max eigenvalue real part (eigenvalues), negated smallest Routh
/// quantity (Routh table), `max |multiplier| - 1` (Floquet), or the
/// estimated variance growth rate (probe).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityVerdict {
    pub verdict: Verdict,
    pub margin: f64,
    pub method: Method,
}

fn verdict_from_margin(margin: f64, dead_band: f64, method: Method) -> StabilityVerdict {
    let verdict = if margin.abs() <= dead_band {
        Verdict::Undecided
    } else if margin > 0.0 {
        Verdict::Unstable
    } else {
        Verdict::Stable
    };
    StabilityVerdict { verdict, margin, method }
}

/// Eigenvalues of a (static) drift matrix.
pub fn drift_eigenvalues(a: &DriftMatrix) -> [Complex64; 4] {
    mat4::eigenvalues(a)
}

/// Classifies a static drift by the sign of its spectral abscissa.
pub fn eigen_stability(a: &DriftMatrix) -> StabilityVerdict {
    let mut max_real = f64::NEG_INFINITY;
    for e in drift_eigenvalues(a) {
        max_real = max_real.max(e.re);
    }
    verdict_from_margin(max_real, 1e-14 * mat4::max_abs(a).max(1.0), Method::Eigenvalues)
}

/// Classifies a static drift through the Routh conditions on its
/// characteristic polynomial, with no eigenvalue computation. For a monic
/// quartic `s^4 + a1 s^3 + a2 s^2 + a3 s + a4` the matrix is Hurwitz
/// exactly when `a1`, `a1 a2 - a3`, `a3 (a1 a2 - a3) - a1^2 a4` and `a4`
/// are all positive. Fails when a table entry sits too close to zero
/// relative to the terms that formed it to trust its sign.
pub fn routh_hurwitz(a: &DriftMatrix) -> Result<StabilityVerdict> {
    let scale = mat4::max_abs(a);
    if !scale.is_finite() {
        return Err(Error::InvalidParams("drift matrix must be finite"));
    }
    if scale == 0.0 {
        // the zero matrix is marginal
        return Ok(StabilityVerdict { verdict: Verdict::Undecided, margin: 0.0, method: Method::RouthHurwitz });
    }
    let mut m = *a;
    for row in m.iter_mut() {
        for x in row.iter_mut() {
            *x /= scale;
        }
    }
    // power traces and Newton's identities give the coefficients without
    // any root finding
    let m2 = mat4::mul(&m, &m);
    let m3 = mat4::mul(&m2, &m);
    let m4 = mat4::mul(&m3, &m);
    let tr = |x: &M4| x[0][0] + x[1][1] + x[2][2] + x[3][3];
    let (p1, p2, p3, p4) = (tr(&m), tr(&m2), tr(&m3), tr(&m4));
    let e1 = p1;
    let e2 = 0.5 * (e1 * p1 - p2);
    let e3 = (e2 * p1 - e1 * p2 + p3) / 3.0;
    let e4 = 0.25 * (e3 * p1 - e2 * p2 + e1 * p3 - p4);
    let (a1, a2, a3, a4) = (-e1, e2, -e3, e4);

    let check = |value: f64, formed_from: f64| -> Result<f64> {
        if value.abs() <= 1e-12 * formed_from.max(f64::MIN_POSITIVE) {
            Err(Error::NearSingular { pivot: value })
        } else {
            Ok(value)
        }
    };
    let d1 = check(a1, p1.abs())?;
    let d2 = check(a1 * a2 - a3, (a1 * a2).abs() + a3.abs())?;
    let d3 = check(a3 * d2 - a1 * a1 * a4, (a3 * d2).abs() + (a1 * a1 * a4).abs())?;
    let d4 = check(a4, (e3 * p1).abs() + (e2 * p2).abs() + (e1 * p3).abs() + p4.abs())?;

    let margin = -d1.min(d2).min(d3).min(d4);
    Ok(verdict_from_margin(margin, 0.0, Method::RouthHurwitz))
}

/// Floquet multipliers of the periodically driven first-moment system: the
/// eigenvalues of the one-period flow of `dPhi/dt = A(t) Phi`. Magnitudes
/// below one mean the periodic state is attracting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FloquetAnalysis {
    pub multipliers: [Complex64; 4],
    pub verdict: StabilityVerdict,
}

pub fn floquet_multipliers(
    params: &ReducedParams,
    policy: &StepPolicy,
) -> Result<FloquetAnalysis> {
    params.validate()?;
    let grid = StepGrid::resolve(params, policy)?;
    let dt = grid.dt;
    let mut phi = mat4::identity();
    for k in 0..grid.steps_per_period {
        let t = k as f64 * dt;
        let a1 = build_drift(params, t);
        let a2 = build_drift(params, t + 0.5 * dt);
        let a3 = build_drift(params, t + dt);
        let k1 = mat4::mul(&a1, &phi);
        let k2 = mat4::mul(&a2, &mat4::add_scaled(&phi, &k1, 0.5 * dt));
        let k3 = mat4::mul(&a2, &mat4::add_scaled(&phi, &k2, 0.5 * dt));
        let k4 = mat4::mul(&a3, &mat4::add_scaled(&phi, &k3, dt));
        for i in 0..4 {
            for j in 0..4 {
                phi[i][j] += dt / 6.0 * (k1[i][j] + 2.0 * (k2[i][j] + k3[i][j]) + k4[i][j]);
            }
        }
    }
    let multipliers = mat4::eigenvalues(&phi);
    let mut max_mag = 0.0_f64;
    for m in multipliers {
        max_mag = max_mag.max(m.norm());
    }
    let verdict = verdict_from_margin(max_mag - 1.0, 1e-12, Method::Floquet);
    Ok(FloquetAnalysis { multipliers, verdict })
}

/// Options for [`divergence_probe`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeOptions {
    /// How long to integrate before giving up, in reduced time. Defaults
    /// to fifty cavity lifetimes.
    pub horizon: Option<f64>,
    /// Divergence ceiling as a multiple of the initial variance scale.
    pub ceiling_factor: f64,
    /// Relative period-to-period change of the mean quanta below which a
    /// period counts as settled.
    pub settle_rel: f64,
    /// Consecutive settled periods required to declare stability.
    pub settle_runs: u32,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions { horizon: None, ceiling_factor: 1e12, settle_rel: 1e-6, settle_runs: 5 }
    }
}

fn default_horizon(params: &ReducedParams) -> f64 {
    if params.kappa > 0.0 {
        50.0 / params.kappa
    } else if params.gamma > 0.0 {
        50.0 / params.gamma
    } else {
        5000.0
    }
}

/// Probes stability by propagating the covariance from the thermal state
/// and watching the per-period means of the total quanta: a ceiling trip is
/// unstable, a settled stretch is stable, a horizon hit is undecided. This
/// route makes no structural assumption and is the arbiter for the others.
pub fn divergence_probe(
    params: &ReducedParams,
    policy: &StepPolicy,
    options: &ProbeOptions,
) -> Result<StabilityVerdict> {
    if !(options.settle_rel > 0.0) || options.settle_runs == 0 {
        return Err(Error::InvalidParams("probe settle criteria must be positive"));
    }
    let mut stepper = CovarianceIntegrator::new(
        params,
        initial_covariance(params.n_th),
        0.0,
        policy,
        options.ceiling_factor,
    )?;
    let grid = stepper.grid();
    let horizon = options.horizon.unwrap_or_else(|| default_horizon(params));
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::InvalidParams("probe horizon must be positive and finite"));
    }
    let runs = options.settle_runs as usize;
    let periods = ((horizon / grid.period).ceil().max(1.0) as u64).max(runs as u64 + 2);

    let quanta = |v: &crate::dynamics::CovarianceMatrix| {
        0.5 * (v.0[0][0] + v.0[1][1] + v.0[2][2] + v.0[3][3] - 2.0)
    };

    let mut prev: Option<f64> = None;
    let mut run = 0usize;
    let mut scale = 0.0_f64;
    let mut slope = 0.0_f64;
    for _ in 0..periods {
        let mut sum = 0.0_f64;
        for _ in 0..grid.steps_per_period {
            sum += quanta(&stepper.covariance());
            match stepper.step() {
                Ok(()) => {}
                Err(Error::Divergence { t, ratio }) => {
                    return Ok(StabilityVerdict {
                        verdict: Verdict::Unstable,
                        margin: ratio.ln() / t,
                        method: Method::DivergenceProbe,
                    });
                }
                Err(e) => return Err(e),
            }
        }
        let mean = sum / grid.steps_per_period as f64;
        scale = scale.max(mean.abs());
        if let Some(p) = prev {
            let d = (mean - p).abs();
            slope = if mean > 0.0 && p > 0.0 { (mean / p).ln() / grid.period } else { 0.0 };
            if d < options.settle_rel * mean.abs().max(p.abs()) || d <= 1e-12 * scale {
                run += 1;
                if run >= runs {
                    return Ok(StabilityVerdict {
                        verdict: Verdict::Stable,
                        margin: slope,
                        method: Method::DivergenceProbe,
                    });
                }
            } else {
                run = 0;
            }
        }
        prev = Some(mean);
    }
    Ok(StabilityVerdict { verdict: Verdict::Undecided, margin: slope, method: Method::DivergenceProbe })
}

/// Parameter selected for sweeps and maps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamField {
    Kappa,
    Gamma,
    NTh,
    DeltaCPrime,
    /// Magnitude of the linearized coupling; the phase is preserved.
    CouplingAbs,
    Xi,
    Nu,
}

pub fn set_field(params: &mut ReducedParams, field: ParamField, value: f64) {
    match field {
        ParamField::Kappa => params.kappa = value,
        ParamField::Gamma => params.gamma = value,
        ParamField::NTh => params.n_th = value,
        ParamField::DeltaCPrime => params.delta_c_prime = value,
        ParamField::CouplingAbs => {
            let mag = params.coupling.norm();
            params.coupling = if mag > 0.0 {
                params.coupling * (value / mag)
            } else {
                Complex64::new(value, 0.0)
            };
        }
        ParamField::Xi => params.xi = value,
        ParamField::Nu => params.nu = value,
    }
}

fn static_params(params: &ReducedParams) -> ReducedParams {
    ReducedParams { xi: 0.0, ..params.clone() }
}

fn classify(
    params: &ReducedParams,
    method: Method,
    policy: &StepPolicy,
) -> Result<StabilityVerdict> {
    match method {
        Method::Eigenvalues => {
            params.validate()?;
            Ok(eigen_stability(&build_drift(&static_params(params), 0.0)))
        }
        Method::RouthHurwitz => {
            params.validate()?;
            routh_hurwitz(&build_drift(&static_params(params), 0.0))
        }
        Method::Floquet => Ok(floquet_multipliers(params, policy)?.verdict),
        Method::DivergenceProbe => {
            Err(Error::InvalidParams("probe classification is not supported for maps; use the probe directly"))
        }
    }
}

/// Verdict grid over two swept parameters, plus the stability boundary
/// refined by bisection wherever adjacent grid points disagree. The static
/// methods evaluate the unmodulated drift; use the Floquet method for
/// modulated parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct StabilityMap {
    pub field1: ParamField,
    pub field2: ParamField,
    pub axis1: Vec<f64>,
    pub axis2: Vec<f64>,
    /// Row-major over `(axis1, axis2)`.
    pub verdicts: Vec<StabilityVerdict>,
    /// `(axis1 value, axis2 crossing)` pairs where the margin changes sign
    /// along axis2, located to 1e-4 of the axis2 span.
    pub boundary: Vec<(f64, f64)>,
}

pub fn stability_map(
    base: &ReducedParams,
    field1: ParamField,
    values1: &[f64],
    field2: ParamField,
    values2: &[f64],
    method: Method,
    policy: &StepPolicy,
) -> Result<StabilityMap> {
    if values1.is_empty() || values2.is_empty() {
        return Err(Error::InvalidParams("map axes must be nonempty"));
    }
    let mut verdicts = Vec::with_capacity(values1.len() * values2.len());
    let mut boundary = Vec::new();
    let span2 = values2[values2.len() - 1] - values2[0];
    for &v1 in values1 {
        let mut row_prev: Option<(f64, f64)> = None;
        for &v2 in values2 {
            let mut p = base.clone();
            set_field(&mut p, field1, v1);
            set_field(&mut p, field2, v2);
            let verdict = classify(&p, method, policy)?;
            if let Some((prev_v2, prev_margin)) = row_prev {
                if prev_margin * verdict.margin < 0.0 && span2.abs() > 0.0 {
                    let mut at = base.clone();
                    set_field(&mut at, field1, v1);
                    let crossing =
                        bisect_boundary(&at, field2, prev_v2, v2, method, policy)?;
                    boundary.push((v1, crossing));
                }
            }
            row_prev = Some((v2, verdict.margin));
            verdicts.push(verdict);
        }
    }
    Ok(StabilityMap {
        field1,
        field2,
        axis1: values1.to_vec(),
        axis2: values2.to_vec(),
        verdicts,
        boundary,
    })
}

/// Locates a margin sign change of the chosen method between `lo` and `hi`
/// in the given parameter, to an accuracy of 1e-4 of the bracket span.
pub fn bisect_boundary(
    base: &ReducedParams,
    field: ParamField,
    lo: f64,
    hi: f64,
    method: Method,
    policy: &StepPolicy,
) -> Result<f64> {
    let margin_at = |x: f64| -> Result<f64> {
        let mut p = base.clone();
        set_field(&mut p, field, x);
        Ok(classify(&p, method, policy)?.margin)
    };
    let (mut a, mut b) = (lo, hi);
    let ma = margin_at(a)?;
    let mb = margin_at(b)?;
    if ma == 0.0 {
        return Ok(a);
    }
    if mb == 0.0 {
        return Ok(b);
    }
    if (ma > 0.0) == (mb > 0.0) {
        return Err(Error::InvalidParams("bracket does not straddle the stability boundary"));
    }
    let tol = 1e-4 * (hi - lo).abs();
    for _ in 0..60 {
        if (b - a).abs() <= tol {
            break;
        }
        let mid = 0.5 * (a + b);
        let mm = margin_at(mid)?;
        if mm == 0.0 {
            return Ok(mid);
        }
        if (mm > 0.0) == (ma > 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(0.5 * (a + b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::build_diffusion;

    fn params(delta: f64, g: f64, xi: f64, nu: f64) -> ReducedParams {
        ReducedParams {
            kappa: 0.018939393939393939,
            gamma: 3.0303030303030303e-6,
            n_th: 0.0,
            delta_c_prime: delta,
            coupling: Complex64::new(g, 0.0),
            xi,
            nu,
            g: None,
            delta_c: None,
            drive: None,
        }
    }

    #[test]
    fn uncoupled_margin_is_mechanical_half_linewidth() {
        let p = params(1.0, 0.0, 0.0, 1.0);
        let v = eigen_stability(&build_drift(&p, 0.0));
        assert_eq!(v.verdict, Verdict::Stable);
        assert!((v.margin + 0.5 * p.gamma).abs() < 1e-13, "margin {}", v.margin);
    }

    #[test]
    fn routes_agree_on_clear_cases() {
        for (p, want) in [
            (params(1.0, 0.2, 0.0, 1.0), Verdict::Stable),
            (params(1.0, 0.8, 0.0, 1.0), Verdict::Unstable),
            (params(-1.0, 0.3, 0.0, 1.0), Verdict::Unstable),
        ] {
            let a = build_drift(&p, 0.0);
            let e = eigen_stability(&a);
            let r = routh_hurwitz(&a).unwrap();
            assert_eq!(e.verdict, want, "eigen on {p:?}");
            assert_eq!(r.verdict, want, "routh on {p:?}");
        }
    }

    #[test]
    fn static_instability_threshold_on_resonance() {
        // at detuning 1 the coupling threshold sits just above 1/2, lifted
        // by the finite cavity linewidth
        let base = params(1.0, 0.4, 0.0, 1.0);
        let want = 0.5000224;
        for method in [Method::Eigenvalues, Method::RouthHurwitz] {
            let found = bisect_boundary(
                &base,
                ParamField::CouplingAbs,
                0.3,
                0.8,
                method,
                &StepPolicy::default(),
            )
            .unwrap();
            assert!((found - want).abs() < 2e-4, "{method:?} found {found}");
        }
    }

    #[test]
    fn floquet_matches_exponential_map_for_static_drift() {
        let p = params(1.0, 0.3, 0.0, 1.0);
        let policy = StepPolicy { steps_per_period: 256, dt_override: None };
        let f = floquet_multipliers(&p, &policy).unwrap();
        assert_eq!(f.verdict.verdict, Verdict::Stable);
        let mut mags: Vec<f64> = f.multipliers.iter().map(|m| m.norm()).collect();
        let mut want: Vec<f64> = drift_eigenvalues(&build_drift(&p, 0.0))
            .iter()
            .map(|l| (l.re * core::f64::consts::TAU).exp())
            .collect();
        mags.sort_by(|a, b| a.partial_cmp(b).unwrap());
        want.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (m, w) in mags.iter().zip(&want) {
            assert!((m - w).abs() < 5e-7, "multiplier {m} vs {w}");
        }
    }

    #[test]
    fn modulation_can_stabilize_a_strong_coupling() {
        // bare coupling 2.5 at detuning 1 is far beyond the static
        // threshold, yet depth 2.2 at frequency 30 pulls the effective
        // coupling under it
        let policy = StepPolicy::default();
        let bare = floquet_multipliers(&params(1.0, 2.5, 0.5, 30.0), &policy).unwrap();
        assert_eq!(bare.verdict.verdict, Verdict::Unstable);
        let modulated = floquet_multipliers(&params(1.0, 2.5, 2.2, 30.0), &policy).unwrap();
        assert_eq!(modulated.verdict.verdict, Verdict::Stable);
        assert!(modulated.verdict.margin < 0.0);
    }

    #[test]
    fn probe_settles_on_a_stationary_state() {
        // start in the exact steady state of an uncoupled system: the
        // per-period means never move
        let mut p = params(1.0, 0.0, 0.0, 1.0);
        p.n_th = 2.0;
        let v = divergence_probe(&p, &StepPolicy::default(), &ProbeOptions::default()).unwrap();
        assert_eq!(v.verdict, Verdict::Stable);
        assert!(v.margin.abs() < 1e-9);
    }

    #[test]
    fn probe_trips_on_blue_detuned_instability() {
        let p = params(-1.0, 0.8, 0.0, 1.0);
        let opts = ProbeOptions { ceiling_factor: 1e9, ..Default::default() };
        let v = divergence_probe(&p, &StepPolicy::default(), &opts).unwrap();
        assert_eq!(v.verdict, Verdict::Unstable);
        assert!(v.margin > 0.0);
    }

    #[test]
    fn probe_hits_horizon_on_slow_relaxation() {
        // weak coupling off resonance relaxes on the mechanical linewidth
        // timescale, far beyond a short horizon
        let mut p = params(2.3, 0.01, 0.0, 1.0);
        p.n_th = 100.0;
        let opts = ProbeOptions { horizon: Some(300.0), ..Default::default() };
        let v = divergence_probe(&p, &StepPolicy::default(), &opts).unwrap();
        assert_eq!(v.verdict, Verdict::Undecided);
    }

    #[test]
    fn probe_agrees_with_lyapunov_health() {
        // sanity: the probe's stable verdict coincides with the steady
        // solver accepting the same drift
        let p = params(1.0, 0.2, 0.0, 1.0);
        let a = build_drift(&p, 0.0);
        assert!(crate::dynamics::lyapunov_steady(&a, &build_diffusion(&p)).is_ok());
        let faster = ProbeOptions { horizon: Some(5000.0), ..Default::default() };
        let v = divergence_probe(&p, &StepPolicy::default(), &faster).unwrap();
        assert_ne!(v.verdict, Verdict::Unstable);
    }

    #[test]
    fn map_grid_and_boundary() {
        let base = params(1.0, 0.3, 0.0, 1.0);
        let couplings: Vec<f64> = (0..=8).map(|i| 0.1 + 0.1 * i as f64).collect();
        let detunings = [0.8, 1.0, 1.2];
        let map = stability_map(
            &base,
            ParamField::DeltaCPrime,
            &detunings,
            ParamField::CouplingAbs,
            &couplings,
            Method::Eigenvalues,
            &StepPolicy::default(),
        )
        .unwrap();
        assert_eq!(map.verdicts.len(), 27);
        // row at detuning 1: stable up to ~0.5, unstable beyond
        let row = &map.verdicts[9..18];
        assert_eq!(row[0].verdict, Verdict::Stable);
        assert_eq!(row[8].verdict, Verdict::Unstable);
        let crossing = map
            .boundary
            .iter()
            .find(|(d, _)| (*d - 1.0).abs() < 1e-12)
            .map(|(_, c)| *c)
            .expect("boundary crossing at detuning 1");
        assert!((crossing - 0.5000224).abs() < 2e-3, "crossing {crossing}");
    }

    #[test]
    fn set_field_covers_every_parameter() {
        let mut p = params(1.0, 0.3, 0.0, 1.0);
        set_field(&mut p, ParamField::Kappa, 0.5);
        set_field(&mut p, ParamField::Gamma, 0.25);
        set_field(&mut p, ParamField::NTh, 7.0);
        set_field(&mut p, ParamField::DeltaCPrime, -2.0);
        set_field(&mut p, ParamField::Xi, 1.5);
        set_field(&mut p, ParamField::Nu, 20.0);
        set_field(&mut p, ParamField::CouplingAbs, 0.9);
        assert_eq!(p.kappa, 0.5);
        assert_eq!(p.gamma, 0.25);
        assert_eq!(p.n_th, 7.0);
        assert_eq!(p.delta_c_prime, -2.0);
        assert_eq!(p.xi, 1.5);
        assert_eq!(p.nu, 20.0);
        assert!((p.coupling.norm() - 0.9).abs() < 1e-15);
        assert_eq!(p.coupling.im, 0.0);

        let mut phased = p.clone();
        phased.coupling = Complex64::new(0.0, -0.4);
        set_field(&mut phased, ParamField::CouplingAbs, 0.8);
        assert!((phased.coupling.im + 0.8).abs() < 1e-15, "phase preserved");
    }
}
