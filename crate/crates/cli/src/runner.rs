//! Run execution. A "point" is one reduced parameter set taken through the
//! stability precheck, the covariance integration and the period averaging;
//! multi-point tasks run points on a rayon pool and capture failures per
//! point rather than aborting the batch.

use rayon::prelude::*;

use optoshake_core::dynamics::{
    build_diffusion, build_drift, initial_covariance, integrate_covariance, lyapunov_steady,
    IntegrationOptions, StepPolicy, StorePolicy,
};
use optoshake_core::model::ReducedParams;
use optoshake_core::observables::{
    log_negativity, logneg_series, period_average, phonon_number, phonon_series, ObservableSeries,
};
use optoshake_core::sidebands::rwa_reduce;
use optoshake_core::stability::{
    eigen_stability, floquet_multipliers, routh_hurwitz, set_field, Method, ParamField,
    StabilityVerdict, Verdict,
};
use optoshake_core::Error as CoreError;

use crate::config::{MethodChoice, SimulationBlock};
use crate::errors::{AppError, Result};

/// Settings shared by every point of a run, fixed by the configuration.
#[derive(Debug, Clone, Copy)]
pub struct RunSettings {
    /// Integration span in reduced time; the total length is counted in
    /// mechanical periods and rounded up to whole bookkeeping periods.
    pub t_span: (f64, f64),
    pub policy: StepPolicy,
    pub options: IntegrationOptions,
    /// Trailing bookkeeping periods averaged into the reported values.
    pub averaging: u32,
}

impl RunSettings {
    pub fn from_config(sim: &SimulationBlock) -> Self {
        RunSettings {
            t_span: (0.0, sim.t_max_periods * core::f64::consts::TAU),
            policy: StepPolicy {
                steps_per_period: sim.steps_per_period,
                dt_override: sim.dt_override,
            },
            options: IntegrationOptions {
                ceiling_factor: sim.divergence_ceiling,
                store: StorePolicy {
                    tail_periods: sim.tail_periods,
                    every_step: sim.store_every_step,
                },
            },
            averaging: sim.averaging_periods,
        }
    }
}

/// Frequency whose period the averaging logic bins by: the modulation
/// frequency when modulation is on, the mechanical frequency otherwise.
pub fn averaging_frequency(params: &ReducedParams) -> f64 {
    if params.xi > 0.0 {
        params.nu
    } else {
        1.0
    }
}

/// Maps the configured method choice onto a concrete classifier.
pub fn effective_method(choice: MethodChoice, params: &ReducedParams) -> Method {
    match choice {
        MethodChoice::Eigenvalues => Method::Eigenvalues,
        MethodChoice::Routh => Method::RouthHurwitz,
        MethodChoice::Floquet => Method::Floquet,
        MethodChoice::Auto => {
            if params.xi > 0.0 {
                Method::Floquet
            } else {
                Method::Eigenvalues
            }
        }
    }
}

fn unmodulated(params: &ReducedParams) -> ReducedParams {
    ReducedParams { xi: 0.0, ..params.clone() }
}

/// Classifies one point. The static methods evaluate the unmodulated drift,
/// so under modulation they describe the averaged detuning only; the
/// Floquet route is the faithful classifier there.
pub fn classify(
    params: &ReducedParams,
    choice: MethodChoice,
    policy: &StepPolicy,
) -> std::result::Result<StabilityVerdict, String> {
    match effective_method(choice, params) {
        Method::Eigenvalues => {
            params.validate().map_err(|e| e.to_string())?;
            Ok(eigen_stability(&build_drift(&unmodulated(params), 0.0)))
        }
        Method::RouthHurwitz => {
            params.validate().map_err(|e| e.to_string())?;
            routh_hurwitz(&build_drift(&unmodulated(params), 0.0)).map_err(|e| e.to_string())
        }
        Method::Floquet => floquet_multipliers(params, policy)
            .map(|f| f.verdict)
            .map_err(|e| e.to_string()),
        Method::DivergenceProbe => unreachable!("no configuration selects the probe"),
    }
}

/// Outcome of one point. Observables are NaN when the point is unstable or
/// failed; `error` is set only for failures, not for honest instability.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub verdict: Verdict,
    pub margin: f64,
    pub phonon: f64,
    pub logneg: f64,
    pub phonon_settled: bool,
    pub logneg_settled: bool,
    pub error: Option<String>,
}

impl PointOutcome {
    pub fn failed(message: String) -> Self {
        PointOutcome {
            verdict: Verdict::Undecided,
            margin: f64::NAN,
            phonon: f64::NAN,
            logneg: f64::NAN,
            phonon_settled: false,
            logneg_settled: false,
            error: Some(message),
        }
    }

    fn unstable(margin: f64) -> Self {
        PointOutcome {
            verdict: Verdict::Unstable,
            margin,
            phonon: f64::NAN,
            logneg: f64::NAN,
            phonon_settled: false,
            logneg_settled: false,
            error: None,
        }
    }
}

/// Mean over the trailing `window` periods without the settling guarantee,
/// used as the fallback when the transient has not died out by the end of
/// the run. The edge rule matches the guaranteed average, so the two agree
/// on settled series.
pub fn trailing_mean(series: &ObservableSeries, nu: f64, window: u32) -> f64 {
    let n = series.times.len();
    if n == 0 {
        return f64::NAN;
    }
    let period = core::f64::consts::TAU / nu;
    let edge = series.times[n - 1] - window as f64 * period + 1e-9 * period;
    let mut sum = 0.0_f64;
    let mut count = 0u64;
    for (&t, &x) in series.times.iter().zip(&series.values) {
        if t > edge {
            sum += x;
            count += 1;
        }
    }
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

/// Period average with transient verification where possible; falls back to
/// the unverified trailing mean (flagged unsettled) when the series is still
/// drifting, and reports any other failure.
pub fn average_or_tail(
    series: &ObservableSeries,
    nu: f64,
    window: u32,
) -> (f64, bool, Option<String>) {
    match period_average(series, nu, window) {
        Ok(v) => (v, true, None),
        Err(CoreError::Unsettled { .. }) => (trailing_mean(series, nu, window), false, None),
        Err(e) => (f64::NAN, false, Some(format!("{} average: {e}", series.label))),
    }
}

/// Runs one point: precheck, integration, averaging. A divergence during
/// integration overrules a stable or undecided precheck.
pub fn run_point(
    params: &ReducedParams,
    choice: MethodChoice,
    settings: &RunSettings,
) -> PointOutcome {
    let precheck = match classify(params, choice, &settings.policy) {
        Ok(v) => v,
        Err(e) => return PointOutcome::failed(e),
    };
    if precheck.verdict == Verdict::Unstable {
        return PointOutcome::unstable(precheck.margin);
    }

    let trace = match integrate_covariance(
        params,
        initial_covariance(params.n_th),
        settings.t_span,
        &settings.policy,
        &settings.options,
    ) {
        Ok(trace) => trace,
        Err(CoreError::Divergence { t, ratio }) => {
            return PointOutcome::unstable(ratio.ln() / t)
        }
        Err(e) => return PointOutcome::failed(e.to_string()),
    };

    let nu_eff = averaging_frequency(params);
    let (phonon, phonon_settled, err_p) =
        average_or_tail(&phonon_series(&trace), nu_eff, settings.averaging);
    let (logneg, logneg_settled, err_l) =
        average_or_tail(&logneg_series(&trace), nu_eff, settings.averaging);
    PointOutcome {
        verdict: precheck.verdict,
        margin: precheck.margin,
        phonon,
        logneg,
        phonon_settled,
        logneg_settled,
        error: err_p.or(err_l),
    }
}

pub fn thread_pool(parallel: Option<usize>) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallel.unwrap_or(0))
        .build()
        .map_err(|e| AppError::Internal(format!("thread pool: {e}")))
}

/// Runs `count` independent jobs on a pool, preserving index order in the
/// result so output files do not depend on scheduling.
pub fn run_many<T, F>(count: usize, parallel: Option<usize>, job: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = thread_pool(parallel)?;
    Ok(pool.install(|| (0..count).into_par_iter().map(job).collect()))
}

/// One grid point of a stability map.
#[derive(Debug, Clone, Copy)]
pub struct MapPoint {
    pub v1: f64,
    pub v2: f64,
    pub verdict: Verdict,
    pub margin: f64,
    /// Calibrated coupling magnitude at this point; NaN when the point
    /// could not be resolved.
    pub coupling_abs: f64,
}

/// Stability map output: the verdict grid (row-major over axis 1 then
/// axis 2) and the boundary crossings refined along axis 2.
#[derive(Debug, Clone)]
pub struct MapResult {
    pub points: Vec<MapPoint>,
    pub boundary: Vec<(f64, f64)>,
}

/// Map over two reduced-parameter axes, delegated to the library grid.
pub fn map_reduced(
    base: &ReducedParams,
    field1: ParamField,
    values1: &[f64],
    field2: ParamField,
    values2: &[f64],
    method: Method,
    policy: &StepPolicy,
) -> Result<MapResult> {
    let map = optoshake_core::stability::stability_map(
        base, field1, values1, field2, values2, method, policy,
    )
    .map_err(|e| AppError::Internal(format!("stability map: {e}")))?;
    let mut points = Vec::with_capacity(map.verdicts.len());
    for (i, &v1) in values1.iter().enumerate() {
        for (j, &v2) in values2.iter().enumerate() {
            let v = map.verdicts[i * values2.len() + j];
            let mut p = base.clone();
            set_field(&mut p, field1, v1);
            set_field(&mut p, field2, v2);
            points.push(MapPoint {
                v1,
                v2,
                verdict: v.verdict,
                margin: v.margin,
                coupling_abs: p.coupling.norm(),
            });
        }
    }
    Ok(MapResult { points, boundary: map.boundary })
}

/// Map over arbitrary axes through a point resolver. Points that fail to
/// resolve or classify (a calibration can hit a fold mid-grid) come back
/// undecided with NaN margin rather than failing the map: unreachable
/// working points are a finding, not an error. Boundary refinement skips
/// brackets touching such points.
pub fn map_general<R>(
    resolve_point: R,
    values1: &[f64],
    values2: &[f64],
    choice: MethodChoice,
    policy: &StepPolicy,
) -> MapResult
where
    R: Fn(f64, f64) -> std::result::Result<ReducedParams, String>,
{
    let mut points = Vec::with_capacity(values1.len() * values2.len());
    let mut boundary = Vec::new();
    for &v1 in values1 {
        let mut prev: Option<(f64, f64)> = None;
        for &v2 in values2 {
            let classified = resolve_point(v1, v2).ok().and_then(|p| {
                classify(&p, choice, policy).ok().map(|sv| (sv, p.coupling.norm()))
            });
            let (point, margin) = match classified {
                Some((sv, coupling_abs)) => (
                    MapPoint { v1, v2, verdict: sv.verdict, margin: sv.margin, coupling_abs },
                    Some(sv.margin),
                ),
                None => (
                    MapPoint {
                        v1,
                        v2,
                        verdict: Verdict::Undecided,
                        margin: f64::NAN,
                        coupling_abs: f64::NAN,
                    },
                    None,
                ),
            };
            if let (Some((prev_v2, prev_margin)), Some(m)) = (prev, margin) {
                if prev_margin * m < 0.0 {
                    if let Some(crossing) =
                        bisect_margin(&resolve_point, v1, prev_v2, v2, choice, policy)
                    {
                        boundary.push((v1, crossing));
                    }
                }
            }
            prev = margin.map(|m| (v2, m));
            points.push(point);
        }
    }
    MapResult { points, boundary }
}

/// Margin sign change located to 1e-4 of the bracket span, mirroring the
/// library boundary refinement but through the per-point resolver.
fn bisect_margin<R>(
    resolve_point: &R,
    v1: f64,
    lo: f64,
    hi: f64,
    choice: MethodChoice,
    policy: &StepPolicy,
) -> Option<f64>
where
    R: Fn(f64, f64) -> std::result::Result<ReducedParams, String>,
{
    let margin_at = |x: f64| -> Option<f64> {
        let p = resolve_point(v1, x).ok()?;
        classify(&p, choice, policy).ok().map(|sv| sv.margin)
    };
    let (mut a, mut b) = (lo, hi);
    let ma = margin_at(a)?;
    let mb = margin_at(b)?;
    if ma == 0.0 {
        return Some(a);
    }
    if mb == 0.0 {
        return Some(b);
    }
    if (ma > 0.0) == (mb > 0.0) {
        return None;
    }
    let tol = 1e-4 * (hi - lo).abs();
    for _ in 0..60 {
        if (b - a).abs() <= tol {
            break;
        }
        let mid = 0.5 * (a + b);
        let mm = margin_at(mid)?;
        if mm == 0.0 {
            return Some(mid);
        }
        if (mm > 0.0) == (ma > 0.0) {
            a = mid;
        } else {
            b = mid;
        }
    }
    Some(0.5 * (a + b))
}

/// One row of the sideband-reduction comparison: the full modulated model
/// integrated to its periodic state against the single-sideband static
/// model solved in closed form, at one modulation frequency.
#[derive(Debug, Clone)]
pub struct RwaRow {
    pub nu: f64,
    pub k0: i32,
    pub coupling_eff: f64,
    pub nu_over_mech: f64,
    pub nu_over_coupling: f64,
    pub phonon_full: f64,
    pub phonon_rwa: f64,
    pub phonon_gap: f64,
    pub logneg_full: f64,
    pub logneg_rwa: f64,
    pub logneg_gap: f64,
    pub phonon_settled: bool,
    pub logneg_settled: bool,
    pub verdict: Verdict,
    pub error: Option<String>,
}

/// Symmetric relative difference. The denominator takes the larger of the
/// two magnitudes so a zero prediction on one side reads as a gap near one
/// instead of an unbounded ratio.
fn relative_gap(full: f64, rwa: f64) -> f64 {
    (full - rwa).abs() / full.abs().max(rwa.abs()).max(1e-12)
}

pub fn rwa_row(
    base: &ReducedParams,
    nu: f64,
    choice: MethodChoice,
    settings: &RunSettings,
) -> RwaRow {
    let mut params = base.clone();
    set_field(&mut params, ParamField::Nu, nu);

    let mut row = RwaRow {
        nu,
        k0: 0,
        coupling_eff: f64::NAN,
        nu_over_mech: f64::NAN,
        nu_over_coupling: f64::NAN,
        phonon_full: f64::NAN,
        phonon_rwa: f64::NAN,
        phonon_gap: f64::NAN,
        logneg_full: f64::NAN,
        logneg_rwa: f64::NAN,
        logneg_gap: f64::NAN,
        phonon_settled: false,
        logneg_settled: false,
        verdict: Verdict::Undecided,
        error: None,
    };

    let model = match rwa_reduce(&params) {
        Ok(m) => m,
        Err(e) => {
            row.error = Some(format!("sideband reduction: {e}"));
            return row;
        }
    };
    row.k0 = model.k0;
    row.coupling_eff = model.params.coupling.norm();
    row.nu_over_mech = model.nu_over_mech;
    row.nu_over_coupling = model.nu_over_coupling;

    match lyapunov_steady(&build_drift(&model.params, 0.0), &build_diffusion(&model.params)) {
        Ok(v) => {
            row.phonon_rwa = phonon_number(&v);
            row.logneg_rwa = log_negativity(&v);
        }
        // the reduced model predicting instability is a result in itself;
        // its steady observables just do not exist
        Err(CoreError::NonHurwitz { .. }) => {}
        Err(e) => {
            row.error = Some(format!("sideband steady state: {e}"));
            return row;
        }
    }

    let full = run_point(&params, choice, settings);
    row.verdict = full.verdict;
    row.phonon_full = full.phonon;
    row.logneg_full = full.logneg;
    row.phonon_settled = full.phonon_settled;
    row.logneg_settled = full.logneg_settled;
    row.error = full.error;

    if row.phonon_full.is_finite() && row.phonon_rwa.is_finite() {
        row.phonon_gap = relative_gap(row.phonon_full, row.phonon_rwa);
    }
    if row.logneg_full.is_finite() && row.logneg_rwa.is_finite() {
        row.logneg_gap = relative_gap(row.logneg_full, row.logneg_rwa);
    }
    row
}
