//! Scalar observables of the covariance matrix and the time-series
//! reductions used to report them: mechanical phonon number, logarithmic
//! negativity of the cavity-mechanics partition, transient detection and
//! periodic steady-state averaging.

use alloc::vec::Vec;
// float math for no_std builds; test builds pull std into the crate graph
// and its inherent methods shadow the trait
#[allow(unused_imports)]
use num_traits::Float;

use crate::dynamics::{CovarianceMatrix, SimulationTrace};
use crate::mat4;
use crate::{Error, Result};

/// Mean mechanical phonon number, `(<q^2> + <p^2> - 1)/2`.
pub fn phonon_number(v: &CovarianceMatrix) -> f64 {
    0.5 * (v.0[2][2] + v.0[3][3] - 1.0)
}

/// 2x2 blocks of the covariance matrix: cavity, mechanical and their
/// cross-correlation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockDecomposition {
    pub cavity: [[f64; 2]; 2],
    pub mechanical: [[f64; 2]; 2],
    pub correlation: [[f64; 2]; 2],
}

pub fn blocks(v: &CovarianceMatrix) -> BlockDecomposition {
    let s = mat4::symmetrize(&v.0);
    BlockDecomposition {
        cavity: [[s[0][0], s[0][1]], [s[1][0], s[1][1]]],
        mechanical: [[s[2][2], s[2][3]], [s[3][2], s[3][3]]],
        correlation: [[s[0][2], s[0][3]], [s[1][2], s[1][3]]],
    }
}

fn det2(b: &[[f64; 2]; 2]) -> f64 {
    b[0][0] * b[1][1] - b[0][1] * b[1][0]
}

/// Smaller symplectic eigenvalue of the partially transposed state.
/// Separable states have `eta >= 1/2`; smaller values mean entanglement.
/// Roundoff-negative radicands are clamped to zero, so the result is always
/// a number for near-physical input.
pub fn eta_minus(v: &CovarianceMatrix) -> f64 {
    let b = blocks(v);
    let sigma = det2(&b.cavity) + det2(&b.mechanical) - 2.0 * det2(&b.correlation);
    let full = mat4::det4(&mat4::symmetrize(&v.0));
    let half = 0.5 * sigma;
    let inner = (half * half - full).max(0.0);
    // eta^2 = half - sqrt(inner) in exact arithmetic; dividing instead of
    // subtracting keeps full precision when the two nearly cancel, as they
    // do for strongly squeezed states
    let denom = half + inner.sqrt();
    if denom <= 0.0 {
        return 0.0;
    }
    (full / denom).max(0.0).sqrt()
}

/// Logarithmic negativity of the cavity-mechanics split:
/// `max(0, -ln(2 eta_minus))`.
pub fn log_negativity(v: &CovarianceMatrix) -> f64 {
    let eta = eta_minus(v).max(f64::MIN_POSITIVE);
    (-(2.0 * eta).ln()).max(0.0)
}

/// A sampled scalar time series.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub label: &'static str,
}

impl ObservableSeries {
    fn from_trace(trace: &SimulationTrace, label: &'static str, f: impl Fn(&CovarianceMatrix) -> f64) -> Self {
        ObservableSeries {
            times: trace.times.clone(),
            values: trace.covariances.iter().map(f).collect(),
            label,
        }
    }
}

pub fn phonon_series(trace: &SimulationTrace) -> ObservableSeries {
    ObservableSeries::from_trace(trace, "phonon", phonon_number)
}

pub fn logneg_series(trace: &SimulationTrace) -> ObservableSeries {
    ObservableSeries::from_trace(trace, "logneg", log_negativity)
}

/// Result of transient detection on a series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransientCutoff {
    /// Start of the first period from which the per-period means stay
    /// settled; the end of the series if they never do.
    pub t_settle: f64,
    pub settled: bool,
}

/// Number of consecutive settled period-to-period differences required.
const SETTLE_RUNS: usize = 5;
/// Relative change between consecutive period means considered settled.
const SETTLE_REL: f64 = 1e-4;

/// Detects when the per-period means of a series stop changing: the series
/// is binned into periods `2 pi / nu` and the earliest bin from which
/// `SETTLE_RUNS` consecutive bin-to-bin changes stay below `SETTLE_REL`
/// (relatively, with an absolute floor at 1e-12 of the series scale) marks
/// the settling time.
pub fn transient_cutoff(series: &ObservableSeries, nu: f64) -> Result<TransientCutoff> {
    if !(nu > 0.0) || !nu.is_finite() {
        return Err(Error::InvalidParams("averaging frequency must be positive"));
    }
    let n = series.times.len();
    if n != series.values.len() {
        return Err(Error::InvalidParams("series times and values differ in length"));
    }
    if n < 2 {
        return Err(Error::ShortSeries { have: 0.0, need: (SETTLE_RUNS + 1) as f64 });
    }
    let t0 = series.times[0];
    let t_last = series.times[n - 1];
    let period = core::f64::consts::TAU / nu;
    let spanned = (t_last - t0) / period;
    let need = (SETTLE_RUNS + 1) as f64;
    if spanned + 1e-9 < need {
        return Err(Error::ShortSeries { have: spanned, need });
    }

    // bin means; the scaled nudge keeps samples sitting exactly on a
    // boundary in the bin they close rather than the one they open
    let bins = (spanned * (1.0 + 1e-12) + 1e-9).floor() as usize;
    let mut sums = Vec::new();
    sums.resize(bins, 0.0_f64);
    let mut counts = Vec::new();
    counts.resize(bins, 0u64);
    let mut scale = 0.0_f64;
    for (&t, &x) in series.times.iter().zip(&series.values) {
        if !x.is_finite() {
            return Err(Error::Unphysical { what: "series value", value: x });
        }
        scale = scale.max(x.abs());
        let k = ((t - t0) / period * (1.0 + 1e-12) + 1e-9).floor() as usize;
        if k < bins {
            sums[k] += x;
            counts[k] += 1;
        }
    }
    let mut means = Vec::with_capacity(bins);
    for (s, c) in sums.iter().zip(&counts) {
        if *c == 0 {
            return Err(Error::InvalidParams("series leaves an averaging period empty"));
        }
        means.push(s / *c as f64);
    }

    let ok = |a: f64, b: f64| {
        let d = (a - b).abs();
        d < SETTLE_REL * a.abs().max(b.abs()) || d <= 1e-12 * scale
    };
    let mut run = 0usize;
    for k in 0..bins - 1 {
        if ok(means[k], means[k + 1]) {
            run += 1;
            if run >= SETTLE_RUNS {
                let first = k + 1 - run;
                return Ok(TransientCutoff { t_settle: t0 + first as f64 * period, settled: true });
            }
        } else {
            run = 0;
        }
    }
    Ok(TransientCutoff { t_settle: t_last, settled: false })
}

/// Mean of the series over the trailing `window` periods of `2 pi / nu`,
/// after verifying that the transient has died out before that window.
/// Needs the trailing samples at full resolution.
pub fn period_average(series: &ObservableSeries, nu: f64, window: u32) -> Result<f64> {
    if window == 0 {
        return Err(Error::InvalidParams("averaging window must cover at least one period"));
    }
    let cutoff = transient_cutoff(series, nu)?;
    let n = series.times.len();
    let t_last = series.times[n - 1];
    let period = core::f64::consts::TAU / nu;
    let t_from = t_last - window as f64 * period;
    if !cutoff.settled {
        return Err(Error::Unsettled { t_end: t_last });
    }
    if cutoff.t_settle > t_from + 1e-9 * period {
        return Err(Error::Unsettled { t_end: t_last });
    }
    let t0 = series.times[0];
    if t_from + 1e-9 * period < t0 {
        return Err(Error::ShortSeries { have: (t_last - t0) / period, need: window as f64 });
    }
    let edge = t_from + 1e-9 * period;
    let mut sum = 0.0_f64;
    let mut count = 0u64;
    for (&t, &x) in series.times.iter().zip(&series.values) {
        if t > edge {
            sum += x;
            count += 1;
        }
    }
    // a sample mean over whole periods is exact for any periodic signal the
    // grid resolves, but it needs an even sample coverage to be one
    let per_period = count as f64 / window as f64;
    if per_period < 2.0 {
        return Err(Error::ShortSeries {
            have: count as f64,
            need: 2.0 * window as f64,
        });
    }
    Ok(sum / count as f64)
}

/// Per-period summary produced by [`PeriodAccumulator`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodMean {
    /// Zero-based period index.
    pub index: u64,
    /// Midpoint time of the period.
    pub t_mid: f64,
    /// Mean phonon number over the period.
    pub phonon: f64,
    /// Mean logarithmic negativity over the period, when tracked.
    pub logneg: Option<f64>,
}

/// Streaming per-period means, fed one covariance sample per grid step so
/// long runs never need the full trace in memory. Samples are attributed
/// left-rectangle style: each period owns its starting sample and not its
/// closing one, which makes the mean exact for period-commensurate signals.
pub struct PeriodAccumulator {
    t0: f64,
    period: f64,
    steps_per_period: u64,
    with_logneg: bool,
    seen: u64,
    sum_phonon: f64,
    sum_logneg: f64,
    means: Vec<PeriodMean>,
}

impl PeriodAccumulator {
    pub fn new(t0: f64, period: f64, steps_per_period: u64, with_logneg: bool) -> Self {
        PeriodAccumulator {
            t0,
            period,
            steps_per_period: steps_per_period.max(1),
            with_logneg,
            seen: 0,
            sum_phonon: 0.0,
            sum_logneg: 0.0,
            means: Vec::new(),
        }
    }

    /// Feeds the sample for grid index `seen`; call once with the initial
    /// state and then once after every step, in order.
    pub fn push(&mut self, v: &CovarianceMatrix) {
        self.sum_phonon += phonon_number(v);
        if self.with_logneg {
            self.sum_logneg += log_negativity(v);
        }
        self.seen += 1;
        if self.seen % self.steps_per_period == 0 {
            let index = self.seen / self.steps_per_period - 1;
            let inv = 1.0 / self.steps_per_period as f64;
            self.means.push(PeriodMean {
                index,
                t_mid: self.t0 + (index as f64 + 0.5) * self.period,
                phonon: self.sum_phonon * inv,
                logneg: if self.with_logneg { Some(self.sum_logneg * inv) } else { None },
            });
            self.sum_phonon = 0.0;
            self.sum_logneg = 0.0;
        }
    }

    /// Completed periods so far.
    pub fn means(&self) -> &[PeriodMean] {
        &self.means
    }

    pub fn into_means(self) -> Vec<PeriodMean> {
        self.means
    }

    /// Mean phonon number over the trailing `window` completed periods.
    pub fn tail_phonon(&self, window: usize) -> Option<f64> {
        if window == 0 || self.means.len() < window {
            return None;
        }
        let tail = &self.means[self.means.len() - window..];
        Some(tail.iter().map(|m| m.phonon).sum::<f64>() / window as f64)
    }

    /// Mean logarithmic negativity over the trailing `window` periods.
    pub fn tail_logneg(&self, window: usize) -> Option<f64> {
        if !self.with_logneg || window == 0 || self.means.len() < window {
            return None;
        }
        let tail = &self.means[self.means.len() - window..];
        Some(tail.iter().filter_map(|m| m.logneg).sum::<f64>() / window as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::initial_covariance;

    fn tms(r: f64) -> CovarianceMatrix {
        let (c, s) = ((2.0 * r).cosh() * 0.5, (2.0 * r).sinh() * 0.5);
        CovarianceMatrix([
            [c, 0.0, s, 0.0],
            [0.0, c, 0.0, -s],
            [s, 0.0, c, 0.0],
            [0.0, -s, 0.0, c],
        ])
    }

    #[test]
    fn phonon_number_inverts_thermal_preparation() {
        for &n in &[0.0, 0.5, 1.0, 98.159079211236385, 986.08242992569977] {
            assert!((phonon_number(&initial_covariance(n)) - n).abs() < 1e-12 * (1.0 + n));
        }
    }

    #[test]
    fn vacuum_has_no_entanglement() {
        let v = CovarianceMatrix::vacuum();
        assert!((eta_minus(&v) - 0.5).abs() < 1e-14);
        assert_eq!(log_negativity(&v), 0.0);
    }

    #[test]
    fn two_mode_squeezing_closed_form() {
        // r = 2.0 covers the regime where the naive eta formula subtracts
        // two nearly equal hundreds-sized numbers and loses ~1e-9
        for &r in &[0.1, 0.6, 1.3, 2.0] {
            let v = tms(r);
            let eta = eta_minus(&v);
            let want = 0.5 * (-2.0 * r).exp();
            assert!((eta - want).abs() < 1e-12 * want.max(1e-3), "r={r}: eta={eta}");
            assert!((log_negativity(&v) - 2.0 * r).abs() < 1e-12);
        }
    }

    #[test]
    fn thermal_product_states_are_separable() {
        for &n in &[0.0, 1.0, 100.0] {
            assert_eq!(log_negativity(&initial_covariance(n)), 0.0);
        }
    }

    #[test]
    fn eta_is_invariant_under_cavity_phase_rotation() {
        let v = tms(0.7);
        let base = eta_minus(&v);
        let th = 0.83_f64;
        let (c, s) = (th.cos(), th.sin());
        let rot = [
            [c, s, 0.0, 0.0],
            [-s, c, 0.0, 0.0],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ];
        let tmp = crate::mat4::mul(&rot, &v.0);
        let mut rt = rot;
        for i in 0..4 {
            for j in 0..4 {
                rt[i][j] = rot[j][i];
            }
        }
        let rotated = CovarianceMatrix(crate::mat4::mul(&tmp, &rt));
        assert!((eta_minus(&rotated) - base).abs() < 1e-12);
    }

    #[test]
    fn blocks_pick_the_right_corners() {
        let mut m = [[0.0; 4]; 4];
        for i in 0..4 {
            for j in 0..4 {
                m[i][j] = (4 * i + j) as f64;
            }
        }
        let b = blocks(&CovarianceMatrix(m));
        // symmetrization first, then slicing
        assert_eq!(b.cavity[0][1], 0.5 * (1.0 + 4.0));
        assert_eq!(b.mechanical[1][1], 15.0);
        assert_eq!(b.correlation[1][0], 0.5 * (6.0 + 9.0));
    }

    fn series_of(f: impl Fn(f64) -> f64, t_max: f64, dt: f64) -> ObservableSeries {
        let n = (t_max / dt).round() as usize;
        let times: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
        let values = times.iter().map(|&t| f(t)).collect();
        ObservableSeries { times, values, label: "test" }
    }

    #[test]
    fn constant_series_settles_immediately() {
        let s = series_of(|_| 3.25, 80.0, 0.1);
        let c = transient_cutoff(&s, 1.0).unwrap();
        assert!(c.settled);
        assert_eq!(c.t_settle, 0.0);
    }

    #[test]
    fn periodic_series_settles_immediately() {
        // per-period means of a commensurate oscillation are constant
        let nu = 1.0;
        let s = series_of(|t| 2.0 + (nu * t).sin(), 80.0, core::f64::consts::TAU / 64.0);
        let c = transient_cutoff(&s, nu).unwrap();
        assert!(c.settled);
        assert!(c.t_settle < 1e-9);
    }

    #[test]
    fn decaying_transient_settles_late() {
        let tau = 10.0;
        let s = series_of(|t| 1.0 + (-t / tau).exp(), 40.0 * core::f64::consts::TAU, 0.05);
        let c = transient_cutoff(&s, 1.0).unwrap();
        assert!(c.settled);
        // the settle point must fall after the decay became slow enough
        assert!(c.t_settle > 2.0 * tau, "settled at {}", c.t_settle);
    }

    #[test]
    fn growing_series_never_settles() {
        let s = series_of(|t| (0.01 * t).exp(), 80.0, 0.05);
        let c = transient_cutoff(&s, 1.0).unwrap();
        assert!(!c.settled);
        match period_average(&s, 1.0, 2) {
            Err(Error::Unsettled { .. }) => {}
            other => panic!("expected unsettled, got {other:?}"),
        }
    }

    #[test]
    fn short_series_is_rejected() {
        let s = series_of(|_| 1.0, 3.0 * core::f64::consts::TAU, 0.1);
        match transient_cutoff(&s, 1.0) {
            Err(Error::ShortSeries { have, need }) => {
                assert!((have - 3.0).abs() < 0.01);
                assert_eq!(need, 6.0);
            }
            other => panic!("expected short series, got {other:?}"),
        }
    }

    #[test]
    fn period_average_recovers_offset_of_sinusoid() {
        let nu = 3.0;
        let dt = core::f64::consts::TAU / nu / 128.0;
        let s = series_of(|t| 0.75 + 0.5 * (nu * t).sin() - 0.2 * (2.0 * nu * t).cos(), 40.0, dt);
        let avg = period_average(&s, nu, 10).unwrap();
        assert!((avg - 0.75).abs() < 1e-10, "avg = {avg}");
    }

    #[test]
    fn accumulator_matches_direct_binning() {
        let period = 2.0;
        let n_per = 50u64;
        let mut acc = PeriodAccumulator::new(0.0, period, n_per, true);
        // feed synthetic diagonal covariances whose phonon number ramps
        let total = 3 * n_per;
        for k in 0..=total {
            let n = 0.001 * k as f64;
            acc.push(&initial_covariance(n));
        }
        let means = acc.means();
        assert_eq!(means.len(), 3);
        // left-rectangle mean of a linear ramp over period p: value at
        // the period midpoint minus half a step
        let expect0 = 0.001 * (0.5 * (n_per - 1) as f64);
        assert!((means[0].phonon - expect0).abs() < 1e-12);
        assert_eq!(means[0].index, 0);
        assert!((means[0].t_mid - 1.0).abs() < 1e-12);
        assert!(means[0].logneg.unwrap().abs() < 1e-12);
        assert!((means[2].phonon - (0.001 * 2.0 * n_per as f64 + expect0)).abs() < 1e-12);
        let tail = acc.tail_phonon(2).unwrap();
        assert!((tail - 0.5 * (means[1].phonon + means[2].phonon)).abs() < 1e-12);
        assert!(acc.tail_phonon(4).is_none());
    }
}
