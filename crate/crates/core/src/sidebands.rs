//! Sideband decomposition of the modulated detuning.
//!
//! A drive whose frequency is wobbled at rate `nu` with depth `xi` splits
//! into carrier plus sidebands weighted by Bessel functions of the first
//! kind, `J_k(xi)`. This module evaluates those weights, tabulates the
//! resonance mismatch of each sideband against the mechanical frequency,
//! and builds the effective time-independent model in which only the
//! sideband closest to resonance is kept.

use alloc::vec::Vec;
// float math for no_std builds; test builds pull std into the crate graph
// and its inherent methods shadow the trait
#[allow(unused_imports)]
use num_traits::Float;

use crate::model::ReducedParams;
use crate::{Error, Result};

/// Largest order accepted by [`bessel_j`].
pub const MAX_ORDER: i32 = 200;
/// Largest |argument| accepted by [`bessel_j`].
pub const MAX_ARGUMENT: f64 = 50.0;

/// Bessel function of the first kind `J_k(xi)` for integer order.
///
/// Orders up to +-200 and arguments up to +-50 are supported; the absolute
/// error is below 1e-12 across that range. Small arguments use the
/// ascending power series, which is cancellation-free when the argument is
/// below the order scale; larger arguments use downward recurrence
/// normalized by the completeness identity `J_0 + 2 J_2 + 2 J_4 + ... = 1`.
pub fn bessel_j(k: i32, xi: f64) -> Result<f64> {
    if !xi.is_finite() || xi.abs() > MAX_ARGUMENT {
        return Err(Error::BesselRange { k, xi });
    }
    if k.abs() > MAX_ORDER {
        return Err(Error::BesselRange { k, xi });
    }
    // parity reductions: J_{-k}(x) = (-1)^k J_k(x), J_k(-x) = (-1)^k J_k(x)
    let mut sign = 1.0;
    let n = if k < 0 {
        if k % 2 != 0 {
            sign = -sign;
        }
        -k
    } else {
        k
    } as u32;
    let x = if xi < 0.0 {
        if n % 2 != 0 {
            sign = -sign;
        }
        -xi
    } else {
        xi
    };
    if x == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let nf = n as f64;
    let value = if x <= 8.0 || x <= 2.0 * (nf + 1.0).sqrt() {
        series_jn(n, x)
    } else {
        miller_jn(n, x)
    };
    Ok(sign * value)
}

/// Ascending series around x = 0. Valid for any (n, x) but accurate only
/// while the terms do not grow much before decaying; callers restrict to
/// x <= 8 or x^2/4 <= n + 1, where the leading term already bounds the sum.
fn series_jn(n: u32, x: f64) -> f64 {
    let half = 0.5 * x;
    let mut lead = 1.0;
    for i in 1..=n {
        lead *= half / i as f64;
        if lead == 0.0 {
            // (x/2)^n / n! underflowed; the true value is below 1e-300
            return 0.0;
        }
    }
    let q = half * half;
    let mut term = lead;
    let mut sum = lead;
    for j in 1..200u32 {
        term *= -q / (j as f64 * (n + j) as f64);
        sum += term;
        if term.abs() <= f64::EPSILON * sum.abs() * 0.25 {
            break;
        }
    }
    sum
}

/// Downward (Miller) recurrence seeded well above the turning point and
/// normalized by the completeness identity, so no upward instability and no
/// dependence on the arbitrary seed magnitude.
fn miller_jn(n: u32, x: f64) -> f64 {
    let start = (n.max(x.ceil() as u32) + 60) as i64;
    let mut upper = 0.0_f64; // f_{m+1}
    let mut current = 1e-30_f64; // f_m, arbitrary small seed
    let mut norm = 0.0_f64;
    let mut saved = 0.0_f64;
    let mut m = start;
    while m >= 1 {
        let lower = (2.0 * m as f64 / x) * current - upper;
        upper = current;
        current = lower;
        m -= 1;
        if m == n as i64 {
            saved = current;
        }
        if m >= 2 && m % 2 == 0 {
            norm += 2.0 * current;
        }
        if current.abs() > 1e250 {
            let s = 1e-250;
            upper *= s;
            current *= s;
            norm *= s;
            saved *= s;
        }
    }
    norm += current; // f_0
    if n == 0 {
        saved = current;
    }
    saved / norm
}

/// Default sideband cutoff for depth `xi`: generous enough that the
/// completeness residual of the retained weights is at machine level.
pub fn default_truncation(xi: f64) -> i32 {
    let xi = xi.abs().min(MAX_ARGUMENT);
    let k = (xi + 10.0 * xi.cbrt() + 10.0).ceil() as i32;
    k.min(MAX_ORDER)
}

/// One sideband of the modulated drive.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidebandEntry {
    /// Sideband index.
    pub k: i32,
    /// Amplitude weight `J_k(xi)`.
    pub weight: f64,
    /// Mismatch of the beam-splitter (state-swap) resonance:
    /// `delta_c_prime - 1 + k nu`. Zero means this sideband swaps cavity
    /// and mechanical excitations resonantly.
    pub bs_detuning: f64,
    /// Mismatch of the two-mode-squeezing resonance:
    /// `delta_c_prime + 1 + k nu`. Zero means this sideband pairs
    /// excitations resonantly.
    pub tms_detuning: f64,
}

/// Sideband weights and resonance mismatches for `|k| <= k_max`, ordered by
/// ascending index.
#[derive(Debug, Clone, PartialEq)]
pub struct SidebandTable {
    pub entries: Vec<SidebandEntry>,
    /// Modulation depth the table was built for.
    pub xi: f64,
    /// Completeness defect `1 - sum_k J_k(xi)^2` of the retained weights.
    pub residual: f64,
}

/// Residual above which a sideband table is considered truncated too early.
const TRUNCATION_RESIDUAL: f64 = 1e-12;

/// Tabulates sideband weights and resonance mismatches for the given
/// parameters. Fails with [`Error::Truncation`] if `k_max` keeps less than
/// `1 - 1e-12` of the total weight; [`default_truncation`] always passes.
pub fn sideband_table(params: &ReducedParams, k_max: i32) -> Result<SidebandTable> {
    params.validate()?;
    if k_max < 0 || k_max > MAX_ORDER {
        return Err(Error::BesselRange { k: k_max, xi: params.xi });
    }
    let mut entries = Vec::with_capacity(2 * k_max as usize + 1);
    let mut weight_sq = 0.0;
    for k in -k_max..=k_max {
        let weight = bessel_j(k, params.xi)?;
        weight_sq += weight * weight;
        entries.push(SidebandEntry {
            k,
            weight,
            bs_detuning: params.delta_c_prime - 1.0 + k as f64 * params.nu,
            tms_detuning: params.delta_c_prime + 1.0 + k as f64 * params.nu,
        });
    }
    let residual = 1.0 - weight_sq;
    if residual > TRUNCATION_RESIDUAL {
        return Err(Error::Truncation {
            requested: k_max,
            required: default_truncation(params.xi),
            residual,
        });
    }
    Ok(SidebandTable { entries, xi: params.xi, residual })
}

/// Index of the sideband whose beam-splitter resonance mismatch
/// `|delta_c_prime - 1 + k nu|` is smallest. Ties break toward smaller |k|.
pub fn nearest_resonant_index(delta_c_prime: f64, nu: f64) -> i32 {
    debug_assert!(nu > 0.0);
    let q = (1.0 - delta_c_prime) / nu;
    let lo = q.floor();
    let hi = lo + 1.0;
    let pick = |a: f64, b: f64| {
        let (da, db) = ((q - a).abs(), (q - b).abs());
        if da < db {
            a
        } else if db < da {
            b
        } else if a.abs() < b.abs() {
            a
        } else if b.abs() < a.abs() {
            b
        } else if a < b {
            a
        } else {
            b
        }
    };
    let k = pick(lo, hi);
    // clamp to i32; beyond +-2^31 sidebands the weight is zero anyway
    k.max(i32::MIN as f64).min(i32::MAX as f64) as i32
}

/// Effective static model retaining only the sideband nearest the
/// beam-splitter resonance.
#[derive(Debug, Clone, PartialEq)]
pub struct RwaModel {
    /// Unmodulated parameter set with the coupling rescaled by the retained
    /// sideband weight.
    pub params: ReducedParams,
    /// Index of the retained sideband.
    pub k0: i32,
    /// Separation of the modulation frequency from the mechanical
    /// frequency, `nu / 1`. The single-sideband picture needs this large.
    pub nu_over_mech: f64,
    /// Separation of the modulation frequency from the strongest sideband
    /// coupling, `nu / (|G| max_k |J_k(xi)|)`. Also needs to be large.
    pub nu_over_coupling: f64,
}

/// Builds the single-sideband effective model: modulation removed, coupling
/// multiplied by `J_{k0}(xi)` where `k0` is the index nearest the
/// beam-splitter resonance, detuning unchanged.
pub fn rwa_reduce(params: &ReducedParams) -> Result<RwaModel> {
    params.validate()?;
    let k0 = nearest_resonant_index(params.delta_c_prime, params.nu);
    let weight = if k0.abs() <= MAX_ORDER {
        bessel_j(k0, params.xi)?
    } else {
        0.0
    };
    let mut max_weight = 0.0_f64;
    for k in 0..=default_truncation(params.xi) {
        max_weight = max_weight.max(bessel_j(k, params.xi)?.abs());
    }
    let strongest = params.coupling.norm() * max_weight;
    let nu_over_coupling = if strongest > 0.0 { params.nu / strongest } else { f64::INFINITY };
    let reduced = ReducedParams {
        xi: 0.0,
        coupling: params.coupling * weight,
        g: None,
        delta_c: None,
        drive: None,
        ..params.clone()
    };
    Ok(RwaModel { params: reduced, k0, nu_over_mech: params.nu, nu_over_coupling })
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn params(delta: f64, xi: f64, nu: f64) -> ReducedParams {
        ReducedParams {
            kappa: 0.018939393939393939,
            gamma: 3.0303030303030303e-6,
            n_th: 0.0,
            delta_c_prime: delta,
            coupling: Complex64::new(1.0, 0.0),
            xi,
            nu,
            g: None,
            delta_c: None,
            drive: None,
        }
    }

    #[test]
    fn bessel_reference_values() {
        let cases: &[(i32, f64, f64)] = &[
            (0, 2.2, 0.11036226692217395),
            (1, 2.2, 0.5559630498190639),
            (2, 2.2, 0.3950586874587933),
            (3, 2.2, 0.16232547283328745),
            (0, 2.4048, 1.3268284301081561e-5),
            (0, 5.5, -0.006843869417819197),
            (3, 14.0, -0.176809406865096),
            (7, 50.0, 0.060491201259537108),
            (40, 40.0, 0.1307805452851667),
            (0, 2.4048255576957728, 0.0),
        ];
        for &(k, x, want) in cases {
            let got = bessel_j(k, x).unwrap();
            assert!((got - want).abs() < 1e-12, "J_{k}({x}) = {got}, want {want}");
        }
    }

    #[test]
    fn bessel_tiny_value_keeps_relative_accuracy() {
        let want = 2.6101927127426079e-18;
        let got = bessel_j(20, 2.2).unwrap();
        assert!(((got - want) / want).abs() < 1e-12, "{got}");
    }

    #[test]
    fn bessel_parity() {
        for &(k, x) in &[(3, 2.2), (4, 2.2), (7, 14.0), (2, 50.0)] {
            let a = bessel_j(k, x).unwrap();
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            assert_eq!(bessel_j(-k, x).unwrap(), sign * a);
            assert_eq!(bessel_j(k, -x).unwrap(), sign * a);
            assert_eq!(bessel_j(-k, -x).unwrap(), a);
        }
    }

    #[test]
    fn bessel_three_term_recurrence_in_miller_region() {
        let x = 14.0;
        for k in 1..12 {
            let jm = bessel_j(k - 1, x).unwrap();
            let j0 = bessel_j(k, x).unwrap();
            let jp = bessel_j(k + 1, x).unwrap();
            let lhs = jm + jp;
            let rhs = 2.0 * k as f64 / x * j0;
            assert!((lhs - rhs).abs() < 1e-12, "k={k}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn bessel_domain_errors() {
        assert!(matches!(bessel_j(201, 1.0), Err(Error::BesselRange { .. })));
        assert!(matches!(bessel_j(0, 50.5), Err(Error::BesselRange { .. })));
        assert!(matches!(bessel_j(0, f64::NAN), Err(Error::BesselRange { .. })));
        assert!(bessel_j(-200, -50.0).is_ok());
    }

    #[test]
    fn completeness_at_default_truncation() {
        for &xi in &[0.5, 2.2, 5.5, 14.0, 50.0] {
            let k_max = default_truncation(xi);
            let mut s = 0.0;
            for k in -k_max..=k_max {
                let j = bessel_j(k, xi).unwrap();
                s += j * j;
            }
            assert!((s - 1.0).abs() < 1e-13, "xi={xi}: sum={s}");
        }
    }

    #[test]
    fn truncation_default_is_monotone_and_bounded() {
        assert_eq!(default_truncation(0.0), 10);
        let mut prev = 0;
        for i in 0..=100 {
            let k = default_truncation(i as f64 * 0.5);
            assert!(k >= prev);
            assert!(k <= MAX_ORDER);
            prev = k;
        }
    }

    #[test]
    fn table_entries_and_residual() {
        let p = params(1.0, 2.2, 30.0);
        let table = sideband_table(&p, default_truncation(2.2)).unwrap();
        assert_eq!(table.entries.len(), 2 * default_truncation(2.2) as usize + 1);
        assert!(table.residual.abs() < 1e-13);
        let center = &table.entries[default_truncation(2.2) as usize];
        assert_eq!(center.k, 0);
        assert!((center.weight - 0.11036226692217395).abs() < 1e-12);
        assert!((center.bs_detuning - 0.0).abs() < 1e-15);
        assert!((center.tms_detuning - 2.0).abs() < 1e-15);
        let plus_one = &table.entries[default_truncation(2.2) as usize + 1];
        assert_eq!(plus_one.k, 1);
        assert!((plus_one.bs_detuning - 30.0).abs() < 1e-12);
    }

    #[test]
    fn table_rejects_aggressive_truncation() {
        let p = params(1.0, 2.2, 30.0);
        match sideband_table(&p, 1) {
            Err(Error::Truncation { requested, required, residual }) => {
                assert_eq!(requested, 1);
                assert!(required >= 10);
                assert!(residual > 0.1);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn resonant_index_selection() {
        assert_eq!(nearest_resonant_index(1.0, 30.0), 0);
        assert_eq!(nearest_resonant_index(-29.0, 30.0), 1);
        assert_eq!(nearest_resonant_index(31.0, 30.0), -1);
        assert_eq!(nearest_resonant_index(1.2, 30.0), 0);
        // exact tie lands on the smaller index magnitude
        assert_eq!(nearest_resonant_index(1.0 - 15.0, 30.0), 0);
        assert_eq!(nearest_resonant_index(1.0 + 15.0, 30.0), 0);
    }

    #[test]
    fn rwa_keeps_detuning_and_scales_coupling() {
        let p = params(1.0, 2.2, 30.0);
        let rwa = rwa_reduce(&p).unwrap();
        assert_eq!(rwa.k0, 0);
        assert_eq!(rwa.params.xi, 0.0);
        assert_eq!(rwa.params.delta_c_prime, 1.0);
        assert!((rwa.params.coupling.re - 0.11036226692217395).abs() < 1e-12);
        assert_eq!(rwa.params.coupling.im, 0.0);
        assert!((rwa.nu_over_mech - 30.0).abs() < 1e-15);
        assert!((rwa.nu_over_coupling - 30.0 / 0.55596304981906385).abs() < 1e-6);
    }

    #[test]
    fn rwa_without_modulation_is_identity_on_resonance() {
        let p = params(1.0, 0.0, 30.0);
        let rwa = rwa_reduce(&p).unwrap();
        assert_eq!(rwa.k0, 0);
        assert_eq!(rwa.params.coupling, p.coupling);
    }
}
