//! Parameter types and the conversion from laboratory quantities to the
//! reduced (mechanically scaled) parameter set used by the dynamics code.
//!
//! Two levels exist. [`PhysicalParams`] carries angular frequencies in rad/s,
//! power in watts and temperature in kelvin. [`ReducedParams`] is what every
//! solver consumes: all rates are divided by the mechanical frequency, so the
//! mechanical oscillator has unit frequency and time is measured in units of
//! its inverse. [`reduce`] bridges the two by calibrating the intracavity
//! field and the resulting linearized coupling.

use num_complex::Complex64;
// float math for no_std builds; test builds pull std into the crate graph
// and its inherent methods shadow the trait
#[allow(unused_imports)]
use num_traits::Float;

use crate::{meanfield, Error, Result};

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Laboratory-frame cavity optomechanics parameters. All frequencies and
/// rates are angular (rad/s).
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalParams {
    /// Cavity resonance frequency.
    pub omega_c: f64,
    /// Mechanical resonance frequency.
    pub omega_m: f64,
    /// Drive (carrier) frequency.
    pub omega_l: f64,
    /// Cavity energy decay rate.
    pub kappa: f64,
    /// Mechanical energy decay rate.
    pub gamma: f64,
    /// Single-photon optomechanical coupling rate.
    pub g: f64,
    /// Input drive power in watts, if the drive is specified by power.
    pub power: Option<f64>,
    /// Bath temperature in kelvin.
    pub temperature: f64,
}

impl PhysicalParams {
    /// Carrier detuning from cavity resonance, `omega_c - omega_l`.
    pub fn delta_c(&self) -> f64 {
        self.omega_c - self.omega_l
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = self.omega_c.is_finite()
            && self.omega_m.is_finite()
            && self.omega_l.is_finite()
            && self.kappa.is_finite()
            && self.gamma.is_finite()
            && self.g.is_finite()
            && self.temperature.is_finite();
        if !all_finite {
            return Err(Error::InvalidParams("physical parameters must be finite"));
        }
        if self.omega_m <= 0.0 {
            return Err(Error::InvalidParams("mechanical frequency must be positive"));
        }
        if self.omega_c <= 0.0 || self.omega_l <= 0.0 {
            return Err(Error::InvalidParams("optical frequencies must be positive"));
        }
        if self.kappa < 0.0 || self.gamma < 0.0 {
            return Err(Error::InvalidParams("decay rates must be nonnegative"));
        }
        if self.g < 0.0 {
            return Err(Error::InvalidParams("single-photon coupling must be nonnegative"));
        }
        if self.temperature < 0.0 {
            return Err(Error::InvalidParams("temperature must be nonnegative"));
        }
        if let Some(p) = self.power {
            if !p.is_finite() || p < 0.0 {
                return Err(Error::InvalidParams("drive power must be finite and nonnegative"));
            }
        }
        Ok(())
    }
}

/// Periodic modulation of the drive frequency. The instantaneous detuning
/// gains a term `xi * nu * cos(nu * t)`.
///
/// `nu` is always expressed in units of the mechanical frequency, matching
/// the reduced time axis; `xi` is the dimensionless modulation depth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModulationParams {
    /// Dimensionless modulation depth.
    pub xi: f64,
    /// Modulation frequency in units of the mechanical frequency.
    pub nu: f64,
}

impl ModulationParams {
    /// No modulation; `nu` is set to 1 so the bookkeeping period stays finite.
    pub fn none() -> Self {
        ModulationParams { xi: 0.0, nu: 1.0 }
    }
}

/// Largest modulation depth the sideband-weight evaluation is validated for.
pub const MAX_MODULATION_DEPTH: f64 = 50.0;

/// Parameter set in mechanical units: every rate below is the physical rate
/// divided by the mechanical frequency, and the mechanical oscillator itself
/// has unit frequency.
///
/// The optional fields carry calibration context filled in by [`reduce`];
/// they are `None` when the struct is built directly, and only the
/// mean-field routines consult them.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedParams {
    /// Cavity decay rate.
    pub kappa: f64,
    /// Mechanical decay rate.
    pub gamma: f64,
    /// Thermal phonon occupation of the mechanical bath.
    pub n_th: f64,
    /// Effective cavity detuning including the static radiation-pressure
    /// shift.
    pub delta_c_prime: f64,
    /// Linearized optomechanical coupling (may be complex; its phase is the
    /// intracavity field phase).
    pub coupling: Complex64,
    /// Modulation depth of the drive frequency.
    pub xi: f64,
    /// Modulation frequency.
    pub nu: f64,
    /// Single-photon coupling, when known from a physical calibration.
    pub g: Option<f64>,
    /// Bare detuning (without the radiation-pressure shift), when known.
    pub delta_c: Option<f64>,
    /// Drive amplitude, when known. Real by phase convention.
    pub drive: Option<f64>,
}

impl ReducedParams {
    /// Instantaneous detuning at time `t` (reduced units).
    pub fn detuning(&self, t: f64) -> f64 {
        self.delta_c_prime + self.xi * self.nu * (self.nu * t).cos()
    }

    /// Modulation period `2 pi / nu`.
    pub fn period(&self) -> f64 {
        core::f64::consts::TAU / self.nu
    }

    pub fn validate(&self) -> Result<()> {
        let all_finite = self.kappa.is_finite()
            && self.gamma.is_finite()
            && self.n_th.is_finite()
            && self.delta_c_prime.is_finite()
            && self.coupling.re.is_finite()
            && self.coupling.im.is_finite()
            && self.xi.is_finite()
            && self.nu.is_finite();
        if !all_finite {
            return Err(Error::InvalidParams("reduced parameters must be finite"));
        }
        if self.kappa < 0.0 || self.gamma < 0.0 {
            return Err(Error::InvalidParams("decay rates must be nonnegative"));
        }
        if self.n_th < 0.0 {
            return Err(Error::InvalidParams("thermal occupation must be nonnegative"));
        }
        if self.xi < 0.0 || self.xi > MAX_MODULATION_DEPTH {
            return Err(Error::InvalidParams("modulation depth must lie in [0, 50]"));
        }
        if self.nu <= 0.0 {
            return Err(Error::InvalidParams("modulation frequency must be positive"));
        }
        Ok(())
    }
}

/// Mean thermal occupation of a bosonic mode of angular frequency `omega`
/// (rad/s) at `temperature` (kelvin). Temperatures below a microkelvin are
/// treated as zero; the occupation there is below 1e-90000 for any
/// megahertz-scale mode and underflows anyway.
pub fn thermal_occupation(omega: f64, temperature: f64) -> f64 {
    debug_assert!(omega > 0.0 && omega.is_finite());
    debug_assert!(temperature >= 0.0);
    if temperature < 1e-6 {
        return 0.0;
    }
    let x = HBAR * omega / (BOLTZMANN * temperature);
    // exp_m1 keeps precision in the high-temperature limit x -> 0 where
    // exp(x) - 1 would cancel.
    1.0 / x.exp_m1()
}

/// Drive amplitude `sqrt(2 kappa P / (hbar omega_l))` in rad/s, for input
/// power `P` in watts.
pub fn drive_amplitude(power: f64, kappa: f64, omega_l: f64) -> f64 {
    debug_assert!(power >= 0.0 && kappa >= 0.0 && omega_l > 0.0);
    (2.0 * kappa * power / (HBAR * omega_l)).sqrt()
}

/// Converts laboratory parameters to the reduced set.
///
/// With `coupling_override = None` the drive power is required: the
/// intracavity field is solved self-consistently (the cavity field shifts
/// the mirror, the mirror shifts the detuning) and the linearized coupling
/// is `g * alpha`. With `Some(big_g)` (rad/s, same units as the other
/// rates) the coupling is pinned instead and only the static
/// radiation-pressure detuning shift implied by that coupling is applied;
/// this is the mode used when a target coupling is specified directly.
pub fn reduce(
    params: &PhysicalParams,
    modulation: &ModulationParams,
    coupling_override: Option<Complex64>,
) -> Result<ReducedParams> {
    params.validate()?;
    let w = params.omega_m;
    let n_th = thermal_occupation(w, params.temperature);

    let reduced = match coupling_override {
        Some(big_g) => {
            if !big_g.re.is_finite() || !big_g.im.is_finite() {
                return Err(Error::InvalidParams("coupling override must be finite"));
            }
            // The static mirror displacement produced by the intracavity
            // field depends on g and |alpha| only through |g alpha|^2, so
            // the shift is well defined even when g itself is not used.
            let shift = 2.0 * big_g.norm_sqr() * w
                / (0.25 * params.gamma * params.gamma + w * w);
            ReducedParams {
                kappa: params.kappa / w,
                gamma: params.gamma / w,
                n_th,
                delta_c_prime: (params.delta_c() - shift) / w,
                coupling: big_g / w,
                xi: modulation.xi,
                nu: modulation.nu,
                g: Some(params.g / w),
                delta_c: Some(params.delta_c() / w),
                drive: None,
            }
        }
        None => {
            let power = params
                .power
                .ok_or(Error::InvalidParams("drive power is required to calibrate the coupling"))?;
            let drive = drive_amplitude(power, params.kappa, params.omega_l);
            let steady = meanfield::steady_mean_fields(params, drive)?;
            ReducedParams {
                kappa: params.kappa / w,
                gamma: params.gamma / w,
                n_th,
                delta_c_prime: steady.delta_c_prime / w,
                coupling: steady.coupling / w,
                xi: modulation.xi,
                nu: modulation.nu,
                g: Some(params.g / w),
                delta_c: Some(params.delta_c() / w),
                drive: Some(drive / w),
            }
        }
    };
    reduced.validate()?;
    Ok(reduced)
}

#[cfg(test)]
mod tests {
    use super::*;

    const TWO_PI: f64 = core::f64::consts::TAU;

    fn microwave_params() -> PhysicalParams {
        PhysicalParams {
            omega_c: TWO_PI * 7.54e9,
            omega_m: TWO_PI * 10.56e6,
            omega_l: TWO_PI * 7.54e9,
            kappa: TWO_PI * 0.2e6,
            gamma: TWO_PI * 32.0,
            g: TWO_PI * 200.0,
            power: None,
            temperature: 0.0,
        }
    }

    #[test]
    fn thermal_occupation_reference_values() {
        let w = TWO_PI * 10.56e6;
        let cases = [
            (0.5, 986.08242992569977),
            (0.05, 98.159079211236385),
            (0.1, 196.81689142501404),
            (0.15, 295.47498519324685),
            (0.2, 394.13314935028177),
        ];
        for (t, want) in cases {
            let got = thermal_occupation(w, t);
            assert!((got - want).abs() < 1e-9 * want, "T={t}: {got} vs {want}");
        }
        assert_eq!(thermal_occupation(w, 0.0), 0.0);
        assert_eq!(thermal_occupation(w, 9e-7), 0.0);
    }

    #[test]
    fn thermal_occupation_high_temperature_limit() {
        // n_th -> kT/(hbar w) - 1/2 as T grows
        let w = TWO_PI * 10.56e6;
        let t = 300.0;
        let classical = BOLTZMANN * t / (HBAR * w) - 0.5;
        let got = thermal_occupation(w, t);
        assert!((got - classical).abs() / classical < 1e-6);
    }

    #[test]
    fn drive_amplitude_reference_value() {
        let e = drive_amplitude(1e-3, TWO_PI * 0.2e6, TWO_PI * 7.54e9);
        assert!((e - 2.242881053653274e13).abs() < 1e0, "{e}");
    }

    #[test]
    fn reduced_rates_for_microwave_cavity() {
        let mut p = microwave_params();
        p.power = Some(1e-9);
        let r = reduce(&p, &ModulationParams::none(), None).unwrap();
        assert!((r.kappa - 0.018939393939393939).abs() < 1e-15);
        assert!((r.gamma - 3.0303030303030303e-6).abs() < 1e-18);
        assert!((r.g.unwrap() - 1.8939393939393939e-5).abs() < 1e-18);
    }

    #[test]
    fn power_calibration_reduces_self_consistently() {
        // weak drive: the working point is unique and the reduced numbers
        // must satisfy the steady-state relations among themselves
        let mut p = microwave_params();
        p.omega_c = p.omega_l + p.omega_m;
        p.power = Some(1e-9);
        let r = reduce(&p, &ModulationParams::none(), None).unwrap();
        let e = r.drive.unwrap();
        let alpha = e / (0.25 * r.kappa * r.kappa + r.delta_c_prime * r.delta_c_prime).sqrt();
        let big_g = r.g.unwrap() * alpha;
        assert!(
            (r.coupling.norm() - big_g).abs() < 1e-9 * big_g,
            "|G| = {}, g|alpha| = {big_g}",
            r.coupling.norm()
        );
        let shift = 2.0 * r.coupling.norm_sqr() / (1.0 + 0.25 * r.gamma * r.gamma);
        assert!((r.delta_c.unwrap() - shift - r.delta_c_prime).abs() < 1e-9);
        // nanowatt driving at these rates sits in the few-per-mil range
        assert!(big_g > 5e-3 && big_g < 8e-3, "coupling {big_g}");
    }

    #[test]
    fn override_applies_static_shift() {
        let p = microwave_params();
        let g = Complex64::new(p.omega_m, 0.0);
        let r = reduce(&p, &ModulationParams { xi: 2.2, nu: 30.0 }, Some(g)).unwrap();
        // bare detuning zero, so the shifted detuning is minus the shift
        let want = -2.0 / (1.0 + (r.gamma / 2.0).powi(2));
        assert!((r.delta_c_prime - want).abs() < 1e-12, "{}", r.delta_c_prime);
        assert!((r.coupling.re - 1.0).abs() < 1e-15);
        assert_eq!(r.drive, None);
        assert_eq!(r.xi, 2.2);
        assert_eq!(r.nu, 30.0);
    }

    #[test]
    fn validation_rejects_bad_inputs() {
        let mut p = microwave_params();
        p.temperature = -1.0;
        assert!(p.validate().is_err());

        let r = ReducedParams {
            kappa: 0.019,
            gamma: 3e-6,
            n_th: 0.0,
            delta_c_prime: 1.0,
            coupling: Complex64::new(1.0, 0.0),
            xi: 51.0,
            nu: 30.0,
            g: None,
            delta_c: None,
            drive: None,
        };
        assert!(r.validate().is_err());
        let ok = ReducedParams { xi: 2.2, ..r.clone() };
        assert!(ok.validate().is_ok());
        let bad_nu = ReducedParams { xi: 0.0, nu: 0.0, ..r };
        assert!(bad_nu.validate().is_err());
    }

    #[test]
    fn detuning_oscillates_about_static_value() {
        let r = ReducedParams {
            kappa: 0.019,
            gamma: 3e-6,
            n_th: 0.0,
            delta_c_prime: 1.0,
            coupling: Complex64::new(1.0, 0.0),
            xi: 2.2,
            nu: 30.0,
            g: None,
            delta_c: None,
            drive: None,
        };
        assert!((r.detuning(0.0) - (1.0 + 2.2 * 30.0)).abs() < 1e-12);
        let quarter = 0.25 * r.period();
        assert!((r.detuning(quarter) - 1.0).abs() < 1e-10);
    }
}
