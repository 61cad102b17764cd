//! Turns a validated configuration into the reduced parameter set the
//! solvers consume, and re-resolves it per point when a sweep moves a
//! laboratory quantity (carrier detuning, input power, bath temperature)
//! that requires a fresh calibration.

use num_complex::Complex64;

use optoshake_core::model::{
    reduce, thermal_occupation, ModulationParams, PhysicalParams, ReducedParams,
};
use optoshake_core::stability::set_field;
use optoshake_core::Error as CoreError;

use crate::config::{PhysicalBlock, RunConfig, SweepTarget};
use crate::errors::{AppError, Result};

/// A fully resolved working point plus enough context to re-resolve it when
/// a laboratory quantity changes.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub reduced: ReducedParams,
    pub physical: Option<PhysicalParams>,
    /// Pinned coupling magnitude in units of `omega_m`, when the drive was
    /// specified as a coupling target rather than a power.
    pub coupling_override: Option<f64>,
    /// Mechanical frequency (rad/s) for kelvin-to-occupation conversions
    /// when only a reduced block is present.
    pub ref_omega_m: Option<f64>,
}

fn physical_params(block: &PhysicalBlock) -> PhysicalParams {
    // validation guarantees exactly one of omega_l / delta_c
    let omega_l = block
        .omega_l
        .unwrap_or_else(|| block.omega_c - block.delta_c.unwrap_or(0.0) * block.omega_m);
    PhysicalParams {
        omega_c: block.omega_c,
        omega_m: block.omega_m,
        omega_l,
        kappa: block.kappa,
        gamma: block.gamma,
        g: block.g,
        power: block.power,
        temperature: block.temperature,
    }
}

fn base_error(e: CoreError) -> AppError {
    match e {
        CoreError::NonConvergence { iterations, residual } => AppError::Unstable(format!(
            "mean-field calibration did not converge after {iterations} iterations (residual \
             {residual:.3e}): the working point sits at or past a fold of the cavity response; \
             specify the drive as a coupling_target to pin that branch directly"
        )),
        other => AppError::Config(format!("parameter resolution failed: {other}")),
    }
}

/// Resolves the configuration's own working point. Calibration failures at
/// a fold of the cavity response surface map to the unstable exit code.
pub fn base(config: &RunConfig) -> Result<Resolved> {
    let modulation = ModulationParams { xi: config.modulation.xi, nu: config.modulation.nu };

    if let Some(block) = &config.physical {
        let phys = physical_params(block);
        let pin = block.coupling_target;
        let reduced = reduce(
            &phys,
            &modulation,
            pin.map(|c| Complex64::new(c * phys.omega_m, 0.0)),
        )
        .map_err(base_error)?;
        return Ok(Resolved {
            reduced,
            physical: Some(phys),
            coupling_override: pin,
            ref_omega_m: None,
        });
    }

    let block = config.reduced.as_ref().expect("validation requires a parameter block");
    let n_th = match (block.n_th, block.temperature) {
        (Some(n), None) => n,
        (None, Some(t)) => {
            if !t.is_finite() || t < 0.0 {
                return Err(AppError::Config(
                    "reduced.temperature must be finite and nonnegative".into(),
                ));
            }
            thermal_occupation(block.ref_omega_m.expect("validation requires ref_omega_m"), t)
        }
        _ => unreachable!("validation requires exactly one bath specification"),
    };
    let reduced = ReducedParams {
        kappa: block.kappa,
        gamma: block.gamma,
        n_th,
        delta_c_prime: block.delta_c_prime,
        coupling: Complex64::new(block.coupling, 0.0),
        xi: modulation.xi,
        nu: modulation.nu,
        g: None,
        delta_c: None,
        drive: None,
    };
    reduced.validate().map_err(|e| AppError::Config(e.to_string()))?;
    Ok(Resolved { reduced, physical: None, coupling_override: None, ref_omega_m: block.ref_omega_m })
}

/// Checks that the configuration can support a sweep of `target` at all, so
/// impossible sweeps fail at configuration time rather than point by point.
pub fn check_target(config: &RunConfig, target: SweepTarget) -> Result<()> {
    match target {
        SweepTarget::Reduced(_) => Ok(()),
        SweepTarget::DeltaC => {
            if config.physical.is_none() {
                return Err(AppError::Config(
                    "sweeping delta_c needs a [physical] block; with [reduced] parameters \
                     sweep delta_c_prime instead"
                        .into(),
                ));
            }
            Ok(())
        }
        SweepTarget::Power => match &config.physical {
            None => Err(AppError::Config("sweeping power needs a [physical] block".into())),
            Some(p) if p.coupling_target.is_some() => Err(AppError::Config(
                "sweeping power is incompatible with coupling_target: the pinned coupling \
                 would override the calibration the sweep is meant to vary"
                    .into(),
            )),
            Some(_) => Ok(()),
        },
        SweepTarget::Temperature => {
            if config.physical.is_some() {
                return Ok(());
            }
            if config.reduced.as_ref().is_some_and(|r| r.ref_omega_m.is_some()) {
                return Ok(());
            }
            Err(AppError::Config(
                "sweeping temperature needs [physical] parameters or reduced.ref_omega_m to \
                 convert kelvin into an occupation"
                    .into(),
            ))
        }
    }
}

fn re_reduce(phys: &PhysicalParams, base: &Resolved) -> std::result::Result<ReducedParams, String> {
    let modulation = ModulationParams { xi: base.reduced.xi, nu: base.reduced.nu };
    let pin = base.coupling_override.map(|c| Complex64::new(c * phys.omega_m, 0.0));
    reduce(phys, &modulation, pin).map_err(|e| e.to_string())
}

/// Re-resolves the working point with the given parameter changes applied.
/// Laboratory-level changes are applied to the physical parameters and the
/// reduction is redone once; reduced-level changes are applied afterwards.
/// Errors are returned as strings because a failing point in a sweep is a
/// per-point outcome, not a process failure.
pub fn at_values(
    base: &Resolved,
    changes: &[(SweepTarget, f64)],
) -> std::result::Result<ReducedParams, String> {
    let mut phys = base.physical.clone();
    let mut phys_touched = false;
    let mut field_changes: Vec<(optoshake_core::stability::ParamField, f64)> = Vec::new();
    let mut n_th_from_ref: Option<f64> = None;

    for &(target, value) in changes {
        match target {
            SweepTarget::Reduced(field) => field_changes.push((field, value)),
            SweepTarget::DeltaC => {
                let p = phys.as_mut().ok_or("delta_c sweep needs laboratory parameters")?;
                p.omega_l = p.omega_c - value * p.omega_m;
                phys_touched = true;
            }
            SweepTarget::Power => {
                let p = phys.as_mut().ok_or("power sweep needs laboratory parameters")?;
                p.power = Some(value);
                phys_touched = true;
            }
            SweepTarget::Temperature => {
                if let Some(p) = phys.as_mut() {
                    p.temperature = value;
                    phys_touched = true;
                } else {
                    let w = base
                        .ref_omega_m
                        .ok_or("temperature sweep needs ref_omega_m to convert kelvin")?;
                    if !value.is_finite() || value < 0.0 {
                        return Err("temperature must be finite and nonnegative".into());
                    }
                    n_th_from_ref = Some(thermal_occupation(w, value));
                }
            }
        }
    }

    let mut reduced = if phys_touched {
        re_reduce(phys.as_ref().expect("touched implies present"), base)?
    } else {
        base.reduced.clone()
    };
    if let Some(n) = n_th_from_ref {
        reduced.n_th = n;
    }
    for (field, value) in field_changes {
        set_field(&mut reduced, field, value);
    }
    reduced.validate().map_err(|e| e.to_string())?;
    Ok(reduced)
}

pub fn at_value(
    base: &Resolved,
    target: SweepTarget,
    value: f64,
) -> std::result::Result<ReducedParams, String> {
    at_values(base, &[(target, value)])
}
