//! Run configuration. A run is described by one TOML document with a single
//! parameter block (laboratory units in `[physical]` or mechanical units in
//! `[reduced]`), optional `[modulation]` and `[simulation]` settings, and a
//! `[task]` section consumed by the subcommand. Unknown keys are rejected
//! everywhere so typos fail loudly instead of silently using a default.

use std::path::Path;

use serde::Deserialize;

use optoshake_core::dynamics::MAX_STEP;
use optoshake_core::model::MAX_MODULATION_DEPTH;
use optoshake_core::stability::ParamField;

use crate::errors::{AppError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub physical: Option<PhysicalBlock>,
    pub reduced: Option<ReducedBlock>,
    #[serde(default)]
    pub modulation: ModulationBlock,
    #[serde(default)]
    pub simulation: SimulationBlock,
    #[serde(default)]
    pub task: TaskBlock,
    #[serde(default)]
    pub output: OutputBlock,
}

/// Laboratory-frame parameters. Frequencies and rates are angular (rad/s),
/// power is in watts, temperature in kelvin. The carrier is given either as
/// `omega_l` (rad/s) or as the detuning `delta_c` in units of `omega_m`;
/// the drive strength either as `power` or as a `coupling_target` (the
/// linearized coupling magnitude, in units of `omega_m`).
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalBlock {
    pub omega_c: f64,
    pub omega_m: f64,
    pub omega_l: Option<f64>,
    pub delta_c: Option<f64>,
    pub kappa: f64,
    pub gamma: f64,
    pub g: f64,
    pub power: Option<f64>,
    pub coupling_target: Option<f64>,
    #[serde(default)]
    pub temperature: f64,
}

/// Parameters already in mechanical units. The bath is given either as a
/// phonon occupation `n_th` or as a `temperature` in kelvin, the latter
/// needing `ref_omega_m` (rad/s) to evaluate the occupation. `coupling` is
/// the linearized coupling in units of the mechanical frequency.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReducedBlock {
    pub kappa: f64,
    pub gamma: f64,
    pub delta_c_prime: f64,
    pub coupling: f64,
    pub n_th: Option<f64>,
    pub temperature: Option<f64>,
    pub ref_omega_m: Option<f64>,
}

/// Drive-frequency modulation: depth `xi` and frequency `nu`, the latter in
/// units of the mechanical frequency.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModulationBlock {
    #[serde(default)]
    pub xi: f64,
    #[serde(default = "default_nu")]
    pub nu: f64,
}

fn default_nu() -> f64 {
    30.0
}

impl Default for ModulationBlock {
    fn default() -> Self {
        ModulationBlock { xi: 0.0, nu: default_nu() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GMode {
    /// Coupling frozen at its calibration value.
    #[default]
    Static,
    /// Coupling follows the instantaneous classical cavity field. Needs a
    /// power-calibrated `[physical]` block.
    Dynamic,
}

/// Integration and averaging settings. Times are counted in mechanical
/// periods for the total span and in bookkeeping periods (the modulation
/// period when modulation is on, one mechanical period otherwise) for the
/// storage tail and the averaging window.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationBlock {
    #[serde(default = "default_t_max")]
    pub t_max_periods: f64,
    #[serde(default = "default_spp")]
    pub steps_per_period: u32,
    pub dt_override: Option<f64>,
    #[serde(default = "default_averaging")]
    pub averaging_periods: u32,
    #[serde(default = "default_tail")]
    pub tail_periods: u32,
    #[serde(default = "default_ceiling")]
    pub divergence_ceiling: f64,
    #[serde(default)]
    pub store_every_step: bool,
    #[serde(default)]
    pub g_mode: GMode,
}

fn default_t_max() -> f64 {
    3000.0
}
fn default_spp() -> u32 {
    64
}
fn default_averaging() -> u32 {
    10
}
fn default_tail() -> u32 {
    12
}
fn default_ceiling() -> f64 {
    1e12
}

impl Default for SimulationBlock {
    fn default() -> Self {
        SimulationBlock {
            t_max_periods: default_t_max(),
            steps_per_period: default_spp(),
            dt_override: None,
            averaging_periods: default_averaging(),
            tail_periods: default_tail(),
            divergence_ceiling: default_ceiling(),
            store_every_step: false,
            g_mode: GMode::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodChoice {
    Eigenvalues,
    Routh,
    Floquet,
    /// Floquet when modulation is on, eigenvalues otherwise.
    #[default]
    Auto,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

/// One sweep axis: a named parameter scanned from `start` to `stop` in
/// `count` points, linearly or geometrically. Endpoints are hit exactly.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepBlock {
    pub name: String,
    pub start: f64,
    pub stop: f64,
    pub count: u32,
    #[serde(default)]
    pub scale: Scale,
}

impl SweepBlock {
    pub fn target(&self) -> Result<SweepTarget> {
        SweepTarget::parse(&self.name)
    }

    pub fn values(&self) -> Vec<f64> {
        let n = self.count.max(2) as usize;
        let mut out = Vec::with_capacity(n);
        match self.scale {
            Scale::Linear => {
                let step = (self.stop - self.start) / (n as f64 - 1.0);
                for i in 0..n {
                    out.push(self.start + i as f64 * step);
                }
            }
            Scale::Log => {
                let rate = (self.stop / self.start).ln() / (n as f64 - 1.0);
                for i in 0..n {
                    out.push(self.start * (i as f64 * rate).exp());
                }
            }
        }
        // the arithmetic above hits `start` exactly; pin the other end too
        out[n - 1] = self.stop;
        out
    }

    fn validate(&self, label: &str) -> Result<()> {
        self.target()?;
        if !self.start.is_finite() || !self.stop.is_finite() {
            return Err(AppError::Config(format!("{label}: start and stop must be finite")));
        }
        if self.count < 2 {
            return Err(AppError::Config(format!("{label}: count must be at least 2")));
        }
        if self.scale == Scale::Log && (self.start <= 0.0 || self.stop <= 0.0) {
            return Err(AppError::Config(format!(
                "{label}: log scale needs positive start and stop"
            )));
        }
        Ok(())
    }
}

/// What a named sweep axis acts on: a field of the reduced parameter set,
/// or a laboratory quantity that forces a fresh calibration per point.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepTarget {
    Reduced(ParamField),
    /// Bare detuning in units of `omega_m`; moves the carrier frequency.
    DeltaC,
    /// Input power in watts.
    Power,
    /// Bath temperature in kelvin.
    Temperature,
}

impl SweepTarget {
    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "kappa" => SweepTarget::Reduced(ParamField::Kappa),
            "gamma" => SweepTarget::Reduced(ParamField::Gamma),
            "n_th" => SweepTarget::Reduced(ParamField::NTh),
            "delta_c_prime" => SweepTarget::Reduced(ParamField::DeltaCPrime),
            "coupling" => SweepTarget::Reduced(ParamField::CouplingAbs),
            "xi" => SweepTarget::Reduced(ParamField::Xi),
            "nu" => SweepTarget::Reduced(ParamField::Nu),
            "delta_c" => SweepTarget::DeltaC,
            "power" => SweepTarget::Power,
            "temperature" => SweepTarget::Temperature,
            other => {
                return Err(AppError::Config(format!(
                    "unknown sweep parameter {other:?}; expected one of kappa, gamma, n_th, \
                     delta_c_prime, coupling, xi, nu, delta_c, power, temperature"
                )))
            }
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            SweepTarget::Reduced(ParamField::Kappa) => "kappa",
            SweepTarget::Reduced(ParamField::Gamma) => "gamma",
            SweepTarget::Reduced(ParamField::NTh) => "n_th",
            SweepTarget::Reduced(ParamField::DeltaCPrime) => "delta_c_prime",
            SweepTarget::Reduced(ParamField::CouplingAbs) => "coupling",
            SweepTarget::Reduced(ParamField::Xi) => "xi",
            SweepTarget::Reduced(ParamField::Nu) => "nu",
            SweepTarget::DeltaC => "delta_c",
            SweepTarget::Power => "power",
            SweepTarget::Temperature => "temperature",
        }
    }
}

/// Parses a command-line sweep axis `name=start:stop:count[:scale]`.
pub fn parse_sweep_flag(text: &str) -> Result<SweepBlock> {
    let bad = || {
        AppError::Config(format!(
            "sweep flag {text:?} must look like name=start:stop:count[:scale]"
        ))
    };
    let (name, rest) = text.split_once('=').ok_or_else(bad)?;
    let parts: Vec<&str> = rest.split(':').collect();
    if parts.len() < 3 || parts.len() > 4 {
        return Err(bad());
    }
    let start: f64 = parts[0].parse().map_err(|_| bad())?;
    let stop: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: u32 = parts[2].parse().map_err(|_| bad())?;
    let scale = match parts.get(3) {
        None => Scale::Linear,
        Some(&"linear") => Scale::Linear,
        Some(&"log") => Scale::Log,
        Some(other) => {
            return Err(AppError::Config(format!(
                "sweep scale {other:?} must be linear or log"
            )))
        }
    };
    let block = SweepBlock { name: name.to_string(), start, stop, count, scale };
    block.validate("sweep flag")?;
    Ok(block)
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskBlock {
    pub sweep: Option<SweepBlock>,
    pub sweep2: Option<SweepBlock>,
    #[serde(default)]
    pub method: MethodChoice,
    pub rwa_frequencies: Option<Vec<f64>>,
    #[serde(default)]
    pub export_meanfield: bool,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    /// File-name prefix for everything the run writes; defaults to "run".
    pub prefix: Option<String>,
    /// Worker threads for multi-point tasks; defaults to all cores.
    pub parallel: Option<usize>,
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            AppError::Config(format!("cannot read {}: {e}", path.display()))
        })?;
        let config: RunConfig = toml::from_str(&text).map_err(|e| {
            AppError::Config(format!("{}: {e}", path.display()))
        })?;
        config.validate()?;
        Ok(config)
    }

    pub fn prefix(&self) -> &str {
        self.output.prefix.as_deref().unwrap_or("run")
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.physical, &self.reduced) {
            (Some(_), Some(_)) => {
                return Err(AppError::Config(
                    "give either [physical] or [reduced], not both".into(),
                ))
            }
            (None, None) => {
                return Err(AppError::Config(
                    "a [physical] or [reduced] parameter block is required".into(),
                ))
            }
            _ => {}
        }
        if let Some(p) = &self.physical {
            p.validate()?;
        }
        if let Some(r) = &self.reduced {
            r.validate()?;
        }

        let m = &self.modulation;
        if !m.xi.is_finite() || m.xi < 0.0 || m.xi > MAX_MODULATION_DEPTH {
            return Err(AppError::Config(format!(
                "modulation.xi must lie in [0, {MAX_MODULATION_DEPTH}]"
            )));
        }
        if !m.nu.is_finite() || m.nu <= 0.0 {
            return Err(AppError::Config("modulation.nu must be positive".into()));
        }

        let s = &self.simulation;
        if !s.t_max_periods.is_finite() || s.t_max_periods <= 0.0 {
            return Err(AppError::Config("simulation.t_max_periods must be positive".into()));
        }
        if s.steps_per_period == 0 {
            return Err(AppError::Config("simulation.steps_per_period must be at least 1".into()));
        }
        if let Some(dt) = s.dt_override {
            if !dt.is_finite() || dt <= 0.0 || dt > MAX_STEP {
                return Err(AppError::Config(format!(
                    "simulation.dt_override must lie in (0, {MAX_STEP:.6e}]"
                )));
            }
        }
        if s.averaging_periods == 0 {
            return Err(AppError::Config("simulation.averaging_periods must be at least 1".into()));
        }
        if s.tail_periods < s.averaging_periods {
            return Err(AppError::Config(
                "simulation.tail_periods must cover the averaging window \
                 (tail_periods >= averaging_periods)"
                    .into(),
            ));
        }
        if s.divergence_ceiling.is_nan() || s.divergence_ceiling <= 1.0 {
            return Err(AppError::Config("simulation.divergence_ceiling must exceed 1".into()));
        }
        if s.g_mode == GMode::Dynamic {
            let ok = self.physical.as_ref().is_some_and(|p| p.power.is_some());
            if !ok {
                return Err(AppError::Config(
                    "g_mode = \"dynamic\" needs a power-driven [physical] block; the coupling \
                     cannot follow the cavity field without a drive amplitude"
                        .into(),
                ));
            }
        }

        if let Some(sweep) = &self.task.sweep {
            sweep.validate("task.sweep")?;
        }
        if let Some(sweep) = &self.task.sweep2 {
            sweep.validate("task.sweep2")?;
        }
        if let Some(freqs) = &self.task.rwa_frequencies {
            if freqs.is_empty() {
                return Err(AppError::Config("task.rwa_frequencies must be nonempty".into()));
            }
            if freqs.iter().any(|f| !f.is_finite() || *f <= 0.0) {
                return Err(AppError::Config(
                    "task.rwa_frequencies must all be positive".into(),
                ));
            }
        }
        if let Some(n) = self.output.parallel {
            if n == 0 {
                return Err(AppError::Config("output.parallel must be at least 1".into()));
            }
        }
        Ok(())
    }
}

impl PhysicalBlock {
    fn validate(&self) -> Result<()> {
        match (self.omega_l, self.delta_c) {
            (Some(_), Some(_)) => {
                return Err(AppError::Config(
                    "physical: give either omega_l or delta_c, not both".into(),
                ))
            }
            (None, None) => {
                return Err(AppError::Config(
                    "physical: the carrier needs omega_l (rad/s) or delta_c (omega_m units)"
                        .into(),
                ))
            }
            _ => {}
        }
        match (self.power, self.coupling_target) {
            (Some(_), Some(_)) => {
                return Err(AppError::Config(
                    "physical: give either power or coupling_target, not both".into(),
                ))
            }
            (None, None) => {
                return Err(AppError::Config(
                    "physical: the drive needs power (W) or coupling_target (omega_m units)"
                        .into(),
                ))
            }
            _ => {}
        }
        // numeric ranges are enforced again by the model validation; the
        // checks here exist to fail at configuration time with exit code 2
        if !self.omega_m.is_finite() || self.omega_m <= 0.0 {
            return Err(AppError::Config("physical.omega_m must be positive".into()));
        }
        if !self.omega_c.is_finite() || self.omega_c <= 0.0 {
            return Err(AppError::Config("physical.omega_c must be positive".into()));
        }
        Ok(())
    }
}

impl ReducedBlock {
    fn validate(&self) -> Result<()> {
        match (self.n_th, self.temperature) {
            (Some(_), Some(_)) => {
                return Err(AppError::Config(
                    "reduced: give either n_th or temperature, not both".into(),
                ))
            }
            (None, None) => {
                return Err(AppError::Config(
                    "reduced: the bath needs n_th or temperature (with ref_omega_m)".into(),
                ))
            }
            _ => {}
        }
        if self.temperature.is_some() && self.ref_omega_m.is_none() {
            return Err(AppError::Config(
                "reduced: temperature needs ref_omega_m (rad/s) to evaluate the occupation"
                    .into(),
            ));
        }
        if let Some(w) = self.ref_omega_m {
            if !w.is_finite() || w <= 0.0 {
                return Err(AppError::Config("reduced.ref_omega_m must be positive".into()));
            }
        }
        Ok(())
    }
}
