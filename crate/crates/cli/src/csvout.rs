//! Deterministic file output. CSV files start with `# key = value` comment
//! lines that embed the fully resolved parameters, so a data file is
//! interpretable on its own; the rows themselves are plain CSV. Reruns of
//! the same configuration produce byte-identical CSV files (timestamps live
//! only in the JSON metadata sidecar).

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use serde_json::{json, Value};

use crate::config::{GMode, SimulationBlock};
use crate::resolve::Resolved;

/// Full-precision float formatting: 17 significant digits round-trip f64.
pub fn fmt_f64(x: f64) -> String {
    if x.is_nan() {
        "NaN".to_string()
    } else {
        format!("{x:.16e}")
    }
}

pub fn fmt_bool(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

/// Flattens a message onto one line without the CSV field separator.
pub fn sanitize(message: &str) -> String {
    message.replace(',', ";").replace(['\n', '\r'], " ")
}

pub fn write_csv(
    path: &Path,
    comments: &[(String, String)],
    columns: &[&str],
    rows: &[Vec<String>],
) -> io::Result<()> {
    let mut text = String::new();
    for (key, value) in comments {
        let _ = writeln!(text, "# {key} = {value}");
    }
    let _ = writeln!(text, "{}", columns.join(","));
    for row in rows {
        debug_assert_eq!(row.len(), columns.len());
        let _ = writeln!(text, "{}", row.join(","));
    }
    fs::write(path, text)
}

fn push(list: &mut Vec<(String, String)>, key: &str, value: String) {
    list.push((key.to_string(), value));
}

/// Header comments shared by every output file of a run: the command, the
/// resolved reduced parameters (with calibration context and laboratory
/// parameters when present) and the integration settings.
pub fn run_comments(
    command: &str,
    resolved: &Resolved,
    sim: &SimulationBlock,
) -> Vec<(String, String)> {
    let mut out = Vec::new();
    push(&mut out, "command", command.to_string());
    push(&mut out, "version", env!("CARGO_PKG_VERSION").to_string());

    let r = &resolved.reduced;
    push(&mut out, "kappa", fmt_f64(r.kappa));
    push(&mut out, "gamma", fmt_f64(r.gamma));
    push(&mut out, "n_th", fmt_f64(r.n_th));
    push(&mut out, "delta_c_prime", fmt_f64(r.delta_c_prime));
    push(&mut out, "coupling_re", fmt_f64(r.coupling.re));
    push(&mut out, "coupling_im", fmt_f64(r.coupling.im));
    push(&mut out, "xi", fmt_f64(r.xi));
    push(&mut out, "nu", fmt_f64(r.nu));
    if let Some(g) = r.g {
        push(&mut out, "single_photon_g", fmt_f64(g));
    }
    if let Some(d) = r.delta_c {
        push(&mut out, "bare_delta_c", fmt_f64(d));
    }
    if let Some(e) = r.drive {
        push(&mut out, "drive", fmt_f64(e));
    }

    if let Some(p) = &resolved.physical {
        push(&mut out, "lab_omega_c", fmt_f64(p.omega_c));
        push(&mut out, "lab_omega_m", fmt_f64(p.omega_m));
        push(&mut out, "lab_omega_l", fmt_f64(p.omega_l));
        push(&mut out, "lab_kappa", fmt_f64(p.kappa));
        push(&mut out, "lab_gamma", fmt_f64(p.gamma));
        push(&mut out, "lab_g", fmt_f64(p.g));
        if let Some(power) = p.power {
            push(&mut out, "lab_power", fmt_f64(power));
        }
        push(&mut out, "lab_temperature", fmt_f64(p.temperature));
    }

    push(&mut out, "t_max_periods", fmt_f64(sim.t_max_periods));
    push(&mut out, "steps_per_period", sim.steps_per_period.to_string());
    if let Some(dt) = sim.dt_override {
        push(&mut out, "dt_override", fmt_f64(dt));
    }
    push(&mut out, "averaging_periods", sim.averaging_periods.to_string());
    push(&mut out, "tail_periods", sim.tail_periods.to_string());
    push(&mut out, "divergence_ceiling", fmt_f64(sim.divergence_ceiling));
    push(&mut out, "store_every_step", fmt_bool(sim.store_every_step).to_string());
    push(
        &mut out,
        "g_mode",
        match sim.g_mode {
            GMode::Static => "static".to_string(),
            GMode::Dynamic => "dynamic".to_string(),
        },
    );
    out
}

/// The same parameter snapshot as JSON, for the metadata sidecar.
pub fn params_json(resolved: &Resolved) -> Value {
    let r = &resolved.reduced;
    let mut reduced = json!({
        "kappa": r.kappa,
        "gamma": r.gamma,
        "n_th": r.n_th,
        "delta_c_prime": r.delta_c_prime,
        "coupling_re": r.coupling.re,
        "coupling_im": r.coupling.im,
        "xi": r.xi,
        "nu": r.nu,
    });
    if let Some(g) = r.g {
        reduced["single_photon_g"] = json!(g);
    }
    if let Some(d) = r.delta_c {
        reduced["bare_delta_c"] = json!(d);
    }
    if let Some(e) = r.drive {
        reduced["drive"] = json!(e);
    }
    let mut out = json!({ "reduced": reduced });
    if let Some(p) = &resolved.physical {
        out["physical"] = json!({
            "omega_c": p.omega_c,
            "omega_m": p.omega_m,
            "omega_l": p.omega_l,
            "kappa": p.kappa,
            "gamma": p.gamma,
            "g": p.g,
            "power": p.power,
            "temperature": p.temperature,
        });
    }
    out
}

pub fn simulation_json(sim: &SimulationBlock) -> Value {
    json!({
        "t_max_periods": sim.t_max_periods,
        "steps_per_period": sim.steps_per_period,
        "dt_override": sim.dt_override,
        "averaging_periods": sim.averaging_periods,
        "tail_periods": sim.tail_periods,
        "divergence_ceiling": sim.divergence_ceiling,
        "store_every_step": sim.store_every_step,
        "g_mode": match sim.g_mode { GMode::Static => "static", GMode::Dynamic => "dynamic" },
    })
}

pub fn write_meta(path: &Path, value: &Value) -> io::Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("metadata serializes");
    text.push('\n');
    fs::write(path, text)
}

/// Seconds since the Unix epoch, for metadata only; CSV output must stay
/// reproducible byte for byte.
pub fn timestamp_unix() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}
