//! The four subcommands. Each consumes a validated configuration, writes
//! its data files plus a JSON metadata sidecar under the output directory,
//! prints a one-glance summary and maps failures onto the documented exit
//! codes.

use std::path::{Path, PathBuf};

use serde_json::json;

use optoshake_core::dynamics::{
    initial_covariance, integrate_covariance, integrate_covariance_dynamic_g, StepGrid,
};
use optoshake_core::meanfield::{
    integrate_mean_fields, steady_mean_fields, MeanFieldOptions, MeanFieldState,
};
use optoshake_core::model::{drive_amplitude, ReducedParams};
use optoshake_core::observables::{logneg_series, phonon_series};
use optoshake_core::sidebands::{default_truncation, sideband_table};
use optoshake_core::stability::{ParamField, Verdict};
use optoshake_core::Error as CoreError;

use crate::config::{GMode, MethodChoice, RunConfig, SweepTarget};
use crate::csvout::{
    fmt_bool, fmt_f64, params_json, run_comments, sanitize, simulation_json, timestamp_unix,
    write_csv, write_meta,
};
use crate::errors::{AppError, Result};
use crate::resolve::{self, Resolved};
use crate::runner::{self, PointOutcome, RunSettings};

fn out_path(dir: &Path, prefix: &str, suffix: &str) -> PathBuf {
    dir.join(format!("{prefix}_{suffix}"))
}

fn verdict_str(v: Verdict) -> &'static str {
    match v {
        Verdict::Stable => "stable",
        Verdict::Unstable => "unstable",
        Verdict::Undecided => "undecided",
    }
}

fn error_cell(e: &Option<String>) -> String {
    e.as_deref().map(sanitize).unwrap_or_default()
}

fn integration_error(e: CoreError) -> AppError {
    match e {
        CoreError::Divergence { t, ratio } => AppError::Unstable(format!(
            "covariance diverged at t = {t:.6e} (variance grew {ratio:.3e}x): the working \
             point is unstable"
        )),
        other => AppError::Internal(other.to_string()),
    }
}

/// Classical working point the linearization was calibrated around; needs
/// the power-driven laboratory description.
fn calibrated_state(resolved: &Resolved) -> Result<MeanFieldState> {
    let phys = resolved.physical.as_ref().ok_or_else(|| {
        AppError::Config("the classical fields need a power-driven [physical] block".into())
    })?;
    let power = phys.power.ok_or_else(|| {
        AppError::Config(
            "the classical fields need the drive given as power, not coupling_target".into(),
        )
    })?;
    let drive = drive_amplitude(power, phys.kappa, phys.omega_l);
    let steady = steady_mean_fields(phys, drive).map_err(|e| match e {
        CoreError::NonConvergence { .. } => {
            AppError::Unstable(format!("mean-field calibration failed: {e}"))
        }
        other => AppError::Internal(other.to_string()),
    })?;
    Ok(steady.state)
}

fn reject_foreign_task(config: &RunConfig, command: &str, allow_sweeps: u32) -> Result<()> {
    let sweeps =
        config.task.sweep.is_some() as u32 + config.task.sweep2.is_some() as u32;
    if sweeps > allow_sweeps {
        return Err(AppError::Config(match allow_sweeps {
            0 => format!("{command} runs a single point; sweep axes belong to the sweep and stability-map subcommands"),
            1 => format!("{command} scans one axis; two axes belong to stability-map"),
            _ => format!("{command}: too many sweep axes"),
        }));
    }
    if command != "rwa-compare" && config.task.rwa_frequencies.is_some() {
        return Err(AppError::Config(
            "task.rwa_frequencies belongs to the rwa-compare subcommand".into(),
        ));
    }
    Ok(())
}

pub fn simulate(config: &RunConfig, out_dir: &Path) -> Result<()> {
    reject_foreign_task(config, "simulate", 0)?;
    let resolved = resolve::base(config)?;
    let params = &resolved.reduced;
    let settings = RunSettings::from_config(&config.simulation);

    // the precheck is advisory: failing to classify is not fatal because
    // the integration itself is the arbiter, but a clear instability skips
    // a run that could only end in a ceiling trip
    let precheck = runner::classify(params, config.task.method, &settings.policy).ok();
    if let Some(v) = &precheck {
        if v.verdict == Verdict::Unstable {
            return Err(AppError::Unstable(format!(
                "the working point is linearly unstable (margin {:+.3e}); no trace written",
                v.margin
            )));
        }
    }

    let (trace, mean_final) = match config.simulation.g_mode {
        GMode::Static => {
            let trace = integrate_covariance(
                params,
                initial_covariance(params.n_th),
                settings.t_span,
                &settings.policy,
                &settings.options,
            )
            .map_err(integration_error)?;
            (trace, None)
        }
        GMode::Dynamic => {
            let state = calibrated_state(&resolved)?;
            let (trace, final_state) = integrate_covariance_dynamic_g(
                params,
                initial_covariance(params.n_th),
                state,
                settings.t_span,
                &settings.policy,
                &settings.options,
            )
            .map_err(integration_error)?;
            (trace, Some(final_state))
        }
    };

    let pseries = phonon_series(&trace);
    let lseries = logneg_series(&trace);
    let nu_eff = runner::averaging_frequency(params);
    let (phonon, phonon_settled, err_p) =
        runner::average_or_tail(&pseries, nu_eff, settings.averaging);
    let (logneg, logneg_settled, err_l) =
        runner::average_or_tail(&lseries, nu_eff, settings.averaging);

    let prefix = config.prefix();
    let comments = run_comments("simulate", &resolved, &config.simulation);

    let trace_path = out_path(out_dir, prefix, "trace.csv");
    let trace_columns = [
        "t", "v_xx", "v_xy", "v_xq", "v_xp", "v_yy", "v_yq", "v_yp", "v_qq", "v_qp", "v_pp",
    ];
    let mut rows = Vec::with_capacity(trace.times.len());
    for (t, v) in trace.times.iter().zip(&trace.covariances) {
        let m = &v.0;
        rows.push(vec![
            fmt_f64(*t),
            fmt_f64(m[0][0]),
            fmt_f64(m[0][1]),
            fmt_f64(m[0][2]),
            fmt_f64(m[0][3]),
            fmt_f64(m[1][1]),
            fmt_f64(m[1][2]),
            fmt_f64(m[1][3]),
            fmt_f64(m[2][2]),
            fmt_f64(m[2][3]),
            fmt_f64(m[3][3]),
        ]);
    }
    write_csv(&trace_path, &comments, &trace_columns, &rows)?;

    let obs_path = out_path(out_dir, prefix, "observables.csv");
    let obs_columns = ["t", "phonon", "logneg"];
    let mut rows = Vec::with_capacity(pseries.times.len());
    for ((t, p), l) in pseries.times.iter().zip(&pseries.values).zip(&lseries.values) {
        rows.push(vec![fmt_f64(*t), fmt_f64(*p), fmt_f64(*l)]);
    }
    write_csv(&obs_path, &comments, &obs_columns, &rows)?;

    let mut outputs = vec![trace_path.clone(), obs_path];
    if config.task.export_meanfield {
        let path = out_path(out_dir, prefix, "meanfield.csv");
        write_meanfield(&resolved, &settings, &comments, &path)?;
        outputs.push(path);
    }

    let mut results = json!({
        "verdict": precheck.as_ref().map(|v| verdict_str(v.verdict)),
        "stability_margin": precheck.as_ref().map(|v| v.margin),
        "phonon_avg": phonon,
        "phonon_settled": phonon_settled,
        "logneg_avg": logneg,
        "logneg_settled": logneg_settled,
        "averaging_error": err_p.as_deref().or(err_l.as_deref()),
        "final_physicality": trace.final_physicality,
        "samples": trace.times.len(),
        "dt": trace.dt,
        "steps_per_period": trace.steps_per_period,
        "integrator": trace.method,
    });
    if let Some(s) = mean_final {
        results["final_alpha_re"] = json!(s.alpha.re);
        results["final_alpha_im"] = json!(s.alpha.im);
        results["final_beta_re"] = json!(s.beta.re);
        results["final_beta_im"] = json!(s.beta.im);
    }
    let meta_path = out_path(out_dir, prefix, "meta.json");
    write_meta(
        &meta_path,
        &json!({
            "command": "simulate",
            "version": env!("CARGO_PKG_VERSION"),
            "timestamp_unix": timestamp_unix(),
            "params": params_json(&resolved),
            "simulation": simulation_json(&config.simulation),
            "results": results,
            "outputs": file_names(&outputs, &meta_path),
        }),
    )?;

    let tag = |settled: bool| if settled { "settled" } else { "not settled" };
    println!(
        "simulate: {} samples, final physicality margin {:+.3e}",
        trace.times.len(),
        trace.final_physicality
    );
    println!("  phonon average {:.6e} ({})", phonon, tag(phonon_settled));
    println!("  logneg average {:.6e} ({})", logneg, tag(logneg_settled));
    if let Some(e) = err_p.or(err_l) {
        eprintln!("warning: {e}");
    }
    println!("  wrote {}", trace_path.display());
    Ok(())
}

fn write_meanfield(
    resolved: &Resolved,
    settings: &RunSettings,
    comments: &[(String, String)],
    path: &Path,
) -> Result<()> {
    let params = &resolved.reduced;
    if params.drive.is_none() {
        return Err(AppError::Config(
            "export_meanfield needs a power-driven [physical] block; without a drive \
             amplitude the classical fields are not defined"
                .into(),
        ));
    }
    let initial = calibrated_state(resolved)?;
    let grid =
        StepGrid::resolve(params, &settings.policy).map_err(|e| AppError::Config(e.to_string()))?;
    let periods = ((settings.t_span.1 - settings.t_span.0) / grid.period - 1e-9).ceil().max(1.0);
    let total = periods * grid.steps_per_period as f64;
    // cap the sample count; the classical trajectory is smooth and dense
    // storage of a long run would dwarf every other output
    let stride = (total / 200_000.0).ceil().max(1.0) as u64;
    let trajectory = integrate_mean_fields(
        params,
        initial,
        settings.t_span,
        &settings.policy,
        &MeanFieldOptions { store_stride: stride, ceiling_factor: settings.options.ceiling_factor },
    )
    .map_err(integration_error)?;
    let columns = ["t", "alpha_re", "alpha_im", "beta_re", "beta_im"];
    let mut rows = Vec::with_capacity(trajectory.times.len());
    for (t, s) in trajectory.times.iter().zip(&trajectory.states) {
        rows.push(vec![
            fmt_f64(*t),
            fmt_f64(s.alpha.re),
            fmt_f64(s.alpha.im),
            fmt_f64(s.beta.re),
            fmt_f64(s.beta.im),
        ]);
    }
    write_csv(path, comments, &columns, &rows)?;
    Ok(())
}

fn file_names(paths: &[PathBuf], meta: &Path) -> Vec<String> {
    let mut names: Vec<String> = paths
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    if let Some(n) = meta.file_name() {
        names.push(n.to_string_lossy().into_owned());
    }
    names
}

pub fn sweep(config: &RunConfig, out_dir: &Path) -> Result<()> {
    reject_foreign_task(config, "sweep", 1)?;
    let block = config.task.sweep.as_ref().ok_or_else(|| {
        AppError::Config("sweep needs a [task.sweep] block or a --sweep flag".into())
    })?;
    let target = block.target()?;
    resolve::check_target(config, target)?;
    let resolved = resolve::base(config)?;
    let values = block.values();
    let settings = RunSettings::from_config(&config.simulation);
    let method = config.task.method;

    let points: Vec<std::result::Result<ReducedParams, String>> =
        values.iter().map(|&v| resolve::at_value(&resolved, target, v)).collect();
    let outcomes = runner::run_many(points.len(), config.output.parallel, |i| match &points[i] {
        Ok(p) => runner::run_point(p, method, &settings),
        Err(e) => PointOutcome::failed(e.clone()),
    })?;

    let prefix = config.prefix();
    let comments = run_comments("sweep", &resolved, &config.simulation);
    let path = out_path(out_dir, prefix, "sweep.csv");
    let columns = [
        "index",
        target.name(),
        "verdict",
        "margin",
        "phonon_avg",
        "phonon_settled",
        "logneg_avg",
        "logneg_settled",
        "error",
    ];
    let mut rows = Vec::with_capacity(values.len());
    for (i, (v, o)) in values.iter().zip(&outcomes).enumerate() {
        rows.push(vec![
            i.to_string(),
            fmt_f64(*v),
            verdict_str(o.verdict).to_string(),
            fmt_f64(o.margin),
            fmt_f64(o.phonon),
            fmt_bool(o.phonon_settled).to_string(),
            fmt_f64(o.logneg),
            fmt_bool(o.logneg_settled).to_string(),
            error_cell(&o.error),
        ]);
    }
    write_csv(&path, &comments, &columns, &rows)?;

    let count = |v: Verdict| outcomes.iter().filter(|o| o.verdict == v).count();
    let (stable, unstable, undecided) =
        (count(Verdict::Stable), count(Verdict::Unstable), count(Verdict::Undecided));
    let failed = outcomes.iter().filter(|o| o.error.is_some()).count();
    let meta_path = out_path(out_dir, prefix, "meta.json");
    write_meta(
        &meta_path,
        &json!({
            "command": "sweep",
            "version": env!("CARGO_PKG_VERSION"),
            "timestamp_unix": timestamp_unix(),
            "params": params_json(&resolved),
            "simulation": simulation_json(&config.simulation),
            "sweep": {
                "name": target.name(),
                "start": block.start,
                "stop": block.stop,
                "count": block.count,
            },
            "results": {
                "points": values.len(),
                "stable": stable,
                "unstable": unstable,
                "undecided": undecided,
                "failed": failed,
            },
            "outputs": file_names(std::slice::from_ref(&path), &meta_path),
        }),
    )?;

    println!(
        "sweep {}: {} points ({stable} stable, {unstable} unstable, {undecided} undecided, \
         {failed} failed)",
        target.name(),
        values.len()
    );
    println!("  wrote {}", path.display());
    if failed > 0 {
        return Err(AppError::Partial { failed, total: values.len() });
    }
    Ok(())
}

pub fn stability_map(config: &RunConfig, out_dir: &Path) -> Result<()> {
    reject_foreign_task(config, "stability-map", 2)?;
    let (b1, b2) = match (&config.task.sweep, &config.task.sweep2) {
        (Some(a), Some(b)) => (a, b),
        _ => {
            return Err(AppError::Config(
                "stability-map needs two axes: [task.sweep] and [task.sweep2], or two --sweep \
                 flags"
                    .into(),
            ))
        }
    };
    let t1 = b1.target()?;
    let t2 = b2.target()?;
    if t1 == t2 {
        return Err(AppError::Config("the two map axes must differ".into()));
    }
    resolve::check_target(config, t1)?;
    resolve::check_target(config, t2)?;
    let resolved = resolve::base(config)?;
    let values1 = b1.values();
    let values2 = b2.values();
    let settings = RunSettings::from_config(&config.simulation);

    // a map classifies every point with one method; auto commits to Floquet
    // as soon as modulation is anywhere in play
    let modulated = resolved.reduced.xi > 0.0
        || t1 == SweepTarget::Reduced(ParamField::Xi)
        || t2 == SweepTarget::Reduced(ParamField::Xi);
    let choice = match config.task.method {
        MethodChoice::Auto => {
            if modulated {
                MethodChoice::Floquet
            } else {
                MethodChoice::Eigenvalues
            }
        }
        other => other,
    };

    let result = match (t1, t2) {
        (SweepTarget::Reduced(f1), SweepTarget::Reduced(f2)) => runner::map_reduced(
            &resolved.reduced,
            f1,
            &values1,
            f2,
            &values2,
            runner::effective_method(choice, &resolved.reduced),
            &settings.policy,
        )?,
        _ => runner::map_general(
            |v1, v2| resolve::at_values(&resolved, &[(t1, v1), (t2, v2)]),
            &values1,
            &values2,
            choice,
            &settings.policy,
        ),
    };

    let prefix = config.prefix();
    let comments = run_comments("stability-map", &resolved, &config.simulation);
    let map_path = out_path(out_dir, prefix, "map.csv");
    let map_columns = [t1.name(), t2.name(), "verdict", "margin", "coupling_abs"];
    let mut rows = Vec::with_capacity(result.points.len());
    for p in &result.points {
        rows.push(vec![
            fmt_f64(p.v1),
            fmt_f64(p.v2),
            verdict_str(p.verdict).to_string(),
            fmt_f64(p.margin),
            fmt_f64(p.coupling_abs),
        ]);
    }
    write_csv(&map_path, &comments, &map_columns, &rows)?;

    let boundary_path = out_path(out_dir, prefix, "boundary.csv");
    let boundary_columns = [t1.name(), "crossing"];
    let mut rows = Vec::with_capacity(result.boundary.len());
    for (v1, crossing) in &result.boundary {
        rows.push(vec![fmt_f64(*v1), fmt_f64(*crossing)]);
    }
    write_csv(&boundary_path, &comments, &boundary_columns, &rows)?;

    let count = |v: Verdict| result.points.iter().filter(|p| p.verdict == v).count();
    let (stable, unstable, undecided) =
        (count(Verdict::Stable), count(Verdict::Unstable), count(Verdict::Undecided));
    let meta_path = out_path(out_dir, prefix, "meta.json");
    write_meta(
        &meta_path,
        &json!({
            "command": "stability-map",
            "version": env!("CARGO_PKG_VERSION"),
            "timestamp_unix": timestamp_unix(),
            "params": params_json(&resolved),
            "simulation": simulation_json(&config.simulation),
            "axes": {
                "axis1": { "name": t1.name(), "start": b1.start, "stop": b1.stop, "count": b1.count },
                "axis2": { "name": t2.name(), "start": b2.start, "stop": b2.stop, "count": b2.count },
            },
            "results": {
                "points": result.points.len(),
                "stable": stable,
                "unstable": unstable,
                "undecided": undecided,
                "boundary_points": result.boundary.len(),
            },
            "outputs": file_names(&[map_path.clone(), boundary_path], &meta_path),
        }),
    )?;

    println!(
        "stability-map {} x {}: {} points ({stable} stable, {unstable} unstable, {undecided} \
         undecided), {} boundary crossings",
        t1.name(),
        t2.name(),
        result.points.len(),
        result.boundary.len()
    );
    println!("  wrote {}", map_path.display());
    Ok(())
}

pub fn rwa_compare(config: &RunConfig, out_dir: &Path) -> Result<()> {
    reject_foreign_task(config, "rwa-compare", 0)?;
    let freqs = config.task.rwa_frequencies.clone().ok_or_else(|| {
        AppError::Config(
            "rwa-compare needs task.rwa_frequencies, the modulation frequencies to test".into(),
        )
    })?;
    let resolved = resolve::base(config)?;
    let settings = RunSettings::from_config(&config.simulation);
    let method = config.task.method;

    let rows_data = runner::run_many(freqs.len(), config.output.parallel, |i| {
        runner::rwa_row(&resolved.reduced, freqs[i], method, &settings)
    })?;

    let prefix = config.prefix();
    let comments = run_comments("rwa-compare", &resolved, &config.simulation);
    let compare_path = out_path(out_dir, prefix, "compare.csv");
    let compare_columns = [
        "nu",
        "k0",
        "coupling_eff",
        "nu_over_mech",
        "nu_over_coupling",
        "verdict",
        "phonon_full",
        "phonon_rwa",
        "phonon_gap",
        "logneg_full",
        "logneg_rwa",
        "logneg_gap",
        "phonon_settled",
        "logneg_settled",
        "error",
    ];
    let mut rows = Vec::with_capacity(rows_data.len());
    for r in &rows_data {
        rows.push(vec![
            fmt_f64(r.nu),
            r.k0.to_string(),
            fmt_f64(r.coupling_eff),
            fmt_f64(r.nu_over_mech),
            fmt_f64(r.nu_over_coupling),
            verdict_str(r.verdict).to_string(),
            fmt_f64(r.phonon_full),
            fmt_f64(r.phonon_rwa),
            fmt_f64(r.phonon_gap),
            fmt_f64(r.logneg_full),
            fmt_f64(r.logneg_rwa),
            fmt_f64(r.logneg_gap),
            fmt_bool(r.phonon_settled).to_string(),
            fmt_bool(r.logneg_settled).to_string(),
            error_cell(&r.error),
        ]);
    }
    write_csv(&compare_path, &comments, &compare_columns, &rows)?;

    let table = sideband_table(&resolved.reduced, default_truncation(resolved.reduced.xi))
        .map_err(|e| AppError::Internal(format!("sideband table: {e}")))?;
    let sidebands_path = out_path(out_dir, prefix, "sidebands.csv");
    let sideband_columns = ["k", "weight", "bs_detuning", "tms_detuning"];
    let mut rows = Vec::with_capacity(table.entries.len());
    for e in &table.entries {
        rows.push(vec![
            e.k.to_string(),
            fmt_f64(e.weight),
            fmt_f64(e.bs_detuning),
            fmt_f64(e.tms_detuning),
        ]);
    }
    write_csv(&sidebands_path, &comments, &sideband_columns, &rows)?;

    let failed = rows_data.iter().filter(|r| r.error.is_some()).count();
    let meta_path = out_path(out_dir, prefix, "meta.json");
    write_meta(
        &meta_path,
        &json!({
            "command": "rwa-compare",
            "version": env!("CARGO_PKG_VERSION"),
            "timestamp_unix": timestamp_unix(),
            "params": params_json(&resolved),
            "simulation": simulation_json(&config.simulation),
            "results": {
                "frequencies": freqs,
                "failed": failed,
                "sideband_residual": table.residual,
            },
            "outputs": file_names(&[compare_path.clone(), sidebands_path], &meta_path),
        }),
    )?;

    println!("rwa-compare: {} frequencies, {} failed", freqs.len(), failed);
    for r in &rows_data {
        println!(
            "  nu = {:>8.3}: k0 = {:+}, phonon gap {:.3e}, logneg gap {:.3e}",
            r.nu, r.k0, r.phonon_gap, r.logneg_gap
        );
    }
    println!("  wrote {}", compare_path.display());
    if failed > 0 {
        return Err(AppError::Partial { failed, total: rows_data.len() });
    }
    Ok(())
}
