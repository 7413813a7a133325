//! The five commands. Each writes `series.csv`, `mesh.vtk`, optional frames
//! and `summary.json` into its output directory.

use std::path::Path;
use std::time::Instant;

use log::{debug, info};
use serde_json::{json, Value};

use tidalfem::diagnostics::{energy_second_order, fit_convergence_rate, fit_exponential_decay, l2_errors, linear_fit};
use tidalfem::dynamics::{mms_forcing, Stepper};
use tidalfem::fem::{interpolate_hdiv, project_l2};
use tidalfem::{Field, ForcingSpec, ManufacturedSolution, Model, ModelParams, State, StepperConfig};

use crate::config::{Experiment, ExperimentConfig, ForcingConfig, InitialKind, SchemeName};
use crate::error::{CliError, CliResult};
use crate::output::{ensure_dir, vtk_frame, vtk_mesh, write_file, RunSummary, Series};

const SERIES_FILE: &str = "series.csv";

/// Relative slack allowed when checking that energy never increases.
pub const MONOTONE_SLACK: f64 = 1e-12;

pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> CliResult<RunSummary> {
    ensure_dir(out)?;
    let start = Instant::now();
    info!("{} -> {}", cfg.experiment.name(), out.display());
    let metrics = match cfg.experiment {
        Experiment::Energy => energy(cfg, out)?,
        Experiment::Damping => damping(cfg, out)?,
        Experiment::Mms => mms(cfg, out)?,
        Experiment::Spinup => spinup(cfg, out)?,
        Experiment::Simulate => simulate(cfg, out)?,
    };
    let summary = RunSummary {
        experiment: cfg.experiment.name().to_string(),
        config: serde_json::to_value(cfg).map_err(|e| CliError::Resource(e.to_string()))?,
        series: out.join(SERIES_FILE),
        metrics,
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    summary.write(out)?;
    info!("{} finished in {:.2} s", cfg.experiment.name(), summary.wall_time_s);
    Ok(summary)
}

pub fn cmd_energy(cfg: &ExperimentConfig, out: &Path) -> CliResult<RunSummary> {
    expect(cfg, Experiment::Energy)?;
    run_experiment(cfg, out)
}

pub fn cmd_damping(cfg: &ExperimentConfig, out: &Path) -> CliResult<RunSummary> {
    expect(cfg, Experiment::Damping)?;
    run_experiment(cfg, out)
}

pub fn cmd_mms(cfg: &ExperimentConfig, out: &Path) -> CliResult<RunSummary> {
    expect(cfg, Experiment::Mms)?;
    run_experiment(cfg, out)
}

pub fn cmd_spinup(cfg: &ExperimentConfig, out: &Path) -> CliResult<RunSummary> {
    expect(cfg, Experiment::Spinup)?;
    run_experiment(cfg, out)
}

pub fn cmd_simulate(cfg: &ExperimentConfig, out: &Path) -> CliResult<RunSummary> {
    expect(cfg, Experiment::Simulate)?;
    run_experiment(cfg, out)
}

fn expect(cfg: &ExperimentConfig, e: Experiment) -> CliResult<()> {
    if cfg.experiment == e {
        Ok(())
    } else {
        Err(CliError::config(format!("expected a '{}' config", e.name())))
    }
}

fn scheme_label(s: SchemeName) -> &'static str {
    match s {
        SchemeName::Midpoint => "midpoint",
        SchemeName::Symplectic => "symplectic",
    }
}

fn stepper_config(cfg: &ExperimentConfig) -> StepperConfig<f64> {
    StepperConfig::new(cfg.dt, cfg.scheme.into()).with_tol(cfg.solver_tol)
}

fn initial_state(cfg: &ExperimentConfig, model: &Model<f64>, seed: u64) -> CliResult<State<f64>> {
    Ok(match cfg.initial {
        InitialKind::Zero => model.zero_state(),
        InitialKind::Tide => {
            let eta = project_l2(model.elevation_space(), |x| x[0] * x[1] * x[2])?;
            State { u: Field::zeros(model.velocity_space().clone()), eta, t: 0.0 }
        }
        InitialKind::Random => model.random_state(seed),
    })
}

fn forcing(cfg: &ExperimentConfig, params: &ModelParams<f64>) -> ForcingSpec<f64> {
    let gain = params.pressure_coefficient();
    match &cfg.forcing {
        ForcingConfig::None => ForcingSpec::Zero,
        ForcingConfig::Tidal => ForcingSpec::divergence_form(|x: &[f64; 3], t: f64| t.sin() * x[0] * x[1] * x[2], gain),
        ForcingConfig::Bathymetry { eta_bar } => {
            let field = eta_bar.to_field();
            ForcingSpec::divergence_form(move |x: &[f64; 3], _| field.eval(x), gain)
        }
    }
}

fn step(stepper: &Stepper<'_, f64>, state: &State<f64>, forcing: &ForcingSpec<f64>, n: usize) -> CliResult<State<f64>> {
    stepper.step(state, forcing).map_err(|e| {
        tidalfem::Error::Step { step: n, source: Box::new(e) }.into()
    })
}

fn write_frame(cfg: &ExperimentConfig, out: &Path, n: usize, state: &State<f64>) -> CliResult<()> {
    if cfg.vtk_every > 0 && n % cfg.vtk_every == 0 {
        write_file(&out.join(format!("frame_{n:05}.vtk")), &vtk_frame(state)?)?;
    }
    Ok(())
}

/// Steps one trajectory, pushing one series row per step after the first.
fn single_run(
    cfg: &ExperimentConfig,
    out: &Path,
    columns: &[&str],
    mut row: impl FnMut(&Model<f64>, &State<f64>, &ForcingSpec<f64>) -> CliResult<Vec<f64>>,
) -> CliResult<(Series, f64)> {
    let mesh = cfg.build_mesh(None)?;
    write_file(&out.join("mesh.vtk"), &vtk_mesh(&mesh, cfg.experiment.name()))?;
    let model = cfg.build_model(&mesh)?;
    let forcing = forcing(cfg, &model.params);
    let stepper = Stepper::new(&model, stepper_config(cfg))?;
    let mut state = initial_state(cfg, &model, cfg.seeds[0])?;
    let e1_initial = model.energy(&state).e1;
    write_frame(cfg, out, 0, &state)?;
    let mut series = Series::new(columns);
    for n in 1..=cfg.steps() {
        state = step(&stepper, &state, &forcing, n)?;
        series.push(row(&model, &state, &forcing)?);
        write_frame(cfg, out, n, &state)?;
        debug!("step {n} t={}", state.t);
    }
    series.write(&out.join(SERIES_FILE))?;
    Ok((series, e1_initial))
}

fn energy_row(model: &Model<f64>, s: &State<f64>) -> Vec<f64> {
    let e = model.energy(s);
    vec![s.t, e.e1, e.u_norm_wh, e.eta_norm]
}

/// Largest `|E₁ − E₁⁰| / E₁⁰` over the series; zero for an empty series.
pub fn max_relative_drift(e1: &[f64], e1_initial: f64) -> f64 {
    let scale = if e1_initial != 0.0 { e1_initial.abs() } else { 1.0 };
    e1.iter().map(|e| (e - e1_initial).abs() / scale).fold(0.0, f64::max)
}

/// Least-squares slope of `y` against `t` and its standard error.
pub fn trend(t: &[f64], y: &[f64]) -> Option<(f64, f64)> {
    let n = t.len();
    if n < 3 {
        return None;
    }
    let fit = linear_fit(t, y).ok()?;
    let tm = t.iter().sum::<f64>() / n as f64;
    let sxx: f64 = t.iter().map(|x| (x - tm).powi(2)).sum();
    let sse: f64 = t.iter().zip(y).map(|(x, y)| (y - fit.intercept - fit.slope * x).powi(2)).sum();
    Some((fit.slope, (sse / (n - 2) as f64 / sxx).sqrt()))
}

fn energy(cfg: &ExperimentConfig, out: &Path) -> CliResult<Value> {
    let (series, e1_initial) = single_run(cfg, out, &["t", "E1", "u_norm", "eta_norm"], |m, s, _| Ok(energy_row(m, s)))?;
    let e1 = series.column("E1").unwrap_or_default();
    let t = series.column("t").unwrap_or_default();
    let trend = trend(&t, &e1);
    Ok(json!({
        "scheme": scheme_label(cfg.scheme),
        "steps": series.rows.len(),
        "e1_initial": e1_initial,
        "e1_final": e1.last().copied().unwrap_or(e1_initial),
        "max_relative_drift": max_relative_drift(&e1, e1_initial),
        "trend_slope": trend.map(|t| t.0),
        "trend_slope_stderr": trend.map(|t| t.1),
    }))
}

/// Whether `e1` never rises by more than the slack, starting from `e1_initial`.
pub fn is_monotone(e1: &[f64], e1_initial: f64) -> bool {
    let slack = MONOTONE_SLACK * e1_initial.abs();
    let mut prev = e1_initial;
    e1.iter().all(|&e| {
        let ok = e <= prev + slack;
        prev = e;
        ok
    })
}

/// Log-linear fit of `y` on the samples with `t ≥ t0`.
pub fn tail_fit(t: &[f64], y: &[f64], t0: f64) -> Option<(f64, f64)> {
    let (tt, yy): (Vec<f64>, Vec<f64>) = t.iter().zip(y).filter(|(t, _)| **t >= t0 - 1e-9).map(|(a, b)| (*a, *b)).unzip();
    if tt.len() < 3 || yy.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    fit_exponential_decay(&tt, &yy).ok()
}

fn damping(cfg: &ExperimentConfig, out: &Path) -> CliResult<Value> {
    let (series, e1_initial) = single_run(cfg, out, &["t", "E1", "E2", "u_norm", "eta_norm"], |m, s, f| {
        let e = energy_second_order(m, s, f)?;
        Ok(vec![s.t, e.e1, e.e2.unwrap_or(f64::NAN), e.u_norm_wh, e.eta_norm])
    })?;
    let e1 = series.column("E1").unwrap_or_default();
    let t = series.column("t").unwrap_or_default();
    let fit = tail_fit(&t, &e1, cfg.fit_start);
    Ok(json!({
        "scheme": scheme_label(cfg.scheme),
        "steps": series.rows.len(),
        "e1_initial": e1_initial,
        "e1_final": e1.last().copied().unwrap_or(e1_initial),
        "monotone": is_monotone(&e1, e1_initial),
        "fit_start": cfg.fit_start,
        "decay_rate": fit.map(|f| f.0),
        "r_squared": fit.map(|f| f.1),
        "fit_accepted": fit.is_some_and(|(rate, r2)| rate > 0.0 && r2 >= 0.99),
    }))
}

struct LevelResult {
    level: usize,
    h_max: f64,
    errors: Vec<(f64, f64)>,
}

fn mms_level(cfg: &ExperimentConfig, level: usize) -> CliResult<LevelResult> {
    let mesh = cfg.build_mesh(Some(level))?;
    let model = cfg.build_model(&mesh)?;
    let ms = ManufacturedSolution::new(cfg.mms.omega)?;
    let forcing = mms_forcing(&ms, &model.params);
    let u = interpolate_hdiv(model.velocity_space(), |x| ms.u(x, 0.0))?;
    let eta = project_l2(model.elevation_space(), |x| ms.eta(x, 0.0))?;
    let mut state = State { u, eta, t: 0.0 };
    let stepper = Stepper::new(&model, stepper_config(cfg))?;
    let mut errors = Vec::with_capacity(cfg.steps());
    for n in 1..=cfg.steps() {
        state = step(&stepper, &state, &forcing, n)?;
        errors.push((state.t, l2_errors(&model, &state, &ms, &forcing)?.eta));
    }
    info!("mms level {level}: {} steps done", errors.len());
    Ok(LevelResult { level, h_max: mesh.statistics().h_max, errors })
}

fn mean(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().sum::<f64>() / x.len() as f64
    }
}

fn mms(cfg: &ExperimentConfig, out: &Path) -> CliResult<Value> {
    let levels = cfg.mms_levels();
    // Levels are independent; run them side by side.
    let results: Vec<CliResult<LevelResult>> = std::thread::scope(|s| {
        let handles: Vec<_> = levels.iter().map(|&l| s.spawn(move || mms_level(cfg, l))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::Resource("worker thread panicked".into()))))
            .collect()
    });
    let results = results.into_iter().collect::<CliResult<Vec<_>>>()?;

    let names: Vec<String> = results.iter().map(|r| format!("eta_error_level{}", r.level)).collect();
    let mut columns = vec!["t"];
    columns.extend(names.iter().map(String::as_str));
    let mut series = Series::new(&columns);
    for i in 0..cfg.steps() {
        let mut row = vec![results[0].errors[i].0];
        row.extend(results.iter().map(|r| r.errors[i].1));
        series.push(row);
    }
    series.write(&out.join(SERIES_FILE))?;

    let mut table = Series::new(&["level", "h_max", "mean_eta_error"]);
    for r in &results {
        let errs: Vec<f64> = r.errors.iter().map(|e| e.1).collect();
        table.push(vec![r.level as f64, r.h_max, mean(&errs)]);
    }
    table.write(&out.join("levels.csv"))?;
    let finest = levels.iter().copied().max().unwrap_or(0);
    write_file(&out.join("mesh.vtk"), &vtk_mesh(&*cfg.build_mesh(Some(finest))?, "mms"))?;

    let h = table.column("h_max").unwrap_or_default();
    let e = table.column("mean_eta_error").unwrap_or_default();
    let fit = if h.len() >= 2 { fit_convergence_rate(&h, &e).ok() } else { None };
    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|r| json!({ "level": r[0] as usize, "h_max": r[1], "mean_eta_error": r[2] }))
        .collect();
    Ok(json!({
        "scheme": scheme_label(cfg.scheme),
        "order": cfg.order,
        "levels": rows,
        "table": out.join("levels.csv"),
        "slope": fit.map(|f| f.0),
        "r_squared": fit.map(|f| f.1),
    }))
}

fn difference_norm(model: &Model<f64>, a: &State<f64>, b: &State<f64>) -> CliResult<f64> {
    let sub = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| p - q).collect::<Vec<_>>();
    let d = State {
        u: Field::new(a.u.space().clone(), sub(a.u.coeffs(), b.u.coeffs()))?,
        eta: Field::new(a.eta.space().clone(), sub(a.eta.coeffs(), b.eta.coeffs()))?,
        t: a.t,
    };
    let e = model.energy(&d);
    Ok(e.u_norm_wh + e.eta_norm)
}

fn spinup(cfg: &ExperimentConfig, out: &Path) -> CliResult<Value> {
    let mesh = cfg.build_mesh(None)?;
    write_file(&out.join("mesh.vtk"), &vtk_mesh(&mesh, "spinup"))?;
    let model = cfg.build_model(&mesh)?;
    let forcing = forcing(cfg, &model.params);
    let stepper = Stepper::new(&model, stepper_config(cfg))?;
    let mut a = initial_state(cfg, &model, cfg.seeds[0])?;
    let mut b = initial_state(cfg, &model, cfg.seeds[1])?;
    let d0 = difference_norm(&model, &a, &b)?;
    let mut series = Series::new(&["t", "difference"]);
    for n in 1..=cfg.steps() {
        a = step(&stepper, &a, &forcing, n)?;
        b = step(&stepper, &b, &forcing, n)?;
        series.push(vec![a.t, difference_norm(&model, &a, &b)?]);
    }
    series.write(&out.join(SERIES_FILE))?;
    let t = series.column("t").unwrap_or_default();
    let d = series.column("difference").unwrap_or_default();
    let d_final = d.last().copied().unwrap_or(d0);
    let fit = tail_fit(&t, &d, cfg.fit_start);
    Ok(json!({
        "scheme": scheme_label(cfg.scheme),
        "initial_difference": d0,
        "final_difference": d_final,
        "final_ratio": if d0 > 0.0 { d_final / d0 } else { 0.0 },
        "fit_start": cfg.fit_start,
        "decay_rate": fit.map(|f| f.0),
        "r_squared": fit.map(|f| f.1),
    }))
}

fn simulate(cfg: &ExperimentConfig, out: &Path) -> CliResult<Value> {
    let (series, e1_initial) = single_run(cfg, out, &["t", "E1", "u_norm", "eta_norm", "div_u_norm"], |m, s, _| {
        let e = m.energy(s);
        Ok(vec![s.t, e.e1, e.u_norm_wh, e.eta_norm, e.div_u_norm])
    })?;
    let col = |name| series.column(name).unwrap_or_default();
    let max = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
    let e1 = col("E1");
    Ok(json!({
        "scheme": scheme_label(cfg.scheme),
        "steps": series.rows.len(),
        "e1_initial": e1_initial,
        "e1_final": e1.last().copied().unwrap_or(e1_initial),
        "max_u_norm": max(col("u_norm")),
        "max_eta_norm": max(col("eta_norm")),
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drift_of_empty_series_is_zero() {
        assert_eq!(max_relative_drift(&[], 2.0), 0.0);
        assert!((max_relative_drift(&[2.0, 2.2, 1.9], 2.0) - 0.1).abs() < 1e-15);
    }

    #[test]
    fn monotone_with_slack() {
        assert!(is_monotone(&[1.0, 0.5, 0.5], 1.0));
        assert!(!is_monotone(&[1.0, 0.5, 0.6], 1.0));
        assert!(!is_monotone(&[1.1], 1.0));
    }

    #[test]
    fn trend_of_a_line() {
        let t = [0.0, 1.0, 2.0, 3.0];
        let (slope, se) = trend(&t, &[1.0, 3.0, 5.0, 7.0]).unwrap();
        assert!((slope - 2.0).abs() < 1e-14 && se < 1e-12);
        assert!(trend(&t[..2], &[0.0, 1.0]).is_none());
    }

    #[test]
    fn tail_fit_window_and_guards() {
        let t: Vec<f64> = (0..20).map(f64::from).collect();
        let y: Vec<f64> = t.iter().map(|t| (-0.5 * t).exp()).collect();
        let (rate, r2) = tail_fit(&t, &y, 5.0).unwrap();
        assert!((rate - 0.5).abs() < 1e-12 && r2 > 0.999_999);
        assert!(tail_fit(&t, &vec![0.0; 20], 0.0).is_none());
    }
}
