//! One test per acceptance criterion, each also printing a PASS/FAIL line
//! with the measured values (visible with `--nocapture`).

use std::path::Path;
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use serde_json::Value;
use tidalfem::assembly::{assemble_div_all, assemble_mass_w, cell_dof_groups};
use tidalfem::diagnostics::{
    estimate_inverse_constant, estimate_poincare_constant, helmholtz_decompose, inner_wh, solve_steady_geotryptic,
};
use tidalfem::fem::{build_space, interpolate_hdiv, max_normal_jump, project_l2};
use tidalfem::linalg::{BlockDiagonal, SolverConfig};
use tidalfem::{CoefficientField, Family, ForcingSpec, Mesh, Model, ModelParams};
use tidalfem_cli::experiments::{is_monotone, max_relative_drift, tail_fit};
use tidalfem_cli::{run_experiment, Experiment, ExperimentConfig, Series};

fn check(id: usize, name: &str, pass: bool, detail: String, elapsed: Duration) {
    let line = format!(
        "{} [{id}] {name}: {detail} ({:.1} s)",
        if pass { "PASS" } else { "FAIL" },
        elapsed.as_secs_f64()
    );
    println!("{line}");
    assert!(pass, "{line}");
}

fn run(e: Experiment, overrides: &[&str], out: &Path) -> (Value, Series) {
    let o: Vec<String> = overrides.iter().map(|s| s.to_string()).collect();
    let cfg = ExperimentConfig::resolve(e, None, &o).unwrap();
    let s = run_experiment(&cfg, out).unwrap().to_value();
    (s, Series::read(&out.join("series.csv")).unwrap())
}

fn metric(s: &Value, key: &str) -> f64 {
    s["metrics"][key].as_f64().unwrap_or(f64::NAN)
}

fn energy(dir: &Path) {
    let start = Instant::now();
    let (s, series) = run(Experiment::Energy, &[], dir);
    let drift = max_relative_drift(&series.column("E1").unwrap(), metric(&s, "e1_initial"));
    let elapsed = start.elapsed();
    check(
        1,
        "energy conservation",
        series.rows.len() == 100 && drift <= 1e-10 && elapsed.as_secs() < 60,
        format!("max relative E1 drift {drift:.3e} over {} steps (tol 1e-10)", series.rows.len()),
        elapsed,
    );
}

/// The damping run is shared by criteria 2 and 3.
fn damping_run() -> &'static (Value, Series, Duration) {
    static RUN: OnceLock<(Value, Series, Duration)> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let start = Instant::now();
        let (s, series) = run(Experiment::Damping, &[], dir.path());
        (s, series, start.elapsed())
    })
}

fn monotone_dissipation() {
    let (s, series, elapsed) = damping_run();
    let e1 = series.column("E1").unwrap();
    let monotone = is_monotone(&e1, metric(s, "e1_initial"));
    check(
        2,
        "monotone dissipation",
        monotone && series.rows.len() == 1000 && elapsed.as_secs() < 300,
        format!("E1 nonincreasing over {} steps: {monotone}", series.rows.len()),
        *elapsed,
    );
}

fn exponential_decay() {
    let (_, series, elapsed) = damping_run();
    let (t, e1) = (series.column("t").unwrap(), series.column("E1").unwrap());
    let fit = tail_fit(&t, &e1, 10.0);
    let r2 = fit.map_or(f64::NAN, |f| f.1);
    check(
        3,
        "exponential decay",
        r2 >= 0.99,
        format!("log E1 fit on [10, 50]: rate {:.4e}, R^2 {r2:.6} (min 0.99)", fit.map_or(f64::NAN, |f| f.0)),
        *elapsed,
    );
}

fn level_errors(dir: &Path) -> (Vec<f64>, Vec<f64>) {
    let table = Series::read(&dir.join("levels.csv")).unwrap();
    (table.column("h_max").unwrap(), table.column("mean_eta_error").unwrap())
}

fn mms_rt0(dir: &Path) {
    let start = Instant::now();
    let (s, _) = run(Experiment::Mms, &[], &dir.join("dt"));
    let (_, e) = level_errors(&dir.join("dt"));
    run(Experiment::Mms, &["dt=5e-4"], &dir.join("half"));
    let (_, e_half) = level_errors(&dir.join("half"));
    let elapsed = start.elapsed();
    let slope = metric(&s, "slope");
    let change = e.iter().zip(&e_half).map(|(a, b)| (a - b).abs() / a).fold(0.0, f64::max);
    check(
        4,
        "MMS convergence RT0-DG0",
        (slope - 1.0).abs() <= 0.15 && change < 0.02 && e.len() == 4 && elapsed.as_secs() < 600,
        format!("slope {slope:.4} (1.0 +- 0.15) over levels 1-4, dt-halving change {:.3}% (< 2%)", 100.0 * change),
        elapsed,
    );
}

fn mms_rt1(dir: &Path) {
    let start = Instant::now();
    let (s, _) = run(Experiment::Mms, &["order=2"], dir);
    let (_, e) = level_errors(dir);
    let elapsed = start.elapsed();
    let slope = metric(&s, "slope");
    check(
        5,
        "MMS convergence RT1-DG1",
        (slope - 2.0).abs() <= 0.2 && e.len() == 3 && elapsed.as_secs() < 900,
        format!("slope {slope:.4} (2.0 +- 0.2) over levels 1-3, quadratic geometry"),
        elapsed,
    );
}

fn spinup(dir: &Path) {
    let start = Instant::now();
    let (s, series) = run(Experiment::Spinup, &[], dir);
    let elapsed = start.elapsed();
    let (t, d) = (series.column("t").unwrap(), series.column("difference").unwrap());
    let ratio = d.last().unwrap() / metric(&s, "initial_difference");
    let fit = tail_fit(&t, &d, 2.0);
    let r2 = fit.map_or(f64::NAN, |f| f.1);
    check(
        6,
        "spin-up synchronization",
        ratio <= 1e-6 && t.last().is_some_and(|t| (t - 10.0).abs() < 1e-9) && r2 >= 0.99 && elapsed.as_secs() < 300,
        format!("difference ratio {ratio:.3e} at t=10 (max 1e-6), tail R^2 {r2:.6} (min 0.99)"),
        elapsed,
    );
}

fn sphere_model(level: usize, order: usize, params: ModelParams<f64>) -> Model<f64> {
    let mesh = Arc::new(Mesh::icosphere(level, order as u8).unwrap());
    let v = build_space(&mesh, Family::Rt, order).unwrap();
    let w = build_space(&mesh, Family::Dg, order - 1).unwrap();
    Model::new(v, w, params).unwrap()
}

fn bump() -> CoefficientField<f64> {
    CoefficientField::from_fn(|x: &[f64; 3]| 1.0 + 0.1 * (-x[0] * x[0]).exp())
}

fn structure(dir: &Path) {
    let start = Instant::now();
    let mut checks: Vec<(bool, String)> = Vec::new();

    let mut jump = 0.0f64;
    for order in [1, 2] {
        let m = sphere_model(2, order, ModelParams::new(0.1, 0.1));
        let u = interpolate_hdiv(m.velocity_space(), |x| [x[1] * x[2], -x[0], x[0] * x[0]]).unwrap();
        jump = jump.max(max_normal_jump(&u).unwrap());
        for seed in 0..4 {
            jump = jump.max(max_normal_jump(&m.random_state(seed).u).unwrap());
        }
    }
    checks.push((jump <= 1e-11, format!("normal jump {jump:.1e}")));

    let fields: [(fn(&[f64; 3]) -> [f64; 3], fn(&[f64; 3]) -> f64); 3] = [
        (|x| [x[0] * x[0], x[0] * x[1], 0.0], |x| 3.0 * x[0]),
        (|x| [x[1].sin(), x[0].cos(), 0.0], |_| 0.0),
        (|x| [x[0] * x[1] * x[1], -x[1], 0.0], |x| x[1] * x[1] - 1.0),
    ];
    let mut commuting = 0.0f64;
    for n in [2, 3] {
        let mesh = Arc::new(Mesh::rect(n, n).unwrap());
        for order in [1, 2] {
            let v = build_space(&mesh, Family::Rt, order).unwrap();
            let w = build_space(&mesh, Family::Dg, order - 1).unwrap();
            let b = assemble_div_all(&v, &w).unwrap();
            let minv = BlockDiagonal::inverse_of(&assemble_mass_w(&w).unwrap(), &cell_dof_groups(&w)).unwrap();
            for (u, div) in fields {
                let pu = interpolate_hdiv(&v, u).unwrap();
                let lhs = minv.apply(&b.spmv(pu.coeffs()).unwrap());
                let rhs = project_l2(&w, div).unwrap();
                for (a, r) in lhs.iter().zip(rhs.coeffs()) {
                    commuting = commuting.max((a - r).abs());
                }
            }
        }
    }
    checks.push((commuting <= 1e-11, format!("commuting residual {commuting:.1e}")));

    let rotating = ModelParams::new(0.1, 0.1)
        .with_coriolis(CoefficientField::from_fn(|x: &[f64; 3]| x[2]))
        .with_drag(CoefficientField::Constant(1.0))
        .with_depth(bump(), 1.0);
    let m = sphere_model(2, 1, rotating.clone());
    let skew = m.perp.skew_defect();
    checks.push((skew <= 1e-13, format!("Coriolis skewness {skew:.1e}")));

    let mut ortho = 0.0f64;
    for seed in 0..4 {
        let u = m.random_state(seed).u;
        let parts = helmholtz_decompose(&m, &u).unwrap();
        ortho = ortho.max(inner_wh(&m, &parts.ud, &parts.us).abs() / inner_wh(&m, &u, &u));
    }
    checks.push((ortho <= 1e-10, format!("Helmholtz orthogonality {ortho:.1e}")));

    let (u, eta) = solve_steady_geotryptic(&m, &ForcingSpec::Zero, 0.0, &SolverConfig::default()).unwrap();
    let steady = u.coeffs().iter().chain(eta.coeffs()).fold(0.0f64, |a, x| a.max(x.abs()));
    checks.push((steady == 0.0, format!("steady zero-forcing max {steady:.1e}")));

    let drift = |dt: f64, sub: &str| {
        let (s, series) = run(
            Experiment::Energy,
            &["scheme=symplectic", &format!("dt={dt}")],
            &dir.join(sub),
        );
        max_relative_drift(&series.column("E1").unwrap(), metric(&s, "e1_initial"))
    };
    let halving = drift(0.01, "se1") / drift(0.005, "se2");
    checks.push(((1.5..=2.5).contains(&halving), format!("symplectic drift ratio {halving:.3}")));

    let inv: Vec<f64> = (1..=3)
        .map(|l| {
            let mesh = Arc::new(Mesh::icosphere(l, 1).unwrap());
            let v = build_space(&mesh, Family::Rt, 1).unwrap();
            let w = build_space(&mesh, Family::Dg, 0).unwrap();
            estimate_inverse_constant(&v, &w, mesh.statistics().h_max).unwrap()
        })
        .collect();
    let (lo, hi) = inv.iter().fold((f64::MAX, 0.0f64), |(a, b), &c| (a.min(c), b.max(c)));
    checks.push((hi <= 1.25 * lo, format!("inverse constants {inv:.3?}")));

    let cp: Vec<f64> = [2, 3]
        .iter()
        .map(|&l| estimate_poincare_constant(&sphere_model(l, 1, ModelParams::new(0.1, 0.1).with_depth(bump(), 1.0))).unwrap())
        .collect();
    let spread = (cp[0] - cp[1]).abs() / cp[1];
    checks.push((spread <= 0.1, format!("Poincare constants {cp:.4?}")));

    let elapsed = start.elapsed();
    let pass = checks.iter().all(|c| c.0) && elapsed.as_secs() < 600;
    let detail: Vec<String> = checks
        .iter()
        .map(|(ok, s)| if *ok { s.clone() } else { format!("{s} [FAILED]") })
        .collect();
    check(7, "structural properties", pass, detail.join("; "), elapsed);
}

fn in_tempdir(f: fn(&Path)) {
    let dir = tempfile::tempdir().unwrap();
    f(dir.path());
}

#[test]
fn criterion_1_energy_conservation() {
    in_tempdir(energy);
}

#[test]
fn criterion_2_monotone_dissipation() {
    monotone_dissipation();
}

#[test]
fn criterion_3_exponential_decay() {
    exponential_decay();
}

#[test]
fn criterion_4_mms_rt0_dg0() {
    in_tempdir(mms_rt0);
}

#[test]
fn criterion_5_mms_rt1_dg1() {
    in_tempdir(mms_rt1);
}

#[test]
fn criterion_6_spinup_synchronization() {
    in_tempdir(spinup);
}

#[test]
fn criterion_7_structural_properties() {
    in_tempdir(structure);
}
