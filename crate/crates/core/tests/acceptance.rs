//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`) so every line is printed even
//! when an earlier criterion fails. Exits non-zero when any criterion fails.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use oseen::assembly::{assemble_a, assemble_forms, assemble_velocity_mass};
use oseen::c64;
use oseen::convection::{BetaKind, ConvectionField};
use oseen::eigensolver::{dense_oseen_eigenvalues, solve_oseen, ArnoldiOptions};
use oseen::experiment::{
    format_convergence_csv, run_convergence, run_robustness, write_convergence, ConvergenceRun, ExperimentConfig,
    InstabilityFlag, Scenario,
};
use oseen::mesh::{DiagonalPattern, DomainKind, Mesh};
use oseen::postprocess::{fit_rate, is_conjugate_pair};
use oseen::quadrature::{rule_for_degree, MAX_DEGREE};
use oseen::spaces::{Family, ReferenceElement, SpacePair};

type Check = Result<String, String>;

fn config(pairs: &[(&str, &str)]) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.constants = false;
    for (k, v) in pairs {
        cfg.set(k, v).expect("valid acceptance configuration");
    }
    cfg
}

fn converge(cfg: &ExperimentConfig) -> Result<ConvergenceRun, String> {
    run_convergence(cfg).map_err(|e| format!("run failed: {e}"))
}

/// Compares extrapolated values and orders of the tracked eigenvalues; a NaN
/// reference value means only the order is checked.
fn compare_table(run: &ConvergenceRun, lambdas: &[f64], tol: f64, orders: &[(f64, f64)]) -> Check {
    let mut report = Vec::new();
    let mut ok = true;
    for (i, (&want, &(lo, hi))) in lambdas.iter().zip(orders).enumerate() {
        let Some(fit) = run.tracked.get(i).and_then(|t| t.fit.as_ref()) else {
            ok = false;
            report.push(format!("λ{}: no fit", i + 1));
            continue;
        };
        let alpha = fit.alpha.unwrap_or(f64::INFINITY);
        let value = if want.is_nan() {
            ok &= (lo..=hi).contains(&alpha);
            "order only".to_string()
        } else {
            let err = (fit.lambda_extr - c64::new(want, 0.0)).norm();
            ok &= err <= tol && (lo..=hi).contains(&alpha);
            format!("want {want}, err {err:.1e}")
        };
        report.push(format!("λ{}={:.4} ({value}) α={alpha:.2} in [{lo:.2},{hi:.2}]", i + 1, fit.lambda_extr.re));
    }
    if ok {
        Ok(report.join("; "))
    } else {
        Err(report.join("; "))
    }
}

fn around(values: &[f64], width: f64) -> Vec<(f64, f64)> {
    values.iter().map(|v| (v - width, v + width)).collect()
}

fn square_rt0() -> Check {
    let run = converge(&config(&[("family", "rt"), ("degree", "0")]))?;
    compare_table(&run, &[13.6096, 23.1296, 23.4229, 32.2981], 1e-2, &around(&[1.92, 2.02, 2.02, 2.00], 0.2))
}

fn square_bdm1() -> Check {
    let run = converge(&config(&[("family", "bdm"), ("degree", "1")]))?;
    compare_table(&run, &[13.6097, 23.1302, 23.4233, 32.2985], 1e-2, &around(&[2.0; 4], 0.15))
}

fn square_rt1() -> Check {
    let run = converge(&config(&[("family", "rt"), ("degree", "1"), ("levels", "20,30,40")]))?;
    compare_table(&run, &[13.6096, 23.1297, 23.4230, 32.2981], 5e-3, &[(3.7, f64::INFINITY); 4])
}

fn square_bdm1_vortex() -> Check {
    let run = converge(&config(&[("family", "bdm"), ("degree", "1"), ("beta", "beta2")]))?;
    let target = c64::new(23.0702, 0.7771);
    let fits: Vec<(c64, f64)> = run
        .tracked
        .iter()
        .filter_map(|t| t.fit.as_ref())
        .map(|f| (f.lambda_extr, f.alpha.unwrap_or(f64::INFINITY)))
        .collect();
    let hit = |z: c64| fits.iter().find(|(l, a)| (l - z).norm() <= 3e-2 && (1.8..=2.3).contains(a));
    let found: Vec<String> = fits.iter().map(|(l, a)| format!("{:.4}{:+.4}i α={a:.2}", l.re, l.im)).collect();
    match (hit(target), hit(target.conj())) {
        (Some(p), Some(q)) if is_conjugate_pair(p.0, q.0) || (p.0 - q.0.conj()).norm() <= 6e-2 => {
            Ok(format!("pair {:.4} ± {:.4}i", p.0.re, p.0.im.abs()))
        }
        _ => Err(format!("no conjugate pair near 23.0702 ± 0.7771i; extrapolated [{}]", found.join(", "))),
    }
}

fn lshape_rt0() -> Check {
    let cfg =
        config(&[("domain", "lshape"), ("family", "rt"), ("degree", "0"), ("nu", "1"), ("levels", "64,86,108,130")]);
    let run = converge(&cfg)?;
    let table_dof = [32080.0, 55890.0, 87680.0, 126870.0];
    let dof_ok = run.levels.iter().zip(table_dof).all(|(l, d)| (l.dof as f64 - d).abs() <= 0.1 * d);
    let dofs: Vec<usize> = run.levels.iter().map(|l| l.dof).collect();
    let mut orders = vec![(1.4, 1.9)];
    orders.extend(around(&[2.0; 3], 0.25));
    // only λ1 has a reference value; the others are checked through their orders
    let table = compare_table(&run, &[32.9007, f64::NAN, f64::NAN, f64::NAN], 5e-2, &orders);
    match (dof_ok, table) {
        (true, Ok(s)) => Ok(format!("dof {dofs:?}; {s}")),
        (dof_ok, Ok(s) | Err(s)) => Err(format!("dof {dofs:?} (parity {dof_ok}); {s}")),
    }
}

fn robustness() -> Check {
    let cfg =
        config(&[("family", "bdm"), ("degree", "1"), ("levels", "8,16,32"), ("nu_exponents", "0,1,2,3,4,5,6,7,8")]);
    let points = run_robustness(&cfg).map_err(|e| format!("sweep failed: {e}"))?;
    let mut bad = Vec::new();
    let mut flagged = Vec::new();
    for p in &points {
        match p.scenario {
            Scenario::ConvectionEqualsNu => {
                let orders = p.orders();
                if orders.len() < 4 || orders.iter().any(|a| !a.is_some_and(|a| (1.8..=2.2).contains(&a))) {
                    bad.push(format!("j={} orders {orders:?}", p.j));
                }
            }
            Scenario::UnitConvection => {
                let unstable = p
                    .flags
                    .iter()
                    .any(|f| matches!(f, InstabilityFlag::NegativeEigenvalue | InstabilityFlag::FitFailure));
                if p.j >= 2 && unstable {
                    flagged.push(p.j);
                }
            }
        }
    }
    match (bad.is_empty(), flagged.is_empty()) {
        (true, false) => Ok(format!("‖β‖=ν orders in [1.8, 2.2] for all j; ‖β‖=1 flagged at j = {flagged:?}")),
        _ => Err(format!("‖β‖=ν violations: {bad:?}; ‖β‖=1 flagged at j = {flagged:?}")),
    }
}

fn space(n: usize, family: Family, degree: usize) -> SpacePair {
    let mesh = Arc::new(Mesh::build_square(n, DiagonalPattern::default()).expect("mesh"));
    SpacePair::new(mesh, family, degree).expect("space")
}

fn oracle() -> Check {
    let mut worst: f64 = 0.0;
    for (family, degree) in [(Family::Rt, 0), (Family::Bdm, 1)] {
        let sp = space(4, family, degree);
        for kind in [BetaKind::Zero, BetaKind::Beta1, BetaKind::Beta3] {
            let beta = ConvectionField::new(kind, DomainKind::Square, true, 1.0).map_err(|e| e.to_string())?;
            let sys = assemble_forms(&sp, &beta, 0.5).map_err(|e| e.to_string())?;
            let dense = dense_oseen_eigenvalues(&sys).map_err(|e| e.to_string())?;
            let pairs =
                solve_oseen(&sys, c64::new(0.0, 0.0), 6, &ArnoldiOptions::default()).map_err(|e| e.to_string())?;
            if pairs.len() < 6 || dense.len() < 6 {
                return Err(format!("{family}{degree} {kind}: too few eigenvalues"));
            }
            let cutoff = dense[5].norm() * (1.0 + 1e-8);
            for p in pairs.iter().take(6) {
                let nearest = dense.iter().map(|d| (p.lambda - d).norm() / d.norm()).fold(f64::INFINITY, f64::min);
                if p.lambda.norm() > cutoff {
                    return Err(format!("{family}{degree} {kind}: {} is not among the 6 smallest", p.lambda));
                }
                worst = worst.max(nearest);
            }
        }
    }
    if worst <= 1e-8 {
        Ok(format!("max relative deviation {worst:.1e}"))
    } else {
        Err(format!("max relative deviation {worst:.1e} > 1e-8"))
    }
}

fn adjoint() -> Check {
    let sp = space(8, Family::Rt, 0);
    let mut worst: f64 = 0.0;
    for kind in [BetaKind::Beta1, BetaKind::Beta2, BetaKind::Beta3] {
        let beta = ConvectionField::new(kind, DomainKind::Square, true, 1.0).map_err(|e| e.to_string())?;
        let sys = assemble_forms(&sp, &beta, 0.5).map_err(|e| e.to_string())?;
        let adj = oseen::assembly::assemble_adjoint(&sp, &beta, 0.5).map_err(|e| e.to_string())?;
        let opts = ArnoldiOptions::default();
        let primal = solve_oseen(&sys, c64::new(0.0, 0.0), 4, &opts).map_err(|e| e.to_string())?;
        // two extra adjoint values so that a pair cut at the fourth position still finds its partner
        let dual = solve_oseen(&adj, c64::new(0.0, 0.0), 6, &opts).map_err(|e| e.to_string())?;
        for p in primal.iter().take(4) {
            let d = dual.iter().map(|q| (p.lambda - q.lambda.conj()).norm()).fold(f64::INFINITY, f64::min);
            worst = worst.max(d);
        }
    }
    if worst <= 1e-7 {
        Ok(format!("max |λ − conj(λ*)| = {worst:.1e}"))
    } else {
        Err(format!("max |λ − conj(λ*)| = {worst:.1e} > 1e-7"))
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|v| v as f64).product()
}

fn properties() -> Check {
    let mut failures = Vec::new();

    let mut quad_err: f64 = 0.0;
    for d in 0..=MAX_DEGREE {
        let rule = rule_for_degree(d).map_err(|e| e.to_string())?;
        for a in 0..=d {
            let b = d - a;
            let exact = factorial(a) * factorial(b) / factorial(a + b + 2);
            let got = rule.integrate(|x, y| x.powi(a as i32) * y.powi(b as i32));
            quad_err = quad_err.max((got - exact).abs() / exact);
        }
    }
    if quad_err > 1e-13 {
        failures.push(format!("quadrature error {quad_err:.1e}"));
    }

    let mut unisolvence: f64 = 0.0;
    let elements =
        [(Family::Rt, 0), (Family::Rt, 1), (Family::Rt, 2), (Family::Bdm, 1), (Family::Bdm, 2), (Family::Bdm, 3)];
    for (family, k) in elements {
        let el = ReferenceElement::new(family, k).map_err(|e| e.to_string())?;
        for (j, row) in el.functional_matrix().iter().enumerate() {
            for (i, v) in row.iter().enumerate() {
                unisolvence = unisolvence.max((v - if i == j { 1.0 } else { 0.0 }).abs());
            }
        }
    }
    if unisolvence > 1e-10 {
        failures.push(format!("unisolvence error {unisolvence:.1e}"));
    }

    let mut kernel: f64 = 0.0;
    let mut spd = true;
    for (family, k) in elements {
        let sp = space(3, family, k);
        let a = assemble_a(&sp, 0.5).map_err(|e| e.to_string())?;
        let id = sp.interpolate_tensor(|_| [[1.0, 0.0], [0.0, 1.0]]);
        let r = a.matvec(&id);
        kernel = kernel.max(r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / a.max_abs().max(1.0));
        let m = assemble_velocity_mass(&sp).map_err(|e| e.to_string())?;
        spd &= m.max_abs_diff(&m.transpose()) <= 1e-14 * m.max_abs() && cholesky_ok(&m.to_dense());
    }
    if kernel > 1e-14 {
        failures.push(format!("A·I = {kernel:.1e}"));
    }
    if !spd {
        failures.push("velocity mass not SPD".into());
    }

    let mut pressure: f64 = 0.0;
    for (family, degree) in [("rt", "0"), ("bdm", "1"), ("rt", "1")] {
        let run = converge(&config(&[("family", family), ("degree", degree), ("levels", "4,6,8"), ("beta", "beta3")]))?;
        for l in &run.levels {
            let p = l.pressure.ok_or("missing pressure")?;
            pressure = pressure.max(p.mean.abs() / p.l2_norm.max(f64::MIN_POSITIVE));
        }
    }
    if pressure > 1e-9 {
        failures.push(format!("pressure mean {pressure:.1e}"));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut fit_err: f64 = 0.0;
    for _ in 0..200 {
        let lambda = c64::new(rng.random_range(1.0..60.0), rng.random_range(-2.0..2.0));
        let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let cst = c64::new(sign * rng.random_range(0.5..20.0), rng.random_range(-5.0..5.0));
        let alpha = rng.random_range(1.0..6.0);
        let levels: Vec<(f64, c64)> =
            [8.0f64, 12.0, 16.0, 24.0].iter().map(|n| (1.0 / n, lambda + cst * (1.0 / n).powf(alpha))).collect();
        let fit = fit_rate(&levels).map_err(|e| e.to_string())?;
        let got = fit.alpha.unwrap_or(f64::INFINITY);
        fit_err = fit_err.max((got - alpha).abs() / alpha).max((fit.lambda_extr - lambda).norm() / lambda.norm());
    }
    if fit_err > 1e-6 {
        failures.push(format!("fit recovery {fit_err:.1e}"));
    }

    let deterministic = determinism()?;
    if !deterministic {
        failures.push("reruns differ".into());
    }

    let summary = format!(
        "quadrature {quad_err:.1e}, unisolvence {unisolvence:.1e}, A·I {kernel:.1e}, mass SPD {spd}, pressure mean {pressure:.1e}, fit {fit_err:.1e}, deterministic {deterministic}"
    );
    if failures.is_empty() {
        Ok(summary)
    } else {
        Err(format!("{summary}; failed: {}", failures.join(", ")))
    }
}

fn cholesky_ok(a: &[Vec<f64>]) -> bool {
    let n = a.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if d <= 0.0 {
                    return false;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    true
}

fn determinism() -> Result<bool, String> {
    let cfg = config(&[("family", "bdm"), ("degree", "1"), ("levels", "4,6,8"), ("beta", "beta2"), ("seed", "3")]);
    let base: PathBuf = std::env::temp_dir().join(format!("oseen-acceptance-{}", std::process::id()));
    let mut outputs = Vec::new();
    for i in 0..2 {
        let run = converge(&cfg)?;
        let dir = base.join(i.to_string());
        write_convergence(&run, &dir, false).map_err(|e| e.to_string())?;
        let csv = std::fs::read(dir.join("convergence.csv")).map_err(|e| e.to_string())?;
        let json = std::fs::read(dir.join("convergence.json")).map_err(|e| e.to_string())?;
        outputs.push((csv, json, format_convergence_csv(&run)));
    }
    let _ = std::fs::remove_dir_all(&base);
    Ok(outputs[0] == outputs[1])
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 9] = [
        ("square RT0 convection along x", square_rt0),
        ("square BDM1 convection along x", square_bdm1),
        ("square RT1 convection along x", square_rt1),
        ("square BDM1 vortex convection, complex pair", square_bdm1_vortex),
        ("L-shape RT0 singular mode", lshape_rt0),
        ("robustness in the viscosity", robustness),
        ("shift-invert against dense QZ", oracle),
        ("adjoint spectrum is conjugate", adjoint),
        ("property suites and determinism", properties),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|t| t.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS [{id}] {name} ({secs:.1} s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL [{id}] {name} ({secs:.1} s): {detail}");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} acceptance criteria failed");
        ExitCode::FAILURE
    }
}
