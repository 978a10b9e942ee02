//! The nine acceptance criteria, one line each.
//!
//! Runs without the libtest harness so the PASS/FAIL lines always print.
//! Exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use poisson_mlsi::functionals::{
    counterexample_demo, deficit, entropy_functional, mean_of_mu, stability_lower_bound, INEQUALITY_SLACK,
};
use poisson_mlsi::poisson::{bregman_phi, relent_poisson, theta};
use poisson_mlsi::quadrature::{
    stability_chain_report, verify_deficit_identity, verify_entropy_representation, verify_pde_order,
    QuadratureConfig,
};
use poisson_mlsi::suites::{
    random_geometric, random_positive_tables, random_ulc_tables, standard_families, standard_ulc_families,
};
use poisson_mlsi::{DensityFunction, ProblemSpec};

const SEED: u64 = 0x5eed_0001;

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fail(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn wu_battery() -> Outcome {
    let mut worst = f64::INFINITY;
    for (i, f) in random_positive_tables(SEED, 100, 40).into_iter().enumerate() {
        for horizon in [0.5, 1.0, 2.0] {
            let d = deficit(&ProblemSpec::normalized(horizon, f.clone()).map_err(fail)?).map_err(fail)?;
            ensure(d >= -INEQUALITY_SLACK, || format!("table {i}, T={horizon}: deficit {d:e}"))?;
            worst = worst.min(d);
        }
    }
    Ok(format!("300 cases, min deficit {worst:.3e}"))
}

fn equality_family() -> Outcome {
    let mut worst: f64 = 0.0;
    for (i, (f, horizon)) in random_geometric(SEED, 20).into_iter().enumerate() {
        let d = deficit(&ProblemSpec::normalized(horizon, f).map_err(fail)?).map_err(fail)?;
        ensure(d.abs() <= 1e-10, || format!("case {i}: deficit {d:e}"))?;
        worst = worst.max(d.abs());
    }
    let spec = ProblemSpec::normalized(1.0, DensityFunction::geometric(2f64.ln(), 0.0).map_err(fail)?).map_err(fail)?;
    let ent = entropy_functional(&spec).map_err(fail)?;
    let closed = 2.0 * 2f64.ln() - 1.0;
    ensure((ent - closed).abs() <= 1e-12, || format!("Ent {ent} vs 2 log 2 - 1 = {closed}"))?;
    Ok(format!("max |deficit| {worst:.1e}, Ent(2^k) off by {:.1e}", (ent - closed).abs()))
}

fn suite_specs() -> Result<Vec<(String, ProblemSpec)>, String> {
    let mut out = Vec::new();
    for (name, f) in standard_families() {
        for horizon in [0.5, 1.0] {
            out.push((format!("{name}, T={horizon}"), ProblemSpec::normalized(horizon, f.clone()).map_err(fail)?));
        }
    }
    Ok(out)
}

fn entropy_representation() -> Outcome {
    let mut worst: f64 = 0.0;
    for (name, spec) in suite_specs()? {
        let r = verify_entropy_representation(&spec, &QuadratureConfig::for_spec(&spec)).map_err(fail)?;
        ensure(r.abs_residual <= 1e-8, || format!("{name}: residual {:e}", r.abs_residual))?;
        worst = worst.max(r.abs_residual);
    }
    Ok(format!("max residual {worst:.1e}"))
}

fn deficit_identity() -> Outcome {
    let mut worst: f64 = 0.0;
    for (name, spec) in suite_specs()? {
        let r = verify_deficit_identity(&spec, &QuadratureConfig::for_spec(&spec)).map_err(fail)?;
        ensure(r.pass, || format!("{name}: abs {:e}, rel {:e}", r.abs_residual, r.rel_residual))?;
        worst = worst.max(if r.lhs.abs() < 1e-8 { r.abs_residual } else { r.rel_residual });
    }
    Ok(format!("max residual {worst:.1e}"))
}

fn ulc_cases() -> Vec<(String, DensityFunction)> {
    let mut cases: Vec<(String, DensityFunction)> =
        standard_ulc_families().into_iter().map(|(n, f)| (n.to_string(), f)).collect();
    for (i, f) in random_ulc_tables(SEED, 20, 30).into_iter().enumerate() {
        cases.push((format!("ulc table {i}"), f));
    }
    cases
}

fn stability() -> Outcome {
    let mut min_margin = f64::INFINITY;
    let mut n = 0;
    for (name, f) in ulc_cases() {
        for horizon in [0.5, 1.0, 2.0] {
            let spec = ProblemSpec::normalized(horizon, f.clone()).map_err(fail)?;
            let bound = stability_lower_bound(&spec).map_err(fail)?;
            let d = deficit(&spec).map_err(fail)?;
            let mean = mean_of_mu(&spec).map_err(fail)?;
            ensure(mean <= 0.0 || bound > 0.0, || format!("{name}, T={horizon}: bound {bound:e}"))?;
            ensure(d >= bound - INEQUALITY_SLACK, || format!("{name}, T={horizon}: {d:e} < {bound:e}"))?;
            min_margin = min_margin.min(d - bound);
            n += 1;
        }
    }
    Ok(format!("{n} cases, min margin {min_margin:.3e}"))
}

fn stability_chain() -> Outcome {
    let mut failures = Vec::new();
    for (name, f) in standard_ulc_families() {
        let spec = ProblemSpec::normalized(1.0, f).map_err(fail)?;
        let r = stability_chain_report(&spec, &QuadratureConfig::for_spec(&spec), 20).map_err(fail)?;
        if !r.second_difference_holds() {
            failures.push(format!("{name}: (i) excess {:.3e} at {:?}", r.max_excess, r.worst_point));
        }
        if !r.eta_monotone() {
            failures.push(format!("{name}: (ii) eta rises by {:.3e}", r.max_eta_increase));
        }
        if !r.ulc_preserved() {
            failures.push(format!("{name}: (iii) P_t f not ULC at {} grid times", r.ulc_violations.len()));
        }
    }
    if failures.is_empty() {
        Ok("(i), (ii), (iii) hold on the ULC suite".into())
    } else {
        Err(failures.join("; "))
    }
}

fn counterexample() -> Outcome {
    let a_grid = [0.0, 2f64.ln(), 4f64.ln()];
    let expected = [0.0767, 0.3069, 1.2274];
    let rows = counterexample_demo(&a_grid, 1.0).map_err(fail)?;
    ensure(rows.len() == 3, || format!("{} rows", rows.len()))?;
    for (r, want) in rows.iter().zip(expected) {
        ensure(r.deficit <= 1e-10, || format!("a={}: deficit {:e}", r.a, r.deficit))?;
        ensure((r.conjectured_bound - want).abs() <= 5e-5, || {
            format!("a={}: bound {} vs {want}", r.a, r.conjectured_bound)
        })?;
        ensure(r.violation >= 0.07, || format!("a={}: violation {}", r.a, r.violation))?;
    }
    let bounds: Vec<String> = rows.iter().map(|r| format!("{:.4}", r.conjectured_bound)).collect();
    Ok(format!("bounds [{}] all violated", bounds.join(", ")))
}

fn summary_value(path: &Path, key: &str) -> Result<String, String> {
    let mut reader = csv::Reader::from_path(path).map_err(fail)?;
    for row in reader.records() {
        let row = row.map_err(fail)?;
        if &row[0] == key {
            return Ok(row[1].to_string());
        }
    }
    Err(format!("{key} missing from {}", path.display()))
}

fn monte_carlo() -> Outcome {
    let dir = tempfile::tempdir().map_err(fail)?;
    let spec_path = dir.path().join("gaussian.toml");
    std::fs::write(&spec_path, "T = 1.0\n[f]\nfamily = \"gaussian_like\"\nq = 0.7\ns = 1.0\n").map_err(fail)?;
    let run = |workers: usize| -> Result<(std::process::Output, Duration), String> {
        let start = Instant::now();
        let out = Command::new(env!("CARGO_BIN_EXE_mlsi"))
            .arg("simulate")
            .arg(&spec_path)
            .args(["--paths", "100000", "--seed", "20240611", "--grid", "9"])
            .args(["--workers", &workers.to_string()])
            .arg("--out-dir")
            .arg(dir.path().join(format!("w{workers}")))
            .output()
            .map_err(fail)?;
        Ok((out, start.elapsed()))
    };
    let (single, elapsed) = run(1)?;
    ensure(single.status.success(), || {
        format!("exit {:?}: {}", single.status.code(), String::from_utf8_lossy(&single.stdout))
    })?;
    ensure(elapsed <= Duration::from_secs(120), || format!("single worker took {elapsed:?}"))?;
    let (eight, _) = run(8)?;
    ensure(eight.status.success(), || format!("8 workers: exit {:?}", eight.status.code()))?;
    for file in ["diagnostics.csv", "summary.csv"] {
        let a = std::fs::read(dir.path().join("w1").join(file)).map_err(fail)?;
        let b = std::fs::read(dir.path().join("w8").join(file)).map_err(fail)?;
        ensure(a == b, || format!("{file} differs between 1 and 8 workers"))?;
    }
    let tv = summary_value(&dir.path().join("w1/summary.csv"), "tv_distance_at_T")?;
    Ok(format!("TV {tv}, single worker {:.1}s, CSVs identical", elapsed.as_secs_f64()))
}

fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    (0..n).map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp()).collect()
}

fn identity_micro_suite() -> Outcome {
    let grid = log_grid(1e-3, 1e3, 61);
    for &x in &grid {
        for &y in &grid {
            let (b, r) = (bregman_phi(y, x).map_err(fail)?, relent_poisson(y, x).map_err(fail)?);
            ensure((b - r).abs() <= 1e-12 * (1.0 + r.abs()), || format!("Bregman at x={x}, y={y}: {b} vs {r}"))?;
        }
    }
    let cs = log_grid(1e-2, 1e2, 21);
    let zs = log_grid(1e-3, 1e2, 41);
    for &c in &cs {
        for &z in &zs {
            let lhs = theta(c, z).map_err(fail)?;
            let rhs = z * z * relent_poisson(1.0 / (1.0 + c * z), 1.0).map_err(fail)?;
            ensure((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()), || format!("Theta at c={c}, z={z}"))?;
            for r in [0.5, 2.0, 10.0] {
                let scaled = theta(r * c, z / r).map_err(fail)?;
                ensure((scaled - lhs / (r * r)).abs() <= 1e-12 * (1.0 + lhs.abs()), || {
                    format!("scaling at r={r}, c={c}, z={z}")
                })?;
            }
        }
    }
    let mut min_slope = f64::INFINITY;
    for f in [DensityFunction::gaussian_like(0.7, 1.0).map_err(fail)?, DensityFunction::poisson_kernel(2.0).map_err(fail)?] {
        let spec = ProblemSpec::normalized(1.0, f).map_err(fail)?;
        for (t, k) in [(0.25, 0), (0.5, 1), (0.75, 3)] {
            for order in verify_pde_order(&spec, t, k, 1e-3).map_err(fail)? {
                ensure(order.pass, || format!("{} at t={t}, k={k}: slope {}", order.name, order.slope))?;
                min_slope = min_slope.min(order.slope);
            }
        }
    }
    Ok(format!("identities within 1e-12, min PDE slope {min_slope:.2}"))
}

fn main() {
    let criteria: [(&str, u64, fn() -> Outcome); 9] = [
        ("wu inequality battery", 30, wu_battery),
        ("equality family", 5, equality_family),
        ("entropy representation", 20, entropy_representation),
        ("deficit identity", 30, deficit_identity),
        ("stability bound", 20, stability),
        ("stability chain", 20, stability_chain),
        ("counterexample to the beta conjecture", 20, counterexample),
        ("monte carlo concordance", 300, monte_carlo),
        ("identity micro-suite", 10, identity_micro_suite),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        let outcome = outcome.and_then(|msg| {
            if secs <= budget as f64 {
                Ok(msg)
            } else {
                Err(format!("{msg}; took {secs:.1}s, budget {budget}s"))
            }
        });
        match outcome {
            Ok(msg) => println!("criterion {}: PASS {name} ({secs:.2}s) {msg}", i + 1),
            Err(msg) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({secs:.2}s) {msg}", i + 1);
            }
        }
    }
    println!("{} of 9 criteria passed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
