//! The `mlsi` command line.
//!
//! Exit codes: `0` every check passed, `1` a check failed, `2` bad input,
//! `3` a numerical failure (truncation, domination, reach, quadrature).
//! Output files go to `--out-dir`, else `$MLSI_OUT_DIR`, else the current
//! directory.

pub mod spec_file;

use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use poisson_mlsi::follmer::{
    marginal_law_test, martingale_diagnostics, mc_entropy_estimate, simulate, submartingale_check, uniform_grid,
    SimConfig,
};
use poisson_mlsi::functionals::{counterexample_demo, deficit_report, entropy_functional, mean_of_mu};
use poisson_mlsi::quadrature::{
    stability_chain_report, trapezoid_bias, verify_deficit_identity, verify_entropy_representation,
    verify_pde_order, verify_phi_derivative_lemma, IdentityReport, QuadratureConfig,
};
use poisson_mlsi::{Error, ProblemSpec};

use spec_file::SpecFile;

pub const OUT_DIR_ENV: &str = "MLSI_OUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "mlsi", version, about = "Wu's modified log-Sobolev inequality on the Poisson space")]
pub struct Cli {
    /// Seed for every random stream.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Relative tail tolerance for every series (overrides the spec file).
    #[arg(long, visible_alias = "tolerance", global = true)]
    pub tol: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Entropy, Wu's bound, deficit, ultra-log-concavity and the stability bound.
    Check {
        spec: PathBuf,
        /// Also write the report as a one-row CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Quadrature certificates of the path identities; writes identities.csv.
    Verify {
        spec: PathBuf,
        #[command(flatten)]
        out: OutDir,
    },
    /// Monte Carlo of the Föllmer process; writes diagnostics.csv and summary.csv.
    Simulate {
        spec: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        paths: usize,
        /// Number of diagnostic grid times, including 0 and T.
        #[arg(long, default_value_t = 9)]
        grid: usize,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[command(flatten)]
        out: OutDir,
    },
    /// The geometric equality cases against the β-log-concave conjecture.
    DemoCounterexample {
        /// Comma-separated slopes `a`; `log2`, `log4`-style entries are accepted.
        #[arg(long, default_value = "0,log2,log4")]
        a_grid: String,
        #[arg(long = "T", default_value_t = 1.0)]
        horizon: f64,
        #[command(flatten)]
        out: OutDir,
    },
}

#[derive(Debug, Args)]
pub struct OutDir {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

impl OutDir {
    fn resolve(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    CheckFailed,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::CheckFailed
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    Input(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            CliError::Numerical(e.to_string())
        } else {
            CliError::Input(e.to_string())
        }
    }
}

fn io_error(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Input(format!("{}: {e}", path.display()))
}

/// Fixed 17-significant-digit formatting for every number written.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

fn load(path: &Path, tol: Option<f64>) -> Result<(SpecFile, ProblemSpec), CliError> {
    let text = fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    let file = SpecFile::parse(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let spec = file.build(tol)?;
    Ok((file, spec))
}

fn require_normalized(spec: &ProblemSpec, what: &str) -> Result<(), CliError> {
    if spec.is_normalized() {
        Ok(())
    } else {
        Err(CliError::Input(format!("{what} needs normalize = true")))
    }
}

fn header(out: &mut String, command: &str, cli: &Cli, spec: Option<&ProblemSpec>) {
    let _ = writeln!(out, "# mlsi {command}");
    let _ = writeln!(out, "# seed = {}", cli.seed);
    if let Some(spec) = spec {
        let _ = writeln!(out, "# T = {}", spec.horizon());
        let _ = writeln!(out, "# rel_tail = {:e}", spec.tol().rel_tail);
        let _ = writeln!(out, "# abs_floor = {:e}", spec.tol().abs_floor);
        let _ = writeln!(out, "# k_reach = {}", spec.k_reach());
        let _ = writeln!(out, "# normalized = {}", spec.is_normalized());
    }
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    w.write_record(header).map_err(|e| io_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|e| io_error(path, e))
}

/// Runs one command, writing the human-readable report to `out`.
pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<Outcome, CliError> {
    let mut text = String::new();
    let outcome = match &cli.command {
        Command::Check { spec, csv } => check(cli, spec, csv.as_deref(), &mut text)?,
        Command::Verify { spec, out } => verify(cli, spec, &out.resolve(), &mut text)?,
        Command::Simulate {
            spec,
            paths,
            grid,
            workers,
            out,
        } => simulate_cmd(cli, spec, *paths, *grid, *workers, &out.resolve(), &mut text)?,
        Command::DemoCounterexample { a_grid, horizon, out } => {
            demo(cli, a_grid, *horizon, out.out_dir.as_ref().map(|_| out.resolve()), &mut text)?
        }
    };
    out.write_all(text.as_bytes())
        .map_err(|e| CliError::Input(format!("cannot write report: {e}")))?;
    Ok(outcome)
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or_else(|| "none".to_string(), |x| x.to_string())
}

fn check(cli: &Cli, path: &Path, csv_path: Option<&Path>, text: &mut String) -> Result<Outcome, CliError> {
    let (file, spec) = load(path, cli.tol)?;
    let r = deficit_report(&spec, file.k_max)?;
    header(text, "check", cli, Some(&spec));
    let extension_flag = r.extension_mass.is_some_and(|m| m > spec.tol().rel_tail);
    let pairs: Vec<(&str, String)> = vec![
        ("entropy", fmt_num(r.entropy)),
        ("wu_rhs", fmt_num(r.wu_rhs)),
        ("deficit", fmt_num(r.deficit)),
        ("is_ulc", r.is_ulc.to_string()),
        ("ulc_violation_index", opt(r.ulc_violation_index)),
        ("beta", opt(r.beta.map(fmt_num))),
        ("mean_mu", fmt_num(r.mean_mu)),
        ("stability_bound", fmt_num(r.stability_bound)),
        ("margin", fmt_num(r.margin)),
        ("k_check", r.k_check.to_string()),
        ("max_index_used", r.max_index_used.to_string()),
        ("tail_bound", fmt_num(r.tail_bound)),
        ("extension_mass", opt(r.extension_mass.map(fmt_num))),
        ("extension_flag", extension_flag.to_string()),
        ("wu_holds", r.wu_holds().to_string()),
        ("stability_holds", r.stability_holds().to_string()),
    ];
    for (k, v) in &pairs {
        let _ = writeln!(text, "{k} = {v}");
    }
    if extension_flag {
        let _ = writeln!(text, "# warning: the table extension carries more than rel_tail of the mass");
    }
    if let Some(csv_path) = csv_path {
        let keys: Vec<&str> = pairs.iter().map(|(k, _)| *k).collect();
        write_csv(csv_path, &keys, &[pairs.iter().map(|(_, v)| v.clone()).collect()])?;
    }
    Ok(Outcome::from_pass(r.wu_holds() && r.stability_holds()))
}

fn identity_row(r: &IdentityReport) -> Vec<String> {
    vec![
        r.name.clone(),
        fmt_num(r.lhs),
        fmt_num(r.rhs),
        fmt_num(r.abs_residual),
        fmt_num(r.rel_residual),
        r.pass.to_string(),
    ]
}

fn verify(cli: &Cli, path: &Path, dir: &Path, text: &mut String) -> Result<Outcome, CliError> {
    let (file, spec) = load(path, cli.tol)?;
    require_normalized(&spec, "verify")?;
    let cfg = QuadratureConfig::for_spec(&spec);
    let horizon = spec.horizon();
    let mut reports = vec![
        verify_entropy_representation(&spec, &cfg)?,
        verify_deficit_identity(&spec, &cfg)?,
        verify_phi_derivative_lemma(&spec, horizon / 2.0, horizon * 1e-3)?,
    ];
    for order in verify_pde_order(&spec, horizon / 2.0, 1, horizon * 1e-3)? {
        reports.push(order.as_identity());
    }
    let k_check = file.k_max.unwrap_or_else(|| poisson_mlsi::functionals::default_k_check(spec.density()));
    let ulc = poisson_mlsi::functionals::is_ultra_log_concave(spec.density(), k_check);
    header(text, "verify", cli, Some(&spec));
    if ulc.is_ulc {
        reports.extend(stability_chain_report(&spec, &cfg, 20)?.rows());
    } else {
        let _ = writeln!(text, "# stability chain skipped: f is not ultra-log-concave");
    }
    for r in &reports {
        let _ = writeln!(
            text,
            "{} lhs = {} rhs = {} abs_residual = {} pass = {}",
            r.name,
            fmt_num(r.lhs),
            fmt_num(r.rhs),
            fmt_num(r.abs_residual),
            r.pass
        );
    }
    let csv_path = dir.join("identities.csv");
    write_csv(
        &csv_path,
        &["identity", "lhs", "rhs", "abs_residual", "rel_residual", "pass"],
        &reports.iter().map(identity_row).collect::<Vec<_>>(),
    )?;
    let _ = writeln!(text, "wrote {}", csv_path.display());
    Ok(Outcome::from_pass(reports.iter().all(|r| r.pass)))
}

fn simulate_cmd(
    cli: &Cli,
    path: &Path,
    paths: usize,
    grid: usize,
    workers: usize,
    dir: &Path,
    text: &mut String,
) -> Result<Outcome, CliError> {
    let (_, spec) = load(path, cli.tol)?;
    require_normalized(&spec, "simulate")?;
    if grid < 2 {
        return Err(CliError::Input("--grid needs at least 2 points".into()));
    }
    if paths < 2 {
        return Err(CliError::Input("--paths needs at least 2 paths".into()));
    }
    let horizon = spec.horizon();
    let mut cfg = SimConfig::new(horizon, paths, cli.seed);
    cfg.diag_grid = uniform_grid(horizon, grid);
    let records = simulate(&spec, &cfg, workers)?;

    // X_T − ∫λ is a martingale and λ is one too, so E λ_t = E[X_T] / T.
    let target = mean_of_mu(&spec)? / horizon;
    let rows = martingale_diagnostics(&records, &cfg.diag_grid);
    let lambda_ok = rows.iter().all(|r| r.lambda.covers(target, 1e-10));
    let xtilde_ok = rows.iter().all(|r| r.xtilde.covers(0.0, 1e-10));
    let law = marginal_law_test(&records, &spec, horizon).map_err(|e| match e {
        Error::InsufficientData(m) => CliError::Input(format!("{m}; use more paths")),
        other => other.into(),
    })?;
    let tv_ok = law.tv_distance <= 0.01;
    let exact = entropy_functional(&spec)?;
    let bias = trapezoid_bias(&spec, &cfg.diag_grid)?;
    let est = mc_entropy_estimate(&records, &cfg.diag_grid);
    let entropy_ok = est.covers(exact, bias.abs());
    let sub = submartingale_check(&records, &cfg.diag_grid);
    let pass = lambda_ok && xtilde_ok && tv_ok && entropy_ok && sub.non_decreasing;

    let diag_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_num(r.t),
                fmt_num(r.lambda.value),
                fmt_num(r.lambda.std_error),
                fmt_num(r.xtilde.value),
                fmt_num(r.xtilde.std_error),
                fmt_num(r.phi_lambda.value),
                fmt_num(r.phi_lambda.std_error),
            ]
        })
        .collect();
    write_csv(
        &dir.join("diagnostics.csv"),
        &[
            "t",
            "mean_lambda",
            "se_lambda",
            "mean_xtilde",
            "se_xtilde",
            "mean_phi_lambda",
            "se_phi_lambda",
        ],
        &diag_rows,
    )?;
    let summary: Vec<(&str, String)> = vec![
        ("paths", paths.to_string()),
        ("seed", cli.seed.to_string()),
        ("target_mean_lambda", fmt_num(target)),
        ("tv_distance_at_T", fmt_num(law.tv_distance)),
        ("chi_square_at_T", fmt_num(law.chi_square)),
        ("chi_square_dof", law.degrees_of_freedom.to_string()),
        ("mc_entropy", fmt_num(est.value)),
        ("mc_entropy_se", fmt_num(est.std_error)),
        ("exact_entropy", fmt_num(exact)),
        ("trapezoid_bias", fmt_num(bias)),
        ("lambda_ok", lambda_ok.to_string()),
        ("xtilde_ok", xtilde_ok.to_string()),
        ("tv_ok", tv_ok.to_string()),
        ("entropy_ok", entropy_ok.to_string()),
        ("submartingale_ok", sub.non_decreasing.to_string()),
        ("pass", pass.to_string()),
    ];
    write_csv(
        &dir.join("summary.csv"),
        &["quantity", "value"],
        &summary.iter().map(|(k, v)| vec![k.to_string(), v.clone()]).collect::<Vec<_>>(),
    )?;
    header(text, "simulate", cli, Some(&spec));
    let _ = writeln!(text, "# workers = {workers}");
    for (k, v) in &summary {
        let _ = writeln!(text, "{k} = {v}");
    }
    let _ = writeln!(text, "wrote {} and {}", dir.join("diagnostics.csv").display(), dir.join("summary.csv").display());
    Ok(Outcome::from_pass(pass))
}

/// Parses `0,log2,0.5,-1`. `logN` stands for `ln N`.
pub fn parse_a_grid(s: &str) -> Result<Vec<f64>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            let value = match p.strip_prefix("log") {
                Some(arg) => arg.parse::<f64>().map(f64::ln),
                None => p.parse::<f64>(),
            };
            value
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CliError::Input(format!("bad --a-grid entry {p:?}")))
        })
        .collect()
}

fn demo(cli: &Cli, a_grid: &str, horizon: f64, dir: Option<PathBuf>, text: &mut String) -> Result<Outcome, CliError> {
    let grid = parse_a_grid(a_grid)?;
    let rows = counterexample_demo(&grid, horizon)?;
    header(text, "demo-counterexample", cli, None);
    let _ = writeln!(text, "# T = {horizon}");
    let columns = ["a", "deficit", "beta", "conjectured_bound", "violation"];
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                fmt_num(r.a),
                fmt_num(r.deficit),
                fmt_num(r.beta),
                fmt_num(r.conjectured_bound),
                fmt_num(r.violation),
            ]
        })
        .collect();
    let _ = writeln!(text, "{}", columns.join(","));
    for row in &table {
        let _ = writeln!(text, "{}", row.join(","));
    }
    if let Some(dir) = dir {
        write_csv(&dir.join("counterexample.csv"), &columns, &table)?;
    }
    Ok(Outcome::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn a_grid_parsing() {
        let g = parse_a_grid("0, log2,log4 ,-0.5").unwrap();
        assert_eq!(g.len(), 4);
        assert_eq!(g[1], 2f64.ln());
        assert_eq!(g[3], -0.5);
        assert!(parse_a_grid("").unwrap().is_empty());
        assert!(parse_a_grid("x").is_err());
        assert!(parse_a_grid("log-1").is_err());
    }

    #[test]
    fn numerical_errors_map_to_exit_three() {
        let e = CliError::from(Error::Domination {
            time: 0.5,
            intensity: 3.0,
            bound: 2.0,
        });
        assert_eq!(e.exit_code(), 3);
        assert!(e.to_string().contains("smaller slice length"));
        assert_eq!(CliError::from(Error::Precondition("x".into())).exit_code(), 2);
    }

    #[test]
    fn numbers_have_seventeen_digits() {
        assert_eq!(fmt_num(0.1), "1.0000000000000001e-1");
        assert_eq!(fmt_num(-2.0), "-2.0000000000000000e0");
    }
}
