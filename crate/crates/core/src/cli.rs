//! The `legendre-bvp` command line.
//!
//! Exit codes: 0 when a solve converged or a check passed, 2 for honest
//! non-convergence, refusals and verdicts that are not established, 1 for
//! usage and configuration errors. Diagnostics go to stderr; data goes to
//! files (or to stdout for the small `check`, `basis` and `verify`
//! outputs when no `--out` directory is given).

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value as Json};

use crate::basis::{uniform_points, LegendreSeries, QuadratureRule, eval_legendre};
use crate::bifurcation::{continue_branch, find_simple_roots, log_grid, BifurcationError};
use crate::config::{load_config, BranchConfig, ConfigError, SolveConfig};
use crate::expr::{Limits, ScalarFunction};
use crate::lyapunov_schmidt::{solvability_from_limits, ResonantContext, SolvabilityVerdict};
use crate::resolvent::{is_resonant, resolvent_norm_bound};
use crate::solver::{assess, theorem2_box, Regime, SolutionReport, SolverError, Theorem2Box};
use crate::verify::{cross_check, is_well_resolved, oracle_residual, CrossCheck, Verdict};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_UNSETTLED: i32 = 2;

/// Uniform samples in `solution.csv`.
pub const SOLUTION_SAMPLES: usize = 401;
/// Uniform samples in each `branch_eps_<value>.csv`.
pub const BRANCH_SAMPLES: usize = 201;
/// Default partial-sum length for `check --mu`.
const NORM_BOUND_TERMS: usize = 100_000;
/// Environment variable capping concurrent solves of a batch.
pub const THREADS_ENV: &str = "LEGENDRE_BVP_THREADS";

#[derive(Debug, Parser)]
#[command(name = "legendre-bvp", version, about = "Spectral solver for [(1-t²)x']' + μx = f(x) on (-1, 1)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve from one or more config files.
    Solve(BatchArgs),
    /// Resonance test for μ, or solvability constants for (k, f).
    Check(CheckArgs),
    /// Follow the ε-branch from a simple zero of the bifurcation function.
    Branch(BatchArgs),
    /// Tabulate a Legendre polynomial or a Gauss rule.
    Basis(BasisArgs),
    /// Cross-check a coefficient file against its problem.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
struct BatchArgs {
    /// Config file (`key = value` or an emitted run.json); repeatable.
    #[arg(long = "config", required = true)]
    configs: Vec<PathBuf>,
    /// Output directory, overriding `output_dir` (single config only).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct CheckArgs {
    #[arg(long, allow_negative_numbers = true, conflicts_with = "k")]
    mu: Option<f64>,
    #[arg(long, requires = "f")]
    k: Option<usize>,
    /// Nonlinearity, e.g. "tanh(s)".
    #[arg(long)]
    f: Option<String>,
    #[arg(long, allow_negative_numbers = true, requires = "f_limit_pos")]
    f_limit_neg: Option<f64>,
    #[arg(long, allow_negative_numbers = true, requires = "f_limit_neg")]
    f_limit_pos: Option<f64>,
    /// Terms in the resolvent norm partial sum.
    #[arg(long, default_value_t = NORM_BOUND_TERMS)]
    terms: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BasisArgs {
    /// Degree of the polynomial to sample.
    #[arg(long, requires = "samples", conflicts_with = "rule")]
    poly: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    /// Gauss rule size.
    #[arg(long)]
    rule: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Coefficient CSV with header `k,c_k`.
    #[arg(long)]
    solution: PathBuf,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// A failure with its exit code.
#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::usage(format!("config error: {e}"))
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::usage(format!("I/O error: {e}"))
    }
}

type Outcome = Result<i32, Failure>;

/// Runs the command line `argv` (program name first) and returns the
/// exit code.
pub fn run<I, S>(argv: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Solve(a) => batch(&a, "solve", run_solve),
        Command::Branch(a) => batch(&a, "branch", run_branch),
        Command::Check(a) => run_check(&a),
        Command::Basis(a) => run_basis(&a),
        Command::Verify(a) => run_verify(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            eprintln!("legendre-bvp: {}", f.message);
            f.code
        }
    }
}

/// Worst of two exit codes: usage errors, then unsettled, then success.
fn worse(a: i32, b: i32) -> i32 {
    let rank = |c| match c {
        EXIT_OK => 0,
        EXIT_UNSETTLED => 1,
        _ => 2,
    };
    if rank(b) > rank(a) {
        b
    } else {
        a
    }
}

fn thread_cap() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or(1)
}

fn batch(args: &BatchArgs, sub: &str, job: fn(&Path, Option<&Path>) -> Outcome) -> Outcome {
    if args.out.is_some() && args.configs.len() > 1 {
        return Err(Failure::usage("--out applies to a single --config"));
    }
    let out = args.out.as_deref();
    let report = |path: &Path, r: Outcome| -> i32 {
        match r {
            Ok(code) => code,
            Err(f) => {
                eprintln!("legendre-bvp {sub} {}: {}", path.display(), f.message);
                f.code
            }
        }
    };
    if args.configs.len() == 1 {
        return job(&args.configs[0], out);
    }
    let threads = thread_cap();
    let mut code = EXIT_OK;
    for chunk in args.configs.chunks(threads) {
        let codes: Vec<i32> = std::thread::scope(|s| {
            let handles: Vec<_> = chunk
                .iter()
                .map(|p| s.spawn(move || report(p, job(p, out))))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or(EXIT_USAGE))
                .collect()
        });
        code = codes.into_iter().fold(code, worse);
    }
    Ok(code)
}

/// 17 significant digits.
pub fn fmt_real(v: f64) -> String {
    format!("{v:.16e}")
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    let mut file = fs::File::create(path)
        .map_err(|e| Failure::usage(format!("cannot create {}: {e}", path.display())))?;
    file.write_all(text.as_bytes())?;
    Ok(())
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Failure::usage(format!("serialization failed: {e}")))?;
    text.push('\n');
    write_text(path, &text)
}

fn json_text(value: &impl Serialize) -> String {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    text
}

fn samples_csv(x: &LegendreSeries, points: usize) -> String {
    let mut out = String::from("t,x\n");
    for t in uniform_points(points) {
        let _ = writeln!(out, "{},{}", fmt_real(t), fmt_real(x.eval(t)));
    }
    out
}

pub fn coefficients_csv(x: &LegendreSeries) -> String {
    let mut out = String::from("k,c_k\n");
    for (k, c) in x.coeffs().iter().enumerate() {
        let _ = writeln!(out, "{k},{}", fmt_real(*c));
    }
    out
}

/// Parses a `k,c_k` file; missing indices are zero.
pub fn read_coefficients(text: &str) -> Result<LegendreSeries, String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim() == "k,c_k" => {}
        _ => return Err("expected header `k,c_k`".into()),
    }
    let mut coeffs: Vec<f64> = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || format!("line {}: expected `k,c_k`", i + 1);
        let (k, c) = line.split_once(',').ok_or_else(bad)?;
        let k: usize = k.trim().parse().map_err(|_| bad())?;
        let c: f64 = c.trim().parse().map_err(|_| bad())?;
        if !c.is_finite() {
            return Err(format!("line {}: non-finite coefficient", i + 1));
        }
        if coeffs.len() <= k {
            coeffs.resize(k + 1, 0.0);
        }
        coeffs[k] = c;
    }
    if coeffs.is_empty() {
        return Err("no coefficients".into());
    }
    Ok(LegendreSeries::new(coeffs))
}

fn prepare_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir)
        .map_err(|e| Failure::usage(format!("cannot create {}: {e}", dir.display())))
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    status: &'static str,
    mu: f64,
    k: Option<usize>,
    f: &'a str,
    report: Option<&'a SolutionReport>,
    oracle_residual: Option<f64>,
    well_resolved: Option<bool>,
    verdict: Option<SolvabilityVerdict>,
    #[serde(rename = "box")]
    invariant_box: Option<Theorem2Box>,
    message: Option<String>,
}

fn run_solve(path: &Path, out: Option<&Path>) -> Outcome {
    let mut cfg = SolveConfig::from_raw(load_config(path)?, "solve")?;
    if let Some(dir) = out {
        cfg.output_dir = dir.to_path_buf();
    }
    let problem = cfg.problem()?;
    let dir = cfg.output_dir.clone();
    prepare_dir(&dir)?;
    write_json(&dir.join("run.json"), &cfg.to_json("solve"))?;

    let k = match problem.regime {
        Regime::Resonant { k } => Some(k),
        Regime::NonResonant { .. } => None,
    };
    let mut output = SolveOutput {
        status: "failed",
        mu: problem.mu(),
        k,
        f: &cfg.function.f,
        report: None,
        oracle_residual: None,
        well_resolved: None,
        verdict: None,
        invariant_box: None,
        message: None,
    };
    let result = problem.solve(&cfg.solver);
    let code = match &result {
        Ok(rep) => {
            output.status = if rep.converged { "converged" } else { "not_converged" };
            output.report = Some(rep);
            output.verdict = rep.verdict;
            output.well_resolved = Some(is_well_resolved(&rep.x));
            output.oracle_residual =
                oracle_residual(&rep.x, problem.mu(), &problem.f, 1.0, &cfg.oracle).ok();
            if let (Some(k), Some(v)) = (k, rep.verdict) {
                if v.is_established() && v.j1 * v.j2 < 0.0 {
                    let ctx = ResonantContext::build(k, cfg.solver.degree)
                        .map_err(|e| Failure::usage(e.to_string()))?;
                    output.invariant_box = theorem2_box(&problem.f, &ctx).ok();
                }
            }
            fs::write(dir.join("solution.csv"), samples_csv(&rep.x, SOLUTION_SAMPLES))?;
            fs::write(dir.join("coefficients.csv"), coefficients_csv(&rep.x))?;
            eprintln!(
                "solve {}: {} after {} iterations, residual {:e}",
                path.display(),
                output.status,
                rep.iterations,
                rep.residual_coeff
            );
            if rep.converged {
                EXIT_OK
            } else {
                EXIT_UNSETTLED
            }
        }
        Err(SolverError::InvalidOptions(m)) => return Err(Failure::usage(m.clone())),
        Err(SolverError::Refused { reason, verdict }) => {
            output.status = "refused";
            output.verdict = *verdict;
            output.message = Some(reason.clone());
            eprintln!("solve {}: refused: {reason}", path.display());
            EXIT_UNSETTLED
        }
        Err(e) => {
            output.message = Some(e.to_string());
            eprintln!("solve {}: {e}", path.display());
            EXIT_UNSETTLED
        }
    };
    write_json(&dir.join("report.json"), &output)?;
    Ok(code)
}

/// `branch_eps_<value>.csv` with the shortest exponent form of `ε`.
pub fn branch_file_name(eps: f64) -> String {
    format!("branch_eps_{eps:e}.csv")
}

fn run_branch(path: &Path, out: Option<&Path>) -> Outcome {
    let mut cfg = BranchConfig::from_raw(load_config(path)?)?;
    if let Some(dir) = out {
        cfg.output_dir = dir.to_path_buf();
    }
    let f = cfg.function.function()?;
    let dir = cfg.output_dir.clone();
    prepare_dir(&dir)?;
    write_json(&dir.join("run.json"), &cfg.to_json())?;

    let unsettled = |status: &str, message: String, roots: Json| -> Outcome {
        eprintln!("branch {}: {message}", path.display());
        write_json(
            &dir.join("branch.json"),
            &json!({ "status": status, "message": message, "roots": roots, "report": Json::Null }),
        )?;
        Ok(EXIT_UNSETTLED)
    };
    let bif = |e: BifurcationError| Failure {
        code: EXIT_UNSETTLED,
        message: e.to_string(),
    };

    let mut roots = Json::Null;
    let alpha0 = match cfg.alpha0 {
        Some(a) => a,
        None => {
            let found = find_simple_roots(&f, cfg.k, cfg.alpha_interval, cfg.root_grid).map_err(bif)?;
            roots = json!(found
                .iter()
                .map(|&(a, d)| json!({ "alpha0": a, "dH": d }))
                .collect::<Vec<_>>());
            match found.get(cfg.root_index) {
                Some(&(a, _)) => a,
                None => {
                    return unsettled(
                        "no_simple_root",
                        format!(
                            "{} simple roots on [{}, {}], root_index {} unavailable",
                            found.len(),
                            cfg.alpha_interval.0,
                            cfg.alpha_interval.1,
                            cfg.root_index
                        ),
                        roots,
                    )
                }
            }
        }
    };
    let eps = log_grid(cfg.eps_max, cfg.eps_min, cfg.eps_points);
    let report = match continue_branch(&f, cfg.k, alpha0, &eps, &cfg.solver) {
        Ok(r) => r,
        Err(e @ BifurcationError::NotSimple { .. }) => {
            return unsettled("not_simple", e.to_string(), roots)
        }
        Err(BifurcationError::Solver(SolverError::InvalidOptions(m))) => {
            return Err(Failure::usage(m))
        }
        Err(e) => return Err(bif(e)),
    };

    let mu = crate::resolvent::eigenvalue(cfg.k);
    let oracle_cfg = crate::verify::OracleConfig::default();
    let oracle: Vec<Option<f64>> = report
        .points
        .iter()
        .map(|p| oracle_residual(&p.x, mu, &f, p.epsilon, &oracle_cfg).ok())
        .collect();

    let mut table = String::from("epsilon,alpha,sup_distance_to_xbar,residual\n");
    for p in &report.points {
        let _ = writeln!(
            table,
            "{},{},{},{}",
            fmt_real(p.epsilon),
            fmt_real(p.alpha),
            fmt_real(p.sup_distance_to_xbar),
            fmt_real(p.residual_grid)
        );
        fs::write(dir.join(branch_file_name(p.epsilon)), samples_csv(&p.x, BRANCH_SAMPLES))?;
    }
    fs::write(dir.join("branch.csv"), table)?;
    let status = if report.truncated_at.is_some() {
        "truncated"
    } else {
        "complete"
    };
    write_json(
        &dir.join("branch.json"),
        &json!({
            "status": status,
            "message": Json::Null,
            "roots": roots,
            "oracle_residuals": oracle,
            "report": report,
        }),
    )?;
    eprintln!(
        "branch {}: {status}, {} points from alpha0 = {alpha0}",
        path.display(),
        report.points.len()
    );
    Ok(if report.truncated_at.is_some() {
        EXIT_UNSETTLED
    } else {
        EXIT_OK
    })
}

/// Writes `text` to `dir/name` plus a `run.json` of `echo`, or prints it.
fn emit(out: Option<&Path>, name: &str, text: &str, echo: Json) -> Result<(), Failure> {
    match out {
        Some(dir) => {
            prepare_dir(dir)?;
            write_json(&dir.join("run.json"), &echo)?;
            write_text(&dir.join(name), text)
        }
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_check(a: &CheckArgs) -> Outcome {
    let echo_base = || {
        json!({
            "subcommand": "check",
            "mu": a.mu, "k": a.k, "f": a.f,
            "f_limit_neg": a.f_limit_neg, "f_limit_pos": a.f_limit_pos,
            "terms": a.terms,
        })
    };
    if let Some(mu) = a.mu {
        if !mu.is_finite() {
            return Err(Failure::usage("mu must be finite"));
        }
        let k = is_resonant(mu);
        let bound = resolvent_norm_bound(mu, a.terms).ok();
        let out = json!({ "resonant": k.is_some(), "k": k, "norm_bound": bound });
        emit(a.out.as_deref(), "check.json", &json_text(&out), echo_base())?;
        return Ok(EXIT_OK);
    }
    let Some(k) = a.k else {
        return Err(Failure::usage("check needs --mu, or --k with --f"));
    };
    let text = a.f.as_deref().unwrap_or_default();
    let mut f = ScalarFunction::parse(text).map_err(|e| Failure::usage(format!("--f: {e}")))?;
    if let (Some(neg), Some(pos)) = (a.f_limit_neg, a.f_limit_pos) {
        f = f.with_limits(Limits::new(neg, pos));
    }
    let ctx = ResonantContext::build(k, k.max(1)).map_err(|e| Failure::usage(e.to_string()))?;
    let (verdict, message) = match f.limits_at_infinity() {
        Ok(limits) => match solvability_from_limits(&ctx, limits) {
            Ok(v) => (Some(v), None),
            Err(e) => (None, Some(e.to_string())),
        },
        Err(e) => (None, Some(e.to_string())),
    };
    let out = json!({
        "k": k,
        "J1": verdict.map(|v| v.j1),
        "J2": verdict.map(|v| v.j2),
        "verdict": verdict.map_or(json!("not_established"), |v| json!(v.case)),
        "sign_integral_pos": ctx.sign_integral_pos,
        "message": message,
    });
    emit(a.out.as_deref(), "check.json", &json_text(&out), echo_base())?;
    Ok(if verdict.is_some_and(|v| v.is_established()) {
        EXIT_OK
    } else {
        EXIT_UNSETTLED
    })
}

fn run_basis(a: &BasisArgs) -> Outcome {
    let echo = json!({
        "subcommand": "basis", "poly": a.poly, "samples": a.samples, "rule": a.rule,
    });
    let mut text = String::new();
    match (a.poly, a.samples, a.rule) {
        (Some(k), Some(m), None) => {
            text.push_str("t,P_k(t)\n");
            for t in uniform_points(m) {
                let _ = writeln!(text, "{},{}", fmt_real(t), fmt_real(eval_legendre(k, t)));
            }
        }
        (None, None, Some(n)) => {
            let rule = QuadratureRule::gauss(n).map_err(|e| Failure::usage(e.to_string()))?;
            text.push_str("node,weight\n");
            for (x, w) in rule.nodes().iter().zip(rule.weights()) {
                let _ = writeln!(text, "{},{}", fmt_real(*x), fmt_real(*w));
            }
        }
        _ => return Err(Failure::usage("basis needs --poly K --samples M, or --rule N")),
    }
    emit(a.out.as_deref(), "basis.csv", &text, echo)?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct VerifyOutput<'a> {
    verdict: Verdict,
    residual_coeff: f64,
    kernel_integral: Option<f64>,
    converged: bool,
    cross_check: &'a CrossCheck,
}

fn run_verify(a: &VerifyArgs) -> Outcome {
    let cfg = SolveConfig::from_raw(load_config(&a.config)?, "verify")?;
    let problem = cfg.problem()?;
    let text = fs::read_to_string(&a.solution)
        .map_err(|e| Failure::usage(format!("cannot read {}: {e}", a.solution.display())))?;
    let x = read_coefficients(&text)
        .map_err(|m| Failure::usage(format!("{}: {m}", a.solution.display())))?;
    if let Regime::Resonant { k } = problem.regime {
        if k > x.degree() {
            return Err(Failure::usage(format!(
                "solution degree {} below resonant index {k}",
                x.degree()
            )));
        }
    }
    let report = assess(&problem, &x, &cfg.solver).map_err(|e| Failure {
        code: EXIT_UNSETTLED,
        message: e.to_string(),
    })?;
    let cc = cross_check(&report, &problem, &cfg.solver, &cfg.oracle);
    let out = VerifyOutput {
        verdict: cc.verdict,
        residual_coeff: report.residual_coeff,
        kernel_integral: report.kernel_integral,
        converged: report.converged,
        cross_check: &cc,
    };
    let mut echo = cfg.to_json("verify");
    echo["solution"] = json!(a.solution.display().to_string());
    emit(a.out.as_deref(), "verify.json", &json_text(&out), echo)?;
    eprintln!("verify {}: {}", a.solution.display(), cc.verdict.as_str());
    Ok(if cc.verdict == Verdict::Pass {
        EXIT_OK
    } else {
        EXIT_UNSETTLED
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_format_has_17_digits() {
        assert_eq!(fmt_real(1.0), "1.0000000000000000e0");
        assert_eq!(fmt_real(-0.1), "-1.0000000000000001e-1");
        let v = 0.1f64 + 0.2;
        assert_eq!(fmt_real(v).parse::<f64>().unwrap(), v);
    }

    #[test]
    fn coefficient_csv_round_trip() {
        let x = LegendreSeries::new(vec![1.0, -0.25, 1e-300, 0.1 + 0.2]);
        assert_eq!(read_coefficients(&coefficients_csv(&x)).unwrap(), x);
        assert!(read_coefficients("c,k\n0,1\n").is_err());
        assert!(read_coefficients("k,c_k\n0,abc\n").is_err());
        let sparse = read_coefficients("k,c_k\n2,1.5\n").unwrap();
        assert_eq!(sparse.coeffs(), &[0.0, 0.0, 1.5]);
    }

    #[test]
    fn branch_file_names() {
        assert_eq!(branch_file_name(0.1), "branch_eps_1e-1.csv");
        assert_eq!(branch_file_name(0.0), "branch_eps_0e0.csv");
        assert_eq!(branch_file_name(2.5e-3), "branch_eps_2.5e-3.csv");
    }

    #[test]
    fn exit_code_ranking() {
        assert_eq!(worse(EXIT_OK, EXIT_UNSETTLED), EXIT_UNSETTLED);
        assert_eq!(worse(EXIT_USAGE, EXIT_UNSETTLED), EXIT_USAGE);
        assert_eq!(worse(EXIT_OK, EXIT_OK), EXIT_OK);
    }

    #[test]
    fn usage_errors_exit_1() {
        assert_eq!(run(["legendre-bvp", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["legendre-bvp", "check"]), EXIT_USAGE);
        assert_eq!(run(["legendre-bvp", "basis", "--poly", "2"]), EXIT_USAGE);
        assert_eq!(run(["legendre-bvp", "solve", "--config", "/nonexistent/x.cfg"]), EXIT_USAGE);
    }
}
