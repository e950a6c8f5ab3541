//! Checks that do not share code paths with the solvers.
//!
//! The residual oracle evaluates `[(1-t²)x']'` pointwise from the
//! derivative recurrences instead of the diagonal action of `L` on
//! coefficients, on a finer Gauss grid than any solver uses.

use serde::Serialize;

use crate::basis::{LegendreSeries, QuadratureRule};
use crate::expr::{EvalError, ScalarFunction};
use crate::solver::{Problem, SolutionReport, SolverOptions};

/// Tail ratios at or below this count as well resolved.
pub const WELL_RESOLVED: f64 = 1e-6;
/// Refined and original solutions must agree this closely (sup-norm).
pub const REFINEMENT_TOL: f64 = 1e-7;
const COMPARE_POINTS: usize = 401;
/// Independent rule for moment checks such as `∫ t f(α t) dt`.
const MOMENT_ORDER: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleConfig {
    /// Fine grid size; `None` means `4N + 32` for a degree-`N` series.
    pub fine_quad_order: Option<usize>,
    pub fd_step: f64,
    pub refinement_factor: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            fine_quad_order: None,
            fd_step: 1e-6,
            refinement_factor: 2,
        }
    }
}

impl OracleConfig {
    pub fn fine_order(&self, degree: usize) -> usize {
        self.fine_quad_order.unwrap_or(4 * degree + 32)
    }
}

/// `x(t)` and `[(1-t²)x'(t)]'` at one point.
///
/// With `q_k = (1-t²)P_k' = k(P_{k-1} - t P_k)` the operator part is
/// `Σ c_k q_k'`, `q_k' = k(P_{k-1}' - P_k - t P_k')`, and the `P_k'`
/// follow from `P_{k+1}' = P_{k-1}' + (2k+1) P_k`.
pub fn eval_with_operator(x: &LegendreSeries, t: f64) -> (f64, f64) {
    let c = x.coeffs();
    let (mut p_prev, mut p) = (0.0, 1.0);
    let (mut d_prev, mut d) = (0.0, 0.0);
    let (mut value, mut op) = (0.0, 0.0);
    for (k, &ck) in c.iter().enumerate() {
        let kf = k as f64;
        value += ck * p;
        if k > 0 {
            op += ck * kf * (d_prev - p - t * d);
        }
        let p_next = ((2.0 * kf + 1.0) * t * p - kf * p_prev) / (kf + 1.0);
        let d_next = d_prev + (2.0 * kf + 1.0) * p;
        p_prev = p;
        p = p_next;
        d_prev = d;
        d = d_next;
    }
    (value, op)
}

/// `sup_i |[(1-t²)x']' + μx - ε f(x)|` over the nodes of the fine grid.
pub fn oracle_residual(
    x: &LegendreSeries,
    mu: f64,
    f: &ScalarFunction,
    eps_scale: f64,
    cfg: &OracleConfig,
) -> Result<f64, EvalError> {
    let rule = QuadratureRule::gauss(cfg.fine_order(x.degree()))
        .expect("fine grid order is positive");
    let mut worst = 0.0f64;
    for &t in rule.nodes() {
        let (v, op) = eval_with_operator(x, t);
        let r = op + mu * v - eps_scale * f.eval(v)?;
        worst = worst.max(r.abs());
    }
    Ok(worst)
}

/// Largest coefficient over the top quarter of indices relative to the
/// largest overall.
pub fn decay_diagnostic(x: &LegendreSeries) -> f64 {
    let c = x.coeffs();
    let overall = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if overall == 0.0 {
        return 0.0;
    }
    let tail = c[3 * x.degree() / 4..]
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    tail / overall
}

pub fn is_well_resolved(x: &LegendreSeries) -> bool {
    decay_diagnostic(x) <= WELL_RESOLVED
}

/// `∫ P_k(t) f(α P_k(t)) dt` on a 256-point rule with `P_k` from the
/// explicit recurrence; an independent path to the bifurcation function.
pub fn kernel_moment(f: &ScalarFunction, k: usize, alpha: f64) -> Result<f64, EvalError> {
    let rule = QuadratureRule::gauss(MOMENT_ORDER).expect("positive order");
    let mut sum = 0.0;
    for (&t, &w) in rule.nodes().iter().zip(rule.weights()) {
        let pk = LegendreSeries::monomial(k, k, 1.0).eval(t);
        sum += w * pk * f.eval(alpha * pk)?;
    }
    Ok(sum)
}

/// Central difference of [`kernel_moment`] in `α` with step `cfg.fd_step`.
pub fn kernel_moment_slope(
    f: &ScalarFunction,
    k: usize,
    alpha: f64,
    cfg: &OracleConfig,
) -> Result<f64, EvalError> {
    let h = cfg.fd_step;
    Ok((kernel_moment(f, k, alpha + h)? - kernel_moment(f, k, alpha - h)?) / (2.0 * h))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::Inconclusive => "inconclusive",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CrossCheck {
    pub verdict: Verdict,
    pub degree: usize,
    pub refined_degree: usize,
    /// Sup-norm distance to the refined solution on 401 points.
    pub refined_difference: Option<f64>,
    pub oracle_residual: Option<f64>,
    pub decay: f64,
    pub reason: Option<String>,
}

/// Re-solves `problem` at `refinement_factor · N` from the reported
/// solution and compares. Passes when the solutions agree to `1e-7` and
/// the oracle residual is below `100 · tol`.
pub fn cross_check(
    report: &SolutionReport,
    problem: &Problem,
    opts: &SolverOptions,
    cfg: &OracleConfig,
) -> CrossCheck {
    let degree = report.x.degree();
    let refined_degree = cfg.refinement_factor.max(1) * degree;
    let decay = decay_diagnostic(&report.x);
    let mut out = CrossCheck {
        verdict: Verdict::Inconclusive,
        degree,
        refined_degree,
        refined_difference: None,
        oracle_residual: None,
        decay,
        reason: None,
    };
    let residual = match oracle_residual(&report.x, problem.mu(), &problem.f, 1.0, cfg) {
        Ok(r) => r,
        Err(e) => {
            out.reason = Some(format!("oracle evaluation failed: {e}"));
            return out;
        }
    };
    out.oracle_residual = Some(residual);
    if !report.converged {
        out.reason = Some("reported solution did not converge".into());
        return out;
    }

    let refined_opts = SolverOptions {
        degree: refined_degree,
        quad_order: opts.quad_order.map(|q| q * cfg.refinement_factor.max(1)),
        x0: Some(report.x.coeffs().to_vec()),
        ..opts.clone()
    };
    let refined = match problem.solve(&refined_opts) {
        Ok(r) if r.converged => r,
        Ok(_) => {
            out.reason = Some(format!("re-solve at N = {refined_degree} did not converge"));
            return out;
        }
        Err(e) => {
            out.reason = Some(format!("re-solve at N = {refined_degree} failed: {e}"));
            return out;
        }
    };
    let diff = report.x.sup_distance(&refined.x, COMPARE_POINTS);
    out.refined_difference = Some(diff);
    let pass = diff < REFINEMENT_TOL && residual < 100.0 * opts.tol;
    out.verdict = if pass { Verdict::Pass } else { Verdict::Fail };
    if !pass {
        out.reason = Some(if diff >= REFINEMENT_TOL {
            format!("refinement changed the solution by {diff:e}")
        } else {
            format!("oracle residual {residual:e} above {:e}", 100.0 * opts.tol)
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::eval_legendre;
    use crate::resolvent::eigenvalue;
    use crate::solver::solve_nonresonant;

    fn f(text: &str) -> ScalarFunction {
        ScalarFunction::parse(text).unwrap()
    }

    #[test]
    fn operator_on_eigenfunctions() {
        for k in 0..=10 {
            let x = LegendreSeries::monomial(k, k, 1.0);
            let rule = QuadratureRule::gauss(4 * k + 32).unwrap();
            for &t in rule.nodes() {
                let (v, op) = eval_with_operator(&x, t);
                assert!((v - eval_legendre(k, t)).abs() < 1e-13);
                assert!((op + eigenvalue(k) * v).abs() < 1e-9, "k = {k}");
            }
        }
    }

    #[test]
    fn operator_matches_closed_form() {
        // x = t³: (1-t²)·3t² differentiates to 6t - 12t³
        let x = LegendreSeries::new(vec![0.0, 0.6, 0.0, 0.4]);
        for t in [-0.9, -0.2, 0.0, 0.5, 0.77] {
            let (v, op) = eval_with_operator(&x, t);
            assert!((v - t * t * t).abs() < 1e-15);
            assert!((op - (6.0 * t - 12.0 * t * t * t)).abs() < 1e-13);
        }
    }

    #[test]
    fn residual_examples() {
        let cfg = OracleConfig::default();
        let p3 = LegendreSeries::monomial(3, 3, 1.0);
        assert!(oracle_residual(&p3, 12.0, &f("0"), 1.0, &cfg).unwrap() < 1e-9);
        let one = LegendreSeries::constant(1.0, 8);
        assert!(oracle_residual(&one, 1.0, &f("1"), 1.0, &cfg).unwrap() < 1e-12);

        let g = f("cos(s)");
        let rep = solve_nonresonant(&g, 1.0, &SolverOptions::default()).unwrap();
        assert!(oracle_residual(&rep.x, 1.0, &g, 1.0, &cfg).unwrap() < 1e-8);
    }

    #[test]
    fn decay_examples() {
        assert_eq!(decay_diagnostic(&LegendreSeries::monomial(2, 64, 1.0)), 0.0);
        let geometric = LegendreSeries::new((0..=64).map(|k| 0.5f64.powi(k)).collect());
        assert_eq!(decay_diagnostic(&geometric), 0.5f64.powi(48));
        assert!(is_well_resolved(&geometric));
        let flat = LegendreSeries::new(vec![1.0; 65]);
        assert_eq!(decay_diagnostic(&flat), 1.0);
        assert!(!is_well_resolved(&flat));
    }

    #[test]
    fn moment_matches_closed_form() {
        let g = f("s^3 - s");
        let a0 = (5.0f64 / 3.0).sqrt();
        assert!(kernel_moment(&g, 1, a0).unwrap().abs() < 1e-14);
        let slope = kernel_moment_slope(&g, 1, a0, &OracleConfig::default()).unwrap();
        assert!((slope - 4.0 / 3.0).abs() < 1e-8);
    }

    #[test]
    fn cross_check_cosine() {
        let problem = Problem::with_mu(1.0, f("cos(s)"));
        let opts = SolverOptions::default();
        let rep = problem.solve(&opts).unwrap();
        let cc = cross_check(&rep, &problem, &opts, &OracleConfig::default());
        assert_eq!(cc.verdict, Verdict::Pass, "{cc:?}");
        assert_eq!(cc.refined_degree, 128);
    }

    #[test]
    fn cross_check_constant_solution() {
        let problem = Problem::with_mu(1.0, f("1"));
        let opts = SolverOptions::default().with_degree(8);
        let rep = problem.solve(&opts).unwrap();
        let cc = cross_check(&rep, &problem, &opts, &OracleConfig::default());
        assert_eq!(cc.verdict, Verdict::Pass);
        assert!(cc.refined_difference.unwrap() < 1e-15);
    }

    #[test]
    fn cross_check_catches_under_resolution() {
        // Lx = 0.1 (x³ - x) at k = 1 has a non-polynomial solution near
        // √(5/3) P_1, which four modes cannot represent
        let problem = Problem::resonant(1, f("0.1*(s^3 - s)"));
        let opts = SolverOptions {
            override_solvability: true,
            ..SolverOptions::default()
                .with_degree(4)
                .with_x0(vec![0.0, (5.0f64 / 3.0).sqrt()])
        };
        let rep = problem.solve(&opts).unwrap();
        assert!(rep.converged);
        let cc = cross_check(&rep, &problem, &opts, &OracleConfig::default());
        assert_ne!(cc.verdict, Verdict::Pass, "{cc:?}");
    }

    #[test]
    fn unconverged_report_is_inconclusive() {
        let problem = Problem::with_mu(1.0, f("cos(s)"));
        let opts = SolverOptions {
            max_iters: 2,
            mode: crate::solver::Mode::Picard,
            ..SolverOptions::default()
        };
        let rep = problem.solve(&opts).unwrap();
        let cc = cross_check(&rep, &problem, &opts, &OracleConfig::default());
        assert_eq!(cc.verdict, Verdict::Inconclusive);
    }
}
