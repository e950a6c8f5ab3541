//! Nonlinear solves of `Lx = f(x)` in a truncated Legendre basis.
//!
//! Away from resonance the workhorse is the damped Picard map
//! `x ← (1-λ)x + λ L⁻¹ f(x)`. At resonance `μ = k(k+1)` it is the
//! fixed-point map on pairs `(x, α)`,
//!
//! ```text
//! x ← α P_k + M E f(x),    α ← α - σ ∫ f(x) P_k dt,
//! ```
//!
//! where `σ = sign J₁` orients the scalar update so that it contracts.
//! Both can be finished (or replaced) by Newton on the Galerkin system
//! `(μ - l(l+1)) x_l - (Π f(x))_l = 0`, `Π` the pseudospectral projection.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::{BasisError, LegendreSeries, SpectralGrid};
use crate::expr::{EvalError, LimitError, NonlinearOperator, ScalarFunction};
use crate::lyapunov_schmidt::{
    solvability_from_limits, LsError, ResonantContext, SolvabilityVerdict,
};
use crate::resolvent::{eigenvalue, is_resonant, ResolventError};

/// Picard hands over to Newton in `auto` mode below this residual.
const AUTO_HANDOFF: f64 = 1e-6;
/// Pivot magnitude, relative to the largest, below which the Newton
/// Jacobian counts as singular.
const SINGULAR_PIVOT: f64 = 1e-13;
const LINE_SEARCH_HALVINGS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Picard,
    Newton,
    Auto,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "picard" => Ok(Mode::Picard),
            "newton" => Ok(Mode::Newton),
            "auto" => Ok(Mode::Auto),
            other => Err(format!("unknown mode `{other}` (picard, newton, auto)")),
        }
    }
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Picard => "picard",
            Mode::Newton => "newton",
            Mode::Auto => "auto",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    /// Truncation degree `N`.
    pub degree: usize,
    /// Quadrature points for nonlinear terms; `None` means `2N + 16`.
    pub quad_order: Option<usize>,
    pub damping: f64,
    /// Target for the coefficient residual.
    pub tol: f64,
    pub max_iters: usize,
    pub mode: Mode,
    /// Initial coefficients; zero when absent.
    pub x0: Option<Vec<f64>>,
    /// Solve at resonance even when the solvability test is silent.
    pub override_solvability: bool,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            degree: 64,
            quad_order: None,
            damping: 0.5,
            tol: 1e-10,
            max_iters: 500,
            mode: Mode::Auto,
            x0: None,
            override_solvability: false,
        }
    }
}

impl SolverOptions {
    pub fn with_degree(mut self, degree: usize) -> Self {
        self.degree = degree;
        self
    }

    pub fn with_mode(mut self, mode: Mode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_x0(mut self, x0: Vec<f64>) -> Self {
        self.x0 = Some(x0);
        self
    }

    pub fn effective_quad_order(&self) -> usize {
        self.quad_order.unwrap_or(2 * self.degree + 16)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: String| Err(SolverError::InvalidOptions(m));
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.effective_quad_order() < self.degree + 1 {
            return bad(format!(
                "quad_order {} below truncation degree {} + 1",
                self.effective_quad_order(),
                self.degree
            ));
        }
        if let Some(x0) = &self.x0 {
            if x0.iter().any(|c| !c.is_finite()) {
                return bad("x0 has non-finite entries".into());
            }
        }
        Ok(())
    }

    fn initial_coeffs(&self) -> Vec<f64> {
        let mut c = self.x0.clone().unwrap_or_default();
        c.resize(self.degree + 1, 0.0);
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    NonResonant { mu: f64 },
    Resonant { k: usize },
}

impl Regime {
    pub fn mu(&self) -> f64 {
        match *self {
            Regime::NonResonant { mu } => mu,
            Regime::Resonant { k } => eigenvalue(k),
        }
    }
}

/// `Lx = f(x)` for a given `μ` (or resonant index) and nonlinearity.
#[derive(Debug, Clone)]
pub struct Problem {
    pub regime: Regime,
    pub f: ScalarFunction,
}

impl Problem {
    /// Classifies `mu`; values within the resonance tolerance of `k(k+1)`
    /// become resonant problems.
    pub fn with_mu(mu: f64, f: ScalarFunction) -> Self {
        let regime = match is_resonant(mu) {
            Some(k) => Regime::Resonant { k },
            None => Regime::NonResonant { mu },
        };
        Self { regime, f }
    }

    pub fn resonant(k: usize, f: ScalarFunction) -> Self {
        Self {
            regime: Regime::Resonant { k },
            f,
        }
    }

    pub fn mu(&self) -> f64 {
        self.regime.mu()
    }

    pub fn solve(&self, opts: &SolverOptions) -> Result<SolutionReport, SolverError> {
        match self.regime {
            Regime::NonResonant { mu } => solve_nonresonant(&self.f, mu, opts),
            Regime::Resonant { k } => solve_resonant(&self.f, k, opts),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolverError {
    #[error(transparent)]
    Resolvent(#[from] ResolventError),
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Resonant(#[from] LsError),
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("resonant solve refused: {reason}")]
    Refused {
        reason: String,
        verdict: Option<SolvabilityVerdict>,
    },
    #[error("box not located numerically: {0}")]
    BoxNotLocated(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolutionReport {
    pub x: LegendreSeries,
    pub mu: f64,
    /// Coefficient of `P_k` (resonant solves only).
    pub alpha: Option<f64>,
    /// `∫ f(x) P_k dt` at the final iterate (resonant solves only).
    pub kernel_integral: Option<f64>,
    pub residual_coeff: f64,
    pub residual_grid: f64,
    pub iterations: usize,
    pub picard_iterations: usize,
    pub newton_iterations: usize,
    pub converged: bool,
    pub coefficient_decay: f64,
    pub verdict: Option<SolvabilityVerdict>,
}

/// Pseudospectral state shared by the iterations of one solve.
struct Galerkin<'a> {
    grid: &'a SpectralGrid,
    f: &'a ScalarFunction,
    /// Diagonal of `L`: `μ - l(l+1)`.
    symbols: Vec<f64>,
    tol: f64,
}

struct Evaluated {
    /// `Π f(x)`
    projected: Vec<f64>,
    /// `Lx - Π f(x)`
    residual: Vec<f64>,
    norm: f64,
}

impl<'a> Galerkin<'a> {
    fn new(grid: &'a SpectralGrid, f: &'a ScalarFunction, mu: f64, tol: f64) -> Self {
        let symbols = (0..=grid.degree()).map(|l| mu - eigenvalue(l)).collect();
        Self {
            grid,
            f,
            symbols,
            tol,
        }
    }

    fn evaluate(&self, c: &[f64]) -> Result<Evaluated, EvalError> {
        let projected = NonlinearOperator::new(self.f, self.grid).project_composition(c)?;
        let residual: Vec<f64> = self
            .symbols
            .iter()
            .zip(c)
            .zip(&projected)
            .map(|((s, x), p)| s * x - p)
            .collect();
        let norm = sup(&residual);
        Ok(Evaluated {
            projected,
            residual,
            norm,
        })
    }

    /// `diag(μ - l(l+1)) - Π diag(f'(x)) S`.
    fn jacobian(&self, c: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let mut jac = projected_jacobian(self.grid, self.f, c)?;
        jac.neg_mut();
        for (l, s) in self.symbols.iter().enumerate() {
            jac[(l, l)] += s;
        }
        Ok(jac)
    }

    /// Newton with backtracking on the coefficient residual. Stops at
    /// `max_steps`, when the residual is below tolerance after at least
    /// `min_steps` steps, or when the Jacobian is singular.
    fn newton(
        &self,
        c: &mut Vec<f64>,
        min_steps: usize,
        max_steps: usize,
    ) -> Result<NewtonOutcome, EvalError> {
        let mut eval = self.evaluate(c)?;
        let mut steps = 0;
        loop {
            if eval.norm <= self.tol && steps >= min_steps {
                return Ok(NewtonOutcome::Converged { steps });
            }
            if steps >= max_steps {
                return Ok(NewtonOutcome::Exhausted { steps });
            }
            let jac = self.jacobian(c)?;
            let Some(delta) = solve_dense(jac, &eval.residual) else {
                return Ok(if eval.norm <= self.tol {
                    NewtonOutcome::Converged { steps }
                } else {
                    NewtonOutcome::Singular { steps }
                });
            };
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..=LINE_SEARCH_HALVINGS {
                let trial: Vec<f64> = c.iter().zip(&delta).map(|(x, d)| x - lambda * d).collect();
                if let Ok(e) = self.evaluate(&trial) {
                    // equal is accepted so that a polish step at the
                    // rounding floor does not count as failure
                    if e.norm <= eval.norm {
                        accepted = Some((trial, e));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            steps += 1;
            match accepted {
                Some((trial, e)) => {
                    *c = trial;
                    eval = e;
                }
                None => {
                    return Ok(if eval.norm <= self.tol {
                        NewtonOutcome::Converged { steps }
                    } else {
                        NewtonOutcome::Stalled { steps }
                    })
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum NewtonOutcome {
    Converged { steps: usize },
    Exhausted { steps: usize },
    Stalled { steps: usize },
    Singular { steps: usize },
}

impl NewtonOutcome {
    fn steps(self) -> usize {
        match self {
            NewtonOutcome::Converged { steps }
            | NewtonOutcome::Exhausted { steps }
            | NewtonOutcome::Stalled { steps }
            | NewtonOutcome::Singular { steps } => steps,
        }
    }
}

/// Derivative of `c ↦ Π f(Σ c_j P_j)`: entries
/// `(l + 1/2) Σ_i w_i P_l(t_i) f'(x(t_i)) P_j(t_i)`.
pub(crate) fn projected_jacobian(
    grid: &SpectralGrid,
    f: &ScalarFunction,
    c: &[f64],
) -> Result<DMatrix<f64>, EvalError> {
    let n = grid.degree() + 1;
    let nodal = grid.synthesize(c);
    let (_, fprime) = NonlinearOperator::new(f, grid).apply_with_deriv(&nodal)?;
    let weighted: Vec<f64> = fprime
        .iter()
        .zip(grid.rule().weights())
        .map(|(d, w)| d * w)
        .collect();
    let mut jac = DMatrix::zeros(n, n);
    for l in 0..n {
        let scaled: Vec<f64> = grid.row(l).iter().zip(&weighted).map(|(p, d)| p * d).collect();
        for j in l..n {
            let s: f64 = scaled.iter().zip(grid.row(j)).map(|(a, b)| a * b).sum();
            jac[(l, j)] = (l as f64 + 0.5) * s;
            jac[(j, l)] = (j as f64 + 0.5) * s;
        }
    }
    Ok(jac)
}

/// LU with partial pivoting; `None` when a pivot is negligible.
pub(crate) fn solve_dense(jac: DMatrix<f64>, rhs: &[f64]) -> Option<Vec<f64>> {
    let lu = jac.lu();
    let u = lu.u();
    let biggest = u.diagonal().iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if biggest == 0.0 || u.diagonal().iter().any(|d| d.abs() < SINGULAR_PIVOT * biggest) {
        return None;
    }
    let sol = lu.solve(&DVector::from_column_slice(rhs))?;
    sol.iter().all(|v| v.is_finite()).then(|| sol.iter().copied().collect())
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Coefficient and grid residuals of `[(1-t²)x']' + μx = f(x)`.
///
/// The coefficient residual is the sup-norm of `Lx - Π f(x)`; the grid
/// residual synthesizes `Lx` and compares with `f(x)` at the quadrature
/// nodes of a rule with `quad_order` points.
pub fn residual(
    x: &LegendreSeries,
    mu: f64,
    f: &ScalarFunction,
    quad_order: usize,
) -> Result<(f64, f64), SolverError> {
    let grid = SpectralGrid::new(x.degree(), quad_order)?;
    residual_on(&grid, x.coeffs(), mu, f, 1.0)
}

/// Residuals of `Lx = ε f(x)` on a prepared grid.
pub(crate) fn residual_on(
    grid: &SpectralGrid,
    coeffs: &[f64],
    mu: f64,
    f: &ScalarFunction,
    eps: f64,
) -> Result<(f64, f64), SolverError> {
    let lx: Vec<f64> = coeffs
        .iter()
        .enumerate()
        .map(|(l, c)| (mu - eigenvalue(l)) * c)
        .collect();
    let fx = NonlinearOperator::new(f, grid).apply(&grid.synthesize(coeffs))?;
    let pf = grid.project(&fx);
    let coeff = lx
        .iter()
        .zip(&pf)
        .fold(0.0f64, |m, (a, b)| m.max((a - eps * b).abs()));
    let lx_nodal = grid.synthesize(&lx);
    let nodal = lx_nodal
        .iter()
        .zip(&fx)
        .fold(0.0f64, |m, (a, b)| m.max((a - eps * b).abs()));
    Ok((coeff, nodal))
}

struct Progress {
    picard: usize,
    newton: usize,
}

fn finish(
    grid: &SpectralGrid,
    f: &ScalarFunction,
    mu: f64,
    c: Vec<f64>,
    resonant_k: Option<usize>,
    progress: Progress,
    tol: f64,
    verdict: Option<SolvabilityVerdict>,
) -> Result<SolutionReport, SolverError> {
    let (residual_coeff, residual_grid) = residual_on(grid, &c, mu, f, 1.0)?;
    let x = LegendreSeries::new(c);
    let (alpha, kernel_integral) = match resonant_k {
        Some(k) => {
            let pf = NonlinearOperator::new(f, grid).project_composition(x.coeffs())?;
            (Some(x.coeff(k)), Some(pf[k] / (k as f64 + 0.5)))
        }
        None => (None, None),
    };
    let converged = residual_coeff <= tol && kernel_integral.is_none_or(|v| v.abs() <= tol);
    Ok(SolutionReport {
        coefficient_decay: x.tail_ratio(),
        x,
        mu,
        alpha,
        kernel_integral,
        residual_coeff,
        residual_grid,
        iterations: progress.picard + progress.newton,
        picard_iterations: progress.picard,
        newton_iterations: progress.newton,
        converged,
        verdict,
    })
}

/// Report for given coefficients without iterating: residuals, kernel
/// integral and convergence flag as a solve ending at `x` would give.
pub fn assess(
    problem: &Problem,
    x: &LegendreSeries,
    opts: &SolverOptions,
) -> Result<SolutionReport, SolverError> {
    let order = opts.quad_order.unwrap_or(2 * x.degree() + 16);
    let grid = SpectralGrid::new(x.degree(), order)?;
    let k = match problem.regime {
        Regime::Resonant { k } => Some(k),
        Regime::NonResonant { .. } => None,
    };
    let progress = Progress {
        picard: 0,
        newton: 0,
    };
    finish(&grid, &problem.f, problem.mu(), x.coeffs().to_vec(), k, progress, opts.tol, None)
}

/// One damped fixed-point step, in place. Returns `None` without touching
/// the iterate when its residual is already at or below `target`.
type PicardStep<'s> = dyn FnMut(&mut [f64], f64, f64) -> Result<Option<f64>, EvalError> + 's;

/// Runs Picard steps until `target` is met or the budget is spent.
fn run_picard(
    step: &mut PicardStep<'_>,
    c: &mut [f64],
    target: f64,
    damping: f64,
    budget: &mut usize,
    count: &mut usize,
) -> Result<bool, EvalError> {
    while *budget > 0 {
        match step(c, damping, target)? {
            None => return Ok(true),
            Some(norm) if !norm.is_finite() => return Ok(false),
            Some(_) => {
                *budget -= 1;
                *count += 1;
            }
        }
    }
    Ok(false)
}

/// Drives a Picard map and the Newton polish according to `opts.mode`.
fn drive(
    galerkin: &Galerkin<'_>,
    c: &mut Vec<f64>,
    opts: &SolverOptions,
    step: &mut PicardStep<'_>,
) -> Result<Progress, EvalError> {
    let mut progress = Progress {
        picard: 0,
        newton: 0,
    };
    let mut damping = opts.damping;
    let mut budget = opts.max_iters;
    let handoff = AUTO_HANDOFF.max(opts.tol);

    if opts.mode == Mode::Picard {
        run_picard(step, c, opts.tol, damping, &mut budget, &mut progress.picard)?;
        return Ok(progress);
    }
    if opts.mode == Mode::Auto {
        let start = c.clone();
        run_picard(step, c, handoff, damping, &mut budget, &mut progress.picard)?;
        if c.iter().any(|v| !v.is_finite()) {
            *c = start;
        }
    }
    loop {
        let outcome = galerkin.newton(c, 1, budget.max(1))?;
        progress.newton += outcome.steps();
        budget = budget.saturating_sub(outcome.steps());
        match outcome {
            NewtonOutcome::Singular { .. } | NewtonOutcome::Stalled { .. } if budget > 0 => {
                damping *= 0.5;
                let before = progress.picard;
                let reached =
                    run_picard(step, c, handoff, damping, &mut budget, &mut progress.picard)?;
                if !reached || progress.picard == before {
                    break;
                }
            }
            _ => break,
        }
    }
    Ok(progress)
}

/// Non-resonant solve: damped Picard on `x = L⁻¹ f(x)` from `x₀`,
/// optionally finished by Newton–Galerkin.
pub fn solve_nonresonant(
    f: &ScalarFunction,
    mu: f64,
    opts: &SolverOptions,
) -> Result<SolutionReport, SolverError> {
    opts.validate()?;
    if let Some(k) = is_resonant(mu) {
        return Err(ResolventError::Resonant { mu, k }.into());
    }
    let grid = SpectralGrid::new(opts.degree, opts.effective_quad_order())?;
    let galerkin = Galerkin::new(&grid, f, mu, opts.tol);
    let mut c = opts.initial_coeffs();

    let mut step = |c: &mut [f64], damping: f64, target: f64| -> Result<Option<f64>, EvalError> {
        let e = galerkin.evaluate(c)?;
        if e.norm <= target {
            return Ok(None);
        }
        for ((x, p), s) in c.iter_mut().zip(&e.projected).zip(&galerkin.symbols) {
            *x = (1.0 - damping) * *x + damping * p / s;
        }
        Ok(Some(e.norm))
    };
    let progress = drive(&galerkin, &mut c, opts, &mut step)?;
    finish(&grid, f, mu, c, None, progress, opts.tol, None)
}

/// Resonant solve at `μ = k(k+1)` through the fixed-point map on
/// `(x, α)`; the iterate always has `P_k` coefficient exactly `α`.
///
/// Refuses unless `f(±∞)` are established and the solvability test
/// succeeds, or `override_solvability` is set.
pub fn solve_resonant(
    f: &ScalarFunction,
    k: usize,
    opts: &SolverOptions,
) -> Result<SolutionReport, SolverError> {
    opts.validate()?;
    let ctx = ResonantContext::build(k, opts.degree)?;
    let verdict = match f.limits_at_infinity() {
        Ok(limits) => match solvability_from_limits(&ctx, limits) {
            Ok(v) => Some(v),
            Err(LsError::InfiniteLimit(_)) => None,
            Err(e) => return Err(e.into()),
        },
        Err(LimitError::NotEstablished { .. }) => None,
    };
    if !opts.override_solvability {
        match verdict {
            None => {
                return Err(SolverError::Refused {
                    reason: "limits of f at infinity not established".into(),
                    verdict: None,
                })
            }
            Some(v) if !v.is_established() => {
                return Err(SolverError::Refused {
                    reason: "solvability conditions not established".into(),
                    verdict: Some(v),
                })
            }
            _ => {}
        }
    }
    let orientation = match verdict {
        Some(v) if v.j1 < 0.0 => -1.0,
        _ => 1.0,
    };

    let mu = ctx.mu;
    let grid = SpectralGrid::new(opts.degree, opts.effective_quad_order())?;
    let galerkin = Galerkin::new(&grid, f, mu, opts.tol);
    let mut c = opts.initial_coeffs();
    let half = k as f64 + 0.5;

    let mut step = |c: &mut [f64], damping: f64, target: f64| -> Result<Option<f64>, EvalError> {
        let e = galerkin.evaluate(c)?;
        let kernel = e.projected[k] / half;
        let norm = e.norm.max(kernel.abs());
        if norm <= target {
            return Ok(None);
        }
        let alpha = c[k] - damping * orientation * kernel;
        for (l, x) in c.iter_mut().enumerate() {
            if l != k {
                // w(x) = M E Π f(x), damped against the current E x
                let w = e.projected[l] / galerkin.symbols[l];
                *x = (1.0 - damping) * *x + damping * w;
            }
        }
        c[k] = alpha;
        Ok(Some(norm))
    };
    let progress = drive(&galerkin, &mut c, opts, &mut step)?;
    finish(&grid, f, mu, c, Some(k), progress, opts.tol, verdict)
}

/// Quantities describing the invariant box of the resonant existence
/// argument: `r ≈ sup|f|`, a threshold `α₀ > r` past which the kernel
/// integral has the sign of `J₁` (and of `J₂` at `-α₀`), and `δ = α₀ + r`.
/// The bound `b₁` on `‖x‖` is not realized numerically.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Theorem2Box {
    pub r: f64,
    pub alpha0: f64,
    pub delta: f64,
}

const BOX_ALPHA_MAX: f64 = 1e6;

pub fn theorem2_box(
    f: &ScalarFunction,
    ctx: &ResonantContext,
) -> Result<Theorem2Box, SolverError> {
    let limits = f.limits_at_infinity().map_err(LsError::from)?;
    let verdict = solvability_from_limits(ctx, limits)?;
    if !verdict.is_established() || verdict.j1 * verdict.j2 >= 0.0 {
        return Err(SolverError::Refused {
            reason: "J1 and J2 do not have opposite signs".into(),
            verdict: Some(verdict),
        });
    }
    let r = f.sup_abs_estimate().map_err(LsError::from)?;
    let zero = LegendreSeries::zeros(0);
    let settled = |alpha: f64| -> Result<bool, SolverError> {
        let up = ctx.kernel_integral(f, alpha, &zero)?;
        let down = ctx.kernel_integral(f, -alpha, &zero)?;
        Ok(up * verdict.j1.signum() > 0.0 && down * verdict.j2.signum() > 0.0)
    };

    let mut grid = vec![r + 1.0];
    while let Some(&last) = grid.last() {
        if last * 2.0 > BOX_ALPHA_MAX {
            break;
        }
        grid.push(last * 2.0);
    }
    let flags: Vec<bool> = grid.iter().map(|&a| settled(a)).collect::<Result<_, _>>()?;
    // first grid index from which the sign is settled for good
    let Some(first) = (0..flags.len()).find(|&i| flags[i..].iter().all(|&b| b)) else {
        return Err(SolverError::BoxNotLocated(format!(
            "kernel integral sign unsettled up to alpha = {}",
            grid.last().copied().unwrap_or(r + 1.0)
        )));
    };
    let alpha0 = if first == 0 {
        grid[0]
    } else {
        let (mut lo, mut hi) = (grid[first - 1], grid[first]);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if settled(mid)? {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        hi
    };
    Ok(Theorem2Box {
        r,
        alpha0,
        delta: alpha0 + r,
    })
}
