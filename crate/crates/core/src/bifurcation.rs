//! The weakly nonlinear problem `Lx = ε f(x)` at resonance `μ = k(k+1)`.
//!
//! Solutions for small `ε` emanate from `x̄ = α₀ P_k` whenever `α₀` is a
//! simple zero of the bifurcation function
//!
//! ```text
//! H(α) = ∫_{-1}^{1} P_k(t) f(α P_k(t)) dt.
//! ```
//!
//! [`continue_branch`] follows such a branch over a grid of `ε` values
//! with a Newton corrector in the split coordinates `(v, α)`,
//! `x = α P_k + v`, `v ⊥ P_k`.

use serde::Serialize;
use thiserror::Error;

use crate::basis::{eval_legendre, BasisError, LegendreSeries, QuadratureRule, SpectralGrid};
use crate::expr::{EvalError, NonlinearOperator, ScalarFunction};
use crate::resolvent::eigenvalue;
use crate::solver::{projected_jacobian, residual_on, solve_dense, SolverError, SolverOptions};

/// `|H'(α₀)|` at or below this is not a simple root.
pub const SIMPLE_ROOT_TOL: f64 = 1e-8;
/// Bisection target for `|H|`.
const ROOT_TOL: f64 = 1e-12;
const LINE_SEARCH_HALVINGS: usize = 12;
/// Sample count for distances to `x̄`.
const DISTANCE_POINTS: usize = 401;

pub const DEFAULT_ROOT_INTERVAL: (f64, f64) = (-20.0, 20.0);
pub const DEFAULT_ROOT_GRID: usize = 400;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BifurcationError {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error("alpha0 = {alpha0} is not a simple root: |H'(alpha0)| = {dh:e}")]
    NotSimple { alpha0: f64, dh: f64 },
    #[error("invalid epsilon grid: {0}")]
    InvalidGrid(String),
}

/// Gauss rule for `H` and `H'`; at least 64 points and enough to
/// resolve `P_k` itself.
fn h_rule(k: usize) -> Result<QuadratureRule, BasisError> {
    QuadratureRule::gauss(64.max(2 * k + 32))
}

/// `H` and `H'` for a fixed `k` with a shared quadrature rule.
#[derive(Debug, Clone)]
pub struct BifurcationFunction<'a> {
    f: &'a ScalarFunction,
    k: usize,
    rule: QuadratureRule,
    /// `P_k` at the rule's nodes.
    pk: Vec<f64>,
}

impl<'a> BifurcationFunction<'a> {
    pub fn new(f: &'a ScalarFunction, k: usize) -> Result<Self, BasisError> {
        let rule = h_rule(k)?;
        let pk = rule.nodes().iter().map(|&t| eval_legendre(k, t)).collect();
        Ok(Self { f, k, rule, pk })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn h(&self, alpha: f64) -> Result<f64, EvalError> {
        let mut sum = 0.0;
        for (w, p) in self.rule.weights().iter().zip(&self.pk) {
            sum += w * p * self.f.eval(alpha * p)?;
        }
        Ok(sum)
    }

    /// `∫ P_k² f'(α P_k) dt`, the action of `H'(α)` on `β = 1`.
    pub fn dh(&self, alpha: f64) -> Result<f64, EvalError> {
        let mut sum = 0.0;
        for (w, p) in self.rule.weights().iter().zip(&self.pk) {
            sum += w * p * p * self.f.eval_with_deriv(alpha * p)?.1;
        }
        Ok(sum)
    }

    /// Simple zeros of `H` on `[a, b]` as `(α₀, H'(α₀))`, increasing in
    /// `α₀`. Sign changes on a uniform grid of `grid` cells are bisected
    /// and polished by Newton; zeros with `|H'| ≤ 1e-8` are dropped.
    pub fn simple_roots(&self, a: f64, b: f64, grid: usize) -> Result<Vec<(f64, f64)>, EvalError> {
        if !(a < b) || grid < 2 {
            return Ok(Vec::new());
        }
        let alphas: Vec<f64> = (0..=grid)
            .map(|i| if i == grid { b } else { a + (b - a) * i as f64 / grid as f64 })
            .collect();
        let values: Vec<f64> = alphas.iter().map(|&x| self.h(x)).collect::<Result<_, _>>()?;

        let mut roots = Vec::new();
        for i in 0..alphas.len() {
            if values[i] == 0.0 {
                roots.push(alphas[i]);
            }
            if i + 1 < alphas.len() && values[i] * values[i + 1] < 0.0 {
                roots.push(self.bisect(alphas[i], alphas[i + 1], values[i])?);
            }
        }

        let mut out: Vec<(f64, f64)> = Vec::new();
        for r in roots {
            let r = self.polish(r)?;
            let dh = self.dh(r)?;
            if dh.abs() <= SIMPLE_ROOT_TOL || !r.is_finite() {
                continue;
            }
            if out.last().is_some_and(|&(prev, _)| r <= prev) {
                continue;
            }
            out.push((r, dh));
        }
        Ok(out)
    }

    fn bisect(&self, mut lo: f64, mut hi: f64, mut h_lo: f64) -> Result<f64, EvalError> {
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                return Ok(mid);
            }
            let h_mid = self.h(mid)?;
            if h_mid.abs() <= ROOT_TOL {
                return Ok(mid);
            }
            if h_mid * h_lo < 0.0 {
                hi = mid;
            } else {
                lo = mid;
                h_lo = h_mid;
            }
        }
    }

    /// A few Newton steps, kept only while they decrease `|H|`.
    fn polish(&self, mut alpha: f64) -> Result<f64, EvalError> {
        let mut h = self.h(alpha)?;
        for _ in 0..8 {
            let dh = self.dh(alpha)?;
            if dh == 0.0 || h == 0.0 {
                break;
            }
            let next = alpha - h / dh;
            let h_next = self.h(next)?;
            if h_next.abs() >= h.abs() {
                break;
            }
            alpha = next;
            h = h_next;
        }
        Ok(alpha)
    }
}

pub fn bifurcation_h(f: &ScalarFunction, k: usize, alpha: f64) -> Result<f64, BifurcationError> {
    Ok(BifurcationFunction::new(f, k)?.h(alpha)?)
}

pub fn bifurcation_dh(f: &ScalarFunction, k: usize, alpha: f64) -> Result<f64, BifurcationError> {
    Ok(BifurcationFunction::new(f, k)?.dh(alpha)?)
}

pub fn find_simple_roots(
    f: &ScalarFunction,
    k: usize,
    interval: (f64, f64),
    grid: usize,
) -> Result<Vec<(f64, f64)>, BifurcationError> {
    Ok(BifurcationFunction::new(f, k)?.simple_roots(interval.0, interval.1, grid)?)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchPoint {
    pub epsilon: f64,
    pub x: LegendreSeries,
    /// Coefficient of `P_k` in `x`.
    pub alpha: f64,
    /// `‖x - α₀ P_k‖_∞` on 401 uniform points.
    pub sup_distance_to_xbar: f64,
    pub residual_coeff: f64,
    pub residual_grid: f64,
    pub newton_iters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BranchReport {
    pub alpha0: f64,
    pub k: usize,
    /// Accepted points ordered by `ε`; always contains `ε = 0`.
    pub points: Vec<BranchPoint>,
    /// Median slope of `log ‖x_ε - x̄‖` against `log |ε|` between
    /// successive points; `None` when fewer than two distances are
    /// nonzero (for instance on an exact constant branch).
    pub convergence_rate_estimate: Option<f64>,
    /// Whether the distance to `x̄` grows with `|ε|` along each side.
    pub monotone: bool,
    /// The first `ε` at which the corrector failed, if any; the branch
    /// is truncated there on that side.
    pub truncated_at: Option<f64>,
}

/// Newton corrector for one `ε` on `v - ε M E Π f(x) = 0`,
/// `(Π f(x))_k = 0`.
struct Corrector<'a> {
    grid: &'a SpectralGrid,
    f: &'a ScalarFunction,
    k: usize,
    symbols: Vec<f64>,
    tol: f64,
    max_steps: usize,
}

impl Corrector<'_> {
    fn equations(&self, c: &[f64], eps: f64) -> Result<Vec<f64>, EvalError> {
        let p = NonlinearOperator::new(self.f, self.grid).project_composition(c)?;
        Ok((0..c.len())
            .map(|l| {
                if l == self.k {
                    p[l] / (self.k as f64 + 0.5)
                } else {
                    c[l] - eps * p[l] / self.symbols[l]
                }
            })
            .collect())
    }

    /// Returns the step count on convergence.
    fn solve(&self, c: &mut Vec<f64>, eps: f64) -> Result<Option<usize>, EvalError> {
        let mut r = self.equations(c, eps)?;
        let mut norm = sup(&r);
        let mut steps = 0;
        while norm > self.tol {
            if steps >= self.max_steps {
                return Ok(None);
            }
            let mut jac = projected_jacobian(self.grid, self.f, c)?;
            let n = c.len();
            let half = self.k as f64 + 0.5;
            for l in 0..n {
                for j in 0..n {
                    let d = jac[(l, j)];
                    jac[(l, j)] = if l == self.k {
                        d / half
                    } else {
                        f64::from(u8::from(l == j)) - eps * d / self.symbols[l]
                    };
                }
            }
            let Some(delta) = solve_dense(jac, &r) else {
                return Ok(None);
            };
            let mut lambda = 1.0;
            let mut accepted = None;
            for _ in 0..=LINE_SEARCH_HALVINGS {
                let trial: Vec<f64> = c.iter().zip(&delta).map(|(x, d)| x - lambda * d).collect();
                if let Ok(rt) = self.equations(&trial, eps) {
                    let nt = sup(&rt);
                    if nt < norm {
                        accepted = Some((trial, rt, nt));
                        break;
                    }
                }
                lambda *= 0.5;
            }
            steps += 1;
            let Some((trial, rt, nt)) = accepted else {
                return Ok(None);
            };
            *c = trial;
            r = rt;
            norm = nt;
        }
        Ok(Some(steps))
    }
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Continues the branch through `x̄ = α₀ P_k` over `eps_grid`.
///
/// Points are visited in order of increasing `|ε|` on each side of zero,
/// each predicted by the previous accepted point on that side. A failed
/// corrector truncates that side of the branch without failing the call.
pub fn continue_branch(
    f: &ScalarFunction,
    k: usize,
    alpha0: f64,
    eps_grid: &[f64],
    opts: &SolverOptions,
) -> Result<BranchReport, BifurcationError> {
    opts.validate()?;
    if eps_grid.iter().any(|e| !e.is_finite()) {
        return Err(BifurcationError::InvalidGrid("non-finite epsilon".into()));
    }
    let dh = bifurcation_dh(f, k, alpha0)?;
    if dh.abs() <= SIMPLE_ROOT_TOL {
        return Err(BifurcationError::NotSimple { alpha0, dh });
    }
    let grid = SpectralGrid::new(opts.degree, opts.effective_quad_order())?;
    if k > opts.degree {
        return Err(BifurcationError::InvalidGrid(format!(
            "resonant index {k} beyond truncation degree {}",
            opts.degree
        )));
    }
    let mu = eigenvalue(k);
    let corrector = Corrector {
        grid: &grid,
        f,
        k,
        symbols: (0..=opts.degree).map(|l| mu - eigenvalue(l)).collect(),
        tol: opts.tol,
        max_steps: opts.max_iters,
    };
    let xbar = LegendreSeries::monomial(k, opts.degree, alpha0);

    let point = |eps: f64, c: Vec<f64>, iters: usize| -> Result<BranchPoint, BifurcationError> {
        let (residual_coeff, residual_grid) = residual_on(&grid, &c, mu, f, eps)?;
        let x = LegendreSeries::new(c);
        Ok(BranchPoint {
            epsilon: eps,
            alpha: x.coeff(k),
            sup_distance_to_xbar: x.sup_distance(&xbar, DISTANCE_POINTS),
            x,
            residual_coeff,
            residual_grid,
            newton_iters: iters,
        })
    };

    let mut positive: Vec<f64> = eps_grid.iter().copied().filter(|&e| e > 0.0).collect();
    let mut negative: Vec<f64> = eps_grid.iter().copied().filter(|&e| e < 0.0).collect();
    positive.sort_by(f64::total_cmp);
    positive.dedup();
    negative.sort_by(|a, b| b.total_cmp(a));
    negative.dedup();

    let mut truncated_at = None;
    let mut sides: Vec<Vec<BranchPoint>> = Vec::new();
    for side in [&negative, &positive] {
        let mut accepted = Vec::new();
        let mut c = xbar.coeffs().to_vec();
        for &eps in side {
            let mut trial = c.clone();
            match corrector.solve(&mut trial, eps)? {
                Some(iters) => {
                    c = trial.clone();
                    accepted.push(point(eps, trial, iters)?);
                }
                None => {
                    // the smaller |ε| is the more informative truncation
                    if truncated_at.is_none_or(|t: f64| eps.abs() < t.abs()) {
                        truncated_at = Some(eps);
                    }
                    break;
                }
            }
        }
        sides.push(accepted);
    }

    let origin = point(0.0, xbar.coeffs().to_vec(), 0)?;
    let monotone = sides.iter().all(|s| {
        std::iter::once(&origin)
            .chain(s)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[1].sup_distance_to_xbar >= w[0].sup_distance_to_xbar)
    });

    let mut slopes = Vec::new();
    for s in &sides {
        for w in s.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if a.sup_distance_to_xbar > 0.0 && b.sup_distance_to_xbar > 0.0 {
                slopes.push(
                    (b.sup_distance_to_xbar / a.sup_distance_to_xbar).ln()
                        / (b.epsilon / a.epsilon).ln(),
                );
            }
        }
    }

    let [neg, pos]: [Vec<BranchPoint>; 2] = sides.try_into().expect("two sides");
    let mut points: Vec<BranchPoint> = neg.into_iter().rev().collect();
    points.push(origin);
    points.extend(pos);

    Ok(BranchReport {
        alpha0,
        k,
        points,
        convergence_rate_estimate: median(&mut slopes),
        monotone,
        truncated_at,
    })
}

fn median(v: &mut [f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    })
}

/// `n` logarithmically spaced values from `eps_max` down by decades
/// to `eps_min`, largest first.
pub fn log_grid(eps_max: f64, eps_min: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![eps_max],
        _ => {
            // base-10 exponents so that decades come out exact
            let (a, b) = (eps_max.log10(), eps_min.log10());
            (0..n)
                .map(|i| {
                    if i == 0 {
                        eps_max
                    } else if i == n - 1 {
                        eps_min
                    } else {
                        10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)
                    }
                })
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn f(text: &str) -> ScalarFunction {
        ScalarFunction::parse(text).unwrap()
    }

    #[test]
    fn h_examples() {
        let g = f("s^3 - s");
        for alpha in [-2.0, -0.3, 0.0, 0.9, 3.0] {
            let exact = 0.4 * alpha * alpha * alpha - 2.0 / 3.0 * alpha;
            assert!((bifurcation_h(&g, 1, alpha).unwrap() - exact).abs() < 1e-13);
            let dexact = 1.2 * alpha * alpha - 2.0 / 3.0;
            assert!((bifurcation_dh(&g, 1, alpha).unwrap() - dexact).abs() < 1e-13);
        }
        let even = f("cos(s) + s^2");
        for alpha in [-1.5, 0.4, 7.0] {
            assert!(bifurcation_h(&even, 1, alpha).unwrap().abs() < 1e-14);
        }
    }

    #[test]
    fn k0_is_twice_f() {
        let g = f("tanh(s) - 0.3*s");
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..20 {
            let a: f64 = rng.gen_range(-10.0..10.0);
            assert!((bifurcation_h(&g, 0, a).unwrap() - 2.0 * g.eval(a).unwrap()).abs() < 1e-12);
            let d = g.eval_with_deriv(a).unwrap().1;
            assert!((bifurcation_dh(&g, 0, a).unwrap() - 2.0 * d).abs() < 1e-12);
        }
    }

    #[test]
    fn dh_matches_central_difference() {
        let g = f("tanh(s)");
        let h = 1e-6;
        let fd = (bifurcation_h(&g, 2, 0.7 + h).unwrap() - bifurcation_h(&g, 2, 0.7 - h).unwrap())
            / (2.0 * h);
        let dh = bifurcation_dh(&g, 2, 0.7).unwrap();
        assert!(((fd - dh) / dh).abs() < 1e-5);
    }

    #[test]
    fn root_examples() {
        let roots = find_simple_roots(&f("s - 1"), 0, (-5.0, 5.0), 400).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0].0 - 1.0).abs() < 1e-12 && (roots[0].1 - 2.0).abs() < 1e-12);

        let roots = find_simple_roots(&f("s^3 - s"), 1, (0.5, 5.0), 400).unwrap();
        assert_eq!(roots.len(), 1);
        assert!((roots[0].0 - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert!((roots[0].1 - 4.0 / 3.0).abs() < 1e-12);

        // both signs and zero, in increasing order
        let roots = find_simple_roots(&f("s^3 - s"), 1, (-5.0, 5.0), 401).unwrap();
        assert_eq!(roots.len(), 3);
        assert!(roots.windows(2).all(|w| w[0].0 < w[1].0));

        assert!(find_simple_roots(&f("cos(s)"), 1, (-5.0, 5.0), 400).unwrap().is_empty());
        assert!(find_simple_roots(&f("s"), 0, (1.0, 0.0), 10).unwrap().is_empty());
    }

    #[test]
    fn double_root_is_not_simple() {
        // H = 2 s² has a double root at 0
        assert!(find_simple_roots(&f("s^2"), 0, (-1.0, 1.0), 11).unwrap().is_empty());
        let err = continue_branch(&f("s^2"), 0, 0.0, &[0.1], &SolverOptions::default());
        assert!(matches!(err, Err(BifurcationError::NotSimple { .. })));
    }

    #[test]
    fn exact_constant_branch() {
        let opts = SolverOptions::default().with_degree(16);
        let rep = continue_branch(&f("s - 1"), 0, 1.0, &[0.5, 0.1, 0.01, -0.2], &opts).unwrap();
        assert_eq!(rep.points.len(), 5);
        assert!(rep.points.windows(2).all(|w| w[0].epsilon < w[1].epsilon));
        for p in &rep.points {
            assert!(p.x.coeff_distance(&LegendreSeries::constant(1.0, 16)) < 1e-12);
        }
        assert_eq!(rep.convergence_rate_estimate, None);
        assert!(rep.truncated_at.is_none());
    }

    #[test]
    fn origin_point_is_exact() {
        let a0 = (5.0f64 / 3.0).sqrt();
        let rep = continue_branch(&f("s^3 - s"), 1, a0, &[0.0], &SolverOptions::default()).unwrap();
        assert_eq!(rep.points.len(), 1);
        let p = &rep.points[0];
        assert_eq!(p.newton_iters, 0);
        assert_eq!(p.x, LegendreSeries::monomial(1, 64, a0));
    }

    #[test]
    fn cubic_branch_is_linear_in_eps() {
        let a0 = (5.0f64 / 3.0).sqrt();
        let eps: Vec<f64> = (0..11).map(|i| 0.1 / 2f64.powi(i)).collect();
        let opts = SolverOptions::default().with_degree(32);
        let rep = continue_branch(&f("s^3 - s"), 1, a0, &eps, &opts).unwrap();
        assert!(rep.truncated_at.is_none());
        assert_eq!(rep.points.len(), eps.len() + 1);
        assert!(rep.monotone);
        let slope = rep.convergence_rate_estimate.unwrap();
        assert!(slope > 0.9 && slope < 1.1, "{slope}");
        // ‖x_ε - x̄‖ / ε settles down across halvings
        let ratios: Vec<f64> = rep.points[1..]
            .iter()
            .map(|p| p.sup_distance_to_xbar / p.epsilon)
            .collect();
        for w in ratios.windows(2) {
            assert!((w[0] / w[1] - 1.0).abs() < 0.25);
        }
        for p in &rep.points {
            assert!(p.residual_coeff <= 1e-10 && p.residual_grid < 1e-8);
        }
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid(0.1, 1e-4, 4);
        assert_eq!(g[0], 0.1);
        assert_eq!(g[3], 1e-4);
        assert_eq!(g[1], 0.01);
        assert_eq!(log_grid(0.1, 1e-4, 13)[4], 1e-2);
        assert_eq!(log_grid(0.1, 1e-4, 1), vec![0.1]);
    }

    #[test]
    fn random_dh_against_finite_differences() {
        let family = ["tanh(s)", "atan(s)", "s^3 - s", "sin(s) + 0.1*s", "exp(-s^2)"];
        let mut rng = rand::rngs::StdRng::seed_from_u64(11);
        let h = 1e-6;
        for _ in 0..50 {
            let g = f(family[rng.gen_range(0..family.len())]);
            let k = rng.gen_range(0..5);
            let a: f64 = rng.gen_range(-3.0..3.0);
            let bf = BifurcationFunction::new(&g, k).unwrap();
            let fd = (bf.h(a + h).unwrap() - bf.h(a - h).unwrap()) / (2.0 * h);
            let dh = bf.dh(a).unwrap();
            assert!((fd - dh).abs() <= 1e-5 * dh.abs().max(1e-3), "{k} {a} {fd} {dh}");
        }
    }
}
