//! Splitting at resonance `μ = k(k+1)`.
//!
//! `U` keeps the `P_k` component (the kernel of `L`), `E = I - U` keeps
//! the rest, and `M` inverts `L` on the range of `E`. The constants `J₁`,
//! `J₂` are the limits of `∫ f(αP_k + w) P_k dt` as `α → ±∞`; their signs
//! decide whether the resonant problem is guaranteed a solution.

use serde::Serialize;
use thiserror::Error;

use crate::basis::{eval_legendre, legendre_roots, BasisError, LegendreSeries, QuadratureRule};
use crate::expr::{EvalError, LimitError, Limits, ScalarFunction};
use crate::resolvent::eigenvalue;

/// Largest `|h_k|` still accepted as lying in the range of `L`.
pub const RANGE_TOL: f64 = 1e-10;
const ROOT_TOL: f64 = 1e-13;
const REGION_RULE_ORDER: usize = 32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LsError {
    #[error(transparent)]
    Basis(#[from] BasisError),
    #[error(transparent)]
    Limit(#[from] LimitError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("limits of f at infinity are not finite: {0:?}")]
    InfiniteLimit(Limits),
    #[error("resonant index {k} exceeds truncation degree {degree}")]
    IndexBeyondTruncation { k: usize, degree: usize },
    #[error("right-hand side not in Im(L): coefficient {k} is {coeff:e}")]
    NotInRange { k: usize, coeff: f64 },
    #[error("J constants disagree with the k >= 1 closed form: J1 = {j1}, expected {expected}")]
    Inconsistent { j1: f64, expected: f64 },
}

fn check_index(x: &LegendreSeries, k: usize) -> Result<(), LsError> {
    if k > x.degree() {
        return Err(LsError::IndexBeyondTruncation {
            k,
            degree: x.degree(),
        });
    }
    Ok(())
}

/// `Ux = (k + 1/2)⟨x, P_k⟩ P_k`, i.e. only coefficient `k` survives.
pub fn project_u(x: &LegendreSeries, k: usize) -> Result<LegendreSeries, LsError> {
    check_index(x, k)?;
    Ok(LegendreSeries::monomial(k, x.degree(), x.coeff(k)))
}

/// `Ex = x - Ux`.
pub fn project_e(x: &LegendreSeries, k: usize) -> Result<LegendreSeries, LsError> {
    check_index(x, k)?;
    let mut out = x.clone();
    out.coeffs_mut()[k] = 0.0;
    Ok(out)
}

/// Partial inverse of `L` at `μ = k(k+1)`: divides coefficient `l ≠ k` by
/// `μ - l(l+1)` and leaves coefficient `k` at zero.
pub fn apply_m(h: &LegendreSeries, k: usize) -> Result<LegendreSeries, LsError> {
    check_index(h, k)?;
    let hk = h.coeff(k);
    if hk.abs() > RANGE_TOL {
        return Err(LsError::NotInRange { k, coeff: hk });
    }
    let mu = eigenvalue(k);
    Ok(LegendreSeries::new(
        h.coeffs()
            .iter()
            .enumerate()
            .map(|(l, c)| if l == k { 0.0 } else { c / (mu - eigenvalue(l)) })
            .collect(),
    ))
}

/// `M E` in one step, for right-hand sides that need not lie in `Im(L)`.
pub fn apply_me(h: &LegendreSeries, k: usize) -> Result<LegendreSeries, LsError> {
    apply_m(&project_e(h, k)?, k)
}

/// Interval between consecutive roots of `P_k` on which `P_k` keeps one sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SignRegion {
    pub a: f64,
    pub b: f64,
    pub sign: i8,
}

/// Everything about the resonant index `k` that the resonant solver and
/// the solvability test reuse.
#[derive(Debug, Clone, Serialize)]
pub struct ResonantContext {
    pub k: usize,
    pub mu: f64,
    pub degree: usize,
    /// `∫_{P_k > 0} P_k dt`
    pub sign_integral_pos: f64,
    /// `∫_{P_k < 0} P_k dt`
    pub sign_integral_neg: f64,
    pub roots: Vec<f64>,
    pub regions: Vec<SignRegion>,
    #[serde(skip)]
    rule: QuadratureRule,
}

impl ResonantContext {
    pub fn build(k: usize, degree: usize) -> Result<Self, LsError> {
        if k > degree {
            return Err(LsError::IndexBeyondTruncation { k, degree });
        }
        let roots = legendre_roots(k, ROOT_TOL)?;
        let rule = QuadratureRule::gauss(REGION_RULE_ORDER)?;
        let mut edges = Vec::with_capacity(k + 2);
        edges.push(-1.0);
        edges.extend_from_slice(&roots);
        edges.push(1.0);
        let regions: Vec<SignRegion> = edges
            .windows(2)
            .map(|w| {
                let mid = eval_legendre(k, 0.5 * (w[0] + w[1]));
                SignRegion {
                    a: w[0],
                    b: w[1],
                    sign: if mid > 0.0 { 1 } else { -1 },
                }
            })
            .collect();
        let mut pos = 0.0;
        let mut neg = 0.0;
        for r in &regions {
            let v = rule.integrate_on(r.a, r.b, |t| eval_legendre(k, t));
            if r.sign > 0 {
                pos += v;
            } else {
                neg += v;
            }
        }
        Ok(Self {
            k,
            mu: eigenvalue(k),
            degree,
            sign_integral_pos: pos,
            sign_integral_neg: neg,
            roots,
            regions,
            rule,
        })
    }

    /// `∫_{-1}^{1} g(t) P_k(t) dt` by Gauss rules on each sign region, so
    /// that integrands which jump where `P_k` changes sign stay accurate.
    pub fn integrate_against_pk(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.regions
            .iter()
            .map(|r| {
                self.rule
                    .integrate_on(r.a, r.b, |t| g(t) * eval_legendre(self.k, t))
            })
            .sum()
    }

    /// `∫ f(α P_k(t) + w(t)) P_k(t) dt`.
    pub fn kernel_integral(
        &self,
        f: &ScalarFunction,
        alpha: f64,
        w: &LegendreSeries,
    ) -> Result<f64, EvalError> {
        let mut err = None;
        let v = self.integrate_against_pk(|t| {
            match f.eval(alpha * eval_legendre(self.k, t) + w.eval(t)) {
                Ok(y) => y,
                Err(e) => {
                    err.get_or_insert(e);
                    0.0
                }
            }
        });
        match err {
            Some(e) => Err(e),
            None => Ok(v),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JConstants {
    pub j1: f64,
    pub j2: f64,
}

/// `J₁ = f(∞)∫_{P_k>0}P_k + f(-∞)∫_{P_k<0}P_k`, `J₂` with the limits
/// swapped. For `k ≥ 1` the result is cross-checked against
/// `J₁ = -J₂ = ∫_{P_k>0}P_k · (f(∞) - f(-∞))`.
pub fn j_constants(ctx: &ResonantContext, limits: Limits) -> Result<JConstants, LsError> {
    if !limits.is_finite() {
        return Err(LsError::InfiniteLimit(limits));
    }
    let (pos, neg) = (ctx.sign_integral_pos, ctx.sign_integral_neg);
    let j1 = limits.pos * pos + limits.neg * neg;
    let j2 = limits.pos * neg + limits.neg * pos;
    if ctx.k >= 1 {
        let expected = pos * (limits.pos - limits.neg);
        let tol = 1e-9 * expected.abs().max(1.0);
        if (j1 - expected).abs() > tol || (j2 + expected).abs() > tol {
            return Err(LsError::Inconsistent { j1, expected });
        }
    }
    Ok(JConstants { j1, j2 })
}

pub fn compute_j(ctx: &ResonantContext, f: &ScalarFunction) -> Result<JConstants, LsError> {
    j_constants(ctx, f.limits_at_infinity()?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SolvabilityCase {
    /// `k = 0` and `f(-∞) f(∞) < 0`.
    K0OppositeSigns,
    /// `k ≥ 1` and `f(-∞) ≠ f(∞)`.
    KGe1DistinctLimits,
    /// Neither sufficient condition holds; existence is not decided.
    NotEstablished,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolvabilityVerdict {
    pub case: SolvabilityCase,
    #[serde(rename = "J1")]
    pub j1: f64,
    #[serde(rename = "J2")]
    pub j2: f64,
}

impl SolvabilityVerdict {
    pub fn is_established(&self) -> bool {
        self.case != SolvabilityCase::NotEstablished
    }
}

pub fn solvability_from_limits(
    ctx: &ResonantContext,
    limits: Limits,
) -> Result<SolvabilityVerdict, LsError> {
    let JConstants { j1, j2 } = j_constants(ctx, limits)?;
    let case = if ctx.k == 0 {
        if j1 * j2 < 0.0 {
            SolvabilityCase::K0OppositeSigns
        } else {
            SolvabilityCase::NotEstablished
        }
    } else if limits.pos != limits.neg {
        SolvabilityCase::KGe1DistinctLimits
    } else {
        SolvabilityCase::NotEstablished
    };
    Ok(SolvabilityVerdict { case, j1, j2 })
}

pub fn solvability_check(
    ctx: &ResonantContext,
    f: &ScalarFunction,
) -> Result<SolvabilityVerdict, LsError> {
    solvability_from_limits(ctx, f.limits_at_infinity()?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resolvent::apply_l;
    use rand::{Rng, SeedableRng};
    use std::f64::consts::PI;

    fn f(text: &str) -> ScalarFunction {
        ScalarFunction::parse(text).unwrap()
    }

    #[test]
    fn projection_examples() {
        let k = 2;
        let x = LegendreSeries::new(vec![0.0, 0.0, 3.0, 1.0]);
        assert_eq!(project_u(&x, k).unwrap().coeffs(), &[0.0, 0.0, 3.0, 0.0]);
        let orth = LegendreSeries::new(vec![1.0, 2.0, 0.0, 4.0]);
        assert_eq!(project_u(&orth, k).unwrap().max_abs_coeff(), 0.0);
        let u = project_u(&x, k).unwrap();
        assert_eq!(project_u(&u, k).unwrap(), u);

        let pk = LegendreSeries::monomial(k, 4, 1.0);
        assert_eq!(project_e(&pk, k).unwrap().max_abs_coeff(), 0.0);
        let y = LegendreSeries::new(vec![1.0, 0.0, 1.0]);
        assert_eq!(project_e(&y, k).unwrap().coeffs(), &[1.0, 0.0, 0.0]);
        assert!(project_u(&y, 5).is_err());
    }

    #[test]
    fn partial_inverse_examples() {
        let h = LegendreSeries::constant(1.0, 3);
        let m = apply_m(&h, 1).unwrap();
        assert_eq!(m.coeffs(), &[0.5, 0.0, 0.0, 0.0]);
        assert!(apply_l(&m, 2.0).coeff_distance(&h) < 1e-16);
        let p1 = LegendreSeries::monomial(1, 3, 1.0);
        assert!(matches!(apply_m(&p1, 1), Err(LsError::NotInRange { k: 1, .. })));
        let tiny = LegendreSeries::monomial(1, 3, 1e-11);
        assert!(apply_m(&tiny, 1).is_ok());
    }

    #[test]
    fn range_characterization() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        for _ in 0..100 {
            let k = rng.gen_range(0..6);
            let mut h = LegendreSeries::new((0..10).map(|_| rng.gen_range(-1.0..1.0)).collect());
            let hk: f64 = rng.gen_range(-2e-10..2e-10);
            h.coeffs_mut()[k] = hk;
            assert_eq!(apply_m(&h, k).is_ok(), hk.abs() <= RANGE_TOL);
        }
    }

    #[test]
    fn context_examples() {
        let c0 = ResonantContext::build(0, 4).unwrap();
        assert!((c0.sign_integral_pos - 2.0).abs() < 1e-14);
        assert_eq!(c0.sign_integral_neg, 0.0);
        assert!(c0.roots.is_empty());

        let c1 = ResonantContext::build(1, 4).unwrap();
        assert!((c1.sign_integral_pos - 0.5).abs() < 1e-14);

        // antiderivative of P_2 is (t^3 - t)/2, roots ±1/√3
        let c2 = ResonantContext::build(2, 4).unwrap();
        let anti = |t: f64| (t * t * t - t) / 2.0;
        let r = 1.0 / 3f64.sqrt();
        let pos = 2.0 * (anti(1.0) - anti(r));
        assert!((c2.sign_integral_pos - pos).abs() < 1e-10);
        assert!((pos - 2.0 / (3.0 * 3f64.sqrt())).abs() < 1e-15);
        assert!((c2.sign_integral_neg - (anti(r) - anti(-r))).abs() < 1e-10);

        assert!(ResonantContext::build(3, 2).is_err());
    }

    #[test]
    fn context_invariants_up_to_60() {
        for k in 1..=60 {
            let c = ResonantContext::build(k, k).unwrap();
            assert_eq!(c.roots.len(), k);
            assert!(c.roots.windows(2).all(|w| w[0] < w[1]));
            assert!(c.sign_integral_pos > 0.0);
            assert!((c.sign_integral_pos + c.sign_integral_neg).abs() < 1e-10, "k = {k}");
        }
    }

    #[test]
    fn j_examples() {
        let c0 = ResonantContext::build(0, 4).unwrap();
        let j = compute_j(&c0, &f("tanh(s)")).unwrap();
        // the defining integrals carry the factor ∫P_0 = 2
        assert!((j.j1 - 2.0).abs() < 1e-14 && (j.j2 + 2.0).abs() < 1e-14);

        let c1 = ResonantContext::build(1, 4).unwrap();
        let j = compute_j(&c1, &f("atan(s)")).unwrap();
        assert!((j.j1 - 0.5 * PI).abs() < 1e-6);
        assert!((j.j2 + 0.5 * PI).abs() < 1e-6);

        for k in 1..5 {
            let c = ResonantContext::build(k, 8).unwrap();
            let j = compute_j(&c, &f("1/(1 + s^2) + 2")).unwrap();
            assert_eq!((j.j1.abs() < 1e-12, j.j2.abs() < 1e-12), (true, true));
        }
        assert!(compute_j(&c1, &f("s^3")).is_err());
        let inf = f("s").with_limits(Limits::new(f64::NEG_INFINITY, f64::INFINITY));
        assert!(matches!(compute_j(&c1, &inf), Err(LsError::InfiniteLimit(_))));
    }

    #[test]
    fn verdict_examples() {
        let c0 = ResonantContext::build(0, 4).unwrap();
        let c2 = ResonantContext::build(2, 4).unwrap();
        let v = solvability_check(&c0, &f("tanh(s) - 0.3")).unwrap();
        assert_eq!(v.case, SolvabilityCase::K0OppositeSigns);
        assert_eq!(
            solvability_check(&c2, &f("atan(s)")).unwrap().case,
            SolvabilityCase::KGe1DistinctLimits
        );
        assert_eq!(
            solvability_check(&c0, &f("1/(1+s^2) + 1")).unwrap().case,
            SolvabilityCase::NotEstablished
        );
        assert_eq!(
            solvability_check(&c2, &f("1/(1+s^2) + 1")).unwrap().case,
            SolvabilityCase::NotEstablished
        );
    }

    #[test]
    fn kernel_integral_approaches_j_limits() {
        let g = f("tanh(s)");
        let w = LegendreSeries::new(vec![3.0, -4.0, 2.5, 0.5]);
        assert!((0..400).map(|i| w.eval(-1.0 + i as f64 / 200.0).abs()).fold(0.0, f64::max) <= 10.0);
        for k in 0..3 {
            let ctx = ResonantContext::build(k, 4).unwrap();
            let j = compute_j(&ctx, &g).unwrap();
            let up = ctx.kernel_integral(&g, 1e6, &w).unwrap();
            let down = ctx.kernel_integral(&g, -1e6, &w).unwrap();
            assert!((up - j.j1).abs() < 1e-4, "k = {k}: {up} vs {}", j.j1);
            assert!((down - j.j2).abs() < 1e-4, "k = {k}: {down} vs {}", j.j2);
        }
    }
}
