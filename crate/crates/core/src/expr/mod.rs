//! Scalar nonlinearities `f: ℝ → ℝ` given as text.
//!
//! Expressions are parsed once into an [`Expr`] tree and evaluated with
//! forward-mode dual numbers, so `f'` comes for free wherever the solvers
//! linearize. The behavior of `f` at `±∞` is either declared by the user
//! or estimated by probing at large arguments.

mod parser;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::basis::SpectralGrid;

pub use parser::{parse_expr, BinOp, Expr, Func, ParseError, ParseErrorKind};

/// Value and derivative carried together through evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual {
    pub value: f64,
    pub deriv: f64,
}

impl Dual {
    pub fn new(value: f64, deriv: f64) -> Self {
        Self { value, deriv }
    }

    pub fn constant(value: f64) -> Self {
        Self { value, deriv: 0.0 }
    }

    pub fn variable(value: f64) -> Self {
        Self { value, deriv: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("evaluation of `{node}` failed: {reason}")]
pub struct EvalError {
    pub node: String,
    pub reason: String,
}

/// Result of a dual-number evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub deriv: f64,
    /// Set when `abs` or `sqrt` was hit exactly at 0, where the derivative
    /// is reported as 0.
    pub nondifferentiable: bool,
}

fn domain_error(node: &Expr, reason: impl Into<String>) -> EvalError {
    EvalError {
        node: node.to_string(),
        reason: reason.into(),
    }
}

fn eval_node(e: &Expr, s: Dual, flag: &mut bool) -> Result<Dual, EvalError> {
    let out = match e {
        Expr::Num(x) => Dual::constant(*x),
        Expr::Var => s,
        Expr::Neg(a) => {
            let a = eval_node(a, s, flag)?;
            Dual::new(-a.value, -a.deriv)
        }
        Expr::Binary(op, l, r) => {
            let a = eval_node(l, s, flag)?;
            let b = eval_node(r, s, flag)?;
            match op {
                BinOp::Add => Dual::new(a.value + b.value, a.deriv + b.deriv),
                BinOp::Sub => Dual::new(a.value - b.value, a.deriv - b.deriv),
                BinOp::Mul => Dual::new(a.value * b.value, a.deriv * b.value + a.value * b.deriv),
                BinOp::Div => {
                    if b.value == 0.0 {
                        return Err(domain_error(e, "division by zero"));
                    }
                    let q = a.value / b.value;
                    Dual::new(q, (a.deriv - q * b.deriv) / b.value)
                }
                BinOp::Pow => pow(e, a, b)?,
            }
        }
        Expr::Call(func, arg) => {
            let a = eval_node(arg, s, flag)?;
            let (v, d) = (a.value, a.deriv);
            match func {
                Func::Sin => Dual::new(v.sin(), v.cos() * d),
                Func::Cos => Dual::new(v.cos(), -v.sin() * d),
                Func::Tanh => {
                    let t = v.tanh();
                    Dual::new(t, (1.0 - t * t) * d)
                }
                Func::Atan => Dual::new(v.atan(), d / (1.0 + v * v)),
                Func::Exp => {
                    let x = v.exp();
                    Dual::new(x, x * d)
                }
                Func::Log => {
                    if v <= 0.0 {
                        return Err(domain_error(e, format!("log of non-positive value {v}")));
                    }
                    Dual::new(v.ln(), d / v)
                }
                Func::Abs => {
                    if v == 0.0 {
                        *flag = true;
                        Dual::constant(0.0)
                    } else {
                        Dual::new(v.abs(), v.signum() * d)
                    }
                }
                Func::Sqrt => {
                    if v < 0.0 {
                        return Err(domain_error(e, format!("sqrt of negative value {v}")));
                    }
                    if v == 0.0 {
                        *flag = true;
                        Dual::constant(0.0)
                    } else {
                        let r = v.sqrt();
                        Dual::new(r, d / (2.0 * r))
                    }
                }
            }
        }
    };
    if out.value.is_nan() {
        return Err(domain_error(e, "result is not a number"));
    }
    Ok(out)
}

fn pow(node: &Expr, a: Dual, b: Dual) -> Result<Dual, EvalError> {
    let value = a.value.powf(b.value);
    if value.is_nan() {
        return Err(domain_error(
            node,
            format!("{} raised to non-integer power {}", a.value, b.value),
        ));
    }
    let mut deriv = 0.0;
    if a.deriv != 0.0 {
        deriv += b.value * a.value.powf(b.value - 1.0) * a.deriv;
    }
    if b.deriv != 0.0 {
        if a.value <= 0.0 {
            return Err(domain_error(
                node,
                "variable exponent needs a positive base",
            ));
        }
        deriv += value * a.value.ln() * b.deriv;
    }
    Ok(Dual::new(value, if deriv.is_nan() { 0.0 } else { deriv }))
}

/// The pair `(f(-∞), f(+∞))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Limits {
    pub neg: f64,
    pub pos: f64,
}

impl Limits {
    pub fn new(neg: f64, pos: f64) -> Self {
        Self { neg, pos }
    }

    pub fn is_finite(&self) -> bool {
        self.neg.is_finite() && self.pos.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Negative,
    Positive,
}

impl std::fmt::Display for Side {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Side::Negative => "negative",
            Side::Positive => "positive",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LimitError {
    #[error("limit not established at {side} infinity")]
    NotEstablished { side: Side },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SublinearityVerdict {
    ConsistentWithSublinear,
    Inconsistent,
}

/// Probe points for limit estimation. The outer value is what gets
/// reported; the inner one only has to agree with it.
const LIMIT_PROBES: (f64, f64) = (1e6, 1e9);
const LIMIT_REL_TOL: f64 = 1e-6;
const LIMIT_ABS_TOL: f64 = 1e-9;

/// A parsed nonlinearity together with optional declared limits.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFunction {
    source: String,
    ast: Expr,
    declared_limits: Option<Limits>,
}

impl ScalarFunction {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        Ok(Self {
            source: text.to_string(),
            ast: parse_expr(text)?,
            declared_limits: None,
        })
    }

    pub fn with_limits(mut self, limits: Limits) -> Self {
        self.declared_limits = Some(limits);
        self
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn declared_limits(&self) -> Option<Limits> {
        self.declared_limits
    }

    /// Fully parenthesized rendering of the parsed tree.
    pub fn pretty(&self) -> String {
        self.ast.to_string()
    }

    pub fn eval(&self, s: f64) -> Result<f64, EvalError> {
        let mut flag = false;
        eval_node(&self.ast, Dual::constant(s), &mut flag).map(|d| d.value)
    }

    pub fn eval_with_deriv(&self, s: f64) -> Result<(f64, f64), EvalError> {
        self.eval_dual(s).map(|e| (e.value, e.deriv))
    }

    pub fn eval_dual(&self, s: f64) -> Result<Evaluation, EvalError> {
        let mut flag = false;
        let d = eval_node(&self.ast, Dual::variable(s), &mut flag)?;
        Ok(Evaluation {
            value: d.value,
            deriv: d.deriv,
            nondifferentiable: flag,
        })
    }

    /// `(f(-∞), f(+∞))`: the declaration if present, otherwise the values
    /// at `∓1e9` provided they agree with the values at `∓1e6`.
    pub fn limits_at_infinity(&self) -> Result<Limits, LimitError> {
        if let Some(l) = self.declared_limits {
            return Ok(l);
        }
        let neg = self.estimate_limit(-1.0).ok_or(LimitError::NotEstablished {
            side: Side::Negative,
        })?;
        let pos = self.estimate_limit(1.0).ok_or(LimitError::NotEstablished {
            side: Side::Positive,
        })?;
        Ok(Limits { neg, pos })
    }

    fn estimate_limit(&self, sign: f64) -> Option<f64> {
        let near = self.eval(sign * LIMIT_PROBES.0).ok()?;
        let far = self.eval(sign * LIMIT_PROBES.1).ok()?;
        if !near.is_finite() || !far.is_finite() {
            return None;
        }
        let diff = (far - near).abs();
        let scale = far.abs().max(near.abs());
        let agree = if scale < LIMIT_ABS_TOL {
            diff <= LIMIT_ABS_TOL
        } else {
            diff <= LIMIT_REL_TOL * scale
        };
        agree.then_some(far)
    }

    /// Lower estimate of `sup_ℝ |f|` from a 20001-point grid on
    /// `[-1e9, 1e9]` (0 plus 10000 logarithmically spaced magnitudes per
    /// side) and the two limit magnitudes.
    pub fn sup_abs_estimate(&self) -> Result<f64, LimitError> {
        let limits = self.limits_at_infinity()?;
        let mut sup = limits.neg.abs().max(limits.pos.abs());
        let mut take = |s: f64| {
            if let Ok(v) = self.eval(s) {
                if v.is_finite() {
                    sup = sup.max(v.abs());
                }
            }
        };
        take(0.0);
        const PER_SIDE: usize = 10_000;
        let (lo, hi) = (-9.0f64, 9.0f64);
        for i in 0..PER_SIDE {
            let e = lo + (hi - lo) * i as f64 / (PER_SIDE - 1) as f64;
            let m = 10f64.powf(e);
            take(m);
            take(-m);
        }
        Ok(sup)
    }

    /// Heuristic check of `|f(s)|/|s| → 0`. The ratio (worse of the two
    /// signs) is sampled at `|s| ∈ {1e3, 1e5, 1e7, 1e9}`; it is
    /// consistent with sublinear growth when the last sample is below
    /// `1e-3` and no larger than the first.
    pub fn sublinearity_probe(&self) -> SublinearityVerdict {
        let ratios: Option<Vec<f64>> = [1e3, 1e5, 1e7, 1e9]
            .iter()
            .map(|&m: &f64| {
                let a = self.eval(m).ok()?.abs() / m;
                let b = self.eval(-m).ok()?.abs() / m;
                let r = a.max(b);
                r.is_finite().then_some(r)
            })
            .collect();
        match ratios {
            Some(r) if r[3] < 1e-3 && r[3] <= r[0] => SublinearityVerdict::ConsistentWithSublinear,
            _ => SublinearityVerdict::Inconsistent,
        }
    }
}

/// Pointwise composition `x ↦ f∘x` on the nodes of a spectral grid.
#[derive(Debug, Clone, Copy)]
pub struct NonlinearOperator<'a> {
    f: &'a ScalarFunction,
    grid: &'a SpectralGrid,
}

impl<'a> NonlinearOperator<'a> {
    pub fn new(f: &'a ScalarFunction, grid: &'a SpectralGrid) -> Self {
        Self { f, grid }
    }

    pub fn grid(&self) -> &'a SpectralGrid {
        self.grid
    }

    /// `f(x(t_i))` for nodal values `x(t_i)`.
    pub fn apply(&self, nodal: &[f64]) -> Result<Vec<f64>, EvalError> {
        nodal.iter().map(|&x| self.f.eval(x)).collect()
    }

    /// `(f(x(t_i)), f'(x(t_i)))` for nodal values `x(t_i)`.
    pub fn apply_with_deriv(&self, nodal: &[f64]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
        let mut vals = Vec::with_capacity(nodal.len());
        let mut ders = Vec::with_capacity(nodal.len());
        for &x in nodal {
            let (v, d) = self.f.eval_with_deriv(x)?;
            vals.push(v);
            ders.push(d);
        }
        Ok((vals, ders))
    }

    /// Coefficients of the projection of `f∘x` onto `P_0..P_N`.
    pub fn project_composition(&self, coeffs: &[f64]) -> Result<Vec<f64>, EvalError> {
        let nodal = self.grid.synthesize(coeffs);
        Ok(self.grid.project(&self.apply(&nodal)?))
    }
}
