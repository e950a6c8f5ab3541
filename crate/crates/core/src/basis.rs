//! Legendre polynomials, Gauss–Legendre quadrature and the modal/nodal
//! transforms that every inner product in the solvers goes through.
//!
//! Functions on `[-1, 1]` are stored modally as [`LegendreSeries`]; grid
//! values only exist transiently inside a [`SpectralGrid`].

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Newton steps allowed per quadrature node.
const MAX_NEWTON_STEPS: usize = 100;
/// Convergence threshold on the Newton update for quadrature nodes.
const NODE_TOL: f64 = 1e-14;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BasisError {
    #[error("derivative formula singular at endpoints (t = {0})")]
    SingularAtEndpoint(f64),
    #[error("quadrature order below truncation: order {order} cannot resolve degree {degree}")]
    QuadratureTooCoarse { order: usize, degree: usize },
    #[error("Newton iteration for node {index} of the {n}-point rule did not converge")]
    NodeNotConverged { n: usize, index: usize },
    #[error("quadrature rule needs at least one node")]
    EmptyRule,
    #[error("expected {expected} grid values, got {got}")]
    LengthMismatch { expected: usize, got: usize },
}

/// `P_k(t)` by the three-term recurrence.
pub fn eval_legendre(k: usize, t: f64) -> f64 {
    legendre_pair(k, t).0
}

/// Returns `(P_k(t), P_{k-1}(t))`, with `P_{-1} = 0`.
fn legendre_pair(k: usize, t: f64) -> (f64, f64) {
    let mut prev = 0.0;
    let mut cur = 1.0;
    for j in 0..k {
        let jf = j as f64;
        let next = ((2.0 * jf + 1.0) * t * cur - jf * prev) / (jf + 1.0);
        prev = cur;
        cur = next;
    }
    (cur, prev)
}

/// `P_k'(t)` from `(1 - t^2) P_k'(t) = k (P_{k-1}(t) - t P_k(t))`.
///
/// The identity degenerates at `t = ±1`, which is reported as an error.
pub fn eval_legendre_deriv(k: usize, t: f64) -> Result<f64, BasisError> {
    let one_minus = 1.0 - t * t;
    if one_minus == 0.0 || t.abs() >= 1.0 {
        return Err(BasisError::SingularAtEndpoint(t));
    }
    Ok(deriv_interior(k, t, one_minus))
}

fn deriv_interior(k: usize, t: f64, one_minus: f64) -> f64 {
    let (pk, pkm1) = legendre_pair(k, t);
    k as f64 * (pkm1 - t * pk) / one_minus
}

/// Roots of `P_n` in increasing order, by Newton from Chebyshev-type
/// initial guesses. Stops once the update falls below `tol`.
pub fn legendre_roots(n: usize, tol: f64) -> Result<Vec<f64>, BasisError> {
    let mut roots = vec![0.0; n];
    let half = n.div_ceil(2);
    for i in 1..=half {
        // positive root i (decreasing in i)
        let mut x = (PI * (i as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut converged = false;
        for _ in 0..MAX_NEWTON_STEPS {
            let (p, pm1) = legendre_pair(n, x);
            let dp = n as f64 * (pm1 - x * p) / (1.0 - x * x);
            if dp == 0.0 {
                break;
            }
            let dx = p / dp;
            x -= dx;
            if dx.abs() <= tol {
                converged = true;
                break;
            }
        }
        if !converged {
            return Err(BasisError::NodeNotConverged { n, index: i - 1 });
        }
        // odd n: the middle root is exactly zero
        if 2 * i - 1 == n {
            x = 0.0;
        }
        roots[n - i] = x;
        roots[i - 1] = -x;
    }
    Ok(roots)
}

/// An `n`-point Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    /// Builds the `n`-point Gauss–Legendre rule. Nodes are returned in
    /// increasing order and are exactly antisymmetric about 0.
    pub fn gauss(n: usize) -> Result<Self, BasisError> {
        if n == 0 {
            return Err(BasisError::EmptyRule);
        }
        let nodes = legendre_roots(n, NODE_TOL)?;
        let weights = nodes
            .iter()
            .map(|&x| {
                let one_minus = 1.0 - x * x;
                let dp = deriv_interior(n, x, one_minus);
                2.0 / (one_minus * dp * dp)
            })
            .collect();
        let mut rule = Self { nodes, weights };
        rule.symmetrize_weights();
        Ok(rule)
    }

    fn symmetrize_weights(&mut self) {
        let n = self.weights.len();
        for i in 0..n / 2 {
            let w = 0.5 * (self.weights[i] + self.weights[n - 1 - i]);
            self.weights[i] = w;
            self.weights[n - 1 - i] = w;
        }
    }

    pub fn order(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// `∫_{-1}^{1} g(t) dt` approximated by the rule.
    pub fn integrate(&self, mut g: impl FnMut(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&t, &w)| w * g(t))
            .sum()
    }

    /// `∫_a^b g(t) dt` with the rule mapped affinely onto `[a, b]`.
    pub fn integrate_on(&self, a: f64, b: f64, mut g: impl FnMut(f64) -> f64) -> f64 {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        half * self.integrate(|t| g(mid + half * t))
    }

    /// Discrete `L²` inner product of two sets of nodal values.
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        debug_assert_eq!(a.len(), self.order());
        debug_assert_eq!(b.len(), self.order());
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(w, (x, y))| w * x * y)
            .sum()
    }
}

/// A function `Σ c_k P_k(t)` given by its Legendre coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LegendreSeries {
    coeffs: Vec<f64>,
}

impl LegendreSeries {
    /// Wraps a coefficient vector; an empty vector becomes the zero series
    /// of degree 0.
    pub fn new(mut coeffs: Vec<f64>) -> Self {
        if coeffs.is_empty() {
            coeffs.push(0.0);
        }
        debug_assert!(coeffs.iter().all(|c| c.is_finite()));
        Self { coeffs }
    }

    pub fn zeros(degree: usize) -> Self {
        Self {
            coeffs: vec![0.0; degree + 1],
        }
    }

    /// `scale · P_k`, truncated at `degree` (which must be at least `k`).
    pub fn monomial(k: usize, degree: usize, scale: f64) -> Self {
        let mut s = Self::zeros(degree.max(k));
        s.coeffs[k] = scale;
        s
    }

    pub fn constant(value: f64, degree: usize) -> Self {
        Self::monomial(0, degree, value)
    }

    /// Truncation degree `N`; the series carries `N + 1` coefficients.
    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Coefficient of `P_k`, zero beyond the truncation.
    pub fn coeff(&self, k: usize) -> f64 {
        self.coeffs.get(k).copied().unwrap_or(0.0)
    }

    /// Same function padded with zeros or truncated to `degree`.
    pub fn resized(&self, degree: usize) -> Self {
        let mut coeffs = self.coeffs.clone();
        coeffs.resize(degree + 1, 0.0);
        Self { coeffs }
    }

    /// Clenshaw summation of the series at `t`.
    pub fn eval(&self, t: f64) -> f64 {
        let n = self.degree();
        if n == 0 {
            return self.coeffs[0];
        }
        let mut b1 = 0.0; // b_{k+1}
        let mut b2 = 0.0; // b_{k+2}
        for k in (1..=n).rev() {
            let kf = k as f64;
            let alpha = (2.0 * kf + 1.0) * t / (kf + 1.0);
            let beta = -(kf + 1.0) / (kf + 2.0);
            let b = self.coeffs[k] + alpha * b1 + beta * b2;
            b2 = b1;
            b1 = b;
        }
        self.coeffs[0] + t * b1 - 0.5 * b2
    }

    /// `L²(-1, 1)` inner product computed in coefficient space,
    /// `Σ c_k d_k · 2/(2k+1)`.
    pub fn inner(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .enumerate()
            .map(|(k, (a, b))| a * b * 2.0 / (2.0 * k as f64 + 1.0))
            .sum()
    }

    pub fn max_abs_coeff(&self) -> f64 {
        self.coeffs.iter().fold(0.0, |m, c| m.max(c.abs()))
    }

    /// Largest coefficient magnitude over the top quarter of indices
    /// (`k ≥ 3N/4`) relative to the largest overall. Small values mean the
    /// truncation resolves the function.
    pub fn tail_ratio(&self) -> f64 {
        let overall = self.max_abs_coeff();
        if overall == 0.0 {
            return 0.0;
        }
        let start = 3 * self.degree() / 4;
        let tail = self.coeffs[start..].iter().fold(0.0, |m: f64, c| m.max(c.abs()));
        tail / overall
    }

    /// Coefficient sup-norm of `self - other`, padding the shorter one.
    pub fn coeff_distance(&self, other: &Self) -> f64 {
        let n = self.coeffs.len().max(other.coeffs.len());
        (0..n).fold(0.0, |m, k| m.max((self.coeff(k) - other.coeff(k)).abs()))
    }

    /// Sup-norm of `self - other` sampled on `points` uniform points.
    pub fn sup_distance(&self, other: &Self, points: usize) -> f64 {
        uniform_points(points)
            .into_iter()
            .fold(0.0, |m, t| m.max((self.eval(t) - other.eval(t)).abs()))
    }
}

/// Evaluates the series at each of `points`.
pub fn synthesize(series: &LegendreSeries, points: &[f64]) -> Vec<f64> {
    points.iter().map(|&t| series.eval(t)).collect()
}

/// Legendre coefficients of nodal values `values` sampled on `rule`:
/// `c_k = (k + 1/2) Σ_i w_i P_k(t_i) g(t_i)` for `k ≤ degree`.
pub fn project(
    values: &[f64],
    rule: &QuadratureRule,
    degree: usize,
) -> Result<LegendreSeries, BasisError> {
    if rule.order() < degree + 1 {
        return Err(BasisError::QuadratureTooCoarse {
            order: rule.order(),
            degree,
        });
    }
    if values.len() != rule.order() {
        return Err(BasisError::LengthMismatch {
            expected: rule.order(),
            got: values.len(),
        });
    }
    let mut coeffs = vec![0.0; degree + 1];
    for ((&t, &w), &g) in rule.nodes().iter().zip(rule.weights()).zip(values) {
        let mut prev = 0.0;
        let mut cur = 1.0;
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c += w * g * cur;
            let kf = k as f64;
            let next = ((2.0 * kf + 1.0) * t * cur - kf * prev) / (kf + 1.0);
            prev = cur;
            cur = next;
        }
    }
    for (k, c) in coeffs.iter_mut().enumerate() {
        *c *= k as f64 + 0.5;
    }
    Ok(LegendreSeries { coeffs })
}

/// `m` equally spaced points covering `[-1, 1]` including both ends.
pub fn uniform_points(m: usize) -> Vec<f64> {
    match m {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..m)
            .map(|i| -1.0 + 2.0 * i as f64 / (m - 1) as f64)
            .collect(),
    }
}

/// Quadrature rule paired with a tabulation of `P_0..P_N` at its nodes.
///
/// This is what the pseudospectral solvers iterate on: synthesis and
/// projection become dense matrix-vector products.
#[derive(Debug, Clone)]
pub struct SpectralGrid {
    rule: QuadratureRule,
    degree: usize,
    /// Row-major `(degree + 1) × order`, entry `(k, i) = P_k(t_i)`.
    table: Vec<f64>,
}

impl SpectralGrid {
    pub fn new(degree: usize, order: usize) -> Result<Self, BasisError> {
        if order < degree + 1 {
            return Err(BasisError::QuadratureTooCoarse { order, degree });
        }
        let rule = QuadratureRule::gauss(order)?;
        let mut table = vec![0.0; (degree + 1) * order];
        for (i, &t) in rule.nodes().iter().enumerate() {
            let mut prev = 0.0;
            let mut cur = 1.0;
            for k in 0..=degree {
                table[k * order + i] = cur;
                let kf = k as f64;
                let next = ((2.0 * kf + 1.0) * t * cur - kf * prev) / (kf + 1.0);
                prev = cur;
                cur = next;
            }
        }
        Ok(Self {
            rule,
            degree,
            table,
        })
    }

    pub fn rule(&self) -> &QuadratureRule {
        &self.rule
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn order(&self) -> usize {
        self.rule.order()
    }

    pub fn nodes(&self) -> &[f64] {
        self.rule.nodes()
    }

    /// `P_k` at every node.
    pub fn row(&self, k: usize) -> &[f64] {
        let m = self.order();
        &self.table[k * m..(k + 1) * m]
    }

    /// Nodal values of a coefficient vector of length `degree + 1`.
    pub fn synthesize(&self, coeffs: &[f64]) -> Vec<f64> {
        let m = self.order();
        let mut out = vec![0.0; m];
        for (k, &c) in coeffs.iter().enumerate().take(self.degree + 1) {
            if c == 0.0 {
                continue;
            }
            for (o, p) in out.iter_mut().zip(self.row(k)) {
                *o += c * p;
            }
        }
        out
    }

    /// Legendre coefficients `0..=degree` of nodal values.
    pub fn project(&self, values: &[f64]) -> Vec<f64> {
        debug_assert_eq!(values.len(), self.order());
        let weighted: Vec<f64> = values
            .iter()
            .zip(self.rule.weights())
            .map(|(g, w)| g * w)
            .collect();
        (0..=self.degree)
            .map(|k| {
                let s: f64 = self.row(k).iter().zip(&weighted).map(|(p, g)| p * g).sum();
                (k as f64 + 0.5) * s
            })
            .collect()
    }
}
