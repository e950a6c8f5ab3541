//! The Legendre operator `Lx = [(1 - t²) x']' + μ x` in coefficient
//! space, where it acts diagonally with eigenvalue `μ - k(k+1)` on `P_k`.

use serde::Serialize;
use thiserror::Error;

use crate::basis::LegendreSeries;

/// Absolute distance to `k(k+1)` below which `μ` counts as resonant.
pub const RESONANCE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ResolventError {
    #[error("linear part singular at mu = {mu} (resonant index {k}); use lyapunov_schmidt")]
    Resonant { mu: f64, k: usize },
}

/// `k(k+1)` as a float.
pub fn eigenvalue(k: usize) -> f64 {
    let kf = k as f64;
    kf * (kf + 1.0)
}

/// The resonant index `k` with `|μ - k(k+1)| < 1e-8`, if any.
pub fn is_resonant(mu: f64) -> Option<usize> {
    if !mu.is_finite() || mu < -RESONANCE_TOL {
        return None;
    }
    let k = ((-1.0 + (1.0 + 4.0 * mu.max(0.0)).sqrt()) / 2.0).round() as usize;
    // the root estimate can be off by one for huge mu; check neighbours
    (k.saturating_sub(1)..=k + 1).find(|&j| (mu - eigenvalue(j)).abs() < RESONANCE_TOL)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearOperator {
    pub mu: f64,
}

impl LinearOperator {
    pub fn new(mu: f64) -> Self {
        Self { mu }
    }

    /// Diagonal entry `μ - k(k+1)`.
    pub fn symbol(&self, k: usize) -> f64 {
        self.mu - eigenvalue(k)
    }

    pub fn apply(&self, x: &LegendreSeries) -> LegendreSeries {
        apply_l(x, self.mu)
    }

    pub fn solve(&self, h: &LegendreSeries) -> Result<LegendreSeries, ResolventError> {
        solve_linear(h, self.mu)
    }
}

pub fn apply_l(x: &LegendreSeries, mu: f64) -> LegendreSeries {
    LegendreSeries::new(
        x.coeffs()
            .iter()
            .enumerate()
            .map(|(k, c)| (mu - eigenvalue(k)) * c)
            .collect(),
    )
}

/// Unique solution of `Lx = h` for non-resonant `μ`, by coefficientwise
/// division. The result has the same truncation as `h`.
pub fn solve_linear(h: &LegendreSeries, mu: f64) -> Result<LegendreSeries, ResolventError> {
    if let Some(k) = is_resonant(mu) {
        return Err(ResolventError::Resonant { mu, k });
    }
    Ok(LegendreSeries::new(
        h.coeffs()
            .iter()
            .enumerate()
            .map(|(k, c)| c / (mu - eigenvalue(k)))
            .collect(),
    ))
}

/// Partial sum over `k = 0..=terms` of `1/((μ - k(k+1))² (k + 1/2))`,
/// square-rooted: an upper bound for `‖L⁻¹‖` on `L²`.
pub fn resolvent_norm_bound(mu: f64, terms: usize) -> Result<f64, ResolventError> {
    if let Some(k) = is_resonant(mu) {
        return Err(ResolventError::Resonant { mu, k });
    }
    // summed from the tail so small terms are not swamped
    let sum: f64 = (0..=terms)
        .rev()
        .map(|k| {
            let d = mu - eigenvalue(k);
            (1.0 / (d * d * (k as f64 + 0.5))).abs()
        })
        .sum();
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resonance_detection() {
        assert_eq!(is_resonant(6.0), Some(2));
        assert_eq!(is_resonant(1.0), None);
        assert_eq!(is_resonant(2.0 + 1e-12), Some(1));
        assert_eq!(is_resonant(0.0), Some(0));
        assert_eq!(is_resonant(-1e-9), Some(0));
        assert_eq!(is_resonant(-0.5), None);
        assert_eq!(is_resonant(2.0 + 1e-7), None);
        assert_eq!(is_resonant(eigenvalue(1000)), Some(1000));
        assert_eq!(is_resonant(f64::NAN), None);
    }

    #[test]
    fn apply_examples() {
        let p2 = LegendreSeries::monomial(2, 2, 1.0);
        assert_eq!(apply_l(&p2, 1.0).coeffs(), &[0.0, 0.0, -5.0]);
        let p0 = LegendreSeries::constant(1.0, 0);
        assert_eq!(apply_l(&p0, 0.0).coeffs(), &[0.0]);
        let x = LegendreSeries::new(vec![0.0, 1.0, 0.0, 1.0]);
        assert_eq!(apply_l(&x, 2.0).coeffs(), &[0.0, 0.0, 0.0, -10.0]);
    }

    #[test]
    fn solve_examples() {
        let p3 = LegendreSeries::monomial(3, 3, 1.0);
        let x = solve_linear(&p3, 1.0).unwrap();
        assert!((x.coeff(3) + 1.0 / 11.0).abs() < 1e-16);
        assert!(apply_l(&x, 1.0).coeff_distance(&p3) < 1e-15);
        let p0 = LegendreSeries::constant(1.0, 0);
        assert_eq!(solve_linear(&p0, 1.0).unwrap().coeffs(), &[1.0]);
        let zero = LegendreSeries::zeros(5);
        assert_eq!(solve_linear(&zero, 1.0).unwrap(), zero);
        assert_eq!(
            solve_linear(&zero, 12.0),
            Err(ResolventError::Resonant { mu: 12.0, k: 3 })
        );
    }

    #[test]
    fn norm_bound_examples() {
        assert!((resolvent_norm_bound(1.0, 0).unwrap() - 2f64.sqrt()).abs() < 1e-15);
        let b10 = resolvent_norm_bound(1.0, 10).unwrap();
        let b100 = resolvent_norm_bound(1.0, 100).unwrap();
        assert!(b10 <= b100);
        let a = resolvent_norm_bound(1.0, 10_000).unwrap();
        let b = resolvent_norm_bound(1.0, 100_000).unwrap();
        assert!((b - a).abs() < 1e-6 && b >= a);
        assert!(resolvent_norm_bound(2.0, 10).is_err());
    }
}
