//! Spectral solvers for nonlinearly perturbed Legendre boundary value
//! problems
//!
//! ```text
//! [(1 - t²) x'(t)]' + μ x(t) = f(x(t)),   t ∈ (-1, 1),
//! ```
//!
//! with `x` and `x'` bounded at `±1`. Functions are truncated Legendre
//! series, so the boundary behavior holds by construction and the linear
//! part is diagonal.
//!
//! * [`basis`]: Legendre polynomials, Gauss rules, transforms.
//! * [`expr`]: the text format for `f`, with dual-number derivatives.
//! * [`resolvent`]: `L` and `L⁻¹` away from the spectrum `k(k+1)`.
//! * [`lyapunov_schmidt`]: projections, partial inverse and solvability
//!   constants at resonance.
//! * [`solver`]: Picard, resonant fixed-point and Newton–Galerkin solves.
//! * [`bifurcation`]: the bifurcation function and `ε`-continuation.
//! * [`verify`]: residual oracles on paths independent of the solvers.
//! * [`cli`]: the `legendre-bvp` command line.

pub mod basis;
pub mod bifurcation;
pub mod cli;
pub mod config;
pub mod expr;
pub mod lyapunov_schmidt;
pub mod resolvent;
pub mod solver;
pub mod verify;

pub use basis::{LegendreSeries, QuadratureRule, SpectralGrid};
pub use expr::{Limits, ScalarFunction};
pub use lyapunov_schmidt::{ResonantContext, SolvabilityCase, SolvabilityVerdict};

pub use bifurcation::{BranchPoint, BranchReport};
pub use solver::{Mode, Problem, Regime, SolutionReport, SolverOptions};
