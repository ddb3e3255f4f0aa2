//! Numerical laboratory for nonlocal nonlinear diffusion on bounded domains.
//!
//! The library discretizes the evolution problem
//!
//!   u_t + L u = f(x, t) + lambda u^q_r   in Omega x (0, T),
//!   u = 0                                outside Omega,
//!
//! where L is the nonlinear integro-differential operator averaging
//! |u(x) - u(y)|^(p-2) (u(x) - u(y)) against the singular kernel
//! |x - y|^(-(N + ps)), and provides the measurement instruments for the
//! qualitative theory around it: truncation-based energy estimates,
//! finite-time extinction and its closed-form bounds, infinite speed of
//! propagation, entropy-formulation residuals, weak-norm decay of
//! distribution functions, approximation ladders for irregular data, best
//! Sobolev-quotient estimation, and radial self-similar profiles of
//! Barenblatt type for the slow-diffusion regime.
//!
//! Module map:
//! - [`algebra`]: truncations, their primitives, odd powers, and the
//!   elementary inequality battery the energy estimates rest on.
//! - [`quad`]: graded-panel Gauss-Legendre quadrature shared by the kernel
//!   reductions.
//! - [`kernel_radial`]: angular reduction of the interaction kernel for
//!   radial problems in dimension N >= 2, with its inversion symmetry and
//!   weighted moments.
//! - [`grid_operator`]: the 1-D bounded-interval discretization — kernel
//!   tables, operator application, energy pairing, Gagliardo seminorms.
//! - [`evolution`]: implicit time stepping with damped Newton, the
//!   truncated-data approximation ladder, and the stationary solver.
//! - [`diagnostics`]: norms, distribution functions, weak and entropy
//!   residuals, extinction detection and bounds, Sobolev-constant
//!   estimation, trajectory regularity measurements.
//! - [`selfsimilar`]: the radial profile equation for p > 2 and its
//!   consistency check against the time stepper.

pub mod algebra;
pub mod diagnostics;
pub mod error;
pub mod evolution;
pub mod grid_operator;
pub mod kernel_radial;
pub mod quad;
pub mod selfsimilar;

pub use error::{Error, Result};
