//! Truncation calculus and the pointwise algebraic inequalities the energy
//! estimates rest on.
//!
//! The truncation at level k clamps to [-k, k]; the remainder is what the
//! clamp removed; `primitive_theta` is the convex primitive of the clamp.
//! `check_inequalities` samples the four inequality families used by the
//! L^1-data estimates and reports extremal ratios: two families carry
//! empirical constants (the extremal ratio over the sample), two must hold
//! with constant exactly 1 and any failure beyond roundoff is a violation.

use crate::error::{Error, Result};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Positive truncation level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationLevel(f64);

impl TruncationLevel {
    pub fn new(k: f64) -> Result<Self> {
        if !(k > 0.0) || !k.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "truncation level must be positive and finite, got {k}"
            )));
        }
        Ok(TruncationLevel(k))
    }

    pub fn get(self) -> f64 {
        self.0
    }
}

/// Clamp of sigma to [-k, k].
pub fn truncate(sigma: f64, k: TruncationLevel) -> f64 {
    sigma.clamp(-k.0, k.0)
}

/// Part of sigma the clamp removed: sigma - truncate(sigma, k).
pub fn remainder(sigma: f64, k: TruncationLevel) -> f64 {
    sigma - truncate(sigma, k)
}

/// Primitive of the clamp: integral of truncate(., k) from 0 to sigma.
///
/// Closed form: sigma^2/2 inside the clamp window, k|sigma| - k^2/2 outside.
pub fn primitive_theta(sigma: f64, k: TruncationLevel) -> f64 {
    let k = k.0;
    if sigma.abs() <= k {
        0.5 * sigma * sigma
    } else {
        k * sigma.abs() - 0.5 * k * k
    }
}

/// Odd power |sigma|^(p-2) * sigma, the nonlinearity of the p-energy pairing.
///
/// Computed as |sigma|^(p-1) * sign(sigma) so sigma = 0 is exact for every
/// p > 1 (no 0^negative intermediate).
pub fn odd_power(sigma: f64, p: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    sigma.abs().powf(p - 1.0) * sigma.signum()
}

/// Regularized odd power (sigma^2 + eps^2)^((p-2)/2) * sigma.
///
/// eps = 0 reduces to `odd_power`. Used by the Newton stepper where the
/// p < 2 singularity at sigma = 0 would break the linearization.
pub fn odd_power_reg(sigma: f64, p: f64, eps: f64) -> f64 {
    if eps == 0.0 {
        return odd_power(sigma, p);
    }
    (sigma * sigma + eps * eps).powf(0.5 * (p - 2.0)) * sigma
}

/// Derivative of `odd_power_reg` in sigma:
/// (sigma^2 + eps^2)^((p-4)/2) * ((p-1) sigma^2 + eps^2).
///
/// For eps = 0 and p < 2 this diverges at sigma = 0; the stepper always
/// passes eps > 0.
pub fn odd_power_reg_deriv(sigma: f64, p: f64, eps: f64) -> f64 {
    let q = sigma * sigma + eps * eps;
    if q == 0.0 {
        // p >= 2 limit is 0 for p > 2, 1 for p = 2.
        return if p == 2.0 { 1.0 } else { 0.0 };
    }
    q.powf(0.5 * (p - 4.0)) * ((p - 1.0) * sigma * sigma + eps * eps)
}

/// Theoretical constant of the monotone-pairing bound
/// |a-b|^(p-2)(a-b)(a^alpha - b^alpha) >= c |a^m - b^m|^p,
/// m = (p+alpha-1)/p: the infimum of the ratio is alpha / m^p, attained in
/// the b -> a limit. Sampled minima (`check_inequalities`) stay above it.
pub fn monotone_pairing_constant(p: f64, alpha: f64) -> f64 {
    let m = (p + alpha - 1.0) / p;
    alpha / m.powf(p)
}

/// Sampled verification report for the inequality families at fixed (p, alpha).
#[derive(Debug, Clone, Serialize)]
pub struct InequalityReport {
    pub p: f64,
    pub alpha: f64,
    pub samples: usize,
    /// Minimum over the sample of LHS/RHS for the monotone-pairing bound;
    /// this extremal ratio is the empirical constant for that bound.
    pub worst_ratio_alge3: f64,
    /// Maximum ratio for the interpolation bound (needs alpha >= 1);
    /// None when alpha < 1, where the bound does not apply.
    pub worst_ratio_alge2: Option<f64>,
    pub empirical_c3: f64,
    pub empirical_c4: Option<f64>,
    /// Count of samples violating the structure that must hold exactly:
    /// the two truncation pairings with constant 1, the sign of the
    /// monotone pairing, and the split bound with its published constant.
    pub violations: u64,
}

/// Relative roundoff allowance when checking inequalities that are sharp
/// (equality is attained); a handful of ulps of powf slack.
const INEQ_REL_TOL: f64 = 1e-10;

fn log_uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    let u: f64 = rng.gen();
    (lo.ln() + u * (hi.ln() - lo.ln())).exp()
}

/// Sample the inequality families at (p, alpha) and report extremal ratios.
///
/// Positive pairs (a, b) are drawn log-uniformly from [1e-6, 1e6]; the
/// truncation pairings additionally draw a signed pair and a level k
/// log-uniform in [1e-3, 1e3]. Deterministic for a fixed seed. Ratios at
/// exactly coincident samples are defined as 1.
pub fn check_inequalities(p: f64, alpha: f64, samples: usize, seed: u64) -> Result<InequalityReport> {
    if !(p > 1.0) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!("p must exceed 1, got {p}")));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "alpha must be positive, got {alpha}"
        )));
    }
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = (p + alpha - 1.0) / p;
    let split_const = 1.0_f64.max(2.0_f64.powf(alpha - 1.0));
    let with_alge2 = alpha >= 1.0;

    let mut min_ratio_3 = f64::INFINITY;
    let mut max_ratio_2 = f64::NEG_INFINITY;
    let mut violations: u64 = 0;

    for _ in 0..samples {
        // Draw order is part of the sampled contract (tests replay it).
        let a = log_uniform(&mut rng, 1e-6, 1e6);
        let b = log_uniform(&mut rng, 1e-6, 1e6);
        let x_mag = log_uniform(&mut rng, 1e-6, 1e6);
        let x_sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let y_mag = log_uniform(&mut rng, 1e-6, 1e6);
        let y_sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let k = log_uniform(&mut rng, 1e-3, 1e3);

        // Split bound: (a+b)^alpha <= c (a^alpha + b^alpha), c = max(1, 2^(alpha-1)).
        let lhs1 = (a + b).powf(alpha);
        let rhs1 = split_const * (a.powf(alpha) + b.powf(alpha));
        if lhs1 > rhs1 * (1.0 + INEQ_REL_TOL) {
            violations += 1;
        }

        // Monotone pairing: |a-b|^(p-2)(a-b)(a^alpha - b^alpha)
        //   >= c3 |a^m - b^m|^p with m = (p+alpha-1)/p.
        let d = a - b;
        let lhs3 = odd_power(d, p) * (a.powf(alpha) - b.powf(alpha));
        if lhs3 < 0.0 {
            violations += 1; // the pairing must be nonnegative
        }
        let rhs3 = (a.powf(m) - b.powf(m)).abs().powf(p);
        let ratio3 = if rhs3 > 0.0 { lhs3 / rhs3 } else { 1.0 };
        min_ratio_3 = min_ratio_3.min(ratio3);

        // Interpolation bound (alpha >= 1):
        //   (a+b)^(alpha-1) |a-b|^p <= c4 |a^m - b^m|^p.
        if with_alge2 {
            let lhs2 = (a + b).powf(alpha - 1.0) * d.abs().powf(p);
            let ratio2 = if rhs3 > 0.0 { lhs2 / rhs3 } else { 1.0 };
            max_ratio_2 = max_ratio_2.max(ratio2);
        }

        // Truncation pairings with constant exactly 1, on signed arguments.
        let x = x_mag * x_sign;
        let y = y_mag * y_sign;
        let level = TruncationLevel::new(k).expect("sampled level is positive");
        let dt_trunc = truncate(x, level) - truncate(y, level);
        let lhs_g = odd_power(x - y, p) * dt_trunc;
        let rhs_g = dt_trunc.abs().powf(p);
        if lhs_g < rhs_g - INEQ_REL_TOL * (lhs_g.abs() + rhs_g) {
            violations += 1;
        }
        let dg = remainder(x, level) - remainder(y, level);
        let lhs_g0 = odd_power(x - y, p) * dg;
        let rhs_g0 = dg.abs().powf(p);
        if lhs_g0 < rhs_g0 - INEQ_REL_TOL * (lhs_g0.abs() + rhs_g0) {
            violations += 1;
        }
    }

    Ok(InequalityReport {
        p,
        alpha,
        samples,
        worst_ratio_alge3: min_ratio_3,
        worst_ratio_alge2: if with_alge2 { Some(max_ratio_2) } else { None },
        empirical_c3: min_ratio_3,
        empirical_c4: if with_alge2 { Some(max_ratio_2) } else { None },
        violations,
    })
}
