//! Self-similar source-type decay profiles of the radial nonlocal
//! p-diffusion flow in the degenerate regime p > 2.
//!
//! For p > 2 the whole-space flow admits mass-preserving solutions of the
//! form u(x, t) = t^(-N beta) P(|x| t^(-beta)) with
//! beta = 1 / (ps + N (p - 2)). The radial profile P solves the nonlocal
//! stationary balance
//!
//! ```text
//! beta [N P(r) + r P'(r)]
//!     = r^(-ps) * INT_0^inf phi_p(P(r) - P(sigma r)) sigma^(N-1) K(sigma) dsigma
//! ```
//!
//! where phi_p(d) = |d|^(p-2) d and K is the radial collision kernel of
//! `kernel_radial` at exponent index theta = -ps. K blows up like
//! |1 - sigma|^(-ps - 1) at sigma = 1, but the phi_p difference vanishes fast
//! enough there that the product stays absolutely integrable: no principal
//! value is needed. Generic kernel moments cannot express that cancellation,
//! so this module carries its own sigma-quadrature:
//!
//! * the half line is folded onto (0, 1) by the inversion
//!   K(1/sigma) = sigma^(N - theta) K(sigma), which turns the integral into
//!   `INT_0^1 [phi_p(P(r) - P(sigma r)) sigma^(N-1)
//!            + phi_p(P(r) - P(r/sigma)) sigma^(ps-1)] K(sigma) dsigma`;
//! * panels are geometrically graded toward both endpoints and the kernel
//!   values are precomputed once per parameter set, so applying the operator
//!   is a plain weighted sum;
//! * near sigma = 1 the folded integrand behaves like
//!   |1 - sigma|^(p - 2 - ps) (one-sided slopes of the piecewise-linear
//!   reconstruction need not match), which is integrable precisely when
//!   ps < p - 1; the parameter guard enforces that.
//!
//! Profiles live on a geometric radial grid and are extended flat below the
//! first node (P'(0) = 0 for radial profiles) and by a fitted power tail
//! above the last node. The far-field balance of the equation forces
//! P ~ C r^(-(N + ps)), so the fitted exponent doubles as a diagnostic.
//!
//! The solver normalizes mass, not boundary data: the equation is invariant
//! under P(r) -> A P(A^(-(p-2)/ps) r), one member of the family per mass, so
//! a mass constraint replaces the (redundant) last collocation equation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kernel_radial::{angular_kernel, sphere_measure, AngularKernelSpec};
use crate::quad::{edges_graded_toward_end, edges_graded_toward_start, GL8_W, GL8_X};

/// First node of the standard radial grid.
pub const PROFILE_R_MIN: f64 = 1e-3;
/// Last node of the standard radial grid.
pub const PROFILE_R_MAX: f64 = 50.0;
/// Upper bound on the geometric step of the standard radial grid.
pub const PROFILE_GRID_RATIO: f64 = 1.05;

/// Smallest sigma kept by the folded quadrature; below it both branches
/// contribute O(sigma_min^ps) of fully resolved, negligible mass.
const SIGMA_MIN: f64 = 1e-8;
/// Distance to sigma = 1 where the graded panels stop. The dropped sliver
/// carries O(sliver^(p - 1 - ps)) of the integral, far below solver tolerance
/// for every admissible parameter set.
const SIGMA_SLIVER: f64 = 1e-10;
/// Graded panels per decade on each side of the folded interval.
const SIGMA_PER_DECADE: usize = 12;

/// Iteration cap of the damped Newton solve.
const NEWTON_MAX_ITERS: usize = 200;
/// Relative residual tolerance of the profile solve, in units of
/// beta * N * sup P (the natural magnitude of the dilation term).
const NEWTON_REL_TOL: f64 = 1e-8;
/// Implicit Euler substeps used by the consistency check.
const CONSISTENCY_SUBSTEPS: usize = 8;

/// Parameter set of the self-similar regime: degenerate exponent p > 2,
/// order s in (0, 1), dimension N >= 2, with ps < N (mass-preserving decay)
/// and ps < p - 1 (integrability of the folded quadrature against the
/// piecewise-linear reconstruction).
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ProfileParams {
    p: f64,
    s: f64,
    n: u32,
}

impl ProfileParams {
    pub fn new(p: f64, s: f64, n: u32) -> Result<Self> {
        if !p.is_finite() || p <= 2.0 {
            return Err(Error::InvalidParameter(format!(
                "self-similar profiles need the degenerate regime p > 2, got p = {p}"
            )));
        }
        if !s.is_finite() || s <= 0.0 || s >= 1.0 {
            return Err(Error::InvalidParameter(format!(
                "order s must lie in (0, 1), got s = {s}"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidParameter(format!(
                "radial profiles need dimension N >= 2, got N = {n}"
            )));
        }
        let ps = p * s;
        if ps >= n as f64 {
            return Err(Error::InvalidParameter(format!(
                "mass-preserving decay needs ps < N, got ps = {ps}, N = {n}"
            )));
        }
        if ps >= p - 1.0 {
            return Err(Error::InvalidParameter(format!(
                "the folded quadrature needs ps < p - 1 (near-diagonal exponent \
                 p - 2 - ps must exceed -1), got ps = {ps}, p = {p}"
            )));
        }
        Ok(ProfileParams { p, s, n })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn ps(&self) -> f64 {
        self.p * self.s
    }

    /// Similarity exponent beta = 1 / (ps + N (p - 2)); the profile variable
    /// is r t^(-beta) and the amplitude decays like t^(-N beta).
    pub fn beta(&self) -> f64 {
        1.0 / (self.ps() + self.n as f64 * (self.p - 2.0))
    }
}

/// Standard geometric radial grid: spans [PROFILE_R_MIN, PROFILE_R_MAX]
/// exactly, with the node ratio as close to PROFILE_GRID_RATIO as possible
/// without exceeding it.
pub fn standard_radial_grid() -> Vec<f64> {
    let span = (PROFILE_R_MAX / PROFILE_R_MIN).ln();
    let cells = (span / PROFILE_GRID_RATIO.ln()).ceil() as usize;
    let step = span / cells as f64;
    (0..=cells)
        .map(|i| PROFILE_R_MIN * (i as f64 * step).exp())
        .collect()
}

/// A radial profile: values on a geometric grid plus the two extensions that
/// make it a function on all of (0, inf) — flat below the first node and a
/// power tail `A r^(-gamma)` above the last, with gamma fitted to the last
/// decade of nodes (fallback N + ps, the far-field balance exponent).
#[derive(Debug, Clone)]
pub struct Profile {
    params: ProfileParams,
    r_grid: Vec<f64>,
    values: Vec<f64>,
    log_step: f64,
    tail_exponent: f64,
}

impl Profile {
    /// Validates grid and values. The grid must be geometric (uniform in
    /// log r to 1e-9 relative), strictly increasing and positive, with at
    /// least 8 nodes; values must be finite and nonnegative.
    pub fn new(params: ProfileParams, r_grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if r_grid.len() < 8 {
            return Err(Error::InvalidParameter(format!(
                "profile grid needs at least 8 nodes, got {}",
                r_grid.len()
            )));
        }
        if values.len() != r_grid.len() {
            return Err(Error::ShapeMismatch {
                expected: r_grid.len(),
                got: values.len(),
            });
        }
        if !r_grid.iter().all(|r| r.is_finite() && *r > 0.0) {
            return Err(Error::InvalidParameter(
                "profile grid nodes must be finite and positive".into(),
            ));
        }
        let log_step = (r_grid[1] / r_grid[0]).ln();
        if !(log_step > 0.0) {
            return Err(Error::InvalidParameter(
                "profile grid must be strictly increasing".into(),
            ));
        }
        for w in r_grid.windows(2) {
            let step = (w[1] / w[0]).ln();
            if !(step > 0.0) || (step - log_step).abs() > 1e-9 * log_step {
                return Err(Error::InvalidParameter(
                    "profile grid must be geometric (uniform in log r)".into(),
                ));
            }
        }
        if !values.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::InvalidParameter(
                "profile values must be finite and nonnegative".into(),
            ));
        }
        let tail_exponent = fit_tail_exponent(&r_grid, &values, params.n as f64 + params.ps());
        Ok(Profile {
            params,
            r_grid,
            values,
            log_step,
            tail_exponent,
        })
    }

    pub fn params(&self) -> &ProfileParams {
        &self.params
    }

    pub fn r_grid(&self) -> &[f64] {
        &self.r_grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn beta(&self) -> f64 {
        self.params.beta()
    }

    /// Fitted tail (A, gamma) with the profile extended by A r^(-gamma) above
    /// the last node; A is anchored so the extension is continuous there.
    pub fn tail(&self) -> (f64, f64) {
        let m = self.values.len();
        let a = self.values[m - 1] * self.r_grid[m - 1].powf(self.tail_exponent);
        (a, self.tail_exponent)
    }

    /// Profile value at any radius: flat left of the grid, piecewise linear
    /// in log r on it, fitted power tail right of it.
    pub fn value_at(&self, radius: f64) -> f64 {
        debug_assert!(radius.is_finite() && radius > 0.0);
        let pos = (radius / self.r_grid[0]).ln() / self.log_step;
        value_at_pos(&self.values, pos, self.tail_exponent * self.log_step)
    }

    /// Total mass INT P(|x|) dx = |S^(N-1)| INT_0^inf P(r) r^(N-1) dr,
    /// including the flat inner disk and the fitted tail. Infinite when the
    /// fitted tail decays no faster than r^(-N) (and is not identically 0).
    pub fn mass(&self) -> f64 {
        let n = self.params.n as f64;
        let m = self.values.len();
        let mut acc = bulk_mass_integral(&self.r_grid, &self.values, n);
        let (a_tail, gamma) = self.tail();
        if a_tail > 0.0 {
            if gamma <= n {
                return f64::INFINITY;
            }
            acc += a_tail * self.r_grid[m - 1].powf(n - gamma) / (gamma - n);
        }
        sphere_measure(self.params.n) * acc
    }
}

/// True when the profile values never increase with radius (up to roundoff
/// slack). Decay is expected of the solved profile but not enforced; callers
/// surface a warning when this returns false.
pub fn profile_monotone_decay(profile: &Profile) -> bool {
    let vmax = profile.values.iter().cloned().fold(0.0, f64::max);
    profile
        .values
        .windows(2)
        .all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-15 * vmax)
}

/// Flat-inner-disk plus trapezoid part of INT P r^(N-1) dr over the grid
/// (no tail, no sphere factor).
fn bulk_mass_integral(r: &[f64], v: &[f64], n: f64) -> f64 {
    let mut acc = v[0] * r[0].powf(n) / n;
    for i in 0..r.len() - 1 {
        let fa = v[i] * r[i].powf(n - 1.0);
        let fb = v[i + 1] * r[i + 1].powf(n - 1.0);
        acc += 0.5 * (fa + fb) * (r[i + 1] - r[i]);
    }
    acc
}

/// Least-squares tail exponent on the last decade of nodes: P ~ A r^(-gamma).
/// Falls back to `fallback` (the analytic far-field exponent N + ps) when the
/// window has fewer than 4 usable points or any nonpositive value. The result
/// is clamped to gamma >= 0 so the extension never grows.
fn fit_tail_exponent(r: &[f64], v: &[f64], fallback: f64) -> f64 {
    let m = r.len();
    let lo = r[m - 1] / 10.0;
    let mut xs: Vec<f64> = Vec::new();
    let mut ys: Vec<f64> = Vec::new();
    for i in 0..m {
        if r[i] >= lo {
            if v[i] <= 0.0 {
                return fallback;
            }
            xs.push(r[i].ln());
            ys.push(v[i].ln());
        }
    }
    if xs.len() < 4 {
        return fallback;
    }
    let k = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / k;
    let ym = ys.iter().sum::<f64>() / k;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxy += (x - xm) * (y - ym);
        sxx += (x - xm) * (x - xm);
    }
    if sxx <= 0.0 {
        return fallback;
    }
    (-(sxy / sxx)).max(0.0)
}

/// Value of the extended profile at fractional grid position `pos`
/// (log-radius index: node i sits at pos = i). `gamma_step` is the tail
/// exponent times the grid's log step.
#[inline]
fn value_at_pos(v: &[f64], pos: f64, gamma_step: f64) -> f64 {
    if pos <= 0.0 {
        return v[0];
    }
    let m = v.len();
    let top = (m - 1) as f64;
    if pos >= top {
        let last = v[m - 1];
        if last == 0.0 {
            return 0.0;
        }
        return last * (-gamma_step * (pos - top)).exp();
    }
    let i = (pos.floor() as usize).min(m - 2);
    let f = pos - i as f64;
    // Base-plus-increment form: exact for constant neighbors, so vanishing
    // differences stay exactly zero against the huge near-diagonal kernel
    // weights.
    v[i] + f * (v[i + 1] - v[i])
}

/// Nodes that v(pos) depends on, with interpolation weights: (index, weight)
/// pairs, at most two. Used by the analytic Jacobian; must mirror
/// `value_at_pos` exactly.
#[inline]
fn weights_at_pos(m: usize, pos: f64, gamma_step: f64) -> [(usize, f64); 2] {
    if pos <= 0.0 {
        return [(0, 1.0), (0, 0.0)];
    }
    let top = (m - 1) as f64;
    if pos >= top {
        return [(m - 1, (-gamma_step * (pos - top)).exp()), (m - 1, 0.0)];
    }
    let i = (pos.floor() as usize).min(m - 2);
    let f = pos - i as f64;
    [(i, 1.0 - f), (i + 1, f)]
}

/// One precomputed node of the folded sigma-quadrature.
struct QuadNode {
    /// ln(sigma) / log_step: the (negative) fractional index offset that
    /// sigma r makes against the geometric grid.
    theta: f64,
    /// sigma^(N-1): weight of the contracting branch P(sigma r).
    w_fwd: f64,
    /// sigma^(ps-1): weight of the inverted branch P(r / sigma).
    w_inv: f64,
    /// Gauss-Legendre weight times kernel value K(sigma).
    wk: f64,
}

/// Folded kernel quadrature, precomputed once per (parameters, grid step).
struct SigmaQuad {
    nodes: Vec<QuadNode>,
}

fn build_sigma_quad(params: &ProfileParams, log_step: f64, per_decade: usize) -> Result<SigmaQuad> {
    let ps = params.ps();
    let spec = AngularKernelSpec::new(params.n, -ps)?;
    let nf = params.n as f64;

    // Panels on (0, 1): graded toward 0 on [SIGMA_MIN, 1/2] (the integrand
    // carries sigma^(ps-1), singular-but-integrable when ps < 1) and toward 1
    // on [1/2, 1 - SIGMA_SLIVER] (kernel blowup tamed by the phi_p
    // difference). The two dropped slivers are negligible by construction.
    let mut edges = edges_graded_toward_start(0.0, 0.5, SIGMA_MIN, per_decade);
    edges.remove(0);
    let mut upper = edges_graded_toward_end(0.5, 1.0, SIGMA_SLIVER, per_decade);
    upper.pop();
    edges.extend(upper.into_iter().skip(1));

    let mut nodes = Vec::with_capacity(8 * (edges.len() - 1));
    for w in edges.windows(2) {
        let c = 0.5 * (w[0] + w[1]);
        let rad = 0.5 * (w[1] - w[0]);
        for k in 0..4 {
            for sign in [-1.0, 1.0] {
                let sigma = c + sign * rad * GL8_X[k];
                let kernel = angular_kernel(sigma, &spec)?;
                nodes.push(QuadNode {
                    theta: sigma.ln() / log_step,
                    w_fwd: sigma.powf(nf - 1.0),
                    w_inv: sigma.powf(ps - 1.0),
                    wk: GL8_W[k] * rad * kernel,
                });
            }
        }
    }
    Ok(SigmaQuad { nodes })
}

/// The radial collocation system: grid, parameters and precomputed
/// quadrature, with the operator, residual and Jacobian evaluations.
struct RadialSystem<'a> {
    r: &'a [f64],
    params: ProfileParams,
    quad: SigmaQuad,
    log_step: f64,
    /// r_i^(-ps), precomputed.
    r_pow: Vec<f64>,
    /// First index of the tail-fit window (last decade of nodes).
    window_start: usize,
    /// Least-squares coefficients of the window: the fitted tail exponent is
    /// gamma = -sum_j c_j ln v_j, a linear functional of the log values.
    fit_coeffs: Vec<f64>,
}

impl<'a> RadialSystem<'a> {
    fn build(r: &'a [f64], params: ProfileParams) -> Result<Self> {
        let log_step = (r[1] / r[0]).ln();
        let quad = build_sigma_quad(&params, log_step, SIGMA_PER_DECADE)?;
        let ps = params.ps();
        let r_pow = r.iter().map(|ri| ri.powf(-ps)).collect();
        let lo = r[r.len() - 1] / 10.0;
        let window_start = r.iter().position(|ri| *ri >= lo).unwrap_or(r.len() - 1);
        let xs: Vec<f64> = r[window_start..].iter().map(|x| x.ln()).collect();
        let k = xs.len() as f64;
        let xm = xs.iter().sum::<f64>() / k;
        let sxx: f64 = xs.iter().map(|x| (x - xm) * (x - xm)).sum();
        let fit_coeffs = xs.iter().map(|x| (x - xm) / sxx).collect();
        Ok(RadialSystem {
            r,
            params,
            quad,
            log_step,
            r_pow,
            window_start,
            fit_coeffs,
        })
    }

    fn tail_fit(&self, v: &[f64]) -> f64 {
        fit_tail_exponent(self.r, v, self.params.n as f64 + self.params.ps())
    }

    /// Tail exponent as the solver sees it: the linear functional of log
    /// values, before the clamp at zero. Defined whenever v is strictly
    /// positive.
    fn tail_fit_log(&self, w: &[f64]) -> f64 {
        -self
            .fit_coeffs
            .iter()
            .zip(&w[self.window_start..])
            .map(|(c, wj)| c * wj)
            .sum::<f64>()
    }

    /// Nonlocal operator I[v](r_i) = r_i^(-ps) * folded kernel integral, with
    /// the tail exponent frozen at `gamma`.
    fn apply(&self, v: &[f64], gamma: f64) -> Vec<f64> {
        let p = self.params.p;
        let gs = gamma * self.log_step;
        let m = v.len();
        let mut out = vec![0.0; m];
        for i in 0..m {
            let vi = v[i];
            let fi = i as f64;
            let mut acc = 0.0;
            for nd in &self.quad.nodes {
                let d_f = vi - value_at_pos(v, fi + nd.theta, gs);
                let d_b = vi - value_at_pos(v, fi - nd.theta, gs);
                let phi_f = d_f.abs().powf(p - 2.0) * d_f;
                let phi_b = d_b.abs().powf(p - 2.0) * d_b;
                acc += (phi_f * nd.w_fwd + phi_b * nd.w_inv) * nd.wk;
            }
            out[i] = acc * self.r_pow[i];
        }
        out
    }

    /// Dense Jacobian of `apply` at v (tail exponent frozen at `gamma`; its
    /// dependence on v through the fit is deliberately not differentiated —
    /// the outer iterations refresh the fit, a standard frozen-coefficient
    /// Newton).
    fn apply_jacobian(&self, v: &[f64], gamma: f64) -> DMatrix<f64> {
        let p = self.params.p;
        let gs = gamma * self.log_step;
        let m = v.len();
        let mut jac = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            let vi = v[i];
            let fi = i as f64;
            let rm = self.r_pow[i];
            for nd in &self.quad.nodes {
                for (off, wpow) in [(nd.theta, nd.w_fwd), (-nd.theta, nd.w_inv)] {
                    let pos = fi + off;
                    let val = value_at_pos(v, pos, gs);
                    let d = vi - val;
                    let slope = (p - 1.0) * d.abs().powf(p - 2.0) * wpow * nd.wk * rm;
                    jac[(i, i)] += slope;
                    for (k, wt) in weights_at_pos(m, pos, gs) {
                        if wt != 0.0 {
                            jac[(i, k)] -= slope * wt;
                        }
                    }
                }
            }
        }
        jac
    }

    /// Collocation residual beta [N v + r v'] - I[v], derivative by centered
    /// differences (one-sided at the ends), tail exponent frozen at `gamma`.
    fn residual(&self, v: &[f64], gamma: f64) -> Vec<f64> {
        let beta = self.params.beta();
        let nf = self.params.n as f64;
        let m = v.len();
        let apply = self.apply(v, gamma);
        let mut res = vec![0.0; m];
        for i in 0..m {
            let dv = self.derivative_at(v, i);
            res[i] = beta * (nf * v[i] + self.r[i] * dv) - apply[i];
        }
        res
    }

    fn derivative_at(&self, v: &[f64], i: usize) -> f64 {
        let m = v.len();
        if i == 0 {
            (v[1] - v[0]) / (self.r[1] - self.r[0])
        } else if i == m - 1 {
            (v[m - 1] - v[m - 2]) / (self.r[m - 1] - self.r[m - 2])
        } else {
            (v[i + 1] - v[i - 1]) / (self.r[i + 1] - self.r[i - 1])
        }
    }

    /// Mass with the tail included only when it converges comfortably; used
    /// by the solver's gauge so a transiently flat iterate cannot poison the
    /// constraint with an infinity.
    fn gauge_mass(&self, v: &[f64], gamma: f64) -> f64 {
        let n = self.params.n as f64;
        let m = v.len();
        let mut acc = bulk_mass_integral(self.r, v, n);
        if gamma > n + 0.05 && v[m - 1] > 0.0 {
            acc += v[m - 1] * self.r[m - 1].powf(n) / (gamma - n);
        }
        sphere_measure(self.params.n) * acc
    }

    /// Gradient of `gauge_mass` in v (gamma frozen).
    fn gauge_mass_gradient(&self, v: &[f64], gamma: f64) -> Vec<f64> {
        let n = self.params.n as f64;
        let m = v.len();
        let mut grad = vec![0.0; m];
        grad[0] += self.r[0].powf(n) / n;
        for i in 0..m - 1 {
            let dr = self.r[i + 1] - self.r[i];
            grad[i] += 0.5 * self.r[i].powf(n - 1.0) * dr;
            grad[i + 1] += 0.5 * self.r[i + 1].powf(n - 1.0) * dr;
        }
        if gamma > n + 0.05 && v[m - 1] > 0.0 {
            grad[m - 1] += self.r[m - 1].powf(n) / (gamma - n);
        }
        let surf = sphere_measure(self.params.n);
        grad.iter_mut().for_each(|g| *g *= surf);
        grad
    }

    /// Residual with the last collocation row replaced by the scaled mass
    /// constraint beta N (mass / target - 1). The constraint removes the
    /// scaling-family degeneracy of the collocation system.
    fn gauged_residual(&self, v: &[f64], gamma: f64, target_mass: f64) -> Vec<f64> {
        let mut res = self.residual(v, gamma);
        let bn = self.params.beta() * self.params.n as f64;
        let m = res.len();
        res[m - 1] = bn * (self.gauge_mass(v, gamma) / target_mass - 1.0);
        res
    }

    /// Gauged Jacobian in log variables w = ln v, including the feedback of
    /// the fitted tail exponent: gamma is linear in w, and every tail access
    /// of the extension depends on it. `gamma_active` is false when the
    /// exponent sits on its clamp at zero (the chain terms vanish there).
    /// Working in logs is what makes the solve robust — positivity is
    /// structural, steps are relative, and the fit is smooth in the unknowns.
    fn log_gauged_jacobian(
        &self,
        v: &[f64],
        gamma: f64,
        gamma_active: bool,
        target_mass: f64,
    ) -> DMatrix<f64> {
        let p = self.params.p;
        let beta = self.params.beta();
        let nf = self.params.n as f64;
        let bn = beta * nf;
        let gs = gamma * self.log_step;
        let m = v.len();
        let top = (m - 1) as f64;
        let ws = self.window_start;
        let mut jac = DMatrix::<f64>::zeros(m, m);

        // Collocation rows (the last row is the gauge, assembled below).
        for i in 0..m - 1 {
            let vi = v[i];
            let fi = i as f64;
            let rm = self.r_pow[i];
            let mut dres_dgamma = 0.0;
            for nd in &self.quad.nodes {
                for (off, wpow) in [(nd.theta, nd.w_fwd), (-nd.theta, nd.w_inv)] {
                    let pos = fi + off;
                    let val = value_at_pos(v, pos, gs);
                    let d = vi - val;
                    let slope = (p - 1.0) * d.abs().powf(p - 2.0) * wpow * nd.wk * rm;
                    // residual = ... - apply, and apply depends on v_i
                    // explicitly and on val through the reconstruction.
                    jac[(i, i)] -= slope * vi;
                    if pos <= 0.0 {
                        jac[(i, 0)] += slope * v[0];
                    } else if pos >= top {
                        jac[(i, m - 1)] += slope * val;
                        // val = v_last exp(-gamma dl (pos - top)):
                        // d val / d gamma = -val * dl * (pos - top).
                        dres_dgamma -= slope * val * self.log_step * (pos - top);
                    } else {
                        let k = (pos.floor() as usize).min(m - 2);
                        let f = pos - k as f64;
                        jac[(i, k)] += slope * (1.0 - f) * v[k];
                        jac[(i, k + 1)] += slope * f * v[k + 1];
                    }
                }
            }
            // Dilation and transport terms beta (N v_i + r_i v').
            jac[(i, i)] += bn * vi;
            if i == 0 {
                let h = self.r[1] - self.r[0];
                jac[(0, 1)] += beta * self.r[0] * v[1] / h;
                jac[(0, 0)] -= beta * self.r[0] * v[0] / h;
            } else {
                let h2 = self.r[i + 1] - self.r[i - 1];
                jac[(i, i + 1)] += beta * self.r[i] * v[i + 1] / h2;
                jac[(i, i - 1)] -= beta * self.r[i] * v[i - 1] / h2;
            }
            if gamma_active && dres_dgamma != 0.0 {
                // gamma = -sum_j c_j w_j over the fit window.
                for (jj, c) in self.fit_coeffs.iter().enumerate() {
                    jac[(i, ws + jj)] -= dres_dgamma * c;
                }
            }
        }

        // Gauge row: bn (mass / target - 1), mass linear in v plus the tail
        // closure that also feels gamma.
        let grad = self.gauge_mass_gradient(v, gamma);
        for (j, g) in grad.iter().enumerate() {
            jac[(m - 1, j)] = bn * g * v[j] / target_mass;
        }
        let n = nf;
        if gamma_active && gamma > n + 0.05 && v[m - 1] > 0.0 {
            let dmass_dgamma = -sphere_measure(self.params.n) * v[m - 1]
                * self.r[m - 1].powf(n)
                / ((gamma - n) * (gamma - n));
            for (jj, c) in self.fit_coeffs.iter().enumerate() {
                jac[(m - 1, ws + jj)] -= bn * dmass_dgamma * c / target_mass;
            }
        }
        jac
    }

    /// Pseudo-transient Newton continuation on the gauged system: each
    /// iteration solves (I / tau + J) delta = -G, an implicit Euler step of
    /// the pseudo-flow v_tau = -G(v). Accepted steps grow tau (the scheme
    /// turns into plain quadratic Newton), rejected ones shrink it (the step
    /// shortens and bends toward steepest descent). This globalizes what a
    /// line search cannot: the full Newton step of this strongly nonlinear
    /// system overshoots the tiny tail values long before the bulk residual
    /// starts to drop. Returns the solution with its final residual norm and
    /// iteration count.
    /// Row scales for the gauged system at the current iterate: each
    /// collocation row is measured against its local magnitude bn * v_i (with
    /// a floor so far-tail rows stay tame), the gauge row is already
    /// relative. Equilibrating by these brings the log-space Jacobian to
    /// O(1) entries and makes the merit a scale-free relative violation.
    fn row_scales(&self, v: &[f64]) -> Vec<f64> {
        let bn = self.params.beta() * self.params.n as f64;
        let vmax = v.iter().cloned().fold(0.0, f64::max).max(1e-300);
        let m = v.len();
        (0..m)
            .map(|i| {
                if i == m - 1 {
                    bn
                } else {
                    bn * (v[i] + 1e-6 * vmax)
                }
            })
            .collect()
    }

    /// Damped Newton on w = ln v with row equilibration and a backtracking
    /// line search on the scale-free merit. The log parametrization keeps
    /// the iterate positive without clamps and turns steps into relative
    /// changes; the fitted tail exponent is a linear functional of w, so its
    /// feedback differentiates cleanly into the Jacobian; row scaling makes
    /// the merit weigh a relative violation at a 1e-6 tail node the same as
    /// one at the peak. Pure Newton directions are essential here: blending
    /// toward the gradient flow (pseudo-transient style) turns out to point
    /// uphill in the dominant rows for this operator.
    fn newton_profile(
        &self,
        v0: Vec<f64>,
        target_mass: f64,
    ) -> Result<(Vec<f64>, f64, usize)> {
        let bn = self.params.beta() * self.params.n as f64;
        let m = v0.len();
        let vmax0 = v0.iter().cloned().fold(0.0, f64::max);
        let floor = (1e-14 * vmax0).max(1e-30);
        let mut w: Vec<f64> = v0.iter().map(|&x| x.max(floor).ln()).collect();
        let mut iterations = 0;

        let eval = |w: &[f64]| -> (Vec<f64>, f64, f64, Vec<f64>) {
            let v: Vec<f64> = w.iter().map(|&x| x.exp()).collect();
            let raw = self.tail_fit_log(w);
            let gamma = raw.max(0.0);
            let g = self.gauged_residual(&v, gamma, target_mass);
            (v, raw, gamma, g)
        };
        let scaled_merit = |g: &[f64], s: &[f64]| -> f64 {
            g.iter()
                .zip(s)
                .fold(0.0, |a: f64, (x, si)| a.max(x.abs() / si))
        };

        let (mut v, mut raw, mut gamma, mut g) = eval(&w);
        while iterations < NEWTON_MAX_ITERS {
            iterations += 1;
            let gnorm = inf_norm(&g);
            let vmax = v.iter().cloned().fold(0.0, f64::max).max(1e-300);
            if gnorm <= NEWTON_REL_TOL * bn * vmax {
                return Ok((v, gnorm, iterations));
            }
            let scales = self.row_scales(&v);
            let merit = scaled_merit(&g, &scales);
            let mut jac = self.log_gauged_jacobian(&v, gamma, raw > 0.0, target_mass);
            for i in 0..m {
                let inv = 1.0 / scales[i];
                for j in 0..m {
                    jac[(i, j)] *= inv;
                }
            }
            let rhs = DVector::from_iterator(m, g.iter().zip(&scales).map(|(x, s)| -x / s));
            let delta = jac.lu().solve(&rhs).ok_or(Error::SolverFailure {
                residual: gnorm,
                iterations,
            })?;
            let mut lambda = 1.0;
            let mut accepted = false;
            while lambda >= 1e-8 {
                let cand: Vec<f64> = w
                    .iter()
                    .zip(delta.iter())
                    .map(|(wi, di)| (wi + lambda * di).clamp(-700.0, 60.0))
                    .collect();
                let (vc, rawc, gammac, gc) = eval(&cand);
                let merit_c = scaled_merit(&gc, &scales);
                if merit_c.is_finite() && merit_c < merit {
                    w = cand;
                    v = vc;
                    raw = rawc;
                    gamma = gammac;
                    g = gc;
                    accepted = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !accepted {
                return Err(Error::SolverFailure {
                    residual: gnorm,
                    iterations,
                });
            }
        }
        let gnorm = inf_norm(&g);
        let vmax = v.iter().cloned().fold(0.0, f64::max).max(1e-300);
        if gnorm <= NEWTON_REL_TOL * bn * vmax {
            Ok((v, gnorm, iterations))
        } else {
            Err(Error::SolverFailure {
                residual: gnorm,
                iterations,
            })
        }
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

/// Collocation residual of the profile equation on the profile's own grid:
/// beta [N P + r P'] - r^(-ps) * (folded kernel integral), with P' by
/// centered differences. Zero (to solver tolerance) on solved profiles; the
/// two cells nearest each boundary feel the one-sided stencils and the
/// extension splices, so callers judge convergence on the interior.
pub fn profile_residual(profile: &Profile) -> Result<Vec<f64>> {
    let system = RadialSystem::build(&profile.r_grid, profile.params)?;
    Ok(system.residual(&profile.values, profile.tail_exponent))
}

/// Solves the profile equation on the standard radial grid, normalized to
/// `target_mass`. Damped Newton in log variables with an analytic Jacobian
/// (tail-fit feedback included) and a mass-constraint gauge row, started
/// from a smooth monotone bump with the analytic far-field exponent; the
/// returned profile satisfies the collocation system to NEWTON_REL_TOL
/// relative residual.
pub fn solve_profile(params: &ProfileParams, target_mass: f64) -> Result<Profile> {
    if !target_mass.is_finite() || target_mass <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "target mass must be positive and finite, got {target_mass}"
        )));
    }
    let grid = standard_radial_grid();
    let system = RadialSystem::build(&grid, *params)?;

    // Initial guess with the analytic far-field exponent built in, scaled to
    // the target mass (mass is linear in amplitude).
    let n = params.n as f64;
    let decay = 0.5 * (n + params.ps());
    let mut v: Vec<f64> = grid.iter().map(|r| (1.0 + r * r).powf(-decay)).collect();
    let gamma0 = system.tail_fit(&v);
    let mass0 = system.gauge_mass(&v, gamma0);
    if !(mass0.is_finite() && mass0 > 0.0) {
        return Err(Error::SolverFailure {
            residual: f64::INFINITY,
            iterations: 0,
        });
    }
    let scale = target_mass / mass0;
    v.iter_mut().for_each(|x| *x *= scale);

    let (solved, _, _) = system.newton_profile(v, target_mass)?;
    Profile::new(*params, grid, solved)
}

/// Discrepancy between the radial flow and the self-similar ansatz: starts
/// from u(r, t0) = t0^(-N beta) P(r t0^(-beta)), advances the flow
/// u_t = -I[u] over [t0, t0 + delta] by implicit Euler substeps, and returns
/// the relative L1 distance (radial measure) between the evolved state and
/// the ansatz at t0 + delta. Small values mean the profile really does
/// generate a self-similar solution of the flow.
pub fn selfsimilar_consistency(profile: &Profile, t0: f64, delta: f64) -> Result<f64> {
    if !t0.is_finite() || t0 <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "consistency check needs t0 > 0, got {t0}"
        )));
    }
    if !delta.is_finite() || delta <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "consistency check needs delta > 0, got {delta}"
        )));
    }
    let params = profile.params;
    let beta = params.beta();
    let nb = params.n as f64 * beta;
    let grid = &profile.r_grid;
    let m = grid.len();
    let system = RadialSystem::build(grid, params)?;

    let ansatz = |t: f64| -> Vec<f64> {
        let amp = t.powf(-nb);
        let shift = t.powf(-beta);
        grid.iter().map(|r| amp * profile.value_at(r * shift)).collect()
    };

    let mut u = ansatz(t0);
    let dt = delta / CONSISTENCY_SUBSTEPS as f64;
    for _ in 0..CONSISTENCY_SUBSTEPS {
        u = implicit_radial_step(&system, &u, dt)?;
    }

    let target = ansatz(t0 + delta);
    let n = params.n as f64;
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..m {
        let cell = match i {
            0 => 0.5 * (grid[1] - grid[0]),
            _ if i == m - 1 => 0.5 * (grid[m - 1] - grid[m - 2]),
            _ => 0.5 * (grid[i + 1] - grid[i - 1]),
        };
        let w = grid[i].powf(n - 1.0) * cell;
        num += (u[i] - target[i]).abs() * w;
        den += target[i].abs() * w;
    }
    if den <= 0.0 {
        return Err(Error::InvalidParameter(
            "consistency check needs a nonzero ansatz on the grid".into(),
        ));
    }
    Ok(num / den)
}

/// One implicit Euler substep of u_t = -I[u]: solves w + dt I[w] = u by
/// damped Newton with the analytic operator Jacobian.
fn implicit_radial_step(system: &RadialSystem, u: &[f64], dt: f64) -> Result<Vec<f64>> {
    let m = u.len();
    let umax = u.iter().cloned().fold(0.0, f64::max);
    let tol = 1e-11 * (1.0 + umax);
    let mut w = u.to_vec();
    for iterations in 1..=25 {
        let gamma = system.tail_fit(&w);
        let apply = system.apply(&w, gamma);
        let res: Vec<f64> = (0..m).map(|i| w[i] - u[i] + dt * apply[i]).collect();
        let rnorm = inf_norm(&res);
        if rnorm <= tol {
            return Ok(w);
        }
        let mut jac = system.apply_jacobian(&w, gamma);
        jac *= dt;
        for i in 0..m {
            jac[(i, i)] += 1.0;
        }
        let rhs = DVector::from_iterator(m, res.iter().map(|x| -x));
        let delta = jac.lu().solve(&rhs).ok_or(Error::StepFailure {
            residual: rnorm,
            iterations,
        })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        while lambda >= 1e-6 {
            let cand: Vec<f64> = w
                .iter()
                .zip(delta.iter())
                .map(|(wi, di)| (wi + lambda * di).max(0.0))
                .collect();
            let gamma_c = system.tail_fit(&cand);
            let apply_c = system.apply(&cand, gamma_c);
            let res_c: Vec<f64> = (0..m).map(|i| cand[i] - u[i] + dt * apply_c[i]).collect();
            if inf_norm(&res_c) < rnorm {
                w = cand;
                accepted = true;
                break;
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::StepFailure {
                residual: rnorm,
                iterations,
            });
        }
    }
    let gamma = system.tail_fit(&w);
    let apply = system.apply(&w, gamma);
    let res: Vec<f64> = (0..m).map(|i| w[i] - u[i] + dt * apply[i]).collect();
    let rnorm = inf_norm(&res);
    if rnorm <= tol {
        Ok(w)
    } else {
        Err(Error::StepFailure {
            residual: rnorm,
            iterations: 25,
        })
    }
}
