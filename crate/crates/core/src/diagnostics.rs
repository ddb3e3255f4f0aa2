//! Measurement instruments over computed trajectories: Lebesgue norms,
//! distribution-function decay, weak and entropy residuals, extinction
//! detection with its closed-form bounds, positivity propagation, Cauchy
//! gaps between approximation levels, and discrete Sobolev-constant
//! estimation. Everything here is read-only over immutable trajectories.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::algebra::{monotone_pairing_constant, primitive_theta, truncate, TruncationLevel};
use crate::error::{Error, Result};
use crate::evolution::{reaction_values, ProblemSpec, SpaceTimeFn, Trajectory};
use crate::grid_operator::{
    apply_operator, build_kernel_table, energy_pairing, gagliardo_seminorm, Field, FracParams,
    GridDomain, KernelTable,
};

/// Discrete Lebesgue norm (sum |u_i|^r h)^(1/r); pass `f64::INFINITY` for
/// the sup norm. Exponents below 1 are rejected (not a norm there).
pub fn lp_norm(u: &Field, grid: &GridDomain, r: f64) -> Result<f64> {
    if u.len() != grid.m() {
        return Err(Error::ShapeMismatch {
            expected: grid.m(),
            got: u.len(),
        });
    }
    if r.is_infinite() && r > 0.0 {
        return Ok(u.sup_norm());
    }
    if !r.is_finite() || r < 1.0 {
        return Err(Error::InvalidParameter(format!(
            "norm exponent must be >= 1 or infinity, got {r}"
        )));
    }
    let h = grid.h();
    let sum: f64 = u.values.iter().map(|v| v.abs().powf(r) * h).sum();
    Ok(sum.powf(1.0 / r))
}

/// dt weights for right-endpoint time sums: entry k-1 weights fields[k].
fn step_sizes(times: &[f64]) -> Vec<f64> {
    times.windows(2).map(|w| w[1] - w[0]).collect()
}

fn check_traj_shape(traj: &Trajectory, m: usize) -> Result<()> {
    if traj.fields.is_empty() || traj.fields.len() != traj.times.len() {
        return Err(Error::InvalidParameter(
            "trajectory must carry one field per time".into(),
        ));
    }
    for f in &traj.fields {
        if f.len() != m {
            return Err(Error::ShapeMismatch {
                expected: m,
                got: f.len(),
            });
        }
    }
    Ok(())
}

/// Space-time distribution function samples with the fitted log-log slope.
#[derive(Debug, Clone, Serialize)]
pub struct DistributionSamples {
    pub ks: Vec<f64>,
    /// Space-time measure of {|u| > k} for each level.
    pub phis: Vec<f64>,
    pub fitted_slope: f64,
    /// First and last level that entered the fit.
    pub fit_window: (f64, f64),
}

/// Measures {|u| > k} in space-time and fits the decay slope.
///
/// Phi(k) = sum over nodes and steps of h * dt * 1{|u| > k} with the field
/// at the right endpoint of each step. The slope is least squares on
/// (log k, log Phi) over the mid-range window that drops the top and bottom
/// decade of sampled levels (boundary decades are dominated by boundedness
/// and measure saturation) and any level with Phi = 0.
pub fn distribution_function(
    traj: &Trajectory,
    grid: &GridDomain,
    ks: &[f64],
) -> Result<DistributionSamples> {
    check_traj_shape(traj, grid.m())?;
    if ks.is_empty() {
        return Err(Error::InvalidParameter("need at least one level".into()));
    }
    if ks.iter().any(|k| !k.is_finite() || *k <= 0.0) {
        return Err(Error::InvalidParameter("levels must be positive".into()));
    }
    if ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidParameter(
            "levels must be strictly increasing".into(),
        ));
    }
    let h = grid.h();
    let dts = step_sizes(&traj.times);
    let phis: Vec<f64> = ks
        .iter()
        .map(|&k| {
            dts.iter()
                .zip(traj.fields.iter().skip(1))
                .map(|(dt, f)| {
                    let count = f.values.iter().filter(|v| v.abs() > k).count();
                    count as f64 * h * dt
                })
                .sum()
        })
        .collect();

    let k_lo = ks[0] * 10.0;
    let k_hi = ks[ks.len() - 1] / 10.0;
    let pts: Vec<(f64, f64)> = ks
        .iter()
        .zip(&phis)
        .filter(|(k, phi)| **k >= k_lo && **k <= k_hi && **phi > 0.0)
        .map(|(k, phi)| (k.ln(), phi.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::FitFailure(format!(
            "fit window [{k_lo:.3e}, {k_hi:.3e}] holds {} usable levels, need 2",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom <= 0.0 {
        return Err(Error::FitFailure("degenerate abscissas in fit".into()));
    }
    let slope = (n * sxy - sx * sy) / denom;
    let fit_window = (pts[0].0.exp(), pts[pts.len() - 1].0.exp());
    Ok(DistributionSamples {
        ks: ks.to_vec(),
        phis,
        fitted_slope: slope,
        fit_window,
    })
}

/// Smooth space-time test function with its analytic time derivative.
pub struct TestFunction {
    pub value: SpaceTimeFn,
    pub time_derivative: SpaceTimeFn,
}

/// Defect of the weak space-time formulation on the recorded trajectory:
///   -sum u phi_t h dt + sum_t pairing(u(t), phi(t)) dt - sum f phi h dt,
/// with every time sum taken at right endpoints, matching the stepper. The
/// reaction term (when present) enters the source with the same time level
/// the stepper used. For smooth data the residual shrinks linearly in dt.
pub fn weak_residual(
    traj: &Trajectory,
    phi: &TestFunction,
    spec: &ProblemSpec,
    table: &KernelTable,
) -> Result<f64> {
    check_traj_shape(traj, table.m())?;
    let grid = &spec.grid;
    if grid.m() != table.m() {
        return Err(Error::ShapeMismatch {
            expected: table.m(),
            got: grid.m(),
        });
    }
    let h = table.h();
    let dts = step_sizes(&traj.times);
    let mut residual = 0.0f64;
    for (k, dt) in dts.iter().enumerate() {
        let t = traj.times[k + 1];
        let u = &traj.fields[k + 1];
        let phi_field = Field::from_fn(grid, t, |x| (phi.value)(x, t))?;
        let mut source = spec.source_values(t);
        if let Some(re) = spec.reaction() {
            // explicit reaction reads the previous level, implicit the new
            let basis = if re.q_r() <= 1.0 {
                &traj.fields[k]
            } else {
                u
            };
            for (s, r) in source.iter_mut().zip(reaction_values(&re, basis)) {
                *s += r;
            }
        }
        let mut ut_phi_t = 0.0;
        let mut f_phi = 0.0;
        for i in 0..grid.m() {
            let x = grid.node(i);
            ut_phi_t += u.values[i] * (phi.time_derivative)(x, t) * h;
            f_phi += source[i] * phi_field.values[i] * h;
        }
        let pairing = energy_pairing(u, &phi_field, table, &spec.params)?;
        residual += dt * (-ut_phi_t + pairing - f_phi);
    }
    Ok(residual)
}

/// Bounded comparison function sampled on the trajectory's space-time grid;
/// its discrete time derivative is taken by backward differences, which is
/// exactly the convention that makes the entropy inequality hold for the
/// stepper's output.
#[derive(Debug, Clone)]
pub struct ComparisonTrajectory {
    pub id: String,
    /// values[k][i] = v(x_i, t_k), aligned with the trajectory's times.
    pub values: Vec<Vec<f64>>,
}

impl ComparisonTrajectory {
    pub fn new(id: impl Into<String>, values: Vec<Vec<f64>>) -> Result<Self> {
        let id = id.into();
        if values.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidTestFunction(format!(
                "comparison function '{id}' must be bounded (finite at every sample)"
            )));
        }
        Ok(ComparisonTrajectory { id, values })
    }

    pub fn zero(m: usize, steps: usize) -> Self {
        ComparisonTrajectory {
            id: "zero".into(),
            values: vec![vec![0.0; m]; steps],
        }
    }

    pub fn from_function(
        id: impl Into<String>,
        grid: &GridDomain,
        times: &[f64],
        v: impl Fn(f64, f64) -> f64,
    ) -> Result<Self> {
        let values = times
            .iter()
            .map(|&t| (0..grid.m()).map(|i| v(grid.node(i), t)).collect())
            .collect();
        ComparisonTrajectory::new(id, values)
    }

    /// v = T_level(u) along the given trajectory.
    pub fn truncation_of(traj: &Trajectory, level: TruncationLevel) -> Self {
        ComparisonTrajectory {
            id: format!("trunc-{}", level.get()),
            values: traj
                .fields
                .iter()
                .map(|f| f.values.iter().map(|&v| truncate(v, level)).collect())
                .collect(),
        }
    }

    pub fn sup(&self) -> f64 {
        self.values
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// The documented comparison-function library the entropy checks quantify
/// over: zero, a stationary spatial bump, the same bump under a time ramp,
/// and truncations of the solution itself at levels 1 and 2.
pub fn standard_test_functions(
    traj: &Trajectory,
    grid: &GridDomain,
) -> Result<Vec<ComparisonTrajectory>> {
    check_traj_shape(traj, grid.m())?;
    let center = 0.5 * (grid.node(0) + grid.node(grid.m() - 1));
    let half = 0.5 * grid.width();
    let bump = move |x: f64| {
        let z = (x - center) / half;
        if z.abs() < 1.0 {
            let c = (0.5 * std::f64::consts::PI * z).cos();
            c * c
        } else {
            0.0
        }
    };
    let t_final = *traj.times.last().expect("nonempty");
    let mut lib = vec![
        ComparisonTrajectory::zero(grid.m(), traj.times.len()),
        ComparisonTrajectory::from_function("bump", grid, &traj.times, |x, _| bump(x))?,
        ComparisonTrajectory::from_function("bump-ramp", grid, &traj.times, |x, t| {
            bump(x) * t / t_final
        })?,
    ];
    for level in [1.0, 2.0] {
        lib.push(ComparisonTrajectory::truncation_of(
            traj,
            TruncationLevel::new(level)?,
        ));
    }
    Ok(lib)
}

/// One assembled entropy inequality: lhs <= rhs + tol must hold for the
/// solution-as-limit-of-approximations against any bounded comparison
/// function.
#[derive(Debug, Clone, Serialize)]
pub struct EntropyCheck {
    pub k: f64,
    pub test_function_id: String,
    pub lhs: f64,
    pub rhs: f64,
    pub tol: f64,
    pub satisfied: bool,
}

/// Assembles the truncation entropy inequality at level k against v:
///
///   sum Theta_k(u - v)(T) h  -  sum_t v_t T_k(u - v) h dt
///     + sum_t pairing(u(t), T_k(u - v)(t)) dt
///   <=  sum Theta_k(u0 - v(0)) h  +  sum_t f T_k(u - v) h dt  (+ tol)
///
/// with v_t the backward difference. With that convention the inequality
/// is exact for the implicit stepper's output up to Newton defects: each
/// step tested with T_k(u - v) telescopes through the convexity bound
/// Theta_k(b) - Theta_k(a) <= T_k(b)(b - a). The recorded tol is 1e-3 of
/// the terms' magnitude, far above those defects.
pub fn entropy_residual(
    traj: &Trajectory,
    v: &ComparisonTrajectory,
    level: TruncationLevel,
    spec: &ProblemSpec,
    table: &KernelTable,
) -> Result<EntropyCheck> {
    check_traj_shape(traj, table.m())?;
    if spec.reaction().is_some() {
        return Err(Error::InvalidParameter(
            "entropy residual applies to the source-driven problem, not reaction runs".into(),
        ));
    }
    if v.values.len() != traj.fields.len() {
        return Err(Error::ShapeMismatch {
            expected: traj.fields.len(),
            got: v.values.len(),
        });
    }
    if v.values.iter().any(|row| row.len() != table.m()) {
        return Err(Error::ShapeMismatch {
            expected: table.m(),
            got: v.values.iter().map(|r| r.len()).find(|&l| l != table.m()).unwrap_or(0),
        });
    }
    if !v.sup().is_finite() {
        return Err(Error::InvalidTestFunction(format!(
            "comparison function '{}' is unbounded",
            v.id
        )));
    }
    let m = table.m();
    let h = table.h();
    let last = traj.fields.len() - 1;

    let theta_sum = |fi: &[f64], vi: &[f64]| -> f64 {
        fi.iter()
            .zip(vi)
            .map(|(u, w)| primitive_theta(u - w, level) * h)
            .sum()
    };
    let theta_end = theta_sum(&traj.fields[last].values, &v.values[last]);
    let theta_start = theta_sum(&traj.fields[0].values, &v.values[0]);

    let dts = step_sizes(&traj.times);
    let mut vt_term = 0.0f64;
    let mut nonlocal = 0.0f64;
    let mut source_term = 0.0f64;
    for (k, dt) in dts.iter().enumerate() {
        let u = &traj.fields[k + 1];
        let vk = &v.values[k + 1];
        let v_prev = &v.values[k];
        let tk: Vec<f64> = (0..m)
            .map(|i| truncate(u.values[i] - vk[i], level))
            .collect();
        for i in 0..m {
            let v_t = (vk[i] - v_prev[i]) / dt;
            vt_term += v_t * tk[i] * h * dt;
        }
        let tk_field = Field::new(tk.clone(), u.time)?;
        nonlocal += energy_pairing(u, &tk_field, table, &spec.params)? * dt;
        let f = spec.source_values(u.time);
        for i in 0..m {
            source_term += f[i] * tk[i] * h * dt;
        }
    }

    let lhs = theta_end - vt_term + nonlocal;
    let rhs = theta_start + source_term;
    let scale = theta_end.abs()
        + theta_start.abs()
        + vt_term.abs()
        + nonlocal.abs()
        + source_term.abs();
    let tol = 1e-3 * scale;
    Ok(EntropyCheck {
        k: level.get(),
        test_function_id: v.id.clone(),
        lhs,
        rhs,
        tol,
        satisfied: lhs <= rhs + tol,
    })
}

/// Space-time mass of |u(x,t) - u(y,t)|^(p-1) over the region where the
/// larger of the two values exceeds h_level + 1 while the smaller is below
/// h_level (or the signs differ), exterior pairs included. Must decay to 0
/// as h_level grows; identically 0 once h_level reaches the sup for bounded
/// runs.
pub fn entropy_tail(
    traj: &Trajectory,
    h_level: f64,
    table: &KernelTable,
    params: &FracParams,
) -> Result<f64> {
    check_traj_shape(traj, table.m())?;
    if !h_level.is_finite() || h_level < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "need h_level >= 0, got {h_level}"
        )));
    }
    let m = table.m();
    let h = table.h();
    let pm1 = params.p() - 1.0;
    let dts = step_sizes(&traj.times);
    let mut acc = 0.0f64;
    for (k, dt) in dts.iter().enumerate() {
        let u = &traj.fields[k + 1].values;
        let mut slab = 0.0f64;
        for i in 0..m {
            let ai = u[i].abs();
            for j in (i + 1)..m {
                let aj = u[j].abs();
                let in_region = ai.max(aj) >= h_level + 1.0
                    && (ai.min(aj) <= h_level || u[i] * u[j] < 0.0);
                if in_region {
                    // ordered pairs: both (i, j) and (j, i)
                    slab += 2.0 * (u[i] - u[j]).abs().powf(pm1) * table.weight(i, j) * h;
                }
            }
            if ai >= h_level + 1.0 {
                // pairs with the zero exterior, both orderings
                slab += 2.0 * ai.powf(pm1) * table.tail(i) * h;
            }
        }
        acc += slab * dt;
    }
    Ok(acc)
}

/// Outcome of extinction detection: the L2-norm trace, the first time the
/// norm falls below the threshold and stays there, and (when the caller
/// fills it in) the closed-form upper bound on the extinction time.
#[derive(Debug, Clone, Serialize)]
pub struct ExtinctionRecord {
    pub extinct: bool,
    pub t_num: Option<f64>,
    pub t_star_bound: Option<f64>,
    pub norm_trace: Vec<(f64, f64)>,
}

impl ExtinctionRecord {
    pub fn with_bound(mut self, bound: f64) -> Self {
        self.t_star_bound = Some(bound);
        self
    }
}

/// Default detection threshold 1e-10 * |u0|_2: below the Newton tolerance
/// floor, above roundoff.
pub fn default_extinction_threshold(u0: &Field, grid: &GridDomain) -> Result<f64> {
    Ok(1e-10 * lp_norm(u0, grid, 2.0)?)
}

/// Finds the first recorded time where |u(t)|_2 <= threshold with the norm
/// staying below it for every later recorded time; `extinct = false` when
/// no such time exists.
pub fn detect_extinction(
    traj: &Trajectory,
    grid: &GridDomain,
    threshold: f64,
) -> Result<ExtinctionRecord> {
    check_traj_shape(traj, grid.m())?;
    if !threshold.is_finite() || threshold <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "need threshold > 0, got {threshold}"
        )));
    }
    let mut norm_trace = Vec::with_capacity(traj.times.len());
    for (t, f) in traj.times.iter().zip(&traj.fields) {
        norm_trace.push((*t, lp_norm(f, grid, 2.0)?));
    }
    let last_above = norm_trace.iter().rposition(|(_, n)| *n > threshold);
    let t_num = match last_above {
        None => Some(traj.times[0]),
        Some(i) if i + 1 < norm_trace.len() => Some(traj.times[i + 1]),
        Some(_) => None,
    };
    Ok(ExtinctionRecord {
        extinct: t_num.is_some(),
        t_num,
        t_star_bound: None,
        norm_trace,
    })
}

/// Which decay estimate the extinction bound is computed from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ExtinctionVariant {
    /// L2 energy decay: needs 2N/(N+2s) <= p < 2.
    L2,
    /// L^(nu+1) decay with nu+1 = N(2-p)/(ps): needs 1 < p < 2N/(N+2s).
    Lnu,
}

/// Closed-form upper bound on the extinction time.
///
/// L2 variant: 2/((2-p)S) * |u0|_2^(2-p) * |Omega|^(p/2 - p/p*).
/// Lnu variant: 2/((2-p) c S) * |u0|_(nu+1)^(2-p), where c is the
/// monotone-pairing constant at alpha = nu (the decay ODE for the
/// L^(nu+1) norm carries it).
///
/// S is the caller's Sobolev constant; passing the discrete pairing
/// minimum (which is half the full double-integral constant) only enlarges
/// the bound, keeping the comparison conservative.
pub fn extinction_bound(
    u0: &Field,
    params: &FracParams,
    grid: &GridDomain,
    s_const: f64,
    variant: ExtinctionVariant,
) -> Result<f64> {
    if !s_const.is_finite() || s_const <= 0.0 {
        return Err(Error::InvalidParameter(format!(
            "need a positive Sobolev constant, got {s_const}"
        )));
    }
    let p = params.p();
    let n = params.n_eff() as f64;
    let s = params.s();
    let p_split = 2.0 * n / (n + 2.0 * s);
    match variant {
        ExtinctionVariant::L2 => {
            if !(p_split <= p && p < 2.0) {
                return Err(Error::InvalidParameter(format!(
                    "L2 variant needs 2N/(N+2s) = {p_split} <= p < 2, got p = {p}"
                )));
            }
            let pstar = params.critical_exponent()?;
            let norm = lp_norm(u0, grid, 2.0)?;
            let measure_exp = 0.5 * p - p / pstar;
            Ok(2.0 / ((2.0 - p) * s_const)
                * norm.powf(2.0 - p)
                * grid.width().powf(measure_exp))
        }
        ExtinctionVariant::Lnu => {
            if !(1.0 < p && p < p_split) {
                return Err(Error::InvalidParameter(format!(
                    "Lnu variant needs 1 < p < 2N/(N+2s) = {p_split}, got p = {p}"
                )));
            }
            let nu1 = n * (2.0 - p) / params.ps();
            let c = monotone_pairing_constant(p, nu1 - 1.0);
            let norm = lp_norm(u0, grid, nu1)?;
            Ok(2.0 / ((2.0 - p) * c * s_const) * norm.powf(2.0 - p))
        }
    }
}

/// Result of the Rayleigh-quotient minimization: the discrete Sobolev
/// constant and whether the winning start exhausted its iteration budget
/// while still descending (a converged start ended at a stationary point
/// or in a vanishing-decrease streak).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SobolevEstimate {
    pub value: f64,
    pub stagnated: bool,
}

const SOBOLEV_STARTS: usize = 8;
const SOBOLEV_SEED_BASE: u64 = 7001;
const SOBOLEV_MAX_ITERS: usize = 500;

/// Minimizes pairing(u, u) / |u|_r^p over nonzero grid fields by projected
/// gradient descent from 8 fixed-seed random starts, r the critical
/// exponent pN/(N - ps); at and beyond the critical order ps >= N the
/// limiting exponent is infinity and the sup norm is used. Deterministic.
pub fn estimate_sobolev_constant(grid: &GridDomain, params: &FracParams) -> Result<SobolevEstimate> {
    let r = if params.ps() < params.n_eff() as f64 {
        params.critical_exponent()?
    } else {
        f64::INFINITY
    };
    let table = build_kernel_table(grid, params)?;
    let m = grid.m();
    let p = params.p();
    let h = grid.h();

    let normalize = |values: Vec<f64>| -> Result<Field> {
        let f = Field::new(values, 0.0)?;
        let norm = lp_norm(&f, grid, r)?;
        if norm == 0.0 {
            return Err(Error::InvalidParameter("zero start field".into()));
        }
        Field::new(f.values.iter().map(|v| v / norm).collect(), 0.0)
    };
    let quotient = |u: &Field| -> Result<f64> { energy_pairing(u, u, &table, params) };

    let mut best: Option<(f64, bool)> = None;
    for start in 0..SOBOLEV_STARTS {
        let mut rng = ChaCha8Rng::seed_from_u64(SOBOLEV_SEED_BASE + start as u64);
        let raw: Vec<f64> = (0..m).map(|_| rng.gen::<f64>() - 0.5).collect();
        let mut u = normalize(raw)?;
        let mut q = quotient(&u)?;
        let mut eta = 0.1;
        let mut flat_streak = 0usize;
        let mut converged = false;
        for _ in 0..SOBOLEV_MAX_ITERS {
            let lu = apply_operator(&u, &table, params)?;
            let grad: Vec<f64> = lu.values.iter().map(|g| p * h * g).collect();
            let gsup = grad.iter().fold(0.0f64, |a, g| a.max(g.abs()));
            if gsup == 0.0 {
                converged = true;
                break;
            }
            let mut accepted = false;
            for _ in 0..40 {
                let step = eta / gsup;
                let cand: Vec<f64> = u
                    .values
                    .iter()
                    .zip(&grad)
                    .map(|(v, g)| v - step * g)
                    .collect();
                let cand = match normalize(cand) {
                    Ok(c) => c,
                    Err(_) => break,
                };
                let qc = quotient(&cand)?;
                if qc < q {
                    let drop = q - qc;
                    u = cand;
                    q = qc;
                    eta = (eta * 1.5).min(1e3);
                    accepted = true;
                    flat_streak = if drop <= 1e-12 * q.abs() {
                        flat_streak + 1
                    } else {
                        0
                    };
                    break;
                }
                eta *= 0.5;
            }
            if !accepted {
                // 40 halvings found no descent direction along -grad:
                // first-order stationary to machine precision (the
                // functional has kinks below p = 2, so this is the normal
                // landing spot there)
                converged = true;
                break;
            }
            if flat_streak >= 3 {
                converged = true;
                break;
            }
        }
        let candidate = (q, !converged);
        best = Some(match best {
            None => candidate,
            Some(b) if candidate.0 < b.0 => candidate,
            Some(b) => b,
        });
    }
    let (value, stagnated) = best.expect("at least one start");
    Ok(SobolevEstimate { value, stagnated })
}

/// Minimum of u over the (interior) grid nodes at the recorded time index.
/// For nonnegative compactly supported data this must turn strictly
/// positive after the first step: the diffusion reaches every point
/// instantly.
pub fn positivity_check(traj: &Trajectory, t_index: usize) -> Result<f64> {
    if t_index >= traj.fields.len() {
        return Err(Error::InvalidParameter(format!(
            "time index {t_index} out of range ({} recorded)",
            traj.fields.len()
        )));
    }
    Ok(traj.fields[t_index]
        .values
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(*v)))
}

/// Largest L1 distance over recorded times between two runs, with the
/// closed-form Cauchy bound (2 |Omega_T|)^(1/2) b^(1/2) + 2 b driven by the
/// data gap b.
pub fn cauchy_gap(
    traj_a: &Trajectory,
    traj_b: &Trajectory,
    grid: &GridDomain,
    data_gap: f64,
) -> Result<(f64, f64)> {
    check_traj_shape(traj_a, grid.m())?;
    check_traj_shape(traj_b, grid.m())?;
    if !data_gap.is_finite() || data_gap < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "need data_gap >= 0, got {data_gap}"
        )));
    }
    if traj_a.times.len() != traj_b.times.len()
        || traj_a
            .times
            .iter()
            .zip(&traj_b.times)
            .any(|(s, t)| (s - t).abs() > 1e-12 * (1.0 + t.abs()))
    {
        return Err(Error::InvalidParameter(
            "trajectories must share the time grid".into(),
        ));
    }
    let h = grid.h();
    let mut gap = 0.0f64;
    for (fa, fb) in traj_a.fields.iter().zip(&traj_b.fields) {
        let l1: f64 = fa
            .values
            .iter()
            .zip(&fb.values)
            .map(|(a, b)| (a - b).abs() * h)
            .sum();
        gap = gap.max(l1);
    }
    let t_final = *traj_a.times.last().expect("nonempty");
    let omega_t = grid.width() * t_final;
    let bound = (2.0 * omega_t).sqrt() * data_gap.sqrt() + 2.0 * data_gap;
    Ok((gap, bound))
}

/// L1 distance between the truncated data of two ladder levels:
/// |T_lo(u0) - T_hi(u0)|_L1 plus the space-time L1 gap of the truncated
/// sources over the recorded time grid.
pub fn ladder_data_gap(
    spec: &ProblemSpec,
    level_lo: u32,
    level_hi: u32,
    times: &[f64],
) -> Result<f64> {
    let lo = spec.clone().with_ladder_level(level_lo)?;
    let hi = spec.clone().with_ladder_level(level_hi)?;
    let h = spec.grid.h();
    let u0_lo = lo.initial_field()?;
    let u0_hi = hi.initial_field()?;
    let mut gap: f64 = u0_lo
        .values
        .iter()
        .zip(&u0_hi.values)
        .map(|(a, b)| (a - b).abs() * h)
        .sum();
    for (k, dt) in step_sizes(times).iter().enumerate() {
        let t = times[k + 1];
        let f_lo = lo.source_values(t);
        let f_hi = hi.source_values(t);
        gap += f_lo
            .iter()
            .zip(&f_hi)
            .map(|(a, b)| (a - b).abs() * h * dt)
            .sum::<f64>();
    }
    Ok(gap)
}

/// Critical initial L2 norm below which the concave-reaction run
/// (p - 1 < q_r <= 1) extinguishes: dissipation S |u|_(p*)^p dominates the
/// reaction lambda |u|^{q+1} once
///   |u0|_2 < [S |Omega|^(-e - (1-q)/2) / lambda]^(1/(q+1-p)),
/// e = p/2 - p/p*. Needs the fast-diffusion window 2N/(N+2s) < p < 2.
pub fn concave_smallness_threshold(
    params: &FracParams,
    grid: &GridDomain,
    s_const: f64,
    lambda: f64,
    q_r: f64,
) -> Result<f64> {
    let p = params.p();
    let n = params.n_eff() as f64;
    let s = params.s();
    let p_split = 2.0 * n / (n + 2.0 * s);
    if !(p > p_split && p < 2.0) {
        return Err(Error::InvalidParameter(format!(
            "smallness regime needs 2N/(N+2s) = {p_split} < p < 2, got p = {p}"
        )));
    }
    if !(q_r > p - 1.0 && q_r <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "smallness regime needs p - 1 < q_r <= 1, got q_r = {q_r}"
        )));
    }
    if !(lambda > 0.0) || !(s_const > 0.0) || !s_const.is_finite() {
        return Err(Error::InvalidParameter(
            "need positive lambda and Sobolev constant".into(),
        ));
    }
    let pstar = params.critical_exponent()?;
    let e = 0.5 * p - p / pstar;
    let base = s_const * grid.width().powf(-e - 0.5 * (1.0 - q_r)) / lambda;
    Ok(base.powf(1.0 / (q_r + 1.0 - p)))
}

/// Integrability exponent of the improved space regularity estimate:
/// p2 = (N(p-1) + ps)/(N + s); the trajectories carry a uniform bound in
/// W^(s1,q) for every q < p2, s1 < s.
pub fn w_s1q_exponent(params: &FracParams) -> f64 {
    let n = params.n_eff() as f64;
    (n * (params.p() - 1.0) + params.ps()) / (n + params.s())
}

/// Space-time Gagliardo functional (sum_t dt * seminorm(u(t); s1, q)^q)^(1/q)
/// over the recorded right-endpoint fields: the quantity the uniform ladder
/// regularity bound controls.
pub fn trajectory_gagliardo(
    traj: &Trajectory,
    grid: &GridDomain,
    s1: f64,
    q: f64,
) -> Result<f64> {
    check_traj_shape(traj, grid.m())?;
    let dts = step_sizes(&traj.times);
    let mut acc = 0.0f64;
    for (k, dt) in dts.iter().enumerate() {
        let sem = gagliardo_seminorm(&traj.fields[k + 1], grid, s1, q)?;
        acc += sem.powf(q) * dt;
    }
    Ok(acc.powf(1.0 / q))
}
