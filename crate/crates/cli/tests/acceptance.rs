//! Acceptance gate for the whole laboratory. Thirteen criteria, each
//! printed as one PASS/FAIL line with its measured numbers and pinned
//! tolerance; the process exits nonzero if any criterion fails. Criteria
//! that depend on an earlier one's output (the no-extinction horizon, the
//! shared approximation ladder) consume it through explicit shared state,
//! so the file reads top to bottom like the checklist it is.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fplab_core::algebra::{check_inequalities, TruncationLevel};
use fplab_core::diagnostics::{
    default_extinction_threshold, detect_extinction, distribution_function, entropy_residual,
    entropy_tail, estimate_sobolev_constant, extinction_bound, lp_norm, positivity_check,
    standard_test_functions, trajectory_gagliardo, w_s1q_exponent, ExtinctionVariant,
};
use fplab_core::evolution::{
    approximation_ladder, evolve, stationary_solve, ProblemSpec, Reaction, SpaceFn,
    StepperOptions, Trajectory,
};
use fplab_core::grid_operator::{build_kernel_table, Field, FracParams, GridDomain};
use fplab_core::kernel_radial::{angular_kernel, sphere_measure, AngularKernelSpec};
use fplab_core::selfsimilar::{
    profile_residual, selfsimilar_consistency, solve_profile, ProfileParams,
};

// ---------------------------------------------------------------------------
// Reporting scaffold.

struct Report {
    failures: usize,
}

impl Report {
    fn run(&mut self, idx: usize, title: &str, f: impl FnOnce() -> Result<String, String>) {
        let started = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f));
        let elapsed = started.elapsed().as_secs_f64();
        match outcome {
            Ok(Ok(detail)) => {
                println!("[{idx:>2}/13] PASS {title}: {detail} [{elapsed:.1}s]");
            }
            Ok(Err(reason)) => {
                self.failures += 1;
                println!("[{idx:>2}/13] FAIL {title}: {reason} [{elapsed:.1}s]");
            }
            Err(panic) => {
                self.failures += 1;
                let msg = panic
                    .downcast_ref::<String>()
                    .map(String::as_str)
                    .or_else(|| panic.downcast_ref::<&str>().copied())
                    .unwrap_or("opaque panic");
                println!("[{idx:>2}/13] FAIL {title}: panicked: {msg} [{elapsed:.1}s]");
            }
        }
    }
}

fn es(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// ---------------------------------------------------------------------------
// Shared problem fixtures.

fn interval(m: usize) -> Result<GridDomain, String> {
    GridDomain::new(-1.0, 1.0, m).map_err(es)
}

fn fast_params(p: f64) -> Result<FracParams, String> {
    FracParams::new(p, 0.5, 1).map_err(es)
}

/// Smooth bump supported on (center - radius, center + radius), peak 1.
fn bump_at(x: f64, center: f64, radius: f64) -> f64 {
    let z = (x - center) / radius;
    if z.abs() < 1.0 {
        (1.0 - 1.0 / (1.0 - z * z)).exp()
    } else {
        0.0
    }
}

/// The domain-filling bump rescaled so its discrete L2 norm is `target`.
fn normalized_bump(grid: &GridDomain, target: f64) -> Result<SpaceFn, String> {
    let raw = Field::from_fn(grid, 0.0, |x| bump_at(x, 0.0, 1.0)).map_err(es)?;
    let norm = lp_norm(&raw, grid, 2.0).map_err(es)?;
    let factor = target / norm;
    Ok(Arc::new(move |x| factor * bump_at(x, 0.0, 1.0)))
}

fn zero_source() -> fplab_core::evolution::SpaceTimeFn {
    Arc::new(|_, _| 0.0)
}

fn spike() -> SpaceFn {
    Arc::new(|x: f64| x.abs().powf(-0.5))
}

fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let ratio = hi / lo;
    (0..count)
        .map(|i| lo * ratio.powf(i as f64 / (count - 1) as f64))
        .collect()
}

/// Ladder runs shared by criteria 6-8.
struct LadderData {
    spec: ProblemSpec,
    levels: [u32; 3],
    trajs: Vec<Trajectory>,
    grid: GridDomain,
    params: FracParams,
}

// ---------------------------------------------------------------------------
// Criteria.

/// 1. Per-step discrete energy identity at p in {1.5, 2, 2.5}, s = 0.5,
///    N = 1, f = 0, M = 128: |residual| <= 1e-8 * scale at every step.
fn c01_energy_identity() -> Result<String, String> {
    let mut worst = 0.0f64;
    for &p in &[1.5, 2.0, 2.5] {
        let grid = interval(128)?;
        let params = fast_params(p)?;
        let initial = normalized_bump(&grid, 1.0)?;
        let spec =
            ProblemSpec::new(params, grid, 0.05, initial, zero_source()).map_err(es)?;
        let traj = evolve(&spec, &StepperOptions::implicit(1e-3)).map_err(es)?;
        if traj.step_stats.is_empty() {
            return Err(format!("p = {p}: no steps recorded"));
        }
        for (k, st) in traj.step_stats.iter().enumerate() {
            let tol = 1e-8 * st.energy_scale;
            if st.energy_residual.abs() > tol {
                return Err(format!(
                    "p = {p}, step {k}: |energy residual| = {:.3e} > 1e-8 * scale = {:.3e}",
                    st.energy_residual.abs(),
                    tol
                ));
            }
            if st.energy_scale > 0.0 {
                worst = worst.max(st.energy_residual.abs() / st.energy_scale);
            }
        }
    }
    Ok(format!(
        "max |residual|/scale = {worst:.2e} across p in {{1.5, 2, 2.5}} (tol 1e-8)"
    ))
}

/// 2. Finite-time extinction for p = 1.5 from the unit-L2 bump, with
///    T_num <= 1.1 * closed-form bound, in at most 2 minutes.
fn c02_extinction(t_num_out: &mut Option<f64>) -> Result<String, String> {
    let started = Instant::now();
    let grid = interval(128)?;
    let params = fast_params(1.5)?;
    let initial = normalized_bump(&grid, 1.0)?;
    let u0 = Field::from_fn(&grid, 0.0, |x| initial(x)).map_err(es)?;

    let sobolev = estimate_sobolev_constant(&grid, &params).map_err(es)?;
    let bound = extinction_bound(&u0, &params, &grid, sobolev.value, ExtinctionVariant::L2)
        .map_err(es)?;

    let spec = ProblemSpec::new(params, grid.clone(), 1.15 * bound, initial, zero_source())
        .map_err(es)?;
    let traj = evolve(&spec, &StepperOptions::implicit(2e-3)).map_err(es)?;
    let threshold = default_extinction_threshold(&u0, &grid).map_err(es)?;
    let record = detect_extinction(&traj, &grid, threshold).map_err(es)?;

    if !record.extinct {
        return Err(format!(
            "not extinct by t = {:.3} (bound {bound:.3})",
            1.15 * bound
        ));
    }
    let t_num = record.t_num.expect("extinct implies a time");
    if t_num > 1.1 * bound {
        return Err(format!(
            "T_num = {t_num:.4} exceeds 1.1 * bound = {:.4}",
            1.1 * bound
        ));
    }
    let elapsed = started.elapsed().as_secs_f64();
    if elapsed > 120.0 {
        return Err(format!("runtime {elapsed:.0}s exceeds the 2-minute budget"));
    }
    *t_num_out = Some(t_num);
    Ok(format!(
        "T_num = {t_num:.4} <= 1.1 * bound = {:.4} (S_h = {:.3})",
        1.1 * bound,
        sobolev.value
    ))
}

/// 3. No extinction for p = 2.5 from the same data over ten times the
///    fast-diffusion extinction time; the L2 norm stays strictly positive.
fn c03_no_extinction(t_num_fast: f64) -> Result<String, String> {
    let grid = interval(128)?;
    let params = fast_params(2.5)?;
    let initial = normalized_bump(&grid, 1.0)?;
    let u0 = Field::from_fn(&grid, 0.0, |x| initial(x)).map_err(es)?;
    let t_final = 10.0 * t_num_fast;
    let spec =
        ProblemSpec::new(params, grid.clone(), t_final, initial, zero_source()).map_err(es)?;
    let traj = evolve(&spec, &StepperOptions::implicit(2e-3)).map_err(es)?;
    let threshold = default_extinction_threshold(&u0, &grid).map_err(es)?;
    let record = detect_extinction(&traj, &grid, threshold).map_err(es)?;
    if record.extinct {
        return Err(format!(
            "reported extinct at t = {:?} although p = 2.5",
            record.t_num
        ));
    }
    let min_norm = record
        .norm_trace
        .iter()
        .fold(f64::INFINITY, |m, (_, n)| m.min(*n));
    if min_norm <= 0.0 {
        return Err(format!("L2 norm hit {min_norm:.3e} (must stay positive)"));
    }
    Ok(format!(
        "not extinct over [0, {t_final:.3}]; min |u|_2 = {min_norm:.3e} > 0"
    ))
}

/// 4. Infinite speed of propagation: data supported on (-1, 0), one
///    implicit step, every node strictly above 1e-14 * sup |u0|.
fn c04_propagation() -> Result<String, String> {
    let grid = interval(128)?;
    let params = fast_params(1.5)?;
    let initial: SpaceFn = Arc::new(|x| bump_at(x, -0.5, 0.5));
    let dt = 1e-3;
    let spec = ProblemSpec::new(params, grid, dt, initial, zero_source()).map_err(es)?;
    let traj = evolve(&spec, &StepperOptions::implicit(dt)).map_err(es)?;
    if traj.fields.len() < 2 {
        return Err("no step recorded".into());
    }
    let sup0 = traj.fields[0].sup_norm();
    let floor = 1e-14 * sup0;
    let min_after = positivity_check(&traj, 1).map_err(es)?;
    if min_after <= floor {
        return Err(format!(
            "min after one step = {min_after:.3e} <= 1e-14 * sup |u0| = {floor:.3e}"
        ));
    }
    Ok(format!(
        "min after one step = {min_after:.3e} > 1e-14 * sup |u0| = {floor:.3e}"
    ))
}

/// 5. Distribution-function decay for spike data |x|^(-1/2): fitted
///    log-log slope over the mid-range window <= -(1.25 - 0.15).
fn c05_marcinkiewicz() -> Result<String, String> {
    let grid = interval(160)?;
    let params = fast_params(1.5)?;
    let spec =
        ProblemSpec::new(params, grid.clone(), 0.5, spike(), zero_source()).map_err(es)?;
    let traj = evolve(&spec, &StepperOptions::implicit(1e-3)).map_err(es)?;
    let ks = logspace(0.1, 100.0, 25);
    let dist = distribution_function(&traj, &grid, &ks).map_err(es)?;
    let target = -(1.25 - 0.15);
    if dist.fitted_slope > target {
        return Err(format!(
            "fitted slope {:.3} > {target:.3} (window [{:.3}, {:.3}])",
            dist.fitted_slope, dist.fit_window.0, dist.fit_window.1
        ));
    }
    Ok(format!(
        "fitted slope {:.3} <= {target:.3} (window [{:.3}, {:.3}])",
        dist.fitted_slope, dist.fit_window.0, dist.fit_window.1
    ))
}

/// 6. Approximation-ladder convergence on spike data, levels (8, 16, 32):
///    every pair obeys the closed-form Cauchy bound, and the trajectories
///    increase with the level (componentwise, slack 1e-8).
fn c06_ladder(out: &mut Option<LadderData>) -> Result<String, String> {
    let grid = interval(160)?;
    let params = fast_params(1.5)?;
    let spec =
        ProblemSpec::new(params, grid.clone(), 1.0, spike(), zero_source()).map_err(es)?;
    let levels = [8u32, 16, 32];
    let trajs = approximation_ladder(&spec, &levels).map_err(es)?;

    let mut pair_details = Vec::new();
    for i in 0..levels.len() {
        for j in (i + 1)..levels.len() {
            let data_gap =
                fplab_core::diagnostics::ladder_data_gap(&spec, levels[i], levels[j], &trajs[i].times)
                    .map_err(es)?;
            let (gap, bound) =
                fplab_core::diagnostics::cauchy_gap(&trajs[i], &trajs[j], &grid, data_gap)
                    .map_err(es)?;
            if gap > bound {
                return Err(format!(
                    "levels ({}, {}): gap {gap:.3e} > bound {bound:.3e}",
                    levels[i], levels[j]
                ));
            }
            pair_details.push(format!(
                "({},{}): {gap:.1e}<={bound:.1e}",
                levels[i], levels[j]
            ));
        }
    }

    for w in trajs.windows(2) {
        for (fl, fh) in w[0].fields.iter().zip(&w[1].fields) {
            for (a, b) in fl.values.iter().zip(&fh.values) {
                if *a > *b + 1e-8 {
                    return Err(format!(
                        "monotonicity violated: lower-level value {a:.6e} > higher {b:.6e} + 1e-8"
                    ));
                }
            }
        }
    }

    *out = Some(LadderData {
        spec,
        levels,
        trajs,
        grid,
        params,
    });
    Ok(format!(
        "all pairs within bound [{}]; u_8 <= u_16 <= u_32 up to 1e-8",
        pair_details.join(", ")
    ))
}

/// 7. Entropy conditions on the level-32 ladder run: far-range tail
///    nonincreasing over h in {1, 2, 4, 8}; truncation inequality satisfied
///    for the full test-function library at k in {0.5, 1, 2}.
fn c07_entropy(ladder: &LadderData) -> Result<String, String> {
    let traj = &ladder.trajs[2];
    let spec32 = ladder
        .spec
        .clone()
        .with_ladder_level(ladder.levels[2])
        .map_err(es)?;
    let table = build_kernel_table(&ladder.grid, &ladder.params).map_err(es)?;

    let mut tails = Vec::new();
    for &h in &[1.0, 2.0, 4.0, 8.0] {
        tails.push(entropy_tail(traj, h, &table, &ladder.params).map_err(es)?);
    }
    for w in tails.windows(2) {
        if w[1] > w[0] {
            return Err(format!("entropy tail increased: {tails:?}"));
        }
    }

    let library = standard_test_functions(traj, &ladder.grid).map_err(es)?;
    let mut checks = 0usize;
    for &k in &[0.5, 1.0, 2.0] {
        let level = TruncationLevel::new(k).map_err(es)?;
        for v in &library {
            let check = entropy_residual(traj, v, level, &spec32, &table).map_err(es)?;
            if !check.satisfied {
                return Err(format!(
                    "entropy inequality violated at k = {k}, v = {}: lhs {:.6e} > rhs {:.6e} + tol {:.1e}",
                    check.test_function_id, check.lhs, check.rhs, check.tol
                ));
            }
            checks += 1;
        }
    }
    Ok(format!(
        "tail nonincreasing over h in {{1,2,4,8}} ({:.2e} -> {:.2e}); {checks} entropy checks satisfied",
        tails[0],
        tails[tails.len() - 1]
    ))
}

/// 8. Uniform Gagliardo regularity across ladder levels: the space-time
///    W^(s1,q) functional at q = 0.8 p2, s1 = 0.8 s grows by at most 50%
///    from level 8 to level 32.
fn c08_gagliardo(ladder: &LadderData) -> Result<String, String> {
    let q = 0.8 * w_s1q_exponent(&ladder.params);
    let s1 = 0.8 * ladder.params.s();
    let g_lo = trajectory_gagliardo(&ladder.trajs[0], &ladder.grid, s1, q).map_err(es)?;
    let g_hi = trajectory_gagliardo(&ladder.trajs[2], &ladder.grid, s1, q).map_err(es)?;
    if g_lo <= 0.0 {
        return Err(format!("degenerate level-8 functional: {g_lo:.3e}"));
    }
    let ratio = g_hi / g_lo;
    if ratio > 1.5 {
        return Err(format!(
            "level-32/level-8 ratio = {ratio:.3} > 1.5 (values {g_hi:.4e} / {g_lo:.4e})"
        ));
    }
    Ok(format!(
        "level-32/level-8 ratio = {ratio:.3} <= 1.5 (q = {q:.3}, s1 = {s1:.2})"
    ))
}

/// 9. Concave-reaction dichotomy: (a) small data with p - 1 < q_r <= 1 go
///    extinct; (b) with q_r < p - 1 the run persists and lands on the
///    stationary state within 0.1% sup-norm error.
fn c09_concave_dichotomy() -> Result<String, String> {
    // (a) p = 1.5, q_r = 0.8, data 100x below the smallness threshold.
    let grid = interval(64)?;
    let params = fast_params(1.5)?;
    let sobolev = estimate_sobolev_constant(&grid, &params).map_err(es)?;
    let smallness = fplab_core::diagnostics::concave_smallness_threshold(
        &params,
        &grid,
        sobolev.value,
        1.0,
        0.8,
    )
    .map_err(es)?;
    let initial = normalized_bump(&grid, 0.01 * smallness)?;
    let u0 = Field::from_fn(&grid, 0.0, |x| initial(x)).map_err(es)?;
    let spec = ProblemSpec::new(params, grid.clone(), 3.0, initial, zero_source())
        .map_err(es)?
        .with_reaction(Reaction::new(1.0, 0.8).map_err(es)?);
    let traj = evolve(&spec, &StepperOptions::implicit(1e-3)).map_err(es)?;
    let threshold = default_extinction_threshold(&u0, &grid).map_err(es)?;
    let record = detect_extinction(&traj, &grid, threshold).map_err(es)?;
    if !record.extinct {
        return Err(format!(
            "(a) not extinct with |u0|_2 = {:.3e} = 0.01 * smallness threshold {smallness:.3e}",
            0.01 * smallness
        ));
    }
    let t_a = record.t_num.expect("extinct implies a time");

    // (b) p = 1.8, q_r = 0.3 < p - 1: no extinction, convergence to the
    // stationary state.
    let grid_b = interval(64)?;
    let params_b = FracParams::new(1.8, 0.5, 1).map_err(es)?;
    let initial_b: SpaceFn = Arc::new(|x| bump_at(x, 0.0, 1.0));
    let spec_b = ProblemSpec::new(params_b, grid_b.clone(), 200.0, initial_b, zero_source())
        .map_err(es)?
        .with_reaction(Reaction::new(1.0, 0.3).map_err(es)?);
    let opts_b = StepperOptions::implicit(0.05);
    let w = stationary_solve(&spec_b, &opts_b).map_err(es)?;
    let traj_b = evolve(&spec_b, &opts_b).map_err(es)?;
    let u0_b = Field::from_fn(&grid_b, 0.0, |x| bump_at(x, 0.0, 1.0)).map_err(es)?;
    let threshold_b = default_extinction_threshold(&u0_b, &grid_b).map_err(es)?;
    let record_b = detect_extinction(&traj_b, &grid_b, threshold_b).map_err(es)?;
    if record_b.extinct {
        return Err("(b) reported extinct although q_r < p - 1".into());
    }
    let w_sup = w.sup_norm();
    let err = traj_b
        .last()
        .values
        .iter()
        .zip(&w.values)
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if err > 1e-3 * w_sup {
        return Err(format!(
            "(b) |u(T) - w|_inf = {err:.3e} > 1e-3 * |w|_inf = {:.3e}",
            1e-3 * w_sup
        ));
    }
    Ok(format!(
        "(a) extinct at t = {t_a:.3} under smallness; (b) persists, |u(T) - w|_inf = {err:.2e} <= {:.2e}",
        1e-3 * w_sup
    ))
}

/// 10. Angular kernel: K(0) equals the sphere measure to 1e-8 relative for
///     N in {2, 3, 4}, and the inversion identity K(1/sigma) =
///     sigma^(N - theta) K(sigma) holds to 1e-8 on 100 random sigma per
///     (N, theta) combination.
fn c10_kernel() -> Result<String, String> {
    let mut worst_zero = 0.0f64;
    let mut worst_inv = 0.0f64;
    for &n in &[2u32, 3, 4] {
        for &theta in &[-1.5, 0.5] {
            let spec = AngularKernelSpec::new(n, theta).map_err(es)?;
            let k0 = angular_kernel(0.0, &spec).map_err(es)?;
            let measure = sphere_measure(n);
            let rel = (k0 - measure).abs() / measure;
            if rel > 1e-8 {
                return Err(format!(
                    "K(0) off by {rel:.3e} relative at N = {n}, theta = {theta}"
                ));
            }
            worst_zero = worst_zero.max(rel);

            let mut rng = ChaCha8Rng::seed_from_u64(1000 + n as u64);
            for _ in 0..100 {
                // log-uniform in [1e-3, 0.99]: spans the kernel's decades
                // without touching the sigma = 1 blow-up.
                let t: f64 = rng.gen();
                let sigma = 1e-3 * (0.99f64 / 1e-3).powf(t);
                let k = angular_kernel(sigma, &spec).map_err(es)?;
                let k_inv = angular_kernel(1.0 / sigma, &spec).map_err(es)?;
                let predicted = sigma.powf(n as f64 - theta) * k;
                let rel = (k_inv - predicted).abs() / predicted.abs().max(f64::MIN_POSITIVE);
                if rel > 1e-8 {
                    return Err(format!(
                        "inversion off by {rel:.3e} at N = {n}, theta = {theta}, sigma = {sigma:.4e}"
                    ));
                }
                worst_inv = worst_inv.max(rel);
            }
        }
    }
    Ok(format!(
        "K(0) matches sphere measure (worst rel {worst_zero:.1e}); inversion worst rel {worst_inv:.1e} over 600 draws"
    ))
}

/// 11. Self-similar profile at p = 3, s = 0.5, N = 2: collocation residual
///     within 1e-4 of scale, strictly positive profile, short-time
///     self-similar consistency within 5%, all under 5 minutes.
fn c11_selfsimilar() -> Result<String, String> {
    let started = Instant::now();
    let params = ProfileParams::new(3.0, 0.5, 2).map_err(es)?;
    let profile = solve_profile(&params, 1.0).map_err(es)?;

    let residual = profile_residual(&profile).map_err(es)?;
    let vmax = profile.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = profile.beta() * 2.0 * vmax;
    let max_res = residual.iter().fold(0.0f64, |m, r| m.max(r.abs()));
    if max_res > 1e-4 * scale {
        return Err(format!(
            "residual {max_res:.3e} > 1e-4 * scale = {:.3e}",
            1e-4 * scale
        ));
    }
    if !profile.values().iter().all(|v| *v > 0.0) {
        return Err("profile is not strictly positive".into());
    }
    let consistency = selfsimilar_consistency(&profile, 1.0, 0.05).map_err(es)?;
    if consistency > 0.05 {
        return Err(format!(
            "self-similar consistency {consistency:.4} > 0.05"
        ));
    }
    let elapsed = started.elapsed().as_secs_f64();
    if elapsed > 300.0 {
        return Err(format!("runtime {elapsed:.0}s exceeds the 5-minute budget"));
    }
    Ok(format!(
        "residual {max_res:.2e} <= {:.2e}, positive, consistency {consistency:.3} <= 0.05",
        1e-4 * scale
    ))
}

/// 12. Elementary-inequality battery: zero violations over 1e6 samples for
///     every (p, alpha) in {1.2, 1.5, 2, 3} x {0.5, 1, 2}.
fn c12_inequalities() -> Result<String, String> {
    let mut combos = 0usize;
    for &p in &[1.2, 1.5, 2.0, 3.0] {
        for &alpha in &[0.5, 1.0, 2.0] {
            let report = check_inequalities(p, alpha, 1_000_000, 0).map_err(es)?;
            if report.violations != 0 {
                return Err(format!(
                    "{} violations at p = {p}, alpha = {alpha}",
                    report.violations
                ));
            }
            combos += 1;
        }
    }
    Ok(format!(
        "0 violations over {combos} x 1e6 samples ({{1.2, 1.5, 2, 3}} x {{0.5, 1, 2}})"
    ))
}

/// 13. Determinism: every golden run — all config files plus the three
///     flag-driven tools — reruns to byte-identical output files.
fn c13_determinism() -> Result<String, String> {
    let bin = env!("CARGO_BIN_EXE_fplab");
    let config_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/configs");

    let config_runs: &[(&str, &str)] = &[
        ("evolve", "evolve_bump.toml"),
        ("extinction", "extinction_bump.toml"),
        ("propagation", "propagation_halfbump.toml"),
        ("marcinkiewicz", "marcinkiewicz_spike.toml"),
        ("entropy-check", "entropy_ladder.toml"),
        ("sobolev", "sobolev_interval.toml"),
        ("stationary", "stationary_reaction.toml"),
    ];
    let flag_runs: &[&[&str]] = &[
        &["selfsimilar", "--p", "3", "--s", "0.5", "--N", "2", "--mass", "1"],
        &["kernel", "--N", "2", "--theta", "-1.5", "--sigma-grid", "0.01:100:40"],
        &["verify-inequalities", "--p", "1.5", "--alpha", "1", "--samples", "50000"],
    ];

    let mut runs: Vec<(String, Vec<String>)> = Vec::new();
    for (sub, file) in config_runs {
        let path = config_dir.join(file);
        runs.push((
            file.to_string(),
            vec![
                sub.to_string(),
                "--config".into(),
                path.to_str().expect("utf-8 path").into(),
            ],
        ));
    }
    for args in flag_runs {
        runs.push((
            args[0].to_string(),
            args.iter().map(|s| s.to_string()).collect(),
        ));
    }

    let mut files_compared = 0usize;
    for (name, args) in &runs {
        let mut dirs: Vec<tempfile::TempDir> = Vec::new();
        for _ in 0..2 {
            let dir = tempfile::tempdir().map_err(es)?;
            let output = Command::new(bin)
                .args(args)
                .args(["--seed", "5", "--plot"])
                .args(["--output-dir", dir.path().to_str().expect("utf-8 path")])
                .output()
                .map_err(es)?;
            if !output.status.success() {
                return Err(format!(
                    "golden run {name} failed: {}",
                    String::from_utf8_lossy(&output.stderr)
                ));
            }
            dirs.push(dir);
        }
        let list = |dir: &Path| -> Result<Vec<PathBuf>, String> {
            let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
                .map_err(es)?
                .map(|entry| entry.map(|e| PathBuf::from(e.file_name())))
                .collect::<Result<_, _>>()
                .map_err(es)?;
            names.sort();
            Ok(names)
        };
        let names_a = list(dirs[0].path())?;
        let names_b = list(dirs[1].path())?;
        if names_a != names_b {
            return Err(format!("golden run {name}: file sets differ"));
        }
        if names_a.is_empty() {
            return Err(format!("golden run {name}: produced no files"));
        }
        for file in &names_a {
            let a = std::fs::read(dirs[0].path().join(file)).map_err(es)?;
            let b = std::fs::read(dirs[1].path().join(file)).map_err(es)?;
            if a != b {
                return Err(format!(
                    "golden run {name}: {} differs between reruns",
                    file.display()
                ));
            }
            files_compared += 1;
        }
    }
    Ok(format!(
        "{} golden runs, {files_compared} files byte-identical across reruns",
        runs.len()
    ))
}

// ---------------------------------------------------------------------------

fn main() {
    println!("acceptance: 13 criteria, one line each\n");
    let mut report = Report { failures: 0 };

    report.run(1, "per-step discrete energy identity", c01_energy_identity);

    let mut t_num_fast: Option<f64> = None;
    report.run(2, "finite-time extinction within the closed-form bound", || {
        c02_extinction(&mut t_num_fast)
    });
    report.run(3, "no extinction in the slow-diffusion regime", || {
        let t = t_num_fast.ok_or("skipped: criterion 2 did not produce T_num")?;
        c03_no_extinction(t)
    });

    report.run(4, "infinite speed of propagation after one step", c04_propagation);
    report.run(5, "distribution-function decay slope", c05_marcinkiewicz);

    let mut ladder: Option<LadderData> = None;
    report.run(6, "approximation-ladder Cauchy bound and monotonicity", || {
        c06_ladder(&mut ladder)
    });
    report.run(7, "entropy tail and truncation inequalities", || {
        let data = ladder.as_ref().ok_or("skipped: criterion 6 did not build the ladder")?;
        c07_entropy(data)
    });
    report.run(8, "uniform Gagliardo bound across ladder levels", || {
        let data = ladder.as_ref().ok_or("skipped: criterion 6 did not build the ladder")?;
        c08_gagliardo(data)
    });

    report.run(9, "concave-reaction dichotomy", c09_concave_dichotomy);
    report.run(10, "angular kernel normalization and inversion", c10_kernel);
    report.run(11, "self-similar profile (p = 3, s = 0.5, N = 2)", c11_selfsimilar);
    report.run(12, "elementary-inequality battery", c12_inequalities);
    report.run(13, "golden-config determinism", c13_determinism);

    println!();
    if report.failures == 0 {
        println!("acceptance: 13/13 criteria passed");
    } else {
        println!("acceptance: {} of 13 criteria FAILED", report.failures);
        std::process::exit(1);
    }
}
