//! Experiment orchestration: builds the core objects a validated config
//! describes, runs the requested measurement, and serializes its results.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use fplab_core::algebra::{check_inequalities, TruncationLevel};
use fplab_core::diagnostics::{
    default_extinction_threshold, detect_extinction, distribution_function,
    entropy_residual, entropy_tail, estimate_sobolev_constant, extinction_bound, lp_norm,
    positivity_check, standard_test_functions, ExtinctionVariant,
};
use fplab_core::evolution::{
    evolve, stationary_solve, ProblemSpec, Reaction, StepperOptions, Trajectory,
};
use fplab_core::grid_operator::{build_kernel_table, Field, FracParams, GridDomain};
use fplab_core::kernel_radial::{angular_kernel, sphere_measure, AngularKernelSpec};
use fplab_core::selfsimilar::{
    profile_monotone_decay, profile_residual, solve_profile, ProfileParams,
};

use crate::config::{ConfigKind, RunConfig, SchemeChoice, StepperSection, VariantChoice};
use crate::errors::{core_err, validation, CliError};
use crate::output::{cell, sha256_hex, OutputWriter, PlotScale};

/// Flags shared by every subcommand.
pub struct GlobalOpts {
    pub output_dir: PathBuf,
    pub seed: u64,
    pub plot: bool,
}

/// Entry point for the config-driven experiment kinds.
pub fn run_config(kind: ConfigKind, config_path: &Path, g: &GlobalOpts) -> Result<(), CliError> {
    let (cfg, raw) = RunConfig::load(config_path)?;
    cfg.validate(kind)?;
    let mut out = OutputWriter::new(
        &g.output_dir,
        kind.name(),
        sha256_hex(&raw),
        g.seed,
        g.plot,
    )?;
    let inputs = serde_json::to_value(&cfg)
        .map_err(|e| CliError::Runtime(format!("config echo failed: {e}")))?;
    let results = match kind {
        ConfigKind::Evolve => run_evolve(&cfg, &mut out)?,
        ConfigKind::Extinction => run_extinction(&cfg, &mut out)?,
        ConfigKind::Propagation => run_propagation(&cfg, &mut out)?,
        ConfigKind::Marcinkiewicz => run_marcinkiewicz(&cfg, &mut out)?,
        ConfigKind::EntropyCheck => run_entropy_check(&cfg, &mut out)?,
        ConfigKind::Sobolev => run_sobolev(&cfg, &mut out)?,
        ConfigKind::Stationary => run_stationary(&cfg, &mut out)?,
    };
    out.write_summary(inputs, results)?;
    out.finish()
}

// ---------------------------------------------------------------------------
// Builders from config sections to core objects.

fn build_grid(cfg: &RunConfig) -> Result<GridDomain, CliError> {
    let d = &cfg.domain;
    GridDomain::new(d.x_left, d.x_right, d.m).map_err(core_err)
}

fn build_params(cfg: &RunConfig) -> Result<FracParams, CliError> {
    let p = &cfg.params;
    FracParams::new(p.p, p.s, p.n_eff).map_err(core_err)
}

fn stepper_options(st: &StepperSection) -> StepperOptions {
    let mut opts = match st.scheme {
        SchemeChoice::Implicit => StepperOptions::implicit(st.dt),
        SchemeChoice::Explicit => StepperOptions::explicit(st.dt),
    };
    if let Some(tol) = st.newton_tol {
        opts.newton_tol = tol;
    }
    if let Some(iters) = st.newton_max_iter {
        opts.newton_max_iter = iters;
    }
    if let Some(d) = st.damping {
        opts.damping = d;
    }
    if let Some(eps) = st.regularization_eps {
        opts.regularization_eps = Some(eps);
    }
    opts
}

/// Assembles the evolution problem: grid, parameters, resolved data
/// expressions, optional reaction. `t_final` is passed separately because
/// some kinds derive it (propagation always runs exactly one step).
fn build_spec(cfg: &RunConfig, t_final: f64) -> Result<(ProblemSpec, StepperOptions), CliError> {
    let grid = build_grid(cfg)?;
    let params = build_params(cfg)?;
    let st = cfg.stepper.as_ref().expect("validated: stepper present");
    let data = cfg.data.as_ref().expect("validated: data present");
    let initial = data.initial.resolve(&grid)?;
    let source = match &data.source {
        Some(expr) => expr.resolve_source(&grid)?,
        None => Arc::new(|_: f64, _: f64| 0.0) as _,
    };
    let mut spec =
        ProblemSpec::new(params, grid, t_final, initial, source).map_err(core_err)?;
    if let Some(re) = &cfg.reaction {
        spec = spec.with_reaction(Reaction::new(re.lambda, re.q_r).map_err(core_err)?);
    }
    Ok((spec, stepper_options(st)))
}

fn horizon(cfg: &RunConfig) -> f64 {
    cfg.stepper
        .as_ref()
        .and_then(|st| st.t_final)
        .expect("validated: t_final present")
}

// ---------------------------------------------------------------------------
// Shared trace helpers.

fn norm_triple(f: &Field, grid: &GridDomain) -> Result<(f64, f64, f64), CliError> {
    let l1 = lp_norm(f, grid, 1.0).map_err(core_err)?;
    let l2 = lp_norm(f, grid, 2.0).map_err(core_err)?;
    Ok((f.sup_norm(), l1, l2))
}

/// Writes trajectory.csv (per-time norms) and steps.csv (per-step solver
/// diagnostics); returns the summary fragment shared by evolution kinds.
fn write_trajectory(
    traj: &Trajectory,
    grid: &GridDomain,
    out: &mut OutputWriter,
) -> Result<serde_json::Value, CliError> {
    let mut rows = Vec::with_capacity(traj.times.len());
    for (t, f) in traj.times.iter().zip(&traj.fields) {
        let (sup, l1, l2) = norm_triple(f, grid)?;
        rows.push(vec![cell(*t), cell(sup), cell(l1), cell(l2)]);
    }
    out.write_csv(
        "trajectory.csv",
        &["t", "sup_norm", "l1_norm", "l2_norm"],
        &rows,
        PlotScale::Linear,
    )?;

    let mut step_rows = Vec::with_capacity(traj.step_stats.len());
    for (t, st) in traj.times.iter().skip(1).zip(&traj.step_stats) {
        step_rows.push(vec![
            cell(*t),
            cell(st.dt),
            st.newton_iterations.to_string(),
            cell(st.residual),
            cell(st.energy_residual),
            cell(st.energy_scale),
        ]);
    }
    out.write_csv(
        "steps.csv",
        &["t", "dt", "newton_iterations", "residual", "energy_residual", "energy_scale"],
        &step_rows,
        PlotScale::Linear,
    )?;

    let (sup, l1, l2) = norm_triple(traj.last(), grid)?;
    let max_energy_residual = traj
        .step_stats
        .iter()
        .fold(0.0f64, |m, st| m.max(st.energy_residual.abs()));
    let max_energy_ratio = traj.step_stats.iter().fold(0.0f64, |m, st| {
        if st.energy_scale > 0.0 {
            m.max(st.energy_residual.abs() / st.energy_scale)
        } else {
            m
        }
    });
    let total_newton: usize = traj.step_stats.iter().map(|st| st.newton_iterations).sum();
    Ok(serde_json::json!({
        "steps": traj.step_stats.len(),
        "t_reached": traj.times.last(),
        "final": { "sup_norm": sup, "l1_norm": l1, "l2_norm": l2 },
        "max_energy_residual": max_energy_residual,
        "max_energy_ratio": max_energy_ratio,
        "total_newton_iterations": total_newton,
    }))
}

fn write_state_csv(
    name: &str,
    grid: &GridDomain,
    columns: &[(&str, &[f64])],
    out: &mut OutputWriter,
) -> Result<(), CliError> {
    let mut header = vec!["x"];
    header.extend(columns.iter().map(|(label, _)| *label));
    let mut rows = Vec::with_capacity(grid.m());
    for i in 0..grid.m() {
        let mut row = vec![cell(grid.node(i))];
        row.extend(columns.iter().map(|(_, vals)| cell(vals[i])));
        rows.push(row);
    }
    out.write_csv(name, &header, &rows, PlotScale::Linear)
}

// ---------------------------------------------------------------------------
// Config-driven runners.

fn run_evolve(cfg: &RunConfig, out: &mut OutputWriter) -> Result<serde_json::Value, CliError> {
    let (spec, opts) = build_spec(cfg, horizon(cfg))?;
    let traj = evolve(&spec, &opts).map_err(core_err)?;
    let summary = write_trajectory(&traj, &spec.grid, out)?;
    write_state_csv(
        "final_state.csv",
        &spec.grid,
        &[("u", &traj.last().values)],
        out,
    )?;
    Ok(summary)
}

fn run_extinction(cfg: &RunConfig, out: &mut OutputWriter) -> Result<serde_json::Value, CliError> {
    let (spec, opts) = build_spec(cfg, horizon(cfg))?;
    let u0 = spec.initial_field().map_err(core_err)?;
    let section = cfg.extinction.clone().unwrap_or_default();
    let threshold = match section.threshold {
        Some(th) => th,
        None => default_extinction_threshold(&u0, &spec.grid).map_err(core_err)?,
    };
    let traj = evolve(&spec, &opts).map_err(core_err)?;
    let mut record = detect_extinction(&traj, &spec.grid, threshold).map_err(core_err)?;

    let sobolev = estimate_sobolev_constant(&spec.grid, &spec.params).map_err(core_err)?;
    let variant = match section.variant {
        VariantChoice::L2 => ExtinctionVariant::L2,
        VariantChoice::Lnu => ExtinctionVariant::Lnu,
    };
    // The closed-form bound only exists in its own parameter regime; an
    // out-of-regime run still reports detection, with the bound left null.
    let bound_error = match extinction_bound(&u0, &spec.params, &spec.grid, sobolev.value, variant)
    {
        Ok(bound) => {
            record = record.with_bound(bound);
            None
        }
        Err(e) => Some(e.to_string()),
    };

    let rows: Vec<Vec<String>> = record
        .norm_trace
        .iter()
        .map(|(t, norm)| vec![cell(*t), cell(*norm)])
        .collect();
    out.write_csv(
        "norm_trace.csv",
        &["t", "l2_norm"],
        &rows,
        PlotScale::Linear,
    )?;

    Ok(serde_json::json!({
        "extinct": record.extinct,
        "t_num": record.t_num,
        "t_star_bound": record.t_star_bound,
        "bound_error": bound_error,
        "threshold": threshold,
        "variant": match variant {
            ExtinctionVariant::L2 => "l2",
            ExtinctionVariant::Lnu => "lnu",
        },
        "sobolev": { "value": sobolev.value, "stagnated": sobolev.stagnated },
        "steps": traj.step_stats.len(),
    }))
}

fn run_propagation(cfg: &RunConfig, out: &mut OutputWriter) -> Result<serde_json::Value, CliError> {
    let dt = cfg.stepper.as_ref().expect("validated").dt;
    // Propagation is a one-step measurement: the horizon is exactly dt.
    let (spec, opts) = build_spec(cfg, dt)?;
    let traj = evolve(&spec, &opts).map_err(core_err)?;
    if traj.fields.len() < 2 {
        return Err(CliError::Runtime("no step was taken".into()));
    }
    let u0 = &traj.fields[0];
    let u1 = &traj.fields[1];
    let sup0 = u0.sup_norm();
    let threshold = 1e-14 * sup0;
    let min_after = positivity_check(&traj, 1).map_err(core_err)?;
    let support_nodes = u0.values.iter().filter(|v| **v != 0.0).count();

    write_state_csv(
        "propagation.csv",
        &spec.grid,
        &[("u0", &u0.values), ("u1", &u1.values)],
        out,
    )?;

    Ok(serde_json::json!({
        "dt": traj.times[1],
        "min_after_first_step": min_after,
        "threshold": threshold,
        "strictly_positive": min_after > threshold,
        "initial_sup_norm": sup0,
        "initial_support_nodes": support_nodes,
    }))
}

fn run_marcinkiewicz(
    cfg: &RunConfig,
    out: &mut OutputWriter,
) -> Result<serde_json::Value, CliError> {
    let (spec, opts) = build_spec(cfg, horizon(cfg))?;
    let mk = cfg.marcinkiewicz.as_ref().expect("validated");
    let ks = logspace(mk.k_min, mk.k_max, mk.k_count);
    let traj = evolve(&spec, &opts).map_err(core_err)?;
    let dist = distribution_function(&traj, &spec.grid, &ks).map_err(core_err)?;

    let rows: Vec<Vec<String>> = dist
        .ks
        .iter()
        .zip(&dist.phis)
        .map(|(k, phi)| vec![cell(*k), cell(*phi)])
        .collect();
    out.write_csv("distribution.csv", &["k", "phi"], &rows, PlotScale::LogLog)?;

    // Decay exponent the weak-norm estimate predicts for data in L1.
    let p1 = spec.params.p() - 1.0 + spec.params.ps() / spec.params.n_eff() as f64;
    Ok(serde_json::json!({
        "fitted_slope": dist.fitted_slope,
        "fit_window": { "k_lo": dist.fit_window.0, "k_hi": dist.fit_window.1 },
        "predicted_decay_exponent": p1,
        "levels": dist.ks.len(),
        "steps": traj.step_stats.len(),
    }))
}

fn run_entropy_check(
    cfg: &RunConfig,
    out: &mut OutputWriter,
) -> Result<serde_json::Value, CliError> {
    let section = cfg.entropy.as_ref().expect("validated");
    let (mut spec, opts) = build_spec(cfg, horizon(cfg))?;
    if let Some(level) = section.ladder_level {
        spec = spec.with_ladder_level(level).map_err(core_err)?;
    }
    let traj = evolve(&spec, &opts).map_err(core_err)?;
    let table = build_kernel_table(&spec.grid, &spec.params).map_err(core_err)?;
    let library = standard_test_functions(&traj, &spec.grid).map_err(core_err)?;

    let mut residual_rows = Vec::new();
    let mut all_satisfied = true;
    for &k in &section.k_levels {
        let level = TruncationLevel::new(k).map_err(core_err)?;
        for v in &library {
            let check = entropy_residual(&traj, v, level, &spec, &table).map_err(core_err)?;
            all_satisfied &= check.satisfied;
            residual_rows.push(vec![
                cell(check.k),
                check.test_function_id.clone(),
                cell(check.lhs),
                cell(check.rhs),
                cell(check.tol),
                u8::from(check.satisfied).to_string(),
            ]);
        }
    }
    out.write_csv(
        "entropy_residuals.csv",
        &["k", "test_function", "lhs", "rhs", "tol", "satisfied"],
        &residual_rows,
        PlotScale::Linear,
    )?;

    let mut tails = Vec::with_capacity(section.h_levels.len());
    for &h in &section.h_levels {
        tails.push(entropy_tail(&traj, h, &table, &spec.params).map_err(core_err)?);
    }
    let tail_rows: Vec<Vec<String>> = section
        .h_levels
        .iter()
        .zip(&tails)
        .map(|(h, tail)| vec![cell(*h), cell(*tail)])
        .collect();
    out.write_csv(
        "entropy_tail.csv",
        &["h_level", "tail"],
        &tail_rows,
        PlotScale::Linear,
    )?;
    let tail_nonincreasing = tails.windows(2).all(|w| w[1] <= w[0]);

    Ok(serde_json::json!({
        "all_satisfied": all_satisfied,
        "tail_nonincreasing": tail_nonincreasing,
        "residual_checks": residual_rows.len(),
        "test_functions": library.len(),
        "ladder_level": spec.ladder_level(),
        "steps": traj.step_stats.len(),
    }))
}

fn run_sobolev(cfg: &RunConfig, out: &mut OutputWriter) -> Result<serde_json::Value, CliError> {
    let grid = build_grid(cfg)?;
    let params = build_params(cfg)?;
    let estimate = estimate_sobolev_constant(&grid, &params).map_err(core_err)?;
    out.write_csv(
        "sobolev.csv",
        &["value", "stagnated"],
        &[vec![
            cell(estimate.value),
            u8::from(estimate.stagnated).to_string(),
        ]],
        PlotScale::Linear,
    )?;
    Ok(serde_json::json!({
        "value": estimate.value,
        "stagnated": estimate.stagnated,
        "critical_exponent": params.critical_exponent().ok(),
    }))
}

fn run_stationary(cfg: &RunConfig, out: &mut OutputWriter) -> Result<serde_json::Value, CliError> {
    let (spec, opts) = build_spec(cfg, horizon(cfg))?;
    let w = stationary_solve(&spec, &opts).map_err(core_err)?;
    write_state_csv("stationary.csv", &spec.grid, &[("w", &w.values)], out)?;
    let (sup, l1, l2) = norm_triple(&w, &spec.grid)?;
    Ok(serde_json::json!({
        "sup_norm": sup,
        "l1_norm": l1,
        "l2_norm": l2,
    }))
}

// ---------------------------------------------------------------------------
// Flag-driven runners.

/// Radial self-similar profile solve; flags stand in for a config file, so
/// their canonical rendering is what gets hashed.
pub fn run_selfsimilar(p: f64, s: f64, n: u32, mass: f64, g: &GlobalOpts) -> Result<(), CliError> {
    let canon = format!("selfsimilar --p {p} --s {s} --N {n} --mass {mass}");
    let mut out = OutputWriter::new(
        &g.output_dir,
        "selfsimilar",
        sha256_hex(canon.as_bytes()),
        g.seed,
        g.plot,
    )?;

    let params = ProfileParams::new(p, s, n).map_err(core_err)?;
    let profile = solve_profile(&params, mass).map_err(core_err)?;
    let residual = profile_residual(&profile).map_err(core_err)?;

    let rows: Vec<Vec<String>> = profile
        .r_grid()
        .iter()
        .zip(profile.values())
        .zip(&residual)
        .map(|((r, v), res)| vec![cell(*r), cell(*v), cell(*res)])
        .collect();
    out.write_csv(
        "profile.csv",
        &["r", "upsilon", "residual"],
        &rows,
        PlotScale::LogLog,
    )?;

    let vmax = profile.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = profile.beta() * n as f64 * vmax;
    let m = residual.len();
    // The outermost cells on each side feel one-sided stencils; report the
    // interior maximum separately, which is what convergence is judged on.
    let max_interior = residual[2..m.saturating_sub(2)]
        .iter()
        .fold(0.0f64, |acc, r| acc.max(r.abs()));
    let max_all = residual.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
    let strictly_positive = profile.values().iter().all(|v| *v > 0.0);
    let (tail_amplitude, tail_exponent) = profile.tail();

    out.write_summary(
        serde_json::json!({ "p": p, "s": s, "N": n, "mass": mass }),
        serde_json::json!({
            "beta": profile.beta(),
            "tail_amplitude": tail_amplitude,
            "tail_exponent": tail_exponent,
            "profile_mass": profile.mass(),
            "max_interior_residual": max_interior,
            "max_residual": max_all,
            "residual_scale": scale,
            "strictly_positive": strictly_positive,
            "monotone_decay": profile_monotone_decay(&profile),
            "nodes": m,
        }),
    )?;
    out.finish()
}

/// Angular-kernel tabulation over a geometric sigma grid "lo:hi:count".
pub fn run_kernel(n: u32, theta: f64, sigma_grid: &str, g: &GlobalOpts) -> Result<(), CliError> {
    let (lo, hi, count) = parse_sigma_grid(sigma_grid)?;
    let canon = format!("kernel --N {n} --theta {theta} --sigma-grid {lo}:{hi}:{count}");
    let mut out = OutputWriter::new(
        &g.output_dir,
        "kernel",
        sha256_hex(canon.as_bytes()),
        g.seed,
        g.plot,
    )?;

    let spec = AngularKernelSpec::new(n, theta).map_err(core_err)?;
    let sigmas = logspace(lo, hi, count);
    let mut rows = Vec::with_capacity(sigmas.len());
    for sigma in &sigmas {
        let k = angular_kernel(*sigma, &spec).map_err(core_err)?;
        rows.push(vec![cell(*sigma), cell(k)]);
    }
    out.write_csv("kernel.csv", &["sigma", "kernel"], &rows, PlotScale::LogLog)?;

    out.write_summary(
        serde_json::json!({ "N": n, "theta": theta, "sigma_grid": format!("{lo}:{hi}:{count}") }),
        serde_json::json!({
            "sphere_measure": sphere_measure(n),
            "points": sigmas.len(),
            "sigma_min": lo,
            "sigma_max": hi,
        }),
    )?;
    out.finish()
}

/// Monte-Carlo battery for the elementary truncation inequalities.
pub fn run_verify_inequalities(
    p: f64,
    alpha: f64,
    samples: usize,
    g: &GlobalOpts,
) -> Result<(), CliError> {
    let canon = format!("verify-inequalities --p {p} --alpha {alpha} --samples {samples}");
    let out = OutputWriter::new(
        &g.output_dir,
        "verify-inequalities",
        sha256_hex(canon.as_bytes()),
        g.seed,
        g.plot,
    )?;
    let report = check_inequalities(p, alpha, samples, g.seed).map_err(core_err)?;
    let results = serde_json::to_value(&report)
        .map_err(|e| CliError::Runtime(format!("report serialization failed: {e}")))?;
    out.write_summary(
        serde_json::json!({ "p": p, "alpha": alpha, "samples": samples }),
        results,
    )?;
    out.finish()
}

// ---------------------------------------------------------------------------
// Small numeric helpers.

/// `count` geometrically spaced points from `lo` to `hi` inclusive.
fn logspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let ratio = hi / lo;
    (0..count)
        .map(|i| lo * ratio.powf(i as f64 / (count - 1) as f64))
        .collect()
}

fn parse_sigma_grid(text: &str) -> Result<(f64, f64, usize), CliError> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = || validation(format!("sigma grid must be \"lo:hi:count\", got \"{text}\""));
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let count: usize = parts[2].parse().map_err(|_| bad())?;
    if !(lo.is_finite() && lo > 0.0 && hi.is_finite() && hi > lo) {
        return Err(validation(format!(
            "sigma grid needs 0 < lo < hi, got {lo}:{hi}"
        )));
    }
    if count < 2 {
        return Err(validation("sigma grid needs count >= 2"));
    }
    Ok((lo, hi, count))
}
