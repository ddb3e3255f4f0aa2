//! `fplab`: command-line driver for the nonlocal nonlinear diffusion
//! laboratory. Experiments are declared in TOML configs (or, for the three
//! closed-form tools, plain flags); results land in an output directory as
//! a JSON summary plus CSV traces, deterministic byte-for-byte given the
//! same config and seed.

mod config;
mod errors;
mod expr;
mod output;
mod runner;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use config::ConfigKind;
use errors::CliError;
use runner::GlobalOpts;

#[derive(Parser)]
#[command(name = "fplab", version, about = "Nonlocal nonlinear diffusion laboratory")]
struct Cli {
    /// Directory the run writes its outputs into (created if missing).
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,

    /// Random seed; recorded in every output and consumed by the seeded
    /// components (the inequality battery).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// Also emit `plot.py`, a matplotlib script rendering each CSV trace.
    #[arg(long, global = true)]
    plot: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time evolution run: trajectory norms, per-step diagnostics, final state.
    Evolve {
        /// Path to the run config (TOML).
        #[arg(long)]
        config: PathBuf,
    },
    /// Evolution plus extinction detection and the closed-form time bound.
    Extinction {
        #[arg(long)]
        config: PathBuf,
    },
    /// One implicit step from compactly supported data; reports the minimum
    /// node value afterwards (instant-positivity measurement).
    Propagation {
        #[arg(long)]
        config: PathBuf,
    },
    /// Distribution-function decay: space-time measure of {|u| > k} over a
    /// geometric ladder of levels, with the fitted log-log slope.
    Marcinkiewicz {
        #[arg(long)]
        config: PathBuf,
    },
    /// Entropy-formulation residuals against the standard test-function
    /// library, plus the far-range tail over a ladder of levels.
    EntropyCheck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Best-quotient estimate of the discrete Sobolev constant.
    Sobolev {
        #[arg(long)]
        config: PathBuf,
    },
    /// Long-time limit of the reaction problem (0 < q_r < p-1).
    Stationary {
        #[arg(long)]
        config: PathBuf,
    },
    /// Radial self-similar profile solve for p > 2.
    Selfsimilar {
        /// Growth exponent of the nonlinearity (p > 2).
        #[arg(long)]
        p: f64,
        /// Differentiability order (0 < s < 1).
        #[arg(long)]
        s: f64,
        /// Spatial dimension (N >= 2).
        #[arg(long = "N")]
        n: u32,
        /// Target mass of the normalized profile.
        #[arg(long)]
        mass: f64,
    },
    /// Angular-kernel tabulation over a geometric sigma grid.
    Kernel {
        /// Spatial dimension (N >= 2).
        #[arg(long = "N")]
        n: u32,
        /// Kernel exponent (theta < N); negative values are common.
        #[arg(long, allow_hyphen_values = true)]
        theta: f64,
        /// Geometric grid "lo:hi:count" of sigma values.
        #[arg(long = "sigma-grid")]
        sigma_grid: String,
    },
    /// Monte-Carlo battery for the elementary truncation inequalities.
    VerifyInequalities {
        /// Growth exponent (p > 1).
        #[arg(long, default_value_t = 1.5)]
        p: f64,
        /// Truncation-power parameter (alpha > 0).
        #[arg(long, default_value_t = 1.0)]
        alpha: f64,
        /// Number of random samples.
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    let g = GlobalOpts {
        output_dir: cli.output_dir,
        seed: cli.seed,
        plot: cli.plot,
    };
    match cli.command {
        Command::Evolve { config } => runner::run_config(ConfigKind::Evolve, &config, &g),
        Command::Extinction { config } => runner::run_config(ConfigKind::Extinction, &config, &g),
        Command::Propagation { config } => {
            runner::run_config(ConfigKind::Propagation, &config, &g)
        }
        Command::Marcinkiewicz { config } => {
            runner::run_config(ConfigKind::Marcinkiewicz, &config, &g)
        }
        Command::EntropyCheck { config } => {
            runner::run_config(ConfigKind::EntropyCheck, &config, &g)
        }
        Command::Sobolev { config } => runner::run_config(ConfigKind::Sobolev, &config, &g),
        Command::Stationary { config } => runner::run_config(ConfigKind::Stationary, &config, &g),
        Command::Selfsimilar { p, s, n, mass } => runner::run_selfsimilar(p, s, n, mass, &g),
        Command::Kernel {
            n,
            theta,
            sigma_grid,
        } => runner::run_kernel(n, theta, &sigma_grid, &g),
        Command::VerifyInequalities { p, alpha, samples } => {
            runner::run_verify_inequalities(p, alpha, samples, &g)
        }
    }
}

fn main() {
    let cli = Cli::parse();
    let out_dir = cli.output_dir.clone();
    match dispatch(cli) {
        Ok(()) => {
            println!("wrote {}", out_dir.join("summary.json").display());
        }
        Err(e) => {
            let doc = serde_json::json!({
                "schema_version": output::SCHEMA_VERSION,
                "error": { "kind": e.kind(), "message": e.message() },
            });
            eprintln!(
                "{}",
                serde_json::to_string(&doc).expect("error document serializes")
            );
            std::process::exit(e.exit_code());
        }
    }
}
