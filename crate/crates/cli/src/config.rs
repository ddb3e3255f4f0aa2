//! Declarative run configuration: one TOML file per run with nested
//! sections, no programmatic configuration. The parsed document is echoed
//! verbatim into the run summary so results stay self-describing.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::errors::{validation, CliError};
use crate::expr::DataExpr;

/// Experiment kinds that are driven by a config file. Flag-driven
/// subcommands (profile solve, kernel tabulation, inequality battery) do
/// not go through a config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConfigKind {
    Evolve,
    Extinction,
    Propagation,
    Marcinkiewicz,
    EntropyCheck,
    Sobolev,
    Stationary,
}

impl ConfigKind {
    pub fn name(self) -> &'static str {
        match self {
            ConfigKind::Evolve => "evolve",
            ConfigKind::Extinction => "extinction",
            ConfigKind::Propagation => "propagation",
            ConfigKind::Marcinkiewicz => "marcinkiewicz",
            ConfigKind::EntropyCheck => "entropy-check",
            ConfigKind::Sobolev => "sobolev",
            ConfigKind::Stationary => "stationary",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub kind: ConfigKind,
}

/// Interval domain and interior node count.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub x_left: f64,
    pub x_right: f64,
    pub m: usize,
}

/// Operator parameters: growth exponent p, differentiability order s,
/// effective dimension used by the kernel normalization.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    pub p: f64,
    pub s: f64,
    pub n_eff: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeChoice {
    #[default]
    Implicit,
    Explicit,
}

/// Time-stepping controls. `t_final` may be omitted only for runs that
/// take a fixed number of steps (propagation takes exactly one).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StepperSection {
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_final: Option<f64>,
    #[serde(default)]
    pub scheme: SchemeChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub newton_max_iter: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularization_eps: Option<f64>,
}

/// Initial values and optional source, both from the expression whitelist.
/// A missing source means f = 0.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub initial: DataExpr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<DataExpr>,
}

/// Reaction term lambda * u^q_r. Its presence replaces the source by zero.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReactionSection {
    pub lambda: f64,
    pub q_r: f64,
}

/// Geometric ladder of levels for the distribution-function measurement.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarcinkiewiczSection {
    pub k_min: f64,
    pub k_max: f64,
    pub k_count: usize,
}

/// Levels for the entropy measurements: far-range levels h, truncation
/// levels k, and an optional data-truncation (ladder) level for the run.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntropySection {
    pub h_levels: Vec<f64>,
    pub k_levels: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ladder_level: Option<u32>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VariantChoice {
    #[default]
    L2,
    Lnu,
}

/// Extinction detection and bound options. A missing threshold resolves to
/// the library default (1e-10 of the initial L2 norm).
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExtinctionSection {
    #[serde(default)]
    pub variant: VariantChoice,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

/// The whole config document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub run: RunSection,
    pub domain: DomainSection,
    pub params: ParamsSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stepper: Option<StepperSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction: Option<ReactionSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub marcinkiewicz: Option<MarcinkiewiczSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub entropy: Option<EntropySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extinction: Option<ExtinctionSection>,
}

impl RunConfig {
    /// Reads and parses a config file, returning the document together
    /// with the raw bytes (hashed into every output).
    pub fn load(path: &Path) -> Result<(RunConfig, Vec<u8>), CliError> {
        let raw = fs::read(path)
            .map_err(|e| CliError::Parse(format!("cannot read {}: {e}", path.display())))?;
        let text = std::str::from_utf8(&raw)
            .map_err(|e| CliError::Parse(format!("{} is not UTF-8: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(text)
            .map_err(|e| CliError::Parse(format!("{}: {e}", path.display())))?;
        Ok((cfg, raw))
    }

    fn stepper_required(&self, kind: ConfigKind) -> Result<&StepperSection, CliError> {
        self.stepper
            .as_ref()
            .ok_or_else(|| validation(format!("{} runs need a [stepper] section", kind.name())))
    }

    fn data_required(&self, kind: ConfigKind) -> Result<&DataSection, CliError> {
        self.data
            .as_ref()
            .ok_or_else(|| validation(format!("{} runs need a [data] section", kind.name())))
    }

    /// Structural validation: the config kind must match the subcommand,
    /// and every section the kind consumes must be present and coherent.
    /// Numeric admissibility (parameter ranges, domain orientation) is
    /// enforced by the library constructors when the run is built.
    pub fn validate(&self, expected: ConfigKind) -> Result<(), CliError> {
        if self.run.kind != expected {
            return Err(validation(format!(
                "config declares kind \"{}\" but the subcommand is \"{}\"",
                self.run.kind.name(),
                expected.name()
            )));
        }
        let needs_horizon = !matches!(expected, ConfigKind::Sobolev | ConfigKind::Propagation);
        if expected != ConfigKind::Sobolev {
            let st = self.stepper_required(expected)?;
            if needs_horizon && st.t_final.is_none() {
                return Err(validation(format!(
                    "{} runs need stepper.t_final",
                    expected.name()
                )));
            }
            let data = self.data_required(expected)?;
            data.initial.expr.validate()?;
            if let Some(src) = &data.source {
                src.expr.validate()?;
            }
        }
        match expected {
            ConfigKind::Marcinkiewicz => {
                let mk = self.marcinkiewicz.as_ref().ok_or_else(|| {
                    validation("marcinkiewicz runs need a [marcinkiewicz] section")
                })?;
                if !(mk.k_min.is_finite() && mk.k_min > 0.0 && mk.k_max > mk.k_min) {
                    return Err(validation(format!(
                        "need 0 < k_min < k_max, got [{}, {}]",
                        mk.k_min, mk.k_max
                    )));
                }
                if mk.k_count < 2 {
                    return Err(validation("need k_count >= 2"));
                }
            }
            ConfigKind::EntropyCheck => {
                let e = self
                    .entropy
                    .as_ref()
                    .ok_or_else(|| validation("entropy-check runs need an [entropy] section"))?;
                if e.h_levels.is_empty() || e.k_levels.is_empty() {
                    return Err(validation("entropy h_levels and k_levels must be nonempty"));
                }
                if e.h_levels.iter().any(|h| !h.is_finite() || *h < 0.0) {
                    return Err(validation("entropy h_levels must be finite and >= 0"));
                }
                if e.k_levels.iter().any(|k| !k.is_finite() || *k <= 0.0) {
                    return Err(validation("entropy k_levels must be finite and > 0"));
                }
            }
            ConfigKind::Stationary => {
                if self.reaction.is_none() {
                    return Err(validation("stationary runs need a [reaction] section"));
                }
            }
            ConfigKind::Extinction => {
                if let Some(ext) = &self.extinction {
                    if let Some(th) = ext.threshold {
                        if !th.is_finite() || th <= 0.0 {
                            return Err(validation(format!(
                                "extinction threshold must be > 0, got {th}"
                            )));
                        }
                    }
                }
            }
            _ => {}
        }
        Ok(())
    }
}
