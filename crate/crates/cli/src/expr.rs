//! The closed whitelist of data expressions. Initial values and sources
//! are declared in the config as one of these shapes and evaluated by this
//! built-in interpreter — there is no general expression language, which
//! keeps every run reproducible from its config text alone.

use std::sync::Arc;

use fplab_core::diagnostics::lp_norm;
use fplab_core::evolution::{SpaceFn, SpaceTimeFn};
use fplab_core::grid_operator::{Field, GridDomain};
use serde::{Deserialize, Serialize};

use crate::errors::{core_err, validation, CliError};

fn one() -> f64 {
    1.0
}

/// A shape from the whitelist. The `kind` key in the config table selects
/// the variant; unknown kinds are rejected at parse time.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Expr {
    /// coeffs[k] * x^k summed over k, lowest degree first.
    Polynomial { coeffs: Vec<f64> },
    /// Smooth compactly supported bump: amplitude * exp(1 - 1/(1 - z^2))
    /// for |z| < 1 with z = (x - center)/radius, zero outside. Peak value
    /// is `amplitude` at x = center.
    Bump {
        #[serde(default)]
        center: f64,
        #[serde(default = "one")]
        radius: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
    /// Unbounded spike amplitude * |x|^(-exponent); admissible whenever no
    /// grid node sits exactly at x = 0.
    PowerSpike {
        #[serde(default = "one")]
        amplitude: f64,
        exponent: f64,
    },
    /// amplitude on the closed interval [from, to], zero elsewhere.
    Indicator {
        from: f64,
        to: f64,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

impl Expr {
    /// Structural checks that do not need a grid.
    pub fn validate(&self) -> Result<(), CliError> {
        match self {
            Expr::Polynomial { coeffs } => {
                if coeffs.is_empty() {
                    return Err(validation("polynomial needs at least one coefficient"));
                }
                if coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(validation("polynomial coefficients must be finite"));
                }
            }
            Expr::Bump {
                center,
                radius,
                amplitude,
            } => {
                if !center.is_finite() || !amplitude.is_finite() {
                    return Err(validation("bump center and amplitude must be finite"));
                }
                if !radius.is_finite() || *radius <= 0.0 {
                    return Err(validation(format!("bump radius must be > 0, got {radius}")));
                }
            }
            Expr::PowerSpike {
                amplitude,
                exponent,
            } => {
                if !amplitude.is_finite() || !exponent.is_finite() {
                    return Err(validation("power-spike amplitude and exponent must be finite"));
                }
            }
            Expr::Indicator { from, to, amplitude } => {
                if !from.is_finite() || !to.is_finite() || !amplitude.is_finite() {
                    return Err(validation("indicator bounds and amplitude must be finite"));
                }
                if from >= to {
                    return Err(validation(format!(
                        "indicator needs from < to, got [{from}, {to}]"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Evaluates the shape at one point.
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Expr::Polynomial { coeffs } => coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c),
            Expr::Bump {
                center,
                radius,
                amplitude,
            } => {
                let z = (x - center) / radius;
                if z.abs() < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - z * z)).exp()
                } else {
                    0.0
                }
            }
            Expr::PowerSpike {
                amplitude,
                exponent,
            } => amplitude * x.abs().powf(-exponent),
            Expr::Indicator { from, to, amplitude } => {
                if x >= *from && x <= *to {
                    *amplitude
                } else {
                    0.0
                }
            }
        }
    }
}

/// An expression plus optional normalization. When `normalize_l2` is set,
/// the shape is rescaled once — against the run's grid — so its discrete
/// L2 norm equals the target, and the rescaled shape is what the run uses.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataExpr {
    #[serde(flatten)]
    pub expr: Expr,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub normalize_l2: Option<f64>,
}

impl DataExpr {
    /// Computes the scale factor implied by the normalization request:
    /// samples the raw shape on the grid (rejecting non-finite node values)
    /// and matches the discrete L2 norm to the target.
    fn scale_factor(&self, grid: &GridDomain) -> Result<f64, CliError> {
        self.expr.validate()?;
        let samples = Field::from_fn(grid, 0.0, |x| self.expr.eval(x)).map_err(|_| {
            validation("data expression is not finite at every grid node")
        })?;
        match self.normalize_l2 {
            None => Ok(1.0),
            Some(target) => {
                if !target.is_finite() || target <= 0.0 {
                    return Err(validation(format!(
                        "normalize_l2 target must be > 0, got {target}"
                    )));
                }
                let norm = lp_norm(&samples, grid, 2.0).map_err(core_err)?;
                if norm == 0.0 {
                    return Err(validation(
                        "cannot L2-normalize data that vanish at every grid node",
                    ));
                }
                Ok(target / norm)
            }
        }
    }

    /// Resolves to the spatial closure the evolution consumes.
    pub fn resolve(&self, grid: &GridDomain) -> Result<SpaceFn, CliError> {
        let factor = self.scale_factor(grid)?;
        let expr = self.expr.clone();
        Ok(Arc::new(move |x| factor * expr.eval(x)))
    }

    /// Resolves to a time-independent source closure.
    pub fn resolve_source(&self, grid: &GridDomain) -> Result<SpaceTimeFn, CliError> {
        let factor = self.scale_factor(grid)?;
        let expr = self.expr.clone();
        Ok(Arc::new(move |x, _t| factor * expr.eval(x)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> GridDomain {
        GridDomain::new(-1.0, 1.0, 63).unwrap()
    }

    #[test]
    fn polynomial_horner_matches_direct_sum() {
        let e = Expr::Polynomial {
            coeffs: vec![2.0, -1.0, 0.5],
        };
        let x = 0.7;
        assert!((e.eval(x) - (2.0 - x + 0.5 * x * x)).abs() < 1e-15);
    }

    #[test]
    fn bump_support_and_peak() {
        let e = Expr::Bump {
            center: -0.5,
            radius: 0.5,
            amplitude: 2.0,
        };
        assert_eq!(e.eval(-1.0), 0.0);
        assert_eq!(e.eval(0.0), 0.0);
        assert_eq!(e.eval(0.5), 0.0);
        assert!((e.eval(-0.5) - 2.0).abs() < 1e-15);
        assert!(e.eval(-0.75) > 0.0);
    }

    #[test]
    fn indicator_needs_ordered_bounds() {
        let e = Expr::Indicator {
            from: 0.5,
            to: 0.5,
            amplitude: 1.0,
        };
        assert!(e.validate().is_err());
    }

    #[test]
    fn normalization_hits_the_target() {
        let d = DataExpr {
            expr: Expr::Bump {
                center: 0.0,
                radius: 1.0,
                amplitude: 1.0,
            },
            normalize_l2: Some(1.0),
        };
        let g = grid();
        let f = d.resolve(&g).unwrap();
        let sampled = Field::from_fn(&g, 0.0, |x| f(x)).unwrap();
        let norm = lp_norm(&sampled, &g, 2.0).unwrap();
        assert!((norm - 1.0).abs() < 1e-12, "norm = {norm}");
    }

    #[test]
    fn spike_rejected_when_a_node_sits_at_origin() {
        // m odd on a symmetric interval puts a node exactly at x = 0.
        let g = GridDomain::new(-1.0, 1.0, 63).unwrap();
        let has_zero_node = (0..g.m()).any(|i| g.node(i) == 0.0);
        let d = DataExpr {
            expr: Expr::PowerSpike {
                amplitude: 1.0,
                exponent: 0.5,
            },
            normalize_l2: None,
        };
        // The resolve path samples the grid; it must reject exactly when a
        // node hits the singularity.
        let resolved = d.resolve(&g);
        assert_eq!(resolved.is_err(), has_zero_node);
    }

    #[test]
    fn unknown_kind_is_a_parse_error() {
        let r: Result<DataExpr, _> = toml::from_str("kind = \"sine\"\nfreq = 3.0");
        assert!(r.is_err());
    }
}
