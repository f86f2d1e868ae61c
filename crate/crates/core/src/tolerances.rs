//! Tolerance table shared by the solvers, the checks and the verdicts.
//!
//! Every pass/fail threshold used anywhere lives here. The table is
//! versioned; bump `TABLE_VERSION` whenever a default changes so that
//! stored verdicts can be traced back to the thresholds that produced them.

use serde::Serialize;

use crate::error::{LabError, Result};

pub const TABLE_VERSION: &str = "1";

/// Weights of a measure must sum to one within this.
pub const MASS_TOL: f64 = 1e-12;

/// Default L1 marginal defect at which Sinkhorn stops.
pub const MARGINAL_TOL: f64 = 1e-10;

pub const SINKHORN_MAX_ITER: usize = 200_000;

/// `|det ∇²ₓᵧc|` below this is treated as degenerate.
pub const TWIST_FLOOR: f64 = 1e-8;

/// Largest number of (row, col) entries handed to the exact LP.
pub const LP_BUDGET: usize = 4_000_000;

/// Conjugacy tolerance for LP potentials.
pub const CONJ_TOL: f64 = 1e-6;

/// Contact set threshold η = 10·conj_tol.
pub const CONTACT_ETA: f64 = 10.0 * CONJ_TOL;

/// Duality gaps below -GAP_SLACK mean infeasible potentials.
pub const GAP_SLACK: f64 = 1e-9;

/// The sinkhorn_limit method solves at ε = factor · diam².
pub const SINKHORN_LIMIT_FACTOR: f64 = 1e-3;

/// Chart radii are accepted when the sampled τ(r) stays below this.
pub const TAU_MARGIN: f64 = 0.4;

/// Entries of γ₀ above this count as support.
pub const MASS_FLOOR: f64 = 1e-14;

/// Thresholds consumed by the verdicts. Overridable only through an
/// explicit flag in the run configuration.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ToleranceTable {
    /// relative half-width around d/2 for the suboptimality slope
    pub subopt_slope_rel: f64,
    /// pointwise agreement with the Gaussian closed form
    pub gaussian_oracle: f64,
    pub entropy_slope: f64,
    pub entropy_intercept: f64,
    /// max/min of suboptimality/ε over the sweep (quadratic presets)
    pub theta_bracket: f64,
    /// same bracket for general costs
    pub theta_bracket_general: f64,
    pub w2_slope: f64,
    pub map_chain_slack: f64,
    pub value_slope: f64,
    pub value_slope_general: f64,
    pub entropy_slope_general: f64,
    pub identity: f64,
    pub envelope_rel: f64,
    pub detachment_slack: f64,
    pub local_bound_slack: f64,
    pub local_detachment_slack: f64,
    pub closed_form: f64,
}

impl Default for ToleranceTable {
    fn default() -> Self {
        Self {
            subopt_slope_rel: 0.1,
            gaussian_oracle: 2e-3,
            entropy_slope: 0.05,
            entropy_intercept: 0.05,
            theta_bracket: 2.0,
            theta_bracket_general: 5.0,
            w2_slope: 0.05,
            map_chain_slack: 1e-6,
            value_slope: 0.1,
            value_slope_general: 0.15,
            entropy_slope_general: 0.1,
            identity: 1e-9,
            envelope_rel: 0.01,
            detachment_slack: 0.02,
            local_bound_slack: 0.05,
            local_detachment_slack: 1e-6,
            closed_form: 1e-6,
        }
    }
}

impl ToleranceTable {
    pub const NAMES: [&'static str; 17] = [
        "subopt_slope_rel",
        "gaussian_oracle",
        "entropy_slope",
        "entropy_intercept",
        "theta_bracket",
        "theta_bracket_general",
        "w2_slope",
        "map_chain_slack",
        "value_slope",
        "value_slope_general",
        "entropy_slope_general",
        "identity",
        "envelope_rel",
        "detachment_slack",
        "local_bound_slack",
        "local_detachment_slack",
        "closed_form",
    ];

    fn slot(&mut self, name: &str) -> Option<&mut f64> {
        Some(match name {
            "subopt_slope_rel" => &mut self.subopt_slope_rel,
            "gaussian_oracle" => &mut self.gaussian_oracle,
            "entropy_slope" => &mut self.entropy_slope,
            "entropy_intercept" => &mut self.entropy_intercept,
            "theta_bracket" => &mut self.theta_bracket,
            "theta_bracket_general" => &mut self.theta_bracket_general,
            "w2_slope" => &mut self.w2_slope,
            "map_chain_slack" => &mut self.map_chain_slack,
            "value_slope" => &mut self.value_slope,
            "value_slope_general" => &mut self.value_slope_general,
            "entropy_slope_general" => &mut self.entropy_slope_general,
            "identity" => &mut self.identity,
            "envelope_rel" => &mut self.envelope_rel,
            "detachment_slack" => &mut self.detachment_slack,
            "local_bound_slack" => &mut self.local_bound_slack,
            "local_detachment_slack" => &mut self.local_detachment_slack,
            "closed_form" => &mut self.closed_form,
            _ => return None,
        })
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        if !value.is_finite() || value < 0.0 {
            return Err(LabError::InvalidArgument(format!(
                "tolerance {name} must be a nonnegative number, got {value}"
            )));
        }
        let slot = self
            .slot(name)
            .ok_or_else(|| LabError::InvalidArgument(format!("unknown tolerance {name}")))?;
        *slot = value;
        Ok(())
    }
}
