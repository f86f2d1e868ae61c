//! Duality-gap geometry: Minty coordinates, global and local detachment
//! inequalities, chart covers for twisted costs, and Wasserstein distances
//! between plans.

mod charts;
mod minty;
mod wasserstein;

use serde::Serialize;

pub use charts::{
    build_charts, check_local_detachment, choose_radius, entropy_lower_bound_local,
    estimate_contact_set, Chart, ContactSetEstimate, LocalDetachmentReport, LocalEntropyBound,
    RadiusChoice,
};
pub use minty::{
    check_minty_trick, detachment_constant, entropy_lower_bound_quadratic, minty_marginal,
    minty_transform, spacings_commensurate, GlobalEntropyBound, MintyMarginal,
};
pub use wasserstein::{
    lipschitz_graph_w2_bound, map_gap_bounds, w2_atoms, w2_between_plans, Atoms,
    LipschitzGraphBound, MapGapReport, W2Result,
};

/// Largest sampled violation of an inequality (violation = lhs deficit,
/// so values ≤ 0 mean the inequality held).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ViolationReport {
    pub checked: usize,
    pub max_violation: f64,
    /// node indices (i, j, i′, j′) of the worst pair
    pub argmax_pair: Option<[usize; 4]>,
    pub seed: u64,
}

impl ViolationReport {
    pub fn new(seed: u64) -> Self {
        Self {
            checked: 0,
            max_violation: f64::NEG_INFINITY,
            argmax_pair: None,
            seed,
        }
    }

    pub fn record(&mut self, violation: f64, pair: [usize; 4]) {
        self.checked += 1;
        if violation > self.max_violation || self.argmax_pair.is_none() {
            self.max_violation = violation;
            self.argmax_pair = Some(pair);
        }
    }

    pub fn merge(&mut self, other: &ViolationReport) {
        self.checked += other.checked;
        if other.max_violation > self.max_violation {
            self.max_violation = other.max_violation;
            self.argmax_pair = other.argmax_pair;
        }
    }

    /// No sampled violation above `slack`.
    pub fn holds(&self, slack: f64) -> bool {
        self.checked > 0 && self.max_violation <= slack
    }
}
