//! Scalar functionals of plans and potentials.
//!
//! Entropies follow the ∫ρ ln ρ convention: the plan is read as a
//! piecewise-constant density on product cells.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Serialize;

use crate::costs::CostModel;
use crate::error::{LabError, Result};
use crate::measures::{entropy_lebesgue, weighted_log_sum, GridMeasure};
use crate::solvers::{sinkhorn, CostMatrix, Plan, Potentials, SinkhornOptions};
use crate::tolerances::GAP_SLACK;

/// One row of an ε-sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantityRecord {
    pub eps: f64,
    /// cost_term + eps·plan_entropy
    pub ot_eps: f64,
    pub cost_term: f64,
    pub plan_entropy: f64,
    /// ∫E dγ_ε
    pub suboptimality: f64,
    pub c_eps: f64,
    /// NaN when not computed
    pub w2_to_opt: f64,
    pub h_m: f64,
    pub envelope_residual: Option<f64>,
}

/// (c, γ) = Σ c(xᵢ, yⱼ) γᵢⱼ.
pub fn cost_term(p: &Plan, c: &CostModel) -> f64 {
    let mut s = 0.0;
    for i in 0..p.rows() {
        let x = p.source.point(i);
        for j in 0..p.cols() {
            let g = p.get(i, j);
            if g > 0.0 {
                s += g * c.eval(x, p.target.point(j));
            }
        }
    }
    s
}

/// Same as [`cost_term`] with a precomputed cost matrix.
pub fn cost_term_with(p: &Plan, cost: &CostMatrix) -> f64 {
    p.coupling.iter().zip(&cost.data).map(|(g, c)| g * c).sum()
}

/// H(γ | ℋ^{2d}) = Σ γᵢⱼ ln(γᵢⱼ / product cell volume).
pub fn plan_entropy_lebesgue(p: &Plan) -> f64 {
    weighted_log_sum(&p.coupling, p.product_cell_volume())
}

/// H_m = ½(H(μ₀) + H(μ₁)).
pub fn marginal_entropy_mean(mu0: &GridMeasure, mu1: &GridMeasure) -> f64 {
    0.5 * (entropy_lebesgue(mu0) + entropy_lebesgue(mu1))
}

/// Relative entropy to the heat-kernel reference, through the decomposition
/// H(γ) + (c, γ)/ε + (d/2) ln(2πε).
pub fn schrodinger_value(p: &Plan, c: &CostModel, eps: f64) -> f64 {
    schrodinger_from_parts(plan_entropy_lebesgue(p), cost_term(p, c), eps, p.dim())
}

pub fn schrodinger_from_parts(entropy: f64, cost: f64, eps: f64, d: usize) -> f64 {
    entropy + cost / eps + 0.5 * d as f64 * (2.0 * PI * eps).ln()
}

/// OT_ε recovered from the Schrödinger value: ε𝒞 − (d/2) ε ln(2πε).
pub fn ot_from_schrodinger(c_eps: f64, eps: f64, d: usize) -> f64 {
    eps * c_eps - 0.5 * d as f64 * eps * (2.0 * PI * eps).ln()
}

/// Matrix of duality gaps E = c − φ ⊕ ψ on node pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct GapField {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl GapField {
    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.cols + j]
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// c − φ ⊕ ψ without the feasibility check (negative controls).
    pub fn unchecked(cost: &CostMatrix, phi: &[f64], psi: &[f64]) -> Self {
        let mut values = Vec::with_capacity(cost.rows * cost.cols);
        for i in 0..cost.rows {
            values.extend(cost.row(i).iter().zip(psi).map(|(c, p)| c - phi[i] - p));
        }
        Self {
            rows: cost.rows,
            cols: cost.cols,
            values,
        }
    }

    /// Gap field from explicit values, e.g. a Brenier gap on the grid.
    pub fn from_fn(
        mu0: &GridMeasure,
        mu1: &GridMeasure,
        f: impl Fn(&[f64], &[f64]) -> f64,
    ) -> Self {
        let mut values = Vec::with_capacity(mu0.len() * mu1.len());
        for i in 0..mu0.len() {
            for j in 0..mu1.len() {
                values.push(f(mu0.point(i), mu1.point(j)));
            }
        }
        Self {
            rows: mu0.len(),
            cols: mu1.len(),
            values,
        }
    }
}

/// E(x, y) = c(x, y) − φ(x) − ψ(y). Fails if some gap is below −1e−9.
pub fn duality_gap_field(cost: &CostMatrix, pot: &Potentials) -> Result<GapField> {
    if pot.phi.len() != cost.rows || pot.psi.len() != cost.cols {
        return Err(LabError::InvalidArgument(
            "potentials do not match the cost matrix".into(),
        ));
    }
    if !pot.conjugacy_residual.is_finite() {
        return Err(LabError::InvalidArgument(
            "conjugacy residual is not finite".into(),
        ));
    }
    let mut values = Vec::with_capacity(cost.rows * cost.cols);
    let (mut worst, mut at) = (f64::INFINITY, (0, 0));
    for i in 0..cost.rows {
        for (j, c) in cost.row(i).iter().enumerate() {
            let e = c - pot.phi[i] - pot.psi[j];
            if e < worst {
                worst = e;
                at = (i, j);
            }
            values.push(e);
        }
    }
    if worst < -GAP_SLACK {
        return Err(LabError::InfeasiblePotentials {
            min_gap: worst,
            row: at.0,
            col: at.1,
        });
    }
    Ok(GapField {
        rows: cost.rows,
        cols: cost.cols,
        values,
    })
}

/// ∫E dγ.
pub fn suboptimality(p: &Plan, e: &GapField) -> Result<f64> {
    if e.rows != p.rows() || e.cols != p.cols() {
        return Err(LabError::InvalidArgument(
            "gap field and plan shapes differ".into(),
        ));
    }
    Ok(p.coupling.iter().zip(&e.values).map(|(g, v)| g * v).sum())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnvelopeCheck {
    pub eps: f64,
    pub h: f64,
    /// (OT_{ε+h} − OT_{ε−h}) / 2h
    pub derivative: f64,
    pub entropy: f64,
    pub residual: f64,
}

/// |(OT_{ε+h} − OT_{ε−h})/(2h) − H(γ_ε)| from three Sinkhorn solves; the
/// outer solves start from the centre potentials.
pub fn envelope_residual(
    mu0: &Arc<GridMeasure>,
    mu1: &Arc<GridMeasure>,
    cost: &CostMatrix,
    eps: f64,
    h: f64,
    opts: &SinkhornOptions,
) -> Result<EnvelopeCheck> {
    if !(h > 0.0 && h < eps / 4.0) {
        return Err(LabError::InvalidArgument(format!(
            "step {h} must lie in (0, eps/4)"
        )));
    }
    let centre = sinkhorn(mu0, mu1, cost, eps, opts)?;
    envelope_from_centre(
        mu0,
        mu1,
        cost,
        &centre.plan,
        &centre.potentials.psi,
        eps,
        h,
        opts,
    )
}

/// Envelope check around an already solved centre plan; `psi` seeds the
/// two outer solves.
#[allow(clippy::too_many_arguments)]
pub fn envelope_from_centre(
    mu0: &Arc<GridMeasure>,
    mu1: &Arc<GridMeasure>,
    cost: &CostMatrix,
    centre: &Plan,
    psi: &[f64],
    eps: f64,
    h: f64,
    opts: &SinkhornOptions,
) -> Result<EnvelopeCheck> {
    if !(h > 0.0 && h < eps / 4.0) {
        return Err(LabError::InvalidArgument(format!(
            "step {h} must lie in (0, eps/4)"
        )));
    }
    let warm = SinkhornOptions {
        warm_start: Some(psi.to_vec()),
        ..opts.clone()
    };
    let ot = |e: f64| -> Result<f64> {
        let s = sinkhorn(mu0, mu1, cost, e, &warm)?;
        Ok(cost_term_with(&s.plan, cost) + e * plan_entropy_lebesgue(&s.plan))
    };
    let derivative = (ot(eps + h)? - ot(eps - h)?) / (2.0 * h);
    let entropy = plan_entropy_lebesgue(centre);
    Ok(EnvelopeCheck {
        eps,
        h,
        derivative,
        entropy,
        residual: (derivative - entropy).abs(),
    })
}
