//! ε-sweeps: one Sinkhorn solve per ε plus every per-point diagnostic.

use serde::Serialize;

use super::presets::{Instance, Reference};
use crate::error::{LabError, Result};
use crate::geometry::{
    build_charts, check_local_detachment, check_minty_trick, choose_radius,
    entropy_lower_bound_local, entropy_lower_bound_quadratic, estimate_contact_set, map_gap_bounds,
    spacings_commensurate, w2_between_plans, Chart, GlobalEntropyBound, LocalDetachmentReport,
    LocalEntropyBound, MapGapReport, ViolationReport,
};
use crate::quantities::{
    cost_term_with, duality_gap_field, envelope_from_centre, marginal_entropy_mean,
    plan_entropy_lebesgue, schrodinger_from_parts, suboptimality, EnvelopeCheck, GapField,
    QuantityRecord,
};
use crate::solvers::{
    exact_ot_1d, exact_ot_lp_with_budget, sinkhorn, CostMatrix, Plan, Potentials, SinkhornOptions,
};
use crate::tolerances::{CONTACT_ETA, LP_BUDGET};

#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub sinkhorn: SinkhornOptions,
    /// central-difference envelope check at every ε, step ε/20
    pub envelope: bool,
    /// entropy lower bounds, map-gap chain, local bound per ε
    pub geometry: bool,
    /// random pairs for the sampled inequality checks
    pub n_pairs: usize,
    pub seed: u64,
    /// cap on atoms of γ_ε in W₂ LPs; default LP_BUDGET / |supp γ₀|
    pub atom_budget: Option<usize>,
    /// samples for the τ(r) scan
    pub tau_samples: usize,
}

impl Default for SweepOptions {
    fn default() -> Self {
        Self {
            sinkhorn: SinkhornOptions::default(),
            envelope: true,
            geometry: true,
            n_pairs: 10_000,
            seed: 0,
            atom_budget: None,
            tau_samples: 400,
        }
    }
}

/// Per-ε solver and inequality diagnostics, parallel to the records.
#[derive(Debug, Clone, Serialize)]
pub struct PointDiagnostics {
    pub eps: f64,
    pub iterations: usize,
    pub marginal_error: f64,
    /// |OT_ε − (ε𝒞_ε − (d/2)ε ln 2πε)|
    pub schrodinger_residual: f64,
    pub oracle_suboptimality: Option<f64>,
    pub oracle_entropy: Option<f64>,
    pub oracle_w2_sq: Option<f64>,
    pub w2_truncated_mass: Option<f64>,
    pub envelope: Option<EnvelopeCheck>,
    pub global_bound: Option<GlobalEntropyBound>,
    pub map_gap: Option<MapGapReport>,
    pub local_bound: Option<LocalEntropyBound>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ChartSummary {
    pub count: usize,
    pub radius: f64,
    pub tau: f64,
    pub kappa: f64,
    pub contact_points: usize,
}

/// Checks that depend only on γ₀ and its potentials.
#[derive(Debug, Clone, Serialize)]
pub struct ReferenceGeometry {
    pub minty: Option<ViolationReport>,
    pub local: Option<LocalDetachmentReport>,
    pub charts: Option<ChartSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepFailure {
    pub eps: f64,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EpsSweepResult {
    pub instance_id: String,
    pub dim: usize,
    /// ordered by decreasing ε
    pub records: Vec<QuantityRecord>,
    pub diagnostics: Vec<PointDiagnostics>,
    pub failures: Vec<SweepFailure>,
    pub ot0: f64,
    pub h_m: f64,
    /// continuum H_m when the marginals have a closed form
    pub h_m_analytic: Option<f64>,
    /// ∫E dγ₀
    pub reference_gap: f64,
    /// |primal − dual| of the exact LP, when it was solved
    pub lp_duality_gap: Option<f64>,
    /// |LP value − monotone coupling value| for 1D quadratic instances
    pub lp_vs_monotone: Option<f64>,
    pub geometry: ReferenceGeometry,
    pub coefficients_predicted: bool,
}

impl EpsSweepResult {
    pub fn eps_range(&self) -> [f64; 2] {
        let e: Vec<f64> = self.records.iter().map(|r| r.eps).collect();
        [
            e.iter().cloned().fold(f64::INFINITY, f64::min),
            e.iter().cloned().fold(0.0, f64::max),
        ]
    }
}

pub fn validate_eps_list(eps: &[f64]) -> Result<()> {
    if eps.len() < 3 {
        return Err(LabError::InvalidArgument(format!(
            "eps list needs at least 3 values, got {}",
            eps.len()
        )));
    }
    if let Some(e) = eps.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
        return Err(LabError::InvalidArgument(format!(
            "eps value {e} is not positive"
        )));
    }
    if eps.windows(2).any(|w| w[1] >= w[0]) {
        return Err(LabError::InvalidArgument(
            "eps list must be strictly decreasing".into(),
        ));
    }
    Ok(())
}

struct ReferenceSolution {
    plan: Plan,
    gap: GapField,
    ot0: f64,
    lp_duality_gap: Option<f64>,
    lp_vs_monotone: Option<f64>,
}

fn solve_reference(inst: &Instance, cost: &CostMatrix) -> Result<ReferenceSolution> {
    let (mu0, mu1) = (&inst.mu0, &inst.mu1);
    let lp_fits = mu0.len().saturating_mul(mu1.len()) <= LP_BUDGET;
    match inst.reference {
        Reference::Identity => {
            if mu0.axes() != mu1.axes()
                || mu0.weights() != mu1.weights()
                || !inst.cost.is_quadratic()
            {
                return Err(LabError::InvalidArgument(
                    "identity reference needs μ₀ = μ₁ and quadratic cost".into(),
                ));
            }
            let n = mu0.len();
            let mut coupling = vec![0.0; n * n];
            for (i, w) in mu0.weights().iter().enumerate() {
                coupling[i * n + i] = *w;
            }
            let plan = Plan::new(coupling, mu0.clone(), mu1.clone())?;
            let zero = Potentials::normalized(
                vec![0.0; n],
                vec![0.0; n],
                mu0.weights(),
                mu1.weights(),
                cost,
            );
            let gap = duality_gap_field(cost, &zero)?;
            let lp_duality_gap = if lp_fits {
                let lp = exact_ot_lp_with_budget(mu0, mu1, cost, LP_BUDGET)?;
                Some((lp.value - lp.dual_value).abs())
            } else {
                None
            };
            Ok(ReferenceSolution {
                plan,
                gap,
                ot0: 0.0,
                lp_duality_gap,
                lp_vs_monotone: None,
            })
        }
        Reference::Lp => {
            let lp = exact_ot_lp_with_budget(mu0, mu1, cost, LP_BUDGET)?;
            let gap = duality_gap_field(cost, &lp.potentials)?;
            let lp_duality_gap = Some((lp.value - lp.dual_value).abs());
            let (ot0, lp_vs_monotone) = if inst.dim() == 1 && inst.cost.is_quadratic() {
                let (_, v) = exact_ot_1d(mu0, mu1, &inst.cost)?;
                (v, Some((v - lp.value).abs()))
            } else {
                (lp.value, None)
            };
            Ok(ReferenceSolution {
                plan: lp.plan,
                gap,
                ot0,
                lp_duality_gap,
                lp_vs_monotone,
            })
        }
    }
}

fn reference_geometry(
    inst: &Instance,
    reference: &ReferenceSolution,
    opts: &SweepOptions,
) -> Result<(ReferenceGeometry, Option<Vec<Chart>>)> {
    let mut geo = ReferenceGeometry {
        minty: None,
        local: None,
        charts: None,
    };
    if !opts.geometry {
        return Ok((geo, None));
    }
    if inst.cost.is_quadratic() {
        geo.minty = Some(check_minty_trick(
            &reference.gap,
            &inst.mu0,
            &inst.mu1,
            opts.n_pairs,
            opts.seed,
        )?);
    }
    if !inst.charts {
        return Ok((geo, None));
    }
    let sigma = estimate_contact_set(
        &reference.gap,
        &inst.mu0,
        &inst.mu1,
        CONTACT_ETA,
        Some(&reference.plan),
    )?;
    let radius = choose_radius(&inst.cost, &inst.domain, opts.tau_samples)?;
    let charts = build_charts(&inst.cost, &sigma, radius.r, &inst.domain, opts.tau_samples)?;
    geo.local = Some(check_local_detachment(
        &reference.gap,
        &inst.mu0,
        &inst.mu1,
        &charts,
        opts.n_pairs,
        opts.seed,
    )?);
    geo.charts = Some(ChartSummary {
        count: charts.len(),
        radius: radius.r,
        tau: charts.iter().map(|c| c.tau).fold(0.0, f64::max),
        kappa: charts[0].kappa,
        contact_points: sigma.len(),
    });
    Ok((geo, Some(charts)))
}

/// Solves at every ε of `eps_list` (strictly decreasing, ≥ 3 values).
/// Points whose solve or diagnostics fail are listed in `failures`; the
/// sweep errors only if none succeeds.
pub fn run_sweep(inst: &Instance, eps_list: &[f64], opts: &SweepOptions) -> Result<EpsSweepResult> {
    validate_eps_list(eps_list)?;
    let cost = CostMatrix::new(&inst.mu0, &inst.mu1, &inst.cost)?;
    let reference = solve_reference(inst, &cost)?;
    let reference_gap = suboptimality(&reference.plan, &reference.gap)?;
    let (geometry, charts) = reference_geometry(inst, &reference, opts)?;
    let h_m = marginal_entropy_mean(&inst.mu0, &inst.mu1);
    let support = reference
        .plan
        .coupling
        .iter()
        .filter(|g| **g > 0.0)
        .count()
        .max(1);
    let atom_budget = opts.atom_budget.unwrap_or(LP_BUDGET / support);
    // the Brenier gap E_T(x,y) = f(x) + f*(y) − ⟨x,y⟩ for the map-gap chain
    let brenier_gap = match (&inst.brenier, opts.geometry) {
        (Some(t), true) => Some(GapField::from_fn(&inst.mu0, &inst.mu1, |x, y| t.gap(x, y))),
        _ => None,
    };

    let mut records = Vec::new();
    let mut diagnostics = Vec::new();
    let mut failures = Vec::new();
    let mut warm: Option<Vec<f64>> = None;
    for &eps in eps_list {
        let sk = SinkhornOptions {
            warm_start: warm.clone(),
            ..opts.sinkhorn.clone()
        };
        let point = (|| -> Result<(QuantityRecord, PointDiagnostics, Vec<f64>)> {
            let sol = sinkhorn(&inst.mu0, &inst.mu1, &cost, eps, &sk)?;
            let plan = &sol.plan;
            let d = inst.dim();
            let cost_term = cost_term_with(plan, &cost);
            let plan_entropy = plan_entropy_lebesgue(plan);
            let ot_eps = cost_term + eps * plan_entropy;
            let c_eps = schrodinger_from_parts(plan_entropy, cost_term, eps, d);
            let subopt = suboptimality(plan, &reference.gap)?;

            let mut w2_to_opt = f64::NAN;
            let mut w2_truncated_mass = None;
            if inst.w2 {
                let w = w2_between_plans(plan, &reference.plan, atom_budget)?;
                w2_to_opt = w.w2;
                w2_truncated_mass = Some(w.truncated_mass[0].max(w.truncated_mass[1]));
            }
            let envelope = if opts.envelope {
                Some(envelope_from_centre(
                    &inst.mu0,
                    &inst.mu1,
                    &cost,
                    plan,
                    &sol.potentials.psi,
                    eps,
                    eps / 20.0,
                    &opts.sinkhorn,
                )?)
            } else {
                None
            };
            let global_bound =
                if opts.geometry && inst.coefficients_predicted() && spacings_commensurate(plan) {
                    let w2_sq = w2_to_opt.is_finite().then_some(w2_to_opt * w2_to_opt);
                    Some(entropy_lower_bound_quadratic(plan, &reference.gap, w2_sq)?)
                } else {
                    None
                };
            let map_gap = match (&inst.brenier, &brenier_gap) {
                (Some(t), Some(e_t)) => Some(map_gap_bounds(plan, t, e_t, None)?),
                _ => None,
            };
            let local_bound = match &charts {
                Some(ch) => Some(entropy_lower_bound_local(
                    plan,
                    &reference.gap,
                    ch,
                    &inst.domain,
                )?),
                None => None,
            };
            let record = QuantityRecord {
                eps,
                ot_eps,
                cost_term,
                plan_entropy,
                suboptimality: subopt,
                c_eps,
                w2_to_opt,
                h_m,
                envelope_residual: envelope.as_ref().map(|e| e.residual),
            };
            let diag = PointDiagnostics {
                eps,
                iterations: sol.iterations,
                marginal_error: sol.marginal_error,
                schrodinger_residual: (ot_eps
                    - crate::quantities::ot_from_schrodinger(c_eps, eps, d))
                .abs(),
                oracle_suboptimality: inst.oracle.map(|g| g.suboptimality(eps)),
                oracle_entropy: inst.oracle.map(|g| g.plan_entropy(eps)),
                oracle_w2_sq: inst.oracle.filter(|_| inst.w2).map(|g| g.w2_sq_to_opt(eps)),
                w2_truncated_mass,
                envelope,
                global_bound,
                map_gap,
                local_bound,
            };
            Ok((record, diag, sol.potentials.psi.clone()))
        })();
        match point {
            Ok((r, d, psi)) => {
                records.push(r);
                diagnostics.push(d);
                warm = Some(psi);
            }
            Err(e) => failures.push(SweepFailure {
                eps,
                error: e.to_string(),
            }),
        }
    }
    if records.is_empty() {
        let msg = failures
            .iter()
            .map(|f| format!("eps={}: {}", f.eps, f.error))
            .collect::<Vec<_>>()
            .join("; ");
        return Err(LabError::SweepFailed(msg));
    }
    Ok(EpsSweepResult {
        instance_id: inst.id.clone(),
        dim: inst.dim(),
        records,
        diagnostics,
        failures,
        ot0: reference.ot0,
        h_m,
        h_m_analytic: inst.h_m_analytic,
        reference_gap,
        lp_duality_gap: reference.lp_duality_gap,
        lp_vs_monotone: reference.lp_vs_monotone,
        geometry,
        coefficients_predicted: inst.coefficients_predicted(),
    })
}
