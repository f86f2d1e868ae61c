//! Unregularized references: monotone rearrangement in 1D, the exact LP,
//! and Kantorovich potentials.

use std::sync::Arc;

use super::network_simplex::solve_transport;
use super::sinkhorn::{sinkhorn, SinkhornOptions};
use super::{check_instance, double_c_transform, CostMatrix, Plan, Potentials};
use crate::costs::CostModel;
use crate::error::{LabError, Result};
use crate::measures::GridMeasure;
use crate::tolerances::{LP_BUDGET, SINKHORN_LIMIT_FACTOR};

/// North-west-corner coupling of two sorted 1D grids; optimal for the
/// quadratic cost.
pub fn exact_ot_1d(
    mu0: &Arc<GridMeasure>,
    mu1: &Arc<GridMeasure>,
    c: &CostModel,
) -> Result<(Plan, f64)> {
    check_instance(mu0, mu1, c)?;
    if c.dim() != 1 || !c.is_quadratic() {
        return Err(LabError::WrongSolver(format!(
            "monotone rearrangement needs the 1D quadratic cost (got '{}', d={}); use exact_ot_lp",
            c.label(),
            c.dim()
        )));
    }
    let (a, b) = (mu0.weights(), mu1.weights());
    let (m, n) = (a.len(), b.len());
    let mut coupling = vec![0.0; m * n];
    let (mut i, mut j) = (0, 0);
    let (mut ra, mut rb) = (a[0], b[0]);
    loop {
        let f = ra.min(rb);
        coupling[i * n + j] += f;
        ra -= f;
        rb -= f;
        if i + 1 == m && j + 1 == n {
            break;
        }
        if (rb <= ra && j + 1 < n) || i + 1 == m {
            j += 1;
            rb = b[j];
        } else {
            i += 1;
            ra = a[i];
        }
    }
    let mut value = 0.0;
    for i in 0..m {
        for j in 0..n {
            let g = coupling[i * n + j];
            if g > 0.0 {
                value += g * c.eval(mu0.point(i), mu1.point(j));
            }
        }
    }
    Ok((Plan::new(coupling, mu0.clone(), mu1.clone())?, value))
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub plan: Plan,
    pub potentials: Potentials,
    pub value: f64,
    pub dual_value: f64,
    pub pivots: usize,
}

pub fn exact_ot_lp(
    mu0: &Arc<GridMeasure>,
    mu1: &Arc<GridMeasure>,
    c: &CostModel,
) -> Result<LpSolution> {
    let cost = CostMatrix::new(mu0, mu1, c)?;
    exact_ot_lp_with_budget(mu0, mu1, &cost, LP_BUDGET)
}

/// Exact transport by network simplex. The simplex duals are replaced by
/// their double c-transform, which keeps them optimal while making them
/// exactly feasible and mutually c-conjugate.
pub fn exact_ot_lp_with_budget(
    mu0: &Arc<GridMeasure>,
    mu1: &Arc<GridMeasure>,
    cost: &CostMatrix,
    budget: usize,
) -> Result<LpSolution> {
    let (m, n) = (mu0.len(), mu1.len());
    if m * n > budget {
        return Err(LabError::BudgetExceeded {
            size: m * n,
            budget,
        });
    }
    if cost.rows != m || cost.cols != n {
        return Err(LabError::InvalidArgument(
            "cost matrix does not match the marginals".into(),
        ));
    }
    let (a, b) = (mu0.weights(), mu1.weights());
    let sol = solve_transport(a, b, &|i, j| cost.get(i, j))?;
    let mut coupling = vec![0.0; m * n];
    for &(i, j, f) in &sol.arcs {
        coupling[i * n + j] += f;
    }
    let (phi, psi) = double_c_transform(&sol.psi, cost);
    let potentials = Potentials::normalized(phi, psi, a, b, cost);
    let dual_value = potentials.dual_value(a, b);
    Ok(LpSolution {
        plan: Plan::new(coupling, mu0.clone(), mu1.clone())?,
        potentials,
        value: sol.value,
        dual_value,
        pivots: sol.pivots,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PotentialMethod {
    Lp,
    /// Sinkhorn at ε = factor·diam² followed by a c-transform pass
    SinkhornLimit,
}

pub fn kantorovich_potentials(
    mu0: &Arc<GridMeasure>,
    mu1: &Arc<GridMeasure>,
    c: &CostModel,
    method: PotentialMethod,
) -> Result<Potentials> {
    let cost = CostMatrix::new(mu0, mu1, c)?;
    match method {
        PotentialMethod::Lp => Ok(exact_ot_lp_with_budget(mu0, mu1, &cost, LP_BUDGET)?.potentials),
        PotentialMethod::SinkhornLimit => {
            let diam = joint_diameter(mu0, mu1);
            let eps = SINKHORN_LIMIT_FACTOR * diam * diam;
            let opts = SinkhornOptions {
                marginal_tol: 1e-9,
                max_iter: 2_000_000,
                ..Default::default()
            };
            let sol = sinkhorn(mu0, mu1, &cost, eps, &opts)?;
            let (phi, psi) = double_c_transform(&sol.potentials.psi, &cost);
            Ok(Potentials::normalized(
                phi,
                psi,
                mu0.weights(),
                mu1.weights(),
                &cost,
            ))
        }
    }
}

/// Diameter of the bounding box of both supports.
fn joint_diameter(mu0: &GridMeasure, mu1: &GridMeasure) -> f64 {
    (0..mu0.dim())
        .map(|k| {
            let (a, b) = (mu0.axes()[k], mu1.axes()[k]);
            let lo = a.center(0).min(b.center(0));
            let hi = a.center(a.count - 1).max(b.center(b.count - 1));
            (hi - lo).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{cosh_cost, quadratic_cost};
    use crate::measures::{make_gaussian_grid, Axis};
    use nalgebra::DMatrix;

    fn gauss(mean: f64, var: f64, n: usize) -> Arc<GridMeasure> {
        Arc::new(make_gaussian_grid(&[mean], &DMatrix::from_element(1, 1, var), 6.0, n).unwrap())
    }

    #[test]
    fn monotone_coupling_values() {
        let mu = gauss(0.0, 1.0, 128);
        let (plan, v) = exact_ot_1d(&mu, &mu, &quadratic_cost(1)).unwrap();
        assert_eq!(v, 0.0);
        for i in 0..128 {
            for j in 0..128 {
                if i != j {
                    assert_eq!(plan.get(i, j), 0.0);
                }
            }
        }
        let (_, shift) = exact_ot_1d(
            &gauss(0.0, 1.0, 512),
            &gauss(1.0, 1.0, 512),
            &quadratic_cost(1),
        )
        .unwrap();
        assert!((shift - 0.5).abs() < 1e-3);
        assert!(matches!(
            exact_ot_1d(&mu, &mu, &cosh_cost()),
            Err(LabError::WrongSolver(_))
        ));
    }

    #[test]
    fn lp_small_cases() {
        let dirac = |x: f64| {
            Arc::new(
                GridMeasure::from_weights(
                    vec![Axis {
                        start: x,
                        spacing: 1.0,
                        count: 1,
                    }],
                    vec![1.0],
                )
                .unwrap(),
            )
        };
        let sol = exact_ot_lp(&dirac(0.3), &dirac(-1.2), &quadratic_cost(1)).unwrap();
        assert!((sol.value - 0.5 * 1.5f64.powi(2)).abs() < 1e-15);
        assert_eq!(sol.plan.coupling, vec![1.0]);

        let two = Arc::new(
            GridMeasure::from_weights(
                vec![Axis {
                    start: 0.0,
                    spacing: 1.0,
                    count: 2,
                }],
                vec![0.5, 0.5],
            )
            .unwrap(),
        );
        let sol = exact_ot_lp(&two, &two, &quadratic_cost(1)).unwrap();
        assert_eq!(sol.value, 0.0);
        assert_eq!(sol.plan.coupling, vec![0.5, 0.0, 0.0, 0.5]);
    }

    #[test]
    fn budget_is_enforced() {
        let mu = gauss(0.0, 1.0, 64);
        let cost = CostMatrix::new(&mu, &mu, &quadratic_cost(1)).unwrap();
        assert!(matches!(
            exact_ot_lp_with_budget(&mu, &mu, &cost, 100),
            Err(LabError::BudgetExceeded {
                size: 4096,
                budget: 100
            })
        ));
    }

    #[test]
    fn shifted_gaussians_dual_value() {
        let (mu0, mu1) = (gauss(0.0, 1.0, 256), gauss(1.0, 1.0, 256));
        let pot =
            kantorovich_potentials(&mu0, &mu1, &quadratic_cost(1), PotentialMethod::Lp).unwrap();
        let dv = pot.dual_value(mu0.weights(), mu1.weights());
        assert!((dv - 0.5).abs() < 1e-3);
        assert!(pot.conjugacy_residual < 1e-12);
    }
}
