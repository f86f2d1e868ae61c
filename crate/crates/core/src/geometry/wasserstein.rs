//! W₂ between discrete measures on ℝ^k by exact transport, and the two
//! Lipschitz-graph lemmas built on it.

use serde::Serialize;

use crate::error::{LabError, Result};
use crate::measures::GridMeasure;
use crate::quantities::GapField;
use crate::solvers::network_simplex::solve_transport;
use crate::solvers::{AffineMap, Plan};
use crate::tolerances::LP_BUDGET;

/// Weighted point cloud in ℝ^dim.
#[derive(Debug, Clone, PartialEq)]
pub struct Atoms {
    pub dim: usize,
    pub points: Vec<f64>,
    pub masses: Vec<f64>,
}

impl Atoms {
    pub fn new(dim: usize, points: Vec<f64>, masses: Vec<f64>) -> Result<Self> {
        if dim == 0 || points.len() != dim * masses.len() {
            return Err(LabError::InvalidArgument(format!(
                "{} coordinates for {} atoms in dimension {dim}",
                points.len(),
                masses.len()
            )));
        }
        if masses.iter().any(|m| !(*m >= 0.0) || !m.is_finite()) {
            return Err(LabError::InvalidArgument(
                "atom masses must be finite and nonnegative".into(),
            ));
        }
        Ok(Self {
            dim,
            points,
            masses,
        })
    }

    /// The atoms (xᵢ, yⱼ) of a plan in ℝ^{2d}.
    pub fn from_plan(p: &Plan) -> Self {
        let (points, masses) = p.atoms();
        Self {
            dim: 2 * p.dim(),
            points,
            masses,
        }
    }

    pub fn dirac(z: &[f64]) -> Self {
        Self {
            dim: z.len(),
            points: z.to_vec(),
            masses: vec![1.0],
        }
    }

    /// (id, T)#μ: atoms (xᵢ, T(xᵢ)) with the weights of μ.
    pub fn graph(mu: &GridMeasure, t: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        Self::graph_with_masses(mu, mu.weights(), t)
    }

    pub fn graph_with_masses(
        mu: &GridMeasure,
        masses: &[f64],
        t: impl Fn(&[f64]) -> Vec<f64>,
    ) -> Self {
        let d = mu.dim();
        let mut points = Vec::with_capacity(2 * d * mu.len());
        for i in 0..mu.len() {
            let x = mu.point(i);
            points.extend_from_slice(x);
            points.extend(t(x));
        }
        Self {
            dim: 2 * d,
            points,
            masses: masses.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.masses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * self.dim..(k + 1) * self.dim]
    }

    /// Keeps the `budget` heaviest nonzero atoms (ties by index) in index
    /// order, rescaled to the original total. Returns the dropped mass.
    fn truncated(&self, budget: usize) -> (Atoms, f64) {
        let mut keep: Vec<usize> = (0..self.len()).filter(|&k| self.masses[k] > 0.0).collect();
        if keep.len() > budget {
            keep.sort_by(|&a, &b| self.masses[b].total_cmp(&self.masses[a]).then(a.cmp(&b)));
            keep.truncate(budget);
            keep.sort_unstable();
        }
        let total: f64 = self.masses.iter().sum();
        let kept: f64 = keep.iter().map(|&k| self.masses[k]).sum();
        let scale = if kept > 0.0 { total / kept } else { 0.0 };
        let mut points = Vec::with_capacity(keep.len() * self.dim);
        let mut masses = Vec::with_capacity(keep.len());
        for &k in &keep {
            points.extend_from_slice(self.point(k));
            masses.push(self.masses[k] * scale);
        }
        (
            Atoms {
                dim: self.dim,
                points,
                masses,
            },
            total - kept,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct W2Result {
    pub w2: f64,
    pub w2_sq: f64,
    /// mass removed from each side before solving
    pub truncated_mass: [f64; 2],
    /// atoms entering the LP on each side
    pub atoms: [usize; 2],
}

/// Exact W₂ between two point clouds of equal mass, with ‖z − z′‖² as the
/// ground cost. Each side is truncated to its `atom_budget` heaviest atoms.
pub fn w2_atoms(a: &Atoms, b: &Atoms, atom_budget: usize) -> Result<W2Result> {
    if a.dim != b.dim {
        return Err(LabError::InvalidArgument(format!(
            "atoms live in R^{} and R^{}",
            a.dim, b.dim
        )));
    }
    if atom_budget == 0 {
        return Err(LabError::InvalidArgument(
            "atom budget must be positive".into(),
        ));
    }
    let (ta, ma) = a.truncated(atom_budget);
    let (tb, mb) = b.truncated(atom_budget);
    if ta.is_empty() || tb.is_empty() {
        return Err(LabError::InvalidArgument("a measure has no mass".into()));
    }
    let size = ta.len() * tb.len();
    if size > LP_BUDGET {
        return Err(LabError::BudgetExceeded {
            size,
            budget: LP_BUDGET,
        });
    }
    let sa: f64 = ta.masses.iter().sum();
    let sb: f64 = tb.masses.iter().sum();
    // normalize both sides to mass one so rounding cannot unbalance the LP
    let na: Vec<f64> = ta.masses.iter().map(|m| m / sa).collect();
    let nb: Vec<f64> = tb.masses.iter().map(|m| m / sb).collect();
    let k = a.dim;
    let cost = |i: usize, j: usize| {
        let (p, q) = (
            &ta.points[i * k..(i + 1) * k],
            &tb.points[j * k..(j + 1) * k],
        );
        p.iter().zip(q).map(|(x, y)| (x - y) * (x - y)).sum::<f64>()
    };
    let sol = solve_transport(&na, &nb, &cost)?;
    let w2_sq = (sol.value * sa).max(0.0);
    Ok(W2Result {
        w2: w2_sq.sqrt(),
        w2_sq,
        truncated_mass: [ma, mb],
        atoms: [ta.len(), tb.len()],
    })
}

/// W₂(a, b) between plans seen as measures on ℝ^{2d}.
pub fn w2_between_plans(a: &Plan, b: &Plan, atom_budget: usize) -> Result<W2Result> {
    if a.dim() != b.dim() {
        return Err(LabError::InvalidArgument(
            "plans of different dimension".into(),
        ));
    }
    w2_atoms(&Atoms::from_plan(a), &Atoms::from_plan(b), atom_budget)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzGraphBound {
    /// (1 + L)² W₂²(μ, ν)
    pub lhs: f64,
    /// ∫ Var(ν_x) dν₀
    pub rhs: f64,
    pub w2_sq: f64,
}

impl LipschitzGraphBound {
    pub fn violation(&self) -> f64 {
        self.rhs - self.lhs
    }
}

/// ∫ Var(ν_x) dν₀ for atoms in ℝ^{2d}: atoms sharing exactly the same x
/// form one conditional law.
fn conditional_variance(nu: &Atoms, d: usize) -> f64 {
    let mut order: Vec<usize> = (0..nu.len()).collect();
    let x = |k: usize| &nu.points[k * 2 * d..k * 2 * d + d];
    order.sort_by(|&a, &b| {
        x(a).iter()
            .zip(x(b))
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut total = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x(order[end]) == x(order[start]) {
            end += 1;
        }
        let group = &order[start..end];
        let mass: f64 = group.iter().map(|&k| nu.masses[k]).sum();
        if mass > 0.0 {
            for c in 0..d {
                let y = |k: usize| nu.points[k * 2 * d + d + c];
                let mean = group.iter().map(|&k| nu.masses[k] * y(k)).sum::<f64>() / mass;
                total += group
                    .iter()
                    .map(|&k| nu.masses[k] * (y(k) - mean).powi(2))
                    .sum::<f64>();
            }
        }
        start = end;
    }
    total
}

/// (1 + L)² W₂²(μ, ν) against ∫ Var(ν_x) dν₀, where μ sits on the graph of
/// an L-Lipschitz map and ν is any measure on ℝ^{2d}.
pub fn lipschitz_graph_w2_bound(
    nu: &Atoms,
    mu_graph: &Atoms,
    l: f64,
    atom_budget: usize,
) -> Result<LipschitzGraphBound> {
    if nu.dim % 2 != 0 || nu.dim != mu_graph.dim {
        return Err(LabError::InvalidArgument(
            "both measures must live on the same product space".into(),
        ));
    }
    if !(l >= 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "Lipschitz constant {l} must be nonnegative"
        )));
    }
    let w = w2_atoms(nu, mu_graph, atom_budget)?;
    Ok(LipschitzGraphBound {
        lhs: (1.0 + l).powi(2) * w.w2_sq,
        rhs: conditional_variance(nu, nu.dim / 2),
        w2_sq: w.w2_sq,
    })
}

/// The chain W₂²(γ, (id,T)#μ₀) ≤ ∫‖y − T(x)‖² dγ ≤ 2L ∫E dγ, and the
/// barycentric error ‖T_γ − T‖²_{L²(μ₀)}.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MapGapReport {
    /// W₂² from γ to the graph plan of T; None when not requested
    pub w2_sq: Option<f64>,
    pub map_integral: f64,
    /// 2L ∫E dγ
    pub two_l_e: f64,
    pub barycentric_sq: f64,
    /// min over supp γ of 2L·E − ‖y − T(x)‖²
    pub pointwise_slack: f64,
    pub lipschitz: f64,
}

impl MapGapReport {
    /// Smallest slack along the chain (negative means a violated link).
    pub fn chain_slack(&self) -> f64 {
        let mut s = (self.two_l_e - self.map_integral).min(self.pointwise_slack);
        if let Some(w) = self.w2_sq {
            s = s.min(self.map_integral - w);
        }
        s
    }
}

pub fn map_gap_bounds(
    p: &Plan,
    t: &AffineMap,
    e: &GapField,
    atom_budget: Option<usize>,
) -> Result<MapGapReport> {
    let d = p.dim();
    if t.dim() != d || e.rows != p.rows() || e.cols != p.cols() {
        return Err(LabError::InvalidArgument(
            "map, gap field and plan disagree".into(),
        ));
    }
    let l = t.lipschitz;
    let rows = p.row_sums();
    let mut map_integral = 0.0;
    let mut gap_integral = 0.0;
    let mut pointwise = f64::INFINITY;
    let mut barycentric = 0.0;
    for i in 0..p.rows() {
        let tx = t.apply(p.source.point(i));
        let mut bary = vec![0.0; d];
        for j in 0..p.cols() {
            let g = p.get(i, j);
            if g <= 0.0 {
                continue;
            }
            let y = p.target.point(j);
            let miss: f64 = y.iter().zip(&tx).map(|(a, b)| (a - b) * (a - b)).sum();
            map_integral += g * miss;
            gap_integral += g * e.get(i, j);
            pointwise = pointwise.min(2.0 * l * e.get(i, j) - miss);
            for (b, yk) in bary.iter_mut().zip(y) {
                *b += g * yk;
            }
        }
        if rows[i] > 0.0 {
            barycentric += bary
                .iter()
                .zip(&tx)
                .map(|(b, t)| (b / rows[i] - t).powi(2))
                .sum::<f64>()
                * rows[i];
        }
    }
    let w2_sq = match atom_budget {
        Some(budget) => {
            let graph = Atoms::graph_with_masses(&p.source, &rows, |x| t.apply(x));
            Some(w2_atoms(&Atoms::from_plan(p), &graph, budget)?.w2_sq)
        }
        None => None,
    };
    Ok(MapGapReport {
        w2_sq,
        map_integral,
        two_l_e: 2.0 * l * gap_integral,
        barycentric_sq: barycentric,
        pointwise_slack: pointwise,
        lipschitz: l,
    })
}
