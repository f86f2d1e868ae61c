//! Entropic and exact transport solvers.

mod brenier;
mod exact;
pub mod network_simplex;
mod sinkhorn;

use std::sync::Arc;

use crate::costs::CostModel;
use crate::error::{LabError, Result};
use crate::measures::GridMeasure;

pub use brenier::{brenier_gaussian, AffineMap};
pub use exact::{
    exact_ot_1d, exact_ot_lp, exact_ot_lp_with_budget, kantorovich_potentials, LpSolution,
    PotentialMethod,
};
pub use sinkhorn::{sinkhorn, SinkhornOptions, SinkhornSolution};

/// c(xᵢ, yⱼ) for every node pair, row-major.
#[derive(Debug, Clone)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
    /// per-axis factors when c = Σₖ cₖ(xₖ, yₖ) on product grids
    separable: Option<Arc<Vec<AxisCost>>>,
}

/// One additive factor cₖ(xₖ, yₖ) of a separable cost, as an m × n table.
#[derive(Debug, Clone)]
pub(crate) struct AxisCost {
    pub m: usize,
    pub n: usize,
    pub data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(mu0: &GridMeasure, mu1: &GridMeasure, c: &CostModel) -> Result<Self> {
        check_instance(mu0, mu1, c)?;
        let separable = if c.is_quadratic() && c.dim() > 1 {
            let axes = mu0
                .axes()
                .iter()
                .zip(mu1.axes())
                .map(|(a, b)| {
                    let mut data = Vec::with_capacity(a.count * b.count);
                    for i in 0..a.count {
                        for j in 0..b.count {
                            data.push(0.5 * (a.center(i) - b.center(j)).powi(2));
                        }
                    }
                    AxisCost {
                        m: a.count,
                        n: b.count,
                        data,
                    }
                })
                .collect();
            Some(Arc::new(axes))
        } else {
            None
        };
        Ok(Self {
            rows: mu0.len(),
            cols: mu1.len(),
            data: c.matrix(mu0.coords(), mu1.coords()),
            separable,
        })
    }

    /// Wraps a precomputed row-major table.
    pub fn from_data(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(LabError::InvalidArgument(format!(
                "{} entries for a {rows}x{cols} cost",
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            separable: None,
        })
    }

    pub(crate) fn separable(&self) -> Option<&[AxisCost]> {
        self.separable.as_deref().map(|v| v.as_slice())
    }

    /// The same cost without the separable factorization.
    pub fn dense_only(&self) -> Self {
        Self {
            separable: None,
            ..self.clone()
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

pub(crate) fn check_instance(mu0: &GridMeasure, mu1: &GridMeasure, c: &CostModel) -> Result<()> {
    if mu0.dim() != c.dim() || mu1.dim() != c.dim() {
        return Err(LabError::InvalidArgument(format!(
            "marginals of dimension {} and {} for a cost on R^{}",
            mu0.dim(),
            mu1.dim(),
            c.dim()
        )));
    }
    Ok(())
}

/// A coupling on the product grid. Entry (i, j) is the mass moved from
/// node i of the source to node j of the target.
#[derive(Debug, Clone)]
pub struct Plan {
    pub coupling: Vec<f64>,
    pub source: Arc<GridMeasure>,
    pub target: Arc<GridMeasure>,
}

impl Plan {
    pub fn new(
        coupling: Vec<f64>,
        source: Arc<GridMeasure>,
        target: Arc<GridMeasure>,
    ) -> Result<Self> {
        if coupling.len() != source.len() * target.len() {
            return Err(LabError::InvalidArgument(format!(
                "coupling of {} entries for a {}x{} product grid",
                coupling.len(),
                source.len(),
                target.len()
            )));
        }
        if let Some(k) = coupling.iter().position(|g| !(*g >= 0.0) || !g.is_finite()) {
            return Err(LabError::InvalidArgument(format!(
                "coupling entry {k} is {}",
                coupling[k]
            )));
        }
        Ok(Self {
            coupling,
            source,
            target,
        })
    }

    /// μ₀ ⊗ μ₁.
    pub fn product(source: Arc<GridMeasure>, target: Arc<GridMeasure>) -> Self {
        let mut coupling = Vec::with_capacity(source.len() * target.len());
        for a in source.weights() {
            coupling.extend(target.weights().iter().map(|b| a * b));
        }
        Self {
            coupling,
            source,
            target,
        }
    }

    pub fn rows(&self) -> usize {
        self.source.len()
    }

    pub fn cols(&self) -> usize {
        self.target.len()
    }

    pub fn dim(&self) -> usize {
        self.source.dim()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.coupling[i * self.cols() + j]
    }

    pub fn product_cell_volume(&self) -> f64 {
        self.source.cell_volume() * self.target.cell_volume()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.coupling
            .chunks(self.cols())
            .map(|r| r.iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let mut s = vec![0.0; self.cols()];
        for r in self.coupling.chunks(self.cols()) {
            for (acc, g) in s.iter_mut().zip(r) {
                *acc += g;
            }
        }
        s
    }

    /// L1 distance of both marginals to the reference weights.
    pub fn marginal_defect(&self) -> f64 {
        let l1 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>();
        l1(&self.row_sums(), self.source.weights()) + l1(&self.col_sums(), self.target.weights())
    }

    /// Atoms (x, y) ∈ ℝ^{2d} with their masses, skipping empty entries.
    pub fn atoms(&self) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim();
        let mut pts = Vec::new();
        let mut mass = Vec::new();
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                let g = self.get(i, j);
                if g > 0.0 {
                    pts.extend_from_slice(self.source.point(i));
                    pts.extend_from_slice(self.target.point(j));
                    mass.push(g);
                }
            }
        }
        debug_assert_eq!(pts.len(), mass.len() * 2 * d);
        (pts, mass)
    }
}

/// Dual pair (φ, ψ) on the nodes of μ₀ and μ₁.
#[derive(Debug, Clone, PartialEq)]
pub struct Potentials {
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// max over nodes of |φ − ψ^c|
    pub conjugacy_residual: f64,
}

impl Potentials {
    /// Assembles the pair, shifting the additive constant so that
    /// Σφw₀ = Σψw₁, and records the conjugacy residual against `cost`.
    pub fn normalized(
        mut phi: Vec<f64>,
        mut psi: Vec<f64>,
        a: &[f64],
        b: &[f64],
        cost: &CostMatrix,
    ) -> Self {
        let k = 0.5 * (dot(b, &psi) - dot(a, &phi));
        phi.iter_mut().for_each(|p| *p += k);
        psi.iter_mut().for_each(|p| *p -= k);
        let conjugacy_residual = conjugacy_residual(&phi, &psi, cost);
        Self {
            phi,
            psi,
            conjugacy_residual,
        }
    }

    pub fn dual_value(&self, a: &[f64], b: &[f64]) -> f64 {
        dot(a, &self.phi) + dot(b, &self.psi)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// φᵢ = minⱼ cᵢⱼ − ψⱼ.
pub fn c_transform_of_psi(psi: &[f64], cost: &CostMatrix) -> Vec<f64> {
    (0..cost.rows)
        .map(|i| {
            cost.row(i)
                .iter()
                .zip(psi)
                .map(|(c, p)| c - p)
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// ψⱼ = minᵢ cᵢⱼ − φᵢ.
pub fn c_transform_of_phi(phi: &[f64], cost: &CostMatrix) -> Vec<f64> {
    let mut psi = vec![f64::INFINITY; cost.cols];
    for (i, p) in phi.iter().enumerate() {
        for (s, c) in psi.iter_mut().zip(cost.row(i)) {
            *s = s.min(c - p);
        }
    }
    psi
}

pub fn conjugacy_residual(phi: &[f64], psi: &[f64], cost: &CostMatrix) -> f64 {
    c_transform_of_psi(psi, cost)
        .iter()
        .zip(phi)
        .map(|(t, p)| (t - p).abs())
        .fold(0.0, f64::max)
}

/// Replaces (φ, ψ) by (ψ^c, ψ^{cc}): feasible and mutually c-conjugate,
/// with a dual value at least as large as before.
pub fn double_c_transform(psi: &[f64], cost: &CostMatrix) -> (Vec<f64>, Vec<f64>) {
    let phi = c_transform_of_psi(psi, cost);
    let psi = c_transform_of_phi(&phi, cost);
    (phi, psi)
}
