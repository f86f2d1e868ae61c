//! Probability measures discretized as piecewise-constant densities on
//! regular axis-aligned grids.
//!
//! Entropy convention: `entropy_lebesgue` returns ∫ρ ln ρ, the relative
//! entropy with respect to Lebesgue measure. This is the negative of the
//! Shannon differential entropy.

use std::f64::consts::{E, PI};

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::tolerances::MASS_TOL;

/// One axis of a regular grid; `start` is the center of the first cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Axis {
    pub start: f64,
    pub spacing: f64,
    pub count: usize,
}

impl Axis {
    /// `count` cells of equal width tiling `[lo, hi]`.
    pub fn cells(lo: f64, hi: f64, count: usize) -> Self {
        let spacing = (hi - lo) / count as f64;
        Self {
            start: lo + 0.5 * spacing,
            spacing,
            count,
        }
    }

    pub fn center(&self, k: usize) -> f64 {
        self.start + k as f64 * self.spacing
    }

    pub fn lo(&self) -> f64 {
        self.start - 0.5 * self.spacing
    }

    pub fn hi(&self) -> f64 {
        self.center(self.count - 1) + 0.5 * self.spacing
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridMeasure {
    axes: Vec<Axis>,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

impl GridMeasure {
    /// Builds a measure from nonnegative weights, renormalized to mass one.
    /// Nodes are in row-major order (last axis fastest).
    pub fn from_weights(axes: Vec<Axis>, weights: Vec<f64>) -> Result<Self> {
        if axes.is_empty() {
            return Err(LabError::InvalidArgument(
                "grid needs at least one axis".into(),
            ));
        }
        for a in &axes {
            if a.count == 0 || !(a.spacing > 0.0) || !a.start.is_finite() {
                return Err(LabError::InvalidArgument(format!("bad axis {a:?}")));
            }
        }
        let n: usize = axes.iter().map(|a| a.count).product();
        if weights.len() != n {
            return Err(LabError::InvalidArgument(format!(
                "{} weights for a grid of {} nodes",
                weights.len(),
                n
            )));
        }
        if let Some(k) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(LabError::InvalidArgument(format!(
                "weight {} at node {} is negative or not finite",
                weights[k], k
            )));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(LabError::InvalidArgument("weights sum to zero".into()));
        }
        let weights: Vec<f64> = weights.iter().map(|w| w / total).collect();

        let d = axes.len();
        let mut coords = vec![0.0; n * d];
        let mut idx = vec![0usize; d];
        for node in 0..n {
            for k in 0..d {
                coords[node * d + k] = axes[k].center(idx[k]);
            }
            for k in (0..d).rev() {
                idx[k] += 1;
                if idx[k] < axes[k].count {
                    break;
                }
                idx[k] = 0;
            }
        }
        Ok(Self {
            axes,
            coords,
            weights,
        })
    }

    /// Weights proportional to `density` at cell centers. Also returns the
    /// raw Riemann mass Σ density·cell_volume before renormalization.
    pub fn from_density(axes: Vec<Axis>, density: impl Fn(&[f64]) -> f64) -> Result<(Self, f64)> {
        let n: usize = axes.iter().map(|a| a.count).product();
        let probe = Self::from_weights(axes, vec![1.0; n])?;
        let raw: Vec<f64> = (0..n).map(|i| density(probe.point(i))).collect();
        let raw_mass = raw.iter().sum::<f64>() * probe.cell_volume();
        let m = Self::from_weights(probe.axes, raw)?;
        Ok((m, raw_mass))
    }

    /// Uniform measure on `[lo, hi]` with `n` cells.
    pub fn uniform(lo: f64, hi: f64, n: usize) -> Result<Self> {
        if !(hi > lo) {
            return Err(LabError::InvalidArgument(format!(
                "empty interval [{lo}, {hi}]"
            )));
        }
        Self::from_weights(vec![Axis::cells(lo, hi, n)], vec![1.0; n])
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Cell center of node `i`.
    pub fn point(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.coords[i * d..(i + 1) * d]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn cell_volume(&self) -> f64 {
        self.axes.iter().map(|a| a.spacing).product()
    }

    /// Total Lebesgue volume of the cells carrying positive mass.
    pub fn support_volume(&self) -> f64 {
        self.weights.iter().filter(|w| **w > 0.0).count() as f64 * self.cell_volume()
    }

    /// Largest distance between two nodes.
    pub fn diameter(&self) -> f64 {
        self.axes
            .iter()
            .map(|a| ((a.count - 1) as f64 * a.spacing).powi(2))
            .sum::<f64>()
            .sqrt()
    }

    pub fn mean(&self) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d];
        for (i, w) in self.weights.iter().enumerate() {
            for k in 0..d {
                m[k] += w * self.coords[i * d + k];
            }
        }
        m
    }

    /// Trace of the covariance of the node distribution.
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let d = self.dim();
        self.weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                w * (0..d)
                    .map(|k| (self.coords[i * d + k] - m[k]).powi(2))
                    .sum::<f64>()
            })
            .sum()
    }

    fn strides(&self) -> Vec<usize> {
        let d = self.dim();
        let mut s = vec![1usize; d];
        for k in (0..d.saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.axes[k + 1].count;
        }
        s
    }
}

/// Gaussian N(mean, cov) restricted to the box mean ± half_width·√diag,
/// `resolution` cells per axis, renormalized.
pub fn make_gaussian_grid(
    mean: &[f64],
    cov: &DMatrix<f64>,
    half_width_sigmas: f64,
    resolution: usize,
) -> Result<GridMeasure> {
    gaussian_grid_with_raw_mass(mean, cov, half_width_sigmas, resolution).map(|(m, _)| m)
}

/// As [`make_gaussian_grid`], also returning the Riemann mass captured by
/// the box before renormalization.
pub fn gaussian_grid_with_raw_mass(
    mean: &[f64],
    cov: &DMatrix<f64>,
    half_width_sigmas: f64,
    resolution: usize,
) -> Result<(GridMeasure, f64)> {
    let d = mean.len();
    if cov.nrows() != d || cov.ncols() != d || d == 0 {
        return Err(LabError::InvalidArgument(format!(
            "mean has length {d} but covariance is {}x{}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    if resolution < 8 {
        return Err(LabError::InvalidArgument(format!(
            "resolution {resolution} below minimum 8"
        )));
    }
    if !(half_width_sigmas > 0.0) {
        return Err(LabError::InvalidArgument(
            "half width must be positive".into(),
        ));
    }
    let chol = spd_cholesky(cov)?;
    let inv = chol.inverse();
    let log_norm = -0.5 * (d as f64) * (2.0 * PI).ln() - chol.l().diagonal().map(f64::ln).sum();

    let axes: Vec<Axis> = (0..d)
        .map(|k| {
            let s = cov[(k, k)].sqrt();
            Axis::cells(
                mean[k] - half_width_sigmas * s,
                mean[k] + half_width_sigmas * s,
                resolution,
            )
        })
        .collect();
    let mu = DVector::from_column_slice(mean);
    GridMeasure::from_density(axes, |x| {
        let z = DVector::from_column_slice(x) - &mu;
        (log_norm - 0.5 * z.dot(&(&inv * &z))).exp()
    })
}

pub(crate) fn spd_cholesky(m: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let asym = (m - m.transpose()).abs().max();
    if asym > 1e-12 * m.abs().max().max(1.0) {
        return Err(LabError::NotSpd(format!("asymmetry {asym:e}")));
    }
    m.clone()
        .cholesky()
        .ok_or_else(|| LabError::NotSpd("Cholesky factorization failed".into()))
}

/// H(m|Lebesgue) = Σ wᵢ ln(wᵢ / cell_volume), with 0 ln 0 = 0.
pub fn entropy_lebesgue(m: &GridMeasure) -> f64 {
    weighted_log_sum(m.weights(), m.cell_volume())
}

pub(crate) fn weighted_log_sum(w: &[f64], vol: f64) -> f64 {
    w.iter()
        .filter(|x| **x > 0.0)
        .map(|x| x * (x / vol).ln())
        .sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FisherEstimate {
    pub value: f64,
    /// positive cells next to a zero-weight cell; their gradient uses a
    /// one-sided stencil pointing into the support
    pub excluded_cells: Vec<usize>,
}

/// I(m) = Σ wᵢ ‖∇ ln ρ‖², with central differences of the log-density in
/// the interior and one-sided ones at the edges of the support block.
pub fn fisher_information(m: &GridMeasure) -> Result<FisherEstimate> {
    let d = m.dim();
    let strides = m.strides();
    let n = m.len();
    let w = m.weights();

    // bounding block of the support
    let mut lo = vec![usize::MAX; d];
    let mut hi = vec![0usize; d];
    let multi = |mut i: usize| -> Vec<usize> {
        let mut idx = vec![0; d];
        for k in 0..d {
            idx[k] = i / strides[k];
            i %= strides[k];
        }
        idx
    };
    for i in 0..n {
        if w[i] > 0.0 {
            let idx = multi(i);
            for k in 0..d {
                lo[k] = lo[k].min(idx[k]);
                hi[k] = hi[k].max(idx[k]);
            }
        }
    }
    let inside = |idx: &[usize]| (0..d).all(|k| idx[k] >= lo[k] && idx[k] <= hi[k]);
    let holes: Vec<usize> = (0..n)
        .filter(|&i| w[i] == 0.0 && inside(&multi(i)))
        .collect();
    if !holes.is_empty() {
        return Err(LabError::InteriorZeros { cells: holes });
    }

    let vol = m.cell_volume();
    let logd = |i: usize| (w[i] / vol).ln();
    let mut value = 0.0;
    let mut excluded = Vec::new();
    for i in 0..n {
        if w[i] == 0.0 {
            continue;
        }
        let idx = multi(i);
        let mut grad2 = 0.0;
        for k in 0..d {
            let h = m.axes()[k].spacing;
            let has_lo = idx[k] > lo[k];
            let has_hi = idx[k] < hi[k];
            let g = match (has_lo, has_hi) {
                (true, true) => (logd(i + strides[k]) - logd(i - strides[k])) / (2.0 * h),
                (false, true) => (logd(i + strides[k]) - logd(i)) / h,
                (true, false) => (logd(i) - logd(i - strides[k])) / h,
                (false, false) => 0.0,
            };
            grad2 += g * g;
        }
        let touches_zero = (0..d).any(|k| {
            (idx[k] == lo[k] && idx[k] > 0) || (idx[k] == hi[k] && idx[k] + 1 < m.axes()[k].count)
        });
        if touches_zero {
            excluded.push(i);
        }
        value += w[i] * grad2;
    }
    Ok(FisherEstimate {
        value,
        excluded_cells: excluded,
    })
}

/// Σ wᵢ ‖xᵢ‖^k.
pub fn moment(m: &GridMeasure, k: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "moment order {k} must be positive"
        )));
    }
    Ok((0..m.len())
        .map(|i| {
            let r = m.point(i).iter().map(|x| x * x).sum::<f64>().sqrt();
            m.weights()[i] * r.powf(k)
        })
        .sum())
}

/// N_k = exp(−2h/k) / (2πe), h an entropy in the ∫ρ ln ρ convention.
pub fn entropy_power(h: f64, k: usize) -> f64 {
    (-2.0 * h / k as f64).exp() / (2.0 * PI * E)
}

/// Mass-weighted check that weights sum to one.
pub fn is_normalized(m: &GridMeasure) -> bool {
    (m.weights().iter().sum::<f64>() - 1.0).abs() <= MASS_TOL
}
