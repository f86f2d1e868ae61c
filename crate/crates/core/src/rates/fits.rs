//! Least-squares rate fits over a sweep. All fits are deterministic
//! functions of the records.

use std::f64::consts::PI;

use serde::Serialize;

use super::sweep::EpsSweepResult;
use crate::error::{LabError, Result};
use crate::tolerances::GAP_SLACK;

/// W₂ values at or below this are indistinguishable from LP round-off.
pub const W2_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    /// q = slope·ε (through the origin)
    LinearInEps,
    /// q = slope·ln ε + intercept
    AffineInLogEps,
    /// ln q = slope·ln ε + intercept
    Loglog,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub model: FitModel,
    pub slope: f64,
    pub intercept: f64,
    pub max_residual: f64,
    pub points: usize,
    /// same model with weights ∝ 1/ε: (slope, intercept)
    pub weighted: [f64; 2],
    /// [min, max] of the per-point ratios q/ε, where meaningful
    pub ratio_bracket: Option<[f64; 2]>,
    /// intercept with the slope pinned to its predicted value
    pub constrained_intercept: Option<f64>,
}

/// Weighted least squares for y = a·x + b (or y = a·x when `origin`).
fn line(x: &[f64], y: &[f64], w: &[f64], origin: bool) -> (f64, f64) {
    let sw: f64 = w.iter().sum();
    if origin {
        let sxy: f64 = x.iter().zip(y).zip(w).map(|((x, y), w)| w * x * y).sum();
        let sxx: f64 = x.iter().zip(w).map(|(x, w)| w * x * x).sum();
        return (sxy / sxx, 0.0);
    }
    let mx = x.iter().zip(w).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = y.iter().zip(w).map(|(y, w)| w * y).sum::<f64>() / sw;
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(w)
        .map(|((x, y), w)| w * (x - mx) * (y - my))
        .sum();
    let sxx: f64 = x.iter().zip(w).map(|(x, w)| w * (x - mx) * (x - mx)).sum();
    let a = sxy / sxx;
    (a, my - a * mx)
}

fn fit(model: FitModel, x: &[f64], y: &[f64], eps: &[f64]) -> Result<RateFit> {
    if x.len() < 3 {
        return Err(LabError::InvalidArgument(format!(
            "a fit needs at least 3 points, got {}",
            x.len()
        )));
    }
    let origin = model == FitModel::LinearInEps;
    let ones = vec![1.0; x.len()];
    let inv: Vec<f64> = eps.iter().map(|e| 1.0 / e).collect();
    let (slope, intercept) = line(x, y, &ones, origin);
    let (ws, wi) = line(x, y, &inv, origin);
    let max_residual = x
        .iter()
        .zip(y)
        .map(|(x, y)| (y - slope * x - intercept).abs())
        .fold(0.0, f64::max);
    Ok(RateFit {
        model,
        slope,
        intercept,
        max_residual,
        points: x.len(),
        weighted: [ws, wi],
        ratio_bracket: None,
        constrained_intercept: None,
    })
}

fn bracket(v: &[f64]) -> [f64; 2] {
    [
        v.iter().cloned().fold(f64::INFINITY, f64::min),
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    ]
}

fn eps_of(s: &EpsSweepResult) -> Vec<f64> {
    s.records.iter().map(|r| r.eps).collect()
}

/// Suboptimality ∫E dγ_ε against ε through the origin, with the bracket of
/// ratios ∫E dγ_ε / ε.
pub fn fit_suboptimality_slope(s: &EpsSweepResult) -> Result<RateFit> {
    let eps = eps_of(s);
    let q: Vec<f64> = s.records.iter().map(|r| r.suboptimality).collect();
    if let Some((e, v)) = eps.iter().zip(&q).find(|(_, v)| **v < -GAP_SLACK) {
        return Err(LabError::InvalidArgument(format!(
            "negative suboptimality {v:e} at eps={e}"
        )));
    }
    let mut f = fit(FitModel::LinearInEps, &eps, &q, &eps)?;
    let ratios: Vec<f64> = q.iter().zip(&eps).map(|(q, e)| q / e).collect();
    f.ratio_bracket = Some(bracket(&ratios));
    Ok(f)
}

/// H(γ_ε) on ln ε. The reported intercept has −(d/2)ln(2π) removed, so it
/// is directly comparable with H_m − d/2; `constrained_intercept` pins the
/// slope at −d/2.
pub fn fit_entropy_intercept(s: &EpsSweepResult) -> Result<RateFit> {
    let eps = eps_of(s);
    let half_d = 0.5 * s.dim as f64;
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let h: Vec<f64> = s.records.iter().map(|r| r.plan_entropy).collect();
    let mut f = fit(FitModel::AffineInLogEps, &x, &h, &eps)?;
    let shift = half_d * (2.0 * PI).ln();
    f.intercept += shift;
    f.weighted[1] += shift;
    let pinned = h
        .iter()
        .zip(&eps)
        .map(|(h, e)| h + half_d * (2.0 * PI * e).ln())
        .sum::<f64>()
        / h.len() as f64;
    f.constrained_intercept = Some(pinned);
    Ok(f)
}

/// ln W₂(γ_ε, γ₀) on ln ε; the bracket holds W₂²/ε.
pub fn fit_w2_rate(s: &EpsSweepResult) -> Result<RateFit> {
    let eps = eps_of(s);
    let w: Vec<f64> = s.records.iter().map(|r| r.w2_to_opt).collect();
    if let Some((e, v)) = eps.iter().zip(&w).find(|(_, v)| !(**v > W2_FLOOR)) {
        return Err(LabError::InvalidArgument(format!(
            "W2 value {v} at eps={e} is missing or below the LP floor"
        )));
    }
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = w.iter().map(|v| v.ln()).collect();
    let mut f = fit(FitModel::Loglog, &x, &y, &eps)?;
    let ratios: Vec<f64> = w.iter().zip(&eps).map(|(w, e)| w * w / e).collect();
    f.ratio_bracket = Some(bracket(&ratios));
    Ok(f)
}

/// (OT_ε − OT₀)/ε on ln ε; the intercept is the empirical constant C.
pub fn fit_value_rate(s: &EpsSweepResult) -> Result<RateFit> {
    let eps = eps_of(s);
    let x: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let y: Vec<f64> = s
        .records
        .iter()
        .map(|r| (r.ot_eps - s.ot0) / r.eps)
        .collect();
    let mut f = fit(FitModel::AffineInLogEps, &x, &y, &eps)?;
    let half_d = 0.5 * s.dim as f64;
    let pinned = y.iter().zip(&x).map(|(y, l)| y + half_d * l).sum::<f64>() / y.len() as f64;
    f.constrained_intercept = Some(pinned);
    Ok(f)
}

/// The sweep without its largest-ε point.
pub fn drop_largest_eps(s: &EpsSweepResult) -> EpsSweepResult {
    let mut t = s.clone();
    if !t.records.is_empty() {
        t.records.remove(0);
    }
    if !t.diagnostics.is_empty() {
        t.diagnostics.remove(0);
    }
    t
}
