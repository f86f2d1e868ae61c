//! Log-domain Sinkhorn.
//!
//! The discrete problem is min ⟨c, γ⟩ + ε KL(γ | a⊗b); it has the same
//! minimizer as the Lebesgue-entropy problem because the marginals are
//! fixed. Potentials are ε-scaled log-scalings:
//!
//! ```text
//! γᵢⱼ = aᵢ bⱼ exp((fᵢ + gⱼ − cᵢⱼ)/ε).
//! ```

use std::sync::Arc;

use rayon::prelude::*;

use super::{dot, AxisCost, CostMatrix, Plan, Potentials};
use crate::error::{LabError, Result};
use crate::measures::GridMeasure;
use crate::tolerances::{MARGINAL_TOL, SINKHORN_MAX_ITER};

#[derive(Debug, Clone)]
pub struct SinkhornOptions {
    pub marginal_tol: f64,
    pub max_iter: usize,
    /// initial g (column potential), e.g. from a solve at a nearby ε
    pub warm_start: Option<Vec<f64>>,
    /// keep the dual objective after every half-step
    pub trace_dual: bool,
}

impl Default for SinkhornOptions {
    fn default() -> Self {
        Self {
            marginal_tol: MARGINAL_TOL,
            max_iter: SINKHORN_MAX_ITER,
            warm_start: None,
            trace_dual: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SinkhornSolution {
    pub plan: Plan,
    pub potentials: Potentials,
    pub iterations: usize,
    /// L1 defect of the row marginals (columns are exact on exit)
    pub marginal_error: f64,
    /// dual objective Σaf + Σbg − ε(Σγ − 1) after each half-step
    pub dual_trace: Vec<f64>,
}

impl SinkhornSolution {
    pub fn dual_value(&self) -> f64 {
        self.potentials
            .dual_value(self.plan.source.weights(), self.plan.target.weights())
    }
}

fn log_weights(w: &[f64]) -> Vec<f64> {
    w.iter()
        .map(|x| if *x > 0.0 { x.ln() } else { f64::NEG_INFINITY })
        .collect()
}

/// out[r] = −ε log Σₖ exp(h[k] − cost[r][k]/ε), one row of `cost` per r.
fn soft_min(cost: &[f64], width: usize, h: &[f64], eps: f64, out: &mut [f64]) {
    let inv = 1.0 / eps;
    out.par_iter_mut().enumerate().for_each(|(r, o)| {
        let row = &cost[r * width..(r + 1) * width];
        let mut mx = f64::NEG_INFINITY;
        for (c, hk) in row.iter().zip(h) {
            let t = hk - c * inv;
            if t > mx {
                mx = t;
            }
        }
        if mx == f64::NEG_INFINITY {
            *o = f64::INFINITY;
            return;
        }
        let mut s = 0.0;
        for (c, hk) in row.iter().zip(h) {
            s += (hk - c * inv - mx).exp();
        }
        *o = -eps * (mx + s.ln());
    });
}

/// Soft-min for a separable cost on product grids: one log-sum-exp sweep
/// per axis. `transpose` swaps the roles of rows and columns.
fn soft_min_separable(axes: &[AxisCost], transpose: bool, h: &[f64], eps: f64, out: &mut [f64]) {
    let inv = 1.0 / eps;
    let mut shape: Vec<usize> = axes
        .iter()
        .map(|a| if transpose { a.m } else { a.n })
        .collect();
    let mut buf = h.to_vec();
    for (k, ax) in axes.iter().enumerate() {
        let (len_out, len_in) = if transpose {
            (ax.n, ax.m)
        } else {
            (ax.m, ax.n)
        };
        let cost = |i: usize, j: usize| {
            if transpose {
                ax.data[j * ax.n + i]
            } else {
                ax.data[i * ax.n + j]
            }
        };
        let outer: usize = shape[..k].iter().product();
        let inner: usize = shape[k + 1..].iter().product();
        let mut next = vec![0.0; outer * len_out * inner];
        next.par_chunks_mut(inner)
            .enumerate()
            .for_each(|(oi, dst)| {
                let (o, i) = (oi / len_out, oi % len_out);
                let src = |j: usize| &buf[(o * len_in + j) * inner..(o * len_in + j + 1) * inner];
                dst.fill(f64::NEG_INFINITY);
                for j in 0..len_in {
                    let c = cost(i, j) * inv;
                    for (m, v) in dst.iter_mut().zip(src(j)) {
                        let t = v - c;
                        if t > *m {
                            *m = t;
                        }
                    }
                }
                let mut sum = vec![0.0; inner];
                for j in 0..len_in {
                    let c = cost(i, j) * inv;
                    for ((s, m), v) in sum.iter_mut().zip(dst.iter()).zip(src(j)) {
                        if *m > f64::NEG_INFINITY {
                            *s += (v - c - m).exp();
                        }
                    }
                }
                for (m, s) in dst.iter_mut().zip(&sum) {
                    if *m > f64::NEG_INFINITY {
                        *m += s.ln();
                    }
                }
            });
        shape[k] = len_out;
        buf = next;
    }
    for (o, v) in out.iter_mut().zip(&buf) {
        *o = -eps * v;
    }
}

/// Entropic transport between `mu0` and `mu1` at regularization `eps`.
pub fn sinkhorn(
    mu0: &Arc<GridMeasure>,
    mu1: &Arc<GridMeasure>,
    cost: &CostMatrix,
    eps: f64,
    opts: &SinkhornOptions,
) -> Result<SinkhornSolution> {
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(LabError::InvalidArgument(format!(
            "eps must be positive, got {eps}"
        )));
    }
    let (m, n) = (mu0.len(), mu1.len());
    if cost.rows != m || cost.cols != n {
        return Err(LabError::InvalidArgument(format!(
            "cost matrix {}x{} for marginals of sizes {m} and {n}",
            cost.rows, cost.cols
        )));
    }
    let a = mu0.weights();
    let b = mu1.weights();
    let (la, lb) = (log_weights(a), log_weights(b));

    let separable = cost.separable();
    let mut ct = Vec::new();
    if separable.is_none() {
        ct = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                ct[j * m + i] = cost.data[i * n + j];
            }
        }
    }

    let mut f = vec![0.0; m];
    let mut g = match &opts.warm_start {
        Some(g0) if g0.len() == n => g0.clone(),
        Some(g0) => {
            return Err(LabError::InvalidArgument(format!(
                "warm start of length {} for {n} columns",
                g0.len()
            )))
        }
        None => vec![0.0; n],
    };
    let mut h = vec![0.0; m.max(n)];
    let mut f_next = vec![0.0; m];
    let mut trace = Vec::new();

    // f ← F(g); then alternate g ← G(f), test rows, f ← F(g)
    let row_update = |g: &[f64], h: &mut Vec<f64>, out: &mut [f64]| {
        for j in 0..n {
            h[j] = lb[j] + g[j] / eps;
        }
        match separable {
            Some(axes) => soft_min_separable(axes, false, &h[..n], eps, out),
            None => soft_min(&cost.data, n, &h[..n], eps, out),
        }
    };
    let col_update = |f: &[f64], h: &mut Vec<f64>, out: &mut [f64]| {
        for i in 0..m {
            h[i] = la[i] + f[i] / eps;
        }
        match separable {
            Some(axes) => soft_min_separable(axes, true, &h[..m], eps, out),
            None => soft_min(&ct, m, &h[..m], eps, out),
        }
    };

    row_update(&g, &mut h, &mut f);
    if opts.trace_dual {
        trace.push(dot(a, &f) + dot(b, &g));
    }
    let mut iterations = 0;
    let mut err = f64::INFINITY;
    while iterations < opts.max_iter {
        col_update(&f, &mut h, &mut g);
        // recentre: (f + k, g − k) leaves the plan unchanged
        let k = 0.5 * (dot(b, &g) - dot(a, &f));
        f.iter_mut().for_each(|x| *x += k);
        g.iter_mut().for_each(|x| *x -= k);
        if opts.trace_dual {
            trace.push(dot(a, &f) + dot(b, &g));
        }
        iterations += 1;

        // the next row update gives the current row sums for free:
        // Σⱼ γᵢⱼ = aᵢ exp((fᵢ − F(g)ᵢ)/ε)
        row_update(&g, &mut h, &mut f_next);
        err = row_mass_defect(a, &f, &f_next, eps);
        if !err.is_finite() {
            return Err(LabError::NotConverged {
                iterations,
                marginal_error: err,
            });
        }
        if err <= opts.marginal_tol {
            break;
        }
        std::mem::swap(&mut f, &mut f_next);
        if opts.trace_dual {
            trace.push(dot(a, &f) + dot(b, &g));
        }
    }
    if err > opts.marginal_tol {
        return Err(LabError::NotConverged {
            iterations,
            marginal_error: err,
        });
    }

    let mut coupling = vec![0.0; m * n];
    coupling.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
        if a[i] == 0.0 {
            return;
        }
        let c = cost.row(i);
        for j in 0..n {
            if b[j] > 0.0 {
                row[j] = a[i] * b[j] * ((f[i] + g[j] - c[j]) / eps).exp();
            }
        }
    });
    let plan = Plan::new(coupling, mu0.clone(), mu1.clone())?;
    let potentials = Potentials::normalized(f, g, a, b, cost);
    Ok(SinkhornSolution {
        plan,
        potentials,
        iterations,
        marginal_error: err,
        dual_trace: trace,
    })
}

fn row_mass_defect(a: &[f64], f: &[f64], f_next: &[f64], eps: f64) -> f64 {
    a.iter()
        .zip(f)
        .zip(f_next)
        .map(|((x, p), q)| {
            if *x > 0.0 {
                x * ((p - q) / eps).exp_m1().abs()
            } else {
                0.0
            }
        })
        .sum()
}
