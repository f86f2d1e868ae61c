//! Minty coordinates, the two-point Minty inequality and the global
//! entropy lower bounds for the quadratic cost.

use std::f64::consts::{E, PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ViolationReport;
use crate::error::{LabError, Result};
use crate::measures::{entropy_power, GridMeasure};
use crate::quantities::{plan_entropy_lebesgue, suboptimality, GapField};
use crate::solvers::Plan;

/// (x, y) ↦ (u, v) = ((x + y)/√2, (x − y)/√2) on a flat list of points in
/// ℝ^{2d}. The map is an orthogonal involution, so it is its own inverse.
pub fn minty_transform(points: &[f64], d: usize) -> Vec<f64> {
    assert!(
        d > 0 && points.len() % (2 * d) == 0,
        "points must be (x, y) pairs in R^2d"
    );
    let mut out = vec![0.0; points.len()];
    for (z, w) in points.chunks_exact(2 * d).zip(out.chunks_exact_mut(2 * d)) {
        for k in 0..d {
            w[k] = (z[k] + z[d + k]) / SQRT_2;
            w[d + k] = (z[k] - z[d + k]) / SQRT_2;
        }
    }
    out
}

/// Samples the inequality E(z) + E(z′) ≥ ½(‖v′ − v‖² − ‖u′ − u‖²) over
/// `n_pairs` random node pairs plus every self-pair z = z′.
pub fn check_minty_trick(
    e: &GapField,
    mu0: &GridMeasure,
    mu1: &GridMeasure,
    n_pairs: usize,
    seed: u64,
) -> Result<ViolationReport> {
    if e.rows != mu0.len() || e.cols != mu1.len() || mu0.dim() != mu1.dim() {
        return Err(LabError::InvalidArgument(
            "gap field does not match the grids".into(),
        ));
    }
    let mut report = ViolationReport::new(seed);
    let eval = |i: usize, j: usize, k: usize, l: usize, report: &mut ViolationReport| {
        let (x, y, xp, yp) = (mu0.point(i), mu1.point(j), mu0.point(k), mu1.point(l));
        // ‖Δv‖² − ‖Δu‖² = −2⟨Δx, Δy⟩
        let cross: f64 = x
            .iter()
            .zip(xp)
            .zip(y.iter().zip(yp))
            .map(|((a, b), (c, d))| (a - b) * (c - d))
            .sum();
        let rhs = -cross;
        report.record(rhs - e.get(i, j) - e.get(k, l), [i, j, k, l]);
    };
    for i in 0..e.rows {
        for j in 0..e.cols {
            eval(i, j, i, j, &mut report);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..n_pairs {
        let (i, j) = (rng.gen_range(0..e.rows), rng.gen_range(0..e.cols));
        let (k, l) = (rng.gen_range(0..e.rows), rng.gen_range(0..e.cols));
        eval(i, j, k, l, &mut report);
    }
    Ok(report)
}

/// C_d = −(d/2) ln(4πe/d).
pub fn detachment_constant(d: usize) -> f64 {
    let d = d as f64;
    -0.5 * d * (4.0 * PI * E / d).ln()
}

/// The u-marginal μ̂ of a plan read as a piecewise-constant density.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MintyMarginal {
    /// H(μ̂ | ℋ^d)
    pub entropy: f64,
    /// trace of the covariance of μ̂
    pub variance: f64,
}

/// Whether every axis pair of spacings has an integer ratio, which the
/// half-cell lattice of [`minty_marginal`] requires.
pub fn spacings_commensurate(p: &Plan) -> bool {
    p.source.axes().iter().zip(p.target.axes()).all(|(a, b)| {
        let h = a.spacing.min(b.spacing);
        let (r0, r1) = (a.spacing / h, b.spacing / h);
        (r0 - r0.round()).abs() <= 1e-9 && (r1 - r1.round()).abs() <= 1e-9
    })
}

/// Entropy and variance of the u-marginal of `p`, where the plan density
/// is constant on product cells. Each cell pushes forward to a product of
/// trapezoids in u. In 1D the resulting density is piecewise linear and
/// its entropy is integrated exactly; for d > 1 a midpoint rule on the
/// half-cell lattice is used.
pub fn minty_marginal(p: &Plan) -> Result<MintyMarginal> {
    let d = p.dim();
    let (ax0, ax1) = (p.source.axes(), p.target.axes());
    // per axis: fine lattice step g (in s = x + y units), multiplicities
    let mut q0 = Vec::with_capacity(d);
    let mut q1 = Vec::with_capacity(d);
    let mut hmin = Vec::with_capacity(d);
    for k in 0..d {
        let (h0, h1) = (ax0[k].spacing, ax1[k].spacing);
        let h = h0.min(h1);
        let (r0, r1) = (h0 / h, h1 / h);
        if (r0 - r0.round()).abs() > 1e-9 || (r1 - r1.round()).abs() > 1e-9 {
            return Err(LabError::InvalidArgument(format!(
                "grid spacings {h0} and {h1} are not commensurate on axis {k}"
            )));
        }
        q0.push(r0.round() as usize);
        q1.push(r1.round() as usize);
        hmin.push(h);
    }

    // masses on the lattice of cell-center sums, in units of hmin
    let extent: Vec<usize> = (0..d)
        .map(|k| (ax0[k].count - 1) * q0[k] + (ax1[k].count - 1) * q1[k] + 1)
        .collect();
    let strides = row_major_strides(&extent);
    let mut centers = vec![0.0; extent.iter().product()];
    let (idx0, idx1) = (grid_indices(ax0), grid_indices(ax1));
    for i in 0..p.rows() {
        for j in 0..p.cols() {
            let g = p.get(i, j);
            if g > 0.0 {
                let mut at = 0;
                for k in 0..d {
                    at += (idx0[i * d + k] * q0[k] + idx1[j * d + k] * q1[k]) * strides[k];
                }
                centers[at] += g;
            }
        }
    }

    // variance: atoms plus the within-cell spread of (x + y)/√2
    let mut variance = 0.0;
    for k in 0..d {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (flat, w) in centers.iter().enumerate() {
            if *w > 0.0 {
                let t = ((flat / strides[k]) % extent[k]) as f64 * hmin[k];
                m1 += w * t;
                m2 += w * t * t;
            }
        }
        let (h0, h1) = (ax0[k].spacing, ax1[k].spacing);
        variance += 0.5 * ((m2 - m1 * m1).max(0.0) + (h0 * h0 + h1 * h1) / 12.0);
    }

    // density of s = x + y on the half-cell lattice, one axis at a time
    let mut field = centers;
    let mut shape = extent.clone();
    let midpoint = d > 1;
    for k in 0..d {
        let kernel = trapezoid_samples(ax0[k].spacing, ax1[k].spacing, hmin[k], midpoint);
        let (f, len) = convolve_axis(&field, &shape, k, &kernel);
        field = f;
        shape[k] = len;
    }
    // in u = s/√2 the density picks up 2^{d/2} and the cell volume shrinks by it
    let jac = 2f64.powf(0.5 * d as f64);
    let cell: f64 = hmin.iter().map(|h| 0.5 * h / SQRT_2).product();
    let entropy = if d == 1 {
        let step = cell;
        let mut s = 0.0;
        for w in field.windows(2) {
            s += linear_segment_entropy(w[0] * jac, w[1] * jac, step);
        }
        s
    } else {
        field
            .iter()
            .filter(|v| **v > 0.0)
            .map(|v| {
                let rho = v * jac;
                rho * rho.ln() * cell
            })
            .sum()
    };
    Ok(MintyMarginal { entropy, variance })
}

fn grid_indices(axes: &[crate::measures::Axis]) -> Vec<usize> {
    let d = axes.len();
    let n: usize = axes.iter().map(|a| a.count).product();
    let mut out = vec![0usize; n * d];
    let mut idx = vec![0usize; d];
    for node in 0..n {
        out[node * d..(node + 1) * d].copy_from_slice(&idx);
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < axes[k].count {
                break;
            }
            idx[k] = 0;
        }
    }
    out
}

fn row_major_strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for k in (0..shape.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * shape[k + 1];
    }
    s
}

/// Density of the sum of independent uniforms of widths h0 and h1 sampled
/// on the half-step lattice g = hmin/2, centred at 0. With `midpoint` the
/// samples sit at cell midpoints; otherwise at nodes (endpoints are zero).
fn trapezoid_samples(h0: f64, h1: f64, hmin: f64, midpoint: bool) -> Vec<f64> {
    let g = 0.5 * hmin;
    let half = 0.5 * (h0 + h1);
    let reach = (half / g).round() as isize;
    let dens = |t: f64| {
        let lo = (t - 0.5 * h0).max(-0.5 * h1);
        let hi = (t + 0.5 * h0).min(0.5 * h1);
        (hi - lo).max(0.0) / (h0 * h1)
    };
    if midpoint {
        (-reach..reach)
            .map(|k| dens((k as f64 + 0.5) * g))
            .collect()
    } else {
        (-reach..=reach).map(|k| dens(k as f64 * g)).collect()
    }
}

/// Spreads the center masses along axis k (step hmin = 2g) onto the
/// half-step lattice, convolved with the sampled kernel.
fn convolve_axis(field: &[f64], shape: &[usize], k: usize, ker: &[f64]) -> (Vec<f64>, usize) {
    let n_in = shape[k];
    let n_out = 2 * (n_in - 1) + ker.len();
    let outer: usize = shape[..k].iter().product();
    let inner: usize = shape[k + 1..].iter().product();
    let mut out = vec![0.0; outer * n_out * inner];
    for o in 0..outer {
        for c in 0..n_in {
            for t in 0..inner {
                let w = field[(o * n_in + c) * inner + t];
                if w == 0.0 {
                    continue;
                }
                for (s, kv) in ker.iter().enumerate() {
                    out[(o * n_out + 2 * c + s) * inner + t] += w * kv;
                }
            }
        }
    }
    (out, n_out)
}

/// ∫ ρ ln ρ over a segment of length `len` on which ρ is linear from a to b.
fn linear_segment_entropy(a: f64, b: f64, len: f64) -> f64 {
    let a = a.max(0.0);
    let b = b.max(0.0);
    let prim = |s: f64| {
        if s > 0.0 {
            0.5 * s * s * s.ln() - 0.25 * s * s
        } else {
            0.0
        }
    };
    let diff = b - a;
    if diff.abs() <= 1e-9 * a.max(b) {
        let m = 0.5 * (a + b);
        if m > 0.0 {
            len * (m * m.ln() + diff * diff / (24.0 * m))
        } else {
            0.0
        }
    } else {
        len * (prim(b) - prim(a)) / diff
    }
}

/// Global entropy lower bounds for the quadratic cost, together with the
/// individual links of the entropy-power chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlobalEntropyBound {
    pub entropy: f64,
    pub h_mu_hat: f64,
    pub integral_e: f64,
    pub w2_sq: Option<f64>,
    pub c_d: f64,
    /// −(d/2) ln ∫E dγ + H(μ̂) + C_d; +∞ when ∫E dγ = 0
    pub bound_e: f64,
    pub bound_w: Option<f64>,
    pub slack_e: Option<f64>,
    pub slack_w: Option<f64>,
    /// Var(μ̂)/d − N_d(μ̂) ≥ 0
    pub variance_link: f64,
    /// N_{2d}(γ)
    pub plan_entropy_power: f64,
    /// σ_γ(X + Y)/d · √∫E dγ
    pub power_chain_rhs: f64,
}

/// Entropy bounds in terms of ∫E dγ and, when given, W₂²(γ, γ₀).
pub fn entropy_lower_bound_quadratic(
    p: &Plan,
    e: &GapField,
    w2_sq: Option<f64>,
) -> Result<GlobalEntropyBound> {
    let d = p.dim();
    let df = d as f64;
    let entropy = plan_entropy_lebesgue(p);
    let integral_e = suboptimality(p, e)?;
    let mm = minty_marginal(p)?;
    let c_d = detachment_constant(d);
    let bound_from = |q: f64| {
        if q > 0.0 {
            -0.5 * df * q.ln() + mm.entropy + c_d
        } else {
            f64::INFINITY
        }
    };
    let bound_e = bound_from(integral_e);
    let bound_w = w2_sq.map(bound_from);
    let slack = |b: f64| {
        if b.is_finite() {
            Some(entropy - b)
        } else {
            None
        }
    };
    let n_mu_hat = entropy_power(mm.entropy, d);
    Ok(GlobalEntropyBound {
        entropy,
        h_mu_hat: mm.entropy,
        integral_e,
        w2_sq,
        c_d,
        bound_e,
        bound_w,
        slack_e: slack(bound_e),
        slack_w: bound_w.and_then(slack),
        variance_link: mm.variance / df - n_mu_hat,
        plan_entropy_power: entropy_power(entropy, 2 * d),
        // Var(X + Y) = 2 Var(μ̂)
        power_chain_rhs: (2.0 * mm.variance).sqrt() / df * integral_e.max(0.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{make_gaussian_grid, Axis};
    use nalgebra::DMatrix;
    use std::sync::Arc;

    #[test]
    fn transform_examples() {
        let r = minty_transform(&[1.0, 1.0, 1.0, -1.0], 1);
        assert!((r[0] - SQRT_2).abs() < 1e-15 && r[1].abs() < 1e-15);
        assert!(r[2].abs() < 1e-15 && (r[3] - SQRT_2).abs() < 1e-15);
        let back = minty_transform(&r, 1);
        assert!((back[3] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_d1() {
        assert!((detachment_constant(1) + 1.76551).abs() < 1e-5);
    }

    #[test]
    fn segment_entropy_matches_quadrature() {
        for (a, b) in [(0.0, 1.0), (0.3, 0.7), (2.0, 0.1), (0.5, 0.5 + 1e-12)] {
            let n = 200_000;
            let len = 0.37;
            let mut q = 0.0;
            for k in 0..n {
                let s = a + (b - a) * (k as f64 + 0.5) / n as f64;
                if s > 0.0 {
                    q += s * s.ln() * len / n as f64;
                }
            }
            assert!(
                (linear_segment_entropy(a, b, len) - q).abs() < 1e-9,
                "{a} {b}"
            );
        }
    }

    fn gauss(var: f64, n: usize, hw: f64) -> Arc<GridMeasure> {
        Arc::new(make_gaussian_grid(&[0.0], &DMatrix::from_element(1, 1, var), hw, n).unwrap())
    }

    #[test]
    fn product_of_uniforms_has_triangular_u_marginal() {
        // u = (x + y)/√2 for x, y ~ U[0,1]: triangle on [0, √2] with peak √2
        let u = Arc::new(GridMeasure::uniform(0.0, 1.0, 16).unwrap());
        let mm = minty_marginal(&Plan::product(u.clone(), u)).unwrap();
        let exact = 0.5 * 2f64.ln() - 0.5;
        assert!(
            (mm.entropy - exact).abs() < 1e-12,
            "{} vs {exact}",
            mm.entropy
        );
        assert!((mm.variance - 1.0 / 12.0).abs() < 1e-12);
    }

    #[test]
    fn u_marginal_of_gaussian_product() {
        // x, y ~ N(0,1) independent: u ~ N(0,1)
        let g = gauss(1.0, 256, 6.0);
        let mm = minty_marginal(&Plan::product(g.clone(), g)).unwrap();
        assert!((mm.entropy + 0.5 * (2.0 * PI * E).ln()).abs() < 1e-3);
        assert!((mm.variance - 1.0).abs() < 1e-3);
        // unequal but commensurate spacings
        let (a, b) = (gauss(1.0, 128, 6.0), gauss(0.25, 128, 6.0));
        let mm = minty_marginal(&Plan::product(a, b)).unwrap();
        let var = 0.5 * 1.25;
        assert!((mm.entropy + 0.5 * (2.0 * PI * E * var).ln()).abs() < 2e-3);
        assert!((mm.variance - var).abs() < 2e-3);
    }

    #[test]
    fn u_marginal_in_two_dimensions() {
        let cov = DMatrix::from_diagonal_element(2, 2, 1.0);
        let g = Arc::new(make_gaussian_grid(&[0.0, 0.0], &cov, 5.0, 24).unwrap());
        let mm = minty_marginal(&Plan::product(g.clone(), g.clone())).unwrap();
        assert!(
            (mm.entropy + (2.0 * PI * E).ln()).abs() < 0.02,
            "{}",
            mm.entropy
        );
        // discrete variance plus the within-cell h²/12 on each axis
        let h = g.axes()[0].spacing;
        assert!(
            (mm.variance - (g.variance() + 2.0 * h * h / 12.0)).abs() < 1e-12,
            "{mm:?}"
        );
        let odd = Arc::new(GridMeasure::uniform(0.0, 1.0, 7).unwrap());
        let other = Arc::new(
            GridMeasure::from_weights(
                vec![Axis {
                    start: 0.0,
                    spacing: 0.3,
                    count: 5,
                }],
                vec![1.0; 5],
            )
            .unwrap(),
        );
        assert!(minty_marginal(&Plan::product(odd, other)).is_err());
    }
}
