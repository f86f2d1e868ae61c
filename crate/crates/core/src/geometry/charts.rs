//! Local geometry for twisted costs: the contact set, ball covers by
//! volume-preserving charts, the local detachment inequalities and the
//! local entropy lower bound.

use std::f64::consts::{E, PI};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::ViolationReport;
use crate::costs::{tau_modulus, twist_certificate, BoxDomain, CostModel};
use crate::error::{LabError, Result};
use crate::measures::GridMeasure;
use crate::quantities::{plan_entropy_lebesgue, suboptimality, GapField};
use crate::solvers::Plan;
use crate::tolerances::{GAP_SLACK, MASS_FLOOR, TAU_MARGIN};

/// Node pairs with E ≤ threshold, as indices and as points in ℝ^{2d}.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSetEstimate {
    pub threshold: f64,
    pub dim: usize,
    pub pairs: Vec<(usize, usize)>,
    pub points: Vec<f64>,
}

impl ContactSetEstimate {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn point(&self, k: usize) -> &[f64] {
        &self.points[k * 2 * self.dim..(k + 1) * 2 * self.dim]
    }
}

fn pair_point(mu0: &GridMeasure, mu1: &GridMeasure, i: usize, j: usize) -> Vec<f64> {
    let mut z = mu0.point(i).to_vec();
    z.extend_from_slice(mu1.point(j));
    z
}

/// {E ≤ eta}. With `gamma0`, fails unless every support entry of γ₀ is in
/// the set.
pub fn estimate_contact_set(
    e: &GapField,
    mu0: &GridMeasure,
    mu1: &GridMeasure,
    eta: f64,
    gamma0: Option<&Plan>,
) -> Result<ContactSetEstimate> {
    if e.rows != mu0.len() || e.cols != mu1.len() {
        return Err(LabError::InvalidArgument(
            "gap field does not match the grids".into(),
        ));
    }
    let mut pairs = Vec::new();
    let mut points = Vec::new();
    for i in 0..e.rows {
        for j in 0..e.cols {
            if e.get(i, j) <= eta {
                pairs.push((i, j));
                points.extend(pair_point(mu0, mu1, i, j));
            }
        }
    }
    if let Some(g0) = gamma0 {
        for i in 0..g0.rows() {
            for j in 0..g0.cols() {
                if g0.get(i, j) > MASS_FLOOR && e.get(i, j) > eta {
                    return Err(LabError::ContactLeak);
                }
            }
        }
    }
    Ok(ContactSetEstimate {
        threshold: eta,
        dim: mu0.dim(),
        pairs,
        points,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadiusChoice {
    pub r: f64,
    /// sampled τ(r)
    pub tau: f64,
    /// sampled τ(√2 r), the modulus that controls pairs inside one ball
    pub tau_pair: f64,
    /// (r, τ(√2 r)) for every radius tried
    pub scanned: Vec<(f64, f64)>,
}

/// Largest r = diam·2^{−k} whose sampled τ(√2 r) is at most TAU_MARGIN.
/// Two points of a ball of radius r span a rectangle whose corners are
/// within √2 r of the centre, hence the √2.
pub fn choose_radius(c: &CostModel, domain: &BoxDomain, n_samples: usize) -> Result<RadiusChoice> {
    let diam = domain
        .lo
        .iter()
        .zip(&domain.hi)
        .map(|(a, b)| (b - a).powi(2))
        .sum::<f64>()
        .sqrt();
    let mut scanned = Vec::new();
    let mut r = diam;
    for _ in 0..40 {
        let tau_pair = tau_modulus(c, domain, std::f64::consts::SQRT_2 * r, n_samples)?.tau;
        scanned.push((r, tau_pair));
        if tau_pair <= TAU_MARGIN {
            let tau = tau_modulus(c, domain, r, n_samples)?.tau;
            return Ok(RadiusChoice {
                r,
                tau,
                tau_pair,
                scanned,
            });
        }
        r *= 0.5;
    }
    Err(LabError::RadiusTooLarge {
        r,
        tau: scanned.last().map(|s| s.1).unwrap_or(f64::NAN),
    })
}

/// Ball B(centre, r) in ℝ^{2d} with the chart
/// Φ(x, y) = α(u − ū, v − v̄), u = ½(x − Ay), v = ½(x + Ay), A = ∇²ₓᵧc(centre).
#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub center: Vec<f64>,
    pub radius: f64,
    pub alpha: f64,
    pub a: DMatrix<f64>,
    pub kappa: f64,
    /// τ(√2 r), used for pairs inside the ball
    pub tau: f64,
    u0: DVector<f64>,
    v0: DVector<f64>,
}

impl Chart {
    fn new(c: &CostModel, center: Vec<f64>, radius: f64, kappa: f64, tau: f64) -> Result<Self> {
        let d = c.dim();
        let a = c.cross_derivative(&center[..d], &center[d..]);
        let det = a.determinant().abs();
        if !(det > 0.0) {
            return Err(LabError::SingularCrossDerivative { point: center });
        }
        // α^{2d} 2^{−d} |det A| = 1
        let alpha = (2f64.powi(d as i32) / det).powf(1.0 / (2 * d) as f64);
        let mut chart = Self {
            center,
            radius,
            alpha,
            a,
            kappa,
            tau,
            u0: DVector::zeros(d),
            v0: DVector::zeros(d),
        };
        let (u0, v0) = chart.uv(&chart.center.clone());
        chart.u0 = u0;
        chart.v0 = v0;
        Ok(chart)
    }

    pub fn dim(&self) -> usize {
        self.a.nrows()
    }

    /// Unscaled chart coordinates (u, v).
    pub fn uv(&self, z: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let d = self.dim();
        let x = DVector::from_column_slice(&z[..d]);
        let ay = &self.a * DVector::from_column_slice(&z[d..]);
        (0.5 * (&x - &ay), 0.5 * (x + ay))
    }

    /// Φ(z) = α(u − ū, v − v̄).
    pub fn map(&self, z: &[f64]) -> (DVector<f64>, DVector<f64>) {
        let (u, v) = self.uv(z);
        (self.alpha * (u - &self.u0), self.alpha * (v - &self.v0))
    }

    /// |det DΦ| = α^{2d} 2^{−d} |det A|.
    pub fn jacobian_det(&self) -> f64 {
        let d = self.dim() as i32;
        self.alpha.powi(2 * d) * 2f64.powi(-d) * self.a.determinant().abs()
    }

    pub fn contains(&self, z: &[f64]) -> bool {
        let d2: f64 = z
            .iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b).powi(2))
            .sum();
        d2 <= self.radius * self.radius
    }

    /// Volume of the u-image of the ball, vol(B_d) r^d √det(LLᵀ) with
    /// L = (α/2)[I, −A].
    fn u_image_volume(&self) -> f64 {
        let d = self.dim();
        let llt = (self.alpha * self.alpha / 4.0)
            * (DMatrix::identity(d, d) + &self.a * self.a.transpose());
        unit_ball_volume(d) * self.radius.powi(d as i32) * llt.determinant().sqrt()
    }
}

fn unit_ball_volume(d: usize) -> f64 {
    match d {
        0 => 1.0,
        1 => 2.0,
        _ => unit_ball_volume(d - 2) * 2.0 * PI / d as f64,
    }
}

/// κ = ¼ inf |det ∇²ₓᵧc|^{1/d} over the box, estimated on a lattice.
pub fn kappa(c: &CostModel, domain: &BoxDomain, n_samples: usize) -> Result<f64> {
    let cert = twist_certificate(c, domain, n_samples)?;
    if !cert.is_twisted {
        return Err(LabError::SingularCrossDerivative { point: vec![] });
    }
    Ok(0.25 * cert.min_abs_det.powf(1.0 / c.dim() as f64))
}

/// Greedy farthest-point cover of the contact set by balls of radius r.
/// The first centre is the first contact point; each next centre is the
/// point farthest from the current centres (first on ties).
pub fn build_charts(
    c: &CostModel,
    sigma: &ContactSetEstimate,
    r: f64,
    domain: &BoxDomain,
    n_samples: usize,
) -> Result<Vec<Chart>> {
    if sigma.is_empty() {
        return Err(LabError::InvalidArgument("empty contact set".into()));
    }
    if sigma.dim != c.dim() {
        return Err(LabError::InvalidArgument(
            "contact set and cost dimensions differ".into(),
        ));
    }
    let tau = tau_modulus(c, domain, r, n_samples)?.tau;
    if tau > 0.5 {
        return Err(LabError::RadiusTooLarge { r, tau });
    }
    let tau_pair = tau_modulus(c, domain, std::f64::consts::SQRT_2 * r, n_samples)?.tau;
    let k = kappa(c, domain, n_samples.max(100))?;

    let dist = |a: &[f64], b: &[f64]| {
        a.iter()
            .zip(b)
            .map(|(p, q)| (p - q).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    let mut centers = vec![0usize];
    let mut nearest: Vec<f64> = (0..sigma.len())
        .map(|s| dist(sigma.point(s), sigma.point(0)))
        .collect();
    loop {
        let (far, d) =
            nearest
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |(bi, bd), (i, &v)| {
                    if v > bd {
                        (i, v)
                    } else {
                        (bi, bd)
                    }
                });
        if d <= r {
            break;
        }
        centers.push(far);
        for (s, n) in nearest.iter_mut().enumerate() {
            *n = n.min(dist(sigma.point(s), sigma.point(far)));
        }
    }
    centers
        .into_iter()
        .map(|s| Chart::new(c, sigma.point(s).to_vec(), r, k, tau_pair))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalDetachmentReport {
    /// E(z) + E(z′) ≥ (1 − τ)‖Δv‖² − (1 + τ)‖Δu‖² over pairs in one ball
    pub mtw: ViolationReport,
    /// E(z) + E(z′) ≥ κ‖Δv_Φ‖² for |Δu_Φ| ≤ u_tol, with the u-defect
    /// charged at (1 + τ)‖Δu_Φ‖²/α²
    pub detachment: ViolationReport,
    /// (1 − τ)‖Δv‖² ≤ (1 + τ)‖Δu‖² + E + E′ on pairs with E ≤ GAP_SLACK
    pub graph: ViolationReport,
    pub charts: usize,
}

impl LocalDetachmentReport {
    pub fn max_violation(&self) -> f64 {
        self.mtw.max_violation.max(self.detachment.max_violation)
    }
}

/// Samples both local inequalities inside every chart. Pairs are grid
/// nodes (xᵢ, yⱼ) lying in the chart's ball.
pub fn check_local_detachment(
    e: &GapField,
    mu0: &GridMeasure,
    mu1: &GridMeasure,
    charts: &[Chart],
    n_pairs: usize,
    seed: u64,
) -> Result<LocalDetachmentReport> {
    if e.rows != mu0.len() || e.cols != mu1.len() {
        return Err(LabError::InvalidArgument(
            "gap field does not match the grids".into(),
        ));
    }
    let h = mu0
        .axes()
        .iter()
        .chain(mu1.axes())
        .map(|a| a.spacing)
        .fold(0.0, f64::max);
    let mut mtw = ViolationReport::new(seed);
    let mut det = ViolationReport::new(seed);
    let mut graph = ViolationReport::new(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    for chart in charts {
        let tau = chart.tau;
        let mut members: Vec<(usize, usize, DVector<f64>, DVector<f64>)> = Vec::new();
        for i in 0..mu0.len() {
            for j in 0..mu1.len() {
                let z = pair_point(mu0, mu1, i, j);
                if chart.contains(&z) {
                    let (u, v) = chart.uv(&z);
                    members.push((i, j, u, v));
                }
            }
        }
        if members.is_empty() {
            continue;
        }
        let a2 = chart.alpha * chart.alpha;
        // one grid cell moves u by at most h(1 + ‖A‖)/2
        let u_tol = chart.alpha * h * (1.0 + chart.a.norm()) / 2.0;
        let pair_terms = |p: usize, q: usize| {
            let (i, j, ref u, ref v) = members[p];
            let (k, l, ref up, ref vp) = members[q];
            let du = (u - up).norm_squared();
            let dv = (v - vp).norm_squared();
            (i, j, k, l, du, dv, e.get(i, j) + e.get(k, l))
        };

        for _ in 0..n_pairs {
            let p = rng.gen_range(0..members.len());
            let q = rng.gen_range(0..members.len());
            let (i, j, k, l, du, dv, es) = pair_terms(p, q);
            mtw.record((1.0 - tau) * dv - (1.0 + tau) * du - es, [i, j, k, l]);
        }

        let anchors: Vec<usize> = if members.len() <= 2000 {
            (0..members.len()).collect()
        } else {
            (0..2000).map(|_| rng.gen_range(0..members.len())).collect()
        };
        for &p in &anchors {
            for q in 0..members.len() {
                let (i, j, k, l, du, dv, es) = pair_terms(p, q);
                // Φ-coordinates: |Δu_Φ|² = α²du, |Δv_Φ|² = α²dv
                if (a2 * du).sqrt() <= u_tol {
                    det.record(chart.kappa * a2 * dv - (1.0 + tau) * du - es, [i, j, k, l]);
                }
            }
        }

        let support: Vec<usize> = (0..members.len())
            .filter(|&p| e.get(members[p].0, members[p].1) <= GAP_SLACK)
            .collect();
        for &p in &support {
            for &q in &support {
                let (i, j, k, l, du, dv, es) = pair_terms(p, q);
                graph.record((1.0 - tau) * dv - (1.0 + tau) * du - es, [i, j, k, l]);
            }
        }
    }
    Ok(LocalDetachmentReport {
        mtw,
        detachment: det,
        graph,
        charts: charts.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalEntropyBound {
    pub entropy: f64,
    pub integral_e: f64,
    pub kappa: f64,
    /// 1 ∧ min of E over nodes outside every chart
    pub e0: f64,
    /// constructive constant C
    pub constant_c: f64,
    pub charts: usize,
    pub bound: f64,
    pub slack: Option<f64>,
}

/// H(γ) ≥ −(d/2) ln ∫E dγ − (d/2) ln(4πe/(κd)) + (d/2) ln E₀ + C with
/// C = min(0, minᵢ Cᵢ) − (N + vol(X×X))/e and Cᵢ = −ln vol(u-image of ball i).
pub fn entropy_lower_bound_local(
    p: &Plan,
    e: &GapField,
    charts: &[Chart],
    domain: &BoxDomain,
) -> Result<LocalEntropyBound> {
    if charts.is_empty() {
        return Err(LabError::InvalidArgument("no charts".into()));
    }
    let d = p.dim();
    let df = d as f64;
    let kappa = charts[0].kappa;
    let entropy = plan_entropy_lebesgue(p);
    let integral_e = suboptimality(p, e)?;

    let mut outside_min = f64::INFINITY;
    for i in 0..p.rows() {
        for j in 0..p.cols() {
            let z = pair_point(&p.source, &p.target, i, j);
            if !charts.iter().any(|c| c.contains(&z)) {
                outside_min = outside_min.min(e.get(i, j));
            }
        }
    }
    let e0 = outside_min.min(1.0);
    if !(e0 > 0.0) {
        return Err(LabError::ContactLeak);
    }
    let ci = charts
        .iter()
        .map(|c| -c.u_image_volume().ln())
        .fold(f64::INFINITY, f64::min);
    let constant_c = ci.min(0.0) - (charts.len() as f64 + domain.volume()) / E;
    let bound = if integral_e > 0.0 {
        -0.5 * df * integral_e.ln() - 0.5 * df * (4.0 * PI * E / (kappa * df)).ln()
            + 0.5 * df * e0.ln()
            + constant_c
    } else {
        f64::INFINITY
    };
    Ok(LocalEntropyBound {
        entropy,
        integral_e,
        kappa,
        e0,
        constant_c,
        charts: charts.len(),
        bound,
        slack: if bound.is_finite() {
            Some(entropy - bound)
        } else {
            None
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{cosh_cost, quadratic_cost};
    use crate::solvers::{exact_ot_lp, CostMatrix};
    use std::sync::Arc;

    fn cosh_instance(
        n: usize,
    ) -> (
        Arc<GridMeasure>,
        Arc<GridMeasure>,
        CostMatrix,
        GapField,
        Plan,
    ) {
        let mu0 = Arc::new(GridMeasure::uniform(-1.0, 1.0, n).unwrap());
        let axes = vec![crate::measures::Axis::cells(-1.0, 1.0, n)];
        let (mu1, _) =
            GridMeasure::from_density(axes, |x| (-(x[0] - 0.2).powi(2) / 0.5).exp()).unwrap();
        let mu1 = Arc::new(mu1);
        let c = cosh_cost();
        let lp = exact_ot_lp(&mu0, &mu1, &c).unwrap();
        let cost = CostMatrix::new(&mu0, &mu1, &c).unwrap();
        let e = crate::quantities::duality_gap_field(&cost, &lp.potentials).unwrap();
        (mu0, mu1, cost, e, lp.plan)
    }

    #[test]
    fn quadratic_charts() {
        let dom = BoxDomain::square(-1.0, 1.0, 1);
        let rc = choose_radius(&quadratic_cost(1), &dom, 400).unwrap();
        assert_eq!(rc.tau, 0.0);
        let k = kappa(&quadratic_cost(1), &dom, 400).unwrap();
        assert!((k - 0.25).abs() < 1e-15);
    }

    #[test]
    fn cosh_charts_cover_and_preserve_volume() {
        let dom = BoxDomain::square(-1.0, 1.0, 1);
        let c = cosh_cost();
        assert!((kappa(&c, &dom, 400).unwrap() - 0.25).abs() < 1e-6);
        let rc = choose_radius(&c, &dom, 400).unwrap();
        assert!(rc.tau_pair <= TAU_MARGIN && rc.tau <= rc.tau_pair);
        let (mu0, mu1, _, e, g0) = cosh_instance(48);
        let sigma = estimate_contact_set(&e, &mu0, &mu1, crate::tolerances::CONTACT_ETA, Some(&g0))
            .unwrap();
        let charts = build_charts(&c, &sigma, rc.r, &dom, 400).unwrap();
        for s in 0..sigma.len() {
            assert!(charts.iter().any(|ch| ch.contains(sigma.point(s))));
        }
        for ch in &charts {
            assert!((ch.jacobian_det() - 1.0).abs() < 1e-9);
            let d = 1.0;
            let alpha_rule = ch.alpha.powf(2.0 * d) / 2f64.powf(d) * ch.a.determinant().abs();
            assert!((alpha_rule - 1.0).abs() < 1e-9);
        }
        let rep = check_local_detachment(&e, &mu0, &mu1, &charts, 2000, 7).unwrap();
        assert!(rep.mtw.holds(1e-6), "{:?}", rep.mtw);
        assert!(rep.detachment.holds(1e-6), "{:?}", rep.detachment);
        assert!(rep.graph.holds(1e-6), "{:?}", rep.graph);
        assert!(build_charts(&c, &sigma, 2.0, &dom, 400).is_err());
    }

    #[test]
    fn leaking_contact_set_is_detected() {
        let (mu0, mu1, _, e, g0) = cosh_instance(16);
        assert!(matches!(
            estimate_contact_set(&e, &mu0, &mu1, -1.0, Some(&g0)),
            Err(LabError::ContactLeak)
        ));
    }
}
