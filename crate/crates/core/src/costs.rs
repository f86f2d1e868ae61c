//! Ground costs with analytic cross-derivatives, twist certification and
//! the modulus τ(r).

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{LabError, Result};
use crate::tolerances::TWIST_FLOOR;

type EvalFn = dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync;
type CrossFn = dyn Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync;

#[derive(Clone)]
enum Kind {
    Quadratic,
    Cosh,
    Custom {
        eval: Arc<EvalFn>,
        cross: Arc<CrossFn>,
    },
}

/// A C² cost c(x, y) on ℝ^d × ℝ^d.
#[derive(Clone)]
pub struct CostModel {
    dim: usize,
    label: String,
    kind: Kind,
}

impl fmt::Debug for CostModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CostModel({}, d={})", self.label, self.dim)
    }
}

/// c(x, y) = ½‖x − y‖².
pub fn quadratic_cost(d: usize) -> CostModel {
    assert!(d >= 1, "dimension must be positive");
    CostModel {
        dim: d,
        label: "quadratic".into(),
        kind: Kind::Quadratic,
    }
}

/// c(x, y) = cosh(x − y) − 1 on the line.
pub fn cosh_cost() -> CostModel {
    CostModel {
        dim: 1,
        label: "cosh".into(),
        kind: Kind::Cosh,
    }
}

impl CostModel {
    pub fn custom(
        dim: usize,
        label: &str,
        eval: impl Fn(&[f64], &[f64]) -> f64 + Send + Sync + 'static,
        cross: impl Fn(&[f64], &[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            label: label.into(),
            kind: Kind::Custom {
                eval: Arc::new(eval),
                cross: Arc::new(cross),
            },
        }
    }

    /// Looks up a built-in cost by label.
    pub fn from_label(label: &str, dim: usize) -> Result<Self> {
        match label {
            "quadratic" => Ok(quadratic_cost(dim)),
            "cosh" if dim == 1 => Ok(cosh_cost()),
            "cosh" => Err(LabError::InvalidArgument(
                "cosh cost is one-dimensional".into(),
            )),
            _ => Err(LabError::InvalidArgument(format!("unknown cost '{label}'"))),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn is_quadratic(&self) -> bool {
        matches!(self.kind, Kind::Quadratic)
    }

    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        match &self.kind {
            Kind::Quadratic => 0.5 * x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>(),
            Kind::Cosh => (x[0] - y[0]).cosh() - 1.0,
            Kind::Custom { eval, .. } => eval(x, y),
        }
    }

    /// ∇²ₓᵧc(x, y), entry (i, j) = ∂²c/∂xᵢ∂yⱼ.
    pub fn cross_derivative(&self, x: &[f64], y: &[f64]) -> DMatrix<f64> {
        match &self.kind {
            Kind::Quadratic => -DMatrix::identity(self.dim, self.dim),
            Kind::Cosh => DMatrix::from_element(1, 1, -(x[0] - y[0]).cosh()),
            Kind::Custom { cross, .. } => cross(x, y),
        }
    }

    /// Dense cost matrix between two node sets (flat, d coordinates each).
    pub fn matrix(&self, xs: &[f64], ys: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let (m, n) = (xs.len() / d, ys.len() / d);
        let mut out = Vec::with_capacity(m * n);
        for i in 0..m {
            let x = &xs[i * d..(i + 1) * d];
            for j in 0..n {
                out.push(self.eval(x, &ys[j * d..(j + 1) * d]));
            }
        }
        out
    }
}

/// Axis-aligned box in ℝ^{2d}; the first d ranges are x, the last d are y.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxDomain {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl BoxDomain {
    /// X × X for a cube X = [lo, hi]^d.
    pub fn square(lo: f64, hi: f64, d: usize) -> Self {
        Self {
            lo: vec![lo; 2 * d],
            hi: vec![hi; 2 * d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn volume(&self) -> f64 {
        self.lo.iter().zip(&self.hi).map(|(a, b)| b - a).product()
    }

    /// Regular lattice with `per_axis` points per coordinate, endpoints included.
    pub fn lattice(&self, per_axis: usize) -> (Vec<f64>, Vec<f64>) {
        let k = self.dim();
        let steps: Vec<f64> = (0..k)
            .map(|a| {
                if per_axis > 1 {
                    (self.hi[a] - self.lo[a]) / (per_axis - 1) as f64
                } else {
                    0.0
                }
            })
            .collect();
        let total = per_axis.pow(k as u32);
        let mut pts = Vec::with_capacity(total * k);
        let mut idx = vec![0usize; k];
        for _ in 0..total {
            for a in 0..k {
                pts.push(self.lo[a] + idx[a] as f64 * steps[a]);
            }
            for a in (0..k).rev() {
                idx[a] += 1;
                if idx[a] < per_axis {
                    break;
                }
                idx[a] = 0;
            }
        }
        (pts, steps)
    }
}

fn per_axis_for(n_samples: usize, k: usize) -> usize {
    let mut p = (n_samples as f64).powf(1.0 / k as f64).ceil() as usize;
    while p.pow(k as u32) < n_samples {
        p += 1;
    }
    p.max(2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwistCertificate {
    pub min_abs_det: f64,
    pub is_twisted: bool,
    pub samples: usize,
}

/// Minimum of |det ∇²ₓᵧc| over a regular lattice of the box.
pub fn twist_certificate(
    c: &CostModel,
    domain: &BoxDomain,
    n_samples: usize,
) -> Result<TwistCertificate> {
    if n_samples < 100 {
        return Err(LabError::InvalidArgument(format!(
            "n_samples {n_samples} below 100"
        )));
    }
    check_box(c, domain)?;
    let d = c.dim();
    let (pts, _) = domain.lattice(per_axis_for(n_samples, 2 * d));
    let samples = pts.len() / (2 * d);
    let min_abs_det = (0..samples)
        .map(|s| {
            let z = &pts[s * 2 * d..(s + 1) * 2 * d];
            c.cross_derivative(&z[..d], &z[d..]).determinant().abs()
        })
        .fold(f64::INFINITY, f64::min);
    Ok(TwistCertificate {
        min_abs_det,
        is_twisted: min_abs_det > TWIST_FLOOR,
        samples,
    })
}

fn check_box(c: &CostModel, domain: &BoxDomain) -> Result<()> {
    if domain.dim() != 2 * c.dim() || domain.hi.len() != domain.lo.len() {
        return Err(LabError::InvalidArgument(format!(
            "box of dimension {} for a cost on R^{}",
            domain.dim(),
            2 * c.dim()
        )));
    }
    if domain.lo.iter().zip(&domain.hi).any(|(a, b)| !(b >= a)) {
        return Err(LabError::InvalidArgument("box has hi < lo".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauEstimate {
    pub r: f64,
    /// largest ‖B(z′)⁻¹B(z) − I‖₂ seen, B = ∇²ₓᵧc
    pub tau: f64,
    pub samples: usize,
    pub pairs: usize,
}

/// Sampled τ(r) = sup over lattice pairs with ‖z − z′‖ ≤ r of
/// ‖∇²ₓᵧc(z′)⁻¹ ∇²ₓᵧc(z) − I‖₂. The lattice depends only on the box and
/// `n_samples`, so the estimate is nondecreasing in r.
pub fn tau_modulus(
    c: &CostModel,
    domain: &BoxDomain,
    r: f64,
    n_samples: usize,
) -> Result<TauEstimate> {
    check_box(c, domain)?;
    if !(r >= 0.0) {
        return Err(LabError::InvalidArgument(format!(
            "radius {r} must be nonnegative"
        )));
    }
    let d = c.dim();
    let k = 2 * d;
    let per = per_axis_for(n_samples.max(4), k);
    let (pts, steps) = domain.lattice(per);
    let samples = pts.len() / k;

    let mut mats = Vec::with_capacity(samples);
    let mut invs = Vec::with_capacity(samples);
    for s in 0..samples {
        let z = &pts[s * k..(s + 1) * k];
        let b = c.cross_derivative(&z[..d], &z[d..]);
        if b.determinant().abs() <= TWIST_FLOOR {
            return Err(LabError::SingularCrossDerivative { point: z.to_vec() });
        }
        invs.push(
            b.clone()
                .try_inverse()
                .ok_or_else(|| LabError::SingularCrossDerivative { point: z.to_vec() })?,
        );
        mats.push(b);
    }

    // offsets in lattice index space that can reach distance r
    let reach: Vec<isize> = steps
        .iter()
        .map(|h| {
            if *h > 0.0 {
                (r / h).floor() as isize
            } else {
                0
            }
        })
        .collect();
    let mut offsets: Vec<Vec<isize>> = vec![vec![]];
    for a in 0..k {
        let mut next = Vec::new();
        for o in &offsets {
            for t in -reach[a]..=reach[a] {
                let mut v = o.clone();
                v.push(t);
                next.push(v);
            }
        }
        offsets = next;
    }
    offsets.retain(|o| {
        let dist2: f64 = o
            .iter()
            .zip(&steps)
            .map(|(t, h)| (*t as f64 * h).powi(2))
            .sum();
        dist2 <= r * r * (1.0 + 1e-12) && o.iter().any(|t| *t != 0)
    });

    let stride: Vec<usize> = (0..k).map(|a| per.pow((k - 1 - a) as u32)).collect();
    let eye = DMatrix::<f64>::identity(d, d);
    let mut tau = 0.0f64;
    let mut pairs = 0usize;
    let mut idx = vec![0usize; k];
    for s in 0..samples {
        let mut rem = s;
        for a in 0..k {
            idx[a] = rem / stride[a];
            rem %= stride[a];
        }
        for o in &offsets {
            let mut t = 0usize;
            let mut ok = true;
            for a in 0..k {
                let v = idx[a] as isize + o[a];
                if v < 0 || v >= per as isize {
                    ok = false;
                    break;
                }
                t += v as usize * stride[a];
            }
            if !ok {
                continue;
            }
            pairs += 1;
            // pair (z = s, z′ = t)
            let m = &invs[t] * &mats[s] - &eye;
            tau = tau.max(spectral_norm(&m));
        }
    }
    Ok(TauEstimate {
        r,
        tau,
        samples,
        pairs,
    })
}

/// Spectral norm by power iteration on MᵀM.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 1 && m.ncols() == 1 {
        return m[(0, 0)].abs();
    }
    let g = m.transpose() * m;
    let n = g.nrows();
    let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + 0.1 * i as f64);
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..1000 {
        let w = &g * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let new_lambda = next.dot(&(&g * &next));
        let done = (new_lambda - lambda).abs() <= 1e-15 * new_lambda.abs();
        lambda = new_lambda;
        v = next;
        if done {
            break;
        }
    }
    lambda.max(0.0).sqrt()
}

/// Largest |analytic − central difference| over random points of the box.
pub fn cross_derivative_defect(
    c: &CostModel,
    domain: &BoxDomain,
    n_points: usize,
    seed: u64,
) -> f64 {
    let d = c.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-4;
    let mut worst = 0.0f64;
    for _ in 0..n_points {
        let z: Vec<f64> = (0..2 * d)
            .map(|a| rng.gen_range(domain.lo[a]..=domain.hi[a]))
            .collect();
        let (x, y) = z.split_at(d);
        let an = c.cross_derivative(x, y);
        for i in 0..d {
            for j in 0..d {
                let f = |sx: f64, sy: f64| {
                    let mut xx = x.to_vec();
                    let mut yy = y.to_vec();
                    xx[i] += sx;
                    yy[j] += sy;
                    c.eval(&xx, &yy)
                };
                let fd = (f(h, h) - f(h, -h) - f(-h, h) + f(-h, -h)) / (4.0 * h * h);
                worst = worst.max((fd - an[(i, j)]).abs());
            }
        }
    }
    worst
}
