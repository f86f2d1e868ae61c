//! Named instances and their analytic references.

use std::f64::consts::{E, PI};
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::costs::{cosh_cost, quadratic_cost, BoxDomain, CostModel};
use crate::error::{LabError, Result};
use crate::measures::{make_gaussian_grid, Axis, GridMeasure};
use crate::solvers::{brenier_gaussian, AffineMap};

/// Gaussian grids are truncated at this many standard deviations.
pub const GAUSSIAN_HALF_WIDTH: f64 = 6.0;

/// Truncation for the W₂ preset.
pub const LIPSCHITZ_HALF_WIDTH: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Gaussian1d,
    Gaussian2d,
    GaussianLipschitz,
    CoshCompact,
    Discrete2x2,
    Custom,
}

impl Preset {
    pub const ALL: [Preset; 6] = [
        Preset::Gaussian1d,
        Preset::Gaussian2d,
        Preset::GaussianLipschitz,
        Preset::CoshCompact,
        Preset::Discrete2x2,
        Preset::Custom,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Preset::Gaussian1d => "gaussian1d",
            Preset::Gaussian2d => "gaussian2d",
            Preset::GaussianLipschitz => "gaussian_lipschitz",
            Preset::CoshCompact => "cosh_compact",
            Preset::Discrete2x2 => "discrete2x2",
            Preset::Custom => "custom",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.name() == name)
            .ok_or_else(|| LabError::InvalidArgument(format!("unknown preset '{name}'")))
    }

    /// Standing hypotheses the instance satisfies.
    pub fn hypothesis(self) -> &'static str {
        match self {
            Preset::Gaussian1d | Preset::Gaussian2d | Preset::GaussianLipschitz => "H1/H2",
            Preset::CoshCompact => "H3",
            Preset::Discrete2x2 => "none (closed form)",
            Preset::Custom => "H1/H2 (quadratic) or H3 (cosh)",
        }
    }

    /// Per-axis cells for 1D presets, total nodes for gaussian2d.
    pub fn default_resolution(self) -> usize {
        match self {
            Preset::Gaussian1d => 512,
            Preset::Gaussian2d => 4096,
            Preset::GaussianLipschitz | Preset::CoshCompact => 128,
            Preset::Discrete2x2 => 2,
            Preset::Custom => 256,
        }
    }

    /// Default ε sweep. The compact instance starts lower: at ε = 0.4 the
    /// conditional spread √ε is comparable to the width of [−1, 1].
    pub fn default_eps(self) -> Vec<f64> {
        match self {
            Preset::CoshCompact => vec![0.05, 0.025, 0.0125, 0.00625, 0.003125],
            // ε enters through ε/(σ₀σ₁) and σ₀σ₁ = ½ here (and for the default custom spec)
            Preset::GaussianLipschitz | Preset::Custom => vec![0.2, 0.1, 0.05, 0.025, 0.0125],
            _ => super::DEFAULT_EPS.to_vec(),
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Preset::Gaussian1d => "N(0,1) -> N(0,1), quadratic cost",
            Preset::Gaussian2d => "N(0,I2) -> N(0,I2), quadratic cost, product grid",
            Preset::GaussianLipschitz => "N(0,1) -> N(0,1/4), quadratic cost, Brenier map x/2",
            Preset::CoshCompact => "U[-1,1] -> N(0.2,0.5^2) on [-1,1], cost cosh(x-y)-1",
            Preset::Discrete2x2 => "two atoms at 0 and 1 on each side, quadratic cost",
            Preset::Custom => "1D Gaussians with configurable moments and cost",
        }
    }

    /// Claims whose verdicts the preset produces.
    pub fn targets(self) -> &'static [&'static str] {
        match self {
            Preset::Gaussian1d | Preset::Gaussian2d => &[
                "suboptimality ~ (d/2) eps",
                "H(gamma_eps) = -(d/2) ln(2 pi eps) + H_m - d/2 + o(1)",
                "int E dgamma_eps = Theta(eps)",
                "(OT_eps - OT_0)/eps ~ -(d/2) ln eps + C",
                "entropy lower bounds",
            ],
            Preset::GaussianLipschitz => &[
                "suboptimality ~ (d/2) eps",
                "W2(gamma_eps, gamma_0) = Theta(sqrt eps)",
                "W2^2 <= int |y - T(x)|^2 dgamma_eps <= 2L int E dgamma_eps",
            ],
            Preset::CoshCompact => &[
                "int E dgamma_eps = Theta(eps)",
                "H(gamma_eps) = -(d/2) ln eps + O(1)",
                "W2^2(gamma_eps, gamma_0) >= c eps",
                "local detachment",
            ],
            Preset::Discrete2x2 => &["Sinkhorn matches the logistic closed form"],
            Preset::Custom => &[
                "suboptimality = Theta(eps)",
                "H(gamma_eps) = -(d/2) ln eps + O(1)",
            ],
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PresetInfo {
    pub name: &'static str,
    pub hypothesis: &'static str,
    pub description: &'static str,
    pub default_resolution: usize,
    pub default_eps: Vec<f64>,
    pub targets: Vec<&'static str>,
}

pub fn list_presets() -> Vec<PresetInfo> {
    Preset::ALL
        .into_iter()
        .map(|p| PresetInfo {
            name: p.name(),
            hypothesis: p.hypothesis(),
            description: p.description(),
            default_resolution: p.default_resolution(),
            default_eps: p.default_eps(),
            targets: p.targets().to_vec(),
        })
        .collect()
}

/// Parameters of the `custom` preset: N(mean0, sd0²) → N(mean1, sd1²).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CustomSpec {
    pub cost: String,
    pub mean0: f64,
    pub sd0: f64,
    pub mean1: f64,
    pub sd1: f64,
}

impl Default for CustomSpec {
    fn default() -> Self {
        Self {
            cost: "quadratic".into(),
            mean0: 0.0,
            sd0: 1.0,
            mean1: 0.5,
            sd1: 0.5,
        }
    }
}

/// Closed forms for entropic transport between 1D Gaussians
/// N(m0, s0²) → N(m1, s1²) with cost ½(x−y)².
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianPair {
    pub m0: f64,
    pub s0: f64,
    pub m1: f64,
    pub s1: f64,
}

impl GaussianPair {
    /// Covariance of X and Y under γ_ε.
    pub fn cross_cov(&self, eps: f64) -> f64 {
        let p = self.s0 * self.s1;
        (p * p + 0.25 * eps * eps).sqrt() - 0.5 * eps
    }

    pub fn ot0(&self) -> f64 {
        0.5 * (self.s0 - self.s1).powi(2) + 0.5 * (self.m0 - self.m1).powi(2)
    }

    pub fn cost_term(&self, eps: f64) -> f64 {
        0.5 * (self.s0 * self.s0 + self.s1 * self.s1) - self.cross_cov(eps)
            + 0.5 * (self.m0 - self.m1).powi(2)
    }

    /// (c, γ_ε) − OT₀.
    pub fn suboptimality(&self, eps: f64) -> f64 {
        self.s0 * self.s1 - self.cross_cov(eps)
    }

    pub fn plan_entropy(&self, eps: f64) -> f64 {
        let c = self.cross_cov(eps);
        -(2.0 * PI * E).ln() - 0.5 * ((self.s0 * self.s1).powi(2) - c * c).ln()
    }

    pub fn h_m(&self) -> f64 {
        -0.5 * (2.0 * PI * E).ln() - 0.5 * (self.s0 * self.s1).ln()
    }

    /// Squared Bures distance between γ_ε and the deterministic γ₀.
    pub fn w2_sq_to_opt(&self, eps: f64) -> f64 {
        let (a, b) = (self.s0 * self.s0, self.s1 * self.s1);
        let c = self.cross_cov(eps);
        // γ₀ has covariance [[a, s0 s1], [s0 s1, b]]; the Bures term is
        // tr(Σ₀ + Σ_ε) − 2 tr((Σ₀^{1/2} Σ_ε Σ₀^{1/2})^{1/2}), and Σ₀ is rank one.
        let s = (a + b).sqrt();
        let (u0, u1) = (self.s0 / s, self.s1 / s);
        let q = u0 * u0 * a + 2.0 * u0 * u1 * c + u1 * u1 * b;
        2.0 * (a + b) - 2.0 * s * q.sqrt()
    }
}

/// How γ₀ and its potentials are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reference {
    /// μ₀ = μ₁ on the same grid with quadratic cost: γ₀ is diagonal and
    /// φ = ψ = 0 are optimal, so E = c.
    Identity,
    /// exact LP (and the monotone coupling for OT₀ in 1D quadratic)
    Lp,
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub id: String,
    pub preset: Preset,
    pub mu0: Arc<GridMeasure>,
    pub mu1: Arc<GridMeasure>,
    pub cost: CostModel,
    pub reference: Reference,
    pub brenier: Option<AffineMap>,
    pub oracle: Option<GaussianPair>,
    /// box X × Y spanned by the grid cells
    pub domain: BoxDomain,
    /// compute W₂(γ_ε, γ₀)
    pub w2: bool,
    /// build a chart cover and evaluate the local inequalities
    pub charts: bool,
    /// H_m of the continuum marginals, when known
    pub h_m_analytic: Option<f64>,
}

impl Instance {
    pub fn dim(&self) -> usize {
        self.mu0.dim()
    }

    /// Claim coefficients (d/2 and the H_m intercept) are predicted for
    /// quadratic costs between densities.
    pub fn coefficients_predicted(&self) -> bool {
        self.cost.is_quadratic() && self.preset != Preset::Discrete2x2
    }

    pub fn build(preset: Preset, resolution: usize, custom: Option<&CustomSpec>) -> Result<Self> {
        match preset {
            Preset::Gaussian1d => {
                let pair = GaussianPair {
                    m0: 0.0,
                    s0: 1.0,
                    m1: 0.0,
                    s1: 1.0,
                };
                let mu = Arc::new(gaussian_1d(0.0, 1.0, resolution)?);
                Ok(Self::from_parts(
                    preset,
                    mu.clone(),
                    mu,
                    quadratic_cost(1),
                    Reference::Identity,
                )
                .with_gaussian(pair)
                .with_brenier(AffineMap::identity(1)))
            }
            Preset::Gaussian2d => {
                let side = (resolution as f64).sqrt().round() as usize;
                if side * side != resolution {
                    return Err(LabError::InvalidArgument(format!(
                        "gaussian2d resolution {resolution} is not a perfect square"
                    )));
                }
                let mu = Arc::new(make_gaussian_grid(
                    &[0.0, 0.0],
                    &DMatrix::identity(2, 2),
                    4.0,
                    side,
                )?);
                let mut inst = Self::from_parts(
                    preset,
                    mu.clone(),
                    mu,
                    quadratic_cost(2),
                    Reference::Identity,
                )
                .with_brenier(AffineMap::identity(2));
                inst.h_m_analytic = Some(-(2.0 * PI * E).ln());
                Ok(inst)
            }
            Preset::GaussianLipschitz => {
                let pair = GaussianPair {
                    m0: 0.0,
                    s0: 1.0,
                    m1: 0.0,
                    s1: 0.5,
                };
                // a narrower box shortens the spacing of γ₀'s atoms along the
                // graph, which sets the floor (h₀² + h₁²)/12 of the grid W₂²
                let grid = |sd: f64| {
                    make_gaussian_grid(
                        &[0.0],
                        &DMatrix::from_element(1, 1, sd * sd),
                        LIPSCHITZ_HALF_WIDTH,
                        resolution,
                    )
                };
                let mu0 = Arc::new(grid(1.0)?);
                let mu1 = Arc::new(grid(0.5)?);
                let t = brenier_gaussian(
                    &[0.0],
                    &DMatrix::from_element(1, 1, 1.0),
                    &[0.0],
                    &DMatrix::from_element(1, 1, 0.25),
                )?;
                let mut inst = Self::from_parts(preset, mu0, mu1, quadratic_cost(1), Reference::Lp)
                    .with_gaussian(pair)
                    .with_brenier(t);
                inst.w2 = true;
                Ok(inst)
            }
            Preset::CoshCompact => {
                let mu0 = Arc::new(GridMeasure::uniform(-1.0, 1.0, resolution)?);
                let (mu1, _) =
                    GridMeasure::from_density(vec![Axis::cells(-1.0, 1.0, resolution)], |x| {
                        (-(x[0] - 0.2).powi(2) / 0.5).exp()
                    })?;
                let mut inst =
                    Self::from_parts(preset, mu0, Arc::new(mu1), cosh_cost(), Reference::Lp);
                inst.w2 = true;
                inst.charts = true;
                Ok(inst)
            }
            Preset::Discrete2x2 => {
                let mu = Arc::new(GridMeasure::from_weights(
                    vec![Axis {
                        start: 0.0,
                        spacing: 1.0,
                        count: 2,
                    }],
                    vec![0.5, 0.5],
                )?);
                Ok(Self::from_parts(
                    preset,
                    mu.clone(),
                    mu,
                    quadratic_cost(1),
                    Reference::Identity,
                ))
            }
            Preset::Custom => {
                let spec = custom.cloned().unwrap_or_default();
                if !(spec.sd0 > 0.0 && spec.sd1 > 0.0) {
                    return Err(LabError::InvalidArgument(
                        "custom standard deviations must be positive".into(),
                    ));
                }
                let cost = CostModel::from_label(&spec.cost, 1)?;
                let mu0 = Arc::new(gaussian_1d(spec.mean0, spec.sd0, resolution)?);
                let mu1 = Arc::new(gaussian_1d(spec.mean1, spec.sd1, resolution)?);
                let quadratic = cost.is_quadratic();
                let mut inst = Self::from_parts(preset, mu0, mu1, cost, Reference::Lp);
                if quadratic {
                    let pair = GaussianPair {
                        m0: spec.mean0,
                        s0: spec.sd0,
                        m1: spec.mean1,
                        s1: spec.sd1,
                    };
                    let t = AffineMap::new(
                        &[spec.mean0],
                        &[spec.mean1],
                        DMatrix::from_element(1, 1, spec.sd1 / spec.sd0),
                    )?;
                    inst = inst.with_gaussian(pair).with_brenier(t);
                } else {
                    inst.charts = true;
                }
                inst.w2 = true;
                Ok(inst)
            }
        }
    }

    fn from_parts(
        preset: Preset,
        mu0: Arc<GridMeasure>,
        mu1: Arc<GridMeasure>,
        cost: CostModel,
        reference: Reference,
    ) -> Self {
        let domain = grid_box(&mu0, &mu1);
        Self {
            id: format!("{}-n{}", preset.name(), mu0.len()),
            preset,
            mu0,
            mu1,
            cost,
            reference,
            brenier: None,
            oracle: None,
            domain,
            w2: false,
            charts: false,
            h_m_analytic: None,
        }
    }

    fn with_gaussian(mut self, pair: GaussianPair) -> Self {
        self.h_m_analytic = Some(pair.h_m());
        self.oracle = Some(pair);
        self
    }

    fn with_brenier(mut self, t: AffineMap) -> Self {
        self.brenier = Some(t);
        self
    }
}

fn gaussian_1d(mean: f64, sd: f64, n: usize) -> Result<GridMeasure> {
    make_gaussian_grid(
        &[mean],
        &DMatrix::from_element(1, 1, sd * sd),
        GAUSSIAN_HALF_WIDTH,
        n,
    )
}

fn grid_box(mu0: &GridMeasure, mu1: &GridMeasure) -> BoxDomain {
    let (mut lo, mut hi) = (Vec::new(), Vec::new());
    for m in [mu0, mu1] {
        for a in m.axes() {
            lo.push(a.lo());
            hi.push(a.hi());
        }
    }
    BoxDomain { lo, hi }
}
