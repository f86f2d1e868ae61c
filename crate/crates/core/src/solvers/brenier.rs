use nalgebra::{DMatrix, DVector};

use crate::costs::spectral_norm;
use crate::error::{LabError, Result};
use crate::measures::spd_cholesky;

/// T(x) = m1 + A(x − m0), the gradient of
/// f(x) = ⟨m1, x⟩ + ½(x − m0)ᵀA(x − m0).
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap {
    pub m0: DVector<f64>,
    pub m1: DVector<f64>,
    pub a: DMatrix<f64>,
    /// ‖A‖₂
    pub lipschitz: f64,
    a_inv: DMatrix<f64>,
}

impl AffineMap {
    pub fn new(m0: &[f64], m1: &[f64], a: DMatrix<f64>) -> Result<Self> {
        let d = m0.len();
        if m1.len() != d || a.nrows() != d || a.ncols() != d {
            return Err(LabError::InvalidArgument(
                "affine map dimensions disagree".into(),
            ));
        }
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| LabError::InvalidArgument("affine map is singular".into()))?;
        Ok(Self {
            m0: DVector::from_column_slice(m0),
            m1: DVector::from_column_slice(m1),
            lipschitz: spectral_norm(&a),
            a,
            a_inv,
        })
    }

    pub fn identity(d: usize) -> Self {
        Self::new(&vec![0.0; d], &vec![0.0; d], DMatrix::identity(d, d)).unwrap()
    }

    pub fn dim(&self) -> usize {
        self.m0.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let z = DVector::from_column_slice(x) - &self.m0;
        (&self.m1 + &self.a * z).iter().copied().collect()
    }

    /// f(x), the convex potential with ∇f = T.
    pub fn potential(&self, x: &[f64]) -> f64 {
        let x = DVector::from_column_slice(x);
        let z = &x - &self.m0;
        self.m1.dot(&x) + 0.5 * z.dot(&(&self.a * &z))
    }

    /// f*(y) = ⟨m0, y − m1⟩ + ½(y − m1)ᵀA⁻¹(y − m1).
    pub fn conjugate(&self, y: &[f64]) -> f64 {
        let w = DVector::from_column_slice(y) - &self.m1;
        self.m0.dot(&w) + 0.5 * w.dot(&(&self.a_inv * &w))
    }

    /// Duality gap of the quadratic cost for the Brenier pair,
    /// f(x) + f*(y) − ⟨x, y⟩ = c(x,y) − φ(x) − ψ(y) ≥ 0.
    pub fn gap(&self, x: &[f64], y: &[f64]) -> f64 {
        let xy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        (self.potential(x) + self.conjugate(y) - xy).max(0.0)
    }
}

/// Brenier map between N(m0, S0) and N(m1, S1):
/// A = S0^{-1/2}(S0^{1/2} S1 S0^{1/2})^{1/2} S0^{-1/2}.
pub fn brenier_gaussian(
    m0: &[f64],
    s0: &DMatrix<f64>,
    m1: &[f64],
    s1: &DMatrix<f64>,
) -> Result<AffineMap> {
    spd_cholesky(s0)?;
    spd_cholesky(s1)?;
    let r0 = spd_sqrt(s0, 0.5);
    let r0_inv = spd_sqrt(s0, -0.5);
    let mid = spd_sqrt(&(&r0 * s1 * &r0), 0.5);
    let a = &r0_inv * mid * &r0_inv;
    let a = 0.5 * (&a + a.transpose());
    AffineMap::new(m0, m1, a)
}

fn spd_sqrt(m: &DMatrix<f64>, power: f64) -> DMatrix<f64> {
    let sym = 0.5 * (m + m.transpose());
    let eig = sym.symmetric_eigen();
    let vals = eig.eigenvalues.map(|l| l.max(0.0).powf(power));
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}
