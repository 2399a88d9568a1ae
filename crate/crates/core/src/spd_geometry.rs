//! Affine-invariant geometry of the SPD manifold `GL(n)/O(n)`.
//!
//! The group acts by congruence `Σ ↦ AΣAᵀ`; the metric at `Σ` is
//! `⟨X, Y⟩_Σ = tr(Σ⁻¹XΣ⁻¹Y)` and geodesics are
//! `γ(t) = Σ₁^{1/2} exp(tΛ) Σ₁^{1/2}` with `Λ = log(Σ₁^{-1/2} Σ₂ Σ₁^{-1/2})`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{ConalError, Result};
use crate::symmat::{sym_fn, MatrixFunction, SpdPoint, SymMatrix};

/// Largest accepted condition estimate for a congruence matrix.
pub const MAX_CONDITION: f64 = 1e12;

pub(crate) fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(ConalError::DimensionMismatch {
            expected: a,
            found: b,
        });
    }
    Ok(())
}

/// `AΣAᵀ` for invertible `A`.
pub fn congruence(a: &DMatrix<f64>, sigma: &SpdPoint) -> Result<SpdPoint> {
    if a.nrows() != a.ncols() {
        return Err(ConalError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    check_same_dim(sigma.dim(), a.nrows())?;
    let condition = condition_estimate(a);
    if !(condition <= MAX_CONDITION) {
        return Err(ConalError::Singular { condition });
    }
    SpdPoint::new(sigma.as_sym().congruence(a))
}

/// Ratio of extreme singular values; infinite for singular input.
pub fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let sv = a.clone().singular_values();
    let max = sv.max();
    let min = sv.min();
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// The symmetric pullback `Σ₁^{-1/2} Σ₂ Σ₁^{-1/2}`, whose spectrum equals
/// that of `Σ₁⁻¹Σ₂`.
pub fn relative_matrix(sigma1: &SpdPoint, sigma2: &SpdPoint) -> Result<SymMatrix> {
    check_same_dim(sigma1.dim(), sigma2.dim())?;
    let w = sigma1.inv_sqrt();
    Ok(sigma2.as_sym().congruence(w.as_matrix()))
}

/// Logarithms of the eigenvalues of `Σ₁⁻¹Σ₂`, ascending.
pub fn relative_log_spectrum(sigma1: &SpdPoint, sigma2: &SpdPoint) -> Result<Vec<f64>> {
    let rel = relative_matrix(sigma1, sigma2)?;
    let eig = rel.eig();
    if eig.min() <= 0.0 {
        return Err(ConalError::NotPositiveDefinite {
            eigenvalue: eig.min(),
            floor: 0.0,
        });
    }
    Ok(eig.values.iter().map(|l| l.ln()).collect())
}

/// Affine-invariant Riemannian distance `(Σ log² λᵢ(Σ₁⁻¹Σ₂))^{1/2}`.
pub fn ai_distance(sigma1: &SpdPoint, sigma2: &SpdPoint) -> Result<f64> {
    let logs = relative_log_spectrum(sigma1, sigma2)?;
    Ok(logs.iter().map(|l| l * l).sum::<f64>().sqrt())
}

/// Squared norm of a tangent vector under the affine-invariant metric.
pub fn ai_norm_squared(sigma: &SpdPoint, x: &SymMatrix) -> f64 {
    let inv = sigma.inverse();
    let p = inv.as_matrix() * x.as_matrix();
    (&p * &p).trace()
}

/// The geodesic from `start` to `end`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GeodesicSegment {
    start: SpdPoint,
    end: SpdPoint,
    log_velocity: SymMatrix,
    #[serde(skip)]
    root: Option<SymMatrix>,
}

impl GeodesicSegment {
    pub fn new(start: &SpdPoint, end: &SpdPoint) -> Result<Self> {
        let rel = relative_matrix(start, end)?;
        let log_velocity = sym_fn(&rel, MatrixFunction::Log)?;
        Ok(Self {
            start: start.clone(),
            end: end.clone(),
            log_velocity,
            root: Some(start.sqrt().into_sym()),
        })
    }

    /// Geodesic leaving `start` with initial velocity `velocity` (the
    /// Riemannian exponential), ending at `t = 1`.
    pub fn shoot(start: &SpdPoint, velocity: &SymMatrix) -> Self {
        let w = start.inv_sqrt();
        let log_velocity = velocity.congruence(w.as_matrix());
        let root = start.sqrt().into_sym();
        let end = point_on(&root, &log_velocity, 1.0);
        Self {
            start: start.clone(),
            end,
            log_velocity,
            root: Some(root),
        }
    }

    pub fn start(&self) -> &SpdPoint {
        &self.start
    }

    pub fn end(&self) -> &SpdPoint {
        &self.end
    }

    /// `Λ = log(Σ₁^{-1/2} Σ₂ Σ₁^{-1/2})`.
    pub fn log_velocity(&self) -> &SymMatrix {
        &self.log_velocity
    }

    fn root(&self) -> SymMatrix {
        self.root
            .clone()
            .unwrap_or_else(|| self.start.sqrt().into_sym())
    }

    /// Affine-invariant length of the segment.
    pub fn length(&self) -> f64 {
        self.log_velocity.norm()
    }
}

fn point_on(root: &SymMatrix, log_velocity: &SymMatrix, t: f64) -> SpdPoint {
    let e = sym_fn(&log_velocity.scale(t), MatrixFunction::Exp).expect("exp is total");
    SpdPoint::new(e.congruence(root.as_matrix()))
        .expect("congruence of a positive definite exponential")
}

/// `γ(t) = Σ₁^{1/2} exp(tΛ) Σ₁^{1/2}`; any real `t` is allowed.
pub fn geodesic_point(seg: &GeodesicSegment, t: f64) -> SpdPoint {
    if t == 0.0 {
        return seg.start.clone();
    }
    point_on(&seg.root(), &seg.log_velocity, t)
}

/// `γ'(t) = Σ₁^{1/2} Λ exp(tΛ) Σ₁^{1/2}`, a tangent vector at `γ(t)`.
pub fn geodesic_velocity(seg: &GeodesicSegment, t: f64) -> SymMatrix {
    let lambda = &seg.log_velocity;
    let e = lambda.eig();
    // Λ and exp(tΛ) share eigenvectors, so the product is symmetric.
    let product = e.map(|l| l * (t * l).exp());
    product.congruence(seg.root().as_matrix())
}
