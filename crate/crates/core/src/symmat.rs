//! Dense symmetric matrices, spectral decompositions and the spectral calculus
//! built on top of them.
//!
//! Every matrix function here is evaluated through the eigendecomposition
//! `S = U diag(λ) Uᵀ`, so `f(S) = U diag(f(λ)) Uᵀ`. Derivatives of power
//! functions use the Daleckii–Krein formula with first divided differences.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{ConalError, Result};

/// Relative tolerance on `|S_ij - S_ji|` for a matrix to count as symmetric.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Relative eigenvalue floor below which a matrix is not positive definite.
pub const SPD_FLOOR: f64 = 1e-12;
/// Relative gap below which two eigenvalues are treated as coincident in
/// divided differences.
pub const DEGENERATE_GAP: f64 = 1e-8;

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// A real symmetric `n x n` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SymMatrix(DMatrix<f64>);

impl SymMatrix {
    /// Validates symmetry up to [`SYMMETRY_TOL`] and stores `(S + Sᵀ)/2`.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(ConalError::NotSquare {
                rows: m.nrows(),
                cols: m.ncols(),
            });
        }
        if m.nrows() == 0 {
            return Err(ConalError::Domain("empty matrix".into()));
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(ConalError::Domain("matrix has non-finite entries".into()));
        }
        let tolerance = SYMMETRY_TOL * max_abs(&m).max(1.0);
        let asym = (&m - m.transpose()).amax();
        if asym > tolerance {
            return Err(ConalError::NotSymmetric {
                max_asymmetry: asym,
                tolerance,
            });
        }
        Ok(Self(symmetrize(&m)))
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        if data.len() != n * n {
            return Err(ConalError::DimensionMismatch {
                expected: n * n,
                found: data.len(),
            });
        }
        Self::new(DMatrix::from_row_slice(n, n, data))
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        Self(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn identity(n: usize) -> Self {
        Self(DMatrix::identity(n, n))
    }

    pub fn zeros(n: usize) -> Self {
        Self(DMatrix::zeros(n, n))
    }

    /// Symmetrizes an internally produced matrix without the tolerance check.
    pub(crate) fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        Self(symmetrize(&m))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.0)
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn trace(&self) -> f64 {
        self.0.trace()
    }

    pub fn scale(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    /// `A S Aᵀ` for an arbitrary square `A` of matching size.
    pub fn congruence(&self, a: &DMatrix<f64>) -> Self {
        Self::from_matrix_unchecked(a * &self.0 * a.transpose())
    }

    pub fn eig(&self) -> EigenPair {
        sym_eig(self)
    }

    pub fn row_major(&self) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| self.0[(i, j)])
            .collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SymMatrix {
    type Error = ConalError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(ConalError::NotSquare {
                rows: n,
                cols: bad.len(),
            });
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Self::from_row_slice(n, &flat)
    }
}

impl From<SymMatrix> for Vec<Vec<f64>> {
    fn from(s: SymMatrix) -> Self {
        s.0.row_iter()
            .map(|r| r.iter().copied().collect())
            .collect()
    }
}

/// A symmetric positive definite matrix: a point of the SPD manifold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct SpdPoint(SymMatrix);

impl SpdPoint {
    pub fn new(s: SymMatrix) -> Result<Self> {
        check_spd(&s, &s.eig())?;
        Ok(Self(s))
    }

    pub fn from_matrix(m: DMatrix<f64>) -> Result<Self> {
        Self::new(SymMatrix::new(m)?)
    }

    pub fn from_row_slice(n: usize, data: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_row_slice(n, data)?)
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(SymMatrix::from_diagonal(diag))
    }

    pub fn identity(n: usize) -> Self {
        Self(SymMatrix::identity(n))
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn as_sym(&self) -> &SymMatrix {
        &self.0
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        self.0.as_matrix()
    }

    pub fn into_sym(self) -> SymMatrix {
        self.0
    }

    pub fn inverse(&self) -> SpdPoint {
        SpdPoint(self.eig().map(|l| 1.0 / l))
    }

    pub fn sqrt(&self) -> SpdPoint {
        SpdPoint(self.eig().map(f64::sqrt))
    }

    pub fn inv_sqrt(&self) -> SymMatrix {
        self.eig().map(|l| 1.0 / l.sqrt())
    }

    pub fn eig(&self) -> EigenPair {
        self.0.eig()
    }
}

impl TryFrom<Vec<Vec<f64>>> for SpdPoint {
    type Error = ConalError;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(SymMatrix::try_from(rows)?)
    }
}

impl From<SpdPoint> for Vec<Vec<f64>> {
    fn from(s: SpdPoint) -> Self {
        s.0.into()
    }
}

fn spd_floor(s: &SymMatrix) -> f64 {
    SPD_FLOOR * s.max_abs().max(1.0)
}

fn check_spd(s: &SymMatrix, eig: &EigenPair) -> Result<()> {
    let floor = spd_floor(s);
    let lmin = eig.values[0];
    if lmin <= floor {
        return Err(ConalError::NotPositiveDefinite {
            eigenvalue: lmin,
            floor,
        });
    }
    Ok(())
}

/// Eigendecomposition `S = U diag(values) Uᵀ` with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct EigenPair {
    pub values: DVector<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenPair {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        &self.vectors * DMatrix::from_diagonal(&self.values) * self.vectors.transpose()
    }

    /// `U diag(f(λ)) Uᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> SymMatrix {
        let mapped = self.values.map(f);
        let scaled = DMatrix::from_fn(self.vectors.nrows(), self.vectors.ncols(), |i, j| {
            self.vectors[(i, j)] * mapped[j]
        });
        SymMatrix::from_matrix_unchecked(scaled * self.vectors.transpose())
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Symmetric eigendecomposition with eigenvalues sorted ascending.
pub fn sym_eig(s: &SymMatrix) -> EigenPair {
    let n = s.dim();
    let raw = SymmetricEigen::new(s.as_matrix().clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| raw.eigenvalues[a].total_cmp(&raw.eigenvalues[b]));
    let values = DVector::from_iterator(n, order.iter().map(|&k| raw.eigenvalues[k]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &raw.eigenvectors.column(src));
    }
    EigenPair { values, vectors }
}

/// Scalar functions that can be lifted to symmetric matrices.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixFunction {
    Log,
    Exp,
    Sqrt,
    InvSqrt,
    Pow(f64),
}

impl MatrixFunction {
    fn needs_spd(self) -> bool {
        match self {
            MatrixFunction::Exp => false,
            MatrixFunction::Pow(r) => r.fract() != 0.0,
            _ => true,
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            MatrixFunction::Log => x.ln(),
            MatrixFunction::Exp => x.exp(),
            MatrixFunction::Sqrt => x.sqrt(),
            MatrixFunction::InvSqrt => 1.0 / x.sqrt(),
            MatrixFunction::Pow(r) if r.fract() == 0.0 && r.abs() < i32::MAX as f64 => {
                x.powi(r as i32)
            }
            MatrixFunction::Pow(r) => x.powf(r),
        }
    }
}

/// Applies a scalar function through the spectral decomposition.
pub fn sym_fn(s: &SymMatrix, f: MatrixFunction) -> Result<SymMatrix> {
    let eig = s.eig();
    if f.needs_spd() {
        check_spd(s, &eig)?;
    } else if let MatrixFunction::Pow(r) = f {
        if r < 0.0 {
            let floor = spd_floor(s);
            if let Some(&bad) = eig.values.iter().find(|l| l.abs() <= floor) {
                return Err(ConalError::Domain(format!(
                    "negative integer power of a matrix with eigenvalue {bad:e}"
                )));
            }
        }
    }
    Ok(eig.map(|l| f.apply(l)))
}

/// First divided difference of `t ↦ t^r` at `(a, b)`, both positive.
///
/// Coincident arguments (relative gap at most [`DEGENERATE_GAP`]) use the
/// derivative at the midpoint. Otherwise the quotient is evaluated as
/// `b^(r-1) expm1(r L) / expm1(L)` with `L = ln(a/b)`, which stays accurate
/// for moderately close eigenvalues.
pub fn pow_divided_difference(a: f64, b: f64, r: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    if hi - lo <= DEGENERATE_GAP * hi {
        let mid = 0.5 * (lo + hi);
        return r * mid.powf(r - 1.0);
    }
    let log_ratio = ((hi - lo) / lo).ln_1p();
    lo.powf(r - 1.0) * (r * log_ratio).exp_m1() / log_ratio.exp_m1()
}

/// Fréchet derivative of `Σ ↦ Σ^r` at `Σ` in direction `X`.
pub fn frechet_pow(sigma: &SpdPoint, x: &SymMatrix, r: f64) -> SymMatrix {
    let eig = sigma.eig();
    let u = &eig.vectors;
    let n = sigma.dim();
    let mut inner = u.transpose() * x.as_matrix() * u;
    for i in 0..n {
        for j in i..n {
            let g = pow_divided_difference(eig.values[i], eig.values[j], r);
            inner[(i, j)] *= g;
            if i != j {
                inner[(j, i)] *= g;
            }
        }
    }
    SymMatrix::from_matrix_unchecked(u * inner * u.transpose())
}
