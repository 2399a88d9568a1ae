//! Seeded random generators for matrices, cone directions and ordered pairs.
//!
//! All randomness in the crate flows through [`seeded_rng`] / [`trial_rng`],
//! so a seed fully determines every probe, scan and sweep.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cone::{ConeKind, ConeSpec};
use crate::spd_geometry::GeodesicSegment;
use crate::symmat::{SpdPoint, SymMatrix};

pub type ConalRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> ConalRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` derived from `seed`, for per-trial parallelism.
pub fn trial_rng(seed: u64, stream: u64) -> ConalRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub fn gaussian_matrix<R: Rng + ?Sized>(rng: &mut R, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample::<f64, _>(StandardNormal))
}

pub fn gaussian_vector<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal))
}

/// Haar-distributed orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let qr = gaussian_matrix(rng, n, n).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Symmetric matrix with standard normal entries on and above the diagonal.
pub fn random_symmetric<R: Rng + ?Sized>(rng: &mut R, n: usize) -> SymMatrix {
    let g = gaussian_matrix(rng, n, n);
    SymMatrix::from_matrix_unchecked(g.upper_triangle() + g.upper_triangle().transpose()).scale(0.5)
}

/// `Q diag(exp(u)) Qᵀ` with `Q` Haar-orthogonal and `u` uniform in `[-2, 2]`.
pub fn random_spd<R: Rng + ?Sized>(rng: &mut R, n: usize) -> SpdPoint {
    random_spd_with_spread(rng, n, 2.0)
}

pub fn random_spd_with_spread<R: Rng + ?Sized>(rng: &mut R, n: usize, spread: f64) -> SpdPoint {
    let q = random_orthogonal(rng, n);
    let diag: Vec<f64> = (0..n)
        .map(|_| rng.random_range(-spread..=spread).exp())
        .collect();
    let s = SymMatrix::from_diagonal(&diag).congruence(&q);
    SpdPoint::new(s).expect("eigenvalues bounded below by exp(-spread)")
}

/// Invertible matrix `Q₁ diag(exp(u)) Q₂` with `u` uniform in `[-1, 1]`.
pub fn random_invertible<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let q1 = random_orthogonal(rng, n);
    let q2 = random_orthogonal(rng, n);
    let diag = DVector::from_fn(n, |_, _| rng.random_range(-1.0..=1.0_f64).exp());
    q1 * DMatrix::from_diagonal(&diag) * q2
}

/// Unit vector (Frobenius norm) in the traceless symmetric matrices.
fn random_traceless_unit<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DMatrix<f64> {
    let s = random_symmetric(rng, n);
    let shift = s.trace() / n as f64;
    let z = s.as_matrix() - DMatrix::identity(n, n) * shift;
    let norm = z.norm();
    if norm == 0.0 {
        let mut e = DMatrix::zeros(n, n);
        if n > 1 {
            e[(0, 0)] = 1.0 / 2f64.sqrt();
            e[(1, 1)] = -1.0 / 2f64.sqrt();
        }
        return e;
    }
    z / norm
}

/// Where a sampled cone direction should sit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Placement {
    Boundary,
    Interior,
}

/// Samples a direction of the cone at identity (a pulled-back tangent vector).
///
/// Quadratic cones: `X = (t₀/n) I + Z` with `Z` traceless; boundary points
/// satisfy `‖Z‖² = t₀²(1/μ − 1/n)`, interior points shrink `Z` by a random
/// factor. Löwner: `U diag(d) Uᵀ` with `d ≥ 0`, at least one `d_i = 0` on the
/// boundary. Returns `None` for cone kinds without a matrix tangent space.
pub fn cone_direction_at_identity<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &ConeSpec,
    magnitude: f64,
    placement: Placement,
) -> Option<SymMatrix> {
    let n = spec.dim();
    match spec.kind() {
        ConeKind::Quadratic { mu } => {
            let t0 = magnitude;
            let nf = n as f64;
            let radius = t0 * (1.0 / mu - 1.0 / nf).max(0.0).sqrt();
            let shrink = match placement {
                Placement::Boundary => 1.0,
                Placement::Interior => rng.random_range(0.0..0.95),
            };
            let z = random_traceless_unit(rng, n) * (radius * shrink);
            Some(SymMatrix::from_matrix_unchecked(
                DMatrix::identity(n, n) * (t0 / nf) + z,
            ))
        }
        ConeKind::Loewner => {
            let q = random_orthogonal(rng, n);
            let mut d: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=magnitude)).collect();
            match placement {
                Placement::Boundary => {
                    let zeros = rng.random_range(1..n.max(2));
                    for v in d.iter_mut().take(zeros.min(n)) {
                        *v = 0.0;
                    }
                    if d.iter().all(|v| *v == 0.0) && n > 1 {
                        d[n - 1] = magnitude;
                    }
                }
                Placement::Interior => {
                    for v in d.iter_mut() {
                        *v += 0.05 * magnitude;
                    }
                }
            }
            Some(SymMatrix::from_diagonal(&d).congruence(&q))
        }
        _ => None,
    }
}

/// Transports a direction at identity to the tangent space at `sigma`:
/// `X = Σ^{1/2} Y Σ^{1/2}`.
pub fn transport_from_identity(sigma: &SpdPoint, y: &SymMatrix) -> SymMatrix {
    let root = sigma.sqrt();
    y.congruence(root.as_matrix())
}

/// Draws `Σ₁` at random and shoots a conal geodesic from it, so `Σ₁ ≤ Σ₂`
/// holds by construction.
pub fn ordered_pair<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &ConeSpec,
    placement: Placement,
) -> (SpdPoint, SpdPoint) {
    let n = spec.dim();
    let start = random_spd(rng, n);
    let magnitude = rng.random_range(0.1..1.5);
    let y = cone_direction_at_identity(rng, spec, magnitude, placement)
        .expect("ordered pairs need a matrix cone");
    let velocity = transport_from_identity(&start, &y);
    let seg = GeodesicSegment::shoot(&start, &velocity);
    let end = seg.end().clone();
    (start, end)
}

/// Same construction chained from a given start point.
pub fn shoot_conal<R: Rng + ?Sized>(
    rng: &mut R,
    spec: &ConeSpec,
    start: &SpdPoint,
    placement: Placement,
) -> SpdPoint {
    let magnitude = rng.random_range(0.1..1.0);
    let y = cone_direction_at_identity(rng, spec, magnitude, placement)
        .expect("conal shots need a matrix cone");
    let velocity = transport_from_identity(start, &y);
    GeodesicSegment::shoot(start, &velocity).end().clone()
}
