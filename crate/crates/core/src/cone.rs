//! Base cones at the identity and membership in the cone fields they
//! generate by group transport.
//!
//! Matrix cones on the SPD manifold are tested at `Σ` by pulling a tangent
//! vector back to the identity, `X ↦ Σ^{-1/2} X Σ^{-1/2}`. Vector cones
//! (orthant, planar, quadratic rank-k) live in a fixed vector space and are
//! translation invariant.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, ConalError, Result};
use crate::sampling::{random_orthogonal, random_symmetric, trial_rng};
use crate::spd_geometry::check_same_dim;
use crate::symmat::{SpdPoint, SymMatrix};

/// Relative tolerance band for membership: `value ≥ -MEMBERSHIP_TOL * scale`.
pub const MEMBERSHIP_TOL: f64 = 1e-10;
/// Relative tolerance for a zero eigenvalue of a rank-k quadratic form.
pub const RANK_FORM_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConeKind {
    /// `{tr X ≥ 0, (tr X)² − μ tr X² ≥ 0}` on symmetric matrices.
    Quadratic { mu: f64 },
    /// Positive semidefinite matrices.
    Loewner,
    /// `{x : xᵀPx ≥ 0}`, a cone of rank `positive`.
    RankK { form: SymMatrix, positive: usize },
    /// Nonnegative orthant of `ℝᴺ`.
    Orthant,
    /// Pointed solid cone in `ℝ²` spanned by two generators.
    Planar { g1: [f64; 2], g2: [f64; 2] },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConeSpec", into = "RawConeSpec")]
pub struct ConeSpec {
    kind: ConeKind,
    n: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawConeSpec {
    #[serde(flatten)]
    kind: ConeKind,
    n: usize,
}

impl TryFrom<RawConeSpec> for ConeSpec {
    type Error = ConalError;

    fn try_from(raw: RawConeSpec) -> Result<Self> {
        match raw.kind {
            ConeKind::Quadratic { mu } => ConeSpec::quadratic(raw.n, mu),
            ConeKind::Loewner => Ok(ConeSpec::loewner(raw.n)),
            ConeKind::RankK { form, positive } => {
                let spec = ConeSpec::rank_k(form)?;
                if spec.rank() != positive {
                    return Err(invalid(
                        "positive",
                        "does not match the signature of the form",
                    ));
                }
                check_same_dim(spec.n, raw.n)?;
                Ok(spec)
            }
            ConeKind::Orthant => Ok(ConeSpec::orthant(raw.n)),
            ConeKind::Planar { g1, g2 } => ConeSpec::planar(g1, g2),
        }
    }
}

impl From<ConeSpec> for RawConeSpec {
    fn from(spec: ConeSpec) -> Self {
        RawConeSpec {
            kind: spec.kind,
            n: spec.n,
        }
    }
}

fn check_mu(n: usize, mu: f64) -> Result<()> {
    if !(mu > 0.0 && mu < n as f64) {
        return Err(invalid("mu", format!("must lie in (0, {n}), got {mu}")));
    }
    Ok(())
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

impl ConeSpec {
    /// Quadratic cone with opening parameter `mu ∈ (0, n)`.
    pub fn quadratic(n: usize, mu: f64) -> Result<Self> {
        check_mu(n, mu)?;
        Ok(Self {
            kind: ConeKind::Quadratic { mu },
            n,
        })
    }

    pub fn loewner(n: usize) -> Self {
        Self {
            kind: ConeKind::Loewner,
            n,
        }
    }

    /// Quadratic cone of rank k from a nondegenerate symmetric form.
    pub fn rank_k(form: SymMatrix) -> Result<Self> {
        let eig = form.eig();
        let scale = eig.values.amax();
        if scale == 0.0 || eig.values.iter().any(|l| l.abs() <= RANK_FORM_TOL * scale) {
            return Err(invalid("form", "quadratic form has a zero eigenvalue"));
        }
        let positive = eig.values.iter().filter(|l| **l > 0.0).count();
        Ok(Self {
            n: form.dim(),
            kind: ConeKind::RankK { form, positive },
        })
    }

    pub fn orthant(n: usize) -> Self {
        Self {
            kind: ConeKind::Orthant,
            n,
        }
    }

    /// Pointed solid planar cone; the generators must be nonzero and not collinear.
    pub fn planar(g1: [f64; 2], g2: [f64; 2]) -> Result<Self> {
        let n1 = g1[0].hypot(g1[1]);
        let n2 = g2[0].hypot(g2[1]);
        if !(n1 > 0.0 && n2 > 0.0) || !(n1.is_finite() && n2.is_finite()) {
            return Err(invalid("generators", "must be finite and nonzero"));
        }
        if cross(g1, g2).abs() <= 1e-12 * n1 * n2 {
            return Err(invalid(
                "generators",
                "collinear generators do not span a pointed solid cone",
            ));
        }
        Ok(Self {
            kind: ConeKind::Planar { g1, g2 },
            n: 2,
        })
    }

    pub fn first_quadrant() -> Self {
        Self::planar([1.0, 0.0], [0.0, 1.0]).expect("valid generators")
    }

    pub fn kind(&self) -> &ConeKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn is_matrix_cone(&self) -> bool {
        matches!(self.kind, ConeKind::Quadratic { .. } | ConeKind::Loewner)
    }

    /// Dimension of the largest subspace contained in the cone (rank-k
    /// cones), or 0 for pointed cones.
    pub fn rank(&self) -> usize {
        match &self.kind {
            ConeKind::RankK { positive, .. } => *positive,
            _ => 0,
        }
    }

    /// The same cone family with the form negated, the closure of the complement.
    pub fn complement(&self) -> Option<Self> {
        match &self.kind {
            ConeKind::RankK { form, .. } => Self::rank_k(form.scale(-1.0)).ok(),
            _ => None,
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            ConeKind::Quadratic { mu } => format!("quad(mu={mu})"),
            ConeKind::Loewner => "loewner".into(),
            ConeKind::RankK { positive, .. } => format!("rank{positive}"),
            ConeKind::Orthant => "orthant".into(),
            ConeKind::Planar { .. } => "planar".into(),
        }
    }

    /// Membership of `x ∈ T_Σ S⁺ₙ` in the transported cone at `sigma`.
    pub fn margin_at(&self, sigma: &SpdPoint, x: &SymMatrix) -> Result<ConeMargin> {
        match self.kind {
            ConeKind::Quadratic { mu } => {
                check_same_dim(self.n, sigma.dim())?;
                quad_margin(mu, sigma, x)
            }
            ConeKind::Loewner => {
                check_same_dim(self.n, sigma.dim())?;
                check_same_dim(sigma.dim(), x.dim())?;
                Ok(loewner_margin(sigma, x))
            }
            _ => Err(invalid(
                "spec",
                format!("{} is not a matrix cone", self.label()),
            )),
        }
    }

    /// Membership of a vector in a flat-space cone.
    pub fn vector_margin(&self, v: &[f64]) -> Result<ConeMargin> {
        check_same_dim(self.n, v.len())?;
        match &self.kind {
            ConeKind::Orthant => Ok(orthant_margin(v)),
            ConeKind::Planar { .. } => planar_margin(self, [v[0], v[1]]),
            ConeKind::RankK { form, .. } => rankk_margin(form, v),
            _ => Err(invalid(
                "spec",
                format!("{} is not a vector cone", self.label()),
            )),
        }
    }

    /// Margins of a pulled-back direction `Y` described by its spectrum.
    pub fn spectral_margin(&self, spectrum: &[f64]) -> Result<ConeMargin> {
        check_same_dim(self.n, spectrum.len())?;
        let norm = spectrum.iter().map(|l| l * l).sum::<f64>().sqrt();
        match self.kind {
            ConeKind::Quadratic { mu } => {
                let tr: f64 = spectrum.iter().sum();
                let tr2: f64 = spectrum.iter().map(|l| l * l).sum();
                Ok(quadratic_parts(mu, tr, tr2, norm))
            }
            ConeKind::Loewner => {
                let min = spectrum.iter().copied().fold(f64::INFINITY, f64::min);
                Ok(ConeMargin::new(vec![NamedMargin::new(
                    "lambda_min",
                    min,
                    norm.max(1.0),
                )]))
            }
            _ => Err(invalid(
                "spec",
                format!("{} is not a matrix cone", self.label()),
            )),
        }
    }
}

/// A signed quantity whose nonnegativity is part of cone membership.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NamedMargin {
    pub name: String,
    pub value: f64,
    /// Magnitude used for the relative membership band.
    pub scale: f64,
}

impl NamedMargin {
    pub fn new(name: &str, value: f64, scale: f64) -> Self {
        Self {
            name: name.to_owned(),
            value,
            scale,
        }
    }

    pub fn holds(&self) -> bool {
        self.value >= -MEMBERSHIP_TOL * self.scale
    }
}

/// Raw margins are reported unnormalized; `member` applies the relative band.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConeMargin {
    pub margins: Vec<NamedMargin>,
    pub member: bool,
}

impl ConeMargin {
    pub fn new(margins: Vec<NamedMargin>) -> Self {
        let member = margins.iter().all(NamedMargin::holds);
        Self { margins, member }
    }

    pub fn min_value(&self) -> f64 {
        self.margins
            .iter()
            .map(|m| m.value)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn values(&self) -> Vec<f64> {
        self.margins.iter().map(|m| m.value).collect()
    }

    /// Any margin within `band * scale` of zero.
    pub fn is_boundary(&self, band: f64) -> bool {
        self.margins.iter().any(|m| m.value.abs() <= band * m.scale)
    }

    /// Componentwise minimum of two margin sets with the same layout.
    pub fn pointwise_min(&self, other: &ConeMargin) -> ConeMargin {
        let margins = self
            .margins
            .iter()
            .zip(&other.margins)
            .map(|(a, b)| {
                if b.value < a.value {
                    b.clone()
                } else {
                    a.clone()
                }
            })
            .collect();
        ConeMargin::new(margins)
    }
}

fn quadratic_parts(mu: f64, tr: f64, tr2: f64, norm: f64) -> ConeMargin {
    ConeMargin::new(vec![
        NamedMargin::new("trace", tr, norm.max(1.0)),
        NamedMargin::new("quadratic", tr * tr - mu * tr2, (norm * norm).max(1.0)),
    ])
}

fn pull_back(sigma: &SpdPoint, x: &SymMatrix) -> SymMatrix {
    let w = sigma.inv_sqrt();
    x.congruence(w.as_matrix())
}

/// Quadratic cone margins at `Σ`:
/// `[tr(Σ⁻¹X), (tr(Σ⁻¹X))² − μ tr(Σ⁻¹XΣ⁻¹X)]`.
pub fn quad_margin(mu: f64, sigma: &SpdPoint, x: &SymMatrix) -> Result<ConeMargin> {
    check_mu(sigma.dim(), mu)?;
    check_same_dim(sigma.dim(), x.dim())?;
    let y = pull_back(sigma, x);
    let norm = y.norm();
    Ok(quadratic_parts(
        mu,
        y.trace(),
        y.as_matrix().norm_squared(),
        norm,
    ))
}

/// Löwner cone margin `λ_min(Σ^{-1/2} X Σ^{-1/2})`.
pub fn loewner_margin(sigma: &SpdPoint, x: &SymMatrix) -> ConeMargin {
    let y = pull_back(sigma, x);
    let min = y.eig().min();
    ConeMargin::new(vec![NamedMargin::new("lambda_min", min, y.norm().max(1.0))])
}

/// Largest componentwise change of the identity-cone margins under random
/// orthogonal conjugation `X ↦ QXQᵀ`.
pub fn ad_invariance_probe(spec: &ConeSpec, trials: usize, seed: u64) -> Result<f64> {
    if !spec.is_matrix_cone() {
        return Err(invalid("spec", "Ad-invariance applies to matrix cones"));
    }
    let n = spec.dim();
    let identity = SpdPoint::identity(n);
    let mut worst = 0.0_f64;
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial as u64);
        let x = random_symmetric(&mut rng, n);
        let q = random_orthogonal(&mut rng, n);
        worst = worst.max(conjugation_discrepancy(spec, &identity, &x, &q)?);
    }
    Ok(worst)
}

pub(crate) fn conjugation_discrepancy(
    spec: &ConeSpec,
    identity: &SpdPoint,
    x: &SymMatrix,
    q: &nalgebra::DMatrix<f64>,
) -> Result<f64> {
    let before = spec.margin_at(identity, x)?;
    let after = spec.margin_at(identity, &x.congruence(q))?;
    Ok(before
        .margins
        .iter()
        .zip(&after.margins)
        .map(|(a, b)| (a.value - b.value).abs())
        .fold(0.0, f64::max))
}

/// Rank-k quadratic cone margin `xᵀPx`.
pub fn rankk_margin(form: &SymMatrix, x: &[f64]) -> Result<ConeMargin> {
    check_same_dim(form.dim(), x.len())?;
    let v = nalgebra::DVector::from_column_slice(x);
    let value = v.dot(&(form.as_matrix() * &v));
    let scale = (form.as_matrix().norm() * v.norm_squared()).max(1.0);
    Ok(ConeMargin::new(vec![NamedMargin::new(
        "form", value, scale,
    )]))
}

/// Orthant margin `min_i δθ_i`.
pub fn orthant_margin(v: &[f64]) -> ConeMargin {
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = v.iter().fold(1.0_f64, |acc, x| acc.max(x.abs()));
    ConeMargin::new(vec![NamedMargin::new("min_component", min, scale)])
}

/// Planar cone margins: signed cross products against both generators,
/// oriented so the convex cone between them is nonnegative.
pub fn planar_margin(spec: &ConeSpec, v: [f64; 2]) -> Result<ConeMargin> {
    let ConeKind::Planar { g1, g2 } = spec.kind else {
        return Err(invalid("spec", "planar margin needs a planar cone"));
    };
    let orientation = cross(g1, g2).signum();
    let vn = v[0].hypot(v[1]);
    let s1 = (g1[0].hypot(g1[1]) * vn).max(1.0);
    let s2 = (g2[0].hypot(g2[1]) * vn).max(1.0);
    Ok(ConeMargin::new(vec![
        NamedMargin::new("g1_side", orientation * cross(g1, v), s1),
        NamedMargin::new("g2_side", orientation * cross(v, g2), s2),
    ]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::{random_invertible, random_spd, seeded_rng};
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn diag(d: &[f64]) -> SymMatrix {
        SymMatrix::from_diagonal(d)
    }

    #[test]
    fn quad_margin_identity_examples() {
        let i2 = SpdPoint::identity(2);
        let m = quad_margin(1.0, &i2, &SymMatrix::identity(2)).unwrap();
        assert_eq!(m.values(), vec![2.0, 2.0]);
        assert!(m.member);

        for mu in [0.3, 1.0, 1.7] {
            let m = quad_margin(mu, &i2, &diag(&[1.0, -1.0])).unwrap();
            assert_eq!(m.margins[0].value, 0.0);
            assert_abs_diff_eq!(m.margins[1].value, -2.0 * mu, epsilon = 1e-14);
            assert!(!m.member);
        }

        // m₂ = 9 − 5μ
        for (mu, member) in [(1.7, true), (1.8, true), (1.81, false), (1.95, false)] {
            let m = quad_margin(mu, &i2, &diag(&[2.0, 1.0])).unwrap();
            assert_abs_diff_eq!(m.margins[1].value, 9.0 - 5.0 * mu, epsilon = 1e-13);
            assert_eq!(m.member, member, "mu={mu}");
        }
    }

    #[test]
    fn quad_mu_out_of_range() {
        let i2 = SpdPoint::identity(2);
        assert!(quad_margin(0.0, &i2, &SymMatrix::identity(2)).is_err());
        assert!(quad_margin(2.0, &i2, &SymMatrix::identity(2)).is_err());
        assert!(ConeSpec::quadratic(3, 3.0).is_err());
        assert!(ConeSpec::quadratic(3, 2.99).is_ok());
    }

    #[test]
    fn quad_margin_matches_trace_formula_off_identity() {
        let mut rng = seeded_rng(21);
        let sigma = random_spd(&mut rng, 3);
        let x = crate::sampling::random_symmetric(&mut rng, 3);
        let m = quad_margin(1.2, &sigma, &x).unwrap();
        let p = sigma.inverse().as_matrix() * x.as_matrix();
        let t = p.trace();
        let t2 = (&p * &p).trace();
        assert_abs_diff_eq!(m.margins[0].value, t, epsilon = 1e-10);
        assert_abs_diff_eq!(m.margins[1].value, t * t - 1.2 * t2, epsilon = 1e-9);
    }

    #[test]
    fn loewner_examples() {
        let i2 = SpdPoint::identity(2);
        let m = loewner_margin(&i2, &diag(&[1.0, 0.0]));
        assert_eq!(m.margins[0].value, 0.0);
        assert!(m.member);
        let m = loewner_margin(&i2, &diag(&[-1.0, -1.0]));
        assert_eq!(m.margins[0].value, -1.0);
        assert!(!m.member);
    }

    #[test]
    fn loewner_congruence_invariance() {
        let mut rng = seeded_rng(22);
        for _ in 0..50 {
            let sigma = random_spd(&mut rng, 3);
            let x = crate::sampling::random_symmetric(&mut rng, 3);
            let a = random_invertible(&mut rng, 3);
            let before = loewner_margin(&sigma, &x);
            let moved = SpdPoint::new(sigma.as_sym().congruence(&a)).unwrap();
            let after = loewner_margin(&moved, &x.congruence(&a));
            assert!((before.margins[0].value - after.margins[0].value).abs() <= 1e-9);
        }
    }

    #[test]
    fn ad_probe_examples() {
        let spec = ConeSpec::quadratic(3, 1.0).unwrap();
        assert_eq!(ad_invariance_probe(&spec, 0, 1).unwrap(), 0.0);
        assert!(ad_invariance_probe(&spec, 100, 1).unwrap() <= 1e-9);
        assert!(ad_invariance_probe(&ConeSpec::loewner(3), 100, 2).unwrap() <= 1e-9);
        assert!(ad_invariance_probe(&ConeSpec::orthant(3), 1, 2).is_err());

        let perm = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 0.0]);
        let x = diag(&[1.0, 2.0, 3.0]);
        let d = conjugation_discrepancy(&spec, &SpdPoint::identity(3), &x, &perm).unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn rankk_examples() {
        let p = diag(&[1.0, 1.0, -1.0]);
        let spec = ConeSpec::rank_k(p.clone()).unwrap();
        assert_eq!(spec.rank(), 2);
        let m = rankk_margin(&p, &[1.0, 0.0, 0.0]).unwrap();
        assert_eq!(m.margins[0].value, 1.0);
        assert!(m.member);
        let m = rankk_margin(&p, &[0.0, 0.0, 1.0]).unwrap();
        assert_eq!(m.margins[0].value, -1.0);
        assert!(!m.member);
        assert_eq!(spec.complement().unwrap().rank(), 1);
        assert!(ConeSpec::rank_k(diag(&[1.0, 0.0, -1.0])).is_err());
    }

    #[test]
    fn orthant_examples() {
        let m = orthant_margin(&[1.0, 2.0, 3.0]);
        assert_eq!(m.min_value(), 1.0);
        assert!(m.member);
        let m = orthant_margin(&[1.0, -1.0]);
        assert_eq!(m.min_value(), -1.0);
        assert!(!m.member);
        let ones = vec![1.0; 7];
        assert!(orthant_margin(&ones).member);
        assert_eq!(orthant_margin(&ones).min_value(), 1.0);
    }

    #[test]
    fn planar_examples() {
        let q1 = ConeSpec::first_quadrant();
        assert!(planar_margin(&q1, [1.0, 1.0]).unwrap().member);
        assert!(!planar_margin(&q1, [-1.0, 0.0]).unwrap().member);
        assert!(planar_margin(&q1, [0.0, 0.0]).unwrap().member);
        // generators given clockwise describe the same convex cone
        let swapped = ConeSpec::planar([0.0, 1.0], [1.0, 0.0]).unwrap();
        assert!(planar_margin(&swapped, [1.0, 1.0]).unwrap().member);
        assert!(!planar_margin(&swapped, [-1.0, -1.0]).unwrap().member);
        assert!(!planar_margin(&swapped, [1.0, -0.1]).unwrap().member);
    }

    #[test]
    fn planar_rotation_preserves_verdict() {
        let mut rng = seeded_rng(23);
        use rand::Rng;
        for _ in 0..200 {
            let a: f64 = rng.random_range(0.0..6.2);
            let b: f64 = a + rng.random_range(0.1..3.0);
            let g1 = [a.cos(), a.sin()];
            let g2 = [b.cos(), b.sin()];
            let v = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let rot = |p: [f64; 2]| {
                [
                    phi.cos() * p[0] - phi.sin() * p[1],
                    phi.sin() * p[0] + phi.cos() * p[1],
                ]
            };
            let before = planar_margin(&ConeSpec::planar(g1, g2).unwrap(), v).unwrap();
            let after =
                planar_margin(&ConeSpec::planar(rot(g1), rot(g2)).unwrap(), rot(v)).unwrap();
            if !before.is_boundary(1e-8) {
                assert_eq!(before.member, after.member);
            }
        }
    }

    #[test]
    fn planar_rejects_degenerate_generators() {
        assert!(ConeSpec::planar([1.0, 0.0], [-1.0, 0.0]).is_err());
        assert!(ConeSpec::planar([1.0, 0.0], [2.0, 0.0]).is_err());
        assert!(ConeSpec::planar([0.0, 0.0], [0.0, 1.0]).is_err());
    }

    #[test]
    fn spec_json_roundtrip() {
        let spec = ConeSpec::quadratic(3, 1.5).unwrap();
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"kind":"quadratic","mu":1.5,"n":3}"#);
        assert_eq!(serde_json::from_str::<ConeSpec>(&json).unwrap(), spec);
        assert!(
            serde_json::from_str::<ConeSpec>(r#"{"kind":"quadratic","mu":4.0,"n":3}"#).is_err()
        );
    }
}
