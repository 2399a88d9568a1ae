//! Differential positivity and monotonicity of maps on the SPD manifold.
//!
//! A map `F` is differentially positive for a cone field `K` when
//! `dF|_Σ K(Σ) ⊆ K(F(Σ))` at every `Σ`. Because the affine-invariant cone
//! fields used here induce partial orders, this is equivalent to `F` being
//! monotone, which [`monotone_scan`] checks directly on ordered pairs.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{ConeMargin, ConeSpec};
use crate::error::{invalid, ConalError, Result};
use crate::order::spd_order;
use crate::sampling::{
    cone_direction_at_identity, ordered_pair, random_spd, transport_from_identity, trial_rng,
    Placement,
};
use crate::spd_geometry::{condition_estimate, MAX_CONDITION};
use crate::symmat::{frechet_pow, sym_fn, MatrixFunction, SpdPoint, SymMatrix};

/// Default threshold below which a post-image margin counts as a violation.
pub const VIOLATION_THRESHOLD: f64 = 1e-7;

type MapFn = dyn Fn(&SpdPoint) -> Result<SpdPoint> + Send + Sync;

/// A user-supplied map; its differential is taken by central differences.
#[derive(Clone)]
pub struct CustomMap {
    name: String,
    f: Arc<MapFn>,
}

impl CustomMap {
    pub fn new(
        name: impl Into<String>,
        f: impl Fn(&SpdPoint) -> Result<SpdPoint> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            f: Arc::new(f),
        }
    }
}

impl fmt::Debug for CustomMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomMap")
            .field("name", &self.name)
            .finish()
    }
}

#[derive(Clone, Debug)]
pub enum MapSpec {
    /// `Σ ↦ Σ^r`.
    Power(f64),
    /// `Σ ↦ AΣAᵀ` for invertible `A`; build with [`MapSpec::congruence`].
    Congruence(DMatrix<f64>),
    /// `Σ ↦ Σ⁻¹`.
    Inversion,
    /// `Σ ↦ Σ + B`, defined where the result stays positive definite.
    Translation(SymMatrix),
    /// Applied left to right: `[F, G]` is `G ∘ F`.
    Compose(Vec<MapSpec>),
    Custom(CustomMap),
}

impl MapSpec {
    pub fn congruence(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() {
            return Err(ConalError::NotSquare {
                rows: a.nrows(),
                cols: a.ncols(),
            });
        }
        let condition = condition_estimate(&a);
        if !(condition <= MAX_CONDITION) {
            return Err(ConalError::Singular { condition });
        }
        Ok(MapSpec::Congruence(a))
    }

    pub fn label(&self) -> String {
        match self {
            MapSpec::Power(r) => format!("power({r})"),
            MapSpec::Congruence(_) => "congruence".into(),
            MapSpec::Inversion => "inversion".into(),
            MapSpec::Translation(_) => "translation".into(),
            MapSpec::Compose(parts) => parts
                .iter()
                .map(MapSpec::label)
                .collect::<Vec<_>>()
                .join(" then "),
            MapSpec::Custom(c) => c.name.clone(),
        }
    }
}

/// Evaluates `F(Σ)`.
pub fn map_apply(map: &MapSpec, sigma: &SpdPoint) -> Result<SpdPoint> {
    match map {
        MapSpec::Power(r) if *r == 1.0 => Ok(sigma.clone()),
        MapSpec::Power(r) => SpdPoint::new(sym_fn(sigma.as_sym(), MatrixFunction::Pow(*r))?),
        MapSpec::Congruence(a) => {
            crate::spd_geometry::check_same_dim(a.nrows(), sigma.dim())?;
            SpdPoint::new(sigma.as_sym().congruence(a))
        }
        MapSpec::Inversion => Ok(sigma.inverse()),
        MapSpec::Translation(b) => {
            crate::spd_geometry::check_same_dim(b.dim(), sigma.dim())?;
            SpdPoint::new(sigma.as_sym().add(b))
                .map_err(|e| ConalError::Domain(format!("translation leaves the SPD cone: {e}")))
        }
        MapSpec::Compose(parts) => parts
            .iter()
            .try_fold(sigma.clone(), |acc, part| map_apply(part, &acc)),
        MapSpec::Custom(c) => (c.f)(sigma),
    }
}

/// Finite-difference step for custom maps.
pub fn fd_step(sigma: &SpdPoint, x: &SymMatrix) -> f64 {
    let xn = x.norm();
    if xn == 0.0 {
        return 1e-6;
    }
    (1e-6 * sigma.as_sym().norm() / xn).max(1e-6)
}

fn central_difference(map: &MapSpec, sigma: &SpdPoint, x: &SymMatrix) -> Result<SymMatrix> {
    let mut h = fd_step(sigma, x);
    let mut last_err = None;
    for _ in 0..=4 {
        let plus = SpdPoint::new(sigma.as_sym().add(&x.scale(h)));
        let minus = SpdPoint::new(sigma.as_sym().sub(&x.scale(h)));
        match (plus, minus) {
            (Ok(p), Ok(m)) => {
                let fp = map_apply(map, &p)?;
                let fm = map_apply(map, &m)?;
                let diff = (fp.as_matrix() - fm.as_matrix()) / (2.0 * h);
                return Ok(SymMatrix::from_matrix_unchecked(diff));
            }
            (Err(e), _) | (_, Err(e)) => {
                last_err = Some(e);
                h *= 0.1;
            }
        }
    }
    Err(ConalError::Domain(format!(
        "finite-difference stencil leaves the SPD cone: {}",
        last_err.expect("loop ran")
    )))
}

/// `dF|_Σ X`.
pub fn map_differential(map: &MapSpec, sigma: &SpdPoint, x: &SymMatrix) -> Result<SymMatrix> {
    crate::spd_geometry::check_same_dim(sigma.dim(), x.dim())?;
    match map {
        MapSpec::Power(r) if *r == 1.0 => Ok(x.clone()),
        MapSpec::Power(r) => Ok(frechet_pow(sigma, x, *r)),
        MapSpec::Congruence(a) => Ok(x.congruence(a)),
        MapSpec::Inversion => {
            let inv = sigma.inverse();
            Ok(x.congruence(inv.as_matrix()).scale(-1.0))
        }
        MapSpec::Translation(_) => Ok(x.clone()),
        MapSpec::Compose(parts) => {
            let mut point = sigma.clone();
            let mut dir = x.clone();
            for part in parts {
                dir = map_differential(part, &point, &dir)?;
                point = map_apply(part, &point)?;
            }
            Ok(dir)
        }
        MapSpec::Custom(_) => central_difference(map, sigma, x),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PositivityReport {
    /// Minimum over all samples of the smallest post-image cone margin.
    pub min_post_margin: f64,
    pub worst_point: SpdPoint,
    pub worst_direction: SymMatrix,
    pub samples: usize,
}

struct Sample {
    margin: f64,
    point: SpdPoint,
    direction: SymMatrix,
}

fn placement_for(index: usize) -> Placement {
    if index.is_multiple_of(2) {
        Placement::Boundary
    } else {
        Placement::Interior
    }
}

/// Samples points and cone directions (boundary and interior) and records
/// the worst margin of `dF|_Σ X` in `K(F(Σ))`.
pub fn diff_positivity_check(
    map: &MapSpec,
    spec: &ConeSpec,
    points: usize,
    dirs: usize,
    seed: u64,
) -> Result<PositivityReport> {
    if points == 0 || dirs == 0 {
        return Err(invalid("points/dirs", "need at least one sample of each"));
    }
    if !spec.is_matrix_cone() {
        return Err(invalid(
            "spec",
            "differential positivity on SPD needs a matrix cone",
        ));
    }
    let n = spec.dim();
    let per_point: Vec<Sample> = (0..points)
        .into_par_iter()
        .map(|p| -> Result<Sample> {
            let mut rng = trial_rng(seed, p as u64);
            let sigma = random_spd(&mut rng, n);
            let image = map_apply(map, &sigma)?;
            let mut best: Option<Sample> = None;
            for d in 0..dirs {
                let y = cone_direction_at_identity(&mut rng, spec, 1.0, placement_for(d))
                    .expect("matrix cone");
                let x = transport_from_identity(&sigma, &y);
                let pushed = map_differential(map, &sigma, &x)?;
                let margin = spec.margin_at(&image, &pushed)?.min_value();
                if best.as_ref().is_none_or(|b| margin < b.margin) {
                    best = Some(Sample {
                        margin,
                        point: sigma.clone(),
                        direction: x,
                    });
                }
            }
            Ok(best.expect("dirs >= 1"))
        })
        .collect::<Result<_>>()?;
    let worst = per_point
        .into_iter()
        .reduce(|a, b| if b.margin < a.margin { b } else { a })
        .expect("points >= 1");
    Ok(PositivityReport {
        min_post_margin: worst.margin,
        worst_point: worst.point,
        worst_direction: worst.direction,
        samples: points * dirs,
    })
}

/// An ordered pair whose images are not ordered.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Violation {
    pub index: usize,
    pub sigma1: SpdPoint,
    pub sigma2: SpdPoint,
    /// Margins of `Σ₁ ≤ Σ₂`.
    pub input_margins: ConeMargin,
    /// Margins of `F(Σ₁) ≤ F(Σ₂)`.
    pub image_margins: ConeMargin,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScanReport {
    pub map: String,
    pub cone: ConeSpec,
    pub pairs: usize,
    pub threshold: f64,
    /// Smallest image margin seen over all pairs.
    pub min_margin: f64,
    pub violations: Vec<Violation>,
}

fn check_pair(
    map: &MapSpec,
    spec: &ConeSpec,
    index: usize,
    sigma1: SpdPoint,
    sigma2: SpdPoint,
    threshold: f64,
) -> Result<(f64, Option<Violation>)> {
    let input = spd_order(spec, &sigma1, &sigma2)?;
    let image = spd_order(spec, &map_apply(map, &sigma1)?, &map_apply(map, &sigma2)?)?;
    let min = image.margins.min_value();
    let violation = (min < -threshold).then_some(Violation {
        index,
        sigma1,
        sigma2,
        input_margins: input.margins,
        image_margins: image.margins,
    });
    Ok((min, violation))
}

/// Tests `F(Σ₁) ≤ F(Σ₂)` on `pairs` seeded ordered pairs `Σ₁ ≤ Σ₂`,
/// alternating boundary and interior cone directions.
pub fn monotone_scan(
    map: &MapSpec,
    spec: &ConeSpec,
    pairs: usize,
    seed: u64,
    threshold: f64,
) -> Result<ScanReport> {
    if pairs == 0 {
        return Err(invalid("pairs", "need at least one pair"));
    }
    if !spec.is_matrix_cone() {
        return Err(invalid("spec", "monotonicity on SPD needs a matrix cone"));
    }
    let results: Vec<(f64, Option<Violation>)> = (0..pairs)
        .into_par_iter()
        .map(|k| {
            let mut rng = trial_rng(seed, k as u64);
            let (a, b) = ordered_pair(&mut rng, spec, placement_for(k));
            check_pair(map, spec, k, a, b, threshold)
        })
        .collect::<Result<_>>()?;
    let min_margin = results.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let violations = results.into_iter().filter_map(|r| r.1).collect();
    Ok(ScanReport {
        map: map.label(),
        cone: spec.clone(),
        pairs,
        threshold,
        min_margin,
        violations,
    })
}

/// Randomized search for an ordered pair that `Σ ↦ Σ^r` fails to keep
/// ordered. Pairs are shot along boundary directions, where monotonicity
/// is tightest. Returns the first violation within `budget` pairs.
pub fn counterexample_search(
    r: f64,
    spec: &ConeSpec,
    budget: usize,
    seed: u64,
) -> Result<Option<Violation>> {
    if !(r >= 1.0) {
        return Err(invalid(
            "r",
            format!("search targets exponents r >= 1, got {r}"),
        ));
    }
    if spec.dim() < 2 {
        return Err(invalid("n", "power maps are monotone in dimension 1"));
    }
    if !spec.is_matrix_cone() {
        return Err(invalid("spec", "counterexample search needs a matrix cone"));
    }
    let map = MapSpec::Power(r);
    for k in 0..budget {
        let mut rng = trial_rng(seed, k as u64);
        let placement = if k % 4 == 3 {
            Placement::Interior
        } else {
            Placement::Boundary
        };
        let (a, b) = ordered_pair(&mut rng, spec, placement);
        let (_, violation) = check_pair(&map, spec, k, a, b, VIOLATION_THRESHOLD)?;
        if violation.is_some() {
            return Ok(violation);
        }
    }
    Ok(None)
}
