//! Conal orders induced by invariant cone fields.
//!
//! On a flat space the order is `a ≤ b ⇔ b − a ∈ K`. On the SPD manifold
//! `Σ₁ ≤ Σ₂` holds exactly when the geodesic from `Σ₁` to `Σ₂` is conal,
//! which reduces to a spectral test on `log(Σ₁^{-1/2} Σ₂ Σ₁^{-1/2})`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cone::{ConeMargin, ConeSpec};
use crate::error::{invalid, Result};
use crate::sampling::{random_spd, shoot_conal, trial_rng, Placement};
use crate::spd_geometry::{
    ai_distance, check_same_dim, geodesic_point, geodesic_velocity, relative_log_spectrum,
    GeodesicSegment,
};
use crate::symmat::SpdPoint;

/// Margins within this relative band of zero are treated as boundary cases.
pub const BOUNDARY_BAND: f64 = 1e-8;
/// Distance below which two mutually ordered points count as equal.
pub const ANTISYMMETRY_TOL: f64 = 1e-8;

/// How an ordered pair is connected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Witness {
    /// Straight segment `a + t(b − a)` in a flat space.
    Line { direction: Vec<f64> },
    /// Affine-invariant geodesic; the spectrum of its log-velocity at the start.
    Geodesic { log_spectrum: Vec<f64>, length: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderVerdict {
    pub ordered: bool,
    pub margins: ConeMargin,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub witness: Option<Witness>,
}

impl OrderVerdict {
    fn from_margin(margins: ConeMargin, witness: Witness) -> Self {
        let ordered = margins.member;
        Self {
            ordered,
            witness: ordered.then_some(witness),
            margins,
        }
    }

    pub fn is_boundary(&self) -> bool {
        self.margins.is_boundary(BOUNDARY_BAND)
    }
}

/// `a ≤ b` in a flat space ordered by a constant cone.
pub fn vector_order(spec: &ConeSpec, a: &[f64], b: &[f64]) -> Result<OrderVerdict> {
    check_same_dim(a.len(), b.len())?;
    let direction: Vec<f64> = a.iter().zip(b).map(|(x, y)| y - x).collect();
    let margins = spec.vector_margin(&direction)?;
    Ok(OrderVerdict::from_margin(
        margins,
        Witness::Line { direction },
    ))
}

/// Spectral order test on the SPD manifold.
pub fn spd_order(spec: &ConeSpec, sigma1: &SpdPoint, sigma2: &SpdPoint) -> Result<OrderVerdict> {
    check_same_dim(sigma1.dim(), sigma2.dim())?;
    check_same_dim(spec.dim(), sigma1.dim())?;
    let logs = relative_log_spectrum(sigma1, sigma2)?;
    let margins = spec.spectral_margin(&logs)?;
    let length = logs.iter().map(|l| l * l).sum::<f64>().sqrt();
    Ok(OrderVerdict::from_margin(
        margins,
        Witness::Geodesic {
            log_spectrum: logs,
            length,
        },
    ))
}

/// Order test by checking the geodesic velocity against the cone field at
/// `samples` evenly spaced times in `[0, 1]`. Margins are componentwise
/// minima over the samples.
pub fn spd_order_via_geodesic(
    spec: &ConeSpec,
    sigma1: &SpdPoint,
    sigma2: &SpdPoint,
    samples: usize,
) -> Result<OrderVerdict> {
    if samples < 2 {
        return Err(invalid("samples", "need at least two sample times"));
    }
    check_same_dim(spec.dim(), sigma1.dim())?;
    let seg = GeodesicSegment::new(sigma1, sigma2)?;
    let mut worst: Option<ConeMargin> = None;
    for k in 0..samples {
        let t = k as f64 / (samples - 1) as f64;
        let at = geodesic_point(&seg, t);
        let velocity = geodesic_velocity(&seg, t);
        let m = spec.margin_at(&at, &velocity)?;
        worst = Some(match worst {
            None => m,
            Some(w) => w.pointwise_min(&m),
        });
    }
    let margins = worst.expect("samples >= 2");
    let log_spectrum = seg.log_velocity().eig().values.iter().copied().collect();
    Ok(OrderVerdict::from_margin(
        margins,
        Witness::Geodesic {
            log_spectrum,
            length: seg.length(),
        },
    ))
}

/// Element of the Heisenberg group, the upper unitriangular matrix
/// `[[1, a, c], [0, 1, b], [0, 0, 1]]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Heisenberg {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Heisenberg {
    pub const IDENTITY: Heisenberg = Heisenberg {
        a: 0.0,
        b: 0.0,
        c: 0.0,
    };

    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Self { a, b, c }
    }

    /// Group product `self · other`.
    pub fn mul(&self, other: &Heisenberg) -> Heisenberg {
        Heisenberg {
            a: self.a + other.a,
            b: self.b + other.b,
            c: self.c + other.c + self.a * other.b,
        }
    }

    pub fn inverse(&self) -> Heisenberg {
        Heisenberg {
            a: -self.a,
            b: -self.b,
            c: self.a * self.b - self.c,
        }
    }

    /// Coordinates of the coset modulo the center.
    pub fn coset(&self) -> [f64; 2] {
        [self.a, self.b]
    }
}

/// Order on the quotient of the Heisenberg group by its center, generated by
/// a planar cone in the `(a, b)` coordinates.
pub fn heisenberg_order(spec: &ConeSpec, g1: &Heisenberg, g2: &Heisenberg) -> Result<OrderVerdict> {
    vector_order(spec, &g1.coset(), &g2.coset())
}

/// Outcome counters of [`order_axiom_probe`].
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AxiomReport {
    pub trials: usize,
    pub reflexive_failures: usize,
    pub transitive_failures: usize,
    pub antisymmetry_failures: usize,
    /// Checks skipped because a margin fell inside the boundary band.
    pub boundary_cases: usize,
}

impl AxiomReport {
    pub fn failures(&self) -> usize {
        self.reflexive_failures + self.transitive_failures + self.antisymmetry_failures
    }

    fn merge(mut self, other: AxiomReport) -> AxiomReport {
        self.trials += other.trials;
        self.reflexive_failures += other.reflexive_failures;
        self.transitive_failures += other.transitive_failures;
        self.antisymmetry_failures += other.antisymmetry_failures;
        self.boundary_cases += other.boundary_cases;
        self
    }
}

fn antisymmetry_check(
    spec: &ConeSpec,
    a: &SpdPoint,
    b: &SpdPoint,
    report: &mut AxiomReport,
) -> Result<()> {
    let forward = spd_order(spec, a, b)?;
    let backward = spd_order(spec, b, a)?;
    if forward.ordered && backward.ordered && ai_distance(a, b)? > ANTISYMMETRY_TOL {
        if forward.is_boundary() || backward.is_boundary() {
            report.boundary_cases += 1;
        } else {
            report.antisymmetry_failures += 1;
        }
    }
    Ok(())
}

fn probe_trial(spec: &ConeSpec, seed: u64, trial: usize) -> Result<AxiomReport> {
    let mut rng = trial_rng(seed, trial as u64);
    let n = spec.dim();
    let mut report = AxiomReport {
        trials: 1,
        ..AxiomReport::default()
    };

    let base = random_spd(&mut rng, n);
    if !spd_order(spec, &base, &base)?.ordered {
        report.reflexive_failures += 1;
    }

    let placement = |bit: bool| {
        if bit {
            Placement::Boundary
        } else {
            Placement::Interior
        }
    };
    let p1 = placement(trial.is_multiple_of(2));
    let p2 = placement(trial % 4 < 2);
    let mid = shoot_conal(&mut rng, spec, &base, p1);
    let top = shoot_conal(&mut rng, spec, &mid, p2);
    let chained = spd_order(spec, &base, &top)?;
    if !chained.ordered {
        if chained.is_boundary() {
            report.boundary_cases += 1;
        } else {
            report.transitive_failures += 1;
        }
    }

    let other = random_spd(&mut rng, n);
    antisymmetry_check(spec, &base, &mid, &mut report)?;
    antisymmetry_check(spec, &base, &top, &mut report)?;
    antisymmetry_check(spec, &base, &other, &mut report)?;
    antisymmetry_check(spec, &base, &base, &mut report)?;
    Ok(report)
}

/// Statistical check of reflexivity, transitivity (along chains of conal
/// geodesic shots) and metric antisymmetry for an SPD cone field.
pub fn order_axiom_probe(spec: &ConeSpec, trials: usize, seed: u64) -> Result<AxiomReport> {
    if !spec.is_matrix_cone() {
        return Err(invalid("spec", "axiom probe needs a matrix cone"));
    }
    let reports: Vec<AxiomReport> = (0..trials)
        .into_par_iter()
        .map(|t| probe_trial(spec, seed, t))
        .collect::<Result<_>>()?;
    Ok(reports
        .into_iter()
        .fold(AxiomReport::default(), AxiomReport::merge))
}
