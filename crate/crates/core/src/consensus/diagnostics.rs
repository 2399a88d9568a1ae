use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::integrate::{Trajectory, VariationalFlow};
use super::wrap_angle;
use crate::error::{invalid, ConalError, Result};

/// Projective contraction of the orthant by a transition matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContractionReport {
    pub tau: f64,
    pub strictly_positive: bool,
    /// Hilbert projective diameter of the image of the orthant; `None` when infinite.
    #[serde(with = "infinite_as_null")]
    pub hilbert_diameter: f64,
    /// `tanh(Δ/4)`; 1 when the diameter is infinite.
    pub birkhoff_ratio: f64,
    pub min_entry: f64,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

/// Birkhoff contraction data of a square matrix acting on the orthant.
pub fn transition_contraction(m: &DMatrix<f64>) -> ContractionReport {
    let min_entry = m.iter().copied().fold(f64::INFINITY, f64::min);
    let strictly_positive = m.nrows() > 0 && min_entry > 0.0;
    if !strictly_positive {
        return ContractionReport {
            tau: f64::NAN,
            strictly_positive,
            hilbert_diameter: f64::INFINITY,
            birkhoff_ratio: 1.0,
            min_entry,
        };
    }
    let l = m.map(f64::ln);
    let n = m.ncols();
    let mut diameter = 0.0f64;
    // max over i,j of (L_ik - L_il) - (L_jk - L_jl) splits into two row maxima
    for k in 0..n {
        for c in 0..n {
            if k == c {
                continue;
            }
            let up = (0..m.nrows())
                .map(|i| l[(i, k)] - l[(i, c)])
                .fold(f64::NEG_INFINITY, f64::max);
            let down = (0..m.nrows())
                .map(|j| l[(j, c)] - l[(j, k)])
                .fold(f64::NEG_INFINITY, f64::max);
            diameter = diameter.max(up + down);
        }
    }
    ContractionReport {
        tau: f64::NAN,
        strictly_positive,
        hilbert_diameter: diameter,
        birkhoff_ratio: (diameter / 4.0).tanh(),
        min_entry,
    }
}

/// Contraction of the transition matrix `Ψ(t₀+τ)` over the first window of the flow.
pub fn contraction_report(flow: &VariationalFlow, tau: f64) -> Result<ContractionReport> {
    let span = flow.times.last().copied().unwrap_or(0.0) - flow.start_time();
    if !(tau > 0.0) || tau > span + 1e-9 {
        return Err(invalid("tau", "must lie in (0, flow horizon]"));
    }
    let m = flow.at(flow.start_time() + tau);
    Ok(ContractionReport {
        tau,
        ..transition_contraction(m)
    })
}

fn split_along_ones(w: &DVector<f64>) -> (f64, f64) {
    let n = w.len() as f64;
    let mean = w.mean();
    let dominant = mean.abs() * n.sqrt();
    let rest = w.iter().map(|x| (x - mean).powi(2)).sum::<f64>().sqrt();
    (dominant, rest)
}

fn check_dominant(v: &DVector<f64>, flow: &VariationalFlow) -> Result<()> {
    if v.len() != flow.psi[0].nrows() {
        return Err(ConalError::DimensionMismatch {
            expected: flow.psi[0].nrows(),
            found: v.len(),
        });
    }
    let (dominant, _) = split_along_ones(v);
    if !(dominant > 1e-12 * v.norm()) {
        return Err(ConalError::Domain(
            "vector has no component along the all-ones direction".into(),
        ));
    }
    Ok(())
}

fn ratio_of(psi: &DMatrix<f64>, v: &DVector<f64>) -> Result<f64> {
    let (dominant, rest) = split_along_ones(&(psi * v));
    if dominant == 0.0 {
        return Err(ConalError::Domain(
            "transported vector lost its dominant component".into(),
        ));
    }
    Ok(rest / dominant)
}

/// `‖Π_{𝟏⊥} Ψ(t)v‖ / ‖Π_𝟏 Ψ(t)v‖` at the stored sample nearest `t`.
pub fn phi_ratio(flow: &VariationalFlow, v: &[f64], t: f64) -> Result<f64> {
    let v = DVector::from_column_slice(v);
    check_dominant(&v, flow)?;
    ratio_of(flow.at(t), &v)
}

/// The Φ-ratio at every stored sample of the flow.
pub fn phi_ratio_series(flow: &VariationalFlow, v: &[f64]) -> Result<Vec<f64>> {
    let v = DVector::from_column_slice(v);
    check_dominant(&v, flow)?;
    flow.psi.iter().map(|psi| ratio_of(psi, &v)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseLock {
    pub locked: bool,
    pub sync_frequency: f64,
    /// `θ_k − θ_1` wrapped to `(−π, π]` at the final sample.
    pub asymptotic_gaps: Vec<f64>,
    pub window: f64,
    pub tol: f64,
    /// Largest peak-to-peak variation of a pairwise gap over the window.
    pub gap_variation: f64,
    /// Largest spread of instantaneous frequencies over the window.
    pub frequency_spread: f64,
}

/// Phase-locking test over the trailing `window` of a trajectory.
pub fn phase_lock_detect(traj: &Trajectory, window: f64, tol: f64) -> PhaseLock {
    let end = traj.horizon();
    let first = traj
        .times
        .iter()
        .position(|&t| t >= end - window - 1e-12)
        .unwrap_or(0);
    let states = &traj.states[first..];
    let velocities = &traj.velocities[first..];
    let n = traj.agents();

    let mut gap_variation = 0.0f64;
    for a in 0..n {
        for b in a + 1..n {
            let (lo, hi) = states
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
                    let g = s[b] - s[a];
                    (lo.min(g), hi.max(g))
                });
            gap_variation = gap_variation.max(hi - lo);
        }
    }
    let mut frequency_spread = 0.0f64;
    let mut total = 0.0;
    for v in velocities {
        let (lo, hi) = v
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            });
        frequency_spread = frequency_spread.max(hi - lo);
        total += v.iter().sum::<f64>();
    }
    let count = (velocities.len() * n).max(1) as f64;
    let last = traj.final_state();
    PhaseLock {
        locked: gap_variation < tol && frequency_spread < tol,
        sync_frequency: total / count,
        asymptotic_gaps: last.iter().map(|x| wrap_angle(x - last[0])).collect(),
        window,
        tol,
        gap_variation,
        frequency_spread,
    }
}
