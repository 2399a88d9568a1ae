//! Oscillator networks on the torus `𝕋ᴺ`.
//!
//! Agent `k` follows `θ̇_k = ω_k + Σ_{(k,i) ∈ E} μ_ki(θ_i − θ_k)` with odd,
//! strictly increasing couplings. The linearization is a Metzler matrix with
//! zero row sums, so the flow is differentially positive for the orthant cone
//! field and `𝟏 = (1, …, 1)` is its dominant direction.

mod diagnostics;
mod integrate;

pub use diagnostics::{
    contraction_report, phase_lock_detect, phi_ratio, phi_ratio_series, transition_contraction,
    ContractionReport, PhaseLock,
};
pub use integrate::{
    simulate, simulate_with, variational, variational_from, SimOptions, Trajectory, VariationalFlow,
};

use std::collections::VecDeque;
use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, ConalError, Result};

/// Wraps an angle difference to `(-π, π]`.
pub fn wrap_angle(alpha: f64) -> f64 {
    if alpha > -PI && alpha <= PI {
        return alpha;
    }
    let two_pi = 2.0 * PI;
    let mut a = alpha.rem_euclid(two_pi);
    if a > PI {
        a -= two_pi;
    }
    a
}

/// Odd coupling function `μ` applied to a phase difference.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coupling {
    /// `g · tan(α/2)`: vanishes at 0, increasing, unbounded as `α → ±π`.
    BarrierTan { gain: f64 },
    /// `g · sin(α)`: bounded and not a barrier.
    Sine { gain: f64 },
}

impl Coupling {
    pub fn gain(&self) -> f64 {
        match *self {
            Coupling::BarrierTan { gain } | Coupling::Sine { gain } => gain,
        }
    }

    pub fn is_barrier(&self) -> bool {
        matches!(self, Coupling::BarrierTan { .. })
    }

    /// `(μ(α), μ'(α))`.
    pub fn eval(&self, alpha: f64) -> Result<(f64, f64)> {
        coupling_eval(*self, alpha)
    }
}

/// Value and derivative of a coupling at phase difference `alpha`.
pub fn coupling_eval(coupling: Coupling, alpha: f64) -> Result<(f64, f64)> {
    match coupling {
        Coupling::BarrierTan { gain } => {
            if !(alpha.abs() < PI) {
                return Err(ConalError::Domain(format!(
                    "barrier coupling evaluated at |alpha| = {} >= pi",
                    alpha.abs()
                )));
            }
            let half = 0.5 * alpha;
            let sec = 1.0 / half.cos();
            Ok((gain * half.tan(), 0.5 * gain * sec * sec))
        }
        Coupling::Sine { gain } => Ok((gain * alpha.sin(), gain * alpha.cos())),
    }
}

/// Directed interaction: agent `from` reacts to agent `to`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub coupling: Coupling,
}

/// Which phase difference is fed to the coupling.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    /// `μ_ki(θ_i − θ_k)`: agents are pulled toward their neighbours.
    #[default]
    Attractive,
    /// `μ_ki(θ_k − θ_i)`, which pushes neighbours apart for increasing `μ`.
    Printed,
}

impl SignConvention {
    fn factor(self) -> f64 {
        match self {
            SignConvention::Attractive => 1.0,
            SignConvention::Printed => -1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawNetwork", into = "RawNetwork")]
pub struct OscillatorNetwork {
    n: usize,
    edges: Vec<Edge>,
    omega: Vec<f64>,
    sign: SignConvention,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawNetwork {
    edges: Vec<Edge>,
    omega: Vec<f64>,
    #[serde(default)]
    sign: SignConvention,
}

impl TryFrom<RawNetwork> for OscillatorNetwork {
    type Error = ConalError;

    fn try_from(raw: RawNetwork) -> Result<Self> {
        Ok(OscillatorNetwork::new(raw.omega, raw.edges)?.with_sign(raw.sign))
    }
}

impl From<OscillatorNetwork> for RawNetwork {
    fn from(net: OscillatorNetwork) -> Self {
        RawNetwork {
            edges: net.edges,
            omega: net.omega,
            sign: net.sign,
        }
    }
}

fn strongly_connected(n: usize, edges: &[Edge]) -> bool {
    let reach = |forward: bool| {
        let mut adj = vec![Vec::new(); n];
        for e in edges {
            if forward {
                adj[e.from].push(e.to);
            } else {
                adj[e.to].push(e.from);
            }
        }
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([0usize]);
        seen[0] = true;
        while let Some(v) = queue.pop_front() {
            for &w in &adj[v] {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
        seen.into_iter().all(|s| s)
    };
    reach(true) && reach(false)
}

impl OscillatorNetwork {
    /// Validates edge indices, positive gains and strong connectivity.
    ///
    /// An empty edge set is accepted as the uncoupled network.
    pub fn new(omega: Vec<f64>, edges: Vec<Edge>) -> Result<Self> {
        let n = omega.len();
        if n == 0 {
            return Err(invalid("omega", "network needs at least one agent"));
        }
        if omega.iter().any(|w| !w.is_finite()) {
            return Err(invalid("omega", "frequencies must be finite"));
        }
        for e in &edges {
            if e.from >= n || e.to >= n {
                return Err(invalid(
                    "edges",
                    format!("edge ({}, {}) out of range", e.from, e.to),
                ));
            }
            if e.from == e.to {
                return Err(invalid("edges", format!("self-loop at agent {}", e.from)));
            }
            let g = e.coupling.gain();
            if !(g > 0.0 && g.is_finite()) {
                return Err(invalid("gain", format!("must be positive, got {g}")));
            }
        }
        if !edges.is_empty() && !strongly_connected(n, &edges) {
            return Err(invalid(
                "edges",
                "communication graph is not strongly connected",
            ));
        }
        Ok(Self {
            n,
            edges,
            omega,
            sign: SignConvention::Attractive,
        })
    }

    pub fn with_sign(mut self, sign: SignConvention) -> Self {
        self.sign = sign;
        self
    }

    /// Undirected ring `0-1-…-(N−1)-0` plus undirected chords, with
    /// one coupling on every directed edge.
    pub fn ring_with_chords(
        omega: Vec<f64>,
        chords: &[(usize, usize)],
        coupling: Coupling,
    ) -> Result<Self> {
        let n = omega.len();
        let mut pairs: Vec<(usize, usize)> = if n == 2 {
            vec![(0, 1)]
        } else {
            (0..n).map(|k| (k, (k + 1) % n)).collect()
        };
        pairs.extend_from_slice(chords);
        let edges = pairs
            .into_iter()
            .flat_map(|(a, b)| {
                [
                    Edge {
                        from: a,
                        to: b,
                        coupling,
                    },
                    Edge {
                        from: b,
                        to: a,
                        coupling,
                    },
                ]
            })
            .collect();
        Self::new(omega, edges)
    }

    pub fn agents(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn sign(&self) -> SignConvention {
        self.sign
    }

    /// Every edge coupling satisfies `μ_ki = μ_ik` with matching reverse edge.
    pub fn is_symmetric(&self) -> bool {
        self.edges.iter().all(|e| {
            self.edges
                .iter()
                .any(|r| r.from == e.to && r.to == e.from && r.coupling == e.coupling)
        })
    }

    /// Wrapped phase difference seen by `edge`.
    fn edge_argument(&self, edge: &Edge, theta: &[f64]) -> f64 {
        wrap_angle(self.sign.factor() * (theta[edge.to] - theta[edge.from]))
    }

    /// Largest `|θ_i − θ_k|` (wrapped) over barrier edges, with its edge.
    pub fn max_barrier_gap(&self, theta: &[f64]) -> Option<(f64, &Edge)> {
        self.edges
            .iter()
            .filter(|e| e.coupling.is_barrier())
            .map(|e| (wrap_angle(theta[e.to] - theta[e.from]).abs(), e))
            .max_by(|a, b| a.0.total_cmp(&b.0))
    }

    pub(crate) fn check_state(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.n {
            return Err(ConalError::DimensionMismatch {
                expected: self.n,
                found: theta.len(),
            });
        }
        if theta.iter().any(|t| !t.is_finite()) {
            return Err(ConalError::Domain("non-finite phase".into()));
        }
        Ok(())
    }
}

/// Phase velocities `θ̇`.
pub fn rhs(net: &OscillatorNetwork, theta: &[f64]) -> Result<Vec<f64>> {
    net.check_state(theta)?;
    let mut out = net.omega.clone();
    rhs_into(net, theta, &mut out)?;
    Ok(out)
}

pub(crate) fn rhs_into(net: &OscillatorNetwork, theta: &[f64], out: &mut [f64]) -> Result<()> {
    out.copy_from_slice(&net.omega);
    for e in &net.edges {
        let (value, _) = e.coupling.eval(net.edge_argument(e, theta))?;
        out[e.from] += value;
    }
    Ok(())
}

/// Jacobian `A(θ)` of [`rhs`]: `A_ki = ∂θ̇_k/∂θ_i`, rows summing to zero.
pub fn linearization(net: &OscillatorNetwork, theta: &[f64]) -> Result<DMatrix<f64>> {
    net.check_state(theta)?;
    let mut a = DMatrix::zeros(net.n, net.n);
    linearization_into(net, theta, &mut a)?;
    Ok(a)
}

pub(crate) fn linearization_into(
    net: &OscillatorNetwork,
    theta: &[f64],
    a: &mut DMatrix<f64>,
) -> Result<()> {
    a.fill(0.0);
    let s = net.sign.factor();
    for e in &net.edges {
        let (_, slope) = e.coupling.eval(net.edge_argument(e, theta))?;
        a[(e.from, e.to)] += s * slope;
    }
    for k in 0..net.n {
        let off: f64 = (0..net.n).filter(|&i| i != k).map(|i| a[(k, i)]).sum();
        a[(k, k)] = -off;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const TAN1: Coupling = Coupling::BarrierTan { gain: 1.0 };

    #[test]
    fn coupling_values() {
        assert_eq!(coupling_eval(TAN1, 0.0).unwrap(), (0.0, 0.5));
        let g = Coupling::BarrierTan { gain: 3.0 };
        assert_eq!(coupling_eval(g, 0.0).unwrap(), (0.0, 1.5));
        let (v, d) = coupling_eval(TAN1, PI / 2.0).unwrap();
        assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d, 1.0, epsilon = 1e-15);
        for alpha in [0.1, 1.0, 2.5, 3.1] {
            for c in [TAN1, Coupling::Sine { gain: 0.7 }] {
                let (p, _) = coupling_eval(c, alpha).unwrap();
                let (m, _) = coupling_eval(c, -alpha).unwrap();
                assert_eq!(p, -m);
            }
        }
        assert!(coupling_eval(TAN1, PI).is_err());
        assert!(coupling_eval(TAN1, -3.5).is_err());
        assert!(coupling_eval(Coupling::Sine { gain: 1.0 }, 4.0).is_ok());
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_abs_diff_eq!(wrap_angle(-PI), PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI / 2.0), -PI / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(0.3 + 4.0 * PI), 0.3, epsilon = 1e-14);
    }

    #[test]
    fn validation() {
        assert!(OscillatorNetwork::ring_with_chords(vec![0.0; 5], &[], TAN1).is_ok());
        let one_way = vec![Edge {
            from: 0,
            to: 1,
            coupling: TAN1,
        }];
        assert!(OscillatorNetwork::new(vec![0.0, 0.0], one_way).is_err());
        assert!(OscillatorNetwork::new(vec![0.0, 1.0], vec![]).is_ok());
        assert!(OscillatorNetwork::ring_with_chords(
            vec![0.0; 3],
            &[],
            Coupling::BarrierTan { gain: 0.0 }
        )
        .is_err());
        let bad = vec![Edge {
            from: 0,
            to: 0,
            coupling: TAN1,
        }];
        assert!(OscillatorNetwork::new(vec![0.0], bad).is_err());
    }

    #[test]
    fn rhs_examples() {
        let net = OscillatorNetwork::ring_with_chords(vec![0.0; 4], &[], TAN1).unwrap();
        assert_eq!(rhs(&net, &[0.7; 4]).unwrap(), vec![0.0; 4]);

        let pair = OscillatorNetwork::ring_with_chords(vec![0.0, 0.0], &[], TAN1).unwrap();
        let d = 0.4;
        let v = rhs(&pair, &[d, -d]).unwrap();
        assert_eq!(v[0], TAN1.eval(-2.0 * d).unwrap().0);
        assert_eq!(v[1], TAN1.eval(2.0 * d).unwrap().0);

        let net =
            OscillatorNetwork::ring_with_chords(vec![0.3, -0.1, 0.25, 0.05, -0.2], &[(0, 2)], TAN1)
                .unwrap();
        let theta = [0.1, 0.9, -0.4, 0.3, 1.2];
        let total: f64 = rhs(&net, &theta).unwrap().iter().sum();
        assert_abs_diff_eq!(total, 0.3, epsilon = 1e-14);
    }

    #[test]
    fn linearization_row_sums_and_ring_values() {
        let net = OscillatorNetwork::ring_with_chords(vec![0.0; 6], &[(0, 3)], TAN1).unwrap();
        let theta = [0.2, -0.5, 1.0, 0.4, -0.1, 0.8];
        let a = linearization(&net, &theta).unwrap();
        for k in 0..6 {
            assert!(a.row(k).sum().abs() < 1e-14);
            for i in 0..6 {
                if i != k {
                    assert!(a[(k, i)] >= 0.0);
                }
            }
        }
        let ring = OscillatorNetwork::ring_with_chords(vec![0.0; 5], &[], TAN1).unwrap();
        let a = linearization(&ring, &[0.3; 5]).unwrap();
        assert_eq!(a[(0, 1)], 0.5);
        assert_eq!(a[(0, 4)], 0.5);
        assert_eq!(a[(0, 2)], 0.0);
        assert_eq!(a[(0, 0)], -1.0);
    }

    #[test]
    fn linearization_matches_finite_difference() {
        let net = OscillatorNetwork::ring_with_chords(vec![0.1, 0.0, -0.1, 0.2], &[(1, 3)], TAN1)
            .unwrap()
            .with_sign(SignConvention::Attractive);
        let theta = [0.2, -0.6, 1.1, 0.4];
        let a = linearization(&net, &theta).unwrap();
        let h = 1e-6;
        for i in 0..4 {
            let mut p = theta;
            let mut m = theta;
            p[i] += h;
            m[i] -= h;
            let fp = rhs(&net, &p).unwrap();
            let fm = rhs(&net, &m).unwrap();
            for k in 0..4 {
                assert!(((fp[k] - fm[k]) / (2.0 * h) - a[(k, i)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn printed_sign_gives_negative_off_diagonals() {
        let net = OscillatorNetwork::ring_with_chords(vec![0.0; 3], &[], TAN1)
            .unwrap()
            .with_sign(SignConvention::Printed);
        let a = linearization(&net, &[0.0, 0.1, 0.2]).unwrap();
        assert!(a[(0, 1)] < 0.0);
        assert!(a.row(0).sum().abs() < 1e-15);
    }

    #[test]
    fn network_json_roundtrip() {
        let net = OscillatorNetwork::ring_with_chords(vec![0.0, 0.1, 0.2], &[], TAN1).unwrap();
        let json = serde_json::to_string(&net).unwrap();
        let back: OscillatorNetwork = serde_json::from_str(&json).unwrap();
        assert_eq!(back, net);
        assert!(serde_json::from_str::<OscillatorNetwork>(
            r#"{"omega":[0,0],"edges":[{"from":0,"to":1,"coupling":{"kind":"sine","gain":1}}]}"#
        )
        .is_err());
    }
}
