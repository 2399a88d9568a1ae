use std::f64::consts::PI;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{linearization_into, rhs_into, wrap_angle, Edge, OscillatorNetwork};
use crate::error::{invalid, ConalError, Result};

/// An accepted state must keep every barrier gap below this.
pub const BARRIER_LIMIT: f64 = PI - 1e-9;
/// Initial states must keep every barrier gap below this.
pub const INITIAL_GAP_LIMIT: f64 = PI - 1e-6;
/// Largest tolerated drift of `Ψ(t)𝟏` away from `𝟏`.
pub const ROW_SUM_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    pub dt: f64,
    /// Smallest substep tried near the barrier before giving up.
    pub dt_min: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            dt: 1e-2,
            dt_min: 1e-5,
        }
    }
}

/// States on a uniform time grid, in the covering space `ℝᴺ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `θ̇` at each stored state.
    pub velocities: Vec<Vec<f64>>,
    pub dt: f64,
    /// Number of RK4 substeps used between consecutive samples.
    pub substeps: Vec<u32>,
}

impl Trajectory {
    pub fn agents(&self) -> usize {
        self.states.first().map_or(0, Vec::len)
    }

    pub fn horizon(&self) -> f64 {
        self.times.last().copied().unwrap_or(0.0)
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory is never empty")
    }

    /// CSV with header `t,theta_1,...,theta_N` and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.agents();
        let mut out = String::from("t");
        for k in 1..=n {
            let _ = write!(out, ",theta_{k}");
        }
        out.push('\n');
        for (t, state) in self.times.iter().zip(&self.states) {
            let _ = write!(out, "{t:.16e}");
            for v in state {
                let _ = write!(out, ",{v:.16e}");
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> io::Result<()> {
        std::fs::write(path, self.to_csv())
    }
}

struct Rk4Scratch {
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl Rk4Scratch {
    fn new(n: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; n]),
            stage: vec![0.0; n],
        }
    }
}

const STAGE_WEIGHTS: [f64; 3] = [0.5, 0.5, 1.0];

/// One classical RK4 step; the stage states are left in `stages` when given.
fn rk4_step(
    net: &OscillatorNetwork,
    theta: &[f64],
    h: f64,
    scratch: &mut Rk4Scratch,
    mut stages: Option<&mut [Vec<f64>; 4]>,
) -> Result<Vec<f64>> {
    let n = theta.len();
    scratch.stage.copy_from_slice(theta);
    for s in 0..4 {
        if let Some(st) = stages.as_deref_mut() {
            st[s].copy_from_slice(&scratch.stage);
        }
        let (done, rest) = scratch.k.split_at_mut(s);
        rhs_into(net, &scratch.stage, &mut rest[0])?;
        if s < 3 {
            let w = STAGE_WEIGHTS[s] * h;
            let _ = done;
            for i in 0..n {
                scratch.stage[i] = theta[i] + w * rest[0][i];
            }
        }
    }
    let k = &scratch.k;
    Ok((0..n)
        .map(|i| theta[i] + h / 6.0 * (k[0][i] + 2.0 * k[1][i] + 2.0 * k[2][i] + k[3][i]))
        .collect())
}

struct BarrierHit {
    edge: Edge,
    gap: f64,
}

fn barrier_check(net: &OscillatorNetwork, old: &[f64], new: &[f64]) -> Option<BarrierHit> {
    for e in net.edges().iter().filter(|e| e.coupling.is_barrier()) {
        let before = wrap_angle(old[e.to] - old[e.from]);
        let after = wrap_angle(new[e.to] - new[e.from]);
        // a jump of more than π between samples means the gap wrapped through ±π
        if after.abs() >= BARRIER_LIMIT || (after - before).abs() > PI {
            return Some(BarrierHit {
                edge: *e,
                gap: after,
            });
        }
    }
    None
}

fn advance(
    net: &OscillatorNetwork,
    theta: &[f64],
    dt: f64,
    substeps: u32,
    scratch: &mut Rk4Scratch,
) -> std::result::Result<Vec<f64>, Option<BarrierHit>> {
    let h = dt / substeps as f64;
    let mut state = theta.to_vec();
    for _ in 0..substeps {
        let next = rk4_step(net, &state, h, scratch, None).map_err(|_| None)?;
        if next.iter().any(|v| !v.is_finite()) {
            return Err(None);
        }
        if let Some(hit) = barrier_check(net, &state, &next) {
            return Err(Some(hit));
        }
        state = next;
    }
    Ok(state)
}

/// Fixed-step RK4 with default options and step `dt`.
pub fn simulate(
    net: &OscillatorNetwork,
    theta0: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<Trajectory> {
    simulate_with(
        net,
        theta0,
        horizon,
        &SimOptions {
            dt,
            ..SimOptions::default()
        },
    )
}

/// Integrates the network from `theta0` on the grid `t_j = j·dt`.
///
/// A step that would bring a barrier edge within `1e-9` of `±π` is retried
/// with 2, 4, … substeps down to `dt_min`; beyond that the run fails with
/// [`ConalError::BarrierBreach`].
pub fn simulate_with(
    net: &OscillatorNetwork,
    theta0: &[f64],
    horizon: f64,
    opts: &SimOptions,
) -> Result<Trajectory> {
    net.check_state(theta0)?;
    if !(opts.dt > 0.0) || !(opts.dt_min > 0.0) {
        return Err(invalid("dt", "time steps must be positive"));
    }
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(invalid("horizon", "must be finite and nonnegative"));
    }
    if let Some((gap, e)) = net.max_barrier_gap(theta0) {
        if gap >= INITIAL_GAP_LIMIT {
            return Err(ConalError::Domain(format!(
                "initial gap {gap} on edge ({}, {}) is outside the barrier region",
                e.from, e.to
            )));
        }
    }
    let steps = (horizon / opts.dt).round() as usize;
    let n = net.agents();
    let mut scratch = Rk4Scratch::new(n);
    let mut traj = Trajectory {
        times: Vec::with_capacity(steps + 1),
        states: Vec::with_capacity(steps + 1),
        velocities: Vec::with_capacity(steps + 1),
        dt: opts.dt,
        substeps: Vec::with_capacity(steps),
    };
    let mut theta = theta0.to_vec();
    let mut velocity = vec![0.0; n];
    rhs_into(net, &theta, &mut velocity)?;
    traj.times.push(0.0);
    traj.states.push(theta.clone());
    traj.velocities.push(velocity.clone());

    for j in 0..steps {
        let mut substeps = 1u32;
        let next = loop {
            match advance(net, &theta, opts.dt, substeps, &mut scratch) {
                Ok(next) => break next,
                Err(hit) => {
                    if opts.dt / (2 * substeps) as f64 >= opts.dt_min {
                        substeps *= 2;
                        continue;
                    }
                    let (from, to, gap) = match hit {
                        Some(h) => (h.edge.from, h.edge.to, h.gap),
                        None => {
                            let (gap, e) = net
                                .max_barrier_gap(&theta)
                                .map(|(g, e)| (g, *e))
                                .unwrap_or((f64::NAN, net.edges()[0]));
                            (e.from, e.to, gap)
                        }
                    };
                    return Err(ConalError::BarrierBreach {
                        time: j as f64 * opts.dt,
                        from,
                        to,
                        gap,
                    });
                }
            }
        };
        theta = next;
        rhs_into(net, &theta, &mut velocity)?;
        traj.times.push((j + 1) as f64 * opts.dt);
        traj.states.push(theta.clone());
        traj.velocities.push(velocity.clone());
        traj.substeps.push(substeps);
    }
    Ok(traj)
}

/// Fundamental matrices `Ψ(t)` of `Ψ' = A(θ(t))Ψ` with `Ψ(t_start) = I`.
#[derive(Clone, Debug, PartialEq)]
pub struct VariationalFlow {
    pub times: Vec<f64>,
    pub psi: Vec<DMatrix<f64>>,
    /// `max_t ‖Ψ(t)𝟏 − 𝟏‖_∞` over the stored flow.
    pub row_sum_defect: f64,
}

impl VariationalFlow {
    pub fn start_time(&self) -> f64 {
        self.times[0]
    }

    /// Index of the stored sample closest to `t`.
    pub fn index_at(&self, t: f64) -> usize {
        let dt = if self.times.len() > 1 {
            self.times[1] - self.times[0]
        } else {
            1.0
        };
        let k = ((t - self.times[0]) / dt).round();
        (k.max(0.0) as usize).min(self.times.len() - 1)
    }

    pub fn at(&self, t: f64) -> &DMatrix<f64> {
        &self.psi[self.index_at(t)]
    }
}

pub fn variational(net: &OscillatorNetwork, traj: &Trajectory) -> Result<VariationalFlow> {
    variational_from(net, traj, 0)
}

/// Integrates the variational equation from sample `start` onwards, using
/// the same RK4 stages (and substeps) that produced the trajectory.
pub fn variational_from(
    net: &OscillatorNetwork,
    traj: &Trajectory,
    start: usize,
) -> Result<VariationalFlow> {
    if start >= traj.states.len() {
        return Err(invalid("start", "beyond the end of the trajectory"));
    }
    if traj.agents() != net.agents() {
        return Err(ConalError::DimensionMismatch {
            expected: net.agents(),
            found: traj.agents(),
        });
    }
    let n = net.agents();
    let ones = DVector::from_element(n, 1.0);
    let mut scratch = Rk4Scratch::new(n);
    let mut stages: [Vec<f64>; 4] = std::array::from_fn(|_| vec![0.0; n]);
    let mut a = DMatrix::zeros(n, n);

    let mut psi = DMatrix::identity(n, n);
    let mut flow = VariationalFlow {
        times: vec![traj.times[start]],
        psi: vec![psi.clone()],
        row_sum_defect: 0.0,
    };
    for j in start..traj.substeps.len() {
        let subs = traj.substeps[j];
        let h = traj.dt / subs as f64;
        let mut theta = traj.states[j].clone();
        for _ in 0..subs {
            let next = rk4_step(net, &theta, h, &mut scratch, Some(&mut stages))?;
            let mut k_prev: Option<DMatrix<f64>> = None;
            let mut ks: Vec<DMatrix<f64>> = Vec::with_capacity(4);
            for (s, stage) in stages.iter().enumerate() {
                linearization_into(net, stage, &mut a)?;
                let arg = match (&k_prev, s) {
                    (Some(k), s) => &psi + k * (STAGE_WEIGHTS[s - 1] * h),
                    (None, _) => psi.clone(),
                };
                let k = &a * arg;
                k_prev = Some(k.clone());
                ks.push(k);
            }
            psi += (&ks[0] + &ks[1] * 2.0 + &ks[2] * 2.0 + &ks[3]) * (h / 6.0);
            theta = next;
        }
        let defect = (&psi * &ones - &ones).amax();
        flow.row_sum_defect = flow.row_sum_defect.max(defect);
        flow.times.push(traj.times[j + 1]);
        flow.psi.push(psi.clone());
    }
    if flow.row_sum_defect > ROW_SUM_TOL {
        return Err(ConalError::Domain(format!(
            "variational flow lost the invariant Psi*1 = 1 (defect {:e})",
            flow.row_sum_defect
        )));
    }
    Ok(flow)
}

#[cfg(test)]
mod tests {
    use super::super::{Coupling, OscillatorNetwork};
    use super::*;

    const TAN1: Coupling = Coupling::BarrierTan { gain: 1.0 };

    fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(lo) * f(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn equilibrium_is_constant() {
        let net = OscillatorNetwork::ring_with_chords(vec![0.0; 4], &[], TAN1).unwrap();
        let traj = simulate(&net, &[0.4; 4], 1.0, 0.01).unwrap();
        assert_eq!(traj.states.len(), 101);
        assert!(traj.states.iter().all(|s| s == &vec![0.4; 4]));
    }

    #[test]
    fn two_agents_converge_to_root() {
        let net = OscillatorNetwork::ring_with_chords(vec![0.1, -0.1], &[], TAN1).unwrap();
        let traj = simulate(&net, &[0.0, 0.0], 40.0, 0.01).unwrap();
        let delta = bisect(|d: f64| d.tan() - 0.1, 0.0, 1.0);
        let end = traj.final_state();
        assert!(((end[0] - end[1]) - 2.0 * delta).abs() < 1e-6);
    }

    #[test]
    fn halving_dt_converges() {
        let net = OscillatorNetwork::ring_with_chords(vec![0.2, -0.1, 0.05], &[], TAN1).unwrap();
        let a = simulate(&net, &[0.0, 1.0, -1.0], 5.0, 0.02).unwrap();
        let b = simulate(&net, &[0.0, 1.0, -1.0], 5.0, 0.01).unwrap();
        let diff = a
            .final_state()
            .iter()
            .zip(b.final_state())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-6, "{diff:e}");
    }

    #[test]
    fn initial_state_outside_barrier_region_rejected() {
        let net = OscillatorNetwork::ring_with_chords(vec![0.0, 0.0], &[], TAN1).unwrap();
        assert!(simulate(&net, &[0.0, PI], 1.0, 0.01).is_err());
    }

    #[test]
    fn uncoupled_agents_drift_without_breach() {
        let net = OscillatorNetwork::new(vec![0.0, 1.0], vec![]).unwrap();
        let traj = simulate(&net, &[0.0, 0.0], 10.0, 0.01).unwrap();
        assert!((traj.final_state()[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn printed_sign_hits_the_barrier() {
        // repulsive coupling drives neighbours apart until the barrier stops the run
        let net = OscillatorNetwork::ring_with_chords(vec![0.0, 0.0], &[], TAN1)
            .unwrap()
            .with_sign(super::super::SignConvention::Printed);
        let err = simulate(&net, &[0.0, 0.1], 50.0, 0.01).unwrap_err();
        assert!(matches!(err, ConalError::BarrierBreach { .. }), "{err:?}");
    }

    #[test]
    fn csv_format() {
        let net = OscillatorNetwork::ring_with_chords(vec![0.0, 0.0], &[], TAN1).unwrap();
        let traj = simulate(&net, &[0.25, 0.25], 0.02, 0.01).unwrap();
        let csv = traj.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("t,theta_1,theta_2"));
        let row: Vec<f64> = lines
            .next()
            .unwrap()
            .split(',')
            .map(|x| x.parse().unwrap())
            .collect();
        assert_eq!(row, vec![0.0, 0.25, 0.25]);
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn variational_starts_at_identity_and_keeps_ones() {
        let net = OscillatorNetwork::ring_with_chords(vec![0.1, -0.2, 0.05, 0.0], &[(0, 2)], TAN1)
            .unwrap();
        let traj = simulate(&net, &[0.0, 0.5, -0.5, 1.0], 5.0, 0.01).unwrap();
        let flow = variational(&net, &traj).unwrap();
        assert_eq!(flow.psi[0], DMatrix::identity(4, 4));
        assert!(flow.row_sum_defect <= 1e-8);
        assert_eq!(flow.psi.len(), traj.states.len());
    }

    #[test]
    fn variational_matches_finite_difference_of_flow() {
        let net = OscillatorNetwork::ring_with_chords(vec![0.1, -0.2, 0.05], &[], TAN1).unwrap();
        let theta0 = [0.0, 0.7, -0.4];
        let horizon = 2.0;
        let traj = simulate(&net, &theta0, horizon, 0.01).unwrap();
        let flow = variational(&net, &traj).unwrap();
        let h = 1e-6;
        for i in 0..3 {
            let mut p = theta0;
            let mut m = theta0;
            p[i] += h;
            m[i] -= h;
            let fp = simulate(&net, &p, horizon, 0.01).unwrap();
            let fm = simulate(&net, &m, horizon, 0.01).unwrap();
            for k in 0..3 {
                let fd = (fp.final_state()[k] - fm.final_state()[k]) / (2.0 * h);
                assert!((fd - flow.psi.last().unwrap()[(k, i)]).abs() < 1e-6);
            }
        }
    }
}
