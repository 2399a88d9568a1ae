use std::path::PathBuf;

use rand::Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    ensure_dir, envelope, load_config, runtime, to_pretty, usage, write_atomic, CliError,
    CliResult, CommonFlags, Outcome, EXIT_OK, EXIT_RUNTIME,
};
use crate::consensus::{
    contraction_report, phase_lock_detect, phi_ratio_series, simulate_with, variational, Coupling,
    Edge, OscillatorNetwork, SignConvention, SimOptions, Trajectory,
};
use crate::error::ConalError;
use crate::sampling::seeded_rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NetworkConfig {
    Explicit {
        omega: Vec<f64>,
        edges: Vec<Edge>,
        #[serde(default)]
        sign: SignConvention,
    },
    /// Undirected ring plus chords with one coupling everywhere.
    Ring {
        n: usize,
        #[serde(default)]
        chords: Vec<(usize, usize)>,
        coupling: Coupling,
        /// Explicit frequencies; drawn uniformly from `omega_range` otherwise.
        #[serde(default)]
        omega: Option<Vec<f64>>,
        #[serde(default)]
        omega_range: Option<[f64; 2]>,
        #[serde(default)]
        sign: SignConvention,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsensusConfig {
    pub network: NetworkConfig,
    /// Initial phases; drawn uniformly from `[-s/2, s/2]` with `s = theta0_spread` otherwise.
    pub theta0: Option<Vec<f64>>,
    pub theta0_spread: f64,
    pub horizon: f64,
    pub dt: f64,
    pub dt_min: f64,
    /// Window of the contraction transition matrix.
    pub tau: f64,
    /// Trailing phase-lock window; 10% of the horizon when absent.
    pub window: Option<f64>,
    pub tol: f64,
    /// Random orthant vectors pushed through the variational flow.
    pub phi_vectors: usize,
    pub seed: u64,
}

impl Default for ConsensusConfig {
    fn default() -> Self {
        Self {
            network: NetworkConfig::Ring {
                n: 2,
                chords: vec![],
                coupling: Coupling::BarrierTan { gain: 1.0 },
                omega: Some(vec![0.1, -0.1]),
                omega_range: None,
                sign: SignConvention::Attractive,
            },
            theta0: None,
            theta0_spread: 1.0,
            horizon: 50.0,
            dt: 1e-2,
            dt_min: 1e-5,
            tau: 1.0,
            window: None,
            tol: 1e-6,
            phi_vectors: 20,
            seed: 0,
        }
    }
}

/// Builds the network and fills every randomly drawn field into the config.
fn resolve(cfg: &mut ConsensusConfig) -> CliResult<(OscillatorNetwork, Vec<Vec<f64>>)> {
    let mut rng = seeded_rng(cfg.seed);
    let net = match &mut cfg.network {
        NetworkConfig::Explicit { omega, edges, sign } => {
            OscillatorNetwork::new(omega.clone(), edges.clone())
                .map_err(usage)?
                .with_sign(*sign)
        }
        NetworkConfig::Ring {
            n,
            chords,
            coupling,
            omega,
            omega_range,
            sign,
        } => {
            if omega.is_none() {
                let [lo, hi] = omega_range.unwrap_or([0.0, 0.0]);
                if !(lo <= hi) {
                    return Err(usage("omega_range must be [low, high]"));
                }
                *omega = Some((0..*n).map(|_| rng.random_range(lo..=hi)).collect());
            }
            let omega = omega.clone().expect("filled above");
            if omega.len() != *n {
                return Err(usage(format!(
                    "omega has {} entries for n = {n}",
                    omega.len()
                )));
            }
            OscillatorNetwork::ring_with_chords(omega, chords, *coupling)
                .map_err(usage)?
                .with_sign(*sign)
        }
    };
    let n = net.agents();
    if cfg.theta0.is_none() {
        let half = 0.5 * cfg.theta0_spread;
        if !(0.0..std::f64::consts::FRAC_PI_2).contains(&half) {
            return Err(usage("theta0_spread must lie in [0, pi)"));
        }
        cfg.theta0 = Some((0..n).map(|_| rng.random_range(-half..=half)).collect());
    }
    if !(cfg.horizon > 0.0) {
        return Err(usage("horizon must be positive"));
    }
    if cfg.window.is_none() {
        cfg.window = Some(0.1 * cfg.horizon);
    }
    let vectors = (0..cfg.phi_vectors)
        .map(|_| (0..n).map(|_| rng.random_range(0.0..1.0) + 1e-3).collect())
        .collect();
    Ok((net, vectors))
}

fn max_edge_gap(net: &OscillatorNetwork, traj: &Trajectory) -> Option<f64> {
    traj.states
        .iter()
        .filter_map(|s| net.max_barrier_gap(s).map(|(g, _)| g))
        .reduce(f64::max)
}

fn diagnostics(
    cfg: &ConsensusConfig,
    net: &OscillatorNetwork,
    traj: &Trajectory,
    vectors: &[Vec<f64>],
) -> CliResult<Value> {
    let window = cfg.window.expect("resolved");
    let lock = phase_lock_detect(traj, window, cfg.tol);
    let flow = variational(net, traj).map_err(runtime)?;
    let contraction = if cfg.tau <= traj.horizon() && !net.edges().is_empty() {
        Some(contraction_report(&flow, cfg.tau).map_err(runtime)?)
    } else {
        None
    };
    let half = flow.psi.len() / 2;
    let mut final_max = 0.0f64;
    let mut trailing_increase = f64::NEG_INFINITY;
    for v in vectors {
        let series = phi_ratio_series(&flow, v).map_err(runtime)?;
        final_max = final_max.max(*series.last().expect("flow is never empty"));
        for w in series[half..].windows(2) {
            trailing_increase = trailing_increase.max(w[1] - w[0]);
        }
    }
    Ok(json!({
        "status": "ok",
        "steps": traj.substeps.len(),
        "refined_steps": traj.substeps.iter().filter(|&&s| s > 1).count(),
        "max_edge_gap": max_edge_gap(net, traj),
        "final_state": traj.final_state(),
        "lock": lock,
        "contraction": contraction,
        "row_sum_defect": flow.row_sum_defect,
        "phi": {
            "vectors": vectors.len(),
            "final_max": final_max,
            "max_trailing_increase": if vectors.is_empty() { None } else { Some(trailing_increase) },
        },
    }))
}

pub(super) fn run(flags: &CommonFlags) -> CliResult<Outcome> {
    let mut cfg: ConsensusConfig = load_config(flags.config.as_deref())?;
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(s) = flags.samples {
        cfg.phi_vectors = s;
    }
    let (net, vectors) = resolve(&mut cfg)?;
    let out_dir = flags.out.clone().unwrap_or_else(|| PathBuf::from("."));
    ensure_dir(&out_dir)?;
    let opts = SimOptions {
        dt: cfg.dt,
        dt_min: cfg.dt_min,
    };
    let theta0 = cfg.theta0.clone().expect("resolved");
    let diag_path = out_dir.join("diagnostics.json");
    match simulate_with(&net, &theta0, cfg.horizon, &opts) {
        Ok(traj) => {
            write_atomic(&out_dir.join("trajectory.csv"), traj.to_csv().as_bytes())?;
            let report = envelope("consensus", &cfg, diagnostics(&cfg, &net, &traj, &vectors)?);
            write_atomic(&diag_path, to_pretty(&report).as_bytes())?;
            Ok(Outcome {
                code: EXIT_OK,
                report,
            })
        }
        Err(ConalError::BarrierBreach {
            time,
            from,
            to,
            gap,
        }) => {
            let report = envelope(
                "consensus",
                &cfg,
                json!({
                    "status": "barrier_breach",
                    "time": time,
                    "edge": [from, to],
                    "gap": gap,
                }),
            );
            write_atomic(&diag_path, to_pretty(&report).as_bytes())?;
            Ok(Outcome {
                code: EXIT_RUNTIME,
                report,
            })
        }
        Err(e) => Err(CliError::from(e)),
    }
}
