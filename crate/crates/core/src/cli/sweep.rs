use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{
    ensure_dir, envelope, load_config, runtime, to_pretty, usage, write_atomic, CliResult,
    CommonFlags, Outcome, EXIT_OK,
};
use crate::cone::{ConeKind, ConeSpec};
use crate::diffpos::{counterexample_search, monotone_scan, MapSpec, Violation};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub r_grid: Vec<f64>,
    /// Quadratic cone parameters used for every `n`.
    pub mu_grid: Vec<f64>,
    /// Quadratic cones with `μ = n − d` for each `d` listed.
    pub mu_below_n: Vec<f64>,
    pub n_list: Vec<usize>,
    pub include_loewner: bool,
    pub pairs: usize,
    pub seed: u64,
    pub threshold: f64,
    /// Extra boundary-biased samples tried for `r > 1` when the scan is clean.
    pub search_budget: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            r_grid: (1..=10).map(|k| k as f64 / 10.0).collect(),
            mu_grid: vec![0.5, 1.0, 1.5],
            mu_below_n: vec![],
            n_list: vec![2],
            include_loewner: true,
            pairs: 500,
            seed: 0,
            threshold: 1e-9,
            search_budget: 10_000,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepCell {
    pub cone: String,
    pub n: usize,
    pub mu: Option<f64>,
    pub r: f64,
    pub pairs: usize,
    pub violations: usize,
    pub min_margin: f64,
    /// An ordered pair whose images are not ordered, if one was found.
    pub witness: Option<Violation>,
}

fn cones(cfg: &SweepConfig) -> (Vec<ConeSpec>, Vec<String>) {
    let mut specs = Vec::new();
    let mut skipped = Vec::new();
    for &n in &cfg.n_list {
        if cfg.include_loewner {
            specs.push(ConeSpec::loewner(n));
        }
        let mus = cfg
            .mu_grid
            .iter()
            .copied()
            .chain(cfg.mu_below_n.iter().map(|d| n as f64 - d));
        let mut seen: Vec<f64> = Vec::new();
        for mu in mus {
            if seen.contains(&mu) {
                continue;
            }
            seen.push(mu);
            match ConeSpec::quadratic(n, mu) {
                Ok(spec) => specs.push(spec),
                Err(e) => skipped.push(format!("n={n} mu={mu}: {e}")),
            }
        }
    }
    (specs, skipped)
}

fn run_cell(cfg: &SweepConfig, spec: &ConeSpec, r: f64) -> CliResult<SweepCell> {
    let scan = monotone_scan(&MapSpec::Power(r), spec, cfg.pairs, cfg.seed, cfg.threshold)
        .map_err(runtime)?;
    let mut witness = scan.violations.first().cloned();
    if witness.is_none() && r > 1.0 && spec.dim() > 1 && cfg.search_budget > 0 {
        witness = counterexample_search(r, spec, cfg.search_budget, cfg.seed).map_err(runtime)?;
    }
    let (cone, mu) = match spec.kind() {
        ConeKind::Quadratic { mu } => ("quad".to_string(), Some(*mu)),
        _ => ("loewner".to_string(), None),
    };
    Ok(SweepCell {
        cone,
        n: spec.dim(),
        mu,
        r,
        pairs: cfg.pairs,
        violations: scan.violations.len(),
        min_margin: scan.min_margin,
        witness,
    })
}

pub(crate) fn table_csv(cells: &[SweepCell]) -> String {
    let mut out = String::from("cone,n,mu,r,violations,min_margin\n");
    for c in cells {
        let mu = c.mu.map(|m| m.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{:.16e}",
            c.cone, c.n, mu, c.r, c.violations, c.min_margin
        );
    }
    out
}

pub(super) fn run(flags: &CommonFlags) -> CliResult<Outcome> {
    let mut cfg: SweepConfig = load_config(flags.config.as_deref())?;
    if let Some(s) = flags.seed {
        cfg.seed = s;
    }
    if let Some(s) = flags.samples {
        cfg.pairs = s;
    }
    if cfg.pairs == 0 {
        return Err(usage("pairs must be positive"));
    }
    if let Some(r) = cfg.r_grid.iter().find(|r| !(**r > 0.0)) {
        return Err(usage(format!("r-grid entries must be positive, got {r}")));
    }
    let (specs, skipped) = cones(&cfg);
    let jobs: Vec<(&ConeSpec, f64)> = specs
        .iter()
        .flat_map(|s| cfg.r_grid.iter().map(move |&r| (s, r)))
        .collect();

    let out_dir = flags.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let cell_dir = out_dir.join("cells");
    ensure_dir(&cell_dir)?;
    let cells: Vec<SweepCell> = jobs
        .par_iter()
        .enumerate()
        .map(|(k, (spec, r))| {
            let cell = run_cell(&cfg, spec, *r)?;
            let text = serde_json::to_string_pretty(&cell).expect("plain data");
            write_atomic(&cell_dir.join(format!("cell_{k:04}.json")), text.as_bytes())?;
            Ok(cell)
        })
        .collect::<CliResult<_>>()?;

    let csv = table_csv(&cells);
    write_atomic(&out_dir.join("table.csv"), csv.as_bytes())?;
    let total: usize = cells.iter().map(|c| c.violations).sum();
    let report = envelope(
        "loewner-heinz",
        &cfg,
        json!({
            "cells": cells,
            "skipped": skipped,
            "total_violations": total,
        }),
    );
    write_atomic(&out_dir.join("report.json"), to_pretty(&report).as_bytes())?;
    Ok(Outcome {
        code: EXIT_OK,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_expansion_skips_invalid_mu() {
        let cfg = SweepConfig {
            mu_grid: vec![0.5, 2.5],
            mu_below_n: vec![0.5],
            n_list: vec![2, 3],
            ..SweepConfig::default()
        };
        let (specs, skipped) = cones(&cfg);
        // n=2: loewner, 0.5, 1.5 ; n=3: loewner, 0.5, 2.5 (listed once)
        assert_eq!(specs.len(), 6);
        assert_eq!(skipped.len(), 1);
    }

    #[test]
    fn empty_table_has_header_only() {
        assert_eq!(table_csv(&[]), "cone,n,mu,r,violations,min_margin\n");
    }
}
