//! The JSON result document written by `segment` and `eval`.

use serde::{Deserialize, Serialize};
use trajseg::config::RunConfig;
use trajseg::gibbs::ChainResult;

/// One mode's sampled dynamics, row-major.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeDynamics {
    pub mode: usize,
    pub a: Vec<Vec<f64>>,
    pub sigma: Vec<Vec<f64>>,
}

/// Per-chain summary.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChainReport {
    pub seed: u64,
    pub best_log_joint: f64,
    pub best_sweep: usize,
    pub num_modes_used: usize,
    pub switch_points: Vec<usize>,
    pub z_best: Vec<usize>,
    pub log_joint_trace: Vec<f64>,
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Timings {
    pub read_input_s: f64,
    pub inference_s: f64,
    pub total_s: f64,
}

/// Everything a segmentation run produces, self-describing via the embedded
/// configuration echo.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ResultDocument {
    pub config_echo: RunConfig,
    pub best_chain: usize,
    pub z_best: Vec<usize>,
    pub switch_points: Vec<usize>,
    pub num_modes_used: usize,
    pub dynamics_best: Vec<ModeDynamics>,
    pub log_joint_trace: Vec<f64>,
    pub hamming_vs_truth: Option<f64>,
    pub chains: Vec<ChainReport>,
    pub timings: Timings,
}

/// Indices `t ≥ 1` where the label changes.
pub fn switch_points(z: &[usize]) -> Vec<usize> {
    (1..z.len()).filter(|&t| z[t] != z[t - 1]).collect()
}

pub fn distinct_count(z: &[usize]) -> usize {
    let mut labels = z.to_vec();
    labels.sort_unstable();
    labels.dedup();
    labels.len()
}

pub fn chain_report(seed: u64, result: &ChainResult<f64>, burn_in: usize) -> ChainReport {
    let trace: Vec<f64> = result
        .log_joint_trace
        .iter()
        .skip(burn_in)
        .copied()
        .collect();
    ChainReport {
        seed,
        best_log_joint: result.best_log_joint,
        best_sweep: result.best_sweep,
        num_modes_used: distinct_count(&result.best.z),
        switch_points: switch_points(&result.best.z),
        z_best: result.best.z.clone(),
        log_joint_trace: trace,
    }
}

pub fn dynamics_report(result: &ChainResult<f64>) -> Vec<ModeDynamics> {
    let mut used = result.best.z.clone();
    used.sort_unstable();
    used.dedup();
    used.into_iter()
        .map(|mode| {
            let dp = &result.best.dynamics[mode];
            let d = dp.dim();
            ModeDynamics {
                mode,
                a: (0..d)
                    .map(|i| (0..d).map(|j| dp.a[(i, j)]).collect())
                    .collect(),
                sigma: (0..d)
                    .map(|i| (0..d).map(|j| dp.sigma.matrix()[(i, j)]).collect())
                    .collect(),
            }
        })
        .collect()
}
