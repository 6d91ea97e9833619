//! Horizon and integrator-step sweep over a scenario.

use crate::sim::{run_scenario, ScenarioConfig, SimError};
use nmpcm_core::metrics::SolveTimeStats;
use nmpcm_core::{metrics, Nmpc, QuadModel};
use std::fmt::Write as _;

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub horizon: usize,
    pub substeps: usize,
    /// Median and 99th percentile of prepare + feedback [µs].
    pub median_us: f64,
    pub p99_us: f64,
    pub workspace_bytes: usize,
    pub settled: bool,
    /// Set when the run failed; the timing columns are then NaN.
    pub error: Option<String>,
}

/// Controller workspace for a configuration, from capacities alone.
pub fn workspace_bytes(cfg: &ScenarioConfig) -> Result<usize, String> {
    Nmpc::new(QuadModel::new(cfg.params), cfg.ocp)
        .map(|n| n.footprint_bytes())
        .map_err(|e| e.to_string())
}

pub fn run_cell(base: &ScenarioConfig, horizon: usize, substeps: usize) -> SweepCell {
    let mut cfg = base.clone();
    cfg.ocp.horizon = horizon;
    cfg.ocp.substeps = substeps;
    let mut cell = SweepCell {
        horizon,
        substeps,
        median_us: f64::NAN,
        p99_us: f64::NAN,
        workspace_bytes: 0,
        settled: false,
        error: None,
    };
    match workspace_bytes(&cfg) {
        Ok(b) => cell.workspace_bytes = b,
        Err(e) => {
            cell.error = Some(e);
            return cell;
        }
    }
    match run_scenario(&cfg) {
        Ok(trace) => {
            let stats = SolveTimeStats::from_samples(&trace.cycle_times_us());
            cell.median_us = stats.median;
            cell.p99_us = stats.p99;
            cell.settled = metrics::compute(&trace, &cfg.target).is_ok_and(|m| m.settled());
        }
        Err(SimError::SafetyAbort {
            tick,
            reason,
            trace,
        }) => {
            let stats = SolveTimeStats::from_samples(&trace.cycle_times_us());
            cell.median_us = stats.median;
            cell.p99_us = stats.p99;
            cell.error = Some(format!("safety abort at tick {tick}: {reason}"));
        }
        Err(e) => cell.error = Some(e.to_string()),
    }
    cell
}

/// Worker count: `NMPCM_THREADS` when set to a positive integer, otherwise
/// the available parallelism.
pub fn thread_limit() -> usize {
    std::env::var("NMPCM_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

/// Runs every `(horizon, substeps)` pair, horizon-major, on at most
/// `threads` workers. The result order does not depend on scheduling.
pub fn sweep(
    base: &ScenarioConfig,
    horizons: &[usize],
    substeps: &[usize],
    threads: usize,
) -> Vec<SweepCell> {
    let pairs: Vec<(usize, usize)> = horizons
        .iter()
        .flat_map(|&n| substeps.iter().map(move |&s| (n, s)))
        .collect();
    let threads = threads.clamp(1, pairs.len().max(1));
    let mut cells: Vec<Option<SweepCell>> = vec![None; pairs.len()];
    let next = std::sync::atomic::AtomicUsize::new(0);
    let results = std::sync::Mutex::new(&mut cells);
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                let Some(&(n, sub)) = pairs.get(i) else { break };
                let cell = run_cell(base, n, sub);
                results
                    .lock()
                    .expect("no worker panics while holding the lock")[i] = Some(cell);
            });
        }
    });
    cells
        .into_iter()
        .map(|c| c.expect("every cell ran"))
        .collect()
}

pub fn format_sweep_csv(cells: &[SweepCell]) -> String {
    let mut s = String::from(crate::io::SWEEP_HEADER);
    s.push('\n');
    for c in cells {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            c.horizon, c.substeps, c.median_us, c.p99_us, c.workspace_bytes, c.settled
        );
    }
    s
}
