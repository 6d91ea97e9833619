//! Command-line verbs.
//!
//! Exit codes: 0 success, 1 configuration or I/O error, 2 safety abort,
//! 3 QP oracle mismatch.

use crate::io::{self, RunManifest};
use crate::sim::{run_scenario, SimError};
use crate::{config, oracle, sweep};
use clap::{Parser, Subcommand};
use nmpcm_core::metrics;
use std::path::{Path, PathBuf};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_ABORT: u8 = 2;
pub const EXIT_MISMATCH: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "nmpcm",
    version,
    about = "Quadrotor RTI-NMPC simulator and benchmarks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario and write trace.csv, metrics.txt and manifest.txt.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
    },
    /// Run the scenario for every horizon and substep pair; write sweep.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        n_list: Vec<usize>,
        #[arg(long, value_delimiter = ',', required = true)]
        substep_list: Vec<usize>,
    },
    /// Compare the QP solver with the enumeration oracle on random problems.
    BenchQp {
        #[arg(long, default_value_t = 500)]
        count: usize,
        /// Largest number of variables.
        #[arg(long, default_value_t = 12)]
        n: usize,
        /// Largest number of general constraint rows.
        #[arg(long, default_value_t = 8)]
        m: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

pub fn execute(cli: &Cli) -> u8 {
    match &cli.command {
        Command::Run { config, out } => cmd_run(config, out).code,
        Command::Sweep {
            config,
            out,
            n_list,
            substep_list,
        } => cmd_sweep(config, out, n_list, substep_list).code,
        Command::BenchQp { count, n, m, seed } => cmd_bench_qp(*count, *n, *m, *seed),
    }
}

/// Exit code and, once created, the run directory.
#[derive(Debug)]
pub struct Outcome {
    pub code: u8,
    pub run_dir: Option<PathBuf>,
}

fn stem(path: &Path) -> String {
    path.file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("scenario")
        .to_string()
}

fn fail(code: u8, run_dir: Option<PathBuf>, msg: impl std::fmt::Display) -> Outcome {
    eprintln!("error: {msg}");
    Outcome { code, run_dir }
}

/// Creates the run directory and writes the manifest before anything else.
fn start_run(config: &Path, out: &Path) -> Result<PathBuf, Outcome> {
    let name = stem(config);
    let dir = io::create_run_dir(out, &name).map_err(|e| {
        fail(
            EXIT_CONFIG,
            None,
            format!("cannot create run directory: {e}"),
        )
    })?;
    RunManifest::new(config, &dir, &name)
        .write(&dir)
        .map_err(|e| {
            fail(
                EXIT_CONFIG,
                Some(dir.clone()),
                format!("cannot write manifest: {e}"),
            )
        })?;
    Ok(dir)
}

pub fn cmd_run(config: &Path, out: &Path) -> Outcome {
    let dir = match start_run(config, out) {
        Ok(d) => d,
        Err(o) => return o,
    };
    let cfg = match config::load(config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, Some(dir), e),
    };
    let (trace, abort) = match run_scenario(&cfg) {
        Ok(t) => (t, None),
        Err(SimError::SafetyAbort {
            tick,
            reason,
            trace,
        }) => (
            *trace,
            Some(format!("safety abort at tick {tick}: {reason}")),
        ),
        Err(e) => return fail(EXIT_CONFIG, Some(dir), e),
    };
    if let Err(e) = io::write_trace_csv(&dir.join("trace.csv"), &trace) {
        return fail(EXIT_CONFIG, Some(dir), format!("cannot write trace: {e}"));
    }
    if let Some(msg) = abort {
        return fail(EXIT_ABORT, Some(dir), msg);
    }
    let report = match metrics::compute(&trace, &cfg.target) {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, Some(dir), e),
    };
    let fallbacks = trace.records.iter().filter(|r| r.fallback).count();
    let written = std::fs::write(
        dir.join("metrics.txt"),
        io::format_metrics(&report, fallbacks),
    )
    .and_then(|()| {
        io::append_summary(
            out,
            &dir,
            &cfg.name,
            &cfg.controller.to_string(),
            &report,
            fallbacks,
        )
    });
    if let Err(e) = written {
        return fail(EXIT_CONFIG, Some(dir), format!("cannot write metrics: {e}"));
    }
    println!(
        "{}: {} ticks, settling {}, overshoot {:.2}%, ITAE {:.4}, median cycle {:.1} us -> {}",
        cfg.name,
        trace.len(),
        report
            .settling_time_5pct
            .map_or_else(|| "not settled".to_string(), |t| format!("{t:.3} s")),
        report.overshoot_pct,
        report.itae,
        report.solve_time_us.median,
        dir.display()
    );
    Outcome {
        code: EXIT_OK,
        run_dir: Some(dir),
    }
}

pub fn cmd_sweep(config: &Path, out: &Path, n_list: &[usize], substep_list: &[usize]) -> Outcome {
    if n_list.is_empty() || substep_list.is_empty() {
        return fail(
            EXIT_CONFIG,
            None,
            "--n-list and --substep-list must be nonempty",
        );
    }
    let dir = match start_run(config, out) {
        Ok(d) => d,
        Err(o) => return o,
    };
    let cfg = match config::load(config) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, Some(dir), e),
    };
    let cells = sweep::sweep(&cfg, n_list, substep_list, sweep::thread_limit());
    for c in &cells {
        if let Some(e) = &c.error {
            eprintln!("cell n={} substeps={}: {e}", c.horizon, c.substeps);
        }
    }
    if let Err(e) = std::fs::write(dir.join("sweep.csv"), sweep::format_sweep_csv(&cells)) {
        return fail(
            EXIT_CONFIG,
            Some(dir),
            format!("cannot write sweep.csv: {e}"),
        );
    }
    print!("{}", sweep::format_sweep_csv(&cells));
    Outcome {
        code: EXIT_OK,
        run_dir: Some(dir),
    }
}

pub fn cmd_bench_qp(count: usize, n: usize, m: usize, seed: u64) -> u8 {
    if n == 0 && count > 0 {
        eprintln!("error: --n must be >= 1");
        return EXIT_CONFIG;
    }
    let r = oracle::bench(count, n, m, seed);
    println!("passed {}/{}", r.passed, r.count);
    println!("max_x_error={:e}", r.max_x_error);
    println!("max_kkt_residual={:e}", r.max_stationarity);
    println!("max_iterations={}", r.max_iterations);
    if r.all_passed() {
        EXIT_OK
    } else {
        EXIT_MISMATCH
    }
}
