//! Run directories and the files written into them.

use nmpcm_core::{ControlInput, MetricsReport, PwmCommand, QuadState, SimTrace, TraceRecord};
use std::fmt::Write as _;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

pub const TRACE_HEADER: &str = "t,p,q,r,phi,theta,psi,dp,dq,dr,dphi,dtheta,dpsi,u1,u2,u3,u4,pwm1,pwm2,pwm3,pwm4,ur1,ur2,ur3,ur4,qp_iters,prep_us,fb_us,fallback";
/// Columns holding wall-clock measurements.
pub const TIMING_COLUMNS: [&str; 2] = ["prep_us", "fb_us"];
pub const SWEEP_HEADER: &str = "n,substeps,median_us,p99_us,workspace_bytes,settled";
const SUMMARY_HEADER: &str = "run_dir,scenario,controller,settled,settling_time_5pct,overshoot_pct,ise,itse,iae,itae,median_us,p99_us,fallback_ticks";

/// 17 significant digits, enough to round-trip any `f64`.
fn num(out: &mut String, v: f64) {
    let _ = write!(out, "{v:.16e}");
}

/// Creates `<root>/<stem>-<timestamp>`, adding a numeric suffix when the
/// directory already exists. Never reuses a directory.
pub fn create_run_dir(root: &Path, stem: &str) -> io::Result<PathBuf> {
    fs::create_dir_all(root)?;
    let stamp = chrono::Local::now().format("%Y%m%dT%H%M%S%3f");
    let base = format!("{stem}-{stamp}");
    for k in 0.. {
        let name = if k == 0 {
            base.clone()
        } else {
            format!("{base}-{k}")
        };
        let dir = root.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(e),
        }
    }
    unreachable!()
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub scenario: String,
    pub tool_version: String,
    pub timestamp: String,
}

impl RunManifest {
    pub fn new(config_path: &Path, output_dir: &Path, scenario: &str) -> Self {
        RunManifest {
            config_path: config_path.to_path_buf(),
            output_dir: output_dir.to_path_buf(),
            scenario: scenario.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Local::now().to_rfc3339(),
        }
    }

    pub fn write(&self, dir: &Path) -> io::Result<()> {
        let text = format!(
            "config_path={}\noutput_dir={}\nscenario={}\ntool_version={}\ntimestamp={}\n",
            self.config_path.display(),
            self.output_dir.display(),
            self.scenario,
            self.tool_version,
            self.timestamp
        );
        fs::write(dir.join("manifest.txt"), text)
    }
}

pub fn write_trace_csv(path: &Path, trace: &SimTrace) -> io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{TRACE_HEADER}")?;
    let mut line = String::with_capacity(700);
    for r in &trace.records {
        line.clear();
        num(&mut line, r.t);
        for v in r
            .state
            .0
            .iter()
            .chain(&r.control.0)
            .chain(&r.pwm.0)
            .chain(&r.u_ref.0)
        {
            line.push(',');
            num(&mut line, *v);
        }
        let _ = write!(line, ",{},", r.qp_iterations);
        num(&mut line, r.prepare_us);
        line.push(',');
        num(&mut line, r.feedback_us);
        let _ = write!(line, ",{}", u8::from(r.fallback));
        writeln!(w, "{line}")?;
    }
    w.flush()
}

fn bad(msg: String) -> io::Error {
    io::Error::new(io::ErrorKind::InvalidData, msg)
}

/// Reads a trace written by [`write_trace_csv`]. `dt` is taken from the first
/// two rows (zero for a single row).
pub fn read_trace_csv(path: &Path) -> io::Result<SimTrace> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header != TRACE_HEADER {
        return Err(bad(format!("unexpected header {header:?}")));
    }
    let mut trace = SimTrace::default();
    for (k, line) in lines.enumerate() {
        let line = line?;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 29 {
            return Err(bad(format!("row {k}: expected 29 fields, got {}", f.len())));
        }
        let p = |i: usize| {
            f[i].parse::<f64>()
                .map_err(|e| bad(format!("row {k} column {i}: {e}")))
        };
        let mut rec = TraceRecord {
            t: p(0)?,
            ..TraceRecord::default()
        };
        let mut state = [0.0; 12];
        for (i, s) in state.iter_mut().enumerate() {
            *s = p(1 + i)?;
        }
        rec.state = QuadState(state);
        rec.control = ControlInput([p(13)?, p(14)?, p(15)?, p(16)?]);
        rec.pwm = PwmCommand([p(17)?, p(18)?, p(19)?, p(20)?]);
        rec.u_ref = ControlInput([p(21)?, p(22)?, p(23)?, p(24)?]);
        rec.qp_iterations = f[25]
            .parse()
            .map_err(|e| bad(format!("row {k} qp_iters: {e}")))?;
        rec.prepare_us = p(26)?;
        rec.feedback_us = p(27)?;
        rec.fallback = f[28] == "1";
        trace.records.push(rec);
    }
    if trace.records.len() > 1 {
        trace.dt = trace.records[1].t - trace.records[0].t;
    }
    Ok(trace)
}

/// Flat `key=value` rendering of a report.
pub fn format_metrics(m: &MetricsReport, fallback_ticks: usize) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("ise", m.ise.to_string());
    kv("itse", m.itse.to_string());
    kv("iae", m.iae.to_string());
    kv("itae", m.itae.to_string());
    for (axis, e) in ["p", "q", "r"].iter().zip(&m.per_axis) {
        kv(&format!("ise_{axis}"), e.ise.to_string());
        kv(&format!("itse_{axis}"), e.itse.to_string());
        kv(&format!("iae_{axis}"), e.iae.to_string());
        kv(&format!("itae_{axis}"), e.itae.to_string());
    }
    kv("settled", m.settled().to_string());
    kv(
        "settling_time_5pct",
        m.settling_time_5pct
            .map_or_else(|| "not_settled".to_string(), |t| t.to_string()),
    );
    kv("overshoot_pct", m.overshoot_pct.to_string());
    for (i, u) in m.u_max.iter().enumerate() {
        kv(&format!("u{}_max", i + 1), u.to_string());
    }
    kv("solve_median_us", m.solve_time_us.median.to_string());
    kv("solve_p95_us", m.solve_time_us.p95.to_string());
    kv("solve_p99_us", m.solve_time_us.p99.to_string());
    kv("solve_max_us", m.solve_time_us.max.to_string());
    kv("duration", m.duration.to_string());
    kv("fallback_ticks", fallback_ticks.to_string());
    s
}

/// Appends one row to `<root>/summary.csv`, writing the header first when the
/// file is new.
pub fn append_summary(
    root: &Path,
    run_dir: &Path,
    scenario: &str,
    controller: &str,
    m: &MetricsReport,
    fallback_ticks: usize,
) -> io::Result<()> {
    let path = root.join("summary.csv");
    let mut f = OpenOptions::new().create(true).append(true).open(&path)?;
    if f.metadata()?.len() == 0 {
        writeln!(f, "{SUMMARY_HEADER}")?;
    }
    let dir = run_dir
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    writeln!(
        f,
        "{dir},{scenario},{controller},{},{},{},{},{},{},{},{},{},{fallback_ticks}",
        m.settled(),
        m.settling_time_5pct
            .map_or_else(|| "nan".to_string(), |t| t.to_string()),
        m.overshoot_pct,
        m.ise,
        m.itse,
        m.iae,
        m.itae,
        m.solve_time_us.median,
        m.solve_time_us.p99,
    )
}

/// Parses `key=value` lines.
pub fn parse_key_values(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}
