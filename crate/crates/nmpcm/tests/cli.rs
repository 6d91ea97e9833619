use nmpcm::io::{parse_key_values, read_trace_csv, write_trace_csv, TRACE_HEADER};
use nmpcm::sim::{run_scenario, ScenarioConfig};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nmpcm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nmpcm"))
        .args(args)
        .output()
        .unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
        .display()
        .to_string()
}

fn run_dirs(out: &Path) -> Vec<PathBuf> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    dirs
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

#[test]
fn hover_run_writes_a_full_trace() {
    let out = tempfile::tempdir().unwrap();
    let o = nmpcm(&[
        "run",
        "--config",
        &config("hover.cfg"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let dirs = run_dirs(out.path());
    assert_eq!(dirs.len(), 1);
    let run = &dirs[0];
    assert!(run
        .file_name()
        .unwrap()
        .to_str()
        .unwrap()
        .starts_with("hover-"));
    let text = fs::read_to_string(run.join("trace.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(TRACE_HEADER));
    assert_eq!(lines.count(), 1000);
    let manifest = parse_key_values(&fs::read_to_string(run.join("manifest.txt")).unwrap());
    let keys: Vec<&str> = manifest.iter().map(|(k, _)| k.as_str()).collect();
    assert_eq!(
        keys,
        [
            "config_path",
            "output_dir",
            "scenario",
            "tool_version",
            "timestamp"
        ]
    );
    let summary = fs::read_to_string(out.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
}

#[test]
fn step_run_reports_metrics() {
    let out = tempfile::tempdir().unwrap();
    let o = nmpcm(&[
        "run",
        "--config",
        &config("paper_step.cfg"),
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let run = &run_dirs(out.path())[0];
    let kv = parse_key_values(&fs::read_to_string(run.join("metrics.txt")).unwrap());
    let get = |k: &str| {
        kv.iter()
            .find(|(key, _)| key == k)
            .map(|(_, v)| v.clone())
            .unwrap_or_else(|| panic!("missing {k}"))
    };
    for k in [
        "ise",
        "itse",
        "iae",
        "itae",
        "settling_time_5pct",
        "overshoot_pct",
        "u1_max",
        "u2_max",
        "u3_max",
        "u4_max",
        "solve_median_us",
        "solve_p99_us",
        "fallback_ticks",
    ] {
        get(k);
    }
    assert_eq!(get("settled"), "true");
    assert!(get("settling_time_5pct").parse::<f64>().unwrap() <= 12.0);
    assert!(get("u1_max").parse::<f64>().unwrap() <= 25.0);
}

#[test]
fn malformed_config_leaves_only_the_manifest() {
    let out = tempfile::tempdir().unwrap();
    let cfg_dir = tempfile::tempdir().unwrap();
    let path = write_config(cfg_dir.path(), "typo.cfg", "[ocp]\nw_sate = [1.0]\n");
    let o = nmpcm(&[
        "run",
        "--config",
        &path,
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("w_sate"));
    let run = &run_dirs(out.path())[0];
    let files: Vec<String> = fs::read_dir(run)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    assert_eq!(files, ["manifest.txt"]);

    let missing = nmpcm(&[
        "run",
        "--config",
        "/nonexistent/x.cfg",
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn safety_abort_exits_with_two_and_keeps_the_trace() {
    let out = tempfile::tempdir().unwrap();
    let cfg_dir = tempfile::tempdir().unwrap();
    let text = "[scenario]\ncontroller = \"cascaded_pid\"\n\n[pid]\natt_kp = [3.0, 3.0, 1.5]\natt_kd = [0.4, 0.4, 0.3]\npos_kp = [2.0, 2.0, 4.0]\npos_kd = [1.5, 1.5, 2.5]\n";
    let path = write_config(cfg_dir.path(), "aggressive.cfg", text);
    let o = nmpcm(&[
        "run",
        "--config",
        &path,
        "--out",
        out.path().to_str().unwrap(),
    ]);
    assert_eq!(
        o.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let run = &run_dirs(out.path())[0];
    let trace = read_trace_csv(&run.join("trace.csv")).unwrap();
    assert!(!trace.is_empty() && trace.len() < 2000);
    assert!(!run.join("metrics.txt").exists());
}

#[test]
fn single_cell_sweep() {
    let out = tempfile::tempdir().unwrap();
    let cfg_dir = tempfile::tempdir().unwrap();
    let path = write_config(cfg_dir.path(), "short.cfg", "[scenario]\nduration = 2.0\n");
    let o = nmpcm(&[
        "sweep",
        "--config",
        &path,
        "--out",
        out.path().to_str().unwrap(),
        "--n-list",
        "10",
        "--substep-list",
        "5",
    ]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let run = &run_dirs(out.path())[0];
    let csv = fs::read_to_string(run.join("sweep.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], nmpcm::io::SWEEP_HEADER);
    assert!(lines[1].starts_with("10,5,"));
}

#[test]
fn bench_qp_verb() {
    let o = nmpcm(&["bench-qp", "--count", "0"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("passed 0/0"));
    let a = nmpcm(&["bench-qp", "--count", "20", "--seed", "11"]);
    let b = nmpcm(&["bench-qp", "--count", "20", "--seed", "11"]);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    assert!(String::from_utf8_lossy(&a.stdout).contains("passed 20/20"));
}

#[test]
fn reruns_never_overwrite() {
    let out = tempfile::tempdir().unwrap();
    let cfg_dir = tempfile::tempdir().unwrap();
    let path = write_config(cfg_dir.path(), "tiny.cfg", "[scenario]\nduration = 0.2\n");
    for _ in 0..3 {
        let o = nmpcm(&[
            "run",
            "--config",
            &path,
            "--out",
            out.path().to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    assert_eq!(run_dirs(out.path()).len(), 3);
    let summary = fs::read_to_string(out.path().join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn trace_csv_round_trips() {
    let mut cfg = ScenarioConfig::paper_step();
    cfg.duration = 3.0;
    cfg.sensor_noise_std = 1e-3;
    let trace = run_scenario(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace_csv(&path, &trace).unwrap();
    let back = read_trace_csv(&path).unwrap();
    assert_eq!(back.records, trace.records);
}

/// Trace text with the timing columns dropped.
fn untimed_csv(path: &Path) -> String {
    let text = fs::read_to_string(path).unwrap();
    let header: Vec<&str> = TRACE_HEADER.split(',').collect();
    let skip: Vec<usize> = nmpcm::io::TIMING_COLUMNS
        .iter()
        .map(|c| header.iter().position(|h| h == c).unwrap())
        .collect();
    text.lines()
        .map(|l| {
            l.split(',')
                .enumerate()
                .filter(|(i, _)| !skip.contains(i))
                .map(|(_, f)| f)
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn identical_runs_give_identical_traces() {
    let out = tempfile::tempdir().unwrap();
    for _ in 0..2 {
        let o = nmpcm(&[
            "run",
            "--config",
            &config("paper_step.cfg"),
            "--out",
            out.path().to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0));
    }
    let dirs = run_dirs(out.path());
    assert_eq!(dirs.len(), 2);
    assert_eq!(
        untimed_csv(&dirs[0].join("trace.csv")),
        untimed_csv(&dirs[1].join("trace.csv"))
    );
}
