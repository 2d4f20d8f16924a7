use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qubo_abr::compute_qoe;
use qubo_abr_cli::{run_cells, ExperimentConfig, TraceSpec, POLICY_NAMES};

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_qubo-abr"));
    cmd.env_remove("QUBO_ABR_CONFIG").env("RUST_LOG", "error");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn sample_trace(dir: &Path, name: &str, kbps: f64) -> PathBuf {
    let text: String = (0..80)
        .map(|t| format!("{t} {}\n", kbps * (1.0 + 0.5 * ((t as f64) / 7.0).sin())))
        .collect();
    write(dir, name, &text)
}

#[test]
fn compare_emits_one_sorted_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let a = sample_trace(dir.path(), "b_trace.txt", 2000.0);
    let b = sample_trace(dir.path(), "a_trace.txt", 900.0);
    let out = run(bin()
        .arg("compare")
        .args(["--policy", "rate", "--policy", "bba", "--policy", "mpc"])
        .arg("--trace")
        .arg(&a)
        .arg("--trace")
        .arg(&b));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "trace,policy,qoe,quality_sum,rebuf_s,switch_sum,mean_level,solve_ms");
    let keys: Vec<(String, String)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            assert_eq!(f.len(), 8);
            assert_eq!(f[7], "");
            (f[0].to_string(), f[1].to_string())
        })
        .collect();
    assert_eq!(keys.len(), 6);
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    assert_eq!(keys[0], ("a_trace".into(), "bba".into()));
}

#[test]
fn unknown_policy_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let t = sample_trace(dir.path(), "t.txt", 1000.0);
    let out = run(bin().arg("compare").args(["--policy", "pensieve", "--trace"]).arg(&t));
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in POLICY_NAMES {
        assert!(err.contains(name), "{err}");
    }
}

#[test]
fn malformed_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.json", r#"{"segment_duraton": 4}"#);
    let t = sample_trace(dir.path(), "t.txt", 1000.0);
    let out = run(bin().arg("--config").arg(&cfg).arg("simulate").arg("--trace").arg(&t));
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn trace_errors_exit_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.txt", "1 1000\n0 2000\n");
    let out = run(bin().arg("simulate").arg("--trace").arg(&bad));
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));

    let raw = write(dir.path(), "bad.log", "1 0 0 0 xyz 1000\n");
    let out = run(bin().arg("convert-trace").arg(&raw));
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn oversized_oracle_exits_with_code_4() {
    let dir = tempfile::tempdir().unwrap();
    let t = sample_trace(dir.path(), "t.txt", 1000.0);
    let out = run(bin().arg("oracle").arg("--trace").arg(&t).args(["--segments", "12"]));
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn oracle_reports_plan_and_qoe() {
    let dir = tempfile::tempdir().unwrap();
    let t = sample_trace(dir.path(), "t.txt", 1500.0);
    let out = run(bin().arg("oracle").arg("--trace").arg(&t).args(["--segments", "5"]));
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["plan"].as_array().unwrap().len(), 5);
    assert_eq!(v["plan"][0], 0);
    assert!(v["qoe"]["total"].is_number());
}

#[test]
fn config_file_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let t = sample_trace(dir.path(), "t.txt", 1000.0);
    let cfg = write(
        dir.path(),
        "c.json",
        &format!(r#"{{"traces": [{:?}], "policies": ["bba"], "segments": 10}}"#, t.display().to_string()),
    );
    let out = run(bin().env("QUBO_ABR_CONFIG", &cfg).arg("compare"));
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("t,bba,"));
}

#[test]
fn flags_override_config_values() {
    let dir = tempfile::tempdir().unwrap();
    let t = sample_trace(dir.path(), "t.txt", 1000.0);
    let cfg = write(dir.path(), "c.json", r#"{"segments": 10}"#);
    let out = run(bin()
        .arg("--config")
        .arg(&cfg)
        .arg("simulate")
        .args(["--policy", "rate", "--segments", "7", "--trace"])
        .arg(&t));
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["log"]["events"].as_array().unwrap().len(), 7);
}

#[test]
fn compare_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let t = sample_trace(dir.path(), "t.txt", 1200.0);
    let once = |name: &str| {
        let out = dir.path().join(name);
        let status = bin()
            .arg("compare")
            .args(["--seed", "5", "--segments", "15", "--format", "json", "-o"])
            .arg(&out)
            .arg("--trace")
            .arg(&t)
            .status()
            .unwrap();
        assert!(status.success());
        fs::read(out).unwrap()
    };
    assert_eq!(once("a.json"), once("b.json"));
}

#[test]
fn report_matches_recomputation_from_logs() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = ExperimentConfig::default();
    config.traces = vec![
        TraceSpec::Path(sample_trace(dir.path(), "x.txt", 800.0)),
        TraceSpec::Path(sample_trace(dir.path(), "y.txt", 2500.0)),
    ];
    config.policies = POLICY_NAMES.map(String::from).to_vec();
    config.segments = Some(12);
    let ladder = config.ladder.build().unwrap();
    for cell in run_cells(&config).unwrap() {
        let r = compute_qoe(&cell.log, config.rebuffer_weight, &ladder);
        assert_eq!(cell.row.qoe, r.total);
        assert_eq!(cell.row.quality_sum, r.quality_sum);
        assert_eq!(cell.row.rebuf_s, r.rebuffer_seconds);
        assert_eq!(cell.row.switch_sum, r.switch_sum);
        let levels = cell.log.levels();
        assert_eq!(cell.row.mean_level, levels.iter().sum::<usize>() as f64 / levels.len() as f64);
        assert_eq!(cell.row.policy, cell.log.policy);
    }
}

#[test]
fn solve_and_convert_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.qubo", "nvars 3\noffset 1\n0 0 -1\n1 1 -1\n0 1 3\n2 2 0.5\n");
    let out = run(bin().arg("solve").arg(&model).args(["--solver", "exhaustive"]));
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["energy"], 0.0);
    // 010 and 100 tie; the lexicographically smaller wins
    assert_eq!(v["assignment"], "010");

    let raw = write(dir.path(), "r.log", "1 0 0 0 125000 1000\n2 1000 0 0 250000 1000\n");
    let out = run(bin().arg("convert-trace").arg(&raw));
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), "0 1000\n1 2000\n");
}
