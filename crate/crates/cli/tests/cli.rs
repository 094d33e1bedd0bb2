//! End-to-end tests of the `nlx` binary: subcommand contracts, exit codes,
//! determinism, the bundled scenario pack's golden checksums, and the
//! external-predictor adapter.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sha2::{Digest, Sha256};

fn nlx() -> Command {
    Command::new(env!("CARGO_BIN_EXE_nlx"))
}

fn run(args: &[&str]) -> Output {
    nlx().args(args).output().expect("spawn nlx")
}

fn assert_code(out: &Output, code: i32) {
    assert_eq!(
        out.status.code(),
        Some(code),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn sha256_file(path: &Path) -> String {
    let bytes = std::fs::read(path).expect("read file");
    hex::encode(Sha256::digest(bytes))
}

fn repo_scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

/// Small sensing profile so exploration tests finish quickly.
const FAST: &[&str] = &[
    "--set",
    "sensor.n_primary=120",
    "--set",
    "sensor.m_secondary=61",
    "--set",
    "sensor.max_range=1.6",
    "--set",
    "sensor.n_bins=64",
    "--set",
    "explore.min_frontier_size=2",
];

#[test]
fn gen_golden_checksums() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        (
            vec!["--kind", "L_deadend", "--corridor-width", "6", "--seed", "0"],
            "deadend.pgm",
            "9ca61d620693a100ecddf9b049aa9c437e1441d1a4482a43f2a3aa970d3d2f61",
        ),
        (
            vec!["--kind", "rooms", "--n-rooms", "4", "--seed", "7"],
            "rooms.pgm",
            "e0e767a05126c6507e8cf65551c45be0250dd96938039f59ea3fb2149a92a43e",
        ),
        (
            vec![
                "--kind", "maze", "--width", "45", "--height", "36", "--seed", "3",
            ],
            "maze.pgm",
            "8b65b0e2e13d46e86c0ffbbda5559075e39889e50d5be9d3eb972d5e30c74daa",
        ),
    ];
    for (args, name, want) in cases {
        let out_path = dir.path().join(name);
        let mut full = vec!["gen"];
        full.extend(args.iter().copied());
        full.extend(["--out", out_path.to_str().unwrap()]);
        let out = run(&full);
        assert_code(&out, 0);
        assert_eq!(sha256_file(&out_path), want, "checksum drifted for {name}");
        // Same seed twice -> identical file.
        let repeat = dir.path().join(format!("repeat_{name}"));
        let mut again = full.clone();
        let n = again.len();
        again[n - 1] = repeat.to_str().unwrap();
        assert_code(&run(&again), 0);
        assert_eq!(sha256_file(&repeat), want);
    }
}

#[test]
fn gen_rejects_bad_kind() {
    let out = run(&["gen", "--kind", "spiral", "--out", "/tmp/na.pgm"]);
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("spiral"));
}

#[test]
fn explore_runs_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let config = repo_scenarios().join("deadend.toml");
    let csvs: Vec<Vec<u8>> = (0..2)
        .map(|i| {
            let out_dir = dir.path().join(format!("run{i}"));
            let mut args = vec![
                "explore",
                "--config",
                config.to_str().unwrap(),
                "--set",
                "explore.steps=40",
                "--out",
                out_dir.to_str().unwrap(),
            ];
            args.extend_from_slice(FAST);
            let out = run(&args);
            assert_code(&out, 0);
            let csv = out_dir.join("trace_nlos_00.csv");
            let text = std::fs::read(&csv).expect("trace CSV written");
            // Row count bounded by the step budget plus the initial record.
            let rows = text.iter().filter(|&&b| b == b'\n').count();
            assert!(rows >= 2 && rows <= 42, "unexpected row count {rows}");
            text
        })
        .collect();
    assert_eq!(csvs[0], csvs[1], "same config produced different traces");
}

#[test]
fn explore_missing_map_file_names_the_field() {
    let out = run(&["explore", "--set", "map.path=/no/such/map.pgm"]);
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("map.path"));
}

#[test]
fn unknown_config_key_is_rejected() {
    let out = run(&["explore", "--set", "explore.velocity=3"]);
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("velocity"));
}

#[test]
fn help_enumerates_every_config_key() {
    let out = run(&["--help"]);
    assert_code(&out, 0);
    let text = String::from_utf8_lossy(&out.stdout);
    for key in [
        "map.path",
        "map.kind",
        "map.width",
        "map.height",
        "map.corridor_width",
        "map.n_rooms",
        "map.seed",
        "sensor.n_primary",
        "sensor.m_secondary",
        "sensor.max_range",
        "sensor.pulse_energy",
        "sensor.wavelength",
        "sensor.efficiency",
        "sensor.reflectance",
        "sensor.bin_width",
        "sensor.n_bins",
        "sensor.record_secondary",
        "explore.mode",
        "explore.steps",
        "explore.gap",
        "explore.filter_percentile",
        "explore.radii",
        "explore.min_frontier_size",
        "explore.lambda",
        "explore.replan_interval",
        "explore.snapshot_interval",
        "explore.start",
        "predictor.kind",
        "predictor.command",
        "predictor.k",
        "predictor.timeout_s",
        "output.dir",
    ] {
        assert!(text.contains(key), "--help does not document {key}");
    }
}

#[test]
fn scan_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("scan");
    let mut args = vec![
        "scan",
        "--set",
        "map.kind=rooms",
        "--set",
        "map.seed=7",
        "--out",
        out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(FAST);
    let out = run(&args);
    assert_code(&out, 0);
    for name in [
        "scan.txt",
        "backprojection.bpf",
        "backprojection.png",
        "carved.pgm",
        "carved.png",
    ] {
        assert!(out_dir.join(name).exists(), "missing artifact {name}");
    }
}

#[test]
fn scan_rejects_blocked_pose() {
    let out = run(&["scan", "--pose", "0,0"]);
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("Free"));
}

#[test]
fn eval_aggregates_both_modes() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().join("runs");
    for mode in ["los", "nlos"] {
        let mut args = vec![
            "explore",
            "--set",
            "map.kind=rooms",
            "--set",
            "map.seed=7",
            "--set",
            "explore.steps=30",
            "--out",
            out_dir.to_str().unwrap(),
        ];
        let set_mode = format!("explore.mode={mode}");
        args.extend_from_slice(&["--set", &set_mode]);
        args.extend_from_slice(FAST);
        assert_code(&run(&args), 0);
    }
    let summary = dir.path().join("summary.csv");
    let out = run(&[
        "eval",
        "--traces",
        out_dir.to_str().unwrap(),
        "--t-max",
        "30",
        "--out",
        summary.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let text = std::fs::read_to_string(&summary).unwrap();
    assert!(text.starts_with("mode,metric,bucket,mean,std,n"));
    assert!(text.contains("\nlos,coverage_auc,"));
    assert!(text.contains("\nnlos,coverage_auc,"));
}

#[test]
fn eval_rejects_empty_dir() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["eval", "--traces", dir.path().to_str().unwrap()]);
    assert_code(&out, 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("no trace CSVs"));
}

#[test]
fn render_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let pgm = dir.path().join("map.pgm");
    assert_code(
        &run(&["gen", "--kind", "maze", "--out", pgm.to_str().unwrap()]),
        0,
    );
    let png = dir.path().join("map.png");
    assert_code(
        &run(&[
            "render",
            "--grid",
            pgm.to_str().unwrap(),
            "--kind",
            "ground_truth",
            "--out",
            png.to_str().unwrap(),
        ]),
        0,
    );
    assert!(png.exists());
}

/// Identity predictor: copies the belief, filling unknown cells with Free —
/// the external-adapter equivalent of the builtin radius-0 member.
fn write_echo_predictor(dir: &Path) -> PathBuf {
    let script = dir.join("echo_predictor.py");
    std::fs::write(
        &script,
        r#"#!/usr/bin/env python3
import sys, pathlib

d = pathlib.Path(sys.argv[1])
data = (d / "belief.pgm").read_bytes()
# P5 header: magic, dims, maxval, then one byte per cell.
parts = data.split(b"\n", 3)
header, payload = b"\n".join(parts[:3]) + b"\n", parts[3]
out = bytes(255 if 100 <= b <= 200 else b for b in payload)
(d / "pred_000.pgm").write_bytes(header + out)
"#,
    )
    .unwrap();
    let mut perm = std::fs::metadata(&script).unwrap().permissions();
    use std::os::unix::fs::PermissionsExt;
    perm.set_mode(0o755);
    std::fs::set_permissions(&script, perm).unwrap();
    script
}

#[test]
fn external_predictor_runs() {
    let dir = tempfile::tempdir().unwrap();
    let script = write_echo_predictor(dir.path());
    let out_dir = dir.path().join("run");
    let cmd_set = format!("predictor.command={}", script.display());
    let mut args = vec![
        "explore",
        "--set",
        "map.kind=rooms",
        "--set",
        "map.seed=7",
        "--set",
        "explore.steps=10",
        "--set",
        "predictor.kind=external",
        "--set",
        &cmd_set,
        "--set",
        "predictor.k=1",
        "--out",
        out_dir.to_str().unwrap(),
    ];
    args.extend_from_slice(FAST);
    let out = run(&args);
    assert_code(&out, 0);
    assert!(out_dir.join("trace_nlos_00.csv").exists());
}

#[test]
fn external_predictor_failure_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let script = dir.path().join("broken.sh");
    std::fs::write(&script, "#!/bin/sh\nexit 1\n").unwrap();
    use std::os::unix::fs::PermissionsExt;
    let mut perm = std::fs::metadata(&script).unwrap().permissions();
    perm.set_mode(0o755);
    std::fs::set_permissions(&script, perm).unwrap();

    let cmd_set = format!("predictor.command={}", script.display());
    let mut args = vec![
        "explore",
        "--set",
        "map.kind=rooms",
        "--set",
        "explore.steps=5",
        "--set",
        "predictor.kind=external",
        "--set",
        &cmd_set,
    ];
    args.extend_from_slice(FAST);
    let out = run(&args);
    assert_code(&out, 2);
}

#[test]
fn bundled_scenario_configs_parse() {
    for name in ["deadend.toml", "rooms.toml", "maze.toml"] {
        let config = repo_scenarios().join(name);
        assert!(config.exists(), "missing bundled scenario {name}");
        // steps=1 keeps this a pure config-validation smoke test.
        let dir = tempfile::tempdir().unwrap();
        let out = run(&[
            "explore",
            "--config",
            config.to_str().unwrap(),
            "--set",
            "explore.steps=1",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_code(&out, 0);
    }
}
