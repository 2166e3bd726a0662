//! Runs the compiled binary end to end.

use std::process::{Command, Output};

use noisy_ito::report::config_from_csv;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noisy-ito"))
        .args(args)
        .env_remove("NOISY_ITO_THREADS")
        .output()
        .unwrap()
}

#[test]
fn strong_error_to_csv_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x1.csv");
    let o = run(&[
        "strong-error",
        "--problem",
        "x1",
        "--n",
        "4,16,64",
        "-M",
        "256",
        "-o",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows[0], "n,error,stderr,slope");
    assert_eq!(rows.len(), 4);
    let cfg = config_from_csv(&text).unwrap();
    assert_eq!(cfg.replicates, 256);
    assert_eq!(cfg.n_list, vec![4, 16, 64]);
}

#[test]
fn env_thread_count_keeps_output() {
    let args = [
        "strong-error",
        "--problem",
        "x2",
        "--n",
        "4,8,16",
        "-M",
        "64",
        "--l-ref",
        "10",
    ];
    let base = run(&args);
    let threaded = Command::new(env!("CARGO_BIN_EXE_noisy-ito"))
        .args(args)
        .env("NOISY_ITO_THREADS", "3")
        .output()
        .unwrap();
    assert!(base.status.success() && threaded.status.success());
    assert_eq!(base.stdout, threaded.stdout);
}

#[test]
fn json_output_and_dry_run() {
    let o = run(&[
        "weak-error",
        "--problem",
        "sde",
        "--n",
        "4,8",
        "-M",
        "64",
        "--l-ref",
        "10",
        "--format",
        "json",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["mode"], "weak");

    let o = run(&[
        "noise-sweep",
        "--problem",
        "x1",
        "--n",
        "4,8,16",
        "--pw",
        "xt2",
        "--deltas",
        "0.01,0.1",
        "--dry-run",
    ]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["subcommand"], "noise-sweep");
    assert_eq!(v["regime"]["deltas"], serde_json::json!([0.01, 0.1]));
}

#[test]
fn noise_sweep_floor_emits_one_block_per_delta() {
    let o = run(&[
        "noise-sweep",
        "--problem",
        "x1",
        "--n",
        "4,8,16",
        "-M",
        "64",
        "--pw",
        "xt2",
        "--deltas",
        "0.01,0.1",
    ]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with('#')).count(), 2);
}

#[test]
fn manifest_file() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("run.toml");
    let out = dir.path().join("out.json");
    std::fs::write(
        &manifest,
        format!(
            "subcommand = \"strong-error\"\noutput = {:?}\n[config]\nproblem = {{ kind = \"x3\", strike = 8.0 }}\nn_list = [4, 8, 16]\nM = 32\nl_ref = 10\n",
            out.to_str().unwrap()
        ),
    )
    .unwrap();
    let o = run(&["run", manifest.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["config"]["problem"]["strike"], 8.0);
}

#[test]
fn error_exit_codes() {
    assert_eq!(
        run(&["strong-error", "--problem", "x1", "--n", "16,4"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&["strong-error", "--problem", "nope"]).status.code(),
        Some(2)
    );
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        run(&[
            "noise-sweep",
            "--problem",
            "x1",
            "--pw",
            "sqrt-abs",
            "--regime",
            "floor"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(
        run(&["strong-error", "--problem", "x3", "--n", "4,1000000"])
            .status
            .code(),
        Some(3)
    );
    let o = run(&[
        "strong-error",
        "--problem",
        "x1",
        "-o",
        "/definitely/missing/out.csv",
    ]);
    assert_eq!(o.status.code(), Some(4));
    assert!(!o.stderr.is_empty());
    assert_eq!(
        run(&["run", "/definitely/missing.toml"]).status.code(),
        Some(4)
    );
}
